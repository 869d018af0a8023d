//! Two-component PCA of original frames, applied to original and restored frames alike.

use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::{DMatrix, SymmetricEigen};

use segcond_core::io::{load_corpus, write_atomic, Corpus};
use segcond_core::Error;

pub struct Projection {
    pub mean: Vec<f64>,
    /// Two unit-length principal axes, largest variance first.
    pub axes: [Vec<f64>; 2],
}

impl Projection {
    /// Fits on every frame of `corpus`. Each axis is signed so that its largest
    /// component is positive, which keeps the output reproducible.
    pub fn fit(corpus: &Corpus) -> Result<Self> {
        let d = corpus.feature_dim();
        let n = corpus.total_frames();
        if n < 2 || d < 2 {
            return Err(Error::Config("projection needs at least two frames and two feature dimensions".into()).into());
        }
        let mut mean = vec![0.0f64; d];
        for v in &corpus.videos {
            for row in v.features.iter_rows() {
                mean.iter_mut().zip(row).for_each(|(m, x)| *m += *x as f64);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for v in &corpus.videos {
            for row in v.features.iter_rows() {
                let c: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| *x as f64 - m).collect();
                for i in 0..d {
                    for j in i..d {
                        cov[(i, j)] += c[i] * c[j];
                    }
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                cov[(i, j)] = cov[(j, i)];
            }
        }
        cov /= (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let axis = |k: usize| {
            let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        };
        Ok(Self {
            mean,
            axes: [axis(0), axis(1)],
        })
    }

    pub fn apply(&self, row: &[f32]) -> (f64, f64) {
        let dot = |axis: &[f64]| -> f64 {
            row.iter().zip(&self.mean).zip(axis).map(|((x, m), a)| (*x as f64 - m) * a).sum()
        };
        (dot(&self.axes[0]), dot(&self.axes[1]))
    }
}

fn write_rows(w: &mut csv::Writer<Vec<u8>>, source: &str, corpus: &Corpus, p: &Projection) -> Result<()> {
    for v in &corpus.videos {
        let labels = v.frame_labels();
        for (t, row) in v.features.iter_rows().enumerate() {
            let (x, y) = p.apply(row);
            let label = corpus.vocabulary.name(labels[t]).unwrap_or("?");
            w.write_record([source, &v.id, &t.to_string(), label, &format!("{x:.6}"), &format!("{y:.6}")])?;
        }
    }
    Ok(())
}

pub fn project(original: &Path, decoded: &Path, out: &Path) -> Result<()> {
    let orig = load_corpus(original).with_context(|| format!("loading corpus {}", original.display()))?;
    let dec = load_corpus(decoded).with_context(|| format!("loading corpus {}", decoded.display()))?;
    if orig.feature_dim() != dec.feature_dim() {
        return Err(Error::Shape(format!(
            "original has D={}, decoded has D={}",
            orig.feature_dim(),
            dec.feature_dim()
        ))
        .into());
    }
    let p = Projection::fit(&orig)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "video", "frame", "label", "pc1", "pc2"])?;
    write_rows(&mut w, "original", &orig, &p)?;
    write_rows(&mut w, "decoded", &dec, &p)?;
    let bytes = w.into_inner().context("flushing csv")?;
    write_atomic(out, &bytes)?;
    println!(
        "{} original + {} decoded frames -> {}",
        orig.total_frames(),
        dec.total_frames(),
        out.display()
    );
    Ok(())
}
