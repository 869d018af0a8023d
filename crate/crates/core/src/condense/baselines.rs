//! Per-segment payloads for the storage-matched comparators.

use super::instances::split_instances;
use crate::error::Result;
use crate::tca::{coherence, TcaModel};
use crate::tensor::{Matrix, SeededRng};

/// Mean feature of the segment, `1 x D`.
pub fn mean_segment(features: &Matrix) -> Matrix {
    let means: Vec<f32> = features.column_means().into_iter().map(|v| v as f32).collect();
    Matrix::from_vec(1, features.cols(), means).expect("means of finite values are finite")
}

/// The real frame nearest the segment mean in Euclidean distance, `1 x D`;
/// the earliest frame wins ties.
pub fn coreset_segment(features: &Matrix) -> Matrix {
    let mean = features.column_means();
    let mut best = (0, f64::INFINITY);
    for (i, row) in features.iter_rows().enumerate() {
        let d: f64 = row.iter().zip(&mean).map(|(x, m)| (*x as f64 - m).powi(2)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    features.slice_rows(best.0, 1)
}

/// Per-instance means of the encoder's posterior means, `K' x d`.
pub fn encoded_segment(model: &TcaModel, features: &Matrix, action: usize, k: usize) -> Result<Matrix> {
    let len = features.rows();
    let c = coherence(len)?;
    let (mu, _) = model.encode_rows(features, &vec![action; len], &c)?;
    let lengths = split_instances(len, k)?;
    let d = mu.cols();
    let mut out = Matrix::zeros(lengths.len(), d);
    let mut t = 0;
    for (q, &n) in lengths.iter().enumerate() {
        let block = mu.slice_rows(t, n).column_means();
        for (j, v) in block.into_iter().enumerate() {
            out.set(q, j, v as f32);
        }
        t += n;
    }
    Ok(out)
}

/// The prior draw used for segment `index` of `video_id`; regenerated at decode
/// time, so nothing but the seed is stored.
pub fn random_latent_code(seed: u64, video_id: &str, index: usize, latent_dim: usize) -> Matrix {
    SeededRng::new(seed)
        .split(&format!("random-latent/{video_id}"))
        .split_index("segment", index as u64)
        .gaussian_draw(1, latent_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tca::TcaDims;

    #[test]
    fn single_frame_is_stored_exactly() {
        let f = Matrix::from_rows(&[vec![0.3, -1.25, 7.0]]).unwrap();
        assert_eq!(mean_segment(&f), f);
        assert_eq!(coreset_segment(&f), f);
    }

    #[test]
    fn constant_segment_mean_equals_coreset() {
        let f = Matrix::filled(5, 4, 0.5);
        assert_eq!(mean_segment(&f), coreset_segment(&f));
    }

    #[test]
    fn coreset_picks_closest_real_frame_lowest_index() {
        let f = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        // mean 1.5: frames 1 and 2 tie
        assert_eq!(coreset_segment(&f).data(), &[1.0]);
        let f = Matrix::from_rows(&[vec![0.0], vec![10.0], vec![4.0]]).unwrap();
        assert_eq!(coreset_segment(&f).data(), &[4.0]);
    }

    #[test]
    fn encoded_shapes() {
        let dims = TcaDims {
            feature_dim: 3,
            num_actions: 2,
            latent_dim: 2,
        };
        let model = TcaModel::init(dims, 8, &SeededRng::new(1));
        let f = SeededRng::new(2).gaussian_draw(7, 3);
        assert_eq!(encoded_segment(&model, &f, 1, 3).unwrap().shape(), (3, 2));
        let per_frame = encoded_segment(&model, &f, 1, 7).unwrap();
        let (mu, _) = model.encode_rows(&f, &[1; 7], &coherence(7).unwrap()).unwrap();
        assert_eq!(per_frame, mu);
        let single = f.slice_rows(0, 1);
        let (mu1, _) = model.encode_rows(&single, &[1], &[0.0]).unwrap();
        assert_eq!(encoded_segment(&model, &single, 1, 8).unwrap(), mu1);
    }

    #[test]
    fn random_codes_depend_on_identity() {
        let a = random_latent_code(0, "v1", 0, 4);
        assert_eq!(a, random_latent_code(0, "v1", 0, 4));
        assert_ne!(a, random_latent_code(0, "v1", 1, 4));
        assert_ne!(a, random_latent_code(0, "v2", 0, 4));
        assert_ne!(a, random_latent_code(1, "v1", 0, 4));
    }
}
