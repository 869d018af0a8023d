use rayon::prelude::*;

use super::baselines::{coreset_segment, encoded_segment, mean_segment, random_latent_code};
use super::instances::{inflate_codes, split_instances};
use super::inversion::{inversion_loss, invert_segment, invert_segment_from, InitPolicy, Instances};
use super::{CondenseConfig, CondensedDataset, CondensedSegment, CondensedVideo, Manifest, Method};
use crate::error::{Error, Result};
use crate::io::{framewise_from_segments, storage::original_bytes, Corpus, StorageReport, VideoRecord};
use crate::sampler::Selection;
use crate::tca::{coherence, Decoder, TcaModel};
use crate::tensor::{Matrix, SeededRng};

/// Restores a segment stored as latent codes: `ℓ` rows, row `i` decoded from
/// the code of the instance containing frame `i` at coherence `c_i`.
pub fn decode_segment(decoder: &Decoder, segment: &CondensedSegment) -> Result<Matrix> {
    let lengths = split_instances(segment.length, segment.codes.rows())?;
    if lengths.len() != segment.codes.rows() {
        return Err(Error::Shape(format!(
            "{} codes for a segment of {} frames",
            segment.codes.rows(),
            segment.length
        )));
    }
    let inflated = inflate_codes(&segment.codes, &lengths)?;
    decoder.decode_rows(&inflated, segment.action, &coherence(segment.length)?)
}

fn repeat_row(row: &Matrix, length: usize) -> Result<Matrix> {
    inflate_codes(row, &[length])
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum();
    sum / a.data().len() as f64
}

fn decode_one(dataset: &CondensedDataset, video_id: &str, index: usize, segment: &CondensedSegment) -> Result<Matrix> {
    let m = &dataset.manifest;
    match m.method {
        Method::Mean | Method::Coreset => repeat_row(&segment.codes, segment.length),
        Method::Random => {
            let decoder = dataset.decoder.as_ref().ok_or_else(|| Error::Archive("missing decoder".into()))?;
            let code = random_latent_code(m.config.inversion.seed, video_id, index, decoder.dims.latent_dim);
            let stand_in = CondensedSegment {
                codes: code,
                ..segment.clone()
            };
            decode_segment(decoder, &stand_in)
        }
        _ => {
            let decoder = dataset.decoder.as_ref().ok_or_else(|| Error::Archive("missing decoder".into()))?;
            decode_segment(decoder, segment)
        }
    }
}

/// Restores one video: `T = Σℓ` feature rows and their frame labels.
pub fn decode_video(dataset: &CondensedDataset, video: &CondensedVideo) -> Result<(Matrix, Vec<usize>)> {
    let parts = video
        .segments
        .iter()
        .enumerate()
        .map(|(n, s)| decode_one(dataset, &video.id, n, s))
        .collect::<Result<Vec<_>>>()?;
    let labels = framewise_from_segments(&video.layout())?;
    Ok((Matrix::vstack(&parts)?, labels))
}

/// Restores every stored video as a training corpus.
pub fn decode_dataset(dataset: &CondensedDataset) -> Result<Corpus> {
    dataset.validate()?;
    let videos = dataset
        .videos
        .par_iter()
        .map(|v| {
            let (features, _) = decode_video(dataset, v)?;
            VideoRecord::new(v.id.clone(), features, v.layout())
        })
        .collect::<Result<Vec<_>>>()?;
    let provenance = serde_json::json!({
        "decoded_from": dataset.manifest.method.name(),
        "source": dataset.manifest.provenance,
    });
    Corpus::new(dataset.manifest.vocabulary.clone(), videos, provenance)
}

fn segment_rng(seed: u64, video_id: &str, index: usize) -> SeededRng {
    SeededRng::new(seed)
        .split(&format!("invert/{video_id}"))
        .split_index("segment", index as u64)
}

fn condense_segment(
    video: &VideoRecord,
    index: usize,
    model: Option<&TcaModel>,
    config: &CondenseConfig,
) -> Result<CondensedSegment> {
    let target = video.segment_features(index);
    let action = video.segments[index].action;
    let length = target.rows();
    let need_model = || {
        model.ok_or_else(|| Error::Config(format!("method {} needs a generative model", config.method.name())))
    };
    let inv = &config.inversion;
    match config.method {
        Method::Inverted => {
            let model = need_model()?;
            let decoder = &model.decoder;
            let result = match inv.init {
                InitPolicy::PriorSample => {
                    invert_segment(decoder, &target, action, inv, &mut segment_rng(config.inversion.seed, &video.id, index))
                }
                InitPolicy::EncodedWarmStart => {
                    let k = inv.instances.for_length(length);
                    let init = encoded_segment(model, &target, action, k)?;
                    invert_segment_from(decoder, &target, action, init, inv)
                }
            };
            result.map_err(|e| match e {
                Error::Inversion {
                    context,
                    iteration,
                    message,
                } => Error::Inversion {
                    context: format!("video {} segment {index} ({context})", video.id),
                    iteration,
                    message,
                },
                other => other,
            })
        }
        Method::Encoded | Method::EncodedPerFrame => {
            let model = need_model()?;
            let k = match config.method {
                Method::EncodedPerFrame => Instances::PerFrame,
                _ => inv.instances,
            }
            .for_length(length);
            let codes = encoded_segment(model, &target, action, k)?;
            let loss = inversion_loss(&model.decoder, &target, action, &codes)?;
            Ok(CondensedSegment {
                action,
                length,
                codes,
                loss,
            })
        }
        Method::Mean | Method::Coreset => {
            let codes = match config.method {
                Method::Mean => mean_segment(&target),
                _ => coreset_segment(&target),
            };
            let loss = mse(&repeat_row(&codes, length)?, &target);
            Ok(CondensedSegment {
                action,
                length,
                codes,
                loss,
            })
        }
        Method::Random => {
            let decoder = &need_model()?.decoder;
            let probe = CondensedSegment {
                action,
                length,
                codes: random_latent_code(config.inversion.seed, &video.id, index, decoder.dims.latent_dim),
                loss: 0.0,
            };
            let loss = mse(&decode_segment(decoder, &probe)?, &target);
            Ok(CondensedSegment {
                codes: Matrix::zeros(0, decoder.dims.latent_dim),
                loss,
                ..probe
            })
        }
    }
}

/// Condenses every segment of every selected video.
///
/// Segments are processed in parallel, each with its own random stream derived
/// from `(seed, video id, segment index)`; results are assembled in selection
/// order, so the output does not depend on the thread count.
pub fn condense_corpus(
    corpus: &Corpus,
    model: Option<&TcaModel>,
    selection: &Selection,
    config: &CondenseConfig,
) -> Result<CondensedDataset> {
    config.inversion.validate()?;
    if selection.indices.is_empty() {
        return Err(Error::Config("selection is empty; nothing to condense".into()));
    }
    if let Some(&bad) = selection.indices.iter().find(|&&i| i >= corpus.videos.len()) {
        return Err(Error::Config(format!("selected index {bad} outside corpus of {}", corpus.videos.len())));
    }
    if let Some(m) = model {
        let dims = m.dims();
        if dims.feature_dim != corpus.feature_dim() || dims.num_actions != corpus.num_actions() {
            return Err(Error::Shape(format!(
                "model expects D={} A={}, corpus has D={} A={}",
                dims.feature_dim,
                dims.num_actions,
                corpus.feature_dim(),
                corpus.num_actions()
            )));
        }
    }
    let jobs: Vec<(usize, usize)> = selection
        .indices
        .iter()
        .flat_map(|&vi| (0..corpus.videos[vi].segments.len()).map(move |n| (vi, n)))
        .collect();
    let results: Vec<CondensedSegment> = jobs
        .par_iter()
        .map(|&(vi, n)| condense_segment(&corpus.videos[vi], n, model, config))
        .collect::<Result<Vec<_>>>()?;

    let mut it = results.into_iter();
    let videos: Vec<CondensedVideo> = selection
        .indices
        .iter()
        .map(|&vi| {
            let v = &corpus.videos[vi];
            CondensedVideo {
                id: v.id.clone(),
                segments: it.by_ref().take(v.segments.len()).collect(),
            }
        })
        .collect();

    let decoder = if config.method.needs_decoder() {
        model.map(|m| m.decoder.clone())
    } else {
        None
    };
    let code_dim = if config.method.stores_features() {
        corpus.feature_dim()
    } else {
        model.map_or(0, |m| m.dims().latent_dim)
    };
    let storage = StorageReport::compute(original_bytes(corpus), corpus.videos.len(), &videos, decoder.as_ref());
    let dataset = CondensedDataset {
        manifest: Manifest {
            method: config.method,
            vocabulary: corpus.vocabulary.clone(),
            feature_dim: corpus.feature_dim(),
            code_dim,
            single_frame_coherence: coherence(1)?[0],
            config: config.clone(),
            selection: selection.clone(),
            storage,
            provenance: corpus.provenance.clone(),
        },
        decoder,
        videos,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{segments_from_lengths, ActionVocabulary};
    use crate::tca::TcaDims;

    fn toy_corpus() -> Corpus {
        let vocab = ActionVocabulary::new(vec!["a".into(), "b".into()]).unwrap();
        let mut rng = SeededRng::new(5);
        let v1 = VideoRecord::new("v1", rng.gaussian_draw(5, 3), segments_from_lengths([(0, 3), (1, 2)])).unwrap();
        let v2 = VideoRecord::new("v2", rng.gaussian_draw(4, 3), segments_from_lengths([(1, 1), (0, 3)])).unwrap();
        Corpus::new(vocab, vec![v1, v2], serde_json::Value::Null).unwrap()
    }

    fn toy_model() -> TcaModel {
        let dims = TcaDims {
            feature_dim: 3,
            num_actions: 2,
            latent_dim: 2,
        };
        TcaModel::init(dims, 6, &SeededRng::new(9))
    }

    fn config(method: Method) -> CondenseConfig {
        let mut c = CondenseConfig {
            method,
            ..Default::default()
        };
        c.inversion.iterations = 20;
        c.inversion.instances = Instances::Fixed(2);
        c
    }

    #[test]
    fn every_method_restores_full_length() {
        let corpus = toy_corpus();
        let model = toy_model();
        let sel = Selection::all(&corpus);
        for method in Method::ALL {
            let ds = condense_corpus(&corpus, Some(&model), &sel, &config(method)).unwrap();
            let decoded = decode_dataset(&ds).unwrap();
            for (orig, dec) in corpus.videos.iter().zip(&decoded.videos) {
                assert_eq!(orig.num_frames(), dec.num_frames(), "{method:?}");
                assert_eq!(orig.frame_labels(), dec.frame_labels());
            }
        }
    }

    #[test]
    fn mean_storage_is_one_feature_vector_per_segment() {
        let corpus = toy_corpus();
        let ds = condense_corpus(&corpus, None, &Selection::all(&corpus), &config(Method::Mean)).unwrap();
        assert_eq!(ds.manifest.storage.latent_bytes, 4 * 3 * 4);
        assert!(ds.decoder.is_none());
        let dec = decode_dataset(&ds).unwrap();
        let seg = dec.videos[0].segment_features(0);
        assert!(seg.iter_rows().all(|r| r == seg.row(0)));
    }

    #[test]
    fn latent_bytes_follow_clamped_k() {
        let corpus = toy_corpus();
        let model = toy_model();
        let ds = condense_corpus(&corpus, Some(&model), &Selection::all(&corpus), &config(Method::Inverted)).unwrap();
        // lengths 3, 2, 1, 3 with K = 2
        assert_eq!(ds.manifest.storage.latent_bytes, (2 + 2 + 1 + 2) * 2 * 4);
    }

    #[test]
    fn decoded_segment_rows_vary_only_through_coherence() {
        let model = toy_model();
        let seg = CondensedSegment {
            action: 1,
            length: 4,
            codes: Matrix::from_rows(&[vec![0.5, -0.5]]).unwrap(),
            loss: 0.0,
        };
        let out = decode_segment(&model.decoder, &seg).unwrap();
        let c = coherence(4).unwrap();
        for i in 0..4 {
            assert_eq!(out.row(i), model.decode(&[0.5, -0.5], 1, c[i]).unwrap().as_slice());
        }
    }

    #[test]
    fn empty_selection_and_missing_model_rejected() {
        let corpus = toy_corpus();
        let mut sel = Selection::all(&corpus);
        sel.indices.clear();
        assert!(condense_corpus(&corpus, Some(&toy_model()), &sel, &config(Method::Inverted)).is_err());
        let sel = Selection::all(&corpus);
        assert!(matches!(
            condense_corpus(&corpus, None, &sel, &config(Method::Encoded)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let corpus = toy_corpus();
        let model = toy_model();
        let sel = Selection::all(&corpus);
        let a = condense_corpus(&corpus, Some(&model), &sel, &config(Method::Inverted)).unwrap();
        let b = condense_corpus(&corpus, Some(&model), &sel, &config(Method::Inverted)).unwrap();
        assert_eq!(a, b);
    }
}
