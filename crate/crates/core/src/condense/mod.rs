//! Segment-level condensation: inversion, instance splitting, dataset
//! assembly, decoding and storage-matched baselines.

mod assemble;
mod baselines;
mod instances;
mod inversion;

use serde::{Deserialize, Serialize};

pub use assemble::{condense_corpus, decode_dataset, decode_segment, decode_video};
pub use baselines::{coreset_segment, encoded_segment, mean_segment, random_latent_code};
pub use instances::{condensation_factor, inflate_codes, split_instances};
pub use inversion::{inversion_loss, invert_segment, invert_segment_from, InitPolicy, Instances, InversionConfig};

use crate::error::{Error, Result};
use crate::io::{segments_from_lengths, ActionVocabulary, Segment, StorageReport};
use crate::sampler::Selection;
use crate::tca::Decoder;
use crate::tensor::Matrix;

/// How the per-segment payload is produced and decoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Codes optimized against the frozen decoder.
    Inverted,
    /// Per-instance mean of encoder posterior means.
    Encoded,
    /// One encoder posterior mean per frame.
    #[serde(rename = "encoded-perframe")]
    EncodedPerFrame,
    /// Segment mean feature, repeated at decode time.
    Mean,
    /// Real frame closest to the segment mean, repeated at decode time.
    Coreset,
    /// One prior draw per segment; nothing stored but the seed.
    Random,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Inverted,
        Method::Encoded,
        Method::EncodedPerFrame,
        Method::Mean,
        Method::Coreset,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Inverted => "inverted",
            Method::Encoded => "encoded",
            Method::EncodedPerFrame => "encoded-perframe",
            Method::Mean => "mean",
            Method::Coreset => "coreset",
            Method::Random => "random",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Whether decoding runs the generative decoder.
    pub fn needs_decoder(self) -> bool {
        !matches!(self, Method::Mean | Method::Coreset)
    }

    /// Whether stored codes live in feature space rather than latent space.
    pub fn stores_features(self) -> bool {
        matches!(self, Method::Mean | Method::Coreset)
    }
}

/// One segment's condensed payload.
///
/// `codes` has `K` rows of width `d` (latent methods) or one row of width `D`
/// (feature methods); the random baseline stores zero rows. `loss` is the mean
/// squared reconstruction error of the decoded segment against the source.
#[derive(Clone, Debug, PartialEq)]
pub struct CondensedSegment {
    pub action: usize,
    pub length: usize,
    pub codes: Matrix,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CondensedVideo {
    pub id: String,
    pub segments: Vec<CondensedSegment>,
}

impl CondensedVideo {
    pub fn num_frames(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// The stored symbolic sequence with lengths, as contiguous segments.
    pub fn layout(&self) -> Vec<Segment> {
        segments_from_lengths(self.segments.iter().map(|s| (s.action, s.length)))
    }
}

/// Settings that produced a condensed dataset; echoed into its manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CondenseConfig {
    pub method: Method,
    /// Used by the inverted method; `instances` also sets `K` for `encoded`
    /// and `seed` roots every per-segment random stream.
    pub inversion: InversionConfig,
}

impl Default for CondenseConfig {
    fn default() -> Self {
        Self {
            method: Method::Inverted,
            inversion: InversionConfig::default(),
        }
    }
}

/// Self-describing metadata stored alongside the condensed payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: Method,
    pub vocabulary: ActionVocabulary,
    pub feature_dim: usize,
    /// Width of each stored code.
    pub code_dim: usize,
    /// Coherence assigned to the only frame of a length-1 segment.
    pub single_frame_coherence: f32,
    pub config: CondenseConfig,
    pub selection: Selection,
    pub storage: StorageReport,
    /// Provenance of the source corpus and generative model.
    pub provenance: serde_json::Value,
}

/// Everything needed to restore the selected videos at full resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct CondensedDataset {
    pub manifest: Manifest,
    pub decoder: Option<Decoder>,
    pub videos: Vec<CondensedVideo>,
}

impl CondensedDataset {
    /// Checks that the payload agrees with the manifest and can be decoded.
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        if self.videos.is_empty() {
            return Err(Error::Archive("condensed dataset holds no videos".into()));
        }
        match (&self.decoder, m.method.needs_decoder()) {
            (None, true) => {
                return Err(Error::Archive(format!(
                    "method {} needs a decoder snapshot but none is present",
                    m.method.name()
                )))
            }
            (Some(dec), _) => {
                if dec.dims.feature_dim != m.feature_dim || dec.dims.num_actions != m.vocabulary.len() {
                    return Err(Error::Archive("decoder dimensions disagree with manifest".into()));
                }
                if m.method.needs_decoder() && dec.dims.latent_dim != m.code_dim {
                    return Err(Error::Archive("decoder latent dim disagrees with code width".into()));
                }
            }
            (None, false) => {}
        }
        for v in &self.videos {
            for (n, s) in v.segments.iter().enumerate() {
                let bad = |msg: String| Error::Archive(format!("video {} segment {n}: {msg}", v.id));
                if s.length == 0 {
                    return Err(bad("zero length".into()));
                }
                if s.action >= m.vocabulary.len() {
                    return Err(bad(format!("action {} outside vocabulary", s.action)));
                }
                let k = s.codes.rows();
                let expected_k = match m.method {
                    Method::Random => 0,
                    Method::Mean | Method::Coreset => 1,
                    _ => k.clamp(1, s.length),
                };
                if k != expected_k || (k > 0 && s.codes.cols() != m.code_dim) {
                    return Err(bad(format!("codes {:?} invalid for method {}", s.codes.shape(), m.method.name())));
                }
            }
        }
        Ok(())
    }

    pub fn num_segments(&self) -> usize {
        self.videos.iter().map(|v| v.segments.len()).sum()
    }

    /// Mean of per-segment reconstruction errors.
    pub fn mean_segment_loss(&self) -> f64 {
        let losses: Vec<f64> = self.videos.iter().flat_map(|v| v.segments.iter().map(|s| s.loss)).collect();
        losses.iter().sum::<f64>() / losses.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_match_serde() {
        for m in Method::ALL {
            assert_eq!(serde_json::to_value(m).unwrap(), serde_json::json!(m.name()));
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("ours"), None);
    }
}
