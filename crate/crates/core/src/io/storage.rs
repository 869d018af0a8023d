//! Byte accounting for condensed datasets. Every line item is an element count
//! times four bytes.

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::condense::{CondensedDataset, CondensedVideo};
use crate::tca::Decoder;

const WORD: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    /// Raw features of the whole source corpus, `Σ T·D·4`.
    pub original_bytes: u64,
    /// Stored codes, `Σ K·d·4` over kept segments.
    pub latent_bytes: u64,
    /// Symbolic sequences: action id and length per kept segment.
    pub annotation_bytes: u64,
    /// Decoder parameters, zero when no decoder is stored.
    pub decoder_bytes: u64,
    pub source_videos: usize,
    pub kept_videos: usize,
    pub kept_segments: usize,
    /// `original / latent`; absent when nothing latent is stored.
    pub headline_ratio: Option<f64>,
}

impl StorageReport {
    /// Accounting for `videos`, given the source corpus size.
    pub fn compute(original_bytes: u64, source_videos: usize, videos: &[CondensedVideo], decoder: Option<&Decoder>) -> Self {
        let latent_bytes: u64 = videos
            .iter()
            .flat_map(|v| &v.segments)
            .map(|s| s.codes.data().len() as u64 * WORD)
            .sum();
        let kept_segments: usize = videos.iter().map(|v| v.segments.len()).sum();
        Self {
            original_bytes,
            latent_bytes,
            annotation_bytes: kept_segments as u64 * 2 * WORD,
            decoder_bytes: decoder.map_or(0, |d| d.params.param_count() as u64 * WORD),
            source_videos,
            kept_videos: videos.len(),
            kept_segments,
            headline_ratio: (latent_bytes > 0).then(|| original_bytes as f64 / latent_bytes as f64),
        }
    }

    /// Recomputes the report from a condensed dataset alone.
    pub fn recompute(dataset: &CondensedDataset) -> Self {
        let stored = &dataset.manifest.storage;
        Self::compute(stored.original_bytes, stored.source_videos, &dataset.videos, dataset.decoder.as_ref())
    }

    pub fn total_bytes(&self) -> u64 {
        self.latent_bytes + self.annotation_bytes + self.decoder_bytes
    }
}

pub fn original_bytes(corpus: &Corpus) -> u64 {
    corpus.videos.iter().map(|v| v.features.data().len() as u64 * WORD).sum()
}

pub fn storage_report(corpus: &Corpus, condensed: &CondensedDataset) -> StorageReport {
    StorageReport::compute(
        original_bytes(corpus),
        corpus.videos.len(),
        &condensed.videos,
        condensed.decoder.as_ref(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condense::CondensedSegment;
    use crate::tensor::Matrix;

    fn video(segments: &[(usize, usize, usize)], dim: usize) -> CondensedVideo {
        CondensedVideo {
            id: "v".into(),
            segments: segments
                .iter()
                .map(|&(action, length, k)| CondensedSegment {
                    action,
                    length,
                    codes: Matrix::zeros(k, dim),
                    loss: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn single_segment_ratio() {
        let r = StorageReport::compute(100 * 2048 * 4, 1, &[video(&[(0, 100, 8)], 256)], None);
        assert_eq!(r.original_bytes, 819_200);
        assert_eq!(r.latent_bytes, 8192);
        assert_eq!(r.headline_ratio, Some(100.0));
        assert_eq!(r.annotation_bytes, 8);
        assert_eq!(r.decoder_bytes, 0);
    }

    #[test]
    fn unit_ratio_and_missing_latents() {
        let r = StorageReport::compute(256 * 4, 1, &[video(&[(0, 1, 1)], 256)], None);
        assert_eq!(r.headline_ratio, Some(1.0));
        let r = StorageReport::compute(256 * 4, 1, &[video(&[(0, 1, 0)], 256)], None);
        assert_eq!(r.latent_bytes, 0);
        assert_eq!(r.headline_ratio, None);
    }

    #[test]
    fn halving_videos_halves_latents() {
        let v = video(&[(0, 30, 8), (1, 5, 5)], 16);
        let all = StorageReport::compute(0, 4, &vec![v.clone(); 4], None);
        let half = StorageReport::compute(0, 4, &vec![v; 2], None);
        assert_eq!(half.latent_bytes * 2, all.latent_bytes);
    }
}
