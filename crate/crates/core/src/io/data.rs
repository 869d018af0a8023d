use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Per-frame features of one video, `T x D`.
pub type FeatureSequence = Matrix;

/// Dense action ids `0..A` with unique names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ActionVocabulary {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for ActionVocabulary {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<ActionVocabulary> for Vec<String> {
    fn from(v: ActionVocabulary) -> Self {
        v.names
    }
}

impl ActionVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("vocabulary must contain at least one action".into()));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid action name {n:?}")));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate action name {n:?}")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Parses `mapping.txt`: one `id name` pair per line, ids dense from 0.
    pub fn parse_mapping(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(id), Some(name), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Config(format!("mapping line {}: expected `id name`", lineno + 1)));
            };
            let id: usize = id
                .parse()
                .map_err(|_| Error::Config(format!("mapping line {}: bad id {id:?}", lineno + 1)))?;
            entries.push((id, name.to_string()));
        }
        entries.sort_by_key(|e| e.0);
        for (expected, (id, _)) in entries.iter().enumerate() {
            if *id != expected {
                return Err(Error::Config(format!("mapping ids are not dense: missing {expected}")));
            }
        }
        Self::new(entries.into_iter().map(|e| e.1).collect())
    }

    pub fn to_mapping(&self) -> String {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{i} {n}\n"))
            .collect()
    }
}

/// A run of frames sharing one action: `(action, start, length)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub action: usize,
    pub start: usize,
    pub length: usize,
}

/// Maximal runs of equal labels.
pub fn segments_from_framewise(labels: &[usize]) -> Result<Vec<Segment>> {
    if labels.is_empty() {
        return Err(Error::Domain("a video needs at least one frame".into()));
    }
    let mut out: Vec<Segment> = Vec::new();
    for (t, &a) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.action == a => s.length += 1,
            _ => out.push(Segment {
                action: a,
                start: t,
                length: 1,
            }),
        }
    }
    Ok(out)
}

/// Checks that segments start at 0, are contiguous and non-empty; returns `T`.
pub fn validate_segments(segments: &[Segment]) -> Result<usize> {
    if segments.is_empty() {
        return Err(Error::Contiguity("no segments".into()));
    }
    let mut t = 0usize;
    for (n, s) in segments.iter().enumerate() {
        if s.length == 0 {
            return Err(Error::Contiguity(format!("segment {n} has zero length")));
        }
        if s.start != t {
            let what = if s.start > t { "gap" } else { "overlap" };
            return Err(Error::Contiguity(format!(
                "{what} before segment {n}: starts at {} but previous ends at {t}",
                s.start
            )));
        }
        t += s.length;
    }
    Ok(t)
}

pub fn framewise_from_segments(segments: &[Segment]) -> Result<Vec<usize>> {
    let total = validate_segments(segments)?;
    let mut labels = Vec::with_capacity(total);
    for s in segments {
        labels.extend(std::iter::repeat(s.action).take(s.length));
    }
    Ok(labels)
}

/// Segments rebuilt from `(action, length)` pairs laid end to end.
pub fn segments_from_lengths(pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<Segment> {
    let mut start = 0;
    pairs
        .into_iter()
        .map(|(action, length)| {
            let s = Segment {
                action,
                start,
                length,
            };
            start += length;
            s
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub features: FeatureSequence,
    pub segments: Vec<Segment>,
}

impl VideoRecord {
    pub fn new(id: impl Into<String>, features: FeatureSequence, segments: Vec<Segment>) -> Result<Self> {
        let id = id.into();
        let t = validate_segments(&segments)?;
        if t != features.rows() {
            return Err(Error::Shape(format!(
                "video {id}: segments cover {t} frames, features have {}",
                features.rows()
            )));
        }
        Ok(Self { id, features, segments })
    }

    pub fn from_labels(id: impl Into<String>, features: FeatureSequence, labels: &[usize]) -> Result<Self> {
        Self::new(id, features, segments_from_framewise(labels)?)
    }

    pub fn num_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn frame_labels(&self) -> Vec<usize> {
        framewise_from_segments(&self.segments).expect("validated on construction")
    }

    /// Ordered action ids, one per segment.
    pub fn transcript(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.action).collect()
    }

    /// Feature rows of segment `n`.
    pub fn segment_features(&self, n: usize) -> Matrix {
        let s = self.segments[n];
        self.features.slice_rows(s.start, s.length)
    }
}

/// A set of videos over one vocabulary and feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocabulary: ActionVocabulary,
    pub videos: Vec<VideoRecord>,
    /// Free-form record of where the corpus came from.
    pub provenance: serde_json::Value,
}

impl Corpus {
    pub fn new(vocabulary: ActionVocabulary, videos: Vec<VideoRecord>, provenance: serde_json::Value) -> Result<Self> {
        let c = Self {
            vocabulary,
            videos,
            provenance,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.videos.first() else {
            return Err(Error::Config("corpus has no videos".into()));
        };
        let d = first.features.cols();
        let a = self.vocabulary.len();
        for v in &self.videos {
            if v.features.cols() != d {
                return Err(Error::Shape(format!(
                    "video {} has feature dim {}, expected {d}",
                    v.id,
                    v.features.cols()
                )));
            }
            if let Some(s) = v.segments.iter().find(|s| s.action >= a) {
                return Err(Error::Config(format!(
                    "video {} uses action {} outside a vocabulary of {a}",
                    v.id, s.action
                )));
            }
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.videos[0].features.cols()
    }

    pub fn num_actions(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn total_frames(&self) -> usize {
        self.videos.iter().map(VideoRecord::num_frames).sum()
    }

    pub fn transcripts(&self) -> Vec<Vec<usize>> {
        self.videos.iter().map(VideoRecord::transcript).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.videos.iter().position(|v| v.id == id)
    }

    /// Sub-corpus with the given video indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Corpus> {
        let videos = indices
            .iter()
            .map(|&i| {
                self.videos
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("video index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(self.vocabulary.clone(), videos, self.provenance.clone())
    }
}
