//! On-disk corpus layout:
//!
//! ```text
//! <dir>/mapping.txt              id name per line
//! <dir>/features/<video>.fseq    per-video features
//! <dir>/groundTruth/<video>.txt  per-frame labels
//! <dir>/spec.json                provenance (optional)
//! ```
//! Videos are listed in lexicographic order of their ids.

use std::fs;
use std::path::Path;

use super::annotations::{load_annotations, write_annotations};
use super::fseq::{load_features, write_features};
use super::{read_file, write_atomic, ActionVocabulary, Corpus, VideoRecord};
use crate::error::{Error, Result};

pub const MAPPING: &str = "mapping.txt";
pub const FEATURES: &str = "features";
pub const LABELS: &str = "groundTruth";
pub const PROVENANCE: &str = "spec.json";

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let mapping = String::from_utf8_lossy(&read_file(&dir.join(MAPPING))?).into_owned();
    let vocabulary = ActionVocabulary::parse_mapping(&mapping)?;
    let label_dir = dir.join(LABELS);
    let mut ids: Vec<String> = fs::read_dir(&label_dir)
        .map_err(|e| Error::io(&label_dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            if p.extension()? != "txt" {
                return None;
            }
            Some(p.file_stem()?.to_string_lossy().into_owned())
        })
        .collect();
    ids.sort();
    let mut videos = Vec::with_capacity(ids.len());
    for id in ids {
        let labels = load_annotations(label_dir.join(format!("{id}.txt")), &vocabulary)?;
        let features = load_features(dir.join(FEATURES).join(format!("{id}.fseq")))?;
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "video {id}: {} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        videos.push(VideoRecord::from_labels(id, features, &labels)?);
    }
    let prov_path = dir.join(PROVENANCE);
    let provenance = if prov_path.exists() {
        serde_json::from_slice(&read_file(&prov_path)?).map_err(|e| Error::json(prov_path.display().to_string(), e))?
    } else {
        serde_json::Value::Null
    };
    Corpus::new(vocabulary, videos, provenance)
}

/// Writes the corpus into a hidden sibling directory and renames it into
/// place, so readers never observe a half-written corpus. An existing `dir`
/// is replaced only when it is empty or itself holds a corpus.
pub fn save_corpus(dir: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let dir = dir.as_ref();
    if dir.exists() {
        let empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_none();
        if !empty && !dir.join(MAPPING).is_file() {
            return Err(Error::Config(format!(
                "{} exists and does not hold a corpus; refusing to replace it",
                dir.display()
            )));
        }
    }
    let name = dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a usable directory name", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let staging = parent.join(format!(".{name}.tmp{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let written = write_corpus_files(&staging, corpus);
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))
}

fn write_corpus_files(dir: &Path, corpus: &Corpus) -> Result<()> {
    for sub in [FEATURES, LABELS] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    write_atomic(&dir.join(MAPPING), corpus.vocabulary.to_mapping().as_bytes())?;
    for v in &corpus.videos {
        write_features(dir.join(FEATURES).join(format!("{}.fseq", v.id)), &v.features)?;
        write_annotations(dir.join(LABELS).join(format!("{}.txt", v.id)), &v.frame_labels(), &corpus.vocabulary)?;
    }
    if !corpus.provenance.is_null() {
        let text = serde_json::to_vec_pretty(&corpus.provenance).map_err(|e| Error::json("provenance", e))?;
        write_atomic(&dir.join(PROVENANCE), &text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    fn tiny() -> Corpus {
        let spec = SynthSpec {
            videos_per_activity: 2,
            feature_dim: 4,
            ..SynthSpec::default()
        };
        generate(&spec, 1).unwrap()
    }

    #[test]
    fn save_load_round_trip_and_overwrite() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("corpus");
        let corpus = tiny();
        save_corpus(&dir, &corpus).unwrap();
        save_corpus(&dir, &corpus).unwrap();
        assert_eq!(load_corpus(&dir).unwrap(), corpus);
        let leftovers: Vec<_> = fs::read_dir(tmp.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn refuses_to_replace_foreign_directory() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("notes.txt"), "keep me").unwrap();
        assert!(matches!(save_corpus(tmp.path(), &tiny()), Err(Error::Config(_))));
        assert!(tmp.path().join("notes.txt").exists());
    }
}
