//! Per-frame ground-truth text files: one action name per line.

use std::path::Path;

use super::{read_file, write_atomic, ActionVocabulary};
use crate::error::{Error, Result};

pub fn parse_annotations(text: &str, vocab: &ActionVocabulary) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let id = vocab.id_of(token).ok_or_else(|| Error::Vocabulary {
            line: lineno + 1,
            token: token.to_string(),
        })?;
        labels.push(id);
    }
    if labels.is_empty() {
        return Err(Error::Domain("annotation file has no frames".into()));
    }
    Ok(labels)
}

pub fn load_annotations(path: impl AsRef<Path>, vocab: &ActionVocabulary) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::format(e.utf8_error().valid_up_to() as u64, "annotation file is not UTF-8"))?;
    parse_annotations(&text, vocab)
}

pub fn format_annotations(labels: &[usize], vocab: &ActionVocabulary) -> Result<String> {
    let mut out = String::with_capacity(labels.len() * 8);
    for &l in labels {
        let name = vocab
            .name(l)
            .ok_or_else(|| Error::Config(format!("action id {l} outside vocabulary")))?;
        out.push_str(name);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_annotations(path: impl AsRef<Path>, labels: &[usize], vocab: &ActionVocabulary) -> Result<()> {
    write_atomic(path.as_ref(), format_annotations(labels, vocab)?.as_bytes())
}
