//! Video-level redundancy reduction: normalized edit distance between action
//! transcripts and greedy farthest-point selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Corpus;

/// Levenshtein distance with unit insert, delete and substitute costs.
pub fn edit_distance(a: &[usize], b: &[usize]) -> usize {
    let (m, n) = (a.len(), b.len());
    let mut table = vec![vec![0usize; n + 1]; m + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=n {
        table[0][j] = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub = table[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            table[i][j] = (table[i - 1][j] + 1).min(table[i][j - 1] + 1).min(sub);
        }
    }
    table[m][n]
}

/// Edit distance divided by the longer length; `0` for two empty inputs.
pub fn edit_distance_norm(a: &[usize], b: &[usize]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    edit_distance(a, b) as f64 / longest as f64
}

/// Symmetric matrix of normalized distances with a zero diagonal.
pub fn pairwise_distances(sequences: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let n = sequences.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j > i {
                        edit_distance_norm(&sequences[i], &sequences[j])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut full = upper;
    for i in 0..n {
        for j in 0..i {
            full[i][j] = full[j][i];
        }
    }
    full
}

/// Number of videos kept for ratio `gamma`: `max(1, round(gamma * n))`, with
/// halves rounded away from zero.
pub fn budget(gamma: f64, n: usize) -> usize {
    ((gamma * n as f64).round() as usize).clamp(1, n.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub gamma: f64,
    /// Reserved; selection is deterministic.
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { gamma: 0.5, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// Outcome of a selection, written to `selection.json` and the archive manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub gamma: f64,
    pub budget: usize,
    pub strategy: String,
    /// Indices into the source corpus, in pick order.
    pub indices: Vec<usize>,
    pub video_ids: Vec<String>,
    /// Total distance of the first pick to all other sequences.
    pub first_total_distance: f64,
    /// Min distance to the selected set achieved by picks 2, 3, ...
    pub min_distance_trace: Vec<f64>,
}

impl Selection {
    /// Every video, in corpus order.
    pub fn all(corpus: &Corpus) -> Self {
        let n = corpus.videos.len();
        Self {
            gamma: 1.0,
            budget: n,
            strategy: "all".into(),
            indices: (0..n).collect(),
            video_ids: corpus.videos.iter().map(|v| v.id.clone()).collect(),
            first_total_distance: 0.0,
            min_distance_trace: vec![],
        }
    }

    /// A uniformly random subset of the given size, in corpus order.
    pub fn random(corpus: &Corpus, gamma: f64, rng: &mut crate::tensor::SeededRng) -> Self {
        let n = corpus.videos.len();
        let k = budget(gamma, n);
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        idx.truncate(k);
        idx.sort_unstable();
        Self {
            gamma,
            budget: k,
            strategy: "random".into(),
            video_ids: idx.iter().map(|&i| corpus.videos[i].id.clone()).collect(),
            indices: idx,
            first_total_distance: 0.0,
            min_distance_trace: vec![],
        }
    }
}

/// Greedy farthest-point ordering over precomputed distances. The first pick
/// maximizes total distance to all others; each later pick maximizes its min
/// distance to the picks so far. Ties go to the lowest index.
pub fn fps_order(distances: &[Vec<f64>], count: usize) -> (Vec<usize>, f64, Vec<f64>) {
    let n = distances.len();
    let count = count.min(n);
    if count == 0 {
        return (vec![], 0.0, vec![]);
    }
    let totals: Vec<f64> = distances.iter().map(|row| row.iter().sum()).collect();
    let mut first = 0;
    for i in 1..n {
        if totals[i] > totals[first] {
            first = i;
        }
    }
    let mut picked = vec![first];
    let mut taken = vec![false; n];
    taken[first] = true;
    let mut min_dist: Vec<f64> = distances[first].clone();
    let mut trace = Vec::with_capacity(count - 1);
    while picked.len() < count {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            if best.map_or(true, |b| min_dist[i] > min_dist[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("fewer picks than candidates");
        trace.push(min_dist[b]);
        picked.push(b);
        taken[b] = true;
        for i in 0..n {
            min_dist[i] = min_dist[i].min(distances[b][i]);
        }
    }
    (picked, totals[first], trace)
}

/// Farthest-point selection of `max(1, round(gamma * n))` videos by transcript.
pub fn fps_select(corpus: &Corpus, config: &SamplerConfig) -> Result<Selection> {
    config.validate()?;
    let sequences = corpus.transcripts();
    if sequences.is_empty() {
        return Err(Error::Config("cannot sample from an empty corpus".into()));
    }
    let k = budget(config.gamma, sequences.len());
    let (indices, first_total_distance, min_distance_trace) = fps_order(&pairwise_distances(&sequences), k);
    Ok(Selection {
        gamma: config.gamma,
        budget: k,
        strategy: "farthest-point".into(),
        video_ids: indices.iter().map(|&i| corpus.videos[i].id.clone()).collect(),
        indices,
        first_total_distance,
        min_distance_trace,
    })
}

/// Smallest pairwise distance among the chosen sequences (`inf` below two).
pub fn min_pairwise_distance(distances: &[Vec<f64>], chosen: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for (a, &i) in chosen.iter().enumerate() {
        for &j in &chosen[a + 1..] {
            best = best.min(distances[i][j]);
        }
    }
    best
}
