//! Seeded generator of procedural corpora with known class geometry.
//!
//! Frame `i` of a class-`a` segment of length `ℓ` is
//! `μ_{a,k} + c_i·v_a + ε`, with `c_i` the segment coherence and
//! `ε ~ N(0, σ²I)`. Each class owns several modes `μ_{a,k} = m_a + Bᵀr_{a,k}`;
//! every segment picks one uniformly. `B` is a low-rank basis shared by all
//! classes, so the modes of different classes interleave inside one subspace
//! and a class is only recognisable near its own modes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{segments_from_lengths, ActionVocabulary, Corpus, VideoRecord};
use crate::tca::coherence;
use crate::tensor::{Matrix, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub activities: usize,
    pub actions_per_activity: usize,
    /// Size of the shared action vocabulary.
    pub num_actions: usize,
    pub feature_dim: usize,
    pub videos_per_activity: usize,
    pub segments_min: usize,
    pub segments_max: usize,
    pub length_min: usize,
    pub length_max: usize,
    /// Per-dimension standard deviation of class means.
    pub mean_scale: f64,
    /// Per-dimension standard deviation of drift directions.
    pub drift_scale: f64,
    /// Frame noise `σ`.
    pub noise: f64,
    /// Modes per class.
    pub variants: usize,
    /// Rank of the subspace holding the mode offsets.
    pub variant_rank: usize,
    /// Standard deviation of each mode coordinate.
    pub variant_scale: f64,
    /// Probability that a video re-enacts an earlier video of the same
    /// activity: same transcript, segment lengths and modes, fresh noise.
    pub duplicate_prob: f64,
    /// Probability of stepping to the next action in an activity's cycle; the
    /// remainder is spread over the other actions.
    pub forward_prob: f64,
    /// Explicit per-activity transition matrices over the activity's actions;
    /// overrides `forward_prob` when present.
    pub transitions: Option<Vec<Vec<Vec<f64>>>>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            activities: 2,
            actions_per_activity: 5,
            num_actions: 8,
            feature_dim: 64,
            videos_per_activity: 20,
            segments_min: 5,
            segments_max: 8,
            length_min: 15,
            length_max: 45,
            mean_scale: 0.1,
            drift_scale: 0.5,
            noise: 0.3,
            variants: 6,
            variant_rank: 3,
            variant_scale: 1.5,
            duplicate_prob: 0.2,
            forward_prob: 0.7,
            transitions: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.variants == 0 {
            return bad("need at least one mode per class");
        }
        if self.num_actions < 2 {
            return bad("need at least two action classes");
        }
        if self.activities == 0 || self.videos_per_activity == 0 || self.feature_dim == 0 {
            return bad("activities, videos per activity and feature dim must be >= 1");
        }
        if self.actions_per_activity < 2 || self.actions_per_activity > self.num_actions {
            return bad("actions per activity must lie in 2..=num_actions");
        }
        if self.length_min < 2 || self.length_max < self.length_min {
            return bad("segment lengths need 2 <= min <= max");
        }
        if self.segments_min == 0 || self.segments_max < self.segments_min {
            return bad("segment counts need 1 <= min <= max");
        }
        for (name, v) in [
            ("mean_scale", self.mean_scale),
            ("drift_scale", self.drift_scale),
            ("noise", self.noise),
            ("variant_scale", self.variant_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.duplicate_prob) || !(0.0..=1.0).contains(&self.forward_prob) {
            return bad("probabilities must lie in [0, 1]");
        }
        if let Some(t) = &self.transitions {
            if t.len() != self.activities {
                return bad("one transition matrix per activity required");
            }
            for m in t {
                if m.len() != self.actions_per_activity || m.iter().any(|r| r.len() != self.actions_per_activity) {
                    return bad("transition matrices must be square over the activity's actions");
                }
                for (i, row) in m.iter().enumerate() {
                    if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return bad("transition rows must be non-negative and sum to 1");
                    }
                    if row[i] != 0.0 {
                        return bad("self-transitions would merge adjacent segments");
                    }
                }
            }
        }
        Ok(())
    }

    /// Vocabulary ids used by activity `g`.
    pub fn activity_actions(&self, g: usize) -> Vec<usize> {
        (0..self.actions_per_activity)
            .map(|j| (g * self.actions_per_activity + j) % self.num_actions)
            .collect()
    }

    fn transition_matrix(&self, g: usize) -> Vec<Vec<f64>> {
        if let Some(t) = &self.transitions {
            return t[g].clone();
        }
        let n = self.actions_per_activity;
        let rest = (1.0 - self.forward_prob) / (n - 2).max(1) as f64;
        (0..n)
            .map(|i| {
                let row: Vec<f64> = (0..n)
                    .map(|j| match j {
                        _ if j == i => 0.0,
                        _ if j == (i + 1) % n => self.forward_prob,
                        _ => rest,
                    })
                    .collect();
                let s: f64 = row.iter().sum();
                row.into_iter().map(|p| p / s).collect()
            })
            .collect()
    }
}

/// Class modes and drift directions shared by every split.
#[derive(Clone, Debug)]
pub struct Geometry {
    /// `(A·variants) x D`; row `a·variants + k` is mode `k` of class `a`.
    pub modes: Matrix,
    pub drifts: Matrix,
    pub variants: usize,
}

const MAX_REJECTIONS: usize = 10_000;

impl Geometry {
    /// Draws one class at a time and rejects it unless each of its modes lies
    /// at least `4σ` from every mode of the classes already placed.
    pub fn draw(spec: &SynthSpec, rng: &SeededRng) -> Result<Self> {
        let d = spec.feature_dim;
        let a = spec.num_actions;
        let m = spec.variants;
        let min_sep = 4.0 * spec.noise;
        let basis = orthonormal_rows(&mut rng.split("variant-basis"), spec.variant_rank.min(d), d);
        let mut mode_rng = rng.split("modes");
        let mut modes = Matrix::zeros(a * m, d);
        for class in 0..a {
            let mut tries = 0;
            loop {
                let base: Vec<f64> = (0..d).map(|_| mode_rng.normal() * spec.mean_scale).collect();
                let cand: Vec<Vec<f32>> = (0..m)
                    .map(|_| {
                        let mut row = base.clone();
                        for r in 0..basis.rows() {
                            let w = mode_rng.normal() * spec.variant_scale;
                            row.iter_mut().zip(basis.row(r)).for_each(|(x, b)| *x += w * *b as f64);
                        }
                        row.into_iter().map(|x| x as f32).collect()
                    })
                    .collect();
                let ok = cand.iter().all(|c| {
                    (0..class * m).all(|j| {
                        let dist2: f64 = modes.row(j).iter().zip(c).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
                        dist2.sqrt() >= min_sep
                    })
                });
                if ok {
                    for (k, c) in cand.iter().enumerate() {
                        modes.row_mut(class * m + k).copy_from_slice(c);
                    }
                    break;
                }
                tries += 1;
                if tries > MAX_REJECTIONS {
                    return Err(Error::Config("cannot place class modes 4σ apart; raise mean_scale or variant_scale".into()));
                }
            }
        }
        let mut drifts = rng.split("drifts").gaussian_draw(a, d);
        drifts.data_mut().iter_mut().for_each(|v| *v *= spec.drift_scale as f32);
        Ok(Self { modes, drifts, variants: m })
    }

    pub fn mode(&self, action: usize, k: usize) -> &[f32] {
        self.modes.row(action * self.variants + k)
    }
}

/// Gram-Schmidt on Gaussian rows.
fn orthonormal_rows(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut m = Matrix::zeros(rows, cols);
    for (i, b) in basis.iter().enumerate() {
        for (j, v) in b.iter().enumerate() {
            m.set(i, j, *v as f32);
        }
    }
    m
}

fn draw_transcript(spec: &SynthSpec, g: usize, rng: &mut SeededRng) -> Vec<usize> {
    let actions = spec.activity_actions(g);
    let trans = spec.transition_matrix(g);
    let n = rng.range_inclusive(spec.segments_min, spec.segments_max);
    let mut state = rng.range_inclusive(0, actions.len() - 1);
    let mut out = vec![actions[state]];
    while out.len() < n {
        state = rng.categorical(&trans[state]);
        out.push(actions[state]);
    }
    out
}

/// Per segment: action, length and mode index.
type Plan = Vec<(usize, usize, usize)>;

fn draw_plan(spec: &SynthSpec, g: usize, rng: &mut SeededRng) -> Plan {
    draw_transcript(spec, g, rng)
        .into_iter()
        .map(|a| {
            let len = rng.range_inclusive(spec.length_min, spec.length_max);
            (a, len, rng.range_inclusive(0, spec.variants - 1))
        })
        .collect()
}

fn render_video(spec: &SynthSpec, geo: &Geometry, id: String, plan: &Plan, rng: &mut SeededRng) -> Result<VideoRecord> {
    let d = spec.feature_dim;
    let total: usize = plan.iter().map(|p| p.1).sum();
    let mut features = Matrix::zeros(total, d);
    let mut t = 0;
    for &(a, len, k) in plan {
        let mode = geo.mode(a, k);
        for c in coherence(len)? {
            let row = features.row_mut(t);
            for j in 0..d {
                let eps = if spec.noise > 0.0 { rng.normal() * spec.noise } else { 0.0 };
                row[j] = (mode[j] as f64 + c as f64 * geo.drifts.get(a, j) as f64 + eps) as f32;
            }
            t += 1;
        }
    }
    VideoRecord::new(id, features, segments_from_lengths(plan.iter().map(|p| (p.0, p.1))))
}

fn vocabulary(spec: &SynthSpec) -> ActionVocabulary {
    ActionVocabulary::new((0..spec.num_actions).map(|i| format!("action{i:02}")).collect())
        .expect("distinct generated names")
}

fn render_split(spec: &SynthSpec, geo: &Geometry, rng: &SeededRng, prefix: &str, per_activity: usize) -> Result<Vec<VideoRecord>> {
    let mut videos = Vec::with_capacity(spec.activities * per_activity);
    for g in 0..spec.activities {
        let mut pool: Vec<Plan> = Vec::new();
        for i in 0..per_activity {
            let mut vrng = rng.split(&format!("{prefix}/{g}")).split_index("video", i as u64);
            let plan = if !pool.is_empty() && vrng.uniform() < spec.duplicate_prob {
                pool[vrng.range_inclusive(0, pool.len() - 1)].clone()
            } else {
                draw_plan(spec, g, &mut vrng)
            };
            pool.push(plan.clone());
            let id = format!("{prefix}a{g}_v{i:03}");
            videos.push(render_video(spec, geo, id, &plan, &mut vrng)?);
        }
    }
    Ok(videos)
}

fn provenance(spec: &SynthSpec, seed: u64, split: &str) -> serde_json::Value {
    serde_json::json!({
        "generator": "synthetic-procedural",
        "seed": seed,
        "split": split,
        "spec": spec,
    })
}

pub fn generate(spec: &SynthSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let rng = SeededRng::new(seed);
    let geo = Geometry::draw(spec, &rng.split("geometry"))?;
    let videos = render_split(spec, &geo, &rng.split("train"), "", spec.videos_per_activity)?;
    Corpus::new(vocabulary(spec), videos, provenance(spec, seed, "train"))
}

/// Training corpus identical to [`generate`] plus a held-out split drawn from
/// the same class geometry.
pub fn generate_split(spec: &SynthSpec, seed: u64, test_per_activity: usize) -> Result<(Corpus, Corpus)> {
    let train = generate(spec, seed)?;
    let rng = SeededRng::new(seed);
    let geo = Geometry::draw(spec, &rng.split("geometry"))?;
    let videos = render_split(spec, &geo, &rng.split("test"), "test_", test_per_activity)?;
    let test = Corpus::new(vocabulary(spec), videos, provenance(spec, seed, "test"))?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            videos_per_activity: 4,
            feature_dim: 6,
            ..Default::default()
        }
    }

    #[test]
    fn zero_noise_zero_drift_gives_class_modes() {
        let spec = SynthSpec {
            noise: 0.0,
            drift_scale: 0.0,
            variants: 1,
            ..small()
        };
        let c = generate(&spec, 1).unwrap();
        let geo = Geometry::draw(&spec, &SeededRng::new(1).split("geometry")).unwrap();
        for v in &c.videos {
            for (t, a) in v.frame_labels().into_iter().enumerate() {
                assert_eq!(v.features.row(t), geo.mode(a, 0));
            }
        }
    }

    #[test]
    fn zero_noise_frames_move_linearly() {
        let spec = SynthSpec {
            noise: 0.0,
            ..small()
        };
        let c = generate(&spec, 2).unwrap();
        let v = &c.videos[0];
        let seg = v.segment_features(0);
        let n = seg.rows();
        let step: Vec<f64> = (0..6).map(|j| seg.get(1, j) as f64 - seg.get(0, j) as f64).collect();
        for i in 1..n {
            for j in 0..6 {
                let d = seg.get(i, j) as f64 - seg.get(i - 1, j) as f64;
                assert!((d - step[j]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn full_duplication_single_path_repeats_transcript() {
        let spec = SynthSpec {
            activities: 1,
            duplicate_prob: 1.0,
            videos_per_activity: 6,
            ..small()
        };
        let c = generate(&spec, 3).unwrap();
        let first = c.videos[0].transcript();
        assert!(c.videos.iter().all(|v| v.transcript() == first));
    }

    #[test]
    fn reproducible_and_valid() {
        let spec = small();
        let a = generate(&spec, 9).unwrap();
        assert_eq!(a, generate(&spec, 9).unwrap());
        assert_ne!(a, generate(&spec, 10).unwrap());
        for v in &a.videos {
            let t = v.transcript();
            assert!(t.windows(2).all(|w| w[0] != w[1]));
            assert!((spec.segments_min..=spec.segments_max).contains(&t.len()));
        }
        let (train, test) = generate_split(&spec, 9, 2).unwrap();
        assert_eq!(train, a);
        assert_eq!(test.videos.len(), 4);
        assert!(test.videos.iter().all(|v| v.id.starts_with("test_")));
    }

    #[test]
    fn default_geometry_has_expected_scale() {
        let spec = SynthSpec::default();
        let c = generate(&spec, 0).unwrap();
        assert_eq!(c.videos.len(), 40);
        assert_eq!(c.num_actions(), 8);
        let mean_t = c.total_frames() as f64 / 40.0;
        assert!((150.0..250.0).contains(&mean_t), "{mean_t}");
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            SynthSpec { num_actions: 1, actions_per_activity: 1, ..small() },
            SynthSpec { length_min: 1, ..small() },
            SynthSpec { duplicate_prob: 1.5, ..small() },
            SynthSpec {
                activities: 1,
                actions_per_activity: 2,
                transitions: Some(vec![vec![vec![0.5, 0.5], vec![1.0, 0.0]]]),
                ..small()
            },
        ] {
            assert!(matches!(generate(&spec, 0), Err(Error::Config(_))), "{spec:?}");
        }
    }
}
