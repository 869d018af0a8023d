//! Whole-pipeline configuration plus the runs shared by the command line and
//! the test suites.

use serde::{Deserialize, Serialize};

use crate::condense::{condense_corpus, decode_dataset, CondenseConfig, CondensedDataset, Instances};
use crate::error::{Error, Result};
use crate::eval::{evaluate_report, train_probe, MetricsReport, ProbeConfig};
use crate::io::Corpus;
use crate::sampler::{fps_select, SamplerConfig, Selection};
use crate::synth::SynthSpec;
use crate::tca::{TcaConfig, TcaModel};
use crate::tensor::SeededRng;

/// Every module configuration plus the global seed they are derived from.
///
/// The defaults describe a desk-scale run: an 8-dim latent, small hidden
/// layers and a few hundred inversion steps, sized so the full pipeline on the
/// default synthetic corpus finishes in well under a minute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub synth: SynthSpec,
    /// Held-out videos per activity generated next to the training corpus.
    pub test_per_activity: usize,
    pub tca: TcaConfig,
    pub sampler: SamplerConfig,
    pub condense: CondenseConfig,
    pub probe: ProbeConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut condense = CondenseConfig::default();
        condense.inversion.iterations = 300;
        condense.inversion.learning_rate = 0.05;
        Self {
            synth: SynthSpec::default(),
            test_per_activity: 10,
            tca: TcaConfig {
                latent_dim: 8,
                hidden: 64,
                epochs: 10,
                learning_rate: 2e-3,
                batch_size: 256,
                beta: 1e-3,
                seed: 0,
            },
            sampler: SamplerConfig::default(),
            condense,
            probe: ProbeConfig {
                hidden: 64,
                ..ProbeConfig::default()
            },
            seed: 0,
        }
    }
}

/// Seed of the child stream `label` under `seed`.
pub fn child_seed(seed: u64, label: &str) -> u64 {
    SeededRng::new(seed).split(label).seed()
}

impl PipelineConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
        .seeded()
    }

    /// Overwrites every module seed with a labeled split of the global seed.
    pub fn seeded(mut self) -> Self {
        self.tca.seed = child_seed(self.seed, "tca");
        self.sampler.seed = child_seed(self.seed, "sampler");
        self.condense.inversion.seed = child_seed(self.seed, "condense");
        self.probe.seed = child_seed(self.seed, "probe");
        self
    }

    pub fn synth_seed(&self) -> u64 {
        child_seed(self.seed, "synth")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.tca.validate()?;
        self.sampler.validate()?;
        self.condense.inversion.validate()?;
        self.probe.validate()?;
        if self.test_per_activity == 0 {
            return Err(Error::Config("test_per_activity must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Applies a partial configuration on top of the pipeline defaults. Fields
    /// omitted at any depth keep the pipeline default, not the module default.
    pub fn from_overrides(overrides: serde_json::Value) -> Result<Self> {
        let mut merged = Self::default().to_json();
        merge(&mut merged, overrides);
        serde_json::from_value(merged).map_err(|e| Error::json("pipeline config", e))
    }
}

fn merge(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Trains a probe on `train` and scores it on `test`.
pub fn train_and_evaluate(
    train: &Corpus,
    test: &Corpus,
    probe: &ProbeConfig,
    storage: Option<crate::io::StorageReport>,
    config: serde_json::Value,
) -> Result<MetricsReport> {
    let (model, _) = train_probe(train, probe)?;
    evaluate_report(&model, test, storage, config)
}

/// One condensation plus the downstream score of a probe trained on its
/// restored videos.
#[derive(Clone, Debug)]
pub struct CondensedRun {
    pub dataset: CondensedDataset,
    pub report: MetricsReport,
}

pub fn condense_and_evaluate(
    train: &Corpus,
    test: &Corpus,
    model: Option<&TcaModel>,
    selection: &Selection,
    condense: &CondenseConfig,
    probe: &ProbeConfig,
    config: serde_json::Value,
) -> Result<CondensedRun> {
    let dataset = condense_corpus(train, model, selection, condense)?;
    let restored = decode_dataset(&dataset)?;
    let report = train_and_evaluate(&restored, test, probe, Some(dataset.manifest.storage.clone()), config)?;
    Ok(CondensedRun { dataset, report })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Gamma,
    K,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::K => "k",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub param: SweepParam,
    pub value: f64,
    pub kept_videos: usize,
    pub mean_segment_loss: f64,
    pub latent_bytes: u64,
    pub report: MetricsReport,
}

/// Re-runs selection (`gamma`) or inversion (`k`) for each value, holding the
/// rest of `config` fixed.
pub fn sweep(
    train: &Corpus,
    test: &Corpus,
    model: Option<&TcaModel>,
    config: &PipelineConfig,
    param: SweepParam,
    values: &[f64],
    mut on_cell: impl FnMut(&SweepCell, &CondensedDataset) -> Result<()>,
) -> Result<Vec<SweepCell>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let base_selection = match param {
        SweepParam::K => Some(fps_select(train, &config.sampler)?),
        SweepParam::Gamma => None,
    };
    let mut cells = Vec::with_capacity(values.len());
    for &value in values {
        let mut cell_config = config.clone();
        let selection = match param {
            SweepParam::Gamma => {
                cell_config.sampler.gamma = value;
                fps_select(train, &cell_config.sampler)?
            }
            SweepParam::K => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("K must be a positive integer, got {value}")));
                }
                cell_config.condense.inversion.instances = Instances::Fixed(value as usize);
                base_selection.clone().expect("selected above")
            }
        };
        let run = condense_and_evaluate(
            train,
            test,
            model,
            &selection,
            &cell_config.condense,
            &cell_config.probe,
            cell_config.to_json(),
        )?;
        let cell = SweepCell {
            param,
            value,
            kept_videos: run.dataset.videos.len(),
            mean_segment_loss: run.dataset.mean_segment_loss(),
            latent_bytes: run.dataset.manifest.storage.latent_bytes,
            report: run.report,
        };
        on_cell(&cell, &run.dataset)?;
        cells.push(cell);
    }
    Ok(cells)
}

/// Fixed-width text table of a finished sweep.
pub fn sweep_table(cells: &[SweepCell]) -> String {
    let mut out = String::new();
    let name = cells.first().map_or("value", |c| c.param.name());
    out.push_str(&format!(
        "{name:>6} {:>6} {:>10} {:>12} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "videos", "mse", "latent_B", "acc", "edit", "f1@10", "f1@25", "f1@50"
    ));
    for c in cells {
        let m = &c.report.metrics;
        out.push_str(&format!(
            "{:>6} {:>6} {:>10.5} {:>12} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
            c.value, c.kept_videos, c.mean_segment_loss, c.latent_bytes, m.accuracy, m.edit, m.f1_10, m.f1_25, m.f1_50
        ));
    }
    out
}
