use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use segcond_core::condense::{
    condensation_factor, condense_corpus, decode_dataset, CondensedDataset, InitPolicy, Instances, Method,
};
use segcond_core::eval::{evaluate_report, read_probe, train_probe, write_probe, ProbeConfig};
use segcond_core::io::{
    load_corpus, read_condensed, read_json, read_model, save_corpus, write_condensed, write_json, write_model,
    Corpus, ModelManifest, StorageReport,
};
use segcond_core::pipeline::{sweep, sweep_table, PipelineConfig, SweepParam};
use segcond_core::sampler::{fps_select, Selection};
use segcond_core::synth::{generate, generate_split, SynthSpec};
use segcond_core::tca::{train_tca_with, TcaModel};
use segcond_core::Error;

use crate::{Baseline, Command, CondenseArgs, ConfigArgs, Init, Param};

pub const THREADS_VAR: &str = "SEGCOND_THREADS";

/// Caps the worker pool when `SEGCOND_THREADS` is set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(Error::Config(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")).into()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

/// 2 for usage and configuration problems, 4 for numeric or training
/// failures, 3 for everything else (unreadable or malformed inputs).
pub fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<Error>())
        .map_or(3, |e| e.exit_code() as u8)
}

/// The error chain on one line, skipping causes already spelled out by the
/// message that wraps them.
pub fn one_line(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string().replace('\n', " ");
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynth {
            spec,
            cfg,
            out,
            test_out,
            test_per_activity,
        } => gen_synth(spec.as_deref(), &cfg, &out, test_out.as_deref(), test_per_activity),
        Command::TrainGen { corpus, cfg, epochs, out } => train_gen(&corpus, &cfg, epochs, &out),
        Command::Sample { corpus, gamma, cfg, out } => sample(&corpus, gamma, &cfg, &out),
        Command::Condense {
            corpus,
            model,
            selection,
            opts,
            cfg,
            out,
        } => condense(&corpus, model.as_deref(), selection.as_deref(), &opts, &cfg, &out),
        Command::Decode { archive, out } => decode(&archive, &out),
        Command::Train {
            corpus,
            probe_config,
            cfg,
            out,
        } => train(&corpus, probe_config.as_deref(), &cfg, &out),
        Command::Eval {
            probe,
            test,
            condensed,
            out,
        } => eval(&probe, &test, condensed.as_deref(), &out),
        Command::Sweep {
            corpus,
            test,
            model,
            param,
            values,
            opts,
            cfg,
            out,
        } => run_sweep(&corpus, &test, model.as_deref(), param, &values, &opts, &cfg, &out),
        Command::Stats { archive, out } => stats(&archive, out.as_deref()),
        Command::Project { corpus, decoded, out } => crate::project::project(&corpus, &decoded, &out),
    }
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut config: PipelineConfig = match &args.config {
        Some(p) => PipelineConfig::from_overrides(read_json(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let config = config.seeded();
    config.validate()?;
    Ok(config)
}

fn corpus_at(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn model_at(path: &Path, corpus: &Corpus) -> Result<(TcaModel, ModelManifest)> {
    let (model, manifest) = read_model(path).with_context(|| format!("loading model {}", path.display()))?;
    if manifest.vocabulary != corpus.vocabulary.names() {
        return Err(Error::Config(format!("{} was trained on a different action vocabulary", path.display())).into());
    }
    Ok((model, manifest))
}

fn gen_synth(
    spec_path: Option<&Path>,
    cfg: &ConfigArgs,
    out: &Path,
    test_out: Option<&Path>,
    test_per_activity: Option<usize>,
) -> Result<()> {
    let config = load_config(cfg)?;
    let spec: SynthSpec = match spec_path {
        Some(p) => read_json(p)?,
        None => config.synth.clone(),
    };
    let seed = config.synth_seed();
    let train = match test_out {
        Some(test_dir) => {
            let per = test_per_activity.unwrap_or(config.test_per_activity);
            let (train, test) = generate_split(&spec, seed, per)?;
            save_corpus(test_dir, &test)?;
            println!("test: {} videos, {} frames -> {}", test.videos.len(), test.total_frames(), test_dir.display());
            train
        }
        None => generate(&spec, seed)?,
    };
    save_corpus(out, &train)?;
    println!("train: {} videos, {} frames -> {}", train.videos.len(), train.total_frames(), out.display());
    Ok(())
}

fn train_gen(corpus_path: &Path, cfg: &ConfigArgs, epochs: Option<usize>, out: &Path) -> Result<()> {
    let mut config = load_config(cfg)?;
    if let Some(e) = epochs {
        config.tca.epochs = e;
        config.tca.validate()?;
    }
    let corpus = corpus_at(corpus_path)?;
    let (model, trace) = train_tca_with(&corpus, &config.tca, |epoch, loss| {
        println!(
            "epoch {:>5}  loss {:.6}  recon {:.6}  kl {:.6}",
            epoch + 1,
            loss.total,
            loss.recon,
            loss.kl
        );
    })?;
    let manifest = ModelManifest {
        dims: model.dims(),
        hidden: config.tca.hidden,
        config: config.tca.clone(),
        corpus: corpus.provenance.clone(),
        vocabulary: corpus.vocabulary.names().to_vec(),
        final_loss: trace.epochs.last().copied(),
    };
    write_model(out, &model, &manifest)?;
    println!("model -> {}", out.display());
    Ok(())
}

fn sample(corpus_path: &Path, gamma: Option<f64>, cfg: &ConfigArgs, out: &Path) -> Result<()> {
    let mut config = load_config(cfg)?;
    if let Some(g) = gamma {
        config.sampler.gamma = g;
    }
    let corpus = corpus_at(corpus_path)?;
    let selection = fps_select(&corpus, &config.sampler)?;
    println!(
        "pick   1  {}  total distance {:.4}",
        selection.video_ids[0], selection.first_total_distance
    );
    for (i, d) in selection.min_distance_trace.iter().enumerate() {
        println!("pick {:>3}  {}  min distance {:.4}", i + 2, selection.video_ids[i + 1], d);
    }
    write_json(out, &selection)?;
    println!("{} of {} videos -> {}", selection.budget, corpus.videos.len(), out.display());
    Ok(())
}

fn method_of(opts: &CondenseArgs) -> Method {
    match opts.baseline {
        None => Method::Inverted,
        Some(Baseline::Mean) => Method::Mean,
        Some(Baseline::Coreset) => Method::Coreset,
        Some(Baseline::Random) => Method::Random,
        Some(Baseline::Encoded) => Method::Encoded,
        Some(Baseline::EncodedPerframe) => Method::EncodedPerFrame,
    }
}

fn apply_condense_args(config: &mut PipelineConfig, opts: &CondenseArgs) -> Result<()> {
    let c = &mut config.condense;
    c.method = method_of(opts);
    if let Some(k) = opts.k {
        c.inversion.instances = Instances::Fixed(k);
    }
    if opts.per_frame {
        c.inversion.instances = Instances::PerFrame;
    }
    if let Some(n) = opts.iters {
        c.inversion.iterations = n;
    }
    if let Some(lr) = opts.lr {
        c.inversion.learning_rate = lr;
    }
    match opts.init {
        Some(Init::Prior) => c.inversion.init = InitPolicy::PriorSample,
        Some(Init::Encoded) => c.inversion.init = InitPolicy::EncodedWarmStart,
        None => {}
    }
    c.inversion.validate()?;
    Ok(())
}

fn selection_for(path: Option<&Path>, corpus: &Corpus) -> Result<Selection> {
    let Some(path) = path else {
        return Ok(Selection::all(corpus));
    };
    let selection: Selection = read_json(path)?;
    for (&i, id) in selection.indices.iter().zip(&selection.video_ids) {
        if corpus.videos.get(i).map(|v| &v.id) != Some(id) {
            return Err(Error::Config(format!(
                "{} does not match the corpus: index {i} is not video {id}",
                path.display()
            ))
            .into());
        }
    }
    Ok(selection)
}

fn optional_model(path: Option<&Path>, corpus: &Corpus, method: Method) -> Result<Option<(TcaModel, ModelManifest)>> {
    match path {
        Some(p) => Ok(Some(model_at(p, corpus)?)),
        None if method.needs_decoder() => {
            Err(Error::Config(format!("--model is required for method {}", method.name())).into())
        }
        None => Ok(None),
    }
}

fn condense(
    corpus_path: &Path,
    model_path: Option<&Path>,
    selection_path: Option<&Path>,
    opts: &CondenseArgs,
    cfg: &ConfigArgs,
    out: &Path,
) -> Result<()> {
    let mut config = load_config(cfg)?;
    apply_condense_args(&mut config, opts)?;
    let corpus = corpus_at(corpus_path)?;
    let selection = selection_for(selection_path, &corpus)?;
    let model = optional_model(model_path, &corpus, config.condense.method)?;
    let mut dataset = condense_corpus(&corpus, model.as_ref().map(|m| &m.0), &selection, &config.condense)?;
    dataset.manifest.provenance = json!({
        "corpus": corpus.provenance,
        "model": model.as_ref().map(|m| &m.1.config),
        "seed": config.seed,
    });
    write_condensed(out, &dataset)?;
    let s = &dataset.manifest.storage;
    println!(
        "{}: {} videos, {} segments, mean segment mse {:.6}, latent {} B, decoder {} B, ratio {}",
        config.condense.method.name(),
        s.kept_videos,
        s.kept_segments,
        dataset.mean_segment_loss(),
        s.latent_bytes,
        s.decoder_bytes,
        s.headline_ratio.map_or("n/a".to_string(), |r| format!("{r:.2}x")),
    );
    println!("archive -> {}", out.display());
    Ok(())
}

fn decode(archive: &Path, out: &Path) -> Result<()> {
    let dataset = read_condensed(archive).with_context(|| format!("reading {}", archive.display()))?;
    let corpus = decode_dataset(&dataset)?;
    save_corpus(out, &corpus)?;
    println!("{} videos, {} frames -> {}", corpus.videos.len(), corpus.total_frames(), out.display());
    Ok(())
}

fn train(corpus_path: &Path, probe_path: Option<&Path>, cfg: &ConfigArgs, out: &Path) -> Result<()> {
    let probe_config: ProbeConfig = match probe_path {
        Some(p) => {
            let c: ProbeConfig = read_json(p)?;
            c.validate()?;
            c
        }
        None => load_config(cfg)?.probe,
    };
    let corpus = corpus_at(corpus_path)?;
    let (probe, losses) = train_probe(&corpus, &probe_config)?;
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        println!(
            "{} epochs: loss {:.4} -> {:.4} (cls {:.4}, smooth {:.4})",
            losses.len(),
            first.total,
            last.total,
            last.cls,
            last.smooth
        );
    }
    write_probe(out, &probe)?;
    println!("probe -> {}", out.display());
    Ok(())
}

fn eval(probe_path: &Path, test_path: &Path, condensed: Option<&Path>, out: &Path) -> Result<()> {
    let probe = read_probe(probe_path).with_context(|| format!("reading {}", probe_path.display()))?;
    let test = corpus_at(test_path)?;
    let (storage, condensed_config) = match condensed {
        Some(p) => {
            let d = read_condensed(p).with_context(|| format!("reading {}", p.display()))?;
            let m = d.manifest;
            let summary = json!({
                "method": m.method,
                "config": m.config,
                "gamma": m.selection.gamma,
                "videos": m.selection.video_ids,
                "provenance": m.provenance,
            });
            (Some(m.storage), summary)
        }
        None => (None, serde_json::Value::Null),
    };
    let config = json!({"probe": probe.config, "condensed": condensed_config, "test": test.provenance});
    let report = evaluate_report(&probe, &test, storage, config)?;
    let m = &report.metrics;
    println!(
        "acc {:.2}  edit {:.2}  f1@10 {:.2}  f1@25 {:.2}  f1@50 {:.2}",
        m.accuracy, m.edit, m.f1_10, m.f1_25, m.f1_50
    );
    write_json(out, &report)?;
    println!("report -> {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_sweep(
    corpus_path: &Path,
    test_path: &Path,
    model_path: Option<&Path>,
    param: Param,
    values: &[f64],
    opts: &CondenseArgs,
    cfg: &ConfigArgs,
    out: &Path,
) -> Result<()> {
    let mut config = load_config(cfg)?;
    apply_condense_args(&mut config, opts)?;
    let corpus = corpus_at(corpus_path)?;
    let test = corpus_at(test_path)?;
    let model = optional_model(model_path, &corpus, config.condense.method)?;
    let param = match param {
        Param::Gamma => SweepParam::Gamma,
        Param::K => SweepParam::K,
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let cells = sweep(&corpus, &test, model.as_ref().map(|m| &m.0), &config, param, values, |cell, _| {
        let path = out.join(format!("cell-{}-{}.json", param.name(), cell.value));
        write_json(&path, cell)?;
        println!(
            "{}={} acc {:.2} edit {:.2} mse {:.6}",
            param.name(),
            cell.value,
            cell.report.metrics.accuracy,
            cell.report.metrics.edit,
            cell.mean_segment_loss
        );
        Ok(())
    })?;
    write_json(&out.join("summary.json"), &cells)?;
    let table = sweep_table(&cells);
    segcond_core::io::write_atomic(&out.join("summary.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct Spread {
    min: f64,
    mean: f64,
    max: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Serialize)]
struct ArchiveStats {
    method: Method,
    videos: usize,
    segments: usize,
    frames: usize,
    storage: StorageReport,
    segment_loss: Option<Spread>,
    loss_histogram: Option<Histogram>,
    /// Per-segment `ℓ·D / (codes · code width)`; absent when nothing is stored.
    condensation_factor: Option<Spread>,
}

const HISTOGRAM_BINS: usize = 10;

fn histogram(values: &[f64]) -> Option<Histogram> {
    let s = Spread::of(values)?;
    let width = (s.max - s.min) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0; HISTOGRAM_BINS];
    for v in values {
        let bin = if width > 0.0 { ((v - s.min) / width) as usize } else { 0 };
        counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    Some(Histogram {
        lo: s.min,
        hi: s.max,
        counts,
    })
}

fn archive_stats(d: &CondensedDataset) -> Result<ArchiveStats> {
    let m = &d.manifest;
    let segments: Vec<_> = d.videos.iter().flat_map(|v| &v.segments).collect();
    let losses: Vec<f64> = segments.iter().map(|s| s.loss).collect();
    let mut factors = Vec::with_capacity(segments.len());
    for s in &segments {
        if s.codes.rows() > 0 {
            factors.push(condensation_factor(s.length, m.feature_dim, s.codes.rows(), s.codes.cols())?);
        }
    }
    Ok(ArchiveStats {
        method: m.method,
        videos: d.videos.len(),
        segments: segments.len(),
        frames: segments.iter().map(|s| s.length).sum(),
        storage: m.storage.clone(),
        segment_loss: Spread::of(&losses),
        loss_histogram: histogram(&losses),
        condensation_factor: Spread::of(&factors),
    })
}

fn stats(archive: &Path, out: Option<&Path>) -> Result<()> {
    let dataset = read_condensed(archive).with_context(|| format!("reading {}", archive.display()))?;
    let s = archive_stats(&dataset)?;
    let st = &s.storage;
    println!("method            {}", s.method.name());
    println!("videos            {} of {}", st.kept_videos, st.source_videos);
    println!("segments          {} ({} frames)", s.segments, s.frames);
    println!("original bytes    {}", st.original_bytes);
    println!("latent bytes      {}", st.latent_bytes);
    println!("annotation bytes  {}", st.annotation_bytes);
    println!("decoder bytes     {}", st.decoder_bytes);
    match st.headline_ratio {
        Some(r) => println!("headline ratio    {r:.2}x"),
        None => println!("headline ratio    n/a (no stored codes)"),
    }
    if let Some(f) = &s.condensation_factor {
        println!("condensation      min {:.2}  mean {:.2}  max {:.2}", f.min, f.mean, f.max);
    }
    if let Some(h) = &s.loss_histogram {
        println!("segment mse       {:.6} .. {:.6}", h.lo, h.hi);
        let peak = h.counts.iter().copied().max().unwrap_or(0).max(1);
        let width = (h.hi - h.lo) / HISTOGRAM_BINS as f64;
        for (i, c) in h.counts.iter().enumerate() {
            let bar = "#".repeat((c * 40).div_ceil(peak));
            println!("  {:>10.6}  {:>5}  {bar}", h.lo + width * i as f64, c);
        }
    }
    if let Some(out) = out {
        write_json(out, &s)?;
    }
    Ok(())
}
