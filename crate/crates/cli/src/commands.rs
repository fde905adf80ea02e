use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use idgap::gan::{generate_identity_sets, train, LatentSpec, SdGanModel, TripletConfig};
use idgap::metrics::{
    default_grid, far_curve, frr_at_far, frr_at_threshold, frr_curve, nn_far_curve, overfit_report,
    roc_curve, ComparisonSpec, Engine, FarCurve, OperatingPoint, ThresholdGrid,
    DEFAULT_GRID_POINTS,
};
use idgap::synthgen::{gen_identity_clouds, make_fake_set, MixtureSpec, PathologySpec};
use idgap::{load_embeddings, EmbeddingSet, Error, FileFormat, Result, ScoreScale};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{
    parse_grid, parse_scale, EvalArgs, FarArgs, GenArgs, Mode, ReportArgs, SynthArgs, TrainArgs,
    VerifyArgs,
};

/// Files written by a command, relative to its output directory.
struct Run {
    out: PathBuf,
    written: Vec<String>,
}

impl Run {
    fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
        Ok(Run {
            out: out.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.out.join(name)
    }

    fn write_with(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
    ) -> Result<()> {
        let path = self.path(name);
        let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_error(&path, e))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    fn write_far(&mut self, name: &str, curve: &FarCurve) -> Result<()> {
        self.write_with(name, |w| curve.write_csv(w))
    }

    fn write_embeddings(&mut self, name: &str, set: &EmbeddingSet) -> Result<()> {
        let path = self.path(name);
        if set.labels().is_some() {
            self.written.push(format!("{name}.labels"));
        }
        set.save_binary(&path)
    }

    /// Write `manifest.json` echoing the resolved configuration.
    fn finish(mut self, command: &str, config: Value) -> Result<()> {
        let outputs = std::mem::take(&mut self.written);
        let manifest = json!({
            "tool": "idgap",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "outputs": outputs,
        });
        self.write_json("manifest.json", &manifest)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load(path: &Path, labels: Option<&Path>) -> Result<EmbeddingSet> {
    let in_file = |e: Error| match e {
        Error::Row { .. } | Error::NonFinite(_) | Error::Invalid(_) => Error::Format {
            context: path.display().to_string(),
            message: e.to_string(),
        },
        other => other,
    };
    let set = load_embeddings(path, FileFormat::from_path(path)).map_err(in_file)?;
    let set = match labels {
        Some(l) => set.with_labels(idgap::embeddings::read_labels(l)?)?,
        None => set,
    };
    set.normalize().map_err(in_file)
}

fn engine(eval: &EvalArgs) -> Result<Engine> {
    match eval.workers {
        Some(w) => Engine::new(w, Engine::default().block_size()),
        None => Ok(Engine::default()),
    }
}

fn grid_or_default(
    eval: &EvalArgs,
    engine: &Engine,
    specs: &[ComparisonSpec<'_>],
) -> Result<ThresholdGrid> {
    match &eval.grid {
        Some(text) => parse_grid(text),
        None => default_grid(engine, specs, DEFAULT_GRID_POINTS),
    }
}

fn eval_config(eval: &EvalArgs, engine: &Engine, scale: ScoreScale, grid: &ThresholdGrid) -> Value {
    json!({
        "grid": {
            "spec": eval.grid,
            "min": grid.values()[0],
            "max": grid.values()[grid.len() - 1],
            "points": grid.len(),
        },
        "scale": { "alpha": scale.alpha(), "beta": scale.beta() },
        "workers": engine.workers(),
        "out": eval.out,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn far(args: &FarArgs) -> Result<()> {
    let engine = engine(&args.eval)?;
    let scale = parse_scale(&args.eval.scale)?;
    let real = load(&args.real, args.labels.as_deref())?;
    let fake = args.fake.as_deref().map(|p| load(p, None)).transpose()?;
    let mut run = Run::new(&args.eval.out)?;

    let need_fake = || {
        fake.as_ref()
            .ok_or_else(|| Error::Invalid("--mode between needs --fake".into()))
    };
    let (grid, mut manifest_extra) = match (args.mode, &fake) {
        (None, Some(fake)) => {
            // full report: all three comparisons, curves and flags
            let grid = args.eval.grid.as_deref().map(parse_grid).transpose()?;
            let report = overfit_report(&engine, &real, fake, scale, grid.as_ref())?;
            for (prefix, set) in [("", &report.all_pairs), ("nn_", &report.nearest_neighbour)] {
                if prefix.is_empty() || args.nn {
                    run.write_far(&format!("{prefix}real_vs_real_far.csv"), &set.real_vs_real)?;
                    run.write_far(&format!("{prefix}fake_vs_real_far.csv"), &set.fake_vs_real)?;
                    run.write_far(&format!("{prefix}fake_vs_fake_far.csv"), &set.fake_vs_fake)?;
                }
            }
            run.write_json("report.json", &report_summary(&report))?;
            let grid = report.all_pairs.real_vs_real.grid.clone();
            (
                grid,
                json!({ "overfitting": report.overfitting, "collapse": report.collapse }),
            )
        }
        (mode, _) => {
            let mode = mode.unwrap_or(Mode::Within);
            let rr = ComparisonSpec::within_nonmated(&real, scale);
            let fr = match mode {
                Mode::Between => Some(ComparisonSpec::between(need_fake()?, &real, scale)),
                _ => fake
                    .as_ref()
                    .map(|f| ComparisonSpec::between(f, &real, scale)),
            };
            let specs: Vec<ComparisonSpec<'_>> = match mode {
                Mode::Within => vec![rr],
                Mode::Between => fr.into_iter().collect(),
                Mode::Nn => std::iter::once(rr).chain(fr).collect(),
            };
            let grid = grid_or_default(&args.eval, &engine, &specs)?;
            let names = |spec: &ComparisonSpec<'_>| {
                if spec.gallery.is_some() {
                    "fake_vs_real"
                } else {
                    "real_vs_real"
                }
            };
            for spec in &specs {
                let name = names(spec);
                if mode != Mode::Nn {
                    run.write_far(
                        &format!("{name}_far.csv"),
                        &far_curve(&engine, spec, &grid)?,
                    )?;
                }
                if mode == Mode::Nn || args.nn {
                    run.write_far(
                        &format!("nn_{name}_far.csv"),
                        &nn_far_curve(&engine, spec, &grid)?,
                    )?;
                }
            }
            (grid, json!({}))
        }
    };
    let mut config = eval_config(&args.eval, &engine, scale, &grid);
    config["real"] = json!(args.real);
    config["fake"] = json!(args.fake);
    config["labels"] = json!(args.labels);
    config["mode"] = json!(args.mode);
    config["nn"] = json!(args.nn);
    if let Some(obj) = manifest_extra.as_object_mut() {
        for (k, v) in std::mem::take(obj) {
            config[k] = v;
        }
    }
    run.finish("far", config)
}

fn report_summary(report: &idgap::metrics::OverfitReport) -> Value {
    json!({
        "real": report.real,
        "fake": report.fake,
        "fake_labeled": report.fake_labeled,
        "overfitting": report.overfitting,
        "collapse": report.collapse,
        "all_pairs_flags": report.all_pairs_flags,
        "nearest_neighbour_flags": report.nearest_neighbour_flags,
        "thresholds": report.thresholds,
        "totals": {
            "real_vs_real": report.all_pairs.real_vs_real.total,
            "fake_vs_real": report.all_pairs.fake_vs_real.total,
            "fake_vs_fake": report.all_pairs.fake_vs_fake.total,
        },
    })
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let engine = engine(&args.eval)?;
    let scale = parse_scale(&args.eval.scale)?;
    let real = load(&args.real, args.labels.as_deref())?;
    let fake = load(&args.fake, None)?;
    let grid = args.eval.grid.as_deref().map(parse_grid).transpose()?;
    let report = overfit_report(&engine, &real, &fake, scale, grid.as_ref())?;
    let mut run = Run::new(&args.eval.out)?;
    run.write_json("report.json", &report_summary(&report))?;
    println!(
        "overfitting: {}  collapse: {}",
        if report.overfitting {
            "FLAGGED"
        } else {
            "none"
        },
        if report.collapse { "FLAGGED" } else { "none" }
    );
    let mut config = eval_config(
        &args.eval,
        &engine,
        scale,
        &report.all_pairs.real_vs_real.grid,
    );
    config["real"] = json!(args.real);
    config["fake"] = json!(args.fake);
    config["labels"] = json!(args.labels);
    run.finish("report", config)
}

#[derive(Serialize)]
struct VerifySummary {
    mated_total: u64,
    nonmated_total: u64,
    frr_at_threshold: Option<ThresholdPoint>,
    frr_at_far: Option<OperatingPoint>,
}

#[derive(Serialize)]
struct ThresholdPoint {
    threshold: f64,
    frr: f64,
}

/// Shared body of `frr` and `roc`.
pub fn verify(args: &VerifyArgs, roc: bool) -> Result<()> {
    let engine = engine(&args.eval)?;
    let scale = parse_scale(&args.eval.scale)?;
    let set = load(&args.real, args.labels.as_deref())?;
    let mated = ComparisonSpec::within_mated(&set, scale);
    let nonmated = ComparisonSpec::within_nonmated(&set, scale);
    if let Some(t) = args.target_far {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Invalid(format!(
                "--target-far must lie in (0, 1], got {t}"
            )));
        }
    }
    // operating points first: they fail fast on empty or too-small sets
    let at_threshold = args
        .threshold
        .map(|t| {
            frr_at_threshold(&engine, &mated, t).map(|frr| ThresholdPoint { threshold: t, frr })
        })
        .transpose()?;
    let at_far = args
        .target_far
        .map(|t| frr_at_far(&engine, &mated, &nonmated, t))
        .transpose()?;
    let grid = grid_or_default(&args.eval, &engine, &[mated, nonmated])?;
    let frr = frr_curve(&engine, &mated, &grid)?;
    let mut run = Run::new(&args.eval.out)?;
    run.write_with("frr.csv", |w| frr.write_csv(w))?;
    let mut nonmated_total = nonmated.total_pairs();
    if roc {
        let far = far_curve(&engine, &nonmated, &grid)?;
        nonmated_total = far.total;
        run.write_far("far.csv", &far)?;
        let roc = roc_curve(&engine, &mated, &nonmated, &grid)?;
        run.write_with("roc.csv", |w| roc.write_csv(w))?;
    }
    let summary = VerifySummary {
        mated_total: frr.total,
        nonmated_total,
        frr_at_threshold: at_threshold,
        frr_at_far: at_far,
    };
    let name = if roc { "roc.json" } else { "frr.json" };
    run.write_json(name, &summary)?;
    let mut config = eval_config(&args.eval, &engine, scale, &grid);
    config["real"] = json!(args.real);
    config["labels"] = json!(args.labels);
    config["target_far"] = json!(args.target_far);
    config["threshold"] = json!(args.threshold);
    run.finish(if roc { "roc" } else { "frr" }, config)
}

/// Everything `train` needs; missing JSON fields take these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Synthetic training world, used unless `data_path` is set.
    pub mixture: MixtureSpec,
    /// Labeled embedding file to train on instead of `mixture`.
    pub data_path: Option<PathBuf>,
    pub latent: LatentSpec,
    pub generator_hidden: Vec<usize>,
    pub clip: f64,
    pub steps: usize,
    pub seed: u64,
    pub training: TripletConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mixture: MixtureSpec {
                k: 500,
                m: 10,
                dim: 8,
                within_sigma: 0.2,
                seed: 1,
            },
            data_path: None,
            latent: LatentSpec { d_id: 4, d_iv: 4 },
            generator_hidden: vec![64, 64],
            clip: 0.05,
            steps: 2000,
            seed: 0,
            training: TripletConfig::default(),
        }
    }
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let mut config: TrainConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    let latent = LatentSpec::new(config.latent.d_id, config.latent.d_iv)?;
    config.training.validate()?;
    let data = match &config.data_path {
        Some(path) => load(path, None)?,
        None => gen_identity_clouds(&config.mixture)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = SdGanModel::new(
        latent,
        data.dim(),
        &config.generator_hidden,
        config.clip,
        &mut rng,
    )?;
    let (model, trace) = train(&start, &data, &config.training, config.steps, config.seed)?;
    let mut run = Run::new(&args.out)?;
    let path = run.path("model.sdgt");
    model.save(&path)?;
    run.write_with("trace.csv", |w| trace.write_csv(w))?;
    let mut resolved = serde_json::to_value(&config).expect("config serializes");
    resolved["workers"] = json!(1);
    resolved["out"] = json!(args.out);
    run.finish("train", resolved)
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let model = SdGanModel::load(&args.checkpoint)?;
    let set = generate_identity_sets(&model, args.k, args.m, args.seed)?;
    let mut run = Run::new(&args.out)?;
    run.write_embeddings("generated.emb", &set)?;
    let config = serde_json::to_value(args).expect("args serialize");
    run.finish("gen", config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub mixture: MixtureSpec,
    #[serde(default)]
    pub fake: Option<FakeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FakeSpec {
    #[serde(default)]
    pub pathology: PathologySpec,
    pub n: usize,
    pub seed: u64,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = read_json(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.mixture.seed = seed;
    }
    let real = gen_identity_clouds(&spec.mixture)?;
    let fake = spec
        .fake
        .as_ref()
        .map(|f| make_fake_set(&real, &f.pathology, f.n, f.seed))
        .transpose()?;
    let mut run = Run::new(&args.out)?;
    run.write_embeddings("real.emb", &real)?;
    if let Some(fake) = &fake {
        run.write_embeddings("fake.emb", fake)?;
    }
    let mut config = serde_json::to_value(&spec).expect("spec serializes");
    config["out"] = json!(args.out);
    run.finish("synth", config)
}
