//! Command-line front end: dataset generation, training, evaluation, filter
//! studies and the end-to-end pipeline. Every run writes its results as CSV,
//! plots as SVG, and a `<name>.meta.json` file holding everything needed to
//! repeat it.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use contactiso::classifiers::cv::{grid_search, GridSpec};
use contactiso::classifiers::fnn::TrainConfig;
use contactiso::experiments::{
    dataset_from_csv, dataset_to_csv, generate_dataset, observer_step_response, run_classification_study, run_pf_study,
    run_pipeline, DatasetConfig, LabelMode, LabeledSample, NoiseConfig, PfFeed, PfStudyConfig, PipelineConfig,
};
use contactiso::observer::fit_time_constant;
use contactiso::report::{confusion_svg, csv_row, grid_svg, line_svg, Series};
use contactiso::{
    default_model, fnn_train, load_model, Arch, BodyLabel, Classifier, ConfusionMatrix, DtParams, FnnModel, RobotModel,
};

#[derive(Parser, Debug)]
#[command(name = "contactiso", version, about = "Collision isolation and identification for a planar 3-RRR robot")]
struct Cli {
    /// Robot model file (TOML). The bundled symmetric model is used when omitted.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Master seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads. Defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a balanced labelled feature dataset.
    GenDataset(GenArgs),
    /// Train the feed-forward classifier on a dataset.
    TrainFnn(TrainArgs),
    /// Cross-validated grid search over depth, width and L2 penalty.
    Gridsearch(GridArgs),
    /// Score the decision tree or a trained network on a dataset.
    Eval(EvalArgs),
    /// Run the second-link particle filter on a synthetic contact.
    Pf(PfArgs),
    /// Step-force rollout of the momentum observer with a fitted time constant.
    ObserverStepTest(StepArgs),
    /// Simulate, detect, classify and isolate a batch of contacts.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    /// Exact kinetostatic projections at the deflected pose.
    Ideal,
    /// Observer estimates with sensor noise and model mismatch.
    Noisy,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Relative inertia error of the observer model (noisy mode).
    #[arg(long)]
    mass_mismatch: Option<f64>,
    /// Relative friction error of the observer model (noisy mode).
    #[arg(long)]
    friction_mismatch: Option<f64>,
    /// Delay between detection and feature extraction (s).
    #[arg(long)]
    dwell: Option<f64>,
}

impl NoiseArgs {
    fn noise(&self, base: NoiseConfig) -> NoiseConfig {
        NoiseConfig {
            mass_mismatch: self.mass_mismatch.unwrap_or(base.mass_mismatch),
            friction_mismatch: self.friction_mismatch.unwrap_or(base.friction_mismatch),
            dwell: self.dwell.unwrap_or(base.dwell),
            ..base
        }
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 7000)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Mode::Ideal)]
    mode: Mode,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Stem of the output files.
    #[arg(long, default_value = "dataset")]
    name: String,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 4)]
    n_hl: usize,
    #[arg(long, default_value_t = 17)]
    n_neu: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    #[arg(long, default_value = "fnn")]
    name: String,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 2)]
    max_hl: usize,
    #[arg(long, default_value_t = 10)]
    max_neu: usize,
    #[arg(long, default_value_t = 1)]
    neu_step: usize,
    /// Comma-separated L2 penalties.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,1")]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 300)]
    max_epochs: usize,
    #[arg(long, default_value = "grid")]
    name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Which {
    Dt,
    Fnn,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_enum)]
    classifier: Which,
    #[arg(long)]
    dataset: PathBuf,
    /// Trained network, required for `--classifier fnn`.
    #[arg(long)]
    fnn_model: Option<PathBuf>,
    /// Decision-tree distance threshold (m).
    #[arg(long)]
    eps_d: Option<f64>,
    /// Decision-tree angle threshold (deg).
    #[arg(long)]
    eps_alpha: Option<f64>,
    /// Decision-tree torque threshold (N m).
    #[arg(long)]
    eps_tau: Option<f64>,
    #[arg(long, default_value = "eval")]
    name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Feed {
    Exact,
    Observer,
}

#[derive(Args, Debug)]
struct PfArgs {
    /// Study description (JSON); defaults apply to missing fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    feed: Option<Feed>,
    #[arg(long, default_value = "pf")]
    name: String,
}

#[derive(Args, Debug)]
struct StepArgs {
    /// Applied platform wrench: force x (N).
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    fx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    fy: f64,
    /// Applied moment (N m).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mz: f64,
    /// Rollout length (s).
    #[arg(long, default_value_t = 0.4)]
    duration: f64,
    #[arg(long, default_value = "observer_step")]
    name: String,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, default_value_t = 14)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Mode::Ideal)]
    mode: Mode,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, default_value_t = 150)]
    pf_steps: usize,
    #[arg(long, default_value = "pipeline")]
    name: String,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T> = std::result::Result<T, Failure>;

trait Classify<T> {
    fn config(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn config(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Bad inputs map to the configuration exit code, everything else is a runtime failure.
fn core<T>(r: contactiso::Result<T>) -> Outcome<T> {
    use contactiso::Error as E;
    r.map_err(|e| match e {
        E::Io { .. } | E::Parse(_) | E::Validation(_) | E::InvalidArgument(_) | E::DimensionMismatch { .. } => {
            Failure::Config(e.into())
        }
        _ => Failure::Runtime(e.into()),
    })
}

struct Run {
    model: RobotModel,
    model_path: Option<PathBuf>,
    seed: u64,
    out: PathBuf,
}

impl Run {
    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn write(&self, file: &str, text: &str) -> Outcome<String> {
        let p = self.path(file);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display())).runtime()?;
        Ok(file.to_string())
    }

    fn meta(&self, command: &str, name: &str, config: Value, outputs: &[String], results: Value) -> Outcome<()> {
        let meta = json!({
            "tool": "contactiso",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.seed,
            "model": {
                "name": self.model.name,
                "hash": self.model.hash(),
                "path": self.model_path.as_ref().map(|p| p.display().to_string()),
            },
            "config": config,
            "outputs": outputs,
            "results": results,
        });
        let text = serde_json::to_string_pretty(&meta).context("serializing metadata").runtime()? + "\n";
        self.write(&format!("{name}.meta.json"), &text)?;
        Ok(())
    }
}

fn to_value<T: Serialize>(v: &T) -> Outcome<Value> {
    serde_json::to_value(v).context("serializing configuration").runtime()
}

fn read_dataset(path: &Path) -> Outcome<Vec<LabeledSample>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).config()?;
    let samples = core(dataset_from_csv(&text))?;
    if samples.is_empty() {
        return Err(Failure::Config(anyhow!("{} holds no samples", path.display())));
    }
    Ok(samples)
}

fn inputs(samples: &[LabeledSample]) -> (Vec<[f64; 12]>, Vec<BodyLabel>) {
    samples.iter().map(|s| (s.features.inputs(), s.label)).unzip()
}

fn label_mode(mode: Mode, noise: &NoiseArgs) -> LabelMode {
    match mode {
        Mode::Ideal => LabelMode::Ideal,
        Mode::Noisy => LabelMode::Observer(noise.noise(NoiseConfig::noisy())),
    }
}

fn confusion_json(cm: &ConfusionMatrix) -> Value {
    let diag: serde_json::Map<String, Value> =
        BodyLabel::ALL.iter().zip(cm.diagonal()).map(|(b, d)| (b.to_string(), json!(d))).collect();
    json!({ "samples": cm.total(), "accuracy": cm.accuracy(), "diagonal": diag })
}

fn gen_dataset(run: &Run, a: &GenArgs) -> Outcome<()> {
    let cfg = DatasetConfig {
        n: a.n,
        mode: label_mode(a.mode, &a.noise),
        ..DatasetConfig::ideal(a.n, run.seed)
    };
    let ds = core(generate_dataset(&cfg, &run.model))?;
    let csv = run.write(&format!("{}.csv", a.name), &dataset_to_csv(&ds.samples))?;
    let counts = ds.class_counts();
    println!("{} samples ({:?} per class), {} dropped draws", ds.samples.len(), counts, ds.drops.total());
    run.meta(
        "gen-dataset",
        &a.name,
        json!({ "mode": a.mode, "dataset": to_value(&cfg)? }),
        &[csv],
        json!({ "samples": ds.samples.len(), "class_counts": counts, "drops": to_value(&ds.drops)? }),
    )
}

fn train(run: &Run, a: &TrainArgs) -> Outcome<()> {
    let samples = read_dataset(&a.dataset)?;
    let (xs, ys) = inputs(&samples);
    let cfg = TrainConfig {
        lambda: a.lambda,
        max_epochs: a.max_epochs,
        seed: run.seed,
        ..TrainConfig::default()
    };
    let arch = Arch {
        n_hl: a.n_hl,
        n_neu: a.n_neu,
    };
    let (net, rep) = core(fnn_train(&xs, &ys, &cfg, arch))?;
    let file = run.write(&format!("{}.txt", a.name), &net.to_text())?;
    println!(
        "trained {}x{} network: {} epochs (best {}), training accuracy {:.4}",
        a.n_hl, a.n_neu, rep.epochs, rep.best_epoch, rep.train_accuracy
    );
    run.meta(
        "train-fnn",
        &a.name,
        json!({
            "dataset": a.dataset.display().to_string(),
            "n_hl": a.n_hl, "n_neu": a.n_neu, "lambda": a.lambda,
            "max_epochs": a.max_epochs, "validation_fraction": cfg.validation_fraction,
        }),
        &[file],
        json!({ "epochs": rep.epochs, "best_epoch": rep.best_epoch, "train_loss": rep.train_loss, "train_accuracy": rep.train_accuracy }),
    )
}

fn gridsearch(run: &Run, a: &GridArgs) -> Outcome<()> {
    if a.max_hl == 0 || a.max_neu == 0 || a.neu_step == 0 || a.lambda.is_empty() {
        return Err(Failure::Config(anyhow!("grid bounds must be positive and at least one penalty given")));
    }
    let samples = read_dataset(&a.dataset)?;
    let (xs, ys) = inputs(&samples);
    let spec = GridSpec {
        folds: a.folds,
        ..GridSpec::up_to(a.max_hl, a.max_neu, a.neu_step, a.lambda.clone())
    };
    let cfg = TrainConfig {
        max_epochs: a.max_epochs,
        seed: run.seed,
        ..TrainConfig::default()
    };
    let res = core(grid_search(&xs, &ys, &spec, &cfg))?;
    let csv = run.write(&format!("{}.csv", a.name), &res.to_csv())?;
    // Surface over (depth, width), best penalty per cell.
    let surface: Vec<Vec<f64>> = spec
        .n_hl
        .iter()
        .map(|&h| {
            spec.n_neu
                .iter()
                .map(|&n| {
                    res.cells
                        .iter()
                        .filter(|c| c.arch == Arch { n_hl: h, n_neu: n })
                        .map(|c| c.mean_accuracy())
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        })
        .collect();
    let rows: Vec<String> = spec.n_hl.iter().map(|h| format!("{h} HL")).collect();
    let cols: Vec<String> = spec.n_neu.iter().map(|n| n.to_string()).collect();
    let svg = run.write(
        &format!("{}.svg", a.name),
        &grid_svg(&rows, &cols, &surface, "validation accuracy (best penalty)"),
    )?;
    let best = res.best();
    let (narrow, wide) = res.narrow_vs_wide();
    println!(
        "best: {} hidden layers x {} neurons, lambda {}: mean accuracy {:.4}",
        best.arch.n_hl,
        best.arch.n_neu,
        best.lambda,
        best.mean_accuracy()
    );
    match (narrow, wide) {
        (Some(n), Some(w)) => println!("best with fewer than 10 neurons: {n:.4}; with 10 or more: {w:.4}"),
        (Some(n), None) => println!("best with fewer than 10 neurons: {n:.4}; no wider cells in the grid"),
        _ => {}
    }
    run.meta(
        "gridsearch",
        &a.name,
        json!({
            "dataset": a.dataset.display().to_string(),
            "n_hl": spec.n_hl, "n_neu": spec.n_neu, "lambda": spec.lambda,
            "folds": spec.folds, "max_epochs": a.max_epochs,
        }),
        &[csv, svg],
        json!({
            "best": { "n_hl": best.arch.n_hl, "n_neu": best.arch.n_neu, "lambda": best.lambda, "mean_accuracy": best.mean_accuracy() },
            "best_narrow": narrow, "best_wide": wide,
        }),
    )
}

fn eval(run: &Run, a: &EvalArgs) -> Outcome<()> {
    let samples = read_dataset(&a.dataset)?;
    let d = DtParams::default();
    let params = DtParams {
        eps_d: a.eps_d.unwrap_or(d.eps_d),
        eps_alpha: a.eps_alpha.unwrap_or(d.eps_alpha),
        eps_tau: a.eps_tau.unwrap_or(d.eps_tau),
    };
    let (classifier, config): (Box<dyn Classifier>, Value) = match a.classifier {
        Which::Dt => {
            core(params.validate())?;
            (Box::new(params), json!({ "classifier": "dt", "params": to_value(&params)? }))
        }
        Which::Fnn => {
            let path = a
                .fnn_model
                .as_ref()
                .ok_or_else(|| Failure::Config(anyhow!("--fnn-model is required with --classifier fnn")))?;
            let net = core(FnnModel::load(path))?;
            (Box::new(net), json!({ "classifier": "fnn", "fnn_model": path.display().to_string() }))
        }
    };
    let cm = run_classification_study(&samples, classifier.as_ref());
    let csv = run.write(&format!("{}_confusion.csv", a.name), &cm.to_csv())?;
    let title = format!("{} on {} samples: accuracy {:.1}%", a.name, cm.total(), 100.0 * cm.accuracy());
    let svg = run.write(&format!("{}_confusion.svg", a.name), &confusion_svg(&cm, &title))?;
    println!("accuracy {:.4} on {} samples", cm.accuracy(), cm.total());
    for (b, v) in BodyLabel::ALL.iter().zip(cm.diagonal()) {
        println!("  {b:<5} {v:.3}");
    }
    let mut config = config;
    config["dataset"] = json!(a.dataset.display().to_string());
    run.meta("eval", &a.name, config, &[csv, svg], confusion_json(&cm))
}

fn pf(run: &Run, a: &PfArgs) -> Outcome<()> {
    let mut cfg: PfStudyConfig = match &a.scenario {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).config()?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display())).config()?
        }
        None => PfStudyConfig::default(),
    };
    cfg.seed = run.seed;
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(f) = a.feed {
        cfg.feed = match f {
            Feed::Exact => PfFeed::Exact,
            Feed::Observer => PfFeed::Observer,
        };
    }
    if cfg.chain > 2 || !(0.0..=1.0).contains(&cfg.abscissa) || cfg.steps == 0 {
        return Err(Failure::Config(anyhow!("chain must be 0..=2, abscissa in [0, 1] and steps positive")));
    }
    core(cfg.pf().validate())?;
    let trace = core(run_pf_study(&run.model, &cfg))?;
    let csv = run.write(&format!("{}_trace.csv", a.name), &trace.to_csv())?;
    let hist = run.write(&format!("{}_hist.csv", a.name), &trace.histograms_csv())?;
    let ms = |f: &dyn Fn(&contactiso::experiments::PfTraceRow) -> f64| -> Vec<(f64, f64)> {
        trace.rows.iter().map(|r| (1e3 * r.t, f(r))).collect()
    };
    let dl = run.write(
        &format!("{}_dl.svg", a.name),
        &line_svg(
            &[Series {
                name: "abscissa error",
                points: ms(&|r| r.dl),
                color: "#1f77b4",
            }],
            "normalized isolation error",
            "time since filter start (ms)",
            "dl",
            Some(0.04),
        ),
    )?;
    let df = run.write(
        &format!("{}_df.svg", a.name),
        &line_svg(
            &[Series {
                name: "force error",
                points: ms(&|r| r.df),
                color: "#d62728",
            }],
            "identification error",
            "time since filter start (ms)",
            "df (N)",
            Some(4.0),
        ),
    )?;
    let last = trace.rows.last().copied();
    if let Some(r) = last {
        println!(
            "after {} steps: l = {:.4} (error {:+.4}), f = {:.3} N (error {:+.3} N), ess {:.1}",
            trace.rows.len(),
            r.l,
            r.dl,
            r.f,
            r.df,
            r.ess
        );
    }
    run.meta(
        "pf",
        &a.name,
        to_value(&cfg)?,
        &[csv, hist, dl, df],
        json!({
            "rows": trace.rows.len(),
            "chain": trace.chain,
            "t_detect": trace.t_detect,
            "zero_weight_events": trace.zero_weight_events,
            "final": last.map(|r| json!({ "l": r.l, "f": r.f, "dl": r.dl, "df": r.df, "ess": r.ess })),
        }),
    )
}

fn observer_step(run: &Run, a: &StepArgs) -> Outcome<()> {
    let w = nalgebra::Vector3::new(a.fx, a.fy, a.mz);
    if w.amax() == 0.0 || !(a.duration > 0.0) {
        return Err(Failure::Config(anyhow!("need a nonzero wrench and a positive duration")));
    }
    let x_d = nalgebra::Vector3::zeros();
    let resp = core(observer_step_response(&run.model, x_d, w, a.duration))?;
    let mut csv = String::from("t,fx_hat,fy_hat,mz_hat\n");
    for (t, f) in &resp {
        csv.push_str(&csv_row(&[*t, f[0], f[1], f[2]]));
    }
    let csv = run.write(&format!("{}.csv", a.name), &csv)?;
    let names = ["Fx", "Fy", "Mz"];
    let colors = ["#1f77b4", "#ff7f0e", "#2ca02c"];
    let ts: Vec<f64> = resp.iter().map(|(t, _)| *t).collect();
    let mut series = Vec::new();
    let mut fits = serde_json::Map::new();
    for k in 0..3 {
        if w[k] == 0.0 {
            continue;
        }
        let y: Vec<f64> = resp.iter().map(|(_, f)| f[k]).collect();
        let tau = fit_time_constant(&ts, &y, w[k], 1e-3, 1.0);
        let at = |t: f64| {
            let i = ts.iter().position(|&s| s >= t - 1e-12).unwrap_or(ts.len() - 1);
            y[i] / w[k]
        };
        let gain = run.model.observer_gain[k];
        println!("{}: time constant {:.2} ms (1/k_o = {:.2} ms), ratio at 1/k_o {:.4}", names[k], 1e3 * tau, 1e3 / gain, at(1.0 / gain));
        fits.insert(names[k].into(), json!({ "time_constant": tau, "ratio_at_inverse_gain": at(1.0 / gain) }));
        series.push(Series {
            name: names[k],
            points: ts.iter().zip(&y).map(|(t, v)| (1e3 * t, v / w[k])).collect(),
            color: colors[k],
        });
    }
    let svg = run.write(
        &format!("{}.svg", a.name),
        &line_svg(&series, "observer step response", "time (ms)", "estimate / applied", None),
    )?;
    run.meta(
        "observer-step-test",
        &a.name,
        json!({ "wrench": [a.fx, a.fy, a.mz], "duration": a.duration, "x_d": [0.0, 0.0, 0.0], "dt": 1e-3 }),
        &[csv, svg],
        Value::Object(fits),
    )
}

fn pipeline(run: &Run, a: &PipelineArgs) -> Outcome<()> {
    let cfg = PipelineConfig {
        n: a.n,
        seed: run.seed,
        noise: match a.mode {
            Mode::Ideal => a.noise.noise(NoiseConfig::default()),
            Mode::Noisy => a.noise.noise(NoiseConfig::noisy()),
        },
        pf_steps: a.pf_steps,
        ..PipelineConfig::default()
    };
    let rep = core(run_pipeline(&run.model, &cfg))?;
    let csv = run.write(&format!("{}.csv", a.name), &rep.to_csv())?;
    let cm_csv = run.write(&format!("{}_confusion.csv", a.name), &rep.confusion.to_csv())?;
    let title = format!("pipeline: accuracy {:.1}%", 100.0 * rep.confusion.accuracy());
    let cm_svg = run.write(&format!("{}_confusion.svg", a.name), &confusion_svg(&rep.confusion, &title))?;
    let pts: Vec<(f64, f64)> = rep.rows.iter().filter_map(|r| r.point_error.map(|e| (r.id as f64, 1e3 * e))).collect();
    let pf_l: Vec<(f64, f64)> = rep
        .rows
        .iter()
        .filter_map(|r| Some((r.id as f64, r.pf_estimate?.0 - r.true_abscissa?)))
        .collect();
    let iso = run.write(
        &format!("{}_isolation.svg", a.name),
        &line_svg(
            &[
                Series {
                    name: "platform point error (mm)",
                    points: pts,
                    color: "#1f77b4",
                },
                Series {
                    name: "second-link abscissa error",
                    points: pf_l,
                    color: "#d62728",
                },
            ],
            "isolation error per scenario",
            "scenario id",
            "error",
            None,
        ),
    )?;
    println!(
        "{} scenarios, classification accuracy {:.4}, {} dropped draws",
        rep.rows.len(),
        rep.confusion.accuracy(),
        rep.drops.total()
    );
    run.meta(
        "pipeline",
        &a.name,
        json!({ "mode": a.mode, "pipeline": to_value(&cfg)? }),
        &[csv, cm_csv, cm_svg, iso],
        json!({ "rows": rep.rows.len(), "drops": to_value(&rep.drops)?, "classification": confusion_json(&rep.confusion) }),
    )
}

fn execute(cli: &Cli) -> Outcome<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Failure::Config(anyhow!("--jobs must be positive")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().runtime()?;
    }
    let model = match &cli.model {
        Some(p) => core(load_model(p))?,
        None => default_model(),
    };
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display())).config()?;
    let run = Run {
        model,
        model_path: cli.model.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
    };
    log::info!("model {} ({}), seed {}", run.model.name, run.model.hash(), run.seed);
    match &cli.cmd {
        Cmd::GenDataset(a) => gen_dataset(&run, a),
        Cmd::TrainFnn(a) => train(&run, a),
        Cmd::Gridsearch(a) => gridsearch(&run, a),
        Cmd::Eval(a) => eval(&run, a),
        Cmd::Pf(a) => pf(&run, a),
        Cmd::ObserverStepTest(a) => observer_step(&run, a),
        Cmd::Pipeline(a) => pipeline(&run, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
