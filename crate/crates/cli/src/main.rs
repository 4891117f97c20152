//! `gridcast`: simulate, build datasets, train, evaluate, sweep and forecast.
//!
//! Every command prints one JSON summary line on stdout. Failures print one
//! JSON line `{"error": kind, "message": ...}` on stderr and exit nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gridcast_core::config::{short, RunConfig, WeightMode};
use gridcast_core::eval::{
    cross_validate, fold_fit_seed, penetration_sweep, report, sweep_csv, sweep_plot_csv, Reportable,
};
use gridcast_core::grid::{events_json, write_trace_csv};
use gridcast_core::io::{load_dataset, read_meta, save_dataset, write_atomic, write_json_atomic};
use gridcast_core::pipeline::{
    config_placement, dataset_from_config, fit_pipeline, manifest_for, simulate_placement, Bundle, Scenario,
};
use gridcast_core::seed::{derive_seed, digest_hex};
use gridcast_core::windowing::read_feature_csv;

#[derive(Parser)]
#[command(name = "gridcast", version, about = "Line-trip forecasting from grid measurements")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Bundled case name or case file path.
    #[arg(long, global = true)]
    case: Option<String>,
    #[arg(long, global = true)]
    penetration: Option<f64>,
    #[arg(long, global = true)]
    days: Option<usize>,
    #[arg(long, global = true)]
    step_seconds: Option<u32>,
    #[arg(long, global = true)]
    stress_fraction: Option<f64>,
    #[arg(long, global = true)]
    trip_slots: Option<usize>,
    /// Window length A in slots.
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    k_pca: Option<usize>,
    /// Comma-separated learner names.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, global = true, value_enum)]
    weights: Option<Weights>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Comma-separated penetration grid for `sweep`.
    #[arg(long, global = true, value_delimiter = ',')]
    penetrations: Option<Vec<f64>>,
    #[arg(long, global = true)]
    placements: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weights {
    Uniform,
    Accuracy,
}

#[derive(Subcommand)]
enum Command {
    /// Write the measurement trace CSV and the event log.
    Simulate,
    /// Write the windowed dataset CSV and its metadata sidecar.
    Dataset,
    /// Fit the reducer, learners and fusion rule into a model bundle.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Train on every fold except this one.
        #[arg(long)]
        holdout_fold: Option<usize>,
    },
    /// Cross-validate every learner and the fused vote.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Average fused error over random sensor placements per penetration.
    Sweep,
    /// Classify every window of a feature CSV with a trained bundle.
    Forecast {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        windows: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| gridcast_core::Error::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(c.seed, cfg.seed);
    set!(c.case, cfg.case);
    set!(c.penetration, cfg.penetration);
    set!(c.days, cfg.loads.days);
    set!(c.step_seconds, cfg.loads.step_seconds);
    set!(c.stress_fraction, cfg.loads.stress_fraction);
    set!(c.trip_slots, cfg.simulation.trip_slots);
    set!(c.window, cfg.windowing.window);
    set!(c.stride, cfg.windowing.stride);
    set!(c.horizon, cfg.windowing.horizon);
    set!(c.k_pca, cfg.pipeline.k_pca);
    set!(c.methods, cfg.pipeline.methods);
    set!(c.threshold, cfg.pipeline.fusion.threshold);
    set!(c.folds, cfg.evaluation.folds);
    set!(c.penetrations, cfg.evaluation.penetrations);
    set!(c.placements, cfg.evaluation.placements);
    if let Some(w) = c.weights {
        cfg.pipeline.fusion.weights = match w {
            Weights::Uniform => WeightMode::Uniform,
            Weights::Accuracy => WeightMode::Accuracy,
        };
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Summary {
    command: &'static str,
    fingerprint: String,
    outputs: Vec<PathBuf>,
    warnings: Vec<String>,
    extra: Value,
}

fn output(cfg: &RunConfig, command: &str, fingerprint: &str, ext: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(format!("{command}-{}.{ext}", short(fingerprint)))
}

fn combine(parts: &[&str]) -> String {
    digest_hex(parts.join("\n").as_bytes())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<Summary> {
    let fp = cfg.dataset_fingerprint();
    let scenario = Scenario::from_config(cfg)?;
    let placement = config_placement(cfg, &scenario)?;
    let traces = simulate_placement(cfg, &scenario, &placement, cfg.seed)?;
    let csv_path = output(cfg, "simulate", &fp, "csv");
    let events_path = output(cfg, "simulate", &fp, "events.json");
    let meta_path = output(cfg, "simulate", &fp, "json");
    let mut body = Vec::new();
    write_trace_csv(&mut body, &traces)?;
    write_atomic(&csv_path, &body)?;
    write_atomic(&events_path, (events_json(&traces)? + "\n").as_bytes())?;
    let truncated: Vec<usize> = traces.iter().enumerate().filter(|(_, t)| t.truncated).map(|(d, _)| d).collect();
    let n_events: usize = traces.iter().map(|t| t.events.len()).sum();
    write_json_atomic(
        &meta_path,
        &json!({
            "fingerprint": fp,
            "case": cfg.case,
            "seed": cfg.seed,
            "sensor_buses": placement.sensor_buses,
            "days": traces.iter().map(|t| json!({"origin": t.origin, "n_slots": t.n_slots, "truncated": t.truncated})).collect::<Vec<_>>(),
            "n_events": n_events,
            "stress": scenario.loads.stress,
        }),
    )?;
    let warnings = truncated.iter().map(|d| format!("day {d} ended early: a trip split the network")).collect();
    Ok(Summary {
        command: "simulate",
        fingerprint: fp,
        outputs: vec![csv_path, events_path, meta_path],
        warnings,
        extra: json!({ "events": n_events }),
    })
}

fn cmd_dataset(cfg: &RunConfig) -> Result<Summary> {
    let (_, ds) = dataset_from_config(cfg)?;
    let fp = ds.meta.fingerprint.clone();
    let csv_path = output(cfg, "dataset", &fp, "csv");
    save_dataset(&csv_path, &ds)?;
    let mut warnings = ds.meta.warnings.clone();
    if ds.is_empty() {
        warnings.push("dataset is empty: no trace is longer than window + horizon".into());
    }
    Ok(Summary {
        command: "dataset",
        fingerprint: fp,
        outputs: vec![csv_path.clone(), gridcast_core::io::sidecar_path(&csv_path)],
        warnings,
        extra: json!({ "samples": ds.len(), "class_counts": ds.class_counts() }),
    })
}

fn cmd_train(cfg: &RunConfig, dataset: &Path, holdout: Option<usize>) -> Result<Summary> {
    let ds = load_dataset(dataset)?;
    let holdout_tag = holdout.map_or_else(|| "all".to_string(), |f| f.to_string());
    let fp = combine(&[&cfg.fingerprint(), &ds.meta.fingerprint, &holdout_tag]);
    let idx: Vec<usize> = match holdout {
        Some(f) => {
            if f >= ds.n_folds() {
                bail!(gridcast_core::Error::InvalidArgument {
                    name: "holdout_fold",
                    reason: format!("dataset has {} folds", ds.n_folds()),
                });
            }
            (0..ds.len()).filter(|&i| ds.meta.folds[i] != f).collect()
        }
        None => (0..ds.len()).collect(),
    };
    if idx.is_empty() {
        bail!(gridcast_core::Error::InvalidArgument { name: "dataset", reason: "no training samples".into() });
    }
    let rows: Vec<&[f64]> = idx.iter().map(|&i| ds.samples[i].features.as_slice()).collect();
    let labels: Vec<usize> = idx.iter().map(|&i| ds.samples[i].class).collect();
    let seed = match holdout {
        Some(f) => fold_fit_seed(cfg.seed, f),
        None => derive_seed(cfg.seed, "fit-all", 0),
    };
    let pipeline = fit_pipeline(&rows, &labels, ds.n_classes(), &cfg.pipeline, seed)?;
    let warnings = pipeline.warnings.clone();
    let manifest = manifest_for(fp.clone(), &ds.meta, &cfg.pipeline.methods, holdout);
    let dir = Path::new(&cfg.out_dir).join(format!("train-{}", short(&fp)));
    Bundle { manifest, pipeline }.save(&dir)?;
    Ok(Summary {
        command: "train",
        fingerprint: fp,
        outputs: vec![dir],
        warnings,
        extra: json!({ "samples": idx.len() }),
    })
}

fn cmd_evaluate(cfg: &RunConfig, dataset: &Path) -> Result<Summary> {
    let ds = load_dataset(dataset)?;
    let fp = combine(&[&cfg.fingerprint(), &ds.meta.fingerprint]);
    let mut report_data = cross_validate(&ds, &cfg.pipeline, cfg.evaluation.folds, cfg.seed)?;
    report_data.system = cfg.case.clone();
    if ds.meta.fingerprint == cfg.dataset_fingerprint() {
        report_data.fingerprint.penetration = Some(cfg.penetration);
    }
    let rendered = report(&[Reportable::Eval(&report_data)])?;
    let json_path = output(cfg, "evaluate", &fp, "json");
    let txt_path = output(cfg, "evaluate", &fp, "txt");
    let csv_path = output(cfg, "evaluate", &fp, "csv");
    write_json_atomic(&json_path, &json!({ "fingerprint": fp, "report": report_data }))?;
    write_atomic(&txt_path, rendered.text.as_bytes())?;
    write_atomic(&csv_path, rendered.csv.as_bytes())?;
    eprint!("{}", rendered.text);
    Ok(Summary {
        command: "evaluate",
        fingerprint: fp,
        outputs: vec![json_path, txt_path, csv_path],
        warnings: report_data.warnings.clone(),
        extra: json!({ "fused_mze": report_data.fused.mze, "E": report_data.confidence_index }),
    })
}

fn cmd_sweep(cfg: &RunConfig) -> Result<Summary> {
    let fp = cfg.fingerprint();
    let result = penetration_sweep(cfg)?;
    let rendered = report(&[Reportable::Sweep(&result)])?;
    let json_path = output(cfg, "sweep", &fp, "json");
    let csv_path = output(cfg, "sweep", &fp, "csv");
    let plot_path = output(cfg, "sweep", &fp, "plot.csv");
    let txt_path = output(cfg, "sweep", &fp, "txt");
    write_json_atomic(&json_path, &json!({ "fingerprint": fp, "sweep": result }))?;
    write_atomic(&csv_path, sweep_csv(&result).as_bytes())?;
    write_atomic(&plot_path, sweep_plot_csv(&result).as_bytes())?;
    write_atomic(&txt_path, rendered.text.as_bytes())?;
    let warnings = result
        .points
        .iter()
        .flat_map(|p| {
            p.placements
                .iter()
                .filter_map(move |pl| pl.skipped.as_ref().map(|r| format!("p={} placement {}: {r}", p.penetration, pl.index)))
        })
        .collect();
    Ok(Summary {
        command: "sweep",
        fingerprint: fp,
        outputs: vec![json_path, csv_path, plot_path, txt_path],
        warnings,
        extra: json!({ "points": result.points.iter().map(|p| json!([p.penetration, p.mze])).collect::<Vec<_>>() }),
    })
}

fn cmd_forecast(cfg: &RunConfig, bundle_dir: &Path, windows: &Path) -> Result<Summary> {
    let bundle = Bundle::load(bundle_dir)?;
    let meta = read_meta(windows)?;
    let layout = meta.layout_fingerprint();
    if layout != bundle.manifest.layout_fingerprint {
        bail!(gridcast_core::Error::FingerprintMismatch {
            bundle: bundle.manifest.layout_fingerprint.clone(),
            input: layout,
        });
    }
    let bytes = std::fs::read(windows).map_err(|e| gridcast_core::Error::Io {
        path: windows.display().to_string(),
        source: e,
    })?;
    let (rows, _) = read_feature_csv(bytes.as_slice())?;
    let fp = combine(&[&bundle.manifest.fingerprint, &digest_hex(&bytes)]);
    let forecasts = bundle.pipeline.forecast(&rows)?;
    let patterns = &bundle.manifest.patterns;
    let per_window: Vec<Value> = forecasts
        .iter()
        .enumerate()
        .map(|(i, f)| {
            json!({
                "index": i,
                "fused_class": f.fused_class,
                "label": patterns[f.fused_class].to_bit_string(),
                "confidence": f.confidence,
                "decision": f.decision,
                "votes": f.votes,
            })
        })
        .collect();
    let e = if forecasts.is_empty() {
        None
    } else {
        Some(forecasts.iter().map(|f| f.confidence).sum::<f64>() / forecasts.len() as f64)
    };
    let path = output(cfg, "forecast", &fp, "json");
    write_json_atomic(
        &path,
        &json!({
            "fingerprint": fp,
            "bundle": bundle.manifest.fingerprint,
            "methods": bundle.manifest.methods,
            "E": e,
            "windows": per_window,
        }),
    )?;
    Ok(Summary {
        command: "forecast",
        fingerprint: fp,
        outputs: vec![path],
        warnings: Vec::new(),
        extra: json!({ "windows": forecasts.len(), "E": e }),
    })
}

fn run(cli: Cli) -> Result<Summary> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Simulate => cmd_simulate(&cfg),
        Command::Dataset => cmd_dataset(&cfg),
        Command::Train { dataset, holdout_fold } => cmd_train(&cfg, &dataset, holdout_fold),
        Command::Evaluate { dataset } => cmd_evaluate(&cfg, &dataset),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Forecast { bundle, windows } => {
            cmd_forecast(&cfg, &bundle, &windows).with_context(|| format!("forecast with {}", bundle.display()))
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<gridcast_core::Error>())
        .map_or("internal", |g| g.kind())
}

/// The error chain joined with `: `, skipping causes already quoted by their parent.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    one_line(&out)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", json!({ "error": "usage", "message": one_line(first) }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(s) => {
            for w in &s.warnings {
                log::warn!("{w}");
            }
            println!(
                "{}",
                json!({
                    "command": s.command,
                    "fingerprint": s.fingerprint,
                    "outputs": s.outputs,
                    "warning": !s.warnings.is_empty(),
                    "warnings": s.warnings,
                    "result": s.extra,
                })
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": error_kind(&e), "message": message(&e) }));
            ExitCode::FAILURE
        }
    }
}
