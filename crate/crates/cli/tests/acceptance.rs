//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Benchmarks go through the `gridcast` binary so the measured path is the
//! one users run. Oracles come from the core crate's test support module.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::{brute_mze, concordant_auc, covariance, jacobi_eigen, span_residual, Mix};
use gridcast_core::config::RunConfig;
use gridcast_core::dimred::{fit_pca, rows_to_matrix};
use gridcast_core::eval::{cross_validate, mze};
use gridcast_core::fusion::{confidence_index, fuse_votes, roc_curve, VotePanel};
use gridcast_core::grid::{dc_power_flow, parse_case, simulate_observed, GridTopology, SimulationTrace};
use gridcast_core::pipeline::{config_placement, Scenario};
use gridcast_core::seed::derive_seed;
use gridcast_core::windowing::{split_folds, Dataset, LabelVector};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_gridcast");

/// Fused MZE of the first verified benchmark runs; later runs must stay within ±0.02.
const LOCKED_FUSED_MZE: [(&str, f64); 2] = [("toy5", 0.0718), ("ieee30", 0.0604)];
const LOCK_TOLERANCE: f64 = 0.02;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn gridcast(out: &Path, args: &[&str]) -> Result<Value, String> {
    let o = Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "off")
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).trim().to_string());
    }
    serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())
}

fn outputs(summary: &Value) -> Vec<PathBuf> {
    summary["outputs"]
        .as_array()
        .map(|a| a.iter().filter_map(|p| p.as_str().map(PathBuf::from)).collect())
        .unwrap_or_default()
}

fn with_suffix(summary: &Value, suffix: &str) -> Result<PathBuf, String> {
    outputs(summary)
        .into_iter()
        .find(|p| p.to_string_lossy().ends_with(suffix))
        .ok_or_else(|| format!("no output ending in {suffix}"))
}

fn read_json(path: &Path) -> Result<Value, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

fn confidence_of(votes: Vec<usize>, n_classes: usize) -> f64 {
    let m = votes.len();
    let panel = VotePanel::uniform(vec![votes], n_classes).unwrap();
    let (_, dist) = fuse_votes(&panel).unwrap();
    confidence_index(&dist, m).unwrap().index
}

fn criterion_1() -> Outcome {
    let unanimous = confidence_of(vec![3; 5], 5);
    let distinct = confidence_of(vec![0, 1, 2, 3, 4], 5);
    let split = confidence_of(vec![0, 0, 1, 2], 5);
    let pass = (unanimous - 1.0).abs() <= 1e-12 && distinct.abs() <= 1e-12 && (split - 0.25).abs() <= 1e-12;
    outcome(pass, format!("unanimous E={unanimous}, distinct E={distinct}, 2/1/1 E={split}"))
}

fn criterion_2() -> Outcome {
    let mut mix = Mix(0x5EED);
    let gaussian = |mix: &mut Mix, n: usize, d: usize| -> Vec<Vec<f64>> {
        let scales: Vec<f64> = (0..d).map(|_| 10f64.powf(2.0 * mix.unit() - 1.0)).collect();
        (0..n).map(|_| scales.iter().map(|s| s * mix.normal()).collect()).collect()
    };
    let mut worst_ortho: f64 = 0.0;
    let mut worst_span: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..200 {
        let rows = gaussian(&mut mix, 10, 6);
        let x = rows_to_matrix(&rows).unwrap();
        let (_, vecs) = jacobi_eigen(&covariance(&rows));
        let mut last_err = f64::INFINITY;
        for k in 1..=6 {
            let m = fit_pca(&x, k).unwrap();
            let gram = m.components.transpose() * &m.components;
            for i in 0..k {
                for j in 0..k {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst_ortho = worst_ortho.max((gram[(i, j)] - target).abs());
                }
            }
            let cols: Vec<Vec<f64>> = m.components.column_iter().map(|c| c.iter().copied().collect()).collect();
            worst_span = worst_span.max(span_residual(&cols, &vecs[..k]));
            let err: f64 = rows
                .iter()
                .map(|r| {
                    let back = m.reconstruct_row(&m.project_row(r).unwrap()).unwrap();
                    r.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                })
                .sum();
            monotone &= err <= last_err + 1e-9 * last_err.min(1e300).max(1.0);
            last_err = err;
        }
    }
    let pass = worst_ortho <= 1e-8 && worst_span < 1e-6 && monotone;
    outcome(
        pass,
        format!("200 random 10x6: max |VᵀV-I| {worst_ortho:.1e}, max subspace residual {worst_span:.1e}, reconstruction monotone {monotone}"),
    )
}

fn criterion_3() -> Outcome {
    let mut mix = Mix(3);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = 1 + mix.below(100);
        let q = 1 + mix.below(10);
        let truth: Vec<usize> = (0..n).map(|_| mix.below(q)).collect();
        let pred: Vec<usize> = (0..n).map(|_| mix.below(q)).collect();
        if mze(&pred, &truth).unwrap() != brute_mze(&pred, &truth) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 1000 random instances differ from brute-force counting"))
}

/// Largest power-balance or flow/angle residual over every slot of every day.
fn physics_residual(topo: &GridTopology, cfg: &RunConfig, scenario: &Scenario) -> (f64, usize) {
    let placement = config_placement(cfg, scenario).unwrap();
    let seed = derive_seed(cfg.seed, "sim", 0);
    let ends: Vec<(usize, usize)> = topo
        .lines
        .iter()
        .map(|l| (topo.bus_index(l.from).unwrap(), topo.bus_index(l.to).unwrap()))
        .collect();
    let mut worst: f64 = 0.0;
    let mut slots = 0;
    for (d, day) in scenario.loads.days().iter().enumerate() {
        let _: SimulationTrace = simulate_observed(topo, day, &placement, &cfg.simulation, derive_seed(seed, "sim-day", d as u64), |s| {
            slots += 1;
            worst = worst.max(s.solution.injections.iter().sum::<f64>().abs());
            for (l, line) in topo.lines.iter().enumerate() {
                if s.active[l] {
                    let (a, b) = ends[l];
                    let r = s.solution.flows[l] * line.reactance - (s.solution.angles[a] - s.solution.angles[b]);
                    worst = worst.max(r.abs());
                }
            }
        })
        .unwrap();
    }
    (worst, slots)
}

fn criterion_4() -> Outcome {
    // two buses, slack 1, 1 pu drawn at bus 2 through x = 0.1
    let two = parse_case("two", "BUS 1 0 0\nBUS 2 0 0\nLINE 1 1 2 0.1 5\nSLACK 1\n").unwrap();
    let s2 = dc_power_flow(&two, &[0.0, -1.0]).unwrap();
    let e2 = [(s2.flows[0] - 1.0).abs(), (s2.angles[1] + 0.1).abs(), (s2.injections[0] - 1.0).abs()];
    // triangle, slack 1: hand solution θ2 = -0.08, θ3 = -0.14, flows 0.8 / 0.3 / 0.7
    let tri = parse_case(
        "tri",
        "BUS 1 0 0\nBUS 2 0 0\nBUS 3 0 0\nLINE 1 1 2 0.1 5\nLINE 2 2 3 0.2 5\nLINE 3 1 3 0.2 5\nSLACK 1\n",
    )
    .unwrap();
    let s3 = dc_power_flow(&tri, &[0.0, -0.5, -1.0]).unwrap();
    let e3 = [
        (s3.angles[1] + 0.08).abs(),
        (s3.angles[2] + 0.14).abs(),
        (s3.flows[0] - 0.8).abs(),
        (s3.flows[1] - 0.3).abs(),
        (s3.flows[2] - 0.7).abs(),
        (s3.injections[0] - 1.5).abs(),
    ];
    let hand = e2.iter().chain(&e3).fold(0.0f64, |a, &b| a.max(b));
    let mut detail = format!("hand cases max error {hand:.1e}");
    let mut pass = hand <= 1e-10;
    for case in ["toy5", "ieee30"] {
        let mut cfg = RunConfig::default();
        cfg.case = case.into();
        let scenario = Scenario::from_config(&cfg).unwrap();
        let (worst, slots) = physics_residual(&scenario.topology, &cfg, &scenario);
        pass &= worst <= 1e-8;
        detail.push_str(&format!("; {case} {slots} slots max residual {worst:.1e}"));
    }
    outcome(pass, detail)
}

struct Benchmark {
    case: &'static str,
    fused: f64,
    best: (String, f64),
    windows: usize,
    auc: Option<f64>,
    e: f64,
}

fn run_benchmark(case: &'static str, out: &Path) -> Result<Benchmark, String> {
    let ds = gridcast(out, &["dataset", "--case", case])?;
    let csv = with_suffix(&ds, ".csv")?;
    let ev = gridcast(out, &["evaluate", "--case", case, "--dataset", csv.to_str().unwrap()])?;
    let report = &read_json(&with_suffix(&ev, ".json")?)?["report"];
    let best = report["methods"]
        .as_array()
        .ok_or("report has no methods")?
        .iter()
        .map(|m| (m["name"].as_str().unwrap_or("?").to_string(), m["mze"].as_f64().unwrap_or(f64::NAN)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or("empty method list")?;
    Ok(Benchmark {
        case,
        fused: report["fused"]["mze"].as_f64().ok_or("no fused MZE")?,
        best,
        windows: report["n_samples"].as_u64().unwrap_or(0) as usize,
        auc: report["auc"].as_f64(),
        e: report["E"].as_f64().unwrap_or(f64::NAN),
    })
}

fn criterion_5(benches: &[Result<Benchmark, String>]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for b in benches {
        match b {
            Err(e) => {
                pass = false;
                parts.push(format!("run failed: {e}"));
            }
            Ok(b) => {
                let locked = LOCKED_FUSED_MZE.iter().find(|(c, _)| *c == b.case).map(|(_, v)| *v).unwrap();
                let ok = b.fused <= 0.15 && b.fused <= b.best.1 + 0.05 && (b.fused - locked).abs() <= LOCK_TOLERANCE;
                pass &= ok;
                parts.push(format!(
                    "{} fused {:.4} (locked {locked}), best {} {:.4}, {} windows, E {:.3}, AUC {}",
                    b.case,
                    b.fused,
                    b.best.0,
                    b.best.1,
                    b.windows,
                    b.e,
                    b.auc.map_or("n/a".into(), |a| format!("{a:.3}"))
                ));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion_6(sweep: &Result<Value, String>) -> Outcome {
    let s = match sweep {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let points = s["sweep"]["points"].as_array().cloned().unwrap_or_default();
    let at = |p: f64| points.iter().find(|x| (x["penetration"].as_f64().unwrap_or(-1.0) - p).abs() < 1e-9);
    let (Some(lo), Some(hi)) = (at(0.05), at(0.20)) else {
        return outcome(false, "sweep lacks the 5% or 20% point");
    };
    let full = points.iter().all(|p| p["n_placements"].as_u64() == Some(5));
    let (m5, m20) = (lo["mze"].as_f64(), hi["mze"].as_f64());
    let curve: Vec<String> = points
        .iter()
        .map(|p| format!("{}:{}", p["penetration"], p["mze"].as_f64().map_or("n/a".into(), |m| format!("{m:.3}"))))
        .collect();
    let pass = full && matches!((m5, m20), (Some(a), Some(b)) if b <= a);
    outcome(pass, format!("mean fused MZE {} ; all points over 5 placements: {full}", curve.join(" ")))
}

fn criterion_7() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.case = "toy5".into();
    cfg.loads.days = 168;
    let (_, base) = match gridcast_core::pipeline::dataset_from_config(&cfg) {
        Ok(x) => x,
        Err(e) => return outcome(false, e.to_string()),
    };
    let q = 4;
    let n = base.len() - base.len() % q;
    // balanced labels, shuffled by Fisher–Yates
    let mut classes: Vec<usize> = (0..n).map(|i| i % q).collect();
    let mut mix = Mix(77);
    for i in (1..n).rev() {
        classes.swap(i, mix.below(i + 1));
    }
    let c = base.meta.n_candidates;
    let labels: Vec<LabelVector> = classes
        .iter()
        .map(|&k| {
            let mut bits = vec![0u8; c + 1];
            bits[k] = 1;
            LabelVector(bits)
        })
        .collect();
    let feats: Vec<Vec<f64>> = base.samples[..n].iter().map(|s| s.features.clone()).collect();
    let mut ds = Dataset::from_parts(feats, labels, base.meta.clone()).unwrap();
    split_folds(&mut ds, 3, 5).unwrap();
    let report = cross_validate(&ds, &cfg.pipeline, 3, cfg.seed).unwrap();
    let chance = 1.0 - 1.0 / q as f64;
    let mut pass = true;
    let mut parts = Vec::new();
    for m in report.methods.iter() {
        pass &= (m.mze - chance).abs() <= 0.1;
        parts.push(format!("{} {:.3}", m.name, m.mze));
    }
    outcome(pass, format!("Q={q}, {n} windows, chance {chance:.3}: {}", parts.join(", ")))
}

fn criterion_8() -> Outcome {
    let separated = roc_curve(&[0.9, 0.8, 0.7, 0.2, 0.1], &[true, true, true, false, false]).unwrap().auc;
    let constant = roc_curve(&[0.5; 6], &[true, false, true, false, false, true]).unwrap().auc;
    let hand = roc_curve(&[0.9, 0.6, 0.4, 0.1], &[true, false, true, false]).unwrap().auc;
    let mut mix = Mix(8);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    while instances < 1000 {
        let n = 2 + mix.below(19);
        let truth: Vec<bool> = (0..n).map(|_| mix.unit() < 0.5).collect();
        if truth.iter().all(|&t| t) || truth.iter().all(|&t| !t) {
            continue;
        }
        let scores: Vec<f64> = (0..n).map(|_| mix.below(7) as f64 / 6.0).collect();
        let auc = roc_curve(&scores, &truth).unwrap().auc;
        worst = worst.max((auc - concordant_auc(&scores, &truth)).abs());
        instances += 1;
    }
    let pass = (separated - 1.0).abs() <= 1e-12 && (constant - 0.5).abs() <= 1e-12 && (hand - 0.75).abs() <= 1e-12 && worst <= 1e-12;
    outcome(
        pass,
        format!("separated {separated}, constant {constant}, hand case {hand}, 1000 random instances max oracle gap {worst:.1e}"),
    )
}

fn criterion_9(first: &Result<Value, String>, second: &Result<Value, String>) -> Outcome {
    let (a, b) = match (first, second) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return outcome(false, "a sweep run failed"),
    };
    let (pa, pb) = (outputs(a), outputs(b));
    if pa.len() != pb.len() || pa.is_empty() {
        return outcome(false, "sweep runs wrote different output sets");
    }
    let mut same = true;
    for (x, y) in pa.iter().zip(&pb) {
        same &= x.file_name() == y.file_name() && std::fs::read(x).ok() == std::fs::read(y).ok();
    }
    outcome(same, format!("{} output files compared byte for byte", pa.len()))
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temp dir");
    let mut lines: Vec<(u8, Outcome)> = Vec::new();
    let mut quick = Duration::ZERO;

    for (id, f) in [(1u8, criterion_1 as fn() -> Outcome), (2, criterion_2), (3, criterion_3), (4, criterion_4)] {
        let t = Instant::now();
        lines.push((id, f()));
        quick += t.elapsed();
    }

    let toy = run_benchmark("toy5", &work.path().join("toy5"));
    let t_full = Instant::now();
    let ieee = run_benchmark("ieee30", &work.path().join("ieee30"));
    let sweep_a = gridcast(&work.path().join("sweep-a"), &["sweep"]);
    let full = t_full.elapsed();
    let sweep_json = sweep_a
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|s| with_suffix(s, ".json").and_then(|p| read_json(&p)));
    let ieee_windows = ieee.as_ref().map(|b| b.windows).unwrap_or(0);
    lines.push((5, criterion_5(&[toy, ieee])));
    lines.push((6, criterion_6(&sweep_json)));

    for (id, f) in [(7u8, criterion_7 as fn() -> Outcome), (8, criterion_8)] {
        let t = Instant::now();
        lines.push((id, f()));
        quick += t.elapsed();
    }

    let sweep_b = gridcast(&work.path().join("sweep-b"), &["sweep"]);
    lines.push((9, criterion_9(&sweep_a, &sweep_b)));

    let pass10 = full < Duration::from_secs(300) && quick < Duration::from_secs(30) && ieee_windows >= 2000;
    lines.push((
        10,
        outcome(
            pass10,
            format!(
                "ieee30 dataset+evaluate+sweep ({ieee_windows} windows, 6 points x 5 placements) {:.1} s; criteria 1-4 and 7-8 {:.1} s",
                full.as_secs_f64(),
                quick.as_secs_f64()
            ),
        ),
    ));

    lines.sort_by_key(|(id, _)| *id);
    let mut failed = 0;
    for (id, o) in &lines {
        println!("criterion {id:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
