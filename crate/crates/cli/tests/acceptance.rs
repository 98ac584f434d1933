//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs against the shipped scenarios under `scenarios/` through the
//! `cesched` binary where a command exists, and the library otherwise.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ces_core::model::EtsVariant;
use ces_core::network::linearization_report;
use ces_core::optimizer::{
    ahp_weights, assemble_problem, run_variant, scalarization_bounds, solve_scalarized, solve_single, Objective,
    WeightSpec, AUDIT_TOL,
};
use ces_core::scenario::{load_scenario, ScenarioFiles, DEFAULT_PAIRWISE};

type Outcome = Result<String, String>;

fn scenario_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn cesched(args: &[&str]) -> Result<(Duration, String), String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_cesched"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot start cesched: {e}"))?;
    let elapsed = start.elapsed();
    if !out.status.success() {
        return Err(format!(
            "cesched {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok((elapsed, String::from_utf8_lossy(&out.stdout).into_owned()))
}

/// Rows of a numeric CSV keyed by header name.
fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
    Ok(lines
        .map(|l| {
            header
                .iter()
                .map(|h| h.to_string())
                .zip(l.split(',').map(str::to_string))
                .collect()
        })
        .collect())
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or(f64::NAN)
}

fn report(dir: &Path, variant: &str) -> Result<serde_json::Value, String> {
    let path = dir.join(variant).join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn field(r: &serde_json::Value, key: &str) -> f64 {
    r[key].as_f64().unwrap_or(f64::NAN)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Artifacts of the runs shared by several criteria.
struct Runs {
    work: tempfile::TempDir,
    paper_compare: Duration,
}

impl Runs {
    fn paper(&self) -> PathBuf {
        self.work.path().join("paper")
    }
    fn stress(&self) -> PathBuf {
        self.work.path().join("stress")
    }
}

fn prepare() -> Result<Runs, String> {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = |p: &Path| p.to_string_lossy().into_owned();
    let paper = work.path().join("paper");
    let stress = work.path().join("stress");
    let (paper_compare, _) = cesched(&[
        "compare",
        "--scenario-dir",
        &dir(&scenario_dir("paper_like")),
        "--out",
        &dir(&paper),
        "--tol",
        "1e-6",
    ])?;
    cesched(&[
        "compare",
        "--scenario-dir",
        &dir(&scenario_dir("stress")),
        "--out",
        &dir(&stress),
        "--tol",
        "1e-6",
    ])?;
    Ok(Runs { work, paper_compare })
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let sc = support::two_bus_instance();
    let w = WeightSpec::from_w1(0.67).map_err(|e| e.to_string())?;
    let problem = assemble_problem(&sc, EtsVariant::Ets3).map_err(|e| e.to_string())?;
    let bounds = scalarization_bounds(&problem).map_err(|e| e.to_string())?;
    let solved = solve_scalarized(&problem, &w, &bounds).map_err(|e| e.to_string())?;
    let grid = support::grid_optimum(&sc, &w);
    let rel = (solved.value - grid.value).abs() / grid.value.abs();
    let secs = start.elapsed().as_secs_f64();
    check(
        rel <= 1e-3 && secs < 10.0,
        format!(
            "solver {:.6} vs grid {:.6}, relative gap {rel:.1e}, {secs:.2} s",
            solved.value, grid.value
        ),
    )
}

fn linearization_bound() -> Outcome {
    let start = Instant::now();
    let sc = load_scenario(&ScenarioFiles::in_dir(scenario_dir("paper_like"))).map_err(|e| e.to_string())?;
    let inj = sc.injections(None).map_err(|e| e.to_string())?;
    let per_bus = inj.p.abs().max();
    let rep = linearization_report(&sc.feeder, &sc.paths, &inj);
    let secs = start.elapsed().as_secs_f64();
    check(
        per_bus <= 0.3
            && rep.diverged_intervals.is_empty()
            && rep.evaluated_intervals == 288
            && rep.max_abs_error_pu <= 1e-3
            && secs < 30.0,
        format!(
            "max |V_lin - V| {:.2e} pu over {} intervals, per-bus load <= {per_bus:.3} pu, {secs:.2} s",
            rep.max_abs_error_pu, rep.evaluated_intervals
        ),
    )
}

fn voltage_regulation(runs: &Runs) -> Outcome {
    let base = report(&runs.stress(), "baseline")?;
    let base_v = field(&base, "voltage_violation_count");
    let kinds: Vec<&str> = base["violations"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|v| v["kind"].as_str())
        .collect();
    let both = kinds.contains(&"under_voltage") && kinds.contains(&"over_voltage");
    let mut detail = format!("baseline {base_v} voltage violations (both limits: {both})");
    let mut ok = base_v > 0.0 && both;
    for v in ["ets1", "ets2", "ets3"] {
        let r = report(&runs.stress(), v)?;
        let n = field(&r, "violation_count");
        detail.push_str(&format!(", {v} {n}"));
        ok &= n == 0.0;
    }
    check(ok, detail)
}

fn loss_reduction(runs: &Runs) -> Outcome {
    let base = field(&report(&runs.stress(), "baseline")?, "f_loss_kwh");
    let mut ok = true;
    let mut detail = format!("baseline {base:.2} kWh");
    let mut worst: f64 = 1.0;
    for v in ["ets1", "ets2", "ets3"] {
        let l = field(&report(&runs.stress(), v)?, "f_loss_kwh");
        ok &= l < base;
        worst = worst.min(1.0 - l / base);
        detail.push_str(&format!(", {v} {l:.2} kWh"));
    }
    let target = if worst >= 0.5 { "met" } else { "not met" };
    detail.push_str(&format!(
        "; smallest reduction {:.1}% (50% target {target})",
        100.0 * worst
    ));
    check(ok, detail)
}

fn revenue_ordering(runs: &Runs) -> Outcome {
    let rev = |v: &str| -> Result<f64, String> { Ok(field(&report(&runs.paper(), v)?, "revenue")) };
    let (b, r1, r2, r3) = (rev("baseline")?, rev("ets1")?, rev("ets2")?, rev("ets3")?);
    // Variants that reach the same optimum may differ by solver tolerance.
    let slack = 1e-6 * r1.abs().max(r2.abs()).max(r3.abs()).max(1.0);
    check(
        r3 + slack >= r1 && r1 + slack >= r2 && r1.min(r2).min(r3) + slack >= b,
        format!("ets3 {r3:.4} >= ets1 {r1:.4} >= ets2 {r2:.4}, baseline {b:.4}"),
    )
}

fn nesting(runs: &Runs) -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, dir) in [("paper-like", runs.paper()), ("stress", runs.stress())] {
        let f = |v: &str| -> Result<f64, String> { Ok(field(&report(&dir, v)?, "scalarized_objective")) };
        let (f1, f2, f3) = (f("ets1")?, f("ets2")?, f("ets3")?);
        ok &= f1 <= f2.min(f3) + 1e-6;
        detail.push(format!("{name} {f1:.6} vs min {:.6}", f2.min(f3)));
    }
    for (name, sc) in [
        ("two-bus", support::two_bus_instance()),
        ("deficit", support::deficit_instance()),
    ] {
        let w = sc.weights.resolve().map_err(|e| e.to_string())?;
        let value = |v| -> Result<f64, String> {
            let run = run_variant(&sc, v, &w, AUDIT_TOL).map_err(|e| e.to_string())?;
            Ok(run.report.scalarized_objective.unwrap_or(f64::NAN))
        };
        let (f1, f2, f3) = (
            value(EtsVariant::Ets1)?,
            value(EtsVariant::Ets2)?,
            value(EtsVariant::Ets3)?,
        );
        ok &= f1 <= f2.min(f3) + 1e-6;
        detail.push(format!("{name} {f1:.6} vs min {:.6}", f2.min(f3)));
    }
    check(ok, detail.join(", "))
}

fn ahp_reproduction() -> Outcome {
    let w = ahp_weights(&DEFAULT_PAIRWISE).map_err(|e| e.to_string())?;
    check(
        (w.w1 - 0.67).abs() <= 0.005 && (w.w2 - 0.33).abs() <= 0.005,
        format!("weights ({:.4}, {:.4})", w.w1, w.w2),
    )
}

fn pareto_monotonicity(runs: &Runs) -> Outcome {
    let out = runs.work.path().join("pareto");
    let dir = scenario_dir("paper_like");
    cesched(&[
        "pareto",
        "--scenario-dir",
        &dir.to_string_lossy(),
        "--ets",
        "1",
        "--steps",
        "7",
        "--out",
        &out.to_string_lossy(),
    ])?;
    let rows = read_csv(&out.join("pareto.csv"))?;
    let mut ok = rows.len() == 7;
    for pair in rows.windows(2) {
        ok &= num(&pair[1], "w1") > num(&pair[0], "w1");
        ok &= num(&pair[1], "f_cost") <= num(&pair[0], "f_cost") + 1e-6;
        ok &= num(&pair[1], "f_loss_kwh") >= num(&pair[0], "f_loss_kwh") - 1e-6;
    }
    let ends = |r: &BTreeMap<String, String>| format!("({:.3}, {:.3})", num(r, "f_cost"), num(r, "f_loss_kwh"));
    check(
        ok,
        format!(
            "{} points from {} to {}",
            rows.len(),
            ends(&rows[0]),
            ends(&rows[rows.len() - 1])
        ),
    )
}

fn complementarity(runs: &Runs) -> Outcome {
    let mut worst: f64 = 0.0;
    for dir in [runs.paper(), runs.stress()] {
        for v in ["ets1", "ets2", "ets3"] {
            worst = worst.max(field(&report(&dir, v)?, "complementarity_kwh2"));
            for row in read_csv(&dir.join(v).join("schedule.csv"))? {
                worst = worst.max(num(&row, "e_s_plus_kwh") * num(&row, "e_s_minus_kwh"));
            }
        }
    }
    check(worst <= 1e-6, format!("max e_s+ * e_s- = {worst:.2e} kWh^2"))
}

fn scale(runs: &Runs) -> Outcome {
    let sc = load_scenario(&ScenarioFiles::in_dir(scenario_dir("paper_like"))).map_err(|e| e.to_string())?;
    let problem = assemble_problem(&sc, EtsVariant::Ets1).map_err(|e| e.to_string())?;
    let n = problem.program.n_vars();
    let m = problem.program.equalities.len() + problem.program.inequalities.len();
    let mut slowest: f64 = 0.0;
    for which in [Objective::Cost, Objective::Loss] {
        let start = Instant::now();
        solve_single(&problem, which).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed().as_secs_f64());
    }
    let compare = runs.paper_compare.as_secs_f64();
    check(
        slowest < 60.0 && compare < 600.0,
        format!("{n} variables, {m} linear rows: slowest single solve {slowest:.2} s, compare {compare:.1} s"),
    )
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Runs `args --out <dir>` into two fresh directories and counts the files
/// that match byte for byte.
fn run_twice(work: &Path, name: &str, args: &[&str]) -> Result<usize, String> {
    let dirs = [work.join("first").join(name), work.join("second").join(name)];
    for d in &dirs {
        let out = d.to_string_lossy().into_owned();
        let mut full = args.to_vec();
        full.extend(["--out", &out]);
        cesched(&full)?;
    }
    let files = files_under(&dirs[0]);
    if files.is_empty() || files != files_under(&dirs[1]) {
        return Err(format!("{name}: file sets differ"));
    }
    for f in &files {
        if fs::read(dirs[0].join(f)).ok() != fs::read(dirs[1].join(f)).ok() {
            return Err(format!("{name}: {} differs", f.display()));
        }
    }
    Ok(files.len())
}

fn determinism(runs: &Runs) -> Outcome {
    let work = runs.work.path().join("determinism");
    let paper = scenario_dir("paper_like").to_string_lossy().into_owned();
    let p = paper.as_str();
    let mut compared = 0;
    compared += run_twice(&work, "solve", &["solve", "--scenario-dir", p, "--ets", "2"])?;
    compared += run_twice(&work, "compare", &["compare", "--scenario-dir", p])?;
    compared += run_twice(&work, "pareto", &["pareto", "--scenario-dir", p, "--steps", "3"])?;
    compared += run_twice(&work, "validate", &["validate", "--scenario-dir", p])?;
    compared += run_twice(&work, "synth", &["synth", "--kind", "stress"])?;
    // The shipped scenario must be exactly what the generator writes.
    let shipped = scenario_dir("stress");
    for f in files_under(&shipped) {
        if fs::read(shipped.join(&f)).ok() != fs::read(work.join("first/synth").join(&f)).ok() {
            return Err(format!("shipped stress/{} differs from a fresh synth", f.display()));
        }
        compared += 1;
    }
    Ok(format!("{compared} files byte-identical across repeated runs"))
}

fn main() {
    let runs = prepare();
    let shared = |f: fn(&Runs) -> Outcome| -> Outcome {
        match &runs {
            Ok(r) => f(r),
            Err(e) => Err(format!("shared runs failed: {e}")),
        }
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("oracle equivalence", oracle_equivalence()),
        ("linearization bound", linearization_bound()),
        ("voltage regulation", shared(voltage_regulation)),
        ("loss reduction", shared(loss_reduction)),
        ("revenue ordering", shared(revenue_ordering)),
        ("variant nesting", shared(nesting)),
        ("AHP weights", ahp_reproduction()),
        ("Pareto monotonicity", shared(pareto_monotonicity)),
        ("complementarity", shared(complementarity)),
        ("scale", shared(scale)),
        ("determinism", shared(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
