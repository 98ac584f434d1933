//! `cesched`: schedule a community storage device, compare trading systems,
//! sweep objective weights and check the linear network model.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use ces_core::model::EtsVariant;
use ces_core::network::{linearization_report, LinearizationReport};
use ces_core::optimizer::{
    compare_variants, pareto_sweep, run_variant, SolveReport, VariantRun, WeightSpec, AUDIT_TOL,
};
use ces_core::scenario::{
    emit_artifacts, load_scenario, write_comparison, write_pareto, Scenario, ScenarioFiles, SynthScenario,
};
use ces_core::Error;

#[derive(Parser)]
#[command(
    name = "cesched",
    version,
    about = "Community energy storage scheduling on a radial feeder"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schedule one trading system and write its artifacts.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Trading system: 1, 2, 3 or baseline.
        #[arg(long)]
        ets: EtsVariant,
    },
    /// Run the baseline and all three trading systems.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the cost weight from 0 to 1.
    Pareto {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "3")]
        ets: EtsVariant,
        #[arg(long, default_value_t = 7)]
        steps: usize,
    },
    /// Compare the linear voltage model with the full power-flow equations.
    Validate {
        #[arg(long)]
        scenario_dir: PathBuf,
        /// Multiply every load and PV profile before validating.
        #[arg(long, default_value_t = 1.0)]
        load_scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic scenario.
    Synth {
        /// paper-like or stress.
        #[arg(long, default_value = "paper-like")]
        kind: SynthScenario,
        #[arg(long, default_value_t = SynthScenario::SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario_dir: PathBuf,
    /// Explicit weights `w1,w2`; overrides the scenario's pairwise matrix.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<WeightSpec>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Audit tolerance.
    #[arg(long, default_value_t = AUDIT_TOL)]
    tol: f64,
}

fn parse_weights(s: &str) -> Result<WeightSpec, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [a, b] = parts.as_slice() else {
        return Err("expected two comma-separated numbers".into());
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    WeightSpec::new(num(a)?, num(b)?).map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } => 2,
        Error::NonConvergence { .. } => 3,
        _ => 1,
    }
}

fn load(dir: &Path) -> Result<Scenario, Error> {
    let sc = load_scenario(&ScenarioFiles::in_dir(dir))?;
    info!(
        "loaded {}: {} users, {} buses, {} intervals",
        dir.display(),
        sc.users.len(),
        sc.feeder.n_buses(),
        sc.intervals()
    );
    Ok(sc)
}

fn weights(common: &Common, sc: &Scenario) -> Result<WeightSpec, Error> {
    match common.weights {
        Some(w) => Ok(w),
        None => sc.weights.resolve(),
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Emit {
        path: dir.to_owned(),
        source,
    })
}

fn summary_line(r: &SolveReport) -> String {
    format!(
        "{:<9} {:>12.4} {:>12.4} {:>12.4} {:>10.3} {:>10.3} {:>8} {:>6}",
        r.variant.to_string(),
        r.f_cost,
        r.revenue,
        r.f_loss,
        r.peak_import,
        r.peak_export,
        r.voltage_violations(),
        r.violations.len()
    )
}

const SUMMARY_HEADER: &str = "variant         f_cost      revenue  f_loss_kwh   peak_imp   peak_exp  v_viol   viol";

fn emit(sc: &Scenario, run: &VariantRun, out: &Path) -> Result<(), Error> {
    emit_artifacts(sc, &run.report, &run.schedule, &run.network, out)?;
    Ok(())
}

fn cmd_solve(common: &Common, ets: EtsVariant) -> Result<String, Error> {
    let sc = load(&common.scenario_dir)?;
    let w = weights(common, &sc)?;
    let run = run_variant(&sc, ets, &w, common.tol)?;
    emit(&sc, &run, &common.out)?;
    let mut s = String::new();
    writeln!(s, "{SUMMARY_HEADER}").unwrap();
    writeln!(s, "{}", summary_line(&run.report)).unwrap();
    if let Some(v) = run.report.scalarized_objective {
        writeln!(s, "weights ({:.4}, {:.4}), scalarised objective {v:.6}", w.w1, w.w2).unwrap();
    }
    writeln!(s, "artifacts in {}", common.out.display()).unwrap();
    Ok(s)
}

fn cmd_compare(common: &Common) -> Result<String, Error> {
    let sc = load(&common.scenario_dir)?;
    let w = weights(common, &sc)?;
    let runs = compare_variants(&sc, &w, common.tol)?;
    create_dir(&common.out)?;
    for run in &runs {
        emit(&sc, run, &common.out.join(run.report.variant.to_string()))?;
    }
    write_comparison(&runs, common.out.join("comparison.csv"))?;
    let mut s = String::new();
    writeln!(s, "weights ({:.4}, {:.4})", w.w1, w.w2).unwrap();
    writeln!(s, "{SUMMARY_HEADER}").unwrap();
    for run in &runs {
        writeln!(s, "{}", summary_line(&run.report)).unwrap();
    }
    Ok(s)
}

fn cmd_pareto(common: &Common, ets: EtsVariant, steps: usize) -> Result<String, Error> {
    let sc = load(&common.scenario_dir)?;
    if ets == EtsVariant::Baseline {
        return Err(Error::InvalidArgument("the baseline has no trade-off to sweep".into()));
    }
    let pts = pareto_sweep(&sc, ets, steps)?;
    create_dir(&common.out)?;
    write_pareto(&pts, common.out.join("pareto.csv"))?;
    let mut s = String::new();
    writeln!(s, "{:>8} {:>12} {:>12}", "w1", "f_cost", "f_loss_kwh").unwrap();
    for p in &pts {
        writeln!(s, "{:>8.4} {:>12.4} {:>12.4}", p.weights.w1, p.f_cost, p.f_loss).unwrap();
    }
    Ok(s)
}

#[derive(Serialize)]
struct ValidationFile<'a> {
    load_scale: f64,
    #[serde(flatten)]
    report: &'a LinearizationReport,
}

fn cmd_validate(dir: &Path, load_scale: f64, out: Option<&Path>) -> Result<String, Error> {
    let sc = load(dir)?.with_load_scale(load_scale)?;
    let inj = sc.injections(None)?;
    let rep = linearization_report(&sc.feeder, &sc.paths, &inj);
    if let Some(out) = out {
        create_dir(out)?;
        let path = out.join("validation.json");
        let mut text = serde_json::to_string_pretty(&ValidationFile {
            load_scale,
            report: &rep,
        })
        .expect("plain data serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|source| Error::Emit { path, source })?;
    }
    let mut s = String::new();
    writeln!(s, "load scale          {load_scale}").unwrap();
    writeln!(s, "max |V_lin - V| pu  {:.3e}", rep.max_abs_error_pu).unwrap();
    writeln!(s, "mean |V_lin - V| pu {:.3e}", rep.mean_abs_error_pu).unwrap();
    writeln!(s, "worst bus {} at interval {}", rep.worst_bus, rep.worst_interval).unwrap();
    writeln!(s, "intervals evaluated {}", rep.evaluated_intervals).unwrap();
    for t in &rep.diverged_intervals {
        writeln!(s, "power flow diverged at interval {t}").unwrap();
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Solve { common, ets } => cmd_solve(&common, ets),
        Command::Compare { common } => cmd_compare(&common),
        Command::Pareto { common, ets, steps } => cmd_pareto(&common, ets, steps),
        Command::Validate {
            scenario_dir,
            load_scale,
            out,
        } => cmd_validate(&scenario_dir, load_scale, out.as_deref()),
        Command::Synth { kind, seed, out } => {
            kind.write(seed, &out)?;
            Ok(format!(
                "wrote {} scenario (seed {seed}) to {}\n",
                kind_name(kind),
                out.display()
            ))
        }
    }
}

fn kind_name(kind: SynthScenario) -> &'static str {
    match kind {
        SynthScenario::PaperLike => "paper-like",
        SynthScenario::Stress => "stress",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
