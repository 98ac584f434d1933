use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::io::{write_csv, write_json};
use super::Scenario;
use crate::audit::Violation;
use crate::error::{Error, Result};
use crate::model::EtsVariant;
use crate::network::NetworkSeries;
use crate::optimizer::{ParetoPoint, ScalarizationBounds, Schedule, SolveReport, VariantRun, WeightSpec};

/// Paths of the files written for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    /// Aggregate decisions and state of charge.
    pub schedule: PathBuf,
    pub user_schedule: PathBuf,
    pub voltages: PathBuf,
    /// Line flows, currents and per-interval loss.
    pub currents: PathBuf,
    pub grid_load: PathBuf,
    pub report: PathBuf,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    variant: EtsVariant,
    intervals: usize,
    delta_t_h: f64,
    f_cost: f64,
    revenue: f64,
    f_loss_kwh: f64,
    total_loss_kwh: f64,
    total_grid_energy_kwh: f64,
    peak_import_kwh: f64,
    peak_export_kwh: f64,
    bounds: Option<ScalarizationBounds>,
    weights: Option<WeightSpec>,
    scalarized_objective: Option<f64>,
    complementarity_kwh2: f64,
    violation_count: usize,
    voltage_violation_count: usize,
    violations: &'a [Violation],
}

fn num(v: f64) -> String {
    // Normalise negative zero so identical schedules print identically.
    if v == 0.0 {
        "0".into()
    } else {
        v.to_string()
    }
}

/// Writes the schedule, network series and report of one run into `out`.
pub fn emit_artifacts(
    scenario: &Scenario,
    report: &SolveReport,
    schedule: &Schedule,
    net: &NetworkSeries,
    out: impl AsRef<Path>,
) -> Result<RunArtifacts> {
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|source| Error::Emit {
        path: out.to_owned(),
        source,
    })?;
    let h = scenario.intervals();
    let dt = scenario.grid.delta_t_h();
    let time = |t: usize| [t.to_string(), num(t as f64 * dt)];
    let art = RunArtifacts {
        schedule: out.join("schedule.csv"),
        user_schedule: out.join("user_schedule.csv"),
        voltages: out.join("voltages.csv"),
        currents: out.join("currents.csv"),
        grid_load: out.join("gridload.csv"),
        report: out.join("report.json"),
    };
    let header = |cols: &[&str]| -> Vec<String> { ["t", "time_h"].iter().chain(cols).map(|s| s.to_string()).collect() };

    let d = &schedule.decision;
    write_csv(
        &art.schedule,
        &header(&[
            "E_P_kwh",
            "e_g_kwh",
            "e_s_plus_kwh",
            "e_s_minus_kwh",
            "e_s_kwh",
            "soc_kwh",
        ]),
        (0..h).map(|t| {
            time(t)
                .into_iter()
                .chain(
                    [
                        d.e_p[t],
                        d.e_g[t],
                        d.e_s_plus[t],
                        d.e_s_minus[t],
                        schedule.e_s[t],
                        schedule.soc[t],
                    ]
                    .map(num),
                )
                .collect::<Vec<_>>()
        }),
    )?;

    write_csv(
        &art.user_schedule,
        &header(&["user_id", "l_kwh", "y_kwh", "e_kwh"]),
        (0..h).flat_map(|t| {
            schedule.users.iter().map(move |(id, s)| {
                time(t)
                    .into_iter()
                    .chain([id.clone()])
                    .chain([s.l[t], s.y[t], s.e[t]].map(num))
                    .collect::<Vec<_>>()
            })
        }),
    )?;

    let n = scenario.feeder.n_buses();
    let bus_cols: Vec<String> = (1..=n).map(|b| format!("bus_{b}_pu")).collect();
    write_csv(
        &art.voltages,
        &header(&bus_cols.iter().map(String::as_str).collect::<Vec<_>>()),
        (0..h).map(|t| {
            time(t)
                .into_iter()
                .chain((0..n).map(|i| num(net.v_sq[(i, t)].max(0.0).sqrt())))
                .collect::<Vec<_>>()
        }),
    )?;

    let lines = scenario.feeder.lines();
    let s_kw = scenario.feeder.s_base_kw();
    let i_base = scenario.feeder.i_base_a();
    let mut line_cols = Vec::new();
    for l in lines {
        let tag = format!("{}_{}", l.parent, l.child);
        line_cols.push(format!("p_{tag}_kw"));
        line_cols.push(format!("q_{tag}_kvar"));
        line_cols.push(format!("i_{tag}_a"));
    }
    line_cols.push("loss_kwh".into());
    write_csv(
        &art.currents,
        &header(&line_cols.iter().map(String::as_str).collect::<Vec<_>>()),
        (0..h).map(|t| {
            let mut row: Vec<String> = time(t).into();
            for k in 0..lines.len() {
                row.push(num(net.flows.p[(k, t)] * s_kw));
                row.push(num(net.flows.q[(k, t)] * s_kw));
                row.push(num(net.i_sq[(k, t)].max(0.0).sqrt() * i_base));
            }
            row.push(num(net.loss_per_step[t]));
            row
        }),
    )?;

    let e_n = scenario.nonparticipant_load();
    write_csv(
        &art.grid_load,
        &header(&["E_kwh", "E_P_kwh", "E_N_kwh", "e_g_kwh"]),
        (0..h).map(|t| {
            time(t)
                .into_iter()
                .chain([report.grid_load[t], d.e_p[t], e_n[t], d.e_g[t]].map(num))
                .collect::<Vec<_>>()
        }),
    )?;

    let file = ReportFile {
        variant: report.variant,
        intervals: h,
        delta_t_h: dt,
        f_cost: report.f_cost,
        revenue: report.revenue,
        f_loss_kwh: report.f_loss,
        total_loss_kwh: net.loss_per_step.iter().sum(),
        total_grid_energy_kwh: report.grid_load.iter().sum(),
        peak_import_kwh: report.peak_import,
        peak_export_kwh: report.peak_export,
        bounds: report.bounds,
        weights: report.weights,
        scalarized_objective: report.scalarized_objective,
        complementarity_kwh2: report.complementarity,
        violation_count: report.violations.len(),
        voltage_violation_count: report.voltage_violations(),
        violations: &report.violations,
    };
    write_json(&art.report, &file)?;
    Ok(art)
}

/// One row per variant: objectives, revenue, peaks and violation counts.
pub fn write_comparison(runs: &[VariantRun], path: impl AsRef<Path>) -> Result<()> {
    write_csv(
        path.as_ref(),
        &[
            "variant",
            "f_cost",
            "revenue",
            "f_loss_kwh",
            "peak_import_kwh",
            "peak_export_kwh",
            "voltage_violations",
            "violations",
        ]
        .map(String::from),
        runs.iter().map(|r| {
            let rep = &r.report;
            vec![
                rep.variant.to_string(),
                num(rep.f_cost),
                num(rep.revenue),
                num(rep.f_loss),
                num(rep.peak_import),
                num(rep.peak_export),
                rep.voltage_violations().to_string(),
                rep.violations.len().to_string(),
            ]
        }),
    )
}

pub fn write_pareto(points: &[ParetoPoint], path: impl AsRef<Path>) -> Result<()> {
    write_csv(
        path.as_ref(),
        &["w1", "w2", "f_cost", "f_loss_kwh", "scalarized"].map(String::from),
        points.iter().map(|p| {
            vec![
                num(p.weights.w1),
                num(p.weights.w2),
                num(p.f_cost),
                num(p.f_loss),
                num(p.value),
            ]
        }),
    )
}
