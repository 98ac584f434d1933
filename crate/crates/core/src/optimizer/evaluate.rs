use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::ahp::WeightSpec;
use super::problem::assemble_problem;
use super::solve::{anchor_points, baseline_schedule, solve_scalarized, ScalarizationBounds, Schedule};
use crate::audit::Violation;
use crate::error::{Error, Result};
use crate::model::{check_ces_feasibility, EtsVariant};
use crate::network::{check_network_limits, evaluate_network, NetworkSeries};
use crate::par;
use crate::scenario::Scenario;

/// Audit tolerance used when none is given.
pub const AUDIT_TOL: f64 = 1e-6;

/// `sum_t price(t) (E_P(t) + e_g(t))`
pub fn total_cost(e_p: &[f64], e_g: &[f64], prices: &[f64]) -> Result<f64> {
    if e_p.len() != prices.len() || e_g.len() != prices.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ: E_P {}, e_g {}, prices {}",
            e_p.len(),
            e_g.len(),
            prices.len()
        )));
    }
    Ok(prices
        .iter()
        .zip(e_p.iter().zip(e_g))
        .map(|(l, (a, b))| l * (a + b))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub variant: EtsVariant,
    /// Currency.
    pub f_cost: f64,
    /// kWh.
    pub f_loss: f64,
    pub revenue: f64,
    pub bounds: Option<ScalarizationBounds>,
    pub weights: Option<WeightSpec>,
    /// Weighted normalised objective at the optimum.
    pub scalarized_objective: Option<f64>,
    /// `E(t) = E_P(t) + E_N(t) + e_g(t)`, kWh.
    pub grid_load: Vec<f64>,
    pub peak_import: f64,
    pub peak_export: f64,
    /// Largest `e_s_plus(t) * e_s_minus(t)`.
    pub complementarity: f64,
    pub violations: Vec<Violation>,
}

impl SolveReport {
    pub fn voltage_violations(&self) -> usize {
        self.violations.iter().filter(|v| v.is_voltage()).count()
    }
}

/// Recomputes objectives, grid load and audits of `schedule` from the
/// scenario alone.
pub fn evaluate_schedule(scenario: &Scenario, schedule: &Schedule, tol: f64) -> Result<(SolveReport, NetworkSeries)> {
    let h = scenario.intervals();
    let d = &schedule.decision;
    if d.intervals() != h || schedule.e_s.len() != h {
        return Err(Error::InvalidArgument(format!(
            "schedule covers {} intervals, scenario has {h}",
            d.intervals()
        )));
    }
    let storage = schedule.variant.has_storage();
    let inj = scenario.injections(storage.then_some(schedule.e_s.as_slice()))?;
    let net = evaluate_network(&scenario.feeder, &scenario.paths, &inj, &scenario.grid);
    let f_cost = total_cost(&d.e_p, &d.e_g, &scenario.prices)?;
    let grid_load: Vec<f64> = scenario
        .nonparticipant_load()
        .iter()
        .zip(d.e_p.iter().zip(&d.e_g))
        .map(|(n, (p, g))| p + n + g)
        .collect();
    let mut violations = Vec::new();
    if storage {
        let ces = scenario.ces.as_ref().expect("storage variant");
        violations.extend(check_ces_feasibility(ces, &schedule.e_s, &scenario.grid, tol));
    }
    violations.extend(check_network_limits(&scenario.feeder, &net, tol));
    let report = SolveReport {
        variant: schedule.variant,
        f_cost,
        f_loss: net.total_loss,
        revenue: -f_cost,
        bounds: None,
        weights: None,
        scalarized_objective: None,
        peak_import: grid_load.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        peak_export: grid_load.iter().copied().fold(f64::INFINITY, f64::min),
        grid_load,
        complementarity: d.complementarity(),
        violations,
    };
    Ok((report, net))
}

/// Everything produced for one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantRun {
    pub schedule: Schedule,
    pub report: SolveReport,
    pub network: NetworkSeries,
}

/// Bounds, scalarised solve and evaluation of one variant. The baseline is
/// evaluated without optimisation.
pub fn run_variant(scenario: &Scenario, variant: EtsVariant, weights: &WeightSpec, tol: f64) -> Result<VariantRun> {
    if variant == EtsVariant::Baseline {
        let schedule = baseline_schedule(scenario);
        let (report, network) = evaluate_schedule(scenario, &schedule, tol)?;
        return Ok(VariantRun {
            schedule,
            report,
            network,
        });
    }
    let problem = assemble_problem(scenario, variant)?;
    let anchors = anchor_points(&problem)?;
    info!(
        "{variant}: cost in [{:.6}, {:.6}], loss in [{:.6}, {:.6}] kWh",
        anchors.bounds.f_cost_utopia,
        anchors.bounds.f_cost_nadir,
        anchors.bounds.f_loss_utopia,
        anchors.bounds.f_loss_nadir
    );
    let solved = solve_scalarized(&problem, weights, &anchors.bounds)?;
    let (mut report, network) = evaluate_schedule(scenario, &solved.schedule, tol)?;
    for (name, solver, recomputed) in [
        ("cost", solved.f_cost, report.f_cost),
        ("loss", solved.f_loss, report.f_loss),
    ] {
        if (solver - recomputed).abs() > 1e-6 * recomputed.abs().max(1.0) {
            warn!("{variant}: solver {name} {solver} differs from recomputed {recomputed}");
        }
    }
    report.bounds = Some(anchors.bounds);
    report.weights = Some(*weights);
    report.scalarized_objective = Some(solved.value);
    Ok(VariantRun {
        schedule: solved.schedule,
        report,
        network,
    })
}

/// All four variants on one scenario and weight pair, in
/// [`EtsVariant::ALL`] order.
pub fn compare_variants(scenario: &Scenario, weights: &WeightSpec, tol: f64) -> Result<Vec<VariantRun>> {
    par::map_slice(&EtsVariant::ALL, |v| run_variant(scenario, *v, weights, tol))
        .into_iter()
        .collect()
}
