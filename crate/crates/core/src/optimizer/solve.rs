use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::ahp::WeightSpec;
use super::problem::{assemble_problem, Objective, SchedulingProblem};
use crate::error::{Error, Result};
use crate::model::{disaggregate, soc_trajectory, CesSpec, EtsVariant, UserSchedule};
use crate::par;
use crate::scenario::Scenario;
use crate::solver::{solve, QuadExpr, SparseVec};

/// Ranges narrower than this (relative to the objective magnitude) count as
/// degenerate and their normalised term is dropped.
pub const DEGENERATE_RANGE: f64 = 1e-12;
const DEGENERATE_RANGE_REL: f64 = 1e-9;

/// Slack granted to the cost when refining the cost minimiser by loss.
const LEXICOGRAPHIC_SLACK_REL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub e_p: Vec<f64>,
    pub e_g: Vec<f64>,
    pub e_s_plus: Vec<f64>,
    pub e_s_minus: Vec<f64>,
}

impl DecisionVector {
    pub fn zeros(intervals: usize) -> Self {
        Self {
            e_p: vec![0.0; intervals],
            e_g: vec![0.0; intervals],
            e_s_plus: vec![0.0; intervals],
            e_s_minus: vec![0.0; intervals],
        }
    }

    pub fn intervals(&self) -> usize {
        self.e_p.len()
    }

    /// Net storage flow `e_s = e_s_plus - e_s_minus`.
    pub fn e_s(&self) -> Vec<f64> {
        self.e_s_plus.iter().zip(&self.e_s_minus).map(|(p, m)| p - m).collect()
    }

    /// Largest `e_s_plus(t) * e_s_minus(t)`.
    pub fn complementarity(&self) -> f64 {
        self.e_s_plus
            .iter()
            .zip(&self.e_s_minus)
            .map(|(p, m)| p * m)
            .fold(0.0, f64::max)
    }

    fn from_x(problem: &SchedulingProblem<'_>, x: &[f64]) -> Self {
        let l = problem.layout;
        let h = l.intervals;
        let pick = |f: fn(&super::problem::VarLayout, usize) -> usize| (0..h).map(|t| x[f(&l, t)]).collect();
        let nonneg = |v: Vec<f64>| v.into_iter().map(|a: f64| a.max(0.0)).collect();
        Self {
            e_p: pick(super::problem::VarLayout::e_p),
            e_g: pick(super::problem::VarLayout::e_g),
            e_s_plus: nonneg(pick(super::problem::VarLayout::plus)),
            e_s_minus: nonneg(pick(super::problem::VarLayout::minus)),
        }
    }

    fn to_x(&self, problem: &SchedulingProblem<'_>) -> Vec<f64> {
        let l = problem.layout;
        let mut x = vec![0.0; l.n_vars()];
        for t in 0..l.intervals {
            x[l.e_p(t)] = self.e_p[t];
            x[l.e_g(t)] = self.e_g[t];
            x[l.plus(t)] = self.e_s_plus[t];
            x[l.minus(t)] = self.e_s_minus[t];
        }
        x
    }
}

/// Outcome of a variant: decisions, storage trajectory and per-participant
/// trades (in participant order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub variant: EtsVariant,
    pub decision: DecisionVector,
    pub e_s: Vec<f64>,
    pub soc: Vec<f64>,
    pub users: Vec<(String, UserSchedule)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSolve {
    pub decision: DecisionVector,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Minimises one objective over the variant's program.
pub fn solve_single(problem: &SchedulingProblem<'_>, which: Objective) -> Result<SingleSolve> {
    minimise(problem, problem.objective(which), None)
}

fn minimise(
    problem: &SchedulingProblem<'_>,
    objective: &QuadExpr,
    extra: Option<(SparseVec, f64)>,
) -> Result<SingleSolve> {
    if problem.is_evaluation_only() {
        return Ok(SingleSolve {
            decision: DecisionVector::zeros(0),
            x: Vec::new(),
            objective: objective.constant,
            iterations: 0,
        });
    }
    let sol = match extra {
        Some((coef, rhs)) => {
            let mut program = problem.program.clone();
            program.add_le("cost level", coef, rhs);
            solve(&program, objective, &problem.settings)?
        }
        None => solve(&problem.program, objective, &problem.settings)?,
    };
    debug!(
        "{} solve: {} iterations, objective {:.9}, max violation {:.2e}",
        problem.variant, sol.iterations, sol.objective, sol.max_violation
    );
    Ok(SingleSolve {
        decision: DecisionVector::from_x(problem, &sol.x),
        objective: sol.objective,
        x: sol.x,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarizationBounds {
    pub f_cost_utopia: f64,
    pub f_cost_nadir: f64,
    pub f_loss_utopia: f64,
    pub f_loss_nadir: f64,
}

impl ScalarizationBounds {
    /// Utopia and nadir values from both objectives evaluated at both
    /// single-objective minimisers.
    pub fn from_minimizers(cost_at_cost: f64, cost_at_loss: f64, loss_at_cost: f64, loss_at_loss: f64) -> Self {
        Self {
            f_cost_utopia: cost_at_cost,
            f_cost_nadir: cost_at_cost.max(cost_at_loss),
            f_loss_utopia: loss_at_loss,
            f_loss_nadir: loss_at_cost.max(loss_at_loss),
        }
    }

    fn range(utopia: f64, nadir: f64) -> Option<f64> {
        let d = nadir - utopia;
        let floor = DEGENERATE_RANGE.max(DEGENERATE_RANGE_REL * nadir.abs().max(utopia.abs()).max(1.0));
        (d > floor).then_some(d)
    }

    /// `nadir - utopia` of the cost, or `None` when degenerate.
    pub fn cost_range(&self) -> Option<f64> {
        Self::range(self.f_cost_utopia, self.f_cost_nadir)
    }

    pub fn loss_range(&self) -> Option<f64> {
        Self::range(self.f_loss_utopia, self.f_loss_nadir)
    }

    /// Weighted normalised objective at the given objective values.
    pub fn scalarize(&self, w: &WeightSpec, f_cost: f64, f_loss: f64) -> f64 {
        let c = self
            .cost_range()
            .map_or(0.0, |d| w.w1 * (f_cost - self.f_cost_utopia) / d);
        let l = self
            .loss_range()
            .map_or(0.0, |d| w.w2 * (f_loss - self.f_loss_utopia) / d);
        c + l
    }
}

/// Single-objective minimisers behind a set of bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchors {
    pub bounds: ScalarizationBounds,
    pub cost_minimizer: SingleSolve,
    pub loss_minimizer: SingleSolve,
}

/// Utopia and nadir points of the variant.
///
/// The cost minimiser is rarely unique (any storage plan with equal priced
/// energy will do), so among them the one with least loss is taken.
pub fn scalarization_bounds(problem: &SchedulingProblem<'_>) -> Result<ScalarizationBounds> {
    anchor_points(problem).map(|a| a.bounds)
}

pub fn anchor_points(problem: &SchedulingProblem<'_>) -> Result<Anchors> {
    let (cost_first, loss_min) = par::join(
        || solve_single(problem, Objective::Cost),
        || solve_single(problem, Objective::Loss),
    );
    let cost_first = cost_first?;
    let loss_min = loss_min?;
    let cost_min = if problem.is_evaluation_only() {
        cost_first
    } else {
        let c = cost_first.objective;
        let level = c + LEXICOGRAPHIC_SLACK_REL * c.abs().max(1.0);
        let refined = minimise(
            problem,
            &problem.loss,
            Some((problem.cost.linear.clone(), level - problem.cost.constant)),
        )?;
        // Keep the cost at its optimum; only the tie between minimisers is
        // broken. The level row is active, so allow for its feasibility error.
        if problem.cost.eval(&refined.x) <= level + problem.settings.tol * level.abs().max(1.0) {
            SingleSolve {
                objective: problem.cost.eval(&refined.x),
                ..refined
            }
        } else {
            cost_first
        }
    };
    let bounds = ScalarizationBounds::from_minimizers(
        problem.cost.eval(&cost_min.x),
        problem.cost.eval(&loss_min.x),
        problem.loss.eval(&cost_min.x),
        problem.loss.eval(&loss_min.x),
    );
    Ok(Anchors {
        bounds,
        cost_minimizer: cost_min,
        loss_minimizer: loss_min,
    })
}

/// Result of a scalarised solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarizedSolve {
    pub schedule: Schedule,
    pub f_cost: f64,
    pub f_loss: f64,
    /// Weighted normalised objective at the optimum.
    pub value: f64,
    pub iterations: usize,
}

/// The scalarised objective as a single convex expression.
pub fn scalarized_objective(problem: &SchedulingProblem<'_>, w: &WeightSpec, bounds: &ScalarizationBounds) -> QuadExpr {
    let a = bounds.cost_range().map_or(0.0, |d| w.w1 / d);
    let b = bounds.loss_range().map_or(0.0, |d| w.w2 / d);
    problem
        .cost
        .scaled(a)
        .plus(&problem.loss.scaled(b))
        .plus_constant(-(a * bounds.f_cost_utopia + b * bounds.f_loss_utopia))
}

pub fn solve_scalarized(
    problem: &SchedulingProblem<'_>,
    w: &WeightSpec,
    bounds: &ScalarizationBounds,
) -> Result<ScalarizedSolve> {
    let objective = scalarized_objective(problem, w, bounds);
    let sol = minimise(problem, &objective, None)?;
    let schedule = build_schedule(problem, sol.decision)?;
    let x = schedule.decision.to_x(problem);
    let (f_cost, f_loss) = if problem.is_evaluation_only() {
        (problem.cost.constant, problem.loss.constant)
    } else {
        (problem.cost.eval(&x), problem.loss.eval(&x))
    };
    Ok(ScalarizedSolve {
        value: bounds.scalarize(w, f_cost, f_loss),
        schedule,
        f_cost,
        f_loss,
        iterations: sol.iterations,
    })
}

/// Removes simultaneous charge and discharge where that does not push the
/// state of charge over its ceiling or the end-of-day continuity band. Net
/// flows and hence every objective and network quantity are unchanged.
pub fn net_simultaneous_flows(ces: &CesSpec, d: &mut DecisionVector) {
    let h = d.intervals();
    let gain = ces.eta_d - ces.eta_c;
    let mut b = ces.b0;
    let mut soc: Vec<f64> = (0..h)
        .map(|t| {
            b += ces.eta_c * d.e_s_plus[t] - ces.eta_d * d.e_s_minus[t];
            b
        })
        .collect();
    for t in 0..h {
        let overlap = d.e_s_plus[t].min(d.e_s_minus[t]);
        if overlap <= 0.0 {
            continue;
        }
        let delta = if gain > 0.0 {
            let head = soc[t..]
                .iter()
                .map(|b| ces.b_max - b)
                .fold(ces.b0 + ces.theta - soc[h - 1], f64::min)
                .max(0.0);
            overlap.min(head / gain)
        } else {
            overlap
        };
        d.e_s_plus[t] -= delta;
        d.e_s_minus[t] -= delta;
        for b in &mut soc[t..] {
            *b += gain * delta;
        }
    }
}

fn build_schedule(problem: &SchedulingProblem<'_>, mut decision: DecisionVector) -> Result<Schedule> {
    let scenario = problem.scenario;
    let h = scenario.intervals();
    let deficits = scenario.deficits();
    let ids: Vec<String> = scenario.participants().map(|u| u.id.clone()).collect();
    if problem.is_evaluation_only() {
        return Ok(baseline_schedule(scenario));
    }
    let ces = scenario.ces.expect("storage variant");
    net_simultaneous_flows(&ces, &mut decision);
    let comp = decision.complementarity();
    if comp > 1e-6 {
        warn!(
            "{}: simultaneous charge and discharge remains ({comp:.3e} kWh^2)",
            problem.variant
        );
    }
    let e_s = decision.e_s();
    let soc = soc_trajectory(&ces, &e_s);
    let mut users: Vec<(String, UserSchedule)> = ids
        .into_iter()
        .zip(&deficits)
        .map(|(id, e)| {
            (
                id,
                UserSchedule {
                    l: vec![0.0; h],
                    y: vec![0.0; h],
                    e: e.clone(),
                },
            )
        })
        .collect();
    for t in 0..h {
        let e_t: Vec<f64> = deficits.iter().map(|e| e[t]).collect();
        let (l, y) = match problem.variant {
            EtsVariant::Ets1 => disaggregate(decision.e_p[t], &e_t)?,
            EtsVariant::Ets2 => (vec![0.0; e_t.len()], e_t.clone()),
            _ => (e_t.clone(), vec![0.0; e_t.len()]),
        };
        for (n, (_, s)) in users.iter_mut().enumerate() {
            s.l[t] = l[n];
            s.y[t] = y[n];
        }
    }
    Ok(Schedule {
        variant: problem.variant,
        decision,
        e_s,
        soc,
        users,
    })
}

/// The storage-free reference: participants settle their whole net deficit
/// with the grid.
pub fn baseline_schedule(scenario: &Scenario) -> Schedule {
    let h = scenario.intervals();
    let mut decision = DecisionVector::zeros(h);
    decision.e_p = scenario.aggregate_deficit();
    let users = scenario
        .participants()
        .zip(scenario.deficits())
        .map(|(u, e)| {
            (
                u.id.clone(),
                UserSchedule {
                    l: e.clone(),
                    y: vec![0.0; h],
                    e,
                },
            )
        })
        .collect();
    Schedule {
        variant: EtsVariant::Baseline,
        decision,
        e_s: vec![0.0; h],
        soc: vec![0.0; h],
        users,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub weights: WeightSpec,
    pub f_cost: f64,
    pub f_loss: f64,
    pub value: f64,
}

/// Scalarised solves for `w1 = 0, 1/(steps-1), ..., 1`, sharing one set of
/// bounds.
pub fn pareto_sweep(scenario: &Scenario, variant: EtsVariant, steps: usize) -> Result<Vec<ParetoPoint>> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "a sweep needs at least 2 steps, got {steps}"
        )));
    }
    let problem = assemble_problem(scenario, variant)?;
    let bounds = scalarization_bounds(&problem)?;
    par::map_range(steps, |k| {
        let w = WeightSpec::from_w1(k as f64 / (steps - 1) as f64)?;
        let s = solve_scalarized(&problem, &w, &bounds)?;
        Ok(ParetoPoint {
            weights: w,
            f_cost: s.f_cost,
            f_loss: s.f_loss,
            value: s.value,
        })
    })
    .into_iter()
    .collect()
}
