//! Radial feeder model: path-impedance matrices, linearised branch-flow
//! voltages, line flows, currents, losses and limit checks, plus the full
//! nonlinear branch-flow recursion used to bound the linearisation error.
//!
//! All internal quantities are per-unit. Bus `0` is the slack bus; the
//! matrices and injection series are indexed by `bus - 1`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::audit::Violation;
use crate::error::{Error, Result};
use crate::model::{TimeGrid, UserProfile};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imax_a: Option<f64>,
}

/// Feeder description as stored on disk (engineering units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederSpec {
    pub v_base_v: f64,
    pub s_base_va: f64,
    pub v0_pu: f64,
    pub vmin_pu: f64,
    pub vmax_pu: f64,
    pub buses: Vec<usize>,
    pub lines: Vec<LineSpec>,
}

/// A line oriented away from the slack bus, in per-unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub parent: usize,
    pub child: usize,
    pub r: f64,
    pub x: f64,
    pub imax: Option<f64>,
}

/// Validated radial feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct Feeder {
    spec: FeederSpec,
    lines: Vec<Line>,
    /// Index of the line feeding each bus (`None` for the slack bus).
    feeding_line: Vec<Option<usize>>,
    /// Buses in breadth-first order from the slack bus.
    order: Vec<usize>,
}

impl Feeder {
    pub fn new(spec: FeederSpec) -> Result<Self> {
        let topo = |msg: String| Err(Error::InvalidTopology(msg));
        let n_bus = spec.buses.len();
        if n_bus < 2 {
            return topo("feeder needs the slack bus and at least one load bus".into());
        }
        let mut sorted = spec.buses.clone();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(i, b)| i != *b) {
            return topo(format!("bus ids must be 0..{}, got {:?}", n_bus - 1, spec.buses));
        }
        if spec.lines.len() != n_bus - 1 {
            return topo(format!(
                "a radial feeder with {n_bus} buses has {} lines, found {}",
                n_bus - 1,
                spec.lines.len()
            ));
        }
        if !(spec.v_base_v > 0.0) || !(spec.s_base_va > 0.0) {
            return Err(Error::InvalidArgument(
                "voltage and power bases must be positive".into(),
            ));
        }
        if !(0.0 < spec.vmin_pu && spec.vmin_pu < spec.v0_pu && spec.v0_pu < spec.vmax_pu) {
            return Err(Error::InvalidArgument(format!(
                "voltage limits must satisfy 0 < vmin < v0 < vmax, got {} / {} / {}",
                spec.vmin_pu, spec.v0_pu, spec.vmax_pu
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_bus];
        for (k, l) in spec.lines.iter().enumerate() {
            if l.from >= n_bus || l.to >= n_bus {
                return topo(format!("line {k} references unknown bus ({} -> {})", l.from, l.to));
            }
            if l.from == l.to {
                return topo(format!("line {k} is a self loop at bus {}", l.from));
            }
            if !(l.r_ohm >= 0.0) || !(l.x_ohm >= 0.0) {
                return Err(Error::InvalidArgument(format!("line {k} has negative impedance")));
            }
            if let Some(i) = l.imax_a {
                if !(i > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "line {k} has non-positive current limit"
                    )));
                }
            }
            adj[l.from].push(k);
            adj[l.to].push(k);
        }
        let z_base = spec.v_base_v * spec.v_base_v / spec.s_base_va;
        let i_base = spec.s_base_va / spec.v_base_v;
        let mut lines = vec![None; spec.lines.len()];
        let mut feeding_line = vec![None; n_bus];
        let mut seen = vec![false; n_bus];
        let mut order = Vec::with_capacity(n_bus);
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(bus) = queue.pop_front() {
            order.push(bus);
            for &k in &adj[bus] {
                let l = &spec.lines[k];
                let other = if l.from == bus { l.to } else { l.from };
                if Some(k) == feeding_line[bus] {
                    continue;
                }
                if seen[other] {
                    return topo(format!("line {k} ({} - {}) closes a cycle", l.from, l.to));
                }
                seen[other] = true;
                feeding_line[other] = Some(k);
                lines[k] = Some(Line {
                    parent: bus,
                    child: other,
                    r: l.r_ohm / z_base,
                    x: l.x_ohm / z_base,
                    imax: l.imax_a.map(|a| a / i_base),
                });
                queue.push_back(other);
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return topo(format!("bus {b} is not connected to the slack bus"));
        }
        let lines = lines.into_iter().map(|l| l.expect("every line visited")).collect();
        Ok(Self {
            spec,
            lines,
            feeding_line,
            order,
        })
    }

    pub fn spec(&self) -> &FeederSpec {
        &self.spec
    }

    /// Number of non-slack buses.
    pub fn n_buses(&self) -> usize {
        self.spec.buses.len() - 1
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn contains_bus(&self, bus: usize) -> bool {
        bus < self.spec.buses.len()
    }

    pub fn v0(&self) -> f64 {
        self.spec.v0_pu
    }

    pub fn s_base_kw(&self) -> f64 {
        self.spec.s_base_va / 1000.0
    }

    pub fn i_base_a(&self) -> f64 {
        self.spec.s_base_va / self.spec.v_base_v
    }

    /// Lines on the path from the slack bus to `bus`, nearest the slack first.
    pub fn path_lines(&self, bus: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut b = bus;
        while let Some(k) = self.feeding_line[b] {
            path.push(k);
            b = self.lines[k].parent;
        }
        path.reverse();
        path
    }

    /// Buses ordered leaves-last; iterate in reverse for upstream accumulation.
    fn bfs_order(&self) -> &[usize] {
        &self.order
    }
}

/// Path-intersection resistance and reactance matrices (per-unit).
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrices {
    pub r: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

pub fn build_path_matrices(feeder: &Feeder) -> PathMatrices {
    let n = feeder.n_buses();
    let mut r = DMatrix::zeros(n, n);
    let mut x = DMatrix::zeros(n, n);
    let paths: Vec<Vec<usize>> = (1..=n).map(|b| feeder.path_lines(b)).collect();
    for i in 0..n {
        for j in i..n {
            let (mut rs, mut xs) = (0.0, 0.0);
            for k in paths[i].iter().filter(|k| paths[j].contains(k)) {
                rs += feeder.lines[*k].r;
                xs += feeder.lines[*k].x;
            }
            r[(i, j)] = rs;
            r[(j, i)] = rs;
            x[(i, j)] = xs;
            x[(j, i)] = xs;
        }
    }
    PathMatrices { r, x }
}

/// Bus consumptions in per-unit, `N x H`, row `i` holding bus `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSeries {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl InjectionSeries {
    pub fn zeros(n_buses: usize, intervals: usize) -> Self {
        Self {
            p: DMatrix::zeros(n_buses, intervals),
            q: DMatrix::zeros(n_buses, intervals),
        }
    }

    pub fn intervals(&self) -> usize {
        self.p.ncols()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p: &self.p * factor,
            q: &self.q * factor,
        }
    }
}

/// Per-bus consumption from user profiles plus an optional storage flow
/// `(bus, e_s)` in kWh per interval.
pub fn bus_injections(
    feeder: &Feeder,
    users: &[UserProfile],
    storage: Option<(usize, &[f64])>,
    grid: &TimeGrid,
) -> Result<InjectionSeries> {
    let h = grid.intervals();
    let mut inj = InjectionSeries::zeros(feeder.n_buses(), h);
    let to_pu = 1.0 / (grid.delta_t_h() * feeder.s_base_kw());
    for u in users {
        if u.bus == 0 || !feeder.contains_bus(u.bus) {
            return Err(Error::InvalidArgument(format!(
                "user {} is attached to unknown load bus {}",
                u.id, u.bus
            )));
        }
        if u.intervals() != h {
            return Err(Error::InvalidArgument(format!(
                "user {} has {} intervals, expected {h}",
                u.id,
                u.intervals()
            )));
        }
        let row = u.bus - 1;
        for t in 0..h {
            let active = if u.is_participant() {
                u.demand[t] - u.pv[t]
            } else {
                u.demand[t]
            };
            inj.p[(row, t)] += active * to_pu;
            inj.q[(row, t)] += u.reactive[t] * to_pu;
        }
    }
    if let Some((bus, e_s)) = storage {
        if bus == 0 || !feeder.contains_bus(bus) {
            return Err(Error::InvalidArgument(format!(
                "storage is attached to unknown load bus {bus}"
            )));
        }
        if e_s.len() != h {
            return Err(Error::InvalidArgument(format!(
                "storage flow has {} intervals, expected {h}",
                e_s.len()
            )));
        }
        for (t, v) in e_s.iter().enumerate() {
            inj.p[(bus - 1, t)] += v * to_pu;
        }
    }
    Ok(inj)
}

/// Active and reactive line flows, `lines x H`, positive away from the slack.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFlows {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// Lossless downstream aggregation: each line carries the total consumption
/// of the subtree it feeds.
pub fn line_flows(feeder: &Feeder, inj: &InjectionSeries) -> LineFlows {
    let h = inj.intervals();
    let n_bus = feeder.n_buses() + 1;
    let mut sub_p = DMatrix::zeros(n_bus, h);
    let mut sub_q = DMatrix::zeros(n_bus, h);
    for b in 1..n_bus {
        sub_p.set_row(b, &inj.p.row(b - 1));
        sub_q.set_row(b, &inj.q.row(b - 1));
    }
    for &b in feeder.bfs_order().iter().rev() {
        if let Some(k) = feeder.feeding_line[b] {
            let parent = feeder.lines[k].parent;
            for t in 0..h {
                sub_p[(parent, t)] += sub_p[(b, t)];
                sub_q[(parent, t)] += sub_q[(b, t)];
            }
        }
    }
    let n_lines = feeder.lines.len();
    let mut p = DMatrix::zeros(n_lines, h);
    let mut q = DMatrix::zeros(n_lines, h);
    for (k, line) in feeder.lines.iter().enumerate() {
        p.set_row(k, &sub_p.row(line.child));
        q.set_row(k, &sub_q.row(line.child));
    }
    LineFlows { p, q }
}

/// Squared bus voltages from the compact matrix form `V = -2RP - 2XQ + v0^2`.
pub fn voltages(pm: &PathMatrices, inj: &InjectionSeries, v0: f64) -> DMatrix<f64> {
    let mut v = (&pm.r * &inj.p + &pm.x * &inj.q) * -2.0;
    v.add_scalar_mut(v0 * v0);
    v
}

/// Squared bus voltages from the per-line recursion
/// `V_j^2 = V_i^2 - 2 (r P_ij + x Q_ij)` walked down the tree.
pub fn voltages_by_recursion(feeder: &Feeder, flows: &LineFlows, v0: f64) -> DMatrix<f64> {
    let h = flows.p.ncols();
    let n_bus = feeder.n_buses() + 1;
    let mut v = DMatrix::from_element(n_bus, h, v0 * v0);
    for &b in feeder.bfs_order() {
        if let Some(k) = feeder.feeding_line[b] {
            let line = feeder.lines[k];
            for t in 0..h {
                v[(b, t)] = v[(line.parent, t)] - 2.0 * (line.r * flows.p[(k, t)] + line.x * flows.q[(k, t)]);
            }
        }
    }
    v.remove_row(0)
}

/// `(P^2 + Q^2) / v0^2` per line and interval.
pub fn currents_sq(flows: &LineFlows, v0: f64) -> DMatrix<f64> {
    let v0_sq = v0 * v0;
    flows.p.zip_map(&flows.q, |p, q| (p * p + q * q) / v0_sq)
}

/// Resistive loss per interval and in total, in kWh.
pub fn network_loss(feeder: &Feeder, i_sq: &DMatrix<f64>, grid: &TimeGrid) -> (Vec<f64>, f64) {
    let scale = feeder.s_base_kw() * grid.delta_t_h();
    let per_step: Vec<f64> = (0..i_sq.ncols())
        .map(|t| {
            feeder
                .lines
                .iter()
                .enumerate()
                .map(|(k, l)| l.r * i_sq[(k, t)])
                .sum::<f64>()
                * scale
        })
        .collect();
    let total = per_step.iter().sum();
    (per_step, total)
}

/// Network state over the horizon under the linearised model.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSeries {
    /// Squared voltages, `N x H`, row `i` holding bus `i + 1`.
    pub v_sq: DMatrix<f64>,
    pub flows: LineFlows,
    pub i_sq: DMatrix<f64>,
    pub loss_per_step: Vec<f64>,
    pub total_loss: f64,
}

pub fn evaluate_network(feeder: &Feeder, pm: &PathMatrices, inj: &InjectionSeries, grid: &TimeGrid) -> NetworkSeries {
    let v_sq = voltages(pm, inj, feeder.v0());
    let flows = line_flows(feeder, inj);
    let i_sq = currents_sq(&flows, feeder.v0());
    let (loss_per_step, total_loss) = network_loss(feeder, &i_sq, grid);
    NetworkSeries {
        v_sq,
        flows,
        i_sq,
        loss_per_step,
        total_loss,
    }
}

/// Voltage and current limit audit. `tol` applies to the squared quantities.
pub fn check_network_limits(feeder: &Feeder, series: &NetworkSeries, tol: f64) -> Vec<Violation> {
    let spec = feeder.spec();
    let (lo, hi) = (spec.vmin_pu * spec.vmin_pu, spec.vmax_pu * spec.vmax_pu);
    let mut out = Vec::new();
    let h = series.v_sq.ncols();
    for t in 0..h {
        for i in 0..series.v_sq.nrows() {
            let v = series.v_sq[(i, t)];
            if v < lo - tol {
                out.push(Violation::UnderVoltage {
                    bus: i + 1,
                    t,
                    v_pu: v.max(0.0).sqrt(),
                    limit_pu: spec.vmin_pu,
                });
            } else if v > hi + tol {
                out.push(Violation::OverVoltage {
                    bus: i + 1,
                    t,
                    v_pu: v.sqrt(),
                    limit_pu: spec.vmax_pu,
                });
            }
        }
        for (k, line) in feeder.lines.iter().enumerate() {
            if let Some(imax) = line.imax {
                let limit = imax * imax;
                if series.i_sq[(k, t)] > limit + tol {
                    out.push(Violation::OverCurrent {
                        from: line.parent,
                        to: line.child,
                        t,
                        i_sq_pu: series.i_sq[(k, t)],
                        limit_sq_pu: limit,
                    });
                }
            }
        }
    }
    out
}

pub const ORACLE_TOL: f64 = 1e-8;
pub const ORACLE_MAX_ITER: usize = 100;

/// Squared voltages at interval `t` satisfying the full branch-flow equations
/// including loss terms, by backward/forward sweep.
pub fn nonlinear_distflow(feeder: &Feeder, inj: &InjectionSeries, t: usize) -> Result<Vec<f64>> {
    if t >= inj.intervals() {
        return Err(Error::InvalidArgument(format!("interval {t} out of range")));
    }
    let n_bus = feeder.n_buses() + 1;
    let n_lines = feeder.lines.len();
    let v0_sq = feeder.v0() * feeder.v0();
    let mut v_sq = vec![v0_sq; n_bus];
    let mut ell = vec![0.0; n_lines];
    let mut p_line = vec![0.0; n_lines];
    let mut q_line = vec![0.0; n_lines];
    let order = feeder.bfs_order();
    for _ in 0..ORACLE_MAX_ITER {
        // Backward sweep: flows include downstream consumption and losses.
        let mut acc_p = vec![0.0; n_bus];
        let mut acc_q = vec![0.0; n_bus];
        for b in 1..n_bus {
            acc_p[b] = inj.p[(b - 1, t)];
            acc_q[b] = inj.q[(b - 1, t)];
        }
        for &b in order.iter().rev() {
            if let Some(k) = feeder.feeding_line[b] {
                let line = feeder.lines[k];
                p_line[k] = acc_p[b] + line.r * ell[k];
                q_line[k] = acc_q[b] + line.x * ell[k];
                acc_p[line.parent] += p_line[k];
                acc_q[line.parent] += q_line[k];
            }
        }
        let mut next = vec![v0_sq; n_bus];
        let mut next_ell = vec![0.0; n_lines];
        for &b in order {
            if let Some(k) = feeder.feeding_line[b] {
                let line = feeder.lines[k];
                let vi = next[line.parent];
                next_ell[k] = (p_line[k] * p_line[k] + q_line[k] * q_line[k]) / vi;
                next[b] = vi - 2.0 * (line.r * p_line[k] + line.x * q_line[k])
                    + (line.r * line.r + line.x * line.x) * next_ell[k];
                if !(next[b] > 0.0) || !next[b].is_finite() {
                    return Err(Error::OracleDivergence { t, iterations: 0 });
                }
            }
        }
        let dv = next
            .iter()
            .zip(&v_sq)
            .map(|(a, b)| (a.sqrt() - b.sqrt()).abs())
            .fold(0.0, f64::max);
        let dl = next_ell
            .iter()
            .zip(&ell)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v_sq = next;
        ell = next_ell;
        if dv < ORACLE_TOL && dl < ORACLE_TOL {
            v_sq.remove(0);
            return Ok(v_sq);
        }
    }
    Err(Error::OracleDivergence {
        t,
        iterations: ORACLE_MAX_ITER,
    })
}

/// Gap between the linear model and the nonlinear oracle, in voltage
/// magnitude (p.u.).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationReport {
    pub max_abs_error_pu: f64,
    pub mean_abs_error_pu: f64,
    pub worst_bus: usize,
    pub worst_interval: usize,
    pub evaluated_intervals: usize,
    pub diverged_intervals: Vec<usize>,
}

pub fn linearization_report(feeder: &Feeder, pm: &PathMatrices, inj: &InjectionSeries) -> LinearizationReport {
    let v_lin = voltages(pm, inj, feeder.v0());
    let per_t = par::map_range(inj.intervals(), |t| nonlinear_distflow(feeder, inj, t));
    let mut max_err = 0.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut worst = (0, 0);
    let mut diverged = Vec::new();
    for (t, res) in per_t.into_iter().enumerate() {
        match res {
            Ok(v_exact) => {
                for (i, ve) in v_exact.iter().enumerate() {
                    let err = (v_lin[(i, t)].max(0.0).sqrt() - ve.sqrt()).abs();
                    sum += err;
                    count += 1;
                    if err > max_err {
                        max_err = err;
                        worst = (i + 1, t);
                    }
                }
            }
            Err(_) => diverged.push(t),
        }
    }
    LinearizationReport {
        max_abs_error_pu: max_err,
        mean_abs_error_pu: if count > 0 { sum / count as f64 } else { 0.0 },
        worst_bus: worst.0,
        worst_interval: worst.1,
        evaluated_intervals: inj.intervals() - diverged.len(),
        diverged_intervals: diverged,
    }
}
