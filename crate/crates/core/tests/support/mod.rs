//! Tiny instances and an exhaustive grid-search reference for the scalarised
//! scheduling problem. Shared with the command-line acceptance suite.
#![allow(dead_code)]

use ces_core::model::{CesSpec, TimeGrid, UserKind, UserProfile};
use ces_core::network::{FeederSpec, LineSpec};
use ces_core::optimizer::WeightSpec;
use ces_core::scenario::{Scenario, WeightSource};

pub const GRID_STEP_KWH: f64 = 0.1;

/// Slack bus 0 feeding bus 1, which hosts one participant and the storage.
/// Two one-hour intervals: midday surplus of 2 kWh, evening deficit of
/// 2.5 kWh, with an early price above the late one so cost and loss pull the
/// storage in opposite directions.
pub fn two_bus_instance() -> Scenario {
    let feeder = FeederSpec {
        v_base_v: 400.0,
        s_base_va: 100_000.0,
        v0_pu: 1.0,
        vmin_pu: 0.9,
        vmax_pu: 1.1,
        buses: vec![0, 1],
        lines: vec![LineSpec {
            from: 0,
            to: 1,
            r_ohm: 0.05,
            x_ohm: 0.02,
            imax_a: None,
        }],
    };
    let user = UserProfile::new("u1", 1, UserKind::Participant, vec![0.5, 2.5], vec![2.5, 0.0], None).unwrap();
    let ces = CesSpec {
        bus: 1,
        b_max: 4.0,
        b_min: 0.0,
        gamma_ch: 2.0,
        gamma_dis: 2.0,
        eta_c: 1.0,
        eta_d: 1.0,
        b0: 2.0,
        theta: 0.5,
    };
    Scenario::new(
        feeder,
        vec![user],
        vec![0.3, 0.1],
        Some(ces),
        TimeGrid::new(2, 1.0).unwrap(),
        WeightSource::default(),
    )
    .unwrap()
}

/// Grid-search result: objective values at the best point.
#[derive(Debug, Clone, Copy)]
pub struct GridOptimum {
    pub value: f64,
    pub f_cost: f64,
    pub f_loss: f64,
    pub cost_utopia: f64,
    pub cost_nadir: f64,
    pub loss_utopia: f64,
    pub loss_nadir: f64,
}

/// Feasible `(cost, loss)` pairs of every grid point of the storage-to-grid
/// variant on a single-line feeder: charge and discharge per interval each
/// range over `[0, rating * dt]` in steps of [`GRID_STEP_KWH`].
pub fn feasible_points(sc: &Scenario) -> Vec<(f64, f64)> {
    let ces = sc.ces.expect("storage");
    let h = sc.intervals();
    let dt = sc.grid.delta_t_h();
    let spec = sc.feeder.spec();
    assert_eq!(spec.lines.len(), 1, "single-line feeder only");
    let line = &spec.lines[0];
    let z_base = spec.v_base_v * spec.v_base_v / spec.s_base_va;
    let (r, x) = (line.r_ohm / z_base, line.x_ohm / z_base);
    let s_kw = spec.s_base_va / 1000.0;
    let v0_sq = spec.v0_pu * spec.v0_pu;

    let mut deficit = vec![0.0; h];
    let mut reactive = vec![0.0; h];
    for u in &sc.users {
        for t in 0..h {
            deficit[t] += u.demand[t] - u.pv[t];
            reactive[t] += u.reactive[t];
        }
    }
    let levels = |limit: f64| -> Vec<f64> {
        let n = (limit * dt / GRID_STEP_KWH + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * GRID_STEP_KWH).collect()
    };
    let (ch, dis) = (levels(ces.gamma_ch), levels(ces.gamma_dis));

    let mut out = Vec::new();
    let mut idx = vec![(0usize, 0usize); h];
    'outer: loop {
        let mut soc = ces.b0;
        let mut ok = true;
        let mut cost = 0.0;
        let mut loss = 0.0;
        for t in 0..h {
            let (p, m) = (ch[idx[t].0], dis[idx[t].1]);
            soc += ces.eta_c * p - ces.eta_d * m;
            if soc < ces.b_min - 1e-9 || soc > ces.b_max + 1e-9 {
                ok = false;
            }
            // Storage-to-grid: participants trade with storage, storage with the grid.
            let grid_kwh = deficit[t] + p - m;
            cost += sc.prices[t] * grid_kwh;
            let pu = grid_kwh / (dt * s_kw);
            let qu = reactive[t] / (dt * s_kw);
            let v_sq = v0_sq - 2.0 * (r * pu + x * qu);
            if v_sq < spec.vmin_pu * spec.vmin_pu - 1e-9 || v_sq > spec.vmax_pu * spec.vmax_pu + 1e-9 {
                ok = false;
            }
            loss += r * (pu * pu + qu * qu) / v0_sq * s_kw * dt;
        }
        if (soc - ces.b0).abs() > ces.theta + 1e-9 {
            ok = false;
        }
        if ok {
            out.push((cost, loss));
        }
        for i in idx.iter_mut() {
            i.0 += 1;
            if i.0 < ch.len() {
                continue 'outer;
            }
            i.0 = 0;
            i.1 += 1;
            if i.1 < dis.len() {
                continue 'outer;
            }
            i.1 = 0;
        }
        break;
    }
    out
}

/// Minimum of the normalised weighted sum over the grid, with utopia and
/// nadir also taken from the grid (the cost anchor breaks ties by loss).
pub fn grid_optimum(sc: &Scenario, w: &WeightSpec) -> GridOptimum {
    let pts = feasible_points(sc);
    assert!(!pts.is_empty(), "no feasible grid point");
    let cmp = |a: &(f64, f64), b: &(f64, f64)| a.partial_cmp(b).unwrap();
    let cost_anchor = *pts.iter().min_by(|a, b| cmp(a, b)).unwrap();
    let loss_anchor = *pts.iter().min_by(|a, b| cmp(&(a.1, a.0), &(b.1, b.0))).unwrap();
    let (cu, cn) = (cost_anchor.0, cost_anchor.0.max(loss_anchor.0));
    let (lu, ln) = (loss_anchor.1, loss_anchor.1.max(cost_anchor.1));
    let norm = |v: f64, u: f64, n: f64| if n - u > 1e-12 { (v - u) / (n - u) } else { 0.0 };
    let (value, best) = pts
        .iter()
        .map(|&(c, l)| (w.w1 * norm(c, cu, cn) + w.w2 * norm(l, lu, ln), (c, l)))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap();
    GridOptimum {
        value,
        f_cost: best.0,
        f_loss: best.1,
        cost_utopia: cu,
        cost_nadir: cn,
        loss_utopia: lu,
        loss_nadir: ln,
    }
}

/// The two-bus feeder with a single household in deficit in both intervals.
pub fn deficit_instance() -> Scenario {
    let base = two_bus_instance();
    let user = UserProfile::new("u1", 1, UserKind::Participant, vec![2.0, 3.0], vec![0.0, 0.0], None).unwrap();
    Scenario::new(
        base.feeder.spec().clone(),
        vec![user],
        base.prices.clone(),
        base.ces,
        base.grid,
        base.weights,
    )
    .unwrap()
}

/// Feasible `(cost, loss)` pairs of the peer-to-peer variant with every
/// participant in deficit, enumerating the grid trade `E_P(t)` over
/// `[0, deficit]` and the storage-to-grid trade `e_g(t)` over `[-lim, lim]`
/// in steps of [`GRID_STEP_KWH`]. The storage flow closes the balance.
pub fn feasible_trades(sc: &Scenario, lim: f64) -> Vec<(f64, f64)> {
    let ces = sc.ces.expect("storage");
    assert_eq!(sc.intervals(), 2, "two intervals only");
    assert!(sc.users.iter().all(|u| u.is_participant()));
    let dt = sc.grid.delta_t_h();
    let spec = sc.feeder.spec();
    let line = &spec.lines[0];
    let z_base = spec.v_base_v * spec.v_base_v / spec.s_base_va;
    let r = line.r_ohm / z_base;
    let s_kw = spec.s_base_va / 1000.0;
    let deficit: Vec<f64> = (0..2)
        .map(|t| sc.users.iter().map(|u| u.demand[t] - u.pv[t]).sum())
        .collect();
    assert!(deficit.iter().all(|d| *d >= 0.0));
    let steps = |lo: f64, hi: f64| -> Vec<f64> {
        let n = ((hi - lo) / GRID_STEP_KWH + 1e-9).floor() as i64;
        (0..=n).map(|k| lo + k as f64 * GRID_STEP_KWH).collect()
    };
    let per_interval: Vec<Vec<(f64, f64, f64)>> = (0..2)
        .map(|t| {
            let mut out = Vec::new();
            for e_p in steps(0.0, deficit[t]) {
                for e_g in steps(-lim, lim) {
                    let e_s = e_p + e_g - deficit[t];
                    if e_s > ces.gamma_ch * dt + 1e-9 || -e_s > ces.gamma_dis * dt + 1e-9 {
                        continue;
                    }
                    let pu = (deficit[t] + e_s) / (dt * s_kw);
                    out.push((e_s, sc.prices[t] * (e_p + e_g), r * pu * pu * s_kw * dt));
                }
            }
            out
        })
        .collect();
    let mut out = Vec::new();
    for a in &per_interval[0] {
        for b in &per_interval[1] {
            let mut soc = ces.b0;
            let mut ok = true;
            for e_s in [a.0, b.0] {
                soc += if e_s >= 0.0 { ces.eta_c } else { ces.eta_d } * e_s;
                ok &= soc >= ces.b_min - 1e-9 && soc <= ces.b_max + 1e-9;
            }
            if ok && (soc - ces.b0).abs() <= ces.theta + 1e-9 {
                out.push((a.1 + b.1, a.2 + b.2));
            }
        }
    }
    out
}
