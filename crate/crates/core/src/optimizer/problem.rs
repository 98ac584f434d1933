use crate::error::Result;
use crate::model::{classify_users, EtsVariant};
use crate::network::{line_flows, voltages};
use crate::scenario::Scenario;
use crate::solver::{AffineExpr, ConvexProgram, QuadExpr, SolverSettings, SparseVec};

/// Which single objective to minimise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Cost,
    Loss,
}

/// Column positions of the decision blocks, each of length `H`:
/// `E_P`, `e_g`, `e_s_plus`, `e_s_minus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub intervals: usize,
}

impl VarLayout {
    pub fn e_p(&self, t: usize) -> usize {
        t
    }
    pub fn e_g(&self, t: usize) -> usize {
        self.intervals + t
    }
    pub fn plus(&self, t: usize) -> usize {
        2 * self.intervals + t
    }
    pub fn minus(&self, t: usize) -> usize {
        3 * self.intervals + t
    }
    pub fn n_vars(&self) -> usize {
        4 * self.intervals
    }
}

/// A variant's program together with both objectives, in kWh and currency.
#[derive(Debug, Clone)]
pub struct SchedulingProblem<'a> {
    pub scenario: &'a Scenario,
    pub variant: EtsVariant,
    pub layout: VarLayout,
    pub program: ConvexProgram,
    pub cost: QuadExpr,
    pub loss: QuadExpr,
    pub settings: SolverSettings,
}

impl SchedulingProblem<'_> {
    pub fn objective(&self, which: Objective) -> &QuadExpr {
        match which {
            Objective::Cost => &self.cost,
            Objective::Loss => &self.loss,
        }
    }

    /// `true` for the storage-free baseline, which has nothing to optimise.
    pub fn is_evaluation_only(&self) -> bool {
        self.program.n_vars() == 0
    }
}

/// Builds the convex program of `variant` on `scenario`.
///
/// The cost objective is written on the storage flow: on the feasible set
/// `E_P + e_g = e_s + sum e_n`, so `e_g` appears only in its defining
/// equality and the solver can eliminate it.
pub fn assemble_problem(scenario: &Scenario, variant: EtsVariant) -> Result<SchedulingProblem<'_>> {
    scenario.check_variant(variant)?;
    let h = scenario.intervals();
    let layout = VarLayout { intervals: h };
    let feeder = &scenario.feeder;
    let base_inj = scenario.injections(None)?;
    let base_flows = line_flows(feeder, &base_inj);
    let v0_sq = feeder.v0() * feeder.v0();
    let loss_scale = feeder.s_base_kw() * scenario.grid.delta_t_h() / v0_sq;
    let sum_e = scenario.aggregate_deficit();

    let Some(ces) = scenario.ces.filter(|_| variant.has_storage()) else {
        let mut loss = QuadExpr::default();
        for (k, line) in feeder.lines().iter().enumerate() {
            for t in 0..h {
                let (p, q) = (base_flows.p[(k, t)], base_flows.q[(k, t)]);
                loss.constant += line.r * loss_scale * (p * p + q * q);
            }
        }
        let cost: f64 = scenario.prices.iter().zip(&sum_e).map(|(l, e)| l * e).sum();
        return Ok(SchedulingProblem {
            scenario,
            variant,
            layout: VarLayout { intervals: 0 },
            program: ConvexProgram::default(),
            cost: QuadExpr::linear(SparseVec::new(), cost),
            loss,
            settings: SolverSettings::default(),
        });
    };

    let dt = scenario.grid.delta_t_h();
    let mut prog = ConvexProgram::default();
    let deficits = scenario.deficits();
    for t in 0..h {
        let (lo, hi) = match variant {
            EtsVariant::Ets1 => {
                let (def, sur) = classify_users(&deficits, t)?;
                if !def.is_empty() && !sur.is_empty() {
                    (0.0, 0.0)
                } else {
                    let s = |ix: &[usize]| ix.iter().map(|&n| deficits[n][t]).sum::<f64>();
                    (s(&sur), s(&def))
                }
            }
            EtsVariant::Ets2 => (0.0, 0.0),
            _ => (sum_e[t], sum_e[t]),
        };
        prog.add_var(format!("E_P[t={t}]"), lo, hi);
    }
    for t in 0..h {
        prog.add_var(format!("e_g[t={t}]"), f64::NEG_INFINITY, f64::INFINITY);
    }
    for t in 0..h {
        prog.add_var(format!("e_s_plus[t={t}]"), 0.0, ces.gamma_ch * dt);
    }
    for t in 0..h {
        prog.add_var(format!("e_s_minus[t={t}]"), 0.0, ces.gamma_dis * dt);
    }

    for t in 0..h {
        let coef = SparseVec::from_pairs([
            (layout.plus(t), 1.0),
            (layout.minus(t), -1.0),
            (layout.e_g(t), -1.0),
            (layout.e_p(t), -1.0),
        ]);
        prog.add_eq(format!("energy balance[t={t}]"), coef, -sum_e[t]);
    }

    // b(t) = b0 + sum_{k <= t} (eta_c p_k - eta_d m_k)
    let soc_row = |t: usize, sign: f64| {
        SparseVec::from_pairs(
            (0..=t).flat_map(|k| [(layout.plus(k), sign * ces.eta_c), (layout.minus(k), -sign * ces.eta_d)]),
        )
    };
    for t in 0..h {
        prog.add_le(format!("soc max[t={t}]"), soc_row(t, 1.0), ces.b_max - ces.b0);
        prog.add_le(format!("soc min[t={t}]"), soc_row(t, -1.0), ces.b0 - ces.b_min);
    }
    prog.add_le("continuity upper", soc_row(h - 1, 1.0), ces.theta);
    prog.add_le("continuity lower", soc_row(h - 1, -1.0), ces.theta);

    // Storage flow in per-unit injection at its bus per kWh of e_s.
    let k_pu = 1.0 / (dt * feeder.s_base_kw());
    let c = ces.bus - 1;
    let spec = feeder.spec();
    let (vmin_sq, vmax_sq) = (spec.vmin_pu * spec.vmin_pu, spec.vmax_pu * spec.vmax_pu);
    let base_v = voltages(&scenario.paths, &base_inj, feeder.v0());
    for t in 0..h {
        for i in 0..feeder.n_buses() {
            let g = 2.0 * scenario.paths.r[(i, c)] * k_pu;
            let vb = base_v[(i, t)];
            let flow = |s: f64| SparseVec::from_pairs([(layout.plus(t), s * g), (layout.minus(t), -s * g)]);
            prog.add_le(format!("voltage max bus {}[t={t}]", i + 1), flow(-1.0), vmax_sq - vb);
            prog.add_le(format!("voltage min bus {}[t={t}]", i + 1), flow(1.0), vb - vmin_sq);
        }
    }

    let on_path = feeder.path_lines(ces.bus);
    let storage_flow = |t: usize, p0: f64| {
        AffineExpr::new(
            SparseVec::from_pairs([(layout.plus(t), k_pu), (layout.minus(t), -k_pu)]),
            p0,
        )
    };
    let mut loss = QuadExpr::default();
    for (k, line) in feeder.lines().iter().enumerate() {
        let carries_storage = on_path.contains(&k);
        for t in 0..h {
            let (p0, q0) = (base_flows.p[(k, t)], base_flows.q[(k, t)]);
            let w = line.r * loss_scale;
            if carries_storage {
                loss.squares.push((w, storage_flow(t, p0)));
            } else {
                loss.constant += w * p0 * p0;
            }
            loss.constant += w * q0 * q0;
            if let Some(imax) = line.imax {
                let label = format!("current limit line {}-{}[t={t}]", line.parent, line.child);
                let mut expr = QuadExpr::linear(SparseVec::new(), q0 * q0 / v0_sq);
                if carries_storage {
                    expr.squares.push((1.0 / v0_sq, storage_flow(t, p0)));
                } else {
                    expr.constant += p0 * p0 / v0_sq;
                }
                prog.add_quad_le(label, expr, imax * imax);
            }
        }
    }

    let mut cost = QuadExpr::default();
    let mut pairs = Vec::with_capacity(2 * h);
    for t in 0..h {
        let price = scenario.prices[t];
        pairs.push((layout.plus(t), price));
        pairs.push((layout.minus(t), -price));
        cost.constant += price * sum_e[t];
    }
    cost.linear = SparseVec::from_pairs(pairs);

    Ok(SchedulingProblem {
        scenario,
        variant,
        layout,
        program: prog,
        cost,
        loss,
        settings: SolverSettings::default(),
    })
}
