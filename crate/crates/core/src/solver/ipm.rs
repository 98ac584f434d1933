//! Infeasible-start primal-dual interior-point iterations with Mehrotra
//! predictor-corrector steps.
//!
//! Inequalities `g_i(x) <= 0` carry slacks `s_i` and multipliers `z_i`; the
//! Newton system is reduced to the normal form
//! `(W + J^T diag(z/s) J) dx + A^T dy = r`, factorised densely, with any
//! remaining equality rows handled through a Schur complement.

use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::presolve::{presolve, Reduced, Row};
use super::program::{ConvexProgram, QuadExpr, SparseVec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative tolerance on primal residual, dual residual and gap.
    pub tol: f64,
    /// Dual residual accepted once primal residual and gap meet `tol` but
    /// the dual residual stops improving.
    pub acceptable_dual_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            acceptable_dual_tol: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Objective at `x`, evaluated on the caller's expression.
    pub objective: f64,
    pub iterations: usize,
    /// Largest constraint violation at `x`, in the caller's units.
    pub max_violation: f64,
    /// Scaled KKT residuals at termination.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

/// Minimises `objective` over `program`.
pub fn solve(program: &ConvexProgram, objective: &QuadExpr, settings: &SolverSettings) -> Result<Solution> {
    let reduced = presolve(program, objective)?;
    match run(&reduced, settings) {
        Outcome::Converged(state) => {
            let x = reduced.postsolve(&state.x);
            Ok(Solution {
                objective: objective.eval(&x),
                max_violation: program.max_violation(&x),
                x,
                iterations: state.iterations,
                primal_residual: state.pres,
                dual_residual: state.dres,
                gap: state.gap,
            })
        }
        Outcome::Failed { reason, iterations } => {
            debug!("main solve failed ({reason}); checking feasibility");
            Err(diagnose(&reduced, settings, reason, iterations))
        }
    }
}

/// Solves the least-violation problem to tell infeasibility apart from
/// numerical trouble. Constraints carrying positive multipliers at its
/// optimum form the infeasibility certificate.
fn diagnose(reduced: &Reduced, settings: &SolverSettings, reason: String, iterations: usize) -> Error {
    let elastic = reduced.elastic();
    match run(&elastic, settings) {
        Outcome::Converged(state) => {
            let v = state.x[reduced.n];
            if v > 1e-6 {
                let total: f64 = state.z.iter().sum();
                let mut weighted: Vec<(f64, &String)> = state
                    .z
                    .iter()
                    .zip(&elastic.labels)
                    .take(reduced.rows.len())
                    .filter(|(z, _)| **z > 1e-4 * total)
                    .map(|(z, l)| (*z, l))
                    .collect();
                weighted.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
                Error::Infeasible {
                    conflicts: weighted.into_iter().map(|(_, l)| l.clone()).collect(),
                }
            } else {
                Error::NonConvergence { iterations, reason }
            }
        }
        Outcome::Failed { .. } => Error::NonConvergence { iterations, reason },
    }
}

struct State {
    x: Vec<f64>,
    z: Vec<f64>,
    iterations: usize,
    pres: f64,
    dres: f64,
    gap: f64,
}

enum Outcome {
    Converged(State),
    Failed { reason: String, iterations: usize },
}

struct Factor {
    /// Unregularised matrix, full symmetric, for iterative refinement.
    m: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `M^-1 A^T` and the Cholesky factor of `A M^-1 A^T`.
    schur: Option<(DMatrix<f64>, Cholesky<f64, Dyn>)>,
}

const REFINE_STEPS: usize = 3;

impl Factor {
    fn new(mut m: DMatrix<f64>, eq: &DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        for j in 0..n {
            for i in 0..j {
                m[(i, j)] = m[(j, i)];
            }
        }
        // Regularisation relative to each diagonal entry keeps badly scaled
        // columns from being swamped by the largest one.
        let max_diag = (0..n).fold(1e-300f64, |a, i| a.max(m[(i, i)].abs()));
        let mut rel = 1e-14;
        let chol = loop {
            let mut trial = m.clone();
            for i in 0..n {
                trial[(i, i)] += rel * m[(i, i)].abs() + 1e-30 * max_diag;
            }
            if let Some(c) = Cholesky::new(trial) {
                break c;
            }
            rel *= 100.0;
            if rel > 1e-2 {
                return None;
            }
        };
        let schur = if eq.nrows() > 0 {
            let minv_at = chol.solve(&eq.transpose());
            let mut k = eq * &minv_at;
            let kd = (0..k.nrows()).fold(1e-300f64, |a, i| a.max(k[(i, i)]));
            for i in 0..k.nrows() {
                k[(i, i)] += 1e-13 * kd;
            }
            Some((minv_at, Cholesky::new(k)?))
        } else {
            None
        };
        Some(Self { m, chol, schur })
    }

    fn solve_once(&self, eq: &DMatrix<f64>, rx: &DVector<f64>, re: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match &self.schur {
            None => (self.chol.solve(rx), DVector::zeros(0)),
            Some((minv_at, k)) => {
                let minv_rx = self.chol.solve(rx);
                let dy = k.solve(&(eq * &minv_rx - re));
                let dx = minv_rx - minv_at * &dy;
                (dx, dy)
            }
        }
    }

    /// Solves `M dx + A^T dy = rx`, `A dx = re`, refining against the
    /// unregularised `M`.
    fn solve(&self, eq: &DMatrix<f64>, rx: &DVector<f64>, re: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut dx, mut dy) = self.solve_once(eq, rx, re);
        let scale = rx.amax().max(if re.is_empty() { 0.0 } else { re.amax() }).max(1e-300);
        for _ in 0..REFINE_STEPS {
            let mut res_x = rx - &self.m * &dx;
            if eq.nrows() > 0 {
                res_x -= eq.transpose() * &dy;
            }
            let res_e = re - eq * &dx;
            let err = res_x.amax().max(if res_e.is_empty() { 0.0 } else { res_e.amax() });
            if err <= 1e-14 * scale {
                break;
            }
            let (cx, cy) = self.solve_once(eq, &res_x, &res_e);
            dx += cx;
            dy += cy;
        }
        (dx, dy)
    }
}

/// Extra iterations allowed to reach full tolerance after an acceptable
/// iterate has been seen.
const ACCEPTABLE_GRACE: usize = 5;

fn initial_point(red: &Reduced) -> Vec<f64> {
    (0..red.n)
        .map(|j| {
            let (l, u) = (red.lower[j], red.upper[j]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l.max(0.0) + 1.0,
                (false, true) => u.min(0.0) - 1.0,
                (false, false) => 0.0,
            }
        })
        .collect()
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(1.0, f64::min)
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn run(red: &Reduced, settings: &SolverSettings) -> Outcome {
    let n = red.n;
    let m = red.rows.len();
    let me = red.eq.len();
    let mut eq = DMatrix::zeros(me, n);
    let mut eq_rhs = DVector::zeros(me);
    for (r, (a, b)) in red.eq.iter().enumerate() {
        for (j, v) in a.iter() {
            eq[(r, j)] = v;
        }
        eq_rhs[r] = *b;
    }

    let mut x = initial_point(red);
    let obj_scale = {
        let mut g = vec![0.0; n];
        red.objective.add_gradient(&x, 1.0, &mut g);
        let gmax = norm_inf(&g);
        if gmax > 0.0 {
            (1.0 / gmax).clamp(1e-6, 1e6)
        } else {
            1.0
        }
    };
    let objective = red.objective.scaled(obj_scale);

    if n == 0 {
        return Outcome::Converged(State {
            x,
            z: Vec::new(),
            iterations: 0,
            pres: 0.0,
            dres: 0.0,
            gap: 0.0,
        });
    }

    let mut s: Vec<f64> = red.rows.iter().map(|r| (-r.value(&x)).max(1.0)).collect();
    let mut z = vec![1.0; m];
    let mut y = DVector::zeros(me);
    let mut stalls = 0;
    let mut acceptable: Option<(State, usize)> = None;

    for iter in 0..settings.max_iter {
        let g: Vec<f64> = red.rows.iter().map(|r| r.value(&x)).collect();
        let jac: Vec<SparseVec> = red.rows.iter().map(|r| r.gradient(&x)).collect();
        let mut grad_f = vec![0.0; n];
        objective.add_gradient(&x, 1.0, &mut grad_f);
        let f = objective.eval(&x);

        let mut r_d = grad_f.clone();
        for (row, zi) in jac.iter().zip(&z) {
            row.axpy_into(*zi, &mut r_d);
        }
        if me > 0 {
            let aty = eq.transpose() * &y;
            for j in 0..n {
                r_d[j] += aty[j];
            }
        }
        let r_p: Vec<f64> = g.iter().zip(&s).map(|(g, s)| g + s).collect();
        let xv = DVector::from_column_slice(&x);
        let r_e: DVector<f64> = &eq * &xv - &eq_rhs;
        let sz: f64 = s.iter().zip(&z).map(|(s, z)| s * z).sum();
        let mu = if m > 0 { sz / m as f64 } else { 0.0 };

        let pres = norm_inf(&r_p).max(norm_inf(r_e.as_slice()));
        let dres = norm_inf(&r_d) / (1.0 + norm_inf(&grad_f));
        let gap = sz / (1.0 + f.abs());
        if pres <= settings.tol && dres <= settings.tol && gap <= settings.tol {
            return Outcome::Converged(State {
                x,
                z,
                iterations: iter,
                pres,
                dres,
                gap,
            });
        }
        if pres <= settings.tol && gap <= settings.tol && dres <= settings.acceptable_dual_tol {
            let better = acceptable.as_ref().is_none_or(|(best, _)| dres < best.dres);
            if better {
                let since = acceptable.as_ref().map_or(iter, |(_, first)| *first);
                acceptable = Some((
                    State {
                        x: x.clone(),
                        z: z.clone(),
                        iterations: iter,
                        pres,
                        dres,
                        gap,
                    },
                    since,
                ));
            }
        }
        if let Some((_, first)) = &acceptable {
            if iter >= first + ACCEPTABLE_GRACE {
                let (state, _) = acceptable.take().expect("checked above");
                debug!(
                    "accepting iterate {} with dual residual {:.2e}",
                    state.iterations, state.dres
                );
                return Outcome::Converged(state);
            }
        }
        if !(pres.is_finite() && dres.is_finite() && gap.is_finite()) {
            return give_up(acceptable, "non-finite residuals".into(), iter);
        }
        if norm_inf(&z) > 1e12 {
            return give_up(acceptable, "multipliers diverged".into(), iter);
        }

        let d: Vec<f64> = s.iter().zip(&z).map(|(s, z)| z / s).collect();
        let mut mat = DMatrix::zeros(n, n);
        objective.add_hessian_lower(1.0, &mut mat);
        for (i, row) in red.rows.iter().enumerate() {
            if let Row::Quad { q, .. } = row {
                q.add_hessian_lower(z[i], &mut mat);
            }
            jac[i].rank_one_lower(d[i], &mut mat);
        }
        let Some(factor) = Factor::new(mat, &eq) else {
            return give_up(acceptable, "Newton system is not positive definite".into(), iter);
        };

        // rc holds the complementarity residual divided by s.
        let direction = |rc_over_s: &[f64]| {
            let mut rhs = r_d.iter().map(|v| -v).collect::<Vec<f64>>();
            for i in 0..m {
                jac[i].axpy_into(-(d[i] * r_p[i] - rc_over_s[i]), &mut rhs);
            }
            let (dx, dy) = factor.solve(&eq, &DVector::from_vec(rhs), &(-&r_e));
            let jdx: Vec<f64> = jac.iter().map(|row| row.dot(dx.as_slice())).collect();
            let dz: Vec<f64> = (0..m).map(|i| d[i] * (jdx[i] + r_p[i]) - rc_over_s[i]).collect();
            let ds: Vec<f64> = (0..m).map(|i| -r_p[i] - jdx[i]).collect();
            (dx, dy, ds, dz)
        };

        let (_, _, ds_a, dz_a) = direction(&z);
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = if m > 0 {
            (0..m)
                .map(|i| (s[i] + alpha_aff * ds_a[i]) * (z[i] + alpha_aff * dz_a[i]))
                .sum::<f64>()
                / m as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };
        let rc_over_s: Vec<f64> = (0..m)
            .map(|i| (s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu) / s[i])
            .collect();
        let (dx, dy, ds, dz) = direction(&rc_over_s);
        let alpha_max = max_step(&s, &ds).min(max_step(&z, &dz));
        let alpha = (0.99 * alpha_max).min(1.0);

        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
        if me > 0 {
            y += dy * alpha;
        }
        debug!("iter {iter:3} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} sigma {sigma:.2e} alpha {alpha:.3}");
        if alpha < 1e-8 {
            stalls += 1;
            if stalls >= 5 {
                return give_up(acceptable, "step length collapsed".into(), iter);
            }
        } else {
            stalls = 0;
        }
    }
    if acceptable.is_none() {
        warn!("interior-point iteration cap of {} reached", settings.max_iter);
    }
    give_up(acceptable, "iteration cap reached".into(), settings.max_iter)
}

/// Falls back to the best acceptable iterate, if any, when the iterations
/// cannot continue.
fn give_up(acceptable: Option<(State, usize)>, reason: String, iterations: usize) -> Outcome {
    match acceptable {
        Some((state, _)) => Outcome::Converged(state),
        None => Outcome::Failed { reason, iterations },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{AffineExpr, ConvexProgram, QuadExpr, SparseVec};
    use proptest::prelude::*;

    fn sv(p: &[(usize, f64)]) -> SparseVec {
        SparseVec::from_pairs(p.iter().copied())
    }

    fn sq(w: f64, coef: &[(usize, f64)], c: f64) -> (f64, AffineExpr) {
        (w, AffineExpr::new(sv(coef), c))
    }

    #[test]
    fn linear_program() {
        let mut p = ConvexProgram::default();
        p.add_var("x", 0.0, f64::INFINITY);
        p.add_var("y", 0.0, f64::INFINITY);
        p.add_le("sum", sv(&[(0, 1.0), (1, 1.0)]), 1.0);
        let obj = QuadExpr::linear(sv(&[(0, -1.0), (1, -2.0)]), 0.0);
        let sol = solve(&p, &obj, &SolverSettings::default()).unwrap();
        assert!((sol.objective + 2.0).abs() < 1e-7, "{}", sol.objective);
        assert!((sol.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_program() {
        let mut p = ConvexProgram::default();
        p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        p.add_le("sum", sv(&[(0, 1.0), (1, 1.0)]), 1.0);
        let obj = QuadExpr {
            squares: vec![sq(1.0, &[(0, 1.0)], -1.0), sq(1.0, &[(1, 1.0)], -2.0)],
            ..Default::default()
        };
        let sol = solve(&p, &obj, &SolverSettings::default()).unwrap();
        assert!((sol.x[0]).abs() < 1e-6 && (sol.x[1] - 1.0).abs() < 1e-6, "{:?}", sol.x);
        assert!((sol.objective - 2.0).abs() < 1e-7);
    }

    #[test]
    fn quadratic_constraint() {
        let mut p = ConvexProgram::default();
        p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        p.add_quad_le(
            "disc",
            QuadExpr {
                squares: vec![sq(1.0, &[(0, 1.0)], 0.0), sq(1.0, &[(1, 1.0)], 0.0)],
                ..Default::default()
            },
            1.0,
        );
        let obj = QuadExpr::linear(sv(&[(0, -3.0), (1, -4.0)]), 0.0);
        let sol = solve(&p, &obj, &SolverSettings::default()).unwrap();
        assert!(
            (sol.x[0] - 0.6).abs() < 1e-6 && (sol.x[1] - 0.8).abs() < 1e-6,
            "{:?}",
            sol.x
        );
        assert!((sol.objective + 5.0).abs() < 1e-7);
    }

    #[test]
    fn free_singleton_is_eliminated() {
        let mut p = ConvexProgram::default();
        p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_var("y", 0.0, 5.0);
        p.add_eq("link", sv(&[(0, 1.0), (1, -1.0)]), 1.0);
        let obj = QuadExpr::linear(sv(&[(0, 1.0), (1, 2.0)]), 0.0);
        let sol = solve(&p, &obj, &SolverSettings::default()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-7);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn remaining_equality_uses_schur_complement() {
        let mut p = ConvexProgram::default();
        p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        p.add_eq("sum", sv(&[(0, 1.0), (1, 1.0)]), 1.0);
        let obj = QuadExpr {
            squares: vec![sq(1.0, &[(0, 1.0)], 0.0), sq(1.0, &[(1, 1.0)], 0.0)],
            ..Default::default()
        };
        let sol = solve(&p, &obj, &SolverSettings::default()).unwrap();
        assert!((sol.objective - 0.5).abs() < 1e-7);
    }

    #[test]
    fn fixed_variables_are_substituted() {
        let mut p = ConvexProgram::default();
        p.add_var("x", 2.0, 2.0);
        p.add_var("y", 0.0, 10.0);
        p.add_le("cap", sv(&[(0, 1.0), (1, 1.0)]), 5.0);
        let obj = QuadExpr::linear(sv(&[(1, -1.0)]), 0.0);
        let sol = solve(&p, &obj, &SolverSettings::default()).unwrap();
        assert_eq!(sol.x[0], 2.0);
        assert!((sol.x[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_rows_are_named() {
        let mut p = ConvexProgram::default();
        p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_var("y", 0.0, 1.0);
        p.add_le("x at most 1", sv(&[(0, 1.0)]), 1.0);
        p.add_le("x at least 2", sv(&[(0, -1.0)]), -2.0);
        p.add_le("y harmless", sv(&[(1, 1.0)]), 0.5);
        let obj = QuadExpr::linear(sv(&[(0, 1.0)]), 0.0);
        match solve(&p, &obj, &SolverSettings::default()) {
            Err(Error::Infeasible { conflicts }) => {
                assert!(conflicts.contains(&"x at most 1".to_string()), "{conflicts:?}");
                assert!(conflicts.contains(&"x at least 2".to_string()), "{conflicts:?}");
                assert!(!conflicts.contains(&"y harmless".to_string()), "{conflicts:?}");
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn contradictory_bounds_are_rejected_in_presolve() {
        let mut p = ConvexProgram::default();
        p.add_var("x", 3.0, 1.0);
        let obj = QuadExpr::linear(sv(&[(0, 1.0)]), 0.0);
        assert!(matches!(
            solve(&p, &obj, &SolverSettings::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Box- and row-constrained 2-D convex QPs against a dense grid search.
        #[test]
        fn matches_grid_search(
            cx in -2.0f64..2.0, cy in -2.0f64..2.0, w in 0.0f64..3.0,
            lx in -1.0f64..1.0, ly in -1.0f64..1.0,
            a in -1.0f64..1.0, b in -1.0f64..1.0, rhs in 0.5f64..2.0,
        ) {
            let mut p = ConvexProgram::default();
            p.add_var("x", -2.0, 2.0);
            p.add_var("y", -2.0, 2.0);
            p.add_le("row", sv(&[(0, a), (1, b)]), rhs);
            let obj = QuadExpr {
                squares: vec![sq(w, &[(0, 1.0), (1, 0.5)], -cx), sq(1.0, &[(1, 1.0)], -cy)],
                linear: sv(&[(0, lx), (1, ly)]),
                constant: 0.0,
            };
            let sol = solve(&p, &obj, &SolverSettings::default()).unwrap();
            prop_assert!(sol.max_violation <= 1e-7);
            let mut best = f64::INFINITY;
            let steps = 400;
            for i in 0..=steps {
                for j in 0..=steps {
                    let pt = [-2.0 + 4.0 * i as f64 / steps as f64, -2.0 + 4.0 * j as f64 / steps as f64];
                    if a * pt[0] + b * pt[1] <= rhs {
                        best = best.min(obj.eval(&pt));
                    }
                }
            }
            prop_assert!(sol.objective <= best + 1e-7, "solver {} grid {}", sol.objective, best);
            prop_assert!(best - sol.objective <= 0.05, "solver {} grid {}", sol.objective, best);
        }
    }
}
