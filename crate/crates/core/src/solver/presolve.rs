//! Removes fixed variables and free column singletons before the
//! interior-point iterations, and maps solutions back.

use super::program::{AffineExpr, ConvexProgram, QuadExpr, SparseVec};
use crate::error::{Error, Result};

const FIX_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
enum VarMap {
    Kept(usize),
    Fixed(f64),
    /// `x_j = (rhs - coef . x) / pivot`, with `coef` excluding `j`.
    Eliminated {
        coef: SparseVec,
        rhs: f64,
        pivot: f64,
    },
}

/// Inequality `g(x) <= 0` in reduced coordinates, row-scaled.
#[derive(Debug, Clone)]
pub(super) enum Row {
    Linear { a: SparseVec, b: f64 },
    Quad { q: QuadExpr, b: f64 },
}

impl Row {
    pub(super) fn value(&self, x: &[f64]) -> f64 {
        match self {
            Row::Linear { a, b } => a.dot(x) - b,
            Row::Quad { q, b } => q.eval(x) - b,
        }
    }

    pub(super) fn gradient(&self, x: &[f64]) -> SparseVec {
        match self {
            Row::Linear { a, .. } => a.clone(),
            Row::Quad { q, .. } => q.gradient_sparse(x),
        }
    }
}

#[derive(Debug, Clone)]
pub(super) struct Reduced {
    pub n: usize,
    pub objective: QuadExpr,
    pub eq: Vec<(SparseVec, f64)>,
    pub rows: Vec<Row>,
    pub labels: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    map: Vec<VarMap>,
}

impl Reduced {
    pub(super) fn postsolve(&self, xr: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .map
            .iter()
            .map(|m| match m {
                VarMap::Kept(k) => xr[*k],
                VarMap::Fixed(v) => *v,
                VarMap::Eliminated { .. } => 0.0,
            })
            .collect();
        for j in 0..x.len() {
            if let VarMap::Eliminated { coef, rhs, pivot } = &self.map[j] {
                x[j] = (rhs - coef.dot(&x)) / pivot;
            }
        }
        x
    }

    /// Appends `v` as a new variable and relaxes every inequality to
    /// `g(x) <= v`; used to find the least-violating point.
    pub(super) fn elastic(&self) -> Reduced {
        let v = self.n;
        let rows = self
            .rows
            .iter()
            .map(|r| match r {
                Row::Linear { a, b } => Row::Linear {
                    a: SparseVec::from_pairs(a.iter().chain([(v, -1.0)])),
                    b: *b,
                },
                Row::Quad { q, b } => Row::Quad {
                    q: QuadExpr {
                        squares: q.squares.clone(),
                        linear: SparseVec::from_pairs(q.linear.iter().chain([(v, -1.0)])),
                        constant: q.constant,
                    },
                    b: *b,
                },
            })
            .chain([Row::Linear {
                a: SparseVec::from_pairs([(v, -1.0)]),
                b: 1.0,
            }])
            .collect();
        let mut labels = self.labels.clone();
        labels.push("elastic floor".into());
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        lower.push(-1.0);
        upper.push(f64::INFINITY);
        Reduced {
            n: self.n + 1,
            objective: QuadExpr::linear(SparseVec::from_pairs([(v, 1.0)]), 0.0),
            eq: self.eq.clone(),
            rows,
            labels,
            lower,
            upper,
            map: Vec::new(),
        }
    }
}

pub(super) fn presolve(program: &ConvexProgram, objective: &QuadExpr) -> Result<Reduced> {
    let n = program.n_vars();
    if program.lower.len() != n || program.upper.len() != n {
        return Err(Error::InvalidArgument(
            "bound vectors do not match variable count".into(),
        ));
    }
    let mut conflicts = Vec::new();
    let mut map: Vec<Option<VarMap>> = vec![None; n];
    for j in 0..n {
        let (l, u) = (program.lower[j], program.upper[j]);
        if l > u + FIX_TOL * (1.0 + l.abs()) {
            conflicts.push(format!("bounds of {} ({l} > {u})", program.var_labels[j]));
        } else if l.is_finite() && u.is_finite() && (u - l).abs() <= FIX_TOL * (1.0 + l.abs()) {
            map[j] = Some(VarMap::Fixed(0.5 * (l + u)));
        }
    }
    if !conflicts.is_empty() {
        return Err(Error::Infeasible { conflicts });
    }

    // Free column singletons: free variables touched by exactly one equality
    // row and nothing else except the linear objective.
    let mut eq_count = vec![0usize; n];
    let mut other = vec![false; n];
    for c in &program.equalities {
        for &j in c.coef.indices() {
            eq_count[j] += 1;
        }
    }
    for c in &program.inequalities {
        for &j in c.coef.indices() {
            other[j] = true;
        }
    }
    for c in &program.quadratic {
        for &j in c.expr.linear.indices() {
            other[j] = true;
        }
        for j in c.expr.quadratic_support() {
            other[j] = true;
        }
    }
    for j in objective.quadratic_support() {
        other[j] = true;
    }
    let mut objective = objective.clone();
    let mut eq_used = vec![false; program.equalities.len()];
    for (r, c) in program.equalities.iter().enumerate() {
        let pick = c.coef.iter().find(|&(j, a)| {
            map[j].is_none()
                && eq_count[j] == 1
                && !other[j]
                && program.lower[j] == f64::NEG_INFINITY
                && program.upper[j] == f64::INFINITY
                && a.abs() > 1e-9 * c.coef.norm_inf()
        });
        if let Some((j, pivot)) = pick {
            let rest = SparseVec::from_pairs(c.coef.iter().filter(|(i, _)| *i != j));
            let cj = objective.linear.get(j);
            if cj != 0.0 {
                // c_j x_j = c_j (rhs - rest . x) / pivot
                let shift = rest.scaled(-cj / pivot);
                objective.linear =
                    SparseVec::from_pairs(objective.linear.iter().filter(|(i, _)| *i != j).chain(shift.iter()));
                objective.constant += cj * c.rhs / pivot;
            }
            map[j] = Some(VarMap::Eliminated {
                coef: rest,
                rhs: c.rhs,
                pivot,
            });
            eq_used[r] = true;
        }
    }

    let mut kept = 0;
    let map: Vec<VarMap> = map
        .into_iter()
        .map(|m| {
            m.unwrap_or_else(|| {
                kept += 1;
                VarMap::Kept(kept - 1)
            })
        })
        .collect();
    let reduce = |s: &SparseVec| -> (SparseVec, f64) {
        let mut shift = 0.0;
        let mut pairs = Vec::with_capacity(s.nnz());
        for (j, v) in s.iter() {
            match &map[j] {
                VarMap::Kept(k) => pairs.push((*k, v)),
                VarMap::Fixed(x) => shift += v * x,
                VarMap::Eliminated { .. } => unreachable!("eliminated variables appear in one row"),
            }
        }
        (SparseVec::from_pairs(pairs), shift)
    };
    let reduce_quad = |q: &QuadExpr| -> QuadExpr {
        let squares = q
            .squares
            .iter()
            .map(|(w, a)| {
                let (coef, shift) = reduce(&a.coef);
                (*w, AffineExpr::new(coef, a.constant + shift))
            })
            .collect();
        let (linear, shift) = reduce(&q.linear);
        QuadExpr {
            squares,
            linear,
            constant: q.constant + shift,
        }
    };

    let objective = reduce_quad(&objective);
    let mut eq = Vec::new();
    for (r, c) in program.equalities.iter().enumerate() {
        if eq_used[r] {
            continue;
        }
        let (a, shift) = reduce(&c.coef);
        let rhs = c.rhs - shift;
        if a.is_empty() {
            if rhs.abs() > 1e-9 * (1.0 + c.rhs.abs()) {
                conflicts.push(c.label.clone());
            }
            continue;
        }
        let scale = a.norm_inf();
        eq.push((a.scaled(1.0 / scale), rhs / scale));
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in &program.inequalities {
        let (a, shift) = reduce(&c.coef);
        let b = c.rhs - shift;
        if a.is_empty() {
            if b < -1e-9 * (1.0 + c.rhs.abs()) {
                conflicts.push(c.label.clone());
            }
            continue;
        }
        let scale = a.norm_inf();
        rows.push(Row::Linear {
            a: a.scaled(1.0 / scale),
            b: b / scale,
        });
        labels.push(c.label.clone());
    }
    for c in &program.quadratic {
        let q = reduce_quad(&c.expr);
        if q.is_linear() && q.linear.is_empty() {
            if q.eval(&[]) > c.rhs + 1e-9 * (1.0 + c.rhs.abs()) {
                conflicts.push(c.label.clone());
            }
            continue;
        }
        let scale = 1.0 / c.rhs.abs().max(1e-6);
        rows.push(Row::Quad {
            q: q.scaled(scale),
            b: c.rhs * scale,
        });
        labels.push(c.label.clone());
    }
    let mut lower = vec![0.0; kept];
    let mut upper = vec![0.0; kept];
    for (j, m) in map.iter().enumerate() {
        if let VarMap::Kept(k) = m {
            lower[*k] = program.lower[j];
            upper[*k] = program.upper[j];
            if program.upper[j].is_finite() {
                rows.push(Row::Linear {
                    a: SparseVec::from_pairs([(*k, 1.0)]),
                    b: program.upper[j],
                });
                labels.push(format!("upper bound of {}", program.var_labels[j]));
            }
            if program.lower[j].is_finite() {
                rows.push(Row::Linear {
                    a: SparseVec::from_pairs([(*k, -1.0)]),
                    b: -program.lower[j],
                });
                labels.push(format!("lower bound of {}", program.var_labels[j]));
            }
        }
    }
    if !conflicts.is_empty() {
        return Err(Error::Infeasible { conflicts });
    }
    Ok(Reduced {
        n: kept,
        objective,
        eq,
        rows,
        labels,
        lower,
        upper,
        map,
    })
}
