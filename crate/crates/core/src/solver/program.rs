use nalgebra::DMatrix;

/// Sparse vector with sorted, unique indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from `(index, value)` pairs; duplicates are summed and zeros dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut pairs: Vec<(usize, f64)> = pairs.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        let mut out = Self::default();
        for (i, v) in pairs {
            if out.idx.last() == Some(&i) {
                *out.val.last_mut().expect("non-empty") += v;
            } else {
                out.idx.push(i);
                out.val.push(v);
            }
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        let mut k = 0;
        for j in 0..self.idx.len() {
            if self.val[j] != 0.0 {
                self.idx[k] = self.idx[j];
                self.val[k] = self.val[j];
                k += 1;
            }
        }
        self.idx.truncate(k);
        self.val.truncate(k);
    }

    pub fn indices(&self) -> &[usize] {
        &self.idx
    }

    pub fn values(&self) -> &[f64] {
        &self.val
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }

    pub fn get(&self, i: usize) -> f64 {
        self.idx.binary_search(&i).map(|k| self.val[k]).unwrap_or(0.0)
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * x[i]).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_pairs(self.iter().map(|(i, v)| (i, v * factor)))
    }

    pub fn norm_inf(&self) -> f64 {
        self.val.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `out += factor * self`
    pub fn axpy_into(&self, factor: f64, out: &mut [f64]) {
        for (i, v) in self.iter() {
            out[i] += factor * v;
        }
    }

    /// Adds `weight * self * self^T` to the lower triangle of `m`.
    pub(crate) fn rank_one_lower(&self, weight: f64, m: &mut DMatrix<f64>) {
        if weight == 0.0 {
            return;
        }
        let n = m.nrows();
        let data = m.as_mut_slice();
        for (cb, (&col, &vc)) in self.idx.iter().zip(&self.val).enumerate() {
            let wc = weight * vc;
            let base = col * n;
            for (&row, &vr) in self.idx[cb..].iter().zip(&self.val[cb..]) {
                data[base + row] += wc * vr;
            }
        }
    }
}

/// `coef . x + constant`
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub coef: SparseVec,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(coef: SparseVec, constant: f64) -> Self {
        Self { coef, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coef.dot(x) + self.constant
    }
}

/// Convex quadratic `sum_k w_k (a_k . x + c_k)^2 + l . x + c0` with `w_k >= 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadExpr {
    pub squares: Vec<(f64, AffineExpr)>,
    pub linear: SparseVec,
    pub constant: f64,
}

impl QuadExpr {
    pub fn linear(linear: SparseVec, constant: f64) -> Self {
        Self {
            squares: Vec::new(),
            linear,
            constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.squares
            .iter()
            .map(|(w, a)| {
                let v = a.eval(x);
                w * v * v
            })
            .sum::<f64>()
            + self.linear.dot(x)
            + self.constant
    }

    /// `out += factor * grad`
    pub fn add_gradient(&self, x: &[f64], factor: f64, out: &mut [f64]) {
        for (w, a) in &self.squares {
            a.coef.axpy_into(factor * 2.0 * w * a.eval(x), out);
        }
        self.linear.axpy_into(factor, out);
    }

    pub fn gradient_sparse(&self, x: &[f64]) -> SparseVec {
        let mut pairs: Vec<(usize, f64)> = self.linear.iter().collect();
        for (w, a) in &self.squares {
            let g = 2.0 * w * a.eval(x);
            pairs.extend(a.coef.iter().map(|(i, v)| (i, g * v)));
        }
        SparseVec::from_pairs(pairs)
    }

    /// Adds `factor * hessian` to the lower triangle of `m`.
    pub(crate) fn add_hessian_lower(&self, factor: f64, m: &mut DMatrix<f64>) {
        for (w, a) in &self.squares {
            a.coef.rank_one_lower(factor * 2.0 * w, m);
        }
    }

    pub fn is_linear(&self) -> bool {
        self.squares.iter().all(|(w, a)| *w == 0.0 || a.coef.is_empty())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            squares: self.squares.iter().map(|(w, a)| (w * factor, a.clone())).collect(),
            linear: self.linear.scaled(factor),
            constant: self.constant * factor,
        }
    }

    /// `self + other`
    pub fn plus(&self, other: &QuadExpr) -> Self {
        let mut squares = self.squares.clone();
        squares.extend(other.squares.iter().cloned());
        Self {
            squares,
            linear: SparseVec::from_pairs(self.linear.iter().chain(other.linear.iter())),
            constant: self.constant + other.constant,
        }
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// Every variable index touched by the quadratic part.
    pub(crate) fn quadratic_support(&self) -> impl Iterator<Item = usize> + '_ {
        self.squares.iter().flat_map(|(_, a)| a.coef.indices().iter().copied())
    }
}

/// `coef . x <= rhs` (or `= rhs` for equality rows).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub label: String,
    pub coef: SparseVec,
    pub rhs: f64,
}

/// `expr(x) <= rhs`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub label: String,
    pub expr: QuadExpr,
    pub rhs: f64,
}

/// A convex program without its objective; objectives are supplied per solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvexProgram {
    pub var_labels: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<LinearConstraint>,
    pub inequalities: Vec<LinearConstraint>,
    pub quadratic: Vec<QuadConstraint>,
}

impl ConvexProgram {
    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, label: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.var_labels.push(label.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_labels.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.var_labels.len()
    }

    pub fn add_eq(&mut self, label: impl Into<String>, coef: SparseVec, rhs: f64) {
        self.equalities.push(LinearConstraint {
            label: label.into(),
            coef,
            rhs,
        });
    }

    pub fn add_le(&mut self, label: impl Into<String>, coef: SparseVec, rhs: f64) {
        self.inequalities.push(LinearConstraint {
            label: label.into(),
            coef,
            rhs,
        });
    }

    pub fn add_quad_le(&mut self, label: impl Into<String>, expr: QuadExpr, rhs: f64) {
        self.quadratic.push(QuadConstraint {
            label: label.into(),
            expr,
            rhs,
        });
    }

    /// Variables whose bounds coincide.
    pub fn fixed_vars(&self) -> usize {
        self.lower.iter().zip(&self.upper).filter(|(l, u)| l == u).count()
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.n_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for c in &self.equalities {
            worst = worst.max((c.coef.dot(x) - c.rhs).abs());
        }
        for c in &self.inequalities {
            worst = worst.max(c.coef.dot(x) - c.rhs);
        }
        for c in &self.quadratic {
            worst = worst.max(c.expr.eval(x) - c.rhs);
        }
        worst
    }
}
