//! Primal-dual interior-point solver for small dense convex QCQPs.
//!
//! Programs are stated as a convex quadratic objective (a weighted sum of
//! squared affine forms plus a linear part), variable bounds, sparse linear
//! equalities and inequalities, and convex quadratic inequalities.

mod ipm;
mod presolve;
mod program;

pub use ipm::{solve, Solution, SolverSettings};
pub use program::{AffineExpr, ConvexProgram, LinearConstraint, QuadConstraint, QuadExpr, SparseVec};
