//! Exact solvers for the block subproblems
//! `min θ(x) + linearᵀx + (β/2)‖Ax + shift‖²  over 𝒳`.
//!
//! Two classes are solved in closed form: quadratic objectives over free sets
//! (normal equations) and separable objectives whose coupling `AᵀA` is a
//! multiple of the identity (componentwise prox). Anything else is rejected.

use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix, Vector};
use crate::problem::{clip, BlockFunction, BlockSet, LambdaSet};

/// Tolerance of `‖AᵀA − cI‖_F ≤ ORTHO_TOL·c`.
pub const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    pub theta: &'a BlockFunction,
    pub a: &'a DenseMatrix,
    pub beta: f64,
    pub linear: Vector,
    pub shift: Vector,
    pub set: &'a BlockSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolvabilityClass {
    QuadraticExact,
    /// Separable prox with `AᵀA = c·I`.
    ProxExact {
        c: f64,
    },
    Unsupported,
}

/// `Some(c)` when `AᵀA = c·I` with `c > 0` within tolerance.
pub fn isotropic_scale(a: &DenseMatrix) -> Option<f64> {
    let ata = a.transpose() * a;
    let n = ata.nrows();
    if n == 0 {
        return None;
    }
    let c = ata.trace() / n as f64;
    if !(c > 0.0) {
        return None;
    }
    let dev = (&ata - DenseMatrix::identity(n, n) * c).norm();
    (dev <= ORTHO_TOL * c).then_some(c)
}

fn is_diagonal(p: &DenseMatrix) -> bool {
    p.iter().enumerate().all(|(k, v)| {
        let (r, c) = (k % p.nrows(), k / p.nrows());
        r == c || *v == 0.0
    })
}

pub fn classify(spec: &SubproblemSpec) -> SolvabilityClass {
    let boxed = matches!(spec.set, BlockSet::Box { .. });
    match spec.theta {
        BlockFunction::Quadratic { .. } if !boxed => SolvabilityClass::QuadraticExact,
        BlockFunction::Quadratic { p, .. } => {
            // Boxed quadratics separate only when P is diagonal.
            match isotropic_scale(spec.a) {
                Some(c) if is_diagonal(p) => SolvabilityClass::ProxExact { c },
                _ => SolvabilityClass::Unsupported,
            }
        }
        BlockFunction::L1 { .. } | BlockFunction::Zero | BlockFunction::BoxIndicator { .. } => {
            match isotropic_scale(spec.a) {
                Some(c) => SolvabilityClass::ProxExact { c },
                None => SolvabilityClass::Unsupported,
            }
        }
    }
}

fn check_dims(spec: &SubproblemSpec) -> Result<()> {
    let (m, n) = spec.a.shape();
    if spec.linear.len() != n || spec.shift.len() != m {
        return Err(Error::Dimension(format!(
            "subproblem with A {m}x{n} got linear term of length {} and shift of length {}",
            spec.linear.len(),
            spec.shift.len()
        )));
    }
    if !(spec.beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty beta must be positive, got {}",
            spec.beta
        )));
    }
    Ok(())
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn solve_subproblem(spec: &SubproblemSpec) -> Result<Vector> {
    check_dims(spec)?;
    let beta = spec.beta;
    // Gradient of the linear part: linear + β Aᵀ shift.
    let g = &spec.linear + spec.a.transpose() * &spec.shift * beta;
    match classify(spec) {
        SolvabilityClass::QuadraticExact => {
            let BlockFunction::Quadratic { p, q } = spec.theta else {
                unreachable!("quadratic class requires a quadratic objective")
            };
            let lhs = p + spec.a.transpose() * spec.a * beta;
            let rhs = -(q + g);
            matrix::dense_solve(&lhs, &rhs)
        }
        SolvabilityClass::ProxExact { c } => {
            let bc = beta * c;
            let n = spec.a.ncols();
            // Unconstrained minimizer of the quadratic part.
            let x_hat = -&g / bc;
            let x = match spec.theta {
                BlockFunction::Quadratic { p, q } => {
                    Vector::from_fn(n, |j, _| -(q[j] + g[j]) / (p[(j, j)] + bc))
                }
                BlockFunction::L1 { weight } => x_hat.map(|v| soft_threshold(v, weight / bc)),
                BlockFunction::Zero | BlockFunction::BoxIndicator { .. } => x_hat,
            };
            let bounds = match (spec.theta, spec.set) {
                (BlockFunction::BoxIndicator { lo, hi }, BlockSet::Box { lo: l2, hi: h2 }) => {
                    Some((lo.sup(l2), hi.inf(h2)))
                }
                (BlockFunction::BoxIndicator { lo, hi }, BlockSet::Free) | (_, BlockSet::Box { lo, hi }) => {
                    Some((lo.clone(), hi.clone()))
                }
                _ => None,
            };
            match bounds {
                Some((lo, hi)) => {
                    if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                        return Err(Error::InvalidProblem(
                            "objective box and constraint set do not intersect".into(),
                        ));
                    }
                    // One-dimensional convex pieces: clipping the free minimizer is exact.
                    Ok(clip(&x, &lo, &hi))
                }
                None => Ok(x),
            }
        }
        SolvabilityClass::Unsupported => Err(Error::Unsupported(
            "subproblem is neither an unconstrained quadratic nor a separable prox with AᵀA = cI".into(),
        )),
    }
}

pub fn project_lambda(lam: &Vector, set: LambdaSet) -> Vector {
    match set {
        LambdaSet::Free => lam.clone(),
        LambdaSet::NonNegative => lam.map(|v| v.max(0.0)),
    }
}
