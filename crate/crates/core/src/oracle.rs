//! Reference solutions computed independently of the correction machinery
//! where possible.
//!
//! Preference order: the KKT linear system for all-quadratic equality
//! problems, enumeration of active sets and signs for `n ≤ 3`, and finally a
//! long certified run.

use crate::correction::Gs3Alg;
use crate::driver::{RunConfig, Runner, Scheme};
use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix, Vector};
use crate::problem::{self, BlockFunction, BlockSet, KktResidual, ProblemInstance, Sense};

/// Acceptance threshold for direct (linear-algebra) candidates.
pub const DIRECT_TOL: f64 = 1e-9;
/// Target residual of the iterative fallback.
pub const ITERATIVE_TOL: f64 = 1e-10;
pub const ITERATIVE_CAP: usize = 1_000_000;
/// Largest primal dimension handled by enumeration.
pub const ENUM_MAX_N: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Kkt,
    Enumeration,
    Iterative,
}

pub fn reference_solution(p: &ProblemInstance) -> Result<(Vector, KktResidual)> {
    reference_solution_with_method(p).map(|(w, q, _)| (w, q))
}

pub fn reference_solution_with_method(p: &ProblemInstance) -> Result<(Vector, KktResidual, Method)> {
    if let Some((w, q)) = kkt_solve(p)? {
        return Ok((w, q, Method::Kkt));
    }
    if p.n() <= ENUM_MAX_N {
        if let Some((w, q)) = enumerate(p)? {
            return Ok((w, q, Method::Enumeration));
        }
    }
    let (w, q) = iterative(p)?;
    Ok((w, q, Method::Iterative))
}

fn stacked_a(p: &ProblemInstance) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(p.m(), p.n());
    let offs = matrix::offsets(&p.block_dims());
    for (b, &o) in p.blocks().iter().zip(&offs) {
        a.view_mut((0, o), (p.m(), b.dim())).copy_from(&b.a);
    }
    a
}

fn accept(p: &ProblemInstance, w: &Vector) -> Result<Option<KktResidual>> {
    if !p.omega_contains(w)? {
        return Ok(None);
    }
    let r = problem::kkt_residual(p, w)?;
    Ok((r.max() <= DIRECT_TOL).then_some(r))
}

/// `[[P, −Aᵀ], [A, 0]] (x, λ) = (−q, b)`.
fn kkt_solve(p: &ProblemInstance) -> Result<Option<(Vector, KktResidual)>> {
    if p.sense() != Sense::Equality
        || !p
            .blocks()
            .iter()
            .all(|b| matches!(b.theta, BlockFunction::Quadratic { .. }) && matches!(b.set, BlockSet::Free))
    {
        return Ok(None);
    }
    let (n, m) = (p.n(), p.m());
    let a = stacked_a(p);
    let mut k = DenseMatrix::zeros(n + m, n + m);
    let mut rhs = Vector::zeros(n + m);
    let offs = matrix::offsets(&p.block_dims());
    for (b, &o) in p.blocks().iter().zip(&offs) {
        if let BlockFunction::Quadratic { p: pm, q } = &b.theta {
            k.view_mut((o, o), (b.dim(), b.dim())).copy_from(pm);
            rhs.rows_mut(o, b.dim()).copy_from(&(-q));
        }
    }
    k.view_mut((0, n), (n, m)).copy_from(&(-a.transpose()));
    k.view_mut((n, 0), (m, n)).copy_from(&a);
    rhs.rows_mut(n, m).copy_from(p.rhs());
    let w = match matrix::dense_solve(&k, &rhs) {
        Ok(w) => w,
        Err(Error::Singular { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(accept(p, &w)?.map(|r| (w, r)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    Fixed(f64),
    /// Stationary with the given constant subgradient term.
    Stationary(f64),
}

fn coordinate_options(p: &ProblemInstance) -> Vec<Vec<Coord>> {
    let mut out = Vec::new();
    for b in p.blocks() {
        let bx = b.effective_box();
        for j in 0..b.dim() {
            let (lo, hi) = bx
                .as_ref()
                .map_or((f64::NEG_INFINITY, f64::INFINITY), |(l, h)| (l[j], h[j]));
            let mut opts = Vec::new();
            if lo.is_finite() {
                opts.push(Coord::Fixed(lo));
            }
            if hi.is_finite() && hi != lo {
                opts.push(Coord::Fixed(hi));
            }
            if lo < hi {
                match b.theta {
                    BlockFunction::L1 { weight } => {
                        if lo < 0.0 && hi > 0.0 {
                            opts.push(Coord::Fixed(0.0));
                        }
                        if hi > 0.0 {
                            opts.push(Coord::Stationary(weight));
                        }
                        if lo < 0.0 {
                            opts.push(Coord::Stationary(-weight));
                        }
                    }
                    _ => opts.push(Coord::Stationary(0.0)),
                }
            }
            out.push(opts);
        }
    }
    out
}

/// Solve the equality system of one pattern; `None` if inconsistent.
fn pattern_candidate(
    p: &ProblemInstance,
    a: &DenseMatrix,
    pmat: &DenseMatrix,
    qvec: &Vector,
    coords: &[Coord],
    active: &[bool],
) -> Option<Vector> {
    let (n, m) = (p.n(), p.m());
    let mut k = DenseMatrix::zeros(n + m, n + m);
    let mut rhs = Vector::zeros(n + m);
    for (j, c) in coords.iter().enumerate() {
        match *c {
            Coord::Fixed(v) => {
                k[(j, j)] = 1.0;
                rhs[j] = v;
            }
            Coord::Stationary(s) => {
                k.view_mut((j, 0), (1, n)).copy_from(&pmat.row(j));
                k.view_mut((j, n), (1, m)).copy_from(&(-a.column(j).transpose()));
                rhs[j] = -qvec[j] - s;
            }
        }
    }
    for i in 0..m {
        if active[i] {
            k.view_mut((n + i, 0), (1, n)).copy_from(&a.row(i));
            rhs[n + i] = p.rhs()[i];
        } else {
            k[(n + i, n + i)] = 1.0;
        }
    }
    let svd = k.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    let mut z = svd.solve(&rhs, eps).ok()?;
    let res = (&k * &z - &rhs).norm();
    if res > DIRECT_TOL * rhs.norm().max(1.0) {
        return None;
    }
    // Pin fixed coordinates and inactive multipliers exactly.
    for (j, c) in coords.iter().enumerate() {
        if let Coord::Fixed(v) = *c {
            z[j] = v;
        }
    }
    for i in 0..m {
        if !active[i] {
            z[n + i] = 0.0;
        }
    }
    Some(z)
}

fn enumerate(p: &ProblemInstance) -> Result<Option<(Vector, KktResidual)>> {
    let (n, m) = (p.n(), p.m());
    let a = stacked_a(p);
    let mut pmat = DenseMatrix::zeros(n, n);
    let mut qvec = Vector::zeros(n);
    for (b, &o) in p.blocks().iter().zip(&matrix::offsets(&p.block_dims())) {
        if let BlockFunction::Quadratic { p: pm, q } = &b.theta {
            pmat.view_mut((o, o), (b.dim(), b.dim())).copy_from(pm);
            qvec.rows_mut(o, b.dim()).copy_from(q);
        }
    }
    let options = coordinate_options(p);
    if options.iter().any(Vec::is_empty) {
        return Ok(None);
    }
    let row_patterns: Vec<Vec<bool>> = match p.sense() {
        Sense::Equality => vec![vec![true; m]],
        Sense::GreaterEqual => {
            if m > 12 {
                return Ok(None);
            }
            (0..1usize << m)
                .map(|mask| (0..m).map(|i| mask >> i & 1 == 1).collect())
                .collect()
        }
    };

    let mut best: Option<(Vector, KktResidual)> = None;
    let mut idx = vec![0usize; n];
    loop {
        let coords: Vec<Coord> = idx.iter().zip(&options).map(|(&i, o)| o[i]).collect();
        for active in &row_patterns {
            if let Some(w) = pattern_candidate(p, &a, &pmat, &qvec, &coords, active) {
                if let Some(r) = accept(p, &w)? {
                    if best.as_ref().is_none_or(|(_, b)| r.max() < b.max()) {
                        best = Some((w, r));
                    }
                }
            }
        }
        // Mixed-radix increment over coordinate options.
        let mut j = 0;
        while j < n {
            idx[j] += 1;
            if idx[j] < options[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == n {
            break;
        }
    }
    Ok(best)
}

fn iterative(p: &ProblemInstance) -> Result<(Vector, KktResidual)> {
    let mut schemes = Vec::new();
    if p.sense() == Sense::Equality {
        if p.num_blocks() == 3 {
            schemes.push(Scheme::Gs3(Gs3Alg::Alg3));
        }
        schemes.push(Scheme::MultiPd);
    }
    schemes.push(Scheme::MultiDp);

    let mut last_err = None;
    for scheme in schemes {
        let cfg = RunConfig {
            nu: 0.9,
            max_iters: ITERATIVE_CAP,
            tol: 0.0,
            ..RunConfig::with_scheme(scheme)
        };
        let mut runner = match Runner::new(p, cfg) {
            Ok(r) => r,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mut achieved = f64::INFINITY;
        let mut best_w = None;
        for _ in 0..ITERATIVE_CAP {
            let r = runner.step()?;
            let res = r.kkt.max();
            if res < achieved {
                achieved = res;
                best_w = runner.last_prediction().map(|pr| pr.w_tilde(p));
            }
            if res <= ITERATIVE_TOL {
                let w = best_w.expect("prediction recorded");
                return Ok((w, r.kkt));
            }
        }
        return Err(Error::OracleTolerance { achieved });
    }
    Err(last_err.unwrap_or_else(|| Error::InvalidProblem("no scheme applies to this problem".into())))
}
