//! Dense kernels and the structured block matrices of the multi-block calculus.
//!
//! Everything is stored densely in `nalgebra` matrices; block structure is
//! exploited by dedicated constructors and solvers, not by storage format.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative threshold used for SPD verdicts and symmetry.
pub const SPD_REL_TOL: f64 = 1e-10;
/// Relative singular-value threshold for "full column rank".
pub const RANK_REL_TOL: f64 = 1e-8;
/// Relative pivot threshold for `dense_solve`.
pub const PIVOT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdCertificate {
    pub is_spd: bool,
    pub min_eig: f64,
    /// `‖S−Sᵀ‖_F / ‖S‖_F`.
    pub symmetry_defect: f64,
}

/// Symmetrize-then-smallest-eigenvalue SPD test.
pub fn spd_check(s: &DenseMatrix) -> Result<SpdCertificate> {
    ensure_square(s)?;
    let fro = s.norm();
    let defect = if fro == 0.0 {
        0.0
    } else {
        (s - s.transpose()).norm() / fro
    };
    let sym = symmetrize(s);
    let eigs = sym.symmetric_eigenvalues();
    let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let norm2 = eigs.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()));
    Ok(SpdCertificate {
        is_spd: defect <= SPD_REL_TOL && min_eig > SPD_REL_TOL * norm2,
        min_eig,
        symmetry_defect: defect,
    })
}

pub fn symmetrize(s: &DenseMatrix) -> DenseMatrix {
    (s + s.transpose()) * 0.5
}

fn ensure_square(a: &DenseMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

/// LU factorization with a pivot-magnitude guard, reusable across solves.
#[derive(Debug, Clone)]
pub struct LuSolver {
    lu: LU<f64, Dyn, Dyn>,
    dim: usize,
}

impl LuSolver {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        ensure_square(a)?;
        let scale = a.norm();
        let lu = a.clone().lu();
        let min_pivot = lu
            .u()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |acc, p| acc.min(p.abs()));
        if a.nrows() == 0 || !(min_pivot > PIVOT_REL_TOL * scale) {
            return Err(Error::Singular {
                min_pivot: if min_pivot.is_finite() { min_pivot } else { 0.0 },
            });
        }
        Ok(Self { lu, dim: a.nrows() })
    }

    pub fn solve(&self, rhs: &Vector) -> Result<Vector> {
        if rhs.len() != self.dim {
            return Err(Error::Dimension(format!(
                "rhs has length {}, system has {}",
                rhs.len(),
                self.dim
            )));
        }
        self.lu.solve(rhs).ok_or(Error::Singular { min_pivot: 0.0 })
    }

    pub fn solve_matrix(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if rhs.nrows() != self.dim {
            return Err(Error::Dimension(format!(
                "rhs has {} rows, system has {}",
                rhs.nrows(),
                self.dim
            )));
        }
        self.lu.solve(rhs).ok_or(Error::Singular { min_pivot: 0.0 })
    }
}

pub fn dense_solve(a: &DenseMatrix, rhs: &Vector) -> Result<Vector> {
    LuSolver::new(a)?.solve(rhs)
}

/// Ratio `σ_min / σ_max` of the singular values; 0 for wide or empty matrices.
pub fn singular_value_ratio(a: &DenseMatrix) -> f64 {
    if a.ncols() == 0 || a.nrows() < a.ncols() {
        return 0.0;
    }
    let sv = a.clone().singular_values();
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

pub fn has_full_column_rank(a: &DenseMatrix) -> bool {
    singular_value_ratio(a) > RANK_REL_TOL
}

/// `argmin_x ‖A x − y‖` for full-column-rank `A`.
pub fn least_squares_recover(a: &DenseMatrix, y_img: &Vector) -> Result<Vector> {
    if a.nrows() != y_img.len() {
        return Err(Error::Dimension(format!(
            "image has length {}, matrix has {} rows",
            y_img.len(),
            a.nrows()
        )));
    }
    let ratio = singular_value_ratio(a);
    if !(ratio > RANK_REL_TOL) {
        return Err(Error::RankDeficient { ratio });
    }
    let svd = a.clone().svd(true, true);
    svd.solve(y_img, 0.0).map_err(|e| Error::Dimension(e.to_string()))
}

/// 𝓛: `p×p` blocks with `I_m` on and below the block diagonal.
pub fn block_lower_ones(p: usize, m: usize) -> DenseMatrix {
    let mut l = DenseMatrix::zeros(p * m, p * m);
    for i in 0..p {
        for j in 0..=i {
            l.view_mut((i * m, j * m), (m, m)).fill_with_identity();
        }
    }
    l
}

/// 𝓔 = `(I_m … I_m)` with `p` blocks.
pub fn block_row_ones(p: usize, m: usize) -> DenseMatrix {
    let mut e = DenseMatrix::zeros(m, p * m);
    for j in 0..p {
        e.view_mut((0, j * m), (m, m)).fill_with_identity();
    }
    e
}

/// 𝓛⁻ᵀ: block upper bidiagonal with `I_m` on the diagonal and `−I_m` above it.
pub fn build_l_inv_t(p: usize, m: usize) -> DenseMatrix {
    let mut out = DenseMatrix::identity(p * m, p * m);
    for i in 0..p.saturating_sub(1) {
        for k in 0..m {
            out[(i * m + k, (i + 1) * m + k)] = -1.0;
        }
    }
    out
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[DenseMatrix]) -> DenseMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Offsets of consecutive blocks with the given sizes.
pub fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    sizes
        .iter()
        .map(|s| {
            let o = acc;
            acc += s;
            o
        })
        .collect()
}

/// `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

pub fn norm_inf(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `xᵀ S x`.
pub fn quad_form(s: &DenseMatrix, x: &Vector) -> f64 {
    x.dot(&(s * x))
}

pub fn concat(parts: &[&Vector]) -> Vector {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(len);
    let mut o = 0;
    for p in parts {
        out.rows_mut(o, p.len()).copy_from(*p);
        o += p.len();
    }
    out
}

pub fn split(v: &Vector, sizes: &[usize]) -> Vec<Vector> {
    let mut o = 0;
    sizes
        .iter()
        .map(|&s| {
            let part = v.rows(o, s).into_owned();
            o += s;
            part
        })
        .collect()
}
