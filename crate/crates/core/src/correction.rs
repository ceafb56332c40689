//! Splitting `Qᵀ+Q = D+G`, correction plans and correction steps.

use crate::certify::{self, ConvergenceCertificate};
use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix, LuSolver, Vector};
use crate::predict::Order;

pub const DEFAULT_NU: f64 = 0.9;
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Alg1,
    Alg2,
    Alg3,
    MultiPd,
    MultiDp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitChoice {
    FromD(DenseMatrix),
    FromG(DenseMatrix),
    AlphaBlend(f64),
    Preset { preset: Preset, nu: f64 },
}

fn check_open_unit(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must lie in (0,1), got {x}"
        )));
    }
    Ok(())
}

/// `blockdiag(c·Q₁₁, …, c·Q_pp, Q_λλ)` from the diagonal blocks of `q`.
fn scaled_diagonal(q: &DenseMatrix, layout: &[usize], c: f64) -> DenseMatrix {
    let offs = matrix::offsets(layout);
    let last = layout.len() - 1;
    let blocks: Vec<DenseMatrix> = layout
        .iter()
        .zip(&offs)
        .enumerate()
        .map(|(i, (&s, &o))| {
            let b = q.view((o, o), (s, s)).into_owned();
            if i == last {
                b
            } else {
                b * c
            }
        })
        .collect();
    matrix::block_diag(&blocks)
}

/// `D` for a preset. Presets are stated through the diagonal blocks of `Q`,
/// so they apply in native, image and scaled coordinates alike.
fn preset_d(
    q: &DenseMatrix,
    s: &DenseMatrix,
    layout: &[usize],
    preset: Preset,
    nu: f64,
) -> Result<DenseMatrix> {
    if preset != Preset::Alg3 {
        check_open_unit("ν", nu)?;
    }
    if layout.len() < 2 || layout.iter().sum::<usize>() != q.nrows() {
        return Err(Error::Dimension(format!(
            "block layout {layout:?} does not match a {}x{} matrix",
            q.nrows(),
            q.ncols()
        )));
    }
    Ok(match preset {
        Preset::Alg1 | Preset::MultiPd => scaled_diagonal(q, layout, nu),
        Preset::Alg2 => s - scaled_diagonal(q, layout, nu),
        Preset::Alg3 => s * 0.5,
        Preset::MultiDp => s - scaled_diagonal(q, layout, 1.0 - nu),
    })
}

fn raw_split(q: &DenseMatrix, choice: &SplitChoice, layout: &[usize]) -> Result<(DenseMatrix, DenseMatrix)> {
    if q.nrows() != q.ncols() {
        return Err(Error::NotSquare {
            rows: q.nrows(),
            cols: q.ncols(),
        });
    }
    let s = q.transpose() + q;
    let conform = |a: &DenseMatrix, name: &str| -> Result<()> {
        if a.shape() != q.shape() {
            return Err(Error::Dimension(format!(
                "{name} is {}x{}, Q is {}x{}",
                a.nrows(),
                a.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        Ok(())
    };
    let d = match choice {
        SplitChoice::FromD(d) => {
            conform(d, "D")?;
            d.clone()
        }
        SplitChoice::FromG(g) => {
            conform(g, "G")?;
            return Ok((&s - g, g.clone()));
        }
        SplitChoice::AlphaBlend(alpha) => {
            check_open_unit("α", *alpha)?;
            return Ok((&s * *alpha, &s * (1.0 - alpha)));
        }
        SplitChoice::Preset { preset, nu } => preset_d(q, &s, layout, *preset, *nu)?,
    };
    let g = &s - &d;
    Ok((d, g))
}

/// Split `Qᵀ+Q` into `(D, G)`; both parts and `Qᵀ+Q` must be SPD.
pub fn split(q: &DenseMatrix, choice: &SplitChoice, layout: &[usize]) -> Result<(DenseMatrix, DenseMatrix)> {
    let (d, g) = raw_split(q, choice, layout)?;
    let s = q.transpose() + q;
    for (part, a) in [("Qᵀ+Q", &s), ("D", &d), ("G", &g)] {
        let c = matrix::spd_check(a)?;
        if !c.is_spd {
            return Err(Error::NotSpd {
                part,
                min_eig: c.min_eig,
            });
        }
    }
    Ok((d, g))
}

/// Immutable correction data. `D` doubles as `Δ = Qᵀ+Q−G`.
#[derive(Debug, Clone)]
pub struct CorrectionPlan {
    pub q: DenseMatrix,
    pub d: DenseMatrix,
    pub g: DenseMatrix,
    pub m: DenseMatrix,
    pub h: DenseMatrix,
    pub certificate: ConvergenceCertificate,
    pub layout: Vec<usize>,
    qt_lu: LuSolver,
}

impl CorrectionPlan {
    pub fn delta(&self) -> &DenseMatrix {
        &self.d
    }
}

fn assemble(q: &DenseMatrix, d: DenseMatrix, g: DenseMatrix, layout: &[usize]) -> Result<CorrectionPlan> {
    let qt_lu = LuSolver::new(&q.transpose())?;
    let m = qt_lu.solve_matrix(&d)?;
    let d_inv_qt = LuSolver::new(&d)?.solve_matrix(&q.transpose())?;
    let h = matrix::symmetrize(&(q * d_inv_qt));
    let certificate = certify::certify(q, &m, &h, &g)?;
    Ok(CorrectionPlan {
        q: q.clone(),
        d,
        g,
        m,
        h,
        certificate,
        layout: layout.to_vec(),
        qt_lu,
    })
}

/// `M = Q⁻ᵀD`, `H = QD⁻¹Qᵀ`, certified. Rejects non-SPD split parts.
pub fn build_plan(q: &DenseMatrix, choice: &SplitChoice, layout: &[usize]) -> Result<CorrectionPlan> {
    let (d, g) = split(q, choice, layout)?;
    assemble(q, d, g, layout)
}

/// As [`build_plan`] but keeps a split whose parts fail the SPD test; only a
/// singular `Q` or `D` is an error. The certificate records the failure.
pub fn build_plan_unchecked(
    q: &DenseMatrix,
    choice: &SplitChoice,
    layout: &[usize],
) -> Result<CorrectionPlan> {
    let (d, g) = raw_split(q, choice, layout)?;
    assemble(q, d, g, layout)
}

/// `vᵏ⁺¹` from `Qᵀ(vᵏ⁺¹−vᵏ) = D(ṽ−vᵏ)`.
pub fn correct_dense(plan: &CorrectionPlan, v_k: &Vector, v_tilde: &Vector) -> Result<Vector> {
    let n = plan.q.nrows();
    if v_k.len() != n || v_tilde.len() != n {
        return Err(Error::Dimension(format!(
            "correction vectors have lengths {} and {}, plan has {n}",
            v_k.len(),
            v_tilde.len()
        )));
    }
    let step = plan.qt_lu.solve(&(&plan.d * (v_tilde - v_k)))?;
    Ok(v_k + step)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gs3Alg {
    Alg1,
    Alg2,
    Alg3,
}

impl Gs3Alg {
    pub fn preset(self) -> Preset {
        match self {
            Gs3Alg::Alg1 => Preset::Alg1,
            Gs3Alg::Alg2 => Preset::Alg2,
            Gs3Alg::Alg3 => Preset::Alg3,
        }
    }
}

/// `(By, Cz, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gs3Images {
    pub by: Vector,
    pub cz: Vector,
    pub lambda: Vector,
}

impl Gs3Images {
    pub fn from_coords(v: &Vector) -> Result<Self> {
        if !v.len().is_multiple_of(3) {
            return Err(Error::Dimension(format!("GS3 coordinates of length {}", v.len())));
        }
        let m = v.len() / 3;
        let mut parts = matrix::split(v, &[m, m, m]).into_iter();
        Ok(Self {
            by: parts.next().unwrap(),
            cz: parts.next().unwrap(),
            lambda: parts.next().unwrap(),
        })
    }

    pub fn coords(&self) -> Vector {
        matrix::concat(&[&self.by, &self.cz, &self.lambda])
    }
}

/// GS3 correction by back-substitution on the shared factor
/// `[[I, I, −I/β], [0, I, −I/β], [0, 0, I]]` acting on
/// `(B Δy, C Δz, Δλ)`.
pub fn correct_gs3_structured(
    current: &Gs3Images,
    predicted: &Gs3Images,
    alg: Gs3Alg,
    nu: f64,
    beta: f64,
) -> Result<Gs3Images> {
    let m = current.lambda.len();
    for v in [
        &current.by,
        &current.cz,
        &predicted.by,
        &predicted.cz,
        &predicted.lambda,
    ] {
        if v.len() != m {
            return Err(Error::Dimension("GS3 image blocks differ in length".into()));
        }
    }
    if alg != Gs3Alg::Alg3 {
        check_open_unit("ν", nu)?;
    }
    let dy = &predicted.by - &current.by;
    let dz = &predicted.cz - &current.cz;
    let dl = &predicted.lambda - &current.lambda;
    let ib = 1.0 / beta;
    let (r1, r2, r3) = match alg {
        Gs3Alg::Alg1 => (&dy * nu, &dz * nu, dl.clone()),
        Gs3Alg::Alg2 => (
            &dy * (2.0 - nu) + &dz - &dl * ib,
            &dy + &dz * (2.0 - nu) - &dl * ib,
            -(&dy + &dz) * beta + &dl,
        ),
        Gs3Alg::Alg3 => (
            &dy + &dz * 0.5 - &dl * (0.5 * ib),
            &dy * 0.5 + &dz - &dl * (0.5 * ib),
            -(&dy + &dz) * (0.5 * beta) + &dl,
        ),
    };
    let l = r3;
    let c = r2 + &l * ib;
    let a = r1 - &c + &l * ib;
    Ok(Gs3Images {
        by: &current.by + a,
        cz: &current.cz + c,
        lambda: &current.lambda + l,
    })
}

/// `ξᵏ⁺¹ = ξᵏ − 𝓜(ξᵏ−ξ̃ᵏ)` with the closed-form `𝓜` for either order.
pub fn correct_multiblock(
    xi: &Vector,
    xi_tilde: &Vector,
    order: Order,
    nu: f64,
    p: usize,
    m: usize,
) -> Result<Vector> {
    check_open_unit("ν", nu)?;
    let n = (p + 1) * m;
    if xi.len() != n || xi_tilde.len() != n || p == 0 {
        return Err(Error::Dimension(format!(
            "ξ has length {} and ξ̃ {}, expected {n}",
            xi.len(),
            xi_tilde.len()
        )));
    }
    let d = xi - xi_tilde;
    let mut out = Vector::zeros(n);
    for i in 0..p {
        for k in 0..m {
            let next = if i + 1 < p { d[(i + 1) * m + k] } else { 0.0 };
            out[i * m + k] = nu * (d[i * m + k] - next);
        }
    }
    for k in 0..m {
        let lam = d[p * m + k];
        out[p * m + k] = match order {
            Order::PrimalDual => lam - nu * d[k],
            Order::DualPrimal => lam - (0..p).map(|i| d[i * m + k]).sum::<f64>(),
        };
    }
    Ok(xi - out)
}

/// Closed-form `𝓜` as a dense matrix: `[[ν𝓛⁻ᵀ, 0], [−ν𝓔𝓛⁻ᵀ, I]]` (primal-dual)
/// or `[[ν𝓛⁻ᵀ, 0], [−𝓔, I]]` (dual-primal).
pub fn multiblock_m_closed_form(p: usize, m: usize, nu: f64, order: Order) -> DenseMatrix {
    let lit = matrix::build_l_inv_t(p, m);
    let e = matrix::block_row_ones(p, m);
    let pm = p * m;
    let mut out = DenseMatrix::zeros(pm + m, pm + m);
    out.view_mut((0, 0), (pm, pm)).copy_from(&(&lit * nu));
    let bottom = match order {
        Order::PrimalDual => &e * &lit * -nu,
        Order::DualPrimal => -e,
    };
    out.view_mut((pm, 0), (m, pm)).copy_from(&bottom);
    out.view_mut((pm, pm), (m, m)).fill_with_identity();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(r: usize, c: usize, xs: &[f64]) -> DenseMatrix {
        DenseMatrix::from_row_slice(r, c, xs)
    }
    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }
    fn gs3_q() -> DenseMatrix {
        mat(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0])
    }

    #[test]
    fn alpha_half_splits_evenly() {
        let q = gs3_q();
        let (d, g) = split(&q, &SplitChoice::AlphaBlend(0.5), &[1, 1, 1]).unwrap();
        let half = (q.transpose() + &q) * 0.5;
        assert_eq!(d, half);
        assert_eq!(g, half);
    }

    #[test]
    fn alg1_preset_fixture() {
        let q = gs3_q();
        let choice = SplitChoice::Preset {
            preset: Preset::Alg1,
            nu: 0.5,
        };
        let (d, g) = split(&q, &choice, &[1, 1, 1]).unwrap();
        assert_eq!(d, DenseMatrix::from_diagonal(&v(&[0.5, 0.5, 1.0])));
        assert_eq!(g, mat(3, 3, &[1.5, 1.0, -1.0, 1.0, 1.5, -1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn boundary_d_rejected() {
        let q = gs3_q();
        let err = split(&q, &SplitChoice::FromD(q.transpose() + &q), &[1, 1, 1]).unwrap_err();
        match err {
            Error::NotSpd { part, min_eig } => {
                assert_eq!(part, "G");
                assert_eq!(min_eig, 0.0);
            }
            e => panic!("unexpected {e}"),
        }
        assert!(err_msg(&q).contains("G not SPD (min_eig=0"));
    }

    fn err_msg(q: &DenseMatrix) -> String {
        split(q, &SplitChoice::FromD(q.transpose() + q), &[1, 1, 1])
            .unwrap_err()
            .to_string()
    }

    #[test]
    fn proximal_point_plan() {
        let q = DenseMatrix::identity(2, 2) * 2.0;
        let plan = build_plan(&q, &SplitChoice::FromD(q.clone()), &[1, 1]).unwrap();
        assert_relative_eq!(plan.m, DenseMatrix::identity(2, 2), epsilon = 1e-15);
        assert_relative_eq!(plan.h, q, epsilon = 1e-15);
        assert_relative_eq!(plan.g, q, epsilon = 1e-15);
        assert!(plan.certificate.ok);
        let vk = v(&[1.0, -2.0]);
        let vt = v(&[0.25, 3.0]);
        assert_relative_eq!(correct_dense(&plan, &vk, &vt).unwrap(), vt, epsilon = 1e-15);
        assert_eq!(correct_dense(&plan, &vk, &vk).unwrap(), vk);
    }

    #[test]
    fn scprsm_plan_recovers_m() {
        let q = mat(2, 2, &[1.0, -0.5, -1.0, 1.0]);
        let m = mat(2, 2, &[1.0, 0.0, -0.5, 1.0]);
        let plan = build_plan(&q, &SplitChoice::FromD(m.transpose() * &q), &[1, 1]).unwrap();
        assert_relative_eq!(plan.m, m, epsilon = 1e-14);
        assert!(plan.certificate.ok);
        let next = correct_dense(&plan, &v(&[0.0, 0.0]), &v(&[0.375, 0.5])).unwrap();
        assert_relative_eq!(next, v(&[0.375, 0.3125]), epsilon = 1e-14);
    }

    #[test]
    fn gs3_plan_identities() {
        let q = gs3_q();
        let plan = build_plan(
            &q,
            &SplitChoice::Preset {
                preset: Preset::Alg1,
                nu: 0.5,
            },
            &[1, 1, 1],
        )
        .unwrap();
        assert!((&plan.h * &plan.m - &q).norm() <= 1e-12);
        assert!((plan.m.transpose() * &plan.h * &plan.m - &plan.d).norm() <= 1e-12);
        assert!(plan.certificate.ok);
    }

    #[test]
    fn from_d_and_from_g_agree() {
        let q = gs3_q();
        let d = DenseMatrix::from_diagonal(&v(&[0.5, 0.5, 1.0]));
        let g = q.transpose() + &q - &d;
        let a = build_plan(&q, &SplitChoice::FromD(d), &[1, 1, 1]).unwrap();
        let b = build_plan(&q, &SplitChoice::FromG(g), &[1, 1, 1]).unwrap();
        assert!((&a.m - &b.m).norm() <= 1e-12);
        assert!((&a.h - &b.h).norm() <= 1e-12);
        assert!((a.delta() - b.delta()).norm() <= 1e-12);
    }

    #[test]
    fn gs3_structured_fixture() {
        let cur = Gs3Images {
            by: v(&[0.0]),
            cz: v(&[0.0]),
            lambda: v(&[0.0]),
        };
        let pred = Gs3Images {
            by: v(&[0.75]),
            cz: v(&[0.375]),
            lambda: v(&[1.5]),
        };
        let q = gs3_q();
        for alg in [Gs3Alg::Alg1, Gs3Alg::Alg2, Gs3Alg::Alg3] {
            let out = correct_gs3_structured(&cur, &pred, alg, 0.5, 1.0).unwrap();
            let plan = build_plan(
                &q,
                &SplitChoice::Preset {
                    preset: alg.preset(),
                    nu: 0.5,
                },
                &[1, 1, 1],
            )
            .unwrap();
            let dense = correct_dense(&plan, &cur.coords(), &pred.coords()).unwrap();
            assert_relative_eq!(out.coords(), dense, epsilon = 1e-14);
            let same = correct_gs3_structured(&pred, &pred, alg, 0.5, 1.0).unwrap();
            assert_eq!(same, pred);
        }
        let out = correct_gs3_structured(&cur, &pred, Gs3Alg::Alg1, 0.5, 1.0).unwrap();
        assert_relative_eq!(out.lambda[0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn multiblock_closed_form_fixtures() {
        let pd = multiblock_m_closed_form(3, 1, 0.5, Order::PrimalDual);
        assert_eq!(
            pd,
            mat(
                4,
                4,
                &[
                    0.5, -0.5, 0.0, 0.0, //
                    0.0, 0.5, -0.5, 0.0, //
                    0.0, 0.0, 0.5, 0.0, //
                    -0.5, 0.0, 0.0, 1.0,
                ]
            )
        );
        let dp = multiblock_m_closed_form(3, 1, 0.5, Order::DualPrimal);
        assert_eq!(
            dp.row(3).iter().copied().collect::<Vec<_>>(),
            vec![-1.0, -1.0, -1.0, 1.0]
        );

        let xi = v(&[0.3, -1.0, 2.0, 0.5]);
        let xt = v(&[1.0, 0.25, -0.5, 2.0]);
        for (order, mm) in [(Order::PrimalDual, pd), (Order::DualPrimal, dp)] {
            let got = correct_multiblock(&xi, &xt, order, 0.5, 3, 1).unwrap();
            assert_relative_eq!(got, &xi - &mm * (&xi - &xt), epsilon = 1e-15);
            assert_eq!(correct_multiblock(&xi, &xi, order, 0.5, 3, 1).unwrap(), xi);
        }
    }

    #[test]
    fn parameter_ranges() {
        let q = gs3_q();
        assert!(split(&q, &SplitChoice::AlphaBlend(1.0), &[1, 1, 1]).is_err());
        assert!(split(
            &q,
            &SplitChoice::Preset {
                preset: Preset::Alg1,
                nu: 1.0
            },
            &[1, 1, 1]
        )
        .is_err());
        assert!(split(
            &q,
            &SplitChoice::Preset {
                preset: Preset::Alg3,
                nu: 7.0
            },
            &[1, 1, 1]
        )
        .is_ok());
        assert!(split(
            &q,
            &SplitChoice::Preset {
                preset: Preset::Alg1,
                nu: 0.5
            },
            &[1, 1]
        )
        .is_err());
        let x = v(&[0.0; 4]);
        assert!(correct_multiblock(&x, &x, Order::PrimalDual, 0.0, 3, 1).is_err());
        assert!(correct_multiblock(&x, &x, Order::PrimalDual, 0.5, 2, 1).is_err());
    }
}
