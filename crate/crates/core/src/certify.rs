//! Convergence certificates and the runtime contraction monitor.

use rand::Rng;

use crate::correction::CorrectionPlan;
use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix, SpdCertificate, Vector};
use crate::predict::{self, IterateState, PredictorKind};
use crate::problem::{LambdaSet, ProblemInstance};

/// Relative tolerance on `‖HM−Q‖_F/‖Q‖_F` and on the `G` identity.
pub const HM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCertificate {
    /// `‖HM−Q‖_F / ‖Q‖_F`.
    pub hm_residual: f64,
    /// `‖Qᵀ+Q−MᵀHM−G‖_F / ‖G‖_F`.
    pub g_residual: f64,
    pub h_cert: SpdCertificate,
    pub g_cert: SpdCertificate,
    pub qtq_cert: SpdCertificate,
    pub ok: bool,
}

impl ConvergenceCertificate {
    /// Short reason for a failed certificate, `None` when ok.
    pub fn failure(&self) -> Option<String> {
        if self.ok {
            return None;
        }
        let mut parts = Vec::new();
        if !(self.hm_residual <= HM_TOL) {
            parts.push(format!("HM != Q (residual {:e})", self.hm_residual));
        }
        if !(self.g_residual <= HM_TOL) {
            parts.push(format!("G != Qᵀ+Q-MᵀHM (residual {:e})", self.g_residual));
        }
        for (name, c) in [("H", &self.h_cert), ("G", &self.g_cert), ("Qᵀ+Q", &self.qtq_cert)] {
            if !c.is_spd {
                parts.push(format!("{name} not SPD (min_eig={:e})", c.min_eig));
            }
        }
        Some(parts.join("; "))
    }
}

fn rel(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

pub fn certify(
    q: &DenseMatrix,
    m: &DenseMatrix,
    h: &DenseMatrix,
    g: &DenseMatrix,
) -> Result<ConvergenceCertificate> {
    let n = q.nrows();
    for (name, a) in [("Q", q), ("M", m), ("H", h), ("G", g)] {
        if a.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "{name} is {}x{}, expected {n}x{n}",
                a.nrows(),
                a.ncols()
            )));
        }
    }
    let s = q.transpose() + q;
    let hm_residual = rel((h * m - q).norm(), q.norm());
    let g_implied = &s - m.transpose() * h * m;
    let g_residual = rel((&g_implied - g).norm(), g.norm().max(s.norm() * f64::EPSILON));
    let h_cert = matrix::spd_check(h)?;
    let g_cert = matrix::spd_check(g)?;
    let qtq_cert = matrix::spd_check(&s)?;
    let ok =
        hm_residual <= HM_TOL && g_residual <= HM_TOL && h_cert.is_spd && g_cert.is_spd && qtq_cert.is_spd;
    Ok(ConvergenceCertificate {
        hm_residual,
        g_residual,
        h_cert,
        g_cert,
        qtq_cert,
        ok,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionRecord {
    pub k: usize,
    pub dist_sq_h: f64,
    pub dist_sq_h_next: f64,
    pub progress_sq_g: f64,
    pub slack: f64,
    pub violated: bool,
}

/// Allowed negative slack at iteration `k`.
pub fn slack_tolerance(dist_sq_h: f64) -> f64 {
    1e-8 * dist_sq_h.max(1.0)
}

/// Evaluate the contraction inequality for one step.
pub fn monitor_step(
    plan: &CorrectionPlan,
    k: usize,
    v_k: &Vector,
    v_next: &Vector,
    v_tilde: &Vector,
    v_star: Option<&Vector>,
) -> Result<ContractionRecord> {
    let v_star = v_star.ok_or_else(|| {
        Error::InvalidParameter("missing reference solution for the contraction monitor".into())
    })?;
    let n = plan.q.nrows();
    for (name, v) in [
        ("v_k", v_k),
        ("v_next", v_next),
        ("v_tilde", v_tilde),
        ("v_star", v_star),
    ] {
        if v.len() != n {
            return Err(Error::Dimension(format!(
                "{name} has length {}, plan has {n}",
                v.len()
            )));
        }
    }
    let dist_sq_h = matrix::quad_form(&plan.h, &(v_k - v_star));
    let dist_sq_h_next = matrix::quad_form(&plan.h, &(v_next - v_star));
    let progress_sq_g = matrix::quad_form(&plan.g, &(v_k - v_tilde));
    let slack = dist_sq_h - dist_sq_h_next - progress_sq_g;
    Ok(ContractionRecord {
        k,
        dist_sq_h,
        dist_sq_h_next,
        progress_sq_g,
        slack,
        violated: slack < -slack_tolerance(dist_sq_h),
    })
}

/// Sample a point of `Ω` with free coordinates drawn from `[-r, r]`.
pub fn sample_omega<R: Rng>(p: &ProblemInstance, r: f64, rng: &mut R) -> (Vec<Vector>, Vector) {
    let xs = p
        .blocks()
        .iter()
        .map(|b| {
            let mut x = Vector::from_fn(b.dim(), |_, _| rng.gen_range(-r..=r));
            if let Some((lo, hi)) = b.effective_box() {
                for j in 0..x.len() {
                    let l = lo[j].max(-r);
                    let h = hi[j].min(r);
                    x[j] = if l <= h {
                        rng.gen_range(l..=h)
                    } else {
                        x[j].clamp(lo[j], hi[j])
                    };
                }
            }
            x
        })
        .collect();
    let lambda = match p.sense().lambda_set() {
        LambdaSet::Free => Vector::from_fn(p.m(), |_, _| rng.gen_range(-r..=r)),
        LambdaSet::NonNegative => Vector::from_fn(p.m(), |_, _| rng.gen_range(0.0..=r)),
    };
    (xs, lambda)
}

/// Smallest value over random `w ∈ Ω` of
/// `θ(u)−θ(ũ)+(w−w̃)ᵀF(w̃) − (v−ṽ)ᵀQ(vᵏ−ṽ)` for one prediction from `state`.
/// `q` acts on the corrected coordinates of `kind`.
#[allow(clippy::too_many_arguments)]
pub fn prediction_vi_probe<R: Rng>(
    p: &ProblemInstance,
    kind: PredictorKind,
    q: &DenseMatrix,
    state: &IterateState,
    beta: f64,
    mu: f64,
    probes: usize,
    rng: &mut R,
) -> Result<f64> {
    let pred = predict::predict(kind, state, p, beta, mu)?;
    let v_k = predict::state_coords(kind, p, state, beta)?;
    let w_t = pred.w_tilde(p);
    let f_t = p.vi().evaluate_f(&w_t)?;
    let theta_t = p.objective(&pred.x_tilde);
    let qd = q * (&v_k - &pred.v_tilde);
    let mut worst = f64::INFINITY;
    for _ in 0..probes {
        let (xs, lambda) = sample_omega(p, 3.0, rng);
        let w = p.join_point(&xs, &lambda);
        let v = predict::point_coords(kind, p, &xs, &lambda, beta)?;
        let val = p.objective(&xs) - theta_t + (&w - &w_t).dot(&f_t) - (&v - &pred.v_tilde).dot(&qd);
        worst = worst.min(val);
    }
    Ok(worst)
}
