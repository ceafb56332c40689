//! Prediction steps and their prediction matrices.
//!
//! Each predictor maps the current iterate to a point `w̃ ∈ Ω` satisfying the
//! prediction inequality with its matrix `Q`. The corrected subvector lives in
//! scheme-specific coordinates:
//!
//! * SC-PRSM: `v = (y, λ)`.
//! * GS3: `v = (By, Cz, λ)`; the correction runs on images only.
//! * multi-block: `ξ = (√β A₁x₁, …, √β A_px_p, λ/√β)`.

use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix, Vector};
use crate::problem::{ProblemInstance, Sense};
use crate::subproblem::{self, SubproblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    PrimalDual,
    DualPrimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictorKind {
    ScPrsm,
    Gs3,
    MultiBlock(Order),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    ScPrsm,
    Gs3,
    MultiPd,
    MultiDp,
    Custom,
}

/// Current iterate. Block values may be absent when only their images
/// `Aᵢxᵢ` are tracked (GS3 and multi-block corrections).
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x_blocks: Vec<Option<Vector>>,
    pub images: Vec<Vector>,
    pub lambda: Vector,
}

impl IterateState {
    pub fn zeros(p: &ProblemInstance) -> Self {
        let xs: Vec<Vector> = p.block_dims().into_iter().map(Vector::zeros).collect();
        Self::from_point(p, &xs, &Vector::zeros(p.m()))
    }

    pub fn from_point(p: &ProblemInstance, xs: &[Vector], lambda: &Vector) -> Self {
        Self {
            images: p.blocks().iter().zip(xs).map(|(b, x)| &b.a * x).collect(),
            x_blocks: xs.iter().cloned().map(Some).collect(),
            lambda: lambda.clone(),
        }
    }

    fn check(&self, p: &ProblemInstance) -> Result<()> {
        if self.images.len() != p.num_blocks()
            || self.x_blocks.len() != p.num_blocks()
            || self.lambda.len() != p.m()
            || self.images.iter().any(|im| im.len() != p.m())
        {
            return Err(Error::Dimension(
                "iterate state does not match the problem".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    pub x_tilde: Vec<Vector>,
    pub lambda_tilde: Vector,
    /// Coordinates of the predicted corrected subvector (`ṽ` or `ξ̃`).
    pub v_tilde: Vector,
    /// `λ^{k+½}` for SC-PRSM.
    pub lambda_half: Option<Vector>,
}

impl PredictionOutput {
    pub fn w_tilde(&self, p: &ProblemInstance) -> Vector {
        p.join_point(&self.x_tilde, &self.lambda_tilde)
    }
}

fn block_solve(p: &ProblemInstance, i: usize, beta: f64, lambda: &Vector, shift: Vector) -> Result<Vector> {
    let b = p.block(i);
    let spec = SubproblemSpec {
        theta: &b.theta,
        a: &b.a,
        beta,
        linear: -(b.a.transpose() * lambda),
        shift,
        set: &b.set,
    };
    subproblem::solve_subproblem(&spec)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    Ok(())
}

fn check_mu_open(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidParameter(format!("μ must lie in (0,1), got {mu}")));
    }
    Ok(())
}

fn check_equality(p: &ProblemInstance, name: &str) -> Result<()> {
    if p.sense() != Sense::Equality {
        return Err(Error::InvalidProblem(format!(
            "{name} requires equality constraints; inequality sense requires DP predictor"
        )));
    }
    Ok(())
}

fn check_blocks(p: &ProblemInstance, n: usize, name: &str) -> Result<()> {
    if p.num_blocks() != n {
        return Err(Error::InvalidProblem(format!(
            "{name} requires exactly {n} blocks, got {}",
            p.num_blocks()
        )));
    }
    Ok(())
}

/// Strictly contractive Peaceman–Rachford prediction.
pub fn predict_scprsm(
    state: &IterateState,
    p: &ProblemInstance,
    beta: f64,
    mu: f64,
) -> Result<PredictionOutput> {
    check_blocks(p, 2, "SC-PRSM")?;
    check_equality(p, "SC-PRSM")?;
    check_mu_open(mu)?;
    check_beta(beta)?;
    state.check(p)?;
    let b = p.rhs();
    let lam = &state.lambda;
    let by = &state.images[1];

    let x = block_solve(p, 0, beta, lam, by - b)?;
    let ax = &p.block(0).a * &x;
    let r_half = &ax + by - b;
    let lambda_half = lam - &r_half * (mu * beta);
    let y = block_solve(p, 1, beta, &lambda_half, &ax - b)?;
    let lambda_tilde = lam - &r_half * beta;

    let v_tilde = matrix::concat(&[&y, &lambda_tilde]);
    Ok(PredictionOutput {
        x_tilde: vec![x, y],
        lambda_tilde,
        v_tilde,
        lambda_half: Some(lambda_half),
    })
}

/// Gauss–Seidel sweep of the direct three-block extension, with
/// `λ̃ = λ − β(Ax̃ + By + Cz − b)`.
pub fn predict_gs3(state: &IterateState, p: &ProblemInstance, beta: f64) -> Result<PredictionOutput> {
    check_blocks(p, 3, "GS3")?;
    check_equality(p, "GS3")?;
    check_beta(beta)?;
    state.check(p)?;
    let b = p.rhs();
    let lam = &state.lambda;
    let (by, cz) = (&state.images[1], &state.images[2]);

    let x = block_solve(p, 0, beta, lam, by + cz - b)?;
    let ax = &p.block(0).a * &x;
    let y = block_solve(p, 1, beta, lam, &ax + cz - b)?;
    let by_t = &p.block(1).a * &y;
    let z = block_solve(p, 2, beta, lam, &ax + &by_t - b)?;
    let cz_t = &p.block(2).a * &z;
    let lambda_tilde = lam - (&ax + by + cz - b) * beta;

    let v_tilde = matrix::concat(&[&by_t, &cz_t, &lambda_tilde]);
    Ok(PredictionOutput {
        x_tilde: vec![x, y, z],
        lambda_tilde,
        v_tilde,
        lambda_half: None,
    })
}

/// Primal-dual or dual-primal multi-block prediction.
pub fn predict_multiblock(
    state: &IterateState,
    p: &ProblemInstance,
    beta: f64,
    order: Order,
) -> Result<PredictionOutput> {
    if p.num_blocks() < 2 {
        return Err(Error::InvalidProblem(format!(
            "multi-block prediction requires at least 2 blocks, got {}",
            p.num_blocks()
        )));
    }
    if p.sense() == Sense::GreaterEqual && order == Order::PrimalDual {
        return Err(Error::InvalidProblem(
            "inequality sense requires DP predictor".into(),
        ));
    }
    check_beta(beta)?;
    state.check(p)?;
    let lset = p.sense().lambda_set();
    let b = p.rhs();
    let lam = &state.lambda;

    let lambda_dp = match order {
        Order::DualPrimal => {
            let r: Vector = state.images.iter().fold(-b.clone(), |acc, im| acc + im);
            Some(subproblem::project_lambda(&(lam - r * beta), lset))
        }
        Order::PrimalDual => None,
    };
    let sweep_lambda = lambda_dp.as_ref().unwrap_or(lam);

    // Σ_{j<i} Aⱼ(x̃ⱼ − xⱼ).
    let mut acc = Vector::zeros(p.m());
    let mut xs = Vec::with_capacity(p.num_blocks());
    let mut ax_sum = -b.clone();
    for (i, block) in p.blocks().iter().enumerate() {
        let img = &state.images[i];
        let x = block_solve(p, i, beta, sweep_lambda, &acc - img)?;
        let ax = &block.a * &x;
        acc += &ax - img;
        ax_sum += &ax;
        xs.push(x);
    }
    let lambda_tilde = match lambda_dp {
        Some(l) => l,
        None => subproblem::project_lambda(&(lam - ax_sum * beta), lset),
    };

    let images: Vec<Vector> = p.blocks().iter().zip(&xs).map(|(b, x)| &b.a * x).collect();
    let v_tilde = xi_from_images(&images, &lambda_tilde, beta);
    Ok(PredictionOutput {
        x_tilde: xs,
        lambda_tilde,
        v_tilde,
        lambda_half: None,
    })
}

pub fn predict(
    kind: PredictorKind,
    state: &IterateState,
    p: &ProblemInstance,
    beta: f64,
    mu: f64,
) -> Result<PredictionOutput> {
    match kind {
        PredictorKind::ScPrsm => predict_scprsm(state, p, beta, mu),
        PredictorKind::Gs3 => predict_gs3(state, p, beta),
        PredictorKind::MultiBlock(order) => predict_multiblock(state, p, beta, order),
    }
}

fn xi_from_images(images: &[Vector], lambda: &Vector, beta: f64) -> Vector {
    let sb = beta.sqrt();
    let scaled: Vec<Vector> = images.iter().map(|im| im * sb).collect();
    let lam = lambda / sb;
    let mut parts: Vec<&Vector> = scaled.iter().collect();
    parts.push(&lam);
    matrix::concat(&parts)
}

/// Coordinates of the corrected subvector for the current iterate.
pub fn state_coords(
    kind: PredictorKind,
    p: &ProblemInstance,
    state: &IterateState,
    beta: f64,
) -> Result<Vector> {
    match kind {
        PredictorKind::ScPrsm => {
            let y = state.x_blocks[1]
                .as_ref()
                .ok_or_else(|| Error::Dimension("SC-PRSM state lost its y block".into()))?;
            Ok(matrix::concat(&[y, &state.lambda]))
        }
        PredictorKind::Gs3 => Ok(matrix::concat(&[
            &state.images[1],
            &state.images[2],
            &state.lambda,
        ])),
        PredictorKind::MultiBlock(_) => {
            let _ = p;
            Ok(xi_from_images(&state.images, &state.lambda, beta))
        }
    }
}

/// Coordinates of a full point `(x₁, …, x_p, λ)`.
pub fn point_coords(
    kind: PredictorKind,
    p: &ProblemInstance,
    xs: &[Vector],
    lambda: &Vector,
    beta: f64,
) -> Result<Vector> {
    let state = IterateState::from_point(p, xs, lambda);
    state.check(p)?;
    state_coords(kind, p, &state, beta)
}

/// Rebuild the iterate from corrected coordinates.
pub fn apply_coords(
    kind: PredictorKind,
    p: &ProblemInstance,
    pred: &PredictionOutput,
    v_next: &Vector,
    beta: f64,
) -> Result<IterateState> {
    let m = p.m();
    match kind {
        PredictorKind::ScPrsm => {
            let n2 = p.block(1).dim();
            let parts = matrix::split(v_next, &[n2, m]);
            let x = pred.x_tilde[0].clone();
            let y = parts[0].clone();
            Ok(IterateState {
                images: vec![&p.block(0).a * &x, &p.block(1).a * &y],
                x_blocks: vec![Some(x), Some(y)],
                lambda: parts[1].clone(),
            })
        }
        PredictorKind::Gs3 => {
            let parts = matrix::split(v_next, &[m, m, m]);
            let x = pred.x_tilde[0].clone();
            Ok(IterateState {
                images: vec![&p.block(0).a * &x, parts[0].clone(), parts[1].clone()],
                x_blocks: vec![Some(x), None, None],
                lambda: parts[2].clone(),
            })
        }
        PredictorKind::MultiBlock(_) => {
            let np = p.num_blocks();
            let sb = beta.sqrt();
            let parts = matrix::split(v_next, &vec![m; np + 1]);
            Ok(IterateState {
                images: parts[..np].iter().map(|v| v / sb).collect(),
                x_blocks: vec![None; np],
                lambda: &parts[np] * sb,
            })
        }
    }
}

/// The prediction matrix `Q`, with the scaling `P` and scaled matrix `𝒬`
/// (`Q = Pᵀ𝒬P`) for multi-block schemes. `layout` lists the block sizes of
/// the coordinates `Q` acts on, multiplier block last.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub q: DenseMatrix,
    pub scaling: Option<DenseMatrix>,
    pub scaled_q: Option<DenseMatrix>,
    pub structure: Structure,
    pub layout: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScPrsmMatrices {
    pub q: DenseMatrix,
    pub m: DenseMatrix,
    pub h: DenseMatrix,
    pub g: DenseMatrix,
}

fn require_rank(a: &DenseMatrix) -> Result<()> {
    let ratio = matrix::singular_value_ratio(a);
    if !(ratio > matrix::RANK_REL_TOL) {
        return Err(Error::RankDeficient { ratio });
    }
    Ok(())
}

/// `Q = [[βBᵀB, −μBᵀ], [−B, I/β]]` on `v = (y, λ)`.
pub fn q_scprsm(p: &ProblemInstance, beta: f64, mu: f64) -> Result<PredictionMatrix> {
    check_blocks(p, 2, "SC-PRSM")?;
    check_beta(beta)?;
    let bm = &p.block(1).a;
    require_rank(bm)?;
    let (m, n2) = bm.shape();
    let mut q = DenseMatrix::zeros(n2 + m, n2 + m);
    q.view_mut((0, 0), (n2, n2))
        .copy_from(&(bm.transpose() * bm * beta));
    q.view_mut((0, n2), (n2, m)).copy_from(&(bm.transpose() * -mu));
    q.view_mut((n2, 0), (m, n2)).copy_from(&(-bm));
    q.view_mut((n2, n2), (m, m)).fill_diagonal(1.0 / beta);
    Ok(PredictionMatrix {
        q,
        scaling: None,
        scaled_q: None,
        structure: Structure::ScPrsm,
        layout: vec![n2, m],
    })
}

/// SC-PRSM `(Q, M, H, G)` with `H = QM⁻¹` and `G = Qᵀ + Q − MᵀHM`.
///
/// `μ = 1` is accepted here so the boundary case can be probed.
pub fn scprsm_matrices(p: &ProblemInstance, beta: f64, mu: f64) -> Result<ScPrsmMatrices> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidParameter(format!("μ must lie in (0,1], got {mu}")));
    }
    let q = q_scprsm(p, beta, mu)?.q;
    let bm = &p.block(1).a;
    let (m, n2) = bm.shape();
    let mut mm = DenseMatrix::zeros(n2 + m, n2 + m);
    mm.view_mut((0, 0), (n2, n2)).fill_with_identity();
    mm.view_mut((n2, 0), (m, n2)).copy_from(&(bm * (-mu * beta)));
    mm.view_mut((n2, n2), (m, m)).fill_diagonal(2.0 * mu);
    // H = Q M⁻¹  ⇔  Mᵀ Hᵀ = Qᵀ.
    let h = matrix::LuSolver::new(&mm.transpose())?
        .solve_matrix(&q.transpose())?
        .transpose();
    let h = matrix::symmetrize(&h);
    let g = &q.transpose() + &q - mm.transpose() * &h * &mm;
    Ok(ScPrsmMatrices { q, m: mm, h, g })
}

/// Native GS3 matrix on `v = (y, z, λ)`:
/// `[[βBᵀB, 0, 0], [βCᵀB, βCᵀC, 0], [−B, −C, I/β]]`.
pub fn q_gs3(p: &ProblemInstance, beta: f64) -> Result<PredictionMatrix> {
    check_blocks(p, 3, "GS3")?;
    check_beta(beta)?;
    let bm = &p.block(1).a;
    let cm = &p.block(2).a;
    require_rank(bm)?;
    require_rank(cm)?;
    Ok(PredictionMatrix {
        q: gs3_matrix(bm, cm, beta),
        scaling: None,
        scaled_q: None,
        structure: Structure::Gs3,
        layout: vec![bm.ncols(), cm.ncols(), bm.nrows()],
    })
}

fn gs3_matrix(bm: &DenseMatrix, cm: &DenseMatrix, beta: f64) -> DenseMatrix {
    let (m, n2) = bm.shape();
    let n3 = cm.ncols();
    let mut q = DenseMatrix::zeros(n2 + n3 + m, n2 + n3 + m);
    q.view_mut((0, 0), (n2, n2))
        .copy_from(&(bm.transpose() * bm * beta));
    q.view_mut((n2, 0), (n3, n2))
        .copy_from(&(cm.transpose() * bm * beta));
    q.view_mut((n2, n2), (n3, n3))
        .copy_from(&(cm.transpose() * cm * beta));
    q.view_mut((n2 + n3, 0), (m, n2)).copy_from(&(-bm));
    q.view_mut((n2 + n3, n2), (m, n3)).copy_from(&(-cm));
    q.view_mut((n2 + n3, n2 + n3), (m, m)).fill_diagonal(1.0 / beta);
    q
}

/// GS3 matrix on image coordinates `(By, Cz, λ)`: the native matrix with
/// `B = C = I_m`. The native matrix factors as `Pᵀ Q_img P` with
/// `P = diag(B, C, I)`.
pub fn q_gs3_images(m: usize, beta: f64) -> Result<PredictionMatrix> {
    check_beta(beta)?;
    let id = DenseMatrix::identity(m, m);
    Ok(PredictionMatrix {
        q: gs3_matrix(&id, &id, beta),
        scaling: None,
        scaled_q: None,
        structure: Structure::Gs3,
        layout: vec![m, m, m],
    })
}

/// `𝒬_PD = [[𝓛, 𝓔ᵀ], [0, I]]` or `𝒬_DP = [[𝓛, 0], [−𝓔, I]]`.
pub fn multiblock_scaled_q(p: usize, m: usize, order: Order) -> DenseMatrix {
    let l = matrix::block_lower_ones(p, m);
    let e = matrix::block_row_ones(p, m);
    let pm = p * m;
    let mut q = DenseMatrix::zeros(pm + m, pm + m);
    q.view_mut((0, 0), (pm, pm)).copy_from(&l);
    match order {
        Order::PrimalDual => q.view_mut((0, pm), (pm, m)).copy_from(&e.transpose()),
        Order::DualPrimal => q.view_mut((pm, 0), (m, pm)).copy_from(&(-e)),
    }
    q.view_mut((pm, pm), (m, m)).fill_with_identity();
    q
}

/// Multi-block `Q` on `w`, its scaling `P = diag(√β A₁, …, √β A_p, I/√β)`, and
/// `𝒬` with `Q = Pᵀ𝒬P` checked to `1e-12`.
pub fn q_multiblock(p: &ProblemInstance, beta: f64, order: Order) -> Result<PredictionMatrix> {
    check_beta(beta)?;
    let np = p.num_blocks();
    for b in p.blocks() {
        require_rank(&b.a)?;
    }
    let m = p.m();
    let dims = p.block_dims();
    let offs = matrix::offsets(&dims);
    let n = p.n();
    let mut q = DenseMatrix::zeros(n + m, n + m);
    for i in 0..np {
        let ai = &p.block(i).a;
        for j in 0..=i {
            let aj = &p.block(j).a;
            q.view_mut((offs[i], offs[j]), (dims[i], dims[j]))
                .copy_from(&(ai.transpose() * aj * beta));
        }
        match order {
            Order::PrimalDual => q.view_mut((offs[i], n), (dims[i], m)).copy_from(&ai.transpose()),
            Order::DualPrimal => q.view_mut((n, offs[i]), (m, dims[i])).copy_from(&(-ai)),
        }
    }
    q.view_mut((n, n), (m, m)).fill_diagonal(1.0 / beta);

    let sb = beta.sqrt();
    let mut scaling = DenseMatrix::zeros((np + 1) * m, n + m);
    for i in 0..np {
        scaling
            .view_mut((i * m, offs[i]), (m, dims[i]))
            .copy_from(&(&p.block(i).a * sb));
    }
    scaling.view_mut((np * m, n), (m, m)).fill_diagonal(1.0 / sb);
    let scaled = multiblock_scaled_q(np, m, order);
    let factored = scaling.transpose() * &scaled * &scaling;
    if (&factored - &q).norm() > 1e-12 * q.norm().max(1.0) {
        return Err(Error::Dimension(
            "multi-block matrix does not factor as PᵀQP".into(),
        ));
    }
    let mut layout = dims;
    layout.push(m);
    Ok(PredictionMatrix {
        q,
        scaling: Some(scaling),
        scaled_q: Some(scaled),
        structure: match order {
            Order::PrimalDual => Structure::MultiPd,
            Order::DualPrimal => Structure::MultiDp,
        },
        layout,
    })
}
