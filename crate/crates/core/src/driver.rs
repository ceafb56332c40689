//! The predict-correct loop.

use std::fmt;
use std::str::FromStr;

use crate::certify::{self, ContractionRecord};
use crate::correction::{
    self, CorrectionPlan, Gs3Alg, Gs3Images, Preset, SplitChoice, DEFAULT_ALPHA, DEFAULT_NU,
};
use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix, Vector};
use crate::oracle;
use crate::predict::{self, IterateState, Order, PredictionMatrix, PredictorKind};
use crate::problem::{self, KktResidual, ProblemInstance, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    ScPrsm,
    Gs3(Gs3Alg),
    MultiPd,
    MultiDp,
    CustomSplit,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::ScPrsm,
        Scheme::Gs3(Gs3Alg::Alg1),
        Scheme::Gs3(Gs3Alg::Alg2),
        Scheme::Gs3(Gs3Alg::Alg3),
        Scheme::MultiPd,
        Scheme::MultiDp,
        Scheme::CustomSplit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ScPrsm => "scprsm",
            Scheme::Gs3(Gs3Alg::Alg1) => "gs3-alg1",
            Scheme::Gs3(Gs3Alg::Alg2) => "gs3-alg2",
            Scheme::Gs3(Gs3Alg::Alg3) => "gs3-alg3",
            Scheme::MultiPd => "multi-pd",
            Scheme::MultiDp => "multi-dp",
            Scheme::CustomSplit => "custom-split",
        }
    }

    /// Predictor used for `p`. Custom splits run on GS3 for three-block
    /// equality problems and on the multi-block predictors otherwise.
    pub fn predictor(self, p: &ProblemInstance) -> PredictorKind {
        match self {
            Scheme::ScPrsm => PredictorKind::ScPrsm,
            Scheme::Gs3(_) => PredictorKind::Gs3,
            Scheme::MultiPd => PredictorKind::MultiBlock(Order::PrimalDual),
            Scheme::MultiDp => PredictorKind::MultiBlock(Order::DualPrimal),
            Scheme::CustomSplit => {
                if p.sense() == Sense::GreaterEqual {
                    PredictorKind::MultiBlock(Order::DualPrimal)
                } else if p.num_blocks() == 3 {
                    PredictorKind::Gs3
                } else {
                    PredictorKind::MultiBlock(Order::PrimalDual)
                }
            }
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| {
            let names: Vec<_> = Scheme::ALL.iter().map(|s| s.name()).collect();
            Error::InvalidParameter(format!(
                "unknown scheme '{s}' (expected one of {})",
                names.join(", ")
            ))
        })
    }
}

/// User-supplied split for the custom scheme, in executed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum CustomSplit {
    D(DenseMatrix),
    G(DenseMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub beta: f64,
    pub mu: f64,
    pub nu: f64,
    pub alpha: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub monitor: bool,
    pub force: bool,
    pub custom: Option<CustomSplit>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Gs3(Gs3Alg::Alg1),
            beta: 1.0,
            mu: 0.5,
            nu: DEFAULT_NU,
            alpha: DEFAULT_ALPHA,
            max_iters: 5000,
            tol: 1e-8,
            seed: 0,
            monitor: false,
            force: false,
            custom: None,
        }
    }
}

impl RunConfig {
    pub fn with_scheme(scheme: Scheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.scheme == Scheme::ScPrsm && !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mu must lie in (0,1) for scprsm, got {}",
                self.mu
            )));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "nu must lie in (0,1), got {}",
                self.nu
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be nonnegative, got {}",
                self.tol
            )));
        }
        if self.custom.is_some() && self.scheme != Scheme::CustomSplit {
            return Err(Error::InvalidParameter(
                "a user split matrix requires the custom-split scheme".into(),
            ));
        }
        Ok(())
    }
}

/// How the correction step is executed.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Exec {
    Dense,
    Gs3(Gs3Alg),
    Multi(Order),
}

/// Plans for a scheme on a problem: `executed` acts on the coordinates the
/// loop corrects, `native` on the original variables.
#[derive(Debug, Clone)]
pub struct SchemePlans {
    pub kind: PredictorKind,
    pub executed: CorrectionPlan,
    pub native: CorrectionPlan,
    pub native_q: PredictionMatrix,
}

fn split_choice(cfg: &RunConfig) -> SplitChoice {
    match (cfg.scheme, &cfg.custom) {
        (Scheme::Gs3(alg), _) => SplitChoice::Preset {
            preset: alg.preset(),
            nu: cfg.nu,
        },
        (Scheme::MultiPd, _) => SplitChoice::Preset {
            preset: Preset::MultiPd,
            nu: cfg.nu,
        },
        (Scheme::MultiDp, _) => SplitChoice::Preset {
            preset: Preset::MultiDp,
            nu: cfg.nu,
        },
        (Scheme::CustomSplit, Some(CustomSplit::D(d))) => SplitChoice::FromD(d.clone()),
        (Scheme::CustomSplit, Some(CustomSplit::G(g))) => SplitChoice::FromG(g.clone()),
        (Scheme::CustomSplit, None) | (Scheme::ScPrsm, _) => SplitChoice::AlphaBlend(cfg.alpha),
    }
}

fn make_plan(q: &DenseMatrix, choice: &SplitChoice, layout: &[usize], force: bool) -> Result<CorrectionPlan> {
    if force {
        correction::build_plan_unchecked(q, choice, layout)
    } else {
        correction::build_plan(q, choice, layout)
    }
}

/// Build and certify the executed and native plans.
pub fn scheme_plans(p: &ProblemInstance, cfg: &RunConfig) -> Result<SchemePlans> {
    cfg.validate()?;
    let kind = cfg.scheme.predictor(p);
    let report = problem::validate_problem(p, kind);
    if !report.ok {
        return Err(Error::InvalidProblem(report.issues.join("; ")));
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let m = p.m();
    match kind {
        PredictorKind::ScPrsm => {
            let mats = predict::scprsm_matrices(p, cfg.beta, cfg.mu)?;
            let native_q = predict::q_scprsm(p, cfg.beta, cfg.mu)?;
            // D = QᵀM reproduces the scheme's own correction matrix.
            let choice = SplitChoice::FromD(matrix::symmetrize(&(mats.q.transpose() * &mats.m)));
            let plan = make_plan(&native_q.q, &choice, &native_q.layout, cfg.force)?;
            Ok(SchemePlans {
                kind,
                executed: plan.clone(),
                native: plan,
                native_q,
            })
        }
        PredictorKind::Gs3 => {
            let exec_q = predict::q_gs3_images(m, cfg.beta)?;
            let native_q = predict::q_gs3(p, cfg.beta)?;
            let choice = split_choice(cfg);
            let executed = make_plan(&exec_q.q, &choice, &exec_q.layout, cfg.force)?;
            let native_choice = match &choice {
                SplitChoice::FromD(_) | SplitChoice::FromG(_) => {
                    native_from_exec(&executed, p, kind, cfg.beta)?
                }
                c => c.clone(),
            };
            let native = make_plan(&native_q.q, &native_choice, &native_q.layout, true)?;
            Ok(SchemePlans {
                kind,
                executed,
                native,
                native_q,
            })
        }
        PredictorKind::MultiBlock(order) => {
            let np = p.num_blocks();
            let exec_q = predict::multiblock_scaled_q(np, m, order);
            let layout = vec![m; np + 1];
            let native_q = predict::q_multiblock(p, cfg.beta, order)?;
            let choice = split_choice(cfg);
            let executed = make_plan(&exec_q, &choice, &layout, cfg.force)?;
            let native_choice = match &choice {
                SplitChoice::FromD(_) | SplitChoice::FromG(_) => {
                    native_from_exec(&executed, p, kind, cfg.beta)?
                }
                c => c.clone(),
            };
            let native = make_plan(&native_q.q, &native_choice, &native_q.layout, true)?;
            Ok(SchemePlans {
                kind,
                executed,
                native,
                native_q,
            })
        }
    }
}

/// Pull a user split back to native coordinates: `D_native = PᵀDP`.
fn native_from_exec(
    executed: &CorrectionPlan,
    p: &ProblemInstance,
    kind: PredictorKind,
    beta: f64,
) -> Result<SplitChoice> {
    let scaling = match kind {
        PredictorKind::Gs3 => {
            let id = DenseMatrix::identity(p.m(), p.m());
            matrix::block_diag(&[p.block(1).a.clone(), p.block(2).a.clone(), id])
        }
        PredictorKind::MultiBlock(order) => predict::q_multiblock(p, beta, order)?
            .scaling
            .expect("multi-block scaling"),
        PredictorKind::ScPrsm => return Ok(SplitChoice::FromD(executed.d.clone())),
    };
    Ok(SplitChoice::FromD(scaling.transpose() * &executed.d * &scaling))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    IterationCap,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::IterationCap => "iteration_cap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub kkt: KktResidual,
    /// `‖vᵏ−ṽᵏ‖_∞`.
    pub pred_norm: f64,
    pub progress_sq_g: f64,
    pub contraction: Option<ContractionRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub blocks: Vec<Vector>,
    pub lambda: Vector,
    /// Blocks recovered from the corrected images by least squares, when the
    /// iterate only tracks images.
    pub recovered_blocks: Option<Vec<Vector>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub status: Status,
    pub iterations: usize,
    pub kkt: KktResidual,
    pub total_progress: f64,
    pub violations: usize,
    pub solution: Solution,
}

pub struct Runner<'a> {
    problem: &'a ProblemInstance,
    cfg: RunConfig,
    plans: SchemePlans,
    exec: Exec,
    state: IterateState,
    last: Option<predict::PredictionOutput>,
    v_star: Option<Vector>,
    k: usize,
}

impl<'a> Runner<'a> {
    pub fn new(problem: &'a ProblemInstance, cfg: RunConfig) -> Result<Self> {
        let plans = scheme_plans(problem, &cfg)?;
        if let Some(reason) = plans.executed.certificate.failure() {
            if !cfg.force {
                return Err(Error::Uncertified(reason));
            }
            log::warn!("running an uncertified plan: {reason}");
        }
        let exec = match (cfg.scheme, plans.kind) {
            (Scheme::Gs3(alg), _) => Exec::Gs3(alg),
            (Scheme::MultiPd | Scheme::MultiDp, PredictorKind::MultiBlock(order)) => Exec::Multi(order),
            _ => Exec::Dense,
        };
        let v_star = if cfg.monitor {
            let (w_star, quality) = oracle::reference_solution(problem)?;
            log::info!("reference solution residual {:e}", quality.max());
            let (xs, lambda) = problem.split_point(&w_star)?;
            Some(predict::point_coords(
                plans.kind, problem, &xs, &lambda, cfg.beta,
            )?)
        } else {
            None
        };
        Ok(Self {
            problem,
            state: IterateState::zeros(problem),
            cfg,
            plans,
            exec,
            last: None,
            v_star,
            k: 0,
        })
    }

    /// Supply the reference point in executed coordinates.
    pub fn set_reference(&mut self, v_star: Vector) {
        self.v_star = Some(v_star);
    }

    pub fn plans(&self) -> &SchemePlans {
        &self.plans
    }

    pub fn state(&self) -> &IterateState {
        &self.state
    }

    pub fn last_prediction(&self) -> Option<&predict::PredictionOutput> {
        self.last.as_ref()
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn step(&mut self) -> Result<IterationRecord> {
        let p = self.problem;
        let kind = self.plans.kind;
        let beta = self.cfg.beta;
        let pred = predict::predict(kind, &self.state, p, beta, self.cfg.mu)?;
        let v_k = predict::state_coords(kind, p, &self.state, beta)?;
        let v_next = match self.exec {
            Exec::Dense => correction::correct_dense(&self.plans.executed, &v_k, &pred.v_tilde)?,
            Exec::Gs3(alg) => correction::correct_gs3_structured(
                &Gs3Images::from_coords(&v_k)?,
                &Gs3Images::from_coords(&pred.v_tilde)?,
                alg,
                self.cfg.nu,
                beta,
            )?
            .coords(),
            Exec::Multi(order) => correction::correct_multiblock(
                &v_k,
                &pred.v_tilde,
                order,
                self.cfg.nu,
                p.num_blocks(),
                p.m(),
            )?,
        };
        let kkt = problem::kkt_residual(p, &pred.w_tilde(p))?;
        let diff = &v_k - &pred.v_tilde;
        let progress_sq_g = matrix::quad_form(&self.plans.executed.g, &diff);
        let contraction = if self.cfg.monitor {
            Some(certify::monitor_step(
                &self.plans.executed,
                self.k,
                &v_k,
                &v_next,
                &pred.v_tilde,
                self.v_star.as_ref(),
            )?)
        } else {
            None
        };
        let record = IterationRecord {
            k: self.k,
            kkt,
            pred_norm: matrix::norm_inf(&diff),
            progress_sq_g,
            contraction,
        };
        self.state = predict::apply_coords(kind, p, &pred, &v_next, beta)?;
        self.last = Some(pred);
        self.k += 1;
        Ok(record)
    }

    pub fn converged(&self, r: &IterationRecord) -> bool {
        r.pred_norm <= self.cfg.tol && r.kkt.primal <= self.cfg.tol
    }

    /// Iterate to convergence or the iteration cap, reporting each record.
    pub fn run<F>(mut self, mut on_iter: F) -> Result<RunSummary>
    where
        F: FnMut(&IterationRecord) -> Result<()>,
    {
        let mut status = Status::IterationCap;
        let mut total_progress = 0.0;
        let mut violations = 0;
        let mut kkt = None;
        while self.k < self.cfg.max_iters {
            let r = self.step()?;
            total_progress += r.progress_sq_g;
            if r.contraction.is_some_and(|c| c.violated) {
                violations += 1;
            }
            on_iter(&r)?;
            kkt = Some(r.kkt);
            if self.converged(&r) {
                status = Status::Converged;
                break;
            }
        }
        let p = self.problem;
        let solution = match &self.last {
            Some(pred) => Solution {
                blocks: pred.x_tilde.clone(),
                lambda: pred.lambda_tilde.clone(),
                recovered_blocks: self.recover()?,
            },
            None => Solution {
                blocks: p.block_dims().into_iter().map(Vector::zeros).collect(),
                lambda: Vector::zeros(p.m()),
                recovered_blocks: None,
            },
        };
        let kkt = match kkt {
            Some(k) => k,
            None => problem::kkt_residual(p, &p.join_point(&solution.blocks, &solution.lambda))?,
        };
        Ok(RunSummary {
            scheme: self.cfg.scheme,
            status,
            iterations: self.k,
            kkt,
            total_progress,
            violations,
            solution,
        })
    }

    /// Blocks that are tracked only through images, recovered once.
    fn recover(&self) -> Result<Option<Vec<Vector>>> {
        if self.state.x_blocks.iter().all(Option::is_some) {
            return Ok(None);
        }
        let mut out = Vec::new();
        for (i, x) in self.state.x_blocks.iter().enumerate() {
            let b = self.problem.block(i);
            let v = match x {
                Some(x) => x.clone(),
                None => matrix::least_squares_recover(&b.a, &self.state.images[i])?,
            };
            out.push(v);
        }
        Ok(Some(out))
    }
}

/// Run a configuration to completion.
pub fn solve(p: &ProblemInstance, cfg: RunConfig) -> Result<RunSummary> {
    Runner::new(p, cfg)?.run(|_| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Block, BlockFunction, BlockSet};

    fn sum_qp(p: usize, b: f64) -> ProblemInstance {
        let blocks = (0..p)
            .map(|_| {
                Block::new(
                    BlockFunction::Quadratic {
                        p: DenseMatrix::identity(1, 1),
                        q: Vector::zeros(1),
                    },
                    DenseMatrix::identity(1, 1),
                    BlockSet::Free,
                )
                .unwrap()
            })
            .collect();
        ProblemInstance::new(blocks, Vector::from_element(1, b), Sense::Equality).unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("gs4".parse::<Scheme>().is_err());
    }

    #[test]
    fn scprsm_first_step_matches_hand_values() {
        let p = sum_qp(2, 1.0);
        let mut r = Runner::new(&p, RunConfig::with_scheme(Scheme::ScPrsm)).unwrap();
        r.step().unwrap();
        let s = r.state();
        assert!((s.x_blocks[1].as_ref().unwrap()[0] - 0.375).abs() < 1e-12);
        assert!((s.lambda[0] - 0.3125).abs() < 1e-12);
    }

    #[test]
    fn mu_one_is_rejected() {
        let p = sum_qp(2, 1.0);
        let cfg = RunConfig {
            mu: 1.0,
            ..RunConfig::with_scheme(Scheme::ScPrsm)
        };
        let err = Runner::new(&p, cfg).err().unwrap().to_string();
        assert!(err.contains("(0,1)"), "{err}");
    }

    #[test]
    fn converges_on_three_block_qp() {
        let p = sum_qp(3, 3.0);
        for s in [
            Scheme::Gs3(Gs3Alg::Alg1),
            Scheme::Gs3(Gs3Alg::Alg2),
            Scheme::Gs3(Gs3Alg::Alg3),
            Scheme::MultiPd,
            Scheme::MultiDp,
            Scheme::CustomSplit,
        ] {
            let out = solve(&p, RunConfig::with_scheme(s)).unwrap();
            assert_eq!(out.status, Status::Converged, "{s}");
            for x in &out.solution.blocks {
                assert!((x[0] - 1.0).abs() < 1e-6, "{s}");
            }
        }
    }

    #[test]
    fn cap_and_boundary_split() {
        let p = sum_qp(3, 3.0);
        let cfg = RunConfig {
            max_iters: 1,
            ..RunConfig::default()
        };
        let out = solve(&p, cfg).unwrap();
        assert_eq!((out.status, out.iterations), (Status::IterationCap, 1));

        let q = predict::q_gs3_images(1, 1.0).unwrap().q;
        let cfg = RunConfig {
            custom: Some(CustomSplit::D(q.transpose() + &q)),
            ..RunConfig::with_scheme(Scheme::CustomSplit)
        };
        let err = Runner::new(&p, cfg.clone()).err().unwrap().to_string();
        assert!(err.contains("G not SPD"), "{err}");
        let forced = Runner::new(&p, RunConfig { force: true, ..cfg }).unwrap();
        assert!(!forced.plans().executed.certificate.ok);
    }
}
