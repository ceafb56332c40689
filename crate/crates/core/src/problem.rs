//! Separable convex programs `min Σ θᵢ(xᵢ)  s.t.  Σ Aᵢxᵢ = b (or ≥ b),  xᵢ ∈ 𝒳ᵢ`,
//! their variational-inequality operator, validation and KKT residuals.

use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix, Vector};
use crate::predict::PredictorKind;
use crate::subproblem::{self, SolvabilityClass, SubproblemSpec};

/// Symmetric PSD tolerance: `λ_min(P) ≥ −PSD_TOL·‖P‖`.
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum BlockFunction {
    /// `½ xᵀPx + qᵀx`.
    Quadratic {
        p: DenseMatrix,
        q: Vector,
    },
    /// `weight·‖x‖₁`.
    L1 {
        weight: f64,
    },
    Zero,
    /// Indicator of `[lo, hi]`.
    BoxIndicator {
        lo: Vector,
        hi: Vector,
    },
}

impl BlockFunction {
    /// Dimension implied by the function itself, if any.
    pub fn intrinsic_dim(&self) -> Option<usize> {
        match self {
            BlockFunction::Quadratic { q, .. } => Some(q.len()),
            BlockFunction::BoxIndicator { lo, .. } => Some(lo.len()),
            BlockFunction::L1 { .. } | BlockFunction::Zero => None,
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            BlockFunction::Quadratic { p, q } => 0.5 * matrix::quad_form(p, x) + q.dot(x),
            BlockFunction::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            BlockFunction::Zero => 0.0,
            BlockFunction::BoxIndicator { lo, hi } => {
                if in_box(x, lo, hi) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BlockFunction::Quadratic { p, q } => {
                if p.nrows() != p.ncols() || p.nrows() != q.len() {
                    return Err(Error::InvalidProblem(format!(
                        "quadratic P is {}x{} but q has length {}",
                        p.nrows(),
                        p.ncols(),
                        q.len()
                    )));
                }
                if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProblem("quadratic has non-finite entries".into()));
                }
                if matrix::rel_diff(p, &p.transpose()) > PSD_TOL && p.norm() > 0.0 {
                    return Err(Error::InvalidProblem("quadratic P is not symmetric".into()));
                }
                if p.nrows() > 0 {
                    let eigs = matrix::symmetrize(p).symmetric_eigenvalues();
                    let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
                    let norm = eigs.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
                    if min < -PSD_TOL * norm {
                        return Err(Error::InvalidProblem(format!(
                            "quadratic P is not PSD (min eigenvalue {min:e})"
                        )));
                    }
                }
            }
            BlockFunction::L1 { weight } => {
                if !(*weight >= 0.0) || !weight.is_finite() {
                    return Err(Error::InvalidProblem(format!(
                        "L1 weight must be finite and nonnegative, got {weight}"
                    )));
                }
            }
            BlockFunction::Zero => {}
            BlockFunction::BoxIndicator { lo, hi } => check_box(lo, hi)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockSet {
    Free,
    Box { lo: Vector, hi: Vector },
}

impl BlockSet {
    pub fn contains(&self, x: &Vector) -> bool {
        match self {
            BlockSet::Free => true,
            BlockSet::Box { lo, hi } => in_box(x, lo, hi),
        }
    }

    pub fn project(&self, x: &Vector) -> Vector {
        match self {
            BlockSet::Free => x.clone(),
            BlockSet::Box { lo, hi } => clip(x, lo, hi),
        }
    }
}

fn check_box(lo: &Vector, hi: &Vector) -> Result<()> {
    if lo.len() != hi.len() {
        return Err(Error::InvalidProblem(format!(
            "box bounds have lengths {} and {}",
            lo.len(),
            hi.len()
        )));
    }
    if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
        return Err(Error::InvalidProblem(
            "box requires lo <= hi componentwise".into(),
        ));
    }
    Ok(())
}

fn in_box(x: &Vector, lo: &Vector, hi: &Vector) -> bool {
    x.iter()
        .zip(lo.iter().zip(hi.iter()))
        .all(|(v, (l, h))| *v >= *l && *v <= *h)
}

pub(crate) fn clip(x: &Vector, lo: &Vector, hi: &Vector) -> Vector {
    Vector::from_iterator(
        x.len(),
        x.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(v, (l, h))| v.max(*l).min(*h)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub theta: BlockFunction,
    pub a: DenseMatrix,
    pub set: BlockSet,
}

impl Block {
    pub fn new(theta: BlockFunction, a: DenseMatrix, set: BlockSet) -> Result<Self> {
        theta.validate()?;
        let n = a.ncols();
        if n == 0 {
            return Err(Error::InvalidProblem("block has zero columns".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem(
                "block matrix has non-finite entries".into(),
            ));
        }
        if let Some(d) = theta.intrinsic_dim() {
            if d != n {
                return Err(Error::InvalidProblem(format!(
                    "block function has dimension {d} but its matrix has {n} columns"
                )));
            }
        }
        if let BlockSet::Box { lo, hi } = &set {
            check_box(lo, hi)?;
            if lo.len() != n {
                return Err(Error::InvalidProblem(format!(
                    "block set has dimension {} but its matrix has {n} columns",
                    lo.len()
                )));
            }
        }
        Ok(Self { theta, a, set })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Effective box from the constraint set and a box-indicator objective.
    pub fn effective_box(&self) -> Option<(Vector, Vector)> {
        let from_set = match &self.set {
            BlockSet::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            BlockSet::Free => None,
        };
        let from_theta = match &self.theta {
            BlockFunction::BoxIndicator { lo, hi } => Some((lo.clone(), hi.clone())),
            _ => None,
        };
        match (from_set, from_theta) {
            (None, None) => None,
            (Some(b), None) | (None, Some(b)) => Some(b),
            (Some((l1, h1)), Some((l2, h2))) => Some((l1.sup(&l2), h1.inf(&h2))),
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        match self.effective_box() {
            Some((lo, hi)) => in_box(x, &lo, &hi),
            None => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Equality,
    GreaterEqual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSet {
    /// `ℝᵐ`
    Free,
    /// `ℝᵐ₊`
    NonNegative,
}

impl Sense {
    pub fn lambda_set(self) -> LambdaSet {
        match self {
            Sense::Equality => LambdaSet::Free,
            Sense::GreaterEqual => LambdaSet::NonNegative,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    blocks: Vec<Block>,
    rhs: Vector,
    sense: Sense,
}

impl ProblemInstance {
    pub fn new(blocks: Vec<Block>, rhs: Vector, sense: Sense) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidProblem("problem has no blocks".into()));
        }
        let m = rhs.len();
        if m == 0 {
            return Err(Error::InvalidProblem(
                "constraint dimension m must be positive".into(),
            ));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("rhs has non-finite entries".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.a.nrows() != m {
                return Err(Error::InvalidProblem(format!(
                    "block {i} matrix has {} rows, expected m = {m}",
                    b.a.nrows()
                )));
            }
        }
        Ok(Self { blocks, rhs, sense })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Block {
        &self.blocks[i]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn rhs(&self) -> &Vector {
        &self.rhs
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn m(&self) -> usize {
        self.rhs.len()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(Block::dim).collect()
    }

    /// Total primal dimension `n = Σ nᵢ`.
    pub fn n(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum()
    }

    pub fn objective(&self, xs: &[Vector]) -> f64 {
        self.blocks.iter().zip(xs).map(|(b, x)| b.theta.value(x)).sum()
    }

    /// `Σ Aᵢxᵢ − b`.
    pub fn constraint_residual(&self, xs: &[Vector]) -> Vector {
        let mut r = -self.rhs.clone();
        for (b, x) in self.blocks.iter().zip(xs) {
            r += &b.a * x;
        }
        r
    }

    /// Split a stacked point `w = (x₁, …, x_p, λ)`.
    pub fn split_point(&self, w: &Vector) -> Result<(Vec<Vector>, Vector)> {
        let expected = self.n() + self.m();
        if w.len() != expected {
            return Err(Error::Dimension(format!(
                "point has length {}, expected n + m = {expected}",
                w.len()
            )));
        }
        let mut sizes = self.block_dims();
        sizes.push(self.m());
        let mut parts = matrix::split(w, &sizes);
        let lambda = parts.pop().expect("lambda block");
        Ok((parts, lambda))
    }

    pub fn join_point(&self, xs: &[Vector], lambda: &Vector) -> Vector {
        let mut parts: Vec<&Vector> = xs.iter().collect();
        parts.push(lambda);
        matrix::concat(&parts)
    }

    pub fn vi(&self) -> ViDescription {
        ViDescription {
            a_blocks: self.blocks.iter().map(|b| b.a.clone()).collect(),
            rhs: self.rhs.clone(),
            lambda_set: self.sense.lambda_set(),
        }
    }

    /// Whether `w ∈ Ω`.
    pub fn omega_contains(&self, w: &Vector) -> Result<bool> {
        let (xs, lambda) = self.split_point(w)?;
        let blocks_ok = self.blocks.iter().zip(&xs).all(|(b, x)| b.contains(x));
        let lambda_ok = match self.sense.lambda_set() {
            LambdaSet::Free => true,
            LambdaSet::NonNegative => lambda.iter().all(|v| *v >= 0.0),
        };
        Ok(blocks_ok && lambda_ok)
    }
}

/// The affine VI operator `F(w) = (−A₁ᵀλ, …, −A_pᵀλ, ΣAᵢxᵢ − b)` over `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViDescription {
    pub a_blocks: Vec<DenseMatrix>,
    pub rhs: Vector,
    pub lambda_set: LambdaSet,
}

impl ViDescription {
    pub fn dim(&self) -> usize {
        self.a_blocks.iter().map(|a| a.ncols()).sum::<usize>() + self.rhs.len()
    }

    pub fn evaluate_f(&self, w: &Vector) -> Result<Vector> {
        if w.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has length {}, operator expects {}",
                w.len(),
                self.dim()
            )));
        }
        let m = self.rhs.len();
        let n = w.len() - m;
        let lambda = w.rows(n, m);
        let mut out = Vector::zeros(w.len());
        let mut residual = -self.rhs.clone();
        let mut o = 0;
        for a in &self.a_blocks {
            let ni = a.ncols();
            let x = w.rows(o, ni);
            out.rows_mut(o, ni).copy_from(&(-(a.transpose() * lambda)));
            residual += a * x;
            o += ni;
        }
        out.rows_mut(n, m).copy_from(&residual);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub rank_required: bool,
    pub full_column_rank: bool,
    pub singular_value_ratio: f64,
    pub class: SolvabilityClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub ok: bool,
    pub dims_ok: bool,
    pub sense_ok: bool,
    pub blocks: Vec<BlockReport>,
    pub issues: Vec<String>,
    pub warnings: Vec<String>,
}

fn block_name(kind: PredictorKind, p: usize, i: usize) -> String {
    match kind {
        PredictorKind::ScPrsm | PredictorKind::Gs3 if p <= 3 => ["A", "B", "C"][i].to_string(),
        _ => format!("A{}", i + 1),
    }
}

/// Check a problem against the structural requirements of a predictor.
pub fn validate_problem(p: &ProblemInstance, kind: PredictorKind) -> ValidationReport {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    let nb = p.num_blocks();

    let dims_ok = match kind {
        PredictorKind::ScPrsm if nb != 2 => {
            issues.push(format!("SC-PRSM requires exactly 2 blocks, got {nb}"));
            false
        }
        PredictorKind::Gs3 if nb != 3 => {
            issues.push(format!("GS3 requires exactly 3 blocks, got {nb}"));
            false
        }
        PredictorKind::MultiBlock(_) if nb < 2 => {
            issues.push(format!(
                "multi-block prediction requires at least 2 blocks, got {nb}"
            ));
            false
        }
        _ => true,
    };
    if matches!(kind, PredictorKind::MultiBlock(_)) && nb == 2 {
        warnings.push("multi-block prediction with p = 2 (formulas are stated for p >= 3)".into());
    }

    let sense_ok = match (p.sense(), kind) {
        (Sense::GreaterEqual, PredictorKind::MultiBlock(crate::predict::Order::DualPrimal)) => true,
        (Sense::GreaterEqual, _) => {
            issues.push("inequality sense requires DP predictor".into());
            false
        }
        (Sense::Equality, _) => true,
    };

    let blocks = p
        .blocks()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let rank_required = match kind {
                PredictorKind::ScPrsm => i == 1,
                PredictorKind::Gs3 => i >= 1,
                PredictorKind::MultiBlock(_) => true,
            };
            let ratio = matrix::singular_value_ratio(&b.a);
            let full = ratio > matrix::RANK_REL_TOL;
            let name = block_name(kind, nb, i);
            if rank_required && !full {
                issues.push(format!("{name} rank-deficient"));
            }
            let spec = SubproblemSpec {
                theta: &b.theta,
                a: &b.a,
                beta: 1.0,
                linear: Vector::zeros(b.dim()),
                shift: Vector::zeros(p.m()),
                set: &b.set,
            };
            let class = subproblem::classify(&spec);
            if class == SolvabilityClass::Unsupported {
                issues.push(format!("{name} subproblem has no exact closed-form solver"));
            }
            BlockReport {
                name,
                rank_required,
                full_column_rank: full,
                singular_value_ratio: ratio,
                class,
            }
        })
        .collect();

    ValidationReport {
        ok: issues.is_empty(),
        dims_ok,
        sense_ok,
        blocks,
        issues,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    pub primal: f64,
    pub dual: f64,
    pub compl: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.compl)
    }
}

/// Closed interval `[lo, hi]` with possibly infinite ends.
#[derive(Debug, Clone, Copy)]
struct Interval(f64, f64);

impl Interval {
    fn point(v: f64) -> Self {
        Interval(v, v)
    }
    fn add(self, o: Interval) -> Self {
        Interval(self.0 + o.0, self.1 + o.1)
    }
    fn dist_to_zero(self) -> f64 {
        if self.0 > 0.0 {
            self.0
        } else if self.1 < 0.0 {
            -self.1
        } else {
            0.0
        }
    }
}

/// Distance of 0 from `∂θ(x) − Aᵀλ + N_𝒳(x)` for one block.
fn block_dual_residual(b: &Block, x: &Vector, lambda: &Vector) -> f64 {
    let mut g = -(b.a.transpose() * lambda);
    if let BlockFunction::Quadratic { p, q } = &b.theta {
        g += p * x + q;
    }
    let bx = b.effective_box();
    let mut sq = 0.0;
    for j in 0..x.len() {
        let mut iv = Interval::point(g[j]);
        if let BlockFunction::L1 { weight } = b.theta {
            let s = if x[j] > 0.0 {
                Interval::point(weight)
            } else if x[j] < 0.0 {
                Interval::point(-weight)
            } else {
                Interval(-weight, weight)
            };
            iv = iv.add(s);
        }
        if let Some((lo, hi)) = &bx {
            let cone = if lo[j] == hi[j] {
                Interval(f64::NEG_INFINITY, f64::INFINITY)
            } else if x[j] <= lo[j] {
                Interval(f64::NEG_INFINITY, 0.0)
            } else if x[j] >= hi[j] {
                Interval(0.0, f64::INFINITY)
            } else {
                Interval::point(0.0)
            };
            iv = iv.add(cone);
        }
        sq += iv.dist_to_zero().powi(2);
    }
    sq.sqrt()
}

/// KKT residuals of the saddle-point characterization at `w = (x, λ)`.
///
/// For the inequality sense the complementarity entry also carries the
/// dual-feasibility violation `‖min(λ, 0)‖`.
pub fn kkt_residual(p: &ProblemInstance, w: &Vector) -> Result<KktResidual> {
    let (xs, lambda) = p.split_point(w)?;
    let r = p.constraint_residual(&xs);
    let dual = p
        .blocks()
        .iter()
        .zip(&xs)
        .map(|(b, x)| block_dual_residual(b, x, &lambda).powi(2))
        .sum::<f64>()
        .sqrt();
    let (primal, compl) = match p.sense() {
        Sense::Equality => (r.norm(), 0.0),
        Sense::GreaterEqual => {
            let viol = r.map(|v| v.min(0.0)).norm();
            let neg = lambda.map(|v| v.min(0.0)).norm();
            (viol, lambda.dot(&r).abs() + neg)
        }
    };
    Ok(KktResidual { primal, dual, compl })
}
