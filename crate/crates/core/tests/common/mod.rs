#![allow(dead_code)]

use pcsplit::matrix::{DenseMatrix, Vector};
use pcsplit::problem::{Block, BlockFunction, BlockSet, ProblemInstance, Sense};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_row_slice(xs)
}

pub fn mat(r: usize, c: usize, xs: &[f64]) -> DenseMatrix {
    DenseMatrix::from_row_slice(r, c, xs)
}

pub fn gaussian<R: Rng>(r: usize, c: usize, rng: &mut R) -> DenseMatrix {
    // Sum of four uniforms.
    DenseMatrix::from_fn(r, c, |_, _| (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>())
}

/// `m×n` with orthonormal columns, `n ≤ m`.
pub fn orthonormal<R: Rng>(m: usize, n: usize, rng: &mut R) -> DenseMatrix {
    let q = gaussian(m, m, rng).qr().q();
    q.columns(0, n).into_owned()
}

/// Random full-column-rank `m×n` with a bounded condition number.
pub fn full_rank<R: Rng>(m: usize, n: usize, rng: &mut R) -> DenseMatrix {
    loop {
        let a = gaussian(m, n, rng);
        let sv = a.clone().singular_values();
        if sv.min() > 0.05 * sv.max() {
            return a;
        }
    }
}

pub fn half_sq(n: usize) -> BlockFunction {
    BlockFunction::Quadratic {
        p: DenseMatrix::identity(n, n),
        q: Vector::zeros(n),
    }
}

/// `min Σ ½xᵢ²` over `p` scalar blocks with `Σxᵢ = b`.
pub fn scalar_qp(p: usize, b: f64) -> ProblemInstance {
    let blocks = (0..p)
        .map(|_| Block::new(half_sq(1), DenseMatrix::identity(1, 1), BlockSet::Free).unwrap())
        .collect();
    ProblemInstance::new(blocks, v(&[b]), Sense::Equality).unwrap()
}

/// `min Σ ½‖xᵢ‖²` with `Σ Aᵢxᵢ = b`, random full-column-rank `Aᵢ`.
pub fn vector_qp(dims: &[usize], m: usize, seed: u64) -> ProblemInstance {
    let mut r = rng(seed);
    let blocks = dims
        .iter()
        .map(|&n| Block::new(half_sq(n), full_rank(m, n, &mut r), BlockSet::Free).unwrap())
        .collect();
    let b = Vector::from_fn(m, |_, _| r.gen_range(-2.0..2.0));
    ProblemInstance::new(blocks, b, Sense::Equality).unwrap()
}

/// Three scalar blocks, `m = 2`, orthonormal columns:
/// `|x₁| + ½(x₂ − ½)² + ½x₃²` with a unique solution.
pub fn l1_qp3() -> ProblemInstance {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ProblemInstance::new(
        vec![
            Block::new(
                BlockFunction::L1 { weight: 1.0 },
                mat(2, 1, &[1.0, 0.0]),
                BlockSet::Free,
            )
            .unwrap(),
            Block::new(
                BlockFunction::Quadratic {
                    p: mat(1, 1, &[1.0]),
                    q: v(&[-0.5]),
                },
                mat(2, 1, &[0.0, 1.0]),
                BlockSet::Free,
            )
            .unwrap(),
            Block::new(half_sq(1), mat(2, 1, &[s, s]), BlockSet::Free).unwrap(),
        ],
        v(&[1.0, 2.0]),
        Sense::Equality,
    )
    .unwrap()
}

/// `min Σ ½(xᵢ − cᵢ)²` with `x₁ + x₂ + x₃ ≥ 4`, `c = (1, ½, ½)`.
/// Solution `xᵢ = cᵢ + ⅔`, `λ = ⅔`.
pub fn inequality_scalar() -> ProblemInstance {
    let blocks = [1.0, 0.5, 0.5]
        .iter()
        .map(|&c| {
            Block::new(
                BlockFunction::Quadratic {
                    p: mat(1, 1, &[1.0]),
                    q: v(&[-c]),
                },
                mat(1, 1, &[1.0]),
                BlockSet::Free,
            )
            .unwrap()
        })
        .collect();
    ProblemInstance::new(blocks, v(&[4.0]), Sense::GreaterEqual).unwrap()
}
