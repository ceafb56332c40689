//! JSON problem files.
//!
//! ```json
//! {
//!   "m": 1,
//!   "sense": "equality",
//!   "rhs": [1.0],
//!   "blocks": [
//!     {"kind": "quadratic", "params": {"P": [[1.0]], "q": [0.0]}, "A": [[1.0]]},
//!     {"kind": "l1", "params": {"weight": 1.0}, "A": [[1.0]], "set": {"box": {"lo": [-1.0], "hi": [null]}}}
//!   ]
//! }
//! ```
//!
//! `null` bounds are infinite. `set` defaults to `"free"`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, Vector};
use crate::problem::{Block, BlockFunction, BlockSet, ProblemInstance, Sense};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub m: usize,
    pub sense: SenseFile,
    pub rhs: Vec<f64>,
    pub blocks: Vec<BlockFile>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SenseFile {
    Equality,
    GreaterEqual,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockFile {
    #[serde(flatten)]
    pub theta: ThetaFile,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub set: SetFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ThetaFile {
    Quadratic {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        q: Vec<f64>,
    },
    L1 {
        weight: f64,
    },
    Zero,
    BoxIndicator {
        lo: Vec<Option<f64>>,
        hi: Vec<Option<f64>>,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetFile {
    #[default]
    Free,
    Box {
        lo: Vec<Option<f64>>,
        hi: Vec<Option<f64>>,
    },
}

fn rows_to_matrix(rows: &[Vec<f64>], ctx: &str) -> Result<DenseMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(Error::Parse(format!(
            "{ctx}: row {i} has {} entries, expected {c}",
            row.len()
        )));
    }
    Ok(DenseMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_to_rows(a: &DenseMatrix) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn bounds(v: &[Option<f64>], inf: f64) -> Vector {
    Vector::from_iterator(v.len(), v.iter().map(|b| b.unwrap_or(inf)))
}

fn unbounds(v: &Vector) -> Vec<Option<f64>> {
    v.iter().map(|b| b.is_finite().then_some(*b)).collect()
}

impl ProblemFile {
    pub fn to_instance(&self) -> Result<ProblemInstance> {
        if self.rhs.len() != self.m {
            return Err(Error::Parse(format!(
                "rhs has length {}, m = {}",
                self.rhs.len(),
                self.m
            )));
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let ctx = format!("blocks[{i}]");
            let theta = match &b.theta {
                ThetaFile::Quadratic { p, q } => BlockFunction::Quadratic {
                    p: rows_to_matrix(p, &format!("{ctx}.params.P"))?,
                    q: Vector::from_column_slice(q),
                },
                ThetaFile::L1 { weight } => BlockFunction::L1 { weight: *weight },
                ThetaFile::Zero => BlockFunction::Zero,
                ThetaFile::BoxIndicator { lo, hi } => BlockFunction::BoxIndicator {
                    lo: bounds(lo, f64::NEG_INFINITY),
                    hi: bounds(hi, f64::INFINITY),
                },
            };
            let a = rows_to_matrix(&b.a, &format!("{ctx}.A"))?;
            if a.nrows() != self.m {
                return Err(Error::Parse(format!(
                    "{ctx}.A has {} rows, m = {}",
                    a.nrows(),
                    self.m
                )));
            }
            let set = match &b.set {
                SetFile::Free => BlockSet::Free,
                SetFile::Box { lo, hi } => BlockSet::Box {
                    lo: bounds(lo, f64::NEG_INFINITY),
                    hi: bounds(hi, f64::INFINITY),
                },
            };
            blocks.push(Block::new(theta, a, set).map_err(|e| Error::Parse(format!("{ctx}: {e}")))?);
        }
        let sense = match self.sense {
            SenseFile::Equality => Sense::Equality,
            SenseFile::GreaterEqual => Sense::GreaterEqual,
        };
        ProblemInstance::new(blocks, Vector::from_column_slice(&self.rhs), sense)
            .map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_instance(p: &ProblemInstance) -> Self {
        let blocks = p
            .blocks()
            .iter()
            .map(|b| BlockFile {
                theta: match &b.theta {
                    BlockFunction::Quadratic { p, q } => ThetaFile::Quadratic {
                        p: matrix_to_rows(p),
                        q: q.iter().copied().collect(),
                    },
                    BlockFunction::L1 { weight } => ThetaFile::L1 { weight: *weight },
                    BlockFunction::Zero => ThetaFile::Zero,
                    BlockFunction::BoxIndicator { lo, hi } => ThetaFile::BoxIndicator {
                        lo: unbounds(lo),
                        hi: unbounds(hi),
                    },
                },
                a: matrix_to_rows(&b.a),
                set: match &b.set {
                    BlockSet::Free => SetFile::Free,
                    BlockSet::Box { lo, hi } => SetFile::Box {
                        lo: unbounds(lo),
                        hi: unbounds(hi),
                    },
                },
            })
            .collect();
        Self {
            m: p.m(),
            sense: match p.sense() {
                Sense::Equality => SenseFile::Equality,
                Sense::GreaterEqual => SenseFile::GreaterEqual,
            },
            rhs: p.rhs().iter().copied().collect(),
            blocks,
        }
    }
}

fn parse_json<'de, T: Deserialize<'de>>(text: &'de str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            Error::Parse(inner.to_string())
        } else {
            Error::Parse(format!("at {path}: {inner}"))
        }
    })
}

pub fn parse_problem(text: &str) -> Result<ProblemInstance> {
    parse_json::<ProblemFile>(text)?.to_instance()
}

pub fn load_problem(path: &std::path::Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path)?;
    parse_problem(&text)
}

pub fn problem_to_json(p: &ProblemInstance) -> String {
    serde_json::to_string_pretty(&ProblemFile::from_instance(p)).expect("problem serializes")
}

/// A dense matrix given as a JSON array of rows.
pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = parse_json(text)?;
    rows_to_matrix(&rows, "matrix")
}
