//! Classical test functions moved onto products of unit spheres.
//!
//! Each block is compared against a feasible anchor block (by default
//! `(1, 0, ..., 0)`) and the zero-at-origin form of the function is applied
//! to the difference, so the global minimum 0 is attained on the sphere.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mscor::{MscorConfig, Objective};
use crate::sphere::{validate_point, MultiSpherePoint, SphereShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Ackley,
    Griewank,
    NegSumSquares,
    Rastrigin,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::Ackley,
        BenchmarkKind::Griewank,
        BenchmarkKind::NegSumSquares,
        BenchmarkKind::Rastrigin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Ackley => "ackley",
            BenchmarkKind::Griewank => "griewank",
            BenchmarkKind::NegSumSquares => "neg_sum_squares",
            BenchmarkKind::Rastrigin => "rastrigin",
        }
    }

    /// The zero-at-origin form applied to one block offset `z`.
    pub fn eval_offset(self, z: &[f64]) -> f64 {
        let n = z.len() as f64;
        match self {
            BenchmarkKind::Rastrigin => z.iter().map(|&x| x * x - 10.0 * (2.0 * PI * x).cos() + 10.0).sum(),
            BenchmarkKind::Ackley => {
                let mean_sq = z.iter().map(|x| x * x).sum::<f64>() / n;
                let mean_cos = z.iter().map(|&x| (2.0 * PI * x).cos()).sum::<f64>() / n;
                20.0 * (1.0 - (-0.2 * mean_sq.sqrt()).exp()) + (E - mean_cos.exp())
            }
            BenchmarkKind::Griewank => {
                let sum = z.iter().map(|x| x * x).sum::<f64>() / 4000.0;
                let prod: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(q, &x)| (x / ((q + 1) as f64).sqrt()).cos())
                    .product();
                1.0 + sum - prod
            }
            BenchmarkKind::NegSumSquares => z.iter().map(|x| x * x).sum(),
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown benchmark function `{s}`")))
    }
}

/// Settings used for the benchmark functions: a small sparsity threshold and
/// tolerances far below the default, so runs reach machine-level optima.
pub fn benchmark_config() -> MscorConfig {
    MscorConfig {
        lambda: 0.005,
        tau1: 1e-12,
        phi: 1e-12,
        ..MscorConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkFunction {
    kind: BenchmarkKind,
    anchor: MultiSpherePoint,
}

impl BenchmarkFunction {
    /// Anchored at the first basis vector of every block.
    pub fn new(kind: BenchmarkKind, shape: SphereShape) -> Self {
        let blocks = shape
            .block_lengths()
            .iter()
            .map(|&n| {
                let mut e = vec![0.0; n];
                e[0] = 1.0;
                e
            })
            .collect();
        let anchor = MultiSpherePoint::new(shape, blocks).expect("basis vectors are unit blocks");
        Self { kind, anchor }
    }

    pub fn with_anchor(kind: BenchmarkKind, anchor: MultiSpherePoint) -> Result<Self> {
        validate_point(&anchor)?;
        Ok(Self { kind, anchor })
    }

    pub fn kind(&self) -> BenchmarkKind {
        self.kind
    }

    pub fn shape(&self) -> &SphereShape {
        self.anchor.shape()
    }

    pub fn anchor(&self) -> &MultiSpherePoint {
        &self.anchor
    }

    fn block_value(&self, b: usize, block: &[f64]) -> f64 {
        let z: Vec<f64> = block.iter().zip(self.anchor.block(b)).map(|(x, a)| x - a).collect();
        self.kind.eval_offset(&z)
    }
}

/// Value of `function` at `point`.
pub fn eval_benchmark(function: &BenchmarkFunction, point: &MultiSpherePoint) -> Result<f64> {
    if point.shape() != function.shape() {
        return Err(Error::ShapeMismatch(format!(
            "point shape {:?} does not match benchmark shape {:?}",
            point.shape().block_lengths(),
            function.shape().block_lengths()
        )));
    }
    Ok(function.terms(point).iter().sum())
}

impl Objective for BenchmarkFunction {
    fn evaluate(&self, point: &MultiSpherePoint) -> f64 {
        self.terms(point).iter().sum()
    }

    fn terms(&self, point: &MultiSpherePoint) -> Vec<f64> {
        point
            .blocks()
            .iter()
            .enumerate()
            .map(|(b, block)| self.block_value(b, block))
            .collect()
    }

    fn term_of_block(&self, block: usize) -> usize {
        block
    }

    fn term_with_block(&self, _point: &MultiSpherePoint, block: usize, replacement: &[f64]) -> f64 {
        self.block_value(block, replacement)
    }
}
