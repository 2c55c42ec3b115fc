//! Products of unit spheres and the coordinate moves that stay on them.
//!
//! A search point is a list of blocks, each a unit vector. Moving one
//! coordinate of a block by a step `s` pushes the block off its sphere; the
//! remaining significant coordinates are then shifted by a common
//! adjustment `t` chosen so the block has unit norm again. Coordinates whose
//! magnitude falls below the sparsity threshold are zeroed instead.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a block norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-12;

const MAX_GAUSSIAN_DRAWS: usize = 64;

/// Block lengths `n_1..n_B` of a product of spheres.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SphereShape {
    block_lengths: Vec<usize>,
}

impl SphereShape {
    pub fn new(block_lengths: Vec<usize>) -> Result<Self> {
        if block_lengths.is_empty() {
            return Err(Error::ShapeMismatch("a shape needs at least one block".into()));
        }
        if let Some(b) = block_lengths.iter().position(|&n| n < 2) {
            return Err(Error::ShapeMismatch(format!(
                "block {b} has length {}, minimum is 2",
                block_lengths[b]
            )));
        }
        Ok(Self { block_lengths })
    }

    /// `blocks` spheres of identical length `dim`.
    pub fn uniform(blocks: usize, dim: usize) -> Result<Self> {
        Self::new(vec![dim; blocks])
    }

    pub fn block_lengths(&self) -> &[usize] {
        &self.block_lengths
    }

    pub fn n_blocks(&self) -> usize {
        self.block_lengths.len()
    }

    /// Total parameter count `M`.
    pub fn total_len(&self) -> usize {
        self.block_lengths.iter().sum()
    }
}

impl TryFrom<Vec<usize>> for SphereShape {
    type Error = Error;

    fn try_from(value: Vec<usize>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<SphereShape> for Vec<usize> {
    fn from(value: SphereShape) -> Self {
        value.block_lengths
    }
}

/// A point of the product space: one unit vector per block.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSpherePoint {
    shape: SphereShape,
    blocks: Vec<Vec<f64>>,
}

impl MultiSpherePoint {
    /// Builds a point, checking block lengths and unit norms.
    pub fn new(shape: SphereShape, blocks: Vec<Vec<f64>>) -> Result<Self> {
        check_blocks(&shape, &blocks)?;
        Ok(Self { shape, blocks })
    }

    /// Infers the shape from the blocks themselves.
    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let shape = SphereShape::new(blocks.iter().map(Vec::len).collect())?;
        Self::new(shape, blocks)
    }

    pub fn shape(&self) -> &SphereShape {
        &self.shape
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &[f64] {
        &self.blocks[b]
    }

    pub fn into_blocks(self) -> Vec<Vec<f64>> {
        self.blocks
    }

    /// Replaces block `b`. The caller guarantees `block` is a unit vector of
    /// the right length.
    pub(crate) fn set_block(&mut self, b: usize, block: Vec<f64>) {
        debug_assert_eq!(block.len(), self.shape.block_lengths[b]);
        self.blocks[b] = block;
    }

    /// Euclidean distance over all concatenated coordinates.
    pub fn distance(&self, other: &MultiSpherePoint) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_blocks(shape: &SphereShape, blocks: &[Vec<f64>]) -> Result<()> {
    if blocks.len() != shape.n_blocks() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} blocks, got {}",
            shape.n_blocks(),
            blocks.len()
        )));
    }
    for (b, (block, &n)) in blocks.iter().zip(shape.block_lengths()).enumerate() {
        if block.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "block {b} has length {}, expected {n}",
                block.len()
            )));
        }
        let r = norm(block);
        if !((r - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(Error::NormViolation { block: b, norm: r });
        }
    }
    Ok(())
}

/// Checks block lengths against the shape and every block norm against 1.
pub fn validate_point(point: &MultiSpherePoint) -> Result<()> {
    check_blocks(&point.shape, &point.blocks)
}

/// Draws a uniformly distributed unit vector of length `n`.
pub fn random_unit_vector<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Vec<f64>> {
    for _ in 0..MAX_GAUSSIAN_DRAWS {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let r = norm(&v);
        if r > 0.0 && r.is_finite() {
            return Ok(v.into_iter().map(|x| x / r).collect());
        }
    }
    Err(Error::ZeroVector(MAX_GAUSSIAN_DRAWS))
}

/// Seeded random point; every block is a normalized standard-normal draw.
pub fn random_point(shape: &SphereShape, seed: u64) -> Result<MultiSpherePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = shape
        .block_lengths()
        .iter()
        .map(|&n| random_unit_vector(&mut rng, n))
        .collect::<Result<Vec<_>>>()?;
    MultiSpherePoint::new(shape.clone(), blocks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Negative,
    Positive,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Negative => -1.0,
            Direction::Positive => 1.0,
        }
    }
}

/// One exploratory movement `(block, coord, ±)` with its base step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveSpec {
    pub block: usize,
    pub coord: usize,
    pub direction: Direction,
    pub step: f64,
    pub sparsity_threshold: f64,
}

impl MoveSpec {
    pub fn signed_step(&self) -> f64 {
        self.direction.sign() * self.step
    }
}

/// Solution of the norm-restoring quadratic for one coordinate move.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentStep {
    /// Discriminant of `|Γ| t² + 2 t Σ_Γ x + (2 s x_i + s² − Σ_Λ x²) = 0`.
    pub discriminant: f64,
    /// Other coordinates with `|x_k| >= λ`; these receive the shift `t`.
    pub significant: Vec<usize>,
    /// Other coordinates with `|x_k| < λ`; these are zeroed.
    pub insignificant: Vec<usize>,
    /// The larger root, or `None` when no real root exists or nothing is
    /// left to adjust.
    pub root: Option<f64>,
}

/// Computes the adjustment step-size for moving `block[coord]` by the signed
/// step `step`.
pub fn adjustment_step(block: &[f64], coord: usize, step: f64, sparsity_threshold: f64) -> AdjustmentStep {
    let (significant, insignificant): (Vec<usize>, Vec<usize>) = (0..block.len())
        .filter(|&k| k != coord)
        .partition(|&k| block[k].abs() >= sparsity_threshold);
    let sum_significant: f64 = significant.iter().map(|&k| block[k]).sum();
    let dropped_mass: f64 = insignificant.iter().map(|&k| block[k] * block[k]).sum();
    let discriminant = discriminant(sum_significant, significant.len(), block[coord], step, dropped_mass);
    let root = if discriminant >= 0.0 && !significant.is_empty() {
        Some((-2.0 * sum_significant + discriminant.sqrt()) / (2.0 * significant.len() as f64))
    } else {
        None
    };
    AdjustmentStep {
        discriminant,
        significant,
        insignificant,
        root,
    }
}

#[inline]
fn discriminant(sum_significant: f64, n_significant: usize, x_i: f64, s: f64, dropped_mass: f64) -> f64 {
    let b = 2.0 * sum_significant;
    b * b - 4.0 * n_significant as f64 * (2.0 * s * x_i + s * s - dropped_mass)
}

/// Builds the candidate block for `mv`, shrinking the step by `rho` while no
/// norm-restoring adjustment exists and `|s| > phi`. Returns `None` when the
/// move is infeasible at every tried step.
pub fn propose_move(block: &[f64], mv: &MoveSpec, rho: f64, phi: f64) -> Option<Vec<f64>> {
    let i = mv.coord;
    let mut s = mv.signed_step();
    let mut adj = adjustment_step(block, i, s, mv.sparsity_threshold);
    if adj.significant.is_empty() {
        return None;
    }
    let sum_significant: f64 = adj.significant.iter().map(|&k| block[k]).sum();
    let dropped_mass: f64 = adj.insignificant.iter().map(|&k| block[k] * block[k]).sum();
    let n_sig = adj.significant.len();
    while adj.discriminant < 0.0 && s.abs() > phi {
        s /= rho;
        adj.discriminant = discriminant(sum_significant, n_sig, block[i], s, dropped_mass);
    }
    if adj.discriminant < 0.0 {
        return None;
    }
    let t = (-2.0 * sum_significant + adj.discriminant.sqrt()) / (2.0 * n_sig as f64);

    let mut candidate = block.to_vec();
    candidate[i] += s;
    for &k in &adj.significant {
        candidate[k] += t;
    }
    for &k in &adj.insignificant {
        candidate[k] = 0.0;
    }
    let r = norm(&candidate);
    if !(r > 0.0 && r.is_finite()) {
        return None;
    }
    for x in &mut candidate {
        *x /= r;
    }
    Some(candidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(blocks: Vec<Vec<f64>>) -> Result<MultiSpherePoint> {
        MultiSpherePoint::from_blocks(blocks)
    }

    #[test]
    fn validate_accepts_unit_blocks() {
        assert!(point(vec![vec![1.0, 0.0, 0.0]]).is_ok());
        assert!(point(vec![vec![0.6, 0.8]]).is_ok());
    }

    #[test]
    fn validate_rejects_non_unit_block() {
        match point(vec![vec![1.0, 1.0]]) {
            Err(Error::NormViolation { block, norm }) => {
                assert_eq!(block, 0);
                assert!((norm - 2f64.sqrt()).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_wrong_lengths() {
        let shape = SphereShape::uniform(2, 3).unwrap();
        let err = MultiSpherePoint::new(shape.clone(), vec![vec![1.0, 0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
        let err = MultiSpherePoint::new(shape, vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
        assert!(SphereShape::new(vec![1]).is_err());
        assert!(SphereShape::new(vec![]).is_err());
    }

    #[test]
    fn random_point_is_seeded_and_shaped() {
        let shape = SphereShape::new(vec![3]).unwrap();
        let a = random_point(&shape, 7).unwrap();
        let b = random_point(&shape, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_point(&shape, 8).unwrap());

        let p = random_point(&SphereShape::new(vec![2, 2]).unwrap(), 1).unwrap();
        assert_eq!(p.blocks().len(), 2);
        assert!(p.blocks().iter().all(|b| b.len() == 2));

        let p = random_point(&SphereShape::uniform(5, 5).unwrap(), 42).unwrap();
        validate_point(&p).unwrap();
    }

    #[test]
    fn adjustment_from_pole_downward() {
        let adj = adjustment_step(&[1.0, 0.0, 0.0], 0, -1.0, 0.0);
        assert_eq!(adj.significant, vec![1, 2]);
        assert!((adj.discriminant - 8.0).abs() < 1e-15);
        let t = adj.root.unwrap();
        assert!((t - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn adjustment_from_pole_upward_has_no_root() {
        let adj = adjustment_step(&[1.0, 0.0, 0.0], 0, 0.5, 0.0);
        assert!((adj.discriminant + 10.0).abs() < 1e-15);
        assert_eq!(adj.root, None);
    }

    #[test]
    fn adjustment_matches_norm_equation() {
        let x = [0.6, 0.8];
        let t = adjustment_step(&x, 0, 0.1, 0.0).root.unwrap();
        assert!((t - (-0.8 + 0.51f64.sqrt())).abs() < 1e-15);
        // plug back into the norm equation
        let c = [x[0] + 0.1, x[1] + t];
        assert!((norm(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_step_needs_no_adjustment() {
        let adj = adjustment_step(&[0.6, 0.48, 0.64], 0, 0.0, 0.0);
        assert!(adj.root.unwrap().abs() < 1e-15);
    }

    #[test]
    fn empty_significant_set_has_no_root() {
        let adj = adjustment_step(&[0.999, 0.01, 0.01], 0, -0.1, 0.5);
        assert!(adj.significant.is_empty());
        assert_eq!(adj.root, None);
        let mv = MoveSpec {
            block: 0,
            coord: 0,
            direction: Direction::Negative,
            step: 0.1,
            sparsity_threshold: 0.5,
        };
        assert_eq!(propose_move(&[0.999, 0.01, 0.01], &mv, 2.0, 1e-6), None);
    }

    fn mv(coord: usize, direction: Direction, step: f64, lambda: f64) -> MoveSpec {
        MoveSpec {
            block: 0,
            coord,
            direction,
            step,
            sparsity_threshold: lambda,
        }
    }

    #[test]
    fn move_from_pole_downward() {
        let c = propose_move(&[1.0, 0.0, 0.0], &mv(0, Direction::Negative, 1.0, 0.0), 2.0, 1e-6).unwrap();
        let h = 0.5f64.sqrt();
        assert!(c[0].abs() < 1e-15);
        assert!((c[1] - h).abs() < 1e-15 && (c[2] - h).abs() < 1e-15);
    }

    #[test]
    fn move_from_pole_upward_is_unchanged() {
        assert_eq!(
            propose_move(&[1.0, 0.0, 0.0], &mv(0, Direction::Positive, 1.0, 0.0), 2.0, 1e-6),
            None
        );
    }

    #[test]
    fn sparsity_threshold_zeroes_small_coordinates() {
        let block = [0.6, 0.8, 0.0];
        let c = propose_move(&block, &mv(0, Direction::Positive, 0.1, 0.05), 2.0, 1e-6).unwrap();
        // quadratic with Γ = {1}, Λ = {2}, Σ_Λ x² = 0: (0.8 + t)² = 1 − 0.7²
        let t = -0.8 + (1.0f64 - 0.49).sqrt();
        assert_eq!(c[2].to_bits(), 0f64.to_bits());
        assert!((c[0] - 0.7).abs() < 1e-12);
        assert!((c[1] - (0.8 + t)).abs() < 1e-12);
        assert!((norm(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_shrinks_until_feasible() {
        // (0.6, 0.8) moving coordinate 0 by +1: infeasible, halving reaches 0.25
        let c = propose_move(&[0.6, 0.8], &mv(0, Direction::Positive, 1.0, 0.0), 2.0, 1e-6).unwrap();
        assert!((c[0] - 0.85).abs() < 1e-12);
        assert!((norm(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adjustment_vanishes_with_step() {
        let x = [0.5, 0.5, 0.5, 0.5];
        let ts: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|&s| adjustment_step(&x, 1, s, 0.0).root.unwrap().abs())
            .collect();
        assert!(ts[0] > ts[1] && ts[1] > ts[2]);
        for (t, s) in ts.iter().zip([1e-2, 1e-4, 1e-6]) {
            assert!(*t <= 0.5 * s);
        }
    }

    fn unit_block(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, 2..=max_len).prop_filter_map("zero vector", |v| {
            let r = norm(&v);
            (r > 1e-3).then(|| v.into_iter().map(|x| x / r).collect())
        })
    }

    proptest! {
        #[test]
        fn every_candidate_is_unit_norm(
            block in unit_block(8),
            step in 1e-6f64..2.0,
            lambda in prop_oneof![Just(0.0), 0.0f64..0.3],
        ) {
            for coord in 0..block.len() {
                for direction in [Direction::Negative, Direction::Positive] {
                    if let Some(c) = propose_move(&block, &mv(coord, direction, step, lambda), 2.0, 1e-6) {
                        prop_assert!((norm(&c) - 1.0).abs() <= NORM_TOLERANCE);
                        for k in (0..block.len()).filter(|&k| k != coord) {
                            if block[k].abs() < lambda {
                                prop_assert_eq!(c[k].to_bits(), 0f64.to_bits());
                            }
                        }
                    }
                }
            }
        }
    }
}
