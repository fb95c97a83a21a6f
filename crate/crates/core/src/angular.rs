//! Angular decomposition of standardized data and functionals of the angular
//! measure.

use std::collections::HashSet;

use itertools::Itertools;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, Matrix};

/// Largest number of subsets of a given order evaluated exhaustively.
pub const DEFAULT_SUBSET_CAP: usize = 25_000;

/// Weighted point cloud representing an angular measure. Points produced by
/// the L1 decomposition lie on the unit simplex; after [`reweight_to_norm`]
/// they lie on the unit sphere of the target norm.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularSample {
    points: Matrix,
    weights: Vec<f64>,
}

impl AngularSample {
    pub fn uniform(points: Matrix) -> Result<Self> {
        let k = points.rows();
        if k == 0 {
            return Err(Error::domain("angular sample is empty"));
        }
        Ok(AngularSample {
            points,
            weights: vec![1.0 / k as f64; k],
        })
    }

    /// Weights are normalized to sum to one.
    pub fn weighted(points: Matrix, weights: Vec<f64>) -> Result<Self> {
        if points.rows() == 0 || points.rows() != weights.len() {
            return Err(Error::Shape {
                op: "angular_sample",
                lhs: points.shape(),
                rhs: (weights.len(), 1),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::domain(
                "angular weights must be finite and nonnegative",
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::domain("angular weights sum to zero"));
        }
        Ok(AngularSample {
            points,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mean of the points.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.points.row_iter().zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += w * x;
            }
        }
        m
    }
}

/// `R = |v|_1`, `W = v / R`.
pub fn polar_decompose(v: &[f64]) -> Result<(f64, Vec<f64>)> {
    if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::domain(
            "polar decomposition needs finite nonnegative components",
        ));
    }
    let r: f64 = v.iter().sum();
    if r == 0.0 {
        return Err(Error::domain("polar decomposition of the zero vector"));
    }
    Ok((r, v.iter().map(|x| x / r).collect()))
}

/// Angles of rows with `R >= n / k1`.
pub fn extreme_angles(vhat: &DataMatrix, k1: usize) -> Result<AngularSample> {
    let n = vhat.rows();
    if k1 == 0 || k1 > n {
        return Err(Error::config(format!(
            "k1 must satisfy 1 <= k1 <= n = {n}, got {k1}"
        )));
    }
    extreme_angles_above(vhat, n as f64 / k1 as f64)
}

/// Angles of rows whose L1 radius is at least `threshold`.
pub fn extreme_angles_above(vhat: &DataMatrix, threshold: f64) -> Result<AngularSample> {
    let mut data = Vec::new();
    let mut k = 0;
    for row in vhat.row_iter() {
        let (r, w) = polar_decompose(row)?;
        if r >= threshold {
            data.extend(w);
            k += 1;
        }
    }
    if k == 0 {
        return Err(Error::config(format!(
            "no observation has radius >= {threshold}; increase k1"
        )));
    }
    AngularSample::uniform(Matrix::from_vec(k, vhat.cols(), data)?)
}

/// `theta_J = d * sum_i weight_i * max_{j in J} w_ij`, reported without
/// clipping to `[1, |J|]`. `subset` holds 0-based margin indices.
pub fn extremal_coefficient(phi: &AngularSample, subset: &[usize]) -> Result<f64> {
    let d = phi.dim();
    if subset.len() < 2 {
        return Err(Error::domain(format!(
            "extremal coefficients need |J| >= 2, got {}",
            subset.len()
        )));
    }
    if let Some(j) = subset.iter().find(|&&j| j >= d) {
        return Err(Error::domain(format!(
            "margin index {j} out of range for d = {d}"
        )));
    }
    let total: f64 = phi
        .points
        .row_iter()
        .zip(&phi.weights)
        .map(|(p, w)| {
            w * subset
                .iter()
                .map(|&j| p[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(d as f64 * total)
}

/// Subsets of `{0..d}` of size `k`: all of them when there are at most `cap`,
/// otherwise `cap` distinct subsets drawn uniformly with the given seed. The
/// flag reports whether subsampling happened.
pub fn subsets(d: usize, k: usize, cap: usize, seed: u64) -> (Vec<Vec<usize>>, bool) {
    if k > d {
        return (Vec::new(), false);
    }
    let count = binomial(d, k);
    if count <= cap as f64 {
        return ((0..d).combinations(k).collect(), false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(cap);
    let mut out = Vec::with_capacity(cap);
    while out.len() < cap {
        let mut s = sample(&mut rng, d, k).into_vec();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    (out, true)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Target norm for [`reweight_to_norm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

/// Change of norm for an L1 angular sample: each angle is rescaled to unit
/// target norm and its weight multiplied by that norm, then renormalized.
pub fn reweight_to_norm(phi: &AngularSample, norm: Norm) -> Result<AngularSample> {
    let mut data = Vec::with_capacity(phi.points.len());
    let mut weights = Vec::with_capacity(phi.len());
    for (p, w) in phi.points.row_iter().zip(&phi.weights) {
        let nrm = norm.of(p);
        if !(nrm > 0.0) {
            return Err(Error::domain("angle with zero norm"));
        }
        data.extend(p.iter().map(|x| x / nrm));
        weights.push(w * nrm);
    }
    AngularSample::weighted(Matrix::from_vec(phi.len(), phi.dim(), data)?, weights)
}
