//! Tail sampling: angles from a generator, unit-Pareto radii, acceptance when
//! the scaled vector leaves the unit box, then per-margin back-transform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;

use crate::aitchison::{from_coordinates, BasisMatrix};
use crate::angular::AngularSample;
use crate::error::{Error, Result};
use crate::margins::{Branch, GpdFitSet};
use crate::matrix::Matrix;
use crate::wgan::{standard_normal_matrix, Mlp};

/// Proposals allowed per requested sample before giving up.
pub const MAX_PROPOSALS_PER_SAMPLE: usize = 10_000;

/// Anything that produces random points on the unit simplex.
pub trait AngleSource {
    fn dim(&self) -> usize;
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>>;
}

/// Trained generator mapping latent normals to Aitchison coordinates.
#[derive(Clone, Debug)]
pub struct Generator {
    mlp: Mlp,
    basis: BasisMatrix,
}

impl Generator {
    pub fn new(mlp: Mlp, basis: BasisMatrix) -> Result<Self> {
        if mlp.spec().output_dim + 1 != basis.dim() {
            return Err(Error::Shape {
                op: "generator",
                lhs: (mlp.spec().input_dim, mlp.spec().output_dim),
                rhs: basis.matrix().shape(),
            });
        }
        Ok(Generator { mlp, basis })
    }

    pub fn latent_dim(&self) -> usize {
        self.mlp.spec().input_dim
    }
}

impl AngleSource for Generator {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let z = standard_normal_matrix(rng, 1, self.latent_dim());
        let c = self.mlp.forward(&z)?;
        Ok(from_coordinates(c.as_slice(), &self.basis)?.into_vec())
    }
}

/// Always returns the same angle.
#[derive(Clone, Debug)]
pub struct FixedAngle(pub Vec<f64>);

impl AngleSource for FixedAngle {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn draw<R: Rng + ?Sized>(&self, _rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

/// `count` angles drawn with the given seed, uniformly weighted.
pub fn sample_angles<S: AngleSource>(source: &S, count: usize, seed: u64) -> Result<AngularSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(count * source.dim());
    for _ in 0..count {
        data.extend(source.draw(&mut rng)?);
    }
    AngularSample::uniform(Matrix::from_vec(count, source.dim(), data)?)
}

/// Unit-Pareto draw `1 / (1 - U)` with `U` in the open unit interval.
pub fn unit_pareto<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    1.0 / (1.0 - u)
}

/// One proposal `Y * W`; accepted when some coordinate exceeds one.
pub fn propose<S: AngleSource, R: Rng + ?Sized>(
    source: &S,
    rng: &mut R,
) -> Result<Option<Vec<f64>>> {
    let w = source.draw(rng)?;
    let y = unit_pareto(rng);
    let levels: Vec<f64> = w.iter().map(|wj| y * wj).collect();
    Ok(if levels.iter().any(|&l| l > 1.0) {
        Some(levels)
    } else {
        None
    })
}

/// Back-transforms a vector of standardized levels to the data scale.
pub fn back_transform_row(fits: &GpdFitSet, levels: &[f64]) -> Result<(Vec<f64>, Vec<Branch>)> {
    if levels.len() != fits.dim() {
        return Err(Error::Shape {
            op: "back_transform_row",
            lhs: (1, levels.len()),
            rhs: (1, fits.dim()),
        });
    }
    let mut values = Vec::with_capacity(levels.len());
    let mut branches = Vec::with_capacity(levels.len());
    for (j, &y) in levels.iter().enumerate() {
        let (v, b) = fits.back_transform(j, y)?;
        values.push(v);
        branches.push(b);
    }
    Ok((values, branches))
}

/// Rows on the data scale plus bookkeeping about how they were produced.
#[derive(Clone, Debug, PartialEq)]
pub struct TailSample {
    pub rows: Matrix,
    pub thresholds: Vec<f64>,
    /// Per margin: `[order-statistic branch, GPD branch]` usage counts.
    pub branch_counts: Vec<[usize; 2]>,
    pub proposals: usize,
    pub rejections: usize,
}

/// Draws exactly `n_star` tail rows. `k1` is the radial threshold parameter
/// the angle source was trained with; `fits.k2` may not exceed it.
pub fn sample_tail<S: AngleSource>(
    source: &S,
    fits: &GpdFitSet,
    k1: usize,
    n_star: usize,
    seed: u64,
) -> Result<TailSample> {
    if fits.k2 > k1 {
        return Err(Error::config(format!(
            "k2 = {} exceeds k1 = {k1}; the tail threshold must lie inside the region the angular model was fitted on (k2 <= k1)",
            fits.k2
        )));
    }
    if source.dim() != fits.dim() {
        return Err(Error::Shape {
            op: "sample_tail",
            lhs: (1, source.dim()),
            rhs: (1, fits.dim()),
        });
    }
    let d = fits.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_star * d);
    let mut branch_counts = vec![[0usize; 2]; d];
    let mut proposals = 0;
    let cap = MAX_PROPOSALS_PER_SAMPLE.saturating_mul(n_star.max(1));
    let mut accepted = 0;
    while accepted < n_star {
        if proposals >= cap {
            return Err(Error::Numerical(format!(
                "only {accepted} of {n_star} samples accepted after {proposals} proposals; the angle source looks degenerate"
            )));
        }
        proposals += 1;
        let Some(levels) = propose(source, &mut rng)? else {
            continue;
        };
        let (values, branches) = back_transform_row(fits, &levels)?;
        for (c, b) in branch_counts.iter_mut().zip(&branches) {
            c[matches!(b, Branch::Gpd) as usize] += 1;
        }
        data.extend(values);
        accepted += 1;
    }
    Ok(TailSample {
        rows: Matrix::from_vec(n_star, d, data)?,
        thresholds: fits.thresholds(),
        branch_counts,
        proposals,
        rejections: proposals - n_star,
    })
}
