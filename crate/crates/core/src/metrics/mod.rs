//! Evaluation metrics: empirical 2-Wasserstein distance and the extremal
//! dependence score.

mod ot;

pub use ot::{ot_solve, TransportPlan};

use rayon::prelude::*;

use crate::angular::{extremal_coefficient, subsets, AngularSample};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Squared Euclidean distances between the rows of `a` and `b`.
pub fn squared_distances(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::Shape {
            op: "squared_distances",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows(), b.rows());
    out.as_mut_slice()
        .par_chunks_mut(b.rows().max(1))
        .zip(a.as_slice().par_chunks(a.cols().max(1)))
        .for_each(|(dst, x)| {
            for (d, y) in dst.iter_mut().zip(b.row_iter()) {
                *d = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            }
        });
    Ok(out)
}

/// Empirical W2 between two uniformly weighted point clouds.
pub fn w2_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::domain("W2 needs two non-empty samples"));
    }
    let cost = squared_distances(a, b)?;
    let wa = vec![1.0 / a.rows() as f64; a.rows()];
    let wb = vec![1.0 / b.rows() as f64; b.rows()];
    let plan = ot_solve(&cost, &wa, &wb)?;
    Ok(plan.objective.max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetComparison {
    pub subset: Vec<usize>,
    pub theta_generated: f64,
    pub theta_test: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DependenceScore {
    pub k: usize,
    pub value: f64,
    /// True when the subsets were a random subsample of all `C(d, k)`.
    pub sampled: bool,
    pub subsets: Vec<SubsetComparison>,
}

/// Mean of `|1 - theta_G / theta_T|` over subsets of size `k`.
pub fn dependence_score(
    generated: &AngularSample,
    test: &AngularSample,
    k: usize,
    cap: usize,
    seed: u64,
) -> Result<DependenceScore> {
    let d = test.dim();
    if generated.dim() != d {
        return Err(Error::Shape {
            op: "dependence_score",
            lhs: (generated.len(), generated.dim()),
            rhs: (test.len(), d),
        });
    }
    if k < 2 || k > d {
        return Err(Error::domain(format!(
            "subset size k = {k} must satisfy 2 <= k <= d = {d}"
        )));
    }
    let (sets, sampled) = subsets(d, k, cap, seed);
    let subsets = sets
        .into_par_iter()
        .map(|subset| {
            Ok(SubsetComparison {
                theta_generated: extremal_coefficient(generated, &subset)?,
                theta_test: extremal_coefficient(test, &subset)?,
                subset,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let value = subsets
        .iter()
        .map(|s| (1.0 - s.theta_generated / s.theta_test).abs())
        .sum::<f64>()
        / subsets.len() as f64;
    Ok(DependenceScore {
        k,
        value,
        sampled,
        subsets,
    })
}

/// `(E(2) + E(3)) / 2`, or `E(2)` alone when `d = 2`.
pub fn combined_dependence_score(
    generated: &AngularSample,
    test: &AngularSample,
    cap: usize,
    seed: u64,
) -> Result<(f64, Vec<DependenceScore>)> {
    let sizes = if test.dim() >= 3 { vec![2, 3] } else { vec![2] };
    let scores = sizes
        .iter()
        .map(|&k| dependence_score(generated, test, k, cap, seed))
        .collect::<Result<Vec<_>>>()?;
    let mean = scores.iter().map(|s| s.value).sum::<f64>() / scores.len() as f64;
    Ok((mean, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
        Matrix::from_vec(
            n,
            d,
            (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn w2_of_shifted_cloud_is_the_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = cloud(&mut rng, 30, 3);
        let b = a.map(|x| x + 0.5);
        // translation by t: W2 = |t| for identical shapes
        assert_abs_diff_eq!(
            w2_distance(&a, &b).unwrap(),
            (3.0f64 * 0.25).sqrt(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(w2_distance(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn vertical_matching() {
        let a = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(w2_distance(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![4.0, 6.0]]).unwrap();
        assert_abs_diff_eq!(w2_distance(&x, &y).unwrap(), 5.0, epsilon = 1e-12);
        assert!(w2_distance(&a, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn one_dimensional_matches_sorted_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut y: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..2.0)).collect();
        let a = Matrix::from_vec(50, 1, x.clone()).unwrap();
        let b = Matrix::from_vec(50, 1, y.clone()).unwrap();
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        let expect = (x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / 50.0).sqrt();
        assert_abs_diff_eq!(w2_distance(&a, &b).unwrap(), expect, epsilon = 1e-9);
    }

    #[test]
    fn dependence_score_of_identical_samples_is_zero() {
        let pts = Matrix::from_rows(&[
            vec![0.2, 0.3, 0.5],
            vec![0.6, 0.2, 0.2],
            vec![0.1, 0.1, 0.8],
        ])
        .unwrap();
        let phi = AngularSample::uniform(pts).unwrap();
        let s = dependence_score(&phi, &phi, 2, 100, 0).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.subsets.len(), 3);
        assert!(!s.sampled);
        assert!(dependence_score(&phi, &phi, 1, 100, 0).is_err());
        assert!(dependence_score(&phi, &phi, 4, 100, 0).is_err());
    }

    #[test]
    fn dependence_score_hand_value() {
        let center = AngularSample::uniform(Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap()).unwrap();
        let vertices =
            AngularSample::uniform(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap())
                .unwrap();
        // theta = 1 at the center and 2 for the vertices
        let s = dependence_score(&center, &vertices, 2, 10, 0).unwrap();
        assert_abs_diff_eq!(s.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn pair_coefficient_ratio() {
        // theta_G = 1.2 from (0.4, 0.6)-type mass, theta_T = 1.5
        let g =
            AngularSample::uniform(Matrix::from_rows(&[vec![0.6, 0.4], vec![0.4, 0.6]]).unwrap())
                .unwrap();
        let t = AngularSample::uniform(
            Matrix::from_rows(&[vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap(),
        )
        .unwrap();
        let s = dependence_score(&g, &t, 2, 10, 0).unwrap();
        assert_abs_diff_eq!(s.subsets[0].theta_generated, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(s.subsets[0].theta_test, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.value, 0.2, epsilon = 1e-12);
        let (mean, parts) = combined_dependence_score(&g, &t, 10, 0).unwrap();
        assert_eq!(parts.len(), 1);
        assert_abs_diff_eq!(mean, 0.2, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn prop_w2_is_a_metric(seed in 0u64..500, n in 1usize..12, m in 1usize..12, l in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (cloud(&mut rng, n, 2), cloud(&mut rng, m, 2), cloud(&mut rng, l, 2));
            let ab = w2_distance(&a, &b).unwrap();
            prop_assert!((ab - w2_distance(&b, &a).unwrap()).abs() < 1e-9);
            prop_assert!(ab <= w2_distance(&a, &c).unwrap() + w2_distance(&c, &b).unwrap() + 1e-9);
        }
    }
}
