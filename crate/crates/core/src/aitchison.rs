//! Geometry of the open simplex: centered log-ratio map, softmax inverse,
//! perturbation/powering and an orthonormal basis of the zero-sum hyperplane.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Components closer than this to zero are treated as lying on the boundary.
pub const BOUNDARY_EPS: f64 = 1e-300;

/// A point of the open unit simplex: strictly positive, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    /// Validates positivity and unit sum (within 1e-12).
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::domain("simplex point needs at least one component"));
        }
        if let Some(x) = w.iter().find(|&&x| !x.is_finite() || x <= BOUNDARY_EPS) {
            return Err(Error::domain(format!(
                "simplex point has a component on or outside the boundary: {x}"
            )));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("simplex point sums to {s}, not 1")));
        }
        Ok(SimplexPoint(w))
    }

    /// Rescales a positive vector onto the simplex.
    pub fn closure(v: &[f64]) -> Result<Self> {
        let s: f64 = v.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::domain("cannot close a vector with nonpositive sum"));
        }
        Self::new(v.iter().map(|x| x / s).collect())
    }

    /// The Aitchison zero element `1/d`.
    pub fn center(d: usize) -> Self {
        SimplexPoint(vec![1.0 / d as f64; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SimplexPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn clr_raw(w: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = w.iter().map(|x| x.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.into_iter().map(|l| l - mean).collect()
}

/// `clr(w)_j = log(w_j / g(w))` with `g` the geometric mean.
pub fn clr(w: &SimplexPoint) -> Vec<f64> {
    clr_raw(&w.0)
}

/// Softmax, the inverse of [`clr`] on the zero-sum hyperplane.
pub fn clr_inv(x: &[f64]) -> Result<SimplexPoint> {
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("softmax input must be nonempty and finite"));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let w: Vec<f64> = exps.into_iter().map(|e| e / total).collect();
    if w.iter().any(|&c| c <= BOUNDARY_EPS) {
        return Err(Error::domain(
            "softmax output underflowed to the simplex boundary",
        ));
    }
    Ok(SimplexPoint(w))
}

/// Perturbation `v ⊕ w`.
pub fn add(v: &SimplexPoint, w: &SimplexPoint) -> Result<SimplexPoint> {
    check_dims(v, w)?;
    let prod: Vec<f64> = v.0.iter().zip(&w.0).map(|(a, b)| a * b).collect();
    SimplexPoint::closure(&prod)
}

/// Powering `alpha ⊙ v`.
pub fn scale(alpha: f64, v: &SimplexPoint) -> Result<SimplexPoint> {
    if !alpha.is_finite() {
        return Err(Error::domain("powering coefficient must be finite"));
    }
    let pow: Vec<f64> = v.0.iter().map(|a| a.powf(alpha)).collect();
    SimplexPoint::closure(&pow)
}

/// Aitchison inner product, computed from log-ratios over all pairs.
pub fn inner(v: &SimplexPoint, w: &SimplexPoint) -> Result<f64> {
    check_dims(v, w)?;
    let d = v.dim();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += (v.0[i] / v.0[j]).ln() * (w.0[i] / w.0[j]).ln();
        }
    }
    Ok(acc / (2.0 * d as f64))
}

fn check_dims(v: &SimplexPoint, w: &SimplexPoint) -> Result<()> {
    if v.dim() != w.dim() {
        return Err(Error::Shape {
            op: "aitchison",
            lhs: (1, v.dim()),
            rhs: (1, w.dim()),
        });
    }
    Ok(())
}

/// `d x (d-1)` matrix whose columns form an orthonormal basis of the zero-sum
/// hyperplane of `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMatrix(Matrix);

impl BasisMatrix {
    /// Column `i` (1-based) is `sqrt(i/(i+1)) * (1/i, ..., 1/i, -1, 0, ..., 0)`
    /// with `i` leading entries equal to `1/i`.
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::domain(format!("basis needs d >= 2, got {d}")));
        }
        let mut v = Matrix::zeros(d, d - 1);
        for col in 0..d - 1 {
            let i = (col + 1) as f64;
            let norm = (i / (i + 1.0)).sqrt();
            for row in 0..=col {
                v[(row, col)] = norm / i;
            }
            v[(col + 1, col)] = -norm;
        }
        Ok(BasisMatrix(v))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

pub fn orthonormal_basis(d: usize) -> Result<BasisMatrix> {
    BasisMatrix::new(d)
}

/// `V^T clr(w)`.
pub fn to_coordinates(w: &SimplexPoint, basis: &BasisMatrix) -> Result<Vec<f64>> {
    let d = basis.dim();
    if w.dim() != d {
        return Err(Error::Shape {
            op: "to_coordinates",
            lhs: (1, w.dim()),
            rhs: basis.0.shape(),
        });
    }
    let c = clr(w);
    Ok((0..d - 1)
        .map(|k| (0..d).map(|j| c[j] * basis.0[(j, k)]).sum())
        .collect())
}

/// `softmax(V c)`.
pub fn from_coordinates(c: &[f64], basis: &BasisMatrix) -> Result<SimplexPoint> {
    let d = basis.dim();
    if c.len() != d - 1 {
        return Err(Error::Shape {
            op: "from_coordinates",
            lhs: (1, c.len()),
            rhs: basis.0.shape(),
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("coordinates must be finite"));
    }
    let x: Vec<f64> = (0..d)
        .map(|j| {
            c.iter()
                .enumerate()
                .map(|(k, ck)| basis.0[(j, k)] * ck)
                .sum()
        })
        .collect();
    clr_inv(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn point(v: &[f64]) -> SimplexPoint {
        SimplexPoint::closure(v).unwrap()
    }

    #[test]
    fn clr_of_center_is_zero() {
        for d in 2..6 {
            assert!(clr(&SimplexPoint::center(d))
                .iter()
                .all(|x| x.abs() < 1e-15));
        }
    }

    #[test]
    fn clr_hand_value() {
        let w = point(&[std::f64::consts::E, 1.0, 1.0]);
        let c = clr(&w);
        assert_abs_diff_eq!(c[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[1], -1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[2], -1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn softmax_hand_values() {
        let w = clr_inv(&[4f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(w.as_slice()[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(w.as_slice()[1], 0.2, epsilon = 1e-15);
        let c = clr_inv(&[0.0; 4]).unwrap();
        assert_eq!(c.as_slice(), &[0.25; 4]);
        assert!(clr_inv(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn boundary_points_rejected() {
        assert!(SimplexPoint::new(vec![1.0, 0.0]).is_err());
        assert!(SimplexPoint::new(vec![0.7, 0.2]).is_err());
        assert!(clr_inv(&[0.0, -1000.0]).is_err());
    }

    #[test]
    fn basis_d2() {
        let v = BasisMatrix::new(2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(v.matrix()[(0, 0)], s, epsilon = 1e-15);
        assert_abs_diff_eq!(v.matrix()[(1, 0)], -s, epsilon = 1e-15);
        assert!(BasisMatrix::new(1).is_err());
    }

    #[test]
    fn coordinates_hand_value() {
        let v = BasisMatrix::new(2).unwrap();
        let w = SimplexPoint::new(vec![0.8, 0.2]).unwrap();
        let c = to_coordinates(&w, &v).unwrap();
        let expected = 4f64.ln() / 2f64.sqrt();
        assert_abs_diff_eq!(c[0], expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 0.98026, epsilon = 1e-5);
        let back = from_coordinates(&[expected], &v).unwrap();
        assert_abs_diff_eq!(back.as_slice()[0], 0.8, epsilon = 1e-14);
        let zero = to_coordinates(&SimplexPoint::center(4), &BasisMatrix::new(4).unwrap()).unwrap();
        assert!(zero.iter().all(|x| x.abs() < 1e-15));
        assert!(from_coordinates(&[0.0, 1.0], &v).is_err());
    }

    #[test]
    fn zero_element_is_neutral() {
        let v = point(&[0.2, 0.3, 0.5]);
        let sum = add(&v, &SimplexPoint::center(3)).unwrap();
        for (a, b) in sum.as_slice().iter().zip(v.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    fn simplex_strategy(d: usize) -> impl Strategy<Value = SimplexPoint> {
        prop::collection::vec(0.01f64..10.0, d).prop_map(|v| point(&v))
    }

    proptest! {
        #[test]
        fn clr_is_a_homomorphism(
            (v, w) in (2usize..8).prop_flat_map(|d| (simplex_strategy(d), simplex_strategy(d)))
        ) {
            let lhs = clr(&add(&v, &w).unwrap());
            let (cv, cw) = (clr(&v), clr(&w));
            for j in 0..v.dim() {
                prop_assert!((lhs[j] - cv[j] - cw[j]).abs() < 1e-12);
            }
            let a = 1.7;
            let lhs = clr(&scale(a, &v).unwrap());
            for j in 0..v.dim() {
                prop_assert!((lhs[j] - a * cv[j]).abs() < 1e-12);
            }
        }

        #[test]
        fn inner_product_is_isometric(
            (v, w) in (2usize..8).prop_flat_map(|d| (simplex_strategy(d), simplex_strategy(d)))
        ) {
            let direct = inner(&v, &w).unwrap();
            let via_clr: f64 = clr(&v).iter().zip(clr(&w)).map(|(a, b)| a * b).sum();
            prop_assert!((direct - via_clr).abs() < 1e-12);
        }

        #[test]
        fn coordinate_round_trips(w in (2usize..12).prop_flat_map(simplex_strategy)) {
            let v = BasisMatrix::new(w.dim()).unwrap();
            let c = to_coordinates(&w, &v).unwrap();
            let back = from_coordinates(&c, &v).unwrap();
            for (a, b) in back.as_slice().iter().zip(w.as_slice()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let again = to_coordinates(&back, &v).unwrap();
            for (a, b) in again.iter().zip(&c) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let round = clr_inv(&clr(&w)).unwrap();
            for (a, b) in round.as_slice().iter().zip(w.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_shift_invariant(x in prop::collection::vec(-20f64..20.0, 2..8), c in -50f64..50.0) {
            let a = clr_inv(&x).unwrap();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let b = clr_inv(&shifted).unwrap();
            for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
