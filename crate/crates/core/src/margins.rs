//! Marginal transforms: rank-based unit-Pareto standardization, univariate
//! generalized Pareto (GPD) maximum likelihood and the back-transform from the
//! standardized scale to the data scale.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// Below this `|xi|` the GPD is evaluated through its exponential limit.
pub const XI_ZERO_EPS: f64 = 1e-8;
/// Search range for the shape parameter.
pub const XI_MIN: f64 = -0.95;
pub const XI_MAX: f64 = 5.0;
/// Minimum number of positive excesses accepted by [`gpd_fit`].
pub const MIN_EXCESSES: usize = 10;

/// Ranks (1-based) of a column; ties are ordered by row index. Returns the
/// ranks and whether any tie was seen.
pub fn ranks(column: &[f64]) -> (Vec<usize>, bool) {
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let ties = order.windows(2).any(|w| column[w[0]] == column[w[1]]);
    let mut ranks = vec![0; column.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    (ranks, ties)
}

/// `V_ij = 1 / (1 - F_j(X_ij))` with `F_j = rank / (n + 1)`.
pub fn pareto_standardize(x: &DataMatrix) -> Result<DataMatrix> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::domain(format!(
            "standardization needs n >= 2 rows, got {n}"
        )));
    }
    let np1 = (n + 1) as f64;
    let mut out = DataMatrix::zeros(n, x.cols());
    for j in 0..x.cols() {
        let col = x.column(j);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "column {} has non-finite values",
                j + 1
            )));
        }
        let (r, ties) = ranks(&col);
        if ties {
            log::warn!("column {} has ties; broken by row order", j + 1);
        }
        let v: Vec<f64> = r.iter().map(|&r| np1 / (np1 - r as f64)).collect();
        out.set_column(j, &v);
    }
    Ok(out)
}

/// Scale and shape of a generalized Pareto distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpdParams {
    pub sigma: f64,
    pub xi: f64,
}

impl GpdParams {
    pub fn new(sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !xi.is_finite() {
            return Err(Error::domain(format!(
                "invalid GPD parameters sigma={sigma}, xi={xi}"
            )));
        }
        Ok(GpdParams { sigma, xi })
    }

    pub fn log_density(&self, y: f64) -> f64 {
        gpd_log_density(y, self.sigma, self.xi)
    }

    /// `H^{-1}(p) = sigma ((1-p)^{-xi} - 1) / xi`.
    pub fn quantile(&self, p: f64) -> f64 {
        if self.xi.abs() < XI_ZERO_EPS {
            -self.sigma * (-p).ln_1p()
        } else {
            self.sigma * ((1.0 - p).powf(-self.xi) - 1.0) / self.xi
        }
    }

    /// `sigma (y^xi - 1) / xi`, the excess above the threshold reached at
    /// standardized level `y`.
    pub fn excess_at(&self, y: f64) -> f64 {
        if self.xi.abs() < XI_ZERO_EPS {
            self.sigma * y.ln()
        } else {
            self.sigma * (y.powf(self.xi) - 1.0) / self.xi
        }
    }
}

pub fn gpd_log_density(y: f64, sigma: f64, xi: f64) -> f64 {
    if !(sigma > 0.0) || y < 0.0 {
        return f64::NEG_INFINITY;
    }
    if xi.abs() < XI_ZERO_EPS {
        return -sigma.ln() - y / sigma;
    }
    let t = 1.0 + xi * y / sigma;
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -sigma.ln() - (1.0 / xi + 1.0) * t.ln()
}

pub fn gpd_log_likelihood(excesses: &[f64], sigma: f64, xi: f64) -> f64 {
    let mut ll = 0.0;
    for &y in excesses {
        let l = gpd_log_density(y, sigma, xi);
        if l == f64::NEG_INFINITY {
            return l;
        }
        ll += l;
    }
    ll
}

fn golden_section_max(
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    iters: usize,
) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Derivative-free Nelder-Mead maximization in two dimensions.
pub(crate) fn nelder_mead_max(
    f: impl Fn([f64; 2]) -> f64,
    start: [f64; 2],
    step: [f64; 2],
    max_iter: usize,
    tol: f64,
) -> ([f64; 2], f64) {
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut vals = simplex.map(&f);
    for _ in 0..max_iter {
        // sort best (largest) first
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        simplex = idx.map(|i| simplex[i]);
        vals = idx.map(|i| vals[i]);
        let spread = (vals[0] - vals[2]).abs();
        let size = (0..2)
            .map(|k| {
                (simplex[1][k] - simplex[0][k])
                    .abs()
                    .max((simplex[2][k] - simplex[0][k]).abs())
            })
            .fold(0.0, f64::max);
        if vals[2].is_finite() && spread < tol && size < tol {
            break;
        }
        let centroid = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let xr = along(-1.0);
        let fr = f(xr);
        if fr > vals[0] {
            let xe = along(-2.0);
            let fe = f(xe);
            if fe > fr {
                simplex[2] = xe;
                vals[2] = fe;
            } else {
                simplex[2] = xr;
                vals[2] = fr;
            }
        } else if fr > vals[1] {
            simplex[2] = xr;
            vals[2] = fr;
        } else {
            let xc = if fr > vals[2] {
                along(-0.5)
            } else {
                along(0.5)
            };
            let fc = f(xc);
            if fc > vals[2].max(fr) {
                simplex[2] = xc;
                vals[2] = fc;
            } else {
                let best = simplex[0];
                for k in 1..3 {
                    for (v, b) in simplex[k].iter_mut().zip(best) {
                        *v = b + 0.5 * (*v - b);
                    }
                    vals[k] = f(simplex[k]);
                }
            }
        }
    }
    let best = (0..3).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best], vals[best])
}

/// Maximum likelihood fit of a GPD to threshold excesses.
///
/// The likelihood is profiled over a grid of shapes in `[XI_MIN, XI_MAX]`,
/// maximizing over `log sigma` for each, and the best grid point is polished
/// with Nelder-Mead in `(log sigma, xi)`.
pub fn gpd_fit(excesses: &[f64]) -> Result<GpdParams> {
    if let Some(y) = excesses.iter().find(|y| !y.is_finite() || **y < 0.0) {
        return Err(Error::domain(format!(
            "excesses must be finite and nonnegative, got {y}"
        )));
    }
    let positive = excesses.iter().filter(|&&y| y > 0.0).count();
    if positive < MIN_EXCESSES {
        return Err(Error::domain(format!(
            "GPD fit needs at least {MIN_EXCESSES} positive excesses, got {positive}"
        )));
    }
    let first = excesses[0];
    if excesses.iter().all(|&y| y == first) {
        return Err(Error::domain("GPD fit on all-equal excesses is degenerate"));
    }
    let y_max = excesses.iter().copied().fold(0.0, f64::max);
    let mean = excesses.iter().sum::<f64>() / excesses.len() as f64;

    let objective = |p: [f64; 2]| {
        let (s, xi) = (p[0], p[1]);
        if !(XI_MIN..=XI_MAX).contains(&xi) {
            return f64::NEG_INFINITY;
        }
        gpd_log_likelihood(excesses, s.exp(), xi)
    };

    let profile = |xi: f64| {
        let lo_sigma = if xi < 0.0 {
            (-xi * y_max * (1.0 + 1e-10)).max(mean * 1e-8)
        } else {
            mean * 1e-4
        };
        let hi_sigma = (mean + y_max) * 10.0;
        golden_section_max(|s| objective([s, xi]), lo_sigma.ln(), hi_sigma.ln(), 80)
    };

    let grid_steps = 119;
    let mut best = ([mean.ln(), 0.0], f64::NEG_INFINITY);
    for i in 0..=grid_steps {
        let xi = XI_MIN + (XI_MAX - XI_MIN) * i as f64 / grid_steps as f64;
        let (s, ll) = profile(xi);
        if ll > best.1 {
            best = ([s, xi], ll);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Numerical(
            "GPD likelihood is not finite anywhere on the grid".into(),
        ));
    }
    let (polished, ll) = nelder_mead_max(objective, best.0, [0.05, 0.02], 2000, 1e-10);
    let (p, _) = if ll >= best.1 { (polished, ll) } else { best };
    GpdParams::new(p[0].exp(), p[1].clamp(XI_MIN, XI_MAX))
}

/// Per-margin tail model for one column.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginFit {
    /// `X_{n-k2:n}`.
    pub threshold: f64,
    pub params: GpdParams,
    /// Ascending order statistics of the column.
    pub sorted: Vec<f64>,
}

/// Thresholds, GPD fits and order statistics for every margin.
#[derive(Clone, Debug, PartialEq)]
pub struct GpdFitSet {
    pub margins: Vec<MarginFit>,
    pub n: usize,
    pub k2: usize,
}

/// Which formula produced a back-transformed value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    OrderStatistic,
    Gpd,
}

impl MarginFit {
    pub fn fit(column: &[f64], k2: usize) -> Result<Self> {
        let n = column.len();
        if k2 == 0 || k2 >= n {
            return Err(Error::config(format!(
                "k2 must satisfy 1 <= k2 < n = {n}, got {k2}"
            )));
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("column contains non-finite values"));
        }
        let mut sorted = column.to_vec();
        sorted.sort_by(f64::total_cmp);
        let threshold = sorted[n - k2 - 1];
        let excesses: Vec<f64> = sorted[n - k2..].iter().map(|x| x - threshold).collect();
        let params = gpd_fit(&excesses)?;
        Ok(MarginFit {
            threshold,
            params,
            sorted,
        })
    }

    /// Upper `k2` excesses over the threshold, ascending.
    pub fn excesses(&self, k2: usize) -> Vec<f64> {
        let n = self.sorted.len();
        self.sorted[n - k2..]
            .iter()
            .map(|x| x - self.threshold)
            .collect()
    }

    /// `b_j((n/k2) y)`: an order statistic for `y <= 1`, the GPD tail above.
    pub fn back_transform(&self, y: f64, k2: usize) -> Result<(f64, Branch)> {
        if !(y > 0.0) || y.is_nan() {
            return Err(Error::domain(format!(
                "back-transform needs y > 0, got {y}"
            )));
        }
        let n = self.sorted.len();
        if y <= 1.0 {
            let idx = (n as f64 - k2 as f64 / y).ceil();
            // 1-based, clamped into [1, n]
            let idx = if idx.is_nan() || idx < 1.0 {
                1
            } else {
                (idx as usize).min(n)
            };
            Ok((self.sorted[idx - 1], Branch::OrderStatistic))
        } else {
            Ok((self.threshold + self.params.excess_at(y), Branch::Gpd))
        }
    }
}

impl GpdFitSet {
    pub fn fit(x: &DataMatrix, k2: usize) -> Result<Self> {
        let margins = (0..x.cols())
            .into_par_iter()
            .map(|j| MarginFit::fit(&x.column(j), k2))
            .collect::<Result<Vec<_>>>()?;
        Ok(GpdFitSet {
            margins,
            n: x.rows(),
            k2,
        })
    }

    pub fn dim(&self) -> usize {
        self.margins.len()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.margins.iter().map(|m| m.threshold).collect()
    }

    pub fn back_transform(&self, j: usize, y: f64) -> Result<(f64, Branch)> {
        self.margins[j].back_transform(y, self.k2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standardize_hand_example() {
        let x = DataMatrix::from_vec(4, 1, vec![3.0, 1.0, 4.0, 2.0]).unwrap();
        let v = pareto_standardize(&x).unwrap();
        let expected = [2.5, 1.25, 5.0, 5.0 / 3.0];
        for (a, b) in v.as_slice().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn standardize_extremes_and_ties() {
        let x = DataMatrix::from_vec(5, 1, vec![2.0, 2.0, 9.0, -1.0, 0.5]).unwrap();
        let v = pareto_standardize(&x).unwrap();
        assert_abs_diff_eq!(v[(2, 0)], 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[(3, 0)], 6.0 / 5.0, epsilon = 1e-14);
        // tie: earlier row gets the lower rank
        assert!(v[(0, 0)] < v[(1, 0)]);
        assert!(pareto_standardize(&DataMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn log_density_hand_value() {
        assert_abs_diff_eq!(
            gpd_log_density(1.0, 1.0, 1.0),
            -2.0 * 2f64.ln(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            gpd_log_density(1.0, 2.0, 0.0),
            -(2f64.ln()) - 0.5,
            epsilon = 1e-14
        );
        assert_eq!(gpd_log_density(3.0, 1.0, -0.5), f64::NEG_INFINITY);
    }

    fn sample_gpd(n: usize, sigma: f64, xi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = GpdParams::new(sigma, xi).unwrap();
        (0..n).map(|_| p.quantile(rng.random::<f64>())).collect()
    }

    #[test]
    fn fit_recovers_exponential() {
        let y = sample_gpd(10_000, 2.0, 0.0, 11);
        let fit = gpd_fit(&y).unwrap();
        assert!((1.9..=2.1).contains(&fit.sigma), "{fit:?}");
        assert!((-0.05..=0.05).contains(&fit.xi), "{fit:?}");
    }

    #[test]
    fn fit_recovers_heavy_tail() {
        let y = sample_gpd(10_000, 1.0, 0.5, 12);
        let fit = gpd_fit(&y).unwrap();
        assert!((0.45..=0.55).contains(&fit.xi), "{fit:?}");
    }

    #[test]
    fn fit_is_a_local_optimum() {
        let y = sample_gpd(500, 1.5, 0.3, 13);
        let fit = gpd_fit(&y).unwrap();
        let best = gpd_log_likelihood(&y, fit.sigma, fit.xi);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..32 {
            let start = [rng.random_range(-1.0..2.0), rng.random_range(-0.5..2.0)];
            let (p, ll) = nelder_mead_max(
                |p| {
                    if !(XI_MIN..=XI_MAX).contains(&p[1]) {
                        return f64::NEG_INFINITY;
                    }
                    gpd_log_likelihood(&y, p[0].exp(), p[1])
                },
                start,
                [0.1, 0.1],
                2000,
                1e-10,
            );
            assert!(best >= ll - 1e-7, "restart {p:?} reached {ll} > {best}");
        }
    }

    #[test]
    fn fit_rejects_bad_samples() {
        assert!(gpd_fit(&[1.0; 5]).is_err());
        assert!(gpd_fit(&[1.0; 20]).is_err());
        assert!(gpd_fit(&[]).is_err());
        let mut y = sample_gpd(20, 1.0, 0.1, 1);
        y[3] = -1.0;
        assert!(gpd_fit(&y).is_err());
    }

    fn toy_fit(sigma: f64, xi: f64) -> MarginFit {
        MarginFit {
            threshold: 10.0,
            params: GpdParams::new(sigma, xi).unwrap(),
            sorted: (1..=20).map(f64::from).collect(),
        }
    }

    #[test]
    fn back_transform_branches() {
        let mut m = toy_fit(1.0, 0.5);
        let k2 = 10;
        m.threshold = m.sorted[20 - k2 - 1];
        let (u, b) = m.back_transform(1.0, k2).unwrap();
        assert_eq!((u, b), (m.threshold, Branch::OrderStatistic));
        let (v, b) = m.back_transform(4.0, k2).unwrap();
        assert_eq!(b, Branch::Gpd);
        assert_abs_diff_eq!(v, m.threshold + 2.0, epsilon = 1e-14);
        // ceil(20 - 10/0.5) = 0 -> clamped to the minimum
        assert_eq!(m.back_transform(0.5, k2).unwrap().0, 1.0);
        // ceil(20 - 12.5) = 8
        assert_eq!(m.back_transform(0.8, k2).unwrap().0, 8.0);
        assert!(m.back_transform(0.0, k2).is_err());
        assert!(m.back_transform(-1.0, k2).is_err());
    }

    #[test]
    fn back_transform_exponential_limit() {
        let m = toy_fit(2.0, 1e-10);
        let (v, _) = m.back_transform(3.0, 5).unwrap();
        assert_abs_diff_eq!(v, 10.0 + 2.0 * 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn back_transform_monotone_across_seam() {
        for xi in [-0.4, 0.0, 0.7] {
            let mut m = toy_fit(1.3, xi);
            m.threshold = m.sorted[20 - 5 - 1];
            let mut prev = f64::NEG_INFINITY;
            for i in 1..=1000 {
                let y = i as f64 / 100.0;
                let (v, _) = m.back_transform(y, 5).unwrap();
                assert!(v >= prev, "xi={xi} y={y}: {v} < {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn fit_set_threshold_is_order_statistic() {
        let y = sample_gpd(200, 1.0, 0.2, 3);
        let x = DataMatrix::from_vec(200, 1, y).unwrap();
        let fits = GpdFitSet::fit(&x, 40).unwrap();
        let m = &fits.margins[0];
        assert_eq!(m.threshold, m.sorted[200 - 40 - 1]);
        assert!(m.sorted.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(m.excesses(40).len(), 40);
        assert!(GpdFitSet::fit(&x, 200).is_err());
    }
}
