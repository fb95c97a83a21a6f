//! Seeded synthetic data: logistic (Gumbel copula) dependence with Pareto
//! margins, and an exact sampler of the logistic angular measure.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Open01};

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, Matrix};
use crate::sampler::AngleSource;

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticConfig {
    pub d: usize,
    pub theta: f64,
    pub alpha: f64,
    pub n: usize,
    pub seed: u64,
}

impl LogisticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 1.0) || !self.theta.is_finite() {
            return Err(Error::config(format!(
                "theta = {} violates θ ≥ 1",
                self.theta
            )));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!(
                "alpha = {} violates α > 0",
                self.alpha
            )));
        }
        if self.d < 1 {
            return Err(Error::config("d must be at least 1"));
        }
        Ok(())
    }
}

/// Positive stable variable with Laplace transform `exp(-t^a)`, `0 < a <= 1`.
pub fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a >= 1.0 {
        return 1.0;
    }
    let u = std::f64::consts::PI * rng.sample::<f64, _>(Open01);
    let e: f64 = rng.sample(Exp1);
    (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / e).powf((1.0 - a) / a)
}

/// `n x d` sample with Gumbel(θ) copula and Pareto(α) margins.
pub fn sample_logistic(cfg: &LogisticConfig) -> Result<DataMatrix> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = Vec::with_capacity(cfg.n * cfg.d);
    for _ in 0..cfg.n {
        let s = positive_stable(1.0 / cfg.theta, &mut rng);
        for _ in 0..cfg.d {
            let e: f64 = rng.sample(Exp1);
            // 1 - U without cancellation
            let tail = -(-(e / s).powf(1.0 / cfg.theta)).exp_m1();
            data.push(tail.powf(-1.0 / cfg.alpha));
        }
    }
    Matrix::from_vec(cfg.n, cfg.d, data)
}

pub fn true_extremal_coefficient(theta: f64, size: usize) -> f64 {
    (size as f64).powf(1.0 / theta)
}

/// Kendall's tau-a, quadratic time.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mut s: i64 = 0;
    for i in 0..n {
        let (xi, yi) = (x[i], y[i]);
        for j in i + 1..n {
            let p = (x[j] - xi) * (y[j] - yi);
            s += (p > 0.0) as i64 - (p < 0.0) as i64;
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

/// Exact draws from the logistic angular measure on the L1 simplex.
#[derive(Clone, Debug)]
pub struct LogisticAngles {
    d: usize,
    theta: f64,
    gamma: Gamma<f64>,
}

impl LogisticAngles {
    pub fn new(d: usize, theta: f64) -> Result<Self> {
        if !(theta > 1.0) || !theta.is_finite() {
            return Err(Error::domain(format!(
                "exact angular sampling needs θ > 1, got {theta}"
            )));
        }
        if d < 2 {
            return Err(Error::domain("d must be at least 2"));
        }
        let gamma = Gamma::new(1.0 - 1.0 / theta, 1.0).map_err(|e| Error::domain(e.to_string()))?;
        Ok(LogisticAngles { d, theta, gamma })
    }
}

impl AngleSource for LogisticAngles {
    fn dim(&self) -> usize {
        self.d
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let pick = rng.random_range(0..self.d);
        let mut f: Vec<f64> = (0..self.d)
            .map(|j| {
                let base: f64 = if j == pick {
                    self.gamma.sample(rng)
                } else {
                    rng.sample(Exp1)
                };
                base.powf(-1.0 / self.theta)
            })
            .collect();
        let total: f64 = f.iter().sum();
        f.iter_mut().for_each(|x| *x /= total);
        Ok(f)
    }
}

/// CSV with header `col_1..col_d`, values in shortest round-trip form.
pub fn write_csv(x: &DataMatrix, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv_to(x, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to(x: &DataMatrix, w: &mut impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record((1..=x.cols()).map(|j| format!("col_{j}")))?;
    for row in x.row_iter() {
        csv.write_record(row.iter().map(|v| v.to_string()))?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{extremal_coefficient, AngularSample};
    use approx::assert_abs_diff_eq;

    fn cfg(d: usize, theta: f64, n: usize) -> LogisticConfig {
        LogisticConfig {
            d,
            theta,
            alpha: 2.0,
            n,
            seed: 7,
        }
    }

    #[test]
    fn validation() {
        assert!(cfg(2, 0.5, 10)
            .validate()
            .unwrap_err()
            .to_string()
            .contains("θ ≥ 1"));
        let mut c = cfg(2, 2.0, 10);
        c.alpha = 0.0;
        assert!(sample_logistic(&c).is_err());
    }

    #[test]
    fn stable_index_one_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(positive_stable(1.0, &mut rng), 1.0);
    }

    #[test]
    fn stable_laplace_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = 0.5;
        let n = 200_000;
        let lt = (0..n)
            .map(|_| (-positive_stable(a, &mut rng)).exp())
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(lt, (-1.0f64).exp(), epsilon = 0.005);
    }

    #[test]
    fn independence_and_margins() {
        let x = sample_logistic(&cfg(2, 1.0, 10_000)).unwrap();
        let tau = kendall_tau(&x.column(0), &x.column(1));
        assert!(tau.abs() < 0.02, "tau {tau}");
        for j in 0..2 {
            let surv = x.column(j).iter().filter(|&&v| v > 2.0).count() as f64 / 10_000.0;
            assert_abs_diff_eq!(surv, 0.25, epsilon = 0.01);
        }
    }

    #[test]
    fn kendall_tau_at_theta_two() {
        let x = sample_logistic(&cfg(2, 2.0, 10_000)).unwrap();
        let tau = kendall_tau(&x.column(0), &x.column(1));
        assert_abs_diff_eq!(tau, 0.5, epsilon = 0.02);
    }

    #[test]
    fn kendall_tau_hand_values() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_abs_diff_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]), 1.0 / 3.0);
    }

    #[test]
    fn true_coefficients() {
        assert_abs_diff_eq!(true_extremal_coefficient(2.0, 2), 2f64.sqrt());
        assert_abs_diff_eq!(true_extremal_coefficient(1000.0, 3), 1.0011, epsilon = 1e-4);
        assert_eq!(true_extremal_coefficient(1.0, 3), 3.0);
    }

    #[test]
    fn exact_angles_reproduce_coefficients() {
        let src = LogisticAngles::new(4, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let data: Vec<f64> = (0..n).flat_map(|_| src.draw(&mut rng).unwrap()).collect();
        let phi = AngularSample::uniform(Matrix::from_vec(n, 4, data).unwrap()).unwrap();
        for m in phi.mean() {
            assert_abs_diff_eq!(m, 0.25, epsilon = 0.005);
        }
        for size in 2..=4 {
            let subset: Vec<usize> = (0..size).collect();
            let est = extremal_coefficient(&phi, &subset).unwrap();
            assert_abs_diff_eq!(est, true_extremal_coefficient(2.0, size), epsilon = 0.02);
        }
        assert!(LogisticAngles::new(4, 1.0).is_err());
    }

    #[test]
    fn csv_is_deterministic() {
        let c = cfg(3, 2.0, 20);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_csv_to(&sample_logistic(&c).unwrap(), &mut a).unwrap();
        write_csv_to(&sample_logistic(&c).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("col_1,col_2,col_3\n"));
        assert_eq!(text.lines().count(), 21);
    }
}
