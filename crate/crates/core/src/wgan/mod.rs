//! Wasserstein GAN with gradient penalty on Aitchison coordinates of extreme
//! angles, with an extra penalty pulling the mean generated angle towards the
//! simplex center.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{BoundMlp, Mlp, MlpSpec, HIDDEN_SLOPE, OUTPUT_SLOPE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::aitchison::{to_coordinates, BasisMatrix, SimplexPoint};
use crate::angular::extreme_angles;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::margins::pareto_standardize;
use crate::matrix::{DataMatrix, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub k1: usize,
    pub lambda_gp: f64,
    pub rho: f64,
    pub n_critic: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub latent_dim: usize,
    pub n_epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k1 == 0 {
            return Err(Error::config("k1 must be at least 1"));
        }
        if !(self.lambda_gp > 0.0) {
            return Err(Error::config("gradient penalty coefficient must be > 0"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::config("marginal penalty coefficient must be > 0"));
        }
        if self.n_critic == 0 || self.batch_size == 0 || self.latent_dim == 0 {
            return Err(Error::config(
                "n_critic, batch_size and latent_dim must be positive",
            ));
        }
        self.adam.validate()
    }
}

/// Generator and discriminator with their optimizer states.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub adam_generator: AdamState,
    pub adam_discriminator: AdamState,
}

pub fn init_networks(spec_g: MlpSpec, spec_d: MlpSpec, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = Mlp::init(spec_g, &mut rng);
    let discriminator = Mlp::init(spec_d, &mut rng);
    NetworkParams {
        adam_generator: AdamState::new(generator.params()),
        adam_discriminator: AdamState::new(discriminator.params()),
        generator,
        discriminator,
    }
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

/// Critic loss
/// `mean(D(fake)) - mean(D(real)) + lambda * mean((|grad_x D(mixed)|_2 - 1)^2)`.
/// The input gradient is recorded with `create_graph`, so the returned node
/// can be differentiated with respect to the critic weights.
pub fn discriminator_loss(
    tape: &mut Tape,
    critic: &BoundMlp,
    real: &Matrix,
    fake: &Matrix,
    mixed: &Matrix,
    lambda: f64,
) -> Result<Var> {
    if real.shape() != fake.shape() || real.shape() != mixed.shape() {
        return Err(Error::Shape {
            op: "discriminator_loss",
            lhs: real.shape(),
            rhs: if real.shape() != fake.shape() {
                fake.shape()
            } else {
                mixed.shape()
            },
        });
    }
    let real = tape.constant(real.clone());
    let fake = tape.constant(fake.clone());
    let mixed = tape.param(mixed.clone());
    let d_real = critic.forward(tape, real)?;
    let d_fake = critic.forward(tape, fake)?;
    let d_mixed = critic.forward(tape, mixed)?;
    let total = tape.sum(d_mixed);
    let grad_x = tape
        .grad(total, &[mixed], true)?
        .get(mixed)
        .ok_or_else(|| Error::Numerical("critic output does not depend on its input".into()))?;
    let norms = tape.l2_norm_rows(grad_x);
    let centered = tape.offset(norms, -1.0);
    let sq = tape.square(centered);
    let penalty = tape.mean(sq);
    let penalty = tape.scale(penalty, lambda);
    let mf = tape.mean(d_fake);
    let mr = tape.mean(d_real);
    let gap = tape.sub(mf, mr)?;
    tape.add(gap, penalty)
}

/// Generator loss `-mean(D(G(z))) + rho * |mean(softmax(V G(z))) - 1/d|_2`.
pub fn generator_loss(
    tape: &mut Tape,
    generator: &BoundMlp,
    critic: &BoundMlp,
    latents: &Matrix,
    basis: &BasisMatrix,
    rho: f64,
) -> Result<Var> {
    let d = basis.dim();
    let z = tape.constant(latents.clone());
    let coords = generator.forward(tape, z)?;
    let (m, out_dim) = tape.value(coords).shape();
    if out_dim != d - 1 {
        return Err(Error::Shape {
            op: "generator_loss",
            lhs: (m, out_dim),
            rhs: basis.matrix().shape(),
        });
    }
    let vt = tape.constant(basis.matrix().transpose());
    let clr = tape.matmul(coords, vt)?;
    let angles = tape.softmax(clr);
    let col_sums = tape.sum_rows(angles);
    let mean_angle = tape.scale(col_sums, 1.0 / m as f64);
    let center = tape.constant(Matrix::filled(1, d, 1.0 / d as f64));
    let diff = tape.sub(mean_angle, center)?;
    let marginal = tape.l2_norm(diff);
    let marginal = tape.scale(marginal, rho);
    let scores = critic.forward(tape, coords)?;
    let mean_score = tape.mean(scores);
    let adversarial = tape.scale(mean_score, -1.0);
    tape.add(adversarial, marginal)
}

/// Aitchison coordinates of the angles of the `K` observations whose
/// rank-standardized L1 radius reaches `n / k1`, as a `K x (d-1)` matrix.
pub fn extreme_coordinates(x: &DataMatrix, k1: usize, basis: &BasisMatrix) -> Result<Matrix> {
    let vhat = pareto_standardize(x)?;
    let phi = extreme_angles(&vhat, k1)?;
    let mut data = Vec::with_capacity(phi.len() * (x.cols() - 1));
    for w in phi.points().row_iter() {
        data.extend(to_coordinates(&SimplexPoint::new(w.to_vec())?, basis)?);
    }
    Matrix::from_vec(phi.len(), x.cols() - 1, data)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Critic loss of the last critic step of the epoch.
    pub loss_d: f64,
    pub loss_g: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: NetworkParams,
    pub log: Vec<EpochLog>,
    /// Number of extreme angles used for training.
    pub k_extreme: usize,
    pub basis: BasisMatrix,
}

/// Full training run on raw observations: rank standardization, extraction
/// of extreme angles, then `n_epochs` rounds of `n_critic` critic updates and
/// one generator update. Deterministic given `cfg.seed`.
pub fn train(
    x: &DataMatrix,
    cfg: &TrainConfig,
    spec_g: MlpSpec,
    spec_d: MlpSpec,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let d = x.cols();
    if d < 2 {
        return Err(Error::config("need at least two margins"));
    }
    if cfg.k1 > x.rows() {
        return Err(Error::config(format!(
            "k1 = {} exceeds n = {}",
            cfg.k1,
            x.rows()
        )));
    }
    if spec_g.input_dim != cfg.latent_dim || spec_g.output_dim != d - 1 {
        return Err(Error::config(format!(
            "generator must map R^{} to R^{}, got {} -> {}",
            cfg.latent_dim,
            d - 1,
            spec_g.input_dim,
            spec_g.output_dim
        )));
    }
    if spec_d.input_dim != d - 1 || spec_d.output_dim != 1 {
        return Err(Error::config(format!(
            "discriminator must map R^{} to R, got {} -> {}",
            d - 1,
            spec_d.input_dim,
            spec_d.output_dim
        )));
    }
    let basis = BasisMatrix::new(d)?;
    let coords = extreme_coordinates(x, cfg.k1, &basis)?;
    let k = coords.rows();
    if k < cfg.batch_size {
        return Err(Error::config(format!(
            "only K = {k} extreme angles for batch size {}; lower the batch size or raise k1",
            cfg.batch_size
        )));
    }
    log::info!("training on K = {k} extreme angles in dimension {d}");
    let mut params = init_networks(spec_g, spec_d, cfg.seed);
    let mut log_rows = Vec::with_capacity(cfg.n_epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let m = cfg.batch_size;

    for epoch in 1..=cfg.n_epochs {
        let mut loss_d = f64::NAN;
        for _ in 0..cfg.n_critic {
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
            let real = coords.select_rows(&idx);
            let z = standard_normal_matrix(&mut rng, m, cfg.latent_dim);
            let u: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let fake = params.generator.forward(&z)?;
            let mut mixed = real.clone();
            for (i, &ui) in u.iter().enumerate() {
                for (mx, fk) in mixed.row_mut(i).iter_mut().zip(fake.row(i)) {
                    *mx = ui * *mx + (1.0 - ui) * fk;
                }
            }
            let mut tape = Tape::new();
            let critic = params.discriminator.bind(&mut tape, true);
            let loss = discriminator_loss(&mut tape, &critic, &real, &fake, &mixed, cfg.lambda_gp)?;
            loss_d = tape.scalar_value(loss);
            let grads = tape.grad(loss, critic.vars(), false)?;
            let g = critic.grad_values(&tape, &grads);
            adam_step(
                params.discriminator.params_mut(),
                &g,
                &mut params.adam_discriminator,
                &cfg.adam,
            )?;
        }
        let z = standard_normal_matrix(&mut rng, m, cfg.latent_dim);
        let mut tape = Tape::new();
        let gen = params.generator.bind(&mut tape, true);
        let critic = params.discriminator.bind(&mut tape, false);
        let loss = generator_loss(&mut tape, &gen, &critic, &z, &basis, cfg.rho)?;
        let loss_g = tape.scalar_value(loss);
        let grads = tape.grad(loss, gen.vars(), false)?;
        let g = gen.grad_values(&tape, &grads);
        adam_step(
            params.generator.params_mut(),
            &g,
            &mut params.adam_generator,
            &cfg.adam,
        )?;
        if !loss_d.is_finite() || !loss_g.is_finite() {
            return Err(Error::Numerical(format!(
                "losses diverged at epoch {epoch}"
            )));
        }
        log_rows.push(EpochLog {
            epoch,
            loss_d,
            loss_g,
        });
    }
    Ok(TrainOutput {
        params,
        log: log_rows,
        k_extreme: k,
        basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn affine_critic(w: &[f64], b: f64) -> Mlp {
        let spec = MlpSpec::new(w.len(), vec![], 1).unwrap();
        Mlp::from_params(
            spec,
            vec![
                Matrix::from_vec(w.len(), 1, w.to_vec()).unwrap(),
                Matrix::scalar(b),
            ],
        )
        .unwrap()
    }

    fn batch(seed: u64, m: usize, dim: usize) -> Matrix {
        standard_normal_matrix(&mut ChaCha8Rng::seed_from_u64(seed), m, dim)
    }

    #[test]
    fn identical_batches_without_penalty_cancel() {
        let spec = MlpSpec::new(3, vec![5], 1).unwrap();
        let critic = Mlp::init(spec, &mut ChaCha8Rng::seed_from_u64(0));
        let real = batch(1, 4, 3);
        let mut tape = Tape::new();
        let b = critic.bind(&mut tape, true);
        let loss = discriminator_loss(&mut tape, &b, &real, &real, &real, 0.0).unwrap();
        assert_eq!(tape.scalar_value(loss), 0.0);
    }

    #[test]
    fn constant_critic_pays_full_penalty() {
        let critic = affine_critic(&[0.0, 0.0], 0.7);
        let mut tape = Tape::new();
        let b = critic.bind(&mut tape, true);
        let loss = discriminator_loss(
            &mut tape,
            &b,
            &batch(1, 6, 2),
            &batch(2, 6, 2),
            &batch(3, 6, 2),
            5.0,
        )
        .unwrap();
        assert_abs_diff_eq!(tape.scalar_value(loss), 5.0, epsilon = 1e-15);
        // gradients stay finite even though the input gradient vanishes
        let grads = tape.grad(loss, b.vars(), false).unwrap();
        assert!(b.grad_values(&tape, &grads).iter().all(Matrix::is_finite));
    }

    #[test]
    fn unit_linear_critic_has_no_penalty() {
        let critic = affine_critic(&[0.6, -0.8], 0.0);
        let (real, fake) = (batch(1, 5, 2), batch(2, 5, 2));
        let expected = {
            let score = |x: &Matrix| critic.forward(x).unwrap().sum() / 5.0;
            score(&fake) - score(&real)
        };
        let mut tape = Tape::new();
        let b = critic.bind(&mut tape, true);
        let loss = discriminator_loss(&mut tape, &b, &real, &fake, &batch(3, 5, 2), 9.0).unwrap();
        assert_abs_diff_eq!(tape.scalar_value(loss), expected, epsilon = 1e-14);
    }

    #[test]
    fn mismatched_batches_are_rejected() {
        let critic = affine_critic(&[1.0, 0.0], 0.0);
        let mut tape = Tape::new();
        let b = critic.bind(&mut tape, true);
        assert!(discriminator_loss(
            &mut tape,
            &b,
            &batch(1, 5, 2),
            &batch(2, 4, 2),
            &batch(3, 5, 2),
            1.0
        )
        .is_err());
    }

    fn fixed_generator(output: &[f64], latent: usize) -> Mlp {
        let spec = MlpSpec::new(latent, vec![], output.len()).unwrap();
        Mlp::from_params(
            spec,
            vec![
                Matrix::zeros(latent, output.len()),
                Matrix::row_vector(output.to_vec()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn generator_loss_without_marginal_penalty() {
        let basis = BasisMatrix::new(3).unwrap();
        let gen = Mlp::init(
            MlpSpec::new(2, vec![4], 2).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(4),
        );
        let critic = affine_critic(&[0.3, -1.2], 0.1);
        let z = batch(9, 7, 2);
        let expected = -critic.forward(&gen.forward(&z).unwrap()).unwrap().sum() / 7.0;
        let mut tape = Tape::new();
        let g = gen.bind(&mut tape, true);
        let c = critic.bind(&mut tape, false);
        let loss = generator_loss(&mut tape, &g, &c, &z, &basis, 0.0).unwrap();
        assert_abs_diff_eq!(tape.scalar_value(loss), expected, epsilon = 1e-14);
    }

    #[test]
    fn marginal_penalty_values() {
        let basis = BasisMatrix::new(2).unwrap();
        let zero_critic = affine_critic(&[0.0], 0.0);
        // output at the center: no penalty
        let mut tape = Tape::new();
        let g = fixed_generator(&[0.0], 1).bind(&mut tape, true);
        let c = zero_critic.bind(&mut tape, false);
        let loss = generator_loss(&mut tape, &g, &c, &Matrix::zeros(3, 1), &basis, 2.0).unwrap();
        assert_abs_diff_eq!(tape.scalar_value(loss), 0.0, epsilon = 1e-15);
        // softmax(V c) = (0.8, 0.2)
        let coord = 4f64.ln() / 2f64.sqrt();
        let mut tape = Tape::new();
        let g = fixed_generator(&[coord], 1).bind(&mut tape, true);
        let c = zero_critic.bind(&mut tape, false);
        let loss = generator_loss(&mut tape, &g, &c, &Matrix::zeros(1, 1), &basis, 2.0).unwrap();
        assert_abs_diff_eq!(
            tape.scalar_value(loss),
            2.0 * 0.3 * 2f64.sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn generator_dimension_mismatch() {
        let basis = BasisMatrix::new(4).unwrap();
        let mut tape = Tape::new();
        let g = fixed_generator(&[0.0, 0.0], 1).bind(&mut tape, true);
        let c = affine_critic(&[0.0, 0.0], 0.0).bind(&mut tape, false);
        assert!(generator_loss(&mut tape, &g, &c, &Matrix::zeros(2, 1), &basis, 1.0).is_err());
    }
}
