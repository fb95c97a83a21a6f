//! Random hyperparameter search scored on a validation set.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::angular::{extreme_angles, AngularSample};
use crate::error::Result;
use crate::margins::pareto_standardize;
use crate::matrix::DataMatrix;
use crate::metrics::combined_dependence_score;
use crate::sampler::{sample_angles, Generator};
use crate::wgan::{train, AdamConfig, MlpSpec, TrainConfig, TrainOutput};

const BATCH_DIVISORS: [usize; 5] = [1, 2, 4, 8, 16];
const LATENT_FACTORS: [f64; 5] = [0.25, 0.5, 0.75, 1.0, 2.0];
const WIDTHS: [usize; 5] = [32, 64, 128, 256, 512];
const DEPTHS: [usize; 4] = [1, 2, 4, 8];
const LEARNING_RATES: [f64; 5] = [0.01, 0.005, 0.001, 0.0005, 0.0001];
const BETAS: [(f64, f64); 3] = [(0.0, 0.9), (0.5, 0.9), (0.5, 0.99)];
const LAMBDAS: [f64; 6] = [0.1, 1.0, 3.0, 5.0, 7.0, 9.0];
const RHOS: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 3.0];
const CRITIC_STEPS: [usize; 4] = [1, 3, 5, 10];

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
}

impl Candidate {
    pub fn specs(&self, d: usize) -> Result<(MlpSpec, MlpSpec)> {
        Ok((
            MlpSpec::new(self.train.latent_dim, self.hidden.clone(), d - 1)?,
            MlpSpec::new(d - 1, self.hidden.clone(), 1)?,
        ))
    }
}

/// One draw from the grid. Batch sizes are `floor(K / k)` and latent
/// dimensions `floor((d - 1) k)`, both at least one; every hidden layer of
/// both networks gets the same width.
pub fn draw_candidate(
    rng: &mut ChaCha8Rng,
    base: &TrainConfig,
    k_extreme: usize,
    d: usize,
) -> Candidate {
    let batch = (k_extreme / BATCH_DIVISORS.choose(rng).unwrap()).max(1);
    let latent = (((d - 1) as f64) * LATENT_FACTORS.choose(rng).unwrap())
        .floor()
        .max(1.0) as usize;
    let width = *WIDTHS.choose(rng).unwrap();
    let depth = *DEPTHS.choose(rng).unwrap();
    let lr = *LEARNING_RATES.choose(rng).unwrap();
    let (beta1, beta2) = *BETAS.choose(rng).unwrap();
    let lambda_gp = *LAMBDAS.choose(rng).unwrap();
    let rho = *RHOS.choose(rng).unwrap();
    let n_critic = *CRITIC_STEPS.choose(rng).unwrap();
    Candidate {
        train: TrainConfig {
            lambda_gp,
            rho,
            n_critic,
            batch_size: batch,
            adam: AdamConfig {
                alpha: lr,
                beta1,
                beta2,
                epsilon: base.adam.epsilon,
            },
            latent_dim: latent,
            ..base.clone()
        },
        hidden: vec![width; depth],
    }
}

/// Empirical angular measure of a held-out set, using the training
/// threshold scaled to its size.
pub fn validation_angles(validation: &DataMatrix, k: usize) -> Result<AngularSample> {
    extreme_angles(&pareto_standardize(validation)?, k)
}

/// Combined dependence score of a trained generator against `reference`.
pub fn score_generator(
    out: &TrainOutput,
    reference: &AngularSample,
    n_angles: usize,
    cap: usize,
    seed: u64,
) -> Result<f64> {
    let gen = Generator::new(out.params.generator.clone(), out.basis.clone())?;
    let phi = sample_angles(&gen, n_angles, seed)?;
    Ok(combined_dependence_score(&phi, reference, cap, seed)?.0)
}

pub struct SearchResult {
    pub candidate: Candidate,
    pub score: f64,
    pub output: Option<TrainOutput>,
}

/// Trains every candidate and scores it. Candidates that fail to train are
/// kept with an infinite score so the table stays complete.
pub fn run_search(
    x: &DataMatrix,
    base: &TrainConfig,
    budget: usize,
    reference: &AngularSample,
    n_angles: usize,
    cap: usize,
    k_extreme: usize,
) -> Vec<SearchResult> {
    let d = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    rng.set_stream(2);
    let candidates: Vec<Candidate> = (0..budget)
        .map(|_| draw_candidate(&mut rng, base, k_extreme, d))
        .collect();
    candidates
        .into_par_iter()
        .map(|candidate| {
            let trained = candidate
                .specs(d)
                .and_then(|(g, dsc)| train(x, &candidate.train, g, dsc))
                .and_then(|out| {
                    Ok((
                        score_generator(&out, reference, n_angles, cap, base.seed)?,
                        out,
                    ))
                });
            match trained {
                Ok((score, out)) => SearchResult {
                    candidate,
                    score,
                    output: Some(out),
                },
                Err(e) => {
                    log::warn!("candidate failed: {e}");
                    SearchResult {
                        candidate,
                        score: f64::INFINITY,
                        output: None,
                    }
                }
            }
        })
        .collect()
}

/// Index of the lowest score; ties go to the earliest candidate.
pub fn best_index(results: &[SearchResult]) -> Option<usize> {
    results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.score.is_finite())
        .min_by(|a, b| a.1.score.total_cmp(&b.1.score).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}
