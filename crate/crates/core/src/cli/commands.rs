use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use super::config::FileConfig;
use super::io::{read_fits, read_matrix, write_fits, write_table_file};
use super::search::{best_index, run_search, validation_angles, Candidate};
use super::{Common, EvaluateArgs, QqArgs, SampleArgs, SimulateArgs, TrainArgs};
use crate::aitchison::{BasisMatrix, SimplexPoint};
use crate::angular::{extreme_angles, AngularSample, DEFAULT_SUBSET_CAP};
use crate::datagen::{sample_logistic, write_csv, LogisticConfig};
use crate::error::{Error, Result};
use crate::margins::{pareto_standardize, GpdFitSet, MarginFit};
use crate::matrix::{DataMatrix, Matrix};
use crate::metrics::{combined_dependence_score, w2_distance};
use crate::sampler::{sample_angles, sample_tail, Generator};
use crate::wgan::checkpoint::Checkpoint;
use crate::wgan::{train as train_networks, AdamConfig, TrainConfig};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
pub const DEFAULT_EPOCHS: usize = 5000;
pub const DEFAULT_BATCH: usize = 128;
pub const DEFAULT_N_ANGLES: usize = 10_000;

struct Resolved {
    file: FileConfig,
    seed: u64,
    rounding: super::Rounding,
}

fn resolve(common: &Common) -> Result<Resolved> {
    let file = FileConfig::load(common.config.as_deref())?;
    Ok(Resolved {
        seed: common.seed.or(file.seed).unwrap_or(0),
        rounding: common.rounding.or(file.rounding).unwrap_or_default(),
        file,
    })
}

/// `dir/stem.suffix` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let r = resolve(&a.common)?;
    let cfg = LogisticConfig {
        d: a.d.or(r.file.d).unwrap_or(2),
        theta: a.theta.or(r.file.theta).unwrap_or(2.0),
        alpha: a.alpha.or(r.file.alpha).unwrap_or(2.0),
        n: a.n.or(r.file.n).unwrap_or(10_000),
        seed: r.seed,
    };
    let x = sample_logistic(&cfg)?;
    write_csv(&x, &a.out)?;
    println!(
        "simulated n={} d={} theta={} alpha={} seed={} -> {}",
        cfg.n,
        cfg.d,
        cfg.theta,
        cfg.alpha,
        cfg.seed,
        a.out.display()
    );
    Ok(())
}

fn config_echo(cfg: &TrainConfig, hidden_g: &[usize], hidden_d: &[usize]) -> String {
    let list = |v: &[usize]| {
        v.iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut s = String::new();
    let _ = writeln!(s, "k1 = {}", cfg.k1);
    let _ = writeln!(s, "lambda_gp = {}", cfg.lambda_gp);
    let _ = writeln!(s, "rho = {}", cfg.rho);
    let _ = writeln!(s, "n_critic = {}", cfg.n_critic);
    let _ = writeln!(s, "batch_size = {}", cfg.batch_size);
    let _ = writeln!(s, "learning_rate = {}", cfg.adam.alpha);
    let _ = writeln!(s, "beta1 = {}", cfg.adam.beta1);
    let _ = writeln!(s, "beta2 = {}", cfg.adam.beta2);
    let _ = writeln!(s, "epsilon = {}", cfg.adam.epsilon);
    let _ = writeln!(s, "latent_dim = {}", cfg.latent_dim);
    let _ = writeln!(s, "n_epochs = {}", cfg.n_epochs);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "hidden_g = [{}]", list(hidden_g));
    let _ = writeln!(s, "hidden_d = [{}]", list(hidden_d));
    s
}

fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut w = super::io::create(path)?;
    ck.write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let r = resolve(&a.common)?;
    let f = &r.file;
    let x = read_matrix(&a.data)?;
    let (n, d) = x.shape();
    if d < 2 {
        return Err(Error::config("training data needs at least two columns"));
    }
    let defaults = AdamConfig::default();
    let mut cfg = TrainConfig {
        k1: a.k1.or(f.k1).unwrap_or_else(|| r.rounding.sqrt_k(n)),
        lambda_gp: a.lambda_gp.or(f.lambda_gp).unwrap_or(5.0),
        rho: a.rho.or(f.rho).unwrap_or(1.0),
        n_critic: a.n_critic.or(f.n_critic).unwrap_or(5),
        batch_size: a.batch_size.or(f.batch_size).unwrap_or(DEFAULT_BATCH),
        adam: AdamConfig {
            alpha: a
                .learning_rate
                .or(f.learning_rate)
                .unwrap_or(defaults.alpha),
            beta1: a.beta1.or(f.beta1).unwrap_or(defaults.beta1),
            beta2: a.beta2.or(f.beta2).unwrap_or(defaults.beta2),
            epsilon: f.epsilon.unwrap_or(defaults.epsilon),
        },
        latent_dim: a.latent_dim.or(f.latent_dim).unwrap_or(d - 1),
        n_epochs: a.n_epochs.or(f.n_epochs).unwrap_or(DEFAULT_EPOCHS),
        seed: r.seed,
    };
    let mut hidden_g = a
        .hidden_g
        .clone()
        .or(f.hidden_g.clone())
        .unwrap_or(DEFAULT_HIDDEN.to_vec());
    let mut hidden_d = a
        .hidden_d
        .clone()
        .or(f.hidden_d.clone())
        .unwrap_or(DEFAULT_HIDDEN.to_vec());
    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.out, "log.csv"));

    let budget = a.search.or(f.search).unwrap_or(0);
    let output = if budget > 0 {
        let vpath = a
            .validation
            .as_ref()
            .ok_or_else(|| Error::config("--search needs a --validation data set"))?;
        let v = read_matrix(vpath)?;
        if v.cols() != d {
            return Err(Error::Shape {
                op: "validation data",
                lhs: x.shape(),
                rhs: v.shape(),
            });
        }
        let k_val = ((cfg.k1 as f64) * v.rows() as f64 / n as f64)
            .round()
            .max(1.0) as usize;
        let reference = validation_angles(&v, k_val.min(v.rows()))?;
        let k_extreme = extreme_angles(&pareto_standardize(&x)?, cfg.k1)?.len();
        let n_angles = a.n_angles.or(f.n_angles).unwrap_or(DEFAULT_N_ANGLES);
        let cap = a.subset_cap.or(f.subset_cap).unwrap_or(DEFAULT_SUBSET_CAP);
        let mut results = run_search(&x, &cfg, budget, &reference, n_angles, cap, k_extreme);
        let table_path = a
            .search_table
            .clone()
            .unwrap_or_else(|| sibling(&a.out, "search.csv"));
        let rows = results
            .iter()
            .enumerate()
            .map(|(i, res)| search_row(i + 1, &res.candidate, res.score));
        write_table_file(&table_path, &SEARCH_HEADER, rows)?;
        let best = best_index(&results)
            .ok_or_else(|| Error::Numerical("every search candidate failed".into()))?;
        println!(
            "search: best candidate {} of {budget} with validation score {} (table: {})",
            best + 1,
            results[best].score,
            table_path.display()
        );
        let winner = results.swap_remove(best);
        cfg = winner.candidate.train.clone();
        hidden_g = winner.candidate.hidden.clone();
        hidden_d = winner.candidate.hidden;
        winner.output.expect("finite score implies a trained model")
    } else {
        let spec_g = crate::wgan::MlpSpec::new(cfg.latent_dim, hidden_g.clone(), d - 1)?;
        let spec_d = crate::wgan::MlpSpec::new(d - 1, hidden_d.clone(), 1)?;
        train_networks(&x, &cfg, spec_g, spec_d)?
    };

    let ck = Checkpoint {
        d,
        latent_dim: cfg.latent_dim,
        seed: cfg.seed,
        k1: cfg.k1,
        n_train: n,
        config: config_echo(&cfg, &hidden_g, &hidden_d),
        generator: output.params.generator,
        discriminator: output.params.discriminator,
    };
    write_checkpoint(&a.out, &ck)?;
    let rows = output.log.iter().map(|l| {
        vec![
            l.epoch.to_string(),
            l.loss_d.to_string(),
            l.loss_g.to_string(),
        ]
    });
    write_table_file(&log_path, &["epoch", "loss_d", "loss_g"], rows)?;
    println!(
        "trained on K={} extreme angles (k1={}, n={n}, d={d}) for {} epochs -> {}",
        output.k_extreme,
        cfg.k1,
        cfg.n_epochs,
        a.out.display()
    );
    Ok(())
}

const SEARCH_HEADER: [&str; 13] = [
    "candidate",
    "score",
    "batch_size",
    "latent_dim",
    "width",
    "depth",
    "learning_rate",
    "beta1",
    "beta2",
    "lambda_gp",
    "rho",
    "n_critic",
    "n_epochs",
];

fn search_row(i: usize, c: &Candidate, score: f64) -> Vec<String> {
    let t = &c.train;
    vec![
        i.to_string(),
        score.to_string(),
        t.batch_size.to_string(),
        t.latent_dim.to_string(),
        c.hidden[0].to_string(),
        c.hidden.len().to_string(),
        t.adam.alpha.to_string(),
        t.adam.beta1.to_string(),
        t.adam.beta2.to_string(),
        t.lambda_gp.to_string(),
        t.rho.to_string(),
        t.n_critic.to_string(),
        t.n_epochs.to_string(),
    ]
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::read(BufReader::new(File::open(path)?))
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let r = resolve(&a.common)?;
    let ck = read_checkpoint(&a.checkpoint)?;
    let x = read_matrix(&a.data)?;
    if x.cols() != ck.d {
        return Err(Error::Shape {
            op: "sample data",
            lhs: (x.rows(), x.cols()),
            rhs: (ck.n_train, ck.d),
        });
    }
    let k2 =
        a.k2.or(r.file.k2)
            .unwrap_or_else(|| r.rounding.sqrt_k(x.rows()));
    if k2 > ck.k1 {
        return Err(Error::config(format!(
            "k2 = {k2} exceeds the checkpoint's k1 = {}; the marginal threshold must satisfy k2 <= k1",
            ck.k1
        )));
    }
    let n_star = a.n_star.or(r.file.n_star).unwrap_or(x.rows());
    let fits = GpdFitSet::fit(&x, k2)?;
    let gen = Generator::new(ck.generator, BasisMatrix::new(ck.d)?)?;
    let tail = sample_tail(&gen, &fits, ck.k1, n_star, r.seed)?;
    write_csv(&tail.rows, &a.out)?;
    let fits_path = a
        .fits_out
        .clone()
        .unwrap_or_else(|| sibling(&a.out, "fits.csv"));
    write_fits(&fits_path, &fits)?;
    if let Some(count) = a.n_angles.or(r.file.n_angles) {
        let angles = sample_angles(&gen, count, r.seed)?;
        let path = a
            .angles_out
            .clone()
            .unwrap_or_else(|| sibling(&a.out, "angles.csv"));
        write_csv(angles.points(), &path)?;
    }
    let gpd_share: Vec<String> = tail
        .branch_counts
        .iter()
        .map(|c| format!("{:.3}", c[1] as f64 / n_star.max(1) as f64))
        .collect();
    println!(
        "sampled {n_star} tail rows with {} rejections (k1={}, k2={k2}); GPD branch share per margin: {}",
        tail.rejections,
        ck.k1,
        gpd_share.join(" ")
    );
    Ok(())
}

/// Rows exceeding at least one threshold.
pub fn tail_rows(x: &DataMatrix, thresholds: &[f64]) -> Matrix {
    let idx: Vec<usize> = x
        .row_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().zip(thresholds).any(|(v, u)| v > u))
        .map(|(i, _)| i)
        .collect();
    x.select_rows(&idx)
}

fn read_angles(path: &Path) -> Result<AngularSample> {
    let m = read_matrix(path)?;
    for (i, row) in m.row_iter().enumerate() {
        SimplexPoint::new(row.to_vec()).map_err(|e| Error::Parse {
            row: i + 1,
            column: 1,
            message: format!("not a simplex point: {e}"),
        })?;
    }
    AngularSample::uniform(m)
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let r = resolve(&a.common)?;
    let generated = read_matrix(&a.generated)?;
    let test = read_matrix(&a.test)?;
    let d = test.cols();
    if generated.cols() != d {
        return Err(Error::Shape {
            op: "evaluate",
            lhs: generated.shape(),
            rhs: test.shape(),
        });
    }
    if d < 2 {
        return Err(Error::config("evaluation needs at least two columns"));
    }
    let thresholds: Vec<f64> = match (&a.fits, a.k2.or(r.file.k2)) {
        (Some(p), _) => {
            let fits = read_fits(p)?;
            if fits.len() != d {
                return Err(Error::config(format!(
                    "fits sidecar has {} margins, data has {d}",
                    fits.len()
                )));
            }
            fits.iter().map(|(u, _)| *u).collect()
        }
        (None, Some(k2)) => (0..d)
            .map(|j| MarginFit::fit(&test.column(j), k2).map(|m| m.threshold))
            .collect::<Result<_>>()?,
        (None, None) => {
            return Err(Error::config(
                "evaluate needs thresholds: pass --fits or --k2",
            ))
        }
    };

    let k_test = a
        .k_test
        .or(r.file.k_test)
        .unwrap_or_else(|| r.rounding.sqrt_k(test.rows()));
    let phi_t = extreme_angles(&pareto_standardize(&test)?, k_test)?;
    let phi_g = match &a.angles {
        Some(p) => read_angles(p)?,
        None => {
            let k = r.rounding.sqrt_k(generated.rows());
            extreme_angles(&pareto_standardize(&generated)?, k.min(generated.rows()))?
        }
    };
    if phi_g.dim() != d {
        return Err(Error::config(format!(
            "angles have dimension {}, data has {d}",
            phi_g.dim()
        )));
    }
    let cap = a
        .subset_cap
        .or(r.file.subset_cap)
        .unwrap_or(DEFAULT_SUBSET_CAP);
    let (mean, scores) = combined_dependence_score(&phi_g, &phi_t, cap, r.seed)?;

    let tail_g = tail_rows(&generated, &thresholds);
    let tail_t = tail_rows(&test, &thresholds);
    if tail_g.rows() == 0 || tail_t.rows() == 0 {
        return Err(Error::config("no rows exceed the marginal thresholds"));
    }
    let w2 = w2_distance(&tail_g, &tail_t)?;

    let (ng, nt) = (phi_g.len().to_string(), phi_t.len().to_string());
    let seed = r.seed.to_string();
    let mut report = Vec::new();
    for s in &scores {
        report.push(vec![
            "dependence".into(),
            s.k.to_string(),
            s.value.to_string(),
            ng.clone(),
            nt.clone(),
            seed.clone(),
        ]);
    }
    report.push(vec![
        "dependence_mean".into(),
        String::new(),
        mean.to_string(),
        ng,
        nt,
        seed.clone(),
    ]);
    report.push(vec![
        "w2".into(),
        String::new(),
        w2.to_string(),
        tail_g.rows().to_string(),
        tail_t.rows().to_string(),
        seed,
    ]);
    write_table_file(
        &a.out,
        &["metric", "k", "value", "n_G", "n_T", "seed"],
        report,
    )?;

    let scatter_path = a
        .scatter
        .clone()
        .unwrap_or_else(|| sibling(&a.out, "scatter.csv"));
    let rows = scores.iter().flat_map(|s| {
        s.subsets.iter().map(move |c| {
            let name = c
                .subset
                .iter()
                .map(|j| (j + 1).to_string())
                .collect::<Vec<_>>()
                .join("-");
            vec![
                s.k.to_string(),
                name,
                c.theta_generated.to_string(),
                c.theta_test.to_string(),
            ]
        })
    });
    write_table_file(
        &scatter_path,
        &["k", "subset", "theta_generated", "theta_test"],
        rows,
    )?;
    println!(
        "dependence score {mean}, W2 {w2} ({} vs {} tail rows)",
        tail_g.rows(),
        tail_t.rows()
    );
    Ok(())
}

pub fn qqdata(a: QqArgs) -> Result<()> {
    let r = resolve(&a.common)?;
    let x = read_matrix(&a.data)?;
    let k2 =
        a.k2.or(r.file.k2)
            .unwrap_or_else(|| r.rounding.sqrt_k(x.rows()));
    let mut rows = Vec::with_capacity(k2 * x.cols());
    for j in 0..x.cols() {
        let fit = MarginFit::fit(&x.column(j), k2)?;
        for (i, e) in fit.excesses(k2).iter().enumerate() {
            let p = (i as f64 + 0.5) / k2 as f64;
            rows.push(vec![
                (j + 1).to_string(),
                (i + 1).to_string(),
                p.to_string(),
                e.to_string(),
                fit.params.quantile(p).to_string(),
            ]);
        }
    }
    write_table_file(&a.out, &["margin", "i", "p", "empirical", "fitted"], rows)?;
    println!(
        "wrote {} quantile pairs ({k2} per margin) -> {}",
        k2 * x.cols(),
        a.out.display()
    );
    Ok(())
}
