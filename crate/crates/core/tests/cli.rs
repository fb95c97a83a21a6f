use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use wagan_core::cli::io::{read_fits, read_matrix};
use wagan_core::margins::GpdFitSet;
use wagan_core::wgan::checkpoint::Checkpoint;
use wagan_core::wgan::{init_networks, MlpSpec};

fn wagan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wagan"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = wagan(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulated(d: &str, n: &str, seed: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "--d", d, "--n", n, "--seed", seed, "-o", "data.csv",
        ],
    );
    let path = dir.path().join("data.csv");
    (dir, path)
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn simulate_writes_header_and_rows_deterministically() {
    let (dir, path) = simulated("3", "100", "9");
    assert_eq!(lines(&path).len(), 101);
    ok(
        dir.path(),
        &[
            "simulate",
            "--d",
            "3",
            "--n",
            "100",
            "--seed",
            "9",
            "-o",
            "again.csv",
        ],
    );
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(dir.path().join("again.csv")).unwrap()
    );
}

#[test]
fn simulate_rejects_theta_below_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = wagan(dir.path(), &["simulate", "--theta", "0.5", "-o", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("θ ≥ 1"), "{}", stderr(&out));
}

#[test]
fn zero_epochs_keeps_initial_networks() {
    let (dir, _) = simulated("3", "400", "1");
    ok(
        dir.path(),
        &[
            "train",
            "--data",
            "data.csv",
            "-o",
            "m.bin",
            "--n-epochs",
            "0",
            "--seed",
            "21",
            "--batch-size",
            "16",
            "--hidden-g",
            "8,8",
            "--hidden-d",
            "6",
        ],
    );
    let ck = Checkpoint::read(BufReader::new(
        File::open(dir.path().join("m.bin")).unwrap(),
    ))
    .unwrap();
    let init = init_networks(
        MlpSpec::new(2, vec![8, 8], 2).unwrap(),
        MlpSpec::new(2, vec![6], 1).unwrap(),
        21,
    );
    assert_eq!(ck.generator, init.generator);
    assert_eq!(ck.discriminator, init.discriminator);
    assert_eq!(lines(&dir.path().join("m.log.csv")).len(), 1);
}

#[test]
fn training_log_has_one_row_per_epoch() {
    let (dir, _) = simulated("3", "400", "1");
    ok(
        dir.path(),
        &[
            "train",
            "--data",
            "data.csv",
            "-o",
            "m.bin",
            "--n-epochs",
            "7",
            "--batch-size",
            "8",
            "--hidden-g",
            "8",
            "--hidden-d",
            "8",
            "--log",
            "log.csv",
        ],
    );
    let log = lines(&dir.path().join("log.csv"));
    assert_eq!(log[0], "epoch,loss_d,loss_g");
    assert_eq!(log.len(), 8);
}

#[test]
fn non_numeric_cell_is_reported_with_position() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "a,b\n1,2\n3,oops\n").unwrap();
    let out = wagan(dir.path(), &["train", "--data", "bad.csv", "-o", "m.bin"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("row 2") && msg.contains("column 2"), "{msg}");
}

#[test]
fn too_few_extremes_for_a_batch_is_refused() {
    let (dir, _) = simulated("3", "400", "1");
    let out = wagan(
        dir.path(),
        &[
            "train",
            "--data",
            "data.csv",
            "-o",
            "m.bin",
            "--k1",
            "10",
            "--batch-size",
            "64",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

fn trained(n_epochs: &str) -> TempDir {
    let (dir, _) = simulated("3", "900", "2");
    ok(
        dir.path(),
        &[
            "train",
            "--data",
            "data.csv",
            "-o",
            "m.bin",
            "--k1",
            "60",
            "--n-epochs",
            n_epochs,
            "--batch-size",
            "16",
            "--hidden-g",
            "16",
            "--hidden-d",
            "16",
            "--seed",
            "3",
        ],
    );
    dir
}

#[test]
fn sample_rows_exceed_a_threshold_and_fits_match_the_library() {
    let dir = trained("5");
    ok(
        dir.path(),
        &[
            "sample",
            "--checkpoint",
            "m.bin",
            "--data",
            "data.csv",
            "--k2",
            "30",
            "--n-star",
            "200",
            "--seed",
            "4",
            "-o",
            "tail.csv",
        ],
    );
    let tail = read_matrix(&dir.path().join("tail.csv")).unwrap();
    assert_eq!(tail.rows(), 200);
    let fits = read_fits(&dir.path().join("tail.fits.csv")).unwrap();
    let x = read_matrix(&dir.path().join("data.csv")).unwrap();
    let lib = GpdFitSet::fit(&x, 30).unwrap();
    for (j, (u, p)) in fits.iter().enumerate() {
        assert_eq!(*u, lib.margins[j].threshold);
        assert_eq!(*p, lib.margins[j].params);
    }
    for row in tail.row_iter() {
        assert!(row.iter().zip(&fits).any(|(v, (u, _))| v > u));
    }
}

#[test]
fn sample_refuses_k2_above_k1() {
    let dir = trained("1");
    let out = wagan(
        dir.path(),
        &[
            "sample",
            "--checkpoint",
            "m.bin",
            "--data",
            "data.csv",
            "--k2",
            "61",
            "-o",
            "t.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("k2 <= k1"), "{}", stderr(&out));
}

#[test]
fn evaluating_a_file_against_itself_scores_zero() {
    let (dir, _) = simulated("4", "900", "5");
    ok(
        dir.path(),
        &[
            "evaluate",
            "--generated",
            "data.csv",
            "--test",
            "data.csv",
            "--k2",
            "30",
            "--k-test",
            "30",
            "-o",
            "report.csv",
        ],
    );
    let report = lines(&dir.path().join("report.csv"));
    assert_eq!(report[0], "metric,k,value,n_G,n_T,seed");
    for row in &report[1..] {
        let value: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(value, 0.0, "{row}");
    }
    // C(4,2) + C(4,3) subsets plus a header
    assert_eq!(
        lines(&dir.path().join("report.scatter.csv")).len(),
        1 + 6 + 4
    );
}

#[test]
fn qqdata_tracks_the_fitted_quantiles() {
    let (dir, _) = simulated("2", "10000", "6");
    ok(
        dir.path(),
        &[
            "qqdata", "--data", "data.csv", "--k2", "100", "-o", "qq.csv",
        ],
    );
    let qq = lines(&dir.path().join("qq.csv"));
    assert_eq!(qq.len(), 1 + 2 * 100);
    for row in &qq[1..] {
        let f: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        if (f[2] - 0.895).abs() < 1e-9 {
            assert!((f[3] - f[4]).abs() <= 0.15 * f[4], "{row}");
        }
    }
}

#[test]
fn search_keeps_the_best_scoring_candidate() {
    let (dir, _) = simulated("3", "900", "7");
    ok(
        dir.path(),
        &[
            "simulate", "--d", "3", "--n", "900", "--seed", "8", "-o", "val.csv",
        ],
    );
    let out = ok(
        dir.path(),
        &[
            "train",
            "--data",
            "data.csv",
            "--validation",
            "val.csv",
            "--search",
            "3",
            "--n-epochs",
            "3",
            "--n-angles",
            "300",
            "--k1",
            "60",
            "-o",
            "m.bin",
        ],
    );
    let table = lines(&dir.path().join("m.search.csv"));
    assert_eq!(table.len(), 4);
    let scores: Vec<f64> = table[1..]
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if *s < scores[b] { i } else { b });
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains(&format!("best candidate {} of 3", best + 1)),
        "{stdout}"
    );
}

#[test]
fn missing_input_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = wagan(
        dir.path(),
        &["qqdata", "--data", "absent.csv", "-o", "qq.csv"],
    );
    assert_eq!(out.status.code(), Some(3));
}
