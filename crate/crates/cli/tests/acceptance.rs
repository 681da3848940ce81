//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Set `HEBBFUSE_BLESS=1` to rewrite the recorded ablation fixture instead of
//! comparing against it.

use std::collections::HashSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hebbfuse::episode::{episode_stream, sample_episode, EpisodeSpec};
use hebbfuse::eval::{run_eval, EvalConfig, Summary};
use hebbfuse::features::{read_feature_set, FeatureSet, Layers};
use hebbfuse::fid::{fit_gaussian, frechet_distance, GaussianStats};
use hebbfuse::hebbian::{
    argmax_labels, fit_ensemble, hebb_rule, predict, responses, EnsembleModel, HebbianConfig,
    HebbianHead,
};
use hebbfuse::learners::{knn_predict, ridge_fit, KnnConfig, LearnerKind, RidgeConfig};
use hebbfuse::rng::keyed_rng;
use hebbfuse::toy::{gen_synthetic, generate_suite, Shift, SyntheticSpec, ToySuiteConfig};
use hebbfuse::Matrix;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!(
            "took {:.2}s, limit {limit_s}s",
            elapsed.as_secs_f64()
        ))
    }
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn random_labels(rng: &mut impl Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n)
        .map(|i| {
            if i < classes {
                i
            } else {
                rng.random_range(0..classes)
            }
        })
        .collect()
}

fn summed_ce(z: &Matrix, labels: &[usize], w: &Matrix) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let logits: Vec<f64> = (0..w.rows())
            .map(|k| (0..z.cols()).map(|d| z[(i, d)] * w[(k, d)]).sum())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() - logits[y];
    }
    total
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for case in 0..50u64 {
        let mut rng = keyed_rng(1, case);
        let k = rng.random_range(2..=5);
        let d = rng.random_range(1..=32);
        let s = rng.random_range(k..=25);
        let z = uniform(&mut rng, s, d, 1.0);
        let y = random_labels(&mut rng, s, k);
        let w = uniform(&mut rng, k, d, 0.5);
        let update = ok(ok(responses(&z, &ok(Matrix::one_hot(&y, k))?, &w))?.t_matmul(&z))?;

        let h = 1e-5;
        let mut fd = Matrix::zeros(k, d);
        let mut wp = w.clone();
        for a in 0..k {
            for b in 0..d {
                let orig = w[(a, b)];
                wp.row_mut(a)[b] = orig + h;
                let up = summed_ce(&z, &y, &wp);
                wp.row_mut(a)[b] = orig - h;
                let down = summed_ce(&z, &y, &wp);
                wp.row_mut(a)[b] = orig;
                fd.row_mut(a)[b] = (up - down) / (2.0 * h);
            }
        }
        let rel = ok(update.sub(&fd))?.frobenius_norm() / fd.frobenius_norm();
        worst = worst.max(rel);
    }
    ensure!(worst <= 1e-5, "worst relative error {worst:.3e}");
    within(start.elapsed(), 5.0)?;
    Ok(format!("worst relative error {worst:.2e} over 50 cases"))
}

fn criterion_2() -> Outcome {
    for k in 2..=8usize {
        let y: Vec<usize> = (0..2 * k + 1).map(|i| (i * 3) % k).collect();
        let yh = ok(Matrix::one_hot(&y, k))?;
        let z = uniform(&mut keyed_rng(2, k as u64), y.len(), 5, 3.0);
        let v = ok(responses(&z, &yh, &Matrix::zeros(k, 5)))?;
        for i in 0..y.len() {
            for c in 0..k {
                let expected = 1.0 / k as f64 - if y[i] == c { 1.0 } else { 0.0 };
                ensure!(
                    v[(i, c)] == expected,
                    "K={k} V[{i},{c}] = {} not {expected}",
                    v[(i, c)]
                );
            }
        }
    }
    let w = ok(hebb_rule(
        &Matrix::identity(2),
        &Matrix::identity(2),
        &HebbianConfig {
            alpha: 1.0,
            steps: 1,
        },
    ))?;
    let expected = [0.5f64, -0.5, -0.5, 0.5];
    let bitwise = w
        .as_slice()
        .iter()
        .zip(&expected)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(bitwise, "worked example gave {:?}", w.as_slice());
    Ok("first-step responses exact for K=2..8; worked example bitwise".into())
}

/// Seed of the separable 5-way fixture.
const SEPARABLE_SEED: u64 = 20_240_607;

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let data = ok(gen_synthetic(&SyntheticSpec {
        classes: 5,
        input_dim: 16,
        samples_per_class: 40,
        cluster_spread: 0.5,
        shift: Shift::None,
        seed: SEPARABLE_SEED,
        draw: 0,
    }))?;
    let mut layers = Layers::new();
    ok(layers.push("x", data.inputs))?;
    let names = (0..5).map(|c| format!("c{c}")).collect();
    let fs = ok(FeatureSet::new("separable", names, data.labels, layers))?;
    let ep = ok(sample_episode(
        &fs,
        &EpisodeSpec::new(5, 5, 15, SEPARABLE_SEED),
    ))?;
    let model = ok(fit_ensemble(&ep, &["x"], &HebbianConfig::default()))?;
    let hits = |pred: &[usize], truth: &[usize]| {
        pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
    };
    let support = hits(
        &ok(predict(&model, &ep.support.layers))?.labels,
        &ep.support.labels,
    );
    let query = hits(
        &ok(predict(&model, &ep.query.layers))?.labels,
        &ep.query.labels,
    );
    ensure!(support == 1.0, "support accuracy {support}");
    ensure!(query >= 0.95, "query accuracy {query}");
    within(start.elapsed(), 2.0)?;
    Ok(format!("support {support:.3}, query {query:.3}"))
}

fn random_feature_set(seed: u64, classes: usize, per_class: usize, dims: &[usize]) -> FeatureSet {
    let mut rng = keyed_rng(seed, 0);
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut layers = Layers::new();
    for (i, &d) in dims.iter().enumerate() {
        let mut m = uniform(&mut rng, n, d, 1.0);
        for (r, &y) in labels.iter().enumerate() {
            m.row_mut(r)[y % d] += 1.5;
        }
        layers.push(format!("l{i}"), m).unwrap();
    }
    FeatureSet::new(
        "random",
        (0..classes).map(|c| c.to_string()).collect(),
        labels,
        layers,
    )
    .unwrap()
}

fn criterion_4() -> Outcome {
    let fs = random_feature_set(4, 10, 12, &[7, 3, 12, 5]);
    let ids = fs.layer_ids();
    let cfg = HebbianConfig {
        alpha: 0.01,
        steps: 60,
    };
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let ep = ok(sample_episode(
            &fs,
            &EpisodeSpec::new(5, 3, 4, 44).with_index(i),
        ))?;
        let model = ok(fit_ensemble(&ep, &ids, &cfg))?;
        let fused = ok(predict(&model, &ep.query.layers))?;
        let rows = ep.query.labels.len();
        for r in 0..rows {
            for c in 0..5 {
                let manual: f64 = model
                    .heads()
                    .iter()
                    .map(|h| {
                        let q = ep.query.layers.get(&h.layer_id).unwrap().row(r);
                        q.iter()
                            .zip(h.weights.row(c))
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                    })
                    .sum();
                worst = worst.max((manual - fused.logits[(r, c)]).abs());
            }
        }
    }
    ensure!(worst <= 1e-12, "fused logits off by {worst:e}");

    let ties = Matrix::from_rows(&[
        [1.0, 1.0, 0.0],
        [0.0, 2.0, 2.0],
        [3.0, 3.0, 3.0],
        [-1.0, 0.0, 0.0],
    ]);
    ensure!(
        argmax_labels(&ties) == [0, 1, 0, 1],
        "tie-break gave {:?}",
        argmax_labels(&ties)
    );
    let head = |id: &str, w: [[f64; 2]; 3]| HebbianHead {
        layer_id: id.into(),
        weights: Matrix::from_rows(&w),
    };
    let model = ok(EnsembleModel::new(vec![
        head("p", [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
        head("q", [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),
    ]))?;
    let mut q = Layers::new();
    ok(q.push("p", Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]])))?;
    ok(q.push("q", Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.0]])))?;
    // Row 0 fuses to [1, 1, 0] and row 1 to all zeros.
    let labels = ok(predict(&model, &q))?.labels;
    ensure!(labels == [0, 0], "fused tie-break gave {labels:?}");
    Ok(format!(
        "max deviation {worst:.1e} over 100 episodes; ties resolve to lowest index"
    ))
}

fn gauss(mean: Vec<f64>, cov: Matrix) -> GaussianStats {
    GaussianStats { mean, cov, n: 2 }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = keyed_rng(5, 0);
    let sample = uniform(&mut rng, 300, 8, 2.0);
    let a = ok(fit_gaussian(&sample))?;
    let self_d = ok(frechet_distance(&a, &a))?;
    ensure!(self_d <= 1e-8, "d(a,a) = {self_d:e}");

    let one_d = ok(frechet_distance(
        &gauss(vec![0.0], Matrix::from_rows(&[[2.25]])),
        &gauss(vec![2.0], Matrix::from_rows(&[[2.25]])),
    ))?;
    ensure!((one_d - 4.0).abs() <= 1e-10, "1-D case {one_d}");

    let commuting = ok(frechet_distance(
        &gauss(vec![0.0; 2], Matrix::identity(2)),
        &gauss(vec![0.0; 2], Matrix::identity(2).scale(4.0)),
    ))?;
    ensure!((commuting - 2.0).abs() <= 1e-8, "I vs 4I gave {commuting}");

    let mut worst: f64 = 0.0;
    for pair in 0..20u64 {
        let mut rng = keyed_rng(55, pair);
        let d = rng.random_range(1..=16);
        let mix_a = uniform(&mut rng, d, d, 1.0);
        let mix_b = uniform(&mut rng, d, d, 1.0);
        let xa = ok(uniform(&mut rng, 200, d, 1.0).matmul(&mix_a))?;
        let xb = ok(uniform(&mut rng, 200, d, 1.0).matmul(&mix_b))?.map(|v| v + 0.3);
        let (ga, gb) = (ok(fit_gaussian(&xa))?, ok(fit_gaussian(&xb))?);
        let ab = ok(frechet_distance(&ga, &gb))?;
        let ba = ok(frechet_distance(&gb, &ga))?;
        worst = worst.max((ab - ba).abs() / ab.abs().max(1e-300));
    }
    ensure!(worst <= 1e-6, "symmetry relative error {worst:e}");
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "d(a,a)={self_d:.1e}, 1-D={one_d}, I/4I={commuting}, symmetry {worst:.1e}"
    ))
}

fn toy_source() -> Result<(tempfile::TempDir, FeatureSet), String> {
    let dir = ok(tempfile::tempdir())?;
    ok(generate_suite(&ToySuiteConfig::default(), dir.path()))?;
    let fs = ok(read_feature_set(&dir.path().join("source")))?;
    Ok((dir, fs))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (_dir, fs) = toy_source()?;
    let mut cfg = EvalConfig::new(fs.layer_ids());
    cfg.learner = LearnerKind::Knn(KnnConfig { k: 3 });
    cfg.episodes = 10_000;
    cfg.seed = 6;

    let spec = cfg.episode_spec();
    for ep in episode_stream(&fs, &spec, cfg.episodes) {
        let ep = ok(ep)?;
        let s: HashSet<usize> = ep.support.sample_indices.iter().copied().collect();
        let q: HashSet<usize> = ep.query.sample_indices.iter().copied().collect();
        ensure!(
            s.len() == 25 && q.len() == 25,
            "episode {}: duplicate rows",
            ep.episode_index
        );
        ensure!(
            s.is_disjoint(&q),
            "episode {}: support and query overlap",
            ep.episode_index
        );
        let distinct: HashSet<usize> = ep.class_map.iter().copied().collect();
        ensure!(
            distinct.len() == 5,
            "episode {}: class map not bijective",
            ep.episode_index
        );
        for label in 0..5 {
            let sc = ep.support.labels.iter().filter(|&&y| y == label).count();
            let qc = ep.query.labels.iter().filter(|&&y| y == label).count();
            ensure!(
                sc == 5 && qc == 5,
                "episode {}: label {label} has {sc}/{qc}",
                ep.episode_index
            );
        }
        for split in [&ep.support, &ep.query] {
            for (&i, &y) in split.sample_indices.iter().zip(&split.labels) {
                ensure!(
                    fs.labels()[i] == ep.class_map[y],
                    "episode {}: relabeling broken",
                    ep.episode_index
                );
            }
        }
    }

    let serial = ok(run_eval(&fs, &cfg))?;
    cfg.jobs = 8;
    let parallel = ok(run_eval(&fs, &cfg))?;
    ensure!(
        serial.report.to_json() == parallel.report.to_json(),
        "JSON reports differ at 1 vs 8 jobs"
    );
    ensure!(
        serial.report.to_csv() == parallel.report.to_csv(),
        "CSV reports differ at 1 vs 8 jobs"
    );

    let mut hebb = cfg.clone();
    hebb.learner = LearnerKind::Hebbian(HebbianConfig::default());
    hebb.episodes = 100;
    hebb.jobs = 1;
    let serial = ok(run_eval(&fs, &hebb))?.report.to_json();
    hebb.jobs = 8;
    ensure!(
        serial == ok(run_eval(&fs, &hebb))?.report.to_json(),
        "hebbian reports differ at 1 vs 8 jobs"
    );
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "10000 episodes checked, reports identical ({:.1}s)",
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_7() -> Outcome {
    let s = ok(Summary::from_accuracies(&[0.8, 1.0, 0.6]))?;
    ensure!((s.mean - 0.8).abs() < 1e-12, "mean {}", s.mean);
    ensure!(
        (s.ci95_halfwidth - 0.2263).abs() <= 1e-4,
        "half-width {}",
        s.ci95_halfwidth
    );
    Ok(format!(
        "mean {:.4}, half-width {:.4}",
        s.mean, s.ci95_halfwidth
    ))
}

fn criterion_8() -> Outcome {
    let mut rng = keyed_rng(8, 0);
    let support = Matrix::from_vec(
        200,
        3,
        (0..600)
            .map(|_| rng.random_range(-4i32..=4) as f64 * 0.5)
            .collect(),
    )
    .unwrap();
    let y = random_labels(&mut rng, 200, 6);
    let queries = uniform(&mut rng, 40, 3, 2.0);
    for k in [1usize, 3, 5, 7] {
        let (scores, pred) = ok(knn_predict(&support, &y, &queries, 6, &KnnConfig { k }))?;
        for qi in 0..queries.rows() {
            let mut order: Vec<(f64, usize)> = (0..200)
                .map(|i| {
                    let d = support
                        .row(i)
                        .iter()
                        .zip(queries.row(qi))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d, i)
                })
                .collect();
            order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut votes = [0usize; 6];
            for &(_, i) in &order[..k] {
                votes[y[i]] += 1;
            }
            let best = (0..6).fold(0, |b, c| if votes[c] > votes[b] { c } else { b });
            ensure!(pred[qi] == best, "k={k} query {qi}: {} vs {best}", pred[qi]);
            for c in 0..6 {
                ensure!(
                    scores[(qi, c)] == votes[c] as f64 / k as f64,
                    "k={k} query {qi}: score mismatch"
                );
            }
        }
    }

    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = keyed_rng(88, inst);
        let s = rng.random_range(5..=40);
        let d = rng.random_range(2..=30);
        let lambda = rng.random_range(0.01..5.0);
        let z = uniform(&mut rng, s, d, 1.0);
        let yh = ok(Matrix::one_hot(&random_labels(&mut rng, s, 4), 4))?;
        let wt = ok(ridge_fit(&z, &yh, &RidgeConfig { lambda }))?.transpose();
        let mut lhs = ok(ok(z.t_matmul(&z))?.matmul(&wt))?;
        ok(lhs.axpy(lambda, &wt))?;
        let rhs = ok(z.t_matmul(&yh))?;
        worst = worst.max(ok(lhs.sub(&rhs))?.frobenius_norm() / rhs.frobenius_norm());
    }
    ensure!(worst <= 1e-8, "ridge residual {worst:e}");
    Ok(format!(
        "knn agrees for k=1,3,5,7; ridge residual {worst:.1e}"
    ))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hebbfuse"))
}

fn run_bin(cmd: &mut Command) -> Result<String, String> {
    let out = ok(cmd.output())?;
    ensure!(
        out.status.success(),
        "{cmd:?} exited with {}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ablate_covariate_hebbian.csv")
}

/// Mean accuracy of the `layer` row. Columns are counted from the right
/// because the quoted learner label contains commas.
fn mean_for(csv: &str, layer: &str) -> Result<f64, String> {
    let line = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .find(|l| l.rsplit(',').nth(7) == Some(layer))
        .ok_or_else(|| format!("no {layer} row"))?;
    ok(line.rsplit(',').nth(2).unwrap_or("").parse::<f64>())
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let dir = ok(tempfile::tempdir())?;
    run_bin(bin().arg("toy-gen").arg("--out").arg(dir.path()))?;
    let out = dir.path().join("ablate.csv");
    run_bin(
        bin()
            .args([
                "ablate",
                "--learner",
                "hebbian",
                "--episodes",
                "200",
                "--seed",
                "2024",
                "--jobs",
                "4",
            ])
            .args(["--format", "csv", "--manifest"])
            .arg(dir.path().join("covariate"))
            .arg("--out")
            .arg(&out),
    )?;
    let csv = ok(fs::read_to_string(&out))?;
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    ensure!(
        rows == 6,
        "expected header + 4 layers + ensemble, got {rows} lines"
    );
    if std::env::var_os("HEBBFUSE_BLESS").is_some() {
        ok(fs::write(fixture_path(), &csv))?;
    }
    let recorded = ok(fs::read_to_string(fixture_path()))?;
    ensure!(
        csv == recorded,
        "output differs from recorded fixture:\n{csv}"
    );
    let ensemble = mean_for(&csv, "ensemble")?;
    let out_only = mean_for(&csv, "out")?;
    ensure!(ensemble >= out_only, "ensemble {ensemble} < out {out_only}");
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "fixture reproduced; ensemble {ensemble:.4} >= out {out_only:.4} ({:.1}s)",
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_10() -> Outcome {
    let (dir, fs) = toy_source()?;
    let mut cfg = EvalConfig::new(fs.layer_ids());
    cfg.ways = 2;
    cfg.shots = 50;
    cfg.class_ratio = Some(vec![5, 45]);
    cfg.episodes = 2_000;
    cfg.seed = 10;
    for ep in episode_stream(&fs, &cfg.episode_spec(), cfg.episodes) {
        let ep = ok(ep)?;
        let counts = [0, 1].map(|l| ep.support.labels.iter().filter(|&&y| y == l).count());
        ensure!(
            counts == [5, 45],
            "episode {}: support counts {counts:?}",
            ep.episode_index
        );
    }
    let csv = run_bin(
        bin()
            .args([
                "eval",
                "--ways",
                "2",
                "--shots",
                "50",
                "--class-ratio",
                "5,45",
                "--episodes",
                "50",
            ])
            .args(["--learner", "ridge", "--layers", "out", "--manifest"])
            .arg(dir.path().join("source")),
    )?;
    ensure!(
        csv.contains(",out,2,5/45,5,50,"),
        "unexpected CLI output:\n{csv}"
    );
    Ok("5/45 support in all 2000 episodes; CLI run reports 5/45".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "update equals loss gradient", criterion_1),
        (2, "first step and worked example", criterion_2),
        (3, "default hyperparameters converge", criterion_3),
        (4, "fusion additivity and ties", criterion_4),
        (5, "frechet distance analytics", criterion_5),
        (6, "sampler contract and parallel determinism", criterion_6),
        (7, "interval arithmetic", criterion_7),
        (8, "baseline oracles", criterion_8),
        (9, "end-to-end ablation fixture", criterion_9),
        (10, "class-ratio support", criterion_10),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.contains(f.as_str()) || *f == n.to_string())
        {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
