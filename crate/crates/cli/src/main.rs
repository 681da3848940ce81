use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hebbfuse::eval::{run_ablation, run_eval, EvalConfig, EvalOutcome};
use hebbfuse::features::{read_feature_set, resolve_manifest_path, FeatureSet, Manifest};
use hebbfuse::fid::fid_between_sets;
use hebbfuse::hebbian::{Fusion, HebbianConfig};
use hebbfuse::learners::{KnnConfig, LearnerKind, RidgeConfig};
use hebbfuse::toy::{generate_suite, AffineShift, ToySuiteConfig, TrainConfig};
use hebbfuse::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "hebbfuse",
    version,
    about = "Layer-fused Hebbian few-shot evaluation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic domains, train the toy backbone and export its layers.
    ToyGen(ToyGenArgs),
    /// Evaluate a learner over seeded episodes.
    Eval(EvalArgs),
    /// Evaluate every layer alone and the ensemble on the same episodes.
    Ablate(EvalArgs),
    /// Fréchet distance between one layer of two feature sets.
    Fid(FidArgs),
    /// Validate a feature set and print its summary.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct ToyGenArgs {
    /// Output directory; one subdirectory per domain is created.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    input_dim: usize,
    #[arg(long, default_value_t = 200)]
    train_per_class: usize,
    #[arg(long, default_value_t = 100)]
    eval_per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,64,32")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Covariate shift rotation, degrees.
    #[arg(long, default_value_t = 60.0)]
    rotation_deg: f64,
    #[arg(long, default_value_t = 0.5)]
    translation: f64,
    #[arg(long, default_value_t = 1.5)]
    scale: f64,
    #[arg(long, default_value_t = 0.2)]
    flip_fraction: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerArg {
    Hebbian,
    Knn,
    Ridge,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Sum,
    RowZscore,
}

#[derive(Args)]
struct EvalArgs {
    /// Manifest file or the directory containing it.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = LearnerArg::Hebbian)]
    learner: LearnerArg,
    /// Layers to use, comma separated; defaults to every stored layer.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<String>>,
    #[arg(long, default_value_t = 5)]
    ways: usize,
    #[arg(long, default_value_t = 5)]
    shots: usize,
    #[arg(long, default_value_t = 5)]
    queries: usize,
    #[arg(long, default_value_t = 800)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 400)]
    steps: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Per-class support counts (e.g. 5,45); overrides --shots.
    #[arg(long, value_delimiter = ',')]
    class_ratio: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = FusionArg::Sum)]
    fusion: FusionArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct FidArgs {
    /// Two manifests (files or directories).
    #[arg(long, num_args = 2, required = true)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    layer: String,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.into(),
                    source: e,
                })?;
            }
            fs::write(path, text).map_err(|e| Error::Io {
                path: path.into(),
                source: e,
            })
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn toy_gen(args: &ToyGenArgs) -> Result<(), Error> {
    let cfg = ToySuiteConfig {
        classes: args.classes,
        input_dim: args.input_dim,
        train_per_class: args.train_per_class,
        eval_per_class: args.eval_per_class,
        cluster_spread: args.spread,
        seed: args.seed,
        train: TrainConfig {
            hidden: args.hidden.clone(),
            epochs: args.epochs,
            lr: args.lr,
            batch_size: args.batch_size,
            seed: args.seed,
        },
        covariate: AffineShift {
            rotation: args.rotation_deg.to_radians(),
            translation: args.translation,
            scale: args.scale,
        },
        concept_flip_fraction: args.flip_fraction,
    };
    let summary = generate_suite(&cfg, &args.out)?;
    println!(
        "backbone trained: accuracy {:.4}, loss {:.4}, layers {}",
        summary.train_accuracy,
        summary.final_loss,
        summary.layer_ids.join(",")
    );
    for d in &summary.domains {
        println!(
            "{:<10} {:>6} samples  {}",
            d.name,
            d.samples,
            args.out.join(&d.manifest).display()
        );
    }
    Ok(())
}

fn eval_config(args: &EvalArgs, fs: &FeatureSet) -> EvalConfig {
    let learner = match args.learner {
        LearnerArg::Hebbian => LearnerKind::Hebbian(HebbianConfig {
            alpha: args.alpha,
            steps: args.steps,
        }),
        LearnerArg::Knn => LearnerKind::Knn(KnnConfig { k: args.k }),
        LearnerArg::Ridge => LearnerKind::Ridge(RidgeConfig {
            lambda: args.lambda,
        }),
    };
    EvalConfig {
        learner,
        layers: args.layers.clone().unwrap_or_else(|| fs.layer_ids()),
        ways: args.ways,
        shots: args.shots,
        queries: args.queries,
        episodes: args.episodes,
        seed: args.seed,
        class_ratio: args.class_ratio.clone(),
        fusion: match args.fusion {
            FusionArg::Sum => Fusion::Sum,
            FusionArg::RowZscore => Fusion::RowZScore,
        },
        jobs: args.jobs,
    }
}

fn render(outcome: &EvalOutcome, format: FormatArg) -> String {
    match format {
        FormatArg::Csv => outcome.report.to_csv(),
        FormatArg::Json => {
            let mut s = outcome.to_json();
            s.push('\n');
            s
        }
    }
}

fn eval(args: &EvalArgs, ablate: bool) -> Result<(), Error> {
    let fs = read_feature_set(&args.manifest)?;
    let cfg = eval_config(args, &fs);
    let outcome = if ablate {
        run_ablation(&fs, &cfg)?
    } else {
        run_eval(&fs, &cfg)?
    };
    emit(args.out.as_deref(), &render(&outcome, args.format))?;
    if args.out.is_some() {
        for row in outcome.report.rows() {
            eprintln!(
                "{:<10} {:.4} ± {:.4}",
                row.layer, row.summary.mean, row.summary.ci95_halfwidth
            );
        }
    }
    Ok(())
}

fn fid(args: &FidArgs) -> Result<(), Error> {
    let a = read_feature_set(&args.manifest[0])?;
    let b = read_feature_set(&args.manifest[1])?;
    let report = fid_between_sets(&a, &b, &args.layer)?;
    let text = match args.format {
        FormatArg::Json => serde_json::to_string_pretty(&report).expect("serializes") + "\n",
        FormatArg::Csv => format!(
            "layer,dim,samples_a,samples_b,fid\n{},{},{},{},{:.6}\n",
            report.layer, report.dim, report.samples_a, report.samples_b, report.fid
        ),
    };
    emit(args.out.as_deref(), &text)
}

fn inspect(args: &InspectArgs) -> Result<(), Error> {
    let fs = read_feature_set(&args.manifest)?;
    let manifest = Manifest::load(&resolve_manifest_path(&args.manifest))?;
    let counts: Vec<usize> = fs.class_indices().iter().map(Vec::len).collect();
    match args.format {
        FormatArg::Json => {
            let value = serde_json::json!({
                "split_name": fs.split_name(),
                "sample_count": fs.sample_count(),
                "classes": fs.class_names().iter().zip(&counts)
                    .map(|(n, c)| serde_json::json!({"name": n, "count": c}))
                    .collect::<Vec<_>>(),
                "layers": manifest.layers,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&value).expect("serializes")
            );
        }
        FormatArg::Csv => {
            println!(
                "split {}: {} samples, {} classes",
                fs.split_name(),
                fs.sample_count(),
                fs.class_count()
            );
            for (name, count) in fs.class_names().iter().zip(&counts) {
                println!("  class {name}: {count}");
            }
            for entry in &manifest.layers {
                println!("  layer {} dim {} ({})", entry.name, entry.dim, entry.path);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ToyGen(a) => toy_gen(a),
        Command::Eval(a) => eval(a, false),
        Command::Ablate(a) => eval(a, true),
        Command::Fid(a) => fid(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
