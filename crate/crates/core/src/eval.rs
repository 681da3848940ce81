//! Episode-batch evaluation with 95% confidence intervals, and the per-layer
//! ablation built on the same episode stream.
//!
//! Each episode is an independent work item keyed by its index; workers may
//! run them in any order, and results are gathered back in index order, so a
//! report does not depend on the number of threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episode::{sample_episode, EpisodeSpec};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::hebbian::{accuracy, argmax_labels, fuse_scores, Fusion, HebbianConfig};
use crate::learners::{learner_for, Learner, LearnerKind};

/// Normal-approximation z value for a two-sided 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub learner: LearnerKind,
    pub layers: Vec<String>,
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub episodes: usize,
    pub seed: u64,
    pub class_ratio: Option<Vec<usize>>,
    pub fusion: Fusion,
    /// Worker threads. Not part of the report: results do not depend on it.
    #[serde(skip, default = "one")]
    pub jobs: usize,
}

fn one() -> usize {
    1
}

impl EvalConfig {
    /// Hebbian defaults: 5-way 5-shot, 5 queries per class, 800 episodes,
    /// α = 0.01, 400 steps.
    pub fn new(layers: Vec<String>) -> Self {
        EvalConfig {
            learner: LearnerKind::Hebbian(HebbianConfig::default()),
            layers,
            ways: 5,
            shots: 5,
            queries: 5,
            episodes: 800,
            seed: 0,
            class_ratio: None,
            fusion: Fusion::Sum,
            jobs: 1,
        }
    }

    pub fn episode_spec(&self) -> EpisodeSpec {
        EpisodeSpec {
            ways: self.ways,
            shots: self.shots,
            queries_per_class: self.queries,
            class_ratio: self.class_ratio.clone(),
            master_seed: self.seed,
            episode_index: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes < 1 {
            return Err(Error::Config("at least one episode is required".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("the layer set is empty".into()));
        }
        if self.jobs < 1 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if self.layers[..i].contains(l) {
                return Err(Error::Config(format!("layer {l:?} listed twice")));
            }
        }
        self.episode_spec().validate()?;
        learner_for(self.learner).map(|_| ())
    }
}

/// Mean accuracy with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// `1.96 · s / √E`, `s` the sample standard deviation (divisor `E − 1`).
    pub ci95_halfwidth: f64,
    /// Set when `E = 1` and no spread can be estimated; the half-width is then 0.
    pub degenerate_ci: bool,
}

impl Summary {
    pub fn from_accuracies(acc: &[f64]) -> Result<Summary> {
        let e = acc.len();
        if e == 0 {
            return Err(Error::Config("cannot summarize zero episodes".into()));
        }
        let mean = acc.iter().sum::<f64>() / e as f64;
        if e == 1 {
            return Ok(Summary {
                mean,
                ci95_halfwidth: 0.0,
                degenerate_ci: true,
            });
        }
        let var = acc.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (e - 1) as f64;
        Ok(Summary {
            mean,
            ci95_halfwidth: Z_95 * var.sqrt() / (e as f64).sqrt(),
            degenerate_ci: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: u64,
    pub class_map: Vec<usize>,
    /// Accuracy of the fused prediction over all configured layers.
    pub accuracy: f64,
    /// Single-layer accuracies in layer order; empty unless ablating.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layer_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: String,
    #[serde(flatten)]
    pub summary: Summary,
}

pub const ENSEMBLE_ROW: &str = "ensemble";

/// Everything a run determines. Identical for identical data and config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub learner: String,
    pub config: EvalConfig,
    pub summary: Summary,
    /// One row per layer, then the ensemble row; present for ablations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Vec<LayerRow>>,
    pub episodes: Vec<EpisodeRecord>,
}

/// Facts about the execution rather than the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub jobs: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub run: RunMeta,
}

fn evaluate_episode(
    fs: &FeatureSet,
    cfg: &EvalConfig,
    learner: &dyn Learner,
    index: u64,
    per_layer: bool,
) -> Result<EpisodeRecord> {
    let ep = sample_episode(fs, &cfg.episode_spec().with_index(index))?;
    let mut scores = Vec::with_capacity(cfg.layers.len());
    for id in &cfg.layers {
        let head = learner.fit(ep.support.layers.get(id)?, &ep.support.labels, ep.ways())?;
        scores.push(head.score(ep.query.layers.get(id)?)?);
    }
    let fused = fuse_scores(&scores, cfg.fusion)?;
    let acc = accuracy(&argmax_labels(&fused), &ep.query.labels)?;
    let layer_accuracies = if per_layer {
        scores
            .iter()
            .map(|s| accuracy(&argmax_labels(s), &ep.query.labels))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(EpisodeRecord {
        index,
        class_map: ep.class_map,
        accuracy: acc,
        layer_accuracies,
    })
}

fn run(fs: &FeatureSet, cfg: &EvalConfig, ablation: bool) -> Result<EvalOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    for id in &cfg.layers {
        fs.layer(id)?;
    }
    let learner = learner_for(cfg.learner)?;
    let learner = learner.as_ref();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<EpisodeRecord>> = pool.install(|| {
        (0..cfg.episodes as u64)
            .into_par_iter()
            .map(|i| evaluate_episode(fs, cfg, learner, i, ablation))
            .collect()
    });
    let mut episodes = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        episodes.push(r.map_err(|e| Error::Episode {
            episode: i,
            source: Box::new(e),
        })?);
    }

    let fused: Vec<f64> = episodes.iter().map(|e| e.accuracy).collect();
    let summary = Summary::from_accuracies(&fused)?;
    let ablation = if ablation {
        let mut rows = Vec::with_capacity(cfg.layers.len() + 1);
        for (l, id) in cfg.layers.iter().enumerate() {
            let acc: Vec<f64> = episodes.iter().map(|e| e.layer_accuracies[l]).collect();
            rows.push(LayerRow {
                layer: id.clone(),
                summary: Summary::from_accuracies(&acc)?,
            });
        }
        rows.push(LayerRow {
            layer: ENSEMBLE_ROW.to_string(),
            summary,
        });
        Some(rows)
    } else {
        None
    };

    Ok(EvalOutcome {
        report: EvalReport {
            learner: cfg.learner.to_string(),
            config: cfg.clone(),
            summary,
            ablation,
            episodes,
        },
        run: RunMeta {
            jobs: cfg.jobs,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}

/// Fits the learner on every episode's support set and scores its queries.
pub fn run_eval(fs: &FeatureSet, cfg: &EvalConfig) -> Result<EvalOutcome> {
    run(fs, cfg, false)
}

/// Like [`run_eval`], additionally scoring each layer on its own. All columns
/// are computed from the same sampled episodes.
pub fn run_ablation(fs: &FeatureSet, cfg: &EvalConfig) -> Result<EvalOutcome> {
    run(fs, cfg, true)
}

const CSV_HEADER: [&str; 9] = [
    "learner",
    "layer",
    "ways",
    "support",
    "queries",
    "episodes",
    "mean_accuracy",
    "ci95_halfwidth",
    "degenerate_ci",
];

impl EvalReport {
    /// Table rows: the ablation grid if present, otherwise one row for the
    /// configured layer set.
    pub fn rows(&self) -> Vec<LayerRow> {
        match &self.ablation {
            Some(rows) => rows.clone(),
            None => {
                let layer = match self.config.layers.as_slice() {
                    [single] => single.clone(),
                    _ => ENSEMBLE_ROW.to_string(),
                };
                vec![LayerRow {
                    layer,
                    summary: self.summary,
                }]
            }
        }
    }

    /// CSV table preceded by a `# config:` line echoing the run configuration.
    pub fn to_csv(&self) -> String {
        let support = match &self.config.class_ratio {
            Some(r) => r
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("/"),
            None => self.config.shots.to_string(),
        };
        let mut out = format!(
            "# config: {}\n",
            serde_json::to_string(&self.config).expect("config serializes")
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for row in self.rows() {
            w.write_record([
                self.learner.clone(),
                row.layer,
                self.config.ways.to_string(),
                support.clone(),
                self.config.queries.to_string(),
                self.config.episodes.to_string(),
                format!("{:.6}", row.summary.mean),
                format!("{:.6}", row.summary.ci95_halfwidth),
                row.summary.degenerate_ci.to_string(),
            ])
            .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl EvalOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes")
    }
}
