//! A small self-contained backbone: synthetic Gaussian domains, a rectifier
//! MLP trained on the source domain, and export of every layer's activations
//! into the feature store.

mod mlp;
mod synthetic;

pub use mlp::{train_backbone, Dense, MlpBackbone, TrainConfig, TrainedBackbone};
pub use synthetic::{gen_synthetic, AffineShift, Shift, SyntheticData, SyntheticSpec};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{write_feature_set, FeatureSet, Layers, Manifest};
use crate::linalg::Matrix;

/// Runs `inputs` through the backbone and packages every layer as a feature set.
pub fn backbone_features(
    bb: &MlpBackbone,
    inputs: &Matrix,
    labels: &[usize],
    class_names: Vec<String>,
    split_name: &str,
) -> Result<FeatureSet> {
    let mut layers = Layers::new();
    for (id, acts) in bb.layer_ids().into_iter().zip(bb.forward(inputs)?) {
        layers.push(id, acts)?;
    }
    FeatureSet::new(split_name, class_names, labels.to_vec(), layers)
}

/// Exports hidden-layer activations (`h1`…) and output logits (`out`) to `dir`.
pub fn export_features(
    bb: &MlpBackbone,
    inputs: &Matrix,
    labels: &[usize],
    class_names: Vec<String>,
    split_name: &str,
    dir: &Path,
) -> Result<Manifest> {
    write_feature_set(
        &backbone_features(bb, inputs, labels, class_names, split_name)?,
        dir,
    )
}

/// Everything `toy-gen` needs: the source world, how to train on it and which
/// shifted domains to export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySuiteConfig {
    pub classes: usize,
    pub input_dim: usize,
    pub train_per_class: usize,
    pub eval_per_class: usize,
    pub cluster_spread: f64,
    pub seed: u64,
    pub train: TrainConfig,
    pub covariate: AffineShift,
    pub concept_flip_fraction: f64,
}

impl Default for ToySuiteConfig {
    fn default() -> Self {
        ToySuiteConfig {
            classes: 10,
            input_dim: 16,
            train_per_class: 200,
            eval_per_class: 100,
            cluster_spread: 1.0,
            seed: 7,
            train: TrainConfig::default(),
            covariate: AffineShift {
                rotation: 60f64.to_radians(),
                translation: 0.5,
                scale: 1.5,
            },
            concept_flip_fraction: 0.2,
        }
    }
}

impl ToySuiteConfig {
    /// Linearly increasing class weights `∝ 1, 2, …, classes`.
    pub fn prior_weights(&self) -> Vec<f64> {
        let total = (self.classes * (self.classes + 1) / 2) as f64;
        (1..=self.classes).map(|c| c as f64 / total).collect()
    }

    fn spec(&self, per_class: usize, shift: Shift, draw: u64) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.classes,
            input_dim: self.input_dim,
            samples_per_class: per_class,
            cluster_spread: self.cluster_spread,
            shift,
            seed: self.seed,
            draw,
        }
    }

    /// The evaluation domains, in export order.
    pub fn domains(&self) -> Vec<(&'static str, SyntheticSpec)> {
        let n = self.eval_per_class;
        vec![
            ("source", self.spec(n, Shift::None, 1)),
            (
                "prior",
                self.spec(
                    n,
                    Shift::Prior {
                        class_weights: self.prior_weights(),
                    },
                    2,
                ),
            ),
            (
                "covariate",
                self.spec(n, Shift::Covariate(self.covariate), 3),
            ),
            (
                "concept",
                self.spec(
                    n,
                    Shift::Concept {
                        flip_fraction: self.concept_flip_fraction,
                    },
                    4,
                ),
            ),
        ]
    }

    pub fn training_spec(&self) -> SyntheticSpec {
        self.spec(self.train_per_class, Shift::None, 0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainExport {
    pub name: String,
    pub manifest: String,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToySuiteSummary {
    pub config: ToySuiteConfig,
    pub train_accuracy: f64,
    pub final_loss: f64,
    pub layer_ids: Vec<String>,
    pub domains: Vec<DomainExport>,
}

/// Trains the backbone on the source world and exports each evaluation
/// domain into `out_dir/<domain>/`. A `suite.json` summary is written
/// alongside.
pub fn generate_suite(cfg: &ToySuiteConfig, out_dir: &Path) -> Result<ToySuiteSummary> {
    let train = gen_synthetic(&cfg.training_spec())?;
    let trained = train_backbone(&train.inputs, &train.labels, &cfg.train)?;
    let class_names: Vec<String> = (0..cfg.classes).map(|c| format!("class{c:02}")).collect();

    let mut domains = Vec::new();
    for (name, spec) in cfg.domains() {
        let data = gen_synthetic(&spec)?;
        let dir = out_dir.join(name);
        export_features(
            &trained.backbone,
            &data.inputs,
            &data.labels,
            class_names.clone(),
            name,
            &dir,
        )?;
        domains.push(DomainExport {
            name: name.to_string(),
            manifest: format!("{name}/{}", crate::features::MANIFEST_FILE),
            samples: data.labels.len(),
        });
    }
    let summary = ToySuiteSummary {
        config: cfg.clone(),
        train_accuracy: trained.train_accuracy,
        final_loss: trained.final_loss,
        layer_ids: trained.backbone.layer_ids(),
        domains,
    };
    let path = out_dir.join("suite.json");
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
