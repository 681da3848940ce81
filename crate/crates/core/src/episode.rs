//! Seeded N-shot K-way episode sampling.
//!
//! An episode is drawn as follows, all from the keyed stream
//! `(master_seed, episode_index)`:
//!
//! 1. choose K distinct classes (partial Fisher-Yates over all class indices);
//!    the i-th chosen class becomes episode label `i`;
//! 2. for each chosen class in label order, draw `support + Q` distinct
//!    samples from that class; the first `support` are support rows, the
//!    remaining `Q` are query rows.
//!
//! Support and query rows are laid out class by class in label order.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, Layers};
use crate::rng::keyed_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub ways: usize,
    pub shots: usize,
    pub queries_per_class: usize,
    /// Per-label support counts. Overrides `shots` when present; the query
    /// side stays at `queries_per_class` for every class.
    pub class_ratio: Option<Vec<usize>>,
    pub master_seed: u64,
    pub episode_index: u64,
}

impl EpisodeSpec {
    pub fn new(ways: usize, shots: usize, queries_per_class: usize, master_seed: u64) -> Self {
        EpisodeSpec {
            ways,
            shots,
            queries_per_class,
            class_ratio: None,
            master_seed,
            episode_index: 0,
        }
    }

    pub fn with_class_ratio(mut self, ratio: Vec<usize>) -> Self {
        self.class_ratio = Some(ratio);
        self
    }

    pub fn with_index(mut self, episode_index: u64) -> Self {
        self.episode_index = episode_index;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ways < 2 {
            return Err(Error::Config(format!(
                "ways must be at least 2, got {}",
                self.ways
            )));
        }
        if self.queries_per_class < 1 {
            return Err(Error::Config("queries per class must be at least 1".into()));
        }
        match &self.class_ratio {
            Some(ratio) => {
                if ratio.len() != self.ways {
                    return Err(Error::Config(format!(
                        "class ratio has {} entries but ways is {}",
                        ratio.len(),
                        self.ways
                    )));
                }
                if ratio.contains(&0) {
                    return Err(Error::Config(
                        "class ratio entries must be at least 1".into(),
                    ));
                }
            }
            None if self.shots < 1 => {
                return Err(Error::Config("shots must be at least 1".into()));
            }
            None => {}
        }
        Ok(())
    }

    /// Support rows demanded for each episode label.
    pub fn support_counts(&self) -> Vec<usize> {
        match &self.class_ratio {
            Some(ratio) => ratio.clone(),
            None => vec![self.shots; self.ways],
        }
    }
}

/// Features and labels for one side (support or query) of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSplit {
    pub layers: Layers,
    /// Episode labels in `0..ways`.
    pub labels: Vec<usize>,
    /// Row indices into the originating feature set.
    pub sample_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_index: u64,
    pub support: EpisodeSplit,
    pub query: EpisodeSplit,
    /// `class_map[label]` is the original class index behind episode label `label`.
    pub class_map: Vec<usize>,
}

impl Episode {
    pub fn ways(&self) -> usize {
        self.class_map.len()
    }
}

/// Draws the episode `(fs, spec)` determines.
pub fn sample_episode(fs: &FeatureSet, spec: &EpisodeSpec) -> Result<Episode> {
    sample_with_index(fs, &fs.class_indices(), spec)
}

fn sample_with_index(
    fs: &FeatureSet,
    by_class: &[Vec<usize>],
    spec: &EpisodeSpec,
) -> Result<Episode> {
    spec.validate()?;
    if by_class.len() < spec.ways {
        return Err(Error::InsufficientClasses {
            required: spec.ways,
            available: by_class.len(),
        });
    }
    let mut rng = keyed_rng(spec.master_seed, spec.episode_index);

    let mut classes: Vec<usize> = (0..by_class.len()).collect();
    let (chosen, _) = classes.partial_shuffle(&mut rng, spec.ways);
    let class_map = chosen.to_vec();

    let counts = spec.support_counts();
    let q = spec.queries_per_class;
    let mut support_idx = Vec::with_capacity(counts.iter().sum());
    let mut support_labels = Vec::with_capacity(support_idx.capacity());
    let mut query_idx = Vec::with_capacity(q * spec.ways);
    let mut query_labels = Vec::with_capacity(q * spec.ways);

    for (label, (&class, &n_support)) in class_map.iter().zip(&counts).enumerate() {
        let need = n_support + q;
        let pool = &by_class[class];
        if pool.len() < need {
            return Err(Error::InsufficientSamples {
                class,
                name: fs.class_names()[class].clone(),
                available: pool.len(),
                required: need,
            });
        }
        let mut pool = pool.clone();
        let (drawn, _) = pool.partial_shuffle(&mut rng, need);
        support_idx.extend_from_slice(&drawn[..n_support]);
        support_labels.extend(std::iter::repeat(label).take(n_support));
        query_idx.extend_from_slice(&drawn[n_support..]);
        query_labels.extend(std::iter::repeat(label).take(q));
    }

    Ok(Episode {
        episode_index: spec.episode_index,
        support: EpisodeSplit {
            layers: fs.layers().select_rows(&support_idx),
            labels: support_labels,
            sample_indices: support_idx,
        },
        query: EpisodeSplit {
            layers: fs.layers().select_rows(&query_idx),
            labels: query_labels,
            sample_indices: query_idx,
        },
        class_map,
    })
}

/// Episodes `0..count` of the run keyed by `base.master_seed`.
///
/// Each item only depends on its own index, so the stream can be consumed
/// lazily, partially, or in parallel via [`sample_episode`] with
/// [`EpisodeSpec::with_index`].
pub fn episode_stream<'a>(
    fs: &'a FeatureSet,
    base: &EpisodeSpec,
    count: usize,
) -> impl Iterator<Item = Result<Episode>> + 'a {
    let base = base.clone();
    let by_class = fs.class_indices();
    (0..count as u64).map(move |i| sample_with_index(fs, &by_class, &base.clone().with_index(i)))
}
