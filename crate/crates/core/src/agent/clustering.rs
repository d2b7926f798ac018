use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::gmm::{self, GmmConfig, GmmModel};
use crate::pseudocount::EpisodicClustering;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMode {
    /// Gaussian mixture fitted to the episode's embeddings.
    #[default]
    Gmm,
    /// One cluster per distinct embedding.
    Passthrough,
}

/// How one episode's embeddings are grouped into episodic clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub mode: ClusterMode,
    /// Mixture components per episode; 10% of the episode length when unset.
    /// Always capped at the episode length.
    pub n_components: Option<usize>,
    pub reg_covar: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Mixture seed, identical for every episode.
    pub seed: u64,
    pub n_init: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let g = GmmConfig::default();
        Self {
            mode: ClusterMode::Gmm,
            n_components: None,
            reg_covar: g.reg_covar,
            max_iter: g.max_iter,
            tol: g.tol,
            seed: g.seed,
            n_init: g.n_init,
        }
    }
}

/// `max(1, round(0.1 * steps))`, rounding halves up.
pub fn default_components(steps: usize) -> usize {
    ((steps + 5) / 10).max(1)
}

impl ClusterConfig {
    pub fn passthrough() -> Self {
        Self {
            mode: ClusterMode::Passthrough,
            ..Self::default()
        }
    }

    /// Mixture settings for an episode of `steps` embeddings.
    pub fn gmm_config(&self, steps: usize) -> GmmConfig {
        let m = self
            .n_components
            .unwrap_or_else(|| default_components(steps));
        GmmConfig {
            n_components: m.min(steps).max(1),
            reg_covar: self.reg_covar,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
            n_init: self.n_init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == Some(0) {
            return Err(Error::Config(
                "clustering.n_components must be at least 1".into(),
            ));
        }
        self.gmm_config(1).validate()
    }
}

/// Clusters one episode. Also returns the fitted mixture in GMM mode.
pub fn cluster_episode(
    config: &ClusterConfig,
    embeddings: &[EmbeddingVector],
) -> Result<(EpisodicClustering, Option<GmmModel>)> {
    if embeddings.is_empty() {
        return Ok((EpisodicClustering::empty(), None));
    }
    match config.mode {
        ClusterMode::Passthrough => Ok((EpisodicClustering::passthrough(embeddings)?, None)),
        ClusterMode::Gmm => {
            let model = gmm::fit(&config.gmm_config(embeddings.len()), embeddings)?;
            let labels = model.predict(embeddings)?;
            Ok((
                EpisodicClustering::from_labels(embeddings, &labels)?,
                Some(model),
            ))
        }
    }
}
