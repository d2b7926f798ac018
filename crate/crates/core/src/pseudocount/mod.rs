//! Global cluster table, pseudo-counts and intrinsic rewards.
//!
//! For every episode the episodic clusters are visited in order of first
//! occurrence. Each cluster center is matched to the most cosine-similar
//! table entry. Below the threshold `kappa` the center is appended as a new
//! entry and its steps count up from zero; otherwise its steps count up from
//! the matched entry's current count, which then absorbs the cluster's size.
//! The `j`-th step of a cluster receives pseudo-count `base + j` and
//! intrinsic reward `1 / sqrt(base + j)`.

mod snapshot;

pub use snapshot::{table_restore, table_snapshot, TABLE_MAGIC, TABLE_VERSION};

use std::collections::HashMap;

use serde::Serialize;

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

pub const DEFAULT_KAPPA: f64 = 0.8;
pub const DEFAULT_IR_SCALE: f64 = 0.1;

/// Cosine similarity computed in f64. Similarity with a zero vector is 0.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "cosine similarity of vectors with dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// One episode's clustering: clusters are numbered in order of first occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicClustering {
    pub centers: Vec<Vec<f32>>,
    /// Cluster of each step.
    pub labels: Vec<usize>,
    pub counts: Vec<u64>,
    pub first_occurrence: Vec<usize>,
}

impl EpisodicClustering {
    pub fn empty() -> Self {
        Self {
            centers: Vec::new(),
            labels: Vec::new(),
            counts: Vec::new(),
            first_occurrence: Vec::new(),
        }
    }

    /// Groups steps by an arbitrary raw label; each cluster's center is the
    /// mean of its member embeddings.
    pub fn from_labels(embeddings: &[EmbeddingVector], raw_labels: &[usize]) -> Result<Self> {
        if embeddings.len() != raw_labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} embeddings but {} labels",
                embeddings.len(),
                raw_labels.len()
            )));
        }
        let dim = embeddings.first().map_or(0, |e| e.dim());
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut sums: Vec<Vec<f64>> = Vec::new();
        let mut out = Self::empty();
        for (t, (e, &raw)) in embeddings.iter().zip(raw_labels).enumerate() {
            if e.dim() != dim {
                return Err(Error::InvalidArgument(format!(
                    "embedding {t} has dimension {}, expected {dim}",
                    e.dim()
                )));
            }
            let next = remap.len();
            let m = *remap.entry(raw).or_insert(next);
            if m == sums.len() {
                sums.push(vec![0.0; dim]);
                out.counts.push(0);
                out.first_occurrence.push(t);
            }
            for (s, &v) in sums[m].iter_mut().zip(e.as_slice()) {
                *s += v as f64;
            }
            out.counts[m] += 1;
            out.labels.push(m);
        }
        out.centers = sums
            .into_iter()
            .zip(&out.counts)
            .map(|(s, &c)| s.into_iter().map(|v| (v / c as f64) as f32).collect())
            .collect();
        Ok(out)
    }

    /// One cluster per distinct embedding (exact equality), in first-occurrence order.
    pub fn passthrough(embeddings: &[EmbeddingVector]) -> Result<Self> {
        let mut ids: HashMap<Vec<u32>, usize> = HashMap::new();
        let raw: Vec<usize> = embeddings
            .iter()
            .map(|e| {
                // +0.0 and -0.0 compare equal, so they share a key
                let key: Vec<u32> = e
                    .as_slice()
                    .iter()
                    .map(|&v| if v == 0.0 { 0 } else { v.to_bits() })
                    .collect();
                let next = ids.len();
                *ids.entry(key).or_insert(next)
            })
            .collect();
        Self::from_labels(embeddings, &raw)
    }

    pub fn n_steps(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }

    fn validate(&self) -> Result<()> {
        let m = self.centers.len();
        if self.counts.len() != m || self.first_occurrence.len() != m {
            return Err(Error::InvalidArgument(
                "cluster arrays disagree in length".into(),
            ));
        }
        let mut tally = vec![0u64; m];
        for &l in &self.labels {
            if l >= m {
                return Err(Error::InvalidArgument(format!("label {l} has no center")));
            }
            tally[l] += 1;
        }
        if tally != self.counts {
            return Err(Error::InvalidArgument(
                "cluster counts do not match labels".into(),
            ));
        }
        for (m, &t) in self.first_occurrence.iter().enumerate() {
            if self.labels.get(t) != Some(&m) || self.labels[..t].contains(&m) {
                return Err(Error::InvalidArgument(format!(
                    "first occurrence of cluster {m} is not step {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub center: Vec<f32>,
    pub count: u64,
}

/// Result of matching a center against the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    /// Most similar entry, lowest index on ties; `None` for an empty table.
    pub index: Option<usize>,
    /// Its cosine similarity, or `-inf` for an empty table.
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalClusterTable {
    kappa: f64,
    dim: Option<usize>,
    entries: Vec<TableEntry>,
}

/// Per-step output of [`GlobalClusterTable::process_episode`].
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RewardTrace {
    /// Unscaled intrinsic reward `1 / sqrt(pseudo_count)`.
    pub intrinsic: Vec<f64>,
    pub pseudo_counts: Vec<u64>,
    /// Table entry that absorbed the step's cluster (the new entry when one was appended).
    pub global_index: Vec<usize>,
    /// Episodic cluster of the step.
    pub episodic_label: Vec<usize>,
}

impl RewardTrace {
    pub fn len(&self) -> usize {
        self.intrinsic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intrinsic.is_empty()
    }
}

impl GlobalClusterTable {
    pub fn new(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self {
            kappa,
            dim: None,
            entries: Vec::new(),
        })
    }

    pub(crate) fn from_parts(
        kappa: f64,
        dim: Option<usize>,
        entries: Vec<TableEntry>,
    ) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self {
            kappa,
            dim,
            entries,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    /// Linear scan for the most cosine-similar entry.
    pub fn find_match(&self, center: &[f32]) -> Result<Match> {
        let mut best = Match {
            index: None,
            similarity: f64::NEG_INFINITY,
        };
        for (k, entry) in self.entries.iter().enumerate() {
            let sim = cosine_similarity(center, &entry.center)?;
            if sim > best.similarity {
                best = Match {
                    index: Some(k),
                    similarity: sim,
                };
            }
        }
        Ok(best)
    }

    /// Assigns pseudo-counts and intrinsic rewards to every step of the
    /// episode and folds the episode's cluster counts into the table.
    pub fn process_episode(&mut self, clustering: &EpisodicClustering) -> Result<RewardTrace> {
        check_kappa(self.kappa)?;
        clustering.validate()?;
        if let (Some(dim), Some(c)) = (self.dim, clustering.centers.first()) {
            if c.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "episodic centers have dimension {}, table has {dim}",
                    c.len()
                )));
            }
        }

        let t_len = clustering.n_steps();
        let mut trace = RewardTrace {
            intrinsic: vec![0.0; t_len],
            pseudo_counts: vec![0; t_len],
            global_index: vec![0; t_len],
            episodic_label: clustering.labels.clone(),
        };
        // steps of each cluster in time order
        let mut steps_of: Vec<Vec<usize>> = vec![Vec::new(); clustering.n_clusters()];
        for (t, &m) in clustering.labels.iter().enumerate() {
            steps_of[m].push(t);
        }
        let mut order: Vec<usize> = (0..clustering.n_clusters()).collect();
        order.sort_by_key(|&m| clustering.first_occurrence[m]);

        for m in order {
            let center = &clustering.centers[m];
            let found = self.find_match(center)?;
            let append = found.similarity < self.kappa;
            let (base, target) = if append {
                (0, self.entries.len())
            } else {
                let k = found.index.expect("a finite similarity implies an entry");
                (self.entries[k].count, k)
            };
            for (j, &t) in steps_of[m].iter().enumerate() {
                let rho = base + j as u64 + 1;
                trace.pseudo_counts[t] = rho;
                trace.intrinsic[t] = 1.0 / (rho as f64).sqrt();
                trace.global_index[t] = target;
            }
            let lambda_ep = clustering.counts[m];
            if append {
                self.dim.get_or_insert(center.len());
                self.entries.push(TableEntry {
                    center: center.clone(),
                    count: lambda_ep,
                });
            } else {
                self.entries[target].count += lambda_ep;
            }
        }
        Ok(trace)
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::Config(format!(
            "kappa must lie in [0, 1], got {kappa}"
        )));
    }
    Ok(())
}

/// `extrinsic[t] + scale * intrinsic[t]`.
pub fn combine_rewards(extrinsic: &[f64], intrinsic: &RewardTrace, scale: f64) -> Result<Vec<f64>> {
    if extrinsic.len() != intrinsic.len() {
        return Err(Error::InvalidArgument(format!(
            "{} extrinsic rewards but {} intrinsic rewards",
            extrinsic.len(),
            intrinsic.len()
        )));
    }
    Ok(extrinsic
        .iter()
        .zip(&intrinsic.intrinsic)
        .map(|(e, i)| e + scale * i)
        .collect())
}
