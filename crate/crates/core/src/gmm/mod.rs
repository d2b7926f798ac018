//! Full-covariance Gaussian mixture fitted by expectation-maximisation.
//!
//! All densities are handled in the log domain. Each M-step adds `reg_covar`
//! to the covariance diagonals; when a covariance still fails to factorise the
//! regulariser is raised tenfold (up to [`MAX_REG_COVAR`]) for that component.

mod kmeans;

pub use kmeans::{kmeans_init, KmeansInit};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

pub const MAX_REG_COVAR: f64 = 1e-2;
const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Components whose total responsibility falls below this are re-seeded.
const EMPTY_COMPONENT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmConfig {
    pub n_components: usize,
    pub reg_covar: f64,
    pub max_iter: usize,
    /// Convergence threshold on the relative change of the mean per-sample
    /// log-likelihood.
    pub tol: f64,
    pub seed: u64,
    pub n_init: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            n_components: 1,
            reg_covar: 1e-6,
            max_iter: 100,
            tol: 1e-3,
            seed: 1,
            n_init: 1,
        }
    }
}

impl GmmConfig {
    pub fn with_components(n_components: usize) -> Self {
        Self {
            n_components,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components < 1 {
            return Err(Error::Config("n_components must be at least 1".into()));
        }
        if !(self.reg_covar >= 0.0 && self.reg_covar.is_finite()) {
            return Err(Error::Config(format!(
                "reg_covar must be >= 0, got {}",
                self.reg_covar
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.n_init < 1 {
            return Err(Error::Config("n_init must be at least 1".into()));
        }
        Ok(())
    }
}

/// A fitted mixture. Immutable once returned by [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Upper-triangular `U` with `U U^T = Σ^{-1}` per component.
    precision_chol: Vec<DMatrix<f64>>,
    log_det_precision_chol: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    /// Mean per-sample log-likelihood of the final parameters.
    pub log_likelihood: f64,
    /// Mean per-sample log-likelihood after initialisation and after every
    /// M-step, ending with the final parameters.
    pub log_likelihood_history: Vec<f64>,
}

/// Stacks embeddings into an `N x d` matrix, rejecting ragged or non-finite input.
pub fn embeddings_to_matrix(data: &[EmbeddingVector]) -> Result<DMatrix<f64>> {
    let rows: Vec<&[f32]> = data.iter().map(|e| e.as_slice()).collect();
    rows_to_matrix(&rows)
}

pub fn rows_to_matrix<R: AsRef<[T]>, T: Copy + Into<f64>>(rows: &[R]) -> Result<DMatrix<f64>> {
    let Some(first) = rows.first() else {
        return Err(Error::InvalidArgument("no data rows".into()));
    };
    let d = first.as_ref().len();
    if d == 0 {
        return Err(Error::InvalidArgument("data rows have dimension 0".into()));
    }
    let mut flat = Vec::with_capacity(rows.len() * d);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != d {
            return Err(Error::InvalidArgument(format!(
                "row {i} has dimension {}, expected {d}",
                row.len()
            )));
        }
        for &v in row {
            let v: f64 = v.into();
            if !v.is_finite() {
                return Err(Error::Data(format!("row {i} contains a non-finite value")));
            }
            flat.push(v);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), d, &flat))
}

pub fn fit(config: &GmmConfig, data: &[EmbeddingVector]) -> Result<GmmModel> {
    config.validate()?;
    let x = embeddings_to_matrix(data)?;
    fit_matrix(config, &x)
}

/// Fits on an `N x d` matrix of samples.
pub fn fit_matrix(config: &GmmConfig, x: &DMatrix<f64>) -> Result<GmmModel> {
    config.validate()?;
    check_sample_count(config, x)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in data".into()));
    }
    let mut best: Option<GmmModel> = None;
    for init in 0..config.n_init {
        let seed = config.seed.wrapping_add(init as u64);
        let model = fit_once(config, x, seed)?;
        if best
            .as_ref()
            .is_none_or(|b| model.log_likelihood > b.log_likelihood)
        {
            best = Some(model);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

fn check_sample_count(config: &GmmConfig, x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() < config.n_components {
        return Err(Error::InvalidArgument(format!(
            "n_samples={} should be >= n_components={}",
            x.nrows(),
            config.n_components
        )));
    }
    Ok(())
}

struct Params {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    precision_chol: Vec<DMatrix<f64>>,
    log_det: Vec<f64>,
}

fn fit_once(config: &GmmConfig, x: &DMatrix<f64>, seed: u64) -> Result<GmmModel> {
    let init = kmeans::kmeans_init_matrix(config.n_components, x, seed)?;
    let data_var = column_variances(x);
    let mut params = m_step(x, &init.responsibilities, config.reg_covar, &data_var)?;

    let mut history = Vec::with_capacity(config.max_iter + 1);
    let mut converged = false;
    let mut n_iter = 0;
    let mut prev = f64::NEG_INFINITY;
    for iter in 1..=config.max_iter {
        let (ll, log_resp) = e_step(x, &params);
        history.push(ll);
        let resp = log_resp.map(f64::exp);
        params = m_step(x, &resp, config.reg_covar, &data_var)?;
        n_iter = iter;
        if prev.is_finite() && (ll - prev).abs() < config.tol * prev.abs().max(1e-12) {
            converged = true;
            break;
        }
        prev = ll;
    }
    let (final_ll, _) = e_step(x, &params);
    history.push(final_ll);

    Ok(GmmModel {
        weights: params.weights,
        means: params.means,
        covariances: params.covariances,
        precision_chol: params.precision_chol,
        log_det_precision_chol: params.log_det,
        converged,
        n_iter,
        log_likelihood: final_ll,
        log_likelihood_history: history,
    })
}

fn column_variances(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|col| {
            let mean = col.sum() / n;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        })
        .collect()
}

/// `log N(x_n | μ_k, Σ_k)` for every sample and component.
fn estimate_log_gaussian(
    x: &DMatrix<f64>,
    means: &[DVector<f64>],
    precision_chol: &[DMatrix<f64>],
    log_det: &[f64],
) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut out = DMatrix::zeros(n, means.len());
    for (k, (mean, prec)) in means.iter().zip(precision_chol).enumerate() {
        let y = x * prec;
        let shift = mean.transpose() * prec;
        let mut sq = vec![0.0; n];
        for (j, col) in y.column_iter().enumerate() {
            let s = shift[(0, j)];
            for (acc, v) in sq.iter_mut().zip(col.iter()) {
                let diff = v - s;
                *acc += diff * diff;
            }
        }
        for (i, q) in sq.into_iter().enumerate() {
            out[(i, k)] = -0.5 * (d as f64 * LN_2PI + q) + log_det[k];
        }
    }
    out
}

fn weighted_log_prob(x: &DMatrix<f64>, params: &Params) -> DMatrix<f64> {
    let mut lp = estimate_log_gaussian(x, &params.means, &params.precision_chol, &params.log_det);
    for (k, w) in params.weights.iter().enumerate() {
        let lw = w.ln();
        lp.column_mut(k).add_scalar_mut(lw);
    }
    lp
}

fn log_sum_exp(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = row.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + row.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Returns the mean per-sample log-likelihood and the log-responsibilities.
fn e_step(x: &DMatrix<f64>, params: &Params) -> (f64, DMatrix<f64>) {
    let mut wlp = weighted_log_prob(x, params);
    let n = x.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let norm = log_sum_exp(wlp.row(i).iter().copied());
        total += norm;
        for v in wlp.row_mut(i).iter_mut() {
            *v -= norm;
        }
    }
    (total / n as f64, wlp)
}

fn m_step(
    x: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    reg_covar: f64,
    data_var: &[f64],
) -> Result<Params> {
    let (n, d) = x.shape();
    let m = resp.ncols();
    let mut weights = Vec::with_capacity(m);
    let mut means = Vec::with_capacity(m);
    let mut covariances = Vec::with_capacity(m);
    let mut empty = Vec::new();

    for k in 0..m {
        let col = resp.column(k);
        let nk: f64 = col.sum();
        if nk < EMPTY_COMPONENT {
            empty.push(k);
            weights.push(0.0);
            means.push(DVector::zeros(d));
            covariances.push(DMatrix::zeros(d, d));
            continue;
        }
        // Samples with zero responsibility contribute nothing; skip them.
        let members: Vec<usize> = (0..n).filter(|&i| col[i] > 0.0).collect();
        let mut mean = DVector::zeros(d);
        for &i in &members {
            mean.axpy(col[i], &x.row(i).transpose(), 1.0);
        }
        mean /= nk;
        let mut z = DMatrix::zeros(members.len(), d);
        for (r, &i) in members.iter().enumerate() {
            let s = col[i].sqrt();
            for j in 0..d {
                z[(r, j)] = s * (x[(i, j)] - mean[j]);
            }
        }
        let mut cov = z.tr_mul(&z) / nk;
        // exact symmetry
        for a in 0..d {
            for b in 0..a {
                let v = 0.5 * (cov[(a, b)] + cov[(b, a)]);
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        weights.push(nk / n as f64);
        means.push(mean);
        covariances.push(cov);
    }

    if !empty.is_empty() {
        reseed_empty(
            x,
            resp,
            &empty,
            &mut weights,
            &mut means,
            &mut covariances,
            data_var,
        );
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }

    let mut precision_chol = Vec::with_capacity(m);
    let mut log_det = Vec::with_capacity(m);
    for cov in &mut covariances {
        let (prec, ld) = regularised_precision_chol(cov, reg_covar)?;
        precision_chol.push(prec);
        log_det.push(ld);
    }
    Ok(Params {
        weights,
        means,
        covariances,
        precision_chol,
        log_det,
    })
}

/// Moves each empty component onto the sample the current mixture explains
/// worst (lowest maximum responsibility), one distinct sample per component.
fn reseed_empty(
    x: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    empty: &[usize],
    weights: &mut [f64],
    means: &mut [DVector<f64>],
    covariances: &mut [DMatrix<f64>],
    data_var: &[f64],
) {
    let n = x.nrows();
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|i| (resp.row(i).iter().copied().fold(0.0, f64::max), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (slot, &k) in empty.iter().enumerate() {
        let i = order[slot % n].1;
        means[k] = x.row(i).transpose();
        covariances[k] = DMatrix::from_diagonal(&DVector::from_iterator(
            data_var.len(),
            data_var.iter().copied(),
        ));
        weights[k] = 1.0 / n as f64;
    }
}

/// Adds `reg_covar` to the diagonal (escalating on failure) and returns the
/// upper-triangular precision Cholesky factor with its log-determinant.
fn regularised_precision_chol(
    cov: &mut DMatrix<f64>,
    reg_covar: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let d = cov.nrows();
    let base = cov.clone();
    let mut reg = reg_covar;
    loop {
        let mut c = base.clone();
        for j in 0..d {
            c[(j, j)] += reg;
        }
        if let Some(factor) = try_cholesky(&c) {
            *cov = c;
            return Ok(factor);
        }
        if reg >= MAX_REG_COVAR {
            return Err(Error::Numerical(format!(
                "covariance is not positive-definite even with reg_covar={reg:e}"
            )));
        }
        reg = (reg.max(1e-9) * 10.0).min(MAX_REG_COVAR);
    }
}

fn try_cholesky(c: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    if c.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = c.clone().cholesky()?;
    let l = chol.l();
    if l.diagonal().iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return None;
    }
    let d = c.nrows();
    let l_inv = l.solve_lower_triangular(&DMatrix::identity(d, d))?;
    let prec = l_inv.transpose();
    let log_det = prec.diagonal().iter().map(|v| v.ln()).sum();
    Some((prec, log_det))
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    fn params_view(&self) -> Params {
        Params {
            weights: self.weights.clone(),
            means: self.means.clone(),
            covariances: Vec::new(),
            precision_chol: self.precision_chol.clone(),
            log_det: self.log_det_precision_chol.clone(),
        }
    }

    fn check_dim(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "data has dimension {}, model has {}",
                x.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Hard labels: argmax of log-weight plus log-density, lowest index on ties.
    pub fn predict_matrix(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        let wlp = weighted_log_prob(x, &self.params_view());
        Ok((0..x.nrows())
            .map(|i| {
                let mut best = 0;
                for k in 1..wlp.ncols() {
                    if wlp[(i, k)] > wlp[(i, best)] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }

    pub fn predict(&self, data: &[EmbeddingVector]) -> Result<Vec<usize>> {
        self.predict_matrix(&embeddings_to_matrix(data)?)
    }

    /// Posterior component probabilities, one row per sample.
    pub fn predict_proba_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let (_, log_resp) = e_step(x, &self.params_view());
        Ok(log_resp.map(f64::exp))
    }

    /// Mean per-sample log-likelihood of `x` under the model.
    pub fn score_matrix(&self, x: &DMatrix<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(e_step(x, &self.params_view()).0)
    }

    /// Text dump of weights and means, one component per line.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        for (k, (w, mean)) in self.weights.iter().zip(&self.means).enumerate() {
            let coords: Vec<String> = mean.iter().map(|v| format!("{v}")).collect();
            out.push_str(&format!(
                "component {k} weight {w} mean {}\n",
                coords.join(" ")
            ));
        }
        out
    }
}
