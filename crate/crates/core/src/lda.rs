//! Variational inference for the base topic model: per-document E-step,
//! evidence lower bound, maximum-likelihood topic-word update and the
//! Newton-Raphson update of the Dirichlet hyperparameter.

use rayon::prelude::*;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::math::{digamma, ln_gamma, trigamma};

/// Dirichlet hyperparameter and topic-word matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Length K, strictly positive.
    pub alpha: Vec<f64>,
    /// K x V, each row a distribution over words.
    pub beta: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn n_topics(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_words(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.beta.len() != self.alpha.len() {
            return Err(Error::Validation(format!(
                "alpha has {} entries, beta has {} rows",
                self.alpha.len(),
                self.beta.len()
            )));
        }
        for (k, &a) in self.alpha.iter().enumerate() {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Validation(format!("alpha[{k}] = {a} must be > 0")));
            }
        }
        let v = self.n_words();
        for (k, row) in self.beta.iter().enumerate() {
            if row.len() != v {
                return Err(Error::Validation(format!("beta row {k} has wrong length")));
            }
            let mut sum = 0.0;
            for &p in row {
                if p < 0.0 || !p.is_finite() {
                    return Err(Error::Validation(format!(
                        "beta row {k} has invalid entry {p}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "beta row {k} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Per-document variational parameters, kept for the whole corpus.
///
/// `phi[d]` has one row per *distinct* word of document d (in the order of
/// `doc.words`), not per token position: identical words receive identical
/// updates, so rows are weighted by the word count instead.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub gamma: Vec<Vec<f64>>,
    pub phi: Vec<Vec<Vec<f64>>>,
}

/// Accumulated across documents by associative addition.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    /// K x V expected topic-word counts.
    pub beta_num: Vec<Vec<f64>>,
    /// Per topic: sum over documents of Psi(gamma_dk) - Psi(sum_k gamma_dk).
    pub alpha_ss: Vec<f64>,
    pub n_docs: usize,
}

impl SufficientStats {
    pub fn zeros(n_topics: usize, n_words: usize) -> Self {
        SufficientStats {
            beta_num: vec![vec![0.0; n_words]; n_topics],
            alpha_ss: vec![0.0; n_topics],
            n_docs: 0,
        }
    }
}

/// Coordinate ascent on one document: alternate the topic-assignment and
/// Dirichlet updates until the mean absolute change in gamma drops below
/// `tol` or `max_iter` sweeps.
pub fn e_step_doc(
    doc: &Document,
    alpha: &[f64],
    beta: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = alpha.len();
    let n_d = doc.token_total() as f64;

    // Log probabilities of this document's words, one row per distinct word.
    let log_beta: Vec<Vec<f64>> = doc
        .words
        .iter()
        .map(|&(w, _)| beta.iter().map(|row| row[w].ln()).collect())
        .collect();

    let mut phi = vec![vec![1.0 / k as f64; k]; doc.words.len()];
    let mut gamma: Vec<f64> = alpha.iter().map(|&a| a + n_d / k as f64).collect();
    let mut dig = vec![0.0; k];

    for _ in 0..max_iter {
        for (d, &g) in dig.iter_mut().zip(&gamma) {
            *d = digamma(g)?;
        }
        // phi_jk propto beta_kw * exp(Psi(gamma_k)); the shared -Psi(sum)
        // term cancels in the normalization.
        for (row, lb) in phi.iter_mut().zip(&log_beta) {
            let mut max = f64::NEG_INFINITY;
            for i in 0..k {
                row[i] = lb[i] + dig[i];
                if row[i] > max {
                    max = row[i];
                }
            }
            if !max.is_finite() {
                return Err(Error::Numerical(
                    "non-finite topic assignment in E-step (is beta smoothed?)".into(),
                ));
            }
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        let mut diff = 0.0;
        for i in 0..k {
            let mut g = alpha[i];
            for (row, &(_, c)) in phi.iter().zip(&doc.words) {
                g += c as f64 * row[i];
            }
            if !g.is_finite() {
                return Err(Error::Numerical("non-finite gamma in E-step".into()));
            }
            diff += (g - gamma[i]).abs();
            gamma[i] = g;
        }
        if diff / (k as f64) < tol {
            break;
        }
    }
    Ok((gamma, phi))
}

/// Variational lower bound contribution of a single document.
pub fn elbo_doc(
    doc: &Document,
    gamma: &[f64],
    phi: &[Vec<f64>],
    alpha: &[f64],
    beta: &[Vec<f64>],
) -> Result<f64> {
    let k = alpha.len();
    let gamma_sum: f64 = gamma.iter().sum();
    let alpha_sum: f64 = alpha.iter().sum();
    let dig_sum = digamma(gamma_sum)?;
    let mut dig = vec![0.0; k];
    for (d, &g) in dig.iter_mut().zip(gamma) {
        *d = digamma(g)? - dig_sum;
    }

    // E[log p(theta|alpha)] - E[log q(theta|gamma)]
    let mut bound = ln_gamma(alpha_sum)? - ln_gamma(gamma_sum)?;
    for i in 0..k {
        bound += -ln_gamma(alpha[i])? + (alpha[i] - 1.0) * dig[i];
        bound += ln_gamma(gamma[i])? - (gamma[i] - 1.0) * dig[i];
    }
    // E[log p(z|theta)] + E[log p(w|z,beta)] - E[log q(z|phi)]
    for (row, &(w, c)) in phi.iter().zip(&doc.words) {
        let c = c as f64;
        for i in 0..k {
            let p = row[i];
            if p > 0.0 {
                bound += c * p * (dig[i] + beta[i][w].ln() - p.ln());
            }
        }
    }
    if !bound.is_finite() {
        return Err(Error::Numerical("non-finite ELBO term".into()));
    }
    Ok(bound)
}

/// Variational lower bound of the whole corpus.
pub fn elbo(corpus: &Corpus, state: &VariationalState, params: &ModelParams) -> Result<f64> {
    if state.gamma.len() != corpus.n_docs() || state.phi.len() != corpus.n_docs() {
        return Err(Error::Validation(format!(
            "state covers {} documents, corpus has {}",
            state.gamma.len(),
            corpus.n_docs()
        )));
    }
    let mut total = 0.0;
    for (d, doc) in corpus.docs.iter().enumerate() {
        if state.phi[d].len() != doc.words.len() {
            return Err(Error::Validation(format!(
                "phi shape mismatch at document {d}"
            )));
        }
        total += elbo_doc(
            doc,
            &state.gamma[d],
            &state.phi[d],
            &params.alpha,
            &params.beta,
        )?;
    }
    Ok(total)
}

/// One full E-step: per-document variational parameters, sufficient
/// statistics and the bound. Documents are processed in parallel; the
/// reduction into statistics runs sequentially in document order, so the
/// result is identical for any worker count.
pub fn e_step_corpus(
    corpus: &Corpus,
    params: &ModelParams,
    tol: f64,
    max_iter: usize,
) -> Result<(VariationalState, SufficientStats, f64)> {
    let k = params.n_topics();
    let per_doc: Vec<(Vec<f64>, Vec<Vec<f64>>, f64)> = corpus
        .docs
        .par_iter()
        .enumerate()
        .map(|(d, doc)| {
            let (gamma, phi) = e_step_doc(doc, &params.alpha, &params.beta, tol, max_iter)
                .map_err(|e| Error::Numerical(format!("document {d}: {e}")))?;
            let bound = elbo_doc(doc, &gamma, &phi, &params.alpha, &params.beta)
                .map_err(|e| Error::Numerical(format!("document {d}: {e}")))?;
            Ok((gamma, phi, bound))
        })
        .collect::<Result<_>>()?;

    let mut stats = SufficientStats::zeros(k, params.n_words());
    let mut gamma_all = Vec::with_capacity(corpus.n_docs());
    let mut phi_all = Vec::with_capacity(corpus.n_docs());
    let mut bound = 0.0;
    for (doc, (gamma, phi, b)) in corpus.docs.iter().zip(per_doc) {
        let gamma_sum: f64 = gamma.iter().sum();
        let dig_sum = digamma(gamma_sum)?;
        for i in 0..k {
            stats.alpha_ss[i] += digamma(gamma[i])? - dig_sum;
        }
        for (row, &(w, c)) in phi.iter().zip(&doc.words) {
            for i in 0..k {
                stats.beta_num[i][w] += c as f64 * row[i];
            }
        }
        stats.n_docs += 1;
        bound += b;
        gamma_all.push(gamma);
        phi_all.push(phi);
    }
    Ok((
        VariationalState {
            gamma: gamma_all,
            phi: phi_all,
        },
        stats,
        bound,
    ))
}

/// Maximum-likelihood topic-word update with additive smoothing:
/// beta_kw propto beta_num_kw + eta.
pub fn mstep_beta_mle(stats: &SufficientStats, eta: f64) -> Result<Vec<Vec<f64>>> {
    if eta < 0.0 {
        return Err(Error::Config(format!("eta must be >= 0, got {eta}")));
    }
    let mut beta = Vec::with_capacity(stats.beta_num.len());
    for (k, num) in stats.beta_num.iter().enumerate() {
        let sum: f64 = num.iter().map(|&n| n + eta).sum();
        if sum <= 0.0 {
            return Err(Error::Numerical(format!(
                "topic {k} has no expected counts and eta = 0"
            )));
        }
        beta.push(num.iter().map(|&n| (n + eta) / sum).collect());
    }
    Ok(beta)
}

/// Outcome of the hyperparameter update.
#[derive(Debug, Clone)]
pub struct AlphaUpdate {
    pub alpha: Vec<f64>,
    pub converged: bool,
    /// True when no positive-preserving step was found and the last valid
    /// alpha was returned early.
    pub step_failed: bool,
}

/// Multiply the inverse of the structured Hessian diag(h) + 1 z 1^T by a
/// gradient without forming the matrix.
pub fn structured_inv_hessian_mul(grad: &[f64], h: &[f64], z: f64) -> Vec<f64> {
    let c_num: f64 = grad.iter().zip(h).map(|(&g, &hk)| g / hk).sum();
    let c_den: f64 = 1.0 / z + h.iter().map(|&hk| 1.0 / hk).sum::<f64>();
    let c = c_num / c_den;
    grad.iter().zip(h).map(|(&g, &hk)| (g - c) / hk).collect()
}

/// Objective maximized by the alpha update (the alpha-dependent part of the
/// bound): M (ln G(sum a) - sum ln G(a_k)) + sum (a_k - 1) ss_k.
pub fn alpha_objective(alpha: &[f64], alpha_ss: &[f64], n_docs: usize) -> Result<f64> {
    let m = n_docs as f64;
    let sum: f64 = alpha.iter().sum();
    let mut f = m * ln_gamma(sum)?;
    for (&a, &s) in alpha.iter().zip(alpha_ss) {
        f += -m * ln_gamma(a)? + (a - 1.0) * s;
    }
    Ok(f)
}

pub fn alpha_gradient(alpha: &[f64], alpha_ss: &[f64], n_docs: usize) -> Result<Vec<f64>> {
    let m = n_docs as f64;
    let dig_sum = digamma(alpha.iter().sum())?;
    alpha
        .iter()
        .zip(alpha_ss)
        .map(|(&a, &s)| Ok(m * (dig_sum - digamma(a)?) + s))
        .collect()
}

/// Newton-Raphson on alpha exploiting the diag + rank-one Hessian.
/// Steps are halved (up to 32 times) until alpha stays positive and the
/// objective does not decrease; stops when the largest component change
/// falls below `tol`.
pub fn update_alpha_newton(
    alpha: &[f64],
    alpha_ss: &[f64],
    n_docs: usize,
    tol: f64,
    max_iter: usize,
) -> Result<AlphaUpdate> {
    if alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::Validation("alpha must be strictly positive".into()));
    }
    if alpha_ss.len() != alpha.len() {
        return Err(Error::Validation("alpha stats length mismatch".into()));
    }
    let m = n_docs as f64;
    let mut alpha = alpha.to_vec();
    let mut f = alpha_objective(&alpha, alpha_ss, n_docs)?;
    let mut converged = false;
    let mut step_failed = false;

    for _ in 0..max_iter {
        let grad = alpha_gradient(&alpha, alpha_ss, n_docs)?;
        let mut h = Vec::with_capacity(alpha.len());
        for &a in &alpha {
            h.push(-m * trigamma(a)?);
        }
        let z = m * trigamma(alpha.iter().sum())?;
        let step = structured_inv_hessian_mul(&grad, &h, z);

        let mut damp = 1.0;
        let mut accepted = None;
        for _ in 0..32 {
            let cand: Vec<f64> = alpha
                .iter()
                .zip(&step)
                .map(|(&a, &s)| a - damp * s)
                .collect();
            if cand.iter().all(|&a| a > 0.0) {
                let f_cand = alpha_objective(&cand, alpha_ss, n_docs)?;
                if f_cand >= f - 1e-12 * (1.0 + f.abs()) {
                    accepted = Some((cand, f_cand));
                    break;
                }
            }
            damp *= 0.5;
        }
        match accepted {
            Some((cand, f_cand)) => {
                let max_change = alpha
                    .iter()
                    .zip(&cand)
                    .map(|(&a, &b)| (a - b).abs())
                    .fold(0.0, f64::max);
                alpha = cand;
                f = f_cand;
                if max_change < tol {
                    converged = true;
                    break;
                }
            }
            None => {
                step_failed = true;
                break;
            }
        }
    }
    Ok(AlphaUpdate {
        alpha,
        converged,
        step_failed,
    })
}
