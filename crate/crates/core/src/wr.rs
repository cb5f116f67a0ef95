//! Graph-regularized objective and the EM driver.
//!
//! The fit maximizes O = w_L * L - w_R * R, where L is the variational
//! bound and R penalizes topic-word probability differences across graph
//! edges. The topic-word M-step is generalized: starting from the
//! maximum-likelihood solution it applies neighbor-smoothing steps and
//! keeps the last candidate that did not lower O (with the per-document
//! parameters held fixed).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::graph::WordGraph;
use crate::lda::{
    e_step_corpus, mstep_beta_mle, update_alpha_newton, ModelParams, SufficientStats,
    VariationalState,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub n_topics: usize,
    /// Tradeoff in [0, 1]: O = lambda * L - (1 - lambda) * R.
    pub lambda: f64,
    /// Optional raw weight pair (w_L, w_R) overriding `lambda`, for sweeps
    /// where the loss weight exceeds 1.
    pub raw_weights: Option<(f64, f64)>,
    /// Smoothing mix in [0, 1]: 1 keeps beta, 0 replaces it by the
    /// neighbor average.
    pub rho: f64,
    /// Additive pseudocount on expected topic-word counts.
    pub eta: f64,
    /// E-step stop: mean absolute change in gamma.
    pub e_tol: f64,
    /// EM stop: relative change in the objective.
    pub em_tol: f64,
    pub max_e_iter: usize,
    pub max_em_iter: usize,
    pub max_smooth_iter: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_topics: 10,
            lambda: 0.5,
            raw_weights: None,
            rho: 0.5,
            eta: 1e-8,
            e_tol: 1e-5,
            em_tol: 1e-6,
            max_e_iter: 100,
            max_em_iter: 200,
            max_smooth_iter: 20,
            seed: 42,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_topics < 1 {
            return Err(Error::Config("n_topics must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "rho must be in [0, 1], got {}",
                self.rho
            )));
        }
        if self.eta < 0.0 {
            return Err(Error::Config("eta must be >= 0".into()));
        }
        if let Some((wl, wr)) = self.raw_weights {
            if !(wl.is_finite() && wr.is_finite()) || wl < 0.0 || wr < 0.0 || wl + wr == 0.0 {
                return Err(Error::Config(format!(
                    "raw weights must be nonnegative and not both zero, got ({wl}, {wr})"
                )));
            }
        }
        if self.max_e_iter < 1 || self.max_em_iter < 1 || self.max_smooth_iter < 1 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        if self.e_tol < 0.0 || self.em_tol < 0.0 {
            return Err(Error::Config("tolerances must be >= 0".into()));
        }
        Ok(())
    }

    /// Effective (w_L, w_R).
    pub fn weights(&self) -> (f64, f64) {
        self.raw_weights.unwrap_or((self.lambda, 1.0 - self.lambda))
    }
}

/// Bookkeeping for one generalized M-step. Objective values are the
/// beta-dependent part of O with the per-document parameters fixed.
#[derive(Debug, Clone, Copy)]
pub struct MstepRecord {
    pub objective_initial: f64,
    pub objective_accepted: f64,
    pub loss_initial: f64,
    pub loss_accepted: f64,
    pub smooth_steps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iter: usize,
    /// Variational bound L.
    pub bound: f64,
    /// Graph loss R.
    pub loss: f64,
    /// Combined objective O.
    pub objective: f64,
    /// Relative change in O from the previous iteration.
    pub delta: f64,
    pub mstep: Option<MstepRecord>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub state: VariationalState,
    pub trace: Vec<TraceRow>,
}

/// Graph loss R: sum over stored edges of kappa * sum_k (beta_kw - beta_kw')^2.
/// Equals the half double-sum over ordered pairs by symmetry.
pub fn loss_r(beta: &[Vec<f64>], graph: &WordGraph) -> Result<f64> {
    let v = beta.first().map_or(0, Vec::len);
    if graph.n_words() != v {
        return Err(Error::Validation(format!(
            "graph over {} words, beta over {v}",
            graph.n_words()
        )));
    }
    let mut total = 0.0;
    for &(a, b, w) in graph.edges() {
        let mut sq = 0.0;
        for row in beta {
            let d = row[a] - row[b];
            sq += d * d;
        }
        total += w * sq;
    }
    Ok(total)
}

/// O = lambda * L - (1 - lambda) * R.
pub fn objective_o(bound: f64, loss: f64, lambda: f64) -> f64 {
    lambda * bound - (1.0 - lambda) * loss
}

/// One synchronous smoothing step: mix each entry with the weighted
/// average of its graph neighbors, then renormalize every row.
/// Words without edges are left unchanged.
pub fn smooth_beta_step(beta: &[Vec<f64>], graph: &WordGraph, rho: f64) -> Vec<Vec<f64>> {
    if rho == 1.0 {
        return beta.to_vec();
    }
    let v = beta.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(beta.len());
    for row in beta {
        let mut new_row = vec![0.0; v];
        for w in 0..v {
            let deg = graph.degree(w);
            if deg > 0.0 {
                let avg: f64 = graph
                    .neighbors(w)
                    .iter()
                    .map(|&(n, kappa)| kappa * row[n])
                    .sum::<f64>()
                    / deg;
                new_row[w] = rho * row[w] + (1.0 - rho) * avg;
            } else {
                new_row[w] = row[w];
            }
        }
        // The neighbor average preserves row sums only for special graphs;
        // renormalize to stay on the simplex.
        let sum: f64 = new_row.iter().sum();
        for x in &mut new_row {
            *x /= sum;
        }
        out.push(new_row);
    }
    out
}

/// Beta-dependent part of O with the per-document parameters fixed:
/// w_L * sum (counts + eta) ln beta - w_R * R(beta).
fn beta_objective(
    beta: &[Vec<f64>],
    stats: &SufficientStats,
    eta: f64,
    weights: (f64, f64),
    graph: &WordGraph,
) -> Result<f64> {
    let (wl, wr) = weights;
    let mut lik = 0.0;
    for (num_row, beta_row) in stats.beta_num.iter().zip(beta) {
        for (&n, &p) in num_row.iter().zip(beta_row) {
            let c = n + eta;
            if c > 0.0 {
                if p <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                lik += c * p.ln();
            }
        }
    }
    Ok(wl * lik - wr * loss_r(beta, graph)?)
}

/// Generalized topic-word update: start at the smoothed MLE, apply
/// smoothing steps while the objective does not drop, and never return a
/// beta worse than either the MLE or the previous iteration's beta.
pub fn mstep_beta_wr(
    stats: &SufficientStats,
    graph: &WordGraph,
    config: &FitConfig,
    prev_beta: Option<&[Vec<f64>]>,
) -> Result<(Vec<Vec<f64>>, MstepRecord)> {
    let weights = config.weights();
    let beta0 = mstep_beta_mle(stats, config.eta)?;
    let obj0 = beta_objective(&beta0, stats, config.eta, weights, graph)?;
    let loss0 = loss_r(&beta0, graph)?;

    let mut current = beta0;
    let mut obj_cur = obj0;
    let mut steps = 0;

    if !graph.is_empty() && weights.1 > 0.0 {
        for t in 1..=config.max_smooth_iter {
            let candidate = smooth_beta_step(&current, graph, config.rho);
            let obj_cand = beta_objective(&candidate, stats, config.eta, weights, graph)?;
            if obj_cand < obj_cur {
                break;
            }
            let moved = candidate
                .iter()
                .zip(&current)
                .any(|(a, b)| a.iter().zip(b).any(|(&x, &y)| (x - y).abs() > 1e-15));
            current = candidate;
            obj_cur = obj_cand;
            steps = t;
            if !moved {
                break;
            }
        }
    }

    // Acceptance rule: the returned beta must not lower O relative to the
    // previous EM iterate either, or the whole objective trace can dip when
    // the smoothed MLE has a worse graph loss than the incumbent.
    if let Some(prev) = prev_beta {
        let obj_prev = beta_objective(prev, stats, config.eta, weights, graph)?;
        if obj_prev > obj_cur {
            current = prev.to_vec();
            obj_cur = obj_prev;
        }
    }

    let record = MstepRecord {
        objective_initial: obj0,
        objective_accepted: obj_cur,
        loss_initial: loss0,
        loss_accepted: loss_r(&current, graph)?,
        smooth_steps: steps,
    };
    Ok((current, record))
}

fn init_beta(k: usize, v: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = Vec::with_capacity(k);
    for _ in 0..k {
        let mut row: Vec<f64> = (0..v).map(|_| 1.0 + rng.gen::<f64>()).collect();
        let sum: f64 = row.iter().sum();
        for x in &mut row {
            *x /= sum;
        }
        beta.push(row);
    }
    beta
}

fn run_em(
    corpus: &Corpus,
    graph: &WordGraph,
    config: &FitConfig,
    standard_mle: bool,
) -> Result<FitResult> {
    config.validate()?;
    corpus.validate()?;
    if corpus.docs.is_empty() {
        return Err(Error::Validation("corpus has no documents".into()));
    }
    let v = corpus.n_words();
    if graph.n_words() != v {
        return Err(Error::Validation(format!(
            "graph over {} words, corpus vocabulary has {v}",
            graph.n_words()
        )));
    }
    let k = config.n_topics;
    let weights = if standard_mle {
        (1.0, 0.0)
    } else {
        config.weights()
    };

    let mut params = ModelParams {
        alpha: vec![1.0 / k as f64; k],
        beta: init_beta(k, v, config.seed),
    };
    let mut state = VariationalState {
        gamma: Vec::new(),
        phi: Vec::new(),
    };
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut prev_obj: Option<f64> = None;

    for iter in 0..config.max_em_iter {
        let (new_state, stats, bound) =
            e_step_corpus(corpus, &params, config.e_tol, config.max_e_iter)
                .map_err(|e| Error::Numerical(format!("EM iteration {iter}: {e}")))?;
        state = new_state;
        let loss = loss_r(&params.beta, graph)?;
        let objective = weights.0 * bound - weights.1 * loss;
        if !objective.is_finite() {
            return Err(Error::Numerical(format!(
                "EM iteration {iter}: non-finite objective"
            )));
        }
        let delta = match prev_obj {
            Some(p) => (objective - p).abs() / p.abs().max(1e-12),
            None => f64::INFINITY,
        };
        prev_obj = Some(objective);

        let converged = delta < config.em_tol;
        let mstep = if converged {
            None
        } else {
            let (beta, record) = if standard_mle {
                (mstep_beta_mle(&stats, config.eta)?, None)
            } else {
                let (b, r) = mstep_beta_wr(&stats, graph, config, Some(&params.beta))?;
                (b, Some(r))
            };
            params.beta = beta;
            let update =
                update_alpha_newton(&params.alpha, &stats.alpha_ss, stats.n_docs, 1e-8, 100)
                    .map_err(|e| Error::Numerical(format!("EM iteration {iter}: {e}")))?;
            params.alpha = update.alpha;
            record
        };
        trace.push(TraceRow {
            iter,
            bound,
            loss,
            objective,
            delta,
            mstep,
        });
        if converged {
            break;
        }
    }

    Ok(FitResult {
        params,
        state,
        trace,
    })
}

/// Variational EM for the graph-regularized model. An empty graph (or
/// lambda = 1) reduces to the standard model.
pub fn fit(corpus: &Corpus, graph: &WordGraph, config: &FitConfig) -> Result<FitResult> {
    run_em(corpus, graph, config, false)
}

/// Standard LDA: plain maximum-likelihood M-step, no graph terms.
pub fn fit_lda(corpus: &Corpus, config: &FitConfig) -> Result<FitResult> {
    let graph = WordGraph::empty(corpus.n_words());
    run_em(corpus, &graph, config, true)
}
