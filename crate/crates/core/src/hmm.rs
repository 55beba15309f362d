//! Multichannel categorical hidden Markov models: scaled forward/backward
//! inference, Baum-Welch estimation with seeded random restarts, BIC-based
//! state-count selection, and Viterbi decoding.
//!
//! Channels emit conditionally independently given the hidden state; the
//! per-position emission probability is the product over observed channels
//! of the state's probability for the observed code. Missing channels
//! contribute factor 1 (marginalized out), so an all-missing position is
//! emission-free but still participates in the transition chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::scheme::{CodingScheme, MultichannelSequence};
use crate::{Error, Result};

/// Model parameters: initial distribution, transition matrix, and one
/// emission table per channel (`emission[c][s][k]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<Vec<f64>>>,
}

impl HmmModel {
    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn n_channels(&self) -> usize {
        self.emission.len()
    }

    /// Checks stochastic rows (within 1e-9) and dimension consistency.
    pub fn validate(&self) -> Result<()> {
        let s = self.n_states();
        if s == 0 {
            return Err(Error::Validation("model has no states".into()));
        }
        let row_ok = |row: &[f64]| {
            row.iter().all(|&p| (0.0..=1.0 + 1e-9).contains(&p))
                && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        };
        if !row_ok(&self.initial) {
            return Err(Error::Validation("initial distribution is not stochastic".into()));
        }
        if self.transition.len() != s || self.transition.iter().any(|r| r.len() != s || !row_ok(r)) {
            return Err(Error::Validation("transition matrix is not stochastic".into()));
        }
        for (c, table) in self.emission.iter().enumerate() {
            if table.len() != s || table.iter().any(|r| !row_ok(r)) {
                return Err(Error::Validation(format!(
                    "emission table of channel {c} is not stochastic"
                )));
            }
        }
        Ok(())
    }

    /// Free-parameter count: (S-1) + S(S-1) + S * sum_c (m_c - 1).
    pub fn n_parameters(&self) -> usize {
        let s = self.n_states();
        (s - 1)
            + s * (s - 1)
            + s * self
                .emission
                .iter()
                .map(|table| table[0].len() - 1)
                .sum::<usize>()
    }

    /// Emission probability of the (possibly partly missing) observation at
    /// position `t` of `seq`, for state `state`.
    fn emission_prob(&self, seq: &MultichannelSequence, t: usize, state: usize) -> f64 {
        let mut p = 1.0;
        for (c, ch) in seq.states().iter().enumerate() {
            if let Some(k) = ch[t] {
                p *= self.emission[c][state][k as usize];
            }
        }
        p
    }
}

/// Sum over sequences of log P(observations | model), scaled forward pass.
///
/// Returns negative infinity when some observation has zero probability
/// under every state.
pub fn log_likelihood(model: &HmmModel, seqs: &[MultichannelSequence]) -> f64 {
    seqs.iter().map(|seq| forward_log_likelihood(model, seq)).sum()
}

fn forward_log_likelihood(model: &HmmModel, seq: &MultichannelSequence) -> f64 {
    let s = model.n_states();
    let t_len = seq.len();
    if t_len == 0 {
        return 0.0;
    }
    let mut alpha = vec![0.0; s];
    let mut next = vec![0.0; s];
    let mut log_l = 0.0;
    for t in 0..t_len {
        if t == 0 {
            for (x, alpha_x) in alpha.iter_mut().enumerate() {
                *alpha_x = model.initial[x] * model.emission_prob(seq, 0, x);
            }
        } else {
            for x in 0..s {
                let mut acc = 0.0;
                for (y, alpha_y) in alpha.iter().enumerate() {
                    acc += alpha_y * model.transition[y][x];
                }
                next[x] = acc * model.emission_prob(seq, t, x);
            }
            std::mem::swap(&mut alpha, &mut next);
        }
        let scale: f64 = alpha.iter().sum();
        if scale <= 0.0 {
            return f64::NEG_INFINITY;
        }
        for a in &mut alpha {
            *a /= scale;
        }
        log_l += scale.ln();
    }
    log_l
}

/// Knobs for Baum-Welch estimation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EmOptions {
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { restarts: 100, seed: 0, tol: 1e-8, max_iter: 1000 }
    }
}

/// Outcome of one (multi-restart) fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub model: HmmModel,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n_parameters: usize,
    /// BIC sample size: total observed positions across training sequences.
    pub n_obs_positions: usize,
    /// Raw code tokens (non-missing channel states), reported alongside.
    pub n_obs_codes: usize,
    pub restarts_run: usize,
    pub best_restart_seed: u64,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after each EM iteration of the winning restart
    /// (non-decreasing up to numerical slack).
    pub loglik_history: Vec<f64>,
}

/// One row of the BIC selection table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BicRow {
    pub states: usize,
    pub log_likelihood: f64,
    pub n_parameters: usize,
    pub bic: f64,
    pub converged: bool,
}

/// Fits an `n_states` model by Baum-Welch over seeded random restarts and
/// keeps the highest-likelihood fit (ties: lowest restart index).
pub fn em_fit(
    seqs: &[MultichannelSequence],
    n_states: usize,
    scheme: &CodingScheme,
    opts: &EmOptions,
) -> Result<FitReport> {
    if seqs.is_empty() {
        return Err(Error::Validation("cannot fit a model to zero sequences".into()));
    }
    if n_states == 0 {
        return Err(Error::Validation("need at least one state".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::Validation("need at least one restart".into()));
    }

    let alphabet_sizes: Vec<usize> =
        scheme.channels().iter().map(|c| c.codes.len()).collect();

    // restarts are independent tasks; the final reduction is ordered, so
    // the result does not depend on the worker count
    let runs: Vec<(f64, RestartOutcome)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let restart_seed = opts.seed.wrapping_add(r as u64);
            let init = random_model(n_states, &alphabet_sizes, restart_seed);
            let outcome = baum_welch(init, seqs, opts.tol, opts.max_iter);
            (outcome.log_likelihood, outcome)
        })
        .collect();
    let (best_index, best) = runs
        .into_iter()
        .enumerate()
        .max_by(|(i, (la, _)), (j, (lb, _))| {
            la.partial_cmp(lb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(j.cmp(i)) // ties: earlier restart wins
        })
        .map(|(i, (_, o))| (i, o))
        .expect("at least one restart");

    let n_obs_positions: usize = seqs.iter().map(MultichannelSequence::len).sum();
    let n_obs_codes: usize = seqs.iter().map(MultichannelSequence::n_observed).sum();
    let n_parameters = best.model.n_parameters();
    let bic = -2.0 * best.log_likelihood + n_parameters as f64 * (n_obs_positions as f64).ln();
    Ok(FitReport {
        model: best.model,
        log_likelihood: best.log_likelihood,
        bic,
        n_parameters,
        n_obs_positions,
        n_obs_codes,
        restarts_run: opts.restarts,
        best_restart_seed: opts.seed.wrapping_add(best_index as u64),
        converged: best.converged,
        iterations: best.iterations,
        loglik_history: best.history,
    })
}

struct RestartOutcome {
    model: HmmModel,
    log_likelihood: f64,
    converged: bool,
    iterations: usize,
    history: Vec<f64>,
}

/// Symmetric Dirichlet(1) rows from a seeded generator.
fn random_model(n_states: usize, alphabet_sizes: &[usize], seed: u64) -> HmmModel {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut row = |len: usize| -> Vec<f64> {
        let draws: Vec<f64> = (0..len)
            .map(|_| {
                let u: f64 = rng.random();
                -(1.0 - u).ln().max(f64::MIN_POSITIVE.ln()) // Exp(1), strictly positive
            })
            .map(|e| e.max(1e-12))
            .collect();
        let sum: f64 = draws.iter().sum();
        draws.iter().map(|d| d / sum).collect()
    };
    HmmModel {
        initial: row(n_states),
        transition: (0..n_states).map(|_| row(n_states)).collect(),
        emission: alphabet_sizes
            .iter()
            .map(|&m| (0..n_states).map(|_| row(m)).collect())
            .collect(),
    }
}

/// Scaled forward-backward EM until the relative log-likelihood improvement
/// drops below `tol` or `max_iter` is reached.
fn baum_welch(
    mut model: HmmModel,
    seqs: &[MultichannelSequence],
    tol: f64,
    max_iter: usize,
) -> RestartOutcome {
    let mut history = Vec::new();
    let mut converged = false;
    let mut prev = f64::NEG_INFINITY;
    let mut iterations = 0;

    for iter in 0..max_iter {
        let (updated, ll) = em_step(&model, seqs);
        history.push(ll);
        iterations = iter + 1;
        if ll.is_infinite() {
            // impossible data under this start; keep the model as-is
            break;
        }
        if prev.is_finite() {
            let improvement = ll - prev;
            if improvement.abs() / ll.abs().max(1.0) < tol {
                converged = true;
                model = updated;
                break;
            }
        }
        prev = ll;
        model = updated;
    }
    // history entries are likelihoods of the pre-update models; close with
    // the final model so the reported value matches the returned parameters
    let final_ll = log_likelihood(&model, seqs);
    history.push(final_ll);
    RestartOutcome { model, log_likelihood: final_ll, converged, iterations, history }
}

/// One E+M step. Returns the updated model and the log-likelihood of the
/// *input* model.
fn em_step(model: &HmmModel, seqs: &[MultichannelSequence]) -> (HmmModel, f64) {
    let s = model.n_states();
    let n_channels = model.n_channels();
    let mut log_l = 0.0;

    let mut initial_acc = vec![0.0; s];
    let mut trans_num = vec![0.0; s * s];
    let mut trans_den = vec![0.0; s];
    let mut emit_num: Vec<Vec<f64>> = model
        .emission
        .iter()
        .map(|table| vec![0.0; s * table[0].len()])
        .collect();
    let mut emit_den = vec![0.0; s * n_channels];
    let mut n_seqs_used = 0usize;

    for seq in seqs {
        let t_len = seq.len();
        if t_len == 0 {
            continue;
        }
        n_seqs_used += 1;

        // cache emission products
        let mut b = vec![0.0; t_len * s];
        for t in 0..t_len {
            for x in 0..s {
                b[t * s + x] = model.emission_prob(seq, t, x);
            }
        }

        // scaled forward
        let mut alpha = vec![0.0; t_len * s];
        let mut scale = vec![0.0; t_len];
        for x in 0..s {
            alpha[x] = model.initial[x] * b[x];
        }
        scale[0] = alpha[..s].iter().sum();
        if scale[0] <= 0.0 {
            return (model.clone(), f64::NEG_INFINITY);
        }
        for x in 0..s {
            alpha[x] /= scale[0];
        }
        for t in 1..t_len {
            for x in 0..s {
                let mut acc = 0.0;
                for y in 0..s {
                    acc += alpha[(t - 1) * s + y] * model.transition[y][x];
                }
                alpha[t * s + x] = acc * b[t * s + x];
            }
            let c: f64 = alpha[t * s..(t + 1) * s].iter().sum();
            if c <= 0.0 {
                return (model.clone(), f64::NEG_INFINITY);
            }
            scale[t] = c;
            for x in 0..s {
                alpha[t * s + x] /= c;
            }
        }
        log_l += scale.iter().map(|c| c.ln()).sum::<f64>();

        // scaled backward
        let mut beta = vec![0.0; t_len * s];
        for x in 0..s {
            beta[(t_len - 1) * s + x] = 1.0;
        }
        for t in (0..t_len - 1).rev() {
            for x in 0..s {
                let mut acc = 0.0;
                for y in 0..s {
                    acc += model.transition[x][y] * b[(t + 1) * s + y] * beta[(t + 1) * s + y];
                }
                beta[t * s + x] = acc / scale[t + 1];
            }
        }

        // occupancy and transition expectations
        for t in 0..t_len {
            for x in 0..s {
                let gamma = alpha[t * s + x] * beta[t * s + x];
                if t == 0 {
                    initial_acc[x] += gamma;
                }
                if t + 1 < t_len {
                    trans_den[x] += gamma;
                }
                for c in 0..n_channels {
                    if let Some(k) = seq.states()[c][t] {
                        emit_num[c][x * model.emission[c][0].len() + k as usize] += gamma;
                        emit_den[x * n_channels + c] += gamma;
                    }
                }
            }
            if t + 1 < t_len {
                for x in 0..s {
                    let ax = alpha[t * s + x];
                    for y in 0..s {
                        trans_num[x * s + y] += ax
                            * model.transition[x][y]
                            * b[(t + 1) * s + y]
                            * beta[(t + 1) * s + y]
                            / scale[t + 1];
                    }
                }
            }
        }
    }

    if n_seqs_used == 0 {
        return (model.clone(), 0.0);
    }

    // closed-form M-step; rows with zero expected mass keep their old values
    let mut updated = model.clone();
    for x in 0..s {
        updated.initial[x] = initial_acc[x] / n_seqs_used as f64;
    }
    for x in 0..s {
        if trans_den[x] > 0.0 {
            for y in 0..s {
                updated.transition[x][y] = trans_num[x * s + y] / trans_den[x];
            }
        }
    }
    for c in 0..n_channels {
        let m = model.emission[c][0].len();
        for x in 0..s {
            let den = emit_den[x * n_channels + c];
            if den > 0.0 {
                for k in 0..m {
                    updated.emission[c][x][k] = emit_num[c][x * m + k] / den;
                }
            }
        }
    }
    (updated, log_l)
}

/// Fits every state count in `s_min..=s_max` and returns the BIC-minimizing
/// fit (ties: smaller S) together with the full table.
pub fn select_states(
    seqs: &[MultichannelSequence],
    s_min: usize,
    s_max: usize,
    scheme: &CodingScheme,
    opts: &EmOptions,
) -> Result<(FitReport, Vec<BicRow>)> {
    if s_min == 0 || s_min > s_max {
        return Err(Error::Validation(format!("bad state range {s_min}..={s_max}")));
    }
    let fits: Vec<FitReport> = (s_min..=s_max)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| em_fit(seqs, s, scheme, opts))
        .collect::<Result<_>>()?;
    let table: Vec<BicRow> = fits
        .iter()
        .map(|f| BicRow {
            states: f.model.n_states(),
            log_likelihood: f.log_likelihood,
            n_parameters: f.n_parameters,
            bic: f.bic,
            converged: f.converged,
        })
        .collect();
    let best = fits
        .into_iter()
        .reduce(|best, cand| if cand.bic < best.bic { cand } else { best })
        .expect("non-empty range");
    Ok((best, table))
}

/// Most probable state path and its log-probability, log-space Viterbi.
/// Ties resolve to the lowest state index at each backtrack step.
pub fn viterbi(model: &HmmModel, seq: &MultichannelSequence) -> Result<(Vec<usize>, f64)> {
    let s = model.n_states();
    let t_len = seq.len();
    if t_len == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };

    let mut delta = vec![f64::NEG_INFINITY; t_len * s];
    let mut back = vec![0usize; t_len * s];
    for x in 0..s {
        delta[x] = ln(model.initial[x]) + ln(model.emission_prob(seq, 0, x));
    }
    for t in 1..t_len {
        for x in 0..s {
            let mut best_y = 0;
            let mut best_v = f64::NEG_INFINITY;
            for y in 0..s {
                let v = delta[(t - 1) * s + y] + ln(model.transition[y][x]);
                if v > best_v {
                    best_v = v;
                    best_y = y;
                }
            }
            delta[t * s + x] = best_v + ln(model.emission_prob(seq, t, x));
            back[t * s + x] = best_y;
        }
    }

    let mut end = 0;
    let mut best = f64::NEG_INFINITY;
    for x in 0..s {
        let v = delta[(t_len - 1) * s + x];
        if v > best {
            best = v;
            end = x;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Computation("all state paths have probability zero".into()));
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = end;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t * s + path[t]];
    }
    Ok((path, best))
}
