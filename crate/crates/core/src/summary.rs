//! Posterior summaries and model comparison over thinned traces: edge and
//! tie frequencies, thresholded consensus relations, ROC curves against a
//! known truth, co-clustering heatmap data, nested-model Bayes factors by the
//! prior/posterior density ratio at the nesting point, and the
//! variance-penalized expected log pointwise predictive density.

use rand::Rng;
use thiserror::Error;

use crate::mcmc::McmcTrace;
use crate::poset::{PartialOrder, TiedPartialOrder};
use crate::prior::PriorConfig;

#[derive(Debug, Error, PartialEq)]
pub enum SummaryError {
    #[error("trace has {records} records, burn-in of {burn_in} leaves nothing")]
    EmptyTrace { records: usize, burn_in: usize },
    #[error("the reference order has no edges")]
    NoTruthEdges,
    #[error("the nesting event never occurred among the prior draws")]
    ZeroPriorMass,
    #[error("list {0} has no finite log likelihood in any sample")]
    DegenerateColumn(usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("epsilon must lie in [0,1], got {0}")]
    BadEpsilon(f64),
}

/// Posterior relation frequencies over the retained samples: strict
/// dominance and ties tallied separately.
#[derive(Clone, Debug)]
pub struct EdgeProbMatrix {
    n: usize,
    strict: Vec<f64>,
    ties: Vec<f64>,
}

impl EdgeProbMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn strict(&self, i: usize, j: usize) -> f64 {
        self.strict[i * self.n + j]
    }

    pub fn tie(&self, i: usize, j: usize) -> f64 {
        self.ties[i * self.n + j]
    }
}

fn retained(trace: &McmcTrace, burn_in: usize) -> Result<&[crate::mcmc::TraceRecord], SummaryError> {
    if trace.records.len() <= burn_in {
        return Err(SummaryError::EmptyTrace {
            records: trace.records.len(),
            burn_in,
        });
    }
    Ok(&trace.records[burn_in..])
}

/// Relation frequencies among post-burn-in samples.
pub fn edge_probabilities(
    trace: &McmcTrace,
    burn_in: usize,
) -> Result<EdgeProbMatrix, SummaryError> {
    let records = retained(trace, burn_in)?;
    let n = trace.n;
    let mut strict = vec![0f64; n * n];
    let mut ties = vec![0f64; n * n];
    for r in records {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if r.hstar.strictly_dominates(i, j) {
                    strict[i * n + j] += 1.0;
                } else if i < j && r.hstar.tied(i, j) {
                    ties[i * n + j] += 1.0;
                    ties[j * n + i] += 1.0;
                }
            }
        }
    }
    let total = records.len() as f64;
    for v in strict.iter_mut().chain(ties.iter_mut()) {
        *v /= total;
    }
    Ok(EdgeProbMatrix { n, strict, ties })
}

/// Thresholded consensus relation. The raw edge set may violate
/// transitivity; violations are reported, not repaired.
#[derive(Clone, Debug)]
pub struct ConsensusOrder {
    pub n: usize,
    pub epsilon: f64,
    pub tie_threshold: f64,
    pub edges: Vec<(usize, usize)>,
    pub ties: Vec<(usize, usize)>,
    pub transitivity_violations: Vec<(usize, usize, usize)>,
}

pub const DEFAULT_TIE_THRESHOLD: f64 = 0.5;

pub fn consensus(probs: &EdgeProbMatrix, epsilon: f64) -> Result<ConsensusOrder, SummaryError> {
    consensus_with_tie_threshold(probs, epsilon, DEFAULT_TIE_THRESHOLD)
}

pub fn consensus_with_tie_threshold(
    probs: &EdgeProbMatrix,
    epsilon: f64,
    tie_threshold: f64,
) -> Result<ConsensusOrder, SummaryError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(SummaryError::BadEpsilon(epsilon));
    }
    let n = probs.n;
    let mut edges = Vec::new();
    let mut ties = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && consensus_edge(probs, i, j, epsilon) {
                edges.push((i, j));
            }
            if i < j && probs.tie(i, j) > tie_threshold {
                ties.push((i, j));
            }
        }
    }
    let has = |a: usize, b: usize| edges.binary_search(&(a, b)).is_ok();
    let mut violations = Vec::new();
    for &(a, b) in &edges {
        for c in 0..n {
            if c != a && c != b && has(b, c) && !has(a, c) {
                violations.push((a, b, c));
            }
        }
    }
    Ok(ConsensusOrder {
        n,
        epsilon,
        tie_threshold,
        edges,
        ties,
        transitivity_violations: violations,
    })
}

/// An edge enters the consensus when its frequency strictly exceeds epsilon;
/// the zero threshold marks every pair, the complete relation.
fn consensus_edge(probs: &EdgeProbMatrix, i: usize, j: usize, epsilon: f64) -> bool {
    if epsilon == 0.0 {
        return true;
    }
    probs.strict(i, j) > epsilon
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub epsilon: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// True/false positive relation fractions of the thresholded consensus
/// against the closure edges of the tie-collapsed truth. Tied pairs in the
/// truth count as non-edges; posterior ties are reported separately and do
/// not enter these counts.
pub fn roc_curve(
    probs: &EdgeProbMatrix,
    truth: &TiedPartialOrder,
    epsilons: &[f64],
) -> Result<Vec<RocPoint>, SummaryError> {
    let strict = truth.strict_part();
    roc_curve_strict(probs, &strict, epsilons)
}

pub fn roc_curve_strict(
    probs: &EdgeProbMatrix,
    truth: &PartialOrder,
    epsilons: &[f64],
) -> Result<Vec<RocPoint>, SummaryError> {
    let n = truth.n();
    let truth_edges = truth.num_edges();
    if truth_edges == 0 {
        return Err(SummaryError::NoTruthEdges);
    }
    let non_edges = n * (n - 1) - truth_edges;
    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(0.0..=1.0).contains(&eps) {
            return Err(SummaryError::BadEpsilon(eps));
        }
        let mut tp = 0usize;
        let mut fp = 0usize;
        for i in 0..n {
            for j in 0..n {
                if i == j || !consensus_edge(probs, i, j, eps) {
                    continue;
                }
                if truth.dominates(i, j) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        out.push(RocPoint {
            epsilon: eps,
            tpr: tp as f64 / truth_edges as f64,
            fpr: if non_edges == 0 {
                0.0
            } else {
                fp as f64 / non_edges as f64
            },
        });
    }
    Ok(out)
}

/// Frequency with which each pair of actors shares a cluster; symmetric with
/// unit diagonal.
pub fn cocluster_matrix(trace: &McmcTrace, burn_in: usize) -> Result<Vec<Vec<f64>>, SummaryError> {
    let records = retained(trace, burn_in)?;
    let n = trace.n;
    let mut m = vec![vec![0f64; n]; n];
    for r in records {
        for i in 0..n {
            for j in 0..n {
                if r.partition.block_of(i) == r.partition.block_of(j) {
                    m[i][j] += 1.0;
                }
            }
        }
    }
    let total = records.len() as f64;
    for row in &mut m {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(m)
}

/// Bayes factor for the nested fixed-dimension, no-ties model against the
/// full model, estimated as the ratio of the nesting-event frequency under
/// the prior to its frequency under the posterior.
#[derive(Clone, Copy, Debug)]
pub struct BayesFactor {
    pub bf: f64,
    /// Delta-method Monte Carlo standard error (meaningless when infinite).
    pub se: f64,
    pub prior_freq: f64,
    pub posterior_freq: f64,
    /// Posterior frequency was exactly zero; `bf` is infinite.
    pub infinite: bool,
}

/// The nesting event is {C = n and K = k0} with k0 = ceil(n/2) in the
/// intended use; both sample sets are (C, K) pairs.
pub fn savage_dickey_bf(
    prior_draws: &[(usize, usize)],
    posterior_draws: &[(usize, usize)],
    n: usize,
    k0: usize,
) -> Result<BayesFactor, SummaryError> {
    if prior_draws.is_empty() || posterior_draws.is_empty() {
        return Err(SummaryError::TooFewSamples {
            need: 1,
            got: prior_draws.len().min(posterior_draws.len()),
        });
    }
    let hits = |draws: &[(usize, usize)]| {
        draws.iter().filter(|&&(c, k)| c == n && k == k0).count() as f64
    };
    let prior_hits = hits(prior_draws);
    if prior_hits == 0.0 {
        return Err(SummaryError::ZeroPriorMass);
    }
    let prior_freq = prior_hits / prior_draws.len() as f64;
    let post_hits = hits(posterior_draws);
    let posterior_freq = post_hits / posterior_draws.len() as f64;
    if post_hits == 0.0 {
        return Ok(BayesFactor {
            bf: f64::INFINITY,
            se: f64::INFINITY,
            prior_freq,
            posterior_freq,
            infinite: true,
        });
    }
    let bf = prior_freq / posterior_freq;
    let rel_var = (1.0 - prior_freq) / prior_hits + (1.0 - posterior_freq) / post_hits;
    Ok(BayesFactor {
        bf,
        se: bf * rel_var.sqrt(),
        prior_freq,
        posterior_freq,
        infinite: false,
    })
}

/// (C, K) pairs from the generative prior, the reference sample for the
/// Bayes factor.
pub fn sample_prior_ck<R: Rng + ?Sized>(
    n: usize,
    config: &PriorConfig,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>, SummaryError> {
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let k = config.sample_k(rng);
        let c = config
            .sample_partition(n, rng)
            .map_err(|_| SummaryError::TooFewSamples { need: 1, got: 0 })?
            .num_blocks();
        out.push((c, k));
    }
    Ok(out)
}

/// (C, K) pairs from the post-burn-in trace records.
pub fn trace_ck(trace: &McmcTrace, burn_in: usize) -> Result<Vec<(usize, usize)>, SummaryError> {
    Ok(retained(trace, burn_in)?
        .iter()
        .map(|r| (r.c, r.k))
        .collect())
}

#[derive(Clone, Debug)]
pub struct Waic {
    pub elpd: f64,
    pub se: f64,
    /// Per-list contributions `lpd_i - p_i`.
    pub pointwise: Vec<f64>,
}

/// Expected log pointwise predictive density with the variance penalty:
/// `elpd_i = ln(mean_s exp(ll_si)) - var_s(ll_si)`, summed over lists, with
/// the usual sqrt(N var) standard error.
pub fn elpd_waic(pointwise: &[Vec<f64>]) -> Result<Waic, SummaryError> {
    let s = pointwise.len();
    if s < 2 {
        return Err(SummaryError::TooFewSamples { need: 2, got: s });
    }
    let n = pointwise[0].len();
    let mut per_list = Vec::with_capacity(n);
    for i in 0..n {
        let col: Vec<f64> = pointwise.iter().map(|row| row[i]).collect();
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(SummaryError::DegenerateColumn(i));
        }
        let lpd = max + (col.iter().map(|x| (x - max).exp()).sum::<f64>() / s as f64).ln();
        let mean = col.iter().sum::<f64>() / s as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s as f64 - 1.0);
        per_list.push(lpd - var);
    }
    let elpd: f64 = per_list.iter().sum();
    let se = if n > 1 {
        let mean = elpd / n as f64;
        let var = per_list.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (n as f64 * var).sqrt()
    } else {
        0.0
    };
    Ok(Waic {
        elpd,
        se,
        pointwise: per_list,
    })
}

/// Posterior depth masses over 1..=n.
pub fn depth_histogram(trace: &McmcTrace, burn_in: usize) -> Result<Vec<f64>, SummaryError> {
    let records = retained(trace, burn_in)?;
    let mut hist = vec![0f64; trace.n];
    for r in records {
        hist[r.depth - 1] += 1.0;
    }
    for v in hist.iter_mut() {
        *v /= records.len() as f64;
    }
    Ok(hist)
}
