//! Metropolis-within-Gibbs sampler over (Z*, S, K, rho, theta or p):
//! reversible-jump moves on the latent column dimension, likelihood-weighted
//! reseating of one actor per sweep, entry-wise random walks on the latent
//! rows, a multiplicative proposal on 1 - rho, and random-walk updates of the
//! noise parameter. Produces thinned traces with per-move acceptance
//! counters.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::obs::{self, NoiseParams, ObsError, ObservationSet};
use crate::poset::{PartialOrder, Partition, TiedPartialOrder};
use crate::prior::{self, LatentMatrix, PriorConfig, PriorError};

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("could not find a finite-likelihood initial state in {0} tries")]
    InitFailed(usize),
    #[error(transparent)]
    Obs(#[from] ObsError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("series of length {0} is too short for an effective sample size")]
    SeriesTooShort(usize),
}

/// Which observation model the chain targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    NoiseFree,
    QueueJump,
    Mallows,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::NoiseFree => "noisefree",
            ModelTag::QueueJump => "qj",
            ModelTag::Mallows => "mallows",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    /// Number of full sweeps.
    pub iterations: usize,
    /// Record every `thin` sweeps; `default_thin(n)` gives 2n.
    pub thin: usize,
    /// Records dropped by summaries, not by the chain itself.
    pub burn_in_records: usize,
    pub seed: u64,
    pub model: ModelTag,
    pub prior: PriorConfig,
    /// The 1 - rho multiplier is drawn from U(w_rho, 1/w_rho).
    pub w_rho: f64,
    /// Random-walk standard deviation for theta.
    pub theta_step: f64,
    /// Logit-scale random-walk standard deviation for p.
    pub p_step: f64,
}

impl McmcConfig {
    pub fn new(model: ModelTag, n: usize) -> Self {
        McmcConfig {
            iterations: 100_000,
            thin: Self::default_thin(n),
            burn_in_records: 500,
            seed: 0,
            model,
            prior: PriorConfig::default(),
            w_rho: 0.9,
            theta_step: 0.5,
            p_step: 1.0,
        }
    }

    pub fn default_thin(n: usize) -> usize {
        (2 * n).max(1)
    }

    pub fn validate(&self) -> Result<(), McmcError> {
        self.prior.validate()?;
        if self.thin == 0 {
            return Err(McmcError::BadConfig("thin must be positive".into()));
        }
        if !(self.w_rho > 0.0 && self.w_rho < 1.0) {
            return Err(McmcError::BadConfig("w_rho must lie in (0,1)".into()));
        }
        if !(self.theta_step > 0.0 && self.p_step > 0.0) {
            return Err(McmcError::BadConfig("step sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Full sampler state with the derived caches.
#[derive(Clone, Debug)]
pub struct McmcState {
    pub partition: Partition,
    pub latent: LatentMatrix,
    pub noise: NoiseParams,
    pub hstar: TiedPartialOrder,
    pub strict: PartialOrder,
    pub pointwise: Vec<f64>,
    pub total_loglik: f64,
}

impl McmcState {
    pub fn k(&self) -> usize {
        self.latent.k()
    }

    pub fn num_clusters(&self) -> usize {
        self.partition.num_blocks()
    }

    /// Recomputes the caches from scratch and checks they match.
    pub fn verify_coherence(&self, data: &ObservationSet) -> bool {
        let rebuilt = prior::latent_to_poset(&self.partition, &self.latent).unwrap();
        if rebuilt != self.hstar {
            return false;
        }
        let (total, pointwise) =
            obs::dataset_loglik(data, &self.hstar, &self.noise).unwrap();
        pointwise == self.pointwise && (total - self.total_loglik).abs() <= 1e-9
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    fn tally(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub k: MoveStats,
    pub partition: MoveStats,
    pub z: MoveStats,
    pub rho: MoveStats,
    pub noise: MoveStats,
}

#[derive(Clone, Debug)]
pub struct TraceRecord {
    pub iteration: usize,
    pub total_loglik: f64,
    pub pointwise: Vec<f64>,
    pub k: usize,
    pub c: usize,
    pub rho: f64,
    /// theta or p depending on the model; NaN for the noise-free model.
    pub noise_value: f64,
    pub depth: usize,
    pub hstar: TiedPartialOrder,
    pub partition: Partition,
}

#[derive(Clone, Debug)]
pub struct McmcTrace {
    pub n: usize,
    pub model: ModelTag,
    pub records: Vec<TraceRecord>,
    pub stats: AcceptanceStats,
}

impl McmcTrace {
    pub fn series<F: Fn(&TraceRecord) -> f64>(&self, f: F) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

fn initial_noise<R: Rng + ?Sized>(
    model: ModelTag,
    prior: &PriorConfig,
    rng: &mut R,
) -> NoiseParams {
    match model {
        ModelTag::NoiseFree => NoiseParams::NoiseFree,
        ModelTag::QueueJump => NoiseParams::QueueJump {
            p: prior.sample_p(rng).clamp(1e-12, 1.0 - 1e-12),
        },
        ModelTag::Mallows => NoiseParams::Mallows {
            theta: prior.sample_theta(rng).max(1e-12),
        },
    }
}

const INIT_TRIES: usize = 10_000;

/// Draws every component from its prior and caches the order and the
/// likelihood, retrying until the likelihood is finite (only the noise-free
/// model can reject).
pub fn init_state<R: Rng + ?Sized>(
    data: &ObservationSet,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<McmcState, McmcError> {
    config.validate()?;
    if data.n() == 0 {
        return Err(McmcError::BadConfig("actor set is empty".into()));
    }
    for _ in 0..INIT_TRIES {
        let draw = prior::sample_prior_poset(data.n(), &config.prior, rng)?;
        let noise = initial_noise(config.model, &config.prior, rng);
        let strict = draw.order.strict_part();
        let (total, pointwise) = obs::dataset_loglik_strict(data, &strict, &noise)?;
        if total.is_finite() {
            return Ok(McmcState {
                partition: draw.partition,
                latent: draw.latent,
                noise,
                hstar: draw.order,
                strict,
                pointwise,
                total_loglik: total,
            });
        }
    }
    Err(McmcError::InitFailed(INIT_TRIES))
}

/// Per-list evaluation that reuses cached values when a list's suborder is
/// unchanged; only relations among the list's members matter.
fn eval_reuse(
    data: &ObservationSet,
    new_strict: &PartialOrder,
    noise: &NoiseParams,
    old_strict: &PartialOrder,
    old_pointwise: &[f64],
) -> Result<(f64, Vec<f64>), ObsError> {
    let mut pointwise = Vec::with_capacity(data.len());
    // Repeated lists are common in witness data; evaluate each distinct
    // list once per call.
    let mut dedup: std::collections::HashMap<&crate::poset::RankList, f64> =
        std::collections::HashMap::new();
    for (i, y) in data.lists().iter().enumerate() {
        let members = y.members();
        let mut same = true;
        'outer: for (ai, &a) in members.iter().enumerate() {
            for &b in &members[ai + 1..] {
                if new_strict.dominates(a, b) != old_strict.dominates(a, b)
                    || new_strict.dominates(b, a) != old_strict.dominates(b, a)
                {
                    same = false;
                    break 'outer;
                }
            }
        }
        let value = if same {
            old_pointwise[i]
        } else if let Some(&v) = dedup.get(y) {
            v
        } else {
            let v = obs::list_loglik(y, new_strict, noise)?;
            dedup.insert(y, v);
            v
        };
        pointwise.push(value);
    }
    Ok((pointwise.iter().sum(), pointwise))
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp()
}

/// Reversible-jump move on the column dimension. Growing draws the new
/// coordinate of every row from its conditional given the retained
/// coordinates, so each row stays distributed as the full-dimension prior
/// and the acceptance ratio reduces to the K-prior times the likelihood
/// ratio; shrinking drops the last column, the reverse pairing.
pub fn update_k<R: Rng + ?Sized>(
    state: &mut McmcState,
    data: &ObservationSet,
    config: &McmcConfig,
    stats: &mut AcceptanceStats,
    rng: &mut R,
) -> Result<(), McmcError> {
    if config.prior.fixed_k.is_some() {
        return Ok(());
    }
    let k = state.latent.k();
    let grow = rng.random::<f64>() < 0.5;
    if !grow && k == 1 {
        stats.k.tally(false);
        return Ok(());
    }
    let k_star = if grow { k + 1 } else { k - 1 };
    let mut latent = state.latent.clone();
    if grow {
        latent.push_column(rng);
    } else {
        latent.pop_column();
    }
    let hstar = prior::latent_to_poset(&state.partition, &latent)?;
    let (total, pointwise) = if hstar == state.hstar {
        (state.total_loglik, state.pointwise.clone())
    } else {
        let strict = hstar.strict_part();
        eval_reuse(data, &strict, &state.noise, &state.strict, &state.pointwise)?
    };
    let log_ratio = prior::k_logpmf(k_star, config.prior.eta_k)?
        - prior::k_logpmf(k, config.prior.eta_k)?
        + total
        - state.total_loglik;
    let ok = accept(log_ratio, rng);
    stats.k.tally(ok);
    if ok {
        state.strict = hstar.strict_part();
        state.hstar = hstar;
        state.latent = latent;
        state.pointwise = pointwise;
        state.total_loglik = total;
    }
    Ok(())
}

/// Joins parallel block/row vectors into canonical partition plus latent.
fn assemble(
    n: usize,
    blocks: &[Vec<usize>],
    rows: &[Vec<f64>],
    k: usize,
    g: f64,
) -> (Partition, LatentMatrix) {
    let mut idx: Vec<usize> = (0..blocks.len()).filter(|&i| !blocks[i].is_empty()).collect();
    idx.sort_by_key(|&i| *blocks[i].iter().min().unwrap());
    let ordered: Vec<Vec<usize>> = idx.iter().map(|&i| blocks[i].clone()).collect();
    let mut data = Vec::with_capacity(idx.len() * k);
    for &i in &idx {
        data.extend_from_slice(&rows[i]);
    }
    (
        Partition::new(n, ordered),
        LatentMatrix::from_parts(idx.len(), k, g, data),
    )
}

/// Gibbs reseating of one uniformly chosen actor with likelihood-weighted
/// seat probabilities: occupied blocks carry weight (size - eta_a), and the
/// new-block mass (eta_b + eta_a C) is split over two auxiliary rows. When
/// the actor was a singleton its current row serves as the first auxiliary,
/// otherwise both auxiliaries are fresh prior draws.
pub fn update_partition<R: Rng + ?Sized>(
    state: &mut McmcState,
    data: &ObservationSet,
    config: &McmcConfig,
    stats: &mut AcceptanceStats,
    rng: &mut R,
) -> Result<(), McmcError> {
    if config.prior.no_ties {
        return Ok(());
    }
    let n = state.partition.n();
    let j = rng.random_range(0..n);
    let old_block = state.partition.block_of(j);
    let was_singleton = state.partition.blocks()[old_block].len() == 1;
    let k = state.latent.k();
    let g = state.latent.one_minus_rho();
    let eq = state.latent.equicorrelation();

    // Base structure with j removed; rows stay aligned with blocks.
    let mut base_blocks: Vec<Vec<usize>> = Vec::new();
    let mut base_rows: Vec<Vec<f64>> = Vec::new();
    let mut old_row = Vec::new();
    for (b, block) in state.partition.blocks().iter().enumerate() {
        let mut members: Vec<usize> = block.iter().copied().filter(|&x| x != j).collect();
        if b == old_block {
            old_row = state.latent.row(b).to_vec();
        }
        if members.is_empty() {
            continue;
        }
        members.sort_unstable();
        base_blocks.push(members);
        base_rows.push(state.latent.row(b).to_vec());
    }
    let c_minus = base_blocks.len();

    let aux_rows: [Vec<f64>; 2] = if was_singleton {
        [old_row.clone(), eq.sample_row(rng)]
    } else {
        [eq.sample_row(rng), eq.sample_row(rng)]
    };

    // Candidate seats: existing blocks then the two auxiliaries.
    struct Candidate {
        partition: Partition,
        latent: LatentMatrix,
        hstar: TiedPartialOrder,
        strict: PartialOrder,
        pointwise: Vec<f64>,
        total: f64,
        log_weight: f64,
        is_old_seat: bool,
    }
    let mut candidates: Vec<Candidate> = Vec::with_capacity(c_minus + 2);
    let new_mass = if n == 1 {
        0.0 // forced singleton; the weight never competes
    } else {
        (config.prior.eta_b + config.prior.eta_a * c_minus as f64).ln() - 2f64.ln()
    };
    for seat in 0..c_minus + 2 {
        let mut blocks = base_blocks.clone();
        let mut rows = base_rows.clone();
        let (log_prior_w, is_old_seat) = if seat < c_minus {
            let w = (blocks[seat].len() as f64 - config.prior.eta_a).ln();
            blocks[seat].push(j);
            let same = !was_singleton
                && state.partition.blocks()[old_block].contains(&blocks[seat][0]);
            (w, same)
        } else {
            blocks.push(vec![j]);
            rows.push(aux_rows[seat - c_minus].clone());
            (new_mass, was_singleton && seat == c_minus)
        };
        let (partition, latent) = assemble(n, &blocks, &rows, k, g);
        let hstar = prior::latent_to_poset(&partition, &latent)?;
        let (total, pointwise) = if hstar == state.hstar {
            (state.total_loglik, state.pointwise.clone())
        } else {
            let strict = hstar.strict_part();
            eval_reuse(data, &strict, &state.noise, &state.strict, &state.pointwise)?
        };
        let strict = hstar.strict_part();
        candidates.push(Candidate {
            partition,
            latent,
            hstar,
            strict,
            pointwise,
            total,
            log_weight: log_prior_w + total,
            is_old_seat,
        });
    }

    // Sample the seat from the normalized weights.
    let max_w = candidates
        .iter()
        .map(|c| c.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(max_w > f64::NEG_INFINITY, "the old seat always has finite weight");
    let weights: Vec<f64> = candidates.iter().map(|c| (c.log_weight - max_w).exp()).collect();
    let total_w: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total_w;
    // Rounding fallback must never land on a zero-weight seat.
    let mut chosen = weights.iter().rposition(|&w| w > 0.0).expect("some seat has weight");
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            chosen = i;
            break;
        }
        u -= w;
    }
    let moved = !candidates[chosen].is_old_seat;
    stats.partition.tally(moved);
    let c = candidates.swap_remove(chosen);
    state.partition = c.partition;
    state.latent = c.latent;
    state.hstar = c.hstar;
    state.strict = c.strict;
    state.pointwise = c.pointwise;
    state.total_loglik = c.total;
    Ok(())
}

/// Random-walk update of one latent entry. The proposal is the conditional
/// spread of that coordinate under a row-shaped kernel centred at the
/// current row, symmetric in the entry, so the ratio is prior times
/// likelihood.
pub fn update_z<R: Rng + ?Sized>(
    state: &mut McmcState,
    data: &ObservationSet,
    _config: &McmcConfig,
    stats: &mut AcceptanceStats,
    rng: &mut R,
) -> Result<(), McmcError> {
    let c = state.latent.num_rows();
    let k = state.latent.k();
    let r = rng.random_range(0..c);
    let col = rng.random_range(0..k);
    let eq = state.latent.equicorrelation();
    let sd = eq.entry_conditional_sd();
    let old_row = state.latent.row(r).to_vec();
    let mut new_row = old_row.clone();
    let step: f64 = StandardNormal.sample(rng);
    new_row[col] += sd * step;

    let mut latent = state.latent.clone();
    latent.row_mut(r).copy_from_slice(&new_row);
    let hstar = prior::latent_to_poset(&state.partition, &latent)?;
    let (total, pointwise) = if hstar == state.hstar {
        (state.total_loglik, state.pointwise.clone())
    } else {
        let strict = hstar.strict_part();
        eval_reuse(data, &strict, &state.noise, &state.strict, &state.pointwise)?
    };
    let log_ratio =
        eq.row_logpdf(&new_row) - eq.row_logpdf(&old_row) + total - state.total_loglik;
    let ok = accept(log_ratio, rng);
    stats.z.tally(ok);
    if ok {
        state.strict = hstar.strict_part();
        state.hstar = hstar;
        state.latent = latent;
        state.pointwise = pointwise;
        state.total_loglik = total;
    }
    Ok(())
}

/// Log acceptance ratio of the multiplicative 1-rho proposal, exposed for
/// direct arithmetic checks. Returns the proposed 1-rho as well.
pub fn rho_log_ratio(latent: &LatentMatrix, eta_rho: f64, delta: f64) -> (f64, f64) {
    let g = latent.one_minus_rho();
    let g_star = delta * g;
    let log_ratio = prior::one_minus_rho_logpdf(g_star, eta_rho)
        + latent.log_prior_at(g_star)
        - prior::one_minus_rho_logpdf(g, eta_rho)
        - latent.log_prior_at(g)
        - delta.ln();
    (g_star, log_ratio)
}

/// Multiplicative proposal on 1 - rho with the delta Jacobian in the ratio;
/// the likelihood is unaffected because the order does not depend on rho.
pub fn update_rho<R: Rng + ?Sized>(
    state: &mut McmcState,
    config: &McmcConfig,
    stats: &mut AcceptanceStats,
    rng: &mut R,
) -> Result<(), McmcError> {
    let w = config.w_rho;
    let delta = w + rng.random::<f64>() * (1.0 / w - w);
    let (g_star, log_ratio) = rho_log_ratio(&state.latent, config.prior.eta_rho, delta);
    if g_star > 1.0 || g_star <= 0.0 {
        stats.rho.tally(false);
        return Ok(());
    }
    let ok = accept(log_ratio, rng);
    stats.rho.tally(ok);
    if ok {
        state.latent.set_one_minus_rho(g_star);
    }
    Ok(())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(r: f64) -> f64 {
    1.0 / (1.0 + (-r).exp())
}

/// Random-walk update of the noise parameter: Gaussian on theta with
/// rejection below zero, or a logit-scale walk on p with the change of
/// variables folded into the ratio.
pub fn update_noise<R: Rng + ?Sized>(
    state: &mut McmcState,
    data: &ObservationSet,
    config: &McmcConfig,
    stats: &mut AcceptanceStats,
    rng: &mut R,
) -> Result<(), McmcError> {
    match state.noise {
        NoiseParams::NoiseFree => Ok(()),
        NoiseParams::Mallows { theta } => {
            let step: f64 = StandardNormal.sample(rng);
            let theta_star = theta + config.theta_step * step;
            if theta_star <= 0.0 {
                stats.noise.tally(false);
                return Ok(());
            }
            let proposal = NoiseParams::Mallows { theta: theta_star };
            let (total, pointwise) = obs::dataset_loglik_strict(data, &state.strict, &proposal)?;
            let (shape, rate) = config.prior.theta_prior;
            let log_ratio = prior::theta_logpdf(theta_star, shape, rate)?
                - prior::theta_logpdf(theta, shape, rate)?
                + total
                - state.total_loglik;
            let ok = accept(log_ratio, rng);
            stats.noise.tally(ok);
            if ok {
                state.noise = proposal;
                state.pointwise = pointwise;
                state.total_loglik = total;
            }
            Ok(())
        }
        NoiseParams::QueueJump { p } => {
            let step: f64 = StandardNormal.sample(rng);
            let p_star = sigmoid(logit(p) + config.p_step * step);
            let p_star = p_star.clamp(1e-300, 1.0 - 1e-16);
            let proposal = NoiseParams::QueueJump { p: p_star };
            let (total, pointwise) = obs::dataset_loglik_strict(data, &state.strict, &proposal)?;
            let (a, b) = config.prior.p_prior;
            // The logit walk is symmetric in r; transforming to p brings a
            // p(1-p) Jacobian on each side.
            let log_ratio = prior::p_logpdf(p_star, a, b)?
                + (p_star * (1.0 - p_star)).ln()
                - prior::p_logpdf(p, a, b)?
                - (p * (1.0 - p)).ln()
                + total
                - state.total_loglik;
            let ok = accept(log_ratio, rng);
            stats.noise.tally(ok);
            if ok {
                state.noise = proposal;
                state.pointwise = pointwise;
                state.total_loglik = total;
            }
            Ok(())
        }
    }
}

/// Runs the full chain: each sweep cycles the K move, one reseating pass, n
/// latent-entry updates, the rho move and the noise move, recording every
/// `thin` sweeps. Burn-in is dropped by the summaries, not here.
pub fn run_chain<R: Rng + ?Sized>(
    data: &ObservationSet,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<McmcTrace, McmcError> {
    let mut state = init_state(data, config, rng)?;
    let mut stats = AcceptanceStats::default();
    let n = data.n();
    let mut records = Vec::with_capacity(config.iterations / config.thin);
    for sweep in 0..config.iterations {
        update_k(&mut state, data, config, &mut stats, rng)?;
        update_partition(&mut state, data, config, &mut stats, rng)?;
        for _ in 0..n {
            update_z(&mut state, data, config, &mut stats, rng)?;
        }
        update_rho(&mut state, config, &mut stats, rng)?;
        update_noise(&mut state, data, config, &mut stats, rng)?;
        if (sweep + 1) % config.thin == 0 {
            #[cfg(debug_assertions)]
            debug_assert!(state.verify_coherence(data), "state caches drifted");
            records.push(TraceRecord {
                iteration: sweep + 1,
                total_loglik: state.total_loglik,
                pointwise: state.pointwise.clone(),
                k: state.latent.k(),
                c: state.partition.num_blocks(),
                rho: state.latent.rho(),
                noise_value: state.noise.value(),
                depth: state.hstar.depth(),
                hstar: state.hstar.clone(),
                partition: state.partition.clone(),
            });
        }
    }
    Ok(McmcTrace {
        n,
        model: config.model,
        records,
        stats,
    })
}

/// Effective sample size by the initial-positive-sequence truncation of the
/// autocorrelation sum. A constant series reports 0 to flag degeneracy.
pub fn ess(series: &[f64]) -> Result<f64, McmcError> {
    let n = series.len();
    if n < 10 {
        return Err(McmcError::SeriesTooShort(n));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let gamma0: f64 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if gamma0 <= 0.0 {
        return Ok(0.0);
    }
    let autocov = |t: usize| -> f64 {
        centered[..n - t]
            .iter()
            .zip(&centered[t..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    // Sum consecutive pairs of autocorrelations while they stay positive.
    let mut tau = -1.0;
    let mut t = 0usize;
    while t + 1 < n {
        let pair = (autocov(t) + autocov(t + 1)) / gamma0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        t += 2;
    }
    let tau = tau.max(1.0);
    Ok((n as f64 / tau).min(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poset::RankList;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty_data(n: usize) -> ObservationSet {
        ObservationSet::empty(n)
    }

    fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sample.len() as f64;
        sample
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn init_is_deterministic_and_honors_overrides() {
        let data = empty_data(6);
        let mut config = McmcConfig::new(ModelTag::Mallows, 6);
        config.prior.fixed_k = Some(4);
        config.prior.no_ties = true;
        let s1 = init_state(&data, &config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let s2 = init_state(&data, &config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(s1.latent.k(), 4);
        assert_eq!(s1.num_clusters(), 6);
        assert_eq!(s1.partition, s2.partition);
        assert_eq!(s1.hstar, s2.hstar);
        assert!(s1.verify_coherence(&data));
    }

    #[test]
    fn same_seed_gives_identical_traces() {
        let data = ObservationSet::new(
            3,
            vec![RankList::new(vec![0, 1, 2]), RankList::new(vec![0, 2, 1])],
        )
        .unwrap();
        let mut config = McmcConfig::new(ModelTag::Mallows, 3);
        config.iterations = 300;
        config.thin = 3;
        let t1 = run_chain(&data, &config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let t2 = run_chain(&data, &config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(t1.records.len(), 100);
        for (a, b) in t1.records.iter().zip(&t2.records) {
            assert_eq!(a.total_loglik.to_bits(), b.total_loglik.to_bits());
            assert_eq!(a.hstar, b.hstar);
            assert_eq!(a.rho.to_bits(), b.rho.to_bits());
        }
        let empty = run_chain(
            &data,
            &McmcConfig {
                iterations: 0,
                ..config
            },
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert!(empty.records.is_empty());
    }

    #[test]
    fn rho_ratio_spot_check() {
        // 1 - rho = 0.1, delta = 1.2 proposes 1 - rho = 0.12; compare
        // against direct density evaluation.
        let latent = LatentMatrix::from_rows(vec![vec![0.4, -0.2], vec![1.0, 0.9]], 0.9).unwrap();
        let eta_rho = 1.0 / 6.0;
        let (g_star, got) = rho_log_ratio(&latent, eta_rho, 1.2);
        assert!((g_star - 0.12).abs() < 1e-12);
        let direct = prior::one_minus_rho_logpdf(0.12, eta_rho)
            + latent.log_prior_at(0.12)
            - prior::one_minus_rho_logpdf(0.1, eta_rho)
            - latent.log_prior_at(0.1)
            - 1.2f64.ln();
        assert!((got - direct).abs() < 1e-12);
        // delta = 1 proposes the current value with ratio one.
        let (same, ratio) = rho_log_ratio(&latent, eta_rho, 1.0);
        assert!((same - 0.1).abs() < 1e-15);
        assert!(ratio.abs() < 1e-12);
    }

    /// Empty data makes every move target its prior; the traced marginals
    /// must match. Jointly exercises all acceptance ratios and Jacobians at
    /// unit-test scale (the acceptance suite runs the large version).
    #[test]
    fn prior_recovery_small() {
        let data = empty_data(3);
        let mut config = McmcConfig::new(ModelTag::Mallows, 3);
        config.prior.eta_k = 0.5;
        config.prior.theta_prior = (2.0, 1.0);
        // A wide multiplier keeps the 1 - rho walk fast enough to cover the
        // heavy near-one tail of the correlation prior.
        config.w_rho = 0.2;
        config.iterations = 640_000;
        config.thin = 16;
        let trace = run_chain(&data, &config, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
        assert_eq!(trace.records.len(), 40_000);

        // K against the geometric prior.
        let mut k_freq = vec![0f64; 64];
        for r in &trace.records {
            if r.k < k_freq.len() {
                k_freq[r.k] += 1.0;
            }
        }
        let total = trace.records.len() as f64;
        let tv: f64 = (1..k_freq.len())
            .map(|k| {
                let p = prior::k_logpmf(k, 0.5).unwrap().exp();
                (k_freq[k] / total - p).abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.05, "K tv = {tv}");

        // rho against Beta(1, eta_rho) via g = 1 - rho ~ Beta(eta_rho, 1).
        // The correlation mixes slowest; this is a smoke bound and the
        // acceptance suite runs the tight one on a longer chain.
        let mut g: Vec<f64> = trace.records.iter().map(|r| 1.0 - r.rho).collect();
        let ks = ks_distance(&mut g, |x| x.powf(config.prior.eta_rho));
        assert!(ks < 0.05, "rho ks = {ks}");

        // theta against Gamma(2, 1): CDF 1 - e^-x (1 + x).
        let mut theta: Vec<f64> = trace.records.iter().map(|r| r.noise_value).collect();
        let ks = ks_distance(&mut theta, |x| 1.0 - (-x).exp() * (1.0 + x));
        assert!(ks < 0.03, "theta ks = {ks}");

        // Partition marginal against the seating law.
        let space = {
            let mut out = Vec::new();
            for s in [
                vec![vec![0, 1, 2]],
                vec![vec![0, 1], vec![2]],
                vec![vec![0, 2], vec![1]],
                vec![vec![0], vec![1, 2]],
                vec![vec![0], vec![1], vec![2]],
            ] {
                out.push(Partition::new(3, s));
            }
            out
        };
        let mut hits = vec![0f64; space.len()];
        for r in &trace.records {
            hits[space.iter().position(|s| *s == r.partition).unwrap()] += 1.0;
        }
        let tv: f64 = space
            .iter()
            .zip(&hits)
            .map(|(s, h)| {
                (h / total
                    - prior::pdp_log_prob(s, config.prior.eta_a, config.prior.eta_b)
                        .unwrap()
                        .exp())
                .abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.05, "partition tv = {tv}");
    }

    /// The logit walk on p needs the change-of-variables term; with a flat
    /// prior the traced p must be uniform.
    #[test]
    fn prior_recovery_p_jacobian() {
        let data = empty_data(3);
        let mut config = McmcConfig::new(ModelTag::QueueJump, 3);
        config.iterations = 120_000;
        config.thin = 4;
        let trace = run_chain(&data, &config, &mut ChaCha8Rng::seed_from_u64(19)).unwrap();
        let mut p: Vec<f64> = trace.records.iter().map(|r| r.noise_value).collect();
        let ks = ks_distance(&mut p, |x| x);
        assert!(ks < 0.03, "p ks = {ks}");
    }

    /// Two-state flow balance at n = 2 with a frozen dimension and no ties.
    #[test]
    fn detailed_balance_smoke() {
        let data = empty_data(2);
        let mut config = McmcConfig::new(ModelTag::NoiseFree, 2);
        config.prior.fixed_k = Some(1);
        config.prior.no_ties = true;
        config.iterations = 200_000;
        config.thin = 1;
        let trace = run_chain(&data, &config, &mut ChaCha8Rng::seed_from_u64(23)).unwrap();
        let class = |r: &TraceRecord| -> usize {
            usize::from(r.hstar.strictly_dominates(1, 0))
        };
        let mut flows = [[0f64; 2]; 2];
        for w in trace.records.windows(2) {
            flows[class(&w[0])][class(&w[1])] += 1.0;
        }
        let forward = flows[0][1];
        let backward = flows[1][0];
        assert!(forward > 1_000.0 && backward > 1_000.0);
        let rel = (forward - backward).abs() / forward.max(backward);
        assert!(rel < 0.05, "flow imbalance {rel}");
    }

    /// Strong noise-free data at n = 2 concentrates the posterior on the
    /// dominance relation present in every list.
    #[test]
    fn posterior_concentrates_n2() {
        let lists = vec![RankList::new(vec![0, 1]); 50];
        let data = ObservationSet::new(2, lists).unwrap();
        let mut config = McmcConfig::new(ModelTag::NoiseFree, 2);
        config.iterations = 40_000;
        config.thin = 4;
        let trace = run_chain(&data, &config, &mut ChaCha8Rng::seed_from_u64(29)).unwrap();
        let burn = 500.min(trace.records.len() / 2);
        let kept = &trace.records[burn..];
        let hits = kept
            .iter()
            .filter(|r| r.hstar.strictly_dominates(0, 1))
            .count();
        let frac = hits as f64 / kept.len() as f64;
        assert!(frac >= 0.95, "posterior mass on 0>1 was {frac}");
    }

    #[test]
    fn ess_behaviour() {
        assert!(matches!(ess(&[1.0; 5]), Err(McmcError::SeriesTooShort(5))));
        assert_eq!(ess(&[2.5; 100]).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let iid: Vec<f64> = (0..10_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let e = ess(&iid).unwrap();
        assert!((0.8..=1.2).contains(&(e / 10_000.0)), "iid ess = {e}");

        // AR(1) with phi = 0.9 has integrated time (1+phi)/(1-phi) = 19.
        let phi = 0.9f64;
        let sd = (1.0 - phi * phi).sqrt();
        let mut x = 0.0;
        let ar: Vec<f64> = (0..10_000)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + sd * e;
                x
            })
            .collect();
        let e = ess(&ar).unwrap();
        let want = 10_000.0 / 19.0;
        assert!(
            (e - want).abs() < 0.4 * want,
            "ar1 ess = {e}, want about {want}"
        );
    }

    /// Every move type must accept at least occasionally on real-shaped data.
    #[test]
    fn moves_all_accept_sometimes() {
        let lists = vec![
            RankList::new(vec![0, 1, 2]),
            RankList::new(vec![0, 2, 3]),
            RankList::new(vec![1, 3, 2]),
            RankList::new(vec![0, 1, 3]),
        ];
        let data = ObservationSet::new(4, lists).unwrap();
        let mut config = McmcConfig::new(ModelTag::Mallows, 4);
        config.iterations = 4_000;
        config.thin = 8;
        let trace = run_chain(&data, &config, &mut ChaCha8Rng::seed_from_u64(37)).unwrap();
        assert!(trace.stats.k.accepted > 0);
        assert!(trace.stats.partition.accepted > 0);
        assert!(trace.stats.z.accepted > 0);
        assert!(trace.stats.rho.accepted > 0);
        assert!(trace.stats.noise.accepted > 0);
        assert!(trace.stats.k.accepted <= trace.stats.k.proposed);
    }
}
