//! Generative priors over partial orders with ties: a Poisson-Dirichlet
//! partition groups tied actors, each cluster gets an equicorrelated Gaussian
//! attribute row, and coordinatewise dominance of the expanded rows yields the
//! order. Includes the hyperpriors on the column dimension, row correlation
//! and noise parameters, and prior-predictive simulation.

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poset::{Partition, Relation, TiedPartialOrder};

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("correlation must satisfy 0 <= rho < 1, got {0}")]
    BadRho(f64),
    #[error("invalid hyperparameter: {0}")]
    BadHyper(String),
    #[error("latent matrix has {rows} rows but the partition has {blocks} blocks")]
    ShapeMismatch { rows: usize, blocks: usize },
    #[error("value {0} outside the distribution support")]
    OutOfSupport(f64),
}

const LN_2PI: f64 = 1.8378770664093453;

/// Closed-form pieces of the K-dimensional unit-variance equicorrelation
/// matrix, parameterized by `g = 1 - rho` to stay accurate when the
/// correlation is pushed toward one.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Equicorrelation {
    pub k: usize,
    pub g: f64,
}

impl Equicorrelation {
    pub fn new(k: usize, g: f64) -> Result<Self, PriorError> {
        if k == 0 {
            return Err(PriorError::BadHyper("K must be at least 1".into()));
        }
        if !(g > 0.0 && g <= 1.0) {
            return Err(PriorError::BadRho(1.0 - g));
        }
        Ok(Equicorrelation { k, g })
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }

    /// log det of the matrix: (K-1) ln g + ln(K - (K-1) g).
    pub fn logdet(&self) -> f64 {
        (self.kf() - 1.0) * self.g.ln() + (self.kf() - (self.kf() - 1.0) * self.g).ln()
    }

    /// x' Sigma^-1 x via the closed-form inverse.
    pub fn quadform(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.k);
        let sum: f64 = row.iter().sum();
        let sumsq: f64 = row.iter().map(|x| x * x).sum();
        let denom = self.kf() - (self.kf() - 1.0) * self.g;
        (sumsq - (1.0 - self.g) / denom * sum * sum) / self.g
    }

    pub fn row_logpdf(&self, row: &[f64]) -> f64 {
        -0.5 * (self.kf() * LN_2PI + self.logdet() + self.quadform(row))
    }

    /// Draws one row: a shared component plus independent noise reproduces
    /// unit variance with pairwise covariance rho.
    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let shared: f64 = StandardNormal.sample(rng);
        let rho_sqrt = (1.0 - self.g).max(0.0).sqrt();
        let g_sqrt = self.g.sqrt();
        (0..self.k)
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                rho_sqrt * shared + g_sqrt * e
            })
            .collect()
    }

    /// Mean coefficient and standard deviation of coordinate K+1 given a full
    /// row of K coordinates: the new entry is `N(coef * sum(row), sd^2)`.
    pub fn extend_conditional(&self) -> (f64, f64) {
        let k = self.kf();
        let denom = k - (k - 1.0) * self.g;
        let coef = (1.0 - self.g) / denom;
        let var = self.g * (k + 1.0 - k * self.g) / denom;
        (coef, var.max(0.0).sqrt())
    }

    /// Standard deviation of one coordinate conditional on the other K-1
    /// coordinates of the same row.
    pub fn entry_conditional_sd(&self) -> f64 {
        let k = self.kf();
        if self.k == 1 {
            return 1.0;
        }
        let var = self.g * (k - (k - 1.0) * self.g) / (k - 1.0 - (k - 2.0) * self.g);
        var.max(0.0).sqrt()
    }
}

/// Dense unit-diagonal equicorrelation matrix.
pub fn sigma_rho(k: usize, rho: f64) -> Result<Vec<Vec<f64>>, PriorError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(PriorError::BadRho(rho));
    }
    if k == 0 {
        return Err(PriorError::BadHyper("K must be at least 1".into()));
    }
    Ok((0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 } else { rho }).collect())
        .collect())
}

/// Cluster attribute rows: one length-K row per partition block, rows i.i.d.
/// zero-mean Gaussian with equicorrelation `rho` within a row.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentMatrix {
    rows: usize,
    k: usize,
    one_minus_rho: f64,
    data: Vec<f64>,
}

impl LatentMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, rho: f64) -> Result<Self, PriorError> {
        let g = 1.0 - rho;
        if !(g > 0.0 && g <= 1.0) {
            return Err(PriorError::BadRho(rho));
        }
        let c = rows.len();
        let k = rows.first().map_or(1, |r| r.len());
        let mut data = Vec::with_capacity(c * k);
        for r in &rows {
            if r.len() != k || r.iter().any(|x| !x.is_finite()) {
                return Err(PriorError::BadHyper("latent rows must be rectangular and finite".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(LatentMatrix {
            rows: c,
            k,
            one_minus_rho: g,
            data,
        })
    }

    pub(crate) fn from_parts(rows: usize, k: usize, one_minus_rho: f64, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * k);
        LatentMatrix {
            rows,
            k,
            one_minus_rho,
            data,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rho(&self) -> f64 {
        1.0 - self.one_minus_rho
    }

    pub fn one_minus_rho(&self) -> f64 {
        self.one_minus_rho
    }

    pub(crate) fn set_one_minus_rho(&mut self, g: f64) {
        self.one_minus_rho = g;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.k..(r + 1) * self.k]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.k..(r + 1) * self.k]
    }

    pub(crate) fn equicorrelation(&self) -> Equicorrelation {
        Equicorrelation {
            k: self.k,
            g: self.one_minus_rho,
        }
    }

    /// Sum of the row log densities under the current correlation.
    pub fn log_prior(&self) -> f64 {
        let eq = self.equicorrelation();
        (0..self.rows).map(|r| eq.row_logpdf(self.row(r))).sum()
    }

    pub fn log_prior_at(&self, one_minus_rho: f64) -> f64 {
        let eq = Equicorrelation {
            k: self.k,
            g: one_minus_rho,
        };
        (0..self.rows).map(|r| eq.row_logpdf(self.row(r))).sum()
    }

    pub(crate) fn push_column<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let eq = self.equicorrelation();
        let (coef, sd) = eq.extend_conditional();
        let mut data = Vec::with_capacity(self.rows * (self.k + 1));
        for r in 0..self.rows {
            let row = self.row(r);
            let mean = coef * row.iter().sum::<f64>();
            let z: f64 = StandardNormal.sample(rng);
            data.extend_from_slice(row);
            data.push(mean + sd * z);
        }
        self.data = data;
        self.k += 1;
    }

    pub(crate) fn pop_column(&mut self) {
        debug_assert!(self.k > 1);
        let mut data = Vec::with_capacity(self.rows * (self.k - 1));
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[..self.k - 1]);
        }
        self.data = data;
        self.k -= 1;
    }
}

/// Row log density of the equicorrelated Gaussian prior.
pub fn latent_row_logpdf(row: &[f64], rho: f64) -> Result<f64, PriorError> {
    let eq = Equicorrelation::new(row.len().max(1), 1.0 - rho)?;
    if row.is_empty() {
        return Err(PriorError::BadHyper("empty row".into()));
    }
    Ok(eq.row_logpdf(row))
}

/// Draws `c` i.i.d. cluster rows of dimension `k`.
pub fn sample_latent_rows<R: Rng + ?Sized>(
    c: usize,
    k: usize,
    rho: f64,
    rng: &mut R,
) -> Result<LatentMatrix, PriorError> {
    let eq = Equicorrelation::new(k, 1.0 - rho)?;
    let mut data = Vec::with_capacity(c * k);
    for _ in 0..c {
        data.extend(eq.sample_row(rng));
    }
    Ok(LatentMatrix::from_parts(c, k, 1.0 - rho, data))
}

/// Expands cluster rows to actors and reads off the order: an actor strictly
/// dominates another iff its row is coordinatewise strictly larger; actors in
/// the same block are tied.
pub fn latent_to_poset(
    partition: &Partition,
    latent: &LatentMatrix,
) -> Result<TiedPartialOrder, PriorError> {
    if latent.num_rows() != partition.num_blocks() {
        return Err(PriorError::ShapeMismatch {
            rows: latent.num_rows(),
            blocks: partition.num_blocks(),
        });
    }
    let n = partition.n();
    let c = partition.num_blocks();
    // Dominance between blocks, then expanded to actors.
    let mut block_rel = vec![false; c * c];
    for a in 0..c {
        for b in 0..c {
            if a != b {
                let (ra, rb) = (latent.row(a), latent.row(b));
                block_rel[a * c + b] = ra.iter().zip(rb).all(|(x, y)| x > y);
            }
        }
    }
    let mut rel = Relation::new(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (ci, cj) = (partition.block_of(i), partition.block_of(j));
            if ci == cj || block_rel[ci * c + cj] {
                rel.set(i, j, true);
            }
        }
    }
    // Coordinatewise strict dominance is transitive and tie blocks share
    // rows, so the result satisfies the tied-order invariants by
    // construction.
    Ok(TiedPartialOrder::from_relation_unchecked(rel))
}

/// Exchangeable-partition log probability of the two-parameter
/// Poisson-Dirichlet process, in the product form
/// `sum_{i=1}^{C-1} ln(eta_b + i eta_a) - sum_{i=1}^{n-1} ln(eta_b + i)
///  + sum_c sum_{i=1}^{n_c-1} ln(i - eta_a)`,
/// which also covers the Dirichlet-process limit `eta_a = 0`.
pub fn pdp_log_prob(partition: &Partition, eta_a: f64, eta_b: f64) -> Result<f64, PriorError> {
    check_pdp_params(eta_a, eta_b)?;
    let n = partition.n();
    let c = partition.num_blocks();
    let mut lp = 0.0;
    for i in 1..c {
        lp += (eta_b + i as f64 * eta_a).ln();
    }
    for i in 1..n {
        lp -= (eta_b + i as f64).ln();
    }
    for size in partition.block_sizes() {
        for i in 1..size {
            lp += (i as f64 - eta_a).ln();
        }
    }
    Ok(lp)
}

fn check_pdp_params(eta_a: f64, eta_b: f64) -> Result<(), PriorError> {
    if !(0.0..1.0).contains(&eta_a) {
        return Err(PriorError::BadHyper(format!(
            "discount eta_a must be in [0,1), got {eta_a}"
        )));
    }
    if !(eta_b > -eta_a) || !eta_b.is_finite() {
        return Err(PriorError::BadHyper(format!(
            "strength eta_b must exceed -eta_a, got {eta_b}"
        )));
    }
    if eta_a == 0.0 && eta_b <= 0.0 {
        return Err(PriorError::BadHyper(
            "eta_b must be positive when eta_a is 0".into(),
        ));
    }
    Ok(())
}

/// Sequential seating draw whose marginal law is [`pdp_log_prob`]: actor m+1
/// joins an occupied block with weight `n_c - eta_a` and opens a new block
/// with weight `eta_b + eta_a C`.
pub fn sample_pdp_partition<R: Rng + ?Sized>(
    n: usize,
    eta_a: f64,
    eta_b: f64,
    rng: &mut R,
) -> Result<Partition, PriorError> {
    check_pdp_params(eta_a, eta_b)?;
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for actor in 0..n {
        if actor == 0 {
            blocks.push(vec![0]);
            continue;
        }
        let m = actor as f64;
        let new_w = eta_b + eta_a * blocks.len() as f64;
        let mut u: f64 = rng.random::<f64>() * (m + eta_b);
        let mut placed = false;
        for b in blocks.iter_mut() {
            let w = b.len() as f64 - eta_a;
            if u < w {
                b.push(actor);
                placed = true;
                break;
            }
            u -= w;
        }
        if !placed {
            debug_assert!(u <= new_w + 1e-9);
            blocks.push(vec![actor]);
        }
    }
    Ok(Partition::new(n, blocks))
}

/// Geometric pmf on {1, 2, ...} with success probability `eta_k` (mean
/// `1/eta_k`).
pub fn k_logpmf(k: usize, eta_k: f64) -> Result<f64, PriorError> {
    if !(eta_k > 0.0 && eta_k <= 1.0) {
        return Err(PriorError::BadHyper(format!(
            "geometric success probability must be in (0,1], got {eta_k}"
        )));
    }
    if k == 0 {
        return Err(PriorError::OutOfSupport(0.0));
    }
    if k == 1 {
        Ok(eta_k.ln())
    } else if eta_k >= 1.0 {
        Ok(f64::NEG_INFINITY)
    } else {
        Ok(eta_k.ln() + (k as f64 - 1.0) * (1.0 - eta_k).ln())
    }
}

/// Beta(1, eta_rho) log density on [0, 1).
pub fn rho_logpdf(rho: f64, eta_rho: f64) -> Result<f64, PriorError> {
    if !(eta_rho > 0.0) {
        return Err(PriorError::BadHyper(format!(
            "beta shape must be positive, got {eta_rho}"
        )));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(PriorError::OutOfSupport(rho));
    }
    Ok(one_minus_rho_logpdf(1.0 - rho, eta_rho))
}

/// Same density expressed in `g = 1 - rho`, where `g ~ Beta(eta_rho, 1)`.
pub(crate) fn one_minus_rho_logpdf(g: f64, eta_rho: f64) -> f64 {
    eta_rho.ln() + (eta_rho - 1.0) * g.ln()
}

/// Gamma(shape, rate) log density.
pub fn theta_logpdf(theta: f64, shape: f64, rate: f64) -> Result<f64, PriorError> {
    if !(shape > 0.0 && rate > 0.0) {
        return Err(PriorError::BadHyper(format!(
            "gamma shape/rate must be positive, got ({shape}, {rate})"
        )));
    }
    if theta <= 0.0 {
        return Err(PriorError::OutOfSupport(theta));
    }
    Ok(shape * rate.ln() - libm::lgamma(shape) + (shape - 1.0) * theta.ln() - rate * theta)
}

/// Beta(a, b) log density.
pub fn p_logpdf(p: f64, a: f64, b: f64) -> Result<f64, PriorError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(PriorError::BadHyper(format!(
            "beta parameters must be positive, got ({a}, {b})"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(PriorError::OutOfSupport(p));
    }
    let ln_beta = libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b);
    Ok((a - 1.0) * p.ln() + (b - 1.0) * (1.0 - p).ln() - ln_beta)
}

/// Hyperparameters of the full generative prior plus the noise-parameter
/// priors, with the overrides used for nested-model runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// PDP discount in [0, 1).
    pub eta_a: f64,
    /// PDP strength, > -eta_a.
    pub eta_b: f64,
    /// Beta(1, eta_rho) shape for the row correlation.
    pub eta_rho: f64,
    /// Geometric success probability for the column dimension K.
    #[serde(rename = "eta_K")]
    pub eta_k: f64,
    /// Gamma (shape, rate) prior on the dispersion theta.
    pub theta_prior: (f64, f64),
    /// Beta (a, b) prior on the jump probability p.
    pub p_prior: (f64, f64),
    /// Freeze K at this value and disable K moves.
    #[serde(rename = "fixed_K", default)]
    pub fixed_k: Option<usize>,
    /// Force the singleton partition and disable reseating.
    #[serde(default)]
    pub no_ties: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            eta_a: 0.7,
            eta_b: 3.0,
            eta_rho: 1.0 / 6.0,
            eta_k: 0.0625,
            theta_prior: (4.0, 1.0),
            p_prior: (1.0, 1.0),
            fixed_k: None,
            no_ties: false,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), PriorError> {
        check_pdp_params(self.eta_a, self.eta_b)?;
        if !(self.eta_rho > 0.0) {
            return Err(PriorError::BadHyper("eta_rho must be positive".into()));
        }
        if !(self.eta_k > 0.0 && self.eta_k <= 1.0) {
            return Err(PriorError::BadHyper("eta_K must be in (0,1]".into()));
        }
        if !(self.theta_prior.0 > 0.0 && self.theta_prior.1 > 0.0) {
            return Err(PriorError::BadHyper("theta_prior must be positive".into()));
        }
        if !(self.p_prior.0 > 0.0 && self.p_prior.1 > 0.0) {
            return Err(PriorError::BadHyper("p_prior must be positive".into()));
        }
        if self.fixed_k == Some(0) {
            return Err(PriorError::BadHyper("fixed_K must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sample_k<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if let Some(k) = self.fixed_k {
            return k;
        }
        if self.eta_k >= 1.0 {
            return 1;
        }
        let u: f64 = rng.random();
        1 + ((1.0 - u).ln() / (1.0 - self.eta_k).ln()).floor().max(0.0) as usize
    }

    /// Draws `g = 1 - rho`, distributed Beta(eta_rho, 1), via inverse CDF so
    /// the near-one tail of rho keeps full precision.
    pub fn sample_one_minus_rho<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        u.powf(1.0 / self.eta_rho).clamp(f64::MIN_POSITIVE, 1.0)
    }

    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (shape, rate) = self.theta_prior;
        GammaDist::new(shape, 1.0 / rate).unwrap().sample(rng)
    }

    pub fn sample_p<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b) = self.p_prior;
        BetaDist::new(a, b).unwrap().sample(rng)
    }

    pub fn sample_partition<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Partition, PriorError> {
        if self.no_ties {
            Ok(Partition::singletons(n))
        } else {
            sample_pdp_partition(n, self.eta_a, self.eta_b, rng)
        }
    }
}

/// One draw from the full generative prior.
#[derive(Clone, Debug)]
pub struct PriorDraw {
    pub order: TiedPartialOrder,
    pub partition: Partition,
    pub k: usize,
    pub latent: LatentMatrix,
}

/// Draws K, rho, the partition and the cluster rows, then maps them to a
/// partial order with ties.
pub fn sample_prior_poset<R: Rng + ?Sized>(
    n: usize,
    config: &PriorConfig,
    rng: &mut R,
) -> Result<PriorDraw, PriorError> {
    config.validate()?;
    let k = config.sample_k(rng);
    let g = config.sample_one_minus_rho(rng);
    let partition = config.sample_partition(n, rng)?;
    let eq = Equicorrelation::new(k, g)?;
    let mut data = Vec::with_capacity(partition.num_blocks() * k);
    for _ in 0..partition.num_blocks() {
        data.extend(eq.sample_row(rng));
    }
    let latent = LatentMatrix::from_parts(partition.num_blocks(), k, g, data);
    let order = latent_to_poset(&partition, &latent)?;
    Ok(PriorDraw {
        order,
        partition,
        k,
        latent,
    })
}

/// Monte Carlo prior-predictive depth histogram; entry `d-1` is the mass of
/// depth `d`.
pub fn prior_depth_distribution<R: Rng + ?Sized>(
    n: usize,
    config: &PriorConfig,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>, PriorError> {
    let mut hist = vec![0f64; n];
    for _ in 0..samples {
        let draw = sample_prior_poset(n, config, rng)?;
        hist[draw.order.depth() - 1] += 1.0;
    }
    for h in hist.iter_mut() {
        *h /= samples as f64;
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poset::PartialOrder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// All partitions of 0..n, for normalization oracles.
    pub(crate) fn enumerate_partitions(n: usize) -> Vec<Partition> {
        fn go(n: usize, actor: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Partition>) {
            if actor == n {
                out.push(Partition::new(n, blocks.clone()));
                return;
            }
            for b in 0..blocks.len() {
                blocks[b].push(actor);
                go(n, actor + 1, blocks, out);
                blocks[b].pop();
            }
            blocks.push(vec![actor]);
            go(n, actor + 1, blocks, out);
            blocks.pop();
        }
        let mut out = Vec::new();
        go(n, 0, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn sigma_rho_examples() {
        assert_eq!(sigma_rho(1, 0.3).unwrap(), vec![vec![1.0]]);
        assert_eq!(
            sigma_rho(2, 0.9).unwrap(),
            vec![vec![1.0, 0.9], vec![0.9, 1.0]]
        );
        let id = sigma_rho(3, 0.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(id[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(sigma_rho(2, 1.0).is_err());
        assert!(sigma_rho(2, -0.1).is_err());
    }

    #[test]
    fn row_logpdf_matches_independent_case() {
        let row = [0.3, -1.2, 0.7];
        let independent: f64 = row
            .iter()
            .map(|x| -0.5 * (x * x) - 0.5 * (2.0 * std::f64::consts::PI).ln())
            .sum();
        assert!((latent_row_logpdf(&row, 0.0).unwrap() - independent).abs() < 1e-12);
    }

    #[test]
    fn row_logpdf_closed_form_value() {
        // K = 2, rho = 0.5 at the origin: -ln(2 pi) - 0.5 ln(det), det = 0.75.
        let got = latent_row_logpdf(&[0.0, 0.0], 0.5).unwrap();
        let want = -(2.0 * std::f64::consts::PI).ln() - 0.5 * 0.75f64.ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn row_logpdf_matches_dense_inverse() {
        // Cross-check the closed-form quadform/logdet against a direct 3x3
        // computation.
        let rho = 0.7;
        let row = [0.4, -0.9, 1.3];
        let eq = Equicorrelation::new(3, 1.0 - rho).unwrap();
        let det = (1.0 - rho) * (1.0 - rho) * (1.0 + 2.0 * rho);
        assert!((eq.logdet() - det.ln()).abs() < 1e-12);
        // Inverse of the equicorrelation matrix, dense.
        let c = rho / (1.0 + 2.0 * rho);
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let inv = if i == j { 1.0 - c } else { -c } / (1.0 - rho);
                quad += row[i] * inv * row[j];
            }
        }
        assert!((eq.quadform(&row) - quad).abs() < 1e-10);
    }

    #[test]
    fn sampled_rows_have_target_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (k, rho, draws) = (3usize, 0.7, 100_000usize);
        let m = sample_latent_rows(draws, k, rho, &mut rng).unwrap();
        for a in 0..k {
            for b in 0..k {
                let mut acc = 0.0;
                for r in 0..draws {
                    acc += m.row(r)[a] * m.row(r)[b];
                }
                let want = if a == b { 1.0 } else { rho };
                assert!(
                    (acc / draws as f64 - want).abs() < 0.02,
                    "cov[{a}][{b}] off"
                );
            }
        }
    }

    #[test]
    fn latent_to_poset_examples() {
        // Single column with singleton clusters gives the total order of the
        // column ranks.
        let latent = LatentMatrix::from_rows(vec![vec![0.3], vec![2.0], vec![-1.0]], 0.2).unwrap();
        let po = latent_to_poset(&Partition::singletons(3), &latent).unwrap();
        assert_eq!(po.strict_part(), PartialOrder::total(&[1, 0, 2]));

        // Crafted non-crossing paths reproduce the five-actor example.
        let rows = vec![
            vec![10.0, 10.0],
            vec![5.0, 1.0],
            vec![4.0, 6.0],
            vec![3.0, 5.0],
            vec![2.0, 0.0],
        ];
        let latent = LatentMatrix::from_rows(rows, 0.0).unwrap();
        let po = latent_to_poset(&Partition::singletons(5), &latent).unwrap();
        let example =
            PartialOrder::from_edges(5, &[(0, 1), (0, 2), (2, 3), (1, 4), (3, 4)]).unwrap();
        assert_eq!(po.strict_part(), example);

        // One big cluster ties everyone.
        let latent = LatentMatrix::from_rows(vec![vec![0.0, 0.0]], 0.0).unwrap();
        let all = latent_to_poset(&Partition::new(3, vec![vec![0, 1, 2]]), &latent).unwrap();
        assert_eq!(all.tie_pairs().len(), 3);

        assert!(matches!(
            latent_to_poset(
                &Partition::singletons(3),
                &LatentMatrix::from_rows(vec![vec![0.0]], 0.0).unwrap()
            ),
            Err(PriorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn latent_to_poset_always_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let n = rng.random_range(1..7);
            let k = rng.random_range(1..4);
            let partition = sample_pdp_partition(n, 0.5, 1.0, &mut rng).unwrap();
            let latent = sample_latent_rows(partition.num_blocks(), k, 0.4, &mut rng).unwrap();
            let po = latent_to_poset(&partition, &latent).unwrap();
            // Re-validate through the checked constructor.
            let n = po.n();
            let m: Vec<Vec<bool>> = (0..n)
                .map(|i| (0..n).map(|j| po.relation().get(i, j)).collect())
                .collect();
            TiedPartialOrder::from_matrix(&m).expect("generated order must validate");
        }
    }

    #[test]
    fn pdp_two_actor_closed_form() {
        let (ea, eb) = (0.7, 3.0);
        let together = Partition::new(2, vec![vec![0, 1]]);
        let apart = Partition::singletons(2);
        let p_together = pdp_log_prob(&together, ea, eb).unwrap().exp();
        let p_apart = pdp_log_prob(&apart, ea, eb).unwrap().exp();
        assert!((p_together - (1.0 - ea) / (1.0 + eb)).abs() < 1e-12);
        assert!((p_apart - (eb + ea) / (1.0 + eb)).abs() < 1e-12);
        assert!((p_together + p_apart - 1.0).abs() < 1e-12);

        let single = Partition::singletons(1);
        assert!(pdp_log_prob(&single, ea, eb).unwrap().abs() < 1e-14);
    }

    #[test]
    fn pdp_normalizes_small_n() {
        for n in 1..=8 {
            let total: f64 = enumerate_partitions(n)
                .iter()
                .map(|s| pdp_log_prob(s, 0.7, 3.0).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "n={n}: {total}");
        }
        // Dirichlet-process limit normalizes too.
        let total: f64 = enumerate_partitions(6)
            .iter()
            .map(|s| pdp_log_prob(s, 0.0, 1.3).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn seating_scheme_matches_formula_exactly() {
        // The sequential seating probability of each partition, computed as
        // the product of per-actor seat probabilities, equals the explicit
        // exchangeable-partition probability.
        for (ea, eb) in [(0.7, 3.0), (0.0, 1.0), (0.3, -0.1)] {
            for n in 1..=5 {
                for s in enumerate_partitions(n) {
                    let mut lp = 0.0;
                    let mut sizes: Vec<usize> = Vec::new();
                    for actor in 0..n {
                        let b = s.block_of(actor);
                        // Blocks are ordered by least member, so block b is
                        // the (b+1)-th to open.
                        let m = actor as f64;
                        if actor == 0 {
                            sizes.push(1);
                            continue;
                        }
                        let occupied = sizes.len();
                        if b == occupied {
                            lp += ((eb + ea * occupied as f64) / (m + eb)).ln();
                            sizes.push(1);
                        } else {
                            lp += ((sizes[b] as f64 - ea) / (m + eb)).ln();
                            sizes[b] += 1;
                        }
                    }
                    let direct = pdp_log_prob(&s, ea, eb).unwrap();
                    assert!((lp - direct).abs() < 1e-10, "n={n} s={s:?}");
                }
            }
        }
    }

    #[test]
    fn seating_sampler_matches_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let (n, ea, eb, draws) = (4usize, 0.7, 3.0, 100_000usize);
        let space = enumerate_partitions(n);
        let mut hits = vec![0f64; space.len()];
        for _ in 0..draws {
            let s = sample_pdp_partition(n, ea, eb, &mut rng).unwrap();
            hits[space.iter().position(|t| *t == s).unwrap()] += 1.0;
        }
        let tv: f64 = space
            .iter()
            .zip(&hits)
            .map(|(s, h)| (h / draws as f64 - pdp_log_prob(s, ea, eb).unwrap().exp()).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "tv = {tv}");
        assert_eq!(
            sample_pdp_partition(1, ea, eb, &mut rng).unwrap(),
            Partition::singletons(1)
        );
    }

    #[test]
    fn dirichlet_limit_seating() {
        // eta_a = 0, eta_b = 1: all-singletons at n = 3 has probability
        // (1/(1+1)) * (1/(2+1)) = 1/6.
        let s = Partition::singletons(3);
        let p = pdp_log_prob(&s, 0.0, 1.0).unwrap().exp();
        assert!((p - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn hyper_logpdfs() {
        assert!((k_logpmf(1, 0.5).unwrap() - 0.5f64.ln()).abs() < 1e-12);
        assert!(k_logpmf(0, 0.5).is_err());
        let total: f64 = (1..=10_000)
            .map(|k| k_logpmf(k, 0.0625).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-6);

        for rho in [0.0, 0.3, 0.9] {
            assert!(rho_logpdf(rho, 1.0).unwrap().abs() < 1e-12);
        }
        assert!(rho_logpdf(1.0, 1.0).is_err());

        // Gamma(2,1) at 1.0: ln(1 e^{-1}) = -1.
        assert!((theta_logpdf(1.0, 2.0, 1.0).unwrap() + 1.0).abs() < 1e-12);
        assert!(theta_logpdf(0.0, 2.0, 1.0).is_err());

        assert!(p_logpdf(0.3, 1.0, 1.0).unwrap().abs() < 1e-12);
        // Beta(2,2) at 1/2 = 1.5.
        assert!((p_logpdf(0.5, 2.0, 2.0).unwrap() - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn extension_conditional_limits() {
        // Independent coordinates: the appended one is standard normal
        // regardless of the row.
        let eq = Equicorrelation::new(3, 1.0).unwrap();
        let (coef, sd) = eq.extend_conditional();
        assert_eq!(coef, 0.0);
        assert!((sd - 1.0).abs() < 1e-15);
        // Bivariate case: mean rho x, variance 1 - rho^2.
        let eq = Equicorrelation::new(1, 0.4).unwrap();
        let (coef, sd) = eq.extend_conditional();
        assert!((coef - 0.6).abs() < 1e-12);
        assert!((sd - (1.0f64 - 0.36).sqrt()).abs() < 1e-12);
        // Near-total correlation: the conditional spread collapses.
        let eq = Equicorrelation::new(4, 1e-12).unwrap();
        let (_, sd) = eq.extend_conditional();
        assert!(sd < 1e-5 && sd > 0.0);
    }

    #[test]
    fn fixed_k_single_column_no_ties_is_total() {
        let config = PriorConfig {
            fixed_k: Some(1),
            no_ties: true,
            ..PriorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let draw = sample_prior_poset(6, &config, &mut rng).unwrap();
            assert_eq!(draw.order.depth(), 6);
            assert!(draw.order.tie_pairs().is_empty());
        }
    }

    #[test]
    fn depth_distribution_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let config = PriorConfig {
            fixed_k: Some(1),
            no_ties: true,
            ..PriorConfig::default()
        };
        let hist = prior_depth_distribution(5, &config, 200, &mut rng).unwrap();
        assert_eq!(hist[4], 1.0);

        let hist2 =
            prior_depth_distribution(2, &PriorConfig::default(), 2000, &mut rng).unwrap();
        assert!((hist2.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_depth_nonincreasing_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut means = Vec::new();
        for k in [1usize, 2, 4, 8] {
            let config = PriorConfig {
                fixed_k: Some(k),
                no_ties: true,
                eta_rho: 1.0, // uniform rho, shared across k
                ..PriorConfig::default()
            };
            let mut acc = 0.0;
            let draws = 10_000;
            for _ in 0..draws {
                acc += sample_prior_poset(6, &config, &mut rng).unwrap().order.depth() as f64;
            }
            means.push(acc / draws as f64);
        }
        assert_eq!(means[0], 6.0);
        for w in means.windows(2) {
            assert!(w[1] <= w[0] + 0.05, "mean depth rose: {means:?}");
        }
    }

    #[test]
    fn prior_config_json_round_trip() {
        let config = PriorConfig::default();
        let json = serde_json::to_string(&config).unwrap();
        assert!(json.contains("\"eta_K\""));
        let back: PriorConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
        // Unknown keys are rejected.
        assert!(serde_json::from_str::<PriorConfig>(
            "{\"eta_a\":0.5,\"eta_b\":1.0,\"eta_rho\":1.0,\"eta_K\":0.5,\
             \"theta_prior\":[2.0,1.0],\"p_prior\":[1.0,1.0],\"bogus\":1}"
        )
        .is_err());
    }
}
