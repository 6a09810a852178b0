//! Bayesian inference of partial orders with ties from noisy ranked-list
//! data: exact linear-extension combinatorics, a Poisson-Dirichlet prior over
//! tie-clustered latent-variable orders, noise-free / queue-jumping / Mallows
//! observation models, a Metropolis-within-Gibbs sampler, and the posterior
//! summary toolchain (consensus orders, ROC curves, Bayes factors, WAIC).

pub mod io;
pub mod linext;
pub mod mcmc;
pub mod obs;
pub mod poset;
pub mod prior;
pub mod summary;
