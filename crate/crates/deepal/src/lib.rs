//! Simulation library for disagreement-based and abstention-based active
//! learning over small ReLU networks and finite hypothesis pools.
//!
//! The crate is organised around a simulated labelling world ([`problem`]),
//! a self-contained feedforward-network regression oracle ([`nets`]),
//! finite-pool version-space machinery with confidence bounds
//! ([`version_space`]), the two epoch-based selective-sampling algorithms
//! ([`neuralcal`] and [`neuralcalpp`]), error/complexity estimators
//! ([`metrics`]) and a reproducible experiment runner ([`harness`]).

pub mod harness;
pub mod metrics;
pub mod nets;
pub mod neuralcal;
pub mod neuralcalpp;
pub mod problem;
pub mod version_space;

/// A point of the instance space, a vector in `R^d`.
pub type Point = Vec<f64>;

/// Concrete network types for the two supported scalar widths.
pub type Mlp32 = nets::Mlp<f32>;
pub type Mlp64 = nets::Mlp<f64>;

/// Seedable random stream used everywhere in the crate.
///
/// ChaCha is counter based: independent purposes within one run get their
/// own stream id, so adding an audit never perturbs the query sequence.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Derive the rng for `(master_seed, run_index, purpose)`.
pub fn run_rng(master_seed: u64, run_index: u64, purpose: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(master_seed.wrapping_add(run_index));
    rng.set_stream(purpose);
    rng
}

/// Format a float with 17 significant digits, enough for a bit-exact
/// decimal round trip of any finite `f64`.
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}
