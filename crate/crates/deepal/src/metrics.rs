//! Error measures with abstention, disagreement-coefficient estimators,
//! a brute-force eluder dimension, and the covering-number bound on the
//! value-function coefficient.
//!
//! Continuous-domain quantities are Monte-Carlo estimates with reported
//! standard errors; finite-support quantities are exact. Suprema over
//! continuous scales are grid suprema, so the estimators are lower
//! bounds of the definitional values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{MarginalDistribution, ProblemInstance};
use crate::version_space::{Classifier, ClassifierPool, HypothesisPool};
use crate::{Point, Rng};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("grid must be nonempty")]
    EmptyGrid,
    #[error("monte-carlo sample count must be positive on a continuous instance")]
    ZeroMcSamples,
    #[error("parameter out of range: {0}")]
    Parameter(String),
}

/// A prediction that may abstain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Plus,
    Minus,
    Abstain,
}

impl Decision {
    pub fn from_sign(v: i8) -> Self {
        if v >= 0 {
            Decision::Plus
        } else {
            Decision::Minus
        }
    }
}

/// Classifier with a reject option.
pub trait TernaryClassifier: Send + Sync {
    fn decide(&self, x: &[f64]) -> Decision;
}

impl<F: Fn(&[f64]) -> Decision + Send + Sync> TernaryClassifier for F {
    fn decide(&self, x: &[f64]) -> Decision {
        self(x)
    }
}

/// Abstention cost parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChowParams {
    pub gamma: f64,
}

impl ChowParams {
    pub fn new(gamma: f64) -> Result<Self, MetricsError> {
        if !(0.0 < gamma && gamma < 0.5) {
            return Err(MetricsError::Parameter(format!(
                "gamma = {gamma} outside (0, 1/2)"
            )));
        }
        Ok(Self { gamma })
    }
}

/// Pointwise expected cost of a ternary decision: misclassification
/// probability, or `1/2 - gamma` on abstention.
fn pointwise_chow_cost(eta: f64, decision: Decision, gamma: f64) -> f64 {
    match decision {
        Decision::Plus => 1.0 - eta,
        Decision::Minus => eta,
        Decision::Abstain => 0.5 - gamma,
    }
}

/// Expectation of a pointwise function of x: exact on finite support,
/// Monte-Carlo with `n_mc` draws otherwise.
pub fn expect_over_marginal(
    instance: &ProblemInstance,
    f: &dyn Fn(&[f64]) -> f64,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<f64, MetricsError> {
    match &instance.marginal {
        MarginalDistribution::FiniteSupport { atoms } => {
            Ok(atoms.iter().map(|(x, p)| p * f(x)).sum())
        }
        _ => {
            if n_mc == 0 {
                return Err(MetricsError::ZeroMcSamples);
            }
            let mut acc = 0.0;
            for _ in 0..n_mc {
                let x = instance.marginal.sample(rng);
                acc += f(&x);
            }
            Ok(acc / n_mc as f64)
        }
    }
}

/// Chow's error: misclassification mass plus `(1/2 - gamma)` per unit
/// of abstention mass.
pub fn chow_error(
    instance: &ProblemInstance,
    classifier: &dyn TernaryClassifier,
    gamma: f64,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<f64, MetricsError> {
    expect_over_marginal(
        instance,
        &|x| pointwise_chow_cost(instance.eta.eval(x), classifier.decide(x), gamma),
        n_mc,
        rng,
    )
}

/// Bayes error of the instance, `E min(eta, 1 - eta)`.
pub fn bayes_error(
    instance: &ProblemInstance,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<f64, MetricsError> {
    expect_over_marginal(instance, &|x| instance.bayes_pointwise_err(x), n_mc, rng)
}

/// Pointwise excess of a ternary decision over the Bayes prediction:
/// the misclassification (or abstention) cost minus `min(eta, 1-eta)`.
pub fn pointwise_chow_excess(
    instance: &ProblemInstance,
    classifier: &dyn TernaryClassifier,
    gamma: f64,
    x: &[f64],
) -> f64 {
    let eta = instance.eta.eval(x);
    pointwise_chow_cost(eta, classifier.decide(x), gamma) - instance.bayes_pointwise_err(x)
}

/// Chow's excess error, the gap of `chow_error` to the Bayes error.
pub fn chow_excess_error(
    instance: &ProblemInstance,
    classifier: &dyn TernaryClassifier,
    gamma: f64,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<f64, MetricsError> {
    expect_over_marginal(
        instance,
        &|x| pointwise_chow_excess(instance, classifier, gamma, x),
        n_mc,
        rng,
    )
}

/// Output of a disagreement-coefficient estimator with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisCoeffEstimate {
    pub value: f64,
    /// The lower cutoff of the supremum grid (eps0 or gamma0).
    pub scale0: f64,
    pub mc_samples: usize,
    pub grid: Vec<f64>,
    /// Largest Monte-Carlo standard error among the grid cells.
    pub std_error: f64,
}

/// Points the estimators evaluate over: either the exact finite support
/// with masses, or an i.i.d. sample reused across all members.
fn estimation_points(
    marginal: &MarginalDistribution,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<(Vec<(Point, f64)>, bool), MetricsError> {
    match marginal {
        MarginalDistribution::FiniteSupport { atoms } => Ok((atoms.clone(), true)),
        _ => {
            if n_mc == 0 {
                return Err(MetricsError::ZeroMcSamples);
            }
            let w = 1.0 / n_mc as f64;
            Ok((
                (0..n_mc).map(|_| (marginal.sample(rng), w)).collect(),
                false,
            ))
        }
    }
}

/// Classifier disagreement coefficient: grid supremum over `eps` of
/// `P(DIS(ball(center, eps))) / eps`, floored at 1.
pub fn estimate_classifier_dis_coeff(
    pool: &ClassifierPool,
    center: &dyn Classifier,
    eps0: f64,
    eps_grid: &[f64],
    n_mc: usize,
    instance: &ProblemInstance,
    rng: &mut Rng,
) -> Result<DisCoeffEstimate, MetricsError> {
    if eps_grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    if eps_grid.iter().any(|&e| e <= eps0 || e > 1.0) {
        return Err(MetricsError::Parameter(
            "eps grid must lie in (eps0, 1]".into(),
        ));
    }
    let (points, exact) = estimation_points(&instance.marginal, n_mc, rng)?;
    // Disagreement mass of every member against the center, one pass.
    let center_preds: Vec<i8> = points.iter().map(|(x, _)| center.predict(x)).collect();
    let preds: Vec<Vec<i8>> = pool
        .members
        .iter()
        .map(|h| points.iter().map(|(x, _)| h.predict(x)).collect())
        .collect();
    let masses: Vec<f64> = preds
        .iter()
        .map(|p| {
            points
                .iter()
                .zip(p.iter().zip(&center_preds))
                .filter(|(_, (a, b))| a != b)
                .map(|((_, w), _)| w)
                .sum()
        })
        .collect();
    let mut best = 1.0f64;
    let mut worst_se = 0.0f64;
    for &eps in eps_grid {
        let ball: Vec<usize> = (0..pool.members.len())
            .filter(|&i| masses[i] <= eps)
            .collect();
        let dis_mass: f64 = if ball.is_empty() {
            0.0
        } else {
            points
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    let p0 = preds[ball[0]][*k];
                    ball.iter().any(|&i| preds[i][*k] != p0)
                })
                .map(|(_, (_, w))| w)
                .sum()
        };
        if !exact {
            let se = (dis_mass * (1.0 - dis_mass) / points.len() as f64).sqrt();
            worst_se = worst_se.max(se);
        }
        best = best.max(dis_mass / eps);
    }
    Ok(DisCoeffEstimate {
        value: best,
        scale0: eps0,
        mc_samples: if exact { 0 } else { n_mc },
        grid: eps_grid.to_vec(),
        std_error: worst_se,
    })
}

/// Value-function disagreement coefficient: grid supremum over
/// `(gamma, eps)` of `gamma^2/eps^2 * P(exists f with |f - f*|(x) >
/// gamma and ||f - f*||_D <= eps)`, floored at 1. The definitional sup
/// over all marginals is evaluated only at the supplied one.
pub fn estimate_value_dis_coeff(
    pool: &HypothesisPool,
    fstar: usize,
    gamma0: f64,
    gamma_grid: &[f64],
    eps_grid: &[f64],
    n_mc: usize,
    marginal: &MarginalDistribution,
    rng: &mut Rng,
) -> Result<DisCoeffEstimate, MetricsError> {
    if gamma_grid.is_empty() || eps_grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    if gamma_grid.iter().any(|&g| g <= gamma0) {
        return Err(MetricsError::Parameter(
            "gamma grid must exceed gamma0".into(),
        ));
    }
    let (points, exact) = estimation_points(marginal, n_mc, rng)?;
    let star = &pool.members[fstar];
    // Per-member pointwise deviations and L2(D) distances, one pass.
    let devs: Vec<Vec<f64>> = pool
        .members
        .iter()
        .map(|f| {
            points
                .iter()
                .map(|(x, _)| (f.value(x) - star.value(x)).abs())
                .collect()
        })
        .collect();
    let norms: Vec<f64> = devs
        .iter()
        .map(|dv| {
            points
                .iter()
                .zip(dv)
                .map(|((_, w), d)| w * d * d)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut best = 1.0f64;
    let mut worst_se = 0.0f64;
    for &eps in eps_grid {
        let inside: Vec<usize> = (0..pool.members.len())
            .filter(|&i| norms[i] <= eps)
            .collect();
        for &gamma in gamma_grid {
            let p: f64 = points
                .iter()
                .enumerate()
                .filter(|(k, _)| inside.iter().any(|&i| devs[i][*k] > gamma))
                .map(|(_, (_, w))| w)
                .sum();
            if !exact {
                let se = (p * (1.0 - p) / points.len() as f64).sqrt();
                worst_se = worst_se.max(se * gamma * gamma / (eps * eps));
            }
            best = best.max(gamma * gamma / (eps * eps) * p);
        }
    }
    Ok(DisCoeffEstimate {
        value: best,
        scale0: gamma0,
        mc_samples: if exact { 0 } else { n_mc },
        grid: eps_grid.to_vec(),
        std_error: worst_se,
    })
}

/// Longest sequence found by exhaustive depth-first search in which
/// every point is `gamma`-surprising for some pool member that was
/// consistent (within `gamma^2` summed square deviation) with the
/// prefix. `capped` reports that the search hit `max_len`, i.e. the
/// true value is `>= length`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EluderEstimate {
    pub length: usize,
    pub capped: bool,
}

pub fn eluder_dimension_bruteforce(
    pool: &HypothesisPool,
    fstar: usize,
    gamma: f64,
    candidate_points: &[Point],
    max_len: usize,
) -> EluderEstimate {
    let star = &pool.members[fstar];
    // dev[i][k] = f_i(x_k) - f*(x_k)
    let dev: Vec<Vec<f64>> = pool
        .members
        .iter()
        .map(|f| {
            candidate_points
                .iter()
                .map(|x| f.value(x) - star.value(x))
                .collect()
        })
        .collect();
    let gamma_sq = gamma * gamma;
    let mut best = 0usize;
    // prefix_sq[i] = sum over chosen points of dev[i]^2
    fn dfs(
        dev: &[Vec<f64>],
        gamma: f64,
        gamma_sq: f64,
        prefix_sq: &mut Vec<f64>,
        depth: usize,
        best: &mut usize,
        max_len: usize,
        n_points: usize,
    ) {
        *best = (*best).max(depth);
        if depth >= max_len {
            return;
        }
        for k in 0..n_points {
            // Is some member gamma-surprising at x_k yet consistent
            // with the prefix?
            let ok = dev
                .iter()
                .zip(prefix_sq.iter())
                .any(|(dv, &ps)| ps <= gamma_sq && dv[k].abs() > gamma);
            if ok {
                for (i, dv) in dev.iter().enumerate() {
                    prefix_sq[i] += dv[k] * dv[k];
                }
                dfs(dev, gamma, gamma_sq, prefix_sq, depth + 1, best, max_len, n_points);
                for (i, dv) in dev.iter().enumerate() {
                    prefix_sq[i] -= dv[k] * dv[k];
                }
                if *best >= max_len {
                    return;
                }
            }
        }
    }
    let mut prefix = vec![0.0; pool.members.len()];
    dfs(
        &dev,
        gamma,
        gamma_sq,
        &mut prefix,
        0,
        &mut best,
        max_len,
        candidate_points.len(),
    );
    EluderEstimate {
        length: best,
        capped: best >= max_len,
    }
}

/// Covering bound on the value-function disagreement coefficient of an
/// `(L, kappa)`-approximately Lipschitz class on a radius-`r` domain:
/// `c (L r / kappa')^d`.
pub fn covering_theta_bound(l: f64, r: f64, kappa_prime: f64, d: usize, c: f64) -> f64 {
    c * (l * r / kappa_prime).powi(d as i32)
}

/// `n` log-spaced values spanning `[lo, hi]`, the default sup grid.
pub fn log_spaced_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
