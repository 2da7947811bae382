//! Simulated classification problems: a marginal over the instance space,
//! a conditional probability `eta(x) = P(y = +1 | x)` and noise metadata.
//!
//! The instance families here are implementation choices: the underlying
//! theory only states the noise conditions, not concrete generators. Each
//! family documents the closed form it realises so tests can derive exact
//! expected values.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Point, Rng};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("finite-support masses sum to {0}, expected 1")]
    MassSum(f64),
    #[error("monte-carlo sample count must be positive on a continuous instance")]
    ZeroMcSamples,
    #[error("empty probe grid")]
    EmptyGrid,
    #[error(
        "sphere packing infeasible at desk scale: found {found} of {target} points \
         within {budget} proposals (gamma={gamma}, d={dim})"
    )]
    PackingBudget {
        found: usize,
        target: usize,
        budget: usize,
        gamma: f64,
        dim: usize,
    },
}

/// `eta(x) = P(y = +1 | x)`, with an optional declared Lipschitz constant.
#[derive(Clone)]
pub struct ConditionalProbability {
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub lipschitz_const: Option<f64>,
    pub description: String,
}

impl ConditionalProbability {
    pub fn new(
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        lipschitz_const: Option<f64>,
        description: impl Into<String>,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            lipschitz_const,
            description: description.into(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
}

impl std::fmt::Debug for ConditionalProbability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConditionalProbability")
            .field("lipschitz_const", &self.lipschitz_const)
            .field("description", &self.description)
            .finish()
    }
}

/// The marginal distribution over the instance space.
#[derive(Clone, Debug)]
pub enum MarginalDistribution {
    /// Atoms with probability masses summing to one.
    FiniteSupport { atoms: Vec<(Point, f64)> },
    /// Uniform over the unit cube `[0,1]^d`.
    UniformCube { dim: usize },
}

impl MarginalDistribution {
    pub fn finite(atoms: Vec<(Point, f64)>) -> Result<Self, ProblemError> {
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ProblemError::MassSum(total));
        }
        Ok(Self::FiniteSupport { atoms })
    }

    pub fn is_finite_support(&self) -> bool {
        matches!(self, Self::FiniteSupport { .. })
    }

    pub fn sample(&self, rng: &mut Rng) -> Point {
        match self {
            Self::FiniteSupport { atoms } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (x, p) in atoms {
                    acc += p;
                    if u < acc {
                        return x.clone();
                    }
                }
                atoms.last().expect("nonempty support").0.clone()
            }
            Self::UniformCube { dim } => (0..*dim).map(|_| rng.gen::<f64>()).collect(),
        }
    }
}

/// Declared noise regime of an instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseRegime {
    /// Margin mass decays as `P(|eta - 1/2| <= t) <= c t^beta`.
    Tsybakov { beta: f64, c: f64 },
    /// Zero margin mass within `tau0` of the boundary value 1/2.
    Massart { tau0: f64 },
    None,
}

/// How a label query is answered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMode {
    /// `1` with probability `eta(x)`, else `0`.
    Bernoulli,
    /// The conditional expectation `eta(x)` itself.
    ConditionalExpectation,
}

/// A labeled example in both label conventions.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub x: Point,
    /// Label in `{+1, -1}`.
    pub y: i8,
    /// Label in `{0, 1}`; `y01 = (y + 1) / 2`.
    pub y01: f64,
}

impl LabeledExample {
    pub fn from_pm(x: Point, y: i8) -> Self {
        debug_assert!(y == 1 || y == -1);
        Self {
            x,
            y,
            y01: f64::from(y + 1) / 2.0,
        }
    }
}

/// The simulated world that answers label queries.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub dim: usize,
    pub marginal: MarginalDistribution,
    pub eta: ConditionalProbability,
    pub noise: NoiseRegime,
    pub domain_radius: f64,
    pub label_mode: LabelMode,
}

impl ProblemInstance {
    /// Bayes classifier `h*(x) = sgn(2 eta(x) - 1)`, ties at 1/2 to `+1`.
    pub fn bayes_predict(&self, x: &[f64]) -> i8 {
        if self.eta.eval(x) >= 0.5 {
            1
        } else {
            -1
        }
    }

    /// `P(y != h*(x) | x) = min(eta, 1 - eta)` under the tie rule.
    pub fn bayes_pointwise_err(&self, x: &[f64]) -> f64 {
        let e = self.eta.eval(x);
        e.min(1.0 - e)
    }
}

/// Draw one point from the marginal.
pub fn sample_point(instance: &ProblemInstance, rng: &mut Rng) -> Point {
    instance.marginal.sample(rng)
}

/// Answer a label query at `x`: the `{0,1}` regression target in bernoulli
/// mode, `eta(x)` exactly in conditional-expectation mode.
pub fn sample_label(instance: &ProblemInstance, x: &[f64], rng: &mut Rng) -> f64 {
    let eta = instance.eta.eval(x);
    match instance.label_mode {
        LabelMode::Bernoulli => {
            if rng.gen::<f64>() < eta {
                1.0
            } else {
                0.0
            }
        }
        LabelMode::ConditionalExpectation => eta,
    }
}

/// Standard excess error `err(h) - err(h*)` of a deterministic classifier.
///
/// Exact on finite support via `sum_x p(x) |2 eta(x) - 1| 1(h(x) != h*(x))`;
/// a Monte-Carlo estimate with `n_mc` draws otherwise.
pub fn bayes_excess_error(
    instance: &ProblemInstance,
    classifier: &dyn Fn(&[f64]) -> i8,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<f64, ProblemError> {
    match &instance.marginal {
        MarginalDistribution::FiniteSupport { atoms } => Ok(atoms
            .iter()
            .map(|(x, p)| {
                if classifier(x) != instance.bayes_predict(x) {
                    p * (2.0 * instance.eta.eval(x) - 1.0).abs()
                } else {
                    0.0
                }
            })
            .sum()),
        _ => {
            if n_mc == 0 {
                return Err(ProblemError::ZeroMcSamples);
            }
            let mut acc = 0.0;
            for _ in 0..n_mc {
                let x = instance.marginal.sample(rng);
                if classifier(&x) != instance.bayes_predict(&x) {
                    acc += (2.0 * instance.eta.eval(&x) - 1.0).abs();
                }
            }
            Ok(acc / n_mc as f64)
        }
    }
}

/// Polynomial-margin family on the uniform unit cube.
///
/// For `beta > 0` the first coordinate drives
/// `eta(x) = 1/2 + sgn(x1 - 1/2) |x1 - 1/2|^{1/beta} / 2`, whose margin
/// profile is exactly `P(|eta - 1/2| <= t) = min(1, 2 (2t)^beta)`.
/// For `beta = 0` the margin-free `eta(x) = x1`.
pub fn make_tsybakov_instance(beta: f64, d: usize) -> Result<ProblemInstance, ProblemError> {
    if beta < 0.0 {
        return Err(ProblemError::Parameter(format!("beta = {beta} < 0")));
    }
    if d == 0 {
        return Err(ProblemError::Parameter("d = 0".into()));
    }
    let eta = if beta == 0.0 {
        ConditionalProbability::new(|x: &[f64]| x[0], Some(1.0), "eta(x) = x1")
    } else {
        let inv_beta = 1.0 / beta;
        // Lipschitz only for beta <= 1; leave undeclared otherwise.
        let lip = if beta <= 1.0 { None } else { Some(inv_beta / 2.0) };
        ConditionalProbability::new(
            move |x: &[f64]| {
                let s = x[0] - 0.5;
                0.5 + s.signum() * s.abs().powf(inv_beta) / 2.0
            },
            lip,
            format!("beta-exponent family, beta = {beta}"),
        )
    };
    Ok(ProblemInstance {
        dim: d,
        marginal: MarginalDistribution::UniformCube { dim: d },
        eta,
        noise: NoiseRegime::Tsybakov {
            beta,
            c: 2f64.powf(beta + 1.0),
        },
        domain_radius: (d as f64).sqrt(),
        label_mode: LabelMode::Bernoulli,
    })
}

/// Constant-margin family `eta(x) = 1/2 + tau0 sgn(x1 - 1/2)` on the
/// uniform unit cube; the jump point carries zero mass.
pub fn make_massart_instance(tau0: f64, d: usize) -> Result<ProblemInstance, ProblemError> {
    if !(0.0 < tau0 && tau0 < 0.5) {
        return Err(ProblemError::Parameter(format!(
            "tau0 = {tau0} outside (0, 1/2)"
        )));
    }
    if d == 0 {
        return Err(ProblemError::Parameter("d = 0".into()));
    }
    let eta = ConditionalProbability::new(
        move |x: &[f64]| {
            if x[0] >= 0.5 {
                0.5 + tau0
            } else {
                0.5 - tau0
            }
        },
        None,
        format!("massart step, tau0 = {tau0}"),
    );
    Ok(ProblemInstance {
        dim: d,
        marginal: MarginalDistribution::UniformCube { dim: d },
        eta,
        noise: NoiseRegime::Massart { tau0 },
        domain_radius: (d as f64).sqrt(),
        label_mode: LabelMode::Bernoulli,
    })
}

/// The single-ReLU regression value used by the hard instance:
/// `relu(<w, x> - (1 - 4 gamma)) + (1/2 - 2 gamma)`.
pub fn single_relu_value(w: &[f64], x: &[f64], gamma: f64) -> f64 {
    let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    (dot - (1.0 - 4.0 * gamma)).max(0.0) + (0.5 - 2.0 * gamma)
}

/// Tuning knobs for the greedy sphere-packing construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingConfig {
    /// Number of points to collect; defaults to the existence bound
    /// `ceil((1 / 8 gamma)^{d/2})` when `None`.
    pub target: Option<usize>,
    /// Rejection-sampling proposal budget.
    pub proposal_budget: usize,
}

impl Default for PackingConfig {
    fn default() -> Self {
        Self {
            target: None,
            proposal_budget: 1_000_000,
        }
    }
}

/// A hard instance: uniform marginal on a sphere packing, with the true
/// regression function a single ReLU ridge centred at a hidden packing
/// point, and conditional-expectation label feedback.
#[derive(Clone, Debug)]
pub struct HardInstance {
    pub instance: ProblemInstance,
    pub packing: Vec<Point>,
    /// Index of the hidden direction `w*` within `packing`.
    pub truth: usize,
    pub gamma: f64,
}

/// Greedy rejection packing on the unit sphere with pairwise inner
/// products at most `1 - 4 gamma`.
pub fn greedy_sphere_packing(
    gamma: f64,
    d: usize,
    target: usize,
    proposal_budget: usize,
    rng: &mut Rng,
) -> Result<Vec<Point>, ProblemError> {
    let max_dot = 1.0 - 4.0 * gamma;
    let mut points: Vec<Point> = Vec::with_capacity(target);
    for _ in 0..proposal_budget {
        if points.len() >= target {
            break;
        }
        let mut x: Point = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let ok = points
            .iter()
            .all(|p| p.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= max_dot);
        if ok {
            points.push(x);
        }
    }
    if points.len() < target {
        return Err(ProblemError::PackingBudget {
            found: points.len(),
            target,
            budget: proposal_budget,
            gamma,
            dim: d,
        });
    }
    Ok(points)
}

/// Build the lower-bound hard instance for `gamma in (0, 1/8)`, `d >= 2`.
pub fn make_single_relu_hard_instance(
    gamma: f64,
    d: usize,
    cfg: PackingConfig,
    rng: &mut Rng,
) -> Result<HardInstance, ProblemError> {
    if !(0.0 < gamma && gamma < 0.125) {
        return Err(ProblemError::Parameter(format!(
            "gamma = {gamma} outside (0, 1/8)"
        )));
    }
    if d < 2 {
        return Err(ProblemError::Parameter(format!("d = {d} < 2")));
    }
    let target = cfg
        .target
        .unwrap_or_else(|| (1.0 / (8.0 * gamma)).powf(d as f64 / 2.0).ceil() as usize);
    let packing = greedy_sphere_packing(gamma, d, target, cfg.proposal_budget, rng)?;
    let n = packing.len();
    let truth = rng.gen_range(0..n);
    let w_star = packing[truth].clone();
    let atoms: Vec<(Point, f64)> = packing
        .iter()
        .map(|x| (x.clone(), 1.0 / n as f64))
        .collect();
    let eta = ConditionalProbability::new(
        move |x: &[f64]| single_relu_value(&w_star, x, gamma),
        Some(1.0),
        format!("single-relu ridge, gamma = {gamma}"),
    );
    Ok(HardInstance {
        instance: ProblemInstance {
            dim: d,
            marginal: MarginalDistribution::finite(atoms)?,
            eta,
            noise: NoiseRegime::Massart { tau0: gamma },
            domain_radius: 1.0,
            label_mode: LabelMode::ConditionalExpectation,
        },
        packing,
        truth,
        gamma,
    })
}

/// Estimate `P(|eta - 1/2| <= t)` over a grid of `t` values.
///
/// Exact on finite support. On continuous instances a single Monte-Carlo
/// sample of `n_mc` margins serves every `t`, so the profile is monotone
/// nondecreasing by construction.
pub fn estimate_noise_profile(
    instance: &ProblemInstance,
    t_grid: &[f64],
    n_mc: usize,
    rng: &mut Rng,
) -> Result<Vec<(f64, f64)>, ProblemError> {
    if t_grid.is_empty() {
        return Err(ProblemError::EmptyGrid);
    }
    match &instance.marginal {
        MarginalDistribution::FiniteSupport { atoms } => Ok(t_grid
            .iter()
            .map(|&t| {
                let p = atoms
                    .iter()
                    .filter(|(x, _)| (instance.eta.eval(x) - 0.5).abs() <= t)
                    .map(|(_, p)| p)
                    .sum();
                (t, p)
            })
            .collect()),
        _ => {
            if n_mc == 0 {
                return Err(ProblemError::ZeroMcSamples);
            }
            let margins: Vec<f64> = (0..n_mc)
                .map(|_| {
                    let x = instance.marginal.sample(rng);
                    (instance.eta.eval(&x) - 0.5).abs()
                })
                .collect();
            Ok(t_grid
                .iter()
                .map(|&t| {
                    let count = margins.iter().filter(|&&m| m <= t).count();
                    (t, count as f64 / n_mc as f64)
                })
                .collect())
        }
    }
}

/// Quasi-uniform probe grid on `[0,1]^d` (Kronecker sequence), used for
/// continuous-domain invariant checks and the preprocessing filter.
pub fn probe_grid(dim: usize, n: usize) -> Vec<Point> {
    // Irrational shifts from powers of the plastic constant.
    let mut alphas = Vec::with_capacity(dim);
    let plastic = 1.324_717_957_244_746_f64;
    let mut a = 1.0 / plastic;
    for _ in 0..dim {
        alphas.push(a);
        a /= plastic;
    }
    (0..n)
        .map(|i| {
            alphas
                .iter()
                .map(|alpha| {
                    let v = 0.5 + alpha * (i as f64 + 1.0);
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}

/// Serializable description of an instance; building it twice with the
/// same seed reproduces every sample bit for bit.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSpec {
    Tsybakov { beta: f64, dim: usize },
    Massart { tau0: f64, dim: usize },
    SingleReluHard {
        gamma: f64,
        dim: usize,
        seed: u64,
        #[serde(default)]
        packing: PackingConfig,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ProblemInstance, ProblemError> {
        match self {
            Self::Tsybakov { beta, dim } => make_tsybakov_instance(*beta, *dim),
            Self::Massart { tau0, dim } => make_massart_instance(*tau0, *dim),
            Self::SingleReluHard {
                gamma,
                dim,
                seed,
                packing,
            } => {
                let mut rng = crate::run_rng(*seed, 0, 0);
                Ok(make_single_relu_hard_instance(*gamma, *dim, *packing, &mut rng)?.instance)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Tsybakov { dim, .. }
            | Self::Massart { dim, .. }
            | Self::SingleReluHard { dim, .. } => *dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run_rng;

    fn atom_instance(atoms: Vec<(Point, f64)>, eta: impl Fn(&[f64]) -> f64 + Send + Sync + 'static)
        -> ProblemInstance
    {
        ProblemInstance {
            dim: atoms[0].0.len(),
            marginal: MarginalDistribution::finite(atoms).unwrap(),
            eta: ConditionalProbability::new(eta, None, "test"),
            noise: NoiseRegime::None,
            domain_radius: 1.0,
            label_mode: LabelMode::Bernoulli,
        }
    }

    #[test]
    fn degenerate_support_always_returns_its_atom() {
        let inst = atom_instance(vec![(vec![0.2], 1.0)], |_| 0.5);
        let mut rng = run_rng(1, 0, 0);
        for _ in 0..100 {
            assert_eq!(sample_point(&inst, &mut rng), vec![0.2]);
        }
    }

    #[test]
    fn uniform_cube_sampler_mean() {
        let inst = make_tsybakov_instance(1.0, 1).unwrap();
        let mut rng = run_rng(2, 0, 0);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sample_point(&inst, &mut rng)[0]).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn two_atom_frequencies() {
        let inst = atom_instance(vec![(vec![0.0], 0.5), (vec![1.0], 0.5)], |_| 0.5);
        let mut rng = run_rng(3, 0, 0);
        let n = 10_000;
        let ones = (0..n).filter(|_| sample_point(&inst, &mut rng)[0] == 1.0).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq = {freq}");
    }

    #[test]
    fn labels_deterministic_when_eta_is_one() {
        let inst = atom_instance(vec![(vec![0.0], 1.0)], |_| 1.0);
        let mut rng = run_rng(4, 0, 0);
        for _ in 0..100 {
            assert_eq!(sample_label(&inst, &[0.0], &mut rng), 1.0);
        }
    }

    #[test]
    fn bernoulli_labels_match_eta_in_mean() {
        let inst = atom_instance(vec![(vec![0.0], 1.0)], |_| 0.5);
        let mut rng = run_rng(5, 0, 0);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| sample_label(&inst, &[0.0], &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn conditional_expectation_mode_passes_eta_through() {
        let mut inst = atom_instance(vec![(vec![0.0], 1.0)], |_| 0.3);
        inst.label_mode = LabelMode::ConditionalExpectation;
        let mut rng = run_rng(6, 0, 0);
        assert_eq!(sample_label(&inst, &[0.0], &mut rng), 0.3);
    }

    #[test]
    fn bayes_classifier_has_zero_excess() {
        let inst = atom_instance(
            vec![(vec![0.0], 0.3), (vec![1.0], 0.7)],
            |x| if x[0] > 0.5 { 0.9 } else { 0.2 },
        );
        let mut rng = run_rng(7, 0, 0);
        let h = |x: &[f64]| inst.bayes_predict(x);
        assert_eq!(bayes_excess_error(&inst, &h, 0, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn single_atom_excess_hand_value() {
        let inst = atom_instance(vec![(vec![0.0], 1.0)], |_| 0.7);
        let mut rng = run_rng(8, 0, 0);
        let h = |_: &[f64]| -1i8;
        let excess = bayes_excess_error(&inst, &h, 0, &mut rng).unwrap();
        assert!((excess - 0.4).abs() < 1e-15, "excess = {excess}");
    }

    #[test]
    fn tie_point_contributes_zero() {
        let inst = atom_instance(vec![(vec![0.0], 1.0)], |_| 0.5);
        let mut rng = run_rng(9, 0, 0);
        let h = |_: &[f64]| 1i8;
        assert_eq!(bayes_excess_error(&inst, &h, 0, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn mc_excess_requires_samples_on_continuous_instances() {
        let inst = make_tsybakov_instance(1.0, 1).unwrap();
        let mut rng = run_rng(10, 0, 0);
        let h = |_: &[f64]| 1i8;
        assert!(matches!(
            bayes_excess_error(&inst, &h, 0, &mut rng),
            Err(ProblemError::ZeroMcSamples)
        ));
    }

    #[test]
    fn tsybakov_formula_evaluations() {
        let inst = make_tsybakov_instance(1.0, 1).unwrap();
        assert!((inst.eta.eval(&[0.75]) - 0.625).abs() < 1e-15);
        for beta in [0.5, 1.0, 2.0] {
            let inst = make_tsybakov_instance(beta, 1).unwrap();
            assert!((inst.eta.eval(&[0.5]) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn tsybakov_rejects_negative_beta() {
        assert!(make_tsybakov_instance(-0.1, 1).is_err());
    }

    /// Independent quadrature oracle for the beta = 1 margin profile.
    fn margin_mass_by_quadrature(inst: &ProblemInstance, t: f64) -> f64 {
        let n = 200_000;
        (0..n)
            .filter(|i| {
                let x = (*i as f64 + 0.5) / n as f64;
                (inst.eta.eval(&[x]) - 0.5).abs() <= t
            })
            .count() as f64
            / n as f64
    }

    #[test]
    fn tsybakov_margin_profile_matches_quadrature() {
        let inst = make_tsybakov_instance(1.0, 1).unwrap();
        let exact = margin_mass_by_quadrature(&inst, 0.1);
        assert!((exact - 0.4).abs() < 1e-4, "quadrature = {exact}");
        let mut rng = run_rng(11, 0, 0);
        let prof = estimate_noise_profile(&inst, &[0.1], 100_000, &mut rng).unwrap();
        assert!((prof[0].1 - exact).abs() < 0.01, "mc = {}", prof[0].1);
    }

    #[test]
    fn massart_formula_and_margin() {
        let inst = make_massart_instance(0.2, 1).unwrap();
        assert!((inst.eta.eval(&[0.8]) - 0.7).abs() < 1e-15);
        assert!((inst.eta.eval(&[0.1]) - 0.3).abs() < 1e-15);
        let min_margin = probe_grid(1, 10_000)
            .iter()
            .map(|x| (inst.eta.eval(x) - 0.5).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((min_margin - 0.2).abs() < 1e-15);
        assert!(make_massart_instance(0.5, 1).is_err());
        assert!(make_massart_instance(0.0, 1).is_err());
    }

    #[test]
    fn massart_noise_profile_band_edges() {
        let inst = make_massart_instance(0.2, 1).unwrap();
        let mut rng = run_rng(12, 0, 0);
        let prof = estimate_noise_profile(&inst, &[0.1, 0.3], 10_000, &mut rng).unwrap();
        assert_eq!(prof[0].1, 0.0);
        assert_eq!(prof[1].1, 1.0);
    }

    #[test]
    fn noise_profile_is_monotone() {
        let inst = make_tsybakov_instance(1.0, 1).unwrap();
        let mut rng = run_rng(13, 0, 0);
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.05).collect();
        let prof = estimate_noise_profile(&inst, &grid, 20_000, &mut rng).unwrap();
        for w in prof.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn noise_profile_rejects_empty_grid() {
        let inst = make_massart_instance(0.2, 1).unwrap();
        let mut rng = run_rng(14, 0, 0);
        assert!(matches!(
            estimate_noise_profile(&inst, &[], 10, &mut rng),
            Err(ProblemError::EmptyGrid)
        ));
    }

    #[test]
    fn hard_instance_geometry_and_eta_values() {
        let gamma = 1.0 / 16.0;
        let mut rng = run_rng(15, 0, 0);
        let hard =
            make_single_relu_hard_instance(gamma, 2, PackingConfig::default(), &mut rng).unwrap();
        assert!(hard.packing.len() >= 2);
        for p in &hard.packing {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
        }
        for (i, a) in hard.packing.iter().enumerate() {
            for b in hard.packing.iter().skip(i + 1) {
                let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
                assert!(dot <= 1.0 - 4.0 * gamma + 1e-12);
            }
        }
        let w_star = &hard.packing[hard.truth];
        let eta_star = hard.instance.eta.eval(w_star);
        assert!((eta_star - (0.5 + 2.0 * gamma)).abs() < 1e-12);
        for (i, x) in hard.packing.iter().enumerate() {
            if i != hard.truth {
                let v = hard.instance.eta.eval(x);
                assert!((v - (0.5 - 2.0 * gamma)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hard_instance_wrong_classifier_excess() {
        // Thresholding f_w at 1/2 for w != w* flips both w and w*, each
        // carrying |2 eta - 1| = 4 gamma, so the exact excess is
        // 2 * (4 gamma) / n.
        let gamma = 1.0 / 16.0;
        let mut rng = run_rng(16, 0, 0);
        let cfg = PackingConfig { target: Some(5), proposal_budget: 1_000_000 };
        let hard = make_single_relu_hard_instance(gamma, 2, cfg, &mut rng).unwrap();
        let n = hard.packing.len() as f64;
        let wrong = (hard.truth + 1) % hard.packing.len();
        let w = hard.packing[wrong].clone();
        let h = move |x: &[f64]| if single_relu_value(&w, x, gamma) >= 0.5 { 1i8 } else { -1 };
        let excess = bayes_excess_error(&hard.instance, &h, 0, &mut rng).unwrap();
        assert!(
            (excess - 8.0 * gamma / n).abs() < 1e-14,
            "excess = {excess}, expected {}",
            8.0 * gamma / n
        );
    }

    #[test]
    fn hard_instance_rejects_bad_parameters_and_budget() {
        let mut rng = run_rng(17, 0, 0);
        assert!(make_single_relu_hard_instance(0.2, 2, PackingConfig::default(), &mut rng).is_err());
        assert!(make_single_relu_hard_instance(0.05, 1, PackingConfig::default(), &mut rng).is_err());
        let cfg = PackingConfig { target: Some(1000), proposal_budget: 50 };
        assert!(matches!(
            make_single_relu_hard_instance(0.05, 2, cfg, &mut rng),
            Err(ProblemError::PackingBudget { .. })
        ));
    }

    #[test]
    fn eta_stays_in_unit_interval_on_probes() {
        let instances = [
            make_tsybakov_instance(0.0, 1).unwrap(),
            make_tsybakov_instance(1.0, 1).unwrap(),
            make_tsybakov_instance(3.0, 1).unwrap(),
            make_massart_instance(0.2, 1).unwrap(),
        ];
        for inst in &instances {
            for x in probe_grid(1, 1000) {
                let v = inst.eta.eval(&x);
                assert!((0.0..=1.0).contains(&v), "eta({x:?}) = {v}");
            }
        }
    }

    #[test]
    fn instance_spec_round_trips_and_reproduces_samples() {
        let spec = InstanceSpec::SingleReluHard {
            gamma: 1.0 / 16.0,
            dim: 2,
            seed: 42,
            packing: PackingConfig::default(),
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: InstanceSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        let a = spec.build().unwrap();
        let b = back.build().unwrap();
        let mut ra = run_rng(7, 0, 1);
        let mut rb = run_rng(7, 0, 1);
        for _ in 0..100 {
            assert_eq!(sample_point(&a, &mut ra), sample_point(&b, &mut rb));
        }
    }
}
