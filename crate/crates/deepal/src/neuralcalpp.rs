//! Abstention-based selective sampling: confidence-band abstain and
//! query rules, epoch schedule with square-loss elimination, the
//! oracle-efficient confidence-interval offsets, and the randomized
//! conversion back to a standard classifier.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{pointwise_chow_excess, Decision};
use crate::nets::{clip_network, fit_weighted_sq, MlpArchitecture, OracleConfig};
use crate::problem::{sample_label, sample_point, ProblemInstance};
use crate::version_space::{
    active_set_regressors, exact_pool_fit, oracle_bound, ActiveSet,
    BoundDirection, Classifier, ConfidenceInterval, HypothesisPool, LogEntry, QueryLog,
    RegressionFn,
};
use crate::{Point, Rng};

#[derive(Debug, Error)]
pub enum NeuralCalPpError {
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("no feasible kappa above machine precision")]
    NoFeasibleKappa,
    #[error(transparent)]
    VersionSpace(#[from] crate::version_space::VersionSpaceError),
    #[error(transparent)]
    Net(#[from] crate::nets::NetError),
}

/// Epoch schedule and elimination thresholds:
/// `T = ceil(theta_val pdim / (epsilon gamma))`, `M = ceil(log2 T)`,
/// `C_delta = c0 pdim log2(T/delta)`, `beta[m] = 3 (M - m + 1) C_delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralCalPpSchedule {
    pub epsilon: f64,
    pub gamma: f64,
    pub delta: f64,
    pub pdim: usize,
    pub theta_val: f64,
    pub c0: f64,
    pub t_total: usize,
    pub m_epochs: usize,
    pub c_delta: f64,
    /// Indexed by epoch; `beta[0]` is unused and set to 0.
    pub beta: Vec<f64>,
}

pub fn neuralcalpp_schedule(
    epsilon: f64,
    gamma: f64,
    delta: f64,
    pdim: usize,
    theta_val: f64,
    c0: f64,
) -> Result<NeuralCalPpSchedule, NeuralCalPpError> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(NeuralCalPpError::Parameter(format!(
            "epsilon = {epsilon} outside (0,1)"
        )));
    }
    if !(0.0 < gamma && gamma < 0.5) {
        return Err(NeuralCalPpError::Parameter(format!(
            "gamma = {gamma} outside (0, 1/2)"
        )));
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(NeuralCalPpError::Parameter(format!(
            "delta = {delta} outside (0,1)"
        )));
    }
    if pdim == 0 || theta_val < 1.0 {
        return Err(NeuralCalPpError::Parameter(
            "pdim >= 1 and theta_val >= 1 required".into(),
        ));
    }
    let t_total = (theta_val * pdim as f64 / (epsilon * gamma)).ceil() as usize;
    let m_epochs = (t_total.max(2) as f64).log2().ceil() as usize;
    let c_delta = c0 * pdim as f64 * (t_total as f64 / delta).log2();
    let mut beta = vec![0.0];
    beta.extend((1..=m_epochs).map(|m| 3.0 * (m_epochs - m + 1) as f64 * c_delta));
    Ok(NeuralCalPpSchedule {
        epsilon,
        gamma,
        delta,
        pdim,
        theta_val,
        c0,
        t_total,
        m_epochs,
        c_delta,
        beta,
    })
}

/// Largest kappa allowed by the band-width requirement
/// `(432 theta_bar M^2 / gamma^2) kappa^2 <= 1/10`.
pub fn kappa_requirement(gamma: f64, theta_bar: f64, m_epochs: usize) -> f64 {
    gamma / (4320.0 * theta_bar * (m_epochs * m_epochs) as f64).sqrt()
}

/// Fixed-point choice of the approximation scale: the cap is `gamma/4`
/// (`gamma/32` on the Lipschitz-filter path), and the returned value
/// also satisfies the band-width requirement at the epoch count its own
/// architecture sizing implies. At most 10 rounds of iteration.
#[allow(clippy::too_many_arguments)]
pub fn choose_kappa(
    epsilon: f64,
    gamma: f64,
    _delta: f64,
    theta_bar: f64,
    m_guess: usize,
    alpha: usize,
    d: usize,
    lipschitz_filter: bool,
) -> Result<f64, NeuralCalPpError> {
    if !(0.0 < gamma && gamma < 0.5) || !(0.0 < epsilon && epsilon < 1.0) {
        return Err(NeuralCalPpError::Parameter(
            "gamma in (0, 1/2) and epsilon in (0,1) required".into(),
        ));
    }
    let cap = if lipschitz_filter {
        gamma / 32.0
    } else {
        gamma / 4.0
    };
    let mut m = m_guess.max(1);
    let mut kappa = cap.min(kappa_requirement(gamma, theta_bar, m));
    for _ in 0..10 {
        if kappa < f64::EPSILON {
            return Err(NeuralCalPpError::NoFeasibleKappa);
        }
        // Epoch count implied by the architecture this kappa buys.
        let (w, l) = crate::nets::sobolev_budget(kappa, alpha, d, 1.0, 1.0)?;
        let pdim = crate::nets::capacity_bound(w.max(2), l, 1.0)?;
        let t = (theta_bar * pdim as f64 / (epsilon * gamma)).ceil() as usize;
        let m_new = (t.max(2) as f64).log2().ceil() as usize;
        let kappa_new = cap.min(kappa_requirement(gamma, theta_bar, m_new));
        if m_new == m && (kappa_new - kappa).abs() <= 1e-15 {
            break;
        }
        m = m_new;
        kappa = kappa_new;
    }
    if kappa < f64::EPSILON {
        return Err(NeuralCalPpError::NoFeasibleKappa);
    }
    Ok(kappa)
}

type BoundsFn = Arc<dyn Fn(&[f64]) -> ConfidenceInterval + Send + Sync>;
type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Ternary classifier built from a confidence band: abstain iff the
/// inflated band `[lcb - gamma/4, ucb + gamma/4]` sits inside
/// `[1/2 - gamma, 1/2 + gamma]`, otherwise the sign of the fitted
/// regressor (ties at 1/2 to +1).
#[derive(Clone)]
pub struct AbstainClassifier {
    bounds: BoundsFn,
    erm_value: ValueFn,
    pub gamma: f64,
    /// Epoch the classifier was built at.
    pub provenance: usize,
}

impl AbstainClassifier {
    pub fn decide(&self, x: &[f64]) -> Decision {
        let ci = (self.bounds)(x);
        let g = self.gamma;
        if ci.lcb - g / 4.0 >= 0.5 - g && ci.ucb + g / 4.0 <= 0.5 + g {
            Decision::Abstain
        } else if (self.erm_value)(x) >= 0.5 {
            Decision::Plus
        } else {
            Decision::Minus
        }
    }

    pub fn band(&self, x: &[f64]) -> ConfidenceInterval {
        (self.bounds)(x)
    }
}

impl crate::metrics::TernaryClassifier for AbstainClassifier {
    fn decide(&self, x: &[f64]) -> Decision {
        AbstainClassifier::decide(self, x)
    }
}

pub fn build_abstain_classifier(
    bounds: BoundsFn,
    erm_value: ValueFn,
    gamma: f64,
    provenance: usize,
) -> AbstainClassifier {
    assert!(0.0 < gamma && gamma < 0.5, "gamma outside (0, 1/2)");
    AbstainClassifier {
        bounds,
        erm_value,
        gamma,
        provenance,
    }
}

/// Query rule paired with an abstain classifier: purchase a label iff
/// 1/2 lies strictly inside the inflated band and the classifier does
/// not abstain.
#[derive(Clone)]
pub struct QueryFunction {
    classifier: AbstainClassifier,
}

impl QueryFunction {
    pub fn query(&self, x: &[f64]) -> bool {
        let ci = self.classifier.band(x);
        let g = self.classifier.gamma;
        let in_band = ci.lcb - g / 4.0 < 0.5 && 0.5 < ci.ucb + g / 4.0;
        in_band && self.classifier.decide(x) != Decision::Abstain
    }
}

pub fn build_query_fn(classifier: AbstainClassifier) -> QueryFunction {
    QueryFunction { classifier }
}

/// How the confidence band is computed each epoch.
#[derive(Clone, Debug, PartialEq)]
pub enum CiMode {
    /// Exact min/max over the live pool members (offsets zero).
    Pool,
    /// Lagrangian fit-based bounds widened by the epoch offset
    /// `iota_m = (M - m) gamma / (8M)`; the search tolerance is
    /// `gamma / (8M)`.
    Oracle,
}

/// Function-class backend for a run.
pub enum ClassConfig<'a> {
    /// Enumerated pool: ERM and elimination are exact.
    ExactPool(&'a HypothesisPool),
    /// Implicit class reached only through SGD fits; trained networks
    /// are clipped to `[0,1]` before use.
    OracleArch {
        arch: MlpArchitecture,
        oracle_cfg: OracleConfig,
    },
}

/// Pointwise invariant audits evaluated on a fixed probe grid each
/// epoch.
#[derive(Clone, Default)]
pub struct AuditConfig {
    pub probe_points: Vec<Point>,
    /// Pool index of the true conditional probability, when present.
    pub eta_index: Option<usize>,
}

/// Per-epoch trace row; `live_size` is -1 in oracle mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralCalPpTraceRow {
    pub epoch: usize,
    pub beta_m: f64,
    pub queries: usize,
    pub cumulative_queries: usize,
    pub live_size: i64,
    pub audit_violations: usize,
}

/// Aggregated pointwise audit failures by category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditViolations {
    /// Query fired although the band was not wide enough.
    pub width: usize,
    /// Unqueried point with positive pointwise excess while eta was
    /// live.
    pub no_query: usize,
    /// Query fired where the previous epoch did not query.
    pub monotone: usize,
    /// Live set escaped the previous epoch's live set.
    pub nesting: usize,
}

impl AuditViolations {
    pub fn total(&self) -> usize {
        self.width + self.no_query + self.monotone + self.nesting
    }
}

/// Serialized description of the returned classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierDescriptor {
    pub mode: String,
    pub live_indices: Option<Vec<usize>>,
    pub erm_index: Option<usize>,
    pub checkpoint_hex: Option<String>,
    pub gamma: f64,
}

pub struct NeuralCalPpResult {
    pub classifier: AbstainClassifier,
    pub descriptor: ClassifierDescriptor,
    pub log: QueryLog,
    pub trace: Vec<NeuralCalPpTraceRow>,
    /// Whether the declared eta index survived every elimination
    /// (exact mode with a declared index only).
    pub eta_live_throughout: Option<bool>,
    pub violations: AuditViolations,
    pub total_audit_violations: usize,
}

struct EpochState {
    bounds: BoundsFn,
    erm_value: ValueFn,
    live: Option<Vec<usize>>,
    erm_index: Option<usize>,
    checkpoint_hex: Option<String>,
}

fn epoch_state(
    class: &ClassConfig<'_>,
    ci_mode: &CiMode,
    log: &QueryLog,
    upto_t: usize,
    beta_m: f64,
    iota_m: f64,
    iota_bar: f64,
    prev: Option<&ActiveSet>,
) -> Result<(EpochState, Option<ActiveSet>), NeuralCalPpError> {
    match class {
        ClassConfig::ExactPool(pool) => {
            let restricted = match prev {
                Some(p) => p.clone(),
                None => ActiveSet::full(pool.members.len()),
            };
            // ERM restricted to the surviving members.
            let mut erm_index = restricted.live[0];
            let mut best = f64::INFINITY;
            for &i in &restricted.live {
                let r = crate::version_space::empirical_sq_risk(
                    pool.members[i].as_ref(),
                    log,
                    upto_t,
                );
                if r < best {
                    best = r;
                    erm_index = i;
                }
            }
            let set = active_set_regressors(pool, log, upto_t, beta_m, Some(&restricted));
            let erm_f = Arc::clone(&pool.members[erm_index]);
            let erm_value: ValueFn = Arc::new(move |x: &[f64]| erm_f.value(x));
            let bounds: BoundsFn = match ci_mode {
                CiMode::Pool => {
                    let members: Vec<Arc<dyn RegressionFn>> = set
                        .live
                        .iter()
                        .map(|&i| Arc::clone(&pool.members[i]))
                        .collect();
                    Arc::new(move |x: &[f64]| {
                        let mut lcb = f64::INFINITY;
                        let mut ucb = f64::NEG_INFINITY;
                        for f in &members {
                            let v = f.value(x);
                            lcb = lcb.min(v);
                            ucb = ucb.max(v);
                        }
                        ConfidenceInterval { lcb, ucb }
                    })
                }
                CiMode::Oracle => {
                    let pool_snapshot = (*pool).clone();
                    let log_snapshot = log.clone();
                    Arc::new(move |x: &[f64]| {
                        let lo = oracle_bound(
                            BoundDirection::Lower,
                            x,
                            &log_snapshot,
                            upto_t,
                            beta_m,
                            iota_bar,
                            exact_pool_fit(&pool_snapshot),
                        )
                        .expect("exact pool fit cannot fail");
                        let up = oracle_bound(
                            BoundDirection::Upper,
                            x,
                            &log_snapshot,
                            upto_t,
                            beta_m,
                            iota_bar,
                            exact_pool_fit(&pool_snapshot),
                        )
                        .expect("exact pool fit cannot fail");
                        ConfidenceInterval {
                            lcb: lo - iota_m,
                            ucb: up + iota_m,
                        }
                    })
                }
            };
            Ok((
                EpochState {
                    bounds,
                    erm_value,
                    live: Some(set.live.clone()),
                    erm_index: Some(erm_index),
                    checkpoint_hex: None,
                },
                Some(set),
            ))
        }
        ClassConfig::OracleArch { arch, oracle_cfg } => {
            let examples = log.queried_examples(upto_t);
            let raw = fit_weighted_sq::<f64>(arch, &examples, oracle_cfg)?;
            let erm_net = if raw.arch.clipped {
                raw
            } else {
                clip_network(&raw)?
            };
            let checkpoint_hex = Some(
                crate::nets::checkpoint_bytes(&erm_net)
                    .iter()
                    .map(|b| format!("{b:02x}"))
                    .collect::<String>(),
            );
            let erm_arc = Arc::new(erm_net);
            let erm_for_value = Arc::clone(&erm_arc);
            let erm_value: ValueFn = Arc::new(move |x: &[f64]| erm_for_value.value(x));
            let log_snapshot = log.clone();
            let arch = arch.clone();
            let oracle_cfg = oracle_cfg.clone();
            let bounds: BoundsFn = Arc::new(move |x: &[f64]| {
                let fit = |examples: &[crate::nets::WeightedExample]| {
                    let raw = fit_weighted_sq::<f64>(&arch, examples, &oracle_cfg)
                        .map_err(crate::version_space::VersionSpaceError::from)?;
                    let net = if raw.arch.clipped {
                        raw
                    } else {
                        clip_network(&raw)
                            .map_err(crate::version_space::VersionSpaceError::from)?
                    };
                    Ok(Arc::new(net) as Arc<dyn RegressionFn>)
                };
                let lo = oracle_bound(
                    BoundDirection::Lower,
                    x,
                    &log_snapshot,
                    upto_t,
                    beta_m,
                    iota_bar,
                    fit,
                )
                .expect("oracle fit failure inside bounds closure");
                let up = oracle_bound(
                    BoundDirection::Upper,
                    x,
                    &log_snapshot,
                    upto_t,
                    beta_m,
                    iota_bar,
                    fit,
                )
                .expect("oracle fit failure inside bounds closure");
                ConfidenceInterval {
                    lcb: lo - iota_m,
                    ucb: up + iota_m,
                }
            });
            Ok((
                EpochState {
                    bounds,
                    erm_value,
                    live: None,
                    erm_index: None,
                    checkpoint_hex,
                },
                None,
            ))
        }
    }
}

/// The full loop: per epoch, fit the ERM on the queried prefix, rebuild
/// the active set at slack `beta[m]`, form the abstain and query rules,
/// audit them on the probe grid, then draw the epoch's points and
/// purchase labels exactly where the query rule fires. The classifier
/// of the final epoch is returned without drawing further points.
pub fn run_neuralcalpp(
    instance: &ProblemInstance,
    class: &ClassConfig<'_>,
    schedule: &NeuralCalPpSchedule,
    ci_mode: CiMode,
    audit: &AuditConfig,
    rng: &mut Rng,
) -> Result<NeuralCalPpResult, NeuralCalPpError> {
    let gamma = schedule.gamma;
    let m_total = schedule.m_epochs;
    let taus: Vec<usize> = std::iter::once(0)
        .chain((1..=m_total).map(|m| 1usize << m))
        .collect();
    let mut log = QueryLog::new();
    let mut trace = Vec::new();
    let mut prev_set: Option<ActiveSet> = None;
    let mut prev_g: Option<Vec<bool>> = None;
    let mut cumulative = 0usize;
    let mut eta_live = audit.eta_index.map(|_| true);
    let mut totals = AuditViolations::default();
    for m in 1..=m_total {
        let upto_t = taus[m - 1];
        let iota_m = match ci_mode {
            CiMode::Pool => 0.0,
            CiMode::Oracle => (m_total - m) as f64 * gamma / (8.0 * m_total as f64),
        };
        let iota_bar = gamma / (8.0 * m_total as f64);
        let (state, set) = epoch_state(
            class,
            &ci_mode,
            &log,
            upto_t,
            schedule.beta[m],
            iota_m,
            iota_bar,
            prev_set.as_ref(),
        )?;
        if let (Some(flag), Some(idx), Some(live)) =
            (eta_live.as_mut(), audit.eta_index, state.live.as_ref())
        {
            if !live.contains(&idx) {
                *flag = false;
            }
        }
        let classifier = build_abstain_classifier(
            Arc::clone(&state.bounds),
            Arc::clone(&state.erm_value),
            gamma,
            m,
        );
        let query_fn = build_query_fn(classifier.clone());
        // Pointwise audits on the probe grid.
        let mut violations = AuditViolations::default();
        let mut g_now = Vec::with_capacity(audit.probe_points.len());
        for (k, x) in audit.probe_points.iter().enumerate() {
            let g = query_fn.query(x);
            g_now.push(g);
            let ci = classifier.band(x);
            if g {
                let wide_enough = match ci_mode {
                    CiMode::Pool => ci.width() > gamma / 2.0,
                    CiMode::Oracle => ci.width() > gamma / 4.0,
                };
                if !wide_enough {
                    violations.width += 1;
                }
            } else if eta_live == Some(true)
                && pointwise_chow_excess(instance, &classifier, gamma, x) > 1e-12
            {
                violations.no_query += 1;
            }
            if let Some(pg) = &prev_g {
                if g && !pg[k] {
                    violations.monotone += 1;
                }
            }
        }
        // Nesting audit (exact mode).
        if let (Some(prev), Some(live)) = (prev_set.as_ref(), state.live.as_ref()) {
            if !live.iter().all(|i| prev.live.contains(i)) {
                violations.nesting += 1;
            }
        }
        totals.width += violations.width;
        totals.no_query += violations.no_query;
        totals.monotone += violations.monotone;
        totals.nesting += violations.nesting;
        log.mark_epoch(taus[m]);
        if m == m_total {
            trace.push(NeuralCalPpTraceRow {
                epoch: m,
                beta_m: schedule.beta[m],
                queries: 0,
                cumulative_queries: cumulative,
                live_size: state.live.as_ref().map_or(-1, |l| l.len() as i64),
                audit_violations: violations.total(),
            });
            let descriptor = ClassifierDescriptor {
                mode: match class {
                    ClassConfig::ExactPool(_) => "exact-pool".into(),
                    ClassConfig::OracleArch { .. } => "oracle".into(),
                },
                live_indices: state.live.clone(),
                erm_index: state.erm_index,
                checkpoint_hex: state.checkpoint_hex.clone(),
                gamma,
            };
            return Ok(NeuralCalPpResult {
                classifier,
                descriptor,
                log,
                trace,
                eta_live_throughout: eta_live,
                violations: totals,
                total_audit_violations: totals.total(),
            });
        }
        let mut queries = 0usize;
        for t in (taus[m - 1] + 1)..=taus[m] {
            let x = sample_point(instance, rng);
            let queried = query_fn.query(&x);
            let (y01, y_pm) = if queried {
                queries += 1;
                let y = sample_label(instance, &x, rng);
                (Some(y), Some(if y >= 0.5 { 1i8 } else { -1 }))
            } else {
                (None, None)
            };
            log.push(LogEntry {
                t,
                x,
                queried,
                y01,
                y_pm,
                epoch: m,
            });
        }
        cumulative += queries;
        trace.push(NeuralCalPpTraceRow {
            epoch: m,
            beta_m: schedule.beta[m],
            queries,
            cumulative_queries: cumulative,
            live_size: state.live.as_ref().map_or(-1, |l| l.len() as i64),
            audit_violations: violations.total(),
        });
        prev_set = set;
        prev_g = Some(g_now);
    }
    unreachable!("loop returns at the final epoch");
}

/// Standard classifier from an abstaining one: identical predictions
/// off the abstention region, an independent fair coin on it.
pub struct RandomizedClassifier {
    inner: AbstainClassifier,
    rng: Mutex<Rng>,
}

pub fn randomize_abstention(classifier: &AbstainClassifier, rng: Rng) -> RandomizedClassifier {
    RandomizedClassifier {
        inner: classifier.clone(),
        rng: Mutex::new(rng),
    }
}

impl Classifier for RandomizedClassifier {
    fn predict(&self, x: &[f64]) -> i8 {
        match self.inner.decide(x) {
            Decision::Plus => 1,
            Decision::Minus => -1,
            Decision::Abstain => {
                let mut rng = self.rng.lock().unwrap();
                if rand::Rng::gen::<bool>(&mut *rng) {
                    1
                } else {
                    -1
                }
            }
        }
    }
}
