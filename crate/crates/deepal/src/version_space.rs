//! Finite-pool surrogate for the function class: query logs, empirical
//! risks, active-set elimination with nesting, exact pool confidence
//! bounds, the Lagrangian oracle bounds, and disagreement membership.

use std::sync::Arc;

use thiserror::Error;

use crate::nets::WeightedExample;
use crate::{fmt_g17, Point};

#[derive(Debug, Error)]
pub enum VersionSpaceError {
    #[error("live set is empty")]
    EmptyLiveSet,
    #[error("hypothesis pool is empty")]
    EmptyPool,
    #[error("regression oracle failed: {0}")]
    Oracle(#[from] crate::nets::NetError),
}

/// A real-valued hypothesis, the pool-member interface.
pub trait RegressionFn: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
}

/// A hard classifier into `{+1, -1}`.
pub trait Classifier: Send + Sync {
    fn predict(&self, x: &[f64]) -> i8;
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> RegressionFn for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

impl<F: Fn(&[f64]) -> i8 + Send + Sync> Classifier for F {
    fn predict(&self, x: &[f64]) -> i8 {
        self(x)
    }
}

impl<S: num_traits::Float + Send + Sync> RegressionFn for crate::nets::Mlp<S> {
    fn value(&self, x: &[f64]) -> f64 {
        self.forward(x).to_f64().unwrap()
    }
}

/// Threshold a regression function at 1/2; the tie value 1/2 maps
/// to +1.
pub struct RegressionThresholdClassifier {
    pub f: Arc<dyn RegressionFn>,
}

impl Classifier for RegressionThresholdClassifier {
    fn predict(&self, x: &[f64]) -> i8 {
        if self.f.value(x) >= 0.5 {
            1
        } else {
            -1
        }
    }
}

/// 1-d threshold classifier: +1 iff `x >= threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdClassifier {
    pub threshold: f64,
}

impl Classifier for ThresholdClassifier {
    fn predict(&self, x: &[f64]) -> i8 {
        if x[0] >= self.threshold {
            1
        } else {
            -1
        }
    }
}

/// 1-d step regression function: `low` left of the threshold, `high`
/// from the threshold on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepFn {
    pub threshold: f64,
    pub low: f64,
    pub high: f64,
}

impl RegressionFn for StepFn {
    fn value(&self, x: &[f64]) -> f64 {
        if x[0] >= self.threshold {
            self.high
        } else {
            self.low
        }
    }
}

/// One observation of the stream: the point, whether its label was
/// purchased, and the label in both encodings when it was.
#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub t: usize,
    pub x: Point,
    pub queried: bool,
    pub y01: Option<f64>,
    pub y_pm: Option<i8>,
    pub epoch: usize,
}

/// Ordered record of the whole interaction; the sole input to every
/// empirical risk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryLog {
    pub entries: Vec<LogEntry>,
    pub epoch_marks: Vec<usize>,
}

impl QueryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: LogEntry) {
        if let Some(last) = self.entries.last() {
            assert!(entry.t > last.t, "entries must be strictly ordered by t");
        }
        assert_eq!(
            entry.queried,
            entry.y01.is_some() && entry.y_pm.is_some(),
            "labels present iff queried"
        );
        self.entries.push(entry);
    }

    pub fn mark_epoch(&mut self, tau: usize) {
        if let Some(&last) = self.epoch_marks.last() {
            assert!(tau > last, "epoch marks strictly increasing");
        }
        self.epoch_marks.push(tau);
    }

    pub fn total_queries(&self) -> usize {
        self.entries.iter().filter(|e| e.queried).count()
    }

    /// The queried prefix `t <= upto_t` as unit-weight regression
    /// examples on the `{0,1}` targets.
    pub fn queried_examples(&self, upto_t: usize) -> Vec<WeightedExample> {
        self.entries
            .iter()
            .filter(|e| e.queried && e.t <= upto_t)
            .map(|e| WeightedExample {
                weight: 1.0,
                x: e.x.clone(),
                target: e.y01.unwrap(),
            })
            .collect()
    }

    /// CSV with columns `t,x,queried,y01,epoch`; coordinates are
    /// semicolon-joined, decimals carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,queried,y01,epoch\n");
        for e in &self.entries {
            let coords: Vec<String> = e.x.iter().map(|&v| fmt_g17(v)).collect();
            let y = e.y01.map(fmt_g17).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.t,
                coords.join(";"),
                e.queried as u8,
                y,
                e.epoch
            ));
        }
        out
    }
}

/// Enumerated stand-in for the function class, with declared capacity
/// and approximation metadata.
#[derive(Clone)]
pub struct HypothesisPool {
    pub members: Vec<Arc<dyn RegressionFn>>,
    pub capacity_pdim: usize,
    pub capacity_vcdim: usize,
    pub lipschitz_l: Option<f64>,
    pub approx_kappa: Option<f64>,
}

impl HypothesisPool {
    pub fn new(members: Vec<Arc<dyn RegressionFn>>) -> Self {
        assert!(!members.is_empty(), "pool must be nonempty");
        Self {
            capacity_pdim: members.len().max(2).ilog2() as usize + 1,
            capacity_vcdim: members.len().max(2).ilog2() as usize + 1,
            members,
            lipschitz_l: None,
            approx_kappa: None,
        }
    }

    /// Member `idx` thresholded at 1/2 (tie to +1).
    pub fn classify(&self, idx: usize, x: &[f64]) -> i8 {
        if self.members[idx].value(x) >= 0.5 {
            1
        } else {
            -1
        }
    }
}

/// Pool of hard classifiers for the disagreement-based algorithm.
#[derive(Clone)]
pub struct ClassifierPool {
    pub members: Vec<Arc<dyn Classifier>>,
    pub vcdim: usize,
}

impl ClassifierPool {
    pub fn new(members: Vec<Arc<dyn Classifier>>, vcdim: usize) -> Self {
        assert!(!members.is_empty(), "pool must be nonempty");
        Self { members, vcdim }
    }
}

/// Surviving member indices after an elimination round.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSet {
    pub live: Vec<usize>,
    pub threshold_used: f64,
}

impl ActiveSet {
    pub fn full(n: usize) -> Self {
        Self {
            live: (0..n).collect(),
            threshold_used: f64::INFINITY,
        }
    }
}

/// Pointwise confidence band `[lcb, ucb]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceInterval {
    pub lcb: f64,
    pub ucb: f64,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.ucb - self.lcb
    }
}

/// Number of queried points `t <= upto_t` the classifier gets wrong.
pub fn empirical_01_risk(h: &dyn Classifier, log: &QueryLog, upto_t: usize) -> usize {
    log.entries
        .iter()
        .filter(|e| e.queried && e.t <= upto_t)
        .filter(|e| h.predict(&e.x) != e.y_pm.unwrap())
        .count()
}

/// Sum of squared errors against the `{0,1}` targets on the queried
/// prefix; the empty prefix sums to 0.
pub fn empirical_sq_risk(f: &dyn RegressionFn, log: &QueryLog, upto_t: usize) -> f64 {
    log.entries
        .iter()
        .filter(|e| e.queried && e.t <= upto_t)
        .map(|e| {
            let d = f.value(&e.x) - e.y01.unwrap();
            d * d
        })
        .sum()
}

/// Index of the square-loss empirical risk minimizer; ties go to the
/// lowest index.
pub fn erm_regressor(pool: &HypothesisPool, log: &QueryLog, upto_t: usize) -> usize {
    let mut best = 0usize;
    let mut best_risk = f64::INFINITY;
    for (i, f) in pool.members.iter().enumerate() {
        let r = empirical_sq_risk(f.as_ref(), log, upto_t);
        if r < best_risk {
            best_risk = r;
            best = i;
        }
    }
    best
}

fn eliminate(risks: &[(usize, f64)], slack: f64) -> ActiveSet {
    let best = risks
        .iter()
        .map(|&(_, r)| r)
        .fold(f64::INFINITY, f64::min);
    let threshold = best + slack;
    ActiveSet {
        live: risks
            .iter()
            .filter(|&&(_, r)| r <= threshold)
            .map(|&(i, _)| i)
            .collect(),
        threshold_used: threshold,
    }
}

/// Square-loss elimination at slack `beta_m`, restricted to the
/// previous epoch's live set (nesting is enforced by construction).
pub fn active_set_regressors(
    pool: &HypothesisPool,
    log: &QueryLog,
    upto_t: usize,
    beta_m: f64,
    prev: Option<&ActiveSet>,
) -> ActiveSet {
    let candidates: Vec<usize> = match prev {
        Some(p) => p.live.clone(),
        None => (0..pool.members.len()).collect(),
    };
    let risks: Vec<(usize, f64)> = candidates
        .into_iter()
        .map(|i| (i, empirical_sq_risk(pool.members[i].as_ref(), log, upto_t)))
        .collect();
    eliminate(&risks, beta_m)
}

/// 0-1-loss elimination at the given additive slack, restricted to the
/// previous live set.
pub fn active_set_classifiers(
    pool: &ClassifierPool,
    log: &QueryLog,
    upto_t: usize,
    slack: f64,
    prev: Option<&ActiveSet>,
) -> ActiveSet {
    let candidates: Vec<usize> = match prev {
        Some(p) => p.live.clone(),
        None => (0..pool.members.len()).collect(),
    };
    let risks: Vec<(usize, f64)> = candidates
        .into_iter()
        .map(|i| {
            (
                i,
                empirical_01_risk(pool.members[i].as_ref(), log, upto_t) as f64,
            )
        })
        .collect();
    eliminate(&risks, slack)
}

/// Exact `[min, max]` of the live members' values at `x`.
pub fn pool_bounds(
    x: &[f64],
    pool: &HypothesisPool,
    active: &ActiveSet,
) -> Result<ConfidenceInterval, VersionSpaceError> {
    if active.live.is_empty() {
        return Err(VersionSpaceError::EmptyLiveSet);
    }
    let mut lcb = f64::INFINITY;
    let mut ucb = f64::NEG_INFINITY;
    for &i in &active.live {
        let v = pool.members[i].value(x);
        lcb = lcb.min(v);
        ucb = ucb.max(v);
    }
    Ok(ConfidenceInterval { lcb, ucb })
}

/// True iff the live classifiers do not all agree at `x`.
pub fn in_disagreement(
    x: &[f64],
    pool: &ClassifierPool,
    active: &ActiveSet,
) -> Result<bool, VersionSpaceError> {
    let mut iter = active.live.iter();
    let first = *iter.next().ok_or(VersionSpaceError::EmptyLiveSet)?;
    let p0 = pool.members[first].predict(x);
    Ok(iter.any(|&i| pool.members[i].predict(x) != p0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundDirection {
    Lower,
    Upper,
}

/// One-sided approximation of the constrained extremum
/// `ext { f(x) : R(f) <= R(f_hat) + beta_m }` using only fit calls.
///
/// The extremum is encoded as a Lagrangian penalty: an extra weighted
/// example at `x` with target 0 (lower) or 1 (upper), swept over a
/// doubling grid of `ceil(log2(1/iota))` weights after one unpenalized
/// fit. The best feasible value seen is returned. In exact finite-pool
/// mode the fit function is an exact argmin and the result matches the
/// pool extremum to within `iota` on well-separated pools.
pub fn oracle_bound<O>(
    direction: BoundDirection,
    x: &[f64],
    log: &QueryLog,
    upto_t: usize,
    beta_m: f64,
    iota: f64,
    mut fit: O,
) -> Result<f64, VersionSpaceError>
where
    O: FnMut(&[WeightedExample]) -> Result<Arc<dyn RegressionFn>, VersionSpaceError>,
{
    assert!(iota > 0.0, "iota must be positive");
    let base = log.queried_examples(upto_t);
    let base_risk = |f: &dyn RegressionFn| -> f64 {
        base.iter()
            .map(|e| {
                let d = f.value(&e.x) - e.target;
                e.weight * d * d
            })
            .sum()
    };
    let f_hat = fit(&base)?;
    let threshold = base_risk(f_hat.as_ref()) + beta_m + 1e-12;
    let mut best = f_hat.value(x);
    let target = match direction {
        BoundDirection::Lower => 0.0,
        BoundDirection::Upper => 1.0,
    };
    let doublings = (1.0 / iota).log2().ceil() as usize;
    let mut lambda = 1.0;
    for _ in 0..doublings {
        let mut augmented = base.clone();
        augmented.push(WeightedExample {
            weight: lambda,
            x: x.to_vec(),
            target,
        });
        let g = fit(&augmented)?;
        if base_risk(g.as_ref()) <= threshold {
            let v = g.value(x);
            best = match direction {
                BoundDirection::Lower => best.min(v),
                BoundDirection::Upper => best.max(v),
            };
        }
        lambda *= 2.0;
    }
    Ok(best)
}

/// Exact fit function over an enumerated pool: the argmin of the
/// weighted square loss, lowest index on ties.
pub fn exact_pool_fit(
    pool: &HypothesisPool,
) -> impl FnMut(&[WeightedExample]) -> Result<Arc<dyn RegressionFn>, VersionSpaceError> + '_ {
    move |examples: &[WeightedExample]| {
        let mut best = 0usize;
        let mut best_loss = f64::INFINITY;
        for (i, f) in pool.members.iter().enumerate() {
            let loss: f64 = examples
                .iter()
                .map(|e| {
                    let d = f.value(&e.x) - e.target;
                    e.weight * d * d
                })
                .sum();
            if loss < best_loss {
                best_loss = loss;
                best = i;
            }
        }
        Ok(Arc::clone(&pool.members[best]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_from(labels: &[(f64, i8, bool)]) -> QueryLog {
        let mut log = QueryLog::new();
        for (i, &(x, y, queried)) in labels.iter().enumerate() {
            log.push(LogEntry {
                t: i + 1,
                x: vec![x],
                queried,
                y01: queried.then(|| f64::from((y + 1) / 2)),
                y_pm: queried.then_some(y),
                epoch: 1,
            });
        }
        log
    }

    #[test]
    fn empirical_01_risk_examples() {
        let log = log_from(&[(0.1, 1, true), (0.2, -1, true), (0.3, -1, true)]);
        let plus = ThresholdClassifier { threshold: -1.0 }; // always +1
        assert_eq!(empirical_01_risk(&plus, &log, 3), 2);
        assert_eq!(empirical_01_risk(&plus, &log, 0), 0);
        // Pointwise copy of the logged labels has zero risk.
        let copy = |x: &[f64]| if x[0] < 0.15 { 1i8 } else { -1 };
        assert_eq!(empirical_01_risk(&copy, &log, 3), 0);
        let empty = log_from(&[(0.5, 1, false)]);
        assert_eq!(empirical_01_risk(&plus, &empty, 1), 0);
    }

    #[test]
    fn empirical_sq_risk_examples() {
        let log = log_from(&[(0.1, -1, true), (0.2, 1, true)]);
        let half = |_x: &[f64]| 0.5;
        assert!((empirical_sq_risk(&half, &log, 2) - 0.5).abs() < 1e-15);
        assert_eq!(empirical_sq_risk(&half, &log, 0), 0.0);
        let interp = StepFn {
            threshold: 0.15,
            low: 0.0,
            high: 1.0,
        };
        assert_eq!(empirical_sq_risk(&interp, &log, 2), 0.0);
    }

    #[test]
    fn erm_tie_breaks_to_lowest_index() {
        let pool = HypothesisPool::new(vec![
            Arc::new(|_x: &[f64]| 0.4) as Arc<dyn RegressionFn>,
            Arc::new(|_x: &[f64]| 0.6),
        ]);
        let empty = QueryLog::new();
        assert_eq!(erm_regressor(&pool, &empty, 0), 0);
        let log = log_from(&[(0.3, 1, true)]);
        // risks (1-0.4)^2 = 0.36 vs (1-0.6)^2 = 0.16
        assert_eq!(erm_regressor(&pool, &log, 1), 1);
        let mut tie = QueryLog::new();
        tie.push(LogEntry {
            t: 1,
            x: vec![0.3],
            queried: true,
            y01: Some(0.5),
            y_pm: Some(1),
            epoch: 1,
        });
        assert_eq!(erm_regressor(&pool, &tie, 1), 0);
    }

    #[test]
    fn regressor_elimination_and_nesting() {
        let pool = HypothesisPool::new(vec![
            Arc::new(|_x: &[f64]| 1.0 - (0.1f64).sqrt()) as Arc<dyn RegressionFn>,
            Arc::new(|_x: &[f64]| 1.0 - (0.3f64).sqrt()),
            Arc::new(|_x: &[f64]| 1.0 - (0.9f64).sqrt()),
        ]);
        // One target-1 example makes the risks exactly {0.1, 0.3, 0.9}.
        let log = log_from(&[(0.0, 1, true)]);
        let set = active_set_regressors(&pool, &log, 1, 0.25, None);
        assert_eq!(set.live, vec![0, 1]);
        assert!(set.live.contains(&erm_regressor(&pool, &log, 1)));
        // beta = 0 keeps only the minimizer.
        let tight = active_set_regressors(&pool, &log, 1, 0.0, Some(&set));
        assert_eq!(tight.live, vec![0]);
        // A huge threshold cannot resurrect eliminated members.
        let relaxed = active_set_regressors(&pool, &log, 1, 1e9, Some(&tight));
        assert_eq!(relaxed.live, vec![0]);
    }

    #[test]
    fn classifier_elimination_examples() {
        // Engineer 0-1 risks {2, 3, 7} with threshold classifiers.
        let pool = ClassifierPool::new(
            vec![
                Arc::new(ThresholdClassifier { threshold: 0.25 }) as Arc<dyn Classifier>,
                Arc::new(ThresholdClassifier { threshold: 0.35 }),
                Arc::new(ThresholdClassifier { threshold: 0.75 }),
            ],
            2,
        );
        // Points at 0.3, 0.4, ..., 0.9 each labeled +1, plus 0.0/0.1
        // labeled -1: risks = misclassified counts.
        let mut entries = vec![(0.0, -1, true), (0.1, -1, true)];
        for i in 0..7 {
            entries.push((0.3 + 0.1 * i as f64, 1, true));
        }
        let log = log_from(&entries);
        let risks: Vec<usize> = pool
            .members
            .iter()
            .map(|h| empirical_01_risk(h.as_ref(), &log, 9))
            .collect();
        assert_eq!(risks, vec![0, 1, 5]);
        let set = active_set_classifiers(&pool, &log, 9, 2.0, None);
        assert_eq!(set.live, vec![0, 1]);
        let exact = active_set_classifiers(&pool, &log, 9, 0.0, None);
        assert_eq!(exact.live, vec![0]);
    }

    #[test]
    fn pool_bounds_and_disagreement() {
        let pool = HypothesisPool::new(vec![
            Arc::new(|_x: &[f64]| 0.2) as Arc<dyn RegressionFn>,
            Arc::new(|_x: &[f64]| 0.6),
        ]);
        let both = ActiveSet::full(2);
        let ci = pool_bounds(&[0.0], &pool, &both).unwrap();
        assert_eq!((ci.lcb, ci.ucb), (0.2, 0.6));
        let single = ActiveSet {
            live: vec![1],
            threshold_used: 0.0,
        };
        let ci1 = pool_bounds(&[0.0], &pool, &single).unwrap();
        assert_eq!(ci1.lcb, ci1.ucb);
        assert!(pool_bounds(
            &[0.0],
            &pool,
            &ActiveSet {
                live: vec![],
                threshold_used: 0.0
            }
        )
        .is_err());

        let cpool = ClassifierPool::new(
            vec![
                Arc::new(ThresholdClassifier { threshold: 0.3 }) as Arc<dyn Classifier>,
                Arc::new(ThresholdClassifier { threshold: 0.6 }),
            ],
            2,
        );
        let act = ActiveSet::full(2);
        assert!(in_disagreement(&[0.5], &cpool, &act).unwrap());
        assert!(!in_disagreement(&[0.1], &cpool, &act).unwrap());
        assert!(!in_disagreement(
            &[0.5],
            &cpool,
            &ActiveSet {
                live: vec![0],
                threshold_used: 0.0
            }
        )
        .unwrap());
    }

    #[test]
    fn interval_nesting_under_set_nesting() {
        let pool = HypothesisPool::new(vec![
            Arc::new(|x: &[f64]| x[0]) as Arc<dyn RegressionFn>,
            Arc::new(|x: &[f64]| 1.0 - x[0]),
            Arc::new(|_x: &[f64]| 0.5),
        ]);
        let big = ActiveSet::full(3);
        let small = ActiveSet {
            live: vec![0, 2],
            threshold_used: 0.0,
        };
        for x in [0.1, 0.4, 0.9] {
            let a = pool_bounds(&[x], &pool, &small).unwrap();
            let b = pool_bounds(&[x], &pool, &big).unwrap();
            assert!(a.lcb >= b.lcb && a.ucb <= b.ucb);
        }
    }

    #[test]
    fn oracle_bound_singleton_and_vacuous() {
        let pool = HypothesisPool::new(vec![Arc::new(|x: &[f64]| 0.3 + 0.1 * x[0])
            as Arc<dyn RegressionFn>]);
        let log = QueryLog::new();
        for dir in [BoundDirection::Lower, BoundDirection::Upper] {
            let v = oracle_bound(dir, &[0.5], &log, 0, 0.1, 0.05, exact_pool_fit(&pool)).unwrap();
            assert!((v - 0.35).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_bound_matches_pool_extremum() {
        // Constant pool members 0.1, 0.2, ..., 0.9; no data, huge beta:
        // the constrained extremum is the raw pool extremum.
        let members: Vec<Arc<dyn RegressionFn>> = (1..=9)
            .map(|i| {
                let c = i as f64 / 10.0;
                Arc::new(move |_x: &[f64]| c) as Arc<dyn RegressionFn>
            })
            .collect();
        let pool = HypothesisPool::new(members);
        let log = QueryLog::new();
        let up = oracle_bound(
            BoundDirection::Upper,
            &[0.0],
            &log,
            0,
            1e6,
            0.01,
            exact_pool_fit(&pool),
        )
        .unwrap();
        let lo = oracle_bound(
            BoundDirection::Lower,
            &[0.0],
            &log,
            0,
            1e6,
            0.01,
            exact_pool_fit(&pool),
        )
        .unwrap();
        assert!((up - 0.9).abs() < 1e-12);
        assert!((lo - 0.1).abs() < 1e-12);
    }

    #[test]
    fn oracle_bound_respects_constraint() {
        // Data pins the value near 0.5; members far away are infeasible
        // at small beta.
        let members: Vec<Arc<dyn RegressionFn>> = (0..=10)
            .map(|i| {
                let c = i as f64 / 10.0;
                Arc::new(move |_x: &[f64]| c) as Arc<dyn RegressionFn>
            })
            .collect();
        let pool = HypothesisPool::new(members);
        let mut log = QueryLog::new();
        for t in 1..=8 {
            log.push(LogEntry {
                t,
                x: vec![0.0],
                queried: true,
                y01: Some(0.5),
                y_pm: Some(1),
                epoch: 1,
            });
        }
        // risk of constant c is 8 (c - 0.5)^2; beta 0.2 admits
        // |c - 0.5| <= sqrt(0.025) ~ 0.158, i.e. c in {0.4, 0.5, 0.6}.
        let up = oracle_bound(
            BoundDirection::Upper,
            &[0.0],
            &log,
            8,
            0.2,
            0.01,
            exact_pool_fit(&pool),
        )
        .unwrap();
        let lo = oracle_bound(
            BoundDirection::Lower,
            &[0.0],
            &log,
            8,
            0.2,
            0.01,
            exact_pool_fit(&pool),
        )
        .unwrap();
        assert!((up - 0.6).abs() < 1e-12, "up = {up}");
        assert!((lo - 0.4).abs() < 1e-12, "lo = {lo}");
    }

    #[test]
    fn query_log_csv_shape() {
        let mut log = QueryLog::new();
        log.push(LogEntry {
            t: 1,
            x: vec![0.25, 0.5],
            queried: true,
            y01: Some(1.0),
            y_pm: Some(1),
            epoch: 1,
        });
        log.push(LogEntry {
            t: 2,
            x: vec![0.1, 0.9],
            queried: false,
            y01: None,
            y_pm: None,
            epoch: 1,
        });
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,queried,y01,epoch");
        assert!(lines[1].starts_with("1,"));
        assert!(lines[1].contains(';'));
        assert!(lines[2].ends_with(",0,,1"));
        assert_eq!(log.total_queries(), 1);
    }

    #[test]
    #[should_panic(expected = "strictly ordered")]
    fn query_log_rejects_unordered() {
        let mut log = QueryLog::new();
        for t in [2usize, 1] {
            log.push(LogEntry {
                t,
                x: vec![0.0],
                queried: false,
                y01: None,
                y_pm: None,
                epoch: 1,
            });
        }
    }
}
