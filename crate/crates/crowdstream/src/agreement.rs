//! Streaming estimation of agreement rates and the plug-in estimator of the
//! error probabilities.
//!
//! One task contributes, for each labeller `i`, the count of other labellers
//! who agree with her. With `S` the label sum and `N` the answer count of the
//! task, that count equals `(x_i S + |x_i| (N - 2)) / 2`, an `O(n)` identity
//! that avoids the pairwise double loop. The uniform state keeps running
//! totals of these counts; the exponentially weighted state keeps the
//! discounted per-task fractions directly.

use rand::Rng;

use crate::decode::{DEFAULT_WEIGHT_CLAMP, weighted_majority, weights_from_error_probs};
use crate::error::{Error, Result};
use crate::fixedpoint::{has_unique_fixed_point, solve_fixed_point};
use crate::model::{CrowdModel, ObservationVector};

/// How the agreement rates average over tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AveragingMode {
    /// Plain empirical average, for a stationary population.
    Uniform,
    /// Exponentially weighted average with parameter `beta`, for drifting
    /// error probabilities.
    Ewma { beta: f64 },
}

/// Per-task drift speed bound: `|p_i(t) - p_i(s)| <= sigma |t - s|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSpec {
    pub sigma: f64,
}

impl DriftSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma < 0.0 || sigma.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "drift speed must be non-negative, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }
}

/// Running agreement-rate estimate over a stream of tasks.
///
/// `O(n)` state, `O(n)` work per task. In uniform mode the internal
/// accumulator holds raw agreement counts (exact integers), so the exposed
/// rates equal the batch pairwise-count average to the last bit.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementState {
    n: usize,
    alpha: f64,
    mode: AveragingMode,
    t: u64,
    acc: Vec<f64>,
}

impl AgreementState {
    pub fn new(n: usize, alpha: f64, mode: AveragingMode) -> Result<Self> {
        if n <= 2 {
            return Err(Error::InvalidParameter(format!(
                "need more than 2 labellers, got {n}"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if let AveragingMode::Ewma { beta } = mode
            && !(beta > 0.0 && beta < 1.0)
        {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1), got {beta}"
            )));
        }
        Ok(Self {
            n,
            alpha,
            mode,
            t: 0,
            acc: vec![0.0; n],
        })
    }

    pub fn labeller_count(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> AveragingMode {
        self.mode
    }

    pub fn task_count(&self) -> u64 {
        self.t
    }

    /// Folds one task into the running estimate.
    pub fn update(&mut self, x: &ObservationVector) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let summary = x.summary();
        let s = summary.s as f64;
        let m = summary.m as f64;
        match self.mode {
            AveragingMode::Uniform => {
                for (acc, &xi) in self.acc.iter_mut().zip(x.entries()) {
                    let xf = xi as f64;
                    // number of other labellers agreeing with i on this task
                    *acc += 0.5 * (xf * s + xf.abs() * (m - 2.0));
                }
            }
            AveragingMode::Ewma { beta } => {
                let denom = 2.0 * (self.n as f64 - 1.0) * self.alpha * self.alpha;
                for (acc, &xi) in self.acc.iter_mut().zip(x.entries()) {
                    let xf = xi as f64;
                    let frac = (xf * s + xf.abs() * (m - 2.0)) / denom;
                    *acc = (1.0 - beta) * *acc + beta * frac;
                }
            }
        }
        self.t += 1;
        Ok(())
    }

    /// Current estimate of the agreement-rate vector.
    pub fn agreement_rates(&self) -> Vec<f64> {
        match self.mode {
            AveragingMode::Uniform => {
                if self.t == 0 {
                    return vec![0.0; self.n];
                }
                let denom = self.t as f64 * (self.n as f64 - 1.0) * self.alpha * self.alpha;
                self.acc.iter().map(|&c| c / denom).collect()
            }
            AveragingMode::Ewma { .. } => self.acc.clone(),
        }
    }

    /// Flat checkpoint record: `t, mode, beta, alpha`, then the `n` internal
    /// accumulator entries (raw agreement mass in uniform mode, the weighted
    /// average itself in EWMA mode).
    pub fn to_record(&self) -> Vec<f64> {
        let (mode, beta) = match self.mode {
            AveragingMode::Uniform => (0.0, 0.0),
            AveragingMode::Ewma { beta } => (1.0, beta),
        };
        let mut rec = Vec::with_capacity(self.n + 4);
        rec.extend([self.t as f64, mode, beta, self.alpha]);
        rec.extend_from_slice(&self.acc);
        rec
    }

    /// Inverse of [`to_record`](Self::to_record).
    pub fn from_record(record: &[f64]) -> Result<Self> {
        if record.len() < 7 {
            return Err(Error::InvalidParameter(format!(
                "checkpoint record needs at least 7 values, got {}",
                record.len()
            )));
        }
        let t = record[0];
        if t < 0.0 || t.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "task counter must be a non-negative integer, got {t}"
            )));
        }
        let mode = if record[1] == 0.0 {
            AveragingMode::Uniform
        } else if record[1] == 1.0 {
            AveragingMode::Ewma { beta: record[2] }
        } else {
            return Err(Error::InvalidParameter(format!(
                "unknown averaging mode code {}",
                record[1]
            )));
        };
        let mut state = Self::new(record.len() - 4, record[3], mode)?;
        state.t = t as u64;
        state.acc.copy_from_slice(&record[4..]);
        Ok(state)
    }
}

/// Exact agreement rates of a known model: for each labeller, the expected
/// fraction of other labellers who agree with her, conditional on both
/// answering.
pub fn agreement_rates_exact(model: &CrowdModel) -> Vec<f64> {
    let p = model.error_probs();
    let n = p.len();
    (0..n)
        .map(|i| {
            let sum: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| p[i] * p[j] + (1.0 - p[i]) * (1.0 - p[j]))
                .sum();
            sum / (n as f64 - 1.0)
        })
        .collect()
}

/// Inverts the current agreement rates into error probabilities.
///
/// Returns `(p_hat, true)` when the fixed point exists, with entries clamped
/// to `[0, 1]`; otherwise the uninformative fallback `(1/2, ..., 1/2)` with
/// `false`. Solver failures also fall back rather than aborting the stream.
pub fn estimate_error_probs(state: &AgreementState, tol: f64) -> (Vec<f64>, bool) {
    let u = state.agreement_rates();
    if state.task_count() >= 1
        && has_unique_fixed_point(&u)
        && let Ok(sol) = solve_fixed_point(&u, tol)
    {
        let p = sol.p_of_u.iter().map(|&pi| pi.clamp(0.0, 1.0)).collect();
        return (p, true);
    }
    (vec![0.5; state.labeller_count()], false)
}

/// Averaging parameter suggested for a drift of speed `sigma`:
/// `alpha^(4/3) sigma^(2/3) / (log n)^3`, clamped to `[1e-4, 1/2]`.
pub fn beta_heuristic(sigma: f64, alpha: f64, n: usize) -> f64 {
    assert!(n > 2, "need more than 2 labellers");
    assert!(sigma >= 0.0, "drift speed must be non-negative");
    let raw = alpha.powf(4.0 / 3.0) * sigma.powf(2.0 / 3.0) / (n as f64).ln().powi(3);
    raw.clamp(1e-4, 0.5)
}

/// Solver tolerance schedule for the uniform stream: `max(sqrt(log n / t),
/// floor)`. Early estimates are noisy anyway, so the solve is allowed to be
/// coarse; the floor stops the bisection from chasing digits forever.
pub fn scheduled_tolerance(n: usize, t: u64, floor: f64) -> f64 {
    if t == 0 {
        return 1.0;
    }
    ((n as f64).ln() / t as f64).sqrt().max(floor)
}

/// How tight the per-task fixed-point solve runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TolerancePolicy {
    /// `max(sqrt(log n / t), floor)`, matching the estimation error decay of
    /// the uniform average.
    Schedule { floor: f64 },
    /// A fixed tolerance, the natural choice under EWMA where the effective
    /// sample size stops growing.
    Fixed(f64),
}

impl TolerancePolicy {
    fn tolerance(&self, n: usize, t: u64) -> f64 {
        match *self {
            TolerancePolicy::Schedule { floor } => scheduled_tolerance(n, t, floor),
            TolerancePolicy::Fixed(tol) => tol,
        }
    }
}

/// Prequential estimator-decoder: predicts each task with the weights learnt
/// from prior tasks, then folds the task in.
///
/// While the fixed point does not yet exist the decoder runs with unit
/// weights, i.e. plain majority vote, which is exactly the behaviour the
/// fallback estimate `(1/2, ..., 1/2)` stands for.
#[derive(Debug, Clone)]
pub struct StreamingAggregator {
    state: AgreementState,
    tolerance: TolerancePolicy,
    p_hat: Vec<f64>,
    unique: bool,
    weights: Vec<f64>,
    fallback_updates: u64,
}

impl StreamingAggregator {
    pub fn new(n: usize, alpha: f64, mode: AveragingMode) -> Result<Self> {
        let state = AgreementState::new(n, alpha, mode)?;
        let tolerance = match mode {
            AveragingMode::Uniform => TolerancePolicy::Schedule { floor: 1e-12 },
            AveragingMode::Ewma { .. } => TolerancePolicy::Fixed(1e-9),
        };
        Ok(Self {
            state,
            tolerance,
            p_hat: vec![0.5; n],
            unique: false,
            weights: vec![1.0; n],
            fallback_updates: 0,
        })
    }

    pub fn with_tolerance(mut self, policy: TolerancePolicy) -> Self {
        self.tolerance = policy;
        self
    }

    pub fn state(&self) -> &AgreementState {
        &self.state
    }

    /// Decoding weights for the next task (unit weights while falling back).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Latest error-probability estimate and whether the inversion was
    /// available (false means the uninformative fallback).
    pub fn estimate(&self) -> (&[f64], bool) {
        (&self.p_hat, self.unique)
    }

    pub fn task_count(&self) -> u64 {
        self.state.task_count()
    }

    pub fn fallback_updates(&self) -> u64 {
        self.fallback_updates
    }

    /// Decodes a task with the current weights, without touching the state.
    pub fn predict<R: Rng>(&self, x: &ObservationVector, tie_rng: &mut R) -> Result<i8> {
        weighted_majority(x, &self.weights, tie_rng)
    }

    /// Clamp applied to the estimate before the log-odds transform. An
    /// estimate `p_hat_i = 0` after `t` tasks is only credible to within the
    /// estimation noise floor, so the implied odds are capped at that floor
    /// instead of the huge constant the raw clamp would allow; a spurious
    /// "perfect" labeller otherwise outvotes everyone and costs real regret.
    /// The cap relaxes as data accrues, down to the default clamp.
    fn decode_clamp(&self) -> f64 {
        let n = self.state.labeller_count() as f64;
        let noise = match self.state.mode() {
            AveragingMode::Uniform => {
                let t = self.state.task_count().max(1);
                (n.ln() / t as f64).sqrt()
            }
            AveragingMode::Ewma { beta } => (n.ln() * beta).sqrt(),
        };
        (noise / 4.0).clamp(DEFAULT_WEIGHT_CLAMP, 0.49)
    }

    /// Folds a task into the state and refreshes the estimate and weights.
    pub fn update(&mut self, x: &ObservationVector) -> Result<()> {
        self.state.update(x)?;
        if !self.refresh_estimate() {
            self.fallback_updates += 1;
        }
        Ok(())
    }

    /// Replaces the agreement state (e.g. from a checkpoint record) and
    /// recomputes the estimate and decoding weights from it.
    pub fn restore_state(&mut self, state: AgreementState) {
        self.state = state;
        self.refresh_estimate();
    }

    fn refresh_estimate(&mut self) -> bool {
        let tol = self
            .tolerance
            .tolerance(self.state.labeller_count(), self.state.task_count());
        let (p_hat, unique) = estimate_error_probs(&self.state, tol);
        if unique {
            self.weights = weights_from_error_probs(&p_hat, self.decode_clamp())
                .expect("estimates are clamped to [0, 1]");
        } else {
            self.weights = vec![1.0; self.state.labeller_count()];
        }
        self.p_hat = p_hat;
        self.unique = unique;
        unique
    }

    /// Prequential step: predict, then update. Returns the prediction made
    /// before the task was folded in.
    pub fn step<R: Rng>(&mut self, x: &ObservationVector, tie_rng: &mut R) -> Result<i8> {
        let prediction = self.predict(x, tie_rng)?;
        self.update(x)?;
        Ok(prediction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{v0, v1};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn obs(entries: &[i8]) -> ObservationVector {
        ObservationVector::from_slice(entries).unwrap()
    }

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn exact_rates_hand_values() {
        let model = CrowdModel::new(1.0, vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.5]).unwrap();
        let a = agreement_rates_exact(&model);
        for (i, want) in [0.7, 0.7, 0.7, 0.5, 0.5, 0.5].iter().enumerate() {
            assert!(approx(a[i], *want, 1e-15));
        }

        let perfect = CrowdModel::new(1.0, vec![0.0; 5]).unwrap();
        assert!(agreement_rates_exact(&perfect).iter().all(|&ai| ai == 1.0));

        let coin = CrowdModel::new(1.0, vec![0.5; 5]).unwrap();
        assert!(
            agreement_rates_exact(&coin)
                .iter()
                .all(|&ai| approx(ai, 0.5, 1e-15))
        );
    }

    #[test]
    fn single_task_updates() {
        let mut st = AgreementState::new(3, 1.0, AveragingMode::Uniform).unwrap();
        st.update(&obs(&[1, 1, -1])).unwrap();
        let a = st.agreement_rates();
        assert!(approx(a[0], 0.5, 1e-15));
        assert!(approx(a[1], 0.5, 1e-15));
        assert!(approx(a[2], 0.0, 1e-15));

        let mut st = AgreementState::new(3, 1.0, AveragingMode::Uniform).unwrap();
        st.update(&obs(&[1, 1, 1])).unwrap();
        assert!(st.agreement_rates().iter().all(|&ai| ai == 1.0));

        let mut st = AgreementState::new(3, 1.0, AveragingMode::Uniform).unwrap();
        st.update(&obs(&[0, 0, 0])).unwrap();
        assert!(st.agreement_rates().iter().all(|&ai| ai == 0.0));
    }

    #[test]
    fn ewma_single_task() {
        let mode = AveragingMode::Ewma { beta: 0.5 };
        let mut st = AgreementState::new(3, 1.0, mode).unwrap();
        st.update(&obs(&[1, 1, -1])).unwrap();
        let a = st.agreement_rates();
        assert!(approx(a[0], 0.25, 1e-15));
        assert!(approx(a[1], 0.25, 1e-15));
        assert!(approx(a[2], 0.0, 1e-15));
    }

    #[test]
    fn ewma_two_identical_tasks() {
        let mode = AveragingMode::Ewma { beta: 0.5 };
        let mut st = AgreementState::new(3, 1.0, mode).unwrap();
        st.update(&obs(&[1, 1, 1])).unwrap();
        st.update(&obs(&[1, 1, 1])).unwrap();
        assert!(st.agreement_rates().iter().all(|&ai| ai == 0.75));
    }

    #[test]
    fn ewma_all_silent_stays_zero() {
        let mode = AveragingMode::Ewma { beta: 0.3 };
        let mut st = AgreementState::new(3, 1.0, mode).unwrap();
        for _ in 0..50 {
            st.update(&obs(&[0, 0, 0])).unwrap();
        }
        assert!(st.agreement_rates().iter().all(|&ai| ai == 0.0));
    }

    #[test]
    fn ewma_total_mass_identity() {
        // with alpha = 1 and everyone agreeing, the estimate is 1 - (1-beta)^t;
        // dyadic beta keeps the identity bit-exact while 1 - (1-beta)^t is
        // representable
        for (beta, exact_steps) in [(0.5, 50u32), (0.25, 25)] {
            let mut st = AgreementState::new(4, 1.0, AveragingMode::Ewma { beta }).unwrap();
            for t in 1..=exact_steps {
                st.update(&obs(&[-1, -1, -1, -1])).unwrap();
                let expect = 1.0 - (1.0 - beta).powi(t as i32);
                assert!(st.agreement_rates().iter().all(|&ai| ai == expect));
            }
        }
        // generic beta holds to roundoff
        let beta = 0.03;
        let mut st = AgreementState::new(4, 1.0, AveragingMode::Ewma { beta }).unwrap();
        for t in 1..=200u32 {
            st.update(&obs(&[1, 1, 1, 1])).unwrap();
            let expect = 1.0 - (1.0 - beta).powi(t as i32);
            assert!(
                st.agreement_rates()
                    .iter()
                    .all(|&ai| approx(ai, expect, 1e-12))
            );
        }
    }

    // O(n^2) reference route: count agreeing pairs explicitly, average at the end.
    struct PairwiseOracle {
        counts: Vec<u64>,
        t: u64,
        alpha: f64,
    }

    impl PairwiseOracle {
        fn new(n: usize, alpha: f64) -> Self {
            Self {
                counts: vec![0; n],
                t: 0,
                alpha,
            }
        }

        fn update(&mut self, x: &ObservationVector) {
            let n = x.len();
            for i in 0..n {
                for j in 0..n {
                    if i != j && x[i] * x[j] == 1 {
                        self.counts[i] += 1;
                    }
                }
            }
            self.t += 1;
        }

        fn rates(&self) -> Vec<f64> {
            let n = self.counts.len() as f64;
            let denom = self.t as f64 * (n - 1.0) * self.alpha * self.alpha;
            self.counts.iter().map(|&c| c as f64 / denom).collect()
        }
    }

    #[test]
    fn streaming_update_equals_pairwise_counts() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 8;
        let alpha = 0.7;
        let mut st = AgreementState::new(n, alpha, AveragingMode::Uniform).unwrap();
        let mut oracle = PairwiseOracle::new(n, alpha);
        for _ in 0..500 {
            let entries: Vec<i8> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < alpha {
                        if rng.random::<bool>() { 1 } else { -1 }
                    } else {
                        0
                    }
                })
                .collect();
            let x = obs(&entries);
            st.update(&x).unwrap();
            oracle.update(&x);
            for (got, want) in st.agreement_rates().iter().zip(oracle.rates()) {
                assert!(approx(*got, want, 1e-12));
            }
        }
    }

    #[test]
    fn uniform_rates_respect_the_alpha_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let alpha = 0.4;
        let mut st = AgreementState::new(5, alpha, AveragingMode::Uniform).unwrap();
        for _ in 0..200 {
            let entries: Vec<i8> = (0..5)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect();
            st.update(&obs(&entries)).unwrap();
            let bound = 1.0 / (alpha * alpha) + 1e-12;
            assert!(st.agreement_rates().iter().all(|&ai| ai <= bound));
        }
    }

    #[test]
    fn unbiased_under_the_model() {
        // mean over 20 seeded runs of the t = 10^4 estimate vs exact rates
        let n = 10;
        let p: Vec<f64> = vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5];
        let model = CrowdModel::new(1.0, p.clone()).unwrap();
        let exact = agreement_rates_exact(&model);
        let mut mean = vec![0.0; n];
        for run in 0..20u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(100 + run);
            let mut st = AgreementState::new(n, 1.0, AveragingMode::Uniform).unwrap();
            for _ in 0..10_000 {
                let g: i8 = if rng.random::<bool>() { 1 } else { -1 };
                let entries: Vec<i8> = p
                    .iter()
                    .map(|&pi| if rng.random::<f64>() < pi { -g } else { g })
                    .collect();
                st.update(&obs(&entries)).unwrap();
            }
            for (m, a) in mean.iter_mut().zip(st.agreement_rates()) {
                *m += a / 20.0;
            }
        }
        for (m, e) in mean.iter().zip(&exact) {
            assert!(approx(*m, *e, 0.02), "mean {m} vs exact {e}");
        }
    }

    #[test]
    fn estimate_inverts_exact_rates() {
        let model = CrowdModel::new(1.0, vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.5]).unwrap();
        let a = agreement_rates_exact(&model);
        // plant the exact rates into a one-task state
        let mut st = AgreementState::new(6, 1.0, AveragingMode::Uniform).unwrap();
        st.t = 1;
        for (acc, &ai) in st.acc.iter_mut().zip(&a) {
            *acc = ai * 5.0; // t (n-1) alpha^2 = 5
        }
        let (p_hat, unique) = estimate_error_probs(&st, 1e-12);
        assert!(unique);
        for (got, want) in p_hat.iter().zip([0.0, 0.0, 0.0, 0.5, 0.5, 0.5]) {
            assert!(approx(*got, want, 1e-9));
        }
    }

    #[test]
    fn estimate_falls_back_without_a_fixed_point() {
        let mut st = AgreementState::new(5, 1.0, AveragingMode::Uniform).unwrap();
        st.update(&obs(&[0, 0, 0, 0, 0])).unwrap();
        assert!(st.agreement_rates().iter().all(|&ai| ai == 0.0));
        let (p_hat, unique) = estimate_error_probs(&st, 1e-12);
        assert!(!unique);
        assert!(p_hat.iter().all(|&pi| pi == 0.5));
    }

    #[test]
    fn estimate_handles_perfect_agreement() {
        let mut st = AgreementState::new(6, 1.0, AveragingMode::Uniform).unwrap();
        st.update(&obs(&[1, 1, 1, 1, 1, 1])).unwrap();
        assert!(st.agreement_rates().iter().all(|&ai| ai == 1.0));
        let (p_hat, unique) = estimate_error_probs(&st, 1e-12);
        assert!(unique);
        // perfect agreement decodes as perfectly reliable labellers
        assert!(p_hat.iter().all(|&pi| pi.abs() < 1e-8), "{p_hat:?}");
    }

    #[test]
    fn inversion_round_trip_under_assumption() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mut checked = 0;
        while checked < 50 {
            let n = rng.random_range(5..=30);
            let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 0.5).collect();
            let q = p.iter().sum::<f64>() / n as f64;
            if q >= 0.5 - 1.0 / n as f64 {
                continue;
            }
            let model = CrowdModel::new(1.0, p.clone()).unwrap();
            let a = agreement_rates_exact(&model);
            if v1(&a) < v0(&a) {
                continue;
            }
            let mut st = AgreementState::new(n, 1.0, AveragingMode::Uniform).unwrap();
            st.t = 1;
            let scale = (n as f64 - 1.0) * 1.0;
            for (acc, &ai) in st.acc.iter_mut().zip(&a) {
                *acc = ai * scale;
            }
            let (p_hat, unique) = estimate_error_probs(&st, 1e-12);
            assert!(unique);
            for (got, want) in p_hat.iter().zip(&p) {
                assert!(approx(*got, *want, 1e-8));
            }
            checked += 1;
        }
    }

    #[test]
    fn beta_heuristic_values() {
        assert_eq!(beta_heuristic(0.0, 1.0, 10), 1e-4);
        let b = beta_heuristic(1e-2, 1.0, 10);
        assert!(approx(b, 0.0038, 2e-4), "beta = {b}");
        assert_eq!(beta_heuristic(1e9, 1.0, 10), 0.5);
    }

    #[test]
    fn tolerance_schedule() {
        let n = 10;
        assert!(approx(
            scheduled_tolerance(n, 100, 1e-12),
            (10f64.ln() / 100.0).sqrt(),
            1e-15
        ));
        // the floor takes over once the schedule drops past it
        assert_eq!(scheduled_tolerance(n, 10_000_000_000, 1e-3), 1e-3);
    }

    #[test]
    fn values_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<AgreementState>();
        assert_send_sync::<StreamingAggregator>();
        assert_send_sync::<DriftSpec>();
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(24);
        for mode in [AveragingMode::Uniform, AveragingMode::Ewma { beta: 0.07 }] {
            let mut st = AgreementState::new(6, 0.8, mode).unwrap();
            for _ in 0..40 {
                let entries: Vec<i8> = (0..6).map(|_| rng.random_range(-1..=1)).collect();
                st.update(&obs(&entries)).unwrap();
            }
            let rec = st.to_record();
            let restored = AgreementState::from_record(&rec).unwrap();
            assert_eq!(st, restored);
        }
    }

    #[test]
    fn aggregator_fallback_decodes_like_majority_vote() {
        let agg = StreamingAggregator::new(5, 1.0, AveragingMode::Uniform).unwrap();
        let (p_hat, unique) = agg.estimate();
        assert!(!unique);
        assert!(p_hat.iter().all(|&pi| pi == 0.5));
        assert!(agg.weights().iter().all(|&wi| wi == 1.0));
    }

    #[test]
    fn aggregator_prequential_step() {
        let mut rng = ChaCha12Rng::seed_from_u64(25);
        let mut agg = StreamingAggregator::new(6, 1.0, AveragingMode::Uniform).unwrap();
        // a clean stream: everyone always says +1
        for _ in 0..20 {
            let x = obs(&[1, 1, 1, 1, 1, 1]);
            let pred = agg.step(&x, &mut rng).unwrap();
            assert_eq!(pred, 1);
        }
        assert_eq!(agg.task_count(), 20);
    }

    proptest! {
        // the O(n) update and the pairwise-count batch form agree on any stream
        #[test]
        fn update_forms_agree(
            tasks in proptest::collection::vec(
                proptest::collection::vec(-1i8..=1, 5),
                1..40
            ),
        ) {
            let mut st = AgreementState::new(5, 0.9, AveragingMode::Uniform).unwrap();
            let mut oracle = PairwiseOracle::new(5, 0.9);
            for entries in &tasks {
                let x = obs(entries);
                st.update(&x).unwrap();
                oracle.update(&x);
            }
            for (got, want) in st.agreement_rates().iter().zip(oracle.rates()) {
                prop_assert!((got - want).abs() <= 1e-12);
            }
        }

        // whenever the estimate falls back, downstream decoding is majority vote
        #[test]
        fn fallback_matches_majority_vote(entries in proptest::collection::vec(-1i8..=1, 5), seed in 0u64..500) {
            let agg = StreamingAggregator::new(5, 1.0, AveragingMode::Uniform).unwrap();
            let x = obs(&entries);
            let mut r1 = ChaCha12Rng::seed_from_u64(seed);
            let mut r2 = ChaCha12Rng::seed_from_u64(seed);
            let lhs = agg.predict(&x, &mut r1).unwrap();
            let rhs = crate::baselines::majority_vote(&x, &mut r2);
            prop_assert_eq!(lhs, rhs);
        }
    }
}
