//! Synthetic data generation, the prequential benchmark loop and its
//! metrics.
//!
//! Every run decodes one shared task stream with all methods (common random
//! numbers), which cuts the Monte-Carlo variance of the regret estimate: the
//! streaming aggregator and the oracle only differ on tasks where their
//! decisions differ. Runs use independent, counter-derived RNG streams, so a
//! run's results do not depend on how many runs execute or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::agreement::{AveragingMode, DriftSpec, StreamingAggregator, TolerancePolicy};
use crate::baselines::{EmOptions, LabelMatrix, dawid_skene_em, majority_vote};
use crate::decode::{DEFAULT_WEIGHT_CLAMP, weighted_majority, weights_from_error_probs};
use crate::error::{Error, Result};
use crate::model::{GroundTruth, ObservationVector};

/// Error-probability profile of the simulated crowd.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelProfile {
    /// A fixed, explicit vector.
    Explicit(Vec<f64>),
    /// First half of the labellers at `p1 < 1/2`, second half uninformative
    /// at `1/2`. Requires even `n`.
    HammerSpammer { p1: f64 },
    /// `p_i(t) = (1 + sin(omega t + phi_i)) / 4` with phases `phi_i = 2 pi i / n`.
    Sinusoid { omega: f64 },
}

/// Full description of a synthetic stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n: usize,
    pub alpha: f64,
    pub profile: LabelProfile,
    pub seed: u64,
    pub tasks: usize,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n <= 2 {
            return Err(Error::InvalidParameter(format!(
                "need more than 2 labellers, got {}",
                self.n
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.tasks == 0 {
            return Err(Error::InvalidParameter("need at least one task".into()));
        }
        match &self.profile {
            LabelProfile::Explicit(p) => {
                if p.len() != self.n {
                    return Err(Error::LengthMismatch {
                        expected: self.n,
                        got: p.len(),
                    });
                }
                if let Some(&bad) = p.iter().find(|&&pi| !(0.0..=1.0).contains(&pi)) {
                    return Err(Error::ProbabilityOutOfRange(bad));
                }
            }
            LabelProfile::HammerSpammer { p1 } => {
                hammer_spammer_p(self.n, *p1)?;
            }
            LabelProfile::Sinusoid { omega } => {
                if *omega <= 0.0 || omega.is_nan() {
                    return Err(Error::InvalidParameter(format!(
                        "omega must be positive, got {omega}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Error probabilities in force at task index `t` (0-based).
    pub fn error_probs_at(&self, t: usize) -> Vec<f64> {
        match &self.profile {
            LabelProfile::Explicit(p) => p.clone(),
            LabelProfile::HammerSpammer { p1 } => {
                hammer_spammer_p(self.n, *p1).expect("validated profile")
            }
            LabelProfile::Sinusoid { omega } => {
                let n = self.n as f64;
                (0..self.n)
                    .map(|i| {
                        let phase = 2.0 * std::f64::consts::PI * i as f64 / n;
                        0.25 * (1.0 + (omega * t as f64 + phase).sin())
                    })
                    .collect()
            }
        }
    }

    /// True when the profile varies over tasks.
    pub fn is_drifting(&self) -> bool {
        matches!(self.profile, LabelProfile::Sinusoid { .. })
    }

    /// Trajectory view with its drift-speed bound.
    pub fn drift_trajectory(&self) -> DriftTrajectory {
        let sigma = match &self.profile {
            // the sinusoid derivative is bounded by omega / 4
            LabelProfile::Sinusoid { omega } => omega / 4.0,
            _ => 0.0,
        };
        DriftTrajectory {
            config: self.clone(),
            sigma_bound: DriftSpec::new(sigma).expect("non-negative by construction"),
        }
    }
}

/// A time-indexed error-probability trajectory together with a Lipschitz
/// bound on its per-task variation.
#[derive(Debug, Clone)]
pub struct DriftTrajectory {
    config: GeneratorConfig,
    pub sigma_bound: DriftSpec,
}

impl DriftTrajectory {
    pub fn p_at(&self, t: usize) -> Vec<f64> {
        self.config.error_probs_at(t)
    }
}

/// The half informative / half uninformative profile: first `n/2` entries at
/// `p1`, the rest at `1/2`. The mean is `(p1 + 1/2) / 2`.
pub fn hammer_spammer_p(n: usize, p1: f64) -> Result<Vec<f64>> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "this profile needs an even number of labellers, got {n}"
        )));
    }
    if !(0.0..0.5).contains(&p1) {
        return Err(Error::InvalidParameter(format!(
            "p1 must lie in [0, 1/2), got {p1}"
        )));
    }
    let mut p = vec![p1; n / 2];
    p.resize(n, 0.5);
    Ok(p)
}

/// Draws one task: a centered ground truth, then each labeller answers with
/// probability `alpha` and errs with her current probability.
pub fn generate_task<R: Rng>(
    config: &GeneratorConfig,
    t: usize,
    rng: &mut R,
) -> (GroundTruth, ObservationVector) {
    let p = config.error_probs_at(t);
    generate_from(&p, config.alpha, rng)
}

fn generate_from<R: Rng>(p: &[f64], alpha: f64, rng: &mut R) -> (GroundTruth, ObservationVector) {
    let g: i8 = if rng.random::<bool>() { 1 } else { -1 };
    let entries: Vec<i8> = p
        .iter()
        .map(|&pi| {
            if rng.random::<f64>() < alpha {
                if rng.random::<f64>() < pi { -g } else { g }
            } else {
                0
            }
        })
        .collect();
    (
        GroundTruth::new(g).expect("g is a sign"),
        ObservationVector::new(entries).expect("entries are labels"),
    )
}

/// Truth-aware estimator: each labeller's empirical disagreement rate with
/// the known truth, `1/2` for labellers who never answered.
pub fn oracle_error_known_truth(labels: &LabelMatrix, truth: &[i8]) -> Result<Vec<f64>> {
    if labels.task_count() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: labels.task_count(),
            got: truth.len(),
        });
    }
    let n = labels.labeller_count();
    let mut wrong = vec![0usize; n];
    let mut answers = vec![0usize; n];
    for (row, &g) in labels.rows().iter().zip(truth) {
        for (i, &xi) in row.entries().iter().enumerate() {
            if xi != 0 {
                answers[i] += 1;
                wrong[i] += (xi != g) as usize;
            }
        }
    }
    Ok((0..n)
        .map(|i| {
            if answers[i] == 0 {
                0.5
            } else {
                wrong[i] as f64 / answers[i] as f64
            }
        })
        .collect())
}

/// Knobs of the benchmark loop beyond the generator itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub runs: usize,
    /// EWMA parameter; `None` selects the uniform average.
    pub beta: Option<f64>,
    /// Fixed solver tolerance override; `None` uses the per-mode default.
    pub tol: Option<f64>,
    /// Refit the batch EM baseline on the stored prefix every this many
    /// tasks; `None` disables the EM column (and the prefix storage).
    pub em_refit_every: Option<usize>,
    /// Record the first labeller's true and estimated error probability.
    pub track_first_labeller: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            runs: 1,
            beta: None,
            tol: None,
            em_refit_every: None,
            track_first_labeller: false,
        }
    }
}

/// Per-task series averaged over runs, plus run metadata.
#[derive(Debug, Clone)]
pub struct ExperimentMetrics {
    pub config: GeneratorConfig,
    pub runs: usize,
    /// `max_i |p_hat_i(t) - p_i(t)|` after the update at task `t`.
    pub linf_error: Vec<f64>,
    /// `(1/n) sum_i |p_hat_i(t) - p_i(t)|`.
    pub l1_error: Vec<f64>,
    /// Mean cumulative prediction-error counts per method.
    pub ab_errors: Vec<f64>,
    pub mv_errors: Vec<f64>,
    pub oracle_errors: Vec<f64>,
    pub em_errors: Option<Vec<f64>>,
    /// Per-task excess error of the aggregator over the oracle.
    pub simple_regret: Vec<f64>,
    /// `R(t)`: mean cumulative excess errors over the oracle.
    pub cumulative_regret: Vec<f64>,
    pub first_labeller_truth: Option<Vec<f64>>,
    pub first_labeller_estimate: Option<Vec<f64>>,
    /// Mean of `|p_hat_0(t) - p_0(t)|` over runs (not the error of the mean).
    pub first_labeller_abs_error: Option<Vec<f64>>,
    /// Fraction of updates across all runs that used the fallback estimate.
    pub fallback_rate: f64,
}

struct RunOutcome {
    linf: Vec<f64>,
    l1: Vec<f64>,
    ab_cum: Vec<u32>,
    mv_cum: Vec<u32>,
    oracle_cum: Vec<u32>,
    em_cum: Option<Vec<u32>>,
    first_est: Option<Vec<f64>>,
    first_abs: Option<Vec<f64>>,
    fallback_updates: u64,
    updates: u64,
}

const RNG_STREAMS_PER_RUN: u64 = 5;

/// Runs the prequential benchmark: per task, every method predicts before
/// the aggregator's state update, all on the same sampled stream.
pub fn run_experiment(
    config: &GeneratorConfig,
    opts: &ExperimentOptions,
) -> Result<ExperimentMetrics> {
    config.validate()?;
    if opts.runs == 0 {
        return Err(Error::InvalidParameter("need at least one run".into()));
    }
    if let Some(beta) = opts.beta
        && !(beta > 0.0 && beta < 1.0)
    {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    if let Some(tol) = opts.tol
        && (tol <= 0.0 || tol.is_nan())
    {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if opts.em_refit_every == Some(0) {
        return Err(Error::InvalidParameter(
            "EM refit cadence must be positive".into(),
        ));
    }

    let outcomes: Vec<RunOutcome> = (0..opts.runs)
        .into_par_iter()
        .map(|run| simulate_one_run(config, opts, run as u64))
        .collect();

    let t_count = config.tasks;
    let runs = opts.runs as f64;
    let mut metrics = ExperimentMetrics {
        config: config.clone(),
        runs: opts.runs,
        linf_error: vec![0.0; t_count],
        l1_error: vec![0.0; t_count],
        ab_errors: vec![0.0; t_count],
        mv_errors: vec![0.0; t_count],
        oracle_errors: vec![0.0; t_count],
        em_errors: opts.em_refit_every.map(|_| vec![0.0; t_count]),
        simple_regret: vec![0.0; t_count],
        cumulative_regret: vec![0.0; t_count],
        first_labeller_truth: opts
            .track_first_labeller
            .then(|| (0..t_count).map(|t| config.error_probs_at(t)[0]).collect()),
        first_labeller_estimate: opts.track_first_labeller.then(|| vec![0.0; t_count]),
        first_labeller_abs_error: opts.track_first_labeller.then(|| vec![0.0; t_count]),
        fallback_rate: 0.0,
    };

    let mut fallback = 0u64;
    let mut updates = 0u64;
    for o in &outcomes {
        for t in 0..t_count {
            metrics.linf_error[t] += o.linf[t] / runs;
            metrics.l1_error[t] += o.l1[t] / runs;
            metrics.ab_errors[t] += o.ab_cum[t] as f64 / runs;
            metrics.mv_errors[t] += o.mv_cum[t] as f64 / runs;
            metrics.oracle_errors[t] += o.oracle_cum[t] as f64 / runs;
        }
        if let (Some(em), Some(cum)) = (metrics.em_errors.as_mut(), o.em_cum.as_ref()) {
            for t in 0..t_count {
                em[t] += cum[t] as f64 / runs;
            }
        }
        if let (Some(est), Some(series)) = (
            metrics.first_labeller_estimate.as_mut(),
            o.first_est.as_ref(),
        ) {
            for t in 0..t_count {
                est[t] += series[t] / runs;
            }
        }
        if let (Some(abs), Some(series)) = (
            metrics.first_labeller_abs_error.as_mut(),
            o.first_abs.as_ref(),
        ) {
            for t in 0..t_count {
                abs[t] += series[t] / runs;
            }
        }
        fallback += o.fallback_updates;
        updates += o.updates;
    }
    for t in 0..t_count {
        metrics.cumulative_regret[t] = metrics.ab_errors[t] - metrics.oracle_errors[t];
        metrics.simple_regret[t] = if t == 0 {
            metrics.cumulative_regret[0]
        } else {
            metrics.cumulative_regret[t] - metrics.cumulative_regret[t - 1]
        };
    }
    metrics.fallback_rate = if updates == 0 {
        0.0
    } else {
        fallback as f64 / updates as f64
    };
    Ok(metrics)
}

fn run_rng(seed: u64, run: u64, role: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(run * RNG_STREAMS_PER_RUN + role);
    rng
}

fn simulate_one_run(config: &GeneratorConfig, opts: &ExperimentOptions, run: u64) -> RunOutcome {
    let t_count = config.tasks;
    let n = config.n;
    let mut data_rng = run_rng(config.seed, run, 0);
    let mut ab_rng = run_rng(config.seed, run, 1);
    let mut mv_rng = run_rng(config.seed, run, 2);
    let mut oracle_rng = run_rng(config.seed, run, 3);
    let mut em_rng = run_rng(config.seed, run, 4);

    let mode = match opts.beta {
        Some(beta) => AveragingMode::Ewma { beta },
        None => AveragingMode::Uniform,
    };
    let mut agg = StreamingAggregator::new(n, config.alpha, mode).expect("validated config");
    if let Some(tol) = opts.tol {
        agg = agg.with_tolerance(TolerancePolicy::Fixed(tol));
    }

    let drifting = config.is_drifting();
    let p_static = (!drifting).then(|| config.error_probs_at(0));
    let oracle_w_static = p_static
        .as_ref()
        .map(|p| weights_from_error_probs(p, DEFAULT_WEIGHT_CLAMP).expect("valid probabilities"));

    let mut em_store = opts
        .em_refit_every
        .map(|_| LabelMatrix::new(n).expect("n > 2"));
    let mut em_weights = vec![1.0; n];

    let mut outcome = RunOutcome {
        linf: vec![0.0; t_count],
        l1: vec![0.0; t_count],
        ab_cum: vec![0; t_count],
        mv_cum: vec![0; t_count],
        oracle_cum: vec![0; t_count],
        em_cum: opts.em_refit_every.map(|_| vec![0; t_count]),
        first_est: opts.track_first_labeller.then(|| vec![0.0; t_count]),
        first_abs: opts.track_first_labeller.then(|| vec![0.0; t_count]),
        fallback_updates: 0,
        updates: 0,
    };

    let mut p_drift_buf;
    let mut ab_cum = 0u32;
    let mut mv_cum = 0u32;
    let mut oracle_cum = 0u32;
    let mut em_cum = 0u32;

    for t in 0..t_count {
        let p_true: &[f64] = match &p_static {
            Some(p) => p,
            None => {
                p_drift_buf = config.error_probs_at(t);
                &p_drift_buf
            }
        };
        let (g, x) = generate_from(p_true, config.alpha, &mut data_rng);
        let truth = g.value();

        let ab_pred = agg.predict(&x, &mut ab_rng).expect("matching lengths");
        let mv_pred = majority_vote(&x, &mut mv_rng);
        let oracle_pred = match &oracle_w_static {
            Some(w) => weighted_majority(&x, w, &mut oracle_rng),
            None => {
                let w = weights_from_error_probs(p_true, DEFAULT_WEIGHT_CLAMP)
                    .expect("valid probabilities");
                weighted_majority(&x, &w, &mut oracle_rng)
            }
        }
        .expect("matching lengths");

        ab_cum += (ab_pred != truth) as u32;
        mv_cum += (mv_pred != truth) as u32;
        oracle_cum += (oracle_pred != truth) as u32;
        outcome.ab_cum[t] = ab_cum;
        outcome.mv_cum[t] = mv_cum;
        outcome.oracle_cum[t] = oracle_cum;

        if let (Some(every), Some(store)) = (opts.em_refit_every, em_store.as_mut()) {
            let em_pred = weighted_majority(&x, &em_weights, &mut em_rng).expect("lengths");
            em_cum += (em_pred != truth) as u32;
            outcome.em_cum.as_mut().expect("enabled")[t] = em_cum;
            store.push(x.clone()).expect("matching n");
            if (t + 1) % every == 0 {
                let fit = dawid_skene_em(store, &EmOptions::default()).expect("non-empty prefix");
                em_weights = weights_from_error_probs(&fit.p_hat, DEFAULT_WEIGHT_CLAMP)
                    .expect("EM rates lie in [0, 1]");
            }
        }

        agg.update(&x).expect("matching lengths");
        let (p_hat, _) = agg.estimate();
        let mut linf: f64 = 0.0;
        let mut l1 = 0.0;
        for (ph, pt) in p_hat.iter().zip(p_true) {
            let d = (ph - pt).abs();
            linf = linf.max(d);
            l1 += d / n as f64;
        }
        outcome.linf[t] = linf;
        outcome.l1[t] = l1;
        if let Some(series) = outcome.first_est.as_mut() {
            series[t] = p_hat[0];
        }
        if let Some(series) = outcome.first_abs.as_mut() {
            series[t] = (p_hat[0] - p_true[0]).abs();
        }
    }

    outcome.fallback_updates = agg.fallback_updates();
    outcome.updates = agg.task_count();
    outcome
}
