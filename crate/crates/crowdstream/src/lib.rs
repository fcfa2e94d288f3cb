//! Streaming aggregation of binary crowd labels.
//!
//! Each labeller's reliability is learnt from how often the other labellers
//! agree with her: the agreement-rate vector determines the error
//! probabilities through a scalar fixed-point equation, so tasks can be
//! decoded on the fly with weighted majority votes and no task-label matrix
//! ever stored. Exponentially weighted averaging tracks labellers whose
//! error rates drift over time.
//!
//! The crate also ships the batch baselines the streaming estimator is
//! usually compared against (majority vote, symmetric-error EM), a
//! synthetic-stream benchmark harness, and loaders for the common
//! `task worker label` dataset format. The `crowdstream` binary exposes all
//! of this as `simulate`, `eval` and `predict` subcommands.
//!
//! ```
//! use crowdstream::{AveragingMode, ObservationVector, StreamingAggregator};
//! use rand::SeedableRng;
//!
//! let mut agg = StreamingAggregator::new(3, 1.0, AveragingMode::Uniform)?;
//! let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
//! let task = ObservationVector::new(vec![1, 1, -1])?;
//! let prediction = agg.step(&task, &mut rng)?; // predict, then learn
//! assert!(prediction == 1 || prediction == -1);
//! # Ok::<(), crowdstream::Error>(())
//! ```

pub mod agreement;
pub mod baselines;
pub mod datasets;
pub mod decode;
pub mod error;
pub mod fixedpoint;
pub mod model;
pub mod simulator;

pub use agreement::{
    AgreementState, AveragingMode, DriftSpec, StreamingAggregator, TolerancePolicy,
    agreement_rates_exact, beta_heuristic, estimate_error_probs, scheduled_tolerance,
};
pub use baselines::{EmOptions, EmResult, LabelMatrix, dawid_skene_em, majority_vote};
pub use datasets::{Dataset, RawLabelRecord, binarize_label, evaluate, load_labels};
pub use decode::{
    DEFAULT_LAMBDA_MAX_N, DEFAULT_WEIGHT_CLAMP, ErrorProfile, check_assumption, model_diagnostics,
    weighted_majority, weights_from_error_probs,
};
pub use error::{Error, Result};
pub use fixedpoint::{
    FixedPointSolution, discriminants, f_eval, g_eval, has_unique_fixed_point, phi,
    solve_fixed_point, v0, v1,
};
pub use model::{CrowdModel, GroundTruth, ObservationSummary, ObservationVector};
pub use simulator::{
    DriftTrajectory, ExperimentMetrics, ExperimentOptions, GeneratorConfig, LabelProfile,
    generate_task, hammer_spammer_p, oracle_error_known_truth, run_experiment,
};
