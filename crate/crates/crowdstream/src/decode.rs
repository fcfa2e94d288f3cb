//! Log-odds weights, weighted majority decoding and model diagnostics.

use rand::Rng;

use crate::agreement::agreement_rates_exact;
use crate::error::{Error, Result};
use crate::fixedpoint::v0;
use crate::model::{CrowdModel, ObservationVector};

/// Default clamp applied to error probabilities before the log-odds
/// transform, keeping every weight finite while still letting one reliable
/// labeller outvote any number of uninformative ones at practical `n`.
pub const DEFAULT_WEIGHT_CLAMP: f64 = 1e-6;

/// Largest `n` for which `model_diagnostics` enumerates all `3^n` label
/// vectors to compute the decision margin `lambda`.
pub const DEFAULT_LAMBDA_MAX_N: usize = 12;

/// Weights `w_i = log(1/p_i' - 1)` with `p_i' = clamp(p_i, clamp, 1 - clamp)`.
///
/// Rejects probabilities outside `[0, 1]` and clamps outside `(0, 1/2)`.
pub fn weights_from_error_probs(p: &[f64], clamp: f64) -> Result<Vec<f64>> {
    if !(clamp > 0.0 && clamp < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "clamp must lie in (0, 1/2), got {clamp}"
        )));
    }
    if let Some(&bad) = p.iter().find(|&&pi| !(0.0..=1.0).contains(&pi)) {
        return Err(Error::ProbabilityOutOfRange(bad));
    }
    Ok(p.iter()
        .map(|&pi| {
            let pc = pi.clamp(clamp, 1.0 - clamp);
            (1.0 / pc - 1.0).ln()
        })
        .collect())
}

/// Weighted majority vote: the sign of `w . x`, with an exact zero broken by
/// a fair coin drawn from `tie_rng`.
pub fn weighted_majority<R: Rng>(x: &ObservationVector, w: &[f64], tie_rng: &mut R) -> Result<i8> {
    if x.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: w.len(),
            got: x.len(),
        });
    }
    let dot: f64 = x
        .entries()
        .iter()
        .zip(w)
        .map(|(&xi, &wi)| xi as f64 * wi)
        .sum();
    Ok(if dot > 0.0 {
        1
    } else if dot < 0.0 {
        -1
    } else if tie_rng.random::<bool>() {
        1
    } else {
        -1
    })
}

/// True iff the mean error probability satisfies `mean(p) < 1/2 - 1/n`,
/// the identifiability condition the whole inversion rests on.
pub fn check_assumption(p: &[f64]) -> bool {
    let n = p.len() as f64;
    let q = p.iter().sum::<f64>() / n;
    q < 0.5 - 1.0 / n
}

/// Derived quantities of an error-probability vector: mean `q`, weights `w`,
/// the fixed-point margin `gamma`, the regret constant `eta`, and (for small
/// `n`) the minimum nonzero decision margin `lambda`.
#[derive(Debug, Clone)]
pub struct ErrorProfile {
    pub p: Vec<f64>,
    pub q: f64,
    pub w: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
    /// `min |w . x|` over label vectors with `w . x != 0`; absent when the
    /// exhaustive enumeration is gated off (`n > lambda_max_n`).
    pub lambda: Option<f64>,
}

/// Fills an [`ErrorProfile`] from a model. `lambda` costs `O(3^n)` and is
/// only computed when `n <= lambda_max_n`.
pub fn model_diagnostics(model: &CrowdModel, lambda_max_n: usize) -> ErrorProfile {
    let p = model.error_probs();
    let n = model.labeller_count();
    let q = p.iter().sum::<f64>() / n as f64;
    let w = weights_from_error_probs(p, DEFAULT_WEIGHT_CLAMP)
        .expect("model probabilities are validated");
    let eta = p
        .iter()
        .map(|&pi| pi * (1.0 - pi))
        .fold(f64::INFINITY, f64::min);
    let a = agreement_rates_exact(model);
    let gamma = ((1.0 - 2.0 * q).powi(2) - v0(&a)).max(0.0);
    let lambda = (n <= lambda_max_n).then(|| min_nonzero_abs_dot(&w));
    ErrorProfile {
        p: p.to_vec(),
        q,
        w,
        gamma,
        eta,
        lambda,
    }
}

/// Exhaustive scan of `|w . x|` over `x in {-1, 0, 1}^n`, excluding exact
/// zeros. Sums below `1e-12 * (1 + |w|_1)` count as zero to absorb
/// cancellation noise. Returns infinity when every dot product vanishes.
fn min_nonzero_abs_dot(w: &[f64]) -> f64 {
    let n = w.len();
    let zero_tol = 1e-12 * (1.0 + w.iter().map(|wi| wi.abs()).sum::<f64>());
    let mut digits = vec![0u8; n]; // ternary counter, digit d encodes label d - 1
    let mut best = f64::INFINITY;
    loop {
        let dot: f64 = digits
            .iter()
            .zip(w)
            .map(|(&d, &wi)| (d as f64 - 1.0) * wi)
            .sum();
        if dot.abs() > zero_tol && dot.abs() < best {
            best = dot.abs();
        }
        let mut k = 0;
        while k < n {
            digits[k] += 1;
            if digits[k] == 3 {
                digits[k] = 0;
                k += 1;
            } else {
                break;
            }
        }
        if k == n {
            return best;
        }
    }
}
