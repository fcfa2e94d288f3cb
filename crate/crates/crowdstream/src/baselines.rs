//! Reference aggregators: plain majority vote and a symmetric-error
//! expectation-maximization estimator.
//!
//! The EM baseline uses one error probability per labeller (not a full
//! confusion matrix) and a uniform class prior, so it competes with the
//! streaming estimator on the same parameterization. It is initialized from
//! majority-vote pseudo-truth, which is deterministic and breaks the
//! `p <-> 1 - p` symmetry of the marginal likelihood towards mostly-truthful
//! labellers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ObservationVector;

/// Probabilities are pulled this far off the boundary inside likelihood
/// evaluations so log terms stay finite.
const P_EPS: f64 = 1e-12;

/// Dense task-by-labeller store of observations (0 = missing). The streaming
/// path never needs one; the batch baselines do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    n: usize,
    rows: Vec<ObservationVector>,
}

impl LabelMatrix {
    pub fn new(n: usize) -> Result<Self> {
        if n <= 2 {
            return Err(Error::InvalidParameter(format!(
                "need more than 2 labellers, got {n}"
            )));
        }
        Ok(Self {
            n,
            rows: Vec::new(),
        })
    }

    pub fn from_rows(rows: Vec<ObservationVector>) -> Result<Self> {
        let n = rows
            .first()
            .map(ObservationVector::len)
            .ok_or_else(|| Error::InvalidParameter("label matrix needs at least one row".into()))?;
        let mut m = Self::new(n)?;
        for row in rows {
            m.push(row)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, row: ObservationVector) -> Result<()> {
        if row.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn labeller_count(&self) -> usize {
        self.n
    }

    pub fn task_count(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[ObservationVector] {
        &self.rows
    }

    /// Number of answered (nonzero) cells.
    pub fn answer_count(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.entries().iter().filter(|&&e| e != 0).count())
            .sum()
    }

    /// The matrix with every label negated.
    pub fn flipped(&self) -> Self {
        Self {
            n: self.n,
            rows: self.rows.iter().map(ObservationVector::flipped).collect(),
        }
    }
}

/// Simple majority vote with a fair coin on ties.
pub fn majority_vote<R: Rng>(x: &ObservationVector, tie_rng: &mut R) -> i8 {
    let s = x.summary().s;
    if s > 0 {
        1
    } else if s < 0 {
        -1
    } else if tie_rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// Stopping and iteration limits for [`dawid_skene_em`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iters: usize,
    pub ll_tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            ll_tol: 1e-8,
        }
    }
}

/// Output of the EM fit.
#[derive(Debug, Clone)]
pub struct EmResult {
    pub p_hat: Vec<f64>,
    /// Per-task posterior probability that the truth is `+1`.
    pub posteriors: Vec<f64>,
    /// Marginal log-likelihood after each E-step; nondecreasing up to
    /// floating-point slack.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Symmetric-error Dawid-Skene EM with a uniform class prior.
///
/// E-step: task posteriors from the current `p_hat`. M-step: each labeller's
/// error rate becomes her posterior-weighted disagreement fraction over the
/// tasks she answered; labellers with no answers get `1/2`. Stops when the
/// log-likelihood gain drops under `ll_tol` or after `max_iters` E-steps.
pub fn dawid_skene_em(matrix: &LabelMatrix, opts: &EmOptions) -> Result<EmResult> {
    let t = matrix.task_count();
    let n = matrix.labeller_count();
    if t == 0 {
        return Err(Error::InvalidParameter("EM needs at least one task".into()));
    }

    let mut p_hat = majority_pseudo_truth_rates(matrix);

    let mut posteriors = vec![0.5; t];
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..opts.max_iters {
        // E-step and marginal log-likelihood at the current parameters
        let mut ll = 0.0;
        for (row, post) in matrix.rows().iter().zip(posteriors.iter_mut()) {
            let (lp, lm) = row_log_likelihoods(row, &p_hat);
            let mx = lp.max(lm);
            ll += mx + ((lp - mx).exp() + (lm - mx).exp()).ln() + 0.5f64.ln();
            *post = 1.0 / (1.0 + (lm - lp).exp());
        }
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if ll - prev < opts.ll_tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }

        // M-step: posterior-weighted disagreement fractions
        let mut disagreement = vec![0.0; n];
        let mut answers = vec![0usize; n];
        for (row, &post) in matrix.rows().iter().zip(&posteriors) {
            for (i, &xi) in row.entries().iter().enumerate() {
                match xi {
                    1 => {
                        disagreement[i] += 1.0 - post;
                        answers[i] += 1;
                    }
                    -1 => {
                        disagreement[i] += post;
                        answers[i] += 1;
                    }
                    _ => {}
                }
            }
        }
        for i in 0..n {
            p_hat[i] = if answers[i] == 0 {
                0.5
            } else {
                disagreement[i] / answers[i] as f64
            };
        }
    }

    let iterations = trace.len();
    Ok(EmResult {
        p_hat,
        posteriors,
        log_likelihood_trace: trace,
        iterations,
        converged,
    })
}

/// Disagreement rates against the majority-vote pseudo-truth. Tie rows
/// contribute half a disagreement to every answering labeller, which keeps
/// the init deterministic and equivariant under a global label flip.
fn majority_pseudo_truth_rates(matrix: &LabelMatrix) -> Vec<f64> {
    let n = matrix.labeller_count();
    let mut wrong = vec![0.0; n];
    let mut answers = vec![0usize; n];
    for row in matrix.rows() {
        let s = row.summary().s;
        for (i, &xi) in row.entries().iter().enumerate() {
            if xi != 0 {
                answers[i] += 1;
                wrong[i] += if s == 0 {
                    0.5
                } else {
                    (xi as i64 * s < 0) as u8 as f64
                };
            }
        }
    }
    (0..n)
        .map(|i| {
            if answers[i] == 0 {
                0.5
            } else {
                wrong[i] / answers[i] as f64
            }
        })
        .collect()
}

/// Log-likelihoods of one row under truth `+1` and `-1`, dropping the
/// answer-probability factors which cancel in the posterior.
fn row_log_likelihoods(row: &ObservationVector, p_hat: &[f64]) -> (f64, f64) {
    let mut lp = 0.0;
    let mut lm = 0.0;
    for (&xi, &pi) in row.entries().iter().zip(p_hat) {
        let pc = pi.clamp(P_EPS, 1.0 - P_EPS);
        match xi {
            1 => {
                lp += (1.0 - pc).ln();
                lm += pc.ln();
            }
            -1 => {
                lp += pc.ln();
                lm += (1.0 - pc).ln();
            }
            _ => {}
        }
    }
    (lp, lm)
}

/// Hard labels from posteriors: `+1` above `1/2`, `-1` below, a fair coin at
/// exactly `1/2`.
pub fn posterior_predictions<R: Rng>(posteriors: &[f64], tie_rng: &mut R) -> Vec<i8> {
    posteriors
        .iter()
        .map(|&mu| {
            if mu > 0.5 {
                1
            } else if mu < 0.5 {
                -1
            } else if tie_rng.random::<bool>() {
                1
            } else {
                -1
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::weighted_majority;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn obs(entries: &[i8]) -> ObservationVector {
        ObservationVector::from_slice(entries).unwrap()
    }

    #[test]
    fn majority_vote_hand_values() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        assert_eq!(majority_vote(&obs(&[1, 1, -1]), &mut rng), 1);
        let mut ups = 0;
        for _ in 0..2000 {
            ups += (majority_vote(&obs(&[1, -1, 0]), &mut rng) == 1) as u32;
            ups += (majority_vote(&obs(&[0, 0, 0]), &mut rng) == 1) as u32;
        }
        assert!((ups as f64 - 2000.0).abs() < 5.0 * (4000.0f64 * 0.25).sqrt());
    }

    #[test]
    fn em_on_perfectly_consistent_data() {
        let rows = vec![obs(&[1, 1, 1]); 5];
        let m = LabelMatrix::from_rows(rows).unwrap();
        let res = dawid_skene_em(&m, &EmOptions::default()).unwrap();
        assert!(res.p_hat.iter().all(|&pi| pi < 0.01), "{:?}", res.p_hat);
        assert!(res.posteriors.iter().all(|&mu| mu > 0.99));
        assert!(res.converged);
    }

    #[test]
    fn em_with_a_single_active_labeller() {
        let rows = vec![
            obs(&[1, 0, 0]),
            obs(&[-1, 0, 0]),
            obs(&[1, 0, 0]),
            obs(&[-1, 0, 0]),
        ];
        let m = LabelMatrix::from_rows(rows).unwrap();
        let res = dawid_skene_em(&m, &EmOptions::default()).unwrap();
        assert!(res.p_hat[0] < 0.01);
        assert_eq!(res.p_hat[1], 0.5);
        assert_eq!(res.p_hat[2], 0.5);
    }

    #[test]
    fn em_trace_is_monotone() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        for _ in 0..30 {
            let n = rng.random_range(3..=7);
            let t = rng.random_range(2..=40);
            let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 0.6).collect();
            let mut m = LabelMatrix::new(n).unwrap();
            for _ in 0..t {
                let g: i8 = if rng.random::<bool>() { 1 } else { -1 };
                let entries: Vec<i8> = p
                    .iter()
                    .map(|&pi| {
                        if rng.random::<f64>() < 0.8 {
                            if rng.random::<f64>() < pi { -g } else { g }
                        } else {
                            0
                        }
                    })
                    .collect();
                m.push(obs(&entries)).unwrap();
            }
            let res = dawid_skene_em(&m, &EmOptions::default()).unwrap();
            for pair in res.log_likelihood_trace.windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-9,
                    "log-likelihood dropped: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn em_label_flip_equivariance() {
        let rows = vec![
            obs(&[1, 1, -1, 0]),
            obs(&[1, -1, 1, 1]),
            obs(&[-1, 1, 1, -1]),
            obs(&[1, 1, 0, 1]),
            obs(&[-1, -1, -1, 1]),
        ];
        let m = LabelMatrix::from_rows(rows).unwrap();
        let res = dawid_skene_em(&m, &EmOptions::default()).unwrap();
        let res_flip = dawid_skene_em(&m.flipped(), &EmOptions::default()).unwrap();
        for (a, b) in res.p_hat.iter().zip(&res_flip.p_hat) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (mu, nu) in res.posteriors.iter().zip(&res_flip.posteriors) {
            assert!((mu - (1.0 - nu)).abs() <= 1e-9);
        }
    }

    #[test]
    fn em_rejects_empty_input() {
        let m = LabelMatrix::new(3).unwrap();
        assert!(dawid_skene_em(&m, &EmOptions::default()).is_err());
    }

    proptest! {
        // majority vote is weighted majority with unit weights, ties included
        #[test]
        fn majority_vote_is_unit_weighted_majority(
            entries in proptest::collection::vec(-1i8..=1, 3..10),
            seed in 0u64..500,
        ) {
            let x = obs(&entries);
            let w = vec![1.0; x.len()];
            let mut r1 = ChaCha12Rng::seed_from_u64(seed);
            let mut r2 = ChaCha12Rng::seed_from_u64(seed);
            prop_assert_eq!(
                majority_vote(&x, &mut r1),
                weighted_majority(&x, &w, &mut r2).unwrap()
            );
        }
    }
}
