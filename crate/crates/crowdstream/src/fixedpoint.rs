//! Deterministic algebra behind the agreement-rate inversion: discriminants,
//! existence conditions, the scalar fixed-point solve and the map back to
//! error probabilities.
//!
//! For an agreement-rate vector `u` of length `n`, the scalar unknown is
//! `v = (1 - 2q)^2` where `q` is the mean error probability. The per-labeller
//! discriminants are
//!
//! ```text
//! delta_i(u, v) = v + 4 (n-1)/n^2 (1 - 2 u_i)
//! ```
//!
//! and `v` solves `v = f(u, v)` with
//! `f(u, v) = ((1/(n-2)) sum_i sqrt(delta_i(u, v)))^2`. Because `f(u, .) - id`
//! is strictly increasing on `[v0(u), inf)`, the root is unique whenever it
//! exists and bisection finds it. `g(u, v)` then recovers the individual
//! error probabilities.

use crate::error::{Error, Result};

/// Floating-point slack: discriminants in `(-NEG_DELTA_EPS, 0)` that arise
/// from cancellation at `v ~ v0(u)` are truncated to zero before the square
/// root.
const NEG_DELTA_EPS: f64 = 1e-12;

/// The bracket expansion gives up past this point; inputs requiring it are
/// malformed (the root of a valid instance is at most 1).
const MAX_BRACKET: f64 = 1e6;

const MAX_BISECT_ITERS: usize = 200;

/// Solved fixed point: the root `v`, the recovered probability vector
/// `g(u, v)` and the bisection iteration count.
#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub v: f64,
    pub unique: bool,
    pub p_of_u: Vec<f64>,
    pub iterations: usize,
}

/// Discriminants `delta_i(u, v)`. Entries may be negative; callers gate on
/// `v >= v0(u)`.
pub fn discriminants(u: &[f64], v: f64) -> Vec<f64> {
    let n = u.len() as f64;
    let c = 4.0 * (n - 1.0) / (n * n);
    u.iter().map(|&ui| v + c * (1.0 - 2.0 * ui)).collect()
}

/// Smallest `v` for which every discriminant is non-negative.
pub fn v0(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let c = 4.0 * (n - 1.0) / (n * n);
    let max_term = u
        .iter()
        .map(|&ui| 2.0 * ui - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    (c * max_term).max(0.0)
}

/// Linear statistic `(2/n) sum_i (2 u_i - 1)`; `v1(u) >= v0(u)` is a
/// sufficient condition for a unique fixed point.
pub fn v1(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    2.0 / n * u.iter().map(|&ui| 2.0 * ui - 1.0).sum::<f64>()
}

fn check_domain(u: &[f64], v: f64) -> Result<f64> {
    assert!(u.len() > 2, "need more than 2 labellers");
    let lower = v0(u);
    if v < lower {
        return Err(Error::BelowAdmissibleRange { v, v0: lower });
    }
    Ok(lower)
}

fn sqrt_delta_sum(u: &[f64], v: f64) -> f64 {
    let n = u.len() as f64;
    let c = 4.0 * (n - 1.0) / (n * n);
    u.iter()
        .map(|&ui| {
            let d = v + c * (1.0 - 2.0 * ui);
            debug_assert!(d > -NEG_DELTA_EPS, "negative discriminant {d} at v={v}");
            d.max(0.0).sqrt()
        })
        .sum()
}

/// Evaluates `f(u, v)`. Rejects `v < v0(u)`.
pub fn f_eval(u: &[f64], v: f64) -> Result<f64> {
    check_domain(u, v)?;
    let s = sqrt_delta_sum(u, v) / (u.len() as f64 - 2.0);
    Ok(s * s)
}

/// Evaluates `g_i(u, v) = 1/2 + (n/4) (sqrt(delta_i) - sqrt(v))`.
/// Rejects `v < v0(u)`.
pub fn g_eval(u: &[f64], v: f64) -> Result<Vec<f64>> {
    check_domain(u, v)?;
    let n = u.len() as f64;
    let c = 4.0 * (n - 1.0) / (n * n);
    let sqrt_v = v.max(0.0).sqrt();
    Ok(u.iter()
        .map(|&ui| {
            let d = (v + c * (1.0 - 2.0 * ui)).max(0.0);
            0.5 + n / 4.0 * (d.sqrt() - sqrt_v)
        })
        .collect())
}

/// Existence test for the fixed point: true iff `f(u, v0(u)) <= v0(u)`.
/// Equality counts as existing, with root exactly `v0(u)`.
pub fn has_unique_fixed_point(u: &[f64]) -> bool {
    let lower = v0(u);
    let f = f_eval(u, lower).expect("v0(u) is admissible by construction");
    f <= lower
}

/// Bisection on `h(v) = f(u, v) - v` over `[v0(u), v_hi]`, where `v_hi`
/// starts at `max(v0(u) + 1, 1)` and doubles until `h(v_hi) >= 0`. The slope
/// of `h` is at least `n^2/(n-2)^2 - 1 > 0`, so the expansion terminates.
/// Stops once the bracket width and residual `|h(v)|` are both within `tol`.
pub fn solve_fixed_point(u: &[f64], tol: f64) -> Result<FixedPointSolution> {
    assert!(tol > 0.0, "tolerance must be positive");
    let lower = v0(u);
    let h0 = f_eval(u, lower)? - lower;
    if h0 > 0.0 {
        return Err(Error::NoUniqueFixedPoint);
    }
    if h0 == 0.0 {
        return Ok(FixedPointSolution {
            v: lower,
            unique: true,
            p_of_u: g_eval(u, lower)?,
            iterations: 0,
        });
    }

    let mut hi = (lower + 1.0).max(1.0);
    while f_eval(u, hi)? - hi < 0.0 {
        hi *= 2.0;
        if hi > MAX_BRACKET {
            return Err(Error::SolverDiverged(MAX_BRACKET));
        }
    }

    let mut lo = lower;
    let mut iterations = 0usize;
    let mut v = 0.5 * (lo + hi);
    let mut hv = f_eval(u, v)? - v;
    while (hi - lo > tol || hv.abs() > tol) && iterations < MAX_BISECT_ITERS {
        if hv >= 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        v = 0.5 * (lo + hi);
        hv = f_eval(u, v)? - v;
        iterations += 1;
    }

    Ok(FixedPointSolution {
        v,
        unique: true,
        p_of_u: g_eval(u, v)?,
        iterations,
    })
}

/// Full inversion `phi(u) = g(u, v(u))`.
pub fn phi(u: &[f64], tol: f64) -> Result<Vec<f64>> {
    Ok(solve_fixed_point(u, tol)?.p_of_u)
}
