//! Diagonal Gaussian policy heads, both as plain functions and as tape
//! expressions for training.

use rand_distr::{Distribution, StandardNormal};

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Added inside `log(1 - tanh² + ε)` of the squashing correction.
pub const SQUASH_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-density of `action` under `N(mean, diag(exp(log_std)²))`.
///
/// Evaluated in the same operation order as [`log_prob_on_tape`], so both
/// agree bitwise.
pub fn diag_gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    assert!(
        mean.len() == log_std.len() && mean.len() == action.len(),
        "length mismatch"
    );
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let d = a - m;
            let quad = d * d * (ls * -2.0).exp() * -0.5;
            (quad - ls) + -HALF_LN_2PI
        })
        .sum()
}

/// Entropy of a diagonal Gaussian.
pub fn diag_gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
}

pub fn standard_normal(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Squashed sample for a given standard-normal draw `z`.
///
/// Returns `tanh(mean + exp(log_std) · z)` and its log-density, including
/// the change-of-variables correction of the tanh.
pub fn squash_with_noise(mean: &[f64], log_std: &[f64], z: &[f64]) -> (Vec<f64>, f64) {
    let log_std: Vec<f64> = log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    let pre: Vec<f64> = mean
        .iter()
        .zip(&log_std)
        .zip(z)
        .map(|((&m, &ls), &zi)| m + ls.exp() * zi)
        .collect();
    let gauss = diag_gaussian_log_prob(mean, &log_std, &pre);
    let action: Vec<f64> = pre.iter().map(|u| u.tanh()).collect();
    let log_det: f64 = action.iter().map(|a| (-(a * a) + (1.0 + SQUASH_EPS)).ln()).sum();
    (action, gauss - log_det)
}

/// Draws a tanh-squashed Gaussian action and its log-density.
///
/// `log_std` is clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
pub fn squashed_sample_and_log_prob(mean: &[f64], log_std: &[f64], rng: &mut Rng) -> (Vec<f64>, f64) {
    let z = standard_normal(rng, mean.len());
    squash_with_noise(mean, log_std, &z)
}

/// Per-row Gaussian log-density on the tape (`n×1`). `log_std` may be a
/// `1×d` row shared by all rows or a full `n×d` matrix.
pub fn log_prob_on_tape(tape: &mut Tape, mean: Var, log_std: Var, action: Var) -> Var {
    let diff = tape.sub(action, mean);
    let sq = tape.square(diff);
    let neg_two_log_std = tape.scale(log_std, -2.0);
    let inv_var = tape.exp(neg_two_log_std);
    let quad = tape.mul(sq, inv_var);
    let quad = tape.scale(quad, -0.5);
    let per_dim = tape.sub(quad, log_std);
    let per_dim = tape.add_scalar(per_dim, -HALF_LN_2PI);
    tape.sum_cols(per_dim)
}

/// Reparameterized squashed sample on the tape for fixed noise `z` (`n×d`).
/// Returns `(action, log_prob)` with shapes `n×d` and `n×1`.
pub fn squashed_on_tape(tape: &mut Tape, mean: Var, log_std: Var, z: &Matrix) -> (Var, Var) {
    let log_std = tape.clip(log_std, LOG_STD_MIN, LOG_STD_MAX);
    let std = tape.exp(log_std);
    let z = tape.constant(z.clone());
    let noise = tape.mul(std, z);
    let pre = tape.add(mean, noise);
    let gauss = log_prob_on_tape(tape, mean, log_std, pre);
    let action = tape.tanh(pre);
    let sq = tape.square(action);
    let one_minus = tape.scale(sq, -1.0);
    let one_minus = tape.add_scalar(one_minus, 1.0 + SQUASH_EPS);
    let log_det = tape.log(one_minus);
    let log_det = tape.sum_cols(log_det);
    let log_prob = tape.sub(gauss, log_det);
    (action, log_prob)
}
