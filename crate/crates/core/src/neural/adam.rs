use serde::{Deserialize, Serialize};

use super::mlp::Grad;
use crate::error::{Error, Result};

/// Moment estimates of the Adam optimizer for one flat parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(len: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grad: &Grad, state: &mut AdamState, learning_rate: f64) -> Result<()> {
    if grad.flat.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::usage(format!(
            "adam: {} parameters, {} gradients, {} moments",
            params.len(),
            grad.flat.len(),
            state.first_moment.len()
        )));
    }
    if !(learning_rate > 0.0) {
        return Err(Error::usage(format!(
            "adam: learning rate {learning_rate} must be positive"
        )));
    }
    if let Some(i) = grad.flat.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("adam: gradient entry {i} is {}", grad.flat[i])));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(&grad.flat)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        s.first_moment = vec![0.5, 0.5];
        s.second_moment = vec![0.25, 0.25];
        // with nonzero moments the parameters do move; with fresh state they don't
        let mut fresh = AdamState::new(2);
        adam_step(&mut p, &Grad::zeros(2), &mut fresh, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(fresh.step_count, 1);

        adam_step(&mut p, &Grad::zeros(2), &mut s, 0.1).unwrap();
        assert_eq!(s.first_moment, vec![0.45, 0.45]);
        assert!((s.second_moment[0] - 0.24975).abs() < 1e-15);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001; bias-corrected both become 1: step = lr / (1 + eps)
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &Grad { flat: vec![1.0] }, &mut s, 0.1).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{}", p[0]);
    }

    #[test]
    fn non_finite_gradient_names_index() {
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3);
        let err = adam_step(
            &mut p,
            &Grad {
                flat: vec![0.0, 0.0, f64::NAN],
            },
            &mut s,
            0.1,
        )
        .unwrap_err();
        assert!(matches!(&err, Error::Numeric(m) if m.contains("entry 2")), "{err}");
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn identical_calls_are_deterministic() {
        let g = Grad {
            flat: vec![0.3, -0.7, 1e-3],
        };
        let run = || {
            let mut p = vec![1.0, 2.0, 3.0];
            let mut s = AdamState::new(3);
            for _ in 0..5 {
                adam_step(&mut p, &g, &mut s, 1e-3).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    proptest! {
        // Adam is elementwise: permuting parameters commutes with the update.
        #[test]
        fn permutation_invariance(
            values in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..20),
            rotate in 0usize..20,
        ) {
            let n = values.len();
            let params: Vec<f64> = values.iter().map(|v| v.0).collect();
            let grads: Vec<f64> = values.iter().map(|v| v.1).collect();
            let perm: Vec<usize> = (0..n).map(|i| (i + rotate) % n).collect();

            let mut direct = params.clone();
            let mut s1 = AdamState::new(n);
            adam_step(&mut direct, &Grad { flat: grads.clone() }, &mut s1, 0.01).unwrap();

            let mut permuted: Vec<f64> = perm.iter().map(|&i| params[i]).collect();
            let pg: Vec<f64> = perm.iter().map(|&i| grads[i]).collect();
            let mut s2 = AdamState::new(n);
            adam_step(&mut permuted, &Grad { flat: pg }, &mut s2, 0.01).unwrap();

            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(permuted[k].to_bits(), direct[i].to_bits());
            }
        }
    }
}
