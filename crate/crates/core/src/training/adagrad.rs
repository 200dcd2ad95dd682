use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::params::ParamSet;
use crate::tensor::Tensor;

const EPS: f64 = 1e-10;

/// Per-parameter running sums of squared gradients, created lazily at
/// `initial` the first time a parameter is updated.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulators {
    initial: f64,
    sums: BTreeMap<String, Tensor>,
}

impl Accumulators {
    pub fn new(initial: f64) -> Self {
        Self {
            initial,
            sums: BTreeMap::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.sums.get(name)
    }
}

/// `acc += g^2; p -= lr * g / sqrt(acc + eps)`.
///
/// All gradients are checked before anything is modified, so a non-finite
/// gradient leaves both the parameters and the accumulators untouched.
pub fn adagrad_update(
    params: &mut ParamSet,
    grads: &Gradients,
    accumulators: &mut Accumulators,
    lr: f64,
) -> Result<()> {
    for (name, g) in grads.iter() {
        let shape = params.shape_of(name)?;
        if shape != g.shape() {
            return Err(Error::Dimension {
                op: "adagrad_update",
                lhs: shape.to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for {name}")));
        }
    }
    for (name, g) in grads.iter() {
        if g.data().iter().all(|&v| v == 0.0) && !accumulators.sums.contains_key(name) {
            // Nothing to add and nothing to move; avoid materializing state.
            continue;
        }
        let acc = accumulators
            .sums
            .entry(name.clone())
            .or_insert_with(|| Tensor::filled(g.shape(), accumulators.initial));
        let p = params.get_mut(name)?;
        for ((p, a), &g) in p.data_mut().iter_mut().zip(acc.data_mut()).zip(g.data()) {
            *a += g * g;
            if g != 0.0 {
                *p -= lr * g / (*a + EPS).sqrt();
            }
        }
    }
    Ok(())
}

/// Adagrad with its learning rate and accumulator state.
#[derive(Clone, Debug, PartialEq)]
pub struct Adagrad {
    pub learning_rate: f64,
    accumulators: Accumulators,
}

impl Adagrad {
    pub fn new(learning_rate: f64, initial_accumulator: f64) -> Self {
        Self {
            learning_rate,
            accumulators: Accumulators::new(initial_accumulator),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        adagrad_update(params, grads, &mut self.accumulators, self.learning_rate)
    }

    pub fn accumulators(&self) -> &Accumulators {
        &self.accumulators
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(p: f64, g: f64) -> (ParamSet, Gradients) {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(vec![p]));
        let mut grads = Gradients::default();
        grads.insert("w".into(), Tensor::vector(vec![g]));
        (params, grads)
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let (mut params, grads) = setup(1.0, 3.0);
        let mut acc = Accumulators::new(0.1);
        adagrad_update(&mut params, &grads, &mut acc, 0.1).unwrap();
        let delta = params.get("w").unwrap().data()[0] - 1.0;
        assert!((delta - (-0.1 * 3.0 / (9.1f64 + 1e-10).sqrt())).abs() < 1e-15);
        assert!((delta + 0.09945).abs() < 1e-5);
        assert!((acc.get("w").unwrap().data()[0] - 9.1).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_params_alone() {
        let (mut params, grads) = setup(0.123, 0.0);
        let before = params.clone();
        let mut opt = Adagrad::new(0.5, 0.1);
        opt.step(&mut params, &grads).unwrap();
        assert!(params.bit_identical(&before));
    }

    #[test]
    fn repeated_gradients_shrink_the_step() {
        let (mut params, grads) = setup(0.0, 0.7);
        let mut opt = Adagrad::new(0.1, 0.1);
        opt.step(&mut params, &grads).unwrap();
        let first = params.get("w").unwrap().data()[0];
        opt.step(&mut params, &grads).unwrap();
        let second = params.get("w").unwrap().data()[0] - first;
        assert!(second.abs() < first.abs());
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let (mut params, grads) = setup(1.0, f64::NAN);
        let before = params.clone();
        let err = Adagrad::new(0.1, 0.1).step(&mut params, &grads).unwrap_err();
        assert!(err.to_string().contains('w'), "{err}");
        assert!(params.bit_identical(&before));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (mut params, _) = setup(1.0, 1.0);
        let mut grads = Gradients::default();
        grads.insert("w".into(), Tensor::vector(vec![1.0, 2.0]));
        assert!(Adagrad::new(0.1, 0.1).step(&mut params, &grads).is_err());
    }
}
