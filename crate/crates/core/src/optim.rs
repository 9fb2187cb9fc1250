//! RMSProp over a [`ParamStore`].

use serde::{Deserialize, Serialize};

use crate::error::{Result, TnaError};
use crate::layers::ParamStore;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

/// `s ← ρ s + (1-ρ) g²`, `θ ← θ - lr · g / (√s + eps)`.
#[derive(Clone, Debug)]
pub struct RmsProp {
    config: RmsPropConfig,
    square_avg: Vec<Matrix>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, params: &ParamStore) -> Self {
        let square_avg = params
            .values()
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        Self { config, square_avg }
    }

    pub fn config(&self) -> &RmsPropConfig {
        &self.config
    }

    /// Applies one update. `grads[k]` is the gradient of parameter `k`;
    /// a missing entry is an error since every parameter should receive one.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<&Matrix>]) -> Result<()> {
        if grads.len() != params.len() || self.square_avg.len() != params.len() {
            return Err(TnaError::State(format!(
                "optimizer tracks {} parameters, got {} gradients for {}",
                self.square_avg.len(),
                grads.len(),
                params.len()
            )));
        }
        let RmsPropConfig {
            learning_rate,
            decay,
            eps,
        } = self.config;
        for (k, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads[k].ok_or_else(|| {
                TnaError::State(format!("no gradient for parameter {}", params.name(id)))
            })?;
            let theta = params.get_mut(id);
            if g.shape() != theta.shape() {
                return Err(TnaError::shape("rmsprop", theta.shape(), g.shape()));
            }
            let s = &mut self.square_avg[k];
            for ((t, s), &g) in theta
                .as_mut_slice()
                .iter_mut()
                .zip(s.as_mut_slice())
                .zip(g.as_slice())
            {
                *s = decay * *s + (1.0 - decay) * g * g;
                *t -= learning_rate * g / (s.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_over_sqrt_one_minus_rho() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::from_rows(&[&[1.0, -1.0]]));
        let mut opt = RmsProp::new(RmsPropConfig::default(), &store);
        let g = Matrix::from_rows(&[&[2.0, -0.5]]);
        opt.step(&mut store, &[Some(&g)]).unwrap();
        // s = 0.01 g², so g/√s = 10·sign(g)
        let expected = [
            1.0 - 0.001 * 2.0 / (0.2 + 1e-8),
            -1.0 + 0.001 * 0.5 / (0.05 + 1e-8),
        ];
        for (a, b) in store.values()[0].as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::filled(2, 2, 0.3));
        let mut opt = RmsProp::new(RmsPropConfig::default(), &store);
        opt.step(&mut store, &[Some(&Matrix::zeros(2, 2))]).unwrap();
        assert_eq!(store.values()[0], Matrix::filled(2, 2, 0.3));
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::zeros(1, 1));
        let mut opt = RmsProp::new(RmsPropConfig::default(), &store);
        assert!(matches!(
            opt.step(&mut store, &[None]),
            Err(TnaError::State(_))
        ));
        assert!(opt.step(&mut store, &[]).is_err());
    }
}
