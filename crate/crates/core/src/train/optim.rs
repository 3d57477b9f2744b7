use crate::error::{Error, Result};
use crate::params::ParamStore;

/// SGD with momentum and coupled weight decay:
///
/// ```text
/// v <- momentum * v + grad + weight_decay * param
/// param <- param - lr * v
/// ```
///
/// With `clip_norm > 0`, `grad` is first rescaled so that its global L2
/// norm over all parameters is at most `clip_norm`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            lr,
            momentum,
            weight_decay,
            clip_norm: 0.0,
            velocity: Vec::new(),
        }
    }

    pub fn with_clip_norm(mut self, clip_norm: f64) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Applies one update. `grads[i]` belongs to the `i`-th tensor of `store`;
    /// `None` is treated as a zero gradient. Nothing is modified if any
    /// gradient is non-finite. Returns the global gradient norm before clipping.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<&[f64]>]) -> Result<f64> {
        if grads.len() != store.len() {
            return Err(Error::InvalidArgument(format!(
                "sgd: {} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                let key = store.keys().nth(i).expect("index in range");
                if g.len() != store.get(key).numel() {
                    return Err(Error::shape("sgd", format!("gradient of `{}` has wrong length", store.name(key))));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient(store.name(key).to_string()));
                }
            }
        }
        let norm = grads
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let scale = if self.clip_norm > 0.0 && norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        if self.velocity.is_empty() {
            self.velocity = store.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        }
        for ((t, v), g) in store.tensors_mut().iter_mut().zip(&mut self.velocity).zip(grads) {
            let p = t.data_mut();
            for j in 0..p.len() {
                let gj = g.map_or(0.0, |g| g[j]) * scale;
                v[j] = self.momentum * v[j] + gj + self.weight_decay * p[j];
                p[j] -= self.lr * v[j];
            }
        }
        Ok(norm)
    }
}
