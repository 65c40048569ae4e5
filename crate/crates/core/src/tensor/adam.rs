use crate::error::{Error, Result};

use super::{ParamSet, Real};

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Default for AdamState<T> {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl<T: Real> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn first_moment(&self, index: usize) -> Option<&[T]> {
        self.m.get(index).map(Vec::as_slice)
    }

    pub fn second_moment(&self, index: usize) -> Option<&[T]> {
        self.v.get(index).map(Vec::as_slice)
    }

    /// Applies one update. `grads[i]` is the gradient of parameter `i` or
    /// `None` when it has none. A parameter whose gradient is identically
    /// zero is left untouched, moments included.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<Vec<T>>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape(format!(
                "adam: {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            let p = params.entry(i);
            if let Some(g) = g {
                if g.len() != p.tensor.len() {
                    return Err(Error::shape(format!(
                        "adam: gradient of `{}` has {} elements, parameter has dims {:?}",
                        p.name,
                        g.len(),
                        p.tensor.dims()
                    )));
                }
                if let Some(bad) = g.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "gradient of `{}` is {} at element {bad}",
                        p.name, g[bad]
                    )));
                }
            }
        }
        if self.m.len() != params.len() {
            self.m = params.iter().map(|p| vec![T::zero(); p.tensor.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step_size = T::lit(self.lr / c1);
        let c2_sqrt = T::lit(c2.sqrt());
        let eps = T::lit(self.eps);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            if !params.entry(i).trainable || g.iter().all(|x| x.is_zero()) {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = params.entry_mut(i).tensor.data_mut();
            for j in 0..data.len() {
                m[j] = b1 * m[j] + (T::one() - b1) * g[j];
                v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
                // lr * m_hat / (sqrt(v_hat) + eps)
                data[j] -= step_size * m[j] / (v[j].sqrt() / c2_sqrt + eps);
            }
        }
        Ok(())
    }
}
