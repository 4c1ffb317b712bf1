//! Fully connected ReLU network over a flat parameter vector.
//!
//! Layout: for each layer `l`, the `out x in` weight matrix (row-major)
//! followed by the `out` bias entries.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation outputs of every layer; `acts[0]` is the input.
pub struct Activations {
    pub acts: Vec<Array2<f64>>,
}

impl Activations {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("at least the input")
    }
}

pub fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("layer sizes {sizes:?} need >= 2 nonzero entries")));
        }
        if params.len() != n_params(&sizes) {
            return Err(Error::Shape(format!("{} parameters for layers {sizes:?} (expected {})", params.len(), n_params(&sizes))));
        }
        Ok(Self { sizes, params })
    }

    pub fn zeros(sizes: Vec<usize>) -> Result<Self> {
        let n = n_params(&sizes);
        Self::new(sizes, vec![0.0; n])
    }

    /// He-normal weights, zero biases.
    pub fn init<R: Rng>(sizes: Vec<usize>, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(sizes)?;
        let mut off = 0;
        for w in m.sizes.clone().windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            for p in &mut m.params[off..off + out * fan_in] {
                *p = scale * rng.sample::<f64, _>(StandardNormal);
            }
            off += out * fan_in + out;
        }
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut offs = vec![0];
        for w in self.sizes.windows(2) {
            offs.push(offs.last().unwrap() + w[1] * w[0] + w[1]);
        }
        offs
    }

    fn layer(&self, off: usize, fan_in: usize, out: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let w = ArrayView2::from_shape((out, fan_in), &self.params[off..off + out * fan_in]).expect("layer shape");
        let b = ArrayView1::from(&self.params[off + out * fan_in..off + out * fan_in + out]);
        (w, b)
    }

    /// Batched forward pass keeping every activation for backprop.
    pub fn forward_cached(&self, x: Array2<f64>) -> Result<Activations> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("input width {} != {}", x.ncols(), self.input_dim())));
        }
        let offs = self.offsets();
        let n_layers = self.sizes.len() - 1;
        let mut acts = vec![x];
        for l in 0..n_layers {
            let (w, b) = self.layer(offs[l], self.sizes[l], self.sizes[l + 1]);
            let mut z = acts[l].dot(&w.t());
            z += &b;
            if l + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Ok(Activations { acts })
    }

    pub fn forward_batch(&self, x: Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.acts.pop().unwrap())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Parameter gradient given dL/d(output) for the cached batch.
    pub fn backward(&self, cache: &Activations, d_out: Array2<f64>) -> Vec<f64> {
        let offs = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out;
        for l in (0..self.sizes.len() - 1).rev() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let gw = delta.t().dot(&cache.acts[l]);
            let gb = delta.sum_axis(Axis(0));
            let off = offs[l];
            for (g, v) in grad[off..off + out * fan_in].iter_mut().zip(gw.iter()) {
                *g = *v;
            }
            for (g, v) in grad[off + out * fan_in..off + out * fan_in + out].iter_mut().zip(gb.iter()) {
                *g = *v;
            }
            if l > 0 {
                let (w, _) = self.layer(off, fan_in, out);
                let mut next = delta.dot(&w);
                next.zip_mut_with(&cache.acts[l], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
        }
        grad
    }
}
