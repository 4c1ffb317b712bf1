//! Conditional flow-matching proposal model over flattened control knots.
//!
//! The vector field `v(x, cond, t)` is an MLP whose input is the noisy knot
//! vector, the normalized conditioning features and a sinusoidal embedding
//! of the flow time. Sampling integrates the field with uniform Euler steps
//! from a standard normal draw at `t = 0` to knots at `t = 1`.

mod checkpoint;
mod mlp;
mod optim;

pub use checkpoint::CHECKPOINT_VERSION;
pub use mlp::{n_params, Activations, Mlp};
pub use optim::{adam_step, lr_schedule, AdamState, TrainConfig};

use crate::episode::History;
use crate::error::{Error, Result};
use crate::seed;
use crate::spc::{ControlKnots, Interpolation};
use crate::tasks::State;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Width of [`encode_condition`] output.
pub const CONDITION_DIM: usize = 12;

/// Per-dimension affine normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard deviations below this are replaced by 1.
pub const MIN_STD: f64 = 1e-8;

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Two-pass mean and population std over row-major `data` of width `dim`.
    pub fn from_rows(data: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not form rows of width {dim}", data.len())));
        }
        let n = (data.len() / dim) as f64;
        let mut mean = vec![0.0; dim];
        for row in data.chunks(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in data.chunks(dim) {
            for j in 0..dim {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt()).map(|s| if s > MIN_STD { s } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            let d = j % self.dim();
            *v = (*v - self.mean[d]) / self.std[d];
        }
    }

    pub fn denormalize(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            let d = j % self.dim();
            *v = *v * self.std[d] + self.mean[d];
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Shape("normalization mean/std length differ".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("normalization std must be positive and finite".into()));
        }
        Ok(())
    }
}

/// `[robot_pos, block_pos, sin yaw, cos yaw]` for the current state followed
/// by the same layout for the single history state.
pub fn encode_condition(x: &State, history: &[State]) -> Result<Vec<f64>> {
    let [prev] = history else {
        return Err(Error::InvalidInput(format!("history length must be 1, got {}", history.len())));
    };
    let mut f = Vec::with_capacity(CONDITION_DIM);
    for s in [x, prev] {
        f.extend_from_slice(&s.robot_pos);
        f.extend_from_slice(&s.block_pos);
        f.push(s.block_yaw.sin());
        f.push(s.block_yaw.cos());
    }
    Ok(f)
}

/// Sine/cosine pairs at frequencies `2^i * pi`, `i = 0 .. dim/2`.
pub fn time_embedding(t: f64, dim: usize, out: &mut [f64]) {
    for i in 0..dim / 2 {
        let w = (1u64 << i) as f64 * PI * t;
        out[2 * i] = w.sin();
        out[2 * i + 1] = w.cos();
    }
}

/// Hidden-layer widths and time-embedding size of a fresh model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowArchitecture {
    pub hidden: Vec<usize>,
    pub time_embedding_dim: usize,
}

impl Default for FlowArchitecture {
    fn default() -> Self {
        Self { hidden: vec![256, 256, 256], time_embedding_dim: 8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    pub(crate) mlp: Mlp,
    pub input_norm: NormStats,
    pub output_norm: NormStats,
    /// `(K, m)`.
    pub knot_shape: (usize, usize),
    pub time_embedding_dim: usize,
    /// Timing of the generated knots.
    pub interpolation: Interpolation,
    pub horizon_seconds: f64,
}

impl FlowModel {
    pub fn new(
        mlp: Mlp,
        input_norm: NormStats,
        output_norm: NormStats,
        knot_shape: (usize, usize),
        time_embedding_dim: usize,
        interpolation: Interpolation,
        horizon_seconds: f64,
    ) -> Result<Self> {
        input_norm.validate()?;
        output_norm.validate()?;
        let kd = knot_shape.0 * knot_shape.1;
        if !time_embedding_dim.is_multiple_of(2) {
            return Err(Error::Shape(format!("time embedding dim {time_embedding_dim} must be even")));
        }
        if output_norm.dim() != kd || mlp.output_dim() != kd {
            return Err(Error::Shape(format!("output width {} / norm {} != K*m = {kd}", mlp.output_dim(), output_norm.dim())));
        }
        if mlp.input_dim() != kd + input_norm.dim() + time_embedding_dim {
            return Err(Error::Shape(format!(
                "input width {} != {kd} knots + {} cond + {time_embedding_dim} time",
                mlp.input_dim(),
                input_norm.dim()
            )));
        }
        if !(horizon_seconds > 0.0) {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        Ok(Self { mlp, input_norm, output_norm, knot_shape, time_embedding_dim, interpolation, horizon_seconds })
    }

    /// Layer sizes for the given architecture and data widths.
    pub fn layer_sizes(arch: &FlowArchitecture, knot_dim: usize, cond_dim: usize) -> Vec<usize> {
        let mut sizes = vec![knot_dim + cond_dim + arch.time_embedding_dim];
        sizes.extend(&arch.hidden);
        sizes.push(knot_dim);
        sizes
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.mlp.params_mut()
    }

    pub fn layer_sizes_of(&self) -> &[usize] {
        self.mlp.sizes()
    }

    pub fn knot_dim(&self) -> usize {
        self.knot_shape.0 * self.knot_shape.1
    }

    pub fn cond_dim(&self) -> usize {
        self.input_norm.dim()
    }

    /// Normalized conditioning features for `(x, h)`.
    pub fn condition(&self, x: &State, h: &History) -> Result<Vec<f64>> {
        let mut c = encode_condition(x, &[h.prev_replanning_state])?;
        if c.len() != self.cond_dim() {
            return Err(Error::Shape(format!("condition width {} != {}", c.len(), self.cond_dim())));
        }
        self.input_norm.normalize(&mut c);
        Ok(c)
    }

    /// Rows `[x_t | cond | emb(t)]` for a batch.
    fn assemble(&self, xt: &Array2<f64>, cond: &Array2<f64>, t: &[f64]) -> Result<Array2<f64>> {
        let (b, kd, cd, te) = (xt.nrows(), self.knot_dim(), self.cond_dim(), self.time_embedding_dim);
        if xt.ncols() != kd || cond.ncols() != cd || cond.nrows() != b || t.len() != b {
            return Err(Error::Shape(format!(
                "batch shapes x {:?}, cond {:?}, t {} vs K*m {kd}, cond {cd}",
                xt.dim(),
                cond.dim(),
                t.len()
            )));
        }
        let mut input = Array2::zeros((b, kd + cd + te));
        for i in 0..b {
            let mut row = input.row_mut(i);
            let row = row.as_slice_mut().expect("standard layout");
            for j in 0..kd {
                row[j] = xt[[i, j]];
            }
            for j in 0..cd {
                row[kd + j] = cond[[i, j]];
            }
            time_embedding(t[i], te, &mut row[kd + cd..]);
        }
        Ok(input)
    }

    /// Predicted velocity for a batch of normalized knot vectors.
    pub fn velocity_batch(&self, xt: &Array2<f64>, cond: &Array2<f64>, t: &[f64]) -> Result<Array2<f64>> {
        self.mlp.forward_batch(self.assemble(xt, cond, t)?)
    }
}

/// Single evaluation of the vector field.
pub fn mlp_forward(model: &FlowModel, knots_flat: &[f64], cond: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("flow time {t} outside [0, 1]")));
    }
    let xt = Array2::from_shape_vec((1, knots_flat.len()), knots_flat.to_vec()).expect("row");
    let c = Array2::from_shape_vec((1, cond.len()), cond.to_vec()).expect("row");
    Ok(model.velocity_batch(&xt, &c, &[t])?.into_raw_vec_and_offset().0)
}

/// Training batch in normalized coordinates; rows are samples.
#[derive(Clone, Debug)]
pub struct FmBatch {
    pub x0: Array2<f64>,
    pub x1: Array2<f64>,
    pub cond: Array2<f64>,
    pub t: Vec<f64>,
}

/// Mean over the batch of `|v(t x1 + (1-t) x0, t) - (x1 - x0)|^2` and its
/// gradient with respect to the flat parameter vector.
pub fn fm_loss_and_grad(model: &FlowModel, batch: &FmBatch) -> Result<(f64, Vec<f64>)> {
    let b = batch.x0.nrows();
    if b == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if batch.x1.dim() != batch.x0.dim() || batch.t.len() != b {
        return Err(Error::Shape("x0, x1 and t disagree on batch shape".into()));
    }
    let mut xt = batch.x1.clone();
    for (i, mut row) in xt.rows_mut().into_iter().enumerate() {
        let t = batch.t[i];
        for (j, v) in row.iter_mut().enumerate() {
            *v = t * *v + (1.0 - t) * batch.x0[[i, j]];
        }
    }
    let cache = model.mlp.forward_cached(model.assemble(&xt, &batch.cond, &batch.t)?)?;
    let mut resid = cache.output() - &(&batch.x1 - &batch.x0);
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / b as f64;
    resid.mapv_inplace(|r| 2.0 * r / b as f64);
    let grad = model.mlp.backward(&cache, resid);
    Ok((loss, grad))
}

/// Raw (un-normalized) training pairs of conditioning features and knots.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub conds: Vec<f64>,
    pub knots: Vec<f64>,
    pub cond_dim: usize,
    pub knot_shape: (usize, usize),
    pub interpolation: Interpolation,
    pub horizon_seconds: f64,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.knots.len() / (self.knot_shape.0 * self.knot_shape.1).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-epoch mean training loss.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Fits a fresh model of architecture `arch` to `set`.
///
/// Normalization stats come from the data. Each epoch walks a seeded
/// permutation of the records in `ceil(n / batch_size)` batches of exactly
/// `batch_size` rows (wrapping when `n` is not a multiple); every row draws
/// its own noise and flow time.
pub fn train(set: &TrainingSet, arch: &FlowArchitecture, cfg: &TrainConfig) -> Result<(FlowModel, TrainLog)> {
    cfg.validate()?;
    let n = set.len();
    let kd = set.knot_shape.0 * set.knot_shape.1;
    let cd = set.cond_dim;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if set.conds.len() != n * cd || set.knots.len() != n * kd {
        return Err(Error::Shape(format!("{} cond / {} knot values for {n} records", set.conds.len(), set.knots.len())));
    }
    let input_norm = NormStats::from_rows(&set.conds, cd)?;
    let output_norm = NormStats::from_rows(&set.knots, kd)?;
    let sizes = FlowModel::layer_sizes(arch, kd, cd);
    let mlp = Mlp::init(sizes, &mut seed::rng(seed::derive(cfg.seed, 0)))?;
    let mut model = FlowModel::new(
        mlp,
        input_norm,
        output_norm,
        set.knot_shape,
        arch.time_embedding_dim,
        set.interpolation,
        set.horizon_seconds,
    )?;

    let mut conds = set.conds.clone();
    model.input_norm.normalize(&mut conds);
    let mut knots = set.knots.clone();
    model.output_norm.normalize(&mut knots);

    let batch = cfg.batch_size;
    let per_epoch = n.div_ceil(batch);
    let total = per_epoch * cfg.total_epochs;
    let mut shuffle_rng = seed::rng(seed::derive(cfg.seed, 1));
    let mut noise_rng = seed::rng(seed::derive(cfg.seed, 2));
    let mut adam = AdamState::new(model.params().len(), cfg);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    let mut step = 0;
    for epoch in 0..cfg.total_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for k in 0..per_epoch {
            // fixed-size batches, wrapping around the permutation
            let chunk: Vec<usize> = (0..batch).map(|i| order[(k * batch + i) % n]).collect();
            let b = batch;
            let fb = FmBatch {
                x0: Array2::from_shape_fn((b, kd), |_| noise_rng.sample(StandardNormal)),
                x1: Array2::from_shape_fn((b, kd), |(i, j)| knots[chunk[i] * kd + j]),
                cond: Array2::from_shape_fn((b, cd), |(i, j)| conds[chunk[i] * cd + j]),
                t: (0..b).map(|_| noise_rng.gen::<f64>()).collect(),
            };
            let (loss, grad) = fm_loss_and_grad(&model, &fb)?;
            step += 1;
            let lr = lr_schedule(cfg, step, total);
            adam_step(&mut adam, model.params_mut(), &grad, lr);
            epoch_loss += loss * b as f64;
        }
        let mean = epoch_loss / (per_epoch * batch) as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        log.epoch_loss.push(mean);
    }
    log.steps = step;
    Ok((model, log))
}

/// Integrates the field with `n_denoise` Euler steps from `x0` (normalized
/// space) and returns normalized endpoints.
pub fn integrate(model: &FlowModel, x0: Array2<f64>, cond: &[f64], n_denoise: usize) -> Result<Array2<f64>> {
    if n_denoise == 0 {
        return Err(Error::InvalidInput("n_denoise must be >= 1".into()));
    }
    let b = x0.nrows();
    let c = Array2::from_shape_fn((b, cond.len()), |(_, j)| cond[j]);
    let dt = 1.0 / n_denoise as f64;
    let mut x = x0;
    for s in 0..n_denoise {
        let t = vec![s as f64 * dt; b];
        let v = model.velocity_batch(&x, &c, &t)?;
        x.scaled_add(dt, &v);
    }
    Ok(x)
}

/// Draws `n_samples` knot proposals conditioned on `(x, h)`.
pub fn sample(
    model: &FlowModel,
    x: &State,
    h: &History,
    n_denoise: usize,
    n_samples: usize,
    rng_seed: u64,
) -> Result<Vec<ControlKnots>> {
    if n_samples == 0 {
        return Ok(Vec::new());
    }
    let cond = model.condition(x, h)?;
    let kd = model.knot_dim();
    let mut rng = seed::rng(rng_seed);
    let x0 = Array2::from_shape_fn((n_samples, kd), |_| rng.sample(StandardNormal));
    let x1 = integrate(model, x0, &cond, n_denoise)?;
    x1.rows()
        .into_iter()
        .map(|row| {
            let mut v = row.to_vec();
            model.output_norm.denormalize(&mut v);
            ControlKnots::from_flat(model.knot_shape.0, model.knot_shape.1, v, model.interpolation, model.horizon_seconds)
        })
        .collect()
}

