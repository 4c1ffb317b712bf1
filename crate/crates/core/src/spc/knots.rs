//! Compact control parameterization: K knot vectors at uniform times over
//! the horizon, expanded by a natural cubic spline or piecewise-linear
//! interpolation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    CubicSpline,
    Linear,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubic_spline" | "cubic" => Ok(Interpolation::CubicSpline),
            "linear" => Ok(Interpolation::Linear),
            other => Err(Error::InvalidConfig(format!("unknown interpolation `{other}`"))),
        }
    }
}

/// K x m knot matrix, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlKnots {
    n_knots: usize,
    dim: usize,
    values: Vec<f64>,
    interpolation: Interpolation,
    horizon_seconds: f64,
}

impl ControlKnots {
    pub fn from_flat(
        n_knots: usize,
        dim: usize,
        values: Vec<f64>,
        interpolation: Interpolation,
        horizon_seconds: f64,
    ) -> Result<Self> {
        if n_knots < 2 || dim == 0 {
            return Err(Error::InvalidInput(format!("need K >= 2 and m >= 1, got {n_knots}x{dim}")));
        }
        if values.len() != n_knots * dim {
            return Err(Error::Shape(format!("{} values for {n_knots}x{dim} knots", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite knot value".into()));
        }
        if !(horizon_seconds > 0.0 && horizon_seconds.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon {horizon_seconds} must be positive")));
        }
        Ok(Self { n_knots, dim, values, interpolation, horizon_seconds })
    }

    pub fn from_rows(rows: &[Vec<f64>], interpolation: Interpolation, horizon_seconds: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged knot rows".into()));
        }
        Self::from_flat(rows.len(), dim, rows.concat(), interpolation, horizon_seconds)
    }

    /// All knots equal to `value`.
    pub fn constant(n_knots: usize, value: &[f64], interpolation: Interpolation, horizon_seconds: f64) -> Result<Self> {
        Self::from_flat(n_knots, value.len(), value.repeat(n_knots), interpolation, horizon_seconds)
    }

    pub fn n_knots(&self) -> usize {
        self.n_knots
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn horizon_seconds(&self) -> f64 {
        self.horizon_seconds
    }

    pub fn knot(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Time between consecutive knots.
    pub fn knot_spacing(&self) -> f64 {
        self.horizon_seconds / (self.n_knots - 1) as f64
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Same shape and interpolation, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { values, ..self.clone() }
    }

    /// Number of full-resolution controls, `round(horizon / dt)`.
    pub fn resolution(&self, dt: f64) -> usize {
        (self.horizon_seconds / dt).round() as usize
    }

    /// Spline time between consecutive full-resolution controls: the H
    /// controls sit at uniform times from 0 to the horizon inclusive.
    pub fn sample_spacing(&self, dt: f64) -> f64 {
        self.horizon_seconds / (self.resolution(dt).max(2) - 1) as f64
    }

    pub fn interpolant(&self) -> Interpolant<'_> {
        Interpolant::new(self)
    }

    /// Full-resolution control sequence.
    pub fn interpolate(&self, dt: f64) -> Result<Vec<Vec<f64>>> {
        let h = self.check_resolution(dt)?;
        let f = self.interpolant();
        let step = self.sample_spacing(dt);
        Ok((0..h)
            .map(|j| {
                let mut out = vec![0.0; self.dim];
                f.eval(j as f64 * step, &mut out);
                out
            })
            .collect())
    }

    /// Full-resolution planar controls; requires m = 2.
    pub fn interpolate_planar(&self, dt: f64) -> Result<Vec<[f64; 2]>> {
        if self.dim != 2 {
            return Err(Error::Shape(format!("planar controls need m = 2, got {}", self.dim)));
        }
        let h = self.check_resolution(dt)?;
        let f = self.interpolant();
        let step = self.sample_spacing(dt);
        Ok((0..h)
            .map(|j| {
                let mut out = [0.0; 2];
                f.eval(j as f64 * step, &mut out);
                out
            })
            .collect())
    }

    fn check_resolution(&self, dt: f64) -> Result<usize> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt {dt} must be positive")));
        }
        let h = self.resolution(dt);
        if h < self.n_knots || h < 2 {
            return Err(Error::InvalidConfig(format!(
                "horizon resolution H = {h} is below the knot count K = {}",
                self.n_knots
            )));
        }
        Ok(h)
    }

    /// Control at spline time `t_offset`.
    pub fn get_action(&self, t_offset: f64) -> Result<Vec<f64>> {
        const SLACK: f64 = 1e-9;
        if !(t_offset >= -SLACK && t_offset <= self.horizon_seconds + SLACK) {
            return Err(Error::InvalidInput(format!(
                "offset {t_offset} outside [0, {}]",
                self.horizon_seconds
            )));
        }
        let mut out = vec![0.0; self.dim];
        self.interpolant().eval(t_offset, &mut out);
        Ok(out)
    }

    /// Advances the plan by `elapsed` seconds: the interpolant is evaluated
    /// at the new knot times (holding the last value past the horizon) and
    /// refit.
    pub fn shift(&self, elapsed: f64) -> Self {
        let f = self.interpolant();
        let h = self.knot_spacing();
        let mut values = vec![0.0; self.values.len()];
        for (k, row) in values.chunks_mut(self.dim).enumerate() {
            f.eval(k as f64 * h + elapsed, row);
        }
        self.with_values(values)
    }
}

impl ControlKnots {
    /// Same curve re-expressed over `horizon_seconds`: the interpolant is
    /// evaluated at the new knot times (holding the last value past the old
    /// horizon). Identity when the horizon is unchanged.
    pub fn retimed(&self, horizon_seconds: f64) -> Result<Self> {
        if horizon_seconds == self.horizon_seconds {
            return Ok(self.clone());
        }
        let f = self.interpolant();
        let h = horizon_seconds / (self.n_knots - 1) as f64;
        let mut values = vec![0.0; self.values.len()];
        for (k, row) in values.chunks_mut(self.dim).enumerate() {
            f.eval(k as f64 * h, row);
        }
        Self::from_flat(self.n_knots, self.dim, values, self.interpolation, horizon_seconds)
    }
}

/// Evaluator with precomputed spline second derivatives.
pub struct Interpolant<'a> {
    knots: &'a ControlKnots,
    second: Vec<f64>,
}

impl<'a> Interpolant<'a> {
    fn new(knots: &'a ControlKnots) -> Self {
        let second = match knots.interpolation {
            Interpolation::Linear => Vec::new(),
            Interpolation::CubicSpline => natural_second_derivatives(knots),
        };
        Self { knots, second }
    }

    /// Evaluates at time `t`, clamped to [0, horizon].
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let k = self.knots;
        let h = k.knot_spacing();
        let t = t.clamp(0.0, k.horizon_seconds);
        let i = ((t / h).floor() as usize).min(k.n_knots - 2);
        let b = (t - i as f64 * h) / h;
        let a = 1.0 - b;
        let (y0, y1) = (k.knot(i), k.knot(i + 1));
        match k.interpolation {
            Interpolation::Linear => {
                for j in 0..k.dim {
                    out[j] = a * y0[j] + b * y1[j];
                }
            }
            Interpolation::CubicSpline => {
                let m0 = &self.second[i * k.dim..(i + 1) * k.dim];
                let m1 = &self.second[(i + 1) * k.dim..(i + 2) * k.dim];
                let c = h * h / 6.0;
                for j in 0..k.dim {
                    out[j] = a * y0[j] + b * y1[j] + ((a * a * a - a) * m0[j] + (b * b * b - b) * m1[j]) * c;
                }
            }
        }
    }
}

/// Second derivatives of the natural cubic spline through uniform knots,
/// by the Thomas algorithm on `M[i-1] + 4 M[i] + M[i+1] = 6/h^2 (y[i+1] - 2 y[i] + y[i-1])`.
fn natural_second_derivatives(k: &ControlKnots) -> Vec<f64> {
    let (n, m) = (k.n_knots, k.dim);
    let mut second = vec![0.0; n * m];
    if n < 3 {
        return second;
    }
    let h = k.knot_spacing();
    let inner = n - 2;
    let mut c_prime = vec![0.0; inner];
    let mut d_prime = vec![0.0; inner];
    for j in 0..m {
        for r in 0..inner {
            let i = r + 1;
            let rhs = 6.0 / (h * h) * (k.values[(i + 1) * m + j] - 2.0 * k.values[i * m + j] + k.values[(i - 1) * m + j]);
            if r == 0 {
                c_prime[r] = 1.0 / 4.0;
                d_prime[r] = rhs / 4.0;
            } else {
                let denom = 4.0 - c_prime[r - 1];
                c_prime[r] = 1.0 / denom;
                d_prime[r] = (rhs - d_prime[r - 1]) / denom;
            }
        }
        let mut next = 0.0;
        for r in (0..inner).rev() {
            let v = d_prime[r] - c_prime[r] * next;
            second[(r + 1) * m + j] = v;
            next = v;
        }
    }
    second
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn scalar(values: &[f64], interp: Interpolation, horizon: f64) -> ControlKnots {
        ControlKnots::from_flat(values.len(), 1, values.to_vec(), interp, horizon).unwrap()
    }

    #[test]
    fn linear_interpolation_four_samples() {
        let k = scalar(&[0.0, 1.0], Interpolation::Linear, 0.04);
        let u = k.interpolate(0.01).unwrap();
        let flat: Vec<f64> = u.into_iter().flatten().collect();
        assert_eq!(flat.len(), 4);
        for (got, want) in flat.iter().zip([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn too_coarse_resolution_is_an_error() {
        let k = scalar(&[0.0, 1.0, 2.0, 3.0], Interpolation::CubicSpline, 0.02);
        assert!(matches!(k.interpolate(0.01), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ControlKnots::from_flat(1, 1, vec![0.0], Interpolation::Linear, 1.0).is_err());
        assert!(ControlKnots::from_flat(2, 2, vec![0.0; 3], Interpolation::Linear, 1.0).is_err());
        assert!(ControlKnots::from_flat(2, 1, vec![0.0, f64::NAN], Interpolation::Linear, 1.0).is_err());
    }

    /// Dense reference: assemble the full natural-spline system and solve by LU.
    fn dense_natural_spline(y: &[f64], h: f64, t: f64) -> f64 {
        let n = y.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        a[(0, 0)] = 1.0;
        a[(n - 1, n - 1)] = 1.0;
        for i in 1..n - 1 {
            a[(i, i - 1)] = h / 6.0;
            a[(i, i)] = 2.0 * h / 3.0;
            a[(i, i + 1)] = h / 6.0;
            rhs[i] = (y[i + 1] - y[i]) / h - (y[i] - y[i - 1]) / h;
        }
        let m = a.lu().solve(&rhs).unwrap();
        let i = ((t / h).floor() as usize).min(n - 2);
        let (x0, x1) = (i as f64 * h, (i + 1) as f64 * h);
        m[i] * (x1 - t).powi(3) / (6.0 * h)
            + m[i + 1] * (t - x0).powi(3) / (6.0 * h)
            + (y[i] / h - m[i] * h / 6.0) * (x1 - t)
            + (y[i + 1] / h - m[i + 1] * h / 6.0) * (t - x0)
    }

    #[test]
    fn cubic_midpoints_match_dense_solve() {
        let y = [0.0, 1.0, 0.0, -1.0];
        let k = scalar(&y, Interpolation::CubicSpline, 3.0);
        // frozen from the dense reference: M = [0, -3.2, 0.8, 0]
        let frozen = [0.7, 0.65, -0.55];
        for (i, want) in frozen.iter().enumerate() {
            let t = i as f64 + 0.5;
            let got = k.get_action(t).unwrap()[0];
            assert_relative_eq!(got, dense_natural_spline(&y, 1.0, t), epsilon = 1e-12);
            assert_relative_eq!(got, *want, epsilon = 1e-12);
        }
    }

    #[test]
    fn get_action_endpoints_and_range() {
        let k = scalar(&[0.0, 2.0], Interpolation::Linear, 3.0);
        assert_eq!(k.get_action(0.0).unwrap(), vec![0.0]);
        assert_eq!(k.get_action(3.0).unwrap(), vec![2.0]);
        assert_relative_eq!(k.get_action(1.5).unwrap()[0], 1.0);
        assert!(k.get_action(-0.1).is_err());
        assert!(k.get_action(3.1).is_err());
    }

    #[test]
    fn shift_identity_and_linear_roll() {
        let k = scalar(&[0.0, 1.0, 2.0, 3.0], Interpolation::Linear, 3.0);
        assert_eq!(k.shift(0.0), k);
        let s = k.shift(k.knot_spacing());
        for (got, want) in s.values().iter().zip([1.0, 2.0, 3.0, 3.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn cubic_shift_matches_offset_evaluation() {
        let k = ControlKnots::from_rows(
            &[vec![10.0, -3.0], vec![40.0, 5.0], vec![-20.0, 8.0], vec![7.0, 1.0]],
            Interpolation::CubicSpline,
            3.0,
        )
        .unwrap();
        let elapsed = 0.37;
        let s = k.shift(elapsed);
        for i in 0..4 {
            let t = i as f64 * s.knot_spacing();
            let want = k.get_action((t + elapsed).min(3.0)).unwrap();
            let got = s.get_action(t).unwrap();
            for j in 0..2 {
                assert!((got[j] - want[j]).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn interpolant_passes_through_knots(values in proptest::collection::vec(-100.0..100.0f64, 4..9), cubic in any::<bool>()) {
            let interp = if cubic { Interpolation::CubicSpline } else { Interpolation::Linear };
            let k = scalar(&values, interp, 3.0);
            for (i, v) in values.iter().enumerate() {
                let got = k.get_action(i as f64 * k.knot_spacing()).unwrap()[0];
                prop_assert!((got - v).abs() < 1e-9);
            }
        }
    }
}
