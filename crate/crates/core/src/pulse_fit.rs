//! Least-squares fits of the pulsed-measurement models.
//!
//! | model | function                                  |
//! |-------|-------------------------------------------|
//! | rabi  | `a1·exp(−τ/a2)·cos(2π·a3·τ + a4) + a5`     |
//! | t1    | `a1·exp(−τ/a2) + a3`                       |
//! | t2    | `a1·exp(−(τ/a2)^a3)`                       |
//!
//! The optimizer is Levenberg–Marquardt with Marquardt's diagonal scaling and
//! analytic Jacobians. Decay times, the Rabi frequency and the stretching
//! exponent are fitted in log space so they stay positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    Rabi,
    T1,
    T2,
}

impl std::str::FromStr for FitModel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rabi" => Ok(Self::Rabi),
            "t1" => Ok(Self::T1),
            "t2" => Ok(Self::T2),
            other => Err(format!("unknown fit model `{other}` (expected rabi|t1|t2)")),
        }
    }
}

impl std::fmt::Display for FitModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rabi => "rabi",
            Self::T1 => "t1",
            Self::T2 => "t2",
        })
    }
}

impl FitModel {
    pub fn arity(self) -> usize {
        match self {
            Self::Rabi => 5,
            Self::T1 | Self::T2 => 3,
        }
    }

    /// Which parameters are fitted through `a = exp(b)`.
    fn log_mask(self) -> &'static [bool] {
        match self {
            Self::Rabi => &[false, true, true, false, false],
            Self::T1 => &[false, true, false],
            Self::T2 => &[false, true, true],
        }
    }

    pub fn check_params<T: Real>(self, a: &[T]) -> Result<()> {
        if a.len() != self.arity() {
            return Err(Error::domain("wrong number of parameters", a.len() as f64));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("parameters must be finite", f64::NAN));
        }
        for (v, &is_log) in a.iter().zip(self.log_mask()) {
            if is_log && !(*v > T::zero()) {
                return Err(Error::domain("decay time, frequency and exponent must be positive", v.to_f64_lossy()));
            }
        }
        Ok(())
    }

    pub fn eval<T: Real>(self, tau: T, a: &[T]) -> T {
        match self {
            Self::Rabi => {
                let phase = T::TAU() * a[2] * tau + a[3];
                a[0] * (-tau / a[1]).exp() * phase.cos() + a[4]
            }
            Self::T1 => a[0] * (-tau / a[1]).exp() + a[2],
            Self::T2 => a[0] * (-(tau / a[1]).powf(a[2])).exp(),
        }
    }

    /// Partial derivatives of the model with respect to `a`.
    pub fn gradient<T: Real>(self, tau: T, a: &[T]) -> Vec<T> {
        match self {
            Self::Rabi => {
                let e = (-tau / a[1]).exp();
                let phase = T::TAU() * a[2] * tau + a[3];
                let (s, c) = phase.sin_cos();
                vec![e * c, a[0] * e * c * tau / (a[1] * a[1]), -a[0] * e * s * T::TAU() * tau, -a[0] * e * s, T::one()]
            }
            Self::T1 => {
                let e = (-tau / a[1]).exp();
                vec![e, a[0] * e * tau / (a[1] * a[1]), T::one()]
            }
            Self::T2 => {
                if tau <= T::zero() {
                    return vec![T::one(), T::zero(), T::zero()];
                }
                let x = tau / a[1];
                let u = x.powf(a[2]);
                let e = (-u).exp();
                vec![e, a[0] * e * u * a[2] / a[1], -a[0] * e * u * x.ln()]
            }
        }
    }

    pub fn to_internal<T: Real>(self, a: &[T]) -> Vec<T> {
        a.iter().zip(self.log_mask()).map(|(&v, &l)| if l { v.ln() } else { v }).collect()
    }

    pub fn from_internal<T: Real>(self, b: &[T]) -> Vec<T> {
        b.iter().zip(self.log_mask()).map(|(&v, &l)| if l { v.exp() } else { v }).collect()
    }
}

/// Measured signal against pulse timing `tau` (seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<T> {
    pub tau: Vec<T>,
    pub signal: Vec<T>,
    pub sigma: Option<Vec<T>>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(tau: Vec<T>, signal: Vec<T>, sigma: Option<Vec<T>>) -> Result<Self> {
        let s = Self { tau, signal, sigma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.len() != self.signal.len() {
            return Err(Error::InvalidSeries(format!("{} times but {} readings", self.tau.len(), self.signal.len())));
        }
        if self.tau.is_empty() {
            return Err(Error::InvalidSeries("no samples".into()));
        }
        if self.tau.iter().chain(&self.signal).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries("non-finite value".into()));
        }
        if self.tau.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSeries("times must be strictly increasing".into()));
        }
        if let Some(sigma) = &self.sigma {
            if sigma.len() != self.tau.len() {
                return Err(Error::InvalidSeries("sigma length differs from tau".into()));
            }
            if sigma.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
                return Err(Error::InvalidSeries("sigma must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    fn weight(&self, k: usize) -> T {
        self.sigma.as_ref().map_or(T::one(), |s| T::one() / s[k])
    }

    fn span(&self) -> T {
        self.tau[self.len() - 1] - self.tau[0]
    }

    fn is_constant(&self) -> bool {
        let first = self.signal[0];
        self.signal.iter().all(|&y| y == first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub model: FitModel,
    pub params: Vec<T>,
    pub covariance: Vec<Vec<T>>,
    pub residual_rms: T,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence when `‖δ‖ ≤ step_tol · (‖b‖ + step_tol)` in internal parameters.
    pub step_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 200, step_tol: 1e-8 }
    }
}

/// Weighted residuals `(f − y)/σ` and their Jacobian with respect to the
/// internal (log-transformed) parameters `b`.
pub fn residuals_and_jacobian<T: Real>(model: FitModel, data: &TimeSeries<T>, b: &[T]) -> (Vec<T>, Vec<Vec<T>>) {
    let a = model.from_internal(b);
    let mask = model.log_mask();
    let mut r = Vec::with_capacity(data.len());
    let mut jac = Vec::with_capacity(data.len());
    for k in 0..data.len() {
        let w = data.weight(k);
        let tau = data.tau[k];
        r.push((model.eval(tau, &a) - data.signal[k]) * w);
        let g = model.gradient(tau, &a);
        jac.push(g.iter().zip(mask).zip(&a).map(|((&d, &l), &av)| if l { d * av * w } else { d * w }).collect());
    }
    (r, jac)
}

fn cost<T: Real>(model: FitModel, data: &TimeSeries<T>, b: &[T]) -> T {
    let a = model.from_internal(b);
    (0..data.len())
        .map(|k| {
            let r = (model.eval(data.tau[k], &a) - data.signal[k]) * data.weight(k);
            r * r
        })
        .sum()
}

fn normal_equations<T: Real>(r: &[T], jac: &[Vec<T>], n: usize) -> (Matrix<T>, Vec<T>) {
    let mut a = Matrix::zeros(n);
    let mut g = vec![T::zero(); n];
    for (ri, row) in r.iter().zip(jac) {
        for i in 0..n {
            g[i] = g[i] + row[i] * *ri;
            for j in 0..n {
                a[(i, j)] = a[(i, j)] + row[i] * row[j];
            }
        }
    }
    (a, g)
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub fn fit<T: Real>(model: FitModel, data: &TimeSeries<T>, init: Option<&[T]>) -> Result<FitResult<T>> {
    fit_with_options(model, data, init, FitOptions::default())
}

pub fn fit_with_options<T: Real>(
    model: FitModel,
    data: &TimeSeries<T>,
    init: Option<&[T]>,
    options: FitOptions,
) -> Result<FitResult<T>> {
    data.validate()?;
    let n = model.arity();
    if data.len() < n + 1 {
        return Err(Error::InvalidSeries(format!("{model} fit needs at least {} points, got {}", n + 1, data.len())));
    }
    if data.is_constant() {
        return Err(Error::Unidentifiable("signal is constant".into()));
    }
    let start = match init {
        Some(a) => {
            model.check_params(a)?;
            a.to_vec()
        }
        None => auto_init(model, data)?.params,
    };

    // Never ask for more than the scalar type can resolve.
    let tol = T::lit(options.step_tol).max(T::epsilon() * T::lit(16.0));
    let mut b = model.to_internal(&start);
    let mut current = cost(model, data, &b);
    let mut lambda = T::lit(1e-3);
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        let (r, jac) = residuals_and_jacobian(model, data, &b);
        let (jtj, g) = normal_equations(&r, &jac, n);
        let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(T::zero(), T::max);
        if !(max_diag > T::zero()) {
            converged = norm(&g) == T::zero();
            break;
        }
        let floor = max_diag * T::lit(1e-12);
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for i in 0..n {
                damped[(i, i)] = damped[(i, i)] + lambda * jtj[(i, i)].max(floor);
            }
            let step = match damped.lu() {
                Ok(lu) => lu.solve(&g.iter().map(|&v| -v).collect::<Vec<_>>()),
                Err(_) => {
                    lambda = lambda * T::lit(10.0);
                    continue;
                }
            };
            let small = norm(&step) <= tol * (norm(&b) + tol);
            let trial: Vec<T> = b.iter().zip(&step).map(|(&x, &d)| x + d).collect();
            let trial_cost = cost(model, data, &trial);
            if trial_cost.is_finite() && trial_cost <= current {
                b = trial;
                current = trial_cost;
                lambda = (lambda / T::lit(10.0)).max(T::lit(1e-15));
                if small {
                    converged = true;
                    break 'outer;
                }
                continue 'outer;
            }
            if small {
                // No downhill step left at this resolution: at the minimum.
                converged = true;
                break 'outer;
            }
            lambda = lambda * T::lit(10.0);
            if lambda > T::lit(1e20) {
                break 'outer;
            }
        }
        break;
    }
    if converged {
        iterations += polish(model, data, &mut b, &mut current, tol);
    }

    let params = model.from_internal(&b);
    let residual_rms = {
        let ss: T = (0..data.len())
            .map(|k| {
                let d = model.eval(data.tau[k], &params) - data.signal[k];
                d * d
            })
            .sum();
        (ss / T::lit(data.len() as f64)).sqrt()
    };
    let covariance = covariance(model, data, &params, current);
    Ok(FitResult { model, params, covariance, residual_rms, converged, iterations })
}

/// Undamped Gauss–Newton steps from a converged point, kept while the cost
/// does not increase beyond rounding. The damped loop stops on step size, which leaves a
/// residual error of order the tolerance that depends on parameter units;
/// near the minimum these steps remove it. Returns the number of steps taken.
fn polish<T: Real>(model: FitModel, data: &TimeSeries<T>, b: &mut Vec<T>, current: &mut T, tol: T) -> usize {
    let n = b.len();
    for taken in 0..8 {
        let (r, jac) = residuals_and_jacobian(model, data, b);
        let (jtj, g) = normal_equations(&r, &jac, n);
        let Ok(lu) = jtj.lu() else { return taken };
        let step = lu.solve(&g.iter().map(|&v| -v).collect::<Vec<_>>());
        let trial: Vec<T> = b.iter().zip(&step).map(|(&x, &d)| x + d).collect();
        let trial_cost = cost(model, data, &trial);
        // Cost differences at the minimum are at rounding level; allow for it.
        let slack = *current * T::lit(1e-12);
        if !(trial_cost.is_finite() && trial_cost <= *current + slack) {
            return taken;
        }
        *b = trial;
        *current = trial_cost;
        if norm(&step) <= tol * tol * (norm(b) + tol) {
            return taken + 1;
        }
    }
    8
}

/// `s² (JᵀJ)⁻¹` in the natural parameters, `s²` the weighted residual variance.
fn covariance<T: Real>(model: FitModel, data: &TimeSeries<T>, params: &[T], weighted_ssr: T) -> Vec<Vec<T>> {
    let n = model.arity();
    let mut jtj = Matrix::zeros(n);
    for k in 0..data.len() {
        let w = data.weight(k);
        let g = model.gradient(data.tau[k], params);
        for i in 0..n {
            for j in 0..n {
                jtj[(i, j)] = jtj[(i, j)] + g[i] * g[j] * w * w;
            }
        }
    }
    let s2 = weighted_ssr / T::lit((data.len() - n) as f64);
    let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(T::zero(), T::max);
    let inverse = jtj.lu().or_else(|_| {
        let mut ridged = jtj.clone();
        let ridge = (max_diag * T::lit(1e-12)).max(T::min_positive_value());
        for i in 0..n {
            ridged[(i, i)] = ridged[(i, i)] + ridge;
        }
        ridged.lu()
    });
    match inverse {
        Ok(lu) => {
            let inv = lu.inverse();
            (0..n).map(|i| (0..n).map(|j| (inv[(i, j)] + inv[(j, i)]) / T::lit(2.0) * s2).collect()).collect()
        }
        Err(_) => vec![vec![T::infinity(); n]; n],
    }
}

/// Starting point for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct AutoInit<T> {
    pub params: Vec<T>,
    /// Set when the spectral Rabi estimate was skipped for lack of points.
    pub fallback: bool,
}

/// Heuristic initial parameters from the data alone.
pub fn auto_init<T: Real>(model: FitModel, data: &TimeSeries<T>) -> Result<AutoInit<T>> {
    data.validate()?;
    if data.is_constant() {
        return Err(Error::Unidentifiable("signal is constant".into()));
    }
    let n = data.len();
    let nf = T::lit(n as f64);
    let span = data.span();
    if !(span > T::zero()) {
        return Err(Error::InvalidSeries("need at least two distinct times".into()));
    }
    match model {
        FitModel::Rabi => {
            let mean = data.signal.iter().copied().sum::<T>() / nf;
            let rms = (data.signal.iter().map(|&y| (y - mean) * (y - mean)).sum::<T>() / nf).sqrt();
            let sign = if data.signal[0] >= mean { T::one() } else { -T::one() };
            let a1 = sign * T::lit(2.0) * rms;
            let a2 = span / T::lit(2.0);
            if n < 8 {
                return Ok(AutoInit { params: vec![a1, a2, T::one() / span, T::zero(), mean], fallback: true });
            }
            let a3 = dominant_frequency(data, mean);
            Ok(AutoInit { params: vec![a1, a2, a3, T::zero(), mean], fallback: false })
        }
        FitModel::T1 | FitModel::T2 => {
            let tail = if model == FitModel::T1 {
                let m = (n / 10).max(3).min(n);
                data.signal[n - m..].iter().copied().sum::<T>() / T::lit(m as f64)
            } else {
                T::zero()
            };
            let mut a1 = data.signal[0] - tail;
            if a1 == T::zero() {
                a1 = data
                    .signal
                    .iter()
                    .copied()
                    .fold(T::zero(), |m, y| if (y - tail).abs() > m.abs() { y - tail } else { m });
            }
            let target = (-T::one()).exp();
            let mut a2 = span;
            for k in 1..n {
                let u0 = (data.signal[k - 1] - tail) / a1;
                let u1 = (data.signal[k] - tail) / a1;
                if u1 <= target {
                    let frac =
                        if u0 > u1 { ((u0 - target) / (u0 - u1)).max(T::zero()).min(T::one()) } else { T::one() };
                    let crossing = data.tau[k - 1] + frac * (data.tau[k] - data.tau[k - 1]);
                    let guess = crossing - data.tau[0];
                    a2 = if guess > T::zero() { guess } else { span / T::lit(2.0) };
                    break;
                }
            }
            let third = if model == FitModel::T1 { tail } else { T::one() };
            Ok(AutoInit { params: vec![a1, a2, third], fallback: false })
        }
    }
}

/// Peak of the discrete Fourier transform of the mean-removed signal,
/// resampled onto a uniform grid, refined on a fine frequency grid around
/// the peak bin.
fn dominant_frequency<T: Real>(data: &TimeSeries<T>, mean: T) -> T {
    let n = data.len();
    let t0 = data.tau[0];
    let dt = data.span() / T::lit((n - 1) as f64);
    let mut uniform = Vec::with_capacity(n);
    let mut seg = 0;
    for j in 0..n {
        let t = t0 + dt * T::lit(j as f64);
        while seg + 2 < n && data.tau[seg + 1] < t {
            seg += 1;
        }
        let (ta, tb) = (data.tau[seg], data.tau[seg + 1]);
        let w = ((t - ta) / (tb - ta)).max(T::zero()).min(T::one());
        uniform.push(data.signal[seg] + w * (data.signal[seg + 1] - data.signal[seg]) - mean);
    }
    let power = |f: T| -> T {
        let (mut re, mut im) = (T::zero(), T::zero());
        for (j, &y) in uniform.iter().enumerate() {
            let arg = T::TAU() * f * dt * T::lit(j as f64);
            re = re + y * arg.cos();
            im = im - y * arg.sin();
        }
        re * re + im * im
    };
    let bin = T::one() / (T::lit(n as f64) * dt);
    let mut best_k = 1;
    let mut best_p = -T::one();
    for k in 1..=n / 2 {
        let p = power(bin * T::lit(k as f64));
        if p > best_p {
            best_p = p;
            best_k = k;
        }
    }
    let mut best_f = bin * T::lit(best_k as f64);
    let steps = 64;
    for i in 0..=2 * steps {
        let f = bin * (T::lit(best_k as f64) + T::lit((i as f64 - steps as f64) / steps as f64));
        if f > T::zero() {
            let p = power(f);
            if p > best_p {
                best_p = p;
                best_f = f;
            }
        }
    }
    best_f
}

/// π-pulse duration `1/(2·a3)` from a converged Rabi fit.
pub fn pi_time<T: Real>(rabi: &FitResult<T>) -> Result<T> {
    if rabi.model != FitModel::Rabi {
        return Err(Error::domain("π time needs a Rabi fit", f64::NAN));
    }
    if !rabi.converged {
        return Err(Error::NotConverged);
    }
    let f = rabi.params[2];
    if !(f > T::zero()) {
        return Err(Error::domain("Rabi frequency must be positive", f.to_f64_lossy()));
    }
    Ok(T::one() / (T::lit(2.0) * f))
}

/// π/2-pulse duration, half of [`pi_time`].
pub fn half_pi_time<T: Real>(rabi: &FitResult<T>) -> Result<T> {
    pi_time(rabi).map(|t| t / T::lit(2.0))
}
