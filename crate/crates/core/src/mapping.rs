//! Spatial maps of fitted quantities and a seeded synthetic-data generator
//! used as the end-to-end oracle for the fitting pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse_fit::{fit, pi_time, FitModel, FitResult, TimeSeries};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapQuantity {
    PiTime,
    T1,
    T2,
    Custom,
}

/// Per-pixel value extracted from a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derive {
    /// `1/(2·a3)` of a Rabi fit.
    PiTime,
    /// The fitted parameter at this (zero-based) index.
    Param(usize),
}

impl Derive {
    pub fn default_for(model: FitModel) -> Self {
        match model {
            FitModel::Rabi => Derive::PiTime,
            FitModel::T1 | FitModel::T2 => Derive::Param(1),
        }
    }

    fn quantity(self, model: FitModel) -> MapQuantity {
        match (self, model) {
            (Derive::PiTime, _) => MapQuantity::PiTime,
            (Derive::Param(1), FitModel::T1) => MapQuantity::T1,
            (Derive::Param(1), FitModel::T2) => MapQuantity::T2,
            _ => MapQuantity::Custom,
        }
    }

    fn units(self, model: FitModel) -> &'static str {
        match (self, model) {
            (Derive::PiTime, _) | (Derive::Param(1), _) => "s",
            (Derive::Param(2), FitModel::Rabi) => "Hz",
            (Derive::Param(3), FitModel::Rabi) => "rad",
            (Derive::Param(2), FitModel::T2) => "1",
            _ => "a.u.",
        }
    }

    pub fn apply<T: Real>(self, result: &FitResult<T>) -> Result<T> {
        match self {
            Derive::PiTime => pi_time(result),
            Derive::Param(i) => {
                if !result.converged {
                    return Err(Error::NotConverged);
                }
                result.params.get(i).copied().ok_or(Error::domain("parameter index out of range", i as f64))
            }
        }
    }
}

/// One measured pixel: its position (m) and pulse-sequence data.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelRecord<T> {
    pub x: T,
    pub y: T,
    pub series: TimeSeries<T>,
}

/// Rectangular map; `values[iy * nx + ix]`, `None` where the fit failed or
/// no data was recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelMap<T> {
    pub origin: (T, T),
    pub pitch: T,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<Option<T>>,
    pub quantity: MapQuantity,
    pub units: String,
}

impl<T: Real> PixelMap<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.pitch > T::zero()) {
            return Err(Error::InvalidMap("pitch must be positive".into()));
        }
        if self.nx == 0 || self.ny == 0 || self.values.len() != self.nx * self.ny {
            return Err(Error::InvalidMap(format!("{}x{} map with {} values", self.nx, self.ny, self.values.len())));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMap("non-finite pixel value".into()));
        }
        Ok(())
    }

    pub fn get(&self, ix: usize, iy: usize) -> Option<T> {
        self.values[iy * self.nx + ix]
    }

    pub fn position(&self, ix: usize, iy: usize) -> (T, T) {
        (self.origin.0 + self.pitch * T::lit(ix as f64), self.origin.1 + self.pitch * T::lit(iy as f64))
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { values: self.values.iter().map(|v| v.map(|x| x * c)).collect(), ..self.clone() }
    }
}

struct Snapped<T> {
    origin: (T, T),
    nx: usize,
    ny: usize,
    /// `(ix, iy)` of each input position.
    index: Vec<(usize, usize)>,
}

/// Snaps positions to a grid of spacing `pitch` anchored at the minimum
/// coordinates.
fn snap<T: Real>(positions: &[(T, T)], pitch: T) -> Result<Snapped<T>> {
    if !(pitch > T::zero()) || !pitch.is_finite() {
        return Err(Error::domain("pixel pitch must be positive", pitch.to_f64_lossy()));
    }
    if positions.is_empty() {
        return Err(Error::InvalidMap("no records".into()));
    }
    let x0 = positions.iter().map(|p| p.0).fold(T::infinity(), T::min);
    let y0 = positions.iter().map(|p| p.1).fold(T::infinity(), T::min);
    let tol = pitch / T::lit(100.0);
    let mut idx = Vec::with_capacity(positions.len());
    for (k, &(x, y)) in positions.iter().enumerate() {
        let fx = (x - x0) / pitch;
        let fy = (y - y0) / pitch;
        let (ix, iy) = (fx.round(), fy.round());
        if ((fx - ix) * pitch).abs() > tol || ((fy - iy) * pitch).abs() > tol {
            return Err(Error::OffGrid { index: k, x: x.to_f64_lossy(), y: y.to_f64_lossy() });
        }
        idx.push((ix.to_usize().unwrap_or(usize::MAX), iy.to_usize().unwrap_or(usize::MAX)));
    }
    let nx = idx.iter().map(|p| p.0).max().unwrap_or(0) + 1;
    let ny = idx.iter().map(|p| p.1).max().unwrap_or(0) + 1;
    let mut seen = vec![None; nx * ny];
    for (k, &(ix, iy)) in idx.iter().enumerate() {
        let slot = &mut seen[iy * nx + ix];
        if let Some(first) = *slot {
            return Err(Error::DuplicateCoordinate { first, second: k, ix, iy });
        }
        *slot = Some(k);
    }
    Ok(Snapped { origin: (x0, y0), nx, ny, index: idx })
}

/// Fits every record (auto-initialised), applies `derive`, and places the
/// result on the pixel grid. Failed or non-converged fits become missing
/// pixels.
pub fn assemble<T: Real>(
    records: &[PixelRecord<T>],
    model: FitModel,
    pitch: T,
    derive: Option<Derive>,
) -> Result<PixelMap<T>> {
    let derive = derive.unwrap_or(Derive::default_for(model));
    let positions: Vec<(T, T)> = records.iter().map(|r| (r.x, r.y)).collect();
    let Snapped { origin, nx, ny, index: idx } = snap(&positions, pitch)?;
    let derived: Vec<Option<T>> = records
        .par_iter()
        .map(|r| {
            fit(model, &r.series, None)
                .ok()
                .filter(|f| f.converged)
                .and_then(|f| derive.apply(&f).ok())
                .filter(|v| v.is_finite())
        })
        .collect();
    let mut values = vec![None; nx * ny];
    for (&(ix, iy), v) in idx.iter().zip(derived) {
        values[iy * nx + ix] = v;
    }
    Ok(PixelMap {
        origin,
        pitch,
        nx,
        ny,
        values,
        quantity: derive.quantity(model),
        units: derive.units(model).to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapStats<T> {
    pub mean: T,
    /// Population standard deviation (divisor `n`).
    pub std: T,
    pub min: T,
    pub max: T,
    pub n_valid: usize,
    pub n_missing: usize,
}

/// Summary over the valid pixels; missing pixels are excluded, never imputed.
pub fn stats<T: Real>(map: &PixelMap<T>) -> Result<MapStats<T>> {
    let valid: Vec<T> = map.values.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let n = T::lit(valid.len() as f64);
    let mean = valid.iter().copied().sum::<T>() / n;
    let var = valid.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    Ok(MapStats {
        mean,
        std: var.sqrt(),
        min: valid.iter().copied().fold(T::infinity(), T::min),
        max: valid.iter().copied().fold(T::neg_infinity(), T::max),
        n_valid: valid.len(),
        n_missing: map.values.len() - valid.len(),
    })
}

/// Pulse length actually applied versus the pixel's true π time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseCalibration<T> {
    pub true_pi_time: T,
    pub applied_pi_time: T,
}

impl<T: Real> PulseCalibration<T> {
    pub fn exact(pi_time: T) -> Self {
        Self { true_pi_time: pi_time, applied_pi_time: pi_time }
    }

    fn ratio(&self) -> T {
        self.applied_pi_time / self.true_pi_time
    }

    /// Population transferred by the nominal π pulse, `sin²(rπ/2)`.
    pub fn inversion_contrast(&self) -> T {
        let s = (self.ratio() * T::FRAC_PI_2()).sin();
        s * s
    }

    /// Hahn-echo (π/2–π–π/2) response split into the non-decaying part `L`
    /// (spins that stayed longitudinal) and the refocused echo weight `E`.
    /// Perfect pulses give `(0, 1)`.
    pub fn echo_response(&self) -> (T, T) {
        let half = self.ratio() * T::FRAC_PI_2();
        let (s, c) = half.sin_cos();
        let full = (self.ratio() * T::PI()).cos();
        (c * c * full, s * s * s * s)
    }
}

/// Truth for one synthetic pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthPixel<T> {
    pub x: T,
    pub y: T,
    pub params: Vec<T>,
    /// Pulse calibration seen by T1/T2 sequences; `None` means perfect pulses.
    pub calibration: Option<PulseCalibration<T>>,
}

/// Noise-free signal of a pixel, including the effect of miscalibrated pulses.
pub fn truth_signal<T: Real>(model: FitModel, pixel: &TruthPixel<T>, tau: T) -> T {
    let a = &pixel.params;
    match (model, pixel.calibration) {
        (FitModel::T1, Some(cal)) => a[2] + a[0] * cal.inversion_contrast() * (-tau / a[1]).exp(),
        (FitModel::T2, Some(cal)) => {
            let (l, e) = cal.echo_response();
            a[0] * (l + e * (-(tau / a[1]).powf(a[2])).exp())
        }
        _ => model.eval(tau, a),
    }
}

/// Generates one time series per truth pixel with additive Gaussian noise of
/// standard deviation `noise_sigma`. Pixel `k` draws from its own ChaCha
/// stream `(seed, k)`, so output does not depend on generation order.
pub fn synth_map<T: Real>(
    truth: &[TruthPixel<T>],
    model: FitModel,
    noise_sigma: T,
    seed: u64,
    tau: &[T],
) -> Result<Vec<PixelRecord<T>>> {
    if !(noise_sigma >= T::zero()) || !noise_sigma.is_finite() {
        return Err(Error::domain("noise sigma must be non-negative", noise_sigma.to_f64_lossy()));
    }
    if tau.len() < 2 || tau.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidSeries("tau grid must be strictly increasing with at least two points".into()));
    }
    for p in truth {
        model.check_params(&p.params)?;
        if let Some(c) = p.calibration {
            if !(c.true_pi_time > T::zero()) || !(c.applied_pi_time > T::zero()) {
                return Err(Error::domain("π times must be positive", c.true_pi_time.to_f64_lossy()));
            }
        }
    }
    truth
        .par_iter()
        .enumerate()
        .map(|(k, pixel)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let signal = tau
                .iter()
                .map(|&t| {
                    let clean = truth_signal(model, pixel, t);
                    if noise_sigma > T::zero() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        clean + noise_sigma * T::lit(z)
                    } else {
                        clean
                    }
                })
                .collect();
            Ok(PixelRecord { x: pixel.x, y: pixel.y, series: TimeSeries::new(tau.to_vec(), signal, None)? })
        })
        .collect()
}

/// Truth pixels on an `nx × ny` grid; `params(ix, iy)` supplies each pixel.
pub fn truth_grid<T: Real, F>(origin: (T, T), pitch: T, nx: usize, ny: usize, mut params: F) -> Vec<TruthPixel<T>>
where
    F: FnMut(usize, usize) -> (Vec<T>, Option<PulseCalibration<T>>),
{
    let mut out = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (p, calibration) = params(ix, iy);
            out.push(TruthPixel {
                x: origin.0 + pitch * T::lit(ix as f64),
                y: origin.1 + pitch * T::lit(iy as f64),
                params: p,
                calibration,
            });
        }
    }
    out
}
