#![allow(dead_code)]

use lrcfm::beam_optics::VolumeModel;
use lrcfm::designer::{log_grid, Proportion, SweepContext, SweepSpec, SweepVariable};
use lrcfm::nv_rate_model::{NvRateSet, PumpModel};
use lrcfm::pulse_fit::{residuals_and_jacobian, FitModel, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const LAMBDA: f64 = 532e-9;
pub const BEAM_DIAMETER: f64 = 0.9e-3;
pub const THICKNESS: f64 = 500e-6;
pub const ONE_INCH_RADIUS: f64 = 12.7e-3;

/// Room-temperature rates shipped in `data/nv_rates.txt`, in Hz.
pub fn shipped_rates() -> NvRateSet<f64> {
    NvRateSet { k31: 65.9e6, k32: 0.0, k35: 11.1e6, k41: 0.0, k42: 65.9e6, k45: 91.8e6, k51: 4.87e6, k52: 4.08e6 }
}

pub fn shipped_pump() -> PumpModel<f64> {
    PumpModel::new(8.302e-3).unwrap()
}

pub fn reference_context(power: f64) -> SweepContext<f64> {
    SweepContext {
        laser_power: power,
        wavelength: LAMBDA,
        incident_beam_diameter: BEAM_DIAMETER,
        sample_thickness: THICKNESS,
        lens_radius: ONE_INCH_RADIUS,
        volume_model: VolumeModel::Clipped,
        rates: shipped_rates(),
        pump: shipped_pump(),
        density: 1.0,
        proportion: Proportion::Fixed(1.0),
        focal_length: None,
        detection_rate_override: None,
    }
}

/// Default design grid: 200 log-spaced Rayleigh lengths over [1 um, 10 mm].
pub fn reference_spec(power: f64) -> SweepSpec<f64> {
    SweepSpec {
        variable: SweepVariable::RayleighLength,
        grid: log_grid(1e-6, 10e-3, 200).unwrap(),
        context: reference_context(power),
    }
}

/// Long-time explicit RK4 integration of the five-level rate equations,
/// written out independently of the library's generator and linear solve.
///
/// One RK4 step with `dt` is the linear map `I + A`, where
/// `A = hM + (hM)²/2 + (hM)³/6 + (hM)⁴/24`. Running `2^k` steps is
/// `(I + A)^(2^k)`, evaluated by repeated squaring kept in the form
/// `A ← 2A + A²` so that small rates are never absorbed into the identity.
/// Stepping stops once the integration time exceeds `100 / min rate` and the
/// propagated state has stopped changing.
#[allow(clippy::needless_range_loop)]
pub fn ode_steady_state(r: &NvRateSet<f64>, gamma: f64) -> [f64; 5] {
    type M5 = [[f64; 5]; 5];
    let d3 = r.k31 + r.k32 + r.k35;
    let d4 = r.k41 + r.k42 + r.k45;
    let d5 = r.k51 + r.k52;
    // Rows are d/dt of rho1..rho5.
    let m: M5 = [
        [-gamma, 0.0, r.k31, r.k41, r.k51],
        [0.0, -gamma, r.k32, r.k42, r.k52],
        [gamma, 0.0, -d3, 0.0, 0.0],
        [0.0, gamma, 0.0, -d4, 0.0],
        [0.0, 0.0, r.k35, r.k45, -d5],
    ];
    let mul = |a: &M5, b: &M5| -> M5 {
        let mut c = [[0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                c[i][j] = (0..5).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        c
    };
    let max_rate = [gamma, d3, d4, d5].into_iter().fold(0.0, f64::max);
    let min_rate = [gamma, r.k31, r.k32, r.k35, r.k41, r.k42, r.k45, r.k51, r.k52]
        .into_iter()
        .filter(|&k| k > 0.0)
        .fold(f64::INFINITY, f64::min);
    let dt = 1.0 / (2.0 * max_rate);
    let mut hm = m;
    hm.iter_mut().flatten().for_each(|v| *v *= dt);
    let hm2 = mul(&hm, &hm);
    let hm3 = mul(&hm2, &hm);
    let hm4 = mul(&hm3, &hm);
    let mut a = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            a[i][j] = hm[i][j] + hm2[i][j] / 2.0 + hm3[i][j] / 6.0 + hm4[i][j] / 24.0;
        }
    }
    // Columns of A sum to zero in exact arithmetic (probability is conserved);
    // restore that after rounding so the unit eigenvalue cannot drift.
    let conserve = |a: &mut M5| {
        for j in 0..5 {
            a[j][j] = -(0..5).filter(|&i| i != j).map(|i| a[i][j]).sum::<f64>();
        }
    };
    conserve(&mut a);
    let state = |a: &M5| -> [f64; 5] {
        // (I + A) applied to rho(0) = level 1.
        let mut s = [0.0; 5];
        for i in 0..5 {
            s[i] = a[i][0] + if i == 0 { 1.0 } else { 0.0 };
        }
        s
    };
    let mut t = dt;
    let mut prev = state(&a);
    for _ in 0..400 {
        let a2 = mul(&a, &a);
        for i in 0..5 {
            for j in 0..5 {
                a[i][j] = 2.0 * a[i][j] + a2[i][j];
            }
        }
        conserve(&mut a);
        t *= 2.0;
        let cur = state(&a);
        let settled = cur.iter().zip(&prev).all(|(x, y)| (x - y).abs() <= 1e-14);
        prev = cur;
        if t >= 100.0 / min_rate && settled {
            break;
        }
    }
    prev
}

/// Pulse-sequence models written out directly from their definitions.
pub fn model_value(model: FitModel, tau: f64, a: &[f64]) -> f64 {
    match model {
        FitModel::Rabi => a[0] * (-tau / a[1]).exp() * (2.0 * std::f64::consts::PI * a[2] * tau + a[3]).cos() + a[4],
        FitModel::T1 => a[0] * (-tau / a[1]).exp() + a[2],
        FitModel::T2 => a[0] * (-(tau / a[1]).powf(a[2])).exp(),
    }
}

/// A representative truth and its sampling window: Rabi at MHz with a
/// microsecond decay, T1 at the millisecond scale, T2 at tens of microseconds.
pub fn random_truth(model: FitModel, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    match model {
        FitModel::Rabi => {
            let f = u(2e6, 20e6);
            let window = u(3.0, 8.0) / f;
            let amp = u(0.05, 0.3) * if u(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            let truth = vec![amp, window * u(0.7, 3.0), f, u(-0.5, 0.5), u(0.5, 1.0)];
            (truth, linspace(0.0, window, 121))
        }
        FitModel::T1 => {
            let t1 = u(7e-3, 15e-3);
            let truth = vec![u(0.05, 0.3), t1, u(0.5, 1.0)];
            (truth, linspace(0.0, 5.0 * t1, 81))
        }
        FitModel::T2 => {
            let t2 = u(15e-6, 30e-6);
            let truth = vec![u(0.2, 1.0), t2, u(0.8, 2.5)];
            (truth, linspace(0.2 * t2, 3.0 * t2, 81))
        }
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Exact-model data plus Gaussian noise of standard deviation
/// `noise × |a1|` drawn from `seed`.
pub fn synthetic_series(model: FitModel, truth: &[f64], tau: &[f64], noise: f64, seed: u64) -> TimeSeries<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise * truth[0].abs()).unwrap();
    let signal = tau.iter().map(|&t| model_value(model, t, truth) + normal.sample(&mut rng)).collect();
    TimeSeries::new(tau.to_vec(), signal, None).unwrap()
}

/// Largest deviation, per Jacobian column and relative to that column's
/// largest entry, between the analytic Jacobian at internal parameters `b`
/// and central differences with step `1e-6 · max(|b_j|, 1)`.
pub fn jacobian_fd_error(model: FitModel, data: &TimeSeries<f64>, b: &[f64]) -> f64 {
    let (_, jac) = residuals_and_jacobian(model, data, b);
    let mut worst = 0.0f64;
    for j in 0..b.len() {
        let h = 1e-6 * b[j].abs().max(1.0);
        let mut bp = b.to_vec();
        let mut bm = b.to_vec();
        bp[j] += h;
        bm[j] -= h;
        let (rp, _) = residuals_and_jacobian(model, data, &bp);
        let (rm, _) = residuals_and_jacobian(model, data, &bm);
        let scale = jac.iter().fold(0.0f64, |m, row| m.max(row[j].abs()));
        for (k, row) in jac.iter().enumerate() {
            let fd = (rp[k] - rm[k]) / (2.0 * h);
            worst = worst.max((row[j] - fd).abs() / scale);
        }
    }
    worst
}
