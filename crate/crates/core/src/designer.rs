//! Design-space sweeps, optimum search, lens selection and the comparison
//! against a conventional (high-NA, small pinhole) confocal setup.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam_optics::{excitation_region, rayleigh_length, waist_for_rayleigh, BeamGeometry, VolumeModel};
use crate::collection::{detection_proportion, figure_of_merit, CollectionGeometry, FigureOfMerit};
use crate::error::{Error, Result};
use crate::nv_rate_model::{NvRateSet, PumpModel};
use crate::scalar::Real;

/// Quantity varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    RayleighLength,
    WaistRadius,
    DetectionProportion,
}

impl std::str::FromStr for SweepVariable {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "rayleigh" | "rayleigh_length" | "rayleigh-length" => Ok(Self::RayleighLength),
            "waist" | "waist_radius" | "waist-radius" => Ok(Self::WaistRadius),
            "detection-proportion" | "detection_proportion" | "proportion" => Ok(Self::DetectionProportion),
            other => Err(format!("unknown sweep variable `{other}`")),
        }
    }
}

/// Where the detection proportion comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proportion<T> {
    Fixed(T),
    /// Fiber core of the given radius seeing the spot at `magnification`.
    Fiber {
        core_radius: T,
        magnification: T,
    },
}

/// Everything held fixed while one variable is swept.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepContext<T> {
    pub laser_power: T,
    pub wavelength: T,
    pub incident_beam_diameter: T,
    pub sample_thickness: T,
    pub lens_radius: T,
    pub volume_model: VolumeModel,
    pub rates: NvRateSet<T>,
    pub pump: PumpModel<T>,
    pub density: T,
    pub proportion: Proportion<T>,
    /// Lens used when the detection proportion is the swept variable.
    pub focal_length: Option<T>,
    /// Replaces the NA-derived detection rate (model-sensitivity runs).
    pub detection_rate_override: Option<T>,
}

impl<T: Real> SweepContext<T> {
    /// Figure of merit for a lens of focal length `f` and radius `lens_radius`
    /// focusing the incident beam.
    pub fn evaluate_lens(
        &self,
        f: T,
        lens_radius: T,
        proportion: Option<T>,
    ) -> Result<(BeamGeometry<T>, FigureOfMerit<T>)> {
        let beam = BeamGeometry::from_focal_length(self.wavelength, self.incident_beam_diameter, f)?;
        self.evaluate_beam(&beam, lens_radius, proportion)
    }

    fn evaluate_beam(
        &self,
        beam: &BeamGeometry<T>,
        lens_radius: T,
        proportion: Option<T>,
    ) -> Result<(BeamGeometry<T>, FigureOfMerit<T>)> {
        let region = excitation_region(
            beam.waist_radius,
            self.sample_thickness,
            self.laser_power,
            self.wavelength,
            self.volume_model,
        )?;
        let coll = CollectionGeometry::new(lens_radius, beam.focal_length)?;
        let proportion = match proportion {
            Some(p) => p,
            None => match self.proportion {
                Proportion::Fixed(p) => p,
                Proportion::Fiber { core_radius, magnification } => {
                    detection_proportion(core_radius, magnification, beam.waist_radius)?
                }
            },
        };
        let mut fom = figure_of_merit(beam, &region, &self.rates, &self.pump, &coll, proportion, self.density)?;
        if let Some(dr) = self.detection_rate_override {
            fom = FigureOfMerit::from_factors(
                fom.detection_volume,
                fom.i_cw,
                fom.polarization,
                dr,
                proportion,
                self.density,
            );
        }
        Ok((*beam, fom))
    }

    fn beam_for(&self, variable: SweepVariable, value: T) -> Result<BeamGeometry<T>> {
        match variable {
            SweepVariable::RayleighLength => {
                let w0 = waist_for_rayleigh(value, self.wavelength)?;
                BeamGeometry::from_waist(self.wavelength, self.incident_beam_diameter, w0)
            }
            SweepVariable::WaistRadius => BeamGeometry::from_waist(self.wavelength, self.incident_beam_diameter, value),
            SweepVariable::DetectionProportion => {
                let f = self.focal_length.ok_or_else(|| {
                    Error::InvalidSweep("detection-proportion sweeps need a fixed focal length".into())
                })?;
                BeamGeometry::from_focal_length(self.wavelength, self.incident_beam_diameter, f)
            }
        }
    }

    /// One sweep row at `value` of `variable`.
    pub fn evaluate(&self, variable: SweepVariable, value: T) -> Result<SweepRow<T>> {
        let beam = self.beam_for(variable, value)?;
        let proportion = match variable {
            SweepVariable::DetectionProportion => Some(value),
            _ => None,
        };
        let (_, fom) = self.evaluate_beam(&beam, self.lens_radius, proportion)?;
        Ok(SweepRow::new(value, &fom))
    }
}

/// One swept variable over a grid, with its fixed context.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec<T> {
    pub variable: SweepVariable,
    pub grid: Vec<T>,
    pub context: SweepContext<T>,
}

impl<T: Real> SweepSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidSweep("grid is empty".into()));
        }
        if self.grid.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidSweep("grid values must be positive and finite".into()));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSweep("grid must be strictly increasing".into()));
        }
        if self.variable == SweepVariable::DetectionProportion && self.grid.iter().any(|&p| p > T::one()) {
            return Err(Error::InvalidSweep("detection proportions must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// `n` log-spaced points from `min` to `max` inclusive.
pub fn log_grid<T: Real>(min: T, max: T, n: usize) -> Result<Vec<T>> {
    if !(min > T::zero()) || !(max > min) || n < 2 {
        if n == 1 && min > T::zero() {
            return Ok(vec![min]);
        }
        return Err(Error::InvalidSweep(format!("bad log grid [{min}, {max}] with {n} points")));
    }
    let (a, b) = (min.ln(), max.ln());
    let last = T::lit((n - 1) as f64);
    Ok((0..n)
        .map(|i| match i {
            0 => min,
            i if i == n - 1 => max,
            i => (a + (b - a) * T::lit(i as f64) / last).exp(),
        })
        .collect())
}

/// `n` evenly spaced points from `min` to `max` inclusive.
pub fn linear_grid<T: Real>(min: T, max: T, n: usize) -> Result<Vec<T>> {
    if !(max > min) || n < 2 {
        if n == 1 {
            return Ok(vec![min]);
        }
        return Err(Error::InvalidSweep(format!("bad linear grid [{min}, {max}] with {n} points")));
    }
    let last = T::lit((n - 1) as f64);
    Ok((0..n).map(|i| if i == n - 1 { max } else { min + (max - min) * T::lit(i as f64) / last }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<T> {
    pub value: T,
    pub volume: T,
    pub i_cw: T,
    pub polarization: T,
    /// Volume × `I_CW` × `P`.
    pub product: T,
    pub detection_rate: T,
    pub detected_signal: T,
}

impl<T: Real> SweepRow<T> {
    fn new(value: T, fom: &FigureOfMerit<T>) -> Self {
        Self {
            value,
            volume: fom.detection_volume,
            i_cw: fom.i_cw,
            polarization: fom.polarization,
            product: fom.polarized_fluorescence(),
            detection_rate: fom.detection_rate,
            detected_signal: fom.detected_signal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable<T> {
    pub variable: SweepVariable,
    pub rows: Vec<SweepRow<T>>,
}

impl<T: Real> SweepTable<T> {
    pub fn detected(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.detected_signal).collect()
    }
}

/// Evaluates every grid point. Rows are computed in parallel and assembled in
/// grid order.
pub fn sweep<T: Real>(spec: &SweepSpec<T>) -> Result<SweepTable<T>> {
    spec.validate()?;
    let rows = spec
        .grid
        .par_iter()
        .enumerate()
        .map(|(index, &value)| {
            spec.context.evaluate(spec.variable, value).map_err(|e| Error::AtGridPoint {
                index,
                value: value.to_f64_lossy(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { variable: spec.variable, rows })
}

/// Number of sign changes in the discrete differences of `values`, ignoring
/// exact ties.
pub fn direction_changes<T: Real>(values: &[T]) -> usize {
    let mut last = 0i8;
    let mut changes = 0;
    for w in values.windows(2) {
        let s = if w[1] > w[0] {
            1
        } else if w[1] < w[0] {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    }
    changes
}

/// Index of the first maximum (ties go to the smaller grid value).
fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Maximises `f` on `[a, b]` by golden-section search until the bracket is
/// narrower than `tol`.
pub fn golden_section_max<T: Real, F>(mut a: T, mut b: T, tol: T, mut f: F) -> Result<(T, T)>
where
    F: FnMut(T) -> Result<T>,
{
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Optimum Rayleigh length of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighOptimum<T> {
    pub rayleigh_length: T,
    pub waist_radius: T,
    pub focal_length: T,
    pub detected_signal: T,
    pub grid_index: usize,
    /// False when the grid profile changes direction more than once; the
    /// result is then the plain grid argmax.
    pub unimodal: bool,
    pub refined: bool,
}

/// Grid argmax of the detected signal refined by golden-section search
/// between the neighbouring grid points (in log Rayleigh length).
pub fn optimal_rayleigh<T: Real>(spec: &SweepSpec<T>) -> Result<RayleighOptimum<T>> {
    let ctx = &spec.context;
    let to_zr = |v: T| -> Result<T> {
        match spec.variable {
            SweepVariable::RayleighLength => Ok(v),
            SweepVariable::WaistRadius => rayleigh_length(v, ctx.wavelength),
            SweepVariable::DetectionProportion => Err(Error::InvalidSweep(
                "the optimum Rayleigh length needs a rayleigh-length or waist-radius sweep".into(),
            )),
        }
    };
    let zr_grid = spec.grid.iter().map(|&v| to_zr(v)).collect::<Result<Vec<_>>>()?;
    let zr_spec = SweepSpec { variable: SweepVariable::RayleighLength, grid: zr_grid, context: ctx.clone() };
    let table = sweep(&zr_spec)?;
    let eval = |zr: T| ctx.evaluate(SweepVariable::RayleighLength, zr).map(|r| r.detected_signal);
    let peak = refine_peak(&zr_spec.grid, &table.detected(), eval)?;
    let zr = peak.x;
    let beam = BeamGeometry::from_rayleigh_length(ctx.wavelength, ctx.incident_beam_diameter, zr)?;
    Ok(RayleighOptimum {
        rayleigh_length: zr,
        waist_radius: beam.waist_radius,
        focal_length: beam.focal_length,
        detected_signal: peak.value,
        grid_index: peak.grid_index,
        unimodal: peak.unimodal,
        refined: peak.refined,
    })
}

struct Peak<T> {
    x: T,
    value: T,
    grid_index: usize,
    unimodal: bool,
    refined: bool,
}

/// Grid argmax of `signal` over the positive `grid`, refined in log space when
/// the profile changes direction at most once.
fn refine_peak<T: Real, F>(grid: &[T], signal: &[T], f: F) -> Result<Peak<T>>
where
    F: Fn(T) -> Result<T>,
{
    let best = argmax(signal);
    let unimodal = direction_changes(signal) <= 1;
    let mut peak = Peak { x: grid[best], value: signal[best], grid_index: best, unimodal, refined: false };
    if unimodal && grid.len() > 1 {
        let lo = grid[best.saturating_sub(1)].ln();
        let hi = grid[(best + 1).min(grid.len() - 1)].ln();
        // A bracket of width 1e-4 in log space is a relative tolerance of 1e-4.
        let (u, fu) = golden_section_max(lo, hi, T::lit(1e-4), |u: T| f(u.exp()))?;
        if fu > peak.value {
            peak.x = u.exp();
            peak.value = fu;
            peak.refined = true;
        }
    }
    Ok(peak)
}

/// A commercially available lens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lens<T> {
    pub name: String,
    pub focal_length: T,
    pub diameter: T,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LensCatalog<T> {
    pub entries: Vec<Lens<T>>,
}

impl<T: Real> LensCatalog<T> {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let mut names = std::collections::BTreeSet::new();
        for lens in &self.entries {
            if !(lens.focal_length > T::zero()) || !(lens.diameter > T::zero()) {
                return Err(Error::domain(
                    "lens focal length and diameter must be positive",
                    lens.focal_length.to_f64_lossy(),
                ));
            }
            if !names.insert(lens.name.as_str()) {
                return Err(Error::InvalidSweep(format!("duplicate lens name `{}`", lens.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensRecommendation<T> {
    pub name: String,
    pub focal_length: T,
    pub diameter: T,
    pub detected_signal: T,
    pub waist_radius: T,
    pub rayleigh_length: T,
    /// Entries with identical focal length and diameter, as `(kept, other)`.
    pub duplicates: Vec<(String, String)>,
}

/// Evaluates every catalog lens and returns the best. Ties go to the shorter
/// focal length, then to the lexicographically first name.
pub fn recommend_lens<T: Real>(catalog: &LensCatalog<T>, ctx: &SweepContext<T>) -> Result<LensRecommendation<T>> {
    catalog.validate()?;
    let mut order: Vec<&Lens<T>> = catalog.entries.iter().collect();
    order.sort_by(|a, b| {
        a.focal_length
            .partial_cmp(&b.focal_length)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.name.cmp(&b.name))
    });
    let mut duplicates = Vec::new();
    for (i, a) in order.iter().enumerate() {
        for b in &order[i + 1..] {
            if a.focal_length == b.focal_length && a.diameter == b.diameter {
                duplicates.push((a.name.clone(), b.name.clone()));
            }
        }
    }
    let mut best: Option<(&Lens<T>, BeamGeometry<T>, FigureOfMerit<T>)> = None;
    for lens in order {
        let (beam, fom) = ctx.evaluate_lens(lens.focal_length, lens.diameter / T::lit(2.0), None)?;
        let better = match &best {
            None => true,
            Some((_, _, b)) => fom.detected_signal > b.detected_signal,
        };
        if better {
            best = Some((lens, beam, fom));
        }
    }
    let (lens, beam, fom) = best.ok_or(Error::EmptyCatalog)?;
    Ok(LensRecommendation {
        name: lens.name.clone(),
        focal_length: lens.focal_length,
        diameter: lens.diameter,
        detected_signal: fom.detected_signal,
        waist_radius: beam.waist_radius,
        rayleigh_length: beam.rayleigh_length(),
        duplicates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfmRatioRow<T> {
    pub proportion: T,
    pub ratio: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfmComparison<T> {
    pub lrcfm: RayleighOptimum<T>,
    /// LRCFM detected signal at its optimum with detection proportion 1.
    pub lrcfm_signal: T,
    pub cfm_focal_length: T,
    pub rows: Vec<CfmRatioRow<T>>,
}

fn cfm_signal<T: Real>(ctx: &SweepContext<T>, cfm_focal: T, proportion: T) -> Result<T> {
    let mut cfm = ctx.clone();
    cfm.focal_length = Some(cfm_focal);
    cfm.evaluate(SweepVariable::DetectionProportion, proportion).map(|r| r.detected_signal)
}

/// LRCFM/CFM detected-signal ratio over a grid of CFM detection proportions.
pub fn cfm_comparison<T: Real>(spec: &SweepSpec<T>, cfm_focal: T, proportions: &[T]) -> Result<CfmComparison<T>> {
    if !(cfm_focal > T::zero()) {
        return Err(Error::domain("CFM focal length must be positive", cfm_focal.to_f64_lossy()));
    }
    if proportions.iter().any(|&p| !(p > T::zero() && p <= T::one())) {
        return Err(Error::InvalidSweep("detection proportions must lie in (0, 1]".into()));
    }
    let mut lr_spec = spec.clone();
    lr_spec.context.proportion = Proportion::Fixed(T::one());
    let lrcfm = optimal_rayleigh(&lr_spec)?;
    let lrcfm_signal = lrcfm.detected_signal;
    let rows = proportions
        .par_iter()
        .map(|&p| {
            cfm_signal(&spec.context, cfm_focal, p).map(|s| CfmRatioRow { proportion: p, ratio: lrcfm_signal / s })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CfmComparison { lrcfm, lrcfm_signal, cfm_focal_length: cfm_focal, rows })
}

impl<T: Real> CfmComparison<T> {
    /// Largest CFM detection proportion at which the ratio still reaches
    /// `target`, found by bisection in log proportion. `None` if even the
    /// smallest representable proportion does not reach it; `Some(1)` if
    /// proportion 1 already does.
    pub fn threshold_proportion(&self, ctx: &SweepContext<T>, target: T) -> Result<Option<T>> {
        let ratio = |p: T| cfm_signal(ctx, self.cfm_focal_length, p).map(|s| self.lrcfm_signal / s);
        if ratio(T::one())? >= target {
            return Ok(Some(T::one()));
        }
        let mut lo = T::lit(1e-30);
        if ratio(lo)? < target {
            return Ok(None);
        }
        let mut hi = T::one();
        for _ in 0..200 {
            let mid = (lo.ln() + hi.ln()) / T::lit(2.0);
            let mid = mid.exp();
            if ratio(mid)? >= target {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= T::lit(1e-12) * hi {
                break;
            }
        }
        Ok(Some(lo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bimodal_profile_keeps_grid_argmax() {
        let grid: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        let f = |x: f64| Ok(-(x - 2.0).powi(2) * (x - 7.0).powi(2) + x);
        let signal: Vec<f64> = grid.iter().map(|&x| f(x).unwrap()).collect();
        let peak = refine_peak(&grid, &signal, f).unwrap();
        assert!(!peak.unimodal && !peak.refined);
        assert_eq!(peak.x, grid[argmax(&signal)]);
    }

    #[test]
    fn unimodal_profile_is_refined_between_neighbours() {
        let grid: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        let f = |x: f64| Ok(-(x.ln() - 4.5f64.ln()).powi(2));
        let signal: Vec<f64> = grid.iter().map(|&x| f(x).unwrap()).collect();
        let peak = refine_peak(&grid, &signal, f).unwrap();
        assert!(peak.unimodal && peak.refined);
        assert!((peak.x / 4.5 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn direction_changes_ignores_ties() {
        assert_eq!(direction_changes(&[1.0, 2.0, 2.0, 3.0, 1.0]), 1);
        assert_eq!(direction_changes(&[1.0, 2.0, 1.0, 2.0]), 2);
        assert_eq!(direction_changes::<f64>(&[]), 0);
    }
}
