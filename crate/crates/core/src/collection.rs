//! Collection side: numerical aperture, solid-angle detection rate, pinhole
//! (fiber core) detection proportion, and the detected-signal figure of merit.

use serde::{Deserialize, Serialize};

use crate::beam_optics::{BeamGeometry, ExcitationRegion};
use crate::error::{Error, Result};
use crate::nv_rate_model::{cw_fluorescence, polarization, steady_state, NvRateSet, PumpModel};
use crate::scalar::Real;

/// `sin(atan(lens_radius / F))`.
pub fn numerical_aperture<T: Real>(lens_radius: T, focal_length: T) -> Result<T> {
    if !(lens_radius > T::zero()) || !lens_radius.is_finite() {
        return Err(Error::domain("lens radius must be positive", lens_radius.to_f64_lossy()));
    }
    if !(focal_length > T::zero()) {
        return Err(Error::domain("focal length must be positive", focal_length.to_f64_lossy()));
    }
    Ok((lens_radius / focal_length).atan().sin())
}

/// Fraction of isotropic emission collected at `na`, relative to `NA = 1`:
/// `1 − sqrt(1 − NA²)`.
pub fn detection_rate<T: Real>(na: T) -> Result<T> {
    if !(na > T::zero() && na <= T::one()) {
        return Err(Error::domain("numerical aperture must lie in (0, 1]", na.to_f64_lossy()));
    }
    // 1 - sqrt(1 - x) = x / (1 + sqrt(1 - x)) avoids cancellation at small NA.
    let x = na * na;
    Ok(x / (T::one() + (T::one() - x).sqrt()))
}

/// Share of the excited spot imaged onto a pinhole of radius `core_radius`.
pub fn detection_proportion<T: Real>(core_radius: T, magnification: T, w0: T) -> Result<T> {
    if !(core_radius > T::zero()) {
        return Err(Error::domain("core radius must be positive", core_radius.to_f64_lossy()));
    }
    if !(magnification > T::zero()) {
        return Err(Error::domain("magnification must be positive", magnification.to_f64_lossy()));
    }
    if !(w0 > T::zero()) {
        return Err(Error::domain("waist radius must be positive", w0.to_f64_lossy()));
    }
    let ratio = core_radius / (magnification * w0);
    Ok((ratio * ratio).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionGeometry<T> {
    pub lens_radius: T,
    pub focal_length: T,
    pub numerical_aperture: T,
    pub detection_rate: T,
}

impl<T: Real> CollectionGeometry<T> {
    pub fn new(lens_radius: T, focal_length: T) -> Result<Self> {
        let numerical_aperture = numerical_aperture(lens_radius, focal_length)?;
        let detection_rate = detection_rate(numerical_aperture)?;
        Ok(Self { lens_radius, focal_length, numerical_aperture, detection_rate })
    }
}

/// Factors of the detected signal and their product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureOfMerit<T> {
    pub detection_volume: T,
    pub i_cw: T,
    pub polarization: T,
    pub detection_rate: T,
    pub detection_proportion: T,
    pub density: T,
    pub detected_signal: T,
}

impl<T: Real> FigureOfMerit<T> {
    /// Volume × fluorescence × polarization, before collection losses.
    pub fn polarized_fluorescence(&self) -> T {
        self.detection_volume * self.i_cw * self.polarization
    }

    pub fn from_factors(
        detection_volume: T,
        i_cw: T,
        polarization: T,
        detection_rate: T,
        detection_proportion: T,
        density: T,
    ) -> Self {
        let detected_signal = detection_volume * i_cw * polarization * detection_rate * detection_proportion * density;
        Self { detection_volume, i_cw, polarization, detection_rate, detection_proportion, density, detected_signal }
    }
}

/// Evaluates the detected signal for one focusing/collection geometry, with
/// `I_CW` and `P` taken at the region's mean power density.
pub fn figure_of_merit<T: Real>(
    beam: &BeamGeometry<T>,
    region: &ExcitationRegion<T>,
    rates: &NvRateSet<T>,
    pump: &PumpModel<T>,
    coll: &CollectionGeometry<T>,
    proportion: T,
    density: T,
) -> Result<FigureOfMerit<T>> {
    if !(proportion > T::zero() && proportion <= T::one()) {
        return Err(Error::domain("detection proportion must lie in (0, 1]", proportion.to_f64_lossy()));
    }
    if !(density > T::zero()) || !density.is_finite() {
        return Err(Error::domain("center density must be positive", density.to_f64_lossy()));
    }
    let tol = T::lit(1e-9);
    if ((beam.waist_radius - region.waist_radius) / region.waist_radius).abs() > tol {
        return Err(Error::domain(
            "beam and excitation region disagree on waist radius",
            beam.waist_radius.to_f64_lossy(),
        ));
    }
    let ss = steady_state(rates, pump, region.mean_power_density)?;
    let i_cw = cw_fluorescence(&ss, rates)?;
    let p = polarization(&ss)?;
    Ok(FigureOfMerit::from_factors(region.volume, i_cw, p, coll.detection_rate, proportion, density))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam_optics::{excitation_region, VolumeModel};

    const NA_1INCH_30MM: f64 = 0.3898402571981867145337774306265775;
    const NA_HALFINCH_30MM: f64 = 0.2070786434415737866029170685720808;
    const DR_1INCH_30MM: f64 = 0.07911750268144870582572260481910826;
    const DR_HALFINCH_30MM: f64 = 0.02167570027602935463188786501379141;

    #[test]
    fn numerical_aperture_reference_values() {
        assert!((numerical_aperture(12.7e-3, 30e-3).unwrap() - NA_1INCH_30MM).abs() < 1e-15);
        assert!((numerical_aperture(6.35e-3, 30e-3).unwrap() - NA_HALFINCH_30MM).abs() < 1e-15);
        assert!(numerical_aperture(12.7e-3, 1e12).unwrap() < 1e-13);
        assert!(numerical_aperture(0.0, 30e-3).is_err());
        assert!(numerical_aperture(12.7e-3, -1.0).is_err());
    }

    #[test]
    fn detection_rate_reference_values() {
        assert_eq!(detection_rate(1.0).unwrap(), 1.0);
        assert!((detection_rate(NA_1INCH_30MM).unwrap() - DR_1INCH_30MM).abs() < 1e-15);
        assert!((detection_rate(NA_HALFINCH_30MM).unwrap() - DR_HALFINCH_30MM).abs() < 1e-15);
        assert!(detection_rate(0.0).is_err());
        assert!(detection_rate(1.0 + 1e-12).is_err());
    }

    #[test]
    fn detection_rate_small_na_series() {
        for na in [1e-4, 1e-3, 0.01, 0.05] {
            let series = na * na / 2.0;
            assert!(((detection_rate::<f64>(na).unwrap() - series) / series).abs() <= 1e-3);
        }
        let mut last = 0.0;
        for i in 1..=1000 {
            let dr = detection_rate(i as f64 / 1000.0).unwrap();
            assert!(dr > last);
            last = dr;
        }
    }

    #[test]
    fn detection_proportion_cases() {
        assert_eq!(detection_proportion(100e-6, 1.0, 11e-6).unwrap(), 1.0);
        assert!((detection_proportion::<f64>(1e-6, 1.0, 10e-6).unwrap() - 0.01).abs() < 1e-15);
        assert!(detection_proportion(1e-15, 1.0, 10e-6).unwrap() < 1e-16);
        assert!(detection_proportion(0.0, 1.0, 10e-6).is_err());
    }

    type Setup = (BeamGeometry<f64>, ExcitationRegion<f64>, NvRateSet<f64>, PumpModel<f64>, CollectionGeometry<f64>);

    fn setup() -> Setup {
        let beam = BeamGeometry::from_focal_length(532e-9, 0.9e-3, 30e-3).unwrap();
        let region = excitation_region(beam.waist_radius, 500e-6, 10e-3, 532e-9, VolumeModel::Clipped).unwrap();
        let rates = NvRateSet {
            k31: 65.9e6,
            k32: 0.0,
            k35: 11.1e6,
            k41: 0.0,
            k42: 65.9e6,
            k45: 91.8e6,
            k51: 4.87e6,
            k52: 2.04e6,
        };
        let coll = CollectionGeometry::new(12.7e-3, beam.focal_length).unwrap();
        (beam, region, rates, PumpModel::new(8.3e-3).unwrap(), coll)
    }

    #[test]
    fn figure_of_merit_is_product_of_factors() {
        let (beam, region, rates, pump, coll) = setup();
        let fom = figure_of_merit(&beam, &region, &rates, &pump, &coll, 1.0, 1.0).unwrap();
        let expected = fom.detection_volume * fom.i_cw * fom.polarization * fom.detection_rate;
        assert_eq!(fom.detected_signal, expected);
        let half = figure_of_merit(&beam, &region, &rates, &pump, &coll, 0.5, 1.0).unwrap();
        assert_eq!(fom.detected_signal, 2.0 * half.detected_signal);
    }

    #[test]
    fn zero_polarization_kills_signal() {
        let (beam, region, mut rates, pump, coll) = setup();
        rates.k35 = 20e6;
        rates.k45 = 20e6;
        rates.k51 = 3e6;
        rates.k52 = 3e6;
        rates.k31 = 60e6;
        rates.k42 = 60e6;
        let fom = figure_of_merit(&beam, &region, &rates, &pump, &coll, 1.0, 1.0).unwrap();
        assert!(fom.polarization.abs() < 1e-12);
        assert!(fom.detected_signal.abs() < 1e-12 * fom.detection_volume * fom.i_cw);
        let zero = FigureOfMerit::from_factors(1.0, 2.0, 0.0, 0.3, 1.0, 5.0);
        assert_eq!(zero.detected_signal, 0.0);
    }

    #[test]
    fn mismatched_geometry_rejected() {
        let (beam, _, rates, pump, coll) = setup();
        let other = excitation_region(2.0 * beam.waist_radius, 500e-6, 10e-3, 532e-9, VolumeModel::Clipped).unwrap();
        assert!(figure_of_merit(&beam, &other, &rates, &pump, &coll, 1.0, 1.0).is_err());
    }
}
