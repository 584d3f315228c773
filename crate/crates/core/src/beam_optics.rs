//! Gaussian-beam geometry of the excitation laser.
//!
//! The excited region of the sample is treated as a cylinder of radius `w0`
//! whose length is either twice the Rayleigh length (clipped by the sample
//! thickness) or the full sample thickness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

fn positive<T: Real>(what: &'static str, v: T) -> Result<T> {
    if v > T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(what, v.to_f64_lossy()))
    }
}

/// Rayleigh length `pi * w0^2 / lambda` of a beam with waist radius `w0`.
pub fn rayleigh_length<T: Real>(w0: T, wavelength: T) -> Result<T> {
    positive("wavelength must be positive", wavelength)?;
    if !(w0 >= T::zero()) || !w0.is_finite() {
        return Err(Error::domain("waist radius must be non-negative", w0.to_f64_lossy()));
    }
    Ok(T::PI() * w0 * w0 / wavelength)
}

/// Waist radius that produces the Rayleigh length `zr`.
pub fn waist_for_rayleigh<T: Real>(zr: T, wavelength: T) -> Result<T> {
    positive("Rayleigh length must be positive", zr)?;
    positive("wavelength must be positive", wavelength)?;
    Ok((zr * wavelength / T::PI()).sqrt())
}

/// Focal length that focuses a collimated beam of diameter `d` to Rayleigh length `zr`.
pub fn focal_length_for_rayleigh<T: Real>(zr: T, d: T, wavelength: T) -> Result<T> {
    positive("Rayleigh length must be positive", zr)?;
    positive("incident beam diameter must be positive", d)?;
    positive("wavelength must be positive", wavelength)?;
    Ok(d / T::lit(2.0) * (zr * T::PI() / wavelength).sqrt())
}

/// Focused waist radius `2 lambda F / (pi D)` behind a lens of focal length `f`.
pub fn waist_from_lens<T: Real>(f: T, d: T, wavelength: T) -> Result<T> {
    positive("focal length must be positive", f)?;
    positive("incident beam diameter must be positive", d)?;
    positive("wavelength must be positive", wavelength)?;
    Ok(T::lit(2.0) * wavelength * f / (T::PI() * d))
}

/// Focal length producing waist `w0`; inverse of [`waist_from_lens`].
pub fn focal_length_for_waist<T: Real>(w0: T, d: T, wavelength: T) -> Result<T> {
    positive("waist radius must be positive", w0)?;
    positive("incident beam diameter must be positive", d)?;
    positive("wavelength must be positive", wavelength)?;
    Ok(T::PI() * d * w0 / (T::lit(2.0) * wavelength))
}

/// Focusing geometry: wavelength, incident beam, lens, and resulting waist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry<T> {
    pub wavelength: T,
    pub waist_radius: T,
    pub incident_beam_diameter: T,
    pub focal_length: T,
}

impl<T: Real> BeamGeometry<T> {
    pub fn from_focal_length(wavelength: T, incident_beam_diameter: T, focal_length: T) -> Result<Self> {
        let waist_radius = waist_from_lens(focal_length, incident_beam_diameter, wavelength)?;
        Ok(Self { wavelength, waist_radius, incident_beam_diameter, focal_length })
    }

    pub fn from_waist(wavelength: T, incident_beam_diameter: T, waist_radius: T) -> Result<Self> {
        let focal_length = focal_length_for_waist(waist_radius, incident_beam_diameter, wavelength)?;
        Ok(Self { wavelength, waist_radius, incident_beam_diameter, focal_length })
    }

    pub fn from_rayleigh_length(wavelength: T, incident_beam_diameter: T, zr: T) -> Result<Self> {
        let focal_length = focal_length_for_rayleigh(zr, incident_beam_diameter, wavelength)?;
        let waist_radius = waist_for_rayleigh(zr, wavelength)?;
        Ok(Self { wavelength, waist_radius, incident_beam_diameter, focal_length })
    }

    pub fn rayleigh_length(&self) -> T {
        T::PI() * self.waist_radius * self.waist_radius / self.wavelength
    }

    pub fn spot_diameter(&self) -> T {
        T::lit(2.0) * self.waist_radius
    }
}

/// How the length of the excitation cylinder is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeModel {
    /// `min(2 z_R, thickness)`.
    #[default]
    Clipped,
    /// Always the full sample thickness.
    Thickness,
}

impl std::str::FromStr for VolumeModel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "clipped" => Ok(VolumeModel::Clipped),
            "thickness" => Ok(VolumeModel::Thickness),
            other => Err(format!("unknown volume model `{other}` (expected clipped|thickness)")),
        }
    }
}

/// Cylindrical excitation region inside the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationRegion<T> {
    pub waist_radius: T,
    pub sample_thickness: T,
    pub effective_length: T,
    pub volume: T,
    pub mean_power_density: T,
    pub laser_power: T,
}

/// Builds the excitation cylinder for waist `w0` in a slab of thickness
/// `thickness` (which may be infinite under [`VolumeModel::Clipped`]).
pub fn excitation_region<T: Real>(
    w0: T,
    thickness: T,
    laser_power: T,
    wavelength: T,
    model: VolumeModel,
) -> Result<ExcitationRegion<T>> {
    positive("waist radius must be positive", w0)?;
    if !(thickness > T::zero()) {
        return Err(Error::domain("sample thickness must be positive", thickness.to_f64_lossy()));
    }
    if !(laser_power >= T::zero()) || !laser_power.is_finite() {
        return Err(Error::domain("laser power must be non-negative", laser_power.to_f64_lossy()));
    }
    let zr = rayleigh_length(w0, wavelength)?;
    let effective_length = match model {
        VolumeModel::Clipped => (T::lit(2.0) * zr).min(thickness),
        VolumeModel::Thickness => thickness,
    };
    if !effective_length.is_finite() {
        return Err(Error::domain("thickness volume model needs a finite sample thickness", thickness.to_f64_lossy()));
    }
    let area = T::PI() * w0 * w0;
    Ok(ExcitationRegion {
        waist_radius: w0,
        sample_thickness: thickness,
        effective_length,
        volume: area * effective_length,
        mean_power_density: laser_power / area,
        laser_power,
    })
}
