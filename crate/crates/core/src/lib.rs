//! Design and analysis toolkit for long-Rayleigh-length confocal microscopy
//! (LRCFM) of optically addressable color centers.
//!
//! The design half computes, for a laser-excited slab of NV centers, the
//! detected polarized fluorescence as a function of the excitation beam
//! geometry and finds the objective focal length that maximises it:
//!
//! * [`beam_optics`]: Rayleigh length, lens/waist relations, excitation cylinder.
//! * [`nv_rate_model`]: five-level steady state, CW fluorescence, spin polarization.
//! * [`collection`]: numerical aperture, detection rate and proportion, figure of merit.
//! * [`designer`]: sweeps, optimum search, lens recommendation, CFM comparison.
//!
//! The analysis half fits pulsed measurements and assembles spatial maps:
//!
//! * [`pulse_fit`]: Rabi, T1 and stretched-exponential T2 fits.
//! * [`mapping`]: per-pixel maps, statistics and a seeded synthetic data generator.
//!
//! [`formats`] and [`config`] hold the on-disk file formats. Numerical modules
//! are generic over [`Real`] (`f32`/`f64`); the `*64` aliases below fix `f64`.

// `!(x > 0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam_optics;
pub mod collection;
pub mod config;
pub mod designer;
pub mod error;
pub mod formats;
pub mod linalg;
pub mod mapping;
pub mod nv_rate_model;
pub mod pulse_fit;
pub mod scalar;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Real;

pub type BeamGeometry64 = beam_optics::BeamGeometry<f64>;
pub type ExcitationRegion64 = beam_optics::ExcitationRegion<f64>;
pub type NvRateSet64 = nv_rate_model::NvRateSet<f64>;
pub type PumpModel64 = nv_rate_model::PumpModel<f64>;
pub type SteadyState64 = nv_rate_model::SteadyState<f64>;
pub type CollectionGeometry64 = collection::CollectionGeometry<f64>;
pub type FigureOfMerit64 = collection::FigureOfMerit<f64>;
pub type SweepContext64 = designer::SweepContext<f64>;
pub type SweepSpec64 = designer::SweepSpec<f64>;
pub type SweepTable64 = designer::SweepTable<f64>;
pub type LensCatalog64 = designer::LensCatalog<f64>;
pub type TimeSeries64 = pulse_fit::TimeSeries<f64>;
pub type FitResult64 = pulse_fit::FitResult<f64>;
pub type PixelMap64 = mapping::PixelMap<f64>;
pub type MapStats64 = mapping::MapStats<f64>;

pub type BeamGeometry32 = beam_optics::BeamGeometry<f32>;
pub type NvRateSet32 = nv_rate_model::NvRateSet<f32>;
pub type TimeSeries32 = pulse_fit::TimeSeries<f32>;
