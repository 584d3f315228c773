//! Run configuration: flat `dotted.key = value unit` text.
//!
//! ```text
//! laser.wavelength     = 532 nm
//! laser.power          = 10 mW
//! laser.beam_diameter  = 0.9 mm
//! sample.thickness     = 500 um
//! rates.file           = nv_rates.txt
//! lens.radius          = 12.7 mm
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::beam_optics::VolumeModel;
use crate::designer::{linear_grid, log_grid, LensCatalog, Proportion, SweepContext, SweepSpec, SweepVariable};
use crate::formats::{parse_lens_catalog, parse_rate_file, read_text, FormatError};
use crate::nv_rate_model::{NvRateSet, PumpModel};
use crate::units::{parse_quantity, Dimension};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: GridSpacing,
}

impl GridSpec {
    pub fn values(&self) -> crate::Result<Vec<f64>> {
        match self.spacing {
            GridSpacing::Log => log_grid(self.min, self.max, self.points),
            GridSpacing::Linear => linear_grid(self.min, self.max, self.points),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Laser {
    pub wavelength: f64,
    pub power: f64,
    pub incident_beam_diameter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fiber {
    pub core_diameter: f64,
    pub magnification: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub laser: Laser,
    pub sample_thickness: f64,
    pub density: f64,
    pub rates_path: PathBuf,
    pub rates: NvRateSet<f64>,
    pub kappa: f64,
    pub lens_radius: f64,
    pub catalog_path: Option<PathBuf>,
    pub catalog: Option<LensCatalog<f64>>,
    pub fiber: Option<Fiber>,
    pub volume_model: VolumeModel,
    pub sweep: GridSpec,
    pub cfm_focal_length: f64,
    pub output_dir: Option<PathBuf>,
}

const KNOWN_KEYS: &[&str] = &[
    "laser.wavelength",
    "laser.power",
    "laser.beam_diameter",
    "sample.thickness",
    "sample.density",
    "rates.file",
    "pump.kappa",
    "lens.radius",
    "lens.catalog",
    "fiber.core_diameter",
    "fiber.magnification",
    "volume_model",
    "sweep.min",
    "sweep.max",
    "sweep.points",
    "sweep.spacing",
    "cfm.focal_length",
    "output.dir",
];

struct Entries<'a> {
    source: &'a str,
    map: BTreeMap<String, (usize, String)>,
}

impl Entries<'_> {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn required(&self, key: &str) -> Result<(usize, &str), FormatError> {
        self.raw(key)
            .ok_or_else(|| FormatError::MissingKey { source_name: self.source.to_string(), key: key.to_string() })
    }

    fn quantity(&self, key: &str, dim: Dimension) -> Result<Option<f64>, FormatError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => parse_quantity(v, dim)
                .map(Some)
                .map_err(|m| FormatError::parse(self.source, line, format!("{key}: {m}"))),
        }
    }

    fn required_quantity(&self, key: &str, dim: Dimension) -> Result<f64, FormatError> {
        self.required(key)?;
        self.quantity(key, dim).map(|v| v.expect("present"))
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64, FormatError> {
        if v > 0.0 {
            Ok(v)
        } else {
            let line = self.raw(key).map_or(0, |(l, _)| l);
            Err(FormatError::parse(self.source, line, format!("{key} must be positive")))
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let text = read_text(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), &base)
    }

    pub fn parse(text: &str, source: &str, base_dir: &Path) -> Result<Self, FormatError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FormatError::parse(source, line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = k.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(FormatError::parse(source, line_no, format!("unknown key `{key}`")));
            }
            if map.insert(key.clone(), (line_no, v.trim().to_string())).is_some() {
                return Err(FormatError::parse(source, line_no, format!("duplicate key `{key}`")));
            }
        }
        let e = Entries { source, map };
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };

        let laser = Laser {
            wavelength: e.positive("laser.wavelength", e.required_quantity("laser.wavelength", Dimension::Length)?)?,
            power: e.positive("laser.power", e.required_quantity("laser.power", Dimension::Power)?)?,
            incident_beam_diameter: e
                .positive("laser.beam_diameter", e.required_quantity("laser.beam_diameter", Dimension::Length)?)?,
        };
        let sample_thickness =
            e.positive("sample.thickness", e.required_quantity("sample.thickness", Dimension::Length)?)?;
        let density = e.quantity("sample.density", Dimension::Dimensionless)?.unwrap_or(1.0);
        let density = e.positive("sample.density", density)?;

        let rates_path = resolve(e.required("rates.file")?.1);
        let rates_text = read_text(&rates_path)?;
        let (rates, file_kappa) = parse_rate_file(&rates_text, &rates_path.display().to_string())?;
        let kappa = match e.quantity("pump.kappa", Dimension::Dimensionless)? {
            Some(k) => k,
            None => file_kappa.ok_or_else(|| FormatError::MissingKey {
                source_name: source.to_string(),
                key: "pump.kappa (or kappa in the rates file)".into(),
            })?,
        };
        let kappa = e.positive("pump.kappa", kappa)?;

        let lens_radius = e.positive("lens.radius", e.required_quantity("lens.radius", Dimension::Length)?)?;
        let catalog_path = e.raw("lens.catalog").map(|(_, p)| resolve(p));
        let catalog = match &catalog_path {
            Some(p) => Some(parse_lens_catalog(&read_text(p)?, &p.display().to_string())?),
            None => None,
        };

        let fiber = match (
            e.quantity("fiber.core_diameter", Dimension::Length)?,
            e.quantity("fiber.magnification", Dimension::Dimensionless)?,
        ) {
            (Some(core), mag) => Some(Fiber {
                core_diameter: e.positive("fiber.core_diameter", core)?,
                magnification: e.positive("fiber.magnification", mag.unwrap_or(1.0))?,
            }),
            (None, Some(_)) => {
                return Err(FormatError::MissingKey {
                    source_name: source.to_string(),
                    key: "fiber.core_diameter".into(),
                })
            }
            (None, None) => None,
        };

        let volume_model = match e.raw("volume_model") {
            Some((line, v)) => v.parse().map_err(|m: String| FormatError::parse(source, line, m))?,
            None => VolumeModel::default(),
        };

        let points = match e.raw("sweep.points") {
            Some((line, v)) => v
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| FormatError::parse(source, line, "sweep.points must be a positive integer"))?,
            None => 200,
        };
        let spacing = match e.raw("sweep.spacing") {
            None | Some((_, "log")) => GridSpacing::Log,
            Some((_, "linear")) => GridSpacing::Linear,
            Some((line, other)) => {
                return Err(FormatError::parse(
                    source,
                    line,
                    format!("sweep.spacing must be log or linear, got `{other}`"),
                ))
            }
        };
        let sweep = GridSpec {
            min: e.quantity("sweep.min", Dimension::Length)?.unwrap_or(1e-6),
            max: e.quantity("sweep.max", Dimension::Length)?.unwrap_or(10e-3),
            points,
            spacing,
        };
        let cfm_focal_length = e.quantity("cfm.focal_length", Dimension::Length)?.unwrap_or(3.6e-3);
        let cfm_focal_length = e.positive("cfm.focal_length", cfm_focal_length)?;
        let output_dir = e.raw("output.dir").map(|(_, p)| resolve(p));

        Ok(RunConfig {
            laser,
            sample_thickness,
            density,
            rates_path,
            rates,
            kappa,
            lens_radius,
            catalog_path,
            catalog,
            fiber,
            volume_model,
            sweep,
            cfm_focal_length,
            output_dir,
        })
    }

    pub fn context(&self) -> SweepContext<f64> {
        SweepContext {
            laser_power: self.laser.power,
            wavelength: self.laser.wavelength,
            incident_beam_diameter: self.laser.incident_beam_diameter,
            sample_thickness: self.sample_thickness,
            lens_radius: self.lens_radius,
            volume_model: self.volume_model,
            rates: self.rates,
            pump: PumpModel { coupling: self.kappa, spin_conserving: true },
            density: self.density,
            proportion: match &self.fiber {
                Some(f) => Proportion::Fiber { core_radius: f.core_diameter / 2.0, magnification: f.magnification },
                None => Proportion::Fixed(1.0),
            },
            focal_length: None,
            detection_rate_override: None,
        }
    }

    pub fn sweep_spec(&self, variable: SweepVariable, grid: Vec<f64>) -> SweepSpec<f64> {
        SweepSpec { variable, grid, context: self.context() }
    }
}
