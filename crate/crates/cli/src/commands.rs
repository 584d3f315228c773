use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use lrcfm::beam_optics::waist_for_rayleigh;
use lrcfm::config::{GridSpacing, RunConfig};
use lrcfm::designer::{cfm_comparison, linear_grid, log_grid, optimal_rayleigh, recommend_lens, sweep, SweepVariable};
use lrcfm::formats::{self, FormatError, ManifestEntry};
use lrcfm::mapping::{assemble, stats, synth_map, PixelRecord};
use lrcfm::pulse_fit::{fit, pi_time, FitModel};
use lrcfm::units::{parse_quantity, Dimension};
use serde_json::json;

use crate::{Cli, Command};

/// A failed command, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Input(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Usage(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (Failure::Usage(e) | Failure::Input(e) | Failure::Numerical(e)) = self;
        write!(f, "{e:#}")
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<lrcfm::Error> for Failure {
    fn from(e: lrcfm::Error) -> Self {
        use lrcfm::Error as E;
        let input = match &e {
            E::AtGridPoint { source, .. } => !is_numerical(source),
            other => !is_numerical(other),
        };
        if input {
            Failure::Input(e.into())
        } else {
            Failure::Numerical(e.into())
        }
    }
}

fn is_numerical(e: &lrcfm::Error) -> bool {
    use lrcfm::Error as E;
    matches!(
        e,
        E::DegenerateSteadyState { .. }
            | E::Singular { .. }
            | E::Unidentifiable(_)
            | E::NotConverged
            | E::NoValidPixels
    )
}

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(anyhow!("cannot start {n} worker threads: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => Some(RunConfig::load(path)?),
        None => None,
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    let need_config = |what: &str| config.as_ref().ok_or_else(|| Failure::Usage(anyhow!("`{what}` needs --config")));

    match &cli.command {
        Command::Design => design(need_config("design")?, &out_dir),
        Command::Sweep { variable, points, min, max, linear, cfm_focal } => {
            let grid = GridFlags { points: *points, min: min.as_deref(), max: max.as_deref(), linear: *linear };
            run_sweep(need_config("sweep")?, &out_dir, *variable, grid, cfm_focal.as_deref())
        }
        Command::Fit { model, input, init } => run_fit(*model, input, init.as_deref(), cli.out.as_deref()),
        Command::Map { model, manifest, pitch } => run_map(*model, manifest, pitch, &out_dir),
        Command::Simulate { model, truth, noise, tau_min, tau_max, points } => {
            let tau = (tau_min.as_str(), tau_max.as_str(), *points);
            simulate(*model, truth, *noise, cli.seed, tau, &out_dir)
        }
    }
}

fn quantity(flag: &str, text: &str, dim: Dimension) -> Result<f64, Failure> {
    parse_quantity(text, dim).map_err(|e| Failure::Input(anyhow!("--{flag}: {e}")))
}

fn prepare(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Input(anyhow!("cannot create {}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    formats::write_atomic(&dir.join(name), contents.as_bytes())?;
    Ok(())
}

fn design(cfg: &RunConfig, out: &Path) -> Outcome {
    let spec = cfg.sweep_spec(SweepVariable::RayleighLength, cfg.sweep.values()?);
    let table = sweep(&spec)?;
    let opt = optimal_rayleigh(&spec)?;
    let lens = cfg.catalog.as_ref().map(|c| recommend_lens(c, &spec.context)).transpose()?;

    let spot = 2.0 * lens.as_ref().map_or(opt.waist_radius, |l| l.waist_radius);
    let recommended = lens.as_ref().map(|l| {
        json!({
            "name": l.name,
            "focal_length_m": l.focal_length,
            "diameter_m": l.diameter,
            "waist_radius_m": l.waist_radius,
            "rayleigh_length_m": l.rayleigh_length,
            "spot_diameter_m": 2.0 * l.waist_radius,
            "detected_signal": l.detected_signal,
            "duplicates": l.duplicates,
        })
    });
    let report = json!({
        "laser_power_w": cfg.laser.power,
        "wavelength_m": cfg.laser.wavelength,
        "incident_beam_diameter_m": cfg.laser.incident_beam_diameter,
        "sample_thickness_m": cfg.sample_thickness,
        "volume_model": cfg.volume_model,
        "optimal_rayleigh_length_m": opt.rayleigh_length,
        "twice_rayleigh_length_m": 2.0 * opt.rayleigh_length,
        "optimal_waist_radius_m": opt.waist_radius,
        "optimal_focal_length_m": opt.focal_length,
        "optimal_detected_signal": opt.detected_signal,
        "profile_unimodal": opt.unimodal,
        "refined": opt.refined,
        "recommended_lens": recommended,
        "spot_diameter_m": spot,
    });
    if !opt.unimodal {
        eprintln!("warning: detected-signal profile is not unimodal; reporting the grid maximum");
    }

    prepare(out)?;
    write(out, "sweep.csv", &formats::sweep_csv(&table))?;
    write(out, "report.json", &formats::to_json(&report)?)?;
    println!(
        "optimal z_R = {} um (2 z_R = {} um), F = {} mm",
        opt.rayleigh_length * 1e6,
        2.0 * opt.rayleigh_length * 1e6,
        opt.focal_length * 1e3
    );
    if let Some(l) = &lens {
        println!("recommended lens: {} (F = {} mm), spot diameter {} um", l.name, l.focal_length * 1e3, spot * 1e6);
    }
    Ok(())
}

struct GridFlags<'a> {
    points: Option<usize>,
    min: Option<&'a str>,
    max: Option<&'a str>,
    linear: bool,
}

fn run_sweep(
    cfg: &RunConfig,
    out: &Path,
    variable: SweepVariable,
    flags: GridFlags<'_>,
    cfm_focal: Option<&str>,
) -> Outcome {
    let (dim, default_min, default_max) = match variable {
        SweepVariable::RayleighLength => (Dimension::Length, cfg.sweep.min, cfg.sweep.max),
        SweepVariable::WaistRadius => (
            Dimension::Length,
            waist_for_rayleigh(cfg.sweep.min, cfg.laser.wavelength)?,
            waist_for_rayleigh(cfg.sweep.max, cfg.laser.wavelength)?,
        ),
        SweepVariable::DetectionProportion => (Dimension::Dimensionless, 1e-6, 1.0),
    };
    let min = flags.min.map(|t| quantity("min", t, dim)).transpose()?.unwrap_or(default_min);
    let max = flags.max.map(|t| quantity("max", t, dim)).transpose()?.unwrap_or(default_max);
    let points = flags.points.unwrap_or(cfg.sweep.points);
    let linear = flags.linear || cfg.sweep.spacing == GridSpacing::Linear;
    let grid = if linear { linear_grid(min, max, points)? } else { log_grid(min, max, points)? };

    let mut spec = cfg.sweep_spec(variable, grid);
    let cfm_f = cfm_focal.map(|t| quantity("cfm-focal", t, Dimension::Length)).transpose()?;
    let proportion_sweep = variable == SweepVariable::DetectionProportion;
    if proportion_sweep {
        spec.context.focal_length = Some(cfm_f.unwrap_or(cfg.cfm_focal_length));
    }
    let table = sweep(&spec)?;
    prepare(out)?;
    write(out, "sweep.csv", &formats::sweep_csv(&table))?;
    println!("wrote {} rows to {}", table.rows.len(), out.join("sweep.csv").display());

    if proportion_sweep {
        let f = spec.context.focal_length.unwrap_or(cfg.cfm_focal_length);
        let lr_spec = cfg.sweep_spec(SweepVariable::RayleighLength, cfg.sweep.values()?);
        let cmp = cfm_comparison(&lr_spec, f, &spec.grid)?;
        write(out, "cfm_ratio.csv", &formats::cfm_ratio_csv(&cmp.rows))?;
        match cmp.threshold_proportion(&lr_spec.context, 1e4)? {
            Some(p) => println!("LRCFM/CFM ratio exceeds 1e4 below detection proportion {p}"),
            None => println!("LRCFM/CFM ratio never reaches 1e4"),
        }
    }
    Ok(())
}

fn run_fit(model: FitModel, input: &Path, init: Option<&[f64]>, out: Option<&Path>) -> Outcome {
    let source = input.display().to_string();
    let series = formats::parse_time_series(&formats::read_text(input)?, &source)?;
    if let Some(a) = init {
        if a.len() != model.arity() {
            return Err(Failure::Input(anyhow!("--init: {model} takes {} parameters, got {}", model.arity(), a.len())));
        }
    }
    let result = fit(model, &series, init)?;
    let mut doc = serde_json::to_value(&result).map_err(|e| Failure::Input(e.into()))?;
    if model == FitModel::Rabi {
        if let Ok(t) = pi_time(&result) {
            doc["pi_time_s"] = json!(t);
        }
    }
    let text = formats::to_json(&doc)?;
    match out {
        Some(dir) => {
            prepare(dir)?;
            write(dir, "fit.json", &text)?;
        }
        None => print!("{text}"),
    }
    if !result.converged {
        return Err(Failure::Numerical(anyhow!("{model} fit did not converge in {} iterations", result.iterations)));
    }
    Ok(())
}

fn run_map(model: FitModel, manifest: &Path, pitch: &str, out: &Path) -> Outcome {
    let pitch = quantity("pitch", pitch, Dimension::Length)?;
    let entries = formats::parse_manifest(&formats::read_text(manifest)?, &manifest.display().to_string())?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let records = entries
        .iter()
        .map(|e| {
            let path = base.join(&e.file);
            let series = formats::parse_time_series(&formats::read_text(&path)?, &path.display().to_string())?;
            Ok(PixelRecord { x: e.x, y: e.y, series })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let map = assemble(&records, model, pitch, None)?;
    prepare(out)?;
    write(out, "map.csv", &formats::map_csv(&map))?;
    write(out, "map.json", &formats::to_json(&map)?)?;
    let summary = stats(&map).map_err(|e| match e {
        lrcfm::Error::NoValidPixels => Failure::Numerical(anyhow!("no valid pixels: every {model} fit failed")),
        other => other.into(),
    })?;
    write(out, "stats.json", &formats::to_json(&summary)?)?;
    println!(
        "{}x{} map, {} valid, {} missing; mean {} {}",
        map.nx, map.ny, summary.n_valid, summary.n_missing, summary.mean, map.units
    );
    Ok(())
}

fn simulate(model: FitModel, truth: &Path, noise: f64, seed: u64, tau: (&str, &str, usize), out: &Path) -> Outcome {
    let pixels = formats::parse_truth_csv(&formats::read_text(truth)?, &truth.display().to_string(), model)?;
    let tau_min = quantity("tau-min", tau.0, Dimension::Time)?;
    let tau_max = quantity("tau-max", tau.1, Dimension::Time)?;
    let grid = linear_grid(tau_min, tau_max, tau.2)?;
    let records = synth_map(&pixels, model, noise, seed, &grid)?;
    prepare(out)?;
    let mut entries = Vec::with_capacity(records.len());
    for (k, r) in records.iter().enumerate() {
        let file = format!("pixel_{k:05}.csv");
        write(out, &file, &formats::time_series_csv(&r.series))?;
        entries.push(ManifestEntry { x: r.x, y: r.y, file });
    }
    write(out, "manifest.csv", &formats::manifest_csv(&entries))?;
    println!("wrote {} pixel series and manifest.csv to {}", records.len(), out.display());
    Ok(())
}
