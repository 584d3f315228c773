//! On-disk formats: CSV tables, JSON documents and the rate-set file.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::designer::{CfmRatioRow, Lens, LensCatalog, SweepTable};
use crate::mapping::{MapQuantity, PixelMap, PulseCalibration, TruthPixel};
use crate::nv_rate_model::NvRateSet;
use crate::pulse_fit::{FitModel, TimeSeries};

pub const SWEEP_HEADER: &str = "variable,volume_m3,icw,polarization,product,detection_rate,detected_signal";
pub const CFM_RATIO_HEADER: &str = "proportion,ratio";
pub const LENS_HEADER: &str = "name,focal_length_mm,diameter_mm";
pub const MAP_HEADER: &str = "x_um,y_um,value,units";
pub const MANIFEST_HEADER: &str = "x_um,y_um,file";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {message}")]
    Parse { source_name: String, line: usize, message: String },
    #[error("{source_name}: missing required key `{key}`")]
    MissingKey { source_name: String, key: String },
    #[error("{source_name}: {message}")]
    Invalid { source_name: String, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FormatError {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse { source_name: source_name.to_string(), line, message: message.into() }
    }

    pub(crate) fn invalid(source_name: &str, message: impl Into<String>) -> Self {
        FormatError::Invalid { source_name: source_name.to_string(), message: message.into() }
    }
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), FormatError> {
    let io = |source| FormatError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Shortest round-trip decimal form of `x`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(source: &str, line: usize, field: &str, text: &str) -> Result<f64, FormatError> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| FormatError::parse(source, line, format!("{field}: `{text}` is not a number")))?;
    if !v.is_finite() {
        return Err(FormatError::parse(source, line, format!("{field}: `{text}` is not finite")));
    }
    Ok(v)
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

pub fn sweep_csv(table: &SweepTable<f64>) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in &table.rows {
        let cols = [r.value, r.volume, r.i_cw, r.polarization, r.product, r.detection_rate, r.detected_signal];
        out.push_str(&cols.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn cfm_ratio_csv(rows: &[CfmRatioRow<f64>]) -> String {
    let mut out = String::from(CFM_RATIO_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{}", fmt_num(r.proportion), fmt_num(r.ratio));
    }
    out
}

/// Lens catalog CSV (`name,focal_length_mm,diameter_mm`), returned in SI.
pub fn parse_lens_catalog(text: &str, source: &str) -> Result<LensCatalog<f64>, FormatError> {
    let mut lines = data_lines(text);
    match lines.next() {
        Some((_, h)) if split_fields(h).join(",") == LENS_HEADER => {}
        Some((n, h)) => {
            return Err(FormatError::parse(source, n, format!("expected header `{LENS_HEADER}`, got `{h}`")))
        }
        None => return Err(FormatError::invalid(source, "empty lens catalog")),
    }
    let mut entries = Vec::new();
    for (n, line) in lines {
        let f = split_fields(line);
        if f.len() != 3 || f[0].is_empty() {
            return Err(FormatError::parse(source, n, "expected `name,focal_length_mm,diameter_mm`"));
        }
        entries.push(Lens {
            name: f[0].to_string(),
            focal_length: parse_f64(source, n, "focal_length_mm", f[1])? * 1e-3,
            diameter: parse_f64(source, n, "diameter_mm", f[2])? * 1e-3,
        });
    }
    let catalog = LensCatalog { entries };
    catalog.validate().map_err(|e| FormatError::invalid(source, e.to_string()))?;
    Ok(catalog)
}

/// Time-series CSV with header `tau_s,signal` or `tau_s,signal,sigma`.
pub fn parse_time_series(text: &str, source: &str) -> Result<TimeSeries<f64>, FormatError> {
    let mut lines = data_lines(text);
    let with_sigma = match lines.next() {
        Some((_, h)) => match split_fields(h).join(",").as_str() {
            "tau_s,signal" => false,
            "tau_s,signal,sigma" => true,
            _ => {
                return Err(FormatError::parse(source, 1, format!("expected header `tau_s,signal[,sigma]`, got `{h}`")))
            }
        },
        None => return Err(FormatError::invalid(source, "empty time series")),
    };
    let (mut tau, mut signal, mut sigma) = (Vec::new(), Vec::new(), Vec::new());
    let width = if with_sigma { 3 } else { 2 };
    for (n, line) in lines {
        let f = split_fields(line);
        if f.len() != width {
            return Err(FormatError::parse(source, n, format!("expected {width} fields, got {}", f.len())));
        }
        tau.push(parse_f64(source, n, "tau_s", f[0])?);
        signal.push(parse_f64(source, n, "signal", f[1])?);
        if with_sigma {
            sigma.push(parse_f64(source, n, "sigma", f[2])?);
        }
    }
    TimeSeries::new(tau, signal, with_sigma.then_some(sigma)).map_err(|e| FormatError::invalid(source, e.to_string()))
}

pub fn time_series_csv(series: &TimeSeries<f64>) -> String {
    let mut out = String::from(if series.sigma.is_some() { "tau_s,signal,sigma\n" } else { "tau_s,signal\n" });
    for k in 0..series.len() {
        let _ = write!(out, "{},{}", fmt_num(series.tau[k]), fmt_num(series.signal[k]));
        if let Some(s) = &series.sigma {
            let _ = write!(out, ",{}", fmt_num(s[k]));
        }
        out.push('\n');
    }
    out
}

/// One row per pixel (row-major, `y` outer); missing pixels have an empty value.
pub fn map_csv(map: &PixelMap<f64>) -> String {
    let mut out = String::from(MAP_HEADER);
    out.push('\n');
    for iy in 0..map.ny {
        for ix in 0..map.nx {
            let (x, y) = map.position(ix, iy);
            let value = map.get(ix, iy).map(fmt_num).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", fmt_num(x * 1e6), fmt_num(y * 1e6), value, map.units);
        }
    }
    out
}

/// Reads a map CSV back; pitch must be supplied since the CSV does not carry it.
pub fn parse_map_csv(
    text: &str,
    source: &str,
    pitch: f64,
    quantity: MapQuantity,
) -> Result<PixelMap<f64>, FormatError> {
    let mut lines = data_lines(text);
    match lines.next() {
        Some((_, h)) if split_fields(h).join(",") == MAP_HEADER => {}
        _ => return Err(FormatError::parse(source, 1, format!("expected header `{MAP_HEADER}`"))),
    }
    let mut rows = Vec::new();
    let mut units = String::new();
    for (n, line) in lines {
        let f = split_fields(line);
        if f.len() != 4 {
            return Err(FormatError::parse(source, n, "expected `x_um,y_um,value,units`"));
        }
        let x = parse_f64(source, n, "x_um", f[0])? / 1e6;
        let y = parse_f64(source, n, "y_um", f[1])? / 1e6;
        let v = if f[2].is_empty() { None } else { Some(parse_f64(source, n, "value", f[2])?) };
        units = f[3].to_string();
        rows.push((x, y, v));
    }
    if rows.is_empty() {
        return Err(FormatError::invalid(source, "map has no pixels"));
    }
    let x0 = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let y0 = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let idx = |v: f64, o: f64| ((v - o) / pitch).round() as usize;
    let nx = rows.iter().map(|r| idx(r.0, x0)).max().unwrap_or(0) + 1;
    let ny = rows.iter().map(|r| idx(r.1, y0)).max().unwrap_or(0) + 1;
    let mut values = vec![None; nx * ny];
    for (x, y, v) in rows {
        values[idx(y, y0) * nx + idx(x, x0)] = v;
    }
    Ok(PixelMap { origin: (x0, y0), pitch, nx, ny, values, quantity, units })
}

/// Rate-set file: `key = value` lines, `k31 … k52` in MHz and optionally
/// `kappa` in Hz per W/m². Returns the rates in Hz.
pub fn parse_rate_file(text: &str, source: &str) -> Result<(NvRateSet<f64>, Option<f64>), FormatError> {
    const KEYS: [&str; 8] = ["k31", "k32", "k35", "k41", "k42", "k45", "k51", "k52"];
    let mut values = [None; 8];
    let mut kappa = None;
    for (n, line) in data_lines(text) {
        let line = line.split('#').next().unwrap_or("").trim();
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| FormatError::parse(source, n, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let v = parse_f64(source, n, key, value)?;
        if key == "kappa" {
            kappa = Some(v);
        } else if let Some(i) = KEYS.iter().position(|k| *k == key) {
            if values[i].is_some() {
                return Err(FormatError::parse(source, n, format!("duplicate key `{key}`")));
            }
            values[i] = Some(v * 1e6);
        } else {
            return Err(FormatError::parse(source, n, format!("unknown key `{key}`")));
        }
    }
    let get = |i: usize| {
        values[i].ok_or_else(|| FormatError::MissingKey { source_name: source.to_string(), key: KEYS[i].to_string() })
    };
    let rates = NvRateSet {
        k31: get(0)?,
        k32: get(1)?,
        k35: get(2)?,
        k41: get(3)?,
        k42: get(4)?,
        k45: get(5)?,
        k51: get(6)?,
        k52: get(7)?,
    };
    rates.validate().map_err(|e| FormatError::invalid(source, e.to_string()))?;
    Ok((rates, kappa))
}

/// Simulation manifest row: pixel position (m) and its series file name.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub x: f64,
    pub y: f64,
    pub file: String,
}

pub fn manifest_csv(entries: &[ManifestEntry]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for e in entries {
        let _ = writeln!(out, "{},{},{}", fmt_num(e.x * 1e6), fmt_num(e.y * 1e6), e.file);
    }
    out
}

pub fn parse_manifest(text: &str, source: &str) -> Result<Vec<ManifestEntry>, FormatError> {
    let mut lines = data_lines(text);
    match lines.next() {
        Some((_, h)) if split_fields(h).join(",") == MANIFEST_HEADER => {}
        _ => return Err(FormatError::parse(source, 1, format!("expected header `{MANIFEST_HEADER}`"))),
    }
    lines
        .map(|(n, line)| {
            let f = split_fields(line);
            if f.len() != 3 || f[2].is_empty() {
                return Err(FormatError::parse(source, n, "expected `x_um,y_um,file`"));
            }
            Ok(ManifestEntry {
                x: parse_f64(source, n, "x_um", f[0])? / 1e6,
                y: parse_f64(source, n, "y_um", f[1])? / 1e6,
                file: f[2].to_string(),
            })
        })
        .collect()
}

/// Truth-field CSV: `x_um,y_um,a1,…,aN` with optional trailing
/// `pi_true_s,pi_applied_s` columns for pulse calibration.
pub fn parse_truth_csv(text: &str, source: &str, model: FitModel) -> Result<Vec<TruthPixel<f64>>, FormatError> {
    let n_par = model.arity();
    let base: Vec<String> =
        ["x_um".to_string(), "y_um".to_string()].into_iter().chain((1..=n_par).map(|i| format!("a{i}"))).collect();
    let mut with_cal = base.clone();
    with_cal.push("pi_true_s".into());
    with_cal.push("pi_applied_s".into());
    let mut lines = data_lines(text);
    let calibrated = match lines.next() {
        Some((_, h)) => {
            let fields: Vec<String> = split_fields(h).into_iter().map(String::from).collect();
            if fields == base {
                false
            } else if fields == with_cal {
                true
            } else {
                return Err(FormatError::parse(
                    source,
                    1,
                    format!("expected header `{}` (optionally with `,pi_true_s,pi_applied_s`)", base.join(",")),
                ));
            }
        }
        None => return Err(FormatError::invalid(source, "empty truth file")),
    };
    let width = if calibrated { n_par + 4 } else { n_par + 2 };
    let mut out = Vec::new();
    for (n, line) in lines {
        let f = split_fields(line);
        if f.len() != width {
            return Err(FormatError::parse(source, n, format!("expected {width} fields, got {}", f.len())));
        }
        let params = (0..n_par)
            .map(|i| parse_f64(source, n, &format!("a{}", i + 1), f[2 + i]))
            .collect::<Result<Vec<_>, _>>()?;
        model.check_params(&params).map_err(|e| FormatError::parse(source, n, e.to_string()))?;
        let calibration = if calibrated {
            Some(PulseCalibration {
                true_pi_time: parse_f64(source, n, "pi_true_s", f[n_par + 2])?,
                applied_pi_time: parse_f64(source, n, "pi_applied_s", f[n_par + 3])?,
            })
        } else {
            None
        };
        out.push(TruthPixel {
            x: parse_f64(source, n, "x_um", f[0])? / 1e6,
            y: parse_f64(source, n, "y_um", f[1])? / 1e6,
            params,
            calibration,
        });
    }
    if out.is_empty() {
        return Err(FormatError::invalid(source, "truth file has no pixels"));
    }
    Ok(out)
}

pub fn to_json<S: serde::Serialize>(value: &S) -> Result<String, FormatError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
