//! Unit-suffixed quantities (`532 nm`, `10 mW`, `50 um`) converted to SI.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Power,
    Time,
    Frequency,
    Dimensionless,
}

impl Dimension {
    /// Unit suffixes and their power-of-ten exponent relative to SI.
    fn units(self) -> &'static [(&'static str, i32)] {
        match self {
            Dimension::Length => &[("nm", -9), ("um", -6), ("μm", -6), ("µm", -6), ("mm", -3), ("cm", -2), ("m", 0)],
            Dimension::Power => &[("nW", -9), ("uW", -6), ("μW", -6), ("µW", -6), ("mW", -3), ("W", 0), ("kW", 3)],
            Dimension::Time => &[("ps", -12), ("ns", -9), ("us", -6), ("μs", -6), ("µs", -6), ("ms", -3), ("s", 0)],
            Dimension::Frequency => &[("Hz", 0), ("kHz", 3), ("MHz", 6), ("GHz", 9)],
            Dimension::Dimensionless => &[],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Length => "length",
            Dimension::Power => "power",
            Dimension::Time => "time",
            Dimension::Frequency => "frequency",
            Dimension::Dimensionless => "number",
        }
    }
}

/// Parses `value unit` (whitespace optional) into SI. Dimensioned quantities
/// must carry a unit; dimensionless ones must not.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            c.is_alphabetic()
                && !((c == 'e' || c == 'E')
                    && text[i + c.len_utf8()..].starts_with(|d: char| d.is_ascii_digit() || d == '-' || d == '+'))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (num, unit) = (text[..split].trim(), text[split..].trim());
    let value: f64 = num.parse().map_err(|_| format!("`{text}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    if dim == Dimension::Dimensionless {
        return if unit.is_empty() { Ok(value) } else { Err(format!("`{text}` should be a plain number")) };
    }
    if unit.is_empty() {
        return Err(format!("`{text}` needs a {} unit suffix", dim.name()));
    }
    dim.units()
        .iter()
        .find(|(u, _)| *u == unit)
        // Divide for sub-units so that e.g. `0.9 mm` is the double nearest 0.9e-3.
        .map(|&(_, e)| if e < 0 { value / 10f64.powi(-e) } else { value * 10f64.powi(e) })
        .ok_or_else(|| {
            let known: Vec<&str> = dim.units().iter().map(|(u, _)| *u).collect();
            format!("unknown {} unit `{unit}` (expected one of {})", dim.name(), known.join(", "))
        })
}
