use std::fmt::Write as _;
use std::path::Path;

use super::ADJACENT_CONVENTION;
use crate::error::{EitError, Result};
use crate::scalar::Real;

/// One full stimulation cycle of differential voltages (mV).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame<T> {
    pub voltages: Vec<T>,
    /// Electrode count of the pattern that produced the frame, when known.
    pub electrode_count: Option<usize>,
    pub convention: String,
    /// Signal-to-noise ratio of added noise; `None` for noise-free frames.
    pub snr_db: Option<f64>,
}

impl<T: Real> MeasurementFrame<T> {
    pub fn new(voltages: Vec<T>, electrode_count: usize) -> Self {
        Self {
            voltages,
            electrode_count: Some(electrode_count),
            convention: ADJACENT_CONVENTION.to_string(),
            snr_db: None,
        }
    }

    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }
}

pub fn write_frame<T: Real>(frame: &MeasurementFrame<T>) -> String {
    let snr = match frame.snr_db {
        Some(s) if s.is_finite() => s.to_string(),
        _ => "inf".to_string(),
    };
    let mut out = format!("eitframe v1 {} {snr}", frame.voltages.len());
    if let Some(l) = frame.electrode_count {
        let _ = write!(out, " {l} {}", frame.convention);
    }
    out.push('\n');
    for v in &frame.voltages {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn save_frame<T: Real>(frame: &MeasurementFrame<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_frame(frame)).map_err(|e| EitError::io(path, e))
}

pub fn load_frame<T: Real>(path: impl AsRef<Path>) -> Result<MeasurementFrame<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EitError::io(path, e))?;
    parse_frame(&text, path)
}

pub fn parse_frame<T: Real>(text: &str, origin: &Path) -> Result<MeasurementFrame<T>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| EitError::parse(origin, 1, "empty file"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() < 4 || parts[0] != "eitframe" {
        return Err(EitError::parse(origin, 1, "not an eitframe header"));
    }
    if parts[1] != "v1" {
        return Err(EitError::parse(origin, 1, format!("unsupported version {}", parts[1])));
    }
    let count: usize = parts[2]
        .parse()
        .map_err(|_| EitError::parse(origin, 1, format!("bad count {:?}", parts[2])))?;
    let snr_db = match parts[3] {
        "inf" => None,
        s => Some(
            s.parse::<f64>()
                .map_err(|_| EitError::parse(origin, 1, format!("bad snr {s:?}")))?,
        ),
    };
    let (electrode_count, convention) = match parts.len() {
        4 => (None, ADJACENT_CONVENTION.to_string()),
        6 => (
            Some(parts[4].parse().map_err(|_| {
                EitError::parse(origin, 1, format!("bad electrode count {:?}", parts[4]))
            })?),
            parts[5].to_string(),
        ),
        _ => return Err(EitError::parse(origin, 1, "unexpected header fields")),
    };
    let mut voltages = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: T = line
            .parse()
            .map_err(|_| EitError::parse(origin, i + 2, format!("bad voltage {line:?}")))?;
        voltages.push(v);
    }
    if voltages.len() != count {
        return Err(EitError::format(
            origin,
            format!("header announces {count} voltages, found {}", voltages.len()),
        ));
    }
    Ok(MeasurementFrame {
        voltages,
        electrode_count,
        convention,
        snr_db,
    })
}
