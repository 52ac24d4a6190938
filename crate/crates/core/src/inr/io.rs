use std::path::Path;

use super::encoder::RffEncoder;
use super::model::InrModel;
use crate::error::{EitError, Result};
use crate::scalar::Real;

const MAGIC: &str = "inr";
const VERSION: &str = "v1";

/// Serializes encoder and network parameters. Values are always stored as
/// little-endian f64; Adam state is not saved.
pub fn write_inr<T: Real>(encoder: &RffEncoder<T>, model: &InrModel<T>) -> Vec<u8> {
    let (lo, hi) = model.sigma_range();
    let dims: Vec<String> = model.dims().iter().map(|d| d.to_string()).collect();
    let header = format!(
        "{MAGIC} {VERSION} {} {} {} {} {}\n",
        encoder.samples(),
        encoder.bandwidth(),
        lo,
        hi,
        dims.join(" ")
    );
    let mut out = header.into_bytes();
    for &v in encoder.matrix().iter().chain(model.params()) {
        v.to_f64_lossy().write_le(&mut out);
    }
    out
}

pub fn save_inr<T: Real>(encoder: &RffEncoder<T>, model: &InrModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_inr(encoder, model)).map_err(|e| EitError::io(path, e))
}

pub fn load_inr<T: Real>(path: impl AsRef<Path>) -> Result<(RffEncoder<T>, InrModel<T>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| EitError::io(path, e))?;
    parse_inr(&bytes, path)
}

pub fn parse_inr<T: Real>(bytes: &[u8], origin: &Path) -> Result<(RffEncoder<T>, InrModel<T>)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| EitError::format(origin, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| EitError::format(origin, "header is not text"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&MAGIC) {
        return Err(EitError::format(origin, "not an inr checkpoint"));
    }
    if tokens.get(1) != Some(&VERSION) {
        return Err(EitError::format(origin, format!("unsupported version {:?}", tokens.get(1))));
    }
    if tokens.len() < 8 {
        return Err(EitError::format(origin, "header too short"));
    }
    let num = |i: usize, what: &str| -> Result<f64> {
        tokens[i].parse().map_err(|_| EitError::format(origin, format!("cannot parse {what} from {:?}", tokens[i])))
    };
    let samples = num(2, "sample count")? as usize;
    let bandwidth = num(3, "bandwidth")?;
    let range = (T::lit(num(4, "sigma_min")?), T::lit(num(5, "sigma_max")?));
    let dims = tokens[6..]
        .iter()
        .map(|t| t.parse::<usize>().map_err(|_| EitError::format(origin, format!("bad layer width {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if dims[0] != 2 * samples {
        return Err(EitError::format(origin, format!("input width {} does not match 2 x {samples}", dims[0])));
    }
    let mut model = InrModel::zeros(dims, range)?;
    let body = &bytes[newline + 1..];
    let expected = (2 * samples + model.param_count()) * 8;
    if body.len() != expected {
        return Err(EitError::format(origin, format!("payload has {} bytes, expected {expected}", body.len())));
    }
    let mut values = body.chunks_exact(8).map(|c| T::lit(f64::read_le(c)));
    let b_matrix: Vec<T> = values.by_ref().take(2 * samples).collect();
    let encoder = RffEncoder::from_matrix(b_matrix, T::lit(bandwidth))?;
    model.set_params(values.collect())?;
    Ok((encoder, model))
}
