use std::path::Path;

use super::schedule::NoiseSchedule;
use super::unet::{Denoiser, DenoiserArch};
use crate::error::{EitError, Result};
use crate::optim::Adam;
use crate::scalar::Real;

const MAGIC: &str = "ddpm";
const VERSION: &str = "v1";

/// A denoiser with its schedule and, for training checkpoints, the
/// optimizer state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub denoiser: Denoiser<f32>,
    pub schedule: NoiseSchedule,
    pub adam: Option<Adam<f32>>,
    pub step: u64,
    pub losses: Vec<f32>,
}

fn push_block(out: &mut Vec<u8>, name: &str, values: &[f32]) {
    out.extend_from_slice(format!("{name} {}\n", values.len()).as_bytes());
    for &v in values {
        v.write_le(out);
    }
}

/// Header line, then blocks of `<name> <count>\n` followed by `count`
/// little-endian f32 values. The `arch` block comes first.
pub fn write_checkpoint(checkpoint: &Checkpoint) -> Vec<u8> {
    let d = &checkpoint.denoiser;
    let s = &checkpoint.schedule;
    let (bmin, bmax) = s.beta_range();
    let arch = d.arch();
    let mut out =
        format!("{MAGIC} {VERSION} {} {} {bmin} {bmax} {}\n", arch.side, s.steps(), arch.hash()).into_bytes();
    let arch_values = [arch.patch, arch.channels.0, arch.channels.1, arch.groups, arch.time_dim, arch.embed_dim]
        .map(|v| v as f32);
    push_block(&mut out, "arch", &arch_values);
    for (name, values) in d.blocks() {
        push_block(&mut out, name, values);
    }
    if let Some(adam) = &checkpoint.adam {
        push_block(&mut out, "adam.m", &adam.m);
        push_block(&mut out, "adam.v", &adam.v);
        push_block(&mut out, "adam.step", &split_u64(adam.step));
    }
    push_block(&mut out, "train.step", &split_u64(checkpoint.step));
    push_block(&mut out, "train.losses", &checkpoint.losses);
    out
}

/// Exact u64 as two 32-bit halves stored as f32 bit patterns.
fn split_u64(v: u64) -> [f32; 2] {
    [f32::from_bits(v as u32), f32::from_bits((v >> 32) as u32)]
}

fn join_u64(v: &[f32]) -> Option<u64> {
    match v {
        [lo, hi] => Some(lo.to_bits() as u64 | (hi.to_bits() as u64) << 32),
        _ => None,
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, write_checkpoint(checkpoint)).map_err(|e| EitError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| EitError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| EitError::io(path, e))?;
    parse_checkpoint(&bytes, path)
}

fn read_line<'a>(bytes: &'a [u8], pos: &mut usize, origin: &Path) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| EitError::format(origin, "truncated block header"))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| EitError::format(origin, "block header is not text"))
}

pub fn parse_checkpoint(bytes: &[u8], origin: &Path) -> Result<Checkpoint> {
    let mut pos = 0;
    let header = read_line(bytes, &mut pos, origin)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&MAGIC) {
        return Err(EitError::format(origin, "not a ddpm checkpoint"));
    }
    if tokens.get(1) != Some(&VERSION) || tokens.len() != 7 {
        return Err(EitError::format(origin, format!("unsupported header {header:?}")));
    }
    let bad = |what: &str| EitError::format(origin, format!("cannot parse {what}"));
    let side: usize = tokens[2].parse().map_err(|_| bad("image side"))?;
    let steps: usize = tokens[3].parse().map_err(|_| bad("step count"))?;
    let bmin: f64 = tokens[4].parse().map_err(|_| bad("beta_min"))?;
    let bmax: f64 = tokens[5].parse().map_err(|_| bad("beta_max"))?;
    let hash = tokens[6];
    let schedule = NoiseSchedule::linear(steps, bmin, bmax)?;

    let mut blocks = Vec::new();
    while pos < bytes.len() {
        let line = read_line(bytes, &mut pos, origin)?;
        let (name, count) = line
            .split_once(' ')
            .and_then(|(n, c)| Some((n.to_string(), c.parse::<usize>().ok()?)))
            .ok_or_else(|| EitError::format(origin, format!("bad block header {line:?}")))?;
        let len = count * 4;
        if bytes.len() - pos < len {
            return Err(EitError::format(origin, format!("block {name} is truncated")));
        }
        let values: Vec<f32> = bytes[pos..pos + len].chunks_exact(4).map(f32::read_le).collect();
        pos += len;
        blocks.push((name, values));
    }
    let take = |name: &str| blocks.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice());
    let arch = match take("arch") {
        Some(&[patch, c1, c2, groups, time_dim, embed_dim]) => DenoiserArch {
            side,
            patch: patch as usize,
            channels: (c1 as usize, c2 as usize),
            groups: groups as usize,
            time_dim: time_dim as usize,
            embed_dim: embed_dim as usize,
        },
        _ => return Err(EitError::format(origin, "missing or malformed arch block")),
    };
    if arch.hash() != hash {
        return Err(EitError::format(origin, format!("architecture hash {hash} does not match {}", arch.hash())));
    }
    let mut denoiser = Denoiser::zeros(arch)?;
    let names: Vec<(String, usize)> = denoiser.block_names().map(|(n, l)| (n.to_string(), l)).collect();
    for (name, _) in &names {
        let values = take(name).ok_or_else(|| EitError::format(origin, format!("missing weight block {name}")))?;
        denoiser.set_block(name, values).map_err(|e| EitError::format(origin, e.to_string()))?;
    }
    let adam = match (take("adam.m"), take("adam.v"), take("adam.step").and_then(join_u64)) {
        (Some(m), Some(v), Some(step)) if m.len() == denoiser.param_count() && v.len() == m.len() => {
            Some(Adam { m: m.to_vec(), v: v.to_vec(), step })
        }
        (None, None, None) => None,
        _ => return Err(EitError::format(origin, "inconsistent optimizer blocks")),
    };
    let step = take("train.step").and_then(join_u64).unwrap_or(0);
    let losses = take("train.losses").map(<[f32]>::to_vec).unwrap_or_default();
    Ok(Checkpoint { denoiser, schedule, adam, step, losses })
}
