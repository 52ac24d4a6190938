use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::generate::{sample_for_index, DatasetConfig};
use super::ShapeImage;
use crate::error::{EitError, Result};
use crate::scalar::Real;

pub const MANIFEST_NAME: &str = "manifest.txt";
const IMAGE_MAGIC: &str = "shapeimg";
const MANIFEST_MAGIC: &str = "shapes-manifest";
const VERSION: &str = "v1";

pub fn write_shape_image(image: &ShapeImage) -> Vec<u8> {
    let mut out = format!("{IMAGE_MAGIC} {VERSION} {}\n", image.side).into_bytes();
    out.reserve(image.data.len() * 4);
    for &v in &image.data {
        v.write_le(&mut out);
    }
    out
}

pub fn parse_shape_image(bytes: &[u8], origin: &Path) -> Result<ShapeImage> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| EitError::format(origin, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| EitError::format(origin, "header is not text"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    match tokens.as_slice() {
        [IMAGE_MAGIC, VERSION, side] => {
            let side: usize =
                side.parse().map_err(|_| EitError::format(origin, format!("bad image side {side:?}")))?;
            let body = &bytes[newline + 1..];
            if body.len() != side * side * 4 {
                return Err(EitError::format(
                    origin,
                    format!("payload has {} bytes, expected {}", body.len(), side * side * 4),
                ));
            }
            let data = body.chunks_exact(4).map(f32::read_le).collect();
            Ok(ShapeImage { side, data })
        }
        [IMAGE_MAGIC, v, ..] => Err(EitError::format(origin, format!("unsupported version {v}"))),
        _ => Err(EitError::format(origin, "not a shapeimg file")),
    }
}

pub fn save_shape_image(image: &ShapeImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_shape_image(image)).map_err(|e| EitError::io(path, e))
}

pub fn load_shape_image(path: impl AsRef<Path>) -> Result<ShapeImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| EitError::io(path, e))?;
    parse_shape_image(&bytes, path)
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn file_name(index: usize) -> String {
    format!("shape_{index:06}.img")
}

/// Writes `config.total` images and a manifest into `dir` (created if
/// missing). Returns the manifest path.
pub fn generate_dataset(config: &DatasetConfig, dir: impl AsRef<Path>) -> Result<PathBuf> {
    config.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| EitError::io(dir, e))?;
    let digests = (0..config.total)
        .into_par_iter()
        .map(|i| {
            let bytes = write_shape_image(&sample_for_index(config, i as u64));
            let path = dir.join(file_name(i));
            std::fs::write(&path, &bytes).map_err(|e| EitError::io(&path, e))?;
            Ok(hex_digest(&bytes))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = format!("{MANIFEST_MAGIC} {VERSION}\n");
    for line in config.echo().lines() {
        let _ = writeln!(manifest, "config {line}");
    }
    for (i, d) in digests.iter().enumerate() {
        let _ = writeln!(manifest, "file {} {d}", file_name(i));
    }
    let path = dir.join(MANIFEST_NAME);
    std::fs::write(&path, manifest).map_err(|e| EitError::io(&path, e))?;
    Ok(path)
}

/// Loads every image listed in `dir`'s manifest, verifying checksums.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<ShapeImage>> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| EitError::io(&path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.split_whitespace().eq([MANIFEST_MAGIC, VERSION]) => {}
        _ => return Err(EitError::parse(&path, 1, "not a shapes manifest")),
    }
    let mut entries = Vec::new();
    for (no, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["config", ..] => {}
            ["file", name, digest] => entries.push((no, name.to_string(), digest.to_string())),
            _ => return Err(EitError::parse(&path, no, format!("unrecognized line {line:?}"))),
        }
    }
    entries
        .par_iter()
        .map(|(no, name, digest)| {
            let file = dir.join(name);
            let bytes = std::fs::read(&file).map_err(|e| EitError::io(&file, e))?;
            if hex_digest(&bytes) != *digest {
                return Err(EitError::parse(&path, *no, format!("checksum mismatch for {name}")));
            }
            parse_shape_image(&bytes, &file)
        })
        .collect()
}
