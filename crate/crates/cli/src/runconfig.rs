use std::path::Path;

use eit_core::reconstruct::ReconstructionConfig;
use eit_core::shapes::DatasetConfig;

use crate::error::{io_error, CliError};

pub const MESH_KEYS: &[&str] = &["radius", "electrodes", "coverage", "rings", "elements"];
pub const TRAIN_KEYS: &[&str] = &["steps", "batch_size", "learning_rate", "grad_clip", "seed", "checkpoint_every"];
pub const SIMULATE_KEYS: &[&str] =
    &["phantom", "background", "snr", "seed", "contact_impedance", "amplitude", "grid_side"];

/// Parsed `section.key = value` lines. Every key is checked against the
/// section it names when the file is loaded.
#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    entries: Vec<(String, String, String)>,
}

fn known(section: &str, key: &str) -> bool {
    match section {
        "mesh" => MESH_KEYS.contains(&key),
        "train" => TRAIN_KEYS.contains(&key),
        "simulate" => SIMULATE_KEYS.contains(&key),
        "dataset" => DatasetConfig::default().set(key, "0").is_ok(),
        "reconstruct" => key == "method" || ReconstructionConfig::KEYS.contains(&key),
        _ => false,
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::parse(&text).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (lhs, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `section.key = value`", n + 1))?;
            let (section, key) = lhs
                .trim()
                .split_once('.')
                .ok_or_else(|| format!("line {}: key {:?} has no section", n + 1, lhs.trim()))?;
            if !known(section, key) {
                return Err(format!("line {}: unknown key {section}.{key}", n + 1));
            }
            entries.push((section.to_string(), key.to_string(), value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    /// `(key, value)` pairs of one section in file order.
    pub fn section<'a>(&'a self, name: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries
            .iter()
            .filter(move |(s, _, _)| s == name)
            .map(|(_, k, v)| (k.as_str(), v.as_str()))
    }
}

/// Parses a config value, reporting the offending key as a usage error.
pub fn value<V: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<V, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {value:?} for {section}.{key}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_known_keys_and_comments() {
        let c = RunConfig::parse("# desk\nreconstruct.alpha = 0.01\nmesh.rings=12 # inverse\n\ndataset.total = 50\n")
            .unwrap();
        assert_eq!(c.section("reconstruct").collect::<Vec<_>>(), vec![("alpha", "0.01")]);
        assert_eq!(c.section("mesh").collect::<Vec<_>>(), vec![("rings", "12")]);
        assert_eq!(c.section("dataset").count(), 1);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::parse("reconstruct.alpah = 1").is_err());
        assert!(RunConfig::parse("render.alpha = 1").is_err());
        assert!(RunConfig::parse("alpha = 1").is_err());
        assert!(RunConfig::parse("mesh.rings 12").is_err());
    }
}
