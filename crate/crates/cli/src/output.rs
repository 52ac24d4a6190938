use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError};
use crate::OutputArgs;

pub const OUTPUT_ROOT_VAR: &str = "EIT_OUTPUT_ROOT";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Directory for a command's outputs: `-o` when given, otherwise
/// `<root>/<timestamp>-<command>-<config hash>` under the output root.
pub fn run_dir(out: &OutputArgs, command: &str, echo: &str) -> Result<PathBuf, CliError> {
    let dir = match &out.output {
        Some(dir) => dir.clone(),
        None => {
            let root = out
                .out_root
                .clone()
                .or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("runs"));
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
            let base = format!("{stamp}-{command}-{}", &sha256_hex(echo.as_bytes())[..12]);
            let mut dir = root.join(&base);
            let mut n = 2;
            while dir.exists() {
                dir = root.join(format!("{base}-{n}"));
                n += 1;
            }
            dir
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

/// `<path>.<suffix>` next to an output file.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
