use std::fmt::Write as _;
use std::path::Path;

use super::Mesh;
use crate::error::{EitError, Result};
use crate::scalar::Real;

const MAGIC: &str = "eitmesh";
const VERSION: &str = "v1";

pub fn write_mesh<T: Real>(mesh: &Mesh<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION} {} {}", mesh.radius, mesh.electrode_count());
    for p in &mesh.nodes {
        let _ = writeln!(out, "n {} {}", p[0], p[1]);
    }
    for t in &mesh.elements {
        let _ = writeln!(out, "t {} {} {}", t[0], t[1], t[2]);
    }
    for (q, edges) in mesh.electrode_edges.iter().enumerate() {
        for e in edges {
            let _ = writeln!(out, "e {q} {} {}", e[0], e[1]);
        }
    }
    out
}

pub fn save_mesh<T: Real>(mesh: &Mesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_mesh(mesh)).map_err(|e| EitError::io(path, e))
}

pub fn load_mesh<T: Real>(path: impl AsRef<Path>) -> Result<Mesh<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EitError::io(path, e))?;
    parse_mesh(&text, path)
}

fn field<V: std::str::FromStr>(
    parts: &mut std::str::SplitWhitespace<'_>,
    path: &Path,
    line: usize,
    what: &str,
) -> Result<V> {
    let tok = parts
        .next()
        .ok_or_else(|| EitError::parse(path, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| EitError::parse(path, line, format!("cannot parse {what} from {tok:?}")))
}

/// Parses the text format; `origin` only labels error messages.
pub fn parse_mesh<T: Real>(text: &str, origin: &Path) -> Result<Mesh<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| EitError::parse(origin, 1, "empty file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(EitError::parse(origin, 1, "not an eitmesh file"));
    }
    match parts.next() {
        Some(VERSION) => {}
        Some(v) => return Err(EitError::parse(origin, 1, format!("unsupported version {v}"))),
        None => return Err(EitError::parse(origin, 1, "missing version")),
    }
    let radius: T = field(&mut parts, origin, 1, "radius")?;
    let electrode_count: usize = field(&mut parts, origin, 1, "electrode count")?;
    if parts.next().is_some() {
        return Err(EitError::parse(origin, 1, "trailing tokens in header"));
    }

    let mut mesh = Mesh {
        nodes: Vec::new(),
        elements: Vec::new(),
        electrode_edges: vec![Vec::new(); electrode_count],
        radius,
    };
    for (no, line) in lines {
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        match tag {
            "n" => {
                let x = field(&mut parts, origin, no, "x")?;
                let y = field(&mut parts, origin, no, "y")?;
                mesh.nodes.push([x, y]);
            }
            "t" => {
                let a = field(&mut parts, origin, no, "node index")?;
                let b = field(&mut parts, origin, no, "node index")?;
                let c = field(&mut parts, origin, no, "node index")?;
                mesh.elements.push([a, b, c]);
            }
            "e" => {
                let q: usize = field(&mut parts, origin, no, "electrode id")?;
                let a = field(&mut parts, origin, no, "node index")?;
                let b = field(&mut parts, origin, no, "node index")?;
                let slot = mesh.electrode_edges.get_mut(q).ok_or_else(|| {
                    EitError::parse(origin, no, format!("electrode id {q} >= {electrode_count}"))
                })?;
                slot.push([a, b]);
            }
            other => {
                return Err(EitError::parse(origin, no, format!("unknown record {other:?}")));
            }
        }
        if parts.next().is_some() {
            return Err(EitError::parse(origin, no, "trailing tokens"));
        }
    }
    mesh.validate()?;
    Ok(mesh)
}
