use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ReconstructionResult, TraceRow};
use crate::error::{EitError, Result};
use crate::shapes::{save_shape_image, ShapeImage};

pub fn write_trace(trace: &[TraceRow]) -> String {
    let mut s = String::from("iter,L_data,L_reg,L_rec,t_sampled\n");
    for r in trace {
        let _ = writeln!(s, "{},{:e},{:e},{:e},{}", r.iter, r.l_data, r.l_reg, r.l_rec, r.t);
    }
    s
}

/// Writes `sigma_mesh.txt`, `sigma_grid.img`, `trace.csv` and `config.echo`
/// into `dir`, creating it if needed.
pub fn write_bundle(dir: impl AsRef<Path>, result: &ReconstructionResult, config_echo: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| EitError::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| EitError::io(path, e))
    };
    let mut mesh = String::new();
    for v in &result.sigma_mesh {
        let _ = writeln!(mesh, "{v:e}");
    }
    write("sigma_mesh.txt", mesh)?;
    let image = ShapeImage {
        side: result.grid_side,
        data: result.sigma_grid.iter().map(|&v| v as f32).collect(),
    };
    save_shape_image(&image, dir.join("sigma_grid.img"))?;
    write("trace.csv", write_trace(&result.trace))?;
    let mut echo = config_echo.to_string();
    let _ = writeln!(echo, "# method {}", result.method.name());
    let _ = writeln!(echo, "# iterations {}", result.iterations);
    let _ = writeln!(echo, "# status {:?}", result.status);
    write("config.echo", echo)
}
