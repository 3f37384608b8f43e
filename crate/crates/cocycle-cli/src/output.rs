use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cocycle_lab::descriptor::Descriptor;
use cocycle_lab::sl2geom::Mat2;

use crate::AppError;

pub const TOOL: &str = "cocycle-lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The resolved configuration of one run, echoed into every artifact.
#[derive(Serialize)]
pub struct RunConfig<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: Value,
}

impl<'a> RunConfig<'a> {
    pub fn new(command: &'a str, config: impl Serialize) -> Self {
        RunConfig { tool: TOOL, version: VERSION, command, config: serde_json::to_value(config).expect("serializable") }
    }

    /// Adds a resolved value that was not given on the command line.
    pub fn resolve(mut self, key: &str, value: impl Serialize) -> Self {
        if let Value::Object(map) = &mut self.config {
            map.insert(key.to_string(), serde_json::to_value(value).expect("serializable"));
        }
        self
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| AppError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), AppError> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| AppError::Io(e.to_string()))
        }
    }
}

pub fn write_report(out: Option<&Path>, run: &RunConfig, result: impl Serialize) -> Result<(), AppError> {
    let doc = json!({
        "tool": run.tool,
        "version": run.version,
        "command": run.command,
        "config": run.config,
        "result": result,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    emit(out, &text)
}

/// CSV with two `#` comment lines (tool/version, config) before the header row.
pub fn write_csv(out: Option<&Path>, run: &RunConfig, header: &str, rows: &[String]) -> Result<(), AppError> {
    let mut text = format!("# {} {} {}\n", run.tool, run.version, run.command);
    text.push_str(&format!("# config {}\n", serde_json::to_string(&run.config).expect("serializable")));
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    emit(out, &text)
}

/// Canonical descriptor at `out`, with the run configuration beside it in `<out>.run.json`.
pub fn write_descriptor(out: Option<&Path>, run: &RunConfig, d: &Descriptor) -> Result<(), AppError> {
    emit(out, &d.to_canonical_json())?;
    if let Some(p) = out {
        let mut side = p.as_os_str().to_owned();
        side.push(".run.json");
        let mut text = serde_json::to_string_pretty(run).expect("serializable");
        text.push('\n');
        write_atomic(Path::new(&side), text.as_bytes())?;
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Monodromies at base 0 over `grid`, memoized under `COCYCLE_LAB_CACHE` when it is set.
pub fn monodromy_table(d: &Descriptor, grid: &[f64]) -> Result<Vec<Mat2>, AppError> {
    use rayon::prelude::*;
    let v = d.as_periodic().map_err(AppError::Usage)?;
    let compute = || -> Result<Vec<Mat2>, AppError> {
        grid.par_iter().map(|&e| v.monodromy(e, 0.0)).collect::<cocycle_lab::Result<_>>().map_err(AppError::Domain)
    };
    let Some(dir) = std::env::var_os("COCYCLE_LAB_CACHE") else {
        return compute();
    };
    let desc_hash = hex(&Sha256::digest(d.to_canonical_json().as_bytes()));
    let mut grid_hasher = Sha256::new();
    for e in grid {
        grid_hasher.update(e.to_le_bytes());
    }
    let path = Path::new(&dir).join(format!("{desc_hash}-{}.json", hex(&grid_hasher.finalize())));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(table) = serde_json::from_str::<Vec<Mat2>>(&text) {
            if table.len() == grid.len() {
                return Ok(table);
            }
        }
    }
    let table = compute()?;
    std::fs::create_dir_all(&dir).map_err(|e| AppError::Io(format!("{}: {e}", Path::new(&dir).display())))?;
    write_atomic(&path, serde_json::to_string(&table).expect("serializable").as_bytes())?;
    Ok(table)
}
