use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::plot::LinePlot;

/// Environment override for the output root.
pub const OUT_ENV: &str = "WGBEC_OUT";
pub const DEFAULT_OUT: &str = "runs";

/// A table written as `series/<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, header: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows }
    }

    /// Columns of equal length side by side.
    pub fn columns(name: impl Into<String>, header: &[&str], cols: &[&[f64]]) -> Self {
        let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
        let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        Self::new(name, header, rows)
    }
}

/// 17 significant digits, enough to round-trip an f64.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Precedence: `--out`, then `WGBEC_OUT`, then the config, then `runs`.
pub fn out_root(cli: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|p| !p.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// `out_root/<digest>/` with config.json, scalars.json, series/, plots/.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, cfg: &RunConfig) -> CliResult<Self> {
        let path = root.join(cfg.digest());
        fs::create_dir_all(path.join("series"))?;
        fs::create_dir_all(path.join("plots"))?;
        let canonical: Value = serde_json::from_str(&cfg.canonical_json())?;
        fs::write(path.join("config.json"), serde_json::to_string_pretty(&canonical)? + "\n")?;
        Ok(Self { path })
    }

    /// Replace this subcommand's entry in scalars.json, keeping the others.
    /// Keys are sorted, so the file depends only on its contents.
    pub fn merge_scalars(&self, key: &str, scalars: Value) -> CliResult<PathBuf> {
        let file = self.path.join("scalars.json");
        let mut all: Map<String, Value> = match fs::read_to_string(&file) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
            Err(_) => Map::new(),
        };
        all.insert(key.to_string(), scalars);
        fs::write(&file, serde_json::to_string_pretty(&Value::Object(all))? + "\n")?;
        Ok(file)
    }

    pub fn write_series(&self, s: &Series) -> CliResult<PathBuf> {
        let file = self.path.join("series").join(format!("{}.csv", s.name));
        let mut w = csv::Writer::from_path(&file)?;
        w.write_record(&s.header)?;
        for r in &s.rows {
            w.write_record(r.iter().map(|&v| fmt17(v)))?;
        }
        w.flush()?;
        Ok(file)
    }

    /// None (and a notice on stderr) when the plot has no data.
    pub fn write_plot(&self, p: &LinePlot) -> CliResult<Option<PathBuf>> {
        match p.to_svg() {
            Some(svg) => {
                let file = self.path.join("plots").join(format!("{}.svg", p.name));
                fs::write(&file, svg)?;
                Ok(Some(file))
            }
            None => {
                eprintln!("notice: plot {} has no data, skipped", p.name);
                Ok(None)
            }
        }
    }

    pub fn write_record(&self, r: &RunRecord) -> CliResult<PathBuf> {
        let dir = self.path.join("records");
        fs::create_dir_all(&dir)?;
        let file = dir.join(format!("{}.json", r.subcommand));
        fs::write(&file, serde_json::to_string_pretty(r)? + "\n")?;
        Ok(file)
    }
}

/// What a run produced; the wall time lives here and not in scalars.json.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub subcommand: String,
    pub digest: String,
    pub version: String,
    pub directory: PathBuf,
    pub scalars: PathBuf,
    pub series: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub wall_seconds: f64,
    pub passed: bool,
}
