//! Line charts from CSV columns.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::OutputDir;
use crate::svg::{line_chart, ChartOptions, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    /// Relative paths are taken from the config file's directory.
    pub csv: PathBuf,
    pub x: String,
    pub y: Vec<String>,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default)]
    pub log_x: bool,
    #[serde(default)]
    pub log_y: bool,
    #[serde(default)]
    pub title: Option<String>,
}

fn default_output() -> String {
    "plot.svg".into()
}
fn default_width() -> f64 {
    640.0
}
fn default_height() -> f64 {
    400.0
}

pub fn resolve(base_dir: &Path, csv: &Path) -> PathBuf {
    let joined = if csv.is_absolute() {
        csv.to_path_buf()
    } else {
        base_dir.join(csv)
    };
    joined.canonicalize().unwrap_or(joined)
}

/// Reads the named columns; empty or unparsable cells become NaN.
pub fn read_columns(path: &Path, names: &[&str]) -> CliResult<Vec<Vec<f64>>> {
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Config(format!("{}: {other:?}", path.display())),
    };
    let mut reader = csv::Reader::from_path(path).map_err(to_err)?;
    let header = reader.headers().map_err(to_err)?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| CliError::MissingColumn(n.to_string()))
        })
        .collect::<CliResult<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record.map_err(to_err)?;
        for (col, &i) in cols.iter_mut().zip(&idx) {
            col.push(
                record
                    .get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .unwrap_or(f64::NAN),
            );
        }
    }
    Ok(cols)
}

pub fn run(config: &RenderConfig, out: &mut OutputDir) -> CliResult<()> {
    if config.y.is_empty() {
        return Err(CliError::Field {
            path: "y".into(),
            message: "at least one column is required".into(),
        });
    }
    if !(config.width > 0.0 && config.height > 0.0) {
        return Err(CliError::Config("width and height must be positive".into()));
    }
    let mut names = vec![config.x.as_str()];
    names.extend(config.y.iter().map(String::as_str));
    let cols = read_columns(&config.csv, &names)?;
    let series: Vec<Series> = config
        .y
        .iter()
        .zip(&cols[1..])
        .map(|(name, ys)| Series {
            name: name.clone(),
            points: cols[0].iter().copied().zip(ys.iter().copied()).collect(),
        })
        .collect();
    let opts = ChartOptions {
        width: config.width,
        height: config.height,
        log_x: config.log_x,
        log_y: config.log_y,
        title: config.title.clone(),
        x_label: config.x.clone(),
    };
    out.write_text(&config.output, &line_chart(&series, &opts))
}
