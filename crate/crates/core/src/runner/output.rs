//! Report files, the gnuplot script and the hashed manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::RunnerError;

/// One plot in the generated script: a CSV file and the columns to draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub file: String,
    pub title: String,
    pub x_column: usize,
    pub y_column: usize,
    pub log_y: bool,
}

/// Named in-memory files produced by one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputSet {
    pub files: Vec<(String, Vec<u8>)>,
    pub plots: Vec<PlotSpec>,
    /// `key,value` rows of `summary.csv`.
    pub summary: Vec<(String, String)>,
}

impl OutputSet {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Adds a file produced by a CSV writer callback.
    pub fn add_with<E>(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> Result<(), RunnerError>
    where
        E: std::fmt::Display,
    {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| RunnerError::Report(format!("{name}: {e}")))?;
        self.add(name, buf);
        Ok(())
    }

    pub fn plot(&mut self, file: &str, title: &str, x_column: usize, y_column: usize, log_y: bool) {
        self.plots.push(PlotSpec { file: file.into(), title: title.into(), x_column, y_column, log_y });
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

fn plot_script(plots: &[PlotSpec]) -> String {
    let mut s = String::from("set datafile separator ','\nset key off\nset terminal pngcairo size 800,600\n");
    for p in plots {
        let stem = p.file.trim_end_matches(".csv");
        s.push_str(&format!("set output '{stem}.png'\nset title '{}'\n", p.title));
        s.push_str(if p.log_y { "set logscale y\n" } else { "unset logscale y\n" });
        s.push_str(&format!(
            "plot '{}' every ::1 using {}:{} with linespoints\n",
            p.file, p.x_column, p.y_column
        ));
    }
    s
}

/// Writes `summary.csv`, every report file, `plot.gp` (when there is
/// something to plot) and `manifest.txt` listing `sha256  file` per line.
pub fn emit_outputs(set: &OutputSet, dir: &Path) -> Result<Vec<ManifestEntry>, RunnerError> {
    fs::create_dir_all(dir).map_err(|e| RunnerError::io(dir, e))?;
    let mut summary = String::from("key,value\n");
    for (k, v) in &set.summary {
        summary.push_str(&format!("{k},{v}\n"));
    }
    let mut files: Vec<(String, Vec<u8>)> = vec![("summary.csv".into(), summary.into_bytes())];
    files.extend(set.files.iter().cloned());
    if !set.plots.is_empty() {
        files.push(("plot.gp".into(), plot_script(&set.plots).into_bytes()));
    }
    let mut manifest = Vec::with_capacity(files.len());
    for (name, bytes) in &files {
        let path: PathBuf = dir.join(name);
        fs::write(&path, bytes).map_err(|e| RunnerError::io(&path, e))?;
        manifest.push(ManifestEntry { file: name.clone(), sha256: hex::encode(Sha256::digest(bytes)) });
    }
    let text: String = manifest.iter().map(|m| format!("{}  {}\n", m.sha256, m.file)).collect();
    let path = dir.join("manifest.txt");
    fs::write(&path, text).map_err(|e| RunnerError::io(&path, e))?;
    Ok(manifest)
}
