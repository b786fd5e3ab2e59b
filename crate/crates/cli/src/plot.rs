//! Plot-ready `(x, value)` series written as two-column CSV.

use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    /// Header of the abscissa column, `t` or `lambda`.
    pub x_label: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    pub fn new(
        name: impl Into<String>,
        x_label: impl Into<String>,
        points: Vec<(f64, f64)>,
    ) -> Self {
        Self {
            name: name.into(),
            x_label: x_label.into(),
            points,
        }
    }

    /// Trapezoid rule over consecutive points; repeated abscissae mark a jump.
    pub fn trapezoid(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([self.x_label.as_str(), "value"])
            .expect("in-memory write");
        for (x, v) in &self.points {
            w.write_record([x.to_string(), v.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
    }

    pub fn from_csv(name: impl Into<String>, text: &str) -> CliResult<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let x_label = r
            .headers()
            .map_err(|e| CliError::config("plot header", e))?
            .get(0)
            .unwrap_or("x")
            .to_string();
        let mut points = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| CliError::config(format!("plot row {}", i + 1), e))?;
            let num = |k: usize| {
                rec.get(k)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| CliError::config(format!("plot row {}", i + 1), e))
            };
            points.push((num(0)?, num(1)?));
        }
        Ok(Self::new(name, x_label, points))
    }
}

/// Writes `<dir>/<NN>_<suite>_<series>.csv` for each series and returns
/// the paths.
pub fn write_series(
    dir: &Path,
    index: usize,
    suite: &str,
    series: &[PlotSeries],
) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    series
        .iter()
        .map(|s| {
            let path = dir.join(format!("{index:02}_{suite}_{}.csv", s.name));
            std::fs::write(&path, s.to_csv()).map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
