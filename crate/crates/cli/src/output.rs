//! CSV tables held in memory until the whole run has succeeded.

use std::path::{Path, PathBuf};

use faer::{c64, MatRef};

use crate::error::CliError;

pub fn num(x: f64) -> String {
    // −0 prints as 0
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

pub struct Table {
    pub name: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(name: impl Into<String>, header: Vec<String>) -> Self {
        Self {
            name: name.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// One row per matrix row, columns `re_0, im_0, re_1, im_1, …`.
    pub fn complex_matrix(name: impl Into<String>, m: MatRef<'_, c64>) -> Self {
        let header = (0..m.ncols()).flat_map(|j| [format!("re_{j}"), format!("im_{j}")]).collect();
        let mut t = Self::with_header(name, header);
        for i in 0..m.nrows() {
            t.push((0..m.ncols()).flat_map(|j| [num(m[(i, j)].re), num(m[(i, j)].im)]).collect());
        }
        t
    }

    pub fn render(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Validation(format!("csv encoding failed: {e}"));
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        w.into_inner().map_err(|e| CliError::Validation(format!("csv encoding failed: {e}")))
    }
}

pub fn path_for(prefix: &str, name: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_{name}.csv"))
}

/// Renders every table first so nothing is written when any fails.
pub fn write_all(prefix: &str, tables: &[Table]) -> Result<Vec<PathBuf>, CliError> {
    let mut rendered = Vec::with_capacity(tables.len());
    for t in tables {
        rendered.push((path_for(prefix, &t.name), t.render()?));
    }
    let mut written = Vec::new();
    for (path, bytes) in rendered {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        std::fs::write(&path, bytes).map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn complex_matrix_layout() {
        let m = Mat::from_fn(2, 2, |i, j| c64::new(i as f64, j as f64));
        let text = String::from_utf8(Table::complex_matrix("m", m.as_ref()).render().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "re_0,im_0,re_1,im_1");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1.0000000000000000e0,0.0000000000000000e0,1.0"));
    }
}
