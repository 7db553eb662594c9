//! CSV writers for reports and diagnostic dumps.
//!
//! Float formatting uses Rust's shortest round-trip representation, so
//! identical values always serialize to identical bytes; reports from
//! deterministic runs compare byte-for-byte.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rgbps_core::eval::ErrorReport;
use rgbps_core::local::{AlbedoHistogram, GlobalAlbedoSet};
use rgbps_core::num::{to_f64, Scalar};
use rgbps_core::solver::TraceRow;

use crate::error::{IoError, Result};

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| IoError::file(path, e))?,
    ))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Summary statistics of one evaluation.
pub fn write_report<T: Scalar>(path: impl AsRef<Path>, report: &ErrorReport<T>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    writeln!(w, "pixels,median_deg,mean_deg,p95_deg,max_deg")
        .and_then(|_| {
            writeln!(
                w,
                "{},{},{},{},{}",
                report.pixels,
                to_f64(report.median_deg),
                to_f64(report.mean_deg),
                to_f64(report.p95_deg),
                to_f64(report.max_deg)
            )
        })
        .map_err(|e| IoError::file(path, e))?;
    finish(w, path)
}

/// Sampled cumulative error distribution.
pub fn write_cdf<T: Scalar>(path: impl AsRef<Path>, cdf: &[(T, T)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    writeln!(w, "error_deg,fraction").map_err(|e| IoError::file(path, e))?;
    for &(t, f) in cdf {
        writeln!(w, "{},{}", to_f64(t), to_f64(f)).map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

/// Global albedo set: luminance and chromaticity per candidate.
pub fn write_albedo_set<T: Scalar>(
    path: impl AsRef<Path>,
    set: &GlobalAlbedoSet<T>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    writeln!(w, "tau,chroma_r,chroma_g,chroma_b,histogram_value")
        .map_err(|e| IoError::file(path, e))?;
    for (i, c) in set.candidates.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            to_f64(c.luminance),
            to_f64(c.chroma.x),
            to_f64(c.chroma.y),
            to_f64(c.chroma.z),
            to_f64(set.values[i])
        )
        .map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

/// Nonzero histogram bins as `(lum, elev, azim, value)` rows.
pub fn write_histogram<T: Scalar>(
    path: impl AsRef<Path>,
    hist: &AlbedoHistogram<T>,
) -> Result<()> {
    let path = path.as_ref();
    let grid = *hist.grid();
    let mut w = writer(path)?;
    writeln!(w, "lum,elev,azim,value").map_err(|e| IoError::file(path, e))?;
    for l in 0..grid.n_lum {
        for e in 0..grid.n_elev {
            for a in 0..grid.n_azim {
                let v = hist.value(l, grid.chroma_index(e, a));
                if v > T::zero() {
                    writeln!(w, "{l},{e},{a},{}", to_f64(v))
                        .map_err(|e2| IoError::file(path, e2))?;
                }
            }
        }
    }
    finish(w, path)
}

/// Debug dump of shape coefficients: one column per monomial, named by its
/// `(d_x, d_y)` exponents, one row per coefficient vector.
pub fn write_coefficients<T: Scalar>(
    path: impl AsRef<Path>,
    geometry: &rgbps_core::PatchGeometry,
    rows: &[&[T]],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let header: Vec<String> = geometry
        .exponents()
        .iter()
        .map(|&(dx, dy)| format!("d{dx}_{dy}"))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| IoError::file(path, e))?;
    for row in rows {
        let fields: Vec<String> = row.iter().map(|&v| format!("{}", to_f64(v))).collect();
        writeln!(w, "{}", fields.join(",")).map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

/// Per-iteration objective log.
pub fn write_trace<T: Scalar>(path: impl AsRef<Path>, trace: &[TraceRow<T>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    writeln!(
        w,
        "iteration,lambda,objective_start,objective_after_n,objective_after_a,outliers"
    )
    .map_err(|e| IoError::file(path, e))?;
    for row in trace {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.iteration,
            to_f64(row.lambda),
            to_f64(row.start),
            to_f64(row.after_n_step),
            to_f64(row.after_a_step),
            row.outliers
        )
        .map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

/// Append-style writer for simple tabular CSVs (bench reports, manifests).
pub struct CsvTable {
    path: std::path::PathBuf,
    w: BufWriter<File>,
}

impl CsvTable {
    pub fn create(path: impl AsRef<Path>, header: &str) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut w = writer(&path)?;
        writeln!(w, "{header}").map_err(|e| IoError::file(&path, e))?;
        Ok(Self { path, w })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.w, "{}", fields.join(","))
            .map_err(|e| IoError::file(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| IoError::file(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn table_writes_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = CsvTable::create(&path, "a,b").unwrap();
        t.row(&["1".into(), "2".into()]).unwrap();
        t.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,2\n");
    }

    #[test]
    fn coefficient_dump_names_exponents() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let geom = rgbps_core::PatchGeometry::new(2, 1).unwrap();
        write_coefficients::<f64>(&path, &geom, &[&[0.5, -1.0]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "d0_1,d1_0\n0.5,-1\n");
    }

    #[test]
    fn float_formatting_is_shortest_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_cdf::<f64>(&path, &[(0.25, 0.1), (0.5, 1.0)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "error_deg,fraction\n0.25,0.1\n0.5,1\n");
    }
}
