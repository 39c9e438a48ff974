//! Trace CSV files and JSON summaries.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sol_landing::driver::IterTrace;

pub const TRACE_HEADER: [&str; 8] = [
    "iter",
    "time_s",
    "f_value",
    "grad_norm",
    "feas",
    "step_size",
    "inner_iters",
    "inner_residual",
];

/// `{:e}` gives the shortest representation that round-trips, so equal
/// values always print the same bytes.
pub fn float(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_trace(path: &Path, traces: &[IterTrace]) -> Result<()> {
    write_csv(
        path,
        &TRACE_HEADER,
        traces.iter().map(|t| {
            vec![
                t.iter.to_string(),
                float(t.wall_time_s),
                float(t.f_value),
                float(t.grad_norm),
                float(t.feas),
                float(t.step_size),
                t.inner_iters.to_string(),
                float(t.inner_residual),
            ]
        }),
    )
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    out.write_record(header)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Creates `dir` if needed and returns `dir/{stem}{suffix}`.
pub fn output_path(dir: &Path, stem: &str, suffix: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir.join(format!("{stem}{suffix}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iter: usize, feas: f64) -> IterTrace {
        IterTrace {
            iter,
            f_value: -1.25,
            grad_norm: 3e-13,
            feas,
            step_size: 1.0,
            inner_iters: 7,
            inner_residual: 1e-20,
            wall_time_s: 0.5,
            rhs_norm: 0.0,
            inner_tol: 0.0,
            inner_failure: false,
        }
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.0, 1.0, -2.5e-300, 0.1 + 0.2, f64::MAX, 1e-13] {
            assert_eq!(float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn trace_file_has_header_and_one_row_per_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = output_path(&dir.path().join("nested"), "run", ".csv").unwrap();
        write_trace(&path, &[row(0, 0.0), row(1, 2e-3)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], TRACE_HEADER.join(","));
        assert_eq!(lines[2], "1,5e-1,-1.25e0,3e-13,2e-3,1e0,7,1e-20");
    }
}
