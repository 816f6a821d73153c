//! CSV/JSON export of simulation diagnostics.

use std::fs;
use std::path::Path;

use super::runner::SimulationOutcome;
use crate::error::{Error, Result};
use crate::normal::normal_quantile;

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

fn write_csv(path: &Path, header: [&str; 2], rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for (a, b) in rows {
        w.write_record([a.to_string(), b.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `qq.csv`, `pval_cdf.csv` and `metrics.json` into `dir`.
///
/// `qq.csv` pairs normal quantiles at plotting positions `(i − ½)/m` with the
/// sorted standardized residuals; `pval_cdf.csv` pairs sorted null p-values
/// with their empirical CDF `i/m`.
pub fn export_diagnostics(outcome: &SimulationOutcome, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if outcome.is_empty() || outcome.z_samples.is_empty() {
        return Err(Error::Input("simulation outcome has no successful replicates to export".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let z = sorted(&outcome.z_samples);
    let m = z.len() as f64;
    let theoretical = (0..z.len())
        .map(|i| normal_quantile((i as f64 + 0.5) / m))
        .collect::<Result<Vec<f64>>>()?;
    write_csv(&dir.join("qq.csv"), ["theoretical", "sample"], theoretical.into_iter().zip(z))?;

    let pv = sorted(&outcome.pvals_null);
    let k = pv.len() as f64;
    write_csv(
        &dir.join("pval_cdf.csv"),
        ["p_value", "ecdf"],
        pv.into_iter().enumerate().map(|(i, p)| (p, (i + 1) as f64 / k)),
    )?;

    let path = dir.join("metrics.json");
    let json = serde_json::to_string_pretty(outcome)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}
