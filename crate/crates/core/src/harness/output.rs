use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::{BenchRow, BoundRow, CommRow, RunResult};
use crate::error::{Error, Result};
use crate::federation::{RoundRecord, ROUNDS_CSV_HEADER};

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, body: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

pub fn rounds_csv(records: &[RoundRecord], config_hash: &str) -> String {
    let mut out = format!("{ROUNDS_CSV_HEADER},config_hash\n");
    for r in records {
        let _ = writeln!(out, "{},{config_hash}", r.csv_row());
    }
    out
}

/// `rounds.csv` and `summary.json` for one run.
pub fn write_run(dir: &Path, run: &RunResult) -> Result<()> {
    let hash = &run.summary.config_hash;
    write_atomic(
        &dir.join("rounds.csv"),
        rounds_csv(&run.outcome.records, hash).as_bytes(),
    )?;
    let json = serde_json::to_string_pretty(&run.summary)?;
    write_atomic(&dir.join("summary.json"), json.as_bytes())
}

pub fn comm_csv(rows: &[CommRow], config_hash: &str) -> String {
    let mut out = String::from(
        "seed,hops,iid_fraction,measured_upload,measured_download,measured_total,measured_bytes,\
         counted_total,exact_expected,approx_expected,exact_ratio,approx_ratio,config_hash\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{config_hash}",
            r.seed,
            r.hops,
            r.iid_fraction,
            r.measured_upload,
            r.measured_download,
            r.measured_total(),
            r.measured_bytes,
            r.counted_total,
            opt(r.exact_expected),
            opt(r.approx_expected),
            opt(r.exact_ratio()),
            opt(r.approx_ratio()),
        );
    }
    out
}

pub fn bounds_csv(rows: &[BoundRow], config_hash: &str) -> String {
    let mut out = String::from(
        "hops,expected_bound,valid,empirical_gap_mean,empirical_gap_std,config_hash\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{config_hash}",
            r.hops,
            opt(r.expected_bound),
            r.valid.map_or_else(String::new, |v| v.to_string()),
            r.empirical_gap_mean,
            r.empirical_gap_std,
        );
    }
    out
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "elements,clients,plain_bytes,masked_bytes,bgv_bytes,ckks_bytes,bgv_packed_bytes,seconds,elements_per_second\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6},{:.1}",
            r.elements,
            r.clients,
            r.plain_bytes,
            r.masked_bytes,
            r.bgv_bytes,
            r.ckks_bytes,
            r.bgv_packed_bytes,
            r.seconds,
            r.elements_per_second
        );
    }
    out
}
