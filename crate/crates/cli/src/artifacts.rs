//! Atomic artifact writes and CSV shaping.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gtdyn_core::dynamics::{TraceRecord, Verdict};
use gtdyn_core::Result;

/// Writes through a sibling temp file and a rename, so a reader never sees
/// a half-written artifact at the final path and re-runs overwrite cleanly.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp_name = OsString::from(path.as_os_str());
    tmp_name.push(".tmp");
    let tmp = PathBuf::from(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Verdict spelling shared by CSV artifacts and the JSON encoding.
pub fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Converged => "converged",
        Verdict::Diverged => "diverged",
        Verdict::TimedOut => "timed-out",
    }
}

/// Trace rows as CSV. The residual column stays empty when no optimum was
/// supplied; per-node state columns `x{node}_{coord}` appear when the run
/// recorded states.
pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("k,residual,disagreement,grad_sum_norm,y_sum_norm");
    let states = trace.first().and_then(|r| r.x.as_ref());
    if let Some(x) = states {
        for i in 0..x.nrows() {
            for d in 0..x.ncols() {
                out.push_str(&format!(",x{i}_{d}"));
            }
        }
    }
    out.push('\n');
    for r in trace {
        out.push_str(&r.k.to_string());
        out.push(',');
        if let Some(res) = r.residual {
            out.push_str(&res.to_string());
        }
        out.push_str(&format!(
            ",{},{},{}",
            r.disagreement, r.grad_sum_norm, r.y_sum_norm
        ));
        if let Some(x) = &r.x {
            for i in 0..x.nrows() {
                for d in 0..x.ncols() {
                    out.push_str(&format!(",{}", x[(i, d)]));
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn atomic_write_overwrites_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![OsString::from("out.txt")]);
    }

    #[test]
    fn trace_csv_round_trips_floats_exactly() {
        let trace = vec![TraceRecord {
            k: 3,
            residual: Some(0.1 + 0.2),
            disagreement: 1.0 / 3.0,
            grad_sum_norm: 2e-17,
            y_sum_norm: 0.0,
            x: None,
        }];
        let csv = trace_to_csv(&trace);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,residual,disagreement,grad_sum_norm,y_sum_norm"
        );
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields[0], "3");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(fields[2].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(fields[3].parse::<f64>().unwrap(), 2e-17);
    }

    #[test]
    fn state_columns_follow_the_header_order() {
        let trace = vec![TraceRecord {
            k: 0,
            residual: None,
            disagreement: 0.5,
            grad_sum_norm: 0.25,
            y_sum_norm: 0.125,
            x: Some(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])),
        }];
        let csv = trace_to_csv(&trace);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,residual,disagreement,grad_sum_norm,y_sum_norm,x0_0,x0_1,x1_0,x1_1"
        );
        assert_eq!(lines.next().unwrap(), "0,,0.5,0.25,0.125,1,2,3,4");
    }
}
