use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::oracle::persist::write_with_header;

use super::experiment::AggregateRow;
use super::metrics::MetricsRow;

pub const METRICS_COLUMNS: &str = "run_id,algo,phase,iteration,rbe,avg_cost,blocked_cumulative";
pub const AGGREGATE_COLUMNS: &str =
    "algo,phase,iteration,rbe_mean,rbe_stderr,avg_cost_mean,avg_cost_stderr,blocked_mean,blocked_stderr";

pub fn metrics_csv_body(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 64);
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:?},{:?},{}",
            r.run_id, r.algo, r.phase, r.iteration, r.rbe, r.avg_cost, r.blocked_cumulative
        )
        .unwrap();
    }
    out
}

pub fn write_metrics_csv(path: impl AsRef<Path>, hash: &str, rows: &[MetricsRow]) -> Result<()> {
    write_with_header(path.as_ref(), hash, METRICS_COLUMNS, &metrics_csv_body(rows))
}

pub fn write_aggregate_csv(path: impl AsRef<Path>, hash: &str, rows: &[AggregateRow]) -> Result<()> {
    let mut body = String::with_capacity(rows.len() * 128);
    for r in rows {
        writeln!(
            body,
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.algo,
            r.phase,
            r.iteration,
            r.rbe_mean,
            r.rbe_stderr,
            r.avg_cost_mean,
            r.avg_cost_stderr,
            r.blocked_mean,
            r.blocked_stderr
        )
        .unwrap();
    }
    write_with_header(path.as_ref(), hash, AGGREGATE_COLUMNS, &body)
}
