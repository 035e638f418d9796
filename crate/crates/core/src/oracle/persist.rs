use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Action;

use super::Policy;

const HASH_PREFIX: &str = "# config_hash=";

/// Which index a value CSV is keyed by.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    State,
    Alloc,
}

impl TableKind {
    fn column(self) -> &'static str {
        match self {
            TableKind::State => "state_index",
            TableKind::Alloc => "alloc_index",
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub(crate) fn write_with_header(path: &Path, hash: &str, columns: &str, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let text = format!("{HASH_PREFIX}{hash}\n{columns}\n{body}");
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Returns the data lines after checking the hash line and column header.
fn read_with_header(path: &Path, expected_hash: &str, columns: &str) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let found = lines
        .next()
        .and_then(|l| l.strip_prefix(HASH_PREFIX))
        .ok_or_else(|| csv_err(path, "missing config hash line"))?;
    if found != expected_hash {
        return Err(Error::HashMismatch {
            found: found.to_string(),
            expected: expected_hash.to_string(),
        });
    }
    match lines.next() {
        Some(h) if h == columns => {}
        other => return Err(csv_err(path, format!("expected header `{columns}`, got {other:?}"))),
    }
    Ok(lines.filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn parse_pairs(path: &Path, lines: &[String]) -> Result<Vec<(usize, String)>> {
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let (idx, val) = line
                .split_once(',')
                .ok_or_else(|| csv_err(path, format!("line {}: expected two fields", i + 3)))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| csv_err(path, format!("line {}: bad index `{idx}`", i + 3)))?;
            if idx != i {
                return Err(csv_err(path, format!("line {}: index {idx} out of order", i + 3)));
            }
            Ok((idx, val.to_string()))
        })
        .collect()
}

/// `index,value` rows under a config-hash line.
pub fn write_table_csv(path: impl AsRef<Path>, hash: &str, kind: TableKind, values: &[f64]) -> Result<()> {
    let mut body = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        writeln!(body, "{i},{v:?}").unwrap();
    }
    write_with_header(path.as_ref(), hash, &format!("{},value", kind.column()), &body)
}

pub fn read_table_csv(path: impl AsRef<Path>, expected_hash: &str, kind: TableKind) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let lines = read_with_header(path, expected_hash, &format!("{},value", kind.column()))?;
    parse_pairs(path, &lines)?
        .into_iter()
        .map(|(i, v)| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| csv_err(path, format!("row {i}: bad value `{v}`")))
        })
        .collect()
}

pub fn write_policy_csv(path: impl AsRef<Path>, hash: &str, policy: &Policy) -> Result<()> {
    let mut body = String::with_capacity(policy.actions.len() * 8);
    for (i, a) in policy.actions.iter().enumerate() {
        writeln!(body, "{i},{a}").unwrap();
    }
    write_with_header(path.as_ref(), hash, "state_index,action", &body)
}

pub fn read_policy_csv(path: impl AsRef<Path>, expected_hash: &str) -> Result<Policy> {
    let path = path.as_ref();
    let lines = read_with_header(path, expected_hash, "state_index,action")?;
    let actions = parse_pairs(path, &lines)?
        .into_iter()
        .map(|(i, v)| {
            v.parse::<usize>()
                .map(Action)
                .map_err(|_| csv_err(path, format!("row {i}: bad action `{v}`")))
        })
        .collect::<Result<_>>()?;
    Ok(Policy { actions })
}
