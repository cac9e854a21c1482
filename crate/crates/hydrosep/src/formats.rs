//! Events CSV and matrix CSV.
//!
//! Events: header `day,device,start_interval,duration,volumes`, one event per
//! row, `volumes` separated by `;`. Columns are found by header name, so
//! extra columns (an event id, say) are ignored and `duration` is optional.
//!
//! Matrices: a first line `#hydrosep-matrix v1 device=<id> N=<n> P=<p>`
//! followed by `N` rows of `P` comma-separated values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use hydrosep_core::{AggregateMatrix, ConsumptionMatrix, Device, EventRecord, Matrix};

use crate::error::{Error, Result};

pub const EVENTS_HEADER: &str = "day,device,start_interval,duration,volumes";
pub const MATRIX_MAGIC: &str = "#hydrosep-matrix";
pub const MATRIX_VERSION: &str = "v1";
/// Device label used for aggregate matrices.
pub const AGGREGATE_LABEL: &str = "aggregate";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

struct EventColumns {
    day: usize,
    device: usize,
    start: usize,
    duration: Option<usize>,
    volumes: usize,
}

impl EventColumns {
    fn locate(header: &csv::StringRecord, path: &Path) -> Result<Self> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
        };
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::schema(path, format!("events header lacks `{name}`")))
        };
        Ok(EventColumns {
            day: need("day")?,
            device: need("device")?,
            start: need("start_interval")?,
            duration: find("duration"),
            volumes: need("volumes")?,
        })
    }
}

/// Reads an events CSV; `label` names the source in error messages.
pub fn read_events_from(reader: impl Read, label: &Path) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(label, e))?.clone();
    let cols = EventColumns::locate(&header, label)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(label, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: label.to_path_buf(),
            line,
            message,
        };
        let field = |k: usize| row.get(k).unwrap_or("");
        let int = |k: usize, name: &str| {
            field(k).parse::<usize>().map_err(|_| {
                bad(format!(
                    "`{name}` is not a nonnegative integer: `{}`",
                    field(k)
                ))
            })
        };
        let day = int(cols.day, "day")?;
        let start = int(cols.start, "start_interval")?;
        let device: Device = field(cols.device)
            .parse()
            .map_err(|e: hydrosep_core::Error| bad(e.to_string()))?;
        let volumes = field(cols.volumes)
            .split(';')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| bad(format!("malformed volumes `{}`", field(cols.volumes))))?;
        if let Some(k) = cols.duration {
            let duration = int(k, "duration")?;
            if duration != volumes.len() {
                return Err(bad(format!(
                    "duration {duration} but {} volumes",
                    volumes.len()
                )));
            }
        }
        let event =
            EventRecord::new(device, day, start, volumes).map_err(|e| bad(e.to_string()))?;
        out.push(event);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    read_events_from(open(path)?, path)
}

pub fn write_events(path: &Path, events: &[EventRecord]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{EVENTS_HEADER}").map_err(io)?;
    for ev in events {
        let vols: Vec<String> = ev.volumes.iter().map(f64::to_string).collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            ev.day,
            ev.device,
            ev.start_interval,
            ev.volumes.len(),
            vols.join(";")
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `m` with a matrix header naming `label`.
pub fn write_matrix(path: &Path, label: &str, m: &Matrix) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "{MATRIX_MAGIC} {MATRIX_VERSION} device={label} N={} P={}",
        m.rows(),
        m.cols()
    )
    .map_err(io)?;
    let mut line = String::new();
    for i in 0..m.rows() {
        line.clear();
        for p in 0..m.cols() {
            if p > 0 {
                line.push(',');
            }
            line.push_str(&m.get(i, p).to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a matrix file, returning its label and values.
pub fn read_matrix(path: &Path) -> Result<(String, Matrix)> {
    let mut lines = BufReader::new(open(path)?).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::schema(path, "empty matrix file")),
    };
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MATRIX_MAGIC) {
        return Err(Error::schema(path, "missing `#hydrosep-matrix` header"));
    }
    match parts.next() {
        Some(MATRIX_VERSION) => {}
        other => {
            return Err(Error::schema(
                path,
                format!("unsupported matrix version {}", other.unwrap_or("<none>")),
            ))
        }
    }
    let (mut label, mut n, mut p) = (None, None, None);
    for kv in parts {
        match kv.split_once('=') {
            Some(("device", v)) => label = Some(v.to_string()),
            Some(("N", v)) => n = v.parse::<usize>().ok(),
            Some(("P", v)) => p = v.parse::<usize>().ok(),
            _ => {
                return Err(Error::schema(
                    path,
                    format!("unexpected header field `{kv}`"),
                ))
            }
        }
    }
    let (Some(label), Some(n), Some(p)) = (label, n, p) else {
        return Err(Error::schema(path, "header needs device, N and P"));
    };
    let mut m = Matrix::zeros(n, p);
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = k as u64 + 2;
        if rows == n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("more than N={n} rows"),
            });
        }
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != p {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("expected P={p} values, found {}", vals.len()),
            });
        }
        for (col, v) in vals.iter().enumerate() {
            let x: f64 = v.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("not a number: `{v}`"),
            })?;
            m.set(rows, col, x);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::schema(
            path,
            format!("expected N={n} rows, found {rows}"),
        ));
    }
    Ok((label, m))
}

pub fn read_consumption(path: &Path) -> Result<ConsumptionMatrix> {
    let (label, m) = read_matrix(path)?;
    let device: Device = label.parse()?;
    Ok(ConsumptionMatrix::new(device, m)?)
}

pub fn read_aggregate(path: &Path) -> Result<AggregateMatrix> {
    let (_, values) = read_matrix(path)?;
    Ok(AggregateMatrix { values })
}

/// Writes a headed CSV from string rows.
pub fn write_rows(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for r in rows {
        writeln!(w, "{r}").map_err(io)?;
    }
    w.flush().map_err(io)
}
