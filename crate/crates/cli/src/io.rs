//! Snapshot, truth and summary files.
//!
//! Text snapshots are CSV with one row per tick: `t, re_0, im_0, ...,
//! re_{m-1}, im_{m-1}`. Binary snapshots are little-endian: the magic
//! `STSN`, `u32` version, `u32` m, `u32` T, then T·m `(f64 re, f64 im)`
//! pairs in tick-major order; ticks are numbered 1..=T. Floats are written
//! with 17 significant digits so values round-trip exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use spicetrack::{CVector, Complex64, HyperState, Snapshot, SourceElement};

use crate::CliError;

pub const MAGIC: &[u8; 4] = b"STSN";
pub const VERSION: u32 = 1;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// CSV writer whose file starts with the resolved config, one `# ` line each.
pub fn csv_writer(path: &Path, echo: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut buf = BufWriter::new(file);
    for line in echo.lines() {
        writeln!(buf, "# {line}").map_err(|e| io_err(path, e))?;
    }
    Ok(csv::WriterBuilder::new().flexible(true).from_writer(buf))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_err(path, e))
}

pub fn write_row<W: Write>(w: &mut csv::Writer<W>, row: &[String], path: &Path) -> Result<(), CliError> {
    w.write_record(row).map_err(|e| io_err(path, e))
}

pub fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_snapshots_csv(path: &Path, snapshots: &[Snapshot], echo: &str) -> Result<(), CliError> {
    let m = snapshots.first().map_or(0, Snapshot::len);
    let mut w = csv_writer(path, echo)?;
    let mut header = vec!["t".to_string()];
    for k in 0..m {
        header.push(format!("re_{k}"));
        header.push(format!("im_{k}"));
    }
    write_row(&mut w, &header, path)?;
    for s in snapshots {
        let mut row = vec![s.t.to_string()];
        for v in s.x.iter() {
            row.push(fmt(v.re));
            row.push(fmt(v.im));
        }
        write_row(&mut w, &row, path)?;
    }
    finish(w, path)
}

fn parse_num<T: std::str::FromStr>(field: &str, path: &Path, what: &str) -> Result<T, CliError> {
    field
        .trim()
        .parse()
        .map_err(|_| io_err(path, format!("bad {what} `{field}`")))
}

pub fn read_snapshots_csv(path: &Path) -> Result<Vec<Snapshot>, CliError> {
    let mut r = csv_reader(path)?;
    let mut out: Vec<Snapshot> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        if rec.len() % 2 == 0 {
            return Err(io_err(path, "row needs t followed by (re, im) pairs"));
        }
        let t = parse_num(&rec[0], path, "tick")?;
        let vals: Vec<f64> = rec.iter().skip(1).map(|f| parse_num(f, path, "value")).collect::<Result<_, _>>()?;
        let x = CVector::from_iterator(vals.len() / 2, vals.chunks(2).map(|p| Complex64::new(p[0], p[1])));
        if out.first().is_some_and(|s| s.len() != x.len()) {
            return Err(io_err(path, format!("tick {t} has a different sensor count")));
        }
        out.push(Snapshot::new(t, x));
    }
    Ok(out)
}

pub fn write_snapshots_bin(path: &Path, snapshots: &[Snapshot]) -> Result<(), CliError> {
    let m = snapshots.first().map_or(0, Snapshot::len);
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| io_err(path, e));
    put(MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&(m as u32).to_le_bytes())?;
    put(&(snapshots.len() as u32).to_le_bytes())?;
    for s in snapshots {
        for v in s.x.iter() {
            put(&v.re.to_le_bytes())?;
            put(&v.im.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_snapshots_bin(path: &Path) -> Result<Vec<Snapshot>, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut word = [0u8; 4];
    let mut get_u32 = |r: &mut BufReader<File>| -> Result<u32, CliError> {
        r.read_exact(&mut word).map_err(|e| io_err(path, e))?;
        Ok(u32::from_le_bytes(word))
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != MAGIC {
        return Err(io_err(path, "not a snapshot file"));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(io_err(path, format!("unsupported version {version}")));
    }
    let m = get_u32(&mut r)? as usize;
    let ticks = get_u32(&mut r)? as usize;
    let mut f = [0u8; 8];
    let mut next = |r: &mut BufReader<File>| -> Result<f64, CliError> {
        r.read_exact(&mut f).map_err(|e| io_err(path, e))?;
        Ok(f64::from_le_bytes(f))
    };
    (1..=ticks)
        .map(|t| {
            let mut x = CVector::zeros(m);
            for v in x.iter_mut() {
                *v = Complex64::new(next(&mut r)?, next(&mut r)?);
            }
            Ok(Snapshot::new(t, x))
        })
        .collect()
}

/// Reads either format, choosing binary by the magic bytes.
pub fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>, CliError> {
    let mut head = [0u8; 4];
    let binary = File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map(|_| &head == MAGIC)
        .unwrap_or(false);
    if binary {
        read_snapshots_bin(path)
    } else {
        read_snapshots_csv(path)
    }
}

/// One row per element: `t, n, theta, intensity`; a tick without elements
/// gets one row with empty angle and intensity.
pub fn write_states(path: &Path, states: &[(usize, &HyperState)], echo: &str, label: Option<&str>) -> Result<(), CliError> {
    let mut w = csv_writer(path, echo)?;
    let mut header: Vec<String> = ["t", "n", "theta", "intensity"].map(String::from).to_vec();
    if label.is_some() {
        header.insert(0, "algorithm".into());
    }
    write_row(&mut w, &header, path)?;
    for (t, state) in states {
        let base = |w: &mut csv::Writer<_>, theta: String, intensity: String| {
            let mut row = vec![t.to_string(), state.len().to_string(), theta, intensity];
            if let Some(l) = label {
                row.insert(0, l.to_string());
            }
            write_row(w, &row, path)
        };
        if state.is_empty() {
            base(&mut w, String::new(), String::new())?;
        }
        for e in state.iter() {
            base(&mut w, fmt(e.theta), fmt(e.intensity))?;
        }
    }
    finish(w, path)
}

/// Reads a truth file written by [`write_states`] without a label column.
pub fn read_truth(path: &Path) -> Result<Vec<HyperState>, CliError> {
    let mut r = csv_reader(path)?;
    let mut ticks: Vec<(usize, Vec<SourceElement>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        if rec.len() != 4 {
            return Err(io_err(path, "expected columns t, n, theta, intensity"));
        }
        let t: usize = parse_num(&rec[0], path, "tick")?;
        if ticks.last().map_or(true, |(last, _)| *last != t) {
            ticks.push((t, Vec::new()));
        }
        if !rec[2].trim().is_empty() {
            let theta = parse_num(&rec[2], path, "angle")?;
            let intensity = parse_num(&rec[3], path, "intensity")?;
            ticks.last_mut().unwrap().1.push(SourceElement::new(theta, intensity));
        }
    }
    ticks
        .into_iter()
        .map(|(_, e)| HyperState::new(e).map_err(|e| io_err(path, e)))
        .collect()
}
