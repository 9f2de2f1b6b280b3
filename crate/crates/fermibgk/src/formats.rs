//! On-disk formats.
//!
//! **Time series** (`timeseries.csv`): one `#` comment line with the scenario
//! and seed, then a CSV header and one row per diagnostic record, columns as
//! in [`DiagnosticRecord::COLUMNS`]. Floats use the shortest representation
//! that round-trips, so identical runs give identical bytes.
//!
//! **Snapshot** (`*.bin`): one ASCII header line terminated by `\n`,
//!
//! ```text
//! fermibgk-snapshot v1 n_x=32 n_p=24 n_v=13824 p_max=6 length=8 time=0.5 order=x-major
//! ```
//!
//! followed by `n_x·n_v` little-endian `f64` values of `F`, all velocity
//! nodes of cell 0 first. Velocity nodes run `p₁` slowest, `p₃` fastest.
//!
//! **Key-value** (`*.kv`): `key = value` per line, `#` comments.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use fermibgk_core::diagnostics::DiagnosticRecord;
use fermibgk_core::{PhaseGrid, PhaseState};

use crate::error::{AppError, AppResult};

const SNAPSHOT_MAGIC: &str = "fermibgk-snapshot";

/// Streams diagnostic records into a CSV file.
pub struct SeriesWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl SeriesWriter<BufWriter<File>> {
    pub fn create(path: &Path, comment: &str) -> AppResult<Self> {
        let file = File::create(path).map_err(|e| AppError::io(path.display(), e))?;
        Self::new(BufWriter::new(file), comment).map_err(|e| AppError::io(path.display(), e))
    }
}

impl<W: Write> SeriesWriter<W> {
    pub fn new(mut out: W, comment: &str) -> std::io::Result<Self> {
        writeln!(out, "# {comment}")?;
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(DiagnosticRecord::COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, r: &DiagnosticRecord) -> std::io::Result<()> {
        self.inner.write_record(r.values().iter().map(|v| v.to_string()))?;
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

/// Reads a time-series CSV back into named columns.
pub fn read_series(path: &Path) -> AppResult<BTreeMap<String, Vec<f64>>> {
    let file = File::open(path).map_err(|e| AppError::io(path.display(), e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut cols: BTreeMap<String, Vec<f64>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for row in rdr.records() {
        let row = row.map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        for (h, field) in headers.iter().zip(row.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|e| AppError::Config(format!("{}: column {h}: {e}", path.display())))?;
            cols.get_mut(h).expect("header present").push(v);
        }
    }
    Ok(cols)
}

pub fn write_snapshot(path: &Path, grid: &PhaseGrid, s: &PhaseState) -> AppResult<()> {
    let io = |e| AppError::io(path.display(), e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(
        out,
        "{SNAPSHOT_MAGIC} v1 n_x={} n_p={} n_v={} p_max={} length={} time={} order=x-major",
        grid.spatial.cells(),
        grid.velocity.points_per_axis(),
        grid.velocity.len(),
        grid.velocity.p_max(),
        grid.spatial.length(),
        s.time,
    )
    .map_err(io)?;
    for v in s.values() {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// A snapshot read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub n_x: usize,
    pub n_p: usize,
    pub p_max: f64,
    pub length: f64,
    pub time: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    /// Rebuilds the grid and state.
    pub fn into_state(self) -> AppResult<(PhaseGrid, PhaseState)> {
        let grid = PhaseGrid::new(
            fermibgk_core::VelocityGrid::new(self.p_max, self.n_p)?,
            fermibgk_core::SpatialGrid::new(self.length, self.n_x)?,
        );
        let mut s = PhaseState::new(&grid, self.values)?;
        s.time = self.time;
        Ok((grid, s))
    }
}

pub fn read_snapshot(path: &Path) -> AppResult<Snapshot> {
    let bad = |msg: &str| AppError::Config(format!("{}: {msg}", path.display()));
    let file = File::open(path).map_err(|e| AppError::io(path.display(), e))?;
    let mut rdr = BufReader::new(file);
    let mut header = String::new();
    rdr.read_line(&mut header).map_err(|e| AppError::io(path.display(), e))?;
    let mut words = header.split_whitespace();
    if words.next() != Some(SNAPSHOT_MAGIC) || words.next() != Some("v1") {
        return Err(bad("not a v1 snapshot"));
    }
    let fields: BTreeMap<&str, &str> = words.filter_map(|w| w.split_once('=')).collect();
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("header lacks {k}")));
    let num = |k: &str| -> AppResult<f64> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
    let int = |k: &str| -> AppResult<usize> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
    let (n_x, n_p, n_v) = (int("n_x")?, int("n_p")?, int("n_v")?);
    if n_v != n_p * n_p * n_p {
        return Err(bad("n_v != n_p^3"));
    }
    let mut bytes = Vec::new();
    rdr.read_to_end(&mut bytes).map_err(|e| AppError::io(path.display(), e))?;
    if bytes.len() != n_x * n_v * 8 {
        return Err(bad("payload length does not match the header"));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Snapshot {
        n_x,
        n_p,
        p_max: num("p_max")?,
        length: num("length")?,
        time: num("time")?,
        values,
    })
}

/// Ordered `key = value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues(pub Vec<(String, String)>);

impl KeyValues {
    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        KeyValues(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect(),
        )
    }
}

pub fn write_text(path: &Path, text: &str) -> AppResult<()> {
    std::fs::write(path, text).map_err(|e| AppError::io(path.display(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fermibgk_core::{SpatialGrid, VelocityGrid};

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = PhaseGrid::new(VelocityGrid::new(3.0, 4).unwrap(), SpatialGrid::new(2.0, 3).unwrap());
        let values: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.013).sin().abs()).collect();
        let mut s = PhaseState::new(&grid, values).unwrap();
        s.time = 0.125;
        let path = dir.path().join("s.bin");
        write_snapshot(&path, &grid, &s).unwrap();
        let snap = read_snapshot(&path).unwrap();
        let (g2, s2) = snap.into_state().unwrap();
        assert_eq!(g2, grid);
        assert_eq!(s2, s);
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        std::fs::write(&path, "fermibgk-snapshot v1 n_x=1 n_p=2 n_v=8 p_max=1 length=1 time=0 order=x-major\n1234").unwrap();
        assert!(read_snapshot(&path).is_err());
    }

    #[test]
    fn key_values_round_trip() {
        let mut kv = KeyValues::default();
        kv.push("rate", 0.5).push("r_squared", 0.999);
        let back = KeyValues::parse(&format!("# header\n{}", kv.render()));
        assert_eq!(back, kv);
        assert_eq!(back.get("rate"), Some("0.5"));
    }
}
