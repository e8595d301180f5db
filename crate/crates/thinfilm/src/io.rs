//! File formats: diagnostics CSV, field CSV and the STFM binary snapshot.
//!
//! STFM layout, all little-endian:
//!
//! | bytes | content            |
//! |-------|--------------------|
//! | 4     | magic `STFM`       |
//! | 2     | version (u16) = 1  |
//! | 4     | M (u32)            |
//! | 8     | L (f64)            |
//! | 8·M   | values (f64)       |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thinfilm_core::{DiagnosticsRecord, Field};

use crate::error::{Error, Result};

pub const DIAGNOSTICS_HEADER: [&str; 7] = ["t", "mass", "l2", "h1", "dx_l2", "min", "energy_residual"];
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"STFM";
pub const SNAPSHOT_VERSION: u16 = 1;

/// Shortest round-trip scientific notation, so output bytes depend only on
/// the value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format { path: path.to_path_buf(), reason: e.to_string() }
}

/// Streams diagnostics rows under the fixed header. An absent energy
/// residual is written as an empty cell.
pub struct DiagnosticsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl DiagnosticsWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(Error::io(path))?;
        DiagnosticsWriter::new(BufWriter::new(file)).map_err(csv_error(path))
    }
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(w: W) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(DIAGNOSTICS_HEADER)?;
        Ok(DiagnosticsWriter { inner })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> csv::Result<()> {
        let residual = rec.energy_residual.map(fmt_f64).unwrap_or_default();
        self.inner.write_record([
            fmt_f64(rec.t),
            fmt_f64(rec.mass),
            fmt_f64(rec.l2),
            fmt_f64(rec.h1),
            fmt_f64(rec.dx_l2),
            fmt_f64(rec.min_value),
            residual,
        ])
    }

    pub fn finish(mut self) -> csv::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error().into())
    }
}

/// Rows `x,value` under a header.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["x", "value"])?;
        for (i, v) in field.values().iter().enumerate() {
            w.write_record([fmt_f64(field.x(i)), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(csv_error(path))
}

pub fn encode_snapshot(field: &Field) -> Vec<u8> {
    let mut out = Vec::with_capacity(18 + 8 * field.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(field.len() as u32).to_le_bytes());
    out.extend_from_slice(&field.length().to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> std::result::Result<Field, String> {
    if bytes.len() < 18 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err("not an STFM snapshot".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SNAPSHOT_VERSION {
        return Err(format!("unsupported snapshot version {version}"));
    }
    let m = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let length = f64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let payload = &bytes[18..];
    if payload.len() != 8 * m {
        return Err(format!("header announces {m} values, payload holds {} bytes", payload.len()));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Field::new(values, length).map_err(|e| e.to_string())
}

pub fn write_snapshot(path: &Path, field: &Field) -> Result<()> {
    std::fs::write(path, encode_snapshot(field)).map_err(Error::io(path))
}

pub fn read_snapshot(path: &Path) -> Result<Field> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode_snapshot(&bytes).map_err(|reason| Error::Format { path: path.to_path_buf(), reason })
}

/// Grid values from an STFM snapshot or a CSV file. CSV files may have one
/// column (value) or two (x, value), with or without a header row.
pub fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = vec![];
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(Error::io(path))?;
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    if bytes.starts_with(SNAPSHOT_MAGIC) {
        return decode_snapshot(&bytes).map(Field::into_values).map_err(bad);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(&bytes[..]);
    let mut values = vec![];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let cell = match rec.len() {
            1 => &rec[0],
            2 => &rec[1],
            n => return Err(bad(format!("row {}: expected 1 or 2 columns, found {n}", row + 1))),
        };
        match cell.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if row == 0 => {}
            Err(_) => return Err(bad(format!("row {}: `{cell}` is not a number", row + 1))),
        }
    }
    if values.is_empty() {
        return Err(bad("no values".into()));
    }
    Ok(values)
}
