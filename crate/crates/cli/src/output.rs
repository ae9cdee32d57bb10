//! Canonical JSON and CSV artifacts.
//!
//! Every float is written with 17 significant digits (`{:.16e}`) so that the
//! same inputs give byte-identical files. Field order follows declaration
//! order of the serialized structs.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::Failure;

/// Pretty printing with fixed-precision floats.
struct Canonical<'a>(PrettyFormatter<'a>);

impl Formatter for Canonical<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Canonical(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).map_err(|e| Failure::Io(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(buf)
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let io = |e: io::Error| Failure::Io(format!("cannot write {}: {e}", path.display()));
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn write_json<T: Serialize>(dir: &Path, stem: &str, value: &T) -> Result<PathBuf, Failure> {
    let path = dir.join(format!("{stem}.json"));
    write_atomic(&path, &to_canonical_json(value)?)?;
    Ok(path)
}

pub const SWEEP_CSV_HEADER: [&str; 7] = ["λ1", "λ2", "λ3", "In_lambda", "I1", "I2", "I3"];

/// One sweep row; failed rows leave the value columns empty.
pub struct CsvRow {
    pub lambda: [f64; 3],
    pub values: Option<[f64; 4]>,
}

pub fn sweep_csv(rows: &[CsvRow]) -> Result<Vec<u8>, Failure> {
    let fail = |e: csv::Error| Failure::Io(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_CSV_HEADER).map_err(fail)?;
    for row in rows {
        let mut fields: Vec<String> = row.lambda.iter().map(|v| format!("{v:.16e}")).collect();
        match row.values {
            Some(v) => fields.extend(v.iter().map(|x| format!("{x:.16e}"))),
            None => fields.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&fields).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Failure::Io(format!("csv: {e}")))
}
