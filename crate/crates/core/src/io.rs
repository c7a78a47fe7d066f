//! File formats: JSON for signals, observations, configs and reports; CSV
//! with a header row for arrays and solver histories. Every float is written
//! with 17 significant digits so output bytes are reproducible and lossless.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::array::{flat_index, multi_index, DataArray};
use crate::error::{invalid, Result};
use crate::solver::IterationRecord;

/// Formats `x` with 17 significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty JSON whose floats carry 17 significant digits; non-finite values
/// become `null`.
struct SigFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for SigFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(format_float(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
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

/// Serializes `value` as pretty JSON with fixed-precision floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, SigFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(reader)?)
}

/// Writes `index_1..index_K, re, im` rows in row-major order.
pub fn write_array_csv<W: Write>(writer: W, data: &DataArray) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=data.dims().len())
        .map(|k| format!("index_{k}"))
        .collect();
    header.extend(["re".into(), "im".into()]);
    w.write_record(&header)?;
    for (flat, z) in data.values().iter().enumerate() {
        let mut row: Vec<String> = multi_index(data.dims(), flat)
            .into_iter()
            .map(|i| i.to_string())
            .collect();
        row.push(format_float(z.re));
        row.push(format_float(z.im));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn array_csv_string(data: &DataArray) -> Result<String> {
    let mut buf = Vec::new();
    write_array_csv(&mut buf, data)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

pub fn write_array_csv_file(path: &Path, data: &DataArray) -> Result<()> {
    write_array_csv(BufWriter::new(File::create(path)?), data)
}

/// Reads an array written by [`write_array_csv`]. Dimensions are inferred
/// from the largest index on each axis; every entry must appear exactly once.
pub fn read_array_csv<R: Read>(reader: R) -> Result<DataArray> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let k = headers.len().checked_sub(2).filter(|&k| k > 0);
    let Some(k) = k else {
        return invalid("array CSV needs index columns followed by re, im");
    };
    if headers.get(k) != Some("re") || headers.get(k + 1) != Some("im") {
        return invalid("array CSV must end with columns re, im");
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse_idx = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| crate::Error::Validation(format!("bad index {s:?}")))
        };
        let parse_f = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| crate::Error::Validation(format!("bad number {s:?}")))
        };
        let idx = (0..k)
            .map(|j| parse_idx(&rec[j]))
            .collect::<Result<Vec<_>>>()?;
        rows.push((
            idx,
            Complex64::new(parse_f(&rec[k])?, parse_f(&rec[k + 1])?),
        ));
    }
    if rows.is_empty() {
        return invalid("array CSV has no rows");
    }
    let dims: Vec<usize> = (0..k)
        .map(|j| rows.iter().map(|(i, _)| i[j]).max().unwrap_or(0) + 1)
        .collect();
    let total: usize = dims.iter().product();
    if rows.len() != total {
        return invalid(format!(
            "expected {total} rows for dims {dims:?}, found {}",
            rows.len()
        ));
    }
    let mut values = vec![Complex64::new(f64::NAN, 0.0); total];
    let mut seen = vec![false; total];
    for (idx, z) in rows {
        let f = flat_index(&dims, &idx).expect("dims cover every index");
        if std::mem::replace(&mut seen[f], true) {
            return invalid(format!("duplicate entry {idx:?}"));
        }
        values[f] = z;
    }
    DataArray::from_vec(&dims, values)
}

pub fn read_array_csv_file(path: &Path) -> Result<DataArray> {
    read_array_csv(BufReader::new(File::open(path)?))
}

/// Writes `iter, tau, rank, rel_change` rows.
pub fn write_history_csv<W: Write>(writer: W, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iter", "tau", "rank", "rel_change"])?;
    for h in history {
        w.write_record([
            h.iter.to_string(),
            format_float(h.tau),
            h.rank.to_string(),
            format_float(h.rel_change),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows of pre-formatted cells under `header`.
pub fn write_table_csv<W: Write>(writer: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
