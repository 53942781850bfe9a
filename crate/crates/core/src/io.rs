use std::io::{Read, Write};

use crate::data::DistanceMatrix;
use crate::error::{Error, Result};

/// Symmetry/zero-diagonal slack when accepting user-supplied tables.
const TABLE_TOL: f64 = 1e-9;

fn parse_cell(field: &str, row: usize, col: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| {
        Error::Config(format!("row {}, column {}: not a number: {field:?}", row + 1, col + 1))
    })
}

/// One observation per row, columns = coordinates. All rows must share a
/// width; `has_header` skips the first line.
pub fn read_points<R: Read>(reader: R, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let mut point = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            point.push(parse_cell(field, row, col)?);
        }
        points.push(point);
    }
    Ok(points)
}

/// Writes points as CSV; `header` emits c1..cp column names.
pub fn write_points<W: Write>(writer: W, points: &[Vec<f64>], header: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if header {
        let dim = points.first().map_or(0, Vec::len);
        w.write_record((1..=dim).map(|i| format!("c{i}")))?;
    }
    let mut buf = Vec::new();
    for p in points {
        buf.clear();
        buf.extend(p.iter().map(|v| {
            // Shortest round-trip form; full precision survives re-reading.
            format!("{v}")
        }));
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Square matrix of precomputed distances, validated symmetric with a zero
/// diagonal within 1e−9.
pub fn read_distance_table<R: Read>(reader: R, has_header: bool) -> Result<DistanceMatrix> {
    let rows = read_points(reader, has_header)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        let got = rows.iter().map(Vec::len).max().unwrap_or(0);
        return Err(Error::BadDistanceTable {
            reason: format!("expected a square {n}×{n} matrix, widest row has {got} columns"),
        });
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    DistanceMatrix::from_table(n, flat, TABLE_TOL)
}
