//! CSV formats.
//!
//! Curves: the first row holds the grid abscissae, each further row one
//! curve evaluated on that grid. Responses: a `y,observed` header, then one
//! row per curve with `observed` in `{0, 1}` (also `true`/`false`); a missing
//! response is written `NA` and read from `NA` or an empty field.
//!
//! Parse errors carry the 1-based line number of the offending row.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::functional::{FunctionalSample, Grid};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_number(field: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("invalid number '{}' in column {column}", field.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value '{}' in column {column}", field.trim())));
    }
    Ok(v)
}

/// Nonblank lines with their 1-based line numbers.
fn lines(reader: impl Read) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if !line.trim().is_empty() {
            out.push((i + 1, line.to_string()));
        }
    }
    Ok(out)
}

pub fn read_curves(reader: impl Read) -> Result<FunctionalSample> {
    let rows = lines(reader)?;
    let Some((first_line, header)) = rows.first() else {
        return Err(parse_err(1, "empty curve file"));
    };
    let points = header
        .split(',')
        .enumerate()
        .map(|(c, f)| parse_number(f, *first_line, c + 1))
        .collect::<Result<Vec<f64>>>()?;
    let grid = Grid::new(points).map_err(|e| parse_err(*first_line, e.to_string()))?;
    let m = grid.len();
    if rows.len() < 2 {
        return Err(parse_err(*first_line, "no curves after the grid row"));
    }
    let mut values = Vec::with_capacity((rows.len() - 1) * m);
    for (line, text) in &rows[1..] {
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != m {
            return Err(parse_err(*line, format!("expected {m} values, found {}", fields.len())));
        }
        for (c, f) in fields.iter().enumerate() {
            values.push(parse_number(f, *line, c + 1)?);
        }
    }
    FunctionalSample::new(grid, DMatrix::from_row_slice(rows.len() - 1, m, &values))
}

pub fn write_curves(mut writer: impl Write, sample: &FunctionalSample) -> Result<()> {
    let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    writeln!(writer, "{}", join(&mut sample.grid().points().iter().copied()))?;
    for row in sample.values().row_iter() {
        writeln!(writer, "{}", join(&mut row.iter().copied()))?;
    }
    Ok(())
}

/// Responses and indicators; `y` is NaN where unobserved.
pub fn read_responses(reader: impl Read) -> Result<(Vec<f64>, Vec<bool>)> {
    let rows = lines(reader)?;
    let Some((first_line, header)) = rows.first() else {
        return Err(parse_err(1, "empty response file"));
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_ascii_lowercase()).collect();
    if names != ["y", "observed"] {
        return Err(parse_err(*first_line, format!("expected header 'y,observed', found '{header}'")));
    }
    let mut y = Vec::with_capacity(rows.len());
    let mut observed = Vec::with_capacity(rows.len());
    for (line, text) in &rows[1..] {
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(parse_err(*line, format!("expected 2 fields, found {}", fields.len())));
        }
        let o = match fields[1].to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(parse_err(*line, format!("invalid indicator '{other}' in column 2"))),
        };
        let missing = fields[0].is_empty() || fields[0].eq_ignore_ascii_case("na");
        let v = match (o, missing) {
            (true, true) => return Err(parse_err(*line, "observed response is missing")),
            (_, true) => f64::NAN,
            (_, false) => parse_number(fields[0], *line, 1)?,
        };
        y.push(if o { v } else { f64::NAN });
        observed.push(o);
    }
    Ok((y, observed))
}

pub fn write_responses(mut writer: impl Write, y: &[f64], observed: &[bool]) -> Result<()> {
    if y.len() != observed.len() {
        return Err(Error::Dimension(format!("{} responses, {} indicators", y.len(), observed.len())));
    }
    writeln!(writer, "y,observed")?;
    for (v, &o) in y.iter().zip(observed) {
        if o {
            writeln!(writer, "{v},1")?;
        } else {
            writeln!(writer, "NA,0")?;
        }
    }
    Ok(())
}

pub fn read_curves_path(path: impl AsRef<Path>) -> Result<FunctionalSample> {
    read_curves(fs::File::open(path)?)
}

pub fn read_responses_path(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<bool>)> {
    read_responses(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_round_trip_exactly() {
        let grid = Grid::uniform(0.0, 1.0, 7).unwrap();
        let x = FunctionalSample::new(grid, DMatrix::from_fn(3, 7, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0))).unwrap();
        let mut buf = Vec::new();
        write_curves(&mut buf, &x).unwrap();
        let back = read_curves(buf.as_slice()).unwrap();
        assert_eq!(back.values(), x.values());
        assert_eq!(back.grid(), x.grid());
    }

    #[test]
    fn malformed_number_names_line() {
        let mut text = String::from("0,0.5,1\n");
        for i in 0..8 {
            if i == 5 {
                text.push_str("1,2.x,3\n");
            } else {
                text.push_str("1,2,3\n");
            }
        }
        let err = read_curves(text.as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 7),
            e => panic!("{e}"),
        }
        assert!(read_curves("0,0.5,1\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn responses_accept_empty_and_na() {
        let (y, o) = read_responses("y,observed\n1.5,1\n,0\nNA,0\n-2,true\n".as_bytes()).unwrap();
        assert_eq!(o, vec![true, false, false, true]);
        assert_eq!(y[0], 1.5);
        assert!(y[1].is_nan() && y[2].is_nan());
        let mut buf = Vec::new();
        write_responses(&mut buf, &y, &o).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "y,observed\n1.5,1\nNA,0\nNA,0\n-2,1\n");
        assert!(matches!(
            read_responses("y,observed\nNA,1\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(read_responses("a,b\n".as_bytes()).is_err());
    }
}
