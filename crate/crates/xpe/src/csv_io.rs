//! Dataset CSV files: header row, `,` separator, optional integer label
//! column, empty cell or `NaN` for a missing value.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use xpe_core::{Dataset, MissingMask};

use crate::error::{io_err, Error, Result};

pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// Which column, if any, holds class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labels<'a> {
    /// No label extraction; every column is a feature.
    None,
    /// Use the named column if the header has it.
    IfPresent(&'a str),
    /// The named column must exist.
    Required(&'a str),
}

pub fn read_dataset(path: impl AsRef<Path>, labels: Labels<'_>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    parse_dataset(file, labels, &path.display().to_string())
}

/// Parses CSV text; `origin` names the source in error messages.
pub fn parse_dataset<R: Read>(reader: R, labels: Labels<'_>, origin: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_idx = match labels {
        Labels::None => None,
        Labels::IfPresent(name) => header.iter().position(|h| h == name),
        Labels::Required(name) => Some(
            header.iter().position(|h| h == name).ok_or_else(|| Error::Schema(format!("{origin}: label column \"{name}\" not found")))?,
        ),
    };
    let names: Vec<String> = header.iter().enumerate().filter(|(k, _)| Some(*k) != label_idx).map(|(_, h)| h.clone()).collect();
    let d = names.len();
    if d == 0 {
        return Err(Error::Schema(format!("{origin}: no feature columns")));
    }
    let mut features = Vec::new();
    let mut missing = Vec::new();
    let mut y = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                Error::Schema(format!("{origin}: row {row} has {len} cells, header has {expected_len}"))
            }
            _ => Error::Csv(e),
        })?;
        for (k, cell) in record.iter().enumerate() {
            let parse_err = || Error::Parse { path: origin.to_owned(), row, column: header[k].clone(), value: cell.to_owned() };
            if Some(k) == label_idx {
                y.push(cell.parse::<usize>().map_err(|_| parse_err())?);
            } else if cell.is_empty() || cell == "NaN" {
                features.push(f64::NAN);
                missing.push(true);
            } else {
                let v: f64 = cell.parse().map_err(|_| parse_err())?;
                if !v.is_finite() {
                    return Err(parse_err());
                }
                features.push(v);
                missing.push(false);
            }
        }
    }
    let n = missing.len() / d;
    if n == 0 {
        return Err(Error::Schema(format!("{origin}: no data rows")));
    }
    let mask = missing.iter().any(|&m| m).then(|| MissingMask::from_vec(n, d, missing)).transpose()?;
    let mut ds = Dataset::with_missing(features, n, d, mask)?.with_feature_names(names)?;
    if label_idx.is_some() {
        ds = ds.with_labels(y)?;
    }
    Ok(ds)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::io::BufWriter::new(File::create(path).map_err(io_err(path))?);
    file.write_all(render_dataset(data).as_bytes()).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}

pub fn render_dataset(data: &Dataset) -> String {
    let mut out = String::new();
    let names: Vec<String> = match data.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..data.d()).map(|j| format!("x{j}")).collect(),
    };
    out.push_str(&names.join(","));
    if data.labels().is_some() {
        out.push(',');
        out.push_str(DEFAULT_LABEL_COLUMN);
    }
    out.push('\n');
    for i in 0..data.n() {
        let cells: Vec<String> =
            (0..data.d()).map(|j| if data.is_missing(i, j) { String::new() } else { format_value(data.get(i, j)) }).collect();
        out.push_str(&cells.join(","));
        if let Some(y) = data.labels() {
            out.push(',');
            out.push_str(&y[i].to_string());
        }
        out.push('\n');
    }
    out
}

/// Headerless numeric rows (the external-model protocol and embeddings).
pub fn parse_matrix(text: &str, origin: &str) -> Result<(Vec<f64>, usize, usize)> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (r, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Schema(format!("{origin}: row {} has {} values, expected {w}", r + 1, cells.len())))
            }
            _ => {}
        }
        for (k, c) in cells.iter().enumerate() {
            let v: f64 = c.parse().map_err(|_| Error::Parse {
                path: origin.to_owned(),
                row: r + 1,
                column: k.to_string(),
                value: (*c).to_owned(),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok((values, rows, width.unwrap_or(0)))
}

pub fn render_matrix(values: &[f64], cols: usize) -> String {
    let mut out = String::new();
    for row in values.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Embedding matrix file: CSV with a header row, numeric cells only.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<(Vec<f64>, usize, usize)> {
    let ds = read_dataset(path, Labels::None)?;
    if ds.has_missing() {
        return Err(Error::Schema("embeddings may not contain missing values".into()));
    }
    Ok((ds.features().to_vec(), ds.n(), ds.d()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, labels: Labels<'_>) -> Result<Dataset> {
        parse_dataset(text.as_bytes(), labels, "test.csv")
    }

    #[test]
    fn header_and_labels() {
        let text = "a,b,label\n1,2,0\n3,4,1\n5,6,0\n";
        let ds = parse(text, Labels::Required("label")).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.labels(), Some(&[0, 1, 0][..]));
        assert_eq!(ds.feature_names().unwrap(), &["a".to_string(), "b".to_string()]);
        let ds = parse(text, Labels::None).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 3));
        assert!(ds.labels().is_none());
    }

    #[test]
    fn parse_errors_cite_row_and_column() {
        let err = parse("a,b,label\n1,2,0\n3,1.x,1\n", Labels::Required("label")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("\"b\""), "{msg}");
        assert!(matches!(parse("a,b\n1,2\n", Labels::Required("label")), Err(Error::Schema(_))));
        assert!(matches!(parse("a,b\n1,2\n3\n", Labels::None), Err(Error::Schema(_))));
    }

    #[test]
    fn missing_cells() {
        let ds = parse("a,b\n1,\nNaN,4\n", Labels::IfPresent("label")).unwrap();
        assert!(ds.is_missing(0, 1) && ds.is_missing(1, 0));
        assert!(!ds.is_missing(0, 0));
        assert!(ds.labels().is_none());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let vals = vec![0.1, -0.0, 1e-300, 123456789.123456789, f64::MIN_POSITIVE, -2.5e17];
        let ds = Dataset::new(vals, 3, 2).unwrap().with_labels(vec![2, 0, 1]).unwrap();
        let back = parse(&render_dataset(&ds), Labels::IfPresent("label")).unwrap();
        assert_eq!(
            back.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            ds.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back.labels(), ds.labels());
    }
}
