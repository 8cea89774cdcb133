//! CSV layout shared by every path-by-time matrix: a header
//! `path,t0,t1,...,tT` followed by one row per path.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numfmt::decimal;

pub fn write_csv<W: Write>(values: &Array2<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["path".to_string()];
    header.extend((0..values.ncols()).map(|t| format!("t{t}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, row) in values.rows().into_iter().enumerate() {
        let mut record = vec![k.to_string()];
        record.extend(row.iter().map(|&v| decimal(v)));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("path") {
        return Err(Error::Parse("first column must be `path`".into()));
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != format!("t{i}") {
            return Err(Error::Parse(format!("column {} must be `t{i}`, found `{name}`", i + 1)));
        }
    }
    let n_times = header.len() - 1;
    let mut data = Vec::new();
    let mut n_paths = 0;
    for (k, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.get(0) != Some(k.to_string().as_str()) {
            return Err(Error::Parse(format!(
                "row {k}: paths must be numbered consecutively from 0"
            )));
        }
        if record.len() != n_times + 1 {
            return Err(Error::Parse(format!(
                "row {k}: expected {} fields, found {}",
                n_times + 1,
                record.len()
            )));
        }
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {k}: `{field}` is not a number")))?;
            data.push(v);
        }
        n_paths += 1;
    }
    Array2::from_shape_vec((n_paths, n_times), data).map_err(|e| Error::Parse(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub(crate) fn check_shape(what: &str, values: &Array2<f64>, expected: (usize, usize)) -> Result<()> {
    if values.dim() != expected {
        return Err(Error::ShapeMismatch {
            what: what.to_string(),
            expected,
            found: values.dim(),
        });
    }
    Ok(())
}
