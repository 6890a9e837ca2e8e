//! Plain series CSV: an `x` (or `value`) column and an optional `w` column.
//! Files with a `date` column are read as monthly series.

use std::fmt::Write as _;
use std::path::Path;

use super::pipeline::MonthlySeries;
use crate::error::{Error, Result};
use crate::model::SeriesPair;

pub fn read_series_str(text: &str) -> Result<SeriesPair> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let find = |names: &[&str]| headers.iter().position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)));
    if find(&["date"]).is_some() {
        let monthly = MonthlySeries::from_reader(text.as_bytes())?;
        return match monthly.exog(None)? {
            Some(w) => SeriesPair::new(monthly.values.clone(), w.to_vec()),
            None => SeriesPair::without_exog(monthly.values),
        };
    }
    let x_col = find(&["x", "value"])
        .ok_or(Error::Schema { row: 1, message: "missing 'x' or 'value' column".into() })?;
    let w_col = find(&["w"]);
    let mut x = Vec::new();
    let mut w = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Schema { row, message: e.to_string() })?;
        let parse = |col: usize| -> Result<f64> {
            rec[col]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Schema { row, message: format!("'{}' is not a finite number", &rec[col]) })
        };
        let v = parse(x_col)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Schema { row, message: format!("value {v} outside [0, 1]") });
        }
        x.push(v);
        if let Some(c) = w_col {
            w.push(parse(c)?);
        }
    }
    if x.is_empty() {
        return Err(Error::Schema { row: 2, message: "no data rows".into() });
    }
    if w_col.is_some() {
        SeriesPair::new(x, w)
    } else {
        SeriesPair::without_exog(x)
    }
}

pub fn read_series(path: &Path) -> Result<SeriesPair> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    read_series_str(&text)
}

/// `t,x,w` rows with 1-based `t`.
pub fn series_to_csv(series: &SeriesPair) -> String {
    let mut s = String::from("t,x,w\n");
    for (t, (x, w)) in series.x.iter().zip(&series.w).enumerate() {
        let _ = writeln!(s, "{},{x},{w}", t + 1);
    }
    s
}
