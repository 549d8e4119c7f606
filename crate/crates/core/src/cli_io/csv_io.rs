//! Dataset CSV schema and generic table output.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{is_instrument_name, Column, Dataset, COVARIATE_COLUMNS};
use crate::error::{MteError, Result};

const HOURS: &str = "hours";
const PARTICIPATES: &str = "participates";
const LOG_WAGE: &str = "log_wage";
const CLUSTER: &str = "cluster_id";

/// Formats a float so that parsing it back gives the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(e: csv::Error) -> MteError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => MteError::Io(io),
        other => MteError::Parse { row, column: String::new(), message: format!("{other:?}") },
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| MteError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_dataset_from(f)
}

/// Parses the dataset schema. Rows in errors are file line numbers (the
/// header is line 1).
pub fn read_dataset_from<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(MteError::Parse { row: 1, column: h.clone(), message: "duplicate header".into() });
        }
    }
    let required = [HOURS, PARTICIPATES, LOG_WAGE, CLUSTER].into_iter().chain(COVARIATE_COLUMNS);
    for r in required {
        if !seen.contains(r) {
            return Err(MteError::Parse { row: 1, column: r.to_string(), message: "missing required column".into() });
        }
    }
    if !header.iter().any(|h| is_instrument_name(h)) {
        return Err(MteError::Parse { row: 1, column: "z1".into(), message: "at least one instrument column z1.. is required".into() });
    }
    let pos = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (ih, ip, iw, ic) = (pos(HOURS), pos(PARTICIPATES), pos(LOG_WAGE), pos(CLUSTER));
    let others: Vec<usize> = (0..header.len()).filter(|j| ![ih, ip, iw, ic].contains(j)).collect();
    let mut d = Dataset {
        hours: vec![],
        participates: vec![],
        log_wage: vec![],
        cluster_id: vec![],
        columns: others.iter().map(|&j| Column { name: header[j].clone(), values: vec![] }).collect(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |j: usize| -> Result<f64> {
            let cell = &rec[j];
            let v: f64 = cell.parse().map_err(|_| MteError::Parse { row, column: header[j].clone(), message: format!("non-numeric value `{cell}`") })?;
            if !v.is_finite() {
                return Err(MteError::Parse { row, column: header[j].clone(), message: format!("non-finite value `{cell}`") });
            }
            Ok(v)
        };
        d.hours.push(num(ih)?);
        let p = num(ip)?;
        if p != 0.0 && p != 1.0 {
            return Err(MteError::Parse { row, column: PARTICIPATES.into(), message: format!("must be 0 or 1, got {p}") });
        }
        d.participates.push(p == 1.0);
        d.log_wage.push(if rec[iw].is_empty() { None } else { Some(num(iw)?) });
        let c = num(ic)?;
        if c < 0.0 || c.fract() != 0.0 || c > u64::MAX as f64 {
            return Err(MteError::Parse { row, column: CLUSTER.into(), message: format!("must be a non-negative integer, got {c}") });
        }
        d.cluster_id.push(c as u64);
        for (col, &j) in d.columns.iter_mut().zip(&others) {
            col.values.push(num(j)?);
        }
    }
    d.validate()?;
    Ok(d)
}

/// Column order: hours, participates, log_wage, covariates, instruments,
/// any other columns, cluster_id.
pub fn write_dataset_to<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    data.validate()?;
    let mut order: Vec<&Column> = vec![];
    for name in COVARIATE_COLUMNS {
        order.push(data.columns.iter().find(|c| c.name == name).unwrap());
    }
    for name in data.instrument_names() {
        order.push(data.columns.iter().find(|c| c.name == name).unwrap());
    }
    for c in &data.columns {
        if !COVARIATE_COLUMNS.contains(&c.name.as_str()) && !is_instrument_name(&c.name) {
            order.push(c);
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![HOURS.to_string(), PARTICIPATES.into(), LOG_WAGE.into()];
    header.extend(order.iter().map(|c| c.name.clone()));
    header.push(CLUSTER.into());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut rec = vec![fmt_f64(data.hours[i]), if data.participates[i] { "1".into() } else { "0".into() }, data.log_wage[i].map(fmt_f64).unwrap_or_default()];
        rec.extend(order.iter().map(|c| fmt_f64(c.values[i])));
        rec.push(data.cluster_id[i].to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut buf = vec![];
    write_dataset_to(data, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// A small string table rendered as CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| MteError::Io(e.into_error()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        let mut h = vec!["hours", "participates", "log_wage"];
        h.extend(COVARIATE_COLUMNS);
        h.extend(["z1", "cluster_id"]);
        h.join(",")
    }

    fn row(p: &str, w: &str) -> String {
        let mut r = vec!["12.5".to_string(), p.into(), w.into()];
        r.extend((0..COVARIATE_COLUMNS.len()).map(|j| format!("{}.5", j + 1)));
        r.extend(["0.7".into(), "3".into()]);
        r.join(",")
    }

    #[test]
    fn reads_three_rows() {
        let text = format!("{}\n{}\n{}\n{}\n", header(), row("1", "2.1"), row("0", ""), row("0", "1.9"));
        let d = read_dataset_from(text.as_bytes()).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.log_wage, vec![Some(2.1), None, Some(1.9)]);
        assert_eq!(d.participates, vec![true, false, false]);
        assert_eq!(d.column("age").unwrap(), &[5.5, 5.5, 5.5]);
    }

    #[test]
    fn participates_two_is_rejected_with_location() {
        let text = format!("{}\n{}\n{}\n", header(), row("1", "2"), row("2", "2"));
        match read_dataset_from(text.as_bytes()) {
            Err(MteError::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (3, "participates")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_duplicate_and_missing() {
        let text = format!("{}\n{}\n", header(), row("1", "abc"));
        assert!(matches!(read_dataset_from(text.as_bytes()), Err(MteError::Parse { row: 2, ref column, .. }) if column == "log_wage"));
        let dup = format!("{},age\n", header());
        assert!(matches!(read_dataset_from(dup.as_bytes()), Err(MteError::Parse { row: 1, ref column, .. }) if column == "age"));
        let missing = header().replace("tax_r,", "");
        assert!(matches!(read_dataset_from(missing.as_bytes()), Err(MteError::Parse { ref column, .. }) if column == "tax_r"));
    }

    #[test]
    fn fmt_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, f64::MAX, -2.5e17, 123456789.123456789] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
