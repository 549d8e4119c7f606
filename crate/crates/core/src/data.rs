//! Rectangular micro data shared by the simulator and the estimators.

use crate::error::{MteError, Result};

/// Numeric columns every dataset carries, in schema order.
pub const COVARIATE_COLUMNS: [&str; 13] = [
    "nonlabor_income",
    "guarantee",
    "tax_t",
    "tax_r",
    "age",
    "black",
    "family_size",
    "kids_under6",
    "unemp_rate",
    "region1",
    "region2",
    "region3",
    "fs_guarantee",
];

/// Prefix for simulator ground-truth columns that estimators must ignore.
pub const ORACLE_PREFIX: &str = "oracle_";

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub hours: Vec<f64>,
    pub participates: Vec<bool>,
    pub log_wage: Vec<Option<f64>>,
    pub cluster_id: Vec<u64>,
    /// Covariates, instruments (`z1`, `z2`, ...), derived instrument
    /// columns and oracle columns, in output order.
    pub columns: Vec<Column>,
}

pub fn is_instrument_name(name: &str) -> bool {
    name.len() > 1 && name.starts_with('z') && name[1..].chars().all(|c| c.is_ascii_digit())
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.hours.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(MteError::Schema("dataset has no rows".into()));
        }
        if self.participates.len() != n || self.log_wage.len() != n || self.cluster_id.len() != n {
            return Err(MteError::Schema("column lengths differ".into()));
        }
        for name in COVARIATE_COLUMNS {
            if !self.has_column(name) {
                return Err(MteError::Schema(format!("missing required column `{name}`")));
            }
        }
        if self.instrument_names().is_empty() {
            return Err(MteError::Schema("at least one instrument column z1.. is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(MteError::Schema(format!("duplicate column `{}`", c.name)));
            }
            if c.values.len() != n {
                return Err(MteError::Schema(format!("column `{}` has wrong length", c.name)));
            }
            if let Some(i) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(MteError::Parse { row: i + 1, column: c.name.clone(), message: "non-finite value".into() });
            }
        }
        if let Some(i) = self.hours.iter().position(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(MteError::Parse { row: i + 1, column: "hours".into(), message: "hours must be finite and >= 0".into() });
        }
        if let Some(i) = self.log_wage.iter().position(|w| matches!(w, Some(v) if !v.is_finite())) {
            return Err(MteError::Parse { row: i + 1, column: "log_wage".into(), message: "non-finite value".into() });
        }
        Ok(())
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| MteError::Schema(format!("missing column `{name}`")))
    }

    /// Adds a column, replacing any existing one with the same name.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) {
        if let Some(c) = self.columns.iter_mut().find(|c| c.name == name) {
            c.values = values;
        } else {
            self.columns.push(Column { name: name.to_string(), values });
        }
    }

    /// Instrument columns `z1`, `z2`, ... in numeric order.
    pub fn instrument_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.columns.iter().filter(|c| is_instrument_name(&c.name)).map(|c| c.name.clone()).collect();
        v.sort_by_key(|s| s[1..].parse::<u64>().unwrap_or(u64::MAX));
        v
    }

    pub fn participation(&self) -> Vec<f64> {
        self.participates.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()
    }

    pub fn missing_wages(&self) -> usize {
        self.log_wage.iter().filter(|w| w.is_none()).count()
    }

    /// Distinct cluster ids in ascending order.
    pub fn clusters(&self) -> Vec<u64> {
        let mut c = self.cluster_id.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Row subset (rows may repeat).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            hours: rows.iter().map(|&i| self.hours[i]).collect(),
            participates: rows.iter().map(|&i| self.participates[i]).collect(),
            log_wage: rows.iter().map(|&i| self.log_wage[i]).collect(),
            cluster_id: rows.iter().map(|&i| self.cluster_id[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column { name: c.name.clone(), values: rows.iter().map(|&i| c.values[i]).collect() })
                .collect(),
        }
    }

    /// Row indices grouped by cluster id, clusters in ascending order.
    pub fn cluster_rows(&self) -> Vec<(u64, Vec<usize>)> {
        let mut map: std::collections::BTreeMap<u64, Vec<usize>> = Default::default();
        for (i, &c) in self.cluster_id.iter().enumerate() {
            map.entry(c).or_default().push(i);
        }
        map.into_iter().collect()
    }

    /// Names of columns required by the schema that `other` lacks.
    pub fn missing_schema_columns(&self, other: &Dataset) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| !c.name.starts_with(ORACLE_PREFIX))
            .filter(|c| COVARIATE_COLUMNS.contains(&c.name.as_str()) || is_instrument_name(&c.name))
            .filter(|c| !other.has_column(&c.name))
            .map(|c| c.name.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn tiny() -> Dataset {
        let mut d = Dataset {
            hours: vec![0.0, 20.0, 40.0],
            participates: vec![true, false, false],
            log_wage: vec![None, Some(2.0), Some(2.5)],
            cluster_id: vec![1, 1, 2],
            columns: vec![],
        };
        for name in COVARIATE_COLUMNS {
            d.set_column(name, vec![1.0, 2.0, 3.0]);
        }
        d.set_column("z1", vec![0.1, 0.1, 0.2]);
        d
    }

    #[test]
    fn validates_and_selects() {
        let d = tiny();
        d.validate().unwrap();
        let s = d.select_rows(&[2, 2, 0]);
        assert_eq!(s.hours, vec![40.0, 40.0, 0.0]);
        assert_eq!(s.column("age").unwrap(), &[3.0, 3.0, 1.0]);
        assert_eq!(d.cluster_rows(), vec![(1, vec![0, 1]), (2, vec![2])]);
    }

    #[test]
    fn instrument_names_sorted_numerically() {
        let mut d = tiny();
        d.set_column("z10", vec![1.0; 3]);
        d.set_column("z2", vec![1.0; 3]);
        d.set_column("zindex", vec![1.0; 3]);
        assert_eq!(d.instrument_names(), vec!["z1", "z2", "z10"]);
    }

    #[test]
    fn detects_missing_columns() {
        let mut d = tiny();
        d.columns.retain(|c| c.name != "age");
        assert!(matches!(d.validate(), Err(MteError::Schema(_))));
        assert_eq!(tiny().missing_schema_columns(&d), vec!["age".to_string()]);
    }
}
