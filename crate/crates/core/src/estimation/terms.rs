//! Regressor terms: raw columns, derived transforms and products.
//!
//! A term is written as factors joined by `:`, e.g. `zindex:log_n10`.
//! `1` is the intercept. Derived factors:
//!
//! | name           | value                      |
//! |----------------|----------------------------|
//! | `log_w`        | log wage (must be complete)|
//! | `wage`         | exp(log_w)                 |
//! | `log_net_wage` | log_w + ln(1 − tax_t)      |
//! | `net_wage`     | wage · (1 − tax_t)         |
//! | `log_g`        | ln guarantee               |
//! | `log_n10`      | ln(nonlabor_income + 10)   |
//! | `age2`         | age²                       |
//! | `log_<col>`    | ln of any positive column  |

use std::borrow::Cow;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MteError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Term {
    factors: Vec<String>,
}

impl Term {
    pub fn intercept() -> Term {
        Term { factors: vec![] }
    }

    pub fn parse(s: &str) -> Result<Term> {
        let s = s.trim();
        if s == "1" {
            return Ok(Term::intercept());
        }
        let factors: Vec<String> = s.split(':').map(|f| f.trim().to_string()).collect();
        if factors.iter().any(|f| f.is_empty() || f == "1") {
            return Err(MteError::Config(format!("malformed term `{s}`")));
        }
        Ok(Term { factors })
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[String] {
        &self.factors
    }

    pub fn values(&self, data: &Dataset) -> Result<Vec<f64>> {
        let n = data.n();
        let mut out = vec![1.0; n];
        for f in &self.factors {
            let v = factor_values(data, f)?;
            for (o, x) in out.iter_mut().zip(v.iter()) {
                *o *= x;
            }
        }
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(MteError::Domain { column: self.to_string(), message: format!("non-finite value at row {}", i + 1) });
        }
        Ok(out)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", self.factors.join(":"))
        }
    }
}

impl TryFrom<String> for Term {
    type Error = MteError;
    fn try_from(s: String) -> Result<Term> {
        Term::parse(&s)
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

pub fn terms(names: &[&str]) -> Vec<Term> {
    names.iter().map(|s| Term::parse(s).expect("static term")).collect()
}

fn positive_log(name: &str, v: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = v.iter().position(|x| !(*x > 0.0)) {
        return Err(MteError::Domain { column: name.to_string(), message: format!("log of non-positive value {} at row {}", v[i], i + 1) });
    }
    Ok(v.iter().map(|x| x.ln()).collect())
}

fn complete_log_wage(data: &Dataset) -> Result<Vec<f64>> {
    data.log_wage
        .iter()
        .enumerate()
        .map(|(i, w)| {
            w.ok_or_else(|| MteError::Domain {
                column: "log_wage".into(),
                message: format!("missing at row {}; impute wages first", i + 1),
            })
        })
        .collect()
}

fn factor_values<'a>(data: &'a Dataset, name: &str) -> Result<Cow<'a, [f64]>> {
    Ok(match name {
        "log_w" => Cow::Owned(complete_log_wage(data)?),
        "wage" => Cow::Owned(complete_log_wage(data)?.into_iter().map(f64::exp).collect()),
        "log_net_wage" => {
            let t = positive_log("1-tax_t", &data.column("tax_t")?.iter().map(|t| 1.0 - t).collect::<Vec<_>>())?;
            Cow::Owned(complete_log_wage(data)?.iter().zip(t).map(|(w, l)| w + l).collect())
        }
        "net_wage" => {
            let t = data.column("tax_t")?;
            Cow::Owned(complete_log_wage(data)?.iter().zip(t).map(|(w, t)| w.exp() * (1.0 - t)).collect())
        }
        "log_g" => Cow::Owned(positive_log("guarantee", data.column("guarantee")?)?),
        "log_n10" => Cow::Owned(positive_log("nonlabor_income+10", &data.column("nonlabor_income")?.iter().map(|n| n + 10.0).collect::<Vec<_>>())?),
        "age2" => Cow::Owned(data.column("age")?.iter().map(|a| a * a).collect()),
        _ => {
            if let Ok(c) = data.column(name) {
                Cow::Borrowed(c)
            } else if let Some(base) = name.strip_prefix("log_") {
                Cow::Owned(positive_log(base, data.column(base)?)?)
            } else {
                return Err(MteError::Schema(format!("unknown column or term `{name}`")));
            }
        }
    })
}

/// Column-major design matrix for the given terms.
pub fn design(data: &Dataset, terms: &[Term]) -> Result<(DMatrix<f64>, Vec<String>)> {
    let n = data.n();
    let mut m = DMatrix::<f64>::zeros(n, terms.len());
    for (j, t) in terms.iter().enumerate() {
        let v = t.values(data)?;
        m.column_mut(j).copy_from_slice(&v);
    }
    Ok((m, terms.iter().map(|t| t.to_string()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, COVARIATE_COLUMNS};

    fn data() -> Dataset {
        let mut d = Dataset {
            hours: vec![10.0, 0.0],
            participates: vec![true, false],
            log_wage: vec![Some(2.0), Some(3.0)],
            cluster_id: vec![1, 2],
            columns: COVARIATE_COLUMNS.iter().map(|c| Column { name: c.to_string(), values: vec![0.5, 0.25] }).collect(),
        };
        d.set_column("z1", vec![0.1, 0.2]);
        d
    }

    #[test]
    fn derived_factors() {
        let d = data();
        let v = Term::parse("log_net_wage").unwrap().values(&d).unwrap();
        assert!((v[0] - (2.0 + 0.5f64.ln())).abs() < 1e-15);
        let v = Term::parse("log_z1:age2").unwrap().values(&d).unwrap();
        assert!((v[1] - 0.2f64.ln() * 0.0625).abs() < 1e-15);
        let v = Term::parse("log_n10").unwrap().values(&d).unwrap();
        assert!((v[0] - 10.5f64.ln()).abs() < 1e-15);
        assert_eq!(Term::parse("1").unwrap().values(&d).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn errors_name_the_column() {
        let mut d = data();
        d.log_wage[1] = None;
        assert!(matches!(Term::parse("log_w").unwrap().values(&d), Err(MteError::Domain { .. })));
        assert!(matches!(Term::parse("bogus").unwrap().values(&d), Err(MteError::Schema(_))));
        d.set_column("z1", vec![0.0, 1.0]);
        match Term::parse("log_z1").unwrap().values(&d) {
            Err(MteError::Domain { column, .. }) => assert_eq!(column, "z1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trips_through_strings() {
        for s in ["1", "age", "zindex:log_g"] {
            assert_eq!(Term::parse(s).unwrap().to_string(), s);
        }
        assert!(Term::parse("a::b").is_err());
    }
}
