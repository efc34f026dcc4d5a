use std::fmt;

use serde::{Deserialize, Serialize};

use super::stats::quantile;
use crate::ingest::Dataset;

/// Bound of a single-variable condition, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Bound {
    Gt { value: f64 },
    Lt { value: f64 },
    /// Inclusive interval.
    Between { low: f64, high: f64 },
    Equals { level: String },
}

impl Bound {
    /// Numeric test; level conditions never hold for a bare number.
    pub fn holds_numeric(&self, v: f64) -> bool {
        match *self {
            Bound::Gt { value } => v > value,
            Bound::Lt { value } => v < value,
            Bound::Between { low, high } => low <= v && v <= high,
            Bound::Equals { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: usize,
    pub name: String,
    #[serde(flatten)]
    pub bound: Bound,
}

impl Condition {
    /// Which patients satisfy the condition.
    pub fn mask(&self, dataset: &Dataset) -> Vec<bool> {
        let col = dataset.original(self.feature);
        match &self.bound {
            Bound::Equals { level } => {
                let code = dataset
                    .column(self.feature)
                    .categories
                    .iter()
                    .position(|c| c == level);
                col.iter()
                    .map(|&v| code.is_some_and(|c| v as usize == c))
                    .collect()
            }
            b => col.iter().map(|&v| b.holds_numeric(v)).collect(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.bound {
            Bound::Gt { value } => write!(f, "{} > {}", self.name, short(*value)),
            Bound::Lt { value } => write!(f, "{} < {}", self.name, short(*value)),
            Bound::Between { low, high } => {
                write!(f, "{} between {} and {}", self.name, short(*low), short(*high))
            }
            Bound::Equals { level } => write!(f, "{} = {}", self.name, level),
        }
    }
}

/// Three significant digits for prose.
fn short(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let digits = 2 - v.abs().log10().floor() as i32;
    let s = format!("{:.*}", digits.max(0) as usize, v);
    s.parse::<f64>().map(|x| format!("{x}")).unwrap_or(s)
}

/// Candidate conditions for one variable: `> t` and `< t` at each distinct
/// decile, the inclusive intervals between consecutive quartiles and the
/// interquartile range, or one level test per category. Conditions that
/// hold for nobody or for everybody are dropped.
pub fn enumerate_conditions(feature: usize, dataset: &Dataset) -> Vec<Condition> {
    let column = dataset.column(feature);
    let name = column.name.clone();
    let make = |bound| Condition {
        feature,
        name: name.clone(),
        bound,
    };
    let mut out: Vec<Condition> = if dataset.is_categorical(feature) {
        column
            .categories
            .iter()
            .map(|l| make(Bound::Equals { level: l.clone() }))
            .collect()
    } else {
        let mut sorted = dataset.original(feature).to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut cuts: Vec<f64> = (1..10).map(|k| quantile(&sorted, k as f64 / 10.0)).collect();
        cuts.dedup();
        let q: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|&p| quantile(&sorted, p)).collect();
        let mut v: Vec<Condition> = cuts.iter().map(|&t| make(Bound::Gt { value: t })).collect();
        v.extend(cuts.iter().map(|&t| make(Bound::Lt { value: t })));
        for (low, high) in [(q[0], q[1]), (q[1], q[2]), (q[0], q[2])] {
            if low < high {
                v.push(make(Bound::Between { low, high }));
            }
        }
        v
    };
    let n = dataset.n();
    out.retain(|c| {
        let k = c.mask(dataset).iter().filter(|&&b| b).count();
        k > 0 && k < n
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_distinct_values_give_21() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let d = Dataset::from_numeric(&["x"], &[v], &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        let c = enumerate_conditions(0, &d);
        assert_eq!(c.len(), 21);
        assert_eq!(c.iter().filter(|c| matches!(c.bound, Bound::Between { .. })).count(), 3);
    }

    #[test]
    fn constant_column_has_none() {
        let d = Dataset::from_numeric(&["x"], &[vec![2.0; 6]], &[0, 1, 0, 1, 0, 1]).unwrap();
        assert!(enumerate_conditions(0, &d).is_empty());
    }

    #[test]
    fn categorical_levels() {
        let t = crate::ingest::read_csv(
            "g,y\nred,1\nblue,0\ngreen,1\nred,0\n".as_bytes(),
            "t.csv",
        )
        .unwrap();
        let d = Dataset::from_table(&t, &crate::ingest::PreprocessConfig::new("y")).unwrap();
        let c = enumerate_conditions(0, &d);
        assert_eq!(c.len(), 3);
        assert_eq!(c[2].mask(&d), vec![true, false, false, true]);
        assert_eq!(c[2].to_string(), "g = red");
    }

    #[test]
    fn prose_rounding() {
        assert_eq!(short(1.23456), "1.23");
        assert_eq!(short(1234.6), "1235");
        assert_eq!(short(-0.000123456), "-0.000123");
        assert_eq!(short(1.2), "1.2");
    }
}
