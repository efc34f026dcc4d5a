//! Synthetic cohorts with planted ground truth.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, PreprocessConfig, RawTable};
use crate::persona::{Bound, Role};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCondition {
    pub feature: String,
    #[serde(flatten)]
    pub bound: Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPersona {
    pub conditions: Vec<PlantedCondition>,
    pub q_in: f64,
    #[serde(default = "default_role")]
    pub role: Role,
}

fn default_role() -> Role {
    Role::Responder
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureTerm {
    pub feature: String,
    pub weight: f64,
}

/// Treatment interaction: arm A responds with `+tau(x)/2`, arm B with
/// `-tau(x)/2`, plus Gaussian noise; `tau` is linear in the signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEffect {
    pub signature: Vec<SignatureTerm>,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d_numeric: usize,
    #[serde(default)]
    pub d_categorical: usize,
    #[serde(default = "default_levels")]
    pub categorical_levels: usize,
    #[serde(default)]
    pub planted: Vec<PlantedPersona>,
    #[serde(default = "default_q_out")]
    pub q_out: f64,
    #[serde(default)]
    pub arm_effect: Option<ArmEffect>,
    /// Shuffle outcomes (and responses) across patients after generation.
    #[serde(default)]
    pub permute_outcomes: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_levels() -> usize {
    3
}

fn default_q_out() -> f64 {
    0.5
}

impl SynthConfig {
    pub fn noise(n: usize, d_numeric: usize, seed: u64) -> Self {
        SynthConfig {
            n,
            d_numeric,
            d_categorical: 0,
            categorical_levels: 3,
            planted: Vec::new(),
            q_out: 0.5,
            arm_effect: None,
            permute_outcomes: false,
            seed,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.d_numeric)
            .map(|i| format!("f{i}"))
            .chain((0..self.d_categorical).map(|i| format!("c{i}")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let rate = |field: String, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(field, format!("rate {v} outside [0, 1]")))
            }
        };
        if self.n < 2 {
            return Err(Error::config("n", "need at least 2 patients"));
        }
        if self.d_numeric + self.d_categorical == 0 {
            return Err(Error::config("d_numeric", "need at least one feature"));
        }
        if self.d_categorical > 0 && self.categorical_levels == 0 {
            return Err(Error::config("categorical_levels", "must be at least 1"));
        }
        rate("q_out".into(), self.q_out)?;
        let names: BTreeSet<String> = self.feature_names().into_iter().collect();
        for (i, p) in self.planted.iter().enumerate() {
            rate(format!("planted[{i}].q_in"), p.q_in)?;
            if p.conditions.is_empty() {
                return Err(Error::config(format!("planted[{i}].conditions"), "empty"));
            }
            for c in &p.conditions {
                if !names.contains(&c.feature) {
                    return Err(Error::config(
                        format!("planted[{i}].conditions"),
                        format!("unknown feature `{}`", c.feature),
                    ));
                }
            }
        }
        if let Some(a) = &self.arm_effect {
            if !self.planted.is_empty() {
                return Err(Error::config("arm_effect", "cannot be combined with planted personas"));
            }
            if !(a.noise_sd >= 0.0 && a.noise_sd.is_finite()) {
                return Err(Error::config("arm_effect.noise_sd", "must be non-negative"));
            }
            for t in &a.signature {
                if !self.feature_names()[..self.d_numeric].contains(&t.feature) {
                    return Err(Error::config(
                        "arm_effect.signature",
                        format!("`{}` is not a numeric feature", t.feature),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub variables: Vec<String>,
    /// Dataset feature indices of the variables, ascending.
    pub feature_indices: Vec<usize>,
    pub members: Vec<String>,
    pub member_rows: Vec<usize>,
    pub q_in: f64,
    pub role: Role,
    pub empirical_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub planted: Vec<PlantedTruth>,
    pub q_out: f64,
    /// True treatment effect per patient when arms are generated.
    pub tau: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub table: RawTable,
    pub truth: GroundTruth,
    pub has_arms: bool,
}

impl Synthetic {
    pub fn preprocess_config(&self) -> PreprocessConfig {
        let mut c = PreprocessConfig::new("outcome");
        c.id_column = Some("id".into());
        if self.has_arms {
            c.arm_column = Some("arm".into());
            c.response_column = Some("response".into());
        }
        c
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::from_table(&self.table, &self.preprocess_config())
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.table.write_csv(std::io::BufWriter::new(file))
    }
}

/// Draws a cohort. Numeric features are standard normal, categorical ones
/// uniform over `L0..`; outcomes are Bernoulli with the rate of the first
/// planted persona a patient matches, else the baseline rate.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Synthetic> {
    config.validate()?;
    let n = config.n;
    let mut rng = seed::rng(seed::derive(config.seed, Stream::Synthetic, 0));
    let names = config.feature_names();
    let mut numeric: Vec<Vec<f64>> = Vec::with_capacity(config.d_numeric);
    for _ in 0..config.d_numeric {
        numeric.push((0..n).map(|_| StandardNormal.sample(&mut rng)).collect());
    }
    let mut categorical: Vec<Vec<usize>> = Vec::with_capacity(config.d_categorical);
    for _ in 0..config.d_categorical {
        categorical.push(
            (0..n)
                .map(|_| rng.random_range(0..config.categorical_levels))
                .collect(),
        );
    }
    let column_of = |name: &str| names.iter().position(|x| x == name).unwrap();
    let holds = |c: &PlantedCondition, i: usize| {
        let f = column_of(&c.feature);
        if f < config.d_numeric {
            c.bound.holds_numeric(numeric[f][i])
        } else {
            let level = format!("L{}", categorical[f - config.d_numeric][i]);
            matches!(&c.bound, Bound::Equals { level: l } if *l == level)
        }
    };

    let mut membership: Vec<Vec<usize>> = Vec::new();
    for (k, p) in config.planted.iter().enumerate() {
        let rows: Vec<usize> = (0..n)
            .filter(|&i| p.conditions.iter().all(|c| holds(c, i)))
            .collect();
        if rows.is_empty() {
            return Err(Error::config(
                format!("planted[{k}].conditions"),
                "no generated patient satisfies the conjunction",
            ));
        }
        membership.push(rows);
    }
    let rate_of = |i: usize| {
        config
            .planted
            .iter()
            .zip(&membership)
            .find(|(_, rows)| rows.binary_search(&i).is_ok())
            .map_or(config.q_out, |(p, _)| p.q_in)
    };

    let (arms, mut response, mut outcome, tau) = match &config.arm_effect {
        None => {
            let y: Vec<u8> = (0..n).map(|i| u8::from(rng.random_bool(rate_of(i)))).collect();
            (None, None, y, None)
        }
        Some(effect) => {
            let arms: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let noise = Normal::new(0.0, effect.noise_sd).expect("validated sd");
            let tau: Vec<f64> = (0..n)
                .map(|i| {
                    effect
                        .signature
                        .iter()
                        .map(|t| t.weight * numeric[column_of(&t.feature)][i])
                        .sum()
                })
                .collect();
            let resp: Vec<f64> = (0..n)
                .map(|i| {
                    let sign = if arms[i] { 0.5 } else { -0.5 };
                    sign * tau[i] + noise.sample(&mut rng)
                })
                .collect();
            let y = resp.iter().map(|&r| u8::from(r > 0.0)).collect();
            (Some(arms), Some(resp), y, Some(tau))
        }
    };

    if config.permute_outcomes {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        outcome = perm.iter().map(|&j| outcome[j]).collect();
        if let Some(r) = response.as_mut() {
            *r = perm.iter().map(|&j| r[j]).collect();
        }
    }

    let ids: Vec<String> = (0..n).map(|i| format!("P{i:04}")).collect();
    let mut header = vec!["id".to_string()];
    header.extend(names.iter().cloned());
    if arms.is_some() {
        header.push("arm".into());
        header.push("response".into());
    }
    header.push("outcome".into());
    let rows = (0..n)
        .map(|i| {
            let mut row = vec![Some(ids[i].clone())];
            row.extend(numeric.iter().map(|c| Some(format!("{}", c[i]))));
            row.extend(categorical.iter().map(|c| Some(format!("L{}", c[i]))));
            if let (Some(a), Some(r)) = (&arms, &response) {
                row.push(Some(if a[i] { "A" } else { "B" }.to_string()));
                row.push(Some(format!("{}", r[i])));
            }
            row.push(Some(outcome[i].to_string()));
            row
        })
        .collect();

    let planted = config
        .planted
        .iter()
        .zip(&membership)
        .map(|(p, rows)| {
            let mut idx: Vec<usize> = p.conditions.iter().map(|c| column_of(&c.feature)).collect();
            idx.sort_unstable();
            idx.dedup();
            let pos = rows.iter().filter(|&&i| outcome[i] == 1).count();
            PlantedTruth {
                variables: idx.iter().map(|&f| names[f].clone()).collect(),
                feature_indices: idx,
                members: rows.iter().map(|&i| ids[i].clone()).collect(),
                member_rows: rows.clone(),
                q_in: p.q_in,
                role: p.role,
                empirical_rate: pos as f64 / rows.len() as f64,
            }
        })
        .collect();

    Ok(Synthetic {
        table: RawTable {
            source: format!("synthetic:seed={}", config.seed),
            header,
            rows,
        },
        truth: GroundTruth {
            seed: config.seed,
            planted,
            q_out: config.q_out,
            tau,
        },
        has_arms: arms.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Standard normal 70th percentile.
    const Z70: f64 = 0.524_400_512_708_041;

    fn planted(seed: u64, n: usize) -> SynthConfig {
        SynthConfig {
            planted: vec![PlantedPersona {
                conditions: vec![
                    PlantedCondition {
                        feature: "f3".into(),
                        bound: Bound::Gt { value: Z70 },
                    },
                    PlantedCondition {
                        feature: "f7".into(),
                        bound: Bound::Lt { value: -Z70 },
                    },
                ],
                q_in: 0.85,
                role: Role::Responder,
            }],
            ..SynthConfig::noise(n, 10, seed)
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_synthetic(&planted(3, 100)).unwrap();
        let b = generate_synthetic(&planted(3, 100)).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.table.write_csv(&mut ba).unwrap();
        b.table.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_ne!(a, generate_synthetic(&planted(4, 100)).unwrap());
    }

    #[test]
    fn planted_membership_and_rate() {
        let s = generate_synthetic(&planted(1, 4000)).unwrap();
        let t = &s.truth.planted[0];
        assert_eq!(t.feature_indices, vec![3, 7]);
        let expected = 4000.0 * 0.09;
        let sd = (4000.0f64 * 0.09 * 0.91).sqrt();
        assert!((t.members.len() as f64 - expected).abs() < 4.0 * sd);
        let se = (0.85f64 * 0.15 / t.members.len() as f64).sqrt();
        assert!((t.empirical_rate - 0.85).abs() < 3.0 * se);
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = planted(1, 50);
        c.planted[0].q_in = 1.5;
        match generate_synthetic(&c) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "planted[0].q_in"),
            other => panic!("{other:?}"),
        }
        let mut c = planted(1, 50);
        c.planted[0].conditions[1].bound = Bound::Lt { value: -50.0 };
        assert!(generate_synthetic(&c).is_err());
    }

    #[test]
    fn arms_produce_response_channel() {
        let c = SynthConfig {
            arm_effect: Some(ArmEffect {
                signature: vec![SignatureTerm {
                    feature: "f0".into(),
                    weight: 1.0,
                }],
                noise_sd: 0.1,
            }),
            ..SynthConfig::noise(60, 3, 9)
        };
        let s = generate_synthetic(&c).unwrap();
        let d = s.dataset().unwrap();
        assert_eq!(d.n_features(), 3);
        assert!(d.arm().is_some() && d.response().is_some());
    }
}
