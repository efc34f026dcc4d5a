//! Matched-pair treatment-benefit concordance.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::models::{fit_predict, ModelKind};
use crate::error::{Error, Result};
use crate::ingest::{Arm, Dataset};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Greedy matching without replacement: the globally closest unmatched
/// A-B pair goes first, ties by (A index, B index).
pub fn match_pairs(dataset: &Dataset, features: &[usize]) -> Result<Vec<MatchedPair>> {
    let arms = dataset
        .arm()
        .ok_or_else(|| Error::InvalidInput("dataset has no arm column".into()))?;
    let a: Vec<usize> = (0..arms.len()).filter(|&i| arms[i] == Arm::A).collect();
    let b: Vec<usize> = (0..arms.len()).filter(|&i| arms[i] == Arm::B).collect();
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput(format!(
            "both arms need patients (found {} and {})",
            a.len(),
            b.len()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..dataset.n()).map(|i| dataset.row(i, features)).collect();
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for &i in &a {
        for &j in &b {
            let d = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            cand.push((d, i, j));
        }
    }
    cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used = vec![false; dataset.n()];
    let mut out = Vec::new();
    let limit = a.len().min(b.len());
    for (d, i, j) in cand {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            out.push(MatchedPair { a: i, b: j, distance: d });
            if out.len() == limit {
                break;
            }
        }
    }
    Ok(out)
}

/// Concordance over unordered pairs of pairs; a tie in either benefit
/// scores one half.
pub fn c_for_benefit(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::InvalidInput("predicted and observed lengths differ".into()));
    }
    let m = predicted.len();
    if m < 2 {
        return Err(Error::InvalidInput("C-for-benefit needs at least 2 pairs".into()));
    }
    let mut score = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let p = predicted[i].total_cmp(&predicted[j]);
            let o = observed[i].total_cmp(&observed[j]);
            if p.is_eq() || o.is_eq() {
                score += 0.5;
            } else if p == o {
                score += 1.0;
            }
        }
    }
    Ok(score / (m * (m - 1) / 2) as f64)
}

/// Observed benefit of each pair: response difference A minus B when a
/// response channel exists, otherwise outcome difference.
pub fn observed_benefit(dataset: &Dataset, pairs: &[MatchedPair]) -> Vec<f64> {
    match dataset.response() {
        Some(r) => pairs.iter().map(|p| r[p.a] - r[p.b]).collect(),
        None => {
            let y = dataset.outcome();
            pairs.iter().map(|p| y[p.a] as f64 - y[p.b] as f64).collect()
        }
    }
}

pub const BENEFIT_FOLDS: usize = 5;

/// Cross-fitted two-model estimate of `P(y|x, A) - P(y|x, B)` per patient.
/// Folds are dealt within each arm, so no patient is scored by a model that
/// saw it.
pub fn predicted_benefit(dataset: &Dataset, features: &[usize], model: ModelKind, seed: u64) -> Result<Vec<f64>> {
    let arms = dataset
        .arm()
        .ok_or_else(|| Error::InvalidInput("dataset has no arm column".into()))?;
    let n = dataset.n();
    let k = BENEFIT_FOLDS;
    let mut folds = vec![0; n];
    let mut rng = seed::rng(seed::derive(seed, Stream::Benefit, 0));
    let mut next = 0;
    for arm in [Arm::A, Arm::B] {
        let mut members: Vec<usize> = (0..n).filter(|&i| arms[i] == arm).collect();
        if members.len() < k {
            return Err(Error::InvalidInput(format!(
                "arm {arm:?} has {} patient(s), fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    let x: Vec<Vec<f64>> = (0..n).map(|i| dataset.row(i, features)).collect();
    let y = dataset.outcome();
    let mut benefit = vec![0.0; n];
    for f in 0..k {
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let qx: Vec<Vec<f64>> = test.iter().map(|&i| x[i].clone()).collect();
        let mut arm_pred = Vec::with_capacity(2);
        for arm in [Arm::A, Arm::B] {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f && arms[i] == arm).collect();
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let ty: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            arm_pred.push(fit_predict(model, &tx, &ty, &qx)?);
        }
        for (t, &i) in test.iter().enumerate() {
            benefit[i] = arm_pred[0][t] - arm_pred[1][t];
        }
    }
    Ok(benefit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitReport {
    pub pairs: Vec<MatchedPair>,
    pub predicted: Vec<f64>,
    pub observed: Vec<f64>,
    pub c_for_benefit: f64,
}

impl BenefitReport {
    pub fn write_pairs_csv<W: std::io::Write>(&self, dataset: &Dataset, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Csv {
            path: "pairs.csv".into(),
            message: e.to_string(),
        };
        out.write_record(["patient_a", "patient_b", "distance", "predicted_benefit", "observed_benefit"])
            .map_err(csv_err)?;
        let ids = dataset.ids();
        for (k, p) in self.pairs.iter().enumerate() {
            out.write_record([
                ids[p.a].clone(),
                ids[p.b].clone(),
                format!("{}", p.distance),
                format!("{}", self.predicted[k]),
                format!("{}", self.observed[k]),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("pairs.csv", e))?;
        Ok(())
    }
}

/// Matches on `features`, predicts per-patient benefit, and scores pair
/// benefit (mean of the two patients' predictions) against the observed one.
pub fn evaluate_benefit(dataset: &Dataset, features: &[usize], model: ModelKind, seed: u64) -> Result<BenefitReport> {
    let pairs = match_pairs(dataset, features)?;
    let per_patient = predicted_benefit(dataset, features, model, seed)?;
    let predicted: Vec<f64> = pairs
        .iter()
        .map(|p| 0.5 * (per_patient[p.a] + per_patient[p.b]))
        .collect();
    let observed = observed_benefit(dataset, &pairs);
    let c = c_for_benefit(&predicted, &observed)?;
    Ok(BenefitReport {
        pairs,
        predicted,
        observed,
        c_for_benefit: c,
    })
}
