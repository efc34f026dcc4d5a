//! Cross-validated classifier metrics before and after persona relabeling.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::models::{fit_predict, ModelKind};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::persona::{Persona, Relabeling, Role};
use crate::seed::{self, Stream};

/// Mann–Whitney AUC with mid-ranks, so tied scores count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n = scores.len();
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = (0..n).filter(|&k| labels[k] == 1).map(|k| ranks[k]).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Fold index per patient: each class is shuffled and dealt round-robin,
/// continuing where the previous class stopped.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::config("folds", "need at least 2 folds"));
    }
    let mut folds = vec![0; labels.len()];
    let mut rng = seed::rng(seed::derive(seed, Stream::Folds, k as u64));
    let mut next = 0;
    for class in [1u8, 0] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::SingleClass(format!(
                "class {class} has {} patient(s), fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Threshold metrics at 0.5 plus AUC.
pub fn metrics(scores: &[f64], labels: &[u8]) -> Result<Metrics> {
    let (mut tp, mut tn, mut fp, mut fneg) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= 0.5, y == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
        }
    }
    Ok(Metrics {
        auc: auc(scores, labels)?,
        accuracy: ratio(tp + tn, labels.len()),
        sensitivity: ratio(tp, tp + fneg),
        specificity: ratio(tn, tn + fp),
        f1: ratio(2 * tp, 2 * tp + fp + fneg),
    })
}

/// Out-of-fold predictions for every row.
pub fn cross_val_predict(
    kind: ModelKind,
    x: &[Vec<f64>],
    y: &[u8],
    folds: &[usize],
    k: usize,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; y.len()];
    for f in 0..k {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] != f);
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<u8> = train.iter().map(|&i| y[i]).collect();
        let qx: Vec<Vec<f64>> = test.iter().map(|&i| x[i].clone()).collect();
        for (&i, p) in test.iter().zip(fit_predict(kind, &tx, &ty, &qx)?) {
            out[i] = p;
        }
    }
    Ok(out)
}

/// Pooled out-of-fold metrics.
pub fn cross_validate(kind: ModelKind, x: &[Vec<f64>], y: &[u8], k: usize, seed: u64) -> Result<Metrics> {
    let folds = stratified_kfold(y, k, seed)?;
    metrics(&cross_val_predict(kind, x, y, &folds, k)?, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AfterArm {
    /// Called patients labeled by their persona's role.
    PersonaLabels,
    /// Called patients hold a single role; persona membership against the
    /// no-call background on all patients.
    MembershipVsBackground,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub model: ModelKind,
    pub before: Metrics,
    pub after: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<ModelEval>,
    pub coverage: f64,
    pub called: usize,
    pub n: usize,
    pub after_arm: AfterArm,
    pub after_features: Vec<String>,
    pub folds: String,
    pub note: Option<String>,
}

impl EvalReport {
    pub fn best_before_auc(&self) -> f64 {
        self.models.iter().map(|m| m.before.auc).fold(f64::NAN, f64::max)
    }

    pub fn best_after_auc(&self) -> Option<f64> {
        self.models.iter().filter_map(|m| m.after.map(|a| a.auc)).reduce(f64::max)
    }

    /// Aligned model x before/after table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:<7} {:>6} {:>8} {:>6} {:>6} {:>6}",
            "model", "arm", "AUC", "accuracy", "sens", "spec", "F1"
        );
        let mut row = |model: &str, arm: &str, m: &Metrics| {
            let _ = writeln!(
                s,
                "{:<10} {:<7} {:>6.3} {:>8.3} {:>6.3} {:>6.3} {:>6.3}",
                model, arm, m.auc, m.accuracy, m.sensitivity, m.specificity, m.f1
            );
        };
        for m in &self.models {
            row(m.model.name(), "before", &m.before);
            if let Some(a) = &m.after {
                row(m.model.name(), "after", a);
            }
        }
        let _ = writeln!(
            s,
            "coverage {:.1}% ({} of {} called), {}",
            100.0 * self.coverage,
            self.called,
            self.n,
            self.folds
        );
        if let Some(note) = &self.note {
            let _ = writeln!(s, "{note}");
        }
        s
    }
}

/// BEFORE: every model on all features and patients. AFTER: the same models
/// on the persona variables only, on the called patients with persona role
/// labels. Personas are fixed before cross-validation.
pub fn improvement_gain(
    dataset: &Dataset,
    personas: &[Persona],
    relabeling: &Relabeling,
    models: &[ModelKind],
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let n = dataset.n();
    let all: Vec<usize> = (0..dataset.n_features()).collect();
    let x: Vec<Vec<f64>> = (0..n).map(|i| dataset.row(i, &all)).collect();
    let y = dataset.outcome();
    let mut evals = Vec::new();
    for &m in models {
        evals.push(ModelEval {
            model: m,
            before: cross_validate(m, &x, y, k, seed)?,
            after: None,
        });
    }
    let called: Vec<usize> = (0..n).filter(|&i| relabeling.labels[i].is_some()).collect();
    let folds = format!("stratified {k}-fold, seed {seed}");
    if personas.is_empty() || called.is_empty() {
        return Ok(EvalReport {
            models: evals,
            coverage: 0.0,
            called: 0,
            n,
            after_arm: AfterArm::Absent,
            after_features: Vec::new(),
            folds,
            note: Some("no personas: every patient is a no call, AFTER arm absent".into()),
        });
    }
    let mut feats: Vec<usize> = personas.iter().flat_map(|p| p.variables()).collect();
    feats.sort_unstable();
    feats.dedup();
    let role_label = |i: usize| {
        let p = &personas[relabeling.labels[i].expect("called")];
        u8::from(p.role == Role::Responder)
    };
    let labels: Vec<u8> = called.iter().map(|&i| role_label(i)).collect();
    let both = labels.contains(&0) && labels.contains(&1);
    let (rows, ys, arm, note) = if both {
        (called.clone(), labels, AfterArm::PersonaLabels, None)
    } else {
        let fallback: Vec<u8> = relabeling.labels.iter().map(|l| u8::from(l.is_some())).collect();
        (
            (0..n).collect(),
            fallback,
            AfterArm::MembershipVsBackground,
            Some(
                "called patients share one role; AFTER arm scores persona membership against the no-call background"
                    .to_string(),
            ),
        )
    };
    let xs: Vec<Vec<f64>> = rows.iter().map(|&i| dataset.row(i, &feats)).collect();
    for e in evals.iter_mut() {
        e.after = Some(cross_validate(e.model, &xs, &ys, k, seed)?);
    }
    Ok(EvalReport {
        models: evals,
        coverage: relabeling.coverage,
        called: called.len(),
        n,
        after_arm: arm,
        after_features: feats.iter().map(|&f| dataset.column(f).name.clone()).collect(),
        folds,
        note,
    })
}
