//! Meta layer between generations: observes reports, tracks how often the
//! same persona recurs, and seeds the next generation with priority
//! variables. Every observation and piece of advice is written to the audit
//! log so the advice can be replayed.

pub mod audit;
pub mod tokens;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use audit::{read_audit, AuditEvent, AuditLog, AuditRecord};
pub use tokens::{encode_skeleton, encode_tokens, format_p, parse_tokens, TokenCondition, TokenContext, TokenPersona};

use crate::error::Result;
use crate::persona::{Bound, Persona};

/// What a generation hands to the strategist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    pub run_ids: Vec<usize>,
    pub losses: Vec<f64>,
    pub personas: Vec<Persona>,
    pub newly_skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub fingerprint: String,
    pub recurrence: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategistAdvice {
    pub priority_variables: Vec<usize>,
    pub rationale: String,
    pub flags: Vec<Flag>,
}

pub trait Strategist {
    fn observe(&mut self, report: &GenerationReport) -> Result<()>;
    fn advise(&mut self) -> Result<StrategistAdvice>;
}

/// Rounds to three significant digits.
fn sig3(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let e = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(2 - e);
    format!("{}", (v * scale).round() / scale)
}

/// Sorted variables with their discretised bounds.
pub fn fingerprint(persona: &Persona) -> String {
    let mut parts: Vec<(usize, String)> = persona
        .conditions
        .iter()
        .map(|c| {
            let b = match &c.bound {
                Bound::Gt { value } => format!(">{}", sig3(*value)),
                Bound::Lt { value } => format!("<{}", sig3(*value)),
                Bound::Between { low, high } => format!("[{},{}]", sig3(*low), sig3(*high)),
                Bound::Equals { level } => format!("={level}"),
            };
            (c.feature, format!("{}{}", c.feature, b))
        })
        .collect();
    parts.sort();
    parts.into_iter().map(|(_, s)| s).collect::<Vec<_>>().join("&")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Seen {
    variables: Vec<usize>,
    recurrence: usize,
    /// Sum of effect sizes over sightings, i.e. recurrence times mean effect.
    effect_sum: f64,
}

/// Default strategist: priority by accumulated `recurrence x effect`.
pub struct HeuristicStrategist {
    n_features: usize,
    skipped: BTreeSet<usize>,
    seen: BTreeMap<String, Seen>,
    log: Option<AuditLog>,
}

impl HeuristicStrategist {
    pub fn new(n_features: usize) -> Self {
        HeuristicStrategist {
            n_features,
            skipped: BTreeSet::new(),
            seen: BTreeMap::new(),
            log: None,
        }
    }

    pub fn with_log(mut self, log: AuditLog) -> Self {
        self.log = Some(log);
        self
    }

    pub fn log_mut(&mut self) -> Option<&mut AuditLog> {
        self.log.as_mut()
    }

    pub fn recurrence(&self, fp: &str) -> usize {
        self.seen.get(fp).map_or(0, |s| s.recurrence)
    }

    /// Rebuilds the state by folding the observations recorded in an audit
    /// log.
    pub fn replay(path: impl AsRef<Path>, n_features: usize) -> Result<Self> {
        let mut s = HeuristicStrategist::new(n_features);
        for rec in read_audit(path)? {
            if rec.event == AuditEvent::Observation {
                let report: GenerationReport = serde_json::from_value(rec.payload)?;
                s.fold(&report);
            }
        }
        Ok(s)
    }

    fn fold(&mut self, report: &GenerationReport) {
        self.skipped.extend(report.newly_skipped.iter().copied());
        for p in &report.personas {
            let e = self.seen.entry(fingerprint(p)).or_default();
            e.variables = p.variables();
            e.recurrence += 1;
            e.effect_sum += p.effect_size;
        }
    }

    /// Variable scores without the audit side effect.
    pub fn scores(&self) -> Vec<(usize, f64)> {
        let mut score: BTreeMap<usize, f64> = BTreeMap::new();
        for s in self.seen.values() {
            for &v in &s.variables {
                *score.entry(v).or_insert(0.0) += s.effect_sum;
            }
        }
        let mut out: Vec<(usize, f64)> = score
            .into_iter()
            .filter(|(v, _)| *v < self.n_features && !self.skipped.contains(v))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn current_advice(&self) -> StrategistAdvice {
        let scores = self.scores();
        let flags: Vec<Flag> = self
            .seen
            .iter()
            .filter(|(_, s)| s.recurrence >= 2)
            .map(|(fp, s)| Flag {
                fingerprint: fp.clone(),
                recurrence: s.recurrence,
            })
            .collect();
        let rationale = if scores.is_empty() {
            "no recurring personas observed yet; members start from plain shuffles".to_string()
        } else {
            let top: Vec<String> = scores
                .iter()
                .take(5)
                .map(|(v, s)| format!("{v} ({s:.3})"))
                .collect();
            format!(
                "variables ranked by recurrence-weighted effect: {}; {} fingerprint(s) seen at least twice",
                top.join(", "),
                flags.len()
            )
        };
        StrategistAdvice {
            priority_variables: scores.into_iter().map(|(v, _)| v).collect(),
            rationale,
            flags,
        }
    }
}

impl Strategist for HeuristicStrategist {
    fn observe(&mut self, report: &GenerationReport) -> Result<()> {
        self.fold(report);
        if let Some(log) = self.log.as_mut() {
            log.append(
                AuditEvent::Observation,
                serde_json::to_value(report)?,
                &format!(
                    "generation {} with {} member(s) and {} scanned persona(s)",
                    report.generation,
                    report.run_ids.len(),
                    report.personas.len()
                ),
            )?;
        }
        Ok(())
    }

    fn advise(&mut self) -> Result<StrategistAdvice> {
        let advice = self.current_advice();
        if let Some(log) = self.log.as_mut() {
            log.append(
                AuditEvent::Advice,
                json!({
                    "priority_variables": advice.priority_variables,
                    "flags": advice.flags,
                }),
                &advice.rationale,
            )?;
        }
        Ok(advice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::{Condition, Role};

    fn persona(conds: &[(usize, f64)], effect: f64) -> Persona {
        Persona {
            conditions: conds
                .iter()
                .map(|&(f, v)| Condition {
                    feature: f,
                    name: format!("f{f}"),
                    bound: Bound::Gt { value: v },
                })
                .collect(),
            n: 100,
            member_count: 20,
            positives_in: 15,
            positives_total: 50,
            response_rate_in: 0.75,
            response_rate_out: 0.4375,
            response_rate_overall: 0.5,
            effect_size: effect,
            odds_ratio: 1.0,
            p_value: 0.01,
            q_value: 0.02,
            stability: None,
            role: Role::Responder,
        }
    }

    fn report(personas: Vec<Persona>) -> GenerationReport {
        GenerationReport {
            generation: 0,
            run_ids: vec![0],
            losses: vec![0.5],
            personas,
            newly_skipped: vec![],
        }
    }

    #[test]
    fn cold_start_is_empty() {
        let mut s = HeuristicStrategist::new(10);
        assert!(s.advise().unwrap().priority_variables.is_empty());
    }

    #[test]
    fn recurrence_and_priorities() {
        let mut s = HeuristicStrategist::new(10);
        let p = persona(&[(7, 1.0), (3, -1.0)], 0.3);
        for _ in 0..3 {
            s.observe(&report(vec![p.clone()])).unwrap();
        }
        assert_eq!(s.recurrence(&fingerprint(&p)), 3);
        let a = s.advise().unwrap();
        assert_eq!(a.priority_variables, vec![3, 7]);
        assert_eq!(a.flags.len(), 1);
        assert_eq!(a.flags[0].recurrence, 3);
    }

    #[test]
    fn distinct_thresholds_distinct_fingerprints() {
        let a = persona(&[(1, 0.25), (2, 0.5)], 0.3);
        let b = persona(&[(1, 0.52), (2, 0.5)], 0.3);
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a), "1>0.25&2>0.5");
    }

    #[test]
    fn two_personas_outrank_one() {
        let mut s = HeuristicStrategist::new(10);
        s.observe(&report(vec![
            persona(&[(5, 0.0), (1, 0.0)], 0.3),
            persona(&[(5, 1.0), (2, 0.0)], 0.3),
        ]))
        .unwrap();
        assert_eq!(s.advise().unwrap().priority_variables[0], 5);
    }

    #[test]
    fn advice_stays_inside_schema() {
        let mut s = HeuristicStrategist::new(4);
        s.observe(&report(vec![persona(&[(2, 0.0), (9, 0.0)], 0.4)])).unwrap();
        assert_eq!(s.advise().unwrap().priority_variables, vec![2]);
    }

    #[test]
    fn replay_reproduces_advice() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        let mut s = HeuristicStrategist::new(10).with_log(AuditLog::open(&path, "t").unwrap());
        s.observe(&report(vec![persona(&[(4, 0.1), (6, 2.0)], 0.25)])).unwrap();
        s.observe(&report(vec![persona(&[(4, 0.1), (8, 2.0)], 0.5)])).unwrap();
        let live = s.advise().unwrap();
        let replayed = HeuristicStrategist::replay(&path, 10).unwrap().current_advice();
        assert_eq!(live, replayed);
    }
}
