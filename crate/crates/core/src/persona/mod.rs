//! Persona extraction: exhaustive 2–4 variable conjunction search with exact
//! tests and false-discovery control, bootstrap validation, and selective
//! relabeling with a "no call" remainder.

pub mod conditions;
pub mod stats;

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use conditions::{enumerate_conditions, Bound, Condition};
pub use stats::{bh_qvalues, bh_reject, decile_bins, fisher_exact, nmi, FisherTable};

use crate::error::{Error, Result};
use crate::evolve::RunResult;
use crate::ingest::Dataset;
use crate::scoring::cluster_states;
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Responder,
    NonResponder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constraints {
    pub min_size: usize,
    pub min_effect: f64,
    pub alpha: f64,
    pub max_vars: usize,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            min_size: 8,
            min_effect: 0.2,
            alpha: 0.05,
            max_vars: 4,
        }
    }
}

impl Constraints {
    /// Defaults with `min_size = max(8, ⌈0.05 n⌉)`.
    pub fn for_n(n: usize) -> Self {
        Constraints {
            min_size: 8.max(n.div_ceil(20)),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.max_vars) {
            return Err(Error::config("persona.max_vars", "must lie in 2..=4"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("persona.alpha", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.min_effect) {
            return Err(Error::config("persona.min_effect", "must lie in [0, 1]"));
        }
        if self.min_size == 0 {
            return Err(Error::config("persona.min_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub conditions: Vec<Condition>,
    pub n: usize,
    pub member_count: usize,
    pub positives_in: usize,
    pub positives_total: usize,
    pub response_rate_in: f64,
    pub response_rate_out: f64,
    pub response_rate_overall: f64,
    /// Absolute risk difference.
    pub effect_size: f64,
    /// Haldane-corrected when a cell is empty.
    pub odds_ratio: f64,
    pub p_value: f64,
    pub q_value: f64,
    pub stability: Option<f64>,
    pub role: Role,
}

/// Conjunction of the condition masks.
pub fn conjunction_mask(conditions: &[Condition], dataset: &Dataset) -> Vec<bool> {
    let mut m = vec![true; dataset.n()];
    for c in conditions {
        for (acc, hit) in m.iter_mut().zip(c.mask(dataset)) {
            *acc &= hit;
        }
    }
    m
}

fn rates(n: usize, total_pos: usize, size: usize, inside: usize) -> (f64, f64) {
    let rin = if size > 0 { inside as f64 / size as f64 } else { 0.0 };
    let rout = if size < n {
        (total_pos - inside) as f64 / (n - size) as f64
    } else {
        0.0
    };
    (rin, rout)
}

impl Persona {
    /// Statistics recomputed from the raw dataset; `q_value` is set to the
    /// nominal p-value.
    pub fn from_conditions(conditions: Vec<Condition>, dataset: &Dataset) -> Result<Persona> {
        let mask = conjunction_mask(&conditions, dataset);
        let y = dataset.outcome();
        let n = dataset.n();
        let member_count = mask.iter().filter(|&&b| b).count();
        let positives_in = mask
            .iter()
            .zip(y)
            .filter(|(&m, &y)| m && y == 1)
            .count();
        let positives_total = dataset.positives();
        let table = contingency(n, positives_total, member_count, positives_in);
        let p_value = fisher_exact(table)?;
        let (rin, rout) = rates(n, positives_total, member_count, positives_in);
        Ok(Persona {
            conditions,
            n,
            member_count,
            positives_in,
            positives_total,
            response_rate_in: rin,
            response_rate_out: rout,
            response_rate_overall: positives_total as f64 / n as f64,
            effect_size: (rin - rout).abs(),
            odds_ratio: odds_ratio(table),
            p_value,
            q_value: p_value,
            stability: None,
            role: if rin >= rout {
                Role::Responder
            } else {
                Role::NonResponder
            },
        })
    }

    /// Feature ids, ascending.
    pub fn variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.conditions.iter().map(|c| c.feature).collect();
        v.sort_unstable();
        v
    }

    pub fn mask(&self, dataset: &Dataset) -> Vec<bool> {
        conjunction_mask(&self.conditions, dataset)
    }

    /// `[[in & pos, in & neg], [out & pos, out & neg]]`.
    pub fn table(&self) -> [[u64; 2]; 2] {
        contingency(self.n, self.positives_total, self.member_count, self.positives_in)
    }

    pub fn coverage(&self) -> f64 {
        self.member_count as f64 / self.n as f64
    }
}

pub fn contingency(n: usize, total_pos: usize, size: usize, inside: usize) -> [[u64; 2]; 2] {
    let a = inside as u64;
    let b = (size - inside) as u64;
    let c = (total_pos - inside) as u64;
    let d = (n - size - (total_pos - inside)) as u64;
    [[a, b], [c, d]]
}

pub fn odds_ratio(t: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = t.map(|r| r.map(|v| v as f64));
    if a * b * c * d == 0.0 {
        ((a + 0.5) * (d + 0.5)) / ((b + 0.5) * (c + 0.5))
    } else {
        (a * d) / (b * c)
    }
}

/// Scores every feature by its normalised mutual information with the
/// cluster ids of each run's best configuration, re-cut at each resolution,
/// and returns the `top_n` best (mean score descending, then index).
pub fn rank_candidate_variables(
    runs: &[RunResult],
    dataset: &Dataset,
    resolutions: &[f64],
    top_n: usize,
) -> Vec<usize> {
    feature_scores(runs, dataset, resolutions)
        .into_iter()
        .take(top_n)
        .map(|(f, _)| f)
        .collect()
}

/// `(feature, mean NMI)` for every feature, best first.
pub fn feature_scores(runs: &[RunResult], dataset: &Dataset, resolutions: &[f64]) -> Vec<(usize, f64)> {
    let d = dataset.n_features();
    let bins: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            if dataset.is_categorical(f) {
                dataset.values(f).iter().map(|&v| v as usize).collect()
            } else {
                decile_bins(dataset.values(f))
            }
        })
        .collect();
    let mut sums = vec![0.0; d];
    let mut count = 0usize;
    for run in runs {
        for &res in resolutions {
            let ids = cluster_states(&run.best_states, res, run.reference_diameter);
            for (s, b) in sums.iter_mut().zip(&bins) {
                *s += nmi(b, &ids);
            }
            count += 1;
        }
    }
    let mut scored: Vec<(usize, f64)> = sums
        .into_iter()
        .enumerate()
        .map(|(f, s)| (f, if count > 0 { s / count as f64 } else { 0.0 }))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}

#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn from_mask(mask: &[bool]) -> Self {
        let mut w = vec![0u64; mask.len().div_ceil(64)];
        for (i, &b) in mask.iter().enumerate() {
            if b {
                w[i / 64] |= 1 << (i % 64);
            }
        }
        Bits(w)
    }

    fn and_into(&self, other: &Bits, out: &mut Bits) -> usize {
        let mut k = 0;
        for ((o, a), b) in out.0.iter_mut().zip(&self.0).zip(&other.0) {
            *o = a & b;
            k += o.count_ones() as usize;
        }
        k
    }

    fn count_and(&self, other: &Bits) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }
}

#[derive(Debug, Clone)]
struct Best {
    p: f64,
    effect: f64,
    conds: Vec<usize>,
    size: usize,
    inside: usize,
}

impl Best {
    fn beats(&self, other: &Best) -> bool {
        self.p < other.p || (self.p == other.p && self.effect > other.effect)
    }
}

/// Diagnostics of one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    /// Number of conjunctions in the multiplicity family.
    pub tested: f64,
    /// Conjunctions meeting the size and effect floors.
    pub eligible: u64,
    /// Largest p-value rejected by the step-up procedure.
    pub p_cutoff: Option<f64>,
    /// Variable sets whose best conjunction was rejected, before the
    /// minimality filter.
    pub significant_sets: usize,
}

pub fn search_personas(
    dataset: &Dataset,
    candidates: &[usize],
    constraints: &Constraints,
) -> Result<Vec<Persona>> {
    search_personas_detailed(dataset, candidates, constraints).map(|(p, _)| p)
}

fn combinations(n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), out);
}

struct Ctx<'a> {
    conds: &'a [Vec<Bits>],
    y: &'a Bits,
    fisher: &'a FisherTable,
    n: usize,
    pos: usize,
    c: &'a Constraints,
    all: &'a Bits,
}

fn descend(
    ctx: &Ctx<'_>,
    combo: &[usize],
    depth: usize,
    scratch: &mut [Bits],
    picked: &mut Vec<usize>,
    best: &mut Option<Best>,
    hist: &mut [u64],
) {
    let var = combo[depth];
    for (ci, bits) in ctx.conds[var].iter().enumerate() {
        let size = {
            let (done, rest) = scratch.split_at_mut(depth);
            let prefix = done.last().unwrap_or(ctx.all);
            prefix.and_into(bits, &mut rest[0])
        };
        if size < ctx.c.min_size {
            continue;
        }
        picked.push(ci);
        if depth + 1 == combo.len() {
            let inside = scratch[depth].count_and(ctx.y);
            if size < ctx.n {
                let (rin, rout) = rates(ctx.n, ctx.pos, size, inside);
                let effect = (rin - rout).abs();
                if effect >= ctx.c.min_effect {
                    hist[size * (ctx.pos + 1) + inside] += 1;
                    let cand = Best {
                        p: ctx.fisher.p_value(size, inside),
                        effect,
                        conds: picked.clone(),
                        size,
                        inside,
                    };
                    if best.as_ref().is_none_or(|b| cand.beats(b)) {
                        *best = Some(cand);
                    }
                }
            }
        } else {
            descend(ctx, combo, depth + 1, scratch, picked, best, hist);
        }
        picked.pop();
    }
}

/// Exhaustive search with the step-up false-discovery procedure applied to
/// every enumerated conjunction. Conjunctions below the size or effect floor
/// count in the family with p = 1. For each variable set only its best
/// conjunction can become a persona, and a significant set is dropped when
/// it strictly contains another significant set.
pub fn search_personas_detailed(
    dataset: &Dataset,
    candidates: &[usize],
    constraints: &Constraints,
) -> Result<(Vec<Persona>, SearchSummary)> {
    constraints.validate()?;
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate variables".into()));
    }
    if let Some(&bad) = candidates.iter().find(|&&f| f >= dataset.n_features()) {
        return Err(Error::UnknownFeature(format!("feature index {bad}")));
    }
    let mut vars = candidates.to_vec();
    vars.sort_unstable();
    vars.dedup();

    let n = dataset.n();
    let pos = dataset.positives();
    let cond_lists: Vec<Vec<Condition>> = vars.iter().map(|&f| enumerate_conditions(f, dataset)).collect();
    let cond_bits: Vec<Vec<Bits>> = cond_lists
        .iter()
        .map(|l| l.iter().map(|c| Bits::from_mask(&c.mask(dataset))).collect())
        .collect();
    let y = Bits::from_mask(&dataset.outcome().iter().map(|&v| v == 1).collect::<Vec<_>>());
    let fisher = FisherTable::new(n, pos);

    let mut combos = Vec::new();
    for k in 2..=constraints.max_vars.min(vars.len()) {
        combinations(vars.len(), k, &mut combos);
    }
    let tested: f64 = combos
        .iter()
        .map(|c| c.iter().map(|&v| cond_lists[v].len() as f64).product::<f64>())
        .sum();

    let all = Bits(vec![u64::MAX; y.0.len()]);
    let ctx = Ctx {
        conds: &cond_bits,
        y: &y,
        fisher: &fisher,
        n,
        pos,
        c: constraints,
        all: &all,
    };
    let cells = (n + 1) * (pos + 1);
    let (mut bests, hist) = combos
        .par_iter()
        .enumerate()
        .fold(
            || (Vec::new(), vec![0u64; cells]),
            |(mut bests, mut hist), (ci, combo)| {
                let mut scratch = vec![Bits(vec![0; y.0.len()]); combo.len()];
                let mut best = None;
                descend(&ctx, combo, 0, &mut scratch, &mut Vec::new(), &mut best, &mut hist);
                if let Some(b) = best {
                    bests.push((ci, b));
                }
                (bests, hist)
            },
        )
        .reduce(
            || (Vec::new(), vec![0u64; cells]),
            |(mut b1, mut h1), (b2, h2)| {
                b1.extend(b2);
                h1.iter_mut().zip(h2).for_each(|(a, b)| *a += b);
                (b1, h1)
            },
        );
    bests.sort_by_key(|(ci, _)| *ci);

    // Step-up procedure over the (size, inside) histogram.
    let mut cells_p: Vec<(f64, usize, u64)> = hist
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (fisher.p_value(i / (pos + 1), i % (pos + 1)), i, c))
        .collect();
    cells_p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let eligible: u64 = cells_p.iter().map(|c| c.2).sum();
    // Cumulative counts with ties in p pooled.
    let mut cum = vec![0u64; cells_p.len()];
    let mut acc = 0u64;
    let mut i = 0;
    while i < cells_p.len() {
        let mut j = i;
        while j < cells_p.len() && cells_p[j].0 == cells_p[i].0 {
            acc += cells_p[j].2;
            j += 1;
        }
        cum[i..j].iter_mut().for_each(|c| *c = acc);
        i = j;
    }
    let mut q_of_cell: HashMap<usize, f64> = HashMap::new();
    let mut running = 1.0f64;
    let mut p_cutoff = None;
    for idx in (0..cells_p.len()).rev() {
        let (p, cell, _) = cells_p[idx];
        let bh = p * tested / cum[idx] as f64;
        running = running.min(bh);
        q_of_cell.insert(cell, running.min(1.0));
        if p_cutoff.is_none() && p <= cum[idx] as f64 * constraints.alpha / tested {
            p_cutoff = Some(p);
        }
    }

    let significant: Vec<&(usize, Best)> = match p_cutoff {
        Some(cut) => bests.iter().filter(|(_, b)| b.p <= cut).collect(),
        None => Vec::new(),
    };
    let var_sets: Vec<Vec<usize>> = significant
        .iter()
        .map(|(ci, _)| combos[*ci].clone())
        .collect();
    let minimal = |s: &Vec<usize>| {
        !var_sets
            .iter()
            .any(|o| o.len() < s.len() && o.iter().all(|v| s.contains(v)))
    };

    let mut out: Vec<(Vec<(usize, usize)>, Persona)> = Vec::new();
    for ((ci, b), set) in significant.iter().zip(&var_sets) {
        if !minimal(set) {
            continue;
        }
        let combo = &combos[*ci];
        let conditions: Vec<Condition> = combo
            .iter()
            .zip(&b.conds)
            .map(|(&v, &c)| cond_lists[v][c].clone())
            .collect();
        let mut persona = Persona::from_conditions(conditions, dataset)?;
        debug_assert_eq!((persona.member_count, persona.positives_in), (b.size, b.inside));
        persona.q_value = q_of_cell[&(b.size * (pos + 1) + b.inside)];
        let key = combo.iter().map(|&v| vars[v]).zip(b.conds.iter().copied()).collect();
        out.push((key, persona));
    }
    out.sort_by(|(ka, a), (kb, b)| {
        a.q_value
            .total_cmp(&b.q_value)
            .then(b.effect_size.total_cmp(&a.effect_size))
            .then(ka.cmp(kb))
    });
    let summary = SearchSummary {
        tested,
        eligible,
        p_cutoff,
        significant_sets: var_sets.len(),
    };
    Ok((out.into_iter().map(|(_, p)| p).collect(), summary))
}

/// Fraction of `b` bootstrap resamples in which the persona still has
/// Fisher p ≤ 0.05, effect at least `min_effect`, and the same direction.
/// Resamples where it matches nobody or everybody fail.
pub fn bootstrap_validate(persona: &Persona, dataset: &Dataset, min_effect: f64, b: usize, seed: u64) -> f64 {
    let mask = persona.mask(dataset);
    let y = dataset.outcome();
    let n = dataset.n();
    let mut rng = seed::rng(seed);
    let mut ok = 0usize;
    for _ in 0..b {
        let (mut size, mut inside, mut pos) = (0usize, 0usize, 0usize);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let yi = y[i] as usize;
            pos += yi;
            if mask[i] {
                size += 1;
                inside += yi;
            }
        }
        if size == 0 || size == n {
            continue;
        }
        let (rin, rout) = rates(n, pos, size, inside);
        let same_dir = match persona.role {
            Role::Responder => rin > rout,
            Role::NonResponder => rin < rout,
        };
        if !same_dir || (rin - rout).abs() < min_effect {
            continue;
        }
        let p = fisher_exact(contingency(n, pos, size, inside)).unwrap_or(1.0);
        if p <= 0.05 {
            ok += 1;
        }
    }
    ok as f64 / b as f64
}

pub const DEFAULT_BOOTSTRAP: usize = 200;
pub const STABILITY_FLOOR: f64 = 0.7;

/// Sets `stability` on every persona and splits them into kept and
/// rejected, preserving order.
pub fn validate_personas(
    personas: Vec<Persona>,
    dataset: &Dataset,
    min_effect: f64,
    b: usize,
    seed: u64,
) -> (Vec<Persona>, Vec<Persona>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (i, mut p) in personas.into_iter().enumerate() {
        let s = bootstrap_validate(&p, dataset, min_effect, b, seed::derive(seed, Stream::Bootstrap, i as u64));
        p.stability = Some(s);
        if s >= STABILITY_FLOOR {
            kept.push(p);
        } else {
            rejected.push(p);
        }
    }
    (kept, rejected)
}

pub const DEFAULT_MAX_OVERLAP: f64 = 0.5;

/// Drops personas that mostly re-describe a stronger one. Personas are
/// visited by p-value (then effect, then input order); one is dropped when
/// at least `max_overlap` of its members already belong to a kept persona.
/// The survivors keep their input order.
pub fn prune_redundant(personas: Vec<Persona>, dataset: &Dataset, max_overlap: f64) -> (Vec<Persona>, Vec<Persona>) {
    let masks: Vec<Vec<bool>> = personas.iter().map(|p| p.mask(dataset)).collect();
    let mut order: Vec<usize> = (0..personas.len()).collect();
    order.sort_by(|&a, &b| {
        personas[a]
            .p_value
            .total_cmp(&personas[b].p_value)
            .then(personas[b].effect_size.total_cmp(&personas[a].effect_size))
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; personas.len()];
    let mut kept_masks: Vec<&[bool]> = Vec::new();
    for i in order {
        let size = masks[i].iter().filter(|&&m| m).count();
        let redundant = kept_masks.iter().any(|k| {
            let shared = masks[i].iter().zip(k.iter()).filter(|(a, b)| **a && **b).count();
            shared as f64 >= max_overlap * size as f64
        });
        if !redundant {
            keep[i] = true;
            kept_masks.push(&masks[i]);
        }
    }
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for (p, k) in personas.into_iter().zip(keep) {
        if k {
            kept.push(p);
        } else {
            dropped.push(p);
        }
    }
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relabeling {
    /// Index into the persona list, or `None` for no call.
    pub labels: Vec<Option<usize>>,
    /// Persona indices in precedence order.
    pub precedence: Vec<usize>,
    pub counts: Vec<usize>,
    pub coverage: f64,
}

impl Relabeling {
    pub fn no_call_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// First-match assignment with personas tried in effect-descending order.
pub fn relabel(dataset: &Dataset, personas: &[Persona]) -> Relabeling {
    let mut precedence: Vec<usize> = (0..personas.len()).collect();
    precedence.sort_by(|&a, &b| personas[b].effect_size.total_cmp(&personas[a].effect_size));
    let masks: Vec<Vec<bool>> = personas.iter().map(|p| p.mask(dataset)).collect();
    let n = dataset.n();
    let labels: Vec<Option<usize>> = (0..n)
        .map(|i| precedence.iter().copied().find(|&k| masks[k][i]))
        .collect();
    let mut counts = vec![0; personas.len()];
    for k in labels.iter().flatten() {
        counts[*k] += 1;
    }
    let called = labels.iter().filter(|l| l.is_some()).count();
    Relabeling {
        labels,
        precedence,
        counts,
        coverage: if n > 0 { called as f64 / n as f64 } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort() -> Dataset {
        // x high and z low together mark responders
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64).collect();
        let z: Vec<f64> = (0..n).map(|i| ((i * 11 + 5) % n) as f64).collect();
        let w: Vec<f64> = (0..n).map(|i| ((i * 23 + 7) % n) as f64).collect();
        let y: Vec<u8> = (0..n)
            .map(|i| u8::from((x[i] > 30.0 && z[i] < 30.0) || i % 7 == 0))
            .collect();
        Dataset::from_numeric(&["x", "z", "w"], &[x, z, w], &y).unwrap()
    }

    #[test]
    fn default_min_size() {
        assert_eq!(Constraints::for_n(100).min_size, 8);
        assert_eq!(Constraints::for_n(200).min_size, 10);
        assert_eq!(Constraints::for_n(201).min_size, 11);
    }

    #[test]
    fn two_condition_persona_is_representable() {
        // 15% of 200, 80% vs 50%
        let n = 200;
        let t = contingency(n, 24 + 85, 30, 24);
        assert_eq!(t, [[24, 6], [85, 85]]);
        let rin = 24.0 / 30.0;
        let rout = 85.0 / 170.0;
        assert!((rin - 0.8f64).abs() < 1e-12 && (rout - 0.5f64).abs() < 1e-12);
        let p = fisher_exact(t).unwrap();
        assert!(p < 0.01, "{p}");
    }

    #[test]
    fn search_finds_the_conjunction() {
        let d = cohort();
        let c = Constraints {
            min_size: 5,
            ..Constraints::for_n(d.n())
        };
        let (found, summary) = search_personas_detailed(&d, &[0, 1, 2], &c).unwrap();
        assert!(summary.tested > 0.0);
        assert!(!found.is_empty());
        assert_eq!(found[0].variables(), vec![0, 1]);
        for p in &found {
            let again = Persona::from_conditions(p.conditions.clone(), &d).unwrap();
            assert_eq!(again.member_count, p.member_count);
            assert_eq!(again.p_value, p.p_value);
            assert!(p.q_value >= p.p_value);
        }
        assert!(matches!(
            search_personas(&d, &[9], &c),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn relabel_precedence() {
        let d = cohort();
        assert!(relabel(&d, &[]).labels.iter().all(Option::is_none));
        let c = |f: usize, v: f64| Condition {
            feature: f,
            name: d.column(f).name.clone(),
            bound: Bound::Gt { value: v },
        };
        let weak = Persona::from_conditions(vec![c(0, 10.0), c(2, 10.0)], &d).unwrap();
        let mut strong = Persona::from_conditions(vec![c(0, 20.0), c(2, 20.0)], &d).unwrap();
        strong.effect_size = weak.effect_size + 0.5;
        let r = relabel(&d, &[weak.clone(), strong.clone()]);
        let sm = strong.mask(&d);
        for (i, l) in r.labels.iter().enumerate() {
            if sm[i] {
                assert_eq!(*l, Some(1));
            }
        }
        assert_eq!(r, relabel(&d, &[weak, strong]));
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let d = cohort();
        let c = Constraints {
            min_size: 5,
            ..Constraints::for_n(d.n())
        };
        let found = search_personas(&d, &[0, 1], &c).unwrap();
        let a = bootstrap_validate(&found[0], &d, 0.2, 100, 5);
        assert_eq!(a, bootstrap_validate(&found[0], &d, 0.2, 100, 5));
        assert!((0.0..=1.0).contains(&a));
    }
}
