//! Population search over feature orderings.
//!
//! Each generation runs `P` independent dynamics runs, credits features by
//! the loss change of their steps, reinforces feature weights, and seeds the
//! next generation from the strategist's priorities plus crossovers of the
//! best members.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_until_stop, AffinityCache, EngineConfig, FeatureSequence, StateMatrix, Trajectory};
use crate::error::{Error, Result};
use crate::persona::{self, Persona};
use crate::scoring::{Bce, ClusterPartition, Scorer};
use crate::seed::{self, Stream};
use crate::strategist::{GenerationReport, Strategist, StrategistAdvice};

/// Outcome of one dynamics run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: usize,
    pub seed: u64,
    pub sequence: FeatureSequence,
    pub best_states: StateMatrix,
    pub best_partition: ClusterPartition,
    pub best_loss: Bce,
    pub best_cycle: usize,
    pub cycles_executed: usize,
    pub cycle_losses: Vec<f64>,
    /// Loss decrease of each feature's step within the best cycle.
    pub feature_credit: BTreeMap<usize, f64>,
    pub reference_diameter: f64,
}

impl RunResult {
    pub fn active_features(&self) -> usize {
        self.sequence.active_count()
    }
}

/// Per-feature loss decrease over the steps `steps` of a trajectory. Step
/// `s` maps `history[s]` to `history[s + 1]`.
pub fn feature_credit(
    trajectory: &Trajectory,
    steps: Range<usize>,
    scorer: &dyn Scorer,
    reference_diameter: f64,
    outcome: &[u8],
) -> BTreeMap<usize, f64> {
    let mut credit = BTreeMap::new();
    if steps.is_empty() {
        return credit;
    }
    let loss = |s: usize| {
        scorer
            .score(&trajectory.history[s], reference_diameter, outcome)
            .loss
            .total
    };
    let mut before = loss(steps.start);
    for s in steps {
        let after = loss(s + 1);
        *credit.entry(trajectory.feature_at_step[s]).or_insert(0.0) += before - after;
        before = after;
    }
    credit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub population: usize,
    pub generations: usize,
    pub top_q: f64,
    /// eta
    pub learning_rate: f64,
    pub skip_threshold: f64,
    /// Length of the top-credit prefix each parent contributes.
    pub prefix_len: usize,
    /// Run a two-variable persona scan after every generation so the
    /// strategist can observe recurring bundles.
    pub scan_personas: bool,
    pub parallel: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            population: 16,
            generations: 5,
            top_q: 0.25,
            learning_rate: 0.2,
            skip_threshold: 0.05,
            prefix_len: 4,
            scan_personas: true,
            parallel: true,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::config("evolve.population", "must be at least 1"));
        }
        if self.generations == 0 {
            return Err(Error::config("evolve.generations", "must be at least 1"));
        }
        if !(self.top_q > 0.0 && self.top_q <= 0.5) {
            return Err(Error::config("evolve.top_q", "must lie in (0, 0.5]"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("evolve.learning_rate", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.skip_threshold) {
            return Err(Error::config("evolve.skip_threshold", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn parent_count(&self) -> usize {
        ((self.population as f64 * self.top_q).ceil() as usize).max(1)
    }
}

/// Shared feature weights of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightState {
    pub weights: Vec<f64>,
    pub skipped: BTreeSet<usize>,
}

impl WeightState {
    pub fn uniform(n_features: usize) -> Self {
        WeightState {
            weights: vec![1.0; n_features],
            skipped: BTreeSet::new(),
        }
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|f| !self.skipped.contains(f) && self.weights[*f] > 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub generation: usize,
    pub members: Vec<RunResult>,
    pub weights: WeightState,
}

/// One member's inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberPlan {
    pub sequence: FeatureSequence,
    pub engine: EngineConfig,
}

/// Builds the `P` members of a generation. Advice priorities lead every
/// order; member `i < children.len()` continues with crossover child `i`;
/// the remaining active features follow in a per-member shuffle.
pub fn spawn_generation(
    weights: &WeightState,
    engine: &EngineConfig,
    population: usize,
    advice: &StrategistAdvice,
    children: &[Vec<usize>],
    gen_seed: u64,
) -> Vec<MemberPlan> {
    let active: BTreeSet<usize> = weights.active().into_iter().collect();
    (0..population)
        .map(|idx| {
            let member_seed = seed::derive(gen_seed, Stream::Member, idx as u64);
            let mut order: Vec<usize> = Vec::with_capacity(active.len());
            let mut used = BTreeSet::new();
            let head = advice.priority_variables.iter();
            let child = children.get(idx).into_iter().flatten();
            for &f in head.chain(child) {
                if active.contains(&f) && used.insert(f) {
                    order.push(f);
                }
            }
            let mut rest: Vec<usize> = active.iter().copied().filter(|f| !used.contains(f)).collect();
            rest.shuffle(&mut seed::rng(member_seed));
            order.extend(rest);
            let mut sequence = FeatureSequence {
                order,
                weights: weights.weights.clone(),
                skipped: weights.skipped.clone(),
            };
            sequence.prune();
            MemberPlan {
                sequence,
                engine: EngineConfig {
                    seed: member_seed,
                    ..engine.clone()
                },
            }
        })
        .collect()
}

/// Multiplicative weight update from averaged credits. Returns the features
/// newly moved to `skipped`.
pub fn reinforce_weights(
    state: &mut WeightState,
    credits: &BTreeMap<usize, f64>,
    eta: f64,
    l_ref: f64,
    skip_threshold: f64,
) -> Vec<usize> {
    let mut newly = Vec::new();
    for (&f, &delta) in credits {
        if state.skipped.contains(&f) || delta == 0.0 {
            continue;
        }
        let ratio = if l_ref > 0.0 {
            (delta.abs() / l_ref).min(1.0)
        } else {
            1.0
        };
        let w = state.weights[f] * (eta * delta.signum() * ratio).exp();
        state.weights[f] = w.clamp(0.0, 1.0);
        if state.weights[f] < skip_threshold {
            state.skipped.insert(f);
            newly.push(f);
        }
    }
    newly
}

/// Mean credit per feature over the members whose sequence stepped it.
pub fn average_credits(members: &[RunResult]) -> BTreeMap<usize, f64> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for m in members {
        for (&f, &c) in &m.feature_credit {
            let e = sums.entry(f).or_insert((0.0, 0));
            e.0 += c;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(f, (s, k))| (f, s / k as f64))
        .collect()
}

/// Member indices ordered by `L/n`, then fewer active features, then index.
pub fn rank_members(members: &[RunResult]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..members.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ma, mb) = (&members[a], &members[b]);
        ma.best_loss
            .per_patient
            .total_cmp(&mb.best_loss.per_patient)
            .then(ma.active_features().cmp(&mb.active_features()))
            .then(a.cmp(&b))
    });
    idx
}

/// Features with positive credit, highest credit first, at most `len`.
pub fn credit_prefix(run: &RunResult, len: usize) -> Vec<usize> {
    let mut items: Vec<(usize, f64)> = run
        .feature_credit
        .iter()
        .filter(|(_, &c)| c > 0.0)
        .map(|(&f, &c)| (f, c))
        .collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    items.into_iter().take(len).map(|(f, _)| f).collect()
}

/// Alternates the two prefixes, dropping repeats.
pub fn interleave(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    for i in 0..a.len().max(b.len()) {
        for p in [a.get(i), b.get(i)].into_iter().flatten() {
            if !out.contains(p) {
                out.push(*p);
            }
        }
    }
    out
}

/// Child orders for the next generation: parent `i` is crossed with parent
/// `i + 1` (cyclically). Each child is a full permutation of `active`.
pub fn select_and_crossover(
    members: &[RunResult],
    active: &[usize],
    top_q: f64,
    prefix_len: usize,
    xo_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if members.len() < 2 {
        return Err(Error::InvalidInput(
            "crossover needs a population of at least 2".into(),
        ));
    }
    let n_parents = ((members.len() as f64 * top_q).ceil() as usize).clamp(1, members.len());
    let ranked = rank_members(members);
    let parents: Vec<&RunResult> = ranked[..n_parents].iter().map(|&i| &members[i]).collect();
    let prefixes: Vec<Vec<usize>> = parents.iter().map(|p| credit_prefix(p, prefix_len)).collect();
    let active_set: BTreeSet<usize> = active.iter().copied().collect();
    Ok((0..n_parents)
        .map(|i| {
            let j = (i + 1) % n_parents;
            let mut child: Vec<usize> = interleave(&prefixes[i], &prefixes[j])
                .into_iter()
                .filter(|f| active_set.contains(f))
                .collect();
            let mut rest: Vec<usize> = active.iter().copied().filter(|f| !child.contains(f)).collect();
            rest.shuffle(&mut seed::rng(seed::derive(xo_seed, Stream::Crossover, i as u64)));
            child.extend(rest);
            child
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub member_losses: Vec<f64>,
    pub best_per_patient: f64,
    pub best_so_far: f64,
    pub weights: Vec<f64>,
    pub newly_skipped: Vec<usize>,
    pub priorities: Vec<usize>,
    pub scanned_personas: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOutcome {
    /// Best `⌈P·top_q⌉` runs over all generations, best first.
    pub best_runs: Vec<RunResult>,
    pub final_weights: WeightState,
    pub history: Vec<GenerationSummary>,
}

fn run_members(
    cache: &AffinityCache<'_>,
    plans: &[MemberPlan],
    scorer: &dyn Scorer,
    parallel: bool,
    first_id: usize,
) -> Result<Vec<RunResult>> {
    let run = |(i, plan): (usize, &MemberPlan)| {
        run_until_stop(cache, &plan.sequence, &plan.engine, scorer).map(|mut r| {
            r.run_id = first_id + i;
            r
        })
    };
    if parallel {
        plans.par_iter().enumerate().map(run).collect()
    } else {
        plans.iter().enumerate().map(run).collect()
    }
}

/// Quick two-variable scan used to feed the strategist between generations.
fn scan(cache: &AffinityCache<'_>, members: &[RunResult], scorer_threshold: f64) -> Vec<Persona> {
    let dataset = cache.dataset();
    let resolutions = [scorer_threshold];
    let candidates = persona::rank_candidate_variables(members, dataset, &resolutions, 10);
    let constraints = persona::Constraints {
        max_vars: 2,
        ..persona::Constraints::for_n(dataset.n())
    };
    persona::search_personas(dataset, &candidates, &constraints).unwrap_or_default()
}

/// Runs `G` generations.
pub fn evolve_loop(
    cache: &AffinityCache<'_>,
    engine: &EngineConfig,
    config: &EvolveConfig,
    scorer: &dyn Scorer,
    strategist: &mut dyn Strategist,
) -> Result<EvolveOutcome> {
    config.validate()?;
    engine.validate()?;
    let dataset = cache.dataset();
    let mut weights = WeightState::uniform(dataset.n_features());
    let mut children: Vec<Vec<usize>> = Vec::new();
    let mut pool: Vec<RunResult> = Vec::new();
    let mut history = Vec::new();
    let mut best_so_far = f64::INFINITY;

    for g in 0..config.generations {
        let gen_seed = seed::derive(engine.seed, Stream::Generation, g as u64);
        let advice = strategist.advise()?;
        let plans = spawn_generation(
            &weights,
            engine,
            config.population,
            &advice,
            &children,
            gen_seed,
        );
        let members = run_members(
            cache,
            &plans,
            scorer,
            config.parallel,
            g * config.population,
        )?;

        let ranked = rank_members(&members);
        let best = &members[ranked[0]];
        best_so_far = best_so_far.min(best.best_loss.per_patient);
        let l_ref = best.best_loss.per_patient * dataset.n() as f64;
        let credits = average_credits(&members);
        let newly = reinforce_weights(
            &mut weights,
            &credits,
            config.learning_rate,
            l_ref,
            config.skip_threshold,
        );

        let personas = if config.scan_personas {
            scan(cache, &members, engine.cluster_threshold)
        } else {
            Vec::new()
        };
        strategist.observe(&GenerationReport {
            generation: g,
            run_ids: members.iter().map(|m| m.run_id).collect(),
            losses: members.iter().map(|m| m.best_loss.per_patient).collect(),
            personas: personas.clone(),
            newly_skipped: newly.clone(),
        })?;

        if g + 1 < config.generations && members.len() >= 2 {
            let active = weights.active();
            if active.is_empty() {
                return Err(Error::AllFeaturesSkipped);
            }
            children = select_and_crossover(
                &members,
                &active,
                config.top_q,
                config.prefix_len,
                seed::derive(gen_seed, Stream::Crossover, u64::MAX),
            )?;
        }

        history.push(GenerationSummary {
            generation: g,
            member_losses: members.iter().map(|m| m.best_loss.per_patient).collect(),
            best_per_patient: best.best_loss.per_patient,
            best_so_far,
            weights: weights.weights.clone(),
            newly_skipped: newly,
            priorities: advice.priority_variables.clone(),
            scanned_personas: personas.len(),
        });
        pool.extend(members);
    }

    let keep = config.parent_count().min(pool.len());
    let ranked = rank_members(&pool);
    let best_runs = ranked[..keep].iter().map(|&i| pool[i].clone()).collect();
    Ok(EvolveOutcome {
        best_runs,
        final_weights: weights,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_with(loss: f64, active: usize, credit: &[(usize, f64)]) -> RunResult {
        let n_features = 8;
        let mut sequence = FeatureSequence::identity(n_features);
        sequence.order.truncate(active);
        RunResult {
            run_id: 0,
            seed: 0,
            sequence,
            best_states: StateMatrix::from_rows(vec![vec![0.0]]),
            best_partition: crate::scoring::cluster_purity(&[0], &[1]),
            best_loss: Bce {
                total: loss * 10.0,
                per_patient: loss,
            },
            best_cycle: 0,
            cycles_executed: 1,
            cycle_losses: vec![loss * 10.0],
            feature_credit: credit.iter().copied().collect(),
            reference_diameter: 1.0,
        }
    }

    #[test]
    fn interleave_rule() {
        assert_eq!(interleave(&[0, 1], &[2, 3]), vec![0, 2, 1, 3]);
        assert_eq!(interleave(&[4, 5, 6], &[4, 5, 6]), vec![4, 5, 6]);
        assert_eq!(interleave(&[1], &[2, 3, 4]), vec![1, 2, 3, 4]);
    }

    #[test]
    fn ranking_prefers_fewer_features_on_ties() {
        let members = vec![run_with(0.5, 5, &[]), run_with(0.5, 3, &[]), run_with(0.7, 1, &[])];
        assert_eq!(rank_members(&members), vec![1, 0, 2]);
    }

    #[test]
    fn crossover_children_are_permutations() {
        let members = vec![
            run_with(0.1, 8, &[(0, 0.5), (1, 0.4), (5, -0.1)]),
            run_with(0.2, 8, &[(2, 0.9), (3, 0.3)]),
            run_with(0.9, 8, &[]),
            run_with(0.8, 8, &[]),
        ];
        let active: Vec<usize> = (0..8).collect();
        let kids = select_and_crossover(&members, &active, 0.5, 4, 3).unwrap();
        assert_eq!(kids.len(), 2);
        assert_eq!(&kids[0][..4], &[0, 2, 1, 3]);
        assert_eq!(&kids[1][..4], &[2, 0, 3, 1]);
        for k in &kids {
            let mut s = k.clone();
            s.sort();
            assert_eq!(s, active);
        }
        assert!(select_and_crossover(&members[..1], &active, 0.5, 4, 3).is_err());
    }

    #[test]
    fn reinforcement_rules() {
        let mut st = WeightState::uniform(3);
        let credits: BTreeMap<usize, f64> = [(0, 0.0), (1, 5.0), (2, -1.0)].into();
        reinforce_weights(&mut st, &credits, 0.2, 10.0, 0.05);
        assert_eq!(st.weights[0], 1.0);
        assert_eq!(st.weights[1], 1.0);
        assert!((st.weights[2] - (-0.02f64).exp()).abs() < 1e-15);

        let mut rounds = 0;
        let bad: BTreeMap<usize, f64> = [(2, -100.0)].into();
        while !st.skipped.contains(&2) {
            reinforce_weights(&mut st, &bad, 0.2, 10.0, 0.05);
            rounds += 1;
            assert!(rounds < 100);
        }
        // 0.98 * exp(-0.2 r) < 0.05 first holds at r = 15
        assert_eq!(rounds, 15);
        assert!(st.weights.iter().all(|w| (0.0..=1.0).contains(w)));
    }

    #[test]
    fn spawn_puts_priorities_first() {
        let w = WeightState::uniform(10);
        let advice = StrategistAdvice {
            priority_variables: vec![7, 3],
            ..Default::default()
        };
        let plans = spawn_generation(&w, &EngineConfig::default(), 4, &advice, &[], 99);
        for p in &plans {
            assert_eq!(&p.sequence.order[..2], &[7, 3]);
            assert_eq!(p.sequence.order.len(), 10);
        }
        assert_ne!(plans[0].sequence.order, plans[1].sequence.order);
        assert_eq!(
            plans,
            spawn_generation(&w, &EngineConfig::default(), 4, &advice, &[], 99)
        );
    }

    #[test]
    fn spawn_drops_skipped() {
        let mut w = WeightState::uniform(5);
        w.skipped.insert(2);
        let advice = StrategistAdvice {
            priority_variables: vec![2, 4],
            ..Default::default()
        };
        let plans = spawn_generation(&w, &EngineConfig::default(), 2, &advice, &[vec![1, 0]], 1);
        assert_eq!(&plans[0].sequence.order[..3], &[4, 1, 0]);
        assert!(plans.iter().all(|p| !p.sequence.order.contains(&2)));
    }
}
