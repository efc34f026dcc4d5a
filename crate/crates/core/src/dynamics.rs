//! Latent contraction dynamics.
//!
//! Every patient carries a point in a small latent space. Each feature of an
//! ordered sequence applies one convex averaging step: a patient moves
//! towards the affinity-weighted mean of all patients, where affinity is
//! similarity on that feature, tilted towards patients sharing the outcome.
//! After every step the new configuration is blended with a log-weighted
//! trace of earlier configurations. The run is scored once per full pass
//! over the sequence and stops when the score stops improving.

use std::borrow::Cow;
use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{feature_credit, RunResult};
use crate::ingest::Dataset;
use crate::scoring::Scorer;
use crate::seed;

/// Row sums of an affinity matrix must be within this of 1.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Minimum loss decrease that counts as an improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub latent_dim: usize,
    /// alpha: fraction of the way each step moves towards the weighted mean.
    pub step_rate: f64,
    /// mu: weight of the long-range memory trace.
    pub memory_rate: f64,
    /// gamma: affinity multiplier `1 + gamma` for equal outcomes, `1 - gamma`
    /// otherwise.
    pub outcome_tilt: f64,
    /// kappa: affinity between different levels of a categorical feature.
    pub categorical_affinity: f64,
    pub max_cycles: usize,
    pub patience: usize,
    /// Single-linkage cut, relative to the diameter of the initial states.
    pub cluster_threshold: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            latent_dim: 3,
            step_rate: 0.5,
            memory_rate: 0.15,
            outcome_tilt: 0.9,
            categorical_affinity: 0.1,
            max_cycles: 50,
            patience: 5,
            cluster_threshold: 0.005,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("engine.{field}"), msg))
            }
        };
        check(self.latent_dim >= 1, "latent_dim", "must be at least 1")?;
        check(
            self.step_rate > 0.0 && self.step_rate <= 1.0,
            "step_rate",
            "must lie in (0, 1]",
        )?;
        check(
            (0.0..1.0).contains(&self.memory_rate),
            "memory_rate",
            "must lie in [0, 1)",
        )?;
        check(
            (0.0..1.0).contains(&self.outcome_tilt),
            "outcome_tilt",
            "must lie in [0, 1)",
        )?;
        check(
            self.categorical_affinity > 0.0 && self.categorical_affinity <= 1.0,
            "categorical_affinity",
            "must lie in (0, 1]",
        )?;
        check(self.max_cycles >= 1, "max_cycles", "must be at least 1")?;
        check(self.patience >= 1, "patience", "must be at least 1")?;
        check(
            self.cluster_threshold > 0.0 && self.cluster_threshold < 1.0,
            "cluster_threshold",
            "must lie in (0, 1)",
        )
    }
}

/// Latent positions of all patients at one pseudo-time step, row-major
/// `n x m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
    pub step: usize,
}

impl StateMatrix {
    pub fn zeros(n: usize, m: usize) -> Self {
        StateMatrix {
            n,
            m,
            data: vec![0.0; n * m],
            step: 0,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == m), "ragged state rows");
        StateMatrix {
            n,
            m,
            data: rows.into_iter().flatten().collect(),
            step: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest pairwise Euclidean distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.n {
            let a = self.row(i);
            for j in (i + 1)..self.n {
                let d2: f64 = a
                    .iter()
                    .zip(self.row(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                best = best.max(d2);
            }
        }
        best.sqrt()
    }

    /// Per-coordinate `(min, max)`.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); self.m];
        for i in 0..self.n {
            for (b, &v) in bounds.iter_mut().zip(self.row(i)) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        bounds
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// History of latent states, one entry per executed step plus the initial
/// state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub history: Vec<StateMatrix>,
    /// Feature applied at step `k` (index `k - 1`).
    pub feature_at_step: Vec<usize>,
    /// History index of the state closing each cycle.
    pub cycle_ends: Vec<usize>,
}

impl Trajectory {
    pub fn new(initial: StateMatrix) -> Self {
        Trajectory {
            history: vec![initial],
            feature_at_step: Vec::new(),
            cycle_ends: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.history.len() - 1
    }

    pub fn current(&self) -> &StateMatrix {
        self.history.last().expect("trajectory is never empty")
    }

    /// Per-cycle states as CSV rows `patient_id,cycle,z0,z1,...`; cycle 0 is
    /// the initial configuration.
    pub fn write_cycles_csv<W: std::io::Write>(&self, ids: &[String], mut out: W) -> std::io::Result<()> {
        let m = self.history[0].dim();
        let coords: Vec<String> = (0..m).map(|c| format!("z{c}")).collect();
        writeln!(out, "patient_id,cycle,{}", coords.join(","))?;
        let ends = std::iter::once(0).chain(self.cycle_ends.iter().copied());
        for (cycle, idx) in ends.enumerate() {
            let s = &self.history[idx];
            for (i, id) in ids.iter().enumerate() {
                let row: Vec<String> = s.row(i).iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{id},{cycle},{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Ordered features with their reinforcement weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub order: Vec<usize>,
    /// Weight per dataset feature, indexed by feature id.
    pub weights: Vec<f64>,
    pub skipped: BTreeSet<usize>,
}

impl FeatureSequence {
    /// All features in index order with weight 1.
    pub fn identity(n_features: usize) -> Self {
        FeatureSequence {
            order: (0..n_features).collect(),
            weights: vec![1.0; n_features],
            skipped: BTreeSet::new(),
        }
    }

    /// Drops skipped and duplicate features from `order`.
    pub fn prune(&mut self) {
        let mut seen = BTreeSet::new();
        let skipped = &self.skipped;
        self.order.retain(|f| !skipped.contains(f) && seen.insert(*f));
    }

    /// Features that take a step, in order.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.order
            .iter()
            .copied()
            .filter(|f| !self.skipped.contains(f) && self.weights[*f] > 0.0)
    }

    pub fn active_count(&self) -> usize {
        self.active().count()
    }
}

/// Row-stochastic `n x n` affinity matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinity {
    n: usize,
    data: Vec<f64>,
}

impl Affinity {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "affinity must be square");
        Affinity {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check_stochastic(&self) -> Result<()> {
        for i in 0..self.n {
            let sum: f64 = self.row(i).iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row: i, sum });
            }
        }
        Ok(())
    }
}

/// Median of `|v_i - v_j|` over pairs `i < j`.
pub fn median_pairwise_difference(values: &[f64]) -> f64 {
    let n = values.len();
    let mut diffs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            diffs.push((values[i] - values[j]).abs());
        }
    }
    if diffs.is_empty() {
        return 0.0;
    }
    let mid = diffs.len() / 2;
    let (_, &mut upper, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
    if diffs.len() % 2 == 1 {
        upper
    } else {
        let lower = diffs[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Gaussian kernel with an explicit bandwidth, tilted by outcome and
/// row-normalised.
pub fn numeric_affinity(values: &[f64], outcome: &[u8], sigma: f64, tilt: f64) -> Affinity {
    let inv = 1.0 / (2.0 * sigma * sigma);
    build_affinity(values.len(), outcome, tilt, |i, j| {
        let d = values[i] - values[j];
        (-d * d * inv).exp()
    })
}

fn categorical_similarity(levels: &[f64], outcome: &[u8], kappa: f64, tilt: f64) -> Affinity {
    build_affinity(levels.len(), outcome, tilt, |i, j| {
        if levels[i] == levels[j] {
            1.0
        } else {
            kappa
        }
    })
}

fn build_affinity(
    n: usize,
    outcome: &[u8],
    tilt: f64,
    sim: impl Fn(usize, usize) -> f64,
) -> Affinity {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut data[i * n..(i + 1) * n];
        for j in 0..n {
            row[j] = if i == j {
                1.0
            } else {
                let t = if outcome[i] == outcome[j] {
                    1.0 + tilt
                } else {
                    1.0 - tilt
                };
                sim(i, j) * t
            };
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Affinity { n, data }
}

/// Affinity matrix for one feature.
pub fn affinity_weights(dataset: &Dataset, feature: usize, config: &EngineConfig) -> Affinity {
    let values = dataset.values(feature);
    if dataset.is_categorical(feature) {
        categorical_similarity(
            values,
            dataset.outcome(),
            config.categorical_affinity,
            config.outcome_tilt,
        )
    } else {
        let sigma = match median_pairwise_difference(values) {
            s if s > 0.0 => s,
            _ => 1.0,
        };
        numeric_affinity(values, dataset.outcome(), sigma, config.outcome_tilt)
    }
}

/// Lazily computed, shareable per-feature affinity matrices. Matrices are
/// recomputed on every request when caching all of them would exceed
/// `byte_budget`.
pub struct AffinityCache<'a> {
    dataset: &'a Dataset,
    config: EngineConfig,
    slots: Option<Vec<OnceLock<Affinity>>>,
}

impl<'a> AffinityCache<'a> {
    pub const DEFAULT_BUDGET: usize = 1 << 30;

    pub fn new(dataset: &'a Dataset, config: &EngineConfig) -> Self {
        Self::with_budget(dataset, config, Self::DEFAULT_BUDGET)
    }

    pub fn with_budget(dataset: &'a Dataset, config: &EngineConfig, byte_budget: usize) -> Self {
        let n = dataset.n();
        let bytes = n
            .saturating_mul(n)
            .saturating_mul(dataset.n_features())
            .saturating_mul(8);
        let slots = (bytes <= byte_budget)
            .then(|| (0..dataset.n_features()).map(|_| OnceLock::new()).collect());
        AffinityCache {
            dataset,
            config: config.clone(),
            slots,
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn get(&self, feature: usize) -> Cow<'_, Affinity> {
        match &self.slots {
            Some(slots) => Cow::Borrowed(
                slots[feature]
                    .get_or_init(|| affinity_weights(self.dataset, feature, &self.config)),
            ),
            None => Cow::Owned(affinity_weights(self.dataset, feature, &self.config)),
        }
    }
}

/// Initial states drawn uniformly from `[-1, 1]^m`.
pub fn init_states(dataset: &Dataset, config: &EngineConfig) -> Result<StateMatrix> {
    init_states_n(dataset.n(), config)
}

pub fn init_states_n(n: usize, config: &EngineConfig) -> Result<StateMatrix> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 patients, got {n}"
        )));
    }
    let m = config.latent_dim;
    let mut rng = seed::rng(config.seed);
    let data = (0..n * m).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok(StateMatrix {
        n,
        m,
        data,
        step: 0,
    })
}

/// One convex step `(1 - a) h + a W h` with `a = alpha * w_f`.
pub fn contraction_step(
    states: &StateMatrix,
    affinity: &Affinity,
    weight: f64,
    config: &EngineConfig,
) -> Result<StateMatrix> {
    if affinity.n() != states.n() {
        return Err(Error::InvalidInput(format!(
            "affinity is {0}x{0} but there are {1} states",
            affinity.n(),
            states.n()
        )));
    }
    affinity.check_stochastic()?;
    let a = config.step_rate * weight;
    if a == 0.0 {
        let mut same = states.clone();
        same.step += 1;
        return Ok(same);
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::config(
            "engine.step_rate",
            format!("step size alpha * w_f = {a} outside (0, 1]"),
        ));
    }
    let (n, m) = (states.n, states.m);
    let mut out = vec![0.0; n * m];
    let mut acc = vec![0.0; m];
    for i in 0..n {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (j, &w) in affinity.row(i).iter().enumerate() {
            for (c, v) in acc.iter_mut().zip(states.row(j)) {
                *c += w * v;
            }
        }
        let dst = &mut out[i * m..(i + 1) * m];
        for ((d, &h), &c) in dst.iter_mut().zip(states.row(i)).zip(&acc) {
            *d = (1.0 - a) * h + a * c;
        }
    }
    Ok(StateMatrix {
        n,
        m,
        data: out,
        step: states.step + 1,
    })
}

/// Normalised memory coefficients for the state about to become `h^(k)`:
/// `c_j ∝ 1 / (1 + ln(k - j))` over `h^(1) .. h^(k-1)`, or the single
/// initial state when `k = 1`. Returned as `(history index, weight)`.
pub fn memory_coefficients(k: usize) -> Vec<(usize, f64)> {
    match k {
        0 => Vec::new(),
        1 => vec![(0, 1.0)],
        _ => {
            let raw: Vec<(usize, f64)> = (1..k)
                .map(|j| (j, 1.0 / (1.0 + ((k - j) as f64).ln())))
                .collect();
            let total: f64 = raw.iter().map(|(_, w)| w).sum();
            raw.into_iter().map(|(j, w)| (j, w / total)).collect()
        }
    }
}

/// `(1 - mu) current + mu M`, with `M` the log-weighted trace of the
/// trajectory so far.
pub fn memory_blend(
    trajectory: &Trajectory,
    current: &StateMatrix,
    config: &EngineConfig,
) -> StateMatrix {
    let mu = config.memory_rate;
    if mu == 0.0 {
        return current.clone();
    }
    let k = trajectory.history.len();
    let mut out: Vec<f64> = current.data.iter().map(|v| (1.0 - mu) * v).collect();
    for (j, c) in memory_coefficients(k) {
        let w = mu * c;
        for (o, h) in out.iter_mut().zip(&trajectory.history[j].data) {
            *o += w * h;
        }
    }
    StateMatrix {
        n: current.n,
        m: current.m,
        data: out,
        step: current.step,
    }
}

/// Runs full cycles over the sequence until the loss has not improved for
/// `patience` cycles or `max_cycles` is reached.
pub fn run_until_stop(
    cache: &AffinityCache<'_>,
    sequence: &FeatureSequence,
    config: &EngineConfig,
    scorer: &dyn Scorer,
) -> Result<RunResult> {
    run_with_trajectory(cache, sequence, config, scorer).map(|(r, _)| r)
}

pub fn run_with_trajectory(
    cache: &AffinityCache<'_>,
    sequence: &FeatureSequence,
    config: &EngineConfig,
    scorer: &dyn Scorer,
) -> Result<(RunResult, Trajectory)> {
    config.validate()?;
    let dataset = cache.dataset();
    let active: Vec<usize> = sequence.active().collect();
    if active.is_empty() {
        return Err(Error::AllFeaturesSkipped);
    }
    if let Some(&bad) = active.iter().find(|&&f| f >= dataset.n_features()) {
        return Err(Error::UnknownFeature(bad.to_string()));
    }
    let outcome = dataset.outcome();
    let initial = init_states(dataset, config)?;
    let reference = initial.diameter();
    let mut trajectory = Trajectory::new(initial);

    let mut cycle_losses = Vec::new();
    let mut best: Option<(usize, crate::scoring::Scored)> = None;
    let mut stale = 0;
    for cycle in 0..config.max_cycles {
        for &f in &active {
            let w = cache.get(f);
            let stepped =
                contraction_step(trajectory.current(), &w, sequence.weights[f], config)?;
            let blended = memory_blend(&trajectory, &stepped, config);
            trajectory.history.push(blended);
            trajectory.feature_at_step.push(f);
        }
        trajectory.cycle_ends.push(trajectory.steps());
        let scored = scorer.score(trajectory.current(), reference, outcome);
        cycle_losses.push(scored.loss.total);
        let improved = best
            .as_ref()
            .is_none_or(|(_, b)| scored.loss.total < b.loss.total - IMPROVEMENT_TOL);
        if improved {
            best = Some((cycle, scored));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let (best_cycle, scored) = best.expect("at least one cycle is scored");
    let end = trajectory.cycle_ends[best_cycle];
    let start = end - active.len();
    let credit = feature_credit(&trajectory, start..end, scorer, reference, outcome);
    let result = RunResult {
        run_id: 0,
        seed: config.seed,
        sequence: sequence.clone(),
        best_states: trajectory.history[end].clone(),
        best_partition: scored.partition,
        best_loss: scored.loss,
        best_cycle,
        cycles_executed: cycle_losses.len(),
        cycle_losses,
        feature_credit: credit,
        reference_diameter: reference,
    };
    Ok((result, trajectory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::PurityBce;

    fn cfg() -> EngineConfig {
        EngineConfig {
            seed: 11,
            ..Default::default()
        }
    }

    fn small_dataset() -> Dataset {
        let a = vec![0.1, 0.2, 0.15, 3.0, 3.1, 2.9, 0.3, 3.2];
        let b = vec![1.0, -1.0, 0.5, 0.2, -0.3, 0.9, -0.8, 0.0];
        let y = vec![0, 0, 0, 1, 1, 1, 0, 1];
        Dataset::from_numeric(&["a", "b"], &[a, b], &y).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_seeded() {
        let d = small_dataset();
        let a = init_states(&d, &cfg()).unwrap();
        assert_eq!(a, init_states(&d, &cfg()).unwrap());
        let other = EngineConfig {
            seed: 12,
            ..cfg()
        };
        assert_ne!(a, init_states(&d, &other).unwrap());
        let tiny = init_states_n(
            2,
            &EngineConfig {
                latent_dim: 1,
                ..cfg()
            },
        )
        .unwrap();
        assert_eq!((tiny.n(), tiny.dim()), (2, 1));
        assert!(tiny.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(init_states_n(1, &cfg()).is_err());
    }

    #[test]
    fn uniform_rows_for_single_level() {
        let w = categorical_similarity(&[0.0; 4], &[0, 1, 0, 1], 0.1, 0.0);
        for i in 0..4 {
            for &v in w.row(i) {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_point_kernel() {
        let sigma = 0.7;
        let w = numeric_affinity(&[0.0, sigma * 2f64.sqrt()], &[0, 1], sigma, 0.0);
        let e = (-1.0f64).exp();
        assert!((w.row(0)[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((w.row(0)[1] - e / (1.0 + e)).abs() < 1e-12);
        assert!((w.row(0)[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn affinity_rows_are_stochastic_and_positive() {
        let d = small_dataset();
        for f in 0..2 {
            let w = affinity_weights(&d, f, &cfg());
            assert!(w.min_entry() > 0.0);
            for i in 0..d.n() {
                assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn median_difference() {
        assert_eq!(median_pairwise_difference(&[0.0, 1.0, 3.0]), 2.0);
        assert_eq!(median_pairwise_difference(&[0.0, 1.0, 2.0, 4.0]), 2.0);
        assert_eq!(median_pairwise_difference(&[5.0, 5.0]), 0.0);
    }

    #[test]
    fn two_point_averaging() {
        let s = StateMatrix::from_rows(vec![vec![0.0, 0.0], vec![2.0, 0.0]]);
        let w = Affinity::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let full = EngineConfig {
            step_rate: 1.0,
            ..cfg()
        };
        let out = contraction_step(&s, &w, 1.0, &full).unwrap();
        assert_eq!(out.row(0), out.row(1));
        assert_eq!(out.diameter(), 0.0);
        let half = contraction_step(&s, &w, 0.5, &full).unwrap();
        assert!((half.diameter() - 1.0).abs() < 1e-15);
        let same = contraction_step(&s, &w, 0.0, &full).unwrap();
        assert_eq!(same.as_slice(), s.as_slice());
    }

    #[test]
    fn rejects_non_stochastic() {
        let s = StateMatrix::from_rows(vec![vec![0.0], vec![1.0]]);
        let w = Affinity::from_rows(vec![vec![0.5, 0.6], vec![0.5, 0.5]]);
        assert!(matches!(
            contraction_step(&s, &w, 1.0, &cfg()),
            Err(Error::NotStochastic { row: 0, .. })
        ));
    }

    #[test]
    fn memory_examples() {
        let h0 = StateMatrix::from_rows(vec![vec![0.0], vec![4.0]]);
        let h1 = StateMatrix::from_rows(vec![vec![1.0], vec![2.0]]);
        let traj = Trajectory::new(h0.clone());
        let off = EngineConfig {
            memory_rate: 0.0,
            ..cfg()
        };
        assert_eq!(memory_blend(&traj, &h1, &off), h1);
        let on = EngineConfig {
            memory_rate: 0.2,
            ..cfg()
        };
        let b = memory_blend(&traj, &h1, &on);
        assert!((b.row(0)[0] - 0.8).abs() < 1e-15);
        assert!((b.row(1)[0] - (0.8 * 2.0 + 0.2 * 4.0)).abs() < 1e-15);

        let c = memory_coefficients(3);
        assert_eq!(c.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!((c[0].1 - 0.3713).abs() < 1e-4);
        assert!((c[1].1 - 0.6287).abs() < 1e-4);
        let raw = 1.0 / (1.0 + 2f64.ln());
        assert!((raw - 0.5906).abs() < 1e-4);
    }

    #[test]
    fn single_cycle_budget() {
        let d = small_dataset();
        let config = EngineConfig {
            max_cycles: 1,
            ..cfg()
        };
        let cache = AffinityCache::new(&d, &config);
        let r = run_until_stop(
            &cache,
            &FeatureSequence::identity(2),
            &config,
            &PurityBce::new(0.05),
        )
        .unwrap();
        assert_eq!(r.cycles_executed, 1);
        assert_eq!(r.best_cycle, 0);
    }

    #[test]
    fn all_skipped_is_an_error() {
        let d = small_dataset();
        let cache = AffinityCache::new(&d, &cfg());
        let mut seq = FeatureSequence::identity(2);
        seq.skipped.extend([0, 1]);
        assert!(matches!(
            run_until_stop(&cache, &seq, &cfg(), &PurityBce::new(0.05)),
            Err(Error::AllFeaturesSkipped)
        ));
    }

    #[test]
    fn uncached_matches_cached() {
        let d = small_dataset();
        let a = AffinityCache::new(&d, &cfg());
        let b = AffinityCache::with_budget(&d, &cfg(), 0);
        assert_eq!(*a.get(1), *b.get(1));
    }

    #[test]
    fn trajectory_csv_layout() {
        let d = small_dataset();
        let config = EngineConfig {
            max_cycles: 2,
            patience: 5,
            ..cfg()
        };
        let cache = AffinityCache::new(&d, &config);
        let (_, traj) = run_with_trajectory(
            &cache,
            &FeatureSequence::identity(2),
            &config,
            &PurityBce::new(0.05),
        )
        .unwrap();
        assert_eq!(traj.history.len(), traj.steps() + 1);
        let mut buf = Vec::new();
        traj.write_cycles_csv(d.ids(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * d.n());
        assert!(text.starts_with("patient_id,cycle,z0,z1,z2\n0,0,"));
    }
}
