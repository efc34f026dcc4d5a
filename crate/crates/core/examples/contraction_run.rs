//! One dynamics run over a small synthetic cohort: per-cycle loss, cluster
//! count and latent diameter, then the best configuration.

use persona_engine::dynamics::{run_with_trajectory, AffinityCache, EngineConfig, FeatureSequence};
use persona_engine::harness::{generate_synthetic, SynthConfig};
use persona_engine::scoring::{cluster_states, Scorer, PurityBce};

fn main() -> persona_engine::Result<()> {
    let data = generate_synthetic(&SynthConfig::noise(120, 6, 3))?.dataset()?;
    let engine = EngineConfig {
        seed: 3,
        ..Default::default()
    };
    let cache = AffinityCache::new(&data, &engine);
    let scorer = PurityBce::new(engine.cluster_threshold);
    let sequence = FeatureSequence::identity(data.n_features());
    let (run, traj) = run_with_trajectory(&cache, &sequence, &engine, &scorer)?;

    let reference = traj.history[0].diameter();
    println!("initial diameter {reference:.4}");
    for (c, &end) in traj.cycle_ends.iter().enumerate() {
        let states = &traj.history[end];
        let k = cluster_states(states, engine.cluster_threshold, reference)
            .into_iter()
            .max()
            .map_or(0, |m| m + 1);
        let scored = scorer.score(states, reference, data.outcome());
        println!(
            "cycle {:>2}: diameter {:.3e}  clusters {:>3}  loss {:.3}",
            c + 1,
            states.diameter(),
            k,
            scored.loss.total
        );
    }
    println!(
        "best cycle {} of {}, loss {:.3} ({:.4} per patient), {} clusters",
        run.best_cycle + 1,
        run.cycles_executed,
        run.best_loss.total,
        run.best_loss.per_patient,
        run.best_partition.k()
    );
    Ok(())
}
