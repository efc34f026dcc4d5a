//! Evolves feature orders for a planted cohort and prints the generation
//! history and the feature weights the reinforcement left behind.

use persona_engine::dynamics::{AffinityCache, EngineConfig};
use persona_engine::evolve::{evolve_loop, EvolveConfig};
use persona_engine::harness::{generate_synthetic, PlantedCondition, PlantedPersona, SynthConfig};
use persona_engine::persona::{Bound, Role};
use persona_engine::scoring::PurityBce;
use persona_engine::strategist::HeuristicStrategist;

fn main() -> persona_engine::Result<()> {
    let mut spec = SynthConfig::noise(150, 12, 5);
    spec.planted = vec![PlantedPersona {
        conditions: vec![
            PlantedCondition {
                feature: "f2".into(),
                bound: Bound::Gt { value: 0.0 },
            },
            PlantedCondition {
                feature: "f9".into(),
                bound: Bound::Lt { value: 0.5 },
            },
        ],
        q_in: 0.9,
        role: Role::Responder,
    }];
    let data = generate_synthetic(&spec)?.dataset()?;
    let engine = EngineConfig {
        seed: 5,
        ..Default::default()
    };
    let cache = AffinityCache::new(&data, &engine);
    let scorer = PurityBce::new(engine.cluster_threshold);
    let mut strategist = HeuristicStrategist::new(data.n_features());
    let out = evolve_loop(&cache, &engine, &EvolveConfig::default(), &scorer, &mut strategist)?;

    for g in &out.history {
        println!(
            "generation {}: best {:.4}/patient, best so far {:.4}, {} persona(s) scanned, priorities {:?}",
            g.generation, g.best_per_patient, g.best_so_far, g.scanned_personas, g.priorities
        );
    }
    let w = &out.final_weights.weights;
    let names: Vec<String> = (0..data.n_features()).map(|f| data.column(f).name.clone()).collect();
    for (name, v) in names.iter().zip(w) {
        println!("{name:<4} weight {v:.3}");
    }
    println!("best run loss {:.4} per patient", out.best_runs[0].best_loss.per_patient);
    Ok(())
}
