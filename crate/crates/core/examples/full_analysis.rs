//! End-to-end analysis of a planted cohort: evolution, candidate ranking,
//! persona search and validation, relabeling and the before/after table.

use persona_engine::cli::{analyze_dataset, render_report, RunConfig};
use persona_engine::harness::{generate_synthetic, PlantedCondition, PlantedPersona, SynthConfig};
use persona_engine::persona::{Bound, Role};

fn main() -> persona_engine::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut spec = SynthConfig::noise(200, 20, seed);
    spec.planted = vec![PlantedPersona {
        conditions: vec![
            PlantedCondition {
                feature: "f4".into(),
                bound: Bound::Gt { value: -0.25 },
            },
            PlantedCondition {
                feature: "f13".into(),
                bound: Bound::Lt { value: 0.25 },
            },
        ],
        q_in: 0.85,
        role: Role::Responder,
    }];
    let data = generate_synthetic(&spec)?.dataset()?;
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.persona.max_vars = 2;
    let analysis = analyze_dataset(&data, &cfg, None)?;
    print!("{}", render_report(&analysis.report));
    println!("candidates: {}", analysis.report.candidates.join(", "));
    for t in &analysis.tokens {
        println!("{t}");
    }
    Ok(())
}
