//! Searches a planted cohort for personas over every variable, validates
//! them by bootstrap and assigns patients, leaving the rest uncalled.

use persona_engine::cli::narrative;
use persona_engine::harness::{generate_synthetic, PlantedCondition, PlantedPersona, SynthConfig};
use persona_engine::persona::{
    prune_redundant, relabel, search_personas_detailed, validate_personas, Bound, Constraints, Role,
    DEFAULT_BOOTSTRAP, DEFAULT_MAX_OVERLAP,
};

fn main() -> persona_engine::Result<()> {
    let mut spec = SynthConfig::noise(300, 8, 11);
    spec.planted = vec![PlantedPersona {
        conditions: vec![
            PlantedCondition {
                feature: "f1".into(),
                bound: Bound::Gt { value: -0.25 },
            },
            PlantedCondition {
                feature: "f6".into(),
                bound: Bound::Lt { value: 0.25 },
            },
        ],
        q_in: 0.85,
        role: Role::Responder,
    }];
    let synth = generate_synthetic(&spec)?;
    let data = synth.dataset()?;
    println!("planted {:?}, {} members", synth.truth.planted[0].variables, synth.truth.planted[0].members.len());

    let constraints = Constraints {
        max_vars: 2,
        ..Constraints::for_n(data.n())
    };
    let all: Vec<usize> = (0..data.n_features()).collect();
    let (found, summary) = search_personas_detailed(&data, &all, &constraints)?;
    println!(
        "tested {} conjunctions, {} significant variable set(s), p cutoff {:?}",
        summary.tested, summary.significant_sets, summary.p_cutoff
    );
    let (stable, unstable) = validate_personas(found, &data, constraints.min_effect, DEFAULT_BOOTSTRAP, 11);
    let (kept, redundant) = prune_redundant(stable, &data, DEFAULT_MAX_OVERLAP);
    println!("{} unstable, {} redundant", unstable.len(), redundant.len());
    for (k, p) in kept.iter().enumerate() {
        println!("{}", narrative(k + 1, p));
    }
    let labels = relabel(&data, &kept);
    println!(
        "coverage {:.1}%, {} patient(s) uncalled",
        100.0 * labels.coverage,
        labels.no_call_count()
    );
    Ok(())
}
