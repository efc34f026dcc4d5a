//! Writes a synthetic cohort and its ground truth, the same files the
//! `generate` subcommand produces.

use persona_engine::harness::{generate_synthetic, PlantedCondition, PlantedPersona, SynthConfig};
use persona_engine::persona::{Bound, Role};

fn main() -> persona_engine::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("synthetic_cohort"));
    let mut spec = SynthConfig::noise(200, 10, 42);
    spec.d_categorical = 2;
    spec.planted = vec![PlantedPersona {
        conditions: vec![
            PlantedCondition {
                feature: "f3".into(),
                bound: Bound::Gt { value: 0.5 },
            },
            PlantedCondition {
                feature: "c1".into(),
                bound: Bound::Equals { level: "L2".into() },
            },
        ],
        q_in: 0.1,
        role: Role::NonResponder,
    }];
    println!("{}", serde_json::to_string_pretty(&spec)?);
    let synth = generate_synthetic(&spec)?;
    std::fs::create_dir_all(&out).map_err(|e| persona_engine::Error::io(&out, e))?;
    synth.write_csv(out.join("data.csv"))?;
    std::fs::write(out.join("ground_truth.json"), serde_json::to_string_pretty(&synth.truth)?)
        .map_err(|e| persona_engine::Error::io(&out, e))?;
    let t = &synth.truth.planted[0];
    println!(
        "{} members, empirical rate {:.2} (target {}), written to {}",
        t.members.len(),
        t.empirical_rate,
        t.q_in,
        out.display()
    );
    Ok(())
}
