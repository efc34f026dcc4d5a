//! Encodes personas as token lines, parses them back, and replays a
//! strategist from its audit log.

use persona_engine::persona::{Bound, Condition, Persona, Role};
use persona_engine::strategist::{
    encode_tokens, parse_tokens, read_audit, AuditLog, GenerationReport, HeuristicStrategist, Strategist,
    TokenContext,
};

fn persona(conditions: Vec<Condition>, effect: f64, p: f64) -> Persona {
    Persona {
        conditions,
        n: 200,
        member_count: 30,
        positives_in: 24,
        positives_total: 100,
        response_rate_in: 0.8,
        response_rate_out: 0.8 - effect,
        response_rate_overall: 0.5,
        effect_size: effect,
        odds_ratio: 4.0,
        p_value: p,
        q_value: p,
        stability: Some(0.93),
        role: Role::Responder,
    }
}

fn main() -> persona_engine::Result<()> {
    let a = persona(
        vec![
            Condition {
                feature: 0,
                name: "COWAT".into(),
                bound: Bound::Gt { value: 12.0 },
            },
            Condition {
                feature: 3,
                name: "Curiosity".into(),
                bound: Bound::Equals { level: "High".into() },
            },
        ],
        0.35,
        0.004,
    );
    let ctx = TokenContext::new("Schizophrenia");
    let short = encode_tokens(&a, &ctx, false)?;
    let long = encode_tokens(&a, &ctx, true)?;
    println!("{short}\n{long}");
    println!("{:#?}", parse_tokens(&long)?);

    let dir = std::env::temp_dir().join(format!("persona-audit-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| persona_engine::Error::io(&dir, e))?;
    let path = dir.join("audit.log");
    let _ = std::fs::remove_file(&path);
    let mut live = HeuristicStrategist::new(5).with_log(AuditLog::open(&path, "demo")?);
    for g in 0..3 {
        live.observe(&GenerationReport {
            generation: g,
            run_ids: vec![0, 1],
            losses: vec![90.0, 95.0],
            personas: vec![a.clone()],
            newly_skipped: vec![],
        })?;
    }
    let advice = live.advise()?;
    println!("advice: {:?} ({})", advice.priority_variables, advice.rationale);
    for rec in read_audit(&path)? {
        println!("{} {:?} {}", rec.ts, rec.event, rec.rationale);
    }
    let replayed = HeuristicStrategist::replay(&path, 5)?.current_advice();
    println!("replay matches: {}", replayed == advice);
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
