//! Loads a small CSV with a categorical column, a missing cell and a text
//! outcome, and prints the inferred schema and imputation record.

use persona_engine::ingest::{read_csv, Dataset, OutcomeSpec, PreprocessConfig};

const CSV: &str = "\
id,age,smoker,crp,arm,status
p1,54,yes,3.1,A,improved
p2,61,no,,B,worse
p3,47,no,1.2,A,improved
p4,70,yes,8.4,B,worse
p5,58,no,2.2,A,improved
p6,66,yes,5.0,B,improved
";

fn main() -> persona_engine::Result<()> {
    let table = read_csv(CSV.as_bytes(), "inline.csv")?;
    let mut cfg = PreprocessConfig::new("status");
    cfg.outcome = OutcomeSpec {
        labels: Some([("improved".to_string(), 1), ("worse".to_string(), 0)].into()),
        ..OutcomeSpec::new("status")
    };
    cfg.id_column = Some("id".into());
    cfg.arm_column = Some("arm".into());
    let data = Dataset::from_table(&table, &cfg)?;

    println!("{} patients, {} positive", data.n(), data.positives());
    for (f, col) in data.columns().iter().enumerate() {
        let stats = data.stats(f);
        println!(
            "{:<8} {:?} levels={:?} missing={} mean={:.3} std={:.3}",
            col.name, col.kind, col.categories, col.missing_count, stats.mean, stats.std
        );
    }
    for imp in &data.provenance().imputations {
        println!("imputed row {} column {} with {}", imp.row, imp.column, imp.value);
    }
    println!("arms: {:?}", data.arm_levels());
    Ok(())
}
