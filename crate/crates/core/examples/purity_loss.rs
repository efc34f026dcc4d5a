//! Clusters a hand-made latent configuration and scores it with purity BCE.

use persona_engine::dynamics::StateMatrix;
use persona_engine::scoring::{bce_loss, cluster_purity, cluster_states, DEFAULT_EPS};

fn main() {
    let states = StateMatrix::from_rows(vec![
        vec![0.00, 0.00],
        vec![0.01, 0.00],
        vec![0.00, 0.02],
        vec![1.00, 1.00],
        vec![1.01, 0.99],
        vec![2.00, 0.00],
    ]);
    let outcome = [1, 1, 0, 0, 0, 1];
    let reference = states.diameter();
    for rel in [0.001, 0.05, 1.0] {
        let assign = cluster_states(&states, rel, reference);
        let part = cluster_purity(&assign, &outcome);
        let loss = bce_loss(&part, DEFAULT_EPS);
        println!(
            "threshold {rel:<5} clusters {:?} purities {:?} loss {:.4} ({:.4} per patient)",
            part.assignments, part.purities, loss.total, loss.per_patient
        );
    }
}
