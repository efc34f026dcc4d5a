use persona_engine::dynamics::{contraction_step, Affinity, EngineConfig, StateMatrix};
use persona_engine::harness::{auc, c_for_benefit};
use persona_engine::persona::stats::{bh_qvalues, fisher_exact};
use persona_engine::scoring::{bce_loss, cluster_purity, DEFAULT_EPS};
use proptest::prelude::*;

fn stochastic(raw: &[Vec<f64>]) -> Affinity {
    Affinity::from_rows(
        raw.iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            })
            .collect(),
    )
}

fn square(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.001f64..1.0, n), n)
}

proptest! {
    #[test]
    fn step_stays_in_previous_box(
        (rows, w) in (2usize..12).prop_flat_map(|n| (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), n),
            square(n),
        )),
        alpha in 0.01f64..1.0,
        weight in 0.0f64..1.0,
    ) {
        let states = StateMatrix::from_rows(rows);
        let cfg = EngineConfig { step_rate: alpha, memory_rate: 0.0, ..Default::default() };
        let next = contraction_step(&states, &stochastic(&w), weight, &cfg).unwrap();
        for ((lo, hi), (nlo, nhi)) in states.bounding_box().into_iter().zip(next.bounding_box()) {
            prop_assert!(nlo >= lo - 1e-12 && nhi <= hi + 1e-12);
        }
        prop_assert!(next.diameter() <= states.diameter() + 1e-12);
    }

    #[test]
    fn purity_ignores_patient_order(
        pairs in prop::collection::vec((0usize..4, 0u8..2), 1..40),
        rot in 0usize..40,
    ) {
        let assign: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        // Compact labels so that every id is used.
        let mut used: Vec<usize> = assign.clone();
        used.sort_unstable();
        used.dedup();
        let assign: Vec<usize> = assign.iter().map(|a| used.binary_search(a).unwrap()).collect();
        let r = rot % assign.len();
        let mut a2 = assign.clone();
        let mut y2 = y.clone();
        a2.rotate_left(r);
        y2.rotate_left(r);
        let p1 = cluster_purity(&assign, &y);
        let p2 = cluster_purity(&a2, &y2);
        prop_assert_eq!(&p1.purities, &p2.purities);
        let (l1, l2) = (bce_loss(&p1, DEFAULT_EPS).total, bce_loss(&p2, DEFAULT_EPS).total);
        prop_assert!((l1 - l2).abs() <= 1e-12 * l1.abs().max(1.0));
    }

    #[test]
    fn concordance_is_a_rank_statistic(
        pairs in prop::collection::vec((-3.0f64..3.0, -1i8..=1), 2..30),
    ) {
        let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let obs: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let c = c_for_benefit(&pred, &obs).unwrap();
        let squashed: Vec<f64> = pred.iter().map(|v| v.exp() * 2.0 + 1.0).collect();
        prop_assert_eq!(c, c_for_benefit(&squashed, &obs).unwrap());
        let flipped: Vec<f64> = obs.iter().map(|v| -v).collect();
        prop_assert!((c + c_for_benefit(&pred, &flipped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_flips_with_scores(
        rows in prop::collection::vec((0u8..6, 0u8..2), 2..50),
    ) {
        let s: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        let mut y: Vec<u8> = rows.iter().map(|r| r.1).collect();
        y[0] = 0;
        y[1] = 1;
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = auc(&s, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + auc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_symmetries(a in 0u64..25, b in 0u64..25, c in 0u64..25, d in 0u64..25) {
        prop_assume!(a + b + c + d > 0);
        let p = fisher_exact([[a, b], [c, d]]).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        let t = fisher_exact([[a, c], [b, d]]).unwrap();
        let r = fisher_exact([[c, d], [a, b]]).unwrap();
        prop_assert!((p - t).abs() < 1e-9 && (p - r).abs() < 1e-9);
    }

    #[test]
    fn bh_is_monotone_and_dominates(p in prop::collection::vec(0.0f64..=1.0, 1..60)) {
        let q = bh_qvalues(&p);
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
        for w in idx.windows(2) {
            prop_assert!(q[w[0]] <= q[w[1]]);
        }
        for (pi, qi) in p.iter().zip(&q) {
            prop_assert!(qi >= pi && *qi <= 1.0);
        }
    }
}
