use mbnsep_core::metrics::clustering_accuracy;
use mbnsep_core::separate::{apply_masks_and_resynthesize, masks_from_labels};
use mbnsep_core::signal::{stft, StftConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn accuracy_at_least_chance_on_balanced_truth(o in 2usize..6, reps in 1usize..20, seed in any::<u64>()) {
        let truth: Vec<usize> = (0..o * reps).map(|i| i % o).collect();
        let mut state = seed;
        let pred: Vec<usize> = truth
            .iter()
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) as usize % o
            })
            .collect();
        let acc = clustering_accuracy(&pred, &truth, o).unwrap();
        prop_assert!(acc >= 1.0 / o as f64 - 1e-12 && acc <= 1.0);
    }
}

#[test]
fn relabeling_permutes_masks_and_keeps_the_outputs() {
    let x: Vec<f64> = (0..3000).map(|i| ((i as f64) * 0.37).sin() + ((i as f64) * 0.011).cos()).collect();
    let spec = stft(&x, &StftConfig::default()).unwrap();
    let (t, f) = spec.shape();
    let labels: Vec<usize> = (0..t * f).map(|i| (i * 31 + i / 7) % 3).collect();
    let perm = [2usize, 0, 1];
    let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
    let a = masks_from_labels(&labels, t, f, 3).unwrap();
    let b = masks_from_labels(&relabeled, t, f, 3).unwrap();
    for (o, m) in a.masks().iter().enumerate() {
        assert_eq!(m, &b.masks()[perm[o]]);
    }
    let wa = apply_masks_and_resynthesize(&a, &spec).unwrap();
    let wb = apply_masks_and_resynthesize(&b, &spec).unwrap();
    for (o, w) in wa.iter().enumerate() {
        assert_eq!(w, &wb[perm[o]]);
    }
}
