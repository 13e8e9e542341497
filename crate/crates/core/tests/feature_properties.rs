use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dtc_core::data::{ClassTaxonomy, Dataset};
use dtc_core::features::{
    chi_square_from_table, entropy, equal_frequency_bins, fisher_score, information_gain, rank_features,
    ScoreMethod,
};
use dtc_core::matrix::Matrix;

fn labels_and_feature(k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    (2usize..60).prop_flat_map(move |n| {
        (
            prop::collection::vec(0..k, n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

proptest! {
    #[test]
    fn entropy_ignores_order(labels in prop::collection::vec(0usize..4, 1..50), seed in any::<u64>()) {
        let mut shuffled = labels.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(entropy(&labels, 4).unwrap(), entropy(&shuffled, 4).unwrap());
    }

    #[test]
    fn entropy_peaks_at_uniform(k in 2usize..6, reps in 1usize..10, labels in prop::collection::vec(0usize..5, 1..40)) {
        let uniform: Vec<usize> = (0..k * reps).map(|i| i % k).collect();
        prop_assert!((entropy(&uniform, k).unwrap() - (k as f64).log2()).abs() < 1e-12);
        let labels: Vec<usize> = labels.into_iter().map(|l| l % k).collect();
        prop_assert!(entropy(&labels, k).unwrap() <= (k as f64).log2() + 1e-12);
    }

    #[test]
    fn information_gain_is_bounded((labels, feature) in labels_and_feature(3), bins in 2usize..12) {
        let spec = equal_frequency_bins(&feature, bins).unwrap();
        let ig = information_gain(&feature, &labels, 3, &spec).unwrap();
        let h = entropy(&labels, 3).unwrap();
        prop_assert!((0.0..=h).contains(&ig));
    }

    #[test]
    fn information_gain_survives_increasing_transforms((labels, feature) in labels_and_feature(3), bins in 2usize..12) {
        let base = information_gain(&feature, &labels, 3, &equal_frequency_bins(&feature, bins).unwrap()).unwrap();
        for g in [|x: f64| (x / 40.0).exp(), |x: f64| x * x * x + x, |x: f64| 3.0 * x - 7.0] {
            let t: Vec<f64> = feature.iter().map(|&x| g(x)).collect();
            let ig = information_gain(&t, &labels, 3, &equal_frequency_bins(&t, bins).unwrap()).unwrap();
            prop_assert!((ig - base).abs() < 1e-12, "{} vs {}", ig, base);
        }
    }

    #[test]
    fn chi_square_zero_exactly_for_proportional_tables(
        rows in prop::collection::vec(1u64..6, 2..6),
        mix in prop::collection::vec(1u64..6, 2..5),
        bump in (0usize..6, 0usize..5),
    ) {
        let table: Vec<Vec<u64>> = rows.iter().map(|r| mix.iter().map(|m| r * m).collect()).collect();
        prop_assert!(chi_square_from_table(&table).abs() < 1e-9);

        let mut skewed = table.clone();
        let (i, j) = (bump.0 % rows.len(), bump.1 % mix.len());
        skewed[i][j] += 1 + table[i][j];
        prop_assert!(chi_square_from_table(&skewed) > 1e-9);
    }

    #[test]
    fn fisher_shift_and_scale_invariant(
        (labels, feature) in labels_and_feature(3),
        shift in -1e3f64..1e3,
        scale in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0],
    ) {
        prop_assume!(labels.iter().any(|&l| l != labels[0]));
        let base = fisher_score(&feature, &labels, 3).unwrap();
        let shifted: Vec<f64> = feature.iter().map(|x| x + shift).collect();
        let scaled: Vec<f64> = feature.iter().map(|x| x * scale).collect();
        for other in [fisher_score(&shifted, &labels, 3).unwrap(), fisher_score(&scaled, &labels, 3).unwrap()] {
            if base.is_finite() {
                prop_assert!((other - base).abs() <= 1e-6 * base.max(1.0), "{} vs {}", other, base);
            } else {
                prop_assert!(other.is_infinite() || other > 1e6);
            }
        }
    }
}

#[test]
fn label_copy_outranks_noise_under_every_method() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 200 + rng.random_range(0..100);
        let k = rng.random_range(2..=4);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let rows: Vec<[f64; 2]> = labels.iter().map(|&y| [rng.random::<f64>(), y as f64]).collect();
        let tax = ClassTaxonomy::custom((0..k).map(|c| format!("c{c}"))).unwrap();
        let d = Dataset::new(Matrix::from_rows(&rows), vec!["noise".into(), "copy".into()], labels, tax).unwrap();
        for method in ScoreMethod::ALL {
            let ranking = rank_features(&d, method, 10).unwrap();
            assert_eq!(ranking[0].feature_name, "copy", "seed {seed} {method:?}: {ranking:?}");
        }
    }
}
