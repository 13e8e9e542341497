use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dtc_core::data::{fit_imputer, fit_normalizer, impute_missing, ClassTaxonomy, Dataset, ImputeStrategy, Stage};
use dtc_core::eval::{cross_validate, evaluate_labels};
use dtc_core::learners::{ForestParams, LearnerSpec, ModelKind, TrainedModel, TreeParams};
use dtc_core::matrix::Matrix;
use dtc_core::persist::PersistError;
use dtc_core::pipeline::{train_pipeline, PipelineModel, Routing, StageSpec, DEFAULT_CASCADE_GATE};
use dtc_core::synth::{generate, SynthParams};

fn synth_stages(n_rows: usize, seed: u64) -> Vec<Dataset> {
    let s = generate(&SynthParams {
        n_rows,
        seed,
        ..SynthParams::default()
    });
    s.datasets().unwrap().to_vec()
}

fn tree_specs() -> Vec<StageSpec> {
    Stage::PIPELINE
        .iter()
        .map(|&s| StageSpec::new(s, LearnerSpec::DecisionTree(TreeParams::default().with_max_depth(6))))
        .collect()
}

#[test]
fn retraining_stage_three_leaves_other_stages_alone() {
    let data = synth_stages(600, 3);
    let specs = tree_specs();
    let a = train_pipeline(&data, &specs, Routing::Independent, DEFAULT_CASCADE_GATE, 1).unwrap();
    let mut changed = specs.clone();
    changed[2].learner = LearnerSpec::GaussianNb;
    let b = train_pipeline(&data, &changed, Routing::Independent, DEFAULT_CASCADE_GATE, 1).unwrap();
    let x = data[0].features();
    let (pa, pb) = (a.predict_routed(x).unwrap(), b.predict_routed(x).unwrap());
    for (ra, rb) in pa.iter().zip(&pb) {
        assert_eq!((&ra.stage1, &ra.stage2), (&rb.stage1, &rb.stage2));
    }
    assert_eq!(a.stages[..2], b.stages[..2]);
}

#[test]
fn cascade_agrees_with_independent_where_present() {
    let data = synth_stages(800, 4);
    let p = train_pipeline(&data, &tree_specs(), Routing::Cascade, DEFAULT_CASCADE_GATE, 2).unwrap();
    let x = data[0].features();
    let cascade = p.predict_routed(x).unwrap();
    let independent = p.clone().with_routing(Routing::Independent).predict_routed(x).unwrap();
    for (c, i) in cascade.iter().zip(&independent) {
        assert_eq!(c.stage1, i.stage1);
        assert_eq!(c.stage2.is_some(), c.stage1 == DEFAULT_CASCADE_GATE);
        assert_eq!(c.stage2.is_some(), c.stage3.is_some());
        if let (Some(a), Some(b)) = (&c.stage2, &i.stage2) {
            assert_eq!(a, b);
        }
        if let (Some(a), Some(b)) = (&c.stage3, &i.stage3) {
            assert_eq!(a, b);
        }
        assert!(i.stage2.is_some() && i.stage3.is_some());
    }
}

#[test]
fn pipeline_training_is_deterministic() {
    let data = synth_stages(500, 8);
    let specs: Vec<StageSpec> = Stage::PIPELINE
        .iter()
        .map(|&s| {
            StageSpec::new(
                s,
                LearnerSpec::RandomForest(ForestParams {
                    n_trees: 10,
                    ..Default::default()
                }),
            )
        })
        .collect();
    let a = train_pipeline(&data, &specs, Routing::Cascade, DEFAULT_CASCADE_GATE, 77).unwrap();
    let b = train_pipeline(&data, &specs, Routing::Cascade, DEFAULT_CASCADE_GATE, 77).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

/// A canary column whose single extreme value must never reach the fitted
/// statistics of a fold that holds that row out.
#[test]
fn cross_validation_fits_only_on_training_rows() {
    let base = &synth_stages(300, 6)[0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = base.n_samples();
    let canary_row = 17;
    let mut rows: Vec<Vec<f64>> = base.features().rows().map(<[f64]>::to_vec).collect();
    let mut mask = vec![false; n * (base.n_features() + 1)];
    for (i, r) in rows.iter_mut().enumerate() {
        r.push(if i == canary_row { 1e12 } else { rng.random_range(0.0..1.0) });
        // a few holes so the imputer has something to fill
        if i % 29 == 3 {
            mask[i * (base.n_features() + 1)] = true;
            r[0] = f64::NAN;
        }
    }
    let mut names = base.feature_names().to_vec();
    names.push("canary".into());
    let d = Dataset::with_mask(Matrix::from_rows(&rows), mask, names, base.labels().to_vec(), base.taxonomy().clone())
        .unwrap();
    let canary = d.n_features() - 1;

    let spec = StageSpec::new(Stage::StageI, LearnerSpec::DecisionTree(TreeParams::default().with_max_depth(4)));
    let cv = cross_validate(&d, &spec, 5, 3).unwrap();
    let mut held_out = 0;
    for fold in &cv.folds {
        let train = d.subset_rows(&fold.plan.train_indices);
        assert_eq!(fold.artifacts.imputer.as_ref(), Some(&fit_imputer(&train)));
        let filled = impute_missing(&train, ImputeStrategy::MedianPerFeature).unwrap();
        let expected = fit_normalizer(&filled, spec.normalization).unwrap();
        assert_eq!(fold.artifacts.normalizer, expected);
        if fold.plan.test_indices.contains(&canary_row) {
            held_out += 1;
            assert!(fold.artifacts.normalizer.per_feature[canary].1 < 1.0);
        } else {
            assert_eq!(fold.artifacts.normalizer.per_feature[canary].1, 1e12);
        }
    }
    assert_eq!(held_out, 1);
}

#[test]
fn persistence_rejects_other_versions_and_truncation() {
    let d = &synth_stages(200, 1)[1];
    let model = dtc_core::learners::fit(&LearnerSpec::default_for(ModelKind::DecisionTree), d, 0).unwrap();
    let json = model.to_json().unwrap();
    assert_eq!(TrainedModel::from_json(&json).unwrap(), model);

    let bumped = json.replacen("\"format_version\": 1", "\"format_version\": 99", 1);
    assert!(matches!(
        TrainedModel::from_json(&bumped),
        Err(PersistError::VersionMismatch { found: 99, expected: 1 })
    ));
    for cut in [json.len() / 3, json.len() / 2, json.len() - 2] {
        assert!(matches!(TrainedModel::from_json(&json[..cut]), Err(PersistError::Schema(_))));
    }

    let p = train_pipeline(&synth_stages(300, 2), &tree_specs(), Routing::Cascade, DEFAULT_CASCADE_GATE, 5).unwrap();
    let text = p.to_json().unwrap();
    assert_eq!(PipelineModel::from_json(&text).unwrap(), p);
    assert!(PipelineModel::from_json(&text[..text.len() / 2]).is_err());
}

proptest! {
    #[test]
    fn metrics_ignore_sample_order(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..120),
        seed in any::<u64>(),
    ) {
        let tax = ClassTaxonomy::stage_two();
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let r = evaluate_labels(&truth, &pred, &tax).unwrap();
        let agree = truth.iter().zip(&pred).filter(|(a, b)| a == b).count();
        prop_assert_eq!(r.accuracy, agree as f64 / truth.len() as f64);

        let mut shuffled = pairs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let (t2, p2): (Vec<usize>, Vec<usize>) = shuffled.into_iter().unzip();
        prop_assert_eq!(r, evaluate_labels(&t2, &p2, &tax).unwrap());
    }
}
