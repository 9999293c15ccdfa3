mod common;

use fairsandbox::biasinject::{inject_feature_missingness, inject_underrepresentation, Scope};
use fairsandbox::harness::{
    preset, run_experiment, run_experiment_subset, run_single, ExperimentConfig, GroupKey, Intervention, Metric,
    ModelVariant, Split, Status, Sweep,
};
use fairsandbox::synthgen::{sample_ground_truth, BayesParams, GenConfig, Group};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(intervention: Intervention, levels: Vec<f64>, reps: usize) -> ExperimentConfig {
    let mut c = preset("fig3_small").unwrap().with_repetitions(reps);
    c.sweep = Sweep::BiasLevels(levels);
    c.intervention = intervention;
    c.grid.grid_size = 4;
    c
}

#[test]
fn analytic_reference_has_unit_self_fidelity() {
    let res = run_experiment(&small(Intervention::GridSearchEO, vec![0.0, 0.7], 3), None).unwrap();
    let rows: Vec<_> = res
        .records
        .iter()
        .filter(|r| r.model_variant == ModelVariant::BayesAnalytic && r.split == Split::Test && r.metric == Metric::FidelityAgreement)
        .collect();
    assert_eq!(rows.len(), 2 * 3 * 3);
    assert!(rows.iter().all(|r| r.value == 1.0));
}

#[test]
fn unbiased_run_without_intervention_matches_reference_fit() {
    let cfg = small(Intervention::None, vec![0.0], 2);
    for run in 0..2 {
        let recs = run_single(&cfg, 0, run).unwrap();
        assert!(recs.iter().all(|r| r.model_variant != ModelVariant::Intervened));
        let pick = |v: ModelVariant| -> Vec<(Split, GroupKey, Metric, u64)> {
            recs.iter()
                .filter(|r| r.model_variant == v && r.split == Split::Test)
                .map(|r| (r.split, r.group, r.metric, r.value.to_bits()))
                .collect()
        };
        assert_eq!(pick(ModelVariant::Biased), pick(ModelVariant::BayesDataDriven));
    }
}

#[test]
fn subsets_reproduce_full_runs() {
    let cfg = small(Intervention::GridSearchEO, vec![0.0, 0.3, 0.6], 2);
    let full = run_experiment(&cfg, Some(1)).unwrap();
    let part = run_experiment_subset(&cfg, Some(&[1]), Some(1)).unwrap();
    let expected: Vec<_> = full.records.iter().filter(|r| r.bias_level == 0.3).cloned().collect();
    assert_eq!(part.records, expected);
    assert_eq!(run_single(&cfg, 2, 1).unwrap(), run_single(&cfg, 2, 1).unwrap());
}

#[test]
fn aggregates_are_bounded_and_accounted() {
    let cfg = small(Intervention::PostProcessEO, vec![0.0, 0.5, 1.0], 4);
    let res = run_experiment(&cfg, None).unwrap();
    for a in &res.aggregates {
        assert_eq!(a.count + a.excluded, 4);
        if a.count > 0 {
            assert!(a.mean.abs() <= 1.0 && a.std >= 0.0, "{a:?}");
        } else {
            assert!(a.mean.is_nan());
        }
    }
    // With every positive minority row deleted, the post-processor has an
    // empty cell and must be excluded rather than abort the sweep.
    let at_one: Vec<_> = res
        .records
        .iter()
        .filter(|r| r.bias_level == 1.0 && r.model_variant == ModelVariant::Intervened)
        .collect();
    assert!(!at_one.is_empty());
    assert!(at_one.iter().all(|r| r.status == Status::ExcludedNotApplicable && r.value.is_nan()));
    let ok_elsewhere = res
        .records
        .iter()
        .filter(|r| r.bias_level == 0.0 && r.model_variant == ModelVariant::Intervened)
        .all(|r| r.status == Status::Ok);
    assert!(ok_elsewhere);
}

#[test]
fn single_repetition_has_zero_spread() {
    let res = run_experiment(&small(Intervention::None, vec![0.2], 1), None).unwrap();
    assert!(res.aggregates.iter().all(|a| a.std == 0.0 && a.count == 1));
}

#[test]
fn every_intervention_runs_end_to_end() {
    for iv in [
        Intervention::None,
        Intervention::GridSearchEO,
        Intervention::PostProcessEO,
        Intervention::CorrelationRemover { alpha: 1.0 },
    ] {
        let res = run_experiment(&small(iv, vec![0.0, 0.4], 2), None).unwrap();
        let fid = common::mean_at(&res.aggregates, 0.0, ModelVariant::Biased, GroupKey::All, Metric::FidelityAgreement);
        assert!(fid > 0.6, "{iv:?}: {fid}");
    }
}

#[test]
fn disjoint_injectors_commute_in_distribution() {
    let cfg = GenConfig {
        n: 40_000,
        minority_fraction: 0.3,
        feature_shift: 0.0,
        bayes: BayesParams::with_noise(0.2),
    };
    let ds = sample_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
    let stats = |d: &fairsandbox::synthgen::Dataset| {
        let b: Vec<usize> = (0..d.len()).filter(|&i| d.group[i] == Group::B).collect();
        let pos = b.iter().filter(|&&i| d.label[i]).count() as f64;
        let zeroed = b.iter().filter(|&&i| d.features[i][1] == 0.0).count() as f64;
        (b.len() as f64, pos, zeroed)
    };
    let mut r1 = ChaCha8Rng::seed_from_u64(4);
    let drop_then_zero = inject_feature_missingness(
        &inject_underrepresentation(&ds, 0.5, &mut r1),
        0.6,
        1,
        Scope::NegativeMinority,
        &mut r1,
    );
    let mut r2 = ChaCha8Rng::seed_from_u64(5);
    let zero_then_drop = inject_underrepresentation(
        &inject_feature_missingness(&ds, 0.6, 1, Scope::NegativeMinority, &mut r2),
        0.5,
        &mut r2,
    );
    let (a, b) = (stats(&drop_then_zero), stats(&zero_then_drop));
    // Binomial standard deviations here are below 60 rows.
    assert!((a.0 - b.0).abs() < 250.0, "{a:?} {b:?}");
    assert!((a.1 - b.1).abs() < 250.0, "{a:?} {b:?}");
    assert!((a.2 - b.2).abs() < 250.0, "{a:?} {b:?}");
}
