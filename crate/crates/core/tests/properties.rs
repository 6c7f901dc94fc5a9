use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;

use sentinel_core::corpus::{clean_profile, stratified_split, Label, Profile, RawProfile, SplitCounts};
use sentinel_core::featurize::Layout;
use sentinel_core::learn::gbdt::{sigmoid, train_gbdt_with_history};
use sentinel_core::learn::{train_gbdt, train_knn, ClassifierKind, GbdtParams, KnnParams};
use sentinel_core::scenario::{partition, plan, Dataset, ScenarioName, ScenarioSpec};
use sentinel_core::synthgen::{generate, GenConfig};
use sentinel_core::tune::{
    tune_bo, tune_ga, Domain, FnObjective, GaOperators, Params, SearchSpace, TuneBudget, WORST_OBJECTIVE,
};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(cases)
    }
}

fn labelled_rows() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>)> {
    (2usize..4, 6usize..40).prop_flat_map(|(d, n)| {
        (
            proptest::collection::vec(proptest::collection::vec(-3i32..3, d), n),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(x, mut y)| {
                y[0] = true;
                y[1] = false;
                (
                    x.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect(),
                    y,
                )
            })
    })
}

fn small_gbdt() -> GbdtParams {
    GbdtParams {
        n_trees: 8,
        learning_rate: 0.3,
        max_depth: 3,
        min_samples_leaf: 1,
        lambda_l2: 1.0,
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn gbdt_structure_and_loss((x, y) in labelled_rows()) {
        let params = small_gbdt();
        let (model, history) = train_gbdt_with_history(&x, &y, &params).unwrap();
        prop_assert!(history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        for t in &model.trees {
            prop_assert!(t.depth() <= params.max_depth);
        }
        for row in &x {
            let raw = model.base_score + params.learning_rate * model.trees.iter().map(|t| t.predict(row)).sum::<f64>();
            let p = model.predict_proba(row);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((p - sigmoid(raw)).abs() < 1e-15);
        }
    }

    #[test]
    fn gbdt_ignores_training_order((x, y) in labelled_rows(), rot in 0usize..40) {
        let k = rot % x.len();
        let (mut xr, mut yr) = (x.clone(), y.clone());
        xr.rotate_left(k);
        yr.rotate_left(k);
        let a = train_gbdt(&x, &y, &small_gbdt()).unwrap();
        let b = train_gbdt(&xr, &yr, &small_gbdt()).unwrap();
        for row in &x {
            prop_assert!((a.predict_proba(row) - b.predict_proba(row)).abs() < 1e-12);
        }
    }

    #[test]
    fn knn_probability_on_the_k_grid((x, y) in labelled_rows(), k in 1usize..6, q in proptest::collection::vec(-4.0f64..4.0, 3)) {
        let model = train_knn(&x, &y, &KnnParams { k }).unwrap();
        let d = x[0].len();
        let p = model.predict_proba(&q[..d.min(3)].iter().copied().chain(std::iter::repeat(0.0)).take(d).collect::<Vec<_>>());
        let scaled = p * k as f64;
        prop_assert!((scaled - scaled.round()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

fn population(sizes: &BTreeMap<Label, usize>) -> Vec<Profile> {
    let mut out = Vec::new();
    for (&label, &n) in sizes {
        for i in 0..n {
            let raw = RawProfile {
                id: format!("{label}-{i:03}"),
                label: label.as_str().into(),
                name: "A B".into(),
                location: "town".into(),
                summary: String::new(),
                numeric: BTreeMap::new(),
                sections: [
                    ("experience".to_string(), vec!["engineer".to_string()]),
                    ("education".to_string(), vec!["school".to_string()]),
                ]
                .into(),
            };
            out.push(clean_profile(&raw).unwrap());
        }
    }
    out
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn split_is_exact_disjoint_and_pure(
        sizes in proptest::collection::btree_map(prop::sample::select(Label::ALL.to_vec()), 2usize..30, 1..4),
        fracs in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 4),
        seed in any::<u64>(),
    ) {
        let profiles = population(&sizes);
        let counts: SplitCounts = sizes
            .iter()
            .zip(&fracs)
            .map(|((&l, &n), &(a, b))| {
                let train = (a * n as f64).floor() as usize;
                let test = (b * (n - train) as f64).floor() as usize;
                (l, (train, test))
            })
            .collect();
        let split = stratified_split(&profiles, &counts, seed).unwrap();
        let train: HashSet<&String> = split.train.iter().collect();
        prop_assert!(split.test.iter().all(|id| !train.contains(id)));
        for (l, &(tr, te)) in &counts {
            let prefix = format!("{l}-");
            prop_assert_eq!(split.train.iter().filter(|i| i.starts_with(&prefix)).count(), tr);
            prop_assert_eq!(split.test.iter().filter(|i| i.starts_with(&prefix)).count(), te);
        }
        let mut reversed = profiles.clone();
        reversed.reverse();
        prop_assert_eq!(&split, &stratified_split(&reversed, &counts, seed).unwrap());
    }
}

fn budget_strategy() -> impl Strategy<Value = TuneBudget> {
    (1usize..8, 1usize..8, 3usize..10, 1usize..4, 0usize..3).prop_map(|(s1, s2, pop, gens, ft)| TuneBudget {
        bo_stage1_trials: s1,
        bo_stage2_trials: s2,
        ga_population: pop,
        ga_generations: gens,
        ga_finetune_generations: ft.max(1),
    })
}

fn bumpy(p: &Params) -> sentinel_core::Result<f64> {
    let x = p["x"].as_f64().unwrap();
    let n = p["n"].as_f64().unwrap();
    Ok((7.0 * x).sin() - 0.1 * n)
}

fn bumpy_space() -> SearchSpace {
    SearchSpace::new([
        (
            "x".to_string(),
            Domain::Float {
                lo: 0.0,
                hi: 1.0,
                log: false,
            },
        ),
        ("n".to_string(), Domain::Int { lo: 1, hi: 5 }),
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn bo_budget_best_and_purity(budget in budget_strategy(), seed in any::<u64>()) {
        let space = bumpy_space();
        let r = tune_bo(&space, &FnObjective(bumpy), &budget, seed).unwrap();
        prop_assert_eq!(r.trials.len(), budget.bo_stage1_trials + budget.bo_stage2_trials);
        let stage2_max = r.trials.iter().filter(|t| t.stage == "bo_stage2").map(|t| t.objective).fold(WORST_OBJECTIVE, f64::max);
        prop_assert_eq!(r.best.objective, stage2_max);
        prop_assert!(r.trials.iter().all(|t| t.objective.is_finite()));
        prop_assert_eq!(&r, &tune_bo(&space, &FnObjective(bumpy), &budget, seed).unwrap());
    }

    #[test]
    fn ga_budget_best_and_purity(budget in budget_strategy(), seed in any::<u64>()) {
        let space = bumpy_space();
        let ops = GaOperators { finetune_pool: 4, ..GaOperators::default() };
        let r = tune_ga(&space, &FnObjective(bumpy), &budget, &ops, seed, None).unwrap();
        let pop = budget.ga_population;
        let pool = ops.finetune_pool.min(pop * budget.ga_generations - (budget.ga_generations - 1) * ops.elitism);
        let expected = pop
            + (budget.ga_generations - 1) * (pop - ops.elitism)
            + budget.ga_finetune_generations * (pool - ops.elitism);
        prop_assert_eq!(r.trials.len(), expected);
        let max = r.trials.iter().map(|t| t.objective).fold(WORST_OBJECTIVE, f64::max);
        prop_assert_eq!(r.best.objective, max);
        prop_assert_eq!(&r, &tune_ga(&space, &FnObjective(bumpy), &budget, &ops, seed, None).unwrap());
    }
}

#[test]
fn legit_test_subset_is_the_same_in_every_scenario() {
    let g = generate(&GenConfig {
        counts: GenConfig::scaled_counts(1.0 / 30.0),
        ..GenConfig::default()
    })
    .unwrap();
    let profiles = g.records.iter().map(|r| clean_profile(r).unwrap()).collect();
    let data = Dataset::with_word_vectors(profiles, &g.word_vectors).unwrap();
    let part = partition(&data, 1.0 / 30.0, 4).unwrap();
    let mut legit_tests = Vec::new();
    for name in ScenarioName::ALL {
        let spec = ScenarioSpec::canonical(name, 1.0 / 30.0, Layout::Fused, ClassifierKind::Gbdt, 4);
        let p = plan(&spec, &part).unwrap();
        let test: HashSet<&String> = p.test_ids.iter().collect();
        assert!(p.train_ids.iter().all(|id| !test.contains(id)));
        assert!(part.test_ids().all(|id| !p.train_ids.contains(id)));
        let legit: Vec<String> = p.test_ids.iter().filter(|id| id.starts_with("llp-")).cloned().collect();
        legit_tests.push(legit);
    }
    assert_eq!(legit_tests[0].len(), 18);
    assert!(legit_tests.windows(2).all(|w| w[0] == w[1]));
}
