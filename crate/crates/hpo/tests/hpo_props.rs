use std::collections::BTreeMap;

use mpe_hpo::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_space() -> SearchSpace {
    SearchSpace::new().with(
        "x",
        ParamSpec::Real {
            low: 0.0,
            high: 1.0,
            log: false,
        },
    )
}

fn completed(id: usize, params: Params, value: f64) -> Trial {
    let mut t = Trial::new(id, params);
    t.status = TrialStatus::Completed;
    t.value = Some(value);
    t
}

fn with_step(id: usize, status: TrialStatus, step: u64, value: f64) -> Trial {
    let mut t = Trial::new(id, Params::new());
    t.status = status;
    t.intermediate.insert(step, value);
    if status == TrialStatus::Completed {
        t.value = Some(value);
    }
    t
}

fn quadratic_study(seed: u64, sampler: Sampler) -> f64 {
    let space = SearchSpace::new().with(
        "x",
        ParamSpec::Real {
            low: 0.0,
            high: 10.0,
            log: false,
        },
    );
    let config = StudyConfig {
        n_trials: 60,
        sampler,
        seed,
        ..StudyConfig::default()
    };
    let result = run_study(
        &space,
        &config,
        |r| {
            let x = r.params()["x"].as_f64().unwrap();
            Ok(-(x - 3.0).powi(2))
        },
        |_| Ok(()),
    )
    .unwrap();
    result.best().unwrap().params["x"].as_f64().unwrap()
}

#[test]
fn prior_samples_stay_in_the_paper_space() {
    let space = SearchSpace::paper();
    space.validate().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let p = sample_prior(&space, &mut rng);
        space.check(&p).unwrap();
    }
}

#[test]
fn increasing_objective_pulls_suggestions_up() {
    let space = unit_space();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let history: Vec<Trial> = (0..30)
        .map(|i| {
            let x: f64 = rng.random();
            completed(i, BTreeMap::from([("x".to_string(), ParamValue::Real(x))]), x)
        })
        .collect();
    let mut upper = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = suggest(&space, &history, Direction::Maximize, &TpeConfig::default(), &mut rng).unwrap();
        if p["x"].as_f64().unwrap() > 0.5 {
            upper += 1;
        }
    }
    assert!(upper >= 90, "only {upper}/100 suggestions in the top half");
}

#[test]
fn winning_category_is_suggested_most() {
    let choices: Vec<ParamValue> = ["a", "b", "c", "d"]
        .iter()
        .map(|s| ParamValue::Text(s.to_string()))
        .collect();
    let space = SearchSpace::new().with(
        "c",
        ParamSpec::Categorical {
            choices: choices.clone(),
        },
    );
    let history: Vec<Trial> = (0..40)
        .map(|i| {
            let c = &choices[i % 4];
            let value = if i % 4 == 2 { 10.0 + i as f64 } else { i as f64 * 0.01 };
            completed(i, BTreeMap::from([("c".to_string(), c.clone())]), value)
        })
        .collect();
    let mut counts = [0usize; 4];
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = suggest(&space, &history, Direction::Maximize, &TpeConfig::default(), &mut rng).unwrap();
        counts[choices.iter().position(|c| c == &p["c"]).unwrap()] += 1;
    }
    let winner = (0..4).max_by_key(|&i| counts[i]).unwrap();
    assert_eq!(winner, 2, "{counts:?}");
}

#[test]
fn history_outside_the_space_is_rejected() {
    let space = unit_space();
    let history: Vec<Trial> = (0..6)
        .map(|i| completed(i, BTreeMap::from([("y".to_string(), ParamValue::Real(0.5))]), 1.0))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = suggest(&space, &history, Direction::Maximize, &TpeConfig::default(), &mut rng).unwrap_err();
    assert!(matches!(err, Error::Mismatch { .. }));
}

#[test]
fn invalid_spaces_are_rejected() {
    let bad = SearchSpace::new().with(
        "lr",
        ParamSpec::Real {
            low: 0.0,
            high: 1.0,
            log: true,
        },
    );
    assert!(bad.validate().is_err());
    let empty = SearchSpace::new().with("c", ParamSpec::Categorical { choices: vec![] });
    assert!(empty.validate().is_err());
    let reversed = SearchSpace::new().with(
        "n",
        ParamSpec::Int {
            low: 5,
            high: 1,
            log: false,
        },
    );
    assert!(reversed.validate().is_err());
}

#[test]
fn parzen_density_integrates_to_one() {
    let p = Parzen::fit(&[0.2, 0.25, 0.9], 0.0, 1.0);
    let n = 20_000;
    let integral: f64 = (0..n).map(|i| p.pdf((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
    assert!((integral - 1.0).abs() < 1e-3, "{integral}");
}

#[test]
fn pruner_is_disabled_during_warmup() {
    let pruner = PercentilePruner::default();
    let mut trials: Vec<Trial> = (0..4)
        .map(|i| with_step(i, TrialStatus::Completed, 1, 10.0 + i as f64))
        .collect();
    let worst = with_step(9, TrialStatus::Running, 1, -100.0);
    trials.push(with_step(8, TrialStatus::Pruned, 1, 50.0));
    assert!(!pruner.should_prune(&worst, 1, &trials, Direction::Maximize).unwrap());
    trials.push(with_step(5, TrialStatus::Completed, 1, 20.0));
    assert!(pruner.should_prune(&worst, 1, &trials, Direction::Maximize).unwrap());
}

#[test]
fn only_the_best_of_ten_survives() {
    let pruner = PercentilePruner::default();
    let values = [0.31, 0.12, 0.77, 0.45, 0.05, 0.66, 0.52, 0.70, 0.29, 0.60];
    let trials: Vec<Trial> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| with_step(i, TrialStatus::Completed, 3, v))
        .collect();
    let survivors: Vec<usize> = trials
        .iter()
        .filter(|t| !pruner.should_prune(t, 3, &trials, Direction::Maximize).unwrap())
        .map(|t| t.id)
        .collect();
    assert_eq!(survivors, vec![2]);
    // Mirrored for minimization: the smallest survives.
    let survivors: Vec<usize> = trials
        .iter()
        .filter(|t| !pruner.should_prune(t, 3, &trials, Direction::Minimize).unwrap())
        .map(|t| t.id)
        .collect();
    assert_eq!(survivors, vec![4]);
}

#[test]
fn value_at_the_quantile_is_kept() {
    let pruner = PercentilePruner {
        keep_fraction: 0.5,
        warmup_trials: 0,
    };
    let trials: Vec<Trial> = [1.0, 2.0, 3.0]
        .iter()
        .enumerate()
        .map(|(i, &v)| with_step(i, TrialStatus::Completed, 1, v))
        .collect();
    // The median of {1, 2, 3} is 2.
    assert!(!pruner
        .should_prune(&trials[1], 1, &trials, Direction::Maximize)
        .unwrap());
    assert!(pruner
        .should_prune(&trials[0], 1, &trials, Direction::Maximize)
        .unwrap());
}

#[test]
fn a_lone_trial_is_never_pruned_and_missing_steps_error() {
    let pruner = PercentilePruner {
        keep_fraction: 0.1,
        warmup_trials: 0,
    };
    let t = with_step(0, TrialStatus::Running, 1, 0.0);
    assert!(!pruner.should_prune(&t, 1, &[], Direction::Maximize).unwrap());
    assert!(matches!(
        pruner.should_prune(&t, 2, &[], Direction::Maximize),
        Err(Error::MissingIntermediate { step: 2, .. })
    ));
}

#[test]
fn reporting_keeps_best_so_far() {
    let mut t = Trial::new(0, Params::new());
    assert!(t.report(1, 0.5, Direction::Maximize));
    assert!(t.report(2, 0.3, Direction::Maximize));
    assert!(t.report(3, 0.8, Direction::Maximize));
    assert!(!t.report(3, 0.9, Direction::Maximize));
    assert_eq!(
        t.intermediate.values().copied().collect::<Vec<_>>(),
        vec![0.5, 0.5, 0.8]
    );
}

/// Objective with a validation curve: the curve rises linearly to `score`.
fn curve_objective(r: &mut TrialReporter<'_>) -> Result<f64, ObjectiveError> {
    let x = r.params()["x"].as_f64().unwrap();
    for step in 1..=5u64 {
        if r.report(step, x * step as f64 / 5.0) {
            return Ok(x);
        }
    }
    Ok(x)
}

#[test]
fn keep_everything_prunes_nothing() {
    let config = StudyConfig {
        n_trials: 20,
        pruner_keep_fraction: 1.0,
        ..StudyConfig::default()
    };
    let result = run_study(&unit_space(), &config, curve_objective, |_| Ok(())).unwrap();
    assert_eq!(result.count(TrialStatus::Pruned), 0);
    assert_eq!(result.count(TrialStatus::Completed), 20);
}

#[test]
fn default_pruning_stops_weak_trials_after_warmup() {
    let config = StudyConfig {
        n_trials: 30,
        ..StudyConfig::default()
    };
    let result = run_study(&unit_space(), &config, curve_objective, |_| Ok(())).unwrap();
    assert!(result.count(TrialStatus::Pruned) > 0);
    for t in &result.trials[..5] {
        assert_eq!(t.status, TrialStatus::Completed);
    }
    for t in result.trials.iter().filter(|t| t.status == TrialStatus::Pruned) {
        assert!(t.value.is_none() && t.pruned_at.is_some());
    }
}

#[test]
fn single_trial_study() {
    let config = StudyConfig {
        n_trials: 1,
        ..StudyConfig::default()
    };
    let result = run_study(&unit_space(), &config, curve_objective, |_| Ok(())).unwrap();
    assert_eq!(result.trials.len(), 1);
    assert_eq!(result.best().unwrap().id, 0);
}

#[test]
fn failures_are_recorded_and_the_study_continues() {
    let config = StudyConfig {
        n_trials: 6,
        ..StudyConfig::default()
    };
    let result = run_study(
        &unit_space(),
        &config,
        |r| {
            if r.trial_id() % 2 == 0 {
                Err("diverged".into())
            } else {
                Ok(1.0)
            }
        },
        |_| Ok(()),
    )
    .unwrap();
    assert_eq!(result.count(TrialStatus::Failed), 3);
    assert_eq!(result.trials[0].error.as_deref(), Some("diverged"));
    assert_eq!(result.best().unwrap().id, 1);
}

#[test]
fn studies_are_deterministic_and_logs_round_trip() {
    let config = StudyConfig {
        n_trials: 25,
        seed: 3,
        ..StudyConfig::default()
    };
    let a = run_study(&unit_space(), &config, curve_objective, |_| Ok(())).unwrap();
    let mut logged = Vec::new();
    let b = run_study(&unit_space(), &config, curve_objective, |t| {
        logged.push(t.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(logged, b.trials);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("study.jsonl");
    mpe_hpo::study::save_log(&a.trials, &path).unwrap();
    assert_eq!(mpe_hpo::study::load_log(&path).unwrap(), a.trials);
}

#[test]
fn tpe_finds_the_quadratic_optimum_and_beats_random_search() {
    let mut hits = 0;
    let mut tpe_best = Vec::new();
    let mut random_best = Vec::new();
    for seed in 0..10 {
        let x = quadratic_study(seed, Sampler::Tpe);
        if (x - 3.0).abs() <= 0.3 {
            hits += 1;
        }
        tpe_best.push(-(x - 3.0).powi(2));
        let r = quadratic_study(seed, Sampler::Random);
        random_best.push(-(r - 3.0).powi(2));
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[4] + v[5]) / 2.0
    };
    assert!(hits >= 9, "{hits}/10 within 0.3");
    assert!(median(&mut tpe_best) > median(&mut random_best));
}

#[test]
fn search_space_json_round_trips() {
    let space = SearchSpace::paper();
    assert_eq!(SearchSpace::from_json(&space.to_json()).unwrap(), space);
    SearchSpace::desk().validate().unwrap();
}

proptest! {
    #[test]
    fn suggestions_stay_inside_the_space(seed in 0u64..1000, n in 0usize..30) {
        let space = SearchSpace::new()
            .with("lr", ParamSpec::Real { low: 1e-5, high: 1e-2, log: true })
            .with("layers", ParamSpec::Int { low: 1, high: 6, log: false })
            .with("width", ParamSpec::Int { low: 16, high: 512, log: true })
            .with("act", ParamSpec::Categorical { choices: vec![ParamValue::Text("relu".into()), ParamValue::Text("gelu".into())] });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let history: Vec<Trial> = (0..n).map(|i| {
            let p = sample_prior(&space, &mut rng);
            let v: f64 = rng.random();
            completed(i, p, v)
        }).collect();
        let p = suggest(&space, &history, Direction::Maximize, &TpeConfig::default(), &mut rng).unwrap();
        prop_assert!(space.check(&p).is_ok());
    }

    #[test]
    fn lowering_keep_fraction_never_unprunes(values in prop::collection::vec(-10.0f64..10.0, 2..15), k1 in 0.05f64..1.0, k2 in 0.05f64..1.0) {
        let (lo, hi) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
        let trials: Vec<Trial> = values.iter().enumerate().map(|(i, &v)| with_step(i, TrialStatus::Completed, 1, v)).collect();
        let strict = PercentilePruner { keep_fraction: lo, warmup_trials: 0 };
        let loose = PercentilePruner { keep_fraction: hi, warmup_trials: 0 };
        for t in &trials {
            if loose.should_prune(t, 1, &trials, Direction::Maximize).unwrap() {
                prop_assert!(strict.should_prune(t, 1, &trials, Direction::Maximize).unwrap());
            }
        }
    }
}
