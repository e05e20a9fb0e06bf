use super::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn unit_square() -> SearchSpace {
    SearchSpace {
        dims: vec![
            Dimension::new("a", 0.0, 1.0, Scale::Linear, false),
            Dimension::new("b", 0.0, 1.0, Scale::Linear, false),
        ],
    }
}

fn quadratic(v: &BTreeMap<String, f64>) -> Result<f64> {
    Ok(-((v["a"] - 0.3).powi(2) + (v["b"] - 0.7).powi(2)))
}

fn run(seed: u64, budget: usize) -> TuneOutcome {
    tune(&unit_square(), budget, seed, TrialHistory::default(), quadratic, |_| Ok(())).unwrap()
}

#[test]
fn budget_one_returns_the_only_trial() {
    let out = run(3, 1);
    assert_eq!(out.history.trials.len(), 1);
    assert_eq!(out.best, out.history.trials[0]);
    assert_eq!(out.best.point, quasi_random_point(0, 2, 3));
    assert!(tune(&unit_square(), 0, 3, TrialHistory::default(), quadratic, |_| Ok(())).is_err());
}

#[test]
fn finds_a_known_optimum() {
    let out = run(11, 25);
    let d = ((out.best.values["a"] - 0.3).powi(2) + (out.best.values["b"] - 0.7).powi(2)).sqrt();
    assert!(d < 0.15, "{d}");
    let trace = out.history.incumbent_trace();
    assert!(trace.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn equal_seeds_give_identical_histories() {
    assert_eq!(run(5, 9).history, run(5, 9).history);
    assert_ne!(run(5, 9).history, run(6, 9).history);
}

#[test]
fn ei_is_zero_without_variance_below_the_incumbent() {
    assert_eq!(expected_improvement(0.4, 0.0, 0.5), 0.0);
    assert_eq!(expected_improvement(0.5, 0.0, 0.5), 0.0);
    assert_eq!(expected_improvement(0.7, 0.0, 0.5), 0.7 - 0.5);
    // closed form at z = 0 is sd * φ(0)
    let ei = expected_improvement(0.5, 0.2, 0.5);
    assert!((ei - 0.2 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
}

/// Posterior via an explicit Gauss–Jordan inverse, independent of the
/// Cholesky route.
fn posterior_oracle(x: &[Vec<f64>], y: &[f64], ls: f64, p: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let k = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
        (-d / (2.0 * ls * ls)).exp()
    };
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| k(&x[i], &x[j])).collect();
            row[i] += gp::NOISE + gp::JITTER;
            row.extend((0..n).map(|j| f64::from(u8::from(i == j))));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let src = m[c].clone();
                m[r].iter_mut().zip(&src).for_each(|(v, s)| *v -= f * s);
            }
        }
    }
    let inv: Vec<Vec<f64>> = m.iter().map(|r| r[n..].to_vec()).collect();
    let ks: Vec<f64> = x.iter().map(|xi| k(xi, p)).collect();
    let z: Vec<f64> = y.iter().map(|v| (v - mean) / sd).collect();
    let mut mu = 0.0;
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            mu += ks[i] * inv[i][j] * z[j];
            q += ks[i] * inv[i][j] * ks[j];
        }
    }
    (mean + sd * mu, sd * (1.0 - q).max(0.0).sqrt())
}

fn history_for(seed: u64, n: usize) -> TrialHistory {
    run(seed, n).history
}

#[test]
fn ei_argmax_matches_brute_force() {
    let h = history_for(2, 8);
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) =
        h.successful().map(|(t, o)| (t.point.clone(), o)).unzip();
    let gp = GaussianProcess::fit(&x, &y).unwrap();
    let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cands = candidates(8, 2, 2);
    let std = Normal::new(0.0, 1.0).unwrap();
    let brute: Vec<f64> = cands
        .iter()
        .map(|c| {
            let (m, s) = posterior_oracle(&x, &y, gp.length_scale, c);
            if s == 0.0 {
                return (m - best).max(0.0);
            }
            let z = (m - best) / s;
            (m - best) * std.cdf(z) + s * std.pdf(z)
        })
        .collect();
    let brute_arg = (0..brute.len()).max_by(|&a, &b| brute[a].total_cmp(&brute[b]).then(b.cmp(&a))).unwrap();
    let (arg, ei) = argmax_ei(&gp, &cands, best);
    assert_eq!(arg, brute_arg);
    assert!((ei - brute[brute_arg]).abs() < 1e-8 * brute[brute_arg].max(1.0));
    let suggested = suggest_next(&h, &unit_square(), 2).unwrap();
    assert_eq!(suggested, cands[arg]);
}

#[test]
fn posterior_interpolates_training_points() {
    let h = history_for(4, 12);
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) =
        h.successful().map(|(t, o)| (t.point.clone(), o)).unzip();
    let gp = GaussianProcess::fit(&x, &y).unwrap();
    let spread = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - y.iter().copied().fold(f64::INFINITY, f64::min);
    for (p, v) in x.iter().zip(&y) {
        let (m, s) = gp.predict(p);
        assert!((m - v).abs() < 1e-2 * spread.max(1e-12), "{m} vs {v}");
        let ei = expected_improvement(m, s, y.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        assert!(ei < 1e-2 * spread);
        let (mo, _) = posterior_oracle(&x, &y, gp.length_scale, p);
        assert!((m - mo).abs() < 1e-8);
    }
}

#[test]
fn length_scale_maximizes_marginal_likelihood() {
    let h = history_for(7, 10);
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) =
        h.successful().map(|(t, o)| (t.point.clone(), o)).unzip();
    let gp = GaussianProcess::fit(&x, &y).unwrap();
    for ls in gp::length_scale_grid() {
        let other = GaussianProcess::fit_with(&x, &y, ls).unwrap();
        assert!(other.log_marginal_likelihood <= gp.log_marginal_likelihood);
    }
}

#[test]
fn failures_are_recorded_and_excluded() {
    let mut calls = 0;
    let out = tune(
        &unit_square(),
        10,
        1,
        TrialHistory::default(),
        |v| {
            calls += 1;
            if calls % 3 == 0 {
                Err(Error::numeric("boom"))
            } else if calls == 4 {
                Ok(f64::NAN)
            } else {
                quadratic(v)
            }
        },
        |_| Ok(()),
    )
    .unwrap();
    let failed = out.history.trials.iter().filter(|t| t.objective.is_none()).count();
    assert_eq!(failed, 4);
    assert!(out.history.trials.iter().all(|t| t.objective.is_some() != t.error.is_some()));
    assert!(out.best.objective.is_some());
    let all_fail = tune(&unit_square(), 2, 1, TrialHistory::default(), |_| Err(Error::numeric("x")), |_| Ok(()));
    assert!(all_fail.is_err());
}

#[test]
fn degenerate_history_falls_back_to_quasi_random() {
    let space = unit_square();
    let out = tune(&space, 7, 9, TrialHistory::default(), |_| Ok(0.5), |_| Ok(())).unwrap();
    for (i, t) in out.history.trials.iter().enumerate() {
        assert_eq!(t.point, space.snap(&quasi_random_point(i, 2, 9)));
    }
}

#[test]
fn suggestions_respect_bounds_and_rounding() {
    let space = SearchSpace::recurrent();
    space.validate().unwrap();
    let out = tune(
        &space,
        8,
        3,
        TrialHistory::default(),
        |v| Ok(-(v["learning_rate"].ln() + 6.0).powi(2) - v["n_hidden"] / 100.0),
        |_| Ok(()),
    )
    .unwrap();
    for t in &out.history.trials {
        for d in &space.dims {
            let v = t.values[&d.name];
            assert!(v >= d.low && v <= d.high);
            if d.integer {
                assert_eq!(v, v.round());
            }
        }
        assert_eq!(space.snap(&t.point), t.point);
        let spec = apply_values(&ModelSpec::Recurrent { config: Default::default() }, &t.values).unwrap();
        let ModelSpec::Recurrent { config } = spec else { unreachable!() };
        assert_eq!(config.n_hidden as f64, t.values["n_hidden"]);
    }
    let bad = SearchSpace {
        dims: vec![Dimension::new("x", 1.0, 1.0, Scale::Linear, false)],
    };
    assert!(bad.validate().is_err());
    let bad_log = SearchSpace {
        dims: vec![Dimension::new("x", 0.0, 1.0, Scale::Log, false)],
    };
    assert!(bad_log.validate().is_err());
}

#[test]
fn history_round_trips_through_jsonl_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.jsonl");
    let out = tune(&unit_square(), 6, 8, TrialHistory::default(), quadratic, |t| {
        TrialHistory::append_jsonl(&path, t)
    })
    .unwrap();
    let back = TrialHistory::read_jsonl(&path).unwrap();
    assert_eq!(back, out.history);
    let resumed = tune(&unit_square(), 4, 8, back, quadratic, |_| Ok(())).unwrap();
    let straight = run(8, 10);
    assert_eq!(resumed.history, straight.history);
}

#[test]
fn inner_objective_never_reads_the_test_fold() {
    use crate::cohort::{build_cohort, CohortOptions, HorizonSet};
    use crate::ehr_model::EventDefinition;
    use crate::synth::{generate, GeneratorConfig};
    let cfg = GeneratorConfig {
        n_patients: 600,
        seed: 31,
        ..Default::default()
    };
    let (records, _) = generate(&cfg, crate::par::Exec::Sequential).unwrap();
    let (cohort, _) = build_cohort(
        &records,
        &EventDefinition::default_for(cfg.disease),
        &HorizonSet::default(),
        &CohortOptions::default(),
    )
    .unwrap();
    let folds = split_folds(&cohort, 3, 1).unwrap();
    let spec = ModelSpec::LogReg {
        options: crate::baselines::LogRegOptions {
            history_window: 2,
            lambda: 3e-2,
            ..Default::default()
        },
    };
    let opts = CvOptions::default();
    let a = inner_cv_objective(&cohort, &records, &folds, 0, 3, &spec, 3, &opts).unwrap();
    // scrambling the test fold's labels leaves the objective unchanged
    let mut scrambled = cohort.clone();
    for i in folds.test_indices(0) {
        let p = &mut scrambled.patients[i];
        p.labels.iter_mut().for_each(|l| *l = 1 - *l);
    }
    let b = inner_cv_objective(&scrambled, &records, &folds, 0, 3, &spec, 3, &opts).unwrap();
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a));
}
