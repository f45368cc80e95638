//! Acceptance suite. Each test covers one release criterion at its stated
//! tolerance and prints a pass line; run with `--nocapture` to see them.
//!
//! The full-data check needs the public dataset and is skipped unless
//! `EPIFORECAST_DATA` points at a directory holding `cases.csv`,
//! `populations.csv` and `distances.csv`.

use epiforecast::domain::{EpiSeries, RegionSet};
use epiforecast::estimator::{self, ModelState, TrainConfig};
use epiforecast::evaluation;
use epiforecast::ingest::{self, IngestConfig};
use epiforecast::mobility::{interaction_matrix, mobility_matrix, InteractionMatrix, MobilityConfig};
use epiforecast::reproduction::{r0_at, spectral_radius};
use epiforecast::sir::{
    fit_standard_sir, metapop_simulate, metapop_step, standard_sir_simulate, MetapopState,
    ParamGrid, ParamTrack, RateSet,
};
use epiforecast::ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn single_region(p: f64) -> (RegionSet, InteractionMatrix) {
    let regions = RegionSet::new(vec!["Solo".into()], vec![p], Array2::zeros((1, 1))).unwrap();
    let config = MobilityConfig::new(1.12e-6, 1.73, 0.0, p).unwrap();
    let inter = interaction_matrix(&mobility_matrix(&regions, &config), &regions).unwrap();
    (regions, inter)
}

/// Criterion 1: single-region metapopulation and standard SIR trajectories
/// agree to 1e-12 relative over 365 Euler steps, 100 randomized draws.
#[test]
fn criterion_1_limiting_case_equivalence() {
    let start = Instant::now();
    let p = 1.0e6;
    let (_, inter) = single_region(p);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for draw in 0..100 {
        let beta = 0.05 + 1.15 * rng.gen::<f64>();
        let gamma = 0.05 + 0.85 * rng.gen::<f64>();
        let i0 = 1.0 + (0.2 * p - 1.0) * rng.gen::<f64>();
        let s0 = p - i0;
        let initial =
            MetapopState::new(Array1::from(vec![s0]), Array1::from(vec![i0]), Array1::zeros(1))
                .unwrap();
        let rates = RateSet::uniform(1, beta, gamma).unwrap();
        let track = ParamTrack::constant(&rates, 365).unwrap();
        let meta = metapop_simulate(&initial, &track, &inter, 365).unwrap();
        let standard = standard_sir_simulate(s0, i0, 0.0, beta, gamma, p, 365).unwrap();
        for t in 0..365 {
            for (meta_v, std_v) in [
                (meta.susceptible()[(0, t)], standard.susceptible[t]),
                (meta.infected()[(0, t)], standard.infected[t]),
                (meta.removed()[(0, t)], standard.removed[t]),
                (meta.new_cases()[(0, t)], standard.new_cases[t]),
            ] {
                assert!(
                    close(meta_v, std_v, 1e-12),
                    "draw {draw}, day {t}: metapop {meta_v} vs standard {std_v} \
                     (beta {beta}, gamma {gamma}, i0 {i0})"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    println!("criterion 1 (limiting-case equivalence, 100 draws x 365 steps, 1e-12): PASS in {elapsed:?}");
}

/// Criterion 2: the single-region reproduction number equals beta/gamma to
/// 1e-12; beta=0.3, gamma=0.1 yields exactly 3 to tolerance.
#[test]
fn criterion_2_r0_limiting_case() {
    let start = Instant::now();
    let (regions, inter) = single_region(3.28e8);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..100 {
        let beta = 0.05 + 1.5 * rng.gen::<f64>();
        let gamma = 0.05 + 0.9 * rng.gen::<f64>();
        let rates = RateSet::uniform(1, beta, gamma).unwrap();
        let r0 = r0_at(&rates, &inter, &regions).unwrap();
        let expected = beta / gamma;
        assert!(
            close(r0, expected, 1e-12),
            "r0 {r0} vs beta/gamma {expected}"
        );
    }
    let rates = RateSet::uniform(1, 0.3, 0.1).unwrap();
    let r0 = r0_at(&rates, &inter, &regions).unwrap();
    assert!(close(r0, 3.0, 1e-12), "expected 3.0, got {r0}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("criterion 2 (r0 = beta/gamma at M=1, 100 draws, 1e-12): PASS in {elapsed:?}");
}

/// Criterion 3: power iteration matches a dense eigendecomposition within
/// 1e-8 on 500 random nonnegative matrices up to 48x48.
#[test]
fn criterion_3_spectral_radius_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..500 {
        let n = rng.gen_range(1..=48);
        let matrix = Array2::from_shape_fn((n, n), |_| rng.gen::<f64>());
        let power = spectral_radius(&matrix).unwrap();
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| matrix[(i, j)])
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        assert!(
            (power - dense).abs() <= 1e-8 * dense.max(1.0),
            "case {case} (n={n}): power {power} vs dense {dense}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!("criterion 3 (power iteration vs dense oracle, 500 matrices <= 48x48, 1e-8): PASS in {elapsed:?}");
}

fn random_regions(rng: &mut ChaCha8Rng, n: usize) -> RegionSet {
    let names = (0..n).map(|i| format!("R{i}")).collect();
    let pops: Vec<f64> = (0..n).map(|_| 5e4 + 2e6 * rng.gen::<f64>()).collect();
    let mut dist = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = 20.0 + 2000.0 * rng.gen::<f64>();
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    RegionSet::new(names, pops, dist).unwrap()
}

fn random_window(rng: &mut ChaCha8Rng, regions: &RegionSet, days: usize) -> EpiSeries {
    let n = regions.len();
    let mut s = Array2::zeros((n, days));
    let mut i_m = Array2::zeros((n, days));
    let mut r_m = Array2::zeros((n, days));
    let mut nc = Array2::zeros((n, days));
    for r in 0..n {
        let p = regions.populations()[r];
        let mut infected = p * (0.005 + 0.02 * rng.gen::<f64>());
        let mut removed = 0.0;
        for t in 0..days {
            let cases = infected * (0.02 + 0.1 * rng.gen::<f64>());
            infected += cases - 0.1 * infected;
            removed += 0.1 * infected;
            i_m[(r, t)] = infected;
            r_m[(r, t)] = removed;
            s[(r, t)] = p - infected - removed;
            nc[(r, t)] = cases;
        }
    }
    EpiSeries::new((0..days as i64).collect(), s, i_m, r_m, nc).unwrap()
}

/// Criterion 4: reverse-mode gradients of the full windowed loss (through
/// the SIR rollout) match central finite differences on 20 random small
/// instances.
#[test]
fn criterion_4_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for instance in 0..20 {
        let n = rng.gen_range(1..=4);
        let window_len = rng.gen_range(5..=8);
        let kernel = rng.gen_range(2..=3).min(window_len / 2);
        let config = TrainConfig {
            window: window_len,
            horizon: rng.gen_range(1..=4),
            hidden: rng.gen_range(3..=6),
            st_layers: 2,
            kernel_width: kernel,
            seed: 404 + instance,
            ..TrainConfig::default()
        };
        let regions = random_regions(&mut rng, n);
        let mobility =
            MobilityConfig::new(1.12e-6, 1.73, 0.01, regions.total_population()).unwrap();
        let model = ModelState::init(&regions, &mobility, &config).unwrap();
        let window = random_window(&mut rng, &regions, window_len);
        // jittered targets keep the MAE away from its kinks
        let targets = Array2::from_shape_fn((config.horizon, n), |(_, r)| {
            regions.populations()[r] * (0.001 + 0.01 * rng.gen::<f64>())
        });

        let result = estimator::backward(&model, &window, &targets, &regions).unwrap();
        let base = model.param_vector();
        let loss_at = |params: &[f64]| {
            let mut probe = model.clone();
            probe.set_param_vector(params).unwrap();
            estimator::backward(&probe, &window, &targets, &regions)
                .unwrap()
                .loss
        };
        for idx in 0..base.len() {
            let h = 1e-5 * base[idx].abs().max(1.0);
            let mut plus = base.clone();
            plus[idx] += h;
            let mut minus = base.clone();
            minus[idx] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let ad = result.gradients[idx];
            let err = (ad - fd).abs();
            let tol = 1e-7f64.max(1e-4 * ad.abs().max(fd.abs()));
            assert!(
                err <= tol,
                "instance {instance} (n={n}), parameter {idx}: \
                 reverse-mode {ad} vs finite differences {fd}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    println!("criterion 4 (gradients vs central differences, 20 instances, 1e-4 relative): PASS in {elapsed:?}");
}

fn recovery_regions() -> RegionSet {
    RegionSet::new(
        (0..6).map(|i| format!("R{i}")).collect(),
        vec![1.5e6, 9.0e5, 6.0e5, 5.0e5, 4.5e5, 3.5e5],
        {
            let mut d = Array2::zeros((6, 6));
            let values = [
                (0, 1, 140.0),
                (0, 2, 320.0),
                (0, 3, 510.0),
                (0, 4, 800.0),
                (0, 5, 1200.0),
                (1, 2, 210.0),
                (1, 3, 430.0),
                (1, 4, 690.0),
                (1, 5, 1060.0),
                (2, 3, 260.0),
                (2, 4, 450.0),
                (2, 5, 880.0),
                (3, 4, 240.0),
                (3, 5, 620.0),
                (4, 5, 380.0),
            ];
            for (i, j, v) in values {
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
            d
        },
    )
    .unwrap()
}

/// Criterion 5: training on synthetic data generated with known constant
/// rates recovers them within 20% mean relative error on held-out windows,
/// and the final validation MAE falls under 25% of the initial value.
#[test]
fn criterion_5_parameter_recovery() {
    let start = Instant::now();
    let regions = recovery_regions();
    let mobility = MobilityConfig::new(1.12e-6, 1.73, 0.0, regions.total_population()).unwrap();
    let inter = interaction_matrix(&mobility_matrix(&regions, &mobility), &regions).unwrap();
    let (beta_true, gamma_true) = (0.8, 0.15);
    let n = regions.len();

    // the generating system must actually spread for the data to carry signal
    let rates = RateSet::uniform(n, beta_true, gamma_true).unwrap();
    let r0 = r0_at(&rates, &inter, &regions).unwrap();
    assert!(r0 > 1.2, "generator must be supercritical, r0 = {r0}");

    let infected0 = Array1::from_shape_fn(n, |r| regions.populations()[r] * 0.001);
    let initial = MetapopState::new(
        regions.populations() - &infected0,
        infected0,
        Array1::zeros(n),
    )
    .unwrap();
    let track = ParamTrack::constant(&rates, 200).unwrap();
    let dataset = metapop_simulate(&initial, &track, &inter, 200).unwrap();
    let peak_day = (0..200)
        .max_by(|a, b| {
            let ia: f64 = (0..n).map(|r| dataset.infected()[(r, *a)]).sum();
            let ib: f64 = (0..n).map(|r| dataset.infected()[(r, *b)]).sum();
            ia.total_cmp(&ib)
        })
        .unwrap();
    assert!(
        (10..190).contains(&peak_day),
        "epidemic should peak inside the series, peaked on day {peak_day}"
    );

    let config = TrainConfig {
        learning_rate: 0.02,
        epochs: 250,
        window: 14,
        horizon: 7,
        hidden: 12,
        st_layers: 2,
        kernel_width: 3,
        beta_max: 2.0,
        seed: 505,
        ..TrainConfig::default()
    };
    let (model, history) = estimator::train(&dataset, &regions, &mobility, &config).unwrap();

    let initial_val = history.first().unwrap().val_mae;
    let final_val = history.last().unwrap().val_mae;
    assert!(
        final_val < 0.25 * initial_val,
        "validation MAE {final_val} did not fall under 25% of initial {initial_val}"
    );

    // recovery on held-out (test-split) windows
    let n_samples = dataset.n_days() - config.window - config.horizon + 1;
    let (_, _, test_range) = estimator::chronological_split(n_samples);
    let mut beta_err = 0.0;
    let mut gamma_err = 0.0;
    let mut count = 0.0;
    for w in test_range {
        let window = dataset.slice_days(w, config.window).unwrap();
        let track = estimator::forward(&model, &window, &regions).unwrap();
        for r in 0..n {
            beta_err += (track.beta()[(r, 0)] - beta_true).abs() / beta_true;
            gamma_err += (track.gamma()[(r, 0)] - gamma_true).abs() / gamma_true;
            count += 1.0;
        }
    }
    beta_err /= count;
    gamma_err /= count;
    assert!(
        beta_err < 0.2,
        "mean relative beta error {beta_err} exceeds 20%"
    );
    assert!(
        gamma_err < 0.2,
        "mean relative gamma error {gamma_err} exceeds 20%"
    );
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 600.0,
        "took {elapsed:?}, budget 10 min"
    );
    println!(
        "criterion 5 (parameter recovery: beta err {beta_err:.3}, gamma err {gamma_err:.3}, \
         val MAE {initial_val:.3} -> {final_val:.3}): PASS in {elapsed:?}"
    );
}

/// Criterion 6: fuzzed steps never violate conservation, nonnegativity, or
/// the sigmoid output ranges.
#[test]
fn criterion_6_conservation_and_ranges() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    // 1000 random integrator steps
    for case in 0..1000 {
        let n = rng.gen_range(1..=6);
        let regions = random_regions(&mut rng, n);
        let mobility = MobilityConfig::new(
            1e-6 * (1.0 + 9.0 * rng.gen::<f64>()),
            1.0 + rng.gen::<f64>(),
            0.01 * rng.gen::<f64>(),
            regions.total_population(),
        )
        .unwrap();
        let inter = interaction_matrix(&mobility_matrix(&regions, &mobility), &regions).unwrap();
        let mut s = Array1::zeros(n);
        let mut i_v = Array1::zeros(n);
        let mut r_v = Array1::zeros(n);
        for r in 0..n {
            let p = regions.populations()[r];
            let infected = p * rng.gen::<f64>() * 0.5;
            let removed = (p - infected) * rng.gen::<f64>() * 0.5;
            s[r] = p - infected - removed;
            i_v[r] = infected;
            r_v[r] = removed;
        }
        let state = MetapopState::new(s, i_v, r_v).unwrap();
        let rates = RateSet::new(
            Array1::from_shape_fn(n, |_| 2.0 * rng.gen::<f64>()),
            Array1::from_shape_fn(n, |_| 0.01 + 0.98 * rng.gen::<f64>()),
        )
        .unwrap();
        let before: f64 = state.population().sum();
        let (next, new_infections) = metapop_step(&state, &rates, &inter, 1.0).unwrap();
        let after: f64 = next.population().sum();
        assert!(
            (before - after).abs() <= 1e-9 * before,
            "case {case}: population drifted {before} -> {after}"
        );
        for r in 0..n {
            assert!(next.susceptible[r] >= 0.0);
            assert!(next.infected[r] >= 0.0);
            assert!(next.removed[r] >= 0.0);
            assert!(new_infections[r] >= 0.0);
        }
    }
    // network output ranges on fuzzed windows
    let regions = random_regions(&mut rng, 4);
    let mobility = MobilityConfig::new(1.12e-6, 1.73, 0.0, regions.total_population()).unwrap();
    let config = TrainConfig {
        window: 10,
        horizon: 3,
        hidden: 8,
        st_layers: 2,
        kernel_width: 3,
        seed: 607,
        ..TrainConfig::default()
    };
    let model = ModelState::init(&regions, &mobility, &config).unwrap();
    for _ in 0..100 {
        let window = random_window(&mut rng, &regions, config.window);
        let track = estimator::forward(&model, &window, &regions).unwrap();
        for r in 0..4 {
            let b = track.beta()[(r, 0)];
            let g = track.gamma()[(r, 0)];
            assert!(b > 0.0 && b < config.beta_max, "beta {b} out of (0, beta_max)");
            assert!(g > 0.0 && g < 1.0, "gamma {g} out of (0, 1)");
        }
    }
    let elapsed = start.elapsed();
    println!("criterion 6 (conservation + range fuzz, 1000 steps): PASS in {elapsed:?}");
}

/// Criterion 8: directional claims on the public 48-state dataset. Skipped
/// unless EPIFORECAST_DATA names a directory with the three input files.
#[test]
fn criterion_8_full_data_check() {
    let start = Instant::now();
    let Some(dir) = std::env::var_os("EPIFORECAST_DATA") else {
        println!(
            "criterion 8 (full-data check): SKIP — set EPIFORECAST_DATA to a directory \
             holding cases.csv, populations.csv, distances.csv"
        );
        return;
    };
    let dir = std::path::PathBuf::from(dir);
    let regions = RegionSet::from_csv_files(&dir.join("populations.csv"), &dir.join("distances.csv"))
        .expect("region files load");
    let ingest_config = IngestConfig::default();
    let (dataset, summary) =
        ingest::ingest(&dir.join("cases.csv"), &regions, &ingest_config).expect("ingest");
    assert_eq!(summary.regions, 48, "expected the 48 contiguous states");

    let mobility =
        MobilityConfig::new(1.12e-6, 1.73, 0.0, regions.total_population()).unwrap();
    let epochs = std::env::var("EPIFORECAST_FULL_EPOCHS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(319);
    let config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let (model, _) = estimator::train(&dataset, &regions, &mobility, &config).expect("train");
    let (report, _) = evaluation::evaluate(
        &model,
        &dataset,
        &regions,
        &[1, 7],
        &ParamGrid::default_grid(),
    )
    .expect("evaluate");

    for national in &report.national {
        assert!(
            national.model_mae < national.baseline_mae,
            "horizon {}: model MAE {} not below baseline {}",
            national.horizon,
            national.model_mae,
            national.baseline_mae
        );
    }
    let good = report
        .per_region
        .iter()
        .filter(|r| r.r_squared > 0.6)
        .count();
    assert!(
        good * 2 > report.per_region.len(),
        "only {good} of {} states reach R^2 > 0.6",
        report.per_region.len()
    );
    let correlation = report.correlation.expect("48 regions define a correlation");
    assert!(
        correlation > 0.0,
        "fit vs log-population correlation {correlation} not positive"
    );
    println!(
        "criterion 8 (full data: MAE below baseline at h=1,7; {good}/{} states R^2>0.6; \
         correlation {correlation:.3}): PASS in {:?}",
        report.per_region.len(),
        start.elapsed()
    );
}

/// Baseline fit sanity shared by the full-data path: the grid search
/// recovers parameters of self-generated data (kept here so the acceptance
/// target exercises the baseline fit even when criterion 8 skips).
#[test]
fn baseline_grid_fit_self_recovery() {
    let p = 1.0e6;
    let (s0, i0) = (p - 2000.0, 2000.0);
    let sim = standard_sir_simulate(s0, i0, 0.0, 0.45, 0.12, p, 80).unwrap();
    let days = 81;
    let mut s = Array2::zeros((1, days));
    let mut i_m = Array2::zeros((1, days));
    let mut r_m = Array2::zeros((1, days));
    let mut nc = Array2::zeros((1, days));
    s[(0, 0)] = s0;
    i_m[(0, 0)] = i0;
    for t in 1..days {
        s[(0, t)] = sim.susceptible[t - 1];
        i_m[(0, t)] = sim.infected[t - 1];
        r_m[(0, t)] = sim.removed[t - 1];
        nc[(0, t)] = sim.new_cases[t - 1];
    }
    let observed =
        EpiSeries::new((0..days as i64).collect(), s, i_m, r_m, nc).unwrap();
    let grid = ParamGrid {
        betas: (1..=20).map(|i| i as f64 * 0.05).collect(),
        gammas: (1..=25).map(|i| i as f64 * 0.02).collect(),
    };
    let fit = fit_standard_sir(&observed, &grid).unwrap();
    assert_eq!((fit.beta, fit.gamma), (0.45, 0.12));
}
