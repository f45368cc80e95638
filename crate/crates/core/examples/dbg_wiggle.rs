use epiforecast::domain::RegionSet;
use epiforecast::estimator::{ModelState, TrainConfig, forward};
use epiforecast::mobility::MobilityConfig;
use epiforecast::ndarray::Array2;
use epiforecast::ingest;

fn main() {
    // mimic the CLI fixture: 1 region, weekly oscillating cases
    let regions = RegionSet::new(vec!["Alpha".into()], vec![60000.0], Array2::zeros((1,1))).unwrap();
    let mut cumulative = Array2::zeros((1, 40));
    let mut total = 0.0;
    for t in 0..40 {
        let wave = 1.0 + 0.5 * ((t % 7) as f64 / 6.0);
        let growth = 1.0 + (t as f64 / 40.0) * 2.0;
        total += (12.0 * wave * growth as f64).round();
        cumulative[(0, t)] = total;
    }
    let daily = ingest::cumulative_to_daily(&cumulative);
    let series = ingest::synthesize_sir_series(&daily, &regions, 0.1).unwrap();

    let mobility = MobilityConfig::new(1.0e-5, 1.6, 0.0, regions.total_population()).unwrap();
    let config = TrainConfig { window: 8, horizon: 2, hidden: 4, st_layers: 2, kernel_width: 2,
        epochs: 4, learning_rate: 0.01, seed: 42, ..TrainConfig::default() };
    let mut model = ModelState::init(&regions, &mobility, &config).unwrap();
    let mob = model.adaptive_log_mobility.clone();
    let count = model.param_count();
    model.set_param_vector(&vec![0.3; count]).unwrap();
    model.adaptive_log_mobility = mob;
    let logit = |p: f64| (p / (1.0 - p)).ln();
    model.head2_b[0] = logit(0.4 / 2.0);
    model.head2_b[1] = logit(0.2);

    for w in [0usize, 1, 2, 3] {
        let window = series.slice_days(w, 8).unwrap();
        let track = forward(&model, &window, &regions).unwrap();
        println!("w={w}: beta={:?} gamma={:?}", track.beta()[(0,0)], track.gamma()[(0,0)]);
    }
}
