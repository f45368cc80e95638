use epiforecast::ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..500 {
        let n = rng.gen_range(1..=48);
        let matrix = Array2::from_shape_fn((n, n), |_| rng.gen::<f64>());
        if case != 418 { continue; }
        println!("case {case}, n = {n}");
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| matrix[(i, j)])
            .complex_eigenvalues();
        let mut mods: Vec<f64> = dense.iter().map(|c| c.norm()).collect();
        mods.sort_by(|a, b| b.total_cmp(a));
        println!("top eigenvalue moduli: {:?}", &mods[..4.min(mods.len())]);

        // trace the shifted iteration
        let mut shifted = matrix.clone();
        for i in 0..n { shifted[(i,i)] += 1.0; }
        let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
        let mut prev: Option<f64> = None;
        for it in 0..60 {
            let w = shifted.dot(&v);
            let rayleigh = v.dot(&w) / v.dot(&v);
            let diff = prev.map(|p| (rayleigh - p).abs()).unwrap_or(f64::NAN);
            println!("iter {it}: rayleigh-1 = {:.15}, diff = {:e}", rayleigh - 1.0, diff);
            if let Some(p) = prev {
                if (rayleigh - p).abs() <= 1e-10 * rayleigh.abs().max(1.0) {
                    println!("STOP at iter {it}: value {} true {}", rayleigh - 1.0, mods[0]);
                    break;
                }
            }
            prev = Some(rayleigh);
            let norm = w.dot(&w).sqrt();
            v = w / norm;
        }
    }
}
