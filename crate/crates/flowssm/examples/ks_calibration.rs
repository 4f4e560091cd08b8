//! Monte-Carlo calibration of the MV-KS test: draw `N(0, I)` sample sets and
//! measure how often the conservative critical value rejects.
//!
//! Usage: `cargo run --release --example ks_calibration [trials] [base_seed]`

use flowssm::gof::{critical_value, mv_ks_statistic};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let mut args = std::env::args().skip(1);
    let trials: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let base_seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let (n, dims, alpha) = (512usize, 4usize, 0.05);
    let tau = critical_value(n, dims, alpha).unwrap();
    println!("n={n} d={dims} alpha={alpha} tau={tau:.5}");

    let mut rejections = 0u64;
    let mut max_s = 0.0_f64;
    for i in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed + i);
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let s = mv_ks_statistic(&samples).unwrap();
        max_s = max_s.max(s);
        if s >= tau {
            rejections += 1;
            println!("  seed {} rejects: s = {s:.5}", base_seed + i);
        }
    }
    println!(
        "rejections: {rejections}/{trials} (rate {:.4}), max statistic {max_s:.5}",
        rejections as f64 / trials as f64
    );
}
