//! Regenerates `data/wiggly.csv`: a sinusoid on a trend that levels off over
//! the oldest third of the range, 120 points, fixed seed.
//!
//! `cargo run -p frcb-cli --example gen_wiggly [seed] > data/wiggly.csv`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DEFAULT_SEED: u64 = 5_730;

fn trend(x: f64) -> f64 {
    if x < 200.0 {
        0.0
    } else {
        0.8 * (x - 200.0)
    }
}

fn main() {
    let seed = std::env::args().nth(1).map_or(DEFAULT_SEED, |s| s.parse().expect("seed must be an integer"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 12.0).unwrap();
    println!("calendar_age,radiocarbon_age");
    let mut xs: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..600.0)).collect();
    xs.sort_by(f64::total_cmp);
    for x in xs {
        let wiggle = if x < 200.0 { 0.0 } else { 40.0 * (std::f64::consts::TAU * x / 200.0).sin() };
        let y = trend(x) + wiggle + noise.sample(&mut rng);
        println!("{:.1},{:.1}", 7000.0 + x, 6100.0 + y);
    }
}
