//! Convergence episodes and the speedup between two synthetic learning curves.
//!
//!     cargo run --release --example convergence

use armtune::harness;

fn curve(rate: f64, noise_seed: u64) -> Vec<f64> {
    let mut r = armtune::rng::seeded(noise_seed);
    let noise = armtune::neural::standard_normal(&mut r, 2000);
    (0..2000)
        .map(|e| -10.0 * (-rate * e as f64).exp() - 1.0 + 0.3 * noise[e])
        .collect()
}

fn main() -> armtune::Result<()> {
    let fast = curve(1.0 / 150.0, 1);
    let slow = curve(1.0 / 600.0, 2);
    let window = harness::DEFAULT_WINDOW;
    let a = harness::convergence_episodes(&fast, 0.95, window)?.expect("non-empty");
    let b = harness::convergence_episodes(&slow, 0.95, window)?.expect("non-empty");
    println!("fast curve converges at episode {a}, slow curve at {b}");
    println!("speedup {:.1}%", 100.0 * harness::speedup(a, b));
    Ok(())
}
