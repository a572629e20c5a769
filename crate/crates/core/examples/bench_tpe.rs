//! TPE against random search on both synthetic functions, paired by seed.
//!
//!     cargo run --release --example bench_tpe -- [trials] [seeds]

use armtune::harness::{self, BenchFunction};

fn main() -> armtune::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: u64 = args.next().map_or(100, |s| s.parse().expect("trials"));
    let seeds: u64 = args.next().map_or(20, |s| s.parse().expect("seeds"));
    for f in [BenchFunction::Sphere, BenchFunction::Bowl] {
        let t = harness::bench_tpe(f, trials, 10, seeds, 0)?;
        println!(
            "{:<6} median best: TPE {:>10.5}  random {:>10.5}  TPE wins {}/{}",
            f.name(),
            t.tpe_median,
            t.random_median,
            t.tpe_wins,
            t.rows.len()
        );
    }
    Ok(())
}
