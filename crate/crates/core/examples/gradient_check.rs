//! Runs the built-in numerical checks: the MLCD factorization identity, MLC
//! shift invariance, and central finite differences of every analytic
//! gradient (embeddings, centers, raw cosines) for CD, MLC and MLCD.
//!
//! Usage: cargo run --release --example gradient_check -- [SEED]

use mlcd::loss::{LossConfig, LossVariant};
use mlcd::selftest::{gradient_errors, random_grad_case, run_all, FD_SCALE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mlcd::error::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map_or(0, |s| s.parse().expect("SEED must be an integer"));
    for r in run_all(seed)? {
        println!(
            "{:<18} cases={:<6} max_error={:.3e} (tolerance {:.0e}) {}",
            r.name,
            r.cases,
            r.max_error,
            r.tolerance,
            if r.passed() { "ok" } else { "FAILED" }
        );
    }

    // Per-variant breakdown on a fresh batch of instances, at the suite's
    // scale and at the training default of 32.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let cases: Vec<_> = (0..20).map(|_| random_grad_case(&mut rng)).collect();
    for variant in [LossVariant::Cd, LossVariant::Mlc, LossVariant::Mlcd] {
        for (margin, scale) in [(0.0, FD_SCALE), (0.3, FD_SCALE), (0.3, 32.0)] {
            let cfg = LossConfig {
                variant,
                margin,
                scale,
                ratio: 1.0,
            };
            let mut worst = [0.0f64; 3];
            for c in &cases {
                for (w, e) in worst.iter_mut().zip(gradient_errors(c, &cfg)?) {
                    *w = w.max(e);
                }
            }
            println!(
                "{variant:<4} m={margin} scale={scale}: grad_E {:.2e}  grad_W {:.2e}  grad_scores {:.2e}",
                worst[0], worst[1], worst[2]
            );
        }
    }
    Ok(())
}
