//! Why separating the positive and negative terms matters: two score pairs
//! with the same gap `s_i - s_j = 0.3` are indistinguishable to MLC but not
//! to MLCD.
//!
//! Usage: cargo run --example loss_ambiguity

use mlcd::loss::{loss_cd, loss_mlc, loss_mlcd};

fn main() -> mlcd::error::Result<()> {
    // [positive, negative]
    let mask = [true, false];
    println!(
        "{:>14} {:>10} {:>10} {:>10}",
        "(s_i, s_j)", "CD", "MLC", "MLCD"
    );
    for (si, sj) in [(0.4, 0.1), (0.8, 0.5), (0.9, -0.1), (0.3, 0.0)] {
        let s = [si, sj];
        println!(
            "{:>14} {:>10.6} {:>10.6} {:>10.6}",
            format!("({si}, {sj})"),
            loss_cd(&s, 0)?.value,
            loss_mlc(&s, &mask)?.value,
            loss_mlcd(&s, &mask)?.value,
        );
    }

    // MLC only sees differences; MLCD also sees where the scores sit.
    let s = [0.4, 0.1];
    for c in [-1.0, 0.0, 1.0, 2.0] {
        let shifted = [s[0] + c, s[1] + c];
        println!(
            "shift {c:+.1}: MLC {:.6}  MLCD {:.6}",
            loss_mlc(&shifted, &mask)?.value,
            loss_mlcd(&shifted, &mask)?.value
        );
    }

    let g = loss_mlcd(&[0.8, 0.5], &mask)?.grad_scores;
    println!(
        "MLCD gradient at (0.8, 0.5): d/ds_i = {:.6}, d/ds_j = {:.6}",
        g[0], g[1]
    );
    Ok(())
}
