//! Colors a grid of synthetic patch features by their top three principal
//! components and writes the result, plus the first-component foreground
//! mask, as binary PPM/PGM images.
//!
//! Usage: cargo run --example pca_rgb -- [OUT_PREFIX]

use std::io::Write;

use mlcd::eval::pca_rgb;
use mlcd::synthetic::{multi_concept, MultiConceptConfig};
use mlcd::tensor::FeatureMatrix;

const SIDE: usize = 32;

fn main() -> mlcd::error::Result<()> {
    let prefix = std::env::args().nth(1).unwrap_or_else(|| "patches".into());
    // A 32x32 "image" of patches: background concept 0 with a disc of
    // concept 1 and a bar of concept 2, plus the benchmark's noise.
    let pool = multi_concept(&MultiConceptConfig {
        concepts: 3,
        samples: 4 * SIDE * SIDE,
        mix_probability: 0.0,
        ..Default::default()
    })?;
    let mut by_concept: Vec<Vec<usize>> = vec![Vec::new(); 3];
    for (i, &l) in pool.labels.iter().enumerate() {
        by_concept[l as usize].push(i);
    }
    let mut rows = Vec::with_capacity(SIDE * SIDE);
    let mut taken = [0usize; 3];
    for y in 0..SIDE {
        for x in 0..SIDE {
            let (dx, dy) = (x as f64 - 10.0, y as f64 - 12.0);
            let c = if dx * dx + dy * dy < 36.0 {
                1
            } else if (22..27).contains(&x) && (4..28).contains(&y) {
                2
            } else {
                0
            };
            rows.push(pool.features.row(by_concept[c][taken[c]]).to_vec());
            taken[c] += 1;
        }
    }
    let patches = FeatureMatrix::from_rows(&rows)?;
    let out = pca_rgb(&patches)?;
    println!(
        "rank={} foreground patches={}",
        out.rank,
        out.mask.iter().filter(|&&m| m).count()
    );

    let mut ppm = format!("P6\n{SIDE} {SIDE}\n255\n").into_bytes();
    for px in &out.rgb {
        ppm.extend_from_slice(px);
    }
    std::fs::File::create(format!("{prefix}.ppm"))?.write_all(&ppm)?;
    let mut pgm = format!("P5\n{SIDE} {SIDE}\n255\n").into_bytes();
    pgm.extend(out.mask.iter().map(|&m| if m { 255u8 } else { 0 }));
    std::fs::File::create(format!("{prefix}-mask.pgm"))?.write_all(&pgm)?;
    println!("wrote {prefix}.ppm and {prefix}-mask.pgm");
    Ok(())
}
