use mlcd::eval::{knn_eval, linear_probe, pca_rgb, similarity_stats};
use mlcd::labeling::{LabelAssignment, LabelMode};
use mlcd::tensor::FeatureMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian_units(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix {
    let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    FeatureMatrix::from_f64(n, d, &data)
        .unwrap()
        .normalize_rows()
        .unwrap()
}

/// Samples jittered around class axis `label` of a `d`-dimensional space.
fn bundles(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> (FeatureMatrix, Vec<u32>) {
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for a in 0..d {
            let base = if a == c { 1.0 } else { 0.0 };
            data.push(base + 0.1 * rng.sample::<f64, _>(StandardNormal));
        }
        labels.push(c as u32);
    }
    (
        FeatureMatrix::from_f64(n, d, &data)
            .unwrap()
            .normalize_rows()
            .unwrap(),
        labels,
    )
}

#[test]
fn orthogonal_bundles_are_perfectly_separated() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (tr, ytr) = bundles(&mut rng, 200, 6, 4);
    let (te, yte) = bundles(&mut rng, 80, 6, 4);
    assert_eq!(knn_eval(&tr, &ytr, &te, &yte, 1).unwrap(), 1.0);
    assert_eq!(knn_eval(&tr, &ytr, &te, &yte, 7).unwrap(), 1.0);
    assert!(linear_probe(&tr, &ytr, &te, &yte, 300, 2.0).unwrap() >= 0.99);
    assert!(linear_probe(&tr, &ytr, &tr, &ytr, 300, 2.0).unwrap() >= 0.99);
}

#[test]
fn shuffled_labels_are_near_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (x, mut y) = bundles(&mut rng, 2000, 12, 10);
    y.shuffle(&mut rng);
    let (tr, te) = (
        x.select_rows(&(0..1500).collect::<Vec<_>>()),
        x.select_rows(&(1500..2000).collect::<Vec<_>>()),
    );
    let (ytr, yte) = y.split_at(1500);
    let knn = knn_eval(&tr, ytr, &te, yte, 5).unwrap();
    assert!((0.05..=0.2).contains(&knn), "{knn}");
    let probe = linear_probe(&tr, ytr, &te, yte, 100, 1.0).unwrap();
    assert!((0.05..=0.2).contains(&probe), "{probe}");
}

#[test]
fn probe_accuracy_survives_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (tr, ytr) = bundles(&mut rng, 300, 4, 3);
    let (te, yte) = bundles(&mut rng, 100, 4, 3);
    // orthogonal Q from a Householder reflection
    let v: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
    let vv: f64 = v.iter().map(|a| a * a).sum();
    let rotate = |m: &FeatureMatrix| {
        let mut out = Vec::with_capacity(m.rows() * 4);
        for r in m.iter_rows() {
            let dot: f64 = r.iter().zip(&v).map(|(&a, b)| a as f64 * b).sum();
            out.extend(
                r.iter()
                    .zip(&v)
                    .map(|(&a, b)| a as f64 - 2.0 * dot / vv * b),
            );
        }
        FeatureMatrix::from_f64(m.rows(), 4, &out)
            .unwrap()
            .normalize_rows()
            .unwrap()
    };
    let a = linear_probe(&tr, &ytr, &te, &yte, 100, 1.0).unwrap();
    let b = linear_probe(&rotate(&tr), &ytr, &rotate(&te), &yte, 100, 1.0).unwrap();
    assert!((a - b).abs() <= 0.02, "{a} vs {b}");
    assert_eq!(
        knn_eval(&tr, &ytr, &te, &yte, 5).unwrap(),
        knn_eval(&rotate(&tr), &ytr, &rotate(&te), &yte, 5).unwrap()
    );
}

#[test]
fn random_directions_have_near_zero_similarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = gaussian_units(&mut rng, 500, 256);
    let c = gaussian_units(&mut rng, 20, 256);
    let lists = (0..500).map(|i| vec![(i % 20) as u32]).collect();
    let a = LabelAssignment::new(lists, 20, LabelMode::External).unwrap();
    let s = similarity_stats(&e, &c, &a).unwrap();
    assert!(s.mean_si.abs() < 0.1 && s.mean_sj.abs() < 0.1, "{s:?}");
    assert_eq!(s.positive_hist.iter().sum::<u64>(), 500);
    assert_eq!(s.negative_hist.iter().sum::<u64>(), 500 * 19);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = gaussian_units(&mut rng, 10, 3);
    let b = gaussian_units(&mut rng, 10, 4);
    let y = vec![0u32; 10];
    assert!(knn_eval(&a, &y, &b, &y, 1).is_err());
}

#[test]
fn pca_recovers_axis_aligned_components() {
    // points on the three axes, symmetric about 0: the covariance is exactly
    // diag(9, 4, 1) * const
    let ts = [-1.0, -0.6, -0.2, 0.3, 0.7, 0.9, -0.1];
    let mut rows = Vec::new();
    for &t in ts
        .iter()
        .chain(ts.iter().map(|t| -t).collect::<Vec<_>>().iter())
    {
        rows.extend([3.0 * t, 0.0, 0.0, 0.0, 2.0 * t, 0.0, 0.0, 0.0, t]);
    }
    let n = rows.len() / 3;
    let f = FeatureMatrix::from_f64(n, 3, &rows).unwrap();
    let out = pca_rgb(&f).unwrap();
    assert_eq!(out.rank, 3);
    for (ch, comp) in out.components.iter().enumerate() {
        assert!((comp[ch] - 1.0).abs() < 1e-9, "component {ch}: {comp:?}");
    }
    // each channel is a monotone map of its coordinate
    for ch in 0..3 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| f.row(a)[ch].total_cmp(&f.row(b)[ch]));
        assert!(idx
            .windows(2)
            .all(|w| out.rgb[w[0]][ch] <= out.rgb[w[1]][ch]));
        assert_eq!(out.rgb[idx[0]][ch], 0);
        assert_eq!(out.rgb[idx[n - 1]][ch], 255);
    }
    for i in 0..n {
        assert_eq!(out.mask[i], f.row(i)[0] > 0.0);
    }
}

#[test]
fn pca_on_a_plane_pads_the_missing_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<f64> = (0..50)
        .flat_map(|_| {
            let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            [a, b, a + b, 0.0]
        })
        .collect();
    let out = pca_rgb(&FeatureMatrix::from_f64(50, 4, &rows).unwrap()).unwrap();
    assert_eq!(out.rank, 2);
    assert!(out.is_rank_deficient());
    assert!(out.rgb.iter().all(|p| p[2] == 128));
}
