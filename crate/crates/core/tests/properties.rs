use mlcd::clustering::{kmeans_assign, CentroidSet};
use mlcd::eval::{knn_eval, pca_rgb, similarity_stats};
use mlcd::fmat::{read_fmat, write_fmat};
use mlcd::labeling::{assign_threshold, assign_top_l, read_lbl, write_lbl};
use mlcd::loss::{loss_cd, loss_mlc, loss_mlcd};
use mlcd::sampler::ClassSampler;
use mlcd::tensor::FeatureMatrix;
use proptest::prelude::*;

fn unit_matrix(rows: usize, dim: usize) -> impl Strategy<Value = FeatureMatrix> {
    prop::collection::vec(
        prop::collection::vec(-1.0f32..1.0, dim)
            .prop_filter("non-zero", |r| r.iter().map(|v| v * v).sum::<f32>() > 1e-3),
        rows,
    )
    .prop_map(|r| {
        FeatureMatrix::from_rows(&r)
            .unwrap()
            .normalize_rows()
            .unwrap()
    })
}

fn features_and_centroids() -> impl Strategy<Value = (FeatureMatrix, CentroidSet)> {
    (1usize..30, 1usize..12, 2usize..8).prop_flat_map(|(n, k, d)| {
        (unit_matrix(n, d), unit_matrix(k, d))
            .prop_map(|(x, c)| (x, CentroidSet::from_matrix(c).unwrap()))
    })
}

fn scores_and_mask() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..8, 1usize..32).prop_flat_map(|(p, n)| {
        (
            prop::collection::vec(-5.0f64..5.0, p + n),
            Just((0..p + n).map(|i| i < p).collect::<Vec<_>>()),
        )
    })
}

proptest! {
    #[test]
    fn top_l_lists_are_nested_prefixes((x, c) in features_and_centroids(), a in 1usize..12, b in 1usize..12) {
        let k = c.k();
        let (lo, hi) = (a.min(b).min(k), a.max(b).min(k));
        let short = assign_top_l(&x, &c, lo).unwrap();
        let long = assign_top_l(&x, &c, hi).unwrap();
        for i in 0..x.rows() {
            prop_assert!(long.positives(i).starts_with(short.positives(i)));
        }
    }

    #[test]
    fn top_1_is_the_hard_assignment((x, c) in features_and_centroids()) {
        let top = assign_top_l(&x, &c, 1).unwrap();
        prop_assert_eq!(top.top1(), kmeans_assign(&x, &c).unwrap().labels);
    }

    #[test]
    fn lower_threshold_gives_superset((x, c) in features_and_centroids(), t1 in -1.0f64..1.0, t2 in -1.0f64..1.0) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let wide = assign_threshold(&x, &c, lo).unwrap();
        let narrow = assign_threshold(&x, &c, hi).unwrap();
        for i in 0..x.rows() {
            for p in narrow.positives(i) {
                prop_assert!(wide.positives(i).contains(p));
            }
        }
    }

    #[test]
    fn sampler_cardinality_and_disjointness(
        k in 2usize..200,
        seed in any::<u64>(),
        r in 0.01f64..=1.0,
        raw in prop::collection::vec(any::<u32>(), 1..10),
    ) {
        let positives: Vec<u32> = raw.iter().map(|v| v % k as u32).collect();
        let mut distinct = positives.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let avail = k - distinct.len();
        let s = ClassSampler::new(seed).sample_classes(k, &positives, r).unwrap();
        let expected = if avail == 0 { 0 } else { ((r * avail as f64).floor() as usize).max(1) };
        prop_assert_eq!(s.negatives.len(), expected);
        prop_assert!(s.negatives.iter().all(|c| distinct.binary_search(c).is_err()));
        prop_assert!(s.negatives.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(s.len(), distinct.len() + expected);
    }

    #[test]
    fn mlc_ignores_common_shift((s, mask) in scores_and_mask(), c in -10.0f64..10.0) {
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let a = loss_mlc(&s, &mask).unwrap().value;
        let b = loss_mlc(&shifted, &mask).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn mlcd_bounds_mlc((s, mask) in scores_and_mask()) {
        // the MLCD argument adds non-negative terms to the MLC argument
        let mlc = loss_mlc(&s, &mask).unwrap().value;
        let mlcd = loss_mlcd(&s, &mask).unwrap().value;
        prop_assert!(mlcd >= mlc - 1e-12);
    }

    #[test]
    fn single_positive_mlc_is_cd(s in prop::collection::vec(-5.0f64..5.0, 2..40), y in any::<prop::sample::Index>()) {
        let label = y.index(s.len());
        let mask: Vec<bool> = (0..s.len()).map(|j| j == label).collect();
        let a = loss_mlc(&s, &mask).unwrap().value;
        let b = loss_cd(&s, label).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn similarity_stats_match_double_loop((x, c) in features_and_centroids(), l in 1usize..4) {
        let l = l.min(c.k());
        let a = assign_top_l(&x, &c, l).unwrap();
        let s = similarity_stats(&x, &c.centroids, &a).unwrap();
        let (mut ps, mut pn, mut ns, mut nn) = (0.0, 0, 0.0, 0);
        for i in 0..x.rows() {
            for j in 0..c.k() {
                let cos: f64 = x.row(i).iter().zip(c.centroids.row(j)).map(|(&p, &q)| p as f64 * q as f64).sum();
                if a.positives(i).contains(&(j as u32)) { ps += cos; pn += 1; } else { ns += cos; nn += 1; }
            }
        }
        prop_assert!((s.mean_si - ps / pn as f64).abs() < 1e-6);
        if nn > 0 {
            prop_assert!((s.mean_sj - ns / nn as f64).abs() < 1e-6);
        }
        prop_assert_eq!(s.positive_hist.iter().sum::<u64>() as usize, pn);
        prop_assert_eq!(s.negative_hist.iter().sum::<u64>() as usize, nn);
    }

    #[test]
    fn knn_is_rotation_invariant(
        train in unit_matrix(20, 3),
        test in unit_matrix(8, 3),
        angle in 0.0f64..std::f64::consts::TAU,
        labels in prop::collection::vec(0u32..3, 28),
    ) {
        // rotation in the (0, 1) plane
        let (c, s) = (angle.cos(), angle.sin());
        let rotate = |m: &FeatureMatrix| {
            let rows: Vec<Vec<f64>> = m.iter_rows().map(|r| {
                let (x, y, z) = (r[0] as f64, r[1] as f64, r[2] as f64);
                vec![c * x - s * y, s * x + c * y, z]
            }).collect();
            FeatureMatrix::from_f64(m.rows(), 3, &rows.concat()).unwrap().normalize_rows().unwrap()
        };
        let (ytr, yte) = labels.split_at(20);
        let base = knn_eval(&train, ytr, &test, yte, 3).unwrap();
        let rotated = knn_eval(&rotate(&train), ytr, &rotate(&test), yte, 3).unwrap();
        prop_assert_eq!(base, rotated);
    }

    #[test]
    fn pca_rgb_is_duplication_invariant_and_permutation_equivariant(
        x in unit_matrix(12, 5),
        perm_seed in any::<u64>(),
    ) {
        let base = pca_rgb(&x).unwrap();
        let doubled: Vec<usize> = (0..12).chain(0..12).collect();
        let dup = pca_rgb(&x.select_rows(&doubled)).unwrap();
        let mut perm: Vec<usize> = (0..12).collect();
        let mut state = perm_seed;
        for i in (1..12).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let permuted = pca_rgb(&x.select_rows(&perm)).unwrap();
        for i in 0..12 {
            for ch in 0..3 {
                prop_assert!((dup.rgb[i][ch] as i32 - base.rgb[i][ch] as i32).abs() <= 1);
                prop_assert!((dup.rgb[i + 12][ch] as i32 - base.rgb[i][ch] as i32).abs() <= 1);
                prop_assert!((permuted.rgb[i][ch] as i32 - base.rgb[perm[i]][ch] as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn fmat_and_lbl_round_trip((x, c) in features_and_centroids(), l in 1usize..4) {
        let mut buf = Vec::new();
        write_fmat(&mut buf, &x).unwrap();
        prop_assert_eq!(read_fmat(buf.as_slice()).unwrap(), x.clone());
        let a = assign_top_l(&x, &c, l.min(c.k())).unwrap();
        let mut buf = Vec::new();
        write_lbl(&mut buf, &a).unwrap();
        let back = read_lbl(buf.as_slice()).unwrap();
        prop_assert_eq!(back.lists(), a.lists());
    }
}
