use gcl_core::data::{decode_feature_file, encode_feature_file, shuffle_batches};
use gcl_core::gcl::{
    discriminator_probs, expand_to_frames, generator_pseudo_labels, labels_from_probs, make_nl_targets,
    reconstruction_errors_matrix,
};
use gcl_core::{compute_auc, Activation, FeatureRecord, Matrix, Network, NlMode};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn records(n: usize) -> Vec<FeatureRecord> {
    (0..n)
        .map(|i| FeatureRecord {
            video_id: format!("v{}", i % 3),
            segment_index: i,
            vector: vec![i as f32],
        })
        .collect()
}

/// Scores on a coarse grid so ties are common, paired with labels holding
/// at least one of each class.
fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec((-20i32..20).prop_map(f64::from), n),
            prop::collection::vec(any::<bool>(), n)
                .prop_filter("both classes", |l| l.iter().any(|&x| x) && l.iter().any(|&x| !x)),
        )
    })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn batches_partition_the_records(n in 1usize..300, bs in 2usize..64, seed: u64) {
        let recs = records(n);
        let batches = shuffle_batches(&recs, bs, seed).unwrap();
        prop_assert_eq!(batches.len(), n.div_ceil(bs));
        prop_assert!(batches.iter().all(|b| b.len() <= bs));
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.iter().copied()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        for b in &batches {
            for (r, &i) in b.indices.iter().enumerate() {
                prop_assert_eq!(b.matrix.get(r, 0), i as f64);
            }
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms((scores, labels) in scored(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let base = compute_auc(&scores, &labels).unwrap().auc;
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
        prop_assert_eq!(compute_auc(&affine, &labels).unwrap().auc, base);
        prop_assert_eq!(compute_auc(&cubed, &labels).unwrap().auc, base);
    }

    #[test]
    fn flipped_labels_complement_auc((scores, labels) in scored()) {
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let a = compute_auc(&scores, &labels).unwrap().auc;
        let b = compute_auc(&scores, &flipped).unwrap().auc;
        prop_assert!((a + b - 1.0).abs() <= 1e-12, "{} + {}", a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn labels_match_their_threshold(input in matrix(17, 5), seed: u64, k in 0.0f64..2.0) {
        let gen = Network::init(&[5, 3, 5], &[Activation::Relu, Activation::Identity], seed).unwrap();
        let disc = Network::init(&[5, 4, 1], &[Activation::Relu, Activation::Sigmoid], seed ^ 1).unwrap();

        let g = reconstruction_errors_matrix(&gen, &input, k).unwrap();
        let labels = generator_pseudo_labels(&g);
        prop_assert_eq!(g.stats.threshold, g.stats.mean + k * g.stats.std);
        for (e, l) in g.per_row_error.iter().zip(&labels.labels) {
            prop_assert_eq!(*l, *e >= g.stats.threshold);
        }
        let max = g.per_row_error.iter().copied().fold(f64::MIN, f64::max);
        prop_assert!(labels.labels.iter().any(|&l| l) || max < g.stats.threshold);

        let d = discriminator_probs(&disc, &input, k).unwrap();
        let labels = labels_from_probs(&d);
        for (p, l) in d.per_row_prob.iter().zip(&labels.labels) {
            prop_assert!((0.0..=1.0).contains(p));
            prop_assert_eq!(*l, *p >= d.stats.threshold);
        }
    }

    #[test]
    fn feature_files_round_trip(d in 1usize..20, rows in 0usize..30, seed: u64) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Vec<f32>> = (0..rows)
            .map(|_| (0..d).map(|_| f32::from_bits(rng.random::<u32>() & 0xff7f_ffff)).collect())
            .collect();
        let bytes = encode_feature_file(d, &data).unwrap();
        prop_assert_eq!(bytes.len(), 16 + rows * d * 4);
        let back = decode_feature_file(Path::new("x.gclf"), &bytes).unwrap();
        prop_assert_eq!(back.d, d);
        let bits = |rows: &[Vec<f32>]| rows.iter().map(|r| r.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.rows), bits(&data));
    }

    #[test]
    fn nl_targets_touch_only_anomalous_rows(
        input in matrix(12, 4),
        labels in prop::collection::vec(any::<bool>(), 12),
        seed: u64,
    ) {
        for mode in [NlMode::Ones, NlMode::RandomNormal, NlMode::Gaussian, NlMode::None] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = make_nl_targets(&input, &labels, mode, 0.5, &mut rng).unwrap();
            let normal_rows: Vec<&[f64]> = (0..12).filter(|&i| !labels[i]).map(|i| input.row(i)).collect();
            for (i, &anomalous) in labels.iter().enumerate() {
                let row = out.targets.row(i);
                if !anomalous || mode == NlMode::None {
                    prop_assert_eq!(row, input.row(i));
                    continue;
                }
                match mode {
                    NlMode::Ones => prop_assert!(row.iter().all(|&v| v == 1.0)),
                    NlMode::RandomNormal if normal_rows.is_empty() => prop_assert!(row.iter().all(|&v| v == 1.0)),
                    NlMode::RandomNormal => prop_assert!(normal_rows.contains(&row)),
                    _ => prop_assert!(row != input.row(i)),
                }
            }
            match mode {
                NlMode::None => {
                    let want: Vec<bool> = labels.iter().map(|l| !l).collect();
                    prop_assert_eq!(out.include, Some(want));
                }
                _ => prop_assert!(out.include.is_none()),
            }
        }
    }

    #[test]
    fn frame_expansion(scores in prop::collection::vec(-1.0f64..1.0, 1..20), p in 1usize..20, frames in 0usize..400) {
        let out = expand_to_frames(&scores, p, frames);
        prop_assert_eq!(out.len(), frames);
        for (f, v) in out.iter().enumerate() {
            prop_assert_eq!(*v, scores[(f / p).min(scores.len() - 1)]);
        }
    }
}
