mod common;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use sttc_core::spectral::*;

#[test]
fn forward_matches_naive_dft() {
    let mut rng = rng(11);
    for t in [2, 3, 4, 5, 7, 12, 13, 24] {
        let block = random_block(&mut rng, 3, t, ScaleSpace::Normalized);
        let spec = forward_rfft(&block).unwrap();
        for n in 0..3 {
            let row: Vec<f64> = block.values().row(n).to_vec();
            for (k, want) in naive_rdft(&row).into_iter().enumerate() {
                assert!((spec.bins()[[n, k]] - want).norm() < 1e-10, "T={t} n={n} k={k}");
            }
        }
    }
}

#[test]
fn calibrate_matches_per_bin_complex_multiply() {
    // Each bin is multiplied by (1 + λα) e^{jλφ} of its group, then inverted.
    let mut rng = rng(12);
    for t in [4, 5, 12, 13, 24] {
        for g in [1, 2, 4, 7] {
            let n = 4;
            let block = random_block(&mut rng, n, t, ScaleSpace::Normalized);
            let params = random_params(&mut rng, t, g, n, 0.5);
            let out = calibrate(&block, &params).unwrap();
            let layout = params.layout();
            for node in 0..n {
                let row: Vec<f64> = block.values().row(node).to_vec();
                let bins: Vec<Complex64> = naive_rdft(&row)
                    .into_iter()
                    .enumerate()
                    .map(|(k, b)| {
                        let grp = layout.group_of(k);
                        let a = params.lambda_alpha[[grp, node]];
                        let p = params.lambda_phi[[grp, node]];
                        b * Complex64::from_polar(1.0 + a, p)
                    })
                    .collect();
                let want = naive_irdft(&bins, t);
                for (h, w) in want.iter().enumerate() {
                    assert!(
                        (out.values()[[node, h]] - w).abs() < 1e-9,
                        "T={t} G={g} node={node} h={h}"
                    );
                }
            }
        }
    }
}

#[test]
fn calibrate_commutes_with_node_permutation() {
    let mut rng = rng(13);
    let block = random_block(&mut rng, 5, 12, ScaleSpace::Normalized);
    let params = random_params(&mut rng, 12, 4, 5, 0.3);
    let out = calibrate(&block, &params).unwrap();
    let perm = [3usize, 0, 4, 1, 2];
    let pblock = ForecastBlock::new(
        Array2::from_shape_fn((5, 12), |(i, h)| block.values()[[perm[i], h]]),
        ScaleSpace::Normalized,
    )
    .unwrap();
    let mut pparams = params.clone();
    for g in 0..4 {
        for (i, &src) in perm.iter().enumerate() {
            pparams.lambda_alpha[[g, i]] = params.lambda_alpha[[g, src]];
            pparams.lambda_phi[[g, i]] = params.lambda_phi[[g, src]];
        }
    }
    let pout = calibrate(&pblock, &pparams).unwrap();
    for (i, &src) in perm.iter().enumerate() {
        for h in 0..12 {
            assert!((pout.values()[[i, h]] - out.values()[[src, h]]).abs() < 1e-12);
        }
    }
}

#[test]
fn pure_amplitude_offset_is_linear_scaling() {
    let mut rng = rng(14);
    let block = random_block(&mut rng, 2, 12, ScaleSpace::Normalized);
    let mut params = CalibratorParams::for_horizon(12, 4, 2).unwrap();
    params.lambda_alpha.fill(0.25);
    let out = calibrate(&block, &params).unwrap();
    for (o, i) in out.values().iter().zip(block.values()) {
        assert!((o - 1.25 * i).abs() < 1e-12);
    }
}

#[test]
fn bound_first_order_slack_for_tiny_offsets() {
    let mut rng = rng(15);
    for _ in 0..200 {
        let t = [4usize, 12, 24][rng.random_range(0..3)];
        let n = rng.random_range(1..8);
        let block = random_block(&mut rng, n, t, ScaleSpace::Normalized);
        let params = random_params(&mut rng, t, 4, n, 1e-3);
        let r = perturbation_bound_check(&block, &params).unwrap();
        assert!(r.satisfied);
        assert!(r.first_order_slack() <= 1.001, "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_params_are_identity(seed in any::<u64>(), n in 1usize..16, t in 2usize..30, g in 1usize..6) {
        let mut rng = rng(seed);
        let block = random_block(&mut rng, n, t, ScaleSpace::Original);
        let params = CalibratorParams::for_horizon(t, g, n).unwrap();
        let out = calibrate(&block, &params).unwrap();
        prop_assert_eq!(out.scale(), ScaleSpace::Original);
        for (a, b) in out.values().iter().zip(block.values()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn fft_round_trip(seed in any::<u64>(), n in 1usize..10, t in 2usize..40) {
        let mut rng = rng(seed);
        let block = random_block(&mut rng, n, t, ScaleSpace::Normalized);
        let back = inverse_rfft(&forward_rfft(&block).unwrap(), t).unwrap();
        for (a, b) in back.values().iter().zip(block.values()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn exact_bound_holds(seed in any::<u64>(), n in 1usize..10, t in 2usize..30, g in 1usize..6) {
        let mut rng = rng(seed);
        let block = random_block(&mut rng, n, t, ScaleSpace::Normalized);
        let params = random_params(&mut rng, t, g, n, 0.1);
        let r = perturbation_bound_check(&block, &params).unwrap();
        prop_assert!(r.satisfied, "{:?}", r);
        prop_assert!(r.time_delta_norm <= r.delta_norm * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn layout_tiles_all_bins(m in 1usize..40, g in 1usize..50) {
        let layout = GroupLayout::new(m, g).unwrap();
        prop_assert_eq!(layout.n_groups(), g.min(m));
        let mut next = 0;
        for r in layout.ranges() {
            prop_assert_eq!(r.start, next);
            prop_assert!(r.end > r.start);
            next = r.end;
        }
        prop_assert_eq!(next, m);
        for k in 0..m {
            prop_assert!(layout.ranges()[layout.group_of(k)].contains(&k));
        }
    }
}
