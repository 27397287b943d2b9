//! Property tests over the engine's declared invariants.

use proptest::prelude::*;

use segdx::metrics::{cohens_kappa, confusion, dice};
use segdx::net::FeatureMode;
use segdx::ops;
use segdx::tensor::{read_tnsr, write_tnsr_f32, LabelMap, TnsrData};
use segdx::train::{class_weights, WeightExponent};
use segdx::{Tensor, Tensor64};

fn small_tensor(c: std::ops::Range<usize>, hw: std::ops::Range<usize>) -> impl Strategy<Value = Tensor64> {
    (c, hw.clone(), hw).prop_flat_map(|(c, h, w)| {
        proptest::collection::vec(-3.0f64..3.0, c * h * w)
            .prop_map(move |data| Tensor::new(vec![c, h, w], data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_output_shape_is_a_pure_shape_function(
        input in small_tensor(1..4, 2..7),
        cout in 1usize..4,
        k in prop_oneof![Just(1usize), Just(3usize)],
    ) {
        let cin = input.shape()[0];
        let kernels = Tensor64::filled(&[cout, cin, k, k], 0.25);
        let bias = Tensor64::zeros(&[cout]);
        let out = ops::conv2d_same(&input, &kernels, &bias).unwrap();
        prop_assert_eq!(out.shape(), &[cout, input.shape()[1], input.shape()[2]]);
        prop_assert!(out.is_all_finite());
    }

    #[test]
    fn pool_and_upsample_shapes(input in small_tensor(1..4, 1..6)) {
        let up = ops::upsample2(&input).unwrap();
        prop_assert_eq!(up.shape(), &[input.shape()[0], 2 * input.shape()[1], 2 * input.shape()[2]]);
        let (down, winners) = ops::maxpool2(&up).unwrap();
        prop_assert_eq!(down.shape(), input.shape());
        prop_assert_eq!(winners.len(), input.numel());
        // Upsample then pool is the identity.
        prop_assert_eq!(down.data(), input.data());
    }

    #[test]
    fn concat_channel_arithmetic(
        a in small_tensor(1..4, 2..5),
        cb in 1usize..4,
    ) {
        let b = Tensor64::filled(&[cb, a.shape()[1], a.shape()[2]], 1.5);
        let out = ops::concat_channels(&a, &b).unwrap();
        prop_assert_eq!(out.shape()[0], a.shape()[0] + cb);
        prop_assert_eq!(out.channel(0), a.channel(0));
    }

    #[test]
    fn softmax_is_a_per_pixel_distribution(logits in small_tensor(2..5, 1..5)) {
        let p = ops::softmax_channels(&logits).unwrap();
        let (c, hw) = (p.shape()[0], p.shape()[1] * p.shape()[2]);
        for px in 0..hw {
            let sum: f64 = (0..c).map(|ci| p.data()[ci * hw + px]).sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            for ci in 0..c {
                let v = p.data()[ci * hw + px];
                prop_assert!(v > 0.0 && v < 1.0);
            }
        }
        // Per-pixel constant shifts leave the output unchanged.
        let mut shifted = logits.clone();
        for ci in 0..c {
            shifted.data_mut()[ci * hw] += 2.5;
        }
        let q = ops::softmax_channels(&shifted).unwrap();
        for ci in 0..c {
            prop_assert!((p.data()[ci * hw] - q.data()[ci * hw]).abs() < 1e-9);
        }
    }

    #[test]
    fn dice_symmetry_and_identity(
        data_a in proptest::collection::vec(0u8..3, 16),
        data_b in proptest::collection::vec(0u8..3, 16),
        label in 0u8..3,
    ) {
        let a = LabelMap::new(4, 4, data_a).unwrap();
        let b = LabelMap::new(4, 4, data_b).unwrap();
        prop_assert_eq!(dice(&a, &b, label).unwrap(), dice(&b, &a, label).unwrap());
        prop_assert_eq!(dice(&a, &a, label).unwrap(), 1.0);
        // Dice 1 means the masks are identical.
        if dice(&a, &b, label).unwrap() == 1.0 {
            let ma: Vec<bool> = a.data().iter().map(|&v| v == label).collect();
            let mb: Vec<bool> = b.data().iter().map(|&v| v == label).collect();
            prop_assert_eq!(ma, mb);
        }
    }

    #[test]
    fn kappa_is_bounded_by_observed_agreement(
        pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..40),
    ) {
        let preds: Vec<u8> = pairs.iter().map(|(p, _)| *p).collect();
        let truths: Vec<u8> = pairs.iter().map(|(_, t)| *t).collect();
        let cm = confusion(&preds, &truths).unwrap();
        let kappa = cohens_kappa(&cm).unwrap();
        let p_o = (cm.tp + cm.tn) as f64 / cm.total() as f64;
        prop_assert!((-1.0..=1.0).contains(&kappa));
        prop_assert!(kappa <= p_o + 1e-12);
        // Kappa 1 requires zero errors.
        if kappa == 1.0 {
            prop_assert_eq!(cm.fp + cm.fneg, 0);
        }
    }

    #[test]
    fn rate_metrics_match_recounts(
        pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..40),
    ) {
        let preds: Vec<u8> = pairs.iter().map(|(p, _)| *p).collect();
        let truths: Vec<u8> = pairs.iter().map(|(_, t)| *t).collect();
        let cm = confusion(&preds, &truths).unwrap();
        let pos = truths.iter().filter(|&&t| t == 1).count();
        let hits = pairs.iter().filter(|(p, t)| *t == 1 && *p == 1).count();
        if pos > 0 {
            prop_assert_eq!(cm.tpr().unwrap(), hits as f64 / pos as f64);
        } else {
            prop_assert!(cm.tpr().is_none());
        }
    }

    #[test]
    fn class_weight_bounds_and_direction(
        f_pos in 1u64..400,
        extra in 1u64..400,
    ) {
        let f_neg = f_pos + extra;
        for exp in [WeightExponent::One, WeightExponent::Quarter] {
            let w: Vec<f64> = class_weights(&[f_neg, f_pos], exp).unwrap();
            prop_assert!(w.iter().all(|v| (0.0..1.0).contains(v)));
            prop_assert!(w[1] > w[0], "rarer label gets the larger weight");
        }
    }

    #[test]
    fn feature_mode_channel_table(n in 1usize..100, labels in 2usize..16) {
        let expect = [1, labels, labels + 1, 3 * n, 3 * n + 1];
        for (mode, want) in FeatureMode::ALL.iter().zip(expect) {
            prop_assert_eq!(mode.input_channels(n, labels), want);
        }
    }

    #[test]
    fn segnet_param_count_depends_only_on_the_spec(
        n in 1usize..12,
        labels in 2usize..8,
        seed_a in 0u64..500,
        seed_b in 500u64..1000,
    ) {
        let (spec_a, _) = segdx::net::build_segnet(n, labels, 2, 8, seed_a).unwrap();
        let (spec_b, _) = segdx::net::build_segnet(n, labels, 2, 8, seed_b).unwrap();
        prop_assert_eq!(spec_a.param_count(), spec_b.param_count());
    }

    #[test]
    fn tnsr_f32_round_trip(
        shape in prop_oneof![
            (1usize..5).prop_map(|d| vec![d]),
            (1usize..5, 1usize..5).prop_map(|(a, b)| vec![a, b]),
            (1usize..4, 1usize..4, 1usize..4).prop_map(|(a, b, c)| vec![a, b, c]),
        ],
    ) {
        let n: usize = shape.iter().product();
        let t = Tensor::<f32>::from_fn(&shape, |i| (i as f32 * 0.77).sin());
        prop_assert_eq!(t.numel(), n);
        let mut buf = Vec::new();
        write_tnsr_f32(&mut buf, &t).unwrap();
        match read_tnsr(&mut buf.as_slice()).unwrap() {
            TnsrData::F32(back) => prop_assert_eq!(back, t),
            _ => prop_assert!(false, "wrong dtype"),
        }
    }
}
