//! Property tests for tensor ops: shape formulas, linearity, adjointness,
//! and serialization round-trips under randomized inputs.

use proptest::prelude::*;
use pf_numcore::ops::{
    conv2d_forward, conv2d_input_vjp, conv2d_transpose_forward, conv_out_dim, maxpool2d_forward,
    transpose_out_hw,
};
use pf_numcore::{Checkpoint, Padding, Rng, Tensor};

fn tensor(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut rng = Rng::new(seed);
    let len = shape.iter().product();
    Tensor::from_vec(&shape, (0..len).map(|_| rng.normal()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Same padding: out = ceil(in/stride), independent of kernel size.
    #[test]
    fn same_padding_dim_is_ceil(extent in 1usize..40, k in 1usize..6, s in 1usize..4) {
        let out = conv_out_dim(extent, k, s, Padding::Same).unwrap();
        prop_assert_eq!(out, extent.div_ceil(s));
    }

    /// Valid padding: out = floor((in-k)/s)+1 whenever the window fits.
    #[test]
    fn valid_padding_dim_is_floor(extent in 1usize..40, k in 1usize..6, s in 1usize..4) {
        let got = conv_out_dim(extent, k, s, Padding::Valid);
        if k <= extent {
            prop_assert_eq!(got.unwrap(), (extent - k) / s + 1);
        } else {
            prop_assert!(got.is_err());
        }
    }

    /// Transpose output dims invert the matching convolution: convolving the
    /// transpose output with the same geometry returns the input dims.
    #[test]
    fn transpose_dims_invert_conv(h in 1usize..20, k in 1usize..5, s in 1usize..4) {
        for pad in [Padding::Same, Padding::Valid] {
            let (oh, _) = transpose_out_hw((h, h), (k, k), (s, s), pad).unwrap();
            let back = conv_out_dim(oh, k, s, pad).unwrap();
            prop_assert_eq!(back, h, "pad {:?} h {} k {} s {} oh {}", pad, h, k, s, oh);
        }
    }

    /// Convolution is linear in its input.
    #[test]
    fn conv_is_linear_in_input(seed in 0u64..1000) {
        let a = tensor(vec![5, 5, 2], seed);
        let b = tensor(vec![5, 5, 2], seed.wrapping_add(7919));
        let f = tensor(vec![3, 3, 2, 2], seed.wrapping_add(104729));
        let fa = conv2d_forward(&a, &f, (2, 2), Padding::Same).unwrap();
        let fb = conv2d_forward(&b, &f, (2, 2), Padding::Same).unwrap();
        let fab = conv2d_forward(&a.add(&b).unwrap(), &f, (2, 2), Padding::Same).unwrap();
        prop_assert!(fab.max_abs_diff(&fa.add(&fb).unwrap()) < 1e-9);
    }

    /// <conv(x), y> == <x, conv_input_vjp(y)> — the adjoint identity that
    /// makes transpose convolution the exact gradient of convolution.
    #[test]
    fn conv_and_input_vjp_are_adjoint(seed in 0u64..1000, s in 1usize..3) {
        for pad in [Padding::Same, Padding::Valid] {
            let x = tensor(vec![6, 6, 2], seed);
            let f = tensor(vec![3, 3, 2, 3], seed.wrapping_add(1));
            let y_shape = conv2d_forward(&x, &f, (s, s), pad).unwrap().shape().to_vec();
            let y = tensor(y_shape, seed.wrapping_add(2));
            let fx = conv2d_forward(&x, &f, (s, s), pad).unwrap();
            let fty = conv2d_input_vjp(&y, &f, (s, s), pad, (6, 6)).unwrap();
            let lhs: f64 = fx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(fty.data()).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }
    }

    /// Transpose convolution IS the input-vjp with relabeled filters.
    #[test]
    fn transpose_forward_matches_vjp(seed in 0u64..1000) {
        let x = tensor(vec![4, 4, 3], seed);
        let f = tensor(vec![3, 3, 2, 3], seed.wrapping_add(13)); // [kh,kw,out,in]
        let up = conv2d_transpose_forward(&x, &f, (2, 2), Padding::Same).unwrap();
        let (oh, ow) = transpose_out_hw((4, 4), (3, 3), (2, 2), Padding::Same).unwrap();
        let direct = conv2d_input_vjp(&x, &f, (2, 2), Padding::Same, (oh, ow)).unwrap();
        prop_assert!(up.max_abs_diff(&direct) == 0.0);
    }

    /// Every pooled value equals the max of some window element, and pooling
    /// never invents values.
    #[test]
    fn maxpool_outputs_are_window_maxima(seed in 0u64..1000) {
        let x = tensor(vec![6, 7, 2], seed);
        let (out, _) = maxpool2d_forward(&x, (2, 2), (2, 2)).unwrap();
        let max_in = x.data().iter().cloned().fold(f64::MIN, f64::max);
        for &v in out.data() {
            prop_assert!(x.data().contains(&v));
            prop_assert!(v <= max_in);
        }
    }

    /// Seeded streams are reproducible and derivation is stable.
    #[test]
    fn rng_streams_reproduce(seed in 0u64..10_000, tag in 0u64..100) {
        let mut a = Rng::new(seed).derive(tag);
        let mut b = Rng::new(seed).derive(tag);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    /// Checkpoints round-trip arbitrary finite payloads bit-exactly.
    #[test]
    fn checkpoint_round_trips(values in proptest::collection::vec(-1e30f32..1e30, 0..64)) {
        let mut ck = Checkpoint::new();
        let n = values.len();
        ck.insert("t", Tensor::from_vec(&[n], values).unwrap()).unwrap();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        let (a, b) = (ck.get("t").unwrap(), back.get("t").unwrap());
        prop_assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
