use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vmark_core::aggregate::frame_accuracies;
use vmark_core::metrics::psnr;
use vmark_core::{
    synth_video, Activation, CarrierLayout, CodecKey, CodecParams, Frame, FrameShape, Motion, SynthSpec, Watermark,
    WatermarkCodec,
};

fn weighted_logits(key: &CodecKey, frame: &Frame, weights: &[f64]) -> f64 {
    key.decode_frame(frame).unwrap().iter().zip(weights).map(|(y, w)| y * w).sum()
}

fn check_gradient(params: CodecParams) {
    let shape = FrameShape::new(12, 10, 3).unwrap();
    let key = CodecKey::new(params, shape).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frame = Frame::from_fn(shape, |_, _, _| rng.gen::<f64>());
    let weights: Vec<f64> = (0..key.bit_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grad = key.decoder_gradient(&frame, &weights).unwrap();
    let h = 1e-5;
    for _ in 0..40 {
        let i = rng.gen_range(0..shape.len());
        let mut plus = frame.clone();
        plus.data_mut()[i] += h;
        let mut minus = frame.clone();
        minus.data_mut()[i] -= h;
        let fd = (weighted_logits(&key, &plus, &weights) - weighted_logits(&key, &minus, &weights)) / (2.0 * h);
        let scale = fd.abs().max(grad[i].abs()).max(1e-8);
        assert!((fd - grad[i]).abs() / scale < 1e-4, "pixel {i}: analytic {} numeric {fd}", grad[i]);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    check_gradient(CodecParams::default());
    check_gradient(CodecParams {
        activation: Activation::Identity,
        ..CodecParams::default()
    });
    check_gradient(CodecParams::noise_sensitive());
}

#[test]
fn embedded_watermark_decodes_exactly() {
    // the weak preset may lose a bit on busy frames but stays above 27/32
    for (params, side, floor) in [(CodecParams::default(), 64, 1.0), (CodecParams::noise_sensitive(), 32, 27.0 / 32.0)] {
        let shape = FrameShape::new(side, side, 3).unwrap();
        let key = CodecKey::new(params, shape).unwrap();
        for seed in 0..4 {
            for motion in [Motion::Slow, Motion::Fast] {
                let video = synth_video(&SynthSpec::new(6, side, side, 3, motion), seed).unwrap();
                let wg = Watermark::random(32, seed + 100).unwrap();
                let marked = key.embed(&video, &wg).unwrap();
                let acc = frame_accuracies(&key.decode_video(&marked).unwrap(), &wg).unwrap();
                assert!(acc.iter().all(|&a| a >= floor), "{:?} seed {seed}: {acc:?}", params.layout);
                let q = psnr(&marked, &video).unwrap();
                assert!(q > 28.0, "psnr {q}");
            }
        }
    }
}

#[test]
fn clean_video_accuracy_is_near_chance() {
    let shape = FrameShape::new(64, 64, 3).unwrap();
    let key = CodecKey::new(CodecParams::default(), shape).unwrap();
    let mut total = 0.0;
    let mut count = 0.0;
    for seed in 0..10 {
        let video = synth_video(&SynthSpec::new(4, 64, 64, 3, Motion::Fast), seed).unwrap();
        let wg = Watermark::random(32, seed).unwrap();
        for a in frame_accuracies(&key.decode_video(&video).unwrap(), &wg).unwrap() {
            total += a;
            count += 1.0;
        }
    }
    let mean = total / count;
    assert!((0.35..0.65).contains(&mean), "mean clean accuracy {mean}");
}

#[test]
fn identity_activation_is_affine_in_the_response() {
    let shape = FrameShape::new(8, 8, 1).unwrap();
    let key = CodecKey::new(CodecParams::default(), shape).unwrap();
    let identity = key.with_activation(Activation::Identity);
    let frame = Frame::from_fn(shape, |y, x, _| ((y * 8 + x) % 7) as f64 / 7.0);
    let z = key.responses(&frame).unwrap();
    let y = identity.decode_frame(&frame).unwrap();
    for (zi, yi) in z.iter().zip(&y) {
        assert!((yi - (0.5 + zi)).abs() < 1e-12);
    }
    assert_eq!(Frame::filled(shape, 0.5).data().len(), 64);
    assert!(identity.decode_frame(&Frame::filled(shape, 0.5)).unwrap().iter().all(|&v| v == 0.5));
}

#[test]
fn dipole_carriers_ignore_flat_content() {
    let shape = FrameShape::new(16, 16, 3).unwrap();
    let key = CodecKey::new(
        CodecParams {
            layout: CarrierLayout::Dipole,
            ..CodecParams::default()
        },
        shape,
    )
    .unwrap();
    let z = key.responses(&Frame::filled(shape, 0.9)).unwrap();
    assert!(z.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn keys_are_deterministic_and_reject_mismatches() {
    let shape = FrameShape::new(16, 16, 3).unwrap();
    let a = CodecKey::new(CodecParams::default(), shape).unwrap();
    let b = CodecKey::new(CodecParams::default(), shape).unwrap();
    assert_eq!(a.carrier(3), b.carrier(3));
    let other = Frame::filled(FrameShape::new(8, 8, 3).unwrap(), 0.5);
    assert!(a.decode_frame(&other).is_err());
    assert!(a.embed_frame(&Frame::filled(shape, 0.5), &Watermark::random(16, 0).unwrap()).is_err());
    assert!(CodecParams { bits: 0, ..CodecParams::default() }.validate().is_err());
}
