use proptest::prelude::*;
use vmark_core::container::{
    decode_vmb, encode_vmb, from_raw_u8, read_container, to_raw_u8, write_atomic, write_container, MAGIC,
};
use vmark_core::{synth_video, Error, Frame, FrameShape, Motion, SynthSpec, Video};

fn video() -> Video {
    synth_video(&SynthSpec::new(3, 9, 7, 3, Motion::Fast), 4).unwrap()
}

#[test]
fn vmb_file_round_trip_is_exact_to_f32() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clip.vmb");
    let v = video();
    write_container(&v, &path).unwrap();
    let back = read_container(&path).unwrap();
    assert_eq!(back.num_frames(), 3);
    assert_eq!(back.shape(), v.shape());
    assert!(back.linf_distance(&v) < 1e-7);
    // no temp files left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn png_directory_round_trip_is_exact_to_8_bits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("frames");
    let v = video();
    write_container(&v, &out).unwrap();
    let back = read_container(&out).unwrap();
    assert_eq!(back.num_frames(), 3);
    assert!(back.linf_distance(&v) <= 0.5 / 255.0 + 1e-9);
}

#[test]
fn corrupt_inputs_are_rejected_with_context() {
    let bytes = encode_vmb(&video());
    assert!(decode_vmb(&bytes[..10]).is_err());
    assert!(decode_vmb(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"XXXX");
    assert!(matches!(decode_vmb(&bad), Err(Error::Format(_))));
    assert_eq!(&bytes[..4], MAGIC);

    let missing = std::path::Path::new("/nonexistent/clip.vmb");
    let msg = read_container(missing).unwrap_err().to_string();
    assert!(msg.contains("/nonexistent/clip.vmb"), "{msg}");
}

#[test]
fn atomic_write_replaces_existing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.txt");
    write_atomic(&path, b"first").unwrap();
    write_atomic(&path, b"second").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"second");
    assert!(write_atomic(&dir.path().join("missing/out.txt"), b"x").is_err());
}

proptest! {
    #[test]
    fn raw_u8_round_trip(raw in prop::collection::vec(any::<u8>(), 2 * 3 * 3)) {
        let shape = FrameShape::new(2, 3, 3).unwrap();
        let frame = from_raw_u8(shape, &raw).unwrap();
        prop_assert_eq!(to_raw_u8(&frame), raw);
    }

    #[test]
    fn vmb_bytes_round_trip(values in prop::collection::vec(0.0f32..=1.0, 2 * 4 * 2)) {
        let shape = FrameShape::new(4, 2, 1).unwrap();
        let frames = values
            .chunks(8)
            .map(|c| Frame::new(shape, c.iter().map(|&v| f64::from(v)).collect()).unwrap())
            .collect();
        let v = Video::new(frames).unwrap();
        prop_assert_eq!(decode_vmb(&encode_vmb(&v)).unwrap(), v);
    }
}
