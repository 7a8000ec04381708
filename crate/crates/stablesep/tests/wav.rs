use std::path::Path;

use proptest::prelude::*;
use stablesep::wav::{decode_wav, encode_wav, load_wav, quantize, write_wav, FULL_SCALE};
use stablesep::Error;

fn p() -> &'static Path {
    Path::new("test.wav")
}

fn chunk_of(e: Error) -> &'static str {
    match e {
        Error::Wav { chunk, .. } => chunk,
        other => panic!("unexpected error {other}"),
    }
}

/// Hand-built header so the decoder is not only checked against the encoder.
fn manual_wav(channels: u16, rate: u32, tag: u16, bits: u16, data: &[i16]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + 2 * data.len() as u32).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&tag.to_le_bytes());
    b.extend_from_slice(&channels.to_le_bytes());
    b.extend_from_slice(&rate.to_le_bytes());
    b.extend_from_slice(&(rate * channels as u32 * 2).to_le_bytes());
    b.extend_from_slice(&(channels * 2).to_le_bytes());
    b.extend_from_slice(&bits.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&(2 * data.len() as u32).to_le_bytes());
    for v in data {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

#[test]
fn mono_file_is_one_row() {
    let bytes = manual_wav(1, 8000, 1, 16, &[0, 16384, -32768, 32767]);
    let audio = decode_wav(&bytes, p()).unwrap();
    assert_eq!(audio.sample_rate, 8000);
    assert_eq!(audio.samples, vec![vec![0.0, 0.5, -1.0, 32767.0 / 32768.0]]);
}

#[test]
fn stereo_is_deinterleaved() {
    let bytes = manual_wav(2, 16000, 1, 16, &[1, -1, 2, -2, 3, -3]);
    let audio = decode_wav(&bytes, p()).unwrap();
    let s = |v: &[f64]| v.iter().map(|x| x / FULL_SCALE).collect::<Vec<_>>();
    assert_eq!(audio.samples, vec![s(&[1.0, 2.0, 3.0]), s(&[-1.0, -2.0, -3.0])]);
    assert_eq!(encode_wav(&audio.samples, 16000).unwrap(), bytes);
}

#[test]
fn extra_chunks_are_skipped() {
    let plain = manual_wav(1, 8000, 1, 16, &[5, 6, 7]);
    let mut bytes = plain[..36].to_vec();
    bytes.extend_from_slice(b"LIST");
    bytes.extend_from_slice(&3u32.to_le_bytes());
    bytes.extend_from_slice(&[1, 2, 3, 0]);
    bytes.extend_from_slice(&plain[36..]);
    assert_eq!(decode_wav(&bytes, p()).unwrap(), decode_wav(&plain, p()).unwrap());
}

#[test]
fn extensible_pcm_is_accepted() {
    let plain = manual_wav(2, 8000, 1, 16, &[5, 6]);
    let mut bytes = plain[..20].to_vec();
    let size_at = 16;
    bytes[size_at..size_at + 4].copy_from_slice(&40u32.to_le_bytes());
    bytes.extend_from_slice(&0xFFFEu16.to_le_bytes());
    bytes.extend_from_slice(&plain[22..36]);
    bytes.extend_from_slice(&22u16.to_le_bytes());
    bytes.extend_from_slice(&16u16.to_le_bytes());
    bytes.extend_from_slice(&3u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&[0; 14]);
    bytes.extend_from_slice(&plain[36..]);
    assert_eq!(decode_wav(&bytes, p()).unwrap(), decode_wav(&plain, p()).unwrap());
}

#[test]
fn malformed_files_name_the_chunk() {
    let good = manual_wav(1, 8000, 1, 16, &[1, 2, 3, 4]);
    assert_eq!(chunk_of(decode_wav(&good[..8], p()).unwrap_err()), "RIFF");
    let mut not_wave = good.clone();
    not_wave[8..12].copy_from_slice(b"AVI ");
    assert_eq!(chunk_of(decode_wav(&not_wave, p()).unwrap_err()), "RIFF");
    assert_eq!(chunk_of(decode_wav(&good[..30], p()).unwrap_err()), "fmt");
    assert_eq!(chunk_of(decode_wav(&good[..46], p()).unwrap_err()), "data");
    assert_eq!(chunk_of(decode_wav(&good[..36], p()).unwrap_err()), "data");
    assert_eq!(chunk_of(decode_wav(&manual_wav(1, 8000, 3, 32, &[0, 0]), p()).unwrap_err()), "fmt");
    assert_eq!(chunk_of(decode_wav(&manual_wav(1, 8000, 1, 8, &[0]), p()).unwrap_err()), "fmt");
    assert_eq!(chunk_of(decode_wav(&manual_wav(3, 8000, 1, 16, &[0; 3]), p()).unwrap_err()), "fmt");
    let msg = decode_wav(&manual_wav(1, 8000, 3, 32, &[0, 0]), p()).unwrap_err().to_string();
    assert!(msg.contains("test.wav") && msg.contains("fmt") && msg.contains("encoding"), "{msg}");
}

#[test]
fn files_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let x = vec![vec![0.25, -0.5, 0.125], vec![0.0, 1.0 / FULL_SCALE, -1.0]];
    write_wav(&path, &x, 22050).unwrap();
    let audio = load_wav(&path).unwrap();
    assert_eq!(audio.samples, x);
    assert_eq!(audio.sample_rate, 22050);
    assert!(matches!(load_wav(dir.path().join("missing.wav")), Err(Error::Io { .. })));
}

#[test]
fn writing_rejects_bad_shapes() {
    assert!(encode_wav(&[], 8000).is_err());
    assert!(encode_wav(&[vec![0.0], vec![0.0], vec![0.0]], 8000).is_err());
    assert!(encode_wav(&[vec![0.0, 1.0], vec![0.0]], 8000).is_err());
}

#[test]
fn quantization_rounds_and_saturates() {
    assert_eq!(quantize(0.0), 0);
    assert_eq!(quantize(1.4 / FULL_SCALE), 1);
    assert_eq!(quantize(-1.6 / FULL_SCALE), -2);
    assert_eq!(quantize(1.0), i16::MAX);
    assert_eq!(quantize(-7.0), i16::MIN);
}

proptest! {
    #[test]
    fn random_pcm_round_trips_bit_exactly(codes in prop::collection::vec(any::<i16>(), 2..400), stereo in any::<bool>()) {
        let channels = if stereo { 2 } else { 1 };
        let n = codes.len() / channels * channels;
        let bytes = manual_wav(channels as u16, 16000, 1, 16, &codes[..n]);
        let audio = decode_wav(&bytes, p()).unwrap();
        prop_assert_eq!(encode_wav(&audio.samples, 16000).unwrap(), bytes);
    }
}
