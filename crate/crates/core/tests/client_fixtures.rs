//! The browser client reimplements decimation, the VAD decision rule and
//! WAV assembly. These fixtures are the contract both sides are tested on.

use hasr_core::audio::{decimated_len, decimation_index, decode_sample, encode_sample, write_wav};
use hasr_core::vad::{detect_segments, window_decisions};
use hasr_core::{AudioBuffer, VadConfig};
use serde_json::Value;

fn fixture(name: &str) -> Value {
    let path = format!("{}/../../fixtures/client/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn u(v: &Value) -> usize {
    v.as_u64().unwrap() as usize
}

#[test]
fn decimation_vectors() {
    let f = fixture("decimation.json");
    for case in f["cases"].as_array().unwrap() {
        let (src, dst) = (case["source_hz"].as_u64().unwrap() as u32, case["target_hz"].as_u64().unwrap() as u32);
        let m = decimated_len(u(&case["source_frames"]), src, dst);
        assert_eq!(m, u(&case["output_frames"]), "{src}->{dst}");
        let idx: Vec<usize> = (0..m).map(|j| decimation_index(j, src, dst)).collect();
        let want: Vec<usize> = case["indices"].as_array().unwrap().iter().map(u).collect();
        assert_eq!(idx, want, "{src}->{dst}");
    }
}

#[test]
fn vad_vectors() {
    let f = fixture("vad.json");
    for (k, case) in f["cases"].as_array().unwrap().iter().enumerate() {
        let samples: Vec<f32> =
            case["samples_pcm16"].as_array().unwrap().iter().map(|v| decode_sample(v.as_i64().unwrap() as i16)).collect();
        let audio = AudioBuffer::mono(samples, 16_000).unwrap();
        let cfg = VadConfig::new(
            u(&case["window_size_samples"]),
            case["threshold"].as_f64().unwrap() as f32,
            u(&case["hangover_windows"]),
        )
        .unwrap();
        let speech: Vec<bool> = case["window_speech"].as_array().unwrap().iter().map(|b| b.as_bool().unwrap()).collect();
        assert_eq!(window_decisions(&audio, &cfg).unwrap(), speech, "case {k}");
        let segs = serde_json::to_value(detect_segments(&audio, &cfg).unwrap()).unwrap();
        assert_eq!(segs, case["segments"], "case {k}");
    }
}

#[test]
fn wav_encoding_vector() {
    let f = fixture("wav_encoding.json");
    let samples: Vec<f32> = f["samples"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap() as f32).collect();
    let pcm: Vec<i64> = samples.iter().map(|&s| encode_sample(s) as i64).collect();
    let want: Vec<i64> = f["pcm16"].as_array().unwrap().iter().map(|v| v.as_i64().unwrap()).collect();
    assert_eq!(pcm, want);
    let wav = write_wav(&AudioBuffer::mono(samples.iter().map(|s| s.clamp(-1.0, 1.0)).collect(), 16_000).unwrap());
    let hex: String = wav.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, f["wav_hex"].as_str().unwrap());
}
