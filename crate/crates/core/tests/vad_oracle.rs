use hasr_core::audio::AudioBuffer;
use hasr_core::vad::{detect_segments, gate_audio, total_speech_samples, window_peaks, SpeechSegment, VadConfig};
use hasr_testkit::vad_reference;
use proptest::prelude::*;

fn spans(segs: &[SpeechSegment]) -> Vec<(usize, usize)> {
    segs.iter().map(|s| (s.start_sample, s.end_sample)).collect()
}

/// Silence with a few bursts of random amplitude, so window decisions vary.
fn bursty() -> impl Strategy<Value = Vec<f32>> {
    (1usize..3000, prop::collection::vec((0usize..3000, 1usize..400, 0.0f32..1.0), 0..6)).prop_map(|(len, bursts)| {
        let mut s = vec![0.0f32; len];
        for (start, width, amp) in bursts {
            for (k, x) in s.iter_mut().enumerate().skip(start % len).take(width) {
                *x = if k % 2 == 0 { amp } else { -amp * 0.5 };
            }
        }
        s
    })
}

#[test]
fn centred_tone_is_one_second_long() {
    let mut s = vec![0.0f32; 48000];
    for (i, x) in s[16000..32000].iter_mut().enumerate() {
        *x = 0.5 * (2.0 * std::f32::consts::PI * 440.0 * i as f32 / 16000.0).sin();
    }
    let b = AudioBuffer::mono(s, 16000).unwrap();
    let segs = detect_segments(&b, &VadConfig::new(400, 0.1, 0).unwrap()).unwrap();
    assert_eq!(segs.len(), 1);
    assert!(segs[0].start_sample.abs_diff(16000) <= 400);
    assert!(segs[0].end_sample.abs_diff(32000) <= 400);
}

#[test]
fn peaks_example() {
    let b = AudioBuffer::mono(vec![0.1, -0.9, 0.2, 0.3], 16000).unwrap();
    assert_eq!(window_peaks(&b, 2).unwrap(), vec![0.9, 0.3]);
}

#[test]
fn gate_matches_slice_concatenation() {
    let s: Vec<f32> = (0..100).map(|i| i as f32 / 100.0).collect();
    let segs = [SpeechSegment { start_sample: 5, end_sample: 20 }, SpeechSegment { start_sample: 60, end_sample: 61 }];
    let gated = gate_audio(&AudioBuffer::mono(s.clone(), 8000).unwrap(), &segs).unwrap();
    let expect: Vec<f32> = s[5..20].iter().chain(&s[60..61]).copied().collect();
    assert_eq!(gated.samples(), expect.as_slice());
}

proptest! {
    #[test]
    fn segments_match_brute_force(s in bursty(), window in 1usize..500, threshold in 0.01f32..0.99, hangover in 0usize..6) {
        let b = AudioBuffer::mono(s.clone(), 16000).unwrap();
        let segs = detect_segments(&b, &VadConfig::new(window, threshold, hangover).unwrap()).unwrap();
        prop_assert_eq!(spans(&segs), vad_reference(&s, window, threshold, hangover));
    }

    #[test]
    fn peaks_match_brute_force(s in bursty(), window in 1usize..500) {
        let b = AudioBuffer::mono(s.clone(), 16000).unwrap();
        let expect: Vec<f32> = s.chunks(window).map(|c| c.iter().fold(0.0f32, |m, x| m.max(x.abs()))).collect();
        prop_assert_eq!(window_peaks(&b, window).unwrap(), expect);
    }

    #[test]
    fn raising_threshold_never_adds_speech(s in bursty(), window in 1usize..500, t1 in 0.01f32..0.99, t2 in 0.01f32..0.99) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let b = AudioBuffer::mono(s, 16000).unwrap();
        let low = detect_segments(&b, &VadConfig::new(window, lo, 0).unwrap()).unwrap();
        let high = detect_segments(&b, &VadConfig::new(window, hi, 0).unwrap()).unwrap();
        prop_assert!(total_speech_samples(&high) <= total_speech_samples(&low));
    }

    #[test]
    fn segments_are_sorted_disjoint_and_gate_length_adds_up(s in bursty(), window in 1usize..500, hangover in 0usize..6) {
        let b = AudioBuffer::mono(s, 16000).unwrap();
        let segs = detect_segments(&b, &VadConfig::new(window, 0.2, hangover).unwrap()).unwrap();
        for pair in segs.windows(2) {
            prop_assert!(pair[0].end_sample < pair[1].start_sample);
        }
        prop_assert!(segs.iter().all(|s| s.start_sample < s.end_sample));
        let gated = gate_audio(&b, &segs).unwrap();
        prop_assert_eq!(gated.samples().len(), total_speech_samples(&segs));
    }
}
