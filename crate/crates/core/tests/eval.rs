use silent_speech::dataset::{align, segment_net2, synth_corpus, Net2Segment, PreparedClip, SynthConfig};
use silent_speech::eval::{check_disjoint, score, EvalReport};
use silent_speech::Error;

fn clips() -> Vec<PreparedClip> {
    let config = SynthConfig {
        frame_size: 8,
        ..SynthConfig::default()
    };
    synth_corpus(6, 3, 2.5, &config)
        .unwrap()
        .iter()
        .map(|c| PreparedClip::new(&c.id, &align(&c.frames, &c.audio, 0.0).unwrap()).unwrap())
        .collect()
}

fn segments(clips: &[PreparedClip]) -> Vec<Net2Segment> {
    clips
        .iter()
        .map(|c| {
            let grid = segment_net2(&c.mel);
            Net2Segment {
                id: c.id.clone(),
                input: grid.data.clone(),
                target: grid.data,
                mask: grid.mask,
            }
        })
        .collect()
}

#[test]
fn perfect_predictor_scores_zero() {
    let segs = segments(&clips());
    assert_eq!(score(&segs, |s| Ok(s.target.clone())).unwrap(), 0.0);
}

#[test]
fn constant_predictor_scores_spread_around_half() {
    let clips = clips();
    let segs = segments(&clips);
    let got = score(&segs, |s| Ok(vec![0.5; s.target.len()])).unwrap();
    // Directly from the clips' Mel values; padding never enters.
    let values: Vec<f64> = clips.iter().flat_map(|c| c.mel.data().iter().map(|&v| v as f64)).collect();
    let expected = values.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() / values.len() as f64;
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
}

#[test]
fn report_lists_both_rows_and_ratio() {
    let report = EvalReport {
        clips: 10,
        net1_mse: 0.004,
        net2_mse: 0.002,
        gl_mel_mae: 0.1,
    };
    let text = report.to_string();
    assert!(text.contains("net1 masked MSE     0.004000"));
    assert!(text.contains("net1+net2 masked MSE 0.002000"));
    assert!(text.contains("ratio net2/net1     0.5000"));
    assert!(report.healthy());
    let worse = EvalReport { net2_mse: 0.005, ..report };
    assert!(!worse.healthy());
    assert!(worse.to_string().contains("net2 worse than net1"));
}

#[test]
fn overlapping_ids_are_rejected() {
    let clips = clips();
    assert!(check_disjoint(&clips, &["clip_100".into()]).is_ok());
    let err = check_disjoint(&clips, &["clip_001".into()]).unwrap_err();
    assert!(matches!(err, Error::Invalid(ref m) if m.contains("clip_001")), "{err}");
}
