mod common;

use std::collections::{HashMap, HashSet};

use common::bx;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spbtrack::lifecycle::{compute_f1_threshold, LabeledDetection};
use spbtrack::{
    Detection3D, EgoPose, FeatureVec, FrameInput, LifecycleConfig, TrackStatus, Tracker,
    TrackerConfig,
};

fn det(x: f64, y: f64, conf: f64, feature: Option<&[f64]>) -> Detection3D {
    Detection3D {
        frame: 0,
        bbox: bx(x, y, 0.9, 0.0, 0.6, 0.6, 1.8),
        confidence: conf,
        feature: feature.map(|f| FeatureVec::new(f.to_vec()).unwrap()),
        class_label: "Pedestrian".into(),
    }
}

fn frame(i: u32, detections: Vec<Detection3D>) -> FrameInput {
    FrameInput {
        frame: i,
        timestamp: f64::from(i) * 0.1,
        detections,
        ego: EgoPose::ORIGIN,
    }
}

fn snapshot(t: &Tracker) -> Vec<(u64, TrackStatus, u32, u32)> {
    let mut v: Vec<_> = t
        .pool()
        .iter()
        .map(|t| (t.id, t.status, t.hits, t.frames_lost))
        .collect();
    v.sort_by_key(|s| s.0);
    v
}

#[test]
fn reappearing_person_keeps_id() {
    let feat = [0.2, 0.9, 0.1, 0.4];
    let mut tr = Tracker::new(TrackerConfig::default());
    let mut emitted = Vec::new();
    for i in 1..=21 {
        let dets = if (3..=20).contains(&i) {
            vec![]
        } else {
            vec![det(1.5, 0.5, 0.85, Some(&feat))]
        };
        let out = tr.step_frame(&frame(i, dets)).unwrap();
        emitted.push((i, out.iter().map(|o| o.id).collect::<Vec<_>>()));
    }
    assert_eq!(emitted[1], (2, vec![1]));
    assert_eq!(emitted[20], (21, vec![1]));
    assert_eq!(tr.births(), 1);
}

#[test]
fn hand_traced_crossing_pair() {
    // A walks +x along y = 0.5, B walks -x along y = -0.5; they pass at
    // frame 3. A is missed in frame 2.
    let a = |i: u32| -0.45 + 0.15 * f64::from(i);
    let b = |i: u32| 0.45 - 0.15 * f64::from(i);
    let mut tr = Tracker::new(TrackerConfig::default());
    use TrackStatus::*;
    let expected = [
        (vec![], vec![(1, Candidate, 1, 0), (2, Candidate, 1, 0)]),
        (vec![1, 2], vec![(1, Active, 2, 0), (2, Active, 2, 0)]),
        (vec![2], vec![(1, Lost, 0, 1), (2, Active, 3, 0)]),
        (vec![1, 2], vec![(1, Active, 1, 0), (2, Active, 4, 0)]),
        (vec![1, 2], vec![(1, Active, 2, 0), (2, Active, 5, 0)]),
    ];
    for (i, (out_ids, pool)) in expected.into_iter().enumerate() {
        let i = i as u32;
        let mut dets = vec![det(b(i), -0.5, 0.9, None)];
        if i != 2 {
            dets.insert(0, det(a(i), 0.5, 0.9, None));
        }
        let out = tr.step_frame(&frame(i, dets)).unwrap();
        assert_eq!(
            out.iter().map(|o| o.id).collect::<Vec<_>>(),
            out_ids,
            "frame {i}"
        );
        assert_eq!(snapshot(&tr), pool, "frame {i}");
        for o in &out {
            let want = if o.id == 1 { a(i) } else { b(i) };
            assert!((o.bbox.x - want).abs() < 0.1, "frame {i} id {}", o.id);
        }
    }
    // the missed frame decays A by its distance over the 80 m range
    let lost = 0.9 * (1.0 - (a(2) * a(2) + 0.25 + 0.81).sqrt() / 80.0);
    let mut tr2 = Tracker::new(TrackerConfig::default());
    for i in 0..3 {
        let mut dets = vec![det(b(i), -0.5, 0.9, None)];
        if i != 2 {
            dets.insert(0, det(a(i), 0.5, 0.9, None));
        }
        tr2.step_frame(&frame(i, dets)).unwrap();
    }
    let t1 = tr2.pool().iter().find(|t| t.id == 1).unwrap();
    let pos = t1.filter.mean.position();
    let d = (pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]).sqrt() / 80.0;
    assert!((t1.score - 0.9 * (1.0 - d)).abs() < 1e-12);
    assert!((t1.score - lost).abs() < 2e-3);
}

#[test]
fn regressing_timestamp_rejected() {
    let mut tr = Tracker::new(TrackerConfig::default());
    tr.step_frame(&frame(5, vec![])).unwrap();
    assert!(tr.step_frame(&frame(5, vec![])).is_err());
    assert!(tr.step_frame(&frame(4, vec![])).is_err());
}

#[test]
fn pool_stays_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = TrackerConfig {
        lifecycle: LifecycleConfig {
            max_lost_frames: 20,
            ..LifecycleConfig::default()
        },
        ..TrackerConfig::default()
    };
    let mut tr = Tracker::new(cfg);
    let mut peak = 0;
    for i in 0..10_000u32 {
        let n = rng.random_range(0..=4);
        let dets = (0..n)
            .map(|_| {
                det(
                    rng.random_range(-15.0..15.0),
                    rng.random_range(-15.0..15.0),
                    rng.random_range(0.0..1.0),
                    None,
                )
            })
            .collect();
        tr.step_frame(&frame(i, dets)).unwrap();
        peak = peak.max(tr.pool().len());
    }
    // at most 4 births per frame, each living at most 21 unmatched frames
    // before a match resets it; random clutter rarely re-matches
    assert!(peak <= 4 * 22, "peak pool {peak}");
    assert!(tr.births() > 1000);
}

fn oracle_f1(labeled: &[LabeledDetection]) -> f64 {
    let pos = labeled.iter().filter(|d| d.true_positive).count() as f64;
    let f1s: Vec<(f64, f64)> = (0..=100)
        .map(|k| {
            let t = k as f64 / 100.0;
            let kept: Vec<_> = labeled.iter().filter(|d| d.confidence >= t).collect();
            let tp = kept.iter().filter(|d| d.true_positive).count() as f64;
            let precision = if kept.is_empty() {
                0.0
            } else {
                tp / kept.len() as f64
            };
            let recall = if pos == 0.0 { 0.0 } else { tp / pos };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            (t, f1)
        })
        .collect();
    let best = f1s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    f1s.iter().find(|p| p.1 >= best - 1e-12).unwrap().0
}

#[test]
fn f1_threshold_separable() {
    let mut v: Vec<LabeledDetection> = (60..=100)
        .step_by(5)
        .map(|c| LabeledDetection {
            confidence: c as f64 / 100.0,
            true_positive: true,
        })
        .collect();
    v.extend((4..40).step_by(5).map(|c| LabeledDetection {
        confidence: c as f64 / 100.0,
        true_positive: false,
    }));
    assert!((compute_f1_threshold(&v).unwrap() - 0.40).abs() < 1e-12);
    assert!(compute_f1_threshold(&[]).is_err());
}

proptest! {
    #[test]
    fn f1_threshold_matches_sweep(
        v in prop::collection::vec((0u32..=100, any::<bool>()), 1..60),
    ) {
        let labeled: Vec<_> = v.iter().map(|&(c, tp)| LabeledDetection { confidence: c as f64 / 100.0, true_positive: tp }).collect();
        prop_assert!((compute_f1_threshold(&labeled).unwrap() - oracle_f1(&labeled)).abs() < 1e-12);
    }

    #[test]
    fn pool_invariants_hold(
        frames in prop::collection::vec(
            prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64, 0.0..1.0f64), 0..5),
            1..40,
        ),
        max_lost in 0u32..8,
    ) {
        let cfg = TrackerConfig {
            lifecycle: LifecycleConfig { max_lost_frames: max_lost, ..LifecycleConfig::default() },
            ..TrackerConfig::default()
        };
        let mut tr = Tracker::new(cfg);
        let mut gone: HashSet<u64> = HashSet::new();
        let mut prev: HashMap<u64, (TrackStatus, f64)> = HashMap::new();
        for (i, dets) in frames.iter().enumerate() {
            let dets = dets.iter().map(|&(x, y, c)| det(x, y, c, None)).collect();
            let out = tr.step_frame(&frame(i as u32, dets)).unwrap();
            let ids: HashSet<u64> = out.iter().map(|o| o.id).collect();
            prop_assert_eq!(ids.len(), out.len());

            let now: HashMap<u64, (TrackStatus, f64)> = tr.pool().iter().map(|t| (t.id, (t.status, t.score))).collect();
            for t in tr.pool() {
                prop_assert!(!gone.contains(&t.id));
                prop_assert!((0.0..=1.0).contains(&t.score));
                if t.status == TrackStatus::Lost {
                    prop_assert!(t.frames_lost >= 1 && t.frames_lost <= max_lost);
                    if let Some((TrackStatus::Lost, s)) = prev.get(&t.id) {
                        prop_assert!(t.score <= *s);
                    }
                }
            }
            for id in prev.keys().filter(|id| !now.contains_key(id)) {
                gone.insert(*id);
            }
            prev = now;
        }
    }
}
