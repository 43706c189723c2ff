use std::collections::HashMap;
use std::f64::consts::PI;

use spbtrack::simgen::{generate, parse_occlusions, MotionModel};
use spbtrack::{Scenario, ScenarioSpec};

fn residuals(sc: &Scenario) -> Vec<[f64; 7]> {
    let gt: HashMap<(u32, u64), _> = sc.gt.iter().map(|r| ((r.frame, r.id), r.bbox)).collect();
    sc.detections
        .iter()
        .zip(&sc.det_agents)
        .filter_map(|(d, a)| {
            let g = gt[&(d.frame, (*a)?)];
            let b = d.bbox;
            let dyaw = (b.yaw - g.yaw + PI).rem_euclid(2.0 * PI) - PI;
            Some([
                b.x - g.x,
                b.y - g.y,
                b.z - g.z,
                dyaw,
                b.w - g.w,
                b.l - g.l,
                b.h - g.h,
            ])
        })
        .collect()
}

fn std_dev(v: impl Iterator<Item = f64> + Clone) -> (f64, usize) {
    let n = v.clone().count();
    let mean = v.clone().sum::<f64>() / n as f64;
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (var.sqrt(), n)
}

#[test]
fn noise_levels_match_spec() {
    let spec = ScenarioSpec {
        n_pedestrians: 20,
        duration: 60.0,
        pos_sigma: 0.2,
        yaw_sigma: 0.1,
        dim_sigma: 0.03,
        seed: 5,
        ..ScenarioSpec::default()
    };
    let res = residuals(&generate(&spec).unwrap());
    let want = [0.2, 0.2, 0.2, 0.1, 0.03, 0.03, 0.03];
    for (k, w) in want.iter().enumerate() {
        let (s, n) = std_dev(res.iter().map(|r| r[k]));
        assert!(n >= 10_000);
        assert!((s / w - 1.0).abs() < 0.1, "component {k}: std {s} vs {w}");
    }
}

#[test]
fn dropout_and_clutter_rates() {
    let spec = ScenarioSpec {
        n_pedestrians: 10,
        duration: 100.0,
        dropout: 0.2,
        fp_rate: 0.8,
        seed: 9,
        ..ScenarioSpec::default()
    };
    let sc = generate(&spec).unwrap();
    let tp = sc.det_agents.iter().filter(|a| a.is_some()).count() as f64;
    let fp = sc.det_agents.len() as f64 - tp;
    let kept = tp / sc.gt.len() as f64;
    assert!((kept - 0.8).abs() < 0.02, "kept {kept}");
    let per_frame = fp / sc.n_frames as f64;
    assert!((per_frame - 0.8).abs() < 0.05, "fp per frame {per_frame}");
    // Beta(8, 2) true positives, Beta(2, 8) clutter
    let mean = |tp: bool| {
        let v: Vec<f64> = sc
            .detections
            .iter()
            .zip(&sc.det_agents)
            .filter(|(_, a)| a.is_some() == tp)
            .map(|(d, _)| d.confidence)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!((mean(true) - 0.8).abs() < 0.01);
    assert!((mean(false) - 0.2).abs() < 0.01);
}

#[test]
fn occluded_agent_has_no_detections() {
    let spec = ScenarioSpec {
        occlusions: parse_occlusions("1:10-40,3:0-5").unwrap(),
        seed: 2,
        ..ScenarioSpec::default()
    };
    let sc = generate(&spec).unwrap();
    for (d, a) in sc.detections.iter().zip(&sc.det_agents) {
        match a {
            Some(1) => assert!(!(10..=40).contains(&d.frame)),
            Some(3) => assert!(d.frame > 5),
            _ => {}
        }
    }
    // ground truth is unaffected by occlusion
    assert_eq!(sc.gt.len(), spec.n_pedestrians * sc.n_frames);
    let hits = |agent: u64| sc.det_agents.iter().filter(|a| **a == Some(agent)).count();
    assert_eq!(hits(1), sc.n_frames - 31);
    assert_eq!(hits(3), sc.n_frames - 6);
}

#[test]
fn seed_determines_everything() {
    let spec = ScenarioSpec {
        fp_rate: 0.5,
        dropout: 0.1,
        seed: 77,
        ..ScenarioSpec::default()
    };
    let (a, b) = (generate(&spec).unwrap(), generate(&spec).unwrap());
    assert_eq!(a.gt, b.gt);
    assert_eq!(a.detections, b.detections);
    assert_eq!(a.det_agents, b.det_agents);
    let c = generate(&ScenarioSpec { seed: 78, ..spec }).unwrap();
    assert_ne!(a.detections, c.detections);
}

#[test]
fn noise_does_not_move_trajectories() {
    let quiet = ScenarioSpec {
        motion: vec![MotionModel::Linear],
        seed: 4,
        ..ScenarioSpec::default()
    };
    let noisy = ScenarioSpec {
        pos_sigma: 0.5,
        fp_rate: 1.0,
        dropout: 0.3,
        ..quiet.clone()
    };
    assert_eq!(generate(&quiet).unwrap().gt, generate(&noisy).unwrap().gt);
}

#[test]
fn decimation_keeps_every_other_frame() {
    let sc = generate(&ScenarioSpec {
        duration: 3.05,
        seed: 1,
        ..ScenarioSpec::default()
    })
    .unwrap();
    let half = sc.decimate(2).unwrap();
    assert_eq!(half.n_frames, sc.n_frames.div_ceil(2));
    assert_eq!(half.frame_rate, 5.0);
    for r in &half.gt {
        let orig = sc
            .gt
            .iter()
            .find(|g| g.frame == r.frame * 2 && g.id == r.id)
            .unwrap();
        assert_eq!(orig.bbox, r.bbox);
    }
    let frames = half.frames();
    assert!((frames[1].timestamp - 0.2).abs() < 1e-12);
    assert!(sc.decimate(0).is_err());
}
