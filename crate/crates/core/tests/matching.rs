use std::collections::BTreeSet;

use mvseg_core::matching::{consistency_nms_and_refine_maps, match_masks};
use mvseg_core::projection::{build_projection_table, ProjectionTable};
use mvseg_core::scene::{MaskId, ValidatedScene};
use mvseg_core::synthetic::{generate, suites, FragmentMode, GroundTruth, MaskOrigin, Primitive};
use mvseg_core::Bundle;

fn instance_segments(gt: &GroundTruth) -> Vec<Vec<u32>> {
    let n = gt.point_instance.iter().max().map_or(0, |&m| m + 1);
    (0..n)
        .map(|k| (0..gt.point_instance.len() as u32).filter(|&i| gt.point_instance[i as usize] == k).collect())
        .collect()
}

fn table(bundle: &Bundle) -> ProjectionTable<f64> {
    build_projection_table(&ValidatedScene::new(bundle).unwrap(), bundle.config.alpha, true)
}

fn origin(gt: &GroundTruth, id: MaskId) -> MaskOrigin {
    gt.mask_origins[id.frame_id as usize][id.index as usize]
}

#[test]
fn ratios_scores_and_coverage_stay_in_unit_interval() {
    let (bundle, gt) = generate(&suites::corrupted_scene(6, 8)).unwrap();
    let t = table(&bundle);
    let r = match_masks(&instance_segments(&gt), &bundle.frames, &t, 0.3, 0.9).unwrap();
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    assert!(r.candidate_sets.iter().flatten().all(|c| unit(c.frame_visibility) && unit(c.mask_visibility)));
    assert!(r.candidate_sets.iter().flatten().all(|c| c.frame_visibility > 0.3 && c.mask_visibility > 0.9));
    assert!(r.coverage.values().flatten().all(|e| unit(e.1)));
    assert!(r.set_scores.iter().flatten().all(|e| unit(e.1)));
    assert!(r.final_scores.values().all(|&s| unit(s)));
    assert!(!r.final_scores.is_empty());
}

#[test]
fn whole_masks_outscore_and_suppress_their_fragments() {
    let mut spec = suites::perfect_scene(2);
    spec.primitives = vec![
        Primitive::Box { center: [-0.4, 0.0, 0.15], size: [0.3, 0.25, 0.3], yaw: 0.2 },
        Primitive::Box { center: [0.4, 0.1, 0.12], size: [0.25, 0.3, 0.24], yaw: 1.0 },
        Primitive::Cylinder { center: [0.0, 0.5, 0.15], radius: 0.1, height: 0.3 },
    ];
    spec.cameras.count = 8;
    spec.corruption.fragment_prob = 1.0;
    spec.corruption.keep_whole = true;
    spec.corruption.fragment_mode = FragmentMode::ImageAxis;
    let (bundle, gt) = generate(&spec).unwrap();
    let t = table(&bundle);
    let r = match_masks(&instance_segments(&gt), &bundle.frames, &t, 0.3, 0.9).unwrap();

    let mut compared = 0;
    for frame in &bundle.frames {
        for whole in &frame.masks {
            let MaskOrigin::Whole { instance } = origin(&gt, whole.id) else { continue };
            let Some(&ws) = r.final_scores.get(&whole.id) else { continue };
            for frag in &frame.masks {
                if matches!(origin(&gt, frag.id), MaskOrigin::Fragment { instance: i, .. } if i == instance) {
                    let fs = r.final_scores.get(&frag.id).copied().unwrap_or(0.0);
                    assert!(ws > fs, "whole {ws} vs fragment {fs}");
                    compared += 1;
                }
            }
        }
    }
    assert!(compared > 0);

    let maps = consistency_nms_and_refine_maps(&bundle.frames, &r.final_scores, bundle.config.consistency_nms_iou).unwrap();
    for map in &maps {
        assert!(!map.label_to_mask.is_empty());
        for &id in &map.label_to_mask {
            assert!(matches!(origin(&gt, id), MaskOrigin::Whole { .. }), "{id:?} survived");
        }
    }
}

#[test]
fn dropping_frames_never_adds_candidates() {
    let (bundle, gt) = generate(&suites::corrupted_scene(7, 6)).unwrap();
    let segments = instance_segments(&gt);
    let full_table = table(&bundle);
    let full = match_masks(&segments, &bundle.frames, &full_table, 0.3, 0.9).unwrap();
    for keep in [vec![0, 2, 4], vec![1], vec![5, 3]] {
        let frames: Vec<_> = keep.iter().map(|&i| bundle.frames[i].clone()).collect();
        let t = ProjectionTable { frames: keep.iter().map(|&i| full_table.frames[i].clone()).collect() };
        let part = match_masks(&segments, &frames, &t, 0.3, 0.9).unwrap();
        for (a, b) in part.candidate_sets.iter().zip(&full.candidate_sets) {
            let all: BTreeSet<MaskId> = b.iter().map(|c| c.mask).collect();
            assert!(a.iter().all(|c| all.contains(&c.mask)));
        }
    }
}

#[test]
fn thresholds_outside_the_open_interval_are_rejected() {
    let (bundle, gt) = generate(&suites::perfect_scene(0)).unwrap();
    let t = table(&bundle);
    let segments = instance_segments(&gt);
    assert!(match_masks(&segments, &bundle.frames, &t, 0.0, 0.9).is_err());
    assert!(match_masks(&segments, &bundle.frames, &t, 0.3, 1.0).is_err());
}
