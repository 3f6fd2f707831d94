use mvseg_core::affinity::build_graph;
use mvseg_core::evaluation::{evaluate_labels, EvalOptions};
use mvseg_core::pipeline::{coarse_maps, compute_superpoints, run, run_with_config};
use mvseg_core::projection::{build_projection_table, ProjectionTable};
use mvseg_core::scene::ValidatedScene;
use mvseg_core::synthetic::{generate, suites, Primitive};
use mvseg_core::{Bundle32, Config};

fn two_boxes() -> mvseg_core::Spec {
    let mut spec = suites::perfect_scene(0);
    spec.primitives = vec![
        Primitive::Box { center: [-0.35, 0.0, 0.15], size: [0.3, 0.25, 0.3], yaw: 0.2 },
        Primitive::Box { center: [0.35, 0.1, 0.12], size: [0.25, 0.3, 0.24], yaw: 1.0 },
    ];
    spec.cameras.count = 6;
    spec
}

/// True when both labelings induce the same partition of the points.
fn same_partition(a: &[i32], b: &[i32]) -> bool {
    let mut ab = std::collections::BTreeMap::new();
    let mut ba = std::collections::BTreeMap::new();
    a.iter().zip(b).all(|(x, y)| *ab.entry(*x).or_insert(*y) == *y && *ba.entry(*y).or_insert(*x) == *x)
}

#[test]
fn perfect_two_box_scene_is_recovered_exactly() {
    let (bundle, gt) = generate(&two_boxes()).unwrap();
    let result = run(&bundle).unwrap();
    assert!(same_partition(&result.labels, &gt.point_instance));
    let report = evaluate_labels::<f64>(&result.labels, &gt.point_instance, &EvalOptions::default()).unwrap();
    assert_eq!(report.map, 1.0);
    assert_eq!(result.final_state.region_count(), 2);
}

#[test]
fn result_invariants_and_stage_order() {
    let (bundle, _) = generate(&suites::corrupted_scene(1, 4)).unwrap();
    let r = run(&bundle).unwrap();
    assert_eq!(r.labels.len(), bundle.cloud.len());
    assert!(r.labels.iter().all(|&l| l >= 0));
    let mut distinct: Vec<i32> = r.labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    assert_eq!(distinct.len(), r.final_state.region_count());
    assert!(r.final_state.is_consistent() && r.coarse_state.is_consistent());
    let names: Vec<&str> = r.timings.stages.iter().map(|s| s.0.as_str()).collect();
    assert_eq!(
        names,
        ["superpoints", "projection", "coarse-maps", "coarse-graph", "region-growing", "matching", "refined-graph", "refinement"]
    );
    assert_eq!(r.refined_maps.len(), bundle.frames.len());
}

#[test]
fn fragmented_scene_full_pipeline_beats_coarse() {
    let (bundle, gt) = generate(&suites::corrupted_scene(0, 8)).unwrap();
    let r = run(&bundle).unwrap();
    let opts = EvalOptions::default();
    let coarse = evaluate_labels::<f64>(&r.coarse_labels, &gt.point_instance, &opts).unwrap().map;
    let full = evaluate_labels::<f64>(&r.labels, &gt.point_instance, &opts).unwrap().map;
    assert!(full > coarse, "full {full} coarse {coarse}");
    // some GT instance is split by the coarse stage
    assert!(!same_partition(&r.coarse_labels, &gt.point_instance));
}

#[test]
fn empty_masks_leave_every_superpoint_alone() {
    let (mut bundle, _) = generate(&two_boxes()).unwrap();
    for f in &mut bundle.frames {
        f.masks.clear();
    }
    let r = run(&bundle).unwrap();
    assert_eq!(r.final_state.region_count(), r.superpoints.len());
    assert!(r.coarse_graph.edges.is_empty());
}

#[test]
fn pipeline_is_deterministic_and_toggles_apply() {
    let (bundle, _) = generate(&suites::corrupted_scene(2, 4)).unwrap();
    let a = run(&bundle).unwrap();
    let b = run(&bundle).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.coarse_graph, b.coarse_graph);

    let off = Config { use_matching: false, use_refinement: false, ..bundle.config.clone() };
    let r = run_with_config(&bundle, &off).unwrap();
    assert!(r.matching.is_none());
    assert_eq!(r.labels, r.coarse_labels);
    assert_eq!(r.refined_maps, r.coarse_maps);
}

#[test]
fn invalid_config_is_rejected() {
    let (bundle, _) = generate(&two_boxes()).unwrap();
    let bad = Config { alpha: 0.0, ..Config::default() };
    assert!(run_with_config(&bundle, &bad).is_err());
}

#[test]
fn graph_ignores_frame_order() {
    let (bundle, _) = generate(&suites::corrupted_scene(5, 4)).unwrap();
    let scene = ValidatedScene::new(&bundle).unwrap();
    let (sps, adj) = compute_superpoints(&bundle.cloud, &bundle.config).unwrap();
    let table = build_projection_table(&scene, bundle.config.alpha, true);
    let maps = coarse_maps(&bundle.frames, bundle.config.nms_iou).unwrap();
    let forward = build_graph(&sps, &adj, &table, &maps);

    let reversed = ProjectionTable { frames: table.frames.iter().rev().cloned().collect() };
    let rev_maps: Vec<_> = maps.iter().rev().cloned().collect();
    let backward = build_graph(&sps, &adj, &reversed, &rev_maps);
    assert_eq!(forward, backward);
    assert!(forward.edges.keys().all(|&(a, b)| adj.contains(a, b)));
    assert!(forward.edges.values().all(|e| (0.0..=1.0).contains(&e.affinity)));
}

#[test]
fn f32_pipeline_recovers_a_perfect_scene() {
    let (bundle, gt) = generate(&two_boxes()).unwrap();
    let bundle32: Bundle32 = serde_json::from_value(serde_json::to_value(&bundle).unwrap()).unwrap();
    let r = run(&bundle32).unwrap();
    assert!(same_partition(&r.labels, &gt.point_instance));
    let report = evaluate_labels::<f32>(&r.labels, &gt.point_instance, &EvalOptions::default()).unwrap();
    assert_eq!(report.map, 1.0);
}
