//! End-to-end coarse-to-fine segmentation of a scene bundle.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::affinity::{build_graph, AffinityGraph};
use crate::error::{Error, Result};
use crate::mask_store::{build_coarse_map, nms_by_score, SegmentationMap2D};
use crate::matching::{consistency_nms_and_refine_maps, match_masks, segment_points, MatchingResult};
use crate::projection::{build_projection_table, ProjectionTable};
use crate::refinement::{refine_and_merge, RefinementTrace};
use crate::region_growing::{grow, CountOverDistance, SegmentationState};
use crate::scalar::Scalar;
use crate::scene::{Frame, PipelineConfig, PointCloud, SceneBundle, ValidatedScene};
use crate::superpoint::{build_knn_graph_weighted, compute_adjacency, felzenszwalb_segment, Superpoint, SuperpointAdjacency};

/// Wall-clock milliseconds per stage, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stages: Vec<(String, f64)>,
}

impl StageTimings {
    fn time<R>(&mut self, name: &'static str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage { stage: name, source: Box::new(e) })?;
        self.stages.push((name.to_string(), start.elapsed().as_secs_f64() * 1e3));
        Ok(out)
    }

    pub fn total_ms(&self) -> f64 {
        self.stages.iter().map(|s| s.1).sum()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult<T: Scalar> {
    /// Final instance label per point.
    pub labels: Vec<i32>,
    /// Instance label per point after region growing.
    pub coarse_labels: Vec<i32>,
    pub superpoints: Vec<Superpoint<T>>,
    pub adjacency: SuperpointAdjacency,
    pub coarse_maps: Vec<SegmentationMap2D>,
    pub refined_maps: Vec<SegmentationMap2D>,
    pub coarse_graph: AffinityGraph<T>,
    pub refined_graph: AffinityGraph<T>,
    pub coarse_state: SegmentationState<T>,
    pub final_state: SegmentationState<T>,
    pub matching: Option<MatchingResult<T>>,
    pub trace: RefinementTrace,
    pub timings: StageTimings,
}

/// Superpoints and their adjacency.
pub fn compute_superpoints<T: Scalar>(
    cloud: &PointCloud<T>,
    config: &PipelineConfig<T>,
) -> Result<(Vec<Superpoint<T>>, SuperpointAdjacency)> {
    let k = config.k_graph.min(cloud.len().saturating_sub(1));
    let edges = build_knn_graph_weighted(cloud, k, config.normal_weight)?;
    let superpoints = felzenszwalb_segment(cloud, &edges, config.weight_scale, config.min_size);
    let adjacency = compute_adjacency(&superpoints, &edges, cloud.len());
    Ok((superpoints, adjacency))
}

/// Score-NMS coarse map of every frame, in frame order.
pub fn coarse_maps<T: Scalar>(frames: &[Frame<T>], nms_iou: T) -> Result<Vec<SegmentationMap2D>> {
    use rayon::prelude::*;
    frames
        .par_iter()
        .map(|f| {
            let survivors = nms_by_score(&f.masks, nms_iou)?;
            build_coarse_map(f.frame_id, f.intrinsics.width, f.intrinsics.height, &survivors)
        })
        .collect()
}

/// Adjacency of externally supplied superpoints over the cloud's k-NN graph.
pub fn superpoint_adjacency<T: Scalar>(
    cloud: &PointCloud<T>,
    superpoints: &[Superpoint<T>],
    config: &PipelineConfig<T>,
) -> Result<SuperpointAdjacency> {
    let k = config.k_graph.min(cloud.len().saturating_sub(1));
    let edges = build_knn_graph_weighted(cloud, k, config.normal_weight)?;
    Ok(compute_adjacency(superpoints, &edges, cloud.len()))
}

/// Region growing on the coarse graph.
pub fn grow_segments<T: Scalar>(
    superpoints: &[Superpoint<T>],
    adjacency: &SuperpointAdjacency,
    graph: &AffinityGraph<T>,
    config: &PipelineConfig<T>,
) -> SegmentationState<T> {
    grow(superpoints, adjacency, graph, config.tau_merge, &CountOverDistance::default())
}

/// Candidate sets and consistency scores for the coarse segments, and the
/// refined maps they induce.
pub fn match_segments<T: Scalar>(
    scene: &ValidatedScene<'_, T>,
    superpoints: &[Superpoint<T>],
    coarse_state: &SegmentationState<T>,
    table: &ProjectionTable<T>,
) -> Result<(MatchingResult<T>, Vec<SegmentationMap2D>)> {
    let config = &scene.config;
    let segments = segment_points(coarse_state, superpoints);
    let result = match_masks(&segments, &scene.frames, table, config.tau_f, config.tau_m)?;
    let maps = consistency_nms_and_refine_maps(&scene.frames, &result.final_scores, config.consistency_nms_iou)?;
    Ok((result, maps))
}

/// Boundary reassignment and region merging on the refined graph.
pub fn refine_segments<T: Scalar>(
    coarse_state: &SegmentationState<T>,
    superpoints: &[Superpoint<T>],
    adjacency: &SuperpointAdjacency,
    graph: &AffinityGraph<T>,
    config: &PipelineConfig<T>,
) -> (SegmentationState<T>, RefinementTrace) {
    refine_and_merge(
        coarse_state,
        superpoints,
        adjacency,
        graph,
        config.refine_max_iters,
        config.tau_merge,
        config.refine_merge,
        &CountOverDistance::default(),
    )
}

/// Runs every stage on a bundle with its own config.
pub fn run<T: Scalar>(bundle: &SceneBundle<T>) -> Result<PipelineResult<T>> {
    run_with_config(bundle, &bundle.config)
}

/// Runs every stage on a bundle, overriding its config.
pub fn run_with_config<T: Scalar>(bundle: &SceneBundle<T>, config: &PipelineConfig<T>) -> Result<PipelineResult<T>> {
    let mut checked = bundle.clone();
    checked.config = config.clone();
    let scene = ValidatedScene::new(&checked)?;
    run_validated(&scene)
}

pub fn run_validated<T: Scalar>(scene: &ValidatedScene<'_, T>) -> Result<PipelineResult<T>> {
    run_validated_with(scene, None)
}

/// Runs every stage, taking superpoints from `precomputed` when given.
pub fn run_validated_with<T: Scalar>(
    scene: &ValidatedScene<'_, T>,
    precomputed: Option<Vec<Superpoint<T>>>,
) -> Result<PipelineResult<T>> {
    let config = &scene.config;
    let mut timings = StageTimings::default();
    let n_points = scene.cloud.len();

    let (superpoints, adjacency) = timings.time("superpoints", || match precomputed {
        Some(sps) => {
            if let Some(sp) = sps.iter().find(|sp| sp.point_indices.iter().any(|&i| i as usize >= n_points)) {
                return Err(Error::InvalidParameter(format!("superpoint {} indexes past the cloud", sp.id)));
            }
            let adjacency = superpoint_adjacency(&scene.cloud, &sps, config)?;
            Ok((sps, adjacency))
        }
        None => compute_superpoints(&scene.cloud, config),
    })?;
    let table: ProjectionTable<T> =
        timings.time("projection", || Ok(build_projection_table(scene, config.alpha, config.use_depth_weights)))?;
    let coarse = timings.time("coarse-maps", || coarse_maps(&scene.frames, config.nms_iou))?;
    let coarse_graph = timings.time("coarse-graph", || Ok(build_graph(&superpoints, &adjacency, &table, &coarse)))?;
    let coarse_state =
        timings.time("region-growing", || Ok(grow_segments(&superpoints, &adjacency, &coarse_graph, config)))?;

    let (matching, refined_maps, refined_graph) = if config.use_matching {
        let (result, maps) = timings.time("matching", || match_segments(scene, &superpoints, &coarse_state, &table))?;
        let graph = timings.time("refined-graph", || Ok(build_graph(&superpoints, &adjacency, &table, &maps)))?;
        (Some(result), maps, graph)
    } else {
        (None, coarse.clone(), coarse_graph.clone())
    };

    let (final_state, trace) = if config.use_refinement {
        timings.time("refinement", || Ok(refine_segments(&coarse_state, &superpoints, &adjacency, &refined_graph, config)))?
    } else {
        (coarse_state.clone(), RefinementTrace::default())
    };

    Ok(PipelineResult {
        labels: final_state.point_labels(&superpoints, n_points),
        coarse_labels: coarse_state.point_labels(&superpoints, n_points),
        superpoints,
        adjacency,
        coarse_maps: coarse,
        refined_maps,
        coarse_graph,
        refined_graph,
        coarse_state,
        final_state,
        matching,
        trace,
        timings,
    })
}

/// The four cumulative component settings of an ablation: baseline,
/// +refinement, +matching, +depth weights.
pub fn ablation_configs<T: Scalar>(base: &PipelineConfig<T>) -> Vec<(&'static str, PipelineConfig<T>)> {
    let with = |refinement, matching, depth| PipelineConfig {
        use_refinement: refinement,
        use_matching: matching,
        use_depth_weights: depth,
        ..base.clone()
    };
    vec![
        ("baseline", with(false, false, false)),
        ("+refinement", with(true, false, false)),
        ("+matching", with(true, true, false)),
        ("+depth weights", with(true, true, true)),
    ]
}
