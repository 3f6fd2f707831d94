use std::path::{Path, PathBuf};

use mvseg_core::affinity::build_graph;
use mvseg_core::evaluation::{evaluate_labels, EvalOptions, PrIntegration};
use mvseg_core::io::bundle::{list_files, read_bundle, read_config, write_bundle, ReadOptions, CLOUD, GT};
use mvseg_core::io::labels::{read_labels, read_superpoints, sidecar, write_label_ply, write_labels, write_superpoints};
use mvseg_core::io::maps::{read_maps, write_maps};
use mvseg_core::io::ply::read_ply;
use mvseg_core::io::text::PoseConvention;
use mvseg_core::mask_store::SegmentationMap2D;
use mvseg_core::pipeline::{
    ablation_configs, coarse_maps, compute_superpoints, grow_segments, match_segments, refine_segments,
    run_validated_with, superpoint_adjacency,
};
use mvseg_core::projection::{build_projection_table, ProjectionTable};
use mvseg_core::region_growing::SegmentationState;
use mvseg_core::scene::ValidatedScene;
use mvseg_core::superpoint::{Superpoint, SuperpointAdjacency};
use mvseg_core::synthetic::{corruption_report, generate, suites};
use mvseg_core::{Bundle, Config, Report, Spec};

use crate::args::*;
use crate::cache::{Stage, MANIFEST};
use crate::Failure;

type Out<T = ()> = Result<T, Failure>;

pub fn dispatch(command: Command) -> Out {
    match command {
        Command::Synth(a) => synth(a),
        Command::Superpoints(a) => superpoints(a),
        Command::CoarseMaps(a) => coarse_maps_cmd(a),
        Command::Graph(a) => graph(a),
        Command::Segment(a) => segment(a),
        Command::Match(a) => match_cmd(a),
        Command::Refine(a) => refine(a),
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn data(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Out {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| data(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| data(path, e))
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Out {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    write_text(path, &s)
}

fn create_dir(dir: &Path) -> Out {
    std::fs::create_dir_all(dir).map_err(|e| data(dir, e))
}

fn load_scene(args: &SceneArgs) -> Out<Bundle> {
    let poses = if args.camera_to_world { PoseConvention::CameraToWorld } else { PoseConvention::WorldToCamera };
    let loaded = read_bundle(&args.scene, ReadOptions { poses })?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded.bundle)
}

/// Built-in defaults, then `base` (a scene's config.json), then a config
/// file, then flags.
fn resolve_config(base: Config, args: &ConfigArgs) -> Out<Config> {
    let config = match &args.file {
        Some(p) => read_config(p)?,
        None => base,
    };
    let config = args.apply(config);
    let bad = config.violations();
    if !bad.is_empty() {
        let list: Vec<String> = bad.iter().map(|v| v.to_string()).collect();
        return Err(Failure::Data(format!("invalid config: {}", list.join("; "))));
    }
    Ok(config)
}

/// Scene with its resolved config, plus the stage record keyed by both.
fn prepare(scene: &SceneArgs, config: &ConfigArgs) -> Out<Bundle> {
    let mut bundle = load_scene(scene)?;
    bundle.config = resolve_config(bundle.config.clone(), config)?;
    Ok(bundle)
}

fn validated(bundle: &Bundle) -> Out<ValidatedScene<'_, f64>> {
    Ok(ValidatedScene::new(bundle)?)
}

fn scene_stage(manifest: PathBuf, name: &'static str, scene: &SceneArgs, config: &Config) -> Out<Stage> {
    Stage::new(manifest, name).config(config).input_dir("scene", &scene.scene)
}

fn skip_if_cached(stage: &Stage, cache: &CacheArgs, what: &Path) -> bool {
    if !cache.force && stage.is_cached() {
        eprintln!("{}: up to date", what.display());
        true
    } else {
        false
    }
}

fn superpoints_for(
    bundle: &Bundle,
    file: Option<&Path>,
) -> Out<(Vec<Superpoint<f64>>, SuperpointAdjacency)> {
    match file {
        Some(p) => {
            let sps = read_superpoints(p, &bundle.cloud)?;
            let adjacency = superpoint_adjacency(&bundle.cloud, &sps, &bundle.config)?;
            Ok((sps, adjacency))
        }
        None => Ok(compute_superpoints(&bundle.cloud, &bundle.config)?),
    }
}

/// Superpoints and coarse state saved by `segment`.
fn load_segments(
    bundle: &Bundle,
    dir: &Path,
) -> Out<(Vec<Superpoint<f64>>, SuperpointAdjacency, SegmentationState<f64>)> {
    let sps = read_superpoints(&dir.join("superpoints.txt"), &bundle.cloud)?;
    let adjacency = superpoint_adjacency(&bundle.cloud, &sps, &bundle.config)?;
    let label_path = dir.join("labels.txt");
    let labels = read_labels(&label_path)?;
    if labels.len() != bundle.cloud.len() {
        return Err(data(&label_path, format!("{} labels for {} points", labels.len(), bundle.cloud.len())));
    }
    let mut assignment = Vec::with_capacity(sps.len());
    for sp in &sps {
        let r = labels[sp.point_indices[0] as usize];
        if r < 0 || sp.point_indices.iter().any(|&i| labels[i as usize] != r) {
            return Err(data(&label_path, format!("superpoint {} is not labelled as one segment", sp.id)));
        }
        assignment.push(r);
    }
    let state = SegmentationState::from_assignment(&sps, &assignment);
    Ok((sps, adjacency, state))
}

fn check_maps(maps: &[SegmentationMap2D], table: &ProjectionTable<f64>, dir: &Path) -> Out {
    let ids: Vec<u32> = maps.iter().map(|m| m.frame_id).collect();
    let want: Vec<u32> = table.frames.iter().map(|f| f.frame_id).collect();
    if ids != want {
        return Err(data(dir, format!("maps cover frames {ids:?}, the scene has {want:?}")));
    }
    Ok(())
}

fn write_labelled(out: &Path, name: &str, bundle: &Bundle, labels: &[i32]) -> Out<Vec<PathBuf>> {
    let txt = PathBuf::from(format!("{name}.txt"));
    let ply = PathBuf::from(format!("{name}.ply"));
    write_labels(&out.join(&txt), labels)?;
    write_label_ply(&out.join(&ply), &bundle.cloud.positions, labels)?;
    Ok(vec![txt, ply])
}

fn region_count(labels: &[i32]) -> usize {
    let mut l: Vec<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
    l.sort_unstable();
    l.dedup();
    l.len()
}

fn synth(a: SynthArgs) -> Out {
    let (spec, stage): (Spec, Stage) = match (&a.spec, a.preset) {
        (Some(path), _) => {
            let bytes = std::fs::read(path).map_err(|e| data(path, e))?;
            let spec = serde_json::from_slice(&bytes).map_err(|e| data(path, format!("invalid scene spec: {e}")))?;
            (spec, Stage::new(a.out.join(MANIFEST), "synth").input_file("spec", path)?)
        }
        (None, Some(preset)) => {
            let spec = match preset {
                Preset::Perfect => suites::perfect_scene(a.seed),
                Preset::Corrupted => suites::corrupted_scene(a.seed, a.cameras),
                Preset::Layered => suites::layered_planes(0.08, a.cameras),
            };
            (spec, Stage::new(a.out.join(MANIFEST), "synth"))
        }
        (None, None) => return Err(Failure::Usage("one of --spec or --preset is required".into())),
    };
    let stage = stage.config(&spec);
    let (bundle, gt) = generate(&spec)?;
    create_dir(&a.out)?;
    write_bundle(&a.out, &bundle)?;
    write_labels(&a.out.join(GT), &gt.point_instance)?;
    let outputs: Vec<PathBuf> = list_files(&a.out)?.into_iter().filter(|p| p.as_os_str() != MANIFEST).collect();
    stage.finish(&outputs)?;
    let report = corruption_report(&bundle, &gt);
    eprintln!(
        "{}: {} points, {} frames, {} masks ({} fragmented, {} merged, {} dropped)",
        a.out.display(),
        bundle.cloud.len(),
        bundle.frames.len(),
        report.masks_per_frame.iter().sum::<usize>(),
        report.fragmented,
        report.merged,
        report.dropped
    );
    Ok(())
}

fn superpoints(a: SuperpointsArgs) -> Out {
    let (cloud_path, base) = match (&a.cloud, &a.scene) {
        (Some(c), _) => (c.clone(), Config::default()),
        (None, Some(dir)) => {
            let cfg_path = dir.join(mvseg_core::io::bundle::CONFIG);
            let base = if cfg_path.exists() { read_config(&cfg_path)? } else { Config::default() };
            (dir.join(CLOUD), base)
        }
        (None, None) => return Err(Failure::Usage("one of --cloud or --scene is required".into())),
    };
    let config = resolve_config(base, &a.config)?;
    let manifest = {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    };
    let stage = Stage::new(manifest, "superpoints").config(&config).input_file("cloud", &cloud_path)?;
    if skip_if_cached(&stage, &a.cache, &a.out) {
        return Ok(());
    }
    let cloud = read_ply(&cloud_path)?;
    let (sps, adjacency) = compute_superpoints(&cloud, &config)?;
    write_superpoints(&a.out, &sps, cloud.len())?;
    let name = |p: &Path| PathBuf::from(p.file_name().expect("output file name"));
    stage.finish(&[name(&a.out), name(&sidecar(&a.out))])?;
    eprintln!("{} superpoints, {} adjacent pairs", sps.len(), adjacency.edge_count());
    Ok(())
}

fn coarse_maps_cmd(a: CoarseMapsArgs) -> Out {
    let bundle = prepare(&a.scene, &a.config)?;
    let stage = scene_stage(a.out.join(MANIFEST), "coarse-maps", &a.scene, &bundle.config)?;
    if skip_if_cached(&stage, &a.cache, &a.out) {
        return Ok(());
    }
    let scene = validated(&bundle)?;
    let maps = coarse_maps(&scene.frames, scene.config.nms_iou)?;
    write_maps(&a.out, &maps)?;
    let outputs: Vec<PathBuf> = list_files(&a.out)?.into_iter().filter(|p| p.as_os_str() != MANIFEST).collect();
    stage.finish(&outputs)
}

fn graph(a: GraphArgs) -> Out {
    let bundle = prepare(&a.scene, &a.config)?;
    let scene = validated(&bundle)?;
    let (sps, adjacency) = superpoints_for(&bundle, a.superpoints.as_deref())?;
    let table = build_projection_table(&scene, scene.config.alpha, scene.config.use_depth_weights);
    let maps = match &a.maps {
        Some(dir) => {
            let maps = read_maps(dir)?;
            check_maps(&maps, &table, dir)?;
            maps
        }
        None => coarse_maps(&scene.frames, scene.config.nms_iou)?,
    };
    let lines = build_graph(&sps, &adjacency, &table, &maps).to_json_lines();
    match &a.out {
        Some(p) => write_text(p, &lines),
        None => {
            print!("{lines}");
            Ok(())
        }
    }
}

fn segment(a: StageArgs) -> Out {
    let bundle = prepare(&a.scene, &a.config)?;
    let mut stage = scene_stage(a.out.join(MANIFEST), "segment", &a.scene, &bundle.config)?;
    if let Some(p) = &a.superpoints {
        stage = stage.input_file("superpoints", p)?;
    }
    if skip_if_cached(&stage, &a.cache, &a.out) {
        return Ok(());
    }
    let scene = validated(&bundle)?;
    let (sps, adjacency) = superpoints_for(&bundle, a.superpoints.as_deref())?;
    let table = build_projection_table(&scene, scene.config.alpha, scene.config.use_depth_weights);
    let maps = coarse_maps(&scene.frames, scene.config.nms_iou)?;
    let graph = build_graph(&sps, &adjacency, &table, &maps);
    let state = grow_segments(&sps, &adjacency, &graph, &scene.config);
    let labels = state.point_labels(&sps, bundle.cloud.len());
    create_dir(&a.out)?;
    let sp_file = a.out.join("superpoints.txt");
    write_superpoints(&sp_file, &sps, bundle.cloud.len())?;
    let mut outputs = vec![PathBuf::from("superpoints.txt"), PathBuf::from("superpoints.txt.json")];
    outputs.extend(write_labelled(&a.out, "labels", &bundle, &labels)?);
    stage.finish(&outputs)?;
    eprintln!("{} superpoints grown into {} segments", sps.len(), state.region_count());
    Ok(())
}

fn match_cmd(a: MatchArgs) -> Out {
    let bundle = prepare(&a.scene, &a.config)?;
    let stage = scene_stage(a.out.join(MANIFEST), "match", &a.scene, &bundle.config)?.input_dir("segments", &a.segments)?;
    if skip_if_cached(&stage, &a.cache, &a.out) {
        return Ok(());
    }
    let scene = validated(&bundle)?;
    let (sps, _, state) = load_segments(&bundle, &a.segments)?;
    let table = build_projection_table(&scene, scene.config.alpha, scene.config.use_depth_weights);
    let (result, maps) = match_segments(&scene, &sps, &state, &table)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("report.json"), &result.report_json())?;
    write_maps(&a.out.join("maps"), &maps)?;
    let outputs: Vec<PathBuf> = list_files(&a.out)?.into_iter().filter(|p| p.as_os_str() != MANIFEST).collect();
    stage.finish(&outputs)?;
    eprintln!("{} masks scored", result.final_scores.len());
    Ok(())
}

fn refine(a: RefineArgs) -> Out {
    let bundle = prepare(&a.scene, &a.config)?;
    let stage = scene_stage(a.out.join(MANIFEST), "refine", &a.scene, &bundle.config)?
        .input_dir("segments", &a.segments)?
        .input_dir("refined_maps", &a.refined_maps)?;
    if skip_if_cached(&stage, &a.cache, &a.out) {
        return Ok(());
    }
    let scene = validated(&bundle)?;
    let (sps, adjacency, state) = load_segments(&bundle, &a.segments)?;
    let table = build_projection_table(&scene, scene.config.alpha, scene.config.use_depth_weights);
    let maps = read_maps(&a.refined_maps)?;
    check_maps(&maps, &table, &a.refined_maps)?;
    let graph = build_graph(&sps, &adjacency, &table, &maps);
    let (fin, trace) = refine_segments(&state, &sps, &adjacency, &graph, &scene.config);
    let labels = fin.point_labels(&sps, bundle.cloud.len());
    create_dir(&a.out)?;
    let mut outputs = write_labelled(&a.out, "labels", &bundle, &labels)?;
    write_json(&a.out.join("trace.json"), &trace)?;
    outputs.push("trace.json".into());
    stage.finish(&outputs)?;
    eprintln!(
        "{} moves in {} iterations, {} merges, {} segments",
        trace.total_moves(),
        trace.iterations.len(),
        trace.merges.len(),
        fin.region_count()
    );
    Ok(())
}

fn eval_options(a: &EvalArgs) -> EvalOptions {
    let integration = match a.integration {
        Integration::Envelope => PrIntegration::Envelope,
        Integration::Sampled101 => PrIntegration::Sampled101,
    };
    EvalOptions { min_gt_points: a.min_gt_points, integration }
}

fn report_text(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn score(pred: &[i32], gt_path: &Path, options: &EvalOptions) -> Out<Report> {
    let gt = read_labels(gt_path)?;
    evaluate_labels(pred, &gt, options).map_err(|e| data(gt_path, e))
}

fn gt_path(explicit: &Option<PathBuf>, scene: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| scene.join(GT))
}

fn run(a: RunArgs) -> Out {
    let s = &a.stage;
    let bundle = prepare(&s.scene, &s.config)?;
    let mut stage = scene_stage(s.out.join(MANIFEST), "run", &s.scene, &bundle.config)?;
    if let Some(p) = &s.superpoints {
        stage = stage.input_file("superpoints", p)?;
    }
    if !skip_if_cached(&stage, &s.cache, &s.out) {
        let scene = validated(&bundle)?;
        let precomputed = match &s.superpoints {
            Some(p) => Some(read_superpoints(p, &bundle.cloud)?),
            None => None,
        };
        let result = run_validated_with(&scene, precomputed)?;
        create_dir(&s.out)?;
        let mut outputs = write_labelled(&s.out, "labels", &bundle, &result.labels)?;
        write_labels(&s.out.join("coarse_labels.txt"), &result.coarse_labels)?;
        write_json(&s.out.join("trace.json"), &result.trace)?;
        write_json(&s.out.join("config.json"), &bundle.config)?;
        outputs.extend(["coarse_labels.txt".into(), "trace.json".into(), "config.json".into()]);
        // timings differ between runs, so they are not part of the manifest
        write_json(&s.out.join("timings.json"), &result.timings)?;
        stage.finish(&outputs)?;
        eprintln!(
            "{} superpoints, {} coarse segments, {} final segments in {:.0} ms",
            result.superpoints.len(),
            result.coarse_state.region_count(),
            result.final_state.region_count(),
            result.timings.total_ms()
        );
    }
    if a.evaluate {
        let labels = read_labels(&s.out.join("labels.txt"))?;
        let report = score(&labels, &gt_path(&a.gt, &s.scene.scene), &eval_options(&a.eval))?;
        let text = report_text(&report);
        write_text(&s.out.join("eval.json"), &text)?;
        print!("{text}");
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Out {
    let pred = read_labels(&a.pred)?;
    let report = score(&pred, &a.gt, &eval_options(&a.eval))?;
    print!("{}", report_text(&report));
    Ok(())
}

#[derive(serde::Serialize)]
struct AblationRow {
    setting: &'static str,
    use_refinement: bool,
    use_matching: bool,
    use_depth_weights: bool,
    segments: usize,
    #[serde(rename = "mAP")]
    map: Option<f64>,
    #[serde(rename = "AP50")]
    ap50: Option<f64>,
    #[serde(rename = "AP25")]
    ap25: Option<f64>,
}

fn ablate(a: AblateArgs) -> Out {
    let s = &a.stage;
    let bundle = prepare(&s.scene, &s.config)?;
    let gt = gt_path(&a.gt, &s.scene.scene);
    let gt = (a.gt.is_some() || gt.exists()).then_some(gt);
    let precomputed = match &s.superpoints {
        Some(p) => Some(read_superpoints(p, &bundle.cloud)?),
        None => None,
    };
    let options = eval_options(&a.eval);
    let mut rows = Vec::new();
    for (setting, config) in ablation_configs(&bundle.config) {
        let mut b = bundle.clone();
        b.config = config;
        let scene = validated(&b)?;
        let result = run_validated_with(&scene, precomputed.clone())?;
        let report = match &gt {
            Some(p) => Some(score(&result.labels, p, &options)?),
            None => None,
        };
        rows.push(AblationRow {
            setting,
            use_refinement: b.config.use_refinement,
            use_matching: b.config.use_matching,
            use_depth_weights: b.config.use_depth_weights,
            segments: region_count(&result.labels),
            map: report.as_ref().map(|r| r.map),
            ap50: report.as_ref().map(|r| r.ap50),
            ap25: report.as_ref().map(|r| r.ap25),
        });
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut table = format!("{:<16}{:>10}{:>10}{:>10}{:>10}\n", "setting", "segments", "mAP", "AP50", "AP25");
    for r in &rows {
        table += &format!("{:<16}{:>10}{:>10}{:>10}{:>10}\n", r.setting, r.segments, fmt(r.map), fmt(r.ap50), fmt(r.ap25));
    }
    create_dir(&s.out)?;
    write_json(&s.out.join("ablation.json"), &rows)?;
    write_text(&s.out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}
