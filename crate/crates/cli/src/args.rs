use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvseg_core::Config;

#[derive(Parser, Debug)]
#[command(name = "mvseg", version, about = "Multi-view 2D mask fusion into 3D instance segments")]
pub struct Cli {
    /// Worker threads; 0 picks one per core
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic scene directory with ground truth
    Synth(SynthArgs),
    /// Over-segment a point cloud into superpoints
    Superpoints(SuperpointsArgs),
    /// Write the score-NMS label map of every frame
    CoarseMaps(CoarseMapsArgs),
    /// Dump the sparse superpoint affinity graph as JSON lines
    Graph(GraphArgs),
    /// Grow coarse 3D segments from the coarse affinity graph
    Segment(StageArgs),
    /// Match coarse segments to masks and build refined label maps
    Match(MatchArgs),
    /// Reassign and merge segments using the refined maps
    Refine(RefineArgs),
    /// Run the whole pipeline
    Run(RunArgs),
    /// Score predicted labels against ground truth
    Evaluate(EvaluateArgs),
    /// Run the four-row component ablation
    Ablate(AblateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SceneArgs {
    /// Scene directory
    #[arg(long, value_name = "DIR")]
    pub scene: PathBuf,
    /// Pose files hold camera-to-world matrices
    #[arg(long)]
    pub camera_to_world: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CacheArgs {
    /// Recompute even when the output manifest matches the inputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Perfect,
    Corrupted,
    Layered,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene specification (JSON)
    #[arg(long, value_name = "FILE", required_unless_present = "preset", conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in scene instead of a specification file
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Seed of the preset scene
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Camera count of the corrupted and layered presets
    #[arg(long, default_value_t = 8)]
    pub cameras: usize,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SuperpointsArgs {
    /// Point cloud (binary PLY)
    #[arg(long, value_name = "FILE", required_unless_present = "scene", conflicts_with = "scene")]
    pub cloud: Option<PathBuf>,
    /// Scene directory whose cloud.ply and config.json are used
    #[arg(long, value_name = "DIR")]
    pub scene: Option<PathBuf>,
    /// Superpoint file to write; a JSON sidecar goes next to it
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct StageArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Precomputed superpoint file (one id per point)
    #[arg(long, value_name = "FILE")]
    pub superpoints: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct CoarseMapsArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct GraphArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Precomputed superpoint file (one id per point)
    #[arg(long, value_name = "FILE")]
    pub superpoints: Option<PathBuf>,
    /// Label maps to build the graph from (a coarse-maps or match output);
    /// coarse maps are computed when omitted
    #[arg(long, value_name = "DIR")]
    pub maps: Option<PathBuf>,
    /// Output file; standard output when omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Output directory of `segment`
    #[arg(long, value_name = "DIR")]
    pub segments: PathBuf,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Output directory of `segment`
    #[arg(long, value_name = "DIR")]
    pub segments: PathBuf,
    /// Refined maps: the `maps` directory written by `match`
    #[arg(long, value_name = "DIR")]
    pub refined_maps: PathBuf,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    /// Also evaluate against ground truth and print the report
    #[arg(long)]
    pub evaluate: bool,
    /// Ground-truth labels; defaults to gt.txt in the scene directory
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Args, Debug, Clone)]
#[command(next_help_heading = "Evaluation")]
pub struct EvalArgs {
    /// Ground-truth instances with fewer points are ignored
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub min_gt_points: usize,
    /// Precision-recall integration
    #[arg(long, value_enum, default_value_t = Integration::Envelope)]
    pub integration: Integration,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Integration {
    Envelope,
    Sampled101,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Predicted labels, one per line
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Ground-truth labels, one per line, -1 for unannotated points
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    /// Ground-truth labels; defaults to gt.txt in the scene directory
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

/// Every pipeline config key. Unset keys keep the value of the config file,
/// the scene's config.json, or the built-in default, in that order.
#[derive(Args, Debug, Clone, Default)]
#[command(next_help_heading = "Config")]
pub struct ConfigArgs {
    /// JSON file with pipeline config keys; replaces the scene's config.json
    #[arg(long = "config", value_name = "FILE")]
    pub file: Option<PathBuf>,
    /// Relative depth tolerance of the visibility test [default: 0.05]
    #[arg(long, value_name = "F")]
    pub alpha: Option<f64>,
    /// Frame-visibility threshold of candidate masks [default: 0.3]
    #[arg(long = "tau_f", alias = "tau-f", value_name = "F")]
    pub tau_f: Option<f64>,
    /// Mask-visibility threshold of candidate masks [default: 0.9]
    #[arg(long = "tau_m", alias = "tau-m", value_name = "F")]
    pub tau_m: Option<f64>,
    /// Affinity threshold for growing and merging regions [default: 0.5]
    #[arg(long = "tau_merge", alias = "tau-merge", value_name = "F")]
    pub tau_merge: Option<f64>,
    /// IoU threshold of the score-ordered mask NMS [default: 0.5]
    #[arg(long = "nms_iou", alias = "nms-iou", value_name = "F")]
    pub nms_iou: Option<f64>,
    /// IoU threshold of the consistency-ordered mask NMS [default: 0.5]
    #[arg(long = "consistency_nms_iou", alias = "consistency-nms-iou", value_name = "F")]
    pub consistency_nms_iou: Option<f64>,
    /// Iteration cap of boundary reassignment [default: 10]
    #[arg(long = "refine_max_iters", alias = "refine-max-iters", value_name = "N")]
    pub refine_max_iters: Option<usize>,
    /// Merge adjacent regions after reassignment [default: true]
    #[arg(long = "refine_merge", alias = "refine-merge", value_name = "BOOL")]
    pub refine_merge: Option<bool>,
    /// Neighbours per point in the k-NN graph [default: 12]
    #[arg(long = "k_graph", alias = "k-graph", value_name = "N")]
    pub k_graph: Option<usize>,
    /// Superpoint merge scale; larger gives bigger superpoints [default: 0.05]
    #[arg(long = "weight_scale", alias = "weight-scale", value_name = "F")]
    pub weight_scale: Option<f64>,
    /// Weight of normal disagreement in point edge costs [default: 0.5]
    #[arg(long = "normal_weight", alias = "normal-weight", value_name = "F")]
    pub normal_weight: Option<f64>,
    /// Smallest superpoint size in points [default: 20]
    #[arg(long = "min_size", alias = "min-size", value_name = "N")]
    pub min_size: Option<usize>,
    /// Seed recorded with the run [default: 0]
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Weight projections by depth agreement [default: true]
    #[arg(long = "use_depth_weights", alias = "use-depth-weights", value_name = "BOOL")]
    pub use_depth_weights: Option<bool>,
    /// Run multi-view mask matching [default: true]
    #[arg(long = "use_matching", alias = "use-matching", value_name = "BOOL")]
    pub use_matching: Option<bool>,
    /// Run region refinement [default: true]
    #[arg(long = "use_refinement", alias = "use-refinement", value_name = "BOOL")]
    pub use_refinement: Option<bool>,
}

impl ConfigArgs {
    /// Applies every set flag on top of `base`.
    pub fn apply(&self, mut c: Config) -> Config {
        macro_rules! set {
            ($($k:ident),*) => { $( if let Some(v) = self.$k { c.$k = v; } )* };
        }
        set!(
            alpha,
            tau_f,
            tau_m,
            tau_merge,
            nms_iou,
            consistency_nms_iou,
            refine_max_iters,
            refine_merge,
            k_graph,
            weight_scale,
            normal_weight,
            min_size,
            seed,
            use_depth_weights,
            use_matching,
            use_refinement
        );
        c
    }
}
