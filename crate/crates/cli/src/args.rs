use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "circuitrec", version, about = "Detect and recognize circuit components in photos")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Region proposals as JSON-lines (label "?").
    Propose(ProposeCmd),
    /// Export box crops for manual sorting.
    Crop(CropCmd),
    /// Train the CNN on a train/test crop folder.
    TrainCnn(TrainCnnCmd),
    /// Train the SVM baseline on a train/test crop folder.
    TrainSvm(TrainSvmCmd),
    /// Full pipeline: proposals, crops, CNN labels.
    Detect(DetectCmd),
    /// ABO/MABO and final accuracy against annotations.
    Eval(EvalCmd),
    /// Stage timings.
    Bench(BenchCmd),
    /// Finite-difference gradient verification of the CNN.
    Gradcheck(GradcheckCmd),
    /// Draw detections onto a photo.
    Render(RenderCmd),
    /// Generate synthetic scenes and crop folders.
    Synth(SynthCmd),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProposalArgs {
    /// rgb, hsv or lab.
    #[arg(long)]
    pub color_space: Option<String>,
    /// Comma-separated subset of color,size,fill.
    #[arg(long)]
    pub sim: Option<String>,
    /// Long side of the proposal thumbnail.
    #[arg(long)]
    pub thumb_long: Option<usize>,
    #[arg(long)]
    pub merge_threshold: Option<f64>,
    #[arg(long)]
    pub min_box_frac: Option<f64>,
    #[arg(long)]
    pub max_box_frac: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub min_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CnnArgs {
    /// 150, 200 or 300.
    #[arg(long)]
    pub input_size: Option<usize>,
    #[arg(long)]
    pub fc1_bias: Option<bool>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SvmArgs {
    /// raw, aspect-hue, color or censure.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub svm_epochs: Option<usize>,
    #[arg(long)]
    pub svm_lr: Option<f64>,
    #[arg(long)]
    pub svm_reg: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProposeCmd {
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    #[command(flatten)]
    pub proposal: ProposalArgs,
    /// Write JSON-lines here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dump each segmentation as a color-coded PNG into this directory.
    #[arg(long)]
    pub debug_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CropCmd {
    /// Photos to propose on (ignored with --annotations).
    pub images: Vec<PathBuf>,
    /// Crop the boxes of this JSON-lines file instead of proposing.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub proposal: ProposalArgs,
}

#[derive(Debug, Args)]
pub struct TrainCnnCmd {
    /// Dataset root holding train/<class>/ and test/<class>/.
    #[arg(long)]
    pub data: PathBuf,
    /// Weight file to write.
    #[arg(long, default_value = "cnn.bin")]
    pub out: PathBuf,
    /// Per-epoch loss/accuracy CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub cnn: CnnArgs,
}

#[derive(Debug, Args)]
pub struct TrainSvmCmd {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "svm.bin")]
    pub out: PathBuf,
    #[command(flatten)]
    pub svm: SvmArgs,
}

#[derive(Debug, Args)]
pub struct DetectCmd {
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// CNN weight file.
    #[arg(long)]
    pub model: PathBuf,
    /// Keep proposals classified as "blank".
    #[arg(long)]
    pub keep_blank: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub proposal: ProposalArgs,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    /// Ground-truth JSON-lines.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Proposal JSON-lines (for ABO/MABO).
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    /// Detection JSON-lines (for final accuracy).
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub iou: Option<f64>,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Exit with status 3 when MABO falls below this.
    #[arg(long)]
    pub min_mabo: Option<f64>,
    /// Exit with status 3 when final accuracy falls below this.
    #[arg(long)]
    pub min_accuracy: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchCmd {
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Timed repetitions per image (after one warm-up).
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Also time CNN classification of the proposals.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub proposal: ProposalArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckCmd {
    /// Check the network without ReLU and pooling.
    #[arg(long)]
    pub linear: bool,
    /// Include dropout layers with fixed masks.
    #[arg(long)]
    pub dropout: bool,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Fail when the max relative error reaches this.
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct RenderCmd {
    pub image: PathBuf,
    /// Detection JSON-lines; the entry matching the image is drawn.
    #[arg(long, conflicts_with = "model")]
    pub detections: Option<PathBuf>,
    /// Run detection with this CNN weight file instead.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub proposal: ProposalArgs,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of scenes.
    #[arg(long, default_value_t = 10)]
    pub scenes: usize,
    /// Solid-color crops per class and split (0 skips the crop folders).
    #[arg(long, default_value_t = 0)]
    pub crops: usize,
    /// Per-pixel background noise amplitude.
    #[arg(long, default_value_t = 0)]
    pub noise: i32,
}
