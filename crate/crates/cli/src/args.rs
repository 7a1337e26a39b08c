use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Lattice;
use crate::config::KeyValues;
use crate::suite::Suite;

#[derive(Debug, Parser)]
#[command(name = "featseg", version, about = "Feature-based multi-phase image segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment an image into k regions.
    Segment(SegmentArgs),
    /// Generate a synthetic image with its ground-truth label map.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Score a predicted label map against ground truth.
    Eval(EvalArgs),
    /// Run the acceptance suite and report one line per criterion.
    Reproduce(ReproduceArgs),
}

/// Flags override values from `--config`, which override defaults. Values
/// are validated together once merged.
#[derive(Debug, Args, Default)]
pub struct SegmentArgs {
    /// `key = value` settings file (a run manifest works too).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<String>,
    /// Prefix for the output files.
    #[arg(long)]
    pub output: Option<String>,
    /// `spectral-hist` or `fft-mod`.
    #[arg(long)]
    pub features: Option<String>,
    /// Number of segments.
    #[arg(long)]
    pub k: Option<String>,
    /// Estimate the number of segments with this spectral threshold.
    #[arg(long)]
    pub estimate_omega: Option<String>,
    /// PCA components kept (default: k, or the estimate).
    #[arg(long)]
    pub components: Option<String>,
    /// Boundary length weight.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Edgeness threshold, relative to the mean, for clustering points.
    #[arg(long)]
    pub delta: Option<String>,
    /// Window half-width, optionally `s:weight`; repeat to stack scales.
    #[arg(long)]
    pub s: Vec<String>,
    /// `mirror` or `clamp`.
    #[arg(long)]
    pub padding: Option<String>,
    /// Histogram bins per filter.
    #[arg(long)]
    pub bins: Option<String>,
    /// Comma-separated Gabor filter sizes in pixels.
    #[arg(long)]
    pub gabor_sizes: Option<String>,
    /// Comma-separated Gabor orientations in degrees.
    #[arg(long)]
    pub gabor_orientations: Option<String>,
    /// Add the raw intensity to the filter bank.
    #[arg(long)]
    pub intensity_filter: bool,
    #[arg(long)]
    pub outer_iters: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub t_max: Option<String>,
    /// k-means restarts.
    #[arg(long)]
    pub restarts: Option<String>,
    #[arg(long)]
    pub lloyd_iters: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
}

impl SegmentArgs {
    /// Flag values as key-values, using the config file key names.
    pub fn flag_values(&self) -> KeyValues {
        let mut map = KeyValues::new();
        let mut put = |key: &str, v: &Option<String>| {
            if let Some(v) = v {
                map.insert(key.to_string(), v.clone());
            }
        };
        put("input", &self.input);
        put("output", &self.output);
        put("features", &self.features);
        put("k", &self.k);
        put("estimate-omega", &self.estimate_omega);
        put("components", &self.components);
        put("lambda", &self.lambda);
        put("delta", &self.delta);
        put("padding", &self.padding);
        put("bins", &self.bins);
        put("gabor-sizes", &self.gabor_sizes);
        put("gabor-orientations", &self.gabor_orientations);
        put("outer-iters", &self.outer_iters);
        put("sigma", &self.sigma);
        put("tau", &self.tau);
        put("theta", &self.theta);
        put("epsilon", &self.epsilon);
        put("t-max", &self.t_max);
        put("restarts", &self.restarts);
        put("lloyd-iters", &self.lloyd_iters);
        put("seed", &self.seed);
        if !self.s.is_empty() {
            map.insert("s".into(), self.s.join(","));
        }
        if self.intensity_filter {
            map.insert("intensity-filter".into(), "true".into());
        }
        map
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LatticeArg {
    Square,
    Hex,
}

impl From<LatticeArg> for Lattice {
    fn from(l: LatticeArg) -> Self {
        match l {
            LatticeArg::Square => Lattice::Square,
            LatticeArg::Hex => Lattice::Hexagonal,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Atomic lattice grains with Gaussian atoms.
    Crystal(CrystalArgs),
    /// Voronoi mosaic of oriented cosine gratings.
    Mosaic(MosaicArgs),
}

#[derive(Debug, Args)]
pub struct CrystalArgs {
    /// Prefix for `<prefix>_image.png` and `<prefix>_truth.png`.
    #[arg(long)]
    pub output: PathBuf,
    /// Side length in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Two grains split at the centre column; more grains use a Voronoi layout.
    #[arg(long, default_value_t = 2)]
    pub grains: usize,
    /// Rotation of the second grain in degrees.
    #[arg(long)]
    pub rotation: Option<f64>,
    /// Noise standard deviation as a fraction of the maximum intensity.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lattice spacing in pixels.
    #[arg(long, default_value_t = 8.0)]
    pub period: f64,
    #[arg(long, value_enum, default_value_t = LatticeArg::Square)]
    pub lattice: LatticeArg,
    /// Use a different lattice for the second grain.
    #[arg(long, value_enum)]
    pub second_lattice: Option<LatticeArg>,
}

#[derive(Debug, Args)]
pub struct MosaicArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    #[arg(long, default_value_t = 5)]
    pub regions: usize,
    /// Grating period in pixels.
    #[arg(long, default_value_t = 8.0)]
    pub period: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Overlap fraction for the correct-segmentation rate.
    #[arg(long, default_value_t = 0.75)]
    pub overlap: f64,
    /// Also write the scores as `metric,value` rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SuiteArg {
    All,
    Operators,
    Crystal,
    Texture,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::All => Suite::All,
            SuiteArg::Operators => Suite::Operators,
            SuiteArg::Crystal => Suite::Crystal,
            SuiteArg::Texture => Suite::Texture,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    pub suite: SuiteArg,
    /// Write the summary table here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Directory for intermediate files (default: a fresh temporary directory).
    #[arg(long)]
    pub workdir: Option<PathBuf>,
}
