use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ctda::data::AlignPolicy;
use ctda::equalizer::{EqualizerMode, LengthCriterion};
use ctda::fusion::CombiningMode;
use ctda::scenarios::SHIPPED_SEED;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "ctda",
    version,
    about = "Equalized data fusion and information-coupling analytics"
)]
pub struct Cli {
    /// Seed recorded in every output; drives all random generation.
    #[arg(long, global = true, default_value_t = SHIPPED_SEED)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Fit one equalizer per input series against the target.
    Fit(FitArgs),
    /// Fuse fitted equalizers and predict the test block.
    Infer(InferArgs),
    /// Multivariate OLS or Bayesian regression with a common lag window.
    Baseline(BaselineArgs),
    /// Solve the linear information coupling problem for a channel and source.
    Couple(CoupleArgs),
    /// Score a quantised image corpus and report the separation error.
    Score(ScoreArgs),
    /// Separation error against channel noise level on synthetic images.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SeriesArgs {
    /// Timestamp column in every series CSV.
    #[arg(long, default_value = "date")]
    pub time_col: String,
    /// Value column in every series CSV.
    #[arg(long, default_value = "value")]
    pub value_col: String,
    /// How to reconcile differing timestamps.
    #[arg(long, value_enum, default_value_t = AlignArg::Inner)]
    pub align: AlignArg,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Input series, comma separated; each CSV's file stem names the channel.
    #[arg(long, value_delimiter = ',', required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub max_length: usize,
    #[arg(long, value_enum, default_value_t = SelectArg::Validation)]
    pub select: SelectArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Infer)]
    pub mode: ModeArg,
    /// Fraction of aligned rows forming the training block.
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[command(flatten)]
    pub series: SeriesArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    /// Models file written by `fit`.
    #[arg(long)]
    pub models: PathBuf,
    /// Input series, comma separated, matched to models by file stem.
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value_t = FusionArg::Mrc)]
    pub fusion: FusionArg,
    /// Keep only the N channels with the smallest validation MSE.
    #[arg(long, conflicts_with = "select_threshold")]
    pub select_top: Option<usize>,
    /// Keep channels whose validation MSE is at most this value.
    #[arg(long)]
    pub select_threshold: Option<f64>,
    /// Refresh MRC weights from the trailing window of squared errors.
    #[arg(long)]
    pub online_window: Option<usize>,
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Predictions CSV: `date,y_true,y_hat,abs_err`.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON report with weights and per-channel errors.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BaselineArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Ols)]
    pub method: MethodArg,
    /// Lag window shared by every regressor.
    #[arg(long, default_value_t = 0)]
    pub lag: usize,
    /// Prior coefficient variance (bayes); defaults to 1.
    #[arg(long)]
    pub prior_var: Option<f64>,
    /// Noise variance (bayes); defaults to the OLS residual variance.
    #[arg(long)]
    pub noise_var: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[command(flatten)]
    pub series: SeriesArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON file for the fitted model.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CoupleArgs {
    /// Channel JSON: `{"outputs": .., "inputs": .., "matrix": [[..]]}`.
    #[arg(long)]
    pub channel: PathBuf,
    /// Source JSON: `{"probs": [..]}`.
    #[arg(long)]
    pub source: PathBuf,
    /// Perturbation size for the induced conditionals and local MI.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("noise").required(true).args(["channel_e", "channel"])))]
pub struct ScoreArgs {
    /// Images CSV: `label,p0,p1,...`.
    #[arg(long)]
    pub images: PathBuf,
    /// Noise level of the built-in four-symbol channel.
    #[arg(long)]
    pub channel_e: Option<f64>,
    /// Channel JSON file.
    #[arg(long)]
    pub channel: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScoreModeArg::Pooled)]
    pub mode: ScoreModeArg,
    /// Add 1/(n·K) to the empirical distribution before inversion.
    #[arg(long)]
    pub smooth: bool,
    /// Learn the source from these clean images instead of inverting the channel.
    #[arg(long)]
    pub clean_images: Option<PathBuf>,
    /// Image size as WxH.
    #[arg(long)]
    pub dims: Option<String>,
    /// Alphabet size; defaults to the largest symbol plus one.
    #[arg(long)]
    pub alphabet: Option<usize>,
    /// Scores CSV: `index,label,score`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// `start:stop:step` (inclusive) or a comma separated list.
    #[arg(long, default_value = "0:0.25:0.025")]
    pub e_grid: String,
    #[arg(long, value_enum, default_value_t = GenArg::TwoClass)]
    pub gen: GenArg,
    /// Class A symbol distribution.
    #[arg(long = "pA", default_value = "0.7,0.1,0.1,0.1")]
    pub p_a: String,
    /// Class B symbol distribution.
    #[arg(long = "pB", default_value = "0.1,0.1,0.1,0.7")]
    pub p_b: String,
    /// Images per class.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value = "19x19")]
    pub dims: String,
    /// Curve CSV: `e,error_probability,n_images,seed`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignArg {
    Inner,
    Ffill,
}

impl From<AlignArg> for AlignPolicy {
    fn from(a: AlignArg) -> Self {
        match a {
            AlignArg::Inner => AlignPolicy::Inner,
            AlignArg::Ffill => AlignPolicy::ForwardFill,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectArg {
    Validation,
    Aic,
}

impl From<SelectArg> for LengthCriterion {
    fn from(s: SelectArg) -> Self {
        match s {
            SelectArg::Validation => LengthCriterion::Validation,
            SelectArg::Aic => LengthCriterion::Aic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Infer,
    Predict,
}

impl From<ModeArg> for EqualizerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Infer => EqualizerMode::Infer,
            ModeArg::Predict => EqualizerMode::Predict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionArg {
    /// Inverse-MSE maximal ratio combining.
    Mrc,
    /// Least-squares combining weights.
    Lmmse,
    /// Equal-gain combining.
    Egc,
    /// Selective combining.
    Sel,
}

impl From<FusionArg> for CombiningMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Mrc => CombiningMode::MrcInverseMse,
            FusionArg::Lmmse => CombiningMode::MrcLmmse,
            FusionArg::Egc => CombiningMode::EqualGain,
            FusionArg::Sel => CombiningMode::Selective,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Ols,
    Bayes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreModeArg {
    Pooled,
    PerPixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenArg {
    TwoClass,
}
