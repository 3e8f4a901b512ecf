//! `hasr`: every pipeline stage from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Machine-readable
//! output goes to stdout, diagnostics to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hasr", version, about = "Hindi speech-corpus workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhoneFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    /// Unfreeze trainable layers one at a time from the bottom.
    BottomUp,
    /// Train every trainable layer from the first step.
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mix down to mono and decimate a PCM16 WAV file.
    Resample(ResampleArgs),
    /// Detect speech segments.
    Vad(VadArgs),
    /// Spell out numbers and expand abbreviations.
    Normalize(NormalizeArgs),
    /// Phonemes for Devanagari words.
    G2p(G2pArgs),
    /// Build a pronunciation lexicon from a word list.
    Lexicon(LexiconArgs),
    /// Log mel-band energies, one row per frame.
    Features(FeaturesArgs),
    /// Train the alignment network on labeled frames.
    Train(TrainArgs),
    /// Adapt a trained network to unlabeled frames with a co-activation prior.
    Adapt(AdaptArgs),
    /// Force-align a sentence against audio.
    Align(AlignArgs),
    /// Run the transcript-correction server.
    Serve(ServeArgs),
    /// Add a user account to a data directory.
    Useradd(UseraddArgs),
    /// Bulk import transcripts from a manifest.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 16_000)]
    pub rate: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VadArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Window length in samples.
    #[arg(long, default_value_t = 400)]
    pub window: usize,
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f32,
    /// Trailing windows kept after each speech run.
    #[arg(long, default_value_t = 4)]
    pub hangover: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Also write the concatenated speech segments here.
    #[arg(long)]
    pub gate: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Input text file; stdin when omitted.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Spell out digit runs.
    #[arg(long)]
    pub numbers: bool,
    /// Expand abbreviations, optionally from a `abbr<TAB>expansion` table.
    #[arg(long, num_args = 0..=1, value_name = "TABLE")]
    pub abbrev: Option<Option<PathBuf>>,
}

#[derive(Debug, Args)]
pub struct G2pArgs {
    #[arg(long = "word", required = true)]
    pub words: Vec<String>,
    #[arg(long, value_enum, default_value_t = PhoneFormat::Text)]
    pub format: PhoneFormat,
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    /// Whitespace-separated words.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub bands: usize,
    #[arg(long, default_value_t = 400)]
    pub window: usize,
    #[arg(long, default_value_t = 160)]
    pub shift: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// With `--format tsv`, prefix every row with this class label,
    /// giving a file `train` accepts.
    #[arg(long)]
    pub label: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `label<TAB>v1 v2 ...` rows.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hidden width when `--dims` is not given.
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Eight comma-separated widths: input then each layer's output.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Comma-separated phone list; the output layer must have 1 + 3P states.
    #[arg(long, value_delimiter = ',')]
    pub phones: Option<Vec<String>>,
    /// Prior used by the co-activation term when `--lambda` > 0.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Collect a prior from the trained network on the training frames.
    #[arg(long)]
    pub prior_out: Option<PathBuf>,
    /// Layers monitored by `--prior-out`.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0, 1, 2, 3, 4, 5])]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub ridge: f64,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub prior: PathBuf,
    /// Feature rows, optionally prefixed by `label<TAB>` (labels are ignored).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Schedule::BottomUp)]
    pub schedule: Schedule,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Words not listed fall back to rule-based G2P.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long)]
    pub audio: PathBuf,
    /// Do not frame the utterance with silence.
    #[arg(long)]
    pub no_silence: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "HASR_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "HASR_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "HASR_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "HASR_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub abbrev: Option<PathBuf>,
    #[arg(long, default_value_t = 12 * 3600)]
    pub session_ttl_secs: u64,
}

#[derive(Debug, Args)]
pub struct UseraddArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub user: String,
    #[arg(long)]
    pub language: String,
    /// Read the password from the first line of stdin instead.
    #[arg(long, conflicts_with = "password_stdin", required_unless_present = "password_stdin")]
    pub password: Option<String>,
    #[arg(long)]
    pub password_stdin: bool,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `doc_id<TAB>audio_filename<TAB>transcript_path` lines.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub language: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Resample(a) => commands::resample(a),
        Command::Vad(a) => commands::vad(a),
        Command::Normalize(a) => commands::normalize(a),
        Command::G2p(a) => commands::g2p(a),
        Command::Lexicon(a) => commands::lexicon(a),
        Command::Features(a) => commands::features(a),
        Command::Train(a) => commands::train(a),
        Command::Adapt(a) => commands::adapt(a),
        Command::Align(a) => commands::align(a),
        Command::Serve(a) => commands::serve(a),
        Command::Useradd(a) => commands::useradd(a),
        Command::Import(a) => commands::import(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hasr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
