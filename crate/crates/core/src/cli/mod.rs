//! Batch pipeline behind the `earcanal` command: JSON configuration,
//! deterministic artifacts and a hashed manifest per run.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::acoustics::AcousticsError;
use crate::geometry::GeometryError;
use crate::registration::RegistrationError;
use crate::ssm::SsmError;

mod config;
mod manifest;
mod stages;

pub use config::{AcousticsOptions, DrumModel, PipelineConfig, SsmOptions, SyntheticPopulation};
pub use manifest::{sha256_hex, write_atomic, Manifest, ManifestEntry, MANIFEST_NAME};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot use input {}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl PipelineError {
    pub(crate) fn input(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// 1 for configuration and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical(_) => 2,
            _ => 1,
        }
    }
}

macro_rules! numerical {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                Self::Numerical(e.to_string())
            }
        }
    )*};
}
numerical!(GeometryError, RegistrationError, SsmError, AcousticsError);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    /// Generate the synthetic population.
    Synth,
    /// Register every subject to the first one.
    Register,
    /// Build the groupwise template.
    Atlas,
    /// Template, correspondences and the shape model.
    Ssm,
    /// FEM input impedance of one canal.
    ImpedanceFem,
    /// Horn-model input impedance of every subject.
    ImpedanceHorn,
    /// Align curves to the reference plane and average them.
    Average,
    /// Everything, in order.
    Full,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::Synth => "synth",
            Self::Register => "register",
            Self::Atlas => "atlas",
            Self::Ssm => "ssm",
            Self::ImpedanceFem => "impedance-fem",
            Self::ImpedanceHorn => "impedance-horn",
            Self::Average => "average",
            Self::Full => "full",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "earcanal", version, about = "Ear-canal atlas, shape model and acoustic impedance pipeline")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Subcommand,
    /// JSON pipeline configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the synthetic population seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Cli {
    /// Configuration file with command-line overrides applied.
    pub fn resolve_config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            match cfg.synthetic.as_mut() {
                Some(s) => s.seed = seed,
                None => return Err(PipelineError::Config("--seed needs a synthetic population".into())),
            }
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

/// Runs one subcommand and writes its manifest.
pub fn run(command: Subcommand, config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    config.validate()?;
    // Where and how fast a run happens does not change what it produces.
    let mut content = config.clone();
    content.output_dir = PathBuf::new();
    content.threads = None;
    let body = serde_json::to_string(&content).map_err(|e| PipelineError::Config(e.to_string()))?;
    let work = || stages::run(command, config, sha256_hex(body.as_bytes()));
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?
            .install(work),
        None => work(),
    }
}

fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| writeln!(buf, "level={} {}", record.level(), record.args()))
        .try_init();
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging();
    let result = cli.resolve_config().and_then(|cfg| run(cli.command, &cfg));
    match result {
        Ok(m) => {
            log::info!("stage=done subcommand={} outputs={}", m.subcommand, m.outputs.len());
            0
        }
        Err(e) => {
            log::error!("stage=failed subcommand={} error=\"{e}\"", cli.command.name());
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
