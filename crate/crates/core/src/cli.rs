//! Command-line surface: `generate`, `train`, `eval`, `gradcheck`, `inspect`.
//!
//! Exit codes: 0 success, 1 usage or contract error, 2 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{self, checkpoint, SyntheticTaskSpec};
use crate::diagnostics::{self, Precision};
use crate::error::{Error, Result};
use crate::eval;
use crate::model::Preset;
use crate::modality::Modality;
use crate::prompts::{PromptMode, PromptRegistry};
use crate::train::{self, RunConfig};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "MODALBRIDGE_OUT";

#[derive(Debug, Parser)]
#[command(name = "modalbridge", version, about = "Thirteen-modality encoders, query bridge and adapter backbone")]
pub struct Cli {
    /// Seed for data generation, initialisation and prompt sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model and schedule preset.
    #[arg(long, global = true, value_parser = ["desk", "paper"])]
    pub preset: Option<String>,
    /// Run configuration JSON supplying defaults for the other flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Alternative prompt table (`modality<TAB>index<TAB>text`).
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Generate {
        #[arg(long)]
        modality: Option<String>,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a dataset directory, or on a fresh 8-sample synthetic set.
    Train {
        #[arg(long)]
        modality: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Score a checkpoint with eval prompts; writes metrics.json and metrics.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the full pipeline on one synthetic sample.
    Gradcheck {
        #[arg(long)]
        modality: Option<String>,
        /// Number of probed scalars.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value = "64", value_parser = ["32", "64"])]
        precision: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print tensor shapes through encoder, bridge and assembly.
    Inspect {
        #[arg(long)]
        modality: Option<String>,
    },
}

struct Ctx {
    base: Option<RunConfig>,
    seed: u64,
    preset: Preset,
    prompts: PromptRegistry,
}

impl Ctx {
    fn modality(&self, flag: &Option<String>) -> Result<Modality> {
        match (flag, &self.base) {
            (Some(m), _) => m.parse(),
            (None, Some(r)) => Ok(r.modality),
            (None, None) => Err(Error::contract("--modality is required")),
        }
    }

    fn run_config(&self, m: Modality) -> RunConfig {
        let mut run = self.base.clone().unwrap_or_else(|| RunConfig::new(m, self.preset, self.seed));
        run.modality = m;
        run.seed = self.seed;
        run.preset = self.preset;
        run
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    crate::fsio::write_atomic(path, &bytes)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    let base = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let preset = match (&cli.preset, &base) {
        (Some(p), _) => p.parse()?,
        (None, Some(r)) => r.preset,
        (None, None) => Preset::Desk,
    };
    let seed = cli.seed.or(base.as_ref().map(|r| r.seed)).unwrap_or(0);
    let prompts = match &cli.prompts {
        Some(p) => PromptRegistry::load(p)?,
        None => PromptRegistry::builtin(),
    };
    let ctx = Ctx {
        base,
        seed,
        preset,
        prompts,
    };
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match cli.command {
        Command::Generate {
            modality,
            samples,
            noise,
            out: dir,
        } => {
            let m = ctx.modality(&modality)?;
            let mut spec = SyntheticTaskSpec::desk(m, samples, seed);
            if let Some(n) = noise {
                spec.noise = n;
            }
            let dir = dir.unwrap_or_else(|| out_root().join("data").join(m.name()));
            let ds = data::generate(&spec)?;
            let manifest = data::write_dataset(&dir, &ds)?;
            writeln!(out, "wrote {} {m} samples ({} files) to {}", ds.len(), manifest.files.len(), dir.display()).map_err(io)?;
        }
        Command::Train {
            modality,
            data: data_dir,
            out: dir,
            epochs,
            lr,
        } => {
            let m = ctx.modality(&modality)?;
            let mut run = ctx.run_config(m);
            if let Some(d) = data_dir {
                run.data = Some(d);
            }
            if let Some(o) = dir {
                run.output = Some(o);
            }
            run.max_epochs = epochs.or(run.max_epochs);
            run.max_lr = lr.or(run.max_lr);
            let dir = run.output.clone().unwrap_or_else(|| out_root().join(m.name()));
            run.output = Some(dir.clone());
            let ds = match &run.data {
                Some(d) => data::read_dataset(d)?,
                None => data::generate(&SyntheticTaskSpec::desk(m, 8, seed))?,
            };
            let result = train::train(&run, &ds, &ctx.prompts)?;
            train::write_outputs(&dir, &run, &result)?;
            let first = result.curve.first().map_or(f64::NAN, |r| r.loss);
            let last = result.curve.last().map_or(f64::NAN, |r| r.loss);
            writeln!(
                out,
                "trained {m}: {} steps, loss {first:.4} -> {last:.4}; outputs in {}",
                result.curve.len(),
                dir.display()
            )
            .map_err(io)?;
        }
        Command::Eval {
            checkpoint: ckpt,
            data: data_dir,
            out: dir,
        } => {
            let (model, store, _) = checkpoint::load(&ckpt)?;
            let ds = data::read_dataset(&data_dir)?;
            let report = eval::evaluate(&model, &store, &ds, &ctx.prompts)?;
            let dir = dir.unwrap_or_else(|| out_root().join(ds.modality.name()).join("eval"));
            report.write(&dir)?;
            for (k, v) in &report.metrics {
                writeln!(out, "{k} = {v}").map_err(io)?;
            }
        }
        Command::Gradcheck {
            modality,
            samples,
            precision,
            out: dir,
        } => {
            let m = ctx.modality(&modality)?;
            let precision = if precision == "32" { Precision::F32 } else { Precision::F64 };
            let run = ctx.run_config(m);
            let ds = data::generate(&SyntheticTaskSpec::desk(m, 2, seed))?;
            let (model, store) = train::prepare(&run, &ds)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prompt = ctx.prompts.select_tokens(m, PromptMode::Eval, &mut rng)?;
            let cfg = precision.config(samples, seed);
            let report = diagnostics::pipeline_grad_check(&model, &store, &ds.examples[0], &prompt, precision, &cfg)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(io)?;
            writeln!(
                out,
                "{} {m}: max rel err {:.3e} over {} probes (tolerance {:.0e})",
                if report.passed { "PASS" } else { "FAIL" },
                report.max_rel_err,
                report.checked,
                report.tolerance
            )
            .map_err(io)?;
            if let Some(d) = dir {
                write_json(&d.join("gradcheck.json"), &report)?;
            }
            return Ok(report.passed);
        }
        Command::Inspect { modality } => {
            let m = ctx.modality(&modality)?;
            let run = ctx.run_config(m);
            let ds = data::generate(&SyntheticTaskSpec::desk(m, 1, seed))?;
            let (model, store) = train::prepare(&run, &ds)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prompt = ctx.prompts.select_tokens(m, PromptMode::Eval, &mut rng)?;
            let r = diagnostics::inspect(&model, &store, &ds.examples[0], &prompt)?;
            let fmt = |d: &[usize]| d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" x ");
            writeln!(out, "modality   {m}").map_err(io)?;
            writeln!(out, "tokens     {}", fmt(&r.tokens)).map_err(io)?;
            writeln!(out, "bridged    {}", fmt(&r.bridged)).map_err(io)?;
            writeln!(out, "prompt     {} tokens", r.prompt_len).map_err(io)?;
            writeln!(out, "assembled  {} (boundary {})", r.assembled_len, r.boundary).map_err(io)?;
        }
    }
    Ok(true)
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}
