//! Command-line interface: front-end tools, manifest pipeline, augmentation,
//! the training curriculum, sampling, and WER scoring.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O error.

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{augment_manifest, AugmentError, AugmentMode, DEFAULT_FACTORS};
use crate::checkpoint;
use crate::config::{ConfigError, RunConfig};
use crate::lexicon::{DialectRegistry, Lexicon, LexiconError};
use crate::manifest::{
    build_manifest, read_manifest, validate_manifest, write_manifest, ManifestError,
};
use crate::model::{ModelConfig, TtsModel};
use crate::phoneme::{IpaSequence, MatchPolicy, PhonemeError, PhonemeInventory};
use crate::train::{run_curriculum, RunError, ToyDataConfig};
use crate::wer::{tokenize, wer, TokenMode};

/// Process exit codes used by the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Ok = 0,
    Validation = 1,
    Usage = 2,
    Io = 3,
}

#[derive(Debug)]
pub struct CliFailure {
    pub kind: ExitKind,
    pub message: String,
}

impl CliFailure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Validation,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Io,
            message: message.into(),
        }
    }
}

impl From<PhonemeError> for CliFailure {
    fn from(e: PhonemeError) -> Self {
        match e {
            PhonemeError::Io(_) => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<LexiconError> for CliFailure {
    fn from(e: LexiconError) -> Self {
        match e {
            LexiconError::Io(_) => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<ManifestError> for CliFailure {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io(_) => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliFailure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => Self::io(e.to_string()),
            ConfigError::Parse(_) => Self::validation(e.to_string()),
        }
    }
}

impl From<AugmentError> for CliFailure {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::Io(_) | AugmentError::MissingAudio(_) | AugmentError::Audio(_) => {
                Self::io(e.to_string())
            }
            AugmentError::BadFactor(_) => Self::usage(e.to_string()),
            AugmentError::TooShort { .. } => Self::validation(e.to_string()),
        }
    }
}

impl From<RunError> for CliFailure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Io(_) => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<checkpoint::CheckpointError> for CliFailure {
    fn from(e: checkpoint::CheckpointError) -> Self {
        match e {
            checkpoint::CheckpointError::Io(_) => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliFailure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "dialtts", version, about = "Dialect TTS research toolkit")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed overriding every configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Strict mode: fail instead of substituting UNK.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a lexicon and report format or symbol errors.
    LexiconValidate {
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Optional dialect registry; entries must use registered ids.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Convert text to IPA symbols using a dialect's lexicon.
    G2p {
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        dialect: u32,
        /// Text to convert; reads stdin lines when omitted.
        #[arg(long)]
        text: Option<String>,
    },
    /// Build a JSON-Lines manifest from an `id<TAB>text` transcript.
    BuildManifest {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        dialect: u32,
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Directory with `<id>.wav` files; omit for text-only manifests.
        #[arg(long)]
        audio_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a manifest against the inventory and dialect registry.
    ValidateManifest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        registry: PathBuf,
    },
    /// Expand a manifest with time-stretched and pitch-shifted variants.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated duration/pitch factors.
        #[arg(long, value_delimiter = ',')]
        factors: Vec<f64>,
        /// Comma-separated modes: `ts` (time stretch), `ps` (pitch shift).
        #[arg(long, default_value = "ts,ps")]
        modes: String,
    },
    /// Run the staged training curriculum on synthetic data.
    Train {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Euler-sample the learned field from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated symbol ids used as conditioning input.
        #[arg(long)]
        ids: String,
        #[arg(long, default_value_t = 32)]
        steps: usize,
        /// Trajectory CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score hypothesis lines against reference lines (`id<TAB>text`).
    Wer {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// Score characters instead of whitespace-separated words.
        #[arg(long)]
        chars: bool,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliFailure> {
    match cli.command {
        Command::LexiconValidate {
            inventory,
            lexicon,
            registry,
        } => cmd_lexicon_validate(&inventory, &lexicon, registry.as_deref()),
        Command::G2p {
            inventory,
            lexicon,
            dialect,
            text,
        } => cmd_g2p(&inventory, &lexicon, dialect, text, cli.strict),
        Command::BuildManifest {
            transcript,
            dialect,
            inventory,
            lexicon,
            audio_dir,
            out,
        } => cmd_build_manifest(
            &transcript,
            dialect,
            &inventory,
            &lexicon,
            audio_dir.as_deref(),
            &out,
            cli.strict,
        ),
        Command::ValidateManifest {
            manifest,
            inventory,
            registry,
        } => cmd_validate_manifest(&manifest, &inventory, &registry, cli.strict),
        Command::Augment {
            manifest,
            out_dir,
            factors,
            modes,
        } => cmd_augment(&manifest, &out_dir, &factors, &modes),
        Command::Train { out_dir } => cmd_train(cli.config.as_deref(), cli.seed, &out_dir),
        Command::Sample {
            checkpoint,
            ids,
            steps,
            out,
        } => cmd_sample(
            cli.config.as_deref(),
            cli.seed.unwrap_or(0),
            &checkpoint,
            &ids,
            steps,
            out.as_deref(),
        ),
        Command::Wer {
            reference,
            hyp,
            chars,
            out,
        } => cmd_wer(&reference, &hyp, chars, out.as_deref()),
    }
}

fn cmd_lexicon_validate(
    inventory: &Path,
    lexicon: &Path,
    registry: Option<&Path>,
) -> Result<(), CliFailure> {
    let inv = PhonemeInventory::load(inventory)?;
    let lex = Lexicon::load(lexicon, &inv)?;
    if let Some(reg_path) = registry {
        let reg = DialectRegistry::load(reg_path)?;
        if lex.dialect_count() > reg.count() {
            return Err(CliFailure::validation(format!(
                "lexicon uses dialect ids up to {}, registry has only {}",
                lex.dialect_count() - 1,
                reg.count()
            )));
        }
    }
    println!(
        "ok: {} entries across {} dialects, inventory of {} symbols",
        lex.entry_count(),
        lex.dialect_count(),
        inv.len()
    );
    Ok(())
}

fn cmd_g2p(
    inventory: &Path,
    lexicon: &Path,
    dialect: u32,
    text: Option<String>,
    strict: bool,
) -> Result<(), CliFailure> {
    let inv = PhonemeInventory::load(inventory)?;
    let lex = Lexicon::load(lexicon, &inv)?;
    let policy = if strict {
        MatchPolicy::Strict
    } else {
        MatchPolicy::Lenient
    };
    let input = match text {
        Some(t) => t,
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    for line in input.lines().filter(|l| !l.trim().is_empty()) {
        let seq = lex.g2p(line, dialect, policy)?;
        let symbols = inv
            .texts(&seq)
            .expect("g2p output ids are always valid");
        println!("{}", symbols.join(" "));
    }
    Ok(())
}

fn cmd_build_manifest(
    transcript: &Path,
    dialect: u32,
    inventory: &Path,
    lexicon: &Path,
    audio_dir: Option<&Path>,
    out: &Path,
    strict: bool,
) -> Result<(), CliFailure> {
    let inv = PhonemeInventory::load(inventory)?;
    let lex = Lexicon::load(lexicon, &inv)?;
    let report = build_manifest(transcript, dialect, &lex, &inv, audio_dir, strict)?;
    for failure in &report.failures {
        eprintln!("g2p failure: {}: {}", failure.id, failure.message);
    }
    if strict && !report.failures.is_empty() {
        return Err(CliFailure::validation(format!(
            "{} utterances failed G2P in strict mode",
            report.failures.len()
        )));
    }
    write_manifest(&report.records, out)?;
    println!(
        "wrote {} records to {} ({} g2p failures)",
        report.records.len(),
        out.display(),
        report.failures.len()
    );
    Ok(())
}

fn cmd_validate_manifest(
    manifest: &Path,
    inventory: &Path,
    registry: &Path,
    strict: bool,
) -> Result<(), CliFailure> {
    let inv = PhonemeInventory::load(inventory)?;
    let reg = DialectRegistry::load(registry)?;
    let records = read_manifest(manifest)?;
    let report = validate_manifest(&records, &inv, &reg, strict);
    for v in &report.violations {
        println!("record {} ({}): {}", v.index + 1, v.id, v.message);
    }
    if report.is_clean() {
        println!("ok: {} records", records.len());
        Ok(())
    } else {
        Err(CliFailure::validation(format!(
            "{} of {} records invalid",
            report.violations.len(),
            records.len()
        )))
    }
}

fn cmd_augment(
    manifest: &Path,
    out_dir: &Path,
    factors: &[f64],
    modes: &str,
) -> Result<(), CliFailure> {
    let records = read_manifest(manifest)?;
    let factors: Vec<f64> = if factors.is_empty() {
        DEFAULT_FACTORS.to_vec()
    } else {
        factors.to_vec()
    };
    let modes: Vec<AugmentMode> = modes
        .split(',')
        .map(|m| {
            AugmentMode::parse(m).ok_or_else(|| {
                CliFailure::usage(format!("unknown mode {m:?}; expected `ts` or `ps`"))
            })
        })
        .collect::<Result<_, _>>()?;
    let manifest_dir = manifest.parent().unwrap_or(Path::new("."));
    let expanded = augment_manifest(&records, manifest_dir, out_dir, &factors, &modes)?;
    let out_manifest = out_dir.join("manifest.jsonl");
    write_manifest(&expanded, &out_manifest)?;
    println!(
        "expanded {} records to {} ({})",
        records.len(),
        expanded.len(),
        out_manifest.display()
    );
    Ok(())
}

fn cmd_train(config: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> Result<(), CliFailure> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.override_seed(seed);
    }
    let summary = run_curriculum(&cfg, out_dir)?;
    for report in &summary.reports {
        let last = report.last_k_mean(10);
        let entropy = report
            .mean_gate_entropy
            .map_or(String::from("-"), |e| format!("{e:.3}"));
        println!(
            "stage {} done: {} steps, final task loss {:.4}, gate entropy {}",
            report.stage.index(),
            report.records.len(),
            last,
            entropy
        );
    }
    println!(
        "stage1 loss drop {:.1}%, gate accuracy {:.1}%, stage3 loss drop {:.1}%, frozen tensors identical: {}",
        summary.stage1_drop * 100.0,
        summary.gate_accuracy * 100.0,
        summary.stage3_drop * 100.0,
        summary.frozen_identical
    );
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

fn cmd_sample(
    config: Option<&Path>,
    seed: u64,
    ckpt: &Path,
    ids: &str,
    steps: usize,
    out: Option<&Path>,
) -> Result<(), CliFailure> {
    if steps == 0 {
        return Err(CliFailure::usage("--steps must be at least 1"));
    }
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let data_cfg = ToyDataConfig {
        feature_dim: cfg.model.feature_dim,
        ..ToyDataConfig::default()
    };
    let model_cfg = ModelConfig {
        vocab: data_cfg.vocab_size(),
        model_dim: cfg.model.model_dim,
        feature_dim: cfg.model.feature_dim,
        attn_blocks: cfg.model.attn_blocks,
        head_hidden: cfg.model.head_hidden,
        n_experts: cfg.data.dialects,
        top_k: cfg.model.top_k.min(cfg.data.dialects),
        lora_rank: cfg.model.lora_rank,
        lora_alpha: cfg.model.lora_alpha,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = TtsModel::new(&model_cfg, &mut rng);
    // attach whatever the checkpoint contains before restoring it
    let names = checkpoint::tensor_names(ckpt)?;
    if names.iter().any(|n| n.starts_with("moe.")) {
        model
            .attach_moe(&mut rng)
            .map_err(|e| CliFailure::validation(e.to_string()))?;
    }
    if names.iter().any(|n| n.contains(".lora_")) {
        crate::peft::attach_lora(&mut model, model_cfg.lora_rank, model_cfg.lora_alpha, &mut rng)
            .map_err(|e| CliFailure::validation(e.to_string()))?;
    }
    if names.iter().any(|n| n.starts_with("adapter.")) {
        crate::peft::attach_conditioning_adapter(&mut model, &mut rng)
            .map_err(|e| CliFailure::validation(e.to_string()))?;
    }
    checkpoint::load_model(&mut model, ckpt)?;

    let ids: Vec<u32> = ids
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliFailure::usage(format!("bad symbol id {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    let seq = IpaSequence::new(ids);
    let (cond, _) = model
        .condition_forward(&seq)
        .map_err(|e| CliFailure::validation(e.to_string()))?;
    let traj = crate::cfm::sample(&model, &cond, steps, seed);

    let mut csv = String::from("step,t");
    for i in 0..model.config.feature_dim {
        csv.push_str(&format!(",x{i}"));
    }
    csv.push('\n');
    for (i, (t, state)) in traj.times.iter().zip(&traj.states).enumerate() {
        csv.push_str(&format!("{i},{t}"));
        for v in state.iter() {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_wer(
    reference: &Path,
    hyp: &Path,
    chars: bool,
    out: Option<&Path>,
) -> Result<(), CliFailure> {
    let mode = if chars { TokenMode::Chars } else { TokenMode::Words };
    let ref_lines = read_id_lines(reference)?;
    let hyp_lines: HashMap<String, String> = read_id_lines(hyp)?.into_iter().collect();

    let mut csv = String::from("id,rate,S,I,D\n");
    let mut total_edits = 0usize;
    let mut total_ref = 0usize;
    for (id, ref_text) in &ref_lines {
        let hyp_text = hyp_lines.get(id).map(String::as_str).unwrap_or("");
        let r = tokenize(ref_text, mode);
        let h = tokenize(hyp_text, mode);
        let result = wer(&r, &h);
        total_edits += result.counts.edits();
        total_ref += result.ref_len;
        csv.push_str(&format!(
            "{id},{},{},{},{}\n",
            result.rate(),
            result.counts.substitutions,
            result.counts.insertions,
            result.counts.deletions
        ));
    }
    match out {
        Some(path) => std::fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    if total_ref > 0 {
        eprintln!(
            "overall: {} edits / {} reference tokens = {:.4}",
            total_edits,
            total_ref,
            total_edits as f64 / total_ref as f64
        );
    }
    Ok(())
}

fn read_id_lines(path: &Path) -> Result<Vec<(String, String)>, CliFailure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliFailure::io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').ok_or_else(|| {
            CliFailure::validation(format!(
                "{}:{}: expected id<TAB>text",
                path.display(),
                lineno + 1
            ))
        })?;
        out.push((id.trim().to_string(), rest.to_string()));
    }
    Ok(out)
}
