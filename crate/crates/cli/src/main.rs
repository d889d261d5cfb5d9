use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lexi_core::pipeline::{
    cmd_ablate, cmd_disambiguate, cmd_evaluate, cmd_synth, cmd_train_nmt, cmd_train_stage1, cmd_translate, Backend,
    RunConfig, Selector, TranslateInputs,
};
use lexi_core::vecnmt::{DecodeMode, GateMode};

/// Disambiguated lexically constrained translation on synthetic corpora.
#[derive(Parser, Debug)]
#[command(name = "lexi", version)]
struct Cli {
    /// TOML run configuration; absent fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed. Wins over LEXI_SEED, which wins over the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-sentence work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus, its inventory and a train/valid/test split.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sentences: Option<usize>,
        #[arg(long)]
        lexicons: Option<usize>,
    },
    /// Train the contrastive disambiguator.
    TrainStage1 {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        d_model: Option<usize>,
        /// Negatives per instance.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Choose a candidate for every constraint instance of a corpus.
    Disambiguate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a stage-2 translation model.
    TrainNmt {
        #[arg(long, default_value = "vec", value_parser = parse_backend)]
        backend: Backend,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        /// Weight of the integrity loss.
        #[arg(long)]
        lambda: Option<f64>,
        /// Integrity window half-width.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        d_model: Option<usize>,
    },
    /// Translate a corpus under chosen constraints.
    Translate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_backend)]
        backend: Option<Backend>,
        #[arg(long, value_parser = parse_selector)]
        selector: Option<Selector>,
        /// `learned` or `fixed:<g>`.
        #[arg(long, value_parser = parse_gate)]
        gate: Option<GateMode>,
        /// gda, mixture or vanilla.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<DecodeMode>,
        #[arg(long)]
        beam: Option<usize>,
        /// Disambiguation output, for the stage1 selector.
        #[arg(long)]
        disambig: Option<PathBuf>,
        /// Training corpus, for the mostfreq selector.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Score translations against references.
    Evaluate {
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Disambiguation output, to report selection accuracy.
        #[arg(long)]
        disambig: Option<PathBuf>,
    },
    /// Run the integrity/decoding grid and the selector comparison.
    Ablate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    Backend::parse(s).map_err(|e| e.to_string())
}

fn parse_selector(s: &str) -> Result<Selector, String> {
    Selector::parse(s).map_err(|e| e.to_string())
}

fn parse_gate(s: &str) -> Result<GateMode, String> {
    GateMode::parse(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<DecodeMode, String> {
    match s {
        "gda" => Ok(DecodeMode::Gda),
        "mixture" => Ok(DecodeMode::Mixture),
        "vanilla" => Ok(DecodeMode::Vanilla),
        _ => Err(format!("unknown mode {s:?}; expected gda, mixture or vanilla")),
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = cfg.with_env_seed()?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Synth { out, sentences, lexicons } => {
            set(&mut cfg.synth.n_sentences, sentences);
            set(&mut cfg.synth.n_lexicons, lexicons);
            let summary = cmd_synth(&cfg, &out).context("synth failed")?;
            print!("{}", summary.render_table());
        }
        Command::TrainStage1 { train, out, steps, d_model, k, batch_size } => {
            set(&mut cfg.stage1.steps, steps);
            set(&mut cfg.stage1.model.d_model, d_model);
            set(&mut cfg.stage1.k, k);
            set(&mut cfg.stage1.batch_size, batch_size);
            let log = cmd_train_stage1(&cfg, &train, &out).context("train-stage1 failed")?;
            let tail = log.moving_average(50.min(log.losses.len()).max(1));
            println!("trained {} steps, final loss {:.4}", log.losses.len(), tail.last().copied().unwrap_or(f64::NAN));
        }
        Command::Disambiguate { model, corpus, out } => {
            let recs = cmd_disambiguate(&cfg, &model, &corpus, &out).context("disambiguate failed")?;
            println!("wrote {} decisions to {}", recs.len(), out.display());
        }
        Command::TrainNmt { backend, train, out, steps, lambda, window, d_model } => {
            cfg.backend = backend;
            set(&mut cfg.nmt.steps, steps);
            set(&mut cfg.nmt.lambda, lambda);
            set(&mut cfg.nmt.window, window);
            set(&mut cfg.nmt.model.d_model, d_model);
            let log = cmd_train_nmt(&cfg, &train, &out).context("train-nmt failed")?;
            let k = log.total.len().min(50).max(1);
            let tail = log.total[log.total.len().saturating_sub(k)..].iter().sum::<f64>() / k as f64;
            println!("trained {} steps ({}), final loss {tail:.4} per token", log.total.len(), backend.name());
        }
        Command::Translate { model, corpus, out, backend, selector, gate, mode, beam, disambig, train } => {
            set(&mut cfg.backend, backend);
            set(&mut cfg.selector, selector);
            set(&mut cfg.decode.gate, gate);
            set(&mut cfg.mode, mode);
            set(&mut cfg.decode.beam, beam);
            let inputs = TranslateInputs { model, corpus, disambig, train };
            let recs = cmd_translate(&cfg, &inputs, &out).context("translate failed")?;
            println!("wrote {} translations to {}", recs.len(), out.display());
        }
        Command::Evaluate { hyps, corpus, out, disambig } => {
            let report = cmd_evaluate(&cfg, &hyps, &corpus, disambig.as_deref(), &out).context("evaluate failed")?;
            print!("{}", report.metrics.render_table());
        }
        Command::Ablate { train, test, out_dir } => {
            let report = cmd_ablate(&cfg, &train, &test, &out_dir).context("ablate failed")?;
            print!("{}", report.render_table());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
