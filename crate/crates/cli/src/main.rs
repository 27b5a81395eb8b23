//! Pipeline driver: one subcommand per stage over a TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use textscore::model::Variant;
use textscore::pipeline::{self, PipelineConfig, Selection};

#[derive(Parser)]
#[command(name = "textscore", version, about = "Text-enhanced credit default scoring pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "textscore.toml")]
    config: PathBuf,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces every configured seed root (split, topics, bootstrap,
    /// explanations, synthesis); model seeds stay as listed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict to one model variant.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Restrict to one configured text source.
    #[arg(long = "text-source", global = true)]
    text_source: Option<String>,
    /// Top-k cutoff at the actual test size, replacing the scaled list.
    #[arg(long, global = true)]
    k: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the synthetic corpus at the configured data paths.
    Synth,
    /// Fill refined texts through the chat endpoint.
    Refine,
    /// Split, encode structured features and fit text featurizers.
    Featurize,
    /// Grid-search and train every variant under each model seed.
    Train,
    /// Bootstrap metric report, top-k table, ROC/PR points.
    Evaluate,
    /// Uncertain-case selection and text attributions.
    Explain,
    /// Profit curves and differences.
    Profit,
    /// Human versus refined text comparison.
    Compare,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(s) = cli.seed {
        cfg.split.seed = s;
        cfg.text.lda.seed = s;
        cfg.bootstrap.master_seed = s;
        cfg.explain.seed = s;
        cfg.synth.seed = s;
    }
    if let Some(src) = &cli.text_source {
        if !cfg.text.sources.contains(src) {
            anyhow::bail!("config: --text-source: {src:?} is not one of the configured text.sources");
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let sel = Selection { variant: cli.variant, text_source: cli.text_source.clone(), k: cli.k };
    let out = cfg.output_dir.display().to_string();
    match cli.command {
        Command::Synth => {
            let files = pipeline::run_synth(&cfg)?;
            println!("synth: wrote {}", files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "));
        }
        Command::Refine => {
            let s = pipeline::run_refine(&cfg)?;
            println!(
                "refine: {} of {} records refined ({} from cache, {} off-template) into {out}",
                s.refined,
                s.records,
                s.from_cache,
                s.format_mismatch.len()
            );
        }
        Command::Featurize => {
            let a = pipeline::run_featurize(&cfg)?;
            println!(
                "featurize: {} structured columns, {} text feature sets in {out}",
                a.structured.columns.len(),
                a.text.len()
            );
        }
        Command::Train => {
            let p = pipeline::run_train(&cfg, &sel)?;
            println!("train: {} variants × {} seeds in {out}", p.rows.len(), p.model_seeds.len());
        }
        Command::Evaluate => {
            let r = pipeline::run_evaluate(&cfg, &sel)?;
            println!("evaluate: {} report rows on {} test records in {out}", r.rows.len(), r.test_size);
        }
        Command::Explain => {
            let files = pipeline::run_explain(&cfg, &sel)?;
            println!("explain: {} files in {out}", files.len());
        }
        Command::Profit => {
            let s = pipeline::run_profit(&cfg, &sel)?;
            println!("profit: {} curves in {out}", s.len());
        }
        Command::Compare => {
            pipeline::run_compare(&cfg)?;
            println!("compare: report in {out}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{:#}", e).replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
