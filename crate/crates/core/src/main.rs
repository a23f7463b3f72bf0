use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use intertopic::pipeline::{InputConfig, Overrides, Pipeline, PipelineConfig, Stage, StageOutcome};
use intertopic::synth::{generate_corpus, SynthConfig, ISSUE_NAME};
use intertopic::{Error, Result};

/// Stance, homophily and intermediary-topic analysis of tweet corpora.
///
/// Without a subcommand, runs the analysis pipeline (or one stage of it)
/// inside a workspace directory.
#[derive(Parser, Debug)]
#[command(version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the pipeline (the default when no subcommand is given).
    Run(RunArgs),
    /// Generate a synthetic corpus with planted stances and topics.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding stage artifacts.
    #[arg(long, env = "INTERTOPIC_WORKSPACE", default_value = "workspace")]
    workspace: PathBuf,
    /// Stage to run: ingest, stance, homophily, lda, graph, report or all.
    #[arg(long, default_value = "all")]
    stage: String,
    /// Minimum P(t|u) for a user to support a topic.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of LDA topics.
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Gibbs sweeps.
    #[arg(long)]
    iterations: Option<usize>,
    /// Sweeps discarded before averaging.
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_doc_freq: Option<usize>,
    /// Drop users following or followed by at least this many accounts.
    #[arg(long)]
    max_degree: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Generator configuration (TOML); omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn run_pipeline(args: RunArgs) -> Result<()> {
    let config_path = args
        .config
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = PipelineConfig::load(&config_path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        other => other,
    })?;
    config.apply(&Overrides {
        epsilon: args.epsilon,
        topics: args.topics,
        alpha: args.alpha,
        beta: args.beta,
        iterations: args.iterations,
        burn_in: args.burn_in,
        seed: args.seed,
        min_doc_freq: args.min_doc_freq,
        max_degree: args.max_degree,
    });
    let stages = if args.stage == "all" {
        Stage::ALL.to_vec()
    } else {
        vec![args.stage.parse::<Stage>()?]
    };
    let pipeline = Pipeline::new(config, args.workspace)?;
    for stage in stages {
        match pipeline.run(stage)? {
            StageOutcome::UpToDate => println!("{stage}: up to date"),
            StageOutcome::Ran { elapsed_secs } => println!("{stage}: done in {elapsed_secs:.2}s"),
        }
    }
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = args.users {
        config.num_users = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate().map_err(|e| Error::Config(e.to_string()))?;
    let corpus = generate_corpus(&config)?;
    corpus.write_to_dir(&args.out)?;

    // a ready-to-run pipeline configuration next to the corpus
    let mut pipeline = PipelineConfig {
        input: InputConfig {
            tweets: "tweets.jsonl".into(),
            knowledge_base: "kb.toml".into(),
            gazetteer: Some("gazetteer.txt".into()),
            issue: ISSUE_NAME.into(),
        },
        ingest: Default::default(),
        stance: Default::default(),
        lda: Default::default(),
        graph: Default::default(),
    };
    pipeline.lda.topics = config.k_true;
    pipeline.lda.seed = config.seed;
    let path = args.out.join("pipeline.toml");
    fs::write(&path, pipeline.to_toml()).map_err(|e| Error::io(&path, e))?;
    println!(
        "wrote {} tweets from {} users to {}",
        corpus.tweets.len(),
        config.num_users,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Some(Command::Run(args)) => run_pipeline(args),
        Some(Command::Synth(args)) => run_synth(args),
        None => run_pipeline(cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
