use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use msgsem::cli::{
    cmd_eval_theories, cmd_fit_op, cmd_gen_data, cmd_pca, cmd_reproduce, cmd_train, CliError, RunConfig,
};
use msgsem::probe::OperatorRole;

#[derive(Parser)]
#[command(name = "msgsem", version, about = "Train a reference-game model and probe the meaning of its messages")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Not,
    And,
    Or,
}

impl From<Op> for OperatorRole {
    fn from(op: Op) -> Self {
        match op {
            Op::Not => OperatorRole::Negation,
            Op::And => OperatorRole::Conjunction,
            Op::Or => OperatorRole::Disjunction,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the train and test datasets.
    GenData,
    /// Train a model and write a checkpoint.
    Train,
    /// Score the random, literal and human theories on the test split.
    EvalTheories {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Fit a linear operator on aligned messages and evaluate it.
    FitOp {
        #[arg(long, value_enum)]
        op: Op,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Export raw and transformed messages projected onto two principal components.
    Pca {
        #[arg(long, value_enum, default_value = "not")]
        op: Op,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run every stage and write a summary.
    Reproduce,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    config.validate()?;
    let start = Instant::now();
    match args.command {
        Command::GenData => {
            let g = cmd_gen_data(&config)?;
            println!("wrote {} train scenes to {}", g.train_count, g.train_path.display());
            println!("wrote {} test scenes to {}", g.test_count, g.test_path.display());
        }
        Command::Train => {
            let t = cmd_train(&config)?;
            println!("held-out object accuracy {:.4}", t.accuracy);
            println!("checkpoint {}", t.checkpoint.display());
        }
        Command::EvalTheories { checkpoint, dataset } => {
            let r = cmd_eval_theories(&config, checkpoint.as_deref(), dataset.as_deref())?;
            print!("{}", r.to_text());
        }
        Command::FitOp { op, checkpoint, dataset } => {
            let f = cmd_fit_op(&config, checkpoint.as_deref(), dataset.as_deref(), op.into())?;
            print!("{}", f.report.to_text());
            println!("operator {}", f.operator_path.display());
        }
        Command::Pca { op, checkpoint, dataset } => {
            let p = cmd_pca(&config, checkpoint.as_deref(), dataset.as_deref(), op.into())?;
            println!(
                "{} points, explained variance {:.4} {:.4}, written to {}",
                p.points,
                p.explained_variance[0],
                p.explained_variance[1],
                p.path.display()
            );
        }
        Command::Reproduce => {
            let r = cmd_reproduce(&config)?;
            print!("{}", r.summary);
        }
    }
    eprintln!("done in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
