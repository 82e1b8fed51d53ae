use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use opfkit::pipeline::{self, Config};
use opfkit::{Formulation, SolveSettings};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Generate, score and inspect OPF datasets.
#[derive(Parser)]
#[command(name = "opfkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample, solve and write a dataset.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score predicted primal solutions against a dataset split.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// HDF5 file with the primal arrays of the formulation.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        formulation: String,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also compute the distance to the feasible set.
        #[arg(long)]
        project: bool,
        /// Report prefix; defaults to the prediction path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a summary of a dataset.
    Inspect {
        #[arg(long)]
        data: PathBuf,
    },
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    let settings = SolveSettings::default();
    match cli.command {
        Command::Generate { config } => {
            let cfg = Config::load(&config)?;
            let s = pipeline::generate(&cfg, &settings)?;
            println!("dataset      {}", s.root.display());
            println!("samples      {}", s.samples);
            println!("train        {}", s.train);
            println!("test         {}", s.test);
            println!("infeasible   {}", s.infeasible);
            println!("resumed      {}", s.resumed);
            println!("workers      {}", s.workers);
            println!("cpu hours    {:.6}", s.processor_hours);
            println!("wall clock   {:.3} s", s.wall_clock);
        }
        Command::Evaluate { data, pred, formulation, split, project, out } => {
            let f: Formulation = formulation.parse()?;
            let rep = pipeline::evaluate(&data, &pred, f, &split, project, &settings)?;
            let prefix = out.unwrap_or_else(|| pred.clone());
            let json = with_suffix(&prefix, ".report.json");
            let text = with_suffix(&prefix, ".report.txt");
            std::fs::write(&json, serde_json::to_string_pretty(&rep)?).with_context(|| json.display().to_string())?;
            std::fs::write(&text, rep.to_text()).with_context(|| text.display().to_string())?;
            print!("{}", rep.to_text());
        }
        Command::Inspect { data } => print!("{}", pipeline::inspect(&data)?.to_text()),
    }
    Ok(())
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
