use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xids_cli::pipeline::{cmd_explain, cmd_preprocess, cmd_run_all, cmd_train};
use xids_cli::report::cmd_report;
use xids_cli::{Bundle, CliError, CliResult, Method, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "xids",
    version,
    about = "Explainable intrusion detection pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit timings so reruns are byte-identical.
    #[arg(long)]
    canonical_output: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, scale, balance and binarize the input.
    Preprocess(Common),
    /// Split, train and evaluate.
    Train(Common),
    /// Explain test-split instances with the trained model.
    Explain {
        #[command(flatten)]
        common: Common,
        /// Test-split row index; repeatable.
        #[arg(long)]
        instance: Vec<usize>,
        /// Comma-separated subset of shap,lime,dice.
        #[arg(long)]
        methods: Option<String>,
        /// Also write a force-plot SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Summarize a bundle as text.
    Report(Common),
    /// Every stage in order, then the report.
    RunAll(Common),
}

fn load(common: &Common) -> CliResult<PipelineConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Preprocess(c) => {
            let cfg = load(&c)?;
            let p = cmd_preprocess(&cfg)?;
            println!(
                "wrote {} rows ({} normal, {} attack) to {}",
                p.table.n_rows(),
                p.meta.binary_counts[0],
                p.meta.binary_counts[1],
                cfg.output_dir.display()
            );
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            let m = cmd_train(&cfg, c.canonical_output)?;
            for row in &m.models {
                println!("{:<22} accuracy {:.4}", row.label, row.report.accuracy);
            }
        }
        Command::Explain {
            common,
            instance,
            methods,
            svg,
        } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let instances = if instance.is_empty() {
                cfg.explain.instances.clone()
            } else {
                instance
            };
            let methods = match methods {
                Some(m) => Method::parse_list(&m)?,
                None => cfg.explain.methods.clone(),
            };
            let outs = cmd_explain(&cfg, &instances, &methods, svg || cfg.explain.svg)?;
            for o in outs {
                let verdict = o
                    .consensus
                    .map_or("-".to_string(), |c| c.verdict.as_str().to_string());
                println!("instance {}: consensus {verdict}", o.index);
            }
        }
        Command::Report(c) => {
            let root = match (&c.out, &c.config) {
                (Some(out), _) => out.clone(),
                (None, Some(_)) => load(&c)?.output_dir,
                (None, None) => {
                    return Err(CliError::Config("give --out or --config".into()));
                }
            };
            print!("{}", cmd_report(&Bundle::new(root))?);
        }
        Command::RunAll(c) => {
            let cfg = load(&c)?;
            print!("{}", cmd_run_all(&cfg, c.canonical_output)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
