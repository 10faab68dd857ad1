use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use hardylab_cli::{list_fixtures, run, CliError, ExperimentConfig, Format};

#[derive(Debug, Parser)]
#[command(name = "hardylab", version, about = "Run a hardylab experiment from a JSON config")]
struct Args {
    /// Experiment config (JSON).
    #[arg(long, required_unless_present = "list_fixtures")]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's "out".
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    threads: Option<usize>,
    /// Artifacts to write; repeat or comma-separate. Defaults to all.
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Vec<Format>,
    /// Print the named builders and their parameters, then exit.
    #[arg(long)]
    list_fixtures: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match real_main(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hardylab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn real_main(args: Args) -> Result<(), CliError> {
    if args.list_fixtures {
        let text = serde_json::to_string_pretty(&list_fixtures()).expect("fixtures serialize");
        println!("{text}");
        return Ok(());
    }
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let path = args.config.expect("clap enforces --config");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let out = args
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("hardylab-out"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("output directory {}: {e}", out.display())))?;
    let bundle = run(&cfg)?;
    let formats = if args.format.is_empty() {
        vec![Format::Csv, Format::Json, Format::Svg]
    } else {
        args.format
    };
    bundle.write(&out, &formats)?;
    for (k, c) in &bundle.claims {
        println!("{k} = {}", c.value);
    }
    if bundle.inconclusive {
        println!("inconclusive: a solve hit its iteration cap");
    }
    println!("wrote {}", out.display());
    Ok(())
}
