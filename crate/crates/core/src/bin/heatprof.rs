use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use heatprof::config::RunConfig;
use heatprof::gallery::{gallery, gallery_spec, GalleryParams};
use heatprof::{run, verify, Error};

#[derive(Parser)]
#[command(name = "heatprof", version, about = "Dirichlet heat kernels and Doob transforms on planar polygonal domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments listed in a JSON config.
    Run { config: PathBuf },
    /// Describe a gallery domain.
    Gallery {
        name: String,
        /// Print the domain spec as JSON, loadable as a config `domain`.
        #[arg(long)]
        emit_spec: bool,
        #[arg(long)]
        slit_length: Option<f64>,
        #[arg(long)]
        box_half: Option<f64>,
    },
    /// Re-check a run directory from its stored reports and tables.
    Verify { dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(2)
        }
    }
}

fn execute(cmd: Command) -> Result<bool, Error> {
    match cmd {
        Command::Run { config } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.apply_env()?;
            let outcome = run::run(&cfg)?;
            for r in &outcome.reports {
                println!("{:<12} {}", r.experiment, r.status);
            }
            for f in &outcome.failures {
                println!("FAIL {}/{}: {}", f.experiment, f.invariant, f.detail);
            }
            println!("reports in {}", outcome.out.display());
            Ok(outcome.passed())
        }
        Command::Gallery { name, emit_spec, slit_length, box_half } => {
            let mut params = GalleryParams::default();
            if let Some(l) = slit_length {
                params.slit_length = l;
            }
            if let Some(b) = box_half {
                params.box_half = b;
            }
            if emit_spec {
                println!("{}", serde_json::to_string_pretty(&gallery_spec(&name, &params)?)?);
            } else {
                let (spec, domain) = gallery(&name, &params)?;
                println!("{}", serde_json::to_string_pretty(&spec)?);
                println!("inner diameter {:e}, {} slit tips, {} reflex vertices", domain.diam_inner, domain.slit_tips().len(), domain.reflex_vertices().len());
            }
            Ok(true)
        }
        Command::Verify { dir } => {
            let outcome = verify::verify(&dir)?;
            for v in &outcome.results {
                let tag = if v.check.passed { "ok  " } else { "FAIL" };
                println!("{tag} {}/{} {}", v.experiment, v.check.name, v.check.detail);
            }
            Ok(outcome.passed())
        }
    }
}
