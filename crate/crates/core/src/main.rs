use clap::{Parser, Subcommand};
use nsfpn::cli::{
    cmd_decompose, cmd_eval, cmd_spiral_dump, cmd_train, gradcheck_csv, run_grad_checks,
    standard_grad_checks, GRADCHECK_TOLERANCE,
};
use nsfpn::config::RunConfig;
use nsfpn::irdata::DEFAULT_MATCH_RADIUS;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nsfpn", about = "Noise-suppression FPN for infrared small-target segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference audit of every differentiable op and the full model
    Gradcheck {
        /// Directory for the machine-readable report
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a generated synthetic split and write checkpoint + metric CSVs
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset manifest
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_MATCH_RADIUS)]
        match_radius: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write low/high-frequency reconstructions and detail-energy CSV;
    /// with a checkpoint, also evaluate all three variants
    Decompose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_MATCH_RADIUS)]
        match_radius: f64,
    },
    /// Dump the spiral sampling offsets as "h k dx dy" lines
    SpiralDump {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> nsfpn::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run() -> nsfpn::Result<bool> {
    match Cli::parse().command {
        Command::Gradcheck { out } => {
            let rows = run_grad_checks(&standard_grad_checks(), GRADCHECK_TOLERANCE)?;
            println!("{:<24} {:>14} {:>6}", "op", "max_rel_error", "pass");
            for r in &rows {
                println!("{:<24} {:>14.3e} {:>6}", r.name, r.max_rel_err, r.pass);
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)
                    .map_err(|e| nsfpn::Error::io(format!("creating {}", dir.display()), e))?;
                let path = dir.join("gradcheck.csv");
                std::fs::write(&path, gradcheck_csv(&rows))
                    .map_err(|e| nsfpn::Error::io(format!("writing {}", path.display()), e))?;
            }
            let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.name).collect();
            if !failed.is_empty() {
                eprintln!("gradient check failed for: {}", failed.join(", "));
            }
            Ok(failed.is_empty())
        }
        Command::Train { config, seed, out } => {
            let cfg = load_config(config.as_ref(), seed)?;
            let outcome = cmd_train(&cfg, &out)?;
            println!(
                "trained {} epochs; kept epoch {}; test IoU {:.4}, Pd {:.4}, Fa {:.2}e-6",
                cfg.epochs,
                outcome.selected_epoch,
                outcome.final_test.iou,
                outcome.final_test.pd,
                outcome.final_test.fa * 1e6
            );
            println!("checkpoint: {}", outcome.checkpoint.display());
            Ok(true)
        }
        Command::Eval {
            checkpoint,
            data,
            threshold,
            match_radius,
            out,
        } => {
            let outcome = cmd_eval(&checkpoint, &data, threshold, match_radius, out.as_deref())?;
            print!("{}", outcome.table);
            Ok(true)
        }
        Command::Decompose {
            data,
            out,
            checkpoint,
            threshold,
            match_radius,
        } => {
            let outcome =
                cmd_decompose(&data, &out, checkpoint.as_deref(), threshold, match_radius)?;
            println!(
                "decomposed {} images ({} skipped); energies: {}",
                outcome.written,
                outcome.skipped,
                outcome.energy_csv.display()
            );
            if let Some(v) = &outcome.variant_csv {
                println!("variant metrics: {}", v.display());
            }
            Ok(outcome.skipped == 0)
        }
        Command::SpiralDump { config, out } => {
            let spiral = load_config(config.as_ref(), None)?.model_config().spiral[0];
            cmd_spiral_dump(&spiral, &out)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
