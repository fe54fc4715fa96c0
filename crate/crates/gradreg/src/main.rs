//! `gradreg` binary: `train`, `attack`, `robust` subcommands.

use gradreg::cli::{cmd_attack, cmd_robust, cmd_train, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "\
usage: gradreg <train|attack|robust> --config <path> [--model <path>] [--out <dir>]

  train   train a model per config; writes model.bin, metrics.csv, summary.json
  attack  render worst-case perturbation panels for a saved model
  robust  measure noisy misclassification and the predicted rate

exit codes: 1 usage/config error, 2 I/O error, 3 numeric divergence
";

struct Args {
    command: String,
    config: PathBuf,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    let command = argv.first().cloned().ok_or("missing subcommand")?;
    if !matches!(command.as_str(), "train" | "attack" | "robust") {
        return Err(format!("unknown subcommand {command:?}"));
    }
    let mut config = None;
    let mut model = None;
    let mut out = None;
    let mut i = 1;
    while i < argv.len() {
        let flag = &argv[i];
        let value = argv
            .get(i + 1)
            .ok_or(format!("flag {flag} needs a value"))?;
        match flag.as_str() {
            "--config" => config = Some(PathBuf::from(value)),
            "--model" => model = Some(PathBuf::from(value)),
            "--out" => out = Some(PathBuf::from(value)),
            other => return Err(format!("unknown flag {other:?}")),
        }
        i += 2;
    }
    Ok(Args {
        command,
        config: config.ok_or("--config is required")?,
        model,
        out,
    })
}

fn run(args: &Args) -> gradreg::Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    match args.command.as_str() {
        "train" => cmd_train(&cfg),
        "attack" | "robust" => {
            let model = args
                .model
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join("model.bin"));
            if args.command == "attack" {
                cmd_attack(&cfg, &model)
            } else {
                cmd_robust(&cfg, &model)
            }
        }
        _ => unreachable!("validated in parse_args"),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match parse_args(&argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            return ExitCode::from(1);
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
