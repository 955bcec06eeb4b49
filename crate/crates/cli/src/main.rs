mod args;
mod commands;
mod io;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use args::{Cli, Command};
use commands::{CliError, CliResult, Outcome};

/// Written next to every output; enough to rerun the command exactly.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    command_name: String,
    command: Command,
    /// Generator behind every Gaussian measurement matrix.
    prng: String,
    wall_time_s: f64,
    outputs: Vec<String>,
    timings: Value,
}

fn execute(cmd: &Command) -> CliResult<Outcome> {
    match cmd {
        Command::Project(a) => commands::project(a),
        Command::Denoise1d(a) => commands::denoise1d(a),
        Command::Image(a) => commands::image(&a.op),
        Command::Experiment(a) => commands::experiment(&a.kind),
        Command::Replay(_) => Err(CliError::usage("a manifest cannot record a replay")),
    }
}

fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn run(mut cmd: Command) -> CliResult<i32> {
    if let Command::Replay(r) = &cmd {
        let text = std::fs::read_to_string(&r.manifest)?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| {
            CliError::from(overparam::Error::Parse {
                line: e.line(),
                msg: format!("invalid manifest: {e}"),
            })
        })?;
        let out: Option<PathBuf> = r.out.clone();
        cmd = manifest.command;
        if let Command::Replay(_) = cmd {
            return Err(CliError::usage("a manifest cannot record a replay"));
        }
        if let (Some(out), Some(common)) = (out, cmd.common_mut()) {
            common.out = out;
        }
    }
    let common = cmd.common_mut().expect("replays are resolved above").clone();
    let start = Instant::now();
    let outcome = execute(&cmd)?;
    let wall = start.elapsed().as_secs_f64();

    let mut names: Vec<String> = outcome.files.iter().map(|f| f.0.clone()).collect();
    names.push("manifest.json".into());
    let manifest = RunManifest {
        tool: "overparam".into(),
        version: overparam::VERSION.into(),
        command_name: cmd.name().into(),
        command: cmd.clone(),
        prng: overparam::operators::GAUSSIAN_PRNG.into(),
        wall_time_s: wall,
        outputs: names,
        timings: outcome.timings.clone(),
    };
    let mut files = outcome.files;
    files.push((
        "manifest.json".into(),
        (serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n").into_bytes(),
    ));
    write_all(&common.out, &files)?;

    if common.json {
        println!("{}", serde_json::to_string_pretty(&outcome.report).expect("report serializes"));
    } else {
        for line in &outcome.summary {
            println!("{line}");
        }
        println!("outputs written to {}", common.out.display());
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
