//! `rfac`: runs scenarios and property suites, and saves or inspects world snapshots.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rfac_core::group::GroupProfile;
use rfac_core::properties::{self, Suite};
use rfac_core::scenarios::{self, Adversary, Scenario};
use rfac_core::snapshot::Snapshot;
use rfac_core::world::World;
use rfac_core::Group;

#[derive(Parser)]
#[command(name = "rfac", version, about = "RFID tag access control simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Group parameters: toy (p=23) or desk (1024-bit).
    #[arg(long, default_value = "toy", global = true)]
    group: GroupProfile,
    #[arg(long, default_value = "none", global = true)]
    adversary: Adversary,
    /// Write a JSON-lines record of the run here.
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
    /// Iterations for property suites; each suite has its own default.
    #[arg(long, global = true)]
    iterations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a use-case script: supply-chain, tickets or hospital.
    Scenario { name: Scenario },
    /// Run a property suite: lemma1..lemma4, crypto or decoy.
    Properties { suite: Suite },
    /// Save or load a world snapshot.
    World {
        #[command(subcommand)]
        action: WorldAction,
    },
}

#[derive(Subcommand)]
enum WorldAction {
    /// Run a scenario and save the resulting world.
    Save {
        path: PathBuf,
        #[arg(long, default_value = "supply-chain")]
        scenario: Scenario,
    },
    /// Load a world and print a summary, optionally writing it back out.
    Load {
        path: PathBuf,
        #[arg(long)]
        resave: Option<PathBuf>,
    },
}

fn write_transcript(path: Option<&Path>, text: &str) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, text).with_context(|| format!("writing transcript to {}", p.display()))?;
    }
    Ok(())
}

fn summarize(world: &World) {
    println!("domains:");
    for d in world.office.domains() {
        println!("  {} epoch {} readers {}", d.name, d.epoch_keys.len() - 1, d.readers.len());
    }
    println!("tags:");
    for (i, t) in world.tags().iter().enumerate() {
        let owner = t.owner().and_then(|o| world.office.domain(&o).ok()).map_or("none", |d| d.name.as_str());
        println!("  #{i} owner {owner}, {} access entries, {} objects", t.access().len(), t.objects().len());
    }
    println!("clock {}, {} transcript records", world.office.now(), world.channel.transcript.len());
}

fn run(cli: Cli) -> Result<bool> {
    let c = cli.common;
    let group = Group::generate(c.group);
    let transcript = c.transcript.as_deref();
    match cli.command {
        Command::Scenario { name } => {
            let (report, world) = scenarios::run(name, group, c.seed, c.adversary);
            println!("{report}");
            write_transcript(transcript, &world.channel.transcript.to_json_lines())?;
            if let Some(f) = report.first_failure() {
                eprintln!("first failing step: {} ({})", f.name, f.detail);
            }
            Ok(report.passed())
        }
        Command::Properties { suite } => {
            let n = c.iterations.unwrap_or(suite.default_iterations());
            let report = properties::run_suite(suite, n, c.seed, &group);
            println!("{report}");
            let line = serde_json::to_string(&report).context("encoding report")?;
            write_transcript(transcript, &format!("{line}\n"))?;
            Ok(report.passed())
        }
        Command::World { action: WorldAction::Save { path, scenario } } => {
            let (report, world) = scenarios::run(scenario, group, c.seed, c.adversary);
            world.save(&path).with_context(|| format!("saving {}", path.display()))?;
            write_transcript(transcript, &world.channel.transcript.to_json_lines())?;
            println!("saved world after {scenario} ({} steps) to {}", report.steps.len(), path.display());
            Ok(true)
        }
        Command::World { action: WorldAction::Load { path, resave } } => {
            let world = World::load(&path).with_context(|| format!("loading {}", path.display()))?;
            summarize(&world);
            write_transcript(transcript, &world.channel.transcript.to_json_lines())?;
            if let Some(out) = resave {
                world.save(&out).with_context(|| format!("saving {}", out.display()))?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
