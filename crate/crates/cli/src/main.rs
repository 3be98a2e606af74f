use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use onion_trace::analysis::{
    analyze, compare_defenses_from, write_defense_report, write_run_report, DefenseRow,
};
use onion_trace::scenario::{run, PolicyName, ScenarioConfig};
use onion_trace::wire::fixtures::validate_dir;

#[derive(Parser)]
#[command(
    name = "onion-trace",
    version,
    about = "BitTorrent-over-onion-routing tracing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its reports.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the circuit policy.
        #[arg(long, value_parser = parse_policy)]
        policy: Option<PolicyName>,
    },
    /// Replay the scenario for every (policy, seed) pair and compare.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Seeds to run; repeatable. Defaults to the scenario's seed list.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Policies to compare; repeatable. Defaults to all of them.
        #[arg(long = "policy", value_parser = parse_policy)]
        policies: Vec<PolicyName>,
    },
    /// Round-trip every golden fixture in a directory through the codecs.
    ValidateCodecs { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Scenario file; omitted keys keep the bundled defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report directory; defaults to the scenario's report_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value with a dotted key, e.g. bittorrent.n_peers=500.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn parse_policy(s: &str) -> Result<PolicyName, String> {
    PolicyName::parse(s).ok_or_else(|| {
        let names: Vec<&str> = PolicyName::ALL.iter().map(|p| p.as_str()).collect();
        format!("unknown policy `{s}`, expected one of {}", names.join(", "))
    })
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path, &self.overrides)?,
            None => ScenarioConfig::from_toml_str("", &self.overrides)?,
        };
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.report_dir.clone())
    }
}

fn run_one(cfg: &ScenarioConfig, dir: &Path) -> Result<DefenseRow> {
    let out = run(cfg).with_context(|| format!("running {} seed {}", cfg.name, cfg.seed))?;
    let report = analyze(&out)?;
    write_run_report(dir, &report, &out)?;
    Ok(DefenseRow::from_report(&report))
}

fn cmd_run(common: &Common, seed: Option<u64>, policy: Option<PolicyName>) -> Result<()> {
    let mut cfg = common.load()?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(p) = policy {
        cfg = cfg.with_policy(p);
    }
    let dir = common.out_dir(&cfg);
    let row = run_one(&cfg, &dir)?;
    println!(
        "{} seed {} policy {}: {} of {} streams traced ({:.4}), reports in {}",
        cfg.name,
        cfg.seed,
        cfg.tor.policy,
        row.traced_streams,
        row.total_streams,
        row.traced_fraction_all,
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(common: &Common, seeds: &[u64], policies: &[PolicyName]) -> Result<()> {
    let cfg = common.load()?;
    let seeds = if seeds.is_empty() {
        cfg.seeds.clone()
    } else {
        seeds.to_vec()
    };
    let policies = if policies.is_empty() {
        PolicyName::ALL.to_vec()
    } else {
        policies.to_vec()
    };
    if seeds.is_empty() {
        bail!("no seeds given and the scenario lists none");
    }
    let dir = common.out_dir(&cfg);
    let cells: Vec<(PolicyName, u64)> = policies
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(p, s)| {
            run_one(
                &cfg.clone().with_policy(p).with_seed(s),
                &dir.join(p.as_str()),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = compare_defenses_from(&rows);
    write_defense_report(&dir, &cfg.name, &rows, &summary)?;
    println!(
        "{:<28} {:>5} {:>10} {:>8} {:>12}",
        "policy", "runs", "traced", "sd", "same-circuit"
    );
    for s in &summary {
        println!(
            "{:<28} {:>5} {:>10.4} {:>8.4} {:>12.1}",
            s.policy.as_str(),
            s.runs,
            s.traced_fraction_mean,
            s.traced_fraction_sd,
            s.same_circuit_mean
        );
    }
    Ok(())
}

fn cmd_validate_codecs(dir: &Path) -> Result<bool> {
    let report =
        validate_dir(dir).with_context(|| format!("reading fixtures in {}", dir.display()))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for o in &report.outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status} {} {}", o.name, o.detail);
    }
    let failed = report.failures().count();
    println!("{} fixtures, {} failed", report.outcomes.len(), failed);
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            common,
            seed,
            policy,
        } => cmd_run(common, *seed, *policy).map(|()| true),
        Command::Sweep {
            common,
            seeds,
            policies,
        } => cmd_sweep(common, seeds, policies).map(|()| true),
        Command::ValidateCodecs { dir } => cmd_validate_codecs(dir),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
