//! `xpass-sim`: runs presets or config files and writes CSV artifacts.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 when a run breaks
//! an invariant (data loss under credit pacing, a queue over its bound, an
//! asymmetric path), 1 for anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use xpass_core::config::{parse_rate, Config};
use xpass_core::presets::{self, Scale};
use xpass_core::runner::{self, Report};
use xpass_core::Error;

#[derive(Parser)]
#[command(name = "xpass-sim", version, about = "Packet-level simulator for credit-based congestion control")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configuration, optionally repeated over consecutive seeds.
    Run(Common),
    /// Run one configuration per value of a config key.
    Sweep {
        /// Dotted config key, e.g. net.credit_queue_pkts.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// List the presets.
    Presets,
    /// Print the effective configuration as TOML.
    ShowConfig(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    preset: Option<String>,
    /// TOML file layered over the preset (or over the defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    /// key=value override with a dotted key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    /// desk, full, or a factor applied to the desk size.
    #[arg(long, default_value = "desk")]
    scale: String,
    /// Link rate, e.g. 10G.
    #[arg(long)]
    rate: Option<String>,
    /// The scenario's main count: flows, bottlenecks or hosts.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, env = "XPASS_OUT", default_value = "xpass-out")]
    out: PathBuf,
}

enum Failure {
    Config(String),
    Violation(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run(c) => run(&c),
        Cmd::Sweep { param, values, common } => sweep(&param, &values, &common),
        Cmd::Presets => {
            for (name, what) in presets::PRESETS {
                println!("{name:<18} {what}");
            }
            Ok(())
        }
        Cmd::ShowConfig(c) => build_config(&c).map(|cfg| print!("{}", cfg.to_toml())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Violation(m)) => {
            eprintln!("invariant violated: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn build_config(c: &Common) -> Result<Config, Failure> {
    let scale = Scale::parse(&c.scale)?;
    let mut cfg = match &c.preset {
        Some(p) => presets::preset(p, scale)?,
        None => Config::default(),
    };
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg = cfg.merge_toml(&text, &path.display().to_string())?;
    }
    cfg = cfg.with_overrides(&c.sets)?;
    if let Some(n) = c.n {
        presets::set_count(&mut cfg, n)?;
    }
    if let Some(r) = &c.rate {
        cfg.net.rate = parse_rate(r)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.repeats == 0 {
        return Err(Failure::Config("--repeats must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Job {
    dir: PathBuf,
    lead: Vec<String>,
    cfg: Config,
}

fn run(c: &Common) -> Result<(), Failure> {
    let cfg = build_config(c)?;
    let jobs: Vec<Job> = (0..c.repeats)
        .map(|r| {
            let seed = cfg.seed + r;
            let dir = if c.repeats == 1 { c.out.clone() } else { c.out.join(format!("seed-{seed}")) };
            Job { dir, lead: vec![seed.to_string()], cfg: Config { seed, ..cfg.clone() } }
        })
        .collect();
    execute(c, &cfg, "run", &["seed"], jobs, json!({}))
}

fn sweep(param: &str, values: &[String], c: &Common) -> Result<(), Failure> {
    let values: Vec<&str> = values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Config(format!("sweep over `{param}` has no values")));
    }
    let cfg = build_config(c)?;
    let mut jobs = Vec::new();
    for v in &values {
        let at = cfg.with_overrides(&[format!("{param}={v}")])?;
        for r in 0..c.repeats {
            let seed = at.seed + r;
            let mut dir = c.out.join(format!("{}={}", param, sanitize(v)));
            if c.repeats > 1 {
                dir = dir.join(format!("seed-{seed}"));
            }
            jobs.push(Job { dir, lead: vec![param.to_string(), v.to_string(), seed.to_string()], cfg: Config { seed, ..at.clone() } });
        }
    }
    execute(c, &cfg, "sweep", &["param", "value", "seed"], jobs, json!({ "param": param, "values": values }))
}

fn sanitize(v: &str) -> String {
    v.chars().map(|ch| if ch.is_ascii_alphanumeric() || ".-_".contains(ch) { ch } else { '_' }).collect()
}

fn execute(c: &Common, base: &Config, command: &str, lead: &[&str], jobs: Vec<Job>, extra: serde_json::Value) -> Result<(), Failure> {
    let reports: Vec<Result<Report, Error>> = jobs.par_iter().map(|j| runner::execute(&j.cfg)).collect();
    let mut done = Vec::with_capacity(jobs.len());
    for (job, rep) in jobs.iter().zip(reports) {
        done.push((job, rep?));
    }
    fs::create_dir_all(&c.out)?;
    let mut files = serde_json::Map::new();
    let mut violations = Vec::new();
    for (job, rep) in &done {
        fs::create_dir_all(&job.dir)?;
        let artifacts = [
            ("flows.csv", rep.flows_csv()),
            ("ports.csv", rep.ports_csv()),
            ("rates.csv", rep.rates_csv()),
            ("config.toml", rep.config.to_toml()),
        ];
        for (name, body) in artifacts {
            let path = job.dir.join(name);
            fs::write(&path, &body)?;
            files.insert(relative(&c.out, &path), json!(hex(&Sha256::digest(body.as_bytes()))));
        }
        for v in &rep.violations {
            violations.push(format!("{}: {v}", job.dir.display()));
        }
    }
    let rows: Vec<(Vec<String>, &Report)> = done.iter().map(|(j, r)| (j.lead.clone(), r)).collect();
    let summary = runner::summary_csv(lead, &rows);
    fs::write(c.out.join("summary.csv"), &summary)?;
    files.insert("summary.csv".into(), json!(hex(&Sha256::digest(summary.as_bytes()))));
    let manifest = json!({
        "tool": "xpass-sim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "preset": c.preset,
        "scale": c.scale,
        "config_file": c.config.as_ref().map(|p| p.display().to_string()),
        "overrides": c.sets,
        "config_sha256": hex(&Sha256::digest(base.to_toml().as_bytes())),
        "seeds": done.iter().map(|(_, r)| r.config.seed).collect::<Vec<_>>(),
        "sweep": extra,
        "files": files,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(c.out.join("manifest.json"), text + "\n")?;
    print!("{summary}");
    if violations.is_empty() {
        Ok(())
    } else {
        let more = violations.len().saturating_sub(5);
        let mut msg = violations[..violations.len().min(5)].join("; ");
        if more > 0 {
            msg.push_str(&format!("; and {more} more"));
        }
        Err(Failure::Violation(msg))
    }
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
