use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dwlab::runner::{exit_code, parse_measure, parse_points, run, ExperimentConfig};
use dwlab::Error;
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "dwlab", version, about = "Superprocess simulation and verification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uniform marked Brownian trees, one CSV row per replicate.
    TreeSample(Opts),
    /// Moment density of a cluster or of the process; JSON result.
    MomentDensity(Opts),
    /// Particle simulation with summary statistics or particle dumps.
    Simulate(Opts),
    /// Hitting probabilities of small balls.
    Hitting(Opts),
    /// Campbell-weighted Palm estimates.
    Palm(Opts),
    /// Local decoupling diagnostics over a ladder of radii.
    Decouple(Opts),
    /// Multiple-hit diagnostics for clusters of age h.
    Multiplicity(Opts),
}

impl Command {
    fn parts(&self) -> (&'static str, &Opts) {
        match self {
            Command::TreeSample(o) => ("tree-sample", o),
            Command::MomentDensity(o) => ("moment-density", o),
            Command::Simulate(o) => ("simulate", o),
            Command::Hitting(o) => ("hitting", o),
            Command::Palm(o) => ("palm", o),
            Command::Decouple(o) => ("decouple", o),
            Command::Multiplicity(o) => ("multiplicity", o),
        }
    }
}

/// Flags override the corresponding fields of `--config`.
#[derive(Args)]
struct Opts {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output stem; `<stem>.csv` and `<stem>.json` are written.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Initial measure, e.g. `0,0,0@1;1,0,0@0.5`.
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    t: Option<f64>,
    /// Particle resolution (mass 1/N per particle).
    #[arg(long = "N")]
    n_res: Option<f64>,
    #[arg(long)]
    reps: Option<u64>,
    /// Order of trees or moment densities.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// forward, backward or sideways.
    #[arg(long)]
    method: Option<String>,
    /// Evaluation points, e.g. `0.3,0;-0.3,0.2`.
    #[arg(long)]
    xs: Option<String>,
    /// Ball centers, same syntax as `--xs`.
    #[arg(long)]
    centers: Option<String>,
    /// Radii, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    checkpoint: Option<f64>,
    /// summary or particles.
    #[arg(long)]
    emit: Option<String>,
    /// total_mass or exterior_mass.
    #[arg(long)]
    functional: Option<String>,
    #[arg(long)]
    exterior_radius: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    stationary_clusters: Option<usize>,
}

fn to_value<T: serde::Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn build_config(kind: &str, o: &Opts) -> Result<ExperimentConfig, Error> {
    let mut doc = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
            if v.get("kind").and_then(Value::as_str) != Some(kind) {
                return Err(Error::Config(format!("config kind does not match subcommand '{kind}'")));
            }
            v
        }
        None => json!({ "kind": kind, "params": {}, "output_path": kind }),
    };
    let obj = doc.as_object_mut().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    if let Some(s) = o.seed {
        obj.insert("seed".into(), json!(s));
    }
    if let Some(w) = o.workers {
        obj.insert("workers".into(), json!(w));
    }
    if let Some(p) = &o.output {
        obj.insert("output_path".into(), to_value(p));
    }
    let params = obj.entry("params").or_insert_with(|| Value::Object(Map::new()));
    let params = params.as_object_mut().ok_or_else(|| Error::Config("params must be an object".into()))?;
    let mut set = |key: &str, v: Option<Value>| {
        if let Some(v) = v {
            params.insert(key.into(), v);
        }
    };
    set("mu", o.mu.as_deref().map(parse_measure).transpose()?.map(to_value));
    set("t", o.t.map(to_value));
    set("N", o.n_res.map(to_value));
    set("reps", o.reps.map(to_value));
    set("n", o.n.map(to_value));
    set("d", o.d.map(to_value));
    set("method", o.method.clone().map(to_value));
    set("xs", o.xs.as_deref().map(parse_points).transpose()?.map(to_value));
    set("centers", o.centers.as_deref().map(parse_points).transpose()?.map(to_value));
    set("eps", o.eps.clone().map(to_value));
    set("checkpoint", o.checkpoint.map(to_value));
    set("emit", o.emit.clone().map(to_value));
    set("functional", o.functional.clone().map(to_value));
    set("exterior_radius", o.exterior_radius.map(to_value));
    set("h", o.h.map(to_value));
    set("stationary_clusters", o.stationary_clusters.map(to_value));
    ExperimentConfig::from_json(&doc.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, opts) = cli.command.parts();
    let outcome = build_config(kind, opts).and_then(|cfg| {
        println!("running {kind} (seed {}, output {})", cfg.seed, cfg.output_path.display());
        run(&cfg)
    });
    match &outcome {
        Ok(m) => {
            for r in &m.estimates {
                println!("{} = {} (stderr {})", r.name, r.value, r.stderr);
            }
            for w in &m.warnings {
                println!("warning: {w}");
            }
            println!("done in {:.2}s", m.wall_time_seconds);
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&outcome) as u8)
}
