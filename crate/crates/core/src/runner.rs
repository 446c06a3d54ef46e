//! Experiment configs, dispatch and output files.
//!
//! A config is a JSON document
//!
//! ```json
//! { "kind": "hitting", "params": { ... }, "seed": 7, "workers": 1, "output_path": "out/hit" }
//! ```
//!
//! `output_path` is a stem: the run writes `<stem>.csv` (row data, when
//! the kind produces rows) and `<stem>.json` (the [`ResultManifest`]).
//! Rows are written as they are produced. All floats are printed with 17
//! significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::kernels::{DiscreteMeasure, Point, PointTuple};
use crate::moments::{process_moment_density, MomentDensityRequest};
use crate::palm::{
    campbell_weights, decoupling_from_scan, factorization_at, moment_ratio, multiplicity_from_scan, check_regime, DecouplingRequest,
    Functional, Scan,
};
use crate::par::{replicate_range, with_workers};
use crate::sim::{simulate_streaming, Workspace};
use crate::stats::{EstimateWithError, Method, RunningStats};
use crate::tree::{brownian_leaves, sample_topology, Construction, DiscreteTreeTopology};

/// Parses `"x1,x2,...@mass;..."` (mass defaults to 1).
pub fn parse_measure(spec: &str) -> Result<DiscreteMeasure> {
    let mut atoms = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (coords, mass) = match part.split_once('@') {
            Some((c, m)) => (c, m.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad mass in '{part}': {e}")))?),
            None => (part, 1.0),
        };
        atoms.push((Point::new(parse_coords(coords)?)?, mass));
    }
    DiscreteMeasure::new(atoms)
}

/// Parses `"x1,x2,...;y1,y2,..."` into points.
pub fn parse_points(spec: &str) -> Result<PointTuple> {
    let pts = spec.split(';').map(str::trim).filter(|p| !p.is_empty()).map(|p| Point::new(parse_coords(p)?)).collect::<Result<Vec<_>>>()?;
    PointTuple::new(pts)
}

fn parse_coords(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|c| c.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad coordinate '{c}': {e}")))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    #[default]
    Summary,
    Particles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSampleParams {
    pub n: usize,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "two")]
    pub d: usize,
    #[serde(default = "backward")]
    pub method: Construction,
    pub reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateParams {
    pub mu: DiscreteMeasure,
    pub t: f64,
    #[serde(rename = "N")]
    pub n_res: f64,
    pub reps: u64,
    #[serde(default)]
    pub checkpoint: Option<f64>,
    #[serde(default)]
    pub emit: Emit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingParams {
    pub mu: DiscreteMeasure,
    pub t: f64,
    #[serde(rename = "N")]
    pub n_res: f64,
    pub centers: PointTuple,
    pub eps: Vec<f64>,
    pub reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalmParams {
    pub mu: DiscreteMeasure,
    pub t: f64,
    #[serde(rename = "N")]
    pub n_res: f64,
    pub centers: PointTuple,
    pub eps: Vec<f64>,
    pub functional: Functional,
    #[serde(default)]
    pub exterior_radius: Option<f64>,
    pub reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoupleParams {
    pub mu: DiscreteMeasure,
    pub t: f64,
    #[serde(rename = "N")]
    pub n_res: f64,
    pub centers: PointTuple,
    pub exterior_radius: f64,
    pub eps: Vec<f64>,
    pub reps: u64,
    #[serde(default = "default_clusters")]
    pub stationary_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityParams {
    pub mu: DiscreteMeasure,
    pub t: f64,
    #[serde(rename = "N")]
    pub n_res: f64,
    pub centers: PointTuple,
    pub eps: Vec<f64>,
    /// Cluster age; defaults to `min(eps)^1.5`.
    #[serde(default)]
    pub h: Option<f64>,
    pub reps: u64,
}

impl MultiplicityParams {
    pub fn cluster_age(&self) -> f64 {
        self.h.unwrap_or_else(|| self.eps.iter().copied().fold(f64::INFINITY, f64::min).powf(1.5))
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn backward() -> Construction {
    Construction::Backward
}
fn default_clusters() -> usize {
    4000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum Params {
    TreeSample(TreeSampleParams),
    MomentDensity(MomentDensityRequest),
    Simulate(SimulateParams),
    Hitting(HittingParams),
    Palm(PalmParams),
    Decouple(DecoupleParams),
    Multiplicity(MultiplicityParams),
}

impl Params {
    pub fn kind(&self) -> &'static str {
        match self {
            Params::TreeSample(_) => "tree-sample",
            Params::MomentDensity(_) => "moment-density",
            Params::Simulate(_) => "simulate",
            Params::Hitting(_) => "hitting",
            Params::Palm(_) => "palm",
            Params::Decouple(_) => "decouple",
            Params::Multiplicity(_) => "multiplicity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub params: Params,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub workers: usize,
    pub output_path: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    /// Checks the target operation's preconditions without running it.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 {
                Ok(())
            } else {
                config(format!("{name} must be positive"))
            }
        }
        fn reps(r: u64) -> Result<()> {
            if r == 0 {
                config("reps must be positive")
            } else {
                Ok(())
            }
        }
        match &self.params {
            Params::TreeSample(p) => {
                if p.n < 1 || p.d < 1 {
                    return config("tree-sample needs n >= 1 and d >= 1");
                }
                positive("t", p.t)?;
                reps(p.reps)
            }
            Params::MomentDensity(p) => {
                if p.xs.len() != p.n || p.xs.dim() != p.d {
                    return config("xs must hold n points of dimension d");
                }
                if p.n > 3 {
                    return Err(Error::UnsupportedOrder(p.n));
                }
                positive("t", p.t)
            }
            Params::Simulate(p) => {
                positive("t", p.t)?;
                if let Some(s) = p.checkpoint {
                    if !(0.0..p.t).contains(&s) {
                        return config("checkpoint must lie in [0, t)");
                    }
                }
                if p.n_res < 100.0 {
                    return config("N must be at least 100");
                }
                if p.n_res * p.mu.total_mass() < 10.0 {
                    return config("N too small to resolve the initial measure");
                }
                reps(p.reps)
            }
            Params::Hitting(p) => self.scan_for(&p.mu, p.t, p.n_res, &p.centers, &p.eps, None, None, p.reps).validate_public(),
            Params::Palm(p) => {
                if p.functional == Functional::ExteriorMass && p.exterior_radius.is_none() {
                    return config("the exterior functional needs an exterior radius");
                }
                self.scan_for(&p.mu, p.t, p.n_res, &p.centers, &p.eps, p.exterior_radius, None, p.reps).validate_public()
            }
            Params::Decouple(p) => {
                if p.stationary_clusters == 0 {
                    return config("stationary_clusters must be positive");
                }
                self.scan_for(&p.mu, p.t, p.n_res, &p.centers, &p.eps, Some(p.exterior_radius), None, p.reps).validate_public()
            }
            Params::Multiplicity(p) => {
                for &e in &p.eps {
                    check_regime(e, p.cluster_age(), p.centers.dim())?;
                }
                self.scan_for(&p.mu, p.t, p.n_res, &p.centers, &p.eps, None, Some(p.cluster_age()), p.reps).validate_public()
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn scan_for(
        &self,
        mu: &DiscreteMeasure,
        t: f64,
        n_res: f64,
        centers: &PointTuple,
        eps: &[f64],
        exterior_radius: Option<f64>,
        label_age: Option<f64>,
        reps: u64,
    ) -> Scan {
        Scan {
            mu: mu.clone(),
            t,
            n_res,
            centers: centers.clone(),
            eps: eps.to_vec(),
            exterior_radius,
            label_age,
            reps,
            seed: self.seed,
        }
    }
}

/// One named estimate in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub reps: u64,
    pub method: Method,
    #[serde(default)]
    pub tolerance: f64,
}

impl Record {
    fn new(name: impl Into<String>, e: &EstimateWithError) -> Self {
        Record { name: name.into(), value: e.value, stderr: e.stderr, reps: e.reps, method: e.method, tolerance: e.tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub config: ExperimentConfig,
    pub code_version: String,
    /// Elapsed seconds; the only field that varies between reruns.
    pub wall_time_seconds: f64,
    pub estimates: Vec<Record>,
    pub warnings: Vec<String>,
    /// Extra structured output of the kind (for example the request echo
    /// of a moment-density run).
    #[serde(default)]
    pub details: serde_json::Value,
}

impl ResultManifest {
    /// The manifest with its timing zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        ResultManifest { wall_time_seconds: 0.0, ..self.clone() }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Output {
    csv: Option<csv::Writer<BufWriter<File>>>,
    stem: PathBuf,
}

impl Output {
    fn new(stem: &Path) -> Self {
        Output { csv: None, stem: stem.to_path_buf() }
    }

    fn header(&mut self, cols: &[String]) -> Result<()> {
        if let Some(parent) = self.stem.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let f = File::create(self.stem.with_extension("csv")).map_err(io)?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(f));
        w.write_record(cols).map_err(csv_err)?;
        self.csv = Some(w);
        Ok(())
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.csv.as_mut().expect("header written first").write_record(fields).map_err(csv_err)
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(w) = self.csv.as_mut() {
            w.flush().map_err(io)?;
        }
        Ok(())
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Emitted particles of one replicate: `(ancestor, coordinates)`.
type ParticleRows = Vec<(u64, Vec<f64>)>;

/// Replicates per block of incrementally written rows.
const BLOCK: u64 = 4096;

/// Validates, dispatches and writes all outputs. On a budget error the
/// manifest is still written, with the error among its warnings.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultManifest> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = Output::new(&cfg.output_path);
    let mut manifest = ResultManifest {
        config: cfg.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: 0.0,
        estimates: Vec::new(),
        warnings: Vec::new(),
        details: serde_json::Value::Null,
    };
    let outcome = with_workers(cfg.workers, || dispatch(cfg, &mut out, &mut manifest));
    out.finish()?;
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    if let Err(e @ Error::Budget { .. }) = &outcome {
        manifest.warnings.push(e.to_string());
    }
    if outcome.is_ok() || matches!(outcome, Err(Error::Budget { .. })) {
        write_manifest(&cfg.output_path, &manifest)?;
    }
    outcome.map(|_| manifest)
}

fn write_manifest(stem: &Path, m: &ResultManifest) -> Result<()> {
    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut f = BufWriter::new(File::create(stem.with_extension("json")).map_err(io)?);
    serde_json::to_writer_pretty(&mut f, m).map_err(|e| Error::Io(e.to_string()))?;
    f.write_all(b"\n").map_err(io)?;
    f.flush().map_err(io)
}

fn dispatch(cfg: &ExperimentConfig, out: &mut Output, m: &mut ResultManifest) -> Result<()> {
    match &cfg.params {
        Params::TreeSample(p) => tree_sample(p, cfg.seed, out, m),
        Params::MomentDensity(p) => {
            let mut req = p.clone();
            req.seed = cfg.seed;
            let e = process_moment_density(&req)?;
            m.estimates.push(Record::new("moment_density", &e));
            m.details = serde_json::json!({ "request": req, "value": e.value, "stderr": e.stderr, "tolerance": e.tolerance, "method": e.method });
            Ok(())
        }
        Params::Simulate(p) => simulate(p, cfg.seed, out, m),
        Params::Hitting(p) => {
            let res = cfg.scan_for(&p.mu, p.t, p.n_res, &p.centers, &p.eps, None, None, p.reps).run()?;
            out.header(&cols(&["eps", "estimate", "stderr", "reps", "hits"]))?;
            for (e, &eps) in res.eps.iter().enumerate() {
                let est = res.joint(e);
                out.row(&[num(eps), num(est.value), num(est.stderr), res.reps.to_string(), res.joint_hits[e].to_string()])?;
                m.estimates.push(Record::new(format!("joint_hit[eps={eps}]"), &est));
            }
            if p.centers.len() == 2 {
                let ratio = moment_ratio(&p.mu, p.t, &p.centers)?;
                for e in 0..res.eps.len() {
                    match factorization_at(&res, e, ratio) {
                        Ok(f) => m.estimates.push(Record::new(format!("ratio_of_ratios[eps={}]", f.eps), &f.ratio_of_ratios)),
                        Err(err) => m.warnings.push(err.to_string()),
                    }
                }
            }
            for e in 0..res.eps.len() {
                res.require_hits(e)?;
            }
            Ok(())
        }
        Params::Palm(p) => {
            let res = cfg.scan_for(&p.mu, p.t, p.n_res, &p.centers, &p.eps, p.exterior_radius, None, p.reps).run()?;
            out.header(&cols(&["eps", "estimate", "stderr", "reps", "hits", "ess"]))?;
            for (e, &eps) in res.eps.iter().enumerate() {
                let w = campbell_weights(&res, e, p.functional, p.n_res, |_| true)?;
                let mean = w.weighted_mean(res.reps);
                out.row(&[num(eps), num(mean.value), num(mean.stderr), res.reps.to_string(), res.joint_hits[e].to_string(), num(w.ess())])?;
                m.estimates.push(Record::new(format!("campbell_mean[eps={eps}]"), &mean));
            }
            Ok(())
        }
        Params::Decouple(p) => {
            let res = cfg.scan_for(&p.mu, p.t, p.n_res, &p.centers, &p.eps, Some(p.exterior_radius), None, p.reps).run()?;
            let req = DecouplingRequest {
                mu: p.mu.clone(),
                t: p.t,
                n_res: p.n_res,
                centers: p.centers.clone(),
                exterior_radius: p.exterior_radius,
                eps: p.eps.clone(),
                reps: p.reps,
                stationary_clusters: p.stationary_clusters,
                seed: cfg.seed,
            };
            let report = decoupling_from_scan(&res, &req)?;
            out.header(&cols(&["eps", "estimate", "stderr", "reps", "hits", "quantity"]))?;
            for r in &report.rungs {
                let hits = r.joint_hits.to_string();
                let reps = res.reps.to_string();
                out.row(&[num(r.eps), num(r.dependence.value), num(r.dependence.stderr), reps.clone(), hits.clone(), "dependence".into()])?;
                for (j, dist) in r.ball_vs_stationary.iter().enumerate() {
                    out.row(&[num(r.eps), num(dist.debiased), num(dist.stderr), reps.clone(), hits.clone(), format!("ball_{j}_vs_stationary")])?;
                }
                let x = &r.exterior_vs_palm;
                out.row(&[num(r.eps), num(x.debiased), num(x.stderr), reps, hits, "exterior_vs_palm".into()])?;
            }
            m.details = serde_json::to_value(&report).map_err(|e| Error::Io(e.to_string()))?;
            Ok(())
        }
        Params::Multiplicity(p) => {
            let res = cfg.scan_for(&p.mu, p.t, p.n_res, &p.centers, &p.eps, None, Some(p.cluster_age()), p.reps).run()?;
            out.header(&cols(&["eps", "estimate", "stderr", "reps", "hits", "quantity"]))?;
            for (e, &eps) in res.eps.iter().enumerate() {
                let r = multiplicity_from_scan(&res, e);
                let hits = res.joint_hits[e].to_string();
                for (name, est) in [
                    ("one_cluster_two_balls", &r.one_cluster_two_balls),
                    ("one_ball_two_clusters", &r.one_ball_two_clusters),
                    ("multiplicity", &r.multiplicity),
                    ("joint", &r.joint),
                    ("ratio", &r.ratio),
                ] {
                    out.row(&[num(eps), num(est.value), num(est.stderr), res.reps.to_string(), hits.clone(), name.into()])?;
                    m.estimates.push(Record::new(format!("{name}[eps={eps}]"), est));
                }
            }
            for e in 0..res.eps.len() {
                res.require_hits(e)?;
            }
            Ok(())
        }
    }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn tree_sample(p: &TreeSampleParams, seed: u64, out: &mut Output, m: &mut ResultManifest) -> Result<()> {
    let mut header = cols(&["rep", "topology_id"]);
    header.extend((1..p.n).map(|k| format!("tau_{k}")));
    for i in 1..=p.n {
        header.extend((1..=p.d).map(|a| format!("leaf_{i}_{a}")));
    }
    out.header(&header)?;
    let root = vec![0.0; p.d];
    let mut freq = vec![0u64; crate::tree::topology_count(p.n) as usize];
    let mut start = 0;
    while start < p.reps {
        let end = (start + BLOCK).min(p.reps);
        let rows = replicate_range(seed, start..end, |_, rng| -> Result<(u64, Vec<f64>, Vec<f64>)> {
            let topo = if p.n == 1 { DiscreteTreeTopology::leaf() } else { sample_topology(p.n, p.method, rng)? };
            let times = crate::point_process::sample_uniform_binomial(p.n - 1, p.t, rng).times;
            let leaves = brownian_leaves(&topo, &times, p.t, &root, rng);
            Ok((topo.id(), times, leaves))
        });
        for (i, row) in rows.into_iter().enumerate() {
            let (id, times, leaves) = row?;
            freq[id as usize] += 1;
            let mut fields = vec![(start + i as u64).to_string(), id.to_string()];
            fields.extend(times.iter().map(|&x| num(x)));
            fields.extend(leaves.iter().map(|&x| num(x)));
            out.row(&fields)?;
        }
        start = end;
    }
    for (id, &c) in freq.iter().enumerate() {
        let e = crate::stats::binomial_estimate(c, p.reps);
        m.estimates.push(Record::new(format!("topology_frequency[{id}]"), &e));
    }
    Ok(())
}

fn simulate(p: &SimulateParams, seed: u64, out: &mut Output, m: &mut ResultManifest) -> Result<()> {
    let d = p.mu.dim().ok_or_else(|| Error::Config("initial measure has no atoms".into()))?;
    if p.emit == Emit::Particles {
        let mut header = cols(&["rep", "particle_idx", "ancestor_id"]);
        header.extend((1..=d).map(|a| format!("x_{a}")));
        header.push("mass".into());
        out.header(&header)?;
    }
    let mass = 1.0 / p.n_res;
    let mut totals = Vec::with_capacity(p.reps as usize);
    let mut ancestors = Vec::with_capacity(p.reps as usize);
    let mut labels = RunningStats::new();
    let mut start = 0;
    while start < p.reps {
        let end = (start + BLOCK).min(p.reps);
        let emit = p.emit == Emit::Particles;
        let block = replicate_range(seed, start..end, |_, rng| -> Result<(crate::sim::RunSummary, ParticleRows)> {
            let mut ws = Workspace::default();
            let mut parts = Vec::new();
            let s = simulate_streaming(&p.mu, p.t, p.n_res, p.checkpoint, rng, &mut ws, |leaf| {
                if emit {
                    parts.push((if p.checkpoint.is_some_and(|s| s > 0.0) { leaf.label } else { leaf.family }, leaf.pos.to_vec()));
                }
            })?;
            Ok((s, parts))
        });
        for (i, r) in block.into_iter().enumerate() {
            let (s, parts) = r?;
            totals.push(s.particles as f64 * mass);
            ancestors.push(s.families as f64);
            labels.push(s.labels as f64);
            for (k, (anc, x)) in parts.iter().enumerate() {
                let mut fields = vec![(start + i as u64).to_string(), k.to_string(), anc.to_string()];
                fields.extend(x.iter().map(|&v| num(v)));
                fields.push(num(mass));
                out.row(&fields)?;
            }
        }
        start = end;
    }
    let raw = |k: i32| totals.iter().map(|x| x.powi(k)).collect::<RunningStats>().estimate();
    m.estimates.push(Record::new("total_mass_mean", &raw(1)));
    m.estimates.push(Record::new("total_mass_second_moment", &raw(2)));
    m.estimates.push(Record::new("total_mass_third_moment", &raw(3)));
    m.estimates.push(Record::new("total_mass_variance", &variance_estimate(&totals)));
    m.estimates.push(Record::new("surviving_ancestors_mean", &ancestors.iter().copied().collect::<RunningStats>().estimate()));
    m.estimates.push(Record::new("surviving_ancestors_variance", &variance_estimate(&ancestors)));
    if p.checkpoint.is_some() {
        m.estimates.push(Record::new("checkpoint_labels_mean", &labels.estimate()));
    }
    Ok(())
}

/// Sample variance with the large-sample standard error
/// `√((m₄ - s⁴)/n)`.
pub fn variance_estimate(xs: &[f64]) -> EstimateWithError {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    EstimateWithError::monte_carlo(var, ((m4 - var * var).max(0.0) / n).sqrt(), xs.len() as u64)
}

/// Exit status for a run outcome: 0 ok, 2 validation, 3 budget, 4 internal.
pub fn exit_code(outcome: &Result<ResultManifest>) -> i32 {
    match outcome {
        Ok(_) => 0,
        Err(Error::Domain(_) | Error::Config(_) | Error::UnsupportedOrder(_) | Error::Pathological(_)) => 2,
        Err(Error::Budget { .. }) => 3,
        Err(_) => 4,
    }
}
