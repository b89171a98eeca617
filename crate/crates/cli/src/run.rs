//! Command dispatch and atomic promotion of the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use powerpath::estimation::{
    cardinality_scaling, convergence_experiment, estimate_c, gw_generation_mean,
    link_tail_frequency, subadditivity_check, theta_volume_probe, ConvergenceConfig,
    EstimateRecord, Quantity, TubeEstimatorConfig,
};
use powerpath::export::{
    csv_table, format_f64, record_file_name, records_to_csv, records_to_jsonl,
};
use powerpath::geodesic::{dist_p_with_cap, solve_eikonal, CostGrid};
use powerpath::pathengine::{shortest_path, PathQuery};
use powerpath::sampling::{sample_iid, sample_iid_stream, sample_poisson, thin, Region};
use powerpath::{ConformalParams, DensityField, DomainSpec, PointCloud};
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, ExperimentConfig, Generator};
use crate::plotdata::emit_plotdata;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum RunError {
    Config(Vec<String>),
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    /// Machine-readable error record.
    pub fn to_json(&self) -> String {
        let value = match self {
            RunError::Config(errors) => json!({
                "status": "error",
                "kind": "config",
                "exit_code": EXIT_CONFIG,
                "errors": errors,
            }),
            RunError::Runtime(message) => json!({
                "status": "error",
                "kind": "runtime",
                "exit_code": EXIT_RUNTIME,
                "errors": [message],
            }),
        };
        value.to_string()
    }
}

impl From<powerpath::Error> for RunError {
    fn from(e: powerpath::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: String,
}

/// Loads a config file, fills defaults and validates it.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path)
        .map_err(|e| RunError::Config(vec![format!("{}: {e}", path.display())]))?;
    let cfg = ExperimentConfig::from_json(&text)
        .map_err(|e| RunError::Config(vec![e]))?
        .resolve();
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(RunError::Config(errors))
    }
}

struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    summary: Vec<String>,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            summary: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, body: impl Into<Vec<u8>>) {
        self.files.push((name.into(), body.into()));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serialises");
        text.push('\n');
        self.add(name, text);
    }

    fn note(&mut self, line: String) {
        self.summary.push(line);
    }

    /// One CSV and one plot file per quantity, plus a JSON-lines dump.
    fn add_records(
        &mut self,
        records: &[EstimateRecord],
        d: usize,
        p: f64,
        seed: u64,
    ) -> powerpath::Result<()> {
        let mut groups: BTreeMap<Quantity, Vec<EstimateRecord>> = BTreeMap::new();
        for r in records {
            groups.entry(r.quantity).or_default().push(r.clone());
        }
        for (q, recs) in &groups {
            let csv_name = record_file_name(*q, d, p, seed);
            let dat_name = csv_name.replace(".csv", ".dat");
            self.add(csv_name, records_to_csv(recs)?);
            self.add(dat_name, emit_plotdata(recs, *q)?);
        }
        self.add("records.jsonl", records_to_jsonl(records)?);
        for r in records {
            self.note(describe(r));
        }
        Ok(())
    }
}

fn describe(r: &EstimateRecord) -> String {
    let mut line = format!(
        "{}: {:.6} +/- {:.6} ({} trials)",
        r.quantity, r.value, r.stderr, r.trials
    );
    let e = &r.params;
    for (k, v) in [
        ("n", e.n.map(|n| n as f64)),
        ("t", e.t),
        ("generation", e.generation.map(|g| g as f64)),
    ] {
        if let Some(v) = v {
            line.push_str(&format!(" {k}={v}"));
        }
    }
    if let Some(b) = r.bound {
        line.push_str(&format!(" reference={b:.6}"));
    }
    if let Some(f) = &r.flag {
        line.push_str(&format!(" [{f}]"));
    }
    line
}

/// Runs a validated config and promotes its output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(RunError::Config(errors));
    }
    let artifacts = produce(cfg)?;
    let out_dir = cfg.output_dir.clone();
    let summary = artifacts.summary.join("\n") + "\n";
    let mut files: Vec<String> = artifacts.files.iter().map(|(n, _)| n.clone()).collect();
    files.push("summary.txt".into());
    files.push("manifest.json".into());
    let manifest = json!({
        "tool": "powerpath",
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix": SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "config": cfg,
        "files": files,
    });
    let mut all = artifacts.files;
    all.push(("summary.txt".into(), summary.clone().into_bytes()));
    all.push((
        "manifest.json".into(),
        (serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n").into_bytes(),
    ));
    write_atomically(&out_dir, &all).map_err(|e| RunError::Runtime(e.to_string()))?;
    Ok(RunOutcome {
        out_dir,
        files,
        summary,
    })
}

/// Writes into a sibling temp directory and renames it into place. An
/// existing target is replaced only when it holds a previous run.
fn write_atomically(out: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<()> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir(&tmp)?;
    let result = (|| {
        for (file, body) in files {
            fs::write(tmp.join(file), body)?;
        }
        if out.exists() {
            let empty = fs::read_dir(out)?.next().is_none();
            if out.join("manifest.json").exists() || empty {
                fs::remove_dir_all(out)?;
            } else {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    format!("{} exists and does not hold a previous run", out.display()),
                ));
            }
        }
        fs::rename(&tmp, out)
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

struct Setup {
    domain: DomainSpec,
    f: DensityField,
    params: ConformalParams,
}

fn setup(cfg: &ExperimentConfig) -> powerpath::Result<Setup> {
    let domain = cfg.domain.build()?;
    let f = cfg.density.build(&domain)?;
    let params = ConformalParams::new(cfg.params.p, domain.dimension())?;
    Ok(Setup { domain, f, params })
}

fn produce(cfg: &ExperimentConfig) -> powerpath::Result<Artifacts> {
    let Setup { domain, f, params } = setup(cfg)?;
    let seed = cfg.seed;
    let d = domain.dimension();
    let p = params.p();
    let mut art = Artifacts::new();
    art.note(format!(
        "command={:?} seed={seed} domain={} d={d} p={p}",
        cfg.command,
        domain.kind().as_str()
    ));
    match cfg.command {
        Command::Sample => {
            let b = cfg.sample.clone().unwrap_or_default();
            let cloud = match b.generator {
                Generator::Iid => {
                    let cloud = sample_iid_stream(&f, b.n, seed, 1)?;
                    match b.thin_floor {
                        Some(floor) => thin(&cloud, &f, floor, seed)?,
                        None => cloud,
                    }
                }
                Generator::Poisson => {
                    sample_poisson(b.lambda, &Region::Domain(domain.clone()), seed)?
                }
            };
            art.note(format!("points: {}", cloud.len()));
            art.add("cloud.csv", cloud.to_csv());
        }
        Command::Spp => {
            let b = cfg.spp.clone().unwrap_or_default();
            let cloud = match &b.cloud_file {
                Some(path) => PointCloud::from_csv(&fs::read_to_string(path)?, &domain)?,
                None if b.n == 0 => PointCloud::empty(&domain),
                None => sample_iid(&f, b.n, seed)?,
            };
            let mut q = PathQuery::new(&cloud, &b.source, &b.target, p)
                .with_mode(b.mode)
                .with_intensity(cloud.len().max(1) as f64 * f.inf_bound());
            q.exact_cap = b.exact_cap;
            let path = shortest_path(&q)?;
            art.note(format!(
                "length: {} cardinality: {} max_edge: {} certificate: {:?}",
                format_f64(path.length)?,
                path.cardinality,
                format_f64(path.max_edge)?,
                path.certificate
            ));
            art.add("path.json", path.to_json() + "\n");
        }
        Command::Geodesic => {
            let b = cfg.geodesic.clone().unwrap_or_default();
            let grid = CostGrid::from_density(&f, &params, b.resolution)?;
            let field = solve_eikonal(&grid, &b.source)?;
            art.add("field.bin", field.to_bytes());
            art.add("field.json", field.sidecar_json() + "\n");
            if let Some(target) = &b.target {
                let est =
                    dist_p_with_cap(&f, &params, &b.source, target, b.resolution, b.relative_cap)?;
                format_f64(est.value)?;
                art.note(format!(
                    "dist_p: {} error_estimate: {} warning: {}",
                    est.value, est.error_estimate, est.refinement_warning
                ));
                art.add_json("dist_p.json", &est);
            }
        }
        Command::EstimateC => {
            let b = cfg.estimate_c.clone().unwrap_or_default();
            let tube = TubeEstimatorConfig {
                d,
                p,
                t_schedule: b.t_schedule.clone(),
                b_rule: b.b_rule,
                trials: b.trials,
                lambda: b.lambda,
            };
            let mut records = estimate_c(&tube, seed)?.records();
            if let Some(s) = &b.subadditivity {
                records.push(subadditivity_check(&tube, s.s, s.t, s.trials, seed)?);
            }
            art.add_records(&records, d, p, seed)?;
        }
        Command::Converge => {
            let b = cfg.converge.clone().unwrap_or_default();
            let conv = ConvergenceConfig {
                n_schedule: b.n_schedule.clone(),
                pairs: b.pairs.clone(),
                trials: b.trials,
                resolution: b.resolution,
                relative_cap: b.relative_cap,
                margin_fraction: b.margin_fraction,
            };
            let out = convergence_experiment(&f, &params, &conv, seed)?;
            let rows = out
                .samples
                .iter()
                .map(|s| {
                    Ok(vec![
                        s.n.to_string(),
                        s.pair.to_string(),
                        s.trial.to_string(),
                        format_f64(s.ratio)?,
                        format_f64(s.length)?,
                        s.cardinality.to_string(),
                    ])
                })
                .collect::<powerpath::Result<Vec<_>>>()?;
            art.add(
                "ratios.csv",
                csv_table(
                    &["n", "pair", "trial", "ratio", "length", "cardinality"],
                    rows,
                )?,
            );
            for (k, v) in out.dist_p.iter().enumerate() {
                art.note(format!("dist_p[pair {k}] = {v}"));
            }
            art.add_records(&out.records, d, p, seed)?;
        }
        Command::Diagnose => {
            let b = cfg.diagnose.clone().unwrap_or_default();
            let mut records = Vec::new();
            if let Some(g) = &b.gw {
                records.extend(gw_generation_mean(
                    g.lambda,
                    g.r0,
                    &params,
                    g.generations,
                    g.trials,
                    seed,
                )?);
            }
            if let Some(c) = &b.cardinality {
                let out = cardinality_scaling(&f, &params, &c.n_schedule, &c.pair, c.trials, seed)?;
                let rows = out
                    .samples
                    .iter()
                    .map(|(n, t, v)| Ok(vec![n.to_string(), t.to_string(), format_f64(*v)?]))
                    .collect::<powerpath::Result<Vec<_>>>()?;
                art.add(
                    "cardinality_samples.csv",
                    csv_table(&["n", "trial", "normalized"], rows)?,
                );
                art.note(format!("c_star (max): {} p99: {}", out.c_star, out.p99));
                records.extend(out.records());
            }
            if let Some(t) = &b.tail {
                records.push(link_tail_frequency(
                    &f,
                    &params,
                    t.n,
                    t.threshold_factor,
                    &t.pair,
                    t.trials,
                    seed,
                )?);
            }
            if let Some(t) = &b.theta {
                let probe = theta_volume_probe(d, p, t.samples, seed)?;
                art.note(format!(
                    "theta volume / |u-v|^d: {} +/- {}",
                    probe.value, probe.stderr
                ));
                art.add_json("theta.json", &probe);
            }
            if !records.is_empty() {
                art.add_records(&records, d, p, seed)?;
            }
        }
    }
    Ok(art)
}
