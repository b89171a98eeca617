//! Experiment configuration: strict JSON schema with explicit defaults.

use std::path::PathBuf;

use powerpath::estimation::{AnchorPair, RadiusRule};
use powerpath::geometry::{Bump, DEFAULT_MARGIN_FRACTION};
use powerpath::pathengine::{Mode, DEFAULT_EXACT_CAP};
use powerpath::{DensityField, DomainKind, DomainSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    Spp,
    Geodesic,
    EstimateC,
    Converge,
    Diagnose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub domain: DomainBlock,
    #[serde(default)]
    pub density: DensityBlock,
    pub params: ParamsBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spp: Option<SppBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geodesic: Option<GeodesicBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_c: Option<EstimateCBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseBlock>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("powerpath-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub kind: DomainKind,
    pub d: usize,
    #[serde(default = "one")]
    pub side: f64,
    /// Per-axis sides; overrides `side`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sides: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

impl DomainBlock {
    pub fn build(&self) -> powerpath::Result<DomainSpec> {
        match &self.sides {
            Some(s) => DomainSpec::new(self.kind, s.clone()),
            None => DomainSpec::cube(self.kind, self.d, self.side),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityBlock {
    #[default]
    Uniform,
    Bump {
        amplitude: f64,
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Mixture {
        bumps: Vec<Bump>,
    },
}

impl DensityBlock {
    pub fn build(&self, domain: &DomainSpec) -> powerpath::Result<DensityField> {
        match self {
            DensityBlock::Uniform => Ok(DensityField::uniform(domain)),
            DensityBlock::Bump {
                amplitude,
                width,
                center,
            } => DensityField::bump(domain, *amplitude, *width, center.clone()),
            DensityBlock::Mixture { bumps } => DensityField::mixture(domain, bumps.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[default]
    Iid,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleBlock {
    pub generator: Generator,
    /// Point count for i.i.d. sampling.
    pub n: usize,
    /// Intensity for Poisson sampling.
    pub lambda: f64,
    /// Thin the i.i.d. cloud down to this uniform intensity floor.
    pub thin_floor: Option<f64>,
}

impl Default for SampleBlock {
    fn default() -> Self {
        Self {
            generator: Generator::Iid,
            n: 1000,
            lambda: 1000.0,
            thin_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SppBlock {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    /// i.i.d. cloud size; 0 gives the empty cloud.
    pub n: usize,
    pub mode: Mode,
    pub exact_cap: usize,
    /// Point cloud CSV to use instead of sampling.
    pub cloud_file: Option<PathBuf>,
}

impl Default for SppBlock {
    fn default() -> Self {
        Self {
            source: Vec::new(),
            target: Vec::new(),
            n: 0,
            mode: Mode::Pruned,
            exact_cap: DEFAULT_EXACT_CAP,
            cloud_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicBlock {
    pub source: Vec<f64>,
    pub target: Option<Vec<f64>>,
    pub resolution: usize,
    pub relative_cap: f64,
}

impl Default for GeodesicBlock {
    fn default() -> Self {
        Self {
            source: Vec::new(),
            target: None,
            resolution: 128,
            relative_cap: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubadditivityBlock {
    pub s: f64,
    pub t: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateCBlock {
    pub t_schedule: Vec<f64>,
    pub trials: usize,
    pub b_rule: RadiusRule,
    pub lambda: f64,
    pub subadditivity: Option<SubadditivityBlock>,
}

impl Default for EstimateCBlock {
    fn default() -> Self {
        Self {
            t_schedule: vec![10.0, 20.0, 40.0, 80.0],
            trials: 200,
            b_rule: RadiusRule::default(),
            lambda: 1.0,
            subadditivity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeBlock {
    pub n_schedule: Vec<usize>,
    pub pairs: Vec<AnchorPair>,
    pub trials: usize,
    pub resolution: usize,
    pub relative_cap: f64,
    pub margin_fraction: f64,
}

impl Default for ConvergeBlock {
    fn default() -> Self {
        Self {
            n_schedule: vec![1000, 10000],
            pairs: Vec::new(),
            trials: 50,
            resolution: 256,
            relative_cap: 0.02,
            margin_fraction: DEFAULT_MARGIN_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GwBlock {
    pub lambda: f64,
    pub r0: f64,
    pub generations: usize,
    pub trials: usize,
}

impl Default for GwBlock {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            r0: 1.0,
            generations: 3,
            trials: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CardinalityBlock {
    pub n_schedule: Vec<usize>,
    pub pair: AnchorPair,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailBlock {
    pub n: usize,
    #[serde(default = "one")]
    pub threshold_factor: f64,
    pub pair: AnchorPair,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaBlock {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gw: Option<GwBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<CardinalityBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaBlock>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Fills the active command's block with defaults when absent.
    pub fn resolve(mut self) -> Self {
        match self.command {
            Command::Sample => {
                self.sample.get_or_insert_with(SampleBlock::default);
            }
            Command::Spp => {
                self.spp.get_or_insert_with(SppBlock::default);
            }
            Command::Geodesic => {
                self.geodesic.get_or_insert_with(GeodesicBlock::default);
            }
            Command::EstimateC => {
                self.estimate_c.get_or_insert_with(EstimateCBlock::default);
            }
            Command::Converge => {
                self.converge.get_or_insert_with(ConvergeBlock::default);
            }
            Command::Diagnose => {
                self.diagnose.get_or_insert_with(DiagnoseBlock::default);
            }
        }
        self
    }

    /// Every violated field, as `path: message`.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, msg: String| errs.push(format!("{field}: {msg}"));
        let d = self.domain.d;
        let domain = match self.domain.build() {
            Ok(dom) => {
                if dom.dimension() != d {
                    bad(
                        "domain.d",
                        format!("sides give d = {}, not {d}", dom.dimension()),
                    );
                }
                Some(dom)
            }
            Err(e) => {
                bad("domain", e.to_string());
                None
            }
        };
        if !(self.params.p >= 1.0 && self.params.p.is_finite()) {
            bad(
                "params.p",
                format!("must be a finite value >= 1, got {}", self.params.p),
            );
        }
        if let Some(dom) = &domain {
            if let Err(e) = self.density.build(dom) {
                bad("density", e.to_string());
            }
        }
        let point = |field: &str, x: &[f64], bad: &mut dyn FnMut(&str, String)| {
            if x.is_empty() {
                bad(field, "required".into());
            } else if x.len() != d {
                bad(field, format!("expected {d} coordinates, got {}", x.len()));
            } else if let Some(dom) = &domain {
                if !dom.contains(x) {
                    bad(field, format!("{x:?} lies outside the domain"));
                }
            }
        };
        let pair = |field: &str, p: &AnchorPair, bad: &mut dyn FnMut(&str, String)| {
            point(&format!("{field}.x"), &p.x, bad);
            point(&format!("{field}.y"), &p.y, bad);
        };
        let positive = |field: &str, v: f64, bad: &mut dyn FnMut(&str, String)| {
            if !(v > 0.0 && v.is_finite()) {
                bad(field, format!("must be > 0, got {v}"));
            }
        };
        let at_least = |field: &str, v: usize, min: usize, bad: &mut dyn FnMut(&str, String)| {
            if v < min {
                bad(field, format!("must be >= {min}, got {v}"));
            }
        };
        let schedule = |field: &str, ns: &[usize], bad: &mut dyn FnMut(&str, String)| {
            if ns.is_empty() || ns.contains(&0) {
                bad(field, "must be a non-empty list of positive sizes".into());
            }
        };
        match self.command {
            Command::Sample => {
                let b = self.sample.clone().unwrap_or_default();
                match b.generator {
                    Generator::Iid => at_least("sample.n", b.n, 1, &mut bad),
                    Generator::Poisson => positive("sample.lambda", b.lambda, &mut bad),
                }
                if let Some(floor) = b.thin_floor {
                    positive("sample.thin_floor", floor, &mut bad);
                    if b.generator == Generator::Poisson {
                        bad(
                            "sample.thin_floor",
                            "thinning applies to i.i.d. clouds".into(),
                        );
                    }
                }
            }
            Command::Spp => {
                let b = self.spp.clone().unwrap_or_default();
                point("spp.source", &b.source, &mut bad);
                point("spp.target", &b.target, &mut bad);
                if b.cloud_file.is_some() && b.n > 0 {
                    bad("spp.n", "give either n or cloud_file, not both".into());
                }
            }
            Command::Geodesic => {
                let b = self.geodesic.clone().unwrap_or_default();
                point("geodesic.source", &b.source, &mut bad);
                if let Some(t) = &b.target {
                    point("geodesic.target", t, &mut bad);
                }
                at_least("geodesic.resolution", b.resolution, 16, &mut bad);
                if d > 3 {
                    bad("domain.d", "fast marching supports d <= 3".into());
                }
                positive("geodesic.relative_cap", b.relative_cap, &mut bad);
            }
            Command::EstimateC => {
                let b = self.estimate_c.clone().unwrap_or_default();
                if b.t_schedule.is_empty() {
                    bad("estimate_c.t_schedule", "must not be empty".into());
                }
                if b.t_schedule.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    bad("estimate_c.t_schedule", "entries must be > 0".into());
                }
                if b.t_schedule.windows(2).any(|w| w[1] <= w[0]) {
                    bad(
                        "estimate_c.t_schedule",
                        "must be strictly increasing".into(),
                    );
                }
                at_least("estimate_c.trials", b.trials, 2, &mut bad);
                positive("estimate_c.lambda", b.lambda, &mut bad);
                match b.b_rule {
                    RadiusRule::Power { scale, exponent } => {
                        positive("estimate_c.b_rule.scale", scale, &mut bad);
                        positive("estimate_c.b_rule.exponent", exponent, &mut bad);
                    }
                    RadiusRule::Log { scale } => {
                        positive("estimate_c.b_rule.scale", scale, &mut bad)
                    }
                }
                if let Some(s) = &b.subadditivity {
                    positive("estimate_c.subadditivity.s", s.s, &mut bad);
                    positive("estimate_c.subadditivity.t", s.t, &mut bad);
                    at_least("estimate_c.subadditivity.trials", s.trials, 2, &mut bad);
                }
            }
            Command::Converge => {
                let b = self.converge.clone().unwrap_or_default();
                schedule("converge.n_schedule", &b.n_schedule, &mut bad);
                if b.pairs.is_empty() {
                    bad("converge.pairs", "required".into());
                }
                for (i, p) in b.pairs.iter().enumerate() {
                    pair(&format!("converge.pairs[{i}]"), p, &mut bad);
                }
                at_least("converge.trials", b.trials, 2, &mut bad);
                at_least("converge.resolution", b.resolution, 16, &mut bad);
                positive("converge.relative_cap", b.relative_cap, &mut bad);
                if !(0.0..0.5).contains(&b.margin_fraction) {
                    bad(
                        "converge.margin_fraction",
                        format!("must lie in [0, 0.5), got {}", b.margin_fraction),
                    );
                }
            }
            Command::Diagnose => {
                let b = self.diagnose.clone().unwrap_or_default();
                if b.gw.is_none()
                    && b.cardinality.is_none()
                    && b.tail.is_none()
                    && b.theta.is_none()
                {
                    bad(
                        "diagnose",
                        "enable at least one of gw, cardinality, tail, theta".into(),
                    );
                }
                if let Some(g) = &b.gw {
                    positive("diagnose.gw.lambda", g.lambda, &mut bad);
                    if !(g.r0 >= 0.0 && g.r0.is_finite()) {
                        bad("diagnose.gw.r0", format!("must be >= 0, got {}", g.r0));
                    }
                    at_least("diagnose.gw.generations", g.generations, 1, &mut bad);
                    at_least("diagnose.gw.trials", g.trials, 2, &mut bad);
                }
                if let Some(c) = &b.cardinality {
                    schedule("diagnose.cardinality.n_schedule", &c.n_schedule, &mut bad);
                    pair("diagnose.cardinality.pair", &c.pair, &mut bad);
                    at_least("diagnose.cardinality.trials", c.trials, 2, &mut bad);
                    if self.density != DensityBlock::Uniform {
                        bad(
                            "density",
                            "cardinality scaling needs a uniform density".into(),
                        );
                    }
                }
                if let Some(t) = &b.tail {
                    at_least("diagnose.tail.n", t.n, 1, &mut bad);
                    positive(
                        "diagnose.tail.threshold_factor",
                        t.threshold_factor,
                        &mut bad,
                    );
                    pair("diagnose.tail.pair", &t.pair, &mut bad);
                    at_least("diagnose.tail.trials", t.trials, 2, &mut bad);
                }
                if let Some(t) = &b.theta {
                    at_least("diagnose.theta.samples", t.samples, 2, &mut bad);
                }
            }
        }
        errs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"{
        "command": "converge",
        "seed": 5,
        "domain": {"kind": "torus", "d": 2},
        "density": {"kind": "bump", "amplitude": 1.0, "width": 0.15},
        "params": {"p": 2.0},
        "converge": {"n_schedule": [2000], "trials": 10,
                     "pairs": [{"x": [0.25, 0.5], "y": [0.75, 0.5]}]}
    }"#;

    #[test]
    fn round_trip_with_defaults() {
        let cfg = ExperimentConfig::from_json(SMOKE).unwrap().resolve();
        assert!(cfg.validate().is_empty());
        let text = cfg.to_json();
        assert!(text.contains("\"resolution\": 256"));
        assert!(text.contains("\"output_dir\""));
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_field_rejected() {
        let bad = SMOKE.replace("\"seed\": 5", "\"seed\": 5, \"sede\": 1");
        assert!(ExperimentConfig::from_json(&bad)
            .unwrap_err()
            .contains("sede"));
    }

    #[test]
    fn every_violation_listed() {
        let text = r#"{
            "command": "converge",
            "domain": {"kind": "box", "d": 2, "side": -1.0},
            "params": {"p": 0.5},
            "converge": {"n_schedule": [], "trials": 1, "pairs": []}
        }"#;
        let errs = ExperimentConfig::from_json(text).unwrap().validate();
        for field in [
            "domain",
            "params.p",
            "converge.n_schedule",
            "converge.pairs",
            "converge.trials",
        ] {
            assert!(
                errs.iter().any(|e| e.starts_with(&format!("{field}:"))),
                "{field} in {errs:?}"
            );
        }
    }

    #[test]
    fn spp_points_checked() {
        let text = r#"{
            "command": "spp",
            "domain": {"kind": "box", "d": 2},
            "params": {"p": 2.0},
            "spp": {"source": [0.1], "target": [2.0, 0.5]}
        }"#;
        let errs = ExperimentConfig::from_json(text).unwrap().validate();
        assert_eq!(errs.len(), 2, "{errs:?}");
    }
}
