//! Monte-Carlo estimators and diagnostics built on the path engine.
//!
//! Every estimator takes a master seed and derives one RNG stream per
//! `(schedule point, trial)` so results do not depend on the thread count.
//! Trials run through rayon; aggregation always folds in trial order.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geodesic::{dist_p_with_cap, DEFAULT_RELATIVE_CAP};
use crate::geometry::{
    unit_ball_volume, weight_from_dist2, ConformalParams, DensityField, DomainSpec,
    DEFAULT_MARGIN_FRACTION,
};
use crate::pathengine::{path_link_stats, shortest_path_pruned, PathQuery, PathResult};
use crate::rng::TrialStreams;
use crate::sampling::{
    poisson_count, sample_iid_stream, sample_poisson_stream, PointCloud, Region, Tube,
};
use crate::stats;

pub const GW_POPULATION_CAP: usize = 1_000_000;

const TAG_TUBE: u64 = 1;
const TAG_SUBADD: u64 = 2;
const TAG_CONVERGE: u64 = 3;
const TAG_CARDINALITY: u64 = 4;
const TAG_GW: u64 = 5;
const TAG_TAIL: u64 = 6;
const TAG_THETA: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Cdp,
    MeanCurvePoint,
    CardinalitySlope,
    #[serde(rename = "gw_gen_mean")]
    GWGenMean,
    TailFreq,
    ConvergenceRatio,
    Subadditivity,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Cdp => "cdp",
            Quantity::MeanCurvePoint => "mean_curve_point",
            Quantity::CardinalitySlope => "cardinality_slope",
            Quantity::GWGenMean => "gw_gen_mean",
            Quantity::TailFreq => "tail_freq",
            Quantity::ConvergenceRatio => "convergence_ratio",
            Quantity::Subadditivity => "subadditivity",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters echoed next to every record. Unused slots stay `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamEcho {
    pub d: usize,
    pub p: f64,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub n: Option<usize>,
    pub t: Option<f64>,
    pub b: Option<f64>,
    pub pair: Option<usize>,
    pub generation: Option<usize>,
}

impl ParamEcho {
    pub fn new(d: usize, p: f64, seed: u64) -> Self {
        Self {
            d,
            p,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub quantity: Quantity,
    pub value: f64,
    pub stderr: f64,
    pub trials: usize,
    pub params: ParamEcho,
    pub median: Option<f64>,
    /// Analytic reference value, when one exists.
    pub bound: Option<f64>,
    pub flag: Option<String>,
}

impl EstimateRecord {
    /// Mean and `sample_std / sqrt(trials)` of the samples.
    pub fn from_samples(quantity: Quantity, samples: &[f64], params: ParamEcho) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Parameter(format!(
                "an estimate needs at least 2 trials, got {}",
                samples.len()
            )));
        }
        Ok(Self {
            quantity,
            value: stats::mean(samples),
            stderr: stats::stderr(samples),
            trials: samples.len(),
            params,
            median: None,
            bound: None,
            flag: None,
        })
    }

    pub fn with_median(mut self, samples: &[f64]) -> Self {
        self.median = Some(stats::median(samples));
        self
    }

    pub fn with_flag(mut self, flag: impl Into<String>) -> Self {
        self.flag = Some(flag.into());
        self
    }

    /// x-coordinate used for plots and ordering: n, t or generation.
    pub fn abscissa(&self) -> Option<f64> {
        let p = &self.params;
        p.n.map(|n| n as f64)
            .or(p.t)
            .or(p.generation.map(|g| g as f64))
    }
}

/// Tube radius as a function of the segment length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiusRule {
    /// `b_t = scale * t^exponent`, exponent > 0.
    Power { scale: f64, exponent: f64 },
    /// `b_t = scale * ln(1 + t)`.
    Log { scale: f64 },
}

impl Default for RadiusRule {
    fn default() -> Self {
        RadiusRule::Power {
            scale: 1.0,
            exponent: 0.5,
        }
    }
}

impl RadiusRule {
    pub fn radius(&self, t: f64) -> f64 {
        match *self {
            RadiusRule::Power { scale, exponent } => scale * t.powf(exponent),
            RadiusRule::Log { scale } => scale * t.ln_1p(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadiusRule::Power { scale, exponent } => {
                scale > 0.0 && scale.is_finite() && exponent > 0.0 && exponent.is_finite()
            }
            RadiusRule::Log { scale } => scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "tube radius rule {self:?} must grow without bound"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeEstimatorConfig {
    pub d: usize,
    pub p: f64,
    pub t_schedule: Vec<f64>,
    pub b_rule: RadiusRule,
    pub trials: usize,
    pub lambda: f64,
}

impl TubeEstimatorConfig {
    pub fn new(d: usize, p: f64, t_schedule: Vec<f64>, trials: usize) -> Self {
        Self {
            d,
            p,
            t_schedule,
            b_rule: RadiusRule::default(),
            trials,
            lambda: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ConformalParams::new(self.p, self.d)?;
        self.b_rule.validate()?;
        if self.trials < 2 {
            return Err(Error::Parameter(format!(
                "trials must be >= 2, got {}",
                self.trials
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if self.t_schedule.is_empty() {
            return Err(Error::Parameter("t_schedule is empty".into()));
        }
        if self.t_schedule.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Parameter("t_schedule entries must be > 0".into()));
        }
        if self.t_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(
                "t_schedule must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Mean nearest-neighbour distance of the Poisson process.
    pub fn mean_spacing(&self) -> f64 {
        let d = self.d as f64;
        statrs::function::gamma::gamma(1.0 + 1.0 / d)
            / (self.lambda * unit_ball_volume(self.d)).powf(1.0 / d)
    }
}

/// Per-t mean of `L / t` plus the constant estimates derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeEstimate {
    pub curve: Vec<EstimateRecord>,
    /// Largest-t mean.
    pub cdp: EstimateRecord,
    /// Intercept of the curve regressed on `1/t`; needs two or more t values.
    pub extrapolated: Option<EstimateRecord>,
}

impl TubeEstimate {
    pub fn records(&self) -> Vec<EstimateRecord> {
        let mut out = self.curve.clone();
        out.push(self.cdp.clone());
        out.extend(self.extrapolated.clone());
        out
    }
}

fn trial_error(at: String, trial: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Trial {
        at,
        trial,
        source: Box::new(e),
    }
}

/// Anchors `(b, .., b)` and `(b + len, b, .., b)` so the tube sits in the
/// positive orthant.
fn tube_along_axis(d: usize, len: f64, b: f64) -> Result<Tube> {
    Tube::along_first_axis(d, len, b)
}

fn tube_path(tube: &Tube, cloud: &PointCloud, p: f64, lambda: f64) -> Result<PathResult> {
    let q = PathQuery::new(cloud, &tube.start, &tube.end, p).with_intensity(lambda);
    shortest_path_pruned(&q)
}

/// Tube-restricted Poisson estimator of `C(d, p)`.
pub fn estimate_c(cfg: &TubeEstimatorConfig, seed: u64) -> Result<TubeEstimate> {
    cfg.validate()?;
    let streams = TrialStreams::new(seed, TAG_TUBE);
    let spacing = cfg.mean_spacing();
    let mut curve = Vec::with_capacity(cfg.t_schedule.len());
    for (ti, &t) in cfg.t_schedule.iter().enumerate() {
        let b = cfg.b_rule.radius(t);
        let tube = tube_along_axis(cfg.d, t, b)?;
        let region = Region::Tube(tube.clone());
        let samples: Vec<f64> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let stream = streams.stream(&[ti as u64, trial as u64]);
                let path = sample_poisson_stream(cfg.lambda, &region, seed, stream)
                    .and_then(|cloud| tube_path(&tube, &cloud, cfg.p, cfg.lambda))
                    .map_err(trial_error(format!("t = {t}"), trial))?;
                // the anchor distance, not t, so p = 1 gives exactly 1
                let span = tube.length();
                Ok(path.length / span)
            })
            .collect::<Result<_>>()?;
        let mut params = ParamEcho::new(cfg.d, cfg.p, seed);
        params.lambda = Some(cfg.lambda);
        params.t = Some(t);
        params.b = Some(b);
        let mut rec = EstimateRecord::from_samples(Quantity::MeanCurvePoint, &samples, params)?
            .with_median(&samples);
        if t < spacing {
            rec = rec.with_flag("pre_asymptotic");
        }
        curve.push(rec);
    }
    let last = curve.last().expect("schedule is non-empty");
    let mut cdp = last.clone();
    cdp.quantity = Quantity::Cdp;
    let extrapolated = extrapolate_inverse_t(&curve).map(|(value, stderr)| {
        let mut rec = cdp.clone();
        rec.value = value;
        rec.stderr = stderr;
        rec.median = None;
        rec.params.t = None;
        rec.params.b = None;
        rec.flag = Some("extrapolated_1_over_t".into());
        rec
    });
    Ok(TubeEstimate {
        curve,
        cdp,
        extrapolated,
    })
}

/// OLS intercept of the means against `1/t`, stderr propagated from the
/// per-t standard errors.
fn extrapolate_inverse_t(curve: &[EstimateRecord]) -> Option<(f64, f64)> {
    let xs: Vec<f64> = curve
        .iter()
        .map(|r| 1.0 / r.params.t.unwrap_or(f64::NAN))
        .collect();
    let ys: Vec<f64> = curve.iter().map(|r| r.value).collect();
    let fit = stats::ols(&xs, &ys)?;
    let w = stats::ols_intercept_weights(&xs)?;
    let var: f64 = w
        .iter()
        .zip(curve)
        .map(|(w, r)| w * w * r.stderr * r.stderr)
        .sum();
    Some((fit.intercept, var.sqrt()))
}

/// Per-trial terms of the coupled subadditivity statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubadditivitySample {
    pub whole: f64,
    pub left: f64,
    pub right: f64,
    pub correction: f64,
}

impl SubadditivitySample {
    /// `L(s+t) - L(s) - L(t) - correction`; nonpositive by the pasting bound.
    pub fn statistic(&self) -> f64 {
        self.whole - self.left - self.right - self.correction
    }
}

/// One Poisson cloud on `T(0, (s+t) e_1; b)` per trial, restricted to the
/// two halves, with `b = b_rule(s + t)` shared by all three tubes.
pub fn subadditivity_samples(
    cfg: &TubeEstimatorConfig,
    s: f64,
    t: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<SubadditivitySample>> {
    cfg.validate()?;
    for (name, v) in [("s", s), ("t", t)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("{name} must be > 0, got {v}")));
        }
    }
    if trials < 2 {
        return Err(Error::Parameter(format!(
            "trials must be >= 2, got {trials}"
        )));
    }
    let b = cfg.b_rule.radius(s + t);
    let whole = tube_along_axis(cfg.d, s + t, b)?;
    let mut mid = whole.start.clone();
    mid[0] += s;
    let left = Tube::new(whole.start.clone(), mid.clone(), b)?;
    let right = Tube::new(mid, whole.end.clone(), b)?;
    let region = Region::Tube(whole.clone());
    let factor = 2f64.powf(cfg.p - 1.0) - 1.0;
    let streams = TrialStreams::new(seed, TAG_SUBADD);
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let run = || -> Result<SubadditivitySample> {
                let cloud = sample_poisson_stream(
                    cfg.lambda,
                    &region,
                    seed,
                    streams.stream(&[trial as u64]),
                )?;
                let full = tube_path(&whole, &cloud, cfg.p, cfg.lambda)?;
                let a = tube_path(
                    &left,
                    &cloud.filter(|x| left.contains(x)),
                    cfg.p,
                    cfg.lambda,
                )?;
                let c = tube_path(
                    &right,
                    &cloud.filter(|x| right.contains(x)),
                    cfg.p,
                    cfg.lambda,
                )?;
                let domain = cloud.domain();
                let joint = a.last_edge(domain) + c.first_edge(domain);
                Ok(SubadditivitySample {
                    whole: full.length,
                    left: a.length,
                    right: c.length,
                    correction: factor * weight_from_dist2(joint * joint, cfg.p),
                })
            };
            run().map_err(trial_error(format!("s = {s}, t = {t}"), trial))
        })
        .collect()
}

/// Mean and stderr of `L(s+t) - L(s) - L(t) - correction` over coupled
/// trials. The inequality holds when `value <= 3 * stderr`.
pub fn subadditivity_check(
    cfg: &TubeEstimatorConfig,
    s: f64,
    t: f64,
    trials: usize,
    seed: u64,
) -> Result<EstimateRecord> {
    let samples = subadditivity_samples(cfg, s, t, trials, seed)?;
    let stat: Vec<f64> = samples.iter().map(|x| x.statistic()).collect();
    let mut params = ParamEcho::new(cfg.d, cfg.p, seed);
    params.lambda = Some(cfg.lambda);
    params.t = Some(s + t);
    params.b = Some(cfg.b_rule.radius(s + t));
    Ok(EstimateRecord::from_samples(Quantity::Subadditivity, &stat, params)?.with_median(&stat))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl AnchorPair {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub n_schedule: Vec<usize>,
    pub pairs: Vec<AnchorPair>,
    pub trials: usize,
    /// Fast-marching resolution for `dist_p`.
    pub resolution: usize,
    pub relative_cap: f64,
    pub margin_fraction: f64,
}

impl ConvergenceConfig {
    pub fn new(n_schedule: Vec<usize>, pairs: Vec<AnchorPair>, trials: usize) -> Self {
        Self {
            n_schedule,
            pairs,
            trials,
            resolution: 256,
            relative_cap: DEFAULT_RELATIVE_CAP,
            margin_fraction: DEFAULT_MARGIN_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioSample {
    pub n: usize,
    pub pair: usize,
    pub trial: usize,
    pub ratio: f64,
    pub length: f64,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceOutput {
    /// One record per `(n, pair)`, n-major.
    pub records: Vec<EstimateRecord>,
    /// Per-trial ratios in `(n, trial, pair)` order.
    pub samples: Vec<RatioSample>,
    pub dist_p: Vec<f64>,
}

fn check_schedule(ns: &[usize]) -> Result<()> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::Parameter(
            "n_schedule must be non-empty and positive".into(),
        ));
    }
    Ok(())
}

fn check_anchors(domain: &DomainSpec, pair: &AnchorPair, margin: f64) -> Result<()> {
    for x in [&pair.x, &pair.y] {
        domain.check_point(x)?;
        if !domain.respects_margin(x, margin) {
            return Err(Error::Domain(format!(
                "anchor {x:?} is closer than {margin} x side to the boundary"
            )));
        }
    }
    if domain.dist2(&pair.x, &pair.y) == 0.0 {
        return Err(Error::Parameter("anchor pair coincides".into()));
    }
    Ok(())
}

/// Ratios `n^((p-1)/d) L_n(x, y) / dist_p(x, y)` over i.i.d. clouds.
pub fn convergence_experiment(
    f: &DensityField,
    params: &ConformalParams,
    cfg: &ConvergenceConfig,
    seed: u64,
) -> Result<ConvergenceOutput> {
    let domain = f.domain();
    if params.d() != domain.dimension() {
        return Err(Error::Parameter(
            "params and domain dimensions differ".into(),
        ));
    }
    check_schedule(&cfg.n_schedule)?;
    if cfg.trials < 2 {
        return Err(Error::Parameter(format!(
            "trials must be >= 2, got {}",
            cfg.trials
        )));
    }
    if cfg.pairs.is_empty() {
        return Err(Error::Parameter("no anchor pairs".into()));
    }
    let mut dists = Vec::with_capacity(cfg.pairs.len());
    let mut warned = Vec::with_capacity(cfg.pairs.len());
    for pair in &cfg.pairs {
        check_anchors(domain, pair, cfg.margin_fraction)?;
        let est = dist_p_with_cap(
            f,
            params,
            &pair.x,
            &pair.y,
            cfg.resolution,
            cfg.relative_cap,
        )?;
        dists.push(est.value);
        warned.push(est.refinement_warning);
    }
    let streams = TrialStreams::new(seed, TAG_CONVERGE);
    let p = params.p();
    let mut records = Vec::new();
    let mut samples = Vec::new();
    for &n in &cfg.n_schedule {
        let scale = (n as f64).powf((p - 1.0) / params.d() as f64);
        let intensity = n as f64 * f.inf_bound();
        let per_trial: Vec<Vec<RatioSample>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let run = || -> Result<Vec<RatioSample>> {
                    let stream = streams.stream(&[n as u64, trial as u64]);
                    let cloud = sample_iid_stream(f, n, seed, stream)?;
                    cfg.pairs
                        .iter()
                        .enumerate()
                        .map(|(k, pair)| {
                            let q = PathQuery::new(&cloud, &pair.x, &pair.y, p)
                                .with_intensity(intensity);
                            let path = shortest_path_pruned(&q)?;
                            Ok(RatioSample {
                                n,
                                pair: k,
                                trial,
                                ratio: scale * path.length / dists[k],
                                length: path.length,
                                cardinality: path.cardinality,
                            })
                        })
                        .collect()
                };
                run().map_err(trial_error(format!("n = {n}"), trial))
            })
            .collect::<Result<_>>()?;
        for k in 0..cfg.pairs.len() {
            let ratios: Vec<f64> = per_trial.iter().map(|row| row[k].ratio).collect();
            let mut echo = ParamEcho::new(params.d(), p, seed);
            echo.n = Some(n);
            echo.pair = Some(k);
            echo.t = Some(domain.dist2(&cfg.pairs[k].x, &cfg.pairs[k].y).sqrt());
            let mut rec = EstimateRecord::from_samples(Quantity::ConvergenceRatio, &ratios, echo)?
                .with_median(&ratios);
            rec.bound = Some(dists[k]);
            if warned[k] {
                rec = rec.with_flag("dist_p_refinement_warning");
            }
            records.push(rec);
        }
        samples.extend(per_trial.into_iter().flatten());
    }
    Ok(ConvergenceOutput {
        records,
        samples,
        dist_p: dists,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CardinalityOutput {
    /// Slope of the normalized cardinality against `log10 n`.
    pub slope: EstimateRecord,
    /// Per-n mean normalized cardinality.
    pub per_n: Vec<EstimateRecord>,
    /// Empirical `C_*`: the largest normalized value seen.
    pub c_star: f64,
    pub p99: f64,
    /// `(n, trial, normalized)` in schedule order.
    pub samples: Vec<(usize, usize, f64)>,
}

impl CardinalityOutput {
    pub fn records(&self) -> Vec<EstimateRecord> {
        let mut out = self.per_n.clone();
        out.push(self.slope.clone());
        out
    }
}

/// `#L / ((n f)^(1/d) |x - y|)` across an n schedule; uniform density only.
pub fn cardinality_scaling(
    f: &DensityField,
    params: &ConformalParams,
    n_schedule: &[usize],
    pair: &AnchorPair,
    trials: usize,
    seed: u64,
) -> Result<CardinalityOutput> {
    if !f.is_uniform() {
        return Err(Error::DensityContract(
            "cardinality scaling assumes a uniform density".into(),
        ));
    }
    check_schedule(n_schedule)?;
    if trials < 2 {
        return Err(Error::Parameter(format!(
            "trials must be >= 2, got {trials}"
        )));
    }
    let domain = f.domain();
    domain.check_point(&pair.x)?;
    domain.check_point(&pair.y)?;
    let span = domain.dist2(&pair.x, &pair.y).sqrt();
    let density = f.inf_bound();
    let d = params.d() as f64;
    let streams = TrialStreams::new(seed, TAG_CARDINALITY);
    let mut samples = Vec::new();
    let mut per_n = Vec::new();
    for &n in n_schedule {
        let norm = (n as f64 * density).powf(1.0 / d) * span;
        let values: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let stream = streams.stream(&[n as u64, trial as u64]);
                sample_iid_stream(f, n, seed, stream)
                    .and_then(|cloud| {
                        let q = PathQuery::new(&cloud, &pair.x, &pair.y, params.p())
                            .with_intensity(n as f64 * density);
                        shortest_path_pruned(&q)
                    })
                    .map(|path| path.cardinality as f64 / norm)
                    .map_err(trial_error(format!("n = {n}"), trial))
            })
            .collect::<Result<_>>()?;
        let mut echo = ParamEcho::new(params.d(), params.p(), seed);
        echo.n = Some(n);
        echo.t = Some(span);
        per_n.push(
            EstimateRecord::from_samples(Quantity::MeanCurvePoint, &values, echo)?
                .with_median(&values),
        );
        samples.extend(values.into_iter().enumerate().map(|(t, v)| (n, t, v)));
    }
    let ys: Vec<f64> = samples.iter().map(|s| s.2).collect();
    let (value, stderr) = cardinality_trend(&per_n, &samples);
    let c_star = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p99 = stats::percentile(&ys, 0.99);
    let mut echo = ParamEcho::new(params.d(), params.p(), seed);
    echo.t = Some(span);
    let slope = EstimateRecord {
        quantity: Quantity::CardinalitySlope,
        value,
        stderr,
        trials,
        params: echo,
        median: None,
        bound: Some(c_star),
        flag: None,
    };
    Ok(CardinalityOutput {
        slope,
        per_n,
        c_star,
        p99,
        samples,
    })
}

/// Slope of the normalized cardinality against `log10 n`. Per-n means are
/// weighted by their standard errors (the spread shrinks with n); with a
/// degenerate spread the per-trial values are fitted unweighted.
fn cardinality_trend(per_n: &[EstimateRecord], samples: &[(usize, usize, f64)]) -> (f64, f64) {
    let log_n = |n: Option<usize>| (n.unwrap_or(1) as f64).log10();
    let xs: Vec<f64> = per_n.iter().map(|r| log_n(r.params.n)).collect();
    let ys: Vec<f64> = per_n.iter().map(|r| r.value).collect();
    let ses: Vec<f64> = per_n.iter().map(|r| r.stderr).collect();
    if let Some(fit) = stats::wls(&xs, &ys, &ses) {
        return (fit.slope, fit.slope_stderr);
    }
    let xs: Vec<f64> = samples.iter().map(|s| (s.0 as f64).log10()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.2).collect();
    match stats::ols(&xs, &ys) {
        Some(fit) if fit.slope_stderr.is_finite() => (fit.slope, fit.slope_stderr),
        // a single n: no trend can be fitted
        _ => (0.0, 0.0),
    }
}

/// `(lambda V_d r0^(d/p))^k Gamma(1 + d/p)^k / Gamma(1 + k d/p)`.
pub fn gw_analytic_bound(lambda: f64, r0: f64, params: &ConformalParams, generation: usize) -> f64 {
    if generation == 0 {
        return 1.0;
    }
    if r0 == 0.0 {
        return 0.0;
    }
    let d = params.d() as f64;
    let k = generation as f64;
    let dp = d / params.p();
    let base = lambda * unit_ball_volume(params.d()) * r0.powf(dp);
    (k * base.ln() + k * ln_gamma(1.0 + dp) - ln_gamma(1.0 + k * dp)).exp()
}

/// Generation sizes of one exploration. Only the hop lengths matter for the
/// budgets, so children are drawn by radius alone.
fn gw_trial<R: Rng + ?Sized>(
    lambda: f64,
    r0: f64,
    params: &ConformalParams,
    n_gen: usize,
    cap: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let d = params.d();
    let p = params.p();
    let vd = unit_ball_volume(d);
    let mut budgets = vec![r0];
    let mut sizes = Vec::with_capacity(n_gen);
    for generation in 1..=n_gen {
        let mut next = Vec::new();
        for &r in &budgets {
            let reach = r.powf(1.0 / p);
            let count = poisson_count(lambda * vd * reach.powi(d as i32), rng)?;
            for _ in 0..count {
                let u: f64 = rng.random();
                let hop = reach * u.powf(1.0 / d as f64);
                next.push(r - weight_from_dist2(hop * hop, p));
            }
            if next.len() > cap {
                return Err(Error::Explosion {
                    generation,
                    population: next.len(),
                });
            }
        }
        sizes.push(next.len());
        budgets = next;
    }
    Ok(sizes)
}

/// Empirical generation means of the branching exploration, each with the
/// analytic right-hand side in `bound`.
pub fn gw_generation_mean(
    lambda: f64,
    r0: f64,
    params: &ConformalParams,
    n_gen: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<EstimateRecord>> {
    gw_generation_mean_capped(lambda, r0, params, n_gen, trials, seed, GW_POPULATION_CAP)
}

pub fn gw_generation_mean_capped(
    lambda: f64,
    r0: f64,
    params: &ConformalParams,
    n_gen: usize,
    trials: usize,
    seed: u64,
    cap: usize,
) -> Result<Vec<EstimateRecord>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    if !(r0 >= 0.0 && r0.is_finite()) {
        return Err(Error::Parameter(format!("r0 must be >= 0, got {r0}")));
    }
    if n_gen == 0 {
        return Err(Error::Parameter("need at least one generation".into()));
    }
    let streams = TrialStreams::new(seed, TAG_GW);
    let sizes: Vec<Vec<usize>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = streams.rng(&[trial as u64]);
            gw_trial(lambda, r0, params, n_gen, cap, &mut rng)
        })
        .collect::<Result<_>>()?;
    (1..=n_gen)
        .map(|g| {
            let xs: Vec<f64> = sizes.iter().map(|s| s[g - 1] as f64).collect();
            let mut echo = ParamEcho::new(params.d(), params.p(), seed);
            echo.lambda = Some(lambda);
            echo.t = Some(r0);
            echo.generation = Some(g);
            let mut rec = EstimateRecord::from_samples(Quantity::GWGenMean, &xs, echo)?;
            rec.bound = Some(gw_analytic_bound(lambda, r0, params, g));
            Ok(rec)
        })
        .collect()
}

/// Fraction of trials whose path has a link longer than
/// `threshold_factor * (n f_m)^((alpha - 1)/d)`.
pub fn link_tail_frequency(
    f: &DensityField,
    params: &ConformalParams,
    n: usize,
    threshold_factor: f64,
    pair: &AnchorPair,
    trials: usize,
    seed: u64,
) -> Result<EstimateRecord> {
    if !(threshold_factor > 0.0) {
        return Err(Error::Parameter(format!(
            "threshold factor must be > 0, got {threshold_factor}"
        )));
    }
    let domain = f.domain();
    domain.check_point(&pair.x)?;
    domain.check_point(&pair.y)?;
    let f_m = f.inf_bound();
    let streams = TrialStreams::new(seed, TAG_TAIL);
    let hits: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let cloud = sample_iid_stream(f, n, seed, streams.stream(&[trial as u64]))?;
            let q =
                PathQuery::new(&cloud, &pair.x, &pair.y, params.p()).with_intensity(n as f64 * f_m);
            let path = shortest_path_pruned(&q)?;
            let link = path_link_stats(&path, params, n, f_m);
            Ok(if path.max_edge > threshold_factor * link.threshold {
                1.0
            } else {
                0.0
            })
        })
        .collect::<Result<_>>()?;
    let mut echo = ParamEcho::new(params.d(), params.p(), seed);
    echo.n = Some(n);
    let mut rec = EstimateRecord::from_samples(Quantity::TailFreq, &hits, echo)?;
    rec.bound = Some(threshold_factor);
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeProbe {
    /// Volume of the domination region divided by `|u - v|^d`.
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Monte-Carlo volume of `{w : |u-w|^p + |w-v|^p < |u-v|^p}` for `|u-v| = 1`.
/// The region lies inside the lens of the two unit balls, so the cube
/// `[-1, 1] x [-1, 1]^(d-1)` around the midpoint covers it.
pub fn theta_volume_probe(d: usize, p: f64, samples: usize, seed: u64) -> Result<VolumeProbe> {
    let params = ConformalParams::new(p, d)?;
    if samples < 2 {
        return Err(Error::Parameter("need at least 2 samples".into()));
    }
    let mut rng = TrialStreams::new(seed, TAG_THETA).rng(&[d as u64, p.to_bits()]);
    let cube = 2f64.powi(d as i32);
    let mut w = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..samples {
        for c in w.iter_mut() {
            *c = 2.0 * rng.random::<f64>() - 1.0;
        }
        // u = -e1/2, v = +e1/2
        let rest: f64 = w[1..].iter().map(|c| c * c).sum();
        let du = (w[0] + 0.5).powi(2) + rest;
        let dv = (w[0] - 0.5).powi(2) + rest;
        if weight_from_dist2(du, params.p()) + weight_from_dist2(dv, params.p()) < 1.0 {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    let var = frac * (1.0 - frac) / (samples - 1) as f64;
    Ok(VolumeProbe {
        value: cube * frac,
        stderr: cube * var.sqrt(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn record_needs_two_trials() {
        let echo = ParamEcho::new(2, 2.0, 1);
        assert!(EstimateRecord::from_samples(Quantity::Cdp, &[1.0], echo.clone()).is_err());
        let r = EstimateRecord::from_samples(Quantity::Cdp, &[1.0, 3.0], echo).unwrap();
        assert_eq!(r.value, 2.0);
        assert!((r.stderr - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_contracts() {
        let mut cfg = TubeEstimatorConfig::new(2, 2.0, vec![10.0, 20.0], 5);
        assert!(cfg.validate().is_ok());
        cfg.t_schedule = vec![20.0, 10.0];
        assert!(cfg.validate().is_err());
        cfg.t_schedule = vec![10.0];
        cfg.b_rule = RadiusRule::Power {
            scale: 1.0,
            exponent: 0.0,
        };
        assert!(cfg.validate().is_err());
        cfg.b_rule = RadiusRule::Log { scale: 2.0 };
        assert!(cfg.validate().is_ok());
        cfg.trials = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn p_one_is_exactly_one() {
        let cfg = TubeEstimatorConfig::new(2, 1.0, vec![3.0, 7.0, 13.0], 6);
        let est = estimate_c(&cfg, 11).unwrap();
        for r in &est.curve {
            assert_eq!(r.value, 1.0);
            assert_eq!(r.stderr, 0.0);
        }
        assert_eq!(est.cdp.value, 1.0);
        assert_eq!(est.cdp.quantity, Quantity::Cdp);
    }

    #[test]
    fn tiny_t_is_flagged_and_near_direct() {
        let cfg = TubeEstimatorConfig::new(2, 2.0, vec![0.05, 0.1], 20);
        let est = estimate_c(&cfg, 3).unwrap();
        for r in &est.curve {
            let t = r.params.t.unwrap();
            assert_eq!(r.flag.as_deref(), Some("pre_asymptotic"));
            // L <= t^p, and an empty tube gives equality
            assert!(r.value <= t + 1e-12);
            assert!(r.value > 0.5 * t);
        }
    }

    #[test]
    fn extrapolation_recovers_linear_curve() {
        let curve: Vec<EstimateRecord> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&t| {
                let mut echo = ParamEcho::new(2, 2.0, 0);
                echo.t = Some(t);
                EstimateRecord {
                    quantity: Quantity::MeanCurvePoint,
                    value: 1.5 + 2.0 / t,
                    stderr: 0.1,
                    trials: 10,
                    params: echo,
                    median: None,
                    bound: None,
                    flag: None,
                }
            })
            .collect();
        let (a, se) = extrapolate_inverse_t(&curve).unwrap();
        assert!((a - 1.5).abs() < 1e-12);
        let w = stats::ols_intercept_weights(&[0.1, 0.05, 0.025]).unwrap();
        let expect = 0.1 * w.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((se - expect).abs() < 1e-15);
    }

    #[test]
    fn subadditivity_is_pathwise() {
        let cfg = TubeEstimatorConfig::new(2, 2.0, vec![1.0], 2);
        let samples = subadditivity_samples(&cfg, 5.0, 7.0, 20, 9).unwrap();
        for s in samples {
            assert!(s.statistic() <= 1e-12, "{s:?}");
        }
        assert!(subadditivity_check(&cfg, 0.0, 5.0, 10, 1).is_err());
    }

    #[test]
    fn subadditivity_p_one_is_additive() {
        let cfg = TubeEstimatorConfig::new(3, 1.0, vec![1.0], 2);
        let rec = subadditivity_check(&cfg, 4.0, 6.0, 8, 2).unwrap();
        assert!(rec.value.abs() < 1e-12);
    }

    #[test]
    fn gw_bound_values() {
        let params = ConformalParams::new(2.0, 2).unwrap();
        assert!((gw_analytic_bound(1.0, 1.0, &params, 1) - PI).abs() < 1e-12);
        assert!((gw_analytic_bound(1.0, 1.0, &params, 2) - PI * PI / 2.0).abs() < 1e-12);
        assert!((gw_analytic_bound(1.0, 1.0, &params, 3) - PI.powi(3) / 6.0).abs() < 1e-11);
        assert_eq!(gw_analytic_bound(1.0, 0.0, &params, 2), 0.0);
    }

    #[test]
    fn gw_empty_and_explosion() {
        let params = ConformalParams::new(2.0, 2).unwrap();
        let recs = gw_generation_mean(1.0, 0.0, &params, 3, 10, 4).unwrap();
        assert!(recs.iter().all(|r| r.value == 0.0 && r.stderr == 0.0));
        let err = gw_generation_mean_capped(1.0, 4.0, &params, 4, 4, 4, 50).unwrap_err();
        assert!(matches!(err, Error::Explosion { .. }));
    }

    #[test]
    fn gw_first_generation_mean() {
        let params = ConformalParams::new(2.0, 2).unwrap();
        let recs = gw_generation_mean(1.0, 1.0, &params, 2, 4000, 8).unwrap();
        let g1 = &recs[0];
        assert!((g1.value - PI).abs() < 4.0 * g1.stderr, "{g1:?}");
    }

    #[test]
    fn theta_is_thales_disc_at_p2() {
        let probe = theta_volume_probe(2, 2.0, 200_000, 5).unwrap();
        assert!(
            (probe.value - PI / 4.0).abs() < 4.0 * probe.stderr,
            "{probe:?}"
        );
        // larger p dominates more
        let p3 = theta_volume_probe(2, 3.0, 200_000, 5).unwrap();
        assert!(p3.value > probe.value);
        // p = 1 never dominates strictly
        assert_eq!(theta_volume_probe(2, 1.0, 10_000, 5).unwrap().value, 0.0);
    }

    #[test]
    fn tail_threshold_infinite() {
        let dom = DomainSpec::unit_torus(2).unwrap();
        let f = DensityField::uniform(&dom);
        let params = ConformalParams::new(2.0, 2).unwrap();
        let pair = AnchorPair::new(vec![0.25, 0.5], vec![0.75, 0.5]);
        let r = link_tail_frequency(&f, &params, 300, f64::INFINITY, &pair, 4, 1).unwrap();
        assert_eq!(r.value, 0.0);
        let params1 = ConformalParams::new(1.0, 2).unwrap();
        let r = link_tail_frequency(&f, &params1, 2000, 1.0, &pair, 4, 1).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn convergence_p_one_uniform() {
        let dom = DomainSpec::unit_box(2).unwrap();
        let f = DensityField::uniform(&dom);
        let params = ConformalParams::new(1.0, 2).unwrap();
        let pairs = vec![
            AnchorPair::new(vec![0.3, 0.3], vec![0.7, 0.6]),
            AnchorPair::new(vec![0.5, 0.3], vec![0.5, 0.7]),
        ];
        let cfg = ConvergenceConfig::new(vec![50, 400], pairs, 3);
        let out = convergence_experiment(&f, &params, &cfg, 2).unwrap();
        assert_eq!(out.samples.len(), 2 * 3 * 2);
        assert!(out.samples.iter().all(|s| s.ratio == 1.0));
        assert_eq!(out.records.len(), 4);
    }

    #[test]
    fn convergence_rejects_margin() {
        let dom = DomainSpec::unit_box(2).unwrap();
        let f = DensityField::uniform(&dom);
        let params = ConformalParams::new(2.0, 2).unwrap();
        let pairs = vec![AnchorPair::new(vec![0.05, 0.5], vec![0.7, 0.5])];
        let cfg = ConvergenceConfig::new(vec![50], pairs, 3);
        assert!(matches!(
            convergence_experiment(&f, &params, &cfg, 2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn cardinality_requires_uniform() {
        let dom = DomainSpec::unit_torus(2).unwrap();
        let params = ConformalParams::new(2.0, 2).unwrap();
        let pair = AnchorPair::new(vec![0.25, 0.5], vec![0.75, 0.5]);
        let bump = DensityField::bump(&dom, 1.0, 0.2, None).unwrap();
        assert!(cardinality_scaling(&bump, &params, &[100], &pair, 3, 1).is_err());
        let params1 = ConformalParams::new(1.0, 2).unwrap();
        let f = DensityField::uniform(&dom);
        let out = cardinality_scaling(&f, &params1, &[100, 400], &pair, 3, 1).unwrap();
        // #L = 2 at p = 1
        for &(n, _, v) in &out.samples {
            let expect = 2.0 / ((n as f64).sqrt() * 0.5);
            assert!((v - expect).abs() < 1e-12);
        }
    }
}
