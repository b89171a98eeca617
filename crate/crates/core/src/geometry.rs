//! Domains and sampling densities with their conformal cost field.
//!
//! A [`DomainSpec`] is either an axis-aligned Euclidean box `[0, L_1] x ... x [0, L_d]`
//! or the flat torus obtained by identifying opposite faces of the same box.
//! The torus distance takes, per axis, the shorter of the direct and the
//! wrapped displacement and combines them in the Euclidean norm.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Fraction of the smallest side kept clear of the box boundary by anchors.
pub const DEFAULT_MARGIN_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    #[serde(rename = "box")]
    EuclideanBox,
    #[serde(rename = "torus")]
    FlatTorus,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::EuclideanBox => "box",
            DomainKind::FlatTorus => "torus",
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    kind: DomainKind,
    sides: Vec<f64>,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, sides: Vec<f64>) -> Result<Self> {
        if sides.len() < 2 {
            return Err(Error::Domain(format!(
                "dimension must be at least 2, got {}",
                sides.len()
            )));
        }
        if let Some(s) = sides.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Domain(format!(
                "side lengths must be positive and finite, got {s}"
            )));
        }
        Ok(Self { kind, sides })
    }

    pub fn cube(kind: DomainKind, d: usize, side: f64) -> Result<Self> {
        Self::new(kind, vec![side; d])
    }

    pub fn unit_box(d: usize) -> Result<Self> {
        Self::cube(DomainKind::EuclideanBox, d, 1.0)
    }

    pub fn unit_torus(d: usize) -> Result<Self> {
        Self::cube(DomainKind::FlatTorus, d, 1.0)
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[f64] {
        &self.sides
    }

    pub fn is_torus(&self) -> bool {
        self.kind == DomainKind::FlatTorus
    }

    pub fn volume(&self) -> f64 {
        self.sides.iter().product()
    }

    pub fn min_side(&self) -> f64 {
        self.sides.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest base distance between two points of the domain.
    pub fn diameter(&self) -> f64 {
        let scale = if self.is_torus() { 0.5 } else { 1.0 };
        self.sides
            .iter()
            .map(|s| (s * scale) * (s * scale))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter()
                .zip(&self.sides)
                .all(|(c, s)| c.is_finite() && *c >= 0.0 && *c <= *s)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, domain dimension is {}",
                x.len(),
                self.dimension()
            )));
        }
        if !self.contains(x) {
            return Err(Error::Domain(format!(
                "point {x:?} lies outside the {} extent {:?}",
                self.kind, self.sides
            )));
        }
        Ok(())
    }

    /// Per-axis displacement magnitude, wrapped on the torus.
    #[inline]
    pub fn axis_gap(&self, axis: usize, a: f64, b: f64) -> f64 {
        let delta = (a - b).abs();
        if self.kind == DomainKind::FlatTorus {
            let side = self.sides[axis];
            if delta > 0.5 * side {
                return side - delta;
            }
        }
        delta
    }

    /// Squared base distance without domain checks.
    #[inline]
    pub fn dist2(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for axis in 0..a.len() {
            let g = self.axis_gap(axis, a[axis], b[axis]);
            acc += g * g;
        }
        acc
    }

    /// True when `x` stays `fraction * min_side` away from every box face.
    /// Always true on the torus.
    pub fn respects_margin(&self, x: &[f64], fraction: f64) -> bool {
        if self.is_torus() {
            return true;
        }
        let margin = fraction * self.min_side();
        x.iter()
            .zip(&self.sides)
            .all(|(c, s)| *c >= margin && *c <= s - margin)
    }
}

/// `dist_1` between two points of the domain.
pub fn base_distance(domain: &DomainSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    domain.check_point(x)?;
    domain.check_point(y)?;
    Ok(domain.dist2(x, y).sqrt())
}

/// Edge weight from a squared base distance. Single source of truth for
/// `dist_1^p`; the path engine and [`power_edge_weight`] both go through it.
#[inline]
pub fn weight_from_dist2(d2: f64, p: f64) -> f64 {
    if p == 2.0 {
        d2
    } else if p == 1.0 {
        d2.sqrt()
    } else if p == 3.0 {
        d2 * d2.sqrt()
    } else {
        d2.powf(0.5 * p)
    }
}

pub fn power_edge_weight(domain: &DomainSpec, p: f64, u: &[f64], v: &[f64]) -> Result<f64> {
    check_power(p)?;
    domain.check_point(u)?;
    domain.check_point(v)?;
    Ok(weight_from_dist2(domain.dist2(u, v), p))
}

pub(crate) fn check_power(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::Parameter(format!("power p must be >= 1, got {p}")));
    }
    Ok(())
}

/// Power `p` and dimension `d`; `alpha = 1/(d + 2p)` is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalParams {
    p: f64,
    d: usize,
}

impl ConformalParams {
    pub fn new(p: f64, d: usize) -> Result<Self> {
        check_power(p)?;
        if d < 2 {
            return Err(Error::Parameter(format!(
                "dimension must be at least 2, got {d}"
            )));
        }
        Ok(Self { p, d })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        1.0 / (self.d as f64 + 2.0 * self.p)
    }

    /// Exponent `(1 - p)/d` of the conformal cost.
    pub fn cost_exponent(&self) -> f64 {
        (1.0 - self.p) / self.d as f64
    }

    /// `(alpha - 1)/d`, the exponent of the link-length scale `(n f_m)^((alpha-1)/d)`.
    pub fn link_exponent(&self) -> f64 {
        (self.alpha() - 1.0) / self.d as f64
    }
}

/// One Gaussian bump `A exp(-|x - c|^2 / (2 w^2))` on top of the unit baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    pub amplitude: f64,
    pub width: f64,
}

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Uniform,
    /// `(1 + sum_k A_k phi_k(x)) / norm`
    Bumps {
        bumps: Vec<Bump>,
        norm: f64,
    },
    Custom(Evaluator),
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Uniform => f.write_str("Uniform"),
            Shape::Bumps { bumps, norm } => f
                .debug_struct("Bumps")
                .field("bumps", bumps)
                .field("norm", norm)
                .finish(),
            Shape::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

pub const DEFAULT_NORMALIZATION_TOLERANCE: f64 = 1e-3;

/// A probability density on a domain with declared bounds `f_m <= f <= f_M`.
#[derive(Debug, Clone)]
pub struct DensityField {
    domain: DomainSpec,
    shape: Shape,
    inf_bound: f64,
    sup_bound: f64,
    normalization_tolerance: f64,
}

impl DensityField {
    pub fn uniform(domain: &DomainSpec) -> Self {
        let v = 1.0 / domain.volume();
        Self {
            domain: domain.clone(),
            shape: Shape::Uniform,
            inf_bound: v,
            sup_bound: v,
            normalization_tolerance: DEFAULT_NORMALIZATION_TOLERANCE,
        }
    }

    /// Single truncated Gaussian bump; `center` defaults to the domain center.
    pub fn bump(
        domain: &DomainSpec,
        amplitude: f64,
        width: f64,
        center: Option<Vec<f64>>,
    ) -> Result<Self> {
        let center = center.unwrap_or_else(|| domain.sides().iter().map(|s| 0.5 * s).collect());
        Self::mixture(
            domain,
            vec![Bump {
                center,
                amplitude,
                width,
            }],
        )
    }

    pub fn mixture(domain: &DomainSpec, bumps: Vec<Bump>) -> Result<Self> {
        if bumps.is_empty() {
            return Ok(Self::uniform(domain));
        }
        let mut norm = domain.volume();
        let mut floor = 1.0;
        let mut ceil = 1.0;
        for b in &bumps {
            domain.check_point(&b.center)?;
            if !(b.amplitude.is_finite() && b.amplitude >= 0.0) {
                return Err(Error::Parameter(format!(
                    "bump amplitude must be >= 0, got {}",
                    b.amplitude
                )));
            }
            if !(b.width.is_finite() && b.width > 0.0) {
                return Err(Error::Parameter(format!(
                    "bump width must be > 0, got {}",
                    b.width
                )));
            }
            norm += b.amplitude * bump_integral(domain, b);
            let reach2 = farthest_dist2(domain, &b.center);
            floor += b.amplitude * (-reach2 / (2.0 * b.width * b.width)).exp();
            ceil += b.amplitude;
        }
        Ok(Self {
            domain: domain.clone(),
            shape: Shape::Bumps { bumps, norm },
            inf_bound: floor / norm,
            sup_bound: ceil / norm,
            normalization_tolerance: DEFAULT_NORMALIZATION_TOLERANCE,
        })
    }

    /// User-supplied density. Normalisation is checked by quadrature.
    pub fn custom<F>(
        domain: &DomainSpec,
        evaluator: F,
        inf_bound: f64,
        sup_bound: f64,
        normalization_tolerance: f64,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(inf_bound > 0.0 && sup_bound.is_finite() && inf_bound <= sup_bound) {
            return Err(Error::Parameter(format!(
                "need 0 < f_m <= f_M < inf, got f_m = {inf_bound}, f_M = {sup_bound}"
            )));
        }
        let field = Self {
            domain: domain.clone(),
            shape: Shape::Custom(Arc::new(evaluator)),
            inf_bound,
            sup_bound,
            normalization_tolerance,
        };
        field.check_normalization()?;
        Ok(field)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn inf_bound(&self) -> f64 {
        self.inf_bound
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn normalization_tolerance(&self) -> f64 {
        self.normalization_tolerance
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.shape, Shape::Uniform)
    }

    /// Density value at `x`; no domain check.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Uniform => self.inf_bound,
            Shape::Bumps { bumps, norm } => {
                let mut acc = 1.0;
                for b in bumps {
                    let r2 = self.domain.dist2(x, &b.center);
                    acc += b.amplitude * (-r2 / (2.0 * b.width * b.width)).exp();
                }
                acc / norm
            }
            Shape::Custom(f) => f(x),
        }
    }

    /// Midpoint-rule integral over the domain with `per_axis` cells per axis.
    pub fn integrate(&self, per_axis: usize) -> f64 {
        let d = self.domain.dimension();
        let h: Vec<f64> = self
            .domain
            .sides()
            .iter()
            .map(|s| s / per_axis as f64)
            .collect();
        let cell_volume: f64 = h.iter().product();
        let total = per_axis.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut acc = 0.0;
        for idx in 0..total {
            let mut rem = idx;
            for axis in 0..d {
                x[axis] = (rem % per_axis) as f64 * h[axis] + 0.5 * h[axis];
                rem /= per_axis;
            }
            acc += self.value(&x);
        }
        acc * cell_volume
    }

    pub fn check_normalization(&self) -> Result<()> {
        let d = self.domain.dimension();
        // keep the quadrature near 2^18 cells whatever the dimension
        let per_axis = ((1u64 << 18) as f64).powf(1.0 / d as f64).floor().max(4.0) as usize;
        let integral = self.integrate(per_axis);
        if (integral - 1.0).abs() > self.normalization_tolerance {
            return Err(Error::DensityContract(format!(
                "density integrates to {integral}, tolerance {}",
                self.normalization_tolerance
            )));
        }
        Ok(())
    }
}

/// Closed-form integral of `exp(-|x - c|^2/(2 w^2))` over the domain.
fn bump_integral(domain: &DomainSpec, b: &Bump) -> f64 {
    let w = b.width;
    let root2w = std::f64::consts::SQRT_2 * w;
    domain
        .sides()
        .iter()
        .zip(&b.center)
        .map(|(&side, &c)| match domain.kind() {
            // wrapped displacement ranges over [-side/2, side/2]
            DomainKind::FlatTorus => w * (2.0 * PI).sqrt() * erf(side / (2.0 * root2w)),
            DomainKind::EuclideanBox => {
                w * (PI / 2.0).sqrt() * (erf((side - c) / root2w) + erf(c / root2w))
            }
        })
        .product()
}

fn farthest_dist2(domain: &DomainSpec, c: &[f64]) -> f64 {
    domain
        .sides()
        .iter()
        .zip(c)
        .map(|(&side, &ci)| {
            let g = match domain.kind() {
                DomainKind::FlatTorus => 0.5 * side,
                DomainKind::EuclideanBox => ci.max(side - ci),
            };
            g * g
        })
        .sum()
}

/// Conformal cost `f(x)^((1-p)/d)`; exactly 1 when `p = 1`.
pub fn conformal_cost(f: &DensityField, params: &ConformalParams, x: &[f64]) -> Result<f64> {
    let v = f.value(x);
    cost_from_density(v, params)
}

pub(crate) fn cost_from_density(v: f64, params: &ConformalParams) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::DensitySupport { value: v });
    }
    if params.p() == 1.0 {
        return Ok(1.0);
    }
    Ok(v.powf(params.cost_exponent()))
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    PI.powf(half) / statrs::function::gamma::gamma(half + 1.0)
}
