//! Random point clouds from i.i.d. or Poisson sampling, plus thinning and tubes.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, DensityField, DomainKind, DomainSpec};
use crate::rng::{stream_rng, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorTag {
    Iid,
    Poisson,
    Thinned,
}

/// Ordered points stored as a flat coordinate buffer of stride `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    domain: DomainSpec,
    seed: u64,
    stream: u64,
    generator: GeneratorTag,
}

impl PointCloud {
    pub fn new(
        domain: &DomainSpec,
        coords: Vec<f64>,
        seed: u64,
        stream: u64,
        generator: GeneratorTag,
    ) -> Result<Self> {
        let d = domain.dimension();
        if !coords.len().is_multiple_of(d) {
            return Err(Error::Domain(format!(
                "coordinate buffer of length {} is not a multiple of d = {d}",
                coords.len()
            )));
        }
        for p in coords.chunks_exact(d) {
            domain.check_point(p)?;
        }
        Ok(Self {
            coords,
            domain: domain.clone(),
            seed,
            stream,
            generator,
        })
    }

    pub fn from_points(domain: &DomainSpec, points: &[Vec<f64>]) -> Result<Self> {
        let coords = points.iter().flatten().copied().collect();
        if points.iter().any(|p| p.len() != domain.dimension()) {
            return Err(Error::Domain("point dimension mismatch".into()));
        }
        Self::new(domain, coords, 0, 0, GeneratorTag::Iid)
    }

    pub fn empty(domain: &DomainSpec) -> Self {
        Self {
            coords: Vec::new(),
            domain: domain.clone(),
            seed: 0,
            stream: 0,
            generator: GeneratorTag::Iid,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.domain.dimension()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn generator(&self) -> GeneratorTag {
        self.generator
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dimension();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dimension())
    }

    /// Keeps the points selected by `keep`, preserving order.
    pub fn filter<F: FnMut(&[f64]) -> bool>(&self, mut keep: F) -> Self {
        let d = self.dimension();
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.coords.chunks_exact(d) {
            if keep(p) {
                coords.extend_from_slice(p);
            }
        }
        Self {
            coords,
            ..self.clone()
        }
    }

    /// CSV with a `# d=<d> domain=<kind> seed=<seed>` header and 17
    /// significant digits per coordinate.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# d={} domain={} seed={}\n",
            self.dimension(),
            self.domain.kind(),
            self.seed
        );
        for p in self.points() {
            for (i, c) in p.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{c:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`PointCloud::to_csv`] output. The header must agree with
    /// `domain` on dimension and kind; the generator tag is not stored in the
    /// file and is reported as [`GeneratorTag::Iid`].
    pub fn from_csv(text: &str, domain: &DomainSpec) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty point file".into()))?;
        let header = header
            .strip_prefix("# ")
            .ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?;
        let mut d = None;
        let mut kind = None;
        let mut seed = 0u64;
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field {field:?}")))?;
            match key {
                "d" => d = value.parse::<usize>().ok(),
                "domain" => kind = Some(value.to_string()),
                "seed" => {
                    seed = value
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad seed {value:?}")))?
                }
                _ => {}
            }
        }
        if d != Some(domain.dimension()) {
            return Err(Error::Parse(format!(
                "header dimension {d:?} does not match domain dimension {}",
                domain.dimension()
            )));
        }
        if kind.as_deref() != Some(domain.kind().as_str()) {
            return Err(Error::Parse(format!(
                "header domain {kind:?} does not match {}",
                domain.kind()
            )));
        }
        let mut coords = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let before = coords.len();
            for cell in line.split(',') {
                coords.push(cell.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {}: bad number {cell:?}", lineno + 2))
                })?);
            }
            if coords.len() - before != domain.dimension() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} coordinates",
                    lineno + 2,
                    domain.dimension()
                )));
            }
        }
        Self::new(domain, coords, seed, 0, GeneratorTag::Iid)
    }
}

fn uniform_point<R: Rng + ?Sized>(domain: &DomainSpec, rng: &mut R, out: &mut Vec<f64>) {
    for &s in domain.sides() {
        out.push(rng.random::<f64>() * s);
    }
}

/// `n` i.i.d. points from `f` by rejection against the uniform proposal with
/// envelope `f_M`.
pub fn sample_iid(f: &DensityField, n: usize, seed: u64) -> Result<PointCloud> {
    sample_iid_stream(f, n, seed, 0)
}

pub fn sample_iid_stream(f: &DensityField, n: usize, seed: u64, stream: u64) -> Result<PointCloud> {
    let mut rng = stream_rng(seed, stream);
    let coords = sample_iid_coords(f, n, &mut rng)?;
    Ok(PointCloud {
        coords,
        domain: f.domain().clone(),
        seed,
        stream,
        generator: GeneratorTag::Iid,
    })
}

pub(crate) fn sample_iid_coords(
    f: &DensityField,
    n: usize,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let domain = f.domain();
    let d = domain.dimension();
    let envelope = f.sup_bound();
    let floor = f.inf_bound();
    let mut coords = Vec::with_capacity(n * d);
    let mut accepted = 0;
    while accepted < n {
        let start = coords.len();
        uniform_point(domain, rng, &mut coords);
        let u: f64 = rng.random();
        let v = f.value(&coords[start..]);
        // relative slack absorbs rounding in the declared bounds
        if v > envelope * (1.0 + 1e-12) || v < floor * (1.0 - 1e-12) {
            return Err(Error::DensityContract(format!(
                "f(x) = {v} outside declared bounds [{floor}, {envelope}] at {:?}",
                &coords[start..]
            )));
        }
        if u * envelope < v {
            accepted += 1;
        } else {
            coords.truncate(start);
        }
    }
    Ok(coords)
}

/// The round tube `T(u, v; b)`: points within distance `b` of the closed segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub radius: f64,
}

impl Tube {
    pub fn new(start: Vec<f64>, end: Vec<f64>, radius: f64) -> Result<Self> {
        if start.len() != end.len() || start.len() < 2 {
            return Err(Error::Parameter(
                "tube endpoints must share a dimension >= 2".into(),
            ));
        }
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::Parameter(format!(
                "tube radius must be >= 0, got {radius}"
            )));
        }
        let lo_ok = start
            .iter()
            .zip(&end)
            .all(|(a, b)| a.min(*b) - radius >= 0.0);
        if !lo_ok {
            return Err(Error::Parameter(
                "tube must lie in the nonnegative orthant".into(),
            ));
        }
        Ok(Self { start, end, radius })
    }

    /// Tube of length `t` along the first axis, shifted so every coordinate is
    /// nonnegative: start `(b, ..., b)`, end `(b + t, b, ..., b)`.
    pub fn along_first_axis(d: usize, t: f64, radius: f64) -> Result<Self> {
        let start = vec![radius; d];
        let mut end = start.clone();
        end[0] += t;
        Self::new(start, end, radius)
    }

    pub fn dimension(&self) -> usize {
        self.start.len()
    }

    pub fn length(&self) -> f64 {
        euclid_dist(&self.start, &self.end)
    }

    /// Capsule volume `V_{d-1} b^{d-1} t + V_d b^d`.
    pub fn volume(&self) -> f64 {
        let d = self.dimension();
        let b = self.radius;
        unit_ball_volume(d - 1) * b.powi(d as i32 - 1) * self.length()
            + unit_ball_volume(d) * b.powi(d as i32)
    }

    /// Euclidean box `[0, hi]` holding the whole tube.
    pub fn enclosing_domain(&self) -> Result<DomainSpec> {
        let sides = self
            .start
            .iter()
            .zip(&self.end)
            .map(|(a, b)| a.max(*b) + self.radius)
            .collect();
        DomainSpec::new(DomainKind::EuclideanBox, sides)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        point_segment_distance(x, &self.start, &self.end) < self.radius
    }
}

fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance from `x` to the closed segment `[a, b]`.
pub fn point_segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut dot = 0.0;
    for i in 0..x.len() {
        let ab = b[i] - a[i];
        ab2 += ab * ab;
        dot += (x[i] - a[i]) * ab;
    }
    let s = if ab2 > 0.0 {
        (dot / ab2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut acc = 0.0;
    for i in 0..x.len() {
        let q = a[i] + s * (b[i] - a[i]);
        acc += (x[i] - q) * (x[i] - q);
    }
    acc.sqrt()
}

#[derive(Debug, Clone)]
pub enum Region {
    Domain(DomainSpec),
    Tube(Tube),
}

impl Region {
    pub fn volume(&self) -> f64 {
        match self {
            Region::Domain(d) => d.volume(),
            Region::Tube(t) => t.volume(),
        }
    }
}

/// Homogeneous Poisson process of intensity `lambda` on `region`.
pub fn sample_poisson(lambda: f64, region: &Region, seed: u64) -> Result<PointCloud> {
    sample_poisson_stream(lambda, region, seed, 0)
}

pub fn sample_poisson_stream(
    lambda: f64,
    region: &Region,
    seed: u64,
    stream: u64,
) -> Result<PointCloud> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Parameter(format!(
            "intensity must be > 0, got {lambda}"
        )));
    }
    let mut rng = stream_rng(seed, stream);
    let (domain, coords) = match region {
        Region::Domain(domain) => {
            let count = poisson_count(lambda * domain.volume(), &mut rng)?;
            let mut coords = Vec::with_capacity(count * domain.dimension());
            for _ in 0..count {
                uniform_point(domain, &mut rng, &mut coords);
            }
            (domain.clone(), coords)
        }
        Region::Tube(tube) => {
            let domain = tube.enclosing_domain()?;
            if tube.radius == 0.0 {
                (domain, Vec::new())
            } else {
                (domain, sample_tube_coords(lambda, tube, &mut rng)?)
            }
        }
    };
    Ok(PointCloud {
        coords,
        domain,
        seed,
        stream,
        generator: GeneratorTag::Poisson,
    })
}

/// Poisson process on the tube's bounding box, restricted to the tube.
fn sample_tube_coords(lambda: f64, tube: &Tube, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let d = tube.dimension();
    let lo: Vec<f64> = (0..d)
        .map(|i| tube.start[i].min(tube.end[i]) - tube.radius)
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|i| tube.start[i].max(tube.end[i]) + tube.radius)
        .collect();
    let box_volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let count = poisson_count(lambda * box_volume, rng)?;
    let mut coords = Vec::with_capacity(count * d);
    let mut p = vec![0.0; d];
    for _ in 0..count {
        for i in 0..d {
            p[i] = lo[i] + rng.random::<f64>() * (hi[i] - lo[i]);
        }
        if tube.contains(&p) {
            coords.extend_from_slice(&p);
        }
    }
    Ok(coords)
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist =
        Poisson::new(mean).map_err(|e| Error::Parameter(format!("Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as usize)
}

/// Keeps each point independently with probability `floor / f(x)`.
pub fn thin(cloud: &PointCloud, f: &DensityField, floor: f64, seed: u64) -> Result<PointCloud> {
    if !(floor > 0.0) {
        return Err(Error::Parameter(format!(
            "thinning floor must be > 0, got {floor}"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let d = cloud.dimension();
    let mut coords = Vec::with_capacity(cloud.coords.len());
    for p in cloud.points() {
        let v = f.value(p);
        if floor > v * (1.0 + 1e-12) {
            return Err(Error::DensityContract(format!(
                "thinning floor {floor} exceeds f(x) = {v} at {p:?}"
            )));
        }
        let u: f64 = rng.random();
        if u * v < floor {
            coords.extend_from_slice(p);
        }
    }
    debug_assert_eq!(coords.len() % d, 0);
    Ok(PointCloud {
        coords,
        domain: cloud.domain.clone(),
        seed,
        stream: 0,
        generator: GeneratorTag::Thinned,
    })
}

/// Points strictly within `b` of the closed segment `[x, y]`, order preserved.
pub fn tube_restrict(cloud: &PointCloud, x: &[f64], y: &[f64], b: f64) -> Result<PointCloud> {
    if cloud.domain().is_torus() {
        return Err(Error::UnsupportedDomain(
            "tube restriction needs segment geometry; torus clouds are not supported".into(),
        ));
    }
    if !(b > 0.0) {
        return Err(Error::Parameter(format!(
            "tube radius must be > 0, got {b}"
        )));
    }
    Ok(cloud.filter(|p| point_segment_distance(p, x, y) < b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Bump;
    use crate::stats;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn empty_iid() {
        let dom = DomainSpec::unit_box(2).unwrap();
        let c = sample_iid(&DensityField::uniform(&dom), 0, 1).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.len(), 0);
    }

    #[test]
    fn iid_is_deterministic() {
        let dom = DomainSpec::unit_torus(2).unwrap();
        let f = DensityField::bump(&dom, 2.0, 0.1, None).unwrap();
        let a = sample_iid(&f, 500, 42).unwrap();
        let b = sample_iid(&f, 500, 42).unwrap();
        assert_eq!(a.coords(), b.coords());
        let c = sample_iid(&f, 500, 43).unwrap();
        assert_ne!(a.coords(), c.coords());
    }

    #[test]
    fn uniform_iid_passes_chi_square() {
        let dom = DomainSpec::unit_box(2).unwrap();
        let n = 10_000;
        let c = sample_iid(&DensityField::uniform(&dom), n, 2024).unwrap();
        let mut bins = [0usize; 16];
        for p in c.points() {
            let i = ((p[0] * 4.0) as usize).min(3);
            let j = ((p[1] * 4.0) as usize).min(3);
            bins[i * 4 + j] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = bins
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new(15.0).unwrap().inverse_cdf(0.99);
        assert!((critical - 30.5779).abs() < 1e-3);
        assert!(chi2 < critical, "chi2 = {chi2}");
    }

    #[test]
    fn bump_half_max_mass() {
        let dom = DomainSpec::unit_torus(2).unwrap();
        let (amp, width) = (3.0, 0.1);
        let f = DensityField::bump(&dom, amp, width, Some(vec![0.5, 0.5])).unwrap();
        let radius = width * (2.0 * std::f64::consts::LN_2).sqrt();
        let inside = |p: &[f64]| dom.dist2(p, &[0.5, 0.5]) <= radius * radius;

        // quadrature oracle: midpoint rule on a fine grid
        let m = 2000;
        let h = 1.0 / m as f64;
        let mut mass = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                if inside(&x) {
                    mass += f.value(&x) * h * h;
                }
            }
        }
        let n = 10_000;
        let c = sample_iid(&f, n, 99).unwrap();
        let hits = c.points().filter(|p| inside(p)).count() as f64 / n as f64;
        let se = (mass * (1.0 - mass) / n as f64).sqrt();
        assert!(
            (hits - mass).abs() < 3.0 * se,
            "hits {hits} mass {mass} se {se}"
        );
    }

    #[test]
    fn envelope_violation_is_reported() {
        let dom = DomainSpec::unit_box(2).unwrap();
        // declared f_M too small for the actual values
        let f = DensityField::custom(
            &dom,
            |x: &[f64]| if x[0] < 0.5 { 0.5 } else { 1.5 },
            0.5,
            1.5,
            1e-6,
        )
        .unwrap();
        assert!(sample_iid(&f, 100, 1).is_ok());
        let liar = DensityField::custom(
            &dom,
            |x: &[f64]| if x[0] < 0.5 { 0.5 } else { 1.5 },
            0.5,
            1.0,
            1e-6,
        )
        .unwrap();
        assert!(matches!(
            sample_iid(&liar, 100, 1),
            Err(Error::DensityContract(_))
        ));
    }

    #[test]
    fn poisson_rejects_bad_intensity() {
        let r = Region::Domain(DomainSpec::unit_box(2).unwrap());
        assert!(matches!(
            sample_poisson(0.0, &r, 1),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            sample_poisson(-1.0, &r, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn degenerate_region_is_empty() {
        let tube = Tube::new(vec![1.0, 1.0], vec![2.0, 1.0], 0.0).unwrap();
        for seed in 0..20 {
            let c = sample_poisson(10.0, &Region::Tube(tube.clone()), seed).unwrap();
            assert!(c.is_empty());
        }
    }

    #[test]
    fn poisson_mean_count() {
        let r = Region::Domain(DomainSpec::unit_box(2).unwrap());
        let trials = 1000;
        let counts: Vec<f64> = (0..trials)
            .map(|k| sample_poisson_stream(100.0, &r, 5, k).unwrap().len() as f64)
            .collect();
        let m = stats::mean(&counts);
        assert!(
            (m - 100.0).abs() <= 3.0 * (100.0f64 / trials as f64).sqrt(),
            "mean {m}"
        );
    }

    #[test]
    fn poisson_variance_count() {
        let r = Region::Domain(DomainSpec::unit_box(3).unwrap());
        let counts: Vec<f64> = (0..10_000)
            .map(|k| sample_poisson_stream(5.0, &r, 6, k).unwrap().len() as f64)
            .collect();
        let var = stats::sample_std(&counts).powi(2);
        assert!((var - 5.0).abs() < 0.5, "variance {var}");
    }

    #[test]
    fn tube_poisson_count_matches_capsule_volume() {
        let tube = Tube::along_first_axis(2, 10.0, 2.0).unwrap();
        let vol = tube.volume();
        assert!((vol - (4.0 * 10.0 + std::f64::consts::PI * 4.0)).abs() < 1e-12);
        let region = Region::Tube(tube.clone());
        let counts: Vec<f64> = (0..400)
            .map(|k| {
                let c = sample_poisson_stream(1.0, &region, 8, k).unwrap();
                assert!(c.points().all(|p| tube.contains(p)));
                c.len() as f64
            })
            .collect();
        let m = stats::mean(&counts);
        assert!(
            (m - vol).abs() < 3.0 * (vol / 400.0).sqrt(),
            "mean {m} vs {vol}"
        );
    }

    #[test]
    fn thinning_constant_ratio() {
        let dom = DomainSpec::unit_box(2).unwrap();
        let uniform = DensityField::uniform(&dom);
        let n = 10_000;
        let c = sample_iid(&uniform, n, 3).unwrap();

        // f = f_m: nothing removed
        let same = thin(&c, &uniform, 1.0, 4).unwrap();
        assert_eq!(same.coords(), c.coords());
        assert_eq!(same.generator(), GeneratorTag::Thinned);

        // f = 2 f_m everywhere: keep half
        let half = thin(&c, &uniform, 0.5, 4).unwrap();
        let frac = half.len() as f64 / n as f64;
        assert!(
            (frac - 0.5).abs() <= 3.0 * (0.25f64 / n as f64).sqrt() * 2.0,
            "{frac}"
        );

        let empty = thin(&PointCloud::empty(&dom), &uniform, 0.5, 4).unwrap();
        assert!(empty.is_empty());

        assert!(matches!(
            thin(&c, &uniform, 2.0, 4),
            Err(Error::DensityContract(_))
        ));
    }

    #[test]
    fn thinned_bump_count_matches_floor() {
        let dom = DomainSpec::unit_torus(2).unwrap();
        let f = DensityField::mixture(
            &dom,
            vec![Bump {
                center: vec![0.3, 0.6],
                amplitude: 1.5,
                width: 0.2,
            }],
        )
        .unwrap();
        let n = 20_000;
        let kept: Vec<f64> = (0..10)
            .map(|k| {
                let c = sample_iid_stream(&f, n, 11, k).unwrap();
                thin(&c, &f, f.inf_bound(), 100 + k).unwrap().len() as f64
            })
            .collect();
        let expected = n as f64 * f.inf_bound();
        let m = stats::mean(&kept);
        let se = (expected * (1.0 - f.inf_bound())).sqrt() / (kept.len() as f64).sqrt();
        assert!(
            (m - expected).abs() < 3.0 * se,
            "kept {m} expected {expected}"
        );
    }

    #[test]
    fn tube_restrict_examples() {
        let dom = DomainSpec::cube(DomainKind::EuclideanBox, 2, 2.0).unwrap();
        let cloud = PointCloud::from_points(&dom, &[vec![0.5, 0.05], vec![0.5, 0.2]]).unwrap();
        let r = tube_restrict(&cloud, &[0.0, 0.0], &[1.0, 0.0], 0.1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.point(0), &[0.5, 0.05]);

        let big = tube_restrict(&cloud, &[0.0, 0.0], &[1.0, 0.0], 10.0).unwrap();
        assert_eq!(big.coords(), cloud.coords());

        assert!(tube_restrict(&cloud, &[0.0, 0.0], &[1.0, 0.0], 0.0).is_err());
        let t = DomainSpec::unit_torus(2).unwrap();
        let tc = PointCloud::empty(&t);
        assert!(matches!(
            tube_restrict(&tc, &[0.0, 0.0], &[1.0, 0.0], 0.1),
            Err(Error::UnsupportedDomain(_))
        ));
    }

    #[test]
    fn tube_restrict_matches_brute_force() {
        let dom = DomainSpec::unit_box(3).unwrap();
        let cloud = sample_iid(&DensityField::uniform(&dom), 2000, 17).unwrap();
        let a = [0.2, 0.3, 0.4];
        let b = [0.8, 0.5, 0.1];
        let r = tube_restrict(&cloud, &a, &b, 0.15).unwrap();
        // oracle: minimise |x - (a + s(b - a))| over a dense grid of s
        let brute: Vec<f64> = cloud
            .points()
            .filter(|p| {
                let best = (0..=20_000)
                    .map(|k| {
                        let s = k as f64 / 20_000.0;
                        (0..3)
                            .map(|i| (p[i] - a[i] - s * (b[i] - a[i])).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                best < 0.15
            })
            .flatten()
            .copied()
            .collect();
        assert_eq!(r.coords(), brute.as_slice());
    }

    #[test]
    fn csv_round_trip() {
        let dom = DomainSpec::unit_torus(3).unwrap();
        let c = sample_iid(&DensityField::uniform(&dom), 50, 77).unwrap();
        let text = c.to_csv();
        assert!(text.starts_with("# d=3 domain=torus seed=77\n"));
        let back = PointCloud::from_csv(&text, &dom).unwrap();
        assert_eq!(back.coords(), c.coords());
        assert_eq!(back.seed(), 77);
        let other = DomainSpec::unit_box(3).unwrap();
        assert!(PointCloud::from_csv(&text, &other).is_err());
    }

    /// Two-sample Kolmogorov-Smirnov statistic.
    fn ks(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut best) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            let diff = (i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs();
            best = best.max(diff);
        }
        best
    }

    #[test]
    fn iid_and_conditioned_poisson_agree() {
        let dom = DomainSpec::unit_box(2).unwrap();
        let uniform = DensityField::uniform(&dom);
        let mut iid = Vec::new();
        let mut poi = Vec::new();
        for k in 0..40 {
            iid.extend(
                sample_iid_stream(&uniform, 100, 21, k)
                    .unwrap()
                    .points()
                    .map(|p| p[0]),
            );
            poi.extend(
                sample_poisson_stream(100.0, &Region::Domain(dom.clone()), 22, k)
                    .unwrap()
                    .points()
                    .map(|p| p[0]),
            );
        }
        let (n, m) = (iid.len() as f64, poi.len() as f64);
        let stat = ks(&mut iid, &mut poi);
        // critical value at significance 0.01
        let crit = 1.628 * ((n + m) / (n * m)).sqrt();
        assert!(stat < crit, "KS {stat} vs {crit}");
    }
}
