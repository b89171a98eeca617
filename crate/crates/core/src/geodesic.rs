//! Conformal distance `dist_p` by first-order fast marching.
//!
//! The cost field `f^((1-p)/d)` is sampled at cell centers of a regular grid
//! with `resolution` cells per axis (2-D and 3-D only). Cells near the source
//! are seeded with `cost(source) * |x - source|`; everything else follows the
//! upwind update in arrival order. On the torus the stencil wraps.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{cost_from_density, ConformalParams, DensityField, DomainSpec};

pub const MIN_RESOLUTION: usize = 8;
pub const DEFAULT_RELATIVE_CAP: f64 = 0.02;
/// Seed radius around the source, in cell diagonals.
const SEED_CELLS: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct CostGrid {
    domain: DomainSpec,
    resolution: usize,
    values: Vec<f64>,
    wraparound: bool,
}

impl CostGrid {
    pub fn new(domain: &DomainSpec, resolution: usize, values: Vec<f64>) -> Result<Self> {
        let d = domain.dimension();
        if d > 3 {
            return Err(Error::Grid(format!(
                "grids are limited to d <= 3, got d = {d}"
            )));
        }
        if resolution < MIN_RESOLUTION {
            return Err(Error::Grid(format!(
                "resolution must be at least {MIN_RESOLUTION}, got {resolution}"
            )));
        }
        let cells = resolution.pow(d as u32);
        if values.len() != cells {
            return Err(Error::Grid(format!(
                "expected {cells} cost values, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Grid(format!(
                "cost at cell {i} is {v}; costs must be positive"
            )));
        }
        Ok(Self {
            domain: domain.clone(),
            resolution,
            values,
            wraparound: domain.is_torus(),
        })
    }

    pub fn from_fn<F: Fn(&[f64]) -> Result<f64>>(
        domain: &DomainSpec,
        resolution: usize,
        cost: F,
    ) -> Result<Self> {
        let d = domain.dimension();
        if d > 3 {
            return Err(Error::Grid(format!(
                "grids are limited to d <= 3, got d = {d}"
            )));
        }
        let cells = resolution.pow(d as u32);
        let mut values = Vec::with_capacity(cells);
        let mut x = vec![0.0; d];
        for idx in 0..cells {
            cell_center(domain, resolution, idx, &mut x);
            values.push(cost(&x)?);
        }
        Self::new(domain, resolution, values)
    }

    pub fn uniform(domain: &DomainSpec, resolution: usize, cost: f64) -> Result<Self> {
        let d = domain.dimension().min(4) as u32;
        Self::new(domain, resolution, vec![cost; resolution.pow(d)])
    }

    pub fn from_density(
        f: &DensityField,
        params: &ConformalParams,
        resolution: usize,
    ) -> Result<Self> {
        Self::from_fn(f.domain(), resolution, |x| {
            cost_from_density(f.value(x), params)
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn wraparound(&self) -> bool {
        self.wraparound
    }

    pub fn cell_size(&self, axis: usize) -> f64 {
        self.domain.sides()[axis] / self.resolution as f64
    }

    fn cell_of(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for axis in (0..x.len()).rev() {
            let c = ((x[axis] / self.cell_size(axis)).floor() as isize)
                .clamp(0, self.resolution as isize - 1) as usize;
            idx = idx * self.resolution + c;
        }
        idx
    }
}

fn cell_center(domain: &DomainSpec, res: usize, mut idx: usize, out: &mut [f64]) {
    for (axis, side) in domain.sides().iter().enumerate() {
        let h = side / res as f64;
        out[axis] = ((idx % res) as f64 + 0.5) * h;
        idx /= res;
    }
}

#[derive(Debug, Clone)]
pub struct DistanceField {
    source: Vec<f64>,
    domain: DomainSpec,
    resolution: usize,
    values: Vec<f64>,
    seeded: Vec<bool>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    resolution: usize,
    domain: &'a DomainSpec,
    source: &'a [f64],
}

impl DistanceField {
    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_seeded(&self, idx: usize) -> bool {
        self.seeded[idx]
    }

    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.domain.dimension()];
        cell_center(&self.domain, self.resolution, idx, &mut x);
        x
    }

    /// Multilinear interpolation between cell centers (wrapped on the
    /// torus, clamped in the box).
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let d = self.domain.dimension();
        let res = self.resolution;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for axis in 0..d {
            let h = self.domain.sides()[axis] / res as f64;
            let s = x[axis] / h - 0.5;
            if self.domain.is_torus() {
                let f = s.floor();
                frac[axis] = s - f;
                base[axis] = (f as isize).rem_euclid(res as isize) as usize;
            } else {
                let s = s.clamp(0.0, (res - 1) as f64);
                let f = s.floor().min((res - 2) as f64);
                frac[axis] = s - f;
                base[axis] = f as usize;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut idx = 0;
            let mut weight = 1.0;
            for axis in (0..d).rev() {
                let bit = (corner >> axis) & 1;
                let c = (base[axis] + bit) % res;
                idx = idx * res + c;
                weight *= if bit == 1 {
                    frac[axis]
                } else {
                    1.0 - frac[axis]
                };
            }
            if weight != 0.0 {
                acc += weight * self.values[idx];
            }
        }
        acc
    }

    /// Little-endian binary64 dump of the values, axis 0 fastest.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&Sidecar {
            resolution: self.resolution,
            domain: &self.domain,
            source: &self.source,
        })
        .expect("sidecar serialises")
    }
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Far,
    Trial,
    Known,
}

#[derive(PartialEq)]
struct Front {
    value: f64,
    idx: usize,
}

impl Eq for Front {}

impl Ord for Front {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .value
            .total_cmp(&self.value)
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Front {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Stencil {
    d: usize,
    res: usize,
    wrap: bool,
    h: [f64; 3],
}

impl Stencil {
    fn new(grid: &CostGrid) -> Self {
        let d = grid.domain.dimension();
        let mut h = [0.0; 3];
        for (axis, slot) in h.iter_mut().enumerate().take(d) {
            *slot = grid.cell_size(axis);
        }
        Self {
            d,
            res: grid.resolution,
            wrap: grid.wraparound,
            h,
        }
    }

    fn stride(&self, axis: usize) -> usize {
        self.res.pow(axis as u32)
    }

    /// Neighbour of `idx` one step along `axis` in direction `dir` (+1 / -1).
    fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> Option<usize> {
        let stride = self.stride(axis);
        let c = (idx / stride) % self.res;
        if forward {
            if c + 1 < self.res {
                Some(idx + stride)
            } else if self.wrap {
                Some(idx - c * stride)
            } else {
                None
            }
        } else if c > 0 {
            Some(idx - stride)
        } else if self.wrap {
            Some(idx + (self.res - 1) * stride)
        } else {
            None
        }
    }

    /// Upwind solution from the neighbours accepted by `usable`.
    fn update<F: Fn(usize) -> Option<f64>>(&self, idx: usize, cost: f64, usable: F) -> f64 {
        let mut terms = [(0.0f64, 0.0f64); 3];
        let mut k = 0;
        for axis in 0..self.d {
            let a = [true, false]
                .iter()
                .filter_map(|&fwd| self.neighbor(idx, axis, fwd).and_then(&usable))
                .fold(f64::INFINITY, f64::min);
            if a.is_finite() {
                terms[k] = (a, self.h[axis]);
                k += 1;
            }
        }
        if k == 0 {
            return f64::INFINITY;
        }
        let terms = &mut terms[..k];
        terms.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut u = terms[0].0 + cost * terms[0].1;
        let (mut qa, mut qb, mut qc) = (0.0, 0.0, 0.0);
        for (m, &(a, h)) in terms.iter().enumerate() {
            if m > 0 && u <= a {
                break;
            }
            let w = 1.0 / (h * h);
            qa += w;
            qb += -2.0 * a * w;
            qc += a * a * w;
            let disc = qb * qb - 4.0 * qa * (qc - cost * cost);
            if disc < 0.0 {
                break;
            }
            u = (-qb + disc.sqrt()) / (2.0 * qa);
        }
        u
    }
}

/// Solves `|grad u| = cost`, `u(source) = 0`.
pub fn solve_eikonal(grid: &CostGrid, source: &[f64]) -> Result<DistanceField> {
    let domain = &grid.domain;
    domain.check_point(source)?;
    let stencil = Stencil::new(grid);
    let n = grid.values.len();
    let mut values = vec![f64::INFINITY; n];
    let mut state = vec![State::Far; n];
    let mut seeded = vec![false; n];
    let mut heap = BinaryHeap::new();

    let src_cell = grid.cell_of(source);
    let src_cost = grid.values[src_cell];
    let diag: f64 = (0..stencil.d)
        .map(|a| stencil.h[a] * stencil.h[a])
        .sum::<f64>()
        .sqrt();
    let seed_r2 = (SEED_CELLS * diag).powi(2);
    let mut center = vec![0.0; stencil.d];
    for idx in 0..n {
        cell_center(domain, grid.resolution, idx, &mut center);
        let r2 = domain.dist2(&center, source);
        if r2 <= seed_r2 || idx == src_cell {
            values[idx] = src_cost * r2.sqrt();
            state[idx] = State::Known;
            seeded[idx] = true;
        }
    }
    for idx in 0..n {
        if state[idx] != State::Known {
            continue;
        }
        for axis in 0..stencil.d {
            for fwd in [true, false] {
                if let Some(nb) = stencil.neighbor(idx, axis, fwd) {
                    if state[nb] == State::Far {
                        state[nb] = State::Trial;
                        let u = stencil.update(nb, grid.values[nb], |j| {
                            (state[j] == State::Known).then(|| values[j])
                        });
                        values[nb] = u;
                        heap.push(Front { value: u, idx: nb });
                    }
                }
            }
        }
    }
    while let Some(Front { value, idx }) = heap.pop() {
        if state[idx] == State::Known || value != values[idx] {
            continue;
        }
        state[idx] = State::Known;
        for axis in 0..stencil.d {
            for fwd in [true, false] {
                let Some(nb) = stencil.neighbor(idx, axis, fwd) else {
                    continue;
                };
                if state[nb] == State::Known {
                    continue;
                }
                let u = stencil.update(nb, grid.values[nb], |j| {
                    (state[j] == State::Known).then(|| values[j])
                });
                if u < values[nb] {
                    values[nb] = u;
                    state[nb] = State::Trial;
                    heap.push(Front { value: u, idx: nb });
                }
            }
        }
    }
    Ok(DistanceField {
        source: source.to_vec(),
        domain: domain.clone(),
        resolution: grid.resolution,
        values,
        seeded,
    })
}

/// Largest gap between each non-seeded cell value and the upwind update
/// recomputed from its strictly smaller neighbours.
pub fn eikonal_residual(grid: &CostGrid, field: &DistanceField) -> f64 {
    let stencil = Stencil::new(grid);
    let mut worst = 0.0f64;
    for idx in 0..field.values.len() {
        if field.seeded[idx] {
            continue;
        }
        let own = field.values[idx];
        let u = stencil.update(idx, grid.values[idx], |j| {
            (field.values[j] < own).then(|| field.values[j])
        });
        worst = worst.max((u - own).abs());
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistPEstimate {
    pub value: f64,
    /// `|fine - coarse|` between `resolution` and `resolution / 2`.
    pub error_estimate: f64,
    pub coarse: f64,
    /// First-order Richardson value `2 fine - coarse`.
    pub extrapolated: f64,
    /// Error estimate above the relative cap.
    pub refinement_warning: bool,
}

/// `dist_p(x, y)` with a refinement error estimate.
pub fn dist_p(
    f: &DensityField,
    params: &ConformalParams,
    x: &[f64],
    y: &[f64],
    resolution: usize,
) -> Result<DistPEstimate> {
    dist_p_with_cap(f, params, x, y, resolution, DEFAULT_RELATIVE_CAP)
}

pub fn dist_p_with_cap(
    f: &DensityField,
    params: &ConformalParams,
    x: &[f64],
    y: &[f64],
    resolution: usize,
    relative_cap: f64,
) -> Result<DistPEstimate> {
    let domain = f.domain();
    domain.check_point(x)?;
    domain.check_point(y)?;
    if params.d() != domain.dimension() {
        return Err(Error::Parameter(format!(
            "params dimension {} does not match domain dimension {}",
            params.d(),
            domain.dimension()
        )));
    }
    if params.p() == 1.0 || f.is_uniform() {
        // constant cost: geodesics are straight
        let c = cost_from_density(f.inf_bound(), params)?;
        let value = c * domain.dist2(x, y).sqrt();
        return Ok(DistPEstimate {
            value,
            error_estimate: 0.0,
            coarse: value,
            extrapolated: value,
            refinement_warning: false,
        });
    }
    if resolution < 2 * MIN_RESOLUTION {
        return Err(Error::Grid(format!(
            "dist_p needs resolution >= {} for the coarse pass, got {resolution}",
            2 * MIN_RESOLUTION
        )));
    }
    let fine_grid = CostGrid::from_density(f, params, resolution)?;
    let coarse_grid = CostGrid::from_density(f, params, resolution / 2)?;
    let fine = solve_eikonal(&fine_grid, x)?.value_at(y);
    let coarse = solve_eikonal(&coarse_grid, x)?.value_at(y);
    let error_estimate = (fine - coarse).abs();
    Ok(DistPEstimate {
        value: fine,
        error_estimate,
        coarse,
        extrapolated: 2.0 * fine - coarse,
        refinement_warning: error_estimate > relative_cap * fine.abs(),
    })
}

/// `dist_1 sup(f)^((1-p)/d) <= dist_p <= dist_1 inf(f)^((1-p)/d)`; usable in
/// any dimension.
pub fn dist_p_bounds(
    f: &DensityField,
    params: &ConformalParams,
    x: &[f64],
    y: &[f64],
) -> Result<(f64, f64)> {
    let domain = f.domain();
    domain.check_point(x)?;
    domain.check_point(y)?;
    let d1 = domain.dist2(x, y).sqrt();
    let lo = d1 * cost_from_density(f.sup_bound(), params)?;
    let hi = d1 * cost_from_density(f.inf_bound(), params)?;
    Ok((lo, hi))
}
