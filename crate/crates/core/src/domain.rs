//! Boxes, subdomain partitions and piecewise-constant gas data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Wall,
    Periodic,
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SubBox {
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    dim: usize,
    lengths: Vec<f64>,
    boundary: Vec<Boundary>,
    subdomains: Vec<SubBox>,
}

impl DomainSpec {
    pub fn new(lengths: Vec<f64>, boundary: Vec<Boundary>, subdomains: Vec<SubBox>) -> Result<Self> {
        let dim = lengths.len();
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if boundary.len() != dim {
            return Err(Error::InvalidDomain(format!("{} boundary modes for dimension {dim}", boundary.len())));
        }
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidDomain("box lengths must be positive".into()));
        }
        if subdomains.is_empty() {
            return Err(Error::InvalidDomain("empty subdomain list".into()));
        }
        for (k, b) in subdomains.iter().enumerate() {
            if b.lo.len() != dim || b.hi.len() != dim {
                return Err(Error::InvalidDomain(format!("subdomain {k} has wrong dimension")));
            }
            for (d, &len) in lengths.iter().enumerate().take(dim) {
                let tol = 1e-12 * len;
                if !(b.hi[d] > b.lo[d]) || b.lo[d] < -tol || b.hi[d] > len + tol {
                    return Err(Error::InvalidDomain(format!("subdomain {k} is empty or leaves the box")));
                }
            }
        }
        for a in 0..subdomains.len() {
            for b in a + 1..subdomains.len() {
                let (p, q) = (&subdomains[a], &subdomains[b]);
                let overlap: f64 = (0..dim).map(|d| (p.hi[d].min(q.hi[d]) - p.lo[d].max(q.lo[d])).max(0.0)).product();
                if overlap > 1e-12 * p.volume().min(q.volume()) {
                    return Err(Error::InvalidDomain(format!("subdomains {a} and {b} overlap")));
                }
            }
        }
        let total: f64 = subdomains.iter().map(SubBox::volume).sum();
        let full: f64 = lengths.iter().product();
        if (total - full).abs() > 1e-10 * full {
            return Err(Error::InvalidDomain(format!("subdomains cover volume {total}, box has {full}")));
        }
        Ok(Self { dim, lengths, boundary, subdomains })
    }

    /// Single-subdomain box.
    pub fn single(lengths: Vec<f64>, boundary: Vec<Boundary>) -> Result<Self> {
        let b = SubBox { lo: vec![0.0; lengths.len()], hi: lengths.clone() };
        Self::new(lengths, boundary, vec![b])
    }

    /// Tensor partition by interior cut positions per axis. Boxes are listed
    /// with axis 0 varying fastest.
    pub fn tensor(lengths: Vec<f64>, boundary: Vec<Boundary>, cuts: &[Vec<f64>]) -> Result<Self> {
        let dim = lengths.len();
        if cuts.len() != dim {
            return Err(Error::InvalidDomain("one cut list per axis required".into()));
        }
        let edges: Vec<Vec<f64>> = (0..dim)
            .map(|d| {
                let mut e = vec![0.0];
                e.extend(cuts[d].iter().copied());
                e.push(lengths[d]);
                e
            })
            .collect();
        for (d, e) in edges.iter().enumerate() {
            if e.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidDomain(format!("cuts on axis {d} must increase strictly inside the box")));
            }
        }
        let counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let total: usize = counts.iter().product();
        let mut boxes = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut lo = Vec::with_capacity(dim);
            let mut hi = Vec::with_capacity(dim);
            for d in 0..dim {
                let k = rem % counts[d];
                rem /= counts[d];
                lo.push(edges[d][k]);
                hi.push(edges[d][k + 1]);
            }
            boxes.push(SubBox { lo, hi });
        }
        Self::new(lengths, boundary, boxes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn boundary(&self) -> &[Boundary] {
        &self.boundary
    }

    pub fn subdomains(&self) -> &[SubBox] {
        &self.subdomains
    }

    pub fn volume(&self, i: usize) -> f64 {
        self.subdomains[i].volume()
    }

    fn require_plane(&self) -> Result<()> {
        if self.dim == 2 {
            Ok(())
        } else {
            Err(Error::UnsupportedDimension(self.dim))
        }
    }

    /// Uniform grid of `cells` over the whole box.
    pub fn grid(&self, cells: [usize; 2]) -> Result<BoxGrid> {
        self.require_plane()?;
        BoxGrid::new([0.0, 0.0], [self.lengths[0], self.lengths[1]], cells, [self.boundary[0], self.boundary[1]])
    }

    /// The part of the global grid covering subdomain `i`. An axis stays
    /// periodic only if the subdomain spans the whole periodic axis.
    pub fn subgrid(&self, i: usize, cells: [usize; 2]) -> Result<BoxGrid> {
        self.require_plane()?;
        let b = &self.subdomains[i];
        let mut origin = [0.0; 2];
        let mut lengths = [0.0; 2];
        let mut n = [0usize; 2];
        let mut boundary = [Boundary::Wall; 2];
        for d in 0..2 {
            let h = self.lengths[d] / cells[d] as f64;
            let lo = aligned(b.lo[d] / h, d)?;
            let hi = aligned(b.hi[d] / h, d)?;
            origin[d] = lo as f64 * h;
            n[d] = hi - lo;
            lengths[d] = n[d] as f64 * h;
            if self.boundary[d] == Boundary::Periodic && lo == 0 && hi == cells[d] {
                boundary[d] = Boundary::Periodic;
            }
        }
        BoxGrid::new(origin, lengths, n, boundary)
    }

    /// Subdomain index of every global cell, row-major with axis 0 fastest.
    pub fn cell_regions(&self, cells: [usize; 2]) -> Result<Vec<usize>> {
        self.require_plane()?;
        let h = [self.lengths[0] / cells[0] as f64, self.lengths[1] / cells[1] as f64];
        let mut region = vec![usize::MAX; cells[0] * cells[1]];
        for (k, b) in self.subdomains.iter().enumerate() {
            let i0 = aligned(b.lo[0] / h[0], 0)?;
            let i1 = aligned(b.hi[0] / h[0], 0)?;
            let j0 = aligned(b.lo[1] / h[1], 1)?;
            let j1 = aligned(b.hi[1] / h[1], 1)?;
            for j in j0..j1 {
                for i in i0..i1 {
                    region[j * cells[0] + i] = k;
                }
            }
        }
        if region.contains(&usize::MAX) {
            return Err(Error::InvalidDomain("grid cells not covered by any subdomain".into()));
        }
        Ok(region)
    }
}

fn aligned(x: f64, axis: usize) -> Result<usize> {
    let r = x.round();
    if (x - r).abs() > 1e-9 * x.abs().max(1.0) {
        return Err(Error::InvalidDomain(format!("subdomain edge on axis {axis} is not aligned with the grid")));
    }
    Ok(r as usize)
}

/// Uniform 2D cell grid over an axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub origin: [f64; 2],
    pub lengths: [f64; 2],
    pub cells: [usize; 2],
    pub boundary: [Boundary; 2],
}

impl BoxGrid {
    pub fn new(origin: [f64; 2], lengths: [f64; 2], cells: [usize; 2], boundary: [Boundary; 2]) -> Result<Self> {
        if cells[0] == 0 || cells[1] == 0 {
            return Err(Error::InvalidDomain("grid needs at least one cell per axis".into()));
        }
        if !(lengths[0] > 0.0 && lengths[1] > 0.0) {
            return Err(Error::InvalidDomain("grid lengths must be positive".into()));
        }
        Ok(Self { origin, lengths, cells, boundary })
    }

    pub fn unit_square(n: usize, boundary: [Boundary; 2]) -> Result<Self> {
        Self::new([0.0, 0.0], [1.0, 1.0], [n, n], boundary)
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.h(0) * self.h(1)
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn n_nodes(&self) -> usize {
        (self.cells[0] + 1) * (self.cells[1] + 1)
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.cells[0] + 1) + i
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + (i as f64 + 0.5) * self.h(0), self.origin[1] + (j as f64 + 0.5) * self.h(1)]
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.h(0), self.origin[1] + j as f64 * self.h(1)]
    }

    pub fn same_spacing(&self, other: &BoxGrid) -> bool {
        (0..2).all(|d| (self.h(d) - other.h(d)).abs() <= 1e-12 * self.h(d))
    }
}

/// Deterministic bounds on the initial density and temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataBounds {
    pub rho_min: f64,
    pub rho_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl DataBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_min > 0.0 && self.theta_min > 0.0) {
            return Err(Error::InvalidData("lower bounds must be positive".into()));
        }
        if self.rho_max < self.rho_min || self.theta_max < self.theta_min {
            return Err(Error::InvalidData("upper bound below lower bound".into()));
        }
        Ok(())
    }
}

/// Piecewise-constant initial density and temperature, one value per subdomain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub gamma: f64,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    pub bounds: DataBounds,
}

impl InitialState {
    pub fn new(gamma: f64, rho: Vec<f64>, theta: Vec<f64>, bounds: DataBounds) -> Result<Self> {
        bounds.validate()?;
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidData(format!("adiabatic exponent {gamma} must exceed 1")));
        }
        if rho.len() != theta.len() || rho.is_empty() {
            return Err(Error::InvalidData("need one density and one temperature per subdomain".into()));
        }
        for (i, (&r, &t)) in rho.iter().zip(&theta).enumerate() {
            if !(r >= bounds.rho_min && r <= bounds.rho_max) {
                return Err(Error::InvalidData(format!("density {r} of subdomain {i} outside bounds")));
            }
            if !(t >= bounds.theta_min && t <= bounds.theta_max) {
                return Err(Error::InvalidData(format!("temperature {t} of subdomain {i} outside bounds")));
            }
        }
        Ok(Self { gamma, rho, theta, bounds })
    }

    /// Uniform data with trivial bounds.
    pub fn uniform(gamma: f64, rho: f64, theta: f64, count: usize) -> Result<Self> {
        let bounds = DataBounds { rho_min: rho, rho_max: rho, theta_min: theta, theta_max: theta };
        Self::new(gamma, vec![rho; count], vec![theta; count], bounds)
    }

    /// Draw each subdomain's values uniformly within the bounds.
    pub fn sample(gamma: f64, bounds: DataBounds, count: usize, seed: u64) -> Result<Self> {
        bounds.validate()?;
        let stream = rng::derive_seed(seed, 0xDA7A);
        let draw = |k: u64, lo: f64, hi: f64| lo + (hi - lo) * rng::uniform(stream, k);
        let rho = (0..count).map(|i| draw(2 * i as u64, bounds.rho_min, bounds.rho_max)).collect();
        let theta = (0..count).map(|i| draw(2 * i as u64 + 1, bounds.theta_min, bounds.theta_max)).collect();
        Self::new(gamma, rho, theta, bounds)
    }

    pub fn cv(&self) -> f64 {
        1.0 / (self.gamma - 1.0)
    }

    pub fn count(&self) -> usize {
        self.rho.len()
    }

    pub fn pressure(&self, i: usize) -> f64 {
        self.rho[i] * self.theta[i]
    }

    pub fn max_pressure(&self) -> f64 {
        (0..self.count()).map(|i| self.pressure(i)).fold(f64::MIN, f64::max)
    }
}

/// Initial state plus the common pressure constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasData {
    pub state: InitialState,
    pub lambda0: f64,
}

impl GasData {
    pub fn new(state: InitialState, lambda0: f64) -> Result<Self> {
        for i in 0..state.count() {
            if !(lambda0 - state.pressure(i) > 0.0) {
                return Err(Error::InvalidData(format!(
                    "Lambda0 = {lambda0} must exceed rho*theta = {} on subdomain {i}",
                    state.pressure(i)
                )));
            }
        }
        Ok(Self { state, lambda0 })
    }

    pub fn gamma(&self) -> f64 {
        self.state.gamma
    }

    pub fn cv(&self) -> f64 {
        self.state.cv()
    }

    pub fn rho(&self, i: usize) -> f64 {
        self.state.rho[i]
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.state.theta[i]
    }

    pub fn count(&self) -> usize {
        self.state.count()
    }

    /// Kinetic energy density `K0 = (2/N)(Lambda0 - rho theta)`.
    pub fn kinetic_target(&self, i: usize, dim: usize) -> f64 {
        2.0 / dim as f64 * (self.lambda0 - self.state.pressure(i))
    }

    /// Target `|v|^2 = 2 rho K0`.
    pub fn speed_sq(&self, i: usize, dim: usize) -> f64 {
        2.0 * self.rho(i) * self.kinetic_target(i, dim)
    }

    /// Initial total energy density `K0 + c_v rho theta`.
    pub fn energy_density(&self, i: usize, dim: usize) -> f64 {
        self.kinetic_target(i, dim) + self.cv() * self.state.pressure(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyThreshold {
    pub lambda0: f64,
    /// Total initial energy in the limit `Lambda0 -> max rho theta`.
    pub threshold: f64,
}

/// Solve `sum |Q_i| [(2/N)(Lambda0 - rho_i theta_i) + c_v rho_i theta_i] = target` for `Lambda0`.
pub fn required_lambda(state: &InitialState, target: f64, domain: &DomainSpec) -> Result<EnergyThreshold> {
    if state.count() != domain.subdomains().len() {
        return Err(Error::Mismatch("one data value per subdomain required".into()));
    }
    let k = 2.0 / domain.dim() as f64;
    let cv = state.cv();
    let vol: f64 = (0..state.count()).map(|i| domain.volume(i)).sum();
    let pmax = state.max_pressure();
    let total_at = |lambda0: f64| -> f64 {
        (0..state.count())
            .map(|i| domain.volume(i) * (k * (lambda0 - state.pressure(i)) + cv * state.pressure(i)))
            .sum()
    };
    let threshold = total_at(pmax);
    if !(target > threshold) {
        return Err(Error::InfeasibleEnergy { target, threshold });
    }
    let lambda0 = pmax + (target - threshold) / (k * vol);
    Ok(EnergyThreshold { lambda0, threshold })
}
