//! Sampled paths on uniform time grids and pathwise stochastic calculus.
//!
//! Integrals are running Riemann sums: left endpoints for Itô, midpoints for
//! Stratonovich, increment products for the covariation. Running sums use
//! compensated (Neumaier) accumulation so that the exact discrete identities
//! between the three sums hold to a few ulps even on long grids.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid { steps, horizon });
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Grid with `steps / factor` steps over the same horizon.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::InvalidGrid { steps: self.steps, horizon: self.horizon });
        }
        Self::new(self.horizon, self.steps / factor)
    }

    /// Largest node index `i` with `t_i <= t`, clamped to the grid.
    pub fn floor_index(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let i = ((t / self.horizon) * self.steps as f64).floor() as usize;
        let mut i = i.min(self.steps);
        while i > 0 && self.node(i) > t {
            i -= 1;
        }
        while i < self.steps && self.node(i + 1) <= t {
            i += 1;
        }
        i
    }
}

/// Where a path's values came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Lineage {
    Deterministic,
    Wiener {
        seed: u64,
        /// Increments with index `>= from_step` were drawn from `tail_seed`.
        splice: Option<Splice>,
    },
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Splice {
    pub from_step: usize,
    pub tail_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
    lineage: Lineage,
}

impl SamplePath {
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!("{} values for a grid with {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values, lineage: Lineage::Deterministic })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self { grid, values, lineage: Lineage::Deterministic }
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    fn derived(grid: TimeGrid, values: Vec<f64>) -> Self {
        Self { grid, values, lineage: Lineage::Derived }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn last(&self) -> f64 {
        self.values[self.grid.steps]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Linear interpolation between nodes.
    pub fn at(&self, t: f64) -> f64 {
        let i = self.grid.floor_index(t);
        if i == self.grid.steps {
            return self.values[i];
        }
        let (t0, t1) = (self.grid.node(i), self.grid.node(i + 1));
        let a = (t - t0) / (t1 - t0);
        self.values[i] * (1.0 - a) + self.values[i + 1] * a
    }

    /// Keep every `factor`-th node. Lineage is preserved.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        Ok(Self { grid, values, lineage: self.lineage.clone() })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::derived(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::derived(self.grid, values))
    }

    /// CSV with columns `t,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.grid.node(i), v)?;
        }
        Ok(())
    }
}

fn same_grid(x: &SamplePath, y: &SamplePath) -> Result<()> {
    if x.grid == y.grid {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Neumaier running sum.
#[derive(Default, Clone, Copy)]
pub(crate) struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn running_sum(grid: TimeGrid, terms: impl Iterator<Item = f64>) -> SamplePath {
    let mut acc = Accumulator::default();
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    for term in terms {
        acc.add(term);
        values.push(acc.value());
    }
    SamplePath::derived(grid, values)
}

fn wiener_increment(seed: u64, splice: Option<Splice>, step: usize, sqrt_dt: f64) -> f64 {
    let stream = match splice {
        Some(s) if step >= s.from_step => s.tail_seed,
        _ => seed,
    };
    sqrt_dt * rng::standard_normal(stream, step as u64)
}

fn wiener(grid: TimeGrid, seed: u64, splice: Option<Splice>) -> SamplePath {
    let sqrt_dt = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut w = 0.0;
    values.push(w);
    for step in 0..grid.steps() {
        w += wiener_increment(seed, splice, step, sqrt_dt);
        values.push(w);
    }
    SamplePath { grid, values, lineage: Lineage::Wiener { seed, splice } }
}

/// Wiener path whose increment `k` is `sqrt(dt) * N(seed, k)`.
pub fn sample_wiener(grid: TimeGrid, seed: u64) -> SamplePath {
    wiener(grid, seed, None)
}

/// Same prefix as `sample_wiener(grid, seed)` up to node `from_step`; later
/// increments come from `tail_seed`.
pub fn sample_wiener_spliced(grid: TimeGrid, seed: u64, from_step: usize, tail_seed: u64) -> SamplePath {
    wiener(grid, seed, Some(Splice { from_step, tail_seed }))
}

/// Running left-endpoint sum of `X dY`.
pub fn ito_integral(x: &SamplePath, y: &SamplePath) -> Result<SamplePath> {
    same_grid(x, y)?;
    let (xv, yv) = (&x.values, &y.values);
    Ok(running_sum(x.grid, (0..x.grid.steps()).map(|i| xv[i] * (yv[i + 1] - yv[i]))))
}

/// Running midpoint sum of `X o dY`.
pub fn stratonovich_integral(x: &SamplePath, y: &SamplePath) -> Result<SamplePath> {
    same_grid(x, y)?;
    let (xv, yv) = (&x.values, &y.values);
    Ok(running_sum(x.grid, (0..x.grid.steps()).map(|i| 0.5 * (xv[i] + xv[i + 1]) * (yv[i + 1] - yv[i]))))
}

/// Running sum of increment products `[X, Y]`.
pub fn quadratic_covariation(x: &SamplePath, y: &SamplePath) -> Result<SamplePath> {
    same_grid(x, y)?;
    let (xv, yv) = (&x.values, &y.values);
    Ok(running_sum(x.grid, (0..x.grid.steps()).map(|i| (xv[i + 1] - xv[i]) * (yv[i + 1] - yv[i]))))
}

/// `max_t |X_t Y_t - X_0 Y_0 - int X o dY - int Y o dX|`.
pub fn check_product_rule(x: &SamplePath, y: &SamplePath) -> Result<f64> {
    let xdy = stratonovich_integral(x, y)?;
    let ydx = stratonovich_integral(y, x)?;
    let x0y0 = x.values[0] * y.values[0];
    Ok((0..x.grid.len())
        .map(|i| (x.values[i] * y.values[i] - x0y0 - xdy.values[i] - ydx.values[i]).abs())
        .fold(0.0, f64::max))
}

/// Node-wise `exp(alpha * W)`.
pub fn exp_path(w: &SamplePath, alpha: f64) -> Result<SamplePath> {
    let exponent = alpha.abs() * w.max_abs();
    if exponent > 700.0 {
        return Err(Error::ExpOverflow(exponent));
    }
    Ok(w.map(|v| (alpha * v).exp()))
}

/// `tau(t) = int_0^t exp(-W/2) ds` on the nodes of `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomClock {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl RandomClock {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn last(&self) -> f64 {
        self.values[self.grid.steps()]
    }

    pub fn at(&self, t: f64) -> f64 {
        let i = self.grid.floor_index(t);
        if i == self.grid.steps() {
            return self.values[i];
        }
        let (t0, t1) = (self.grid.node(i), self.grid.node(i + 1));
        let a = (t - t0) / (t1 - t0);
        self.values[i] * (1.0 - a) + self.values[i + 1] * a
    }

    /// Clock of the full-path mean rate, `tau(t) = t * mean(exp(-W/2))`.
    /// Reads the whole path at every time, so it is not adapted; kept as a
    /// negative control for the causality check.
    pub fn broken(w: &SamplePath) -> Self {
        let grid = *w.grid();
        let full = build_clock(w);
        let rate = full.last() / grid.horizon();
        Self { grid, values: grid.nodes().into_iter().map(|t| t * rate).collect() }
    }
}

/// Trapezoid quadrature of `exp(-W/2)`.
pub fn build_clock(w: &SamplePath) -> RandomClock {
    let grid = *w.grid();
    let half_dt = 0.5 * grid.dt();
    let rate: Vec<f64> = w.values.iter().map(|v| (-0.5 * v).exp()).collect();
    let mut acc = Accumulator::default();
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    for i in 0..grid.steps() {
        acc.add(half_dt * (rate[i] + rate[i + 1]));
        values.push(acc.value());
    }
    RandomClock { grid, values }
}
