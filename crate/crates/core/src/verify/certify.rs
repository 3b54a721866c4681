//! Adaptedness as prefix determinism, and non-uniqueness certificates.

use serde::{Deserialize, Serialize};

use super::{run_suite, Battery, SuiteReport, TauLadder, VerifyConfig};
use crate::domain::GasData;
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::paths::{sample_wiener, sample_wiener_spliced, TimeGrid};
use crate::rng::derive_seed;
use crate::transform::{assemble_with, EulerSolution, Mutation, Snapshot};

/// First output that differs between the two noise tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub node: usize,
    pub time: f64,
    pub field: String,
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityReport {
    pub seed: u64,
    pub tail_seed: u64,
    pub t_star: f64,
    /// Last noise node at or before `t_star`.
    pub split_node: usize,
    /// Whether the two noise paths differ after `t_star`.
    pub tails_differ: bool,
    pub first_divergence: Option<Divergence>,
    pub passed: bool,
}

fn compare(a: &EulerSolution, b: &EulerSolution, n: usize) -> Result<Option<Divergence>> {
    let time = a.path().grid().node(n);
    let at = |field: &str, cell: usize| Some(Divergence { node: n, time, field: field.into(), cell });
    if a.path().value(n).to_bits() != b.path().value(n).to_bits() {
        return Ok(at("W", 0));
    }
    if a.clock().value(n).to_bits() != b.clock().value(n).to_bits() {
        return Ok(at("tau", 0));
    }
    let (sa, sb): (Snapshot, Snapshot) = (a.snapshot(n)?, b.snapshot(n)?);
    Ok(sa.first_difference(&sb).and_then(|(f, c)| at(f, c)))
}

/// Assemble twice with noise paths that share their increments up to `t_star`
/// and compare every output at noise nodes up to `t_star` bitwise.
pub fn causality_check(
    data: &GasData,
    field: &VelocityField,
    grid: TimeGrid,
    seed: u64,
    t_star: f64,
    mutation: Mutation,
) -> Result<CausalityReport> {
    if !(t_star > 0.0 && t_star <= grid.horizon()) {
        return Err(Error::Config(format!("t* = {t_star} outside (0, {}]", grid.horizon())));
    }
    let split = grid.floor_index(t_star);
    let tail_seed = derive_seed(seed, 0x7A11);
    let w = sample_wiener(grid, seed);
    let w2 = sample_wiener_spliced(grid, seed, split, tail_seed);
    let a = assemble_with(data, field, &w, mutation)?;
    let b = assemble_with(data, field, &w2, mutation)?;
    let mut first = None;
    for n in 0..=split {
        if let Some(d) = compare(&a, &b, n)? {
            first = Some(d);
            break;
        }
    }
    Ok(CausalityReport {
        seed,
        tail_seed,
        t_star,
        split_node: split,
        tails_differ: w.last().to_bits() != w2.last().to_bits(),
        passed: first.is_none(),
        first_divergence: first,
    })
}

/// `|| m_a(t) - m_b(t) ||_{L2}`.
pub fn momentum_distance(a: &EulerSolution, b: &EulerSolution, t: f64) -> Result<f64> {
    if a.field().grid() != b.field().grid() {
        return Err(Error::Mismatch("solutions on different grids".into()));
    }
    let (sa, sb) = (a.snapshot_at(t)?, b.snapshot_at(t)?);
    Ok(snapshot_distance(&sa, &sb, a.field().grid().cell_area()))
}

fn snapshot_distance(a: &Snapshot, b: &Snapshot, area: f64) -> f64 {
    let s: f64 = (0..a.m1.len()).map(|c| (a.m1[c] - b.m1[c]).powi(2) + (a.m2[c] - b.m2[c]).powi(2)).sum();
    (s * area).sqrt()
}

/// All pairwise momentum distances `(i, j, d)` with `i < j` at time `t`.
pub fn family_distances(sols: &[EulerSolution], t: f64) -> Result<Vec<(usize, usize, f64)>> {
    let mut out = Vec::new();
    for i in 0..sols.len() {
        for j in i + 1..sols.len() {
            out.push((i, j, momentum_distance(&sols[i], &sols[j], t)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonUniquenessCertificate {
    pub branch_time: f64,
    pub initial_identical: bool,
    /// Noise-grid times and momentum distances.
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// Distance at twice the branch time.
    pub distance_at_double: f64,
    pub suites: [SuiteReport; 2],
    pub passed: bool,
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Certify that two solutions with bitwise-equal initial data are apart at
/// `2 t1` while both pass the residual suite at one shared tolerance.
pub fn nonuniqueness_certificate(
    a: &EulerSolution,
    b: &EulerSolution,
    t1: f64,
    battery: &Battery,
    ladder: &TauLadder,
    cfg: &VerifyConfig,
) -> Result<NonUniquenessCertificate> {
    if a.path().grid() != b.path().grid() || !same_bits(a.path().values(), b.path().values()) {
        return Err(Error::Mismatch("the two solutions use different noise paths".into()));
    }
    if a.data() != b.data() || a.field().grid() != b.field().grid() {
        return Err(Error::Mismatch("the two solutions use different data or grids".into()));
    }
    let horizon = a.path().grid().horizon();
    if !(t1 > 0.0 && 2.0 * t1 <= horizon) {
        return Err(Error::Config(format!("branch time {t1} needs 0 < 2 t1 <= {horizon}")));
    }
    let (s0, r0) = (a.snapshot(0)?, b.snapshot(0)?);
    let initial_identical = same_bits(&s0.rho, &r0.rho)
        && same_bits(&s0.m1, &r0.m1)
        && same_bits(&s0.m2, &r0.m2)
        && same_bits(&s0.energy, &r0.energy);
    if !initial_identical {
        return Err(Error::Mismatch("initial density, momentum or energy differ".into()));
    }
    let area = a.field().grid().cell_area();
    let grid = a.path().grid();
    let mut distances = Vec::with_capacity(grid.len());
    for n in 0..grid.len() {
        distances.push(snapshot_distance(&a.snapshot(n)?, &b.snapshot(n)?, area));
    }
    if distances.iter().all(|&d| d == 0.0) {
        return Err(Error::Degenerate("the two solutions coincide at every reported time".into()));
    }
    let times = grid.nodes();
    let distance_at_double = momentum_distance(a, b, 2.0 * t1)?;
    let suites = [run_suite(a, battery, ladder, cfg)?, run_suite(b, battery, ladder, cfg)?];
    let passed = distance_at_double > 0.0 && suites.iter().all(SuiteReport::passed);
    Ok(NonUniquenessCertificate {
        branch_time: t1,
        initial_identical,
        times,
        distances,
        distance_at_double,
        suites,
        passed,
    })
}
