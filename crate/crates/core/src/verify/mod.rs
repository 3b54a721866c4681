//! Weak-form verification: residuals of the balance laws against finite
//! batteries of test functions, refinement-rate utilities, adaptedness and
//! non-uniqueness checks.

mod certify;
mod incompressible;
mod suite;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{Boundary, BoxGrid, SubBox};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::generator::GeneratorCertificate;
use crate::paths::TimeGrid;
use crate::testfn::{Class, Profile, Scalar, TestFunction};

pub use certify::{
    causality_check, family_distances, momentum_distance, nonuniqueness_certificate, CausalityReport, Divergence,
    NonUniquenessCertificate,
};
pub use incompressible::{residual_incompressible, IncompressibleReport, PieceReport};
pub use suite::{
    residual_continuity, residual_energy, residual_entropy, residual_internal_energy, residual_momentum, run_suite,
    SuiteReport,
};

/// Equation tag of a residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    Continuity,
    Momentum,
    Energy,
    Entropy,
    InternalEnergy,
    /// Zero flux `int v . grad phi = 0`, per subdomain and globally.
    Divergence,
    /// Incompressible momentum balance with the `rho0 theta0` pressure.
    IncompressibleMomentum,
}

impl Equation {
    pub const STOCHASTIC: [Equation; 5] =
        [Equation::Continuity, Equation::Momentum, Equation::Energy, Equation::Entropy, Equation::InternalEnergy];

    pub fn tag(&self) -> &'static str {
        match self {
            Equation::Continuity => "continuity",
            Equation::Momentum => "momentum",
            Equation::Energy => "energy",
            Equation::Entropy => "entropy",
            Equation::InternalEnergy => "internal-energy",
            Equation::Divergence => "divergence",
            Equation::IncompressibleMomentum => "incompressible-momentum",
        }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Discretization of the stochastic integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumKind {
    #[default]
    Stratonovich,
    Ito,
}

/// Knobs of the momentum residual; the defaults are the correct equation,
/// the alternatives exist as negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub momentum_sum: SumKind,
    pub momentum_drift: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { momentum_sum: SumKind::Stratonovich, momentum_drift: 0.5 }
    }
}

/// `tol = S_abs (B q + C / lambda + D defect_rel + floor) + S_signed A dt^0.4`,
/// where `q` is the relative cell-center quadrature defect of the test function.
///
/// `S_abs` integrates absolute values of every term, which bounds quadrature
/// and defect errors; `S_signed` is the size of the signed terms of the
/// identity, which bounds the time discretization error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceModel {
    pub temporal: f64,
    pub spatial: f64,
    pub frequency: f64,
    pub defect: f64,
    pub floor: f64,
}

impl Default for ToleranceModel {
    fn default() -> Self {
        Self { temporal: 0.05, spatial: 0.5, frequency: 0.5, defect: 0.5, floor: 1e-12 }
    }
}

impl ToleranceModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.temporal, self.spatial, self.frequency, self.defect, self.floor];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config("tolerance constants must be finite and nonnegative".into()))
        }
    }

    /// Coefficient of `S_abs` for a test function with quadrature defect `quad`.
    pub fn quadrature(&self, g: &GridParams, quad: f64) -> f64 {
        let freq = g.lambda.map_or(0.0, |l| self.frequency / l);
        self.spatial * quad + freq + self.defect * g.defect_rel + self.floor
    }

    /// Coefficient of `S_signed`.
    pub fn temporal_part(&self, g: &GridParams) -> f64 {
        self.temporal * g.dt.powf(0.4)
    }

    pub fn tolerance(&self, g: &GridParams, quad: f64, abs_scale: f64, signed_scale: f64) -> f64 {
        self.quadrature(g, quad) * abs_scale + self.temporal_part(g) * signed_scale
    }
}

/// Refinement parameters entering the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub dt: f64,
    /// Largest cell width relative to the largest box length.
    pub dx: f64,
    /// Smallest generator frequency; `None` for defect-free fixtures.
    pub lambda: Option<f64>,
    /// Kinetic-energy gap relative to the smallest kinetic target.
    pub defect_rel: f64,
}

/// Certificate information that widens the tolerance for generator fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CertificateBound {
    pub defect_tol: f64,
    pub lambda: Option<f64>,
}

impl CertificateBound {
    pub fn from_certificate(cert: &GeneratorCertificate) -> Self {
        let defect_tol = cert.branch.as_ref().map_or(cert.defect_tol, |b| b.defect_tol.max(cert.defect_tol));
        Self { defect_tol, lambda: cert.smallest_lambda().map(f64::from) }
    }

    /// Widest bound over several certificates, so that all members share one tolerance.
    pub fn merge(bounds: &[CertificateBound]) -> Self {
        bounds.iter().fold(Self::default(), |acc, b| Self {
            defect_tol: acc.defect_tol.max(b.defect_tol),
            lambda: match (acc.lambda, b.lambda) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub tolerance: ToleranceModel,
    pub options: VerifyOptions,
    pub bound: CertificateBound,
}

impl VerifyConfig {
    pub fn with_bound(mut self, bound: CertificateBound) -> Self {
        self.bound = bound;
        self
    }

    pub fn with_options(mut self, options: VerifyOptions) -> Self {
        self.options = options;
        self
    }
}

/// One residual time series for one test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub equation: Equation,
    pub test: String,
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sup: f64,
    /// Integral of absolute values of all terms.
    pub scale: f64,
    /// Size of the signed terms.
    pub signed_scale: f64,
    /// Relative cell-center quadrature defect of the test function.
    pub quadrature_defect: f64,
    pub tolerance: f64,
    pub grid: GridParams,
    pub seed: Option<u64>,
    pub battery_size: usize,
    pub passed: bool,
}

impl ResidualReport {
    /// `sup / tolerance`.
    pub fn ratio(&self) -> f64 {
        if self.tolerance > 0.0 {
            self.sup / self.tolerance
        } else if self.sup == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// `sup / scale`.
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.sup / self.scale
        } else {
            self.sup
        }
    }
}

/// Checkpoints on the noise grid at which residuals are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauLadder {
    nodes: Vec<usize>,
}

impl TauLadder {
    /// `count` equally spaced nodes ending at the horizon.
    pub fn uniform(grid: &TimeGrid, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("the checkpoint ladder needs at least one node".into()));
        }
        let steps = grid.steps();
        let mut nodes: Vec<usize> = (1..=count).map(|k| (k * steps).div_ceil(count)).collect();
        nodes.dedup();
        Ok(Self { nodes })
    }

    /// The default eight checkpoints.
    pub fn standard(grid: &TimeGrid) -> Self {
        Self::uniform(grid, 8).expect("nonzero count")
    }

    pub fn from_nodes(grid: &TimeGrid, mut nodes: Vec<usize>) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() || nodes.iter().any(|&n| n > grid.steps()) {
            return Err(Error::Config("checkpoints must be nonempty and on the grid".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }
}

/// Finite set of test functions for one grid and its subdomains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub grid: BoxGrid,
    pub boxes: Vec<SubBox>,
    pub functions: Vec<TestFunction>,
}

impl Battery {
    /// Bumps at three scales plus one off-center bump per subdomain, as scalars
    /// and as the two coordinate vectors; global low-order trigonometric
    /// scalars; global tangential vector fields.
    pub fn standard(field: &VelocityField) -> Self {
        let grid = *field.grid();
        let boxes = region_boxes(field);
        let mut functions = Vec::new();
        for (i, b) in boxes.iter().enumerate() {
            let half = [0.5 * (b.hi[0] - b.lo[0]), 0.5 * (b.hi[1] - b.lo[1])];
            let mid = [b.lo[0] + half[0], b.lo[1] + half[1]];
            let mut bumps: Vec<(String, Scalar)> = [0.75, 0.5, 0.25]
                .iter()
                .map(|&f| {
                    let p = |d: usize| Profile::Bump { center: mid[d], radius: f * half[d] };
                    (format!("bump{f}"), Scalar { x: p(0), y: p(1) })
                })
                .collect();
            // Support [L/8, 31L/48]: the right edge sits a third of a cell off the
            // nodes of every dyadic grid, so midpoint sums of its derivative carry
            // an O(h^2) quadrature error instead of cancelling exactly.
            let off =
                |d: usize| Profile::Bump { center: b.lo[d] + 37.0 / 48.0 * half[d], radius: 25.0 / 48.0 * half[d] };
            bumps.push(("bump-off".into(), Scalar { x: off(0), y: off(1) }));
            for (name, s) in bumps {
                let zero = Scalar::zero();
                functions.push(TestFunction::scalar(format!("q{i}-{name}"), s, Class::Interior(i)));
                functions.push(TestFunction::vector(format!("q{i}-{name}-e1"), [s, zero], Class::Interior(i)));
                functions.push(TestFunction::vector(format!("q{i}-{name}-e2"), [zero, s], Class::Interior(i)));
            }
        }
        let scalar_profiles = |d: usize| -> Vec<(String, Profile)> {
            let (lo, len) = (grid.origin[d], grid.lengths[d]);
            match grid.boundary[d] {
                Boundary::Wall => vec![
                    ("1".into(), Profile::One),
                    ("cos1".into(), Profile::Cos { k: 1, lo, len }),
                    ("cos2".into(), Profile::Cos { k: 2, lo, len }),
                ],
                Boundary::Periodic => vec![
                    ("1".into(), Profile::One),
                    ("cos2".into(), Profile::Cos { k: 2, lo, len }),
                    ("sin2".into(), Profile::Sin { k: 2, lo, len }),
                ],
            }
        };
        for (nx, px) in scalar_profiles(0) {
            for (ny, py) in scalar_profiles(1) {
                functions.push(TestFunction::scalar(format!("g-{nx}x{ny}"), Scalar { x: px, y: py }, Class::Global));
            }
        }
        for d in 0..2 {
            let o = 1 - d;
            let (lo, len) = (grid.origin[d], grid.lengths[d]);
            let along: Vec<(&str, Profile)> = match grid.boundary[d] {
                Boundary::Wall => {
                    vec![("sin1", Profile::Sin { k: 1, lo, len }), ("sin2", Profile::Sin { k: 2, lo, len })]
                }
                Boundary::Periodic => vec![
                    ("1", Profile::One),
                    ("sin2", Profile::Sin { k: 2, lo, len }),
                    ("cos2", Profile::Cos { k: 2, lo, len }),
                ],
            };
            let (olo, olen) = (grid.origin[o], grid.lengths[o]);
            let across: Vec<(&str, Profile)> = match grid.boundary[o] {
                Boundary::Wall => vec![("1", Profile::One), ("cos1", Profile::Cos { k: 1, lo: olo, len: olen })],
                Boundary::Periodic => vec![("1", Profile::One), ("cos2", Profile::Cos { k: 2, lo: olo, len: olen })],
            };
            for (na, pa) in &along {
                for (nb, pb) in &across {
                    let comp = if d == 0 { Scalar { x: *pa, y: *pb } } else { Scalar { x: *pb, y: *pa } };
                    let zero = Scalar::zero();
                    let v = if d == 0 { [comp, zero] } else { [zero, comp] };
                    functions.push(TestFunction::vector(format!("g-e{}-{na}x{nb}", d + 1), v, Class::Global));
                }
            }
        }
        Self { grid, boxes, functions }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.functions.iter().try_for_each(|f| f.validate(&self.grid, &self.boxes))
    }
}

/// Bounding box of the cells of each region.
pub fn region_boxes(field: &VelocityField) -> Vec<SubBox> {
    let g = field.grid();
    let count = field.speed_sq_targets().len();
    let mut lo = vec![[usize::MAX; 2]; count];
    let mut hi = vec![[0usize; 2]; count];
    for j in 0..g.cells[1] {
        for i in 0..g.cells[0] {
            let r = field.region()[g.cell_index(i, j)];
            lo[r] = [lo[r][0].min(i), lo[r][1].min(j)];
            hi[r] = [hi[r][0].max(i + 1), hi[r][1].max(j + 1)];
        }
    }
    (0..count)
        .map(|r| {
            let a = g.node(lo[r][0], lo[r][1]);
            let b = g.node(hi[r][0], hi[r][1]);
            SubBox { lo: a.to_vec(), hi: b.to_vec() }
        })
        .collect()
}

pub(crate) fn grid_params(field: &VelocityField, dt: f64, bound: &CertificateBound, kinetic_floor: f64) -> GridParams {
    let g = field.grid();
    let len = g.lengths[0].max(g.lengths[1]);
    let dx = g.h(0).max(g.h(1)) / len;
    let defect_rel = if kinetic_floor > 0.0 { bound.defect_tol / kinetic_floor } else { 0.0 };
    GridParams { dt, dx, lambda: bound.lambda, defect_rel }
}

/// Pairwise observed orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn observed_orders(sizes: &[f64], errors: &[f64]) -> Vec<f64> {
    sizes.windows(2).zip(errors.windows(2)).map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect()
}

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_order(sizes: &[f64], errors: &[f64]) -> f64 {
    let n = sizes.len().min(errors.len()) as f64;
    let xs: Vec<f64> = sizes.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::shear_fixture;

    #[test]
    fn ladder_ends_at_horizon() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let l = TauLadder::standard(&g);
        assert_eq!(l.nodes().len(), 8);
        assert_eq!(*l.nodes().last().unwrap(), 100);
        let short = TauLadder::uniform(&TimeGrid::new(1.0, 3).unwrap(), 8).unwrap();
        assert_eq!(short.nodes(), &[1, 2, 3]);
    }

    #[test]
    fn standard_battery_is_valid() {
        let g = BoxGrid::unit_square(16, [Boundary::Periodic, Boundary::Wall]).unwrap();
        let f = shear_fixture(g, 1.0, 2).unwrap();
        let b = Battery::standard(&f);
        b.validate().unwrap();
        assert_eq!(b.len(), 12 + 9 + 10);
        let walls = BoxGrid::unit_square(16, [Boundary::Wall, Boundary::Wall]).unwrap();
        let zero = VelocityField::single(
            walls,
            crate::field::FieldTime::Steady { window: 1.0 },
            vec![vec![0.0; walls.n_nodes()]],
            1.0,
        )
        .unwrap();
        Battery::standard(&zero).validate().unwrap();
    }

    #[test]
    fn orders_of_exact_power_laws() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        for o in observed_orders(&h, &e) {
            assert!((o - 2.0).abs() < 1e-12);
        }
        assert!((fitted_order(&h, &e) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn merged_bound_is_widest() {
        let a = CertificateBound { defect_tol: 0.1, lambda: Some(8.0) };
        let b = CertificateBound { defect_tol: 0.3, lambda: Some(4.0) };
        let m = CertificateBound::merge(&[a, b]);
        assert_eq!(m, CertificateBound { defect_tol: 0.3, lambda: Some(4.0) });
    }
}
