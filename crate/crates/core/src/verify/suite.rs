//! Residuals of continuity, momentum, total energy, entropy and internal
//! energy for an assembled solution.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    grid_params, region_boxes, Battery, Equation, GridParams, ResidualReport, SumKind, TauLadder, VerifyConfig,
};
use crate::domain::BoxGrid;
use crate::error::{Error, Result};
use crate::paths::{ito_integral, stratonovich_integral, Accumulator, Lineage, SamplePath};
use crate::testfn::{Shape, TestFunction};
use crate::transform::{EulerSolution, Snapshot};

/// Test function sampled at cell centers, restricted to the cells where it or
/// its gradient is nonzero.
pub(crate) enum Prepared {
    Scalar {
        cells: Vec<usize>,
        phi: Vec<f64>,
        grad: Vec<[f64; 2]>,
    },
    /// `grad[c][a][b] = d_b phi_a`.
    Vector {
        cells: Vec<usize>,
        phi: Vec<[f64; 2]>,
        grad: Vec<[[f64; 2]; 2]>,
    },
}

pub(crate) fn prepare(tf: &TestFunction, grid: &BoxGrid) -> Prepared {
    let centers = (0..grid.cells[1]).flat_map(|j| (0..grid.cells[0]).map(move |i| (i, j)));
    match &tf.shape {
        Shape::Scalar(s) => {
            let (mut cells, mut phi, mut grad) = (Vec::new(), Vec::new(), Vec::new());
            for (i, j) in centers {
                let x = grid.cell_center(i, j);
                let (v, g) = (s.value(x), s.gradient(x));
                if v != 0.0 || g != [0.0, 0.0] {
                    cells.push(grid.cell_index(i, j));
                    phi.push(v);
                    grad.push(g);
                }
            }
            Prepared::Scalar { cells, phi, grad }
        }
        Shape::Vector(v) => {
            let (mut cells, mut phi, mut grad) = (Vec::new(), Vec::new(), Vec::new());
            for (i, j) in centers {
                let x = grid.cell_center(i, j);
                let p = [v[0].value(x), v[1].value(x)];
                let g = [v[0].gradient(x), v[1].gradient(x)];
                if p != [0.0, 0.0] || g != [[0.0, 0.0], [0.0, 0.0]] {
                    cells.push(grid.cell_index(i, j));
                    phi.push(p);
                    grad.push(g);
                }
            }
            Prepared::Vector { cells, phi, grad }
        }
    }
}

// Moment slots. Scalar tests use the first nine, vector tests the momentum pair;
// the `ABS` offset holds the matching integrals of absolute values.
const RHO: usize = 0;
const MASS_FLUX: usize = 1;
const ENERGY: usize = 2;
const ENERGY_FLUX: usize = 3;
const ENTROPY: usize = 4;
const ENTROPY_FLUX: usize = 5;
const CV_RHO: usize = 6;
const INTERNAL: usize = 7;
const INTERNAL_FLUX: usize = 8;
const MOMENTUM: usize = 0;
const MOMENTUM_FLUX: usize = 1;
const ABS: usize = 9;
const SLOTS: usize = 18;

type Moments = [f64; SLOTS];

fn moments(s: &Snapshot, cv: f64, area: f64, p: &Prepared) -> Moments {
    let mut out = [0.0; SLOTS];
    match p {
        Prepared::Scalar { cells, phi, grad } => {
            for ((&c, &f), g) in cells.iter().zip(phi).zip(grad) {
                let (rho, m) = (s.rho[c], [s.m1[c], s.m2[c]]);
                let mg = m[0] * g[0] + m[1] * g[1];
                let mg_abs = m[0].hypot(m[1]) * g[0].hypot(g[1]);
                let (e, p, th, en) = (s.energy[c], s.pressure[c], s.theta[c], s.entropy[c]);
                let internal = cv * rho * th;
                let terms = [
                    rho * f,
                    mg,
                    e * f,
                    (e + p) / rho * mg,
                    rho * en * f,
                    en * mg,
                    cv * rho * f,
                    internal * f,
                    cv * th * mg,
                ];
                let abs = [
                    (rho * f).abs(),
                    mg_abs,
                    (e * f).abs(),
                    (e + p).abs() / rho * mg_abs,
                    (rho * en * f).abs(),
                    en.abs() * mg_abs,
                    (cv * rho * f).abs(),
                    (internal * f).abs(),
                    cv * th * mg_abs,
                ];
                for k in 0..ABS {
                    out[k] += terms[k];
                    out[ABS + k] += abs[k];
                }
            }
        }
        Prepared::Vector { cells, phi, grad } => {
            for ((&c, f), g) in cells.iter().zip(phi).zip(grad) {
                let (rho, m, p) = (s.rho[c], [s.m1[c], s.m2[c]], s.pressure[c]);
                let mut conv = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        conv += m[a] * m[b] * g[a][b];
                    }
                }
                let div = g[0][0] + g[1][1];
                let norm_g = (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt();
                let m2 = m[0] * m[0] + m[1] * m[1];
                out[MOMENTUM] += m[0] * f[0] + m[1] * f[1];
                out[MOMENTUM_FLUX] += conv / rho + p * div;
                out[ABS + MOMENTUM] += m2.sqrt() * f[0].hypot(f[1]);
                out[ABS + MOMENTUM_FLUX] += m2 / rho * norm_g + p * div.abs();
            }
        }
    }
    for v in &mut out {
        *v *= area;
    }
    out
}

/// Per-node moments of every prepared test: `[node][test]`.
fn series(sol: &EulerSolution, prepared: &[Prepared]) -> Result<Vec<Vec<Moments>>> {
    let area = sol.field().grid().cell_area();
    let cv = sol.data().cv();
    (0..sol.path().grid().len())
        .into_par_iter()
        .map(|n| {
            let s = sol.snapshot(n)?;
            Ok(prepared.iter().map(|p| moments(&s, cv, area, p)).collect())
        })
        .collect()
}

fn column(series: &[Vec<Moments>], test: usize, slot: usize) -> Vec<f64> {
    series.iter().map(|row| row[test][slot]).collect()
}

fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = Accumulator::default();
    let mut out = Vec::with_capacity(values.len());
    out.push(0.0);
    for w in values.windows(2) {
        acc.add(0.5 * dt * (w[0] + w[1]));
        out.push(acc.value());
    }
    out
}

fn stochastic(values: Vec<f64>, w: &SamplePath, kind: SumKind) -> Result<Vec<f64>> {
    let x = SamplePath::from_values(*w.grid(), values)?;
    let s = match kind {
        SumKind::Stratonovich => stratonovich_integral(&x, w)?,
        SumKind::Ito => ito_integral(&x, w)?,
    };
    Ok(s.values().to_vec())
}

/// Signed residual series at every node plus the scale of the identity.
fn signed_residual(
    eq: Equation,
    series: &[Vec<Moments>],
    test: usize,
    sol: &EulerSolution,
    cfg: &VerifyConfig,
) -> Result<(Vec<f64>, f64, f64)> {
    let w = sol.path();
    let (dt, horizon) = (w.grid().dt(), w.grid().horizon());
    let (dens, flux, coef, integrand, kind) = match eq {
        Equation::Continuity => (RHO, MASS_FLUX, 0.0, None, SumKind::Stratonovich),
        Equation::Momentum => {
            (MOMENTUM, MOMENTUM_FLUX, cfg.options.momentum_drift, Some(MOMENTUM), cfg.options.momentum_sum)
        }
        Equation::Energy => (ENERGY, ENERGY_FLUX, 1.0, Some(ENERGY), SumKind::Stratonovich),
        Equation::Entropy => (ENTROPY, ENTROPY_FLUX, 1.0, Some(CV_RHO), SumKind::Stratonovich),
        Equation::InternalEnergy => (INTERNAL, INTERNAL_FLUX, 1.0, Some(INTERNAL), SumKind::Stratonovich),
        other => return Err(Error::Mismatch(format!("{other} is not a stochastic balance law"))),
    };
    let x = column(series, test, dens);
    let f = cumulative_trapezoid(&column(series, test, flux), dt);
    let st = match integrand {
        Some(slot) => stochastic(column(series, test, slot), w, kind)?,
        None => vec![0.0; x.len()],
    };
    let r = (0..x.len()).map(|k| x[k] - x[0] - f[k] + coef * st[k]).collect();
    let max = |slot: usize| column(series, test, slot).into_iter().fold(0.0, f64::max);
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut scale = max(ABS + dens) + horizon * max(ABS + flux);
    if eq == Equation::Entropy {
        scale += max(ABS + CV_RHO) * w.max_abs();
    }
    let signed = max_abs(&x) + max_abs(&f) + coef.abs() * max_abs(&st);
    Ok((r, scale, signed))
}

fn kinetic_floor(sol: &EulerSolution) -> f64 {
    let d = sol.data();
    (0..d.count()).map(|i| d.kinetic_target(i, 2)).fold(f64::INFINITY, f64::min)
}

fn seed_of(sol: &EulerSolution) -> Option<u64> {
    match sol.path().lineage() {
        Lineage::Wiener { seed, .. } => Some(*seed),
        _ => None,
    }
}

struct Context {
    grid: GridParams,
    model: super::ToleranceModel,
    seed: Option<u64>,
}

fn context(sol: &EulerSolution, cfg: &VerifyConfig) -> Result<Context> {
    cfg.tolerance.validate()?;
    let grid = grid_params(sol.field(), sol.path().grid().dt(), &cfg.bound, kinetic_floor(sol));
    Ok(Context { model: cfg.tolerance, grid, seed: seed_of(sol) })
}

#[allow(clippy::too_many_arguments)]
fn report(
    eq: Equation,
    tf: &TestFunction,
    signed: &[f64],
    scale: f64,
    signed_scale: f64,
    ladder: &TauLadder,
    sol: &EulerSolution,
    ctx: &Context,
    battery_size: usize,
) -> ResidualReport {
    let times = ladder.nodes().iter().map(|&n| sol.path().grid().node(n)).collect();
    let residuals: Vec<f64> = ladder.nodes().iter().map(|&n| signed[n].abs()).collect();
    let sup = residuals.iter().copied().fold(0.0, f64::max);
    let quadrature_defect = tf.quadrature_defect(sol.field().grid());
    let tolerance = ctx.model.tolerance(&ctx.grid, quadrature_defect, scale, signed_scale);
    ResidualReport {
        equation: eq,
        test: tf.name.clone(),
        times,
        residuals,
        sup,
        scale,
        signed_scale,
        quadrature_defect,
        tolerance,
        grid: ctx.grid,
        seed: ctx.seed,
        battery_size,
        passed: sup <= tolerance,
    }
}

fn check_ladder(sol: &EulerSolution, ladder: &TauLadder) -> Result<()> {
    if ladder.nodes().iter().any(|&n| n > sol.path().grid().steps()) {
        return Err(Error::Config("checkpoint beyond the noise grid".into()));
    }
    Ok(())
}

fn single(
    eq: Equation,
    sol: &EulerSolution,
    phi: &TestFunction,
    ladder: &TauLadder,
    cfg: &VerifyConfig,
) -> Result<ResidualReport> {
    check_ladder(sol, ladder)?;
    phi.validate(sol.field().grid(), &region_boxes(sol.field()))?;
    let ctx = context(sol, cfg)?;
    let prepared = [prepare(phi, sol.field().grid())];
    let s = series(sol, &prepared)?;
    let (signed, scale, signed_scale) = signed_residual(eq, &s, 0, sol, cfg)?;
    Ok(report(eq, phi, &signed, scale, signed_scale, ladder, sol, &ctx, 1))
}

fn require_scalar(phi: &TestFunction) -> Result<()> {
    match phi.shape {
        Shape::Scalar(_) => Ok(()),
        Shape::Vector(_) => Err(Error::TestClass(format!("{}: a scalar test function is required", phi.name))),
    }
}

/// `|int rho(tau) phi - int rho0 phi - int_0^tau int m . grad phi|`.
pub fn residual_continuity(
    sol: &EulerSolution,
    phi: &TestFunction,
    ladder: &TauLadder,
    cfg: &VerifyConfig,
) -> Result<ResidualReport> {
    require_scalar(phi)?;
    single(Equation::Continuity, sol, phi, ladder, cfg)
}

/// Momentum balance with the `1/2 int (int m . phi) o dW` correction.
pub fn residual_momentum(
    sol: &EulerSolution,
    phi: &TestFunction,
    ladder: &TauLadder,
    cfg: &VerifyConfig,
) -> Result<ResidualReport> {
    if !matches!(phi.shape, Shape::Vector(_)) {
        return Err(Error::TestClass(format!("{}: a vector test function is required", phi.name)));
    }
    single(Equation::Momentum, sol, phi, ladder, cfg)
}

/// Total energy balance with flux `(E + p) m / rho` and `- int (int E phi) o dW`.
pub fn residual_energy(
    sol: &EulerSolution,
    phi: &TestFunction,
    ladder: &TauLadder,
    cfg: &VerifyConfig,
) -> Result<ResidualReport> {
    require_scalar(phi)?;
    single(Equation::Energy, sol, phi, ladder, cfg)
}

/// Entropy balance checked as an equality; `phi` must be nonnegative.
pub fn residual_entropy(
    sol: &EulerSolution,
    phi: &TestFunction,
    ladder: &TauLadder,
    cfg: &VerifyConfig,
) -> Result<ResidualReport> {
    require_scalar(phi)?;
    if !phi.is_nonnegative() {
        return Err(Error::TestClass(format!("{}: the entropy balance needs a nonnegative test function", phi.name)));
    }
    single(Equation::Entropy, sol, phi, ladder, cfg)
}

/// Internal energy balance with density `c_v rho theta`.
pub fn residual_internal_energy(
    sol: &EulerSolution,
    phi: &TestFunction,
    ladder: &TauLadder,
    cfg: &VerifyConfig,
) -> Result<ResidualReport> {
    require_scalar(phi)?;
    single(Equation::InternalEnergy, sol, phi, ladder, cfg)
}

/// All stochastic balance laws over a battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: Option<u64>,
    pub grid: GridParams,
    pub battery_size: usize,
    pub reports: Vec<ResidualReport>,
    /// Smallest signed entropy residual over nonnegative tests, relative to its scale.
    pub entropy_inequality: f64,
    pub entropy_inequality_passed: bool,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed) && self.entropy_inequality_passed
    }

    /// Equations with at least one failing test function.
    pub fn failing(&self) -> BTreeSet<Equation> {
        self.reports.iter().filter(|r| !r.passed).map(|r| r.equation).collect()
    }

    /// Largest absolute residual of `eq` over the battery.
    pub fn sup(&self, eq: Equation) -> f64 {
        self.reports.iter().filter(|r| r.equation == eq).map(|r| r.sup).fold(0.0, f64::max)
    }

    /// Largest `sup / scale` of `eq` over the battery.
    pub fn max_relative(&self, eq: Equation) -> f64 {
        self.reports.iter().filter(|r| r.equation == eq).map(|r| r.relative()).fold(0.0, f64::max)
    }

    /// Largest `sup / tolerance` of `eq` over the battery.
    pub fn max_ratio(&self, eq: Equation) -> f64 {
        self.reports.iter().filter(|r| r.equation == eq).map(|r| r.ratio()).fold(0.0, f64::max)
    }

    /// Report with the largest `sup / tolerance` for `eq`.
    pub fn worst(&self, eq: Equation) -> Option<&ResidualReport> {
        self.reports.iter().filter(|r| r.equation == eq).max_by(|a, b| a.ratio().total_cmp(&b.ratio()))
    }
}

/// Every balance law against every applicable member of `battery`.
pub fn run_suite(
    sol: &EulerSolution,
    battery: &Battery,
    ladder: &TauLadder,
    cfg: &VerifyConfig,
) -> Result<SuiteReport> {
    check_ladder(sol, ladder)?;
    if battery.grid != *sol.field().grid() {
        return Err(Error::Mismatch("battery built for a different grid".into()));
    }
    battery.validate()?;
    let ctx = context(sol, cfg)?;
    let prepared: Vec<Prepared> = battery.functions.iter().map(|f| prepare(f, &battery.grid)).collect();
    let s = series(sol, &prepared)?;
    let n = battery.len();
    let mut reports = Vec::new();
    let mut inequality = f64::INFINITY;
    let mut inequality_passed = true;
    for (t, tf) in battery.functions.iter().enumerate() {
        let eqs: &[Equation] = match tf.shape {
            Shape::Vector(_) => &[Equation::Momentum],
            Shape::Scalar(_) if tf.is_nonnegative() => {
                &[Equation::Continuity, Equation::Energy, Equation::Entropy, Equation::InternalEnergy]
            }
            Shape::Scalar(_) => &[Equation::Continuity, Equation::Energy, Equation::InternalEnergy],
        };
        for &eq in eqs {
            let (signed, scale, signed_scale) = signed_residual(eq, &s, t, sol, cfg)?;
            let r = report(eq, tf, &signed, scale, signed_scale, ladder, sol, &ctx, n);
            if eq == Equation::Entropy {
                let low = ladder.nodes().iter().map(|&k| signed[k]).fold(f64::INFINITY, f64::min);
                inequality = inequality.min(low / scale);
                inequality_passed &= low >= -r.tolerance;
            }
            reports.push(r);
        }
    }
    Ok(SuiteReport {
        seed: ctx.seed,
        grid: ctx.grid,
        battery_size: n,
        reports,
        entropy_inequality: inequality,
        entropy_inequality_passed: inequality_passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Boundary, GasData, InitialState};
    use crate::field::shear_fixture;
    use crate::paths::{sample_wiener, TimeGrid};
    use crate::testfn::{Class, Profile, Scalar};
    use crate::transform::{assemble, assemble_with, Mutation};
    use crate::verify::VerifyOptions;

    fn worked() -> GasData {
        GasData::new(InitialState::uniform(2.0, 1.0, 1.0, 1).unwrap(), 2.0).unwrap()
    }

    fn fixture_solution(n: usize, steps: usize, seed: u64, mutation: Mutation) -> EulerSolution {
        let g = BoxGrid::unit_square(n, [Boundary::Periodic, Boundary::Wall]).unwrap();
        let f = shear_fixture(g, 2f64.sqrt(), 2).unwrap();
        let w = sample_wiener(TimeGrid::new(1.0, steps).unwrap(), seed);
        assemble_with(&worked(), &f, &w, mutation).unwrap()
    }

    #[test]
    fn constant_test_function_conserves_mass_exactly() {
        let sol = fixture_solution(8, 64, 1, Mutation::None);
        let one = TestFunction::scalar("one", Scalar::one(), Class::Global);
        let ladder = TauLadder::standard(sol.path().grid());
        let r = residual_continuity(&sol, &one, &ladder, &VerifyConfig::default()).unwrap();
        assert_eq!(r.sup, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn fixture_suite_passes() {
        let sol = fixture_solution(16, 256, 2, Mutation::None);
        let b = Battery::standard(sol.field());
        let rep = run_suite(&sol, &b, &TauLadder::standard(sol.path().grid()), &VerifyConfig::default()).unwrap();
        assert!(rep.passed(), "{:?}", rep.failing());
        assert!(rep.entropy_inequality_passed);
    }

    #[test]
    fn ito_sums_break_momentum_only() {
        let sol = fixture_solution(16, 256, 3, Mutation::None);
        let b = Battery::standard(sol.field());
        let cfg =
            VerifyConfig::default().with_options(VerifyOptions { momentum_sum: SumKind::Ito, ..Default::default() });
        let rep = run_suite(&sol, &b, &TauLadder::standard(sol.path().grid()), &cfg).unwrap();
        assert_eq!(rep.failing(), BTreeSet::from([Equation::Momentum]));
    }

    #[test]
    fn shape_and_sign_preconditions() {
        let sol = fixture_solution(8, 16, 1, Mutation::None);
        let ladder = TauLadder::standard(sol.path().grid());
        let cfg = VerifyConfig::default();
        let s = TestFunction::scalar("one", Scalar::one(), Class::Global);
        assert!(residual_momentum(&sol, &s, &ladder, &cfg).is_err());
        let c = Profile::Cos { k: 2, lo: 0.0, len: 1.0 };
        let signed = TestFunction::scalar("cos", Scalar { x: c, y: Profile::One }, Class::Global);
        assert!(matches!(residual_entropy(&sol, &signed, &ladder, &cfg), Err(Error::TestClass(_))));
        let leaky =
            TestFunction::vector("leak", [Scalar::zero(), Scalar { x: Profile::One, y: Profile::One }], Class::Global);
        assert!(matches!(residual_momentum(&sol, &leaky, &ladder, &cfg), Err(Error::TestClass(_))));
    }

    #[test]
    fn zero_noise_residuals_are_time_linear() {
        let g = BoxGrid::unit_square(16, [Boundary::Periodic, Boundary::Wall]).unwrap();
        let f = shear_fixture(g, 2f64.sqrt(), 2).unwrap();
        let w = SamplePath::constant(TimeGrid::new(1.0, 8).unwrap(), 0.0);
        let sol = assemble(&worked(), &f, &w).unwrap();
        let b = Battery::standard(sol.field());
        let rep = run_suite(&sol, &b, &TauLadder::standard(w.grid()), &VerifyConfig::default()).unwrap();
        for r in &rep.reports {
            let last = *r.residuals.last().unwrap();
            for (t, x) in r.times.iter().zip(&r.residuals) {
                assert!((x - t * last).abs() <= 1e-12 * (1.0 + r.scale), "{}", r.test);
            }
        }
    }
}
