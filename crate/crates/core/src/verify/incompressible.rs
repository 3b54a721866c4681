//! Zero-flux and momentum identities of the deterministic incompressible field,
//! per subdomain and globally, plus the kinetic-energy gap.

use serde::{Deserialize, Serialize};

use super::suite::{prepare, Prepared};
use super::{grid_params, Battery, Equation, GridParams, ResidualReport, VerifyConfig};
use crate::domain::GasData;
use crate::error::{Error, Result};
use crate::field::{CellVelocity, FieldTime, VelocityField};
use crate::testfn::{Shape, TimeProfile};

/// Per-subdomain summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceReport {
    pub region: usize,
    /// Largest `|int int_{Q_i} chi v . grad phi|` over scalar tests.
    pub divergence: f64,
    /// Largest momentum residual restricted to `Q_i` over vector tests.
    pub momentum: f64,
    /// `max_t |mean_{Q_i} |v|^2 / (2 rho0) - K0|`.
    pub kinetic_gap_mean: f64,
    /// `max_{t, x in Q_i} ||v|^2 / (2 rho0) - K0|`.
    pub kinetic_gap_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompressibleReport {
    pub grid: GridParams,
    pub battery_size: usize,
    /// Global residual per test function; per-piece divergence residuals are
    /// included with the piece index in the test name.
    pub reports: Vec<ResidualReport>,
    pub pieces: Vec<PieceReport>,
    /// `|global| <= sum_i |piece_i| + tol` for every test.
    pub additivity: bool,
    pub kinetic_passed: bool,
    pub passed: bool,
}

impl IncompressibleReport {
    pub fn sup(&self, eq: Equation) -> f64 {
        self.reports.iter().filter(|r| r.equation == eq).map(|r| r.sup).fold(0.0, f64::max)
    }

    pub fn max_relative(&self, eq: Equation) -> f64 {
        self.reports.iter().filter(|r| r.equation == eq).map(|r| r.relative()).fold(0.0, f64::max)
    }
}

/// Spatial integrals of one test at one time, split by region:
/// `[signed, abs]` for the density part and the flux part.
#[derive(Clone, Copy, Default)]
struct Parts {
    density: f64,
    density_abs: f64,
    flux: f64,
    flux_abs: f64,
}

fn integrals(
    vel: &CellVelocity,
    p: &Prepared,
    region: &[usize],
    rho: &[f64],
    pressure: &[f64],
    pieces: usize,
) -> Vec<Parts> {
    let mut out = vec![Parts::default(); pieces];
    match p {
        Prepared::Scalar { cells, grad, .. } => {
            for (&c, g) in cells.iter().zip(grad) {
                let (u, v) = (vel.u[c], vel.v[c]);
                let o = &mut out[region[c]];
                o.flux += u * g[0] + v * g[1];
                o.flux_abs += u.hypot(v) * g[0].hypot(g[1]);
            }
        }
        Prepared::Vector { cells, phi, grad } => {
            for ((&c, f), g) in cells.iter().zip(phi).zip(grad) {
                let r = region[c];
                let m = [vel.u[c], vel.v[c]];
                let mut conv = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        conv += m[a] * m[b] * g[a][b];
                    }
                }
                let div = g[0][0] + g[1][1];
                let norm_g = (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt();
                let m2 = m[0] * m[0] + m[1] * m[1];
                let o = &mut out[r];
                o.density += m[0] * f[0] + m[1] * f[1];
                o.density_abs += m2.sqrt() * f[0].hypot(f[1]);
                o.flux += conv / rho[r] + pressure[r] * div;
                o.flux_abs += m2 / rho[r] * norm_g + pressure[r] * div.abs();
            }
        }
    }
    out
}

/// Time-integrated residual and scale for one test in one piece.
///
/// Scalar tests: `int chi D dt`. Vector tests:
/// `int chi' V dt + int chi F dt + chi(0) V(0)`.
struct Accum {
    value: f64,
    density_max: f64,
    flux_max: f64,
}

fn time_integral(samples: &[(f64, f64, Parts)], time: &TimeProfile, window: f64, steady: bool) -> Accum {
    let density_max = samples.iter().map(|s| s.2.density_abs).fold(0.0, f64::max);
    let flux_max = samples.iter().map(|s| s.2.flux_abs).fold(0.0, f64::max);
    if steady {
        // chi = (1 - t/T)^2 integrates to T/3 and chi' to -1, exactly.
        let p = samples[0].2;
        let value = window / 3.0 * p.flux - p.density + time.value(0.0) * p.density;
        return Accum { value, density_max, flux_max };
    }
    let mut value = time.value(0.0) * samples[0].2.density;
    // Simpson on each interval: samples are (t, weight, parts) at t0, mid, t1, mid, ...
    for k in (0..samples.len() - 1).step_by(2) {
        let (a, m, b) = (&samples[k], &samples[k + 1], &samples[k + 2]);
        let h = b.0 - a.0;
        let f = |s: &(f64, f64, Parts)| time.derivative(s.0) * s.2.density + time.value(s.0) * s.2.flux;
        value += h / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    }
    Accum { value, density_max, flux_max }
}

/// Residuals of the incompressible system for `v` with data `data`.
pub fn residual_incompressible(
    v: &VelocityField,
    data: &GasData,
    battery: &Battery,
    cfg: &VerifyConfig,
) -> Result<IncompressibleReport> {
    cfg.tolerance.validate()?;
    if battery.grid != *v.grid() {
        return Err(Error::Mismatch("battery built for a different grid".into()));
    }
    let pieces = v.speed_sq_targets().len();
    if data.count() != pieces {
        return Err(Error::Mismatch(format!("{} data values for {pieces} subdomains", data.count())));
    }
    battery.validate()?;
    let window = v.time().window();
    let chi = TimeProfile::Taper { horizon: window };
    let (times, dt, steady): (Vec<f64>, f64, bool) = match v.time() {
        FieldTime::Steady { .. } => (vec![0.0], 0.0, true),
        FieldTime::Sampled(g) => {
            let mut t = Vec::with_capacity(2 * g.steps() + 1);
            for k in 0..g.steps() {
                t.push(g.node(k));
                t.push(0.5 * (g.node(k) + g.node(k + 1)));
            }
            t.push(g.horizon());
            (t, g.dt(), false)
        }
    };
    let kinetic: Vec<f64> = (0..pieces).map(|i| data.kinetic_target(i, 2)).collect();
    let floor = kinetic.iter().copied().fold(f64::INFINITY, f64::min);
    let grid = grid_params(v, dt, &cfg.bound, floor);
    let rho: Vec<f64> = (0..pieces).map(|i| data.rho(i)).collect();
    let pressure: Vec<f64> = (0..pieces).map(|i| data.rho(i) * data.theta(i)).collect();
    let area = v.grid().cell_area();
    let prepared: Vec<Prepared> = battery.functions.iter().map(|f| prepare(f, &battery.grid)).collect();

    let mut table: Vec<Vec<Vec<(f64, f64, Parts)>>> =
        vec![vec![Vec::with_capacity(times.len()); pieces]; prepared.len()];
    let mut gap_mean = vec![0.0f64; pieces];
    let mut gap_max = vec![0.0f64; pieces];
    for &t in &times {
        let vel = v.centers_at(t)?;
        let mut sums = vec![0.0; pieces];
        let mut counts = vec![0usize; pieces];
        for (c, &r) in v.region().iter().enumerate() {
            let k = vel.speed_sq(c) / (2.0 * rho[r]) - kinetic[r];
            sums[r] += k;
            counts[r] += 1;
            gap_max[r] = gap_max[r].max(k.abs());
        }
        for r in 0..pieces {
            gap_mean[r] = gap_mean[r].max((sums[r] / counts[r].max(1) as f64).abs());
        }
        for (ti, p) in prepared.iter().enumerate() {
            for (r, mut parts) in integrals(&vel, p, v.region(), &rho, &pressure, pieces).into_iter().enumerate() {
                parts.density *= area;
                parts.density_abs *= area;
                parts.flux *= area;
                parts.flux_abs *= area;
                table[ti][r].push((t, 0.0, parts));
            }
        }
    }

    let mut reports = Vec::new();
    let mut piece_div = vec![0.0f64; pieces];
    let mut piece_mom = vec![0.0f64; pieces];
    let mut additivity = true;
    for (ti, tf) in battery.functions.iter().enumerate() {
        let eq = match tf.shape {
            Shape::Scalar(_) => Equation::Divergence,
            Shape::Vector(_) => Equation::IncompressibleMomentum,
        };
        let per: Vec<Accum> = (0..pieces).map(|r| time_integral(&table[ti][r], &chi, window, steady)).collect();
        let global: f64 = per.iter().map(|a| a.value).sum();
        let scale_of = |a: &Accum| window * a.flux_max + a.density_max;
        let global_scale: f64 = per.iter().map(scale_of).sum();
        let quad = tf.quadrature_defect(v.grid());
        let rel = cfg.tolerance.quadrature(&grid, quad);
        let tol = rel * global_scale;
        let sum_abs: f64 = per.iter().map(|a| a.value.abs()).sum();
        additivity &= global.abs() <= sum_abs + tol;
        let mk = |test: String, value: f64, scale: f64| {
            let tolerance = rel * scale;
            ResidualReport {
                equation: eq,
                test,
                times: vec![window],
                residuals: vec![value.abs()],
                sup: value.abs(),
                scale,
                signed_scale: scale,
                quadrature_defect: quad,
                tolerance,
                grid,
                seed: None,
                battery_size: battery.len(),
                passed: value.abs() <= tolerance,
            }
        };
        reports.push(mk(tf.name.clone(), global, global_scale));
        for (r, a) in per.iter().enumerate() {
            match eq {
                Equation::Divergence => {
                    piece_div[r] = piece_div[r].max(a.value.abs());
                    if pieces > 1 {
                        reports.push(mk(format!("{}@q{r}", tf.name), a.value, scale_of(a)));
                    }
                }
                _ => piece_mom[r] = piece_mom[r].max(a.value.abs()),
            }
        }
    }
    let piece_reports: Vec<PieceReport> = (0..pieces)
        .map(|r| PieceReport {
            region: r,
            divergence: piece_div[r],
            momentum: piece_mom[r],
            kinetic_gap_mean: gap_mean[r],
            kinetic_gap_max: gap_max[r],
        })
        .collect();
    let kinetic_passed = piece_reports
        .iter()
        .all(|p| p.kinetic_gap_mean <= cfg.bound.defect_tol + cfg.tolerance.floor.max(1e-12) * floor);
    let passed = reports.iter().all(|r| r.passed) && additivity && kinetic_passed;
    Ok(IncompressibleReport {
        grid,
        battery_size: battery.len(),
        reports,
        pieces: piece_reports,
        additivity,
        kinetic_passed,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Boundary, BoxGrid, InitialState};
    use crate::field::shear_fixture;
    use crate::generator::{branch_pair, generate_wild, GeneratorParams, PieceData};
    use crate::verify::CertificateBound;

    fn worked() -> GasData {
        GasData::new(InitialState::uniform(2.0, 1.0, 1.0, 1).unwrap(), 2.0).unwrap()
    }

    #[test]
    fn fixture_is_an_exact_stationary_solution() {
        let g = BoxGrid::unit_square(32, [Boundary::Periodic, Boundary::Wall]).unwrap();
        let f = shear_fixture(g, 2f64.sqrt(), 2).unwrap();
        let rep = residual_incompressible(&f, &worked(), &Battery::standard(&f), &VerifyConfig::default()).unwrap();
        assert!(rep.passed, "{rep:?}");
        for r in rep.reports.iter().filter(|r| r.equation == Equation::Divergence) {
            assert!(r.relative() <= r.quadrature_defect + 1e-12, "{r:?}");
        }
        assert!(rep.pieces[0].kinetic_gap_max < 1e-12);
    }

    #[test]
    fn generator_field_passes_with_its_certificate() {
        let g = BoxGrid::unit_square(32, [Boundary::Wall, Boundary::Wall]).unwrap();
        let d = PieceData { rho: 1.0, theta: 1.0, lambda0: 2.0 };
        let (f, cert) = generate_wild(g, d, 3, 4, &GeneratorParams::default()).unwrap();
        let cfg = VerifyConfig::default().with_bound(CertificateBound::from_certificate(&cert));
        let rep = residual_incompressible(&f, &worked(), &Battery::standard(&f), &cfg).unwrap();
        assert!(rep.passed, "{rep:#?}");
        assert!(rep.max_relative(Equation::Divergence) < 1e-2);
    }

    #[test]
    fn sampled_branch_field_is_checked_in_time() {
        let g = BoxGrid::unit_square(32, [Boundary::Wall, Boundary::Wall]).unwrap();
        let d = PieceData { rho: 1.0, theta: 1.0, lambda0: 2.0 };
        let p = GeneratorParams { time_steps: 16, ..Default::default() };
        let ((a, ca), _) = branch_pair(g, d, 2, 0.25, 3, (1, 2), &p).unwrap();
        let cfg = VerifyConfig::default().with_bound(CertificateBound::from_certificate(&ca));
        let rep = residual_incompressible(&a, &worked(), &Battery::standard(&a), &cfg).unwrap();
        assert!(rep.additivity);
        assert!(rep.passed, "{rep:#?}");
    }
}
