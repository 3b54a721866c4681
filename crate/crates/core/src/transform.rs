//! Assembly of `(rho, m, E, theta, s)` from a velocity field and a noise path.
//!
//! `w(t) = v(tau(t))` with the random clock `tau`, `m = w exp(-W/2)`,
//! `theta = theta0 exp(-W)`, `E = |m|^2 / (2 rho) + c_v rho theta`,
//! `s = c_v log theta - log rho`, `p = rho theta`, and `rho = rho0`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::GasData;
use crate::error::{Error, Result};
use crate::field::{FieldTime, VelocityField};
use crate::paths::{build_clock, RandomClock, SamplePath};

/// Deliberate defects for negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// `m = w exp(+W/2)`.
    MomentumScaling,
    /// Clock from the full-path mean rate; not adapted.
    BrokenClock,
}

/// `theta(t, x) = theta0(x) exp(-W(t))`.
#[derive(Debug, Clone, Copy)]
pub struct Temperature<'a> {
    data: &'a GasData,
    w: &'a SamplePath,
}

pub fn temperature<'a>(data: &'a GasData, w: &'a SamplePath) -> Temperature<'a> {
    Temperature { data, w }
}

impl Temperature<'_> {
    pub fn at_node(&self, region: usize, n: usize) -> f64 {
        self.data.theta(region) * (-self.w.value(n)).exp()
    }

    pub fn at(&self, region: usize, t: f64) -> f64 {
        self.data.theta(region) * (-self.w.at(t)).exp()
    }
}

/// `s = c_v log theta - log rho`.
#[derive(Debug, Clone, Copy)]
pub struct Entropy<'a> {
    data: &'a GasData,
    theta: Temperature<'a>,
}

pub fn entropy<'a>(data: &'a GasData, theta: Temperature<'a>) -> Entropy<'a> {
    Entropy { data, theta }
}

impl Entropy<'_> {
    pub fn at_node(&self, region: usize, n: usize) -> f64 {
        self.data.cv() * self.theta.at_node(region, n).ln() - self.data.rho(region).ln()
    }

    pub fn at(&self, region: usize, t: f64) -> f64 {
        self.data.cv() * self.theta.at(region, t).ln() - self.data.rho(region).ln()
    }
}

/// Cell values of every field at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub rho: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub energy: Vec<f64>,
    pub theta: Vec<f64>,
    pub entropy: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl Snapshot {
    pub const FIELDS: [&'static str; 7] = ["rho", "m1", "m2", "E", "theta", "s", "p"];

    pub fn field(&self, name: &str) -> Option<&[f64]> {
        Some(match name {
            "rho" => &self.rho,
            "m1" => &self.m1,
            "m2" => &self.m2,
            "E" => &self.energy,
            "theta" => &self.theta,
            "s" => &self.entropy,
            "p" => &self.pressure,
            _ => return None,
        })
    }

    /// First field and cell whose bits differ from `other`.
    pub fn first_difference(&self, other: &Snapshot) -> Option<(&'static str, usize)> {
        for name in Self::FIELDS {
            let (a, b) = (self.field(name)?, other.field(name)?);
            if let Some(c) = a.iter().zip(b).position(|(x, y)| x.to_bits() != y.to_bits()) {
                return Some((name, c));
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct EulerSolution {
    data: GasData,
    field: VelocityField,
    w: SamplePath,
    clock: RandomClock,
    mutation: Mutation,
    cell_rho: Vec<f64>,
    cell_theta0: Vec<f64>,
}

pub fn assemble(data: &GasData, field: &VelocityField, w: &SamplePath) -> Result<EulerSolution> {
    assemble_with(data, field, w, Mutation::None)
}

pub fn assemble_with(
    data: &GasData,
    field: &VelocityField,
    w: &SamplePath,
    mutation: Mutation,
) -> Result<EulerSolution> {
    if data.count() != field.speed_sq_targets().len() {
        return Err(Error::Mismatch(format!(
            "{} data values for a field with {} subdomains",
            data.count(),
            field.speed_sq_targets().len()
        )));
    }
    let clock = match mutation {
        Mutation::BrokenClock => RandomClock::broken(w),
        _ => build_clock(w),
    };
    if let FieldTime::Sampled(g) = field.time() {
        if clock.last() > g.horizon() {
            return Err(Error::ClockOverrun { tau: clock.last(), window: g.horizon() });
        }
    }
    let cell_rho = field.region().iter().map(|&r| data.rho(r)).collect();
    let cell_theta0 = field.region().iter().map(|&r| data.theta(r)).collect();
    Ok(EulerSolution { data: data.clone(), field: field.clone(), w: w.clone(), clock, mutation, cell_rho, cell_theta0 })
}

impl EulerSolution {
    pub fn data(&self) -> &GasData {
        &self.data
    }

    pub fn field(&self) -> &VelocityField {
        &self.field
    }

    pub fn path(&self) -> &SamplePath {
        &self.w
    }

    pub fn clock(&self) -> &RandomClock {
        &self.clock
    }

    pub fn mutation(&self) -> Mutation {
        self.mutation
    }

    pub fn cell_rho(&self) -> &[f64] {
        &self.cell_rho
    }

    pub fn temperature(&self) -> Temperature<'_> {
        temperature(&self.data, &self.w)
    }

    pub fn entropy(&self) -> Entropy<'_> {
        entropy(&self.data, self.temperature())
    }

    fn momentum_factor(&self, w: f64) -> f64 {
        match self.mutation {
            Mutation::MomentumScaling => (0.5 * w).exp(),
            _ => (-0.5 * w).exp(),
        }
    }

    fn build(&self, time: f64, w: f64, tau: f64) -> Result<Snapshot> {
        let vel = self.field.centers_at(tau)?;
        let a = self.momentum_factor(w);
        let cv = self.data.cv();
        let n = self.cell_rho.len();
        let mut s = Snapshot {
            time,
            rho: self.cell_rho.clone(),
            m1: Vec::with_capacity(n),
            m2: Vec::with_capacity(n),
            energy: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            entropy: Vec::with_capacity(n),
            pressure: Vec::with_capacity(n),
        };
        let decay = (-w).exp();
        for c in 0..n {
            let rho = self.cell_rho[c];
            let (m1, m2) = (vel.u[c] * a, vel.v[c] * a);
            let theta = self.cell_theta0[c] * decay;
            s.m1.push(m1);
            s.m2.push(m2);
            s.theta.push(theta);
            s.energy.push(0.5 * (m1 * m1 + m2 * m2) / rho + cv * rho * theta);
            s.entropy.push(cv * theta.ln() - rho.ln());
            s.pressure.push(rho * theta);
        }
        Ok(s)
    }

    /// All fields at node `n` of the noise grid.
    pub fn snapshot(&self, n: usize) -> Result<Snapshot> {
        self.build(self.w.grid().node(n), self.w.value(n), self.clock.value(n))
    }

    /// All fields at time `t`, interpolating `W` and `tau` linearly between nodes.
    pub fn snapshot_at(&self, t: f64) -> Result<Snapshot> {
        self.build(t, self.w.at(t), self.clock.at(t))
    }

    /// Cell-center momentum at node `n`.
    pub fn momentum(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.snapshot(n)?;
        Ok((s.m1, s.m2))
    }

    pub fn write_snapshot_csv<W: Write>(&self, n: usize, mut out: W) -> Result<()> {
        let s = self.snapshot(n)?;
        let g = self.field.grid();
        writeln!(out, "# t={} W={} tau={}", s.time, self.w.value(n), self.clock.value(n))?;
        writeln!(out, "i,j,x,y,rho,m1,m2,E,theta,s,p")?;
        for j in 0..g.cells[1] {
            for i in 0..g.cells[0] {
                let c = g.cell_index(i, j);
                let [x, y] = g.cell_center(i, j);
                writeln!(
                    out,
                    "{i},{j},{x},{y},{},{},{},{},{},{},{}",
                    s.rho[c], s.m1[c], s.m2[c], s.energy[c], s.theta[c], s.entropy[c], s.pressure[c]
                )?;
            }
        }
        Ok(())
    }
}

/// Space integrals per time node and the closed-form energy prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub entropy: Vec<f64>,
    pub predicted_energy: Vec<f64>,
}

impl EnergyLedger {
    /// `max_t |int E - E_pred|`.
    pub fn energy_gap(&self) -> f64 {
        self.energy.iter().zip(&self.predicted_energy).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `max_t |int rho - int rho(0)|`.
    pub fn mass_drift(&self) -> f64 {
        self.mass.iter().map(|m| (m - self.mass[0]).abs()).fold(0.0, f64::max)
    }
}

pub fn ledger(sol: &EulerSolution) -> Result<EnergyLedger> {
    let g = sol.field.grid();
    let area = g.cell_area();
    let dim = 2;
    let counts = {
        let mut c = vec![0usize; sol.data.count()];
        for &r in sol.field.region() {
            c[r] += 1;
        }
        c
    };
    let base: f64 = (0..sol.data.count()).map(|i| counts[i] as f64 * area * sol.data.energy_density(i, dim)).sum();
    let steps = sol.w.grid().len();
    let mut out = EnergyLedger {
        times: Vec::with_capacity(steps),
        mass: Vec::with_capacity(steps),
        energy: Vec::with_capacity(steps),
        entropy: Vec::with_capacity(steps),
        predicted_energy: Vec::with_capacity(steps),
    };
    for n in 0..steps {
        let s = sol.snapshot(n)?;
        out.times.push(s.time);
        out.mass.push(s.rho.iter().sum::<f64>() * area);
        out.energy.push(s.energy.iter().sum::<f64>() * area);
        out.entropy.push(s.rho.iter().zip(&s.entropy).map(|(r, e)| r * e).sum::<f64>() * area);
        out.predicted_energy.push((-sol.w.value(n)).exp() * base);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Boundary, BoxGrid, InitialState};
    use crate::field::shear_fixture;
    use crate::paths::{sample_wiener, TimeGrid};

    fn worked() -> GasData {
        GasData::new(InitialState::uniform(2.0, 1.0, 1.0, 1).unwrap(), 2.0).unwrap()
    }

    fn fixture(n: usize) -> VelocityField {
        let g = BoxGrid::unit_square(n, [Boundary::Periodic, Boundary::Wall]).unwrap();
        shear_fixture(g, 2f64.sqrt(), 2).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let w = SamplePath::constant(g, 0.0);
        let f = fixture(8);
        let s = assemble(&worked(), &f, &w).unwrap();
        let v = f.centers_at(0.0).unwrap();
        for n in [0, 5, 10] {
            let snap = s.snapshot(n).unwrap();
            assert_eq!(snap.m1, v.u);
            assert!(snap.theta.iter().all(|&t| t == 1.0));
            assert!(snap.energy.iter().all(|&e| (e - 2.0).abs() < 1e-14));
        }
    }

    #[test]
    fn temperature_and_entropy_values() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let w = SamplePath::constant(g, std::f64::consts::LN_2);
        let d = worked();
        let th = temperature(&d, &w);
        assert!((th.at_node(0, 1) - 0.5).abs() < 1e-15);
        let w1 = SamplePath::from_values(g, vec![0.0, 0.5, 1.0]).unwrap();
        let e = entropy(&d, temperature(&d, &w1));
        assert_eq!(e.at_node(0, 0), 0.0);
        assert!((e.at_node(0, 2) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixture_speed_scales_with_noise() {
        let w = sample_wiener(TimeGrid::new(1.0, 64).unwrap(), 3);
        let s = assemble(&worked(), &fixture(8), &w).unwrap();
        for n in [0, 17, 64] {
            let snap = s.snapshot(n).unwrap();
            let want = 2.0 * (-w.value(n)).exp();
            for c in 0..64 {
                let m2 = snap.m1[c].powi(2) + snap.m2[c].powi(2);
                assert!((m2 - want).abs() <= 1e-13 * want);
            }
        }
    }

    #[test]
    fn worked_example_energy_closed_form() {
        let w = sample_wiener(TimeGrid::new(1.0, 128).unwrap(), 8);
        let s = assemble(&worked(), &fixture(16), &w).unwrap();
        let l = ledger(&s).unwrap();
        for n in 0..=128 {
            assert!((l.energy[n] * w.value(n).exp() - 2.0).abs() < 1e-12);
        }
        assert!(l.energy_gap() < 1e-12);
        assert_eq!(l.mass_drift(), 0.0);
    }

    #[test]
    fn initial_momentum_is_initial_velocity() {
        let w = sample_wiener(TimeGrid::new(1.0, 16).unwrap(), 1);
        let f = fixture(8);
        let s = assemble(&worked(), &f, &w).unwrap();
        let (m1, m2) = s.momentum(0).unwrap();
        let v = f.centers_at(0.0).unwrap();
        assert_eq!((m1, m2), (v.u, v.v));
    }

    #[test]
    fn entropy_shift_is_uniform() {
        let w = sample_wiener(TimeGrid::new(1.0, 32).unwrap(), 2);
        let s = assemble(&worked(), &fixture(8), &w).unwrap();
        let s0 = s.snapshot(0).unwrap();
        let sn = s.snapshot(20).unwrap();
        for c in 0..64 {
            assert!((sn.entropy[c] - s0.entropy[c] + w.value(20)).abs() < 1e-14);
        }
    }

    #[test]
    fn clock_overrun_is_rejected() {
        use crate::generator::{branch_pair, GeneratorParams, PieceData};
        let p = GeneratorParams { window: 0.5, time_steps: 8, ..Default::default() };
        let g = BoxGrid::unit_square(16, [Boundary::Wall, Boundary::Wall]).unwrap();
        let d = PieceData { rho: 1.0, theta: 1.0, lambda0: 2.0 };
        let ((f, _), _) = branch_pair(g, d, 1, 0.1, 1, (1, 2), &p).unwrap();
        let w = SamplePath::constant(TimeGrid::new(1.0, 10).unwrap(), 0.0);
        assert!(matches!(assemble(&worked(), &f, &w), Err(Error::ClockOverrun { .. })));
    }

    #[test]
    fn momentum_scaling_mutation_changes_momentum() {
        let w = SamplePath::constant(TimeGrid::new(1.0, 4).unwrap(), 1.0);
        let f = fixture(4);
        let good = assemble(&worked(), &f, &w).unwrap().snapshot(2).unwrap();
        let bad = assemble_with(&worked(), &f, &w, Mutation::MomentumScaling).unwrap().snapshot(2).unwrap();
        assert!((bad.m1[0] / good.m1[0] - 1f64.exp()).abs() < 1e-14);
    }
}
