//! Staged construction of oscillating velocity fields with prescribed energy.
//!
//! Stage `k` replaces the field by a pair of localized laminates,
//!
//! ```text
//! psi = eta(x1) F(x2) - G(x1) eta(x2),   F' = f,  G' = g,
//! ```
//!
//! where `f` and `g` are clipped cosines `clip(kappa cos(2 pi lambda s + phase))`
//! scaled by the stage amplitude `c_k`, and `eta` is a smooth cutoff of width
//! `omega / lambda` vanishing on the box boundary. The profiles are capped so
//! that the cutoff-gradient terms `F eta'` never push `|v|` above the target,
//! which keeps the defect `D = target - |v|^2` nonnegative. Amplitudes follow
//! `c_k^2 = c_{k-1}^2 + fill (A^2 - c_{k-1}^2)` with `A^2` half the target,
//! the frequency doubles every stage and the cutoff layers shrink with it.

use serde::{Deserialize, Serialize};

use crate::domain::{BoxGrid, GasData};
use crate::error::{Error, Result};
use crate::field::{FieldTime, VelocityField};
use crate::paths::TimeGrid;
use crate::rng;
use crate::testfn::{Profile, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    /// Periods per box side at the first stage; doubled every stage.
    pub lambda0: u32,
    /// Largest admissible defect ratio between consecutive stages.
    pub ratio_limit: f64,
    /// Fraction of the remaining amplitude gap filled per stage.
    pub fill: f64,
    /// Cutoff width in units of one period.
    pub width_factor: f64,
    /// Lower bound on the cutoff width, in cells.
    pub min_width_cells: f64,
    /// Clipping gain of the cosine profiles.
    pub sharpness: f64,
    /// Generation window `T_gen`.
    pub window: f64,
    /// Time steps of sampled (branch) fields.
    pub time_steps: usize,
    /// Length of the smooth start of branch drift.
    pub drift_ramp: f64,
    /// Phase draws tried per stage before reporting a stall.
    pub phase_attempts: u32,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            lambda0: 4,
            ratio_limit: 0.8,
            fill: 0.5,
            width_factor: 1.0,
            min_width_cells: 2.0,
            sharpness: 16.0,
            window: 1.0,
            time_steps: 256,
            drift_ramp: 0.05,
            phase_attempts: 8,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::Config(format!("generator: {why}")));
        if self.lambda0 == 0 {
            return bad("lambda0 must be positive");
        }
        if !(self.ratio_limit > 0.0 && self.ratio_limit < 1.0) {
            return bad("ratio limit must lie in (0, 1)");
        }
        if !(self.fill > 0.0 && self.fill <= 1.0) {
            return bad("fill must lie in (0, 1]");
        }
        if !(self.width_factor > 0.0 && self.min_width_cells >= 1.0 && self.sharpness >= 1.0) {
            return bad("cutoff and profile parameters must be positive");
        }
        if !(self.window > 0.0) || self.time_steps == 0 || !(self.drift_ramp > 0.0) {
            return bad("time window, steps and ramp must be positive");
        }
        if self.phase_attempts == 0 {
            return bad("at least one phase attempt is required");
        }
        Ok(())
    }

    pub fn lambda(&self, stage: usize) -> u32 {
        self.lambda0 << stage
    }
}

/// Data of one subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PieceData {
    pub rho: f64,
    pub theta: f64,
    pub lambda0: f64,
}

impl PieceData {
    pub fn from_gas(data: &GasData, i: usize) -> Self {
        Self { rho: data.rho(i), theta: data.theta(i), lambda0: data.lambda0 }
    }

    /// `K0 = Lambda0 - rho theta` in two dimensions.
    pub fn kinetic_target(&self) -> f64 {
        self.lambda0 - self.rho * self.theta
    }

    pub fn speed_sq(&self) -> f64 {
        2.0 * self.rho * self.kinetic_target()
    }
}

/// Parameters of one laminate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub lambda: u32,
    pub amplitude: f64,
    pub widths: [f64; 2],
    /// Phase of the axis-0 flow (varies along axis 1) and of the axis-1 flow.
    pub phases: [f64; 2],
    /// Index of the phase draw that met the ratio limit.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub wave: Wave,
    pub defect: f64,
    pub ratio: f64,
    pub residual: f64,
    pub min_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub seed: u64,
    pub branch_time: f64,
    /// Phase drift rates in periods per unit time.
    pub rates: [f64; 2],
    pub defect: f64,
    pub defect_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCertificate {
    pub seed: u64,
    pub speed_sq: f64,
    pub initial_defect: f64,
    pub stages: Vec<StageRecord>,
    /// Largest gap between the kinetic target `K0` and the mean kinetic
    /// density `|v|^2 / (2 rho)` over the window.
    pub defect_tol: f64,
    pub branch: Option<BranchRecord>,
}

impl GeneratorCertificate {
    pub fn defects(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.defect).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        let mut prev = self.initial_defect;
        for s in &self.stages {
            if !(s.defect < prev) {
                return false;
            }
            prev = s.defect;
        }
        true
    }

    pub fn smallest_lambda(&self) -> Option<u32> {
        self.stages.iter().map(|s| s.wave.lambda).min()
    }
}

/// Relaxed state of the construction. The stress `u` is the traceless part
/// of `v (x) v` and `q = |v|^2 / 2`, so `u + q I = v (x) v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsolution {
    pub field: VelocityField,
    pub data: PieceData,
    pub amplitude: f64,
    pub stage: usize,
    pub waves: Vec<Wave>,
    pub defect_norm: f64,
}

impl Subsolution {
    pub fn speed_sq(&self) -> f64 {
        self.data.speed_sq()
    }

    /// `(u11, u12, q)` at every cell of slice 0; `u22 = -u11`.
    pub fn stress(&self) -> Vec<[f64; 3]> {
        let c = self.field.centers(self.field.slice(0));
        (0..c.u.len())
            .map(|k| {
                let (a, b) = (c.u[k], c.v[k]);
                [0.5 * (a * a - b * b), a * b, 0.5 * (a * a + b * b)]
            })
            .collect()
    }

    /// Stationary weak residual `max_phi |int (u + q I) : grad phi - q div phi|`
    /// over interior bumps at three scales.
    pub fn weak_residual(&self) -> f64 {
        stationary_residual(&self.field, 0)
    }
}

pub(crate) fn stationary_residual(field: &VelocityField, slice: usize) -> f64 {
    let g = field.grid();
    let c = field.centers(field.slice(slice));
    let mut worst: f64 = 0.0;
    for frac in [0.375, 0.25, 0.125] {
        let bump = |d: usize| Profile::Bump { center: g.origin[d] + 0.5 * g.lengths[d], radius: frac * g.lengths[d] };
        let s = Scalar { x: bump(0), y: bump(1) };
        for comp in 0..2 {
            let mut acc = 0.0;
            for j in 0..g.cells[1] {
                for i in 0..g.cells[0] {
                    let k = g.cell_index(i, j);
                    let grad = s.gradient(g.cell_center(i, j));
                    let v = [c.u[k], c.v[k]];
                    let half = 0.5 * (v[0] * v[0] + v[1] * v[1]);
                    // (v (x) v - |v|^2/2 I) : grad(phi e_comp)
                    acc += v[comp] * (v[0] * grad[0] + v[1] * grad[1]) - half * grad[comp];
                }
            }
            worst = worst.max((acc * g.cell_area()).abs());
        }
    }
    worst
}

/// Zero field with the full defect `target * |Q_i| * T_gen`.
pub fn init_subsolution(grid: BoxGrid, data: PieceData, params: &GeneratorParams) -> Result<Subsolution> {
    params.validate()?;
    if !(data.rho > 0.0 && data.theta > 0.0) {
        return Err(Error::InvalidData("density and temperature must be positive".into()));
    }
    if !(data.kinetic_target() > 0.0) {
        return Err(Error::InvalidData(format!(
            "nonpositive kinetic target K0 = {} (Lambda0 must exceed rho*theta)",
            data.kinetic_target()
        )));
    }
    let field = VelocityField::single(
        grid,
        FieldTime::Steady { window: params.window },
        vec![vec![0.0; grid.n_nodes()]],
        data.speed_sq(),
    )?;
    let defect_norm = field.defect_norm();
    Ok(Subsolution { field, data, amplitude: 0.0, stage: 0, waves: Vec::new(), defect_norm })
}

fn smoothstep(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z >= 1.0 {
        1.0
    } else {
        z * z * z * (10.0 - 15.0 * z + 6.0 * z * z)
    }
}

/// Cutoff on the `n + 1` nodes of an axis with `n` cells.
fn cutoff(n: usize, h: f64, width: f64) -> Vec<f64> {
    (0..=n).map(|i| smoothstep(i as f64 * h / width) * smoothstep((n - i) as f64 * h / width)).collect()
}

/// Clipped cosine sampled at cell centers, normalized by the largest sample
/// so that coarse sampling (two cells per period) still reaches full amplitude.
fn clipped_cos(n: usize, lambda: u32, phase: f64, kappa: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|j| {
            let s = (j as f64 + 0.5) / n as f64;
            (std::f64::consts::TAU * lambda as f64 * s + phase).cos()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    raw.into_iter().map(|c| (kappa * c / peak).clamp(-1.0, 1.0)).collect()
}

/// Zero-mean primitive on nodes; the last node is pinned to zero.
fn primitive(f: &[f64], h: f64) -> (Vec<f64>, f64) {
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    let mut p = Vec::with_capacity(f.len() + 1);
    let mut acc = 0.0;
    p.push(0.0);
    for &x in f {
        acc += (x - mean) * h;
        p.push(acc);
    }
    *p.last_mut().expect("nonempty") = 0.0;
    (p, mean)
}

/// Stream function of the laminate pair `wave` on `grid`, with profiles capped
/// so that both face-velocity components stay below `cap`.
pub fn laminate_psi(grid: &BoxGrid, cap: f64, wave: &Wave, sharpness: f64) -> Vec<f64> {
    let [nx, ny] = grid.cells;
    let (hx, hy) = (grid.h(0), grid.h(1));
    let ex = cutoff(nx, hx, wave.widths[0]);
    let ey = cutoff(ny, hy, wave.widths[1]);
    let slope = |e: &[f64], h: f64| -> Vec<f64> { e.windows(2).map(|w| (w[1] - w[0]).abs() / h).collect() };
    let (sx, sy) = (slope(&ex, hx), slope(&ey, hy));
    let sig_f = clipped_cos(ny, wave.lambda, wave.phases[0], sharpness);
    let sig_g = clipped_cos(nx, wave.lambda, wave.phases[1], sharpness);

    // bounds on |F|, |G| and on the means removed from f, g
    let mut bound = [0.0f64; 4];
    let build = |sig: &[f64], other_slope: &[f64], other_bound: f64, mean_bound: f64, h: f64| {
        let prof: Vec<f64> = sig
            .iter()
            .zip(other_slope)
            .map(|(&s, &e)| (wave.amplitude.min(cap - other_bound * e) - mean_bound).max(0.0) * s)
            .collect();
        primitive(&prof, h)
    };
    let mut result = None;
    for _ in 0..200 {
        let (f, mf) = build(&sig_f, &sy, bound[1], bound[2], hy);
        let (g, mg) = build(&sig_g, &sx, bound[0], bound[3], hx);
        let actual = [
            f.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            g.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            mf.abs(),
            mg.abs(),
        ];
        if (0..4).all(|k| actual[k] <= bound[k]) {
            result = Some((f, g));
            break;
        }
        for k in 0..4 {
            bound[k] = bound[k].max(actual[k] * (1.0 + 1e-9));
        }
    }
    let (f, g) = result.unwrap_or_else(|| (vec![0.0; ny + 1], vec![0.0; nx + 1]));
    let mut psi = vec![0.0; grid.n_nodes()];
    for j in 0..=ny {
        for i in 0..=nx {
            psi[grid.node_index(i, j)] = f[j] * ex[i] - g[i] * ey[j];
        }
    }
    psi
}

fn stage_wave(sub: &Subsolution, lambda: u32, seed: u64, attempt: u32, params: &GeneratorParams) -> Wave {
    let g = sub.field.grid();
    let a2 = 0.5 * sub.speed_sq();
    let c2 = sub.amplitude * sub.amplitude;
    let amplitude = (c2 + params.fill * (a2 - c2)).sqrt();
    let widths =
        [0, 1].map(|d| (params.width_factor * g.lengths[d] / lambda as f64).max(params.min_width_cells * g.h(d)));
    let mut stream = rng::derive_seed(seed, sub.stage as u64 + 1);
    if attempt > 0 {
        stream = rng::derive_seed(stream, u64::from(attempt));
    }
    let phases = [0, 1].map(|d| std::f64::consts::TAU * rng::uniform(stream, d));
    Wave { lambda, amplitude, widths, phases, attempt }
}

/// One stage: fresh laminate pair at frequency `lambda`, amplitude raised
/// towards the target. Phases are redrawn from derived streams until the
/// defect ratio meets the limit, up to `phase_attempts` draws.
pub fn oscillatory_step(sub: &Subsolution, lambda: u32, seed: u64, params: &GeneratorParams) -> Result<Subsolution> {
    if sub.defect_norm == 0.0 {
        return Ok(sub.clone());
    }
    let grid = *sub.field.grid();
    let cap = (0.5 * sub.speed_sq()).sqrt();
    let mut best = f64::INFINITY;
    for attempt in 0..params.phase_attempts {
        let wave = stage_wave(sub, lambda, seed, attempt, params);
        let psi = laminate_psi(&grid, cap, &wave, params.sharpness);
        let field = VelocityField::single(grid, *sub.field.time(), vec![psi], sub.speed_sq())?;
        let defect_norm = field.defect_norm();
        let ratio = defect_norm / sub.defect_norm;
        if ratio <= params.ratio_limit {
            let mut waves = sub.waves.clone();
            waves.push(wave);
            let (data, stage) = (sub.data, sub.stage + 1);
            return Ok(Subsolution { field, data, amplitude: wave.amplitude, stage, waves, defect_norm });
        }
        best = best.min(ratio);
    }
    Err(Error::Stalled { stage: sub.stage, ratio: best, limit: params.ratio_limit })
}

/// Largest mean kinetic gap over the slices and, for sampled fields, the
/// interval midpoints, where the interpolated stream function loses energy.
fn kinetic_gap(field: &VelocityField, data: &PieceData) -> Result<f64> {
    let slices = (0..field.slice_count()).map(|k| field.mean_defect(k, 0)).fold(0.0, |m: f64, g| m.max(g.abs()));
    let mut worst = slices;
    if let FieldTime::Sampled(g) = field.time() {
        let target = field.speed_sq_targets()[0];
        for k in 0..g.steps() {
            let c = field.centers_at(0.5 * (g.node(k) + g.node(k + 1)))?;
            let n = c.u.len();
            let mean = (0..n).map(|i| target - c.speed_sq(i)).sum::<f64>() / n as f64;
            worst = worst.max(mean.abs());
        }
    }
    Ok(worst / (2.0 * data.rho))
}

/// Run `stages` oscillatory steps from the zero subsolution.
pub fn generate_wild(
    grid: BoxGrid,
    data: PieceData,
    stages: usize,
    seed: u64,
    params: &GeneratorParams,
) -> Result<(VelocityField, GeneratorCertificate)> {
    let (sub, cert) = run_stages(grid, data, stages, seed, params)?;
    Ok((sub.field, cert))
}

fn run_stages(
    grid: BoxGrid,
    data: PieceData,
    stages: usize,
    seed: u64,
    params: &GeneratorParams,
) -> Result<(Subsolution, GeneratorCertificate)> {
    if stages == 0 {
        return Err(Error::Config("at least one generator stage is required".into()));
    }
    let mut sub = init_subsolution(grid, data, params)?;
    let initial_defect = sub.defect_norm;
    let mut records = Vec::with_capacity(stages);
    for k in 0..stages {
        let prev = sub.defect_norm;
        sub = oscillatory_step(&sub, params.lambda(k), seed, params)?;
        records.push(StageRecord {
            stage: k,
            wave: *sub.waves.last().expect("a wave per stage"),
            defect: sub.defect_norm,
            ratio: sub.defect_norm / prev,
            residual: sub.weak_residual(),
            min_defect: sub.field.min_defect(),
        });
    }
    let cert = GeneratorCertificate {
        seed,
        speed_sq: data.speed_sq(),
        initial_defect,
        stages: records,
        defect_tol: kinetic_gap(&sub.field, &data)?,
        branch: None,
    };
    Ok((sub, cert))
}

/// C1 drift start: zero up to `t1`, quadratic over `ramp`, then linear.
fn drift(t: f64, t1: f64, ramp: f64) -> f64 {
    let s = t - t1;
    if s <= 0.0 {
        0.0
    } else if s < ramp {
        0.5 * s * s / ramp
    } else {
        s - 0.5 * ramp
    }
}

fn drift_rates(seed: u64) -> [f64; 2] {
    let stream = rng::derive_seed(seed, 0xB4A2C8);
    [0, 1].map(|d| {
        let speed = 1.0 + 2.0 * rng::uniform(stream, 2 * d);
        if rng::uniform(stream, 2 * d + 1) < 0.5 {
            -speed
        } else {
            speed
        }
    })
}

fn branch_field(
    common: &Subsolution,
    base: &GeneratorCertificate,
    t1: f64,
    seed: u64,
    params: &GeneratorParams,
) -> Result<(VelocityField, GeneratorCertificate)> {
    let time = TimeGrid::new(params.window, params.time_steps)?;
    let grid = *common.field.grid();
    let cap = (0.5 * common.speed_sq()).sqrt();
    let last = *common.waves.last().expect("common stages produce a wave");
    let rates = drift_rates(seed);
    let slices = time
        .nodes()
        .into_iter()
        .map(|t| {
            let d = drift(t, t1, params.drift_ramp);
            if d == 0.0 {
                return common.field.slice(0).to_vec();
            }
            let mut wave = last;
            for (phase, rate) in wave.phases.iter_mut().zip(rates) {
                *phase += std::f64::consts::TAU * rate * d;
            }
            laminate_psi(&grid, cap, &wave, params.sharpness)
        })
        .collect();
    let field = VelocityField::single(grid, FieldTime::Sampled(time), slices, common.speed_sq())?;
    let mut cert = base.clone();
    cert.branch = Some(BranchRecord {
        seed,
        branch_time: t1,
        rates,
        defect: field.defect_norm(),
        defect_tol: kinetic_gap(&field, &common.data)?,
    });
    Ok((field, cert))
}

/// Two fields sharing `stages` common stages that agree bitwise on `[0, t1]`;
/// after `t1` the final laminates drift with seed-dependent rates.
pub fn branch_pair(
    grid: BoxGrid,
    data: PieceData,
    stages: usize,
    t1: f64,
    common_seed: u64,
    seeds: (u64, u64),
    params: &GeneratorParams,
) -> Result<((VelocityField, GeneratorCertificate), (VelocityField, GeneratorCertificate))> {
    if !(t1 > 0.0 && t1 < params.window) {
        return Err(Error::Config(format!("branch time {t1} outside the generation window (0, {})", params.window)));
    }
    let (common, cert) = run_stages(grid, data, stages, common_seed, params)?;
    let a = branch_field(&common, &cert, t1, seeds.0, params)?;
    let b = branch_field(&common, &cert, t1, seeds.1, params)?;
    Ok((a, b))
}

/// One branch per seed, all sharing the common stages.
pub fn branch_family(
    grid: BoxGrid,
    data: PieceData,
    stages: usize,
    t1: f64,
    common_seed: u64,
    seeds: &[u64],
    params: &GeneratorParams,
) -> Result<Vec<(VelocityField, GeneratorCertificate)>> {
    if !(t1 > 0.0 && t1 < params.window) {
        return Err(Error::Config(format!("branch time {t1} outside the generation window (0, {})", params.window)));
    }
    let (common, cert) = run_stages(grid, data, stages, common_seed, params)?;
    seeds.iter().map(|&s| branch_field(&common, &cert, t1, s, params)).collect()
}
