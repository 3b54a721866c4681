//! The five subcommands. Each returns the process exit code on success.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stochastic_euler::domain::GasData;
use stochastic_euler::field::{paste, shear_fixture, VelocityField};
use stochastic_euler::generator::{branch_family, generate_wild, GeneratorCertificate, GeneratorParams, PieceData};
use stochastic_euler::paths::{build_clock, sample_wiener, SamplePath, TimeGrid};
use stochastic_euler::rng::derive_seed;
use stochastic_euler::transform::{assemble, assemble_with, ledger, EulerSolution, Mutation};
use stochastic_euler::verify::{
    causality_check, fitted_order, nonuniqueness_certificate, observed_orders, residual_incompressible, run_suite,
    Battery, CausalityReport, CertificateBound, Equation, IncompressibleReport, ResidualReport, SuiteReport, SumKind,
    TauLadder, VerifyConfig,
};

use crate::artifacts::{load_generated, read_json, Manifest, Resolved, Writer, CERTIFICATES, FIELD, MANIFEST};
use crate::config::{FieldMode, RunConfig};
use crate::error::{CliError, CliResult, EXIT_CERTIFICATE, EXIT_IO, EXIT_PASS, EXIT_RESIDUAL};

/// Negative controls selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    #[default]
    None,
    /// Momentum scaled by exp(+W/2) instead of exp(-W/2).
    MomentumScaling,
    /// Momentum residual without the 1/2 drift term.
    DropDrift,
    /// Ito instead of Stratonovich sums in the momentum residual.
    Ito,
    /// Clock built from the whole noise path.
    BrokenClock,
}

impl Control {
    fn mutation(self) -> Mutation {
        match self {
            Control::MomentumScaling => Mutation::MomentumScaling,
            Control::BrokenClock => Mutation::BrokenClock,
            _ => Mutation::None,
        }
    }

    fn verify_config(self, config: &RunConfig, bound: CertificateBound) -> VerifyConfig {
        let mut options = config.verify.options;
        match self {
            Control::DropDrift => options.momentum_drift = 0.0,
            Control::Ito => options.momentum_sum = SumKind::Ito,
            _ => {}
        }
        VerifyConfig { tolerance: config.verify.tolerance, options, bound }
    }

    fn label(self) -> Option<String> {
        (self != Control::None).then(|| serde_json::to_value(self).expect("serializes").as_str().unwrap_or("").into())
    }
}

fn resolved(data: &GasData, window: Option<f64>, control: Control) -> Resolved {
    Resolved { lambda0: data.lambda0, state: data.state.clone(), window, mutation: control.label() }
}

/// Field and generator certificates for `config`, computed in memory.
pub fn build_field(config: &RunConfig, data: &GasData) -> CliResult<(VelocityField, Vec<GeneratorCertificate>)> {
    config.validate()?;
    match config.field.mode {
        FieldMode::Fixture => {
            let speed = data.speed_sq(0, 2).sqrt();
            Ok((shear_fixture(config.global_grid()?, speed, config.field.stripes)?, Vec::new()))
        }
        FieldMode::Generator => {
            let domain = config.domain()?;
            let mut pieces = Vec::new();
            let mut certs = Vec::new();
            for i in 0..domain.subdomains().len() {
                let grid = domain.subgrid(i, config.grid.cells)?;
                let seed = derive_seed(config.field.seed, i as u64);
                let (f, c) = generate_wild(
                    grid,
                    PieceData::from_gas(data, i),
                    config.field.stages,
                    seed,
                    &config.field.generator,
                )?;
                pieces.push(f);
                certs.push(c);
            }
            Ok((paste(&domain, &pieces)?, certs))
        }
    }
}

fn bound_of(certs: &[GeneratorCertificate]) -> CertificateBound {
    let bounds: Vec<CertificateBound> = certs.iter().map(CertificateBound::from_certificate).collect();
    CertificateBound::merge(&bounds)
}

pub fn generate(config: &RunConfig, out: &Path) -> CliResult<i32> {
    let data = config.gas_data()?;
    let (field, certs) = build_field(config, &data)?;
    let mut w = Writer::new(out, Manifest::new("generate", config, resolved(&data, None, Control::None)))?;
    w.render(FIELD, |buf| Ok(field.write_csv(buf)?))?;
    w.json(CERTIFICATES, &certs)?;
    let m = w.finish()?;
    println!(
        "generate: {} cells, {} subdomain(s), config {}",
        field.grid().n_cells(),
        certs.len().max(1),
        &m.config_hash[..12]
    );
    for (i, c) in certs.iter().enumerate() {
        let ratios: Vec<String> = c.stages.iter().map(|s| format!("{:.3}", s.ratio)).collect();
        println!("  subdomain {i}: defect ratios [{}], defect_tol {:.3e}", ratios.join(", "), c.defect_tol);
    }
    Ok(EXIT_PASS)
}

fn noise(config: &RunConfig, seed: u64) -> CliResult<SamplePath> {
    Ok(sample_wiener(config.time_grid()?, seed))
}

pub fn assemble_cmd(config: &RunConfig, out: &Path, control: Control) -> CliResult<i32> {
    let data = config.gas_data()?;
    let gen = load_generated(out, config)?;
    let mut m = Manifest::new("assemble", config, resolved(&data, None, control));
    m.artifacts.insert(format!("../{CERTIFICATES}"), gen.manifest.artifacts[CERTIFICATES].clone());
    let mut w = Writer::new(&out.join("assemble"), m)?;
    for &seed in &config.noise.seeds {
        let path = noise(config, seed)?;
        let sol = assemble_with(&data, &gen.field, &path, control.mutation())?;
        let dir = format!("seed-{seed}");
        w.render(&format!("{dir}/path.csv"), |buf| Ok(path.write_csv(buf)?))?;
        w.json(&format!("{dir}/ledger.json"), &ledger(&sol)?)?;
        let grid = path.grid();
        for &t in &config.noise.snapshots {
            let n = ((t / grid.dt()).round() as usize).min(grid.steps());
            w.render(&format!("{dir}/snapshot-{n:06}.csv"), |buf| Ok(sol.write_snapshot_csv(n, buf)?))?;
        }
    }
    let m = w.finish()?;
    println!("assemble: {} seed(s), {} file(s)", config.noise.seeds.len(), m.artifacts.len() - 1);
    Ok(EXIT_PASS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub cells: [usize; 2],
    pub steps: usize,
    pub max_sup: Vec<(Equation, f64)>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub rungs: Vec<RungReport>,
    /// Per equation: observed orders against dt between consecutive rungs and the fitted order.
    pub temporal: Vec<(Equation, Vec<f64>, f64)>,
    pub spatial: Vec<(Equation, Vec<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyBundle {
    pub config_hash: String,
    pub mutation: Option<String>,
    pub suites: Vec<SuiteReport>,
    pub incompressible: IncompressibleReport,
    pub causality: Vec<CausalityReport>,
    pub ladder: Option<Ladder>,
    pub failing: BTreeSet<Equation>,
    pub passed: bool,
}

fn suite_for(sol: &EulerSolution, config: &RunConfig, vcfg: &VerifyConfig) -> CliResult<SuiteReport> {
    let battery = Battery::standard(sol.field());
    let ladder = TauLadder::uniform(sol.path().grid(), config.verify.checkpoints)?;
    Ok(run_suite(sol, &battery, &ladder, vcfg)?)
}

/// Regenerate at `cells * 2^k`, `steps * 4^k` and verify one noise seed whose
/// coarse paths are subsampled from the finest.
fn refine(config: &RunConfig, rungs: usize, control: Control) -> CliResult<Ladder> {
    let seed = config.noise.seeds[0];
    let scale = |k: usize| (1usize << k, 1usize << (2 * k));
    let finest = config.grid.steps * scale(rungs - 1).1;
    let fine = sample_wiener(TimeGrid::new(config.grid.horizon, finest)?, seed);
    let mut reports = Vec::new();
    for k in 0..rungs {
        let (c, s) = scale(k);
        let mut cfg = config.clone();
        cfg.grid.cells = [config.grid.cells[0] * c, config.grid.cells[1] * c];
        cfg.grid.steps = config.grid.steps * s;
        let data = cfg.gas_data()?;
        let (field, certs) = build_field(&cfg, &data)?;
        let path = fine.coarsen(finest / cfg.grid.steps)?;
        let sol = assemble_with(&data, &field, &path, control.mutation())?;
        let rep = suite_for(&sol, &cfg, &control.verify_config(&cfg, bound_of(&certs)))?;
        let max_sup = Equation::STOCHASTIC.iter().map(|&e| (e, rep.sup(e))).collect();
        reports.push(RungReport { cells: cfg.grid.cells, steps: cfg.grid.steps, max_sup, passed: rep.passed() });
    }
    let orders = |size: &dyn Fn(&RungReport) -> f64| -> Vec<(Equation, Vec<f64>, f64)> {
        let sizes: Vec<f64> = reports.iter().map(size).collect();
        Equation::STOCHASTIC
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let errs: Vec<f64> = reports.iter().map(|r| r.max_sup[i].1).collect();
                (e, observed_orders(&sizes, &errs), fitted_order(&sizes, &errs))
            })
            .collect()
    };
    let temporal = orders(&|r: &RungReport| config.grid.horizon / r.steps as f64);
    let spatial = orders(&|r: &RungReport| 1.0 / r.cells[0].max(r.cells[1]) as f64);
    Ok(Ladder { rungs: reports, temporal, spatial })
}

fn residual_rows(buf: &mut Vec<u8>, seed: Option<u64>, reports: &[ResidualReport]) -> CliResult<()> {
    for r in reports {
        let seed = seed.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            buf,
            "{seed},{},{},{:e},{:e},{:e},{:.6},{}",
            r.equation.tag(),
            r.test,
            r.sup,
            r.tolerance,
            r.scale,
            r.ratio(),
            r.passed
        )?;
    }
    Ok(())
}

pub fn verify(config: &RunConfig, out: &Path, control: Control, rungs: Option<usize>) -> CliResult<i32> {
    let data = config.gas_data()?;
    let gen = load_generated(out, config)?;
    let vcfg = control.verify_config(config, bound_of(&gen.certificates));
    let grid = config.time_grid()?;
    let mut suites = Vec::new();
    let mut causality = Vec::new();
    for &seed in &config.noise.seeds {
        let sol = assemble_with(&data, &gen.field, &noise(config, seed)?, control.mutation())?;
        suites.push(suite_for(&sol, config, &vcfg)?);
        causality.push(causality_check(&data, &gen.field, grid, seed, 0.5 * grid.horizon(), control.mutation())?);
    }
    let incompressible = residual_incompressible(&gen.field, &data, &Battery::standard(&gen.field), &vcfg)?;
    let ladder = match rungs {
        Some(k) if k >= 2 => Some(refine(config, k, control)?),
        Some(_) => return Err(CliError::Config("--refine needs at least 2 rungs".into())),
        None => None,
    };
    let mut failing: BTreeSet<Equation> = suites.iter().flat_map(SuiteReport::failing).collect();
    failing.extend(incompressible.reports.iter().filter(|r| !r.passed).map(|r| r.equation));
    let passed = failing.is_empty()
        && incompressible.passed
        && suites.iter().all(|s| s.entropy_inequality_passed)
        && causality.iter().all(|c| c.passed)
        && ladder.as_ref().is_none_or(|l| l.rungs.iter().all(|r| r.passed));
    let bundle = VerifyBundle {
        config_hash: config.hash(),
        mutation: control.label(),
        suites,
        incompressible,
        causality,
        ladder,
        failing,
        passed,
    };

    let mut w = Writer::new(&out.join("verify"), Manifest::new("verify", config, resolved(&data, None, control)))?;
    w.json("report.json", &bundle)?;
    w.render("residuals.csv", |buf| {
        writeln!(buf, "seed,equation,test,sup,tolerance,scale,ratio,passed")?;
        for s in &bundle.suites {
            residual_rows(buf, s.seed, &s.reports)?;
        }
        residual_rows(buf, None, &bundle.incompressible.reports)
    })?;
    if let Some(l) = &bundle.ladder {
        w.json("ladder.json", l)?;
    }
    w.finish()?;
    print_verify(&bundle);
    Ok(if bundle.passed { EXIT_PASS } else { EXIT_RESIDUAL })
}

fn print_verify(b: &VerifyBundle) {
    println!("verify: {}", if b.passed { "PASS" } else { "FAIL" });
    for e in Equation::STOCHASTIC {
        let ratio = b.suites.iter().map(|s| s.max_ratio(e)).fold(0.0, f64::max);
        println!("  {:<16} max sup/tol {ratio:.3}", e.tag());
    }
    println!("  {:<16} {}", "incompressible", if b.incompressible.passed { "pass" } else { "fail" });
    let causal = b.causality.iter().filter(|c| c.passed).count();
    println!("  {:<16} {causal}/{} seeds", "causality", b.causality.len());
    if let Some(l) = &b.ladder {
        for (e, pairs, fit) in &l.temporal {
            println!("  temporal order {:<16} {fit:.2} {pairs:.2?}", e.tag());
        }
        for (e, pairs, fit) in &l.spatial {
            println!("  spatial order  {:<16} {fit:.2} {pairs:.2?}", e.tag());
        }
    }
    if !b.failing.is_empty() {
        let tags: Vec<&str> = b.failing.iter().map(Equation::tag).collect();
        println!("  failing: {}", tags.join(", "));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCertificate {
    pub noise_seed: u64,
    pub branch_seeds: (u64, u64),
    pub distance_at_double: f64,
    pub clock_at_double: f64,
    pub worst_ratio: f64,
    pub failing: BTreeSet<Equation>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyBundle {
    pub config_hash: String,
    pub branch_time: f64,
    pub window: f64,
    pub bound: CertificateBound,
    pub pairs: Vec<PairCertificate>,
    pub passed: bool,
}

pub fn certify(config: &RunConfig, out: &Path) -> CliResult<i32> {
    config.validate()?;
    if config.field.mode != FieldMode::Generator {
        return Err(CliError::Config("certify needs field.mode = \"generator\"".into()));
    }
    let seeds = &config.branch.seeds;
    if seeds.len() < 2 || seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
        return Err(CliError::Config("certify needs at least two distinct branch seeds".into()));
    }
    let data = config.gas_data()?;
    let t1 = config.branch.time;
    let paths: Vec<SamplePath> = config.noise.seeds.iter().map(|&s| noise(config, s)).collect::<CliResult<_>>()?;
    let tau_max = paths.iter().map(|p| build_clock(p).last()).fold(0.0, f64::max);
    let window = config.branch.window.unwrap_or((1.1 * tau_max).max(2.0 * t1));
    let params = GeneratorParams { window, ..config.field.generator.clone() };

    let domain = config.domain()?;
    let mut per_piece = Vec::new();
    for i in 0..domain.subdomains().len() {
        let grid = domain.subgrid(i, config.grid.cells)?;
        let common = derive_seed(config.field.seed, i as u64);
        let piece = PieceData::from_gas(&data, i);
        per_piece.push(branch_family(grid, piece, config.field.stages, t1, common, seeds, &params)?);
    }
    let mut fields = Vec::new();
    let mut certs = Vec::new();
    for j in 0..seeds.len() {
        let pieces: Vec<VelocityField> = per_piece.iter().map(|fam| fam[j].0.clone()).collect();
        certs.extend(per_piece.iter().map(|fam| fam[j].1.clone()));
        fields.push(paste(&domain, &pieces)?);
    }
    let bound = bound_of(&certs);
    let vcfg = VerifyConfig { tolerance: config.verify.tolerance, options: config.verify.options, bound };
    let battery = Battery::standard(&fields[0]);

    let mut pairs = Vec::new();
    let mut series = Vec::new();
    for (path, &noise_seed) in paths.iter().zip(&config.noise.seeds) {
        let sols: Vec<EulerSolution> = fields.iter().map(|f| assemble(&data, f, path)).collect::<Result<_, _>>()?;
        let ladder = TauLadder::uniform(path.grid(), config.verify.checkpoints)?;
        for a in 0..sols.len() {
            for b in a + 1..sols.len() {
                let c = nonuniqueness_certificate(&sols[a], &sols[b], t1, &battery, &ladder, &vcfg)?;
                let worst =
                    c.suites.iter().flat_map(|s| Equation::STOCHASTIC.map(|e| s.max_ratio(e))).fold(0.0, f64::max);
                let failing = c.suites.iter().flat_map(SuiteReport::failing).collect();
                for (t, d) in c.times.iter().zip(&c.distances) {
                    series.push((noise_seed, seeds[a], seeds[b], *t, *d));
                }
                pairs.push(PairCertificate {
                    noise_seed,
                    branch_seeds: (seeds[a], seeds[b]),
                    distance_at_double: c.distance_at_double,
                    clock_at_double: sols[a].clock().at(2.0 * t1),
                    worst_ratio: worst,
                    failing,
                    passed: c.passed,
                });
            }
        }
    }
    let passed = pairs.iter().all(|p| p.passed);
    let bundle = CertifyBundle { config_hash: config.hash(), branch_time: t1, window, bound, pairs, passed };

    let mut w = Writer::new(
        &out.join("certify"),
        Manifest::new("certify", config, resolved(&data, Some(window), Control::None)),
    )?;
    w.json("bundle.json", &bundle)?;
    w.json(CERTIFICATES, &certs)?;
    for (f, s) in fields.iter().zip(seeds) {
        w.render(&format!("branch-{s}.csv"), |buf| Ok(f.write_csv(buf)?))?;
    }
    w.render("distances.csv", |buf| {
        writeln!(buf, "noise_seed,seed_a,seed_b,t,distance")?;
        for (n, a, b, t, d) in &series {
            writeln!(buf, "{n},{a},{b},{t},{d:e}")?;
        }
        Ok(())
    })?;
    w.finish()?;

    println!("certify: {} (window {window:.3}, t1 {t1})", if passed { "PASS" } else { "FAIL" });
    for p in &bundle.pairs {
        println!(
            "  noise {} branches {:?}: distance at 2 t1 = {:.4e}, worst sup/tol {:.3}, {}",
            p.noise_seed,
            p.branch_seeds,
            p.distance_at_double,
            p.worst_ratio,
            if p.passed { "pass" } else { "fail" }
        );
    }
    Ok(if passed { EXIT_PASS } else { EXIT_CERTIFICATE })
}

/// Summarize whatever `verify` and `certify` left in `out`.
pub fn report(out: &Path) -> CliResult<i32> {
    let mut found = false;
    let mut rows = String::from("kind,key,value\n");
    let verify_path = out.join("verify").join("report.json");
    if verify_path.exists() {
        found = true;
        let b: VerifyBundle = read_json(&verify_path)?;
        print_verify(&b);
        rows += &format!("verify,passed,{}\n", b.passed);
        for e in Equation::STOCHASTIC {
            let ratio = b.suites.iter().map(|s| s.max_ratio(e)).fold(0.0, f64::max);
            rows += &format!("verify,{}_max_ratio,{ratio}\n", e.tag());
        }
    }
    let certify_path = out.join("certify").join("bundle.json");
    if certify_path.exists() {
        found = true;
        let b: CertifyBundle = read_json(&certify_path)?;
        println!("certify: {} ({} pair(s))", if b.passed { "PASS" } else { "FAIL" }, b.pairs.len());
        rows += &format!("certify,passed,{}\n", b.passed);
        for p in &b.pairs {
            let key = format!("distance_{}_{}_{}", p.noise_seed, p.branch_seeds.0, p.branch_seeds.1);
            rows += &format!("certify,{key},{}\n", p.distance_at_double);
        }
    }
    if !found {
        eprintln!("report: no verify or certify results under {}", out.display());
        return Ok(EXIT_IO);
    }
    if out.join(MANIFEST).exists() {
        let m: Manifest = read_json(&out.join(MANIFEST))?;
        rows += &format!("generate,config_hash,{}\n", m.config_hash);
    }
    std::fs::write(out.join("summary.csv"), rows)?;
    Ok(EXIT_PASS)
}
