//! Run configuration: one TOML file with nested sections, validated at load.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stochastic_euler::domain::{required_lambda, Boundary, BoxGrid, DataBounds, DomainSpec, GasData, InitialState};
use stochastic_euler::generator::GeneratorParams;
use stochastic_euler::paths::TimeGrid;
use stochastic_euler::verify::{ToleranceModel, VerifyOptions};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub lengths: Vec<f64>,
    pub boundary: Vec<Boundary>,
    /// Interior cut positions per axis; subdomains are the tensor boxes.
    pub cuts: Vec<Vec<f64>>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { lengths: vec![1.0, 1.0], boundary: vec![Boundary::Periodic, Boundary::Wall], cuts: vec![vec![], vec![]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub gamma: f64,
    /// Per-subdomain values; when absent they are sampled from `bounds` with `seed`.
    pub rho: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub bounds: Option<DataBounds>,
    pub seed: u64,
    /// Exactly one of `lambda0` and `energy_target` must be set.
    pub lambda0: Option<f64>,
    pub energy_target: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { gamma: 2.0, rho: None, theta: None, bounds: None, seed: 0, lambda0: None, energy_target: None }
    }
}

impl DataConfig {
    /// Used when the `[data]` section is absent: rho0 = theta0 = 1, gamma = 2, Lambda0 = 2.
    pub fn worked() -> Self {
        Self { rho: Some(vec![1.0]), theta: Some(vec![1.0]), lambda0: Some(2.0), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub cells: [usize; 2],
    pub steps: usize,
    pub horizon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { cells: [32, 32], steps: 256, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldMode {
    Fixture,
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub mode: FieldMode,
    /// Shear layers of the fixture.
    pub stripes: usize,
    pub stages: usize,
    pub seed: u64,
    pub generator: GeneratorParams,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { mode: FieldMode::Fixture, stripes: 2, stages: 3, seed: 1, generator: GeneratorParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchConfig {
    pub time: f64,
    pub seeds: Vec<u64>,
    /// Generation window of the branch fields; when absent, 10% above the
    /// largest clock value `tau(T)` over the noise seeds.
    pub window: Option<f64>,
}

impl Default for BranchConfig {
    fn default() -> Self {
        Self { time: 0.25, seeds: vec![7, 8], window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub seeds: Vec<u64>,
    /// Times at which `assemble` exports snapshots.
    pub snapshots: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { seeds: vec![1], snapshots: vec![0.0, 0.5, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub checkpoints: usize,
    pub tolerance: ToleranceModel,
    pub options: VerifyOptions,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { checkpoints: 8, tolerance: ToleranceModel::default(), options: VerifyOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    #[serde(default = "DataConfig::worked")]
    pub data: DataConfig,
    pub grid: GridConfig,
    pub field: FieldConfig,
    pub branch: BranchConfig,
    pub noise: NoiseConfig,
    pub verify: VerifySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainConfig::default(),
            data: DataConfig::worked(),
            grid: GridConfig::default(),
            field: FieldConfig::default(),
            branch: BranchConfig::default(),
            noise: NoiseConfig::default(),
            verify: VerifySection::default(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub noise_seeds: Vec<u64>,
    pub data_seed: Option<u64>,
    pub field_seed: Option<u64>,
    pub branch_seeds: Vec<u64>,
    pub cells: Option<[usize; 2]>,
    pub steps: Option<usize>,
}

fn bad<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if !o.noise_seeds.is_empty() {
            self.noise.seeds = o.noise_seeds.clone();
        }
        if !o.branch_seeds.is_empty() {
            self.branch.seeds = o.branch_seeds.clone();
        }
        if let Some(s) = o.data_seed {
            self.data.seed = s;
        }
        if let Some(s) = o.field_seed {
            self.field.seed = s;
        }
        if let Some(c) = o.cells {
            self.grid.cells = c;
        }
        if let Some(m) = o.steps {
            self.grid.steps = m;
        }
    }

    /// Hex SHA-256 of the canonical JSON form, defaults included.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    /// Hash of the inputs that determine the generated field: domain, data,
    /// cells and field settings. Noise, branch and verify settings are excluded.
    pub fn field_hash(&self) -> String {
        let json = serde_json::to_string(&(&self.domain, &self.data, self.grid.cells, &self.field))
            .expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn domain(&self) -> CliResult<DomainSpec> {
        let d = &self.domain;
        if d.lengths.len() != 2 || d.boundary.len() != 2 || d.cuts.len() != 2 {
            return bad("domain.lengths, domain.boundary and domain.cuts need two entries (planar runs)");
        }
        Ok(DomainSpec::tensor(d.lengths.clone(), d.boundary.clone(), &d.cuts)?)
    }

    pub fn time_grid(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(self.grid.horizon, self.grid.steps)?)
    }

    pub fn global_grid(&self) -> CliResult<BoxGrid> {
        Ok(self.domain()?.grid(self.grid.cells)?)
    }

    /// Initial state, sampled once from the bounds when no values are given.
    pub fn initial_state(&self) -> CliResult<InitialState> {
        let d = &self.data;
        let count = self.domain()?.subdomains().len();
        match (&d.rho, &d.theta) {
            (Some(rho), Some(theta)) => {
                let bounds = match d.bounds {
                    Some(b) => b,
                    None => {
                        let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        DataBounds { rho_min: lo(rho), rho_max: hi(rho), theta_min: lo(theta), theta_max: hi(theta) }
                    }
                };
                if rho.len() != count || theta.len() != count {
                    return bad(format!("{count} subdomains need {count} densities and temperatures"));
                }
                Ok(InitialState::new(d.gamma, rho.clone(), theta.clone(), bounds)?)
            }
            (None, None) => match d.bounds {
                Some(b) => Ok(InitialState::sample(d.gamma, b, count, d.seed)?),
                None => bad("data needs rho and theta, or bounds to sample from"),
            },
            _ => bad("data.rho and data.theta must be given together"),
        }
    }

    pub fn gas_data(&self) -> CliResult<GasData> {
        let state = self.initial_state()?;
        let lambda0 = match (self.data.lambda0, self.data.energy_target) {
            (Some(l), None) => l,
            (None, Some(target)) => required_lambda(&state, target, &self.domain()?)?.lambda0,
            _ => return bad("set exactly one of data.lambda0 and data.energy_target"),
        };
        Ok(GasData::new(state, lambda0)?)
    }

    /// Everything that can be checked without running the pipeline.
    pub fn validate(&self) -> CliResult<()> {
        let domain = self.domain()?;
        self.time_grid()?;
        if self.grid.cells.contains(&0) {
            return bad("grid.cells must be positive");
        }
        for i in 0..domain.subdomains().len() {
            domain.subgrid(i, self.grid.cells)?;
        }
        self.initial_state()?;
        if self.noise.seeds.is_empty() {
            return bad("noise.seeds must not be empty");
        }
        if let Some(t) = self.noise.snapshots.iter().find(|t| !(**t >= 0.0 && **t <= self.grid.horizon)) {
            return bad(format!("snapshot time {t} outside [0, {}]", self.grid.horizon));
        }
        if self.verify.checkpoints == 0 {
            return bad("verify.checkpoints must be positive");
        }
        self.verify.tolerance.validate()?;
        if !(self.verify.options.momentum_drift.is_finite()) {
            return bad("verify.options.momentum_drift must be finite");
        }
        match self.field.mode {
            FieldMode::Fixture => {
                if domain.subdomains().len() != 1 {
                    return bad("the shear fixture needs a single subdomain");
                }
                if self.field.stripes == 0 {
                    return bad("field.stripes must be positive");
                }
            }
            FieldMode::Generator => {
                self.field.generator.validate()?;
                if self.field.stages == 0 {
                    return bad("field.stages must be positive");
                }
            }
        }
        let b = &self.branch;
        if !(b.time > 0.0 && 2.0 * b.time <= self.grid.horizon) {
            return bad(format!("branch.time {} needs 0 < 2 t1 <= {}", b.time, self.grid.horizon));
        }
        if let Some(w) = b.window {
            if !(w > b.time) {
                return bad("branch.window must exceed branch.time");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_the_worked_fixture() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let g = c.gas_data().unwrap();
        assert_eq!(g.kinetic_target(0, 2), 1.0);
        assert_eq!(RunConfig::parse("").unwrap(), c);
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.apply(&Overrides { steps: Some(512), ..Default::default() });
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn field_hash_ignores_noise_and_verify_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.apply(&Overrides { noise_seeds: vec![9], steps: Some(512), branch_seeds: vec![1, 2], ..Default::default() });
        b.verify.checkpoints = 3;
        assert_eq!(a.field_hash(), b.field_hash());
        b.apply(&Overrides { cells: Some([16, 16]), ..Default::default() });
        assert_ne!(a.field_hash(), b.field_hash());
        let mut c = a.clone();
        c.apply(&Overrides { field_seed: Some(4), ..Default::default() });
        assert_ne!(a.field_hash(), c.field_hash());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.field.mode = FieldMode::Generator;
        c.data.bounds = Some(DataBounds { rho_min: 0.5, rho_max: 2.0, theta_min: 0.5, theta_max: 2.0 });
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn load_time_validation() {
        let cases = [
            "[data]\ngamma = 0.5",
            "[data]\nrho = [0.0]\ntheta = [1.0]",
            "[data]\nlambda0 = 2.0\nenergy_target = 3.0",
            "[grid]\nsteps = 0",
            "[noise]\nseeds = []",
            "[branch]\ntime = 0.75",
            "[domain]\ncuts = [[0.5], []]",
            "[unknown]\nx = 1",
        ];
        for text in cases {
            let r = RunConfig::parse(text).and_then(|c| c.validate());
            assert!(matches!(r, Err(CliError::Config(_)) | Err(CliError::Core(_))), "{text}: {r:?}");
        }
    }

    #[test]
    fn sampled_data_is_reproducible() {
        let text = "[domain]\nboundary = [\"wall\", \"wall\"]\ncuts = [[0.5], []]\n\
                    [data]\nlambda0 = 5.0\nbounds = { rho_min = 0.5, rho_max = 2.0, theta_min = 0.5, theta_max = 2.0 }\n";
        let mut c = RunConfig::parse(text).unwrap();
        assert_eq!(c.data.rho, None);
        let (a, b) = (c.initial_state().unwrap(), c.initial_state().unwrap());
        assert_eq!(a, b);
        assert_eq!(a.count(), 2);
        c.data.seed = 9;
        assert_ne!(c.initial_state().unwrap(), a);
    }
}
