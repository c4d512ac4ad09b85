//! The JSON experiment configuration.

use std::path::PathBuf;

use geqhom_core::conditions::{GammaOptions, Lemma51Options, StreamGrowthOptions};
use geqhom_core::gequation::HomogenizationOptions;
use geqhom_core::{DriftSign, FieldSpec, InitialData, Vec2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acceptance::{Settings, Tolerances};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Field,
    Trajectory,
    Tau,
    Wulff,
    Geq,
    Conditions,
    Acceptance,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Field => "field",
            Experiment::Trajectory => "trajectory",
            Experiment::Tau => "tau",
            Experiment::Wulff => "wulff",
            Experiment::Geq => "geq",
            Experiment::Conditions => "conditions",
            Experiment::Acceptance => "acceptance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub field: FieldSpec,
    pub seed: u64,
    pub solver: SolverParams,
    /// Output directory; excluded from the config hash.
    pub output: Option<PathBuf>,
    pub sampling: FieldJob,
    pub trajectory: TrajectoryJob,
    pub tau: TauJob,
    pub wulff: WulffJob,
    pub geq: GeqJob,
    pub conditions: ConditionsJob,
    pub acceptance: AcceptanceJob,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            field: FieldSpec::zero(),
            seed: 0,
            solver: SolverParams::default(),
            output: None,
            sampling: FieldJob::default(),
            trajectory: TrajectoryJob::default(),
            tau: TauJob::default(),
            wulff: WulffJob::default(),
            geq: GeqJob::default(),
            conditions: ConditionsJob::default(),
            acceptance: AcceptanceJob::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Lattice spacing.
    pub h: f64,
    /// Stencil order 1, 2 or 3.
    pub stencil: u8,
    pub cfl: f64,
    /// Lax-Friedrichs viscosity; `1 + V_inf` when absent.
    pub sigma: Option<f64>,
    /// Extra grid margin around the region of interest.
    pub pad: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { h: 0.05, stencil: 3, cfl: 0.9, sigma: None, pad: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareSpec {
    pub center: Vec2,
    pub half_width: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldJob {
    /// Realizations for the ensemble statistics.
    pub samples: usize,
    /// Grid for dumping one realization.
    pub grid: Option<SquareSpec>,
}

impl Default for FieldJob {
    fn default() -> Self {
        FieldJob { samples: 2000, grid: Some(SquareSpec { center: Vec2::ZERO, half_width: 3.2, h: 0.1 }) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryJob {
    pub x0: Vec2,
    /// When set, descend an optimal path from `x0` to this point instead of
    /// integrating `controls`.
    pub target: Option<Vec2>,
    pub controls: Vec<Vec2>,
    pub control_dt: f64,
    pub t_end: f64,
    pub dt: f64,
    pub drift: DriftSign,
    pub bound: f64,
}

impl Default for TrajectoryJob {
    fn default() -> Self {
        TrajectoryJob {
            x0: Vec2::ZERO,
            target: None,
            controls: vec![Vec2::new(1.0, 0.0)],
            control_dt: 1.0,
            t_end: 1.0,
            dt: 1e-3,
            drift: DriftSign::Minus,
            bound: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauJob {
    pub source: Vec2,
    pub targets: Vec<Vec2>,
    /// Also write the whole travel-time field as CSV.
    pub write_field: bool,
    /// Grid half-width; sized from the targets when absent.
    pub half_width: Option<f64>,
}

impl Default for TauJob {
    fn default() -> Self {
        TauJob { source: Vec2::ZERO, targets: vec![Vec2::new(1.0, 0.0)], write_field: false, half_width: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WulffJob {
    pub directions: usize,
    pub seeds: usize,
    pub radii: Vec<f64>,
    /// Direction for the shape diagnostics; skipped when absent.
    pub diagnostics: Option<Vec2>,
    pub diagnostic_seeds: usize,
}

impl Default for WulffJob {
    fn default() -> Self {
        WulffJob { directions: 32, seeds: 4, radii: vec![10.0, 20.0, 40.0], diagnostics: None, diagnostic_seeds: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeqMethod {
    LaxFriedrichs,
    Control,
    Effective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogenizationJob {
    pub eps: Vec<f64>,
    pub t_end: f64,
    pub radius: f64,
    pub options: HomogenizationOptions,
}

impl Default for HomogenizationJob {
    fn default() -> Self {
        HomogenizationJob {
            eps: vec![0.25, 0.125, 0.0625],
            t_end: 4.0,
            radius: 4.0,
            options: HomogenizationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeqJob {
    pub eps: f64,
    pub u0: InitialData,
    pub times: Vec<f64>,
    pub methods: Vec<GeqMethod>,
    /// Half-width of the Lax-Friedrichs domain.
    pub domain_half_width: f64,
    /// Evaluation grid shared by all methods.
    pub eval: SquareSpec,
    /// Fast-variable lattice spacing of the control representation.
    pub rep_h: f64,
    pub sampling_tol: f64,
    pub homogenization: Option<HomogenizationJob>,
}

impl Default for GeqJob {
    fn default() -> Self {
        GeqJob {
            eps: 1.0,
            u0: InitialData::cosine(1.0, 0.0),
            times: vec![1.0],
            methods: vec![GeqMethod::LaxFriedrichs, GeqMethod::Control],
            domain_half_width: 4.0,
            eval: SquareSpec { center: Vec2::ZERO, half_width: 1.0, h: 0.25 },
            rep_h: 0.05,
            sampling_tol: 0.005,
            homogenization: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionsJob {
    /// Checks to run, by id.
    pub run: Vec<String>,
    pub lemma51: Lemma51Job,
    pub taubound: TauboundJob,
    pub gammaexp: GammaexpJob,
    pub stream_growth: StreamGrowthJob,
    pub moment3: Moment3Job,
    pub sublinear: SublinearJob,
    pub volume: VolumeJob,
}

pub const CONDITION_IDS: [&str; 7] = ["lemma51", "taubound", "gammaexp", "stream-growth", "moment3", "sublinear", "volume"];

impl Default for ConditionsJob {
    fn default() -> Self {
        ConditionsJob {
            run: CONDITION_IDS.iter().map(|s| s.to_string()).collect(),
            lemma51: Lemma51Job::default(),
            taubound: TauboundJob::default(),
            gammaexp: GammaexpJob::default(),
            stream_growth: StreamGrowthJob::default(),
            moment3: Moment3Job::default(),
            sublinear: SublinearJob::default(),
            volume: VolumeJob::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma51Job {
    pub z: Vec2,
    pub m: f64,
    pub options: Lemma51Options,
}

impl Default for Lemma51Job {
    fn default() -> Self {
        Lemma51Job { z: Vec2::ZERO, m: 10.0, options: Lemma51Options::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauboundJob {
    pub seeds: usize,
    pub radii: Vec<f64>,
    pub options: GammaOptions,
}

impl Default for TauboundJob {
    fn default() -> Self {
        TauboundJob { seeds: 2, radii: vec![10.0, 20.0, 40.0, 80.0], options: GammaOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaexpJob {
    pub n: usize,
    pub radius: f64,
    pub options: GammaOptions,
}

impl Default for GammaexpJob {
    fn default() -> Self {
        GammaexpJob { n: 10, radius: 5.0, options: GammaOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamGrowthJob {
    pub r_max: f64,
    pub dr: f64,
    pub n: usize,
    pub options: StreamGrowthOptions,
}

impl Default for StreamGrowthJob {
    fn default() -> Self {
        StreamGrowthJob { r_max: 16.0, dr: 0.5, n: 200, options: StreamGrowthOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Moment3Job {
    pub n: usize,
    pub expected: Option<f64>,
    pub sigmas: f64,
}

impl Default for Moment3Job {
    fn default() -> Self {
        Moment3Job { n: 20000, expected: None, sigmas: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SublinearJob {
    pub radii: Vec<f64>,
    pub step: f64,
}

impl Default for SublinearJob {
    fn default() -> Self {
        SublinearJob { radii: vec![5.0, 10.0, 20.0, 40.0, 80.0], step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeJob {
    pub x: Vec2,
    pub times: Vec<f64>,
    pub tol: f64,
}

impl Default for VolumeJob {
    fn default() -> Self {
        VolumeJob { x: Vec2::ZERO, times: vec![1.0, 2.0, 4.0], tol: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceJob {
    pub criteria: Vec<u32>,
    pub tolerances: Tolerances,
    pub settings: Settings,
}

impl Default for AcceptanceJob {
    fn default() -> Self {
        AcceptanceJob { criteria: (1..=13).collect(), tolerances: Tolerances::default(), settings: Settings::default() }
    }
}

fn config_err(what: &str, ok: bool) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(what.to_string()))
    }
}

impl ExperimentConfig {
    /// Parse and validate; errors carry the line and column or the offending field.
    pub fn from_json(text: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.field.validate().map_err(|e| CliError::Config(format!("field: {e}")))?;
        let s = &self.solver;
        config_err("solver.h must be positive", s.h > 0.0 && s.h.is_finite())?;
        config_err("solver.stencil must be 1, 2 or 3", (1..=3).contains(&s.stencil))?;
        config_err("solver.cfl must lie in (0, 1]", s.cfl > 0.0 && s.cfl <= 1.0)?;
        config_err("solver.pad must be non-negative", s.pad >= 0.0)?;
        if let Some(sigma) = s.sigma {
            let min = 1.0 + self.field.velocity_bound();
            config_err(&format!("solver.sigma must be at least 1 + V_inf = {min}"), sigma >= min)?;
        }
        let t = &self.trajectory;
        config_err("trajectory.dt and trajectory.t_end must be positive", t.dt > 0.0 && t.t_end > 0.0)?;
        config_err("trajectory.bound must be positive", t.bound > 0.0)?;
        config_err("trajectory.controls must be non-empty", t.target.is_some() || !t.controls.is_empty())?;
        config_err("tau.targets must be non-empty", !self.tau.targets.is_empty())?;
        let w = &self.wulff;
        config_err("wulff.directions must be at least 8", w.directions >= 8)?;
        config_err("wulff.seeds must be positive", w.seeds > 0)?;
        config_err("wulff.radii must hold at least 3 increasing values", w.radii.len() >= 3 && w.radii.windows(2).all(|p| p[1] > p[0]))?;
        let g = &self.geq;
        config_err("geq.eps must lie in (0, 1]", g.eps > 0.0 && g.eps <= 1.0)?;
        config_err("geq.times must be increasing and non-negative", g.times.iter().all(|t| *t >= 0.0) && g.times.windows(2).all(|p| p[1] > p[0]))?;
        g.u0.validate().map_err(|e| CliError::Config(format!("geq.u0: {e}")))?;
        for id in &self.conditions.run {
            config_err(&format!("unknown condition id `{id}`"), CONDITION_IDS.contains(&id.as_str()))?;
        }
        for id in &self.acceptance.criteria {
            config_err(&format!("unknown acceptance criterion {id}"), (1..=13).contains(id))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, with the output directory removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn unknown_fields_report_position() {
        let err = ExperimentConfig::from_json("{\n  \"seed\": 1,\n  \"sed\": 2\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sed") && msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = ["{\"solver\": {\"cfl\": 1.5}}", "{\"conditions\": {\"run\": [\"nope\"]}}", "{\"field\": {\"kind\": \"gradient-trap\", \"cap_radius\": 0.5}}"];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_json(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_output_but_not_seed() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn serialized_config_reads_back_identically() {
        let mut a = ExperimentConfig {
            experiment: Some(Experiment::Geq),
            field: FieldSpec::isotropic_fourier(4, 1.0, 1.0),
            ..ExperimentConfig::default()
        };
        a.geq.homogenization = Some(HomogenizationJob::default());
        let text = serde_json::to_string_pretty(&a).unwrap();
        let b = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }
}
