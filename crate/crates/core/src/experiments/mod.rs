//! Reproducible experiment harnesses: the recovery phase transition, the
//! noisy recovery demo and the super-resolution demo.

mod noisy;
mod phase;
mod superres;

pub use noisy::{run_noisy_demo, NoisyConfig, NoisyOutcome, TableRow};
pub use phase::{
    linear_fit, run_phase_transition, run_trial, transition_summary, CellResult, TransitionSummary,
    TrialSetup,
};
pub use superres::{
    detect_peaks, render_image, run_superres, spectrum_signal, Peak, Source, SuperresOutcome,
    SuperresSpec,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::array::validate_dims;
use crate::error::{invalid, Result};
use crate::hankel::PencilShape;
use crate::solver::{Schedule, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PhaseTransition,
    NoisyRecovery,
    Superres,
    SingleRecovery,
}

/// Rank and sample-size values to sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub ranks: Vec<usize>,
    pub samples: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            ranks: (1..=6).collect(),
            samples: (1..=8).map(|i| 25 * i).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub dims: Vec<usize>,
    /// Pencil parameters; balanced when absent.
    pub pencil: Option<Vec<usize>>,
    pub grid: Grid,
    pub trials: usize,
    pub seed: u64,
    /// Solver settings; the kind's default when absent.
    pub solver: Option<SolverConfig>,
    pub output_path: Option<PathBuf>,
    /// NMSE at or below which a trial counts as a success.
    pub success_tol: f64,
    /// Signal-to-noise amplitude ratio for noisy runs.
    pub snr: f64,
    /// Also run the noisy demo without noise on the same mask.
    pub compare_noiseless: bool,
    pub superres: Option<SuperresSpec>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::PhaseTransition,
            dims: vec![15, 15],
            pencil: None,
            grid: Grid::default(),
            trials: 100,
            seed: 0,
            solver: None,
            output_path: None,
            success_tol: 1e-4,
            snr: 10.0,
            compare_noiseless: false,
            superres: None,
        }
    }
}

impl ExperimentSpec {
    /// Defaults for `kind`; fields absent from a JSON spec take these values.
    pub fn defaults_for(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            ..Self::default()
        };
        match kind {
            ExperimentKind::PhaseTransition => base,
            ExperimentKind::NoisyRecovery => Self {
                dims: vec![101, 101],
                grid: Grid {
                    ranks: vec![30],
                    samples: vec![600],
                },
                trials: 1,
                ..base
            },
            ExperimentKind::SingleRecovery => Self {
                grid: Grid {
                    ranks: vec![3],
                    samples: vec![150],
                },
                trials: 1,
                ..base
            },
            ExperimentKind::Superres => Self {
                trials: 1,
                superres: Some(SuperresSpec::default()),
                ..base
            },
        }
    }

    /// Parses a JSON spec, filling absent fields from [`Self::defaults_for`]
    /// the spec's `kind` (phase transition when absent).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let given: serde_json::Value = serde_json::from_str(text)?;
        let Some(fields) = given.as_object() else {
            return invalid("an experiment spec must be a JSON object");
        };
        let kind = match fields.get("kind") {
            Some(k) => serde_json::from_value(k.clone())?,
            None => ExperimentKind::PhaseTransition,
        };
        let mut merged = serde_json::to_value(Self::defaults_for(kind))?;
        let target = merged.as_object_mut().expect("specs serialize to objects");
        for (k, v) in fields {
            target.insert(k.clone(), v.clone());
        }
        let spec: Self = serde_json::from_value(merged)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        validate_dims(&self.dims)?;
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.grid.ranks.is_empty() || self.grid.samples.is_empty() {
            return invalid("the rank and sample grids must be non-empty");
        }
        if self.grid.ranks.contains(&0) {
            return invalid("ranks must be at least 1");
        }
        let n: usize = self.dims.iter().product();
        if let Some(&m) = self.grid.samples.iter().find(|&&m| m > n) {
            return invalid(format!("sample size {m} exceeds the {n} entries"));
        }
        if !(self.success_tol > 0.0) {
            return invalid("success_tol must be positive");
        }
        if !(self.snr > 0.0) {
            return invalid("snr must be positive (use inf for no noise)");
        }
        self.pencil_shape()?;
        if let Some(cfg) = &self.solver {
            cfg.validate()?;
        }
        if let Some(sr) = &self.superres {
            sr.validate()?;
        }
        Ok(())
    }

    pub fn pencil_shape(&self) -> Result<PencilShape> {
        match &self.pencil {
            Some(k) => PencilShape::new(self.dims.clone(), k.clone()),
            None => PencilShape::balanced(&self.dims),
        }
    }

    /// Solver settings in effect for this experiment.
    pub fn solver_config(&self) -> SolverConfig {
        self.solver
            .clone()
            .unwrap_or_else(|| default_solver(self.kind))
    }
}

/// Per-kind solver defaults.
///
/// Sweeps use a geometric threshold decay, which reaches the `1e-4` success
/// level in a few hundred iterations. The noisy demo keeps the step-decay
/// rule with a rank-capped truncated SVD.
pub fn default_solver(kind: ExperimentKind) -> SolverConfig {
    match kind {
        ExperimentKind::PhaseTransition | ExperimentKind::SingleRecovery => SolverConfig {
            max_iters: 400,
            rel_tol: 1e-9,
            schedule: Schedule::Geometric {
                scale: 0.1,
                ratio: 0.93,
            },
            ..SolverConfig::default()
        },
        ExperimentKind::NoisyRecovery => SolverConfig {
            max_iters: 400,
            rank_cap: Some(80),
            oversample: 15,
            ..SolverConfig::default()
        },
        ExperimentKind::Superres => SolverConfig {
            max_iters: 2000,
            rel_tol: 1e-9,
            schedule: Schedule::Geometric {
                scale: 0.1,
                ratio: 0.99,
            },
            rank_cap: Some(40),
            ..SolverConfig::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_defaults_and_validation() {
        let spec: ExperimentSpec = serde_json::from_str(r#"{"kind": "phase_transition"}"#).unwrap();
        assert_eq!(spec.grid.samples, vec![25, 50, 75, 100, 125, 150, 175, 200]);
        assert!(spec.validate().is_ok());
        let bad = ExperimentSpec {
            trials: 0,
            ..spec.clone()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentSpec {
            grid: Grid {
                ranks: vec![],
                samples: vec![1],
            },
            ..spec.clone()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentSpec {
            grid: Grid {
                ranks: vec![1],
                samples: vec![226],
            },
            ..spec.clone()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentSpec {
            pencil: Some(vec![16, 8]),
            ..spec
        };
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<ExperimentSpec>(r#"{"trails": 3}"#).is_err());
    }

    #[test]
    fn kind_defaults_fill_absent_fields() {
        let spec =
            ExperimentSpec::from_json_str(r#"{"kind": "noisy_recovery", "seed": 4}"#).unwrap();
        assert_eq!(spec.dims, vec![101, 101]);
        assert_eq!(spec.grid.samples, vec![600]);
        assert_eq!(spec.seed, 4);
        let spec = ExperimentSpec::from_json_str(r#"{"trials": 7}"#).unwrap();
        assert_eq!(spec.kind, ExperimentKind::PhaseTransition);
        assert_eq!(spec.trials, 7);
        assert!(ExperimentSpec::from_json_str(r#"{"trials": 0}"#).is_err());
        assert!(ExperimentSpec::from_json_str(r#"{"kind": "nope"}"#).is_err());
        assert!(ExperimentSpec::from_json_str("[1]").is_err());
    }
}
