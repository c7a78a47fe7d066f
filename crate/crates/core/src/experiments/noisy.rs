use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::phase::mc_separation;
use super::{default_solver, ExperimentKind, ExperimentSpec};
use crate::array::{multi_index, DataArray};
use crate::error::{invalid, Result};
use crate::hankel::{build_map, weighted_norm, PencilShape};
use crate::model::{
    add_noise, derive_seed, sample_uniform, synthesize, ObservationSet, SpectralSignal,
};
use crate::solver::{emac_svt_with_map, theorem2_bound, IterationRecord, NoiseMode, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisyConfig {
    pub dims: Vec<usize>,
    pub pencil: Option<Vec<usize>>,
    pub rank: usize,
    pub samples: usize,
    /// `‖P_Ω(X)‖_F / ‖P_Ω(N)‖_F` in expectation; `inf` disables noise.
    pub snr: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Also recover from the same mask without noise.
    pub compare_noiseless: bool,
    /// Number of leading entries in the reconstruction table.
    pub table_len: usize,
}

impl Default for NoisyConfig {
    fn default() -> Self {
        Self {
            dims: vec![101, 101],
            pencil: None,
            rank: 30,
            samples: 600,
            snr: 10.0,
            seed: 0,
            solver: default_solver(ExperimentKind::NoisyRecovery),
            compare_noiseless: false,
            table_len: 100,
        }
    }
}

impl NoisyConfig {
    /// Run `trial` of a noisy-recovery experiment spec: rank and sample size
    /// from the first grid entries, seed derived from the spec seed.
    pub fn from_experiment(spec: &ExperimentSpec, trial: usize) -> Result<Self> {
        if spec.kind != ExperimentKind::NoisyRecovery {
            return invalid(format!(
                "expected a noisy_recovery spec, got {:?}",
                spec.kind
            ));
        }
        spec.validate()?;
        Ok(Self {
            dims: spec.dims.clone(),
            pencil: spec.pencil.clone(),
            rank: spec.grid.ranks[0],
            samples: spec.grid.samples[0],
            snr: spec.snr,
            seed: derive_seed(spec.seed, &[trial as u64]),
            solver: spec.solver_config(),
            compare_noiseless: spec.compare_noiseless,
            table_len: 100,
        })
    }
}

/// One entry of the reconstruction-versus-truth table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub index: Vec<usize>,
    pub truth: [f64; 2],
    pub recovered: [f64; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoisyOutcome {
    pub nmse: f64,
    pub noiseless_nmse: Option<f64>,
    /// Realized `‖P_Ω(N)‖_F`.
    pub delta: f64,
    /// `‖enhance(X̂) − enhance(X)‖_F`.
    pub enhanced_error: f64,
    pub theorem2_bound: f64,
    pub bound_holds: bool,
    pub iters: usize,
    pub converged: bool,
    pub table: Vec<TableRow>,
    #[serde(skip)]
    pub history: Vec<IterationRecord>,
    #[serde(skip)]
    pub truth: Option<DataArray>,
    #[serde(skip)]
    pub recovered: Option<DataArray>,
}

/// Random signal, uniform mask, additive complex Gaussian noise on the
/// observed entries, then recovery.
///
/// In δ-ball mode with `solver.delta = 0` the realized noise norm is used.
pub fn run_noisy_demo(cfg: &NoisyConfig) -> Result<NoisyOutcome> {
    cfg.solver.validate()?;
    let pencil = match &cfg.pencil {
        Some(k) => PencilShape::new(cfg.dims.clone(), k.clone())?,
        None => PencilShape::balanced(&cfg.dims)?,
    };
    if !(cfg.snr > 0.0) {
        return invalid("snr must be positive");
    }
    let map = build_map(&pencil);
    let signal = SpectralSignal::random(
        &cfg.dims,
        cfg.rank,
        mc_separation(&cfg.dims),
        derive_seed(cfg.seed, &[0]),
    )?;
    let truth = synthesize(&signal);
    let mask = sample_uniform(&cfg.dims, cfg.samples, derive_seed(cfg.seed, &[1]))?;
    let clean = ObservationSet::from_array(&truth, &mask)?;
    let noisy_values = add_noise(clean.values(), cfg.snr, derive_seed(cfg.seed, &[2]))?;
    let delta = noisy_values
        .iter()
        .zip(clean.values())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let noisy = clean.with_values(noisy_values, delta)?;

    let mut solver = SolverConfig {
        seed: derive_seed(cfg.seed, &[3]),
        ..cfg.solver.clone()
    };
    if solver.noise_mode == NoiseMode::DeltaBall && solver.delta == 0.0 {
        solver.delta = delta;
    }
    let res = emac_svt_with_map(&noisy, &map, &solver, Some(&truth))?;
    let noiseless_nmse = if cfg.compare_noiseless {
        let clean_cfg = SolverConfig {
            noise_mode: NoiseMode::Equality,
            delta: 0.0,
            ..solver.clone()
        };
        emac_svt_with_map(&clean, &map, &clean_cfg, Some(&truth))?.nmse
    } else {
        None
    };

    let diff: Vec<Complex64> = res
        .data_hat
        .values()
        .iter()
        .zip(truth.values())
        .map(|(a, b)| a - b)
        .collect();
    let enhanced_error = weighted_norm(&diff, &map);
    let bound = theorem2_bound(&cfg.dims, cfg.samples, delta);
    let table = (0..cfg.table_len.min(truth.len()))
        .map(|i| {
            let (t, r) = (truth.values()[i], res.data_hat.values()[i]);
            TableRow {
                index: multi_index(&cfg.dims, i),
                truth: [t.re, t.im],
                recovered: [r.re, r.im],
            }
        })
        .collect();
    Ok(NoisyOutcome {
        nmse: res.nmse.unwrap_or(f64::INFINITY),
        noiseless_nmse,
        delta,
        enhanced_error,
        theorem2_bound: bound,
        bound_holds: enhanced_error <= bound,
        iters: res.iters,
        converged: res.converged,
        table,
        history: res.history,
        truth: Some(truth),
        recovered: Some(res.data_hat),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Schedule;

    fn small(seed: u64, snr: f64) -> NoisyConfig {
        NoisyConfig {
            dims: vec![16, 16],
            rank: 3,
            samples: 120,
            snr,
            seed,
            solver: SolverConfig {
                max_iters: 300,
                rel_tol: 1e-9,
                schedule: Schedule::Geometric {
                    scale: 0.1,
                    ratio: 0.93,
                },
                ..SolverConfig::default()
            },
            compare_noiseless: true,
            table_len: 100,
            ..NoisyConfig::default()
        }
    }

    #[test]
    fn delta_is_the_realized_noise_norm_and_bound_holds() {
        let out = run_noisy_demo(&small(1, 10.0)).unwrap();
        assert!(out.delta > 0.0);
        assert!(out.bound_holds);
        assert_eq!(out.table.len(), 100);
        assert_eq!(out.table[17].index, vec![1, 1]);
        assert!(out.noiseless_nmse.unwrap() < out.nmse);
        let clean = run_noisy_demo(&small(1, f64::INFINITY)).unwrap();
        assert_eq!(clean.delta, 0.0);
        assert_eq!(clean.theorem2_bound, 0.0);
    }

    #[test]
    fn runs_are_deterministic() {
        let a = run_noisy_demo(&small(5, 10.0)).unwrap();
        let b = run_noisy_demo(&small(5, 10.0)).unwrap();
        assert_eq!(a.nmse, b.nmse);
        assert_eq!(a.table, b.table);
    }
}
