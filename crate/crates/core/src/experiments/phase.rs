use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentSpec;
use crate::error::{invalid, Result};
use crate::hankel::{build_map, EnhancementMap, PencilShape};
use crate::model::{derive_seed, sample_uniform, synthesize, ObservationSet, SpectralSignal};
use crate::solver::{emac_svt_with_map, SolverConfig};

/// Everything that defines one Monte Carlo trial.
#[derive(Clone, Debug)]
pub struct TrialSetup<'a> {
    pub map: &'a EnhancementMap,
    pub rank: usize,
    pub samples: usize,
    pub seed: u64,
    pub solver: &'a SolverConfig,
}

/// Minimum per-axis wrap-around separation of Monte Carlo frequencies.
pub fn mc_separation(dims: &[usize]) -> f64 {
    1.0 / (4.0 * *dims.iter().max().unwrap_or(&1) as f64)
}

/// Draws a signal and a uniform mask from `seed`, recovers, and returns the
/// NMSE. `samples = 0` is a failure by definition and returns `+∞`.
pub fn run_trial(setup: &TrialSetup<'_>) -> Result<f64> {
    let dims = setup.map.dims();
    if setup.samples == 0 {
        return Ok(f64::INFINITY);
    }
    let signal = SpectralSignal::random(
        dims,
        setup.rank,
        mc_separation(dims),
        derive_seed(setup.seed, &[0]),
    )?;
    let truth = synthesize(&signal);
    let mask = sample_uniform(dims, setup.samples, derive_seed(setup.seed, &[1]))?;
    let obs = ObservationSet::from_array(&truth, &mask)?;
    let cfg = SolverConfig {
        seed: derive_seed(setup.seed, &[2]),
        ..setup.solver.clone()
    };
    let res = emac_svt_with_map(&obs, setup.map, &cfg, Some(&truth))?;
    Ok(res.nmse.unwrap_or(f64::INFINITY))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub r: usize,
    pub m: usize,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
}

/// Success counts for every `(r, m)` cell of the grid, in grid order.
///
/// Trial `t` of cell `(r, m)` uses the seed `derive_seed(spec.seed, [r, m, t])`,
/// so the result does not depend on thread scheduling.
pub fn run_phase_transition(spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let pencil: PencilShape = spec.pencil_shape()?;
    let map = build_map(&pencil);
    let solver = spec.solver_config();
    let cells: Vec<(usize, usize)> = spec
        .grid
        .ranks
        .iter()
        .flat_map(|&r| spec.grid.samples.iter().map(move |&m| (r, m)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<Result<bool>> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (r, m) = cells[c];
            let setup = TrialSetup {
                map: &map,
                rank: r,
                samples: m,
                seed: derive_seed(spec.seed, &[r as u64, m as u64, t as u64]),
                solver: &solver,
            };
            Ok(run_trial(&setup)? <= spec.success_tol)
        })
        .collect();
    let mut successes = vec![0usize; cells.len()];
    for (&(c, _), ok) in jobs.iter().zip(outcomes) {
        if ok? {
            successes[c] += 1;
        }
    }
    Ok(cells
        .iter()
        .zip(successes)
        .map(|(&(r, m), s)| CellResult {
            r,
            m,
            successes: s,
            trials: spec.trials,
            success_rate: s as f64 / spec.trials as f64,
        })
        .collect())
}

/// Least-squares line `y = intercept + slope·x`; returns
/// `(intercept, slope, max |residual|)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return invalid("a line fit needs at least two points");
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("a line fit needs two distinct abscissae");
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let worst = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok((intercept, slope, worst))
}

/// Where the success rate first reaches `level` for every rank, and how
/// close those points are to a line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionSummary {
    pub level: f64,
    /// `(r, smallest m with rate ≥ level)`; `None` when no cell reaches it.
    pub minimal_m: Vec<(usize, Option<usize>)>,
    pub non_decreasing: bool,
    pub intercept: Option<f64>,
    pub slope: Option<f64>,
    pub max_residual: Option<f64>,
    /// `max(m) − min(m)` over the grid.
    pub m_range: usize,
}

impl TransitionSummary {
    /// Largest fit residual as a fraction of the sample-size range.
    pub fn relative_residual(&self) -> Option<f64> {
        self.max_residual.map(|r| r / self.m_range.max(1) as f64)
    }
}

pub fn transition_summary(cells: &[CellResult], level: f64) -> Result<TransitionSummary> {
    let mut ranks: Vec<usize> = cells.iter().map(|c| c.r).collect();
    ranks.sort_unstable();
    ranks.dedup();
    let minimal_m: Vec<(usize, Option<usize>)> = ranks
        .iter()
        .map(|&r| {
            let m = cells
                .iter()
                .filter(|c| c.r == r && c.success_rate >= level)
                .map(|c| c.m)
                .min();
            (r, m)
        })
        .collect();
    let found: Vec<(f64, f64)> = minimal_m
        .iter()
        .filter_map(|&(r, m)| m.map(|m| (r as f64, m as f64)))
        .collect();
    // A rank that never reaches the level counts as "above the grid".
    let non_decreasing = minimal_m.windows(2).all(|w| match (w[0].1, w[1].1) {
        (Some(a), Some(b)) => a <= b,
        (_, None) => true,
        (None, Some(_)) => false,
    });
    let fit = linear_fit(&found).ok();
    let ms = cells.iter().map(|c| c.m);
    let m_range = ms.clone().max().unwrap_or(0) - ms.min().unwrap_or(0);
    Ok(TransitionSummary {
        level,
        minimal_m,
        non_decreasing,
        intercept: fit.map(|f| f.0),
        slope: fit.map(|f| f.1),
        max_residual: fit.map(|f| f.2),
        m_range,
    })
}
