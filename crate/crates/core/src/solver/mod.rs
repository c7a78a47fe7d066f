//! Singular value thresholding over the enhanced form.
//!
//! Starting from `M_0 = enhance(P_Ω(X^o))` the solver alternates
//!
//! 1. `Q_t = D_τ(M_t)`: soft-threshold the singular values by `τ_t`;
//! 2. `M_{t+1} = H(Q_t)`: average every Hankel group, then make the observed
//!    groups consistent with the data.
//!
//! Every iterate is Hankel-structured, so the state is kept as a data array
//! and `‖M_{t+1} − M_t‖_F` is computed from the ω-weighted data norm. With a
//! rank cap the SVD is replaced by warm-started subspace iteration on the
//! FFT operator and the enhanced matrix is never formed.

mod truncated;

pub use truncated::{subspace_svd, PartialSvd};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::DataArray;
use crate::error::{invalid, Error, Result};
use crate::hankel::{
    build_map, enhance, weighted_norm, CMat, EnhancementMap, ImplicitEnhanced, PencilShape,
};
use crate::model::ObservationSet;

/// Rule producing the soft-threshold level `τ_t` at iteration `t ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Schedule {
    /// `τ_t = scale · σ_max(M_t) / ⌈t / period⌉`.
    StepDecay { scale: f64, period: usize },
    /// `τ_t = scale · σ_max(M_t) · ratio^(t−1)`.
    Geometric { scale: f64, ratio: f64 },
    /// `τ_t = tau`.
    Constant { tau: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::StepDecay {
            scale: 0.1,
            period: 10,
        }
    }
}

impl Schedule {
    fn validate(&self) -> Result<()> {
        match *self {
            Schedule::StepDecay { scale, period } => {
                if !(scale >= 0.0) || period == 0 {
                    return invalid("step-decay schedule needs scale ≥ 0 and period ≥ 1");
                }
            }
            Schedule::Geometric { scale, ratio } => {
                if !(scale >= 0.0) || !(ratio > 0.0 && ratio <= 1.0) {
                    return invalid("geometric schedule needs scale ≥ 0 and ratio in (0, 1]");
                }
            }
            Schedule::Constant { tau } => {
                if !(tau >= 0.0) || !tau.is_finite() {
                    return invalid("constant schedule needs a finite tau ≥ 0");
                }
            }
        }
        Ok(())
    }
}

/// Threshold for iteration `t` (1-based) given `σ_max(M_t)`.
pub fn threshold(schedule: &Schedule, t: usize, sigma_max: f64) -> f64 {
    let t = t.max(1);
    match *schedule {
        Schedule::StepDecay { scale, period } => scale * sigma_max / t.div_ceil(period) as f64,
        Schedule::Geometric { scale, ratio } => scale * sigma_max * ratio.powi((t - 1) as i32),
        Schedule::Constant { tau } => tau,
    }
}

/// How observed groups are made consistent with the data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Observed entries are reset to the observed values.
    #[default]
    Equality,
    /// Observed entries are projected onto `‖P_Ω(M − X^o)‖_F ≤ δ`.
    DeltaBall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once `‖M_{t+1} − M_t‖_F / ‖M_t‖_F ≤ rel_tol`.
    pub rel_tol: f64,
    pub schedule: Schedule,
    pub noise_mode: NoiseMode,
    pub delta: f64,
    /// Budget for the truncated SVD; `None` uses a dense SVD.
    pub rank_cap: Option<usize>,
    pub power_iters: usize,
    pub oversample: usize,
    /// Seeds the random start of the truncated SVD.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-6,
            schedule: Schedule::default(),
            noise_mode: NoiseMode::Equality,
            delta: 0.0,
            rank_cap: None,
            power_iters: 2,
            oversample: 10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.rel_tol > 0.0) {
            return invalid("rel_tol must be positive");
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return invalid("delta must be finite and ≥ 0");
        }
        if self.rank_cap == Some(0) {
            return invalid("rank_cap must be at least 1");
        }
        self.schedule.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub tau: f64,
    pub rank: usize,
    pub rel_change: f64,
}

#[derive(Clone, Debug)]
pub struct RecoveryResult {
    pub data_hat: DataArray,
    pub nmse: Option<f64>,
    pub iters: usize,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

/// Soft-thresholded SVD `U diag((σ_i − τ)_+) V*`.
pub fn svd_shrink(m: &CMat, tau: f64) -> Result<CMat> {
    if !(tau >= 0.0) {
        return invalid(format!("threshold must be ≥ 0, got {tau}"));
    }
    let (u, s, v) = thin_svd(m)?;
    let keep = s.iter().take_while(|&&x| x > tau).count();
    Ok(low_rank_product(&u, &s[..keep], tau, &v))
}

fn thin_svd(m: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite singular values".into()));
    }
    Ok((svd.U().to_owned(), s, svd.V().to_owned()))
}

/// `Σ_{i<keep} (s_i − τ) u_i v_i*` with `keep = s.len()`.
fn low_rank_product(u: &CMat, s: &[f64], tau: f64, v: &CMat) -> CMat {
    let keep = s.len();
    let mut us = u.subcols(0, keep).to_owned();
    for (j, &sj) in s.iter().enumerate() {
        let w = sj - tau;
        for x in us.col_mut(j).iter_mut() {
            *x *= w;
        }
    }
    us * v.subcols(0, keep).adjoint()
}

/// Sum of singular values.
pub fn nuclear_norm(m: &CMat) -> Result<f64> {
    let s = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    Ok(s.iter().sum())
}

/// Right-hand side of the stability bound for the noisy program:
/// `(2√N + 8N + 8√2 N²/m) δ` with `N = Π n_j`.
pub fn theorem2_bound(dims: &[usize], m: usize, delta: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    if m == 0 {
        return f64::INFINITY;
    }
    let n = dims.iter().product::<usize>() as f64;
    (2.0 * n.sqrt() + 8.0 * n + 8.0 * std::f64::consts::SQRT_2 * n * n / m as f64) * delta
}

/// Applies the observation constraint to group means `z` in place.
fn enforce_observations(z: &mut [Complex64], obs: &ObservationSet, mode: NoiseMode, delta: f64) {
    match mode {
        NoiseMode::DeltaBall if delta > 0.0 => {
            let resid: f64 = obs
                .indices()
                .iter()
                .zip(obs.values())
                .map(|(&i, &v)| (z[i] - v).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if resid > delta {
                let scale = delta / resid;
                for (&i, &v) in obs.indices().iter().zip(obs.values()) {
                    z[i] = v + (z[i] - v) * scale;
                }
            }
        }
        _ => {
            for (&i, &v) in obs.indices().iter().zip(obs.values()) {
                z[i] = v;
            }
        }
    }
}

enum Backend {
    Dense,
    Truncated {
        op: ImplicitEnhanced,
        cap: usize,
        rank: usize,
        warm: Option<CMat>,
        rng: rand_chacha::ChaCha8Rng,
    },
}

impl Backend {
    /// One shrinkage step: returns group sums of `D_τ(M)` and `(τ, rank)`.
    fn shrink_step(
        &mut self,
        z: &DataArray,
        map: &EnhancementMap,
        cfg: &SolverConfig,
        t: usize,
    ) -> Result<(Vec<Complex64>, f64, usize)> {
        match self {
            Backend::Dense => {
                let (u, s, v) = thin_svd(&enhance(z, map)?)?;
                let tau = threshold(&cfg.schedule, t, s.first().copied().unwrap_or(0.0));
                let keep = s.iter().take_while(|&&x| x > tau).count();
                let q = low_rank_product(&u, &s[..keep], tau, &v);
                Ok((map.group_sums(&q)?, tau, keep))
            }
            Backend::Truncated {
                op,
                cap,
                rank,
                warm,
                rng,
            } => {
                op.set_data(z.values());
                let limit = op.rows().min(op.cols());
                let mut target = (*rank).clamp(1, *cap);
                loop {
                    let block = (target + cfg.oversample).min(limit);
                    let p = subspace_svd(
                        op,
                        block,
                        cfg.power_iters,
                        warm.as_ref().map(|w| w.as_ref()),
                        rng,
                    )?;
                    let tau = threshold(&cfg.schedule, t, p.s.first().copied().unwrap_or(0.0));
                    let trusted = target.min(p.s.len());
                    let keep = p.s[..trusted].iter().take_while(|&&x| x > tau).count();
                    // Every trusted triplet survives: the retained rank may be
                    // larger than the block, so grow it while under budget.
                    if keep == trusted && target < *cap && block < limit {
                        target = (target + (target / 2).max(cfg.oversample)).min(*cap);
                        *warm = Some(p.v);
                        continue;
                    }
                    let shrunk: Vec<f64> = p.s[..keep].iter().map(|x| x - tau).collect();
                    let sums = op.low_rank_group_sums(
                        p.u.subcols(0, keep),
                        &shrunk,
                        p.v.subcols(0, keep),
                    )?;
                    *rank = keep.max(1);
                    *warm = Some(p.v);
                    return Ok((sums, tau, keep));
                }
            }
        }
    }
}

/// Runs singular value thresholding on the enhanced form of `obs`.
pub fn emac_svt(
    obs: &ObservationSet,
    pencil: &PencilShape,
    cfg: &SolverConfig,
    truth: Option<&DataArray>,
) -> Result<RecoveryResult> {
    emac_svt_with_map(obs, &build_map(pencil), cfg, truth)
}

pub fn emac_svt_with_map(
    obs: &ObservationSet,
    map: &EnhancementMap,
    cfg: &SolverConfig,
    truth: Option<&DataArray>,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    if obs.dims() != map.dims() {
        return invalid(format!(
            "observation dims {:?} do not match pencil dims {:?}",
            obs.dims(),
            map.dims()
        ));
    }
    if obs.is_empty() {
        return invalid("at least one observation is required");
    }
    if obs.values().iter().any(|v| !v.is_finite()) {
        return invalid("observed values must be finite");
    }
    if let Some(t) = truth {
        if t.dims() != map.dims() {
            return invalid("ground truth shape does not match");
        }
    }

    let mut z = obs.zero_filled();
    let mut backend = match cfg.rank_cap {
        None => Backend::Dense,
        Some(cap) => Backend::Truncated {
            op: ImplicitEnhanced::new(&z, map)?,
            cap,
            rank: cap.min(10),
            warm: None,
            rng: truncated::solver_rng(cfg.seed),
        },
    };

    let mut history = Vec::new();
    let mut converged = false;
    for t in 1..=cfg.max_iters {
        let (mut sums, tau, rank) = backend.shrink_step(&z, map, cfg, t)?;
        for (s, &w) in sums.iter_mut().zip(map.mults()) {
            *s /= w as f64;
        }
        enforce_observations(&mut sums, obs, cfg.noise_mode, cfg.delta);
        if sums.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite iterate at step {t}")));
        }
        let diff: Vec<Complex64> = sums.iter().zip(z.values()).map(|(a, b)| a - b).collect();
        let before = weighted_norm(z.values(), map);
        let delta_norm = weighted_norm(&diff, map);
        let rel_change = if before > 0.0 {
            delta_norm / before
        } else if delta_norm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        z = DataArray::from_vec(map.dims(), sums)?;
        history.push(IterationRecord {
            iter: t,
            tau,
            rank,
            rel_change,
        });
        if rel_change <= cfg.rel_tol {
            converged = true;
            break;
        }
    }

    let nmse = truth.map(|t| z.nmse(t)).transpose()?;
    Ok(RecoveryResult {
        iters: history.len(),
        data_hat: z,
        nmse,
        history,
        converged,
    })
}

/// Diagonal matrix helper used by tests and examples.
pub fn diag(values: &[f64]) -> CMat {
    Mat::from_fn(values.len(), values.len(), |i, j| {
        Complex64::new(if i == j { values[i] } else { 0.0 }, 0.0)
    })
}
