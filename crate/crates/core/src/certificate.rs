//! Numerical verifiers for the dual-certificate argument on small instances:
//! the tangent space of the enhanced matrix, the Hankel sampling operators,
//! the concentration of the sampled operator on the tangent space and the
//! golfing construction of a certificate.
//!
//! Operators act on `rows × cols` matrices. Where an explicit matrix is needed
//! it is built over the unit-cell basis, which is orthonormal for the
//! Frobenius inner product, so operator norms are plain spectral norms.

use faer::{Mat, Side};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::DataArray;
use crate::error::{invalid, Error, Result};
use crate::hankel::{enhance, CMat, EnhancementMap};
use crate::incoherence::signal_frames;
use crate::model::rng_from_seed;

/// Column frames `U`, `V` of the enhanced matrix's compact SVD.
#[derive(Clone, Debug)]
pub struct TangentSpace {
    u: CMat,
    v: CMat,
}

fn orthonormality_error(f: &CMat) -> f64 {
    let g = f.adjoint() * f;
    let mut dev = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[(i, j)] - target).norm());
        }
    }
    dev
}

impl TangentSpace {
    pub fn new(u: CMat, v: CMat) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return invalid("U and V must have the same number of columns");
        }
        for (f, name) in [(&u, "U"), (&v, "V")] {
            let dev = orthonormality_error(f);
            if dev > 1e-12 {
                return invalid(format!("{name} is not orthonormal (deviation {dev:.3e})"));
            }
        }
        Ok(Self { u, v })
    }

    /// Frames of `enhance(data)` at its numerical rank.
    pub fn from_data(data: &DataArray, map: &EnhancementMap) -> Result<Self> {
        let f = signal_frames(data, map)?;
        Self::new(f.u, f.v)
    }

    pub fn u(&self) -> &CMat {
        &self.u
    }

    pub fn v(&self) -> &CMat {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    fn check(&self, m: &CMat) -> Result<()> {
        if m.nrows() != self.u.nrows() || m.ncols() != self.v.nrows() {
            return invalid(format!(
                "matrix is {}x{}, tangent space lives in {}x{}",
                m.nrows(),
                m.ncols(),
                self.u.nrows(),
                self.v.nrows()
            ));
        }
        Ok(())
    }

    /// `P_T(M) = UU*M + MVV* − UU*MVV*`.
    pub fn project(&self, m: &CMat) -> Result<CMat> {
        self.check(m)?;
        if self.rank() == 0 {
            return Ok(Mat::zeros(m.nrows(), m.ncols()));
        }
        let (u, v) = (&self.u, &self.v);
        let left = u * (u.adjoint() * m);
        let mv = m * v;
        // UU*M + (I − UU*) M VV*
        let right = (&mv - u * (u.adjoint() * &mv)) * v.adjoint();
        Ok(left + right)
    }

    /// `P_T⊥(M) = M − P_T(M)`.
    pub fn project_perp(&self, m: &CMat) -> Result<CMat> {
        Ok(m - self.project(m)?)
    }

    /// `UV*`.
    pub fn sign_matrix(&self) -> CMat {
        &self.u * self.v.adjoint()
    }
}

/// Multiplicity of every data index in a sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleCounts {
    counts: Vec<usize>,
}

impl SampleCounts {
    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut counts = vec![0; len];
        for &i in indices {
            if i >= len {
                return invalid(format!("index {i} outside {len} entries"));
            }
            counts[i] += 1;
        }
        Ok(Self { counts })
    }

    /// Every index exactly once.
    pub fn full(len: usize) -> Self {
        Self {
            counts: vec![1; len],
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Number of draws, counted with multiplicity.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn distinct_len(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Same support with multiplicity one.
    pub fn distinct(&self) -> Self {
        Self {
            counts: self.counts.iter().map(|&c| c.min(1)).collect(),
        }
    }

    /// Support of the union of several samples.
    pub fn union<'a>(len: usize, parts: impl IntoIterator<Item = &'a SampleCounts>) -> Self {
        let mut counts = vec![0; len];
        for p in parts {
            for (c, &x) in counts.iter_mut().zip(&p.counts) {
                *c = (*c).max(x.min(1));
            }
        }
        Self { counts }
    }
}

/// `m` independent uniform draws from `0..len`.
pub fn sample_with_replacement(len: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if len == 0 {
        return invalid("cannot sample from an empty index set");
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..m).map(|_| rng.random_range(0..len)).collect())
}

/// `Σ_a w_a A_a ⟨A_a, M⟩`: every group is replaced by `w_a` times its mean.
fn weighted_group_projection(m: &CMat, weights: &[f64], map: &EnhancementMap) -> Result<CMat> {
    let mut sums = map.group_sums(m)?;
    for ((s, &w), &mult) in sums.iter_mut().zip(weights).zip(map.mults()) {
        *s *= w / mult as f64;
    }
    enhance(&DataArray::from_vec(map.dims(), sums)?, map)
}

fn check_counts(counts: &SampleCounts, map: &EnhancementMap) -> Result<()> {
    if counts.counts.len() != map.data_len() {
        return invalid(format!(
            "sample covers {} entries, the map has {}",
            counts.counts.len(),
            map.data_len()
        ));
    }
    Ok(())
}

/// `A(M)`: orthogonal projection onto Hankel-structured matrices.
pub fn apply_full(m: &CMat, map: &EnhancementMap) -> Result<CMat> {
    weighted_group_projection(m, &vec![1.0; map.data_len()], map)
}

/// `A^⊥(M) = M − A(M)`.
pub fn apply_perp(m: &CMat, map: &EnhancementMap) -> Result<CMat> {
    Ok(m - apply_full(m, map)?)
}

/// `A_Ω(M) = Σ_i A_{z_i} ⟨A_{z_i}, M⟩`, repeated draws counted each time.
pub fn apply_sampled(m: &CMat, counts: &SampleCounts, map: &EnhancementMap) -> Result<CMat> {
    check_counts(counts, map)?;
    let w: Vec<f64> = counts.counts.iter().map(|&c| c as f64).collect();
    weighted_group_projection(m, &w, map)
}

/// `A'_Ω(M)`: like [`apply_sampled`] but over distinct indices only.
pub fn apply_sampled_distinct(
    m: &CMat,
    counts: &SampleCounts,
    map: &EnhancementMap,
) -> Result<CMat> {
    apply_sampled(m, &counts.distinct(), map)
}

fn scaled(m: &CMat, s: f64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

/// Matrix of a linear map on `rows × cols` matrices over the unit-cell basis
/// (cells in column-major order).
pub fn operator_matrix(
    rows: usize,
    cols: usize,
    op: impl Fn(&CMat) -> Result<CMat>,
) -> Result<CMat> {
    let d = rows * cols;
    let mut out = Mat::<Complex64>::zeros(d, d);
    let mut e = Mat::<Complex64>::zeros(rows, cols);
    for c in 0..d {
        let (i, j) = (c % rows, c / rows);
        e[(i, j)] = Complex64::new(1.0, 0.0);
        let img = op(&e)?;
        e[(i, j)] = Complex64::new(0.0, 0.0);
        for jj in 0..cols {
            for ii in 0..rows {
                out[(jj * rows + ii, c)] = img[(ii, jj)];
            }
        }
    }
    Ok(out)
}

/// Spectral norm of a Hermitian matrix.
fn hermitian_norm(h: &CMat) -> Result<f64> {
    let sym = Mat::from_fn(h.nrows(), h.ncols(), |i, j| {
        (h[(i, j)] + h[(j, i)].conj()) * 0.5
    });
    let eig = sym
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigen-solver failed: {e:?}")))?;
    Ok(eig.into_iter().fold(0.0, |a: f64, x| a.max(x.abs())))
}

/// How the concentration norm is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationOptions {
    /// Largest enhanced-matrix cell count for which the operator is built.
    pub cell_cap: usize,
    /// Power-iteration steps used above the cap; `None` makes the cap an error.
    pub power_iters: Option<usize>,
    pub seed: u64,
}

impl Default for ConcentrationOptions {
    fn default() -> Self {
        Self {
            cell_cap: 4096,
            power_iters: None,
            seed: 0,
        }
    }
}

/// `‖s · P_T A_Ω P_T − P_T A P_T‖` for a sampling weight `s`.
fn deviation_norm(
    counts: &SampleCounts,
    scale: f64,
    tangent: &TangentSpace,
    map: &EnhancementMap,
    opts: &ConcentrationOptions,
) -> Result<f64> {
    check_counts(counts, map)?;
    if tangent.u.nrows() != map.rows() || tangent.v.nrows() != map.cols() {
        return invalid("tangent space does not match the enhanced shape");
    }
    if tangent.rank() == 0 {
        return Ok(0.0);
    }
    let op = |m: &CMat| -> Result<CMat> {
        let pm = tangent.project(m)?;
        let sampled = apply_sampled(&pm, counts, map)?;
        let full = apply_full(&pm, map)?;
        tangent.project(&(scaled(&sampled, scale) - full))
    };
    let (rows, cols) = (map.rows(), map.cols());
    if rows * cols <= opts.cell_cap {
        return hermitian_norm(&operator_matrix(rows, cols, op)?);
    }
    let Some(iters) = opts.power_iters else {
        return invalid(format!(
            "{} cells exceed the cap {}; enable power iteration",
            rows * cols,
            opts.cell_cap
        ));
    };
    let mut rng = rng_from_seed(opts.seed);
    let mut x = Mat::from_fn(rows, cols, |_, _| {
        Complex64::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        )
    });
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let n = x.norm_l2();
        if n == 0.0 {
            return Ok(0.0);
        }
        x = op(&scaled(&x, 1.0 / n))?;
        est = x.norm_l2();
    }
    Ok(est)
}

/// `‖(N/m) P_T A_Ω P_T − P_T A P_T‖` with `m` the number of draws.
pub fn concentration_norm(
    counts: &SampleCounts,
    tangent: &TangentSpace,
    map: &EnhancementMap,
    opts: &ConcentrationOptions,
) -> Result<f64> {
    let m = counts.total();
    if m == 0 {
        return invalid("the sample is empty");
    }
    let scale = map.data_len() as f64 / m as f64;
    deviation_norm(counts, scale, tangent, map, opts)
}

/// True when the concentration norm is at most 1/2.
pub fn certificate_gate(
    counts: &SampleCounts,
    tangent: &TangentSpace,
    map: &EnhancementMap,
    opts: &ConcentrationOptions,
) -> Result<bool> {
    Ok(concentration_norm(counts, tangent, map, opts)? <= 0.5)
}

/// Distribution of the golfing batches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchLaw {
    /// Every index joins each batch independently with probability `q`.
    #[default]
    Bernoulli,
    /// Each batch is `⌈m / j0⌉` uniform draws with replacement.
    WithReplacement,
}

#[derive(Clone, Debug)]
pub struct GolfingPlan {
    pub epsilon: f64,
    pub j0: usize,
    pub rho: f64,
    pub q: f64,
    pub law: BatchLaw,
    pub batches: Vec<SampleCounts>,
}

/// `⌈3 log_{1/ε} N⌉`, guarded against round-off at exact powers.
pub fn golfing_rounds(n: usize, epsilon: f64) -> usize {
    let x = 3.0 * (n as f64).ln() / (1.0 / epsilon).ln();
    ((x - 1e-9).ceil() as usize).max(1)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0 / 3.0) {
        return invalid(format!("epsilon must lie in (0, 1/3), got {epsilon}"));
    }
    Ok(())
}

impl GolfingPlan {
    /// Draws `j0` batches whose union matches a sample of density `m / N`.
    pub fn new(n: usize, m: usize, epsilon: f64, law: BatchLaw, seed: u64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if n == 0 || m == 0 || m > n {
            return invalid(format!("need 1 ≤ m ≤ N, got m = {m}, N = {n}"));
        }
        let j0 = golfing_rounds(n, epsilon);
        let rho = m as f64 / n as f64;
        let q = 1.0 - (1.0 - rho).powf(1.0 / j0 as f64);
        let mut rng = rng_from_seed(seed);
        let batches = (0..j0)
            .map(|_| match law {
                BatchLaw::Bernoulli => {
                    let counts = (0..n)
                        .map(|_| usize::from(rng.random::<f64>() < q))
                        .collect();
                    SampleCounts { counts }
                }
                BatchLaw::WithReplacement => {
                    let draws: Vec<usize> = (0..m.div_ceil(j0))
                        .map(|_| rng.random_range(0..n))
                        .collect();
                    SampleCounts::from_indices(n, &draws).expect("draws are in range")
                }
            })
            .collect();
        Ok(Self {
            epsilon,
            j0,
            rho,
            q,
            law,
            batches,
        })
    }

    /// Every batch is the full index set (`q = 1`).
    pub fn full(n: usize, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let j0 = golfing_rounds(n, epsilon);
        Ok(Self {
            epsilon,
            j0,
            rho: 1.0,
            q: 1.0,
            law: BatchLaw::Bernoulli,
            batches: vec![SampleCounts::full(n); j0],
        })
    }

    /// Weight applied to a batch: `1/q` for Bernoulli batches, `N / |batch|`
    /// for draws with replacement.
    fn batch_scale(&self, batch: &SampleCounts) -> f64 {
        match self.law {
            BatchLaw::Bernoulli => 1.0 / self.q,
            BatchLaw::WithReplacement => batch.counts.len() as f64 / batch.total().max(1) as f64,
        }
    }

    pub fn union(&self) -> SampleCounts {
        let n = self.batches.first().map_or(0, |b| b.counts.len());
        SampleCounts::union(n, &self.batches)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GolfingReport {
    pub epsilon: f64,
    pub j0: usize,
    pub rho: f64,
    pub q: f64,
    pub law: BatchLaw,
    pub batch_sizes: Vec<usize>,
    pub union_size: usize,
    /// `‖P_T(F_i)‖_F / ‖P_T(F_{i−1})‖_F` per batch.
    pub contraction: Vec<f64>,
    /// Per-batch deviation `‖s_i P_T A_{Ω_i} P_T − P_T A P_T‖`, when computed.
    pub batch_concentration: Vec<Option<f64>>,
    /// `‖(A − A'_Ω)(UV* + W)‖_F`.
    pub condition_i: f64,
    /// `‖P_T(W)‖_F`.
    pub condition_ii: f64,
    pub threshold_ii: f64,
    /// `‖P_T⊥(W)‖`.
    pub condition_iii: f64,
    pub threshold_iii: f64,
    pub holds_i: bool,
    pub holds_ii: bool,
    pub holds_iii: bool,
}

impl GolfingReport {
    pub fn all_hold(&self) -> bool {
        self.holds_i && self.holds_ii && self.holds_iii
    }
}

/// Tolerance used to call condition (i) satisfied.
pub const CONDITION_I_TOL: f64 = 1e-9;

fn spectral_norm(m: &CMat) -> Result<f64> {
    let s = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// Runs the golfing recursion
/// `B_i = B_{i−1} + (s_i A_{Ω_i} + A^⊥) P_T(UV* − B_{i−1})`
/// and returns `W = B_{j0} − UV*` with the three certificate quantities.
///
/// Per-batch deviations are evaluated when the operator fits `opts`.
pub fn golfing_certificate(
    plan: &GolfingPlan,
    tangent: &TangentSpace,
    map: &EnhancementMap,
    opts: &ConcentrationOptions,
) -> Result<(CMat, GolfingReport)> {
    let n = map.data_len();
    if plan.batches.is_empty() {
        return invalid("the plan has no batches");
    }
    for b in &plan.batches {
        check_counts(b, map)?;
    }
    let uv = tangent.sign_matrix();
    let mut b_acc = Mat::<Complex64>::zeros(map.rows(), map.cols());
    let mut residual = tangent.project(&uv)?;
    let mut contraction = Vec::with_capacity(plan.batches.len());
    let mut batch_concentration = Vec::with_capacity(plan.batches.len());
    let materialize = map.rows() * map.cols() <= opts.cell_cap;
    for batch in &plan.batches {
        let scale = plan.batch_scale(batch);
        let step =
            scaled(&apply_sampled(&residual, batch, map)?, scale) + apply_perp(&residual, map)?;
        b_acc += step;
        let next = tangent.project(&(&uv - &b_acc))?;
        let before = residual.norm_l2();
        contraction.push(if before > 0.0 {
            next.norm_l2() / before
        } else {
            0.0
        });
        batch_concentration.push(if materialize {
            Some(deviation_norm(batch, scale, tangent, map, opts)?)
        } else {
            None
        });
        residual = next;
    }
    let w = &b_acc - &uv;
    let union = plan.union();
    let total = &uv + &w;
    let gap = apply_full(&total, map)? - apply_sampled_distinct(&total, &union, map)?;
    let condition_i = gap.norm_l2();
    let condition_ii = tangent.project(&w)?.norm_l2();
    let condition_iii = spectral_norm(&tangent.project_perp(&w)?)?;
    let threshold_ii = 1.0 / (2.0 * (n as f64).powi(2));
    let threshold_iii = 0.5;
    let report = GolfingReport {
        epsilon: plan.epsilon,
        j0: plan.j0,
        rho: plan.rho,
        q: plan.q,
        law: plan.law,
        batch_sizes: plan
            .batches
            .iter()
            .map(SampleCounts::distinct_len)
            .collect(),
        union_size: union.distinct_len(),
        contraction,
        batch_concentration,
        condition_i,
        condition_ii,
        threshold_ii,
        condition_iii,
        threshold_iii,
        holds_i: condition_i <= CONDITION_I_TOL,
        holds_ii: condition_ii <= threshold_ii,
        holds_iii: condition_iii <= threshold_iii,
    };
    Ok((w, report))
}
