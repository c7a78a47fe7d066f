//! Incoherence measures of a spectrally sparse signal with respect to the
//! Hankel observation basis, and the sample-size conditions they feed.
//!
//! Every formula is written for `K` axes with `N = Π n_j` in place of the
//! two-axis products.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::DataArray;
use crate::error::{invalid, Error, Result};
use crate::hankel::{enhance, CMat, EnhancementMap, PencilShape};
use crate::model::{synthesize, wrap_distance, SpectralSignal};

/// Relative threshold `σ_i / σ_1` defining the numerical rank of `X_e`.
pub const RANK_TOL: f64 = 1e-10;

/// Smallest Gram singular value treated as nonzero.
pub const SINGULAR_GRAM_TOL: f64 = 1e-12;

/// Normalized Dirichlet factor `(1 − w^k) / (k (1 − w))` with
/// `w = exp(j2π·diff)`, equal to 1 when `diff ≡ 0 (mod 1)`.
pub fn dirichlet_factor(diff: f64, k: usize) -> Complex64 {
    if wrap_distance(diff, 0.0) == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let phase = |x: f64| Complex64::from_polar(1.0, std::f64::consts::TAU * x.rem_euclid(1.0));
    let one = Complex64::new(1.0, 0.0);
    let w = phase(diff);
    let wk = phase((diff * k as f64).rem_euclid(1.0));
    (one - wk) / ((one - w) * k as f64)
}

fn check_freqs(freqs: &[Vec<f64>], pencil: &PencilShape) -> Result<()> {
    let ndim = pencil.dims().len();
    if freqs.is_empty() {
        return invalid("at least one frequency is required");
    }
    for (i, f) in freqs.iter().enumerate() {
        if f.len() != ndim {
            return invalid(format!(
                "frequency {i} has {} coordinates, expected {ndim}",
                f.len()
            ));
        }
        for (j, g) in freqs[..i].iter().enumerate() {
            if f.iter().zip(g).all(|(a, b)| wrap_distance(*a, *b) == 0.0) {
                return invalid(format!("frequencies {j} and {i} coincide"));
            }
        }
    }
    Ok(())
}

fn gram_with(freqs: &[Vec<f64>], lengths: &[usize]) -> CMat {
    let r = freqs.len();
    Mat::from_fn(r, r, |i, j| {
        if i == j {
            return Complex64::new(1.0, 0.0);
        }
        lengths
            .iter()
            .enumerate()
            .map(|(ax, &k)| dirichlet_factor(freqs[j][ax] - freqs[i][ax], k))
            .product()
    })
}

/// Dirichlet-kernel Grams `(G_L, G_R)` of the frequency set, using the row
/// pencils for `G_L` and the column extents `n_j − k_j + 1` for `G_R`.
pub fn gram_matrices(freqs: &[Vec<f64>], pencil: &PencilShape) -> Result<(CMat, CMat)> {
    check_freqs(freqs, pencil)?;
    Ok((
        gram_with(freqs, pencil.pencils()),
        gram_with(freqs, &pencil.col_extents()),
    ))
}

/// First incoherence measure and the Gram spectra behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mu1 {
    /// `1 / min(σ_min(G_L), σ_min(G_R))`; `None` when a Gram is singular.
    pub value: Option<f64>,
    pub sigma_min_left: f64,
    pub sigma_min_right: f64,
    pub singular: bool,
}

fn sigma_min(m: &CMat) -> Result<f64> {
    let s = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("Gram SVD failed: {e:?}")))?;
    Ok(s.into_iter().fold(f64::INFINITY, f64::min))
}

pub fn mu1(freqs: &[Vec<f64>], pencil: &PencilShape) -> Result<Mu1> {
    let (gl, gr) = gram_matrices(freqs, pencil)?;
    mu1_from_grams(&gl, &gr)
}

fn mu1_from_grams(gl: &CMat, gr: &CMat) -> Result<Mu1> {
    let sigma_min_left = sigma_min(gl)?;
    let sigma_min_right = sigma_min(gr)?;
    let low = sigma_min_left.min(sigma_min_right);
    let singular = low <= SINGULAR_GRAM_TOL;
    Ok(Mu1 {
        value: (!singular).then(|| 1.0 / low),
        sigma_min_left,
        sigma_min_right,
        singular,
    })
}

/// Leading singular frames of an enhanced matrix at its numerical rank.
#[derive(Clone, Debug)]
pub struct Frames {
    pub u: CMat,
    pub v: CMat,
    pub singular_values: Vec<f64>,
}

impl Frames {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

/// Compact SVD of `enhance(data)` truncated at `σ_i / σ_1 > RANK_TOL`.
pub fn signal_frames(data: &DataArray, map: &EnhancementMap) -> Result<Frames> {
    let xe = enhance(data, map)?;
    let svd = xe
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    let top = s.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return invalid("the signal is identically zero");
    }
    let rank = s.iter().take_while(|&&x| x > RANK_TOL * top).count();
    Ok(Frames {
        u: svd.U().subcols(0, rank).to_owned(),
        v: svd.V().subcols(0, rank).to_owned(),
        singular_values: s[..rank].to_vec(),
    })
}

fn check_frames(u: &CMat, v: &CMat, map: &EnhancementMap) -> Result<()> {
    if u.nrows() != map.rows() || v.nrows() != map.cols() {
        return invalid("frame shapes do not match the enhanced matrix");
    }
    if u.ncols() != v.ncols() || u.ncols() == 0 {
        return invalid("frames must have the same positive number of columns");
    }
    Ok(())
}

fn check_orthonormal(f: &CMat, name: &str) -> Result<()> {
    let g = f.adjoint() * f;
    let r = f.ncols();
    let dev = (0..r)
        .flat_map(|i| (0..r).map(move |j| (i, j)))
        .map(|(i, j)| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).norm())
        .fold(0.0, f64::max);
    if dev > 1e-8 {
        return invalid(format!("{name} is not orthonormal (deviation {dev:.3e})"));
    }
    Ok(())
}

/// `μ2 = (N² / r) · max_a |Σ_{Ω_e(a)} (UV*)|² / ω_a²`.
pub fn mu2(u: &CMat, v: &CMat, map: &EnhancementMap) -> Result<f64> {
    check_frames(u, v, map)?;
    let n = map.data_len() as f64;
    let sums = map.group_sums(&(u * v.adjoint()))?;
    let worst = sums
        .iter()
        .zip(map.mults())
        .map(|(s, &w)| s.norm_sqr() / (w * w) as f64)
        .fold(0.0, f64::max);
    Ok(n * n / u.ncols() as f64 * worst)
}

/// Per-group aggregates `S_a = Σ_{(α,β) ∈ Ω_e(a)} conj(u_α) v_βᵀ`, flattened.
///
/// The group sum of `U C V*` over `Ω_e(a)` is `Σ_ij C_ij conj(S_a)_ij`, so
/// every quantity of the form `⟨U U* A_b V V*, A_a⟩` reduces to an inner
/// product between two rows of this table.
fn group_kernels(u: &CMat, v: &CMat, map: &EnhancementMap) -> Vec<Vec<Complex64>> {
    let r = u.ncols();
    let mut table = vec![vec![Complex64::new(0.0, 0.0); r * r]; map.data_len()];
    for col in 0..map.cols() {
        for row in 0..map.rows() {
            let acc = &mut table[map.data_index(row, col)];
            for i in 0..r {
                let ui = u[(row, i)].conj();
                for j in 0..r {
                    acc[i * r + j] += ui * v[(col, j)];
                }
            }
        }
    }
    table
}

/// `μ3 = (N / r) · max_b Σ_a |⟨U U* A_b V V*, √ω_a A_a⟩|² / ω_b`.
pub fn mu3(u: &CMat, v: &CMat, map: &EnhancementMap) -> Result<f64> {
    check_frames(u, v, map)?;
    let table = group_kernels(u, v, map);
    let mults = map.mults();
    let worst = (0..table.len())
        .into_par_iter()
        .map(|b| {
            let sb = &table[b];
            let wb = mults[b] as f64;
            table
                .iter()
                .map(|sa| {
                    let ip: Complex64 = sa.iter().zip(sb).map(|(x, y)| x.conj() * y).sum();
                    ip.norm_sqr()
                })
                .sum::<f64>()
                / (wb * wb)
        })
        .reduce(|| 0.0, f64::max);
    Ok(map.data_len() as f64 / u.ncols() as f64 * worst)
}

/// `(N / (c_s r)) · max_a max(‖U* A_a‖_F², ‖A_a V‖_F²)`.
///
/// Each group meets every row and every column at most once, so
/// `‖U* A_a‖_F²` is the mean of `‖u_α‖²` over the group's rows.
pub fn mu1_hankel(u: &CMat, v: &CMat, map: &EnhancementMap) -> Result<f64> {
    check_frames(u, v, map)?;
    check_orthonormal(u, "U")?;
    check_orthonormal(v, "V")?;
    let row_energy: Vec<f64> = (0..u.nrows())
        .map(|i| (0..u.ncols()).map(|j| u[(i, j)].norm_sqr()).sum())
        .collect();
    let col_energy: Vec<f64> = (0..v.nrows())
        .map(|i| (0..v.ncols()).map(|j| v[(i, j)].norm_sqr()).sum())
        .collect();
    let mut left = vec![0.0; map.data_len()];
    let mut right = vec![0.0; map.data_len()];
    for col in 0..map.cols() {
        for row in 0..map.rows() {
            let a = map.data_index(row, col);
            left[a] += row_energy[row];
            right[a] += col_energy[col];
        }
    }
    let worst = left
        .iter()
        .zip(&right)
        .zip(map.mults())
        .map(|((l, r), &w)| l.max(*r) / w as f64)
        .fold(0.0, f64::max);
    let n = map.data_len() as f64;
    Ok(n / (map.pencil().c_s() * u.ncols() as f64) * worst)
}

pub fn c_s(pencil: &PencilShape) -> f64 {
    pencil.c_s()
}

/// `μ1² c_s² r`, the common upper bound on `μ2` and `μ3`.
pub fn lemma1_bound(mu1: f64, c_s: f64, r: usize) -> f64 {
    mu1 * mu1 * c_s * c_s * r as f64
}

/// Right-hand sides of the two sample-size conditions, evaluated with
/// `c_1 = 1` and the natural logarithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBounds {
    pub c1: f64,
    /// `c_1 max(μ1 c_s, μ2, μ3 c_s) r log² N`.
    pub first_rhs: Option<f64>,
    /// `c_1 μ1² c_s² r² log² N`.
    pub second_rhs: Option<f64>,
    pub m: usize,
    pub first_holds: bool,
    pub second_holds: bool,
}

pub fn theorem1_conditions(
    mu1: Option<f64>,
    mu2: f64,
    mu3: f64,
    c_s: f64,
    r: usize,
    n: usize,
    m: usize,
) -> SampleBounds {
    let c1 = 1.0;
    let log2 = (n as f64).ln().powi(2);
    let r = r as f64;
    let first_rhs = mu1.map(|mu1| c1 * (mu1 * c_s).max(mu2).max(mu3 * c_s) * r * log2);
    let second_rhs = mu1.map(|mu1| c1 * mu1 * mu1 * c_s * c_s * r * r * log2);
    let holds = |rhs: Option<f64>| rhs.is_some_and(|b| m as f64 > b);
    SampleBounds {
        c1,
        first_rhs,
        second_rhs,
        m,
        first_holds: holds(first_rhs),
        second_holds: holds(second_rhs),
    }
}

/// Complex matrix as nested `[re, im]` rows for JSON output.
pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

fn to_json_matrix(m: &CMat) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncoherenceReport {
    pub dims: Vec<usize>,
    pub pencils: Vec<usize>,
    pub rank: usize,
    pub mu1: Option<f64>,
    pub gram_singular: bool,
    pub sigma_min_left: f64,
    pub sigma_min_right: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu1_hankel: f64,
    pub c_s: f64,
    pub lemma1_bound: Option<f64>,
    pub gram_left: JsonMatrix,
    pub gram_right: JsonMatrix,
    pub sample_bounds: SampleBounds,
}

/// Relative slack allowed when comparing `μ2`, `μ3` with their bound.
pub const LEMMA1_REL_TOL: f64 = 1e-9;

impl IncoherenceReport {
    /// Whether `μ2` and `μ3` are within the `μ1` bound; `None` when the Gram
    /// matrices are singular.
    pub fn lemma1_holds(&self) -> Option<bool> {
        self.lemma1_bound.map(|b| {
            let limit = b * (1.0 + LEMMA1_REL_TOL);
            self.mu2 <= limit && self.mu3 <= limit
        })
    }
}

/// Evaluates every measure on the signal's enhanced matrix; `m` is the
/// sample size plugged into the sample-size conditions.
pub fn incoherence_report(
    signal: &SpectralSignal,
    pencil: &PencilShape,
    m: usize,
) -> Result<IncoherenceReport> {
    if signal.dims() != pencil.dims() {
        return invalid(format!(
            "signal dims {:?} do not match pencil dims {:?}",
            signal.dims(),
            pencil.dims()
        ));
    }
    let map = EnhancementMap::new(pencil.clone());
    let (gl, gr) = gram_matrices(signal.freqs(), pencil)?;
    let m1 = mu1_from_grams(&gl, &gr)?;
    let frames = signal_frames(&synthesize(signal), &map)?;
    let r = frames.rank();
    let mu2 = mu2(&frames.u, &frames.v, &map)?;
    let mu3 = mu3(&frames.u, &frames.v, &map)?;
    let mu1_hankel = mu1_hankel(&frames.u, &frames.v, &map)?;
    let c_s = pencil.c_s();
    Ok(IncoherenceReport {
        dims: pencil.dims().to_vec(),
        pencils: pencil.pencils().to_vec(),
        rank: r,
        mu1: m1.value,
        gram_singular: m1.singular,
        sigma_min_left: m1.sigma_min_left,
        sigma_min_right: m1.sigma_min_right,
        mu2,
        mu3,
        mu1_hankel,
        c_s,
        lemma1_bound: m1.value.map(|v| lemma1_bound(v, c_s, r)),
        gram_left: to_json_matrix(&gl),
        gram_right: to_json_matrix(&gr),
        sample_bounds: theorem1_conditions(m1.value, mu2, mu3, c_s, r, map.data_len(), m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::{basis_matrix, build_map, inner};
    use crate::model::rng_from_seed;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_dev(a: &CMat, b: &CMat) -> f64 {
        (a - b).norm_max()
    }

    /// `E[p, i] = Π_j exp(j2π f_ij p_j) / √(Π k_j)` over a pencil grid.
    fn vandermonde(freqs: &[Vec<f64>], extents: &[usize]) -> CMat {
        let rows: usize = extents.iter().product();
        let scale = 1.0 / (rows as f64).sqrt();
        Mat::from_fn(rows, freqs.len(), |p, i| {
            let idx = crate::array::multi_index(extents, p);
            let phase: f64 = idx.iter().zip(&freqs[i]).map(|(&t, f)| t as f64 * f).sum();
            Complex64::from_polar(scale, std::f64::consts::TAU * phase)
        })
    }

    fn random_signal(rng: &mut impl Rng, dims: &[usize], r: usize) -> SpectralSignal {
        SpectralSignal::random(dims, r, 0.0, rng.random()).unwrap()
    }

    #[test]
    fn gram_examples() {
        let p = PencilShape::balanced(&[6, 6]).unwrap();
        let (gl, gr) = gram_matrices(&[vec![0.3, 0.4]], &p).unwrap();
        assert_eq!(gl[(0, 0)], c(1.0, 0.0));
        assert_eq!(gr[(0, 0)], c(1.0, 0.0));
        assert_eq!(dirichlet_factor(0.0, 5), c(1.0, 0.0));
        assert_eq!(dirichlet_factor(1.0, 5), c(1.0, 0.0));
        let freqs = vec![vec![0.1, 0.2], vec![0.1, 0.7]];
        let (gl, _) = gram_matrices(&freqs, &p).unwrap();
        let second = dirichlet_factor(0.5, p.pencils()[1]);
        assert!((gl[(0, 1)] - second).norm() < 1e-15);
        assert!(gram_matrices(&[vec![0.1, 0.2], vec![0.1, 0.2]], &p).is_err());
    }

    #[test]
    fn grams_match_vandermonde_oracle() {
        let mut rng = rng_from_seed(11);
        for _ in 0..30 {
            let dims = [rng.random_range(2..=12), rng.random_range(2..=12)];
            let pencils = vec![rng.random_range(1..=dims[0]), rng.random_range(1..=dims[1])];
            let p = PencilShape::new(dims.to_vec(), pencils).unwrap();
            let r = rng.random_range(1..=6);
            let s = random_signal(&mut rng, &dims, r);
            let (gl, gr) = gram_matrices(s.freqs(), &p).unwrap();
            let el = vandermonde(s.freqs(), p.pencils());
            let er = vandermonde(s.freqs(), &p.col_extents());
            assert!(max_dev(&gl, &(el.adjoint() * &el)) < 1e-10);
            assert!(max_dev(&gr, &(er.adjoint() * &er)) < 1e-10);
        }
    }

    #[test]
    fn mu1_examples() {
        let p = PencilShape::balanced(&[8, 8]).unwrap();
        let m = mu1(&[vec![0.25, 0.5]], &p).unwrap();
        assert_eq!(m.value, Some(1.0));
        let freqs = vec![vec![0.1, 0.3], vec![0.6, 0.8]];
        let m = mu1(&freqs, &p).unwrap();
        let (gl, gr) = gram_matrices(&freqs, &p).unwrap();
        // Hermitian PSD: eigenvalues equal singular values.
        let eig = |g: &CMat| {
            g.self_adjoint_eigenvalues(faer::Side::Lower)
                .unwrap()
                .into_iter()
                .fold(f64::INFINITY, f64::min)
        };
        let expect = 1.0 / eig(&gl).min(eig(&gr));
        assert!((m.value.unwrap() - expect).abs() < 1e-10 * expect);
        // k_j = 1 gives all-ones Grams.
        let flat = PencilShape::new(vec![4, 4], vec![1, 1]).unwrap();
        let m = mu1(&freqs, &flat).unwrap();
        assert!(m.singular && m.value.is_none());
    }

    #[test]
    fn mu2_hand_example() {
        let p = PencilShape::new(vec![2, 2], vec![1, 1]).unwrap();
        let map = build_map(&p);
        let s = SpectralSignal::new(vec![2, 2], vec![vec![0.0, 0.0]], vec![c(1.0, 0.0)]).unwrap();
        let f = signal_frames(&synthesize(&s), &map).unwrap();
        assert_eq!(f.rank(), 1);
        assert!((mu2(&f.u, &f.v, &map).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_is_rejected() {
        let map = build_map(&PencilShape::balanced(&[3, 3]).unwrap());
        let z = DataArray::zeros(&[3, 3]).unwrap();
        assert!(signal_frames(&z, &map).is_err());
    }

    fn mu3_oracle(u: &CMat, v: &CMat, map: &EnhancementMap) -> f64 {
        let pu = u * u.adjoint();
        let pv = v * v.adjoint();
        let n = map.data_len();
        let basis: Vec<CMat> = (0..n).map(|a| basis_matrix(a, map).unwrap()).collect();
        let mut worst = 0.0f64;
        for b in 0..n {
            let pb = &pu * &basis[b] * &pv;
            let total: f64 = (0..n)
                .map(|a| {
                    let w = (map.mults()[a] as f64).sqrt();
                    (inner(&pb, &basis[a]) * w).norm_sqr()
                })
                .sum();
            worst = worst.max(total / map.mults()[b] as f64);
        }
        n as f64 / u.ncols() as f64 * worst
    }

    fn mu1_hankel_oracle(u: &CMat, v: &CMat, map: &EnhancementMap) -> f64 {
        let pu = u * u.adjoint();
        let pv = v * v.adjoint();
        let n = map.data_len();
        let worst = (0..n)
            .map(|a| {
                let b = basis_matrix(a, map).unwrap();
                (&pu * &b)
                    .squared_norm_l2()
                    .max((&b * &pv).squared_norm_l2())
            })
            .fold(0.0, f64::max);
        n as f64 / (map.pencil().c_s() * u.ncols() as f64) * worst
    }

    #[test]
    fn mu3_and_mu1_hankel_match_exhaustive_oracles() {
        let mut rng = rng_from_seed(3);
        let cases: Vec<(Vec<usize>, Vec<usize>)> = vec![
            (vec![2, 2], vec![1, 1]),
            (vec![3, 3], vec![2, 2]),
            (vec![5, 4], vec![3, 2]),
            (vec![6, 6], vec![4, 4]),
            (vec![4, 3, 3], vec![2, 2, 2]),
        ];
        for (dims, pencils) in cases {
            let p = PencilShape::new(dims.clone(), pencils).unwrap();
            let map = build_map(&p);
            let r = rng.random_range(1..=2);
            let f = signal_frames(&synthesize(&random_signal(&mut rng, &dims, r)), &map).unwrap();
            let got = mu3(&f.u, &f.v, &map).unwrap();
            let want = mu3_oracle(&f.u, &f.v, &map);
            assert!((got - want).abs() <= 1e-10 * want.max(1.0), "{got} {want}");
            let got = mu1_hankel(&f.u, &f.v, &map).unwrap();
            let want = mu1_hankel_oracle(&f.u, &f.v, &map);
            assert!((got - want).abs() <= 1e-10 * want.max(1.0), "{got} {want}");
        }
    }

    #[test]
    fn mu1_hankel_rank_one_all_ones() {
        let p = PencilShape::balanced(&[3, 3]).unwrap();
        let map = build_map(&p);
        let s = SpectralSignal::new(vec![3, 3], vec![vec![0.0, 0.0]], vec![c(1.0, 0.0)]).unwrap();
        let f = signal_frames(&synthesize(&s), &map).unwrap();
        let got = mu1_hankel(&f.u, &f.v, &map).unwrap();
        assert!((got - mu1_hankel_oracle(&f.u, &f.v, &map)).abs() < 1e-12);
        // U and V are flat: every row energy is 1/4, so the max is 1/4.
        assert!((got - 9.0 / (p.c_s() * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn mu1_hankel_full_frames_and_validation() {
        let p = PencilShape::balanced(&[3, 4]).unwrap();
        let map = build_map(&p);
        let (rows, cols) = (map.rows(), map.cols());
        let r = rows.min(cols);
        let eye = |n: usize| Mat::from_fn(n, r, |i, j| c(if i == j { 1.0 } else { 0.0 }, 0.0));
        // Full square frames make the projectors identities.
        let pr = PencilShape::new(vec![3, 3], vec![2, 2]).unwrap();
        let mr = build_map(&pr);
        let id = Mat::from_fn(4, 4, |i, j| c(if i == j { 1.0 } else { 0.0 }, 0.0));
        let got = mu1_hankel(&id, &id, &mr).unwrap();
        assert!((got - 9.0 / (pr.c_s() * 4.0)).abs() < 1e-12);
        let mut bad = eye(rows);
        bad[(0, 0)] = c(2.0, 0.0);
        assert!(mu1_hankel(&bad, &eye(cols), &map).is_err());
    }

    #[test]
    fn c_s_examples() {
        let p = PencilShape::new(vec![4, 5], vec![4, 5]).unwrap();
        assert_eq!(c_s(&p), 20.0);
        let p = PencilShape::new(vec![15, 15], vec![8, 8]).unwrap();
        assert!((c_s(&p) - 225.0 / 64.0).abs() < 1e-15);
        let mut best = (f64::INFINITY, vec![]);
        for k1 in 1..=15 {
            for k2 in 1..=15 {
                let v = c_s(&PencilShape::new(vec![15, 15], vec![k1, k2]).unwrap());
                assert!(v >= 1.0);
                if v < best.0 {
                    best = (v, vec![k1, k2]);
                }
            }
        }
        assert_eq!(best.1, vec![8, 8]);
    }

    #[test]
    fn theorem1_values() {
        let b = theorem1_conditions(Some(1.0), 1.0, 1.0, 1.0, 1, 225, 30);
        assert!((b.first_rhs.unwrap() - 225f64.ln().powi(2)).abs() < 1e-12);
        assert!((b.first_rhs.unwrap() - 29.3).abs() < 0.05);
        assert!(b.first_holds && b.second_holds);
        let b = theorem1_conditions(Some(1.0), 1.0, 1.0, 1.0, 1, 225, 0);
        assert!(!b.first_holds && !b.second_holds);
        let b = theorem1_conditions(None, 1.0, 1.0, 1.0, 1, 225, 1000);
        assert!(b.first_rhs.is_none() && !b.first_holds);
    }

    #[test]
    fn lemma1_and_invariances() {
        let mut rng = rng_from_seed(8);
        for _ in 0..20 {
            let dims = vec![rng.random_range(3..=8), rng.random_range(3..=8)];
            let p = PencilShape::balanced(&dims).unwrap();
            let r = rng.random_range(1..=3);
            let s = random_signal(&mut rng, &dims, r);
            let rep = incoherence_report(&s, &p, 10).unwrap();
            let Some(bound) = rep.lemma1_bound else {
                continue;
            };
            assert!(rep.mu2 <= bound * (1.0 + 1e-9));
            assert!(rep.mu3 <= bound * (1.0 + 1e-9));
            assert_eq!(rep.lemma1_holds(), Some(true));

            let scaled = s
                .with_amps(s.amps().iter().map(|a| a * c(-0.7, 2.0)).collect())
                .unwrap();
            let rs = incoherence_report(&scaled, &p, 10).unwrap();
            for (x, y) in [
                (rep.mu2, rs.mu2),
                (rep.mu3, rs.mu3),
                (rep.mu1_hankel, rs.mu1_hankel),
            ] {
                assert!((x - y).abs() <= 1e-8 * x.max(1.0));
            }

            let shift = rng.random::<f64>();
            let moved: Vec<Vec<f64>> = s
                .freqs()
                .iter()
                .map(|f| vec![(f[0] + shift).rem_euclid(1.0), f[1]])
                .collect();
            let Ok(moved) = SpectralSignal::new(dims.clone(), moved, s.amps().to_vec()) else {
                continue;
            };
            let rm = incoherence_report(&moved, &p, 10).unwrap();
            assert!((rep.mu1.unwrap() - rm.mu1.unwrap()).abs() <= 1e-8 * rep.mu1.unwrap());
            for (x, y) in [
                (rep.mu2, rm.mu2),
                (rep.mu3, rm.mu3),
                (rep.mu1_hankel, rm.mu1_hankel),
            ] {
                assert!((x - y).abs() <= 1e-8 * x.max(1.0), "{x} {y}");
            }
        }
    }

    #[test]
    fn mu2_depends_on_amplitude_profile() {
        let p = PencilShape::balanced(&[8, 8]).unwrap();
        let freqs = vec![vec![0.1, 0.2], vec![0.45, 0.7], vec![0.8, 0.35]];
        let flat = SpectralSignal::new(vec![8, 8], freqs.clone(), vec![c(1.0, 0.0); 3]).unwrap();
        let skew = flat
            .with_amps(vec![c(1.0, 0.0), c(0.05, 0.0), c(3.0, 0.0)])
            .unwrap();
        let a = incoherence_report(&flat, &p, 10).unwrap();
        let b = incoherence_report(&skew, &p, 10).unwrap();
        assert!((a.mu2 - b.mu2).abs() > 1e-6);
        assert!((a.mu3 - b.mu3).abs() < 1e-8 * a.mu3);
    }

    #[test]
    fn report_serializes() {
        let p = PencilShape::balanced(&[5, 5]).unwrap();
        let s = SpectralSignal::random(&[5, 5], 2, 0.05, 1).unwrap();
        let rep = incoherence_report(&s, &p, 12).unwrap();
        let text = serde_json::to_string(&rep).unwrap();
        let back: IncoherenceReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.rank, 2);
        assert!(rep.c_s >= 1.0);
        assert!(incoherence_report(&s, &PencilShape::balanced(&[5, 4]).unwrap(), 12).is_err());
    }
}
