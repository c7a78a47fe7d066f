//! K-fold Hankel enhancement of a data array.
//!
//! For data dims `n_1..n_K` and pencils `k_1..k_K` the enhanced matrix has
//! one row per multi-index `p` with `p_j < k_j` and one column per
//! multi-index `q` with `q_j < n_j − k_j + 1`, both enumerated in row-major
//! order. Cell `(p, q)` holds the data entry at `p + q`. For `K = 2` this is
//! the block Hankel matrix whose `(p_1, q_1)` block is the Hankel matrix of
//! data row `p_1 + q_1`.
//!
//! The cells holding copies of data entry `a` form the group `Ω_e(a)` of
//! size `ω_a`. Groups partition the enhanced matrix.

mod fft;

pub use fft::{FftGrid, ImplicitEnhanced};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{multi_index, strides, validate_dims, DataArray};
use crate::error::{invalid, Result};
use crate::model::ObservationSet;

pub type CMat = Mat<Complex64>;

/// Default cap on materialized enhanced-matrix cells.
pub const DEFAULT_DENSE_CELL_CAP: usize = 16_000_000;

/// Data dims and pencil parameters defining the enhancement geometry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PencilShape {
    dims: Vec<usize>,
    pencils: Vec<usize>,
}

impl PencilShape {
    pub fn new(dims: Vec<usize>, pencils: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        if pencils.len() != dims.len() {
            return invalid(format!(
                "{} pencil parameters for {} axes",
                pencils.len(),
                dims.len()
            ));
        }
        for (j, (&k, &n)) in pencils.iter().zip(&dims).enumerate() {
            if k < 1 || k > n {
                return invalid(format!("pencil k_{j} = {k} outside [1, {n}]"));
            }
        }
        Ok(Self { dims, pencils })
    }

    /// Balanced pencil `k_j = ⌈(n_j + 1)/2⌉`, which minimizes `c_s`.
    pub fn balanced(dims: &[usize]) -> Result<Self> {
        let pencils = dims.iter().map(|&n| n / 2 + 1).collect();
        Self::new(dims.to_vec(), pencils)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn pencils(&self) -> &[usize] {
        &self.pencils
    }

    /// Per-axis column extents `n_j − k_j + 1`.
    pub fn col_extents(&self) -> Vec<usize> {
        self.dims
            .iter()
            .zip(&self.pencils)
            .map(|(&n, &k)| n - k + 1)
            .collect()
    }

    pub fn rows(&self) -> usize {
        self.pencils.iter().product()
    }

    pub fn cols(&self) -> usize {
        self.col_extents().iter().product()
    }

    pub fn data_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cells(&self) -> usize {
        self.rows() * self.cols()
    }

    /// `max(Π n_j / Π k_j, Π n_j / Π (n_j − k_j + 1))`.
    pub fn c_s(&self) -> f64 {
        let n = self.data_len() as f64;
        f64::max(n / self.rows() as f64, n / self.cols() as f64)
    }
}

/// Index map from enhanced cells to data entries and back.
#[derive(Clone, Debug)]
pub struct EnhancementMap {
    pencil: PencilShape,
    row_offset: Vec<usize>,
    col_offset: Vec<usize>,
    mults: Vec<usize>,
    dense_cap: usize,
}

pub fn build_map(pencil: &PencilShape) -> EnhancementMap {
    EnhancementMap::new(pencil.clone())
}

impl EnhancementMap {
    pub fn new(pencil: PencilShape) -> Self {
        let st = strides(&pencil.dims);
        let offsets = |extents: &[usize]| -> Vec<usize> {
            let count: usize = extents.iter().product();
            (0..count)
                .map(|i| {
                    multi_index(extents, i)
                        .iter()
                        .zip(&st)
                        .map(|(p, s)| p * s)
                        .sum()
                })
                .collect()
        };
        let row_offset = offsets(&pencil.pencils);
        let col_offset = offsets(&pencil.col_extents());
        // ω_a factorizes over axes: the number of (p_j, q_j) with p_j + q_j = a_j.
        let axis_mults: Vec<Vec<usize>> = pencil
            .dims
            .iter()
            .zip(&pencil.pencils)
            .map(|(&n, &k)| {
                let kc = n - k + 1;
                (0..n).map(|a| (a + 1).min(k).min(kc).min(n - a)).collect()
            })
            .collect();
        let mults = (0..pencil.data_len())
            .map(|a| {
                multi_index(&pencil.dims, a)
                    .iter()
                    .zip(&axis_mults)
                    .map(|(&aj, m)| m[aj])
                    .product()
            })
            .collect();
        Self {
            pencil,
            row_offset,
            col_offset,
            mults,
            dense_cap: DEFAULT_DENSE_CELL_CAP,
        }
    }

    /// Overrides the cap on materialized cells.
    pub fn with_dense_cap(mut self, cap: usize) -> Self {
        self.dense_cap = cap;
        self
    }

    pub fn pencil(&self) -> &PencilShape {
        &self.pencil
    }

    pub fn dims(&self) -> &[usize] {
        &self.pencil.dims
    }

    pub fn rows(&self) -> usize {
        self.row_offset.len()
    }

    pub fn cols(&self) -> usize {
        self.col_offset.len()
    }

    pub fn data_len(&self) -> usize {
        self.mults.len()
    }

    /// Data entry stored in cell `(row, col)`.
    #[inline]
    pub fn data_index(&self, row: usize, col: usize) -> usize {
        self.row_offset[row] + self.col_offset[col]
    }

    /// `ω_a = |Ω_e(a)|` for every data entry.
    pub fn mults(&self) -> &[usize] {
        &self.mults
    }

    /// Cells of `Ω_e(a)` as `(row, col)` pairs, columns outer.
    pub fn group(&self, a: usize) -> Vec<(usize, usize)> {
        let mut cells = Vec::with_capacity(self.mults[a]);
        for (col, &co) in self.col_offset.iter().enumerate() {
            if co > a {
                continue;
            }
            for (row, &ro) in self.row_offset.iter().enumerate() {
                if ro + co == a {
                    cells.push((row, col));
                }
            }
        }
        cells
    }

    fn check_data(&self, data: &DataArray) -> Result<()> {
        if data.dims() != self.dims() {
            return invalid(format!(
                "data shape {:?} does not match pencil dims {:?}",
                data.dims(),
                self.dims()
            ));
        }
        Ok(())
    }

    fn check_matrix(&self, m: &CMat) -> Result<()> {
        if m.nrows() != self.rows() || m.ncols() != self.cols() {
            return invalid(format!(
                "matrix is {}x{}, enhanced shape is {}x{}",
                m.nrows(),
                m.ncols(),
                self.rows(),
                self.cols()
            ));
        }
        Ok(())
    }

    fn check_cap(&self) -> Result<()> {
        let cells = self.rows() * self.cols();
        if cells > self.dense_cap {
            return invalid(format!(
                "enhanced matrix has {cells} cells, above the dense cap {}",
                self.dense_cap
            ));
        }
        Ok(())
    }

    /// Group sums `Σ_{c ∈ Ω_e(a)} M_c`: the adjoint of [`enhance`].
    pub fn group_sums(&self, m: &CMat) -> Result<Vec<Complex64>> {
        self.check_matrix(m)?;
        let mut acc = vec![Complex64::new(0.0, 0.0); self.data_len()];
        for (col, &co) in self.col_offset.iter().enumerate() {
            let column = m.col(col);
            for (row, &ro) in self.row_offset.iter().enumerate() {
                acc[ro + co] += column[row];
            }
        }
        Ok(acc)
    }
}

/// Lifts `data` to its enhanced matrix.
pub fn enhance(data: &DataArray, map: &EnhancementMap) -> Result<CMat> {
    map.check_data(data)?;
    map.check_cap()?;
    let x = data.values();
    Ok(Mat::from_fn(map.rows(), map.cols(), |i, j| {
        x[map.data_index(i, j)]
    }))
}

/// Group-mean de-enhancement: entry `a` is the mean of `M` over `Ω_e(a)`.
/// Exact left inverse of [`enhance`].
pub fn dehance(m: &CMat, map: &EnhancementMap) -> Result<DataArray> {
    let mut sums = map.group_sums(m)?;
    for (s, &w) in sums.iter_mut().zip(map.mults()) {
        *s /= w as f64;
    }
    DataArray::from_vec(map.dims(), sums)
}

/// Adjoint of [`enhance`] with respect to the plain inner products:
/// entry `a` is the sum of `M` over `Ω_e(a)`.
pub fn enhance_adjoint(m: &CMat, map: &EnhancementMap) -> Result<DataArray> {
    DataArray::from_vec(map.dims(), map.group_sums(m)?)
}

/// Projects onto Hankel-structured matrices consistent with `observations`.
///
/// Every group is replaced by its mean; groups of observed entries are then
/// overwritten with the observed value. Without observations this is the
/// orthogonal projection onto the span of the basis matrices.
pub fn structure_project(
    m: &CMat,
    map: &EnhancementMap,
    observations: Option<&ObservationSet>,
) -> Result<CMat> {
    let mut data = dehance(m, map)?;
    if let Some(obs) = observations {
        if obs.dims() != map.dims() {
            return invalid(format!(
                "observation dims {:?} do not match pencil dims {:?}",
                obs.dims(),
                map.dims()
            ));
        }
        for (&i, &v) in obs.indices().iter().zip(obs.values()) {
            data.values_mut()[i] = v;
        }
    }
    enhance(&data, map)
}

/// Unit-Frobenius basis matrix `A_a`: `1/√ω_a` on `Ω_e(a)`, zero elsewhere.
pub fn basis_matrix(a: usize, map: &EnhancementMap) -> Result<CMat> {
    if a >= map.data_len() {
        return invalid(format!("data index {a} outside {} entries", map.data_len()));
    }
    map.check_cap()?;
    let v = Complex64::new(1.0 / (map.mults()[a] as f64).sqrt(), 0.0);
    Ok(Mat::from_fn(map.rows(), map.cols(), |i, j| {
        if map.data_index(i, j) == a {
            v
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// `⟨B, C⟩ = trace(B* C)`.
pub fn inner(b: &CMat, c: &CMat) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..b.ncols() {
        for (x, y) in b.col(j).iter().zip(c.col(j).iter()) {
            acc += x.conj() * y;
        }
    }
    acc
}

/// `‖enhance(x)‖_F` computed without materializing: `sqrt(Σ ω_a |x_a|²)`.
pub fn weighted_norm(values: &[Complex64], map: &EnhancementMap) -> f64 {
    values
        .iter()
        .zip(map.mults())
        .map(|(z, &w)| w as f64 * z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthesize, SpectralSignal};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_data(dims: &[usize], seed: u64) -> DataArray {
        use rand::Rng;
        let mut rng = crate::model::rng_from_seed(seed);
        let n: usize = dims.iter().product();
        let v = (0..n)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        DataArray::from_vec(dims, v).unwrap()
    }

    fn singular_values(m: &CMat) -> Vec<f64> {
        m.singular_values().unwrap()
    }

    #[test]
    fn one_fold_map() {
        let map = build_map(&PencilShape::new(vec![3], vec![2]).unwrap());
        assert_eq!(map.group(1), vec![(1, 0), (0, 1)]);
        assert_eq!(map.mults(), &[1, 2, 1]);
    }

    #[test]
    fn trivial_pencil_has_singleton_groups() {
        let map = build_map(&PencilShape::new(vec![2, 2], vec![1, 1]).unwrap());
        assert_eq!((map.rows(), map.cols()), (1, 4));
        assert!(map.mults().iter().all(|&w| w == 1));
    }

    #[test]
    fn group_counts_match_enumeration() {
        let map = build_map(&PencilShape::new(vec![4, 4], vec![2, 2]).unwrap());
        // Independent enumeration over (p, q) multi-indices.
        let mut counts = vec![0usize; 16];
        for p1 in 0..2 {
            for p2 in 0..2 {
                for q1 in 0..3 {
                    for q2 in 0..3 {
                        counts[(p1 + q1) * 4 + p2 + q2] += 1;
                    }
                }
            }
        }
        assert_eq!(map.mults(), counts.as_slice());
        assert_eq!(map.mults().iter().sum::<usize>(), 36);
        assert_eq!(*map.mults().iter().max().unwrap(), 4);
        assert_eq!(map.mults()[0], 1);
    }

    #[test]
    fn groups_partition_cells() {
        for n1 in 1..=8 {
            for n2 in 1..=8 {
                for k1 in 1..=n1 {
                    for k2 in 1..=n2 {
                        let map = build_map(&PencilShape::new(vec![n1, n2], vec![k1, k2]).unwrap());
                        let mut seen = vec![0u8; map.rows() * map.cols()];
                        for a in 0..map.data_len() {
                            let g = map.group(a);
                            assert_eq!(g.len(), map.mults()[a]);
                            assert!(!g.is_empty());
                            for (i, j) in g {
                                seen[i + j * map.rows()] += 1;
                            }
                        }
                        assert!(seen.iter().all(|&s| s == 1));
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_pencils() {
        assert!(PencilShape::new(vec![4, 4], vec![0, 2]).is_err());
        assert!(PencilShape::new(vec![4, 4], vec![5, 2]).is_err());
        assert!(PencilShape::new(vec![4, 4], vec![2]).is_err());
        assert_eq!(PencilShape::balanced(&[15, 14]).unwrap().pencils(), &[8, 8]);
    }

    #[test]
    fn one_fold_enhance_and_dehance() {
        let map = build_map(&PencilShape::new(vec![3], vec![2]).unwrap());
        let x = DataArray::from_vec(&[3], vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]).unwrap();
        let e = enhance(&x, &map).unwrap();
        assert_eq!(e[(0, 0)], c(1.0, 0.0));
        assert_eq!(e[(0, 1)], c(2.0, 0.0));
        assert_eq!(e[(1, 0)], c(2.0, 0.0));
        assert_eq!(e[(1, 1)], c(3.0, 0.0));

        let (a, b, cc, d) = (c(1.0, 1.0), c(2.0, 0.0), c(4.0, 0.0), c(0.0, 3.0));
        let m = Mat::from_fn(2, 2, |i, j| [[a, b], [cc, d]][i][j]);
        let x = dehance(&m, &map).unwrap();
        assert_eq!(x.values(), &[a, (b + cc) / 2.0, d]);
        let p = structure_project(&m, &map, None).unwrap();
        assert_eq!(p[(0, 1)], (b + cc) / 2.0);
        assert_eq!(p[(1, 0)], (b + cc) / 2.0);
        assert_eq!(p[(0, 0)], a);
    }

    #[test]
    fn shape_mismatch_errors() {
        let map = build_map(&PencilShape::new(vec![3, 3], vec![2, 2]).unwrap());
        assert!(enhance(&random_data(&[3, 4], 0), &map).is_err());
        assert!(dehance(&CMat::zeros(3, 3), &map).is_err());
        assert!(basis_matrix(9, &map).is_err());
        let obs = ObservationSet::new(vec![4, 4], vec![0], vec![c(1.0, 0.0)], 0.0).unwrap();
        assert!(structure_project(&CMat::zeros(4, 4), &map, Some(&obs)).is_err());
        let capped = build_map(map.pencil()).with_dense_cap(10);
        assert!(enhance(&random_data(&[3, 3], 0), &capped).is_err());
    }

    #[test]
    fn rank_one_signal_has_rank_one_enhancement() {
        let s = SpectralSignal::new(vec![6, 6], vec![vec![0.13, 0.71]], vec![c(0.3, 2.0)]).unwrap();
        let map = build_map(&PencilShape::new(vec![6, 6], vec![3, 3]).unwrap());
        let sv = singular_values(&enhance(&synthesize(&s), &map).unwrap());
        assert!(sv[1] / sv[0] <= 1e-10);
    }

    #[test]
    fn rank_four_signal() {
        let s = SpectralSignal::new(
            vec![8, 8],
            vec![
                vec![0.1, 0.2],
                vec![0.35, 0.8],
                vec![0.6, 0.45],
                vec![0.85, 0.05],
            ],
            vec![c(1.0, 0.0), c(0.0, 1.0), c(-0.5, 0.5), c(2.0, -1.0)],
        )
        .unwrap();
        let map = build_map(&PencilShape::new(vec![8, 8], vec![4, 4]).unwrap());
        let sv = singular_values(&enhance(&synthesize(&s), &map).unwrap());
        assert!(sv[3] / sv[0] > 1e-3);
        assert!(sv[4] / sv[0] <= 1e-10);
    }

    #[test]
    fn basis_matrices() {
        let map = build_map(&PencilShape::new(vec![3], vec![2]).unwrap());
        let a1 = basis_matrix(1, &map).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_eq!(a1[(0, 1)], c(h, 0.0));
        assert_eq!(a1[(1, 0)], c(h, 0.0));
        assert_eq!(a1[(0, 0)], c(0.0, 0.0));

        let map = build_map(&PencilShape::new(vec![4, 3], vec![2, 2]).unwrap());
        for a in 0..12 {
            let aa = basis_matrix(a, &map).unwrap();
            assert!((inner(&aa, &aa).re - 1.0).abs() < 1e-14);
            // The group mean of A_a at a is 1/√ω_a.
            let back = dehance(&aa, &map).unwrap();
            let expect = 1.0 / (map.mults()[a] as f64).sqrt();
            assert!((back.values()[a].re - expect).abs() < 1e-15);
            for b in 0..12 {
                if a != b {
                    assert_eq!(inner(&aa, &basis_matrix(b, &map).unwrap()).norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn projection_is_self_adjoint_and_idempotent_as_matrix() {
        let map = build_map(&PencilShape::new(vec![3, 4], vec![2, 2]).unwrap());
        let d = map.rows() * map.cols();
        let mut op = CMat::zeros(d, d);
        for cell in 0..d {
            let mut e = CMat::zeros(map.rows(), map.cols());
            e[(cell % map.rows(), cell / map.rows())] = c(1.0, 0.0);
            let p = structure_project(&e, &map, None).unwrap();
            for k in 0..d {
                op[(k, cell)] = p[(k % map.rows(), k / map.rows())];
            }
        }
        let sq = &op * &op;
        for i in 0..d {
            for j in 0..d {
                assert!((op[(i, j)] - op[(j, i)].conj()).norm() < 1e-14);
                assert!((sq[(i, j)] - op[(i, j)]).norm() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn dehance_inverts_enhance(seed in any::<u64>(), n1 in 1usize..7, n2 in 1usize..7, f1 in 0.0..1.0f64, f2 in 0.0..1.0f64) {
            let k1 = 1 + ((n1 - 1) as f64 * f1) as usize;
            let k2 = 1 + ((n2 - 1) as f64 * f2) as usize;
            let map = build_map(&PencilShape::new(vec![n1, n2], vec![k1, k2]).unwrap());
            let x = random_data(&[n1, n2], seed);
            let e = enhance(&x, &map).unwrap();
            let back = dehance(&e, &map).unwrap();
            prop_assert!(back.max_abs_diff(&x) <= 1e-14);
            // Isometry from the ω-weighted inner product.
            let fro: f64 = (0..e.ncols()).flat_map(|j| e.col(j).iter().map(|z| z.norm_sqr()).collect::<Vec<_>>()).sum();
            prop_assert!((fro.sqrt() - weighted_norm(x.values(), &map)).abs() <= 1e-12);
            // Structured input is fixed by the projection.
            let p = structure_project(&e, &map, None).unwrap();
            prop_assert!((&p - &e).norm_max() <= 1e-15);
        }

        #[test]
        fn adjoint_identity(seed in any::<u64>()) {
            let map = build_map(&PencilShape::new(vec![5, 4], vec![3, 2]).unwrap());
            let x = random_data(&[5, 4], seed);
            let m = {
                let y = random_data(&[map.rows(), map.cols()], seed ^ 1);
                Mat::from_fn(map.rows(), map.cols(), |i, j| y.values()[i * map.cols() + j])
            };
            let lhs = inner(&enhance(&x, &map).unwrap(), &m);
            let scaled: Vec<Complex64> = dehance(&m, &map).unwrap().values().iter().zip(map.mults()).map(|(v, &w)| v * w as f64).collect();
            let rhs: Complex64 = x.values().iter().zip(&scaled).map(|(a, b)| a.conj() * b).sum();
            prop_assert!((lhs - rhs).norm() <= 1e-12);
        }

        #[test]
        fn projection_with_observations_is_idempotent(seed in any::<u64>(), m in 0usize..20) {
            let map = build_map(&PencilShape::new(vec![5, 4], vec![3, 2]).unwrap());
            let y = random_data(&[map.rows(), map.cols()], seed);
            let mat = Mat::from_fn(map.rows(), map.cols(), |i, j| y.values()[i * map.cols() + j]);
            let idx = crate::model::sample_uniform(&[5, 4], m, seed).unwrap();
            let obs = ObservationSet::from_array(&random_data(&[5, 4], seed ^ 9), &idx).unwrap();
            let once = structure_project(&mat, &map, Some(&obs)).unwrap();
            let twice = structure_project(&once, &map, Some(&obs)).unwrap();
            prop_assert!((&once - &twice).norm_max() <= 1e-14);
        }
    }
}
