//! FFT-backed enhanced-matrix operators that never materialize `X_e`.
//!
//! A product `X_e v` is the correlation `y[p] = Σ_q x[p+q] v[q]`; the group
//! sums of a low-rank matrix `Σ_k s_k u_k v_k*` are the linear convolutions
//! `Σ_k s_k (u_k ∗ conj v_k)`. Since `p_j + q_j ≤ n_j − 1`, a cyclic grid of
//! any length `L_j ≥ n_j` per axis computes both without wrap-around.

use std::sync::Arc;

use faer::{Mat, MatRef};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::EnhancementMap;
use crate::array::{multi_index, strides, DataArray};
use crate::error::{invalid, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Smallest `L ≥ n` whose prime factors are all ≤ 7.
fn smooth_len(n: usize) -> usize {
    (n.max(1)..)
        .find(|&l| {
            let mut m = l;
            for p in [2, 3, 5, 7] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .expect("smooth numbers are unbounded")
}

/// Separable K-dimensional FFT over a row-major grid.
#[derive(Clone)]
pub struct FftGrid {
    shape: Vec<usize>,
    strides: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftGrid")
            .field("shape", &self.shape)
            .finish()
    }
}

impl FftGrid {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            shape: shape.to_vec(),
            strides: strides(shape),
            forward: shape.iter().map(|&l| planner.plan_fft_forward(l)).collect(),
            inverse: shape.iter().map(|&l| planner.plan_fft_inverse(l)).collect(),
        }
    }

    /// Grid covering `dims` with FFT-friendly padded lengths.
    pub fn padded(dims: &[usize]) -> Self {
        let shape: Vec<usize> = dims.iter().map(|&n| smooth_len(n)).collect();
        Self::new(&shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, plans: &[Arc<dyn Fft<f64>>], buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len());
        let total = buf.len();
        for (axis, plan) in plans.iter().enumerate() {
            let l = self.shape[axis];
            if l == 1 {
                continue;
            }
            let stride = self.strides[axis];
            let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
            if stride == 1 {
                plan.process_with_scratch(buf, &mut scratch);
                continue;
            }
            let mut line = vec![ZERO; l];
            let block = l * stride;
            for base in (0..total).step_by(block) {
                for off in 0..stride {
                    let start = base + off;
                    for (t, v) in line.iter_mut().enumerate() {
                        *v = buf[start + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (t, v) in line.iter().enumerate() {
                        buf[start + t * stride] = *v;
                    }
                }
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(&self.forward, buf);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(&self.inverse, buf);
        let scale = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Grid offsets of every multi-index in `extents` (row-major order).
    fn offsets(&self, extents: &[usize]) -> Vec<usize> {
        let count: usize = extents.iter().product();
        (0..count)
            .map(|i| {
                multi_index(extents, i)
                    .iter()
                    .zip(&self.strides)
                    .map(|(p, s)| p * s)
                    .sum()
            })
            .collect()
    }
}

/// `X_e` of a fixed data array as an implicit linear operator.
#[derive(Debug, Clone)]
pub struct ImplicitEnhanced {
    grid: FftGrid,
    row_pos: Vec<usize>,
    col_pos: Vec<usize>,
    data_pos: Vec<usize>,
    spectrum: Vec<Complex64>,
}

impl ImplicitEnhanced {
    pub fn new(data: &DataArray, map: &EnhancementMap) -> Result<Self> {
        if data.dims() != map.dims() {
            return invalid(format!(
                "data shape {:?} does not match pencil dims {:?}",
                data.dims(),
                map.dims()
            ));
        }
        let grid = FftGrid::padded(map.dims());
        let row_pos = grid.offsets(map.pencil().pencils());
        let col_pos = grid.offsets(&map.pencil().col_extents());
        let data_pos = grid.offsets(map.dims());
        let mut op = Self {
            grid,
            row_pos,
            col_pos,
            data_pos,
            spectrum: Vec::new(),
        };
        op.set_data(data.values());
        Ok(op)
    }

    /// Replaces the underlying data, keeping the FFT plans.
    pub fn set_data(&mut self, values: &[Complex64]) {
        let mut buf = vec![ZERO; self.grid.len()];
        for (&pos, &v) in self.data_pos.iter().zip(values) {
            buf[pos] = v;
        }
        self.grid.forward(&mut buf);
        self.spectrum = buf;
    }

    pub fn rows(&self) -> usize {
        self.row_pos.len()
    }

    pub fn cols(&self) -> usize {
        self.col_pos.len()
    }

    fn scatter(&self, pos: &[usize], v: impl Iterator<Item = Complex64>) -> Vec<Complex64> {
        let mut buf = vec![ZERO; self.grid.len()];
        for (&p, x) in pos.iter().zip(v) {
            buf[p] = x;
        }
        buf
    }

    /// `X_e v`.
    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols() {
            return invalid(format!(
                "vector has length {}, expected {}",
                v.len(),
                self.cols()
            ));
        }
        // y[p] = Σ_q x[p+q] v[q] = IFFT(X̂ · conj(FFT(conj v)))[p]
        let mut w = self.scatter(&self.col_pos, v.iter().map(|z| z.conj()));
        self.grid.forward(&mut w);
        for (a, b) in w.iter_mut().zip(&self.spectrum) {
            *a = b * a.conj();
        }
        self.grid.inverse(&mut w);
        Ok(self.row_pos.iter().map(|&p| w[p]).collect())
    }

    /// `X_e* u`.
    pub fn adjoint_matvec(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        if u.len() != self.rows() {
            return invalid(format!(
                "vector has length {}, expected {}",
                u.len(),
                self.rows()
            ));
        }
        // z[q] = conj(Σ_p x[p+q] conj(u[p])) = conj(IFFT(X̂ · conj(FFT(u)))[q])
        let mut w = self.scatter(&self.row_pos, u.iter().copied());
        self.grid.forward(&mut w);
        for (a, b) in w.iter_mut().zip(&self.spectrum) {
            *a = b * a.conj();
        }
        self.grid.inverse(&mut w);
        Ok(self.col_pos.iter().map(|&q| w[q].conj()).collect())
    }

    /// `X_e V` for a block of column vectors.
    pub fn matmul(&self, v: MatRef<'_, Complex64>) -> Result<Mat<Complex64>> {
        let mut out = Mat::zeros(self.rows(), v.ncols());
        for j in 0..v.ncols() {
            let col: Vec<Complex64> = v.col(j).iter().copied().collect();
            for (o, y) in out.col_mut(j).iter_mut().zip(self.matvec(&col)?) {
                *o = y;
            }
        }
        Ok(out)
    }

    /// `X_e* U` for a block of column vectors.
    pub fn adjoint_matmul(&self, u: MatRef<'_, Complex64>) -> Result<Mat<Complex64>> {
        let mut out = Mat::zeros(self.cols(), u.ncols());
        for j in 0..u.ncols() {
            let col: Vec<Complex64> = u.col(j).iter().copied().collect();
            for (o, y) in out.col_mut(j).iter_mut().zip(self.adjoint_matvec(&col)?) {
                *o = y;
            }
        }
        Ok(out)
    }

    /// Group sums of `U diag(s) V*` without forming the product.
    pub fn low_rank_group_sums(
        &self,
        u: MatRef<'_, Complex64>,
        s: &[f64],
        v: MatRef<'_, Complex64>,
    ) -> Result<Vec<Complex64>> {
        if u.nrows() != self.rows() || v.nrows() != self.cols() {
            return invalid("factor shapes do not match the enhanced matrix");
        }
        if u.ncols() != s.len() || v.ncols() != s.len() {
            return invalid("factor ranks disagree");
        }
        let mut acc = vec![ZERO; self.grid.len()];
        for (k, &sk) in s.iter().enumerate() {
            let mut a = self.scatter(&self.row_pos, u.col(k).iter().copied());
            let mut b = self.scatter(&self.col_pos, v.col(k).iter().map(|z| z.conj()));
            self.grid.forward(&mut a);
            self.grid.forward(&mut b);
            for ((t, x), y) in acc.iter_mut().zip(&a).zip(&b) {
                *t += x * y * sk;
            }
        }
        self.grid.inverse(&mut acc);
        Ok(self.data_pos.iter().map(|&p| acc[p]).collect())
    }
}
