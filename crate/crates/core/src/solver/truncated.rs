//! Leading singular triplets of an implicit enhanced matrix by block subspace
//! iteration, warm-started from the previous solver step.

use faer::{Mat, MatRef};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hankel::ImplicitEnhanced;

/// `U diag(s) V*` with `s` nonincreasing.
#[derive(Clone, Debug)]
pub struct PartialSvd {
    pub u: Mat<Complex64>,
    pub s: Vec<f64>,
    pub v: Mat<Complex64>,
}

fn orthonormalize(y: &Mat<Complex64>) -> Mat<Complex64> {
    y.qr().compute_thin_Q()
}

/// Approximates the top `block` singular triplets of `op`.
///
/// `warm` supplies starting right vectors; missing columns are drawn from a
/// complex Gaussian. `block` is clamped to the smaller matrix dimension.
pub fn subspace_svd(
    op: &ImplicitEnhanced,
    block: usize,
    power_iters: usize,
    warm: Option<MatRef<'_, Complex64>>,
    rng: &mut ChaCha8Rng,
) -> Result<PartialSvd> {
    let b = block.clamp(1, op.rows().min(op.cols()));
    let cols = op.cols();
    let mut v = Mat::<Complex64>::zeros(cols, b);
    let reuse = warm.map_or(0, |w| w.ncols().min(b));
    if let Some(w) = warm {
        for j in 0..reuse {
            for i in 0..cols {
                v[(i, j)] = w[(i, j)];
            }
        }
    }
    for j in reuse..b {
        for i in 0..cols {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            v[(i, j)] = Complex64::new(re, im);
        }
    }
    let mut v = orthonormalize(&v);
    for _ in 0..power_iters {
        let q = orthonormalize(&op.matmul(v.as_ref())?);
        v = orthonormalize(&op.adjoint_matmul(q.as_ref())?);
    }
    let q = orthonormalize(&op.matmul(v.as_ref())?);
    // M ≈ Q Q* M = Q Z* with Z = M* Q.
    let z = op.adjoint_matmul(q.as_ref())?;
    let svd = z
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("small SVD failed: {e:?}")))?;
    let s = svd
        .S()
        .column_vector()
        .iter()
        .map(|x| x.re)
        .collect::<Vec<f64>>();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite singular values".into()));
    }
    Ok(PartialSvd {
        u: &q * svd.V(),
        s,
        v: svd.U().to_owned(),
    })
}

pub(crate) fn solver_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::{build_map, enhance, PencilShape};
    use crate::model::{synthesize, SpectralSignal};

    #[test]
    fn recovers_leading_spectrum_of_low_rank_matrix() {
        let s = SpectralSignal::random(&[20, 20], 5, 0.02, 4).unwrap();
        let x = synthesize(&s);
        let map = build_map(&PencilShape::balanced(&[20, 20]).unwrap());
        let op = ImplicitEnhanced::new(&x, &map).unwrap();
        let mut rng = solver_rng(1);
        let p = subspace_svd(&op, 12, 3, None, &mut rng).unwrap();
        let exact = enhance(&x, &map).unwrap().singular_values().unwrap();
        for i in 0..5 {
            assert!((p.s[i] - exact[i]).abs() <= 1e-9 * exact[0]);
        }
        // Reconstruction from the five retained triplets.
        let sd = Mat::from_fn(5, 5, |i, j| {
            Complex64::new(if i == j { p.s[i] } else { 0.0 }, 0.0)
        });
        let approx = p.u.subcols(0, 5) * &sd * p.v.subcols(0, 5).adjoint();
        let dense = enhance(&x, &map).unwrap();
        assert!((&approx - &dense).norm_l2() <= 1e-9 * dense.norm_l2());
    }
}
