//! Dense K-dimensional complex arrays stored in row-major order.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Row-major strides for `dims` (last axis fastest).
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for j in (0..dims.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * dims[j + 1];
    }
    s
}

pub fn flat_index(dims: &[usize], index: &[usize]) -> Option<usize> {
    if index.len() != dims.len() {
        return None;
    }
    let mut flat = 0;
    for (&i, &n) in index.iter().zip(dims) {
        if i >= n {
            return None;
        }
        flat = flat * n + i;
    }
    Some(flat)
}

pub fn multi_index(dims: &[usize], mut flat: usize) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for j in (0..dims.len()).rev() {
        out[j] = flat % dims[j];
        flat /= dims[j];
    }
    out
}

pub(crate) fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return invalid("dims must have at least one axis");
    }
    if dims.contains(&0) {
        return invalid(format!("dims must be positive, got {dims:?}"));
    }
    Ok(())
}

/// A complex data array of shape `dims`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataArray {
    dims: Vec<usize>,
    values: Vec<Complex64>,
}

impl DataArray {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        let len = dims.iter().product();
        Ok(Self {
            dims: dims.to_vec(),
            values: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    pub fn from_vec(dims: &[usize], values: Vec<Complex64>) -> Result<Self> {
        validate_dims(dims)?;
        let len: usize = dims.iter().product();
        if values.len() != len {
            return invalid(format!(
                "array of shape {dims:?} needs {len} values, got {}",
                values.len()
            ));
        }
        Ok(Self {
            dims: dims.to_vec(),
            values,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, index: &[usize]) -> Option<Complex64> {
        flat_index(&self.dims, index).map(|i| self.values[i])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖self − truth‖_F / ‖truth‖_F`.
    pub fn nmse(&self, truth: &DataArray) -> Result<f64> {
        if self.dims != truth.dims {
            return invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.dims, truth.dims
            ));
        }
        let denom = truth.frobenius_norm();
        if denom == 0.0 {
            return invalid("ground truth is identically zero");
        }
        let num = self
            .values
            .iter()
            .zip(&truth.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        Ok(num / denom)
    }

    pub fn max_abs_diff(&self, other: &DataArray) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_multi_index_agree() {
        let dims = [3, 4, 2];
        for flat in 0..24 {
            let idx = multi_index(&dims, flat);
            assert_eq!(flat_index(&dims, &idx), Some(flat));
        }
        assert_eq!(flat_index(&dims, &[3, 0, 0]), None);
        assert_eq!(strides(&dims), vec![8, 2, 1]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DataArray::zeros(&[]).is_err());
        assert!(DataArray::zeros(&[3, 0]).is_err());
        assert!(DataArray::from_vec(&[2, 2], vec![Complex64::default(); 3]).is_err());
    }
}
