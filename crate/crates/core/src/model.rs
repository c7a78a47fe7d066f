//! Spectrally sparse signals, observation masks and measurement noise.
//!
//! A [`SpectralSignal`] is a sum of `r` complex K-dimensional sinusoids
//! `x(t) = Σ_i d_i exp(j2π⟨t, f_i⟩)` sampled on the integer grid
//! `0 ≤ t_j < n_j`. Everything random in this module is driven by an
//! explicit `u64` seed; see [`derive_seed`] for how independent streams are
//! split off a single user seed.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{flat_index, multi_index, validate_dims, DataArray};
use crate::error::{invalid, Result};

/// Deterministic RNG used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `base` and a path of counters.
///
/// Each counter is folded in with one SplitMix64 round:
/// `s ← splitmix64(s ⊕ splitmix64(counter))`. A Monte Carlo trial identified
/// by `(cell, trial)` gets `derive_seed(seed, &[cell, trial])`, so results do
/// not depend on how trials are scheduled across threads.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |s, &c| splitmix64(s ^ splitmix64(c)))
}

/// A superposition of `r` K-dimensional complex sinusoids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalSpecJson", into = "SignalSpecJson")]
pub struct SpectralSignal {
    dims: Vec<usize>,
    freqs: Vec<Vec<f64>>,
    amps: Vec<Complex64>,
}

/// On-disk form: `{"dims":[..], "freqs":[[..],..], "amps":[[re,im],..]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SignalSpecJson {
    dims: Vec<usize>,
    freqs: Vec<Vec<f64>>,
    amps: Vec<[f64; 2]>,
}

impl TryFrom<SignalSpecJson> for SpectralSignal {
    type Error = crate::Error;

    fn try_from(raw: SignalSpecJson) -> Result<Self> {
        let amps = raw
            .amps
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        SpectralSignal::new(raw.dims, raw.freqs, amps)
    }
}

impl From<SpectralSignal> for SignalSpecJson {
    fn from(s: SpectralSignal) -> Self {
        SignalSpecJson {
            dims: s.dims,
            freqs: s.freqs,
            amps: s.amps.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl SpectralSignal {
    pub fn new(dims: Vec<usize>, freqs: Vec<Vec<f64>>, amps: Vec<Complex64>) -> Result<Self> {
        validate_dims(&dims)?;
        if freqs.is_empty() {
            return invalid("a spectral signal needs at least one frequency");
        }
        if freqs.len() != amps.len() {
            return invalid(format!(
                "{} frequencies but {} amplitudes",
                freqs.len(),
                amps.len()
            ));
        }
        for (i, f) in freqs.iter().enumerate() {
            if f.len() != dims.len() {
                return invalid(format!(
                    "frequency {i} has {} coordinates, expected {}",
                    f.len(),
                    dims.len()
                ));
            }
            if let Some(c) = f.iter().find(|c| !(0.0..1.0).contains(*c)) {
                return invalid(format!("frequency {i} coordinate {c} outside [0,1)"));
            }
            if freqs[..i].iter().any(|g| g == f) {
                return invalid(format!("duplicate frequency {f:?}"));
            }
        }
        if let Some(i) = amps.iter().position(|d| !d.is_finite() || d.norm() == 0.0) {
            return invalid(format!("amplitude {i} must be finite and nonzero"));
        }
        Ok(Self { dims, freqs, amps })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn freqs(&self) -> &[Vec<f64>] {
        &self.freqs
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    /// Spectral sparsity `r`.
    pub fn rank(&self) -> usize {
        self.freqs.len()
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn with_amps(&self, amps: Vec<Complex64>) -> Result<Self> {
        Self::new(self.dims.clone(), self.freqs.clone(), amps)
    }

    /// Draws `r` frequencies uniformly in `[0,1)^K` such that on every axis
    /// each pair is at least `min_sep` apart (wrap-around distance), with
    /// unit-modulus amplitudes of uniformly random phase.
    pub fn random(dims: &[usize], r: usize, min_sep: f64, seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        if r == 0 {
            return invalid("r must be at least 1");
        }
        if min_sep * r as f64 > 1.0 {
            return invalid(format!("cannot place {r} frequencies {min_sep} apart"));
        }
        let mut rng = rng_from_seed(seed);
        let mut freqs: Vec<Vec<f64>> = Vec::with_capacity(r);
        let mut attempts = 0usize;
        while freqs.len() < r {
            attempts += 1;
            if attempts > 100_000 {
                return invalid(format!(
                    "rejection sampling failed to place {r} frequencies {min_sep} apart"
                ));
            }
            let cand: Vec<f64> = (0..dims.len()).map(|_| rng.random::<f64>()).collect();
            let ok = freqs.iter().all(|f| {
                f.iter()
                    .zip(&cand)
                    .all(|(&a, &b)| wrap_distance(a, b) >= min_sep)
            });
            if ok {
                freqs.push(cand);
            }
        }
        let amps = (0..r)
            .map(|_| Complex64::from_polar(1.0, TAU * rng.random::<f64>()))
            .collect();
        Self::new(dims.to_vec(), freqs, amps)
    }
}

/// Distance between two points of the unit circle `[0,1)`.
pub fn wrap_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Evaluates the signal on its grid: entry `t` is `Σ_i d_i exp(j2π⟨t, f_i⟩)`.
pub fn synthesize(signal: &SpectralSignal) -> DataArray {
    let dims = signal.dims();
    let total: usize = dims.iter().product();
    let mut values = vec![Complex64::new(0.0, 0.0); total];
    for (f, &d) in signal.freqs().iter().zip(signal.amps()) {
        // Per-axis phase tables; the K-D exponential factorizes.
        let tables: Vec<Vec<Complex64>> = f
            .iter()
            .zip(dims)
            .map(|(&fj, &n)| {
                (0..n)
                    .map(|t| Complex64::from_polar(1.0, TAU * ((fj * t as f64) % 1.0)))
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; dims.len()];
        for v in values.iter_mut() {
            let mut term = d;
            for (table, &t) in tables.iter().zip(&idx) {
                term *= table[t];
            }
            *v += term;
            for j in (0..dims.len()).rev() {
                idx[j] += 1;
                if idx[j] < dims[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
    DataArray::from_vec(dims, values).expect("shape built from dims")
}

/// Observed entries `X^o_a = X_a + N_a` for `a ∈ Ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    dims: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
    noise_level: f64,
}

#[derive(Serialize, Deserialize)]
struct ObservationJson {
    dims: Vec<usize>,
    indices: Vec<Vec<usize>>,
    values: Vec<[f64; 2]>,
    noise_level: f64,
}

impl Serialize for ObservationSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ObservationJson {
            dims: self.dims.clone(),
            indices: self.index_tuples(),
            values: self.values.iter().map(|z| [z.re, z.im]).collect(),
            noise_level: self.noise_level,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ObservationSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = ObservationJson::deserialize(d)?;
        let mut flat = Vec::with_capacity(raw.indices.len());
        for idx in &raw.indices {
            let f = flat_index(&raw.dims, idx).ok_or_else(|| {
                serde::de::Error::custom(format!("index {idx:?} outside dims {:?}", raw.dims))
            })?;
            flat.push(f);
        }
        let values = raw
            .values
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        ObservationSet::new(raw.dims, flat, values, raw.noise_level)
            .map_err(serde::de::Error::custom)
    }
}

impl ObservationSet {
    /// `indices` are flat row-major positions in `dims`.
    pub fn new(
        dims: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<Complex64>,
        noise_level: f64,
    ) -> Result<Self> {
        validate_dims(&dims)?;
        let total: usize = dims.iter().product();
        if indices.len() != values.len() {
            return invalid(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            ));
        }
        if !(noise_level >= 0.0) || !noise_level.is_finite() {
            return invalid(format!(
                "noise level must be finite and ≥ 0, got {noise_level}"
            ));
        }
        let mut seen = vec![false; total];
        for &i in &indices {
            if i >= total {
                return invalid(format!("observation index {i} outside {total} entries"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return invalid(format!("duplicate observation index {i}"));
            }
        }
        Ok(Self {
            dims,
            indices,
            values,
            noise_level,
        })
    }

    /// Noiseless observation of `data` on `indices`.
    pub fn from_array(data: &DataArray, indices: &[usize]) -> Result<Self> {
        let total = data.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= total) {
            return invalid(format!("observation index {bad} outside {total} entries"));
        }
        let values = indices.iter().map(|&i| data.values()[i]).collect();
        Self::new(data.dims().to_vec(), indices.to_vec(), values, 0.0)
    }

    pub fn with_values(&self, values: Vec<Complex64>, noise_level: f64) -> Result<Self> {
        Self::new(self.dims.clone(), self.indices.clone(), values, noise_level)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn index_tuples(&self) -> Vec<Vec<usize>> {
        self.indices
            .iter()
            .map(|&i| multi_index(&self.dims, i))
            .collect()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `P_Ω(X^o)` as a full array, zero off the mask.
    pub fn zero_filled(&self) -> DataArray {
        let mut out = DataArray::zeros(&self.dims).expect("validated dims");
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out.values_mut()[i] = v;
        }
        out
    }
}

/// Draws `m` distinct flat indices uniformly without replacement, sorted.
pub fn sample_uniform(dims: &[usize], m: usize, seed: u64) -> Result<Vec<usize>> {
    validate_dims(dims)?;
    let total: usize = dims.iter().product();
    if m > total {
        return invalid(format!("cannot sample {m} of {total} entries"));
    }
    let mut rng = rng_from_seed(seed);
    let mut picked = index::sample(&mut rng, total, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Adds i.i.d. circularly symmetric complex Gaussian noise with
/// `E‖noise‖² = (‖values‖ / snr_amplitude)²`, variance split equally between
/// real and imaginary parts. An infinite ratio returns the input unchanged.
pub fn add_noise(values: &[Complex64], snr_amplitude: f64, seed: u64) -> Result<Vec<Complex64>> {
    if snr_amplitude.is_infinite() && snr_amplitude > 0.0 {
        return Ok(values.to_vec());
    }
    if !(snr_amplitude > 0.0) {
        return invalid(format!(
            "snr amplitude must be positive, got {snr_amplitude}"
        ));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let clean = values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let per_component = clean / (snr_amplitude * (2.0 * values.len() as f64).sqrt());
    let mut rng = rng_from_seed(seed);
    Ok(values
        .iter()
        .map(|&z| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            z + Complex64::new(re, im) * per_component
        })
        .collect())
}
