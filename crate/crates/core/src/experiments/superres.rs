//! Point sources on the unit torus observed through their low-frequency
//! Fourier coefficients, with the missing high-frequency coefficients filled
//! in by recovery.
//!
//! The coefficient `X(k) = Σ_i a_i exp(−j2π⟨k, p_i⟩)` for `k ∈ [−f, f]²`,
//! stored at array index `t = k + f`, is a spectrally sparse signal with
//! frequencies `−p_i mod 1` and amplitudes `a_i exp(j2π f (p_i1 + p_i2))`.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{default_solver, ExperimentKind};
use crate::array::{flat_index, DataArray};
use crate::error::{invalid, Result};
use crate::hankel::{build_map, PencilShape};
use crate::model::{synthesize, wrap_distance, ObservationSet, SpectralSignal};
use crate::solver::{emac_svt_with_map, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub position: [f64; 2],
    /// `[re, im]`.
    pub amplitude: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperresSpec {
    pub sources: Vec<Source>,
    pub f_lo: usize,
    pub f_hi: usize,
    pub render_grid: usize,
    pub solver: SolverConfig,
    pub pencil: Option<Vec<usize>>,
}

impl Default for SuperresSpec {
    /// Six unit sources in three close pairs. Each pair is closer than the
    /// main-lobe width at `f_lo` and wider than the one at `f_hi`.
    fn default() -> Self {
        let at = |x: f64, y: f64| Source {
            position: [x, y],
            amplitude: [1.0, 0.0],
        };
        Self {
            sources: vec![
                at(0.30, 0.30),
                at(0.33, 0.32),
                at(0.60, 0.36),
                at(0.62, 0.39),
                at(0.44, 0.68),
                at(0.47, 0.66),
            ],
            f_lo: 12,
            f_hi: 24,
            render_grid: 256,
            solver: default_solver(ExperimentKind::Superres),
            pencil: None,
        }
    }
}

impl SuperresSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return invalid("at least one source is required");
        }
        if !(self.f_hi >= self.f_lo && self.f_lo >= 1) {
            return invalid(format!(
                "need f_hi ≥ f_lo ≥ 1, got f_lo = {}, f_hi = {}",
                self.f_lo, self.f_hi
            ));
        }
        if self.render_grid < 3 {
            return invalid("render_grid must be at least 3");
        }
        for s in &self.sources {
            if s.position.iter().any(|p| !(0.0..1.0).contains(p)) {
                return invalid(format!("source position {:?} outside [0, 1)²", s.position));
            }
            if s.amplitude.iter().any(|a| !a.is_finite()) {
                return invalid("source amplitudes must be finite");
            }
        }
        self.solver.validate()
    }

    pub fn side(&self) -> usize {
        2 * self.f_hi + 1
    }
}

/// Fourier coefficients of the sources on `[−f_hi, f_hi]²` as a signal.
pub fn spectrum_signal(spec: &SuperresSpec) -> Result<SpectralSignal> {
    let f = spec.f_hi as f64;
    let freqs = spec
        .sources
        .iter()
        .map(|s| {
            s.position
                .iter()
                .map(|p| (1.0 - p).rem_euclid(1.0))
                .collect()
        })
        .collect();
    let amps = spec
        .sources
        .iter()
        .map(|s| {
            let a = Complex64::new(s.amplitude[0], s.amplitude[1]);
            let shift = f * (s.position[0] + s.position[1]);
            a * Complex64::from_polar(1.0, std::f64::consts::TAU * shift.rem_euclid(1.0))
        })
        .collect();
    SpectralSignal::new(vec![spec.side(); 2], freqs, amps)
}

/// Indices `t` with `|t_j − f_hi| ≤ f_lo` on both axes.
pub fn low_block(f_lo: usize, f_hi: usize) -> Vec<usize> {
    let side = 2 * f_hi + 1;
    let band = f_hi - f_lo..=f_hi + f_lo;
    let mut out = Vec::with_capacity((2 * f_lo + 1).pow(2));
    for i in band.clone() {
        for j in band.clone() {
            out.push(flat_index(&[side, side], &[i, j]).expect("inside the grid"));
        }
    }
    out
}

/// `I(x) = Σ_k X(k) exp(j2π⟨k, x⟩) / (2f+1)²` on the grid `x = (i, j) / grid`.
pub fn render_image(spectrum: &DataArray, f_hi: usize, grid: usize) -> Result<DataArray> {
    let side = 2 * f_hi + 1;
    if spectrum.dims() != [side, side] {
        return invalid(format!("spectrum must be {side}x{side}"));
    }
    let kernel = Mat::from_fn(grid, side, |i, t| {
        let k = t as f64 - f_hi as f64;
        Complex64::from_polar(
            1.0,
            std::f64::consts::TAU * (k * i as f64 / grid as f64).rem_euclid(1.0),
        )
    });
    let x = Mat::from_fn(side, side, |i, j| spectrum.values()[i * side + j]);
    let img = &kernel * &x * kernel.transpose();
    let norm = 1.0 / (side * side) as f64;
    let values = (0..grid * grid)
        .map(|p| img[(p / grid, p % grid)] * norm)
        .collect();
    DataArray::from_vec(&[grid, grid], values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub cell: [usize; 2],
    pub position: [f64; 2],
    pub magnitude: f64,
}

/// Local maxima of `|image|` (8-neighbourhood, wrapping) above half the
/// global maximum, strongest first.
pub fn detect_peaks(image: &DataArray) -> Vec<Peak> {
    let [rows, cols] = [image.dims()[0], image.dims()[1]];
    let mag: Vec<f64> = image.values().iter().map(|z| z.norm()).collect();
    let top = mag.iter().copied().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let v = mag[i * cols + j];
            if v < 0.5 * top || v == 0.0 {
                continue;
            }
            let mut is_max = true;
            'scan: for di in [rows - 1, 0, 1] {
                for dj in [cols - 1, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = ((i + di) % rows, (j + dj) % cols);
                    let w = mag[ni * cols + nj];
                    // Ties go to the earlier cell in row-major order.
                    if w > v || (w == v && (ni, nj) < (i, j)) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                peaks.push(Peak {
                    cell: [i, j],
                    position: [i as f64 / rows as f64, j as f64 / cols as f64],
                    magnitude: v,
                });
            }
        }
    }
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    peaks
}

/// Largest per-axis wrap-around distance, in render cells.
fn cell_distance(p: &Peak, pos: [f64; 2], grid: usize) -> f64 {
    (0..2)
        .map(|a| wrap_distance(p.position[a], pos[a]) * grid as f64)
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuperresOutcome {
    pub truth_peaks: Vec<Peak>,
    pub lowres_peaks: Vec<Peak>,
    pub recovered_peaks: Vec<Peak>,
    /// Distance in render cells from each source to the nearest recovered peak.
    pub source_errors: Vec<f64>,
    /// Every source has a recovered peak within one render cell.
    pub all_localized: bool,
    /// Recovered peaks farther than one cell from every source.
    pub spurious: usize,
    pub spectrum_nmse: f64,
    pub iters: usize,
    pub converged: bool,
    #[serde(skip)]
    pub lowres: Option<DataArray>,
    #[serde(skip)]
    pub recovered: Option<DataArray>,
    #[serde(skip)]
    pub truth: Option<DataArray>,
}

pub fn run_superres(spec: &SuperresSpec) -> Result<SuperresOutcome> {
    spec.validate()?;
    let side = spec.side();
    let pencil = match &spec.pencil {
        Some(k) => PencilShape::new(vec![side, side], k.clone())?,
        None => PencilShape::balanced(&[side, side])?,
    };
    let map = build_map(&pencil);
    let spectrum = synthesize(&spectrum_signal(spec)?);
    let obs = ObservationSet::from_array(&spectrum, &low_block(spec.f_lo, spec.f_hi))?;
    let res = emac_svt_with_map(&obs, &map, &spec.solver, Some(&spectrum))?;

    let grid = spec.render_grid;
    let truth = render_image(&spectrum, spec.f_hi, grid)?;
    let lowres = render_image(&obs.zero_filled(), spec.f_hi, grid)?;
    let recovered = render_image(&res.data_hat, spec.f_hi, grid)?;
    let truth_peaks = detect_peaks(&truth);
    let lowres_peaks = detect_peaks(&lowres);
    let recovered_peaks = detect_peaks(&recovered);

    let source_errors: Vec<f64> = spec
        .sources
        .iter()
        .map(|s| {
            recovered_peaks
                .iter()
                .map(|p| cell_distance(p, s.position, grid))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let spurious = recovered_peaks
        .iter()
        .filter(|p| {
            spec.sources
                .iter()
                .all(|s| cell_distance(p, s.position, grid) > 1.0)
        })
        .count();
    Ok(SuperresOutcome {
        all_localized: source_errors.iter().all(|&e| e <= 1.0),
        source_errors,
        spurious,
        truth_peaks,
        lowres_peaks,
        recovered_peaks,
        spectrum_nmse: res.nmse.unwrap_or(f64::INFINITY),
        iters: res.iters,
        converged: res.converged,
        lowres: Some(lowres),
        recovered: Some(recovered),
        truth: Some(truth),
    })
}
