//! Reproduction-number tracking: the basic number as the spectral radius of
//! the scaled interaction matrix, and the effective number discounted by the
//! current susceptibles.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::domain::RegionSet;
use crate::error::{Error, Result};
use crate::mobility::InteractionMatrix;
use crate::sir::{ParamTrack, RateSet};

/// Dominant eigenvalue (Perron root) of a nonnegative square matrix by
/// power iteration with a positive start vector.
///
/// The iteration runs on `A + I` — a unit diagonal shift breaks the cycling
/// that defeats plain power iteration on periodic matrices (for nonnegative
/// A, `rho(A + I) = rho(A) + 1`). Convergence: successive Rayleigh-quotient
/// estimates within 1e-10 relative, capped at 10,000 iterations.
pub fn spectral_radius(matrix: &Array2<f64>) -> Result<f64> {
    let (rows, cols) = matrix.dim();
    if rows != cols || rows == 0 {
        return Err(Error::validation(format!(
            "matrix must be square and non-empty, got {:?}",
            matrix.dim()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation(
            "matrix entries must be nonnegative and finite",
        ));
    }
    let n = rows;
    let mut shifted = matrix.clone();
    for i in 0..n {
        shifted[(i, i)] += 1.0;
    }
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut previous: Option<f64> = None;
    const MAX_ITERATIONS: usize = 10_000;
    const TOLERANCE: f64 = 1e-10;
    for _ in 0..MAX_ITERATIONS {
        let w = shifted.dot(&v);
        let rayleigh = v.dot(&w) / v.dot(&v);
        if let Some(prev) = previous {
            if (rayleigh - prev).abs() <= TOLERANCE * rayleigh.abs().max(1.0) {
                return Ok((rayleigh - 1.0).max(0.0));
            }
        }
        previous = Some(rayleigh);
        let norm = w.dot(&w).sqrt();
        // w >= v elementwise for the shifted matrix, so the norm never vanishes
        v = w / norm;
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        last_estimate: previous.map(|r| r - 1.0).unwrap_or(f64::NAN),
    })
}

/// Basic reproduction number `rho(D A)` with `D = diag(P_n beta_n / gamma_n)`
/// and `A` the interaction coefficients.
pub fn r0_at(
    rates: &RateSet,
    interaction: &InteractionMatrix,
    regions: &RegionSet,
) -> Result<f64> {
    scaled_spectral_radius(&rates.beta, &rates.gamma, regions.populations(), interaction)
}

fn scaled_spectral_radius(
    beta: &Array1<f64>,
    gamma: &Array1<f64>,
    scale: &Array1<f64>,
    interaction: &InteractionMatrix,
) -> Result<f64> {
    let n = beta.len();
    if gamma.len() != n || scale.len() != n || interaction.alpha().dim() != (n, n) {
        return Err(Error::validation("shape mismatch in reproduction inputs"));
    }
    if gamma.iter().any(|g| *g <= 0.0) {
        return Err(Error::validation("gamma must be strictly positive"));
    }
    let mut scaled = interaction.alpha().clone();
    for m in 0..n {
        let d = scale[m] * beta[m] / gamma[m];
        for k in 0..n {
            scaled[(m, k)] *= d;
        }
    }
    if scaled.iter().all(|v| *v == 0.0) {
        // disease cannot spread through an all-zero next-generation matrix
        return Ok(0.0);
    }
    spectral_radius(&scaled)
}

/// Daily reproduction numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct R0Track {
    pub days: Vec<i64>,
    pub r0: Vec<f64>,
    pub rt: Vec<f64>,
}

impl R0Track {
    /// CSV: `day, r0, rt`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("day,r0,rt\n");
        for ((day, r0), rt) in self.days.iter().zip(&self.r0).zip(&self.rt) {
            out.push_str(&format!("{},{},{}\n", day, r0, rt));
        }
        crate::domain::write_text(path, &out)
    }

    /// 7-day centered moving average of both columns, window clipped at the
    /// track boundaries.
    pub fn smoothed(&self) -> R0Track {
        let smooth = |values: &[f64]| {
            let len = values.len();
            (0..len)
                .map(|t| {
                    let lo = t.saturating_sub(3);
                    let hi = (t + 3).min(len - 1);
                    values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
                })
                .collect::<Vec<f64>>()
        };
        R0Track {
            days: self.days.clone(),
            r0: smooth(&self.r0),
            rt: smooth(&self.rt),
        }
    }
}

/// Daily `r0` from the estimated rates, and effective `rt` with the current
/// susceptibles replacing the populations inside the scaling matrix  —
/// which reduces to the classical `R0 * S / N` for a single region.
///
/// `susceptible` is `(n_regions, n_days)` aligned with the track columns;
/// `first_day` labels the first emitted day.
pub fn r0_track(
    track: &ParamTrack,
    interaction: &InteractionMatrix,
    regions: &RegionSet,
    susceptible: &Array2<f64>,
    first_day: i64,
) -> Result<R0Track> {
    let days = track.n_days();
    if days == 0 {
        return Err(Error::validation("parameter track is empty"));
    }
    if susceptible.dim() != (regions.len(), days) {
        return Err(Error::validation(format!(
            "susceptible matrix {:?} does not match {} regions x {} days",
            susceptible.dim(),
            regions.len(),
            days
        )));
    }
    let mut r0 = Vec::with_capacity(days);
    let mut rt = Vec::with_capacity(days);
    for t in 0..days {
        let rates = track.rates_at(t);
        r0.push(r0_at(&rates, interaction, regions)?);
        let s_t = susceptible.column(t).to_owned();
        rt.push(scaled_spectral_radius(
            &rates.beta,
            &rates.gamma,
            &s_t,
            interaction,
        )?);
    }
    Ok(R0Track {
        days: (first_day..first_day + days as i64).collect(),
        r0,
        rt,
    })
}
