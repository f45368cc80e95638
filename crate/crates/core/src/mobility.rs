//! Static mobility: gravity term with a long-range flight addition, and the
//! interaction coefficients derived from it.
//!
//! The gravity regularizer epsilon is never tuned directly; it is pinned to
//! `2 * alpha * P^2` so the single-region limit of the metapopulation model
//! collapses to the standard SIR equations.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::RegionSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MobilityConfig {
    /// Gravity coefficient.
    pub alpha: f64,
    /// Distance decay exponent, applied as a real power of kilometers.
    #[serde(rename = "d")]
    pub decay: f64,
    /// Gravity regularizer (km^d). Derived, not free: see
    /// [`epsilon_from_consistency`].
    pub epsilon: f64,
    /// Weight of the long-range term `max(P_m, P_n)` between distinct pairs.
    pub flight_coefficient: f64,
}

impl MobilityConfig {
    /// Builds a config with epsilon derived from the consistency constraint.
    pub fn new(
        alpha: f64,
        decay: f64,
        flight_coefficient: f64,
        total_population: f64,
    ) -> Result<Self> {
        let epsilon = epsilon_from_consistency(alpha, total_population)?;
        if !(decay > 0.0 && decay.is_finite()) {
            return Err(Error::validation(format!(
                "decay exponent must be positive, got {}",
                decay
            )));
        }
        if !(flight_coefficient >= 0.0 && flight_coefficient.is_finite()) {
            return Err(Error::validation(format!(
                "flight coefficient must be nonnegative, got {}",
                flight_coefficient
            )));
        }
        Ok(MobilityConfig {
            alpha,
            decay,
            epsilon,
            flight_coefficient,
        })
    }

    /// Builds a config with an explicit epsilon, bypassing the consistency
    /// derivation. Used to probe configurations that violate the constraint.
    pub fn with_raw_epsilon(
        alpha: f64,
        decay: f64,
        flight_coefficient: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::validation(format!(
                "alpha must be positive, got {}",
                alpha
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::validation(format!(
                "epsilon must be positive, got {}",
                epsilon
            )));
        }
        if !(decay > 0.0 && decay.is_finite()) {
            return Err(Error::validation(format!(
                "decay exponent must be positive, got {}",
                decay
            )));
        }
        if !(flight_coefficient >= 0.0 && flight_coefficient.is_finite()) {
            return Err(Error::validation(format!(
                "flight coefficient must be nonnegative, got {}",
                flight_coefficient
            )));
        }
        Ok(MobilityConfig {
            alpha,
            decay,
            epsilon,
            flight_coefficient,
        })
    }
}

/// The constraint that makes the single-region metapopulation model agree
/// with standard SIR: `epsilon = 2 * alpha * P^2`.
pub fn epsilon_from_consistency(alpha: f64, total_population: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::validation(format!(
            "alpha must be positive, got {}",
            alpha
        )));
    }
    if !(total_population > 0.0 && total_population.is_finite()) {
        return Err(Error::validation(format!(
            "total population must be positive, got {}",
            total_population
        )));
    }
    // Evaluated as 2 * ((alpha * P) * P) so the diagonal gravity term
    // alpha * P_n^2 / epsilon reduces to exactly one half for a single region.
    Ok(2.0 * (alpha * total_population * total_population))
}

/// Mobility matrix: gravity plus flight term, diagonal uses distance zero so
/// the flight term vanishes there.
pub fn mobility_matrix(regions: &RegionSet, config: &MobilityConfig) -> Array2<f64> {
    let n = regions.len();
    let p = regions.populations();
    let dist = regions.distances();
    let mut h = Array2::zeros((n, n));
    for m in 0..n {
        for nn in 0..n {
            let gravity =
                config.alpha * p[nn] * p[m] / (dist[(m, nn)].powf(config.decay) + config.epsilon);
            let flight = if m == nn {
                0.0
            } else {
                config.flight_coefficient * p[nn].max(p[m])
            };
            h[(m, nn)] = gravity + flight;
        }
    }
    h
}

/// Interaction coefficients with the mobility matrix they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    alpha: Array2<f64>,
    mobility: Array2<f64>,
}

impl InteractionMatrix {
    /// `alpha[m][n] = h[m][n] / P_m + h[n][m] / P_n`.
    pub fn from_mobility(h: &Array2<f64>, regions: &RegionSet) -> Result<Self> {
        let n = regions.len();
        if h.dim() != (n, n) {
            return Err(Error::validation(format!(
                "mobility matrix {:?} does not match {} regions",
                h.dim(),
                n
            )));
        }
        if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::validation(
                "mobility matrix must be nonnegative and finite",
            ));
        }
        let p = regions.populations();
        let mut alpha = Array2::zeros((n, n));
        for m in 0..n {
            for nn in 0..n {
                alpha[(m, nn)] = h[(m, nn)] / p[m] + h[(nn, m)] / p[nn];
            }
        }
        Ok(InteractionMatrix {
            alpha,
            mobility: h.clone(),
        })
    }

    pub fn alpha(&self) -> &Array2<f64> {
        &self.alpha
    }

    pub fn mobility(&self) -> &Array2<f64> {
        &self.mobility
    }

    pub fn len(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// See [`InteractionMatrix::from_mobility`].
pub fn interaction_matrix(h: &Array2<f64>, regions: &RegionSet) -> Result<InteractionMatrix> {
    InteractionMatrix::from_mobility(h, regions)
}

/// Result of probing the single-region limit of a mobility config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitingCaseReport {
    /// `alpha_nn * P` for the collapsed one-region system; 1 when consistent.
    pub alpha_nn_times_p: f64,
    /// `|alpha_nn * P - 1|`.
    pub residual: f64,
    pub passed: bool,
}

/// Collapses the region set to one aggregate region and measures how far the
/// config is from the consistency constraint.
pub fn validate_limiting_case(config: &MobilityConfig, regions: &RegionSet) -> LimitingCaseReport {
    let aggregate = regions.aggregate();
    let h = mobility_matrix(&aggregate, config);
    let p = aggregate.total_population();
    let alpha_nn = h[(0, 0)] / p + h[(0, 0)] / p;
    let value = alpha_nn * p;
    let residual = (value - 1.0).abs();
    LimitingCaseReport {
        alpha_nn_times_p: value,
        residual,
        passed: residual < 1e-12,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use ndarray::array;

    fn regions(pops: &[f64], dist: Array2<f64>) -> RegionSet {
        let names = (0..pops.len()).map(|i| format!("R{i}")).collect();
        RegionSet::new(names, pops.to_vec(), dist).unwrap()
    }

    #[test]
    fn epsilon_examples() {
        // direct evaluation of 2*alpha*P^2, independent arithmetic
        let eps = epsilon_from_consistency(1.12e-6, 3.28e8).unwrap();
        let expected = 2.0 * 1.12e-6 * (3.28e8 * 3.28e8);
        assert_relative_eq!(eps, expected, max_relative = 1e-12);
        assert_relative_eq!(eps, 2.40988e11, max_relative = 1e-5);

        assert_abs_diff_eq!(epsilon_from_consistency(0.5, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(epsilon_from_consistency(1.0, 10.0).unwrap(), 200.0);
        assert!(epsilon_from_consistency(0.0, 1.0).is_err());
        assert!(epsilon_from_consistency(1.0, -1.0).is_err());
    }

    #[test]
    fn single_region_mobility_is_one_half() {
        // with the consistency epsilon, h = alpha P^2 / eps = 1/2, which is
        // exactly what makes alpha_nn = 2h/P collapse to 1/P
        let r = regions(&[1000.0], Array2::zeros((1, 1)));
        let config = MobilityConfig::new(0.01, 1.7, 0.0, r.total_population()).unwrap();
        let h = mobility_matrix(&r, &config);
        assert_abs_diff_eq!(h[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn flight_term_vanishes_on_diagonal() {
        let r = regions(&[1000.0, 2000.0], array![[0.0, 50.0], [50.0, 0.0]]);
        let with_flight = MobilityConfig::new(1e-5, 2.0, 3.0, r.total_population()).unwrap();
        let without_flight = MobilityConfig::new(1e-5, 2.0, 0.0, r.total_population()).unwrap();
        let h1 = mobility_matrix(&r, &with_flight);
        let h0 = mobility_matrix(&r, &without_flight);
        assert_eq!(h1[(0, 0)], h0[(0, 0)]);
        assert_eq!(h1[(1, 1)], h0[(1, 1)]);
        assert_abs_diff_eq!(h1[(0, 1)] - h0[(0, 1)], 3.0 * 2000.0, epsilon = 1e-9);
    }

    #[test]
    fn mobility_symmetric_for_equal_pair() {
        let r = regions(&[1500.0, 1500.0], array![[0.0, 75.0], [75.0, 0.0]]);
        let config = MobilityConfig::new(1e-4, 1.73, 0.0, r.total_population()).unwrap();
        let h = mobility_matrix(&r, &config);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn interaction_single_region_inverse_population() {
        let r = regions(&[1000.0], Array2::zeros((1, 1)));
        let config = MobilityConfig::new(0.01, 1.7, 0.0, r.total_population()).unwrap();
        let h = mobility_matrix(&r, &config);
        let inter = interaction_matrix(&h, &r).unwrap();
        assert_relative_eq!(inter.alpha()[(0, 0)], 1.0 / 1000.0, max_relative = 1e-12);
    }

    #[test]
    fn interaction_formula_and_zero_case() {
        let r = regions(&[10.0, 20.0], array![[0.0, 5.0], [5.0, 0.0]]);
        let h = array![[0.0, 2.0], [4.0, 0.0]];
        let inter = interaction_matrix(&h, &r).unwrap();
        // alpha_01 = h01/P0 + h10/P1 = 2/10 + 4/20 = 0.4
        assert_abs_diff_eq!(inter.alpha()[(0, 1)], 0.4, epsilon = 1e-15);

        let zeros = interaction_matrix(&Array2::zeros((2, 2)), &r).unwrap();
        assert!(zeros.alpha().iter().all(|v| *v == 0.0));

        assert!(interaction_matrix(&Array2::zeros((3, 3)), &r).is_err());
    }

    #[test]
    fn interaction_of_symmetric_mobility_is_symmetric() {
        let r = regions(&[10.0, 20.0, 15.0], {
            let mut d = Array2::zeros((3, 3));
            d[(0, 1)] = 3.0;
            d[(1, 0)] = 3.0;
            d[(0, 2)] = 4.0;
            d[(2, 0)] = 4.0;
            d[(1, 2)] = 5.0;
            d[(2, 1)] = 5.0;
            d
        });
        let config = MobilityConfig::new(1e-3, 1.5, 0.5, r.total_population()).unwrap();
        let h = mobility_matrix(&r, &config);
        let inter = interaction_matrix(&h, &r).unwrap();
        for m in 0..3 {
            for n in 0..3 {
                assert_relative_eq!(
                    inter.alpha()[(m, n)],
                    inter.alpha()[(n, m)],
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn limiting_case_pass_and_scaled_failures() {
        let r = regions(&[600.0, 400.0], array![[0.0, 10.0], [10.0, 0.0]]);
        let good = MobilityConfig::new(1e-4, 1.73, 0.0, r.total_population()).unwrap();
        let report = validate_limiting_case(&good, &r);
        assert!(report.passed, "residual was {}", report.residual);
        assert!(report.residual < 1e-12);

        // eps doubled: alpha_nn * P = 1/2, residual 0.5
        let doubled =
            MobilityConfig::with_raw_epsilon(1e-4, 1.73, 0.0, 2.0 * good.epsilon).unwrap();
        let report = validate_limiting_case(&doubled, &r);
        assert!(!report.passed);
        assert_abs_diff_eq!(report.residual, 0.5, epsilon = 1e-12);

        // eps halved: alpha_nn * P = 2, residual 1.0
        let halved =
            MobilityConfig::with_raw_epsilon(1e-4, 1.73, 0.0, 0.5 * good.epsilon).unwrap();
        let report = validate_limiting_case(&halved, &r);
        assert!(!report.passed);
        assert_abs_diff_eq!(report.residual, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gravity_homogeneity_under_distance_rescale() {
        // Rescaling distances by c, alpha by c^d, and re-deriving epsilon
        // leaves h unchanged: the c^d factors cancel throughout.
        let c: f64 = 3.5;
        let d = 1.73;
        let base = regions(&[600.0, 400.0], array![[0.0, 10.0], [10.0, 0.0]]);
        let scaled = regions(&[600.0, 400.0], array![[0.0, 10.0 * c], [10.0 * c, 0.0]]);
        let alpha = 1e-4;
        let cfg_base = MobilityConfig::new(alpha, d, 0.25, base.total_population()).unwrap();
        let cfg_scaled =
            MobilityConfig::new(alpha * c.powf(d), d, 0.25, scaled.total_population()).unwrap();
        let h_base = mobility_matrix(&base, &cfg_base);
        let h_scaled = mobility_matrix(&scaled, &cfg_scaled);
        for m in 0..2 {
            for n in 0..2 {
                assert_relative_eq!(h_base[(m, n)], h_scaled[(m, n)], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn mobility_monotone_nonincreasing_in_distance() {
        let pops = [600.0, 400.0];
        let config = MobilityConfig::new(1e-4, 1.73, 0.1, 1000.0).unwrap();
        let mut last = f64::INFINITY;
        for dist in [1.0, 5.0, 25.0, 125.0, 625.0] {
            let r = regions(&pops, array![[0.0, dist], [dist, 0.0]]);
            let h = mobility_matrix(&r, &config);
            assert!(h[(0, 1)] <= last);
            last = h[(0, 1)];
        }
    }
}
