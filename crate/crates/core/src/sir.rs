//! Explicit-Euler integrators for the metapopulation SIR system and the
//! single-region baseline, plus a grid-search fit for the baseline.
//!
//! Step semantics shared by both integrators: new infections are capped at
//! the available susceptibles and removals at the available infected, so
//! compartments stay nonnegative and each step conserves S + I + R exactly.

use ndarray::{Array1, Array2, Axis};

use crate::domain::EpiSeries;
use crate::error::{Error, Result};
use crate::mobility::InteractionMatrix;

/// Per-region compartment counts at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MetapopState {
    pub susceptible: Array1<f64>,
    pub infected: Array1<f64>,
    pub removed: Array1<f64>,
}

impl MetapopState {
    pub fn new(
        susceptible: Array1<f64>,
        infected: Array1<f64>,
        removed: Array1<f64>,
    ) -> Result<Self> {
        let n = susceptible.len();
        if infected.len() != n || removed.len() != n {
            return Err(Error::validation("compartment vectors differ in length"));
        }
        if n == 0 {
            return Err(Error::validation("state must cover at least one region"));
        }
        for v in susceptible.iter().chain(infected.iter()).chain(removed.iter()) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::validation(format!(
                    "compartments must be finite and nonnegative, got {}",
                    v
                )));
            }
        }
        Ok(MetapopState {
            susceptible,
            infected,
            removed,
        })
    }

    pub fn len(&self) -> usize {
        self.susceptible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.susceptible.is_empty()
    }

    /// Per-region population implied by the compartments.
    pub fn population(&self) -> Array1<f64> {
        &self.susceptible + &self.infected + &self.removed
    }

    /// Snapshot of one day of a series.
    pub fn from_series(series: &EpiSeries, day: usize) -> Result<Self> {
        if day >= series.n_days() {
            return Err(Error::validation(format!(
                "day index {} out of range for {} days",
                day,
                series.n_days()
            )));
        }
        MetapopState::new(
            series.susceptible().index_axis(Axis(1), day).to_owned(),
            series.infected().index_axis(Axis(1), day).to_owned(),
            series.removed().index_axis(Axis(1), day).to_owned(),
        )
    }
}

/// Per-region infection and removal rates for one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSet {
    pub beta: Array1<f64>,
    pub gamma: Array1<f64>,
}

impl RateSet {
    pub fn new(beta: Array1<f64>, gamma: Array1<f64>) -> Result<Self> {
        if beta.len() != gamma.len() || beta.is_empty() {
            return Err(Error::validation("rate vectors differ in length or are empty"));
        }
        if beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::validation("beta must be finite and nonnegative"));
        }
        if gamma.iter().any(|g| !g.is_finite() || *g <= 0.0 || *g > 1.0) {
            return Err(Error::validation("gamma must lie in (0, 1]"));
        }
        Ok(RateSet { beta, gamma })
    }

    pub fn uniform(n: usize, beta: f64, gamma: f64) -> Result<Self> {
        RateSet::new(
            Array1::from_elem(n, beta),
            Array1::from_elem(n, gamma),
        )
    }
}

/// Per-region, per-day rate estimates; columns are days.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTrack {
    beta: Array2<f64>,
    gamma: Array2<f64>,
}

impl ParamTrack {
    pub fn new(beta: Array2<f64>, gamma: Array2<f64>) -> Result<Self> {
        if beta.dim() != gamma.dim() {
            return Err(Error::validation("beta and gamma tracks differ in shape"));
        }
        if beta.ncols() == 0 || beta.nrows() == 0 {
            return Err(Error::validation("parameter track must be non-empty"));
        }
        if beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::validation("beta track must be finite and nonnegative"));
        }
        if gamma.iter().any(|g| !g.is_finite() || *g <= 0.0 || *g > 1.0) {
            return Err(Error::validation("gamma track must lie in (0, 1]"));
        }
        Ok(ParamTrack { beta, gamma })
    }

    /// Constant rates held over `days`.
    pub fn constant(rates: &RateSet, days: usize) -> Result<Self> {
        let n = rates.beta.len();
        let mut beta = Array2::zeros((n, days));
        let mut gamma = Array2::zeros((n, days));
        for t in 0..days {
            beta.column_mut(t).assign(&rates.beta);
            gamma.column_mut(t).assign(&rates.gamma);
        }
        ParamTrack::new(beta, gamma)
    }

    pub fn n_regions(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_days(&self) -> usize {
        self.beta.ncols()
    }

    pub fn beta(&self) -> &Array2<f64> {
        &self.beta
    }

    pub fn gamma(&self) -> &Array2<f64> {
        &self.gamma
    }

    /// Rates on `day`; the final column is held when the track is shorter
    /// than the simulation horizon.
    pub fn rates_at(&self, day: usize) -> RateSet {
        let t = day.min(self.n_days() - 1);
        RateSet {
            beta: self.beta.column(t).to_owned(),
            gamma: self.gamma.column(t).to_owned(),
        }
    }
}

/// One explicit Euler step of the metapopulation system. Returns the new
/// state and the new infections per region during the step.
pub fn metapop_step(
    state: &MetapopState,
    rates: &RateSet,
    interaction: &InteractionMatrix,
    dt: f64,
) -> Result<(MetapopState, Array1<f64>)> {
    let n = state.len();
    if rates.beta.len() != n || interaction.alpha().dim() != (n, n) {
        return Err(Error::validation(format!(
            "shapes disagree: {} regions, {} rates, alpha {:?}",
            n,
            rates.beta.len(),
            interaction.alpha().dim()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation(format!("dt must be positive, got {}", dt)));
    }
    if state
        .susceptible
        .iter()
        .chain(state.infected.iter())
        .chain(state.removed.iter())
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(Error::validation(
            "state contains a negative or non-finite compartment",
        ));
    }

    // force_n = sum_m alpha[m][n] * I_m
    let force = state.infected.dot(interaction.alpha());
    let raw = (&state.susceptible * &rates.beta * &force) * dt;
    let new_infections = ndarray::Zip::from(&raw)
        .and(&state.susceptible)
        .map_collect(|r, s| r.min(*s));
    let removal_raw = (&rates.gamma * &state.infected) * dt;
    let infectious = &state.infected + &new_infections;
    let removal = ndarray::Zip::from(&removal_raw)
        .and(&infectious)
        .map_collect(|r, b| r.min(*b));

    let next = MetapopState {
        susceptible: &state.susceptible - &new_infections,
        infected: &infectious - &removal,
        removed: &state.removed + &removal,
    };
    Ok((next, new_infections))
}

/// Iterates [`metapop_step`] with dt = 1 day over `horizon` steps. The
/// returned series holds post-step compartments on days `1..=horizon` and
/// the infections produced during each step.
pub fn metapop_simulate(
    initial: &MetapopState,
    track: &ParamTrack,
    interaction: &InteractionMatrix,
    horizon: usize,
) -> Result<EpiSeries> {
    if horizon == 0 {
        return Err(Error::validation("horizon must be at least one day"));
    }
    if track.n_regions() != initial.len() {
        return Err(Error::validation(format!(
            "track covers {} regions, state has {}",
            track.n_regions(),
            initial.len()
        )));
    }
    let n = initial.len();
    let mut s = Array2::zeros((n, horizon));
    let mut i_m = Array2::zeros((n, horizon));
    let mut r_m = Array2::zeros((n, horizon));
    let mut nc = Array2::zeros((n, horizon));
    let mut state = initial.clone();
    for t in 0..horizon {
        let rates = track.rates_at(t);
        let (next, new_infections) = metapop_step(&state, &rates, interaction, 1.0)?;
        s.column_mut(t).assign(&next.susceptible);
        i_m.column_mut(t).assign(&next.infected);
        r_m.column_mut(t).assign(&next.removed);
        nc.column_mut(t).assign(&new_infections);
        state = next;
    }
    let dates = (1..=horizon as i64).collect();
    EpiSeries::new(dates, s, i_m, r_m, nc)
}

/// Single-region trajectory from the standard SIR baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SirSeries {
    pub susceptible: Vec<f64>,
    pub infected: Vec<f64>,
    pub removed: Vec<f64>,
    pub new_cases: Vec<f64>,
}

/// Euler integration of the standard SIR equations with dt = 1 day.
/// Output covers the `horizon` post-step days, like [`metapop_simulate`].
pub fn standard_sir_simulate(
    s0: f64,
    i0: f64,
    r0: f64,
    beta: f64,
    gamma: f64,
    population: f64,
    horizon: usize,
) -> Result<SirSeries> {
    if horizon == 0 {
        return Err(Error::validation("horizon must be at least one day"));
    }
    let implied = s0 + i0 + r0;
    if (implied - population).abs() > 1e-6 * population.abs().max(1.0) {
        return Err(Error::validation(format!(
            "population {} does not match S0+I0+R0 = {}",
            population, implied
        )));
    }
    if [s0, i0, r0].iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("initial compartments must be nonnegative"));
    }
    if !(beta >= 0.0 && beta.is_finite()) || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::validation(format!(
            "rates out of range: beta {}, gamma {}",
            beta, gamma
        )));
    }
    let mut s = s0;
    let mut i = i0;
    let mut r = r0;
    let mut out = SirSeries {
        susceptible: Vec::with_capacity(horizon),
        infected: Vec::with_capacity(horizon),
        removed: Vec::with_capacity(horizon),
        new_cases: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let raw = s * beta * (i / population) * 1.0;
        let new_infections = raw.min(s);
        let infectious = i + new_infections;
        let removal = (gamma * i * 1.0).min(infectious);
        s -= new_infections;
        i = infectious - removal;
        r += removal;
        out.susceptible.push(s);
        out.infected.push(i);
        out.removed.push(r);
        out.new_cases.push(new_infections);
    }
    Ok(out)
}

/// Candidate rates for the baseline grid search.
#[derive(Debug, Clone)]
pub struct ParamGrid {
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl ParamGrid {
    /// Coarse default grid used for baseline comparisons.
    pub fn default_grid() -> Self {
        let betas = (1..=40).map(|i| i as f64 * 0.025).collect();
        let gammas = (1..=25).map(|i| i as f64 * 0.02).collect();
        ParamGrid { betas, gammas }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirFit {
    pub beta: f64,
    pub gamma: f64,
    pub mae: f64,
}

/// Exhaustive grid search for the standard SIR baseline, minimizing MAE of
/// daily new infections against the observed single-region series. Ties
/// break toward the smallest beta, then the smallest gamma.
pub fn fit_standard_sir(observed: &EpiSeries, grid: &ParamGrid) -> Result<SirFit> {
    if observed.n_regions() != 1 {
        return Err(Error::validation(format!(
            "baseline fit expects a single aggregated region, got {}",
            observed.n_regions()
        )));
    }
    if grid.betas.is_empty() || grid.gammas.is_empty() {
        return Err(Error::validation("parameter grid must be non-empty"));
    }
    if observed.n_days() < 2 {
        return Err(Error::validation("need at least two observed days to fit"));
    }
    let s0 = observed.susceptible()[(0, 0)];
    let i0 = observed.infected()[(0, 0)];
    let r0 = observed.removed()[(0, 0)];
    let population = s0 + i0 + r0;
    let steps = observed.n_days() - 1;
    let mut best: Option<SirFit> = None;
    for &beta in &grid.betas {
        for &gamma in &grid.gammas {
            let sim = standard_sir_simulate(s0, i0, r0, beta, gamma, population, steps)?;
            let mut mae = 0.0;
            for t in 0..steps {
                mae += (sim.new_cases[t] - observed.new_cases()[(0, t + 1)]).abs();
            }
            mae /= steps as f64;
            let better = match &best {
                None => true,
                Some(b) => mae < b.mae,
            };
            if better {
                best = Some(SirFit { beta, gamma, mae });
            }
        }
    }
    Ok(best.expect("grid checked non-empty"))
}
