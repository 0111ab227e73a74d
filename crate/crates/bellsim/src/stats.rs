//! Statistical error of the Bell estimators: closed-form predictions,
//! a first-order propagation oracle, empirical variances from repeated
//! Monte Carlo trials, and the crossover scan between the CHSH and
//! two-setting schemes.
//!
//! Two closed forms are in play, both valid near the maximal Bell value
//! `|S| ~ 2 sqrt2` and both first order in 1/N:
//!
//! - CHSH: `(Delta S)^2 = 4/N` for N pairs in total.
//! - two-setting: `(Delta S')^2 = (16/N) (1 - |S'| / (2 sqrt2))`.
//!
//! Direct propagation of the per-setting correlation variance
//! `(1 - E^2)/n` under an equal split of N pairs across settings gives
//! `(4/N) sum_ij (1 - E_ij^2)`, which is `8/N` at the maximum, not `4/N`.
//! The closed form above does not pin down a pair allocation that would
//! reconcile the two constants; this module exposes the propagation
//! result as [`derived_variance_chsh`] and lets the Monte Carlo runs
//! adjudicate (they land on the propagation value). Reports print both
//! numbers, and [`crossover_scan`] reports the crossover point implied by
//! each.
//!
//! Trials run on a rayon pool when the `parallel` feature is enabled
//! (default). Each trial draws from its own RNG streams keyed by trial
//! index, and per-trial results are collected in trial order before any
//! aggregation, so aggregates are bit-identical regardless of scheduling.

use std::f64::consts::SQRT_2;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use serde::{Deserialize, Serialize};

use crate::bell::{bell_state, Basis, BellKind, SignVariant, TSIRELSON_BOUND};
use crate::measure::{
    chsh_settings, default_fringe_grid, estimate_chsh, estimate_fringe_visibility,
    estimate_simplified, outcome_probabilities, sample_coincidences, simplified_settings, Method,
};
use crate::qpol::{pure_to_density, validate_density, DensityMatrix, Mat4};
use crate::rng::{StreamId, MAX_TRIALS};
use crate::{Error, Result};

use num_complex::Complex64;

/// Closed-form variance prediction for one estimator at one operating
/// point. `s_magnitude` is set for the two-setting form, whose prediction
/// depends on the Bell value.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariancePrediction {
    pub method: Method,
    pub n_total: u64,
    pub s_magnitude: Option<f64>,
    pub variance: f64,
}

/// Sample statistics of an estimator over repeated independent trials.
/// The variance uses the unbiased (trials - 1) normalizer; its own
/// standard error comes from the normal-theory chi-square approximation
/// `sd(s^2) ~ s^2 sqrt(2 / (trials - 1))`, adequate for the >= 1000-trial
/// runs this crate performs.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariance {
    pub method: Method,
    pub n_total: u64,
    pub trials: u64,
    pub mean: f64,
    pub variance: f64,
    pub variance_stderr: f64,
}

/// Near-maximum closed-form variance of the CHSH estimator, `4/N`.
///
/// See the module docs: first-order propagation under an equal pair split
/// gives `8/N` at the maximum instead, so treat this value as the quoted
/// prediction rather than the propagation result.
pub fn predicted_variance_chsh(n_total: u64) -> Result<VariancePrediction> {
    if n_total < 1 {
        return Err(Error::Usage("prediction needs at least 1 pair".into()));
    }
    Ok(VariancePrediction {
        method: Method::Chsh,
        n_total,
        s_magnitude: None,
        variance: 4.0 / n_total as f64,
    })
}

/// Near-maximum closed-form variance of the two-setting estimator,
/// `(16/N) (1 - |S'| / (2 sqrt2))`; vanishes at the maximal Bell value.
pub fn predicted_variance_simplified(n_total: u64, s_magnitude: f64) -> Result<VariancePrediction> {
    if n_total < 1 {
        return Err(Error::Usage("prediction needs at least 1 pair".into()));
    }
    if !(0.0..=TSIRELSON_BOUND + 1e-9).contains(&s_magnitude) {
        return Err(Error::Usage(format!(
            "|S'| = {s_magnitude} outside [0, 2 sqrt2]"
        )));
    }
    let s = s_magnitude.min(TSIRELSON_BOUND);
    Ok(VariancePrediction {
        method: Method::Simplified,
        n_total,
        s_magnitude: Some(s),
        variance: 16.0 / n_total as f64 * (1.0 - s / TSIRELSON_BOUND),
    })
}

/// First-order propagation oracle for the CHSH estimator under an equal
/// split of `n_total` pairs across the four settings:
/// `(4/N) sum_ij (1 - E(alpha_i, beta_j)^2)`.
///
/// This is the reference the Monte Carlo runs are checked against.
pub fn derived_variance_chsh(rho: &DensityMatrix, n_total: u64) -> Result<f64> {
    if n_total < 4 {
        return Err(Error::Usage(
            "CHSH propagation needs at least 4 pairs".into(),
        ));
    }
    let sum: f64 = chsh_settings()
        .iter()
        .map(|&s| {
            let e = outcome_probabilities(rho, s).correlation();
            1.0 - e * e
        })
        .sum();
    Ok(4.0 / n_total as f64 * sum)
}

/// First-order propagation oracle for the two-setting estimator under an
/// equal split across its two settings: `(4/N) sum_i (1 - E_i^2)`.
pub fn derived_variance_simplified(rho: &DensityMatrix, n_total: u64) -> Result<f64> {
    if n_total < 2 {
        return Err(Error::Usage(
            "two-setting propagation needs at least 2 pairs".into(),
        ));
    }
    let sum: f64 = simplified_settings()
        .iter()
        .map(|&s| {
            let e = outcome_probabilities(rho, s).correlation();
            1.0 - e * e
        })
        .sum();
    Ok(4.0 / n_total as f64 * sum)
}

/// Mixing weight of a Werner state, in [0, 1].
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WernerParam(f64);

impl WernerParam {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Usage(format!("Werner parameter {p} outside [0, 1]")));
        }
        Ok(Self(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// The Werner state `p |Phi+><Phi+| + (1 - p) I/4`.
///
/// Sweeping p moves the Bell value linearly through `S'+ = 2 sqrt2 p`,
/// crossing the classical bound 2 at `p = 1/sqrt2`, which makes this the
/// canonical family for variance comparisons.
pub fn werner_state(p: f64) -> Result<DensityMatrix> {
    let p = WernerParam::new(p)?.value();
    let phi = pure_to_density(&bell_state(BellKind::PhiPlus, Basis::Hv));
    let m = phi.matrix() * Complex64::new(p, 0.0)
        + Mat4::identity() * Complex64::new((1.0 - p) / 4.0, 0.0);
    validate_density(&m)
}

/// Splits a pair budget as evenly as possible, earlier parts taking the
/// remainder.
pub fn split_budget(n_total: u64, parts: usize) -> Vec<u64> {
    let parts_u = parts as u64;
    let base = n_total / parts_u;
    let rem = (n_total % parts_u) as usize;
    (0..parts).map(|i| base + u64::from(i < rem)).collect()
}

fn run_one_trial(
    method: Method,
    sign: SignVariant,
    rho: &DensityMatrix,
    n_total: u64,
    seed: u64,
    scan: u64,
    trial: u64,
) -> Result<f64> {
    let base = method.stream_base();
    let value = match method {
        Method::Chsh => {
            let budget = split_budget(n_total, 4);
            let mut records = Vec::with_capacity(4);
            for (i, &setting) in chsh_settings().iter().enumerate() {
                records.push(sample_coincidences(
                    rho,
                    setting,
                    budget[i],
                    StreamId::for_parts(seed, scan, trial, base + i as u64),
                )?);
            }
            estimate_chsh(&records, sign)?.value
        }
        Method::Simplified => {
            let budget = split_budget(n_total, 2);
            let mut records = Vec::with_capacity(2);
            for (i, &setting) in simplified_settings().iter().enumerate() {
                records.push(sample_coincidences(
                    rho,
                    setting,
                    budget[i],
                    StreamId::for_parts(seed, scan, trial, base + i as u64),
                )?);
            }
            estimate_simplified(&records, sign)?.value
        }
        Method::Fringe => {
            let grid = default_fringe_grid();
            let pairs_per_point = n_total / (2 * grid.len() as u64);
            if pairs_per_point == 0 {
                return Err(Error::Usage(format!(
                    "fringe trials need at least {} pairs",
                    2 * grid.len()
                )));
            }
            estimate_fringe_visibility(
                rho,
                pairs_per_point,
                &grid,
                StreamId::for_parts(seed, scan, trial, base),
            )?
            .value
        }
    };
    Ok(value)
}

/// Runs the per-trial closure for every trial index and collects results
/// in trial order. The rayon path and the sequential path produce the same
/// vector.
fn collect_trials<F>(trials: u64, run: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..trials).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..trials).map(run).collect()
    }
}

fn summarize(method: Method, n_total: u64, values: &[f64]) -> EmpiricalVariance {
    let trials = values.len() as u64;
    let n = values.len() as f64;
    // A constant sequence has zero sample variance exactly; computing it
    // through the mean would leave an ulp of rounding behind.
    if values.iter().all(|v| *v == values[0]) {
        return EmpiricalVariance {
            method,
            n_total,
            trials,
            mean: values[0],
            variance: 0.0,
            variance_stderr: 0.0,
        };
    }
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let variance_stderr = variance * (2.0 / (n - 1.0)).sqrt();
    EmpiricalVariance {
        method,
        n_total,
        trials,
        mean,
        variance,
        variance_stderr,
    }
}

fn empirical_variance_at(
    scan: u64,
    method: Method,
    sign: SignVariant,
    rho: &DensityMatrix,
    n_total: u64,
    trials: u64,
    seed: u64,
) -> Result<EmpiricalVariance> {
    if trials < 2 {
        return Err(Error::Usage(
            "variance estimation needs at least 2 trials".into(),
        ));
    }
    if trials > MAX_TRIALS {
        return Err(Error::Usage(format!(
            "at most {MAX_TRIALS} trials are addressable"
        )));
    }
    if n_total < method.settings_required() as u64 {
        return Err(Error::Usage(format!(
            "method {method} needs at least {} pairs, got {n_total}",
            method.settings_required()
        )));
    }
    let values = collect_trials(trials, |t| {
        run_one_trial(method, sign, rho, n_total, seed, scan, t)
    })?;
    Ok(summarize(method, n_total, &values))
}

/// Empirical estimator variance: `trials` full estimates of `n_total`
/// pairs each, every trial on its own RNG streams, reduced to the sample
/// mean, the unbiased sample variance, and the variance's own standard
/// error.
pub fn empirical_variance(
    method: Method,
    sign: SignVariant,
    rho: &DensityMatrix,
    n_total: u64,
    trials: u64,
    seed: u64,
) -> Result<EmpiricalVariance> {
    empirical_variance_at(0, method, sign, rho, n_total, trials, seed)
}

/// One grid point of a crossover scan.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub werner_p: f64,
    /// Exact Bell value of the scanned state, `2 sqrt2 p`.
    pub s_value: f64,
    pub chsh_variance: f64,
    pub chsh_variance_stderr: f64,
    pub simplified_variance: f64,
    pub simplified_variance_stderr: f64,
}

/// Result of sweeping the Werner family through the estimator-variance
/// crossover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverScan {
    pub n_total: u64,
    pub trials: u64,
    pub rows: Vec<CrossoverRow>,
    /// First grid point (scanning upward in p) where the two-setting
    /// variance drops below the CHSH variance; None if it never does.
    pub empirical_crossover_p: Option<f64>,
    /// Crossover implied by equating the two closed forms `4/N` and
    /// `(16/N)(1 - |S'|/2 sqrt2)`: `|S'| = 3/4 * 2 sqrt2`.
    pub quoted_crossover_s: f64,
    pub quoted_crossover_p: f64,
    /// Crossover implied by equating the propagation oracle `8/N` (at the
    /// maximum) with the two-setting closed form: `|S'| = sqrt2`.
    pub propagation_crossover_s: f64,
    pub propagation_crossover_p: f64,
}

/// Sweeps Werner states over `p_grid`, measuring the empirical variance of
/// both estimators at each point with `trials` repetitions of `n_total`
/// pairs, and locates the empirical crossover.
pub fn crossover_scan(
    n_total: u64,
    trials: u64,
    p_grid: &[f64],
    seed: u64,
) -> Result<CrossoverScan> {
    if p_grid.is_empty() {
        return Err(Error::Usage("crossover scan needs a non-empty grid".into()));
    }
    let mut grid = p_grid.to_vec();
    grid.sort_by(f64::total_cmp);

    let mut rows = Vec::with_capacity(grid.len());
    for (i, &p) in grid.iter().enumerate() {
        let rho = werner_state(p)?;
        let s_value = TSIRELSON_BOUND * p;
        let chsh = empirical_variance_at(
            i as u64,
            Method::Chsh,
            SignVariant::Plus,
            &rho,
            n_total,
            trials,
            seed,
        )?;
        let simplified = empirical_variance_at(
            i as u64,
            Method::Simplified,
            SignVariant::Plus,
            &rho,
            n_total,
            trials,
            seed,
        )?;
        rows.push(CrossoverRow {
            werner_p: p,
            s_value,
            chsh_variance: chsh.variance,
            chsh_variance_stderr: chsh.variance_stderr,
            simplified_variance: simplified.variance,
            simplified_variance_stderr: simplified.variance_stderr,
        });
    }

    let empirical_crossover_p = rows
        .iter()
        .find(|r| r.simplified_variance < r.chsh_variance)
        .map(|r| r.werner_p);

    Ok(CrossoverScan {
        n_total,
        trials,
        rows,
        empirical_crossover_p,
        quoted_crossover_s: 0.75 * TSIRELSON_BOUND,
        quoted_crossover_p: 0.75,
        propagation_crossover_s: SQRT_2,
        propagation_crossover_p: 0.5,
    })
}
