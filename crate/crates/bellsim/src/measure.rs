//! From states to measurement statistics: exact outcome probabilities,
//! seeded multinomial sampling of coincidence counts, and the three
//! Bell-parameter estimators.
//!
//! Each estimator exists in two forms: one that consumes sampled
//! [`CoincidenceRecord`]s and one `_exact` form that substitutes the exact
//! outcome probabilities of a known state (the infinite-pair limit, with
//! zero standard error). The exact forms go through the same
//! correlation-coefficient pipeline, so estimator-level identities can be
//! checked independently of the operator algebra.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, SQRT_2};

use nalgebra::Vector2;
use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::bell::{PolarizationOutcome, SignVariant};
use crate::qpol::{tensor_product, DensityMatrix, Mat2};
use crate::rng::StreamId;
use crate::{Error, Result};

/// Analyzer angles matched against records are considered equal within
/// this tolerance (radians).
pub const ANGLE_MATCH_TOL: f64 = 1e-9;

/// A pair of analysis angles, Alice then Bob, in radians.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    pub alpha: f64,
    pub beta: f64,
}

impl AnalyzerSetting {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::NonFinite("analyzer angle"));
        }
        Ok(Self { alpha, beta })
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.alpha - other.alpha).abs() <= tol && (self.beta - other.beta).abs() <= tol
    }
}

impl std::fmt::Display for AnalyzerSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(alpha={}, beta={})", self.alpha, self.beta)
    }
}

/// The four CHSH settings: Alice at {0, pi/4}, Bob at {pi/8, 3pi/8}.
pub fn chsh_settings() -> [AnalyzerSetting; 4] {
    [
        AnalyzerSetting {
            alpha: 0.0,
            beta: FRAC_PI_8,
        },
        AnalyzerSetting {
            alpha: 0.0,
            beta: 3.0 * FRAC_PI_8,
        },
        AnalyzerSetting {
            alpha: FRAC_PI_4,
            beta: FRAC_PI_8,
        },
        AnalyzerSetting {
            alpha: FRAC_PI_4,
            beta: 3.0 * FRAC_PI_8,
        },
    ]
}

/// The two parallel-polarizer settings: both parties at 0, both at pi/4.
pub fn simplified_settings() -> [AnalyzerSetting; 2] {
    [
        AnalyzerSetting {
            alpha: 0.0,
            beta: 0.0,
        },
        AnalyzerSetting {
            alpha: FRAC_PI_4,
            beta: FRAC_PI_4,
        },
    ]
}

/// Joint outcome probabilities at one setting, ordered
/// (pass,pass), (pass,reject), (reject,pass), (reject,reject).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
}

impl OutcomeDistribution {
    pub fn new(p: [f64; 4]) -> Result<Self> {
        let mut q = p;
        for x in &mut q {
            if !x.is_finite() {
                return Err(Error::NonFinite("outcome probability"));
            }
            if *x < -1e-12 || *x > 1.0 + 1e-12 {
                return Err(Error::Numeric(format!("probability {x} outside [0, 1]")));
            }
            *x = x.clamp(0.0, 1.0);
        }
        let sum: f64 = q.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Numeric(format!("probabilities sum to {sum}")));
        }
        for x in &mut q {
            *x /= sum;
        }
        Ok(Self {
            p_pp: q[0],
            p_pm: q[1],
            p_mp: q[2],
            p_mm: q[3],
        })
    }

    pub fn probabilities(&self) -> [f64; 4] {
        [self.p_pp, self.p_pm, self.p_mp, self.p_mm]
    }

    /// Probability of one joint outcome.
    pub fn probability(&self, alice: PolarizationOutcome, bob: PolarizationOutcome) -> f64 {
        use PolarizationOutcome::*;
        match (alice, bob) {
            (Pass, Pass) => self.p_pp,
            (Pass, Reject) => self.p_pm,
            (Reject, Pass) => self.p_mp,
            (Reject, Reject) => self.p_mm,
        }
    }

    /// Correlation coefficient: correlated minus anticorrelated mass.
    pub fn correlation(&self) -> f64 {
        (self.p_pp + self.p_mm) - (self.p_pm + self.p_mp)
    }
}

/// Coincidence counts observed at one analyzer setting.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRecord {
    pub setting: AnalyzerSetting,
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
}

impl CoincidenceRecord {
    pub fn total(&self) -> u64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    /// Count of one joint outcome.
    pub fn count(&self, alice: PolarizationOutcome, bob: PolarizationOutcome) -> u64 {
        use PolarizationOutcome::*;
        match (alice, bob) {
            (Pass, Pass) => self.n_pp,
            (Pass, Reject) => self.n_pm,
            (Reject, Pass) => self.n_mp,
            (Reject, Reject) => self.n_mm,
        }
    }
}

/// Which estimation scheme produced a Bell estimate.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Chsh,
    Simplified,
    Fringe,
}

impl Method {
    /// Analyzer settings the scheme needs per run (the fringe scheme scans
    /// a beta grid instead; see [`default_fringe_grid`]).
    pub fn settings_required(self) -> usize {
        match self {
            Method::Chsh => 4,
            Method::Simplified => 2,
            Method::Fringe => 2 * FRINGE_GRID_POINTS,
        }
    }

    /// First setting slot in the per-trial RNG stream layout. Fixed per
    /// method so a method's samples do not depend on which other methods
    /// run alongside it.
    pub fn stream_base(self) -> u64 {
        match self {
            Method::Chsh => 0,
            Method::Simplified => 4,
            Method::Fringe => 8,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Chsh => "chsh",
            Method::Simplified => "simplified",
            Method::Fringe => "fringe",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chsh" => Ok(Method::Chsh),
            "simplified" => Ok(Method::Simplified),
            "fringe" => Ok(Method::Fringe),
            other => Err(Error::Usage(format!(
                "unknown method `{other}` (expected chsh, simplified, fringe)"
            ))),
        }
    }
}

/// A Bell-parameter estimate with its first-order standard error.
///
/// `pairs_used == 0` marks an exact (infinite-pair) evaluation.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellEstimate {
    pub value: f64,
    pub std_error: f64,
    pub sign: SignVariant,
    pub method: Method,
    pub pairs_used: u64,
}

impl BellEstimate {
    fn new(
        value: f64,
        std_error: f64,
        sign: SignVariant,
        method: Method,
        pairs_used: u64,
    ) -> Result<Self> {
        if !value.is_finite() || !std_error.is_finite() {
            return Err(Error::NonFinite("Bell estimate"));
        }
        if value.abs() > 4.0 + 1e-9 {
            return Err(Error::Numeric(format!(
                "Bell estimate {value} outside the algebraic range [-4, 4]"
            )));
        }
        Ok(Self {
            value,
            std_error,
            sign,
            method,
            pairs_used,
        })
    }
}

fn pass_projector(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    let k = Vector2::new(Complex64::new(c, 0.0), Complex64::new(s, 0.0));
    k * k.adjoint()
}

fn reject_projector(theta: f64) -> Mat2 {
    pass_projector(theta + std::f64::consts::FRAC_PI_2)
}

/// Exact joint outcome probabilities for a state at one setting:
/// `p_ab = Tr(rho P_a(alpha) ⊗ P_b(beta))`.
pub fn outcome_probabilities(rho: &DensityMatrix, setting: AnalyzerSetting) -> OutcomeDistribution {
    let pa = pass_projector(setting.alpha);
    let ma = reject_projector(setting.alpha);
    let pb = pass_projector(setting.beta);
    let mb = reject_projector(setting.beta);
    let p = [(&pa, &pb), (&pa, &mb), (&ma, &pb), (&ma, &mb)].map(|(a, b)| {
        let proj = tensor_product(a, b);
        (rho.matrix() * proj.matrix()).trace().re
    });
    OutcomeDistribution::new(p).expect("projective probabilities of a valid state")
}

/// Draws `n` photon pairs from the joint outcome distribution by a chain
/// of conditional binomials, so the cost is constant in `n`. Deterministic
/// given `(rho, setting, n, stream)`.
pub fn sample_coincidences(
    rho: &DensityMatrix,
    setting: AnalyzerSetting,
    n: u64,
    stream: StreamId,
) -> Result<CoincidenceRecord> {
    if n == 0 {
        return Err(Error::Usage("cannot sample zero photon pairs".into()));
    }
    let p = outcome_probabilities(rho, setting).probabilities();
    let mut rng = stream.rng();

    let mut counts = [0u64; 4];
    let mut remaining = n;
    let mut mass = 1.0f64;
    for i in 0..3 {
        if remaining == 0 {
            break;
        }
        let q = if mass > 0.0 {
            (p[i] / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = Binomial::new(remaining, q)
            .map_err(|e| Error::Numeric(format!("binomial: {e}")))?
            .sample(&mut rng);
        counts[i] = k;
        remaining -= k;
        mass -= p[i];
    }
    counts[3] = remaining;

    Ok(CoincidenceRecord {
        setting,
        n_pp: counts[0],
        n_pm: counts[1],
        n_mp: counts[2],
        n_mm: counts[3],
    })
}

/// Correlation coefficient and its standard error from counts:
/// `E = (n_pp + n_mm - n_pm - n_mp) / N`, `stderr = sqrt((1 - E^2) / N)`.
pub fn correlation_from_counts(rec: &CoincidenceRecord) -> Result<(f64, f64)> {
    let n = rec.total();
    if n == 0 {
        return Err(Error::Usage(format!(
            "record at {} has zero total counts",
            rec.setting
        )));
    }
    let n = n as f64;
    let e = ((rec.n_pp + rec.n_mm) as f64 - (rec.n_pm + rec.n_mp) as f64) / n;
    let stderr = ((1.0 - e * e).max(0.0) / n).sqrt();
    Ok((e, stderr))
}

/// Matches `records` one-to-one against `required` settings, in the
/// required order. Errors name missing or duplicated settings and reject
/// records at unexpected angles.
fn match_settings<'a>(
    records: &'a [CoincidenceRecord],
    required: &[AnalyzerSetting],
) -> Result<Vec<&'a CoincidenceRecord>> {
    let mut out = Vec::with_capacity(required.len());
    let mut used = vec![false; records.len()];
    for want in required {
        let mut found: Option<usize> = None;
        for (i, rec) in records.iter().enumerate() {
            if rec.setting.approx_eq(want, ANGLE_MATCH_TOL) {
                if found.is_some() {
                    return Err(Error::Usage(format!("duplicate setting {want}")));
                }
                found = Some(i);
            }
        }
        match found {
            Some(i) => {
                used[i] = true;
                out.push(&records[i]);
            }
            None => return Err(Error::Usage(format!("missing setting {want}"))),
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(Error::Usage(format!(
            "unexpected setting {} does not belong to this scheme",
            records[i].setting
        )));
    }
    Ok(out)
}

fn chsh_from_correlations(
    e: [f64; 4],
    var: [f64; 4],
    sign: SignVariant,
    pairs: u64,
) -> Result<BellEstimate> {
    let value = sign.factor() * (e[0] - e[1]) + e[2] + e[3];
    let stderr = var.iter().sum::<f64>().sqrt();
    BellEstimate::new(value, stderr, sign, Method::Chsh, pairs)
}

fn simplified_from_correlations(
    e: [f64; 2],
    var: [f64; 2],
    sign: SignVariant,
    pairs: u64,
) -> Result<BellEstimate> {
    let value = SQRT_2 * (sign.factor() * e[0] + e[1]);
    let stderr = SQRT_2 * (var[0] + var[1]).sqrt();
    BellEstimate::new(value, stderr, sign, Method::Simplified, pairs)
}

/// CHSH estimate from four records at the settings of [`chsh_settings`]:
/// `S = +/- (E(0,pi/8) - E(0,3pi/8)) + E(pi/4,pi/8) + E(pi/4,3pi/8)`.
/// Standard errors combine in quadrature across the independent settings.
pub fn estimate_chsh(records: &[CoincidenceRecord], sign: SignVariant) -> Result<BellEstimate> {
    let matched = match_settings(records, &chsh_settings())?;
    let mut e = [0.0; 4];
    let mut var = [0.0; 4];
    let mut pairs = 0;
    for (i, rec) in matched.iter().enumerate() {
        let (ei, si) = correlation_from_counts(rec)?;
        e[i] = ei;
        var[i] = si * si;
        pairs += rec.total();
    }
    chsh_from_correlations(e, var, sign, pairs)
}

/// CHSH estimate in the infinite-pair limit: exact outcome probabilities
/// replace sampled counts and the standard error is zero.
pub fn estimate_chsh_exact(rho: &DensityMatrix, sign: SignVariant) -> BellEstimate {
    let e = chsh_settings().map(|s| outcome_probabilities(rho, s).correlation());
    chsh_from_correlations(e, [0.0; 4], sign, 0).expect("exact correlations are bounded")
}

/// Two-setting estimate from records at the settings of
/// [`simplified_settings`]: `S' = sqrt2 (+/- E(0,0) + E(pi/4,pi/4))`.
pub fn estimate_simplified(
    records: &[CoincidenceRecord],
    sign: SignVariant,
) -> Result<BellEstimate> {
    let matched = match_settings(records, &simplified_settings())?;
    let mut e = [0.0; 2];
    let mut var = [0.0; 2];
    let mut pairs = 0;
    for (i, rec) in matched.iter().enumerate() {
        let (ei, si) = correlation_from_counts(rec)?;
        e[i] = ei;
        var[i] = si * si;
        pairs += rec.total();
    }
    simplified_from_correlations(e, var, sign, pairs)
}

/// Two-setting estimate in the infinite-pair limit.
pub fn estimate_simplified_exact(rho: &DensityMatrix, sign: SignVariant) -> BellEstimate {
    let e = simplified_settings().map(|s| outcome_probabilities(rho, s).correlation());
    simplified_from_correlations(e, [0.0; 2], sign, 0).expect("exact correlations are bounded")
}

/// Within-basis coincidence fractions for the eight letter pairs the
/// coincidence-sum form of the Bell parameter combines. The struct carries
/// all eight fields, so an incomplete set cannot be represented.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceFractions {
    pub hh: f64,
    pub hv: f64,
    pub vh: f64,
    pub vv: f64,
    pub ss: f64,
    pub st: f64,
    pub ts: f64,
    pub tt: f64,
}

impl CoincidenceFractions {
    /// Exact fractions of a state, one coincidence-projector expectation
    /// per letter pair.
    pub fn from_state(rho: &DensityMatrix) -> Self {
        use crate::bell::{coincidence_operator, Polarization::*};
        let f = |a, b| {
            let op = coincidence_operator(a, b).expect("same-basis letters");
            crate::qpol::expectation(rho, &op).expect("projector expectation")
        };
        Self {
            hh: f(H, H),
            hv: f(H, V),
            vh: f(V, H),
            vv: f(V, V),
            ss: f(S, S),
            st: f(S, T),
            ts: f(T, S),
            tt: f(T, T),
        }
    }
}

/// Bell parameter from coincidence fractions:
/// `S'/sqrt2 = +/- (f_hh + f_vv - f_hv - f_vh) + (f_ss + f_tt - f_st - f_ts)`.
/// Each basis group must be normalized to 1 within 1e-9.
pub fn bell_from_fractions(f: &CoincidenceFractions, sign: SignVariant) -> Result<f64> {
    let hv_sum = f.hh + f.hv + f.vh + f.vv;
    let st_sum = f.ss + f.st + f.ts + f.tt;
    if (hv_sum - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("HV fractions sum to {hv_sum}, not 1")));
    }
    if (st_sum - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("ST fractions sum to {st_sum}, not 1")));
    }
    let hv = f.hh + f.vv - f.hv - f.vh;
    let st = f.ss + f.tt - f.st - f.ts;
    Ok(SQRT_2 * (sign.factor() * hv + st))
}

/// Points in the default fringe scan over Bob's angle.
pub const FRINGE_GRID_POINTS: usize = 17;

/// Evenly spaced beta grid over [0, pi], inclusive.
pub fn default_fringe_grid() -> Vec<f64> {
    (0..FRINGE_GRID_POINTS)
        .map(|k| k as f64 * (std::f64::consts::PI / (FRINGE_GRID_POINTS - 1) as f64))
        .collect()
}

fn check_fringe_grid(beta_grid: &[f64]) -> Result<()> {
    if beta_grid.len() < 8 {
        return Err(Error::Usage(format!(
            "fringe grid needs at least 8 points, got {}",
            beta_grid.len()
        )));
    }
    if beta_grid.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("fringe grid point"));
    }
    let min = beta_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let max = beta_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min < std::f64::consts::PI - 1e-9 {
        return Err(Error::Usage(format!(
            "fringe grid spans {:.6} rad, needs at least pi",
            max - min
        )));
    }
    Ok(())
}

/// One fixed-frequency sinusoid fit: E(beta) ~ a cos 2beta + b sin 2beta
/// by linear least squares on the two quadrature components. Returns the
/// fitted amplitude (the fringe visibility) and its first-order variance.
fn fit_visibility(betas: &[f64], es: &[f64]) -> Result<(f64, f64)> {
    let n = betas.len();
    let (mut scc, mut scs, mut sss) = (0.0, 0.0, 0.0);
    let (mut sce, mut sse) = (0.0, 0.0);
    for (&beta, &e) in betas.iter().zip(es) {
        let (s, c) = (2.0 * beta).sin_cos();
        scc += c * c;
        scs += c * s;
        sss += s * s;
        sce += c * e;
        sse += s * e;
    }
    let det = scc * sss - scs * scs;
    if det.abs() < 1e-9 * n as f64 {
        return Err(Error::Usage(
            "degenerate fringe grid: quadratures are collinear".into(),
        ));
    }
    let a = (sss * sce - scs * sse) / det;
    let b = (scc * sse - scs * sce) / det;
    let vis = a.hypot(b);

    // Residual-based covariance of (a, b), then first-order variance of
    // the amplitude. Exact inputs leave zero residual and zero variance.
    let mut rss = 0.0;
    for (&beta, &e) in betas.iter().zip(es) {
        let (s, c) = (2.0 * beta).sin_cos();
        let r = e - a * c - b * s;
        rss += r * r;
    }
    let sigma2 = rss / (n as f64 - 2.0);
    let c00 = sigma2 * sss / det;
    let c01 = -sigma2 * scs / det;
    let c11 = sigma2 * scc / det;
    let var = if vis > 1e-12 {
        (a * a * c00 + 2.0 * a * b * c01 + b * b * c11) / (vis * vis)
    } else {
        c00 + c11
    };
    Ok((vis, var.max(0.0)))
}

fn fringe_estimate_from_scan(
    scans: [(Vec<f64>, Vec<f64>); 2],
    pairs_used: u64,
) -> Result<BellEstimate> {
    let mut value = 0.0;
    let mut var = 0.0;
    for (betas, es) in &scans {
        let (vis, v) = fit_visibility(betas, es)?;
        value += SQRT_2 * vis;
        var += 2.0 * v;
    }
    BellEstimate::new(
        value,
        var.sqrt(),
        SignVariant::Plus,
        Method::Fringe,
        pairs_used,
    )
}

/// Fringe-visibility estimate: scan Bob's angle over `beta_grid` for Alice
/// at 0 and at pi/4, fit each correlation fringe to a fixed-frequency
/// sinusoid, and report `2 sqrt2` times the mean fitted visibility.
///
/// This reading of the fringe method is an interpretation: the visibility
/// equals the correlation strength only for rotationally symmetric states
/// (the Bell states and their Werner mixtures), and the estimate is
/// reported under the `+` sign variant. For general states use the CHSH or
/// two-setting estimators.
///
/// Consumes `2 * beta_grid.len()` consecutive RNG setting slots starting
/// at `stream`.
pub fn estimate_fringe_visibility(
    rho: &DensityMatrix,
    pairs_per_point: u64,
    beta_grid: &[f64],
    stream: StreamId,
) -> Result<BellEstimate> {
    check_fringe_grid(beta_grid)?;
    if pairs_per_point == 0 {
        return Err(Error::Usage(
            "fringe scan needs at least 1 pair per point".into(),
        ));
    }
    let mut scans: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    for (ai, &alpha) in [0.0, FRAC_PI_4].iter().enumerate() {
        for (k, &beta) in beta_grid.iter().enumerate() {
            let slot = (ai * beta_grid.len() + k) as u64;
            let rec = sample_coincidences(
                rho,
                AnalyzerSetting::new(alpha, beta)?,
                pairs_per_point,
                stream.offset(slot),
            )?;
            let (e, _) = correlation_from_counts(&rec)?;
            scans[ai].0.push(beta);
            scans[ai].1.push(e);
        }
    }
    let pairs = 2 * beta_grid.len() as u64 * pairs_per_point;
    fringe_estimate_from_scan(scans, pairs)
}

/// Fringe-visibility estimate in the infinite-pair limit.
pub fn estimate_fringe_exact(rho: &DensityMatrix, beta_grid: &[f64]) -> Result<BellEstimate> {
    check_fringe_grid(beta_grid)?;
    let mut scans: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    for (ai, &alpha) in [0.0, FRAC_PI_4].iter().enumerate() {
        for &beta in beta_grid {
            let e = outcome_probabilities(rho, AnalyzerSetting::new(alpha, beta)?).correlation();
            scans[ai].0.push(beta);
            scans[ai].1.push(e);
        }
    }
    fringe_estimate_from_scan(scans, 0)
}
