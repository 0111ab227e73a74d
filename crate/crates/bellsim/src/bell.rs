//! Bell states, correlation and Bell operators, coincidence projectors,
//! and the sign-pattern classifier.
//!
//! Angle convention: every angle in this crate is an analysis angle, the
//! polarization direction actually measured. A half-wave plate set to
//! `theta/2` analyzes at `theta`; the CLI converts wave-plate settings on
//! ingestion, nothing here ever sees them.
//!
//! The HV basis is horizontal/vertical linear polarization; the ST basis is
//! HV rotated by an analysis angle of 45 degrees, with
//! `|s> = (|h> + |v>)/sqrt2` and `|t> = (-|h> + |v>)/sqrt2`. Bell states
//! requested in the ST basis are returned in HV product coordinates,
//! keeping the global sign the basis change produces (the Psi+ ST state
//! comes out as minus the Phi- HV state), so the basis-correspondence
//! identities can be tested componentwise.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8, SQRT_2};

use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::qpol::{pure_to_density, tensor_product, Mat2, Operator, PureState};
use crate::{Error, Result};

/// Largest Bell-parameter magnitude quantum mechanics allows, 2*sqrt(2).
pub const TSIRELSON_BOUND: f64 = 2.0 * SQRT_2;

/// Largest Bell-parameter magnitude local hidden-variable models allow.
pub const CLASSICAL_BOUND: f64 = 2.0;

/// One of the four maximally entangled two-photon states.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellKind {
    #[serde(rename = "phi+")]
    PhiPlus,
    #[serde(rename = "phi-")]
    PhiMinus,
    #[serde(rename = "psi+")]
    PsiPlus,
    #[serde(rename = "psi-")]
    PsiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [
        BellKind::PhiPlus,
        BellKind::PhiMinus,
        BellKind::PsiPlus,
        BellKind::PsiMinus,
    ];
}

impl std::fmt::Display for BellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BellKind::PhiPlus => "Phi+",
            BellKind::PhiMinus => "Phi-",
            BellKind::PsiPlus => "Psi+",
            BellKind::PsiMinus => "Psi-",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for BellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phi+" => Ok(BellKind::PhiPlus),
            "phi-" => Ok(BellKind::PhiMinus),
            "psi+" => Ok(BellKind::PsiPlus),
            "psi-" => Ok(BellKind::PsiMinus),
            other => Err(Error::Usage(format!(
                "unknown Bell state `{other}` (expected phi+, phi-, psi+, psi-)"
            ))),
        }
    }
}

/// Linear polarization basis tag: HV, or ST at 45 degrees to it.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Hv,
    St,
}

/// Selects the +/- variant of the Bell parameter.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignVariant {
    #[serde(rename = "plus")]
    Plus,
    #[serde(rename = "minus")]
    Minus,
}

impl SignVariant {
    pub fn factor(self) -> f64 {
        match self {
            SignVariant::Plus => 1.0,
            SignVariant::Minus => -1.0,
        }
    }
}

impl std::fmt::Display for SignVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SignVariant::Plus => "+",
            SignVariant::Minus => "-",
        })
    }
}

/// Per-party outcome of a polarizer measurement: transmitted or sent to
/// the orthogonal port.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PolarizationOutcome {
    Pass,
    Reject,
}

/// Single-photon polarization letter; h/v live in the HV basis, s/t in ST.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    H,
    V,
    S,
    T,
}

impl Polarization {
    pub fn basis(self) -> Basis {
        match self {
            Polarization::H | Polarization::V => Basis::Hv,
            Polarization::S | Polarization::T => Basis::St,
        }
    }

    /// Single-photon ket in HV coordinates.
    fn ket(self) -> Vector2<Complex64> {
        let r = FRAC_1_SQRT_2;
        let (a, b) = match self {
            Polarization::H => (1.0, 0.0),
            Polarization::V => (0.0, 1.0),
            Polarization::S => (r, r),
            Polarization::T => (-r, r),
        };
        Vector2::new(Complex64::new(a, 0.0), Complex64::new(b, 0.0))
    }
}

/// The requested Bell state in HV product coordinates.
///
/// ST-basis states are mapped through the 45-degree basis change, keeping
/// the resulting global sign: Phi+ST = Phi+HV, Phi-ST = Psi+HV,
/// Psi+ST = -Phi-HV, Psi-ST = Psi-HV.
pub fn bell_state(kind: BellKind, basis: Basis) -> PureState {
    let r = FRAC_1_SQRT_2;
    let amp = match (basis, kind) {
        (Basis::Hv, BellKind::PhiPlus) | (Basis::St, BellKind::PhiPlus) => [r, 0.0, 0.0, r],
        (Basis::Hv, BellKind::PhiMinus) => [r, 0.0, 0.0, -r],
        (Basis::Hv, BellKind::PsiPlus) | (Basis::St, BellKind::PhiMinus) => [0.0, r, r, 0.0],
        (Basis::Hv, BellKind::PsiMinus) | (Basis::St, BellKind::PsiMinus) => [0.0, r, -r, 0.0],
        (Basis::St, BellKind::PsiPlus) => [-r, 0.0, 0.0, r],
    };
    PureState::from_real(amp).expect("Bell states are normalized")
}

/// The +/-1-valued single-party polarizer observable at analysis angle
/// `theta`: `cos(2 theta) (|h><h| - |v><v|) + sin(2 theta) (|h><v| + |v><h|)`.
///
/// The matrix is the same for either party; which photon it acts on is
/// fixed by its slot in the tensor product.
pub fn analyzer_axis(angle: f64) -> Mat2 {
    let (s, c) = (2.0 * angle).sin_cos();
    Mat2::new(
        Complex64::new(c, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(-c, 0.0),
    )
}

/// Two-party correlation operator at analyzer angles (alpha, beta):
/// the tensor product of the single-party observables. Hermitian, squares
/// to the identity, eigenvalues +/-1.
pub fn correlation_operator(alpha: f64, beta: f64) -> Operator {
    tensor_product(&analyzer_axis(alpha), &analyzer_axis(beta))
}

/// The four-setting CHSH Bell operator
/// `+/- (E(0, pi/8) - E(0, 3pi/8)) + E(pi/4, pi/8) + E(pi/4, 3pi/8)`.
pub fn chsh_operator(sign: SignVariant) -> Operator {
    let s = Complex64::new(sign.factor(), 0.0);
    let m = (correlation_operator(0.0, FRAC_PI_8).matrix()
        - correlation_operator(0.0, 3.0 * FRAC_PI_8).matrix())
        * s
        + correlation_operator(FRAC_PI_4, FRAC_PI_8).matrix()
        + correlation_operator(FRAC_PI_4, 3.0 * FRAC_PI_8).matrix();
    Operator::from_matrix(m).expect("finite by construction")
}

/// The two-setting Bell operator `sqrt2 (+/- E(0,0) + E(pi/4, pi/4))`,
/// entrywise equal to [`chsh_operator`] of the same sign.
pub fn simplified_operator(sign: SignVariant) -> Operator {
    let s = Complex64::new(sign.factor(), 0.0);
    let m = (correlation_operator(0.0, 0.0).matrix() * s
        + correlation_operator(FRAC_PI_4, FRAC_PI_4).matrix())
        * Complex64::new(SQRT_2, 0.0);
    Operator::from_matrix(m).expect("finite by construction")
}

/// Rank-1 projector onto the HV Bell state of the given kind. Its
/// expectation in any state is the probability of observing that Bell
/// state, and the Bell operators decompose as
/// `S+ = 2 sqrt2 (n_Phi+ - n_Psi-)` and `S- = 2 sqrt2 (n_Psi+ - n_Phi-)`.
pub fn bell_number_operator(kind: BellKind) -> Operator {
    let proj = pure_to_density(&bell_state(kind, Basis::Hv));
    Operator::from_matrix(*proj.matrix()).expect("finite by construction")
}

/// Coincidence projector `|a><a| ⊗ |b><b|` in HV coordinates. Its
/// expectation is the fraction of pairs where Alice observes polarization
/// `a` and Bob observes `b`.
///
/// Both letters must come from the same basis family; the coincidence-sum
/// form of the Bell parameter only combines within-basis fractions.
pub fn coincidence_operator(a: Polarization, b: Polarization) -> Result<Operator> {
    if a.basis() != b.basis() {
        return Err(Error::Usage(format!(
            "coincidence letters {a:?} and {b:?} mix the HV and ST bases"
        )));
    }
    let ka = a.ket();
    let kb = b.ket();
    let pa = ka * ka.adjoint();
    let pb = kb * kb.adjoint();
    Ok(tensor_product(&pa, &pb))
}

/// Bell-state discrimination from the pair of sign-variant Bell values.
///
/// Matches `(s_plus, s_minus)` against the four signatures
/// `(+2sqrt2, 0)`, `(0, +2sqrt2)`, `(0, -2sqrt2)`, `(-2sqrt2, 0)`; both
/// components must match within `tol`, and the match must be unique.
/// Anything else is unclassified (`None`).
pub fn classify_bell_state(s_plus: f64, s_minus: f64, tol: f64) -> Option<BellKind> {
    const ROWS: [(BellKind, f64, f64); 4] = [
        (BellKind::PhiPlus, TSIRELSON_BOUND, 0.0),
        (BellKind::PsiPlus, 0.0, TSIRELSON_BOUND),
        (BellKind::PhiMinus, 0.0, -TSIRELSON_BOUND),
        (BellKind::PsiMinus, -TSIRELSON_BOUND, 0.0),
    ];
    let mut hit = None;
    for (kind, tp, tm) in ROWS {
        if (s_plus - tp).abs() <= tol && (s_minus - tm).abs() <= tol {
            if hit.is_some() {
                return None; // ambiguous under a huge tolerance
            }
            hit = Some(kind);
        }
    }
    hit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qpol::{
        expectation, max_abs_diff, random_density, DensityMatrix, Mat4, IDENTITY_TOL, STATE_TOL,
    };
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn braket(psi: &PureState, op: &Operator) -> f64 {
        expectation(&pure_to_density(psi), op).unwrap()
    }

    #[test]
    fn hv_bell_states_are_orthonormal() {
        let states: Vec<PureState> = BellKind::ALL
            .iter()
            .map(|&k| bell_state(k, Basis::Hv))
            .collect();
        for (i, a) in states.iter().enumerate() {
            for (j, b) in states.iter().enumerate() {
                let gram: Complex64 = (a.vector().adjoint() * b.vector())[(0, 0)];
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram - Complex64::new(want, 0.0)).norm() < IDENTITY_TOL);
            }
        }
    }

    #[test]
    fn st_hv_correspondence_holds_with_signs() {
        let cases = [
            (BellKind::PhiPlus, bell_state(BellKind::PhiPlus, Basis::Hv)),
            (BellKind::PhiMinus, bell_state(BellKind::PsiPlus, Basis::Hv)),
            (
                BellKind::PsiPlus,
                bell_state(BellKind::PhiMinus, Basis::Hv).negated(),
            ),
            (
                BellKind::PsiMinus,
                bell_state(BellKind::PsiMinus, Basis::Hv),
            ),
        ];
        for (kind, want) in cases {
            let got = bell_state(kind, Basis::St);
            assert!(
                got.max_abs_diff(&want) < IDENTITY_TOL,
                "{kind} ST state disagrees with its HV form"
            );
        }
    }

    #[test]
    fn st_states_from_st_letter_kets() {
        // Independent route: build (|ss> + |tt>)/sqrt2 etc. from the s/t
        // single-photon kets and compare with bell_state(_, St).
        let kron = |a: &Vector2<Complex64>, b: &Vector2<Complex64>| -> [Complex64; 4] {
            [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
        };
        let s = Polarization::S.ket();
        let t = Polarization::T.ket();
        let r = Complex64::new(FRAC_1_SQRT_2, 0.0);

        let combos: [(BellKind, [Complex64; 4], [Complex64; 4], f64); 4] = [
            (BellKind::PhiPlus, kron(&s, &s), kron(&t, &t), 1.0),
            (BellKind::PhiMinus, kron(&s, &s), kron(&t, &t), -1.0),
            (BellKind::PsiPlus, kron(&s, &t), kron(&t, &s), 1.0),
            (BellKind::PsiMinus, kron(&s, &t), kron(&t, &s), -1.0),
        ];
        for (kind, first, second, sgn) in combos {
            let want: Vec<Complex64> = first
                .iter()
                .zip(second.iter())
                .map(|(x, y)| (x + y * Complex64::new(sgn, 0.0)) * r)
                .collect();
            let got = bell_state(kind, Basis::St).amplitudes();
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).norm() < IDENTITY_TOL, "{kind} mismatch");
            }
        }
    }

    #[test]
    fn analyzer_axis_special_angles() {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        let z = analyzer_axis(0.0);
        assert_abs_diff_eq!(z[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[(1, 1)].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[(0, 1)].re, 0.0, epsilon = 1e-15);

        let x = analyzer_axis(FRAC_PI_4);
        assert_abs_diff_eq!(x[(0, 1)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[(0, 0)].re, 0.0, epsilon = 1e-15);

        let mz = analyzer_axis(FRAC_PI_2);
        assert_abs_diff_eq!(mz[(0, 0)].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mz[(1, 1)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn analyzer_axis_eigenvalues_are_unit() {
        // det = -1 and trace = 0 for every angle, so the eigenvalues are
        // exactly +1 and -1.
        for k in 0..50 {
            let theta = k as f64 * 0.13 - 3.0;
            let m = analyzer_axis(theta);
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
            assert_abs_diff_eq!(det, -1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m.trace().re, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn correlation_expectations_on_reference_states() {
        let phi_plus = pure_to_density(&bell_state(BellKind::PhiPlus, Basis::Hv));
        let e = expectation(&phi_plus, &correlation_operator(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(e, 1.0, epsilon = 1e-12);

        // Classical hh/vv mixture shows no correlation at 45 degrees.
        let mut m = Mat4::zeros();
        m[(0, 0)] = Complex64::new(0.5, 0.0);
        m[(3, 3)] = Complex64::new(0.5, 0.0);
        let mix = crate::qpol::validate_density(&m).unwrap();
        let e = expectation(&mix, &correlation_operator(FRAC_PI_4, FRAC_PI_4)).unwrap();
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-12);

        let e = expectation(&phi_plus, &correlation_operator(0.0, 3.0 * FRAC_PI_8)).unwrap();
        assert_abs_diff_eq!(e, -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn correlation_operator_squares_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let alpha: f64 = rng.random_range(-6.3..6.3);
            let beta: f64 = rng.random_range(-6.3..6.3);
            let e = correlation_operator(alpha, beta);
            let sq = e.matrix() * e.matrix();
            assert!(max_abs_diff(&sq, &Mat4::identity()) < IDENTITY_TOL);
            assert!(e.is_hermitian(IDENTITY_TOL));
        }
    }

    #[test]
    fn chsh_operator_table_rows() {
        let s_plus = chsh_operator(SignVariant::Plus);
        assert_abs_diff_eq!(
            braket(&bell_state(BellKind::PhiPlus, Basis::Hv), &s_plus),
            TSIRELSON_BOUND,
            epsilon = IDENTITY_TOL
        );
        assert_abs_diff_eq!(
            braket(&bell_state(BellKind::PsiMinus, Basis::Hv), &s_plus),
            -TSIRELSON_BOUND,
            epsilon = IDENTITY_TOL
        );
    }

    #[test]
    fn chsh_operator_spectrum() {
        // Eigendecomposition oracle on the assembled 4x4 matrix.
        let s_plus = chsh_operator(SignVariant::Plus);
        let eig = s_plus.matrix().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        let want = [-TSIRELSON_BOUND, 0.0, 0.0, TSIRELSON_BOUND];
        for (got, want) in vals.iter().zip(want.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn simplified_equals_chsh_entrywise() {
        for sign in [SignVariant::Plus, SignVariant::Minus] {
            let d = simplified_operator(sign).max_abs_diff(&chsh_operator(sign));
            assert!(d < IDENTITY_TOL, "sign {sign}: max deviation {d:.3e}");
        }
    }

    #[test]
    fn simplified_operator_table_rows() {
        let s_minus = simplified_operator(SignVariant::Minus);
        assert_abs_diff_eq!(
            braket(&bell_state(BellKind::PsiPlus, Basis::Hv), &s_minus),
            TSIRELSON_BOUND,
            epsilon = IDENTITY_TOL
        );
        assert_abs_diff_eq!(
            braket(&bell_state(BellKind::PhiMinus, Basis::Hv), &s_minus),
            -TSIRELSON_BOUND,
            epsilon = IDENTITY_TOL
        );
    }

    #[test]
    fn bell_number_operators_decompose_bell_operators() {
        let proj = |k| bell_number_operator(k);
        assert_abs_diff_eq!(
            braket(
                &bell_state(BellKind::PhiPlus, Basis::Hv),
                &proj(BellKind::PhiPlus)
            ),
            1.0,
            epsilon = IDENTITY_TOL
        );
        assert_abs_diff_eq!(
            braket(
                &bell_state(BellKind::PhiMinus, Basis::Hv),
                &proj(BellKind::PhiPlus)
            ),
            0.0,
            epsilon = IDENTITY_TOL
        );

        let scale = Complex64::new(TSIRELSON_BOUND, 0.0);
        let lhs = (proj(BellKind::PhiPlus).matrix() - proj(BellKind::PsiMinus).matrix()) * scale;
        assert!(max_abs_diff(&lhs, chsh_operator(SignVariant::Plus).matrix()) < IDENTITY_TOL);

        let lhs = (proj(BellKind::PsiPlus).matrix() - proj(BellKind::PhiMinus).matrix()) * scale;
        assert!(max_abs_diff(&lhs, chsh_operator(SignVariant::Minus).matrix()) < IDENTITY_TOL);
    }

    #[test]
    fn coincidence_fractions_on_reference_states() {
        let phi_plus = pure_to_density(&bell_state(BellKind::PhiPlus, Basis::Hv));
        let f = |a, b, rho: &DensityMatrix| {
            expectation(rho, &coincidence_operator(a, b).unwrap()).unwrap()
        };
        assert_abs_diff_eq!(
            f(Polarization::H, Polarization::H, &phi_plus),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            f(Polarization::H, Polarization::V, &phi_plus),
            0.0,
            epsilon = 1e-12
        );
        let mixed = DensityMatrix::maximally_mixed();
        assert_abs_diff_eq!(
            f(Polarization::S, Polarization::S, &mixed),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn coincidence_rejects_mixed_basis_letters() {
        assert!(matches!(
            coincidence_operator(Polarization::H, Polarization::S),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn coincidence_sum_reconstructs_bell_value() {
        // sqrt2 [ +/- (f_hh + f_vv - f_hv - f_vh) + (f_ss + f_tt - f_st - f_ts) ]
        // equals Tr(rho S'+-) on random states.
        use Polarization::*;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let rho = random_density(&mut rng);
            let f = |a, b| expectation(&rho, &coincidence_operator(a, b).unwrap()).unwrap();
            let hv = f(H, H) + f(V, V) - f(H, V) - f(V, H);
            let st = f(S, S) + f(T, T) - f(S, T) - f(T, S);
            for sign in [SignVariant::Plus, SignVariant::Minus] {
                let sum = SQRT_2 * (sign.factor() * hv + st);
                let want = expectation(&rho, &simplified_operator(sign)).unwrap();
                assert_abs_diff_eq!(sum, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn bell_value_is_bounded_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let rho = random_density(&mut rng);
            for sign in [SignVariant::Plus, SignVariant::Minus] {
                let v = expectation(&rho, &simplified_operator(sign)).unwrap();
                assert!(v.abs() <= TSIRELSON_BOUND + STATE_TOL);
            }
        }
    }

    #[test]
    fn singlet_correlation_is_rotation_invariant() {
        let singlet = pure_to_density(&bell_state(BellKind::PsiMinus, Basis::Hv));
        for k in 0..32 {
            let theta = k as f64 * 0.2 - 3.0;
            let e = expectation(&singlet, &correlation_operator(theta, theta)).unwrap();
            assert_abs_diff_eq!(e, -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn classifier_matches_table() {
        let t = TSIRELSON_BOUND;
        assert_eq!(classify_bell_state(t, 0.0, 0.1), Some(BellKind::PhiPlus));
        assert_eq!(classify_bell_state(0.0, t, 0.1), Some(BellKind::PsiPlus));
        assert_eq!(classify_bell_state(0.0, -t, 0.1), Some(BellKind::PhiMinus));
        assert_eq!(classify_bell_state(-t, 0.0, 0.1), Some(BellKind::PsiMinus));
        assert_eq!(classify_bell_state(1.0, 1.0, 0.1), None);
        // Requires both components to match, not just one.
        assert_eq!(classify_bell_state(t, 1.0, 0.1), None);
        // A tolerance so loose that rows overlap is ambiguous.
        assert_eq!(classify_bell_state(t, 0.0, 10.0), None);
    }
}
