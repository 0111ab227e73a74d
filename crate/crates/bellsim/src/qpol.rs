//! Dense complex linear algebra for the two-photon polarization space.
//!
//! Everything is expressed in the ordered product basis
//! (|hh>, |hv>, |vh>, |vv>), Alice-major, so a two-photon operator built
//! from single-photon factors is `alice ⊗ bob`. The dimension is fixed at
//! 4, so storage is dense and matrix work is delegated to `nalgebra`
//! behind the small typed surface below.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// 2x2 complex matrix over one photon's polarization space.
pub type Mat2 = Matrix2<Complex64>;
/// 4x4 complex matrix over the two-photon polarization space.
pub type Mat4 = Matrix4<Complex64>;

/// Tolerance for state-validity checks (normalization, Hermiticity, trace,
/// positivity).
pub const STATE_TOL: f64 = 1e-9;

/// Tolerance for algebraic identities that should hold to double-precision
/// rounding.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Eigenvalues at or above `-PSD_EXACT_TOL` count as exactly non-negative:
/// the matrix is accepted untouched. Anything between `-STATE_TOL` and
/// `-PSD_EXACT_TOL` is treated as rounding debris from user input and gets
/// repaired (clamped to 0, then renormalized to unit trace).
const PSD_EXACT_TOL: f64 = 1e-12;

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

fn all_finite(m: &Mat4) -> bool {
    m.iter().all(|z| finite(*z))
}

/// Largest entrywise deviation between two 4x4 matrices.
pub fn max_abs_diff(a: &Mat4, b: &Mat4) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn hermiticity_defect(m: &Mat4) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// A normalized pure state of the photon pair.
///
/// Amplitudes are stored in the (|hh>, |hv>, |vh>, |vv>) basis and must be
/// finite and normalized to 1 within [`STATE_TOL`]. Global phases are kept
/// as given, so basis-change identities can be checked verbatim.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amp: Vector4<Complex64>,
}

impl PureState {
    pub fn new(amp: [Complex64; 4]) -> Result<Self> {
        if !amp.iter().all(|z| finite(*z)) {
            return Err(Error::NonFinite("pure-state amplitude"));
        }
        let norm_sq: f64 = amp.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > STATE_TOL {
            return Err(Error::NotNormalized(norm_sq.sqrt()));
        }
        Ok(Self {
            amp: Vector4::from_row_slice(&amp),
        })
    }

    /// Real amplitudes, a convenience for states with no imaginary part.
    pub fn from_real(amp: [f64; 4]) -> Result<Self> {
        Self::new(amp.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        [self.amp[0], self.amp[1], self.amp[2], self.amp[3]]
    }

    pub fn vector(&self) -> &Vector4<Complex64> {
        &self.amp
    }

    /// Largest componentwise deviation from another state.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.amp
            .iter()
            .zip(other.amp.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// The same ray with every amplitude negated.
    pub fn negated(&self) -> Self {
        Self { amp: -self.amp }
    }
}

/// An observable (or any finite operator) on the two-photon space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: Mat4,
}

impl Operator {
    pub fn from_matrix(m: Mat4) -> Result<Self> {
        if !all_finite(&m) {
            return Err(Error::NonFinite("operator entry"));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self {
            m: Mat4::identity(),
        }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.m)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Largest entrywise deviation from another operator.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.m, &other.m)
    }
}

/// A validated two-photon density matrix: Hermitian, unit trace, positive
/// semidefinite, all within [`STATE_TOL`]. Construction goes through
/// [`validate_density`] (or [`pure_to_density`]), so a value of this type
/// is always a physical state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: Mat4,
}

impl DensityMatrix {
    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    /// The maximally mixed state I/4.
    pub fn maximally_mixed() -> Self {
        Self {
            m: Mat4::identity() * Complex64::new(0.25, 0.0),
        }
    }
}

/// Kronecker product `a ⊗ b` in the Alice-major basis ordering.
///
/// Total on finite inputs; `Tr(a ⊗ b) = Tr(a) Tr(b)`.
pub fn tensor_product(a: &Mat2, b: &Mat2) -> Operator {
    Operator { m: a.kronecker(b) }
}

/// Expectation value `Tr(rho obs)` of a Hermitian observable.
///
/// The trace of a valid state against a Hermitian operator is real; the
/// imaginary residue is checked against [`STATE_TOL`] and discarded.
pub fn expectation(rho: &DensityMatrix, obs: &Operator) -> Result<f64> {
    let defect = obs.hermiticity_defect();
    if defect > STATE_TOL {
        return Err(Error::ObservableNotHermitian(defect));
    }
    let tr = (rho.m * obs.m).trace();
    if tr.im.abs() > STATE_TOL {
        return Err(Error::Numeric(format!(
            "expectation value has imaginary residue {:.3e}",
            tr.im
        )));
    }
    Ok(tr.re)
}

/// Validates a raw 4x4 matrix as a density matrix.
///
/// Accepts iff the matrix is Hermitian, unit-trace, and positive
/// semidefinite within [`STATE_TOL`], naming the violated invariant
/// otherwise. Eigenvalues in `(-STATE_TOL, -1e-12)` are treated as rounding
/// from user-supplied matrices: they are clamped to zero and the spectrum
/// renormalized to unit trace. Matrices already non-negative to 1e-12 pass
/// through unchanged.
pub fn validate_density(m: &Mat4) -> Result<DensityMatrix> {
    if !all_finite(m) {
        return Err(Error::NonFinite("density-matrix entry"));
    }
    let defect = hermiticity_defect(m);
    if defect > STATE_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(Error::TraceNotOne(tr.re));
    }

    // Symmetrize before the eigensolve so the decomposition sees an exactly
    // Hermitian input.
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let min_eig = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    if min_eig < -STATE_TOL {
        return Err(Error::NotPositiveSemidefinite(min_eig));
    }
    if min_eig >= -PSD_EXACT_TOL {
        return Ok(DensityMatrix { m: *m });
    }

    // Repair band: clamp the offending eigenvalues and renormalize.
    let clamped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let mut repaired = Mat4::zeros();
    for (i, &l) in clamped.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(i);
        repaired += (v * v.adjoint()) * Complex64::new(l / total, 0.0);
    }
    Ok(DensityMatrix { m: repaired })
}

/// Outer product `|psi><psi|` of a normalized pure state.
///
/// The result is idempotent and always passes [`validate_density`] without
/// any eigenvalue clamping.
pub fn pure_to_density(psi: &PureState) -> DensityMatrix {
    DensityMatrix {
        m: psi.amp * psi.amp.adjoint(),
    }
}

/// A Ginibre-random full-rank mixed state: rho = G G^dag / Tr(G G^dag)
/// with i.i.d. complex-normal entries in G. Used by property tests and the
/// acceptance suite.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let g = Mat4::from_fn(|_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let gg = g * g.adjoint();
    let tr = gg.trace().re;
    validate_density(&(gg * Complex64::new(1.0 / tr, 0.0)))
        .expect("Ginibre construction yields a valid state")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Test-local dense kernels, independent of the nalgebra-backed
    // implementation path.

    fn oracle_kron(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 4]; 4] {
        let mut out = [[Complex64::new(0.0, 0.0); 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        out
    }

    fn oracle_matvec(m: &[[Complex64; 4]; 4], v: &[Complex64; 4]) -> [Complex64; 4] {
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (i, row) in m.iter().enumerate() {
            for (j, mij) in row.iter().enumerate() {
                out[i] += mij * v[j];
            }
        }
        out
    }

    fn oracle_trace_product(a: &[[Complex64; 4]; 4], b: &[[Complex64; 4]; 4]) -> Complex64 {
        let mut tr = Complex64::new(0.0, 0.0);
        for i in 0..4 {
            for k in 0..4 {
                tr += a[i][k] * b[k][i];
            }
        }
        tr
    }

    fn as_rows(m: &Mat4) -> [[Complex64; 4]; 4] {
        let mut out = [[Complex64::new(0.0, 0.0); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = m[(i, j)];
            }
        }
        out
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn phi_plus() -> PureState {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        PureState::from_real([r, 0.0, 0.0, r]).unwrap()
    }

    #[test]
    fn tensor_identity_is_identity() {
        let eye = Mat2::identity();
        assert_eq!(tensor_product(&eye, &eye).matrix(), &Mat4::identity());
    }

    #[test]
    fn tensor_of_diagonals() {
        let z = Mat2::new(c(1.0), c(0.0), c(0.0), c(-1.0));
        let got = tensor_product(&z, &z);
        let want = Mat4::from_diagonal(&Vector4::new(c(1.0), c(-1.0), c(-1.0), c(1.0)));
        assert!(max_abs_diff(got.matrix(), &want) == 0.0);
    }

    #[test]
    fn tensor_of_swaps_fixes_phi_plus() {
        // (X ⊗ X) (1,0,0,1)/sqrt2 = (1,0,0,1)/sqrt2, checked against the
        // dense multiply oracle.
        let x = [[c(0.0), c(1.0)], [c(1.0), c(0.0)]];
        let xx = oracle_kron(&x, &x);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v = [c(r), c(0.0), c(0.0), c(r)];
        let want = oracle_matvec(&xx, &v);

        let x2 = Mat2::new(c(0.0), c(1.0), c(1.0), c(0.0));
        let got = tensor_product(&x2, &x2).matrix() * Vector4::from_row_slice(&v);
        for i in 0..4 {
            assert_abs_diff_eq!(got[i].re, want[i].re, epsilon = 1e-15);
            assert_abs_diff_eq!(got[i].re, v[i].re, epsilon = 1e-15);
            assert_abs_diff_eq!(got[i].im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn expectation_of_identity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let rho = random_density(&mut rng);
            let e = expectation(&rho, &Operator::identity()).unwrap();
            assert_abs_diff_eq!(e, 1.0, epsilon = STATE_TOL);
        }
    }

    #[test]
    fn expectation_zz_on_phi_plus() {
        // diag(1,-1) ⊗ diag(1,-1) has expectation +1 on the maximally
        // correlated state.
        let z = Mat2::new(c(1.0), c(0.0), c(0.0), c(-1.0));
        let rho = pure_to_density(&phi_plus());
        let e = expectation(&rho, &tensor_product(&z, &z)).unwrap();
        assert_abs_diff_eq!(e, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_at_pi_8_matches_product_oracle() {
        // Analyzer observables at angles 0 and pi/8; expected value on
        // |Phi+> frozen from the trace-product oracle: cos(pi/4).
        let theta = std::f64::consts::FRAC_PI_8;
        let (s2, c2) = (2.0 * theta).sin_cos();
        let a0 = Mat2::new(c(1.0), c(0.0), c(0.0), c(-1.0));
        let a1 = Mat2::new(c(c2), c(s2), c(s2), c(-c2));
        let obs = tensor_product(&a0, &a1);
        let rho = pure_to_density(&phi_plus());

        let oracle = oracle_trace_product(&as_rows(rho.matrix()), &as_rows(obs.matrix()));
        assert_abs_diff_eq!(oracle.im, 0.0, epsilon = 1e-15);

        let got = expectation(&rho, &obs).unwrap();
        assert_abs_diff_eq!(got, oracle.re, epsilon = 1e-13);
        assert_abs_diff_eq!(got, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-9);
    }

    #[test]
    fn expectation_rejects_non_hermitian() {
        let mut m = Mat4::zeros();
        m[(0, 1)] = c(1.0);
        let obs = Operator::from_matrix(m).unwrap();
        let rho = DensityMatrix::maximally_mixed();
        assert!(matches!(
            expectation(&rho, &obs),
            Err(Error::ObservableNotHermitian(_))
        ));
    }

    #[test]
    fn validate_accepts_maximally_mixed() {
        let m = Mat4::identity() * c(0.25);
        let rho = validate_density(&m).unwrap();
        assert_eq!(rho.matrix(), &m);
    }

    #[test]
    fn validate_accepts_pure_projector_without_clamping() {
        let proj = pure_to_density(&phi_plus());
        let revalidated = validate_density(proj.matrix()).unwrap();
        // Bitwise identical: no repair may run on an exact projector.
        assert_eq!(revalidated.matrix(), proj.matrix());
    }

    #[test]
    fn validate_rejects_negative_eigenvalue() {
        let m = Mat4::from_diagonal(&Vector4::new(c(0.5), c(0.6), c(0.0), c(-0.1)));
        assert!(matches!(
            validate_density(&m),
            Err(Error::NotPositiveSemidefinite(_))
        ));
    }

    #[test]
    fn validate_rejects_bad_trace_and_non_hermitian() {
        let m = Mat4::identity() * c(0.5);
        assert!(matches!(validate_density(&m), Err(Error::TraceNotOne(_))));

        let mut m = Mat4::identity() * c(0.25);
        m[(0, 1)] = c(0.1);
        assert!(matches!(validate_density(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn validate_repairs_small_negative_eigenvalue() {
        let eps = 3e-10;
        let m = Mat4::from_diagonal(&Vector4::new(c(0.5 + eps), c(0.5), c(0.0), c(-eps)));
        let rho = validate_density(&m).unwrap();
        let tr = rho.matrix().trace();
        assert_abs_diff_eq!(tr.re, 1.0, epsilon = 1e-12);
        assert!(rho.matrix()[(3, 3)].re >= 0.0);
    }

    #[test]
    fn pure_to_density_examples() {
        let e0 = PureState::from_real([1.0, 0.0, 0.0, 0.0]).unwrap();
        let rho = pure_to_density(&e0);
        let want = Mat4::from_diagonal(&Vector4::new(c(1.0), c(0.0), c(0.0), c(0.0)));
        assert!(max_abs_diff(rho.matrix(), &want) == 0.0);

        let rho = pure_to_density(&phi_plus());
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert_abs_diff_eq!(rho.matrix()[(i, j)].re, 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(rho.matrix()[(1, 1)].re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pure_to_density_matches_outer_product_oracle() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let psi = PureState::from_real([0.0, r, -r, 0.0]).unwrap();
        let rho = pure_to_density(&psi);

        let amp = psi.amplitudes();
        for i in 0..4 {
            for j in 0..4 {
                let want = amp[i] * amp[j].conj();
                assert_abs_diff_eq!(rho.matrix()[(i, j)].re, want.re, epsilon = 1e-15);
                assert_abs_diff_eq!(rho.matrix()[(i, j)].im, want.im, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(rho.matrix()[(1, 2)].re, -0.5, epsilon = 1e-15);

        // Idempotence of a rank-1 projector.
        let sq = rho.matrix() * rho.matrix();
        assert!(max_abs_diff(&sq, rho.matrix()) < STATE_TOL);
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(matches!(
            PureState::from_real([f64::NAN, 0.0, 0.0, 0.0]),
            Err(Error::NonFinite(_))
        ));
        let mut m = Mat4::zeros();
        m[(0, 0)] = Complex64::new(f64::INFINITY, 0.0);
        assert!(matches!(Operator::from_matrix(m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn unnormalized_state_rejected() {
        assert!(matches!(
            PureState::from_real([1.0, 1.0, 0.0, 0.0]),
            Err(Error::NotNormalized(_))
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_mat2() -> impl Strategy<Value = Mat2> {
            proptest::collection::vec(-1.0f64..1.0, 8).prop_map(|v| {
                Mat2::new(
                    Complex64::new(v[0], v[1]),
                    Complex64::new(v[2], v[3]),
                    Complex64::new(v[4], v[5]),
                    Complex64::new(v[6], v[7]),
                )
            })
        }

        proptest! {
            #[test]
            fn tensor_is_trace_multiplicative(a in arb_mat2(), b in arb_mat2()) {
                let lhs = tensor_product(&a, &b).matrix().trace();
                let rhs = a.trace() * b.trace();
                prop_assert!((lhs - rhs).norm() < IDENTITY_TOL);
            }

            #[test]
            fn tensor_is_associative(a in arb_mat2(), b in arb_mat2()) {
                // (a ⊗ b) (a' ⊗ b') = (a a') ⊗ (b b') realizes associativity
                // of the product structure on 2x2 factors.
                let lhs = tensor_product(&a, &b).matrix() * tensor_product(&b, &a).matrix();
                let rhs = tensor_product(&(a * b), &(b * a));
                prop_assert!(max_abs_diff(&lhs, rhs.matrix()) < IDENTITY_TOL);
            }

            #[test]
            fn expectation_is_real_for_hermitian(seed in 0u64..1000, h in arb_mat2(), g in arb_mat2()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rho = random_density(&mut rng);
                // Hermitian observable from an arbitrary tensor factor pair.
                let raw = tensor_product(&h, &g);
                let herm = (raw.matrix() + raw.matrix().adjoint()) * Complex64::new(0.5, 0.0);
                let obs = Operator::from_matrix(herm).unwrap();
                let tr = (rho.matrix() * obs.matrix()).trace();
                prop_assert!(tr.im.abs() < STATE_TOL);
                prop_assert!(expectation(&rho, &obs).is_ok());
            }
        }
    }
}
