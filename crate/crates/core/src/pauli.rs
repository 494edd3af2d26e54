//! 2×2 Hermitian matrices stored as `g0·1 + g·σ`.
//!
//! All products that stay Hermitian (sandwiches, anticommutators, `i[A,B]`)
//! are closed-form in these coordinates, so no complex arithmetic is needed
//! downstream.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix2, Vector3};
use num_complex::Complex64;

use crate::{Error, Result};

/// Dense complex 2×2 matrix.
pub type CMat2 = Matrix2<Complex64>;

/// Absolute tolerance on off-diagonal conjugacy and imaginary diagonals.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Identity (`k = 0`) or Pauli matrix `σ_k` (`k = 1, 2, 3`).
pub fn pauli_matrix(k: usize) -> CMat2 {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match k {
        0 => CMat2::new(one, z, z, one),
        1 => CMat2::new(z, one, one, z),
        2 => CMat2::new(z, -i, i, z),
        3 => CMat2::new(one, z, z, -one),
        _ => panic!("Pauli index {k} out of range 0..=3"),
    }
}

/// A 2×2 Hermitian matrix in Pauli coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Herm2 {
    /// Scalar part `½ tr G`.
    pub scalar: f64,
    /// Spin part `½ tr(σ G)`.
    pub spin: Vector3<f64>,
}

impl Herm2 {
    pub const ZERO: Herm2 = Herm2 {
        scalar: 0.0,
        spin: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(scalar: f64, spin: [f64; 3]) -> Self {
        Herm2 {
            scalar,
            spin: Vector3::from(spin),
        }
    }

    pub fn from_parts(scalar: f64, spin: Vector3<f64>) -> Self {
        Herm2 { scalar, spin }
    }

    pub fn identity() -> Self {
        Herm2::new(1.0, [0.0; 3])
    }

    pub fn scalar_multiple(c: f64) -> Self {
        Herm2::new(c, [0.0; 3])
    }

    /// `σ_k` for `k = 1, 2, 3`; the identity for `k = 0`.
    pub fn basis(k: usize) -> Self {
        let mut c = [0.0; 4];
        c[k] = 1.0;
        Herm2::from_array(c)
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Herm2::new(c[0], [c[1], c[2], c[3]])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.scalar, self.spin.x, self.spin.y, self.spin.z]
    }

    /// Component `k` in the order (scalar, x, y, z).
    pub fn component(&self, k: usize) -> f64 {
        match k {
            0 => self.scalar,
            1 => self.spin.x,
            2 => self.spin.y,
            3 => self.spin.z,
            _ => panic!("component {k} out of range 0..=3"),
        }
    }

    /// Splits a complex matrix into Pauli coordinates after checking
    /// Hermiticity.
    pub fn decompose(g: &CMat2) -> Result<Self> {
        for d in 0..2 {
            let dev = g[(d, d)].im.abs();
            if dev > HERMITICITY_TOL || !g[(d, d)].re.is_finite() {
                return Err(Error::NotHermitian {
                    row: d,
                    col: d,
                    deviation: dev,
                });
            }
        }
        let dev = (g[(0, 1)] - g[(1, 0)].conj()).norm();
        if dev > HERMITICITY_TOL || !dev.is_finite() {
            return Err(Error::NotHermitian {
                row: 0,
                col: 1,
                deviation: dev,
            });
        }
        Ok(Self::project(g))
    }

    /// Hermitian part of an arbitrary matrix in Pauli coordinates, without
    /// any check.
    pub fn project(g: &CMat2) -> Self {
        let scalar = 0.5 * (g[(0, 0)].re + g[(1, 1)].re);
        let sx = 0.5 * (g[(0, 1)].re + g[(1, 0)].re);
        let sy = 0.5 * (g[(1, 0)].im - g[(0, 1)].im);
        let sz = 0.5 * (g[(0, 0)].re - g[(1, 1)].re);
        Herm2::new(scalar, [sx, sy, sz])
    }

    /// Dense matrix `g0·1 + g·σ`.
    pub fn reconstruct(&self) -> CMat2 {
        let [g0, g1, g2, g3] = self.to_array();
        CMat2::new(
            Complex64::new(g0 + g3, 0.0),
            Complex64::new(g1, -g2),
            Complex64::new(g1, g2),
            Complex64::new(g0 - g3, 0.0),
        )
    }

    /// Spin polarization `|g|`.
    pub fn polarization(&self) -> f64 {
        self.spin.norm()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let p = self.polarization();
        (self.scalar + p, self.scalar - p)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.scalar - self.polarization()
    }

    pub fn trace(&self) -> f64 {
        2.0 * self.scalar
    }

    pub fn is_finite(&self) -> bool {
        self.scalar.is_finite() && self.spin.iter().all(|c| c.is_finite())
    }

    /// Hilbert–Schmidt norm `sqrt(tr A²)`.
    pub fn hs_norm(&self) -> f64 {
        hs_inner(self, self).sqrt()
    }

    /// `A²`, Hermitian.
    pub fn square(&self) -> Self {
        Herm2::from_parts(
            self.scalar * self.scalar + self.spin.norm_squared(),
            2.0 * self.scalar * self.spin,
        )
    }

    /// `S W S` for this matrix as `S`.
    pub fn sandwich(&self, w: &Herm2) -> Self {
        let (s0, s) = (self.scalar, &self.spin);
        let (w0, wv) = (w.scalar, &w.spin);
        let sw = s.dot(wv);
        let ss = s.norm_squared();
        Herm2::from_parts(
            s0 * s0 * w0 + 2.0 * s0 * sw + ss * w0,
            (s0 * s0 - ss) * wv + (2.0 * s0 * w0 + 2.0 * sw) * s,
        )
    }

    /// `½(A W + W A)` for this matrix as `A`.
    pub fn half_anticommutator(&self, w: &Herm2) -> Self {
        Herm2::from_parts(
            self.scalar * w.scalar + self.spin.dot(&w.spin),
            self.scalar * w.spin + w.scalar * self.spin,
        )
    }

    /// Rotation of the spin part by `angle` about the unit vector `axis`
    /// (right-handed).
    pub fn rotate_spin(&self, axis: &Vector3<f64>, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let v = &self.spin;
        let rotated = v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c));
        Herm2::from_parts(self.scalar, rotated)
    }
}

/// `i[A, B]` in Pauli coordinates: scalar part 0, spin part `2 (b × a)`.
pub fn commutator_i(a: &Herm2, b: &Herm2) -> Herm2 {
    Herm2::from_parts(0.0, 2.0 * b.spin.cross(&a.spin))
}

/// `tr(AB) = 2 (a0 b0 + a·b)`.
pub fn hs_inner(a: &Herm2, b: &Herm2) -> f64 {
    2.0 * (a.scalar * b.scalar + a.spin.dot(&b.spin))
}

impl Add for Herm2 {
    type Output = Herm2;
    fn add(self, rhs: Herm2) -> Herm2 {
        Herm2::from_parts(self.scalar + rhs.scalar, self.spin + rhs.spin)
    }
}

impl Sub for Herm2 {
    type Output = Herm2;
    fn sub(self, rhs: Herm2) -> Herm2 {
        Herm2::from_parts(self.scalar - rhs.scalar, self.spin - rhs.spin)
    }
}

impl Neg for Herm2 {
    type Output = Herm2;
    fn neg(self) -> Herm2 {
        Herm2::from_parts(-self.scalar, -self.spin)
    }
}

impl Mul<f64> for Herm2 {
    type Output = Herm2;
    fn mul(self, c: f64) -> Herm2 {
        Herm2::from_parts(self.scalar * c, self.spin * c)
    }
}

impl Mul<Herm2> for f64 {
    type Output = Herm2;
    fn mul(self, h: Herm2) -> Herm2 {
        h * self
    }
}

impl AddAssign for Herm2 {
    fn add_assign(&mut self, rhs: Herm2) {
        self.scalar += rhs.scalar;
        self.spin += rhs.spin;
    }
}

impl SubAssign for Herm2 {
    fn sub_assign(&mut self, rhs: Herm2) {
        self.scalar -= rhs.scalar;
        self.spin -= rhs.spin;
    }
}

impl std::iter::Sum for Herm2 {
    fn sum<I: Iterator<Item = Herm2>>(iter: I) -> Herm2 {
        iter.fold(Herm2::ZERO, |acc, h| acc + h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_abs(m: &CMat2) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_and_basis_decompose() {
        let id = Herm2::decompose(&pauli_matrix(0)).unwrap();
        assert_eq!(id, Herm2::identity());
        let s3 = Herm2::decompose(&pauli_matrix(3)).unwrap();
        assert_eq!(s3, Herm2::new(0.0, [0.0, 0.0, 1.0]));
    }

    #[test]
    fn explicit_matrix_round_trip() {
        let g = CMat2::new(c(2.0, 0.0), c(1.0, -1.0), c(1.0, 1.0), c(0.0, 0.0));
        let h = Herm2::decompose(&g).unwrap();
        assert_eq!(h, Herm2::new(1.0, [1.0, 1.0, 1.0]));
        // oracle: g0·1 + Σ g_k σ_k assembled from the basis matrices
        let mut rebuilt = CMat2::zeros();
        for k in 0..4 {
            rebuilt += pauli_matrix(k) * c(h.component(k), 0.0);
        }
        assert!(max_abs(&(rebuilt - g)) == 0.0);
        assert_eq!(h.reconstruct(), g);
        assert_eq!(Herm2::new(0.0, [1.0, 0.0, 0.0]).reconstruct(), pauli_matrix(1));
        assert_eq!(Herm2::identity().reconstruct(), pauli_matrix(0));
    }

    #[test]
    fn rejects_non_hermitian() {
        let g = CMat2::new(c(1.0, 0.0), c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0));
        match Herm2::decompose(&g) {
            Err(Error::NotHermitian { row: 0, col: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let g = CMat2::new(c(1.0, 1e-6), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        assert!(matches!(
            Herm2::decompose(&g),
            Err(Error::NotHermitian { row: 0, col: 0, .. })
        ));
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(Herm2::basis(3).eigenvalues(), (1.0, -1.0));
        let (a, b) = Herm2::new(1.0, [1.0, 1.0, 1.0]).eigenvalues();
        // oracle: roots of λ² - tr·λ + det for [[2,1-i],[1+i,0]]: tr=2, det=-2
        let disc = (4.0f64 + 8.0).sqrt();
        assert!((a - (2.0 + disc) / 2.0).abs() < 1e-14);
        assert!((b - (2.0 - disc) / 2.0).abs() < 1e-14);
        assert_eq!(Herm2::scalar_multiple(2.5).eigenvalues(), (2.5, 2.5));
    }

    #[test]
    fn commutator_examples() {
        let s1 = Herm2::basis(1);
        let s2 = Herm2::basis(2);
        let r = commutator_i(&s1, &s2);
        // oracle: i(σ1σ2 - σ2σ1) = i·2iσ3 = -2σ3
        let m = (pauli_matrix(1) * pauli_matrix(2) - pauli_matrix(2) * pauli_matrix(1)) * c(0.0, 1.0);
        assert_eq!(Herm2::decompose(&m).unwrap(), r);
        assert_eq!(r, Herm2::new(0.0, [0.0, 0.0, -2.0]));
        let a = Herm2::new(0.3, [1.0, -2.0, 0.5]);
        assert_eq!(commutator_i(&a, &a), Herm2::ZERO);
        assert_eq!(commutator_i(&Herm2::identity(), &a), Herm2::ZERO);
    }

    #[test]
    fn hs_inner_examples() {
        assert_eq!(hs_inner(&Herm2::identity(), &Herm2::identity()), 2.0);
        assert_eq!(hs_inner(&Herm2::basis(1), &Herm2::basis(2)), 0.0);
        let a = Herm2::new(1.0, [1.0, 0.0, 0.0]);
        let b = Herm2::new(2.0, [0.0, 0.0, 3.0]);
        let tr = (a.reconstruct() * b.reconstruct()).trace();
        assert!((tr.re - 4.0).abs() < 1e-15 && tr.im.abs() < 1e-15);
        assert_eq!(hs_inner(&a, &b), 4.0);
    }

    fn herm() -> impl Strategy<Value = Herm2> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)
            .prop_map(|(a, b, c, d)| Herm2::new(a, [b, c, d]))
    }

    proptest! {
        #[test]
        fn sandwich_matches_dense(s in herm(), w in herm()) {
            let dense = s.reconstruct() * w.reconstruct() * s.reconstruct();
            let got = s.sandwich(&w).reconstruct();
            prop_assert!(max_abs(&(dense - got)) < 1e-12);
        }

        #[test]
        fn anticommutator_and_square_match_dense(a in herm(), w in herm()) {
            let (am, wm) = (a.reconstruct(), w.reconstruct());
            let dense = (am * wm + wm * am) * c(0.5, 0.0);
            prop_assert!(max_abs(&(dense - a.half_anticommutator(&w).reconstruct())) < 1e-12);
            prop_assert!(max_abs(&(am * am - a.square().reconstruct())) < 1e-12);
        }

        #[test]
        fn hs_inner_is_symmetric_bilinear_positive(a in herm(), b in herm(), x in -2.0..2.0f64) {
            prop_assert_eq!(hs_inner(&a, &b), hs_inner(&b, &a));
            let lhs = hs_inner(&(a * x + b), &a);
            let rhs = x * hs_inner(&a, &a) + hs_inner(&b, &a);
            prop_assert!((lhs - rhs).abs() < 1e-11);
            if a != Herm2::ZERO {
                prop_assert!(hs_inner(&a, &a) > 0.0);
            }
        }

        #[test]
        fn psd_iff_scalar_dominates(a in herm()) {
            let m = a.reconstruct();
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
            let tr = m.trace().re;
            let psd_dense = tr >= 0.0 && det >= -1e-12;
            prop_assert_eq!(psd_dense, a.scalar >= a.polarization() - 1e-12);
        }
    }

    #[test]
    fn rotation_preserves_norm() {
        let h = Herm2::new(0.5, [1.0, 0.0, 0.0]);
        let r = h.rotate_spin(&Vector3::z(), std::f64::consts::FRAC_PI_2);
        assert!((r.spin - Vector3::y()).norm() < 1e-15);
        assert_eq!(r.scalar, 0.5);
    }
}
