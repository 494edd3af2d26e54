//! Bath-side data: pair potential, spinorial bath density, covariance, mean
//! field, and the scattering channels obtained by diagonalizing the
//! double-Pauli covariance matrix.
//!
//! Conventions used throughout:
//!
//! * A pair interaction is a 4×4 matrix in the Kronecker layout
//!   `system ⊗ bath`, i.e. `M[2a+α, 2b+β]`. The bath-indexed block `V_αβ` is
//!   the 2×2 system matrix `(M[2a+α, 2b+β])_{ab}` and
//!   `V_αβ = Σ_i V_i (σ_i)_αβ`, so `M = Σ_i V_i ⊗ σ_i`.
//! * A covariance is carried as the real symmetric matrix `k_ij` defined by
//!   `κ_{ββ'αα'} V_αβ V_α'β' = Σ_ij k_ij V_i V_j`.
//! * Fourier transforms use `Ṽ(ξ) = (2πħ)^{-1} ∫ V(r) e^{-irξ/ħ} dr` (d = 1).

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;

use crate::pauli::{pauli_matrix, CMat2, Herm2, HERMITICITY_TOL};
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// The four Hermitian components `V_0..V_3` of a pair interaction.
pub type PauliQuad = [Herm2; 4];

/// Dense 4×4 complex matrix in the `system ⊗ bath` layout.
pub type CMat4 = Matrix4<Complex64>;

/// Bath-indexed 2×2 block `V_αβ` of a 4×4 interaction.
pub fn bath_block(m: &CMat4, alpha: usize, beta: usize) -> CMat2 {
    CMat2::from_fn(|a, b| m[(2 * a + alpha, 2 * b + beta)])
}

/// Splits a Hermitian 4×4 interaction into `V_0..V_3` with
/// `V_i = ½ Σ_αβ conj((σ_i)_αβ) V_αβ`.
pub fn pauli_split(m: &CMat4) -> Result<PauliQuad> {
    for r in 0..4 {
        for c in r..4 {
            let dev = (m[(r, c)] - m[(c, r)].conj()).norm();
            if dev > HERMITICITY_TOL || !dev.is_finite() {
                return Err(Error::NotHermitian {
                    row: r,
                    col: c,
                    deviation: dev,
                });
            }
        }
    }
    let mut out = [Herm2::ZERO; 4];
    for (i, slot) in out.iter_mut().enumerate() {
        let sigma = pauli_matrix(i);
        let mut acc = CMat2::zeros();
        for alpha in 0..2 {
            for beta in 0..2 {
                acc += bath_block(m, alpha, beta) * sigma[(alpha, beta)].conj();
            }
        }
        *slot = Herm2::project(&(acc * Complex64::new(0.5, 0.0)));
    }
    Ok(out)
}

/// `Σ_i V_i ⊗ σ_i` in the `system ⊗ bath` layout.
pub fn recombine(v: &PauliQuad) -> CMat4 {
    let mut m = CMat4::zeros();
    for (i, vi) in v.iter().enumerate() {
        let a = vi.reconstruct();
        let s = pauli_matrix(i);
        m += a.kronecker(&s);
    }
    m
}

/// `Σ_ij k_ij ½{V_i, V_j}`; equals `Σ_ij k_ij V_i V_j` for symmetric `k`.
pub fn contract(k: &Matrix4<f64>, v: &PauliQuad) -> Herm2 {
    let mut acc = Herm2::ZERO;
    for i in 0..4 {
        for j in 0..4 {
            if k[(i, j)] != 0.0 {
                acc += v[i].half_anticommutator(&v[j]) * k[(i, j)];
            }
        }
    }
    acc
}

/// Radial shape of a separable interaction.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialProfile {
    /// `exp(-r²/2w²)`.
    Gaussian { width: f64 },
    /// `exp(-|r|/λ)`.
    Exponential { range: f64 },
}

impl RadialProfile {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Gaussian { width } => (-r * r / (2.0 * width * width)).exp(),
            RadialProfile::Exponential { range } => (-r.abs() / range).exp(),
        }
    }

    /// Analytic transform `(2πħ)^{-1} ∫ v(r) e^{-irξ/ħ} dr`.
    pub fn fourier(&self, xi: f64, hbar: f64) -> f64 {
        let k = xi / hbar;
        let integral = match *self {
            RadialProfile::Gaussian { width } => {
                width * TWO_PI.sqrt() * (-0.5 * width * width * k * k).exp()
            }
            RadialProfile::Exponential { range } => 2.0 * range / (1.0 + k * k * range * range),
        };
        integral / (TWO_PI * hbar)
    }

    pub fn scale(&self) -> f64 {
        match *self {
            RadialProfile::Gaussian { width } => width,
            RadialProfile::Exponential { range } => range,
        }
    }
}

/// Spin structure of a separable interaction `v(r)·Σ_i C_i ⊗ σ_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinStructure {
    /// `1 ⊗ 1`.
    Scalar,
    /// `σ_3 ⊗ σ_3`.
    Sigma3,
    /// `Σ_k σ_k ⊗ σ_k`.
    Exchange,
    /// Arbitrary coefficients `C_0..C_3`.
    Custom(PauliQuad),
}

impl SpinStructure {
    pub fn coefficients(&self) -> PauliQuad {
        match *self {
            SpinStructure::Scalar => [Herm2::identity(), Herm2::ZERO, Herm2::ZERO, Herm2::ZERO],
            SpinStructure::Sigma3 => [Herm2::ZERO, Herm2::ZERO, Herm2::ZERO, Herm2::basis(3)],
            SpinStructure::Exchange => [Herm2::ZERO, Herm2::basis(1), Herm2::basis(2), Herm2::basis(3)],
            SpinStructure::Custom(c) => c,
        }
    }
}

/// Spin-dependent pair interaction with Pauli components `V_i(r)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PairPotential {
    Separable {
        amplitude: f64,
        profile: RadialProfile,
        structure: SpinStructure,
    },
    /// Samples on `r_j = r0 + j·dr`, linearly interpolated, zero outside.
    Sampled {
        r0: f64,
        dr: f64,
        values: Vec<PauliQuad>,
    },
}

impl PairPotential {
    pub fn separable(amplitude: f64, profile: RadialProfile, structure: SpinStructure) -> Self {
        PairPotential::Separable {
            amplitude,
            profile,
            structure,
        }
    }

    /// Components at separation `r`.
    pub fn at(&self, r: f64) -> PauliQuad {
        match self {
            PairPotential::Separable {
                amplitude,
                profile,
                structure,
            } => {
                let v = amplitude * profile.eval(r);
                structure.coefficients().map(|c| c * v)
            }
            PairPotential::Sampled { r0, dr, values } => {
                let t = (r - r0) / dr;
                if !(t >= 0.0) || t > (values.len() - 1) as f64 {
                    return [Herm2::ZERO; 4];
                }
                let j = (t.floor() as usize).min(values.len() - 1);
                let f = t - j as f64;
                let next = values.get(j + 1).unwrap_or(&values[j]);
                std::array::from_fn(|i| values[j][i] * (1.0 - f) + next[i] * f)
            }
        }
    }

    /// Components of `Ṽ(ξ)`. Separable profiles use the analytic transform;
    /// sampled tables use quadrature on their own grid.
    pub fn fourier_at(&self, xi: f64, hbar: f64) -> PauliQuad {
        match self {
            PairPotential::Separable {
                amplitude,
                profile,
                structure,
            } => {
                let v = amplitude * profile.fourier(xi, hbar);
                structure.coefficients().map(|c| c * v)
            }
            PairPotential::Sampled { r0, dr, values } => {
                let r: Vec<f64> = (0..values.len()).map(|j| r0 + j as f64 * dr).collect();
                fourier_potential(&r, *dr, values, &[xi], hbar).values[0]
            }
        }
    }
}

/// Result of a sampled Fourier transform.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTable {
    pub values: Vec<PauliQuad>,
    /// Present when the samples at the grid ends exceed `1e-10` of the peak.
    pub decay_warning: Option<DecayWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayWarning {
    pub boundary_magnitude: f64,
    pub peak_magnitude: f64,
}

impl std::fmt::Display for DecayWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "potential decays only to {:.3e} at the grid boundary (peak {:.3e})",
            self.boundary_magnitude, self.peak_magnitude
        )
    }
}

/// Quadrature transform of a radial potential sampled at `r` (spacing
/// `dr`); only the even (cosine) part survives.
pub fn fourier_potential(r: &[f64], dr: f64, samples: &[PauliQuad], xi: &[f64], hbar: f64) -> FourierTable {
    let size = |q: &PauliQuad| q.iter().map(|h| h.hs_norm()).fold(0.0, f64::max);
    let peak = samples.iter().map(size).fold(0.0, f64::max);
    let boundary = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => size(a).max(size(b)),
        _ => 0.0,
    };
    let decay_warning = (peak > 0.0 && boundary > 1e-10 * peak).then_some(DecayWarning {
        boundary_magnitude: boundary,
        peak_magnitude: peak,
    });
    let norm = dr / (TWO_PI * hbar);
    let values = xi
        .iter()
        .map(|&k| {
            let mut acc = [Herm2::ZERO; 4];
            for (rj, q) in r.iter().zip(samples) {
                let c = (rj * k / hbar).cos() * norm;
                for i in 0..4 {
                    acc[i] += q[i] * c;
                }
            }
            acc
        })
        .collect();
    FourierTable { values, decay_warning }
}

/// Position-space covariance `C(z, z')` in double-Pauli form.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Zero,
    /// `C(r) = M δ(r)`.
    WhiteNoise { strength: Matrix4<f64> },
    /// `C(r) = M exp(-r²/2ℓ²)`.
    Gaussian { strength: Matrix4<f64>, length: f64 },
    /// Homogeneous table `C(r_j)`, `r_j = r0 + j·dr`.
    Sampled {
        r0: f64,
        dr: f64,
        values: Vec<Matrix4<f64>>,
    },
    /// Non-homogeneous `C(z_a, z_b)` on the bath grid, row-major.
    General { values: Vec<Matrix4<f64>> },
}

impl Covariance {
    pub fn is_homogeneous(&self) -> bool {
        !matches!(self, Covariance::General { .. })
    }

    /// `C(z, z')` for homogeneous forms; white noise has no pointwise value
    /// and returns its strength divided by `cell` on the diagonal.
    pub fn at(&self, z: f64, zp: f64, cell: f64) -> Matrix4<f64> {
        let r = z - zp;
        match self {
            Covariance::Zero | Covariance::General { .. } => Matrix4::zeros(),
            Covariance::WhiteNoise { strength } => {
                if r.abs() < 0.5 * cell {
                    strength / cell
                } else {
                    Matrix4::zeros()
                }
            }
            Covariance::Gaussian { strength, length } => strength * (-r * r / (2.0 * length * length)).exp(),
            Covariance::Sampled { r0, dr, values } => {
                let t = (r - r0) / dr;
                if !(t >= 0.0) || t > (values.len() - 1) as f64 {
                    return Matrix4::zeros();
                }
                let j = (t.floor() as usize).min(values.len() - 1);
                let f = t - j as f64;
                let next = values.get(j + 1).unwrap_or(&values[j]);
                values[j] * (1.0 - f) + next * f
            }
        }
    }

    /// `Ĉ(ξ) = (2πħ)^{-1} ∫ C(r) e^{-irξ/ħ} dr`; `None` for the
    /// non-homogeneous form.
    pub fn fourier(&self, xi: f64, hbar: f64) -> Option<Matrix4<f64>> {
        let norm = 1.0 / (TWO_PI * hbar);
        Some(match self {
            Covariance::Zero => Matrix4::zeros(),
            Covariance::WhiteNoise { strength } => strength * norm,
            Covariance::Gaussian { strength, length } => {
                let k = xi / hbar;
                strength * (length * TWO_PI.sqrt() * (-0.5 * length * length * k * k).exp() * norm)
            }
            Covariance::Sampled { r0, dr, values } => {
                let mut acc = Matrix4::zeros();
                for (j, m) in values.iter().enumerate() {
                    let r = r0 + j as f64 * dr;
                    acc += m * ((r * xi / hbar).cos() * dr * norm);
                }
                acc
            }
            Covariance::General { .. } => return None,
        })
    }
}

fn check_symmetric(name: &'static str, m: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let scale = m.amax().max(1.0);
    for r in 0..4 {
        for c in 0..4 {
            if !m[(r, c)].is_finite() || (m[(r, c)] - m[(c, r)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("covariance matrix is not symmetric at ({r},{c})"),
                });
            }
        }
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Spinorial bath density on a uniform grid plus its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct BathState {
    pub z0: f64,
    pub dz: f64,
    pub n1: Vec<Herm2>,
    pub covariance: Covariance,
    /// Whether the self term `D` enters the modified covariance.
    pub include_d: bool,
}

impl BathState {
    /// Validates positivity of the density and symmetry of the covariance;
    /// symmetric inputs are stored exactly symmetrized.
    pub fn new(z0: f64, dz: f64, n1: Vec<Herm2>, covariance: Covariance, include_d: bool) -> Result<Self> {
        if !(dz > 0.0) || n1.is_empty() {
            return Err(Error::InvalidGrid("bath grid needs dz > 0 and at least one node".into()));
        }
        for (node, n) in n1.iter().enumerate() {
            if !n.is_finite() || n.scalar < n.polarization() - 1e-14 {
                return Err(Error::NegativeDensity {
                    node,
                    n0: n.scalar,
                    polarization: n.polarization(),
                });
            }
        }
        let covariance = match covariance {
            Covariance::WhiteNoise { strength } => Covariance::WhiteNoise {
                strength: check_symmetric("covariance", &strength)?,
            },
            Covariance::Gaussian { strength, length } => {
                if !(length > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "covariance_length",
                        reason: "must be positive".into(),
                    });
                }
                Covariance::Gaussian {
                    strength: check_symmetric("covariance", &strength)?,
                    length,
                }
            }
            Covariance::Sampled { r0, dr, values } => Covariance::Sampled {
                r0,
                dr,
                values: values
                    .iter()
                    .map(|m| check_symmetric("covariance", m))
                    .collect::<Result<_>>()?,
            },
            Covariance::General { values } => {
                if values.len() != n1.len() * n1.len() {
                    return Err(Error::GridMismatch(format!(
                        "general covariance has {} entries, bath grid needs {}",
                        values.len(),
                        n1.len() * n1.len()
                    )));
                }
                let nz = n1.len();
                let values: Vec<Matrix4<f64>> = values
                    .iter()
                    .map(|m| check_symmetric("covariance", m))
                    .collect::<Result<_>>()?;
                // C(z, z') = C(z', z) for a covariance of real observables
                for a in 0..nz {
                    for b in a + 1..nz {
                        let dev = (values[a * nz + b] - values[b * nz + a]).amax();
                        if dev > 1e-12 * values[a * nz + b].amax().max(1.0) {
                            return Err(Error::InvalidParameter {
                                name: "covariance",
                                reason: format!("C(z{a}, z{b}) differs from C(z{b}, z{a}) by {dev:.3e}"),
                            });
                        }
                    }
                }
                Covariance::General { values }
            }
            Covariance::Zero => Covariance::Zero,
        };
        Ok(BathState {
            z0,
            dz,
            n1,
            covariance,
            include_d,
        })
    }

    /// Uniform density `n` on `nz` nodes.
    pub fn uniform(z0: f64, dz: f64, nz: usize, n: Herm2, covariance: Covariance, include_d: bool) -> Result<Self> {
        Self::new(z0, dz, vec![n; nz], covariance, include_d)
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z0 + j as f64 * self.dz
    }

    pub fn len(&self) -> usize {
        self.n1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n1.is_empty()
    }

    /// `∫ n_0 dz`.
    pub fn total(&self) -> f64 {
        self.dz * self.n1.iter().map(|n| n.scalar).sum::<f64>()
    }

    /// Rescales the density so that `∫ n_0 dz = n_total`.
    pub fn normalized(mut self, n_total: f64) -> Result<Self> {
        let t = self.total();
        if !(t > 0.0) || !(n_total >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "n_total",
                reason: format!("cannot normalize density with integral {t:.3e} to {n_total:.3e}"),
            });
        }
        let s = n_total / t;
        self.n1.iter_mut().for_each(|n| *n = *n * s);
        Ok(self)
    }

    fn constant_density(&self) -> Option<Herm2> {
        let first = self.n1[0];
        self.n1
            .iter()
            .all(|n| (*n - first).hs_norm() <= 1e-12 * first.hs_norm().max(1.0))
            .then_some(first)
    }
}

/// `k_ij` of the self term for density `n`, from the contraction of
/// `d_{αα'ββ'} = n_αβ δ_αα' δ_ββ'` (delta in position stripped).
pub fn density_kmatrix(n: &Herm2) -> Matrix4<f64> {
    let [n0, n1, n2, n3] = n.to_array();
    Matrix4::new(
        n0, 0.0, 0.0, n3, //
        0.0, n1, n2, 0.0, //
        0.0, n2, -n1, 0.0, //
        n3, 0.0, 0.0, n0,
    ) * 2.0
}

/// Modified covariance `K̂(ξ) = Ĉ(ξ) + D̂` at each momentum in `xi`.
pub fn assemble_kmatrix(bath: &BathState, xi: &[f64], hbar: f64) -> Result<Vec<Matrix4<f64>>> {
    if !bath.covariance.is_homogeneous() {
        return Err(Error::NonHomogeneousCovariance);
    }
    let d = if bath.include_d {
        let n = bath.constant_density().ok_or(Error::NonHomogeneousCovariance)?;
        density_kmatrix(&n) / (TWO_PI * hbar)
    } else {
        Matrix4::zeros()
    };
    Ok(xi
        .iter()
        .map(|&k| bath.covariance.fourier(k, hbar).expect("homogeneous") + d)
        .collect())
}

/// Position-space `K(z_a, z_b)` on the bath grid, row-major, with the self
/// term on the diagonal as `K_D(n(z))/dz`.
pub fn position_kmatrix(bath: &BathState) -> Vec<Matrix4<f64>> {
    let nz = bath.len();
    let mut out = Vec::with_capacity(nz * nz);
    for a in 0..nz {
        for b in 0..nz {
            let mut m = match &bath.covariance {
                Covariance::General { values } => values[a * nz + b],
                c => c.at(bath.z(a), bath.z(b), bath.dz),
            };
            if bath.include_d && a == b {
                m += density_kmatrix(&bath.n1[a]) / bath.dz;
            }
            out.push(m);
        }
    }
    out
}

/// Separation `x - z`, folded to the minimum image when `period` is given.
pub fn separation(x: f64, z: f64, period: Option<f64>) -> f64 {
    let r = x - z;
    match period {
        Some(p) => r - p * (r / p).round(),
        None => r,
    }
}

/// `H_mf(x) = Σ_i ∫ dz V_i(x-z) n_i(z)` by rectangle quadrature on the bath
/// grid.
pub fn mean_field(v: &PairPotential, bath: &BathState, x: &[f64], period: Option<f64>) -> Result<Vec<Herm2>> {
    if let Some(p) = period {
        let span = bath.dz * bath.len() as f64;
        if (span - p).abs() > 1e-9 * p {
            return Err(Error::GridMismatch(format!(
                "bath grid spans {span:.6e} but the periodic domain is {p:.6e}"
            )));
        }
    }
    Ok(x.iter()
        .map(|&xi| {
            let mut acc = Herm2::ZERO;
            for (j, n) in bath.n1.iter().enumerate() {
                let comps = v.at(separation(xi, bath.z(j), period));
                for (i, vi) in comps.iter().enumerate() {
                    acc += *vi * (n.component(i) * bath.dz);
                }
            }
            acc
        })
        .collect())
}

/// Eigen-decomposition of a real symmetric 4×4 matrix with deterministic
/// ordering: eigenvalues descending, eigenvectors as rows of `U` so that
/// `K = Uᵀ diag(ρ) U`. Degenerate eigenspaces are re-based by Gram–Schmidt
/// on the canonical basis in index order; every row has its first nonzero
/// entry positive.
pub fn symmetric_channels(k: &Matrix4<f64>) -> Option<([f64; 4], Matrix4<f64>)> {
    if k.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = SymmetricEigen::new(*k);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs: Vec<Vector4<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    let mut rows: Vec<Vector4<f64>> = Vec::with_capacity(4);
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && (vals[end - 1] - vals[end]).abs() <= tol {
            end += 1;
        }
        if end - start == 1 {
            rows.push(vecs[start]);
        } else {
            let projector: Matrix4<f64> = vecs[start..end].iter().map(|v| v * v.transpose()).sum();
            let mut basis: Vec<Vector4<f64>> = Vec::new();
            for c in 0..4 {
                if basis.len() == end - start {
                    break;
                }
                let mut v = projector.column(c).into_owned();
                for b in &basis {
                    v -= b * b.dot(&v);
                }
                // re-orthogonalize once for stability
                for b in &basis {
                    v -= b * b.dot(&v);
                }
                let n = v.norm();
                if n > 1e-6 {
                    basis.push(v / n);
                }
            }
            if basis.len() != end - start {
                basis = vecs[start..end].to_vec();
            }
            rows.extend(basis);
        }
        start = end;
    }
    let mut u = Matrix4::zeros();
    for (r, v) in rows.iter().enumerate() {
        let lead = v.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(1.0);
        let v = if lead < 0.0 { -v } else { *v };
        u.set_row(r, &v.transpose());
    }
    Some(([vals[0], vals[1], vals[2], vals[3]], u))
}

/// Eigenvalues `ρ_i(ξ)` and scattering matrices `S_i(ξ)` on a momentum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringChannels {
    pub xi: Vec<f64>,
    pub rho: Vec<[f64; 4]>,
    pub s: Vec<PauliQuad>,
    pub basis: Vec<Matrix4<f64>>,
}

impl ScatteringChannels {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// `Σ_i ρ_i S_i S_i` at node `j`.
    pub fn weighted_square(&self, j: usize) -> Herm2 {
        (0..4).map(|i| self.s[j][i].square() * self.rho[j][i]).sum()
    }
}

/// Diagonalizes `K̂(ξ)` at every node and forms `S_i = Σ_j U_ij Ṽ_j`.
pub fn diagonalize_channels(xi: &[f64], k: &[Matrix4<f64>], vt: &[PauliQuad]) -> Result<ScatteringChannels> {
    if k.len() != xi.len() || vt.len() != xi.len() {
        return Err(Error::GridMismatch(format!(
            "{} momenta, {} covariance matrices, {} potential samples",
            xi.len(),
            k.len(),
            vt.len()
        )));
    }
    let mut rho = Vec::with_capacity(xi.len());
    let mut s = Vec::with_capacity(xi.len());
    let mut basis = Vec::with_capacity(xi.len());
    for (node, (km, v)) in k.iter().zip(vt).enumerate() {
        let (vals, u) = symmetric_channels(km).ok_or(Error::EigenFailure(node))?;
        let si: PauliQuad = std::array::from_fn(|i| (0..4).map(|j| v[j] * u[(i, j)]).sum());
        rho.push(vals);
        s.push(si);
        basis.push(u);
    }
    Ok(ScatteringChannels {
        xi: xi.to_vec(),
        rho,
        s,
        basis,
    })
}
