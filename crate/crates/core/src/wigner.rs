//! Discrete phase space, the Wigner transform pair, and the free-flight
//! operators for Hamiltonians of the form `η²/2m + u(x) + Ω(x)·σ`.
//!
//! Every operator that is nonlocal in `η` works in the mixed `(x, y)`
//! representation: the `η`-FFT mode with wavenumber `κ` corresponds to the
//! offset `y = -εκ`, because `W ∝ ∫ R(x, y) e^{-iyη/ε} dy`.

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::fft::Spectral;
use crate::pauli::{commutator_i, pauli_matrix, CMat2, Herm2, HERMITICITY_TOL};
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Uniform grid, periodic in `x`, truncated in `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceGrid {
    pub nx: usize,
    pub x0: f64,
    pub dx: f64,
    pub neta: usize,
    pub eta0: f64,
    pub deta: f64,
    /// Scaled Planck constant.
    pub eps: f64,
}

impl PhaseSpaceGrid {
    pub fn new(nx: usize, x0: f64, dx: f64, neta: usize, eta0: f64, deta: f64, eps: f64) -> Result<Self> {
        if nx == 0 || neta == 0 {
            return Err(Error::InvalidGrid("grid needs at least one node per axis".into()));
        }
        for (name, v) in [("dx", dx), ("deta", deta), ("eps", eps)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidGrid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !x0.is_finite() || !eta0.is_finite() {
            return Err(Error::InvalidGrid("grid origin must be finite".into()));
        }
        Ok(PhaseSpaceGrid {
            nx,
            x0,
            dx,
            neta,
            eta0,
            deta,
            eps,
        })
    }

    /// Grid paired with the transform: `N_η = N_x`, `Δη = 2πε/(N_x Δx)`, and
    /// `η` centred on zero.
    pub fn paired(nx: usize, x0: f64, dx: f64, eps: f64) -> Result<Self> {
        if !nx.is_multiple_of(2) {
            return Err(Error::InvalidGrid("transform pairing needs an even number of x nodes".into()));
        }
        let deta = TWO_PI * eps / (nx as f64 * dx);
        Self::new(nx, x0, dx, nx, -(nx as f64 / 2.0) * deta, deta, eps)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.nx, self.x0, self.dx, self.neta, self.eta0, self.deta, eps)
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x0 + ix as f64 * self.dx
    }

    pub fn eta(&self, ie: usize) -> f64 {
        self.eta0 + ie as f64 * self.deta
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn eta_nodes(&self) -> Vec<f64> {
        (0..self.neta).map(|i| self.eta(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.nx * self.neta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn period(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn cell(&self) -> f64 {
        self.dx * self.deta
    }

    pub fn index(&self, ix: usize, ie: usize) -> usize {
        ix * self.neta + ie
    }

    /// Largest mixed offset `|y| = επ/Δη` reached by the `η`-FFT.
    pub fn y_max(&self) -> f64 {
        self.eps * std::f64::consts::PI / self.deta
    }

    /// Whether the grid satisfies the transform pairing exactly.
    pub fn is_paired(&self) -> bool {
        let deta = TWO_PI * self.eps / (self.nx as f64 * self.dx);
        self.neta == self.nx
            && self.nx.is_multiple_of(2)
            && (self.deta - deta).abs() <= 1e-12 * deta
            && (self.eta0 + (self.nx as f64 / 2.0) * deta).abs() <= 1e-12 * deta.max(1.0)
    }

    pub fn same_shape(&self, other: &PhaseSpaceGrid) -> bool {
        self.nx == other.nx
            && self.neta == other.neta
            && self.dx == other.dx
            && self.deta == other.deta
            && self.x0 == other.x0
            && self.eta0 == other.eta0
    }
}

/// A `Herm2` value per phase-space node, stored `ix * neta + ie`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub grid: PhaseSpaceGrid,
    pub values: Vec<Herm2>,
}

impl SpinorField {
    pub fn zeros(grid: &PhaseSpaceGrid) -> Self {
        SpinorField {
            grid: grid.clone(),
            values: vec![Herm2::ZERO; grid.len()],
        }
    }

    pub fn from_fn(grid: &PhaseSpaceGrid, f: impl Fn(f64, f64) -> Herm2) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.nx {
            for ie in 0..grid.neta {
                values.push(f(grid.x(ix), grid.eta(ie)));
            }
        }
        SpinorField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &PhaseSpaceGrid, values: Vec<Herm2>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(SpinorField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn at(&self, ix: usize, ie: usize) -> Herm2 {
        self.values[self.grid.index(ix, ie)]
    }

    pub fn row(&self, ix: usize) -> &[Herm2] {
        &self.values[ix * self.grid.neta..(ix + 1) * self.grid.neta]
    }

    pub fn check_same_grid(&self, other: &SpinorField) -> Result<()> {
        if self.grid.same_shape(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("spinor fields live on different grids".into()))
        }
    }

    /// `N(x) = Δη Σ_η W`.
    pub fn density_x(&self) -> Vec<Herm2> {
        (0..self.grid.nx)
            .map(|ix| self.row(ix).iter().copied().sum::<Herm2>() * self.grid.deta)
            .collect()
    }

    /// `M(η) = Δx Σ_x W`.
    pub fn density_eta(&self) -> Vec<Herm2> {
        (0..self.grid.neta)
            .map(|ie| (0..self.grid.nx).map(|ix| self.at(ix, ie)).sum::<Herm2>() * self.grid.dx)
            .collect()
    }

    /// `Δx Δη Σ W`: scalar part is the mass, spin part the total spin.
    pub fn integral(&self) -> Herm2 {
        self.values.iter().copied().sum::<Herm2>() * self.grid.cell()
    }

    pub fn mass(&self) -> f64 {
        self.integral().scalar
    }

    pub fn total_spin(&self) -> Vector3<f64> {
        self.integral().spin
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values.iter().map(Herm2::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    /// Discrete `L²` norm `(Δx Δη Σ tr W²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell() * self.values.iter().map(|w| 2.0 * (w.scalar * w.scalar + w.spin.norm_squared())).sum::<f64>())
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|w| w.scalar.abs().max(w.spin.amax())).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Herm2::is_finite)
    }

    pub fn map(&self, f: impl Fn(&Herm2) -> Herm2) -> SpinorField {
        SpinorField {
            grid: self.grid.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn zip_map(&self, other: &SpinorField, f: impl Fn(&Herm2, &Herm2) -> Herm2) -> SpinorField {
        SpinorField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> SpinorField {
        self.map(|w| *w * s)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &SpinorField) -> SpinorField {
        self.zip_map(other, |a, b| *a + *b * s)
    }

    pub fn sub(&self, other: &SpinorField) -> SpinorField {
        self.zip_map(other, |a, b| *a - *b)
    }
}

/// Operator kernel `ρ(x_a, x_b)` on a periodic `x` grid, stored `a * n + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub n: usize,
    pub values: Vec<CMat2>,
}

impl Kernel {
    pub fn zeros(n: usize) -> Self {
        Kernel {
            n,
            values: vec![CMat2::zeros(); n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> CMat2) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                values.push(f(a, b));
            }
        }
        Kernel { n, values }
    }

    pub fn at(&self, a: usize, b: usize) -> CMat2 {
        self.values[(a % self.n) * self.n + (b % self.n)]
    }

    /// Checks `ρ(a, b) = ρ(b, a)†` entrywise.
    pub fn check_hermitian(&self) -> Result<()> {
        for a in 0..self.n {
            for b in a..self.n {
                let dev = (self.at(a, b) - self.at(b, a).adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
                if !(dev <= HERMITICITY_TOL) {
                    return Err(Error::NotHermitian {
                        row: a,
                        col: b,
                        deviation: dev,
                    });
                }
            }
        }
        Ok(())
    }

    /// `Σ_a ½ tr ρ(a, a)`.
    pub fn half_trace(&self) -> f64 {
        (0..self.n).map(|a| 0.5 * self.at(a, a).trace().re).sum()
    }

    pub fn max_abs_diff(&self, other: &Kernel) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| (a - b).iter().map(|z| z.norm()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }
}

fn signed(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Shifts a periodic complex sequence by `delta` cells (`g(k) ↦ g(k+delta)`)
/// with a real interpolation kernel; the Nyquist mode is dropped.
fn half_shift(sp: &Spectral, data: &mut [Complex64], delta: f64) {
    let n = sp.len();
    sp.forward(data);
    for (m, z) in data.iter_mut().enumerate() {
        if sp.is_nyquist(m) {
            *z = Complex64::new(0.0, 0.0);
        } else {
            let k = TWO_PI * sp.signed_index(m) as f64 / n as f64;
            *z *= Complex64::from_polar(1.0, k * delta);
        }
    }
    sp.inverse(data);
}

/// Mixed representation `R(X_j, y_m) = ρ(X_j + y_m/2, X_j - y_m/2)` for
/// `y_m = mΔx`, `m ∈ [-N/2, N/2)`, stored `j * N + (m mod N)`.
fn mixed_from_kernel(rho: &Kernel) -> Vec<CMat2> {
    let n = rho.n;
    let sp = Spectral::new(n);
    let mut out = vec![CMat2::zeros(); n * n];
    for mi in 0..n {
        let m = signed(mi, n);
        if m % 2 == 0 {
            for j in 0..n {
                let a = (j as i64 + m / 2).rem_euclid(n as i64) as usize;
                let b = (j as i64 - m / 2).rem_euclid(n as i64) as usize;
                out[j * n + mi] = rho.at(a, b);
            }
        } else {
            // u(j) = s_m(j - (m+1)/2) with s_m(k) = ρ(k+m, k); R = u(j + ½)
            let off = (m + 1) / 2;
            for r in 0..2 {
                for c in 0..2 {
                    let mut u: Vec<Complex64> = (0..n)
                        .map(|j| {
                            let k = (j as i64 - off).rem_euclid(n as i64) as usize;
                            rho.at(k + (m.rem_euclid(n as i64)) as usize, k)[(r, c)]
                        })
                        .collect();
                    half_shift(&sp, &mut u, 0.5);
                    for j in 0..n {
                        out[j * n + mi][(r, c)] = u[j];
                    }
                }
            }
        }
    }
    if n.is_multiple_of(2) {
        // the unpaired offset keeps only its Hermitian part
        let mi = n / 2;
        for j in 0..n {
            let r = out[j * n + mi];
            out[j * n + mi] = (r + r.adjoint()) * Complex64::new(0.5, 0.0);
        }
    }
    out
}

fn kernel_from_mixed(mixed: &[CMat2], n: usize) -> Kernel {
    let sp = Spectral::new(n);
    let mut rho = Kernel::zeros(n);
    for mi in 0..n {
        let m = signed(mi, n);
        if m % 2 == 0 {
            for j in 0..n {
                let a = (j as i64 + m / 2).rem_euclid(n as i64) as usize;
                let b = (j as i64 - m / 2).rem_euclid(n as i64) as usize;
                rho.values[a * n + b] = mixed[j * n + mi];
            }
        } else {
            let off = (m + 1) / 2;
            let mm = m.rem_euclid(n as i64) as usize;
            for r in 0..2 {
                for c in 0..2 {
                    let mut u: Vec<Complex64> = (0..n).map(|j| mixed[j * n + mi][(r, c)]).collect();
                    half_shift(&sp, &mut u, -0.5);
                    for j in 0..n {
                        let k = (j as i64 - off).rem_euclid(n as i64) as usize;
                        let a = (k + mm) % n;
                        rho.values[a * n + k][(r, c)] = u[j];
                    }
                }
            }
        }
    }
    rho
}

/// Element-wise Wigner transform on a paired grid:
/// `W(X, η) = (2πε)^{-1} Δx Σ_m R(X, y_m) e^{-i y_m η/ε}`.
pub fn wigner_transform(rho: &Kernel, grid: &PhaseSpaceGrid) -> Result<SpinorField> {
    if !grid.is_paired() || grid.nx != rho.n {
        return Err(Error::GridMismatch(
            "the Wigner transform needs a paired grid matching the kernel size".into(),
        ));
    }
    rho.check_hermitian()?;
    let n = rho.n;
    let mixed = mixed_from_kernel(rho);
    let sp = Spectral::new(n);
    let norm = grid.dx / (TWO_PI * grid.eps);
    let mut values = vec![Herm2::ZERO; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        let mut comps: [Vec<Complex64>; 4] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); n]);
        for mi in 0..n {
            let sign = if signed(mi, n) % 2 == 0 { 1.0 } else { -1.0 };
            let r = mixed[j * n + mi];
            for (k, comp) in comps.iter_mut().enumerate() {
                // Pauli coefficient ½ tr(σ_k R)
                comp[mi] = (pauli_matrix(k) * r).trace() * (0.5 * sign);
            }
        }
        for comp in comps.iter_mut() {
            sp.forward(comp);
        }
        for (k, w) in row.iter_mut().enumerate() {
            *w = Herm2::new(
                comps[0][k].re * norm,
                [comps[1][k].re * norm, comps[2][k].re * norm, comps[3][k].re * norm],
            );
        }
    });
    SpinorField::from_values(grid, values)
}

/// Inverse of [`wigner_transform`] on a paired grid.
pub fn inverse_wigner(w: &SpinorField) -> Result<Kernel> {
    let grid = &w.grid;
    if !grid.is_paired() {
        return Err(Error::GridMismatch("the inverse Wigner transform needs a paired grid".into()));
    }
    let n = grid.nx;
    let sp = Spectral::new(n);
    let norm = grid.dx / (TWO_PI * grid.eps);
    let mut mixed = vec![CMat2::zeros(); n * n];
    mixed.par_chunks_mut(n).enumerate().for_each(|(j, out)| {
        let row = w.row(j);
        let mut comps: [Vec<Complex64>; 4] =
            std::array::from_fn(|k| row.iter().map(|h| Complex64::new(h.component(k), 0.0)).collect());
        for comp in comps.iter_mut() {
            sp.inverse(comp);
        }
        for (mi, slot) in out.iter_mut().enumerate() {
            let sign = if signed(mi, n) % 2 == 0 { 1.0 } else { -1.0 };
            let mut m = CMat2::zeros();
            for (k, comp) in comps.iter().enumerate() {
                m += pauli_matrix(k) * (comp[mi] * (sign / norm));
            }
            *slot = m;
        }
    });
    Ok(kernel_from_mixed(&mixed, n))
}

/// Applies `f(ix, κ, spectrum)` to the `η`-spectrum of every `x` row, where
/// `spectrum[k]` holds the four complex Pauli coefficients of bin `k`.
pub(crate) fn map_eta_spectrum<F>(w: &SpinorField, f: F) -> SpinorField
where
    F: Fn(usize, &[f64], &mut [[Complex64; 4]]) + Sync,
{
    let g = &w.grid;
    let sp = Spectral::new(g.neta);
    let kappa: Vec<f64> = (0..g.neta).map(|m| sp.wavenumber(m, g.deta)).collect();
    let mut values = vec![Herm2::ZERO; g.len()];
    values.par_chunks_mut(g.neta).enumerate().for_each(|(ix, out)| {
        let row = w.row(ix);
        let mut comps: [Vec<Complex64>; 4] =
            std::array::from_fn(|k| row.iter().map(|h| Complex64::new(h.component(k), 0.0)).collect());
        comps.iter_mut().for_each(|c| sp.forward(c));
        let mut spec: Vec<[Complex64; 4]> = (0..g.neta).map(|m| std::array::from_fn(|k| comps[k][m])).collect();
        f(ix, &kappa, &mut spec);
        for (k, comp) in comps.iter_mut().enumerate() {
            for (m, z) in comp.iter_mut().enumerate() {
                *z = spec[m][k];
            }
            sp.inverse(comp);
        }
        for (ie, o) in out.iter_mut().enumerate() {
            *o = Herm2::new(comps[0][ie].re, [comps[1][ie].re, comps[2][ie].re, comps[3][ie].re]);
        }
    });
    SpinorField {
        grid: g.clone(),
        values,
    }
}

/// Applies `f(ie, k, spectrum)` to the `x`-spectrum of every `η` column.
pub(crate) fn map_x_spectrum<F>(w: &SpinorField, f: F) -> SpinorField
where
    F: Fn(usize, &[f64], &mut [[Complex64; 4]]) + Sync,
{
    let g = &w.grid;
    let sp = Spectral::new(g.nx);
    let k: Vec<f64> = (0..g.nx).map(|m| sp.wavenumber(m, g.dx)).collect();
    let columns: Vec<Vec<Herm2>> = (0..g.neta)
        .into_par_iter()
        .map(|ie| {
            let mut comps: [Vec<Complex64>; 4] =
                std::array::from_fn(|c| (0..g.nx).map(|ix| Complex64::new(w.at(ix, ie).component(c), 0.0)).collect());
            comps.iter_mut().for_each(|c| sp.forward(c));
            let mut spec: Vec<[Complex64; 4]> = (0..g.nx).map(|m| std::array::from_fn(|c| comps[c][m])).collect();
            f(ie, &k, &mut spec);
            for (c, comp) in comps.iter_mut().enumerate() {
                for (m, z) in comp.iter_mut().enumerate() {
                    *z = spec[m][c];
                }
                sp.inverse(comp);
            }
            (0..g.nx)
                .map(|ix| Herm2::new(comps[0][ix].re, [comps[1][ix].re, comps[2][ix].re, comps[3][ix].re]))
                .collect()
        })
        .collect();
    let mut values = vec![Herm2::ZERO; g.len()];
    for (ie, col) in columns.into_iter().enumerate() {
        for (ix, v) in col.into_iter().enumerate() {
            values[g.index(ix, ie)] = v;
        }
    }
    SpinorField {
        grid: g.clone(),
        values,
    }
}

/// Spectral `∂_η W` (Nyquist mode removed).
pub fn eta_derivative(w: &SpinorField) -> SpinorField {
    map_eta_spectrum(w, |_, kappa, spec| {
        let n = spec.len();
        for (m, s) in spec.iter_mut().enumerate() {
            let factor = if n % 2 == 0 && m == n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, kappa[m])
            };
            s.iter_mut().for_each(|z| *z *= factor);
        }
    })
}

/// Spectral `∂_x W` (Nyquist mode removed).
pub fn x_derivative(w: &SpinorField) -> SpinorField {
    map_x_spectrum(w, |_, k, spec| {
        let n = spec.len();
        for (m, s) in spec.iter_mut().enumerate() {
            let factor = if n % 2 == 0 && m == n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k[m])
            };
            s.iter_mut().for_each(|z| *z *= factor);
        }
    })
}

/// `(i/ε)[u(x+y/2) - u(x-y/2)]` applied in the mixed representation.
/// For linear `u = Ex` this is `-E ∂_η W`.
pub fn vlasov_scalar(u: &(dyn Fn(f64) -> f64 + Sync), w: &SpinorField) -> SpinorField {
    let g = &w.grid;
    let eps = g.eps;
    map_eta_spectrum(w, |ix, kappa, spec| {
        let x = g.x(ix);
        for (m, s) in spec.iter_mut().enumerate() {
            let y = -eps * kappa[m];
            let factor = Complex64::new(0.0, (u(x + 0.5 * y) - u(x - 0.5 * y)) / eps);
            s.iter_mut().for_each(|z| *z *= factor);
        }
    })
}

/// Pointwise `i[Ω, W]`; traceless by construction.
pub fn spin_precession_term(omega: &[Herm2], w: &SpinorField) -> Result<SpinorField> {
    if omega.len() != w.values.len() {
        return Err(Error::GridMismatch(format!(
            "precession field has {} nodes, spinor field {}",
            omega.len(),
            w.values.len()
        )));
    }
    Ok(SpinorField {
        grid: w.grid.clone(),
        values: omega.iter().zip(&w.values).map(|(o, v)| commutator_i(o, v)).collect(),
    })
}

/// `(η/m) ∂_x W`.
pub fn kinetic_transport(mass: f64, w: &SpinorField) -> SpinorField {
    let g = &w.grid;
    let mut d = x_derivative(w);
    for ix in 0..g.nx {
        for ie in 0..g.neta {
            let i = g.index(ix, ie);
            d.values[i] = d.values[i] * (g.eta(ie) / mass);
        }
    }
    d
}

/// Spin-field term `(i/ε)[Ω(x+y/2) R - R Ω(x-y/2)]` of a weakly scaled
/// exchange field `εΩ(x)·σ`, i.e. `i(Ω(x+y/2) R - R Ω(x-y/2))`.
pub fn spin_field_term(omega: &(dyn Fn(f64) -> Vector3<f64> + Sync), w: &SpinorField) -> SpinorField {
    let g = &w.grid;
    let eps = g.eps;
    map_eta_spectrum(w, |ix, kappa, spec| {
        let x = g.x(ix);
        for (m, s) in spec.iter_mut().enumerate() {
            let y = -eps * kappa[m];
            let plus = spin_matrix(&omega(x + 0.5 * y));
            let minus = spin_matrix(&omega(x - 0.5 * y));
            let r = from_pauli(s);
            let out = (plus * r - r * minus) * Complex64::new(0.0, 1.0);
            *s = to_pauli(&out);
        }
    })
}

pub(crate) fn spin_matrix(v: &Vector3<f64>) -> CMat2 {
    Herm2::from_parts(0.0, *v).reconstruct()
}

/// `Σ_k c_k σ_k` for complex coefficients.
pub(crate) fn from_pauli(c: &[Complex64; 4]) -> CMat2 {
    (0..4).map(|k| pauli_matrix(k) * c[k]).sum()
}

/// Complex Pauli coefficients `½ tr(σ_k M)`.
pub(crate) fn to_pauli(m: &CMat2) -> [Complex64; 4] {
    std::array::from_fn(|k| (pauli_matrix(k) * m).trace() * 0.5)
}

/// `exp(-i t v·σ)`.
pub(crate) fn spin_propagator(v: &Vector3<f64>, t: f64) -> CMat2 {
    let n = v.norm();
    let (s, c) = (n * t).sin_cos();
    let mut m = CMat2::identity() * Complex64::new(c, 0.0);
    if n > 0.0 {
        m -= spin_matrix(&(v / n)) * Complex64::new(0.0, s);
    }
    m
}

/// Residual of the two-term Moyal expansion for `h = η²/2m + u(x)`.
///
/// For each `ε` the grid of `w` is re-scaled and the returned value is
/// `‖(i/ε)𝓛_ε(u) + u'(x) ∂_η W‖₂`. The quadratic kinetic symbol contributes
/// identically to both sides and cancels exactly.
pub fn moyal_residual(
    u: &(dyn Fn(f64) -> f64 + Sync),
    du: &(dyn Fn(f64) -> f64 + Sync),
    w: &SpinorField,
    epsilons: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let deta = eta_derivative(w);
    epsilons
        .iter()
        .map(|&eps| {
            let grid = w.grid.with_eps(eps)?;
            let field = SpinorField {
                grid: grid.clone(),
                values: w.values.clone(),
            };
            let quantum = vlasov_scalar(u, &field);
            let mut poisson = deta.clone();
            poisson.grid = grid.clone();
            for ix in 0..grid.nx {
                let f = du(grid.x(ix));
                for ie in 0..grid.neta {
                    let i = grid.index(ix, ie);
                    poisson.values[i] = poisson.values[i] * f;
                }
            }
            Ok((eps, quantum.zip_map(&poisson, |a, b| *a + *b).l2_norm()))
        })
        .collect()
}

/// Least-squares slope of `log r` against `log ε`.
pub fn loglog_slope(table: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = table.iter().map(|(e, r)| (e.ln(), r.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Periodic trigonometric interpolant of samples on `x0 + jΔx`; the Nyquist
/// mode enters as a cosine so that the interpolant stays real.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicInterpolant {
    x0: f64,
    period: f64,
    coeffs: Vec<(f64, Complex64)>,
}

impl PeriodicInterpolant {
    pub fn new(samples: &[f64], x0: f64, dx: f64) -> Self {
        let n = samples.len();
        let sp = Spectral::new(n);
        let spec = sp.forward_real(samples);
        let coeffs = spec
            .iter()
            .enumerate()
            .map(|(m, z)| {
                let weight = if sp.is_nyquist(m) { 0.5 } else { 1.0 };
                (sp.wavenumber(m, dx), z * (weight / n as f64))
            })
            .collect();
        PeriodicInterpolant {
            x0,
            period: n as f64 * dx,
            coeffs,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.x0).rem_euclid(self.period);
        let n = self.coeffs.len();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(m, (k, c))| {
                if n.is_multiple_of(2) && m == n / 2 {
                    2.0 * c.re * (k * t).cos()
                } else {
                    (c * Complex64::from_polar(1.0, k * t)).re
                }
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Two-component coherent state on a periodic grid.
    fn coherent_kernel(n: usize, dx: f64, center: f64, width: f64, k0: f64) -> Kernel {
        let norm = (width * TWO_PI.sqrt()).sqrt();
        let phi = |j: usize| {
            let x = j as f64 * dx - center;
            let amp = (-x * x / (4.0 * width * width)).exp() / norm;
            let phase = Complex64::from_polar(1.0, k0 * x);
            [phase * (amp * 0.8), phase * (amp * 0.6)]
        };
        Kernel::from_fn(n, |a, b| {
            let (pa, pb) = (phi(a), phi(b));
            CMat2::from_fn(|r, cidx| pa[r] * pb[cidx].conj())
        })
    }

    #[test]
    fn zero_kernel_and_zero_field() {
        let g = PhaseSpaceGrid::paired(16, 0.0, 0.5, 0.3).unwrap();
        let w = wigner_transform(&Kernel::zeros(16), &g).unwrap();
        assert!(w.values.iter().all(|h| *h == Herm2::ZERO));
        let rho = inverse_wigner(&SpinorField::zeros(&g)).unwrap();
        assert!(rho.values.iter().all(|m| m.iter().all(|z| *z == c(0.0, 0.0))));
    }

    #[test]
    fn rejects_non_hermitian_kernel() {
        let mut rho = Kernel::zeros(8);
        rho.values[1] = CMat2::identity();
        let g = PhaseSpaceGrid::paired(8, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(wigner_transform(&rho, &g), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn coherent_state_round_trip_and_mass() {
        let n = 128;
        let dx = 0.25;
        let eps = 0.5;
        let g = PhaseSpaceGrid::paired(n, 0.0, dx, eps).unwrap();
        let rho = coherent_kernel(n, dx, 16.0, 0.8, 0.7);
        let w = wigner_transform(&rho, &g).unwrap();
        let back = inverse_wigner(&w).unwrap();
        assert!(back.max_abs_diff(&rho) < 1e-10);
        assert!((w.mass() - dx * rho.half_trace()).abs() < 1e-10);
        assert!((2.0 * dx * back.half_trace() - 1.0).abs() < 1e-8);
    }

    /// Dense oracle for one node: direct sum over a 4× finer y-quadrature of
    /// the continuous coherent state.
    #[test]
    fn coherent_state_matches_fine_quadrature() {
        let n = 128;
        let dx = 0.25;
        let eps = 0.5;
        let (center, width, k0) = (16.0, 0.8, 0.7);
        let g = PhaseSpaceGrid::paired(n, 0.0, dx, eps).unwrap();
        let w = wigner_transform(&coherent_kernel(n, dx, center, width, k0), &g).unwrap();
        let norm = (width * TWO_PI.sqrt()).sqrt();
        let phi = |x: f64| {
            let s = x - center;
            let amp = (-s * s / (4.0 * width * width)).exp() / norm;
            let phase = Complex64::from_polar(1.0, k0 * s);
            [phase * (amp * 0.8), phase * (amp * 0.6)]
        };
        let fine = dx / 4.0;
        for &(ix, ie) in &[(64usize, 64usize), (62, 72), (66, 58)] {
            let x = g.x(ix);
            let eta = g.eta(ie);
            let mut acc = CMat2::zeros();
            for m in -400i64..=400 {
                let y = m as f64 * fine;
                let (pa, pb) = (phi(x + y / 2.0), phi(x - y / 2.0));
                let r = CMat2::from_fn(|a, b| pa[a] * pb[b].conj());
                acc += r * (Complex64::from_polar(1.0, -y * eta / eps) * (fine / (TWO_PI * eps)));
            }
            let oracle = Herm2::project(&acc);
            assert!((oracle - w.at(ix, ie)).hs_norm() < 1e-10, "node ({ix},{ie})");
            assert!(w.at(ix, ie).min_eigenvalue() > -1e-12);
        }
    }

    #[test]
    fn band_limited_random_kernel_round_trip() {
        let n = 96;
        let dx = 0.25;
        let g = PhaseSpaceGrid::paired(n, 0.0, dx, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // mixture of localized, smooth spinor wave packets
        let packets: Vec<(f64, f64, [Complex64; 2], f64)> = (0..5)
            .map(|_| {
                (
                    rng.gen_range(8.0..16.0),
                    rng.gen_range(-2.0..2.0),
                    [c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))],
                    rng.gen_range(0.1..1.0),
                )
            })
            .collect();
        let psi = |p: &(f64, f64, [Complex64; 2], f64), j: usize| {
            let x = j as f64 * dx - p.0;
            let env = Complex64::from_polar((-x * x / (4.0 * 0.49)).exp(), p.1 * x);
            [p.2[0] * env, p.2[1] * env]
        };
        let rho = Kernel::from_fn(n, |a, b| {
            let mut m = CMat2::zeros();
            for p in &packets {
                let (pa, pb) = (psi(p, a), psi(p, b));
                m += CMat2::from_fn(|r, cc| pa[r] * pb[cc].conj()) * c(p.3, 0.0);
            }
            m
        });
        let w = wigner_transform(&rho, &g).unwrap();
        let back = inverse_wigner(&w).unwrap();
        assert!(back.max_abs_diff(&rho) < 1e-10, "{}", back.max_abs_diff(&rho));
        assert!((w.mass() - dx * rho.half_trace()).abs() < 1e-10);
        back.check_hermitian().unwrap();
    }

    fn gaussian_field(g: &PhaseSpaceGrid) -> SpinorField {
        SpinorField::from_fn(g, |x, eta| {
            let base = (-eta * eta / 2.0).exp() * (1.0 + 0.3 * x.sin());
            Herm2::new(base, [0.2 * base, -0.1 * base * x.cos(), 0.4 * base])
        })
    }

    fn x_grid(nx: usize, neta: usize, eps: f64) -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(nx, 0.0, TWO_PI / nx as f64, neta, -8.0, 16.0 / neta as f64, eps).unwrap()
    }

    #[test]
    fn vlasov_of_constant_and_linear_potential() {
        let g = x_grid(16, 64, 0.3);
        let w = gaussian_field(&g);
        let flat = vlasov_scalar(&|_| 2.5, &w);
        assert!(flat.max_abs() < 1e-14);
        let e = 0.7;
        let lin = vlasov_scalar(&|x| e * x, &w);
        let d = eta_derivative(&w);
        let diff = lin.zip_map(&d, |a, b| *a + *b * e);
        assert!(diff.max_abs() < 1e-10);
    }

    #[test]
    fn moyal_slope_quartic_and_exact_linear() {
        let g = PhaseSpaceGrid::new(8, -1.0, 0.25, 128, -10.0, 20.0 / 128.0, 1.0).unwrap();
        let w = gaussian_field(&g);
        let table = moyal_residual(&|x| x.powi(4), &|x| 4.0 * x.powi(3), &w, &[0.2, 0.1, 0.05]).unwrap();
        let slope = loglog_slope(&table);
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
        let lin = moyal_residual(&|x| 3.0 * x - 1.0, &|_| 3.0, &w, &[0.2, 0.1]).unwrap();
        assert!(lin.iter().all(|(_, r)| *r < 1e-12), "{lin:?}");
        let zero = moyal_residual(&|x| x.powi(4), &|x| 4.0 * x.powi(3), &SpinorField::zeros(&g), &[0.1]).unwrap();
        assert_eq!(zero[0].1, 0.0);
    }

    #[test]
    fn kinetic_transport_examples() {
        let g = x_grid(32, 8, 1.0);
        let w = SpinorField::from_fn(&g, |x, _| Herm2::scalar_multiple((3.0 * x).sin()));
        let t = kinetic_transport(2.0, &w);
        for ix in 0..g.nx {
            for ie in 0..g.neta {
                let expect = g.eta(ie) / 2.0 * 3.0 * (3.0 * g.x(ix)).cos();
                assert!((t.at(ix, ie).scalar - expect).abs() < 1e-12);
            }
        }
        let flat = SpinorField::from_fn(&g, |_, eta| Herm2::scalar_multiple(eta));
        assert!(kinetic_transport(1.0, &flat).max_abs() < 1e-13);
        assert!(kinetic_transport(f64::INFINITY, &w).max_abs() == 0.0);
    }

    #[test]
    fn precession_examples() {
        let g = x_grid(2, 2, 1.0);
        let w = SpinorField::from_fn(&g, |_, _| Herm2::basis(1));
        let omega = vec![Herm2::basis(3) * 0.5; 4];
        let p = spin_precession_term(&omega, &w).unwrap();
        // oracle: i[A, B] with dense matrices
        let a = omega[0].reconstruct();
        let b = Herm2::basis(1).reconstruct();
        let dense = Herm2::decompose(&((a * b - b * a) * c(0.0, 1.0))).unwrap();
        assert!((p.values[0] - dense).hs_norm() < 1e-15);
        assert!(p.values.iter().all(|v| v.scalar == 0.0));
        let id = vec![Herm2::identity(); 4];
        assert!(spin_precession_term(&id, &w).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn spin_field_term_reduces_to_commutator_for_uniform_field() {
        let g = x_grid(8, 32, 0.2);
        let w = gaussian_field(&g);
        let om = Vector3::new(0.3, -0.2, 0.9);
        let q = spin_field_term(&|_| om, &w);
        let omega = vec![Herm2::from_parts(0.0, om); g.len()];
        let p = spin_precession_term(&omega, &w).unwrap();
        assert!(q.sub(&p).max_abs() < 1e-12);
    }

    #[test]
    fn interpolant_reproduces_band_limited_function() {
        let n = 16;
        let dx = TWO_PI / n as f64;
        let f = |x: f64| 0.3 + (2.0 * x).cos() - 0.5 * (3.0 * x).sin();
        let samples: Vec<f64> = (0..n).map(|j| f(j as f64 * dx)).collect();
        let p = PeriodicInterpolant::new(&samples, 0.0, dx);
        for &x in &[0.1, 1.7, 4.4, -2.0] {
            assert!((p.eval(x) - f(x)).abs() < 1e-13);
        }
    }
}
