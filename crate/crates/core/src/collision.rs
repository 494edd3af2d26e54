//! Matrix-valued linear collision operator in channel form.
//!
//! `Q(W)(η) = Δη Σ_{η'} Σ_i r_i(η-η') [S_i W' S_i - ½ S_i² W - ½ W S_i²]`
//! with `r_i = prefactor · ρ_i`. Channel tables live on the transfer grid
//! `ξ_j = jΔη`, `0 ≤ j < N_η`; negative transfers reuse `|j|`, which makes
//! the rate table exactly even. The `η'` window is the full grid for every
//! output node, so `Q = Q1 + Q2` holds nodewise:
//!
//! * `Q1(W) = Δη Σ r_i S_i (W' - W) S_i` relaxes momentum and conserves
//!   `Δη Σ_η` of every Pauli component;
//! * `Q2(W) = Δη Σ r_i ½[[S_i, W], S_i]` is local in `η`, traceless, and
//!   acts on the spin part only.

use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;

use crate::environment::{assemble_kmatrix, diagonalize_channels, BathState, PairPotential, PauliQuad, ScatteringChannels};
use crate::pauli::Herm2;
use crate::wigner::SpinorField;
use crate::{Error, Result};

/// Spin parts below this norm count as zero.
pub const SPIN_ZERO_TOL: f64 = 1e-12;
/// Angular tolerance (radians) for parallel channel directions.
pub const PARALLEL_TOL: f64 = 1e-8;

/// `2 (2πħ)^{2d}` for `d = 1`.
pub fn standard_prefactor(hbar: f64) -> f64 {
    2.0 * (2.0 * std::f64::consts::PI * hbar).powi(2)
}

/// Non-negative transfers `jΔη`, `0 ≤ j < neta`.
pub fn transfer_grid(deta: f64, neta: usize) -> Vec<f64> {
    (0..neta).map(|j| j as f64 * deta).collect()
}

/// Channels tabulated on the transfer grid of a momentum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionSetup {
    pub deta: f64,
    pub neta: usize,
    pub prefactor: f64,
    pub channels: ScatteringChannels,
    rates: Vec<[f64; 4]>,
}

impl CollisionSetup {
    pub fn new(channels: ScatteringChannels, prefactor: f64, deta: f64, neta: usize) -> Result<Self> {
        if channels.len() != neta {
            return Err(Error::GridMismatch(format!(
                "channel table has {} transfers, the momentum grid needs {neta}",
                channels.len()
            )));
        }
        for (j, xi) in channels.xi.iter().enumerate() {
            if (xi - j as f64 * deta).abs() > 1e-12 * deta.max(1.0) * (j.max(1) as f64) {
                return Err(Error::GridMismatch(format!(
                    "transfer node {j} is {xi}, expected {}",
                    j as f64 * deta
                )));
            }
        }
        for (j, (rho, s)) in channels.rho.iter().zip(&channels.s).enumerate() {
            if rho.iter().any(|r| !r.is_finite()) || s.iter().any(|h| !h.is_finite()) {
                return Err(Error::EigenFailure(j));
            }
        }
        if !prefactor.is_finite() {
            return Err(Error::InvalidParameter {
                name: "prefactor",
                reason: "must be finite".into(),
            });
        }
        let rates = channels.rho.iter().map(|r| r.map(|v| v * prefactor)).collect();
        Ok(CollisionSetup {
            deta,
            neta,
            prefactor,
            channels,
            rates,
        })
    }

    /// Channels from a covariance table `K̂(jΔη)` and the transformed
    /// potential.
    pub fn from_kmatrix(
        potential: &PairPotential,
        k: &[Matrix4<f64>],
        hbar: f64,
        deta: f64,
        neta: usize,
        prefactor: f64,
    ) -> Result<Self> {
        let xi = transfer_grid(deta, neta);
        let vt: Vec<PauliQuad> = xi.iter().map(|&x| potential.fourier_at(x, hbar)).collect();
        let channels = diagonalize_channels(&xi, k, &vt)?;
        Self::new(channels, prefactor, deta, neta)
    }

    /// Channels from a homogeneous bath with the standard prefactor.
    pub fn from_bath(potential: &PairPotential, bath: &BathState, hbar: f64, deta: f64, neta: usize) -> Result<Self> {
        let k = assemble_kmatrix(bath, &transfer_grid(deta, neta), hbar)?;
        Self::from_kmatrix(potential, &k, hbar, deta, neta, standard_prefactor(hbar))
    }

    /// Rates `r_i` at transfer index `k - k'`.
    pub fn rates(&self, d: usize) -> &[f64; 4] {
        &self.rates[d]
    }

    pub fn scattering(&self, d: usize) -> &PauliQuad {
        &self.channels.s[d]
    }

    /// `Δη Σ_{η'} Σ_i r_i S_i²` at output node `k`.
    pub fn loss_operator(&self, k: usize) -> Herm2 {
        (0..self.neta)
            .map(|kp| {
                let d = k.abs_diff(kp);
                (0..4).map(|i| self.channels.s[d][i].square() * self.rates[d][i]).sum::<Herm2>()
            })
            .sum::<Herm2>()
            * self.deta
    }

    /// Upper bound on the collision rate, used for step-size control.
    pub fn max_rate(&self) -> f64 {
        (0..self.neta)
            .map(|k| {
                (0..self.neta)
                    .map(|kp| {
                        let d = k.abs_diff(kp);
                        (0..4)
                            .map(|i| {
                                let s = &self.channels.s[d][i];
                                2.0 * self.rates[d][i].abs() * (s.scalar.abs() + s.spin.norm()).powi(2)
                            })
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    * self.deta
            })
            .fold(0.0, f64::max)
    }

    fn check(&self, w: &SpinorField) -> Result<()> {
        if w.grid.neta != self.neta || (w.grid.deta - self.deta).abs() > 1e-12 * self.deta {
            return Err(Error::GridMismatch(format!(
                "collision setup built for {} nodes at Δη={}, field has {} at Δη={}",
                self.neta, self.deta, w.grid.neta, w.grid.deta
            )));
        }
        Ok(())
    }
}

fn map_rows(w: &SpinorField, f: impl Fn(&[Herm2], &mut [Herm2]) + Sync) -> SpinorField {
    let neta = w.grid.neta;
    let mut values = vec![Herm2::ZERO; w.values.len()];
    values
        .par_chunks_mut(neta)
        .zip(w.values.par_chunks(neta))
        .for_each(|(out, row)| f(row, out));
    SpinorField {
        grid: w.grid.clone(),
        values,
    }
}

/// Full operator in gain/loss form.
pub fn q_full(w: &SpinorField, setup: &CollisionSetup) -> Result<SpinorField> {
    setup.check(w)?;
    let loss: Vec<Herm2> = (0..setup.neta).map(|k| setup.loss_operator(k)).collect();
    Ok(map_rows(w, |row, out| {
        for (k, o) in out.iter_mut().enumerate() {
            let mut gain = Herm2::ZERO;
            for (kp, wp) in row.iter().enumerate() {
                let d = k.abs_diff(kp);
                let r = setup.rates(d);
                for (i, s) in setup.scattering(d).iter().enumerate() {
                    if r[i] != 0.0 {
                        gain += s.sandwich(wp) * r[i];
                    }
                }
            }
            *o = gain * setup.deta - loss[k].half_anticommutator(&row[k]);
        }
    }))
}

/// Momentum-relaxing part `Δη Σ r_i S_i (W' - W) S_i`.
pub fn q1(w: &SpinorField, setup: &CollisionSetup) -> Result<SpinorField> {
    setup.check(w)?;
    Ok(map_rows(w, |row, out| {
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = Herm2::ZERO;
            for (kp, wp) in row.iter().enumerate() {
                let d = k.abs_diff(kp);
                let r = setup.rates(d);
                let diff = *wp - row[k];
                for (i, s) in setup.scattering(d).iter().enumerate() {
                    if r[i] != 0.0 {
                        acc += s.sandwich(&diff) * r[i];
                    }
                }
            }
            *o = acc * setup.deta;
        }
    }))
}

/// Spin block of `A ↦ ½[[S, A], S]`: `-2(|s|² I - s sᵀ)`.
pub fn double_commutator_block(s: &Vector3<f64>) -> Matrix3<f64> {
    (s * s.transpose() - Matrix3::identity() * s.norm_squared()) * 2.0
}

/// 4×4 real matrix of `Q2` at output node `k` in Pauli coordinates. The
/// first row and column vanish.
pub fn q2_superoperator(setup: &CollisionSetup, k: usize) -> Matrix4<f64> {
    let mut block = Matrix3::zeros();
    for kp in 0..setup.neta {
        let d = k.abs_diff(kp);
        let r = setup.rates(d);
        for (i, s) in setup.scattering(d).iter().enumerate() {
            if r[i] != 0.0 {
                block += double_commutator_block(&s.spin) * r[i];
            }
        }
    }
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(1, 1).copy_from(&(block * setup.deta));
    m
}

pub(crate) fn apply_superoperator(m: &Matrix4<f64>, w: &Herm2) -> Herm2 {
    Herm2::from_array((m * nalgebra::Vector4::from(w.to_array())).into())
}

/// Local spin-flip part, applied through the per-node superoperator.
pub fn q2(w: &SpinorField, setup: &CollisionSetup) -> Result<SpinorField> {
    setup.check(w)?;
    let ops: Vec<Matrix4<f64>> = (0..setup.neta).map(|k| q2_superoperator(setup, k)).collect();
    Ok(map_rows(w, |row, out| {
        for (k, o) in out.iter_mut().enumerate() {
            *o = apply_superoperator(&ops[k], &row[k]);
        }
    }))
}

/// Kernel structure of `Q2` from the channel spin directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelClass {
    /// Every active channel is scalar; `Q2 ≡ 0`.
    NoSpin,
    /// All active spin parts are parallel to the unit vector `λ`.
    FixedDirection(Vector3<f64>),
    VaryingDirection,
}

/// Classifies spin parts `s_i(ξ)` of channels with nonzero rate.
pub fn classify_spin_parts<'a>(parts: impl IntoIterator<Item = &'a Vector3<f64>>) -> ChannelClass {
    let mut axis: Option<Vector3<f64>> = None;
    for s in parts {
        let n = s.norm();
        if n <= SPIN_ZERO_TOL {
            continue;
        }
        let u = s / n;
        match axis {
            None => axis = Some(u),
            Some(a) => {
                if a.cross(&u).norm() > PARALLEL_TOL {
                    return ChannelClass::VaryingDirection;
                }
            }
        }
    }
    match axis {
        None => ChannelClass::NoSpin,
        Some(a) => {
            let lead = a.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(1.0);
            ChannelClass::FixedDirection(if lead < 0.0 { -a } else { a })
        }
    }
}

pub fn classify_channels(setup: &CollisionSetup) -> ChannelClass {
    let parts: Vec<Vector3<f64>> = (0..setup.neta)
        .flat_map(|d| (0..4).filter(move |&i| setup.rates[d][i] != 0.0).map(move |i| (d, i)))
        .map(|(d, i)| setup.channels.s[d][i].spin)
        .collect();
    classify_spin_parts(&parts)
}

/// Projection of a node value onto the kernel of `Q2`.
pub fn kernel_projection(w: &Herm2, class: &ChannelClass) -> Herm2 {
    match class {
        ChannelClass::NoSpin => *w,
        ChannelClass::FixedDirection(l) => Herm2::from_parts(w.scalar, l * l.dot(&w.spin)),
        ChannelClass::VaryingDirection => Herm2::scalar_multiple(w.scalar),
    }
}

/// Matrix of [`kernel_projection`] in Pauli coordinates.
pub fn kernel_projector(class: &ChannelClass) -> Matrix4<f64> {
    Matrix4::from_fn(|r, c| kernel_projection(&Herm2::basis(c), class).component(r))
}

/// Relaxation-time ansatz `(W̄ - W)/τ`.
pub fn rta(w: &SpinorField, wbar: &SpinorField, tau: f64) -> Result<SpinorField> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("relaxation time must be positive, got {tau}"),
        });
    }
    w.check_same_grid(wbar)?;
    Ok(wbar.zip_map(w, |b, a| (*b - *a) * (1.0 / tau)))
}

/// `rta` with `W̄` from [`kernel_projection`].
pub fn rta_projected(w: &SpinorField, class: &ChannelClass, tau: f64) -> Result<SpinorField> {
    let wbar = w.map(|v| kernel_projection(v, class));
    rta(w, &wbar, tau)
}
