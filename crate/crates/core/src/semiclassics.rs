//! Scaling regimes, limit collision operators, the kinetic time steppers,
//! Bloch dynamics, and the semiclassical `ε`-sweep.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::collision::{self, rta_projected, ChannelClass, CollisionSetup};
use crate::environment::{
    density_kmatrix, mean_field, position_kmatrix, separation, BathState, Covariance, PairPotential, PauliQuad,
};
use crate::pauli::Herm2;
use crate::wigner::{
    from_pauli, kinetic_transport, map_eta_spectrum, map_x_spectrum, spin_propagator, to_pauli, vlasov_scalar,
    PeriodicInterpolant, PhaseSpaceGrid, SpinorField,
};
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Scaling gate

/// A power `ε^p` of the semiclassical parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EpsOrder(pub i32);

impl EpsOrder {
    pub const ONE: EpsOrder = EpsOrder(0);
    pub const EPS: EpsOrder = EpsOrder(1);
    pub const EPS_SQUARED: EpsOrder = EpsOrder(2);
    pub const INV_EPS: EpsOrder = EpsOrder(-1);

    pub fn value(self, eps: f64) -> f64 {
        eps.powi(self.0)
    }

    pub fn parse(s: &str) -> Option<EpsOrder> {
        match s.trim() {
            "1" => Some(Self::ONE),
            "eps" => Some(Self::EPS),
            "eps^2" => Some(Self::EPS_SQUARED),
            "1/eps" => Some(Self::INV_EPS),
            _ => None,
        }
    }
}

impl fmt::Display for EpsOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => write!(f, "1"),
            1 => write!(f, "eps"),
            -1 => write!(f, "1/eps"),
            p if p > 0 => write!(f, "eps^{p}"),
            p => write!(f, "1/eps^{}", -p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InteractionRange {
    Short,
    Long,
}

impl InteractionRange {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "short" => Some(Self::Short),
            "long" => Some(Self::Long),
            _ => None,
        }
    }
}

impl fmt::Display for InteractionRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Short => "short",
            Self::Long => "long",
        })
    }
}

/// Collision operator selected by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionTag {
    /// Boltzmann operator from the microscopic covariance.
    Q0,
    /// `Q_s + Q_n`.
    LowDensityLongRange,
    /// `Q_s`.
    WeakCouplingLongRange,
    Relaxation,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorSet {
    pub mean_field: bool,
    pub collision: CollisionTag,
}

/// Amplitudes of coupling `a`, density `b` and covariance `γ` plus the
/// interaction range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingScenario {
    pub coupling: EpsOrder,
    pub density: EpsOrder,
    pub range: InteractionRange,
    pub covariance: EpsOrder,
}

impl ScalingScenario {
    pub fn new(coupling: EpsOrder, density: EpsOrder, range: InteractionRange, covariance: EpsOrder) -> Result<Self> {
        let s = ScalingScenario {
            coupling,
            density,
            range,
            covariance,
        };
        s.operators()?;
        Ok(s)
    }

    /// Maps an admissible tuple to its operator set.
    pub fn operators(&self) -> Result<OperatorSet> {
        let (a, b) = (self.coupling, self.density);
        if a.0 + b.0 != 1 {
            return Err(Error::InadmissibleScaling(format!(
                "a·b must equal eps (got a={a}, b={b})"
            )));
        }
        let low_density = match (a, b) {
            (EpsOrder::ONE, EpsOrder::EPS) => true,
            (EpsOrder::EPS, EpsOrder::ONE) => false,
            _ => {
                return Err(Error::InadmissibleScaling(format!(
                    "a and b must each be 1 or eps (got a={a}, b={b})"
                )))
            }
        };
        let required = if low_density { EpsOrder::EPS } else { EpsOrder::INV_EPS };
        if self.covariance != required {
            return Err(Error::InadmissibleScaling(format!(
                "the {} scaling needs covariance amplitude gamma={required}, got {}",
                if low_density { "low-density" } else { "weak-coupling" },
                self.covariance
            )));
        }
        Ok(match (self.range, low_density) {
            (InteractionRange::Short, _) => OperatorSet {
                mean_field: false,
                collision: CollisionTag::Q0,
            },
            (InteractionRange::Long, true) => OperatorSet {
                mean_field: true,
                collision: CollisionTag::LowDensityLongRange,
            },
            (InteractionRange::Long, false) => OperatorSet {
                mean_field: true,
                collision: CollisionTag::WeakCouplingLongRange,
            },
        })
    }
}

// ---------------------------------------------------------------------------
// Hamiltonian data

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub wavenumber: f64,
    pub cos: f64,
    pub sin: f64,
}

/// `c + s·x + Σ (a_k cos kx + b_k sin kx)`; the derivative is periodic
/// whenever the wavenumbers fit the domain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigSeries {
    pub constant: f64,
    pub slope: f64,
    pub terms: Vec<TrigTerm>,
}

impl TrigSeries {
    pub fn constant(c: f64) -> Self {
        TrigSeries {
            constant: c,
            ..Default::default()
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.constant
            + self.slope * x
            + self
                .terms
                .iter()
                .map(|t| t.cos * (t.wavenumber * x).cos() + t.sin * (t.wavenumber * x).sin())
                .sum::<f64>()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.slope
            + self
                .terms
                .iter()
                .map(|t| t.wavenumber * (t.sin * (t.wavenumber * x).cos() - t.cos * (t.wavenumber * x).sin()))
                .sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.slope == 0.0 && self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.constant.is_finite()
            && self.slope.is_finite()
            && self.terms.iter().all(|t| t.wavenumber.is_finite() && t.cos.is_finite() && t.sin.is_finite())
    }

    fn check_periodic(&self, period: f64, name: &'static str) -> Result<()> {
        for t in &self.terms {
            let turns = t.wavenumber * period / TWO_PI;
            if (turns - turns.round()).abs() > 1e-9 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("wavenumber {} does not fit the period {period}", t.wavenumber),
                });
            }
        }
        Ok(())
    }
}

/// `η²/2m + u(x) + Ω(x)·σ`; `mass = None` drops the kinetic part.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hamiltonian {
    pub mass: Option<f64>,
    pub potential: TrigSeries,
    pub field: [TrigSeries; 3],
}

impl Hamiltonian {
    pub fn field_at(&self, x: f64) -> Vector3<f64> {
        Vector3::new(self.field[0].eval(x), self.field[1].eval(x), self.field[2].eval(x))
    }

    fn validate(&self, period: f64) -> Result<()> {
        if let Some(m) = self.mass {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "mass",
                    reason: format!("must be positive, got {m}"),
                });
            }
        }
        self.potential.check_periodic(period, "potential")?;
        for f in &self.field {
            f.check_periodic(period, "field")?;
            if f.slope != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "field",
                    reason: "the exchange field must be periodic (no slope)".into(),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Long-range operators

/// `½(AFB + BFA) - ½{½{A, B}, F}`: one symmetrized summand of the
/// position-space dissipator.
fn paired_term(a: &Herm2, b: &Herm2, f: &Herm2) -> Herm2 {
    let sum = *a + *b;
    (sum.sandwich(f) - a.sandwich(f) - b.sandwich(f)) * 0.5 - a.half_anticommutator(b).half_anticommutator(f)
}

fn superoperator_of(apply: impl Fn(&Herm2) -> Herm2) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for c in 0..4 {
        let col = apply(&Herm2::basis(c));
        for r in 0..4 {
            m[(r, c)] = col.component(r);
        }
    }
    m
}

/// Per-`x` superoperators of `Q_s(F)(x) = (1/π) ∬ dz dz' Σ_ij γ_ij(z, z')
/// [V_i F V_j - ½ V_i V_j F - ½ F V_i V_j]`, with `V_i = V_i(x - z)` and
/// `V_j = V_j(x - z')`. The covariance is the position-space table of the
/// bath (self term excluded).
pub fn qs_superoperators(x: &[f64], pair: &PairPotential, bath: &BathState, period: Option<f64>) -> Vec<Matrix4<f64>> {
    let c_only = BathState {
        include_d: false,
        ..bath.clone()
    };
    let table = position_kmatrix(&c_only);
    let nz = bath.len();
    let w = bath.dz * bath.dz / std::f64::consts::PI;
    x.par_iter()
        .map(|&xv| {
            let v: Vec<PauliQuad> = (0..nz).map(|a| pair.at(separation(xv, bath.z(a), period))).collect();
            superoperator_of(|f| {
                let mut acc = Herm2::ZERO;
                for a in 0..nz {
                    for b in 0..nz {
                        let k = &table[a * nz + b];
                        for i in 0..4 {
                            for j in 0..4 {
                                if k[(i, j)] != 0.0 {
                                    acc += paired_term(&v[a][i], &v[b][j], f) * k[(i, j)];
                                }
                            }
                        }
                    }
                }
                acc * w
            })
        })
        .collect()
}

/// Per-`x` superoperators of `Q_n(F)(x) = (1/π) ∫ dz Σ_ij k^D_ij(n(z))
/// [V_i F V_j - ½ V_i V_j F - ½ F V_i V_j]`, all at `V(x - z)`.
pub fn qn_superoperators(x: &[f64], pair: &PairPotential, bath: &BathState, period: Option<f64>) -> Vec<Matrix4<f64>> {
    let w = bath.dz / std::f64::consts::PI;
    x.par_iter()
        .map(|&xv| {
            let terms: Vec<(PauliQuad, Matrix4<f64>)> = bath
                .n1
                .iter()
                .enumerate()
                .map(|(a, n)| (pair.at(separation(xv, bath.z(a), period)), density_kmatrix(n)))
                .collect();
            superoperator_of(|f| {
                let mut acc = Herm2::ZERO;
                for (v, k) in &terms {
                    for i in 0..4 {
                        for j in 0..4 {
                            if k[(i, j)] != 0.0 {
                                acc += paired_term(&v[i], &v[j], f) * k[(i, j)];
                            }
                        }
                    }
                }
                acc * w
            })
        })
        .collect()
}

/// Applies per-`x` superoperators locally in `η`.
pub fn apply_local(f: &SpinorField, ops: &[Matrix4<f64>]) -> Result<SpinorField> {
    if ops.len() != f.grid.nx {
        return Err(Error::GridMismatch(format!(
            "{} superoperators for {} x nodes",
            ops.len(),
            f.grid.nx
        )));
    }
    let neta = f.grid.neta;
    let mut out = SpinorField::zeros(&f.grid);
    out.values
        .par_chunks_mut(neta)
        .zip(f.values.par_chunks(neta))
        .zip(ops.par_iter())
        .for_each(|((o, row), m)| {
            for (oi, v) in o.iter_mut().zip(row) {
                *oi = collision::apply_superoperator(m, v);
            }
        });
    Ok(out)
}

fn period_of(grid: &PhaseSpaceGrid, bath: &BathState) -> Result<Option<f64>> {
    let span = bath.dz * bath.len() as f64;
    let p = grid.period();
    if (span - p).abs() <= 1e-9 * p {
        Ok(Some(p))
    } else {
        Err(Error::GridMismatch(format!(
            "bath grid spans {span:.6e}, periodic x domain is {p:.6e}"
        )))
    }
}

/// `Q_s(F)` on the periodic `x` grid of `f`.
pub fn qs_apply(f: &SpinorField, pair: &PairPotential, bath: &BathState) -> Result<SpinorField> {
    let period = period_of(&f.grid, bath)?;
    apply_local(f, &qs_superoperators(&f.grid.x_nodes(), pair, bath, period))
}

/// `Q_n(F)` on the periodic `x` grid of `f`.
pub fn qn_apply(f: &SpinorField, pair: &PairPotential, bath: &BathState) -> Result<SpinorField> {
    let period = period_of(&f.grid, bath)?;
    apply_local(f, &qn_superoperators(&f.grid.x_nodes(), pair, bath, period))
}

/// Classification from the common nullspace of spin blocks (each negative
/// semidefinite, so the nullspace of the sum is the intersection).
pub fn classify_superoperators(ops: &[Matrix4<f64>]) -> ChannelClass {
    let block: Matrix3<f64> = ops.iter().map(|m| m.fixed_view::<3, 3>(1, 1).into_owned()).sum();
    let sym = (block + block.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let cutoff = (1e-10 * eig.eigenvalues.amax()).max(collision::SPIN_ZERO_TOL);
    let null: Vec<Vector3<f64>> = (0..3)
        .filter(|&i| eig.eigenvalues[i].abs() <= cutoff)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    match null.len() {
        0 => ChannelClass::VaryingDirection,
        1 => collision::classify_spin_parts(&[null[0]]),
        _ => ChannelClass::NoSpin,
    }
}

// ---------------------------------------------------------------------------
// Transport model

#[derive(Debug, Clone, PartialEq)]
pub enum CollisionModel {
    None,
    /// Momentum-space operator of Boltzmann form.
    Boltzmann(CollisionSetup),
    /// Per-`x` superoperators, local in `η`.
    Local(Vec<Matrix4<f64>>),
    /// `Q1` (when a setup is given) plus `(W̄ - W)/τ`.
    Relaxation {
        setup: Option<CollisionSetup>,
        class: ChannelClass,
        tau: f64,
    },
}

impl CollisionModel {
    pub fn apply(&self, f: &SpinorField) -> Result<SpinorField> {
        match self {
            CollisionModel::None => Ok(SpinorField::zeros(&f.grid)),
            CollisionModel::Boltzmann(setup) => collision::q_full(f, setup),
            CollisionModel::Local(ops) => apply_local(f, ops),
            CollisionModel::Relaxation { setup, class, tau } => {
                let relax = rta_projected(f, class, *tau)?;
                match setup {
                    Some(s) => Ok(collision::q1(f, s)?.zip_map(&relax, |a, b| *a + *b)),
                    None => Ok(relax),
                }
            }
        }
    }

    pub fn max_rate(&self) -> f64 {
        match self {
            CollisionModel::None => 0.0,
            CollisionModel::Boltzmann(s) => s.max_rate(),
            CollisionModel::Local(ops) => ops
                .iter()
                .map(|m| (0..4).map(|r| m.row(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max))
                .fold(0.0, f64::max),
            CollisionModel::Relaxation { setup, tau, .. } => {
                setup.as_ref().map_or(0.0, CollisionSetup::max_rate) + 1.0 / tau
            }
        }
    }

    /// Replaces the spin-flip part by a relaxation-time ansatz.
    pub fn relaxed(self, tau: f64) -> Result<CollisionModel> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("relaxation time must be positive, got {tau}"),
            });
        }
        Ok(match self {
            CollisionModel::Boltzmann(setup) => CollisionModel::Relaxation {
                class: collision::classify_channels(&setup),
                setup: Some(setup),
                tau,
            },
            CollisionModel::Local(ops) => CollisionModel::Relaxation {
                class: classify_superoperators(&ops),
                setup: None,
                tau,
            },
            CollisionModel::None => CollisionModel::Relaxation {
                setup: None,
                class: ChannelClass::NoSpin,
                tau,
            },
            r @ CollisionModel::Relaxation { .. } => r,
        })
    }
}

/// Classical limit or rescaled quantum dynamics at the grid's `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    Classical,
    Quantum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportModel {
    pub grid: PhaseSpaceGrid,
    pub hamiltonian: Hamiltonian,
    /// `H_mf(x)` per `x` node.
    pub mean_field: Option<Vec<Herm2>>,
    pub collision: CollisionModel,
    pub dynamics: Dynamics,
}

impl TransportModel {
    pub fn new(
        grid: PhaseSpaceGrid,
        hamiltonian: Hamiltonian,
        mean_field: Option<Vec<Herm2>>,
        collision: CollisionModel,
        dynamics: Dynamics,
    ) -> Result<Self> {
        hamiltonian.validate(grid.period())?;
        if let Some(h) = &mean_field {
            if h.len() != grid.nx {
                return Err(Error::GridMismatch(format!(
                    "mean field has {} nodes, x grid {}",
                    h.len(),
                    grid.nx
                )));
            }
        }
        Ok(TransportModel {
            grid,
            hamiltonian,
            mean_field,
            collision,
            dynamics,
        })
    }

    /// Precession vector `Ω(x) + h_mf(x)` per `x` node.
    pub fn precession_field(&self) -> Vec<Vector3<f64>> {
        (0..self.grid.nx)
            .map(|ix| {
                let h = self.mean_field.as_ref().map_or(Vector3::zeros(), |m| m[ix].spin);
                self.hamiltonian.field_at(self.grid.x(ix)) + h
            })
            .collect()
    }

    /// Largest admissible step and the term that sets it.
    pub fn step_limit(&self) -> (f64, &'static str) {
        let g = &self.grid;
        let mut best = (f64::INFINITY, "none");
        if let Some(m) = self.hamiltonian.mass {
            let vmax = (0..g.neta).map(|ie| g.eta(ie).abs()).fold(0.0, f64::max) / m;
            if vmax > 0.0 {
                best = (0.5 * g.dx / vmax, "transport");
            }
        }
        let fmax = (0..g.nx).map(|ix| self.hamiltonian.potential.derivative(g.x(ix)).abs()).fold(0.0, f64::max);
        if fmax > 0.0 && 0.5 * g.deta / fmax < best.0 {
            best = (0.5 * g.deta / fmax, "force");
        }
        let rate = self.collision.max_rate();
        if rate > 0.0 && 0.5 / rate < best.0 {
            best = (0.5 / rate, "collision");
        }
        best
    }
}

/// Builds the limit model selected by `scenario`.
///
/// Short range: `Q0` from the microscopic covariance `Γ0` (momentum space,
/// unit rate prefactor), no mean field. Long range: mean field from the bath
/// density and `Q_s` (`+ Q_n` at low density) from the bath covariance.
pub fn build_limit_model(
    scenario: &ScalingScenario,
    grid: &PhaseSpaceGrid,
    hamiltonian: &Hamiltonian,
    pair: &PairPotential,
    bath: &BathState,
    microscopic: &Covariance,
) -> Result<TransportModel> {
    let ops = scenario.operators()?;
    let (mean, coll) = match ops.collision {
        CollisionTag::Q0 => (None, CollisionModel::Boltzmann(boltzmann_setup(grid, pair, microscopic, None)?)),
        tag => {
            let period = period_of(grid, bath)?;
            let x = grid.x_nodes();
            let mut local = qs_superoperators(&x, pair, bath, period);
            if tag == CollisionTag::LowDensityLongRange {
                for (m, n) in local.iter_mut().zip(qn_superoperators(&x, pair, bath, period)) {
                    *m += n;
                }
            }
            (Some(mean_field(pair, bath, &x, period)?), CollisionModel::Local(local))
        }
    };
    TransportModel::new(grid.clone(), hamiltonian.clone(), mean, coll, Dynamics::Classical)
}

/// Boltzmann channels from `Γ̂0(ξ)` (plus an optional extra constant
/// covariance) with unit prefactor.
pub fn boltzmann_setup(
    grid: &PhaseSpaceGrid,
    pair: &PairPotential,
    microscopic: &Covariance,
    extra: Option<Matrix4<f64>>,
) -> Result<CollisionSetup> {
    let xi = collision::transfer_grid(grid.deta, grid.neta);
    let k: Vec<Matrix4<f64>> = xi
        .iter()
        .map(|&x| {
            microscopic
                .fourier(x, 1.0)
                .map(|m| m + extra.unwrap_or_else(Matrix4::zeros))
                .ok_or(Error::NonHomogeneousCovariance)
        })
        .collect::<Result<_>>()?;
    CollisionSetup::from_kmatrix(pair, &k, 1.0, grid.deta, grid.neta, 1.0)
}

/// Limit operator `Q0` (identical algebra to the full quantum operator).
pub fn q0_apply(f: &SpinorField, setup: &CollisionSetup) -> Result<SpinorField> {
    collision::q_full(f, setup)
}

// ---------------------------------------------------------------------------
// Split-step propagators

fn advect_x(f: &SpinorField, mass: f64, tau: f64) -> SpinorField {
    let g = &f.grid;
    map_x_spectrum(f, |ie, k, spec| {
        let v = g.eta(ie) / mass;
        for (m, s) in spec.iter_mut().enumerate() {
            let ph = Complex64::from_polar(1.0, -k[m] * v * tau);
            s.iter_mut().for_each(|z| *z *= ph);
        }
    })
}

/// `∂_t F = u'(x) ∂_η F` solved exactly by a spectral shift.
fn shift_eta(f: &SpinorField, force: &[f64], tau: f64) -> SpinorField {
    map_eta_spectrum(f, |ix, kappa, spec| {
        for (m, s) in spec.iter_mut().enumerate() {
            let ph = Complex64::from_polar(1.0, kappa[m] * force[ix] * tau);
            s.iter_mut().for_each(|z| *z *= ph);
        }
    })
}

/// `∂_t W = -(i/ε)[u(x+y/2) - u(x-y/2)] W` in the mixed representation.
fn quantum_potential(f: &SpinorField, u: &TrigSeries, tau: f64) -> SpinorField {
    let g = &f.grid;
    let eps = g.eps;
    map_eta_spectrum(f, |ix, kappa, spec| {
        let x = g.x(ix);
        for (m, s) in spec.iter_mut().enumerate() {
            let y = -eps * kappa[m];
            let ph = Complex64::from_polar(1.0, -(u.eval(x + 0.5 * y) - u.eval(x - 0.5 * y)) / eps * tau);
            s.iter_mut().for_each(|z| *z *= ph);
        }
    })
}

/// Exact rotation of every spin part about its local field by `2|Ω|τ`.
fn precess(f: &SpinorField, field: &[Vector3<f64>], tau: f64) -> SpinorField {
    let neta = f.grid.neta;
    let mut out = f.clone();
    out.values.par_chunks_mut(neta).zip(field.par_iter()).for_each(|(row, om)| {
        let n = om.norm();
        if n > 0.0 {
            let axis = om / n;
            row.iter_mut().for_each(|v| *v = v.rotate_spin(&axis, 2.0 * n * tau));
        }
    });
    out
}

/// `R ← U(x+y/2) R U(x-y/2)†` with `U = exp(-iτ Ω·σ)`.
fn quantum_precess(f: &SpinorField, field: &(dyn Fn(f64) -> Vector3<f64> + Sync), tau: f64) -> SpinorField {
    let g = &f.grid;
    let eps = g.eps;
    map_eta_spectrum(f, |ix, kappa, spec| {
        let x = g.x(ix);
        for (m, s) in spec.iter_mut().enumerate() {
            let y = -eps * kappa[m];
            let up = spin_propagator(&field(x + 0.5 * y), tau);
            let um = spin_propagator(&field(x - 0.5 * y), tau);
            *s = to_pauli(&(up * from_pauli(s) * um.adjoint()));
        }
    })
}

/// Precomputed per-model data for stepping.
struct Stepper<'a> {
    model: &'a TransportModel,
    force: Vec<f64>,
    field: Vec<Vector3<f64>>,
    mean_interp: Option<[PeriodicInterpolant; 3]>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a TransportModel) -> Self {
        let g = &model.grid;
        let force = (0..g.nx).map(|ix| model.hamiltonian.potential.derivative(g.x(ix))).collect();
        let mean_interp = model.mean_field.as_ref().map(|h| {
            std::array::from_fn(|c| {
                let samples: Vec<f64> = h.iter().map(|v| v.spin[c]).collect();
                PeriodicInterpolant::new(&samples, g.x0, g.dx)
            })
        });
        Stepper {
            model,
            force,
            field: model.precession_field(),
            mean_interp,
        }
    }

    fn field_at(&self, x: f64) -> Vector3<f64> {
        let base = self.model.hamiltonian.field_at(x);
        match &self.mean_interp {
            Some(p) => base + Vector3::new(p[0].eval(x), p[1].eval(x), p[2].eval(x)),
            None => base,
        }
    }

    fn transport(&self, f: &SpinorField, tau: f64) -> SpinorField {
        let h = &self.model.hamiltonian;
        let kick = |f: &SpinorField, t: f64| match self.model.dynamics {
            Dynamics::Classical => shift_eta(f, &self.force, t),
            Dynamics::Quantum => quantum_potential(f, &h.potential, t),
        };
        match h.mass {
            Some(m) => {
                let a = advect_x(f, m, 0.5 * tau);
                let b = kick(&a, tau);
                advect_x(&b, m, 0.5 * tau)
            }
            None => kick(f, tau),
        }
    }

    fn spin(&self, f: &SpinorField, tau: f64) -> SpinorField {
        match self.model.dynamics {
            Dynamics::Classical => precess(f, &self.field, tau),
            Dynamics::Quantum => quantum_precess(f, &|x| self.field_at(x), tau),
        }
    }

    fn step(&self, f: &SpinorField, dt: f64) -> Result<SpinorField> {
        let a = self.transport(f, 0.5 * dt);
        let b = self.spin(&a, 0.5 * dt);
        let c = match self.model.collision {
            CollisionModel::None => b,
            ref coll => {
                let k1 = coll.apply(&b)?;
                let mid = b.axpy(0.5 * dt, &k1);
                b.axpy(dt, &coll.apply(&mid)?)
            }
        };
        let d = self.spin(&c, 0.5 * dt);
        Ok(self.transport(&d, 0.5 * dt))
    }

    /// `L²` norms of the transport, precession and collision right-hand sides.
    fn rhs_norms(&self, f: &SpinorField) -> Result<[f64; 3]> {
        let h = &self.model.hamiltonian;
        let g = &f.grid;
        let mut transport = match h.mass {
            Some(m) => kinetic_transport(m, f),
            None => SpinorField::zeros(g),
        };
        let (kick, prec) = match self.model.dynamics {
            Dynamics::Classical => {
                let d = crate::wigner::eta_derivative(f);
                let mut kick = d;
                for ix in 0..g.nx {
                    for ie in 0..g.neta {
                        let i = g.index(ix, ie);
                        kick.values[i] = kick.values[i] * (-self.force[ix]);
                    }
                }
                let node_field: Vec<Herm2> = (0..g.len())
                    .map(|i| Herm2::from_parts(0.0, self.field[i / g.neta]))
                    .collect();
                (kick, crate::wigner::spin_precession_term(&node_field, f)?)
            }
            Dynamics::Quantum => (
                vlasov_scalar(&|x| h.potential.eval(x), f),
                crate::wigner::spin_field_term(&|x| self.field_at(x), f),
            ),
        };
        transport = transport.zip_map(&kick, |a, b| *a + *b);
        let coll = self.model.collision.apply(f)?;
        Ok([transport.l2_norm(), prec.l2_norm(), coll.l2_norm()])
    }
}

/// One Strang step: half transport, half precession, full collision
/// (explicit midpoint), half precession, half transport.
pub fn sbe_step(f: &SpinorField, model: &TransportModel, dt: f64) -> Result<SpinorField> {
    check_step(model, f, dt)?;
    Stepper::new(model).step(f, dt)
}

fn check_step(model: &TransportModel, f: &SpinorField, dt: f64) -> Result<()> {
    if !f.grid.same_shape(&model.grid) {
        return Err(Error::GridMismatch("field and model live on different grids".into()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    let (limit, term) = model.step_limit();
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, limit, term });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub spin: Vector3<f64>,
    pub min_eigenvalue: f64,
    pub l2_norm: f64,
    /// `L²` norms of the transport, precession and collision terms.
    pub rhs_norms: [f64; 3],
}

/// Conservation monitors applied per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitors {
    /// Allowed per-step mass change relative to `max(1, |mass|)`.
    pub mass_tol: f64,
    /// Allowed total drift of `‖F‖₂` relative to its initial value.
    pub norm_tol: Option<f64>,
    /// Eigenvalues below this floor are flagged.
    pub positivity_floor: f64,
}

impl Default for Monitors {
    fn default() -> Self {
        Monitors {
            mass_tol: 1e-10,
            norm_tol: None,
            positivity_floor: -1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Breach {
    Mass { step: usize, drift: f64 },
    Norm { step: usize, drift: f64 },
}

impl fmt::Display for Breach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Breach::Mass { step, drift } => write!(f, "mass changed by {drift:.3e} at step {step}"),
            Breach::Norm { step, drift } => write!(f, "L2 norm drifted by {drift:.3e} at step {step}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub final_state: SpinorField,
    pub diagnostics: Vec<StepDiagnostics>,
    pub snapshots: Vec<(f64, SpinorField)>,
    /// First monitor breach; the run continues to `t_end` regardless.
    pub breach: Option<Breach>,
    /// First step whose minimum eigenvalue fell below the floor.
    pub positivity_flag: Option<usize>,
}

/// Run settings; the step is shortened uniformly so that `t_end` is hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub dt: f64,
    pub t_end: f64,
    /// Snapshot every this many steps; 0 keeps only the first and last.
    pub snapshot_every: usize,
    pub monitors: Monitors,
    /// Record right-hand-side norms (one extra collision evaluation per step).
    pub record_rhs: bool,
}

pub fn run_model(model: &TransportModel, f0: &SpinorField, settings: &RunSettings) -> Result<RunReport> {
    if !(settings.t_end >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("must be non-negative, got {}", settings.t_end),
        });
    }
    let steps = if settings.t_end == 0.0 {
        0
    } else {
        (settings.t_end / settings.dt - 1e-9).ceil().max(1.0) as usize
    };
    let dt = if steps == 0 { settings.dt } else { settings.t_end / steps as f64 };
    check_step(model, f0, dt)?;
    let stepper = Stepper::new(model);
    let record = |step: usize, f: &SpinorField| -> Result<StepDiagnostics> {
        let integral = f.integral();
        Ok(StepDiagnostics {
            step,
            t: step as f64 * dt,
            mass: integral.scalar,
            spin: integral.spin,
            min_eigenvalue: f.min_eigenvalue(),
            l2_norm: f.l2_norm(),
            rhs_norms: if settings.record_rhs { stepper.rhs_norms(f)? } else { [f64::NAN; 3] },
        })
    };
    let mut f = f0.clone();
    let mut diagnostics = vec![record(0, &f)?];
    let mut snapshots = vec![(0.0, f.clone())];
    let mut breach = None;
    let mut positivity_flag = (diagnostics[0].min_eigenvalue < settings.monitors.positivity_floor).then_some(0);
    let norm0 = diagnostics[0].l2_norm;
    for step in 1..=steps {
        f = stepper.step(&f, dt)?;
        if !f.is_finite() {
            return Err(Error::InvalidParameter {
                name: "state",
                reason: format!("non-finite values after step {step}"),
            });
        }
        let d = record(step, &f)?;
        let prev = &diagnostics[step - 1];
        let dm = (d.mass - prev.mass).abs();
        if breach.is_none() && dm > settings.monitors.mass_tol * prev.mass.abs().max(1.0) {
            breach = Some(Breach::Mass { step, drift: dm });
        }
        if let Some(tol) = settings.monitors.norm_tol {
            let drift = (d.l2_norm - norm0).abs() / norm0.max(f64::MIN_POSITIVE);
            if breach.is_none() && drift > tol {
                breach = Some(Breach::Norm { step, drift });
            }
        }
        if positivity_flag.is_none() && d.min_eigenvalue < settings.monitors.positivity_floor {
            positivity_flag = Some(step);
        }
        diagnostics.push(d);
        if (settings.snapshot_every > 0 && step % settings.snapshot_every == 0) || step == steps {
            snapshots.push((step as f64 * dt, f.clone()));
        }
    }
    Ok(RunReport {
        final_state: f,
        diagnostics,
        snapshots,
        breach,
        positivity_flag,
    })
}

// ---------------------------------------------------------------------------
// Initial data and the ε-sweep

/// `F0 = (1 + δ cos(kx)) G(η - η0) (1 + p·σ)` with a Maxwellian `G` of
/// temperature `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    pub modulation: f64,
    pub wavenumber: f64,
    pub temperature: f64,
    pub drift: f64,
    pub polarization: Vector3<f64>,
}

impl InitialState {
    pub fn field(&self, grid: &PhaseSpaceGrid) -> Result<SpinorField> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidParameter {
                name: "temperature",
                reason: format!("must be positive, got {}", self.temperature),
            });
        }
        if self.polarization.norm() > 1.0 || self.modulation.abs() > 1.0 {
            return Err(Error::InvalidParameter {
                name: "initial",
                reason: "polarization and modulation must not exceed 1 in magnitude".into(),
            });
        }
        let norm = 1.0 / (TWO_PI * self.temperature).sqrt();
        Ok(SpinorField::from_fn(grid, |x, eta| {
            let s = eta - self.drift;
            let g = norm * (-s * s / (2.0 * self.temperature)).exp() * (1.0 + self.modulation * (self.wavenumber * x).cos());
            Herm2::from_parts(g, self.polarization * g)
        }))
    }

    fn check_tails(&self, grid: &PhaseSpaceGrid) -> Result<()> {
        let edge = [grid.eta(0), grid.eta(grid.neta - 1)]
            .iter()
            .map(|e| (e - self.drift).powi(2) / (2.0 * self.temperature))
            .fold(f64::INFINITY, f64::min);
        if edge < 1e-10f64.ln().abs() {
            return Err(Error::Resolution(format!(
                "initial Maxwellian decays only to {:.3e} at the momentum boundary",
                (-edge).exp()
            )));
        }
        Ok(())
    }
}

/// Smooth 1D benchmark for comparing the rescaled quantum dynamics with
/// its short-range limit.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepProblem {
    /// Phase-space grid; its `ε` is replaced per run.
    pub grid: PhaseSpaceGrid,
    pub hamiltonian: Hamiltonian,
    pub pair: PairPotential,
    pub microscopic: Covariance,
    /// Constant bath density entering the finite-`ε` self term.
    pub density: Herm2,
    pub initial: InitialState,
    pub dt: f64,
    pub t_end: f64,
}

impl SweepProblem {
    /// Periodic `x ∈ [0, 2π)` with 32 nodes, `η ∈ [-8, 8)` with 64 nodes,
    /// a cosine potential, a modulated exchange field, and exchange
    /// scattering with white-noise microscopic covariance.
    pub fn benchmark() -> Self {
        let nx = 32;
        let neta = 64;
        SweepProblem {
            grid: PhaseSpaceGrid::new(nx, 0.0, TWO_PI / nx as f64, neta, -8.0, 16.0 / neta as f64, 1.0)
                .expect("static grid"),
            hamiltonian: Hamiltonian {
                mass: Some(1.0),
                potential: TrigSeries {
                    terms: vec![TrigTerm {
                        wavenumber: 1.0,
                        cos: 0.5,
                        sin: 0.0,
                    }],
                    ..Default::default()
                },
                field: [
                    TrigSeries::default(),
                    TrigSeries::default(),
                    TrigSeries {
                        constant: 1.0,
                        terms: vec![TrigTerm {
                            wavenumber: 1.0,
                            cos: 0.0,
                            sin: 0.5,
                        }],
                        ..Default::default()
                    },
                ],
            },
            pair: PairPotential::separable(
                1.0,
                crate::environment::RadialProfile::Gaussian { width: 0.5 },
                crate::environment::SpinStructure::Exchange,
            ),
            microscopic: Covariance::WhiteNoise {
                strength: Matrix4::identity() * 0.5,
            },
            density: Herm2::new(1.0, [0.0, 0.0, 0.3]),
            initial: InitialState {
                modulation: 0.5,
                wavenumber: 1.0,
                temperature: 1.0,
                drift: 0.0,
                polarization: Vector3::new(0.6, 0.0, 0.3),
            },
            dt: 0.01,
            t_end: 1.0,
        }
    }

    /// Classical limit model (`Q0` from `Γ0`).
    pub fn limit_model(&self) -> Result<TransportModel> {
        let setup = boltzmann_setup(&self.grid, &self.pair, &self.microscopic, None)?;
        TransportModel::new(
            self.grid.clone(),
            self.hamiltonian.clone(),
            None,
            CollisionModel::Boltzmann(setup),
            Dynamics::Classical,
        )
    }

    /// Rescaled quantum model at `eps`: exact Moyal terms and the collision
    /// covariance `Γ̂0 + (ε/2π) K_D(n)`.
    pub fn quantum_model(&self, eps: f64) -> Result<TransportModel> {
        let grid = self.grid.with_eps(eps)?;
        self.check_resolution(&grid)?;
        let extra = density_kmatrix(&self.density) * (eps / TWO_PI);
        let setup = boltzmann_setup(&grid, &self.pair, &self.microscopic, Some(extra))?;
        TransportModel::new(
            grid,
            self.hamiltonian.clone(),
            None,
            CollisionModel::Boltzmann(setup),
            Dynamics::Quantum,
        )
    }

    /// The mixed offsets `|y| ≤ επ/Δη` must stay within one period and the
    /// initial data must be resolved on the momentum grid.
    pub fn check_resolution(&self, grid: &PhaseSpaceGrid) -> Result<()> {
        if grid.y_max() > grid.period() {
            return Err(Error::Resolution(format!(
                "eps={} reaches offsets |y|={:.4} beyond the period {:.4}; refine the momentum grid",
                grid.eps,
                grid.y_max(),
                grid.period()
            )));
        }
        self.initial.check_tails(grid)
    }

    fn settings(&self) -> RunSettings {
        RunSettings {
            dt: self.dt,
            t_end: self.t_end,
            snapshot_every: 0,
            monitors: Monitors::default(),
            record_rhs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    /// `‖W^ε - F‖₂` at `t_end`.
    pub distance: f64,
    pub runtime: Duration,
}

/// Evolves the limit model once and the rescaled quantum model for every
/// `ε` (concurrently) from identical data, reporting `L²` distances.
pub fn epsilon_sweep(problem: &SweepProblem, epsilons: &[f64]) -> Result<Vec<SweepRow>> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "epsilons",
            reason: "need at least one positive value".into(),
        });
    }
    // reject early, before any evolution
    for &eps in epsilons {
        problem.check_resolution(&problem.grid.with_eps(eps)?)?;
    }
    let f0 = problem.initial.field(&problem.grid)?;
    let limit = run_model(&problem.limit_model()?, &f0, &problem.settings())?.final_state;
    epsilons
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let model = problem.quantum_model(eps)?;
            let w0 = SpinorField {
                grid: model.grid.clone(),
                values: f0.values.clone(),
            };
            let w = run_model(&model, &w0, &problem.settings())?.final_state;
            let diff = SpinorField {
                grid: limit.grid.clone(),
                values: w.values.iter().zip(&limit.values).map(|(a, b)| *a - *b).collect(),
            };
            Ok(SweepRow {
                eps,
                distance: diff.l2_norm(),
                runtime: start.elapsed(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Bloch dynamics

/// Symmetric 3×3 damping operator acting on the spin polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingMatrix(pub Matrix3<f64>);

impl DampingMatrix {
    pub fn zero() -> Self {
        DampingMatrix(Matrix3::zeros())
    }

    /// `Σ 2γ (s sᵀ - |s|² I)`, i.e. `f ↦ Σ 2γ s × (s × f)`.
    pub fn from_channels(channels: &[(f64, Vector3<f64>)]) -> Self {
        DampingMatrix(channels.iter().map(|(g, s)| collision::double_commutator_block(s) * *g).sum())
    }

    /// Spin block of a local collision superoperator.
    pub fn from_superoperator(m: &Matrix4<f64>) -> Self {
        DampingMatrix(m.fixed_view::<3, 3>(1, 1).into_owned())
    }

    /// `-(1/τ)(I - P)` with `P` the kernel projector of `class`.
    pub fn relaxation(class: &ChannelClass, tau: f64) -> Self {
        let p = collision::kernel_projector(class).fixed_view::<3, 3>(1, 1).into_owned();
        DampingMatrix((p - Matrix3::identity()) / tau)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let e = SymmetricEigen::new((self.0 + self.0.transpose()) * 0.5).eigenvalues;
        let mut v = [e[0], e[1], e[2]];
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn is_negative_semidefinite(&self, tol: f64) -> bool {
        (self.0 - self.0.transpose()).amax() <= tol && self.eigenvalues()[2] <= tol
    }
}

/// `∂_t f = -2 f × (Ω + h) + D f`.
pub fn bloch_rhs(f: &Vector3<f64>, omega: &Vector3<f64>, h: &Vector3<f64>, damping: &DampingMatrix) -> Vector3<f64> {
    -2.0 * f.cross(&(omega + h)) + damping.0 * f
}

/// [`bloch_rhs`] over a field of nodes.
pub fn bloch_rhs_field(
    f: &[Vector3<f64>],
    omega: &[Vector3<f64>],
    h: &[Vector3<f64>],
    damping: &[DampingMatrix],
) -> Result<Vec<Vector3<f64>>> {
    let n = f.len();
    if omega.len() != n || h.len() != n || damping.len() != n {
        return Err(Error::GridMismatch("Bloch field components differ in length".into()));
    }
    Ok((0..n).map(|i| bloch_rhs(&f[i], &omega[i], &h[i], &damping[i])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochSystem {
    pub omega: Vector3<f64>,
    pub mean_field: Vector3<f64>,
    pub damping: DampingMatrix,
}

impl BlochSystem {
    pub fn rhs(&self, f: &Vector3<f64>) -> Vector3<f64> {
        bloch_rhs(f, &self.omega, &self.mean_field, &self.damping)
    }
}

/// Accepted steps of an adaptive integration with derivatives for dense
/// (cubic Hermite) output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub f: Vec<Vector3<f64>>,
    pub df: Vec<Vector3<f64>>,
    pub rejected: usize,
}

impl Trajectory {
    pub fn last(&self) -> Vector3<f64> {
        *self.f.last().expect("trajectory holds the initial point")
    }

    fn hermite(&self, i: usize, theta: f64, c: usize) -> f64 {
        let h = self.t[i + 1] - self.t[i];
        let (y0, y1) = (self.f[i][c], self.f[i + 1][c]);
        let (d0, d1) = (self.df[i][c] * h, self.df[i + 1][c] * h);
        let t2 = theta * theta;
        let t3 = t2 * theta;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + theta) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1
    }

    /// Sign changes of component `c`, located on the Hermite interpolant.
    pub fn zero_crossings(&self, c: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.t.len().saturating_sub(1) {
            let (a, b) = (self.f[i][c], self.f[i + 1][c]);
            if a == 0.0 {
                out.push(self.t[i]);
                continue;
            }
            if a * b >= 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            let sign_lo = a.signum();
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if self.hermite(i, mid, c).signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(self.t[i] + 0.5 * (lo + hi) * (self.t[i + 1] - self.t[i]));
        }
        out
    }
}

/// Angular frequency from equally spaced zero crossings (half-period
/// spacing), by least squares.
pub fn fit_angular_frequency(crossings: &[f64]) -> Option<f64> {
    if crossings.len() < 2 {
        return None;
    }
    let n = crossings.len() as f64;
    let mi = (n - 1.0) / 2.0;
    let mt = crossings.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, t) in crossings.iter().enumerate() {
        let di = i as f64 - mi;
        sxy += di * (t - mt);
        sxx += di * di;
    }
    Some(std::f64::consts::PI / (sxy / sxx))
}

// Dormand–Prince 5(4) tableau; the system is autonomous so nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince integration. The mixed absolute/relative local
/// error is held below `tol·h/max(t_end, 1)` so that the accumulated error
/// stays of order `tol`.
pub fn bloch_integrate(f0: Vector3<f64>, system: &BlochSystem, t_end: f64, tol: f64) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    if !(t_end >= 0.0) || !f0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: "need a finite start vector and t_end >= 0".into(),
        });
    }
    let mut traj = Trajectory {
        t: vec![0.0],
        f: vec![f0],
        df: vec![system.rhs(&f0)],
        rejected: 0,
    };
    let rate = system.omega.norm() + system.mean_field.norm() + system.damping.0.amax();
    let mut h = if rate > 0.0 { (0.01 / rate).min(t_end) } else { t_end };
    let span = t_end.max(1.0);
    let (mut t, mut y) = (0.0, f0);
    let mut k = [Vector3::zeros(); 7];
    k[0] = traj.df[0];
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys += kj * (h * A[s][j]);
            }
            k[s] = system.rhs(&ys);
        }
        let y_new = (0..6).fold(y, |acc, j| acc + k[j] * (h * A[6][j]));
        let err_vec = (0..7).fold(Vector3::zeros(), |acc, j| {
            let b_high = if j < 6 { A[6][j] } else { 0.0 };
            acc + k[j] * (h * (b_high - B_LOW[j]))
        });
        // error per unit step: local errors sum to at most ~tol over the run
        let budget = tol * h / span;
        let err = ((0..3)
            .map(|c| (err_vec[c] / (budget * (1.0 + y[c].abs().max(y_new[c].abs())))).powi(2))
            .sum::<f64>()
            / 3.0)
            .sqrt();
        if err <= 1.0 {
            t += h;
            y = y_new;
            // first-same-as-last: stage 7 is the derivative at the new point
            k[0] = k[6];
            traj.t.push(t);
            traj.f.push(y);
            traj.df.push(k[0]);
        } else {
            traj.rejected += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.25)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(traj)
}
