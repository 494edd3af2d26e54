//! Deterministic CSV writers. Floats use the shortest round-trip
//! exponent form; each file opens with `#` provenance comments.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::collision::CollisionSetup;
use crate::semiclassics::{StepDiagnostics, SweepRow, Trajectory};
use crate::wigner::SpinorField;

/// Provenance lines placed at the top of every table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub scaling: String,
}

impl Provenance {
    fn header(&self, what: &str) -> String {
        format!("# {what}\n# config_hash={}\n# scaling: {}\n", self.config_hash, self.scaling)
    }
}

fn row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
}

fn write(path: &Path, text: String) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)
}

/// One row per transfer: `xi, rho_i, S_i` (16 Pauli coefficients).
pub fn channel_table(p: &Provenance, setup: &CollisionSetup) -> String {
    let mut s = p.header("scattering channels");
    let mut cols = vec!["xi".to_string()];
    cols.extend((0..4).map(|i| format!("rho{i}")));
    for i in 0..4 {
        cols.extend((0..4).map(|c| format!("s{i}_{c}")));
    }
    s += &cols.join(",");
    s.push('\n');
    let ch = &setup.channels;
    for (j, xi) in ch.xi.iter().enumerate() {
        let mut v = vec![*xi];
        v.extend(ch.rho[j]);
        for q in &ch.s[j] {
            v.extend(q.to_array());
        }
        s += &row(v);
        s.push('\n');
    }
    s
}

/// Nodal values `x, eta, w0..w3` at time `t`.
pub fn snapshot_table(p: &Provenance, t: f64, f: &SpinorField) -> String {
    let mut s = p.header(&format!("snapshot t={t:e}"));
    s += "x,eta,w0,w1,w2,w3\n";
    let g = &f.grid;
    for ix in 0..g.nx {
        for ie in 0..g.neta {
            let w = f.at(ix, ie);
            let _ = writeln!(s, "{}", row([g.x(ix), g.eta(ie), w.scalar, w.spin.x, w.spin.y, w.spin.z]));
        }
    }
    s
}

pub fn diagnostics_table(p: &Provenance, d: &[StepDiagnostics]) -> String {
    let mut s = p.header("per-step diagnostics");
    s += "step,t,mass,spin_x,spin_y,spin_z,min_eigenvalue,l2_norm,transport_norm,precession_norm,collision_norm\n";
    for r in d {
        let _ = writeln!(
            s,
            "{},{}",
            r.step,
            row([
                r.t,
                r.mass,
                r.spin.x,
                r.spin.y,
                r.spin.z,
                r.min_eigenvalue,
                r.l2_norm,
                r.rhs_norms[0],
                r.rhs_norms[1],
                r.rhs_norms[2]
            ])
        );
    }
    s
}

/// Convergence table; runtimes go to the run log instead.
pub fn sweep_table(p: &Provenance, rows: &[SweepRow]) -> String {
    let mut s = p.header("semiclassical sweep");
    s += "eps,l2_distance\n";
    for r in rows {
        let _ = writeln!(s, "{}", row([r.eps, r.distance]));
    }
    s
}

pub fn bloch_table(p: &Provenance, traj: &Trajectory) -> String {
    let mut s = p.header("Bloch trajectory");
    s += "t,f1,f2,f3,norm\n";
    for (t, f) in traj.t.iter().zip(&traj.f) {
        let _ = writeln!(s, "{}", row([*t, f.x, f.y, f.z, f.norm()]));
    }
    s
}

pub fn write_channel_table(path: &Path, p: &Provenance, setup: &CollisionSetup) -> io::Result<()> {
    write(path, channel_table(p, setup))
}

pub fn write_snapshot(path: &Path, p: &Provenance, t: f64, f: &SpinorField) -> io::Result<()> {
    write(path, snapshot_table(p, t, f))
}

pub fn write_diagnostics(path: &Path, p: &Provenance, d: &[StepDiagnostics]) -> io::Result<()> {
    write(path, diagnostics_table(p, d))
}

pub fn write_sweep(path: &Path, p: &Provenance, rows: &[SweepRow]) -> io::Result<()> {
    write(path, sweep_table(p, rows))
}

pub fn write_bloch(path: &Path, p: &Provenance, traj: &Trajectory) -> io::Result<()> {
    write(path, bloch_table(p, traj))
}

/// Free-form run log; the only place wall-clock content is written.
pub fn write_log(path: &Path, lines: &[String]) -> io::Result<()> {
    write(path, lines.iter().map(|l| format!("{l}\n")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Herm2;
    use crate::wigner::PhaseSpaceGrid;

    #[test]
    fn floats_round_trip_through_the_snapshot() {
        let g = PhaseSpaceGrid::new(4, 0.0, 0.3, 4, -1.0, 0.5, 1.0).unwrap();
        let f = SpinorField::from_fn(&g, |x, eta| Herm2::new(x.sin() / 3.0, [eta / 7.0, 1e-300, -2.5e17]));
        let p = Provenance {
            config_hash: "abc".into(),
            scaling: "a=1".into(),
        };
        let text = snapshot_table(&p, 0.1, &f);
        assert!(text.starts_with("# snapshot"));
        let data: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(data.len(), 16);
        for (i, r) in data.iter().enumerate() {
            let w = f.values[i];
            assert_eq!(r[2..], [w.scalar, w.spin.x, w.spin.y, w.spin.z]);
        }
    }
}
