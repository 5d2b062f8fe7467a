//! Operators and Hamiltonians of the truncated transmon ⊗ cavity system.
//!
//! The joint Hilbert space is ordered qubit-major: basis index `q * cutoff + n`
//! for qubit level `q ∈ {0, 1}` and cavity occupation `n < cutoff`. All
//! frequencies are stored as angular frequencies in rad/ns; all durations in
//! ns.
//!
//! Qubit convention: `|0⟩` is the transmon ground/reset state and
//! `σᶻ = |0⟩⟨0| − |1⟩⟨1|`. The lowering operator `σ⁻ = |0⟩⟨1|` takes the
//! excited state to the ground state. All sign-dependent behavior in the crate
//! references this convention.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{self, kron};
use crate::Result;

const TAU: f64 = std::f64::consts::TAU;

/// Physical constants of the device.
///
/// Defaults are the hardware parameters used throughout: dispersive shift
/// χ = −2π·2194 kHz, second-order shift χ′ = −2π·19 kHz, cavity Kerr
/// K = −2π·3.7 kHz, drive bound Ω_max = 2π·10 MHz, time step Δt = 10 ns, and
/// coherence times T₁,c = 2.7 ms, T₁,q = 170 μs, T₂,q = 43 μs.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    /// Dispersive shift χ (rad/ns).
    pub chi: f64,
    /// Second-order dispersive shift χ′ (rad/ns).
    pub chi_prime: f64,
    /// Cavity self-Kerr nonlinearity K (rad/ns).
    pub kerr: f64,
    /// Drive amplitude bound (rad/ns), applied to |Ω_c| and |Ω_q|.
    pub omega_max: f64,
    /// Control time step (ns).
    pub dt: f64,
    /// Cavity relaxation time (ns).
    pub t1_cavity: f64,
    /// Qubit relaxation time (ns).
    pub t1_qubit: f64,
    /// Qubit dephasing time (ns).
    pub t2_qubit: f64,
    /// Number of simulated cavity levels Λ (≥ 2).
    pub cutoff: usize,
}

/// kHz (linear frequency) to rad/ns (angular frequency).
fn khz_to_rad_per_ns(f: f64) -> f64 {
    TAU * f * 1e-6
}

fn rad_per_ns_to_khz(w: f64) -> f64 {
    w / (TAU * 1e-6)
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            chi: khz_to_rad_per_ns(-2194.0),
            chi_prime: khz_to_rad_per_ns(-19.0),
            kerr: khz_to_rad_per_ns(-3.7),
            omega_max: khz_to_rad_per_ns(10_000.0),
            dt: 10.0,
            t1_cavity: 2_700_000.0,
            t1_qubit: 170_000.0,
            t2_qubit: 43_000.0,
            cutoff: 8,
        }
    }
}

impl DeviceParams {
    /// Default parameters at a given cavity cutoff.
    pub fn with_cutoff(cutoff: usize) -> Self {
        Self { cutoff, ..Self::default() }
    }

    /// Dimension of the joint qubit ⊗ cavity space, 2Λ.
    pub fn dim(&self) -> usize {
        2 * self.cutoff
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.cutoff < 2 {
            return Err(format!("cutoff must be at least 2, got {}", self.cutoff));
        }
        if self.dt <= 0.0 {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        if self.omega_max <= 0.0 {
            return Err(format!("omega_max must be positive, got {}", self.omega_max));
        }
        for (name, t) in [
            ("t1_cavity", self.t1_cavity),
            ("t1_qubit", self.t1_qubit),
            ("t2_qubit", self.t2_qubit),
        ] {
            if t <= 0.0 {
                return Err(format!("{name} must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

/// On-disk form: frequencies in kHz (linear), durations in ns.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceParamsFile {
    chi: f64,
    chi_prime: f64,
    kerr: f64,
    omega_max: f64,
    dt: f64,
    t1_cavity: f64,
    t1_qubit: f64,
    t2_qubit: f64,
    cutoff: usize,
}

impl Serialize for DeviceParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DeviceParamsFile {
            chi: rad_per_ns_to_khz(self.chi),
            chi_prime: rad_per_ns_to_khz(self.chi_prime),
            kerr: rad_per_ns_to_khz(self.kerr),
            omega_max: rad_per_ns_to_khz(self.omega_max),
            dt: self.dt,
            t1_cavity: self.t1_cavity,
            t1_qubit: self.t1_qubit,
            t2_qubit: self.t2_qubit,
            cutoff: self.cutoff,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DeviceParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = DeviceParamsFile::deserialize(d)?;
        let params = DeviceParams {
            chi: khz_to_rad_per_ns(f.chi),
            chi_prime: khz_to_rad_per_ns(f.chi_prime),
            kerr: khz_to_rad_per_ns(f.kerr),
            omega_max: khz_to_rad_per_ns(f.omega_max),
            dt: f.dt,
            t1_cavity: f.t1_cavity,
            t1_qubit: f.t1_qubit,
            t2_qubit: f.t2_qubit,
            cutoff: f.cutoff,
        };
        params.validate().map_err(serde::de::Error::custom)?;
        Ok(params)
    }
}

/// Dense operator on the joint qubit ⊗ cavity space.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOperator {
    pub matrix: Array2<C64>,
    pub cutoff: usize,
}

impl JointOperator {
    pub fn from_matrix(matrix: Array2<C64>, cutoff: usize) -> Self {
        assert_eq!(matrix.nrows(), 2 * cutoff);
        assert_eq!(matrix.ncols(), 2 * cutoff);
        Self { matrix, cutoff }
    }

    pub fn dim(&self) -> usize {
        2 * self.cutoff
    }

    pub fn identity(cutoff: usize) -> Self {
        Self::from_matrix(linalg::identity(2 * cutoff), cutoff)
    }

    /// Cavity annihilation operator a (tensored with the qubit identity).
    /// The commutator [a, a†] = 1 holds on levels n < Λ−1; truncation breaks
    /// it only in the top row/column.
    pub fn annihilation(cutoff: usize) -> Self {
        let mut a = Array2::<C64>::zeros((cutoff, cutoff));
        for n in 1..cutoff {
            a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
        }
        Self::from_matrix(kron(&qubit_identity(), &a), cutoff)
    }

    /// Cavity occupation number n = a†a.
    pub fn number(cutoff: usize) -> Self {
        let mut n = Array2::<C64>::zeros((cutoff, cutoff));
        for k in 0..cutoff {
            n[[k, k]] = C64::new(k as f64, 0.0);
        }
        Self::from_matrix(kron(&qubit_identity(), &n), cutoff)
    }

    pub fn sigma_x(cutoff: usize) -> Self {
        Self::from_matrix(kron(&pauli_x(), &cavity_identity(cutoff)), cutoff)
    }

    pub fn sigma_y(cutoff: usize) -> Self {
        Self::from_matrix(kron(&pauli_y(), &cavity_identity(cutoff)), cutoff)
    }

    pub fn sigma_z(cutoff: usize) -> Self {
        Self::from_matrix(kron(&pauli_z(), &cavity_identity(cutoff)), cutoff)
    }

    /// σ⁺ = |1⟩⟨0|: raises the transmon excitation.
    pub fn sigma_plus(cutoff: usize) -> Self {
        let mut s = Array2::<C64>::zeros((2, 2));
        s[[1, 0]] = C64::new(1.0, 0.0);
        Self::from_matrix(kron(&s, &cavity_identity(cutoff)), cutoff)
    }

    /// σ⁻ = |0⟩⟨1|: lowers the transmon excitation (relaxation direction).
    pub fn sigma_minus(cutoff: usize) -> Self {
        let mut s = Array2::<C64>::zeros((2, 2));
        s[[0, 1]] = C64::new(1.0, 0.0);
        Self::from_matrix(kron(&s, &cavity_identity(cutoff)), cutoff)
    }
}

pub fn pauli_x() -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((2, 2));
    m[[0, 1]] = C64::new(1.0, 0.0);
    m[[1, 0]] = C64::new(1.0, 0.0);
    m
}

pub fn pauli_y() -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((2, 2));
    m[[0, 1]] = C64::new(0.0, -1.0);
    m[[1, 0]] = C64::new(0.0, 1.0);
    m
}

pub fn pauli_z() -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((2, 2));
    m[[0, 0]] = C64::new(1.0, 0.0);
    m[[1, 1]] = C64::new(-1.0, 0.0);
    m
}

fn qubit_identity() -> Array2<C64> {
    Array2::eye(2)
}

fn cavity_identity(cutoff: usize) -> Array2<C64> {
    Array2::eye(cutoff)
}

/// Static Hamiltonian in the rotating frame of the bare qubit and cavity:
/// H₁ = (K/2)(a†)²a² + (χ/2) n σᶻ + (χ′/2)(a†)²a² σᶻ.
///
/// Diagonal in the (q, n) basis; the bare H₀ terms are removed by the frame
/// choice.
pub fn build_static_hamiltonian(params: &DeviceParams) -> JointOperator {
    let cutoff = params.cutoff;
    let dim = 2 * cutoff;
    let mut h = Array2::<C64>::zeros((dim, dim));
    for q in 0..2usize {
        let sz = if q == 0 { 1.0 } else { -1.0 };
        for n in 0..cutoff {
            let nn = n as f64;
            let kerr_term = nn * (nn - 1.0); // (a†)²a² eigenvalue
            let e = 0.5 * params.kerr * kerr_term
                + 0.5 * params.chi * nn * sz
                + 0.5 * params.chi_prime * kerr_term * sz;
            h[[q * cutoff + n, q * cutoff + n]] = C64::new(e, 0.0);
        }
    }
    JointOperator::from_matrix(h, cutoff)
}

/// Drive Hamiltonian for one time step: Ω_c a + Ω_q σ⁻ + h.c.
///
/// Errors with [`Error::AmplitudeBound`] if either amplitude magnitude exceeds
/// the device bound.
pub fn build_drive_hamiltonian(
    params: &DeviceParams,
    omega_c: C64,
    omega_q: C64,
) -> Result<JointOperator> {
    for omega in [omega_c, omega_q] {
        if omega.norm() > params.omega_max * (1.0 + 1e-12) {
            return Err(Error::AmplitudeBound {
                amplitude: omega.norm(),
                bound: params.omega_max,
            });
        }
    }
    let cutoff = params.cutoff;
    let a = JointOperator::annihilation(cutoff).matrix;
    let sm = JointOperator::sigma_minus(cutoff).matrix;
    let term = a.mapv(|z| omega_c * z) + sm.mapv(|z| omega_q * z);
    let h = &term + &linalg::dag(&term);
    Ok(JointOperator::from_matrix(h, cutoff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermiticity_residual, max_abs, max_abs_diff};

    #[test]
    fn default_params_match_hardware_values() {
        let p = DeviceParams::default();
        assert!((p.chi - (-TAU * 2194e-6)).abs() < 1e-15);
        assert!((p.chi_prime - (-TAU * 19e-6)).abs() < 1e-15);
        assert!((p.kerr - (-TAU * 3.7e-6)).abs() < 1e-15);
        assert!((p.omega_max - TAU * 0.01).abs() < 1e-15);
        assert_eq!(p.dt, 10.0);
        assert_eq!(p.t1_cavity, 2_700_000.0);
        assert_eq!(p.t1_qubit, 170_000.0);
        assert_eq!(p.t2_qubit, 43_000.0);
        p.validate().unwrap();
    }

    #[test]
    fn params_json_round_trip_uses_khz() {
        let p = DeviceParams::default();
        let json = serde_json::to_value(&p).unwrap();
        assert!((json["chi"].as_f64().unwrap() - (-2194.0)).abs() < 1e-9);
        assert!((json["omega_max"].as_f64().unwrap() - 10_000.0).abs() < 1e-9);
        assert_eq!(json["dt"].as_f64().unwrap(), 10.0);
        let back: DeviceParams = serde_json::from_value(json).unwrap();
        assert!((back.chi - p.chi).abs() < 1e-15);
        assert!((back.t1_cavity - p.t1_cavity).abs() < 1e-9);
    }

    #[test]
    fn commutator_truncates_only_at_top_level() {
        let cutoff = 6;
        let a = JointOperator::annihilation(cutoff).matrix;
        let ad = linalg::dag(&a);
        let comm = a.dot(&ad) - ad.dot(&a);
        for q in 0..2usize {
            for n in 0..cutoff {
                let idx = q * cutoff + n;
                let expected = if n == cutoff - 1 {
                    // a a† |top> is truncated away, leaving -a†a.
                    -(cutoff as f64 - 1.0)
                } else {
                    1.0
                };
                assert!((comm[[idx, idx]].re - expected).abs() < 1e-14);
                assert!(comm[[idx, idx]].im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn static_hamiltonian_examples() {
        let p = DeviceParams::default();
        let h = build_static_hamiltonian(&p).matrix;
        // Vacuum matrix element vanishes.
        assert_eq!(h[[0, 0]], C64::new(0.0, 0.0));
        // (q=0, n=1): +chi/2 with sigma_z |0> = +|0>.
        assert!((h[[1, 1]].re - 0.5 * p.chi).abs() < 1e-15);
        assert!((h[[1, 1]].re - (-TAU * 1097e-6)).abs() < 1e-12);
        // Kerr term at n=2 contributes K (kerr eigenvalue 2, times K/2).
        let mut p0 = p.clone();
        p0.chi = 0.0;
        p0.chi_prime = 0.0;
        let hk = build_static_hamiltonian(&p0).matrix;
        assert!((hk[[2, 2]].re - p.kerr).abs() < 1e-15);
        // Hermitian and diagonal.
        assert!(hermiticity_residual(&h) < 1e-14);
        let n = JointOperator::number(p.cutoff).matrix;
        let comm = h.dot(&n) - n.dot(&h);
        assert_eq!(max_abs(&comm), 0.0);
        let sz = JointOperator::sigma_z(p.cutoff).matrix;
        let comm = h.dot(&sz) - sz.dot(&h);
        assert_eq!(max_abs(&comm), 0.0);
    }

    #[test]
    fn drive_hamiltonian_examples() {
        let p = DeviceParams::default();
        // Zero drives give the zero matrix.
        let h0 = build_drive_hamiltonian(&p, C64::new(0.0, 0.0), C64::new(0.0, 0.0)).unwrap();
        assert_eq!(max_abs(&h0.matrix), 0.0);

        // Real qubit drive alone gives Omega_q * sigma_x.
        let wq = C64::new(0.3 * p.omega_max, 0.0);
        let h = build_drive_hamiltonian(&p, C64::new(0.0, 0.0), wq).unwrap();
        let expected = JointOperator::sigma_x(p.cutoff).matrix.mapv(|z| z * wq.re);
        assert!(max_abs_diff(&h.matrix, &expected) < 1e-15);

        // Imaginary cavity drive: <n=0|H|n=1> = i r, hermiticity forces the mirror.
        let r = 0.2 * p.omega_max;
        let h = build_drive_hamiltonian(&p, C64::new(0.0, r), C64::new(0.0, 0.0)).unwrap();
        assert!((h.matrix[[0, 1]] - C64::new(0.0, r)).norm() < 1e-15);
        assert!((h.matrix[[1, 0]] - C64::new(0.0, -r)).norm() < 1e-15);
        assert!(hermiticity_residual(&h.matrix) < 1e-15);
    }

    #[test]
    fn drive_hamiltonian_rejects_out_of_bound_amplitudes() {
        let p = DeviceParams::default();
        let over = C64::new(1.5 * p.omega_max, 0.0);
        match build_drive_hamiltonian(&p, over, C64::new(0.0, 0.0)) {
            Err(Error::AmplitudeBound { .. }) => {}
            other => panic!("expected amplitude bound error, got {other:?}"),
        }
    }

    #[test]
    fn drive_couples_only_neighboring_levels() {
        let p = DeviceParams::with_cutoff(5);
        let h = build_drive_hamiltonian(
            &p,
            C64::new(0.01, 0.02),
            C64::new(-0.015, 0.005),
        )
        .unwrap()
        .matrix;
        let cutoff = p.cutoff;
        for q in 0..2usize {
            for n in 0..cutoff {
                for qp in 0..2usize {
                    for np in 0..cutoff {
                        let allowed = (q == qp && (n as i64 - np as i64).abs() == 1)
                            || (q != qp && n == np);
                        if !allowed {
                            assert_eq!(h[[q * cutoff + n, qp * cutoff + np]], C64::new(0.0, 0.0));
                        }
                    }
                }
            }
        }
    }
}
