//! Piecewise-constant drive propagation and exact gradients with respect to
//! the drive amplitudes.
//!
//! A waveform with `N` steps evolves the joint system by the ordered product
//! `U = exp(-i H_N Δt) · ... · exp(-i H_1 Δt)` — the first step is the
//! rightmost factor. Per-step matrix exponentials use Pade scaling-and-squaring
//! ([`linalg::expm`]), with a direct phase evaluation when the step Hamiltonian
//! is diagonal (zero drives).

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::device::{build_drive_hamiltonian, build_static_hamiltonian, DeviceParams, JointOperator};
use crate::linalg::{self, dag, herm_eig};
use crate::Result;

/// One step of complex drive amplitudes (rad/ns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveStep {
    pub omega_c: C64,
    pub omega_q: C64,
}

/// Discretized complex drive envelopes for the cavity and qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub steps: Vec<DriveStep>,
    /// Step duration (ns).
    pub dt: f64,
}

impl Waveform {
    pub fn new(steps: Vec<DriveStep>, dt: f64) -> Self {
        assert!(!steps.is_empty(), "waveform needs at least one step");
        assert!(dt > 0.0);
        Self { steps, dt }
    }

    /// All-zero drives for `n_ts` steps.
    pub fn zero(n_ts: usize, dt: f64) -> Self {
        Self::new(vec![DriveStep { omega_c: C64::default(), omega_q: C64::default() }; n_ts], dt)
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Total duration τ = N·Δt (ns).
    pub fn duration(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }

    /// Concatenation: `self` plays first, then `other`.
    pub fn concat(&self, other: &Waveform) -> Waveform {
        assert_eq!(self.dt, other.dt);
        let mut steps = self.steps.clone();
        steps.extend_from_slice(&other.steps);
        Waveform::new(steps, self.dt)
    }

    /// Flat parameter vector [Re Ω_c, Im Ω_c, Re Ω_q, Im Ω_q] per step.
    pub fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(4 * self.steps.len());
        for s in &self.steps {
            p.extend_from_slice(&[s.omega_c.re, s.omega_c.im, s.omega_q.re, s.omega_q.im]);
        }
        p
    }

    pub fn from_params(params: &[f64], dt: f64) -> Self {
        assert_eq!(params.len() % 4, 0);
        let steps = params
            .chunks_exact(4)
            .map(|c| DriveStep {
                omega_c: C64::new(c[0], c[1]),
                omega_q: C64::new(c[2], c[3]),
            })
            .collect();
        Waveform::new(steps, dt)
    }

    pub fn max_amplitude(&self) -> f64 {
        self.steps
            .iter()
            .fold(0.0f64, |acc, s| acc.max(s.omega_c.norm()).max(s.omega_q.norm()))
    }
}

#[derive(Serialize, Deserialize)]
struct WaveformFile {
    dt_ns: f64,
    steps: Vec<[f64; 4]>,
}

impl Serialize for Waveform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WaveformFile {
            dt_ns: self.dt,
            steps: self
                .steps
                .iter()
                .map(|st| [st.omega_c.re, st.omega_c.im, st.omega_q.re, st.omega_q.im])
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Waveform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = WaveformFile::deserialize(d)?;
        if f.steps.is_empty() {
            return Err(serde::de::Error::custom("waveform needs at least one step"));
        }
        if f.dt_ns <= 0.0 {
            return Err(serde::de::Error::custom("dt_ns must be positive"));
        }
        Ok(Waveform::new(
            f.steps
                .iter()
                .map(|c| DriveStep {
                    omega_c: C64::new(c[0], c[1]),
                    omega_q: C64::new(c[2], c[3]),
                })
                .collect(),
            f.dt_ns,
        ))
    }
}

/// Per-step total Hamiltonian H₁ + H_drive(t_j).
pub fn step_hamiltonian(
    params: &DeviceParams,
    h_static: &Array2<C64>,
    step: DriveStep,
) -> Result<Array2<C64>> {
    let hd = build_drive_hamiltonian(params, step.omega_c, step.omega_q)?;
    Ok(h_static + &hd.matrix)
}

fn step_unitary(params: &DeviceParams, h_static: &Array2<C64>, step: DriveStep) -> Result<Array2<C64>> {
    if step.omega_c == C64::default() && step.omega_q == C64::default() {
        // Diagonal fast path: pure phases from the static Hamiltonian.
        let dim = h_static.nrows();
        let mut u = Array2::<C64>::zeros((dim, dim));
        for k in 0..dim {
            u[[k, k]] = (-linalg::I * h_static[[k, k]].re * params.dt).exp();
        }
        return Ok(u);
    }
    let h = step_hamiltonian(params, h_static, step)?;
    Ok(linalg::expm(&h.mapv(|z| -linalg::I * z * params.dt)))
}

/// Propagate a waveform: returns the total unitary.
pub fn propagate(params: &DeviceParams, wf: &Waveform) -> Result<JointOperator> {
    let h_static = build_static_hamiltonian(params).matrix;
    let mut u = linalg::identity(params.dim());
    for step in &wf.steps {
        let uj = step_unitary(params, &h_static, *step)?;
        u = uj.dot(&u);
    }
    Ok(JointOperator::from_matrix(u, params.cutoff))
}

/// Direction operators for the four real drive parameters of one step, in the
/// order [Re Ω_c, Im Ω_c, Re Ω_q, Im Ω_q].
fn direction_operators(cutoff: usize) -> [Array2<C64>; 4] {
    let a = JointOperator::annihilation(cutoff).matrix;
    let ad = dag(&a);
    let sm = JointOperator::sigma_minus(cutoff).matrix;
    let sp = dag(&sm);
    let i = linalg::I;
    [
        &a + &ad,                                  // d/d Re(Ω_c)
        a.mapv(|z| i * z) - ad.mapv(|z| i * z),    // d/d Im(Ω_c)
        &sm + &sp,                                 // d/d Re(Ω_q)
        sm.mapv(|z| i * z) - sp.mapv(|z| i * z),   // d/d Im(Ω_q)
    ]
}

/// Propagate and compute the exact gradient of |tr(T† U)| with respect to all
/// 4·N real drive parameters.
///
/// The per-step derivative of the matrix exponential is evaluated exactly from
/// the spectral decomposition of the step Hamiltonian (divided-difference
/// kernel), combined with forward and backward partial products.
pub fn propagate_with_gradient(
    params: &DeviceParams,
    wf: &Waveform,
    adjoint_target: &Array2<C64>,
) -> Result<(JointOperator, Vec<f64>)> {
    let dim = params.dim();
    assert_eq!(adjoint_target.nrows(), dim, "adjoint target dimension");
    let n = wf.n_steps();
    let h_static = build_static_hamiltonian(params).matrix;
    let dirs = direction_operators(params.cutoff);

    // Spectral data per step; U_j from the same decomposition.
    let mut eigs: Vec<(Array1<f64>, Array2<C64>)> = Vec::with_capacity(n);
    let mut step_us: Vec<Array2<C64>> = Vec::with_capacity(n);
    for step in &wf.steps {
        let h = step_hamiltonian(params, &h_static, *step)?;
        let (vals, vecs) = herm_eig(&h);
        let mut u = vecs.clone();
        for (mut col, e) in u.columns_mut().into_iter().zip(vals.iter()) {
            let ph = (-linalg::I * e * params.dt).exp();
            col.mapv_inplace(|z| z * ph);
        }
        let u = u.dot(&dag(&vecs));
        eigs.push((vals, vecs));
        step_us.push(u);
    }

    // Forward partials F_j = U_j ... U_1 (F_0 = I) and backward partials
    // G_j = U_N ... U_{j+1} (G_N = I).
    let mut fwd: Vec<Array2<C64>> = Vec::with_capacity(n + 1);
    fwd.push(linalg::identity(dim));
    for u in &step_us {
        let prev = fwd.last().unwrap();
        fwd.push(u.dot(prev));
    }
    let mut bwd: Vec<Array2<C64>> = vec![linalg::identity(dim); n + 1];
    for j in (0..n).rev() {
        bwd[j] = bwd[j + 1].dot(&step_us[j]);
    }

    let total = fwd[n].clone();
    let t = linalg::trace(&dag(adjoint_target).dot(&total));
    let t_norm = t.norm();

    let mut grad = vec![0.0f64; 4 * n];
    if t_norm < 1e-300 {
        // |tr| is not differentiable at exactly zero overlap; return the zero
        // subgradient.
        return Ok((JointOperator::from_matrix(total, params.cutoff), grad));
    }

    let dt = params.dt;
    for j in 0..n {
        let (vals, vecs) = &eigs[j];
        // M = F_{j-1} · T† · G_j, rotated into the step eigenbasis.
        let m = fwd[j].dot(&dag(adjoint_target)).dot(&bwd[j + 1]);
        let m_tilde = dag(vecs).dot(&m).dot(vecs);
        // Divided-difference kernel of exp(-i dt ·) over eigenvalue pairs:
        // phi(a, b) = -i dt e^{-i dt (a+b)/2} sinc(dt (a-b) / 2), exact for all
        // eigenvalue gaps.
        let k = vals.len();
        let mut w = Array2::<C64>::zeros((k, k));
        for r in 0..k {
            for c in 0..k {
                let mid = 0.5 * (vals[r] + vals[c]);
                let half_gap = 0.5 * dt * (vals[r] - vals[c]);
                let phi = -linalg::I * dt * (-linalg::I * mid * dt).exp() * sinc(half_gap);
                // tr(M · V (phi ∘ Ẽ) V†) = Σ_{rc} (m̃)_{cr} phi_{rc} Ẽ_{rc}
                w[[r, c]] = m_tilde[[c, r]] * phi;
            }
        }
        for (p, dir) in dirs.iter().enumerate() {
            let e_tilde = dag(vecs).dot(dir).dot(vecs);
            let dtrace: C64 = w.iter().zip(e_tilde.iter()).map(|(a, b)| a * b).sum();
            // d|t| = Re(conj(t)/|t| · dt)
            grad[4 * j + p] = (t.conj() * dtrace).re / t_norm;
        }
    }

    Ok((JointOperator::from_matrix(total, params.cutoff), grad))
}

fn sinc(x: f64) -> C64 {
    if x.abs() < 1e-4 {
        C64::new(1.0 - x * x / 6.0 + x.powi(4) / 120.0, 0.0)
    } else {
        C64::new(x.sin() / x, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm_hermitian, max_abs_diff, unitarity_residual, ONE, ZERO};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_waveform(params: &DeviceParams, n_ts: usize, rng: &mut ChaCha8Rng) -> Waveform {
        let steps = (0..n_ts)
            .map(|_| {
                let r = params.omega_max * rng.gen::<f64>();
                let th = std::f64::consts::TAU * rng.gen::<f64>();
                let r2 = params.omega_max * rng.gen::<f64>();
                let th2 = std::f64::consts::TAU * rng.gen::<f64>();
                DriveStep {
                    omega_c: C64::from_polar(r, th),
                    omega_q: C64::from_polar(r2, th2),
                }
            })
            .collect();
        Waveform::new(steps, params.dt)
    }

    #[test]
    fn zero_couplings_zero_drive_gives_identity() {
        let mut p = DeviceParams::with_cutoff(4);
        p.chi = 0.0;
        p.chi_prime = 0.0;
        p.kerr = 0.0;
        let u = propagate(&p, &Waveform::zero(1, p.dt)).unwrap();
        assert!(max_abs_diff(&u.matrix, &linalg::identity(8)) < 1e-15);
    }

    #[test]
    fn zero_drive_gives_static_eigenphases() {
        let p = DeviceParams::with_cutoff(5);
        let n_ts = 7;
        let u = propagate(&p, &Waveform::zero(n_ts, p.dt)).unwrap();
        let h = build_static_hamiltonian(&p).matrix;
        let tau = n_ts as f64 * p.dt;
        for k in 0..p.dim() {
            let expected = (-linalg::I * h[[k, k]].re * tau).exp();
            assert!((u.matrix[[k, k]] - expected).norm() < 1e-12);
        }
        assert!(unitarity_residual(&u.matrix) < 1e-12);
    }

    #[test]
    fn single_step_matches_spectral_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = DeviceParams::with_cutoff(8); // dim 16
        for _ in 0..5 {
            let wf = random_waveform(&p, 1, &mut rng);
            let u = propagate(&p, &wf).unwrap();
            let h_static = build_static_hamiltonian(&p).matrix;
            let h = step_hamiltonian(&p, &h_static, wf.steps[0]).unwrap();
            let oracle = expm_hermitian(&h, p.dt);
            assert!(max_abs_diff(&u.matrix, &oracle) < 1e-9);
        }
    }

    #[test]
    fn composition_matches_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = DeviceParams::with_cutoff(4);
        let wf1 = random_waveform(&p, 5, &mut rng);
        let wf2 = random_waveform(&p, 3, &mut rng);
        let u12 = propagate(&p, &wf1.concat(&wf2)).unwrap();
        let u1 = propagate(&p, &wf1).unwrap();
        let u2 = propagate(&p, &wf2).unwrap();
        assert!(max_abs_diff(&u12.matrix, &u2.matrix.dot(&u1.matrix)) < 1e-10);
    }

    #[test]
    fn long_propagation_stays_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let p = DeviceParams::with_cutoff(4);
        let wf = random_waveform(&p, 10_000, &mut rng);
        let u = propagate(&p, &wf).unwrap();
        assert!(unitarity_residual(&u.matrix) < 1e-10);
    }

    fn fd_gradient(
        params: &DeviceParams,
        wf: &Waveform,
        target: &Array2<C64>,
        eps: f64,
    ) -> Vec<f64> {
        let base = wf.to_params();
        let mut g = vec![0.0; base.len()];
        for k in 0..base.len() {
            let mut plus = base.clone();
            plus[k] += eps;
            let mut minus = base.clone();
            minus[k] -= eps;
            let up = propagate(params, &Waveform::from_params(&plus, wf.dt)).unwrap();
            let um = propagate(params, &Waveform::from_params(&minus, wf.dt)).unwrap();
            let tp = linalg::trace(&dag(target).dot(&up.matrix)).norm();
            let tm = linalg::trace(&dag(target).dot(&um.matrix)).norm();
            g[k] = (tp - tm) / (2.0 * eps);
        }
        g
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let p = DeviceParams::with_cutoff(4);
        for _ in 0..3 {
            let mut wf = random_waveform(&p, 4, &mut rng);
            // Stay inside the bound so FD probes remain feasible.
            for s in wf.steps.iter_mut() {
                s.omega_c *= 0.9;
                s.omega_q *= 0.9;
            }
            let target = linalg::random_unitary(p.dim(), &mut rng);
            let (_, grad) = propagate_with_gradient(&p, &wf, &target).unwrap();
            let eps = 1e-7 * p.omega_max;
            let fd = fd_gradient(&p, &wf, &target, eps);
            let gmax = fd.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for (a, b) in grad.iter().zip(fd.iter()) {
                assert!(
                    (a - b).abs() <= 1e-5 * b.abs().max(0.01 * gmax),
                    "analytic {a} vs fd {b} (scale {gmax})"
                );
            }
        }
    }

    #[test]
    fn gradient_is_exact_at_self_target() {
        // At F = 1 the finite-difference check still holds.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let p = DeviceParams::with_cutoff(3);
        let mut wf = random_waveform(&p, 3, &mut rng);
        for s in wf.steps.iter_mut() {
            s.omega_c *= 0.5;
            s.omega_q *= 0.5;
        }
        let target = propagate(&p, &wf).unwrap().matrix;
        let (u, grad) = propagate_with_gradient(&p, &wf, &target).unwrap();
        let f = linalg::trace(&dag(&target).dot(&u.matrix)).norm() / p.dim() as f64;
        assert!((f - 1.0).abs() < 1e-12);
        let fd = fd_gradient(&p, &wf, &target, 1e-7 * p.omega_max);
        let gmax = fd.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-6);
        for (a, b) in grad.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-4 * gmax.max(1.0));
        }
    }

    #[test]
    fn decoupled_parameter_has_zero_gradient() {
        // With the qubit-cavity coupling zeroed and a cavity-only drive, the
        // step Hamiltonian acts as identity on the qubit factor, so the
        // qubit-drive gradient entries vanish identically (the σ directions
        // are traceless in the qubit sector) even away from any optimum.
        let mut p = DeviceParams::with_cutoff(3);
        p.chi = 0.0;
        p.chi_prime = 0.0;
        let wf = Waveform::new(
            vec![DriveStep { omega_c: C64::new(0.01, 0.004), omega_q: ZERO }],
            p.dt,
        );
        let target = linalg::identity(p.dim());
        let (_, grad) = propagate_with_gradient(&p, &wf, &target).unwrap();
        assert!(grad[2].abs() < 1e-13, "Re qubit gradient {}", grad[2]);
        assert!(grad[3].abs() < 1e-13, "Im qubit gradient {}", grad[3]);
        // The driven cavity parameters do carry gradient.
        assert!(grad[0].abs() + grad[1].abs() > 1e-6);
    }

    #[test]
    fn waveform_json_schema() {
        let wf = Waveform::new(
            vec![
                DriveStep { omega_c: C64::new(0.1, -0.2), omega_q: C64::new(0.0, 0.3) },
                DriveStep { omega_c: ZERO, omega_q: ONE * 0.05 },
            ],
            10.0,
        );
        let v = serde_json::to_value(&wf).unwrap();
        assert_eq!(v["dt_ns"].as_f64().unwrap(), 10.0);
        assert_eq!(v["steps"][0][0].as_f64().unwrap(), 0.1);
        assert_eq!(v["steps"][0][1].as_f64().unwrap(), -0.2);
        assert_eq!(v["steps"][1][3].as_f64().unwrap(), 0.0);
        let back: Waveform = serde_json::from_value(v).unwrap();
        assert_eq!(back, wf);
    }
}
