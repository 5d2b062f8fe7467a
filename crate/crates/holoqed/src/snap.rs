//! Digital gate-based synthesis from layered cavity displacements, qubit
//! rotations, and qubit-conditioned number-dependent phase gates, with a
//! fixed per-layer implementation-time cost.
//!
//! Each layer applies S(θ) first, then R(φ), then D(α); layers compose with
//! layer 1 acting first (rightmost factor). Gates are treated as perfectly
//! implemented instantaneous unitaries; the time cost is accounted as
//! `layers × layer_time` with an 800 ns default per layer.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::JointOperator;
use crate::error::Error;
use crate::grape::trace_fidelity;
use crate::linalg::{self, dag, kron, trace};
use crate::optimizer::{refine_lbfgs, RefineStatus};
use crate::Result;

/// Default per-layer implementation time (ns).
pub const DEFAULT_LAYER_TIME_NS: f64 = 800.0;

/// One circuit layer: displacement amplitude, rotation axis·angle, and the
/// per-occupation phases of the conditioned number-phase gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateLayer {
    pub alpha: C64,
    pub phi: [f64; 3],
    pub theta: Vec<f64>,
}

impl GateLayer {
    pub fn zero(cutoff: usize) -> Self {
        Self { alpha: C64::default(), phi: [0.0; 3], theta: vec![0.0; cutoff] }
    }

    fn n_params(cutoff: usize) -> usize {
        5 + cutoff
    }

    fn to_params(&self, out: &mut Vec<f64>) {
        out.push(self.alpha.re);
        out.push(self.alpha.im);
        out.extend_from_slice(&self.phi);
        out.extend_from_slice(&self.theta);
    }

    fn from_params(p: &[f64], cutoff: usize) -> Self {
        assert_eq!(p.len(), Self::n_params(cutoff));
        Self {
            alpha: C64::new(p[0], p[1]),
            phi: [p[2], p[3], p[4]],
            theta: p[5..].to_vec(),
        }
    }
}

/// A layered displacement / rotation / number-phase circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct GateCircuit {
    pub layers: Vec<GateLayer>,
    /// Implementation time per layer (ns).
    pub layer_time: f64,
}

impl GateCircuit {
    pub fn new(layers: Vec<GateLayer>) -> Self {
        Self { layers, layer_time: DEFAULT_LAYER_TIME_NS }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Total implementation time: layers × layer_time (ns).
    pub fn implementation_time(&self) -> f64 {
        self.layers.len() as f64 * self.layer_time
    }

    /// Compose the circuit unitary at the given cavity cutoff.
    pub fn unitary(&self, cutoff: usize) -> Result<JointOperator> {
        let mut u = linalg::identity(2 * cutoff);
        for layer in &self.layers {
            u = layer_unitary(layer, cutoff)?.dot(&u);
        }
        Ok(JointOperator::from_matrix(u, cutoff))
    }

    fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for layer in &self.layers {
            layer.to_params(&mut p);
        }
        p
    }

    fn from_params(p: &[f64], cutoff: usize, layer_time: f64) -> Self {
        let np = GateLayer::n_params(cutoff);
        assert_eq!(p.len() % np, 0);
        Self {
            layers: p.chunks_exact(np).map(|c| GateLayer::from_params(c, cutoff)).collect(),
            layer_time,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    alpha: [f64; 2],
    phi: [f64; 3],
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CircuitFile {
    layer_time_ns: f64,
    layers: Vec<LayerFile>,
}

impl Serialize for GateCircuit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CircuitFile {
            layer_time_ns: self.layer_time,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    alpha: [l.alpha.re, l.alpha.im],
                    phi: l.phi,
                    theta: l.theta.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GateCircuit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = CircuitFile::deserialize(d)?;
        Ok(GateCircuit {
            layer_time: f.layer_time_ns,
            layers: f
                .layers
                .into_iter()
                .map(|l| GateLayer {
                    alpha: C64::new(l.alpha[0], l.alpha[1]),
                    phi: l.phi,
                    theta: l.theta,
                })
                .collect(),
        })
    }
}

/// Cavity displacement D(α) = exp(α a − α* a†), tensored with the qubit
/// identity.
///
/// On the truncated space the generator is exactly anti-Hermitian, so the
/// gate is exactly unitary; it stops being a faithful displacement as |α|²
/// approaches the cutoff, where truncation distorts the coherent-state
/// amplitudes.
pub fn gate_displacement(alpha: C64, cutoff: usize) -> JointOperator {
    assert!(cutoff >= 2);
    let mut a = Array2::<C64>::zeros((cutoff, cutoff));
    for n in 1..cutoff {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    let gen = a.mapv(|z| alpha * z) - dag(&a).mapv(|z| alpha.conj() * z);
    let d = linalg::expm(&gen);
    JointOperator::from_matrix(kron(&linalg::identity(2), &d), cutoff)
}

/// Qubit-conditioned number-phase gate: phase e^{+iθ_n} on |q=0, n⟩ and
/// e^{-iθ_n} on |q=1, n⟩.
pub fn gate_snap(theta: &[f64], cutoff: usize) -> Result<JointOperator> {
    if theta.len() != cutoff {
        return Err(Error::LengthMismatch { got: theta.len(), expected: cutoff });
    }
    let dim = 2 * cutoff;
    let mut m = Array2::<C64>::zeros((dim, dim));
    for (n, th) in theta.iter().enumerate() {
        m[[n, n]] = C64::from_polar(1.0, *th);
        m[[cutoff + n, cutoff + n]] = C64::from_polar(1.0, -*th);
    }
    Ok(JointOperator::from_matrix(m, cutoff))
}

/// Qubit rotation R(φ⃗) = exp(−i φ⃗·σ⃗), tensored with the cavity identity.
pub fn gate_rotation(phi: [f64; 3], cutoff: usize) -> JointOperator {
    let angle = (phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]).sqrt();
    let r = if angle < 1e-300 {
        linalg::identity(2)
    } else {
        let (nx, ny, nz) = (phi[0] / angle, phi[1] / angle, phi[2] / angle);
        let c = angle.cos();
        let s = angle.sin();
        let mut m = Array2::<C64>::zeros((2, 2));
        m[[0, 0]] = C64::new(c, -s * nz);
        m[[0, 1]] = C64::new(-s * ny, -s * nx);
        m[[1, 0]] = C64::new(s * ny, -s * nx);
        m[[1, 1]] = C64::new(c, s * nz);
        m
    };
    JointOperator::from_matrix(kron(&r, &linalg::identity(cutoff)), cutoff)
}

fn layer_unitary(layer: &GateLayer, cutoff: usize) -> Result<Array2<C64>> {
    let s = gate_snap(&layer.theta, cutoff)?.matrix;
    let r = gate_rotation(layer.phi, cutoff).matrix;
    let d = gate_displacement(layer.alpha, cutoff).matrix;
    Ok(d.dot(&r).dot(&s))
}

/// Gate-based synthesis task.
#[derive(Debug, Clone)]
pub struct CircuitSynthesisProblem {
    /// Target unitary of dimension 2Λ.
    pub target: Array2<C64>,
    pub cutoff: usize,
    pub depth: usize,
    pub seed: u64,
    /// Optimizer iterations per depth stage and candidate.
    pub max_iters: usize,
    pub tol_infidelity: f64,
    /// Candidates per depth stage.
    pub batch: usize,
    /// Standard deviation of the parameter noise on new layers.
    pub noise_std: f64,
    pub layer_time: f64,
}

impl CircuitSynthesisProblem {
    pub fn new(target: Array2<C64>, depth: usize, seed: u64) -> Self {
        let cutoff = target.nrows() / 2;
        Self {
            target,
            cutoff,
            depth,
            seed,
            max_iters: 200,
            tol_infidelity: 1e-2,
            batch: 10,
            noise_std: 0.05,
            layer_time: DEFAULT_LAYER_TIME_NS,
        }
    }
}

/// Outcome of a batch-sequential circuit synthesis.
#[derive(Debug, Clone)]
pub struct CircuitRun {
    pub circuit: GateCircuit,
    /// Running-best fidelity, concatenated across stages (nondecreasing).
    pub fidelity_history: Vec<f64>,
    /// Best infidelity recorded at each depth stage.
    pub stage_best: Vec<(usize, f64)>,
    pub final_infidelity: f64,
}

/// Fidelity and central-difference gradient over all circuit parameters,
/// using per-layer partial products so each probe rebuilds one layer only.
fn fidelity_and_fd_grad(
    target: &Array2<C64>,
    params: &[f64],
    cutoff: usize,
    fd_step: f64,
) -> Result<(f64, Vec<f64>)> {
    let np = GateLayer::n_params(cutoff);
    let depth = params.len() / np;
    let dim = (2 * cutoff) as f64;
    let layers: Vec<GateLayer> =
        params.chunks_exact(np).map(|c| GateLayer::from_params(c, cutoff)).collect();
    let units: Vec<Array2<C64>> =
        layers.iter().map(|l| layer_unitary(l, cutoff)).collect::<Result<_>>()?;

    // prefix[i] = L_{i-1}...L_0, suffix[i] = L_{depth-1}...L_{i+1}
    let mut prefix = vec![linalg::identity(2 * cutoff)];
    for u in &units {
        prefix.push(u.dot(prefix.last().unwrap()));
    }
    let mut suffix = vec![linalg::identity(2 * cutoff); depth + 1];
    for i in (0..depth).rev() {
        suffix[i] = suffix[i + 1].dot(&units[i]);
    }

    let f = trace(&dag(target).dot(&prefix[depth])).norm() / dim;

    let mut grad = vec![0.0; params.len()];
    for i in 0..depth {
        // tr(T† S_i L' P_i) = tr((P_i T† S_i) L')
        let m = prefix[i].dot(&dag(target)).dot(&suffix[i + 1]);
        for k in 0..np {
            let idx = i * np + k;
            let mut lp = params[i * np..(i + 1) * np].to_vec();
            lp[k] += fd_step;
            let up = layer_unitary(&GateLayer::from_params(&lp, cutoff), cutoff)?;
            lp[k] -= 2.0 * fd_step;
            let um = layer_unitary(&GateLayer::from_params(&lp, cutoff), cutoff)?;
            let tp: C64 = m.iter().zip(up.t().iter()).map(|(a, b)| a * b).sum();
            let tm: C64 = m.iter().zip(um.t().iter()).map(|(a, b)| a * b).sum();
            grad[idx] = (tp.norm() - tm.norm()) / (2.0 * fd_step) / dim;
        }
    }
    Ok((f, grad))
}

fn circuit_fidelity(target: &Array2<C64>, params: &[f64], cutoff: usize, layer_time: f64) -> Result<f64> {
    let circuit = GateCircuit::from_params(params, cutoff, layer_time);
    let u = circuit.unitary(cutoff)?;
    trace_fidelity(&u.matrix, target)
}

/// Batch-sequential synthesis: optimize a batch of randomly initialized
/// single-layer circuits, keep the best, extend it by one near-identity layer
/// with small parameter noise, and repeat until the requested depth.
///
/// The incumbent extended by an exact identity layer is always a candidate,
/// so the best batch fidelity never decreases with depth.
pub fn synthesize_circuit(problem: &CircuitSynthesisProblem) -> Result<CircuitRun> {
    assert!(problem.depth >= 1);
    assert!(problem.batch >= 1);
    let cutoff = problem.cutoff;
    assert_eq!(problem.target.nrows(), 2 * cutoff);
    let np = GateLayer::n_params(cutoff);
    let fd_step = 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let mut incumbent: Vec<f64> = Vec::new();
    let mut best_f = f64::NEG_INFINITY;
    let mut best_params: Vec<f64> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut stage_best: Vec<(usize, f64)> = Vec::new();
    let mut stalled_stages = 0usize;

    for depth in 1..=problem.depth {
        // Build the candidate batch.
        let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(problem.batch);
        if depth == 1 {
            // Zero-parameter candidate first: exact for an identity target.
            candidates.push(vec![0.0; np]);
            for _ in 1..problem.batch {
                let mut c = vec![0.0; np];
                for v in c.iter_mut() {
                    *v = problem.noise_std * rng.sample::<f64, _>(StandardNormal);
                }
                candidates.push(c);
            }
        } else {
            // Incumbent + exact identity layer.
            let mut extended = incumbent.clone();
            extended.extend(vec![0.0; np]);
            candidates.push(extended.clone());
            for _ in 1..problem.batch {
                let mut c = extended.clone();
                for v in c[(depth - 1) * np..].iter_mut() {
                    *v += problem.noise_std * rng.sample::<f64, _>(StandardNormal);
                }
                candidates.push(c);
            }
        }

        let target = &problem.target;
        let results: Vec<Result<(f64, Vec<f64>, Vec<f64>)>> = candidates
            .into_par_iter()
            .map(|mut x| {
                let (f, hist, _status) = refine_lbfgs(
                    &mut x,
                    |p| fidelity_and_fd_grad(target, p, cutoff, fd_step),
                    |p| circuit_fidelity(target, p, cutoff, problem.layer_time),
                    |_p| {},
                    problem.max_iters,
                    1.0 - problem.tol_infidelity,
                    50,
                    1e-12,
                )?;
                Ok((f, x, hist))
            })
            .collect();

        // Deterministic reduction: best fidelity, ties by candidate order.
        let mut stage_f = f64::NEG_INFINITY;
        let mut stage_x: Option<Vec<f64>> = None;
        let mut stage_hist: Vec<f64> = Vec::new();
        for r in results {
            let (f, x, hist) = r?;
            if f > stage_f {
                stage_f = f;
                stage_x = Some(x);
                stage_hist = hist;
            }
        }
        let stage_x = stage_x.expect("nonempty batch");

        incumbent = stage_x.clone();
        let improved = stage_f > best_f + 1e-12;
        if stage_f > best_f {
            best_f = stage_f;
            best_params = stage_x;
        }
        // Append this stage's curve, keeping the history a global running best.
        for h in stage_hist {
            let floor = history.last().copied().unwrap_or(f64::NEG_INFINITY);
            history.push(h.max(floor));
        }
        stage_best.push((depth, 1.0 - best_f));

        if 1.0 - best_f <= problem.tol_infidelity {
            break;
        }
        stalled_stages = if improved { 0 } else { stalled_stages + 1 };
        if stalled_stages >= 3 {
            return Err(Error::NoProgress {
                iterations: history.len(),
                infidelity: 1.0 - best_f,
            });
        }
    }

    Ok(CircuitRun {
        circuit: GateCircuit::from_params(&best_params, cutoff, problem.layer_time),
        fidelity_history: history,
        stage_best,
        final_infidelity: 1.0 - best_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_diff, unitarity_residual};

    #[test]
    fn displacement_identity_and_inverse_pair() {
        let cutoff = 12;
        let d0 = gate_displacement(C64::default(), cutoff);
        assert!(max_abs_diff(&d0.matrix, &identity(2 * cutoff)) < 1e-14);
        let alpha = C64::new(0.7, -0.4);
        let d = gate_displacement(alpha, cutoff);
        let dinv = gate_displacement(-alpha, cutoff);
        assert!(max_abs_diff(&d.matrix.dot(&dinv.matrix), &identity(2 * cutoff)) < 1e-9);
        assert!(unitarity_residual(&d.matrix) < 1e-10);
    }

    #[test]
    fn displacement_vacuum_overlap_is_coherent() {
        let cutoff = 20;
        for alpha in [C64::new(0.5, 0.0), C64::new(0.3, -0.9), C64::new(1.0, 0.0)] {
            let d = gate_displacement(alpha, cutoff);
            let amp = d.matrix[[0, 0]]; // ⟨q=0,n=0|D|q=0,n=0⟩
            let expected = (-alpha.norm_sqr()).exp();
            assert!(
                (amp.norm_sqr() - expected).abs() < 1e-6,
                "|<0|D|0>|^2 = {} vs e^-|a|^2 = {}",
                amp.norm_sqr(),
                expected
            );
        }
    }

    #[test]
    fn snap_gate_examples() {
        let cutoff = 5;
        let s0 = gate_snap(&vec![0.0; cutoff], cutoff).unwrap();
        assert!(max_abs_diff(&s0.matrix, &identity(2 * cutoff)) < 1e-15);

        // θ_n = π for all n: an involution.
        let spi = gate_snap(&vec![std::f64::consts::PI; cutoff], cutoff).unwrap();
        assert!(max_abs_diff(&spi.matrix.dot(&spi.matrix), &identity(2 * cutoff)) < 1e-12);

        // Single nonzero phase touches only the n = 0 entries.
        let mut theta = vec![0.0; cutoff];
        theta[0] = 0.3;
        let s = gate_snap(&theta, cutoff).unwrap().matrix;
        let id = identity(2 * cutoff);
        for i in 0..2 * cutoff {
            if i == 0 || i == cutoff {
                assert!((s[[i, i]].norm() - 1.0).abs() < 1e-15 && (s[[i, i]] - id[[i, i]]).norm() > 0.29);
            } else {
                assert!((s[[i, i]] - id[[i, i]]).norm() < 1e-15);
            }
        }
        assert!((s[[0, 0]] - C64::from_polar(1.0, 0.3)).norm() < 1e-15);
        assert!((s[[cutoff, cutoff]] - C64::from_polar(1.0, -0.3)).norm() < 1e-15);

        match gate_snap(&[0.1, 0.2], 5) {
            Err(Error::LengthMismatch { got: 2, expected: 5 }) => {}
            other => panic!("expected length mismatch, got {other:?}"),
        }
    }

    #[test]
    fn rotation_examples() {
        let cutoff = 3;
        let r0 = gate_rotation([0.0; 3], cutoff);
        assert!(max_abs_diff(&r0.matrix, &identity(2 * cutoff)) < 1e-15);

        // phi = (pi/2, 0, 0): exp(-i pi/2 sigma_x) = -i sigma_x
        let r = gate_rotation([std::f64::consts::FRAC_PI_2, 0.0, 0.0], cutoff);
        let sx = crate::device::JointOperator::sigma_x(cutoff).matrix;
        let expected = sx.mapv(|z| C64::new(0.0, -1.0) * z);
        assert!(max_abs_diff(&r.matrix, &expected) < 1e-14);

        // Random rotations invert exactly and have unit-modulus determinant.
        let phi = [0.33, -0.81, 0.25];
        let minus = [-0.33, 0.81, -0.25];
        let prod = gate_rotation(phi, cutoff).matrix.dot(&gate_rotation(minus, cutoff).matrix);
        assert!(max_abs_diff(&prod, &identity(2 * cutoff)) < 1e-12);
        let r = gate_rotation(phi, 2).matrix;
        let det = r[[0, 0]] * r[[3, 3]] - r[[0, 2]] * r[[2, 0]]; // qubit block at n=0
        // (qubit block entries live at stride `cutoff`=2 in the joint matrix)
        assert!((det.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circuit_time_and_json_schema() {
        let circuit = GateCircuit::new(vec![
            GateLayer { alpha: C64::new(0.1, 0.2), phi: [0.3, 0.0, -0.1], theta: vec![0.0, 0.5] },
            GateLayer::zero(2),
        ]);
        assert_eq!(circuit.implementation_time(), 1600.0);
        let v = serde_json::to_value(&circuit).unwrap();
        assert_eq!(v["layer_time_ns"].as_f64().unwrap(), 800.0);
        assert_eq!(v["layers"][0]["alpha"][1].as_f64().unwrap(), 0.2);
        assert_eq!(v["layers"][0]["theta"][1].as_f64().unwrap(), 0.5);
        let back: GateCircuit = serde_json::from_value(v).unwrap();
        assert_eq!(back, circuit);
    }

    #[test]
    fn circuit_unitary_composes_in_layer_order() {
        let cutoff = 3;
        let l1 = GateLayer { alpha: C64::new(0.2, 0.0), phi: [0.1, 0.2, 0.3], theta: vec![0.1, 0.0, -0.2] };
        let l2 = GateLayer { alpha: C64::new(0.0, -0.3), phi: [0.0, 0.5, 0.0], theta: vec![0.0, 0.4, 0.0] };
        let circuit = GateCircuit::new(vec![l1.clone(), l2.clone()]);
        let u = circuit.unitary(cutoff).unwrap().matrix;
        let u1 = layer_unitary(&l1, cutoff).unwrap();
        let u2 = layer_unitary(&l2, cutoff).unwrap();
        assert!(max_abs_diff(&u, &u2.dot(&u1)) < 1e-13);
        assert!(unitarity_residual(&u) < 1e-12);
    }

    #[test]
    fn identity_target_is_exact_at_depth_one() {
        let cutoff = 3;
        let problem = CircuitSynthesisProblem::new(identity(2 * cutoff), 1, 11);
        let run = synthesize_circuit(&problem).unwrap();
        assert!(run.final_infidelity < 1e-10, "{}", run.final_infidelity);
        assert_eq!(run.circuit.depth(), 1);
    }

    #[test]
    fn fd_gradient_matches_naive_difference() {
        let cutoff = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = linalg::random_unitary(2 * cutoff, &mut rng);
        let np = GateLayer::n_params(cutoff);
        let mut params = vec![0.0; 2 * np];
        for v in params.iter_mut() {
            *v = 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        let (_, grad) = fidelity_and_fd_grad(&target, &params, cutoff, 1e-6).unwrap();
        for k in [0usize, 3, np - 1, np, 2 * np - 1] {
            let mut pp = params.clone();
            pp[k] += 1e-6;
            let fp = circuit_fidelity(&target, &pp, cutoff, 800.0).unwrap();
            pp[k] -= 2e-6;
            let fm = circuit_fidelity(&target, &pp, cutoff, 800.0).unwrap();
            let fd = (fp - fm) / 2e-6;
            assert!((grad[k] - fd).abs() < 1e-8, "param {k}: {} vs {}", grad[k], fd);
        }
    }

    #[test]
    fn batch_extension_never_decreases_best_fidelity() {
        let cutoff = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target = linalg::random_unitary(2 * cutoff, &mut rng);
        let mut problem = CircuitSynthesisProblem::new(target, 4, 17);
        problem.batch = 4;
        problem.max_iters = 60;
        problem.tol_infidelity = 1e-9;
        let run = match synthesize_circuit(&problem) {
            Ok(run) => run,
            Err(Error::NoProgress { .. }) => return, // stalled runs end monotone by construction
            Err(e) => panic!("{e}"),
        };
        for pair in run.stage_best.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-12, "{:?}", run.stage_best);
        }
        for w in run.fidelity_history.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
}
