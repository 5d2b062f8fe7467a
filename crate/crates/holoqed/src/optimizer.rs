//! Shared first-order optimizer with per-parameter adaptive step sizes
//! (Adam-style moment estimates) and a stall detector.

/// Per-parameter adaptive gradient ascent/descent state.
#[derive(Debug, Clone)]
pub struct AdaptiveSteps {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdaptiveSteps {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-10,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// In-place parameter update along `direction * grad` (direction +1 to
    /// ascend, -1 to descend).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], direction: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mhat = self.m[k] / b1t;
            let vhat = self.v[k] / b2t;
            params[k] += direction * self.learning_rate * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Tracks the stall condition: improvement of the running best below
/// `min_improvement` for `window` consecutive iterations.
#[derive(Debug, Clone)]
pub struct ProgressGuard {
    window: usize,
    min_improvement: f64,
    best: f64,
    stalled: usize,
}

impl ProgressGuard {
    /// Maximization semantics: `best` improves upward.
    pub fn new(window: usize, min_improvement: f64) -> Self {
        Self { window, min_improvement, best: f64::NEG_INFINITY, stalled: 0 }
    }

    /// Feed one iteration's value; returns true when the run has stalled.
    pub fn update(&mut self, value: f64) -> bool {
        if value > self.best + self.min_improvement {
            self.best = value;
            self.stalled = 0;
        } else {
            self.best = self.best.max(value);
            self.stalled += 1;
        }
        self.stalled >= self.window
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}


/// Limited-memory BFGS direction engine (two-loop recursion), minimization
/// convention. Curvature pairs are accepted only when s·y is safely positive.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    memory: usize,
    pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>, // (s, y, 1/s·y)
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        Self { memory, pairs: std::collections::VecDeque::new() }
    }

    pub fn reset(&mut self) {
        self.pairs.clear();
    }

    pub fn push_pair(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        let yy: f64 = y.iter().map(|a| a * a).sum();
        if sy > 1e-12 * (ss * yy).sqrt() && sy > 0.0 {
            if self.pairs.len() == self.memory {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y, 1.0 / sy));
        }
    }

    /// Descent direction -H g for the current inverse-Hessian estimate.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let alpha = rho * s.iter().zip(q.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (qk, yk) in q.iter_mut().zip(y.iter()) {
                *qk -= alpha * yk;
            }
            alphas.push(alpha);
        }
        // Initial scaling H0 = (s·y)/(y·y) I from the most recent pair.
        if let Some((s, y, _)) = self.pairs.back() {
            let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            let yy: f64 = y.iter().map(|a| a * a).sum();
            let gamma = sy / yy;
            for qk in q.iter_mut() {
                *qk *= gamma;
            }
        }
        for ((s, y, rho), alpha) in self.pairs.iter().zip(alphas.iter().rev()) {
            let beta = rho * y.iter().zip(q.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (qk, sk) in q.iter_mut().zip(s.iter()) {
                *qk += (alpha - beta) * sk;
            }
        }
        for qk in q.iter_mut() {
            *qk = -*qk;
        }
        q
    }
}

/// Outcome of an [`refine_lbfgs`] run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineStatus {
    ReachedTarget,
    Stalled,
    Exhausted,
}

/// Maximize a smooth objective with L-BFGS and backtracking line search.
///
/// `x` is updated in place to the best point found. Returns the best value,
/// the per-iteration running-best history, and why the loop ended.
pub fn refine_lbfgs<VG, V, P>(
    x: &mut Vec<f64>,
    mut value_grad: VG,
    mut value_only: V,
    project: P,
    max_iters: usize,
    stop_at: f64,
    stall_window: usize,
    stall_eps: f64,
) -> crate::Result<(f64, Vec<f64>, RefineStatus)>
where
    VG: FnMut(&[f64]) -> crate::Result<(f64, Vec<f64>)>,
    V: FnMut(&[f64]) -> crate::Result<f64>,
    P: Fn(&mut [f64]),
{
    project(x);
    let (mut cur_f, mut grad) = value_grad(x)?;
    let mut best_f = cur_f;
    let mut best_x = x.clone();
    let mut history = vec![best_f];
    let mut guard = ProgressGuard::new(stall_window, stall_eps);
    guard.update(best_f);
    let mut lbfgs = Lbfgs::new(12);
    let mut status = RefineStatus::Exhausted;

    if best_f >= stop_at {
        return Ok((best_f, history, RefineStatus::ReachedTarget));
    }

    for _ in 0..max_iters {
        let g_min: Vec<f64> = grad.iter().map(|g| -g).collect();
        let d = lbfgs.direction(&g_min);
        let dnorm = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut accepted = false;
        if dnorm > 0.0 {
            let mut alpha = 1.0f64;
            for _ in 0..30 {
                let mut cand = x.clone();
                for (c, dk) in cand.iter_mut().zip(d.iter()) {
                    *c += alpha * dk;
                }
                project(&mut cand);
                let f_c = value_only(&cand)?;
                if f_c > cur_f {
                    let (_, g_new) = value_grad(&cand)?;
                    let s: Vec<f64> = cand.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> =
                        g_new.iter().zip(grad.iter()).map(|(a, b)| -(a - b)).collect();
                    lbfgs.push_pair(s, y);
                    *x = cand;
                    cur_f = f_c;
                    grad = g_new;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if !accepted {
            lbfgs.reset();
            let gmax = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if gmax > 0.0 {
                let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-3);
                let mut cand = x.clone();
                for (c, g) in cand.iter_mut().zip(grad.iter()) {
                    *c += 1e-5 * scale * g / gmax;
                }
                project(&mut cand);
                let (f_c, g_c) = value_grad(&cand)?;
                if f_c > cur_f {
                    *x = cand;
                    cur_f = f_c;
                    grad = g_c;
                }
            }
        }
        if cur_f > best_f {
            best_f = cur_f;
            best_x = x.clone();
        }
        history.push(best_f);
        if best_f >= stop_at {
            status = RefineStatus::ReachedTarget;
            break;
        }
        if guard.update(best_f) {
            status = RefineStatus::Stalled;
            break;
        }
    }
    *x = best_x;
    Ok((best_f, history, status))
}
