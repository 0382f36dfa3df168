//! Warmup adaptation: dual-averaging step size and windowed diagonal
//! mass-matrix estimation.
//!
//! The warmup schedule splits into a fast initial buffer (15%), a sequence
//! of doubling covariance-estimation windows (75%), and a fast terminal
//! buffer (10%). The step size adapts throughout; the diagonal inverse mass
//! updates at each window boundary from the accumulated draw variances.

use rand::Rng;
use rand_distr::StandardNormal;

use super::nuts::State;
use super::Target;

/// Dual-averaging controller for the log step size (Hoffman & Gelman).
pub struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    m: f64,
    target: f64,
}

const GAMMA: f64 = 0.15;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(eps0: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            m: 0.0,
            target,
        }
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.m += 1.0;
        let w = 1.0 / (self.m + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat);
        self.log_eps = self.mu - self.m.sqrt() / GAMMA * self.h_bar;
        let eta = self.m.powf(-KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    pub fn averaged(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Streaming mean/variance accumulator.
#[derive(Clone)]
struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford { n: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for j in 0..x.len() {
            let d = x[j] - self.mean[j];
            self.mean[j] += d / self.n;
            self.m2[j] += d * (x[j] - self.mean[j]);
        }
    }

    /// Regularized variance estimate (shrunk toward unit scale, as in
    /// Stan's diagonal metric adaptation).
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|&m2| {
                let var = if n > 1.0 { m2 / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

pub struct WarmupAdaptation {
    da: DualAveraging,
    welford: Welford,
    dim: usize,
    /// First iteration of the slow (covariance-collecting) phase.
    slow_start: usize,
    /// Iteration indices (within warmup) at which the metric updates.
    window_ends: Vec<usize>,
    target: f64,
}

impl WarmupAdaptation {
    pub fn new(dim: usize, warmup: usize, target_accept: f64) -> Self {
        let window_ends = plan_windows(warmup);
        WarmupAdaptation {
            da: DualAveraging::new(1.0, target_accept),
            welford: Welford::new(dim),
            dim,
            slow_start: (warmup as f64 * 0.15).round() as usize,
            window_ends,
            target: target_accept,
        }
    }

    /// (Re)start the step-size controller around a fresh baseline.
    pub fn init_step_size(&mut self, eps: f64) {
        self.da = DualAveraging::new(eps, self.target);
    }

    pub fn current_step_size(&self) -> f64 {
        self.da.current()
    }

    pub fn adapted_step_size(&self) -> f64 {
        self.da.averaged()
    }

    /// Feed one warmup iteration. Returns a new inverse-mass diagonal at
    /// window boundaries.
    pub fn update(&mut self, it: usize, q: &[f64], accept_stat: f64) -> Option<Vec<f64>> {
        self.da.update(accept_stat);
        if !self.window_ends.is_empty() && it >= self.slow_start {
            self.welford.push(q);
        }
        if self.window_ends.contains(&it) {
            let inv_mass = self.welford.regularized_variance();
            self.welford = Welford::new(self.dim);
            return Some(inv_mass);
        }
        None
    }
}

/// Window boundaries within warmup: 15% fast start, doubling windows over
/// the middle 75%, 10% fast tail. Short warmups (< 40) adapt step size
/// only.
fn plan_windows(warmup: usize) -> Vec<usize> {
    if warmup < 40 {
        return Vec::new();
    }
    let init = (warmup as f64 * 0.15).round() as usize;
    let term = (warmup as f64 * 0.10).round() as usize;
    let slow_end = warmup - term;
    let mut ends = Vec::new();
    let mut start = init;
    let mut size = 25usize.min(slow_end.saturating_sub(init));
    while start + size <= slow_end {
        // The final window absorbs the remainder if doubling would overrun.
        let next_size = size * 2;
        let end = if start + size + next_size > slow_end { slow_end } else { start + size };
        ends.push(end - 1);
        start = end;
        size = next_size;
    }
    ends
}

/// Stan-style step-size search: double or halve until the one-step
/// acceptance probability crosses 0.5.
pub fn find_reasonable_step_size<T: Target>(
    target: &T,
    state: &State,
    inv_mass: &[f64],
    rng: &mut impl Rng,
) -> f64 {
    let dim = state.q.len();
    let mut eps = 1.0;
    let mut p = vec![0.0; dim];
    for j in 0..dim {
        let z: f64 = rng.sample(StandardNormal);
        p[j] = z / inv_mass[j].sqrt();
    }
    let kinetic =
        |p: &[f64]| 0.5 * p.iter().zip(inv_mass).map(|(&pi, &im)| pi * pi * im).sum::<f64>();
    let h0 = -state.logp + kinetic(&p);

    let one_step = |eps: f64| -> f64 {
        let mut pp = p.clone();
        let mut q = state.q.clone();
        let mut grad = state.grad.clone();
        for j in 0..dim {
            pp[j] += 0.5 * eps * grad[j];
            q[j] += eps * pp[j] * inv_mass[j];
        }
        let logp = target.logp_grad(&q, &mut grad);
        if !logp.is_finite() {
            return f64::NEG_INFINITY;
        }
        for j in 0..dim {
            pp[j] += 0.5 * eps * grad[j];
        }
        h0 - (-logp + kinetic(&pp))
    };

    let mut log_ratio = one_step(eps);
    let dir: f64 = if log_ratio > (0.5f64).ln() { 1.0 } else { -1.0 };
    for _ in 0..100 {
        if dir > 0.0 && log_ratio <= (0.5f64).ln() {
            break;
        }
        if dir < 0.0 && log_ratio > (0.5f64).ln() {
            break;
        }
        eps *= (2.0f64).powf(dir);
        if !(1e-10..=1e7).contains(&eps) {
            break;
        }
        log_ratio = one_step(eps);
    }
    eps.clamp(1e-10, 1e7)
}
