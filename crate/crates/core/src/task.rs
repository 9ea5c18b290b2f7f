//! Synthetic federated tasks: a strongly convex quadratic with a known optimum,
//! logistic regression, and a one-hidden-layer tanh network on two moons.

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::math;
use crate::rng::{SimRng, Stream};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub dim: usize,
    /// Smallest eigenvalue of the weighted aggregate Hessian.
    pub mu: f64,
    /// Largest eigenvalue of the weighted aggregate Hessian.
    pub smoothness: f64,
    /// Relative per-device eigenvalue perturbation, in `[0, 0.45]`.
    pub heterogeneity: f64,
    /// Spread of device centers around the common center.
    pub center_spread: f64,
    /// Per-sample noise around a device's center.
    pub sample_noise: f64,
    /// Distance scale of the optimum from the origin.
    pub center_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSpec {
    /// Features per sample, including the constant bias feature.
    pub dim: usize,
    pub test_samples: usize,
    pub reg: f64,
    /// Norm scale of the generating weight vector.
    pub signal: f64,
    /// Per-device feature-mean shift (non-i.i.d. shards).
    pub heterogeneity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub hidden: usize,
    pub test_samples: usize,
    pub noise: f64,
    pub reg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Quadratic(QuadraticSpec),
    Logistic(LogisticSpec),
    TinyMlp(MlpSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Quadratic,
    Logistic,
    TinyMlp,
}

#[derive(Debug, Clone, PartialEq)]
struct QuadDevice {
    hessian: Vec<f64>,
    samples: Vec<Vec<f64>>,
    mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Labeled {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Data {
    Quadratic { devices: Vec<QuadDevice>, optimum: Vec<f64>, f_star: f64, mu: f64, l: f64 },
    Logistic { shards: Vec<Labeled>, test: Labeled, reg: f64 },
    Mlp { shards: Vec<Labeled>, test: Labeled, hidden: usize, reg: f64 },
}

/// A generated federated dataset plus its loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    dim: usize,
    shard_sizes: Vec<usize>,
    data: Data,
}

impl Task {
    /// Generate a task for `shard_sizes.len()` devices from `seed`.
    pub fn generate(spec: &TaskSpec, shard_sizes: &[usize], seed: u64) -> Result<Self> {
        if shard_sizes.is_empty() {
            return Err(invalid("devices", "need at least one device"));
        }
        if let Some(k) = shard_sizes.iter().position(|&b| b == 0) {
            return Err(Error::EmptyShard(k));
        }
        let mut rng = SimRng::derived(seed, Stream::TaskData, &[]);
        match *spec {
            TaskSpec::Quadratic(q) => quadratic(&q, shard_sizes, &mut rng),
            TaskSpec::Logistic(l) => logistic(&l, shard_sizes, &mut rng),
            TaskSpec::TinyMlp(m) => mlp(&m, shard_sizes, &mut rng),
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self.data {
            Data::Quadratic { .. } => TaskKind::Quadratic,
            Data::Logistic { .. } => TaskKind::Logistic,
            Data::Mlp { .. } => TaskKind::TinyMlp,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_devices(&self) -> usize {
        self.shard_sizes.len()
    }

    pub fn shard_sizes(&self) -> &[usize] {
        &self.shard_sizes
    }

    pub fn shard_len(&self, k: usize) -> usize {
        self.shard_sizes[k]
    }

    /// Known minimiser (quadratic only).
    pub fn optimum(&self) -> Option<&[f64]> {
        match &self.data {
            Data::Quadratic { optimum, .. } => Some(optimum),
            _ => None,
        }
    }

    pub fn optimal_loss(&self) -> Option<f64> {
        match &self.data {
            Data::Quadratic { f_star, .. } => Some(*f_star),
            _ => None,
        }
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        match &self.data {
            Data::Quadratic { mu, .. } => Some(*mu),
            Data::Logistic { reg, .. } if *reg > 0.0 => Some(*reg),
            _ => None,
        }
    }

    /// Smoothness constant: exact for the quadratic, a data bound for logistic
    /// regression, `None` for the network (see [`estimate_smoothness`]).
    pub fn smoothness(&self) -> Option<f64> {
        match &self.data {
            Data::Quadratic { l, .. } => Some(*l),
            Data::Logistic { shards, reg, .. } => {
                let d = self.dim;
                let total: usize = shards.iter().map(|s| s.x.len()).sum();
                let mut cov = vec![0.0; d * d];
                for s in shards {
                    for x in &s.x {
                        for i in 0..d {
                            for j in 0..d {
                                cov[i * d + j] += x[i] * x[j] / total as f64;
                            }
                        }
                    }
                }
                let top = linalg::sym_eigenvalues(&cov, d).last().copied().unwrap_or(0.0);
                Some(top / 4.0 + reg)
            }
            Data::Mlp { .. } => None,
        }
    }

    /// A deterministic starting point.
    pub fn initial_model(&self, seed: u64) -> Vec<f64> {
        match &self.data {
            Data::Mlp { hidden, .. } => {
                let mut rng = SimRng::derived(seed, Stream::Init, &[]);
                let h = *hidden;
                let mut theta = vec![0.0; self.dim];
                for w in theta.iter_mut().take(2 * h) {
                    *w = rng.normal() * math::sqrt(0.5) * 1.5;
                }
                for w in theta.iter_mut().skip(3 * h).take(h) {
                    *w = rng.normal() * math::sqrt(1.0 / h as f64);
                }
                theta
            }
            _ => vec![0.0; self.dim],
        }
    }

    /// Add the gradient of sample `j` of device `k` into `out`, scaled by `w`.
    /// Returns the sample loss.
    pub fn accumulate_sample(&self, k: usize, j: usize, theta: &[f64], w: f64, out: &mut [f64]) -> f64 {
        match &self.data {
            Data::Quadratic { devices, .. } => {
                let dev = &devices[k];
                let d = self.dim;
                let diff: Vec<f64> = theta.iter().zip(&dev.samples[j]).map(|(a, b)| a - b).collect();
                let mut loss = 0.0;
                for i in 0..d {
                    let g = math::dot(&dev.hessian[i * d..(i + 1) * d], &diff);
                    out[i] += w * g;
                    loss += 0.5 * diff[i] * g;
                }
                loss
            }
            Data::Logistic { shards, reg, .. } => {
                let (x, y) = (&shards[k].x[j], shards[k].y[j]);
                let z = math::dot(theta, x);
                let p = math::sigmoid(z);
                for i in 0..self.dim {
                    out[i] += w * ((p - y) * x[i] + reg * theta[i]);
                }
                math::softplus(z) - y * z + 0.5 * reg * math::norm_sq(theta)
            }
            Data::Mlp { shards, hidden, reg, .. } => {
                mlp_sample(theta, *hidden, *reg, &shards[k].x[j], shards[k].y[j], w, out)
            }
        }
    }

    /// Mean gradient over the given sample indices of device `k`.
    pub fn batch_gradient(&self, k: usize, theta: &[f64], batch: &[usize], out: &mut [f64]) -> f64 {
        out.iter_mut().for_each(|g| *g = 0.0);
        let w = 1.0 / batch.len() as f64;
        batch.iter().map(|&j| self.accumulate_sample(k, j, theta, w, out)).sum::<f64>() * w
    }

    /// `F_k(θ)` and `∇F_k(θ)` over the whole shard.
    pub fn local_loss_grad(&self, k: usize, theta: &[f64], grad: &mut [f64]) -> f64 {
        let all: Vec<usize> = (0..self.shard_len(k)).collect();
        self.batch_gradient(k, theta, &all, grad)
    }

    pub fn local_loss(&self, k: usize, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim];
        self.local_loss_grad(k, theta, &mut g)
    }

    /// Shard-size weighted `F(θ)` and `∇F(θ)`.
    pub fn global_loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let total: usize = self.shard_sizes.iter().sum();
        let mut g = vec![0.0; self.dim];
        grad.iter_mut().for_each(|x| *x = 0.0);
        let mut loss = 0.0;
        for k in 0..self.num_devices() {
            let w = self.shard_len(k) as f64 / total as f64;
            loss += w * self.local_loss_grad(k, theta, &mut g);
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += w * b;
            }
        }
        loss
    }

    pub fn global_loss(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim];
        self.global_loss_grad(theta, &mut g)
    }

    /// Hold-out 0/1 accuracy for the classification tasks.
    pub fn accuracy(&self, theta: &[f64]) -> Option<f64> {
        let (test, hidden) = match &self.data {
            Data::Quadratic { .. } => return None,
            Data::Logistic { test, .. } => (test, None),
            Data::Mlp { test, hidden, .. } => (test, Some(*hidden)),
        };
        let score = |x: &[f64]| match hidden {
            None => math::dot(theta, x),
            Some(h) => mlp_forward(theta, h, x).0,
        };
        let hits = test.x.iter().zip(&test.y).filter(|(x, &y)| (score(x) > 0.0) == (y > 0.5)).count();
        Some(hits as f64 / test.x.len().max(1) as f64)
    }

    /// `E‖g_b − ∇F_k‖²` for a size-`b` minibatch drawn with replacement
    /// (zero for full-batch steps, `b = 0` or `b >= n`).
    pub fn minibatch_variance(&self, k: usize, theta: &[f64], b: usize) -> f64 {
        let n = self.shard_len(k);
        if b == 0 || b >= n {
            return 0.0;
        }
        let mut full = vec![0.0; self.dim];
        self.local_loss_grad(k, theta, &mut full);
        let mut g = vec![0.0; self.dim];
        let mut acc = 0.0;
        for j in 0..n {
            g.iter_mut().for_each(|x| *x = 0.0);
            self.accumulate_sample(k, j, theta, 1.0, &mut g);
            acc += math::dist_sq(&g, &full);
        }
        let per_sample = acc / n as f64;
        per_sample / b as f64
    }
}

fn quadratic(spec: &QuadraticSpec, shards: &[usize], rng: &mut SimRng) -> Result<Task> {
    let d = spec.dim;
    if d == 0 {
        return Err(invalid("dim", "must be positive"));
    }
    if !(spec.mu > 0.0 && spec.smoothness >= spec.mu) {
        return Err(invalid("mu", "need 0 < mu <= smoothness"));
    }
    if !(0.0..=0.45).contains(&spec.heterogeneity) {
        return Err(invalid("heterogeneity", "must lie in [0, 0.45]"));
    }
    let k = shards.len();
    let total: usize = shards.iter().sum();
    let weights: Vec<f64> = shards.iter().map(|&b| b as f64 / total as f64).collect();
    let target: Vec<f64> = (0..d)
        .map(|j| if d == 1 { spec.mu } else { spec.mu + (spec.smoothness - spec.mu) * j as f64 / (d - 1) as f64 })
        .collect();
    let q = linalg::random_orthogonal(d, rng);
    // Perturbations with zero weighted mean keep the aggregate spectrum at `target`.
    let raw: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).collect();
    let mean: Vec<f64> = (0..d).map(|j| (0..k).map(|i| weights[i] * raw[i][j]).sum()).collect();
    let center: Vec<f64> = (0..d).map(|_| rng.normal() * spec.center_scale).collect();
    let mut devices = Vec::with_capacity(k);
    for i in 0..k {
        let spectrum: Vec<f64> = (0..d).map(|j| target[j] * (1.0 + spec.heterogeneity * (raw[i][j] - mean[j]))).collect();
        let hessian = linalg::spectral_compose(&q, &spectrum);
        let c: Vec<f64> = center.iter().map(|x| x + spec.center_spread * rng.normal()).collect();
        let samples: Vec<Vec<f64>> =
            (0..shards[i]).map(|_| c.iter().map(|x| x + spec.sample_noise * rng.normal()).collect()).collect();
        let mut m = vec![0.0; d];
        for s in &samples {
            for (a, b) in m.iter_mut().zip(s) {
                *a += b / samples.len() as f64;
            }
        }
        devices.push(QuadDevice { hessian, samples, mean: m });
    }
    let mut agg = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    for (dev, &w) in devices.iter().zip(&weights) {
        for (a, h) in agg.iter_mut().zip(&dev.hessian) {
            *a += w * h;
        }
        linalg::matvec(&dev.hessian, &dev.mean, &mut tmp);
        for (r, t) in rhs.iter_mut().zip(&tmp) {
            *r += w * t;
        }
    }
    let optimum = linalg::solve(&agg, &rhs)?;
    let ev = linalg::sym_eigenvalues(&agg, d);
    let mut task = Task {
        dim: d,
        shard_sizes: shards.to_vec(),
        data: Data::Quadratic { devices, optimum: optimum.clone(), f_star: 0.0, mu: ev[0], l: ev[d - 1] },
    };
    let f_star = task.global_loss(&optimum);
    if let Data::Quadratic { f_star: fs, .. } = &mut task.data {
        *fs = f_star;
    }
    Ok(task)
}

fn logistic(spec: &LogisticSpec, shards: &[usize], rng: &mut SimRng) -> Result<Task> {
    let d = spec.dim;
    if d < 2 {
        return Err(invalid("dim", "need at least one feature plus the bias"));
    }
    let w_true: Vec<f64> = (0..d).map(|_| rng.normal() * spec.signal / math::sqrt(d as f64)).collect();
    let draw = |rng: &mut SimRng, n: usize, shift: &[f64]| {
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v: Vec<f64> = shift.iter().map(|s| s + rng.normal()).collect();
            v.push(1.0);
            let p = math::sigmoid(math::dot(&w_true, &v));
            y.push(if rng.bernoulli(p) { 1.0 } else { 0.0 });
            x.push(v);
        }
        Labeled { x, y }
    };
    let mut out = Vec::with_capacity(shards.len());
    for &b in shards {
        let shift: Vec<f64> = (0..d - 1).map(|_| rng.normal() * spec.heterogeneity).collect();
        out.push(draw(rng, b, &shift));
    }
    let test = draw(rng, spec.test_samples.max(1), &vec![0.0; d - 1]);
    Ok(Task { dim: d, shard_sizes: shards.to_vec(), data: Data::Logistic { shards: out, test, reg: spec.reg } })
}

fn two_moons(rng: &mut SimRng, n: usize, noise: f64) -> Labeled {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.uniform() * core::f64::consts::PI;
        let label = rng.bernoulli(0.5);
        let (a, b) = if label { (1.0 - math::cos(t), 0.5 - math::sin(t)) } else { (math::cos(t), math::sin(t)) };
        x.push(vec![a - 0.5 + noise * rng.normal(), 2.0 * (b - 0.25) + noise * rng.normal()]);
        y.push(if label { 1.0 } else { 0.0 });
    }
    Labeled { x, y }
}

fn mlp(spec: &MlpSpec, shards: &[usize], rng: &mut SimRng) -> Result<Task> {
    if spec.hidden == 0 || spec.hidden > 64 {
        return Err(invalid("hidden", "must lie in 1..=64"));
    }
    let out = shards.iter().map(|&b| two_moons(rng, b, spec.noise)).collect();
    let test = two_moons(rng, spec.test_samples.max(1), spec.noise);
    Ok(Task {
        dim: 4 * spec.hidden + 1,
        shard_sizes: shards.to_vec(),
        data: Data::Mlp { shards: out, test, hidden: spec.hidden, reg: spec.reg },
    })
}

/// Parameter layout: `W1 (h×2) | b1 (h) | w2 (h) | b2`. Returns `(logit, hidden activations)`.
fn mlp_forward(theta: &[f64], h: usize, x: &[f64]) -> (f64, Vec<f64>) {
    let (w1, rest) = theta.split_at(2 * h);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(h);
    let act: Vec<f64> = (0..h).map(|i| math::tanh(w1[2 * i] * x[0] + w1[2 * i + 1] * x[1] + b1[i])).collect();
    (math::dot(w2, &act) + b2[0], act)
}

fn mlp_sample(theta: &[f64], h: usize, reg: f64, x: &[f64], y: f64, w: f64, out: &mut [f64]) -> f64 {
    let (z, act) = mlp_forward(theta, h, x);
    let dz = math::sigmoid(z) - y;
    for i in 0..h {
        let w2 = theta[3 * h + i];
        let da = dz * w2 * (1.0 - act[i] * act[i]);
        out[2 * i] += w * da * x[0];
        out[2 * i + 1] += w * da * x[1];
        out[2 * h + i] += w * da;
        out[3 * h + i] += w * dz * act[i];
    }
    out[4 * h] += w * dz;
    for (o, t) in out.iter_mut().zip(theta) {
        *o += w * reg * t;
    }
    math::softplus(z) - y * z + 0.5 * reg * math::norm_sq(theta)
}

/// Largest Hessian eigenvalue magnitude of `F` over the given points, by power
/// iteration on finite-difference Hessian-vector products.
pub fn estimate_smoothness(task: &Task, points: &[&[f64]], iters: usize, seed: u64) -> f64 {
    let d = task.dim();
    let mut rng = SimRng::derived(seed, Stream::Probe, &[]);
    let eps = 1e-5;
    let mut best: f64 = 0.0;
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    for &p in points {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let mut lambda = 0.0;
        for _ in 0..iters {
            let nv = math::sqrt(math::norm_sq(&v));
            v.iter_mut().for_each(|x| *x /= nv);
            let plus: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
            let minus: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
            task.global_loss_grad(&plus, &mut gp);
            task.global_loss_grad(&minus, &mut gm);
            let hv: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            lambda = math::sqrt(math::norm_sq(&hv));
            v = hv;
            if lambda == 0.0 {
                break;
            }
        }
        best = best.max(lambda);
    }
    best
}
