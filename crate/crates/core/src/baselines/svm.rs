//! Soft-margin support vector classifiers solved by SMO with
//! maximal-violating-pair working-set selection (second-order heuristic),
//! one-vs-rest for more than two classes.

use super::features::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvcConfig {
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvcConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// `1 / (n_features · var(X))`, or 1 for constant data.
pub fn default_gamma(x: &FeatureMatrix) -> f64 {
    let v = x.variance() * x.n_features() as f64;
    if v > 0.0 {
        1.0 / v
    } else {
        1.0
    }
}

/// One binary problem: `f(x) = Σ αᵢ yᵢ k(xᵢ, x) − ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvc {
    pub kernel: Kernel,
    /// Support vectors with their `αᵢ yᵢ`.
    pub support: Vec<(Vec<f64>, f64)>,
    pub rho: f64,
    /// Collapsed weights for the linear kernel.
    weights: Option<Vec<f64>>,
    pub iterations: usize,
}

impl BinarySvc {
    pub fn decision(&self, x: &[f64]) -> f64 {
        if let Some(w) = &self.weights {
            return w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.rho;
        }
        self.support
            .iter()
            .map(|(sv, coef)| coef * self.kernel.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Svc {
    /// One machine per class (class vs rest); `None` for classes without
    /// training samples, which are never predicted.
    pub machines: Vec<Option<BinarySvc>>,
}

impl Svc {
    /// Argmax of the one-vs-rest decision values; ties go low.
    pub fn predict(&self, x: &[f64]) -> usize {
        let present: Vec<usize> = (0..self.machines.len()).filter(|&k| self.machines[k].is_some()).collect();
        if present.len() == 1 {
            return present[0];
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for k in present {
            let d = self.machines[k].as_ref().expect("present").decision(x);
            if d > best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    pub fn predict_all(&self, x: &FeatureMatrix) -> Vec<usize> {
        (0..x.n_samples()).map(|i| self.predict(x.row(i))).collect()
    }

    pub fn decision_values(&self, x: &[f64]) -> Vec<Option<f64>> {
        self.machines.iter().map(|m| m.as_ref().map(|m| m.decision(x))).collect()
    }
}

/// SMO solves deterministically, so `_seed` does not change the result; it is
/// accepted to keep every trainer's signature uniform.
pub fn train_svc_linear(x: &FeatureMatrix, cfg: &SvcConfig, _seed: u64) -> Result<Svc> {
    train_svc(x, Kernel::Linear, cfg)
}

pub fn train_svc_rbf(x: &FeatureMatrix, gamma: f64, cfg: &SvcConfig, _seed: u64) -> Result<Svc> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma {gamma} must be > 0")));
    }
    train_svc(x, Kernel::Rbf { gamma }, cfg)
}

pub fn train_svc(x: &FeatureMatrix, kernel: Kernel, cfg: &SvcConfig) -> Result<Svc> {
    if x.n_samples() == 0 {
        return Err(Error::EmptyData);
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::Config(format!("C {} must be > 0", cfg.c)));
    }
    let gram = Gram::new(x, kernel);
    let n_classes = x.n_classes();
    let present: Vec<usize> = (0..n_classes).filter(|k| x.labels().contains(k)).collect();
    let mut machines = vec![None; n_classes];
    if present.len() == 1 {
        machines[present[0]] = Some(BinarySvc {
            kernel,
            support: Vec::new(),
            rho: -1.0,
            weights: None,
            iterations: 0,
        });
        return Ok(Svc { machines });
    }
    for &k in &present {
        let y: Vec<f64> = x.labels().iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let sol = solve(&gram, &y, cfg)?;
        machines[k] = Some(build(x, kernel, &y, &sol));
    }
    Ok(Svc { machines })
}

/// Binary problem with labels `y ∈ {−1, +1}`.
pub fn train_binary(x: &FeatureMatrix, y: &[f64], kernel: Kernel, cfg: &SvcConfig) -> Result<(BinarySvc, Vec<f64>)> {
    if y.len() != x.n_samples() {
        return Err(Error::LengthMismatch(y.len(), x.n_samples()));
    }
    let gram = Gram::new(x, kernel);
    let sol = solve(&gram, y, cfg)?;
    Ok((build(x, kernel, y, &sol), sol.alpha))
}

/// Largest violation of the per-sample KKT conditions by the trained
/// binary machine; zero means every condition holds exactly.
pub fn kkt_violation(m: &BinarySvc, alpha: &[f64], x: &FeatureMatrix, y: &[f64], c: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.n_samples() {
        let margin = y[i] * m.decision(x.row(i));
        let v = if alpha[i] <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha[i] >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

fn build(x: &FeatureMatrix, kernel: Kernel, y: &[f64], sol: &Solution) -> BinarySvc {
    let support: Vec<(Vec<f64>, f64)> = (0..x.n_samples())
        .filter(|&i| sol.alpha[i] > 0.0)
        .map(|i| (x.row(i).to_vec(), sol.alpha[i] * y[i]))
        .collect();
    let weights = (kernel == Kernel::Linear).then(|| {
        let mut w = vec![0.0; x.n_features()];
        for (sv, coef) in &support {
            for (wi, v) in w.iter_mut().zip(sv) {
                *wi += coef * v;
            }
        }
        w
    });
    BinarySvc {
        kernel,
        support,
        rho: sol.rho,
        weights,
        iterations: sol.iterations,
    }
}

/// Kernel matrix, precomputed when it fits, otherwise evaluated per row.
enum Gram<'a> {
    Full { k: Vec<f64>, n: usize },
    Lazy { x: &'a FeatureMatrix, kernel: Kernel, diag: Vec<f64> },
}

const FULL_GRAM_LIMIT: usize = 4000;

impl<'a> Gram<'a> {
    fn new(x: &'a FeatureMatrix, kernel: Kernel) -> Self {
        let n = x.n_samples();
        if n <= FULL_GRAM_LIMIT {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval(x.row(i), x.row(j));
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
            }
            Gram::Full { k, n }
        } else {
            let diag = (0..n).map(|i| kernel.eval(x.row(i), x.row(i))).collect();
            Gram::Lazy { x, kernel, diag }
        }
    }

    fn n(&self) -> usize {
        match self {
            Gram::Full { n, .. } => *n,
            Gram::Lazy { diag, .. } => diag.len(),
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match self {
            Gram::Full { k, n } => k[i * n + i],
            Gram::Lazy { diag, .. } => diag[i],
        }
    }

    fn row(&self, i: usize) -> std::borrow::Cow<'_, [f64]> {
        match self {
            Gram::Full { k, n } => std::borrow::Cow::Borrowed(&k[i * n..(i + 1) * n]),
            Gram::Lazy { x, kernel, diag } => {
                std::borrow::Cow::Owned((0..diag.len()).map(|j| kernel.eval(x.row(i), x.row(j))).collect())
            }
        }
    }
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

const TAU: f64 = 1e-12;

/// Dual: min ½ αᵀQα − eᵀα  s.t. 0 ≤ α ≤ C, yᵀα = 0, with Qᵢⱼ = yᵢyⱼKᵢⱼ.
fn solve(gram: &Gram<'_>, y: &[f64], cfg: &SvcConfig) -> Result<Solution> {
    let n = gram.n();
    let c = cfg.c;
    let mut alpha = vec![0.0; n];
    // gradient Qα − e
    let mut g = vec![-1.0; n];
    let mut iterations = 0;
    loop {
        // select i: maximal −yₜ∇ₜ over I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && -y[t] * g[t] >= gmax {
                gmax = -y[t] * g[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let ki = gram.row(i);
        // select j over I_low by second-order gain
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if !low {
                continue;
            }
            let v = y[t] * g[t];
            gmax2 = gmax2.max(v);
            let grad_diff = gmax + v;
            if grad_diff > 0.0 {
                let quad = (gram.diag(i) + gram.diag(t) - 2.0 * ki[t]).max(TAU);
                let obj = -grad_diff * grad_diff / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel else { break };
        if gmax + gmax2 < cfg.tol {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(Error::NonConvergence { passes: iterations });
        }
        iterations += 1;

        let kj = gram.row(j);
        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        let (mut ai, mut aj) = (ai_old, aj_old);
        if y[i] != y[j] {
            let quad = (gram.diag(i) + gram.diag(j) + 2.0 * qij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (gram.diag(i) + gram.diag(j) - 2.0 * qij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (dai, daj) = (ai - ai_old, aj - aj_old);
        for t in 0..n {
            g[t] += y[t] * (y[i] * ki[t] * dai + y[j] * kj[t] * daj);
        }
    }

    // ρ: mean of yᵢ∇ᵢ over free vectors, else midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(Solution {
        alpha,
        rho,
        iterations,
    })
}
