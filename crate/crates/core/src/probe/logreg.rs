//! Multinomial logistic regression with an L2 penalty on the weights.
//!
//! Objective: mean softmax cross-entropy + (λ/2)·‖W‖², bias unpenalized.
//! Minimized by full-batch accelerated gradient descent with step 1/L, where
//! L bounds the Hessian via the top eigenvalue of the feature Gram matrix,
//! and momentum restarts whenever the step and the gradient disagree.

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    classes: usize,
    dim: usize,
    /// `[classes, dim]`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: LogisticRegression,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the Euclidean norm of the gradient.
    pub tolerance: f64,
}

impl LogisticRegression {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        LogisticRegression {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Most probable class; ties go to the smaller index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.classes];
        self.logits(x, &mut z);
        let mut best = 0;
        for c in 1..self.classes {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        if x.is_empty() {
            return 0.0;
        }
        let correct = x.iter().zip(y).filter(|(xi, &yi)| self.predict(xi) == yi).count();
        correct as f64 / x.len() as f64
    }

    /// Penalized objective and its gradient (weights then bias).
    pub fn objective(&self, x: &[Vec<f64>], y: &[usize], l2: f64) -> (f64, Vec<f64>) {
        let (k, d) = (self.classes, self.dim);
        let n = x.len() as f64;
        let mut grad = vec![0.0; k * d + k];
        let mut loss = 0.0;
        let mut z = vec![0.0; k];
        for (xi, &yi) in x.iter().zip(y) {
            self.logits(xi, &mut z);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            loss += max + sum.ln() - z[yi];
            for c in 0..k {
                let p = (z[c] - max).exp() / sum;
                let r = (p - if c == yi { 1.0 } else { 0.0 }) / n;
                for (g, &v) in grad[c * d..(c + 1) * d].iter_mut().zip(xi) {
                    *g += r * v;
                }
                grad[k * d + c] += r;
            }
        }
        let mut objective = loss / n;
        for (g, &w) in grad[..k * d].iter_mut().zip(&self.weights) {
            *g += l2 * w;
            objective += 0.5 * l2 * w * w;
        }
        (objective, grad)
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let kd = self.classes * self.dim;
        self.weights.copy_from_slice(&p[..kd]);
        self.bias.copy_from_slice(&p[kd..]);
    }
}

/// Largest eigenvalue of `(1/N)·Σ x̃x̃ᵀ` with `x̃ = [x; 1]`, by power iteration.
fn gram_top_eigenvalue(x: &[Vec<f64>]) -> f64 {
    let d = x.first().map_or(0, Vec::len) + 1;
    let n = x.len().max(1) as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut next = vec![0.0; d];
        for xi in x {
            let dot = xi.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d - 1];
            for (nj, &xj) in next.iter_mut().zip(xi) {
                *nj += dot * xj / n;
            }
            next[d - 1] += dot / n;
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - lambda).abs() <= 1e-9 * norm;
        lambda = norm;
        v = next.into_iter().map(|a| a / norm).collect();
        if converged {
            break;
        }
    }
    lambda
}

/// Fits a `classes`-way model to rows `x` with labels `y`.
pub fn fit(x: &[Vec<f64>], y: &[usize], classes: usize, l2: f64, opts: FitOptions) -> FitOutcome {
    assert_eq!(x.len(), y.len());
    let dim = x.first().map_or(0, Vec::len);
    let mut model = LogisticRegression::zeros(classes, dim);
    // Softmax cross-entropy curvature is at most 1/2 per unit feature scale;
    // the 1.05 margin covers power-iteration error.
    let lipschitz = 0.5 * gram_top_eigenvalue(x) * 1.05 + l2;
    let step = 1.0 / lipschitz.max(1e-12);

    let mut current = model.params();
    let mut probe = current.clone();
    let mut momentum = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;
    let mut objective;
    loop {
        model.set_params(&probe);
        let (obj, grad) = model.objective(x, y, l2);
        objective = obj;
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < opts.tolerance {
            converged = true;
            current = probe.clone();
            break;
        }
        if iterations == opts.max_iterations {
            break;
        }
        iterations += 1;
        let next: Vec<f64> = probe.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
        let agree: f64 = grad.iter().zip(next.iter().zip(&current)).map(|(g, (a, b))| g * (a - b)).sum();
        let next_momentum = if agree > 0.0 {
            1.0
        } else {
            (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0
        };
        let beta = if agree > 0.0 { 0.0 } else { (momentum - 1.0) / next_momentum };
        probe = next.iter().zip(&current).map(|(a, b)| a + beta * (a - b)).collect();
        current = next;
        momentum = next_momentum;
    }
    model.set_params(&current);
    if !converged {
        objective = model.objective(x, y, l2).0;
    }
    FitOutcome {
        model,
        objective,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const OPTS: FitOptions = FitOptions {
        max_iterations: 20_000,
        tolerance: 1e-9,
    };

    fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let y = i % 2;
                let c = if y == 1 { sep } else { -sep };
                (vec![c + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], y)
            })
            .unzip()
    }

    /// Binary logistic regression by Newton's method. With two classes the
    /// multinomial optimum has w₁ = −w₀ = v/2, so its penalty equals
    /// (λ/4)·‖v‖² in terms of the binary weight vector v.
    fn newton_binary(x: &[Vec<f64>], y: &[usize], l2: f64) -> f64 {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut theta = vec![0.0; d + 1];
        let obj = |theta: &[f64]| {
            let mut s = 0.0;
            for (xi, &yi) in x.iter().zip(y) {
                let m = theta[d] + xi.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
                let sign = if yi == 1 { 1.0 } else { -1.0 };
                s += (1.0 + (-sign * m).exp()).ln();
            }
            s / n + 0.25 * l2 * theta[..d].iter().map(|v| v * v).sum::<f64>()
        };
        for _ in 0..50 {
            let mut g = vec![0.0; d + 1];
            let mut h = vec![vec![0.0; d + 1]; d + 1];
            for (xi, &yi) in x.iter().zip(y) {
                let mut xt = xi.clone();
                xt.push(1.0);
                let m: f64 = xt.iter().zip(&theta).map(|(a, b)| a * b).sum();
                let p = 1.0 / (1.0 + (-m).exp());
                for a in 0..=d {
                    g[a] += (p - yi as f64) * xt[a] / n;
                    for b in 0..=d {
                        h[a][b] += p * (1.0 - p) * xt[a] * xt[b] / n;
                    }
                }
            }
            for a in 0..d {
                g[a] += 0.5 * l2 * theta[a];
                h[a][a] += 0.5 * l2;
            }
            // solve h·δ = g by Gaussian elimination
            let m = d + 1;
            let mut aug: Vec<Vec<f64>> = h.iter().zip(&g).map(|(r, &gv)| {
                let mut r = r.clone();
                r.push(gv);
                r
            }).collect();
            for col in 0..m {
                let piv = (col..m).max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs())).unwrap();
                aug.swap(col, piv);
                for r in 0..m {
                    if r != col {
                        let f = aug[r][col] / aug[col][col];
                        for c in col..=m {
                            aug[r][c] -= f * aug[col][c];
                        }
                    }
                }
            }
            for a in 0..m {
                theta[a] -= aug[a][m] / aug[a][a];
            }
        }
        obj(&theta)
    }

    #[test]
    fn matches_newton_on_small_convex_problems() {
        for (seed, l2) in [(1, 0.1), (2, 0.01), (3, 1.0)] {
            let (x, y) = blobs(60, 0.5, seed);
            let fitted = fit(&x, &y, 2, l2, OPTS);
            assert!(fitted.converged);
            let oracle = newton_binary(&x, &y, l2);
            assert!((fitted.objective - oracle).abs() < 1e-6, "{} vs {oracle}", fitted.objective);
        }
    }

    #[test]
    fn separable_data_is_classified_perfectly() {
        let (x, y) = blobs(100, 3.0, 7);
        let fitted = fit(&x, &y, 2, 1e-4, FitOptions { max_iterations: 2000, tolerance: 1e-6 });
        assert_eq!(fitted.model.accuracy(&x, &y), 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = blobs(20, 0.3, 4);
        let y: Vec<usize> = y.iter().enumerate().map(|(i, &c)| if i % 5 == 0 { 2 } else { c }).collect();
        let mut m = LogisticRegression::zeros(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m.set_params(&p);
        let (_, g) = m.objective(&x, &y, 0.3);
        for i in 0..9 {
            let mut hi = p.clone();
            hi[i] += 1e-6;
            let mut lo = p.clone();
            lo[i] -= 1e-6;
            m.set_params(&hi);
            let fh = m.objective(&x, &y, 0.3).0;
            m.set_params(&lo);
            let fl = m.objective(&x, &y, 0.3).0;
            assert!(((fh - fl) / 2e-6 - g[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn weight_norm_shrinks_with_penalty() {
        let (x, y) = blobs(80, 0.4, 9);
        let mut prev = f64::INFINITY;
        for l2 in [1e-3, 1e-2, 1e-1, 1.0] {
            let norm = fit(&x, &y, 2, l2, OPTS).model.weight_norm();
            assert!(norm <= prev + 1e-9);
            prev = norm;
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let (x, y) = blobs(50, 5.0, 2);
        let out = fit(&x, &y, 2, 1e-8, FitOptions { max_iterations: 3, tolerance: 1e-12 });
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
    }
}
