//! Adam over flat parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments for a block of parameters laid out in rows of
/// `stride` floats. Rows can be appended or removed as primitives are cloned
/// and pruned.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    stride: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    /// Per-row step counts, so rows added later get their own bias correction.
    steps: Vec<u32>,
}

impl Adam {
    pub fn new(config: AdamConfig, stride: usize, rows: usize) -> Self {
        Self {
            config,
            stride,
            m: vec![0.0; stride * rows],
            v: vec![0.0; stride * rows],
            steps: vec![0; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.steps.len()
    }

    /// One update. `lr[k]` is the learning rate of column `k` of every row.
    /// Rows with an all-zero gradient are left untouched, moments included.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        assert_eq!(lr.len(), self.stride);
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let s = self.stride;
        for (r, steps) in self.steps.iter_mut().enumerate() {
            let g = &grad[r * s..(r + 1) * s];
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            *steps += 1;
            let t = *steps as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for k in 0..s {
                let i = r * s + k;
                self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[k];
                self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[k] * g[k];
                let mh = self.m[i] / c1;
                let vh = self.v[i] / c2;
                params[i] -= lr[k] * mh / (vh.sqrt() + epsilon);
            }
        }
    }

    /// Keeps the rows where `keep` is true, then appends `added` fresh rows.
    pub fn retain_and_grow(&mut self, keep: &[bool], added: usize) {
        assert_eq!(keep.len(), self.rows());
        let s = self.stride;
        let mut w = 0;
        for (r, &k) in keep.iter().enumerate() {
            if k {
                self.m.copy_within(r * s..(r + 1) * s, w * s);
                self.v.copy_within(r * s..(r + 1) * s, w * s);
                self.steps[w] = self.steps[r];
                w += 1;
            }
        }
        self.m.truncate(w * s);
        self.v.truncate(w * s);
        self.steps.truncate(w);
        self.m.resize((w + added) * s, 0.0);
        self.v.resize((w + added) * s, 0.0);
        self.steps.resize(w + added, 0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let mut opt = Adam::new(AdamConfig::default(), 2, 1);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[0.5, -3.0], &[0.1, 0.01]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.99).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Adam::new(AdamConfig::default(), 1, 1);
        let mut p = vec![5.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 2.0)];
            opt.step(&mut p, &g, &[0.05]);
        }
        assert!((p[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn retain_and_grow_keeps_surviving_moments() {
        let mut opt = Adam::new(AdamConfig::default(), 1, 3);
        let mut p = vec![0.0; 3];
        opt.step(&mut p, &[1.0, 2.0, 3.0], &[0.1]);
        let m_last = opt.m[2];
        opt.retain_and_grow(&[false, true, true], 2);
        assert_eq!(opt.rows(), 4);
        assert_eq!(opt.m[1], m_last);
        assert_eq!(opt.steps, vec![1, 1, 0, 0]);
    }
}
