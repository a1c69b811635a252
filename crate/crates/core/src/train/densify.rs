//! Clone-and-prune densification.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{box_constrain, logistic_from_local};
use crate::math::{quat_to_matrix, sigmoid, Vec3};
use crate::scene::SceneGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensifyConfig {
    /// Mean screen-space positional gradient norm above which a primitive is cloned.
    pub grad_threshold: f64,
    /// Opacity below which a primitive is removed.
    pub prune_opacity: f64,
    /// Iterations between densification passes.
    pub interval: usize,
    /// No cloning beyond this many primitives.
    pub max_primitives: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            grad_threshold: 2e-4,
            prune_opacity: 0.005,
            interval: 100,
            max_primitives: 150_000,
        }
    }
}

/// Running sums of per-primitive screen-space gradient norms.
#[derive(Debug, Clone, Default)]
pub struct GradStats {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn add(&mut self, norms: &[(usize, f64)]) {
        for &(i, g) in norms {
            self.sum[i] += g;
            self.count[i] += 1;
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }
}

/// What a densification pass did. `kept[i]` tells whether original primitive
/// `i` survived; clones are appended after the survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifyReport {
    pub kept: Vec<bool>,
    pub cloned: usize,
    pub pruned: usize,
}

/// Clones primitives whose mean positional gradient exceeds the threshold
/// (jittered by their own scale) and removes those below the opacity floor.
/// Cloning happens before pruning, so a pruned primitive is never cloned.
pub fn densify_and_prune(
    scene: &mut SceneGraph,
    stats: &GradStats,
    config: &DensifyConfig,
    rng: &mut impl Rng,
) -> DensifyReport {
    let n = scene.primitives.len();
    let kept: Vec<bool> = scene
        .primitives
        .iter()
        .map(|p| sigmoid(p.opacity_logit) >= config.prune_opacity)
        .collect();
    let pruned = kept.iter().filter(|k| !**k).count();
    let budget = config.max_primitives.saturating_sub(n - pruned);
    let mut clones = Vec::new();
    for i in 0..n {
        if clones.len() >= budget {
            break;
        }
        if !kept[i] || !(stats.mean(i) > config.grad_threshold) {
            continue;
        }
        let p = &scene.primitives[i];
        let jitter_local = Vec3::from_fn(|k, _| rng.sample::<f64, _>(StandardNormal) * p.log_scale[k].exp());
        let jitter = quat_to_matrix(&p.rotation) * jitter_local;
        let mut c = p.clone();
        c.mean = match p.object {
            None => p.mean + jitter,
            Some(k) => {
                let dims = scene.objects[k].dims;
                logistic_from_local(&(box_constrain(&p.mean, &dims) + jitter), &dims)
            }
        };
        clones.push(c);
    }
    let cloned = clones.len();
    let mut i = 0;
    scene.primitives.retain(|_| {
        i += 1;
        kept[i - 1]
    });
    scene.primitives.extend(clones);
    DensifyReport { kept, cloned, pruned }
}
