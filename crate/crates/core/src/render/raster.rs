//! Tile-binned alpha compositing over arbitrary sample positions.
//!
//! Samples are either the pixel grid of a view or a list of continuous image
//! positions with per-sample depth thresholds (the occlusion-limited rays of
//! inverse view warping). Splats are globally sorted by centre depth with the
//! primitive index as tie-break, then composited front to back per sample.

use rayon::prelude::*;

use super::project::{project_resolved, Domain, ProjectedGaussian, Resolved, CUTOFF_POWER};
use crate::scene::CameraView;

/// Per-sample opacity is clipped to this value.
pub const ALPHA_MAX: f64 = 0.99;
/// Compositing stops once transmittance falls below this value.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Samples whose accumulated weight `Σ αᵢTᵢ` is below this are misses / invalid depth.
pub const WEIGHT_MIN: f64 = 1e-4;
/// The Gaussian falloff is tapered to zero between this power and [`CUTOFF_POWER`].
pub const TAPER_START: f64 = 3.5;
pub const TILE_SIZE: usize = 16;

/// Where to evaluate the composited color.
#[derive(Debug, Clone)]
pub enum Samples {
    /// Every pixel `(u, v)` of a `width × height` image, no depth filter.
    Grid { width: u32, height: u32 },
    /// Continuous positions; only splats deeper than the threshold contribute.
    Points {
        positions: Vec<[f64; 2]>,
        thresholds: Vec<f64>,
    },
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Grid { width, height } => *width as usize * *height as usize,
            Samples::Points { positions, .. } => positions.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn position(&self, s: usize) -> [f64; 2] {
        match self {
            Samples::Grid { width, .. } => {
                let w = *width as usize;
                [(s % w) as f64, (s / w) as f64]
            }
            Samples::Points { positions, .. } => positions[s],
        }
    }

    #[inline]
    fn threshold(&self, s: usize) -> f64 {
        match self {
            Samples::Grid { .. } => f64::NEG_INFINITY,
            Samples::Points { thresholds, .. } => thresholds[s],
        }
    }
}

/// Composited result at one sample.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleOut {
    /// Color including the background term.
    pub color: [f64; 3],
    /// `Σ αᵢTᵢdᵢ`
    pub depth_sum: f64,
    /// `Σ αᵢTᵢ`
    pub weight: f64,
    /// Residual transmittance.
    pub transmittance: f64,
}

impl SampleOut {
    pub fn hit(&self) -> bool {
        self.weight >= WEIGHT_MIN
    }

    /// Normalized alpha-blended depth, when the sample is covered.
    pub fn depth(&self) -> Option<f64> {
        self.hit().then(|| self.depth_sum / self.weight)
    }
}

#[derive(Debug, Clone, Copy)]
struct Contribution {
    /// Position in the tile's splat list.
    local: u32,
    alpha: f64,
    /// Transmittance before this splat.
    transmittance: f64,
    /// Tapered Gaussian falloff (α = opacity · falloff before clipping).
    falloff: f64,
    clipped: bool,
}

#[derive(Debug, Default)]
struct Tile {
    splats: Vec<u32>,
    samples: Vec<u32>,
}

#[derive(Debug, Default)]
struct TileTrace {
    offsets: Vec<u32>,
    contributions: Vec<Contribution>,
}

/// Output of a rasterization pass, with the trace needed by the backward pass.
#[derive(Debug)]
pub struct Rasterized {
    /// Visible splats in compositing order.
    pub splats: Vec<ProjectedGaussian>,
    pub outputs: Vec<SampleOut>,
    pub background: [f64; 3],
    samples: Samples,
    tiles: Vec<Tile>,
    traces: Vec<TileTrace>,
}

/// Gradient of the loss w.r.t. one splat's 2D parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct SplatGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    pub depth: f64,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
        }
        self.opacity += o.opacity;
        self.depth += o.depth;
    }
}

/// Smooth taper of the footprint: 1 below [`TAPER_START`], 0 at [`CUTOFF_POWER`].
#[inline]
fn taper(power: f64) -> (f64, f64) {
    if power <= TAPER_START {
        (1.0, 0.0)
    } else if power >= CUTOFF_POWER {
        (0.0, 0.0)
    } else {
        let s = (CUTOFF_POWER - power) / (CUTOFF_POWER - TAPER_START);
        let ds_dp = -1.0 / (CUTOFF_POWER - TAPER_START);
        (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s) * ds_dp)
    }
}

/// `(falloff, d falloff / d power)` of a splat at Mahalanobis power `p`.
#[inline]
fn falloff(power: f64) -> (f64, f64) {
    let e = (-power).exp();
    let (t, dt) = taper(power);
    (e * t, e * (dt - t))
}

#[inline]
fn power_at(sp: &ProjectedGaussian, x: f64, y: f64) -> (f64, f64, f64) {
    let dx = x - sp.mean.x;
    let dy = y - sp.mean.y;
    let [a, b, c] = sp.conic;
    (0.5 * (a * dx * dx + c * dy * dy) + b * dx * dy, dx, dy)
}

struct TileGrid {
    ox: f64,
    oy: f64,
    nx: usize,
    ny: usize,
}

impl TileGrid {
    fn new(domain: &Domain) -> Self {
        let ox = domain.x0.floor();
        let oy = domain.y0.floor();
        let nx = (((domain.x1 - ox) / TILE_SIZE as f64).floor() as usize + 1).max(1);
        let ny = (((domain.y1 - oy) / TILE_SIZE as f64).floor() as usize + 1).max(1);
        Self { ox, oy, nx, ny }
    }

    fn cell(&self, v: f64, o: f64, n: usize) -> usize {
        (((v - o) / TILE_SIZE as f64).floor().max(0.0) as usize).min(n - 1)
    }

    fn range(&self, lo: f64, hi: f64, o: f64, n: usize) -> Option<(usize, usize)> {
        let t0 = ((lo - o) / TILE_SIZE as f64).floor();
        let t1 = ((hi - o) / TILE_SIZE as f64).floor();
        if t1 < 0.0 || t0 > (n - 1) as f64 {
            return None;
        }
        Some((t0.max(0.0) as usize, (t1 as usize).min(n - 1)))
    }
}

fn domain_of(samples: &Samples, view: &CameraView) -> Domain {
    match samples {
        Samples::Grid { .. } => Domain::image(view),
        Samples::Points { positions, .. } => {
            let mut d = Domain {
                x0: f64::INFINITY,
                y0: f64::INFINITY,
                x1: f64::NEG_INFINITY,
                y1: f64::NEG_INFINITY,
            };
            for p in positions {
                d.x0 = d.x0.min(p[0]);
                d.y0 = d.y0.min(p[1]);
                d.x1 = d.x1.max(p[0]);
                d.y1 = d.y1.max(p[1]);
            }
            if positions.is_empty() {
                Domain { x0: 0.0, y0: 0.0, x1: 0.0, y1: 0.0 }
            } else {
                d
            }
        }
    }
}

/// Projects, sorts, bins and composites. `trace` keeps per-sample
/// contributions for [`Rasterized::backward`].
pub fn rasterize(
    resolved: &[Option<Resolved>],
    view: &CameraView,
    samples: Samples,
    background: [f64; 3],
    trace: bool,
) -> Rasterized {
    let domain = domain_of(&samples, view);
    let mut splats: Vec<ProjectedGaussian> = resolved
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().and_then(|r| project_resolved(i, r, view, &domain)))
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

    let grid = TileGrid::new(&domain);
    let mut tiles: Vec<Tile> = (0..grid.nx * grid.ny).map(|_| Tile::default()).collect();
    for (slot, sp) in splats.iter().enumerate() {
        let Some((tx0, tx1)) =
            grid.range(sp.mean.x - sp.extent[0], sp.mean.x + sp.extent[0], grid.ox, grid.nx)
        else {
            continue;
        };
        let Some((ty0, ty1)) =
            grid.range(sp.mean.y - sp.extent[1], sp.mean.y + sp.extent[1], grid.oy, grid.ny)
        else {
            continue;
        };
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                tiles[ty * grid.nx + tx].splats.push(slot as u32);
            }
        }
    }
    for s in 0..samples.len() {
        let [x, y] = samples.position(s);
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let tx = grid.cell(x, grid.ox, grid.nx);
        let ty = grid.cell(y, grid.oy, grid.ny);
        tiles[ty * grid.nx + tx].samples.push(s as u32);
    }

    let per_tile: Vec<(Vec<SampleOut>, TileTrace)> = tiles
        .par_iter()
        .map(|tile| composite_tile(tile, &splats, &samples, background, trace))
        .collect();

    let empty = SampleOut {
        color: background,
        depth_sum: 0.0,
        weight: 0.0,
        transmittance: 1.0,
    };
    let mut outputs = vec![empty; samples.len()];
    let mut traces = Vec::with_capacity(if trace { tiles.len() } else { 0 });
    for (tile, (outs, tr)) in tiles.iter().zip(per_tile) {
        for (s, o) in tile.samples.iter().zip(outs) {
            outputs[*s as usize] = o;
        }
        if trace {
            traces.push(tr);
        }
    }
    Rasterized {
        splats,
        outputs,
        background,
        samples,
        tiles,
        traces,
    }
}

fn composite_tile(
    tile: &Tile,
    splats: &[ProjectedGaussian],
    samples: &Samples,
    background: [f64; 3],
    trace: bool,
) -> (Vec<SampleOut>, TileTrace) {
    let mut outs = Vec::with_capacity(tile.samples.len());
    let mut tr = TileTrace::default();
    if trace {
        tr.offsets.reserve(tile.samples.len() + 1);
        tr.offsets.push(0);
    }
    for &s in &tile.samples {
        let s = s as usize;
        let [x, y] = samples.position(s);
        let threshold = samples.threshold(s);
        let mut t = 1.0;
        let mut color = [0.0; 3];
        let mut depth_sum = 0.0;
        let mut weight = 0.0;
        for (local, &slot) in tile.splats.iter().enumerate() {
            let sp = &splats[slot as usize];
            if sp.depth <= threshold {
                continue;
            }
            if (x - sp.mean.x).abs() > sp.extent[0] || (y - sp.mean.y).abs() > sp.extent[1] {
                continue;
            }
            let (power, _, _) = power_at(sp, x, y);
            if !(power < CUTOFF_POWER) {
                continue;
            }
            let (f, _) = falloff(power.max(0.0));
            let mut alpha = sp.opacity * f;
            let clipped = alpha > ALPHA_MAX;
            if clipped {
                alpha = ALPHA_MAX;
            }
            if alpha <= 0.0 {
                continue;
            }
            let w = alpha * t;
            for c in 0..3 {
                color[c] += w * sp.color[c];
            }
            depth_sum += w * sp.depth;
            weight += w;
            if trace {
                tr.contributions.push(Contribution {
                    local: local as u32,
                    alpha,
                    transmittance: t,
                    falloff: f,
                    clipped,
                });
            }
            t *= 1.0 - alpha;
            if t < TRANSMITTANCE_MIN {
                break;
            }
        }
        for c in 0..3 {
            color[c] += t * background[c];
        }
        outs.push(SampleOut {
            color,
            depth_sum,
            weight,
            transmittance: t,
        });
        if trace {
            tr.offsets.push(tr.contributions.len() as u32);
        }
    }
    (outs, tr)
}

impl Rasterized {
    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn has_trace(&self) -> bool {
        !self.traces.is_empty() || self.tiles.is_empty()
    }

    /// Back-propagates per-sample gradients of the color and of the normalized
    /// depth to the splats. Returns one [`SplatGrad`] per entry of `splats`.
    ///
    /// `grad_depth` entries of samples without valid depth are ignored.
    pub fn backward(&self, grad_color: &[[f64; 3]], grad_depth: Option<&[f64]>) -> Vec<SplatGrad> {
        assert!(self.has_trace(), "backward needs a traced rasterization");
        assert_eq!(grad_color.len(), self.outputs.len());
        let per_tile: Vec<Vec<SplatGrad>> = self
            .tiles
            .par_iter()
            .zip(self.traces.par_iter())
            .map(|(tile, tr)| self.backward_tile(tile, tr, grad_color, grad_depth))
            .collect();
        let mut grads = vec![SplatGrad::default(); self.splats.len()];
        for (tile, local) in self.tiles.iter().zip(per_tile) {
            for (slot, g) in tile.splats.iter().zip(&local) {
                grads[*slot as usize].add(g);
            }
        }
        grads
    }

    fn backward_tile(
        &self,
        tile: &Tile,
        tr: &TileTrace,
        grad_color: &[[f64; 3]],
        grad_depth: Option<&[f64]>,
    ) -> Vec<SplatGrad> {
        let mut local = vec![SplatGrad::default(); tile.splats.len()];
        for (k, &s) in tile.samples.iter().enumerate() {
            let s = s as usize;
            let contribs = &tr.contributions[tr.offsets[k] as usize..tr.offsets[k + 1] as usize];
            if contribs.is_empty() {
                continue;
            }
            let out = &self.outputs[s];
            let gc = grad_color[s];
            let depth = out.depth();
            let gd = match (grad_depth, depth) {
                (Some(g), Some(_)) => g[s],
                _ => 0.0,
            };
            let has_color = gc.iter().any(|v| *v != 0.0);
            if !has_color && gd == 0.0 {
                continue;
            }
            let d_norm = depth.unwrap_or(0.0);
            let inv_w = if out.weight > 0.0 { 1.0 / out.weight } else { 0.0 };
            let [x, y] = self.samples.position(s);

            let mut suffix_c = [
                out.transmittance * self.background[0],
                out.transmittance * self.background[1],
                out.transmittance * self.background[2],
            ];
            let mut suffix_d = 0.0;
            let mut suffix_w = 0.0;
            for c in contribs.iter().rev() {
                let sp = &self.splats[tile.splats[c.local as usize] as usize];
                let g = &mut local[c.local as usize];
                let w = c.alpha * c.transmittance;
                let inv = 1.0 / (1.0 - c.alpha);

                let mut dl_dalpha = 0.0;
                for ch in 0..3 {
                    g.color[ch] += gc[ch] * w;
                    dl_dalpha += gc[ch] * (sp.color[ch] * c.transmittance - suffix_c[ch] * inv);
                }
                if gd != 0.0 {
                    g.depth += gd * w * inv_w;
                    let dn = sp.depth * c.transmittance - suffix_d * inv;
                    let dw = c.transmittance - suffix_w * inv;
                    dl_dalpha += gd * (dn - d_norm * dw) * inv_w;
                }
                for ch in 0..3 {
                    suffix_c[ch] += sp.color[ch] * w;
                }
                suffix_d += sp.depth * w;
                suffix_w += w;

                if c.clipped {
                    continue;
                }
                g.opacity += dl_dalpha * c.falloff;
                let (power, dx, dy) = power_at(sp, x, y);
                let (_, dfall) = falloff(power.max(0.0));
                let dl_dp = dl_dalpha * sp.opacity * dfall;
                let [a, b, cc] = sp.conic;
                g.mean[0] -= dl_dp * (a * dx + b * dy);
                g.mean[1] -= dl_dp * (b * dx + cc * dy);
                g.conic[0] += dl_dp * 0.5 * dx * dx;
                g.conic[1] += dl_dp * dx * dy;
                g.conic[2] += dl_dp * 0.5 * dy * dy;
            }
        }
        local
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_is_continuous_and_monotone() {
        assert_eq!(taper(0.0).0, 1.0);
        assert_eq!(taper(TAPER_START).0, 1.0);
        assert!(taper(CUTOFF_POWER - 1e-12).0 < 1e-10);
        let mut prev = 1.0;
        for i in 0..=100 {
            let p = TAPER_START + i as f64 / 100.0;
            let v = taper(p).0;
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        let h = 1e-6;
        for p in [3.6, 4.0, 4.4] {
            let fd = (falloff(p + h).0 - falloff(p - h).0) / (2.0 * h);
            assert!((fd - falloff(p).1).abs() < 1e-7);
        }
    }
}
