use serde::{Deserialize, Serialize};

/// W×H RGB raster, row-major, channels in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: u32, height: u32, color: [f64; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width as usize * height as usize],
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    pub fn get(&self, u: u32, v: u32) -> [f64; 3] {
        self.pixels[self.index(u, v)]
    }

    pub fn set(&mut self, u: u32, v: u32, c: [f64; 3]) {
        let i = self.index(u, v);
        self.pixels[i] = c;
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean over channels, per pixel.
    pub fn grayscale(&self) -> Vec<f64> {
        self.pixels.iter().map(|c| (c[0] + c[1] + c[2]) / 3.0).collect()
    }
}

/// Per-pixel validity mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub valid: Vec<bool>,
}

impl Mask {
    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            valid: vec![true; width as usize * height as usize],
        }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            valid: vec![false; width as usize * height as usize],
        }
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            valid: self
                .valid
                .iter()
                .zip(&other.valid)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }
}

/// Depth raster in meters with a validity mask. Valid depths are positive and finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn invalid(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            depth: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    #[inline]
    pub fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    /// Depth at a pixel when valid.
    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        let i = self.index(u, v);
        self.valid[i].then(|| self.depth[i])
    }

    /// Sets a pixel; non-positive or non-finite depths mark it invalid.
    pub fn set(&mut self, u: u32, v: u32, d: f64) {
        let i = self.index(u, v);
        self.set_index(i, d);
    }

    pub fn set_index(&mut self, i: usize, d: f64) {
        if d > 0.0 && d.is_finite() {
            self.depth[i] = d;
            self.valid[i] = true;
        } else {
            self.depth[i] = 0.0;
            self.valid[i] = false;
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            valid: self.valid.clone(),
        }
    }
}
