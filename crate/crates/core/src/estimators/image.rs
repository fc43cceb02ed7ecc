//! Linear raw-RGB images: black/saturation normalization, chart masking and
//! area-averaged downsampling.

use super::EstimatorError;

/// Interleaved 16-bit RGB image as decoded from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raw16Image {
    pub width: usize,
    pub height: usize,
    /// Row-major, `3 * width * height` samples.
    pub data: Vec<u16>,
}

impl Raw16Image {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self, EstimatorError> {
        if width == 0 || height == 0 || data.len() != 3 * width * height {
            return Err(EstimatorError::BadDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Pixel rectangle `(x, y, w, h)`; used for color-chart masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Linear 3-channel image with values in `[0, 1]` and an optional exclusion
/// mask (`true` = pixel ignored by every estimator).
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
    mask: Option<Vec<bool>>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self, EstimatorError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(EstimatorError::BadDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            mask: None,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width: width.max(1),
            height: height.max(1),
            pixels,
            mask: None,
        }
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self, EstimatorError> {
        if mask.len() != self.pixels.len() {
            return Err(EstimatorError::BadDimensions {
                width: self.width,
                height: self.height,
                len: mask.len(),
            });
        }
        self.mask = Some(mask);
        Ok(self)
    }

    /// Mark every pixel inside the given rectangles as excluded. Rectangles
    /// are clipped to the image.
    pub fn mask_rects(&mut self, rects: &[Rect]) {
        if rects.is_empty() {
            return;
        }
        let (w, h) = (self.width, self.height);
        let mask = self.mask.get_or_insert_with(|| vec![false; w * h]);
        for r in rects {
            let x1 = (r.x + r.w).min(w);
            let y1 = (r.y + r.h).min(h);
            for y in r.y.min(h)..y1 {
                for x in r.x.min(w)..x1 {
                    mask[y * w + x] = true;
                }
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.pixels
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn is_masked(&self, idx: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m[idx])
    }

    pub fn unmasked_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|&&b| !b).count(),
            None => self.pixels.len(),
        }
    }

    /// Unmasked pixels in row-major order.
    pub fn unmasked(&self) -> impl Iterator<Item = &[f64; 3]> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(move |(i, _)| !self.is_masked(*i))
            .map(|(_, p)| p)
    }

    /// Multiply every channel value by `alpha` (exposure change).
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.pixels {
            for c in p.iter_mut() {
                *c *= alpha;
            }
        }
        out
    }

    /// Rotate by 90 degrees counter-clockwise.
    pub fn rotated90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        // New image is h wide and w tall; new (xn, yn) reads old (w - 1 - yn, xn).
        let src = move |xn: usize, yn: usize| xn * w + (w - 1 - yn);
        let pixels = (0..w)
            .flat_map(|yn| (0..h).map(move |xn| (xn, yn)))
            .map(|(xn, yn)| self.pixels[src(xn, yn)])
            .collect();
        let mask = self.mask.as_ref().map(|m| {
            (0..w)
                .flat_map(|yn| (0..h).map(move |xn| (xn, yn)))
                .map(|(xn, yn)| m[src(xn, yn)])
                .collect()
        });
        Self {
            width: h,
            height: w,
            pixels,
            mask,
        }
    }
}

/// Map 16-bit sensor values to `[0, 1]` using per-channel black and
/// saturation levels.
pub fn normalize_raw(
    raw: &Raw16Image,
    black: [u32; 3],
    saturation: [u32; 3],
) -> Result<RawImage, EstimatorError> {
    for c in 0..3 {
        if saturation[c] <= black[c] {
            return Err(EstimatorError::BadLevels {
                channel: c,
                black: black[c],
                saturation: saturation[c],
            });
        }
    }
    let range = [0, 1, 2].map(|c| f64::from(saturation[c] - black[c]));
    let pixels = raw
        .data
        .chunks_exact(3)
        .map(|px| {
            [0, 1, 2].map(|c| ((f64::from(px[c]) - f64::from(black[c])) / range[c]).clamp(0.0, 1.0))
        })
        .collect();
    RawImage::new(raw.width, raw.height, pixels)
}

/// Source-pixel overlap weights for each output index along one axis.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|j| {
                    let w = (hi.min((j + 1) as f64) - lo.max(j as f64)).max(0.0);
                    (w > 0.0).then_some((j, w))
                })
                .collect()
        })
        .collect()
}

/// Area-averaged (box filter) resize. Masked source pixels do not
/// contribute; an output pixel whose whole footprint is masked is masked.
pub fn downsample(
    img: &RawImage,
    target_w: usize,
    target_h: usize,
) -> Result<RawImage, EstimatorError> {
    if target_w == 0 || target_h == 0 {
        return Err(EstimatorError::BadDimensions {
            width: target_w,
            height: target_h,
            len: 0,
        });
    }
    let wx = axis_weights(img.width, target_w);
    let wy = axis_weights(img.height, target_h);
    let mut pixels = Vec::with_capacity(target_w * target_h);
    let mut mask = Vec::with_capacity(target_w * target_h);
    for row in &wy {
        for col in &wx {
            let mut acc = [0.0f64; 3];
            let mut wsum = 0.0;
            for &(sy, fy) in row {
                for &(sx, fx) in col {
                    let idx = sy * img.width + sx;
                    if img.is_masked(idx) {
                        continue;
                    }
                    let w = fy * fx;
                    let p = img.pixels[idx];
                    for c in 0..3 {
                        acc[c] += w * p[c];
                    }
                    wsum += w;
                }
            }
            if wsum > 0.0 {
                pixels.push(acc.map(|v| v / wsum));
                mask.push(false);
            } else {
                pixels.push([0.0; 3]);
                mask.push(true);
            }
        }
    }
    let out = RawImage::new(target_w, target_h, pixels)?;
    if img.mask.is_some() || mask.iter().any(|&m| m) {
        out.with_mask(mask)
    } else {
        Ok(out)
    }
}
