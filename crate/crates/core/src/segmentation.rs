//! Darkest-region segmentation.
//!
//! The lumen is the darkest part of an endoscopic frame under a co-located
//! light. [`threshold_segment`] takes the 4-connected sub-threshold component
//! holding the darkest pixel; [`slic_segment`] is the superpixel baseline
//! that returns the SLIC cluster holding the darkest pixel.

use std::collections::VecDeque;

use crate::config::PipelineConfig;
use crate::frame::Frame;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegmentError {
    #[error("frame {frame_index}: no dark region below the intensity threshold")]
    NoDarkRegion { frame_index: usize },
    #[error("mask shapes differ: {a:?} vs {b:?}")]
    Shape {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("invalid segmentation parameter: {0}")]
    InvalidParameter(String),
}

/// A binary bitmap in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Pixels outside the mask that touch it through any of their 8 neighbours.
    pub fn outer_ring(&self) -> Vec<(usize, usize)> {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut ring = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if self.get(x as usize, y as usize) {
                    continue;
                }
                let touches = NEIGHBOURS_8.iter().any(|(dx, dy)| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx >= 0 && ny >= 0 && nx < w && ny < h && self.get(nx as usize, ny as usize)
                });
                if touches {
                    ring.push((x as usize, y as usize));
                }
            }
        }
        ring
    }
}

const NEIGHBOURS_4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const NEIGHBOURS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

/// A dark region of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMask {
    pub frame_index: usize,
    pub mask: Bitmap,
    pub area_px: usize,
    pub bbox: BoundingBox,
    /// Darkest pixel inside the mask (first in row-major order on ties).
    pub anchor: (usize, usize),
}

impl SegmentMask {
    /// Wraps a non-empty bitmap; the anchor must be one of its pixels.
    pub fn from_bitmap(frame_index: usize, mask: Bitmap, anchor: (usize, usize)) -> Option<Self> {
        if anchor.0 >= mask.width() || anchor.1 >= mask.height() || !mask.get(anchor.0, anchor.1) {
            return None;
        }
        let mut bbox = BoundingBox {
            min_x: usize::MAX,
            min_y: usize::MAX,
            max_x: 0,
            max_y: 0,
        };
        let mut area_px = 0;
        for (x, y) in mask.iter_set() {
            area_px += 1;
            bbox.min_x = bbox.min_x.min(x);
            bbox.min_y = bbox.min_y.min(y);
            bbox.max_x = bbox.max_x.max(x);
            bbox.max_y = bbox.max_y.max(y);
        }
        Some(Self {
            frame_index,
            mask,
            area_px,
            bbox,
            anchor,
        })
    }

    /// Convenience for synthetic masks: anchor at the first set pixel.
    pub fn from_pixels(frame_index: usize, mask: Bitmap) -> Option<Self> {
        let first = mask.iter_set().next()?;
        Self::from_bitmap(frame_index, mask, first)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.mask.get(x, y)
    }
}

/// `|a ∩ b| / |a ∪ b|`, zero when both are empty.
pub fn mask_iou(a: &SegmentMask, b: &SegmentMask) -> Result<f64, SegmentError> {
    bitmap_iou(&a.mask, &b.mask)
}

pub fn bitmap_iou(a: &Bitmap, b: &Bitmap) -> Result<f64, SegmentError> {
    if a.width != b.width || a.height != b.height {
        return Err(SegmentError::Shape {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.bits.iter().zip(&b.bits) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Index of the darkest pixel, first in row-major order on ties.
fn darkest_pixel(pixels: &[u8]) -> usize {
    let mut best = 0;
    for (i, &p) in pixels.iter().enumerate() {
        if p < pixels[best] {
            best = i;
        }
    }
    best
}

/// 4-connected labels of the pixels selected by `inside`. Label 0 is the
/// background; components are numbered in order of their first pixel.
fn label_components(
    width: usize,
    height: usize,
    inside: impl Fn(usize) -> bool,
) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; width * height];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..width * height {
        if labels[start] != 0 || !inside(start) {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for (dx, dy) in NEIGHBOURS_4 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if labels[j] == 0 && inside(j) {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Thresholds the frame and returns the dark component anchored at the
/// darkest pixel, falling back to the largest dark component when the
/// anchored one is smaller than `min_segment_pixels`.
pub fn threshold_segment(frame: &Frame, cfg: &PipelineConfig) -> Result<SegmentMask, SegmentError> {
    let (w, h) = (frame.width(), frame.height());
    let px = frame.pixels();
    let no_region = SegmentError::NoDarkRegion {
        frame_index: frame.index(),
    };
    let darkest = darkest_pixel(px);
    if px[darkest] >= cfg.intensity_threshold {
        return Err(no_region);
    }
    let thr = cfg.intensity_threshold;
    let (labels, sizes) = label_components(w, h, |i| px[i] < thr);

    let mut chosen = labels[darkest];
    if sizes[chosen as usize] < cfg.min_segment_pixels {
        // Largest component; the earliest one wins ties.
        let (largest, &size) =
            sizes
                .iter()
                .enumerate()
                .skip(1)
                .fold((0, &0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if size < cfg.min_segment_pixels {
            return Err(no_region);
        }
        chosen = largest as u32;
    }

    let mut anchor = None::<usize>;
    let mut bits = vec![false; w * h];
    for (i, &l) in labels.iter().enumerate() {
        if l == chosen {
            bits[i] = true;
            if anchor.is_none_or(|a| px[i] < px[a]) {
                anchor = Some(i);
            }
        }
    }
    let a = anchor.expect("chosen component is non-empty");
    let mask = Bitmap {
        width: w,
        height: h,
        bits,
    };
    Ok(SegmentMask::from_bitmap(frame.index(), mask, (a % w, a / w)).expect("anchor lies in mask"))
}

/// Result of the superpixel baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicSegment {
    pub segment: SegmentMask,
    /// Set when the frame is uniform and the darkest pixel is arbitrary.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy)]
struct Center {
    x: f64,
    y: f64,
    intensity: f64,
}

/// Grid-initialised SLIC centres: `round(w/S) x round(h/S)` cells with
/// `S = sqrt(N/k)`, each nudged to the lowest-gradient pixel of its 3x3
/// neighbourhood.
fn slic_seeds(frame: &Frame, n_superpixels: usize) -> (Vec<Center>, f64) {
    let (w, h) = (frame.width(), frame.height());
    let step = ((w * h) as f64 / n_superpixels as f64).sqrt();
    let nx = ((w as f64 / step).round() as usize).max(1);
    let ny = ((h as f64 / step).round() as usize).max(1);
    let intensity = |x: usize, y: usize| f64::from(frame.get(x, y));
    let gradient = |x: usize, y: usize| {
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let gx = intensity(xr, y) - intensity(xl, y);
        let gy = intensity(x, yd) - intensity(x, yu);
        gx * gx + gy * gy
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (((i as f64 + 0.5) * w as f64 / nx as f64) as usize).min(w - 1);
            let cy = (((j as f64 + 0.5) * h as f64 / ny as f64) as usize).min(h - 1);
            let mut best = (cx, cy, gradient(cx, cy));
            for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = gradient(x, y);
                    if g < best.2 {
                        best = (x, y, g);
                    }
                }
            }
            centers.push(Center {
                x: best.0 as f64,
                y: best.1 as f64,
                intensity: intensity(best.0, best.1),
            });
        }
    }
    (centers, step)
}

const SLIC_ITERATIONS: usize = 10;

/// Standard SLIC on intensity and position; returns one label per pixel.
pub fn slic_labels(
    frame: &Frame,
    n_superpixels: usize,
    compactness: f64,
) -> Result<Vec<usize>, SegmentError> {
    if n_superpixels < 2 {
        return Err(SegmentError::InvalidParameter(format!(
            "SLIC needs at least 2 superpixels, got {n_superpixels}"
        )));
    }
    if !(compactness.is_finite() && compactness > 0.0) {
        return Err(SegmentError::InvalidParameter(format!(
            "compactness must be positive, got {compactness}"
        )));
    }
    let (w, h) = (frame.width(), frame.height());
    let (mut centers, step) = slic_seeds(frame, n_superpixels);
    let spatial = (compactness / step).powi(2);
    let radius = step.ceil() as isize;
    let mut labels = vec![usize::MAX; w * h];
    let mut dist = vec![f64::INFINITY; w * h];
    let distance = |c: &Center, x: usize, y: usize| {
        let di = f64::from(frame.get(x, y)) - c.intensity;
        let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
        di * di + spatial * (dx * dx + dy * dy)
    };

    for _ in 0..SLIC_ITERATIONS {
        dist.fill(f64::INFINITY);
        labels.fill(usize::MAX);
        for (k, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
            let y0 = (cy - radius).max(0) as usize;
            let y1 = ((cy + radius) as usize).min(h - 1);
            let x0 = (cx - radius).max(0) as usize;
            let x1 = ((cx + radius) as usize).min(w - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d = distance(c, x, y);
                    let i = y * w + x;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k;
                    }
                }
            }
        }
        // Pixels outside every window go to the nearest centre.
        for i in 0..w * h {
            if labels[i] == usize::MAX {
                let (x, y) = (i % w, i / w);
                labels[i] = (0..centers.len())
                    .min_by(|&a, &b| {
                        distance(&centers[a], x, y).total_cmp(&distance(&centers[b], x, y))
                    })
                    .expect("at least one centre");
            }
        }
        let mut sums = vec![(0.0, 0.0, 0.0, 0usize); centers.len()];
        for (i, &k) in labels.iter().enumerate() {
            let s = &mut sums[k];
            s.0 += (i % w) as f64;
            s.1 += (i / w) as f64;
            s.2 += f64::from(frame.pixels()[i]);
            s.3 += 1;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.3 > 0 {
                let n = s.3 as f64;
                *c = Center {
                    x: s.0 / n,
                    y: s.1 / n,
                    intensity: s.2 / n,
                };
            }
        }
    }
    Ok(labels)
}

/// SLIC baseline: the superpixel that holds the darkest pixel.
pub fn slic_segment(
    frame: &Frame,
    n_superpixels: usize,
    compactness: f64,
) -> Result<SlicSegment, SegmentError> {
    let labels = slic_labels(frame, n_superpixels, compactness)?;
    let (w, h) = (frame.width(), frame.height());
    let px = frame.pixels();
    let darkest = darkest_pixel(px);
    let degenerate = px.iter().all(|&p| p == px[0]);
    let target = labels[darkest];
    let mask = Bitmap {
        width: w,
        height: h,
        bits: labels.iter().map(|&l| l == target).collect(),
    };
    let segment = SegmentMask::from_bitmap(frame.index(), mask, (darkest % w, darkest / w))
        .expect("darkest pixel carries the selected label");
    Ok(SlicSegment {
        segment,
        degenerate,
    })
}

/// Per-frame dark-region detector used by the tracker.
pub trait Segmenter: Sync {
    fn name(&self) -> String;
    fn segment(&self, frame: &Frame) -> Result<SegmentMask, SegmentError>;
}

#[derive(Debug, Clone, Copy)]
pub struct ThresholdSegmenter {
    pub config: PipelineConfig,
}

impl Segmenter for ThresholdSegmenter {
    fn name(&self) -> String {
        format!("threshold({})", self.config.intensity_threshold)
    }

    fn segment(&self, frame: &Frame) -> Result<SegmentMask, SegmentError> {
        threshold_segment(frame, &self.config)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SlicSegmenter {
    pub n_superpixels: usize,
    pub compactness: f64,
}

impl Default for SlicSegmenter {
    fn default() -> Self {
        Self {
            n_superpixels: 100,
            compactness: 10.0,
        }
    }
}

impl Segmenter for SlicSegmenter {
    fn name(&self) -> String {
        format!("slic(n={}, m={})", self.n_superpixels, self.compactness)
    }

    fn segment(&self, frame: &Frame) -> Result<SegmentMask, SegmentError> {
        slic_segment(frame, self.n_superpixels, self.compactness).map(|s| s.segment)
    }
}
