//! SLIC superpixels (simple linear iterative clustering) over CIELAB color
//! plus image position, followed by a connectivity pass.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::Frame;

#[derive(Debug, Error, PartialEq)]
pub enum SlicError {
    #[error("requested {requested} superpixels but the frame has only {pixels} pixels")]
    TooManySuperpixels { requested: usize, pixels: usize },
    #[error("invalid SLIC configuration: {0}")]
    InvalidConfig(String),
    #[error("label map is {got} pixels, frame is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {0} has no pixels (labels must be dense)")]
    EmptyRegion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicConfig {
    /// Requested number of superpixels per frame.
    pub target_superpixels: usize,
    /// Weight of the spatial term relative to color distance.
    pub compactness: f64,
    pub iterations: usize,
    /// Components smaller than this fraction of the nominal cell area are
    /// merged into their largest neighbor.
    pub min_region_fraction: f64,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            target_superpixels: 800,
            compactness: 10.0,
            iterations: 10,
            min_region_fraction: 0.25,
        }
    }
}

impl SlicConfig {
    pub fn with_superpixels(target_superpixels: usize) -> Self {
        Self {
            target_superpixels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SlicError> {
        if self.target_superpixels == 0 {
            return Err(SlicError::InvalidConfig("target_superpixels must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(SlicError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(SlicError::InvalidConfig("compactness must be > 0".into()));
        }
        if !(self.min_region_fraction > 0.0 && self.min_region_fraction <= 1.0) {
            return Err(SlicError::InvalidConfig(
                "min_region_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One segmented region of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superpixel {
    pub frame_index: usize,
    pub region_index: usize,
    /// Center of mass, in pixel coordinates.
    pub centroid_y: f64,
    pub centroid_x: f64,
    pub mean_color: [f64; 3],
    pub pixel_count: usize,
}

/// A per-pixel label map with its region statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    regions: Vec<Superpixel>,
}

impl Segmentation {
    /// Wraps an externally produced label map. Labels must be dense: every
    /// value in `0..=max` must own at least one pixel.
    pub fn from_labels(frame: &Frame, labels: Vec<u32>) -> Result<Self, SlicError> {
        let n = frame.height() * frame.width();
        if labels.len() != n {
            return Err(SlicError::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(SlicError::EmptyRegion(missing as u32));
        }
        let regions = region_stats(frame, &labels, count);
        Ok(Self {
            height: frame.height(),
            width: frame.width(),
            labels,
            regions,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn regions(&self) -> &[Superpixel] {
        &self.regions
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn set_frame_index(&mut self, t: usize) {
        for r in &mut self.regions {
            r.frame_index = t;
        }
    }

    /// Dumps the label map as a 16-bit binary PGM for inspection.
    pub fn write_label_pgm(&self, path: &Path) -> std::io::Result<()> {
        let max = self.labels.iter().copied().max().unwrap_or(0).clamp(1, 65535);
        let mut out = Vec::with_capacity(self.labels.len() * 2 + 32);
        write!(out, "P5\n{} {}\n{}\n", self.width, self.height, max)?;
        for &l in &self.labels {
            out.extend_from_slice(&(l.min(65535) as u16).to_be_bytes());
        }
        std::fs::write(path, out)
    }
}

/// Exact per-region mean of the frame's `[0, 1]` RGB values.
pub fn mean_colors(segmentation: &Segmentation, frame: &Frame) -> Result<Vec<[f64; 3]>, SlicError> {
    let n = frame.height() * frame.width();
    if segmentation.labels.len() != n
        || segmentation.height != frame.height()
        || segmentation.width != frame.width()
    {
        return Err(SlicError::DimensionMismatch {
            expected: n,
            got: segmentation.labels.len(),
        });
    }
    Ok(region_stats(frame, &segmentation.labels, segmentation.regions.len())
        .into_iter()
        .map(|r| r.mean_color)
        .collect())
}

fn region_stats(frame: &Frame, labels: &[u32], count: usize) -> Vec<Superpixel> {
    let mut acc = vec![([0f64; 3], 0f64, 0f64, 0usize); count];
    let w = frame.width();
    for (p, (&l, rgb)) in labels.iter().zip(frame.data().chunks_exact(3)).enumerate() {
        let a = &mut acc[l as usize];
        for (sum, &v) in a.0.iter_mut().zip(rgb) {
            *sum += f64::from(v);
        }
        a.1 += (p / w) as f64;
        a.2 += (p % w) as f64;
        a.3 += 1;
    }
    acc.into_iter()
        .enumerate()
        .map(|(i, (rgb, sy, sx, n))| {
            let nf = n as f64;
            Superpixel {
                frame_index: 0,
                region_index: i,
                centroid_y: sy / nf,
                centroid_x: sx / nf,
                mean_color: rgb.map(|c| (c / nf).clamp(0.0, 1.0)),
                pixel_count: n,
            }
        })
        .collect()
}

/// Segments one frame. Deterministic for identical inputs.
pub fn segment(frame: &Frame, config: &SlicConfig) -> Result<Segmentation, SlicError> {
    segment_traced(frame, config).map(|(s, _)| s)
}

/// Like [`segment`], also returning the clustering residual after each
/// iteration (sum over pixels of the squared combined color/space distance
/// to the assigned center).
pub fn segment_traced(
    frame: &Frame,
    config: &SlicConfig,
) -> Result<(Segmentation, Vec<f64>), SlicError> {
    config.validate()?;
    let (h, w) = (frame.height(), frame.width());
    let n = h * w;
    if config.target_superpixels > n {
        return Err(SlicError::TooManySuperpixels {
            requested: config.target_superpixels,
            pixels: n,
        });
    }

    let lab: Vec<[f64; 3]> = frame
        .data()
        .chunks_exact(3)
        .map(|p| srgb_to_lab([p[0], p[1], p[2]].map(f64::from)))
        .collect();

    let grid = SeedGrid::new(h, w, config.target_superpixels);
    let mut centers = grid.seeds(frame, &lab);
    let spatial_weight = (config.compactness / grid.step).powi(2);
    let dist = |p: usize, c: &[f64; 5]| -> f64 {
        let l = &lab[p];
        let dl = l[0] - c[0];
        let da = l[1] - c[1];
        let db = l[2] - c[2];
        let dy = (p / w) as f64 - c[3];
        let dx = (p % w) as f64 - c[4];
        dl * dl + da * da + db * db + spatial_weight * (dy * dy + dx * dx)
    };

    const UNASSIGNED: u32 = u32::MAX;
    let mut labels = vec![UNASSIGNED; n];
    let mut best = vec![f64::INFINITY; n];
    let mut residuals = Vec::with_capacity(config.iterations);
    let reach = grid.step;

    for _ in 0..config.iterations {
        // Start from the distance to the currently assigned center so the
        // window search can only improve each pixel's assignment.
        for p in 0..n {
            best[p] = match labels[p] {
                UNASSIGNED => f64::INFINITY,
                k => dist(p, &centers[k as usize]),
            };
        }
        for (k, c) in centers.iter().enumerate() {
            // 2 step x 2 step window around the center
            let y0 = (c[3] - reach).ceil().max(0.0) as usize;
            let y1 = ((c[3] + reach).floor().max(0.0) as usize).min(h - 1);
            let x0 = (c[4] - reach).ceil().max(0.0) as usize;
            let x1 = ((c[4] + reach).floor().max(0.0) as usize).min(w - 1);
            for y in y0..=y1 {
                let dy = y as f64 - c[3];
                let row_term = spatial_weight * dy * dy;
                for x in x0..=x1 {
                    let p = y * w + x;
                    let l = &lab[p];
                    let (dl, da, db) = (l[0] - c[0], l[1] - c[1], l[2] - c[2]);
                    let dx = x as f64 - c[4];
                    let d = dl * dl + da * da + db * db + (row_term + spatial_weight * dx * dx);
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = k as u32;
                    }
                }
            }
        }
        // Pixels outside every window fall back to the global nearest center.
        for p in 0..n {
            if labels[p] == UNASSIGNED {
                let (k, d) = centers
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (k, dist(p, c)))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                labels[p] = k as u32;
                best[p] = d;
            }
        }

        let mut sums = vec![[0f64; 6]; centers.len()];
        for p in 0..n {
            let s = &mut sums[labels[p] as usize];
            let l = &lab[p];
            s[0] += l[0];
            s[1] += l[1];
            s[2] += l[2];
            s[3] += (p / w) as f64;
            s[4] += (p % w) as f64;
            s[5] += 1.0;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                for d in 0..5 {
                    c[d] = s[d] / s[5];
                }
            }
        }
        residuals.push((0..n).map(|p| dist(p, &centers[labels[p] as usize])).sum());
    }

    let min_size = ((config.min_region_fraction * n as f64 / config.target_superpixels as f64)
        .floor() as usize)
        .max(1);
    let labels = enforce_connectivity(&labels, h, w, min_size, 2 * config.target_superpixels);
    let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let regions = region_stats(frame, &labels, count);
    Ok((
        Segmentation {
            height: h,
            width: w,
            labels,
            regions,
        },
        residuals,
    ))
}

/// Regular seed lattice with about `k` cells.
struct SeedGrid {
    rows: usize,
    cols: usize,
    height: usize,
    width: usize,
    /// Nominal superpixel side length in pixels.
    step: f64,
}

impl SeedGrid {
    fn new(height: usize, width: usize, k: usize) -> Self {
        let rows = ((k as f64 * height as f64 / width as f64).sqrt().round() as usize).clamp(1, k.min(height));
        let cols = ((k as f64 / rows as f64).round() as usize).clamp(1, width);
        let step = ((height * width) as f64 / (rows * cols) as f64).sqrt();
        Self {
            rows,
            cols,
            height,
            width,
            step,
        }
    }

    /// Cell centers, each moved to the lowest-gradient pixel of its 3x3
    /// neighborhood.
    fn seeds(&self, frame: &Frame, lab: &[[f64; 3]]) -> Vec<[f64; 5]> {
        let (h, w) = (self.height, self.width);
        let gradient = |y: usize, x: usize| -> f64 {
            let p = frame.pixel(y, x);
            let right = frame.pixel(y, (x + 1).min(w - 1));
            let down = frame.pixel((y + 1).min(h - 1), x);
            let mut g = 0f64;
            for c in 0..3 {
                g += f64::from(right[c] - p[c]).powi(2) + f64::from(down[c] - p[c]).powi(2);
            }
            g.sqrt()
        };
        let cell_h = h as f64 / self.rows as f64;
        let cell_w = w as f64 / self.cols as f64;
        let mut seeds = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                // continuous cell center; it only snaps to a pixel when a
                // neighbor has a strictly lower gradient
                let cy = ((r as f64 + 0.5) * cell_h - 0.5).max(0.0);
                let cx = ((c as f64 + 0.5) * cell_w - 0.5).max(0.0);
                let y = (cy.round() as usize).min(h - 1);
                let x = (cx.round() as usize).min(w - 1);
                let (mut by, mut bx) = (y, x);
                let mut bg = gradient(y, x);
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let g = gradient(yy, xx);
                        if g < bg {
                            (by, bx, bg) = (yy, xx, g);
                        }
                    }
                }
                let l = lab[by * w + bx];
                let (sy, sx) = if (by, bx) == (y, x) {
                    (cy, cx)
                } else {
                    (by as f64, bx as f64)
                };
                seeds.push([l[0], l[1], l[2], sy, sx]);
            }
        }
        seeds
    }
}

/// Splits labels into 4-connected components, merges components smaller than
/// `min_size` into their largest adjacent component, caps the region count at
/// `max_regions`, and relabels densely in scan order.
fn enforce_connectivity(labels: &[u32], h: usize, w: usize, min_size: usize, max_regions: usize) -> Vec<u32> {
    let n = h * w;
    const NONE: usize = usize::MAX;
    let mut comp = vec![NONE; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != NONE {
            continue;
        }
        let id = members.len();
        let mut pix = Vec::new();
        comp[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            pix.push(p);
            for q in neighbors4(p, h, w) {
                if comp[q] == NONE && labels[q] == labels[start] {
                    comp[q] = id;
                    queue.push_back(q);
                }
            }
        }
        members.push(pix);
    }

    let mut parent: Vec<usize> = (0..members.len()).collect();
    let mut size: Vec<usize> = members.iter().map(Vec::len).collect();
    for c in 0..members.len() {
        if parent[c] != c || size[c] >= min_size {
            continue;
        }
        if let Some(t) = largest_neighbor(c, &members, &comp, &mut parent, &size, h, w) {
            parent[c] = t;
            size[t] += size[c];
            let moved = std::mem::take(&mut members[c]);
            members[t].extend(moved);
        }
    }

    // Still too many regions: fold the smallest remaining components into
    // their largest neighbors until the count is within `max_regions`.
    let mut roots: Vec<usize> = (0..members.len()).filter(|&c| parent[c] == c).collect();
    if roots.len() > max_regions {
        roots.sort_by_key(|&c| (size[c], c));
        let mut excess = roots.len() - max_regions;
        for c in roots {
            if excess == 0 {
                break;
            }
            if parent[c] != c {
                continue;
            }
            if let Some(t) = largest_neighbor(c, &members, &comp, &mut parent, &size, h, w) {
                parent[c] = t;
                size[t] += size[c];
                let moved = std::mem::take(&mut members[c]);
                members[t].extend(moved);
                excess -= 1;
            }
        }
    }

    let mut dense = vec![u32::MAX; members.len()];
    let mut next = 0u32;
    let mut out = vec![0u32; n];
    for p in 0..n {
        let r = root(&mut parent, comp[p]);
        if dense[r] == u32::MAX {
            dense[r] = next;
            next += 1;
        }
        out[p] = dense[r];
    }
    out
}

fn root(parent: &mut [usize], mut c: usize) -> usize {
    while parent[c] != c {
        parent[c] = parent[parent[c]];
        c = parent[c];
    }
    c
}

/// Largest component touching `c` (ties to the lowest id).
fn largest_neighbor(
    c: usize,
    members: &[Vec<usize>],
    comp: &[usize],
    parent: &mut [usize],
    size: &[usize],
    h: usize,
    w: usize,
) -> Option<usize> {
    let mut target: Option<usize> = None;
    for &p in &members[c] {
        for q in neighbors4(p, h, w) {
            let r = root(parent, comp[q]);
            if r == c {
                continue;
            }
            target = match target {
                Some(t) if size[t] > size[r] || (size[t] == size[r] && t < r) => Some(t),
                _ => Some(r),
            };
        }
    }
    target
}

fn neighbors4(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (p / w, p % w);
    [
        (y > 0).then(|| p - w),
        (y + 1 < h).then(|| p + w),
        (x > 0).then(|| p - 1),
        (x + 1 < w).then(|| p + 1),
    ]
    .into_iter()
    .flatten()
}

/// sRGB in `[0, 1]` to CIELAB under a D65 white point.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    });
    let x = 0.412_456_4 * lin[0] + 0.357_576_1 * lin[1] + 0.180_437_5 * lin[2];
    let y = 0.212_672_9 * lin[0] + 0.715_152_2 * lin[1] + 0.072_175_0 * lin[2];
    let z = 0.019_333_9 * lin[0] + 0.119_192_0 * lin[1] + 0.950_304_1 * lin[2];
    const DELTA: f64 = 6.0 / 29.0;
    let f = |t: f64| {
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.950_47), f(y), f(z / 1.088_83));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}
