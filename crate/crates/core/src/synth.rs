//! Deterministic synthetic clips for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::media::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Square,
    Circle,
}

impl Shape {
    pub const ALL: [Shape; 2] = [Shape::Square, Shape::Circle];

    pub fn label(self) -> usize {
        self as usize
    }

    /// Whether the pixel center `(y, x)` lies inside the shape of size `r`
    /// centered at `(cy, cx)`. The square has side `2r`.
    pub fn covers(self, y: f64, x: f64, cy: f64, cx: f64, r: f64) -> bool {
        let (dy, dx) = (y - cy, x - cx);
        match self {
            Shape::Square => dy.abs() <= r && dx.abs() <= r,
            Shape::Circle => dy * dy + dx * dx <= r * r,
        }
    }
}

/// A white shape moving at constant velocity over black, bouncing off the
/// borders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub shape: Shape,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub radius: f64,
    pub start: (f64, f64),
    pub velocity: (f64, f64),
}

impl MotionSpec {
    /// Random start and velocity (up to 2 px per frame), shape kept inside.
    pub fn random(shape: Shape, height: usize, width: usize, frames: usize, radius: f64, rng: &mut impl Rng) -> Self {
        let y = rng.random_range(radius..=(height as f64 - radius).max(radius));
        let x = rng.random_range(radius..=(width as f64 - radius).max(radius));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let speed = rng.random_range(0.5..2.0);
        Self {
            shape,
            height,
            width,
            frames,
            radius,
            start: (y, x),
            velocity: (speed * angle.sin(), speed * angle.cos()),
        }
    }

    /// Shape center in frame `t`.
    pub fn center(&self, t: usize) -> (f64, f64) {
        let bounce = |p: f64, v: f64, extent: usize| {
            let lo = self.radius;
            let hi = (extent as f64 - self.radius).max(lo);
            let span = hi - lo;
            if span <= 0.0 {
                return lo;
            }
            let u = (p - lo + v * t as f64).rem_euclid(2.0 * span);
            lo + if u > span { 2.0 * span - u } else { u }
        };
        (
            bounce(self.start.0, self.velocity.0, self.height),
            bounce(self.start.1, self.velocity.1, self.width),
        )
    }

    pub fn render(&self) -> Vec<Frame> {
        (0..self.frames)
            .map(|t| {
                let (cy, cx) = self.center(t);
                let mut data = Vec::with_capacity(self.height * self.width * 3);
                for y in 0..self.height {
                    for x in 0..self.width {
                        let on = self.shape.covers(y as f64 + 0.5, x as f64 + 0.5, cy, cx, self.radius);
                        let v = if on { 1.0 } else { 0.0 };
                        data.extend_from_slice(&[v, v, v]);
                    }
                }
                Frame::new(self.height, self.width, data).expect("valid synthetic frame")
            })
            .collect()
    }
}

/// A textured scene: smooth color gradients, a few moving colored blobs and
/// mild pixel noise. Stands in for natural video in benchmarks.
pub fn scene_clip(height: usize, width: usize, frames: usize, seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<([f32; 3], f64, f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let color = [rng.random(), rng.random(), rng.random()];
            let r = rng.random_range(0.08..0.25) * height.min(width) as f64;
            let y = rng.random_range(0.0..height as f64);
            let x = rng.random_range(0.0..width as f64);
            let vy = rng.random_range(-2.0..2.0);
            let vx = rng.random_range(-2.0..2.0);
            (color, r, y, x, vy, vx)
        })
        .collect();
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    (0..frames)
        .map(|t| {
            let mut data = Vec::with_capacity(height * width * 3);
            for y in 0..height {
                for x in 0..width {
                    let (fy, fx) = (y as f64 / height as f64, x as f64 / width as f64);
                    let mut px = [
                        (0.5 + 0.4 * (6.0 * fx + phase + 0.05 * t as f64).sin()) as f32,
                        (0.5 + 0.4 * (5.0 * fy - phase).cos()) as f32,
                        (0.3 + 0.3 * (fx + fy)) as f32,
                    ];
                    for &(color, r, by, bx, vy, vx) in &blobs {
                        let (cy, cx) = (by + vy * t as f64, bx + vx * t as f64);
                        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                        if dy * dy + dx * dx <= r * r {
                            px = color;
                        }
                    }
                    for c in &mut px {
                        *c = (*c + rng.random_range(-0.03..0.03)).clamp(0.0, 1.0);
                    }
                    data.extend_from_slice(&px);
                }
            }
            Frame::new(height, width, data).expect("valid synthetic frame")
        })
        .collect()
}

/// Frames of piecewise constant random color cells, some of them shifted
/// between frames, plus noise.
pub fn block_clip(height: usize, width: usize, frames: usize, rng: &mut impl Rng) -> Vec<Frame> {
    let cell = rng.random_range(3..=8usize);
    let gh = height.div_ceil(cell) + 2;
    let gw = width.div_ceil(cell) + 2;
    let palette: Vec<[f32; 3]> = (0..gh * gw).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let noise = rng.random_range(0.0..0.1f32);
    (0..frames)
        .map(|t| {
            let shift = t * rng.random_range(0..=2usize);
            let mut data = Vec::with_capacity(height * width * 3);
            for y in 0..height {
                for x in 0..width {
                    let gy = (y / cell) % gh;
                    let gx = ((x + shift) / cell) % gw;
                    for c in palette[gy * gw + gx] {
                        data.push((c + rng.random_range(-noise..=noise)).clamp(0.0, 1.0));
                    }
                }
            }
            Frame::new(height, width, data).expect("valid synthetic frame")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_have_expected_area() {
        let r = 6.0;
        for shape in Shape::ALL {
            let spec = MotionSpec {
                shape,
                height: 32,
                width: 32,
                frames: 1,
                radius: r,
                start: (16.0, 16.0),
                velocity: (0.0, 0.0),
            };
            let frame = &spec.render()[0];
            let lit = frame.data().chunks(3).filter(|p| p[0] > 0.5).count() as f64;
            let area = match shape {
                Shape::Square => 4.0 * r * r,
                Shape::Circle => std::f64::consts::PI * r * r,
            };
            assert!((lit - area).abs() / area < 0.15, "{shape:?}: {lit} vs {area}");
        }
    }

    #[test]
    fn motion_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let spec = MotionSpec::random(Shape::Circle, 24, 40, 30, 5.0, &mut rng);
            for t in 0..30 {
                let (y, x) = spec.center(t);
                assert!((5.0..=19.0).contains(&y) && (5.0..=35.0).contains(&x), "{y} {x}");
            }
        }
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(scene_clip(16, 20, 2, 7)[1].data(), scene_clip(16, 20, 2, 7)[1].data());
        let a = block_clip(10, 12, 3, &mut ChaCha8Rng::seed_from_u64(1));
        let b = block_clip(10, 12, 3, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a[2].data(), b[2].data());
    }
}
