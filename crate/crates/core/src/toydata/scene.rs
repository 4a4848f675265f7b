//! Procedural scenes: a layout decides the label map, and each class is
//! painted from its own style factor, so a class's pixels never depend on
//! another class's style.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmisError};

pub const CLASS_NAMES: [&str; 8] = [
    "background",
    "sky-band",
    "circle",
    "square",
    "triangle",
    "stripe",
    "border",
    "blob",
];
pub const NUM_CLASSES: usize = CLASS_NAMES.len();
pub const DEFAULT_SIZE: usize = 64;

/// Per-pixel class ids in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    classes: usize,
    ids: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, classes: usize, ids: Vec<u8>) -> Result<Self> {
        if ids.len() != height * width {
            return Err(SmisError::invalid(format!(
                "label map has {} ids for {height}x{width}",
                ids.len()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= classes) {
            return Err(SmisError::invalid(format!("class id {bad} >= class count {classes}")));
        }
        Ok(LabelMap {
            height,
            width,
            classes,
            ids,
        })
    }

    pub fn filled(height: usize, width: usize, classes: usize, class: u8) -> Result<Self> {
        Self::new(height, width, classes, vec![class; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn ids(&self) -> &[u8] {
        &self.ids
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.ids[y * self.width + x]
    }

    /// Pixel count per class.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &id in &self.ids {
            h[id as usize] += 1;
        }
        h
    }

    pub fn present_classes(&self) -> Vec<usize> {
        self.histogram()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| c)
            .collect()
    }

    pub fn region(&self, class: usize) -> Vec<bool> {
        self.ids.iter().map(|&id| id as usize == class).collect()
    }
}

/// Ground-truth appearance of one class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStyle {
    /// In `[0, 1)`.
    pub hue: f64,
    /// In `[0.35, 1]`.
    pub brightness: f64,
    /// Texture phase in radians.
    pub phase: f64,
}

impl ClassStyle {
    pub fn sample(rng: &mut impl Rng) -> Self {
        ClassStyle {
            hue: rng.random_range(0.0..1.0),
            brightness: rng.random_range(0.35..1.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stripe {
    pub y0: f64,
    pub slope: f64,
    pub width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub lobes: u32,
    pub wobble: f64,
}

/// Shape placement; `None` leaves the class absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub sky: Option<f64>,
    pub stripe: Option<Stripe>,
    pub blob: Option<Blob>,
    pub square: Option<Square>,
    pub triangle: Option<[(f64, f64); 3]>,
    pub circle: Option<Circle>,
    pub border: Option<f64>,
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

impl Layout {
    pub fn sample(size: usize, rng: &mut impl Rng) -> Self {
        let s = size as f64;
        let mut present = |p: f64| rng.random_bool(p);
        let flags = [
            present(0.8),
            present(0.7),
            present(0.7),
            present(0.75),
            present(0.75),
            present(0.8),
            present(0.5),
        ];
        let mut l = Layout::default();
        if flags[0] {
            l.sky = Some(rng.random_range(0.12..0.3) * s);
        }
        if flags[1] {
            l.stripe = Some(Stripe {
                y0: rng.random_range(0.55..0.85) * s,
                slope: rng.random_range(-0.3..0.3),
                width: rng.random_range(0.06..0.12) * s,
            });
        }
        if flags[2] {
            l.blob = Some(Blob {
                cx: rng.random_range(0.25..0.75) * s,
                cy: rng.random_range(0.3..0.7) * s,
                r: rng.random_range(0.12..0.2) * s,
                lobes: rng.random_range(3..6),
                wobble: rng.random_range(0.0..std::f64::consts::TAU),
            });
        }
        if flags[3] {
            let side = rng.random_range(0.15..0.3) * s;
            l.square = Some(Square {
                x0: rng.random_range(0.05 * s..0.95 * s - side),
                y0: rng.random_range(0.2 * s..0.95 * s - side),
                side,
            });
        }
        if flags[4] {
            let cx = rng.random_range(0.2..0.8) * s;
            let cy = rng.random_range(0.3..0.8) * s;
            let r = rng.random_range(0.1..0.2) * s;
            let rot: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let v = |k: f64| {
                let a = rot + k * std::f64::consts::TAU / 3.0;
                (cx + r * a.cos(), cy + r * a.sin())
            };
            l.triangle = Some([v(0.0), v(1.0), v(2.0)]);
        }
        if flags[5] {
            l.circle = Some(Circle {
                cx: rng.random_range(0.2..0.8) * s,
                cy: rng.random_range(0.25..0.8) * s,
                r: rng.random_range(0.08..0.16) * s,
            });
        }
        if flags[6] {
            l.border = Some(rng.random_range(0.03..0.07) * s);
        }
        l
    }

    /// Class at the pixel centre `(x, y)`; later shapes cover earlier ones.
    pub fn class_at(&self, x: f64, y: f64, size: f64) -> u8 {
        let mut c = 0u8;
        if let Some(h) = self.sky {
            if y < h {
                c = 1;
            }
        }
        if let Some(s) = self.stripe {
            if (y - (s.y0 + s.slope * (x - size / 2.0))).abs() < s.width / 2.0 {
                c = 5;
            }
        }
        if let Some(b) = self.blob {
            let (dx, dy) = (x - b.cx, y - b.cy);
            let theta = dy.atan2(dx);
            let radius = b.r * (1.0 + 0.25 * (b.lobes as f64 * theta + b.wobble).sin());
            if dx * dx + dy * dy < radius * radius {
                c = 7;
            }
        }
        if let Some(q) = self.square {
            if x >= q.x0 && x < q.x0 + q.side && y >= q.y0 && y < q.y0 + q.side {
                c = 3;
            }
        }
        if let Some([a, b, d]) = self.triangle {
            let p = (x, y);
            let (e0, e1, e2) = (edge(a, b, p), edge(b, d, p), edge(d, a, p));
            if (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0) {
                c = 4;
            }
        }
        if let Some(ci) = self.circle {
            let (dx, dy) = (x - ci.cx, y - ci.cy);
            if dx * dx + dy * dy < ci.r * ci.r {
                c = 2;
            }
        }
        if let Some(w) = self.border {
            if x < w || y < w || x > size - w || y > size - w {
                c = 6;
            }
        }
        c
    }

    pub fn rasterize(&self, size: usize) -> LabelMap {
        let s = size as f64;
        let ids = (0..size * size)
            .map(|i| self.class_at((i % size) as f64 + 0.5, (i / size) as f64 + 0.5, s))
            .collect();
        LabelMap {
            height: size,
            width: size,
            classes: NUM_CLASSES,
            ids,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub size: usize,
    pub styles: Vec<ClassStyle>,
    pub layout: Layout,
    pub seed: u64,
}

impl SceneSpec {
    pub fn sample(seed: u64, size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let styles = (0..NUM_CLASSES).map(|_| ClassStyle::sample(&mut rng)).collect();
        let layout = Layout::sample(size, &mut rng);
        SceneSpec {
            size,
            styles,
            layout,
            seed,
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Colour in `[-1, 1]` of a class-`class` pixel at `(x, y)` under `style`.
pub fn shade(class: usize, style: &ClassStyle, x: usize, y: usize) -> [f64; 3] {
    let angle = class as f64 * std::f64::consts::PI / NUM_CLASSES as f64;
    let freq = 0.35 + 0.05 * class as f64;
    let t = freq * (x as f64 * angle.cos() + y as f64 * angle.sin()) + style.phase;
    let v = style.brightness * (0.8 + 0.2 * t.sin());
    hsv_to_rgb(style.hue, 0.7, v).map(|c| 2.0 * c - 1.0)
}

/// Image `[3, H, W]` (channel-major) painted from per-class styles.
pub fn paint(mask: &LabelMap, styles: &[ClassStyle]) -> Vec<f64> {
    let (h, w) = (mask.height, mask.width);
    let mut out = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let c = mask.get(y, x) as usize;
            let rgb = shade(c, &styles[c], x, y);
            for (k, v) in rgb.iter().enumerate() {
                out[k * h * w + y * w + x] = *v;
            }
        }
    }
    out
}

/// Deterministic `(image [3, size, size] in [-1, 1], mask)`.
pub fn render(spec: &SceneSpec) -> (Vec<f64>, LabelMap) {
    let mask = spec.layout.rasterize(spec.size);
    (paint(&mask, &spec.styles), mask)
}
