//! Classical image-processing primitives: histogram equalization, global
//! thresholding, binary erosion, outer border following and contour geometry.

use crate::error::{Error, Result};
use crate::image::{BinaryImage, GrayImage};

/// Integer pixel coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// Raster-order key: row first, then column.
    fn raster_key(self) -> (i32, i32) {
        (self.y, self.x)
    }
}

/// Continuous pixel coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointF {
    pub x: f64,
    pub y: f64,
}

impl PointF {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: PointF) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// An ordered border traversal. Consecutive points are 8-connected and the
/// last point connects back to the first when `closed`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Point>,
    pub closed: bool,
}

impl Contour {
    /// Area enclosed by the traced polygon (shoelace formula).
    pub fn area(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let twice: i64 = (0..n)
            .map(|i| {
                let a = self.points[i];
                let b = self.points[(i + 1) % n];
                a.x as i64 * b.y as i64 - b.x as i64 * a.y as i64
            })
            .sum();
        twice.abs() as f64 / 2.0
    }

    /// Axis-aligned bounding box as `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> Option<(i32, i32, i32, i32)> {
        let first = self.points.first()?;
        Some(self.points.iter().fold(
            (first.x, first.y, first.x, first.y),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        ))
    }
}

/// Histogram equalization `v' = round((cdf(v) - cdf_min) / (N - cdf_min) * 255)`.
/// A constant image is returned unchanged.
pub fn equalize_histogram(img: &GrayImage) -> GrayImage {
    let lut = equalization_lut(img);
    let pixels = img.pixels().iter().map(|&p| lut[p as usize]).collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("same shape as input")
}

/// The gray-level mapping applied by [`equalize_histogram`]. Identity for a
/// constant image; monotone non-decreasing over the populated levels.
pub fn equalization_lut(img: &GrayImage) -> [u8; 256] {
    let hist = img.histogram();
    let n = img.pixels().len();
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist.iter()) {
        acc += h;
        *c = acc;
    }
    let cdf_min = hist
        .iter()
        .zip(cdf.iter())
        .find(|(&h, _)| h > 0)
        .map(|(_, &c)| c)
        .unwrap_or(0);
    let mut lut = [0u8; 256];
    if n == cdf_min {
        for (v, out) in lut.iter_mut().enumerate() {
            *out = v as u8;
        }
        return lut;
    }
    let denom = (n - cdf_min) as f64;
    for (v, out) in lut.iter_mut().enumerate() {
        *out = ((cdf[v].saturating_sub(cdf_min)) as f64 / denom * 255.0).round() as u8;
    }
    lut
}

/// Otsu's threshold: the `t` maximizing between-class variance of the split
/// `{v < t}` / `{v >= t}`. The smallest maximizing `t` wins.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let hist = img.histogram();
    let total = img.pixels().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &h)| v as f64 * h as f64).sum();
    let mut best_t = 0u8;
    let mut best_var = -1.0;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for t in 0..=255usize {
        // class 0 holds values < t
        if t > 0 {
            w0 += hist[t - 1] as f64;
            sum0 += (t - 1) as f64 * hist[t - 1] as f64;
        }
        let w1 = total - w0;
        let var = if w0 == 0.0 || w1 == 0.0 {
            0.0
        } else {
            let m0 = sum0 / w0;
            let m1 = (sum_all - sum0) / w1;
            w0 * w1 * (m0 - m1) * (m0 - m1)
        };
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// `bit = 1` iff `pixel >= t`; Otsu picks `t` when none is given.
pub fn threshold_binary(img: &GrayImage, t: Option<u8>) -> BinaryImage {
    let t = t.unwrap_or_else(|| otsu_threshold(img));
    let bits = img.pixels().iter().map(|&p| (p >= t) as u8).collect();
    BinaryImage::new(img.width(), img.height(), bits).expect("same shape as input")
}

/// Erosion by a `(2r+1)²` square with zero padding outside the image.
pub fn erode(img: &BinaryImage, se_radius: usize) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let r = se_radius as i64;
    // The square element is separable: a horizontal pass then a vertical one.
    let rows = BinaryImage::from_fn(w, h, |x, y| {
        (-r..=r).all(|d| img.get_or_zero(x as i64 + d, y as i64))
    });
    BinaryImage::from_fn(w, h, |x, y| {
        (-r..=r).all(|d| rows.get_or_zero(x as i64, y as i64 + d))
    })
}

/// Neighbour offsets, clockwise on screen (y grows downward), starting east.
const DIRS: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];
const WEST: usize = 4;

fn dir_index(from: Point, to: Point) -> usize {
    let d = (to.x - from.x, to.y - from.y);
    DIRS.iter()
        .position(|&o| o == d)
        .expect("points are 8-neighbours")
}

/// Outer borders of every 8-connected foreground component, one contour per
/// component, in raster order of their starting pixels. Each border starts
/// at the component's first raster-order pixel and runs clockwise on screen.
pub fn follow_borders(img: &BinaryImage) -> Vec<Contour> {
    let (w, h) = (img.width(), img.height());
    let fg = |p: Point| img.get_or_zero(p.x as i64, p.y as i64);
    let mut seen = vec![false; w * h];
    let mut contours = Vec::new();
    let mut stack = Vec::new();

    for y in 0..h {
        for x in 0..w {
            if !img.get(x, y) || seen[y * w + x] {
                continue;
            }
            let start = Point::new(x as i32, y as i32);
            contours.push(trace_outer(start, &fg));

            // Mark the whole component so its remaining pixels (and the
            // borders of its holes) do not start new outer borders.
            seen[y * w + x] = true;
            stack.push(start);
            while let Some(p) = stack.pop() {
                for (dx, dy) in DIRS {
                    let q = Point::new(p.x + dx, p.y + dy);
                    if fg(q) {
                        let i = q.y as usize * w + q.x as usize;
                        if !seen[i] {
                            seen[i] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
    }
    contours
}

/// Clockwise tracing of the outer border that begins at `start`, whose west
/// neighbour is background (it is the first raster pixel of its component).
fn trace_outer(start: Point, fg: &impl Fn(Point) -> bool) -> Contour {
    let step = |p: Point, d: usize| Point::new(p.x + DIRS[d].0, p.y + DIRS[d].1);

    // The traversal's predecessor of `start`: first foreground neighbour found
    // counter-clockwise from west.
    let Some(last) = (0..8)
        .map(|k| (WEST + 8 - k) % 8)
        .map(|d| step(start, d))
        .find(|&q| fg(q))
    else {
        return Contour {
            points: vec![start],
            closed: true,
        };
    };

    let mut points = Vec::new();
    let mut prev = last;
    let mut cur = start;
    loop {
        points.push(cur);
        let from = dir_index(cur, prev);
        let next = (1..=8)
            .map(|k| step(cur, (from + k) % 8))
            .find(|&q| fg(q))
            .expect("cur has at least one foreground neighbour");
        if next == start && cur == last {
            break;
        }
        prev = cur;
        cur = next;
    }
    Contour {
        points,
        closed: true,
    }
}

/// Contour with the largest shoelace area; ties go to the earliest raster-order start.
pub fn largest_contour(contours: &[Contour]) -> Result<&Contour> {
    contours
        .iter()
        .filter(|c| !c.points.is_empty())
        .min_by(|a, b| {
            b.area()
                .total_cmp(&a.area())
                .then_with(|| a.points[0].raster_key().cmp(&b.points[0].raster_key()))
        })
        .ok_or(Error::EmptyInput)
}

/// Centers of the four bounding-box sides, as `[top, right, bottom, left]`.
///
/// Each center is the midpoint of the span of contour points lying on that
/// side's extreme coordinate.
pub fn side_centers(c: &Contour) -> Result<[PointF; 4]> {
    let (x0, y0, x1, y1) = c.bounds().ok_or(Error::DegenerateContour)?;
    if x0 == x1 || y0 == y1 {
        return Err(Error::DegenerateContour);
    }
    let span = |on_side: &dyn Fn(&Point) -> bool, along: &dyn Fn(&Point) -> i32| {
        let (lo, hi) = c
            .points
            .iter()
            .filter(|p| on_side(p))
            .map(along)
            .fold((i32::MAX, i32::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (lo + hi) as f64 / 2.0
    };
    let top = span(&|p| p.y == y0, &|p| p.x);
    let right = span(&|p| p.x == x1, &|p| p.y);
    let bottom = span(&|p| p.y == y1, &|p| p.x);
    let left = span(&|p| p.x == x0, &|p| p.y);
    Ok([
        PointF::new(top, y0 as f64),
        PointF::new(x1 as f64, right),
        PointF::new(bottom, y1 as f64),
        PointF::new(x0 as f64, left),
    ])
}
