//! Per-frame orientation maps, 2D strand tracing and direction voting.

use std::f64::consts::PI;

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{direction_bin, DirLabel, Raster};

pub type Point2 = Vector2<f64>;

/// Picks one frame per azimuth bin of width `bin_width`, starting at the
/// smallest azimuth. Within a bin the frame nearest the bin center wins,
/// ties going to the lower id. Returns ids in bin order.
pub fn select_frames(azimuths: &[(u32, f64)], bin_width: f64) -> Vec<u32> {
    if azimuths.is_empty() {
        return Vec::new();
    }
    let lo = azimuths.iter().map(|a| a.1).fold(f64::INFINITY, f64::min);
    let hi = azimuths.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
    let nbins = (((hi - lo) / bin_width - 1e-9).ceil() as usize).max(1);
    let mut best: Vec<Option<(f64, u32)>> = vec![None; nbins];
    for &(id, az) in azimuths {
        let b = (((az - lo) / bin_width).floor() as usize).min(nbins - 1);
        let center = lo + (b as f64 + 0.5) * bin_width;
        let d = (az - center).abs();
        let slot = &mut best[b];
        if slot.is_none_or(|(bd, bid)| d < bd || (d == bd && id < bid)) {
            *slot = Some((d, id));
        }
    }
    best.into_iter().flatten().map(|(_, id)| id).collect()
}

/// Luma of an RGB raster in `[0, 1]`.
pub fn grayscale(color: &Raster<[u8; 3]>) -> Raster<f64> {
    color.map(|c| (0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64) / 255.0)
}

/// Even-symmetric, zero-mean Gabor kernels at `n` orientations uniformly
/// spaced in `[0, pi)`. Orientation `theta` is the stripe direction
/// `(cos theta, sin theta)` in image coordinates.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub size: usize,
    pub angles: Vec<f64>,
    kernels: Vec<Vec<f64>>,
    /// Sum of absolute kernel weights (largest over the bank).
    l1: f64,
}

impl FilterBank {
    pub fn new(n: usize, size: usize, wavelength: f64, sigma_across: f64, sigma_along: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Argument(format!("need at least 4 filters, got {n}")));
        }
        if size.is_multiple_of(2) {
            return Err(Error::Argument(format!("kernel size must be odd, got {size}")));
        }
        let half = (size / 2) as f64;
        let angles: Vec<f64> = (0..n).map(|k| PI * k as f64 / n as f64).collect();
        let kernels: Vec<Vec<f64>> = angles
            .iter()
            .map(|&t| {
                let (s, c) = t.sin_cos();
                let mut env = Vec::with_capacity(size * size);
                let mut k = Vec::with_capacity(size * size);
                for y in 0..size {
                    for x in 0..size {
                        let (dx, dy) = (x as f64 - half, y as f64 - half);
                        let along = dx * c + dy * s;
                        let across = -dx * s + dy * c;
                        let e = (-across * across / (2.0 * sigma_across * sigma_across)
                            - along * along / (2.0 * sigma_along * sigma_along))
                            .exp();
                        env.push(e);
                        k.push(e * (2.0 * PI * across / wavelength).cos());
                    }
                }
                let shift = k.iter().sum::<f64>() / env.iter().sum::<f64>();
                k.iter().zip(&env).map(|(k, e)| k - shift * e).collect()
            })
            .collect();
        let l1 = kernels.iter().map(|k| k.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        Ok(FilterBank { size, angles, kernels, l1 })
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Magnitudes of every filter at pixel `(x, y)`, clamping at the border.
    pub fn responses_at(&self, image: &Raster<f64>, x: usize, y: usize) -> Vec<f64> {
        let half = (self.size / 2) as isize;
        let (w, h) = (image.width as isize, image.height as isize);
        let mut patch = Vec::with_capacity(self.size * self.size);
        for dy in -half..=half {
            let yy = (y as isize + dy).clamp(0, h - 1) as usize;
            for dx in -half..=half {
                let xx = (x as isize + dx).clamp(0, w - 1) as usize;
                patch.push(*image.get(xx, yy));
            }
        }
        self.kernels.iter().map(|k| k.iter().zip(&patch).map(|(a, b)| a * b).sum::<f64>().abs()).collect()
    }
}

/// Dominant undirected orientation per hair pixel.
#[derive(Debug, Clone)]
pub struct OrientationMap {
    /// Angle in `[0, pi)`; `None` off the mask.
    pub theta: Raster<Option<f64>>,
    /// Magnitude of the winning filter (0 off the mask).
    pub response: Raster<f64>,
}

impl OrientationMap {
    pub fn max_response(&self) -> f64 {
        self.response.data.iter().copied().fold(0.0, f64::max)
    }

    /// Bilinear orientation at a subpixel position, averaging doubled-angle
    /// vectors of the defined neighbors. Returns `(theta, response)`.
    pub fn sample(&self, p: &Point2) -> Option<(f64, f64)> {
        let (w, h) = (self.theta.width as isize, self.theta.height as isize);
        let x0 = p.x.floor();
        let y0 = p.y.floor();
        let (fx, fy) = (p.x - x0, p.y - y0);
        let (mut c2, mut s2, mut r, mut wsum) = (0.0, 0.0, 0.0, 0.0);
        for (dx, dy, wt) in
            [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)]
        {
            let (xi, yi) = (x0 as isize + dx, y0 as isize + dy);
            if wt <= 0.0 || xi < 0 || yi < 0 || xi >= w || yi >= h {
                continue;
            }
            if let Some(t) = self.theta.get(xi as usize, yi as usize) {
                c2 += wt * (2.0 * t).cos();
                s2 += wt * (2.0 * t).sin();
                r += wt * self.response.get(xi as usize, yi as usize);
                wsum += wt;
            }
        }
        if wsum <= 0.0 || c2.hypot(s2) < 1e-12 {
            return None;
        }
        Some((0.5 * s2.atan2(c2).rem_euclid(2.0 * PI), r / wsum))
    }

    /// Bilinear response, treating undefined pixels as zero.
    pub fn response_at(&self, p: &Point2) -> f64 {
        self.response_bilinear(p.x, p.y)
    }

    fn response_bilinear(&self, u: f64, v: f64) -> f64 {
        let (w, h) = (self.response.width as isize, self.response.height as isize);
        let x0 = u.floor();
        let y0 = v.floor();
        let (fx, fy) = (u - x0, v - y0);
        let get = |x: isize, y: isize| {
            if x < 0 || y < 0 || x >= w || y >= h {
                0.0
            } else {
                *self.response.get(x as usize, y as usize)
            }
        };
        let (xi, yi) = (x0 as isize, y0 as isize);
        (get(xi, yi) * (1.0 - fx) + get(xi + 1, yi) * fx) * (1.0 - fy)
            + (get(xi, yi + 1) * (1.0 - fx) + get(xi + 1, yi + 1) * fx) * fy
    }
}

/// Filters every masked pixel with the bank and keeps the strongest
/// orientation. Responses below a negligible fraction of the possible
/// maximum count as zero, so featureless pixels resolve to index 0.
pub fn orientation_map(image: &Raster<f64>, mask: &Raster<bool>, bank: &FilterBank) -> OrientationMap {
    let (w, h) = (image.width, image.height);
    let peak = image.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-9 * bank.l1 * peak.max(f64::MIN_POSITIVE);
    let rows: Vec<Vec<(Option<f64>, f64)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    if !*mask.get(x, y) {
                        return (None, 0.0);
                    }
                    let resp = bank.responses_at(image, x, y);
                    let mut best = 0usize;
                    let mut best_r = if resp[0] > floor { resp[0] } else { 0.0 };
                    for (k, &r) in resp.iter().enumerate().skip(1) {
                        if r > floor && r > best_r {
                            best = k;
                            best_r = r;
                        }
                    }
                    (Some(bank.angles[best]), best_r)
                })
                .collect()
        })
        .collect();
    let mut theta = Raster::filled(w, h, None);
    let mut response = Raster::filled(w, h, 0.0);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (t, r)) in row.into_iter().enumerate() {
            theta.set(x, y, t);
            response.set(x, y, r);
        }
    }
    OrientationMap { theta, response }
}

/// Image-space polyline in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Strand2D {
    pub points: Vec<Point2>,
    /// Set once the point order has been checked against direction labels.
    pub directed: bool,
}

impl Strand2D {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn reversed(&self) -> Strand2D {
        let mut points = self.points.clone();
        points.reverse();
        Strand2D { points, directed: self.directed }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceParams {
    pub step: f64,
    /// Fraction of the frame's maximum response below which tracing stops.
    pub min_response: f64,
    /// Largest direction change per step, radians.
    pub max_turn: f64,
    /// Strands shorter than this many pixels are dropped.
    pub min_length: f64,
}

impl TraceParams {
    pub fn from_config(cfg: &crate::SceneConfig) -> Self {
        TraceParams {
            step: cfg.trace_step,
            min_response: cfg.trace_min_response,
            max_turn: cfg.trace_max_turn_deg.to_radians(),
            min_length: cfg.trace_min_length,
        }
    }
}

/// Traces undirected strands from response maxima through the orientation
/// map. Seeds are visited in raster order and skipped when a previous trace
/// already passed within one pixel.
pub fn trace_strands(map: &OrientationMap, mask: &Raster<bool>, params: &TraceParams) -> Vec<Strand2D> {
    let (w, h) = (mask.width, mask.height);
    let rmin = params.min_response * map.max_response();
    if !(rmin > 0.0) {
        return Vec::new();
    }
    let mut covered = Raster::filled(w, h, false);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) || *covered.get(x, y) || !is_seed(map, mask, x, y, rmin) {
                continue;
            }
            let seed = Point2::new(x as f64, y as f64);
            let Some((theta, _)) = map.sample(&seed) else {
                continue;
            };
            let dir = Point2::new(theta.cos(), theta.sin());
            let fwd = march(map, mask, seed, dir, rmin, params);
            let mut bwd = march(map, mask, seed, -dir, rmin, params);
            bwd.reverse();
            bwd.push(seed);
            bwd.extend(fwd);
            for p in &bwd {
                mark_covered(&mut covered, p);
            }
            let s = Strand2D { points: bwd, directed: false };
            if s.points.len() >= 2 && s.length() >= params.min_length {
                out.push(s);
            }
        }
    }
    out
}

fn is_seed(map: &OrientationMap, mask: &Raster<bool>, x: usize, y: usize, rmin: f64) -> bool {
    let r = *map.response.get(x, y);
    if r < rmin {
        return false;
    }
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            if (dx == 0 && dy == 0) || xx < 0 || yy < 0 || xx >= mask.width as isize || yy >= mask.height as isize {
                continue;
            }
            let (xx, yy) = (xx as usize, yy as usize);
            if *mask.get(xx, yy) && *map.response.get(xx, yy) > r {
                return false;
            }
        }
    }
    true
}

fn mark_covered(covered: &mut Raster<bool>, p: &Point2) {
    let (w, h) = (covered.width as isize, covered.height as isize);
    for yy in (p.y - 1.0).ceil() as isize..=(p.y + 1.0).floor() as isize {
        for xx in (p.x - 1.0).ceil() as isize..=(p.x + 1.0).floor() as isize {
            if xx < 0 || yy < 0 || xx >= w || yy >= h {
                continue;
            }
            let d = (xx as f64 - p.x).hypot(yy as f64 - p.y);
            if d <= 1.0 {
                covered.set(xx as usize, yy as usize, true);
            }
        }
    }
}

/// Follows the field from `start` along `dir`, excluding `start` itself.
fn march(
    map: &OrientationMap,
    mask: &Raster<bool>,
    start: Point2,
    mut dir: Point2,
    rmin: f64,
    params: &TraceParams,
) -> Vec<Point2> {
    let max_steps = 4 * (mask.width + mask.height);
    let cos_turn = params.max_turn.cos();
    let mut pts = Vec::new();
    let mut p = start;
    for _ in 0..max_steps {
        let mut q = p + dir * params.step;
        let Some((theta, _)) = map.sample(&q) else { break };
        let mut d = Point2::new(theta.cos(), theta.sin());
        if d.dot(&dir) < 0.0 {
            d = -d;
        }
        // pull the point back onto the local response ridge
        let n = Point2::new(-d.y, d.x);
        let r0 = map.response_at(&q);
        let rm = map.response_at(&(q - n));
        let rp = map.response_at(&(q + n));
        let curv = rm - 2.0 * r0 + rp;
        if curv < 0.0 {
            let off = (0.5 * (rm - rp) / curv).clamp(-0.5, 0.5);
            q += n * off;
        }
        let Some((x, y)) = mask.nearest_pixel(q.x, q.y) else {
            break;
        };
        if !*mask.get(x, y) {
            break;
        }
        let Some((theta, resp)) = map.sample(&q) else { break };
        if resp < rmin {
            break;
        }
        let mut nd = Point2::new(theta.cos(), theta.sin());
        if nd.dot(&dir) < 0.0 {
            nd = -nd;
        }
        let step = q - p;
        if step.norm() < 1e-9 {
            break;
        }
        let moved = step.normalize();
        if moved.dot(&dir) < cos_turn || nd.dot(&dir) < cos_turn {
            break;
        }
        pts.push(q);
        p = q;
        dir = nd;
    }
    pts
}

/// Result of direction voting for one strand.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedStrand {
    pub strand: Strand2D,
    /// The strand had no labeled point and kept its traced order.
    pub undetermined: bool,
}

/// Central-difference marching direction at every point (one-sided at the
/// ends).
pub fn point_directions(points: &[Point2]) -> Vec<Point2> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = points[i.saturating_sub(1)];
            let b = points[(i + 1).min(n - 1)];
            b - a
        })
        .collect()
}

/// Reverses each strand when more than half of its labeled points march
/// into the bin opposite their label. Background and undetermined labels do
/// not vote.
pub fn orient_strands(strands: &[Strand2D], labels: &Raster<u8>) -> Vec<OrientedStrand> {
    strands
        .iter()
        .map(|s| {
            let dirs = point_directions(&s.points);
            let (mut labeled, mut disagree) = (0usize, 0usize);
            for (p, d) in s.points.iter().zip(&dirs) {
                let Some(code) = labels.sample_nearest(p.x, p.y) else {
                    continue;
                };
                let Some(DirLabel::Bin(label)) = DirLabel::from_code(*code) else {
                    continue;
                };
                let Some(bin) = direction_bin(d.x, d.y) else { continue };
                labeled += 1;
                if bin == (label + 2) % 4 {
                    disagree += 1;
                }
            }
            let flip = labeled > 0 && 2 * disagree > labeled;
            let mut strand = if flip { s.reversed() } else { s.clone() };
            strand.directed = labeled > 0;
            OrientedStrand { strand, undetermined: labeled == 0 }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> FilterBank {
        FilterBank::new(32, 17, 4.0, 1.8, 4.0).unwrap()
    }

    #[test]
    fn frame_bins() {
        let az: Vec<(u32, f64)> = (0..24).map(|i| (i, -PI / 2.0 + PI * i as f64 / 23.0)).collect();
        assert_eq!(select_frames(&az, PI / 8.0).len(), 8);
        assert_eq!(select_frames(&[(7, 0.3)], PI / 8.0), vec![7]);
        assert_eq!(select_frames(&[(2, 0.1), (1, 0.12)], PI / 8.0).len(), 1);
        // equal distance from the center: lower id wins
        assert_eq!(select_frames(&[(5, 0.0), (3, 0.0)], PI / 8.0), vec![3]);
    }

    #[test]
    fn constant_image_ties_to_first_filter() {
        let img = Raster::filled(30, 30, 0.7);
        let mask = Raster::filled(30, 30, true);
        let m = orientation_map(&img, &mask, &bank());
        assert!(m.theta.data.iter().all(|t| *t == Some(0.0)));
        assert!(m.response.data.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn empty_mask_gives_empty_map_and_no_strands() {
        let img = Raster::from_fn(30, 30, |x, _| (x as f64).sin());
        let mask = Raster::filled(30, 30, false);
        let m = orientation_map(&img, &mask, &bank());
        assert!(m.theta.data.iter().all(Option::is_none));
        let p = TraceParams { step: 1.0, min_response: 0.1, max_turn: 15f64.to_radians(), min_length: 20.0 };
        assert!(trace_strands(&m, &mask, &p).is_empty());
    }

    #[test]
    fn filter_bank_requires_four() {
        assert!(FilterBank::new(3, 17, 4.0, 1.8, 4.0).is_err());
    }

    fn labels_of(code: u8) -> Raster<u8> {
        Raster::filled(40, 10, code)
    }

    fn rightward() -> Strand2D {
        Strand2D { points: (0..30).map(|i| Point2::new(i as f64 + 2.0, 5.0)).collect(), directed: false }
    }

    #[test]
    fn voting_flips_on_opposite_bins() {
        let s = rightward();
        let keep = orient_strands(std::slice::from_ref(&s), &labels_of(1));
        assert_eq!(keep[0].strand.points, s.points);
        assert!(keep[0].strand.directed);
        let flip = orient_strands(std::slice::from_ref(&s), &labels_of(3));
        assert_eq!(flip[0].strand.points[0], s.points[29]);
        let none = orient_strands(std::slice::from_ref(&s), &labels_of(5));
        assert!(none[0].undetermined && !none[0].strand.directed);
        assert_eq!(none[0].strand.points, s.points);
    }

    #[test]
    fn voting_majority_counts() {
        let s = rightward();
        for (disagree, flipped) in [(18usize, true), (12, false), (15, false)] {
            // first `disagree` points sit on bin2 labels, the rest on bin0
            let mut labels = Raster::filled(40, 10, 1u8);
            for p in &s.points[..disagree] {
                labels.set(p.x as usize, 5, 3);
            }
            let out = orient_strands(std::slice::from_ref(&s), &labels);
            assert_eq!(out[0].strand.points[0] != s.points[0], flipped, "{disagree}");
        }
    }
}
