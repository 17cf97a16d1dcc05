//! Lifting traced 2D strands to 3D, peak removal and cross-frame merging.

use std::collections::{BTreeSet, HashMap};

use log::debug;

use crate::geom::closest_on_segment;
use crate::scene::{CameraFrame, Strand, StrandSet};
use crate::strands2d::Strand2D;
use crate::Vec3;

/// Merged query strands with the frame each one came from.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryStrands {
    pub set: StrandSet,
    pub frames: Vec<u32>,
}

impl QueryStrands {
    pub fn new(pieces: Vec<(Strand, u32)>) -> Self {
        let (strands, frames) = pieces.into_iter().unzip();
        QueryStrands { set: StrandSet::new(strands, "query"), frames }
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

/// Unprojects every strand point with valid depth. Points without depth
/// split a strand; pieces with fewer than two distinct points are dropped.
/// Returns the lifted pieces and the number of 2D strands that produced
/// nothing.
pub fn lift_strands(strands: &[Strand2D], frame: &CameraFrame) -> (Vec<Strand>, usize) {
    let mut out = Vec::new();
    let mut dropped = 0;
    for s in strands {
        let before = out.len();
        let mut cur: Vec<Vec3> = Vec::new();
        for p in &s.points {
            let lifted = frame.depth_at(p.x, p.y).and_then(|d| frame.unproject(p, d).ok());
            match lifted {
                Some(x) => cur.push(x),
                None => out.extend(Strand::from_points_dedup(std::mem::take(&mut cur))),
            }
        }
        out.extend(Strand::from_points_dedup(cur));
        if out.len() == before {
            dropped += 1;
        }
    }
    (out, dropped)
}

/// Drops vertices farther than `threshold` from the previous kept vertex.
/// An isolated outlier is skipped; a jump followed by a consistent run
/// starts a new piece. Pieces with fewer than two vertices are discarded.
pub fn remove_peaks(strand: &Strand, threshold: f64) -> Vec<Strand> {
    let v = strand.vertices();
    let mut pieces = Vec::new();
    let mut cur = vec![v[0]];
    for i in 1..v.len() {
        let last = *cur.last().unwrap();
        if (v[i] - last).norm() <= threshold {
            cur.push(v[i]);
            continue;
        }
        let Some(next) = v.get(i + 1) else { break };
        if (next - last).norm() <= threshold {
            continue;
        }
        if (next - v[i]).norm() <= threshold {
            pieces.extend(Strand::from_points_dedup(std::mem::replace(&mut cur, vec![v[i]])));
        }
    }
    pieces.extend(Strand::from_points_dedup(cur));
    pieces
}

#[derive(Debug, Clone, Copy)]
struct Overlap {
    /// First and last vertex of the run on strand `a`.
    a0: usize,
    a1: usize,
    /// Closest-point parameters on strand `b` (segment index + fraction).
    t0: f64,
    t1: f64,
    length: f64,
}

/// Closest point on a polyline; returns (point, parameter, distance, segment tangent).
fn closest_on_polyline(p: &Vec3, pts: &[Vec3]) -> (Vec3, f64, f64, Vec3) {
    let mut best = (pts[0], 0.0, f64::INFINITY, Vec3::zeros());
    for (k, w) in pts.windows(2).enumerate() {
        let (q, t) = closest_on_segment(p, &w[0], &w[1]);
        let d = (p - q).norm();
        if d < best.2 {
            best = (q, k as f64 + t, d, (w[1] - w[0]).normalize());
        }
    }
    best
}

/// Longest run of `a`'s vertices within `delta` of `b` whose tangents agree
/// with `b` on average.
fn overlap(a: &Strand, b: &Strand, delta: f64) -> Option<Overlap> {
    let av = a.vertices();
    let info: Vec<(Vec3, f64, f64, Vec3)> = av.iter().map(|p| closest_on_polyline(p, b.vertices())).collect();
    let mut best: Option<Overlap> = None;
    let mut i = 0;
    while i < av.len() {
        if info[i].2 >= delta {
            i += 1;
            continue;
        }
        let start = i;
        while i < av.len() && info[i].2 < delta {
            i += 1;
        }
        let end = i - 1;
        if end - start + 1 < 3 {
            continue;
        }
        let dot: f64 = (start..=end).map(|k| a.tangents()[k].dot(&info[k].3)).sum::<f64>() / (end - start + 1) as f64;
        if dot <= 0.0 || info[end].1 <= info[start].1 {
            continue;
        }
        let length: f64 = av[start..=end].windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        if best.is_none_or(|o| length > o.length) {
            best = Some(Overlap { a0: start, a1: end, t0: info[start].1, t1: info[end].1, length });
        }
    }
    best
}

fn path_length(p: &[Vec3]) -> f64 {
    p.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Drops vertices that would turn the polyline back by more than 90 degrees.
fn remove_reversals(pts: Vec<Vec3>) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(pts.len());
    for p in pts {
        if let Some(last) = out.last() {
            if (p - last).norm() == 0.0 {
                continue;
            }
        }
        if out.len() >= 2 {
            let n = out.len();
            let prev = out[n - 1] - out[n - 2];
            if prev.dot(&(p - out[n - 1])) < 0.0 {
                continue;
            }
        }
        out.push(p);
    }
    out
}

/// Combines `b` into `a` over their overlap: the longer lead-in, the averaged
/// overlap, then the longer tail.
fn combine(a: &Strand, b: &Strand, o: &Overlap) -> Option<Strand> {
    let av = a.vertices();
    let bv = b.vertices();
    let b_pre_end = o.t0.floor() as usize; // vertices 0..=b_pre_end precede t0
    let b_post_start = (o.t1.floor() as usize) + 1;
    let a_pre = &av[..o.a0];
    let b_pre: &[Vec3] = if o.t0 > 0.0 { &bv[..=b_pre_end.min(bv.len() - 1)] } else { &[] };
    let a_post = &av[o.a1 + 1..];
    let b_post: &[Vec3] = if b_post_start < bv.len() { &bv[b_post_start..] } else { &[] };
    let mut pts: Vec<Vec3> = Vec::new();
    let pre = if path_length(b_pre) > path_length(a_pre) { b_pre } else { a_pre };
    pts.extend_from_slice(pre);
    for k in o.a0..=o.a1 {
        let (q, ..) = closest_on_polyline(&av[k], bv);
        pts.push((av[k] + q) * 0.5);
    }
    let post = if path_length(b_post) > path_length(a_post) { b_post } else { a_post };
    pts.extend_from_slice(post);
    Strand::from_points_dedup(remove_reversals(pts))
}

/// Spatial hash of strand vertices used to find candidate pairs.
fn candidate_pairs(strands: &[Strand], cell: f64) -> Vec<(usize, usize)> {
    let key = |p: &Vec3| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, s) in strands.iter().enumerate() {
        let mut keys: Vec<_> = s.vertices().iter().map(key).collect();
        keys.sort_unstable();
        keys.dedup();
        for k in keys {
            grid.entry(k).or_default().push(i);
        }
    }
    let mut pairs = BTreeSet::new();
    for (i, s) in strands.iter().enumerate() {
        for p in s.vertices() {
            let (x, y, z) = key(p);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if let Some(list) = grid.get(&(x + dx, y + dy, z + dz)) {
                            for &j in list {
                                if j > i {
                                    pairs.insert((i, j));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    pairs.into_iter().collect()
}

/// Merges overlapping same-direction strands until at most `1.5 * target`
/// remain or nothing qualifies, then keeps the `target` longest if still
/// above that bound.
pub fn merge_strands(input: Vec<(Strand, u32)>, delta: f64, target: usize) -> QueryStrands {
    let limit = (1.5 * target as f64).floor() as usize;
    let mut items = merge_overlapping(input, delta, limit);
    if items.len() > limit {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by(|&x, &y| items[y].0.length().total_cmp(&items[x].0.length()).then(x.cmp(&y)));
        order.truncate(target);
        let keep: BTreeSet<usize> = order.into_iter().collect();
        items = items.into_iter().enumerate().filter(|(k, _)| keep.contains(k)).map(|(_, it)| it).collect();
    }
    QueryStrands::new(items)
}

/// The merging loop alone: pairs are merged by descending overlap length
/// until at most `limit` strands remain or no pair qualifies.
pub fn merge_overlapping(input: Vec<(Strand, u32)>, delta: f64, limit: usize) -> Vec<(Strand, u32)> {
    let mut items = input;
    'rounds: while items.len() > limit {
        let strands: Vec<Strand> = items.iter().map(|(s, _)| s.clone()).collect();
        let max_seg =
            strands.iter().flat_map(|s| s.vertices().windows(2).map(|w| (w[1] - w[0]).norm())).fold(0.0, f64::max);
        let pairs = candidate_pairs(&strands, delta + max_seg);
        let mut scored: Vec<(f64, usize, usize, Overlap)> = Vec::new();
        for (i, j) in pairs {
            let ab = overlap(&strands[i], &strands[j], delta).map(|o| (o, i, j));
            let ba = overlap(&strands[j], &strands[i], delta).map(|o| (o, j, i));
            let pick = match (ab, ba) {
                (Some(x), Some(y)) => Some(if y.0.length > x.0.length { y } else { x }),
                (x, y) => x.or(y),
            };
            if let Some((o, a, b)) = pick {
                scored.push((o.length, a, b, o));
            }
        }
        if scored.is_empty() {
            break;
        }
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1.min(x.2), x.1, x.2).cmp(&(y.1.min(y.2), y.1, y.2))));
        let mut used = vec![false; items.len()];
        let mut merged: Vec<(Strand, u32)> = Vec::new();
        let mut count = items.len();
        let mut progressed = false;
        for (_, a, b, o) in scored {
            if count <= limit {
                break;
            }
            if used[a] || used[b] {
                continue;
            }
            if let Some(s) = combine(&strands[a], &strands[b], &o) {
                used[a] = true;
                used[b] = true;
                merged.push((s, items[a].1));
                count -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break 'rounds;
        }
        let mut next: Vec<(Strand, u32)> =
            items.into_iter().enumerate().filter(|(k, _)| !used[*k]).map(|(_, it)| it).collect();
        next.extend(merged);
        items = next;
        debug!("merge round: {} strands", items.len());
    }
    items
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, step: f64, offset: Vec3) -> Strand {
        Strand::new((0..n).map(|i| offset + Vec3::new(i as f64 * step, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn peaks_smooth_strand_unchanged() {
        let s = line(20, 0.001, Vec3::zeros());
        let out = remove_peaks(&s, 0.002);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].vertices(), s.vertices());
    }

    #[test]
    fn peaks_single_spike_removed() {
        let mut v: Vec<Vec3> = line(20, 0.001, Vec3::zeros()).vertices().to_vec();
        v[7].y += 0.01;
        let out = remove_peaks(&Strand::new(v.clone()).unwrap(), 0.002);
        assert_eq!(out.len(), 1);
        let mut want = v.clone();
        want.remove(7);
        assert_eq!(out[0].vertices(), &want[..]);
    }

    #[test]
    fn peaks_alternating_spikes() {
        // good vertices on a line, every other vertex lifted far away
        let mut v = Vec::new();
        for i in 0..21 {
            let base = Vec3::new(i as f64 * 0.0005, 0.0, 0.0);
            v.push(if i % 2 == 1 { base + Vec3::new(0.0, 0.05, 0.0) } else { base });
        }
        let out = remove_peaks(&Strand::new(v.clone()).unwrap(), 0.002);
        let want: Vec<Vec3> = v.iter().step_by(2).copied().collect();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].vertices(), &want[..]);
    }

    #[test]
    fn peaks_gap_splits() {
        let mut v: Vec<Vec3> = line(10, 0.001, Vec3::zeros()).vertices().to_vec();
        v.extend(line(10, 0.001, Vec3::new(0.05, 0.0, 0.0)).vertices());
        let out = remove_peaks(&Strand::new(v).unwrap(), 0.002);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].len(), 10);
        assert_eq!(out[1].len(), 10);
    }

    #[test]
    fn merge_identical_and_antiparallel() {
        let a = line(30, 0.001, Vec3::zeros());
        let out = merge_strands(vec![(a.clone(), 0), (a.clone(), 1)], 0.004, 1);
        assert_eq!(out.len(), 1);
        assert_eq!(out.set.strands[0].vertices(), a.vertices());
        let out = merge_overlapping(vec![(a.clone(), 0), (a.reversed(), 1)], 0.004, 1);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn merge_extends_with_tails() {
        let a = line(30, 0.001, Vec3::zeros());
        let b = line(30, 0.001, Vec3::new(0.015, 0.001, 0.0));
        let out = merge_strands(vec![(a, 0), (b, 1)], 0.004, 1);
        assert_eq!(out.len(), 1);
        let s = &out.set.strands[0];
        assert!((s.vertices()[0].x - 0.0).abs() < 1e-12);
        assert!((s.vertices().last().unwrap().x - 0.044).abs() < 1e-12);
        assert!((s.length() - 0.044).abs() < 2e-3);
    }
}
