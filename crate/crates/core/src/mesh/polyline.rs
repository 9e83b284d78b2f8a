use serde::{Deserialize, Serialize};

use crate::geom::{closest_point_on_segment, Point};

/// Ordered point sequence with a cumulative arc-length table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polyline {
    points: Vec<Point>,
    arclen: Vec<f64>,
}

impl From<Vec<Point>> for Polyline {
    fn from(points: Vec<Point>) -> Self {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Point> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    /// Drops exact consecutive duplicates.
    pub fn new(points: Vec<Point>) -> Self {
        Polyline::with_tolerance(points, 0.0)
    }

    /// Drops consecutive points closer than `tol`; the last input point is
    /// always kept.
    pub fn with_tolerance(points: Vec<Point>, tol: f64) -> Self {
        let mut kept: Vec<Point> = Vec::with_capacity(points.len());
        let count = points.len();
        for (i, p) in points.into_iter().enumerate() {
            match kept.last() {
                Some(q) if (p - q).norm() <= tol => {
                    if i + 1 == count && kept.len() > 1 {
                        *kept.last_mut().unwrap() = p;
                    }
                }
                _ => kept.push(p),
            }
        }
        let mut arclen = Vec::with_capacity(kept.len());
        let mut s = 0.0;
        for (i, p) in kept.iter().enumerate() {
            if i > 0 {
                s += (p - kept[i - 1]).norm();
            }
            arclen.push(s);
        }
        Polyline {
            points: kept,
            arclen,
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn arclen(&self) -> &[f64] {
        &self.arclen
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.arclen.last().copied().unwrap_or(0.0)
    }

    pub fn first(&self) -> Option<&Point> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&Point> {
        self.points.last()
    }

    pub fn reversed(&self) -> Polyline {
        let mut pts = self.points.clone();
        pts.reverse();
        Polyline::new(pts)
    }

    /// Segment index containing arc length `s` (clamped to the curve).
    fn segment_at(&self, s: f64) -> usize {
        let n = self.arclen.len();
        match self.arclen.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(n.saturating_sub(2)),
            Err(i) => i.saturating_sub(1).min(n.saturating_sub(2)),
        }
    }

    /// Point at arc length `s`, clamped to the curve.
    pub fn point_at(&self, s: f64) -> Point {
        if self.points.len() < 2 {
            return self.points[0];
        }
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let (s0, s1) = (self.arclen[i], self.arclen[i + 1]);
        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.points[i] + (self.points[i + 1] - self.points[i]) * t
    }

    pub fn midpoint(&self) -> Point {
        self.point_at(0.5 * self.length())
    }

    /// Splits at arc length `s`; both halves contain the split point.
    pub fn split_at(&self, s: f64) -> (Polyline, Polyline) {
        let m = self.point_at(s);
        let mut head: Vec<Point> = Vec::new();
        let mut tail: Vec<Point> = vec![m];
        for (p, &a) in self.points.iter().zip(&self.arclen) {
            if a < s {
                head.push(*p);
            } else if a > s {
                tail.push(*p);
            }
        }
        head.push(m);
        (Polyline::new(head), Polyline::new(tail))
    }

    /// Distance from `p` to the curve and the arc length of the foot point.
    pub fn project(&self, p: &Point) -> (f64, f64) {
        if self.points.len() == 1 {
            return ((p - self.points[0]).norm(), 0.0);
        }
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..self.points.len() - 1 {
            let (q, t) = closest_point_on_segment(p, &self.points[i], &self.points[i + 1]);
            let d = (p - q).norm();
            if d < best.0 {
                let s = self.arclen[i] + t * (self.arclen[i + 1] - self.arclen[i]);
                best = (d, s);
            }
        }
        best
    }

    /// `n` points evenly spaced in arc length, endpoints included.
    pub fn resample(&self, n: usize) -> Vec<Point> {
        match n {
            0 => Vec::new(),
            1 => vec![self.midpoint()],
            _ => {
                let len = self.length();
                (0..n)
                    .map(|i| self.point_at(len * i as f64 / (n - 1) as f64))
                    .collect()
            }
        }
    }
}

/// Part of a (possibly closed) point chain between arc lengths `sa` and
/// `sb`, ordered from `sa` to `sb`. Closed chains take the shorter way
/// around. Endpoints are the interpolated chain points.
pub(crate) fn sub_chain(chain: &Polyline, closed: bool, sa: f64, sb: f64) -> Vec<Point> {
    if !closed {
        let (lo, hi, flip) = if sa <= sb { (sa, sb, false) } else { (sb, sa, true) };
        let mut out = vec![chain.point_at(lo)];
        for (p, &s) in chain.points.iter().zip(&chain.arclen) {
            if s > lo && s < hi {
                out.push(*p);
            }
        }
        out.push(chain.point_at(hi));
        if flip {
            out.reverse();
        }
        return out;
    }
    // closed: the last point equals the first, so the chain length is the
    // loop perimeter
    let total = chain.length();
    let forward = (sb - sa).rem_euclid(total);
    let (start, span, flip) = if forward <= total - forward {
        (sa, forward, false)
    } else {
        (sb, total - forward, true)
    };
    let n = chain.points.len() - 1;
    let mut out = vec![chain.point_at(start)];
    for lap in 0..2 {
        for i in 0..n {
            let s = chain.arclen[i] + lap as f64 * total;
            if s > start && s < start + span {
                out.push(chain.points[i]);
            }
        }
    }
    out.push(chain.point_at((start + span).rem_euclid(total)));
    if flip {
        out.reverse();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polyline {
        Polyline::new(vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 0.0),
        ])
    }

    #[test]
    fn arclength_and_interpolation() {
        let p = Polyline::new(vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(0.0, 0.0, 0.0),
            Point::new(3.0, 4.0, 0.0),
            Point::new(3.0, 4.0, 2.0),
        ]);
        assert_eq!(p.len(), 3);
        assert_eq!(p.arclen(), &[0.0, 5.0, 7.0]);
        assert_eq!(p.point_at(6.0), Point::new(3.0, 4.0, 1.0));
        assert_eq!(p.point_at(-1.0), Point::origin());
        let (a, b) = p.split_at(3.5);
        assert!((a.length() + b.length() - 7.0).abs() < 1e-14);
        assert_eq!(a.last(), b.first());
    }

    #[test]
    fn closed_sub_chain_takes_shorter_way() {
        let sq = square();
        let arc = sub_chain(&sq, true, 3.5, 0.5);
        assert_eq!(
            arc,
            vec![
                Point::new(0.0, 0.5, 0.0),
                Point::new(0.0, 0.0, 0.0),
                Point::new(0.5, 0.0, 0.0),
            ]
        );
        let back = sub_chain(&sq, true, 0.5, 3.5);
        assert_eq!(back.first(), arc.last());
        assert_eq!(back.len(), 3);
        let open = sub_chain(&sq, false, 2.5, 0.5);
        assert_eq!(open.len(), 4);
        assert_eq!(open[0], Point::new(0.5, 1.0, 0.0));
    }

    #[test]
    fn serde_keeps_points() {
        let sq = square();
        let json = serde_json::to_string(&sq).unwrap();
        let back: Polyline = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sq);
    }
}
