//! Bounding-volume hierarchy over triangles for closest-point queries.

use crate::geom::{closest_point_on_triangle, Aabb, Point};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    /// Leaf: first index into `order`. Inner: index of the left child; the
    /// right child follows it.
    first: u32,
    /// Zero for inner nodes.
    count: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

/// Result of a nearest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub point: Point,
    pub distance: f64,
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

impl Bvh {
    pub fn build(vertices: &[Point], triangles: &[[usize; 3]]) -> Self {
        let boxes: Vec<Aabb> = triangles
            .iter()
            .map(|t| Aabb::from_points(t.iter().map(|&i| &vertices[i])))
            .collect();
        let centroids: Vec<Point> = boxes.iter().map(Aabb::center).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1),
            order: (0..triangles.len() as u32).collect(),
        };
        if !triangles.is_empty() {
            bvh.nodes.push(Node {
                bbox: Aabb::empty(),
                first: 0,
                count: 0,
            });
            bvh.split(0, 0, triangles.len(), &boxes, &centroids);
        }
        bvh
    }

    fn split(&mut self, node: usize, start: usize, end: usize, boxes: &[Aabb], centroids: &[Point]) {
        let slice = &mut self.order[start..end];
        let bbox = slice
            .iter()
            .fold(Aabb::empty(), |b, &t| b.union(&boxes[t as usize]));
        self.nodes[node].bbox = bbox;
        if end - start <= LEAF_SIZE {
            self.nodes[node].first = start as u32;
            self.nodes[node].count = (end - start) as u32;
            return;
        }
        let cbox = Aabb::from_points(slice.iter().map(|&t| &centroids[t as usize]));
        let axis = cbox.longest_axis();
        let mid = (end - start) / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
        });
        let left = self.nodes.len();
        for _ in 0..2 {
            self.nodes.push(Node {
                bbox: Aabb::empty(),
                first: 0,
                count: 0,
            });
        }
        self.nodes[node].first = left as u32;
        self.split(left, start, start + mid, boxes, centroids);
        self.split(left + 1, start + mid, end, boxes, centroids);
    }

    /// Exact nearest point on the triangle set. `None` only for an empty tree.
    pub fn nearest(&self, vertices: &[Point], triangles: &[[usize; 3]], p: &Point) -> Option<Nearest> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<Nearest> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack = vec![(0usize, self.nodes[0].bbox.distance_squared(p))];
        while let Some((idx, d2)) = stack.pop() {
            if d2 > best_d2 {
                continue;
            }
            let node = &self.nodes[idx];
            if node.count > 0 {
                let lo = node.first as usize;
                for &t in &self.order[lo..lo + node.count as usize] {
                    let [a, b, c] = triangles[t as usize];
                    let (q, bary) = closest_point_on_triangle(p, &vertices[a], &vertices[b], &vertices[c]);
                    let d2 = (q - p).norm_squared();
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = Some(Nearest {
                            point: q,
                            distance: 0.0,
                            triangle: t as usize,
                            barycentric: bary,
                        });
                    }
                }
            } else {
                let l = node.first as usize;
                let dl = self.nodes[l].bbox.distance_squared(p);
                let dr = self.nodes[l + 1].bbox.distance_squared(p);
                // nearer child is popped first
                if dl < dr {
                    stack.push((l + 1, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((l + 1, dr));
                }
            }
        }
        best.map(|mut n| {
            n.distance = best_d2.sqrt();
            n
        })
    }
}
