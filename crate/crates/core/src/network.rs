//! Curve network over a mesh: corner vertices, boundary curves and face
//! loops, with edge splits (X-nodes) and central face splits (T-nodes).
//!
//! Entities live in arenas and are never removed. Splitting an edge gives
//! it two children and replaces it in every active loop; splitting a face
//! retires it in favor of its sub-faces.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Vector};
use crate::implicit::ImplicitSurface;
use crate::mesh::{Polyline, TriMesh};
use crate::ribbon::{bounding_plane, Ribbon};

pub type VertexId = usize;
pub type EdgeId = usize;
pub type FaceId = usize;

/// On-disk network description. Loop entries are signed edge ids; a
/// negative id traverses the edge from `v[1]` to `v[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
    pub faces: Vec<FaceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: i64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: i64,
    pub v: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub id: i64,
    #[serde(rename = "loop")]
    pub loop_: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct NetVertex {
    pub position: Point,
    pub normal: Vector,
    pub id: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Interior curve traced on the mesh.
    Curve,
    /// Part of the open mesh boundary.
    Boundary,
    /// Created by a central face split, runs from a side midpoint to the
    /// face center.
    Spoke,
}

/// Inherited midpoint of an edge whose neighbor was centrally split while
/// the edge itself stayed within tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TNode {
    pub vertex: VertexId,
    pub halves: [EdgeId; 2],
}

#[derive(Debug, Clone)]
pub struct NetEdge {
    pub id: i64,
    pub v: [VertexId; 2],
    pub kind: EdgeKind,
    /// Parent edge and the covered fraction of its arc length.
    pub parent: Option<(EdgeId, [f64; 2])>,
    pub polyline: Option<Polyline>,
    pub bounding: Option<Arc<ImplicitSurface>>,
    pub ribbon: Option<Arc<Ribbon>>,
    pub children: Option<[EdgeId; 2]>,
    pub tnode: Option<TNode>,
    /// Bumped whenever the ribbon or bounding is replaced.
    pub revision: u64,
}

impl NetEdge {
    fn new(id: i64, v: [VertexId; 2], kind: EdgeKind) -> Self {
        NetEdge {
            id,
            v,
            kind,
            parent: None,
            polyline: None,
            bounding: None,
            ribbon: None,
            children: None,
            tnode: None,
            revision: 0,
        }
    }

    /// (start, end) vertices when traversed forward or backward.
    pub fn ends(&self, forward: bool) -> (VertexId, VertexId) {
        if forward {
            (self.v[0], self.v[1])
        } else {
            (self.v[1], self.v[0])
        }
    }
}

/// One oriented loop entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopSide {
    pub edge: EdgeId,
    pub forward: bool,
}

#[derive(Debug, Clone, Copy)]
enum Grouped {
    Pair(LoopSide, LoopSide),
    Single(LoopSide),
}

#[derive(Debug, Clone)]
pub struct NetFace {
    pub id: i64,
    pub sides: Vec<LoopSide>,
    pub parent: Option<FaceId>,
    pub children: Vec<FaceId>,
}

impl NetFace {
    pub fn is_active(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct CurveNetwork {
    vertices: Vec<NetVertex>,
    edges: Vec<NetEdge>,
    faces: Vec<NetFace>,
    scale: f64,
}

pub fn load_network(path: impl AsRef<Path>, m: &TriMesh) -> Result<CurveNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::SchemaError(format!("{}: {e}", path.display())))?;
    let file: NetworkFile = serde_json::from_str(&text)
        .map_err(|e| Error::SchemaError(format!("{}: {e}", path.display())))?;
    CurveNetwork::from_file(&file, m)
}

impl CurveNetwork {
    pub fn from_file(file: &NetworkFile, m: &TriMesh) -> Result<Self> {
        let schema = |msg: String| Error::SchemaError(msg);
        let mut vmap = HashMap::new();
        let mut vertices = Vec::with_capacity(file.vertices.len());
        for rec in &file.vertices {
            if !rec.position.iter().all(|c| c.is_finite()) {
                return Err(schema(format!("vertex {} has a non-finite position", rec.id)));
            }
            if vmap.insert(rec.id, vertices.len()).is_some() {
                return Err(schema(format!("duplicate vertex id {}", rec.id)));
            }
            let hint = Point::from(rec.position);
            let snapped = m.closest_point(&hint).point;
            vertices.push(NetVertex {
                position: snapped,
                normal: m.normal_at(&snapped),
                id: rec.id,
            });
        }
        let mut emap = HashMap::new();
        let mut edges = Vec::with_capacity(file.edges.len());
        for rec in &file.edges {
            if rec.id <= 0 {
                return Err(schema(format!("edge id {} must be positive", rec.id)));
            }
            let lookup = |id: i64| {
                vmap.get(&id)
                    .copied()
                    .ok_or_else(|| schema(format!("edge {} references unknown vertex {id}", rec.id)))
            };
            let v = [lookup(rec.v[0])?, lookup(rec.v[1])?];
            if v[0] == v[1] {
                return Err(schema(format!("edge {} is a self-loop", rec.id)));
            }
            if emap.insert(rec.id, edges.len()).is_some() {
                return Err(schema(format!("duplicate edge id {}", rec.id)));
            }
            edges.push(NetEdge::new(rec.id, v, EdgeKind::Curve));
        }
        let mut faces = Vec::with_capacity(file.faces.len());
        let mut fids = HashSet::new();
        for rec in &file.faces {
            if !fids.insert(rec.id) {
                return Err(schema(format!("duplicate face id {}", rec.id)));
            }
            if rec.loop_.len() < 2 {
                return Err(schema(format!("face {} has fewer than 2 sides", rec.id)));
            }
            let sides = rec
                .loop_
                .iter()
                .map(|&s| {
                    emap.get(&s.abs())
                        .map(|&edge| LoopSide {
                            edge,
                            forward: s > 0,
                        })
                        .ok_or_else(|| schema(format!("face {} references unknown edge {s}", rec.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            faces.push(NetFace {
                id: rec.id,
                sides,
                parent: None,
                children: Vec::new(),
            });
        }
        let mut net = CurveNetwork {
            vertices,
            edges,
            faces,
            scale: m.scale(),
        };
        net.validate()?;
        net.classify_boundary_edges(m);
        Ok(net)
    }

    /// Edges used by a single face whose endpoints both sit on the same open
    /// boundary loop of the mesh follow that boundary.
    fn classify_boundary_edges(&mut self, m: &TriMesh) {
        let loops = m.boundary_loops();
        if loops.is_empty() {
            return;
        }
        let tol = 1e-6 * m.scale();
        let on_loop = |p: &Point| {
            loops
                .iter()
                .position(|l| l.project(p).0 <= tol)
        };
        for e in 0..self.edges.len() {
            if self.edge_faces(e).len() != 1 {
                continue;
            }
            let [a, b] = self.edges[e].v;
            let (la, lb) = (
                on_loop(&self.vertices[a].position),
                on_loop(&self.vertices[b].position),
            );
            if la.is_some() && la == lb {
                self.edges[e].kind = EdgeKind::Boundary;
            }
        }
    }

    pub fn vertices(&self) -> &[NetVertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[NetEdge] {
        &self.edges
    }

    pub fn faces(&self) -> &[NetFace] {
        &self.faces
    }

    pub fn vertex(&self, v: VertexId) -> &NetVertex {
        &self.vertices[v]
    }

    pub fn edge(&self, e: EdgeId) -> &NetEdge {
        &self.edges[e]
    }

    pub fn edge_mut(&mut self, e: EdgeId) -> &mut NetEdge {
        &mut self.edges[e]
    }

    pub fn face(&self, f: FaceId) -> &NetFace {
        &self.faces[f]
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn active_faces(&self) -> impl Iterator<Item = FaceId> + '_ {
        (0..self.faces.len()).filter(|&f| self.faces[f].is_active())
    }

    /// Edges referenced by active loops, in first-use order.
    pub fn active_edges(&self) -> Vec<EdgeId> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for f in self.active_faces() {
            for s in &self.faces[f].sides {
                if seen.insert(s.edge) {
                    out.push(s.edge);
                }
            }
        }
        out
    }

    pub fn face_by_id(&self, id: i64) -> Option<FaceId> {
        self.faces.iter().position(|f| f.id == id)
    }

    pub fn edge_by_id(&self, id: i64) -> Option<EdgeId> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Corner vertices of a face in loop order.
    pub fn face_corners(&self, f: FaceId) -> Vec<VertexId> {
        self.faces[f]
            .sides
            .iter()
            .map(|s| self.edges[s.edge].ends(s.forward).0)
            .collect()
    }

    /// Active faces using edge `e`, with the traversal direction.
    pub fn edge_faces(&self, e: EdgeId) -> Vec<(FaceId, bool)> {
        self.active_faces()
            .flat_map(|f| {
                self.faces[f]
                    .sides
                    .iter()
                    .filter(move |s| s.edge == e)
                    .map(move |s| (f, s.forward))
            })
            .collect()
    }

    /// File form of the active network: every vertex, the edges used by
    /// active loops, and the active faces.
    pub fn to_file(&self) -> NetworkFile {
        let edges = self.active_edges();
        NetworkFile {
            vertices: self
                .vertices
                .iter()
                .map(|v| VertexRecord {
                    id: v.id,
                    position: [v.position.x, v.position.y, v.position.z],
                })
                .collect(),
            edges: edges
                .iter()
                .map(|&e| EdgeRecord {
                    id: self.edges[e].id,
                    v: self.edges[e].v.map(|v| self.vertices[v].id),
                })
                .collect(),
            faces: self
                .active_faces()
                .map(|f| FaceRecord {
                    id: self.faces[f].id,
                    loop_: self.faces[f]
                        .sides
                        .iter()
                        .map(|s| if s.forward { self.edges[s.edge].id } else { -self.edges[s.edge].id })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Checks loop closure, edge multiplicity and shared-edge orientation.
    pub fn validate(&self) -> Result<()> {
        let mut uses: HashMap<EdgeId, Vec<bool>> = HashMap::new();
        for f in self.active_faces() {
            let face = &self.faces[f];
            let n = face.sides.len();
            for (k, s) in face.sides.iter().enumerate() {
                let next = face.sides[(k + 1) % n];
                let end = self.edges[s.edge].ends(s.forward).1;
                let start = self.edges[next.edge].ends(next.forward).0;
                if end != start {
                    return Err(Error::OpenLoop {
                        face: face.id,
                        position: k,
                    });
                }
                uses.entry(s.edge).or_default().push(s.forward);
            }
        }
        let mut keys: Vec<_> = uses.keys().copied().collect();
        keys.sort_unstable();
        for e in keys {
            let dirs = &uses[&e];
            if dirs.len() > 2 {
                return Err(Error::NonManifoldEdge {
                    edge: self.edges[e].id,
                    count: dirs.len(),
                });
            }
            if dirs.len() == 2 && dirs[0] == dirs[1] {
                return Err(Error::InconsistentLoop(format!(
                    "edge {} has the same orientation in both faces",
                    self.edges[e].id
                )));
            }
        }
        Ok(())
    }

    fn next_edge_id(&self) -> i64 {
        self.edges.iter().map(|e| e.id).max().unwrap_or(0) + 1
    }

    fn next_face_id(&self) -> i64 {
        self.faces.iter().map(|f| f.id).max().unwrap_or(0) + 1
    }

    fn add_vertex(&mut self, position: Point, m: &TriMesh) -> VertexId {
        let id = self.vertices.iter().map(|v| v.id).max().unwrap_or(0) + 1;
        self.vertices.push(NetVertex {
            position,
            normal: m.normal_at(&position),
            id,
        });
        self.vertices.len() - 1
    }

    fn push_edge(&mut self, mut edge: NetEdge) -> EdgeId {
        edge.id = self.next_edge_id();
        self.edges.push(edge);
        self.edges.len() - 1
    }

    fn polyline_of(&self, e: EdgeId) -> Result<&Polyline> {
        self.edges[e]
            .polyline
            .as_ref()
            .ok_or_else(|| Error::InconsistentLoop(format!("edge {} has no polyline", self.edges[e].id)))
    }

    /// Vertex at half arc length plus the two polyline halves.
    fn halve(&mut self, e: EdgeId, m: &TriMesh) -> Result<(VertexId, Polyline, Polyline)> {
        let line = self.polyline_of(e)?.clone();
        let (a, b) = line.split_at(0.5 * line.length());
        let mid = *a.last().expect("non-empty half");
        let tol = 1e-9 * self.scale;
        let [v0, v1] = self.edges[e].v;
        for v in [v0, v1] {
            if (self.vertices[v].position - mid).norm() <= tol {
                return Err(Error::RefinementStalled(format!(
                    "edge {} is too short to split",
                    self.edges[e].id
                )));
            }
        }
        // traced polylines lie on the mesh, so the midpoint needs no snapping
        let v = self.add_vertex(mid, m);
        Ok((v, a, b))
    }

    fn replace_in_loops(&mut self, e: EdgeId, halves: [EdgeId; 2]) {
        for f in 0..self.faces.len() {
            if !self.faces[f].is_active() {
                continue;
            }
            let sides = &mut self.faces[f].sides;
            if let Some(k) = sides.iter().position(|s| s.edge == e) {
                let fwd = sides[k].forward;
                let repl = if fwd {
                    [
                        LoopSide { edge: halves[0], forward: true },
                        LoopSide { edge: halves[1], forward: true },
                    ]
                } else {
                    [
                        LoopSide { edge: halves[1], forward: false },
                        LoopSide { edge: halves[0], forward: false },
                    ]
                };
                sides.splice(k..=k, repl);
            }
        }
    }

    /// Splits edge `e` halfway along its polyline and replaces it by two
    /// children in every active loop. An inherited midpoint is promoted: its
    /// vertex and halves are reused, and the halves lose the inherited
    /// surfaces so they get their own.
    pub fn split_edge(&mut self, e: EdgeId, m: &TriMesh) -> Result<VertexId> {
        if self.edges[e].children.is_some() {
            return Err(Error::AlreadySplit(e));
        }
        if let Some(t) = self.edges[e].tnode {
            for h in t.halves {
                let half = &mut self.edges[h];
                half.ribbon = None;
                half.bounding = None;
                half.revision += 1;
            }
            self.edges[e].children = Some(t.halves);
            self.replace_in_loops(e, t.halves);
            return Ok(t.vertex);
        }
        let (mid, a, b) = self.halve(e, m)?;
        let parent = &self.edges[e];
        let (kind, [v0, v1]) = (parent.kind, parent.v);
        let mut c0 = NetEdge::new(0, [v0, mid], kind);
        c0.parent = Some((e, [0.0, 0.5]));
        c0.polyline = Some(a);
        let mut c1 = NetEdge::new(0, [mid, v1], kind);
        c1.parent = Some((e, [0.5, 1.0]));
        c1.polyline = Some(b);
        let halves = [self.push_edge(c0), self.push_edge(c1)];
        self.edges[e].children = Some(halves);
        self.replace_in_loops(e, halves);
        Ok(mid)
    }

    /// Inherited-midpoint halves for an unsplit edge: same ribbon and
    /// bounding objects as the parent, restricted to half the polyline.
    fn ensure_tnode(&mut self, e: EdgeId, m: &TriMesh) -> Result<TNode> {
        if let Some(t) = self.edges[e].tnode {
            return Ok(t);
        }
        let (mid, a, b) = self.halve(e, m)?;
        let parent = self.edges[e].clone();
        let mut halves = [0; 2];
        for (k, (line, ends, span)) in [
            (a, [parent.v[0], mid], [0.0, 0.5]),
            (b, [mid, parent.v[1]], [0.5, 1.0]),
        ]
        .into_iter()
        .enumerate()
        {
            let mut h = NetEdge::new(0, ends, parent.kind);
            h.parent = Some((e, span));
            h.polyline = Some(line);
            h.ribbon = parent.ribbon.clone();
            h.bounding = parent.bounding.clone();
            halves[k] = self.push_edge(h);
        }
        let t = TNode { vertex: mid, halves };
        self.edges[e].tnode = Some(t);
        Ok(t)
    }

    /// Two consecutive loop sides that are the children of one split edge.
    fn is_pair(&self, a: LoopSide, b: LoopSide) -> bool {
        let parent = |e: EdgeId| self.edges[e].parent.map(|p| p.0);
        match (parent(a.edge), parent(b.edge)) {
            (Some(pa), Some(pb)) if pa == pb && a.forward == b.forward => self.edges[pa]
                .children
                .is_some_and(|c| c.contains(&a.edge) && c.contains(&b.edge)),
            _ => false,
        }
    }

    /// Loop sides of `f` with split edges regrouped into their parent side.
    fn grouped_sides(&self, f: FaceId) -> Vec<Grouped> {
        let sides = &self.faces[f].sides;
        let n = sides.len();
        let start = (0..n)
            .find(|&k| !self.is_pair(sides[(k + n - 1) % n], sides[k]))
            .unwrap_or(0);
        let mut out = Vec::with_capacity(n);
        let mut k = 0;
        while k < n {
            let a = sides[(start + k) % n];
            let b = sides[(start + k + 1) % n];
            if k + 1 < n && self.is_pair(a, b) {
                out.push(Grouped::Pair(a, b));
                k += 2;
            } else {
                out.push(Grouped::Single(a));
                k += 1;
            }
        }
        out
    }

    /// Central split of face `f` around `center`: one four-sided sub-face
    /// per corner, joined by spokes from the side midpoints to the center.
    /// Sides that were not split beforehand become inherited-midpoint
    /// (T-node) halves. Returns the new faces.
    pub fn split_face(&mut self, f: FaceId, center: &Point, m: &TriMesh) -> Result<Vec<FaceId>> {
        if !self.faces[f].is_active() {
            return Err(Error::InconsistentLoop(format!(
                "face {} is already split",
                self.faces[f].id
            )));
        }
        let distance = m.closest_point(center).distance;
        if distance > 1e-6 * self.scale {
            return Err(Error::CenterOffMesh { distance });
        }
        let sides = self.grouped_sides(f);
        // (first half from the corner, second half to the next corner, midpoint)
        let mut halves = Vec::with_capacity(sides.len());
        for s in &sides {
            let entry = match *s {
                Grouped::Pair(a, b) => (a, b, self.edges[a.edge].ends(a.forward).1),
                Grouped::Single(s) => {
                    let t = self.ensure_tnode(s.edge, m)?;
                    let pair = t.halves;
                    if s.forward {
                        (
                            LoopSide { edge: pair[0], forward: true },
                            LoopSide { edge: pair[1], forward: true },
                            t.vertex,
                        )
                    } else {
                        (
                            LoopSide { edge: pair[1], forward: false },
                            LoopSide { edge: pair[0], forward: false },
                            t.vertex,
                        )
                    }
                }
            };
            halves.push(entry);
        }
        let tol = 1e-9 * self.scale;
        let corners: Vec<VertexId> = halves
            .iter()
            .map(|h| self.edges[h.0.edge].ends(h.0.forward).0)
            .collect();
        if corners
            .iter()
            .chain(halves.iter().map(|h| &h.2))
            .any(|&v| (self.vertices[v].position - center).norm() <= tol)
        {
            return Err(Error::RefinementStalled(format!(
                "center of face {} coincides with a face vertex",
                self.faces[f].id
            )));
        }
        let c = self.add_vertex(*center, m);
        let (cp, cn) = (self.vertices[c].position, self.vertices[c].normal);
        let mut spokes = Vec::with_capacity(sides.len());
        for h in &halves {
            let mv = &self.vertices[h.2];
            let plane = bounding_plane(&mv.position, &mv.normal, &cp, &cn, None)?;
            let bounding = Arc::new(ImplicitSurface::Plane(plane));
            let line = crate::mesh::trace_intersection(m, &bounding, &mv.position, &cp)?;
            let mut spoke = NetEdge::new(0, [h.2, c], EdgeKind::Spoke);
            spoke.polyline = Some(line);
            spoke.bounding = Some(bounding);
            spokes.push(self.push_edge(spoke));
        }
        let n = sides.len();
        let mut created = Vec::with_capacity(n);
        for k in 0..n {
            let prev = (k + n - 1) % n;
            let loop_sides = vec![
                halves[prev].1,
                halves[k].0,
                LoopSide { edge: spokes[k], forward: true },
                LoopSide { edge: spokes[prev], forward: false },
            ];
            let id = self.next_face_id();
            self.faces.push(NetFace {
                id,
                sides: loop_sides,
                parent: Some(f),
                children: Vec::new(),
            });
            created.push(self.faces.len() - 1);
        }
        self.faces[f].children = created.clone();
        Ok(created)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn square_file() -> NetworkFile {
        serde_json::from_str(
            r#"{
            "vertices": [
                {"id": 1, "position": [0.0, 0.0, 0.0]},
                {"id": 2, "position": [2.0, 0.0, 0.0]},
                {"id": 3, "position": [2.0, 2.0, 0.0]},
                {"id": 4, "position": [0.0, 2.0, 0.0]}
            ],
            "edges": [
                {"id": 1, "v": [1, 2]}, {"id": 2, "v": [2, 3]},
                {"id": 3, "v": [3, 4]}, {"id": 4, "v": [4, 1]}
            ],
            "faces": [{"id": 1, "loop": [1, 2, 3, 4]}]
        }"#,
        )
        .unwrap()
    }

    fn straight_polylines(net: &mut CurveNetwork) {
        for e in 0..net.edges.len() {
            let [a, b] = net.edges[e].v;
            let (pa, pb) = (net.vertices[a].position, net.vertices[b].position);
            net.edges[e].polyline = Some(Polyline::new(
                (0..=8).map(|i| pa + (pb - pa) * (i as f64 / 8.0)).collect(),
            ));
        }
    }

    #[test]
    fn cube_network_on_sphere_loads() {
        let m = fixtures::icosphere(3, 1.0);
        let net = CurveNetwork::from_file(&fixtures::cube_network(0.0), &m).unwrap();
        assert_eq!(net.active_faces().count(), 6);
        assert!(net.active_faces().all(|f| net.face(f).sides.len() == 4));
        assert_eq!(net.edges().len(), 12);
        for v in net.vertices() {
            assert!(m.closest_point(&v.position).distance < 1e-12);
            assert!((v.normal.norm() - 1.0).abs() < 1e-12);
        }
        assert!(net.edges().iter().all(|e| e.kind == EdgeKind::Curve));
    }

    #[test]
    fn loop_errors() {
        let m = fixtures::grid(4, 4, 2.0);
        let mut file = square_file();
        file.faces[0].loop_ = vec![1, 2, 4];
        assert!(matches!(
            CurveNetwork::from_file(&file, &m),
            Err(Error::OpenLoop { face: 1, position: 1 })
        ));

        let mut file = square_file();
        file.faces.push(FaceRecord { id: 2, loop_: vec![-4, -3, -2, -1] });
        file.faces.push(FaceRecord { id: 3, loop_: vec![1, 2, 3, 4] });
        assert!(matches!(
            CurveNetwork::from_file(&file, &m),
            Err(Error::NonManifoldEdge { edge: 1, count: 3 })
        ));

        let mut file = square_file();
        file.faces.push(FaceRecord { id: 2, loop_: vec![1, 2, 3, 4] });
        assert!(matches!(
            CurveNetwork::from_file(&file, &m),
            Err(Error::InconsistentLoop(_))
        ));

        let mut file = square_file();
        file.edges[0].v = [1, 9];
        assert!(matches!(CurveNetwork::from_file(&file, &m), Err(Error::SchemaError(_))));
    }

    #[test]
    fn boundary_edges_detected() {
        let m = fixtures::grid(4, 4, 2.0);
        let net = CurveNetwork::from_file(&square_file(), &m).unwrap();
        assert!(net.edges().iter().all(|e| e.kind == EdgeKind::Boundary));
    }

    #[test]
    fn split_edge_halves_polyline() {
        let m = fixtures::grid(4, 4, 2.0);
        let mut net = CurveNetwork::from_file(&square_file(), &m).unwrap();
        straight_polylines(&mut net);
        let parent = net.edges[0].polyline.clone().unwrap();
        let v = net.split_edge(0, &m).unwrap();
        assert!((net.vertex(v).position - Point::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let [c0, c1] = net.edge(0).children.unwrap();
        let joined: Vec<Point> = net.edge(c0).polyline.as_ref().unwrap().points().iter()
            .chain(&net.edge(c1).polyline.as_ref().unwrap().points()[1..])
            .copied()
            .collect();
        assert_eq!(joined, parent.points());
        assert_eq!(net.face(0).sides.len(), 5);
        net.validate().unwrap();
        assert!(matches!(net.split_edge(0, &m), Err(Error::AlreadySplit(0))));
    }

    #[test]
    fn split_face_without_edge_splits_creates_tnodes() {
        let m = fixtures::grid(8, 8, 2.0);
        let mut net = CurveNetwork::from_file(&square_file(), &m).unwrap();
        straight_polylines(&mut net);
        let sub = net.split_face(0, &Point::new(1.0, 1.0, 0.0), &m).unwrap();
        assert_eq!(sub.len(), 4);
        net.validate().unwrap();
        for e in 0..4 {
            let t = net.edge(e).tnode.expect("inherited midpoint");
            for h in t.halves {
                assert_eq!(net.edge(h).parent.unwrap().0, e);
            }
        }
        let spokes = net.edges().iter().filter(|e| e.kind == EdgeKind::Spoke).count();
        assert_eq!(spokes, 4);
        for f in &sub {
            assert_eq!(net.face(*f).sides.len(), 4);
        }
        assert!(matches!(
            net.split_face(sub[0], &Point::new(1.0, 1.0, 5.0), &m),
            Err(Error::CenterOffMesh { .. })
        ));
    }

    #[test]
    fn promoting_tnode_reuses_vertex() {
        let m = fixtures::grid(8, 8, 4.0);
        // two squares sharing edge 2
        let file: NetworkFile = serde_json::from_str(
            r#"{
            "vertices": [
                {"id": 1, "position": [0, 0, 0]}, {"id": 2, "position": [2, 0, 0]},
                {"id": 3, "position": [2, 2, 0]}, {"id": 4, "position": [0, 2, 0]},
                {"id": 5, "position": [4, 0, 0]}, {"id": 6, "position": [4, 2, 0]}
            ],
            "edges": [
                {"id": 1, "v": [1, 2]}, {"id": 2, "v": [2, 3]}, {"id": 3, "v": [3, 4]},
                {"id": 4, "v": [4, 1]}, {"id": 5, "v": [2, 5]}, {"id": 6, "v": [5, 6]},
                {"id": 7, "v": [6, 3]}
            ],
            "faces": [{"id": 1, "loop": [1, 2, 3, 4]}, {"id": 2, "loop": [5, 6, 7, -2]}]
        }"#,
        )
        .unwrap();
        let mut net = CurveNetwork::from_file(&file, &m).unwrap();
        straight_polylines(&mut net);
        net.split_face(0, &Point::new(1.0, 1.0, 0.0), &m).unwrap();
        net.validate().unwrap();
        let t = net.edge(1).tnode.unwrap();
        let v = net.split_edge(1, &m).unwrap();
        assert_eq!(v, t.vertex);
        assert_eq!(net.face(1).sides.len(), 5);
        net.validate().unwrap();
    }
}
