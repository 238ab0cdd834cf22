//! Tetrahedral meshes: storage, derived topology, named groups and diagnostics.
//!
//! A [`Mesh`] is immutable once built. Tets are positively oriented, every group
//! facet is a face of at least one tet, and the edge/face tables are derived from
//! the tets with sorted (global-index-ascending) vertex tuples.

mod crack;
pub mod generate;
mod msh;
mod order;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use crack::{extract_crack_front, insert_crack, CrackFront, FrontPolyline};
pub use msh::{parse_msh, write_msh};
pub use order::{assign_orders, ElementOrders, EntityOrders, OrderMap, ORDER_CAP};

pub type Point = Vector3<f64>;

/// Local vertex pairs of the six tet edges.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
/// Local vertex triples of the four tet faces; face `i` is opposite vertex `i`.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

pub const CRACK_SURFACE: &str = "CRACK_SURFACE";
pub const TIP_SET: &str = "TIP_SET";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKind {
    Vertices,
    Facets,
    Volume,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub name: String,
    pub tag: usize,
    pub kind: GroupKind,
    /// Node, facet or tet indices depending on `kind`.
    pub items: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Topology {
    pub edges: Vec<[usize; 2]>,
    pub faces: Vec<[usize; 3]>,
    pub tet_edges: Vec<[usize; 6]>,
    pub tet_faces: Vec<[usize; 4]>,
    pub face_tets: Vec<Vec<usize>>,
    pub node_tets: Vec<Vec<usize>>,
    edge_index: HashMap<[usize; 2], usize>,
    face_index: HashMap<[usize; 3], usize>,
}

impl Topology {
    fn build(n_nodes: usize, tets: &[[usize; 4]]) -> Self {
        let mut topo = Topology {
            node_tets: vec![Vec::new(); n_nodes],
            ..Default::default()
        };
        for (t, tet) in tets.iter().enumerate() {
            let mut te = [0; 6];
            for (k, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                let key = sorted2([tet[*a], tet[*b]]);
                let next = topo.edges.len();
                let id = *topo.edge_index.entry(key).or_insert(next);
                if id == next {
                    topo.edges.push(key);
                }
                te[k] = id;
            }
            let mut tf = [0; 4];
            for (k, [a, b, c]) in LOCAL_FACES.iter().enumerate() {
                let key = sorted3([tet[*a], tet[*b], tet[*c]]);
                let next = topo.faces.len();
                let id = *topo.face_index.entry(key).or_insert(next);
                if id == next {
                    topo.faces.push(key);
                    topo.face_tets.push(Vec::with_capacity(2));
                }
                topo.face_tets[id].push(t);
                tf[k] = id;
            }
            topo.tet_edges.push(te);
            topo.tet_faces.push(tf);
            for &n in tet {
                topo.node_tets[n].push(t);
            }
        }
        topo
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&sorted2([a, b])).copied()
    }

    pub fn face_id(&self, nodes: [usize; 3]) -> Option<usize> {
        self.face_index.get(&sorted3(nodes)).copied()
    }

    pub fn is_boundary_face(&self, face: usize) -> bool {
        self.face_tets[face].len() == 1
    }
}

pub fn sorted2([a, b]: [usize; 2]) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

pub fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub tets: Vec<[usize; 4]>,
    pub facets: Vec<[usize; 3]>,
    pub groups: BTreeMap<String, Group>,
    pub topo: Topology,
}

pub fn tet_signed_volume(p: [&Point; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

impl Mesh {
    /// Builds a mesh and checks orientation, index ranges and facet membership.
    pub fn new(
        nodes: Vec<Point>,
        tets: Vec<[usize; 4]>,
        facets: Vec<[usize; 3]>,
        groups: BTreeMap<String, Group>,
    ) -> Result<Self> {
        let n = nodes.len();
        for (t, tet) in tets.iter().enumerate() {
            if tet.iter().any(|&v| v >= n) {
                return Err(Error::Topology(format!(
                    "tet {t} references a missing node"
                )));
            }
            let vol = tet_signed_volume([
                &nodes[tet[0]],
                &nodes[tet[1]],
                &nodes[tet[2]],
                &nodes[tet[3]],
            ]);
            if vol <= 0.0 {
                return Err(Error::Topology(format!(
                    "tet {t} {:?} is inverted or degenerate (signed volume {vol:e})",
                    tet
                )));
            }
        }
        let topo = Topology::build(n, &tets);
        for (f, facet) in facets.iter().enumerate() {
            if facet.iter().any(|&v| v >= n) || topo.face_id(*facet).is_none() {
                return Err(Error::Topology(format!(
                    "facet {f} {:?} is not a face of any tet",
                    facet
                )));
            }
        }
        for g in groups.values() {
            let bound = match g.kind {
                GroupKind::Vertices => n,
                GroupKind::Facets => facets.len(),
                GroupKind::Volume => tets.len(),
            };
            if g.items.iter().any(|&i| i >= bound) {
                return Err(Error::Topology(format!(
                    "group {} has out-of-range items",
                    g.name
                )));
            }
        }
        Ok(Mesh {
            nodes,
            tets,
            facets,
            groups,
            topo,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_msh(&text)
    }

    pub fn group(&self, name: &str) -> Result<&Group> {
        self.groups
            .get(name)
            .ok_or_else(|| Error::MissingGroup(name.to_string()))
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.tets[t].map(|v| self.nodes[v])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let p = self.tet_points(t);
        tet_signed_volume([&p[0], &p[1], &p[2], &p[3]])
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    /// Face ids of the tet boundary (faces adjacent to exactly one tet).
    pub fn boundary_faces(&self) -> Vec<usize> {
        (0..self.topo.faces.len())
            .filter(|&f| self.topo.is_boundary_face(f))
            .collect()
    }

    /// Nodes touched by a group of any kind, sorted and unique.
    pub fn group_nodes(&self, name: &str) -> Result<Vec<usize>> {
        let g = self.group(name)?;
        let mut nodes: Vec<usize> = match g.kind {
            GroupKind::Vertices => g.items.clone(),
            GroupKind::Facets => g.items.iter().flat_map(|&f| self.facets[f]).collect(),
            GroupKind::Volume => g.items.iter().flat_map(|&t| self.tets[t]).collect(),
        };
        nodes.sort_unstable();
        nodes.dedup();
        Ok(nodes)
    }

    pub fn group_facets(&self, name: &str) -> Result<Vec<[usize; 3]>> {
        let g = self.group(name)?;
        if g.kind != GroupKind::Facets {
            return Err(Error::InvalidInput(format!(
                "group {name} is not a facet group"
            )));
        }
        Ok(g.items.iter().map(|&f| self.facets[f]).collect())
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    pub fn validate(&self) -> Diagnostics {
        validate(self)
    }
}

/// Radius ratio `3 r_in / r_circ`; 1 for the regular tet, 0 for degenerate ones.
pub fn radius_ratio(p: [&Point; 4]) -> f64 {
    let vol = tet_signed_volume(p).abs();
    if vol == 0.0 {
        return 0.0;
    }
    let area = |a: &Point, b: &Point, c: &Point| 0.5 * (b - a).cross(&(c - a)).norm();
    let surface = area(p[1], p[2], p[3])
        + area(p[0], p[2], p[3])
        + area(p[0], p[1], p[3])
        + area(p[0], p[1], p[2]);
    let r_in = 3.0 * vol / surface;
    let (a, b, c) = (p[1] - p[0], p[2] - p[0], p[3] - p[0]);
    let num = b.cross(&c) * a.norm_squared()
        + c.cross(&a) * b.norm_squared()
        + a.cross(&b) * c.norm_squared();
    let r_circ = num.norm() / (12.0 * vol);
    3.0 * r_in / r_circ
}

pub const QUALITY_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Offending entity ids (tets, facets or node pairs flattened).
    pub offending: Vec<usize>,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct Diagnostics {
    pub nodes: usize,
    pub tets: usize,
    pub facets: usize,
    pub edges: usize,
    pub faces: usize,
    pub boundary_faces: usize,
    pub volume: f64,
    pub min_quality: f64,
    pub max_quality: f64,
    pub groups: Vec<(String, GroupKind, usize)>,
    pub checks: Vec<Check>,
    /// Pairs of distinct nodes with coincident coordinates that are not crack twins.
    pub duplicate_pairs: Vec<(usize, usize)>,
}

impl Diagnostics {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl std::fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "nodes {}  tets {}  facets {}  edges {}  faces {}  boundary faces {}",
            self.nodes, self.tets, self.facets, self.edges, self.faces, self.boundary_faces
        )?;
        writeln!(
            f,
            "volume {:.6e}  quality min {:.4e} max {:.4e}",
            self.volume, self.min_quality, self.max_quality
        )?;
        for (name, kind, n) in &self.groups {
            writeln!(f, "group {name:<24} {kind:?} {n}")?;
        }
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            write!(f, "[{status}] {:<18} {}", c.name, c.message)?;
            if !c.offending.is_empty() {
                let shown: Vec<String> =
                    c.offending.iter().take(16).map(|i| i.to_string()).collect();
                write!(
                    f,
                    " ({}{})",
                    shown.join(","),
                    if c.offending.len() > 16 { ",..." } else { "" }
                )?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Pairs of nodes closer than `tol`, via coordinate binning.
pub(crate) fn coincident_pairs(points: &[Point], tol: f64) -> Vec<(usize, usize)> {
    let cell = tol.max(f64::MIN_POSITIVE) * 4.0;
    let key = |p: &Point| {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    };
    let mut bins: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        bins.entry(key(p)).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let k = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bin) = bins.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &j in bin {
                            if j > i && (points[j] - p).norm() <= tol {
                                pairs.push((i, j));
                            }
                        }
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

fn validate(mesh: &Mesh) -> Diagnostics {
    let mut checks = Vec::new();

    let inverted: Vec<usize> = (0..mesh.tets.len())
        .filter(|&t| mesh.tet_volume(t) <= 0.0)
        .collect();
    checks.push(Check {
        name: "orientation",
        passed: inverted.is_empty(),
        message: format!("{} non-positive tets", inverted.len()),
        offending: inverted,
    });

    let dangling: Vec<usize> = (0..mesh.facets.len())
        .filter(|&f| mesh.topo.face_id(mesh.facets[f]).is_none())
        .collect();
    checks.push(Check {
        name: "facet_membership",
        passed: dangling.is_empty(),
        message: format!("{} facets not on any tet", dangling.len()),
        offending: dangling,
    });

    let mut min_q = f64::INFINITY;
    let mut max_q: f64 = 0.0;
    let mut slivers = Vec::new();
    for t in 0..mesh.tets.len() {
        let p = mesh.tet_points(t);
        let q = radius_ratio([&p[0], &p[1], &p[2], &p[3]]);
        min_q = min_q.min(q);
        max_q = max_q.max(q);
        if q < QUALITY_THRESHOLD {
            slivers.push(t);
        }
    }
    checks.push(Check {
        name: "quality",
        passed: slivers.is_empty(),
        message: format!(
            "{} tets below radius ratio {QUALITY_THRESHOLD:e}",
            slivers.len()
        ),
        offending: slivers,
    });

    let (lo, hi) = mesh.bounding_box();
    let tol = 1e-10 * (hi - lo).norm().max(1.0);
    let twins = crack::crack_twin_nodes(mesh);
    let duplicate_pairs: Vec<(usize, usize)> = coincident_pairs(&mesh.nodes, tol)
        .into_iter()
        .filter(|(a, b)| !(twins.contains(a) && twins.contains(b)))
        .collect();
    checks.push(Check {
        name: "duplicate_nodes",
        passed: duplicate_pairs.is_empty(),
        message: format!("{} coincident node pairs", duplicate_pairs.len()),
        offending: duplicate_pairs.iter().flat_map(|&(a, b)| [a, b]).collect(),
    });

    if mesh.groups.contains_key(CRACK_SURFACE) {
        let bad = crack::check_crack_surface(mesh);
        checks.push(Check {
            name: "crack_surface",
            passed: bad.is_empty(),
            message: format!("{} crack facets without a duplicated twin face", bad.len()),
            offending: bad,
        });
    }

    Diagnostics {
        nodes: mesh.nodes.len(),
        tets: mesh.tets.len(),
        facets: mesh.facets.len(),
        edges: mesh.topo.edges.len(),
        faces: mesh.topo.faces.len(),
        boundary_faces: mesh.boundary_faces().len(),
        volume: mesh.volume(),
        min_quality: if mesh.tets.is_empty() { 0.0 } else { min_q },
        max_quality: max_q,
        groups: mesh
            .groups
            .values()
            .map(|g| (g.name.clone(), g.kind, g.items.len()))
            .collect(),
        checks,
        duplicate_pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_tet() -> Mesh {
        let nodes = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        Mesh::new(nodes, vec![[0, 1, 2, 3]], vec![], BTreeMap::new()).unwrap()
    }

    #[test]
    fn unit_tet_topology() {
        let m = unit_tet();
        assert_eq!(m.topo.edges.len(), 6);
        assert_eq!(m.topo.faces.len(), 4);
        assert!((m.volume() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.boundary_faces().len(), 4);
        assert!(m.validate().all_passed());
    }

    #[test]
    fn inverted_tet_rejected() {
        let nodes = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        let err = Mesh::new(nodes, vec![[0, 2, 1, 3]], vec![], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }

    #[test]
    fn regular_tet_quality_is_one() {
        let s = 1.0 / 2f64.sqrt();
        let p = [
            Point::new(1.0, 0.0, -s),
            Point::new(-1.0, 0.0, -s),
            Point::new(0.0, 1.0, s),
            Point::new(0.0, -1.0, s),
        ];
        let q = radius_ratio([&p[0], &p[1], &p[2], &p[3]]);
        assert!((q - 1.0).abs() < 1e-12, "{q}");
    }

    #[test]
    fn sliver_flagged() {
        let nodes = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.3, 0.3, 1e-6),
        ];
        let m = Mesh::new(nodes, vec![[0, 1, 2, 3]], vec![], BTreeMap::new()).unwrap();
        let d = m.validate();
        let q = d.check("quality").unwrap();
        assert!(!q.passed);
        assert_eq!(q.offending, vec![0]);
    }

    #[test]
    fn duplicate_nodes_warned() {
        let nodes = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
            Point::new(1.0, 0.0, 0.0),
        ];
        let m = Mesh::new(nodes, vec![[0, 1, 2, 3]], vec![], BTreeMap::new()).unwrap();
        let d = m.validate();
        assert_eq!(d.duplicate_pairs, vec![(1, 4)]);
        assert!(!d.check("duplicate_nodes").unwrap().passed);
    }

    #[test]
    fn volume_matches_quadrature() {
        let m = generate::box_mesh([0.0; 3], [1.0, 2.0, 0.5], [3, 4, 2]);
        let q = crate::basis::quadrature(3).unwrap();
        let mut total = 0.0;
        for t in 0..m.tets.len() {
            let p = m.tet_points(t);
            let det = (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0]));
            total += q.weights.iter().sum::<f64>() * det;
        }
        assert!((total - 1.0).abs() < 1e-12);
        assert!((m.volume() - 1.0).abs() < 1e-12);
    }
}
