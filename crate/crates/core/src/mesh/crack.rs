//! Crack surfaces with duplicated nodes, and extraction of the crack front.
//!
//! A crack is stored as a `CRACK_SURFACE` facet group listing the faces of one
//! side. Nodes strictly inside the crack surface are duplicated so the two sides
//! can open; front nodes are shared. The other side of each crack facet is its
//! twin: a boundary face with coincident vertex coordinates.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::{sorted2, Group, GroupKind, Mesh, Point, CRACK_SURFACE};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrontPolyline {
    pub nodes: Vec<usize>,
    pub closed: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CrackFront {
    /// Front edges as sorted node pairs, sorted.
    pub edges: Vec<[usize; 2]>,
    /// Front nodes, sorted.
    pub nodes: Vec<usize>,
    /// Connected polylines ordered by ascending minimum node id.
    pub polylines: Vec<FrontPolyline>,
    /// Crack-surface facets (one side, as node triples) adjacent to each front node.
    pub node_facets: BTreeMap<usize, Vec<[usize; 3]>>,
    /// Tets containing each front node.
    pub node_tets: BTreeMap<usize, Vec<usize>>,
    /// Half the summed length of the front edges meeting at each node.
    pub tributary_length: BTreeMap<usize, f64>,
}

impl CrackFront {
    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    pub fn is_front_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&sorted2([a, b])).is_ok()
    }

    /// All tets touching the front, sorted.
    pub fn tets(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.node_tets.values().flatten().copied().collect();
        set.into_iter().collect()
    }
}

type CoordKey = [[u64; 3]; 3];

fn coord_key(mesh: &Mesh, face: [usize; 3]) -> CoordKey {
    let mut k = face.map(|v| {
        let p = mesh.nodes[v];
        [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
    });
    k.sort_unstable();
    k
}

/// For each crack facet, the face id of its twin on the opposite side, if any.
fn twin_faces(mesh: &Mesh, facets: &[[usize; 3]]) -> Vec<Option<usize>> {
    let mut by_coords: HashMap<CoordKey, Vec<usize>> = HashMap::new();
    for f in mesh.boundary_faces() {
        by_coords
            .entry(coord_key(mesh, mesh.topo.faces[f]))
            .or_default()
            .push(f);
    }
    facets
        .iter()
        .map(|&facet| {
            let own = mesh.topo.face_id(facet)?;
            by_coords
                .get(&coord_key(mesh, facet))?
                .iter()
                .copied()
                .find(|&f| f != own)
        })
        .collect()
}

/// Crack facets that are not boundary faces or have no twin.
pub(crate) fn check_crack_surface(mesh: &Mesh) -> Vec<usize> {
    let Some(g) = mesh.groups.get(CRACK_SURFACE) else {
        return Vec::new();
    };
    let facets: Vec<[usize; 3]> = g.items.iter().map(|&f| mesh.facets[f]).collect();
    let twins = twin_faces(mesh, &facets);
    g.items
        .iter()
        .zip(facets.iter().zip(&twins))
        .filter(|(_, (facet, twin))| {
            let boundary = mesh
                .topo
                .face_id(**facet)
                .is_some_and(|f| mesh.topo.is_boundary_face(f));
            !boundary || twin.is_none()
        })
        .map(|(&i, _)| i)
        .collect()
}

/// Nodes on either side of the crack surface.
pub(crate) fn crack_twin_nodes(mesh: &Mesh) -> HashSet<usize> {
    let Some(g) = mesh.groups.get(CRACK_SURFACE) else {
        return HashSet::new();
    };
    let facets: Vec<[usize; 3]> = g.items.iter().map(|&f| mesh.facets[f]).collect();
    let mut set: HashSet<usize> = facets.iter().flatten().copied().collect();
    for f in twin_faces(mesh, &facets).into_iter().flatten() {
        set.extend(mesh.topo.faces[f]);
    }
    set
}

pub fn extract_crack_front(mesh: &Mesh, crack_group: &str) -> Result<CrackFront> {
    let g = mesh.group(crack_group)?;
    if g.kind != GroupKind::Facets {
        return Err(Error::InvalidInput(format!(
            "{crack_group} is not a facet group"
        )));
    }
    if g.items.is_empty() {
        return Err(Error::DegenerateFront(format!("{crack_group} is empty")));
    }
    let facets: Vec<[usize; 3]> = g.items.iter().map(|&f| mesh.facets[f]).collect();

    let mut crack_faces: HashSet<usize> = HashSet::new();
    for facet in &facets {
        if let Some(f) = mesh.topo.face_id(*facet) {
            crack_faces.insert(f);
        }
    }
    crack_faces.extend(twin_faces(mesh, &facets).into_iter().flatten());

    let mut exterior_edges: HashSet<[usize; 2]> = HashSet::new();
    for f in mesh.boundary_faces() {
        if crack_faces.contains(&f) {
            continue;
        }
        let [a, b, c] = mesh.topo.faces[f];
        exterior_edges.extend([sorted2([a, b]), sorted2([b, c]), sorted2([a, c])]);
    }

    let mut edge_count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for &[a, b, c] in &facets {
        for e in [[a, b], [b, c], [a, c]] {
            *edge_count.entry(sorted2(e)).or_default() += 1;
        }
    }
    let edges: Vec<[usize; 2]> = edge_count
        .into_iter()
        .filter(|(e, n)| *n == 1 && !exterior_edges.contains(e))
        .map(|(e, _)| e)
        .collect();
    if edges.is_empty() {
        return Err(Error::DegenerateFront(format!(
            "every boundary edge of {crack_group} lies on the exterior boundary"
        )));
    }

    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &[a, b] in &edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    for (n, nb) in adj.iter_mut() {
        nb.sort_unstable();
        if nb.len() > 2 {
            return Err(Error::Topology(format!("crack front branches at node {n}")));
        }
    }
    let nodes: Vec<usize> = adj.keys().copied().collect();

    let mut visited: HashSet<usize> = HashSet::new();
    let mut polylines = Vec::new();
    for &start in &nodes {
        if visited.contains(&start) {
            continue;
        }
        // Collect the component, then walk it from a canonical start.
        let mut comp = vec![start];
        let mut stack = vec![start];
        let mut seen: HashSet<usize> = HashSet::from([start]);
        while let Some(n) = stack.pop() {
            for &m in &adj[&n] {
                if seen.insert(m) {
                    comp.push(m);
                    stack.push(m);
                }
            }
        }
        let ends: Vec<usize> = comp.iter().copied().filter(|n| adj[n].len() == 1).collect();
        let closed = ends.is_empty();
        let first = if closed {
            *comp.iter().min().unwrap()
        } else {
            *ends.iter().min().unwrap()
        };
        let mut path = vec![first];
        visited.insert(first);
        let mut cur = first;
        while let Some(&next) = adj[&cur].iter().find(|m| !visited.contains(m)) {
            path.push(next);
            visited.insert(next);
            cur = next;
        }
        polylines.push(FrontPolyline {
            nodes: path,
            closed,
        });
    }
    polylines.sort_by_key(|p| *p.nodes.iter().min().unwrap());

    let mut node_facets: BTreeMap<usize, Vec<[usize; 3]>> = BTreeMap::new();
    for facet in &facets {
        for v in facet {
            if adj.contains_key(v) {
                node_facets.entry(*v).or_default().push(*facet);
            }
        }
    }
    for list in node_facets.values_mut() {
        list.sort_unstable();
    }
    let node_tets = nodes
        .iter()
        .map(|&n| (n, mesh.topo.node_tets[n].clone()))
        .collect();
    let mut tributary_length: BTreeMap<usize, f64> = nodes.iter().map(|&n| (n, 0.0)).collect();
    for &[a, b] in &edges {
        let l = (mesh.nodes[a] - mesh.nodes[b]).norm();
        *tributary_length.get_mut(&a).unwrap() += 0.5 * l;
        *tributary_length.get_mut(&b).unwrap() += 0.5 * l;
    }

    Ok(CrackFront {
        edges,
        nodes,
        polylines,
        node_facets,
        node_tets,
        tributary_length,
    })
}

/// Cuts `mesh` along the given interior faces: nodes on the cut whose
/// surrounding tets fall into several groups once the cut faces are removed get
/// one copy per extra group. Adds the faces of the lower-index side as the
/// `CRACK_SURFACE` facet group. Facet groups are renumbered to their owning tet.
pub fn insert_crack(mesh: &Mesh, crack_faces: &[[usize; 3]]) -> Result<Mesh> {
    if mesh.groups.contains_key(CRACK_SURFACE) {
        return Err(Error::InvalidInput(
            "mesh already has a crack surface".into(),
        ));
    }
    let mut cut: HashSet<usize> = HashSet::new();
    for f in crack_faces {
        let id = mesh
            .topo
            .face_id(*f)
            .ok_or_else(|| Error::Topology(format!("crack face {f:?} is not a mesh face")))?;
        if mesh.topo.face_tets[id].len() != 2 {
            return Err(Error::Topology(format!(
                "crack face {f:?} is not an interior face"
            )));
        }
        cut.insert(id);
    }

    let mut nodes: Vec<Point> = mesh.nodes.clone();
    let mut tets = mesh.tets.clone();
    let cut_nodes: BTreeSet<usize> = cut.iter().flat_map(|&f| mesh.topo.faces[f]).collect();
    for &v in &cut_nodes {
        let star = &mesh.topo.node_tets[v];
        let pos: HashMap<usize, usize> = star.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let mut parent: Vec<usize> = (0..star.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for (i, &t) in star.iter().enumerate() {
            for &f in &mesh.topo.tet_faces[t] {
                if cut.contains(&f) || !mesh.topo.faces[f].contains(&v) {
                    continue;
                }
                for &u in &mesh.topo.face_tets[f] {
                    if let Some(&j) = pos.get(&u) {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
        let mut roots: Vec<usize> = (0..star.len()).map(|i| find(&mut parent, i)).collect();
        let mut distinct = roots.clone();
        distinct.sort_unstable();
        distinct.dedup();
        // Component holding the lowest tet index keeps the original node.
        distinct.sort_by_key(|&r| {
            (0..star.len())
                .filter(|&i| roots[i] == r)
                .map(|i| star[i])
                .min()
        });
        for (k, &r) in distinct.iter().enumerate().skip(1) {
            let _ = k;
            let copy = nodes.len();
            nodes.push(mesh.nodes[v]);
            for (i, root) in roots.iter_mut().enumerate() {
                if *root == r {
                    let t = star[i];
                    for slot in tets[t].iter_mut() {
                        if *slot == v {
                            *slot = copy;
                        }
                    }
                }
            }
        }
    }

    let remap = |t: usize, facet: [usize; 3]| -> [usize; 3] {
        facet.map(|v| {
            let k = mesh.tets[t].iter().position(|&w| w == v).unwrap();
            tets[t][k]
        })
    };
    let facets: Vec<[usize; 3]> = mesh
        .facets
        .iter()
        .map(|&facet| {
            let f = mesh.topo.face_id(facet).unwrap();
            remap(mesh.topo.face_tets[f][0], facet)
        })
        .collect();
    let mut groups = mesh.groups.clone();
    let mut all_facets = facets;
    let mut items = Vec::with_capacity(crack_faces.len());
    for facet in crack_faces {
        let f = mesh.topo.face_id(*facet).unwrap();
        let t = *mesh.topo.face_tets[f].iter().min().unwrap();
        items.push(all_facets.len());
        all_facets.push(remap(t, *facet));
    }
    let tag = groups.values().map(|g| g.tag).max().unwrap_or(0) + 1;
    groups.insert(
        CRACK_SURFACE.to_string(),
        Group {
            name: CRACK_SURFACE.to_string(),
            tag,
            kind: GroupKind::Facets,
            items,
        },
    );
    Mesh::new(nodes, tets, all_facets, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{self, PlateSpec};

    #[test]
    fn plate_front_is_two_straight_through_thickness_lines() {
        let spec = PlateSpec::coarse();
        let m = generate::plate(&spec).unwrap();
        let front = extract_crack_front(&m, CRACK_SURFACE).unwrap();
        assert_eq!(front.polylines.len(), 2);
        for pl in &front.polylines {
            assert!(!pl.closed);
            let x0 = m.nodes[pl.nodes[0]].x;
            assert!((x0.abs() - spec.half_crack).abs() < 1e-12);
            for &n in &pl.nodes {
                let p = m.nodes[n];
                assert!((p.x - x0).abs() < 1e-12 && p.y.abs() < 1e-12);
            }
            let zs: Vec<f64> = pl.nodes.iter().map(|&n| m.nodes[n].z).collect();
            assert!((zs[0] - zs[zs.len() - 1]).abs() - spec.thickness < 1e-12 || zs.len() > 1);
        }
        let total: f64 = front.tributary_length.values().sum();
        assert!((total - 2.0 * spec.thickness).abs() < 1e-12);
        assert!(m.validate().all_passed(), "{}", m.validate());
    }

    #[test]
    fn extraction_independent_of_facet_order_and_idempotent() {
        let m = generate::plate(&PlateSpec::coarse()).unwrap();
        let a = extract_crack_front(&m, CRACK_SURFACE).unwrap();
        let mut shuffled = m.clone();
        shuffled
            .groups
            .get_mut(CRACK_SURFACE)
            .unwrap()
            .items
            .reverse();
        let b = extract_crack_front(&shuffled, CRACK_SURFACE).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, extract_crack_front(&m, CRACK_SURFACE).unwrap());
    }

    #[test]
    fn exterior_facets_give_degenerate_front() {
        let m = generate::box_mesh([0.0; 3], [1.0; 3], [2, 2, 2]);
        let mut m2 = m.clone();
        let ext: Vec<usize> = m
            .boundary_faces()
            .into_iter()
            .filter(|&f| m.topo.faces[f].iter().all(|&v| m.nodes[v].z == 0.0))
            .collect();
        let base = m2.facets.len();
        m2.facets.extend(ext.iter().map(|&f| m.topo.faces[f]));
        m2.groups.insert(
            CRACK_SURFACE.into(),
            Group {
                name: CRACK_SURFACE.into(),
                tag: 99,
                kind: GroupKind::Facets,
                items: (base..base + ext.len()).collect(),
            },
        );
        let m2 = Mesh::new(m2.nodes, m2.tets, m2.facets, m2.groups).unwrap();
        assert!(matches!(
            extract_crack_front(&m2, CRACK_SURFACE),
            Err(Error::DegenerateFront(_))
        ));
        assert!(!m2.validate().check("crack_surface").unwrap().passed);
    }

    #[test]
    fn penny_crack_front_is_one_closed_loop() {
        let m = generate::penny(&generate::PennySpec::default()).unwrap();
        let front = extract_crack_front(&m, CRACK_SURFACE).unwrap();
        assert_eq!(front.polylines.len(), 1);
        assert!(front.polylines[0].closed);
        let spec = generate::PennySpec::default();
        for &n in &front.nodes {
            let p = m.nodes[n];
            assert!(((p.x * p.x + p.y * p.y).sqrt() - spec.crack_radius).abs() < 1e-12);
        }
        assert!(m.validate().all_passed(), "{}", m.validate());
    }

    #[test]
    fn missing_group_errors() {
        let m = generate::box_mesh([0.0; 3], [1.0; 3], [1, 1, 1]);
        assert!(matches!(
            extract_crack_front(&m, CRACK_SURFACE),
            Err(Error::MissingGroup(_))
        ));
    }
}
