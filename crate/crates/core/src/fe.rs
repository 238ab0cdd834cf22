//! Discretisation shared by the fracture and adaptation solvers: element
//! geometry in canonical (ascending global id) vertex order, hierarchical dof
//! numbering, cached reference quadrature, boundary conditions and density
//! sources.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::basis::{
    eval_basis, face_count, quadrature, triangle_quadrature, volume_count, BasisEval, Mapping,
    QuadratureRule, TipMapping, MAX_QUADRATURE_DEGREE,
};
use crate::error::{Error, Result};
use crate::mesh::{
    sorted2, sorted3, ElementOrders, EntityOrders, GroupKind, Mesh, OrderMap, Point, LOCAL_EDGES,
    LOCAL_FACES,
};
use crate::mwls::DensityField;

/// Quadrature policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSettings {
    /// Degree `2p + extra` on regular elements of maximum order `p`.
    pub extra: usize,
    /// Degree multiplier on singular elements.
    pub singular_factor: usize,
    /// Upper bound for the singular-element degree.
    pub singular_cap: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            extra: 2,
            singular_factor: 2,
            singular_cap: MAX_QUADRATURE_DEGREE,
        }
    }
}

/// One tet in canonical vertex order.
#[derive(Clone, Debug)]
pub struct ElementGeom {
    /// Global node ids, ascending.
    pub nodes: [usize; 4],
    /// Global edge ids of the canonical local edges.
    pub edges: [usize; 6],
    /// Global face ids of the canonical local faces.
    pub faces: [usize; 4],
    pub mapping: Mapping,
    /// Canonical local vertices on the crack front when the singular map is used.
    pub tip: Vec<usize>,
}

impl ElementGeom {
    pub fn local_of(&self, node: usize) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }
}

/// Scalar hierarchical space over the mesh entities.
#[derive(Clone, Debug)]
pub struct Space {
    pub orders: EntityOrders,
    pub n: usize,
    n_nodes: usize,
    edge_off: Vec<usize>,
    face_off: Vec<usize>,
    vol_off: Vec<usize>,
}

impl Space {
    pub fn new(mesh: &Mesh, orders: EntityOrders) -> Self {
        let mut n = mesh.nodes.len();
        let mut offsets = |counts: Vec<usize>| {
            counts
                .into_iter()
                .map(|c| {
                    let o = n;
                    n += c;
                    o
                })
                .collect::<Vec<_>>()
        };
        let edge_off = offsets(orders.edges.iter().map(|&p| p.saturating_sub(1)).collect());
        let face_off = offsets(orders.faces.iter().map(|&p| face_count(p)).collect());
        let vol_off = offsets(orders.volumes.iter().map(|&p| volume_count(p)).collect());
        Space {
            orders,
            n,
            n_nodes: mesh.nodes.len(),
            edge_off,
            face_off,
            vol_off,
        }
    }

    pub fn element_orders(&self, g: &ElementGeom, t: usize) -> ElementOrders {
        ElementOrders {
            edges: g.edges.map(|e| self.orders.edges[e]),
            faces: g.faces.map(|f| self.orders.faces[f]),
            volume: self.orders.volumes[t],
        }
    }

    /// Scalar dofs of element `t` in basis evaluation order.
    pub fn element_dofs(&self, g: &ElementGeom, t: usize) -> Vec<usize> {
        let mut d: Vec<usize> = g.nodes.to_vec();
        for &e in &g.edges {
            d.extend(self.edge_off[e]..self.edge_off[e] + self.orders.edges[e].saturating_sub(1));
        }
        for &f in &g.faces {
            d.extend(self.face_off[f]..self.face_off[f] + face_count(self.orders.faces[f]));
        }
        d.extend(self.vol_off[t]..self.vol_off[t] + volume_count(self.orders.volumes[t]));
        d
    }

    /// Dofs on the closure of a mesh face (vertices, edges, face interior).
    pub fn face_closure_dofs(&self, mesh: &Mesh, face: [usize; 3]) -> Vec<usize> {
        let mut d = face.to_vec();
        for k in 0..3 {
            let e = mesh
                .topo
                .edge_id(face[k], face[(k + 1) % 3])
                .expect("face edge exists");
            d.extend(self.edge_off[e]..self.edge_off[e] + self.orders.edges[e].saturating_sub(1));
        }
        let f = mesh.topo.face_id(face).expect("face exists");
        d.extend(self.face_off[f]..self.face_off[f] + face_count(self.orders.faces[f]));
        d
    }

    pub fn is_vertex_dof(&self, d: usize) -> bool {
        d < self.n_nodes
    }
}

/// Reference data shared by elements with equal orders and quadrature.
#[derive(Debug)]
pub struct RefData {
    pub rule: QuadratureRule,
    pub disp: Vec<BasisEval>,
    pub dens: Vec<BasisEval>,
}

/// Physical quantities at one quadrature point.
#[derive(Clone, Debug)]
pub struct Qp {
    /// Weight times |det J|.
    pub w: f64,
    pub xi: [f64; 3],
    /// Material position.
    pub x: Point,
    /// `J⁻ᵀ`, mapping reference to physical gradients.
    pub jinv_t: Matrix3<f64>,
    pub index: usize,
}

/// Element with its quadrature points and dofs.
pub struct ElementData<'a> {
    pub t: usize,
    pub geom: &'a ElementGeom,
    pub refdata: &'a RefData,
    pub qps: Vec<Qp>,
    pub udofs: Vec<usize>,
    pub rdofs: Vec<usize>,
}

impl ElementData<'_> {
    /// Physical gradients of the displacement basis at `qp`.
    pub fn disp_grads(&self, qp: &Qp) -> Vec<Vector3<f64>> {
        self.refdata.disp[qp.index]
            .grads
            .iter()
            .map(|g| qp.jinv_t * g)
            .collect()
    }

    pub fn disp_values(&self, qp: &Qp) -> &[f64] {
        &self.refdata.disp[qp.index].values
    }

    pub fn dens_grads(&self, qp: &Qp) -> Vec<Vector3<f64>> {
        self.refdata.dens[qp.index]
            .grads
            .iter()
            .map(|g| qp.jinv_t * g)
            .collect()
    }

    pub fn dens_values(&self, qp: &Qp) -> &[f64] {
        &self.refdata.dens[qp.index].values
    }

    /// Deformation gradient `I + Σ u_a ⊗ ∇N_a` from a nodal displacement vector.
    pub fn deformation_gradient(&self, u: &[f64], grads: &[Vector3<f64>]) -> Matrix3<f64> {
        let mut f = Matrix3::identity();
        for (a, g) in grads.iter().enumerate() {
            let d = 3 * self.udofs[a];
            f += Vector3::new(u[d], u[d + 1], u[d + 2]) * g.transpose();
        }
        f
    }
}

/// Mesh plus displacement and density spaces.
pub struct Discretization<'m> {
    pub mesh: &'m Mesh,
    pub geoms: Vec<ElementGeom>,
    pub disp: Space,
    pub dens: Space,
    pub singular: bool,
    refs: Vec<Arc<RefData>>,
    pub quadrature: QuadratureSettings,
}

fn canonical(mesh: &Mesh, t: usize) -> ([usize; 4], f64) {
    let mut nodes = mesh.tets[t];
    nodes.sort_unstable();
    let p = nodes.map(|v| mesh.nodes[v]);
    let vol = crate::mesh::tet_signed_volume([&p[0], &p[1], &p[2], &p[3]]);
    (nodes, vol.signum())
}

/// Barycentric permutation aligning the collapsed vertex/edge of the conical
/// product rule with the crack-tip vertices.
fn tip_permutation(tip: &[usize]) -> [usize; 4] {
    let mut perm = [usize::MAX; 4];
    let mut used = [false; 4];
    for (k, &v) in tip.iter().enumerate() {
        perm[v] = k + 1;
        used[k + 1] = true;
    }
    let mut rest = (0..4).filter(|&c| !used[c]);
    for slot in perm.iter_mut() {
        if *slot == usize::MAX {
            *slot = rest.next().unwrap();
        }
    }
    perm
}

impl<'m> Discretization<'m> {
    pub fn new(
        mesh: &'m Mesh,
        orders: &OrderMap,
        singular: bool,
        settings: QuadratureSettings,
    ) -> Result<Self> {
        let tip_nodes: std::collections::HashSet<usize> =
            orders.tip_nodes.iter().copied().collect();
        let mut geoms = Vec::with_capacity(mesh.tets.len());
        for t in 0..mesh.tets.len() {
            let (nodes, sign) = canonical(mesh, t);
            let edges =
                LOCAL_EDGES.map(|[a, b]| mesh.topo.edge_id(nodes[a], nodes[b]).expect("edge"));
            let faces = LOCAL_FACES.map(|[a, b, c]| {
                mesh.topo
                    .face_id([nodes[a], nodes[b], nodes[c]])
                    .expect("face")
            });
            let pts = nodes.map(|v| mesh.nodes[v]);
            let tip: Vec<usize> = if singular {
                (0..4).filter(|&a| tip_nodes.contains(&nodes[a])).collect()
            } else {
                vec![]
            };
            let (mapping, tip) = if tip.is_empty() {
                (Mapping::affine(pts), tip)
            } else if tip.len() > 2 {
                log::warn!(
                    "tet {t} has {} crack-front vertices; using the affine map",
                    tip.len()
                );
                (Mapping::affine(pts), vec![])
            } else {
                let low_order = tip_edges_min_order(&edges, &tip, &orders.displacement) < 2;
                if low_order {
                    log::warn!(
                        "tet {t}: singular map needs order >= 2 on tip edges; using the affine map"
                    );
                    (Mapping::affine(pts), vec![])
                } else {
                    (Mapping::singular(pts, &TipMapping::new(tip.clone()))?, tip)
                }
            };
            geoms.push(ElementGeom {
                nodes,
                edges,
                faces,
                mapping: mapping.with_orientation(sign),
                tip,
            });
        }
        let disp = Space::new(mesh, orders.displacement.clone());
        let dens = Space::new(mesh, orders.density.clone());
        let mut cache: HashMap<(ElementOrders, ElementOrders, usize, [usize; 4]), Arc<RefData>> =
            HashMap::new();
        let mut refs = Vec::with_capacity(mesh.tets.len());
        for (t, g) in geoms.iter().enumerate() {
            let uo = disp.element_orders(g, t);
            let ro = dens.element_orders(g, t);
            let p = uo.max();
            let base = (2 * p + settings.extra).max(1);
            let (degree, perm) = if g.tip.is_empty() {
                (base.min(MAX_QUADRATURE_DEGREE), [0, 1, 2, 3])
            } else {
                (
                    (base * settings.singular_factor)
                        .min(settings.singular_cap)
                        .min(MAX_QUADRATURE_DEGREE),
                    tip_permutation(&g.tip),
                )
            };
            let key = (uo, ro, degree, perm);
            let r = match cache.get(&key) {
                Some(r) => r.clone(),
                None => {
                    let rule = quadrature(degree)?.permuted(perm);
                    let disp_evals = rule
                        .points
                        .iter()
                        .map(|&x| eval_basis(&uo, x))
                        .collect::<Result<Vec<_>>>()?;
                    let dens_evals = rule
                        .points
                        .iter()
                        .map(|&x| eval_basis(&ro, x))
                        .collect::<Result<Vec<_>>>()?;
                    let r = Arc::new(RefData {
                        rule,
                        disp: disp_evals,
                        dens: dens_evals,
                    });
                    cache.insert(key, r.clone());
                    r
                }
            };
            refs.push(r);
        }
        Ok(Discretization {
            mesh,
            geoms,
            disp,
            dens,
            singular,
            refs,
            quadrature: settings,
        })
    }

    /// Number of displacement unknowns (three per scalar dof).
    pub fn n_disp(&self) -> usize {
        3 * self.disp.n
    }

    pub fn element(&self, t: usize) -> Result<ElementData<'_>> {
        let g = &self.geoms[t];
        let r = &*self.refs[t];
        let mut qps = Vec::with_capacity(r.rule.len());
        for (q, &xi) in r.rule.points.iter().enumerate() {
            let m = g.mapping.eval(xi).map_err(|e| match e {
                Error::NegativeJacobian { det, .. } => Error::NegativeJacobian { element: t, det },
                e => e,
            })?;
            let jinv = m.jac.try_inverse().ok_or(Error::NegativeJacobian {
                element: t,
                det: m.det,
            })?;
            qps.push(Qp {
                w: r.rule.weights[q] * m.det.abs(),
                xi,
                x: m.x,
                jinv_t: jinv.transpose(),
                index: q,
            });
        }
        Ok(ElementData {
            t,
            geom: g,
            refdata: r,
            qps,
            udofs: self.disp.element_dofs(g, t),
            rdofs: self.dens.element_dofs(g, t),
        })
    }

    /// Quadrature on a boundary facet: `(element, canonical ξ, area weight)` per point.
    pub fn facet_points(&self, facet: [usize; 3]) -> Result<(usize, Vec<([f64; 3], f64)>)> {
        let f = self
            .mesh
            .topo
            .face_id(facet)
            .ok_or_else(|| Error::Topology(format!("{facet:?} is not a face")))?;
        let t = self.mesh.topo.face_tets[f][0];
        let g = &self.geoms[t];
        let p = self.disp.element_orders(g, t).max();
        let (pts, wts) =
            triangle_quadrature((2 * p + self.quadrature.extra).min(MAX_QUADRATURE_DEGREE))?;
        let local = facet.map(|n| g.local_of(n).expect("facet node in tet"));
        let bary_to_xi = |l: [f64; 4]| [l[1], l[2], l[3]];
        let mut out = Vec::with_capacity(pts.len());
        for (k, &[s, r]) in pts.iter().enumerate() {
            let mut lam = [0.0; 4];
            lam[local[0]] = 1.0 - s - r;
            lam[local[1]] = s;
            lam[local[2]] = r;
            let xi = bary_to_xi(lam);
            let m = g.mapping.eval_unchecked(xi);
            // dξ/ds and dξ/dr from the barycentric parametrisation.
            let dir = |from: usize, to: usize| {
                let mut d = [0.0; 4];
                d[to] += 1.0;
                d[from] -= 1.0;
                Vector3::new(d[1], d[2], d[3])
            };
            let xs = m.jac * dir(local[0], local[1]);
            let xr = m.jac * dir(local[0], local[2]);
            out.push((xi, wts[k] * xs.cross(&xr).norm()));
        }
        Ok((t, out))
    }

    /// Displacement dofs fixed by the given conditions with their values.
    pub fn dirichlet_dofs(&self, bcs: &[DirichletBc]) -> Result<Vec<(usize, f64)>> {
        let mut fixed: HashMap<usize, f64> = HashMap::new();
        for bc in bcs {
            let group = self.mesh.group(&bc.group)?;
            let scalar: Vec<(usize, bool)> = match group.kind {
                GroupKind::Vertices => group.items.iter().map(|&n| (n, true)).collect(),
                GroupKind::Facets => {
                    let mut d = Vec::new();
                    for &f in &group.items {
                        let face = sorted3(self.mesh.facets[f]);
                        d.extend(
                            self.disp
                                .face_closure_dofs(self.mesh, face)
                                .into_iter()
                                .map(|x| (x, self.disp.is_vertex_dof(x))),
                        );
                    }
                    d
                }
                GroupKind::Volume => {
                    return Err(Error::InvalidInput(format!(
                        "Dirichlet group {} must be vertices or facets",
                        bc.group
                    )))
                }
            };
            for (s, vertex) in scalar {
                for &c in &bc.components {
                    // Higher-order coefficients of a constant prescription vanish.
                    fixed.insert(3 * s + c, if vertex { bc.value[c] } else { 0.0 });
                }
            }
        }
        let mut v: Vec<(usize, f64)> = fixed.into_iter().collect();
        v.sort_unstable_by_key(|p| p.0);
        Ok(v)
    }

    /// Consistent nodal forces of dead-load tractions.
    pub fn traction_vector(&self, loads: &[TractionBc], scale: f64) -> Result<Vec<f64>> {
        let mut f = vec![0.0; self.n_disp()];
        for load in loads {
            for facet in self.mesh.group_facets(&load.group)? {
                let (t, pts) = self.facet_points(facet)?;
                let g = &self.geoms[t];
                let uo = self.disp.element_orders(g, t);
                let dofs = self.disp.element_dofs(g, t);
                for (xi, w) in pts {
                    let b = eval_basis(&uo, xi)?;
                    for (a, &d) in dofs.iter().enumerate() {
                        for c in 0..3 {
                            f[3 * d + c] += scale * w * b.values[a] * load.traction[c];
                        }
                    }
                }
            }
        }
        Ok(f)
    }

    /// Scalar field `Σ c_a N_a` and gradient of density coefficients at a qp.
    pub fn density_at(&self, el: &ElementData, qp: &Qp, coeffs: &[f64]) -> (f64, Vector3<f64>) {
        let vals = el.dens_values(qp);
        let mut v = 0.0;
        let mut g = Vector3::zeros();
        for (a, &d) in el.rdofs.iter().enumerate() {
            v += coeffs[d] * vals[a];
            g += (qp.jinv_t * el.refdata.dens[qp.index].grads[a]) * coeffs[d];
        }
        (v, g)
    }

    /// Density coefficients interpolating `f` at the vertices (higher modes zero).
    pub fn nodal_density(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        let mut c = vec![0.0; self.dens.n];
        for (n, p) in self.mesh.nodes.iter().enumerate() {
            c[n] = f(p);
        }
        c
    }
}

fn tip_edges_min_order(edges: &[usize; 6], tip: &[usize], orders: &EntityOrders) -> usize {
    LOCAL_EDGES
        .iter()
        .enumerate()
        .filter(|(_, [a, b])| tip.contains(a) != tip.contains(b))
        .map(|(k, _)| orders.edges[edges[k]])
        .min()
        .unwrap_or(usize::MAX)
}

/// Prescribed displacement components on a vertex or facet group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletBc {
    pub group: String,
    pub components: Vec<usize>,
    #[serde(default)]
    pub value: [f64; 3],
}

impl DirichletBc {
    pub fn fixed(group: &str, components: &[usize]) -> Self {
        DirichletBc {
            group: group.into(),
            components: components.to_vec(),
            value: [0.0; 3],
        }
    }

    /// Zero-displacement conditions from every `DIRICHLET_*` group; a suffix made
    /// only of the letters X, Y, Z selects those components, otherwise all three.
    pub fn from_groups(mesh: &Mesh) -> Vec<DirichletBc> {
        mesh.groups
            .keys()
            .filter_map(|name| {
                let suffix = name.strip_prefix("DIRICHLET_")?;
                let comps: Vec<usize> =
                    if !suffix.is_empty() && suffix.chars().all(|c| "XYZ".contains(c)) {
                        suffix.chars().map(|c| (c as u8 - b'X') as usize).collect()
                    } else {
                        vec![0, 1, 2]
                    };
                Some(DirichletBc::fixed(name, &comps))
            })
            .collect()
    }
}

/// Dead-load traction (force per reference area) on a facet group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionBc {
    pub group: String,
    pub traction: [f64; 3],
}

/// Density supplied to the fracture solver.
#[derive(Clone)]
pub enum Density {
    Uniform(f64),
    Mwls(Arc<DensityField>),
    /// Analytic field returning value and gradient.
    Function(Arc<dyn Fn(&Point) -> (f64, Vector3<f64>) + Send + Sync>),
    /// Coefficients in the density space (e.g. an adaptation result).
    Coefficients(Arc<Vec<f64>>),
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Density::Uniform(r) => write!(f, "Uniform({r})"),
            Density::Mwls(field) => write!(f, "Mwls(radius {})", field.radius()),
            Density::Function(_) => write!(f, "Function"),
            Density::Coefficients(c) => write!(f, "Coefficients({})", c.len()),
        }
    }
}

impl Density {
    pub fn eval(
        &self,
        disc: &Discretization,
        el: &ElementData,
        qp: &Qp,
    ) -> Result<(f64, Vector3<f64>)> {
        match self {
            Density::Uniform(r) => Ok((*r, Vector3::zeros())),
            Density::Mwls(field) => field.eval_grad(&qp.x),
            Density::Function(f) => Ok(f(&qp.x)),
            Density::Coefficients(c) => Ok(disc.density_at(el, qp, c)),
        }
    }
}

/// Edge length helper used for tributary lengths.
pub fn edge_length(mesh: &Mesh, e: [usize; 2]) -> f64 {
    let [a, b] = sorted2(e);
    (mesh.nodes[b] - mesh.nodes[a]).norm()
}
