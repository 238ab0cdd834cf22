use super::Mesh;
use crate::error::{Error, Result};

/// Highest combined approximation order supported.
pub const ORDER_CAP: usize = 7;

/// Polynomial order per edge, face and volume entity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityOrders {
    pub edges: Vec<usize>,
    pub faces: Vec<usize>,
    pub volumes: Vec<usize>,
}

impl EntityOrders {
    fn uniform(mesh: &Mesh, p: usize) -> Self {
        EntityOrders {
            edges: vec![p; mesh.topo.edges.len()],
            faces: vec![p; mesh.topo.faces.len()],
            volumes: vec![p; mesh.tets.len()],
        }
    }

    /// Orders of the 6 edges, 4 faces and the volume of tet `t`, in local numbering.
    pub fn element(&self, mesh: &Mesh, t: usize) -> ElementOrders {
        ElementOrders {
            edges: mesh.topo.tet_edges[t].map(|e| self.edges[e]),
            faces: mesh.topo.tet_faces[t].map(|f| self.faces[f]),
            volume: self.volumes[t],
        }
    }

    pub fn max_order(&self) -> usize {
        self.edges
            .iter()
            .chain(&self.faces)
            .chain(&self.volumes)
            .copied()
            .max()
            .unwrap_or(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ElementOrders {
    pub edges: [usize; 6],
    pub faces: [usize; 4],
    pub volume: usize,
}

impl ElementOrders {
    pub fn uniform(p: usize) -> Self {
        ElementOrders {
            edges: [p; 6],
            faces: [p; 4],
            volume: p,
        }
    }

    pub fn max(&self) -> usize {
        self.edges
            .iter()
            .chain(&self.faces)
            .copied()
            .max()
            .unwrap_or(1)
            .max(self.volume)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderMap {
    pub global: usize,
    pub local: usize,
    pub tip_nodes: Vec<usize>,
    pub displacement: EntityOrders,
    /// One order below the displacement orders, floored at 1.
    pub density: EntityOrders,
    /// Tets carrying the raised order.
    pub tip_tets: Vec<usize>,
}

pub fn assign_orders(
    mesh: &Mesh,
    global: usize,
    local: usize,
    tip_set: &[usize],
) -> Result<OrderMap> {
    if global < 1 {
        return Err(Error::InvalidInput(
            "global order must be at least 1".into(),
        ));
    }
    if global + local > ORDER_CAP {
        return Err(Error::OrderCap {
            requested: global + local,
            cap: ORDER_CAP,
        });
    }
    let mut displacement = EntityOrders::uniform(mesh, global);
    let mut tip_nodes = tip_set.to_vec();
    tip_nodes.sort_unstable();
    tip_nodes.dedup();
    let mut tip_tets: Vec<usize> = tip_nodes
        .iter()
        .flat_map(|&n| mesh.topo.node_tets[n].iter().copied())
        .collect();
    tip_tets.sort_unstable();
    tip_tets.dedup();
    if local > 0 {
        let p = global + local;
        for &t in &tip_tets {
            for &e in &mesh.topo.tet_edges[t] {
                displacement.edges[e] = p;
            }
            for &f in &mesh.topo.tet_faces[t] {
                displacement.faces[f] = p;
            }
            displacement.volumes[t] = p;
        }
    }
    let lower = |v: &Vec<usize>| v.iter().map(|&p| p.saturating_sub(1).max(1)).collect();
    let density = EntityOrders {
        edges: lower(&displacement.edges),
        faces: lower(&displacement.faces),
        volumes: lower(&displacement.volumes),
    };
    Ok(OrderMap {
        global,
        local,
        tip_nodes,
        displacement,
        density,
        tip_tets,
    })
}
