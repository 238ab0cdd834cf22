//! Reader and writer for the ASCII MSH 2.2 subset used by the tools.
//!
//! Supported sections are `$MeshFormat`, `$PhysicalNames`, `$Nodes` and
//! `$Elements`. Element lines read `id type ntags tag.. nodes..`; the first tag
//! is the physical group. Types: 15 point, 1 line (ignored), 2 triangle, 4 tet.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::{Group, GroupKind, Mesh, Point};
use crate::error::{Error, Result};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_nonempty(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let t = l.trim();
            if !t.is_empty() {
                return Some(t);
            }
        }
        None
    }

    fn expect(&mut self) -> Result<&'a str> {
        let line = self.line;
        self.next_nonempty().ok_or_else(|| Error::Parse {
            line,
            msg: "unexpected end of file".into(),
        })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }
}

fn num<T: std::str::FromStr>(lines: &Lines, tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| lines.err(format!("missing {what}")))?
        .parse()
        .map_err(|_| lines.err(format!("invalid {what}")))
}

pub fn parse_msh(text: &str) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let mut names: HashMap<usize, (usize, String)> = HashMap::new();
    let mut node_ids: HashMap<usize, usize> = HashMap::new();
    let mut nodes: Vec<Point> = Vec::new();
    let mut raw_elements: Vec<(usize, usize, usize, Vec<usize>)> = Vec::new();

    while let Some(header) = lines.next_nonempty() {
        match header {
            "$MeshFormat" => {
                let v = lines.expect()?;
                let version: f64 = num(&lines, v.split_whitespace().next(), "format version")?;
                if !(2.0..3.0).contains(&version) {
                    return Err(lines.err(format!("unsupported MSH version {version}")));
                }
                end(&mut lines, "$EndMeshFormat")?;
            }
            "$PhysicalNames" => {
                let n: usize = {
                    let c = lines.expect()?;
                    num(&lines, Some(c), "physical name count")?
                };
                for _ in 0..n {
                    let l = lines.expect()?;
                    let mut it = l.splitn(3, char::is_whitespace);
                    let dim: usize = num(&lines, it.next(), "physical dimension")?;
                    let tag: usize = num(&lines, it.next(), "physical tag")?;
                    let name = it
                        .next()
                        .map(|s| s.trim().trim_matches('"').to_string())
                        .filter(|s| !s.is_empty())
                        .ok_or_else(|| lines.err("missing physical name"))?;
                    names.insert(tag, (dim, name));
                }
                end(&mut lines, "$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let n: usize = {
                    let c = lines.expect()?;
                    num(&lines, Some(c), "node count")?
                };
                nodes.reserve(n);
                for _ in 0..n {
                    let l = lines.expect()?;
                    let mut it = l.split_whitespace();
                    let id: usize = num(&lines, it.next(), "node id")?;
                    let x: f64 = num(&lines, it.next(), "x")?;
                    let y: f64 = num(&lines, it.next(), "y")?;
                    let z: f64 = num(&lines, it.next(), "z")?;
                    if node_ids.insert(id, nodes.len()).is_some() {
                        return Err(lines.err(format!("duplicate node id {id}")));
                    }
                    nodes.push(Point::new(x, y, z));
                }
                end(&mut lines, "$EndNodes")?;
            }
            "$Elements" => {
                let n: usize = {
                    let c = lines.expect()?;
                    num(&lines, Some(c), "element count")?
                };
                for _ in 0..n {
                    let l = lines.expect()?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    let mut it = toks.iter().copied();
                    let id: usize = num(&lines, it.next(), "element id")?;
                    let ty: usize = num(&lines, it.next(), "element type")?;
                    let ntags: usize = num(&lines, it.next(), "tag count")?;
                    let mut tags = Vec::with_capacity(ntags);
                    for _ in 0..ntags {
                        tags.push(num::<usize>(&lines, it.next(), "tag")?);
                    }
                    let nn = match ty {
                        15 => 1,
                        1 => 2,
                        2 => 3,
                        4 => 4,
                        _ => return Err(lines.err(format!("unsupported element type {ty}"))),
                    };
                    let mut conn = Vec::with_capacity(nn);
                    for _ in 0..nn {
                        let raw: usize = num(&lines, it.next(), "element node")?;
                        let idx = *node_ids.get(&raw).ok_or_else(|| {
                            lines.err(format!("element {id} references unknown node {raw}"))
                        })?;
                        conn.push(idx);
                    }
                    if it.next().is_some() {
                        return Err(lines.err(format!("trailing data on element {id}")));
                    }
                    raw_elements.push((ty, tags.first().copied().unwrap_or(0), lines.line, conn));
                }
                end(&mut lines, "$EndElements")?;
            }
            other if other.starts_with('$') && !other.starts_with("$End") => {
                // Skip unknown sections.
                let close = format!("$End{}", &other[1..]);
                loop {
                    if lines.expect()? == close {
                        break;
                    }
                }
            }
            other => return Err(lines.err(format!("unexpected line `{other}`"))),
        }
    }

    let mut tets = Vec::new();
    let mut facets = Vec::new();
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    let add = |groups: &mut BTreeMap<String, Group>,
               tag: usize,
               kind: GroupKind,
               item: usize|
     -> Result<()> {
        if tag == 0 {
            return Ok(());
        }
        let (_, name) = names.get(&tag).ok_or_else(|| {
            Error::MissingGroup(format!("physical tag {tag} has no entry in $PhysicalNames"))
        })?;
        let g = groups.entry(name.clone()).or_insert_with(|| Group {
            name: name.clone(),
            tag,
            kind,
            items: Vec::new(),
        });
        if g.kind != kind {
            return Err(Error::Topology(format!(
                "group {name} mixes entity dimensions"
            )));
        }
        g.items.push(item);
        Ok(())
    };
    for (ty, tag, line, conn) in raw_elements {
        match ty {
            15 => add(&mut groups, tag, GroupKind::Vertices, conn[0])?,
            2 => {
                add(&mut groups, tag, GroupKind::Facets, facets.len())?;
                facets.push([conn[0], conn[1], conn[2]]);
            }
            4 => {
                add(&mut groups, tag, GroupKind::Volume, tets.len())?;
                tets.push([conn[0], conn[1], conn[2], conn[3]]);
            }
            1 => {}
            _ => unreachable!("filtered at parse (line {line})"),
        }
    }
    if tets.is_empty() {
        return Err(Error::Parse {
            line: lines.line,
            msg: "mesh contains no tetrahedra".into(),
        });
    }
    Mesh::new(nodes, tets, facets, groups)
}

fn end(lines: &mut Lines, marker: &str) -> Result<()> {
    let l = lines.expect()?;
    if l != marker {
        return Err(lines.err(format!("expected {marker}, found `{l}`")));
    }
    Ok(())
}

/// Serialises a mesh to MSH 2.2 ASCII. Tags are assigned in group-name order.
pub fn write_msh(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let tags: BTreeMap<&str, usize> = mesh
        .groups
        .keys()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i + 1))
        .collect();
    let _ = writeln!(s, "$PhysicalNames\n{}", mesh.groups.len());
    for g in mesh.groups.values() {
        let dim = match g.kind {
            GroupKind::Vertices => 0,
            GroupKind::Facets => 2,
            GroupKind::Volume => 3,
        };
        let _ = writeln!(s, "{dim} {} \"{}\"", tags[g.name.as_str()], g.name);
    }
    s.push_str("$EndPhysicalNames\n");
    let _ = writeln!(s, "$Nodes\n{}", mesh.nodes.len());
    for (i, p) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(s, "{} {:.17e} {:.17e} {:.17e}", i + 1, p.x, p.y, p.z);
    }
    s.push_str("$EndNodes\n");

    let mut tet_tag = vec![0usize; mesh.tets.len()];
    let mut elements: Vec<String> = Vec::new();
    for g in mesh.groups.values() {
        let tag = tags[g.name.as_str()];
        match g.kind {
            GroupKind::Vertices => {
                for &n in &g.items {
                    elements.push(format!("15 2 {tag} {tag} {}", n + 1));
                }
            }
            GroupKind::Facets => {
                for &f in &g.items {
                    let [a, b, c] = mesh.facets[f];
                    elements.push(format!("2 2 {tag} {tag} {} {} {}", a + 1, b + 1, c + 1));
                }
            }
            GroupKind::Volume => {
                for &t in &g.items {
                    tet_tag[t] = tag;
                }
            }
        }
    }
    for (t, [a, b, c, d]) in mesh.tets.iter().enumerate() {
        let tag = tet_tag[t];
        elements.push(format!(
            "4 2 {tag} {tag} {} {} {} {}",
            a + 1,
            b + 1,
            c + 1,
            d + 1
        ));
    }
    let _ = writeln!(s, "$Elements\n{}", elements.len());
    for (i, e) in elements.iter().enumerate() {
        let _ = writeln!(s, "{} {e}", i + 1);
    }
    s.push_str("$EndElements\n");
    s
}
