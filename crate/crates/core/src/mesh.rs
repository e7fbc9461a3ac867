//! Meshes, boundary node sets and DOF numbering.
//!
//! Structured quad4 grids are numbered row-major with x running fastest.
//! DOFs are interleaved per node: `[u0, v0, u1, v1, ...]` in 2D and
//! `[u0, v0, w0, ...]` in 3D.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance (mm) for the coordinate predicates that build node sets.
pub const SET_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Quad4,
    Tet4,
}

/// Shape of a square structured grid: `n` nodes per side over `[0, side]²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridShape {
    pub n: usize,
    pub side: f64,
}

impl GridShape {
    pub fn spacing(&self) -> f64 {
        self.side / (self.n - 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    elements: Vec<[usize; 4]>,
    kind: ElementKind,
    node_sets: BTreeMap<String, Vec<usize>>,
    grid: Option<GridShape>,
}

impl Mesh {
    /// Square grid of `n_per_side × n_per_side` nodes with counter-clockwise
    /// quad4 elements and the `left`/`right`/`bottom`/`top` edge sets.
    pub fn structured_grid(n_per_side: usize, side_length: f64) -> Result<Self> {
        if n_per_side < 2 {
            return Err(Error::InvalidArgument(format!(
                "a structured grid needs at least 2 nodes per side, got {n_per_side}"
            )));
        }
        if !(side_length > 0.0 && side_length.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "side length must be positive, got {side_length}"
            )));
        }
        let n = n_per_side;
        let h = side_length / (n - 1) as f64;
        let mut coords = Vec::with_capacity(2 * n * n);
        for i in 0..n * n {
            coords.push((i % n) as f64 * h);
            coords.push((i / n) as f64 * h);
        }
        let mut elements = Vec::with_capacity((n - 1) * (n - 1));
        for cy in 0..n - 1 {
            for cx in 0..n - 1 {
                let n0 = cy * n + cx;
                elements.push([n0, n0 + 1, n0 + n + 1, n0 + n]);
            }
        }
        let mut mesh = Mesh {
            dim: 2,
            coords,
            elements,
            kind: ElementKind::Quad4,
            node_sets: BTreeMap::new(),
            grid: Some(GridShape { n, side: side_length }),
        };
        mesh.add_box_face_sets();
        Ok(mesh)
    }

    /// Unit-cell-aligned cube `[0, side]³` with `cells` hexahedra per edge,
    /// each split into 6 tetrahedra sharing the cell's main diagonal.
    /// `cells = 1` gives the 6-tet cube.
    pub fn tet_cube(cells: usize, side: f64) -> Result<Self> {
        if cells == 0 || !(side > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tet cube needs cells >= 1 and side > 0 (got {cells}, {side})"
            )));
        }
        let m = cells + 1;
        let h = side / cells as f64;
        let idx = |i: usize, j: usize, k: usize| (k * m + j) * m + i;
        let mut coords = Vec::with_capacity(3 * m * m * m);
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    coords.extend_from_slice(&[i as f64 * h, j as f64 * h, k as f64 * h]);
                }
            }
        }
        const PERMS: [[usize; 3]; 6] =
            [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut elements = Vec::with_capacity(6 * cells * cells * cells);
        for k in 0..cells {
            for j in 0..cells {
                for i in 0..cells {
                    for perm in PERMS {
                        let mut p = [i, j, k];
                        let mut tet = [idx(p[0], p[1], p[2]); 4];
                        for (slot, &axis) in perm.iter().enumerate() {
                            p[axis] += 1;
                            tet[slot + 1] = idx(p[0], p[1], p[2]);
                        }
                        elements.push(tet);
                    }
                }
            }
        }
        let mut mesh = Mesh {
            dim: 3,
            coords,
            elements,
            kind: ElementKind::Tet4,
            node_sets: BTreeMap::new(),
            grid: None,
        };
        mesh.orient_tets()?;
        mesh.add_box_face_sets();
        Ok(mesh)
    }

    /// Mesh from raw flat coordinates and connectivity. Tet4 elements are
    /// reoriented to positive volume; quad4 orientation is left to the caller.
    pub fn from_parts(
        dim: usize,
        coords: Vec<f64>,
        elements: Vec<[usize; 4]>,
        kind: ElementKind,
    ) -> Result<Self> {
        let expected_dim = match kind {
            ElementKind::Quad4 => 2,
            ElementKind::Tet4 => 3,
        };
        if dim != expected_dim || !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} mesh needs {expected_dim}D coordinates"
            )));
        }
        let n_nodes = coords.len() / dim;
        for (e, el) in elements.iter().enumerate() {
            if let Some(bad) = el.iter().find(|&&i| i >= n_nodes) {
                return Err(Error::Topology(format!("element {e}: node {bad} out of range")));
            }
            let mut sorted = *el;
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Topology(format!("element {e} repeats a node index")));
            }
        }
        let mut mesh = Mesh { dim, coords, elements, kind, node_sets: BTreeMap::new(), grid: None };
        if kind == ElementKind::Tet4 {
            mesh.orient_tets()?;
        }
        mesh.add_box_face_sets();
        Ok(mesh)
    }

    /// Parse the line-oriented `NODES`/`ELEMS`/`SET` tetrahedral mesh format.
    pub fn parse_tet(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let header = |lines: &mut dyn Iterator<Item = (usize, &str)>, keyword: &str| {
            let (ln, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("missing `{keyword}` section"),
            })?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(keyword) {
                return Err(Error::Parse { line: ln, msg: format!("expected `{keyword} <count>`") });
            }
            let count = parse_num::<usize>(parts.next(), ln)?;
            Ok((ln, count))
        };

        let (_, n_nodes) = header(&mut lines, "NODES")?;
        let mut coords = Vec::with_capacity(3 * n_nodes);
        for _ in 0..n_nodes {
            let (ln, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "unexpected end of file in NODES".into(),
            })?;
            let mut parts = line.split_whitespace();
            for _ in 0..3 {
                coords.push(parse_num::<f64>(parts.next(), ln)?);
            }
            if parts.next().is_some() {
                return Err(Error::Parse { line: ln, msg: "expected 3 coordinates".into() });
            }
        }

        let (_, n_elems) = header(&mut lines, "ELEMS")?;
        let mut elements = Vec::with_capacity(n_elems);
        for _ in 0..n_elems {
            let (ln, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "unexpected end of file in ELEMS".into(),
            })?;
            let mut parts = line.split_whitespace();
            let mut tet = [0usize; 4];
            for slot in &mut tet {
                *slot = parse_num::<usize>(parts.next(), ln)?;
            }
            if parts.next().is_some() {
                return Err(Error::Parse { line: ln, msg: "expected 4 node indices".into() });
            }
            if let Some(bad) = tet.iter().find(|&&i| i >= n_nodes) {
                return Err(Error::Topology(format!(
                    "line {ln}: node index {bad} out of range for {n_nodes} nodes"
                )));
            }
            elements.push(tet);
        }

        let mut node_sets = BTreeMap::new();
        while let Some((ln, line)) = lines.next() {
            let mut parts = line.split_whitespace();
            if parts.next() != Some("SET") {
                return Err(Error::Parse { line: ln, msg: "expected `SET <name> <count>`".into() });
            }
            let name = parts
                .next()
                .ok_or(Error::Parse { line: ln, msg: "missing set name".into() })?
                .to_string();
            let count = parse_num::<usize>(parts.next(), ln)?;
            let mut members = Vec::with_capacity(count);
            while members.len() < count {
                let (ln, line) = lines.next().ok_or(Error::Parse {
                    line: ln,
                    msg: format!("unexpected end of file in SET {name}"),
                })?;
                for tok in line.split_whitespace() {
                    let node = parse_num::<usize>(Some(tok), ln)?;
                    if node >= n_nodes {
                        return Err(Error::Topology(format!(
                            "line {ln}: set node {node} out of range for {n_nodes} nodes"
                        )));
                    }
                    members.push(node);
                }
            }
            if members.len() != count {
                return Err(Error::Parse { line: ln, msg: format!("SET {name} has extra entries") });
            }
            members.sort_unstable();
            members.dedup();
            node_sets.insert(name, members);
        }

        let mut mesh = Mesh {
            dim: 3,
            coords,
            elements,
            kind: ElementKind::Tet4,
            node_sets,
            grid: None,
        };
        mesh.orient_tets()?;
        Ok(mesh)
    }

    /// Serialize a tet mesh back into the text format read by [`Mesh::parse_tet`].
    pub fn to_tet_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NODES {}", self.n_nodes());
        for i in 0..self.n_nodes() {
            let p = self.node(i);
            let _ = writeln!(out, "{} {} {}", p[0], p[1], p.get(2).copied().unwrap_or(0.0));
        }
        let _ = writeln!(out, "ELEMS {}", self.elements.len());
        for e in &self.elements {
            let _ = writeln!(out, "{} {} {} {}", e[0], e[1], e[2], e[3]);
        }
        for (name, members) in &self.node_sets {
            let _ = writeln!(out, "SET {} {}", name, members.len());
            for m in members {
                let _ = writeln!(out, "{m}");
            }
        }
        out
    }

    /// Add coordinate-predicate sets on the bounding box faces:
    /// `left`/`right` (x), `bottom`/`top` (y) and, in 3D, `back`/`front` (z).
    /// Existing sets with the same names are replaced.
    pub fn add_box_face_sets(&mut self) {
        const NAMES: [(&str, &str); 3] = [("left", "right"), ("bottom", "top"), ("back", "front")];
        for axis in 0..self.dim {
            let (lo, hi) = self.axis_range(axis);
            let select = |target: f64| -> Vec<usize> {
                (0..self.n_nodes())
                    .filter(|&i| (self.node(i)[axis] - target).abs() <= SET_TOLERANCE)
                    .collect()
            };
            let (lo_set, hi_set) = (select(lo), select(hi));
            self.node_sets.insert(NAMES[axis].0.to_string(), lo_set);
            self.node_sets.insert(NAMES[axis].1.to_string(), hi_set);
        }
    }

    pub fn insert_node_set(&mut self, name: &str, mut nodes: Vec<usize>) -> Result<()> {
        if let Some(bad) = nodes.iter().find(|&&i| i >= self.n_nodes()) {
            return Err(Error::Topology(format!("node {bad} out of range")));
        }
        nodes.sort_unstable();
        nodes.dedup();
        self.node_sets.insert(name.to_string(), nodes);
        Ok(())
    }

    fn orient_tets(&mut self) -> Result<()> {
        for e in 0..self.elements.len() {
            let tet = self.elements[e];
            let mut seen = tet;
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Topology(format!("element {e} repeats a node index")));
            }
            let v = self.signed_tet_volume(tet);
            if v.abs() <= 1e-300 {
                return Err(Error::Topology(format!("element {e} has zero volume")));
            }
            if v < 0.0 {
                self.elements[e].swap(2, 3);
            }
        }
        Ok(())
    }

    fn signed_tet_volume(&self, tet: [usize; 4]) -> f64 {
        let p0 = self.node(tet[0]);
        let d = |k: usize| {
            let p = self.node(tet[k]);
            [p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]]
        };
        let (a, b, c) = (d(1), d(2), d(3));
        let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]);
        det / 6.0
    }

    fn axis_range(&self, axis: usize) -> (f64, f64) {
        (0..self.n_nodes()).map(|i| self.node(i)[axis]).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), x| (lo.min(x), hi.max(x)),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.coords.len()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn element(&self, e: usize) -> [usize; 4] {
        self.elements[e]
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn grid(&self) -> Option<GridShape> {
        self.grid
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize]> {
        self.node_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownSet(name.to_string()))
    }

    pub fn node_sets(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.node_sets
    }

    /// Area (quad4, shoelace) or volume (tet4) of element `e`.
    pub fn element_measure(&self, e: usize) -> f64 {
        let el = self.elements[e];
        match self.kind {
            ElementKind::Quad4 => {
                let mut twice = 0.0;
                for k in 0..4 {
                    let a = self.node(el[k]);
                    let b = self.node(el[(k + 1) % 4]);
                    twice += a[0] * b[1] - b[0] * a[1];
                }
                0.5 * twice
            }
            ElementKind::Tet4 => self.signed_tet_volume(el),
        }
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    let tok = tok.ok_or(Error::Parse { line, msg: "missing value".into() })?;
    tok.parse::<T>()
        .map_err(|_| Error::Parse { line, msg: format!("cannot parse `{tok}`") })
}

/// One Dirichlet constraint: every node of `set` gets `component` fixed to `value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletBc {
    pub set: String,
    pub component: usize,
    pub value: f64,
}

impl DirichletBc {
    pub fn new(set: &str, component: usize, value: f64) -> Self {
        DirichletBc { set: set.to_string(), component, value }
    }
}

/// Interleaved DOF numbering with a prescribed/free partition.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    n_nodes: usize,
    dofs_per_node: usize,
    prescribed: BTreeMap<usize, f64>,
    free: Vec<usize>,
    is_prescribed: Vec<bool>,
}

impl DofMap {
    /// Later entries overwrite earlier ones on the same DOF.
    pub fn new(mesh: &Mesh, dirichlet: &[DirichletBc]) -> Result<Self> {
        let dpn = mesh.dim();
        let mut prescribed = BTreeMap::new();
        for bc in dirichlet {
            if bc.component >= dpn {
                return Err(Error::InvalidArgument(format!(
                    "component {} out of range for a {dpn}D mesh",
                    bc.component
                )));
            }
            for &node in mesh.node_set(&bc.set)? {
                prescribed.insert(node * dpn + bc.component, bc.value);
            }
        }
        let n_dofs = mesh.n_nodes() * dpn;
        let mut is_prescribed = vec![false; n_dofs];
        for &d in prescribed.keys() {
            is_prescribed[d] = true;
        }
        let free = (0..n_dofs).filter(|&d| !is_prescribed[d]).collect();
        Ok(DofMap { n_nodes: mesh.n_nodes(), dofs_per_node: dpn, prescribed, free, is_prescribed })
    }

    pub fn dof(&self, node: usize, component: usize) -> usize {
        node * self.dofs_per_node + component
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dofs_per_node(&self) -> usize {
        self.dofs_per_node
    }

    pub fn n_dofs(&self) -> usize {
        self.n_nodes * self.dofs_per_node
    }

    pub fn prescribed(&self) -> &BTreeMap<usize, f64> {
        &self.prescribed
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn is_prescribed(&self, dof: usize) -> bool {
        self.is_prescribed[dof]
    }

    pub fn prescribed_mask(&self) -> &[bool] {
        &self.is_prescribed
    }

    /// Number of distinct nodes carrying at least one prescribed DOF.
    pub fn n_constrained_nodes(&self) -> usize {
        let mut nodes: Vec<usize> =
            self.prescribed.keys().map(|d| d / self.dofs_per_node).collect();
        nodes.dedup();
        nodes.len()
    }

    /// Overwrite prescribed entries of `u` with their values.
    pub fn apply_prescribed(&self, u: &mut [f64]) {
        for (&d, &v) in &self.prescribed {
            u[d] = v;
        }
    }

    /// Full-length vector holding prescribed values and zeros elsewhere.
    pub fn prescribed_vector(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.n_dofs()];
        self.apply_prescribed(&mut u);
        u
    }

    /// Largest prescribed magnitude.
    pub fn max_prescribed_abs(&self) -> f64 {
        self.prescribed.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_grid_has_121_nodes() {
        let mesh = Mesh::structured_grid(11, 1.0).unwrap();
        assert_eq!(mesh.n_nodes(), 121);
        assert_eq!(mesh.n_elements(), 100);
    }

    #[test]
    fn smallest_grid_is_all_boundary() {
        let mesh = Mesh::structured_grid(2, 1.0).unwrap();
        assert_eq!((mesh.n_nodes(), mesh.n_elements()), (4, 1));
        let mut all: Vec<usize> = ["left", "right", "top", "bottom"]
            .iter()
            .flat_map(|s| mesh.node_set(s).unwrap().to_vec())
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn grid_51_sets_match_enumeration() {
        let n = 51;
        let mesh = Mesh::structured_grid(n, 1.0).unwrap();
        assert_eq!(mesh.n_nodes(), n * n);
        assert_eq!(mesh.n_elements(), (n - 1) * (n - 1));
        let left: Vec<usize> = (0..n * n).filter(|i| i % n == 0).collect();
        let right: Vec<usize> = (0..n * n).filter(|i| i % n == n - 1).collect();
        assert_eq!(mesh.node_set("left").unwrap(), left.as_slice());
        assert_eq!(mesh.node_set("right").unwrap(), right.as_slice());
        assert_eq!(left.len(), 51);
    }

    #[test]
    fn grid_node_positions_and_orientation() {
        let n = 5;
        let mesh = Mesh::structured_grid(n, 2.0).unwrap();
        for i in 0..n * n {
            let p = mesh.node(i);
            assert!((p[0] - 2.0 * (i % n) as f64 / 4.0).abs() < 1e-15);
            assert!((p[1] - 2.0 * (i / n) as f64 / 4.0).abs() < 1e-15);
        }
        for e in 0..mesh.n_elements() {
            assert!(mesh.element_measure(e) > 0.0);
        }
    }

    #[test]
    fn node_element_incidence() {
        let n = 6;
        let mesh = Mesh::structured_grid(n, 1.0).unwrap();
        let mut count = vec![0; mesh.n_nodes()];
        for el in mesh.elements() {
            for &i in el {
                count[i] += 1;
            }
        }
        for i in 0..mesh.n_nodes() {
            let (x, y) = (i % n, i / n);
            let on_x = x == 0 || x == n - 1;
            let on_y = y == 0 || y == n - 1;
            let expected = match (on_x, on_y) {
                (true, true) => 1,
                (true, false) | (false, true) => 2,
                _ => 4,
            };
            assert_eq!(count[i], expected, "node {i}");
        }
    }

    #[test]
    fn rejects_tiny_grid() {
        assert!(matches!(Mesh::structured_grid(1, 1.0), Err(Error::InvalidArgument(_))));
    }

    const UNIT_TET: &str = "# reference tet\nNODES 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nELEMS 1\n0 1 2 3\n";

    #[test]
    fn unit_tet_volume() {
        let mesh = Mesh::parse_tet(UNIT_TET).unwrap();
        assert!((mesh.element_measure(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn negative_tet_is_reoriented() {
        let text = "NODES 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nELEMS 1\n0 2 1 3\n";
        let mesh = Mesh::parse_tet(text).unwrap();
        assert!((mesh.element_measure(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_index_is_topology_error() {
        let text = "NODES 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nELEMS 1\n0 1 2 99\n";
        assert!(matches!(Mesh::parse_tet(text), Err(Error::Topology(_))));
    }

    #[test]
    fn bad_float_reports_line() {
        let text = "NODES 2\n0 0 0\n1 x 0\n";
        match Mesh::parse_tet(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn six_tet_cube_has_unit_volume() {
        let mesh = Mesh::tet_cube(1, 1.0).unwrap();
        assert_eq!(mesh.n_elements(), 6);
        let total: f64 = (0..6).map(|e| mesh.element_measure(e)).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((0..6).all(|e| mesh.element_measure(e) > 0.0));
        assert_eq!(mesh.node_set("back").unwrap().len(), 4);
        assert_eq!(mesh.node_set("front").unwrap().len(), 4);
    }

    #[test]
    fn tet_text_round_trip() {
        let mut mesh = Mesh::tet_cube(2, 1.0).unwrap();
        mesh.insert_node_set("corner", vec![0]).unwrap();
        let back = Mesh::parse_tet(&mesh.to_tet_text()).unwrap();
        assert_eq!(back.coords(), mesh.coords());
        assert_eq!(back.elements(), mesh.elements());
        assert_eq!(back.node_set("corner").unwrap(), &[0]);
    }

    #[test]
    fn paper_bcs_dof_counts() {
        let mesh = Mesh::structured_grid(11, 1.0).unwrap();
        let bcs = [
            DirichletBc::new("left", 0, 0.0),
            DirichletBc::new("left", 1, 0.0),
            DirichletBc::new("right", 0, 0.05),
            DirichletBc::new("right", 1, 0.05),
        ];
        let dofs = DofMap::new(&mesh, &bcs).unwrap();
        assert_eq!(dofs.prescribed().len(), 44);
        assert_eq!(dofs.free_dofs().len(), 198);
        assert_eq!(dofs.n_constrained_nodes(), 22);
        assert!(dofs.free_dofs().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn unconstrained_dof_map_is_all_free() {
        let mesh = Mesh::structured_grid(3, 1.0).unwrap();
        let dofs = DofMap::new(&mesh, &[]).unwrap();
        assert_eq!(dofs.free_dofs(), (0..18).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn two_by_two_fully_constrained() {
        let mesh = Mesh::structured_grid(2, 1.0).unwrap();
        let bcs: Vec<_> = ["left", "right"]
            .iter()
            .flat_map(|s| [DirichletBc::new(s, 0, 0.0), DirichletBc::new(s, 1, 0.0)])
            .collect();
        let dofs = DofMap::new(&mesh, &bcs).unwrap();
        assert_eq!(dofs.prescribed().len(), 8);
        assert!(dofs.free_dofs().is_empty());
    }

    #[test]
    fn last_writer_wins() {
        let mesh = Mesh::structured_grid(3, 1.0).unwrap();
        let bcs = [DirichletBc::new("left", 0, 1.0), DirichletBc::new("bottom", 0, 2.0)];
        let dofs = DofMap::new(&mesh, &bcs).unwrap();
        assert_eq!(dofs.prescribed()[&0], 2.0);
        assert_eq!(dofs.prescribed()[&dofs.dof(3, 0)], 1.0);
    }

    #[test]
    fn unknown_set_is_reported() {
        let mesh = Mesh::structured_grid(3, 1.0).unwrap();
        let err = DofMap::new(&mesh, &[DirichletBc::new("nowhere", 0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::UnknownSet(s) if s == "nowhere"));
    }
}
