//! P1 finite elements on triangulations of planar domains.
//!
//! Besides the usual stiffness, mass and load assembly this module provides
//! the element/node incidence `D` and the measure vectors used to express the
//! support measure of a piecewise linear function through its element
//! values `w_u = D|u|`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::FemError;
use crate::linalg::{csr_matvec, principal_submatrix};
use crate::measure::DiscreteMeasureSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// `true` for nodes on the domain boundary.
    pub boundary: Vec<bool>,
    /// Nominal mesh size (`1/n` for structured meshes, largest edge otherwise).
    pub h_target: f64,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl TriMesh {
    /// Uniform `n × n` grid of the unit square; every cell is cut along the
    /// diagonal from its lower-left to its upper-right corner.
    pub fn structured(n: usize) -> Result<Self, FemError> {
        if n < 2 {
            return Err(FemError::TooCoarse(n));
        }
        let stride = n + 1;
        let h = 1.0 / n as f64;
        let mut nodes = Vec::with_capacity(stride * stride);
        let mut boundary = Vec::with_capacity(stride * stride);
        for j in 0..stride {
            for i in 0..stride {
                nodes.push([i as f64 * h, j as f64 * h]);
                boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let p00 = j * stride + i;
                let p10 = p00 + 1;
                let p01 = p00 + stride;
                let p11 = p01 + 1;
                triangles.push([p00, p10, p11]);
                triangles.push([p00, p11, p01]);
            }
        }
        Ok(Self {
            nodes,
            triangles,
            boundary,
            h_target: h,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Largest element diameter.
    pub fn max_diameter(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let mut d = 0.0_f64;
                for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                    let p = self.nodes[tri[a]];
                    let q = self.nodes[tri[b]];
                    d = d.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
                }
                d
            })
            .fold(0.0, f64::max)
    }

    /// Validates a node/triangle list and marks nodes on edges that belong
    /// to exactly one triangle as boundary nodes.
    pub fn from_parts(nodes: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self, FemError> {
        let n = nodes.len();
        let mut used = vec![false; n];
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(FemError::NodeOutOfRange {
                        triangle: t,
                        node: v,
                        nodes: n,
                    });
                }
                used[v] = true;
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(FemError::DegenerateElement(t));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area == 0.0 || !area.is_finite() {
                return Err(FemError::DegenerateElement(t));
            }
            if area < 0.0 {
                return Err(FemError::InvertedElement(t));
            }
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        if let Some(j) = used.iter().position(|u| !u) {
            return Err(FemError::DanglingNode(j));
        }
        let mut boundary = vec![false; n];
        for (&(a, b), &count) in &edges {
            if count == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }
        let mut mesh = Self {
            nodes,
            triangles,
            boundary,
            h_target: 0.0,
        };
        mesh.h_target = mesh.max_diameter();
        Ok(mesh)
    }

    /// Parses the plain-text mesh format (`nodes N`, `N` coordinate lines,
    /// `triangles M`, `M` lines of 0-based node indices).
    pub fn parse(text: &str) -> Result<Self, FemError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let node_count = header(&mut lines, "nodes")?;
        let mut nodes = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            let (line, fields) = record(&mut lines, 2)?;
            let x = parse_num::<f64>(fields[0], line)?;
            let y = parse_num::<f64>(fields[1], line)?;
            nodes.push([x, y]);
        }
        let tri_count = header(&mut lines, "triangles")?;
        let mut triangles = Vec::with_capacity(tri_count);
        for _ in 0..tri_count {
            let (line, fields) = record(&mut lines, 3)?;
            triangles.push([
                parse_num::<usize>(fields[0], line)?,
                parse_num::<usize>(fields[1], line)?,
                parse_num::<usize>(fields[2], line)?,
            ]);
        }
        if let Some((line, _)) = lines.next() {
            return Err(FemError::Parse {
                line,
                message: "unexpected trailing content".into(),
            });
        }
        Self::from_parts(nodes, triangles)
    }

    pub fn import(path: impl AsRef<Path>) -> Result<Self, FemError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes {}", self.nodes.len());
        for [x, y] in &self.nodes {
            let _ = writeln!(out, "{x:e} {y:e}");
        }
        let _ = writeln!(out, "triangles {}", self.triangles.len());
        for [a, b, c] in &self.triangles {
            let _ = writeln!(out, "{a} {b} {c}");
        }
        out
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<(), FemError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

type Lines<'a> = dyn Iterator<Item = (usize, &'a str)> + 'a;

fn header<'a>(lines: &mut Lines<'a>, keyword: &str) -> Result<usize, FemError> {
    let (line, text) = lines.next().ok_or(FemError::Parse {
        line: 0,
        message: format!("missing `{keyword}` header"),
    })?;
    let mut parts = text.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(FemError::Parse {
            line,
            message: format!("expected `{keyword} <count>`"),
        });
    }
    let count = parts.next().ok_or(FemError::Parse {
        line,
        message: "missing count".into(),
    })?;
    parse_num(count, line)
}

fn record<'a>(lines: &mut Lines<'a>, width: usize) -> Result<(usize, Vec<&'a str>), FemError> {
    let (line, text) = lines.next().ok_or(FemError::Parse {
        line: 0,
        message: "unexpected end of file".into(),
    })?;
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != width {
        return Err(FemError::Parse {
            line,
            message: format!("expected {width} fields, found {}", fields.len()),
        });
    }
    Ok((line, fields))
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, FemError> {
    s.parse().map_err(|_| FemError::Parse {
        line,
        message: format!("cannot parse `{s}`"),
    })
}

/// Reads a nodal field file (`field N` followed by `N` values).
pub fn parse_field(text: &str) -> Result<Vec<f64>, FemError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let count = header(&mut lines, "field")?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, fields) = record(&mut lines, 1)?;
        values.push(parse_num::<f64>(fields[0], line)?);
    }
    Ok(values)
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Vec<f64>, FemError> {
    parse_field(&std::fs::read_to_string(path)?)
}

pub fn field_to_text(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 24);
    let _ = writeln!(out, "field {}", values.len());
    for v in values {
        let _ = writeln!(out, "{v:e}");
    }
    out
}

pub fn write_field(path: impl AsRef<Path>, values: &[f64]) -> Result<(), FemError> {
    std::fs::write(path, field_to_text(values))?;
    Ok(())
}

/// Assembled P1 system with homogeneous Dirichlet conditions eliminated.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub mesh: TriMesh,
    /// Stiffness matrix on free degrees of freedom.
    pub stiffness: CsrMatrix<f64>,
    /// Mass matrix on free degrees of freedom.
    pub mass: CsrMatrix<f64>,
    /// Load vector on free degrees of freedom.
    pub load: Vec<f64>,
    pub stiffness_full: CsrMatrix<f64>,
    pub mass_full: CsrMatrix<f64>,
    /// Element × node 0/1 incidence.
    pub incidence: CsrMatrix<f64>,
    pub elem_measure: Vec<f64>,
    /// Total measure of the elements around each node.
    pub patch_measure: Vec<f64>,
    /// `∫ φ_j` for every node.
    pub basis_integral: Vec<f64>,
    /// Node index of every free degree of freedom.
    pub free_nodes: Vec<usize>,
    /// Degree of freedom of every node (`None` on the boundary).
    pub dof_of_node: Vec<Option<usize>>,
    /// Elements containing each node.
    pub node_elements: Vec<Vec<usize>>,
    element_space: DiscreteMeasureSpace,
}

/// Assembles stiffness, mass and load for `-Δu = g` with `u = 0` on the
/// boundary. The load uses the edge-midpoint rule.
pub fn assemble(mesh: &TriMesh, g: impl Fn(f64, f64) -> f64) -> Result<FemSystem, FemError> {
    let n = mesh.num_nodes();
    let m = mesh.num_triangles();
    let mut stiff = CooMatrix::new(n, n);
    let mut mass = CooMatrix::new(n, n);
    let mut incidence = CooMatrix::new(m, n);
    let mut load_full = vec![0.0; n];
    let mut elem_measure = Vec::with_capacity(m);
    let mut node_elements = vec![Vec::new(); n];

    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|v| mesh.nodes[v]);
        let area = signed_area(p[0], p[1], p[2]);
        if area <= 0.0 || !area.is_finite() {
            return Err(if area < 0.0 {
                FemError::InvertedElement(t)
            } else {
                FemError::DegenerateElement(t)
            });
        }
        elem_measure.push(area);
        let grads: [[f64; 2]; 3] = std::array::from_fn(|a| {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            [
                (p[b][1] - p[c][1]) / (2.0 * area),
                (p[c][0] - p[b][0]) / (2.0 * area),
            ]
        });
        for a in 0..3 {
            for b in 0..3 {
                let k = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                stiff.push(tri[a], tri[b], k);
                let mm = if a == b { area / 6.0 } else { area / 12.0 };
                mass.push(tri[a], tri[b], mm);
            }
            incidence.push(t, tri[a], 1.0);
            node_elements[tri[a]].push(t);
        }
        // Midpoint of the edge opposite vertex a.
        let mid: [f64; 3] = std::array::from_fn(|a| {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            g(0.5 * (p[b][0] + p[c][0]), 0.5 * (p[b][1] + p[c][1]))
        });
        for a in 0..3 {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            // φ_a is 1/2 on the two edges touching vertex a and 0 on the opposite one.
            load_full[tri[a]] += area / 6.0 * (mid[b] + mid[c]);
        }
    }

    let stiffness_full = CsrMatrix::from(&stiff);
    let mass_full = CsrMatrix::from(&mass);
    let incidence = CsrMatrix::from(&incidence);

    let mut patch_measure = vec![0.0; n];
    for (node, elems) in node_elements.iter().enumerate() {
        patch_measure[node] = elems.iter().map(|&t| elem_measure[t]).sum();
    }
    let basis_integral = patch_measure.iter().map(|p| p / 3.0).collect();

    let free_nodes: Vec<usize> = (0..n).filter(|&j| !mesh.boundary[j]).collect();
    if free_nodes.is_empty() {
        return Err(FemError::NoInteriorNodes);
    }
    let mut dof_of_node = vec![None; n];
    for (dof, &node) in free_nodes.iter().enumerate() {
        dof_of_node[node] = Some(dof);
    }
    let stiffness = principal_submatrix(&stiffness_full, &free_nodes);
    let mass_free = principal_submatrix(&mass_full, &free_nodes);
    let load = free_nodes.iter().map(|&j| load_full[j]).collect();
    let element_space = DiscreteMeasureSpace::new(elem_measure.clone())
        .map_err(|_| FemError::DegenerateElement(0))?;

    Ok(FemSystem {
        mesh: mesh.clone(),
        stiffness,
        mass: mass_free,
        load,
        stiffness_full,
        mass_full,
        incidence,
        elem_measure,
        patch_measure,
        basis_integral,
        free_nodes,
        dof_of_node,
        node_elements,
        element_space,
    })
}

impl FemSystem {
    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn num_dofs(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elem_measure.len()
    }

    /// Measure space on the elements with atom measures `μ(T_i)`.
    pub fn element_space(&self) -> &DiscreteMeasureSpace {
        &self.element_space
    }

    pub fn domain_measure(&self) -> f64 {
        self.element_space.total_measure()
    }

    pub fn max_elem_measure(&self) -> f64 {
        self.elem_measure.iter().copied().fold(0.0, f64::max)
    }

    /// Extends a free-d.o.f. vector by zeros on the boundary.
    pub fn embed(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.num_nodes()];
        for (dof, &node) in self.free_nodes.iter().enumerate() {
            full[node] = u[dof];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|&j| full[j]).collect()
    }

    /// Patch measures `μ(△_j)` of the free nodes.
    pub fn free_patch_measure(&self) -> Vec<f64> {
        self.free_nodes.iter().map(|&j| self.patch_measure[j]).collect()
    }

    /// Element values `w_u = D|u|` for a nodal vector over all nodes.
    pub fn w_of(&self, u_full: &[f64]) -> Result<Vec<f64>, FemError> {
        if u_full.len() != self.num_nodes() {
            return Err(FemError::DimensionMismatch {
                expected: self.num_nodes(),
                found: u_full.len(),
            });
        }
        let abs: Vec<f64> = u_full.iter().map(|v| v.abs()).collect();
        let mut w = vec![0.0; self.num_elements()];
        csr_matvec(&self.incidence, &abs, &mut w);
        Ok(w)
    }

    /// `w_u` for a free-d.o.f. vector.
    pub fn w_of_free(&self, u: &[f64]) -> Vec<f64> {
        self.w_of(&self.embed(u)).expect("embedded vector has node length")
    }

    /// Lumped L¹ approximation `Σ_j |u_j| ∫φ_j`.
    pub fn l1_h(&self, u_full: &[f64]) -> f64 {
        u_full
            .iter()
            .zip(&self.basis_integral)
            .map(|(u, b)| u.abs() * b)
            .sum()
    }

    /// Nodal interpolant of `f` over all nodes.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.mesh.nodes.iter().map(|&[x, y]| f(x, y)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::measure::{weighted_l0, weighted_l1};

    #[test]
    fn structured_counts() {
        let m2 = TriMesh::structured(2).unwrap();
        assert_eq!((m2.num_nodes(), m2.num_triangles()), (9, 8));
        assert!((m2.total_area() - 1.0).abs() < 1e-14);
        let m8 = TriMesh::structured(8).unwrap();
        assert_eq!((m8.num_nodes(), m8.num_triangles()), (81, 128));
        for t in 0..m8.num_triangles() {
            assert!((m8.area(t) - 1.0 / 128.0).abs() < 1e-15);
        }
        assert_eq!(m8.boundary.iter().filter(|b| **b).count(), 32);
        assert!(matches!(TriMesh::structured(1), Err(FemError::TooCoarse(1))));
    }

    #[test]
    fn text_round_trip() {
        let mesh = TriMesh::structured(3).unwrap();
        let back = TriMesh::parse(&mesh.to_text()).unwrap();
        assert_eq!(back.nodes, mesh.nodes);
        assert_eq!(back.triangles, mesh.triangles);
        assert_eq!(back.boundary, mesh.boundary);
    }

    #[test]
    fn malformed_meshes_are_rejected() {
        let repeated = "nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 0 2\n";
        assert!(matches!(TriMesh::parse(repeated), Err(FemError::DegenerateElement(0))));
        let inverted = "nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1\n";
        assert!(matches!(TriMesh::parse(inverted), Err(FemError::InvertedElement(0))));
        let dangling = "nodes 4\n0 0\n1 0\n0 1\n5 5\ntriangles 1\n0 1 2\n";
        assert!(matches!(TriMesh::parse(dangling), Err(FemError::DanglingNode(3))));
        let garbage = "nodes 1\n0 zero\n";
        assert!(matches!(TriMesh::parse(garbage), Err(FemError::Parse { line: 2, .. })));
        let out_of_range = "nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 7\n";
        assert!(matches!(TriMesh::parse(out_of_range), Err(FemError::NodeOutOfRange { .. })));
    }

    #[test]
    fn field_round_trip() {
        let values = vec![0.0, -1.5, 1e-300, std::f64::consts::PI];
        assert_eq!(parse_field(&field_to_text(&values)).unwrap(), values);
    }

    #[test]
    fn zero_load_and_constant_kernel() {
        let mesh = TriMesh::structured(4).unwrap();
        let sys = assemble(&mesh, |_, _| 0.0).unwrap();
        assert!(sys.load.iter().all(|&b| b == 0.0));
        let ones = vec![1.0; sys.num_nodes()];
        let mut r = vec![0.0; sys.num_nodes()];
        csr_matvec(&sys.stiffness_full, &ones, &mut r);
        for &j in &sys.free_nodes {
            assert!(r[j].abs() < 1e-13);
        }
    }

    #[test]
    fn measure_identities() {
        let sys = assemble(&TriMesh::structured(6).unwrap(), |_, _| 1.0).unwrap();
        // Three incidences per element.
        let offsets = sys.incidence.row_offsets();
        for t in 0..sys.num_elements() {
            assert_eq!(offsets[t + 1] - offsets[t], 3);
        }
        let mut row_sums = vec![0.0; sys.num_nodes()];
        csr_matvec(&sys.mass_full, &vec![1.0; sys.num_nodes()], &mut row_sums);
        for j in 0..sys.num_nodes() {
            assert!((sys.basis_integral[j] * 3.0 - sys.patch_measure[j]).abs() < 1e-15);
            assert!((row_sums[j] - sys.basis_integral[j]).abs() < 1e-15);
        }
        // Constant load: b_j = ∫φ_j.
        for (dof, &j) in sys.free_nodes.iter().enumerate() {
            assert!((sys.load[dof] - sys.basis_integral[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn w_of_single_node() {
        let sys = assemble(&TriMesh::structured(4).unwrap(), |_, _| 0.0).unwrap();
        let node = sys.free_nodes[5];
        let mut u = vec![0.0; sys.num_nodes()];
        assert!(sys.w_of(&u).unwrap().iter().all(|&w| w == 0.0));
        u[node] = 1.0;
        let w = sys.w_of(&u).unwrap();
        for (t, &wt) in w.iter().enumerate() {
            let expected = if sys.node_elements[node].contains(&t) { 1.0 } else { 0.0 };
            assert_eq!(wt, expected);
        }
        assert!(sys.w_of(&[1.0]).is_err());
    }

    #[test]
    fn support_measure_via_element_values() {
        let sys = assemble(&TriMesh::structured(5).unwrap(), |_, _| 0.0).unwrap();
        let mut u = vec![0.0; sys.num_nodes()];
        u[sys.free_nodes[0]] = 2.0;
        u[sys.free_nodes[7]] = -1.0;
        // Elements where u_h does not vanish identically.
        let direct: f64 = sys
            .mesh
            .triangles
            .iter()
            .enumerate()
            .filter(|(_, tri)| tri.iter().any(|&v| u[v] != 0.0))
            .map(|(t, _)| sys.elem_measure[t])
            .sum();
        let w = sys.w_of(&u).unwrap();
        let l0 = weighted_l0(&w, sys.element_space()).unwrap();
        assert!((direct - l0).abs() < 1e-15);
        let l1h = sys.l1_h(&u);
        assert!((l1h - weighted_l1(&w, sys.element_space()).unwrap() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stiffness_matches_elementwise_energy() {
        let sys = assemble(&TriMesh::structured(5).unwrap(), |_, _| 0.0).unwrap();
        let f = |x: f64, y: f64| x * x - y + 0.3 * x * y;
        let h = |x: f64, y: f64| (3.0 * x).sin() + y * y;
        let u = sys.restrict(&sys.interpolate(f));
        let v = sys.restrict(&sys.interpolate(h));
        let (uf, vf) = (sys.embed(&u), sys.embed(&v));
        let mut energy = 0.0;
        for (t, tri) in sys.mesh.triangles.iter().enumerate() {
            let p = tri.map(|k| sys.mesh.nodes[k]);
            // Gradient of the linear interpolant from two edge vectors.
            let (e1, e2) = ([p[1][0] - p[0][0], p[1][1] - p[0][1]], [p[2][0] - p[0][0], p[2][1] - p[0][1]]);
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            let grad = |vals: [f64; 3]| {
                let (d1, d2) = (vals[1] - vals[0], vals[2] - vals[0]);
                [(d1 * e2[1] - d2 * e1[1]) / det, (e1[0] * d2 - e2[0] * d1) / det]
            };
            let gu = grad(tri.map(|k| uf[k]));
            let gv = grad(tri.map(|k| vf[k]));
            energy += sys.elem_measure[t] * (gu[0] * gv[0] + gu[1] * gv[1]);
        }
        let mut av = vec![0.0; v.len()];
        csr_matvec(&sys.stiffness, &v, &mut av);
        assert!((dot(&u, &av) - energy).abs() < 1e-12 * energy.abs().max(1.0));
    }
}
