//! Conforming triangular meshes with edge connectivity.
//!
//! Triangle vertex lists are normalized to counter-clockwise order. Local edge
//! `i` of a triangle is the edge opposite its local vertex `i`. Edge endpoints
//! are stored lower global index first, which also fixes the direction of the
//! edge parameterization used by the H(div) degrees of freedom.
//!
//! Interior edges carry `minus < plus` (element indices) and a unit normal
//! pointing from the minus element into the plus element. Boundary edges carry
//! the outward normal of their single element.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoints, lower global vertex first.
    pub vertices: [usize; 2],
    pub minus: usize,
    pub plus: Option<usize>,
    pub normal: [f64; 2],
    pub length: f64,
    pub midpoint: [f64; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.plus.is_none()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub area: f64,
    pub diameter: f64,
    pub inradius: f64,
    pub barycenter: [f64; 2],
}

#[derive(Clone, Copy, Debug)]
struct Grid {
    rect: Rect,
    nx: usize,
    ny: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    elem_edges: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    geometry: Vec<ElementGeometry>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    interior_index: Vec<Option<usize>>,
    grid: Option<Grid>,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

impl Mesh {
    /// Build connectivity and metrics from raw vertex and triangle lists.
    pub fn from_raw(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        Self::build(vertices, triangles, None)
    }

    fn build(vertices: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>, grid: Option<Grid>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let nv = vertices.len();
        let mut geometry = Vec::with_capacity(triangles.len());
        for (k, t) in triangles.iter_mut().enumerate() {
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {k} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidMesh(format!("triangle {k} repeats a vertex")));
            }
            let p = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
            let signed = 0.5 * cross(sub(p[1], p[0]), sub(p[2], p[0]));
            let lens = [norm(sub(p[2], p[1])), norm(sub(p[0], p[2])), norm(sub(p[1], p[0]))];
            let diameter = lens.iter().cloned().fold(0.0, f64::max);
            if !(signed.abs() > 1e-14 * diameter * diameter) {
                return Err(Error::InvalidMesh(format!("triangle {k} is degenerate")));
            }
            if signed < 0.0 {
                t.swap(1, 2);
            }
            let area = signed.abs();
            let perimeter: f64 = lens.iter().sum();
            geometry.push(ElementGeometry {
                area,
                diameter,
                inradius: 2.0 * area / perimeter,
                barycenter: [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0],
            });
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut owners: Vec<Vec<usize>> = Vec::new();
        let mut keys: Vec<(usize, usize)> = Vec::new();
        let mut elem_edges = vec![[0usize; 3]; triangles.len()];
        for (k, t) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = t[(i + 1) % 3];
                let b = t[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                let id = *lookup.entry(key).or_insert_with(|| {
                    owners.push(Vec::new());
                    keys.push(key);
                    owners.len() - 1
                });
                owners[id].push(k);
                elem_edges[k][i] = id;
            }
        }

        let mut edges = Vec::with_capacity(keys.len());
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut interior_index = vec![None; keys.len()];
        for (id, (&(a, b), own)) in keys.iter().zip(&owners).enumerate() {
            if own.len() > 2 {
                return Err(Error::InvalidMesh(format!("edge ({a}, {b}) is shared by {} triangles", own.len())));
            }
            let pa = vertices[a];
            let pb = vertices[b];
            let d = sub(pb, pa);
            let length = norm(d);
            let mut n = [d[1] / length, -d[0] / length];
            let minus = own.iter().cloned().min().unwrap();
            let plus = if own.len() == 2 { own.iter().cloned().max() } else { None };
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let bm = geometry[minus].barycenter;
            if n[0] * (mid[0] - bm[0]) + n[1] * (mid[1] - bm[1]) < 0.0 {
                n = [-n[0], -n[1]];
            }
            if let Some(p) = plus {
                if triangles[p] == triangles[minus] {
                    return Err(Error::InvalidMesh(format!("duplicate triangle {p}")));
                }
                interior_index[id] = Some(interior.len());
                interior.push(id);
            } else {
                boundary.push(id);
            }
            debug_assert!((norm(n) - 1.0).abs() < 1e-14);
            edges.push(Edge { vertices: [a, b], minus, plus, normal: n, length, midpoint: mid });
        }

        Ok(Self { vertices, triangles, elem_edges, edges, geometry, interior, boundary, interior_index, grid })
    }

    /// Structured mesh of `nx * ny` cells, each split along its lower-left to
    /// upper-right diagonal.
    pub fn rectangle(rect: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || !(rect.x1 > rect.x0) || !(rect.y1 > rect.y0) {
            return Err(Error::InvalidMesh("empty rectangle or zero cell count".into()));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    rect.x0 + (rect.x1 - rect.x0) * i as f64 / nx as f64,
                    rect.y0 + (rect.y1 - rect.y0) * j as f64 / ny as f64,
                ]);
            }
        }
        let v = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([v(i, j), v(i + 1, j), v(i + 1, j + 1)]);
                triangles.push([v(i, j), v(i + 1, j + 1), v(i, j + 1)]);
            }
        }
        Self::build(vertices, triangles, Some(Grid { rect, nx, ny }))
    }

    /// Structured mesh whose square-ish cells have side `h`. The rectangle
    /// sides must be integer multiples of `h`.
    pub fn uniform(rect: Rect, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidMesh(format!("mesh size {h} must be positive")));
        }
        let count = |len: f64| -> Result<usize> {
            let n = len / h;
            let r = n.round();
            if r < 1.0 || (n - r).abs() > 1e-9 * r {
                return Err(Error::InvalidMesh(format!("side {len} is not a multiple of h = {h}")));
            }
            Ok(r as usize)
        };
        let nx = count(rect.x1 - rect.x0)?;
        let ny = count(rect.y1 - rect.y0)?;
        Self::rectangle(rect, nx, ny)
    }

    /// Equilateral triangle of unit side subdivided into `n * n` equilateral triangles.
    pub fn equilateral(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("zero subdivisions".into()));
        }
        let s = 3f64.sqrt() / 2.0;
        let mut vertices = Vec::new();
        let mut id = vec![vec![0usize; n + 1]; n + 1];
        for j in 0..=n {
            for i in 0..=(n - j) {
                id[j][i] = vertices.len();
                vertices.push([(i as f64 + 0.5 * j as f64) / n as f64, s * j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::new();
        for j in 0..n {
            for i in 0..(n - j) {
                triangles.push([id[j][i], id[j][i + 1], id[j + 1][i]]);
                if i + 1 < n - j {
                    triangles.push([id[j][i + 1], id[j + 1][i + 1], id[j + 1][i]]);
                }
            }
        }
        Self::from_raw(vertices, triangles)
    }

    /// Read a mesh from text: a header `nv nt`, then `nv` lines `x y`, then
    /// `nt` lines `i j k` with zero-based vertex indices.
    pub fn load_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_text(&text)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut tok = text.split_whitespace();
        let mut next = |what: &str| -> Result<&str> {
            tok.next().ok_or_else(|| Error::InvalidMesh(format!("unexpected end of input reading {what}")))
        };
        let bad = |s: &str| Error::InvalidMesh(format!("cannot parse '{s}'"));
        let nv: usize = { let s = next("header")?; s.parse().map_err(|_| bad(s))? };
        let nt: usize = { let s = next("header")?; s.parse().map_err(|_| bad(s))? };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let x = { let s = next("vertex")?; s.parse::<f64>().map_err(|_| bad(s))? };
            let y = { let s = next("vertex")?; s.parse::<f64>().map_err(|_| bad(s))? };
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let mut t = [0usize; 3];
            for v in &mut t {
                let s = next("triangle")?;
                *v = s.parse().map_err(|_| bad(s))?;
            }
            triangles.push(t);
        }
        Self::from_raw(vertices, triangles)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, k: usize) -> [usize; 3] {
        self.triangles[k]
    }

    pub fn corners(&self, k: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn element_edges(&self, k: usize) -> [usize; 3] {
        self.elem_edges[k]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn interior_edges(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_edges(&self) -> &[usize] {
        &self.boundary
    }

    /// Position of an edge in the interior-edge list.
    pub fn interior_index(&self, e: usize) -> Option<usize> {
        self.interior_index[e]
    }

    pub fn geometry(&self, k: usize) -> &ElementGeometry {
        &self.geometry[k]
    }

    pub fn area(&self, k: usize) -> f64 {
        self.geometry[k].area
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Largest element diameter.
    pub fn h_max(&self) -> f64 {
        self.geometry.iter().map(|g| g.diameter).fold(0.0, f64::max)
    }

    /// Largest ratio of diameter to inradius.
    pub fn shape_regularity(&self) -> f64 {
        self.geometry.iter().map(|g| g.diameter / g.inradius).fold(0.0, f64::max)
    }

    /// Outward unit normal of element `k` on its local edge `i`.
    pub fn outward_normal(&self, k: usize, i: usize) -> [f64; 2] {
        let e = &self.edges[self.elem_edges[k][i]];
        if e.minus == k {
            e.normal
        } else {
            [-e.normal[0], -e.normal[1]]
        }
    }

    /// Affine map of the reference triangle onto element `k`.
    pub fn map_point(&self, k: usize, r: [f64; 2]) -> [f64; 2] {
        let p = self.corners(k);
        [
            p[0][0] + (p[1][0] - p[0][0]) * r[0] + (p[2][0] - p[0][0]) * r[1],
            p[0][1] + (p[1][1] - p[0][1]) * r[0] + (p[2][1] - p[0][1]) * r[1],
        ]
    }

    /// Barycentric coordinates of `x` with respect to element `k`.
    pub fn barycentric(&self, k: usize, x: [f64; 2]) -> [f64; 3] {
        let p = self.corners(k);
        let d = cross(sub(p[1], p[0]), sub(p[2], p[0]));
        let l1 = cross(sub(x, p[0]), sub(p[2], p[0])) / d;
        let l2 = cross(sub(p[1], p[0]), sub(x, p[0])) / d;
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn contains(&self, k: usize, x: [f64; 2], tol: f64) -> bool {
        self.barycentric(k, x).iter().all(|&l| l >= -tol)
    }

    /// Element containing `x`, if any.
    pub fn locate(&self, x: [f64; 2]) -> Option<usize> {
        const TOL: f64 = 1e-10;
        if let Some(g) = self.grid {
            let fx = (x[0] - g.rect.x0) / (g.rect.x1 - g.rect.x0) * g.nx as f64;
            let fy = (x[1] - g.rect.y0) / (g.rect.y1 - g.rect.y0) * g.ny as f64;
            if fx >= -TOL && fy >= -TOL && fx <= g.nx as f64 + TOL && fy <= g.ny as f64 + TOL {
                let i = (fx.floor().max(0.0) as usize).min(g.nx - 1);
                let j = (fy.floor().max(0.0) as usize).min(g.ny - 1);
                let c = 2 * (j * g.nx + i);
                for k in [c, c + 1] {
                    if self.contains(k, x, TOL) {
                        return Some(k);
                    }
                }
            }
        }
        (0..self.num_elements()).find(|&k| self.contains(k, x, TOL))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_counts() {
        let m = Mesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), 0.5).unwrap();
        assert_eq!(m.num_elements(), 8);
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.num_edges(), 16);
        assert_eq!(m.boundary_edges().len(), 8);
        assert_eq!(m.interior_edges().len(), 8);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        for k in 0..m.num_elements() {
            assert!((m.area(k) - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn normals_point_from_minus_to_plus() {
        let m = Mesh::uniform(Rect::new(-1.0, 1.0, -1.0, 1.0), 0.5).unwrap();
        for e in m.edges() {
            assert!((e.normal[0].hypot(e.normal[1]) - 1.0).abs() < 1e-14);
            let bm = m.geometry(e.minus).barycenter;
            let s = e.normal[0] * (e.midpoint[0] - bm[0]) + e.normal[1] * (e.midpoint[1] - bm[1]);
            assert!(s > 0.0);
            if let Some(p) = e.plus {
                assert!(e.minus < p);
                let bp = m.geometry(p).barycenter;
                assert!(e.normal[0] * (bp[0] - bm[0]) + e.normal[1] * (bp[1] - bm[1]) > 0.0);
            }
        }
    }

    #[test]
    fn reversed_orientation_is_normalized() {
        let m = Mesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), 0.25).unwrap();
        let rev: Vec<[usize; 3]> = m.triangles().iter().map(|t| [t[2], t[1], t[0]]).collect();
        let r = Mesh::from_raw(m.vertices().to_vec(), rev).unwrap();
        for k in 0..m.num_elements() {
            assert!((m.area(k) - r.area(k)).abs() < 1e-15);
        }
        for k in 0..m.num_elements() {
            for i in 0..3 {
                let a = m.outward_normal(k, i);
                let e = m.edge(m.element_edges(k)[i]);
                let bk = m.geometry(k).barycenter;
                assert!(a[0] * (e.midpoint[0] - bk[0]) + a[1] * (e.midpoint[1] - bk[1]) > 0.0);
            }
        }
        // same edge set, same normals
        let by_vertices: std::collections::HashMap<[usize; 2], [f64; 2]> =
            r.edges().iter().map(|e| (e.vertices, e.normal)).collect();
        assert_eq!(by_vertices.len(), m.num_edges());
        for a in m.edges() {
            let b = by_vertices[&a.vertices];
            let d = (a.normal[0] - b[0]).abs() + (a.normal[1] - b[1]).abs();
            assert!(d < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Mesh::from_raw(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]]).is_err());
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, -1.0]];
        assert!(Mesh::from_raw(v, vec![[0, 1, 2], [1, 3, 2], [1, 2, 4]]).is_err());
        assert!(Mesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), 0.3).is_err());
    }

    #[test]
    fn equilateral_is_regular() {
        let m = Mesh::equilateral(3).unwrap();
        assert_eq!(m.num_elements(), 9);
        let a = 3f64.sqrt() / 4.0 / 9.0;
        for k in 0..m.num_elements() {
            assert!((m.area(k) - a).abs() < 1e-15);
            let g = m.geometry(k);
            assert!((g.diameter / g.inradius - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn text_round_trip_and_locate() {
        let m = Mesh::parse_text("4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n").unwrap();
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.locate([0.7, 0.2]), Some(0));
        assert_eq!(m.locate([0.2, 0.7]), Some(1));
        assert_eq!(m.locate([1.5, 0.2]), None);
        let g = Mesh::rectangle(Rect::new(0.0, 1.0, 0.0, 1.0), 4, 4).unwrap();
        for k in 0..g.num_elements() {
            assert_eq!(g.locate(g.geometry(k).barycenter), Some(k));
        }
    }
}
