//! Two-dimensional polytopal meshes.
//!
//! A [`Mesh`] stores vertex coordinates and counter-clockwise cell loops.
//! Faces are derived from the cell loops at construction time; all geometric
//! quantities used by the schemes (measures, centroids, outward normals and the
//! orthogonal distances `d_{K,σ}` from the cell point to each face) are cached.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        min: [0.0, 0.0],
        max: [1.0, 1.0],
    };

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// How each square of a uniform grid is cut into two triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagonalPattern {
    /// Every square is cut along the diagonal from its lower-left to upper-right corner.
    Forward,
    /// Criss-cross: the diagonal direction alternates with the parity of `i + j`,
    /// giving a mesh that is symmetric under reflection about both mid-lines when
    /// `n` is even.
    #[default]
    Alternating,
}

impl std::str::FromStr for DiagonalPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "forward" => Ok(DiagonalPattern::Forward),
            "alternating" | "criss-cross" | "crisscross" => Ok(DiagonalPattern::Alternating),
            other => Err(Error::Config(format!("unknown diagonal pattern `{other}`"))),
        }
    }
}

/// A mesh face (an edge in 2D).
#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: [usize; 2],
    /// First adjacent cell, and the second one for interior faces.
    pub cells: (usize, Option<usize>),
    pub measure: f64,
    pub midpoint: Point,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// Per-cell view of one of its faces.
#[derive(Debug, Clone, Copy)]
pub struct CellFace {
    pub face: usize,
    pub measure: f64,
    pub midpoint: Point,
    /// Outward unit normal `n_{K,σ}`.
    pub normal: Point,
    /// Orthogonal distance between the cell point `x_K` and the face line.
    pub distance: f64,
}

/// Cached geometry of a cell.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub measure: f64,
    pub centroid: Point,
    pub diameter: f64,
    /// Faces in the same order as the cell's vertex loop: face `i` joins local
    /// vertices `i` and `i + 1`.
    pub faces: Vec<CellFace>,
}

/// Half-diamond `D_{K,σ}`: the triangle spanned by `x_K` and the face `σ`.
#[derive(Debug, Clone, Copy)]
pub struct HalfDiamond {
    pub cell: usize,
    pub measure: f64,
}

/// Diamond `D_σ` around a face: the union of its one or two half-diamonds.
#[derive(Debug, Clone)]
pub struct Diamond {
    pub face: usize,
    pub measure: f64,
    pub halves: Vec<HalfDiamond>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<Vec<usize>>,
    cell_points: Vec<Point>,
    faces: Vec<Face>,
    geometry: Vec<CellGeometry>,
    area: f64,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn dist_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    norm(sub(p, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

fn next_block<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    name: &str,
) -> Result<Option<(usize, usize)>> {
    let Some((line, l)) = lines.next() else {
        return Ok(None);
    };
    let mut it = l.split_whitespace();
    if it.next() != Some(name) {
        return Err(Error::MeshParse {
            line,
            msg: format!("expected `{name} <count>`"),
        });
    }
    let count = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MeshParse {
            line,
            msg: "missing or invalid count".into(),
        })?;
    Ok(Some((line, count)))
}

impl Mesh {
    /// Builds a mesh from vertices and counter-clockwise cell loops, with cell
    /// points at the centroids.
    pub fn new(vertices: Vec<Point>, cells: Vec<Vec<usize>>) -> Result<Self> {
        Self::with_cell_points(vertices, cells, None)
    }

    /// Builds a mesh with explicit cell points `x_K` (one per cell). Each cell
    /// must be strictly star-shaped with respect to its point.
    pub fn with_cell_points(
        vertices: Vec<Point>,
        cells: Vec<Vec<usize>>,
        cell_points: Option<Vec<Point>>,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidMesh("mesh has no cells".into()));
        }
        let mut centroids = Vec::with_capacity(cells.len());
        let mut measures = Vec::with_capacity(cells.len());
        for (k, cell) in cells.iter().enumerate() {
            if cell.len() < 3 {
                return Err(Error::InvalidMesh(format!(
                    "cell {k} has {} vertices",
                    cell.len()
                )));
            }
            if let Some(&v) = cell.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "cell {k} references vertex {v} out of {}",
                    vertices.len()
                )));
            }
            // Shoelace formula relative to the first vertex.
            let o = vertices[cell[0]];
            let mut area2 = 0.0;
            let mut c = [0.0, 0.0];
            for i in 1..cell.len() - 1 {
                let a = sub(vertices[cell[i]], o);
                let b = sub(vertices[cell[i + 1]], o);
                let cross = a[0] * b[1] - a[1] * b[0];
                area2 += cross;
                c[0] += cross * (a[0] + b[0]) / 3.0;
                c[1] += cross * (a[1] + b[1]) / 3.0;
            }
            if area2 <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "cell {k} has non-positive signed area {} (degenerate or clockwise)",
                    area2 / 2.0
                )));
            }
            centroids.push([o[0] + c[0] / area2, o[1] + c[1] / area2]);
            measures.push(area2 / 2.0);
        }

        let cell_points = match cell_points {
            Some(p) if p.len() != cells.len() => {
                return Err(Error::InvalidMesh(format!(
                    "{} cell points given for {} cells",
                    p.len(),
                    cells.len()
                )))
            }
            Some(p) => p,
            None => centroids.clone(),
        };

        let mut faces: Vec<Face> = Vec::new();
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut geometry = Vec::with_capacity(cells.len());
        for (k, cell) in cells.iter().enumerate() {
            let xk = cell_points[k];
            let mut cell_faces = Vec::with_capacity(cell.len());
            let mut diameter: f64 = 0.0;
            for (i, &vi) in cell.iter().enumerate() {
                for &vj in &cell[i + 1..] {
                    diameter = diameter.max(norm(sub(vertices[vi], vertices[vj])));
                }
                let vj = cell[(i + 1) % cell.len()];
                let key = (vi.min(vj), vi.max(vj));
                let (a, b) = (vertices[vi], vertices[vj]);
                let t = sub(b, a);
                let measure = norm(t);
                if measure == 0.0 {
                    return Err(Error::InvalidMesh(format!(
                        "cell {k} has a zero-length face"
                    )));
                }
                let midpoint = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                let normal = [t[1] / measure, -t[0] / measure];
                let distance = dot(sub(midpoint, xk), normal);
                if distance <= 0.0 {
                    return Err(Error::InvalidMesh(format!(
                        "cell {k} is not strictly star-shaped with respect to its cell point"
                    )));
                }
                let face = match lookup.get(&key) {
                    Some(&f) => {
                        let entry = &mut faces[f];
                        if entry.cells.1.is_some() || entry.cells.0 == k {
                            return Err(Error::InvalidMesh(format!(
                                "face ({}, {}) shared by more than two cells",
                                key.0, key.1
                            )));
                        }
                        entry.cells.1 = Some(k);
                        f
                    }
                    None => {
                        lookup.insert(key, faces.len());
                        faces.push(Face {
                            vertices: [vi, vj],
                            cells: (k, None),
                            measure,
                            midpoint,
                        });
                        faces.len() - 1
                    }
                };
                cell_faces.push(CellFace {
                    face,
                    measure,
                    midpoint,
                    normal,
                    distance,
                });
            }
            geometry.push(CellGeometry {
                measure: measures[k],
                centroid: centroids[k],
                diameter,
                faces: cell_faces,
            });
        }
        let area = measures.iter().sum();
        Ok(Mesh {
            vertices,
            cells,
            cell_points,
            faces,
            geometry,
            area,
        })
    }

    /// Uniform triangulation of `domain` with `n` squares per side, each cut into
    /// two triangles: `2n²` cells, `(n+1)²` vertices.
    pub fn uniform_triangular(n: usize, domain: Rect, pattern: DiagonalPattern) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("need at least one subdivision".into()));
        }
        let (dx, dy) = (
            (domain.max[0] - domain.min[0]) / n as f64,
            (domain.max[1] - domain.min[1]) / n as f64,
        );
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let x = if i == n { domain.max[0] } else { domain.min[0] + i as f64 * dx };
                let y = if j == n { domain.max[1] } else { domain.min[1] + j as f64 * dy };
                vertices.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                let forward = match pattern {
                    DiagonalPattern::Forward => true,
                    DiagonalPattern::Alternating => (i + j) % 2 == 0,
                };
                if forward {
                    cells.push(vec![v00, v10, v11]);
                    cells.push(vec![v00, v11, v01]);
                } else {
                    cells.push(vec![v00, v10, v01]);
                    cells.push(vec![v10, v11, v01]);
                }
            }
        }
        Mesh::new(vertices, cells)
    }

    /// Uniform mesh of `n × n` squares (one quadrilateral cell each).
    pub fn uniform_quadrilateral(n: usize, domain: Rect) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("need at least one subdivision".into()));
        }
        let (dx, dy) = (
            (domain.max[0] - domain.min[0]) / n as f64,
            (domain.max[1] - domain.min[1]) / n as f64,
        );
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([domain.min[0] + i as f64 * dx, domain.min[1] + j as f64 * dy]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let cells = (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)])
            .collect();
        Mesh::new(vertices, cells)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn cell_points(&self) -> &[Point] {
        &self.cell_points
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Cached geometry of cell `k`. Panics on an invalid index.
    pub fn geometry(&self, k: usize) -> &CellGeometry {
        &self.geometry[k]
    }

    pub fn cell_measure(&self, k: usize) -> f64 {
        self.geometry[k].measure
    }

    pub fn centroid(&self, k: usize) -> Point {
        self.geometry[k].centroid
    }

    /// `|Ω|`, the sum of the cell measures.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Mesh size: the largest cell diameter.
    pub fn h(&self) -> f64 {
        self.geometry.iter().map(|g| g.diameter).fold(0.0, f64::max)
    }

    pub fn is_triangular(&self) -> bool {
        self.cells.iter().all(|c| c.len() == 3)
    }

    /// Regularity factor `η = max_K diam(K) / ρ_K`, with `ρ_K` the distance from
    /// the centroid to the cell boundary.
    pub fn regularity_eta(&self) -> f64 {
        self.cells
            .iter()
            .zip(&self.geometry)
            .map(|(cell, g)| {
                let rho = (0..cell.len())
                    .map(|i| {
                        dist_to_segment(
                            g.centroid,
                            self.vertices[cell[i]],
                            self.vertices[cell[(i + 1) % cell.len()]],
                        )
                    })
                    .fold(f64::INFINITY, f64::min);
                g.diameter / rho
            })
            .fold(0.0, f64::max)
    }

    /// Diamonds `D_σ`, one per face, in face order.
    pub fn diamonds(&self) -> Vec<Diamond> {
        let mut diamonds: Vec<Diamond> = (0..self.faces.len())
            .map(|face| Diamond {
                face,
                measure: 0.0,
                halves: Vec::with_capacity(2),
            })
            .collect();
        for (k, g) in self.geometry.iter().enumerate() {
            for cf in &g.faces {
                let measure = cf.measure * cf.distance / 2.0;
                let d = &mut diamonds[cf.face];
                d.measure += measure;
                d.halves.push(HalfDiamond { cell: k, measure });
            }
        }
        diamonds
    }

    /// Parses the ASCII mesh format:
    ///
    /// ```text
    /// gdm-mesh 2d
    /// vertices N
    /// x y          (N lines)
    /// cells M
    /// k i0 ... ik-1   (M lines, counter-clockwise)
    /// cellpoints M    (optional block)
    /// x y          (M lines)
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, msg: &str| Error::MeshParse {
            line,
            msg: msg.to_string(),
        };
        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        if header.split_whitespace().collect::<Vec<_>>() != ["gdm-mesh", "2d"] {
            return Err(err(ln, "expected header `gdm-mesh 2d`"));
        }
        let floats = |ln: usize, l: &str| -> Result<Point> {
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(ln, "invalid coordinate"))?;
            match v.as_slice() {
                &[x, y] if x.is_finite() && y.is_finite() => Ok([x, y]),
                _ => Err(err(ln, "expected two finite coordinates")),
            }
        };

        let (ln, nv) = next_block(&mut lines, "vertices")?.ok_or_else(|| err(ln, "missing vertices block"))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| err(ln, "truncated vertices block"))?;
            vertices.push(floats(ln, l)?);
        }
        let (ln, nc) = next_block(&mut lines, "cells")?.ok_or_else(|| err(ln, "missing cells block"))?;
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (ln, l) = lines.next().ok_or_else(|| err(ln, "truncated cells block"))?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(ln, "invalid vertex index"))?;
            match v.split_first() {
                Some((&k, rest)) if k == rest.len() => cells.push(rest.to_vec()),
                _ => return Err(err(ln, "cell line must be `k i0 ... i(k-1)`")),
            }
        }
        let cell_points = match next_block(&mut lines, "cellpoints")? {
            None => None,
            Some((ln, m)) => {
                let mut pts = Vec::with_capacity(m);
                for _ in 0..m {
                    let (ln, l) = lines.next().ok_or_else(|| err(ln, "truncated cellpoints block"))?;
                    pts.push(floats(ln, l)?);
                }
                Some(pts)
            }
        };
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln, "unexpected trailing content"));
        }
        Mesh::with_cell_points(vertices, cells, cell_points)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serialises to the ASCII format; cell points are written only when they
    /// differ from the centroids.
    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "gdm-mesh 2d\nvertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:e} {:e}", v[0], v[1]);
        }
        let _ = writeln!(s, "cells {}", self.cells.len());
        for c in &self.cells {
            let _ = write!(s, "{}", c.len());
            for v in c {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        if self
            .cell_points
            .iter()
            .zip(&self.geometry)
            .any(|(p, g)| *p != g.centroid)
        {
            let _ = writeln!(s, "cellpoints {}", self.cell_points.len());
            for p in &self.cell_points {
                let _ = writeln!(s, "{:e} {:e}", p[0], p[1]);
            }
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }
}
