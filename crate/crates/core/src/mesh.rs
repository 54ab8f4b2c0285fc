//! Conforming triangulations of the disk `B_R` with an angularly ordered
//! boundary trace.
//!
//! The generator builds a structured polar mesh: `n` equal angular sectors,
//! `m = n/2 + 1` concentric rings, every annular cell split into two
//! triangles and a fan around the center node. All boundary nodes lie exactly
//! on the circle of radius `R`. The nominal meshsize is `h = pi R / n` (the
//! arc spacing at mid radius), so element counts scale as `(R/h)^2`.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Hard cap on generated nodes; guards against absurd `target_h`.
pub const MAX_NODES: usize = 4_000_000;

/// Relative tolerance for "node lies on the circle" checks.
const BOUNDARY_TOL: f64 = 1e-12;

/// Immutable conforming triangle mesh of a disk.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    radius: f64,
    target_h: f64,
    grid: LocatorGrid,
}

/// Ordered closed loop of boundary nodes on `Gamma_R`.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    /// Boundary node indices, counterclockwise, starting at the minimum angle.
    pub node_indices: Vec<usize>,
    /// Polar angle of each boundary node, in `[0, 2 pi)`.
    pub angles: Vec<f64>,
    /// Consecutive node-index pairs closing the loop.
    pub edges: Vec<[usize; 2]>,
}

impl Mesh {
    /// Validates the full set of mesh invariants and builds the point locator.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        radius: f64,
        target_h: f64,
    ) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "mesh radius must be positive, got {radius}"
            )));
        }
        let rmax = radius * (1.0 + BOUNDARY_TOL);
        for (i, p) in nodes.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::MeshStructure(format!("node {i} is not finite")));
            }
            if p[0].hypot(p[1]) > rmax {
                return Err(Error::MeshStructure(format!(
                    "node {i} lies outside the circle of radius {radius}"
                )));
            }
        }
        for (e, t) in elements.iter().enumerate() {
            if t.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::MeshStructure(format!(
                    "element {e} references a node index out of range"
                )));
            }
            let area = signed_area(&nodes[t[0]], &nodes[t[1]], &nodes[t[2]]);
            if !(area > 0.0) {
                return Err(Error::DegenerateElement {
                    element: e,
                    detail: format!("signed area {area} is not strictly positive"),
                });
            }
        }
        check_conformity(&nodes, &elements)?;
        let grid = LocatorGrid::build(&nodes, &elements);
        Ok(Mesh {
            nodes,
            elements,
            radius,
            target_h,
            grid,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn target_h(&self) -> f64 {
        self.target_h
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let t = self.elements[e];
        signed_area(&self.nodes[t[0]], &self.nodes[t[1]], &self.nodes[t[2]])
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        let t = self.elements[e];
        let (a, b, c) = (self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.element_area(e)).sum()
    }

    /// Containing element and barycentric coordinates of `point`.
    pub fn locate_point(&self, point: [f64; 2]) -> Result<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        for &e in self.grid.candidates(point) {
            let t = self.elements[e];
            let bary = barycentric(
                &self.nodes[t[0]],
                &self.nodes[t[1]],
                &self.nodes[t[2]],
                &point,
            );
            if bary.iter().all(|&w| w >= -TOL) {
                let clamped = [bary[0].max(0.0), bary[1].max(0.0), bary[2].max(0.0)];
                let s = clamped[0] + clamped[1] + clamped[2];
                return Ok((e, [clamped[0] / s, clamped[1] / s, clamped[2] / s]));
            }
        }
        Err(Error::PointNotFound {
            x: point[0],
            y: point[1],
        })
    }

    /// Writes the plain-text format: `mesh v1 <n_nodes> <n_elements> <R>`,
    /// then node lines `x y`, then element lines `i j k`.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "mesh v1 {} {} {}",
            self.num_nodes(),
            self.num_elements(),
            self.radius
        )?;
        for p in &self.nodes {
            writeln!(w, "{} {}", p[0], p[1])?;
        }
        for t in &self.elements {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn write_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_text(&mut f)
    }

    pub fn read_text<R: BufRead>(r: R, path_label: &str) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let bad = |line: usize, detail: String| Error::FileFormat {
            path: path_label.to_string(),
            line: line + 1,
            detail,
        };
        let (ln, header) = lines
            .next()
            .ok_or_else(|| bad(0, "empty file".into()))
            .and_then(|(i, l)| Ok((i, l?)))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "mesh" || parts[1] != "v1" {
            return Err(bad(ln, "expected header `mesh v1 n_nodes n_elements R`".into()));
        }
        let n_nodes: usize = parts[2].parse().map_err(|_| bad(ln, "bad node count".into()))?;
        let n_elems: usize = parts[3]
            .parse()
            .map_err(|_| bad(ln, "bad element count".into()))?;
        let radius: f64 = parts[4].parse().map_err(|_| bad(ln, "bad radius".into()))?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (i, line) = lines
                .next()
                .ok_or_else(|| bad(n_nodes, "unexpected end of node table".into()))?;
            let line = line?;
            let mut it = line.split_whitespace();
            let x: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(i, "bad node x".into()))?;
            let y: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(i, "bad node y".into()))?;
            nodes.push([x, y]);
        }
        let mut elements = Vec::with_capacity(n_elems);
        for _ in 0..n_elems {
            let (i, line) = lines
                .next()
                .ok_or_else(|| bad(0, "unexpected end of element table".into()))?;
            let line = line?;
            let mut it = line.split_whitespace();
            let mut t = [0usize; 3];
            for slot in &mut t {
                *slot = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(i, "bad element index".into()))?;
            }
            elements.push(t);
        }
        // Nominal meshsize is recoverable from the boundary resolution.
        let n_bnd = count_boundary_edges(&nodes, &elements);
        let target_h = if n_bnd > 0 {
            core::f64::consts::PI * radius / n_bnd as f64
        } else {
            radius
        };
        Mesh::new(nodes, elements, radius, target_h)
    }

    pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let label = path.as_ref().display().to_string();
        let f = BufReader::new(std::fs::File::open(path)?);
        Mesh::read_text(f, &label)
    }
}

fn signed_area(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn barycentric(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2], p: &[f64; 2]) -> [f64; 3] {
    let total = signed_area(a, b, c);
    let wa = signed_area(p, b, c) / total;
    let wb = signed_area(a, p, c) / total;
    let wc = signed_area(a, b, p) / total;
    [wa, wb, wc]
}

/// Every interior edge must be shared by exactly two elements with opposite
/// orientation; boundary edges appear exactly once.
fn check_conformity(nodes: &[[f64; 2]], elements: &[[usize; 3]]) -> Result<()> {
    let _ = nodes;
    let mut counts: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for t in elements {
        for k in 0..3 {
            let (i, j) = (t[k], t[(k + 1) % 3]);
            let key = (i.min(j), i.max(j));
            let entry = counts.entry(key).or_insert((0, 0));
            if i < j {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
    }
    for (&(i, j), &(fwd, rev)) in &counts {
        let total = fwd + rev;
        if total > 2 {
            return Err(Error::MeshStructure(format!(
                "edge ({i}, {j}) is referenced by {total} elements"
            )));
        }
        if total == 2 && (fwd != 1 || rev != 1) {
            return Err(Error::MeshStructure(format!(
                "edge ({i}, {j}) has inconsistent orientation"
            )));
        }
    }
    Ok(())
}

fn count_boundary_edges(nodes: &[[f64; 2]], elements: &[[usize; 3]]) -> usize {
    let _ = nodes;
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for t in elements {
        for k in 0..3 {
            let (i, j) = (t[k], t[(k + 1) % 3]);
            *counts.entry((i.min(j), i.max(j))).or_insert(0) += 1;
        }
    }
    counts.values().filter(|&&c| c == 1).count()
}

/// Generates the structured polar triangulation of the disk of radius
/// `radius` with nominal meshsize `target_h`.
pub fn generate_disk_mesh(radius: f64, target_h: f64) -> Result<Mesh> {
    if radius <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if !(target_h > 0.0) || target_h >= radius {
        return Err(Error::InvalidParameter(format!(
            "target_h must satisfy 0 < target_h < radius, got {target_h}"
        )));
    }
    let n_angular = {
        let raw = (core::f64::consts::PI * radius / target_h).round() as usize;
        (raw + raw % 2).max(8) // even, at least 8 sectors
    };
    let m_rings = n_angular / 2 + 1;
    let n_nodes = 1 + m_rings * n_angular;
    if n_nodes > MAX_NODES {
        return Err(Error::ResourceLimit(format!(
            "target_h {target_h} would create {n_nodes} nodes (cap {MAX_NODES})"
        )));
    }
    let mut nodes = Vec::with_capacity(n_nodes);
    nodes.push([0.0, 0.0]);
    for i in 1..=m_rings {
        // boundary ring lands exactly on the circle
        let r = if i == m_rings {
            radius
        } else {
            radius * i as f64 / m_rings as f64
        };
        for j in 0..n_angular {
            let th = 2.0 * core::f64::consts::PI * j as f64 / n_angular as f64;
            nodes.push([r * th.cos(), r * th.sin()]);
        }
    }
    let node_id = |ring: usize, j: usize| 1 + (ring - 1) * n_angular + (j % n_angular);
    let mut elements = Vec::with_capacity(n_angular * (2 * m_rings - 1));
    for j in 0..n_angular {
        elements.push([0, node_id(1, j), node_id(1, j + 1)]);
    }
    for i in 1..m_rings {
        for j in 0..n_angular {
            let a = node_id(i, j);
            let b = node_id(i, j + 1);
            let c = node_id(i + 1, j + 1);
            let d = node_id(i + 1, j);
            elements.push([a, d, c]);
            elements.push([a, c, b]);
        }
    }
    Mesh::new(nodes, elements, radius, target_h)
}

/// Extracts the ordered counterclockwise boundary loop of `mesh`.
pub fn boundary_trace(mesh: &Mesh) -> Result<BoundaryTrace> {
    // Boundary edges appear in exactly one element; with CCW elements the
    // domain sits on the left of the directed edge, so the loop runs CCW.
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for t in mesh.elements() {
        for k in 0..3 {
            let (i, j) = (t[k], t[(k + 1) % 3]);
            *counts.entry((i.min(j), i.max(j))).or_insert(0) += 1;
        }
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    for t in mesh.elements() {
        for k in 0..3 {
            let (i, j) = (t[k], t[(k + 1) % 3]);
            if counts[&(i.min(j), i.max(j))] == 1 {
                if next.insert(i, j).is_some() {
                    return Err(Error::MeshStructure(format!(
                        "boundary node {i} has multiple outgoing boundary edges"
                    )));
                }
            }
        }
    }
    if next.is_empty() {
        return Err(Error::MeshStructure(
            "mesh has no boundary edges".to_string(),
        ));
    }
    // Start at the node of minimum polar angle so the reported angles are
    // strictly increasing around the loop.
    let angle_of = |p: &[f64; 2]| {
        let a = p[1].atan2(p[0]);
        if a < 0.0 {
            a + 2.0 * core::f64::consts::PI
        } else {
            a
        }
    };
    let start = *next
        .keys()
        .min_by(|&&a, &&b| {
            angle_of(&mesh.nodes()[a])
                .partial_cmp(&angle_of(&mesh.nodes()[b]))
                .unwrap()
        })
        .unwrap();
    let mut node_indices = Vec::with_capacity(next.len());
    let mut cur = start;
    loop {
        node_indices.push(cur);
        cur = *next.get(&cur).ok_or_else(|| {
            Error::MeshStructure(format!("boundary loop broken at node {cur}"))
        })?;
        if cur == start {
            break;
        }
        if node_indices.len() > next.len() {
            return Err(Error::MeshStructure(
                "boundary edges do not form a single closed loop".to_string(),
            ));
        }
    }
    if node_indices.len() != next.len() {
        return Err(Error::MeshStructure(
            "boundary has more than one connected loop".to_string(),
        ));
    }
    let tol = BOUNDARY_TOL * mesh.radius() * 1e3 + 1e-9 * mesh.radius();
    for &p in &node_indices {
        let r = mesh.nodes()[p][0].hypot(mesh.nodes()[p][1]);
        if (r - mesh.radius()).abs() > tol {
            return Err(Error::MeshStructure(format!(
                "boundary node {p} at radius {r} is not on the circle of radius {}",
                mesh.radius()
            )));
        }
    }
    let angles: Vec<f64> = node_indices
        .iter()
        .map(|&p| angle_of(&mesh.nodes()[p]))
        .collect();
    let edges: Vec<[usize; 2]> = (0..node_indices.len())
        .map(|i| [node_indices[i], node_indices[(i + 1) % node_indices.len()]])
        .collect();
    Ok(BoundaryTrace {
        node_indices,
        angles,
        edges,
    })
}

/// Uniform background grid over element bounding boxes for O(1) point lookup.
#[derive(Debug, Clone)]
struct LocatorGrid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
    all: Vec<usize>,
}

impl LocatorGrid {
    fn build(nodes: &[[f64; 2]], elements: &[[usize; 3]]) -> Self {
        if elements.is_empty() {
            return LocatorGrid {
                x0: 0.0,
                y0: 0.0,
                cell: 1.0,
                nx: 1,
                ny: 1,
                cells: vec![Vec::new()],
                all: Vec::new(),
            };
        }
        let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
        let (mut xmax, mut ymax) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in nodes {
            xmin = xmin.min(p[0]);
            ymin = ymin.min(p[1]);
            xmax = xmax.max(p[0]);
            ymax = ymax.max(p[1]);
        }
        let target_cells = (elements.len() as f64).sqrt().ceil() as usize;
        let nx = target_cells.max(1);
        let ny = target_cells.max(1);
        let cell = ((xmax - xmin) / nx as f64)
            .max((ymax - ymin) / ny as f64)
            .max(1e-300);
        let mut cells = vec![Vec::new(); nx * ny];
        for (e, t) in elements.iter().enumerate() {
            let xs = [nodes[t[0]][0], nodes[t[1]][0], nodes[t[2]][0]];
            let ys = [nodes[t[0]][1], nodes[t[1]][1], nodes[t[2]][1]];
            let exmin = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let exmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let eymin = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let eymax = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ix0 = (((exmin - xmin) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let ix1 = (((exmax - xmin) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let iy0 = (((eymin - ymin) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            let iy1 = (((eymax - ymin) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    cells[iy * nx + ix].push(e);
                }
            }
        }
        LocatorGrid {
            x0: xmin,
            y0: ymin,
            cell,
            nx,
            ny,
            cells,
            all: (0..elements.len()).collect(),
        }
    }

    fn candidates(&self, p: [f64; 2]) -> &[usize] {
        let ix = ((p[0] - self.x0) / self.cell).floor() as isize;
        let iy = ((p[1] - self.y0) / self.cell).floor() as isize;
        if ix < 0 || iy < 0 || ix >= self.nx as isize || iy >= self.ny as isize {
            return &self.all[..0];
        }
        &self.cells[iy as usize * self.nx + ix as usize]
    }
}
