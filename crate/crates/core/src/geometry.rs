//! Polygonal boundary meshes of open screens and polygonal arcs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for matching coincident nodes.
const NODE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Oriented straight element from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "non-finite element endpoint ({a:?}, {b:?})"
            )));
        }
        if !(a.dist(b) > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "zero-length element at ({}, {})",
                a.x, a.y
            )));
        }
        Ok(Self { a, b })
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn midpoint(&self) -> Point2 {
        self.a.lerp(self.b, 0.5)
    }

    /// Point at local parameter `t ∈ [0, 1]`.
    pub fn at(&self, t: f64) -> Point2 {
        self.a.lerp(self.b, t)
    }

    /// Distance from `p` to the closed segment, and the foot parameter.
    pub fn distance_to(&self, p: Point2) -> (f64, f64) {
        let dx = self.b.x - self.a.x;
        let dy = self.b.y - self.a.y;
        let len2 = dx * dx + dy * dy;
        let t = (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0);
        (p.dist(self.at(t)), t)
    }
}

/// Geometry presets and user-defined polylines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeometrySpec {
    /// `(-1, 1) × {0}`.
    FlatScreen,
    /// `(0, 1) × {0}` and `{0} × (0, 1)`.
    Wedge,
    /// A vertical screen with two arms forming a trap.
    Trapping,
    /// One polyline per component.
    CustomPolyline(Vec<Vec<Point2>>),
}

impl GeometrySpec {
    /// Polylines of all components.
    pub fn polylines(&self) -> Result<Vec<Vec<Point2>>> {
        let half_sqrt3 = 3f64.sqrt() / 2.0;
        let lines = match self {
            GeometrySpec::FlatScreen => vec![vec![Point2::new(-1.0, 0.0), Point2::new(1.0, 0.0)]],
            GeometrySpec::Wedge => vec![
                vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)],
                vec![Point2::new(0.0, 0.0), Point2::new(0.0, 1.0)],
            ],
            GeometrySpec::Trapping => vec![
                vec![Point2::new(0.0, -1.0), Point2::new(0.0, 1.0)],
                vec![Point2::new(0.0, 1.0), Point2::new(half_sqrt3, 0.5)],
                vec![Point2::new(0.0, -1.0), Point2::new(half_sqrt3, -0.5)],
            ],
            GeometrySpec::CustomPolyline(lines) => {
                if lines.is_empty() {
                    return Err(Error::InvalidGeometry("no components given".into()));
                }
                for (k, line) in lines.iter().enumerate() {
                    if line.len() < 2 {
                        return Err(Error::InvalidGeometry(format!(
                            "component {k} has {} points, at least 2 required",
                            line.len()
                        )));
                    }
                    for (i, w) in line.windows(2).enumerate() {
                        Segment::new(w[0], w[1]).map_err(|_| {
                            Error::InvalidGeometry(format!(
                                "component {k}: points {i} and {} coincide or are not finite",
                                i + 1
                            ))
                        })?;
                    }
                }
                lines.clone()
            }
        };
        Ok(lines)
    }

    pub fn component_count(&self) -> usize {
        match self {
            GeometrySpec::FlatScreen => 1,
            GeometrySpec::Wedge => 2,
            GeometrySpec::Trapping => 3,
            GeometrySpec::CustomPolyline(lines) => lines.len(),
        }
    }
}

/// Ordered elements grouped into connected components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    elements: Vec<Segment>,
    component_breaks: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh from validated elements; `component_breaks` lists the
    /// index of the first element of every component, starting with 0.
    pub fn from_segments(elements: Vec<Segment>, component_breaks: Vec<usize>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidGeometry("mesh has no elements".into()));
        }
        if component_breaks.first() != Some(&0) {
            return Err(Error::InvalidGeometry(
                "first component must start at element 0".into(),
            ));
        }
        if component_breaks.windows(2).any(|w| w[0] >= w[1])
            || *component_breaks.last().unwrap() >= elements.len()
        {
            return Err(Error::InvalidGeometry(
                "component breaks must be strictly increasing and in range".into(),
            ));
        }
        for e in &elements {
            Segment::new(e.a, e.b)?;
        }
        let mesh = Self {
            elements,
            component_breaks,
        };
        for c in 0..mesh.component_count() {
            let range = mesh.component_range(c);
            for i in range.start..range.end - 1 {
                let (e, f) = (mesh.elements[i], mesh.elements[i + 1]);
                let tol = NODE_TOL * e.length().max(f.length());
                if e.b.dist(f.a) > tol {
                    return Err(Error::InvalidGeometry(format!(
                        "elements {i} and {} of component {c} do not share an endpoint",
                        i + 1
                    )));
                }
            }
        }
        Ok(mesh)
    }

    /// Mesh whose components have the given node lists.
    pub fn from_nodes(components: &[Vec<Point2>]) -> Result<Self> {
        let mut elements = Vec::new();
        let mut breaks = Vec::new();
        for nodes in components {
            if nodes.len() < 2 {
                return Err(Error::InvalidGeometry(
                    "component needs at least two nodes".into(),
                ));
            }
            breaks.push(elements.len());
            for w in nodes.windows(2) {
                elements.push(Segment::new(w[0], w[1])?);
            }
        }
        Self::from_segments(elements, breaks)
    }

    pub fn elements(&self) -> &[Segment] {
        &self.elements
    }

    pub fn component_breaks(&self) -> &[usize] {
        &self.component_breaks
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, i: usize) -> &Segment {
        &self.elements[i]
    }

    /// Element size `h_E`.
    pub fn h(&self, i: usize) -> f64 {
        self.elements[i].length()
    }

    pub fn component_count(&self) -> usize {
        self.component_breaks.len()
    }

    pub fn component_range(&self, c: usize) -> Range<usize> {
        let start = self.component_breaks[c];
        let end = self
            .component_breaks
            .get(c + 1)
            .copied()
            .unwrap_or(self.elements.len());
        start..end
    }

    pub fn component_of(&self, element: usize) -> usize {
        self.component_breaks.partition_point(|&b| b <= element) - 1
    }

    /// Nodes of component `c`, endpoints included.
    pub fn component_nodes(&self, c: usize) -> Vec<Point2> {
        let range = self.component_range(c);
        let mut nodes: Vec<Point2> = self.elements[range.clone()].iter().map(|e| e.a).collect();
        nodes.push(self.elements[range.end - 1].b);
        nodes
    }

    /// Total number of P1 nodes, counted per component.
    pub fn vertex_count(&self) -> usize {
        self.elements.len() + self.component_count()
    }

    /// Index of the first P1 node of the component containing `element`, and
    /// of the element's left node.
    pub fn left_vertex(&self, element: usize) -> usize {
        element + self.component_of(element)
    }

    /// Arclength of the start of each element within its component, plus
    /// the component's total length.
    pub fn arclengths(&self, c: usize) -> Vec<f64> {
        let mut s = vec![0.0];
        for e in &self.elements[self.component_range(c)] {
            s.push(s.last().unwrap() + e.length());
        }
        s
    }

    pub fn min_h(&self) -> f64 {
        self.elements
            .iter()
            .map(Segment::length)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_h(&self) -> f64 {
        self.elements.iter().map(Segment::length).fold(0.0, f64::max)
    }

    /// Distance from `p` to the mesh.
    pub fn distance_to(&self, p: Point2) -> f64 {
        self.elements
            .iter()
            .map(|e| e.distance_to(p).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Plain-text listing: `x y` per vertex, then `i j k` per element with
    /// zero-based vertex indices and the component index.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# vertices {}", self.vertex_count());
        for c in 0..self.component_count() {
            for p in self.component_nodes(c) {
                let _ = writeln!(out, "{:.17e} {:.17e}", p.x, p.y);
            }
        }
        let _ = writeln!(out, "# elements {}", self.len());
        for i in 0..self.len() {
            let v = self.left_vertex(i);
            let _ = writeln!(out, "{} {} {}", v, v + 1, self.component_of(i));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut elements = Vec::new();
        let mut breaks = Vec::new();
        let mut last_component = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::Parse {
                line: lineno + 1,
                reason,
            };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.len() {
                2 => {
                    if !elements.is_empty() {
                        return Err(parse_err("vertex after element lines".into()));
                    }
                    let x: f64 = tokens[0].parse().map_err(|e| parse_err(format!("{e}")))?;
                    let y: f64 = tokens[1].parse().map_err(|e| parse_err(format!("{e}")))?;
                    vertices.push(Point2::new(x, y));
                }
                3 => {
                    let idx: Vec<usize> = tokens
                        .iter()
                        .map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| parse_err(format!("{e}")))?;
                    let (i, j, k) = (idx[0], idx[1], idx[2]);
                    let (a, b) = match (vertices.get(i), vertices.get(j)) {
                        (Some(&a), Some(&b)) => (a, b),
                        _ => return Err(parse_err(format!("vertex index out of range in {line:?}"))),
                    };
                    if last_component != Some(k) {
                        if last_component.is_some_and(|l| k < l) {
                            return Err(parse_err("components must appear in order".into()));
                        }
                        breaks.push(elements.len());
                        last_component = Some(k);
                    }
                    elements.push(Segment::new(a, b).map_err(|e| parse_err(e.to_string()))?);
                }
                n => return Err(parse_err(format!("expected 2 or 3 fields, found {n}"))),
            }
        }
        Self::from_segments(elements, breaks)
    }
}

/// Places nodes along a polyline at the given arclength fractions, inserting
/// the polyline's interior corners as additional nodes.
fn place_on_polyline(line: &[Point2], fractions: &[f64]) -> Vec<Point2> {
    let mut cumulative = vec![0.0];
    for w in line.windows(2) {
        cumulative.push(cumulative.last().unwrap() + w[0].dist(w[1]));
    }
    let total = *cumulative.last().unwrap();
    let mut params: Vec<f64> = fractions.iter().map(|f| f * total).collect();
    params.extend_from_slice(&cumulative[1..cumulative.len() - 1]);
    params.sort_by(f64::total_cmp);
    params.dedup_by(|a, b| (*a - *b).abs() <= NODE_TOL * total);
    params
        .iter()
        .map(|&s| {
            let k = cumulative
                .partition_point(|&c| c <= s)
                .clamp(1, line.len() - 1);
            let t = (s - cumulative[k - 1]) / (cumulative[k] - cumulative[k - 1]);
            line[k - 1].lerp(line[k], t.clamp(0.0, 1.0))
        })
        .collect()
}

/// Uniform mesh with `n_per_component` elements on every component (corners
/// of custom polylines add nodes).
pub fn build_mesh(spec: &GeometrySpec, n_per_component: usize) -> Result<Mesh> {
    if n_per_component == 0 {
        return Err(Error::arg("n_per_component", "must be at least 1"));
    }
    let fractions: Vec<f64> = (0..=n_per_component)
        .map(|j| j as f64 / n_per_component as f64)
        .collect();
    let nodes: Vec<Vec<Point2>> = spec
        .polylines()?
        .iter()
        .map(|line| place_on_polyline(line, &fractions))
        .collect();
    Mesh::from_nodes(&nodes)
}

/// Mesh graded toward both endpoints of every component with exponent `beta`.
pub fn graded_mesh(spec: &GeometrySpec, n_per_half: usize, beta: f64) -> Result<Mesh> {
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(Error::arg("beta", format!("must be at least 1, got {beta}")));
    }
    if n_per_half == 0 {
        return Err(Error::arg("n_per_half", "must be at least 1"));
    }
    let n = n_per_half as f64;
    let mut fractions: Vec<f64> = (0..=n_per_half)
        .map(|j| 0.5 * (j as f64 / n).powf(beta))
        .collect();
    fractions.extend((0..n_per_half).rev().map(|j| 1.0 - 0.5 * (j as f64 / n).powf(beta)));
    let nodes: Vec<Vec<Point2>> = spec
        .polylines()?
        .iter()
        .map(|line| place_on_polyline(line, &fractions))
        .collect();
    Mesh::from_nodes(&nodes)
}

/// Bisects every marked element.
pub fn refine(mesh: &Mesh, marked: &BTreeSet<usize>) -> Result<Mesh> {
    if let Some(&bad) = marked.iter().find(|&&i| i >= mesh.len()) {
        return Err(Error::arg(
            "marked",
            format!("element index {bad} out of range for {} elements", mesh.len()),
        ));
    }
    let mut elements = Vec::with_capacity(mesh.len() + marked.len());
    let mut breaks = Vec::with_capacity(mesh.component_count());
    for c in 0..mesh.component_count() {
        breaks.push(elements.len());
        for i in mesh.component_range(c) {
            let e = mesh.elements[i];
            if marked.contains(&i) {
                let m = e.midpoint();
                elements.push(Segment { a: e.a, b: m });
                elements.push(Segment { a: m, b: e.b });
            } else {
                elements.push(e);
            }
        }
    }
    Mesh::from_segments(elements, breaks)
}

/// Uniform bisection of every element.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let all: BTreeSet<usize> = (0..mesh.len()).collect();
    refine(mesh, &all).expect("indices are in range")
}

/// Common refinement of two meshes of the same geometry.
pub struct CommonRefinement {
    pub mesh: Mesh,
    /// Parent element in the first mesh for every common element.
    pub parent_a: Vec<usize>,
    /// Parent element in the second mesh for every common element.
    pub parent_b: Vec<usize>,
}

pub fn common_refinement(a: &Mesh, b: &Mesh) -> Result<CommonRefinement> {
    if a.component_count() != b.component_count() {
        return Err(Error::MeshMismatch(format!(
            "{} vs {} components",
            a.component_count(),
            b.component_count()
        )));
    }
    let mut nodes = Vec::new();
    let mut parent_a = Vec::new();
    let mut parent_b = Vec::new();
    for c in 0..a.component_count() {
        let (na, nb) = (a.component_nodes(c), b.component_nodes(c));
        let (sa, sb) = (a.arclengths(c), b.arclengths(c));
        let (la, lb) = (*sa.last().unwrap(), *sb.last().unwrap());
        let tol = 1e-10 * la.max(lb);
        if (la - lb).abs() > tol
            || na[0].dist(nb[0]) > tol
            || na.last().unwrap().dist(*nb.last().unwrap()) > tol
        {
            return Err(Error::MeshMismatch(format!(
                "component {c} differs between the meshes"
            )));
        }
        let mut merged: Vec<(f64, Point2)> = sa.iter().copied().zip(na).collect();
        for (s, p) in sb.iter().copied().zip(nb) {
            merged.push((s, p));
        }
        merged.sort_by(|x, y| x.0.total_cmp(&y.0));
        merged.dedup_by(|x, y| (x.0 - y.0).abs() <= tol);
        let ra = a.component_range(c);
        let rb = b.component_range(c);
        for w in merged.windows(2) {
            let mid = 0.5 * (w[0].0 + w[1].0);
            let ia = sa.partition_point(|&s| s <= mid).clamp(1, sa.len() - 1) - 1;
            let ib = sb.partition_point(|&s| s <= mid).clamp(1, sb.len() - 1) - 1;
            parent_a.push(ra.start + ia);
            parent_b.push(rb.start + ib);
        }
        nodes.push(merged.into_iter().map(|(_, p)| p).collect::<Vec<_>>());
    }
    Ok(CommonRefinement {
        mesh: Mesh::from_nodes(&nodes)?,
        parent_a,
        parent_b,
    })
}
