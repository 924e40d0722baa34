//! Conforming P1 triangulations of thin domains.
//!
//! Tubes get structured grids (`columns × layers` cells, each split along
//! its rising diagonal). The junction is filled by homothetic rings around
//! `O` stitched pairwise, with a fan at the centre. Mouth nodes are shared
//! between the junction and the tubes, so the mesh is conforming.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::thin_domain::ThinDomainSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Junction,
    Tube(usize),
}

impl Region {
    fn code(self) -> i64 {
        match self {
            Region::Junction => -1,
            Region::Tube(j) => j as i64,
        }
    }

    fn from_code(c: i64) -> Result<Self> {
        match c {
            -1 => Ok(Region::Junction),
            j if j >= 0 => Ok(Region::Tube(j as usize)),
            _ => Err(Error::Mesh(format!("invalid region tag {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Lateral boundary `Σ_ε`.
    Wall,
    /// Far end face `Γ_{j,ε}` of tube `j`.
    EndFace(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Node layout of a structured tube grid: node `(c, r)` sits at arclength
/// `s[c]` and transversal offset `-ε + 2ε r / layers`. Column 0 is the mouth.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeGrid {
    pub edge: usize,
    pub columns: usize,
    pub layers: usize,
    pub s: Vec<f64>,
    nodes: Vec<usize>,
}

impl TubeGrid {
    pub fn node(&self, c: usize, r: usize) -> usize {
        self.nodes[c * (self.layers + 1) + r]
    }

    pub fn column(&self, c: usize) -> &[usize] {
        &self.nodes[c * (self.layers + 1)..(c + 1) * (self.layers + 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub boundary: Vec<BoundaryEdge>,
    pub h: f64,
    pub tubes: Vec<TubeGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    pub min_angle_deg: f64,
    /// Largest circumradius over twice the inradius (1 for equilateral).
    pub max_aspect: f64,
    pub n_nodes: usize,
    pub n_tris: usize,
}

/// `max(2, round(2ε / h))`, i.e. roughly square tube cells.
pub fn default_layers(eps: f64, h: f64) -> usize {
    ((2.0 * eps / h).round() as usize).max(2)
}

/// Meshes `Ω_ε` with target size `h` and `layers` elements across each tube.
pub fn triangulate(spec: &ThinDomainSpec, h: f64, layers: Option<usize>) -> Result<Mesh2D> {
    let eps = spec.eps();
    if !(h > 0.0) || h > eps * (1.0 + 1e-12) {
        return Err(Error::Mesh(format!("mesh size h = {h} must satisfy 0 < h <= eps = {eps}")));
    }
    let layers = layers.unwrap_or_else(|| default_layers(eps, h));
    if layers < 2 {
        return Err(Error::Mesh(format!("need at least 2 transversal layers, got {layers}")));
    }
    let graph = spec.graph();
    let el = eps * spec.l();
    let mut nodes: Vec<Point> = Vec::new();
    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    let mut boundary = Vec::new();

    // Mouth nodes first: they anchor both the junction ring and tube column 0.
    let mouths: Vec<Vec<usize>> = (0..graph.n_edges())
        .map(|j| {
            (0..=layers)
                .map(|r| {
                    nodes.push(graph.from_local(j, el, -eps + 2.0 * eps * r as f64 / layers as f64));
                    nodes.len() - 1
                })
                .collect()
        })
        .collect();

    // Outer ring of the junction: walk the polygon, reusing mouth nodes.
    let poly = spec.junction_polygon();
    let m = poly.len();
    let mouth_at = |i: usize| -> Option<usize> {
        let tol = 1e-12 * spec.eps0().max(1.0);
        (0..graph.n_edges()).find(|&j| {
            let (lo, hi) = spec.mouth_corners(j, eps);
            (poly[i] - lo).norm() <= tol && (poly[(i + 1) % m] - hi).norm() <= tol
        })
    };
    let edge_mouth: Vec<Option<usize>> = (0..m).map(mouth_at).collect();
    // Corner node per polygon vertex.
    let mut corner = vec![usize::MAX; m];
    for i in 0..m {
        if let Some(j) = edge_mouth[i] {
            corner[i] = mouths[j][0];
            corner[(i + 1) % m] = mouths[j][layers];
        }
    }
    for i in 0..m {
        if corner[i] == usize::MAX {
            nodes.push(poly[i]);
            corner[i] = nodes.len() - 1;
        }
    }
    let corner_pt: Vec<Point> = corner.iter().map(|&c| nodes[c]).collect();
    let subdivisions: Vec<usize> = (0..m)
        .map(|i| match edge_mouth[i] {
            Some(_) => layers,
            None => ((corner_pt[(i + 1) % m] - corner_pt[i]).norm() / h).ceil().max(1.0) as usize,
        })
        .collect();
    // Outer ring as (node, parameter) with parameter i + q / n_i.
    let mut outer: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        let n_i = subdivisions[i];
        outer.push((corner[i], i as f64));
        for q in 1..n_i {
            let id = match edge_mouth[i] {
                Some(j) => mouths[j][q],
                None => {
                    let t = q as f64 / n_i as f64;
                    let a = corner_pt[i];
                    let b = corner_pt[(i + 1) % m];
                    nodes.push(a + (b - a) * t);
                    nodes.len() - 1
                }
            };
            outer.push((id, i as f64 + q as f64 / n_i as f64));
        }
        if edge_mouth[i].is_none() {
            for q in 0..n_i {
                let a = if q == 0 { corner[i] } else { outer[outer.len() - n_i + q].0 };
                let b = if q + 1 == n_i { corner[(i + 1) % m] } else { outer[outer.len() - n_i + q + 1].0 };
                boundary.push(BoundaryEdge { nodes: [a, b], tag: BoundaryTag::Wall });
            }
        }
    }

    let star_shaped = (0..m).all(|i| {
        let (a, b) = (corner_pt[i], corner_pt[(i + 1) % m]);
        geometry::cross(&a.coords, &b.coords) > 1e-12 * a.coords.norm() * b.coords.norm()
    });
    if star_shaped {
        let r_max = corner_pt.iter().map(|p| p.coords.norm()).fold(0.0, f64::max);
        let rings = (r_max / h).ceil().max(1.0) as usize;
        let mut prev: Vec<(usize, f64)> = outer.clone();
        for k in (1..rings).rev() {
            let scale = k as f64 / rings as f64;
            let mut ring = Vec::new();
            for i in 0..m {
                let n_i = ((subdivisions[i] as f64 * scale).round() as usize).max(1);
                let (a, b) = (corner_pt[i], corner_pt[(i + 1) % m]);
                for q in 0..n_i {
                    let t = q as f64 / n_i as f64;
                    nodes.push(Point::from((a + (b - a) * t).coords * scale));
                    ring.push((nodes.len() - 1, i as f64 + t));
                }
            }
            stitch(&ring, &prev, m as f64, &mut triangles);
            prev = ring;
        }
        nodes.push(Point::origin());
        let centre = nodes.len() - 1;
        for q in 0..prev.len() {
            triangles.push([centre, prev[q].0, prev[(q + 1) % prev.len()].0]);
        }
    } else {
        let ring: Vec<Point> = outer.iter().map(|&(id, _)| nodes[id]).collect();
        let tris = geometry::ear_clip(&ring)
            .ok_or_else(|| Error::Mesh("junction polygon could not be triangulated".into()))?;
        for t in tris {
            triangles.push([outer[t[0]].0, outer[t[1]].0, outer[t[2]].0]);
        }
    }
    regions.resize(triangles.len(), Region::Junction);

    // Tubes.
    let mut tubes = Vec::new();
    for j in 0..graph.n_edges() {
        let lj = graph.length(j);
        let columns = ((lj - el) / h - 1e-9).ceil().max(1.0) as usize;
        let s: Vec<f64> = (0..=columns)
            .map(|c| if c == columns { lj } else { el + (lj - el) * c as f64 / columns as f64 })
            .collect();
        let mut ids = Vec::with_capacity((columns + 1) * (layers + 1));
        ids.extend_from_slice(&mouths[j]);
        for &sc in &s[1..] {
            for r in 0..=layers {
                nodes.push(graph.from_local(j, sc, -eps + 2.0 * eps * r as f64 / layers as f64));
                ids.push(nodes.len() - 1);
            }
        }
        let grid = TubeGrid { edge: j, columns, layers, s, nodes: ids };
        for c in 0..columns {
            for r in 0..layers {
                let (a, b) = (grid.node(c, r), grid.node(c + 1, r));
                let (d, e) = (grid.node(c, r + 1), grid.node(c + 1, r + 1));
                triangles.push([a, b, e]);
                triangles.push([a, e, d]);
                regions.push(Region::Tube(j));
                regions.push(Region::Tube(j));
            }
            boundary.push(BoundaryEdge { nodes: [grid.node(c, 0), grid.node(c + 1, 0)], tag: BoundaryTag::Wall });
            boundary.push(BoundaryEdge {
                nodes: [grid.node(c + 1, layers), grid.node(c, layers)],
                tag: BoundaryTag::Wall,
            });
        }
        for r in 0..layers {
            boundary.push(BoundaryEdge {
                nodes: [grid.node(columns, r), grid.node(columns, r + 1)],
                tag: BoundaryTag::EndFace(j),
            });
        }
        tubes.push(grid);
    }

    let mesh = Mesh2D { nodes, triangles, regions, boundary, h, tubes };
    mesh.validate()?;
    Ok(mesh)
}

/// Triangulates the band between an inner and an outer closed ring, both
/// parameterized by polygon position in `[0, period)` and starting at 0.
fn stitch(inner: &[(usize, f64)], outer: &[(usize, f64)], period: f64, out: &mut Vec<[usize; 3]>) {
    let (na, nb) = (inner.len(), outer.len());
    let param = |ring: &[(usize, f64)], i: usize| if i == ring.len() { period } else { ring[i].1 };
    let (mut i, mut j) = (0, 0);
    while i < na || j < nb {
        let advance_outer = if i == na {
            true
        } else if j == nb {
            false
        } else {
            // Advance whichever ring's next node lies earlier; compare midpoints
            // of the candidate edges to keep triangles balanced.
            let ta = 0.5 * (param(inner, i) + param(inner, i + 1));
            let tb = 0.5 * (param(outer, j) + param(outer, j + 1));
            tb <= ta
        };
        if advance_outer {
            out.push([inner[i % na].0, outer[j].0, outer[(j + 1) % nb].0]);
            j += 1;
        } else {
            out.push([inner[i].0, outer[j % nb].0, inner[(i + 1) % na].0]);
            i += 1;
        }
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Mesh2D {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        geometry::triangle_area(&a, &b, &c)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.regions[t] == region)
            .map(|t| self.triangle_area(t))
            .sum()
    }

    fn edge_counts(&self) -> BTreeMap<(usize, usize), usize> {
        let mut counts = BTreeMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *counts.entry(edge_key(t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        counts
    }

    /// `V − E + F`; 1 for a triangulated disc.
    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    /// Positive orientation, conformity (every edge shared by at most two
    /// triangles, and the singly used ones are exactly the tagged boundary),
    /// and disc topology.
    pub fn validate(&self) -> Result<()> {
        if self.regions.len() != self.triangles.len() {
            return Err(Error::Mesh("region tags do not match triangles".into()));
        }
        let scale = self.h * self.h;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.nodes.len()) {
                return Err(Error::Mesh(format!("triangle {t} references a missing node")));
            }
            let area = self.triangle_area(t);
            if !(area > 1e-14 * scale) {
                return Err(Error::Mesh(format!("triangle {t} is degenerate or inverted (area {area:e})")));
            }
        }
        let counts = self.edge_counts();
        let mut open: Vec<(usize, usize)> = Vec::new();
        for (&e, &c) in &counts {
            match c {
                1 => open.push(e),
                2 => {}
                _ => return Err(Error::Mesh(format!("edge {e:?} is shared by {c} triangles"))),
            }
        }
        let mut tagged: Vec<(usize, usize)> = self.boundary.iter().map(|b| edge_key(b.nodes[0], b.nodes[1])).collect();
        tagged.sort_unstable();
        if tagged != open {
            return Err(Error::Mesh(
                "boundary edges do not match the mesh boundary (hanging node or missing tag)".into(),
            ));
        }
        let chi = self.euler_characteristic();
        if chi != 1 {
            return Err(Error::Mesh(format!("mesh is not a disc: Euler characteristic {chi}")));
        }
        Ok(())
    }

    /// Four-way uniform refinement; tags, boundary and tube layout carry over.
    pub fn refine_uniform(&self) -> Mesh2D {
        let mut nodes = self.nodes.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            *mid.entry(edge_key(a, b)).or_insert_with(|| {
                nodes.push(Point::from((nodes[a].coords + nodes[b].coords) * 0.5));
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut regions = Vec::with_capacity(4 * self.triangles.len());
        for (tri, &reg) in self.triangles.iter().zip(&self.regions) {
            let [a, b, c] = *tri;
            let ab = midpoint(a, b, &mut nodes);
            let bc = midpoint(b, c, &mut nodes);
            let ca = midpoint(c, a, &mut nodes);
            triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            regions.extend_from_slice(&[reg; 4]);
        }
        let mut boundary = Vec::with_capacity(2 * self.boundary.len());
        for e in &self.boundary {
            let m = midpoint(e.nodes[0], e.nodes[1], &mut nodes);
            boundary.push(BoundaryEdge { nodes: [e.nodes[0], m], tag: e.tag });
            boundary.push(BoundaryEdge { nodes: [m, e.nodes[1]], tag: e.tag });
        }
        let tubes = self
            .tubes
            .iter()
            .map(|g| {
                let (nc, nl) = (2 * g.columns, 2 * g.layers);
                let mut ids = Vec::with_capacity((nc + 1) * (nl + 1));
                for c in 0..=nc {
                    for r in 0..=nl {
                        let (c0, r0) = (c / 2, r / 2);
                        let id = match (c % 2, r % 2) {
                            (0, 0) => g.node(c0, r0),
                            (1, 0) => mid[&edge_key(g.node(c0, r0), g.node(c0 + 1, r0))],
                            (0, 1) => mid[&edge_key(g.node(c0, r0), g.node(c0, r0 + 1))],
                            _ => mid[&edge_key(g.node(c0, r0), g.node(c0 + 1, r0 + 1))],
                        };
                        ids.push(id);
                    }
                }
                let s = (0..=nc)
                    .map(|c| if c % 2 == 0 { g.s[c / 2] } else { 0.5 * (g.s[c / 2] + g.s[c / 2 + 1]) })
                    .collect();
                TubeGrid { edge: g.edge, columns: nc, layers: nl, s, nodes: ids }
            })
            .collect();
        Mesh2D { nodes, triangles, regions, boundary, h: 0.5 * self.h, tubes }
    }

    /// Plain-text export: node count, `x y` lines, triangle count,
    /// `i j k tag` lines (tag −1 for the junction), then boundary count and
    /// `i j tag` lines (tag −1 for walls, `j` for the end face of tube `j`).
    /// Floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:?} {:?}", p.x, p.y);
        }
        let _ = writeln!(s, "{}", self.triangles.len());
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], r.code());
        }
        let _ = writeln!(s, "{}", self.boundary.len());
        for e in &self.boundary {
            let tag = match e.tag {
                BoundaryTag::Wall => -1,
                BoundaryTag::EndFace(j) => j as i64,
            };
            let _ = writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], tag);
        }
        s
    }

    /// Inverse of [`Mesh2D::to_text`]. The boundary block is optional; when
    /// absent, singly used edges are tagged as walls. Tube layouts are not
    /// stored, and `h` becomes the longest edge.
    pub fn from_text(text: &str) -> Result<Mesh2D> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let bad = |what: &str| Error::Mesh(format!("malformed mesh file: {what}"));
        let count = |lines: &mut dyn Iterator<Item = &str>, what: &str| -> Result<usize> {
            lines.next().ok_or_else(|| bad(what))?.parse().map_err(|_| bad(what))
        };
        let nn = count(&mut lines, "node count")?;
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let l = lines.next().ok_or_else(|| bad("node line"))?;
            let v: Vec<f64> = l.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(l))?;
            if v.len() != 2 {
                return Err(bad(l));
            }
            nodes.push(Point::new(v[0], v[1]));
        }
        let nt = count(&mut lines, "triangle count")?;
        let mut triangles = Vec::with_capacity(nt);
        let mut regions = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines.next().ok_or_else(|| bad("triangle line"))?;
            let v: Vec<i64> = l.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(l))?;
            if v.len() != 4 || v[..3].iter().any(|&i| i < 0) {
                return Err(bad(l));
            }
            triangles.push([v[0] as usize, v[1] as usize, v[2] as usize]);
            regions.push(Region::from_code(v[3])?);
        }
        let mut mesh = Mesh2D { nodes, triangles, regions, boundary: Vec::new(), h: 0.0, tubes: Vec::new() };
        match lines.next() {
            Some(l) => {
                let nb: usize = l.parse().map_err(|_| bad("boundary count"))?;
                for _ in 0..nb {
                    let l = lines.next().ok_or_else(|| bad("boundary line"))?;
                    let v: Vec<i64> = l.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(l))?;
                    if v.len() != 3 || v[0] < 0 || v[1] < 0 {
                        return Err(bad(l));
                    }
                    let tag = if v[2] < 0 { BoundaryTag::Wall } else { BoundaryTag::EndFace(v[2] as usize) };
                    mesh.boundary.push(BoundaryEdge { nodes: [v[0] as usize, v[1] as usize], tag });
                }
            }
            None => {
                for (&(a, b), &c) in &mesh.edge_counts() {
                    if c == 1 {
                        mesh.boundary.push(BoundaryEdge { nodes: [a, b], tag: BoundaryTag::Wall });
                    }
                }
            }
        }
        mesh.h = mesh
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| (mesh.nodes[a] - mesh.nodes[b]).norm())
            .fold(0.0, f64::max);
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Angle and aspect report. Fails on a degenerate triangle.
pub fn mesh_quality(m: &Mesh2D) -> Result<MeshQuality> {
    let mut min_angle = f64::INFINITY;
    let mut max_aspect: f64 = 0.0;
    for t in 0..m.triangles.len() {
        let p = m.triangle(t);
        let area = geometry::triangle_area(&p[0], &p[1], &p[2]);
        let e = [(p[1] - p[2]).norm(), (p[2] - p[0]).norm(), (p[0] - p[1]).norm()];
        let longest = e.iter().cloned().fold(0.0, f64::max);
        if !(area > 1e-14 * longest * longest) {
            return Err(Error::Mesh(format!("triangle {t} is degenerate (area {area:e})")));
        }
        for k in 0..3 {
            let (a, b) = (p[(k + 1) % 3] - p[k], p[(k + 2) % 3] - p[k]);
            let ang = geometry::cross(&a, &b).abs().atan2(a.dot(&b)).to_degrees();
            min_angle = min_angle.min(ang);
        }
        let perimeter = e[0] + e[1] + e[2];
        let inradius = 2.0 * area / perimeter;
        let circumradius = e[0] * e[1] * e[2] / (4.0 * area);
        max_aspect = max_aspect.max(circumradius / (2.0 * inradius));
    }
    Ok(MeshQuality {
        min_angle_deg: min_angle,
        max_aspect,
        n_nodes: m.nodes.len(),
        n_tris: m.triangles.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::star_graph::MetricStarGraph;
    use crate::thin_domain::JunctionShape;
    use std::f64::consts::PI;

    fn straight(eps: f64) -> ThinDomainSpec {
        let g = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        ThinDomainSpec::new(&g, eps, 0.25, 1.0, JunctionShape::Auto).unwrap()
    }

    fn star3(eps: f64) -> ThinDomainSpec {
        let g = MetricStarGraph::symmetric(3, 1.0).unwrap();
        ThinDomainSpec::new(&g, eps, 0.25, 1.0, JunctionShape::Auto).unwrap()
    }

    #[test]
    fn tube_grid_count() {
        let m = triangulate(&straight(0.1), 0.05, Some(4)).unwrap();
        for g in &m.tubes {
            assert_eq!((g.columns, g.layers), (18, 4));
        }
        let per_tube = m.regions.iter().filter(|&&r| r == Region::Tube(0)).count();
        assert_eq!(per_tube, 144);
    }

    #[test]
    fn square_cells_give_right_angles() {
        // Cells of 0.025 × 0.025 (layers = 8 across 2ε = 0.2).
        let m = triangulate(&straight(0.1), 0.025, Some(8)).unwrap();
        let tube_only = Mesh2D {
            triangles: m.triangles.iter().zip(&m.regions).filter(|(_, r)| **r != Region::Junction).map(|(t, _)| *t).collect(),
            regions: m.regions.iter().cloned().filter(|r| *r != Region::Junction).collect(),
            ..m.clone()
        };
        let q = mesh_quality(&tube_only).unwrap();
        assert!((q.min_angle_deg - 45.0).abs() < 1e-9, "{}", q.min_angle_deg);
    }

    #[test]
    fn areas_topology_and_quality() {
        for (spec, h) in [(straight(0.1), 0.025), (star3(0.1), 0.02), (star3(0.25), 0.0625), (star3(0.05), 0.0125)] {
            let m = triangulate(&spec, h, None).unwrap();
            assert_eq!(m.euler_characteristic(), 1);
            assert!((m.area() - spec.area()).abs() < 1e-10);
            assert!((m.area() - geometry::signed_area(&spec.outline())).abs() < 1e-10);
            assert!((m.region_area(Region::Junction) - spec.junction_area()).abs() < 1e-10);
            for j in 0..spec.graph().n_edges() {
                assert!((m.region_area(Region::Tube(j)) - spec.tube_area(j)).abs() < 1e-10);
            }
            let q = mesh_quality(&m).unwrap();
            assert!(q.n_nodes > 0 && q.n_tris == m.triangles.len());
            assert!(q.min_angle_deg >= 20.0, "min angle {}", q.min_angle_deg);
        }
    }

    #[test]
    fn interface_nodes_are_shared() {
        let m = triangulate(&star3(0.1), 0.025, None).unwrap();
        for g in &m.tubes {
            for &n in g.column(0) {
                let regs: Vec<Region> = m
                    .triangles
                    .iter()
                    .zip(&m.regions)
                    .filter(|(t, _)| t.contains(&n))
                    .map(|(_, r)| *r)
                    .collect();
                assert!(regs.contains(&Region::Junction) && regs.contains(&Region::Tube(g.edge)));
            }
        }
    }

    #[test]
    fn reference_domain_partition() {
        let spec = star3(0.25);
        let m = triangulate(&spec, 0.0625, None).unwrap();
        let total: f64 = [Region::Junction, Region::Tube(0), Region::Tube(1), Region::Tube(2)]
            .iter()
            .map(|&r| m.region_area(r))
            .sum();
        assert!((total - m.area()).abs() < 1e-12);
    }

    #[test]
    fn custom_nonstar_junction_falls_back() {
        // Junction with a notch that hides part of the boundary from O.
        let g = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        let poly = vec![
            Point::new(0.25, -0.25),
            Point::new(0.25, 0.25),
            Point::new(0.1, 0.25),
            Point::new(0.1, 0.1),
            Point::new(-0.1, 0.1),
            Point::new(-0.1, 0.25),
            Point::new(-0.25, 0.25),
            Point::new(-0.25, -0.25),
        ];
        let spec = ThinDomainSpec::new(&g, 0.25, 0.25, 1.0, JunctionShape::Polygon(poly)).unwrap();
        let m = triangulate(&spec, 0.1, None).unwrap();
        assert!((m.region_area(Region::Junction) - spec.junction_area()).abs() < 1e-12);
    }

    #[test]
    fn rejects_coarse_mesh_and_degenerate_triangle() {
        assert!(matches!(triangulate(&straight(0.1), 0.2, None), Err(Error::Mesh(_))));
        assert!(matches!(triangulate(&straight(0.1), 0.05, Some(1)), Err(Error::Mesh(_))));
        let mut m = triangulate(&straight(0.1), 0.05, None).unwrap();
        let [a, b, _] = m.triangles[0];
        m.triangles[0][2] = b;
        m.triangles[0][1] = a;
        assert!(matches!(mesh_quality(&m), Err(Error::Mesh(_))));
        assert!(m.validate().is_err());
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let m = triangulate(&star3(0.1), 0.03, None).unwrap();
        let text = m.to_text();
        let back = Mesh2D::from_text(&text).unwrap();
        assert_eq!(back.nodes, m.nodes);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.regions, m.regions);
        assert_eq!(back.boundary, m.boundary);
        assert_eq!(back.to_text(), text);
        assert!(Mesh2D::from_text("3\n0 0\n1 0\n").is_err());
    }

    #[test]
    fn refinement_preserves_structure() {
        let spec = star3(0.1);
        let m = triangulate(&spec, 0.05, None).unwrap();
        let r = m.refine_uniform();
        r.validate().unwrap();
        assert_eq!(r.n_triangles(), 4 * m.n_triangles());
        assert!((r.area() - spec.area()).abs() < 1e-10);
        for g in &r.tubes {
            let eps = spec.eps();
            for c in 0..=g.columns {
                for row in 0..=g.layers {
                    let y = spec.graph().to_local(g.edge, &r.nodes[g.node(c, row)]);
                    assert!((y.x - g.s[c]).abs() < 1e-12);
                    assert!((y.y - (-eps + 2.0 * eps * row as f64 / g.layers as f64)).abs() < 1e-12);
                }
            }
        }
    }
}
