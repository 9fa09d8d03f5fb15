//! Uniform Cartesian grids for a channel with a bump on its lower wall, a
//! rectangle with an elliptic hole, and a plain rectangle.
//!
//! Nodes sit at `(i h, j h)`; each owns the `h × h` control cell centred on it
//! (clipped to the box). Nodes on the box edges carry the far-field Dirichlet
//! data (∂Ω₂); fluid nodes that miss a 4-neighbour because it is solid, or
//! because the channel floor ends there, are wall nodes (∂Ω₁). The obstacle
//! boundary is a staircase; every missing neighbour is a wall face carrying
//! the obstacle normal (pointing into the flow).

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Unit steps east, west, north, south.
pub const DIRECTIONS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    /// Box `[0, length] × [0, height]` with a circular-arc bump on the floor.
    Channel {
        length: f64,
        height: f64,
        bump_center: f64,
        bump_chord: f64,
        bump_height: f64,
    },
    /// Box `[0, width] × [0, height]` with an elliptic obstacle inside.
    Hole {
        width: f64,
        height: f64,
        center: [f64; 2],
        semi_axes: [f64; 2],
    },
    /// Obstacle-free box with Dirichlet data on all four sides (no wall nodes).
    Rectangle { width: f64, height: f64 },
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec::Channel {
            length: 3.0,
            height: 1.0,
            bump_center: 1.5,
            bump_chord: 1.0,
            bump_height: 0.1,
        }
    }
}

impl DomainSpec {
    pub fn extents(&self) -> (f64, f64) {
        match *self {
            DomainSpec::Channel { length, height, .. } => (length, height),
            DomainSpec::Hole { width, height, .. } | DomainSpec::Rectangle { width, height } => (width, height),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Construction(m));
        let (w, ht) = self.extents();
        if !(w > 0.0 && ht > 0.0 && w.is_finite() && ht.is_finite()) {
            return bad(format!("box extents {w} × {ht} must be positive"));
        }
        match *self {
            DomainSpec::Channel {
                bump_center,
                bump_chord,
                bump_height,
                ..
            } => {
                if !(bump_height >= 0.0 && bump_height < ht) {
                    return bad(format!("bump height {bump_height} must lie in [0, {ht})"));
                }
                if bump_height > 0.0 {
                    let (a, b) = (bump_center - 0.5 * bump_chord, bump_center + 0.5 * bump_chord);
                    if !(bump_chord > 0.0 && a > 0.0 && b < w) {
                        return bad(format!("bump chord [{a}, {b}] must lie inside (0, {w})"));
                    }
                }
            }
            DomainSpec::Hole { center, semi_axes, .. } => {
                let [cx, cy] = center;
                let [a, b] = semi_axes;
                if !(a > 0.0 && b > 0.0) {
                    return bad(format!("semi-axes ({a}, {b}) must be positive"));
                }
                if !(cx - a > 0.0 && cx + a < w && cy - b > 0.0 && cy + b < ht) {
                    return bad("ellipse must lie strictly inside the box".into());
                }
            }
            DomainSpec::Rectangle { .. } => {}
        }
        Ok(())
    }

    /// True when the point lies inside the obstacle.
    pub fn is_solid(&self, x: f64, y: f64) -> bool {
        match *self {
            DomainSpec::Channel {
                bump_center,
                bump_chord,
                bump_height,
                ..
            } => {
                if bump_height <= 0.0 || (x - bump_center).abs() >= 0.5 * bump_chord {
                    return false;
                }
                y < self.bump_profile(x)
            }
            DomainSpec::Hole { center, semi_axes, .. } => {
                let dx = (x - center[0]) / semi_axes[0];
                let dy = (y - center[1]) / semi_axes[1];
                dx * dx + dy * dy < 1.0
            }
            DomainSpec::Rectangle { .. } => false,
        }
    }

    fn bump_circle(&self) -> Option<([f64; 2], f64)> {
        match *self {
            DomainSpec::Channel {
                bump_center,
                bump_chord,
                bump_height,
                ..
            } if bump_height > 0.0 => {
                let half = 0.5 * bump_chord;
                let radius = (half * half + bump_height * bump_height) / (2.0 * bump_height);
                Some(([bump_center, bump_height - radius], radius))
            }
            _ => None,
        }
    }

    /// Height of the lower wall at abscissa x (channel only; zero elsewhere).
    pub fn bump_profile(&self, x: f64) -> f64 {
        match (self, self.bump_circle()) {
            (DomainSpec::Channel { bump_chord, .. }, Some((c, r))) if (x - c[0]).abs() < 0.5 * bump_chord => {
                c[1] + (r * r - (x - c[0]).powi(2)).sqrt()
            }
            _ => 0.0,
        }
    }

    /// Unit obstacle normal (into the flow) associated with a point near the obstacle.
    pub fn obstacle_normal(&self, x: f64, y: f64) -> [f64; 2] {
        let (nx, ny) = match *self {
            DomainSpec::Channel { .. } => match self.bump_circle() {
                Some((c, _)) => (x - c[0], y - c[1]),
                None => (0.0, 1.0),
            },
            DomainSpec::Hole { center, semi_axes, .. } => (
                (x - center[0]) / (semi_axes[0] * semi_axes[0]),
                (y - center[1]) / (semi_axes[1] * semi_axes[1]),
            ),
            DomainSpec::Rectangle { .. } => (0.0, 1.0),
        };
        let norm = nx.hypot(ny);
        if norm == 0.0 {
            [0.0, 1.0]
        } else {
            [nx / norm, ny / norm]
        }
    }
}

/// Orientation of a far-field boundary piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Solid,
    Interior,
    /// Obstacle or channel-floor node (∂Ω₁).
    Wall,
    /// Box-edge node carrying Dirichlet data (∂Ω₂).
    FarField(Orientation),
}

impl NodeKind {
    pub fn is_fluid(self) -> bool {
        self != NodeKind::Solid
    }

    pub fn is_unknown(self) -> bool {
        matches!(self, NodeKind::Interior | NodeKind::Wall)
    }

    fn code(self) -> &'static str {
        match self {
            NodeKind::Solid => "solid",
            NodeKind::Interior => "interior",
            NodeKind::Wall => "wall",
            NodeKind::FarField(Orientation::Horizontal) => "farfield_h",
            NodeKind::FarField(Orientation::Vertical) => "farfield_v",
        }
    }
}

/// A missing neighbour of a wall node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallFace {
    pub node: usize,
    /// Index into [`DIRECTIONS`] pointing from the node out of the fluid.
    pub dir: usize,
    /// Unit obstacle normal, into the flow.
    pub normal: [f64; 2],
}

impl WallFace {
    /// `n · e` for the face direction e.
    pub fn normal_dot_dir(&self) -> f64 {
        let (dx, dy) = DIRECTIONS[self.dir];
        self.normal[0] * dx as f64 + self.normal[1] * dy as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    /// Unit normal into the flow.
    pub normal: [f64; 2],
    /// Arc length represented by the node.
    pub ds: f64,
    /// Outward (out of the fluid) normal times arc length, summed over faces.
    pub outward_area: [f64; 2],
}

/// Which part of the boundary an integral runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPart {
    Wall,
    FarField,
}

#[derive(Debug, Clone)]
pub struct Grid {
    spec: DomainSpec,
    h: f64,
    nx: usize,
    ny: usize,
    kinds: Vec<NodeKind>,
    unknown_index: Vec<usize>,
    unknowns: Vec<usize>,
    wall_faces: Vec<WallFace>,
    /// For each node, the range of its faces in `wall_faces`.
    face_start: Vec<u32>,
    wall_nodes: Vec<BoundaryNode>,
    far_field: Vec<BoundaryNode>,
    area: Vec<f64>,
    wall_distance: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl Grid {
    pub fn build(spec: &DomainSpec, h: f64) -> Result<Self> {
        spec.validate()?;
        let (w, ht) = spec.extents();
        let cells = |len: f64| -> Result<usize> {
            let n = (len / h).round();
            if !(h > 0.0) || (n * h - len).abs() > 1e-9 * len || n < 2.0 {
                return Err(Error::Construction(format!("spacing {h} does not divide extent {len}")));
            }
            Ok(n as usize)
        };
        let (cx, cy) = (cells(w)?, cells(ht)?);
        let (nx, ny) = (cx + 1, cy + 1);
        let channel = matches!(spec, DomainSpec::Channel { .. });
        let mut solid: Vec<bool> = (0..nx * ny)
            .map(|id| spec.is_solid((id % nx) as f64 * h, (id / nx) as f64 * h))
            .collect();
        let on_box_edge = |i: usize, j: usize| i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
        let is_far = |i: usize, j: usize| {
            if channel {
                i == 0 || i == nx - 1 || j == ny - 1
            } else {
                on_box_edge(i, j)
            }
        };
        // prune slivers: fluid nodes with fewer than two fluid neighbours
        loop {
            let mut changed = false;
            for j in 0..ny {
                for i in 0..nx {
                    let id = j * nx + i;
                    if solid[id] || is_far(i, j) {
                        continue;
                    }
                    let count = DIRECTIONS
                        .iter()
                        .filter(|&&(dx, dy)| match step(nx, ny, i, j, dx, dy) {
                            Some(n) => !solid[n],
                            None => false,
                        })
                        .count();
                    if count < 2 {
                        solid[id] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        // drop fluid pockets not connected to the far field
        let mut reached = vec![false; nx * ny];
        let mut queue = VecDeque::new();
        for j in 0..ny {
            for i in 0..nx {
                let id = j * nx + i;
                if is_far(i, j) && !solid[id] {
                    reached[id] = true;
                    queue.push_back((i, j));
                }
            }
        }
        while let Some((i, j)) = queue.pop_front() {
            for &(dx, dy) in &DIRECTIONS {
                if let Some(n) = step(nx, ny, i, j, dx, dy) {
                    if !solid[n] && !reached[n] {
                        reached[n] = true;
                        queue.push_back((n % nx, n / nx));
                    }
                }
            }
        }
        for id in 0..nx * ny {
            if !reached[id] {
                solid[id] = true;
            }
        }

        let mut kinds = vec![NodeKind::Solid; nx * ny];
        let mut wall_faces = Vec::new();
        let mut face_start = vec![0u32; nx * ny + 1];
        for j in 0..ny {
            for i in 0..nx {
                let id = j * nx + i;
                face_start[id] = wall_faces.len() as u32;
                if solid[id] {
                    continue;
                }
                if is_far(i, j) {
                    let orientation = if j == 0 || j == ny - 1 {
                        Orientation::Horizontal
                    } else {
                        Orientation::Vertical
                    };
                    kinds[id] = NodeKind::FarField(orientation);
                    continue;
                }
                let (x, y) = (i as f64 * h, j as f64 * h);
                for (dir, &(dx, dy)) in DIRECTIONS.iter().enumerate() {
                    let normal = match step(nx, ny, i, j, dx, dy) {
                        Some(n) if !solid[n] => continue,
                        Some(_) => spec.obstacle_normal(x, y),
                        None => [0.0, 1.0],
                    };
                    wall_faces.push(WallFace { node: id, dir, normal });
                }
                kinds[id] = if wall_faces.len() as u32 > face_start[id] {
                    NodeKind::Wall
                } else {
                    NodeKind::Interior
                };
            }
        }
        face_start[nx * ny] = wall_faces.len() as u32;
        if !kinds.iter().any(|k| k.is_unknown()) {
            return Err(Error::Construction("grid has no interior fluid nodes".into()));
        }

        let mut unknown_index = vec![NONE; nx * ny];
        let mut unknowns = Vec::new();
        for (id, k) in kinds.iter().enumerate() {
            if k.is_unknown() {
                unknown_index[id] = unknowns.len();
                unknowns.push(id);
            }
        }

        let mut wall_nodes = Vec::new();
        for id in 0..nx * ny {
            let faces = &wall_faces[face_start[id] as usize..face_start[id + 1] as usize];
            if faces.is_empty() {
                continue;
            }
            let mut n_sum = [0.0, 0.0];
            let mut out = [0.0, 0.0];
            let mut ds = 0.0;
            for f in faces {
                let (dx, dy) = DIRECTIONS[f.dir];
                out[0] += dx as f64 * h;
                out[1] += dy as f64 * h;
                n_sum[0] += f.normal[0];
                n_sum[1] += f.normal[1];
                ds += h * f.normal_dot_dir().abs();
            }
            let norm = n_sum[0].hypot(n_sum[1]);
            let normal = if norm > 0.0 {
                [n_sum[0] / norm, n_sum[1] / norm]
            } else {
                faces[0].normal
            };
            wall_nodes.push(BoundaryNode {
                node: id,
                normal,
                ds,
                outward_area: out,
            });
        }

        let mut far_field = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let id = j * nx + i;
                if !matches!(kinds[id], NodeKind::FarField(_)) {
                    continue;
                }
                // pieces of the box edge that belong to ∂Ω₂ and meet at this node
                let mut out = [0.0, 0.0];
                let mut ds = 0.0;
                let mut add = |len: f64, n: [f64; 2]| {
                    ds += len;
                    out[0] += len * n[0];
                    out[1] += len * n[1];
                };
                let along = |k: usize, last: usize| if k == 0 || k == last { 0.5 * h } else { h };
                if i == 0 {
                    add(along(j, ny - 1), [-1.0, 0.0]);
                }
                if i == nx - 1 {
                    add(along(j, ny - 1), [1.0, 0.0]);
                }
                if j == ny - 1 {
                    add(along(i, nx - 1), [0.0, 1.0]);
                }
                if j == 0 && !channel {
                    add(along(i, nx - 1), [0.0, -1.0]);
                }
                let norm = out[0].hypot(out[1]);
                far_field.push(BoundaryNode {
                    node: id,
                    normal: [-out[0] / norm, -out[1] / norm],
                    ds,
                    outward_area: out,
                });
            }
        }

        let area = (0..nx * ny)
            .map(|id| {
                if kinds[id] == NodeKind::Solid {
                    return 0.0;
                }
                let (i, j) = (id % nx, id / nx);
                let fx = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                let fy = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
                fx * fy * h * h
            })
            .collect();

        let wall_points: Vec<(f64, f64)> = wall_nodes
            .iter()
            .map(|b| ((b.node % nx) as f64 * h, (b.node / nx) as f64 * h))
            .collect();
        let wall_distance = (0..nx * ny)
            .map(|id| {
                let (x, y) = ((id % nx) as f64 * h, (id / nx) as f64 * h);
                wall_points
                    .iter()
                    .map(|&(a, b)| (x - a).hypot(y - b))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();

        Ok(Self {
            spec: spec.clone(),
            h,
            nx,
            ny,
            kinds,
            unknown_index,
            unknowns,
            wall_faces,
            face_start,
            wall_nodes,
            far_field,
            area,
            wall_distance,
        })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Node counts in x and y.
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn position(&self, node: usize) -> [f64; 2] {
        [(node % self.nx) as f64 * self.h, (node / self.nx) as f64 * self.h]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Fluid neighbour in direction `dir`, if any.
    pub fn neighbor(&self, node: usize, dir: usize) -> Option<usize> {
        let (dx, dy) = DIRECTIONS[dir];
        step(self.nx, self.ny, node % self.nx, node / self.nx, dx, dy).filter(|&n| self.kinds[n].is_fluid())
    }

    /// Nodes solved for (interior and wall), in solver order.
    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    /// Position of a node in [`Grid::unknowns`].
    pub fn unknown_index(&self, node: usize) -> Option<usize> {
        let k = self.unknown_index[node];
        (k != NONE).then_some(k)
    }

    pub fn wall_faces(&self) -> &[WallFace] {
        &self.wall_faces
    }

    /// Indices into [`Grid::wall_faces`] belonging to a node.
    pub fn faces_of(&self, node: usize) -> std::ops::Range<usize> {
        self.face_start[node] as usize..self.face_start[node + 1] as usize
    }

    pub fn wall_nodes(&self) -> &[BoundaryNode] {
        &self.wall_nodes
    }

    pub fn far_field(&self) -> &[BoundaryNode] {
        &self.far_field
    }

    /// Control-cell area of a node (zero for solid nodes).
    pub fn area(&self, node: usize) -> f64 {
        self.area[node]
    }

    /// Distance to the nearest wall node.
    pub fn wall_distance(&self, node: usize) -> f64 {
        self.wall_distance[node]
    }

    pub fn fluid_count(&self) -> usize {
        self.kinds.iter().filter(|k| k.is_fluid()).count()
    }

    /// Midpoint-rule line integral over the selected boundary part; `values`
    /// is indexed like [`Grid::wall_nodes`] or [`Grid::far_field`].
    pub fn boundary_integral(&self, values: &[f64], part: BoundaryPart) -> Result<f64> {
        let nodes = match part {
            BoundaryPart::Wall => &self.wall_nodes,
            BoundaryPart::FarField => &self.far_field,
        };
        if values.len() != nodes.len() {
            return Err(Error::Construction(format!(
                "expected {} boundary values, got {}",
                nodes.len(),
                values.len()
            )));
        }
        Ok(nodes.iter().zip(values).map(|(b, v)| b.ds * v).sum())
    }

    /// CSV dump `i,j,x,y,kind,normal_x,normal_y` of every node.
    pub fn mask_csv(&self) -> String {
        let mut normals = vec![[0.0; 2]; self.len()];
        for b in self.wall_nodes.iter().chain(&self.far_field) {
            normals[b.node] = b.normal;
        }
        let mut out = String::from("i,j,x,y,kind,normal_x,normal_y\n");
        for id in 0..self.len() {
            let [x, y] = self.position(id);
            let _ = writeln!(
                out,
                "{},{},{x},{y},{},{},{}",
                id % self.nx,
                id / self.nx,
                self.kinds[id].code(),
                normals[id][0],
                normals[id][1]
            );
        }
        out
    }
}

fn step(nx: usize, ny: usize, i: usize, j: usize, dx: i64, dy: i64) -> Option<usize> {
    let (a, b) = (i as i64 + dx, j as i64 + dy);
    (a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny).then(|| b as usize * nx + a as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel(bump_height: f64) -> DomainSpec {
        DomainSpec::Channel {
            length: 3.0,
            height: 1.0,
            bump_center: 1.5,
            bump_chord: 1.0,
            bump_height,
        }
    }

    fn hole() -> DomainSpec {
        DomainSpec::Hole {
            width: 2.0,
            height: 1.0,
            center: [1.0, 0.5],
            semi_axes: [0.3, 0.2],
        }
    }

    #[test]
    fn flat_channel_is_all_fluid_with_floor_wall() {
        let g = Grid::build(&channel(0.0), 0.125).unwrap();
        let (nx, ny) = g.dims();
        assert_eq!((nx, ny), (25, 9));
        assert_eq!(g.fluid_count(), nx * ny);
        assert_eq!(g.wall_nodes().len(), nx - 2);
        for b in g.wall_nodes() {
            assert_eq!(g.position(b.node)[1], 0.0);
            assert_eq!(b.normal, [0.0, 1.0]);
            assert_eq!(b.ds, 0.125);
        }
    }

    #[test]
    fn far_field_length_is_three_sides() {
        let g = Grid::build(&channel(0.0), 1.0 / 16.0).unwrap();
        let ones = vec![1.0; g.far_field().len()];
        let total = g.boundary_integral(&ones, BoundaryPart::FarField).unwrap();
        assert!((total - 5.0).abs() <= 2.0 / 16.0);
        let zeros = vec![0.0; g.far_field().len()];
        assert_eq!(g.boundary_integral(&zeros, BoundaryPart::FarField).unwrap(), 0.0);
        assert!(g.boundary_integral(&ones[1..], BoundaryPart::FarField).is_err());
    }

    #[test]
    fn boundary_integral_is_linear() {
        let g = Grid::build(&channel(0.1), 1.0 / 16.0).unwrap();
        let n = g.wall_nodes().len();
        let a: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        let b: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).cos()).collect();
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let ia = g.boundary_integral(&a, BoundaryPart::Wall).unwrap();
        let ib = g.boundary_integral(&b, BoundaryPart::Wall).unwrap();
        let ic = g.boundary_integral(&c, BoundaryPart::Wall).unwrap();
        assert!((ic - (2.0 * ia - 3.0 * ib)).abs() < 1e-14);
    }

    #[test]
    fn refinement_quadruples_fluid_count() {
        let coarse = Grid::build(&channel(0.1), 1.0 / 16.0).unwrap().fluid_count() as f64;
        let fine = Grid::build(&channel(0.1), 1.0 / 32.0).unwrap().fluid_count() as f64;
        // perimeter ≈ 8 so the discrepancy is O(perimeter / h)
        assert!((fine - 4.0 * coarse).abs() < 8.0 * 32.0);
    }

    #[test]
    fn bump_wall_normals_point_into_flow() {
        let spec = channel(0.1);
        let g = Grid::build(&spec, 1.0 / 32.0).unwrap();
        for b in g.wall_nodes() {
            assert!((b.normal[0].hypot(b.normal[1]) - 1.0).abs() < 1e-12);
            assert!(b.normal[1] > 0.0);
            let [x, y] = g.position(b.node);
            assert!(!spec.is_solid(x, y));
        }
        for f in g.wall_faces() {
            assert!((f.normal[0].hypot(f.normal[1]) - 1.0).abs() < 1e-12);
            assert!(f.normal_dot_dir() <= 0.0);
        }
        let ones = vec![1.0; g.wall_nodes().len()];
        let len = g.boundary_integral(&ones, BoundaryPart::Wall).unwrap();
        // floor plus a shallow arc: slightly more than the channel length
        assert!(len > 2.8 && len < 3.1, "{len}");
    }

    #[test]
    fn hole_boundary_is_closed_ring() {
        let g = Grid::build(&hole(), 1.0 / 32.0).unwrap();
        assert!(g.far_field().len() == 2 * (65 + 33) - 4);
        let wall: Vec<usize> = g.wall_nodes().iter().map(|b| b.node).collect();
        let (nx, _) = g.dims();
        for &w in &wall {
            let (i, j) = ((w % nx) as i64, (w / nx) as i64);
            let mut count = 0;
            for dx in -1..=1i64 {
                for dy in -1..=1i64 {
                    if (dx, dy) != (0, 0) && wall.contains(&(((j + dy) * nx as i64 + i + dx) as usize)) {
                        count += 1;
                    }
                }
            }
            assert!(count >= 2, "wall node {w} has {count} ring neighbours");
        }
        // normals point away from the ellipse centre
        for b in g.wall_nodes() {
            let [x, y] = g.position(b.node);
            assert!(b.normal[0] * (x - 1.0) + b.normal[1] * (y - 0.5) > 0.0);
        }
        let ones = vec![1.0; g.wall_nodes().len()];
        let len = g.boundary_integral(&ones, BoundaryPart::Wall).unwrap();
        // ellipse perimeter (Ramanujan) ≈ 1.5867
        assert!((len - 1.5867).abs() < 0.15, "{len}");
    }

    #[test]
    fn every_fluid_node_has_two_fluid_neighbours() {
        for spec in [channel(0.2), hole()] {
            let g = Grid::build(&spec, 1.0 / 16.0).unwrap();
            for &n in g.unknowns() {
                let count = (0..4).filter(|&d| g.neighbor(n, d).is_some()).count();
                assert!(count >= 2);
            }
        }
    }

    #[test]
    fn discrete_divergence_theorem() {
        // F = (x², xy): div F = 3x
        for spec in [channel(0.1), hole()] {
            let mut errs = Vec::new();
            for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
                let g = Grid::build(&spec, h).unwrap();
                let interior: f64 = (0..g.len()).map(|n| 3.0 * g.position(n)[0] * g.area(n)).sum();
                let flux: f64 = g
                    .wall_nodes()
                    .iter()
                    .chain(g.far_field())
                    .map(|b| {
                        let [x, y] = g.position(b.node);
                        x * x * b.outward_area[0] + x * y * b.outward_area[1]
                    })
                    .sum();
                errs.push((interior - flux).abs());
            }
            assert!(errs[2] < errs[0] * 0.5, "{errs:?}");
            assert!(errs[2] < 0.1);
        }
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(Grid::build(&channel(0.1), 0.3).is_err());
        assert!(Grid::build(&channel(1.5), 0.125).is_err());
        let bad = DomainSpec::Hole {
            width: 1.0,
            height: 1.0,
            center: [0.5, 0.5],
            semi_axes: [0.6, 0.2],
        };
        assert!(Grid::build(&bad, 0.125).is_err());
        let offset = DomainSpec::Channel {
            length: 3.0,
            height: 1.0,
            bump_center: 0.2,
            bump_chord: 1.0,
            bump_height: 0.1,
        };
        assert!(Grid::build(&offset, 0.125).is_err());
    }

    #[test]
    fn mask_csv_has_row_per_node() {
        let g = Grid::build(&hole(), 0.125).unwrap();
        let csv = g.mask_csv();
        assert_eq!(csv.lines().count(), g.len() + 1);
        assert!(csv.contains("solid") && csv.contains("wall") && csv.contains("farfield_v"));
    }
}
