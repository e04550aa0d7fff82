//! Polar finite-volume disk, its boundary circle, and the trace coupling
//! between them.
//!
//! Cells are annular sectors indexed `ring * n_theta + sector`, ring 0 at the
//! centre. Cell centres sit at `r = (ring + 1/2) dr`, `θ = (sector + 1/2) dθ`,
//! so no centre lies on the origin. Surface nodes share the sector angles,
//! which makes the face/node pairing the identity on sector indices.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Face shared by two cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorFace<T> {
    pub a: usize,
    pub b: usize,
    pub length: T,
    /// Distance between the two cell centres measured across the face.
    pub distance: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace<T> {
    pub cell: usize,
    pub length: T,
    pub normal_angle: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BulkMesh<T> {
    pub radius: T,
    pub n_r: usize,
    pub n_theta: usize,
    pub dr: T,
    pub dtheta: T,
    /// `(r, θ)` per cell.
    pub cell_centers: Vec<(T, T)>,
    pub cell_areas: Vec<T>,
    pub interior_faces: Vec<InteriorFace<T>>,
    pub boundary_faces: Vec<BoundaryFace<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh<T> {
    pub radius: T,
    pub n_theta: usize,
    pub dtheta: T,
    pub node_angles: Vec<T>,
    pub node_weights: Vec<T>,
}

/// Two-point radial extrapolation from the outermost two cell centres to
/// `r = radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStencil<T> {
    pub outer: usize,
    pub inner: usize,
    pub w_outer: T,
    pub w_inner: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMap<T> {
    /// `(boundary face index, surface node index)`.
    pub pairs: Vec<(usize, usize)>,
    /// Indexed by boundary face.
    pub stencils: Vec<TraceStencil<T>>,
    node_to_face: Vec<usize>,
    /// Spacing between the two stencil centres.
    dr: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshSummary {
    pub radius: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub n_cells: usize,
    pub dr: f64,
    pub dtheta: f64,
    pub min_spacing: f64,
    pub total_area: f64,
    pub n_boundary_faces: usize,
    pub boundary_length: f64,
    pub surface_nodes: usize,
    pub surface_length: f64,
}

pub fn build_disk_mesh<T: Real>(radius: T, n_r: usize, n_theta: usize) -> Result<BulkMesh<T>> {
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::Mesh(format!("radius must be positive, got {radius}")));
    }
    if n_r < 2 {
        return Err(Error::Mesh(format!("n_r must be at least 2, got {n_r}")));
    }
    if n_theta < 4 {
        return Err(Error::Mesh(format!("n_theta must be at least 4, got {n_theta}")));
    }
    let half = T::lit(0.5);
    let dr = radius / T::from_usize_lossy(n_r);
    let dtheta = T::TAU() / T::from_usize_lossy(n_theta);
    let index = |ring: usize, sector: usize| ring * n_theta + sector;

    let mut cell_centers = Vec::with_capacity(n_r * n_theta);
    let mut cell_areas = Vec::with_capacity(n_r * n_theta);
    for ring in 0..n_r {
        let r_in = T::from_usize_lossy(ring) * dr;
        let r_out = T::from_usize_lossy(ring + 1) * dr;
        let rc = (T::from_usize_lossy(ring) + half) * dr;
        // Annular sector area, (r_out² - r_in²) dθ / 2 = rc dr dθ.
        let area = half * (r_out * r_out - r_in * r_in) * dtheta;
        for sector in 0..n_theta {
            let theta = (T::from_usize_lossy(sector) + half) * dtheta;
            cell_centers.push((rc, theta));
            cell_areas.push(area);
        }
    }

    let mut interior_faces = Vec::with_capacity(2 * n_r * n_theta);
    for ring in 0..n_r {
        let rc = cell_centers[index(ring, 0)].0;
        for sector in 0..n_theta {
            // Angular face towards the next sector (periodic).
            interior_faces.push(InteriorFace {
                a: index(ring, sector),
                b: index(ring, (sector + 1) % n_theta),
                length: dr,
                distance: rc * dtheta,
            });
            if ring + 1 < n_r {
                let r_face = T::from_usize_lossy(ring + 1) * dr;
                interior_faces.push(InteriorFace {
                    a: index(ring, sector),
                    b: index(ring + 1, sector),
                    length: r_face * dtheta,
                    distance: dr,
                });
            }
        }
    }

    let boundary_faces = (0..n_theta)
        .map(|sector| BoundaryFace {
            cell: index(n_r - 1, sector),
            length: radius * dtheta,
            normal_angle: (T::from_usize_lossy(sector) + half) * dtheta,
        })
        .collect();

    Ok(BulkMesh {
        radius,
        n_r,
        n_theta,
        dr,
        dtheta,
        cell_centers,
        cell_areas,
        interior_faces,
        boundary_faces,
    })
}

pub fn build_surface_mesh<T: Real>(radius: T, n_theta: usize) -> Result<SurfaceMesh<T>> {
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::Mesh(format!("radius must be positive, got {radius}")));
    }
    if n_theta < 4 {
        return Err(Error::Mesh(format!("n_theta must be at least 4, got {n_theta}")));
    }
    let dtheta = T::TAU() / T::from_usize_lossy(n_theta);
    let node_angles = (0..n_theta)
        .map(|j| (T::from_usize_lossy(j) + T::lit(0.5)) * dtheta)
        .collect();
    Ok(SurfaceMesh {
        radius,
        n_theta,
        dtheta,
        node_angles,
        node_weights: vec![radius * dtheta; n_theta],
    })
}

pub fn build_trace_map<T: Real>(bulk: &BulkMesh<T>, surface: &SurfaceMesh<T>) -> Result<TraceMap<T>> {
    if bulk.n_theta != surface.n_theta {
        return Err(Error::Config(format!(
            "bulk n_theta ({}) differs from surface n_theta ({})",
            bulk.n_theta, surface.n_theta
        )));
    }
    let tol = T::lit(1e-12) * bulk.radius.max(T::one());
    if (bulk.radius - surface.radius).abs() > tol {
        return Err(Error::Config(format!(
            "bulk radius ({}) differs from surface radius ({})",
            bulk.radius, surface.radius
        )));
    }
    let n_theta = bulk.n_theta;
    let outer_ring = bulk.n_r - 1;
    let r_outer = bulk.cell_centers[outer_ring * n_theta].0;
    // Linear extrapolation: u(R) = u_o + (R - r_o)(u_o - u_i)/dr.
    let s = (bulk.radius - r_outer) / bulk.dr;
    let pairs = (0..n_theta).map(|j| (j, j)).collect();
    let stencils = (0..n_theta)
        .map(|j| TraceStencil {
            outer: outer_ring * n_theta + j,
            inner: (outer_ring - 1) * n_theta + j,
            w_outer: T::one() + s,
            w_inner: -s,
        })
        .collect();
    Ok(TraceMap {
        pairs,
        stencils,
        node_to_face: (0..n_theta).collect(),
        dr: bulk.dr,
    })
}

impl<T: Real> BulkMesh<T> {
    pub fn n_cells(&self) -> usize {
        self.cell_areas.len()
    }

    pub fn cell_index(&self, ring: usize, sector: usize) -> usize {
        ring * self.n_theta + sector
    }

    pub fn total_area(&self) -> T {
        self.cell_areas.iter().fold(T::zero(), |acc, &a| acc + a)
    }

    /// Smallest centre-to-centre distance (the innermost angular spacing).
    pub fn min_spacing(&self) -> T {
        self.interior_faces
            .iter()
            .fold(T::infinity(), |acc, f| acc.min(f.distance))
    }

    /// Cell centre in Cartesian coordinates.
    pub fn center_xy(&self, cell: usize) -> (T, T) {
        let (r, th) = self.cell_centers[cell];
        (r * th.cos(), r * th.sin())
    }

    /// Evaluates `f(r, θ)` at every cell centre.
    pub fn sample(&self, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.cell_centers.iter().map(|&(r, th)| f(r, th)).collect()
    }

    /// Bilinear interpolation in `(r, θ)` of a cell-centred field, periodic
    /// in θ and extrapolated linearly past the outermost ring.
    pub fn interpolate(&self, field: &[T], r: T, theta: T) -> T {
        let half = T::lit(0.5);
        let n_theta = self.n_theta;
        let mut s = r / self.dr - half;
        let max_ring = T::from_usize_lossy(self.n_r - 2);
        if s < T::zero() {
            s = T::zero();
        }
        let ring = s.floor().min(max_ring);
        let fr = s - ring;
        let ring = ring.to_usize().unwrap_or(0);

        let theta = theta - T::TAU() * (theta / T::TAU()).floor();
        let q = theta / self.dtheta - half;
        let q0 = q.floor();
        let ft = q - q0;
        let n = n_theta as i64;
        let j0 = q0.to_i64().unwrap_or(0).rem_euclid(n) as usize;
        let j1 = (j0 + 1) % n_theta;

        let at = |ring: usize, j: usize| field[ring * n_theta + j];
        let lo = at(ring, j0) * (T::one() - ft) + at(ring, j1) * ft;
        let hi = at(ring + 1, j0) * (T::one() - ft) + at(ring + 1, j1) * ft;
        lo * (T::one() - fr) + hi * fr
    }

    pub fn summary(&self, surface: Option<&SurfaceMesh<T>>) -> MeshSummary {
        MeshSummary {
            radius: self.radius.as_f64(),
            n_r: self.n_r,
            n_theta: self.n_theta,
            n_cells: self.n_cells(),
            dr: self.dr.as_f64(),
            dtheta: self.dtheta.as_f64(),
            min_spacing: self.min_spacing().as_f64(),
            total_area: self.total_area().as_f64(),
            n_boundary_faces: self.boundary_faces.len(),
            boundary_length: self
                .boundary_faces
                .iter()
                .map(|f| f.length.as_f64())
                .sum(),
            surface_nodes: surface.map_or(0, |s| s.n_theta),
            surface_length: surface.map_or(0.0, |s| s.total_length().as_f64()),
        }
    }
}

impl<T: Real> SurfaceMesh<T> {
    pub fn total_length(&self) -> T {
        self.node_weights.iter().fold(T::zero(), |acc, &w| acc + w)
    }

    pub fn sample(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.node_angles.iter().map(|&th| f(th)).collect()
    }

    /// Node position in Cartesian coordinates.
    pub fn node_xy(&self, node: usize) -> (T, T) {
        let th = self.node_angles[node];
        (self.radius * th.cos(), self.radius * th.sin())
    }
}

impl<T: Real> TraceMap<T> {
    pub fn n_faces(&self) -> usize {
        self.stencils.len()
    }

    pub fn node_of_face(&self, face: usize) -> usize {
        self.pairs[face].1
    }

    pub fn face_of_node(&self, node: usize) -> usize {
        self.node_to_face[node]
    }

    /// Boundary value of a cell-centred field at one face.
    #[inline]
    pub fn trace_at(&self, field: &[T], face: usize) -> T {
        let s = &self.stencils[face];
        s.w_outer * field[s.outer] + s.w_inner * field[s.inner]
    }

    /// Trace values ordered by surface node.
    pub fn trace(&self, field: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_faces()];
        for (face, &(_, node)) in self.pairs.iter().enumerate() {
            out[node] = self.trace_at(field, face);
        }
        out
    }

    /// Outward normal derivative from the same two stencil cells.
    pub fn normal_derivative_at(&self, field: &[T], face: usize) -> T {
        let s = &self.stencils[face];
        (field[s.outer] - field[s.inner]) / self.dr
    }
}

/// Bulk mesh, matching surface mesh and the trace pairing between them.
#[derive(Debug, Clone)]
pub struct Meshes<T> {
    pub bulk: BulkMesh<T>,
    pub surface: SurfaceMesh<T>,
    pub trace: TraceMap<T>,
}

impl<T: Real> Meshes<T> {
    pub fn build(radius: T, n_r: usize, n_theta: usize) -> Result<Self> {
        let bulk = build_disk_mesh(radius, n_r, n_theta)?;
        let surface = build_surface_mesh(radius, n_theta)?;
        let trace = build_trace_map(&bulk, &surface)?;
        Ok(Meshes { bulk, surface, trace })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn disk_area_and_counts() {
        let m = build_disk_mesh(1.0f64, 4, 8).unwrap();
        assert_eq!(m.n_cells(), 32);
        assert!((m.total_area() - PI).abs() <= 1e-12 * PI);
        assert_eq!(m.boundary_faces.len(), 8);
        for f in &m.boundary_faces {
            assert!((f.length - 2.0 * PI / 8.0).abs() < 1e-14);
        }
        let m = build_disk_mesh(2.0, 10, 16).unwrap();
        assert!((m.total_area() - 4.0 * PI).abs() <= 1e-12 * 4.0 * PI);
    }

    #[test]
    fn no_centre_at_origin() {
        let m = build_disk_mesh(1.0f64, 5, 6).unwrap();
        let rmin = m.cell_centers.iter().map(|c| c.0).fold(f64::MAX, f64::min);
        assert!((rmin - 0.1).abs() < 1e-15);
    }

    #[test]
    fn boundary_faces_on_outer_ring() {
        let m = build_disk_mesh(1.0f64, 3, 5).unwrap();
        let mut seen = vec![0; m.n_cells()];
        for f in &m.boundary_faces {
            assert!(f.cell >= 2 * 5);
            seen[f.cell] += 1;
        }
        assert!(seen[10..].iter().all(|&c| c == 1));
    }

    #[test]
    fn degenerate_meshes_rejected() {
        assert!(build_disk_mesh(1.0f64, 1, 8).is_err());
        assert!(build_disk_mesh(1.0f64, 4, 3).is_err());
        assert!(build_disk_mesh(0.0, 4, 8).is_err());
        assert!(build_surface_mesh(1.0f64, 3).is_err());
    }

    #[test]
    fn surface_weights() {
        let s = build_surface_mesh(1.0f64, 8).unwrap();
        assert!((s.total_length() - 2.0 * PI).abs() <= 1e-12 * 2.0 * PI);
        let s = build_surface_mesh(3.0, 12).unwrap();
        for &w in &s.node_weights {
            assert!((w - PI / 2.0).abs() < 1e-14);
        }
        assert!(s.node_angles.windows(2).all(|w| w[0] < w[1]));
        assert!(s.node_angles[0] >= 0.0 && *s.node_angles.last().unwrap() < 2.0 * PI);
    }

    #[test]
    fn trace_map_pairs_and_weights() {
        let b = build_disk_mesh(1.0f64, 4, 8).unwrap();
        let s = build_surface_mesh(1.0f64, 8).unwrap();
        let t = build_trace_map(&b, &s).unwrap();
        assert_eq!(t.pairs.len(), 8);
        for (face, st) in t.stencils.iter().enumerate() {
            assert!((st.w_outer + st.w_inner - 1.0).abs() < 1e-15);
            let node = t.node_of_face(face);
            assert_eq!(t.face_of_node(node), face);
            let dth = (b.boundary_faces[face].normal_angle - s.node_angles[node]).abs();
            assert!(dth <= b.dtheta / 2.0);
        }
    }

    #[test]
    fn trace_reproduces_constant_and_linear() {
        let b = build_disk_mesh(1.0f64, 4, 8).unwrap();
        let s = build_surface_mesh(1.0f64, 8).unwrap();
        let t = build_trace_map(&b, &s).unwrap();
        let c = vec![3.25; b.n_cells()];
        assert!(t.trace(&c).iter().all(|&x| x == 3.25));
        let lin = b.sample(|r: f64, _| r);
        for x in t.trace(&lin) {
            assert!((x - 1.0).abs() < 1e-15);
        }
        for face in 0..8 {
            assert!((t.normal_derivative_at(&lin, face) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn trace_map_rejects_mismatch() {
        let b = build_disk_mesh(1.0f64, 4, 8).unwrap();
        assert!(build_trace_map(&b, &build_surface_mesh(1.0f64, 16).unwrap()).is_err());
        assert!(build_trace_map(&b, &build_surface_mesh(2.0f64, 8).unwrap()).is_err());
    }

    #[test]
    fn interpolation_is_exact_on_centres() {
        let b = build_disk_mesh(1.0f64, 6, 12).unwrap();
        let f = b.sample(|r: f64, th: f64| r * th.cos() + 2.0);
        for (cell, &(r, th)) in b.cell_centers.iter().enumerate() {
            assert!((b.interpolate(&f, r, th) - f[cell]).abs() < 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let m = build_disk_mesh(1.0f32, 8, 16).unwrap();
        let area = m.total_area();
        assert!((area - std::f32::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn summary_serializes() {
        let b = build_disk_mesh(1.0f64, 4, 8).unwrap();
        let s = build_surface_mesh(1.0f64, 8).unwrap();
        let json = serde_json::to_value(b.summary(Some(&s))).unwrap();
        assert_eq!(json["n_cells"], 32);
    }
}
