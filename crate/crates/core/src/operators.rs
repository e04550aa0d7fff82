//! Discrete Laplacians, boundary flux injection and the SPD solve used by
//! the implicit diffusion step.
//!
//! Both Laplacians are stored as `L = M⁻¹K` with `K` the symmetric
//! two-point-flux stiffness (diffusivity included) and `M` the lumped
//! mass (cell areas or node weights). A constant lies in the kernel of `K`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{BulkMesh, SurfaceMesh};
use crate::scalar::{dot, Real};

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    pub symmetric: bool,
}

impl<T: Real> SparseOperator<T> {
    /// Builds from triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, T)>, symmetric: bool) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *vals.last_mut().expect("nonempty") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseOperator { dim, row_ptr, cols, vals, symmetric }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        for (row, out) in y.iter_mut().enumerate().take(self.dim) {
            let mut acc = T::zero();
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    pub fn apply_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        self.apply(x, &mut y);
        y
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(pos) => self.vals[range.start + pos],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.dim)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1]).fold(T::zero(), |acc, k| acc + self.vals[k])
            })
            .collect()
    }

    /// `max |A − Aᵀ|` over stored entries.
    pub fn max_asymmetry(&self) -> T {
        self.entries()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(T::zero(), T::max)
    }

    /// Writes `row col value` lines after a `# dim nnz symmetric` header.
    pub fn write_coo<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# dim={} nnz={} symmetric={}", self.dim, self.nnz(), self.symmetric)?;
        for (r, c, v) in self.entries() {
            writeln!(out, "{r} {c} {:.17e}", v.as_f64())?;
        }
        Ok(())
    }

    pub fn to_coo_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_coo(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// `L = M⁻¹K` for one species.
#[derive(Debug, Clone)]
pub struct DiffusionOperator<T> {
    pub stiffness: SparseOperator<T>,
    pub mass: Vec<T>,
    pub diffusivity: T,
}

impl<T: Real> DiffusionOperator<T> {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    /// `out = L x`.
    pub fn apply(&self, x: &[T], out: &mut [T]) {
        self.stiffness.apply(x, out);
        for (o, &m) in out.iter_mut().zip(&self.mass) {
            *o /= m;
        }
    }

    pub fn apply_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim()];
        self.apply(x, &mut y);
        y
    }

    /// The explicit matrix `L`.
    pub fn to_operator(&self) -> SparseOperator<T> {
        let uniform = self.mass.windows(2).all(|w| w[0] == w[1]);
        let triplets = self
            .stiffness
            .entries()
            .map(|(r, c, v)| (r, c, v / self.mass[r]))
            .collect();
        SparseOperator::from_triplets(self.dim(), triplets, self.stiffness.symmetric && uniform)
    }
}

pub fn assemble_bulk_laplacian<T: Real>(mesh: &BulkMesh<T>, d: T) -> Result<DiffusionOperator<T>> {
    if !(d > T::zero()) {
        return Err(Error::Precondition(format!("bulk diffusivity must be positive, got {d}")));
    }
    let mut triplets = Vec::with_capacity(4 * mesh.interior_faces.len());
    for f in &mesh.interior_faces {
        let c = d * f.length / f.distance;
        triplets.push((f.a, f.a, -c));
        triplets.push((f.b, f.b, -c));
        triplets.push((f.a, f.b, c));
        triplets.push((f.b, f.a, c));
    }
    Ok(DiffusionOperator {
        stiffness: SparseOperator::from_triplets(mesh.n_cells(), triplets, true),
        mass: mesh.cell_areas.clone(),
        diffusivity: d,
    })
}

/// Periodic second difference scaled by `d̃/(R²Δθ²)`.
pub fn assemble_laplace_beltrami<T: Real>(surface: &SurfaceMesh<T>, d: T) -> Result<DiffusionOperator<T>> {
    if !(d > T::zero()) {
        return Err(Error::Precondition(format!("surface diffusivity must be positive, got {d}")));
    }
    let n = surface.n_theta;
    let c = d / (surface.radius * surface.dtheta);
    let mut triplets = Vec::with_capacity(4 * n);
    for j in 0..n {
        let next = (j + 1) % n;
        triplets.push((j, j, -c));
        triplets.push((next, next, -c));
        triplets.push((j, next, c));
        triplets.push((next, j, c));
    }
    Ok(DiffusionOperator {
        stiffness: SparseOperator::from_triplets(n, triplets, true),
        mass: surface.node_weights.clone(),
        diffusivity: d,
    })
}

/// Per boundary face: target cell and `length / area`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxInjection<T> {
    pub targets: Vec<usize>,
    pub scales: Vec<T>,
    pub lengths: Vec<T>,
}

impl<T: Real> FluxInjection<T> {
    pub fn new(mesh: &BulkMesh<T>) -> Self {
        let targets: Vec<usize> = mesh.boundary_faces.iter().map(|f| f.cell).collect();
        let lengths: Vec<T> = mesh.boundary_faces.iter().map(|f| f.length).collect();
        let scales = targets
            .iter()
            .zip(&lengths)
            .map(|(&c, &l)| l / mesh.cell_areas[c])
            .collect();
        FluxInjection { targets, scales, lengths }
    }

    /// `Σ_faces G·length`.
    pub fn total(&self, g_per_face: &[T]) -> T {
        dot(g_per_face, &self.lengths)
    }
}

/// Adds `G·length/area` to each paired boundary cell.
pub fn apply_flux<T: Real>(inj: &FluxInjection<T>, g_per_face: &[T], increment: &mut [T]) {
    for ((&cell, &scale), &g) in inj.targets.iter().zip(&inj.scales).zip(g_per_face) {
        increment[cell] += g * scale;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD (or consistent
/// semidefinite) system given by `apply`. Starts from the contents of `x`.
pub fn conjugate_gradient<T: Real>(
    apply: impl Fn(&[T], &mut [T]),
    diag: &[T],
    b: &[T],
    x: &mut [T],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        x.iter_mut().for_each(|xi| *xi = T::zero());
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![T::zero(); n];
    apply(x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<T> = r.iter().zip(diag).map(|(&ri, &di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let tol_t = T::lit(tol);
    for it in 0..=max_iter {
        let res = dot(&r, &r).sqrt() / b_norm;
        if !res.is_finite() {
            break;
        }
        if res <= tol_t {
            return Ok(SolveStats { iterations: it, relative_residual: res.as_f64() });
        }
        if it == max_iter {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDivergence {
        iterations: max_iter,
        residual: (dot(&r, &r).sqrt() / b_norm).as_f64(),
    })
}

/// Solves `(M − shift·K) x = rhs`, then corrects the constant mode so that
/// `Σ (M − shift·K) x = Σ rhs` holds to rounding. With `shift = 0` the
/// solve is the diagonal division.
pub fn solve_shifted<T: Real>(
    op: &DiffusionOperator<T>,
    shift: T,
    rhs: &[T],
    x: &mut [T],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    if shift == T::zero() {
        for ((xi, &bi), &mi) in x.iter_mut().zip(rhs).zip(&op.mass) {
            *xi = bi / mi;
        }
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let diag: Vec<T> = op
        .stiffness
        .diagonal()
        .iter()
        .zip(&op.mass)
        .map(|(&k, &m)| m - shift * k)
        .collect();
    let apply = |v: &[T], out: &mut [T]| {
        op.stiffness.apply(v, out);
        for ((o, &vi), &m) in out.iter_mut().zip(v).zip(&op.mass) {
            *o = m * vi - shift * *o;
        }
    };
    let stats = conjugate_gradient(&apply, &diag, rhs, x, tol, max_iter)?;
    // K·1 = 0, so adding c·1 changes the residual sum by c·Σm only.
    let mut ax = vec![T::zero(); x.len()];
    apply(x, &mut ax);
    let residual_sum = rhs.iter().zip(&ax).fold(T::zero(), |acc, (&b, &a)| acc + (b - a));
    let total_mass = op.mass.iter().fold(T::zero(), |acc, &m| acc + m);
    let c = residual_sum / total_mass;
    x.iter_mut().for_each(|xi| *xi += c);
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disk_mesh, build_surface_mesh};
    use std::f64::consts::PI;

    #[test]
    fn constants_in_kernel() {
        let m = build_disk_mesh(1.0f64, 8, 16).unwrap();
        let lap = assemble_bulk_laplacian(&m, 2.5).unwrap();
        let y = lap.apply_vec(&vec![1.0; m.n_cells()]);
        assert!(y.iter().all(|v| v.abs() <= 1e-12 * 2.5));
        let s = build_surface_mesh(1.0f64, 16).unwrap();
        let lb = assemble_laplace_beltrami(&s, 0.3).unwrap();
        assert!(lb.apply_vec(&vec![1.0; 16]).iter().all(|v| v.abs() <= 1e-12));
        assert!(lap.stiffness.row_sums().iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn bulk_global_conservation_and_green_identity() {
        let m = build_disk_mesh(1.0f64, 6, 12).unwrap();
        let lap = assemble_bulk_laplacian(&m, 1.0).unwrap();
        let inj = FluxInjection::new(&m);
        let u = m.sample(|r, th| (3.0 * r).sin() + r * r * (2.0 * th).cos());
        let lu = lap.apply_vec(&u);
        let total: f64 = lu.iter().zip(&m.cell_areas).map(|(a, b)| a * b).sum();
        assert!(total.abs() < 1e-13);
        let g: Vec<f64> = m.boundary_faces.iter().map(|f| 1.0 + f.normal_angle.sin()).collect();
        let mut inc = lu.clone();
        apply_flux(&inj, &g, &mut inc);
        let lhs: f64 = inc.iter().zip(&m.cell_areas).map(|(a, b)| a * b).sum();
        assert!((lhs - inj.total(&g)).abs() < 1e-13);
        assert!(lap.stiffness.max_asymmetry() == 0.0);
        assert!(inj.scales.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn laplace_beltrami_spectrum() {
        let s = build_surface_mesh(1.0f64, 64).unwrap();
        let lb = assemble_laplace_beltrami(&s, 1.0).unwrap();
        let op = lb.to_operator();
        assert!(op.symmetric);
        assert_eq!(op.max_asymmetry(), 0.0);
        let v = s.sample(f64::cos);
        let lv = lb.apply_vec(&v);
        let err = lv.iter().zip(&v).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        assert!(err <= 2e-3, "{err}");
        let dth = 2.0 * PI / 64.0;
        let lambda = -(2.0 / (dth * dth)) * (1.0 - dth.cos());
        for (a, b) in lv.iter().zip(&v) {
            assert!((a - lambda * b).abs() < 1e-10);
        }
        // Negative semidefinite: vᵀKv ≤ 0.
        let k = lb.stiffness.apply_vec(&v);
        assert!(dot(&v, &k) < 0.0);
    }

    #[test]
    fn laplace_beltrami_scales_with_radius_and_diffusivity() {
        let s = build_surface_mesh(2.0f64, 32).unwrap();
        let lb = assemble_laplace_beltrami(&s, 3.0).unwrap();
        let dth = 2.0 * PI / 32.0;
        let expect = 3.0 / (4.0 * dth * dth);
        assert!((lb.to_operator().get(0, 1) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn flux_totals() {
        let m = build_disk_mesh(1.0f64, 4, 8).unwrap();
        let inj = FluxInjection::new(&m);
        let mut inc = vec![0.0; m.n_cells()];
        apply_flux(&inj, &[0.0; 8], &mut inc);
        assert!(inc.iter().all(|&x| x == 0.0));
        assert!((inj.total(&[1.0; 8]) - 2.0 * PI).abs() < 1e-12);
        let cos: Vec<f64> = m.boundary_faces.iter().map(|f| f.normal_angle.cos()).collect();
        assert!(inj.total(&cos).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_diffusivity() {
        let m = build_disk_mesh(1.0f64, 4, 8).unwrap();
        assert!(assemble_bulk_laplacian(&m, 0.0).is_err());
        let s = build_surface_mesh(1.0f64, 8).unwrap();
        assert!(assemble_laplace_beltrami(&s, -1.0).is_err());
    }

    #[test]
    fn coo_export_round_trips() {
        let s = build_surface_mesh(1.0f64, 4).unwrap();
        let lb = assemble_laplace_beltrami(&s, 1.0).unwrap().to_operator();
        let text = lb.to_coo_string();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# dim=4 nnz=12 symmetric=true");
        let parsed: Vec<(usize, usize, f64)> = lines
            .map(|l| {
                let mut it = l.split_whitespace();
                (
                    it.next().unwrap().parse().unwrap(),
                    it.next().unwrap().parse().unwrap(),
                    it.next().unwrap().parse().unwrap(),
                )
            })
            .collect();
        assert_eq!(SparseOperator::from_triplets(4, parsed, true), lb);
    }

    /// Steady Neumann solve of `Δu = f` with exact boundary flux; returns
    /// the max error at cell centres after fixing the constant.
    fn manufactured_error(
        n_r: usize,
        exact: impl Fn(f64, f64) -> f64,
        source: impl Fn(f64, f64) -> f64,
        flux: impl Fn(f64) -> f64,
    ) -> f64 {
        let m = build_disk_mesh(1.0f64, n_r, 4 * n_r).unwrap();
        let lap = assemble_bulk_laplacian(&m, 1.0).unwrap();
        let inj = FluxInjection::new(&m);
        // −K u = −A f + len·G
        let mut rhs: Vec<f64> = m
            .cell_centers
            .iter()
            .zip(&m.cell_areas)
            .map(|(&(r, th), a)| -source(r, th) * a)
            .collect();
        for ((&cell, &len), f) in inj.targets.iter().zip(&inj.lengths).zip(&m.boundary_faces) {
            rhs[cell] += flux(f.normal_angle) * len;
        }
        // Point-sampled sources are only approximately compatible; project
        // onto the range of K (orthogonal to constants).
        let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
        rhs.iter_mut().for_each(|b| *b -= mean);
        let diag: Vec<f64> = lap.stiffness.diagonal().iter().map(|d| -d).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            lap.stiffness.apply(x, y);
            y.iter_mut().for_each(|v| *v = -*v);
        };
        let mut u = vec![0.0; m.n_cells()];
        conjugate_gradient(apply, &diag, &rhs, &mut u, 1e-13, 10_000).unwrap();
        let exact = m.sample(exact);
        let shift: f64 = exact
            .iter()
            .zip(&u)
            .zip(&m.cell_areas)
            .map(|((e, x), a)| (e - x) * a)
            .sum::<f64>()
            / m.total_area();
        u.iter().zip(&exact).map(|(x, e)| (x + shift - e).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn quadratic_radial_solution_is_reproduced() {
        for n in [8, 16, 32] {
            let err = manufactured_error(n, |r, _| 1.0 - r * r, |_, _| -4.0, |_| -2.0);
            assert!(err < 1e-11, "n_r={n}: {err}");
        }
    }

    #[test]
    fn manufactured_steady_problem_converges_at_second_order() {
        let errs: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| {
                manufactured_error(
                    n,
                    |r, th| r.powi(4) + r.powi(3) * th.cos(),
                    |r, th| 16.0 * r * r + 8.0 * r * th.cos(),
                    |th| 4.0 + 3.0 * th.cos(),
                )
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "errors {errs:?}");
        }
    }

    #[test]
    fn shifted_solve_conserves_mass_exactly() {
        let m = build_disk_mesh(1.0f64, 10, 20).unwrap();
        let lap = assemble_bulk_laplacian(&m, 1.0).unwrap();
        let u0 = m.sample(|r, th| 1.0 + r * th.cos());
        let rhs: Vec<f64> = u0.iter().zip(&m.cell_areas).map(|(u, a)| u * a).collect();
        let mut x = u0.clone();
        let stats = solve_shifted(&lap, 0.01, &rhs, &mut x, 1e-10, 1000).unwrap();
        assert!(stats.relative_residual <= 1e-10);
        let before: f64 = rhs.iter().sum();
        let after: f64 = x.iter().zip(&m.cell_areas).map(|(u, a)| u * a).sum();
        assert!((before - after).abs() < 1e-13 * before);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let m = build_disk_mesh(1.0f64, 10, 20).unwrap();
        let lap = assemble_bulk_laplacian(&m, 1.0).unwrap();
        let rhs = m.sample(|r, th| r * th.sin());
        let mut x = vec![0.0; m.n_cells()];
        let err = solve_shifted(&lap, 10.0, &rhs, &mut x, 1e-14, 2).unwrap_err();
        assert!(matches!(err, Error::SolverDivergence { .. }));
    }

    #[test]
    fn single_precision_operator() {
        let s = build_surface_mesh(1.0f32, 32).unwrap();
        let lb = assemble_laplace_beltrami(&s, 1.0f32).unwrap();
        let y = lb.apply_vec(&vec![1.0f32; 32]);
        assert!(y.iter().all(|v| v.abs() < 1e-4));
    }
}
