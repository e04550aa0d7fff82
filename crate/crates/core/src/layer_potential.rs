//! Single-layer heat potentials for the pure Neumann problem on the disk
//!
//! ```text
//! φ_t = d Δφ in Ω,   d ∂φ/∂η = γ on the circle,   φ(·, 0) = 0
//! ```
//!
//! Time is rescaled by `d`, so the kernels below always see unit
//! diffusivity. With `W(τ, x, Q) = exp(−|x−Q|²/4τ)/τ` and the density `g`,
//! the potential is `φ(x,t) = ∫₀ᵗ∫_M W(t−s, x, Q) g(Q, s) dσ ds`. Taking the
//! interior normal derivative gives the second-kind equation
//!
//! ```text
//! (c I + J) g = 2γ,   J g(Q,t) = ∫₀ᵗ∫_M ⟨y−Q, η_Q⟩ W(t−s, y, Q)/(t−s) g(y,s) dσ ds
//! ```
//!
//! with η the outward normal and `c` the interior jump constant of `2·W`.
//! `c` is measured by [`calibrate_jump`] rather than hard-coded.
//!
//! Discretization: the density is piecewise constant on a uniform time grid
//! and trigonometric in space on the surface nodes. On the circle every block
//! is circulant, so `J` is diagonal in the discrete Fourier basis and each
//! mode is a lower-triangular Toeplitz system solved by forward substitution.
//! The chord identity `⟨y−Q, η_Q⟩ = −|y−Q|²/2R` turns the time integral of
//! the kernel into a closed form, which removes the weak singularity of the
//! same-slab block.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{build_disk_mesh, BulkMesh, SurfaceMesh};
use crate::operators::{assemble_bulk_laplacian, solve_shifted, FluxInjection};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatKernelParams {
    pub dimension: usize,
    pub diffusivity: f64,
}

impl Default for HeatKernelParams {
    fn default() -> Self {
        HeatKernelParams { dimension: 2, diffusivity: 1.0 }
    }
}

impl HeatKernelParams {
    pub fn validate(&self) -> Result<()> {
        if self.dimension != 2 {
            return Err(Error::Precondition(format!(
                "layer potentials are implemented for dimension 2 only, got {}",
                self.dimension
            )));
        }
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return Err(Error::Precondition(format!("diffusivity must be positive, got {}", self.diffusivity)));
        }
        Ok(())
    }
}

/// Uniform grid `t_k = k·dt`, `k = 0..=steps`. Slab `a` is `[t_a, t_{a+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid<T> {
    pub dt: T,
    pub steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_end: T, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_end > T::zero()) || !t_end.is_finite() {
            return Err(Error::Precondition(format!(
                "time grid needs t_end > 0 and at least one step, got t_end = {t_end}, steps = {steps}"
            )));
        }
        Ok(TimeGrid { dt: t_end / T::from_usize_lossy(steps), steps })
    }

    pub fn t_end(&self) -> T {
        self.dt * T::from_usize_lossy(self.steps)
    }

    /// Collocation time of slab `a`: its right end.
    pub fn collocation(&self, a: usize) -> T {
        self.dt * T::from_usize_lossy(a + 1)
    }
}

/// `W(τ, x, Q)` for the plane.
pub fn eval_w<T: Real>(x: (T, T), q: (T, T), tau: T) -> Result<T> {
    if !(tau > T::zero()) {
        return Err(Error::Domain(format!("heat kernel needs elapsed time > 0, got {tau}")));
    }
    let d2 = (x.0 - q.0).powi(2) + (x.1 - q.1).powi(2);
    Ok((-d2 / (T::lit(4.0) * tau)).exp() / tau)
}

/// `⟨y−Q, η_Q⟩ + |y−Q|²/2R` for boundary points at angles `theta_y`,
/// `theta_q`. Zero up to rounding on any circle.
pub fn chord_identity_defect<T: Real>(radius: T, theta_y: T, theta_q: T) -> T {
    let (yx, yy) = (radius * theta_y.cos(), radius * theta_y.sin());
    let (qx, qy) = (radius * theta_q.cos(), radius * theta_q.sin());
    let (dx, dy) = (yx - qx, yy - qy);
    dx * theta_q.cos() + dy * theta_q.sin() + (dx * dx + dy * dy) / (T::lit(2.0) * radius)
}

/// Exponential integral `E1(x) = ∫ₓ^∞ e^{−s}/s ds` for `x > 0`; `+∞` at 0.
pub fn exp_integral_e1<T: Real>(x: T) -> T {
    if x <= T::zero() {
        return T::infinity();
    }
    if x > T::lit(700.0) {
        return T::zero();
    }
    let eps = T::epsilon();
    if x <= T::one() {
        // −γ − ln x − Σ (−x)^k / (k·k!)
        let euler = T::lit(0.577_215_664_901_532_9);
        let mut sum = T::zero();
        let mut term = T::one();
        for k in 1..200 {
            let kf = T::from_usize_lossy(k);
            term = term * (-x) / kf;
            let add = term / kf;
            sum += add;
            if add.abs() < eps * sum.abs().max(eps) {
                break;
            }
        }
        -euler - x.ln() - sum
    } else {
        // Modified Lentz on the continued fraction e^{−x}/(x+1−1/(x+3−4/(x+5−…))).
        let tiny = T::min_positive_value() / eps;
        let mut b = x + T::one();
        let mut c = T::one() / tiny;
        let mut d = T::one() / b;
        let mut h = d;
        for i in 1..500 {
            let fi = T::from_usize_lossy(i);
            let an = -fi * fi;
            b += T::lit(2.0);
            d = T::one() / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - T::one()).abs() <= eps {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
fn gauss_legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    // Newton on P_n, standard initial guesses.
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        out.push((z, 2.0 / ((1.0 - z * z) * dp * dp)));
    }
    out
}

/// Interior jump constant of the normal derivative of `2·∫∫W g` for `g ≡ 1`
/// on a window of length `window`, measured on a flat boundary at depth
/// `depth`. In the limit `depth → 0` this is the constant `c` of the
/// boundary equation.
///
/// With `y = depth·tan φ` the flat-line integral of the time-integrated
/// normal derivative becomes `∫_{−π/2}^{π/2} 2 exp(−depth² sec²φ / 4·window) dφ`.
/// The integrand is even and collapses near `±π/2` on a scale set by the
/// depth, so the half range is split into panels graded toward the end.
pub fn flat_jump(window: f64, depth: f64) -> Result<f64> {
    if !(window > 0.0 && depth > 0.0) {
        return Err(Error::Calibration(format!("flat jump needs window, depth > 0, got {window}, {depth}")));
    }
    let nodes = gauss_legendre_nodes(16);
    let end = std::f64::consts::FRAC_PI_2;
    let a = depth * depth / (4.0 * window);
    let mut half = 0.0;
    for k in 0..60 {
        let lo = end * (1.0 - 0.5f64.powi(k));
        let hi = end * (1.0 - 0.5f64.powi(k + 1));
        let (mid, rad) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for &(z, w) in &nodes {
            let c = (mid + rad * z).cos();
            half += rad * w * 2.0 * (-a / (c * c)).exp();
        }
    }
    // The interior normal derivative tends to the flat integral; the
    // boundary equation carries a factor of 2.
    let jump = 2.0 * (2.0 * half);
    if !jump.is_finite() || jump <= 0.0 {
        return Err(Error::Calibration(format!("flat jump evaluated to {jump}")));
    }
    Ok(jump)
}

/// Measures `c` at a sequence of shrinking depths and extrapolates the
/// linear-in-depth defect to zero.
pub fn calibrate_jump(window: f64) -> Result<f64> {
    let s = window.sqrt();
    let (d1, d2) = (1e-4 * s, 5e-5 * s);
    let (j1, j2) = (flat_jump(window, d1)?, flat_jump(window, d2)?);
    let c = 2.0 * j2 - j1;
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Calibration(format!("jump extrapolation failed: {j1}, {j2}")));
    }
    Ok(c)
}

/// The discretized `J` together with the jump constant.
#[derive(Debug, Clone)]
pub struct VolterraOperator<T> {
    pub radius: T,
    pub n_theta: usize,
    /// Rescaled by the diffusivity.
    pub time: TimeGrid<T>,
    pub params: HeatKernelParams,
    pub jump: T,
    /// `symbols[lag][mode]`: eigenvalue of the circulant block `J_{a, a−lag}`
    /// on Fourier mode `mode` (FFT ordering).
    symbols: Vec<Vec<T>>,
}

fn time_integrated_kernel<T: Real>(radius: T, rho2: T, tau_lo: T, tau_hi: T) -> T {
    // ∫ −ρ²/(2R) e^{−ρ²/4τ}/τ² dτ = −(2/R) e^{−ρ²/4τ} evaluated between the ends.
    let four = T::lit(4.0);
    let at = |tau: T| if tau > T::zero() { (-rho2 / (four * tau)).exp() } else { T::zero() };
    -(T::lit(2.0) / radius) * (at(tau_hi) - at(tau_lo))
}

/// Assembles the lag blocks of `J` on the surface nodes over `time`
/// (physical time; rescaled internally by the diffusivity).
pub fn assemble_j<T: Real>(
    surface: &SurfaceMesh<T>,
    time: TimeGrid<T>,
    params: HeatKernelParams,
) -> Result<VolterraOperator<T>> {
    params.validate()?;
    let n = surface.n_theta;
    if n < 16 {
        return Err(Error::Precondition(format!("layer potential needs n_theta >= 16, got {n}")));
    }
    let radius = surface.radius;
    let scaled = TimeGrid { dt: time.dt * T::lit(params.diffusivity), steps: time.steps };
    // Resolve the narrowest Gaussian, of width ~2√dt, with several samples.
    let width = T::lit(2.0) * scaled.dt.sqrt() / radius;
    let needed = (T::TAU() / width * T::lit(8.0)).ceil().as_f64() as usize;
    let fine = n * (16usize).max(needed.div_ceil(n)).min(1024);
    let dpsi = T::TAU() / T::from_usize_lossy(fine);
    let rho2: Vec<T> = (0..fine)
        .map(|m| {
            let s = T::lit(2.0) * radius * (dpsi * T::from_usize_lossy(m) * T::lit(0.5)).sin();
            s * s
        })
        .collect();
    let fft = FftPlanner::<T>::new().plan_fft_forward(fine);
    let symbols: Vec<Vec<T>> = (0..time.steps)
        .into_par_iter()
        .map(|lag| {
            let lo = scaled.dt * T::from_usize_lossy(lag);
            let hi = scaled.dt * T::from_usize_lossy(lag + 1);
            let mut buf: Vec<Complex<T>> = rho2
                .iter()
                .map(|&r2| Complex::new(time_integrated_kernel(radius, r2, lo, hi), T::zero()))
                .collect();
            fft.process(&mut buf);
            let scale = radius * dpsi;
            (0..n)
                .map(|k| {
                    let kappa = mode_number(k, n);
                    let idx = kappa.rem_euclid(fine as i64) as usize;
                    buf[idx].re * scale
                })
                .collect()
        })
        .collect();
    for (lag, s) in symbols.iter().enumerate() {
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::Quadrature(format!("non-finite kernel block at lag {lag}")));
        }
    }
    let jump = T::lit(calibrate_jump(scaled.dt.as_f64())?);
    Ok(VolterraOperator { radius, n_theta: n, time: scaled, params, jump, symbols })
}

/// Signed mode number of FFT index `k` for length `n`.
fn mode_number(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn forward_fft<T: Real>(rows: &[Vec<T>], n: usize) -> Vec<Vec<Complex<T>>> {
    let fft = FftPlanner::<T>::new().plan_fft_forward(n);
    rows.iter()
        .map(|row| {
            let mut buf: Vec<Complex<T>> = row.iter().map(|&x| Complex::new(x, T::zero())).collect();
            fft.process(&mut buf);
            buf
        })
        .collect()
}

fn inverse_fft<T: Real>(rows: &[Vec<Complex<T>>], n: usize) -> Vec<Vec<T>> {
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(n);
    let inv_n = T::one() / T::from_usize_lossy(n);
    rows.iter()
        .map(|row| {
            let mut buf = row.clone();
            ifft.process(&mut buf);
            buf.iter().map(|c| c.re * inv_n).collect()
        })
        .collect()
}

impl<T: Real> VolterraOperator<T> {
    pub fn symbol(&self, lag: usize, mode: usize) -> T {
        self.symbols[lag][mode]
    }

    fn check_shape(&self, field: &[Vec<T>]) -> Result<()> {
        if field.len() != self.time.steps || field.iter().any(|r| r.len() != self.n_theta) {
            return Err(Error::Precondition(format!(
                "space-time field must be {} slabs × {} nodes",
                self.time.steps, self.n_theta
            )));
        }
        if field.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("space-time field has non-finite entries".into()));
        }
        Ok(())
    }

    /// `J g` at the collocation times, without the jump term.
    pub fn apply(&self, density: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        self.check_shape(density)?;
        let n = self.n_theta;
        let hat = forward_fft(density, n);
        let out: Vec<Vec<Complex<T>>> = (0..self.time.steps)
            .map(|a| {
                (0..n)
                    .map(|k| {
                        let mut acc = Complex::new(T::zero(), T::zero());
                        for b in 0..=a {
                            acc += hat[b][k] * self.symbols[a - b][k];
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(inverse_fft(&out, n))
    }

    /// Operator 2-norm of `J` on the grid `L²` norm. Each Fourier mode is a
    /// lower-triangular Toeplitz matrix; the norm is the largest of theirs.
    pub fn operator_norm(&self, iterations: usize) -> T {
        let steps = self.time.steps;
        (0..self.n_theta)
            .into_par_iter()
            .map(|k| {
                let col: Vec<T> = self.symbols.iter().map(|s| s[k]).collect();
                let mut x = vec![T::one(); steps];
                let mut norm = T::zero();
                for _ in 0..iterations {
                    let mut y = vec![T::zero(); steps];
                    for a in 0..steps {
                        for b in 0..=a {
                            y[a] += col[a - b] * x[b];
                        }
                    }
                    let mut z = vec![T::zero(); steps];
                    for b in 0..steps {
                        for a in b..steps {
                            z[b] += col[a - b] * y[a];
                        }
                    }
                    let zn = z.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
                    if zn == T::zero() {
                        return T::zero();
                    }
                    norm = zn.sqrt();
                    x = z.into_iter().map(|v| v / zn).collect();
                }
                norm
            })
            .reduce(T::zero, |a, b| a.max(b))
    }

    /// Solves `(c I + J) g = 2γ/d` slab by slab. `gamma[a]` holds the data at
    /// the collocation time of slab `a`.
    pub fn solve(&self, gamma: &[Vec<T>]) -> Result<PotentialSolution<T>> {
        self.check_shape(gamma)?;
        let n = self.n_theta;
        let steps = self.time.steps;
        let diag: Vec<T> = (0..n).map(|k| self.jump + self.symbols[0][k]).collect();
        let min_diag = diag.iter().fold(T::infinity(), |m, d| m.min(d.abs()));
        if !(min_diag > T::lit(1e-10) * self.jump.abs()) {
            return Err(Error::Calibration(format!(
                "same-slab block is singular (smallest |c + λ| = {min_diag}); the jump constant is wrong"
            )));
        }
        let two_over_d = T::lit(2.0 / self.params.diffusivity);
        let rhs = forward_fft(gamma, n);
        // Independent per mode; forward substitution in time within a mode.
        let per_mode: Vec<Vec<Complex<T>>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let mut col: Vec<Complex<T>> = Vec::with_capacity(steps);
                for a in 0..steps {
                    let mut acc = rhs[a][k] * two_over_d;
                    for b in 0..a {
                        acc -= col[b] * self.symbols[a - b][k];
                    }
                    col.push(acc / diag[k]);
                }
                col
            })
            .collect();
        let hat: Vec<Vec<Complex<T>>> = (0..steps).map(|a| (0..n).map(|k| per_mode[k][a]).collect()).collect();
        let density = inverse_fft(&hat, n);
        Ok(PotentialSolution::new(self.radius, self.time, self.params, density))
    }
}

/// Assembles `J` and solves for the density.
pub fn solve_neumann<T: Real>(
    gamma: &[Vec<T>],
    surface: &SurfaceMesh<T>,
    time: TimeGrid<T>,
    params: HeatKernelParams,
) -> Result<PotentialSolution<T>> {
    assemble_j(surface, time, params)?.solve(gamma)
}

/// Density plus an evaluator for `φ`.
#[derive(Debug, Clone)]
pub struct PotentialSolution<T> {
    pub radius: T,
    /// Rescaled time grid.
    pub time: TimeGrid<T>,
    pub params: HeatKernelParams,
    /// `density[slab][node]`.
    pub density: Vec<Vec<T>>,
    /// Trigonometric upsampling of each slab onto `fine_nodes` points.
    fine: Vec<Vec<T>>,
    fine_nodes: usize,
}

impl<T: Real> PotentialSolution<T> {
    fn new(radius: T, time: TimeGrid<T>, params: HeatKernelParams, density: Vec<Vec<T>>) -> Self {
        let n = density.first().map_or(0, |r| r.len());
        let fine_nodes = n * 16usize.max(4096usize.div_ceil(n.max(1)));
        let fine = upsample(&density, n, fine_nodes);
        PotentialSolution { radius, time, params, density, fine, fine_nodes }
    }

    pub fn n_theta(&self) -> usize {
        self.density.first().map_or(0, |r| r.len())
    }

    /// Physical end time.
    pub fn t_end(&self) -> T {
        self.time.t_end() / T::lit(self.params.diffusivity)
    }

    /// `φ(x, t)` at an interior point and physical time `t ∈ [0, t_end]`.
    pub fn evaluate(&self, x: (T, T), t: T) -> Result<T> {
        let r = (x.0 * x.0 + x.1 * x.1).sqrt();
        if !(r < self.radius) {
            return Err(Error::Domain(format!("evaluation point at radius {r} is not interior")));
        }
        let d = T::lit(self.params.diffusivity);
        let t_end = self.t_end();
        if t < T::zero() || t > t_end * (T::one() + T::lit(1e-12)) {
            return Err(Error::Domain(format!("evaluation time {t} outside [0, {t_end}]")));
        }
        let s = t * d;
        let dt = self.time.dt;
        let dpsi = T::TAU() / T::from_usize_lossy(self.fine_nodes);
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        // Slabs starting strictly before s contribute.
        let mut slabs = 0;
        while slabs < self.time.steps && dt * T::from_usize_lossy(slabs) < s * (T::one() - T::lit(1e-12)) {
            slabs += 1;
        }
        let mut total = T::zero();
        for m in 0..self.fine_nodes {
            let psi = (T::from_usize_lossy(m) + half) * dpsi;
            let (qx, qy) = (self.radius * psi.cos(), self.radius * psi.sin());
            let c = ((x.0 - qx).powi(2) + (x.1 - qy).powi(2)) * quarter;
            let e1_at = |tau: T| if tau > T::zero() { exp_integral_e1(c / tau) } else { T::zero() };
            let mut upper = e1_at(s);
            let mut acc = T::zero();
            for b in 0..slabs {
                let lo = s - dt * T::from_usize_lossy(b + 1);
                let lower = e1_at(lo);
                acc += self.fine[b][m] * (upper - lower);
                upper = lower;
            }
            total += acc;
        }
        // φ in rescaled time; W carries 1/τ, so no extra factor of d.
        Ok(total * self.radius * dpsi)
    }

    pub fn evaluate_many(&self, points: &[((T, T), T)]) -> Result<Vec<T>> {
        points.par_iter().map(|&(x, t)| self.evaluate(x, t)).collect()
    }
}

fn upsample<T: Real>(density: &[Vec<T>], n: usize, fine: usize) -> Vec<Vec<T>> {
    if n == 0 {
        return vec![Vec::new(); density.len()];
    }
    let hat = forward_fft(density, n);
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(fine);
    let inv_n = T::one() / T::from_usize_lossy(n);
    // Coarse nodes at (j+½)2π/n, fine at (m+½)2π/M.
    let offset = T::PI() / T::from_usize_lossy(fine) - T::PI() / T::from_usize_lossy(n);
    hat.iter()
        .map(|row| {
            let mut buf = vec![Complex::new(T::zero(), T::zero()); fine];
            for (k, &c) in row.iter().enumerate() {
                let kappa = mode_number(k, n);
                let place = |buf: &mut Vec<Complex<T>>, kap: i64, val: Complex<T>| {
                    let phase = offset * T::lit(kap as f64);
                    buf[kap.rem_euclid(fine as i64) as usize] += val * Complex::new(phase.cos(), phase.sin());
                };
                if n % 2 == 0 && k == n / 2 {
                    // Split the Nyquist mode so the interpolant stays real.
                    let h = c * T::lit(0.5);
                    place(&mut buf, kappa, h);
                    place(&mut buf, -kappa, h);
                } else {
                    place(&mut buf, kappa, c);
                }
            }
            ifft.process(&mut buf);
            buf.iter().map(|z| z.re * inv_n).collect()
        })
        .collect()
}

/// `(Σ |γ|^p R dθ dt)^{1/p}` on the space-time grid (physical time).
pub fn space_time_lp<T: Real>(gamma: &[Vec<T>], radius: T, dt: T, p: f64) -> T {
    let n = gamma.first().map_or(1, |r| r.len().max(1));
    let w = radius * T::TAU() / T::from_usize_lossy(n) * dt;
    if p.is_infinite() {
        return gamma.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    }
    let pt = T::lit(p);
    let s = gamma.iter().flatten().fold(T::zero(), |acc, v| acc + v.abs().powf(pt) * w);
    s.powf(T::one() / pt)
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderEstimate {
    pub estimate: f64,
    pub exponent: f64,
    pub lp_exponent: f64,
    /// Whether `0 < a < 1 − (n+1)/p`. Inadmissible exponents are still
    /// evaluated so that sharpness can be probed.
    pub admissible: bool,
    /// Index of the pair attaining the maximum.
    pub worst_pair: Option<usize>,
}

pub type ProbePoint<T> = ((T, T), T);

/// `max |φ(x,T) − φ(y,τ)| / (|T−τ|^{1/2} + |x−y|)^a` over the pairs.
pub fn holder_probe<T: Real>(
    solution: &PotentialSolution<T>,
    p: f64,
    pairs: &[(ProbePoint<T>, ProbePoint<T>)],
    a: f64,
) -> Result<HolderEstimate> {
    let n = solution.params.dimension as f64;
    let admissible = a > 0.0 && a < 1.0 - (n + 1.0) / p;
    let mut points: Vec<ProbePoint<T>> = Vec::with_capacity(2 * pairs.len());
    for &(x, y) in pairs {
        points.push(x);
        points.push(y);
    }
    let values = solution.evaluate_many(&points)?;
    let mut best = 0.0f64;
    let mut worst = None;
    for (i, &((x, tx), (y, ty))) in pairs.iter().enumerate() {
        let dist = ((x.0 - y.0).powi(2) + (x.1 - y.1).powi(2)).sqrt();
        let scale = ((tx - ty).abs().sqrt() + dist).as_f64();
        if scale <= 0.0 {
            continue;
        }
        let q = (values[2 * i] - values[2 * i + 1]).abs().as_f64() / scale.powf(a);
        if q > best || worst.is_none() {
            best = best.max(q);
            worst = Some(i);
        }
    }
    Ok(HolderEstimate { estimate: best, exponent: a, lp_exponent: p, admissible, worst_pair: worst })
}

/// Probe pairs approaching the boundary point at angle `theta0` along its
/// normal ray at time `t`: consecutive points `r_j = R(1 − start·2^{−j})`,
/// `j = 0..=levels`.
pub fn normal_ray_pairs<T: Real>(
    radius: T,
    theta0: T,
    t: T,
    start: T,
    levels: usize,
) -> Vec<(ProbePoint<T>, ProbePoint<T>)> {
    let at = |j: usize| {
        let r = radius * (T::one() - start * T::lit(0.5f64.powi(j as i32)));
        ((r * theta0.cos(), r * theta0.sin()), t)
    };
    (0..levels).map(|j| (at(j), at(j + 1))).collect()
}

/// Named Neumann-data profiles `γ(θ, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaProfile {
    /// `cos θ` for `t > 0`.
    CosTheta,
    /// `cos 2θ · (1 − e^{−t/0.05})`.
    Cos2ThetaRamp,
    /// `0.5 + sin θ` for `t > 0`.
    OffsetSin,
    /// `(δ² + |T−t| + h²)^{−0.15}`, `δ` the arc distance to `θ = π` and `h`
    /// the node spacing, normalized to unit space-time `L⁸` norm.
    Singular,
}

impl GammaProfile {
    pub const ALL: [GammaProfile; 4] =
        [GammaProfile::CosTheta, GammaProfile::Cos2ThetaRamp, GammaProfile::OffsetSin, GammaProfile::Singular];

    pub fn name(&self) -> &'static str {
        match self {
            GammaProfile::CosTheta => "cos_theta",
            GammaProfile::Cos2ThetaRamp => "cos2_theta_ramp",
            GammaProfile::OffsetSin => "offset_sin",
            GammaProfile::Singular => "singular",
        }
    }

    /// Smooth profiles only; the singular profile depends on the grid.
    pub fn value(&self, theta: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            GammaProfile::CosTheta => theta.cos(),
            GammaProfile::Cos2ThetaRamp => (2.0 * theta).cos() * (1.0 - (-t / 0.05).exp()),
            GammaProfile::OffsetSin => 0.5 + theta.sin(),
            GammaProfile::Singular => f64::NAN,
        }
    }

    /// Samples at the collocation times, `samples[slab][node]`.
    pub fn sample<T: Real>(&self, surface: &SurfaceMesh<T>, time: TimeGrid<T>) -> Vec<Vec<T>> {
        let n = surface.n_theta;
        let t_end = time.t_end().as_f64();
        let h = surface.dtheta.as_f64() * surface.radius.as_f64();
        let mut out: Vec<Vec<f64>> = (0..time.steps)
            .map(|a| {
                let t = time.collocation(a).as_f64();
                surface
                    .node_angles
                    .iter()
                    .map(|th| {
                        let th = th.as_f64();
                        match self {
                            GammaProfile::Singular => {
                                let delta = (th - std::f64::consts::PI).abs() * surface.radius.as_f64();
                                (delta * delta + (t_end - t).abs() + h * h).powf(-0.15)
                            }
                            _ => self.value(th, t),
                        }
                    })
                    .collect()
            })
            .collect();
        if *self == GammaProfile::Singular {
            let as_t: Vec<Vec<T>> = out.iter().map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect();
            let norm = space_time_lp(&as_t, surface.radius, time.dt, 8.0).as_f64();
            out.iter_mut().flatten().for_each(|v| *v /= norm);
        }
        debug_assert!(out.iter().all(|r| r.len() == n));
        out.into_iter().map(|r| r.into_iter().map(T::lit).collect()).collect()
    }
}

/// Backward-Euler finite-volume solution of the same Neumann problem, used
/// as the reference for the potential. Returns the cell field at each of
/// `times`, which must be sorted and lie on the `dt` grid.
pub fn fv_neumann_reference(
    radius: f64,
    n_r: usize,
    n_theta: usize,
    diffusivity: f64,
    dt: f64,
    profile: GammaProfile,
    times: &[f64],
) -> Result<(BulkMesh<f64>, Vec<Vec<f64>>)> {
    if profile == GammaProfile::Singular {
        return Err(Error::Precondition("the finite-volume reference takes smooth profiles only".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    let mesh = build_disk_mesh(radius, n_r, n_theta)?;
    let op = assemble_bulk_laplacian(&mesh, diffusivity)?;
    let inj = FluxInjection::new(&mesh);
    let angles: Vec<f64> = mesh.boundary_faces.iter().map(|f| f.normal_angle).collect();
    let mut u = vec![0.0; mesh.n_cells()];
    let mut next = u.clone();
    let mut out = Vec::with_capacity(times.len());
    let mut step = 0usize;
    for &target in times {
        let k = (target / dt).round() as usize;
        if ((k as f64) * dt - target).abs() > 1e-9 * target.max(dt) || k < step {
            return Err(Error::Precondition(format!("snapshot time {target} is not on the dt grid or not sorted")));
        }
        while step < k {
            let t_new = (step + 1) as f64 * dt;
            let mut rhs: Vec<f64> = u.iter().zip(&op.mass).map(|(&x, &m)| x * m).collect();
            for ((&cell, &len), &ang) in inj.targets.iter().zip(&inj.lengths).zip(&angles) {
                rhs[cell] += dt * profile.value(ang, t_new) * len;
            }
            next.copy_from_slice(&u);
            solve_shifted(&op, dt, &rhs, &mut next, 1e-12, 20_000)?;
            std::mem::swap(&mut u, &mut next);
            step += 1;
        }
        out.push(u.clone());
    }
    Ok((mesh, out))
}
