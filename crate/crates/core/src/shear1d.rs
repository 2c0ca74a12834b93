//! Unidirectional shear flow `v = (u(y, t), 0, 0)` between walls at `y = 0`
//! and `y = H`, with Navier slip on both walls and a constant body force.
//!
//! Velocities live on the `N + 1` nodes `y_j = j dy`, walls included. The
//! shear rate `g = u_y` and the stress `s12 = S^n(embed_shear(g))[0][1]` live
//! on the `N` cell midpoints. Each node owns a control volume (half a cell at
//! the walls) and the update is the finite-volume balance
//!
//! ```text
//! dy    u_j' = s_{j+1/2} - s_{j-1/2} + f dy             interior
//! dy/2  u_0' = s_{1/2} - alpha_lo u_0 + f dy / 2        y = 0
//! dy/2  u_N' = -alpha_hi u_N - s_{N-1/2} + f dy / 2     y = H
//! ```
//!
//! The wall rows impose the slip traction `s12 = alpha_lo u` at `y = 0` and
//! `s12 = -alpha_hi u` at `y = H`. Summation by parts gives the exact
//! discrete energy identity used by [`crate::diagnostics`].

use serde::{Deserialize, Serialize};

use crate::constitutive::{is_plug, reg_dissipation, reg_potential, reg_stress, FluidParams};
use crate::diagnostics::{lp_norm, EnergyBudget};
use crate::error::{Error, Result};
use crate::tensor3::Mat3;

/// Growth factor over the initial scale that counts as a blow-up.
pub const BLOWUP_FACTOR: f64 = 1e6;
/// Bisection steps for the wall shear rate.
pub const GHOST_BISECTIONS: usize = 60;

/// Velocity gradient of a unidirectional flow: only `B[0][1] = u_y`.
pub fn embed_shear(g: f64) -> Mat3 {
    let mut b = Mat3::ZERO;
    b[(0, 1)] = g;
    b
}

/// `(s12, s21)` of the regularized stress at shear rate `g`.
pub fn shear_stress(g: f64, f: &FluidParams) -> (f64, f64) {
    let s = reg_stress(&embed_shear(g), f);
    (s[(0, 1)], s[(1, 0)])
}

fn s12(g: f64, f: &FluidParams) -> f64 {
    reg_stress(&embed_shear(g), f)[(0, 1)]
}

/// Shear potential `Phi(g) = V^n(embed_shear(g))`, with `Phi' = s12`.
pub fn shear_potential(g: f64, f: &FluidParams) -> f64 {
    reg_potential(&embed_shear(g), f)
}

// On the embedding |B_s| = |B_a| = |g|/sqrt(2), so
// s12 = c |g|^(p-2) g + A |g|^(p-2) g / (B |g|^p + eps)^((p-1)/p).
fn shear_coefficients(f: &FluidParams) -> (f64, f64, f64) {
    let p = f.p();
    let k = 1.0 + f.nu() * f.nu();
    let half = 2.0_f64.powf(-(p - 2.0) / 2.0);
    let c = 0.5 * (2.0 * f.mu1() + f.mu2()) * half;
    let a = 0.5 * f.tau_hat() * k * half;
    let b = k * 2.0_f64.powf(-p / 2.0);
    (c, a, b)
}

/// `d s12 / d g`, strictly positive.
pub fn shear_stress_slope(g: f64, f: &FluidParams) -> f64 {
    let p = f.p();
    let (c, a, b) = shear_coefficients(f);
    let ag = g.abs();
    let gp2 = if p == 2.0 { 1.0 } else { ag.powf(p - 2.0) };
    let eps = f.eps_reg();
    let z = b * ag.powf(p) + eps;
    c * (p - 1.0) * gp2 + a * (p - 1.0) * eps * gp2 / z.powf((2.0 * p - 1.0) / p)
}

/// Lipschitz constant of `g -> s12` over `|g| <= g_max`.
pub fn shear_lipschitz(g_max: f64, f: &FluidParams) -> f64 {
    let p = f.p();
    let (c, a, b) = shear_coefficients(f);
    let power = c * (p - 1.0) * g_max.max(1.0).powf(p - 2.0);
    // Maximize w^e1 (1+w)^-e2 over w >= 0, with |g|^p = eps w / B.
    let e1 = (p - 2.0) / p;
    let e2 = (2.0 * p - 1.0) / p;
    let w = e1 / (e2 - e1);
    let m = if e1 == 0.0 { 1.0 } else { w.powf(e1) * (1.0 + w).powf(-e2) };
    let yield_part = a * (p - 1.0) * b.powf(-e1) * m * f.eps_reg().powf(-1.0 / p);
    power + yield_part
}

/// Saturation level of `|s12|` as `eps -> 0` and `g -> 0+`:
/// `tau_hat (1 + nu^2)^(1/p) / sqrt(2)`, equal to `tau_star` when `p = 2`, `nu = 1`.
pub fn shear_yield_stress(f: &FluidParams) -> f64 {
    f.tau_hat() * (1.0 + f.nu() * f.nu()).powf(1.0 / f.p()) / 2.0_f64.sqrt()
}

/// Shear rate below which the plug indicator `|B_nu|^2 <= sqrt(eps)` fires.
pub fn plug_shear_threshold(f: &FluidParams) -> f64 {
    let k = 1.0 + f.nu() * f.nu();
    2.0_f64.sqrt() * (f.eps_reg().sqrt() / k).powf(1.0 / f.p())
}

/// Solve `s12(g) = s` by bisection on the strictly increasing map.
pub fn invert_shear_stress(s: f64, f: &FluidParams, iterations: usize) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::BisectionFailure(format!("target stress {s} is not finite")));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let target = s.abs();
    let mut hi = 1.0_f64;
    let mut tries = 0;
    while s12(hi, f) < target {
        hi *= 2.0;
        tries += 1;
        if tries > 2000 || !hi.is_finite() {
            return Err(Error::BisectionFailure(format!("no bracket for stress {s}")));
        }
    }
    let mut lo = 0.0_f64;
    if s12(lo, f) > target {
        return Err(Error::BisectionFailure("shear stress not monotone at zero".into()));
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if s12(mid, f) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) * s.signum())
}

/// Stresses at the `N` cell midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearStress1D {
    pub s12: Vec<f64>,
    pub s21: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShearState1D {
    pub u: Vec<f64>,
    pub h: f64,
    pub n: usize,
    pub t: f64,
    pub params: FluidParams,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub force: f64,
    /// `max(1, max |u(0)|)`, the reference for blow-up detection.
    pub initial_scale: f64,
}

impl ShearState1D {
    pub fn new(
        params: FluidParams,
        h: f64,
        n: usize,
        alpha_lo: f64,
        alpha_hi: f64,
        force: f64,
        u: Vec<f64>,
    ) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config(format!("N must be at least 4, got {n}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Config(format!("H must be positive, got {h}")));
        }
        for (name, a) in [("alpha_lo", alpha_lo), ("alpha_hi", alpha_hi)] {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {a}")));
            }
        }
        if !force.is_finite() {
            return Err(Error::Config("force must be finite".into()));
        }
        if u.len() != n + 1 {
            return Err(Error::Config(format!("initial profile needs {} values, got {}", n + 1, u.len())));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("initial profile must be finite".into()));
        }
        let initial_scale = u.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        Ok(ShearState1D { u, h, n, t: 0.0, params, alpha_lo, alpha_hi, force, initial_scale })
    }

    pub fn at_rest(params: FluidParams, h: f64, n: usize, alpha_lo: f64, alpha_hi: f64, force: f64) -> Result<Self> {
        Self::new(params, h, n, alpha_lo, alpha_hi, force, vec![0.0; n + 1])
    }

    pub fn dy(&self) -> f64 {
        self.h / self.n as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.h * j as f64 / self.n as f64
    }

    /// Control-volume length of node `j`.
    pub fn node_mass(&self, j: usize) -> f64 {
        if j == 0 || j == self.n {
            0.5 * self.dy()
        } else {
            self.dy()
        }
    }

    pub fn max_abs_u(&self) -> f64 {
        self.u.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `u_y` at the cell midpoints.
    pub fn midpoint_gradients(&self) -> Vec<f64> {
        let dy = self.dy();
        self.u.windows(2).map(|w| (w[1] - w[0]) / dy).collect()
    }

    /// Net force on each control volume, `m_j u_j'`.
    fn nodal_forces(&self) -> Vec<f64> {
        let dy = self.dy();
        let s: Vec<f64> = self.midpoint_gradients().iter().map(|&g| s12(g, &self.params)).collect();
        let n = self.n;
        let mut r = vec![0.0; n + 1];
        r[0] = s[0] - self.alpha_lo * self.u[0] + self.force * 0.5 * dy;
        for j in 1..n {
            r[j] = s[j] - s[j - 1] + self.force * dy;
        }
        r[n] = -self.alpha_hi * self.u[n] - s[n - 1] + self.force * 0.5 * dy;
        r
    }

    /// `du/dt` at every node.
    pub fn rhs(&self) -> Vec<f64> {
        let mut r = self.nodal_forces();
        for (j, x) in r.iter_mut().enumerate() {
            *x /= self.node_mass(j);
        }
        r
    }

    fn check_growth(&self) -> Result<()> {
        let m = self.max_abs_u();
        let limit = BLOWUP_FACTOR * self.initial_scale;
        if !(m <= limit) {
            return Err(Error::UnstableStep { t: self.t, max_u: m, limit });
        }
        Ok(())
    }

    /// One explicit Euler step.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let r = self.rhs();
        for (u, du) in self.u.iter_mut().zip(&r) {
            *u += dt * du;
        }
        self.t += dt;
        self.check_growth()
    }

    /// Largest explicit step the scheme accepts for the current state:
    /// `1 / (4 L / dy^2 + 2 max(alpha) / dy)` with `L` the Lipschitz constant
    /// of the shear stress. Reduces to `0.25 dy^2 / L` without friction.
    pub fn stable_dt(&self) -> f64 {
        let g_max = self.midpoint_gradients().iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let l = shear_lipschitz(g_max, &self.params);
        let dy = self.dy();
        1.0 / (4.0 * l / (dy * dy) + 2.0 * self.alpha_lo.max(self.alpha_hi) / dy)
    }

    // Convex functional whose minimizer is the backward Euler update.
    fn implicit_merit(&self, u: &[f64], old: &[f64], dt: f64) -> f64 {
        let dy = self.dy();
        let n = self.n;
        let mut inertia = 0.0;
        let mut work = 0.0;
        for j in 0..=n {
            let m = self.node_mass(j);
            inertia += 0.5 * m * (u[j] - old[j]).powi(2);
            work += m * u[j];
        }
        let stored: f64 = u.windows(2).map(|w| shear_potential((w[1] - w[0]) / dy, &self.params)).sum::<f64>() * dy;
        let friction = 0.5 * self.alpha_lo * u[0] * u[0] + 0.5 * self.alpha_hi * u[n] * u[n];
        inertia + dt * (stored + friction - self.force * work)
    }

    fn implicit_residual(&self, u: &[f64], old: &[f64], dt: f64) -> f64 {
        let mut trial = self.clone();
        trial.u.copy_from_slice(u);
        let forces = trial.nodal_forces();
        (0..=self.n).fold(0.0_f64, |m, j| m.max((u[j] - old[j] - dt * forces[j] / self.node_mass(j)).abs()))
    }

    /// One backward Euler step solved by damped Newton iteration; returns the
    /// number of Newton iterations.
    pub fn step_implicit(&mut self, dt: f64) -> Result<usize> {
        const MAX_ITER: usize = 200;
        let old = self.u.clone();
        let n = self.n;
        let dy = self.dy();
        let scale = self.u.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        let mut last_res = f64::INFINITY;
        let mut prev_res = f64::INFINITY;
        for iter in 0..MAX_ITER {
            let forces = self.nodal_forces();
            let grad: Vec<f64> = (0..=n).map(|j| self.node_mass(j) * (self.u[j] - old[j]) - dt * forces[j]).collect();
            let res = (0..=n).fold(0.0_f64, |m, j| m.max((grad[j] / self.node_mass(j)).abs()));
            last_res = res;
            let umax = self.u.iter().fold(scale, |m, x| m.max(x.abs()));
            let k: Vec<f64> = self.midpoint_gradients().iter().map(|&g| shear_stress_slope(g, &self.params) / dy).collect();
            // Residual noise from rounding u, amplified by the stiffest row.
            let kmax = k.iter().fold(0.0_f64, |m, x| m.max(*x));
            let floor = 16.0 * f64::EPSILON * umax * (1.0 + dt * (8.0 * kmax + 4.0 * self.alpha_lo.max(self.alpha_hi)) / dy);
            let stalled = res > 0.5 * prev_res;
            prev_res = res;
            if res <= 1e-12 * umax || (stalled && res <= floor) {
                self.t += dt;
                self.check_growth()?;
                return Ok(iter);
            }
            // Symmetric tridiagonal Hessian.
            let mut diag: Vec<f64> = (0..=n).map(|j| self.node_mass(j)).collect();
            let mut off = vec![0.0; n];
            for c in 0..n {
                diag[c] += dt * k[c];
                diag[c + 1] += dt * k[c];
                off[c] = -dt * k[c];
            }
            diag[0] += dt * self.alpha_lo;
            diag[n] += dt * self.alpha_hi;
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let d = solve_symmetric_tridiagonal(&diag, &off, &rhs);

            let j0 = self.implicit_merit(&self.u, &old, dt);
            let slope: f64 = grad.iter().zip(&d).map(|(g, x)| g * x).sum();
            let mut lambda = 1.0;
            let mut trial = self.u.clone();
            for _ in 0..40 {
                for j in 0..=n {
                    trial[j] = self.u[j] + lambda * d[j];
                }
                // Near the solution merit differences drop below roundoff, so
                // a decrease of the residual also counts as progress.
                if self.implicit_merit(&trial, &old, dt) <= j0 + 1e-4 * lambda * slope
                    || self.implicit_residual(&trial, &old, dt) < (1.0 - 1e-4 * lambda) * res
                {
                    break;
                }
                lambda *= 0.5;
            }
            self.u = trial;
        }
        Err(Error::NewtonNoConvergence { iterations: MAX_ITER, residual: last_res })
    }

    /// Wall shear rates from the traction conditions `s12(0) = alpha_lo u_0`,
    /// `s12(H) = -alpha_hi u_N`.
    pub fn wall_gradients(&self) -> Result<(f64, f64)> {
        let lo = invert_shear_stress(self.alpha_lo * self.u[0], &self.params, GHOST_BISECTIONS)?;
        let hi = invert_shear_stress(-self.alpha_hi * self.u[self.n], &self.params, GHOST_BISECTIONS)?;
        Ok((lo, hi))
    }

    /// Shear rate at every node: centered differences inside, the traction
    /// condition on the walls.
    pub fn nodal_gradients(&self) -> Result<Vec<f64>> {
        let dy = self.dy();
        let (lo, hi) = self.wall_gradients()?;
        let mut g = vec![0.0; self.n + 1];
        g[0] = lo;
        g[self.n] = hi;
        for j in 1..self.n {
            g[j] = (self.u[j + 1] - self.u[j - 1]) / (2.0 * dy);
        }
        Ok(g)
    }

    /// Per-node `(y, u, s12, s21, plug)` for output.
    pub fn profile(&self) -> Result<Vec<ProfileRow>> {
        let g = self.nodal_gradients()?;
        Ok((0..=self.n)
            .map(|j| {
                let (a, b) = shear_stress(g[j], &self.params);
                ProfileRow {
                    t: self.t,
                    y: self.y(j),
                    u: self.u[j],
                    s12: a,
                    s21: b,
                    plug_flag: u8::from(is_plug(&embed_shear(g[j]), &self.params)),
                }
            })
            .collect())
    }
}

/// One line of `profile.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub t: f64,
    pub y: f64,
    pub u: f64,
    pub s12: f64,
    pub s21: f64,
    pub plug_flag: u8,
}

/// Midpoint stresses of `state`.
pub fn stress_profile(state: &ShearState1D) -> ShearStress1D {
    let (s12, s21) = state.midpoint_gradients().iter().map(|&g| shear_stress(g, &state.params)).unzip();
    ShearStress1D { s12, s21 }
}

/// Thomas algorithm for a symmetric positive definite tridiagonal system.
pub(crate) fn solve_symmetric_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = off[i] / m;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

impl EnergyBudget for ShearState1D {
    fn time(&self) -> f64 {
        self.t
    }

    fn kinetic_energy(&self) -> f64 {
        (0..=self.n).map(|j| 0.5 * self.node_mass(j) * self.u[j] * self.u[j]).sum()
    }

    fn dissipation_rates(&self) -> (f64, f64) {
        let dy = self.dy();
        let (mut power, mut total) = (0.0, 0.0);
        for g in self.midpoint_gradients() {
            let (pw, y) = reg_dissipation(&embed_shear(g), &self.params);
            power += pw * dy;
            total += (pw + y) * dy;
        }
        (power, total)
    }

    fn friction_rate(&self) -> f64 {
        self.alpha_lo * self.u[0] * self.u[0] + self.alpha_hi * self.u[self.n] * self.u[self.n]
    }

    fn work_rate(&self) -> f64 {
        self.force * (0..=self.n).map(|j| self.node_mass(j) * self.u[j]).sum::<f64>()
    }

    fn stress_norm_q(&self) -> f64 {
        let g = self.midpoint_gradients();
        let s: Vec<f64> = g.iter().map(|&g| reg_stress(&embed_shear(g), &self.params).norm()).collect();
        lp_norm(&s, &vec![self.dy(); s.len()], self.params.q())
    }

    fn grad_norm_p(&self) -> f64 {
        let g = self.midpoint_gradients();
        lp_norm(&g, &vec![self.dy(); g.len()], self.params.p())
    }
}

/// Steady profile at the `n + 1` nodes, computed without time stepping.
///
/// The steady balance makes `s12(y) = s0 - f y` affine with `s0 = alpha_lo u(0)`.
/// Pointwise inversion gives `u_y = g(s12)`, and the Legendre identity
/// `∫ g(s) ds = s g(s) - Phi(g(s))` integrates it exactly:
/// `u(y) = u(0) + (G(s0) - G(s12(y))) / f`. The slip velocity `u(0)` solves
/// the remaining wall condition, monotone in `u(0)`, by bisection.
pub fn steady_oracle(params: &FluidParams, force: f64, h: f64, alpha_lo: f64, alpha_hi: f64, n: usize) -> Result<Vec<f64>> {
    const ITER: usize = 200;
    if force == 0.0 {
        return Ok(vec![0.0; n + 1]);
    }
    if alpha_lo == 0.0 && alpha_hi == 0.0 {
        return Err(Error::Config("a forced channel needs friction on at least one wall to reach a steady state".into()));
    }
    let f = params;
    let legendre = |s: f64| -> Result<f64> {
        let g = invert_shear_stress(s, f, ITER)?;
        Ok(s * g - (shear_potential(g, f) - shear_potential(0.0, f)))
    };
    // u(H) - u(0) as a function of s0.
    let increment = |s0: f64| -> Result<f64> { Ok((legendre(s0)? - legendre(s0 - force * h)?) / force) };

    let u0 = if alpha_lo == 0.0 {
        // s0 = 0 and u(H) fixed by the upper wall.
        let du = increment(0.0)?;
        let s_top = -force * h;
        (s_top / -alpha_hi) - du
    } else {
        // R(u0) = -s(H) - alpha_hi u(H), decreasing in u0.
        let residual = |u0: f64| -> Result<f64> {
            let s0 = alpha_lo * u0;
            let uh = u0 + increment(s0)?;
            Ok(-(s0 - force * h) - alpha_hi * uh)
        };
        let bound = force.abs() * h / alpha_lo;
        let (mut lo, mut hi) = (-bound, bound);
        let (rlo, rhi) = (residual(lo)?, residual(hi)?);
        if rlo < 0.0 || rhi > 0.0 {
            return Err(Error::BisectionFailure(format!("slip velocity not bracketed: R = {rlo}, {rhi}")));
        }
        for _ in 0..ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if residual(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let s0 = alpha_lo * u0;
    let g0 = legendre(s0)?;
    (0..=n)
        .map(|j| {
            let y = h * j as f64 / n as f64;
            Ok(u0 + (g0 - legendre(s0 - force * y)?) / force)
        })
        .collect()
}

/// Half-width of the central plug of a nodal profile: the shear-rate
/// threshold of the plug indicator is located by linear interpolation of
/// `|u_y|` between midpoints on either side of the slowest-shearing cell.
pub fn plug_half_width(u: &[f64], h: f64, params: &FluidParams) -> Option<f64> {
    let n = u.len() - 1;
    let dy = h / n as f64;
    let g: Vec<f64> = u.windows(2).map(|w| ((w[1] - w[0]) / dy).abs()).collect();
    let thr = plug_shear_threshold(params);
    let (imin, gmin) = g.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc });
    if gmin > thr {
        return None;
    }
    let mid = |i: usize| (i as f64 + 0.5) * dy;
    let crossing = |a: usize, b: usize| -> f64 {
        // a is inside the plug, b outside; interpolate |g| = thr.
        let s = (thr - g[a]) / (g[b] - g[a]);
        mid(a) + s * (mid(b) - mid(a))
    };
    let mut left = imin;
    while left > 0 && g[left - 1] <= thr {
        left -= 1;
    }
    let y_lo = if left == 0 { 0.0 } else { crossing(left, left - 1) };
    let mut right = imin;
    while right + 1 < n && g[right + 1] <= thr {
        right += 1;
    }
    let y_hi = if right + 1 == n { h } else { crossing(right, right + 1) };
    Some(0.5 * (y_hi - y_lo))
}
