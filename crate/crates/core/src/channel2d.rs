//! Two-dimensional channel, periodic in `x`, Navier-slip walls at `y = 0, Ly`.
//!
//! Staggered layout on `Nx × Ny` cells:
//!
//! * `u` at `(i dx, j dy)`, `j = 0..=Ny`, wall rows included;
//! * `v` at `((i + 1/2) dx, j dy)`, zero on both wall rows;
//! * pressure and the velocity gradient `B` at cell centers.
//!
//! Wall rows carry half the mass of interior rows. The stress force is the
//! exact negative adjoint of the discrete gradient, so
//! `(w, F(w))_M = -Σ S(B) : B |cell| - friction` holds to roundoff, and on
//! `x`-independent data every operator collapses onto [`crate::shear1d`].
//! Incompressibility is enforced by the `M`-orthogonal projection
//! `w = w* - M^{-1} D^T λ` with `D M^{-1} D^T λ = D w*`, solved by conjugate
//! gradients in the zero-mean gauge. Advection is first-order upwind.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{is_plug, reg_dissipation, reg_stress, FluidParams};
use crate::diagnostics::{lp_norm, EnergyBudget};
use crate::error::{Error, Result};
use crate::shear1d::BLOWUP_FACTOR;
use crate::tensor3::Mat3;

/// Relative residual at which the pressure solve stops.
pub const CG_TOLERANCE: f64 = 1e-13;
/// Contractual relative residual; a solve that stalls above it is an error.
pub const CG_REQUIRED: f64 = 1e-10;
/// Largest admissible discrete divergence after projection.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MacState2D {
    /// `u[j * nx + i]`, `j = 0..=ny`.
    pub u: Vec<f64>,
    /// `v[j * nx + i]`, `j = 0..=ny`; rows `0` and `ny` stay zero.
    pub v: Vec<f64>,
    /// `pressure[j * nx + i]`, `j = 0..ny`, zero mean.
    pub pressure: Vec<f64>,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub params: FluidParams,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub force: [f64; 2],
    pub initial_scale: f64,
}

impl MacState2D {
    #[allow(clippy::too_many_arguments)]
    pub fn at_rest(
        params: FluidParams,
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
        alpha_lo: f64,
        alpha_hi: f64,
        force: [f64; 2],
    ) -> Result<Self> {
        if nx < 3 || ny < 4 {
            return Err(Error::Config(format!("grid needs Nx >= 3 and Ny >= 4, got {nx} x {ny}")));
        }
        if nx > 256 || ny > 256 {
            return Err(Error::Config(format!("grid {nx} x {ny} exceeds 256 x 256")));
        }
        for (name, l) in [("Lx", lx), ("Ly", ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {l}")));
            }
        }
        for (name, a) in [("alpha_lo", alpha_lo), ("alpha_hi", alpha_hi)] {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {a}")));
            }
        }
        if !(force[0].is_finite() && force[1].is_finite()) {
            return Err(Error::Config("force must be finite".into()));
        }
        let nodes = nx * (ny + 1);
        Ok(MacState2D {
            u: vec![0.0; nodes],
            v: vec![0.0; nodes],
            pressure: vec![0.0; nx * ny],
            lx,
            ly,
            nx,
            ny,
            t: 0.0,
            params,
            alpha_lo,
            alpha_hi,
            force,
            initial_scale: 1.0,
        })
    }

    /// Install a velocity field, zero the wall rows of `v` and reset the
    /// blow-up reference. The field is not projected.
    pub fn set_velocity(&mut self, u: Vec<f64>, v: Vec<f64>) -> Result<()> {
        let nodes = self.nx * (self.ny + 1);
        if u.len() != nodes || v.len() != nodes {
            return Err(Error::Config(format!("velocity arrays need {nodes} entries")));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Config("velocity must be finite".into()));
        }
        self.u = u;
        self.v = v;
        for i in 0..self.nx {
            self.v[i] = 0.0;
            self.v[self.ny * self.nx + i] = 0.0;
        }
        self.initial_scale = self.max_abs_velocity().max(1.0);
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    fn right(&self, i: usize) -> usize {
        if i + 1 == self.nx {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    fn left(&self, i: usize) -> usize {
        if i == 0 {
            self.nx - 1
        } else {
            i - 1
        }
    }

    /// Mass of a velocity node in row `j`.
    pub fn node_mass(&self, j: usize) -> f64 {
        let m = self.dx() * self.dy();
        if j == 0 || j == self.ny {
            0.5 * m
        } else {
            m
        }
    }

    pub fn max_abs_velocity(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `B` in cell `(i, j)`, `j = 0..ny`, from centered differences of the
    /// face velocities; the third row and column are zero.
    pub fn velocity_gradient(&self, i: usize, j: usize) -> Mat3 {
        let (dx, dy) = (self.dx(), self.dy());
        let (ip, im) = (self.right(i), self.left(i));
        let (lo, hi) = (j, j + 1);
        let u = |i: usize, j: usize| self.u[self.idx(i, j)];
        let v = |i: usize, j: usize| self.v[self.idx(i, j)];
        let ubar = |i: usize| 0.5 * (u(i, lo) + u(i, hi));
        let vbar = |i: usize| 0.5 * (v(i, lo) + v(i, hi));
        let mut b = Mat3::ZERO;
        b[(0, 0)] = (ubar(ip) - ubar(i)) / dx;
        b[(0, 1)] = 0.5 * ((u(i, hi) - u(i, lo)) + (u(ip, hi) - u(ip, lo))) / dy;
        b[(1, 0)] = (vbar(ip) - vbar(im)) / (2.0 * dx);
        b[(1, 1)] = (v(i, hi) - v(i, lo)) / dy;
        b
    }

    /// Cell gradients in row-major order.
    pub fn gradients(&self) -> Vec<Mat3> {
        (0..self.nx * self.ny)
            .into_par_iter()
            .map(|c| self.velocity_gradient(c % self.nx, c / self.nx))
            .collect()
    }

    pub fn cell_stresses(&self) -> Vec<Mat3> {
        self.gradients().par_iter().map(|b| reg_stress(b, &self.params)).collect()
    }

    /// Nodal accelerations `-M^{-1} G^T S` for prescribed cell stresses,
    /// without wall friction.
    pub fn stress_divergence_of(&self, stresses: &[Mat3]) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let (dx, dy) = (self.dx(), self.dy());
        let vol = dx * dy;
        let mut fu = vec![0.0; nx * (ny + 1)];
        let mut fv = vec![0.0; nx * (ny + 1)];
        for j in 0..ny {
            for i in 0..nx {
                let s = &stresses[j * nx + i];
                let (ip, im) = (self.right(i), self.left(i));
                let (lo, hi) = (j, j + 1);
                let ax = vol * s[(0, 0)] / (2.0 * dx);
                let ay = vol * s[(0, 1)] / (2.0 * dy);
                // u_x and u_y stencils
                fu[self.idx(ip, lo)] -= ax - ay;
                fu[self.idx(ip, hi)] -= ax + ay;
                fu[self.idx(i, lo)] -= -ax - ay;
                fu[self.idx(i, hi)] -= -ax + ay;
                // v_x and v_y stencils
                let bx = vol * s[(1, 0)] / (4.0 * dx);
                let by = vol * s[(1, 1)] / dy;
                fv[self.idx(ip, lo)] -= bx;
                fv[self.idx(ip, hi)] -= bx;
                fv[self.idx(im, lo)] += bx;
                fv[self.idx(im, hi)] += bx;
                fv[self.idx(i, hi)] -= by;
                fv[self.idx(i, lo)] += by;
            }
        }
        for j in 0..=ny {
            let m = self.node_mass(j);
            for i in 0..nx {
                fu[self.idx(i, j)] /= m;
                fv[self.idx(i, j)] /= m;
            }
        }
        for i in 0..nx {
            fv[i] = 0.0;
            fv[ny * nx + i] = 0.0;
        }
        (fu, fv)
    }

    /// Stress force plus the slip friction `-alpha u` on the wall rows.
    pub fn stress_divergence(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut fu, fv) = self.stress_divergence_of(&self.cell_stresses());
        let m = self.node_mass(0);
        let dx = self.dx();
        for i in 0..self.nx {
            let k = self.idx(i, 0);
            fu[k] -= self.alpha_lo * self.u[k] * dx / m;
            let k = self.idx(i, self.ny);
            fu[k] -= self.alpha_hi * self.u[k] * dx / m;
        }
        (fu, fv)
    }

    /// First-order upwind `(w · ∇) w` at the velocity nodes.
    pub fn advection(&self) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let (dx, dy) = (self.dx(), self.dy());
        let mut au = vec![0.0; nx * (ny + 1)];
        let mut av = vec![0.0; nx * (ny + 1)];
        let upwind = |c: f64, here: f64, back: f64, fwd: f64, h: f64| {
            if c > 0.0 {
                c * (here - back) / h
            } else if c < 0.0 {
                c * (fwd - here) / h
            } else {
                0.0
            }
        };
        for j in 0..=ny {
            for i in 0..nx {
                let (ip, im) = (self.right(i), self.left(i));
                let k = self.idx(i, j);
                let uc = self.u[k];
                let vc = 0.5 * (self.v[self.idx(im, j)] + self.v[k]);
                let mut a = upwind(uc, uc, self.u[self.idx(im, j)], self.u[self.idx(ip, j)], dx);
                if j > 0 && j < ny {
                    a += upwind(vc, uc, self.u[self.idx(i, j - 1)], self.u[self.idx(i, j + 1)], dy);
                }
                au[k] = a;
                if j > 0 && j < ny {
                    let vc = self.v[k];
                    let uc = 0.5 * (self.u[k] + self.u[self.idx(ip, j)]);
                    av[k] = upwind(uc, vc, self.v[self.idx(im, j)], self.v[self.idx(ip, j)], dx)
                        + upwind(vc, vc, self.v[self.idx(i, j - 1)], self.v[self.idx(i, j + 1)], dy);
                }
            }
        }
        (au, av)
    }

    /// Discrete divergence `D w` at cell centers.
    pub fn divergence_of(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let (dx, dy) = (self.dx(), self.dy());
        let mut d = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let ip = self.right(i);
                let ubar = |i: usize| 0.5 * (u[self.idx(i, j)] + u[self.idx(i, j + 1)]);
                d[j * nx + i] = (ubar(ip) - ubar(i)) / dx + (v[self.idx(i, j + 1)] - v[self.idx(i, j)]) / dy;
            }
        }
        d
    }

    pub fn divergence(&self) -> Vec<f64> {
        self.divergence_of(&self.u, &self.v)
    }

    pub fn max_divergence(&self) -> f64 {
        self.divergence().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `D^T λ` (plain transpose), returned as `(u, v)` node arrays.
    fn divergence_adjoint(&self, lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let (dx, dy) = (self.dx(), self.dy());
        let mut gu = vec![0.0; nx * (ny + 1)];
        let mut gv = vec![0.0; nx * (ny + 1)];
        for j in 0..ny {
            for i in 0..nx {
                let l = lambda[j * nx + i];
                let ip = self.right(i);
                let a = 0.5 * l / dx;
                gu[self.idx(ip, j)] += a;
                gu[self.idx(ip, j + 1)] += a;
                gu[self.idx(i, j)] -= a;
                gu[self.idx(i, j + 1)] -= a;
                if j + 1 < ny {
                    gv[self.idx(i, j + 1)] += l / dy;
                }
                if j > 0 {
                    gv[self.idx(i, j)] -= l / dy;
                }
            }
        }
        (gu, gv)
    }

    fn apply_mass_inverse(&self, gu: &mut [f64], gv: &mut [f64]) {
        for j in 0..=self.ny {
            let m = self.node_mass(j);
            for i in 0..self.nx {
                let k = self.idx(i, j);
                gu[k] /= m;
                gv[k] /= m;
            }
        }
    }

    /// `D M^{-1} D^T λ`.
    fn pressure_operator(&self, lambda: &[f64]) -> Vec<f64> {
        let (mut gu, mut gv) = self.divergence_adjoint(lambda);
        self.apply_mass_inverse(&mut gu, &mut gv);
        self.divergence_of(&gu, &gv)
    }

    /// Remove the discrete divergence. Returns the multiplier `λ` (zero mean)
    /// so that the velocity changes by `-M^{-1} D^T λ`.
    pub fn project(&mut self) -> Result<Vec<f64>> {
        let b = self.divergence();
        let lambda = self.solve_pressure(&b)?;
        let (mut gu, mut gv) = self.divergence_adjoint(&lambda);
        self.apply_mass_inverse(&mut gu, &mut gv);
        for (x, g) in self.u.iter_mut().zip(&gu) {
            *x -= g;
        }
        for (x, g) in self.v.iter_mut().zip(&gv) {
            *x -= g;
        }
        let div = self.max_divergence();
        if !(div <= DIVERGENCE_TOLERANCE) {
            return Err(Error::PoissonNoConvergence { iterations: 0, residual: div });
        }
        Ok(lambda)
    }

    /// Conjugate gradients for `D M^{-1} D^T λ = b` on zero-mean fields.
    fn solve_pressure(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let mut rhs = b.to_vec();
        remove_mean(&mut rhs);
        let bnorm = dot(&rhs, &rhs).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = rhs;
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let max_iter = 20 * n + 100;
        for _ in 0..max_iter {
            if rr.sqrt() <= CG_TOLERANCE * bnorm {
                break;
            }
            let mut ap = self.pressure_operator(&p);
            remove_mean(&mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let a = rr / pap;
            for k in 0..n {
                x[k] += a * p[k];
                r[k] -= a * ap[k];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
        }
        remove_mean(&mut x);
        // True residual, not the recursively updated one.
        let mut ax = self.pressure_operator(&x);
        remove_mean(&mut ax);
        let mut rhs = b.to_vec();
        remove_mean(&mut rhs);
        let res = ax.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / bnorm;
        if !(res <= CG_REQUIRED) {
            return Err(Error::PoissonNoConvergence { iterations: max_iter, residual: res });
        }
        Ok(x)
    }

    /// Lipschitz constant of the regularized stress over `|B| <= b_max`:
    /// `(p-1) [max(2 mu1, mu2) max(1, b_max)^(p-2) + tau_hat max(1, nu^(4/p)) eps^(-1/p)]`.
    pub fn stress_lipschitz(params: &FluidParams, b_max: f64) -> f64 {
        let p = params.p();
        let power = (2.0 * params.mu1()).max(params.mu2()) * b_max.max(1.0).powf(p - 2.0);
        let yield_part = params.tau_hat() * params.nu().powf(4.0 / p).max(1.0) * params.eps_reg().powf(-1.0 / p);
        (p - 1.0) * (power + yield_part)
    }

    /// Explicit step bound: viscous/friction part `1 / (L (4/dx^2 + 4/dy^2) + 2 alpha / dy)`
    /// and the advective limit `0.5 / (max|u|/dx + max|v|/dy)`.
    pub fn stable_dt(&self) -> f64 {
        let (dx, dy) = (self.dx(), self.dy());
        let b_max = self.gradients().iter().fold(0.0_f64, |m, b| m.max(b.norm()));
        let l = Self::stress_lipschitz(&self.params, b_max);
        let visc = 1.0 / (l * (4.0 / (dx * dx) + 4.0 / (dy * dy)) + 2.0 * self.alpha_lo.max(self.alpha_hi) / dy);
        let umax = self.u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let vmax = self.v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let c = umax / dx + vmax / dy;
        if c > 0.0 {
            visc.min(0.5 / c)
        } else {
            visc
        }
    }

    /// Explicit Euler for advection, stress and force, then projection.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let (fu, fv) = self.stress_divergence();
        let (au, av) = self.advection();
        let [gx, gy] = self.force;
        for k in 0..self.u.len() {
            self.u[k] += dt * (fu[k] - au[k] + gx);
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                let k = self.idx(i, j);
                self.v[k] += dt * (fv[k] - av[k] + gy);
            }
        }
        let lambda = self.project()?;
        self.pressure = lambda.iter().map(|l| l / dt).collect();
        self.t += dt;
        let m = self.max_abs_velocity();
        let limit = BLOWUP_FACTOR * self.initial_scale;
        if !(m <= limit) {
            return Err(Error::UnstableStep { t: self.t, max_u: m, limit });
        }
        Ok(())
    }

    /// Column `i` of `u`, bottom to top.
    pub fn u_column(&self, i: usize) -> Vec<f64> {
        (0..=self.ny).map(|j| self.u[self.idx(i, j)]).collect()
    }

    /// Cell-center output rows.
    pub fn fields(&self) -> Vec<FieldRow> {
        let (dx, dy) = (self.dx(), self.dy());
        let grads = self.gradients();
        let mut rows = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let ip = self.right(i);
                let b = grads[j * self.nx + i];
                let s = reg_stress(&b, &self.params);
                let u = 0.25
                    * (self.u[self.idx(i, j)] + self.u[self.idx(ip, j)] + self.u[self.idx(i, j + 1)] + self.u[self.idx(ip, j + 1)]);
                let v = 0.5 * (self.v[self.idx(i, j)] + self.v[self.idx(i, j + 1)]);
                rows.push(FieldRow {
                    x: (i as f64 + 0.5) * dx,
                    y: (j as f64 + 0.5) * dy,
                    u,
                    v,
                    p: self.pressure[j * self.nx + i],
                    b_sym: b.sym_part().norm(),
                    b_asym: b.asym_part().norm(),
                    s_norm: s.norm(),
                    plug_flag: u8::from(is_plug(&b, &self.params)),
                });
            }
        }
        rows
    }

    fn cell_weights(&self) -> Vec<f64> {
        vec![self.dx() * self.dy(); self.nx * self.ny]
    }
}

/// One line of `fields_XXXX.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub b_sym: f64,
    pub b_asym: f64,
    pub s_norm: f64,
    pub plug_flag: u8,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    for v in x {
        *v -= m;
    }
}

impl EnergyBudget for MacState2D {
    fn time(&self) -> f64 {
        self.t
    }

    fn kinetic_energy(&self) -> f64 {
        let mut e = 0.0;
        for j in 0..=self.ny {
            let m = self.node_mass(j);
            for i in 0..self.nx {
                let k = self.idx(i, j);
                e += 0.5 * m * (self.u[k] * self.u[k] + self.v[k] * self.v[k]);
            }
        }
        e
    }

    fn dissipation_rates(&self) -> (f64, f64) {
        let vol = self.dx() * self.dy();
        let parts: Vec<(f64, f64)> = self.gradients().par_iter().map(|b| reg_dissipation(b, &self.params)).collect();
        parts.iter().fold((0.0, 0.0), |(p, t), (pw, y)| (p + pw * vol, t + (pw + y) * vol))
    }

    fn friction_rate(&self) -> f64 {
        let dx = self.dx();
        (0..self.nx)
            .map(|i| {
                let lo = self.u[self.idx(i, 0)];
                let hi = self.u[self.idx(i, self.ny)];
                (self.alpha_lo * lo * lo + self.alpha_hi * hi * hi) * dx
            })
            .sum()
    }

    fn work_rate(&self) -> f64 {
        let mut w = 0.0;
        for j in 0..=self.ny {
            let m = self.node_mass(j);
            for i in 0..self.nx {
                let k = self.idx(i, j);
                w += m * (self.force[0] * self.u[k] + self.force[1] * self.v[k]);
            }
        }
        w
    }

    fn stress_norm_q(&self) -> f64 {
        let s: Vec<f64> = self.cell_stresses().iter().map(|s| s.norm()).collect();
        lp_norm(&s, &self.cell_weights(), self.params.q())
    }

    fn grad_norm_p(&self) -> f64 {
        let g: Vec<f64> = self.gradients().iter().map(|b| b.norm()).collect();
        lp_norm(&g, &self.cell_weights(), self.params.p())
    }
}
