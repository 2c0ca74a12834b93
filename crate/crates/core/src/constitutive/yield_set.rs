//! Geometry of the plug set `∂V(0) = tau_hat · ∂W(0)`.
//!
//! `∂W(0)` is the unit ball of the norm dual to `W`:
//!
//! ```text
//! { S : |S_s|^q + nu^(2(1-q)) |S_a|^q <= 1 },   q = p / (p - 1)
//! ```
//!
//! It is sandwiched between Euclidean balls. The outer radius is
//! `max(1, nu^(2/p))`. For the inner one, `r_p` below is the minimum of
//! `alpha(t) = (1-t)^(p/2) + nu^2 t^(p/2)` on `[0, 1]`; since
//! `alpha(t) = W(Y)^p` for unit `Y` with `|Y_a|^2 = t`, the largest inscribed
//! ball has radius `r_p^(1/p) >= r_p`. Both are reported.

use serde::{Deserialize, Serialize};

use super::{grad_w, FluidParams, Split};
use crate::error::{Error, Result};
use crate::tensor3::Mat3;

/// `(7 + sqrt(19)) / 5`, the exponent above which weak solutions are unique.
pub const UNIQUENESS_THRESHOLD: f64 = 2.271_779_788_708_135;

pub fn uniqueness_threshold() -> f64 {
    (7.0 + 19.0_f64.sqrt()) / 5.0
}

pub fn satisfies_uniqueness(p: f64) -> bool {
    p >= uniqueness_threshold()
}

/// Relative slack for boundary points in [`yield_membership`].
const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Gauge of the dual norm, `(|S_s|^q + nu^(2(1-q)) |S_a|^q)^(1/q)`.
///
/// `S` lies in `∂V(0)` iff `yield_gauge(S) <= tau_hat`.
pub fn yield_gauge(s: &Mat3, f: &FluidParams) -> f64 {
    let sp = Split::of(s);
    let q = f.q();
    let m = sp.ns.max(sp.na);
    if m == 0.0 {
        return 0.0;
    }
    let w = f.nu().powf(2.0 * (1.0 - q));
    m * ((sp.ns / m).powf(q) + w * (sp.na / m).powf(q)).powf(1.0 / q)
}

/// Whether `S` is an admissible plug stress, i.e. `S ∈ ∂V(0)`.
pub fn yield_membership(s: &Mat3, f: &FluidParams) -> bool {
    let tau = f.tau_hat();
    if tau == 0.0 {
        return s.is_zero();
    }
    let sp = Split::of(s);
    let q = f.q();
    let w = f.nu().powf(2.0 * (1.0 - q));
    let level = (sp.ns / tau).powf(q) + w * (sp.na / tau).powf(q);
    level <= 1.0 + MEMBERSHIP_SLACK
}

/// The plug constraint as literally stated for the exact law, `|S| <= tau_star`.
///
/// It contains `∂V(0)` (strictly, when `nu != 1`); both are reported.
pub fn legacy_plug_admissible(s: &Mat3, f: &FluidParams) -> bool {
    s.norm() <= f.tau_star() * (1.0 + MEMBERSHIP_SLACK)
}

/// The test direction `Y` realizing `S : Y = gauge(S) · W(Y)`:
/// `Y_s = |S_s|^(q-2) S_s`, `Y_a = nu^(-2q/p) |S_a|^(q-2) S_a`.
pub fn maximizing_direction(s: &Mat3, f: &FluidParams) -> Mat3 {
    let sp = Split::of(s);
    let q = f.q();
    let ys = if sp.ns > 0.0 { sp.s.scale(sp.ns.powf(q - 2.0)) } else { Mat3::ZERO };
    let ya = if sp.na > 0.0 {
        sp.a.scale(f.nu().powf(-2.0 * q / f.p()) * sp.na.powf(q - 2.0))
    } else {
        Mat3::ZERO
    };
    ys + ya
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldGeometry {
    /// `min alpha(t)` on `[0, 1]`.
    pub r_p: f64,
    /// Minimizer of `alpha`.
    pub t_star: f64,
    pub outer_radius: f64,
    /// Radius of the largest Euclidean ball inside the normalized plug set, `r_p^(1/p)`.
    pub inscribed_radius: f64,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn yield_geometry(f: &FluidParams) -> YieldGeometry {
    let p = f.p();
    let nu = f.nu();
    let outer_radius = f.outer_radius();
    let (r_p, t_star) = if p == 2.0 {
        // alpha is affine in t: minimum at an endpoint, ties toward t = 0.
        let nu2 = nu * nu;
        if nu2 >= 1.0 {
            (1.0, 0.0)
        } else {
            (nu2, 1.0)
        }
    } else {
        // r_p = nu^2 / (1 + nu^(4/(p-2)))^((p-2)/2), evaluated in logs so
        // that p close to 2 neither overflows nor underflows.
        let x = 4.0 * nu.ln() / (p - 2.0);
        let ln_r = 2.0 * nu.ln() - 0.5 * (p - 2.0) * softplus(x);
        let t = 1.0 / (1.0 + x.exp());
        (ln_r.exp(), t)
    };
    YieldGeometry { r_p, t_star, outer_radius, inscribed_radius: r_p.powf(1.0 / p) }
}

/// `|B_nu2| / |B_nu|^(2(p-1)/p)`, bounded by `max(1, nu^(2/p))`.
pub fn dw_bound_check(b: &Mat3, f: &FluidParams) -> Result<f64> {
    grad_w(b, f).map(|dw| dw.norm()).ok_or(Error::DegenerateAtZero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{potential_w, FluidParams};
    use crate::rng::SampleRng;

    fn params(p: f64, nu: f64, tau: f64) -> FluidParams {
        FluidParams::new(1.0, 1.0, nu, p, tau, 1e-3).unwrap()
    }

    /// Brute-force minimum of alpha on a uniform grid of `n + 1` points.
    fn alpha_grid_min(p: f64, nu: f64, n: usize) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let a = (1.0 - t).powf(p / 2.0) + nu * nu * t.powf(p / 2.0);
            if a < best.0 {
                best = (a, t);
            }
        }
        best
    }

    #[test]
    fn threshold_value() {
        assert!((uniqueness_threshold() - 2.2717797887).abs() < 1e-9);
        assert_eq!(uniqueness_threshold(), UNIQUENESS_THRESHOLD);
        assert!((uniqueness_threshold() - 2.272).abs() < 5e-4);
        assert!(satisfies_uniqueness(3.0));
        assert!(!satisfies_uniqueness(2.0));
    }

    #[test]
    fn geometry_examples() {
        let g = yield_geometry(&params(4.0, 1.0, 1.0));
        assert!((g.r_p - 0.5).abs() < 1e-15);
        assert!((g.t_star - 0.5).abs() < 1e-15);
        let g = yield_geometry(&params(2.0, 0.5, 1.0));
        assert!((g.r_p - 0.25).abs() < 1e-15);
        assert_eq!(g.t_star, 1.0);
        let g = yield_geometry(&params(2.0, 1.0, 1.0));
        assert_eq!((g.r_p, g.t_star), (1.0, 0.0));
    }

    #[test]
    fn geometry_matches_grid_oracle() {
        let mut rng = SampleRng::new(99, 0);
        for _ in 0..20 {
            let p = rng.uniform(2.05, 8.0);
            let nu = rng.uniform(0.2, 3.0);
            let g = yield_geometry(&params(p, nu, 1.0));
            let (amin, tmin) = alpha_grid_min(p, nu, 100_000);
            assert!((g.r_p - amin).abs() < 1e-6, "p={p} nu={nu}");
            assert!((g.t_star - tmin).abs() < 1e-3);
            assert!(g.r_p <= g.outer_radius);
            assert!(g.r_p <= g.inscribed_radius);
            assert!((0.0..=1.0).contains(&g.t_star));
        }
    }

    #[test]
    fn near_quadratic_limit_is_continuous() {
        for &nu in &[0.3, 0.9, 1.1, 2.0, 10.0] {
            let at2 = yield_geometry(&params(2.0, nu, 1.0)).r_p;
            let near = yield_geometry(&params(2.0 + 1e-6, nu, 1.0)).r_p;
            assert!(near.is_finite());
            assert!((at2 - near).abs() < 1e-4, "nu={nu}: {at2} vs {near}");
        }
    }

    #[test]
    fn membership_examples() {
        let f = params(2.0, 1.0, 1.0);
        assert!(yield_membership(&Mat3::ZERO, &f));
        let d = Mat3::from_rows([[1.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, -1.0]]);
        let d = d.scale(1.0 / d.norm());
        assert!(yield_membership(&d, &f));
        assert!(!yield_membership(&d.scale(1.0 + 1e-6), &f));

        let zero_tau = params(3.0, 2.0, 0.0);
        assert!(yield_membership(&Mat3::ZERO, &zero_tau));
        assert!(!yield_membership(&d.scale(1e-300), &zero_tau));

        let mut rng = SampleRng::new(5, 0);
        for &(p, nu) in &[(2.0, 0.5), (3.0, 2.0), (4.0, 1.0), (2.5, 0.3)] {
            let f = params(p, nu, 1.7);
            let g = yield_geometry(&f);
            for _ in 0..500 {
                let d = rng.unit_mat3();
                assert!(yield_membership(&d.scale(g.r_p * f.tau_hat()), &f));
                assert!(yield_membership(&d.scale(g.inscribed_radius * f.tau_hat() * (1.0 - 1e-12)), &f));
            }
        }
    }

    #[test]
    fn maximizing_direction_attains_dual_bound() {
        let mut rng = SampleRng::new(8, 0);
        for &(p, nu) in &[(2.0, 0.5), (3.0, 2.0), (4.0, 1.0)] {
            let f = params(p, nu, 1.0);
            for _ in 0..200 {
                let s = rng.mat3();
                let y = maximizing_direction(&s, &f);
                let lhs = s.dot(&y);
                let rhs = yield_gauge(&s, &f) * potential_w(&y, &f);
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs());
            }
        }
    }

    #[test]
    fn dw_bound_examples() {
        let mut rng = SampleRng::new(13, 0);
        for &p in &[2.0, 3.0, 4.0] {
            let f = params(p, 3.0, 1.0);
            let b = rng.mat3().sym_part();
            assert!((dw_bound_check(&b, &f).unwrap() - 1.0).abs() < 1e-13);
            let f1 = params(p, 1.0, 1.0);
            for _ in 0..100 {
                assert!(dw_bound_check(&rng.mat3(), &f1).unwrap() <= 1.0 + 1e-13);
            }
            let nu = 2.0_f64.powf(p / 2.0);
            let fa = params(p, nu, 1.0);
            let a = rng.mat3().asym_part();
            assert!((dw_bound_check(&a, &fa).unwrap() - 2.0).abs() < 1e-12);
            for _ in 0..100 {
                assert!(dw_bound_check(&rng.mat3(), &fa).unwrap() <= 2.0 * (1.0 + 1e-13));
            }
        }
        assert!(dw_bound_check(&Mat3::ZERO, &params(3.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn legacy_constraint_contains_modified_set() {
        let mut rng = SampleRng::new(21, 0);
        let f = params(3.0, 2.0, 1.0);
        for _ in 0..1000 {
            let s = rng.mat3().scale(0.2);
            if yield_membership(&s, &f) {
                assert!(legacy_plug_admissible(&s, &f));
            }
        }
    }
}
