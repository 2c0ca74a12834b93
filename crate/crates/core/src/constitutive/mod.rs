//! The modified asymmetric Bingham law.
//!
//! With `B_s`, `B_a` the symmetric and antisymmetric parts of the velocity
//! gradient, the law weights each part by its own power of `|B_s|`, `|B_a|`:
//!
//! ```text
//! B_mu  = 2 mu1 |B_s|^(p-2) B_s + mu2 |B_a|^(p-2) B_a
//! B_nu  = |B_s|^((p-2)/2) B_s + nu |B_a|^((p-2)/2) B_a
//! B_nu2 = |B_s|^(p-2) B_s + nu^2 |B_a|^(p-2) B_a
//! S     = B_mu + tau_hat B_nu2 / |B_nu|^(2(p-1)/p)      (B_nu != 0)
//! ```
//!
//! `S` is the gradient of the convex potential
//! `V(X) = U(X) + tau_hat W(X)` with `U` the power part and
//! `W(X) = (|X_s|^p + nu^2 |X_a|^p)^(1/p)` a norm. At `B_nu = 0` the law is
//! multivalued; the admissible stresses form `tau_hat · ∂W(0)`, see
//! [`yield_set`]. The regularized variants replace `|B_nu|^2` by
//! `|B_nu|^2 + eps` and are smooth everywhere.

mod params;
pub mod yield_set;

pub use params::FluidParams;
pub use yield_set::{
    dw_bound_check, maximizing_direction, satisfies_uniqueness, uniqueness_threshold, yield_gauge,
    yield_geometry, yield_membership, YieldGeometry, UNIQUENESS_THRESHOLD,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor3::Mat3;

/// Outcome of evaluating a law that is multivalued at zero strain rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StressValue {
    Stress(Mat3),
    /// Any stress in the plug set is admissible.
    PlugIndeterminate,
}

impl StressValue {
    pub fn stress(&self) -> Option<Mat3> {
        match self {
            StressValue::Stress(s) => Some(*s),
            StressValue::PlugIndeterminate => None,
        }
    }

    pub fn is_plug(&self) -> bool {
        matches!(self, StressValue::PlugIndeterminate)
    }
}

/// `n^e` with `0^0 = 1`, used for the `|X|^(p-2) X` convention.
#[inline]
pub(crate) fn pow0(n: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if n == 0.0 {
        0.0
    } else {
        n.powf(e)
    }
}

/// Symmetric/antisymmetric split with cached norms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Split {
    pub s: Mat3,
    pub a: Mat3,
    pub ns: f64,
    pub na: f64,
}

impl Split {
    #[inline]
    pub fn of(x: &Mat3) -> Self {
        let s = x.sym_part();
        let a = x.asym_part();
        Split { ns: s.norm(), na: a.norm(), s, a }
    }
}

pub fn b_mu(b: &Mat3, f: &FluidParams) -> Mat3 {
    b_mu_split(&Split::of(b), f)
}

pub fn b_nu(b: &Mat3, f: &FluidParams) -> Mat3 {
    let sp = Split::of(b);
    let e = 0.5 * (f.p() - 2.0);
    sp.s.scale(pow0(sp.ns, e)) + sp.a.scale(f.nu() * pow0(sp.na, e))
}

pub fn b_nu2(b: &Mat3, f: &FluidParams) -> Mat3 {
    b_nu2_split(&Split::of(b), f)
}

fn b_mu_split(sp: &Split, f: &FluidParams) -> Mat3 {
    let e = f.p() - 2.0;
    sp.s.scale(2.0 * f.mu1() * pow0(sp.ns, e)) + sp.a.scale(f.mu2() * pow0(sp.na, e))
}

fn b_nu2_split(sp: &Split, f: &FluidParams) -> Mat3 {
    let e = f.p() - 2.0;
    let nu = f.nu();
    sp.s.scale(pow0(sp.ns, e)) + sp.a.scale(nu * nu * pow0(sp.na, e))
}

/// `|B_nu|^2 = |B_s|^p + nu^2 |B_a|^p`.
pub fn b_nu_norm_sq(b: &Mat3, f: &FluidParams) -> f64 {
    nu_norm_sq_split(&Split::of(b), f)
}

fn nu_norm_sq_split(sp: &Split, f: &FluidParams) -> f64 {
    let p = f.p();
    sp.ns.powf(p) + f.nu() * f.nu() * sp.na.powf(p)
}

/// Power part `U(X) = (2 mu1 / p)|X_s|^p + (mu2 / p)|X_a|^p`.
pub fn potential_u(x: &Mat3, f: &FluidParams) -> f64 {
    let sp = Split::of(x);
    power_part(&sp, f)
}

fn power_part(sp: &Split, f: &FluidParams) -> f64 {
    let p = f.p();
    (2.0 * f.mu1() * sp.ns.powf(p) + f.mu2() * sp.na.powf(p)) / p
}

/// The norm `W(X) = (|X_s|^p + nu^2 |X_a|^p)^(1/p)`, positively homogeneous of degree 1.
pub fn potential_w(x: &Mat3, f: &FluidParams) -> f64 {
    let sp = Split::of(x);
    let m = sp.ns.max(sp.na);
    if m == 0.0 {
        return 0.0;
    }
    // Factor out the larger norm so large p cannot underflow.
    let p = f.p();
    let r = (sp.ns / m).powf(p) + f.nu() * f.nu() * (sp.na / m).powf(p);
    m * r.powf(1.0 / p)
}

pub fn potential_v(x: &Mat3, f: &FluidParams) -> f64 {
    potential_u(x, f) + f.tau_hat() * potential_w(x, f)
}

/// `DW(B) = B_nu2 / |B_nu|^(2(p-1)/p)`, or `None` where `B_nu = 0`.
///
/// `DW` is homogeneous of degree zero, so it is evaluated on `B` rescaled by
/// the larger of `|B_s|, |B_a|`.
pub fn grad_w(b: &Mat3, f: &FluidParams) -> Option<Mat3> {
    let sp = Split::of(b);
    let m = sp.ns.max(sp.na);
    if m == 0.0 {
        return None;
    }
    let unit = Split { s: sp.s.scale(1.0 / m), a: sp.a.scale(1.0 / m), ns: sp.ns / m, na: sp.na / m };
    let denom = nu_norm_sq_split(&unit, f);
    if denom == 0.0 {
        return None;
    }
    let p = f.p();
    Some(b_nu2_split(&unit, f).scale(denom.powf(-(p - 1.0) / p)))
}

/// Gradient of [`potential_v`] away from the origin.
pub fn grad_v(x: &Mat3, f: &FluidParams) -> Result<Mat3> {
    let dw = grad_w(x, f).ok_or(Error::DegenerateAtZero)?;
    Ok(b_mu(x, f) + dw.scale(f.tau_hat()))
}

/// The unregularized stress; multivalued where `B_nu = 0`.
pub fn exact_stress(b: &Mat3, f: &FluidParams) -> StressValue {
    match grad_w(b, f) {
        Some(dw) => StressValue::Stress(b_mu(b, f) + dw.scale(f.tau_hat())),
        None => StressValue::PlugIndeterminate,
    }
}

/// Regularized stress `B_mu + tau_hat B_nu2 / (|B_nu|^2 + eps)^((p-1)/p)`.
pub fn reg_stress(b: &Mat3, f: &FluidParams) -> Mat3 {
    let sp = Split::of(b);
    reg_stress_split(&sp, f)
}

fn reg_stress_split(sp: &Split, f: &FluidParams) -> Mat3 {
    let p = f.p();
    let denom = (nu_norm_sq_split(sp, f) + f.eps_reg()).powf((p - 1.0) / p);
    b_mu_split(sp, f) + b_nu2_split(sp, f).scale(f.tau_hat() / denom)
}

/// Regularized potential `U(X) + tau_hat (|X_nu|^2 + eps)^(1/p)`; its gradient is [`reg_stress`].
pub fn reg_potential(x: &Mat3, f: &FluidParams) -> f64 {
    let sp = Split::of(x);
    let p = f.p();
    power_part(&sp, f) + f.tau_hat() * (nu_norm_sq_split(&sp, f) + f.eps_reg()).powf(1.0 / p)
}

/// `S^n : B` expanded into its two nonnegative pieces: the power dissipation
/// `2 mu1 |B_s|^p + mu2 |B_a|^p` and the yield part
/// `tau_hat |B_nu|^2 / (|B_nu|^2 + eps)^((p-1)/p)`.
pub fn reg_dissipation(b: &Mat3, f: &FluidParams) -> (f64, f64) {
    let sp = Split::of(b);
    let p = f.p();
    let power = 2.0 * f.mu1() * sp.ns.powf(p) + f.mu2() * sp.na.powf(p);
    let nn = nu_norm_sq_split(&sp, f);
    let yield_part = f.tau_hat() * nn / (nn + f.eps_reg()).powf((p - 1.0) / p);
    (power, yield_part)
}

/// `B_0 = B_s + kappa B_a` of the legacy (symmetric-potential) law.
pub fn legacy_b0(b: &Mat3, f: &FluidParams) -> Mat3 {
    b.sym_part() + b.asym_part().scale(f.kappa())
}

/// `mu1 |X|^2 + tau_star |X|`; the legacy stress is its gradient at `X = B_0`.
pub fn legacy_potential(x: &Mat3, f: &FluidParams) -> f64 {
    let n = x.norm();
    f.mu1() * n * n + f.tau_star() * n
}

/// Legacy law `2 mu1 B_0 + tau_star B_0 / |B_0|`, multivalued at `B_0 = 0`.
pub fn legacy_stress(b: &Mat3, f: &FluidParams) -> StressValue {
    let b0 = legacy_b0(b, f);
    let n = b0.norm();
    if n == 0.0 {
        StressValue::PlugIndeterminate
    } else {
        StressValue::Stress(b0.scale(2.0 * f.mu1()) + b0.scale(f.tau_star() / n))
    }
}

/// Plug indicator used by the solvers: `|B_nu|^2 <= sqrt(eps)`.
///
/// For the regularized law the yield term saturates once `|B_nu|^2 >> eps`;
/// the threshold `sqrt(eps)` sits between `eps` and 1, so the flagged region
/// converges to the true rigid zone as `eps -> 0`.
pub fn is_plug(b: &Mat3, f: &FluidParams) -> bool {
    b_nu_norm_sq(b, f) <= f.eps_reg().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SampleRng;

    fn params(p: f64, nu: f64) -> FluidParams {
        FluidParams::new(0.7, 1.3, nu, p, 1.1, 1e-3).unwrap()
    }

    /// Central-difference gradient, independent of the closed forms.
    fn fd_grad(g: impl Fn(&Mat3) -> f64, x: &Mat3) -> Mat3 {
        let h = 1e-6 * x.max_abs().max(1.0);
        let mut out = Mat3::ZERO;
        for k in 0..9 {
            let mut xp = *x;
            let mut xm = *x;
            xp.0[k] += h;
            xm.0[k] -= h;
            out.0[k] = (g(&xp) - g(&xm)) / (2.0 * h);
        }
        out
    }

    fn rel_err(a: &Mat3, b: &Mat3) -> f64 {
        (*a - *b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn derived_tensors_vanish_at_zero() {
        for &p in &[2.0, 3.0] {
            let f = params(p, 2.0);
            assert!(b_mu(&Mat3::ZERO, &f).is_zero());
            assert!(b_nu(&Mat3::ZERO, &f).is_zero());
            assert!(b_nu2(&Mat3::ZERO, &f).is_zero());
        }
    }

    #[test]
    fn quadratic_case_is_linear() {
        let f = params(2.0, 1.7);
        let mut rng = SampleRng::new(3, 0);
        let b = rng.mat3();
        let want_mu = b.sym_part().scale(2.0 * f.mu1()) + b.asym_part().scale(f.mu2());
        let want_nu = b.sym_part() + b.asym_part().scale(1.7);
        assert!(rel_err(&b_mu(&b, &f), &want_mu) < 1e-14);
        assert!(rel_err(&b_nu(&b, &f), &want_nu) < 1e-14);
    }

    #[test]
    fn symmetric_unit_quartic() {
        let f = params(4.0, 0.5);
        let b = Mat3::from_rows([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        let b = b.scale(1.0 / b.norm());
        assert!(rel_err(&b_mu(&b, &f), &b.scale(2.0 * f.mu1())) < 1e-14);
        assert!(rel_err(&b_nu(&b, &f), &b) < 1e-14);
        assert!(rel_err(&b_nu2(&b, &f), &b) < 1e-14);
    }

    #[test]
    fn potential_examples() {
        let f = FluidParams::new(0.8, 2.0, 1.0, 2.0, 0.6, 1e-3).unwrap();
        assert_eq!(potential_w(&Mat3::ZERO, &f), 0.0);
        assert_eq!(potential_v(&Mat3::ZERO, &f), 0.0);
        let x = Mat3::diag(1.0, -2.0, 0.5);
        let x = x.scale(1.0 / x.norm());
        // (2 mu1 / 2)·1 + tau·1
        assert!((potential_v(&x, &f) - (0.8 + 0.6)).abs() < 1e-14);
        let g = params(3.0, 2.0);
        let y = Mat3::diag(3.0, 1.0, -1.0);
        assert!((potential_w(&y, &g) - y.norm()).abs() < 1e-13);
        let mut rng = SampleRng::new(5, 0);
        for _ in 0..100 {
            let x = rng.mat3();
            assert!((potential_w(&x.scale(2.0), &g) - 2.0 * potential_w(&x, &g)).abs() < 1e-12 * potential_w(&x, &g));
        }
    }

    #[test]
    fn grad_v_symmetric_quadratic_matches_legacy_form() {
        let f = FluidParams::new(0.8, 2.0, 1.0, 2.0, 0.6, 1e-3).unwrap();
        let x = Mat3::from_rows([[1.0, 2.0, 0.0], [2.0, -1.0, 3.0], [0.0, 3.0, 0.5]]);
        let want = x.scale(2.0 * 0.8) + x.scale(0.6 / x.norm());
        assert!(rel_err(&grad_v(&x, &f).unwrap(), &want) < 1e-14);
        assert!(matches!(grad_v(&Mat3::ZERO, &f), Err(Error::DegenerateAtZero)));
    }

    #[test]
    fn grad_v_matches_finite_differences() {
        let mut rng = SampleRng::new(17, 0);
        for &p in &[2.0, 2.5, 3.0, 4.0] {
            for &nu in &[0.5, 1.0, 2.0] {
                let f = params(p, nu);
                for _ in 0..50 {
                    let x = rng.mat3();
                    let g = grad_v(&x, &f).unwrap();
                    let fd = fd_grad(|y| potential_v(y, &f), &x);
                    assert!(rel_err(&fd, &g) < 1e-6, "p={p} nu={nu} err={}", rel_err(&fd, &g));
                    // Euler identity for the power part plus a nonnegative yield part.
                    let pu = p * potential_u(&x, &f);
                    assert!(g.dot(&x) >= pu * (1.0 - 1e-12));
                    assert!(pu >= 0.0);
                }
            }
        }
    }

    #[test]
    fn exact_stress_examples() {
        let f = FluidParams::new(0.8, 2.0, 1.0, 2.0, 0.6, 1e-3).unwrap();
        assert!(exact_stress(&Mat3::ZERO, &f).is_plug());
        let b = Mat3::diag(1.0, 0.0, 0.0);
        let s = exact_stress(&b, &f).stress().unwrap();
        assert!(rel_err(&s, &b.scale(2.0 * 0.8 + 0.6)) < 1e-14);
        let mut rng = SampleRng::new(23, 0);
        for &p in &[2.0, 3.0, 4.0] {
            for &nu in &[0.5, 1.0, 2.0, 5.0] {
                let f = params(p, nu);
                for _ in 0..200 {
                    let b = rng.mat3();
                    let s = exact_stress(&b, &f).stress().unwrap();
                    assert!((s - b_mu(&b, &f)).norm() <= f.tau_star() * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn reg_stress_examples() {
        let f = params(3.0, 2.0);
        assert!(reg_stress(&Mat3::ZERO, &f).is_zero());
        assert!((reg_potential(&Mat3::ZERO, &f) - f.tau_hat() * 1e-3_f64.powf(1.0 / 3.0)).abs() < 1e-15);

        // |B_nu| = 1 with eps tiny reproduces the exact law.
        let tiny = f.with_eps(1e-12).unwrap();
        let mut rng = SampleRng::new(29, 0);
        for _ in 0..50 {
            let b = rng.mat3();
            let b = b.scale(1.0 / b_nu_norm_sq(&b, &tiny).powf(1.0 / tiny.p()));
            assert!((b_nu_norm_sq(&b, &tiny) - 1.0).abs() < 1e-12);
            let exact = exact_stress(&b, &tiny).stress().unwrap();
            assert!(rel_err(&reg_stress(&b, &tiny), &exact) < 1e-9);
            let x = rng.mat3();
            assert!((reg_potential(&x, &tiny) - potential_v(&x, &tiny)).abs() < 1e-9 * potential_v(&x, &tiny));
        }
    }

    #[test]
    fn reg_stress_matches_finite_differences() {
        let mut rng = SampleRng::new(31, 0);
        for &p in &[2.0, 2.5, 3.0, 4.0] {
            for &nu in &[0.5, 1.0, 2.0] {
                for &eps in &[1e-1, 1e-3] {
                    let f = params(p, nu).with_eps(eps).unwrap();
                    for _ in 0..30 {
                        let x = rng.mat3();
                        let fd = fd_grad(|y| reg_potential(y, &f), &x);
                        assert!(rel_err(&fd, &reg_stress(&x, &f)) < 1e-6);
                    }
                    // Small arguments, where the regularization is active.
                    for _ in 0..30 {
                        let x = rng.mat3().scale(1e-2);
                        // Potential is O(1) here while the gradient is small; a
                        // larger relative step keeps roundoff below truncation.
                        let h = 1e-4;
                        let mut fd_small = Mat3::ZERO;
                        for k in 0..9 {
                            let mut xp = x;
                            let mut xm = x;
                            xp.0[k] += h * 1e-2;
                            xm.0[k] -= h * 1e-2;
                            fd_small.0[k] = (reg_potential(&xp, &f) - reg_potential(&xm, &f)) / (2.0 * h * 1e-2);
                        }
                        assert!(rel_err(&fd_small, &reg_stress(&x, &f)) < 1e-5, "p={p} nu={nu} eps={eps} err={} g={}", rel_err(&fd_small, &reg_stress(&x, &f)), reg_stress(&x, &f).norm());
                    }
                }
            }
        }
    }

    #[test]
    fn dissipation_expansion_matches_frobenius_product() {
        let mut rng = SampleRng::new(37, 0);
        for &p in &[2.0, 3.0, 4.0] {
            for &nu in &[0.5, 2.0] {
                let f = params(p, nu);
                for _ in 0..100 {
                    let b = rng.mat3();
                    let (pw, yl) = reg_dissipation(&b, &f);
                    let direct = reg_stress(&b, &f).dot(&b);
                    assert!((pw + yl - direct).abs() <= 1e-10 * direct.abs());
                }
            }
        }
        let f = params(3.0, 2.0);
        assert_eq!(reg_dissipation(&Mat3::ZERO, &f), (0.0, 0.0));
    }

    #[test]
    fn legacy_law() {
        let f = FluidParams::new(0.8, 0.5, 1.0, 2.0, 0.6, 1e-3).unwrap();
        assert!(legacy_stress(&Mat3::ZERO, &f).is_plug());
        let b = Mat3::from_rows([[1.0, 2.0, 0.0], [2.0, -1.0, 3.0], [0.0, 3.0, 0.5]]);
        let s = legacy_stress(&b, &f).stress().unwrap();
        assert!(rel_err(&s, &(b.scale(1.6) + b.scale(0.6 / b.norm()))) < 1e-14);
        let mut rng = SampleRng::new(41, 0);
        for _ in 0..100 {
            let b = rng.mat3();
            let b0 = legacy_b0(&b, &f);
            let fd = fd_grad(|x| legacy_potential(x, &f), &b0);
            assert!(rel_err(&fd, &legacy_stress(&b, &f).stress().unwrap()) < 1e-6);
        }
    }

    #[test]
    fn legacy_and_modified_coincide_for_symmetric_quadratic() {
        // 2 mu1 = mu2 gives kappa = 1; nu = 1.
        let f = FluidParams::new(0.5, 1.0, 1.0, 2.0, 0.9, 1e-3).unwrap();
        assert_eq!(f.kappa(), 1.0);
        let mut rng = SampleRng::new(43, 0);
        for _ in 0..100 {
            let b = rng.mat3().sym_part();
            let l = legacy_stress(&b, &f).stress().unwrap();
            let e = exact_stress(&b, &f).stress().unwrap();
            assert!(rel_err(&l, &e) < 1e-13);
        }
    }

    #[test]
    fn plug_flag_threshold() {
        let f = params(2.0, 1.0).with_eps(1e-4).unwrap();
        assert!(is_plug(&Mat3::ZERO, &f));
        assert!(is_plug(&Mat3::unit(0, 1).scale(0.09), &f));
        assert!(!is_plug(&Mat3::unit(0, 1).scale(0.11), &f));
    }
}
