//! Sampling and finite-difference checks of the convex-analysis properties
//! of the constitutive potentials.
//!
//! Every check draws from [`SampleRng`] streams keyed by `(seed, chunk)`, so
//! chunks can run on any number of threads and the merged [`CheckReport`]
//! is the same.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{
    self, exact_stress, grad_v, legacy_potential, potential_v, potential_w, reg_potential, reg_stress,
    yield_gauge, yield_geometry, yield_membership, FluidParams,
};
use crate::error::{Error, Result};
use crate::rng::SampleRng;
use crate::tensor3::Mat3;

/// Samples handled by one rng stream.
const CHUNK: usize = 256;
/// Relative slack for midpoint convexity and subgradient inequalities.
pub const CONVEXITY_SLACK: f64 = 1e-10;
/// Central-difference step (relative to `max(1, max |X_ij|)`).
pub const FD_STEP: f64 = 1e-6;
/// Allowed relative Frobenius error between a gradient and its finite-difference estimate.
pub const FD_TOLERANCE: f64 = 1e-6;
/// Bisection iterations when locating the plug-set boundary.
pub const BOUNDARY_BISECTIONS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub samples: u64,
    pub violations: u64,
    /// Largest normalized residual seen; positive values beyond tolerance are violations.
    pub worst_residual: f64,
    pub seed: u64,
}

impl CheckReport {
    fn empty(name: &str, seed: u64) -> Self {
        CheckReport { check_name: name.to_string(), samples: 0, violations: 0, worst_residual: f64::NEG_INFINITY, seed }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn record(&mut self, residual: f64, violated: bool) {
        self.samples += 1;
        if violated || residual.is_nan() {
            self.violations += 1;
        }
        if residual > self.worst_residual || residual.is_nan() {
            self.worst_residual = residual;
        }
    }

    /// Merge two partial reports of the same check.
    pub fn merge(mut self, other: &CheckReport) -> Self {
        self.samples += other.samples;
        self.violations += other.violations;
        if other.worst_residual > self.worst_residual || other.worst_residual.is_nan() {
            self.worst_residual = other.worst_residual;
        }
        self
    }
}

/// Split `samples` into fixed-size chunks, run them in parallel and merge in chunk order.
fn run_chunked<F>(name: &str, samples: usize, seed: u64, body: F) -> CheckReport
where
    F: Fn(&mut SampleRng, usize, &mut CheckReport) + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<CheckReport> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = SampleRng::new(seed, c as u64);
            let mut rep = CheckReport::empty(name, seed);
            let n = CHUNK.min(samples - c * CHUNK);
            for i in 0..n {
                body(&mut rng, c * CHUNK + i, &mut rep);
            }
            rep
        })
        .collect();
    parts.iter().fold(CheckReport::empty(name, seed), |acc, r| acc.merge(r))
}

/// Which scalar potential a check operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Potential {
    /// `V = U + tau_hat W`
    V,
    /// The norm `W`
    W,
    /// Regularized `V^n`
    Vn,
    /// `mu1 |X|^2 + tau_star |X|`
    Legacy,
}

impl Potential {
    pub fn eval(&self, x: &Mat3, f: &FluidParams) -> f64 {
        match self {
            Potential::V => potential_v(x, f),
            Potential::W => potential_w(x, f),
            Potential::Vn => reg_potential(x, f),
            Potential::Legacy => legacy_potential(x, f),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::V => "V",
            Potential::W => "W",
            Potential::Vn => "Vn",
            Potential::Legacy => "legacy",
        }
    }
}

/// One-sided directional derivative `f'(X; Y)` of a convex potential.
///
/// Difference quotients at `lambda = 2^-k`, `k = 10..=40`, must not increase
/// as `lambda` shrinks (beyond `1e-10` relative plus the rounding error of the
/// quotient itself). The returned value is the Richardson-extrapolated
/// quotient `2 q_k - q_(k-1)` at the `k` with the smallest estimated error.
pub fn directional_derivative(kind: Potential, x: &Mat3, y: &Mat3, f: &FluidParams) -> Result<f64> {
    directional_derivative_of(|m| kind.eval(m, f), x, y)
}

pub fn directional_derivative_of(g: impl Fn(&Mat3) -> f64, x: &Mat3, y: &Mat3) -> Result<f64> {
    if y.is_zero() {
        return Ok(0.0);
    }
    let fx = g(x);
    let mut prev: Option<(f64, f64)> = None;
    let mut best = (f64::INFINITY, 0.0);
    for k in 10..=40u32 {
        let lambda = (-(k as f64)).exp2();
        let fxl = g(&(*x + y.scale(lambda)));
        let q = (fxl - fx) / lambda;
        let roundoff = 4.0 * f64::EPSILON * (fx.abs() + fxl.abs()) / lambda;
        if let Some((q_prev, round_prev)) = prev {
            let tol = 1e-10 * q_prev.abs().max(1.0) + roundoff + round_prev;
            if q > q_prev + tol {
                return Err(Error::NonMonotoneQuotient { k, previous: q_prev, current: q });
            }
            let err = roundoff + (q_prev - q).abs();
            if err < best.0 {
                best = (err, 2.0 * q - q_prev);
            }
        }
        prev = Some((q, roundoff));
    }
    Ok(best.1)
}

pub fn check_convexity(kind: Potential, f: &FluidParams, samples: usize, seed: u64) -> CheckReport {
    let name = format!("convexity_{}", kind.name());
    let params = *f;
    check_convexity_of(&name, move |x| kind.eval(x, &params), samples, seed)
}

/// Midpoint convexity `g((X+Y)/2) <= (g(X)+g(Y))/2 + 1e-10 max(1, |g(X)|+|g(Y)|)`.
pub fn check_convexity_of(name: &str, g: impl Fn(&Mat3) -> f64 + Sync, samples: usize, seed: u64) -> CheckReport {
    run_chunked(name, samples, seed, |rng, _, rep| {
        let x = rng.mat3();
        // Mix scales so that both the power part and the non-smooth part dominate somewhere.
        let y = rng.mat3().scale(10f64.powf(rng.uniform(-3.0, 0.0)));
        let (gx, gy) = (g(&x), g(&y));
        let mid = g(&(x + y).scale(0.5));
        let scale = (gx.abs() + gy.abs()).max(1.0);
        let residual = (mid - 0.5 * (gx + gy)) / scale;
        rep.record(residual, residual > CONVEXITY_SLACK);
    })
}

fn fd_gradient(g: &impl Fn(&Mat3) -> f64, x: &Mat3) -> Mat3 {
    let h = FD_STEP * x.max_abs().max(1.0);
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

/// `grad_v` and `reg_stress` against central differences of their potentials.
pub fn check_gradient(f: &FluidParams, samples: usize, seed: u64) -> CheckReport {
    let params = *f;
    run_chunked("gradient", samples, seed, move |rng, _, rep| {
        let x = rng.mat3();
        let exact = grad_v(&x, &params).unwrap_or(Mat3::ZERO);
        let fd = fd_gradient(&|m: &Mat3| potential_v(m, &params), &x);
        let r1 = (fd - exact).norm() / exact.norm().max(f64::MIN_POSITIVE);
        let reg = reg_stress(&x, &params);
        let fd = fd_gradient(&|m: &Mat3| reg_potential(m, &params), &x);
        let r2 = (fd - reg).norm() / reg.norm().max(f64::MIN_POSITIVE);
        let r = r1.max(r2);
        rep.record(r - FD_TOLERANCE, r > FD_TOLERANCE);
    })
}

/// Scale `s` such that `s D` lies on the boundary of the normalized plug set
/// `{ gauge <= 1 }`, by bisection.
pub fn boundary_scale(d: &Mat3, f: &FluidParams) -> f64 {
    let mut hi = 1.0;
    while yield_gauge(&d.scale(hi), f) <= 1.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..BOUNDARY_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if yield_gauge(&d.scale(mid), f) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Search for `X` with `V(X) - V(0) < S : X`, certifying `S ∉ ∂V(0)`.
///
/// Tries small multiples of the maximizing direction of `S` first, then
/// random directions.
pub fn find_separating_x(s: &Mat3, f: &FluidParams, tries: usize, seed: u64) -> Option<Mat3> {
    let y = constitutive::maximizing_direction(s, f);
    let mut candidates: Vec<Mat3> = (0..12).map(|k| y.scale(10f64.powi(-k))).collect();
    let mut rng = SampleRng::new(seed, u64::MAX);
    for _ in 0..tries {
        let d = rng.unit_mat3();
        candidates.push(d.scale(10f64.powf(rng.uniform(-8.0, 0.0))));
    }
    candidates.into_iter().find(|x| potential_v(x, f) < s.dot(x))
}

/// Subgradient inequality `V(X) - V(B) >= S(B) : (X - B)` for random pairs,
/// and `V(X) >= S : X` for random members `S` of the plug set.
pub fn check_subgradient(f: &FluidParams, samples: usize, seed: u64) -> CheckReport {
    let params = *f;
    run_chunked("subgradient", samples, seed, move |rng, _, rep| {
        let x = rng.mat3().scale(10f64.powf(rng.uniform(-2.0, 0.0)));
        let b = rng.mat3();
        if let Some(s) = exact_stress(&b, &params).stress() {
            let lhs = potential_v(&x, &params) - potential_v(&b, &params);
            let rhs = s.dot(&(x - b));
            let scale = (potential_v(&x, &params).abs() + potential_v(&b, &params).abs() + rhs.abs()).max(1.0);
            let r = (rhs - lhs) / scale;
            rep.record(r, r > CONVEXITY_SLACK);
        }

        // Plug-set members at B = 0.
        let d = rng.unit_mat3();
        let s = d.scale(params.tau_hat() * boundary_scale(&d, &params) * rng.uniform(0.0, 1.0));
        let probe = if rng.uniform(0.0, 1.0) < 0.5 {
            constitutive::maximizing_direction(&s, &params).scale(10f64.powf(rng.uniform(-6.0, 0.0)))
        } else {
            rng.mat3().scale(10f64.powf(rng.uniform(-6.0, 0.0)))
        };
        let lhs = potential_v(&probe, &params);
        let rhs = s.dot(&probe);
        let r = (rhs - lhs) / (lhs.abs() + rhs.abs()).max(f64::MIN_POSITIVE);
        rep.record(r, r > CONVEXITY_SLACK);
    })
}

/// Euclidean ball sandwich of the normalized plug set and tightness of the inner ball.
pub fn check_ball_inclusions(f: &FluidParams, samples: usize, seed: u64) -> CheckReport {
    let params = *f;
    let geo = yield_geometry(f);
    let unit_tau = params.with_tau_star(params.outer_radius()).expect("valid");
    debug_assert!((unit_tau.tau_hat() - 1.0).abs() < 1e-12);
    let mut rep = run_chunked("ball_inclusions", samples, seed, move |rng, _, rep| {
        let d = rng.unit_mat3();
        // (i) inner balls are inside the set
        let inner_ok = yield_membership(&d.scale(geo.r_p), &unit_tau)
            && yield_membership(&d.scale(geo.inscribed_radius * (1.0 - 1e-12)), &unit_tau);
        rep.record(if inner_ok { -1.0 } else { 1.0 }, !inner_ok);
        // (ii) boundary samples lie in [r_p, outer]
        let n = boundary_scale(&d, &params);
        let lo = geo.inscribed_radius * (1.0 - 1e-9);
        let hi = geo.outer_radius * (1.0 + 1e-12);
        let r = (lo - n).max(n - hi);
        rep.record(r, n < geo.r_p * (1.0 - 1e-9) || r > 0.0);
    });
    // (iii) tightness: the boundary point in the t_star direction realizes the inscribed radius.
    if params.p() > 2.0 {
        let mut rng = SampleRng::new(seed, u64::MAX - 1);
        for _ in 0..8 {
            let es = rng.mat3().sym_part();
            let ea = rng.mat3().asym_part();
            let y = es.scale((1.0 - geo.t_star).sqrt() / es.norm()) + ea.scale(geo.t_star.sqrt() / ea.norm());
            let n = boundary_scale(&y, &params);
            let r = (n - geo.inscribed_radius).abs() - 1e-3;
            rep.record(r, r > 0.0);
        }
    }
    rep
}

/// `|B_nu2| / |B_nu|^(2(p-1)/p) <= max(1, nu^(2/p))` on random `B`.
pub fn check_dw_bound(f: &FluidParams, samples: usize, seed: u64) -> CheckReport {
    let params = *f;
    let bound = params.outer_radius();
    run_chunked("dw_bound", samples, seed, move |rng, _, rep| {
        let b = rng.mat3();
        // Skew some samples toward purely (anti)symmetric tensors, where the bound is tight.
        let b = match rng.index(4) {
            0 => b.sym_part(),
            1 => b.asym_part(),
            _ => b,
        };
        match constitutive::dw_bound_check(&b, &params) {
            Ok(v) => {
                let r = v / bound - 1.0;
                rep.record(r, r > 1e-12);
            }
            Err(_) => rep.record(f64::NAN, true),
        }
    })
}

fn lp_norm2(x: [f64; 2], p: f64) -> f64 {
    let m = x[0].abs().max(x[1].abs());
    if m == 0.0 {
        return 0.0;
    }
    m * ((x[0].abs() / m).powf(p) + (x[1].abs() / m).powf(p)).powf(1.0 / p)
}

/// `l^p` norms of random 2-vectors are nonincreasing in `p`; also reproduces
/// `W(X) = ||(|X_s|, nu^(2/p)|X_a|)||_p <= max(1, nu^(2/p)) |X|`.
pub fn check_norm_monotonicity(samples: usize, seed: u64) -> CheckReport {
    run_chunked("norm_monotonicity", samples, seed, |rng, _, rep| {
        let x = [rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)];
        let p1 = rng.uniform(1.0, 40.0);
        let p2 = rng.uniform(p1, 40.0);
        let (n1, n2) = (lp_norm2(x, p1), lp_norm2(x, p2));
        let r = (n2 - n1) / n1.max(f64::MIN_POSITIVE);
        rep.record(r, r > 1e-14);

        let p = rng.uniform(2.0, 6.0);
        let nu = rng.uniform(0.2, 4.0);
        let f = FluidParams::new(1.0, 1.0, nu, p, 1.0, 1e-3).expect("valid");
        let m = rng.mat3();
        let (ns, na) = (m.sym_part().norm(), m.asym_part().norm());
        let w = potential_w(&m, &f);
        let via_lp = lp_norm2([ns, nu.powf(2.0 / p) * na], p);
        let chain = f.outer_radius() * lp_norm2([ns, na], 2.0);
        let r = ((w - via_lp).abs() / w - 1e-12).max((w - chain) / chain - 1e-12);
        rep.record(r, r > 0.0);
    })
}

/// Verification suites exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Convexity,
    Gradient,
    Subgradient,
    Balls,
    DwBound,
    Norms,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "convexity" => Suite::Convexity,
            "gradient" => Suite::Gradient,
            "subgradient" => Suite::Subgradient,
            "balls" => Suite::Balls,
            "dwbound" => Suite::DwBound,
            "norms" => Suite::Norms,
            "all" => Suite::All,
            other => {
                return Err(Error::Config(format!(
                    "unknown suite '{other}' (expected convexity, gradient, subgradient, balls, dwbound, norms, all)"
                )))
            }
        })
    }
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Convexity => "convexity",
            Suite::Gradient => "gradient",
            Suite::Subgradient => "subgradient",
            Suite::Balls => "balls",
            Suite::DwBound => "dwbound",
            Suite::Norms => "norms",
            Suite::All => "all",
        }
    }
}

/// `(p, nu)` grid swept by the suites.
pub const P_GRID: [f64; 4] = [2.0, 2.5, 3.0, 4.0];
pub const NU_GRID: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub samples: u64,
    pub passed: bool,
    pub reports: Vec<CheckReport>,
}

/// Run a suite over the `(p, nu)` grid with the remaining constants taken from `base`.
pub fn run_suite(suite: Suite, base: &FluidParams, samples: usize, seed: u64) -> Result<SuiteReport> {
    if samples == 0 {
        return Err(Error::Config("samples must be at least 1".into()));
    }
    let mut reports = Vec::new();
    let grid = || {
        P_GRID.iter().flat_map(|&p| NU_GRID.iter().map(move |&nu| (p, nu))).collect::<Vec<_>>()
    };
    let tag = |mut r: CheckReport, p: f64, nu: f64| {
        r.check_name = format!("{}[p={p},nu={nu}]", r.check_name);
        r
    };
    let want = |s: Suite| suite == Suite::All || suite == s;
    for (k, (p, nu)) in grid().into_iter().enumerate() {
        let f = base.with_nu_p(nu, p)?;
        let s = seed.wrapping_add(k as u64 * 1000);
        if want(Suite::Convexity) {
            for kind in [Potential::V, Potential::W, Potential::Vn] {
                reports.push(tag(check_convexity(kind, &f, samples, s), p, nu));
            }
        }
        if want(Suite::Gradient) {
            reports.push(tag(check_gradient(&f, samples, s + 1), p, nu));
        }
        if want(Suite::Subgradient) {
            reports.push(tag(check_subgradient(&f, samples, s + 2), p, nu));
        }
        if want(Suite::Balls) {
            reports.push(tag(check_ball_inclusions(&f, samples, s + 3), p, nu));
        }
        if want(Suite::DwBound) {
            reports.push(tag(check_dw_bound(&f, samples, s + 4), p, nu));
        }
    }
    if want(Suite::Convexity) {
        reports.push(check_convexity(Potential::Legacy, base, samples, seed + 7));
    }
    if want(Suite::Norms) {
        reports.push(check_norm_monotonicity(samples, seed + 5));
    }
    let passed = reports.iter().all(CheckReport::passed);
    Ok(SuiteReport { suite: suite.name().to_string(), seed, samples: samples as u64, passed, reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, nu: f64) -> FluidParams {
        FluidParams::new(1.0, 0.5, nu, p, 1.0, 1e-2).unwrap()
    }

    #[test]
    fn directional_derivative_examples() {
        let mut rng = SampleRng::new(3, 0);
        for &(p, nu) in &[(2.0, 0.5), (3.0, 2.0), (4.0, 1.0)] {
            let f = params(p, nu);
            for _ in 0..50 {
                let y = rng.mat3();
                let d = directional_derivative(Potential::W, &Mat3::ZERO, &y, &f).unwrap();
                let w = potential_w(&y, &f);
                assert!((d - w).abs() <= 1e-8 * w);

                let x = rng.mat3();
                let d = directional_derivative(Potential::V, &x, &y, &f).unwrap();
                let g = grad_v(&x, &f).unwrap().dot(&y);
                assert!((d - g).abs() <= 1e-5 * g.abs().max(1.0), "{d} vs {g}");
            }
            assert_eq!(directional_derivative(Potential::Vn, &rng.mat3(), &Mat3::ZERO, &f).unwrap(), 0.0);
        }
    }

    #[test]
    fn directional_derivative_flags_concave_functions() {
        let g = |m: &Mat3| -m.norm_sq();
        let x = Mat3::diag(1.0, 2.0, 3.0);
        let y = Mat3::diag(1.0, 0.0, 0.0);
        assert!(matches!(directional_derivative_of(g, &x, &y), Err(Error::NonMonotoneQuotient { .. })));
    }

    #[test]
    fn convexity_passes_and_inverted_fixture_fails() {
        let f = params(3.0, 2.0);
        for kind in [Potential::V, Potential::W, Potential::Vn, Potential::Legacy] {
            let r = check_convexity(kind, &f, 2000, 1);
            assert!(r.passed(), "{r:?}");
            assert_eq!(r.samples, 2000);
        }
        let neg = check_convexity_of("negated_V", |x| -potential_v(x, &f), 500, 1);
        assert!(neg.violations > 0);
    }

    #[test]
    fn reports_are_deterministic_and_merge() {
        let f = params(2.5, 0.5);
        let a = check_subgradient(&f, 1000, 42);
        let b = check_subgradient(&f, 1000, 42);
        assert_eq!(a, b);
        let m = CheckReport::empty("x", 1).merge(&a);
        assert_eq!(m.samples, a.samples);
        assert_eq!(m.worst_residual, a.worst_residual);
    }

    #[test]
    fn subgradient_at_equal_points() {
        let f = params(3.0, 2.0);
        let b = Mat3::diag(1.0, -2.0, 0.5) + Mat3::unit(0, 1);
        let s = exact_stress(&b, &f).stress().unwrap();
        assert_eq!(potential_v(&b, &f) - potential_v(&b, &f), 0.0);
        assert_eq!(s.dot(&(b - b)), 0.0);
    }

    #[test]
    fn points_outside_the_plug_set_are_separated() {
        let mut rng = SampleRng::new(77, 0);
        for &(p, nu) in &[(2.0, 0.5), (3.0, 2.0), (4.0, 1.0)] {
            let f = params(p, nu);
            for _ in 0..50 {
                let d = rng.unit_mat3();
                let n = boundary_scale(&d, &f) * f.tau_hat();
                let outside = d.scale(n * 1.01);
                assert!(!yield_membership(&outside, &f));
                assert!(find_separating_x(&outside, &f, 100, 1).is_some());
                let inside = d.scale(n * 0.99);
                assert!(yield_membership(&inside, &f));
                assert!(find_separating_x(&inside, &f, 100, 1).is_none());
            }
        }
    }

    #[test]
    fn bisection_boundary_agrees_with_gauge() {
        let mut rng = SampleRng::new(4, 0);
        let f = params(3.0, 2.0);
        for _ in 0..100 {
            let d = rng.unit_mat3();
            let s = boundary_scale(&d, &f);
            assert!((s - 1.0 / yield_gauge(&d, &f)).abs() < 1e-14 * s.max(1.0));
        }
    }

    #[test]
    fn ball_checks_pass_across_grid() {
        for &p in &P_GRID {
            for &nu in &NU_GRID {
                let r = check_ball_inclusions(&params(p, nu), 1000, 9);
                assert!(r.passed(), "p={p} nu={nu}: {r:?}");
            }
        }
    }

    #[test]
    fn norms_and_dw_bound() {
        assert!(check_norm_monotonicity(5000, 2).passed());
        assert!((lp_norm2([1.0, 1.0], 1.0) - 2.0).abs() < 1e-15);
        assert!((lp_norm2([1.0, 1.0], 2.0) - 2f64.sqrt()).abs() < 1e-15);
        for &nu in &NU_GRID {
            assert!(check_dw_bound(&params(3.0, nu), 5000, 3).passed());
        }
    }

    #[test]
    fn suite_parsing() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("bogus".parse::<Suite>().is_err());
        assert!(run_suite(Suite::Norms, &FluidParams::default(), 0, 1).is_err());
        let r = run_suite(Suite::DwBound, &FluidParams::default(), 300, 1).unwrap();
        assert!(r.passed);
        assert_eq!(r.reports.len(), 12);
    }
}
