//! Time-stepping drivers shared by the command line and the tests.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel2d::{FieldRow, MacState2D};
use crate::config::{DtSpec, IcSpec, Run1DConfig, Run2DConfig, Scheme};
use crate::diagnostics::{EnergyLedger, EnergyRow};
use crate::error::{Error, Result};
use crate::shear1d::{ProfileRow, ShearState1D};

/// How often a run is restarted with half the step after an instability.
pub const MAX_HALVINGS: u32 = 6;
/// Steps per run for `dt = "auto"` with the implicit scheme.
pub const IMPLICIT_AUTO_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dt: f64,
    pub dt_auto: bool,
    pub steps: usize,
    pub halvings: u32,
    pub t_end: f64,
    pub final_max_velocity: f64,
    /// Largest post-projection divergence seen (2D only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_divergence: Option<f64>,
}

pub struct Run1DOutput {
    pub profiles: Vec<ProfileRow>,
    pub energy: Vec<EnergyRow>,
    pub summary: RunSummary,
    pub state: ShearState1D,
}

pub struct Run2DOutput {
    /// One field dump per snapshot.
    pub snapshots: Vec<Vec<FieldRow>>,
    pub energy: Vec<EnergyRow>,
    pub summary: RunSummary,
    pub state: MacState2D,
}

/// Steady Newtonian guess `f y (H - y) / (2 mu) + f H / (alpha_lo + alpha_hi)`
/// with `mu = mu1 + mu2 / 2`.
fn poiseuille_guess(y: f64, h: f64, force: f64, mu: f64, alpha_lo: f64, alpha_hi: f64) -> f64 {
    let slip = if alpha_lo + alpha_hi > 0.0 { force * h / (alpha_lo + alpha_hi) } else { 0.0 };
    force * y * (h - y) / (2.0 * mu) + slip
}

pub fn initial_state_1d(c: &Run1DConfig) -> Result<ShearState1D> {
    c.validate()?;
    let n = c.n;
    let u = match &c.ic {
        IcSpec::Values(v) => v.clone(),
        IcSpec::Named(name) => match name.as_str() {
            "zero" => vec![0.0; n + 1],
            "poiseuille-guess" => {
                let mu = c.params.mu1() + 0.5 * c.params.mu2();
                (0..=n)
                    .map(|j| poiseuille_guess(c.h * j as f64 / n as f64, c.h, c.force, mu, c.alpha_lo, c.alpha_hi))
                    .collect()
            }
            other => return Err(Error::Config(format!("unknown 1D initial condition '{other}'"))),
        },
    };
    ShearState1D::new(c.params, c.h, n, c.alpha_lo, c.alpha_hi, c.force, u)
}

pub fn initial_state_2d(c: &Run2DConfig) -> Result<MacState2D> {
    c.validate()?;
    let mut st = MacState2D::at_rest(c.params, c.lx, c.ly, c.nx, c.ny, c.alpha_lo, c.alpha_hi, c.force)?;
    let (nx, ny) = (c.nx, c.ny);
    let name = match &c.ic {
        IcSpec::Named(n) => n.as_str(),
        IcSpec::Values(_) => unreachable!("rejected by validate"),
    };
    let a = c.amplitude;
    let mut u = vec![0.0; nx * (ny + 1)];
    let mut v = vec![0.0; nx * (ny + 1)];
    for j in 0..=ny {
        let y = c.ly * j as f64 / ny as f64;
        for i in 0..nx {
            let x = c.lx * i as f64 / nx as f64;
            let xv = c.lx * (i as f64 + 0.5) / nx as f64;
            let k = j * nx + i;
            match name {
                "zero" => {}
                "poiseuille-guess" => {
                    let mu = c.params.mu1() + 0.5 * c.params.mu2();
                    u[k] = poiseuille_guess(y, c.ly, c.force[0], mu, c.alpha_lo, c.alpha_hi);
                }
                "shear" => u[k] = a * (PI * y / c.ly).sin(),
                "vortex" => {
                    // Stream function a sin(2 pi x / Lx) sin^2(pi y / Ly).
                    let kx = 2.0 * PI / c.lx;
                    u[k] = a * (kx * x).sin() * (PI / c.ly) * (2.0 * PI * y / c.ly).sin();
                    v[k] = -a * kx * (kx * xv).cos() * (PI * y / c.ly).sin().powi(2);
                }
                other => return Err(Error::Config(format!("unknown 2D initial condition '{other}'"))),
            }
        }
    }
    st.set_velocity(u, v)?;
    st.project()?;
    st.pressure.iter_mut().for_each(|p| *p = 0.0);
    Ok(st)
}

fn schedule(steps: usize, count: usize) -> BTreeSet<usize> {
    (0..=count).map(|k| ((k as f64) * steps as f64 / count as f64).round() as usize).collect()
}

fn step_count(t_end: f64, dt: f64) -> usize {
    ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Resolve the requested step and run, halving it after each instability.
fn with_halving<S, T>(
    dt0: f64,
    dt_auto: bool,
    t_end: f64,
    mut attempt: impl FnMut(f64, usize) -> Result<(T, S)>,
) -> Result<(T, S, RunSummary)> {
    let mut last_err = None;
    for h in 0..=MAX_HALVINGS {
        let requested = dt0 / 2f64.powi(h as i32);
        let steps = step_count(t_end, requested);
        let dt = t_end / steps as f64;
        match attempt(dt, steps) {
            Ok((out, state)) => {
                let summary =
                    RunSummary { dt, dt_auto, steps, halvings: h, t_end, final_max_velocity: 0.0, max_divergence: None };
                return Ok((out, state, summary));
            }
            Err(e @ Error::UnstableStep { .. }) => {
                log::warn!("{e}; restarting with dt = {}", requested / 2.0);
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("loop ran at least once"))
}

pub fn run_1d(c: &Run1DConfig) -> Result<Run1DOutput> {
    let init = initial_state_1d(c)?;
    let (dt0, auto) = match (c.dt, c.scheme) {
        (DtSpec::Fixed(dt), _) => (dt, false),
        (DtSpec::Auto, Scheme::Explicit) => (init.stable_dt(), true),
        (DtSpec::Auto, Scheme::Implicit) => (c.t_end / IMPLICIT_AUTO_STEPS as f64, true),
    };
    if auto {
        log::info!("dt = auto -> {dt0:e} ({:?} scheme)", c.scheme);
    }
    let ((profiles, energy), state, mut summary) = with_halving(dt0, auto, c.t_end, |dt, steps| {
        let snaps = schedule(steps, c.snapshots - 1);
        let rows = schedule(steps, c.energy_rows);
        let mut st = init.clone();
        let mut ledger = EnergyLedger::start(&st);
        let mut profiles = Vec::new();
        let mut energy = vec![ledger.row()];
        profiles.extend(st.profile()?);
        for k in 1..=steps {
            match c.scheme {
                Scheme::Explicit => {
                    ledger.accumulate(&st, dt);
                    st.step(dt)?;
                }
                Scheme::Implicit => {
                    st.step_implicit(dt)?;
                    ledger.accumulate(&st, dt);
                }
            }
            if k == steps {
                st.t = c.t_end;
            }
            ledger.observe(&st);
            if rows.contains(&k) {
                energy.push(ledger.row());
            }
            if snaps.contains(&k) {
                profiles.extend(st.profile()?);
            }
        }
        Ok(((profiles, energy), st))
    })?;
    summary.final_max_velocity = state.max_abs_u();
    Ok(Run1DOutput { profiles, energy, summary, state })
}

pub fn run_2d(c: &Run2DConfig) -> Result<Run2DOutput> {
    let init = initial_state_2d(c)?;
    let (dt0, auto) = match c.dt {
        DtSpec::Fixed(dt) => (dt, false),
        DtSpec::Auto => (init.stable_dt(), true),
    };
    if auto {
        log::info!("dt = auto -> {dt0:e}");
    }
    let ((snapshots, energy, max_div), state, mut summary) = with_halving(dt0, auto, c.t_end, |dt, steps| {
        let snaps = schedule(steps, c.snapshots - 1);
        let rows = schedule(steps, c.energy_rows);
        let mut st = init.clone();
        let mut ledger = EnergyLedger::start(&st);
        let mut snapshots = vec![st.fields()];
        let mut energy = vec![ledger.row()];
        let mut max_div = st.max_divergence();
        for k in 1..=steps {
            ledger.accumulate(&st, dt);
            st.step(dt)?;
            max_div = max_div.max(st.max_divergence());
            if k == steps {
                st.t = c.t_end;
            }
            ledger.observe(&st);
            if rows.contains(&k) {
                energy.push(ledger.row());
            }
            if snaps.contains(&k) {
                snapshots.push(st.fields());
            }
        }
        Ok(((snapshots, energy, max_div), st))
    })?;
    summary.final_max_velocity = state.max_abs_velocity();
    summary.max_divergence = Some(max_div);
    Ok(Run2DOutput { snapshots, energy, summary, state })
}
