//! Discrete energy accounting for the flow solvers.
//!
//! For zero forcing the continuous problem satisfies
//!
//! ```text
//! 1/2 ||v(t)||^2 + ∫0^t ∫ S^n : ∇v + ∫0^t ∫_Γ α |v|^2  <=  1/2 ||v0||^2
//! ```
//!
//! [`EnergyLedger`] accumulates the three left-hand terms with a
//! left-endpoint rule in time (matching explicit Euler) and the solvers'
//! own midpoint quadrature in space. The residual
//! `initial_kinetic + work - (kinetic + dissipation + friction)` may dip
//! below zero only by the `O(dt)` error of the time discretization.

use serde::{Deserialize, Serialize};

/// Instantaneous energy rates and norms of a discrete state.
pub trait EnergyBudget {
    fn time(&self) -> f64;
    /// `1/2 ∫ |v|^2`
    fn kinetic_energy(&self) -> f64;
    /// `(∫ 2 mu1 |B_s|^p + mu2 |B_a|^p, ∫ S^n : B)`
    fn dissipation_rates(&self) -> (f64, f64);
    /// `∫_Γ α |v|^2`
    fn friction_rate(&self) -> f64;
    /// `∫ f · v`
    fn work_rate(&self) -> f64;
    /// `||S^n||_{L^q}`, `q = p / (p - 1)`
    fn stress_norm_q(&self) -> f64;
    /// `||∇v||_{L^p}`
    fn grad_norm_p(&self) -> f64;
    /// `||v||_{L^2}`
    fn velocity_norm_2(&self) -> f64 {
        (2.0 * self.kinetic_energy()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub t: f64,
    pub kinetic: f64,
    /// Full regularized dissipation `∫∫ S^n : B` (power plus yield term).
    pub dissipation_cum: f64,
    /// Power part alone, `∫∫ 2 mu1 |B_s|^p + mu2 |B_a|^p`.
    pub dissipation_power_cum: f64,
    pub friction_cum: f64,
    pub work_cum: f64,
    pub initial_kinetic: f64,
    pub s_norm_q: f64,
    pub gradv_norm_p: f64,
}

impl EnergyLedger {
    pub fn start(state: &impl EnergyBudget) -> Self {
        let k = state.kinetic_energy();
        EnergyLedger {
            t: state.time(),
            kinetic: k,
            dissipation_cum: 0.0,
            dissipation_power_cum: 0.0,
            friction_cum: 0.0,
            work_cum: 0.0,
            initial_kinetic: k,
            s_norm_q: state.stress_norm_q(),
            gradv_norm_p: state.grad_norm_p(),
        }
    }

    pub fn residual(&self) -> f64 {
        self.initial_kinetic + self.work_cum - (self.kinetic + self.dissipation_cum + self.friction_cum)
    }

    /// Residual of the inequality with only the power dissipation on the left.
    pub fn residual_power_only(&self) -> f64 {
        self.initial_kinetic + self.work_cum - (self.kinetic + self.dissipation_power_cum + self.friction_cum)
    }

    /// Accumulate `dt` times the rates of `state` (the state the step starts from
    /// for explicit schemes, the one it ends at for implicit ones).
    pub fn accumulate(&mut self, state: &impl EnergyBudget, dt: f64) {
        let (power, total) = state.dissipation_rates();
        self.dissipation_power_cum += dt * power;
        self.dissipation_cum += dt * total;
        self.friction_cum += dt * state.friction_rate();
        self.work_cum += dt * state.work_rate();
    }

    /// Record kinetic energy, time and norms of the current state.
    pub fn observe(&mut self, state: &impl EnergyBudget) {
        self.t = state.time();
        self.kinetic = state.kinetic_energy();
        self.s_norm_q = state.stress_norm_q();
        self.gradv_norm_p = state.grad_norm_p();
    }

    pub fn row(&self) -> EnergyRow {
        EnergyRow {
            t: self.t,
            kinetic: self.kinetic,
            dissipation_cum: self.dissipation_cum,
            friction_cum: self.friction_cum,
            residual: self.residual(),
            s_norm_q: self.s_norm_q,
            gradv_norm_p: self.gradv_norm_p,
            dissipation_power_cum: self.dissipation_power_cum,
            work_cum: self.work_cum,
        }
    }
}

/// Accumulate one explicit step's worth of dissipation, friction and work,
/// evaluated at `state`.
pub fn update_ledger(ledger: &mut EnergyLedger, state: &impl EnergyBudget, dt: f64) {
    ledger.accumulate(state, dt);
}

/// One line of `energy.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub t: f64,
    pub kinetic: f64,
    pub dissipation_cum: f64,
    pub friction_cum: f64,
    pub residual: f64,
    pub s_norm_q: f64,
    pub gradv_norm_p: f64,
    pub dissipation_power_cum: f64,
    pub work_cum: f64,
}

/// Discrete `L^r` norm `(Σ w_i |x_i|^r)^(1/r)` with quadrature weights `w`.
pub fn lp_norm(values: &[f64], weights: &[f64], r: f64) -> f64 {
    assert!(r >= 1.0, "lp_norm needs r >= 1");
    assert_eq!(values.len(), weights.len());
    let m = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().zip(weights).map(|(v, w)| w * (v.abs() / m).powf(r)).sum();
    m * s.powf(1.0 / r)
}
