//! Discretization times for the reverse sampler.
//!
//! Times are stored in forward-time coordinates: `times[k]` is the `t` of the
//! marginal `q_t` the sampler state approximates after `k` steps, so
//! `times[0] = T` and the sequence decreases. Step `k` has size
//! `h_k = times[k] - times[k+1]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Linear,
    Adaptive,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [ScheduleKind::Adaptive, ScheduleKind::Constant, ScheduleKind::Linear];

    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::Linear => "linear",
            ScheduleKind::Adaptive => "adaptive",
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "linear" => Ok(ScheduleKind::Linear),
            "adaptive" => Ok(ScheduleKind::Adaptive),
            other => invalid(format!("unknown schedule kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub gamma: f64,
    #[serde(rename = "N_requested")]
    pub n_requested: usize,
    pub times: Vec<f64>,
}

/// `1 - e^{-2t}`, the OU noise variance at time `t`.
pub fn noise_var(t: f64) -> f64 {
    -(-2.0 * t).exp_m1()
}

impl Schedule {
    /// Step sizes proportional to the current noise variance:
    /// `h_k = (1 - e^{-2 t_k})·(T + ln(1/γ))/N`, iterated from `T` until the
    /// first time at or below `γ`. The realized step count is whatever the
    /// rule produces.
    pub fn adaptive(horizon: f64, gamma: f64, n: usize) -> Result<Self> {
        if !(horizon >= 1.0) || !horizon.is_finite() {
            return invalid(format!("adaptive schedule needs T >= 1, got {horizon}"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return invalid(format!("adaptive schedule needs gamma in (0, 1), got {gamma}"));
        }
        let budget = horizon + (1.0 / gamma).ln();
        if n == 0 || (n as f64) < budget.ceil() {
            return Err(LabError::Schedule(format!(
                "N = {n} is below ceil(T + ln 1/gamma) = {}",
                budget.ceil()
            )));
        }
        let rate = budget / n as f64;
        let cap = 64 * n + 1024;
        let mut times = vec![horizon];
        let mut t = horizon;
        while t > gamma {
            let next = t - noise_var(t) * rate;
            if !(next > 0.0) {
                return Err(LabError::Schedule(format!(
                    "step {} from t = {t} overshoots past 0 (N = {n} too small)",
                    times.len() - 1
                )));
            }
            times.push(next);
            t = next;
            if times.len() > cap {
                return Err(LabError::Schedule("adaptive iteration did not terminate".into()));
            }
        }
        Ok(Self {
            kind: ScheduleKind::Adaptive,
            horizon,
            gamma,
            n_requested: n,
            times,
        })
    }

    /// `N` equal steps from `T` to `γ`.
    pub fn constant(horizon: f64, gamma: f64, n: usize) -> Result<Self> {
        check_endpoints(horizon, gamma, n, true)?;
        let h = (horizon - gamma) / n as f64;
        let mut times: Vec<f64> = (0..n).map(|k| horizon - k as f64 * h).collect();
        times.push(gamma);
        Ok(Self {
            kind: ScheduleKind::Constant,
            horizon,
            gamma,
            n_requested: n,
            times,
        })
    }

    /// Steps proportional to the remaining time, i.e. geometric times
    /// `t_k = T·(γ/T)^{k/N}`.
    pub fn linear(horizon: f64, gamma: f64, n: usize) -> Result<Self> {
        check_endpoints(horizon, gamma, n, false)?;
        let ratio = (gamma / horizon).ln() / n as f64;
        let mut times: Vec<f64> = (0..n).map(|k| horizon * (ratio * k as f64).exp()).collect();
        times.push(gamma);
        Ok(Self {
            kind: ScheduleKind::Linear,
            horizon,
            gamma,
            n_requested: n,
            times,
        })
    }

    pub fn build(kind: ScheduleKind, horizon: f64, gamma: f64, n: usize) -> Result<Self> {
        match kind {
            ScheduleKind::Adaptive => Self::adaptive(horizon, gamma, n),
            ScheduleKind::Constant => Self::constant(horizon, gamma, n),
            ScheduleKind::Linear => Self::linear(horizon, gamma, n),
        }
    }

    /// Realized number of steps.
    pub fn len(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn terminal_time(&self) -> f64 {
        *self.times.last().expect("schedule has at least one time")
    }

    pub fn steps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[0] - w[1]).collect()
    }

    /// `(t_k, h_k)` for each step.
    pub fn iter_steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[0] - w[1]))
    }

    /// `Σ_k h_k / (1 - e^{-2 t_{k+1}})`: each step charged at the smallest
    /// noise level it reaches, an upper sum for `∫ dt / σ_t²`.
    /// Infinite when the schedule ends at `t = 0`.
    pub fn kl_budget(&self) -> f64 {
        self.times.windows(2).map(|w| (w[0] - w[1]) / noise_var(w[1])).sum()
    }

    /// Strictly decreasing times, positive steps, `times[0] = T`.
    pub fn validate(&self) -> Result<()> {
        if self.times.len() < 2 {
            return Err(LabError::Schedule("schedule needs at least one step".into()));
        }
        if self.times[0] != self.horizon {
            return Err(LabError::Schedule("first time must equal T".into()));
        }
        if self.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(LabError::Schedule("times must be finite and non-negative".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(LabError::Schedule("times must be strictly decreasing".into()));
        }
        Ok(())
    }
}

fn check_endpoints(horizon: f64, gamma: f64, n: usize, allow_zero_gamma: bool) -> Result<()> {
    if n == 0 {
        return invalid("schedule needs N >= 1");
    }
    if !horizon.is_finite() || !(gamma < horizon) {
        return invalid(format!("need gamma < T, got T = {horizon}, gamma = {gamma}"));
    }
    let ok = if allow_zero_gamma { gamma >= 0.0 } else { gamma > 0.0 };
    if !ok {
        return invalid(format!("gamma out of range: {gamma}"));
    }
    Ok(())
}
