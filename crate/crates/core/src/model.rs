//! Closed-form mathematics of the linear pure-birth process.
//!
//! A paper holding `n` citations at time `t` (years since publication) is cited
//! at rate
//!
//! ```text
//! λ_n(t) = (a·n + b) · r·e^{-r·t}
//! ```
//!
//! `a` is the cumulative-advantage gain, `b` the baseline scale and `r` the
//! decay rate of interest. Everything in this module depends on time only
//! through the integrated base intensity `γ(t, τ) = e^{-rt} − e^{-r(t+τ)}`.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

/// Smallest admissible cumulative-advantage gain.
pub const A_LOWER_BOUND: f64 = 1e-8;

/// Below this gain the transition law is evaluated through its Poisson limit.
pub const A_POISSON_THRESHOLD: f64 = 1e-6;

/// Parameters `(a, b, r)` of the citation process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Cumulative-advantage gain (dimensionless).
    pub a: f64,
    /// Baseline scale (dimensionless).
    pub b: f64,
    /// Decay rate, 1/years.
    pub r: f64,
}

impl ModelParams {
    /// Builds a validated parameter triple.
    pub fn new(a: f64, b: f64, r: f64) -> Result<Self> {
        let p = Self { a, b, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.r.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite parameters {self:?}")));
        }
        if self.a < A_LOWER_BOUND {
            return Err(Error::InvalidParams(format!(
                "a = {} is below the lower bound {A_LOWER_BOUND}",
                self.a
            )));
        }
        if self.b <= 0.0 || self.r <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "b and r must be positive, got b = {}, r = {}",
                self.b, self.r
            )));
        }
        Ok(())
    }

    /// Citation rate of a paper holding `n` citations at time `t`.
    pub fn rate(&self, n: u64, t: f64) -> f64 {
        (self.a * n as f64 + self.b) * self.r * (-self.r * t).exp()
    }
}

/// Current state of the counting process: `m` events observed by time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessState {
    pub m: u64,
    pub t: f64,
}

impl ProcessState {
    pub fn new(m: u64, t: f64) -> Result<Self> {
        if !t.is_finite() || t < 0.0 {
            return Err(domain(format!("state time must be finite and >= 0, got {t}")));
        }
        Ok(Self { m, t })
    }

    /// The state at publication: no events, `t = 0`.
    pub const fn origin() -> Self {
        Self { m: 0, t: 0.0 }
    }
}

/// A forward-looking time window. `Infinite` gives the exact long-time limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    Finite(f64),
    Infinite,
}

impl Window {
    pub fn finite(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(domain(format!("window must be finite and > 0, got {tau}")));
        }
        Ok(Window::Finite(tau))
    }

    /// Maps `f64::INFINITY` onto [`Window::Infinite`].
    pub fn from_years(tau: f64) -> Result<Self> {
        if tau == f64::INFINITY {
            Ok(Window::Infinite)
        } else {
            Self::finite(tau)
        }
    }
}

/// `expm1(x) / x`, continuous at zero.
pub fn exprel(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// The n-independent factor `r·e^{-rt}` of the citation rate.
pub fn base_intensity(params: &ModelParams, t: f64) -> Result<f64> {
    if t.is_nan() || t == f64::NEG_INFINITY || t < 0.0 {
        return Err(domain(format!("base intensity needs t >= 0, got {t}")));
    }
    Ok(params.r * (-params.r * t).exp())
}

/// Integrated base intensity `γ(t, τ) = e^{-rt} − e^{-r(t+τ)}`.
pub fn gamma_integral(params: &ModelParams, t: f64, tau: Window) -> f64 {
    let decay = (-params.r * t).exp();
    match tau {
        Window::Infinite => decay,
        Window::Finite(tau) => decay * -(-params.r * tau).exp_m1(),
    }
}

/// `ln Γ(k + n) − ln Γ(k)` without cancellation when `k` is huge.
fn ln_rising(k: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if k >= 1e4 && n <= 4096 {
        let nf = n as f64;
        let tail: f64 = (1..n).map(|i| (i as f64 / k).ln_1p()).sum();
        nf * k.ln() + tail
    } else {
        ln_gamma(k + n as f64) - ln_gamma(k)
    }
}

/// Natural log of the transition probability `p_{m,n}(t, τ)`.
pub fn ln_transition_pmf(params: &ModelParams, state: ProcessState, tau: Window, n: u64) -> f64 {
    let gamma = gamma_integral(params, state.t, tau);
    let ModelParams { a, b, .. } = *params;
    let m = state.m as f64;
    let nf = n as f64;
    if a < A_POISSON_THRESHOLD {
        // first-order limit; the dropped factor e^{aγ}-1 over aγ is within aγ/2 of one
        let mean = (b + a * m) * gamma;
        return if n == 0 {
            -mean
        } else {
            nf * mean.ln() - mean - ln_factorial(n)
        };
    }
    let shape = b / a + m;
    let growth = a * gamma;
    let success = if n == 0 { 0.0 } else { nf * (-(-growth).exp_m1()).ln() };
    ln_rising(shape, n) - ln_factorial(n) - (b + a * m) * gamma + success
}

/// Probability of exactly `n` new events in `(t, t+τ]` given `m` events by `t`.
///
/// This is a negative binomial law with shape `b/a + m` and success
/// probability `1 − e^{-aγ}`; for `a` below [`A_POISSON_THRESHOLD`] the Poisson
/// limit with mean `(b + a·m)γ` is used.
pub fn transition_pmf(params: &ModelParams, state: ProcessState, tau: Window, n: u64) -> f64 {
    ln_transition_pmf(params, state, tau, n).exp()
}

/// Expected number of new events in the window: `(b/a + m)(e^{aγ} − 1)`.
pub fn expected_new_citations(params: &ModelParams, state: ProcessState, tau: Window) -> f64 {
    let gamma = gamma_integral(params, state.t, tau);
    (params.b + params.a * state.m as f64) * gamma * exprel(params.a * gamma)
}

/// Expected lifetime citation count, `(b/a)(e^a − 1)`.
pub fn expected_total_citations(params: &ModelParams) -> f64 {
    expected_new_citations(params, ProcessState::origin(), Window::Infinite)
}

/// Expected initial citation rate `v(0) = b·r`.
pub fn initial_velocity(params: &ModelParams) -> f64 {
    params.b * params.r
}

/// Doubling time `ln 2 / r` in years.
pub fn doubling_time(r: f64) -> Result<f64> {
    if !r.is_finite() || r <= 0.0 {
        return Err(domain(format!("doubling time needs r > 0, got {r}")));
    }
    Ok(std::f64::consts::LN_2 / r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, b: f64, r: f64) -> ModelParams {
        ModelParams::new(a, b, r).unwrap()
    }

    fn close(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol * (1.0 + y.abs())
    }

    #[test]
    fn params_reject_out_of_bounds() {
        assert!(ModelParams::new(1e-9, 1.0, 0.1).is_err());
        assert!(ModelParams::new(0.5, 0.0, 0.1).is_err());
        assert!(ModelParams::new(0.5, 1.0, -0.1).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 0.1).is_err());
        assert!(ModelParams::new(1e-8, 1.0, 0.1).is_ok());
    }

    #[test]
    fn base_intensity_values() {
        let q = p(1.0, 1.0, 0.05);
        assert_eq!(base_intensity(&q, 0.0).unwrap(), 0.05);
        assert_eq!(base_intensity(&q, f64::INFINITY).unwrap(), 0.0);
        assert!(base_intensity(&q, f64::NAN).is_err());
        assert!(base_intensity(&q, -1.0).is_err());
        let half_life = p(1.0, 1.0, std::f64::consts::LN_2 / 13.0);
        let ratio = base_intensity(&half_life, 13.0).unwrap() / half_life.r;
        assert!((ratio - 0.5).abs() < 1e-14);
        let q = p(1.0, 1.0, 0.0533);
        assert!((base_intensity(&q, 13.0).unwrap() - 0.0533 * (-0.6929f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn gamma_integral_values_and_additivity() {
        let q = p(1.0, 1.0, 0.05);
        assert_eq!(gamma_integral(&q, 0.0, Window::Infinite), 1.0);
        let g = gamma_integral(&q, 0.0, Window::Finite(1.0));
        assert!((g - (1.0 - (-0.05f64).exp())).abs() < 1e-15);
        assert!((g - 0.04877).abs() < 1e-5);
        // midpoint quadrature of r e^{-ru} on [0, 1]
        let steps = 100_000;
        let h = 1.0 / steps as f64;
        let quad: f64 = (0..steps)
            .map(|i| 0.05 * (-0.05 * (i as f64 + 0.5) * h).exp() * h)
            .sum();
        assert!((g - quad).abs() < 1e-12);
        let q = p(1.0, 1.0, 0.1);
        let lhs = gamma_integral(&q, 0.0, Window::Finite(5.0)) + gamma_integral(&q, 5.0, Window::Finite(5.0));
        assert!((lhs - gamma_integral(&q, 0.0, Window::Finite(10.0))).abs() < 1e-15);
    }

    #[test]
    fn no_event_term_collapses_to_exponential() {
        // a = 0.5, b = 1 with γ = 0.3: r chosen so that γ(0, 1) = 0.3
        let r = -(0.7f64).ln();
        let q = p(0.5, 1.0, r);
        let w = Window::Finite(1.0);
        let g = gamma_integral(&q, 0.0, w);
        assert!((g - 0.3).abs() < 1e-15);
        let direct = (-(0.5f64 * g)).exp().powf(1.0 / 0.5);
        let pmf0 = transition_pmf(&q, ProcessState::origin(), w, 0);
        assert!((pmf0 - direct).abs() < 1e-15);
        assert!((pmf0 - (-0.3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn poisson_limit_matches_explicit_formula() {
        let q = p(1e-8, 2.0, 0.05);
        let w = Window::Finite(1.0);
        let mean = 2.0 * gamma_integral(&q, 0.0, w);
        assert!((mean - 0.09754).abs() < 1e-5);
        let mut fact = 1.0;
        for k in 0..12u64 {
            if k > 0 {
                fact *= k as f64;
            }
            let poisson = mean.powi(k as i32) * (-mean).exp() / fact;
            let pmf = transition_pmf(&q, ProcessState::origin(), w, k);
            assert!((pmf - poisson).abs() < 1e-9, "k={k}: {pmf} vs {poisson}");
        }
    }

    #[test]
    fn huge_shape_does_not_overflow() {
        // b/a = 1e9 on the negative-binomial branch
        let q = p(1e-6, 1e3, 0.1);
        let w = Window::Finite(2.0);
        let total: f64 = (0..2000)
            .map(|n| transition_pmf(&q, ProcessState::origin(), w, n))
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn expected_counts() {
        assert!(close(expected_total_citations(&p(1e-8, 7.0, 0.1)), 7.0, 1e-7));
        assert!(close(
            expected_total_citations(&p(1.0, 2.0, 0.1)),
            2.0 * (1f64.exp() - 1.0),
            1e-14
        ));
        assert!((expected_total_citations(&p(1.0, 2.0, 0.1)) - 3.43656).abs() < 1e-5);
        assert!((expected_total_citations(&p(2.0, 1.0, 0.1)) - 3.19453).abs() < 1e-5);
        let q = p(0.7, 3.0, 0.2);
        let direct = (3.0 / 0.7) * ((0.7f64).exp() - 1.0);
        assert!(close(
            expected_new_citations(&q, ProcessState::origin(), Window::Infinite),
            direct,
            1e-14
        ));
        let state = ProcessState::new(4, 2.0).unwrap();
        let g = gamma_integral(&q, 2.0, Window::Finite(3.0));
        let direct = (3.0 / 0.7 + 4.0) * ((0.7 * g).exp() - 1.0);
        assert!(close(
            expected_new_citations(&q, state, Window::Finite(3.0)),
            direct,
            1e-13
        ));
    }

    #[test]
    fn velocity_is_slope_at_origin() {
        let q = p(1.0, 2.0, 0.05);
        assert!((initial_velocity(&q) - 0.1).abs() < 1e-16);
        let h = 1e-6;
        let slope = expected_new_citations(&q, ProcessState::origin(), Window::Finite(h)) / h;
        assert!(close(slope, initial_velocity(&q), 1e-6));
        assert!(initial_velocity(&p(1.0, 1e-300, 0.05)) < 1e-300);
    }

    #[test]
    fn doubling_time_values() {
        assert!((doubling_time(0.0533).unwrap() - 13.0).abs() < 0.01);
        assert!((doubling_time(std::f64::consts::LN_2).unwrap() - 1.0).abs() < 1e-15);
        let r = 0.0817;
        let back = std::f64::consts::LN_2 / doubling_time(r).unwrap();
        assert!((back - r).abs() < 1e-12);
        assert!(doubling_time(0.0).is_err());
        assert!(doubling_time(-1.0).is_err());
    }

    #[test]
    fn rate_matches_definition() {
        let q = p(0.5, 2.0, 0.1);
        let expect = (0.5 * 3.0 + 2.0) * 0.1 * (-0.1f64 * 4.0).exp();
        assert!((q.rate(3, 4.0) - expect).abs() < 1e-15);
    }
}
