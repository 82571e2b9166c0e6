//! Exact likelihood of an observed citation history and bounded maximum
//! likelihood estimation of `(a, b, r)`.
//!
//! Between events the count `N(t)` is constant, so the compensator
//! `∫₀ᵀ λ_{N(t)}(t) dt` is a finite sum of `γ` terms and the likelihood is
//! available in closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{exprel, gamma_integral, ModelParams, ProcessState, Window, A_LOWER_BOUND};
use crate::optim::{minimize_bounded, SimplexOptions};
use crate::simulate::CitationHistory;

/// Decay rate used when a history is too short to say anything (13-year doubling).
pub const FALLBACK_R: f64 = std::f64::consts::LN_2 / 13.0;

/// Histories with at most this many events get the fallback initial guess.
pub const DEGENERATE_EVENT_COUNT: usize = 2;

/// Box constraints and stopping rules for [`fit_mle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub lower: ModelParams,
    pub upper: ModelParams,
    /// Simplex diameter tolerance in log-parameter space.
    pub param_tol: f64,
    pub func_tol: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lower: ModelParams {
                a: A_LOWER_BOUND,
                b: 1e-10,
                r: 1e-10,
            },
            upper: ModelParams {
                a: 1e3,
                b: 1e6,
                r: 10.0,
            },
            param_tol: 1e-6,
            func_tol: 1e-9,
            max_iterations: 2000,
        }
    }
}

impl FitOptions {
    fn log_bounds(&self) -> ([f64; 3], [f64; 3]) {
        (to_log(&self.lower), to_log(&self.upper))
    }

    fn clamp(&self, p: ModelParams) -> ModelParams {
        ModelParams {
            a: p.a.clamp(self.lower.a, self.upper.a),
            b: p.b.clamp(self.lower.b, self.upper.b),
            r: p.r.clamp(self.lower.r, self.upper.r),
        }
    }

    fn simplex(&self) -> SimplexOptions {
        SimplexOptions {
            xtol: self.param_tol,
            ftol: self.func_tol,
            max_iterations: self.max_iterations,
            ..SimplexOptions::default()
        }
    }
}

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub window_t: f64,
    pub initial_guess: ModelParams,
    pub n_events: usize,
}

fn to_log(p: &ModelParams) -> [f64; 3] {
    [p.a.ln(), p.b.ln(), p.r.ln()]
}

fn from_log(x: &[f64]) -> ModelParams {
    ModelParams {
        a: x[0].exp(),
        b: x[1].exp(),
        r: x[2].exp(),
    }
}

/// Probability of no event in the next `τ` years: `exp(−(a·m + b)·γ(t, τ))`.
pub fn no_event_probability(params: &ModelParams, state: ProcessState, tau: Window) -> f64 {
    let level = params.a * state.m as f64 + params.b;
    (-level * gamma_integral(params, state.t, tau)).exp()
}

/// Density of the wait `τ` until the next event. Defective: its total mass is
/// `1 − exp(−(a·m + b)·e^{−rt})`.
pub fn waiting_time_density(params: &ModelParams, state: ProcessState, tau: f64) -> Result<f64> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(domain(format!("waiting time must be finite and >= 0, got {tau}")));
    }
    let survival = if tau == 0.0 {
        1.0
    } else {
        no_event_probability(params, state, Window::Finite(tau))
    };
    Ok(params.rate(state.m, state.t + tau) * survival)
}

/// Log-likelihood of sorted event times on `[0, window]`, without input checks.
///
/// Returns `−∞` when a rate factor is non-positive.
pub fn log_likelihood_events(params: &ModelParams, events: &[f64], window: f64) -> f64 {
    let ModelParams { a, b, r } = *params;
    if !(r > 0.0) || !(b > 0.0) || a < 0.0 {
        return f64::NEG_INFINITY;
    }
    let ln_r = r.ln();
    let mut ln_rates = 0.0;
    let mut compensator_a = 0.0;
    for (i, &t) in events.iter().enumerate() {
        ln_rates += (a * i as f64 + b).ln() + ln_r - r * t;
        // e^{-r t_i} − e^{-r T}
        compensator_a += (-r * t).exp() * -(-r * (window - t)).exp_m1();
    }
    let compensator = b * -(-r * window).exp_m1() + a * compensator_a;
    ln_rates - compensator
}

/// Log-likelihood of `history` observed over `[0, window_t]`.
pub fn log_likelihood(params: &ModelParams, history: &CitationHistory, window_t: f64) -> Result<f64> {
    check_window(&history.events, window_t)?;
    Ok(log_likelihood_events(params, &history.events, window_t))
}

fn check_window(events: &[f64], window_t: f64) -> Result<()> {
    if !window_t.is_finite() || window_t <= 0.0 {
        return Err(domain(format!(
            "observation window must be finite and > 0, got {window_t}"
        )));
    }
    if let Some(&t) = events.iter().find(|&&t| !(0.0..=window_t).contains(&t)) {
        return Err(Error::EventOutsideWindow {
            time: t,
            window: window_t,
        });
    }
    Ok(())
}

/// Defaults for histories too short to fit: no cumulative advantage, a
/// 13-year doubling time, and `b` matched to the observed count.
pub fn fallback_params(n_events: usize, options: &FitOptions) -> ModelParams {
    let a = A_LOWER_BOUND;
    let b = n_events as f64 / exprel(a);
    options.clamp(ModelParams { a, b, r: FALLBACK_R })
}

fn curve_misfit(params: &ModelParams, events: &[f64]) -> f64 {
    events
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let g = -(-params.r * t).exp_m1();
            let mean = params.b * g * exprel(params.a * g);
            let d = (j + 1) as f64 - mean;
            d * d
        })
        .sum()
}

/// Seed point for the likelihood search: least-squares fit of the cumulative
/// count curve `C(t_j) = j` against the expected count from publication.
pub fn initial_guess(history: &CitationHistory, window_t: f64) -> Result<ModelParams> {
    initial_guess_with(history, window_t, &FitOptions::default())
}

pub fn initial_guess_with(history: &CitationHistory, window_t: f64, options: &FitOptions) -> Result<ModelParams> {
    check_window(&history.events, window_t)?;
    Ok(guess_events(&history.events, window_t, options))
}

fn guess_events(events: &[f64], window_t: f64, options: &FitOptions) -> ModelParams {
    let n = events.len();
    if n <= DEGENERATE_EVENT_COUNT {
        return fallback_params(n, options);
    }
    let (lo, hi) = options.log_bounds();
    let simplex = SimplexOptions {
        xtol: 1e-4,
        ftol: 1e-8,
        max_iterations: 600,
        max_restarts: 1,
        ..SimplexOptions::default()
    };
    let mut best: Option<(f64, ModelParams)> = None;
    for &a in &[1e-3, 0.5, 2.0] {
        for &r in &[0.02, 0.1, 0.5] {
            let g = -(-r * window_t).exp_m1();
            let b = n as f64 / (g * exprel(a * g));
            let start = options.clamp(ModelParams { a, b, r });
            let m = minimize_bounded(
                |x| curve_misfit(&from_log(x), events),
                &to_log(&start),
                &lo,
                &hi,
                &simplex,
            );
            let candidate = options.clamp(from_log(&m.x));
            if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
                best = Some((m.value, candidate));
            }
        }
    }
    best.map(|(_, p)| p).unwrap_or_else(|| fallback_params(n, options))
}

/// Bounded maximum-likelihood fit of `(a, b, r)`.
///
/// The search runs in log-parameter space from the curve-fit guess and from
/// the fallback point; the better optimum wins. Non-convergence is reported
/// through [`FitResult::converged`], never as an error.
pub fn fit_mle(history: &CitationHistory, window_t: f64, options: &FitOptions) -> Result<FitResult> {
    check_window(&history.events, window_t)?;
    Ok(fit_events(&history.events, window_t, options))
}

fn fit_events(events: &[f64], window_t: f64, options: &FitOptions) -> FitResult {
    let guess = guess_events(events, window_t, options);
    let (lo, hi) = options.log_bounds();
    let simplex = options.simplex();
    let objective = |x: &[f64]| -log_likelihood_events(&from_log(x), events, window_t);

    let starts = [guess, fallback_params(events.len(), options)];
    let mut best: Option<crate::optim::Minimum> = None;
    let mut iterations = 0;
    for start in starts {
        let m = minimize_bounded(objective, &to_log(&start), &lo, &hi, &simplex);
        iterations += m.iterations;
        let better = match &best {
            None => true,
            Some(b) => m.value < b.value,
        };
        if better {
            best = Some(m);
        }
    }
    let best = best.expect("at least one start");
    let params = options.clamp(from_log(&best.x));
    let log_likelihood = log_likelihood_events(&params, events, window_t);
    FitResult {
        params,
        log_likelihood,
        converged: best.converged && log_likelihood.is_finite(),
        iterations,
        window_t,
        initial_guess: guess,
        n_events: events.len(),
    }
}

/// Central-difference gradient of the log-likelihood in `(ln a, ln b, ln r)`.
pub fn log_likelihood_gradient(params: &ModelParams, events: &[f64], window_t: f64, step: f64) -> [f64; 3] {
    let x = to_log(params);
    let mut grad = [0.0; 3];
    for i in 0..3 {
        let mut up = x;
        let mut down = x;
        up[i] += step;
        down[i] -= step;
        let fu = log_likelihood_events(&from_log(&up), events, window_t);
        let fd = log_likelihood_events(&from_log(&down), events, window_t);
        grad[i] = (fu - fd) / (2.0 * step);
    }
    grad
}

/// First-order optimality of a fit: every log-parameter either has a small
/// gradient, `|g| < 1e-4·(1 + |ln L|)`, or sits on its bound.
pub fn is_first_order_optimal(fit: &FitResult, events: &[f64], options: &FitOptions, step: f64) -> bool {
    let grad = log_likelihood_gradient(&fit.params, events, fit.window_t, step);
    let x = to_log(&fit.params);
    let (lo, hi) = options.log_bounds();
    let scale = 1e-4 * (1.0 + fit.log_likelihood.abs());
    (0..3).all(|i| {
        let at_lower = x[i] - lo[i] <= 1e-6 && grad[i] <= scale;
        let at_upper = hi[i] - x[i] <= 1e-6 && grad[i] >= -scale;
        grad[i].abs() < scale || at_lower || at_upper
    })
}

/// How each paper's observation window is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    /// Calendar date at which the corpus stops.
    pub corpus_end: f64,
    /// Optional cap on the observation length.
    pub horizon: Option<f64>,
}

impl WindowPolicy {
    pub fn window_for(&self, history: &CitationHistory) -> f64 {
        let age = self.corpus_end - history.published_at;
        match self.horizon {
            Some(h) => age.min(h),
            None => age,
        }
    }
}

/// Fits every history independently, preserving order. Papers whose window is
/// empty come back as errors; the batch always completes. Events past the
/// window are ignored.
pub fn fit_corpus(histories: &[CitationHistory], policy: WindowPolicy, options: &FitOptions) -> Vec<Result<FitResult>> {
    histories
        .par_iter()
        .map(|h| {
            let window = policy.window_for(h);
            if !(window > 0.0) {
                return Err(domain(format!(
                    "paper {}: empty observation window ({window} years)",
                    h.paper_id
                )));
            }
            let cut = h.events.partition_point(|&t| t <= window);
            Ok(fit_events(&h.events[..cut], window, options))
        })
        .collect()
}

/// [`fit_corpus`] on a dedicated pool of `workers` threads.
pub fn fit_corpus_with_workers(
    histories: &[CitationHistory],
    policy: WindowPolicy,
    options: &FitOptions,
    workers: usize,
) -> Vec<Result<FitResult>> {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(|| fit_corpus(histories, policy, options)),
        Err(_) => fit_corpus(histories, policy, options),
    }
}
