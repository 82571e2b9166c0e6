//! Box-constrained Nelder–Mead simplex search with restarts.

/// Settings for [`minimize_bounded`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Simplex diameter (max-norm) below which the search may stop.
    pub xtol: f64,
    /// Spread of objective values across the simplex below which it may stop.
    pub ftol: f64,
    /// Iteration budget shared by all restarts.
    pub max_iterations: usize,
    /// Edge length of each freshly built simplex.
    pub initial_step: f64,
    /// Maximum number of restarts from the incumbent after convergence.
    pub max_restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-6,
            ftol: 1e-9,
            max_iterations: 2000,
            initial_step: 0.5,
            max_restarts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Objective<'a, F> {
    f: F,
    lower: &'a [f64],
    upper: &'a [f64],
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Objective<'_, F> {
    fn project(&self, x: &mut [f64]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(self.lower).zip(self.upper) {
            *v = v.clamp(lo, hi);
        }
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn build_simplex<F: FnMut(&[f64]) -> f64>(
    obj: &mut Objective<'_, F>,
    center: &[f64],
    step: f64,
) -> Vec<(Vec<f64>, f64)> {
    let mut simplex = Vec::with_capacity(center.len() + 1);
    let fc = obj.eval(center);
    simplex.push((center.to_vec(), fc));
    for i in 0..center.len() {
        let mut x = center.to_vec();
        x[i] = if center[i] + step <= obj.upper[i] {
            center[i] + step
        } else {
            center[i] - step
        };
        obj.project(&mut x);
        let fx = obj.eval(&x);
        simplex.push((x, fx));
    }
    simplex
}

fn sort(simplex: &mut [(Vec<f64>, f64)]) {
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
}

fn converged(simplex: &[(Vec<f64>, f64)], xtol: f64, ftol: f64) -> bool {
    let (best, fbest) = (&simplex[0].0, simplex[0].1);
    let fspread = simplex.iter().map(|(_, f)| (f - fbest).abs()).fold(0.0, f64::max);
    let xspread = simplex
        .iter()
        .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    xspread <= xtol && fspread <= ftol
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// Trial points are projected onto the box. After each convergence the
/// simplex is rebuilt around the incumbent; the search ends once a restart
/// fails to improve the objective by more than `ftol`.
pub fn minimize_bounded<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &SimplexOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0 && lower.len() == n && upper.len() == n);
    let mut obj = Objective {
        f,
        lower,
        upper,
        evaluations: 0,
    };
    let mut start = x0.to_vec();
    obj.project(&mut start);

    let mut iterations = 0;
    let mut restarts = 0;
    let mut step = opts.initial_step;
    let mut simplex = build_simplex(&mut obj, &start, step);
    sort(&mut simplex);
    let mut incumbent = simplex[0].1;
    let mut done = false;

    while iterations < opts.max_iterations {
        if converged(&simplex, opts.xtol, opts.ftol) {
            let improved = incumbent - simplex[0].1 > opts.ftol;
            if (restarts > 0 && !improved) || restarts >= opts.max_restarts {
                done = true;
                break;
            }
            restarts += 1;
            incumbent = simplex[0].1;
            step = (step * 0.5).max(10.0 * opts.xtol);
            let center = simplex[0].0.clone();
            simplex = build_simplex(&mut obj, &center, step);
            sort(&mut simplex);
            continue;
        }
        iterations += 1;

        let worst = simplex[n].1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |coef: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, w)| c + coef * (c - w)).collect()
        };

        let mut xr = along(1.0, &simplex[n].0);
        obj.project(&mut xr);
        let fr = obj.eval(&xr);

        if fr < simplex[0].1 {
            let mut xe = along(2.0, &simplex[n].0);
            obj.project(&mut xe);
            let fe = obj.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (mut xc, outside) = if fr < worst {
                (along(0.5, &simplex[n].0), true)
            } else {
                (along(-0.5, &simplex[n].0), false)
            };
            obj.project(&mut xc);
            let fc = obj.eval(&xc);
            if (outside && fc <= fr) || (!outside && fc < worst) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    obj.project(&mut x);
                    let fx = obj.eval(&x);
                    *vertex = (x, fx);
                }
            }
        }
        sort(&mut simplex);
    }

    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations: obj.evaluations,
        converged: done,
    }
}
