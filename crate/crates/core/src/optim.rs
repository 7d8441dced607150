//! Derivative-free minimisation over a box.
//!
//! Nelder–Mead where every trial point is projected back onto the box. After
//! convergence the simplex is rebuilt around the best point and the search
//! restarted, which guards against the collapse that projection can cause.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Stop when the simplex spread in function value falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter (in the caller's coordinates) falls below this.
    pub x_tol: f64,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 20_000,
            f_tol: 1e-12,
            x_tol: 1e-10,
            initial_step: 0.1,
            restarts: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

pub fn minimize_in_box<F>(
    f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &NelderMeadOptions,
) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let project = |x: &mut [f64]| {
        for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut best = start.to_vec();
    project(&mut best);
    let mut best_value = eval(&best);
    let mut converged = false;

    for round in 0..=options.restarts {
        let step = options.initial_step / (1 << round.min(8)) as f64;
        let (x, value, done) = simplex_search(&mut eval, &best, lower, upper, step, options, &project);
        let improved = value < best_value - options.f_tol.max(1e-15 * best_value.abs());
        if value <= best_value {
            best = x;
            best_value = value;
        }
        converged = done;
        if !improved && round > 0 {
            break;
        }
    }
    Minimum { x: best, value: best_value, evaluations, converged }
}

fn simplex_search<E, P>(
    eval: &mut E,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    step: f64,
    options: &NelderMeadOptions,
    project: &P,
) -> (Vec<f64>, f64, bool)
where
    E: FnMut(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for k in 0..dim {
        let mut v = start.to_vec();
        let width = upper[k] - lower[k];
        let h = if width.is_finite() { step * width } else { step * start[k].abs().max(1.0) };
        v[k] = if v[k] + h <= upper[k] { v[k] + h } else { v[k] - h };
        project(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let budget = options.max_evaluations / (options.restarts + 1);
    let mut used = 0usize;

    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= options.f_tol * (1.0 + values[0].abs()) && diameter <= options.x_tol.max(1e-8) {
            return (simplex[0].clone(), values[0], true);
        }
        if diameter <= options.x_tol {
            return (simplex[0].clone(), values[0], true);
        }
        if used >= budget {
            return (simplex[0].clone(), values[0], false);
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|v| v[k]).sum::<f64>() / dim as f64)
            .collect();
        let toward = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> =
                centroid.iter().zip(&simplex[dim]).map(|(c, w)| c + t * (w - c)).collect();
            project(&mut p);
            p
        };

        let reflected = toward(-1.0);
        let fr = eval(&reflected);
        used += 1;
        if fr < values[0] {
            let expanded = toward(-2.0);
            let fe = eval(&expanded);
            used += 1;
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[dim] {
            let p = toward(-0.5);
            let v = eval(&p);
            (p, v)
        } else {
            let p = toward(0.5);
            let v = eval(&p);
            (p, v)
        };
        used += 1;
        if fc < values[dim].min(fr) {
            simplex[dim] = contracted;
            values[dim] = fc;
            continue;
        }
        for i in 1..=dim {
            let mut p: Vec<f64> =
                simplex[0].iter().zip(&simplex[i]).map(|(b, v)| b + 0.5 * (v - b)).collect();
            project(&mut p);
            values[i] = eval(&p);
            simplex[i] = p;
            used += 1;
        }
    }
}
