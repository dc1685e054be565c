//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Used by the maximum-likelihood fit; the objective supplies its own gradient.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once `|grad|_inf <= gradient_tolerance * max(1, |f|)`.
    pub gradient_tolerance: f64,
    /// Stop once an iteration improves `f` by less than this fraction of `max(1, |f|)`.
    pub value_tolerance: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 12,
            max_iterations: 3000,
            gradient_tolerance: 1e-9,
            value_tolerance: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Probe {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimizes `objective`, which writes the gradient into its second argument
/// and returns the value. The returned point never has a larger value than `x0`.
pub fn minimize<F>(mut objective: F, x0: &[f64], config: &LbfgsConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        let mut g = vec![0.0; n];
        let f = objective(x, &mut g);
        evaluations += 1;
        Probe {
            x: x.to_vec(),
            f,
            g,
        }
    };

    let mut current = eval(x0);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        let scale = current.f.abs().max(1.0);
        if !current.f.is_finite() {
            break;
        }
        if inf_norm(&current.g) <= config.gradient_tolerance * scale {
            converged = true;
            break;
        }
        iterations += 1;

        let mut direction = two_loop(&current.g, &history);
        let mut slope = dot(&direction, &current.g);
        if !(slope < 0.0) {
            history.clear();
            direction = current.g.iter().map(|g| -g).collect();
            slope = dot(&direction, &current.g);
        }
        let initial_step = if history.is_empty() {
            1.0 / inf_norm(&current.g).max(1e-300)
        } else {
            1.0
        };
        let initial_step = initial_step.min(1.0);

        let next = match line_search(&mut eval, &current, &direction, slope, initial_step) {
            Some(p) => p,
            None if !history.is_empty() => {
                // stale curvature pairs; retry from steepest descent next round
                history.clear();
                continue;
            }
            None => {
                converged = true;
                break;
            }
        };

        let improvement = current.f - next.f;
        let s: Vec<f64> = next.x.iter().zip(&current.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&current.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        current = next;
        if improvement <= config.value_tolerance * current.f.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    Minimum {
        x: current.x,
        value: current.f,
        iterations,
        evaluations,
        converged,
    }
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;

fn step_point(start: &Probe, dir: &[f64], alpha: f64) -> Vec<f64> {
    start
        .x
        .iter()
        .zip(dir)
        .map(|(x, d)| x + alpha * d)
        .collect()
}

/// Strong-Wolfe line search (bracketing then zoom). Returns `None` if no
/// point with sufficient decrease was found.
fn line_search<E>(
    eval: &mut E,
    start: &Probe,
    dir: &[f64],
    slope0: f64,
    alpha_init: f64,
) -> Option<Probe>
where
    E: FnMut(&[f64]) -> Probe,
{
    let f0 = start.f;
    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut slope_prev = slope0;
    let mut alpha = alpha_init;
    let mut best: Option<Probe> = None;

    let keep_best = |p: Probe, best: &mut Option<Probe>| {
        if p.f < f0 && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(p);
        }
    };

    for i in 0..MAX_LINE_EVALS {
        let probe = eval(&step_point(start, dir, alpha));
        let slope = dot(&probe.g, dir);
        if !probe.f.is_finite()
            || probe.f > f0 + C1 * alpha * slope0
            || (i > 0 && probe.f >= f_prev)
        {
            let lo = (alpha_prev, f_prev, slope_prev);
            let hi = (alpha, probe.f, slope);
            keep_best(probe, &mut best);
            return zoom(eval, start, dir, slope0, lo, hi).or(best);
        }
        if slope.abs() <= -C2 * slope0 {
            return Some(probe);
        }
        if slope >= 0.0 {
            let lo = (alpha, probe.f, slope);
            let hi = (alpha_prev, f_prev, slope_prev);
            keep_best(probe, &mut best);
            return zoom(eval, start, dir, slope0, lo, hi).or(best);
        }
        alpha_prev = alpha;
        f_prev = probe.f;
        slope_prev = slope;
        keep_best(probe, &mut best);
        alpha *= 2.0;
    }
    best
}

fn cubic_min(a: (f64, f64, f64), b: (f64, f64, f64)) -> Option<f64> {
    let (x0, f0, g0) = a;
    let (x1, f1, g1) = b;
    let d1 = g0 + g1 - 3.0 * (f0 - f1) / (x0 - x1);
    let disc = d1 * d1 - g0 * g1;
    if disc < 0.0 {
        return None;
    }
    let d2 = (x1 - x0).signum() * disc.sqrt();
    let x = x1 - (x1 - x0) * (g1 + d2 - d1) / (g1 - g0 + 2.0 * d2);
    x.is_finite().then_some(x)
}

fn zoom<E>(
    eval: &mut E,
    start: &Probe,
    dir: &[f64],
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
) -> Option<Probe>
where
    E: FnMut(&[f64]) -> Probe,
{
    let f0 = start.f;
    let mut best: Option<Probe> = None;
    for _ in 0..MAX_LINE_EVALS {
        let (a_lo, a_hi) = (lo.0.min(hi.0), lo.0.max(hi.0));
        let width = a_hi - a_lo;
        if width <= 1e-16 * a_hi.max(1e-300) {
            break;
        }
        let mut alpha = cubic_min(lo, hi).unwrap_or(0.5 * (lo.0 + hi.0));
        if alpha <= a_lo + 0.1 * width || alpha >= a_hi - 0.1 * width {
            alpha = 0.5 * (lo.0 + hi.0);
        }
        let probe = eval(&step_point(start, dir, alpha));
        let slope = dot(&probe.g, dir);
        if !probe.f.is_finite() || probe.f > f0 + C1 * alpha * slope0 || probe.f >= lo.1 {
            hi = (alpha, probe.f, slope);
        } else {
            if slope.abs() <= -C2 * slope0 {
                return Some(probe);
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, probe.f, slope);
            if best.as_ref().is_none_or(|b| probe.f < b.f) {
                best = Some(probe);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let target = [1.0, -2.0, 3.0, 0.5];
        let weights = [1.0, 10.0, 100.0, 1000.0];
        let res = minimize(
            |x, g| {
                let mut f = 0.0;
                for i in 0..4 {
                    let d = x[i] - target[i];
                    f += weights[i] * d * d;
                    g[i] = 2.0 * weights[i] * d;
                }
                f
            },
            &[0.0; 4],
            &LbfgsConfig::default(),
        );
        for i in 0..4 {
            assert!((res.x[i] - target[i]).abs() < 1e-6, "{:?}", res.x);
        }
        assert!(res.value < 1e-10);
    }

    #[test]
    fn rosenbrock() {
        let res = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[-1.2, 1.0],
            &LbfgsConfig {
                gradient_tolerance: 1e-10,
                ..Default::default()
            },
        );
        assert!(
            (res.x[0] - 1.0).abs() < 1e-5 && (res.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            res
        );
    }

    #[test]
    fn never_worse_than_start() {
        let start = [0.3, 0.7];
        let f0 = (start[0] as f64).sin() + (start[1] as f64).cos();
        let res = minimize(
            |x, g| {
                g[0] = x[0].cos();
                g[1] = -x[1].sin();
                x[0].sin() + x[1].cos()
            },
            &start,
            &LbfgsConfig::default(),
        );
        assert!(res.value <= f0);
        assert!((res.value + 2.0).abs() < 1e-8);
    }
}
