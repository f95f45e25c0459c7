//! BFGS quasi-Newton minimization with a strong-Wolfe line search.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search_evaluations: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            gradient_tolerance: 1e-8,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_evaluations: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

/// An objective that returns its value and gradient together.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

struct LineSearch<'a, O: Objective> {
    f: &'a mut O,
    x0: &'a [f64],
    dir: &'a [f64],
    value0: f64,
    slope0: f64,
    opts: &'a BfgsOptions,
    evaluations: usize,
}

impl<O: Objective> LineSearch<'_, O> {
    fn probe(&mut self, alpha: f64) -> Result<Point> {
        let x: Vec<f64> = self.x0.iter().zip(self.dir).map(|(a, d)| a + alpha * d).collect();
        let (value, grad) = self.f.evaluate(&x)?;
        self.evaluations += 1;
        Ok(Point {
            alpha,
            value,
            slope: dot(&grad, self.dir),
            x,
            grad,
        })
    }

    fn armijo_fails(&self, p: &Point) -> bool {
        !(p.value <= self.value0 + self.opts.c1 * p.alpha * self.slope0)
    }

    fn curvature_holds(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.opts.c2 * self.slope0
    }

    /// Bracketing phase; returns a point satisfying both strong-Wolfe
    /// conditions or `None` when the evaluation budget runs out.
    fn run(&mut self) -> Result<Option<Point>> {
        let mut prev = Point {
            alpha: 0.0,
            value: self.value0,
            slope: self.slope0,
            x: self.x0.to_vec(),
            grad: Vec::new(),
        };
        let mut alpha = 1.0;
        let mut first = true;
        while self.evaluations < self.opts.max_line_search_evaluations {
            let p = self.probe(alpha)?;
            if !p.value.is_finite() {
                // Step into a non-finite region: shrink and retry.
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
            if self.armijo_fails(&p) || (!first && p.value >= prev.value) {
                return self.zoom(prev, p);
            }
            if self.curvature_holds(&p) {
                return Ok(Some(p));
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            first = false;
            alpha *= 2.0;
            prev = p;
        }
        Ok(None)
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Result<Option<Point>> {
        while self.evaluations < self.opts.max_line_search_evaluations {
            let alpha = interpolate(&lo, &hi);
            if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
                break;
            }
            let p = self.probe(alpha)?;
            if self.armijo_fails(&p) || p.value >= lo.value {
                hi = p;
            } else {
                if self.curvature_holds(&p) {
                    return Ok(Some(p));
                }
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        // Budget exhausted: accept the best sufficient-decrease point if any.
        Ok((lo.alpha > 0.0).then_some(lo))
    }
}

/// Cubic interpolation between the bracket ends, safeguarded to stay in the
/// middle 80% of the interval; falls back to bisection.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = 0.5 * (a + b);
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if t.is_finite() && t > left + margin && t < right - margin {
        t
    } else {
        mid
    }
}

/// Minimizes `f` from `x0`. `on_iteration` sees the iteration number, the
/// accepted point and its value, starting with iteration 0 at `x0`.
pub fn minimize<O: Objective>(
    f: &mut O,
    x0: &[f64],
    opts: &BfgsOptions,
    mut on_iteration: impl FnMut(usize, &[f64], f64) -> Result<()>,
) -> Result<BfgsOutcome> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut value, mut grad) = f.evaluate(&x)?;
    let mut evaluations = 1;
    on_iteration(0, &x, value)?;
    // Inverse Hessian approximation, row-major.
    let mut inv = identity(n);
    let mut scaled = false;
    let mut iteration = 0;
    let termination = loop {
        if norm(&grad) <= opts.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iteration >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        let mut dir = mat_vec(&inv, &grad, n);
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) {
            inv = identity(n);
            scaled = false;
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&dir, &grad);
        }
        let mut search = LineSearch {
            f: &mut *f,
            x0: &x,
            dir: &dir,
            value0: value,
            slope0: slope,
            opts,
            evaluations: 0,
        };
        let accepted = search.run()?;
        evaluations += search.evaluations;
        let Some(p) = accepted else {
            break Termination::LineSearchFailure;
        };
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                inv.iter_mut().for_each(|v| *v *= gamma);
                scaled = true;
            }
            bfgs_update(&mut inv, &s, &y, sy, n);
        }
        x = p.x;
        value = p.value;
        grad = p.grad;
        iteration += 1;
        on_iteration(iteration, &x, value)?;
    };
    Ok(BfgsOutcome {
        gradient_norm: norm(&grad),
        x,
        value,
        iterations: iteration,
        evaluations,
        termination,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    (0..n).for_each(|i| m[i * n + i] = 1.0);
    m
}

fn mat_vec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ` with `ρ = 1 / sᵀy`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    let factor = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += factor * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
