//! L1-penalized convex M-estimation: accelerated proximal gradient with
//! backtracking line search, KKT certification, and sequential
//! cross-validated tuning of the penalty weight.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::derive_seed;
use crate::{Error, Result};

/// Smooth (differentiable convex) part of a penalized objective.
pub trait SmoothLoss: Sync {
    fn dim(&self) -> usize;
    fn value(&self, beta: &[f64]) -> f64;
    fn grad(&self, beta: &[f64], out: &mut [f64]);

    fn grad_vec(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad(beta, &mut g);
        g
    }
}

/// Smooth loss given by closures; handy for tests and one-off problems.
pub struct FnLoss<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub dim: usize,
    pub f: F,
    pub g: G,
}

impl<F, G> SmoothLoss for FnLoss<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, beta: &[f64]) -> f64 {
        (self.f)(beta)
    }

    fn grad(&self, beta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&(self.g)(beta));
    }
}

/// Average weighted squared error in precomputed Gram form:
/// `beta' G beta - 2 b' beta + c` with `G = X'WX/n`, `b = X'Wy/n`,
/// `c = sum(w y^2)/n`. Gradient evaluations cost O(d^2) regardless of n.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    dim: usize,
    gram: Vec<f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl QuadraticLoss {
    /// Accumulates the Gram form from weighted rows `(x_i, y_i, w_i)`.
    pub fn from_rows<'a>(
        dim: usize,
        rows: impl Iterator<Item = (&'a [f64], f64, f64)>,
    ) -> Self {
        let mut gram = vec![0.0; dim * dim];
        let mut linear = vec![0.0; dim];
        let mut constant = 0.0;
        let mut n = 0usize;
        for (x, y, w) in rows {
            debug_assert_eq!(x.len(), dim);
            for j in 0..dim {
                let wxj = w * x[j];
                linear[j] += wxj * y;
                let row = &mut gram[j * dim..(j + 1) * dim];
                for k in j..dim {
                    row[k] += wxj * x[k];
                }
            }
            constant += w * y * y;
            n += 1;
        }
        let inv_n = 1.0 / n.max(1) as f64;
        for j in 0..dim {
            for k in j..dim {
                let v = gram[j * dim + k] * inv_n;
                gram[j * dim + k] = v;
                gram[k * dim + j] = v;
            }
        }
        for v in &mut linear {
            *v *= inv_n;
        }
        constant *= inv_n;
        QuadraticLoss { dim, gram, linear, constant }
    }
}

impl SmoothLoss for QuadraticLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for j in 0..self.dim {
            let row = &self.gram[j * self.dim..(j + 1) * self.dim];
            let mut acc = 0.0;
            for k in 0..self.dim {
                acc += row[k] * beta[k];
            }
            quad += beta[j] * acc;
            lin += self.linear[j] * beta[j];
        }
        quad - 2.0 * lin + self.constant
    }

    fn grad(&self, beta: &[f64], out: &mut [f64]) {
        for j in 0..self.dim {
            let row = &self.gram[j * self.dim..(j + 1) * self.dim];
            let mut acc = 0.0;
            for k in 0..self.dim {
                acc += row[k] * beta[k];
            }
            out[j] = 2.0 * (acc - self.linear[j]);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub step_init: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-6, max_iter: 10_000, step_init: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub coef: Vec<f64>,
    /// Penalized objective at `coef`.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at every accepted iterate; non-increasing.
    pub objective_trace: Vec<f64>,
}

/// Proximal map of `t * |.|`: `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Maximal violation of the L1 stationarity conditions.
///
/// Coordinate contributions: penalized and zero -> `max(|g| - lambda, 0)`;
/// penalized and nonzero -> `|g + lambda sign(coef)|`; unpenalized -> `|g|`.
pub fn kkt_residual(coef: &[f64], grad: &[f64], lambda: f64, mask: Option<&[bool]>) -> f64 {
    assert_eq!(coef.len(), grad.len());
    let mut worst = 0.0f64;
    for j in 0..coef.len() {
        let penalized = mask.map_or(true, |m| m[j]);
        let r = if !penalized {
            grad[j].abs()
        } else if coef[j] == 0.0 {
            (grad[j].abs() - lambda).max(0.0)
        } else {
            (grad[j] + lambda * coef[j].signum()).abs()
        };
        worst = worst.max(r);
    }
    worst
}

fn l1_masked(beta: &[f64], mask: Option<&[bool]>) -> f64 {
    match mask {
        None => beta.iter().map(|b| b.abs()).sum(),
        Some(m) => beta.iter().zip(m).filter(|(_, &p)| p).map(|(b, _)| b.abs()).sum(),
    }
}

/// Minimizes `loss(beta) + lambda * ||beta||_1` (masked coordinates only)
/// by FISTA with backtracking. Momentum restarts whenever the accelerated
/// step would increase the objective, so the accepted-objective trace is
/// monotone non-increasing. Returns the first iterate whose KKT residual is
/// within `opts.tol`, else the best iterate with `converged = false`.
pub fn solve_l1(
    loss: &dyn SmoothLoss,
    lambda: f64,
    mask: Option<&[bool]>,
    init: &[f64],
    opts: &SolveOptions,
) -> Result<SolverResult> {
    let dim = loss.dim();
    assert_eq!(init.len(), dim);
    if let Some(m) = mask {
        assert_eq!(m.len(), dim);
    }
    assert!(lambda >= 0.0, "negative penalty");

    let mut x = init.to_vec();
    let mut fx_smooth = loss.value(&x);
    if !fx_smooth.is_finite() {
        return Err(Error::solver("solve_l1", "non-finite loss at the initial point"));
    }
    let mut fx = fx_smooth + lambda * l1_masked(&x, mask);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut step = opts.step_init;
    let mut grad_y = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut grad_x = vec![0.0; dim];
    let mut trace = vec![fx];

    // Initial KKT check: init may already be optimal (e.g. 0 under a large
    // penalty).
    loss.grad(&x, &mut grad_x);
    check_finite(&grad_x, 0)?;
    let mut best_kkt = kkt_residual(&x, &grad_x, lambda, mask);
    if best_kkt <= opts.tol {
        return Ok(SolverResult {
            coef: x,
            objective: fx,
            kkt_residual: best_kkt,
            iterations: 0,
            converged: true,
            objective_trace: trace,
        });
    }
    let mut best = x.clone();
    let mut best_obj = fx;

    for iter in 1..=opts.max_iter {
        let fy_smooth = if y == x { fx_smooth } else { loss.value(&y) };
        if !fy_smooth.is_finite() {
            // Momentum overshot into a bad region; restart from x.
            y.copy_from_slice(&x);
            t = 1.0;
            continue;
        }
        loss.grad(&y, &mut grad_y);
        check_finite(&grad_y, iter)?;

        // Backtracking: halve the step until the quadratic majorization at y
        // holds at the proximal point z.
        let mut fz_smooth;
        loop {
            for j in 0..dim {
                let v = y[j] - step * grad_y[j];
                z[j] = if mask.map_or(true, |m| m[j]) {
                    soft_threshold(v, step * lambda)
                } else {
                    v
                };
            }
            fz_smooth = loss.value(&z);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for j in 0..dim {
                let d = z[j] - y[j];
                lin += grad_y[j] * d;
                sq += d * d;
            }
            let bound = fy_smooth + lin + sq / (2.0 * step) + 1e-12 * fy_smooth.abs().max(1.0);
            if fz_smooth.is_finite() && fz_smooth <= bound {
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                return Err(Error::solver(
                    "solve_l1",
                    format!("line search stalled at iteration {iter}"),
                ));
            }
        }

        let fz = fz_smooth + lambda * l1_masked(&z, mask);
        if fz > fx + 1e-12 * fx.abs().max(1.0) {
            // The accelerated point lost ground; drop momentum and retry from
            // x. A plain proximal step from x cannot increase the objective.
            y.copy_from_slice(&x);
            t = 1.0;
            continue;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let coef = (t - 1.0) / t_next;
        for j in 0..dim {
            let step_dir = z[j] - x[j];
            x[j] = z[j];
            y[j] = z[j] + coef * step_dir;
        }
        t = t_next;
        fx_smooth = fz_smooth;
        fx = fz.min(fx);
        trace.push(fx);

        loss.grad(&x, &mut grad_x);
        check_finite(&grad_x, iter)?;
        let kkt = kkt_residual(&x, &grad_x, lambda, mask);
        if kkt < best_kkt {
            best_kkt = kkt;
            best.copy_from_slice(&x);
            best_obj = fx;
        }
        if kkt <= opts.tol {
            return Ok(SolverResult {
                coef: x,
                objective: fx,
                kkt_residual: kkt,
                iterations: iter,
                converged: true,
                objective_trace: trace,
            });
        }
    }

    // Exhausted iterations: a warning state, not an error.
    Ok(SolverResult {
        coef: best,
        objective: best_obj,
        kkt_residual: best_kkt,
        iterations: opts.max_iter,
        converged: false,
        objective_trace: trace,
    })
}

fn check_finite(grad: &[f64], iter: usize) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::solver(
            "solve_l1",
            format!("non-finite gradient at iteration {iter}"),
        ));
    }
    Ok(())
}

/// A penalized fitting family over an indexed data slice, as needed by
/// cross-validated tuning: the smooth loss restricted to any subset of rows,
/// plus the unpenalized held-out evaluation.
pub trait LossFamily: Sync {
    fn dim(&self) -> usize;
    fn loss_on<'a>(&'a self, rows: &[usize]) -> Box<dyn SmoothLoss + 'a>;

    /// Mean unpenalized loss of `beta` over `rows`.
    fn eval_on(&self, rows: &[usize], beta: &[f64]) -> f64 {
        self.loss_on(rows).value(beta)
    }
}

/// Log-spaced penalty grid from `||grad loss(0)||_inf` (over penalized
/// coordinates) down the given number of decades.
pub fn lambda_grid(
    family: &dyn LossFamily,
    rows: &[usize],
    n_points: usize,
    decades: f64,
    mask: Option<&[bool]>,
) -> Vec<f64> {
    let loss = family.loss_on(rows);
    let grad0 = loss.grad_vec(&vec![0.0; family.dim()]);
    let mut lambda_max = 0.0f64;
    for (j, g) in grad0.iter().enumerate() {
        if mask.map_or(true, |m| m[j]) {
            lambda_max = lambda_max.max(g.abs());
        }
    }
    if lambda_max <= 0.0 || !lambda_max.is_finite() {
        lambda_max = 1e-12;
    }
    if n_points == 1 {
        return vec![lambda_max];
    }
    (0..n_points)
        .map(|i| lambda_max * 10f64.powf(-decades * i as f64 / (n_points - 1) as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambda_star: f64,
    /// `(lambda, mean held-out loss)` in descending lambda order.
    pub cv_curve: Vec<(f64, f64)>,
    /// Refit on the full slice at `lambda_star`.
    pub beta: Vec<f64>,
}

/// Picks the penalty weight minimizing mean held-out unpenalized loss over
/// `cv_folds` splits of `rows`, warm-starting along the descending grid;
/// ties break toward the larger penalty. The returned coefficients are the
/// full-slice refit at the selected value.
pub fn cv_select_lambda(
    family: &dyn LossFamily,
    rows: &[usize],
    grid: &[f64],
    cv_folds: usize,
    seed: u64,
    mask: Option<&[bool]>,
    opts: &SolveOptions,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::validation("empty lambda grid"));
    }
    if rows.len() < cv_folds.max(2) {
        return Err(Error::validation(format!(
            "slice of {} rows too small for {cv_folds}-fold tuning",
            rows.len()
        )));
    }
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    grid.dedup();

    let mut shuffled = rows.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xC5C4, 0));
    shuffled.shuffle(&mut rng);

    let dim = family.dim();
    let mut heldout_sums = vec![0.0f64; grid.len()];
    let mut heldout_ok = vec![0usize; grid.len()];
    for fold in 0..cv_folds {
        let test: Vec<usize> = shuffled
            .iter()
            .copied()
            .enumerate()
            .filter(|(pos, _)| pos % cv_folds == fold)
            .map(|(_, i)| i)
            .collect();
        let train: Vec<usize> = shuffled
            .iter()
            .copied()
            .enumerate()
            .filter(|(pos, _)| pos % cv_folds != fold)
            .map(|(_, i)| i)
            .collect();
        let loss = family.loss_on(&train);
        let mut warm = vec![0.0; dim];
        for (gi, &lam) in grid.iter().enumerate() {
            match solve_l1(loss.as_ref(), lam, mask, &warm, opts) {
                Ok(res) => {
                    warm = res.coef;
                    let h = family.eval_on(&test, &warm);
                    if h.is_finite() {
                        heldout_sums[gi] += h;
                        heldout_ok[gi] += 1;
                    }
                }
                Err(_) => {
                    // Diverged fit at this lambda; skip, warm start unchanged.
                }
            }
        }
    }

    let mut curve = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for gi in 0..grid.len() {
        if heldout_ok[gi] == cv_folds {
            let m = heldout_sums[gi] / cv_folds as f64;
            curve.push((grid[gi], m));
            // Strict improvement keeps the earliest (largest) lambda on ties.
            if best.map_or(true, |(_, b)| m < b) {
                best = Some((gi, m));
            }
        } else {
            curve.push((grid[gi], f64::INFINITY));
        }
    }
    let (best_idx, _) = best.ok_or_else(|| {
        Error::solver("cv_select_lambda", "all candidate fits diverged")
    })?;
    let lambda_star = grid[best_idx];

    // Refit on the full slice, warming down the grid to the winner.
    let loss = family.loss_on(rows);
    let mut warm = vec![0.0; dim];
    let mut final_res: Option<SolverResult> = None;
    for &lam in grid.iter().take(best_idx + 1) {
        let res = solve_l1(loss.as_ref(), lam, mask, &warm, opts)?;
        warm = res.coef.clone();
        final_res = Some(res);
    }
    let beta = final_res.expect("non-empty grid").coef;
    Ok(CvResult { lambda_star, cv_curve: curve, beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 1.0), -1.5);
        assert_eq!(soft_threshold(0.7, 0.0), 0.7);
    }

    #[test]
    fn kkt_residual_cases() {
        assert_eq!(kkt_residual(&[0.0, 0.0], &[0.5, -0.5], 1.0, None), 0.0);
        assert_eq!(kkt_residual(&[1.0, 0.0], &[-1.0, 0.0], 1.0, None), 0.0);
        assert_eq!(kkt_residual(&[0.0, 0.0], &[2.0, 0.0], 1.0, None), 1.0);
        // unpenalized coordinate contributes |grad|
        assert_eq!(
            kkt_residual(&[0.0, 0.0], &[0.5, 0.5], 1.0, Some(&[true, false])),
            0.5
        );
    }

    #[test]
    fn unpenalized_quadratic_hits_minimum() {
        let loss = FnLoss {
            dim: 2,
            f: |b: &[f64]| (b[0] - 1.0).powi(2) + (b[1] - 2.0).powi(2),
            g: |b: &[f64]| vec![2.0 * (b[0] - 1.0), 2.0 * (b[1] - 2.0)],
        };
        let res = solve_l1(&loss, 0.0, None, &[0.0, 0.0], &SolveOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.coef[0] - 1.0).abs() < 1e-6);
        assert!((res.coef[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn large_penalty_keeps_zero() {
        let loss = FnLoss {
            dim: 2,
            f: |b: &[f64]| (b[0] - 1.0).powi(2) + (b[1] - 2.0).powi(2),
            g: |b: &[f64]| vec![2.0 * (b[0] - 1.0), 2.0 * (b[1] - 2.0)],
        };
        // grad at 0 is (-2,-4); any lambda >= 4 certifies 0 immediately
        let res = solve_l1(&loss, 4.0, None, &[0.0, 0.0], &SolveOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.coef, vec![0.0, 0.0]);
        assert_eq!(res.iterations, 0);
    }

    /// Closed-form oracle for 1-D weighted lasso: the stationarity condition
    /// of sum w (y - x b)^2 / n + lambda |b| gives
    /// b = soft_threshold(sum(w x y), n lambda / 2) / sum(w x^2),
    /// computed here straight from that formula.
    fn weighted_lasso_oracle(x: &[f64], y: &[f64], w: &[f64], lambda: f64) -> f64 {
        let n = x.len() as f64;
        let sxy: f64 = (0..x.len()).map(|i| w[i] * x[i] * y[i]).sum();
        let sxx: f64 = (0..x.len()).map(|i| w[i] * x[i] * x[i]).sum();
        soft_threshold(sxy, n * lambda / 2.0) / sxx
    }

    #[test]
    fn one_dim_weighted_lasso_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..50 {
            let n = 30;
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
            let lambda = rng.gen_range(0.0..1.0);
            let nf = n as f64;
            let loss = FnLoss {
                dim: 1,
                f: |b: &[f64]| {
                    (0..n).map(|i| w[i] * (y[i] - x[i] * b[0]).powi(2)).sum::<f64>() / nf
                },
                g: |b: &[f64]| {
                    vec![
                        (0..n)
                            .map(|i| -2.0 * w[i] * x[i] * (y[i] - x[i] * b[0]))
                            .sum::<f64>()
                            / nf,
                    ]
                },
            };
            let opts = SolveOptions { tol: 1e-10, ..Default::default() };
            let res = solve_l1(&loss, lambda, None, &[0.0], &opts).unwrap();
            let oracle = weighted_lasso_oracle(&x, &y, &w, lambda);
            assert!(
                (res.coef[0] - oracle).abs() <= 1e-8,
                "trial {trial}: solver {} vs closed form {oracle}",
                res.coef[0]
            );
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 8;
        let n = 60;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let quad = QuadraticLoss::from_rows(
            d,
            rows.iter().enumerate().map(|(i, r)| (r.as_slice(), y[i], 1.0)),
        );
        let res = solve_l1(&quad, 0.01, None, &vec![0.0; d], &SolveOptions::default()).unwrap();
        assert!(res.converged);
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn cv_prefers_shrinkage_on_pure_noise() {
        // Pure-noise outcome with a linear squared loss: held-out error is
        // minimized by shrinking everything away, so the winner must sit in
        // the top 20% (largest values) of the grid.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 120;
        let d = 10;
        let xs: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        struct Fam {
            xs: Vec<Vec<f64>>,
            ys: Vec<f64>,
            d: usize,
        }
        impl LossFamily for Fam {
            fn dim(&self) -> usize {
                self.d
            }
            fn loss_on<'a>(&'a self, rows: &[usize]) -> Box<dyn SmoothLoss + 'a> {
                Box::new(QuadraticLoss::from_rows(
                    self.d,
                    rows.iter().map(|&i| (self.xs[i].as_slice(), self.ys[i], 1.0)),
                ))
            }
        }
        let fam = Fam { xs, ys, d };
        let rows: Vec<usize> = (0..n).collect();
        let grid = lambda_grid(&fam, &rows, 50, 4.0, None);
        let res =
            cv_select_lambda(&fam, &rows, &grid, 5, 7, None, &SolveOptions::default()).unwrap();
        let rank = grid.iter().position(|&l| l == res.lambda_star).unwrap();
        assert!(
            rank < grid.len() / 5,
            "lambda_star rank {rank} of {} not in top 20%",
            grid.len()
        );
    }

    #[test]
    fn cv_single_and_duplicate_grids() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0, (i as f64 / 10.0).sin()]).collect();
        let ys: Vec<f64> = (0..40).map(|i| (i as f64 / 10.0).cos()).collect();
        struct Fam {
            xs: Vec<Vec<f64>>,
            ys: Vec<f64>,
        }
        impl LossFamily for Fam {
            fn dim(&self) -> usize {
                2
            }
            fn loss_on<'a>(&'a self, rows: &[usize]) -> Box<dyn SmoothLoss + 'a> {
                Box::new(QuadraticLoss::from_rows(
                    2,
                    rows.iter().map(|&i| (self.xs[i].as_slice(), self.ys[i], 1.0)),
                ))
            }
        }
        let fam = Fam { xs, ys };
        let rows: Vec<usize> = (0..40).collect();
        let one =
            cv_select_lambda(&fam, &rows, &[0.3], 4, 1, None, &SolveOptions::default()).unwrap();
        assert_eq!(one.lambda_star, 0.3);

        let dup = cv_select_lambda(
            &fam,
            &rows,
            &[0.5, 0.5, 0.1, 0.1, 0.02],
            4,
            1,
            None,
            &SolveOptions::default(),
        )
        .unwrap();
        let dedup = cv_select_lambda(
            &fam,
            &rows,
            &[0.5, 0.1, 0.02],
            4,
            1,
            None,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(dup.lambda_star, dedup.lambda_star);
        assert_eq!(dup.beta, dedup.beta);
    }
}
