//! Generic nuisance learners: penalized linear/logistic fits on explicit
//! design matrices, the Bayes-odds density-ratio construction, and the
//! discrete-mediator conditional probability model.

use crate::data::{Dataset, RowMat};
use crate::forest::ProbabilityForest;
use crate::losses::logistic;
use crate::math::dot;
use crate::optim::{
    cv_select_lambda, lambda_grid, solve_l1, LossFamily, QuadraticLoss, SmoothLoss,
    SolveOptions, SolverResult,
};
use crate::{Error, Result};

/// Penalty selection policy for the lasso fits.
#[derive(Debug, Clone)]
pub enum Tuning {
    Fixed(f64),
    CrossValidated { n_lambda: usize, decades: f64, cv_folds: usize },
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::CrossValidated { n_lambda: 50, decades: 4.0, cv_folds: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl LassoFit {
    fn from_result(res: SolverResult, lambda: f64) -> Self {
        LassoFit {
            beta: res.coef,
            lambda,
            converged: res.converged,
            kkt_residual: res.kkt_residual,
            iterations: res.iterations,
        }
    }
}

struct LinearFamily<'a> {
    x: &'a RowMat,
    y: &'a [f64],
    w: Option<Vec<f64>>,
}

impl LossFamily for LinearFamily<'_> {
    fn dim(&self) -> usize {
        self.x.n_cols()
    }

    fn loss_on<'b>(&'b self, rows: &[usize]) -> Box<dyn SmoothLoss + 'b> {
        Box::new(QuadraticLoss::from_rows(
            self.dim(),
            rows.iter().map(|&i| {
                (self.x.row(i), self.y[i], self.w.as_ref().map_or(1.0, |w| w[i]))
            }),
        ))
    }

    fn eval_on(&self, rows: &[usize], beta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &i in rows {
            let r = self.y[i] - dot(self.x.row(i), beta);
            acc += self.w.as_ref().map_or(1.0, |w| w[i]) * r * r;
        }
        acc / rows.len() as f64
    }
}

struct LogisticFamily<'a> {
    x: &'a RowMat,
    labels: &'a [f64],
}

struct LogisticNll<'a> {
    x: &'a RowMat,
    labels: &'a [f64],
    rows: Vec<usize>,
}

impl SmoothLoss for LogisticNll<'_> {
    fn dim(&self) -> usize {
        self.x.n_cols()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &i in &self.rows {
            let u = dot(self.x.row(i), beta);
            // softplus(u) - a u, overflow-safe
            acc += u.max(0.0) + (-u.abs()).exp().ln_1p() - self.labels[i] * u;
        }
        acc / self.rows.len() as f64
    }

    fn grad(&self, beta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let scale = 1.0 / self.rows.len() as f64;
        for &i in &self.rows {
            let c = scale * (logistic(dot(self.x.row(i), beta)) - self.labels[i]);
            for (o, &v) in out.iter_mut().zip(self.x.row(i)) {
                *o += c * v;
            }
        }
    }
}

impl LossFamily for LogisticFamily<'_> {
    fn dim(&self) -> usize {
        self.x.n_cols()
    }

    fn loss_on<'b>(&'b self, rows: &[usize]) -> Box<dyn SmoothLoss + 'b> {
        Box::new(LogisticNll { x: self.x, labels: self.labels, rows: rows.to_vec() })
    }
}

fn fit_family(
    family: &dyn LossFamily,
    n: usize,
    tuning: &Tuning,
    mask: Option<&[bool]>,
    seed: u64,
) -> Result<LassoFit> {
    let rows: Vec<usize> = (0..n).collect();
    let opts = SolveOptions::default();
    match tuning {
        Tuning::Fixed(lambda) => {
            let loss = family.loss_on(&rows);
            let res = solve_l1(loss.as_ref(), *lambda, mask, &vec![0.0; family.dim()], &opts)?;
            Ok(LassoFit::from_result(res, *lambda))
        }
        Tuning::CrossValidated { n_lambda, decades, cv_folds } => {
            let grid = lambda_grid(family, &rows, *n_lambda, *decades, mask);
            let cv = cv_select_lambda(family, &rows, &grid, *cv_folds, seed, mask, &opts)?;
            // The refit already happened inside the CV driver; recompute the
            // certificate for diagnostics.
            let loss = family.loss_on(&rows);
            let res = solve_l1(loss.as_ref(), cv.lambda_star, mask, &cv.beta, &opts)?;
            Ok(LassoFit::from_result(res, cv.lambda_star))
        }
    }
}

/// Weighted L1-penalized least squares on an explicit design. Weights are
/// normalized to mean one so that uniformly weighted fits coincide with the
/// unweighted fit at every penalty level.
pub fn fit_lasso_linear(
    x: &RowMat,
    y: &[f64],
    weights: Option<&[f64]>,
    tuning: &Tuning,
    mask: Option<&[bool]>,
    seed: u64,
) -> Result<LassoFit> {
    let n = x.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::validation("lasso-linear: empty or mismatched inputs"));
    }
    let w = match weights {
        None => None,
        Some(w) => {
            if w.len() != n {
                return Err(Error::validation("lasso-linear: weight length mismatch"));
            }
            if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::validation("lasso-linear: weights must be positive"));
            }
            let m = w.iter().sum::<f64>() / n as f64;
            Some(w.iter().map(|&v| v / m).collect::<Vec<f64>>())
        }
    };
    let family = LinearFamily { x, y, w };
    fit_family(&family, n, tuning, mask, seed)
}

/// L1-penalized logistic regression (average negative log-likelihood).
pub fn fit_lasso_logistic(
    x: &RowMat,
    labels: &[f64],
    tuning: &Tuning,
    mask: Option<&[bool]>,
    seed: u64,
) -> Result<LassoFit> {
    let n = x.n_rows();
    if n == 0 || labels.len() != n {
        return Err(Error::validation("lasso-logistic: empty or mismatched inputs"));
    }
    for &l in labels {
        if l != 0.0 && l != 1.0 {
            return Err(Error::validation(format!("lasso-logistic: non-binary label {l}")));
        }
    }
    let family = LogisticFamily { x, labels };
    fit_family(&family, n, tuning, mask, seed)
}

/// Maps dataset rows to learner feature vectors. Forest learners drop a
/// leading intercept column since a constant feature carries no splits.
#[derive(Debug, Clone, Copy)]
pub struct FeatureMap {
    pub d1: usize,
    pub drop_intercept: bool,
}

impl FeatureMap {
    pub fn for_dataset(ds: &Dataset) -> Self {
        FeatureMap { d1: ds.d1(), drop_intercept: ds.intercept_flag() }
    }

    pub fn x_features(&self, s_row: &[f64]) -> Vec<f64> {
        let x = &s_row[..self.d1];
        if self.drop_intercept {
            x[1..].to_vec()
        } else {
            x.to_vec()
        }
    }

    pub fn s_features(&self, s_row: &[f64]) -> Vec<f64> {
        if self.drop_intercept {
            s_row[1..].to_vec()
        } else {
            s_row.to_vec()
        }
    }

    pub fn x_matrix(&self, ds: &Dataset, rows: &[usize]) -> RowMat {
        let cols: Vec<Vec<f64>> = rows.iter().map(|&i| self.x_features(ds.s_row(i))).collect();
        RowMat::from_rows(cols).expect("uniform feature rows")
    }

    pub fn s_matrix(&self, ds: &Dataset, rows: &[usize]) -> RowMat {
        let cols: Vec<Vec<f64>> = rows.iter().map(|&i| self.s_features(ds.s_row(i))).collect();
        RowMat::from_rows(cols).expect("uniform feature rows")
    }
}

/// Clipped Bayes-odds combination of a propensity value and an inverse
/// probability value:
/// `q = [pi/(1-pi)] * [(1-p)/p]`, clipped to `[eps^2, eps^-2]`.
#[inline]
pub fn odds_ratio(pi: f64, p: f64, eps: f64) -> f64 {
    let q = (pi / (1.0 - pi)) * ((1.0 - p) / p);
    q.clamp(eps * eps, 1.0 / (eps * eps))
}

/// Density-ratio evaluator built from the treatment probability given X and
/// the inverse-causality probability given S.
pub struct OddsDensityRatio {
    pub pi: ProbabilityForest,
    pub p: ProbabilityForest,
    pub map: FeatureMap,
    pub eps: f64,
}

impl OddsDensityRatio {
    pub fn evaluate(&self, s_row: &[f64]) -> f64 {
        let pi = self.pi.predict(&self.map.x_features(s_row));
        let p = self.p.predict(&self.map.s_features(s_row));
        odds_ratio(pi, p, self.eps)
    }
}

/// Conditional mediator distribution over a finite joint support, one
/// probability forest per level and arm, normalized at evaluation.
pub struct DiscreteMediatorModel {
    levels: Vec<Vec<f64>>,
    per_arm: [Vec<ProbabilityForest>; 2],
    map: FeatureMap,
    eps: f64,
}

pub const MAX_MEDIATOR_LEVELS: usize = 32;

impl DiscreteMediatorModel {
    /// Fits `P(M = level | A = a, X)` for both arms from the given rows.
    pub fn fit(
        ds: &Dataset,
        rows: &[usize],
        opts: &crate::forest::ForestOpts,
        eps: f64,
        seed: u64,
    ) -> Result<Self> {
        let levels = distinct_mediator_levels(ds, rows)?;
        let map = FeatureMap::for_dataset(ds);
        let mut per_arm: [Vec<ProbabilityForest>; 2] = [Vec::new(), Vec::new()];
        for arm in 0..2u8 {
            let arm_rows = ds.arm_rows(rows, arm);
            if arm_rows.is_empty() {
                return Err(Error::degenerate(format!(
                    "discrete mediator fit: no rows with A={arm}"
                )));
            }
            let x = map.x_matrix(ds, &arm_rows);
            for (li, level) in levels.iter().enumerate() {
                let labels: Vec<f64> = arm_rows
                    .iter()
                    .map(|&i| if ds.m_row(i) == level.as_slice() { 1.0 } else { 0.0 })
                    .collect();
                let forest = crate::forest::fit_probability_forest(
                    &x,
                    &labels,
                    opts,
                    crate::math::derive_seed(seed, 0xD15C + arm as u64, li as u64),
                    eps,
                )?;
                per_arm[arm as usize].push(forest);
            }
        }
        Ok(DiscreteMediatorModel { levels, per_arm, map, eps })
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Normalized level probabilities given covariates, for arm `a`.
    pub fn level_probs(&self, a: u8, s_row: &[f64]) -> Vec<f64> {
        let x = self.map.x_features(s_row);
        let mut probs: Vec<f64> =
            self.per_arm[a as usize].iter().map(|f| f.predict(&x)).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        probs
    }

    /// `P(M = m | A = a, X)` with the observed mediator looked up in the
    /// level table; unseen levels get the clip floor.
    pub fn prob_of(&self, a: u8, s_row: &[f64], m_row: &[f64]) -> f64 {
        let probs = self.level_probs(a, s_row);
        match self.levels.iter().position(|l| l.as_slice() == m_row) {
            Some(idx) => probs[idx].max(self.eps),
            None => self.eps,
        }
    }

    /// Density ratio `f0(m|x) / f1(m|x)`, clipped like the odds route.
    pub fn ratio(&self, s_row: &[f64], m_row: &[f64]) -> f64 {
        let f0 = self.prob_of(0, s_row, m_row);
        let f1 = self.prob_of(1, s_row, m_row);
        (f0 / f1).clamp(self.eps * self.eps, 1.0 / (self.eps * self.eps))
    }
}

/// Distinct joint mediator values over the rows; errors beyond
/// [`MAX_MEDIATOR_LEVELS`] (a continuous mediator is unsupported here).
pub fn distinct_mediator_levels(ds: &Dataset, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut levels: Vec<Vec<f64>> = Vec::new();
    for &i in rows {
        let m = ds.m_row(i);
        if !levels.iter().any(|l| l.as_slice() == m) {
            levels.push(m.to_vec());
            if levels.len() > MAX_MEDIATOR_LEVELS {
                return Err(Error::validation(format!(
                    "mediator appears continuous: more than {MAX_MEDIATOR_LEVELS} distinct joint values"
                )));
            }
        }
    }
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unpenalized_fit_recovers_exact_system() {
        // y = 2 x1 - x2, exactly determined
        let x = RowMat::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![2.0, -1.0],
        ])
        .unwrap();
        let y = vec![2.0, -1.0, 1.0, 5.0];
        let fit =
            fit_lasso_linear(&x, &y, None, &Tuning::Fixed(0.0), None, 0).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-6);
        assert!((fit.beta[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn equal_weights_match_unweighted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let x = RowMat::from_rows(
            (0..n).map(|_| vec![1.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect(),
        )
        .unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let unweighted =
            fit_lasso_linear(&x, &y, None, &Tuning::Fixed(0.05), None, 0).unwrap();
        let weighted = fit_lasso_linear(
            &x,
            &y,
            Some(&vec![3.7; n]),
            &Tuning::Fixed(0.05),
            None,
            0,
        )
        .unwrap();
        for j in 0..3 {
            assert!((unweighted.beta[j] - weighted.beta[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn orthonormal_design_soft_thresholds_ols() {
        // Hadamard-style columns: orthogonal with mean-square one.
        let rows: Vec<Vec<f64>> = vec![
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0, -1.0, 1.0, -1.0],
            vec![1.0, 1.0, -1.0, -1.0],
            vec![1.0, -1.0, -1.0, 1.0],
        ]
        .into_iter()
        .cycle()
        .take(16)
        .collect();
        let x = RowMat::from_rows(rows.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let y: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let n = 16.0;
        // OLS under x'x = n I is x'y/n
        let ols: Vec<f64> = (0..4)
            .map(|j| (0..16).map(|i| rows[i][j] * y[i]).sum::<f64>() / n)
            .collect();
        let lambda = 0.3;
        let fit = fit_lasso_linear(&x, &y, None, &Tuning::Fixed(lambda), None, 0).unwrap();
        for j in 0..4 {
            let oracle = crate::optim::soft_threshold(ols[j], lambda / 2.0);
            assert!(
                (fit.beta[j] - oracle).abs() < 1e-7,
                "coord {j}: {} vs {oracle}",
                fit.beta[j]
            );
        }
    }

    #[test]
    fn logistic_recovers_separating_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 4000;
        let mut xr = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let z = rng.gen_range(-2.0..2.0);
            xr.push(vec![1.0, z]);
            let p = logistic(-0.5 + 1.5 * z);
            labels.push(if rng.gen_bool(p) { 1.0 } else { 0.0 });
        }
        let x = RowMat::from_rows(xr).unwrap();
        let fit = fit_lasso_logistic(&x, &labels, &Tuning::Fixed(0.0), None, 0).unwrap();
        assert!((fit.beta[0] + 0.5).abs() < 0.2, "intercept {}", fit.beta[0]);
        assert!((fit.beta[1] - 1.5).abs() < 0.2, "slope {}", fit.beta[1]);
    }

    #[test]
    fn odds_ratio_boundaries() {
        let eps = 0.01;
        assert_eq!(odds_ratio(0.5, 0.5, eps), 1.0);
        // pi = 0.5, p = 1 - eps: q = eps/(1-eps) < 1, above the eps^2 floor
        let q = odds_ratio(0.5, 1.0 - eps, eps);
        assert!((q - eps / (1.0 - eps)).abs() < 1e-12);
        // raw probabilities beyond the clip range hit the floor
        assert_eq!(odds_ratio(0.001, 0.999, eps), eps * eps);
    }

    #[test]
    fn mediator_level_detection() {
        use crate::data::Dataset;
        let n = 40;
        let mut y = Vec::new();
        let mut a = Vec::new();
        let mut xr = Vec::new();
        let mut mr = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..n {
            y.push(rng.gen_range(-1.0..1.0));
            a.push((i % 2) as f64);
            xr.push(vec![1.0, rng.gen_range(-1.0..1.0)]);
            mr.push(vec![(i % 3) as f64]);
        }
        let ds = Dataset::new(
            y,
            a,
            RowMat::from_rows(xr).unwrap(),
            RowMat::from_rows(mr).unwrap(),
            true,
        )
        .unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let levels = distinct_mediator_levels(&ds, &rows).unwrap();
        assert_eq!(levels, vec![vec![0.0], vec![1.0], vec![2.0]]);
    }
}
