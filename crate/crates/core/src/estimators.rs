//! Cross-fitted estimators for the cross-world mean `E[Y(1, M(0))]`:
//! the quadruply robust score with forest nuisances, its penalized
//! parametric counterpart, doubly/triply robust baselines, effect
//! composition, and median-of-repeats aggregation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RowMat};
use crate::dgp::Truth;
use crate::folds::{build_fold_plan, FoldPlan, Scheme};
use crate::forest::{fit_probability_forest, fit_regression_forest, ForestOpts};
use crate::inference::{confidence_interval, variance_hat};
use crate::learners::{
    fit_lasso_linear, fit_lasso_logistic, odds_ratio, DiscreteMediatorModel, FeatureMap,
    OddsDensityRatio, Tuning,
};
use crate::losses::{
    logistic, mqr_score, CoefSextet, FixedBlocks, LossContext, LossKind, MqrLossFamily,
};
use crate::math::{derive_seed, dot, mean, normal_quantile, normal_sf};
use crate::optim::{cv_select_lambda, lambda_grid, solve_l1, LossFamily, SolveOptions};
use crate::{Error, Result};

/// Point estimate with its per-observation scores and Wald inference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub theta_hat: f64,
    #[serde(skip_serializing, default)]
    pub scores: Vec<f64>,
    pub sigma2_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n: usize,
    pub method_tag: String,
}

impl EstimateReport {
    /// Builds the report so that `theta_hat` is exactly the score mean.
    pub fn from_scores(scores: Vec<f64>, level: f64, method_tag: &str) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::validation("empty score vector"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite score produced by {method_tag}"
            )));
        }
        let theta_hat = mean(&scores);
        let sigma2_hat = variance_hat(&scores, theta_hat)?;
        let n = scores.len();
        let (ci_low, ci_high) = confidence_interval(theta_hat, sigma2_hat, n, level);
        Ok(EstimateReport {
            theta_hat,
            scores,
            sigma2_hat,
            ci_low,
            ci_high,
            level,
            n,
            method_tag: method_tag.to_string(),
        })
    }

    pub fn se(&self) -> f64 {
        (self.sigma2_hat / self.n as f64).sqrt()
    }

    pub fn ci_length(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }
}

/// The quadruply robust score at one observation.
#[inline]
pub fn qr_score(y: f64, a: f64, pi: f64, q: f64, mu: f64, tau_n: f64, tau: f64) -> f64 {
    a * q * (y - mu) / pi + (1.0 - a) * (mu - tau_n) / (1.0 - pi) + a * (tau_n - tau) / pi + tau
}

/// The efficient-influence-function form: the quadruply robust score with
/// the two cross-world regressions collapsed into one.
#[inline]
pub fn eif_score(y: f64, a: f64, pi: f64, q: f64, mu: f64, tau: f64) -> f64 {
    qr_score(y, a, pi, q, mu, tau, tau)
}

/// Augmented inverse-probability score for `E[Y(a, M(a))]`.
#[inline]
pub fn aipw_score(y: f64, in_arm: bool, m_hat: f64, p_arm: f64) -> f64 {
    let ind = f64::from(in_arm);
    ind * (y - m_hat) / p_arm + m_hat
}

pub type Eval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Fitted nuisance sextet as evaluators over dataset-convention rows
/// (`x_row` / `s_row` including any intercept column). Probability outputs
/// are clipped to `[eps, 1-eps]` and density ratios to `[eps^2, eps^-2]`.
#[derive(Clone)]
pub struct NuisanceSet {
    pub pi_a: Eval,
    pub pi_b: Eval,
    pub q: Eval,
    pub mu: Eval,
    pub tau_n: Eval,
    pub tau: Eval,
    pub coefficients: Option<CoefSextet>,
}

impl NuisanceSet {
    /// Oracle plug-in from analytic truth, with the standard clipping.
    pub fn from_truth(truth: &Truth, eps: f64) -> NuisanceSet {
        let t1 = truth.clone();
        let t2 = truth.clone();
        let t3 = truth.clone();
        let t4 = truth.clone();
        let pi: Eval = Arc::new(move |x| t1.pi(x).clamp(eps, 1.0 - eps));
        let q: Eval = Arc::new(move |s| t2.q(s).clamp(eps * eps, 1.0 / (eps * eps)));
        let mu: Eval = Arc::new(move |s| t3.mu(s));
        let tau: Eval = Arc::new(move |x| t4.tau(x));
        NuisanceSet {
            pi_a: pi.clone(),
            pi_b: pi,
            q,
            mu,
            tau_n: tau.clone(),
            tau,
            coefficients: None,
        }
    }

    /// Parametric evaluators induced by a fitted coefficient sextet.
    pub fn from_coefficients(nu: CoefSextet, eps: f64) -> NuisanceSet {
        let c1 = nu.clone();
        let c2 = nu.clone();
        let c3 = nu.clone();
        let c4 = nu.clone();
        let c5 = nu.clone();
        let c6 = nu.clone();
        NuisanceSet {
            pi_a: Arc::new(move |x| logistic(dot(x, &c1.pi_a)).clamp(eps, 1.0 - eps)),
            pi_b: Arc::new(move |x| logistic(dot(x, &c2.pi_b)).clamp(eps, 1.0 - eps)),
            q: Arc::new(move |s| dot(s, &c3.q).exp().clamp(eps * eps, 1.0 / (eps * eps))),
            mu: Arc::new(move |s| dot(s, &c4.mu)),
            tau_n: Arc::new(move |x| dot(x, &c5.tau_n)),
            tau: Arc::new(move |x| dot(x, &c6.tau)),
            coefficients: Some(nu),
        }
    }

    /// QR score evaluated with this set (treated-arm weight model).
    pub fn score(&self, y: f64, a: f64, x: &[f64], s: &[f64]) -> f64 {
        qr_score(
            y,
            a,
            (self.pi_a)(x),
            (self.q)(s),
            (self.mu)(s),
            (self.tau_n)(x),
            (self.tau)(x),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrVariant {
    /// Nuisance roles on disjoint thirds of the training part.
    Thirds,
    /// Every nuisance stage uses the full training part.
    Full,
}

#[derive(Debug, Clone)]
pub struct QrOptions {
    pub k_folds: usize,
    pub variant: QrVariant,
    pub forest: ForestOpts,
    pub eps: f64,
    pub level: f64,
    pub seed: u64,
}

impl Default for QrOptions {
    fn default() -> Self {
        QrOptions {
            k_folds: 5,
            variant: QrVariant::Full,
            forest: ForestOpts::default(),
            eps: 0.01,
            level: 0.95,
            seed: 0,
        }
    }
}

fn strip_x(map: &FeatureMap, x: &[f64]) -> Vec<f64> {
    if map.drop_intercept {
        x[1..].to_vec()
    } else {
        x.to_vec()
    }
}

/// Fits the five nonparametric nuisances on the three role slices:
/// treatment/outcome/density-ratio models on the first, the nested
/// regression on the second, the corrected cross-world regression on the
/// third.
pub fn fit_qr_nuisances(
    ds: &Dataset,
    role_base: &[usize],
    role_nested: &[usize],
    role_corrected: &[usize],
    forest: &ForestOpts,
    eps: f64,
    seed: u64,
) -> Result<NuisanceSet> {
    let map = FeatureMap::for_dataset(ds);
    let base_treated = ds.arm_rows(role_base, 1);
    let base_control = ds.arm_rows(role_base, 0);
    if base_treated.is_empty() || base_control.is_empty() {
        return Err(Error::degenerate("base nuisance role needs both treatment groups"));
    }
    let nested_rows = ds.arm_rows(role_nested, 0);
    if nested_rows.is_empty() {
        return Err(Error::degenerate("nested regression role has no control rows"));
    }
    let corrected_rows = ds.arm_rows(role_corrected, 1);
    if corrected_rows.is_empty() {
        return Err(Error::degenerate("corrected regression role has no treated rows"));
    }

    let labels: Vec<f64> = role_base.iter().map(|&i| ds.a_f64(i)).collect();
    let pi_forest = fit_probability_forest(
        &map.x_matrix(ds, role_base),
        &labels,
        forest,
        derive_seed(seed, 0x91, 1),
        eps,
    )?;
    let p_forest = fit_probability_forest(
        &map.s_matrix(ds, role_base),
        &labels,
        forest,
        derive_seed(seed, 0x91, 2),
        eps,
    )?;
    let mu_targets: Vec<f64> = base_treated.iter().map(|&i| ds.y(i)).collect();
    let mu_forest = fit_regression_forest(
        &map.s_matrix(ds, &base_treated),
        &mu_targets,
        forest,
        derive_seed(seed, 0x91, 3),
    )?;
    let ratio =
        OddsDensityRatio { pi: pi_forest.clone(), p: p_forest, map, eps };

    // Nested stage: regress fitted outcome means on covariates over controls.
    let nested_targets: Vec<f64> = nested_rows
        .iter()
        .map(|&i| mu_forest.predict(&map.s_features(ds.s_row(i))))
        .collect();
    let tau_n_forest = fit_regression_forest(
        &map.x_matrix(ds, &nested_rows),
        &nested_targets,
        forest,
        derive_seed(seed, 0x91, 4),
    )?;

    // Corrected stage: doubly robust targets on the treated rows.
    let corrected_targets: Vec<f64> = corrected_rows
        .iter()
        .map(|&i| {
            let s = ds.s_row(i);
            tau_n_forest.predict(&map.x_features(s))
                + ratio.evaluate(s) * (ds.y(i) - mu_forest.predict(&map.s_features(s)))
        })
        .collect();
    let tau_forest = fit_regression_forest(
        &map.x_matrix(ds, &corrected_rows),
        &corrected_targets,
        forest,
        derive_seed(seed, 0x91, 5),
    )?;

    let pi_eval: Eval = Arc::new(move |x: &[f64]| pi_forest.predict(&strip_x(&map, x)));
    let q_eval: Eval = Arc::new(move |s: &[f64]| ratio.evaluate(s));
    let mu_eval: Eval = Arc::new(move |s: &[f64]| mu_forest.predict(&map.s_features(s)));
    let tau_n_eval: Eval = Arc::new(move |x: &[f64]| tau_n_forest.predict(&strip_x(&map, x)));
    let tau_eval: Eval = Arc::new(move |x: &[f64]| tau_forest.predict(&strip_x(&map, x)));
    Ok(NuisanceSet {
        pi_a: pi_eval.clone(),
        pi_b: pi_eval,
        q: q_eval,
        mu: mu_eval,
        tau_n: tau_n_eval,
        tau: tau_eval,
        coefficients: None,
    })
}

/// Cross-fitted quadruply robust estimator with forest nuisances.
pub fn estimate_qr(ds: &Dataset, opts: &QrOptions) -> Result<EstimateReport> {
    let scheme = match opts.variant {
        QrVariant::Thirds => Scheme::Qr3,
        QrVariant::Full => Scheme::Full,
    };
    let plan = build_fold_plan(ds.n(), opts.k_folds, scheme, opts.seed)?;
    let tag = match opts.variant {
        QrVariant::Thirds => "QR1",
        QrVariant::Full => "QR2",
    };
    let mut scores = vec![0.0; ds.n()];
    for (k, fold) in plan.folds().iter().enumerate() {
        let (r0, r1, r2) = match opts.variant {
            QrVariant::Thirds => {
                (&fold.roles[0][..], &fold.roles[1][..], &fold.roles[2][..])
            }
            QrVariant::Full => (&fold.roles[0][..], &fold.roles[0][..], &fold.roles[0][..]),
        };
        let nuis = fit_qr_nuisances(
            ds,
            r0,
            r1,
            r2,
            &opts.forest,
            opts.eps,
            derive_seed(opts.seed, 0x0F17, k as u64),
        )?;
        for &i in &fold.eval {
            scores[i] = nuis.score(ds.y(i), ds.a_f64(i), ds.x_row(i), ds.s_row(i));
        }
    }
    EstimateReport::from_scores(scores, opts.level, tag)
}

/// Cross-fitted quadruply robust estimator with externally supplied
/// nuisance sets (one per fold); used with oracle plug-ins.
pub fn estimate_qr_with_nuisances(
    ds: &Dataset,
    plan: &FoldPlan,
    nuisance_for_fold: impl Fn(usize) -> NuisanceSet,
    level: f64,
    tag: &str,
) -> Result<EstimateReport> {
    let mut scores = vec![0.0; ds.n()];
    for (k, fold) in plan.folds().iter().enumerate() {
        let nuis = nuisance_for_fold(k);
        for &i in &fold.eval {
            scores[i] = nuis.score(ds.y(i), ds.a_f64(i), ds.x_row(i), ds.s_row(i));
        }
    }
    EstimateReport::from_scores(scores, level, tag)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqrVariant {
    /// Five disjoint role slices, one per nuisance stage.
    FiveWay,
    /// Every stage fits on the full training part.
    Full,
}

/// Penalty policy for the sequential fits.
#[derive(Debug, Clone)]
pub enum LambdaRule {
    /// Cross-validated grid per stage (grid size, decades, folds).
    Cv { n_lambda: usize, decades: f64, cv_folds: usize },
    /// One fixed penalty for every stage (0 = unpenalized).
    Fixed(f64),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Cv { n_lambda: 50, decades: 4.0, cv_folds: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct MqrOptions {
    pub k_folds: usize,
    pub variant: MqrVariant,
    pub lambda: LambdaRule,
    pub penalize_intercept: bool,
    pub solve: SolveOptions,
    pub eps: f64,
    pub level: f64,
    pub seed: u64,
}

impl Default for MqrOptions {
    fn default() -> Self {
        MqrOptions {
            k_folds: 5,
            variant: MqrVariant::Full,
            lambda: LambdaRule::default(),
            penalize_intercept: true,
            solve: SolveOptions::default(),
            eps: 0.01,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Per-fit diagnostics of the sequential nuisance construction.
#[derive(Debug, Clone, Default)]
pub struct MqrFitDiagnostics {
    pub lambdas: [f64; 6],
    pub converged: [bool; 6],
    pub clamp_activations: u64,
    /// Loss indices whose role slice lacked one treatment group; those fits
    /// lean on the penalty floor and the exponent clamp.
    pub boundary_losses: Vec<usize>,
}

/// Sequential penalized fits of the six nuisance stages on their role
/// slices, each penalty tuned with the earlier stages frozen.
pub fn fit_mqr_nuisances(
    ds: &Dataset,
    roles: [&[usize]; 5],
    opts: &MqrOptions,
    seed: u64,
) -> Result<(CoefSextet, MqrFitDiagnostics)> {
    let [role_pi, role_q, role_mu, role_tau_n, role_tau] = roles;
    let mut diag = MqrFitDiagnostics::default();

    // The squared losses vanish identically without their weighting arm.
    if ds.arm_rows(role_mu, 1).is_empty() {
        return Err(Error::degenerate("loss 4 role has no treated rows"));
    }
    if ds.arm_rows(role_tau_n, 0).is_empty() {
        return Err(Error::degenerate("loss 5 role has no control rows"));
    }
    if ds.arm_rows(role_tau, 1).is_empty() {
        return Err(Error::degenerate("loss 6 role has no treated rows"));
    }
    for (j, role) in [(1usize, role_pi), (2, role_pi), (3, role_q)] {
        let has_t = !ds.arm_rows(role, 1).is_empty();
        let has_c = !ds.arm_rows(role, 0).is_empty();
        if !(has_t && has_c) && !diag.boundary_losses.contains(&j) {
            diag.boundary_losses.push(j);
        }
    }

    let mut fixed = FixedBlocks::default();
    let mut betas: Vec<Vec<f64>> = Vec::with_capacity(6);
    let stages: [(LossKind, &[usize]); 6] = [
        (LossKind::PiA, role_pi),
        (LossKind::PiB, role_pi),
        (LossKind::Q, role_q),
        (LossKind::Mu, role_mu),
        (LossKind::TauN, role_tau_n),
        (LossKind::Tau, role_tau),
    ];
    for (stage, (kind, rows)) in stages.into_iter().enumerate() {
        let ctx = LossContext::new(ds, fixed.clone());
        let family = MqrLossFamily::new(&ctx, kind)?;
        let dim = family.dim();
        let mask: Option<Vec<bool>> = if opts.penalize_intercept || !ds.intercept_flag() {
            None
        } else {
            let mut m = vec![true; dim];
            m[0] = false;
            Some(m)
        };
        let mask_ref = mask.as_deref();
        let (beta, lambda, ok) = match &opts.lambda {
            LambdaRule::Fixed(lam) => {
                let loss = family.loss_on(rows);
                let res = solve_l1(loss.as_ref(), *lam, mask_ref, &vec![0.0; dim], &opts.solve)
                    .map_err(|e| Error::solver(format!("loss {}", kind.index()), e.to_string()))?;
                (res.coef, *lam, res.converged)
            }
            LambdaRule::Cv { n_lambda, decades, cv_folds } => {
                let grid = lambda_grid(&family, rows, *n_lambda, *decades, mask_ref);
                let cv = cv_select_lambda(
                    &family,
                    rows,
                    &grid,
                    *cv_folds,
                    derive_seed(seed, 0x3A, stage as u64),
                    mask_ref,
                    &opts.solve,
                )
                .map_err(|e| Error::solver(format!("loss {}", kind.index()), e.to_string()))?;
                (cv.beta, cv.lambda_star, true)
            }
        };
        diag.lambdas[stage] = lambda;
        diag.converged[stage] = ok;
        diag.clamp_activations += ctx.clamp_activations();
        match kind {
            LossKind::PiA => fixed.pi_a = Some(beta.clone()),
            LossKind::PiB => fixed.pi_b = Some(beta.clone()),
            LossKind::Q => fixed.q = Some(beta.clone()),
            LossKind::Mu => fixed.mu = Some(beta.clone()),
            LossKind::TauN => fixed.tau_n = Some(beta.clone()),
            LossKind::Tau => {}
        }
        betas.push(beta);
    }

    let mut it = betas.into_iter();
    let nu = CoefSextet {
        pi_a: it.next().unwrap(),
        pi_b: it.next().unwrap(),
        q: it.next().unwrap(),
        mu: it.next().unwrap(),
        tau_n: it.next().unwrap(),
        tau: it.next().unwrap(),
    };
    Ok((nu, diag))
}

/// Cross-fitted model quadruply robust estimator.
pub fn estimate_mqr(ds: &Dataset, opts: &MqrOptions) -> Result<EstimateReport> {
    let scheme = match opts.variant {
        MqrVariant::FiveWay => Scheme::Mqr5,
        MqrVariant::Full => Scheme::Full,
    };
    let plan = build_fold_plan(ds.n(), opts.k_folds, scheme, opts.seed)?;
    let tag = match opts.variant {
        MqrVariant::FiveWay => "MQR1",
        MqrVariant::Full => "MQR2",
    };
    let mut scores = vec![0.0; ds.n()];
    for (k, fold) in plan.folds().iter().enumerate() {
        let roles: [&[usize]; 5] = match opts.variant {
            MqrVariant::FiveWay => [
                &fold.roles[0][..],
                &fold.roles[1][..],
                &fold.roles[2][..],
                &fold.roles[3][..],
                &fold.roles[4][..],
            ],
            MqrVariant::Full => [&fold.roles[0][..]; 5],
        };
        let (nu, _diag) =
            fit_mqr_nuisances(ds, roles, opts, derive_seed(opts.seed, 0x3B, k as u64))?;
        for &i in &fold.eval {
            scores[i] =
                mqr_score(ds.y(i), ds.a_f64(i), ds.x_row(i), ds.s_row(i), &nu, opts.eps);
        }
    }
    EstimateReport::from_scores(scores, opts.level, tag)
}

/// Cross-fitted augmented-IPW estimator of `E[Y(a, M(a))]`.
pub fn estimate_aipw(
    ds: &Dataset,
    arm: u8,
    k_folds: usize,
    forest: &ForestOpts,
    eps: f64,
    level: f64,
    seed: u64,
) -> Result<EstimateReport> {
    assert!(arm == 0 || arm == 1);
    let plan = build_fold_plan(ds.n(), k_folds, Scheme::Full, seed)?;
    let map = FeatureMap::for_dataset(ds);
    let mut scores = vec![0.0; ds.n()];
    for (k, fold) in plan.folds().iter().enumerate() {
        let train = &fold.roles[0];
        let arm_rows = ds.arm_rows(train, arm);
        if arm_rows.is_empty() {
            return Err(Error::degenerate(format!("fold {k} has no rows with A={arm}")));
        }
        let labels: Vec<f64> = train.iter().map(|&i| ds.a_f64(i)).collect();
        let pi_forest = fit_probability_forest(
            &map.x_matrix(ds, train),
            &labels,
            forest,
            derive_seed(seed, 0xA1, 2 * k as u64),
            eps,
        )?;
        let m_targets: Vec<f64> = arm_rows.iter().map(|&i| ds.y(i)).collect();
        let m_forest = fit_regression_forest(
            &map.x_matrix(ds, &arm_rows),
            &m_targets,
            forest,
            derive_seed(seed, 0xA1, 2 * k as u64 + 1),
        )?;
        for &i in &fold.eval {
            let xf = map.x_features(ds.s_row(i));
            let pi = pi_forest.predict(&xf);
            let p_arm = if arm == 1 { pi } else { 1.0 - pi };
            scores[i] = aipw_score(ds.y(i), ds.a(i) == arm, m_forest.predict(&xf), p_arm);
        }
    }
    EstimateReport::from_scores(scores, level, &format!("AIPW{arm}"))
}

#[derive(Debug, Clone)]
pub struct OtrOptions {
    pub k_folds: usize,
    pub tuning: Tuning,
    pub penalize_intercept: bool,
    pub eps: f64,
    pub level: f64,
    pub seed: u64,
}

impl Default for OtrOptions {
    fn default() -> Self {
        OtrOptions {
            k_folds: 5,
            tuning: Tuning::default(),
            penalize_intercept: true,
            eps: 0.01,
            level: 0.95,
            seed: 0,
        }
    }
}

/// One fold's nested parametric fits for the odds-modeling baseline.
pub struct OtrFit {
    pub beta_pi: Vec<f64>,
    pub beta_p: Vec<f64>,
    pub beta_mu: Vec<f64>,
    pub beta_tau: Vec<f64>,
}

fn design_x(ds: &Dataset, rows: &[usize]) -> RowMat {
    RowMat::from_rows(rows.iter().map(|&i| ds.x_row(i).to_vec()).collect()).expect("uniform rows")
}

fn design_s(ds: &Dataset, rows: &[usize]) -> RowMat {
    RowMat::from_rows(rows.iter().map(|&i| ds.s_row(i).to_vec()).collect()).expect("uniform rows")
}

fn penalty_mask(ds: &Dataset, dim: usize, penalize_intercept: bool) -> Option<Vec<bool>> {
    if penalize_intercept || !ds.intercept_flag() {
        None
    } else {
        let mut m = vec![true; dim];
        m[0] = false;
        Some(m)
    }
}

/// Fits the odds-modeling nuisances on `rows`: logistic treatment models on
/// X and on S, a linear outcome model on the treated rows, and the nested
/// linear regression of the fitted outcome on X over control rows.
pub fn fit_otr_nuisances(
    ds: &Dataset,
    rows: &[usize],
    opts: &OtrOptions,
    seed: u64,
) -> Result<OtrFit> {
    let treated = ds.arm_rows(rows, 1);
    let control = ds.arm_rows(rows, 0);
    if treated.is_empty() || control.is_empty() {
        return Err(Error::degenerate("nested parametric fit needs both treatment groups"));
    }
    let labels: Vec<f64> = rows.iter().map(|&i| ds.a_f64(i)).collect();
    let x_all = design_x(ds, rows);
    let s_all = design_s(ds, rows);
    let mask_x = penalty_mask(ds, ds.d1(), opts.penalize_intercept);
    let mask_s = penalty_mask(ds, ds.d(), opts.penalize_intercept);
    let beta_pi = fit_lasso_logistic(
        &x_all,
        &labels,
        &opts.tuning,
        mask_x.as_deref(),
        derive_seed(seed, 0x07, 1),
    )?
    .beta;
    let beta_p = fit_lasso_logistic(
        &s_all,
        &labels,
        &opts.tuning,
        mask_s.as_deref(),
        derive_seed(seed, 0x07, 2),
    )?
    .beta;
    let s_treated = design_s(ds, &treated);
    let y_treated: Vec<f64> = treated.iter().map(|&i| ds.y(i)).collect();
    let beta_mu = fit_lasso_linear(
        &s_treated,
        &y_treated,
        None,
        &opts.tuning,
        mask_s.as_deref(),
        derive_seed(seed, 0x07, 3),
    )?
    .beta;
    let x_control = design_x(ds, &control);
    let mu_control: Vec<f64> = control.iter().map(|&i| dot(ds.s_row(i), &beta_mu)).collect();
    let beta_tau = fit_lasso_linear(
        &x_control,
        &mu_control,
        None,
        &opts.tuning,
        mask_x.as_deref(),
        derive_seed(seed, 0x07, 4),
    )?
    .beta;
    Ok(OtrFit { beta_pi, beta_p, beta_mu, beta_tau })
}

/// Parametric odds-modeling baseline: the influence-function score with
/// lasso-logistic propensities, the Bayes-odds density ratio, a lasso-linear
/// outcome model, and a nested lasso cross-world regression.
pub fn estimate_otr_prime(ds: &Dataset, opts: &OtrOptions) -> Result<EstimateReport> {
    let plan = build_fold_plan(ds.n(), opts.k_folds, Scheme::Full, opts.seed)?;
    let eps = opts.eps;
    let mut scores = vec![0.0; ds.n()];
    for (k, fold) in plan.folds().iter().enumerate() {
        let fit =
            fit_otr_nuisances(ds, &fold.roles[0], opts, derive_seed(opts.seed, 0x07F, k as u64))?;
        for &i in &fold.eval {
            let x = ds.x_row(i);
            let s = ds.s_row(i);
            let pi = logistic(dot(x, &fit.beta_pi)).clamp(eps, 1.0 - eps);
            let p = logistic(dot(s, &fit.beta_p)).clamp(eps, 1.0 - eps);
            let q = odds_ratio(pi, p, eps);
            scores[i] = eif_score(
                ds.y(i),
                ds.a_f64(i),
                pi,
                q,
                dot(s, &fit.beta_mu),
                dot(x, &fit.beta_tau),
            );
        }
    }
    EstimateReport::from_scores(scores, opts.level, "O-TR'")
}

/// Triply robust baseline for discrete mediators: the cross-world integral
/// evaluated as a finite sum over mediator levels with forest conditional
/// probabilities, plugged into the influence-function score.
pub fn estimate_tr_discrete(
    ds: &Dataset,
    k_folds: usize,
    forest: &ForestOpts,
    eps: f64,
    level: f64,
    seed: u64,
) -> Result<EstimateReport> {
    let plan = build_fold_plan(ds.n(), k_folds, Scheme::Full, seed)?;
    let map = FeatureMap::for_dataset(ds);
    let mut scores = vec![0.0; ds.n()];
    for (k, fold) in plan.folds().iter().enumerate() {
        let train = &fold.roles[0];
        let treated = ds.arm_rows(train, 1);
        if treated.is_empty() {
            return Err(Error::degenerate(format!("fold {k} has no treated rows")));
        }
        let labels: Vec<f64> = train.iter().map(|&i| ds.a_f64(i)).collect();
        let pi_forest = fit_probability_forest(
            &map.x_matrix(ds, train),
            &labels,
            forest,
            derive_seed(seed, 0x77, 3 * k as u64),
            eps,
        )?;
        let y_treated: Vec<f64> = treated.iter().map(|&i| ds.y(i)).collect();
        let mu_forest = fit_regression_forest(
            &map.s_matrix(ds, &treated),
            &y_treated,
            forest,
            derive_seed(seed, 0x77, 3 * k as u64 + 1),
        )?;
        let med = DiscreteMediatorModel::fit(
            ds,
            train,
            forest,
            eps,
            derive_seed(seed, 0x77, 3 * k as u64 + 2),
        )?;
        for &i in &fold.eval {
            let x = ds.x_row(i);
            let s = ds.s_row(i);
            let m = ds.m_row(i);
            let pi = pi_forest.predict(&map.x_features(s));
            let q = med.ratio(s, m);
            let mu = mu_forest.predict(&map.s_features(s));
            // tau(X) as the finite sum of mu(X, level) f0(level | X)
            let probs = med.level_probs(0, s);
            let mut tau = 0.0;
            for (li, level_m) in med.levels().iter().enumerate() {
                let mut srow = x.to_vec();
                srow.extend_from_slice(level_m);
                tau += mu_forest.predict(&map.s_features(&srow)) * probs[li];
            }
            scores[i] = eif_score(ds.y(i), ds.a_f64(i), pi, q, mu, tau);
        }
    }
    EstimateReport::from_scores(scores, level, "TR")
}

/// Difference-based cross-world regression: fit the correction
/// `q(S) (Y - mu(S))` on X over the treated rows and add it to the nested
/// stage, instead of refitting the corrected target directly.
pub fn fit_tau_difference(
    ds: &Dataset,
    rows: &[usize],
    mu: Eval,
    q: Eval,
    tau_n: Eval,
    forest: &ForestOpts,
    seed: u64,
) -> Result<Eval> {
    let treated = ds.arm_rows(rows, 1);
    if treated.is_empty() {
        return Err(Error::degenerate("difference regression needs treated rows"));
    }
    let map = FeatureMap::for_dataset(ds);
    let targets: Vec<f64> = treated
        .iter()
        .map(|&i| {
            let s = ds.s_row(i);
            q(s) * (ds.y(i) - mu(s))
        })
        .collect();
    let delta_forest = fit_regression_forest(&map.x_matrix(ds, &treated), &targets, forest, seed)?;
    Ok(Arc::new(move |x: &[f64]| tau_n(x) + delta_forest.predict(&strip_x(&map, x))))
}

/// Influence-function estimator with the true nuisance functions.
pub fn estimate_oracle(
    ds: &Dataset,
    truth: &Truth,
    eps: f64,
    level: f64,
) -> Result<EstimateReport> {
    let nuis = NuisanceSet::from_truth(truth, eps);
    let scores: Vec<f64> = (0..ds.n())
        .map(|i| nuis.score(ds.y(i), ds.a_f64(i), ds.x_row(i), ds.s_row(i)))
        .collect();
    EstimateReport::from_scores(scores, level, "Oracle")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectContrast {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

/// Natural effect decomposition built from three arm estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectReport {
    pub theta_10: EstimateReport,
    pub theta_11: EstimateReport,
    pub theta_00: EstimateReport,
    pub nde: EffectContrast,
    pub nie: EffectContrast,
    pub ate: EffectContrast,
    /// `NIE / ATE`; absent when the ATE estimate is exactly zero.
    pub mediation_proportion: Option<f64>,
}

// Contrast inference treats the two arm estimates as independent sums; the
// shared-sample covariance is not tracked, so the p-values are approximate.
fn contrast(a: &EstimateReport, b: &EstimateReport, level: f64) -> EffectContrast {
    let estimate = a.theta_hat - b.theta_hat;
    let var = a.sigma2_hat / a.n as f64 + b.sigma2_hat / b.n as f64;
    let se = var.sqrt();
    let z = normal_quantile(0.5 * (1.0 + level));
    let p_value = if se == 0.0 {
        f64::from(estimate == 0.0)
    } else {
        (2.0 * normal_sf((estimate / se).abs())).min(1.0)
    };
    EffectContrast { estimate, ci_low: estimate - z * se, ci_high: estimate + z * se, p_value }
}

/// Combines the cross-world estimate with the two same-world arm estimates
/// into direct/indirect/total effects and the mediation proportion.
pub fn mediation_effects(
    r10: EstimateReport,
    r11: EstimateReport,
    r00: EstimateReport,
    level: f64,
) -> Result<EffectReport> {
    if r10.n != r11.n || r10.n != r00.n {
        return Err(Error::validation(format!(
            "effect composition needs a common sample size, got {}, {}, {}",
            r10.n, r11.n, r00.n
        )));
    }
    let nde = contrast(&r10, &r00, level);
    let nie = contrast(&r11, &r10, level);
    let ate = contrast(&r11, &r00, level);
    let mediation_proportion =
        if ate.estimate == 0.0 { None } else { Some(nie.estimate / ate.estimate) };
    Ok(EffectReport {
        theta_10: r10,
        theta_11: r11,
        theta_00: r00,
        nde,
        nie,
        ate,
        mediation_proportion,
    })
}

/// Runs an estimator across `repeats` derived seeds and reports the median
/// point estimate. The interval comes from the repeat achieving the median
/// (lower seed on ties; the lower middle for even counts), with its scores
/// recentred so the report mean equals the reported estimate exactly.
pub fn repeat_median(
    run: impl Fn(u64) -> Result<EstimateReport>,
    repeats: usize,
    base_seed: u64,
) -> Result<EstimateReport> {
    if repeats == 0 {
        return Err(Error::validation("repeat_median needs at least one repeat"));
    }
    let mut reports = Vec::with_capacity(repeats);
    for r in 0..repeats {
        reports.push(run(derive_seed(base_seed, 0x4E6, r as u64))?);
    }
    if repeats == 1 {
        return Ok(reports.pop().unwrap());
    }
    let mut order: Vec<usize> = (0..repeats).collect();
    order.sort_by(|&a, &b| {
        reports[a].theta_hat.partial_cmp(&reports[b].theta_hat).unwrap().then(a.cmp(&b))
    });
    let (theta_med, chosen_idx) = if repeats % 2 == 1 {
        let mid = order[repeats / 2];
        (reports[mid].theta_hat, mid)
    } else {
        let lower = order[repeats / 2 - 1];
        let upper = order[repeats / 2];
        (0.5 * (reports[lower].theta_hat + reports[upper].theta_hat), lower)
    };
    let chosen = &reports[chosen_idx];
    if chosen.theta_hat == theta_med {
        return Ok(chosen.clone());
    }
    let shift = theta_med - chosen.theta_hat;
    let scores: Vec<f64> = chosen.scores.iter().map(|s| s + shift).collect();
    EstimateReport::from_scores(scores, chosen.level, &chosen.method_tag)
}
