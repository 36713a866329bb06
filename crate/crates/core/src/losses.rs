//! The six tilted nuisance losses behind the model quadruply robust score,
//! their analytic gradients, the score itself, and link utilities.
//!
//! Loss 1 and 2 calibrate two inverse-probability weight models for the
//! treated and control groups; loss 3 fits an exponential density-ratio
//! model; losses 4-6 are weighted squared losses for the outcome, nested,
//! and corrected cross-world regressions. Later losses take the earlier
//! fitted blocks as fixed inputs.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::data::Dataset;
use crate::math::dot;
use crate::optim::{LossFamily, QuadraticLoss, SmoothLoss};
use crate::{Error, Result};

/// Exponent clamp bound: exp arguments are limited to this magnitude during
/// line search so the tilted losses cannot overflow.
pub const EXP_CLAMP: f64 = 30.0;

/// Overflow-safe logistic function.
#[inline]
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `exp` with the argument clamped to `[-EXP_CLAMP, EXP_CLAMP]`; bumps the
/// counter when the clamp is active.
#[inline]
fn cexp(u: f64, hits: &AtomicU64) -> f64 {
    if u > EXP_CLAMP {
        hits.fetch_add(1, Ordering::Relaxed);
        EXP_CLAMP.exp()
    } else if u < -EXP_CLAMP {
        hits.fetch_add(1, Ordering::Relaxed);
        (-EXP_CLAMP).exp()
    } else {
        u.exp()
    }
}

// 1/g(u) = 1 + exp(-u), clamp-guarded.
#[inline]
fn inv_g(u: f64, hits: &AtomicU64) -> f64 {
    1.0 + cexp(-u, hits)
}

// 1/(1 - g(u)) = 1 + exp(u), clamp-guarded.
#[inline]
fn inv_one_minus_g(u: f64, hits: &AtomicU64) -> f64 {
    1.0 + cexp(u, hits)
}

/// Which of the six losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    PiA,
    PiB,
    Q,
    Mu,
    TauN,
    Tau,
}

impl LossKind {
    pub fn from_index(j: usize) -> Option<LossKind> {
        match j {
            1 => Some(LossKind::PiA),
            2 => Some(LossKind::PiB),
            3 => Some(LossKind::Q),
            4 => Some(LossKind::Mu),
            5 => Some(LossKind::TauN),
            6 => Some(LossKind::Tau),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            LossKind::PiA => 1,
            LossKind::PiB => 2,
            LossKind::Q => 3,
            LossKind::Mu => 4,
            LossKind::TauN => 5,
            LossKind::Tau => 6,
        }
    }

    /// Dimension of the free coefficient vector: X-indexed losses use d1,
    /// S-indexed losses use d = d1 + d2.
    pub fn beta_dim(self, d1: usize, d: usize) -> usize {
        match self {
            LossKind::PiA | LossKind::PiB | LossKind::TauN | LossKind::Tau => d1,
            LossKind::Q | LossKind::Mu => d,
        }
    }
}

/// Previously fitted coefficient blocks a loss may depend on.
#[derive(Debug, Clone, Default)]
pub struct FixedBlocks {
    pub pi_a: Option<Vec<f64>>,
    pub pi_b: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
    pub tau_n: Option<Vec<f64>>,
}

/// Data slice plus frozen earlier fits; the unit every loss evaluates on.
pub struct LossContext<'a> {
    pub data: &'a Dataset,
    pub fixed: FixedBlocks,
    clamp_hits: AtomicU64,
}

impl<'a> LossContext<'a> {
    pub fn new(data: &'a Dataset, fixed: FixedBlocks) -> Self {
        LossContext { data, fixed, clamp_hits: AtomicU64::new(0) }
    }

    /// Number of clamp-guarded exponent evaluations so far.
    pub fn clamp_activations(&self) -> u64 {
        self.clamp_hits.load(Ordering::Relaxed)
    }

    fn require(&self, kind: LossKind) -> Result<()> {
        let missing = |name: &str| {
            Error::validation(format!(
                "loss {} requires the fixed block {name}",
                kind.index()
            ))
        };
        match kind {
            LossKind::PiA | LossKind::PiB => Ok(()),
            LossKind::Q => {
                self.fixed.pi_a.as_ref().ok_or_else(|| missing("pi_a"))?;
                self.fixed.pi_b.as_ref().ok_or_else(|| missing("pi_b"))?;
                Ok(())
            }
            LossKind::Mu => {
                self.fixed.pi_a.as_ref().ok_or_else(|| missing("pi_a"))?;
                self.fixed.q.as_ref().ok_or_else(|| missing("q"))?;
                Ok(())
            }
            LossKind::TauN => {
                self.fixed.pi_b.as_ref().ok_or_else(|| missing("pi_b"))?;
                self.fixed.mu.as_ref().ok_or_else(|| missing("mu"))?;
                Ok(())
            }
            LossKind::Tau => {
                self.fixed.pi_a.as_ref().ok_or_else(|| missing("pi_a"))?;
                self.fixed.q.as_ref().ok_or_else(|| missing("q"))?;
                self.fixed.mu.as_ref().ok_or_else(|| missing("mu"))?;
                self.fixed.tau_n.as_ref().ok_or_else(|| missing("tau_n"))?;
                Ok(())
            }
        }
    }

    /// Per-observation loss value.
    pub fn loss_row(&self, kind: LossKind, i: usize, beta: &[f64]) -> f64 {
        let ds = self.data;
        let a = ds.a_f64(i);
        let x = ds.x_row(i);
        let s = ds.s_row(i);
        let hits = &self.clamp_hits;
        match kind {
            LossKind::PiA => {
                let u = dot(x, beta);
                (1.0 - a) * u + a * cexp(-u, hits)
            }
            LossKind::PiB => {
                let u = dot(x, beta);
                (1.0 - a) * cexp(u, hits) - a * u
            }
            LossKind::Q => {
                let ua = dot(x, self.fixed.pi_a.as_ref().unwrap());
                let ub = dot(x, self.fixed.pi_b.as_ref().unwrap());
                let v = dot(s, beta);
                a * inv_g(ua, hits) * cexp(v, hits)
                    - (1.0 - a) * inv_one_minus_g(ub, hits) * v
            }
            LossKind::Mu => {
                let ua = dot(x, self.fixed.pi_a.as_ref().unwrap());
                let vq = dot(s, self.fixed.q.as_ref().unwrap());
                let r = dot(s, beta) - ds.y(i);
                a * inv_g(ua, hits) * cexp(vq, hits) * r * r
            }
            LossKind::TauN => {
                let ub = dot(x, self.fixed.pi_b.as_ref().unwrap());
                let r = dot(x, beta) - dot(s, self.fixed.mu.as_ref().unwrap());
                (1.0 - a) * cexp(ub, hits) * r * r
            }
            LossKind::Tau => {
                let ua = dot(x, self.fixed.pi_a.as_ref().unwrap());
                let vq = dot(s, self.fixed.q.as_ref().unwrap());
                let resid = ds.y(i) - dot(s, self.fixed.mu.as_ref().unwrap());
                let r = cexp(vq, hits) * resid + dot(x, self.fixed.tau_n.as_ref().unwrap())
                    - dot(x, beta);
                a * cexp(-ua, hits) * r * r
            }
        }
    }

    /// Adds `scale` times the per-observation gradient to `out`.
    pub fn grad_row_into(&self, kind: LossKind, i: usize, beta: &[f64], scale: f64, out: &mut [f64]) {
        let ds = self.data;
        let a = ds.a_f64(i);
        let x = ds.x_row(i);
        let s = ds.s_row(i);
        let hits = &self.clamp_hits;
        match kind {
            LossKind::PiA => {
                let u = dot(x, beta);
                let c = (1.0 - a) - a * cexp(-u, hits);
                axpy(scale * c, x, out);
            }
            LossKind::PiB => {
                let u = dot(x, beta);
                let c = (1.0 - a) * cexp(u, hits) - a;
                axpy(scale * c, x, out);
            }
            LossKind::Q => {
                let ua = dot(x, self.fixed.pi_a.as_ref().unwrap());
                let ub = dot(x, self.fixed.pi_b.as_ref().unwrap());
                let v = dot(s, beta);
                let c = a * inv_g(ua, hits) * cexp(v, hits)
                    - (1.0 - a) * inv_one_minus_g(ub, hits);
                axpy(scale * c, s, out);
            }
            LossKind::Mu => {
                let ua = dot(x, self.fixed.pi_a.as_ref().unwrap());
                let vq = dot(s, self.fixed.q.as_ref().unwrap());
                let r = dot(s, beta) - ds.y(i);
                let c = 2.0 * a * inv_g(ua, hits) * cexp(vq, hits) * r;
                axpy(scale * c, s, out);
            }
            LossKind::TauN => {
                let ub = dot(x, self.fixed.pi_b.as_ref().unwrap());
                let r = dot(x, beta) - dot(s, self.fixed.mu.as_ref().unwrap());
                let c = 2.0 * (1.0 - a) * cexp(ub, hits) * r;
                axpy(scale * c, x, out);
            }
            LossKind::Tau => {
                let ua = dot(x, self.fixed.pi_a.as_ref().unwrap());
                let vq = dot(s, self.fixed.q.as_ref().unwrap());
                let resid = ds.y(i) - dot(s, self.fixed.mu.as_ref().unwrap());
                let r = cexp(vq, hits) * resid + dot(x, self.fixed.tau_n.as_ref().unwrap())
                    - dot(x, beta);
                let c = -2.0 * a * cexp(-ua, hits) * r;
                axpy(scale * c, x, out);
            }
        }
    }
}

#[inline]
fn axpy(c: f64, v: &[f64], out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(v) {
        *o += c * x;
    }
}

/// Empirical average of loss `kind` over `rows`.
pub fn loss_eval(kind: LossKind, ctx: &LossContext, rows: &[usize], beta: &[f64]) -> Result<f64> {
    ctx.require(kind)?;
    check_dim(kind, ctx, beta)?;
    let sum: f64 = rows.iter().map(|&i| ctx.loss_row(kind, i, beta)).sum();
    Ok(sum / rows.len() as f64)
}

/// Empirical average gradient of loss `kind` over `rows`.
pub fn loss_grad(
    kind: LossKind,
    ctx: &LossContext,
    rows: &[usize],
    beta: &[f64],
) -> Result<Vec<f64>> {
    ctx.require(kind)?;
    check_dim(kind, ctx, beta)?;
    let mut out = vec![0.0; beta.len()];
    let scale = 1.0 / rows.len() as f64;
    for &i in rows {
        ctx.grad_row_into(kind, i, beta, scale, &mut out);
    }
    Ok(out)
}

fn check_dim(kind: LossKind, ctx: &LossContext, beta: &[f64]) -> Result<()> {
    let want = kind.beta_dim(ctx.data.d1(), ctx.data.d());
    if beta.len() != want {
        return Err(Error::validation(format!(
            "loss {} expects beta of dimension {want}, got {}",
            kind.index(),
            beta.len()
        )));
    }
    Ok(())
}

/// The six fitted coefficient blocks of the parametric route.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefSextet {
    pub pi_a: Vec<f64>,
    pub pi_b: Vec<f64>,
    pub q: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau_n: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Model quadruply robust score at one observation.
///
/// Logistic weights are clipped to `[eps, 1-eps]` and the exponential
/// density-ratio factor to `[eps^2, eps^-2]`.
pub fn mqr_score(y: f64, a: f64, x: &[f64], s: &[f64], nu: &CoefSextet, eps: f64) -> f64 {
    let ga = logistic(dot(x, &nu.pi_a)).clamp(eps, 1.0 - eps);
    let gb = logistic(dot(x, &nu.pi_b)).clamp(eps, 1.0 - eps);
    let q = dot(s, &nu.q).exp().clamp(eps * eps, 1.0 / (eps * eps));
    let mu = dot(s, &nu.mu);
    let tau_n = dot(x, &nu.tau_n);
    let tau = dot(x, &nu.tau);
    a * q * (y - mu) / ga + (1.0 - a) * (mu - tau_n) / (1.0 - gb) + a * (tau_n - tau) / ga + tau
}

/// Per-block gradient of the MQR score at one observation, unclipped; used
/// by the moment-condition diagnostics.
#[derive(Debug, Clone)]
pub struct ScoreGrad {
    pub pi_a: Vec<f64>,
    pub pi_b: Vec<f64>,
    pub q: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau_n: Vec<f64>,
    pub tau: Vec<f64>,
}

impl ScoreGrad {
    pub fn zeros(d1: usize, d: usize) -> Self {
        ScoreGrad {
            pi_a: vec![0.0; d1],
            pi_b: vec![0.0; d1],
            q: vec![0.0; d],
            mu: vec![0.0; d],
            tau_n: vec![0.0; d1],
            tau: vec![0.0; d1],
        }
    }

    pub fn max_norm_per_block(&self) -> [f64; 6] {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        [
            inf(&self.pi_a),
            inf(&self.pi_b),
            inf(&self.q),
            inf(&self.mu),
            inf(&self.tau_n),
            inf(&self.tau),
        ]
    }
}

/// Adds `scale` times the score gradient at observation `(y, a, x, s)`.
pub fn accumulate_score_grad(
    y: f64,
    a: f64,
    x: &[f64],
    s: &[f64],
    nu: &CoefSextet,
    scale: f64,
    out: &mut ScoreGrad,
) {
    let ua = dot(x, &nu.pi_a);
    let ub = dot(x, &nu.pi_b);
    let eq = dot(s, &nu.q).exp();
    let mu = dot(s, &nu.mu);
    let tau_n = dot(x, &nu.tau_n);
    let tau = dot(x, &nu.tau);
    let inv_ga = 1.0 + (-ua).exp();
    let inv_1mgb = 1.0 + ub.exp();

    // d/d pi_a of 1/g(u) is -exp(-u); both A-group terms share it.
    let c_pia = -a * (-ua).exp() * (eq * (y - mu) + tau_n - tau);
    axpy(scale * c_pia, x, &mut out.pi_a);
    let c_pib = (1.0 - a) * ub.exp() * (mu - tau_n);
    axpy(scale * c_pib, x, &mut out.pi_b);
    let c_q = a * inv_ga * eq * (y - mu);
    axpy(scale * c_q, s, &mut out.q);
    let c_mu = -a * inv_ga * eq + (1.0 - a) * inv_1mgb;
    axpy(scale * c_mu, s, &mut out.mu);
    let c_taun = a * inv_ga - (1.0 - a) * inv_1mgb;
    axpy(scale * c_taun, x, &mut out.tau_n);
    let c_tau = 1.0 - a * inv_ga;
    axpy(scale * c_tau, x, &mut out.tau);
}

/// [`LossFamily`] adapter for one of the six losses over a context, enabling
/// cross-validated penalty tuning. The quadratic losses (4-6) are fit in
/// precomputed Gram form.
pub struct MqrLossFamily<'a> {
    pub ctx: &'a LossContext<'a>,
    pub kind: LossKind,
}

impl<'a> MqrLossFamily<'a> {
    pub fn new(ctx: &'a LossContext<'a>, kind: LossKind) -> Result<Self> {
        ctx.require(kind)?;
        Ok(MqrLossFamily { ctx, kind })
    }

    fn quadratic_on(&self, rows: &[usize]) -> QuadraticLoss {
        let ds = self.ctx.data;
        let hits = &self.ctx.clamp_hits;
        let fixed = &self.ctx.fixed;
        let dim = self.kind.beta_dim(ds.d1(), ds.d());
        match self.kind {
            LossKind::Mu => QuadraticLoss::from_rows(
                dim,
                rows.iter().map(|&i| {
                    let x = ds.x_row(i);
                    let s = ds.s_row(i);
                    let w = ds.a_f64(i)
                        * inv_g(dot(x, fixed.pi_a.as_ref().unwrap()), hits)
                        * cexp(dot(s, fixed.q.as_ref().unwrap()), hits);
                    (s, ds.y(i), w)
                }),
            ),
            LossKind::TauN => QuadraticLoss::from_rows(
                dim,
                rows.iter().map(|&i| {
                    let x = ds.x_row(i);
                    let s = ds.s_row(i);
                    let w = (1.0 - ds.a_f64(i))
                        * cexp(dot(x, fixed.pi_b.as_ref().unwrap()), hits);
                    (x, dot(s, fixed.mu.as_ref().unwrap()), w)
                }),
            ),
            LossKind::Tau => QuadraticLoss::from_rows(
                dim,
                rows.iter().map(|&i| {
                    let x = ds.x_row(i);
                    let s = ds.s_row(i);
                    let w = ds.a_f64(i) * cexp(-dot(x, fixed.pi_a.as_ref().unwrap()), hits);
                    let target = cexp(dot(s, fixed.q.as_ref().unwrap()), hits)
                        * (ds.y(i) - dot(s, fixed.mu.as_ref().unwrap()))
                        + dot(x, fixed.tau_n.as_ref().unwrap());
                    (x, target, w)
                }),
            ),
            _ => unreachable!("quadratic_on called for a non-quadratic loss"),
        }
    }
}

struct StreamingLoss<'a> {
    family: &'a MqrLossFamily<'a>,
    rows: Vec<usize>,
}

impl SmoothLoss for StreamingLoss<'_> {
    fn dim(&self) -> usize {
        self.family.dim()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let ctx = self.family.ctx;
        let sum: f64 =
            self.rows.iter().map(|&i| ctx.loss_row(self.family.kind, i, beta)).sum();
        sum / self.rows.len() as f64
    }

    fn grad(&self, beta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let ctx = self.family.ctx;
        let scale = 1.0 / self.rows.len() as f64;
        for &i in &self.rows {
            ctx.grad_row_into(self.family.kind, i, beta, scale, out);
        }
    }
}

impl LossFamily for MqrLossFamily<'_> {
    fn dim(&self) -> usize {
        self.kind.beta_dim(self.ctx.data.d1(), self.ctx.data.d())
    }

    fn loss_on<'b>(&'b self, rows: &[usize]) -> Box<dyn SmoothLoss + 'b> {
        match self.kind {
            LossKind::Mu | LossKind::TauN | LossKind::Tau => Box::new(self.quadratic_on(rows)),
            _ => Box::new(StreamingLoss { family: self, rows: rows.to_vec() }),
        }
    }

    fn eval_on(&self, rows: &[usize], beta: &[f64]) -> f64 {
        let sum: f64 = rows.iter().map(|&i| self.ctx.loss_row(self.kind, i, beta)).sum();
        sum / rows.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RowMat;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logistic_basics() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(30.0) - 1.0).abs() < 1e-12);
        for &u in &[-3.0, -0.5, 0.0, 1.7, 10.0] {
            assert!((logistic(u) - (1.0 - logistic(-u))).abs() < 1e-15);
        }
    }

    fn single_obs(y: f64, a: f64, x2: f64, m: f64) -> Dataset {
        // two rows so both treatment groups exist; tests index row 0
        Dataset::new(
            vec![y, 0.0],
            vec![a, 1.0 - a],
            RowMat::from_rows(vec![vec![1.0, x2], vec![1.0, 0.0]]).unwrap(),
            RowMat::from_rows(vec![vec![m], vec![0.0]]).unwrap(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn loss_values_at_zero() {
        // loss 1 at beta=0, A=1: exp(0) = 1
        let ds = single_obs(0.0, 1.0, 2.0, 0.0);
        let ctx = LossContext::new(&ds, FixedBlocks::default());
        let v = loss_eval(LossKind::PiA, &ctx, &[0], &[0.0, 0.0]).unwrap();
        assert_eq!(v, 1.0);

        // loss 2 at beta=0, A=0: exp(0) - 0 = 1
        let ds = single_obs(0.0, 0.0, 2.0, 0.0);
        let ctx = LossContext::new(&ds, FixedBlocks::default());
        let v = loss_eval(LossKind::PiB, &ctx, &[0], &[0.0, 0.0]).unwrap();
        assert_eq!(v, 1.0);

        // loss 4: A=1, pi_a=0, q=0, Y=3, S'mu=1 -> (1/0.5)*1*(1-3)^2 = 8
        let ds = single_obs(3.0, 1.0, 0.0, 0.0);
        let fixed = FixedBlocks {
            pi_a: Some(vec![0.0, 0.0]),
            q: Some(vec![0.0, 0.0, 0.0]),
            ..Default::default()
        };
        let ctx = LossContext::new(&ds, fixed);
        let v = loss_eval(LossKind::Mu, &ctx, &[0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, 8.0);
    }

    #[test]
    fn gradient_values_at_zero() {
        // loss 1, A=1, X=(1,2), beta=0: [1 - 1/g(0)] X = -X
        let ds = single_obs(0.0, 1.0, 2.0, 0.0);
        let ctx = LossContext::new(&ds, FixedBlocks::default());
        let g = loss_grad(LossKind::PiA, &ctx, &[0], &[0.0, 0.0]).unwrap();
        assert_eq!(g, vec![-1.0, -2.0]);

        // loss 5 over an all-treated slice is identically zero
        let ds = single_obs(1.0, 1.0, 2.0, 0.5);
        let fixed = FixedBlocks {
            pi_b: Some(vec![0.1, -0.2]),
            mu: Some(vec![0.3, 0.1, 0.2]),
            ..Default::default()
        };
        let ctx = LossContext::new(&ds, fixed);
        let g = loss_grad(LossKind::TauN, &ctx, &[0], &[0.4, -0.1]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn missing_fixed_block_is_an_error() {
        let ds = single_obs(1.0, 1.0, 2.0, 0.5);
        let ctx = LossContext::new(&ds, FixedBlocks::default());
        assert!(loss_eval(LossKind::Q, &ctx, &[0], &[0.0; 3]).is_err());
        assert!(loss_eval(LossKind::PiA, &ctx, &[0], &[0.0; 5]).is_err());
    }

    fn random_ctx_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
        let d1 = 3;
        let d2 = 2;
        let mut x_rows = Vec::new();
        let mut m_rows = Vec::new();
        let mut y = Vec::new();
        let mut a = Vec::new();
        for i in 0..n {
            let mut xr = vec![1.0];
            for _ in 1..d1 {
                xr.push(rng.gen_range(-1.5..1.5));
            }
            x_rows.push(xr);
            m_rows.push((0..d2).map(|_| rng.gen_range(-1.5..1.5)).collect());
            y.push(rng.gen_range(-2.0..2.0));
            a.push(if i < n / 2 { 1.0 } else { 0.0 });
        }
        Dataset::new(
            y,
            a,
            RowMat::from_rows(x_rows).unwrap(),
            RowMat::from_rows(m_rows).unwrap(),
            true,
        )
        .unwrap()
    }

    fn random_fixed(rng: &mut ChaCha8Rng, d1: usize, d: usize) -> FixedBlocks {
        let mut vec_of = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()
        };
        FixedBlocks {
            pi_a: Some(vec_of(d1)),
            pi_b: Some(vec_of(d1)),
            q: Some(vec_of(d)),
            mu: Some(vec_of(d)),
            tau_n: Some(vec_of(d1)),
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        let h = 1e-5;
        for trial in 0..30 {
            let ds = random_ctx_dataset(&mut rng, 24);
            let fixed = random_fixed(&mut rng, ds.d1(), ds.d());
            let ctx = LossContext::new(&ds, fixed);
            let rows: Vec<usize> = (0..ds.n()).collect();
            for j in 1..=6 {
                let kind = LossKind::from_index(j).unwrap();
                let dim = kind.beta_dim(ds.d1(), ds.d());
                let beta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.4..0.4)).collect();
                let analytic = loss_grad(kind, &ctx, &rows, &beta).unwrap();
                for c in 0..dim {
                    let mut bp = beta.clone();
                    let mut bm = beta.clone();
                    bp[c] += h;
                    bm[c] -= h;
                    let fd = (loss_eval(kind, &ctx, &rows, &bp).unwrap()
                        - loss_eval(kind, &ctx, &rows, &bm).unwrap())
                        / (2.0 * h);
                    let rel = (analytic[c] - fd).abs() / fd.abs().max(1.0);
                    assert!(
                        rel < 1e-5,
                        "trial {trial} loss {j} coord {c}: analytic {} vs fd {fd}",
                        analytic[c]
                    );
                }
            }
        }
    }

    #[test]
    fn weighted_square_losses_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ds = random_ctx_dataset(&mut rng, 30);
        let fixed = random_fixed(&mut rng, ds.d1(), ds.d());
        let ctx = LossContext::new(&ds, fixed);
        let rows: Vec<usize> = (0..ds.n()).collect();
        for _ in 0..20 {
            for &j in &[4usize, 5, 6] {
                let kind = LossKind::from_index(j).unwrap();
                let dim = kind.beta_dim(ds.d1(), ds.d());
                let beta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                assert!(loss_eval(kind, &ctx, &rows, &beta).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn midpoint_convexity_spot_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ds = random_ctx_dataset(&mut rng, 20);
        let fixed = random_fixed(&mut rng, ds.d1(), ds.d());
        let ctx = LossContext::new(&ds, fixed);
        let rows: Vec<usize> = (0..ds.n()).collect();
        for _ in 0..20 {
            for j in 1..=6 {
                let kind = LossKind::from_index(j).unwrap();
                let dim = kind.beta_dim(ds.d1(), ds.d());
                let u: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mid: Vec<f64> =
                    u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
                let lu = loss_eval(kind, &ctx, &rows, &u).unwrap();
                let lv = loss_eval(kind, &ctx, &rows, &v).unwrap();
                let lm = loss_eval(kind, &ctx, &rows, &mid).unwrap();
                assert!(lm <= 0.5 * (lu + lv) + 1e-9, "loss {j} failed midpoint convexity");
            }
        }
    }

    #[test]
    fn gram_form_matches_streaming_for_quadratic_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let ds = random_ctx_dataset(&mut rng, 26);
        let fixed = random_fixed(&mut rng, ds.d1(), ds.d());
        let ctx = LossContext::new(&ds, fixed);
        let rows: Vec<usize> = (0..ds.n()).collect();
        for &j in &[4usize, 5, 6] {
            let kind = LossKind::from_index(j).unwrap();
            let fam = MqrLossFamily::new(&ctx, kind).unwrap();
            let gram = fam.loss_on(&rows);
            let dim = kind.beta_dim(ds.d1(), ds.d());
            for _ in 0..5 {
                let beta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v_stream = loss_eval(kind, &ctx, &rows, &beta).unwrap();
                let v_gram = gram.value(&beta);
                assert!(
                    (v_stream - v_gram).abs() < 1e-10 * v_stream.abs().max(1.0),
                    "loss {j}: {v_stream} vs {v_gram}"
                );
                let g_stream = loss_grad(kind, &ctx, &rows, &beta).unwrap();
                let g_gram = gram.grad_vec(&beta);
                for c in 0..dim {
                    assert!((g_stream[c] - g_gram[c]).abs() < 1e-10 * g_stream[c].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn mqr_score_arithmetic() {
        // beta_pi_a = beta_pi_b = 0 => weights 1/0.5; q=1; outcome blocks 0;
        // A=1, Y=2 -> 1*2/0.5 = 4
        let nu = CoefSextet {
            pi_a: vec![0.0, 0.0],
            pi_b: vec![0.0, 0.0],
            q: vec![0.0, 0.0, 0.0],
            mu: vec![0.0, 0.0, 0.0],
            tau_n: vec![0.0, 0.0],
            tau: vec![0.0, 0.0],
        };
        let x = [1.0, 0.0];
        let s = [1.0, 0.0, 0.0];
        assert_eq!(mqr_score(2.0, 1.0, &x, &s, &nu, 0.01), 4.0);

        // identical tau_n and tau blocks: third term vanishes; A=0 case
        // with S'mu = 1, X'tau_n = X'tau = 1 gives (1-1)/(1-g(1)) + 1
        let nu2 = CoefSextet {
            pi_a: vec![1.0, 0.0],
            pi_b: vec![1.0, 0.0],
            q: vec![0.3, 0.0, 0.0],
            mu: vec![1.0, 0.0, 0.0],
            tau_n: vec![1.0, 0.0],
            tau: vec![1.0, 0.0],
        };
        let v = mqr_score(5.0, 0.0, &x, &s, &nu2, 0.01);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamp_counter_records_extreme_exponents() {
        let ds = single_obs(1.0, 1.0, 2.0, 0.5);
        let ctx = LossContext::new(&ds, FixedBlocks::default());
        let _ = loss_eval(LossKind::PiA, &ctx, &[0], &[-40.0, 0.0]).unwrap();
        assert!(ctx.clamp_activations() > 0);
    }
}
