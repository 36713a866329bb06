//! Cross-fitting fold plans with per-fold nuisance role partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::derive_seed;
use crate::{Error, Result};

/// How the out-of-fold indices `I_{-k}` are divided among nuisance stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Three roles: one for (pi, q, mu), one for tau_n, one for tau.
    Qr3,
    /// Five roles: pi, q, mu, tau_n, tau.
    Mqr5,
    /// A single role covering all of `I_{-k}`.
    Full,
}

impl Scheme {
    pub fn n_roles(self) -> usize {
        match self {
            Scheme::Qr3 => 3,
            Scheme::Mqr5 => 5,
            Scheme::Full => 1,
        }
    }
}

/// Evaluation folds plus role sub-partitions, reconstructible from
/// `(n, k, scheme, seed)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub n: usize,
    pub k_folds: usize,
    pub scheme: Scheme,
    pub seed: u64,
    eval_fold_of: Vec<u16>,
    folds: Vec<FoldRoles>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldRoles {
    pub eval: Vec<usize>,
    pub roles: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn eval_fold_of(&self, i: usize) -> usize {
        self.eval_fold_of[i] as usize
    }

    pub fn fold(&self, k: usize) -> &FoldRoles {
        &self.folds[k]
    }

    pub fn folds(&self) -> &[FoldRoles] {
        &self.folds
    }
}

/// Builds a uniformly shuffled fold plan; deterministic in the seed.
pub fn build_fold_plan(n: usize, k: usize, scheme: Scheme, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::validation(format!("need at least 2 folds, got {k}")));
    }
    if n < 2 * k {
        return Err(Error::validation(format!("n={n} too small for k={k} folds (need n >= 2k)")));
    }
    // Smallest I_{-k} must feed every role at least one index.
    let max_eval = n / k + usize::from(n % k != 0);
    if n - max_eval < scheme.n_roles() {
        return Err(Error::validation(format!(
            "n={n} too small for scheme with {} roles",
            scheme.n_roles()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF01D, 0));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut eval_fold_of = vec![0u16; n];
    let mut evals: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &idx) in order.iter().enumerate() {
        let f = pos % k;
        eval_fold_of[idx] = f as u16;
        evals[f].push(idx);
    }

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut rest: Vec<usize> = (0..n).filter(|&i| eval_fold_of[i] as usize != f).collect();
        let mut role_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x801E, f as u64));
        rest.shuffle(&mut role_rng);
        let r = scheme.n_roles();
        let mut roles: Vec<Vec<usize>> = vec![Vec::new(); r];
        for (pos, &idx) in rest.iter().enumerate() {
            roles[pos % r].push(idx);
        }
        for role in &mut roles {
            role.sort_unstable();
        }
        let mut eval = evals[f].clone();
        eval.sort_unstable();
        folds.push(FoldRoles { eval, roles });
    }

    Ok(FoldPlan { n, k_folds: k, scheme, seed, eval_fold_of, folds })
}
