//! Evolution-strategies trainer over a flat parameter vector.
//!
//! Each generation draws `pop` Gaussian perturbations of the current mean,
//! scores them with a caller-supplied fitness function (in parallel), forms
//! the fitness-weighted average of the perturbations and takes an Adam
//! ascent step along it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsConfig {
    /// Population size N.
    pub pop: usize,
    pub max_gen: usize,
    /// Adam step size.
    pub lr: f64,
    /// Perturbation scale.
    pub sigma: f64,
    pub seed: u64,
    /// Replace fitness values by centered ranks before weighting.
    pub rank_shaping: bool,
    /// Draw perturbations in antithetic pairs (requires an even population).
    pub mirrored: bool,
    pub adam: AdamConfig,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            pop: 40,
            max_gen: 1000,
            lr: 0.01,
            sigma: 0.05,
            seed: 0,
            rank_shaping: false,
            mirrored: false,
            adam: AdamConfig::default(),
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop < 2 {
            return Err(Error::Config(format!(
                "population must be at least 2, got {}",
                self.pop
            )));
        }
        if self.mirrored && !self.pop.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "mirrored sampling needs an even population, got {}",
                self.pop
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }

    /// Perturbation of member `i` in generation `gen`.
    pub fn member_noise(&self, dim: usize, gen: usize, i: usize) -> Vec<f64> {
        if self.mirrored {
            let mut e = noise(dim, self.seed, gen, i / 2);
            if i % 2 == 1 {
                e.iter_mut().for_each(|x| *x = -*x);
            }
            e
        } else {
            noise(dim, self.seed, gen, i)
        }
    }
}

/// Standard-normal vector from a generator keyed by `(seed, gen, key)`.
pub fn noise(dim: usize, seed: u64, gen: usize, key: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((gen as u64) << 32) ^ key as u64);
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `(theta + sigma * eps, eps)` for member `i` of generation `gen`.
pub fn perturb(theta: &[f64], sigma: f64, seed: u64, gen: usize, i: usize) -> (Vec<f64>, Vec<f64>) {
    let eps = noise(theta.len(), seed, gen, i);
    (shifted(theta, sigma, &eps), eps)
}

fn shifted(theta: &[f64], sigma: f64, eps: &[f64]) -> Vec<f64> {
    theta.iter().zip(eps).map(|(t, e)| t + sigma * e).collect()
}

/// Ranks mapped linearly onto `[-0.5, 0.5]`; tied values share their mean
/// rank.
pub fn centered_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut lo = 0;
    while lo < n {
        let mut hi = lo;
        while hi + 1 < n && values[order[hi + 1]] == values[order[lo]] {
            hi += 1;
        }
        let r = (lo + hi) as f64 / 2.0;
        for &k in &order[lo..=hi] {
            ranks[k] = r / (n - 1) as f64 - 0.5;
        }
        lo = hi + 1;
    }
    ranks
}

/// `1/(N sigma) * sum F_i eps_i` over the members with finite fitness.
/// Members scored `-inf` (failed evaluations) are left out, and N counts
/// only the remaining ones.
pub fn estimate_gradient(eps: &[Vec<f64>], fitness: &[f64], sigma: f64, rank_shaping: bool) -> Result<Vec<f64>> {
    if eps.len() != fitness.len() {
        return Err(Error::Dimension(format!(
            "{} perturbations for {} fitness values",
            eps.len(),
            fitness.len()
        )));
    }
    let kept: Vec<usize> = (0..fitness.len()).filter(|&i| fitness[i].is_finite()).collect();
    if kept.len() < 2 {
        return Err(Error::Training(format!(
            "{} of {} members have a finite fitness; at least 2 are needed",
            kept.len(),
            fitness.len()
        )));
    }
    let dim = eps[kept[0]].len();
    let f: Vec<f64> = kept.iter().map(|&i| fitness[i]).collect();
    let w = if rank_shaping { centered_ranks(&f) } else { f };
    let mut g = vec![0.0; dim];
    for (&i, wi) in kept.iter().zip(&w) {
        if eps[i].len() != dim {
            return Err(Error::Dimension(format!(
                "perturbation {i} has length {}, expected {dim}",
                eps[i].len()
            )));
        }
        for (gk, e) in g.iter_mut().zip(&eps[i]) {
            *gk += wi * e;
        }
    }
    let scale = 1.0 / (kept.len() as f64 * sigma);
    g.iter_mut().for_each(|x| *x *= scale);
    Ok(g)
}

/// Adam moments for gradient ascent.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// Move `theta` uphill along `grad`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for k in 0..theta.len() {
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * grad[k];
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * grad[k] * grad[k];
            theta[k] += lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + eps);
        }
    }
}

/// Score of one parameter vector. `fitness` is `-inf` when the evaluation
/// failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub art_ms: Option<f64>,
    pub cost_usd: f64,
}

impl Evaluation {
    pub fn failed() -> Self {
        Self {
            fitness: f64::NEG_INFINITY,
            art_ms: None,
            cost_usd: f64::NAN,
        }
    }

    pub fn fitness_only(fitness: f64) -> Self {
        Self {
            fitness,
            art_ms: None,
            cost_usd: 0.0,
        }
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub gen: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_art_ms: Option<f64>,
    pub best_cost_usd: f64,
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Best parameters evaluated during training, the final mean included.
    pub best_theta: Vec<f64>,
    pub best: Evaluation,
    /// Search mean after the last update.
    pub final_theta: Vec<f64>,
    pub curve: Vec<GenStats>,
}

fn check_finite(theta: &[f64], what: &str, gen: usize) -> Result<()> {
    match theta.iter().position(|x| !x.is_finite()) {
        Some(k) => Err(Error::Training(format!(
            "{what} has non-finite entry {} at index {k} in generation {gen}",
            theta[k]
        ))),
        None => Ok(()),
    }
}

/// Run the ES loop from `theta0`. Members are scored concurrently and
/// reduced in member order, so results do not depend on the thread count.
pub fn train<F>(cfg: &EsConfig, theta0: Vec<f64>, fitness: F) -> Result<TrainOutcome>
where
    F: Fn(&[f64]) -> Evaluation + Sync,
{
    cfg.validate()?;
    check_finite(&theta0, "initial parameters", 0)?;
    let dim = theta0.len();
    let mut theta = theta0;
    let mut adam = Adam::new(dim, cfg.adam);
    let mut curve = Vec::with_capacity(cfg.max_gen);
    let mut best: Option<(Evaluation, Vec<f64>)> = None;

    for gen in 0..cfg.max_gen {
        let members: Vec<(Vec<f64>, Evaluation)> = (0..cfg.pop)
            .into_par_iter()
            .map(|i| {
                let eps = cfg.member_noise(dim, gen, i);
                let eval = fitness(&shifted(&theta, cfg.sigma, &eps));
                (eps, eval)
            })
            .collect();

        let scores: Vec<f64> = members.iter().map(|(_, e)| e.fitness).collect();
        let finite: Vec<f64> = scores.iter().copied().filter(|f| f.is_finite()).collect();
        let top = (0..cfg.pop)
            .filter(|&i| scores[i].is_finite())
            .fold(None, |acc: Option<usize>, i| match acc {
                Some(j) if scores[j] >= scores[i] => Some(j),
                _ => Some(i),
            });
        if let Some(i) = top {
            let eval = members[i].1;
            curve.push(GenStats {
                gen,
                best_fitness: eval.fitness,
                mean_fitness: finite.iter().sum::<f64>() / finite.len() as f64,
                best_art_ms: eval.art_ms,
                best_cost_usd: eval.cost_usd,
                discarded: cfg.pop - finite.len(),
            });
            if best.as_ref().is_none_or(|(b, _)| eval.fitness > b.fitness) {
                best = Some((eval, shifted(&theta, cfg.sigma, &members[i].0)));
            }
            log::info!(
                "gen {gen}: best {:.4} mean {:.4}",
                eval.fitness,
                curve[curve.len() - 1].mean_fitness
            );
        }

        let eps: Vec<Vec<f64>> = members.into_iter().map(|(e, _)| e).collect();
        let g = estimate_gradient(&eps, &scores, cfg.sigma, cfg.rank_shaping)
            .map_err(|e| Error::Training(format!("generation {gen}: {e}")))?;
        check_finite(&g, "gradient estimate", gen)?;
        adam.step(&mut theta, &g, cfg.lr);
        check_finite(&theta, "parameters", gen)?;
    }

    let last = fitness(&theta);
    let (best, best_theta) = match best {
        Some((b, t)) if !(last.fitness > b.fitness) => (b, t),
        _ => (last, theta.clone()),
    };
    Ok(TrainOutcome {
        best_theta,
        best,
        final_theta: theta,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let theta = vec![0.3, -1.0, 2.5];
        let (t, e) = perturb(&theta, 0.0, 1, 0, 0);
        assert_eq!(t, theta);
        assert_eq!(e.len(), 3);
    }

    #[test]
    fn noise_is_keyed() {
        assert_eq!(noise(50, 7, 3, 2), noise(50, 7, 3, 2));
        assert_ne!(noise(50, 7, 3, 2), noise(50, 7, 3, 1));
        assert_ne!(noise(50, 7, 3, 2), noise(50, 7, 2, 2));
        assert_ne!(noise(50, 7, 3, 2), noise(50, 8, 3, 2));
    }

    #[test]
    fn noise_is_standard_normal() {
        let x = noise(100_000, 42, 0, 0);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((std - 1.0).abs() < 0.02, "{std}");
    }

    #[test]
    fn mirrored_members_pair_up() {
        let cfg = EsConfig {
            mirrored: true,
            ..EsConfig::default()
        };
        let a = cfg.member_noise(10, 4, 6);
        let b = cfg.member_noise(10, 4, 7);
        assert!(a.iter().zip(&b).all(|(x, y)| *x == -*y));
        assert_ne!(a, cfg.member_noise(10, 4, 8));
    }

    #[test]
    fn gradient_examples() {
        let e = vec![1.0, -2.0, 0.5];
        let neg: Vec<f64> = e.iter().map(|x| -x).collect();
        let g = estimate_gradient(&[e.clone(), neg.clone()], &[1.0, -1.0], 0.05, false).unwrap();
        for (gk, ek) in g.iter().zip(&e) {
            assert!((gk - ek / 0.05).abs() < 1e-9);
        }
        let g = estimate_gradient(&[e.clone(), neg], &[0.0, 0.0], 0.05, false).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_scoring_member_sets_direction() {
        let eps = vec![noise(5, 1, 0, 0), noise(5, 1, 0, 1), noise(5, 1, 0, 2)];
        let g = estimate_gradient(&eps, &[0.0, 3.0, 0.0], 0.1, false).unwrap();
        for (gk, ek) in g.iter().zip(&eps[1]) {
            assert!((gk - 10.0 * ek).abs() < 1e-12);
        }
    }

    #[test]
    fn failed_members_are_dropped() {
        let eps = vec![vec![1.0], vec![2.0], vec![4.0]];
        let g = estimate_gradient(&eps, &[1.0, f64::NEG_INFINITY, 1.0], 1.0, false).unwrap();
        assert_eq!(g, vec![2.5]);
        let all = [f64::NEG_INFINITY; 3];
        assert!(matches!(
            estimate_gradient(&eps, &all, 1.0, false),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn centered_rank_values() {
        assert_eq!(centered_ranks(&[3.0, 1.0, 2.0]), vec![0.5, -0.5, 0.0]);
        assert_eq!(centered_ranks(&[1.0, 1.0, 5.0, 0.0]), vec![0.0, 0.0, 0.5, -0.5]);
        let r = centered_ranks(&[0.4, -7.0, 9.0, 1.0, 2.0]);
        assert!(r.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn unbiased_on_linear_fitness() {
        let c: Vec<f64> = (0..8).map(|k| k as f64 - 3.5).collect();
        let theta = vec![0.2; 8];
        let (sigma, gens, n) = (0.1, 2000, 20);
        let mut mean = [0.0; 8];
        for gen in 0..gens {
            let (eps, f): (Vec<_>, Vec<_>) = (0..n)
                .map(|i| {
                    let (t, e) = perturb(&theta, sigma, 5, gen, i);
                    (e, t.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>())
                })
                .unzip();
            let g = estimate_gradient(&eps, &f, sigma, false).unwrap();
            mean.iter_mut().zip(&g).for_each(|(m, x)| *m += x / gens as f64);
        }
        // c . theta = 0, so the per-coordinate standard error is about
        // sqrt(|c|^2 / (n gens)) = 0.04.
        for (m, ck) in mean.iter().zip(&c) {
            assert!((m - ck).abs() < 0.15, "{m} vs {ck}");
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2, AdamConfig::default());
        let mut theta = vec![0.0, 0.0];
        adam.step(&mut theta, &[3.0, -0.5], 0.01);
        assert!((theta[0] - 0.01).abs() < 1e-9);
        assert!((theta[1] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn zero_generations_return_start() {
        let cfg = EsConfig {
            max_gen: 0,
            ..EsConfig::default()
        };
        let out = train(&cfg, vec![1.0, 2.0], |t| Evaluation::fitness_only(-norm(t))).unwrap();
        assert_eq!(out.final_theta, vec![1.0, 2.0]);
        assert_eq!(out.best_theta, vec![1.0, 2.0]);
        assert!(out.curve.is_empty());
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = EsConfig {
            pop: 10,
            max_gen: 15,
            seed: 3,
            rank_shaping: true,
            ..EsConfig::default()
        };
        let f = |t: &[f64]| Evaluation::fitness_only(-t.iter().map(|x| x * x).sum::<f64>());
        let a = train(&cfg, vec![0.5; 12], f).unwrap();
        let b = train(&cfg, vec![0.5; 12], f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.curve.len(), 15);
        assert!(norm(&a.final_theta) < norm(&[0.5; 12]));
    }

    #[test]
    fn nan_parameters_abort() {
        let cfg = EsConfig {
            pop: 4,
            max_gen: 3,
            ..EsConfig::default()
        };
        assert!(matches!(
            train(&cfg, vec![f64::NAN, 0.0], |_| Evaluation::fitness_only(0.0)),
            Err(Error::Training(_))
        ));
        let all_fail = train(&cfg, vec![0.0, 0.0], |_| Evaluation::failed());
        assert!(matches!(all_fail, Err(Error::Training(_))));
    }

    #[test]
    fn config_validation() {
        assert!(EsConfig::default().validate().is_ok());
        for bad in [
            EsConfig {
                pop: 1,
                ..EsConfig::default()
            },
            EsConfig {
                sigma: 0.0,
                ..EsConfig::default()
            },
            EsConfig {
                lr: -1.0,
                ..EsConfig::default()
            },
            EsConfig {
                pop: 5,
                mirrored: true,
                ..EsConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
