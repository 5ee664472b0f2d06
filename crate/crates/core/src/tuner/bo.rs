//! Gaussian-process surrogate with a Matérn-5/2 ARD kernel and expected
//! improvement acquisition.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::learners::{HpConfig, HpSpace};

pub const N_CANDIDATES: usize = 1000;
pub const N_PERTURBATIONS: usize = 100;
pub const N_RESTARTS: usize = 3;
/// Largest history the surrogate is fitted on: best half plus most recent half.
pub const MAX_HISTORY: usize = 16;
const ASCENT_STEPS: usize = 15;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Log-space box for (length-scales..., signal variance, noise variance).
const LOG_LENGTH: (f64, f64) = (-4.6, 2.3);
const LOG_SIGNAL: (f64, f64) = (-3.0, 3.0);
const LOG_NOISE: (f64, f64) = (-13.8, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct GpParams {
    pub log_lengths: Vec<f64>,
    pub log_signal: f64,
    pub log_noise: f64,
}

impl GpParams {
    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengths.clone();
        v.push(self.log_signal);
        v.push(self.log_noise);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            log_lengths: v[..d].to_vec(),
            log_signal: v[d],
            log_noise: v[d + 1],
        }
    }

    fn clamp(&mut self) {
        for l in &mut self.log_lengths {
            *l = l.clamp(LOG_LENGTH.0, LOG_LENGTH.1);
        }
        self.log_signal = self.log_signal.clamp(LOG_SIGNAL.0, LOG_SIGNAL.1);
        self.log_noise = self.log_noise.clamp(LOG_NOISE.0, LOG_NOISE.1);
    }
}

/// Matérn-5/2 with ARD length-scales.
pub fn matern52(a: &[f64], b: &[f64], lengths: &[f64], signal: f64) -> f64 {
    let r = a
        .iter()
        .zip(b)
        .zip(lengths)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt();
    let s = SQRT5 * r;
    signal * (1.0 + s + s * s / 3.0) * (-s).exp()
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` of a normal posterior (mean, sd).
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let gap = best - mean;
    if sd < 1e-12 {
        return gap.max(0.0);
    }
    let z = gap / sd;
    (gap * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

/// A fitted GP over unit-cube inputs with standardized targets.
pub struct Gp {
    x: Vec<Vec<f64>>,
    params: GpParams,
    inv_l2: Vec<f64>,
    signal: f64,
    mean: f64,
    /// Lower Cholesky factor of the training covariance, row-major n×n.
    chol: Vec<f64>,
    alpha: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

struct Fit {
    log_ml: f64,
    mean: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

/// Squared coordinate differences, `diff2[q][i * n + j]`, shared by every
/// hyperparameter evaluation during one fit.
struct Pairs {
    n: usize,
    diff2: Vec<Vec<f64>>,
}

impl Pairs {
    fn new(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        let diff2 = (0..d)
            .map(|q| {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        m[i * n + j] = (x[i][q] - x[j][q]).powi(2);
                    }
                }
                m
            })
            .collect();
        Self { n, diff2 }
    }

    fn scaled_r2(&self, idx: usize, inv_l2: &[f64]) -> f64 {
        self.diff2.iter().zip(inv_l2).map(|(m, w)| m[idx] * w).sum()
    }
}

fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

fn solve_upper_t(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    solve_lower(l, n, &mut x);
    solve_upper_t(l, n, &mut x);
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matern_from_r2(r2: f64, signal: f64) -> (f64, f64) {
    let s = SQRT5 * r2.sqrt();
    let e = (-s).exp();
    (signal * (1.0 + s + s * s / 3.0) * e, (5.0 / 3.0) * signal * (1.0 + s) * e)
}

/// Log marginal likelihood with the constant mean profiled out (its GLS estimate).
fn fit_fixed(pairs: &Pairs, y: &[f64], p: &GpParams) -> Option<Fit> {
    let n = pairs.n;
    let inv_l2: Vec<f64> = p.log_lengths.iter().map(|l| (-2.0 * l).exp()).collect();
    let signal = p.log_signal.exp();
    let noise = p.log_noise.exp();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = matern_from_r2(pairs.scaled_r2(i * n + j, &inv_l2), signal).0;
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += noise + 1e-10;
    }
    if !cholesky(&mut k, n) {
        return None;
    }
    let ones = vec![1.0; n];
    let kinv_one = chol_solve(&k, n, &ones);
    let kinv_y = chol_solve(&k, n, y);
    let mean = dot(&kinv_one, y) / kinv_one.iter().sum::<f64>();
    let alpha: Vec<f64> = kinv_y.iter().zip(&kinv_one).map(|(a, b)| a - mean * b).collect();
    let quad: f64 = y.iter().zip(&alpha).map(|(v, a)| (v - mean) * a).sum();
    let log_det: f64 = (0..n).map(|i| k[i * n + i].ln()).sum();
    let log_ml = -0.5 * quad - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    log_ml.is_finite().then_some(Fit {
        log_ml,
        mean,
        chol: k,
        alpha,
    })
}

/// Gradient of the log marginal likelihood in log-parameter space:
/// `0.5 tr((alpha alpha^T - K^-1) dK/dtheta)`.
fn log_ml_gradient(pairs: &Pairs, p: &GpParams, fit: &Fit) -> Vec<f64> {
    let n = pairs.n;
    let d = p.log_lengths.len();
    let inv_l2: Vec<f64> = p.log_lengths.iter().map(|l| (-2.0 * l).exp()).collect();
    let signal = p.log_signal.exp();
    let noise = p.log_noise.exp();
    let mut kinv = vec![0.0; n * n];
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = chol_solve(&fit.chol, n, &e);
        for r in 0..n {
            kinv[r * n + c] = col[r];
        }
    }
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..=i {
            let idx = i * n + j;
            let mult = if i == j { 0.5 } else { 1.0 };
            let wij = mult * (fit.alpha[i] * fit.alpha[j] - kinv[idx]);
            let (kf, common) = matern_from_r2(pairs.scaled_r2(idx, &inv_l2), signal);
            grad[d] += wij * kf;
            for q in 0..d {
                grad[q] += wij * common * pairs.diff2[q][idx] * inv_l2[q];
            }
        }
        grad[d + 1] += 0.5 * (fit.alpha[i] * fit.alpha[i] - kinv[i * n + i]) * noise;
    }
    grad
}

/// Projected gradient ascent: one trial point per iteration, the step grows
/// after an accepted move and halves after a rejected one.
fn ascend(pairs: &Pairs, y: &[f64], start: GpParams) -> Option<(GpParams, Fit)> {
    let mut p = start;
    p.clamp();
    let mut fit = fit_fixed(pairs, y, &p)?;
    let mut step = 0.5;
    let mut g = log_ml_gradient(pairs, &p, &fit);
    for _ in 0..ASCENT_STEPS {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-8 || step < 1e-2 {
            break;
        }
        let cand: Vec<f64> = p.to_vec().iter().zip(&g).map(|(v, gi)| v + step * gi / norm).collect();
        let mut q = GpParams::from_vec(&cand);
        q.clamp();
        match fit_fixed(pairs, y, &q) {
            Some(f) if f.log_ml > fit.log_ml => {
                p = q;
                fit = f;
                g = log_ml_gradient(pairs, &p, &fit);
                step *= 1.3;
            }
            _ => step *= 0.5,
        }
    }
    Some((p, fit))
}

impl Gp {
    /// Fits hyperparameters by maximizing the marginal likelihood from the
    /// default start plus `N_RESTARTS - 1` random starts. `None` when the
    /// targets are constant.
    pub fn fit<R: Rng + ?Sized>(x: Vec<Vec<f64>>, y: &[f64], rng: &mut R) -> Option<Self> {
        let n = y.len();
        if n == 0 {
            return None;
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let y_scale = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(y_scale > 1e-12 * y_mean.abs().max(1.0)) {
            return None;
        }
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
        let d = x[0].len();
        let pairs = Pairs::new(&x);
        let mut starts = vec![GpParams {
            log_lengths: vec![(0.3f64).ln(); d],
            log_signal: 0.0,
            log_noise: (1e-2f64).ln(),
        }];
        for _ in 1..N_RESTARTS {
            starts.push(GpParams {
                log_lengths: (0..d).map(|_| rng.random_range(LOG_LENGTH.0..LOG_LENGTH.1)).collect(),
                log_signal: rng.random_range(-1.0..1.0),
                log_noise: rng.random_range(-9.0..-1.0),
            });
        }
        let mut best: Option<(GpParams, Fit)> = None;
        for s in starts {
            if let Some((p, f)) = ascend(&pairs, &ys, s) {
                if best.as_ref().is_none_or(|(_, b)| f.log_ml > b.log_ml) {
                    best = Some((p, f));
                }
            }
        }
        let (params, fit) = best?;
        Some(Self {
            x,
            inv_l2: params.log_lengths.iter().map(|l| (-2.0 * l).exp()).collect(),
            signal: params.log_signal.exp(),
            params,
            mean: fit.mean,
            chol: fit.chol,
            alpha: fit.alpha,
            y_mean,
            y_scale,
        })
    }

    pub fn params(&self) -> &GpParams {
        &self.params
    }

    /// Posterior mean and standard deviation of the latent function, in the
    /// original target units.
    pub fn predict(&self, u: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let (inv_l2, signal) = (&self.inv_l2, self.signal);
        let mut k: Vec<f64> = self
            .x
            .iter()
            .map(|xi| {
                let r2: f64 = xi.iter().zip(u).zip(inv_l2).map(|((a, b), w)| (a - b).powi(2) * w).sum();
                matern_from_r2(r2, signal).0
            })
            .collect();
        let mean = self.mean + dot(&k, &self.alpha);
        solve_lower(&self.chol, n, &mut k);
        let var = (signal - dot(&k, &k)).max(0.0);
        (mean * self.y_scale + self.y_mean, var.sqrt() * self.y_scale)
    }
}

/// Keeps the best `MAX_HISTORY / 2` and most recent points, in original order.
pub fn cap_history(history: &[(HpConfig, f64)]) -> Vec<(HpConfig, f64)> {
    if history.len() <= MAX_HISTORY {
        return history.to_vec();
    }
    let mut by_loss: Vec<usize> = (0..history.len()).collect();
    by_loss.sort_by(|&a, &b| history[a].1.total_cmp(&history[b].1).then(a.cmp(&b)));
    let mut keep: Vec<usize> = by_loss[..MAX_HISTORY / 2].to_vec();
    for i in (0..history.len()).rev() {
        if keep.len() >= MAX_HISTORY {
            break;
        }
        if !keep.contains(&i) {
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| history[i].clone()).collect()
}

/// Proposes the configuration maximizing expected improvement over random
/// candidates and perturbations of the incumbent. Returns `None` when the
/// history is degenerate (empty or constant losses).
pub fn suggest_bo<R: Rng + ?Sized>(history: &[(HpConfig, f64)], space: &HpSpace, rng: &mut R) -> Option<HpConfig> {
    let history = cap_history(history);
    let x: Vec<Vec<f64>> = history.iter().map(|(c, _)| space.encode(c)).collect();
    let y: Vec<f64> = history.iter().map(|(_, l)| *l).collect();
    if x.first().is_none_or(|u| u.is_empty()) {
        return None;
    }
    let gp = Gp::fit(x.clone(), &y, rng)?;
    let (inc_idx, &best) = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))?;
    let incumbent = &x[inc_idx];

    let mut candidates: Vec<Vec<f64>> = (0..N_CANDIDATES).map(|_| space.sample_unit(rng)).collect();
    let jitter = Normal::new(0.0, 0.05).expect("valid sd");
    for _ in 0..N_PERTURBATIONS {
        let mut u: Vec<f64> = incumbent.iter().map(|v| v + jitter.sample(rng)).collect();
        space.snap(&mut u);
        candidates.push(u);
    }
    let seen: Vec<Vec<f64>> = x
        .iter()
        .map(|u| {
            let mut s = u.clone();
            space.snap(&mut s);
            s
        })
        .collect();
    let is_seen = |u: &[f64]| seen.iter().any(|s| s.iter().zip(u).all(|(a, b)| (a - b).abs() < 1e-12));
    let mut best_pick: Option<(f64, usize)> = None;
    for (i, u) in candidates.iter().enumerate() {
        if is_seen(u) {
            continue;
        }
        let (m, s) = gp.predict(u);
        let ei = expected_improvement(m, s, best);
        if best_pick.is_none_or(|(b, _)| ei > b) {
            best_pick = Some((ei, i));
        }
    }
    Some(match best_pick {
        Some((_, i)) => space.decode(&candidates[i]),
        None => space.sample(rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ei_closed_form_at_incumbent() {
        let ei = expected_improvement(0.0, 1.0, 0.0);
        assert!((ei - 0.3989).abs() < 1e-3);
        // numerical integration of max(best - Y, 0) under N(best, 1)
        let h = 1e-3;
        let integral: f64 = (1..8000).map(|i| i as f64 * h).map(|t| t * normal_pdf(t) * h).sum();
        assert!((ei - integral).abs() < 1e-3);
    }

    #[test]
    fn ei_vanishes_at_observed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let y: Vec<f64> = x.iter().map(|u| (u[0] - 0.3).powi(2)).collect();
        let gp = Gp::fit(x.clone(), &y, &mut rng).unwrap();
        let best = y.iter().copied().fold(f64::INFINITY, f64::min);
        for (u, obs) in x.iter().zip(&y) {
            let (m, s) = gp.predict(u);
            assert!((m - obs).abs() < 1e-2, "mean {m} vs {obs}");
            if *obs > best + 1e-3 {
                assert!(expected_improvement(m, s, best) <= 1e-9 || s > 1e-4);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..7).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = x.iter().map(|u| (3.0 * u[0]).sin() + u[1]).collect();
        let pairs = Pairs::new(&x);
        let p = GpParams {
            log_lengths: vec![-0.7, -0.2],
            log_signal: 0.1,
            log_noise: -3.0,
        };
        let fit = fit_fixed(&pairs, &y, &p).unwrap();
        let g = log_ml_gradient(&pairs, &p, &fit);
        let v = p.to_vec();
        for j in 0..v.len() {
            let h = 1e-5;
            let mut a = v.clone();
            a[j] += h;
            let mut b = v.clone();
            b[j] -= h;
            let fa = fit_fixed(&pairs, &y, &GpParams::from_vec(&a)).unwrap().log_ml;
            let fb = fit_fixed(&pairs, &y, &GpParams::from_vec(&b)).unwrap().log_ml;
            let fd = (fa - fb) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-4 * fd.abs().max(1.0), "param {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn constant_history_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        assert!(Gp::fit(x, &[1.0, 1.0, 1.0], &mut rng).is_none());
    }

    #[test]
    fn history_cap_keeps_best_and_recent() {
        let h: Vec<(HpConfig, f64)> = (0..40).map(|i| (HpConfig::new(), ((i * 17) % 40) as f64)).collect();
        let capped = cap_history(&h);
        assert_eq!(capped.len(), MAX_HISTORY);
        assert!(capped.iter().any(|(_, l)| *l == 0.0));
        assert_eq!(capped.last().unwrap().1, h[39].1);
    }
}
