//! Weighted Gaussian mixtures over RGB with diagonal covariances, fitted by
//! expectation-maximization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;
const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: [f64; 3],
    /// Diagonal of the covariance.
    pub var: [f64; 3],
}

impl Component {
    fn log_density(&self, x: &[f64; 3]) -> f64 {
        let mut q = 0.0;
        let mut log_det = 0.0;
        for k in 0..3 {
            let d = x[k] - self.mean[k];
            q += d * d / self.var[k];
            log_det += self.var[k].ln();
        }
        -0.5 * (3.0 * LN_2PI + log_det + q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gmm {
    pub components: Vec<Component>,
}

impl Gmm {
    /// `log p(x)` under the mixture.
    pub fn log_likelihood(&self, x: &[f64; 3]) -> f64 {
        // streaming log-sum-exp
        let (mut m, mut s) = (f64::NEG_INFINITY, 0.0);
        for c in &self.components {
            let l = c.weight.ln() + c.log_density(x);
            if l > m {
                s = s * (m - l).exp() + 1.0;
                m = l;
            } else {
                s += (l - m).exp();
            }
        }
        if m == f64::NEG_INFINITY {
            m
        } else {
            m + s.ln()
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmConfig {
    pub components: usize,
    pub max_iterations: usize,
    /// Stop when the relative log-likelihood change drops below this.
    pub tolerance: f64,
    pub var_floor: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            components: 5,
            max_iterations: 50,
            tolerance: 1e-6,
            var_floor: 1.0,
            seed: 0x5eed,
        }
    }
}

/// A fitted mixture with the weighted log-likelihood after initialization and
/// after every EM iteration.
#[derive(Clone, Debug)]
pub struct Fit {
    pub gmm: Gmm,
    pub log_likelihood: Vec<f64>,
}

#[derive(Clone)]
struct Stats {
    w: Vec<f64>,
    sum: Vec<[f64; 3]>,
    sq: Vec<[f64; 3]>,
    ll: f64,
}

impl Stats {
    fn zeros(k: usize) -> Self {
        Self {
            w: vec![0.0; k],
            sum: vec![[0.0; 3]; k],
            sq: vec![[0.0; 3]; k],
            ll: 0.0,
        }
    }

    fn add(&mut self, o: &Stats) {
        for c in 0..self.w.len() {
            self.w[c] += o.w[c];
            for d in 0..3 {
                self.sum[c][d] += o.sum[c][d];
                self.sq[c][d] += o.sq[c][d];
            }
        }
        self.ll += o.ll;
    }

    /// Weighted moments to mixture parameters. Components with no mass are
    /// dropped.
    fn to_gmm(&self, var_floor: f64) -> Gmm {
        let total: f64 = self.w.iter().sum();
        let mut components = Vec::with_capacity(self.w.len());
        for c in 0..self.w.len() {
            let w = self.w[c];
            if !(w > 0.0) || w / total < 1e-12 {
                continue;
            }
            let mean = [self.sum[c][0] / w, self.sum[c][1] / w, self.sum[c][2] / w];
            let var = [0, 1, 2].map(|d| (self.sq[c][d] / w - mean[d] * mean[d]).max(var_floor));
            components.push(Component {
                weight: w / total,
                mean,
                var,
            });
        }
        Gmm { components }
    }
}

fn accumulate(
    samples: &[[f64; 3]],
    weights: &[f64],
    k: usize,
    f: impl Fn(&[f64; 3], &mut [f64]) -> f64 + Sync + Send,
) -> Stats {
    let chunks = samples.len().div_ceil(CHUNK);
    let parts = crate::par::map_range(chunks, |ci| {
        let lo = ci * CHUNK;
        let hi = (lo + CHUNK).min(samples.len());
        let mut st = Stats::zeros(k);
        let mut resp = vec![0.0; k];
        for i in lo..hi {
            let x = &samples[i];
            let w = weights[i];
            let ll = f(x, &mut resp);
            st.ll += w * ll;
            for c in 0..k {
                let r = w * resp[c];
                if r == 0.0 {
                    continue;
                }
                st.w[c] += r;
                for d in 0..3 {
                    st.sum[c][d] += r * x[d];
                    st.sq[c][d] += r * x[d] * x[d];
                }
            }
        }
        st
    });
    let mut total = Stats::zeros(k);
    for p in &parts {
        total.add(p);
    }
    total
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Weighted k-means++ seeding followed by one hard assignment.
fn initialize(samples: &[[f64; 3]], weights: &[f64], cfg: &EmConfig) -> Gmm {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.components;
    let pick = |scores: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let s: f64 = scores.iter().sum();
        if !(s > 0.0) {
            return 0;
        }
        let mut u = rng.gen::<f64>() * s;
        for (i, &v) in scores.iter().enumerate() {
            if u < v {
                return i;
            }
            u -= v;
        }
        scores.iter().rposition(|&v| v > 0.0).unwrap_or(0)
    };
    let mut centers: Vec<[f64; 3]> = vec![samples[pick(weights, &mut rng)]];
    let mut d2: Vec<f64> = samples.iter().map(|s| sq_dist(s, &centers[0])).collect();
    while centers.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        if !(scores.iter().sum::<f64>() > 0.0) {
            break;
        }
        let c = samples[pick(&scores, &mut rng)];
        for (d, s) in d2.iter_mut().zip(samples) {
            *d = d.min(sq_dist(s, &c));
        }
        centers.push(c);
    }
    let kk = centers.len();
    let st = accumulate(samples, weights, kk, |x, resp| {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (c, m) in centers.iter().enumerate() {
            let d = sq_dist(x, m);
            if d < bd {
                bd = d;
                best = c;
            }
        }
        resp.iter_mut().for_each(|r| *r = 0.0);
        resp[best] = 1.0;
        0.0
    });
    st.to_gmm(cfg.var_floor)
}

/// Fit a mixture to weighted samples. Samples with zero weight are ignored.
pub fn fit_weighted(samples: &[[f64; 3]], weights: &[f64], cfg: &EmConfig) -> Result<Fit> {
    if samples.len() != weights.len() {
        return Err(Error::Contract("one weight per sample required".into()));
    }
    if cfg.components == 0 {
        return Err(Error::Config(
            "a mixture needs at least one component".into(),
        ));
    }
    let (xs, ws): (Vec<[f64; 3]>, Vec<f64>) = samples
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(s, &w)| (*s, w))
        .unzip();
    if xs.is_empty() {
        return Err(Error::Model("no positively weighted samples".into()));
    }
    let mut gmm = initialize(&xs, &ws, cfg);
    let mut history = Vec::new();
    for _ in 0..cfg.max_iterations {
        let k = gmm.components.len();
        let current = gmm.clone();
        let st = accumulate(&xs, &ws, k, |x, resp| {
            for (r, c) in resp.iter_mut().zip(&current.components) {
                *r = c.weight.ln() + c.log_density(x);
            }
            let lse = log_sum_exp(resp);
            resp.iter_mut().for_each(|r| *r = (*r - lse).exp());
            lse
        });
        // st.ll is the likelihood of `current`; the M-step below improves on it
        let converged = history.last().is_some_and(|&prev: &f64| {
            ((st.ll - prev) / prev.abs().max(1e-300)).abs() < cfg.tolerance
        });
        history.push(st.ll);
        if converged {
            break;
        }
        gmm = st.to_gmm(cfg.var_floor);
    }
    Ok(Fit {
        gmm,
        log_likelihood: history,
    })
}

/// Weighted log-likelihood of samples under a mixture.
pub fn weighted_log_likelihood(gmm: &Gmm, samples: &[[f64; 3]], weights: &[f64]) -> f64 {
    samples
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(x, w)| w * gmm.log_likelihood(x))
        .sum()
}

/// Foreground and background color mixtures.
#[derive(Clone, Debug)]
pub struct AppearanceModel {
    pub foreground: Gmm,
    pub background: Gmm,
}

impl AppearanceModel {
    /// `p_fg(c) / (p_fg(c) + p_bg(c))`, evaluated in log space.
    pub fn posterior(&self, color: &[f64; 3]) -> f64 {
        let lf = self.foreground.log_likelihood(color);
        let lb = self.background.log_likelihood(color);
        if lf == f64::NEG_INFINITY && lb == f64::NEG_INFINITY {
            return 0.5;
        }
        1.0 / (1.0 + (lb - lf).exp())
    }
}

/// Fit both class mixtures from one sample set with per-class weights.
pub fn fit_appearance(
    samples: &[[f64; 3]],
    fg_weights: &[f64],
    bg_weights: &[f64],
    cfg: &EmConfig,
) -> Result<AppearanceModel> {
    let fg = fit_weighted(samples, fg_weights, cfg).map_err(|e| match e {
        Error::Model(m) => Error::Model(format!("foreground: {m}")),
        other => other,
    })?;
    let bg = fit_weighted(samples, bg_weights, cfg).map_err(|e| match e {
        Error::Model(m) => Error::Model(format!("background: {m}")),
        other => other,
    })?;
    Ok(AppearanceModel {
        foreground: fg.gmm,
        background: bg.gmm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(center: [f64; 3], n: usize, spread: f64, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| center.map(|c| c + (rng.gen::<f64>() - 0.5) * spread))
            .collect()
    }

    #[test]
    fn separable_two_color_posterior() {
        let mut samples = vec![[255.0, 0.0, 0.0]; 200];
        samples.extend(vec![[0.0, 0.0, 255.0]; 200]);
        let fg: Vec<f64> = (0..400).map(|i| if i < 200 { 1.0 } else { 0.0 }).collect();
        let bg: Vec<f64> = fg.iter().map(|w| 1.0 - w).collect();
        let m = fit_appearance(&samples, &fg, &bg, &EmConfig::default()).unwrap();
        assert!(m.posterior(&[255.0, 0.0, 0.0]) > 0.99);
        assert!(m.posterior(&[0.0, 0.0, 255.0]) < 0.01);
    }

    #[test]
    fn symmetric_weights_give_half() {
        let samples = cloud([120.0, 80.0, 60.0], 300, 40.0, 1);
        let w = vec![0.5; samples.len()];
        let m = fit_appearance(&samples, &w, &w, &EmConfig::default()).unwrap();
        for c in [[120.0, 80.0, 60.0], [0.0, 0.0, 0.0], [200.0, 10.0, 250.0]] {
            assert!((m.posterior(&c) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn em_log_likelihood_is_non_decreasing() {
        let mut samples = cloud([200.0, 40.0, 40.0], 150, 30.0, 2);
        samples.extend(cloud([40.0, 180.0, 60.0], 150, 50.0, 3));
        samples.extend(cloud([90.0, 90.0, 220.0], 100, 20.0, 4));
        let weights: Vec<f64> = (0..samples.len())
            .map(|i| 0.2 + (i % 7) as f64 * 0.1)
            .collect();
        let cfg = EmConfig {
            components: 4,
            tolerance: 0.0,
            ..Default::default()
        };
        let fit = fit_weighted(&samples, &weights, &cfg).unwrap();
        assert!(fit.log_likelihood.len() > 5);
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        let wsum: f64 = fit.gmm.components.iter().map(|c| c.weight).sum();
        assert!((wsum - 1.0).abs() < 1e-12);
        assert!(fit
            .gmm
            .components
            .iter()
            .all(|c| c.var.iter().all(|&v| v >= 1.0)));
    }

    #[test]
    fn no_weighted_samples_is_a_model_error() {
        let samples = vec![[1.0, 2.0, 3.0]; 4];
        assert!(matches!(
            fit_weighted(&samples, &[0.0; 4], &EmConfig::default()),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn fit_is_deterministic_across_workers() {
        let samples = cloud([100.0, 100.0, 100.0], 9000, 90.0, 7);
        let w: Vec<f64> = (0..samples.len()).map(|i| (i % 3) as f64 * 0.5).collect();
        let a = crate::par::with_workers(Some(1), || {
            fit_weighted(&samples, &w, &EmConfig::default()).unwrap()
        });
        let b = crate::par::with_workers(Some(4), || {
            fit_weighted(&samples, &w, &EmConfig::default()).unwrap()
        });
        assert_eq!(a.gmm, b.gmm);
    }
}
