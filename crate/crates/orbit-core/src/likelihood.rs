//! Samples, the marginal negative log-likelihood, its derivatives, observed
//! Fisher information and the eigenvalue tier scaling experiment.
//!
//! Work is split into fixed-size sample chunks. Chunk `c` draws from seed
//! stream `c`, and partial sums are added in chunk order, so results do not
//! depend on the number of threads.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OrbitError, Result};
use crate::group::{action_matrix, QuadratureRule, RuleSampler, SeedStream};
use crate::models::{observation_matrix, predicted_dims, DimLedger, ModelSpec};

pub const CHUNK: usize = 512;

/// Posterior weights below this are dropped.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub model: ModelSpec,
    pub sigma: f64,
    pub seed: u64,
    /// row-major `n x obs_dim`
    pub obs: Vec<f64>,
    /// node index of each hidden rotation; diagnostics only
    pub hidden: Vec<usize>,
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.hidden.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.model.obs_dim()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.obs_dim();
        &self.obs[i * p..(i + 1) * p]
    }

    /// Little-endian layout: `u64` header length, header JSON
    /// `{model, sigma, seed, n}`, then `n * obs_dim` f64 observations.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&BatchHeader {
            model: self.model.clone(),
            sigma: self.sigma,
            seed: self.seed,
            n: self.n(),
        })?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for x in &self.obs {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let h: BatchHeader = serde_json::from_slice(&header)?;
        let count = h.n * h.model.obs_dim();
        let mut obs = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            obs.push(f64::from_le_bytes(buf));
        }
        Ok(SampleBatch {
            model: h.model,
            sigma: h.sigma,
            seed: h.seed,
            obs,
            hidden: vec![usize::MAX; h.n],
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BatchHeader {
    model: ModelSpec,
    sigma: f64,
    seed: u64,
    n: usize,
}

/// Per-node matrices `A_j = P g_j` with the rule weights.
#[derive(Clone, Debug)]
pub struct NodeMaps {
    pub mats: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
    /// `A_j^T A_j`
    grams: Vec<DMatrix<f64>>,
}

impl NodeMaps {
    pub fn new(model: &ModelSpec, rule: &QuadratureRule) -> Result<Self> {
        if rule.is_empty() {
            return Err(OrbitError::Domain("empty rule".into()));
        }
        let proj = observation_matrix(model)?;
        let mats: Vec<DMatrix<f64>> = rule
            .nodes
            .iter()
            .map(|g| Ok(&proj * action_matrix(model, g)?))
            .collect::<Result<_>>()?;
        let grams = mats.iter().map(|a| a.transpose() * a).collect();
        Ok(NodeMaps {
            mats,
            weights: rule.weights.clone(),
            grams,
        })
    }

    fn means(&self, theta: &[f64]) -> Vec<DVector<f64>> {
        let t = DVector::from_column_slice(theta);
        self.mats.iter().map(|a| a * &t).collect()
    }
}

/// `y_i = P(g_i theta*) + sigma eps_i` with `g_i` drawn from the rule.
pub fn generate(
    model: &ModelSpec,
    theta_star: &[f64],
    sigma: f64,
    n: usize,
    rule: &QuadratureRule,
    seed: u64,
) -> Result<SampleBatch> {
    check_len(model.dim(), theta_star.len())?;
    if n == 0 {
        return Err(OrbitError::Domain("need n >= 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(OrbitError::Domain(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    let maps = NodeMaps::new(model, rule)?;
    let means = maps.means(theta_star);
    let sampler = RuleSampler::new(rule)?;
    let p = model.obs_dim();
    let base = SeedStream::new(seed);
    let chunks: Vec<(Vec<f64>, Vec<usize>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = base.split(c as u64).rng();
            let count = CHUNK.min(n - c * CHUNK);
            let mut obs = Vec::with_capacity(count * p);
            let mut hidden = Vec::with_capacity(count);
            for _ in 0..count {
                let j = sampler.sample(&mut rng);
                hidden.push(j);
                for x in means[j].iter() {
                    let e: f64 = rng.sample(StandardNormal);
                    obs.push(x + sigma * e);
                }
            }
            (obs, hidden)
        })
        .collect();
    let mut obs = Vec::with_capacity(n * p);
    let mut hidden = Vec::with_capacity(n);
    for (o, h) in chunks {
        obs.extend(o);
        hidden.extend(h);
    }
    Ok(SampleBatch {
        model: model.clone(),
        sigma,
        seed,
        obs,
        hidden,
    })
}

fn check_batch(model: &ModelSpec, theta: &[f64], batch: &SampleBatch) -> Result<()> {
    check_len(model.dim(), theta.len())?;
    if batch.model != *model {
        return Err(OrbitError::Domain(
            "batch was generated for a different model".into(),
        ));
    }
    if !(batch.sigma > 0.0) {
        return Err(OrbitError::Domain("likelihood needs sigma > 0".into()));
    }
    Ok(())
}

/// Log-weights `log w_j - |y - mu_j|^2 / 2 sigma^2` and their log-sum-exp.
fn log_terms(y: &[f64], means: &[DVector<f64>], logw: &[f64], inv2s2: f64, out: &mut [f64]) -> f64 {
    let mut top = f64::NEG_INFINITY;
    for (j, mu) in means.iter().enumerate() {
        let d2: f64 = y
            .iter()
            .zip(mu.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        out[j] = logw[j] - d2 * inv2s2;
        top = top.max(out[j]);
    }
    let s: f64 = out.iter().map(|v| (v - top).exp()).sum();
    top + s.ln()
}

struct Partial {
    nll: f64,
    grad: DVector<f64>,
    /// sum_i sum_j p_ij z z^T - m_i m_i^T
    cov: DMatrix<f64>,
    /// sum_i p_ij
    pbar: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Need {
    Value,
    Gradient,
    Hessian,
}

fn accumulate(
    model: &ModelSpec,
    theta: &[f64],
    batch: &SampleBatch,
    maps: &NodeMaps,
    need: Need,
) -> Result<Partial> {
    check_batch(model, theta, batch)?;
    let d = model.dim();
    let nodes = maps.mats.len();
    let means = maps.means(theta);
    let logw: Vec<f64> = maps
        .weights
        .iter()
        .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect();
    let s2 = batch.sigma * batch.sigma;
    let inv2s2 = 0.5 / s2;
    let n = batch.n();
    let parts: Vec<Result<Partial>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut part = Partial {
                nll: 0.0,
                grad: DVector::zeros(d),
                cov: DMatrix::zeros(
                    if need == Need::Hessian { d } else { 0 },
                    if need == Need::Hessian { d } else { 0 },
                ),
                pbar: vec![0.0; if need == Need::Hessian { nodes } else { 0 }],
            };
            let mut lt = vec![0.0; nodes];
            let mut m = DVector::<f64>::zeros(d);
            let mut r = DVector::<f64>::zeros(batch.obs_dim());
            for i in c * CHUNK..(n.min((c + 1) * CHUNK)) {
                let y = batch.row(i);
                let lse = log_terms(y, &means, &logw, inv2s2, &mut lt);
                if !lse.is_finite() {
                    return Err(OrbitError::NonFinite {
                        index: i,
                        msg: format!("log-likelihood {lse}"),
                    });
                }
                part.nll -= lse;
                if need == Need::Value {
                    continue;
                }
                m.fill(0.0);
                for j in 0..nodes {
                    let pij = (lt[j] - lse).exp();
                    if pij < WEIGHT_FLOOR {
                        continue;
                    }
                    for (k, (a, b)) in y.iter().zip(means[j].iter()).enumerate() {
                        r[k] = a - b;
                    }
                    let z = maps.mats[j].tr_mul(&r) / s2;
                    m.axpy(pij, &z, 1.0);
                    if need == Need::Hessian {
                        part.pbar[j] += pij;
                        part.cov.ger(pij, &z, &z, 1.0);
                    }
                }
                part.grad -= &m;
                if need == Need::Hessian {
                    part.cov.ger(-1.0, &m, &m, 1.0);
                }
            }
            Ok(part)
        })
        .collect();
    let mut total = Partial {
        nll: 0.0,
        grad: DVector::zeros(d),
        cov: DMatrix::zeros(
            if need == Need::Hessian { d } else { 0 },
            if need == Need::Hessian { d } else { 0 },
        ),
        pbar: vec![0.0; if need == Need::Hessian { nodes } else { 0 }],
    };
    for p in parts {
        let p = p?;
        total.nll += p.nll;
        total.grad += p.grad;
        total.cov += p.cov;
        total
            .pbar
            .iter_mut()
            .zip(&p.pbar)
            .for_each(|(a, b)| *a += b);
    }
    Ok(total)
}

fn gaussian_constant(p: usize, sigma: f64) -> f64 {
    0.5 * p as f64 * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
}

/// Empirical marginal negative log-likelihood, including the Gaussian normalizer.
pub fn neg_log_lik(
    model: &ModelSpec,
    theta: &[f64],
    batch: &SampleBatch,
    rule: &QuadratureRule,
) -> Result<f64> {
    neg_log_lik_with(model, theta, batch, &NodeMaps::new(model, rule)?)
}

pub fn neg_log_lik_with(
    model: &ModelSpec,
    theta: &[f64],
    batch: &SampleBatch,
    maps: &NodeMaps,
) -> Result<f64> {
    let part = accumulate(model, theta, batch, maps, Need::Value)?;
    Ok(part.nll / batch.n() as f64 + gaussian_constant(batch.obs_dim(), batch.sigma))
}

pub fn nll_gradient(
    model: &ModelSpec,
    theta: &[f64],
    batch: &SampleBatch,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    nll_gradient_with(model, theta, batch, &NodeMaps::new(model, rule)?)
}

pub fn nll_gradient_with(
    model: &ModelSpec,
    theta: &[f64],
    batch: &SampleBatch,
    maps: &NodeMaps,
) -> Result<Vec<f64>> {
    let part = accumulate(model, theta, batch, maps, Need::Gradient)?;
    Ok((part.grad / batch.n() as f64).iter().copied().collect())
}

pub fn nll_hessian(
    model: &ModelSpec,
    theta: &[f64],
    batch: &SampleBatch,
    rule: &QuadratureRule,
) -> Result<DMatrix<f64>> {
    nll_hessian_with(model, theta, batch, &NodeMaps::new(model, rule)?)
}

pub fn nll_hessian_with(
    model: &ModelSpec,
    theta: &[f64],
    batch: &SampleBatch,
    maps: &NodeMaps,
) -> Result<DMatrix<f64>> {
    let part = accumulate(model, theta, batch, maps, Need::Hessian)?;
    let d = model.dim();
    let s2 = batch.sigma * batch.sigma;
    let mut h = DMatrix::<f64>::zeros(d, d);
    for (pb, g) in part.pbar.iter().zip(&maps.grams) {
        h += g * (*pb / s2);
    }
    h -= part.cov;
    h /= batch.n() as f64;
    Ok((&h + h.transpose()) * 0.5)
}

/// Hessian of the empirical NLL at the true parameter.
pub fn observed_fisher(
    model: &ModelSpec,
    theta_star: &[f64],
    batch: &SampleBatch,
    rule: &QuadratureRule,
) -> Result<DMatrix<f64>> {
    nll_hessian(model, theta_star, batch, rule)
}

pub const PERCENTILES: [f64; 5] = [10.0, 30.0, 50.0, 70.0, 90.0];

/// Linear-interpolated percentile of an ascending-sorted slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierTrack {
    pub tier: usize,
    pub size: usize,
    /// one row per alpha, one column per entry of [`PERCENTILES`]
    pub percentiles: Vec<[f64; 5]>,
    /// slope of log(median) against log(1/alpha)
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the fit
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub model: ModelSpec,
    pub ledger: DimLedger,
    pub alphas: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// descending eigenvalues per alpha
    pub eigenvalues: Vec<Vec<f64>>,
    pub tiers: Vec<TierTrack>,
    /// the `d_0` smallest eigenvalues per alpha
    pub nulls: Vec<Vec<f64>>,
}

impl SpectrumReport {
    pub fn slopes(&self) -> Vec<f64> {
        self.tiers.iter().map(|t| t.slope).collect()
    }

    /// CSV rows `alpha,tier,percentile,eigenvalue`; tier 0 lists the nulls
    /// (their percentile column is the rank among them).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "tier", "percentile", "eigenvalue"])?;
        for (a, alpha) in self.alphas.iter().enumerate() {
            for t in &self.tiers {
                for (q, v) in PERCENTILES.iter().zip(&t.percentiles[a]) {
                    w.write_record([
                        format!("{alpha:.16e}"),
                        t.tier.to_string(),
                        format!("{q}"),
                        format!("{v:.16e}"),
                    ])?;
                }
            }
            for (i, v) in self.nulls[a].iter().enumerate() {
                w.write_record([
                    format!("{alpha:.16e}"),
                    "0".into(),
                    i.to_string(),
                    format!("{v:.16e}"),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares line `y = a + b x`; returns `(b, a, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(OrbitError::Degenerate("regressor has zero variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let res = (x
        .iter()
        .zip(y)
        .map(|(u, v)| (v - a - b * u).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((b, a, res))
}

/// Observed Fisher spectra across an alpha grid (`sigma^2 = alpha |theta*|^2`),
/// split into predicted tiers with log-log slopes against `1/alpha`.
///
/// Every alpha reuses the same seed, so rotations and unit noise are shared
/// and only the scale changes.
pub fn tier_scaling(
    model: &ModelSpec,
    theta_star: &[f64],
    alphas: &[f64],
    n: usize,
    rule: &QuadratureRule,
    seed: u64,
) -> Result<SpectrumReport> {
    if alphas.len() < 3 {
        return Err(OrbitError::Domain(
            "alpha grid needs at least three points".into(),
        ));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0)) {
        return Err(OrbitError::Domain(format!(
            "alpha must be positive, got {a}"
        )));
    }
    let x: Vec<f64> = alphas.iter().map(|a| -a.ln()).collect();
    if x.iter().all(|v| *v == x[0]) {
        return Err(OrbitError::Degenerate(
            "alpha grid has identical values".into(),
        ));
    }
    let ledger = predicted_dims(model)?;
    let norm = theta_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    let maps = NodeMaps::new(model, rule)?;
    let sizes = ledger.tiers();
    let mut eigenvalues = Vec::new();
    let mut sigmas = Vec::new();
    let mut nulls = Vec::new();
    let mut pct: Vec<Vec<[f64; 5]>> = vec![Vec::new(); sizes.len()];
    for &alpha in alphas {
        let sigma = alpha.sqrt() * norm;
        let batch = generate(model, theta_star, sigma, n, rule, seed)?;
        let h = nll_hessian_with(model, theta_star, &batch, &maps)?;
        let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let mut start = 0;
        for (t, &size) in sizes.iter().enumerate() {
            let mut tier: Vec<f64> = ev[start..start + size].to_vec();
            tier.sort_by(f64::total_cmp);
            let mut row = [0.0; 5];
            for (slot, q) in row.iter_mut().zip(PERCENTILES) {
                *slot = percentile(&tier, q);
            }
            pct[t].push(row);
            start += size;
        }
        nulls.push(ev[ev.len() - ledger.d0..].to_vec());
        sigmas.push(sigma);
        eigenvalues.push(ev);
    }
    let mut tiers = Vec::new();
    for (t, rows) in pct.into_iter().enumerate() {
        if sizes[t] == 0 {
            continue;
        }
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[2].max(f64::MIN_POSITIVE).ln())
            .collect();
        let (slope, intercept, residual) = fit_line(&x, &y)?;
        tiers.push(TierTrack {
            tier: t + 1,
            size: sizes[t],
            percentiles: rows,
            slope,
            intercept,
            residual,
        });
    }
    Ok(SpectrumReport {
        model: model.clone(),
        ledger,
        alphas: alphas.to_vec(),
        sigmas,
        eigenvalues,
        tiers,
        nulls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{act, so2_rule, GroupKind};
    use crate::models::make_model;

    fn randn(seed: u64, n: usize) -> Vec<f64> {
        let mut r = SeedStream::new(seed).rng();
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    #[test]
    fn identity_rule_is_plain_gaussian() {
        let m = make_model("mra", 2, &[], 0).unwrap();
        let rule = QuadratureRule::identity(GroupKind::So2);
        let ts = randn(1, 5);
        let b0 = generate(&m, &ts, 0.0, 4, &rule, 3).unwrap();
        for i in 0..4 {
            assert_eq!(b0.row(i), &ts[..]);
        }
        let b = generate(&m, &ts, 0.7, 50, &rule, 3).unwrap();
        let t = randn(2, 5);
        let nll = neg_log_lik(&m, &t, &b, &rule).unwrap();
        let want: f64 = (0..50)
            .map(|i| {
                b.row(i)
                    .iter()
                    .zip(&t)
                    .map(|(y, x)| (y - x).powi(2))
                    .sum::<f64>()
                    / (2.0 * 0.49)
            })
            .sum::<f64>()
            / 50.0
            + gaussian_constant(5, 0.7);
        assert!((nll - want).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let m = make_model("mra", 2, &[], 0).unwrap();
        let rule = so2_rule(8).unwrap();
        let ts = randn(1, 5);
        let a = generate(&m, &ts, 1.0, 1500, &rule, 9).unwrap();
        let b = generate(&m, &ts, 1.0, 1500, &rule, 9).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let c = pool.install(|| generate(&m, &ts, 1.0, 1500, &rule, 9).unwrap());
        assert_eq!(a, c);
        let h1 = nll_hessian(&m, &ts, &a, &rule).unwrap();
        let h2 = pool.install(|| nll_hessian(&m, &ts, &a, &rule).unwrap());
        assert_eq!(h1, h2);
    }

    #[test]
    fn sample_mean_matches_first_moment() {
        let m = make_model("mra", 2, &[], 0).unwrap();
        let rule = so2_rule(8).unwrap();
        let ts = randn(4, 5);
        let n = 100_000;
        let sigma = 0.5;
        let b = generate(&m, &ts, sigma, n, &rule, 1).unwrap();
        let t1 = crate::models::moment_tensor(&m, &ts, 1, &rule).unwrap();
        for k in 0..5 {
            let mean: f64 = (0..n).map(|i| b.row(i)[k]).sum::<f64>() / n as f64;
            let spread = (sigma * sigma + ts.iter().map(|x| x * x).sum::<f64>()).sqrt();
            assert!((mean - t1.data[k]).abs() <= 4.0 * spread / (n as f64).sqrt());
        }
    }

    #[test]
    fn derivatives_match_fd() {
        let m = make_model("mra", 2, &[], 0).unwrap();
        let rule = so2_rule(16).unwrap();
        let ts = randn(5, 5);
        let b = generate(&m, &ts, 1.0, 200, &rule, 2).unwrap();
        let maps = NodeMaps::new(&m, &rule).unwrap();
        for s in 0..3 {
            let t = randn(10 + s, 5);
            let g = nll_gradient_with(&m, &t, &b, &maps).unwrap();
            let h = nll_hessian_with(&m, &t, &b, &maps).unwrap();
            let eps = 1e-5;
            for j in 0..5 {
                let mut tp = t.clone();
                let mut tm = t.clone();
                tp[j] += eps;
                tm[j] -= eps;
                let fd = (neg_log_lik_with(&m, &tp, &b, &maps).unwrap()
                    - neg_log_lik_with(&m, &tm, &b, &maps).unwrap())
                    / (2.0 * eps);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0));
                let gp = nll_gradient_with(&m, &tp, &b, &maps).unwrap();
                let gm = nll_gradient_with(&m, &tm, &b, &maps).unwrap();
                for r in 0..5 {
                    let fd = (gp[r] - gm[r]) / (2.0 * eps);
                    assert!((fd - h[(r, j)]).abs() <= 1e-5 * h[(r, j)].abs().max(1.0));
                }
            }
            assert!((&h - h.transpose()).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn invariant_under_rule_nodes() {
        let m = make_model("mra", 3, &[], 0).unwrap();
        let rule = so2_rule(12).unwrap();
        let ts = randn(6, 7);
        let b = generate(&m, &ts, 1.5, 300, &rule, 3).unwrap();
        let t = randn(7, 7);
        let a = neg_log_lik(&m, &t, &b, &rule).unwrap();
        for g in &rule.nodes {
            let c = neg_log_lik(&m, &act(&m, g, &t).unwrap(), &b, &rule).unwrap();
            assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn descent_decreases_nll() {
        let m = make_model("mra", 2, &[], 0).unwrap();
        let rule = so2_rule(8).unwrap();
        for run in 0..10 {
            let ts = randn(100 + run, 5);
            let b = generate(&m, &ts, 1.0, 200, &rule, run).unwrap();
            let maps = NodeMaps::new(&m, &rule).unwrap();
            let mut t = randn(200 + run, 5);
            let mut prev = neg_log_lik_with(&m, &t, &b, &maps).unwrap();
            for _ in 0..20 {
                let g = nll_gradient_with(&m, &t, &b, &maps).unwrap();
                t.iter_mut().zip(&g).for_each(|(x, gi)| *x -= 0.05 * gi);
                let cur = neg_log_lik_with(&m, &t, &b, &maps).unwrap();
                assert!(cur <= prev + 1e-12);
                prev = cur;
            }
        }
    }

    #[test]
    fn batch_binary_round_trip() {
        let m = make_model("cryo", 1, &[2, 2], 0).unwrap();
        let rule = crate::group::so3_rule(3, 3, 3).unwrap();
        let ts = randn(8, m.dim());
        let b = generate(&m, &ts, 0.3, 10, &rule, 1).unwrap();
        let mut buf = Vec::new();
        b.write_binary(&mut buf).unwrap();
        let back = SampleBatch::read_binary(&buf[..]).unwrap();
        assert_eq!(back.obs, b.obs);
        assert_eq!(back.model, b.model);
        assert_eq!(back.sigma, b.sigma);
    }

    #[test]
    fn tier_scaling_errors() {
        let m = make_model("mra", 2, &[], 0).unwrap();
        let rule = so2_rule(8).unwrap();
        let ts = randn(9, 5);
        assert!(matches!(
            tier_scaling(&m, &ts, &[2.0, 2.0, 2.0], 10, &rule, 1),
            Err(OrbitError::Degenerate(_))
        ));
        assert!(tier_scaling(&m, &ts, &[], 10, &rule, 1).is_err());
        let s = make_model("sphere", 2, &[], 0).unwrap();
        let r3 = crate::group::so3_rule(3, 3, 3).unwrap();
        assert!(matches!(
            tier_scaling(&s, &randn(1, 9), &[1.0, 2.0, 3.0], 10, &r3, 1),
            Err(OrbitError::Hypothesis(_))
        ));
    }

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 10.0), 1.4);
        let (b, a, r) = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((b - 2.0).abs() < 1e-15 && (a - 1.0).abs() < 1e-15 && r < 1e-15);
    }
}
