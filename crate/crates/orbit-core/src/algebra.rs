//! Numerical transcendence-degree certificates.
//!
//! The trdeg of the invariants up to order k equals the generic rank of
//! `hess s_1 + ... + hess s_k` at `theta*`. Each Hessian is `F_k^T F_k` with
//! `F_k = W^{1/2} J_k`, so the cumulative rank is the rank of the stacked
//! factors, which is what gets thresholded here.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OrbitError, Result};
use crate::group::{to_complex, SeedStream};
use crate::models::{predicted_dims, ModelKind, ModelSpec};
use crate::moments::MomentMap;

/// Relative singular-value threshold and the gap demanded at the cut.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TolPolicy {
    pub rel_tol: f64,
    pub min_gap: f64,
}

impl Default for TolPolicy {
    fn default() -> Self {
        TolPolicy {
            rel_tol: 1e-9,
            min_gap: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankInfo {
    pub rank: usize,
    /// `sigma_r / sigma_{r+1}` at the cut; infinite when nothing is cut or kept
    pub gap: f64,
    /// index `i` maximizing `sigma_{i-1} / sigma_i`
    pub largest_gap_index: usize,
    pub largest_gap: f64,
    pub singular_values: Vec<f64>,
}

/// Rank by relative thresholding of the singular values.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> Result<RankInfo> {
    if let Some(i) = m.iter().position(|x| !x.is_finite()) {
        return Err(OrbitError::NonFinite {
            index: i,
            msg: "matrix entry".into(),
        });
    }
    let mut sv: Vec<f64> = if m.is_empty() {
        Vec::new()
    } else {
        m.singular_values().iter().copied().collect()
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = if smax > 0.0 {
        sv.iter().filter(|s| **s > rel_tol * smax).count()
    } else {
        0
    };
    let ratio = |i: usize| -> f64 {
        match (sv.get(i.wrapping_sub(1)), sv.get(i)) {
            (Some(a), Some(b)) if *b > 0.0 => a / b,
            (Some(a), Some(_)) if *a > 0.0 => f64::INFINITY,
            _ => f64::INFINITY,
        }
    };
    let gap = if rank == 0 || rank == sv.len() {
        f64::INFINITY
    } else {
        ratio(rank)
    };
    let (mut largest_gap_index, mut largest_gap) = (0, 0.0);
    for i in 1..sv.len() {
        let r = ratio(i);
        if r > largest_gap && sv[i - 1] > 0.0 {
            largest_gap = r;
            largest_gap_index = i;
        }
    }
    Ok(RankInfo {
        rank,
        gap,
        largest_gap_index,
        largest_gap,
        singular_values: sv,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub model: ModelSpec,
    /// cumulative ranks for orders 1, 2, 3
    pub ranks: [usize; 3],
    pub predicted: Option<[usize; 3]>,
    pub gaps: [f64; 3],
    pub singular_values: Vec<Vec<f64>>,
    pub tol: TolPolicy,
    pub redraws: usize,
}

impl RankReport {
    pub fn matches_prediction(&self) -> Option<bool> {
        self.predicted.map(|p| p == self.ranks)
    }

    pub fn gaps_ok(&self) -> bool {
        self.gaps.iter().all(|g| *g >= self.tol.min_gap)
    }
}

fn normalized_rows(f: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let norms: Vec<f64> = f.row_iter().map(|r| r.norm()).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    f.row_iter()
        .zip(&norms)
        .filter(|(_, n)| **n > 1e-12 * top && **n > 0.0)
        .map(|(r, n)| r.iter().map(|x| x / n).collect())
        .collect()
}

/// Cumulative Hessian ranks at `theta_star`.
pub fn trdeg_ladder(model: &ModelSpec, theta_star: &[f64], tol: TolPolicy) -> Result<RankReport> {
    check_len(model.dim(), theta_star.len())?;
    let map = MomentMap::new(model)?;
    let d = model.dim();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ranks = [0; 3];
    let mut gaps = [f64::INFINITY; 3];
    let mut spectra = Vec::new();
    for k in 1..=3 {
        rows.extend(normalized_rows(&map.weighted_factor(k, theta_star)?));
        let stacked = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
        let info = numerical_rank(&stacked, tol.rel_tol)?;
        ranks[k - 1] = info.rank;
        gaps[k - 1] = info.gap;
        spectra.push(info.singular_values);
    }
    let predicted = predicted_dims(model).ok().map(|p| p.ladder());
    Ok(RankReport {
        model: model.clone(),
        ranks,
        predicted,
        gaps,
        singular_values: spectra,
        tol,
        redraws: 0,
    })
}

/// Draw a standard normal `theta*`.
pub fn generic_point(model: &ModelSpec, seed: SeedStream) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..model.dim())
        .map(|_| rng.sample(StandardNormal))
        .collect()
}

pub const MAX_REDRAWS: usize = 5;

/// Ladder at a random generic point, redrawing (at most [`MAX_REDRAWS`]
/// times) while the spectrum has no clear gap or disagrees with the
/// prediction. Errors with `NoGap` if every draw is ambiguous.
pub fn certify_ladder(model: &ModelSpec, seed: u64, tol: TolPolicy) -> Result<RankReport> {
    let base = SeedStream::new(seed);
    let mut last = None;
    for redraw in 0..=MAX_REDRAWS {
        let theta = generic_point(model, base.split(redraw as u64));
        let mut rep = trdeg_ladder(model, &theta, tol)?;
        rep.redraws = redraw;
        let good = rep.gaps_ok() && rep.matches_prediction().unwrap_or(true);
        if good {
            return Ok(rep);
        }
        last = Some(rep);
    }
    let rep = last.expect("at least one draw");
    if !rep.gaps_ok() {
        return Err(OrbitError::NoGap(format!(
            "ranks {:?} with gaps {:?} below {:e} after {} redraws",
            rep.ranks, rep.gaps, tol.min_gap, MAX_REDRAWS
        )));
    }
    Ok(rep)
}

/// Orthogonal change of coordinates `eta = P theta` splitting each complex
/// coefficient `u_m` (m >= 0) into real and imaginary parts. The `m = 0`
/// entry keeps only its nonzero part; `m > 0` parts are scaled by sqrt 2.
#[derive(Clone, Debug)]
pub struct EtaChart {
    pub p: DMatrix<f64>,
}

impl EtaChart {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        if !matches!(
            model.kind,
            ModelKind::Sphere | ModelKind::Cryo | ModelKind::CryoProjected
        ) {
            return Err(OrbitError::Domain(format!(
                "eta chart is defined for sphere/cryo kinds, not {}",
                model.kind
            )));
        }
        let d = model.dim();
        let r2 = std::f64::consts::SQRT_2;
        let mut p = DMatrix::<f64>::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let u = to_complex(model, &e)?;
            for (l, off) in model.blocks() {
                let u0 = u[off + l];
                let real_zero = model.kind == ModelKind::Sphere || l % 2 == 0;
                p[(off, j)] = if real_zero { u0.re } else { u0.im };
                for m in 1..=l {
                    let um = u[off + l + m];
                    p[(off + 2 * m - 1, j)] = r2 * um.re;
                    p[(off + 2 * m, j)] = r2 * um.im;
                }
            }
            e[j] = 0.0;
        }
        Ok(EtaChart { p })
    }

    pub fn eta(&self, theta: &[f64]) -> Vec<f64> {
        (&self.p * nalgebra::DVector::from_column_slice(theta))
            .iter()
            .copied()
            .collect()
    }

    pub fn theta(&self, eta: &[f64]) -> Vec<f64> {
        (self.p.transpose() * nalgebra::DVector::from_column_slice(eta))
            .iter()
            .copied()
            .collect()
    }
}

/// Jacobian of the (real) bispectrum features in eta coordinates.
pub fn bispectrum_jacobian(model: &ModelSpec, eta: &[f64]) -> Result<DMatrix<f64>> {
    if !matches!(model.kind, ModelKind::Sphere | ModelKind::Cryo) {
        return Err(OrbitError::Domain(format!(
            "bispectrum jacobian needs sphere or cryo, got {}",
            model.kind
        )));
    }
    check_len(model.dim(), eta.len())?;
    let chart = EtaChart::new(model)?;
    let theta = chart.theta(eta);
    let map = MomentMap::new(model)?;
    Ok(map.jacobian(3, &theta)? * chart.p.transpose())
}

/// Rank of the Jacobian of all inner products `<x_s, x_s'>` (s <= s') of `s`
/// random vectors in dimension `2l+1`.
pub fn pairwise_gram_rank(l: usize, s: usize, seed: u64) -> Result<usize> {
    if s < 1 {
        return Err(OrbitError::Domain("need at least one vector".into()));
    }
    let n = 2 * l + 1;
    let mut rng = SeedStream::new(seed).rng();
    let x: Vec<f64> = (0..n * s).map(|_| rng.sample(StandardNormal)).collect();
    let pairs: Vec<(usize, usize)> = (0..s).flat_map(|a| (a..s).map(move |b| (a, b))).collect();
    let mut jac = DMatrix::<f64>::zeros(pairs.len(), n * s);
    for (r, &(a, b)) in pairs.iter().enumerate() {
        for i in 0..n {
            jac[(r, a * n + i)] += x[b * n + i];
            jac[(r, b * n + i)] += x[a * n + i];
        }
    }
    Ok(numerical_rank(&jac, 1e-9)?.rank)
}
