//! Landscape experiments for the moment objectives: O(3) Procrustes descent,
//! the MRA phase objective on the degree-2 variety, the constructed spurious
//! minimizer, and sequential minimization on variety charts.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{numerical_rank, TolPolicy};
use crate::error::{check_len, OrbitError, Result};
use crate::group::SeedStream;
use crate::models::{make_model, ModelKind, ModelSpec};
use crate::moments::MomentMap;

pub const GRAD_TOL: f64 = 1e-10;
pub const S2_SUCCESS: f64 = 1e-10;
const ESCAPE_CHECK: f64 = 1e-4;
const ESCAPE_CURVATURE: f64 = 1e-3;

/// Armijo backtracking parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub armijo_c: f64,
    pub shrink: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// use a curvature-scaled direction instead of the plain gradient
    pub newton: bool,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            armijo_c: 1e-4,
            shrink: 0.5,
            grad_tol: GRAD_TOL,
            max_iter: 20_000,
            newton: true,
        }
    }
}

/// sin and cos with the argument reduced against the nearest multiple of
/// `pi/2`, so multiples of `PI` give exact zeros and signs.
pub fn sin_cos_reduced(a: f64) -> (f64, f64) {
    let k = (a / FRAC_PI_2).round();
    let r = a - k * FRAC_PI_2;
    let (s, c) = r.sin_cos();
    match (k as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    GlobalMin,
    SpuriousMin,
    Saddle,
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpuriousParams {
    pub kappa: f64,
    pub delta: f64,
    /// squared magnitudes `(1, L^kappa, delta, 1, ..., 1)`
    pub r2_star: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    /// chart coordinates of the point
    pub point: Vec<f64>,
    /// `s_k` at the point (zero on the orbit)
    pub value: f64,
    pub gradient_norm: f64,
    /// ascending spectrum of the Hessian restricted to the complement of the orbit tangent
    pub projected_spectrum: Vec<f64>,
    pub projected_rank: usize,
    /// `|H e| / |H|` for the orbit tangent `e`
    pub orbit_null_residual: f64,
    pub classification: Classification,
    pub iterations: usize,
    pub params: Option<SpuriousParams>,
}

impl CriticalPointReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

// ---------- Procrustes ----------

fn as_mat(theta: &[f64], m: usize) -> Result<DMatrix<f64>> {
    check_len(3 * m, theta.len())?;
    Ok(DMatrix::from_column_slice(3, m, theta))
}

fn flat(a: &DMatrix<f64>) -> Vec<f64> {
    a.as_slice().to_vec()
}

/// `s_2 = |theta^T theta - theta*^T theta*|^2 / 12` for atom-major `3 x m` inputs (`theta[3a + i]`).
pub fn procrustes_s2(theta: &[f64], theta_star: &[f64], m: usize) -> Result<f64> {
    let t = as_mat(theta, m)?;
    let s = as_mat(theta_star, m)?;
    let diff = t.transpose() * &t - s.transpose() * &s;
    Ok(diff.norm_squared() / 12.0)
}

/// `theta (theta^T theta - theta*^T theta*) / 3`, atom-major like the inputs.
pub fn procrustes_grad_s2(theta: &[f64], theta_star: &[f64], m: usize) -> Result<Vec<f64>> {
    let t = as_mat(theta, m)?;
    let s = as_mat(theta_star, m)?;
    let g = &t * (t.transpose() * &t - s.transpose() * &s) / 3.0;
    Ok(flat(&g))
}

/// Hessian of `procrustes_s2` in the atom-major flattening.
pub fn procrustes_hessian_s2(theta: &[f64], theta_star: &[f64], m: usize) -> Result<DMatrix<f64>> {
    let t = as_mat(theta, m)?;
    let s = as_mat(theta_star, m)?;
    let resid = t.transpose() * &t - s.transpose() * &s;
    let d = 3 * m;
    let mut h = DMatrix::zeros(d, d);
    for c in 0..d {
        let mut dir = DMatrix::zeros(3, m);
        dir[(c % 3, c / 3)] = 1.0;
        let dg = (&dir * &resid + &t * (dir.transpose() * &t + t.transpose() * &dir)) / 3.0;
        for (r, v) in flat(&dg).into_iter().enumerate() {
            h[(r, c)] = v;
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesTrial {
    pub trial: usize,
    pub final_s2: f64,
    pub iterations: usize,
    pub escapes: usize,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesSummary {
    pub m: usize,
    pub seed: u64,
    /// success threshold after scaling by the mean-square entry of theta*
    pub threshold: f64,
    pub successes: usize,
    pub stuck: usize,
    pub trials: Vec<ProcrustesTrial>,
}

/// Gradient descent with Armijo steps on `s_2`; at a stationary point that is
/// not a global minimizer, step along the most negative Hessian eigenvector.
pub fn procrustes_descent(
    theta0: &[f64],
    theta_star: &[f64],
    m: usize,
    policy: StepPolicy,
) -> Result<(Vec<f64>, usize, usize)> {
    let scale = (theta_star.iter().map(|v| v * v).sum::<f64>() / theta_star.len() as f64).powi(2);
    let target = 1e-6 * S2_SUCCESS * scale;
    let mut x = theta0.to_vec();
    let mut f = procrustes_s2(&x, theta_star, m)?;
    let mut step: f64 = 1.0;
    let mut escapes = 0;
    let gtol = policy.grad_tol * scale.sqrt().max(1e-300);
    for it in 0..policy.max_iter {
        if f <= target {
            return Ok((x, it, escapes));
        }
        let g = procrustes_grad_s2(&x, theta_star, m)?;
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        // near-stationary: look for negative curvature before crawling on
        if gn2.sqrt() <= ESCAPE_CHECK * scale.sqrt().max(1e-300) {
            let h = procrustes_hessian_s2(&x, theta_star, m)?;
            let eig = h.symmetric_eigen();
            let (i, lmin) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, v)| (i, *v))
                .unwrap();
            let top = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            // near a minimizer the residual bends the orbit directions by O(sqrt(s2)); ignore that
            if lmin >= -ESCAPE_CURVATURE * top {
                if gn2.sqrt() <= gtol {
                    return Ok((x, it, escapes));
                }
            } else {
                let v = eig.eigenvectors.column(i).into_owned();
                let mut a = (-lmin).sqrt().max(1e-3);
                let mut moved = false;
                for _ in 0..60 {
                    let trial: Vec<f64> = x.iter().zip(v.iter()).map(|(p, q)| p + a * q).collect();
                    let ft = procrustes_s2(&trial, theta_star, m)?;
                    if ft < f {
                        x = trial;
                        f = ft;
                        moved = true;
                        break;
                    }
                    a *= 0.5;
                }
                if moved {
                    escapes += 1;
                    continue;
                }
            }
        }
        step = (step * 2.0).min(1e6);
        loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(p, q)| p - step * q).collect();
            let ft = procrustes_s2(&trial, theta_star, m)?;
            if ft <= f - policy.armijo_c * step * gn2 {
                x = trial;
                f = ft;
                break;
            }
            step *= policy.shrink;
            if step < 1e-300 {
                return Ok((x, it, escapes));
            }
        }
    }
    Ok((x, policy.max_iter, escapes))
}

/// Random-start descents on `s_2` for a standard Gaussian `3 x m` target.
pub fn procrustes_descent_experiment(
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<ProcrustesSummary> {
    procrustes_experiment_scaled(m, trials, seed, 1.0)
}

/// As [`procrustes_descent_experiment`] with `theta*` and starts scaled by `c`.
pub fn procrustes_experiment_scaled(
    m: usize,
    trials: usize,
    seed: u64,
    c: f64,
) -> Result<ProcrustesSummary> {
    if m < 3 {
        return Err(OrbitError::Domain(format!(
            "procrustes needs m >= 3, got {m}"
        )));
    }
    let base = SeedStream::new(seed);
    let mut rng = base.rng();
    let star: Vec<f64> = (0..3 * m)
        .map(|_| c * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let scale = (star.iter().map(|v| v * v).sum::<f64>() / star.len() as f64).powi(2);
    let threshold = S2_SUCCESS * scale;
    let runs: Vec<Result<ProcrustesTrial>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = base.split(1 + t as u64).rng();
            let x0: Vec<f64> = (0..3 * m)
                .map(|_| c * r.sample::<f64, _>(StandardNormal))
                .collect();
            let (x, iterations, escapes) =
                procrustes_descent(&x0, &star, m, StepPolicy::default())?;
            let final_s2 = procrustes_s2(&x, &star, m)?;
            Ok(ProcrustesTrial {
                trial: t,
                final_s2,
                iterations,
                escapes,
                success: final_s2 <= threshold,
            })
        })
        .collect();
    let trials: Vec<ProcrustesTrial> = runs.into_iter().collect::<Result<_>>()?;
    let successes = trials.iter().filter(|t| t.success).count();
    Ok(ProcrustesSummary {
        m,
        seed,
        threshold,
        successes,
        stuck: trials.len() - successes,
        trials,
    })
}

// ---------- MRA phase objective ----------

/// Value, gradient and Hessian of
/// `s(t) = -sum_{l = l' + l''} R_l R_l' R_l'' cos(t_l - t_l' - t_l'')`
/// over ordered `(l', l'')`, with `R = r_star^2`. This is `8 s_3` on the
/// degree-2 variety up to a constant.
pub fn mra_phase_objective(r_star: &[f64], t: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
    check_len(r_star.len(), t.len())?;
    if let Some(v) = r_star.iter().find(|v| !(**v >= 0.0)) {
        return Err(OrbitError::Domain(format!(
            "magnitudes must be nonnegative, got {v}"
        )));
    }
    let r2: Vec<f64> = r_star.iter().map(|v| v * v).collect();
    Ok(phase_objective_r2(&r2, t))
}

pub(crate) fn phase_objective_r2(r2: &[f64], t: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
    let n = r2.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    let mut hess = DMatrix::zeros(n, n);
    for l in 2..=n {
        for lp in 1..l {
            let lpp = l - lp;
            let c = r2[l - 1] * r2[lp - 1] * r2[lpp - 1];
            if c == 0.0 {
                continue;
            }
            let (s, co) = sin_cos_reduced(t[l - 1] - t[lp - 1] - t[lpp - 1]);
            value -= c * co;
            // w = e_l - e_l' - e_l''
            let mut w = vec![0.0; n];
            w[l - 1] += 1.0;
            w[lp - 1] -= 1.0;
            w[lpp - 1] -= 1.0;
            for i in 0..n {
                if w[i] == 0.0 {
                    continue;
                }
                grad[i] += c * s * w[i];
                for j in 0..n {
                    if w[j] != 0.0 {
                        hess[(i, j)] += c * co * w[i] * w[j];
                    }
                }
            }
        }
    }
    (value, grad, hess)
}

/// The orbit tangent `(1, 2, ..., L)`.
pub fn orbit_tangent(n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (1..=n).map(|l| l as f64))
}

/// Orthonormal basis of the complement of `e`, Gram-Schmidt over `e, e_1, e_2, ...`.
pub fn complement_basis(e: &DVector<f64>) -> DMatrix<f64> {
    let n = e.len();
    let mut basis: Vec<DVector<f64>> = vec![e.normalize()];
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        // two passes for orthogonality to machine precision
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&v);
                v.axpy(-p, b, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            basis.push(v / nv);
        }
    }
    DMatrix::from_columns(&basis[1..])
}

fn projected(h: &DMatrix<f64>, e: &DVector<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let p = complement_basis(e);
    let hp = p.transpose() * h * &p;
    let hp = (&hp + hp.transpose()) * 0.5;
    let mut ev: Vec<f64> = hp
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    (ev, hp)
}

/// MRA signal with mean `mean`, magnitudes `r` and phases `t`.
pub fn mra_point(mean: f64, r: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    check_len(r.len(), t.len())?;
    let mut theta = vec![mean];
    for (ri, ti) in r.iter().zip(t) {
        let (s, c) = sin_cos_reduced(*ti);
        theta.push(ri * c);
        theta.push(ri * s);
    }
    Ok(theta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpuriousCandidate {
    pub kappa: f64,
    pub delta: f64,
    pub lambda_min: f64,
    pub relative_margin: f64,
    pub rank: usize,
    pub s3: f64,
}

pub const DEFAULT_KAPPAS: [f64; 4] = [2.0, 3.0, 4.0, 5.0];
pub const DEFAULT_DELTAS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

fn spurious_report(
    l: usize,
    kappa: f64,
    delta: f64,
    tol: TolPolicy,
) -> Result<(CriticalPointReport, SpuriousCandidate)> {
    let mut r2 = vec![1.0; l];
    r2[1] = (l as f64).powf(kappa);
    r2[2] = delta;
    let mut t_hat = vec![0.0; l];
    t_hat[0] = PI;
    let (v_hat, g, h) = phase_objective_r2(&r2, &t_hat);
    let (v0, _, _) = phase_objective_r2(&r2, &vec![0.0; l]);
    let s3 = (v_hat - v0) / 8.0;
    let e = orbit_tangent(l);
    let (spectrum, hp) = projected(&h, &e);
    let rank = numerical_rank(&hp, tol.rel_tol)?.rank;
    let hn = h.norm();
    let null = if hn > 0.0 {
        (&h * &e).norm() / (hn * e.norm())
    } else {
        0.0
    };
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt() / 8.0;
    let lmin = spectrum[0];
    let lmax = *spectrum.last().unwrap();
    let classification = if gn > GRAD_TOL {
        Classification::Unresolved
    } else if lmin > 0.0 && rank == l - 1 {
        if s3 > 0.0 {
            Classification::SpuriousMin
        } else {
            Classification::GlobalMin
        }
    } else if lmin < 0.0 && rank == l - 1 {
        Classification::Saddle
    } else {
        Classification::Unresolved
    };
    let report = CriticalPointReport {
        point: t_hat,
        value: s3,
        gradient_norm: gn,
        projected_spectrum: spectrum.iter().map(|v| v / 8.0).collect(),
        projected_rank: rank,
        orbit_null_residual: null,
        classification,
        iterations: 0,
        params: Some(SpuriousParams {
            kappa,
            delta,
            r2_star: r2,
        }),
    };
    let cand = SpuriousCandidate {
        kappa,
        delta,
        lambda_min: lmin / 8.0,
        relative_margin: lmin / lmax,
        rank,
        s3,
    };
    Ok((report, cand))
}

/// Evaluate the phase objective at `t = (pi, 0, ..., 0)` for squared
/// magnitudes `(1, L^kappa, delta, 1, ..., 1)` over the grids and return the
/// certified point with the largest relative margin `lambda_min / lambda_max`.
pub fn mra_spurious_search(
    l: usize,
    kappas: &[f64],
    deltas: &[f64],
) -> Result<CriticalPointReport> {
    if l < 30 {
        return Err(OrbitError::Hypothesis(format!(
            "the spurious construction needs L >= 30, got L = {l}"
        )));
    }
    let tol = TolPolicy::default();
    let mut best: Option<(CriticalPointReport, f64)> = None;
    let mut tried = Vec::new();
    for &kappa in kappas {
        for &delta in deltas {
            let (rep, cand) = spurious_report(l, kappa, delta, tol)?;
            if rep.classification == Classification::SpuriousMin
                && best.as_ref().is_none_or(|b| cand.relative_margin > b.1)
            {
                best = Some((rep, cand.relative_margin));
            }
            tried.push(cand);
        }
    }
    match best {
        Some((rep, _)) => Ok(rep),
        None => {
            let lines: Vec<String> = tried
                .iter()
                .map(|c| {
                    format!(
                        "kappa={} delta={:e}: lambda_min={:e} margin={:e} rank={}",
                        c.kappa, c.delta, c.lambda_min, c.relative_margin, c.rank
                    )
                })
                .collect();
            Err(OrbitError::SearchExhausted(lines.join("; ")))
        }
    }
}

/// Spurious-construction diagnostics at one `(kappa, delta)`, certified or not.
pub fn mra_spurious_candidate(l: usize, kappa: f64, delta: f64) -> Result<CriticalPointReport> {
    if l < 4 {
        return Err(OrbitError::Domain(format!(
            "construction needs L >= 4, got {l}"
        )));
    }
    Ok(spurious_report(l, kappa, delta, TolPolicy::default())?.0)
}

// ---------- variety charts ----------

/// Explicit charts of the MRA moment varieties.
#[derive(Clone, Debug, PartialEq)]
pub enum VarietyChart {
    /// degree-1 variety: mean fixed, harmonics free; minimizes `s_2`
    MraMean {
        model: ModelSpec,
        theta_star: Vec<f64>,
    },
    /// degree-2 variety: mean and magnitudes fixed, phases free; minimizes `s_3`
    MraPhases { mean: f64, r_star: Vec<f64> },
}

impl VarietyChart {
    pub fn mra_mean(theta_star: &[f64]) -> Result<Self> {
        if theta_star.len() < 3 || theta_star.len() % 2 == 0 {
            return Err(OrbitError::Domain(
                "MRA signals have odd length >= 3".into(),
            ));
        }
        let model = make_model("mra", (theta_star.len() - 1) / 2, &[], 0)?;
        Ok(VarietyChart::MraMean {
            model,
            theta_star: theta_star.to_vec(),
        })
    }

    pub fn mra_phases(theta_star: &[f64]) -> Result<Self> {
        if theta_star.len() < 3 || theta_star.len() % 2 == 0 {
            return Err(OrbitError::Domain(
                "MRA signals have odd length >= 3".into(),
            ));
        }
        let r_star: Vec<f64> = theta_star[1..]
            .chunks(2)
            .map(|c| c[0].hypot(c[1]))
            .collect();
        if r_star.iter().any(|r| !(*r > 0.0)) {
            return Err(OrbitError::Domain(
                "phase chart needs every magnitude positive".into(),
            ));
        }
        Ok(VarietyChart::MraPhases {
            mean: theta_star[0],
            r_star,
        })
    }

    pub fn level(&self) -> usize {
        match self {
            VarietyChart::MraMean { .. } => 2,
            VarietyChart::MraPhases { .. } => 3,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            VarietyChart::MraMean { theta_star, .. } => theta_star.len() - 1,
            VarietyChart::MraPhases { r_star, .. } => r_star.len(),
        }
    }

    /// Signal at chart coordinates `x`.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        match self {
            VarietyChart::MraMean { theta_star, .. } => {
                let mut t = vec![theta_star[0]];
                t.extend_from_slice(x);
                Ok(t)
            }
            VarietyChart::MraPhases { mean, r_star } => mra_point(*mean, r_star, x),
        }
    }

    /// Lower-order moment mismatch `s_1 + ... + s_{k-1}` at the embedded point.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        let (model, star) = match self {
            VarietyChart::MraMean { model, theta_star } => (model.clone(), theta_star.clone()),
            VarietyChart::MraPhases { mean, r_star } => (
                make_model("mra", r_star.len(), &[], 0)?,
                mra_point(*mean, r_star, &vec![0.0; r_star.len()])?,
            ),
        };
        let mm = MomentMap::new(&model)?;
        let theta = self.embed(x)?;
        let mut total = 0.0;
        for k in 1..self.level() {
            total += mm.s_value(k, &theta, &star)?;
        }
        Ok(total)
    }

    /// `(s_k, gradient, Hessian)` in chart coordinates.
    fn eval(&self, mm: Option<&MomentMap>, x: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        match self {
            VarietyChart::MraMean { theta_star, .. } => {
                let mm = mm.expect("moment map");
                let theta = self.embed(x)?;
                let v = mm.s_value(2, &theta, theta_star)?;
                let g = mm.s_gradient(2, &theta, theta_star)?[1..].to_vec();
                let n = x.len();
                let mut h = DMatrix::zeros(n, n);
                let eps = 1e-6 * (1.0 + x.iter().fold(0.0f64, |a, b| a.max(b.abs())));
                for j in 0..n {
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[j + 1] += eps;
                    tm[j + 1] -= eps;
                    let gp = mm.s_gradient(2, &tp, theta_star)?;
                    let gm = mm.s_gradient(2, &tm, theta_star)?;
                    for i in 0..n {
                        h[(i, j)] = (gp[i + 1] - gm[i + 1]) / (2.0 * eps);
                    }
                }
                Ok((v, g, (&h + h.transpose()) * 0.5))
            }
            VarietyChart::MraPhases { r_star, .. } => {
                let r2: Vec<f64> = r_star.iter().map(|v| v * v).collect();
                let (v, g, h) = phase_objective_r2(&r2, x);
                let (v0, _, _) = phase_objective_r2(&r2, &vec![0.0; x.len()]);
                Ok(((v - v0) / 8.0, g.iter().map(|a| a / 8.0).collect(), h / 8.0))
            }
        }
    }

    /// Orbit tangent at chart coordinates `x`.
    fn tangent(&self, x: &[f64]) -> DVector<f64> {
        match self {
            VarietyChart::MraMean { .. } => {
                // d/dtau of u_l e^{i l tau}
                let mut v = DVector::zeros(x.len());
                for (i, c) in x.chunks(2).enumerate() {
                    let l = (i + 1) as f64;
                    v[2 * i] = -l * c[1];
                    v[2 * i + 1] = l * c[0];
                }
                v
            }
            VarietyChart::MraPhases { r_star, .. } => orbit_tangent(r_star.len()),
        }
    }
}

/// Minimize `s_k` over the chart from `init`: curvature-scaled (or plain
/// gradient) directions with Armijo backtracking, then classify the terminal
/// point by the Hessian restricted to the complement of the orbit tangent.
pub fn minimize_sk_on_variety(
    chart: &VarietyChart,
    init: &[f64],
    policy: StepPolicy,
) -> Result<CriticalPointReport> {
    check_len(chart.dim(), init.len())?;
    let mm = match chart {
        VarietyChart::MraMean { model, .. } => Some(MomentMap::new(model)?),
        _ => None,
    };
    let mut x = init.to_vec();
    let (mut f, mut g, mut h) = chart.eval(mm.as_ref(), &x)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < policy.max_iter {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn <= policy.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut dir = -gv.clone();
        if policy.newton {
            // |H| with a floor keeps this a descent direction
            let eig = h.clone().symmetric_eigen();
            let top = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let floor = (1e-8 * top).max(1e-300);
            let q = &eig.eigenvectors;
            let coeff = q.transpose() * &gv;
            let scaled = DVector::from_iterator(
                coeff.len(),
                coeff
                    .iter()
                    .zip(eig.eigenvalues.iter())
                    .map(|(c, l)| -c / l.abs().max(floor)),
            );
            let cand = q * scaled;
            if cand.dot(&gv) < 0.0 {
                dir = cand;
            }
        }
        let slope = dir.dot(&gv);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..200 {
            let trial: Vec<f64> = x
                .iter()
                .zip(dir.iter())
                .map(|(a, b)| a + step * b)
                .collect();
            let ft = chart.eval(mm.as_ref(), &trial)?;
            if ft.0 <= f + policy.armijo_c * step * slope {
                x = trial;
                (f, g, h) = ft;
                accepted = true;
                break;
            }
            step *= policy.shrink;
        }
        if !accepted {
            break;
        }
    }
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e = chart.tangent(&x);
    let tol = TolPolicy::default();
    let (spectrum, hp, null) = if e.norm() > 0.0 {
        let (s, hp) = projected(&h, &e);
        let hn = h.norm();
        let null = if hn > 0.0 {
            (&h * &e).norm() / (hn * e.norm())
        } else {
            0.0
        };
        (s, hp, null)
    } else {
        let mut s: Vec<f64> = h
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        s.sort_by(f64::total_cmp);
        (s, h.clone(), 0.0)
    };
    let rank = numerical_rank(&hp, tol.rel_tol)?.rank;
    let scale = spectrum
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        .max(1e-300);
    let value_tol = 1e-12 * (1.0 + scale);
    let classification = if !converged {
        Classification::Unresolved
    } else if f <= value_tol {
        Classification::GlobalMin
    } else if spectrum[0] < -1e-9 * scale {
        Classification::Saddle
    } else if spectrum[0] > 0.0 && rank == spectrum.len() {
        Classification::SpuriousMin
    } else {
        Classification::Unresolved
    };
    Ok(CriticalPointReport {
        point: x,
        value: f,
        gradient_norm: gn,
        projected_spectrum: spectrum,
        projected_rank: rank,
        orbit_null_residual: null,
        classification,
        iterations,
        params: None,
    })
}

/// Check that `kind` supports a chart; only MRA does.
pub fn chart_supported(model: &ModelSpec) -> bool {
    model.kind == ModelKind::Mra
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::s_closed;

    fn randn(seed: u64, n: usize) -> Vec<f64> {
        let mut r = SeedStream::new(seed).rng();
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    #[test]
    fn reduced_trig_is_exact_on_multiples() {
        for k in -6i32..=6 {
            let (s, c) = sin_cos_reduced(k as f64 * PI);
            assert_eq!(s.abs(), 0.0);
            assert_eq!(c, if k % 2 == 0 { 1.0 } else { -1.0 });
        }
        for a in [0.3, -2.1, 5.7, 100.25] {
            let (s, c) = sin_cos_reduced(a);
            assert!((s - a.sin()).abs() < 1e-14 && (c - a.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn procrustes_grad_matches_fd() {
        let m = 5;
        let star = randn(1, 15);
        for s in 0..10 {
            let t = randn(10 + s, 15);
            let g = procrustes_grad_s2(&t, &star, m).unwrap();
            let h = procrustes_hessian_s2(&t, &star, m).unwrap();
            let eps = 1e-6;
            for j in 0..15 {
                let mut tp = t.clone();
                let mut tm = t.clone();
                tp[j] += eps;
                tm[j] -= eps;
                let fd = (procrustes_s2(&tp, &star, m).unwrap()
                    - procrustes_s2(&tm, &star, m).unwrap())
                    / (2.0 * eps);
                assert!((fd - g[j]).abs() <= 1e-7 * g[j].abs().max(1.0));
                let gp = procrustes_grad_s2(&tp, &star, m).unwrap();
                let gm = procrustes_grad_s2(&tm, &star, m).unwrap();
                for i in 0..15 {
                    assert!(
                        ((gp[i] - gm[i]) / (2.0 * eps) - h[(i, j)]).abs()
                            <= 1e-6 * h[(i, j)].abs().max(1.0)
                    );
                }
            }
        }
    }

    #[test]
    fn procrustes_special_points() {
        let m = 4;
        let star = randn(2, 12);
        assert!(procrustes_grad_s2(&[0.0; 12], &star, m)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        let q = crate::group::rotation_matrix(crate::harmonics::Euler::new(0.3, 1.1, -0.4));
        let q = DMatrix::from_iterator(3, 3, q.iter().copied());
        let rotated = flat(&(q * as_mat(&star, m).unwrap()));
        assert!(procrustes_grad_s2(&rotated, &star, m)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-12));
        let (x, it, _) = procrustes_descent(&star, &star, m, StepPolicy::default()).unwrap();
        assert_eq!(it, 0);
        assert_eq!(x, star);
        // rank 2 start stays rank 2 under gradient flow and must escape
        let mut flat2 = randn(3, 12);
        for a in 0..m {
            flat2[3 * a + 2] = 0.0;
        }
        let (x, _, escapes) = procrustes_descent(&flat2, &star, m, StepPolicy::default()).unwrap();
        assert!(escapes >= 1);
        assert!(procrustes_s2(&x, &star, m).unwrap() <= 1e-10);
    }

    #[test]
    fn procrustes_scale_invariance() {
        let a = procrustes_experiment_scaled(4, 6, 3, 1.0).unwrap();
        let b = procrustes_experiment_scaled(4, 6, 3, 10.0).unwrap();
        assert_eq!(a.successes, 6);
        assert_eq!(b.successes, 6);
        assert!(procrustes_descent_experiment(2, 1, 1).is_err());
    }

    #[test]
    fn phase_objective_properties() {
        let l = 7;
        let r: Vec<f64> = randn(4, l).iter().map(|v| v.abs() + 0.2).collect();
        let (v0, g0, _) = mra_phase_objective(&r, &vec![0.0; l]).unwrap();
        assert!(g0.iter().all(|v| v.abs() < 1e-14));
        let mut rng = SeedStream::new(5).rng();
        let t = randn(6, l);
        let (vt, _, _) = mra_phase_objective(&r, &t).unwrap();
        assert!(vt >= v0);
        for _ in 0..20 {
            let tau: f64 = rng.random_range(-10.0..10.0);
            let shifted: Vec<f64> = t
                .iter()
                .enumerate()
                .map(|(i, x)| x + tau * (i + 1) as f64)
                .collect();
            assert!((mra_phase_objective(&r, &shifted).unwrap().0 - vt).abs() < 1e-10);
        }
        // unit magnitudes: Hessian at 0 is W W^T
        let ones = vec![1.0; l];
        let (_, _, h) = mra_phase_objective(&ones, &vec![0.0; l]).unwrap();
        let mut w = DMatrix::zeros(l, 0);
        for a in 2..=l {
            for b in 1..a {
                let mut col = DVector::zeros(l);
                col[a - 1] += 1.0;
                col[b - 1] -= 1.0;
                col[a - b - 1] -= 1.0;
                let c = w.ncols();
                w = w.insert_column(c, 0.0);
                w.set_column(c, &col);
            }
        }
        assert!((&h - &w * w.transpose()).abs().max() < 1e-12);
        assert_eq!(numerical_rank(&h, 1e-9).unwrap().rank, l - 1);
        // FD of value and gradient
        let (_, g, h) = mra_phase_objective(&r, &t).unwrap();
        let eps = 1e-6;
        for j in 0..l {
            let mut tp = t.clone();
            let mut tm = t.clone();
            tp[j] += eps;
            tm[j] -= eps;
            let (fp, gp, _) = mra_phase_objective(&r, &tp).unwrap();
            let (fm, gm, _) = mra_phase_objective(&r, &tm).unwrap();
            assert!(((fp - fm) / (2.0 * eps) - g[j]).abs() < 1e-7);
            for i in 0..l {
                assert!(((gp[i] - gm[i]) / (2.0 * eps) - h[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn phase_objective_is_eight_s3() {
        let l = 6;
        let model = make_model("mra", l, &[], 0).unwrap();
        let r: Vec<f64> = randn(7, l).iter().map(|v| v.abs() + 0.1).collect();
        let star = mra_point(0.8, &r, &vec![0.0; l]).unwrap();
        let (v0, _, _) = mra_phase_objective(&r, &vec![0.0; l]).unwrap();
        for s in 0..5 {
            let t = randn(20 + s, l);
            let theta = mra_point(0.8, &r, &t).unwrap();
            let want = s_closed(&model, &theta, &star, 3).unwrap().value;
            let (v, _, _) = mra_phase_objective(&r, &t).unwrap();
            assert!(((v - v0) / 8.0 - want).abs() < 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn spurious_search_l30() {
        let rep = mra_spurious_search(30, &DEFAULT_KAPPAS, &DEFAULT_DELTAS).unwrap();
        assert_eq!(rep.classification, Classification::SpuriousMin);
        assert_eq!(rep.projected_rank, 29);
        assert_eq!(rep.gradient_norm, 0.0);
        assert!(rep.projected_spectrum[0] > 0.0 && rep.value > 0.0);
        assert!(rep.orbit_null_residual < 1e-8);
        assert!(matches!(
            mra_spurious_search(5, &DEFAULT_KAPPAS, &DEFAULT_DELTAS),
            Err(OrbitError::Hypothesis(_))
        ));
    }

    #[test]
    fn zero_delta_leaves_e3_null() {
        let l = 30;
        let rep = mra_spurious_candidate(l, 2.0, 0.0).unwrap();
        assert_eq!(rep.projected_rank, l - 2);
        let mut r2 = vec![1.0; l];
        r2[1] = (l as f64).powi(2);
        r2[2] = 0.0;
        let mut t = vec![0.0; l];
        t[0] = PI;
        let (_, _, h) = phase_objective_r2(&r2, &t);
        let mut e3 = DVector::zeros(l);
        e3[2] = 1.0;
        assert!((&h * e3).norm() < 1e-12 * h.norm());
    }

    #[test]
    fn variety_minimization() {
        let star = randn(8, 11);
        let phases = VarietyChart::mra_phases(&star).unwrap();
        let t_star: Vec<f64> = star[1..].chunks(2).map(|c| c[1].atan2(c[0])).collect();
        assert!(phases.residual(&t_star).unwrap() < 1e-10);
        assert!(phases.residual(&randn(9, 5)).unwrap() < 1e-10);
        let rep = minimize_sk_on_variety(&phases, &vec![0.0; 5], StepPolicy::default()).unwrap();
        assert_eq!(rep.classification, Classification::GlobalMin);

        let mean = VarietyChart::mra_mean(&star).unwrap();
        let rep = minimize_sk_on_variety(&mean, &randn(10, 10), StepPolicy::default()).unwrap();
        assert_eq!(rep.classification, Classification::GlobalMin);
        let got = mean.embed(&rep.point).unwrap();
        for l in 0..5 {
            let a = got[1 + 2 * l].hypot(got[2 + 2 * l]);
            let b = star[1 + 2 * l].hypot(star[2 + 2 * l]);
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn variety_near_spurious_point() {
        let rep = mra_spurious_search(30, &DEFAULT_KAPPAS, &DEFAULT_DELTAS).unwrap();
        let r: Vec<f64> = rep
            .params
            .as_ref()
            .unwrap()
            .r2_star
            .iter()
            .map(|v| v.sqrt())
            .collect();
        let star = mra_point(1.0, &r, &vec![0.0; 30]).unwrap();
        let chart = VarietyChart::mra_phases(&star).unwrap();
        let mut init = rep.point.clone();
        let mut rng = SeedStream::new(3).rng();
        for v in init.iter_mut() {
            *v += 1e-6 * rng.sample::<f64, _>(StandardNormal);
        }
        let out = minimize_sk_on_variety(&chart, &init, StepPolicy::default()).unwrap();
        assert_eq!(out.classification, Classification::SpuriousMin);
        assert!(out.value > 0.0);
    }
}
