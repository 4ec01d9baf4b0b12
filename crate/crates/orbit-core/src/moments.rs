//! Closed-form series terms `s_1, s_2, s_3`, bispectra, and the quadrature
//! oracle built from the double-expectation form.
//!
//! Every `s_k` is written as `1/2 (f(theta) - f(theta*))^T W (f(theta) - f(theta*))`
//! where `f` is a vector of real invariant features (real or imaginary parts
//! of low-degree polynomials in the complex coefficients) and `W` is block
//! diagonal. Gradients are `J^T W delta` and the Hessian at `theta*` is
//! `J^T W J`, both with an analytic Jacobian.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OrbitError, Result};
use crate::group::{act, complex_chart, ComplexChart, QuadratureRule};
use crate::harmonics::{cg, slice_coeff};
use crate::models::{check_rule, observe, ModelKind, ModelSpec};

#[derive(Clone, Copy, Debug)]
struct Factor {
    idx: u32,
    conj: bool,
}

#[derive(Clone, Copy, Debug)]
struct Monomial {
    coef: Complex64,
    len: u8,
    f: [Factor; 3],
}

impl Monomial {
    fn new(coef: f64, factors: &[(usize, bool)]) -> Self {
        let mut f = [Factor {
            idx: 0,
            conj: false,
        }; 3];
        for (slot, &(idx, conj)) in f.iter_mut().zip(factors) {
            *slot = Factor {
                idx: idx as u32,
                conj,
            };
        }
        Monomial {
            coef: Complex64::new(coef, 0.0),
            len: factors.len() as u8,
            f,
        }
    }

    fn z(&self, i: usize, u: &[Complex64]) -> Complex64 {
        let v = u[self.f[i].idx as usize];
        if self.f[i].conj {
            v.conj()
        } else {
            v
        }
    }

    fn eval(&self, u: &[Complex64]) -> Complex64 {
        (0..self.len as usize).fold(self.coef, |acc, i| acc * self.z(i, u))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

/// Which invariant a feature is a component of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    Mean {
        s: usize,
    },
    Cube,
    Gram {
        l: usize,
        s: usize,
        sp: usize,
    },
    /// MRA triple `u_l conj(u_l' u_l'')`
    Triple {
        l: usize,
        lp: usize,
        lpp: usize,
    },
    /// projected-MRA `theta0 r_l^2`
    MeanPower {
        l: usize,
    },
    Bispectrum {
        l: [usize; 3],
        s: [usize; 3],
    },
    Pair {
        a: usize,
        b: usize,
    },
}

#[derive(Clone, Debug)]
pub struct Feature {
    pub tag: Tag,
    pub part: Part,
    terms: Vec<Monomial>,
}

impl Feature {
    fn complex_value(&self, u: &[Complex64]) -> Complex64 {
        self.terms.iter().map(|t| t.eval(u)).sum()
    }

    fn value(&self, u: &[Complex64]) -> f64 {
        let z = self.complex_value(u);
        match self.part {
            Part::Re => z.re,
            Part::Im => z.im,
        }
    }
}

/// A dense symmetric weight block acting on a subset of features.
#[derive(Clone, Debug)]
pub struct WeightBlock {
    pub idx: Vec<usize>,
    pub mat: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct FeatureBlock {
    pub k: usize,
    pub features: Vec<Feature>,
    pub weights: Vec<WeightBlock>,
}

impl FeatureBlock {
    fn empty(k: usize) -> Self {
        FeatureBlock {
            k,
            features: Vec::new(),
            weights: Vec::new(),
        }
    }

    fn push_diag(&mut self, tag: Tag, part: Part, terms: Vec<Monomial>, w: f64) {
        self.weights.push(WeightBlock {
            idx: vec![self.features.len()],
            mat: DMatrix::from_element(1, 1, w),
        });
        self.features.push(Feature { tag, part, terms });
    }

    fn quad(&self, delta: &[f64]) -> f64 {
        self.weights
            .iter()
            .map(|b| {
                let mut acc = 0.0;
                for (r, &i) in b.idx.iter().enumerate() {
                    for (c, &j) in b.idx.iter().enumerate() {
                        acc += delta[i] * b.mat[(r, c)] * delta[j];
                    }
                }
                acc
            })
            .sum()
    }

    fn apply_w(&self, delta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; delta.len()];
        for b in &self.weights {
            for (r, &i) in b.idx.iter().enumerate() {
                out[i] += b
                    .idx
                    .iter()
                    .enumerate()
                    .map(|(c, &j)| b.mat[(r, c)] * delta[j])
                    .sum::<f64>();
            }
        }
        out
    }
}

/// Feature vectors and weights for all three orders of one model.
#[derive(Clone, Debug)]
pub struct MomentMap {
    pub model: ModelSpec,
    chart: ComplexChart,
    blocks: [FeatureBlock; 3],
}

fn tri(l: usize, lp: usize, lpp: usize) -> bool {
    lpp + l >= lp && lpp + lp >= l && lpp <= l + lp
}

// sum_{m,m'} C^{l l' l''}_{m m' m+m'} conj(u^a_m u^b_m') u^c_{m+m'}
fn bispectrum_terms(l: [usize; 3], off: [usize; 3]) -> Vec<Monomial> {
    let [l0, l1, l2] = l.map(|x| x as i64);
    let mut terms = Vec::new();
    for m in -l0..=l0 {
        for mp in -l1..=l1 {
            let mpp = m + mp;
            if mpp.abs() > l2 {
                continue;
            }
            let c = cg(l0, l1, l2, m, mp, mpp);
            if c == 0.0 {
                continue;
            }
            terms.push(Monomial::new(
                c,
                &[
                    (off[0] + (m + l0) as usize, true),
                    (off[1] + (mp + l1) as usize, true),
                    (off[2] + (mpp + l2) as usize, false),
                ],
            ));
        }
    }
    terms
}

fn gram_terms(l: usize, oa: usize, ob: usize) -> Vec<Monomial> {
    (0..2 * l + 1)
        .map(|i| Monomial::new(1.0, &[(oa + i, false), (ob + i, true)]))
        .collect()
}

fn pm1(n: usize) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Projected coupling between Gram invariants at frequencies `k` and `l`.
pub fn q_coupling(k: usize, l: usize) -> f64 {
    let n = k.min(l) as i64;
    let s: f64 = (-n..=n)
        .map(|q| {
            let a = slice_coeff(k, q).unwrap_or(0.0);
            let b = slice_coeff(l, q).unwrap_or(0.0);
            a * a * b * b
        })
        .sum();
    pm1(k + l) * s / ((2 * k + 1) * (2 * l + 1)) as f64
}

/// Projected coupling between bispectrum invariants `(k,k',k'')` and `(l,l',l'')`.
pub fn m_coupling(k: [usize; 3], l: [usize; 3]) -> f64 {
    let p = |a: usize, q: i64| slice_coeff(a, q).unwrap_or(0.0);
    let n0 = k[0].min(l[0]) as i64;
    let n1 = k[1].min(l[1]) as i64;
    let n2 = k[2].min(l[2]) as i64;
    let ki = k.map(|x| x as i64);
    let li = l.map(|x| x as i64);
    let mut s = 0.0;
    for q in -n0..=n0 {
        for qp in -n1..=n1 {
            let qpp = q + qp;
            if qpp.abs() > n2 {
                continue;
            }
            let pk = p(k[0], q) * p(k[1], qp) * p(k[2], qpp);
            let pl = p(l[0], q) * p(l[1], qp) * p(l[2], qpp);
            if pk == 0.0 || pl == 0.0 {
                continue;
            }
            s +=
                cg(ki[0], ki[1], ki[2], q, qp, qpp) * cg(li[0], li[1], li[2], q, qp, qpp) * pk * pl;
        }
    }
    pm1(k[2] + l[2]) * s / ((2 * k[2] + 1) * (2 * l[2] + 1)) as f64
}

impl MomentMap {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let chart = complex_chart(model);
        let mut b = [
            FeatureBlock::empty(1),
            FeatureBlock::empty(2),
            FeatureBlock::empty(3),
        ];
        match model.kind {
            ModelKind::Mra => build_mra(model.bandlimit, &mut b, false),
            ModelKind::MraProjected => build_mra(model.bandlimit, &mut b, true),
            ModelKind::Sphere => build_sphere(model, &mut b),
            ModelKind::Cryo => build_cryo(model, &mut b),
            ModelKind::CryoProjected => build_cryo_projected(model, &mut b),
            ModelKind::Procrustes => {
                let m = model.atoms;
                for a in 0..m {
                    for c in 0..m {
                        let terms = (0..3)
                            .map(|i| Monomial::new(1.0, &[(3 * a + i, false), (3 * c + i, false)]))
                            .collect();
                        b[1].push_diag(Tag::Pair { a, b: c }, Part::Re, terms, 1.0 / 6.0);
                    }
                }
            }
        }
        Ok(MomentMap {
            model: model.clone(),
            chart,
            blocks: b,
        })
    }

    pub fn block(&self, k: usize) -> Result<&FeatureBlock> {
        if !(1..=3).contains(&k) {
            return Err(OrbitError::Domain(format!(
                "series order must be 1..=3, got {k}"
            )));
        }
        Ok(&self.blocks[k - 1])
    }

    fn coords(&self, theta: &[f64]) -> Result<Vec<Complex64>> {
        check_len(self.model.dim(), theta.len())?;
        Ok(self.chart.apply(theta))
    }

    /// Feature vector of order `k`.
    pub fn features(&self, k: usize, theta: &[f64]) -> Result<Vec<f64>> {
        let blk = self.block(k)?;
        let u = self.coords(theta)?;
        Ok(blk.features.iter().map(|f| f.value(&u)).collect())
    }

    /// `d f / d theta`, one row per feature.
    pub fn jacobian(&self, k: usize, theta: &[f64]) -> Result<DMatrix<f64>> {
        let blk = self.block(k)?;
        let u = self.coords(theta)?;
        let d = self.model.dim();
        let mut jac = DMatrix::<f64>::zeros(blk.features.len(), d);
        let mut row = vec![Complex64::new(0.0, 0.0); d];
        for (r, f) in blk.features.iter().enumerate() {
            row.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for t in &f.terms {
                let n = t.len as usize;
                for i in 0..n {
                    let mut partial = t.coef;
                    for j in (0..n).filter(|&j| j != i) {
                        partial *= t.z(j, &u);
                    }
                    let fi = t.f[i];
                    for &(col, c) in &self.chart.rows[fi.idx as usize] {
                        row[col] += partial * if fi.conj { c.conj() } else { c };
                    }
                }
            }
            for (col, z) in row.iter().enumerate() {
                jac[(r, col)] = match f.part {
                    Part::Re => z.re,
                    Part::Im => z.im,
                };
            }
        }
        Ok(jac)
    }

    pub fn s_value(&self, k: usize, theta: &[f64], theta_star: &[f64]) -> Result<f64> {
        let blk = self.block(k)?;
        let a = self.features(k, theta)?;
        let b = self.features(k, theta_star)?;
        let delta: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        Ok(0.5 * blk.quad(&delta))
    }

    pub fn s_gradient(&self, k: usize, theta: &[f64], theta_star: &[f64]) -> Result<Vec<f64>> {
        let blk = self.block(k)?;
        let a = self.features(k, theta)?;
        let b = self.features(k, theta_star)?;
        let delta: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let wd = blk.apply_w(&delta);
        let jac = self.jacobian(k, theta)?;
        Ok((jac.transpose() * nalgebra::DVector::from_vec(wd))
            .iter()
            .copied()
            .collect())
    }

    /// Rows `W^{1/2} J` at `theta`, so that `F^T F` is the Hessian of `s_k` at `theta* = theta`.
    pub fn weighted_factor(&self, k: usize, theta: &[f64]) -> Result<DMatrix<f64>> {
        let blk = self.block(k)?;
        let jac = self.jacobian(k, theta)?;
        let d = self.model.dim();
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(blk.features.len());
        for wb in &blk.weights {
            let sub = DMatrix::from_fn(wb.idx.len(), d, |r, c| jac[(wb.idx[r], c)]);
            if wb.idx.len() == 1 {
                let w = wb.mat[(0, 0)].max(0.0).sqrt();
                rows.push(sub.row(0).iter().map(|x| w * x).collect());
            } else {
                let eig = wb.mat.clone().symmetric_eigen();
                let root = &eig.eigenvectors
                    * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.max(0.0).sqrt()))
                    * eig.eigenvectors.transpose();
                let f = root * sub;
                for r in 0..f.nrows() {
                    rows.push(f.row(r).iter().copied().collect());
                }
            }
        }
        Ok(DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]))
    }

    /// `J^T W J` at `theta*`, the exact Hessian of `s_k` there.
    pub fn hessian_at_star(&self, k: usize, theta_star: &[f64]) -> Result<DMatrix<f64>> {
        let f = self.weighted_factor(k, theta_star)?;
        let h = f.transpose() * f;
        Ok((&h + h.transpose()) * 0.5)
    }
}

fn mra_x(l: usize, lp: usize, lpp: usize) -> Vec<Monomial> {
    vec![Monomial::new(1.0, &[(l, false), (lp, true), (lpp, true)])]
}

fn build_mra(big_l: usize, b: &mut [FeatureBlock; 3], projected: bool) {
    let (w1, w20, w2l, w30) = if projected {
        (2.0, 2.0, 0.5, 4.0 / 3.0)
    } else {
        (1.0, 0.5, 0.25, 1.0 / 24.0)
    };
    b[0].push_diag(
        Tag::Mean { s: 0 },
        Part::Re,
        vec![Monomial::new(1.0, &[(0, false)])],
        w1,
    );
    b[1].push_diag(
        Tag::Cube,
        Part::Re,
        vec![Monomial::new(1.0, &[(0, false), (0, false)])],
        w20,
    );
    for l in 1..=big_l {
        b[1].push_diag(
            Tag::Gram { l, s: 0, sp: 0 },
            Part::Re,
            vec![Monomial::new(1.0, &[(l, false), (l, true)])],
            w2l,
        );
    }
    b[2].push_diag(
        Tag::Cube,
        Part::Re,
        vec![Monomial::new(1.0, &[(0, false), (0, false), (0, false)])],
        w30,
    );
    if projected {
        for l in 1..=big_l {
            b[2].push_diag(
                Tag::MeanPower { l },
                Part::Re,
                vec![Monomial::new(1.0, &[(0, false), (l, false), (l, true)])],
                1.0,
            );
        }
        for l in 2..=big_l {
            for lp in 1..l {
                b[2].push_diag(
                    Tag::Triple { l, lp, lpp: l - lp },
                    Part::Re,
                    mra_x(l, lp, l - lp),
                    0.25,
                );
            }
        }
    } else {
        for l in 0..=big_l {
            for lp in 0..=l {
                let tag = Tag::Triple { l, lp, lpp: l - lp };
                b[2].push_diag(tag, Part::Re, mra_x(l, lp, l - lp), 0.125);
                b[2].push_diag(tag, Part::Im, mra_x(l, lp, l - lp), 0.125);
            }
        }
    }
}

/// Prefactor of the sphere `s_3` sum over `|B - B*|^2 / (2l''+1)`.
pub const SPHERE_S3_PREFACTOR: f64 = 1.0 / 12.0;

fn build_sphere(model: &ModelSpec, b: &mut [FeatureBlock; 3]) {
    let big_l = model.bandlimit;
    let off = |l: usize| l * l;
    b[0].push_diag(
        Tag::Mean { s: 0 },
        Part::Re,
        vec![Monomial::new(1.0, &[(0, false)])],
        1.0,
    );
    for l in 0..=big_l {
        b[1].push_diag(
            Tag::Gram { l, s: 0, sp: 0 },
            Part::Re,
            gram_terms(l, off(l), off(l)),
            0.5 / (2 * l + 1) as f64,
        );
    }
    for l in 0..=big_l {
        for lp in 0..=big_l {
            for lpp in 0..=big_l {
                if !tri(l, lp, lpp) {
                    continue;
                }
                let part = if (l + lp + lpp) % 2 == 0 {
                    Part::Re
                } else {
                    Part::Im
                };
                let terms = bispectrum_terms([l, lp, lpp], [off(l), off(lp), off(lpp)]);
                let w = 2.0 * SPHERE_S3_PREFACTOR / (2 * lpp + 1) as f64;
                b[2].push_diag(
                    Tag::Bispectrum {
                        l: [l, lp, lpp],
                        s: [0; 3],
                    },
                    part,
                    terms,
                    w,
                );
            }
        }
    }
}

fn cryo_common(
    model: &ModelSpec,
    b: &mut [FeatureBlock; 3],
    w1: f64,
) -> (Vec<(usize, usize, usize)>, Vec<[usize; 6]>) {
    let big_l = model.bandlimit;
    let off = |l: usize, s: usize| model.block_offset(l, s).expect("block in layout");
    for s in 0..model.radial[0] {
        b[0].push_diag(
            Tag::Mean { s },
            Part::Re,
            vec![Monomial::new(1.0, &[(off(0, s), false)])],
            w1,
        );
    }
    let mut grams = Vec::new();
    for l in 0..=big_l {
        for s in 0..model.radial[l] {
            for sp in 0..model.radial[l] {
                grams.push((l, s, sp));
                b[1].features.push(Feature {
                    tag: Tag::Gram { l, s, sp },
                    part: Part::Re,
                    terms: gram_terms(l, off(l, s), off(l, sp)),
                });
            }
        }
    }
    let mut triples = Vec::new();
    for l in 0..=big_l {
        for lp in 0..=big_l {
            for lpp in 0..=big_l {
                if !tri(l, lp, lpp) {
                    continue;
                }
                for s in 0..model.radial[l] {
                    for sp in 0..model.radial[lp] {
                        for spp in 0..model.radial[lpp] {
                            triples.push([l, lp, lpp, s, sp, spp]);
                            b[2].features.push(Feature {
                                tag: Tag::Bispectrum {
                                    l: [l, lp, lpp],
                                    s: [s, sp, spp],
                                },
                                part: Part::Re,
                                terms: bispectrum_terms(
                                    [l, lp, lpp],
                                    [off(l, s), off(lp, sp), off(lpp, spp)],
                                ),
                            });
                        }
                    }
                }
            }
        }
    }
    (grams, triples)
}

fn build_cryo(model: &ModelSpec, b: &mut [FeatureBlock; 3]) {
    let (grams, triples) = cryo_common(model, b, 1.0);
    for (i, &(l, _, _)) in grams.iter().enumerate() {
        b[1].weights.push(WeightBlock {
            idx: vec![i],
            mat: DMatrix::from_element(1, 1, 0.5 / (2 * l + 1) as f64),
        });
    }
    for (i, t) in triples.iter().enumerate() {
        let w = 1.0 / (6.0 * (2 * t[2] + 1) as f64);
        b[2].weights.push(WeightBlock {
            idx: vec![i],
            mat: DMatrix::from_element(1, 1, w),
        });
    }
}

fn build_cryo_projected(model: &ModelSpec, b: &mut [FeatureBlock; 3]) {
    let p00 = slice_coeff(0, 0).expect("p00");
    let (grams, triples) = cryo_common(model, b, p00 * p00);
    // group Gram features by (s, s') and couple across l
    let mut by_pair: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
    for (i, &(_, s, sp)) in grams.iter().enumerate() {
        by_pair.entry((s, sp)).or_default().push(i);
    }
    for idx in by_pair.into_values() {
        let mat = DMatrix::from_fn(idx.len(), idx.len(), |r, c| {
            0.5 * q_coupling(grams[idx[r]].0, grams[idx[c]].0)
        });
        b[1].weights.push(WeightBlock { idx, mat });
    }
    let mut by_s: std::collections::BTreeMap<[usize; 3], Vec<usize>> = Default::default();
    for (i, t) in triples.iter().enumerate() {
        by_s.entry([t[3], t[4], t[5]]).or_default().push(i);
    }
    let mut cache: std::collections::HashMap<([usize; 3], [usize; 3]), f64> = Default::default();
    for idx in by_s.into_values() {
        let ls: Vec<[usize; 3]> = idx
            .iter()
            .map(|&i| [triples[i][0], triples[i][1], triples[i][2]])
            .collect();
        let mat = DMatrix::from_fn(idx.len(), idx.len(), |r, c| {
            *cache
                .entry((ls[r], ls[c]))
                .or_insert_with(|| m_coupling(ls[r], ls[c]))
                / 6.0
        });
        b[2].weights.push(WeightBlock { idx, mat });
    }
}

/// Value (and optional gradient) of one series term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub k: usize,
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

/// Closed-form `s_k(theta)` relative to `theta_star`, with its gradient.
pub fn s_closed(
    model: &ModelSpec,
    theta: &[f64],
    theta_star: &[f64],
    k: usize,
) -> Result<SeriesTerm> {
    let map = MomentMap::new(model)?;
    Ok(SeriesTerm {
        k,
        value: map.s_value(k, theta, theta_star)?,
        gradient: Some(map.s_gradient(k, theta, theta_star)?),
    })
}

/// Hessian of `s_k` at its minimizer `theta_star`.
pub fn s_hessian_at_star(model: &ModelSpec, theta_star: &[f64], k: usize) -> Result<DMatrix<f64>> {
    MomentMap::new(model)?.hessian_at_star(k, theta_star)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `s_k` from quadrature over the rule: single expectation for unprojected
/// kinds, double expectation for projected ones.
pub fn s_oracle(
    model: &ModelSpec,
    theta: &[f64],
    theta_star: &[f64],
    k: usize,
    rule: &QuadratureRule,
) -> Result<SeriesTerm> {
    if !(1..=3).contains(&k) {
        return Err(OrbitError::Domain(format!(
            "series order must be 1..=3, got {k}"
        )));
    }
    check_len(model.dim(), theta.len())?;
    check_len(model.dim(), theta_star.len())?;
    check_rule(model, rule, k)?;
    let ki = k as i32;
    let mut acc = 0.0;
    if model.kind.is_projected() {
        let mut ys = Vec::with_capacity(rule.len());
        let mut ystar = Vec::with_capacity(rule.len());
        for g in &rule.nodes {
            ys.push(observe(model, &act(model, g, theta)?)?);
            ystar.push(observe(model, &act(model, g, theta_star)?)?);
        }
        for (i, wi) in rule.weights.iter().enumerate() {
            let mut inner = 0.0;
            for (j, wj) in rule.weights.iter().enumerate() {
                inner += wj
                    * (dot(&ys[i], &ys[j]).powi(ki) - 2.0 * dot(&ys[i], &ystar[j]).powi(ki)
                        + dot(&ystar[i], &ystar[j]).powi(ki));
            }
            acc += wi * inner;
        }
    } else {
        for (g, w) in rule.nodes.iter().zip(&rule.weights) {
            let gt = act(model, g, theta)?;
            let gs = act(model, g, theta_star)?;
            acc += w
                * (dot(theta, &gt).powi(ki) - 2.0 * dot(theta, &gs).powi(ki)
                    + dot(theta_star, &gs).powi(ki));
        }
    }
    Ok(SeriesTerm {
        k,
        value: acc / (2.0 * factorial(k)),
        gradient: None,
    })
}

/// Index of one bispectrum entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BispectrumKey {
    pub l: [usize; 3],
    pub s: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BispectrumVector {
    pub keys: Vec<BispectrumKey>,
    pub values: Vec<Complex64>,
}

impl BispectrumVector {
    /// CSV with columns `l,lp,lpp,s,sp,spp,re,im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["l", "lp", "lpp", "s", "sp", "spp", "re", "im"])?;
        for (k, v) in self.keys.iter().zip(&self.values) {
            let mut rec: Vec<String> = k.l.iter().chain(&k.s).map(|x| x.to_string()).collect();
            rec.push(format!("{:.16e}", v.re));
            rec.push(format!("{:.16e}", v.im));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Degree-3 invariants: CG-weighted triples for SO(3) kinds, Fourier
/// triples `u_l conj(u_l' u_l'')` with `l = l' + l''` for MRA kinds.
pub fn bispectrum(model: &ModelSpec, theta: &[f64]) -> Result<BispectrumVector> {
    let map = MomentMap::new(model)?;
    let u = map.coords(theta)?;
    let mut keys = Vec::new();
    let mut values = Vec::new();
    let mut last: Option<Tag> = None;
    for f in &map.blocks[2].features {
        if Some(f.tag) == last {
            continue;
        }
        last = Some(f.tag);
        let key = match f.tag {
            Tag::Bispectrum { l, s } => BispectrumKey { l, s },
            Tag::Triple { l, lp, lpp } => BispectrumKey {
                l: [l, lp, lpp],
                s: [0; 3],
            },
            _ => continue,
        };
        keys.push(key);
        values.push(f.complex_value(&u));
    }
    if model.kind == ModelKind::Procrustes {
        return Err(OrbitError::Domain("procrustes has no bispectrum".into()));
    }
    Ok(BispectrumVector { keys, values })
}
