//! Group elements, Haar quadrature on SO(2)/SO(3)/O(3), seeded sampling, the
//! real/complex coefficient transforms and the action on coefficient vectors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OrbitError, Result};
use crate::harmonics::{assoc_legendre, wigner_d, Euler, WignerBlock};
use crate::models::{ModelKind, ModelSpec};

const TAU: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    So2,
    So3,
    O3,
}

/// A rotation. SO(2) angles live in `[0,1)`; `O3` pairs a rotation with an
/// optional point reflection `-I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroupElement {
    So2(f64),
    So3(Euler),
    O3 { rot: Euler, reflect: bool },
}

/// `Rz(alpha) Ry(beta) Rz(gamma)`.
pub fn rotation_matrix(e: Euler) -> Matrix3<f64> {
    let rz = |t: f64| Matrix3::new(t.cos(), -t.sin(), 0.0, t.sin(), t.cos(), 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(
        e.beta.cos(),
        0.0,
        e.beta.sin(),
        0.0,
        1.0,
        0.0,
        -e.beta.sin(),
        0.0,
        e.beta.cos(),
    );
    rz(e.alpha) * ry * rz(e.gamma)
}

/// Inverse of [`rotation_matrix`], with the gimbal-lock cases pinned to `gamma = 0`.
pub fn euler_from_matrix(r: &Matrix3<f64>) -> Euler {
    let beta = r[(2, 2)].clamp(-1.0, 1.0).acos();
    let s = beta.sin();
    if s > 1e-12 {
        Euler::new(
            r[(1, 2)].atan2(r[(0, 2)]),
            beta,
            r[(2, 1)].atan2(-r[(2, 0)]),
        )
        .canonical()
    } else if r[(2, 2)] > 0.0 {
        Euler::new(r[(1, 0)].atan2(r[(0, 0)]), 0.0, 0.0).canonical()
    } else {
        Euler::new((-r[(1, 0)]).atan2(r[(1, 1)]), PI, 0.0).canonical()
    }
}

impl Euler {
    /// alpha, gamma in `[0, 2pi)`, beta in `[0, pi]`.
    pub fn canonical(self) -> Euler {
        let mut beta = self.beta.rem_euclid(TAU);
        let (mut alpha, mut gamma) = (self.alpha, self.gamma);
        if beta > PI {
            beta = TAU - beta;
            alpha += PI;
            gamma += PI;
        }
        Euler::new(alpha.rem_euclid(TAU), beta, gamma.rem_euclid(TAU))
    }
}

impl GroupElement {
    pub fn kind(&self) -> GroupKind {
        match self {
            GroupElement::So2(_) => GroupKind::So2,
            GroupElement::So3(_) => GroupKind::So3,
            GroupElement::O3 { .. } => GroupKind::O3,
        }
    }

    pub fn identity(kind: GroupKind) -> Self {
        match kind {
            GroupKind::So2 => GroupElement::So2(0.0),
            GroupKind::So3 => GroupElement::So3(Euler::IDENTITY),
            GroupKind::O3 => GroupElement::O3 {
                rot: Euler::IDENTITY,
                reflect: false,
            },
        }
    }

    pub fn canonical(self) -> Self {
        match self {
            GroupElement::So2(t) => GroupElement::So2(t.rem_euclid(1.0)),
            GroupElement::So3(e) => GroupElement::So3(e.canonical()),
            GroupElement::O3 { rot, reflect } => GroupElement::O3 {
                rot: rot.canonical(),
                reflect,
            },
        }
    }

    /// Orthogonal 3x3 matrix of an SO(3)/O(3) element.
    pub fn matrix3(&self) -> Option<Matrix3<f64>> {
        match *self {
            GroupElement::So2(_) => None,
            GroupElement::So3(e) => Some(rotation_matrix(e)),
            GroupElement::O3 { rot, reflect } => {
                let r = rotation_matrix(rot);
                Some(if reflect { -r } else { r })
            }
        }
    }

    /// `self o other`, i.e. apply `other` first.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        match (*self, *other) {
            (GroupElement::So2(a), GroupElement::So2(b)) => {
                Ok(GroupElement::So2((a + b).rem_euclid(1.0)))
            }
            (GroupElement::So3(a), GroupElement::So3(b)) => Ok(GroupElement::So3(
                euler_from_matrix(&(rotation_matrix(a) * rotation_matrix(b))),
            )),
            (
                GroupElement::O3 {
                    rot: a,
                    reflect: ra,
                },
                GroupElement::O3 {
                    rot: b,
                    reflect: rb,
                },
            ) => Ok(GroupElement::O3 {
                rot: euler_from_matrix(&(rotation_matrix(a) * rotation_matrix(b))),
                reflect: ra ^ rb,
            }),
            _ => Err(OrbitError::Domain(
                "cannot compose elements of different groups".into(),
            )),
        }
    }
}

/// Tensor-product structure kept alongside the flattened SO(3) nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub beta_weights: Vec<f64>,
    pub gammas: Vec<f64>,
}

/// Nodes and weights approximating Haar measure.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub group: GroupKind,
    pub nodes: Vec<GroupElement>,
    pub weights: Vec<f64>,
    /// Residual of the beta-weight system (0 for SO(2)).
    pub residual: f64,
    pub grid: Option<ProductGrid>,
}

/// `n` equispaced angles with weight `1/n`.
pub fn so2_rule(n: usize) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(OrbitError::Domain(format!(
            "so2 rule needs n >= 2, got {n}"
        )));
    }
    Ok(QuadratureRule {
        group: GroupKind::So2,
        nodes: (0..n)
            .map(|i| GroupElement::So2(i as f64 / n as f64))
            .collect(),
        weights: vec![1.0 / n as f64; n],
        residual: 0.0,
        grid: None,
    })
}

/// Weights on midpoint beta nodes solving `sum_i w_i d^l_00(beta_i) = 1{l=0}`
/// for `l < n` in least squares. `d^l_00(beta) = P_l(cos beta)`.
fn beta_weights(betas: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = betas.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for l in 0..n {
        for (i, &b) in betas.iter().enumerate() {
            a[(l, i)] = assoc_legendre(l, 0, b.cos())?;
        }
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[0] = 1.0;
    let svd = a.clone().svd(true, true);
    let w = svd.solve(&rhs, 1e-14).map_err(|e| OrbitError::Solver {
        residual: f64::NAN,
        msg: e.to_string(),
    })?;
    let residual = (&a * &w - &rhs).norm();
    if !residual.is_finite() || residual > 1e-8 {
        return Err(OrbitError::Solver {
            residual,
            msg: "beta-weight system not solved".into(),
        });
    }
    let neg: f64 = w.iter().filter(|x| **x < 0.0).map(|x| -x).sum();
    if neg > 1e-8 {
        return Err(OrbitError::Solver {
            residual,
            msg: format!("negative beta mass {neg:e}"),
        });
    }
    Ok((w.iter().cloned().collect(), residual))
}

/// Product rule on SO(3): uniform alpha and gamma, midpoint beta nodes with
/// weights from the Legendre moment system.
pub fn so3_rule(n_alpha: usize, n_beta: usize, n_gamma: usize) -> Result<QuadratureRule> {
    if n_alpha < 2 || n_beta < 2 || n_gamma < 2 {
        return Err(OrbitError::Domain(format!(
            "so3 rule needs counts >= 2, got {n_alpha},{n_beta},{n_gamma}"
        )));
    }
    let alphas: Vec<f64> = (0..n_alpha)
        .map(|i| TAU * i as f64 / n_alpha as f64)
        .collect();
    let gammas: Vec<f64> = (0..n_gamma)
        .map(|i| TAU * i as f64 / n_gamma as f64)
        .collect();
    let betas: Vec<f64> = (0..n_beta)
        .map(|i| PI * (i as f64 + 0.5) / n_beta as f64)
        .collect();
    let (bw, residual) = beta_weights(&betas)?;
    let mut nodes = Vec::with_capacity(n_alpha * n_beta * n_gamma);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for &a in &alphas {
        for (j, &b) in betas.iter().enumerate() {
            for &c in &gammas {
                nodes.push(GroupElement::So3(Euler::new(a, b, c)));
                weights.push(bw[j] / (n_alpha * n_gamma) as f64);
            }
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(QuadratureRule {
        group: GroupKind::So3,
        nodes,
        weights,
        residual,
        grid: Some(ProductGrid {
            alphas,
            betas,
            beta_weights: bw,
            gammas,
        }),
    })
}

/// SO(3) rule doubled by the point reflection.
pub fn o3_rule(n_alpha: usize, n_beta: usize, n_gamma: usize) -> Result<QuadratureRule> {
    let base = so3_rule(n_alpha, n_beta, n_gamma)?;
    let mut nodes = Vec::with_capacity(2 * base.nodes.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for reflect in [false, true] {
        for (g, w) in base.nodes.iter().zip(&base.weights) {
            if let GroupElement::So3(rot) = *g {
                nodes.push(GroupElement::O3 { rot, reflect });
                weights.push(0.5 * w);
            }
        }
    }
    Ok(QuadratureRule {
        group: GroupKind::O3,
        nodes,
        weights,
        residual: base.residual,
        grid: base.grid,
    })
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest frequency integrated exactly.
    pub fn degree(&self) -> usize {
        match (&self.group, &self.grid) {
            (GroupKind::So2, _) => self.nodes.len().saturating_sub(1),
            (_, Some(g)) => g
                .alphas
                .len()
                .min(g.betas.len())
                .min(g.gammas.len())
                .saturating_sub(1),
            _ => 0,
        }
    }

    /// Single-node rule at the identity.
    pub fn identity(kind: GroupKind) -> Self {
        QuadratureRule {
            group: kind,
            nodes: vec![GroupElement::identity(kind)],
            weights: vec![1.0],
            residual: 0.0,
            grid: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = RuleDoc {
            group: self.group,
            nodes: self
                .nodes
                .iter()
                .map(|g| match *g {
                    GroupElement::So2(t) => vec![t],
                    GroupElement::So3(e) => vec![e.alpha, e.beta, e.gamma],
                    GroupElement::O3 { rot, reflect } => {
                        vec![
                            rot.alpha,
                            rot.beta,
                            rot.gamma,
                            if reflect { -1.0 } else { 1.0 },
                        ]
                    }
                })
                .collect(),
            weights: self.weights.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: RuleDoc = serde_json::from_str(s)?;
        check_len(doc.nodes.len(), doc.weights.len())?;
        let mut nodes = Vec::with_capacity(doc.nodes.len());
        for v in &doc.nodes {
            let g = match (doc.group, v.len()) {
                (GroupKind::So2, 1) => GroupElement::So2(v[0]),
                (GroupKind::So3, 3) => GroupElement::So3(Euler::new(v[0], v[1], v[2])),
                (GroupKind::O3, 4) => GroupElement::O3 {
                    rot: Euler::new(v[0], v[1], v[2]),
                    reflect: v[3] < 0.0,
                },
                _ => {
                    return Err(OrbitError::Domain(format!(
                        "bad node {v:?} for {:?}",
                        doc.group
                    )))
                }
            };
            nodes.push(g);
        }
        Ok(QuadratureRule {
            group: doc.group,
            nodes,
            weights: doc.weights,
            residual: f64::NAN,
            grid: None,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RuleDoc {
    group: GroupKind,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// Seed plus stream id for the counter-based generator; distinct streams are
/// independent, which keeps chunked parallel work reproducible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    pub seed: u64,
    pub stream: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { seed, stream: 0 }
    }

    pub fn split(&self, stream: u64) -> Self {
        SeedStream {
            seed: self.seed,
            stream,
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut r = ChaCha20Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }
}

/// Draws node indices with probability equal to the weights.
pub struct RuleSampler {
    dist: WeightedIndex<f64>,
}

impl RuleSampler {
    pub fn new(rule: &QuadratureRule) -> Result<Self> {
        let dist = WeightedIndex::new(rule.weights.iter().map(|w| w.max(0.0)))
            .map_err(|e| OrbitError::Domain(format!("bad rule weights: {e}")))?;
        Ok(RuleSampler { dist })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

/// One draw from the rule's discrete distribution.
pub fn sample_rotation<R: Rng + ?Sized>(
    rule: &QuadratureRule,
    rng: &mut R,
) -> Result<GroupElement> {
    if rule.is_empty() {
        return Err(OrbitError::Domain("empty rule".into()));
    }
    let s = RuleSampler::new(rule)?;
    Ok(rule.nodes[s.sample(rng)])
}

fn sign(n: i64) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn i_pow(l: i64) -> Complex64 {
    match l.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

// Real block (m ascending) to complex block. `cryo` selects the Fourier-side
// convention with u_m = (-1)^{l+m} conj(u_{-m}).
pub(crate) fn block_to_complex(l: usize, theta: &[f64], cryo: bool) -> Vec<Complex64> {
    let li = l as i64;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = vec![Complex64::new(0.0, 0.0); 2 * l + 1];
    for m in -li..=li {
        let idx = (m + li) as usize;
        let tp = theta[(m.abs() + li) as usize];
        let tn = theta[(-m.abs() + li) as usize];
        u[idx] = if m > 0 {
            let s = if cryo { sign(li + m) } else { sign(m) };
            Complex64::new(tp, -tn) * (s * h)
        } else if m == 0 {
            if cryo {
                i_pow(li) * theta[l]
            } else {
                Complex64::new(theta[l], 0.0)
            }
        } else {
            Complex64::new(tp, tn) * h
        };
    }
    u
}

pub(crate) fn block_from_complex(l: usize, u: &[Complex64], cryo: bool) -> Vec<f64> {
    let li = l as i64;
    let r2 = std::f64::consts::SQRT_2;
    let mut t = vec![0.0; 2 * l + 1];
    t[l] = if cryo {
        (u[l] * i_pow(-li)).re
    } else {
        u[l].re
    };
    for m in 1..=li {
        let un = u[(li - m) as usize];
        t[(li + m) as usize] = r2 * un.re;
        t[(li - m) as usize] = r2 * un.im;
    }
    t
}

/// Sparse linear map `u = V* theta`: entry `(a, j, c)` contributes `c theta_j` to `u_a`.
#[derive(Clone, Debug)]
pub struct ComplexChart {
    pub n_u: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
    /// per complex index, the `(j, c)` pairs feeding it
    pub rows: Vec<Vec<(usize, Complex64)>>,
}

impl ComplexChart {
    fn from_entries(n_u: usize, entries: Vec<(usize, usize, Complex64)>) -> Self {
        let mut rows = vec![Vec::new(); n_u];
        for &(a, j, c) in &entries {
            rows[a].push((j, c));
        }
        ComplexChart { n_u, entries, rows }
    }

    pub fn apply(&self, theta: &[f64]) -> Vec<Complex64> {
        let mut u = vec![Complex64::new(0.0, 0.0); self.n_u];
        for &(a, j, c) in &self.entries {
            u[a] += c * theta[j];
        }
        u
    }
}

/// The complex chart of a model, derived by probing [`to_complex`] with unit vectors.
pub fn complex_chart(model: &ModelSpec) -> ComplexChart {
    let d = model.dim();
    let mut entries = Vec::new();
    let mut e = vec![0.0; d];
    let mut n_u = 0;
    for j in 0..d {
        e[j] = 1.0;
        let u = to_complex(model, &e).expect("unit vector has model length");
        n_u = u.len();
        for (a, c) in u.iter().enumerate() {
            if c.norm() > 0.0 {
                entries.push((a, j, *c));
            }
        }
        e[j] = 0.0;
    }
    ComplexChart::from_entries(n_u, entries)
}

/// Complex coefficients of `theta`.
///
/// MRA kinds give `(u_0, ..., u_L)` with `u_l = theta_1 + i theta_2`;
/// sphere and cryo kinds give one entry per real coefficient, in the same
/// `(l, s, m)` layout; Procrustes is its own (real) chart.
pub fn to_complex(model: &ModelSpec, theta: &[f64]) -> Result<Vec<Complex64>> {
    check_len(model.dim(), theta.len())?;
    Ok(match model.kind {
        ModelKind::Mra | ModelKind::MraProjected => {
            let mut u = vec![Complex64::new(theta[0], 0.0)];
            for l in 1..=model.bandlimit {
                u.push(Complex64::new(theta[2 * l - 1], theta[2 * l]));
            }
            u
        }
        ModelKind::Sphere | ModelKind::Cryo | ModelKind::CryoProjected => {
            let cryo = model.kind != ModelKind::Sphere;
            let mut u = Vec::with_capacity(theta.len());
            for (l, off) in model.blocks() {
                u.extend(block_to_complex(l, &theta[off..off + 2 * l + 1], cryo));
            }
            u
        }
        ModelKind::Procrustes => theta.iter().map(|&t| Complex64::new(t, 0.0)).collect(),
    })
}

/// Inverse of [`to_complex`] (assumes the model's conjugation symmetry).
pub fn from_complex(model: &ModelSpec, u: &[Complex64]) -> Result<Vec<f64>> {
    Ok(match model.kind {
        ModelKind::Mra | ModelKind::MraProjected => {
            check_len(model.bandlimit + 1, u.len())?;
            let mut t = vec![u[0].re];
            for ul in &u[1..] {
                t.push(ul.re);
                t.push(ul.im);
            }
            t
        }
        ModelKind::Sphere | ModelKind::Cryo | ModelKind::CryoProjected => {
            check_len(model.dim(), u.len())?;
            let cryo = model.kind != ModelKind::Sphere;
            let mut t = Vec::with_capacity(u.len());
            for (l, off) in model.blocks() {
                t.extend(block_from_complex(l, &u[off..off + 2 * l + 1], cryo));
            }
            t
        }
        ModelKind::Procrustes => {
            check_len(model.dim(), u.len())?;
            u.iter().map(|c| c.re).collect()
        }
    })
}

/// Wigner blocks `D^(0..=lmax)(g)`.
pub fn wigner_blocks(lmax: usize, e: Euler) -> Vec<WignerBlock> {
    (0..=lmax).map(|l| wigner_d(l, e)).collect()
}

/// Rotate `theta` by `g`.
pub fn act(model: &ModelSpec, g: &GroupElement, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(model.dim(), theta.len())?;
    let mismatch = || {
        OrbitError::Domain(format!(
            "{:?} element cannot act on a {} model",
            g.kind(),
            model.kind
        ))
    };
    match model.kind {
        ModelKind::Mra | ModelKind::MraProjected => {
            let GroupElement::So2(t) = *g else {
                return Err(mismatch());
            };
            let mut out = theta.to_vec();
            for l in 1..=model.bandlimit {
                let (c, s) = ((TAU * l as f64 * t).cos(), (TAU * l as f64 * t).sin());
                let (a, b) = (theta[2 * l - 1], theta[2 * l]);
                out[2 * l - 1] = c * a + s * b;
                out[2 * l] = -s * a + c * b;
            }
            Ok(out)
        }
        ModelKind::Sphere | ModelKind::Cryo | ModelKind::CryoProjected => {
            let GroupElement::So3(e) = *g else {
                return Err(mismatch());
            };
            let blocks = wigner_blocks(model.bandlimit, e);
            Ok(act_with_blocks(model, &blocks, theta))
        }
        ModelKind::Procrustes => {
            let r = match g {
                GroupElement::So2(_) => return Err(mismatch()),
                other => other.matrix3().expect("3d element"),
            };
            let mut out = vec![0.0; theta.len()];
            for a in 0..model.atoms {
                let v = nalgebra::Vector3::new(theta[3 * a], theta[3 * a + 1], theta[3 * a + 2]);
                let w = r * v;
                out[3 * a..3 * a + 3].copy_from_slice(w.as_slice());
            }
            Ok(out)
        }
    }
}

/// SO(3) action with precomputed Wigner blocks.
pub fn act_with_blocks(model: &ModelSpec, blocks: &[WignerBlock], theta: &[f64]) -> Vec<f64> {
    let cryo = model.kind != ModelKind::Sphere;
    let mut out = vec![0.0; theta.len()];
    for (l, off) in model.blocks() {
        let u = block_to_complex(l, &theta[off..off + 2 * l + 1], cryo);
        let v = blocks[l].apply(&u);
        out[off..off + 2 * l + 1].copy_from_slice(&block_from_complex(l, &v, cryo));
    }
    out
}

/// Dense `d x d` matrix of `act(g, .)`.
pub fn action_matrix(model: &ModelSpec, g: &GroupElement) -> Result<DMatrix<f64>> {
    let d = model.dim();
    let mut m = DMatrix::<f64>::zeros(d, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = act(model, g, &e)?;
        m.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    Ok(m)
}
