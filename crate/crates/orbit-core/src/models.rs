//! Model catalog: coefficient layouts, projections, moment tensors and the
//! predicted dimension decompositions.
//!
//! Layout for the sphere and cryo kinds is l-major, then radial index s, then
//! m ascending from -l to l. MRA is `(theta0, theta1^(1), theta2^(1), ...)`.
//! Procrustes is atom-major, `theta[3a + i]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OrbitError, Result};
use crate::group::{act, block_from_complex, block_to_complex, QuadratureRule};
use crate::harmonics::slice_coeff;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mra,
    MraProjected,
    Sphere,
    Cryo,
    CryoProjected,
    Procrustes,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Mra,
        ModelKind::MraProjected,
        ModelKind::Sphere,
        ModelKind::Cryo,
        ModelKind::CryoProjected,
        ModelKind::Procrustes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mra => "mra",
            ModelKind::MraProjected => "mra-projected",
            ModelKind::Sphere => "sphere",
            ModelKind::Cryo => "cryo",
            ModelKind::CryoProjected => "cryo-projected",
            ModelKind::Procrustes => "procrustes",
        }
    }

    pub fn is_projected(self) -> bool {
        matches!(self, ModelKind::MraProjected | ModelKind::CryoProjected)
    }

    pub fn is_so2(self) -> bool {
        matches!(self, ModelKind::Mra | ModelKind::MraProjected)
    }

    fn is_cryo(self) -> bool {
        matches!(self, ModelKind::Cryo | ModelKind::CryoProjected)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = OrbitError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| OrbitError::InvalidModel(format!("unknown model kind '{s}'")))
    }
}

/// One `(l, s)` block of a sphere/cryo layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub l: usize,
    pub s: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelDoc", try_from = "ModelDoc")]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub bandlimit: usize,
    /// radial bandlimits `S_0..S_L` (cryo kinds), all ones for the sphere
    pub radial: Vec<usize>,
    /// atom count (Procrustes)
    pub atoms: usize,
    layout: Vec<Block>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    kind: ModelKind,
    #[serde(rename = "L", default)]
    bandlimit: usize,
    #[serde(rename = "S", default)]
    radial: Vec<usize>,
    #[serde(default)]
    m: usize,
}

impl From<ModelSpec> for ModelDoc {
    fn from(m: ModelSpec) -> Self {
        let radial = if m.kind.is_cryo() {
            m.radial
        } else {
            Vec::new()
        };
        ModelDoc {
            kind: m.kind,
            bandlimit: m.bandlimit,
            radial,
            m: m.atoms,
        }
    }
}

impl TryFrom<ModelDoc> for ModelSpec {
    type Error = OrbitError;

    fn try_from(d: ModelDoc) -> Result<Self> {
        ModelSpec::new(d.kind, d.bandlimit, &d.radial, d.m)
    }
}

/// Build a model from its kind name.
pub fn make_model(
    kind: &str,
    bandlimit: usize,
    radial: &[usize],
    atoms: usize,
) -> Result<ModelSpec> {
    ModelSpec::new(kind.parse()?, bandlimit, radial, atoms)
}

impl ModelSpec {
    /// A single radial bandlimit is broadcast to every `l`.
    pub fn new(kind: ModelKind, bandlimit: usize, radial: &[usize], atoms: usize) -> Result<Self> {
        let invalid = |msg: String| Err(OrbitError::InvalidModel(msg));
        let mut spec = ModelSpec {
            kind,
            bandlimit,
            radial: Vec::new(),
            atoms: 0,
            layout: Vec::new(),
            dim: 0,
        };
        match kind {
            ModelKind::Mra | ModelKind::MraProjected => {
                if bandlimit < 1 {
                    return invalid("MRA needs L >= 1".into());
                }
                spec.dim = 2 * bandlimit + 1;
            }
            ModelKind::Sphere => {
                if bandlimit < 1 {
                    return invalid("sphere needs L >= 1".into());
                }
                spec.radial = vec![1; bandlimit + 1];
            }
            ModelKind::Cryo | ModelKind::CryoProjected => {
                spec.radial = match radial.len() {
                    1 => vec![radial[0]; bandlimit + 1],
                    n if n == bandlimit + 1 => radial.to_vec(),
                    n => {
                        return invalid(format!(
                            "need {} radial bandlimits, got {n}",
                            bandlimit + 1
                        ))
                    }
                };
                if spec.radial.iter().any(|&s| s == 0) {
                    return invalid("radial bandlimits must be >= 1".into());
                }
            }
            ModelKind::Procrustes => {
                if atoms < 3 {
                    return invalid(format!("procrustes needs m >= 3, got {atoms}"));
                }
                spec.bandlimit = 1;
                spec.atoms = atoms;
                spec.dim = 3 * atoms;
            }
        }
        if !spec.radial.is_empty() {
            let mut off = 0;
            for (l, &sl) in spec.radial.iter().enumerate() {
                for s in 0..sl {
                    spec.layout.push(Block { l, s, offset: off });
                    off += 2 * l + 1;
                }
            }
            spec.dim = off;
        }
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of an observation.
    pub fn obs_dim(&self) -> usize {
        match self.kind {
            ModelKind::MraProjected => self.bandlimit + 1,
            ModelKind::CryoProjected => self.max_radial() * (2 * self.bandlimit + 1),
            _ => self.dim,
        }
    }

    pub fn max_radial(&self) -> usize {
        self.radial.iter().copied().max().unwrap_or(0)
    }

    /// `(l, offset)` for every `(l, s)` block, in layout order.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layout.iter().map(|b| (b.l, b.offset))
    }

    pub fn layout(&self) -> &[Block] {
        &self.layout
    }

    /// Offset of coefficient `(l, s, m)`.
    pub fn index(&self, l: usize, s: usize, m: i64) -> Option<usize> {
        if m.unsigned_abs() as usize > l {
            return None;
        }
        self.layout
            .iter()
            .find(|b| b.l == l && b.s == s)
            .map(|b| (b.offset as i64 + m + l as i64) as usize)
    }

    /// Offset of block `(l, s)`.
    pub fn block_offset(&self, l: usize, s: usize) -> Option<usize> {
        self.layout
            .iter()
            .find(|b| b.l == l && b.s == s)
            .map(|b| b.offset)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Apply the projection of a projected kind.
pub fn project(model: &ModelSpec, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(model.dim(), theta.len())?;
    match model.kind {
        ModelKind::MraProjected => {
            let r2 = std::f64::consts::SQRT_2;
            let mut y = vec![r2 * theta[0]];
            y.extend((1..=model.bandlimit).map(|l| r2 * theta[2 * l - 1]));
            Ok(y)
        }
        ModelKind::CryoProjected => {
            let big_l = model.bandlimit;
            let width = 2 * big_l + 1;
            let mut y = Vec::with_capacity(model.obs_dim());
            for s in 0..model.max_radial() {
                let mut ut = vec![Complex64::new(0.0, 0.0); width];
                for b in model.layout().iter().filter(|b| b.s == s) {
                    let u = block_to_complex(b.l, &theta[b.offset..b.offset + 2 * b.l + 1], true);
                    let li = b.l as i64;
                    for m in -li..=li {
                        let p = slice_coeff(b.l, m)?;
                        if p != 0.0 {
                            ut[(m + big_l as i64) as usize] += u[(m + li) as usize] * p;
                        }
                    }
                }
                y.extend(block_from_complex(big_l, &ut, false));
            }
            Ok(y)
        }
        _ => Err(OrbitError::Domain(format!(
            "{} has no projection",
            model.kind
        ))),
    }
}

/// Observation map: the projection for projected kinds, the identity otherwise.
pub fn observe(model: &ModelSpec, theta: &[f64]) -> Result<Vec<f64>> {
    if model.kind.is_projected() {
        project(model, theta)
    } else {
        check_len(model.dim(), theta.len())?;
        Ok(theta.to_vec())
    }
}

/// Dense matrix of [`observe`].
pub fn observation_matrix(model: &ModelSpec) -> Result<DMatrix<f64>> {
    let d = model.dim();
    let mut m = DMatrix::<f64>::zeros(model.obs_dim(), d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        m.column_mut(j).copy_from_slice(&observe(model, &e)?);
        e[j] = 0.0;
    }
    Ok(m)
}

/// A vectorized order-k moment tensor of length `p^k`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentStack {
    pub k: usize,
    pub p: usize,
    pub data: Vec<f64>,
}

impl MomentStack {
    pub fn get(&self, idx: &[usize]) -> f64 {
        let flat = idx.iter().fold(0, |acc, &i| acc * self.p + i);
        self.data[flat]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Degree the rule must integrate exactly for order-k moments.
pub fn required_degree(model: &ModelSpec, k: usize) -> usize {
    k * model.bandlimit
}

pub(crate) fn check_rule(model: &ModelSpec, rule: &QuadratureRule, k: usize) -> Result<()> {
    let need = required_degree(model, k);
    let have = rule.degree();
    if have < need {
        return Err(OrbitError::RuleDegree { need, have });
    }
    Ok(())
}

/// Materialization cap for full order-3 tensors.
pub const MAX_TENSOR_DIM: usize = 64;

/// Quadrature estimate of `E[(P g theta)^{(x)k}]`.
pub fn moment_tensor(
    model: &ModelSpec,
    theta: &[f64],
    k: usize,
    rule: &QuadratureRule,
) -> Result<MomentStack> {
    if !(1..=3).contains(&k) {
        return Err(OrbitError::Domain(format!(
            "moment order must be 1..=3, got {k}"
        )));
    }
    check_len(model.dim(), theta.len())?;
    check_rule(model, rule, k)?;
    let p = model.obs_dim();
    if k == 3 && p > MAX_TENSOR_DIM {
        return Err(OrbitError::Domain(format!(
            "order-3 tensor of dimension {p} exceeds cap {MAX_TENSOR_DIM}"
        )));
    }
    let size = p.pow(k as u32);
    let partials: Vec<Result<Vec<f64>>> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .chunks(64)
        .map(|chunk| {
            let mut acc = vec![0.0; size];
            for (g, &w) in chunk {
                let y = observe(model, &act(model, g, theta)?)?;
                outer_accumulate(&mut acc, &y, k, w);
            }
            Ok(acc)
        })
        .collect();
    let mut data = vec![0.0; size];
    for part in partials {
        for (a, b) in data.iter_mut().zip(part?) {
            *a += b;
        }
    }
    Ok(MomentStack { k, p, data })
}

fn outer_accumulate(acc: &mut [f64], y: &[f64], k: usize, w: f64) {
    let p = y.len();
    match k {
        1 => acc.iter_mut().zip(y).for_each(|(a, v)| *a += w * v),
        2 => {
            for i in 0..p {
                let wi = w * y[i];
                for j in 0..p {
                    acc[i * p + j] += wi * y[j];
                }
            }
        }
        _ => {
            for i in 0..p {
                for j in 0..p {
                    let wij = w * y[i] * y[j];
                    let row = (i * p + j) * p;
                    for l in 0..p {
                        acc[row + l] += wij * y[l];
                    }
                }
            }
        }
    }
}

/// Dimension decomposition `d = d_0 + d_1 + d_2 + d_3` and the order `K`
/// after which the ladder is flat.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimLedger {
    pub d0: usize,
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub order: usize,
}

impl DimLedger {
    pub fn total(&self) -> usize {
        self.d0 + self.d1 + self.d2 + self.d3
    }

    /// Cumulative ranks `(d1, d1+d2, d1+d2+d3)`.
    pub fn ladder(&self) -> [usize; 3] {
        [self.d1, self.d1 + self.d2, self.d1 + self.d2 + self.d3]
    }

    /// Nonzero tier sizes in order.
    pub fn tiers(&self) -> Vec<usize> {
        [self.d1, self.d2, self.d3]
            .into_iter()
            .take(self.order)
            .collect()
    }
}

/// Generic rank of the pairwise Gram map of `S` vectors in dimension `2l+1`.
pub fn gram_trdeg(l: usize, s: usize) -> usize {
    if s < 2 * l + 1 {
        s * (s + 1) / 2
    } else {
        (2 * l + 1) * (s - l)
    }
}

pub fn predicted_dims(model: &ModelSpec) -> Result<DimLedger> {
    let d = model.dim();
    let big_l = model.bandlimit;
    let hyp = |m: String| Err(OrbitError::Hypothesis(m));
    let ledger = match model.kind {
        ModelKind::Mra | ModelKind::MraProjected => {
            if big_l == 1 {
                DimLedger {
                    d0: 1,
                    d1: 1,
                    d2: 1,
                    d3: 0,
                    order: 2,
                }
            } else {
                DimLedger {
                    d0: 1,
                    d1: 1,
                    d2: big_l,
                    d3: big_l - 1,
                    order: 3,
                }
            }
        }
        ModelKind::Sphere => {
            if big_l < 10 {
                return hyp(format!(
                    "sphere dimensions are only known for L >= 10, got L = {big_l}"
                ));
            }
            DimLedger {
                d0: 3,
                d1: 1,
                d2: big_l,
                d3: big_l * (big_l + 1) - 3,
                order: 3,
            }
        }
        ModelKind::Cryo | ModelKind::CryoProjected => {
            let min_s = if model.kind == ModelKind::Cryo { 2 } else { 4 };
            if big_l < 1 {
                return hyp(format!("{} dimensions need L >= 1", model.kind));
            }
            if let Some((l, s)) = model.radial.iter().enumerate().find(|(_, &s)| s < min_s) {
                return hyp(format!(
                    "{} dimensions need every S_l >= {min_s}, got S_{l} = {s}",
                    model.kind
                ));
            }
            let d1 = model.radial[0];
            let tr2: usize = model
                .radial
                .iter()
                .enumerate()
                .map(|(l, &s)| gram_trdeg(l, s))
                .sum();
            let d3 = d - 3 - tr2;
            DimLedger {
                d0: 3,
                d1,
                d2: tr2 - d1,
                d3,
                order: if d3 == 0 { 2 } else { 3 },
            }
        }
        ModelKind::Procrustes => DimLedger {
            d0: 3,
            d1: 0,
            d2: d - 3,
            d3: 0,
            order: 2,
        },
    };
    debug_assert_eq!(ledger.total(), d);
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{o3_rule, so2_rule, so3_rule, GroupElement, SeedStream};
    use crate::harmonics::Euler;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn randn(seed: u64, n: usize) -> Vec<f64> {
        let mut r = SeedStream::new(seed).rng();
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    #[test]
    fn dims() {
        assert_eq!(make_model("mra", 5, &[], 0).unwrap().dim(), 11);
        assert_eq!(make_model("cryo", 2, &[2, 2, 2], 0).unwrap().dim(), 18);
        assert_eq!(make_model("procrustes", 0, &[], 5).unwrap().dim(), 15);
        assert_eq!(make_model("sphere", 3, &[], 0).unwrap().dim(), 16);
        let cp = make_model("cryo_projected", 2, &[4, 3, 4], 0).unwrap();
        assert_eq!(cp.obs_dim(), 20);
        assert_eq!(make_model("mra-projected", 4, &[], 0).unwrap().obs_dim(), 5);
        assert!(make_model("mra", 0, &[], 0).is_err());
        assert!(make_model("procrustes", 0, &[], 2).is_err());
        assert!(make_model("cryo", 2, &[2, 2], 0).is_err());
        assert!(make_model("tori", 2, &[], 0).is_err());
        assert_eq!(
            make_model("cryo", 2, &[3], 0).unwrap().radial,
            vec![3, 3, 3]
        );
    }

    #[test]
    fn layout_order() {
        let m = make_model("cryo", 1, &[2, 2], 0).unwrap();
        assert_eq!(m.index(0, 1, 0), Some(1));
        assert_eq!(m.index(1, 0, -1), Some(2));
        assert_eq!(m.index(1, 1, 1), Some(7));
        assert_eq!(m.index(1, 1, 2), None);
    }

    #[test]
    fn json_round_trip() {
        for m in [
            make_model("cryo", 2, &[2, 3, 4], 0).unwrap(),
            make_model("procrustes", 1, &[], 4).unwrap(),
            make_model("mra-projected", 3, &[], 0).unwrap(),
        ] {
            let back = ModelSpec::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
        }
        let m = ModelSpec::from_json(r#"{"kind":"sphere","L":10}"#).unwrap();
        assert_eq!(m.dim(), 121);
    }

    #[test]
    fn predicted() {
        let p = |k: &str, l: usize, s: &[usize], m: usize| {
            predicted_dims(&make_model(k, l, s, m).unwrap())
        };
        let mra = p("mra", 5, &[], 0).unwrap();
        assert_eq!((mra.d0, mra.d1, mra.d2, mra.d3), (1, 1, 5, 4));
        let sph = p("sphere", 10, &[], 0).unwrap();
        assert_eq!((sph.d0, sph.d1, sph.d2, sph.d3), (3, 1, 10, 107));
        assert_eq!(sph.ladder()[2], 118);
        let c = p("cryo", 2, &[2, 2, 2], 0).unwrap();
        assert_eq!((c.d0, c.d1, c.d2, c.d3), (3, 2, 6, 7));
        let cp = p("cryo-projected", 1, &[4, 4], 0).unwrap();
        assert_eq!(cp.ladder(), [4, 13, 13]);
        assert_eq!(cp.order, 2);
        assert!(matches!(
            p("sphere", 9, &[], 0),
            Err(OrbitError::Hypothesis(_))
        ));
        assert!(matches!(
            p("cryo-projected", 1, &[2, 2], 0),
            Err(OrbitError::Hypothesis(_))
        ));
        assert!(matches!(
            p("cryo", 2, &[2, 1, 2], 0),
            Err(OrbitError::Hypothesis(_))
        ));
        assert_eq!(p("mra", 1, &[], 0).unwrap().order, 2);
    }

    #[test]
    fn ledgers_sum_to_dim() {
        for l in 1..12 {
            for k in ["mra", "mra-projected"] {
                let m = make_model(k, l, &[], 0).unwrap();
                assert_eq!(predicted_dims(&m).unwrap().total(), m.dim());
            }
        }
        for l in 10..14 {
            let m = make_model("sphere", l, &[], 0).unwrap();
            assert_eq!(predicted_dims(&m).unwrap().total(), m.dim());
        }
        for l in 1..4 {
            for s in 4..8 {
                for k in ["cryo", "cryo-projected"] {
                    let m = make_model(k, l, &[s], 0).unwrap();
                    assert_eq!(predicted_dims(&m).unwrap().total(), m.dim());
                }
            }
        }
        for a in 3..9 {
            let m = make_model("procrustes", 1, &[], a).unwrap();
            assert_eq!(predicted_dims(&m).unwrap().total(), m.dim());
        }
    }

    #[test]
    fn projections() {
        let m = make_model("mra-projected", 3, &[], 0).unwrap();
        let mut e = vec![0.0; m.dim()];
        e[2] = 1.0;
        assert!(project(&m, &e).unwrap().iter().all(|v| *v == 0.0));
        assert!(project(&make_model("cryo", 1, &[2, 2], 0).unwrap(), &[0.0; 8]).is_err());

        // odd-parity components never reach the image
        let cp = make_model("cryo-projected", 2, &[1, 1, 1], 0).unwrap();
        let t = randn(3, cp.dim());
        let y = project(&cp, &t).unwrap();
        let mut t2 = t.clone();
        for b in cp.layout() {
            let mut u = block_to_complex(b.l, &t[b.offset..b.offset + 2 * b.l + 1], true);
            let li = b.l as i64;
            for m in -li..=li {
                if (li + m) % 2 != 0 {
                    u[(m + li) as usize] = Complex64::new(0.0, 0.0);
                }
            }
            t2[b.offset..b.offset + 2 * b.l + 1]
                .copy_from_slice(&block_from_complex(b.l, &u, true));
        }
        assert_ne!(t, t2);
        let y2 = project(&cp, &t2).unwrap();
        for (a, b) in y.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn procrustes_tensors() {
        let m = make_model("procrustes", 1, &[], 4).unwrap();
        let rule = o3_rule(4, 4, 4).unwrap();
        let t = randn(5, m.dim());
        let t1 = moment_tensor(&m, &t, 1, &rule).unwrap();
        assert!(t1.norm() < 1e-12);
        let t2 = moment_tensor(&m, &t, 2, &rule).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let gab: f64 = (0..3).map(|i| t[3 * a + i] * t[3 * b + i]).sum();
                for i in 0..3 {
                    for j in 0..3 {
                        let want = if i == j { gab / 3.0 } else { 0.0 };
                        assert!((t2.get(&[3 * a + i, 3 * b + j]) - want).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn mra_mean_and_invariance() {
        let m = make_model("mra", 3, &[], 0).unwrap();
        let rule = so2_rule(10).unwrap();
        let t = randn(6, m.dim());
        let t1 = moment_tensor(&m, &t, 1, &rule).unwrap();
        assert!((t1.data[0] - t[0]).abs() < 1e-14);
        assert!(t1.data[1..].iter().all(|v| v.abs() < 1e-13));
        let g = GroupElement::So2(0.377);
        let gt = act(&m, &g, &t).unwrap();
        for k in 1..=3 {
            let a = moment_tensor(&m, &t, k, &rule).unwrap();
            let b = moment_tensor(&m, &gt, k, &rule).unwrap();
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-9);
            }
            let sym_err = match k {
                2 => (0..7)
                    .flat_map(|i| (0..7).map(move |j| (i, j)))
                    .map(|(i, j)| (a.get(&[i, j]) - a.get(&[j, i])).abs())
                    .fold(0.0, f64::max),
                _ => 0.0,
            };
            assert!(sym_err < 1e-10);
        }
        assert!(matches!(
            moment_tensor(&m, &t, 3, &so2_rule(6).unwrap()),
            Err(OrbitError::RuleDegree { .. })
        ));
    }

    #[test]
    fn sphere_invariance_and_projected_samples() {
        let m = make_model("sphere", 2, &[], 0).unwrap();
        let rule = so3_rule(7, 7, 7).unwrap();
        let t = randn(7, m.dim());
        let gt = act(&m, &GroupElement::So3(Euler::new(0.3, 1.1, 2.5)), &t).unwrap();
        for k in 1..=3 {
            let a = moment_tensor(&m, &t, k, &rule).unwrap();
            let b = moment_tensor(&m, &gt, k, &rule).unwrap();
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        let cp = make_model("cryo-projected", 1, &[2, 1], 0).unwrap();
        let rule = so3_rule(4, 4, 4).unwrap();
        let t = randn(8, cp.dim());
        let t2 = moment_tensor(&cp, &t, 2, &rule).unwrap();
        let mut direct = vec![0.0; cp.obs_dim().pow(2)];
        for (g, w) in rule.nodes.iter().zip(&rule.weights) {
            let y = project(&cp, &act(&cp, g, &t).unwrap()).unwrap();
            for i in 0..y.len() {
                for j in 0..y.len() {
                    direct[i * y.len() + j] += w * y[i] * y[j];
                }
            }
        }
        for (x, y) in t2.data.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
