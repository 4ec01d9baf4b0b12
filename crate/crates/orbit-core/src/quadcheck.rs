//! Residuals of the Haar moment identities of Wigner matrices under a
//! quadrature rule: mean, pairwise orthogonality and the triple-product
//! identity with Clebsch-Gordan coefficients.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::group::{GroupElement, GroupKind, QuadratureRule};
use crate::harmonics::{cg, wigner_d, wigner_small_d, Euler, WignerBlock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identity {
    Mean,
    Pair,
    Triple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub identity: Identity,
    /// largest degree involved
    pub degree: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadCheck {
    pub group: GroupKind,
    pub rows: Vec<ResidualRow>,
}

impl QuadCheck {
    pub fn max(&self, id: Identity) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.identity == id)
            .map(|r| r.residual)
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["identity", "degree", "residual"])?;
        for r in &self.rows {
            let id = match r.identity {
                Identity::Mean => "mean",
                Identity::Pair => "pair",
                Identity::Triple => "triple",
            };
            w.write_record([
                id.to_string(),
                r.degree.to_string(),
                format!("{:.16e}", r.residual),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact Haar value of `E[D^l_qm D^l'_q'm']`.
pub fn pair_exact(l: usize, q: i64, m: i64, lp: usize, qp: i64, mp: i64) -> f64 {
    if l == lp && q == -qp && m == -mp {
        let s = if (m + q).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        };
        s / (2 * l + 1) as f64
    } else {
        0.0
    }
}

/// Exact Haar value of `E[D^l_qm D^l'_q'm' D^l''_q''m'']`.
pub fn triple_exact(l: [usize; 3], q: [i64; 3], m: [i64; 3]) -> f64 {
    let [a, b, c] = l;
    if q[0] + q[1] != -q[2] || m[0] + m[1] != -m[2] || c < a.abs_diff(b) || c > a + b {
        return 0.0;
    }
    let s = if (m[2] + q[2]).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    };
    let (a, b, c) = (a as i64, b as i64, c as i64);
    s / (2 * c + 1) as f64 * cg(a, b, c, q[0], q[1], -q[2]) * cg(a, b, c, m[0], m[1], -m[2])
}

fn range(l: usize) -> std::ops::RangeInclusive<i64> {
    -(l as i64)..=(l as i64)
}

/// Rule expectation of products of Wigner entries. Product grids factor into
/// exact alpha/gamma character sums times a beta sum; other rules are summed
/// node by node (rotation part only for O(3)).
struct Averager<'a> {
    rule: &'a QuadratureRule,
    lmax: usize,
    /// per-node blocks for the generic path
    blocks: Vec<Vec<WignerBlock>>,
    /// per-beta small-d tables for product grids
    small: Vec<Vec<Vec<f64>>>,
    beta_w: Vec<f64>,
}

impl<'a> Averager<'a> {
    fn new(rule: &'a QuadratureRule, lmax: usize) -> Self {
        match &rule.grid {
            Some(g) => {
                let raw: f64 = g.beta_weights.iter().sum();
                let beta_w = g.beta_weights.iter().map(|w| w / raw).collect();
                let small = g
                    .betas
                    .iter()
                    .map(|b| (0..=lmax).map(|l| wigner_small_d(l, *b)).collect())
                    .collect();
                Averager {
                    rule,
                    lmax,
                    blocks: Vec::new(),
                    small,
                    beta_w,
                }
            }
            None => {
                let blocks = rule
                    .nodes
                    .iter()
                    .map(|g| {
                        let e = match g {
                            GroupElement::So3(e) => *e,
                            GroupElement::O3 { rot, .. } => *rot,
                            GroupElement::So2(_) => Euler::IDENTITY,
                        };
                        (0..=lmax).map(|l| wigner_d(l, e)).collect()
                    })
                    .collect();
                Averager {
                    rule,
                    lmax,
                    blocks,
                    small: Vec::new(),
                    beta_w: Vec::new(),
                }
            }
        }
    }

    fn char_avg(angles: &[f64], k: i64) -> Complex64 {
        let n = angles.len() as f64;
        angles
            .iter()
            .map(|a| Complex64::from_polar(1.0, -(k as f64) * a))
            .sum::<Complex64>()
            / n
    }

    /// `E[prod_j D^{l_j}_{q_j m_j}]`
    fn avg(&self, l: &[usize], q: &[i64], m: &[i64]) -> Complex64 {
        debug_assert!(l.iter().all(|x| *x <= self.lmax));
        match &self.rule.grid {
            Some(g) => {
                let ksum: i64 = q.iter().sum();
                let msum: i64 = m.iter().sum();
                let a = Self::char_avg(&g.alphas, ksum);
                let c = Self::char_avg(&g.gammas, msum);
                let mut b = 0.0;
                for (t, w) in self.small.iter().zip(&self.beta_w) {
                    let mut p = *w;
                    for j in 0..l.len() {
                        let n = 2 * l[j] + 1;
                        let li = l[j] as i64;
                        p *= t[l[j]][((q[j] + li) as usize) * n + (m[j] + li) as usize];
                    }
                    b += p;
                }
                a * b * c
            }
            None => {
                let total: f64 = self.rule.weights.iter().sum();
                let mut s = Complex64::new(0.0, 0.0);
                for (bl, w) in self.blocks.iter().zip(&self.rule.weights) {
                    let mut p = Complex64::new(*w, 0.0);
                    for j in 0..l.len() {
                        p *= bl[l[j]].get(q[j], m[j]);
                    }
                    s += p;
                }
                s / total
            }
        }
    }
}

/// Max residuals of the three identities, by largest degree, for degrees up
/// to `l_mean`, `l_pair` and `l_triple`. SO(2) rules are checked against the
/// character identities `E[e^{i(k1+..)t}] = 1{sum = 0}`.
pub fn identity_residuals(
    rule: &QuadratureRule,
    l_mean: usize,
    l_pair: usize,
    l_triple: usize,
) -> Result<QuadCheck> {
    if rule.is_empty() {
        return Err(OrbitError::Domain("empty rule".into()));
    }
    if rule.group == GroupKind::So2 {
        return so2_residuals(rule, l_mean, l_pair, l_triple);
    }
    let lmax = l_mean.max(l_pair).max(l_triple);
    let av = Averager::new(rule, lmax);
    let mut rows = Vec::new();
    for l in 0..=l_mean {
        let mut worst: f64 = 0.0;
        for q in range(l) {
            for m in range(l) {
                let want = if l == 0 { 1.0 } else { 0.0 };
                worst = worst.max((av.avg(&[l], &[q], &[m]) - want).norm());
            }
        }
        rows.push(ResidualRow {
            identity: Identity::Mean,
            degree: l,
            residual: worst,
        });
    }
    let mut pair = vec![0.0f64; l_pair + 1];
    for l in 0..=l_pair {
        for lp in 0..=l {
            for q in range(l) {
                for m in range(l) {
                    for qp in range(lp) {
                        for mp in range(lp) {
                            let got = av.avg(&[l, lp], &[q, qp], &[m, mp]);
                            let r = (got - pair_exact(l, q, m, lp, qp, mp)).norm();
                            pair[l] = pair[l].max(r);
                        }
                    }
                }
            }
        }
    }
    rows.extend(pair.into_iter().enumerate().map(|(d, r)| ResidualRow {
        identity: Identity::Pair,
        degree: d,
        residual: r,
    }));
    let mut triple = vec![0.0f64; l_triple + 1];
    for a in 0..=l_triple {
        for b in 0..=l_triple {
            for c in 0..=l_triple {
                let deg = a.max(b).max(c);
                for q0 in range(a) {
                    for q1 in range(b) {
                        for q2 in range(c) {
                            for m0 in range(a) {
                                for m1 in range(b) {
                                    for m2 in range(c) {
                                        let got = av.avg(&[a, b, c], &[q0, q1, q2], &[m0, m1, m2]);
                                        let want =
                                            triple_exact([a, b, c], [q0, q1, q2], [m0, m1, m2]);
                                        triple[deg] = triple[deg].max((got - want).norm());
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rows.extend(triple.into_iter().enumerate().map(|(d, r)| ResidualRow {
        identity: Identity::Triple,
        degree: d,
        residual: r,
    }));
    Ok(QuadCheck {
        group: rule.group,
        rows,
    })
}

fn so2_residuals(
    rule: &QuadratureRule,
    l_mean: usize,
    l_pair: usize,
    l_triple: usize,
) -> Result<QuadCheck> {
    let total: f64 = rule.weights.iter().sum();
    let turns: Vec<f64> = rule
        .nodes
        .iter()
        .map(|g| match g {
            GroupElement::So2(t) => Ok(*t),
            _ => Err(OrbitError::Domain("mixed rule".into())),
        })
        .collect::<Result<_>>()?;
    let avg = |k: i64| -> Complex64 {
        turns
            .iter()
            .zip(&rule.weights)
            .map(|(t, w)| Complex64::from_polar(*w, std::f64::consts::TAU * k as f64 * t))
            .sum::<Complex64>()
            / total
    };
    let delta = |k: i64| if k == 0 { 1.0 } else { 0.0 };
    let mut rows = Vec::new();
    let li = |l: usize| l as i64;
    for l in 0..=l_mean {
        let r = range(l)
            .filter(|k| k.unsigned_abs() as usize == l)
            .map(|k| (avg(k) - delta(k)).norm())
            .fold(0.0, f64::max);
        rows.push(ResidualRow {
            identity: Identity::Mean,
            degree: l,
            residual: r,
        });
    }
    for l in 0..=l_pair {
        let mut r: f64 = 0.0;
        for a in [-li(l), li(l)] {
            for b in range(l) {
                r = r.max((avg(a + b) - delta(a + b)).norm());
            }
        }
        rows.push(ResidualRow {
            identity: Identity::Pair,
            degree: l,
            residual: r,
        });
    }
    for l in 0..=l_triple {
        let mut r: f64 = 0.0;
        for a in [-li(l), li(l)] {
            for b in range(l) {
                for c in range(l) {
                    r = r.max((avg(a + b + c) - delta(a + b + c)).norm());
                }
            }
        }
        rows.push(ResidualRow {
            identity: Identity::Triple,
            degree: l,
            residual: r,
        });
    }
    Ok(QuadCheck {
        group: rule.group,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{o3_rule, so2_rule, so3_rule};

    #[test]
    fn so2_roots_of_unity() {
        let q = identity_residuals(&so2_rule(64).unwrap(), 20, 20, 20).unwrap();
        for r in &q.rows {
            assert!(r.residual <= 1e-12, "{r:?}");
        }
        let coarse = identity_residuals(&so2_rule(8).unwrap(), 20, 0, 0).unwrap();
        assert!(coarse.max(Identity::Mean) > 0.5);
    }

    #[test]
    fn product_path_matches_generic_path() {
        let rule = so3_rule(6, 6, 6).unwrap();
        let mut flat = rule.clone();
        flat.grid = None;
        let a = identity_residuals(&rule, 3, 2, 1).unwrap();
        let b = identity_residuals(&flat, 3, 2, 1).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert!((x.residual - y.residual).abs() < 1e-12);
        }
    }

    #[test]
    fn fine_rule_passes_coarse_rule_fails() {
        let q = identity_residuals(&so3_rule(12, 12, 12).unwrap(), 5, 3, 2).unwrap();
        assert!(q.max(Identity::Mean) <= 1e-12);
        assert!(q.max(Identity::Pair) <= 1e-12);
        assert!(q.max(Identity::Triple) <= 1e-12);
        let bad = identity_residuals(&so3_rule(2, 2, 2).unwrap(), 8, 0, 0).unwrap();
        assert!(bad.max(Identity::Mean) > 1e-2);
        let o3 = identity_residuals(&o3_rule(8, 8, 8).unwrap(), 3, 2, 1).unwrap();
        assert!(o3.max(Identity::Triple) <= 1e-12);
    }

    #[test]
    fn exact_values() {
        assert_eq!(pair_exact(1, 1, 0, 1, -1, 0), -1.0 / 3.0);
        // E[D^0 D^l D^l] reduces to the pair identity
        for q in -2..=2 {
            for m in -2..=2 {
                let t = triple_exact([0, 2, 2], [0, q, -q], [0, m, -m]);
                assert!((t - pair_exact(2, q, m, 2, -q, -m)).abs() < 1e-14);
            }
        }
    }
}
