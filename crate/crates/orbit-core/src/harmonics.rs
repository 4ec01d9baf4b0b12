//! Special functions on the sphere and on SO(3).
//!
//! Legendre functions carry no Condon-Shortley phase; the `(-1)^m` lives in
//! [`sph_harm`] instead, so `y_lm` agrees with the usual physics harmonics.
//! Wigner matrices use z-y-z Euler angles, `D_qm = e^{-iqa} d_qm(b) e^{-imc}`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};

const MAX_FACT: usize = 400;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0.0; MAX_FACT + 1];
        for i in 1..=MAX_FACT {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    })
}

/// `ln(n!)`; panics past the table size (n > 400).
pub fn ln_factorial(n: i64) -> f64 {
    assert!(
        n >= 0 && (n as usize) <= MAX_FACT,
        "factorial argument {n} out of range"
    );
    ln_fact_table()[n as usize]
}

fn parity(n: i64) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Neumaier compensated sum.
pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Associated Legendre function `P_lm(x)` without the Condon-Shortley phase.
pub fn assoc_legendre(l: usize, m: i64, x: f64) -> Result<f64> {
    let li = l as i64;
    if m.abs() > li {
        return Err(OrbitError::Domain(format!("|m|={} exceeds l={l}", m.abs())));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(OrbitError::Domain(format!("x={x} outside [-1,1]")));
    }
    let ma = m.unsigned_abs() as usize;
    let p = legendre_nonneg(l, ma, x);
    if m >= 0 {
        Ok(p)
    } else {
        let ratio = (ln_factorial(li - ma as i64) - ln_factorial(li + ma as i64)).exp();
        Ok(parity(ma as i64) * ratio * p)
    }
}

// upward recurrence in l at fixed m >= 0, seeded by (2m-1)!! (1-x^2)^{m/2}
fn legendre_nonneg(l: usize, m: usize, x: f64) -> f64 {
    let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= fact * somx2;
        fact += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pm2 = pmm;
    for ll in (m + 2)..=l {
        let p = (x * (2 * ll - 1) as f64 * pm1 - (ll + m - 1) as f64 * pm2) / (ll - m) as f64;
        pm2 = pm1;
        pm1 = p;
    }
    pm1
}

/// Closed form of `P_lm(0)`; zero unless `l+m` is even.
pub fn assoc_legendre_at_zero(l: usize, m: i64) -> f64 {
    let li = l as i64;
    if (li + m).rem_euclid(2) != 0 || m.abs() > li {
        return 0.0;
    }
    let k = (li + m) / 2;
    let ln_binom = ln_factorial(li) - ln_factorial(k) - ln_factorial(li - k);
    let mag = (ln_binom + ln_factorial(li + m) - ln_factorial(li) - li as f64 * 2f64.ln()).exp();
    parity((li - m) / 2) * mag
}

/// Complex spherical harmonic `y_lm(phi1, phi2)`, orthonormal on the sphere.
pub fn sph_harm(l: usize, m: i64, phi1: f64, phi2: f64) -> Result<Complex64> {
    let li = l as i64;
    if m.abs() > li {
        return Err(OrbitError::Domain(format!("|m|={} exceeds l={l}", m.abs())));
    }
    let norm = ((2 * l + 1) as f64 / (4.0 * PI)
        * (ln_factorial(li - m) - ln_factorial(li + m)).exp())
    .sqrt();
    let p = assoc_legendre(l, m, phi1.cos().clamp(-1.0, 1.0))?;
    Ok(Complex64::from_polar(parity(m) * norm * p, m as f64 * phi2))
}

/// Index of a Clebsch-Gordan coefficient `<l,m; lp,mp | lpp,mpp>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CGIndex {
    pub l: i64,
    pub lp: i64,
    pub lpp: i64,
    pub m: i64,
    pub mp: i64,
    pub mpp: i64,
}

impl CGIndex {
    pub fn new(l: i64, lp: i64, lpp: i64, m: i64, mp: i64, mpp: i64) -> Self {
        CGIndex {
            l,
            lp,
            lpp,
            m,
            mp,
            mpp,
        }
    }

    /// Range and triangle conditions, plus `mpp = m + mp`.
    pub fn in_domain(&self) -> bool {
        let CGIndex {
            l,
            lp,
            lpp,
            m,
            mp,
            mpp,
        } = *self;
        l >= 0
            && lp >= 0
            && lpp >= 0
            && m.abs() <= l
            && mp.abs() <= lp
            && mpp.abs() <= lpp
            && (l - lp).abs() <= lpp
            && lpp <= l + lp
            && mpp == m + mp
    }
}

fn binom_u128(n: i64, k: i64) -> Option<u128> {
    if k < 0 || k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(acc)
}

// sum_k (-1)^k C(a,k) C(b, l-m-k) C(c, lp+mp-k), exactly when it fits in i128
fn cg_integer_sum(a: i64, b: i64, c: i64, x: i64, y: i64, kmin: i64, kmax: i64) -> Option<i128> {
    let mut acc: i128 = 0;
    for k in kmin..=kmax {
        let t = binom_u128(a, k)?
            .checked_mul(binom_u128(b, x - k)?)?
            .checked_mul(binom_u128(c, y - k)?)?;
        let t = i128::try_from(t).ok()?;
        acc = if k % 2 == 0 {
            acc.checked_add(t)?
        } else {
            acc.checked_sub(t)?
        };
    }
    Some(acc)
}

/// Clebsch-Gordan coefficient by the factorial (Racah) sum. Zero outside the domain.
///
/// The alternating sum is regrouped into binomials and evaluated in exact
/// integer arithmetic whenever it fits, so structural zeros come out as 0.0.
pub fn clebsch_gordan(idx: CGIndex) -> f64 {
    if !idx.in_domain() {
        return 0.0;
    }
    let CGIndex {
        l,
        lp,
        lpp,
        m,
        mp,
        mpp,
    } = idx;
    let f = ln_factorial;
    let a = l + lp - lpp;
    let b = l + lpp - lp;
    let c = lp + lpp - l;
    let ln_pref = 0.5
        * (((2 * lpp + 1) as f64).ln() + f(a) + f(b) + f(c) - f(l + lp + lpp + 1)
            + f(l - m)
            + f(l + m)
            + f(lp - mp)
            + f(lp + mp)
            + f(lpp - mpp)
            + f(lpp + mpp));
    let kmin = 0.max(lp - lpp - m).max(l - lpp + mp);
    let kmax = a.min(l - m).min(lp + mp);
    if kmin > kmax {
        return 0.0;
    }
    if let Some(s) = cg_integer_sum(a, b, c, l - m, lp + mp, kmin, kmax) {
        if s == 0 {
            return 0.0;
        }
        let sign = if s < 0 { -1.0 } else { 1.0 };
        let ln_s = (s.unsigned_abs() as f64).ln();
        return sign * (ln_pref + ln_s - f(a) - f(b) - f(c)).exp();
    }
    let terms = (kmin..=kmax).map(|k| {
        let den = f(k)
            + f(a - k)
            + f(l - m - k)
            + f(lp + mp - k)
            + f(lpp - lp + m + k)
            + f(lpp - l - mp + k);
        parity(k) * (ln_pref - den).exp()
    });
    neumaier_sum(terms)
}

/// Shorthand for [`clebsch_gordan`].
pub fn cg(l: i64, lp: i64, lpp: i64, m: i64, mp: i64, mpp: i64) -> f64 {
    clebsch_gordan(CGIndex::new(l, lp, lpp, m, mp, mpp))
}

/// Sufficient condition for a nonzero coefficient. A `true` guarantees
/// nonvanishing; `false` says nothing.
pub fn cg_nonvanishing(idx: CGIndex) -> bool {
    if !idx.in_domain() {
        return false;
    }
    let CGIndex {
        l,
        lp,
        lpp,
        m,
        mp,
        mpp,
    } = idx;
    let (am, amp, ampp) = (m.abs(), mp.abs(), mpp.abs());
    l >= lp
        && l >= lpp + 1
        && (amp == lp - 1 || amp == lp)
        && (ampp == lpp - 1 || ampp == lpp)
        && !(am == l - 1 && amp == lp - 1 && ampp == lpp - 1 && lp == lpp)
}

/// Fourier-slice coefficient: `y_lm(pi/2, .) = p_lm * e^{im.}/sqrt(2 pi)`.
pub fn slice_coeff(l: usize, m: i64) -> Result<f64> {
    let li = l as i64;
    if m.abs() > li {
        return Err(OrbitError::Domain(format!("|m|={} exceeds l={l}", m.abs())));
    }
    if (li + m).rem_euclid(2) != 0 {
        return Ok(0.0);
    }
    let k = (li + m) / 2;
    let ln_binom = ln_factorial(li) - ln_factorial(k) - ln_factorial(li - k);
    let ln_mag = 0.5 * ((2 * l + 1) as f64 / 2.0).ln() - li as f64 * 2f64.ln() - ln_factorial(li)
        + ln_binom
        + 0.5 * (ln_factorial(li - m) + ln_factorial(li + m));
    Ok(parity(k) * ln_mag.exp())
}

/// Euler angles, z-y-z convention: `R = Rz(alpha) Ry(beta) Rz(gamma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Euler {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Euler {
    pub const IDENTITY: Euler = Euler {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Euler { alpha, beta, gamma }
    }
}

/// Wigner small-d matrix, row-major over `(q, m)` in `-l..=l`.
pub fn wigner_small_d(l: usize, beta: f64) -> Vec<f64> {
    let n = 2 * l + 1;
    let li = l as i64;
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let mut out = vec![0.0; n * n];
    for q in -li..=li {
        for m in -li..=li {
            let ln_pref = 0.5
                * (ln_factorial(li + q)
                    + ln_factorial(li - q)
                    + ln_factorial(li + m)
                    + ln_factorial(li - m));
            let kmin = 0.max(m - q);
            let kmax = (li + m).min(li - q);
            let mut acc = 0.0;
            for k in kmin..=kmax {
                let den = ln_factorial(li + m - k)
                    + ln_factorial(k)
                    + ln_factorial(q - m + k)
                    + ln_factorial(li - q - k);
                let pc = (2 * li + m - q - 2 * k) as i32;
                let ps = (q - m + 2 * k) as i32;
                acc += parity(q - m + k) * (ln_pref - den).exp() * c.powi(pc) * s.powi(ps);
            }
            out[((q + li) as usize) * n + (m + li) as usize] = acc;
        }
    }
    out
}

/// One irreducible block `D^(l)(g)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerBlock {
    pub l: usize,
    pub entries: Vec<Complex64>,
}

impl WignerBlock {
    pub fn dim(&self) -> usize {
        2 * self.l + 1
    }

    /// Entry `D_qm` with `q, m` in `-l..=l`.
    pub fn get(&self, q: i64, m: i64) -> Complex64 {
        let l = self.l as i64;
        self.entries[((q + l) as usize) * self.dim() + (m + l) as usize]
    }

    /// `D u` for a coefficient vector ordered by ascending m.
    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        (0..n)
            .map(|r| (0..n).map(|c| self.entries[r * n + c] * u[c]).sum())
            .collect()
    }
}

/// Complex Wigner D-matrix of degree `l`.
pub fn wigner_d(l: usize, euler: Euler) -> WignerBlock {
    let n = 2 * l + 1;
    let li = l as i64;
    let small = wigner_small_d(l, euler.beta);
    let mut entries = Vec::with_capacity(n * n);
    for q in -li..=li {
        for m in -li..=li {
            let d = small[((q + li) as usize) * n + (m + li) as usize];
            let phase = -(q as f64) * euler.alpha - (m as f64) * euler.gamma;
            entries.push(Complex64::from_polar(d, phase));
        }
    }
    WignerBlock { l, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_spot_values() {
        assert_eq!(assoc_legendre(0, 0, 0.37).unwrap(), 1.0);
        assert!((assoc_legendre(2, 0, 0.0).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(assoc_legendre(3, 0, 0.0).unwrap(), 0.0);
        assert!(assoc_legendre(2, 3, 0.1).is_err());
        assert!(assoc_legendre(2, 1, 1.5).is_err());
        // P_11 = sqrt(1-x^2) with no phase
        assert!((assoc_legendre(1, 1, 0.6).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn legendre_matches_zero_closed_form() {
        for l in 0..=20usize {
            for m in -(l as i64)..=(l as i64) {
                let a = assoc_legendre(l, m, 0.0).unwrap();
                let b = assoc_legendre_at_zero(l, m);
                assert!(
                    (a - b).abs() <= 1e-10 * b.abs().max(1e-300),
                    "l={l} m={m}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn sph_harm_constant_and_conjugation() {
        let y = sph_harm(0, 0, 0.3, 1.1).unwrap();
        assert!((y.re - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15 && y.im.abs() < 1e-15);
        let mut state = 7u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let (p1, p2) = (PI * next(), 2.0 * PI * next());
            let l = (next() * 7.0) as usize;
            let m = (next() * (2 * l + 1) as f64) as i64 - l as i64;
            let lhs = sph_harm(l, m, p1, p2).unwrap().conj();
            let rhs = sph_harm(l, -m, p1, p2).unwrap() * parity(m);
            assert!((lhs - rhs).norm() < 1e-13);
        }
    }

    #[test]
    fn sph_harm_orthonormal_under_product_rule() {
        // phi1 nodes and weights from the SO(3) beta rule, exact for these degrees
        let n1 = 12;
        let rule = crate::group::so3_rule(2, n1, 2).unwrap();
        let grid = rule.grid.unwrap();
        let n2 = 16;
        let lmax = 3usize;
        let mut idx = Vec::new();
        for l in 0..=lmax {
            for m in -(l as i64)..=(l as i64) {
                idx.push((l, m));
            }
        }
        let mut gram = vec![Complex64::new(0.0, 0.0); idx.len() * idx.len()];
        for i in 0..n1 {
            let p1 = grid.betas[i];
            let w1 = 2.0 * grid.beta_weights[i];
            for j in 0..n2 {
                let p2 = j as f64 * 2.0 * PI / n2 as f64;
                let w = w1 * 2.0 * PI / n2 as f64;
                let ys: Vec<Complex64> = idx
                    .iter()
                    .map(|&(l, m)| sph_harm(l, m, p1, p2).unwrap())
                    .collect();
                for a in 0..idx.len() {
                    for b in 0..idx.len() {
                        gram[a * idx.len() + b] += ys[a] * ys[b].conj() * w;
                    }
                }
            }
        }
        for a in 0..idx.len() {
            for b in 0..idx.len() {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (gram[a * idx.len() + b] - want).norm() < 1e-8,
                    "{:?} {:?}",
                    idx[a],
                    idx[b]
                );
            }
        }
    }

    #[test]
    fn cg_spot_values() {
        assert_eq!(cg(0, 0, 0, 0, 0, 0), 1.0);
        assert_eq!(cg(3, 2, 2, 2, -1, 1), 0.0);
        // <1,1;1,-1|0,0> = 1/sqrt(3)
        assert!((cg(1, 1, 0, 1, -1, 0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        // <1/2-free check: <1,0;1,0|2,0> = sqrt(2/3)
        assert!((cg(1, 1, 2, 0, 0, 0) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(cg(1, 1, 3, 0, 0, 0), 0.0);
        assert_eq!(cg(1, 1, 2, 1, 0, 0), 0.0);
    }

    #[test]
    fn cg_orthogonality_small() {
        // sum_{m,m'} C^{l l' L}_{m m' M} C^{l l' L'}_{m m' M} = delta_{L L'}
        for l in 0..=3i64 {
            for lp in 0..=3i64 {
                for big in (l - lp).abs()..=(l + lp) {
                    for m_tot in -big..=big {
                        let mut s = 0.0;
                        for m in -l..=l {
                            let v = cg(l, lp, big, m, m_tot - m, m_tot);
                            s += v * v;
                        }
                        assert!((s - 1.0).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn guard_examples() {
        assert!(!cg_nonvanishing(CGIndex::new(3, 2, 2, 2, -1, 1)));
        assert!(cg_nonvanishing(CGIndex::new(5, 2, 4, 5, -2, 3)));
        // |m''| = 1 is not within one of l'' = 4, so the guard stays silent
        assert!(!cg_nonvanishing(CGIndex::new(5, 2, 4, 3, -2, 1)));
    }

    #[test]
    fn slice_coeff_values() {
        assert!((slice_coeff(0, 0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(slice_coeff(3, 0).unwrap(), 0.0);
        for l in 0..=10usize {
            for m in -(l as i64)..=(l as i64) {
                let p = slice_coeff(l, m).unwrap();
                let pn = slice_coeff(l, -m).unwrap();
                if p != 0.0 {
                    assert!((pn / p - parity(m)).abs() < 1e-12);
                }
                // restriction of the harmonic to the equator
                let y = sph_harm(l, m, PI / 2.0, 0.7).unwrap();
                let want = Complex64::from_polar(p / (2.0 * PI).sqrt(), m as f64 * 0.7);
                assert!((y - want).norm() < 1e-12, "l={l} m={m}");
            }
        }
    }

    #[test]
    fn wigner_identity_and_l0() {
        let d0 = wigner_d(0, Euler::new(0.3, 1.2, -0.4));
        assert!((d0.entries[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        for l in 0..6 {
            let d = wigner_d(l, Euler::IDENTITY);
            for q in -(l as i64)..=(l as i64) {
                for m in -(l as i64)..=(l as i64) {
                    let want = if q == m { 1.0 } else { 0.0 };
                    assert!((d.get(q, m) - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wigner_rotates_harmonics() {
        // sum_q y_lq(x) D_qm(g) = y_lm(R^{-1} x) pins the convention down
        let e = Euler::new(0.4, 1.1, -0.7);
        let r = crate::group::rotation_matrix(e);
        let (p1, p2) = (0.9f64, 2.3f64);
        let x = nalgebra::Vector3::new(p1.sin() * p2.cos(), p1.sin() * p2.sin(), p1.cos());
        let xr = r.transpose() * x;
        let (q1, q2) = (xr.z.clamp(-1.0, 1.0).acos(), xr.y.atan2(xr.x));
        for l in 0..5usize {
            let d = wigner_d(l, e);
            let li = l as i64;
            for m in -li..=li {
                let lhs: Complex64 = (-li..=li)
                    .map(|q| sph_harm(l, q, p1, p2).unwrap() * d.get(q, m))
                    .sum();
                let rhs = sph_harm(l, m, q1, q2).unwrap();
                assert!((lhs - rhs).norm() < 1e-12, "l={l} m={m}: {lhs} vs {rhs}");
            }
        }
    }
}
