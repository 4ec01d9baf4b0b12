//! Radial basis functions from Fourier-domain volumes on a spherical grid:
//! leading eigenvectors of the weighted cross-covariance kernel.
//!
//! Grid: `rho_i = i v / n_rho` for `i = 1..=n_rho` (the origin is left out),
//! midpoint polar angles and uniform azimuths. Quadrature weight
//! `rho^2 sin(phi1) d_rho d_phi1 d_phi2`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{OrbitError, Result};
use crate::group::SeedStream;
use crate::harmonics::sph_harm;

#[derive(Clone, Debug, PartialEq)]
pub struct SphericalGridVolume {
    pub vmax: f64,
    pub rho: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    /// index `(i * n_phi1 + j) * n_phi2 + k`
    pub values: Vec<Complex64>,
}

impl SphericalGridVolume {
    pub fn from_fn<F>(n_rho: usize, n_phi1: usize, n_phi2: usize, vmax: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> Complex64 + Sync,
    {
        if n_rho == 0 || n_phi1 == 0 || n_phi2 == 0 {
            return Err(OrbitError::Domain("grid sizes must be positive".into()));
        }
        if !(vmax > 0.0) {
            return Err(OrbitError::Domain(format!(
                "radius must be positive, got {vmax}"
            )));
        }
        let rho: Vec<f64> = (1..=n_rho)
            .map(|i| i as f64 * vmax / n_rho as f64)
            .collect();
        let phi1: Vec<f64> = (0..n_phi1)
            .map(|j| (j as f64 + 0.5) * PI / n_phi1 as f64)
            .collect();
        let phi2: Vec<f64> = (0..n_phi2)
            .map(|k| 2.0 * PI * k as f64 / n_phi2 as f64)
            .collect();
        let values = rho
            .par_iter()
            .flat_map_iter(|&r| {
                let f = &f;
                let phi2 = &phi2;
                phi1.iter()
                    .flat_map(move |&a| phi2.iter().map(move |&b| f(r, a, b)))
            })
            .collect();
        Ok(SphericalGridVolume {
            vmax,
            rho,
            phi1,
            phi2,
            values,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rho.len(), self.phi1.len(), self.phi2.len())
    }

    pub fn d_rho(&self) -> f64 {
        self.vmax / self.rho.len() as f64
    }

    /// `sin(phi1_j) d_phi1 d_phi2`
    pub fn angular_weights(&self) -> Vec<f64> {
        let (_, n1, n2) = self.shape();
        let w = (PI / n1 as f64) * (2.0 * PI / n2 as f64);
        self.phi1.iter().map(|a| a.sin() * w).collect()
    }

    fn shell(&self, i: usize) -> &[Complex64] {
        let (_, n1, n2) = self.shape();
        &self.values[i * n1 * n2..(i + 1) * n1 * n2]
    }

    /// `C(rho_i, rho_i') = int f(rho_i, u) conj f(rho_i', u) du`
    pub fn cross_covariance(&self) -> DMatrix<Complex64> {
        let n = self.rho.len();
        let n2 = self.phi2.len();
        let aw = self.angular_weights();
        let rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let a = self.shell(i);
                (0..n)
                    .map(|ip| {
                        let b = self.shell(ip);
                        a.iter()
                            .zip(b)
                            .enumerate()
                            .map(|(q, (x, y))| x * y.conj() * aw[q / n2])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        DMatrix::from_fn(n, n, |i, j| rows[i][j])
    }

    /// `K_ii' = Re C(rho_i, rho_i') rho_i rho_i' d_rho`. For real radial
    /// functions the imaginary part of `C` cancels in the power.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let c = self.cross_covariance();
        let dr = self.d_rho();
        let k = DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
            c[(i, j)].re * self.rho[i] * self.rho[j] * dr
        });
        (&k + k.transpose()) * 0.5
    }

    pub fn total_power(&self) -> f64 {
        let aw = self.angular_weights();
        let n2 = self.phi2.len();
        let dr = self.d_rho();
        (0..self.rho.len())
            .map(|i| {
                let r2 = self.rho[i] * self.rho[i] * dr;
                self.shell(i)
                    .iter()
                    .enumerate()
                    .map(|(q, v)| v.norm_sqr() * aw[q / n2])
                    .sum::<f64>()
                    * r2
            })
            .sum()
    }

    /// Long CSV `rho,phi1,phi2,re,im`, one row per grid point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rho", "phi1", "phi2", "re", "im"])?;
        let (n, n1, n2) = self.shape();
        for i in 0..n {
            for j in 0..n1 {
                for k in 0..n2 {
                    let v = self.values[(i * n1 + j) * n2 + k];
                    w.write_record(
                        [self.rho[i], self.phi1[j], self.phi2[k], v.re, v.im]
                            .map(|x| format!("{x:.16e}")),
                    )?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut rows: Vec<[f64; 5]> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(OrbitError::Domain(format!(
                    "volume rows have 5 fields, got {}",
                    rec.len()
                )));
            }
            let mut row = [0.0; 5];
            for (slot, field) in row.iter_mut().zip(rec.iter()) {
                *slot = field
                    .trim()
                    .parse()
                    .map_err(|e| OrbitError::Domain(format!("bad number {field:?}: {e}")))?;
            }
            rows.push(row);
        }
        let distinct = |c: usize| {
            let mut v: Vec<f64> = Vec::new();
            for r in &rows {
                if !v.contains(&r[c]) {
                    v.push(r[c]);
                }
            }
            v
        };
        let (rho, phi1, phi2) = (distinct(0), distinct(1), distinct(2));
        if rho.is_empty() || rows.len() != rho.len() * phi1.len() * phi2.len() {
            return Err(OrbitError::Domain(
                "volume CSV is not a full product grid".into(),
            ));
        }
        let vmax = *rho.last().unwrap();
        let values = rows.iter().map(|r| Complex64::new(r[3], r[4])).collect();
        Ok(SphericalGridVolume {
            vmax,
            rho,
            phi1,
            phi2,
            values,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialBasis {
    pub rho: Vec<f64>,
    pub d_rho: f64,
    /// `z[s][i] = z_s(rho_i)`
    pub z: Vec<Vec<f64>>,
    /// kernel eigenvalues of the kept functions, descending
    pub eigenvalues: Vec<f64>,
}

impl RadialBasis {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// `sum_i rho_i^2 z_s z_s' d_rho`
    pub fn gram(&self) -> DMatrix<f64> {
        let s = self.z.len();
        DMatrix::from_fn(s, s, |a, b| {
            self.rho
                .iter()
                .enumerate()
                .map(|(i, r)| r * r * self.z[a][i] * self.z[b][i])
                .sum::<f64>()
                * self.d_rho
        })
    }

    pub fn orthogonality_residual(&self) -> f64 {
        let g = self.gram();
        (g - DMatrix::identity(self.z.len(), self.z.len()))
            .abs()
            .max()
    }

    /// Functions from orthonormal coefficient columns `a` (`z = a / (rho sqrt(d_rho))`).
    pub fn from_coefficients(rho: &[f64], d_rho: f64, a: &DMatrix<f64>) -> Self {
        let z = (0..a.ncols())
            .map(|s| {
                rho.iter()
                    .enumerate()
                    .map(|(i, r)| a[(i, s)] / (r * d_rho.sqrt()))
                    .collect()
            })
            .collect();
        RadialBasis {
            rho: rho.to_vec(),
            d_rho,
            z,
            eigenvalues: Vec::new(),
        }
    }

    /// CSV `rho,z1,...,zS`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["rho".to_string()];
        header.extend((1..=self.z.len()).map(|s| format!("z{s}")));
        w.write_record(&header)?;
        for (i, r) in self.rho.iter().enumerate() {
            let mut row = vec![format!("{r:.16e}")];
            row.extend(self.z.iter().map(|z| format!("{:.16e}", z[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads [`RadialBasis::write_csv`] output; the grid is assumed to be `i v / n`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let s = rd.headers()?.len().saturating_sub(1);
        let mut rho = Vec::new();
        let mut z = vec![Vec::new(); s];
        for rec in rd.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse()
                        .map_err(|e| OrbitError::Domain(format!("bad number {f:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != s + 1 {
                return Err(OrbitError::Size {
                    expected: s + 1,
                    got: vals.len(),
                });
            }
            rho.push(vals[0]);
            for (col, v) in z.iter_mut().zip(&vals[1..]) {
                col.push(*v);
            }
        }
        if rho.is_empty() {
            return Err(OrbitError::Domain("empty basis CSV".into()));
        }
        let d_rho = rho.last().unwrap() / rho.len() as f64;
        Ok(RadialBasis {
            rho,
            d_rho,
            z,
            eigenvalues: Vec::new(),
        })
    }
}

/// Leading `s` eigenvectors of the kernel matrix, divided by `rho`.
/// Each eigenvector's first significant entry is made positive.
pub fn radial_basis(vol: &SphericalGridVolume, s: usize) -> Result<RadialBasis> {
    let n = vol.rho.len();
    if s > n {
        return Err(OrbitError::Domain(format!(
            "asked for {s} functions on a {n}-point radial grid"
        )));
    }
    let k = vol.kernel_matrix();
    let eig = k.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let kernel_rank = order
        .iter()
        .filter(|i| eig.eigenvalues[**i] > 1e-12 * top)
        .count();
    if kernel_rank < s {
        return Err(OrbitError::Degenerate(format!(
            "kernel rank {kernel_rank} is below the requested {s}"
        )));
    }
    let mut a = DMatrix::zeros(n, s);
    for (col, &i) in order.iter().take(s).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let big = v.amax();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * big) {
            if *first < 0.0 {
                v = -v;
            }
        }
        a.set_column(col, &v);
    }
    let mut basis = RadialBasis::from_coefficients(&vol.rho, vol.d_rho(), &a);
    basis.eigenvalues = order.iter().take(s).map(|i| eig.eigenvalues[*i]).collect();
    Ok(basis)
}

/// `sum_s int |h_s(u)|^2 du` with `h_s(u) = sum_i f(rho_i, u) z_s(rho_i) rho_i^2 d_rho`.
pub fn captured_power(vol: &SphericalGridVolume, basis: &RadialBasis) -> Result<f64> {
    if basis.rho != vol.rho {
        return Err(OrbitError::Domain(
            "basis and volume use different radial grids".into(),
        ));
    }
    let (n, n1, n2) = vol.shape();
    let aw = vol.angular_weights();
    let dr = vol.d_rho();
    let mut total = 0.0;
    for z in &basis.z {
        let mut h = vec![Complex64::new(0.0, 0.0); n1 * n2];
        for i in 0..n {
            let c = z[i] * vol.rho[i] * vol.rho[i] * dr;
            for (hq, v) in h.iter_mut().zip(vol.shell(i)) {
                *hq += v * c;
            }
        }
        total += h
            .iter()
            .enumerate()
            .map(|(q, v)| v.norm_sqr() * aw[q / n2])
            .sum::<f64>();
    }
    Ok(total)
}

/// Random orthonormal `n x s` coefficient matrix (QR of a Gaussian draw).
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, s, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// `sum_{l <= lmax, m, s} c_lms b_s(rho) y_lm(u)` with complex Gaussian
/// coefficients and Gaussian radial bumps `b_s` spread over `(0, v]`.
pub fn synthetic_volume(
    n_rho: usize,
    n_phi1: usize,
    n_phi2: usize,
    vmax: f64,
    lmax: usize,
    n_radial: usize,
    seed: u64,
) -> Result<SphericalGridVolume> {
    if n_radial == 0 {
        return Err(OrbitError::Domain("need at least one radial bump".into()));
    }
    let mut rng = SeedStream::new(seed).rng();
    let mut terms = Vec::new();
    for l in 0..=lmax {
        for m in -(l as i64)..=(l as i64) {
            for s in 0..n_radial {
                let c = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                terms.push((l, m, s, c));
            }
        }
    }
    let width = vmax / (n_radial as f64 + 1.0);
    let centers: Vec<f64> = (0..n_radial).map(|s| (s as f64 + 1.0) * width).collect();
    SphericalGridVolume::from_fn(n_rho, n_phi1, n_phi2, vmax, |r, a, b| {
        terms
            .iter()
            .map(|(l, m, s, c)| {
                let bump = (-(r - centers[*s]).powi(2) / (2.0 * width * width)).exp();
                c * bump * sph_harm(*l, *m, a, b).expect("valid degree")
            })
            .sum()
    })
}

/// `z(rho) h(u)` with `h` a random combination of harmonics up to `lmax`.
pub fn separable_volume<Z>(
    n_rho: usize,
    n_phi1: usize,
    n_phi2: usize,
    vmax: f64,
    lmax: usize,
    seed: u64,
    z: Z,
) -> Result<SphericalGridVolume>
where
    Z: Fn(f64) -> f64 + Sync,
{
    let mut rng = SeedStream::new(seed).rng();
    let mut terms = Vec::new();
    for l in 0..=lmax {
        for m in -(l as i64)..=(l as i64) {
            terms.push((
                l,
                m,
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)),
            ));
        }
    }
    SphericalGridVolume::from_fn(n_rho, n_phi1, n_phi2, vmax, |r, a, b| {
        let h: Complex64 = terms
            .iter()
            .map(|(l, m, c)| c * sph_harm(*l, *m, a, b).expect("valid degree"))
            .sum();
        h * z(r)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol() -> SphericalGridVolume {
        synthetic_volume(12, 10, 12, 1.0, 3, 12, 5).unwrap()
    }

    #[test]
    fn orthogonality_and_monotone_power() {
        let v = vol();
        let total = v.total_power();
        let mut prev = 0.0;
        for s in 0..=12 {
            let b = radial_basis(&v, s).unwrap();
            if s > 0 {
                assert!(b.orthogonality_residual() <= 1e-10);
            }
            let p = captured_power(&v, &b).unwrap();
            assert!(p >= prev - 1e-12 * total);
            assert!(p <= total * (1.0 + 1e-12));
            // power equals the kept eigenvalue mass
            assert!((p - b.eigenvalues.iter().sum::<f64>()).abs() <= 1e-10 * total);
            prev = p;
        }
        assert!((prev - total).abs() <= 1e-10 * total);
        assert_eq!(
            captured_power(&v, &radial_basis(&v, 0).unwrap()).unwrap(),
            0.0
        );
        assert!(radial_basis(&v, 13).is_err());
    }

    #[test]
    fn kernel_is_psd() {
        let k = vol().kernel_matrix();
        let top = k.norm();
        for e in k.symmetric_eigen().eigenvalues.iter() {
            assert!(*e >= -1e-10 * top);
        }
    }

    #[test]
    fn separable_volume_is_rank_one() {
        let v = separable_volume(16, 8, 10, 2.0, 2, 3, |r| (-(r - 0.8).powi(2)).exp() * r).unwrap();
        let b = radial_basis(&v, 1).unwrap();
        let ratio = captured_power(&v, &b).unwrap() / v.total_power();
        assert!(ratio >= 1.0 - 1e-8);
        assert!(matches!(
            radial_basis(&v, 2),
            Err(OrbitError::Degenerate(_))
        ));
    }

    #[test]
    fn eigenbasis_beats_random_competitors() {
        let v = vol();
        let best = captured_power(&v, &radial_basis(&v, 2).unwrap()).unwrap();
        let mut rng = SeedStream::new(9).rng();
        for _ in 0..1000 {
            let a = random_orthonormal(12, 2, &mut rng);
            let b = RadialBasis::from_coefficients(&v.rho, v.d_rho(), &a);
            assert!(b.orthogonality_residual() < 1e-10);
            assert!(captured_power(&v, &b).unwrap() <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sign_convention_and_round_trips() {
        let v = vol();
        let b = radial_basis(&v, 3).unwrap();
        for z in &b.z {
            assert!(z.iter().find(|x| x.abs() > 0.0).unwrap() > &0.0);
        }
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let back = SphericalGridVolume::read_csv(&buf[..]).unwrap();
        assert_eq!(back, v);
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let bb = RadialBasis::read_csv(&buf[..]).unwrap();
        assert_eq!(bb.z, b.z);
        assert!((bb.d_rho - b.d_rho).abs() < 1e-15);
    }
}
