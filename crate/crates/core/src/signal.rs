//! Complex matrices and synthetic uplink scenarios.
//!
//! A scenario draws i.i.d. Bernoulli activities, signatures with entries
//! `CN(0, 1/L)`, Rayleigh small-scale channels `CN(0, I_M)` for every
//! (receiver, user) pair, and the received signals
//! `Y_b = Σ_j S_j X_bj + W_b` with `x_bjn = a_jn g_bjn h̄_bjn`.

use std::io::{Read, Write};
use std::ops::{Index, IndexMut};

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{second_moment_out_of_cell, NetworkConfig, Population};
use crate::rng::{derive_seed, stream_rng};
use crate::scalar::Real;

/// Dense row-major complex matrix with fixed dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Entries i.i.d. `CN(0, variance)`.
    pub fn random_cn<R: Rng + ?Sized>(rows: usize, cols: usize, variance: T, rng: &mut R) -> Self {
        let sd = (variance * T::c(0.5)).sqrt();
        let data = (0..rows * cols).map(|_| cn_sample(sd, rng)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex<T>] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> T {
        self.frobenius_sq().sqrt()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let mut out = Self::zeros(self.rows, rhs.cols);
        self.matmul_into(rhs, &mut out)?;
        Ok(out)
    }

    /// `out = self · rhs`, reusing `out`'s storage.
    pub fn matmul_into(&self, rhs: &Self, out: &mut Self) -> Result<()> {
        if self.cols != rhs.rows || out.rows != self.rows || out.cols != rhs.cols {
            return Err(Error::Dimension(format!(
                "({}x{}) * ({}x{}) -> ({}x{})",
                self.rows, self.cols, rhs.rows, rhs.cols, out.rows, out.cols
            )));
        }
        match rhs.cols {
            1 => self.matmul_fixed::<1>(rhs, out),
            4 => self.matmul_fixed::<4>(rhs, out),
            8 => self.matmul_fixed::<8>(rhs, out),
            16 => self.matmul_fixed::<16>(rhs, out),
            _ => self.matmul_general(rhs, out),
        }
        Ok(())
    }

    fn matmul_general(&self, rhs: &Self, out: &mut Self) {
        let zero = Complex::new(T::zero(), T::zero());
        out.data.iter_mut().for_each(|z| *z = zero);
        let n = rhs.cols;
        for i in 0..self.rows {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == zero {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(rhs.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
    }

    // The antenna count is small; a fixed width lets the inner loop unroll.
    fn matmul_fixed<const N: usize>(&self, rhs: &Self, out: &mut Self) {
        for i in 0..self.rows {
            let mut re = [T::zero(); N];
            let mut im = [T::zero(); N];
            for (k, a) in self.row(i).iter().enumerate() {
                let (ar, ai) = (a.re, a.im);
                let b: &[Complex<T>; N] = rhs.row(k).try_into().unwrap();
                for j in 0..N {
                    re[j] = re[j] + ar * b[j].re - ai * b[j].im;
                    im[j] = im[j] + ar * b[j].im + ai * b[j].re;
                }
            }
            for (j, o) in out.data[i * N..(i + 1) * N].iter_mut().enumerate() {
                *o = Complex::new(re[j], im[j]);
            }
        }
    }

    /// `self += alpha · u vᵀ`, used to accumulate rank-one contributions.
    pub fn add_outer(&mut self, alpha: Complex<T>, u: &[Complex<T>], v: &[Complex<T>]) {
        debug_assert!(u.len() == self.rows && v.len() == self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let a = alpha * ur;
            for (o, &vc) in self.row_mut(r).iter_mut().zip(v) {
                *o = *o + a * vc;
            }
        }
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.check_same(rhs)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.check_same(rhs)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    fn check_same(&self, rhs: &Self) -> Result<()> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Self {
        Self::from_fn(self.rows, end - start, |r, c| self[(r, start + c)])
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of bounds");
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of bounds");
        &mut self.data[r * self.cols + c]
    }
}

fn cn_sample<T: Real, R: Rng + ?Sized>(sd: T, rng: &mut R) -> Complex<T> {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(sd * T::c(re), sd * T::c(im))
}

/// `L × NB` signature matrix with i.i.d. `CN(0, 1/L)` entries; column
/// `j·N + n` belongs to user `n` of cell `j`.
pub fn draw_signatures<T: Real, R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> ComplexMatrix<T> {
    let l = cfg.seq_len;
    ComplexMatrix::random_cn(l, cfg.users_per_cell * cfg.num_cells, T::one() / T::from_usize_lossy(l), rng)
}

/// Signatures determined by `seed` alone.
pub fn generate_signatures<T: Real>(cfg: &NetworkConfig, seed: u64) -> ComplexMatrix<T> {
    let mut rng = stream_rng(derive_seed(seed, 0x5349_4753), 0);
    draw_signatures(cfg, &mut rng)
}

/// One sampled realization of the uplink.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInstance<T> {
    pub num_cells: usize,
    pub users_per_cell: usize,
    pub seq_len: usize,
    pub antennas: usize,
    pub noise_var: T,
    /// `activities[j * N + n]`.
    pub activities: Vec<bool>,
    /// `g_bjn` at `(b * B + j) * N + n`.
    pub gains: Vec<T>,
    pub signatures: ComplexMatrix<T>,
    /// `h̄_bjn` as row `(b * B + j) * N + n` of a `B²N × M` matrix.
    pub channels: ComplexMatrix<T>,
    /// Received signal per base station, each `L × M`.
    pub received: Vec<ComplexMatrix<T>>,
}

impl<T: Real> ScenarioInstance<T> {
    /// Draws a scenario with the configured noise level.
    pub fn synthesize<R: Rng + ?Sized>(cfg: &NetworkConfig, pop: &Population, rng: &mut R) -> Result<Self> {
        Self::synthesize_with_noise(cfg, pop, T::c(cfg.noise_variance()), rng)
    }

    /// Draws a scenario with an explicit noise variance (zero allowed).
    ///
    /// Draw order: activities, signatures, channels, noise.
    pub fn synthesize_with_noise<R: Rng + ?Sized>(
        cfg: &NetworkConfig,
        pop: &Population,
        noise_var: T,
        rng: &mut R,
    ) -> Result<Self> {
        let (b, n, l, m) = (cfg.num_cells, cfg.users_per_cell, cfg.seq_len, cfg.antennas);
        if pop.num_cells != b || pop.users_per_cell != n {
            return Err(Error::Dimension(format!(
                "population is {}x{}, config wants {b}x{n}",
                pop.num_cells, pop.users_per_cell
            )));
        }
        if !(noise_var >= T::zero()) {
            return Err(Error::Domain("noise variance must be non-negative".into()));
        }
        let lambda = cfg.activity_prob;
        let activities: Vec<bool> = (0..b * n).map(|_| rng.random::<f64>() < lambda).collect();
        let signatures = draw_signatures::<T, R>(cfg, rng);
        let channels = ComplexMatrix::random_cn(b * b * n, m, T::one(), rng);
        let mut gains = Vec::with_capacity(b * b * n);
        for bs in 0..b {
            for j in 0..b {
                gains.extend(pop.gains_of_cell(bs, j).iter().map(|&g| T::c(g)));
            }
        }
        let active_cols: Vec<(usize, Vec<Complex<T>>)> = activities
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(k, _)| (k, signatures.column(k)))
            .collect();
        let mut received = Vec::with_capacity(b);
        for bs in 0..b {
            let mut y = ComplexMatrix::random_cn(l, m, noise_var, rng);
            for (k, s_col) in &active_cols {
                let idx = bs * b * n + k;
                y.add_outer(Complex::new(gains[idx], T::zero()), s_col, channels.row(idx));
            }
            received.push(y);
        }
        Ok(Self {
            num_cells: b,
            users_per_cell: n,
            seq_len: l,
            antennas: m,
            noise_var,
            activities,
            gains,
            signatures,
            channels,
            received,
        })
    }

    #[inline]
    fn tensor_index(&self, bs: usize, cell: usize, user: usize) -> usize {
        (bs * self.num_cells + cell) * self.users_per_cell + user
    }

    pub fn is_active(&self, cell: usize, user: usize) -> bool {
        self.activities[cell * self.users_per_cell + user]
    }

    pub fn gain(&self, bs: usize, cell: usize, user: usize) -> T {
        self.gains[self.tensor_index(bs, cell, user)]
    }

    /// Gains seen by `bs` for every user, in signature-column order.
    pub fn gains_at(&self, bs: usize) -> &[T] {
        let k = self.num_cells * self.users_per_cell;
        &self.gains[bs * k..(bs + 1) * k]
    }

    /// `x_bjn = a_jn g_bjn h̄_bjn` (zero row when inactive).
    pub fn x_row(&self, bs: usize, cell: usize, user: usize) -> Vec<Complex<T>> {
        let zero = Complex::new(T::zero(), T::zero());
        if !self.is_active(cell, user) {
            return vec![zero; self.antennas];
        }
        let idx = self.tensor_index(bs, cell, user);
        let g = self.gains[idx];
        self.channels.row(idx).iter().map(|&h| h * g).collect()
    }

    /// The `NB × M` stacked matrix `[X_b1; ...; X_bB]`.
    pub fn x_matrix(&self, bs: usize) -> ComplexMatrix<T> {
        let n = self.users_per_cell;
        let mut x = ComplexMatrix::zeros(self.num_cells * n, self.antennas);
        for j in 0..self.num_cells {
            for u in 0..n {
                x.row_mut(j * n + u).copy_from_slice(&self.x_row(bs, j, u));
            }
        }
        x
    }

    /// Signature block `S_j` (`L × N`).
    pub fn signatures_of_cell(&self, cell: usize) -> ComplexMatrix<T> {
        let n = self.users_per_cell;
        self.signatures.columns(cell * n, (cell + 1) * n)
    }

    /// Inter-cell interference `Σ_{j≠b} S_j X_bj` at `bs`.
    pub fn interference(&self, bs: usize) -> Result<ComplexMatrix<T>> {
        let n = self.users_per_cell;
        let mut x = self.x_matrix(bs);
        for u in 0..n {
            x.row_mut(bs * n + u)
                .iter_mut()
                .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
        }
        self.signatures.matmul(&x)
    }

    /// `Y_b − S X_b`, which equals the noise `W_b` by construction.
    pub fn noise_residual(&self, bs: usize) -> Result<ComplexMatrix<T>> {
        let sx = self.signatures.matmul(&self.x_matrix(bs))?;
        self.received[bs].sub(&sx)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        container::write(self, w)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        container::read(r)
    }
}

/// Interference-plus-noise variance seen by a non-cooperating base station:
/// `σ̃_w² = (λ/L) N (B−1) E[G_/b²] + σ_w²`.
pub fn effective_noise_variance_tin<T: Real>(cfg: &NetworkConfig) -> Result<T> {
    let sigma2 = T::c(cfg.noise_variance());
    if cfg.num_cells < 2 {
        return Ok(sigma2);
    }
    let eg2: T = second_moment_out_of_cell(cfg)?;
    let scale = T::c(cfg.activity_prob / cfg.seq_len as f64
        * cfg.users_per_cell as f64
        * (cfg.num_cells - 1) as f64);
    Ok(scale * eg2 + sigma2)
}

/// Binary scenario container.
///
/// Layout (all little-endian): magic `b"CDSCN001"`, then `u64` B, N, L, M,
/// then `f64` values: σ_w², activities (0/1, B·N), gains (B²N), signatures
/// (L·NB complex as re, im), channels (B²N·M complex), received (B·L·M
/// complex). Matrices are row-major.
pub mod container {
    use super::*;

    pub const MAGIC: &[u8; 8] = b"CDSCN001";

    pub fn write<T: Real, W: Write>(s: &ScenarioInstance<T>, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for d in [s.num_cells, s.users_per_cell, s.seq_len, s.antennas] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut put = |v: f64| w.write_all(&v.to_le_bytes());
        put(s.noise_var.f64())?;
        for &a in &s.activities {
            put(if a { 1.0 } else { 0.0 })?;
        }
        for &g in &s.gains {
            put(g.f64())?;
        }
        let mats = std::iter::once(&s.signatures)
            .chain(std::iter::once(&s.channels))
            .chain(s.received.iter());
        for m in mats {
            for z in m.as_slice() {
                put(z.re.f64())?;
                put(z.im.f64())?;
            }
        }
        Ok(())
    }

    pub fn read<T: Real, R: Read>(mut r: R) -> Result<ScenarioInstance<T>> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a scenario container".into()));
        }
        let mut u = || -> Result<usize> {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            usize::try_from(u64::from_le_bytes(buf)).map_err(|_| Error::Format("dimension overflow".into()))
        };
        let (b, n, l, m) = (u()?, u()?, u()?, u()?);
        if [b, n, l, m].contains(&0) || b.checked_mul(b).and_then(|x| x.checked_mul(n)).and_then(|x| x.checked_mul(m)).is_none() {
            return Err(Error::Format(format!("bad dimensions {b}x{n}x{l}x{m}")));
        }
        let mut f = || -> Result<T> {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
            Ok(T::c(f64::from_le_bytes(buf)))
        };
        let noise_var = f()?;
        let activities = (0..b * n)
            .map(|_| f().map(|v| v != T::zero()))
            .collect::<Result<Vec<_>>>()?;
        let gains = (0..b * b * n).map(|_| f()).collect::<Result<Vec<_>>>()?;
        let mut mat = |rows: usize, cols: usize| -> Result<ComplexMatrix<T>> {
            let data = (0..rows * cols)
                .map(|_| Ok(Complex::new(f()?, f()?)))
                .collect::<Result<Vec<_>>>()?;
            ComplexMatrix::from_vec(rows, cols, data)
        };
        let signatures = mat(l, n * b)?;
        let channels = mat(b * b * n, m)?;
        let received = (0..b).map(|_| mat(l, m)).collect::<Result<Vec<_>>>()?;
        Ok(ScenarioInstance {
            num_cells: b,
            users_per_cell: n,
            seq_len: l,
            antennas: m,
            noise_var,
            activities,
            gains,
            signatures,
            channels,
            received,
        })
    }
}
