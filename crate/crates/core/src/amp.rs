//! Multiple-measurement-vector AMP with the Bernoulli-Gaussian row denoiser.
//!
//! With `X⁰ = 0`, `Z⁰ = Y` and `K` signature columns:
//!
//! ```text
//! X̃ᵗ   = Sᴴ Zᵗ + Xᵗ
//! Xᵗ⁺¹ = η(X̃ᵗ)                       (row by row)
//! Zᵗ⁺¹ = Y − S Xᵗ⁺¹ + (K/L) Zᵗ ⟨η′⟩
//! ```
//!
//! The denoiser is the posterior mean of `x = a g h̄` given
//! `x̃ = x + τ u`, which for i.i.d. Gaussian `h̄` and `u` is a real scalar
//! times `x̃`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{logistic, Real};
use crate::signal::ComplexMatrix;

/// Source of the effective noise level used inside the iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum TauMode<T> {
    /// `τ_t² = ‖Zᵗ‖²_F / (L M)`.
    Empirical,
    /// `τ_t²` read from a precomputed sequence (last entry reused).
    Prescribed(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpConfig<T> {
    pub max_iters: usize,
    /// Weight on the previous estimate, `X ← (1−d) η(X̃) + d X`.
    pub damping: f64,
    /// Stop once `|τ²_{t+1} − τ²_t| / τ²_t` falls below this.
    pub tol: f64,
    pub tau_mode: TauMode<T>,
    /// Debug switch; disabling the Onsager correction turns the iteration
    /// into plain iterative soft thresholding.
    pub onsager: bool,
}

impl<T> Default for AmpConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 50,
            damping: 0.0,
            tol: 1e-6,
            tau_mode: TauMode::Empirical,
            onsager: true,
        }
    }
}

impl<T: Real> AmpConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!("damping {} not in [0, 1)", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if let TauMode::Prescribed(seq) = &self.tau_mode {
            if seq.is_empty() || seq.iter().any(|&t| !(t > T::zero())) {
                return Err(Error::Config("prescribed tau sequence must be non-empty and positive".into()));
            }
        }
        Ok(())
    }
}

/// Shrinkage factor `c` and its derivative `dc/d‖x̃‖²` of the denoiser.
///
/// `c = θ/(1+θ) · π`, where `π = P(active | x̃)` is a logistic function of
/// `Δ‖x̃‖² − ln((1−λ)/λ) − M ln(1+θ)`.
#[inline]
pub fn shrinkage<T: Real>(r: T, g: T, tau2: T, lambda: T, m: usize) -> (T, T) {
    let theta = g * g / tau2;
    if theta == T::zero() {
        return (T::zero(), T::zero());
    }
    let delta = T::one() / tau2 - T::one() / (g * g + tau2);
    let log_k = ((T::one() - lambda) / lambda).ln() + T::from_usize_lossy(m) * theta.ln_1p();
    let post = logistic(delta * r - log_k);
    let lin = theta / (T::one() + theta);
    (lin * post, lin * delta * post * (T::one() - post))
}

fn check_denoiser_args<T: Real>(g: T, tau2: T, lambda: T) -> Result<()> {
    if !(tau2 > T::zero()) {
        return Err(Error::Domain(format!("tau^2 must be positive, got {tau2}")));
    }
    if !(g >= T::zero()) {
        return Err(Error::Domain(format!("gain must be non-negative, got {g}")));
    }
    if !(lambda > T::zero() && lambda <= T::one()) {
        return Err(Error::Domain(format!("activity probability {lambda} not in (0, 1]")));
    }
    Ok(())
}

fn sq_norm<T: Real>(row: &[Complex<T>]) -> T {
    row.iter().map(|z| z.norm_sqr()).sum()
}

/// Posterior-mean estimate of one row.
pub fn denoise<T: Real>(x: &[Complex<T>], g: T, tau2: T, lambda: T) -> Result<Vec<Complex<T>>> {
    check_denoiser_args(g, tau2, lambda)?;
    let (c, _) = shrinkage(sq_norm(x), g, tau2, lambda, x.len());
    Ok(x.iter().map(|&z| z * c).collect())
}

/// Jacobian of the row denoiser in row-vector form:
/// `η(x̃ + dx) ≈ η(x̃) + dx · J`, with `J = c I + c′ x̃ᴴ x̃` (Wirtinger
/// derivative with respect to `x̃`, holding `x̃*` fixed).
pub fn denoise_jacobian<T: Real>(x: &[Complex<T>], g: T, tau2: T, lambda: T) -> Result<ComplexMatrix<T>> {
    check_denoiser_args(g, tau2, lambda)?;
    let m = x.len();
    let (c, dc) = shrinkage(sq_norm(x), g, tau2, lambda, m);
    let mut j = ComplexMatrix::zeros(m, m);
    accumulate_jacobian(&mut j, x, c, dc);
    Ok(j)
}

#[inline]
fn accumulate_jacobian<T: Real>(acc: &mut ComplexMatrix<T>, x: &[Complex<T>], c: T, dc: T) {
    let m = x.len();
    for k in 0..m {
        let a = x[k].conj() * dc;
        let row = acc.row_mut(k);
        row[k].re = row[k].re + c;
        for (o, &xj) in row.iter_mut().zip(x) {
            *o = *o + a * xj;
        }
    }
}

/// `⟨η′⟩`: the Jacobian averaged over all rows of `rows`.
pub fn denoise_jacobian_mean<T: Real>(
    rows: &ComplexMatrix<T>,
    gains: &[T],
    tau2: T,
    lambda: T,
) -> Result<ComplexMatrix<T>> {
    if gains.len() != rows.rows() {
        return Err(Error::Dimension(format!("{} gains for {} rows", gains.len(), rows.rows())));
    }
    if rows.rows() == 0 {
        return Err(Error::Empty("no rows to average".into()));
    }
    let m = rows.cols();
    let mut acc = ComplexMatrix::zeros(m, m);
    for (i, &g) in gains.iter().enumerate() {
        check_denoiser_args(g, tau2, lambda)?;
        let x = rows.row(i);
        let (c, dc) = shrinkage(sq_norm(x), g, tau2, lambda, m);
        accumulate_jacobian(&mut acc, x, c, dc);
    }
    let inv = T::one() / T::from_usize_lossy(rows.rows());
    acc.as_mut_slice().iter_mut().for_each(|z| *z = *z * inv);
    Ok(acc)
}

/// One line of the optional per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpIteration<T> {
    pub iteration: usize,
    /// Noise level used by the denoiser at this iteration.
    pub tau_sq: T,
    /// Empirical `‖Zᵗ⁺¹‖²_F / (LM)` after the update.
    pub tau_sq_empirical: T,
    pub residual_norm: T,
}

/// Matched-filter state at the final iteration.
#[derive(Debug, Clone)]
pub struct MatchedFilterOutput<T> {
    /// Rows `x̃_k = (Sᴴ Z + X)_k`.
    pub x_tilde: ComplexMatrix<T>,
    /// `‖x̃_k‖²`.
    pub sq_norms: Vec<T>,
    /// Effective noise level matching `x_tilde`.
    pub tau_sq_final: T,
    /// Last denoised estimate `X`.
    pub x_hat: ComplexMatrix<T>,
    pub gains: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<AmpIteration<T>>,
}

impl<T: Real> MatchedFilterOutput<T> {
    /// Trace as CSV (`iteration,tau_sq,tau_sq_empirical,residual_norm`).
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,tau_sq,tau_sq_empirical,residual_norm\n");
        for it in &self.trace {
            out.push_str(&format!(
                "{},{:.10e},{:.10e},{:.10e}\n",
                it.iteration,
                it.tau_sq.f64(),
                it.tau_sq_empirical.f64(),
                it.residual_norm.f64()
            ));
        }
        out
    }
}

/// Precomputed conjugate transpose of the signature matrix, shared by the
/// many AMP runs that use the same signatures.
#[derive(Debug, Clone)]
pub struct Sensing<T> {
    pub s: ComplexMatrix<T>,
    pub s_h: ComplexMatrix<T>,
}

impl<T: Real> Sensing<T> {
    pub fn new(s: ComplexMatrix<T>) -> Self {
        let s_h = s.adjoint();
        Self { s, s_h }
    }
}

/// Runs AMP on `Y` (`L × M`) with signatures `S` (`L × K`) and per-column
/// gains `g` (length `K`).
pub fn run_amp<T: Real>(
    y: &ComplexMatrix<T>,
    sensing: &Sensing<T>,
    gains: &[T],
    lambda: T,
    cfg: &AmpConfig<T>,
) -> Result<MatchedFilterOutput<T>> {
    cfg.validate()?;
    let s = &sensing.s;
    let (l, m, k) = (y.rows(), y.cols(), s.cols());
    if s.rows() != l || sensing.s_h.rows() != k || gains.len() != k {
        return Err(Error::Dimension(format!(
            "Y is {l}x{m}, S is {}x{k}, {} gains",
            s.rows(),
            gains.len()
        )));
    }
    if !(lambda > T::zero() && lambda <= T::one()) {
        return Err(Error::Domain(format!("activity probability {lambda} not in (0, 1]")));
    }
    if let Some(g) = gains.iter().find(|g| !(**g >= T::zero() && g.is_finite())) {
        return Err(Error::Domain(format!("invalid gain {g}")));
    }
    let lm = T::from_usize_lossy(l * m);
    let aspect = T::from_usize_lossy(k) / T::from_usize_lossy(l);
    let damping = T::c(cfg.damping);
    let tau_of = |z: &ComplexMatrix<T>| z.frobenius_sq() / lm;
    let tau0 = tau_of(y);
    if !(tau0 > T::zero()) || !tau0.is_finite() {
        return Err(Error::Domain("received signal has zero or non-finite energy".into()));
    }
    let floor = tau0 * T::c(1e-24);
    let tau_at = |t: usize, emp: T| -> T {
        match &cfg.tau_mode {
            TauMode::Empirical => emp.max(floor),
            TauMode::Prescribed(seq) => seq[t.min(seq.len() - 1)],
        }
    };

    let mut x = ComplexMatrix::zeros(k, m);
    let mut z = y.clone();
    let mut x_tilde = ComplexMatrix::zeros(k, m);
    let mut sx = ComplexMatrix::zeros(l, m);
    let mut onsager = ComplexMatrix::zeros(l, m);
    let mut jac = ComplexMatrix::zeros(m, m);
    let mut tau2 = tau_at(0, tau0);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let inv_k = T::one() / T::from_usize_lossy(k);

    for t in 0..cfg.max_iters {
        sensing.s_h.matmul_into(&z, &mut x_tilde)?;
        jac.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = Complex::new(T::zero(), T::zero()));
        for i in 0..k {
            let xi = x_tilde.row_mut(i);
            for (a, &b) in xi.iter_mut().zip(x.row(i)) {
                *a = *a + b;
            }
            let (c, dc) = shrinkage(sq_norm(xi), gains[i], tau2, lambda, m);
            accumulate_jacobian(&mut jac, xi, c, dc);
            let xr = x.row_mut(i);
            for (o, &v) in xr.iter_mut().zip(x_tilde.row(i)) {
                *o = v * (c * (T::one() - damping)) + *o * damping;
            }
        }
        s.matmul_into(&x, &mut sx)?;
        if cfg.onsager {
            jac.as_mut_slice().iter_mut().for_each(|v| *v = *v * (inv_k * aspect));
            z.matmul_into(&jac, &mut onsager)?;
        }
        for ((zi, &yi), (&si, &oi)) in z
            .as_mut_slice()
            .iter_mut()
            .zip(y.as_slice())
            .zip(sx.as_slice().iter().zip(onsager.as_slice()))
        {
            *zi = yi - si + oi;
        }
        let emp = tau_of(&z);
        iterations = t + 1;
        trace.push(AmpIteration {
            iteration: t,
            tau_sq: tau2,
            tau_sq_empirical: emp,
            residual_norm: emp.sqrt() * lm.sqrt(),
        });
        if !emp.is_finite() || !x.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                reason: "non-finite residual or estimate".into(),
            });
        }
        let next = tau_at(t + 1, emp);
        let change = ((next - tau2) / tau2).abs();
        tau2 = next;
        if change < T::c(cfg.tol) {
            converged = true;
            break;
        }
    }

    sensing.s_h.matmul_into(&z, &mut x_tilde)?;
    for i in 0..k {
        for (a, &b) in x_tilde.row_mut(i).iter_mut().zip(x.row(i)) {
            *a = *a + b;
        }
    }
    let sq_norms = (0..k).map(|i| sq_norm(x_tilde.row(i))).collect();
    Ok(MatchedFilterOutput {
        x_tilde,
        sq_norms,
        tau_sq_final: tau2,
        x_hat: x,
        gains: gains.to_vec(),
        iterations,
        converged,
        trace,
    })
}
