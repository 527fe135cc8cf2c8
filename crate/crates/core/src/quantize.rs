//! User-specific uniform quantisation of `‖x̃‖²` for LLR forwarding.
//!
//! Each base station quantises a user's statistic on `[0, l_max]` with `2^Q`
//! midpoint levels, where `l_max` is the `ζ`-quantile of the two-component
//! law of `‖x̃‖²`. The central unit rebuilds LLRs from the levels with the
//! known `Δ` and `θ`.

use crate::detection::{CdfMethod, EqualError};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::gamma_p;

/// `2^Q` levels `(2k−1) l_max / 2^{Q+1}`, `k = 1..2^Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec<T> {
    pub bits: u32,
    pub zeta: f64,
    pub l_max: T,
}

impl<T: Real> QuantizerSpec<T> {
    pub fn new(bits: u32, zeta: f64, l_max: T) -> Result<Self> {
        if bits == 0 || bits > 24 {
            return Err(Error::Domain(format!("quantizer bits must be in 1..=24, got {bits}")));
        }
        if !(l_max > T::zero() && l_max.is_finite()) {
            return Err(Error::Domain(format!("l_max must be positive, got {l_max}")));
        }
        Ok(Self { bits, zeta, l_max })
    }

    pub fn num_levels(&self) -> usize {
        1 << self.bits
    }

    fn step(&self) -> T {
        self.l_max / T::from_usize_lossy(self.num_levels())
    }

    pub fn level(&self, k: usize) -> T {
        self.step() * (T::from_usize_lossy(k) + T::c(0.5))
    }

    pub fn levels(&self) -> Vec<T> {
        (0..self.num_levels()).map(|k| self.level(k)).collect()
    }

    /// Index of the nearest level; inputs above `l_max` map to the top level.
    pub fn index(&self, x: T) -> usize {
        let top = self.num_levels() - 1;
        if !(x > T::zero()) {
            return 0;
        }
        (x / self.step()).floor().to_usize().unwrap_or(top).min(top)
    }

    pub fn quantize(&self, x: T) -> T {
        self.level(self.index(x))
    }
}

/// `P(‖x̃‖² ≤ l)` under `(1−λ) τ² Gamma(M,1) + λ (g²+τ²) Gamma(M,1)`.
pub fn mixture_cdf<T: Real>(l: T, g: T, tau2: T, m: usize, lambda: T) -> T {
    let mf = T::from_usize_lossy(m);
    (T::one() - lambda) * gamma_p(mf, l / tau2) + lambda * gamma_p(mf, l / (g * g + tau2))
}

/// `l_max` with `P(‖x̃‖² ≤ l_max) = ζ`, by bisection.
pub fn lmax_for_user<T: Real>(g: T, tau2: T, m: usize, lambda: T, zeta: f64) -> Result<T> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::Domain(format!("coverage probability {zeta} not in (0, 1)")));
    }
    if !(tau2 > T::zero()) {
        return Err(Error::Domain(format!("tau^2 must be positive, got {tau2}")));
    }
    let z = T::c(zeta);
    let f = |l: T| mixture_cdf(l, g, tau2, m, lambda) - z;
    let mut lo = T::zero();
    let mut hi = T::from_usize_lossy(m) * (tau2 + g * g);
    while f(hi) < T::zero() {
        lo = hi;
        hi = hi * T::c(2.0);
        if !hi.is_finite() {
            return Err(Error::Domain("l_max search overflowed".into()));
        }
    }
    let tol = T::c(1e-12);
    for _ in 0..300 {
        let mid = T::c(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v.abs() < tol {
            return Ok(mid);
        }
        if v < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(T::c(0.5) * (lo + hi))
}

/// One link of a quantised aggregate `Σ_j Δ_j Q_j(‖x̃_j‖²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizedTerm<T> {
    pub delta: T,
    pub g: T,
    pub tau2: T,
    pub quantizer: QuantizerSpec<T>,
}

/// Support size cap; partial sums are coarsened by merging neighbouring
/// values before a convolution would exceed it.
const MAX_ATOMS: usize = 1 << 16;

/// Exact law of the quantised aggregate under both hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLaw<T> {
    /// `(value, P(value | active), P(value | idle))`, values strictly increasing.
    pub atoms: Vec<(T, T, T)>,
    /// False once neighbouring values had to be merged.
    pub exact: bool,
}

// Probability of each quantiser cell when `‖x̃‖² ~ scale · Gamma(M, 1)`.
fn cell_probs<T: Real>(q: &QuantizerSpec<T>, scale: T, m: usize) -> Vec<T> {
    let mf = T::from_usize_lossy(m);
    let n = q.num_levels();
    let step = q.step();
    let mut prev = T::zero();
    (0..n)
        .map(|k| {
            let upper = if k + 1 == n {
                T::one()
            } else {
                gamma_p(mf, step * T::from_usize_lossy(k + 1) / scale)
            };
            let p = (upper - prev).max(T::zero());
            prev = upper;
            p
        })
        .collect()
}

fn merge_equal<T: Real>(mut atoms: Vec<(T, T, T)>) -> Vec<(T, T, T)> {
    atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite support"));
    let mut out: Vec<(T, T, T)> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if a.0 == last.0 => {
                last.1 = last.1 + a.1;
                last.2 = last.2 + a.2;
            }
            _ => out.push(a),
        }
    }
    out
}

// Merges runs of neighbours down to `target` atoms, each placed at its
// mass-weighted mean.
fn coarsen<T: Real>(atoms: Vec<(T, T, T)>, target: usize) -> Vec<(T, T, T)> {
    let per = atoms.len().div_ceil(target);
    atoms
        .chunks(per)
        .map(|c| {
            let (pa, pi) = c.iter().fold((T::zero(), T::zero()), |(a, i), x| (a + x.1, i + x.2));
            let w = pa + pi;
            let v = if w > T::zero() {
                c.iter().map(|x| x.0 * (x.1 + x.2)).sum::<T>() / w
            } else {
                c[c.len() / 2].0
            };
            (v, pa, pi)
        })
        .collect()
}

impl<T: Real> QuantizedLaw<T> {
    pub fn new(terms: &[QuantizedTerm<T>], m: usize) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Empty("no quantised links".into()));
        }
        let mut atoms = vec![(T::zero(), T::one(), T::one())];
        let mut exact = true;
        for t in terms {
            let act = cell_probs(&t.quantizer, t.g * t.g + t.tau2, m);
            let idle = cell_probs(&t.quantizer, t.tau2, m);
            if atoms.len() * act.len() > MAX_ATOMS {
                atoms = coarsen(atoms, (MAX_ATOMS / act.len()).max(1));
                exact = false;
            }
            let mut next = Vec::with_capacity(atoms.len() * act.len());
            for &(v, pa, pi) in &atoms {
                for (k, (&qa, &qi)) in act.iter().zip(&idle).enumerate() {
                    if qa == T::zero() && qi == T::zero() {
                        continue;
                    }
                    next.push((v + t.delta * t.quantizer.level(k), pa * qa, pi * qi));
                }
            }
            atoms = merge_equal(next);
        }
        Ok(Self { atoms, exact })
    }

    /// Threshold between support points minimising `max(P_M, P_F)` for the
    /// rule "active iff statistic ≥ threshold".
    pub fn equal_error(&self) -> EqualError<T> {
        let a = &self.atoms;
        let total_idle: T = a.iter().map(|x| x.2).sum();
        // cut k: atoms 0..k declared idle
        let (mut pm, mut pf) = (T::zero(), total_idle);
        let (mut best_k, mut best) = (0, (pm, pf));
        for k in 1..=a.len() {
            pm = pm + a[k - 1].1;
            pf = (pf - a[k - 1].2).max(T::zero());
            if pm.max(pf) < best.0.max(best.1) {
                best_k = k;
                best = (pm, pf);
            }
        }
        let two = T::c(2.0);
        let threshold = match best_k {
            0 => a[0].0 / two,
            k if k == a.len() => a[k - 1].0 * two,
            k => (a[k - 1].0 + a[k].0) / two,
        };
        EqualError {
            threshold,
            p: (best.0 + best.1) / two,
            pm: best.0,
            pf: best.1,
            method: if self.exact { CdfMethod::Discrete } else { CdfMethod::Coarsened },
        }
    }
}

/// Bits each base station forwards per coherence block when every one of
/// `users` is served by `b_bn` stations and each statistic costs `Q` bits.
pub fn fronthaul_bits(bits: u32, users: usize, b_bn: usize) -> u64 {
    b_bn as u64 * users as u64 * bits as u64
}

/// Precomputed `l_max` on a grid of gains, for one `(M, λ, ζ, τ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmaxTable {
    pub antennas: usize,
    pub lambda: f64,
    pub zeta: f64,
    pub tau2: f64,
    /// `(g, l_max)` with strictly increasing `g`.
    pub entries: Vec<(f64, f64)>,
}

impl LmaxTable {
    pub fn build(gains: &[f64], tau2: f64, m: usize, lambda: f64, zeta: f64) -> Result<Self> {
        let mut g: Vec<f64> = gains.to_vec();
        g.sort_by(f64::total_cmp);
        g.dedup();
        if g.is_empty() {
            return Err(Error::Empty("no gain bins".into()));
        }
        let entries = g
            .into_iter()
            .map(|gi| lmax_for_user(gi, tau2, m, lambda, zeta).map(|l| (gi, l)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            antennas: m,
            lambda,
            zeta,
            tau2,
            entries,
        })
    }

    /// Log-spaced gain grid between `g_min` and `g_max`.
    pub fn log_grid(g_min: f64, g_max: f64, bins: usize) -> Vec<f64> {
        let (a, b) = (g_min.ln(), g_max.ln());
        (0..bins)
            .map(|i| (a + (b - a) * i as f64 / (bins.max(2) - 1) as f64).exp())
            .collect()
    }

    /// Linear interpolation in `ln g`, clamped at the table ends.
    pub fn lookup(&self, g: f64) -> f64 {
        let e = &self.entries;
        if g <= e[0].0 {
            return e[0].1;
        }
        if g >= e[e.len() - 1].0 {
            return e[e.len() - 1].1;
        }
        let i = e.partition_point(|&(gi, _)| gi <= g);
        let (g0, l0) = e[i - 1];
        let (g1, l1) = e[i];
        let t = (g.ln() - g0.ln()) / (g1.ln() - g0.ln());
        l0 + t * (l1 - l0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# coopdetect lmax-table v1 tau_sq={:.10e}\ng_bin,M,lambda,zeta,l_max\n", self.tau2);
        for &(g, l) in &self.entries {
            out.push_str(&format!("{g:.10e},{},{},{},{l:.10e}\n", self.antennas, self.lambda, self.zeta));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut tau2 = None;
        let mut entries = Vec::new();
        let mut params: Option<(usize, f64, f64)> = None;
        let bad = |msg: &str| Error::Format(format!("lmax table: {msg}"));
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.split_whitespace().find_map(|t| t.strip_prefix("tau_sq=")) {
                    tau2 = Some(v.parse::<f64>().map_err(|_| bad("tau_sq"))?);
                }
                continue;
            }
            if line.starts_with("g_bin") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 columns"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(s));
            let m = f[1].trim().parse::<usize>().map_err(|_| bad(f[1]))?;
            let row = (m, num(f[2])?, num(f[3])?);
            match params {
                None => params = Some(row),
                Some(p) if p != row => return Err(bad("mixed parameters")),
                _ => {}
            }
            entries.push((num(f[0])?, num(f[4])?));
        }
        let (antennas, lambda, zeta) = params.ok_or_else(|| bad("no rows"))?;
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(bad("gain bins must increase"));
        }
        Ok(Self {
            antennas,
            lambda,
            zeta,
            tau2: tau2.ok_or_else(|| bad("missing tau_sq header"))?,
            entries,
        })
    }
}
