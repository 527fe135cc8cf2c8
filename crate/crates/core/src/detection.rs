//! Log-likelihood ratios, multi-BS aggregation and error probabilities.
//!
//! After AMP, `x̃ = x + τ u` so `‖x̃‖²` is `(g²+τ²)·Gamma(M, 1)` for an active
//! user and `τ²·Gamma(M, 1)` for an idle one. Aggregating over cooperating
//! base stations, the sufficient statistic `T = Σ_j Δ_j ‖x̃_j‖²` is
//! distributed as `Σ_j θ_j E_j` (active) or `Σ_j κ_j E_j` (idle) with
//! i.i.d. `E_j ~ Gamma(M, 1)` and `κ = θ/(1+θ)`. A user is declared active
//! when `T ≥ l`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{gamma_p, gamma_q, ln_factorial, norm_cdf};

/// `Δ‖x̃‖² − M ln(1+θ)`, the log-ratio of the active and idle likelihoods.
pub fn llr<T: Real>(sq_norm: T, g: T, tau2: T, m: usize) -> T {
    let theta = g * g / tau2;
    let delta = T::one() / tau2 - T::one() / (g * g + tau2);
    delta * sq_norm - T::from_usize_lossy(m) * theta.ln_1p()
}

/// One base station's view of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrRecord<T> {
    pub bs: usize,
    pub cell: usize,
    pub user: usize,
    pub sq_norm: T,
    pub g: T,
    pub tau2: T,
    pub delta: T,
    pub theta: T,
    pub llr: T,
}

impl<T: Real> LlrRecord<T> {
    pub fn new(bs: usize, cell: usize, user: usize, sq_norm: T, g: T, tau2: T, m: usize) -> Result<Self> {
        if !(tau2 > T::zero()) {
            return Err(Error::Domain(format!("tau^2 must be positive, got {tau2}")));
        }
        let theta = g * g / tau2;
        let delta = T::one() / tau2 - T::one() / (g * g + tau2);
        Ok(Self {
            bs,
            cell,
            user,
            sq_norm,
            g,
            tau2,
            delta,
            theta,
            llr: delta * sq_norm - T::from_usize_lossy(m) * theta.ln_1p(),
        })
    }

    pub fn link(&self) -> Link<T> {
        Link { g: self.g, tau2: self.tau2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate<T> {
    /// `Σ_j Δ_j ‖x̃_j‖²`, compared against the threshold.
    pub statistic: T,
    /// Aggregated LLR, `statistic − Σ_j M ln(1+θ_j)`.
    pub llr: T,
}

/// Sums the per-BS LLRs of one user.
pub fn aggregate<T: Real>(records: &[LlrRecord<T>]) -> Result<Aggregate<T>> {
    if records.is_empty() {
        return Err(Error::Empty("no LLR records to aggregate".into()));
    }
    let statistic = records.iter().map(|r| r.delta * r.sq_norm).sum();
    let llr = records.iter().map(|r| r.llr).sum();
    Ok(Aggregate { statistic, llr })
}

/// `(P_M, P_F)` of a single-BS detector thresholding `‖x̃‖²` at `l`.
pub fn pm_pf_massive<T: Real>(g: T, tau2: T, m: usize, l: T) -> (T, T) {
    let mf = T::from_usize_lossy(m);
    if !(l > T::zero()) {
        return (T::zero(), T::one());
    }
    (gamma_p(mf, l / (g * g + tau2)), gamma_q(mf, l / tau2))
}

/// Gaussian approximations of [`pm_pf_massive`] for large `M`.
pub fn pm_pf_clt<T: Real>(g: T, tau2: T, m: usize, l: T) -> (T, T) {
    let mf = T::from_usize_lossy(m);
    let sd = mf.sqrt();
    let pm = norm_cdf((l / (g * g + tau2) - mf) / sd);
    let pf = norm_cdf(-(l / tau2 - mf) / sd);
    (pm, pf)
}

/// Gain and effective noise of one cooperating link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link<T> {
    pub g: T,
    pub tau2: T,
}

impl<T: Real> Link<T> {
    pub fn theta(&self) -> T {
        self.g * self.g / self.tau2
    }
}

/// How a weighted-Gamma CDF was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfMethod {
    /// One distinct weight: a single incomplete-gamma value.
    Closed,
    /// Signed Erlang mixture from the convolution recursion.
    Recursion,
    /// Phase-type evaluation, used when the recursion loses too many digits
    /// or there are more than [`MAX_RECURSION_WEIGHTS`] distinct weights.
    PhaseType,
    /// Exact law of a quantised statistic on its finite support.
    Discrete,
    /// Discrete law after merging neighbouring support points.
    Coarsened,
}

impl CdfMethod {
    pub fn label(&self) -> &'static str {
        match self {
            CdfMethod::Closed => "closed",
            CdfMethod::Recursion => "recursion",
            CdfMethod::PhaseType => "phase_type",
            CdfMethod::Discrete => "discrete",
            CdfMethod::Coarsened => "coarsened",
        }
    }
}

/// Distinct weights handled by the closed-form recursion.
pub const MAX_RECURSION_WEIGHTS: usize = 4;

/// Relative error budget before the recursion hands over to the
/// phase-type evaluation.
pub const RECURSION_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedGammaCdf<T> {
    pub cdf: T,
    /// `1 − cdf`, evaluated without cancellation.
    pub ccdf: T,
    pub method: CdfMethod,
    /// Bound on the absolute rounding error of `cdf` and `ccdf`.
    pub error_bound: T,
}

/// Distinct positive weights with multiplicities (in units of `M`).
fn group_weights<T: Real>(weights: &[T]) -> Vec<(T, usize)> {
    let mut w: Vec<T> = weights.iter().copied().filter(|&v| v > T::zero()).collect();
    w.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    let mut groups: Vec<(T, usize)> = Vec::new();
    for v in w {
        match groups.last_mut() {
            Some((u, c)) if *u == v => *c += 1,
            _ => groups.push((v, 1)),
        }
    }
    groups
}

/// `P(Σ_j w_j E_j ≤ x)` for i.i.d. `E_j ~ Gamma(M, 1)`.
///
/// Zero weights are dropped; with no positive weight the sum is identically
/// zero.
pub fn weighted_gamma_cdf<T: Real>(weights: &[T], m: usize, x: T) -> WeightedGammaCdf<T> {
    let groups = group_weights(weights);
    let exact = |cdf: T, method| WeightedGammaCdf {
        cdf,
        ccdf: T::one() - cdf,
        method,
        error_bound: T::zero(),
    };
    if groups.is_empty() {
        return exact(if x >= T::zero() { T::one() } else { T::zero() }, CdfMethod::Closed);
    }
    if !(x > T::zero()) {
        return exact(T::zero(), CdfMethod::Closed);
    }
    if groups.len() == 1 {
        let (w, c) = groups[0];
        let shape = T::from_usize_lossy(c * m);
        return WeightedGammaCdf {
            cdf: gamma_p(shape, x / w),
            ccdf: gamma_q(shape, x / w),
            method: CdfMethod::Closed,
            error_bound: T::epsilon() * T::c(64.0),
        };
    }
    if groups.len() <= MAX_RECURSION_WEIGHTS {
        let r = recursion_cdf(&groups, m, x);
        let tol = T::c(RECURSION_REL_TOL);
        if r.error_bound <= tol * r.cdf.min(r.ccdf) {
            return r;
        }
    }
    phase_type_cdf(&groups, m, x)
}

/// Signed mixture of Erlang laws `Σ c_{k,i} Erlang(i, rate_k)`.
struct ErlangMixture<T> {
    rates: Vec<T>,
    /// `coefs[k][i-1]` multiplies `Erlang(i, rates[k])`.
    coefs: Vec<Vec<T>>,
}

fn ln_binomial<T: Real>(n: usize, k: usize) -> T {
    let f = |v: usize| (T::from_usize_lossy(v) + T::one()).ln_gamma();
    f(n) - f(k) - f(n - k)
}

impl<T: Real> ErlangMixture<T> {
    fn erlang(rate: T, shape: usize) -> Self {
        let mut c = vec![T::zero(); shape];
        c[shape - 1] = T::one();
        Self {
            rates: vec![rate],
            coefs: vec![c],
        }
    }

    /// Convolution with `Erlang(n, b)`, `b` distinct from every rate present.
    ///
    /// Partial fractions of `(a/(a+s))^i (b/(b+s))^n`:
    /// the `(a/(a+s))^p` coefficient is
    /// `C(i+n−1−p, n−1) (b/(b−a))^n (a/(a−b))^{i−p}` and the `(b/(b+s))^q`
    /// coefficient is `C(i+n−1−q, i−1) (a/(a−b))^i (b/(b−a))^{n−q}`.
    fn convolve(&mut self, b: T, n: usize) {
        let mut new_b = vec![T::zero(); n];
        for (k, &a) in self.rates.iter().enumerate() {
            let u = b / (b - a);
            let v = a / (a - b);
            let (lu, su) = (u.abs().ln(), u.signum());
            let (lv, sv) = (v.abs().ln(), v.signum());
            let old = std::mem::take(&mut self.coefs[k]);
            let mut updated = vec![T::zero(); old.len()];
            for (idx, &c) in old.iter().enumerate() {
                if c == T::zero() {
                    continue;
                }
                let i = idx + 1;
                for p in 1..=i {
                    let e = i - p;
                    let mag: T = ln_binomial::<T>(i + n - 1 - p, n - 1) + T::from_usize_lossy(n) * lu + T::from_usize_lossy(e) * lv;
                    let sign = powi_sign(su, n) * powi_sign(sv, e);
                    updated[p - 1] = updated[p - 1] + c * sign * mag.exp();
                }
                for q in 1..=n {
                    let e = n - q;
                    let mag: T = ln_binomial::<T>(i + n - 1 - q, i - 1) + T::from_usize_lossy(i) * lv + T::from_usize_lossy(e) * lu;
                    let sign = powi_sign(sv, i) * powi_sign(su, e);
                    new_b[q - 1] = new_b[q - 1] + c * sign * mag.exp();
                }
            }
            self.coefs[k] = updated;
        }
        self.rates.push(b);
        self.coefs.push(new_b);
    }

    fn abs_mass(&self) -> T {
        self.coefs.iter().flatten().map(|c| c.abs()).sum()
    }

    fn terms(&self) -> usize {
        self.coefs.iter().map(Vec::len).sum()
    }
}

fn powi_sign<T: Real>(s: T, e: usize) -> T {
    if s < T::zero() && e % 2 == 1 {
        -T::one()
    } else {
        T::one()
    }
}

fn recursion_cdf<T: Real>(groups: &[(T, usize)], m: usize, x: T) -> WeightedGammaCdf<T> {
    let mut mix = ErlangMixture::erlang(T::one() / groups[0].0, groups[0].1 * m);
    for &(w, c) in &groups[1..] {
        mix.convolve(T::one() / w, c * m);
    }
    let mut cdf = T::zero();
    let mut ccdf = T::zero();
    for (k, &rate) in mix.rates.iter().enumerate() {
        for (idx, &c) in mix.coefs[k].iter().enumerate() {
            if c == T::zero() {
                continue;
            }
            let shape = T::from_usize_lossy(idx + 1);
            cdf = cdf + c * gamma_p(shape, rate * x);
            ccdf = ccdf + c * gamma_q(shape, rate * x);
        }
    }
    let error_bound = mix.abs_mass() * T::epsilon() * T::from_usize_lossy(64 * mix.terms().max(1));
    WeightedGammaCdf {
        cdf: cdf.max(T::zero()).min(T::one()),
        ccdf: ccdf.max(T::zero()).min(T::one()),
        method: CdfMethod::Recursion,
        error_bound,
    }
}

/// Upper-triangular matrix product on dense row-major storage.
fn upper_mul<T: Real>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); n * n];
    for i in 0..n {
        for k in i..n {
            let aik = a[i * n + k];
            if aik == T::zero() {
                continue;
            }
            for j in k..n {
                c[i * n + j] = c[i * n + j] + aik * b[k * n + j];
            }
        }
    }
    c
}

/// CDF of the sum of exponential phases (each weight contributes `c·M`
/// phases of rate `1/w`), i.e. the absorption time of a pure-birth chain.
///
/// `exp(Qx)` is formed by uniformisation on a step `h` with `Λh ≤ 1`
/// followed by repeated squaring. Every matrix involved is non-negative,
/// so both the absorbed and the surviving mass keep full relative accuracy.
fn phase_type_cdf<T: Real>(groups: &[(T, usize)], m: usize, x: T) -> WeightedGammaCdf<T> {
    let rates: Vec<T> = groups
        .iter()
        .flat_map(|&(w, c)| std::iter::repeat_n(T::one() / w, c * m))
        .collect();
    let n = rates.len() + 1;
    let lambda = rates.iter().copied().fold(T::zero(), T::max);
    let lx = lambda * x;
    let squarings = if lx > T::one() {
        lx.log2().ceil().to_usize().unwrap_or(0)
    } else {
        0
    };
    let h = x / T::c(2f64.powi(squarings as i32));
    let lh = lambda * h;

    // U = I + Q/Λ, upper bidiagonal and stochastic
    let mut u = vec![T::zero(); n * n];
    for (i, &r) in rates.iter().enumerate() {
        u[i * n + i] = T::one() - r / lambda;
        u[i * n + i + 1] = r / lambda;
    }
    u[(n - 1) * n + (n - 1)] = T::one();

    let mut p = vec![T::zero(); n * n];
    let mut power = vec![T::zero(); n * n];
    for i in 0..n {
        power[i * n + i] = T::one();
    }
    let mut weight = (-lh).exp();
    let mut k = 0usize;
    let mut mass = T::zero();
    loop {
        for (pv, &qv) in p.iter_mut().zip(&power) {
            *pv = *pv + weight * qv;
        }
        mass = mass + weight;
        k += 1;
        if T::one() - mass <= T::epsilon() * T::c(0.25) || k > 200 {
            break;
        }
        power = upper_mul(&power, &u, n);
        weight = weight * lh / T::from_usize_lossy(k);
    }
    // every term of the series is stochastic; undo the truncation loss
    p.iter_mut().for_each(|v| *v = *v / mass);
    for _ in 0..squarings {
        p = upper_mul(&p, &p, n);
    }
    // Both tails keep their relative accuracy, which still degrades by about
    // a factor two per squaring; the larger one is taken as the complement.
    let cdf = p[n - 1];
    let ccdf: T = p[..n - 1].iter().copied().sum();
    let (cdf, ccdf) = if cdf <= ccdf {
        (cdf, T::one() - cdf)
    } else {
        (T::one() - ccdf, ccdf)
    };
    let growth = T::c(2f64.powi(squarings as i32));
    WeightedGammaCdf {
        cdf: cdf.max(T::zero()).min(T::one()),
        ccdf: ccdf.max(T::zero()).min(T::one()),
        method: CdfMethod::PhaseType,
        error_bound: T::epsilon() * T::from_usize_lossy(8 * n) * (growth + T::c(2.0)) * cdf.min(ccdf),
    }
}

/// [`weighted_gamma_cdf`] forced onto the phase-type evaluation, with no
/// grouping shortcut; equal weights become one long Erlang chain.
pub fn weighted_gamma_cdf_phase_type<T: Real>(weights: &[T], m: usize, x: T) -> WeightedGammaCdf<T> {
    let singles: Vec<(T, usize)> = weights.iter().copied().filter(|&w| w > T::zero()).map(|w| (w, 1)).collect();
    if singles.is_empty() || !(x > T::zero()) {
        return weighted_gamma_cdf(weights, m, x);
    }
    phase_type_cdf(&singles, m, x)
}

/// Monte Carlo estimate of `P(Σ_j w_j E_j ≤ x)`; a slow reference.
pub fn weighted_gamma_cdf_mc<R: Rng + ?Sized>(weights: &[f64], m: usize, x: f64, samples: usize, rng: &mut R) -> f64 {
    let gamma = Gamma::new(m as f64, 1.0).expect("valid shape");
    let hits = (0..samples)
        .filter(|_| weights.iter().map(|&w| w * gamma.sample(rng)).sum::<f64>() <= x)
        .count();
    hits as f64 / samples as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoopErrors<T> {
    pub pm: T,
    pub pf: T,
    /// The less exact of the two evaluation methods used.
    pub method: CdfMethod,
}

/// `(P_M, P_F)` of the aggregated detector `Σ_j Δ_j ‖x̃_j‖² ≥ l`.
pub fn pm_pf_coop<T: Real>(links: &[Link<T>], m: usize, l: T) -> CoopErrors<T> {
    let theta: Vec<T> = links.iter().map(Link::theta).collect();
    let kappa: Vec<T> = theta.iter().map(|&t| t / (T::one() + t)).collect();
    let active = weighted_gamma_cdf(&theta, m, l);
    let idle = weighted_gamma_cdf(&kappa, m, l);
    let rank = |c: CdfMethod| match c {
        CdfMethod::Closed => 0,
        CdfMethod::Recursion => 1,
        CdfMethod::PhaseType => 2,
        CdfMethod::Discrete | CdfMethod::Coarsened => 3,
    };
    let method = if rank(active.method) >= rank(idle.method) {
        active.method
    } else {
        idle.method
    };
    // T ≥ l declares active; at l = 0 everything is declared active.
    let (pm, pf) = if l > T::zero() { (active.cdf, idle.ccdf) } else { (T::zero(), T::one()) };
    CoopErrors { pm, pf, method }
}

/// Threshold where missed detection and false alarm are equally likely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualError<T> {
    pub threshold: T,
    /// `(P_M + P_F)/2` at the threshold.
    pub p: T,
    pub pm: T,
    pub pf: T,
    pub method: CdfMethod,
}

/// Bisection (in `ln l`) for `P_M(l) = P_F(l)`; `f` returns `(P_M, P_F)`.
fn equal_error_by_bisection<T: Real>(guess: T, mut f: impl FnMut(T) -> (T, T, CdfMethod)) -> EqualError<T> {
    let diff = |v: (T, T, CdfMethod)| v.0 - v.1;
    let mut lo = guess;
    let mut hi = guess;
    let mut vlo = f(lo);
    let mut guard = 0;
    while diff(vlo) > T::zero() && guard < 2000 {
        lo = lo * T::c(0.5);
        vlo = f(lo);
        guard += 1;
    }
    let mut vhi = f(hi);
    while diff(vhi) < T::zero() && guard < 4000 {
        hi = hi * T::c(2.0);
        vhi = f(hi);
        guard += 1;
    }
    let rel = T::c(1e-9);
    let mut best = if diff(vlo).abs() < diff(vhi).abs() { (lo, vlo) } else { (hi, vhi) };
    for _ in 0..200 {
        let (pm, pf, _) = best.1;
        if (pm - pf).abs() <= rel * (pm + pf) || hi / lo - T::one() < T::epsilon() * T::c(4.0) {
            break;
        }
        let mid = (lo * hi).sqrt();
        let v = f(mid);
        if diff(v) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if diff(v).abs() < diff(best.1).abs() {
            best = (mid, v);
        }
        if diff(v) == T::zero() {
            break;
        }
    }
    let (threshold, (pm, pf, method)) = best;
    EqualError {
        threshold,
        p: (pm + pf) * T::c(0.5),
        pm,
        pf,
        method,
    }
}

/// Equal-error threshold on `‖x̃‖²` for a single base station.
pub fn equal_error_massive<T: Real>(g: T, tau2: T, m: usize) -> EqualError<T> {
    let guess = T::from_usize_lossy(m) * (tau2 + T::c(0.5) * g * g);
    equal_error_by_bisection(guess, |l| {
        let (pm, pf) = pm_pf_massive(g, tau2, m, l);
        (pm, pf, CdfMethod::Closed)
    })
}

/// Equal-error threshold on the aggregated statistic.
pub fn equal_error_coop<T: Real>(links: &[Link<T>], m: usize) -> EqualError<T> {
    let theta_sum: T = links.iter().map(Link::theta).sum();
    if !(theta_sum > T::zero()) {
        // no link carries information: the hypotheses are indistinguishable
        return EqualError {
            threshold: T::zero(),
            p: T::c(0.5),
            pm: T::c(0.5),
            pf: T::c(0.5),
            method: CdfMethod::Closed,
        };
    }
    let kappa_sum: T = links.iter().map(|l| l.theta() / (T::one() + l.theta())).sum();
    let guess = T::from_usize_lossy(m) * T::c(0.5) * (theta_sum + kappa_sum);
    equal_error_by_bisection(guess, |l| {
        let e = pm_pf_coop(links, m, l);
        (e.pm, e.pf, e.method)
    })
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Per-user detection outcome counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UserCounts {
    pub active: u64,
    pub misses: u64,
    pub inactive: u64,
    pub false_alarms: u64,
}

impl UserCounts {
    pub fn record(&mut self, active: bool, declared_active: bool) {
        if active {
            self.active += 1;
            if !declared_active {
                self.misses += 1;
            }
        } else {
            self.inactive += 1;
            if declared_active {
                self.false_alarms += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &UserCounts) {
        self.active += other.active;
        self.misses += other.misses;
        self.inactive += other.inactive;
        self.false_alarms += other.false_alarms;
    }

    pub fn trials(&self) -> u64 {
        self.active + self.inactive
    }

    /// Miss rate; `None` when the user was never active.
    pub fn pm(&self) -> Option<f64> {
        (self.active > 0).then(|| self.misses as f64 / self.active as f64)
    }

    /// False-alarm rate; `None` when the user was never idle.
    pub fn pf(&self) -> Option<f64> {
        (self.inactive > 0).then(|| self.false_alarms as f64 / self.inactive as f64)
    }

    /// `(misses + false alarms) / trials`; unbiased for the common error
    /// rate when the threshold equalises `P_M` and `P_F`, and far less noisy
    /// than averaging the two conditional rates.
    pub fn equal_error(&self) -> Option<f64> {
        let n = self.trials();
        (n > 0).then(|| (self.misses + self.false_alarms) as f64 / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    Analytic,
    Empirical,
}

impl ProfileSource {
    pub fn label(&self) -> &'static str {
        match self {
            ProfileSource::Analytic => "analytic",
            ProfileSource::Empirical => "empirical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserError {
    pub cell: usize,
    pub user: usize,
    /// Gain towards the user's own (nearest) base station.
    pub g: f64,
    pub threshold: f64,
    /// NaN when undefined (user never active / never idle).
    pub pm: f64,
    pub pf: f64,
    pub p_equal: f64,
    pub counts: Option<UserCounts>,
    pub method: Option<CdfMethod>,
}

/// Per-user error probabilities of one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub source: ProfileSource,
    pub users: Vec<UserError>,
}

impl ErrorProfile {
    /// Sorted equal-error values (undefined entries dropped).
    pub fn sorted_equal_errors(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.users.iter().map(|u| u.p_equal).filter(|p| p.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// 95th percentile of the per-user equal-error values.
    pub fn cell_edge_95(&self) -> f64 {
        percentile(&self.sorted_equal_errors(), 0.95)
    }

    /// Rows of `cell,user,g,P_M,P_F,p_equal`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,user,g,P_M,P_F,p_equal\n");
        for u in &self.users {
            out.push_str(&format!(
                "{},{},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                u.cell, u.user, u.g, u.pm, u.pf, u.p_equal
            ));
        }
        out
    }

    /// `(percentile, p)` pairs of the empirical CDF.
    pub fn cdf_points(&self) -> Vec<(f64, f64)> {
        let v = self.sorted_equal_errors();
        let n = v.len() as f64;
        v.iter().enumerate().map(|(i, &p)| ((i + 1) as f64 / n, p)).collect()
    }
}

/// Nearest-rank percentile of sorted data (`q` in (0, 1]).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Sup-distance between the CDF of per-user error estimates `k/trials`
/// and the CDF those estimates would have if user `i` erred with
/// probability `predicted[i]` in every trial (`k ~ Binomial(trials, p_i)`).
///
/// Comparing a finite-trial estimate directly with exact probabilities
/// charges the estimator's resolution `1/trials` to the model: every user
/// with `p ≪ 1/trials` sits at exactly zero.
pub fn estimator_cdf_gap(estimates: &[f64], predicted: &[f64], trials: u64) -> f64 {
    let est: Vec<f64> = estimates.iter().copied().filter(|v| v.is_finite()).collect();
    let pred: Vec<f64> = predicted.iter().copied().filter(|v| v.is_finite()).collect();
    if est.is_empty() || pred.is_empty() || trials == 0 {
        return f64::NAN;
    }
    let n = trials as usize;
    let mut expected = vec![0.0; n + 1];
    for &p in &pred {
        let p = p.clamp(0.0, 1.0);
        if p == 0.0 || p == 1.0 {
            expected[if p == 0.0 { 0 } else { n }] += 1.0;
            continue;
        }
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        let lnf: f64 = ln_factorial(n);
        for (k, e) in expected.iter_mut().enumerate() {
            let lk: f64 = ln_factorial(k);
            let lnk: f64 = ln_factorial(n - k);
            *e += (lnf - lk - lnk + k as f64 * lp + (n - k) as f64 * lq).exp();
        }
    }
    let mut counts = vec![0usize; n + 1];
    for &e in &est {
        let k = (e * trials as f64).round().clamp(0.0, n as f64) as usize;
        counts[k] += 1;
    }
    let (ne, np) = (est.len() as f64, pred.len() as f64);
    let (mut fe, mut fp, mut gap) = (0.0, 0.0, 0.0f64);
    for k in 0..=n {
        fe += counts[k] as f64 / ne;
        fp += expected[k] / np;
        gap = gap.max((fe - fp).abs());
    }
    gap
}

/// Largest vertical distance between the empirical CDFs of two samples.
pub fn cdf_sup_gap(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.iter().copied().filter(|v| v.is_finite()).collect();
    let mut b: Vec<f64> = b.iter().copied().filter(|v| v.is_finite()).collect();
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut gap: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        gap = gap.max((i as f64 / na - j as f64 / nb).abs());
    }
    gap
}
