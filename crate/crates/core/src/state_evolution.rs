//! State evolution for the non-cooperative (TIN) and cooperative receivers.
//!
//! A base station that runs AMP over the users within `ρ` of itself and
//! treats everyone else as Gaussian noise tracks
//!
//! ```text
//! τ²_{t+1} = σ_w² + (NB/L) λ (a/R_net²) ∫_{g(ρ)}^∞ ψ(g; τ_t²) dg
//!                 + (NB/L) λ (R_net² − ρ²)/R_net² · E[G² | ρ ≤ d ≤ R_net]
//! ```
//!
//! `ρ = R_cell` is the massive-MIMO receiver, `ρ = R_net` full cooperation.
//! The in-cell gain support reaches `+∞` (users may sit on top of the base
//! station), so the ψ-integral always runs to infinity.

use crate::error::{Error, Result};
use crate::geometry::{fading_dist, second_moment_annulus, second_moment_in_cell, NetworkConfig};
use crate::quadrature::{integrate_power_tail, integrate_with_breaks, QuadOpts};
use crate::scalar::{attainable_tol, logistic, Real};
use crate::special::ln_factorial;

/// Receiver architecture for a state-evolution run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Architecture {
    /// Own-cell users recovered, all others treated as noise.
    Tin,
    /// All users of the network recovered jointly.
    Cooperative,
    /// Users within `radius` metres recovered.
    Partial { radius: f64 },
}

impl Architecture {
    pub fn label(&self) -> &'static str {
        match self {
            Architecture::Tin => "tin",
            Architecture::Cooperative => "coop",
            Architecture::Partial { .. } => "partial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeOptions {
    /// Stop once `|τ²_{t+1} − τ²_t| / τ²_t` falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Relative tolerance of the inner quadratures.
    pub quad_rel_tol: f64,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 500,
            quad_rel_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateEvolutionTrace<T> {
    pub architecture: Architecture,
    pub tau_sq_seq: Vec<T>,
    pub tau_sq_inf: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> StateEvolutionTrace<T> {
    /// CSV with columns `t,tau_sq`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,tau_sq\n");
        for (t, v) in self.tau_sq_seq.iter().enumerate() {
            out.push_str(&format!("{t},{:.10e}\n", v.f64()));
        }
        out
    }
}

fn phi_integral<T: Real>(s: T, m: usize, lambda: T, upper: bool, rel: f64) -> T {
    let mf = T::from_usize_lossy(m);
    let c0 = ((T::one() - lambda) / lambda).ln() + mf * s.ln_1p();
    let lnfact: T = ln_factorial(m);
    let t_max = mf + T::c(40.0) * mf.sqrt();
    let f = |t: T| {
        if t <= T::zero() {
            return T::zero();
        }
        let k = c0 - s * t;
        let w = (mf * t.ln() - t - lnfact).exp();
        w * logistic(if upper { k } else { -k })
    };
    let mut breaks = vec![mf];
    if s > T::zero() && c0.is_finite() {
        // the logistic factor switches over a width 1/s around t0; pin the
        // transition so the rule cannot step over it
        let t0 = c0 / s;
        for w in [-40.0, -16.0, -4.0, -1.0, 0.0, 1.0, 4.0, 16.0, 40.0] {
            breaks.push(t0 + T::c(w) / s);
        }
    }
    integrate_with_breaks(f, T::zero(), t_max, &breaks, QuadOpts::new(0.0, rel)).value
}

/// `φ_M(s) / M!` with
/// `φ_M(s) = ∫₀^∞ tᴹ e^{−t} / (1 + ((1−λ)/λ)(1+s)ᴹ e^{−st}) dt`.
pub fn phi_ratio<T: Real>(s: T, m: usize, lambda: T) -> T {
    phi_integral(s, m, lambda, false, attainable_tol::<T>(1e-12).f64())
}

/// `1 − φ_M(s)/M!`, evaluated directly (no cancellation when `φ_M ≈ M!`).
pub fn phi_bar_ratio<T: Real>(s: T, m: usize, lambda: T) -> T {
    phi_integral(s, m, lambda, true, attainable_tol::<T>(1e-12).f64())
}

/// `φ_M(s)` itself.
pub fn phi_m<T: Real>(s: T, m: usize, lambda: T) -> T {
    phi_ratio(s, m, lambda) * ln_factorial::<T>(m).exp()
}

/// `ψ(g) = g^{2−γ} τ²/(g²+τ²) + g^{4−γ}/(g²+τ²) · (1 − φ_M(g²/τ²)/M!)`.
///
/// `λ g^γ ψ(g)` is the per-antenna MSE of the denoiser for a user with
/// gain `g`.
pub fn psi<T: Real>(g: T, tau2: T, m: usize, lambda: T, gamma: T) -> T {
    if !(g > T::zero()) {
        return T::zero();
    }
    let g2 = g * g;
    let bar = phi_bar_ratio(g2 / tau2, m, lambda);
    g.powf(T::c(2.0) - gamma) * (tau2 + g2 * bar) / (g2 + tau2)
}

/// Everything the SE map needs, resolved once per configuration.
#[derive(Debug, Clone)]
pub struct SeModel<T> {
    pub architecture: Architecture,
    pub sigma2: T,
    pub antennas: usize,
    pub lambda: T,
    pub gamma: T,
    /// Multiplies `∫ψ`: `(NB/L) λ a / R_net²`.
    pub recovered_weight: T,
    /// Lower end of the recovered users' gain support.
    pub eps_recovered: T,
    /// Interference from users that are not recovered.
    pub unrecovered: T,
    pub tau0_sq: T,
    quad_rel_tol: f64,
}

impl<T: Real> SeModel<T> {
    pub fn new(cfg: &NetworkConfig, architecture: Architecture, opts: &SeOptions) -> Result<Self> {
        cfg.validate()?;
        let r_cell = cfg.cell_radius();
        let r_net = cfg.network_radius();
        let radius = match architecture {
            Architecture::Tin => r_cell,
            Architecture::Cooperative => r_net,
            Architecture::Partial { radius } => {
                let slack = 1e-9 * r_net;
                if !(radius >= r_cell - slack && radius <= r_net + slack) {
                    return Err(Error::Domain(format!(
                        "detection radius {radius} outside [{r_cell}, {r_net}]"
                    )));
                }
                radius.clamp(r_cell, r_net)
            }
        };
        let (n, b, l) = (cfg.users_per_cell as f64, cfg.num_cells as f64, cfg.seq_len as f64);
        let lambda = cfg.activity_prob;
        let fd = fading_dist::<f64>(cfg, radius.min(r_net * (1.0 - 1e-12)), r_net)?;
        let load = n * b / l * lambda;
        let unrecovered = if radius < r_net * (1.0 - 1e-12) {
            let e: f64 = second_moment_annulus(cfg.pathloss_alpha_db, cfg.pathloss_beta_db, radius, r_net)?;
            load * (r_net * r_net - radius * radius) / (r_net * r_net) * e
        } else {
            0.0
        };
        // X⁰ = 0: the first residual carries every user's full prior power.
        let e_in: f64 = second_moment_in_cell(cfg)?;
        let e_out: f64 = if cfg.num_cells > 1 {
            second_moment_annulus(cfg.pathloss_alpha_db, cfg.pathloss_beta_db, r_cell, r_net)?
        } else {
            0.0
        };
        let sigma2 = cfg.noise_variance();
        let tau0 = sigma2 + lambda * n / l * (e_in + (b - 1.0) * e_out);
        Ok(Self {
            architecture,
            sigma2: T::c(sigma2),
            antennas: cfg.antennas,
            lambda: T::c(lambda),
            gamma: T::c(fd.gamma),
            recovered_weight: T::c(load * fd.a / (r_net * r_net)),
            eps_recovered: T::c(cfg.gain(radius)),
            unrecovered: T::c(unrecovered),
            tau0_sq: T::c(tau0),
            quad_rel_tol: opts.quad_rel_tol,
        })
    }

    /// `∫_{ε}^∞ ψ(g; τ²) dg` over the recovered users.
    pub fn psi_integral(&self, tau2: T) -> T {
        let p = T::c(2.0) / (self.gamma - T::one());
        let tau = tau2.sqrt();
        let breaks: Vec<T> = [0.1, 0.3, 1.0, 3.0, 10.0, 100.0]
            .iter()
            .map(|&c| tau * T::c(c))
            .collect();
        let (m, lambda, gamma) = (self.antennas, self.lambda, self.gamma);
        let opts = QuadOpts::new(0.0, attainable_tol::<T>(self.quad_rel_tol).f64());
        integrate_power_tail(|g| psi(g, tau2, m, lambda, gamma), self.eps_recovered, p, &breaks, opts).value
    }

    /// One application of the SE map.
    pub fn rhs(&self, tau2: T) -> T {
        self.sigma2 + self.unrecovered + self.recovered_weight * self.psi_integral(tau2)
    }

    /// Noise-plus-unrecovered-interference floor `σ̃²` of this receiver.
    pub fn noise_floor(&self) -> T {
        self.sigma2 + self.unrecovered
    }

    pub fn solve(&self, opts: &SeOptions) -> StateEvolutionTrace<T> {
        let tol = attainable_tol::<T>(opts.tol);
        let mut seq = vec![self.tau0_sq];
        let mut tau2 = self.tau0_sq;
        let mut converged = false;
        for _ in 0..opts.max_iters {
            let next = self.rhs(tau2);
            seq.push(next);
            let change = ((next - tau2) / tau2).abs();
            tau2 = next;
            if change < tol {
                converged = true;
                break;
            }
        }
        StateEvolutionTrace {
            architecture: self.architecture,
            iterations: seq.len() - 1,
            tau_sq_inf: tau2,
            tau_sq_seq: seq,
            converged,
        }
    }
}

pub fn se_fixed_point<T: Real>(
    cfg: &NetworkConfig,
    architecture: Architecture,
    opts: &SeOptions,
) -> Result<StateEvolutionTrace<T>> {
    Ok(SeModel::new(cfg, architecture, opts)?.solve(opts))
}

pub fn se_fixed_point_tin<T: Real>(cfg: &NetworkConfig) -> Result<StateEvolutionTrace<T>> {
    se_fixed_point(cfg, Architecture::Tin, &SeOptions::default())
}

pub fn se_fixed_point_coop<T: Real>(cfg: &NetworkConfig) -> Result<StateEvolutionTrace<T>> {
    se_fixed_point(cfg, Architecture::Cooperative, &SeOptions::default())
}

pub fn se_partial_recovery<T: Real>(cfg: &NetworkConfig, radius: f64) -> Result<StateEvolutionTrace<T>> {
    se_fixed_point(cfg, Architecture::Partial { radius }, &SeOptions::default())
}

/// Large-`B` limit of the inter-cell interference term of the TIN map:
/// `(B/R_net²)(N/L) λ R_cell^{2−β/10} 10^{−α/10} / (β/20 − 1)`.
pub fn interference_limit(cfg: &NetworkConfig) -> f64 {
    let r_cell = cfg.cell_radius();
    let r_net = cfg.network_radius();
    let (alpha, beta) = (cfg.pathloss_alpha_db, cfg.pathloss_beta_db);
    cfg.num_cells as f64 / (r_net * r_net) * cfg.users_per_cell as f64 / cfg.seq_len as f64
        * cfg.activity_prob
        * r_cell.powf(2.0 - beta / 10.0)
        * 10f64.powf(-alpha / 10.0)
        / (beta / 20.0 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::effective_noise_variance_tin;
    use crate::special::gamma_p;

    #[test]
    fn phi_limits() {
        for m in [1, 4, 8] {
            let r = phi_ratio(3.0f64, m, 1.0);
            assert!((r - 1.0).abs() < 1e-12, "M={m} {r}");
            assert!(phi_bar_ratio(3.0f64, m, 1.0) < 1e-15);
            let r0 = phi_ratio(0.0f64, m, 0.05);
            assert!((r0 - 0.05).abs() < 1e-12);
            assert!((phi_bar_ratio(0.0f64, m, 0.05) - 0.95).abs() < 1e-12);
        }
        let f = phi_m(0.0f64, 4, 0.3);
        assert!((f - 0.3 * 24.0).abs() < 1e-10);
    }

    #[test]
    fn phi_parts_sum_to_one() {
        for &s in &[0.01f64, 0.5, 4.0, 40.0, 1e4] {
            for m in [1, 2, 8, 32] {
                let a = phi_ratio(s, m, 0.05);
                let b = phi_bar_ratio(s, m, 0.05);
                assert!((a + b - 1.0).abs() < 1e-10, "s={s} M={m}");
                assert!(a > 0.0 && a <= 1.0 + 1e-12 && b >= 0.0, "s={s} M={m} {a} {b}");
            }
        }
    }

    #[test]
    fn phi_bar_sharp_transition_against_simpson() {
        // For large s the logistic factor is a near-step at t0; a dense
        // composite Simpson rule over the support is an independent check.
        let (s, m, lambda) = (1e6f64, 4usize, 0.05f64);
        let c0 = ((1.0 - lambda) / lambda).ln() + m as f64 * s.ln_1p();
        let end = c0 / s + 80.0 / s;
        let n = 200_000;
        let h = end / n as f64;
        let f = |t: f64| t.powi(m as i32) * (-t).exp() / 24.0 * logistic(c0 - s * t);
        let mut acc = f(0.0) + f(end);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let simpson = acc * h / 3.0;
        let got = phi_bar_ratio(s, m, lambda);
        assert!((got / simpson - 1.0).abs() < 1e-8, "{got} vs {simpson}");
        // and the step approximation is the right order of magnitude
        let step = gamma_p((m + 1) as f64, c0 / s);
        assert!((got / step - 1.0).abs() < 0.02);
    }

    #[test]
    fn phi_monotone_in_lambda() {
        let mut prev = 0.0;
        for lambda in [0.01f64, 0.05, 0.2, 0.5, 0.9] {
            let v = phi_ratio(2.0, 8, lambda);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn psi_limits() {
        let (m, lambda, gamma) = (8, 0.05f64, 40.0 / 37.6 + 1.0);
        let g = 1e-6f64;
        let direct = g.powf(2.0 - gamma) / (g * g + 1.0)
            + g.powf(4.0 - gamma) / (g * g + 1.0) * phi_bar_ratio(g * g, m, lambda);
        assert!((psi(g, 1.0, m, lambda, gamma) / direct - 1.0).abs() < 1e-12);
        let reference = psi(1.0, 1.0, m, lambda, gamma);
        assert!(psi(1.0, 1e-10, m, lambda, gamma) < 1e-6 * reference);
        assert_eq!(psi(0.0, 1.0, m, lambda, gamma), 0.0);
    }

    #[test]
    fn single_cell_architectures_coincide() {
        let cfg = NetworkConfig { num_cells: 1, ..NetworkConfig::desk() };
        let tin: StateEvolutionTrace<f64> = se_fixed_point_tin(&cfg).unwrap();
        let coop: StateEvolutionTrace<f64> = se_fixed_point_coop(&cfg).unwrap();
        assert!(tin.converged && coop.converged);
        assert!((tin.tau_sq_inf / coop.tau_sq_inf - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tin_floor_and_fixed_point_residual() {
        let cfg = NetworkConfig::desk();
        let opts = SeOptions::default();
        let model: SeModel<f64> = SeModel::new(&cfg, Architecture::Tin, &opts).unwrap();
        let floor: f64 = effective_noise_variance_tin(&cfg).unwrap();
        assert!((model.noise_floor() / floor - 1.0).abs() < 1e-12);
        let trace = model.solve(&opts);
        assert!(trace.converged);
        assert!(trace.tau_sq_seq[0] >= floor);
        assert!(trace.tau_sq_seq.iter().all(|&t| t > 0.0));
        let r = model.rhs(trace.tau_sq_inf);
        assert!((r - trace.tau_sq_inf).abs() < 1e-8 * trace.tau_sq_inf);
        assert!(trace.tau_sq_inf > floor);
    }

    #[test]
    fn vanishing_activity_leaves_noise() {
        let cfg = NetworkConfig { num_cells: 1, activity_prob: 1e-9, ..NetworkConfig::desk() };
        let t: StateEvolutionTrace<f64> = se_fixed_point_tin(&cfg).unwrap();
        assert!((t.tau_sq_inf / cfg.noise_variance() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cooperation_and_antennas_help() {
        let cfg = NetworkConfig::desk();
        let tin: StateEvolutionTrace<f64> = se_fixed_point_tin(&cfg).unwrap();
        let coop: StateEvolutionTrace<f64> = se_fixed_point_coop(&cfg).unwrap();
        assert!(coop.tau_sq_inf < tin.tau_sq_inf);
        let m1 = NetworkConfig { antennas: 1, ..cfg.clone() };
        let c1: StateEvolutionTrace<f64> = se_fixed_point_coop(&m1).unwrap();
        assert!(coop.tau_sq_inf < c1.tau_sq_inf);
    }

    #[test]
    fn partial_recovery_boundaries_and_monotonicity() {
        let cfg = NetworkConfig::desk();
        let (rc, rn) = (cfg.cell_radius(), cfg.network_radius());
        let tin: StateEvolutionTrace<f64> = se_fixed_point_tin(&cfg).unwrap();
        let coop: StateEvolutionTrace<f64> = se_fixed_point_coop(&cfg).unwrap();
        let lo: StateEvolutionTrace<f64> = se_partial_recovery(&cfg, rc).unwrap();
        let hi: StateEvolutionTrace<f64> = se_partial_recovery(&cfg, rn).unwrap();
        assert!((lo.tau_sq_inf / tin.tau_sq_inf - 1.0).abs() < 1e-9);
        assert!((hi.tau_sq_inf / coop.tau_sq_inf - 1.0).abs() < 1e-9);
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let rho = rc + (rn - rc) * i as f64 / 9.0;
            let t: StateEvolutionTrace<f64> = se_partial_recovery(&cfg, rho).unwrap();
            assert!(t.tau_sq_inf <= prev * (1.0 + 1e-9));
            prev = t.tau_sq_inf;
        }
        assert!(matches!(se_partial_recovery::<f64>(&cfg, 0.5 * rc), Err(Error::Domain(_))));
    }

    #[test]
    fn interference_term_tends_to_constant() {
        let cfg = NetworkConfig { num_cells: 1 + 3 * 19 * 18, ..NetworkConfig::paper() };
        // tiers must exist: B = 3T(T−1)+1 with T = 19 → 1027
        assert_eq!(cfg.tiers().unwrap(), 19);
        let floor: f64 = effective_noise_variance_tin(&cfg).unwrap();
        let term = floor - cfg.noise_variance();
        let limit = interference_limit(&cfg);
        assert!((term / limit - 1.0).abs() < 0.01, "{term} vs {limit}");
    }

    #[test]
    fn se_trace_csv() {
        let cfg = NetworkConfig { num_cells: 1, ..NetworkConfig::desk() };
        let t: StateEvolutionTrace<f64> = se_fixed_point_tin(&cfg).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("t,tau_sq\n0,"));
        assert_eq!(csv.lines().count(), t.tau_sq_seq.len() + 1);
    }

    #[test]
    fn f32_phi() {
        let a = phi_ratio(2.0f32, 4, 0.05);
        let b = phi_ratio(2.0f64, 4, 0.05);
        assert!((a as f64 - b).abs() < 1e-5);
    }
}
