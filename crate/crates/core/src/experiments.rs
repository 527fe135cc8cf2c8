//! Monte Carlo runner and figure tables.
//!
//! A run fixes one user drop (seeded), computes each innermost-cell user's
//! equal-error threshold once from the analytic formulas, then replays
//! activity, signatures, fading and noise per trial. Every base station
//! that some innermost-cell user is associated with runs AMP, and the
//! per-variant decisions (cooperation size, quantiser) are all taken from
//! that single set of AMP outputs.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::{run_amp, AmpConfig, Sensing, TauMode};
use crate::detection::{
    cdf_sup_gap, equal_error_coop, EqualError, estimator_cdf_gap, pm_pf_coop, ErrorProfile, Link, ProfileSource, UserCounts, UserError,
};
use crate::error::{Error, Result};
use crate::geometry::{build_layout, sample_users, CellLayout, NetworkConfig, Population};
use crate::quantize::{lmax_for_user, QuantizedLaw, QuantizedTerm, QuantizerSpec};
use crate::rng::trial_rng;
use crate::signal::{ComplexMatrix, ScenarioInstance};
use crate::state_evolution::{se_fixed_point, Architecture, SeOptions, StateEvolutionTrace};

/// Version tag written into every table header.
pub const CSV_VERSION: u32 = 1;

/// `# coopdetect <name> v1` followed by extra `key=value` pairs.
pub fn csv_header(name: &str, extra: &[(&str, String)]) -> String {
    let mut s = format!("# coopdetect {name} v{CSV_VERSION}");
    for (k, v) in extra {
        let _ = write!(s, " {k}={v}");
    }
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Each BS detects its own users and treats the rest as noise.
    Tin,
    /// BSs recover every user in their detection scope and forward
    /// statistics to a central unit.
    Coop,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Tin => "tin",
            Scheme::Coop => "coop",
        }
    }
}

/// Which users a cooperative BS includes in its AMP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionScope {
    OwnCell,
    /// Own cell plus the adjacent ring.
    Neighbors,
    /// Users within this many metres of the BS.
    Radius(f64),
    All,
}

/// Where `τ²` in the LLRs, thresholds and quantisers comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauSource {
    /// The state-evolution fixed point, shared by all BSs.
    Analytic,
    /// Each BS's own final AMP estimate; thresholds recomputed per trial.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSetting {
    pub bits: u32,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmpSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
}

impl Default for AmpSettings {
    fn default() -> Self {
        let d = AmpConfig::<f64>::default();
        Self {
            max_iters: d.max_iters,
            tol: d.tol,
            damping: d.damping,
        }
    }
}

impl AmpSettings {
    fn to_config(&self) -> AmpConfig<f64> {
        AmpConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            damping: self.damping,
            tau_mode: TauMode::Empirical,
            onsager: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub trials: usize,
    pub scheme: Scheme,
    /// Cooperation sizes evaluated on the same trials.
    pub b_bn: Vec<usize>,
    pub scope: DetectionScope,
    pub tau: TauSource,
    /// Quantised variants, each applied at every cooperation size.
    pub quantizers: Vec<QuantizerSetting>,
    pub amp: AmpSettings,
    pub network: NetworkConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 200,
            scheme: Scheme::Tin,
            b_bn: vec![1],
            scope: DetectionScope::All,
            tau: TauSource::Analytic,
            quantizers: Vec::new(),
            amp: AmpSettings::default(),
            network: NetworkConfig::desk(),
        }
    }
}

impl ExperimentSpec {
    pub fn tin(network: NetworkConfig) -> Self {
        Self { network, ..Self::default() }
    }

    pub fn coop(network: NetworkConfig, b_bn: Vec<usize>) -> Self {
        Self {
            network,
            scheme: Scheme::Coop,
            b_bn,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment spec serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let b = self.network.num_cells;
        if self.b_bn.is_empty() {
            return Err(Error::Config("b_bn must list at least one cooperation size".into()));
        }
        if let Some(&k) = self.b_bn.iter().find(|&&k| k == 0 || k > b) {
            return Err(Error::Config(format!("cooperation size {k} not in 1..={b}")));
        }
        if self.scheme == Scheme::Tin && self.b_bn.iter().any(|&k| k != 1) {
            return Err(Error::Config("the TIN receiver has no cooperation; use b_bn = [1]".into()));
        }
        if let DetectionScope::Radius(r) = self.scope {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("detection radius must be positive, got {r}")));
            }
        }
        for q in &self.quantizers {
            QuantizerSpec::new(q.bits, q.zeta, 1.0f64)?;
            if !(q.zeta > 0.0 && q.zeta < 1.0) {
                return Err(Error::Config(format!("zeta {} not in (0, 1)", q.zeta)));
            }
        }
        AmpSettings::to_config(&self.amp).validate()
    }

    /// Receiver model whose state evolution gives the common `τ²`.
    pub fn architecture(&self) -> Architecture {
        let cfg = &self.network;
        let (rc, rn) = (cfg.cell_radius(), cfg.network_radius());
        match (self.scheme, self.scope) {
            (Scheme::Tin, _) | (Scheme::Coop, DetectionScope::OwnCell) => Architecture::Tin,
            (Scheme::Coop, DetectionScope::All) => Architecture::Cooperative,
            (Scheme::Coop, DetectionScope::Neighbors) => partial(7f64.sqrt() * rc, rc, rn),
            (Scheme::Coop, DetectionScope::Radius(r)) => partial(r, rc, rn),
        }
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &k in &self.b_bn {
            out.push(Variant::new(self.scheme, k, None));
            for &q in &self.quantizers {
                out.push(Variant::new(self.scheme, k, Some(q)));
            }
        }
        out
    }
}

fn partial(r: f64, rc: f64, rn: f64) -> Architecture {
    if r >= rn * (1.0 - 1e-9) {
        Architecture::Cooperative
    } else if r <= rc * (1.0 + 1e-9) {
        Architecture::Tin
    } else {
        Architecture::Partial { radius: r }
    }
}

/// One detector evaluated in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub b_bn: usize,
    pub quantizer: Option<QuantizerSetting>,
}

impl Variant {
    fn new(scheme: Scheme, b_bn: usize, quantizer: Option<QuantizerSetting>) -> Self {
        let mut label = match scheme {
            Scheme::Tin => "tin".to_string(),
            Scheme::Coop => format!("coop_bbn{b_bn}"),
        };
        if let Some(q) = quantizer {
            let _ = write!(label, "_q{}_zeta{}", q.bits, q.zeta);
        }
        Self { label, b_bn, quantizer }
    }
}

/// The base stations whose statistics one user's decision combines.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLinks {
    pub user: usize,
    /// `(bs, g)`, nearest first.
    pub links: Vec<(usize, f64)>,
}

impl UserLinks {
    pub fn as_links(&self, tau2: &[f64]) -> Vec<Link<f64>> {
        self.links.iter().map(|&(bs, g)| Link { g, tau2: tau2[bs] }).collect()
    }
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: Variant,
    pub links: Vec<UserLinks>,
    /// Analytic prediction; for quantised variants, from the exact law of
    /// the quantised statistic.
    pub analytic: ErrorProfile,
    pub empirical: Option<ErrorProfile>,
}

impl VariantResult {
    /// Sup-distance between the empirical and analytic equal-error CDFs.
    pub fn sup_gap(&self) -> Option<f64> {
        let e = self.empirical.as_ref()?;
        Some(cdf_sup_gap(&e.sorted_equal_errors(), &self.analytic.sorted_equal_errors()))
    }

    /// Like [`VariantResult::sup_gap`], but against the analytic profile
    /// pushed through the same `trials`-sample estimator.
    pub fn estimator_gap(&self, trials: u64) -> Option<f64> {
        let e = self.empirical.as_ref()?;
        Some(estimator_cdf_gap(&e.sorted_equal_errors(), &self.analytic.sorted_equal_errors(), trials))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub layout: CellLayout,
    pub se: StateEvolutionTrace<f64>,
    /// Base stations that ran AMP.
    pub stations: Vec<usize>,
    /// Mean final AMP `τ²` per entry of `stations` (empty for analytic runs).
    pub amp_tau_sq_mean: Vec<f64>,
    /// AMP runs that hit `max_iters` before meeting the tolerance.
    pub amp_unconverged: usize,
    /// AMP trace of the first trial at the first station.
    pub amp_trace: Option<String>,
    pub variants: Vec<VariantResult>,
}

impl ExperimentResult {
    pub fn tau_sq_analytic(&self) -> f64 {
        self.se.tau_sq_inf
    }

    pub fn variant(&self, label: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.variant.label == label)
    }

    /// `variant,source,rank,percentile,p_equal` for every profile.
    pub fn cdf_csv(&self, name: &str) -> String {
        let mut out = self.header(name);
        out.push_str("variant,source,rank,percentile,p_equal\n");
        for v in &self.variants {
            let profiles = std::iter::once(&v.analytic).chain(v.empirical.as_ref());
            for p in profiles {
                for (i, (q, x)) in p.cdf_points().into_iter().enumerate() {
                    let _ = writeln!(out, "{},{},{},{q:.10e},{x:.10e}", v.variant.label, p.source.label(), i + 1);
                }
            }
        }
        out
    }

    /// Per-user error table of one variant and source.
    pub fn profile_csv(&self, label: &str, source: ProfileSource) -> Option<String> {
        let v = self.variant(label)?;
        let p = match source {
            ProfileSource::Analytic => &v.analytic,
            ProfileSource::Empirical => v.empirical.as_ref()?,
        };
        Some(self.header(&format!("profile {label} {}", source.label())) + &p.to_csv())
    }

    /// Cell-edge error, CDF gap and `τ²` agreement per variant.
    pub fn validation_csv(&self) -> String {
        let mut out = self.header("validate");
        out.push_str("variant,cell_edge_analytic,cell_edge_empirical,sup_gap,estimator_gap,tau_sq_se,tau_sq_amp\n");
        let tau_amp = self.amp_tau_sq_mean.first().copied().unwrap_or(f64::NAN);
        for v in &self.variants {
            let emp = v.empirical.as_ref().map_or(f64::NAN, ErrorProfile::cell_edge_95);
            let _ = writeln!(
                out,
                "{},{:.10e},{emp:.10e},{:.10e},{:.10e},{:.10e},{tau_amp:.10e}",
                v.variant.label,
                v.analytic.cell_edge_95(),
                v.sup_gap().unwrap_or(f64::NAN),
                v.estimator_gap(self.spec.trials as u64).unwrap_or(f64::NAN),
                self.se.tau_sq_inf,
            );
        }
        out
    }

    /// `station,tau_sq_amp_mean` next to the common analytic value.
    pub fn amp_tau_csv(&self) -> String {
        let mut out = self.header("amp-tau");
        out.push_str("bs,tau_sq_amp_mean,tau_sq_se\n");
        for (bs, t) in self.stations.iter().zip(&self.amp_tau_sq_mean) {
            let _ = writeln!(out, "{bs},{t:.10e},{:.10e}", self.se.tau_sq_inf);
        }
        out
    }

    pub fn se_csv(&self) -> String {
        self.header(&format!("se-trace {}", self.se.architecture.label())) + &self.se.to_csv()
    }

    fn header(&self, name: &str) -> String {
        let s = &self.spec;
        csv_header(
            name,
            &[
                ("scheme", s.scheme.label().to_string()),
                ("B", s.network.num_cells.to_string()),
                ("N", s.network.users_per_cell.to_string()),
                ("L", s.network.seq_len.to_string()),
                ("M", s.network.antennas.to_string()),
                ("trials", s.trials.to_string()),
                ("seed", s.seed.to_string()),
            ],
        )
    }
}

/// Everything fixed across trials.
struct Plan {
    cfg: NetworkConfig,
    pop: Population,
    /// Stations running AMP, ascending.
    stations: Vec<usize>,
    /// Per station: recovered signature columns (`None` = all).
    columns: Vec<Option<Vec<usize>>>,
    /// Per station and innermost-cell user: row of that user in the
    /// station's AMP output.
    rows: Vec<Vec<Option<usize>>>,
    variants: Vec<Variant>,
    /// Per variant, per user.
    links: Vec<Vec<UserLinks>>,
    /// Common `τ²` per station index in `0..B`.
    tau_common: Vec<f64>,
    /// Decision rules per variant and user, built with `tau_common`.
    rules: Vec<Vec<Rule>>,
    /// Rebuild the rules every trial from the AMP `τ²` of each station.
    rules_per_trial: bool,
    amp: AmpConfig<f64>,
}

/// A fixed decision rule: `Σ Δ_j q_j(‖x̃_j‖²) ≥ threshold`.
#[derive(Debug, Clone)]
struct Rule {
    /// `(station index into Plan::stations, Δ, quantiser)`.
    terms: Vec<(usize, f64, Option<QuantizerSpec<f64>>)>,
    /// Predicted operating point; `threshold` is the one applied.
    eq: EqualError<f64>,
}

fn build_rules(plan: &Plan, tau2: &[f64]) -> Result<Vec<Vec<Rule>>> {
    let m = plan.cfg.antennas;
    let lambda = plan.cfg.activity_prob;
    plan.variants
        .iter()
        .zip(&plan.links)
        .map(|(v, users)| {
            users
                .iter()
                .map(|u| {
                    let terms = u
                        .links
                        .iter()
                        .map(|&(bs, g)| {
                            let t = tau2[bs];
                            let delta = 1.0 / t - 1.0 / (g * g + t);
                            let q = match v.quantizer {
                                Some(q) => Some(QuantizerSpec::new(
                                    q.bits,
                                    q.zeta,
                                    lmax_for_user(g, t, m, lambda, q.zeta)?,
                                )?),
                                None => None,
                            };
                            let idx = plan.stations.binary_search(&bs).expect("linked station runs AMP");
                            Ok((idx, delta, q))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    // quantised statistics get the equal-error threshold of their own law
                    let eq = match v.quantizer {
                        None => equal_error_coop(&u.as_links(tau2), m),
                        Some(_) => {
                            let qt: Vec<QuantizedTerm<f64>> = terms
                                .iter()
                                .zip(&u.links)
                                .map(|(&(_, delta, q), &(bs, g))| QuantizedTerm {
                                    delta,
                                    g,
                                    tau2: tau2[bs],
                                    quantizer: q.expect("quantised variant"),
                                })
                                .collect();
                            QuantizedLaw::new(&qt, m)?.equal_error()
                        }
                    };
                    Ok(Rule { terms, eq })
                })
                .collect()
        })
        .collect()
}

fn scope_columns(spec: &ExperimentSpec, layout: &CellLayout, pop: &Population, bs: usize) -> Option<Vec<usize>> {
    let cfg = &spec.network;
    let (b, n) = (cfg.num_cells, cfg.users_per_cell);
    let scope = if spec.scheme == Scheme::Tin { DetectionScope::OwnCell } else { spec.scope };
    let keep: Box<dyn Fn(usize, usize) -> bool> = match scope {
        DetectionScope::All => return None,
        DetectionScope::OwnCell => Box::new(move |cell, _| cell == bs),
        DetectionScope::Neighbors => {
            let here = layout.stations[bs];
            let near: Vec<bool> = (0..b)
                .map(|c| layout.distance(c, here) <= 1.01 * layout.spacing)
                .collect();
            Box::new(move |cell, _| near[cell])
        }
        DetectionScope::Radius(r) => Box::new(move |cell, user| pop.distance(bs, cell, user) <= r),
    };
    Some((0..b * n).filter(|&k| keep(k / n, k % n)).collect())
}

fn plan(spec: &ExperimentSpec) -> Result<(Plan, CellLayout, StateEvolutionTrace<f64>)> {
    spec.validate()?;
    let cfg = spec.network.clone();
    let layout = build_layout(&cfg)?;
    let pop = sample_users(&cfg, &layout, spec.seed);
    let se = se_fixed_point::<f64>(&cfg, spec.architecture(), &SeOptions::default())
        .map_err(|e| e.context("state evolution"))?;
    if !se.converged {
        return Err(Error::Divergence {
            iteration: se.iterations,
            reason: "state evolution did not converge".into(),
        });
    }
    let (b, n) = (cfg.num_cells, cfg.users_per_cell);
    let max_bbn = spec.b_bn.iter().copied().max().unwrap_or(1);
    // Nearest stations of each innermost-cell user whose scope covers it.
    let all_columns: Vec<Option<Vec<usize>>> = (0..b).map(|j| scope_columns(spec, &layout, &pop, j)).collect();
    let covers = |bs: usize, user: usize| all_columns[bs].as_ref().is_none_or(|c| c.binary_search(&user).is_ok());
    let nearest: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            pop.nearest_stations(0, u, b)
                .into_iter()
                .filter(|&j| covers(j, u))
                .take(max_bbn)
                .collect()
        })
        .collect();
    if let Some(u) = nearest.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("user {u} of the innermost cell is outside every detection scope")));
    }
    let mut stations: Vec<usize> = nearest.iter().flatten().copied().collect();
    stations.sort_unstable();
    stations.dedup();
    let columns: Vec<Option<Vec<usize>>> = stations.iter().map(|&j| all_columns[j].clone()).collect();
    let rows = columns
        .iter()
        .map(|c| {
            (0..n)
                .map(|u| match c {
                    None => Some(u),
                    Some(c) => c.binary_search(&u).ok(),
                })
                .collect()
        })
        .collect();
    let variants = spec.variants();
    let links = variants
        .iter()
        .map(|v| {
            nearest
                .iter()
                .enumerate()
                .map(|(u, near)| UserLinks {
                    user: u,
                    links: near.iter().take(v.b_bn).map(|&j| (j, pop.gain(j, 0, u))).collect(),
                })
                .collect()
        })
        .collect();
    let mut plan = Plan {
        cfg,
        pop,
        stations,
        columns,
        rows,
        variants,
        links,
        tau_common: vec![se.tau_sq_inf; b],
        rules: Vec::new(),
        rules_per_trial: spec.tau == TauSource::Empirical,
        amp: spec.amp.to_config(),
    };
    plan.rules = build_rules(&plan, &plan.tau_common)?;
    Ok((plan, layout, se))
}

fn analytic_profile(plan: &Plan, vi: usize) -> ErrorProfile {
    let users = plan.links[vi]
        .iter()
        .zip(&plan.rules[vi])
        .map(|(u, rule)| {
            let e = rule.eq;
            UserError {
                cell: 0,
                user: u.user,
                g: plan.pop.gain(0, 0, u.user),
                threshold: e.threshold,
                pm: e.pm,
                pf: e.pf,
                p_equal: e.p,
                counts: None,
                method: Some(e.method),
            }
        })
        .collect();
    ErrorProfile {
        source: ProfileSource::Analytic,
        users,
    }
}

struct TrialOutcome {
    /// Per variant, per user.
    counts: Vec<Vec<UserCounts>>,
    tau_sq: Vec<f64>,
    unconverged: usize,
    trace: Option<String>,
}

fn run_trial(plan: &Plan, seed: u64, t: u64) -> Result<TrialOutcome> {
    let cfg = &plan.cfg;
    let n = cfg.users_per_cell;
    let lambda = cfg.activity_prob;
    let mut rng = trial_rng(seed, t);
    let sc: ScenarioInstance<f64> = ScenarioInstance::synthesize(cfg, &plan.pop, &mut rng)?;
    let mut full: Option<Sensing<f64>> = None;
    let mut sq_norms: Vec<Vec<f64>> = Vec::with_capacity(plan.stations.len());
    let mut tau_sq = Vec::with_capacity(plan.stations.len());
    let mut unconverged = 0;
    let mut trace = None;
    for (si, &bs) in plan.stations.iter().enumerate() {
        let gains_all = sc.gains_at(bs);
        let out = match &plan.columns[si] {
            None => {
                let sensing = full.get_or_insert_with(|| Sensing::new(sc.signatures.clone()));
                run_amp(&sc.received[bs], sensing, gains_all, lambda, &plan.amp)
            }
            Some(cols) => {
                let s = ComplexMatrix::from_fn(cfg.seq_len, cols.len(), |r, c| sc.signatures[(r, cols[c])]);
                let gains: Vec<f64> = cols.iter().map(|&c| gains_all[c]).collect();
                run_amp(&sc.received[bs], &Sensing::new(s), &gains, lambda, &plan.amp)
            }
        }
        .map_err(|e| e.context(format!("trial {t}, base station {bs}")))?;
        if !out.converged {
            unconverged += 1;
        }
        if t == 0 && si == 0 {
            trace = Some(out.trace_csv());
        }
        tau_sq.push(out.tau_sq_final);
        sq_norms.push(
            plan.rows[si]
                .iter()
                .map(|r| r.map_or(f64::NAN, |r| out.sq_norms[r]))
                .collect(),
        );
    }

    let per_trial;
    let rules = if plan.rules_per_trial {
        let mut tau = plan.tau_common.clone();
        for (&bs, &v) in plan.stations.iter().zip(&tau_sq) {
            tau[bs] = v;
        }
        per_trial = build_rules(plan, &tau)?;
        &per_trial
    } else {
        &plan.rules
    };
    let counts = rules
        .iter()
        .map(|users| {
            users
                .iter()
                .enumerate()
                .map(|(u, rule)| {
                    let stat: f64 = rule
                        .terms
                        .iter()
                        .map(|(si, delta, q)| {
                            let r = sq_norms[*si][u];
                            delta * q.as_ref().map_or(r, |q| q.quantize(r))
                        })
                        .sum();
                    let mut c = UserCounts::default();
                    c.record(sc.is_active(0, u), stat >= rule.eq.threshold);
                    c
                })
                .collect()
        })
        .collect();
    debug_assert!(sq_norms.iter().all(|v| v.len() == n));
    Ok(TrialOutcome {
        counts,
        tau_sq,
        unconverged,
        trace,
    })
}

/// Analytic prediction only: state evolution and per-user equal-error
/// profiles for the spec's user drop.
pub fn predict(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    Ok(prepare(spec)?.0)
}

fn prepare(spec: &ExperimentSpec) -> Result<(ExperimentResult, Plan)> {
    let (plan, layout, se) = plan(spec).map_err(|e| e.context("experiment setup"))?;
    let variants = (0..plan.variants.len())
        .map(|vi| VariantResult {
            variant: plan.variants[vi].clone(),
            links: plan.links[vi].clone(),
            analytic: analytic_profile(&plan, vi),
            empirical: None,
        })
        .collect();
    let result = ExperimentResult {
        spec: spec.clone(),
        layout,
        se,
        stations: plan.stations.clone(),
        amp_tau_sq_mean: Vec::new(),
        amp_unconverged: 0,
        amp_trace: None,
        variants,
    };
    Ok((result, plan))
}

/// Monte Carlo run plus the analytic prediction for the same users.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let (mut result, plan) = prepare(spec)?;
    let outcomes = (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(&plan, spec.seed, t))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.context("experiment"))?;

    let n = plan.cfg.users_per_cell;
    let mut totals = vec![vec![UserCounts::default(); n]; plan.variants.len()];
    let mut tau_sum = vec![0.0; plan.stations.len()];
    let mut unconverged = 0;
    for o in &outcomes {
        for (acc, trial) in totals.iter_mut().zip(&o.counts) {
            for (a, c) in acc.iter_mut().zip(trial) {
                a.merge(c);
            }
        }
        for (s, v) in tau_sum.iter_mut().zip(&o.tau_sq) {
            *s += v;
        }
        unconverged += o.unconverged;
    }
    for (vr, counts) in result.variants.iter_mut().zip(&totals) {
        let users = vr
            .analytic
            .users
            .iter()
            .zip(counts)
            .map(|(a, c)| UserError {
                pm: c.pm().unwrap_or(f64::NAN),
                pf: c.pf().unwrap_or(f64::NAN),
                p_equal: c.equal_error().unwrap_or(f64::NAN),
                counts: Some(*c),
                method: None,
                ..a.clone()
            })
            .collect();
        vr.empirical = Some(ErrorProfile {
            source: ProfileSource::Empirical,
            users,
        });
    }
    result.amp_tau_sq_mean = tau_sum.iter().map(|s| s / spec.trials as f64).collect();
    result.amp_unconverged = unconverged;
    result.amp_trace = outcomes.into_iter().next().and_then(|o| o.trace);
    Ok(result)
}

/// Sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Antennas,
    SeqLen,
    CoopSize,
    Bits,
    Zeta,
    DetectionRadius,
}

impl SweepParameter {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "M" | "antennas" => SweepParameter::Antennas,
            "L" | "seq_len" => SweepParameter::SeqLen,
            "B_bn" | "bbn" => SweepParameter::CoopSize,
            "Q" | "bits" => SweepParameter::Bits,
            "zeta" => SweepParameter::Zeta,
            "detection_radius" | "radius" => SweepParameter::DetectionRadius,
            other => return Err(Error::UnknownParameter(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Antennas => "M",
            SweepParameter::SeqLen => "L",
            SweepParameter::CoopSize => "B_bn",
            SweepParameter::Bits => "Q",
            SweepParameter::Zeta => "zeta",
            SweepParameter::DetectionRadius => "detection_radius",
        }
    }

    /// Whether changing the parameter leaves the simulated signals alone, so
    /// all values can share one run.
    fn shares_run(&self) -> bool {
        matches!(self, SweepParameter::CoopSize | SweepParameter::Bits | SweepParameter::Zeta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub variant: String,
    pub tau_sq_se: f64,
    pub cell_edge_analytic: f64,
    pub cell_edge_empirical: Option<f64>,
    pub tau_sq_amp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self, name: &str) -> String {
        let mut out = csv_header(name, &[("parameter", self.parameter.name().to_string())]);
        out.push_str("value,variant,tau_sq_se,cell_edge_analytic,cell_edge_empirical,tau_sq_amp\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.10e},{:.10e},{:.10e},{:.10e}",
                r.value,
                r.variant,
                r.tau_sq_se,
                r.cell_edge_analytic,
                r.cell_edge_empirical.unwrap_or(f64::NAN),
                r.tau_sq_amp.unwrap_or(f64::NAN),
            );
        }
        out
    }
}

fn integer_value(p: SweepParameter, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{} must be a positive integer, got {v}", p.name())))
    }
}

/// One row per value of `parameter`; with `simulate` each row also carries
/// Monte Carlo results.
pub fn sweep(spec: &ExperimentSpec, parameter: SweepParameter, values: &[f64], simulate: bool) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Empty("no sweep values".into()));
    }
    let run = |s: &ExperimentSpec| if simulate { run_experiment(s) } else { predict(s) };
    let row = |value: f64, res: &ExperimentResult, v: &VariantResult| SweepRow {
        value,
        variant: v.variant.label.clone(),
        tau_sq_se: res.se.tau_sq_inf,
        cell_edge_analytic: v.analytic.cell_edge_95(),
        cell_edge_empirical: v.empirical.as_ref().map(ErrorProfile::cell_edge_95),
        tau_sq_amp: res.amp_tau_sq_mean.first().copied(),
    };
    let mut rows = Vec::new();
    if parameter.shares_run() {
        let base_q = spec.quantizers.first().copied().unwrap_or(QuantizerSetting { bits: 3, zeta: 0.95 });
        let mut s = spec.clone();
        let mut wanted = Vec::new();
        match parameter {
            SweepParameter::CoopSize => {
                s.b_bn = values.iter().map(|&v| integer_value(parameter, v)).collect::<Result<_>>()?;
                s.quantizers.clear();
                wanted = s.variants().into_iter().map(|v| v.label).collect();
            }
            SweepParameter::Bits | SweepParameter::Zeta => {
                let max_bbn = *spec.b_bn.iter().max().unwrap_or(&1);
                s.b_bn = vec![max_bbn];
                s.quantizers = values
                    .iter()
                    .map(|&v| {
                        Ok(match parameter {
                            SweepParameter::Bits => QuantizerSetting {
                                bits: integer_value(parameter, v)? as u32,
                                zeta: base_q.zeta,
                            },
                            _ => QuantizerSetting { bits: base_q.bits, zeta: v },
                        })
                    })
                    .collect::<Result<_>>()?;
                for q in &s.quantizers {
                    wanted.push(Variant::new(s.scheme, max_bbn, Some(*q)).label);
                }
            }
            _ => unreachable!(),
        }
        let res = run(&s)?;
        for (&value, label) in values.iter().zip(&wanted) {
            let v = res.variant(label).expect("variant was requested");
            rows.push(row(value, &res, v));
        }
    } else {
        for &value in values {
            let mut s = spec.clone();
            match parameter {
                SweepParameter::Antennas => s.network.antennas = integer_value(parameter, value)?,
                SweepParameter::SeqLen => s.network.seq_len = integer_value(parameter, value)?,
                SweepParameter::DetectionRadius => {
                    s.scheme = Scheme::Coop;
                    s.scope = DetectionScope::Radius(value);
                }
                _ => unreachable!(),
            }
            let res = run(&s).map_err(|e| e.context(format!("{} = {value}", parameter.name())))?;
            for v in &res.variants {
                rows.push(row(value, &res, v));
            }
        }
    }
    Ok(SweepTable { parameter, rows })
}

/// `τ²∞` of the partial-recovery receiver against its detection radius.
pub fn tau_vs_radius(cfg: &NetworkConfig, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let (rc, rn) = (cfg.cell_radius(), cfg.network_radius());
    radii
        .iter()
        .map(|&r| {
            let t: StateEvolutionTrace<f64> = se_fixed_point(cfg, partial(r, rc, rn), &SeOptions::default())?;
            Ok((r, t.tau_sq_inf))
        })
        .collect()
}

pub fn tau_vs_radius_csv(cfg: &NetworkConfig, points: &[(f64, f64)]) -> String {
    let mut out = csv_header(
        "fig3-tau-vs-radius",
        &[("B", cfg.num_cells.to_string()), ("M", cfg.antennas.to_string())],
    );
    out.push_str("radius_m,tau_sq_inf\n");
    for (r, t) in points {
        let _ = writeln!(out, "{r:.6},{t:.10e}");
    }
    out
}

/// `(l, P_F, P_M)` along a log-spaced threshold grid around the
/// equal-error point.
pub fn roc_curve(links: &[Link<f64>], m: usize, points: usize) -> Vec<(f64, f64, f64)> {
    let l0 = equal_error_coop(links, m).threshold;
    if !(l0 > 0.0) {
        return Vec::new();
    }
    let points = points.max(2);
    (0..points)
        .map(|i| {
            let l = l0 * 10f64.powf(-1.0 + 2.0 * i as f64 / (points - 1) as f64);
            let e = pm_pf_coop(links, m, l);
            (l, e.pf, e.pm)
        })
        .collect()
}

/// ROC curves of the users at the 5th, 50th and 95th percentile of the
/// analytic equal-error profile of `variant`.
pub fn tradeoff_csv(result: &ExperimentResult, variant: &VariantResult, points: usize) -> String {
    let mut out = result.header("fig1-tradeoff");
    out.push_str("variant,user_percentile,user,g,threshold,P_F,P_M\n");
    let mut order: Vec<usize> = (0..variant.analytic.users.len()).collect();
    order.sort_by(|&a, &b| {
        variant.analytic.users[a]
            .p_equal
            .total_cmp(&variant.analytic.users[b].p_equal)
            .then(a.cmp(&b))
    });
    if order.is_empty() {
        return out;
    }
    let tau = vec![result.se.tau_sq_inf; result.spec.network.num_cells];
    for q in [0.05, 0.5, 0.95] {
        let rank = ((q * order.len() as f64).ceil() as usize).clamp(1, order.len()) - 1;
        let u = &variant.links[order[rank]];
        let g = variant.analytic.users[order[rank]].g;
        for (l, pf, pm) in roc_curve(&u.as_links(&tau), result.spec.network.antennas, points) {
            let _ = writeln!(
                out,
                "{},{q},{},{g:.10e},{l:.10e},{pf:.10e},{pm:.10e}",
                variant.variant.label, u.user
            );
        }
    }
    out
}
