use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coopdetect::detection::ProfileSource;
use coopdetect::experiments::{
    predict, run_experiment, sweep, tau_vs_radius, tau_vs_radius_csv, tradeoff_csv, ExperimentResult, ExperimentSpec,
    QuantizerSetting, Scheme, SweepParameter,
};
use coopdetect::geometry::{build_layout, sample_users};
use coopdetect::quantize::LmaxTable;
use coopdetect::rng::trial_rng;
use coopdetect::signal::ScenarioInstance;
use coopdetect::NetworkConfig;

#[derive(Parser)]
#[command(name = "coopdetect", version, about = "AMP activity detection: analytic prediction and Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// State evolution and analytic error profiles only.
    Predict(Common),
    /// Monte Carlo run with the analytic prediction alongside.
    Simulate(Common),
    /// One parameter over a list of values.
    Sweep(SweepArgs),
    /// Cooperative run over every (bits, zeta) pair.
    QuantizeSweep(Common),
    /// Analytic vs simulated cell-edge error and CDF distance.
    Validate(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Tin,
    Coop,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment TOML; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    arch: Option<Arch>,
    /// Cooperation sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    bbn: Vec<usize>,
    /// Quantiser resolutions, comma separated.
    #[arg(long = "q-bits", value_delimiter = ',')]
    q_bits: Vec<u32>,
    /// Quantiser coverage probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    zeta: Vec<f64>,
    /// Antennas per base station.
    #[arg(long)]
    antennas: Option<usize>,
    /// Start from the 19-cell, 2000-user network instead of the desk one.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// antennas, seq_len, coop_size, bits, zeta or detection_radius.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Add Monte Carlo columns.
    #[arg(long)]
    simulate: bool,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentSpec::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentSpec::default(),
        };
        if self.full_scale {
            spec.network = NetworkConfig::paper();
        }
        if let Some(m) = self.antennas {
            spec.network.antennas = m;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        match self.arch {
            Some(Arch::Tin) => {
                spec.scheme = Scheme::Tin;
                spec.b_bn = vec![1];
            }
            Some(Arch::Coop) => spec.scheme = Scheme::Coop,
            None => {}
        }
        if !self.bbn.is_empty() {
            if spec.scheme == Scheme::Tin {
                bail!("--bbn needs --arch coop");
            }
            spec.b_bn = self.bbn.clone();
        }
        if !self.q_bits.is_empty() || !self.zeta.is_empty() {
            let bits = if self.q_bits.is_empty() { vec![3] } else { self.q_bits.clone() };
            let zetas = if self.zeta.is_empty() { vec![0.95] } else { self.zeta.clone() };
            spec.quantizers = bits
                .iter()
                .flat_map(|&b| zetas.iter().map(move |&z| QuantizerSetting { bits: b, zeta: z }))
                .collect();
        }
        spec.validate().context("invalid experiment")?;
        Ok(spec)
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn cdf_name(spec: &ExperimentSpec) -> &'static str {
    match spec.scheme {
        Scheme::Tin => "fig2_cdf",
        Scheme::Coop => "fig4_cdf",
    }
}

fn write_common(out: &Output, spec: &ExperimentSpec, r: &ExperimentResult) -> Result<()> {
    out.write("config.toml", spec.to_toml_string())?;
    out.write("layout.csv", r.layout.to_csv())?;
    out.write("se_trace.csv", r.se_csv())?;
    let name = cdf_name(spec);
    out.write(&format!("{name}.csv"), r.cdf_csv(name))?;
    if let Some(v) = r.variants.first() {
        out.write("fig1_tradeoff.csv", tradeoff_csv(r, v, 41))?;
    }
    for v in &r.variants {
        let label = &v.variant.label;
        for source in [ProfileSource::Analytic, ProfileSource::Empirical] {
            if let Some(csv) = r.profile_csv(label, source) {
                out.write(&format!("profile_{label}_{}.csv", source.label()), csv)?;
            }
        }
    }
    write_lmax_tables(out, spec, r)?;
    Ok(())
}

fn write_lmax_tables(out: &Output, spec: &ExperimentSpec, r: &ExperimentResult) -> Result<()> {
    let mut zetas: Vec<f64> = spec.quantizers.iter().map(|q| q.zeta).collect();
    zetas.sort_by(f64::total_cmp);
    zetas.dedup();
    let gains: Vec<f64> = r
        .variants
        .iter()
        .flat_map(|v| v.links.iter().flat_map(|u| u.links.iter().map(|&(_, g)| g)))
        .collect();
    if gains.is_empty() {
        return Ok(());
    }
    let (lo, hi) = gains.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &g| (a.min(g), b.max(g)));
    for &z in &zetas {
        let grid = LmaxTable::log_grid(lo, hi.max(lo * 1.0001), 64);
        let t = LmaxTable::build(&grid, r.tau_sq_analytic(), spec.network.antennas, spec.network.activity_prob, z)?;
        let name = if zetas.len() == 1 { "lmax_table.csv".to_string() } else { format!("lmax_table_zeta{z}.csv") };
        out.write(&name, t.to_csv())?;
    }
    Ok(())
}

fn write_simulation(out: &Output, spec: &ExperimentSpec, r: &ExperimentResult) -> Result<()> {
    write_common(out, spec, r)?;
    out.write("amp_tau.csv", r.amp_tau_csv())?;
    if let Some(trace) = &r.amp_trace {
        out.write("amp_trace.csv", trace)?;
    }
    out.write("validate.csv", r.validation_csv())?;
    // the scenario of trial 0, as the simulation saw it
    let layout = build_layout(&spec.network)?;
    let pop = sample_users(&spec.network, &layout, spec.seed);
    let sc: ScenarioInstance<f64> = ScenarioInstance::synthesize(&spec.network, &pop, &mut trial_rng(spec.seed, 0))?;
    let mut bytes = Vec::new();
    sc.write_to(&mut bytes)?;
    out.write("scenario.bin", bytes)?;
    Ok(())
}

fn summary(r: &ExperimentResult) {
    println!(
        "{} B={} M={}: tau^2 (SE) = {:.4e}",
        r.spec.scheme.label(),
        r.spec.network.num_cells,
        r.spec.network.antennas,
        r.tau_sq_analytic()
    );
    for v in &r.variants {
        let emp = v.empirical.as_ref().map(|e| format!(", simulated {:.4e}", e.cell_edge_95())).unwrap_or_default();
        println!("  {:<28} cell-edge analytic {:.4e}{emp}", v.variant.label, v.analytic.cell_edge_95());
    }
    if !r.amp_tau_sq_mean.is_empty() {
        println!("  AMP runs not converged: {}", r.amp_unconverged);
    }
}

fn sweep_file(p: SweepParameter) -> &'static str {
    match p {
        SweepParameter::Antennas => "fig6_antennas",
        SweepParameter::SeqLen => "fig7_seqlen",
        SweepParameter::CoopSize => "fig5_bbn",
        SweepParameter::Bits | SweepParameter::Zeta => "quant_sweep",
        SweepParameter::DetectionRadius => "radius_sweep",
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Predict(c) => {
            let spec = c.spec()?;
            let out = Output::new(&c.out)?;
            let r = predict(&spec)?;
            write_common(&out, &spec, &r)?;
            let cfg = &spec.network;
            let (rc, rn) = (cfg.cell_radius(), cfg.network_radius());
            let radii: Vec<f64> = (0..=24).map(|i| rc + (rn - rc) * i as f64 / 24.0).collect();
            out.write("fig3_tau_vs_radius.csv", tau_vs_radius_csv(cfg, &tau_vs_radius(cfg, &radii)?))?;
            summary(&r);
        }
        Command::Simulate(c) => {
            let spec = c.spec()?;
            let out = Output::new(&c.out)?;
            let r = run_experiment(&spec)?;
            write_simulation(&out, &spec, &r)?;
            summary(&r);
        }
        Command::Sweep(s) => {
            let spec = s.common.spec()?;
            let parameter = SweepParameter::parse(&s.param)?;
            let out = Output::new(&s.common.out)?;
            out.write("config.toml", spec.to_toml_string())?;
            let table = sweep(&spec, parameter, &s.values, s.simulate)?;
            let name = sweep_file(parameter);
            out.write(&format!("{name}.csv"), table.to_csv(name))?;
            for row in &table.rows {
                println!("  {} = {:<10} {:<28} cell-edge {:.4e}", parameter.name(), row.value, row.variant, row.cell_edge_analytic);
            }
        }
        Command::QuantizeSweep(c) => {
            let mut spec = c.spec()?;
            spec.scheme = Scheme::Coop;
            if c.bbn.is_empty() {
                spec.b_bn = vec![3];
            }
            if spec.quantizers.is_empty() {
                spec.quantizers = [1, 2, 3, 4]
                    .iter()
                    .flat_map(|&b| [0.95, 0.99].map(|z| QuantizerSetting { bits: b, zeta: z }))
                    .collect();
            }
            spec.validate()?;
            let out = Output::new(&c.out)?;
            let r = run_experiment(&spec)?;
            let name = match spec.network.antennas {
                1 => "fig8_quant".to_string(),
                4 => "fig9_quant".to_string(),
                m => format!("quant_m{m}"),
            };
            out.write(&format!("{name}.csv"), r.cdf_csv(&name))?;
            out.write("config.toml", spec.to_toml_string())?;
            out.write("validate.csv", r.validation_csv())?;
            write_lmax_tables(&out, &spec, &r)?;
            summary(&r);
        }
        Command::Validate(c) => {
            let spec = c.spec()?;
            let out = Output::new(&c.out)?;
            let r = run_experiment(&spec)?;
            out.write("config.toml", spec.to_toml_string())?;
            out.write("validate.csv", r.validation_csv())?;
            let trials = spec.trials as u64;
            for v in &r.variants {
                println!(
                    "  {:<28} cell-edge {:.4e} vs {:.4e}, CDF gap {:.3} (estimator-aware {:.3})",
                    v.variant.label,
                    v.analytic.cell_edge_95(),
                    v.empirical.as_ref().map_or(f64::NAN, |e| e.cell_edge_95()),
                    v.sup_gap().unwrap_or(f64::NAN),
                    v.estimator_gap(trials).unwrap_or(f64::NAN),
                );
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
