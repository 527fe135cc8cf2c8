//! Cellular layout, user placement and the large-scale fading distribution.
//!
//! Base stations sit on a hexagonal grid of `T` tiers (`B = 3T(T-1) + 1`
//! cells). Sampled users live in the true hexagonal cells; the analytic
//! predictors replace each cell and the whole network by equal-area discs
//! of radius [`NetworkConfig::cell_radius`] and
//! [`NetworkConfig::network_radius`].

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_USERS};
use crate::scalar::Real;

/// Geometry, population, path-loss and link-budget parameters.
///
/// Loadable from a TOML key/value file; every key is optional and falls
/// back to the desk-scale defaults of [`NetworkConfig::desk`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of cells `B`; must be a centered hexagonal number.
    pub num_cells: usize,
    /// Potential users per cell `N`.
    pub users_per_cell: usize,
    /// Per-user activity probability `λ`.
    pub activity_prob: f64,
    /// Signature length `L`.
    pub seq_len: usize,
    /// Antennas per base station `M`.
    pub antennas: usize,
    /// Distance between adjacent base stations, metres.
    pub bs_spacing_m: f64,
    /// Path-loss intercept `α` in dB.
    pub pathloss_alpha_db: f64,
    /// Path-loss slope `β` in dB per decade of distance.
    pub pathloss_beta_db: f64,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    /// Distance floor applied when converting positions to path loss.
    pub min_distance_m: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl NetworkConfig {
    /// The 19-cell network with 2000 users per cell.
    pub fn paper() -> Self {
        Self {
            num_cells: 19,
            users_per_cell: 2000,
            activity_prob: 0.05,
            seq_len: 400,
            antennas: 8,
            bs_spacing_m: 2000.0,
            pathloss_alpha_db: 15.3,
            pathloss_beta_db: 37.6,
            tx_power_dbm: 23.0,
            noise_psd_dbm_per_hz: -169.0,
            bandwidth_hz: 10e6,
            min_distance_m: 1.0,
        }
    }

    /// Scaled-down network (7 cells, 200 users, L = 40) keeping N/L = 5.
    pub fn desk() -> Self {
        Self {
            num_cells: 7,
            users_per_cell: 200,
            seq_len: 40,
            ..Self::paper()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
            .map_err(|e| e.context(format!("config {}", path.as_ref().display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        tiers_for(self.num_cells)?;
        if self.users_per_cell == 0 || self.seq_len == 0 || self.antennas == 0 {
            return Err(Error::Config(
                "users_per_cell, seq_len and antennas must be positive".into(),
            ));
        }
        if !(self.activity_prob > 0.0 && self.activity_prob < 1.0) {
            return Err(Error::Config(format!(
                "activity_prob must lie in (0, 1), got {}",
                self.activity_prob
            )));
        }
        if !(self.bs_spacing_m > 0.0) || !(self.min_distance_m > 0.0) {
            return Err(Error::Config("distances must be positive".into()));
        }
        if !(self.pathloss_beta_db > 20.0) {
            return Err(Error::Config(format!(
                "path-loss slope must exceed 20 dB/decade, got {}",
                self.pathloss_beta_db
            )));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        Ok(())
    }

    /// Number of hexagonal tiers including the centre cell.
    pub fn tiers(&self) -> Result<usize> {
        tiers_for(self.num_cells)
    }

    /// Radius of the disc with the same area as one hexagonal cell.
    pub fn cell_radius(&self) -> f64 {
        // hexagon area (√3/2) d² = π R²
        self.bs_spacing_m * (3f64.sqrt() / (2.0 * PI)).sqrt()
    }

    /// Radius of the disc with the same area as the whole network.
    pub fn network_radius(&self) -> f64 {
        (self.num_cells as f64).sqrt() * self.cell_radius()
    }

    /// Background noise variance per received sample, normalised by the
    /// per-symbol transmit power and by the unit-energy signature scaling:
    /// `σ_w² = N0·W / (P_tx · L)`.
    pub fn noise_variance(&self) -> f64 {
        let noise_dbm = self.noise_psd_dbm_per_hz + 10.0 * self.bandwidth_hz.log10();
        10f64.powf((noise_dbm - self.tx_power_dbm) / 10.0) / self.seq_len as f64
    }

    /// Large-scale amplitude gain `10^{-(α + β log10 d)/20}` (distance floored).
    pub fn gain(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(self.min_distance_m);
        10f64.powf(-(self.pathloss_alpha_db + self.pathloss_beta_db * d.log10()) / 20.0)
    }

    /// Per-sample SNR `g²/σ_w²` of a user at the given distance, in dB.
    pub fn snr_db_at(&self, distance_m: f64) -> f64 {
        10.0 * (self.gain(distance_m).powi(2) / self.noise_variance()).log10()
    }
}

fn tiers_for(num_cells: usize) -> Result<usize> {
    let mut t = 1usize;
    loop {
        let b = 3 * t * (t - 1) + 1;
        if b == num_cells {
            return Ok(t);
        }
        if b > num_cells {
            return Err(Error::Config(format!(
                "{num_cells} is not a centered hexagonal number (1, 7, 19, 37, ...)"
            )));
        }
        t += 1;
    }
}

/// Base-station coordinates of a hexagonal deployment.
///
/// Cell 0 is the innermost cell at the origin; cells are ordered by ring
/// and then by angle. Neighbouring stations lie along multiples of 60°, so
/// every cell is a hexagon with a vertex pointing up.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLayout {
    pub spacing: f64,
    pub tiers: usize,
    pub stations: Vec<[f64; 2]>,
}

impl CellLayout {
    pub fn num_cells(&self) -> usize {
        self.stations.len()
    }

    /// Whether `point` lies in the hexagon of `cell`.
    pub fn contains(&self, cell: usize, point: [f64; 2]) -> bool {
        let c = self.stations[cell];
        hex_contains(self.spacing, [point[0] - c[0], point[1] - c[1]])
    }

    /// Corners of the hexagon of `cell`, counter-clockwise from 30°.
    pub fn hexagon(&self, cell: usize) -> [[f64; 2]; 6] {
        let c = self.stations[cell];
        let r = self.spacing / 3f64.sqrt();
        std::array::from_fn(|k| {
            let ang = PI / 6.0 + k as f64 * PI / 3.0;
            [c[0] + r * ang.cos(), c[1] + r * ang.sin()]
        })
    }

    pub fn distance(&self, cell: usize, point: [f64; 2]) -> f64 {
        let c = self.stations[cell];
        (point[0] - c[0]).hypot(point[1] - c[1])
    }

    /// CSV with columns `bs_id,x,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bs_id,x,y\n");
        for (i, p) in self.stations.iter().enumerate() {
            out.push_str(&format!("{i},{:.6},{:.6}\n", p[0], p[1]));
        }
        out
    }
}

fn hex_contains(spacing: f64, local: [f64; 2]) -> bool {
    let half = 0.5 * spacing;
    let s3 = 0.5 * 3f64.sqrt();
    local[0].abs() <= half
        && (0.5 * local[0] + s3 * local[1]).abs() <= half
        && (-0.5 * local[0] + s3 * local[1]).abs() <= half
}

/// Lays out `B` hexagonal cells in concentric tiers around the origin.
pub fn build_layout(cfg: &NetworkConfig) -> Result<CellLayout> {
    let tiers = cfg.tiers()?;
    let d = cfg.bs_spacing_m;
    let t = tiers as i64 - 1;
    let mut cells: Vec<(i64, f64, [f64; 2])> = Vec::with_capacity(cfg.num_cells);
    for q in -t..=t {
        for r in -t..=t {
            let ring = q.abs().max(r.abs()).max((q + r).abs());
            if ring > t {
                continue;
            }
            let x = d * (q as f64 + 0.5 * r as f64);
            let y = d * (0.5 * 3f64.sqrt() * r as f64);
            let mut ang = y.atan2(x);
            if ang < -1e-12 {
                ang += 2.0 * PI;
            }
            cells.push((ring, ang, [x, y]));
        }
    }
    cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(CellLayout {
        spacing: d,
        tiers,
        stations: cells.into_iter().map(|c| c.2).collect(),
    })
}

/// Sampled user positions and the resulting large-scale gains.
#[derive(Debug, Clone)]
pub struct Population {
    pub num_cells: usize,
    pub users_per_cell: usize,
    /// `positions[j][n]`: user `n` of cell `j`.
    pub positions: Vec<Vec<[f64; 2]>>,
    /// Gains `g_{bjn}` flattened as `(b * B + j) * N + n`.
    gains: Vec<f64>,
    /// Distances (before flooring) with the same layout as `gains`.
    distances: Vec<f64>,
}

impl Population {
    #[inline]
    fn idx(&self, bs: usize, cell: usize, user: usize) -> usize {
        (bs * self.num_cells + cell) * self.users_per_cell + user
    }

    /// Gain from user `user` of cell `cell` to base station `bs`.
    #[inline]
    pub fn gain(&self, bs: usize, cell: usize, user: usize) -> f64 {
        self.gains[self.idx(bs, cell, user)]
    }

    #[inline]
    pub fn distance(&self, bs: usize, cell: usize, user: usize) -> f64 {
        self.distances[self.idx(bs, cell, user)]
    }

    /// Gains of all users of `cell` towards `bs`.
    pub fn gains_of_cell(&self, bs: usize, cell: usize) -> &[f64] {
        let start = self.idx(bs, cell, 0);
        &self.gains[start..start + self.users_per_cell]
    }

    /// The `k` base stations closest to a user, nearest first.
    pub fn nearest_stations(&self, cell: usize, user: usize, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_cells).collect();
        order.sort_by(|&a, &b| {
            self.distance(a, cell, user)
                .total_cmp(&self.distance(b, cell, user))
                .then(a.cmp(&b))
        });
        order.truncate(k);
        order
    }
}

/// Drops `N` users uniformly in every hexagonal cell.
pub fn sample_users(cfg: &NetworkConfig, layout: &CellLayout, seed: u64) -> Population {
    let mut rng = stream_rng(seed, STREAM_USERS);
    let b = layout.num_cells();
    let n = cfg.users_per_cell;
    let r = layout.spacing / 3f64.sqrt();
    let positions: Vec<Vec<[f64; 2]>> = layout
        .stations
        .iter()
        .map(|c| {
            (0..n)
                .map(|_| loop {
                    let p = [rng.random_range(-r..=r), rng.random_range(-r..=r)];
                    if hex_contains(layout.spacing, p) {
                        break [c[0] + p[0], c[1] + p[1]];
                    }
                })
                .collect()
        })
        .collect();

    let mut gains = Vec::with_capacity(b * b * n);
    let mut distances = Vec::with_capacity(b * b * n);
    for bs in 0..b {
        for cell_users in &positions {
            for &p in cell_users {
                let d = layout.distance(bs, p);
                distances.push(d);
                gains.push(cfg.gain(d));
            }
        }
    }
    Population {
        num_cells: b,
        users_per_cell: n,
        positions,
        gains,
        distances,
    }
}

/// Distances of `count` points drawn uniformly over the annulus
/// `r_min <= d <= r_max` around a base station.
pub fn sample_disc_distances<R: Rng + ?Sized>(
    r_min: f64,
    r_max: f64,
    count: usize,
    rng: &mut R,
) -> Vec<f64> {
    let (a2, b2) = (r_min * r_min, r_max * r_max);
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            (a2 + u * (b2 - a2)).sqrt()
        })
        .collect()
}

/// Density of large-scale gains for users uniform on an annulus:
/// `p(g) = a g^{-γ} / (R_max² - R_min²)` on `[ε_min, ε_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingDist<T> {
    pub a: T,
    pub gamma: T,
    pub eps_min: T,
    /// Infinite when `r_min == 0`.
    pub eps_max: T,
    pub r_min: T,
    pub r_max: T,
}

impl<T: Real> FadingDist<T> {
    pub fn new(alpha_db: f64, beta_db: f64, r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min >= 0.0 && r_min < r_max) {
            return Err(Error::Domain(format!(
                "need 0 <= r_min < r_max, got [{r_min}, {r_max}]"
            )));
        }
        let alpha = T::c(alpha_db);
        let beta = T::c(beta_db);
        let ten = T::c(10.0);
        let twenty = T::c(20.0);
        let forty = T::c(40.0);
        let edge = |r: f64| -> T {
            if r == 0.0 {
                T::infinity()
            } else {
                ten.powf(-(alpha + beta * T::c(r).log10()) / twenty)
            }
        };
        Ok(Self {
            a: forty / beta * ten.powf(-T::c(2.0) * alpha / beta),
            gamma: forty / beta + T::one(),
            eps_min: edge(r_max),
            eps_max: edge(r_min),
            r_min: T::c(r_min),
            r_max: T::c(r_max),
        })
    }

    fn area_factor(&self) -> T {
        self.r_max * self.r_max - self.r_min * self.r_min
    }

    pub fn pdf(&self, g: T) -> T {
        if g < self.eps_min || g > self.eps_max {
            return T::zero();
        }
        self.a * g.powf(-self.gamma) / self.area_factor()
    }

    pub fn cdf(&self, g: T) -> T {
        if g <= self.eps_min {
            return T::zero();
        }
        if g >= self.eps_max {
            return T::one();
        }
        let k = self.gamma - T::one();
        let mass = self.a / k * (self.eps_min.powf(-k) - g.powf(-k));
        (mass / self.area_factor()).min(T::one())
    }

    /// Closed-form `E[G²]`; infinite when the support reaches `d = 0`.
    pub fn second_moment(&self) -> T {
        let e = T::c(3.0) - self.gamma;
        if self.eps_max.is_infinite() {
            // g^{2-γ} is integrable at infinity only when γ > 3
            return if e >= T::zero() {
                T::infinity()
            } else {
                self.a / -e * self.eps_min.powf(e) / self.area_factor()
            };
        }
        self.a / e * (self.eps_max.powf(e) - self.eps_min.powf(e)) / self.area_factor()
    }
}

/// Gain distribution for users uniformly spread on the annulus
/// `[r_min, r_max]` around a base station.
pub fn fading_dist<T: Real>(cfg: &NetworkConfig, r_min: f64, r_max: f64) -> Result<FadingDist<T>> {
    FadingDist::new(cfg.pathloss_alpha_db, cfg.pathloss_beta_db, r_min, r_max)
}

/// `E[G²]` over the annulus `[r_min, r_max]`:
/// `10^{-α/10} (r_min^{2-β/10} - r_max^{2-β/10}) / ((1 - β/20)(r_min² - r_max²))`.
pub fn second_moment_annulus<T: Real>(
    alpha_db: f64,
    beta_db: f64,
    r_min: f64,
    r_max: f64,
) -> Result<T> {
    if !(beta_db > 20.0) {
        return Err(Error::Unsupported(format!(
            "closed-form E[G^2] needs a path-loss slope above 20 dB/decade, got {beta_db}"
        )));
    }
    if !(r_min > 0.0 && r_min < r_max) {
        return Err(Error::Domain(format!(
            "need 0 < r_min < r_max, got [{r_min}, {r_max}]"
        )));
    }
    let e = T::c(2.0 - beta_db / 10.0);
    let (lo, hi) = (T::c(r_min), T::c(r_max));
    let num = T::c(10f64.powf(-alpha_db / 10.0)) * (lo.powf(e) - hi.powf(e));
    let den = T::c(1.0 - beta_db / 20.0) * (lo * lo - hi * hi);
    Ok(num / den)
}

/// `E[G_{/b}²]` for out-of-cell users, from the disc approximation
/// `[R_cell, R_net]` of the surrounding cells.
pub fn second_moment_out_of_cell<T: Real>(cfg: &NetworkConfig) -> Result<T> {
    if cfg.num_cells < 2 {
        return Ok(T::zero());
    }
    second_moment_annulus(
        cfg.pathloss_alpha_db,
        cfg.pathloss_beta_db,
        cfg.cell_radius(),
        cfg.network_radius(),
    )
}

/// `E[G_b²]` for in-cell users over `[min_distance, R_cell]`.
pub fn second_moment_in_cell<T: Real>(cfg: &NetworkConfig) -> Result<T> {
    second_moment_annulus(
        cfg.pathloss_alpha_db,
        cfg.pathloss_beta_db,
        cfg.min_distance_m,
        cfg.cell_radius(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_with_breaks, QuadOpts};

    #[test]
    fn layouts() {
        let mut cfg = NetworkConfig::paper();
        cfg.num_cells = 1;
        let l1 = build_layout(&cfg).unwrap();
        assert_eq!(l1.stations, vec![[0.0, 0.0]]);

        cfg.num_cells = 7;
        let l7 = build_layout(&cfg).unwrap();
        assert_eq!(l7.stations.len(), 7);
        assert_eq!(l7.stations[0], [0.0, 0.0]);
        for p in &l7.stations[1..] {
            assert!((p[0].hypot(p[1]) - 2000.0).abs() < 1e-9);
        }

        cfg.num_cells = 19;
        let l19 = build_layout(&cfg).unwrap();
        assert_eq!(l19.tiers, 3);
        let near = l19.stations[1..]
            .iter()
            .filter(|p| (p[0].hypot(p[1]) - 2000.0).abs() < 1e-6)
            .count();
        assert_eq!(near, 6, "innermost cell fully surrounded");
        // every station has its nearest neighbour exactly one spacing away
        for (i, p) in l19.stations.iter().enumerate() {
            let dmin = l19
                .stations
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
                .fold(f64::INFINITY, f64::min);
            assert!((dmin - 2000.0).abs() < 1e-6);
        }

        cfg.num_cells = 8;
        assert!(matches!(build_layout(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn users_inside_their_cells_and_reproducible() {
        let mut cfg = NetworkConfig::desk();
        cfg.num_cells = 1;
        cfg.users_per_cell = 1;
        cfg.seq_len = 1;
        let layout = build_layout(&cfg).unwrap();
        let pop = sample_users(&cfg, &layout, 3);
        assert!(layout.contains(0, pop.positions[0][0]));

        let cfg = NetworkConfig::desk();
        let layout = build_layout(&cfg).unwrap();
        let a = sample_users(&cfg, &layout, 11);
        let b = sample_users(&cfg, &layout, 11);
        let c = sample_users(&cfg, &layout, 12);
        assert_eq!(a.positions, b.positions);
        assert_ne!(a.positions, c.positions);
        for (j, cell) in a.positions.iter().enumerate() {
            for &p in cell {
                assert!(layout.contains(j, p));
            }
        }
        // own station is (one of) the nearest
        for n in 0..cfg.users_per_cell {
            let own = a.distance(0, 0, n);
            let best = a.nearest_stations(0, n, 1)[0];
            assert!(a.distance(best, 0, n) <= own);
        }
    }

    #[test]
    fn paper_population_size() {
        let cfg = NetworkConfig::paper();
        let layout = build_layout(&cfg).unwrap();
        let pop = sample_users(&cfg, &layout, 2024);
        let total: usize = pop.positions.iter().map(Vec::len).sum();
        assert_eq!(total, 38_000);
        let again = sample_users(&cfg, &layout, 2024);
        assert_eq!(pop.positions[18][1999], again.positions[18][1999]);
    }

    #[test]
    fn fading_density_normalised() {
        let cfg = NetworkConfig::paper();
        let rc = cfg.cell_radius();
        let rn = cfg.network_radius();
        for (lo, hi) in [(rc, rn), (1.0, rc), (10.0, 20.0)] {
            let fd: FadingDist<f64> = fading_dist(&cfg, lo, hi).unwrap();
            // integrate in log-g to tame the g^{-γ} spike at the lower edge
            let (l0, l1) = (fd.eps_min.ln(), fd.eps_max.ln());
            let r = integrate_with_breaks(
                |v: f64| fd.pdf(v.exp()) * v.exp(),
                l0,
                l1,
                &[],
                QuadOpts::new(0.0, 1e-13),
            );
            assert!((r.value - 1.0).abs() < 1e-9, "{lo}..{hi}: {}", r.value);
            assert!((fd.cdf(fd.eps_max) - 1.0).abs() < 1e-12);
        }
        let inner: FadingDist<f64> = fading_dist(&cfg, 0.0, rc).unwrap();
        assert!(inner.eps_max.is_infinite());
        assert!(inner.second_moment().is_infinite());
        assert!(matches!(fading_dist::<f64>(&cfg, 5.0, 5.0), Err(Error::Domain(_))));
    }

    #[test]
    fn fading_parameters() {
        let fd: FadingDist<f64> = FadingDist::new(15.3, 37.6, 100.0, 1000.0).unwrap();
        assert!((fd.gamma - (40.0 / 37.6 + 1.0)).abs() < 1e-15);
        assert!((fd.a - 40.0 / 37.6 * 10f64.powf(-2.0 * 15.3 / 37.6)).abs() < 1e-15);
        let edge = |r: f64| 10f64.powf(-(15.3 + 37.6 * r.log10()) / 20.0);
        assert!((fd.eps_min / edge(1000.0) - 1.0).abs() < 1e-13);
        assert!((fd.eps_max / edge(100.0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn second_moment_matches_quadrature() {
        let cfg = NetworkConfig::paper();
        let rc = cfg.cell_radius();
        let rn = cfg.network_radius();
        let closed: f64 = second_moment_out_of_cell(&cfg).unwrap();
        let fd: FadingDist<f64> = fading_dist(&cfg, rc, rn).unwrap();
        let quad = integrate_with_breaks(
            |v: f64| {
                let g = v.exp();
                fd.a * g.powf(2.0 - fd.gamma) / (rn * rn - rc * rc) * g
            },
            fd.eps_min.ln(),
            fd.eps_max.ln(),
            &[],
            QuadOpts::new(0.0, 1e-12),
        );
        assert!((closed / quad.value - 1.0).abs() < 1e-6);
        assert!((fd.second_moment() / closed - 1.0).abs() < 1e-10);
    }

    #[test]
    fn second_moment_thin_annulus_limit() {
        let (alpha, beta) = (15.3, 37.6);
        let r = 1000.0f64;
        let limit = 10f64.powf(-alpha / 10.0) * r.powf(-beta / 10.0);
        let v: f64 = second_moment_annulus(alpha, beta, r, r * (1.0 + 1e-7)).unwrap();
        assert!((v / limit - 1.0).abs() < 1e-6);
    }

    #[test]
    fn second_moment_scaling() {
        let (alpha, beta) = (15.3, 37.6);
        let c = 1.7f64;
        let v1: f64 = second_moment_annulus(alpha, beta, 800.0, 3000.0).unwrap();
        let v2: f64 = second_moment_annulus(alpha, beta, 800.0 * c, 3000.0 * c).unwrap();
        assert!((v2 / v1 - c.powf(-beta / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn second_moment_needs_steep_path_loss() {
        let r = second_moment_annulus::<f64>(15.3, 20.0, 100.0, 1000.0);
        assert!(matches!(r, Err(Error::Unsupported(_))));
        let mut cfg = NetworkConfig::paper();
        cfg.pathloss_beta_db = 18.0;
        assert!(matches!(
            second_moment_out_of_cell::<f64>(&cfg),
            Err(Error::Unsupported(_))
        ));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn radii_and_noise() {
        let cfg = NetworkConfig::paper();
        assert!(cfg.network_radius() > cfg.cell_radius());
        assert!(cfg.cell_radius() > 0.0);
        // -169 dBm/Hz over 10 MHz is -99 dBm; 23 dBm tx; L = 400
        let expect = 10f64.powf(-12.2) / 400.0;
        assert!((cfg.noise_variance() / expect - 1.0).abs() < 1e-12);
        let snr = cfg.snr_db_at(1000.0);
        assert!(snr.is_finite());
        // 23 + 99 - 15.3 - 37.6*3 + 10 log10(400)
        let expect_snr = 23.0 + 99.0 - 15.3 - 112.8 + 10.0 * 400f64.log10();
        assert!((snr - expect_snr).abs() < 1e-9);
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = NetworkConfig::from_toml_str("antennas = 4\nseq_len = 80\n").unwrap();
        assert_eq!(cfg.antennas, 4);
        assert_eq!(cfg.num_cells, 7);
        let text = cfg.to_toml_string();
        assert_eq!(NetworkConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(NetworkConfig::from_toml_str("bogus = 1").is_err());
        assert!(NetworkConfig::from_toml_str("num_cells = 5").is_err());
        assert!(NetworkConfig::from_toml_str("activity_prob = 1.0").is_err());
    }

    #[test]
    fn layout_csv() {
        let layout = build_layout(&NetworkConfig::desk()).unwrap();
        let csv = layout.to_csv();
        assert!(csv.starts_with("bs_id,x,y\n0,0.000000,0.000000\n"));
        assert_eq!(csv.lines().count(), 8);
    }
}
