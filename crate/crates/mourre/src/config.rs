//! The run configuration: a TOML file, `MOURRE_*` environment overrides and
//! command-line flags, applied in that order and validated before any compute.
//!
//! Environment variables address nested keys with `__`, for example
//! `MOURRE_GRID__N=512` or `MOURRE_EVOLVE__F__WIDTH=0.3`. Values are parsed as
//! TOML values and fall back to strings.

use std::path::{Path, PathBuf};

use mourre_core::disorder::CompactDistribution;
use mourre_core::geometry::GreedySpec;
use mourre_core::grid::{Boundary, GridSpec};
use mourre_core::potential::{ProbeResolution, Truncation};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "MOURRE_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Island,
    Wavelet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelet: Option<WaveletConfig>,
    #[serde(default)]
    pub distribution: DistributionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub mourre: MourreConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolve: Option<EvolveConfig>,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub ids: IdsConfig,
    #[serde(default)]
    pub wavelet_check: WaveletCheckConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    #[default]
    Example1,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationKind {
    Finite,
    #[default]
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default)]
    pub layout: LayoutKind,
    /// Base scale `R` of the Example-1 packing.
    #[serde(rename = "R", default = "one")]
    pub r: f64,
    #[serde(default = "four")]
    pub k_max: u32,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    /// Greedy layout only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
    #[serde(default)]
    pub truncation: TruncationKind,
    #[serde(default = "default_probe")]
    pub probe_points_per_unit: usize,
    #[serde(default = "default_zoom")]
    pub probe_zoom_passes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletConfig {
    #[serde(default = "two_usize")]
    pub d: usize,
    /// Bound `K` on the translations of the designated coordinate.
    #[serde(rename = "K", default = "two_i64")]
    pub k: i64,
    #[serde(default)]
    pub bounded_axis: usize,
    /// Truncation `T` of the other translations; the rest is the tail bound.
    #[serde(default = "default_n2_max")]
    pub n2_max: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum DistributionConfig {
    Uniform {
        a: f64,
        b: f64,
    },
    ScaledBeta {
        a: f64,
        b: f64,
        shape_a: f64,
        shape_b: f64,
    },
    TwoPoint {
        a: f64,
        b: f64,
    },
}

impl Default for DistributionConfig {
    fn default() -> Self {
        DistributionConfig::Uniform { a: -1.0, b: 1.0 }
    }
}

impl From<DistributionConfig> for CompactDistribution {
    fn from(d: DistributionConfig) -> Self {
        match d {
            DistributionConfig::Uniform { a, b } => CompactDistribution::Uniform { a, b },
            DistributionConfig::ScaledBeta {
                a,
                b,
                shape_a,
                shape_b,
            } => CompactDistribution::ScaledBeta {
                a,
                b,
                shape_a,
                shape_b,
            },
            DistributionConfig::TwoPoint { a, b } => CompactDistribution::TwoPoint { a, b },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dimension: self.d,
            half_length: self.l,
            points: self.n,
            boundary: self.boundary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_solver_k_max")]
    pub k_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_slice")]
    pub slice_size: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            window: None,
            k_max: default_solver_k_max(),
            tol: default_tol(),
            slice_size: default_slice(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayCenter {
    #[default]
    Peak,
    Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Margin `ε` in "localized states only at energies ≤ E₀ + ε".
    #[serde(default = "default_margin")]
    pub virial_margin: f64,
    /// A state counts as virial-consistent when its residual is below
    /// `virial_tol · max(|λ|, 1)`.
    #[serde(default = "default_virial_tol")]
    pub virial_tol: f64,
    #[serde(default)]
    pub decay_center: DecayCenter,
    /// Also write `potential.csv` with the sampled potential.
    #[serde(default)]
    pub write_potential: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            virial_margin: default_margin(),
            virial_tol: default_virial_tol(),
            decay_center: DecayCenter::Peak,
            write_potential: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MourreConfig {
    /// `E₁ = E₀ + e1_offset`.
    #[serde(default = "one")]
    pub e1_offset: f64,
    /// The window is `(E₁, E₁ + width)`.
    #[serde(default = "one")]
    pub width: f64,
    /// Allowed shortfall below `2(E₁ - E₀)`.
    #[serde(default = "default_mourre_tol")]
    pub tolerance: f64,
}

impl Default for MourreConfig {
    fn default() -> Self {
        MourreConfig {
            e1_offset: 1.0,
            width: 1.0,
            tolerance: default_mourre_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionConfig {
    pub centers: Vec<f64>,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    #[serde(default = "default_t_lo")]
    pub t_lo: f64,
    #[serde(default = "default_t_hi")]
    pub t_hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    pub f: TestFunctionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    #[serde(default = "default_samples")]
    pub samples: u64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdsConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Histogram range; the whole spectrum when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Samples of the synthetic spacing-ratio references.
    #[serde(default = "default_reference_samples")]
    pub reference_samples: usize,
}

impl Default for IdsConfig {
    fn default() -> Self {
        IdsConfig {
            bins: default_bins(),
            range: None,
            reference_samples: default_reference_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    /// Element of `F`; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<u8>>,
    /// Scale; the admissible scale with the largest overlap at `n₂ = 0` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<i32>,
    /// Swept coordinate; the last one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(default = "default_n2_max")]
    pub n2_max: i64,
    #[serde(default)]
    pub t: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_r_squared")]
    pub min_r_squared: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            c: None,
            n1: None,
            axis: None,
            n2_max: default_n2_max(),
            t: 0.0,
            floor: default_floor(),
            min_r_squared: default_r_squared(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletCheckConfig {
    /// Inclusive scale range of the Gram family.
    #[serde(default = "default_n1_range")]
    pub n1: [i32; 2],
    /// Inclusive translation range, per coordinate.
    #[serde(default = "default_n2_range")]
    pub n2: [i64; 2],
    /// Elements of `F` in the Gram family; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<Vec<Vec<u8>>>,
    /// Scales scanned by the selection-rule audit.
    #[serde(default = "default_audit")]
    pub audit_scales: [i32; 2],
    #[serde(default = "default_audit_t")]
    pub audit_times: Vec<f64>,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
}

impl Default for WaveletCheckConfig {
    fn default() -> Self {
        WaveletCheckConfig {
            n1: default_n1_range(),
            n2: default_n2_range(),
            elements: None,
            audit_scales: default_audit(),
            audit_times: default_audit_t(),
            envelope: EnvelopeConfig::default(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn four() -> u32 {
    4
}
fn two_usize() -> usize {
    2
}
fn two_i64() -> i64 {
    2
}
fn default_n2_max() -> i64 {
    64
}
fn default_probe() -> usize {
    ProbeResolution::default().points_per_unit
}
fn default_zoom() -> usize {
    ProbeResolution::default().zoom_passes
}
fn default_boundary() -> Boundary {
    Boundary::Dirichlet
}
fn default_budget() -> u64 {
    mourre_core::grid::DEFAULT_UNKNOWN_BUDGET
}
fn default_solver_k_max() -> usize {
    200
}
fn default_tol() -> f64 {
    1e-9
}
fn default_slice() -> usize {
    24
}
fn default_margin() -> f64 {
    0.1
}
fn default_virial_tol() -> f64 {
    0.05
}
fn default_mourre_tol() -> f64 {
    0.1
}
fn default_t_lo() -> f64 {
    10.0
}
fn default_t_hi() -> f64 {
    100.0
}
fn default_points() -> usize {
    16
}
fn default_samples() -> u64 {
    1_000_000
}
fn default_bins() -> usize {
    40
}
fn default_reference_samples() -> usize {
    400
}
fn default_floor() -> f64 {
    1e-9
}
fn default_r_squared() -> f64 {
    0.9
}
fn default_n1_range() -> [i32; 2] {
    [-2, 2]
}
fn default_n2_range() -> [i64; 2] {
    [-2, 2]
}
fn default_audit() -> [i32; 2] {
    [-12, 12]
}
fn default_audit_t() -> Vec<f64> {
    vec![0.0, 10.0]
}

/// Command-line values that take precedence over file and environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses TOML text, applies `env` overrides and flags, then validates.
    pub fn resolve<I, K, V>(text: &str, env: I, flags: &Overrides) -> CliResult<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
            field: None,
            message: e.to_string(),
        })?;
        let mut vars: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| {
                k.as_ref()
                    .strip_prefix(ENV_PREFIX)
                    .map(|rest| (rest.to_string(), v.as_ref().to_string()))
            })
            .filter(|(k, _)| !k.is_empty())
            .collect();
        // deterministic application order
        vars.sort();
        for (key, value) in vars {
            apply_env(&mut table, &key, &value)?;
        }
        let mut cfg: RunConfig = RunConfig::deserialize(table).map_err(|e| CliError::Config {
            field: unknown_field(&e.to_string()),
            message: e.to_string(),
        })?;
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &flags.out {
            cfg.out = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, flags: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::resolve(&text, std::env::vars(), flags)
    }

    /// Canonical TOML of the resolved configuration, embedded in manifests.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        // the output directory is not part of the computation
        c.out = None;
        toml::to_string(&c).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let dist: CompactDistribution = self.distribution.into();
        dist.validate()
            .map_err(|e| CliError::config("distribution", e.to_string()))?;
        if let Some(g) = &self.geometry {
            g.validate()?;
        }
        if let Some(w) = &self.wavelet {
            if !(1..=3).contains(&w.d) {
                return Err(CliError::config("wavelet.d", "dimension must be 1, 2 or 3"));
            }
            if w.bounded_axis >= w.d {
                return Err(CliError::config("wavelet.bounded_axis", "must name a coordinate below d"));
            }
            if w.k < 0 {
                return Err(CliError::config("wavelet.K", "must be >= 0"));
            }
            if w.n2_max < 1 {
                return Err(CliError::config("wavelet.n2_max", "must be >= 1"));
            }
        }
        if let Some(g) = &self.grid {
            g.spec()
                .validate()
                .map_err(|e| CliError::config("grid", e.to_string()))?;
            if g.budget == 0 {
                return Err(CliError::config("grid.budget", "must be positive"));
            }
        }
        let s = &self.solver;
        if let Some([lo, hi]) = s.window {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(CliError::config("solver.window", "need finite lo <= hi"));
            }
        }
        if s.k_max == 0 {
            return Err(CliError::config("solver.k_max", "must be >= 1"));
        }
        if !(s.tol > 0.0) {
            return Err(CliError::config("solver.tol", "must be positive"));
        }
        if s.slice_size == 0 {
            return Err(CliError::config("solver.slice_size", "must be >= 1"));
        }
        let d = &self.diagnostics;
        if !(d.virial_margin >= 0.0) {
            return Err(CliError::config("diagnostics.virial_margin", "must be >= 0"));
        }
        if !(d.virial_tol > 0.0) {
            return Err(CliError::config("diagnostics.virial_tol", "must be positive"));
        }
        if !(self.mourre.e1_offset > 0.0) {
            return Err(CliError::config("mourre.e1_offset", "E1 must exceed E0"));
        }
        if !(self.mourre.width > 0.0) {
            return Err(CliError::config("mourre.width", "must be positive"));
        }
        if let Some(e) = &self.evolve {
            if !(e.t_lo > 0.0 && e.t_lo < e.t_hi && e.t_hi.is_finite()) {
                return Err(CliError::config("evolve.t_lo", "need 0 < t_lo < t_hi"));
            }
            if e.points < 2 {
                return Err(CliError::config("evolve.points", "need at least 2 times"));
            }
            if !(e.f.width > 0.0) {
                return Err(CliError::config("evolve.f.width", "must be positive"));
            }
        }
        if self.density.samples == 0 {
            return Err(CliError::config("density.samples", "must be positive"));
        }
        if self.ids.bins == 0 {
            return Err(CliError::config("ids.bins", "must be positive"));
        }
        let w = &self.wavelet_check;
        if w.n1[0] > w.n1[1] {
            return Err(CliError::config("wavelet_check.n1", "need lo <= hi"));
        }
        if w.n2[0] > w.n2[1] {
            return Err(CliError::config("wavelet_check.n2", "need lo <= hi"));
        }
        if w.audit_scales[0] > w.audit_scales[1] {
            return Err(CliError::config("wavelet_check.audit_scales", "need lo <= hi"));
        }
        if w.envelope.n2_max < 3 {
            return Err(CliError::config("wavelet_check.envelope.n2_max", "must be >= 3"));
        }
        Ok(())
    }

    pub fn require_geometry(&self) -> CliResult<&GeometryConfig> {
        self.geometry
            .as_ref()
            .ok_or_else(|| CliError::config("geometry", "this command needs a [geometry] section"))
    }

    pub fn require_grid(&self) -> CliResult<&GridConfig> {
        self.grid
            .as_ref()
            .ok_or_else(|| CliError::config("grid", "this command needs a [grid] section"))
    }

    pub fn require_evolve(&self) -> CliResult<&EvolveConfig> {
        self.evolve
            .as_ref()
            .ok_or_else(|| CliError::config("evolve", "this command needs an [evolve] section"))
    }

    pub fn wavelet_or_default(&self) -> WaveletConfig {
        self.wavelet.clone().unwrap_or(WaveletConfig {
            d: 2,
            k: 2,
            bounded_axis: 0,
            n2_max: default_n2_max(),
        })
    }

    pub fn distribution(&self) -> CompactDistribution {
        self.distribution.into()
    }
}

impl GeometryConfig {
    fn validate(&self) -> CliResult<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(CliError::config("geometry.gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(CliError::config("geometry.alpha", "must be >= 0"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(CliError::config("geometry.beta", "must be >= 0"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(CliError::config("geometry.R", "must be positive"));
        }
        if self.probe_points_per_unit == 0 {
            return Err(CliError::config("geometry.probe_points_per_unit", "must be positive"));
        }
        match self.layout {
            LayoutKind::Example1 => {
                if self.beta != 1.0 {
                    return Err(CliError::config("geometry.beta", "the example1 layout has beta = 1"));
                }
                for (name, v) in [("d", self.d.is_some()), ("c", self.c.is_some()), ("spacing", self.spacing.is_some()), ("extent", self.extent.is_some())] {
                    if v {
                        return Err(CliError::config(format!("geometry.{name}"), "only used by the greedy layout"));
                    }
                }
            }
            LayoutKind::Greedy => {
                self.greedy_spec()?;
            }
        }
        Ok(())
    }

    pub fn greedy_spec(&self) -> CliResult<GreedySpec> {
        let need = |v: Option<f64>, name: &str| {
            v.filter(|x| *x > 0.0 && x.is_finite())
                .ok_or_else(|| CliError::config(format!("geometry.{name}"), "greedy layout needs a positive value"))
        };
        let d = self
            .d
            .filter(|d| (1..=3).contains(d))
            .ok_or_else(|| CliError::config("geometry.d", "greedy layout needs d in 1..=3"))?;
        Ok(GreedySpec {
            dimension: d,
            beta: self.beta,
            c: need(self.c, "c")?,
            gamma: self.gamma,
            spacing: need(self.spacing, "spacing")?,
            extent: need(self.extent, "extent")?,
        })
    }

    pub fn truncation(&self) -> Truncation {
        match self.truncation {
            TruncationKind::Finite => Truncation::Finite,
            TruncationKind::Infinite => Truncation::Infinite,
        }
    }

    pub fn resolution(&self) -> ProbeResolution {
        ProbeResolution {
            points_per_unit: self.probe_points_per_unit,
            zoom_passes: self.probe_zoom_passes,
        }
    }
}

/// Picks the field name out of serde's "unknown field `x`" and "missing field `x`" messages.
fn unknown_field(msg: &str) -> Option<String> {
    for marker in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(i) = msg.find(marker) {
            let rest = &msg[i + marker.len()..];
            return rest.find('`').map(|j| rest[..j].to_string());
        }
    }
    None
}

fn apply_env(table: &mut toml::Table, key: &str, raw: &str) -> CliResult<()> {
    let parts: Vec<&str> = key.split("__").collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(key, "malformed environment override"));
    }
    let value = parse_value(raw);
    let mut cur = table;
    for (i, part) in parts.iter().enumerate() {
        let name = match_key(cur, part);
        if i + 1 == parts.len() {
            cur.insert(name, value);
            return Ok(());
        }
        let entry = cur
            .entry(name.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(name, format!("{ENV_PREFIX}{key} addresses a key inside a non-table value")))?;
    }
    Ok(())
}

/// Existing key matching case-insensitively, else the lowercase form (single
/// letters keep their schema case: `R`, `K`, `L`, `N`).
fn match_key(table: &toml::Table, part: &str) -> String {
    if let Some(k) = table.keys().find(|k| k.eq_ignore_ascii_case(part)) {
        return k.clone();
    }
    if part.len() == 1 && matches!(part.to_ascii_uppercase().as_str(), "R" | "K" | "L" | "N") {
        return part.to_ascii_uppercase();
    }
    part.to_ascii_lowercase()
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
model = "island"
seed = 3
[geometry]
k_max = 2
[grid]
d = 2
L = 20.0
N = 64
"#;

    fn resolve(text: &str, env: &[(&str, &str)]) -> CliResult<RunConfig> {
        RunConfig::resolve(text, env.iter().copied(), &Overrides::default())
    }

    #[test]
    fn defaults_fill_in() {
        let c = resolve(BASE, &[]).unwrap();
        assert_eq!(c.geometry.as_ref().unwrap().gamma, 1.0);
        assert_eq!(c.grid.unwrap().boundary, Boundary::Dirichlet);
        assert_eq!(c.distribution, DistributionConfig::Uniform { a: -1.0, b: 1.0 });
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let err = resolve(&format!("{BASE}\nbogus = 1\n"), &[]).unwrap_err();
        match err {
            CliError::Config { field, .. } => assert_eq!(field.as_deref(), Some("bogus")),
            e => panic!("{e}"),
        }
        let err = resolve(&BASE.replace("k_max = 2", "k_max = 2\nradius = 3"), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn gamma_zero_names_the_field() {
        let err = resolve(&BASE.replace("k_max = 2", "k_max = 2\ngamma = 0.0"), &[]).unwrap_err();
        match err {
            CliError::Config { field, .. } => assert_eq!(field.as_deref(), Some("geometry.gamma")),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn environment_then_flags() {
        let c = resolve(
            BASE,
            &[("MOURRE_GRID__N", "128"), ("MOURRE_SEED", "9"), ("OTHER", "x"), ("MOURRE_GEOMETRY__ALPHA", "0.5")],
        )
        .unwrap();
        assert_eq!(c.grid.unwrap().n, 128);
        assert_eq!(c.seed, 9);
        assert_eq!(c.geometry.unwrap().alpha, 0.5);
        let flags = Overrides {
            seed: Some(11),
            out: Some("x".into()),
        };
        let c = RunConfig::resolve(BASE, [("MOURRE_SEED", "9")], &flags).unwrap();
        assert_eq!(c.seed, 11);
        assert!(resolve(BASE, &[("MOURRE_GRID__BOGUS", "1")]).is_err());
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = resolve(BASE, &[]).unwrap();
        let again = resolve(&c.canonical(), &[]).unwrap();
        assert_eq!(c, again);
    }
}
