//! The subcommands. Each one reads a resolved [`RunConfig`], writes its
//! payloads through an [`OutputSink`] and finishes with a manifest.

use std::path::Path;
use std::time::Instant;

use mourre_core::disorder::{sample_disorder, DisorderRealization};
use mourre_core::evolution::{
    cook_integrand, cumulative_trapezoid, decay_slope, dyadic_increments, geometric_times, make_test_function,
    BandLimitedTestFunction, MultiplicationPotential, PowerLawFit,
};
use mourre_core::geometry::{build_example1_islands, greedy_islands, island_density, validate_island_set, IslandSet};
use mourre_core::grid::{Boundary, GridSpec};
use mourre_core::linalg::{EigenPair, SolverProvenance};
use mourre_core::operator::{assemble_hamiltonian, DiscreteHamiltonian};
use mourre_core::potential::{compute_e0, E0Report, IslandPotential, MollifierBump};
use mourre_core::spectral::{
    diagnose, goe_reference, ids_histogram, mourre_gap, poisson_reference, solve_window, spacing_ratio_stats,
    EnsembleEstimate, SolverOptions, SpectralReport, StateDiagnostics,
};
use mourre_core::wavelet::{
    admissible_scales, envelope_fit, f_elements, gram_matrix, EnvelopeFit, QuadratureOptions, WaveletDisorder,
    WaveletFamily, WaveletIndex,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DecayCenter, LayoutKind, Model, RunConfig};
use crate::error::{CliError, CliResult, Stage};
use crate::manifest::{sha256_hex, OutputSink, RunManifest, Versions, MANIFEST_SCHEMA};
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Islands,
    Spectrum,
    Mourre,
    Cook,
    WaveletCheck,
    Ids,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Islands,
        Command::Spectrum,
        Command::Mourre,
        Command::Cook,
        Command::WaveletCheck,
        Command::Ids,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Islands => "islands",
            Command::Spectrum => "spectrum",
            Command::Mourre => "mourre",
            Command::Cook => "cook",
            Command::WaveletCheck => "wavelet-check",
            Command::Ids => "ids",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub plot: bool,
}

/// Runs `cmd` into `out` and writes `manifest.json`. A failure detected after
/// the payloads were written (for example an island set with violations)
/// still leaves a complete manifest behind before the error is returned.
pub fn execute(cmd: Command, cfg: &RunConfig, out: &Path, opts: RunOptions) -> CliResult<RunManifest> {
    let start = Instant::now();
    let mut sink = OutputSink::create(out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    let deferred = pool.install(|| -> CliResult<Option<CliError>> {
        match cmd {
            Command::Islands => cmd_islands(cfg, &mut sink),
            Command::Spectrum => cmd_spectrum(cfg, &mut sink, opts).map(|_| None),
            Command::Mourre => cmd_mourre(cfg, &mut sink).map(|_| None),
            Command::Cook => cmd_cook(cfg, &mut sink, opts).map(|_| None),
            Command::WaveletCheck => cmd_wavelet_check(cfg, &mut sink).map(|_| None),
            Command::Ids => cmd_ids(cfg, &mut sink, opts).map(|_| None),
        }
    })?;
    let config = cfg.canonical();
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        command: cmd.name().into(),
        config_sha256: sha256_hex(config.as_bytes()),
        config,
        seed: cfg.seed,
        versions: Versions {
            mourre: env!("CARGO_PKG_VERSION").into(),
            mourre_core: mourre_core::VERSION.into(),
        },
        threads: opts.threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: Vec::new(),
    };
    let manifest = sink.finish(manifest)?;
    match deferred {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn require_model(cfg: &RunConfig, model: Model, cmd: Command) -> CliResult<()> {
    if cfg.model != model {
        return Err(CliError::config(
            "model",
            format!("`{}` needs model = \"{}\"", cmd.name(), if model == Model::Island { "island" } else { "wavelet" }),
        ));
    }
    Ok(())
}

pub fn build_islands(cfg: &RunConfig) -> CliResult<IslandSet> {
    let g = cfg.require_geometry()?;
    let mut set = match g.layout {
        LayoutKind::Example1 => build_example1_islands(g.r, g.k_max).stage("geometry")?,
        LayoutKind::Greedy => greedy_islands(&g.greedy_spec()?).stage("geometry")?,
    };
    set.gamma = g.gamma;
    Ok(set)
}

fn realization(cfg: &RunConfig, count: usize) -> CliResult<DisorderRealization> {
    let dist = cfg.distribution();
    if count == 0 {
        return Ok(DisorderRealization {
            couplings: Vec::new(),
            seed: cfg.seed,
            distribution: dist,
        });
    }
    sample_disorder(dist, count, cfg.seed).stage("disorder")
}

pub fn build_potential(cfg: &RunConfig) -> CliResult<(IslandPotential, E0Report)> {
    let g = cfg.require_geometry()?;
    let set = build_islands(cfg)?;
    let omega = realization(cfg, set.len())?;
    let p = IslandPotential::new(set, &omega, g.alpha, MollifierBump::default()).stage("potential")?;
    let e0 = compute_e0(&p, cfg.distribution().sup_bound(), g.truncation(), g.resolution()).stage("threshold")?;
    Ok((p, e0))
}

#[derive(Debug, Serialize)]
struct IslandsFile<'a> {
    schema: &'static str,
    #[serde(flatten)]
    set: &'a IslandSet,
}

#[derive(Debug, Serialize)]
struct DensityRow {
    annulus: u32,
    fraction: f64,
    std_error: f64,
    samples: u64,
    target: f64,
    z_score: f64,
}

fn cmd_islands(cfg: &RunConfig, sink: &mut OutputSink) -> CliResult<Option<CliError>> {
    let g = cfg.require_geometry()?;
    let set = build_islands(cfg)?;
    sink.json(
        "islands.json",
        "geometry",
        &IslandsFile {
            schema: "mourre.islands/1",
            set: &set,
        },
    )?;
    let violations = validate_island_set(&set);
    sink.json_lines("violations.jsonl", "geometry", &violations)?;
    let rows: Vec<DensityRow> = if g.layout == LayoutKind::Example1 && !set.is_empty() {
        let target = core::f64::consts::FRAC_PI_4;
        (1..=g.k_max)
            .into_par_iter()
            .map(|k| {
                island_density(&set, k, cfg.density.samples, cfg.seed).map(|e| DensityRow {
                    annulus: k,
                    fraction: e.fraction,
                    std_error: e.std_error,
                    samples: e.samples,
                    target,
                    z_score: (e.fraction - target) / e.std_error,
                })
            })
            .collect::<Result<_, _>>()
            .stage("density")?
    } else {
        Vec::new()
    };
    sink.csv(
        "density.csv",
        "density",
        &["annulus", "fraction", "std_error", "samples", "target", "z_score"],
        &rows,
    )?;
    if violations.is_empty() {
        Ok(None)
    } else {
        Ok(Some(CliError::Numeric {
            stage: "geometry",
            source: mourre_core::Error::Precondition(format!(
                "island set has {} violations, see violations.jsonl",
                violations.len()
            )),
        }))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorMeta {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub boundary: Boundary,
    pub stencil_order: u32,
    pub potential_sha256: String,
}

/// The assembled island-model operator and its `B` field.
pub struct IslandOperator {
    pub grid: GridSpec,
    pub h: DiscreteHamiltonian,
    pub b: Vec<f64>,
    pub e0: E0Report,
    pub meta: OperatorMeta,
}

pub fn island_operator(cfg: &RunConfig) -> CliResult<IslandOperator> {
    let gc = cfg.require_grid()?;
    let grid = gc.spec();
    let (p, e0) = build_potential(cfg)?;
    if p.dimension() != grid.dimension {
        return Err(CliError::config(
            "grid.d",
            format!("the island set is {}-dimensional", p.dimension()),
        ));
    }
    let h = assemble_hamiltonian(grid, gc.budget, |x| p.value(x)).stage("assemble")?;
    let b = grid.sample(|x| p.b_field(x));
    let bytes: Vec<u8> = h.potential().iter().flat_map(|v| v.to_le_bytes()).collect();
    let meta = OperatorMeta {
        d: grid.dimension,
        l: grid.half_length,
        n: grid.points,
        boundary: grid.boundary,
        stencil_order: 2,
        potential_sha256: sha256_hex(&bytes),
    };
    Ok(IslandOperator { grid, h, b, e0, meta })
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.solver.tol,
        slice_size: cfg.solver.slice_size,
        seed: cfg.seed,
    }
}

fn peak(grid: &GridSpec, f: &[f64]) -> Vec<f64> {
    let i = f
        .iter()
        .enumerate()
        .fold((0, 0.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
        .0;
    let mut x = vec![0.0; grid.dimension];
    grid.point(i, &mut x);
    x
}

fn diagnostics(cfg: &RunConfig, op: &IslandOperator, pairs: &[EigenPair]) -> CliResult<Vec<StateDiagnostics>> {
    pairs
        .par_iter()
        .map(|pair| {
            let center = match cfg.diagnostics.decay_center {
                DecayCenter::Peak => peak(&op.grid, &pair.eigenvector),
                DecayCenter::Origin => vec![0.0; op.grid.dimension],
            };
            diagnose(&op.grid, pair, &op.b, &center)
        })
        .collect::<Result<_, _>>()
        .stage("diagnostics")
}

#[derive(Debug, Serialize)]
struct StateRow {
    index: usize,
    eigenvalue: f64,
    residual: f64,
    ipr: f64,
    decay_rate: f64,
    decay_goodness: f64,
    boundary_weight: f64,
    virial_residual: f64,
    virial_flagged: bool,
    localized_above_threshold: bool,
}

fn state_rows(report: &SpectralReport, virial_tol: f64) -> Vec<StateRow> {
    let flagged = report.localized_above_threshold(virial_tol);
    report
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| StateRow {
            index: i,
            eigenvalue: s.eigenvalue,
            residual: s.residual,
            ipr: s.ipr,
            decay_rate: s.decay_rate,
            decay_goodness: s.decay_goodness,
            boundary_weight: s.boundary_weight,
            virial_residual: s.virial_residual,
            virial_flagged: s.virial_flagged,
            localized_above_threshold: flagged.iter().any(|f| std::ptr::eq(*f, s)),
        })
        .collect()
}

const STATE_HEADER: [&str; 10] = [
    "index",
    "eigenvalue",
    "residual",
    "ipr",
    "decay_rate",
    "decay_goodness",
    "boundary_weight",
    "virial_residual",
    "virial_flagged",
    "localized_above_threshold",
];

#[derive(Debug, Serialize)]
struct SpectrumFile<'a> {
    schema: &'static str,
    seed: u64,
    operator: &'a OperatorMeta,
    threshold: &'a E0Report,
    virial_tol: f64,
    localized_above_threshold: usize,
    #[serde(flatten)]
    report: &'a SpectralReport,
}

pub struct SpectrumRun {
    pub op: IslandOperator,
    pub pairs: Vec<EigenPair>,
    pub report: SpectralReport,
}

pub fn island_spectrum(cfg: &RunConfig, window: Option<(f64, f64)>, e1: Option<f64>) -> CliResult<SpectrumRun> {
    let op = island_operator(cfg)?;
    let (lo, hi) = match window {
        Some(w) => w,
        None => {
            let [lo, hi] = cfg
                .solver
                .window
                .ok_or_else(|| CliError::config("solver.window", "this command needs an energy window"))?;
            (lo, hi)
        }
    };
    let (pairs, solver): (Vec<EigenPair>, SolverProvenance) =
        solve_window(&op.h, lo, hi, cfg.solver.k_max, solver_options(cfg)).stage("solve")?;
    let states = diagnostics(cfg, &op, &pairs)?;
    let report = SpectralReport {
        grid: op.grid,
        window: (lo, hi),
        e0: op.e0.e0,
        e1,
        states,
        mourre_gap: None,
        virial_margin: cfg.diagnostics.virial_margin,
        solver,
    };
    Ok(SpectrumRun { op, pairs, report })
}

fn write_potential(cfg: &RunConfig, op: &IslandOperator, sink: &mut OutputSink) -> CliResult<()> {
    if !cfg.diagnostics.write_potential {
        return Ok(());
    }
    let d = op.grid.dimension;
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("V".into());
    header.push("B".into());
    let mut x = vec![0.0; d];
    let rows: Vec<Vec<f64>> = (0..op.grid.len())
        .map(|i| {
            op.grid.point(i, &mut x);
            let mut r = x.clone();
            r.push(op.h.potential()[i]);
            r.push(op.b[i]);
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    sink.csv("potential.csv", "potential", &header, &rows)
}

fn cmd_spectrum(cfg: &RunConfig, sink: &mut OutputSink, opts: RunOptions) -> CliResult<()> {
    require_model(cfg, Model::Island, Command::Spectrum)?;
    let run = island_spectrum(cfg, None, None)?;
    let rows = state_rows(&run.report, cfg.diagnostics.virial_tol);
    let count = rows.iter().filter(|r| r.localized_above_threshold).count();
    sink.json(
        "report.json",
        "spectrum",
        &SpectrumFile {
            schema: "mourre.report/1",
            seed: cfg.seed,
            operator: &run.op.meta,
            threshold: &run.op.e0,
            virial_tol: cfg.diagnostics.virial_tol,
            localized_above_threshold: count,
            report: &run.report,
        },
    )?;
    sink.csv("states.csv", "spectrum", &STATE_HEADER, &rows)?;
    write_potential(cfg, &run.op, sink)?;
    if opts.plot {
        let pts: Vec<(f64, f64)> = run.report.states.iter().map(|s| (s.eigenvalue, s.ipr)).collect();
        sink.artifact("ipr_vs_energy.svg", "plot", plot::ipr_vs_energy(&pts, run.op.e0.e0)?.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MourreFile<'a> {
    schema: &'static str,
    seed: u64,
    operator: &'a OperatorMeta,
    threshold: &'a E0Report,
    e0: f64,
    e1: f64,
    window: (f64, f64),
    states: usize,
    gap: f64,
    bound: f64,
    tolerance: f64,
    satisfied: bool,
    solver: &'a SolverProvenance,
}

fn cmd_mourre(cfg: &RunConfig, sink: &mut OutputSink) -> CliResult<()> {
    require_model(cfg, Model::Island, Command::Mourre)?;
    // E0 first, to place the window
    let (_, e0) = build_potential(cfg)?;
    if !e0.is_bounded() {
        return Err(CliError::Numeric {
            stage: "threshold",
            source: mourre_core::Error::Precondition("E0 is unbounded for this family".into()),
        });
    }
    let e1 = e0.e0 + cfg.mourre.e1_offset;
    let window = (e1, e1 + cfg.mourre.width);
    let mut run = island_spectrum(cfg, Some(window), Some(e1))?;
    let gap = mourre_gap(&run.op.h, &run.pairs, &run.op.b).stage("mourre")?;
    run.report.mourre_gap = Some(gap);
    let bound = 2.0 * (e1 - e0.e0);
    sink.json(
        "mourre.json",
        "mourre",
        &MourreFile {
            schema: "mourre.gap/1",
            seed: cfg.seed,
            operator: &run.op.meta,
            threshold: &run.op.e0,
            e0: e0.e0,
            e1,
            window,
            states: run.pairs.len(),
            gap,
            bound,
            tolerance: cfg.mourre.tolerance,
            satisfied: gap >= bound - cfg.mourre.tolerance,
            solver: &run.report.solver,
        },
    )?;
    let rows = state_rows(&run.report, cfg.diagnostics.virial_tol);
    sink.csv("states.csv", "mourre", &STATE_HEADER, &rows)
}

#[derive(Debug, Serialize)]
struct CookRow {
    t: f64,
    integrand: f64,
    partial: f64,
    tail_bound: f64,
    flagged: bool,
    cumulative: f64,
}

#[derive(Debug, Serialize)]
struct Increment {
    from: f64,
    to: f64,
    increment: f64,
}

#[derive(Debug, Serialize)]
struct BoxMeta {
    #[serde(rename = "L")]
    l: f64,
    #[serde(rename = "N")]
    n: usize,
    required_half_length: f64,
    /// Translation truncation of the unbounded wavelet axes.
    #[serde(skip_serializing_if = "Option::is_none")]
    n2_truncation: Option<i64>,
}

#[derive(Debug, Serialize)]
struct SlopeFile {
    schema: &'static str,
    model: Model,
    seed: u64,
    slope: Option<PowerLawFit>,
    increments: Vec<Increment>,
    increments_shrink: bool,
    flagged_times: usize,
    #[serde(rename = "box")]
    box_meta: BoxMeta,
    centers: Vec<f64>,
    width: f64,
}

/// `(integrand, partial, tail, flagged)` per time.
type CookSample = (f64, f64, f64, bool);

pub const MIN_FIT_POINTS: usize = 8;

/// Smallest `T` whose translations `k 2^{-n₁}` reach the edge of the box at
/// the finest admissible scale, so the packet never leaves the truncated family.
pub fn box_truncation(f: &BandLimitedTestFunction) -> i64 {
    f_elements(f.dimension())
        .iter()
        .flat_map(|c| admissible_scales(c, f))
        .max()
        .map_or(0, |n1| (f.grid.half_length * f64::from(n1).exp2()).ceil() as i64)
}

fn cmd_cook(cfg: &RunConfig, sink: &mut OutputSink, opts: RunOptions) -> CliResult<()> {
    let ev = cfg.require_evolve()?;
    let grid = cfg.require_grid()?.spec();
    if ev.points < MIN_FIT_POINTS {
        return Err(CliError::Numeric {
            stage: "fit",
            source: mourre_core::Error::Precondition(format!(
                "a decay fit needs at least {MIN_FIT_POINTS} times, evolve.points = {}",
                ev.points
            )),
        });
    }
    if ev.f.centers.len() != grid.dimension {
        return Err(CliError::config(
            "evolve.f.centers",
            format!("need {} centers for a {}-dimensional grid", grid.dimension, grid.dimension),
        ));
    }
    let f: BandLimitedTestFunction = make_test_function(grid, &ev.f.centers, ev.f.width).stage("test-function")?;
    f.check_box(ev.t_hi).stage("evolve")?;
    let ts = geometric_times(ev.t_lo, ev.t_hi, ev.points).stage("evolve")?;
    let mut n2_truncation = None;
    let samples: Vec<CookSample> = match cfg.model {
        Model::Wavelet => {
            let w = cfg.wavelet_or_default();
            if w.d != grid.dimension {
                return Err(CliError::config("wavelet.d", "must equal grid.d"));
            }
            let truncation = w.n2_max.max(box_truncation(&f));
            n2_truncation = Some(truncation);
            let family = WaveletFamily::new(w.d, w.bounded_axis, w.k, truncation).stage("wavelet")?;
            let omega = WaveletDisorder::new(cfg.distribution(), cfg.seed).stage("disorder")?;
            let coupling = |n: &WaveletIndex| omega.coupling(n);
            ts.par_iter()
                .map(|&t| {
                    family
                        .cook_sum(&coupling, omega.sup_bound(), &f, t)
                        .map(|s| (s.total(), s.partial, s.tail_bound, s.flagged))
                })
                .collect::<Result<_, _>>()
                .stage("cook")?
        }
        Model::Island => {
            let (p, _) = build_potential(cfg)?;
            if p.dimension() != grid.dimension {
                return Err(CliError::config("grid.d", format!("the island set is {}-dimensional", p.dimension())));
            }
            let v = MultiplicationPotential {
                values: grid.sample(|x| p.value(x)),
            };
            ts.par_iter()
                .map(|&t| cook_integrand(&v, &f, t).map(|x| (x, x, 0.0, false)))
                .collect::<Result<_, _>>()
                .stage("cook")?
        }
    };
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let cumulative = cumulative_trapezoid(&ts, &values);
    let rows: Vec<CookRow> = ts
        .iter()
        .zip(&samples)
        .zip(&cumulative)
        .map(|((&t, s), &c)| CookRow {
            t,
            integrand: s.0,
            partial: s.1,
            tail_bound: s.2,
            flagged: s.3,
            cumulative: c,
        })
        .collect();
    let slope = if values.iter().all(|v| *v == 0.0) {
        None
    } else {
        Some(decay_slope(&ts, &values).stage("fit")?)
    };
    let increments: Vec<Increment> = dyadic_increments(&ts, &cumulative)
        .into_iter()
        .map(|(t, inc)| Increment {
            from: t,
            to: (2.0 * t).min(ev.t_hi),
            increment: inc,
        })
        .collect();
    let increments_shrink = increments.windows(2).all(|w| w[1].increment < w[0].increment);
    sink.csv(
        "cook.csv",
        "cook",
        &["t", "integrand", "partial", "tail_bound", "flagged", "cumulative"],
        &rows,
    )?;
    sink.json(
        "slope.json",
        "cook",
        &SlopeFile {
            schema: "mourre.slope/1",
            model: cfg.model,
            seed: cfg.seed,
            slope,
            increments,
            increments_shrink,
            flagged_times: samples.iter().filter(|s| s.3).count(),
            box_meta: BoxMeta {
                l: grid.half_length,
                n: grid.points,
                required_half_length: f.required_half_length(ev.t_hi),
                n2_truncation,
            },
            centers: ev.f.centers.clone(),
            width: ev.f.width,
        },
    )?;
    if opts.plot {
        let pts: Vec<(f64, f64)> = ts.iter().copied().zip(values.iter().copied()).collect();
        let fit = slope.map(|s| (s.slope, s.prefactor.ln()));
        sink.artifact("cook.svg", "plot", plot::loglog(&pts, fit, "Cook integrand")?.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct IndicesFile<'a> {
    schema: &'static str,
    d: usize,
    count: usize,
    indices: &'a [WaveletIndex],
}

#[derive(Debug, Serialize)]
struct GramRow {
    i: usize,
    j: usize,
    re: f64,
    im: f64,
    deviation: f64,
}

#[derive(Debug, Serialize)]
struct AuditRow {
    c: String,
    n1: i32,
    t: f64,
    admissible: bool,
    max_abs: f64,
}

#[derive(Debug, Serialize)]
struct ScaleWindow {
    c: Vec<u8>,
    scales: Vec<i32>,
}

#[derive(Debug, Serialize)]
struct SelectionSummary {
    rows: usize,
    violations: usize,
    windows: Vec<ScaleWindow>,
}

#[derive(Debug, Serialize)]
struct EnvelopeSummary {
    c: Vec<u8>,
    n1: i32,
    axis: usize,
    t: f64,
    floor: f64,
    fit: Option<EnvelopeFit>,
    within_shape: bool,
    min_r_squared: f64,
}

#[derive(Debug, Serialize)]
struct WaveletSummary {
    schema: &'static str,
    d: usize,
    count: usize,
    max_deviation: f64,
    gram_within_tolerance: bool,
    selection: SelectionSummary,
    envelope: EnvelopeSummary,
    centers: Vec<f64>,
    width: f64,
}

pub const GRAM_TOLERANCE: f64 = 1e-8;

fn product_range(d: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                (lo..=hi).map(move |k| {
                    let mut q = p.clone();
                    q.push(k);
                    q
                })
            })
            .collect();
    }
    out
}

fn c_label(c: &[u8]) -> String {
    c.iter().map(|v| v.to_string()).collect()
}

fn cmd_wavelet_check(cfg: &RunConfig, sink: &mut OutputSink) -> CliResult<()> {
    let w = cfg.wavelet_or_default();
    let d = w.d;
    let wc = &cfg.wavelet_check;
    let elements = match &wc.elements {
        Some(e) => e.clone(),
        None => f_elements(d),
    };
    let mut indices = Vec::new();
    for c in &elements {
        for n1 in wc.n1[0]..=wc.n1[1] {
            for n2 in product_range(d, wc.n2[0], wc.n2[1]) {
                indices.push(
                    WaveletIndex::new(c.clone(), n1, n2)
                        .map_err(|e| CliError::config("wavelet_check.elements", e.to_string()))?,
                );
            }
        }
    }
    indices.sort();
    indices.dedup();
    let quad = QuadratureOptions::default();
    let (gram, max_deviation) = gram_matrix(&indices, &quad).stage("gram")?;
    let mut gram_rows = Vec::new();
    for i in 0..indices.len() {
        for j in i..indices.len() {
            let v = gram[(i, j)];
            let expect = if i == j { 1.0 } else { 0.0 };
            gram_rows.push(GramRow {
                i,
                j,
                re: v.re,
                im: v.im,
                deviation: (v - num_complex::Complex64::new(expect, 0.0)).norm(),
            });
        }
    }

    // selection rule and envelope use one test function
    let (centers, width) = match &cfg.evolve {
        Some(ev) => (ev.f.centers.clone(), ev.f.width),
        None => (vec![1.0; d], 0.6),
    };
    if centers.len() != d {
        return Err(CliError::config("evolve.f.centers", format!("need {d} centers")));
    }
    let grid = match cfg.grid {
        Some(g) if g.d == d => g.spec(),
        _ => GridSpec::new(d, 512.0, 1024, Boundary::Periodic).stage("grid")?,
    };
    let f = make_test_function(grid, &centers, width).stage("test-function")?;
    let family = WaveletFamily::new(d, w.bounded_axis, w.k, w.n2_max).stage("wavelet")?;
    let all_f = f_elements(d);
    let probes = product_range(d, -3, 3);
    let jobs: Vec<(Vec<u8>, i32, f64)> = all_f
        .iter()
        .flat_map(|c| {
            (wc.audit_scales[0]..=wc.audit_scales[1])
                .flat_map(move |n1| wc.audit_times.iter().map(move |&t| (c.clone(), n1, t)))
        })
        .collect();
    let audit: Vec<AuditRow> = jobs
        .par_iter()
        .map(|(c, n1, t)| {
            let window = admissible_scales(c, &f);
            let mut max_abs = 0.0_f64;
            for n2 in &probes {
                let idx = WaveletIndex::new(c.clone(), *n1, n2.clone())?;
                max_abs = max_abs.max(family.overlap(&idx, &f, *t)?.norm());
            }
            Ok(AuditRow {
                c: c_label(c),
                n1: *n1,
                t: *t,
                admissible: window.contains(n1),
                max_abs,
            })
        })
        .collect::<mourre_core::Result<_>>()
        .stage("selection")?;
    let violations = audit.iter().filter(|r| !r.admissible && r.max_abs != 0.0).count();
    let windows = all_f
        .iter()
        .map(|c| ScaleWindow {
            c: c.clone(),
            scales: admissible_scales(c, &f),
        })
        .collect();

    let env = &wc.envelope;
    let ec = env.c.clone().unwrap_or_else(|| vec![1; d]);
    if ec.len() != d {
        return Err(CliError::config("wavelet_check.envelope.c", format!("need {d} entries")));
    }
    let axis = env.axis.unwrap_or(d - 1);
    if axis >= d {
        return Err(CliError::config("wavelet_check.envelope.axis", "must name a coordinate below d"));
    }
    let at = |n1: i32, k: i64| -> mourre_core::Result<f64> {
        let mut n2 = vec![0; d];
        n2[axis] = k;
        Ok(family.overlap(&WaveletIndex::new(ec.clone(), n1, n2)?, &f, env.t)?.norm())
    };
    let n1 = match env.n1 {
        Some(n) => n,
        None => {
            let mut best = (i32::MIN, -1.0);
            for n in admissible_scales(&ec, &f) {
                let v = at(n, 0).stage("envelope")?;
                if v > best.1 {
                    best = (n, v);
                }
            }
            if best.0 == i32::MIN {
                return Err(CliError::config(
                    "wavelet_check.envelope.c",
                    "no admissible scale for this element and test function",
                ));
            }
            best.0
        }
    };
    let sweep: Vec<(i64, f64)> = (-env.n2_max..=env.n2_max)
        .into_par_iter()
        .map(|k| at(n1, k).map(|v| (k, v)))
        .collect::<mourre_core::Result<_>>()
        .stage("envelope")?;
    let fit = envelope_fit(&sweep, env.floor).ok();
    let within_shape = fit.as_ref().is_some_and(|e| e.within_shape(env.min_r_squared));

    sink.json(
        "indices.json",
        "gram",
        &IndicesFile {
            schema: "mourre.indices/1",
            d,
            count: indices.len(),
            indices: &indices,
        },
    )?;
    sink.csv("gram.csv", "gram", &["i", "j", "re", "im", "deviation"], &gram_rows)?;
    sink.csv("audit.csv", "selection", &["c", "n1", "t", "admissible", "max_abs"], &audit)?;
    sink.csv("envelope.csv", "envelope", &["n2", "abs"], &sweep)?;
    sink.json(
        "summary.json",
        "wavelet-check",
        &WaveletSummary {
            schema: "mourre.wavelet-check/1",
            d,
            count: indices.len(),
            max_deviation,
            gram_within_tolerance: max_deviation < GRAM_TOLERANCE,
            selection: SelectionSummary {
                rows: audit.len(),
                violations,
                windows,
            },
            envelope: EnvelopeSummary {
                c: ec,
                n1,
                axis,
                t: env.t,
                floor: env.floor,
                fit,
                within_shape,
                min_r_squared: env.min_r_squared,
            },
            centers,
            width,
        },
    )
}

#[derive(Debug, Serialize)]
struct IdsRow {
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
    fraction: f64,
}

#[derive(Debug, Serialize)]
struct IdsFile<'a> {
    schema: &'static str,
    seed: u64,
    operator: &'a OperatorMeta,
    e0: f64,
    total: usize,
    negative_count: usize,
    range: (f64, f64),
    spacing_ratio: Option<f64>,
    poisson_reference: Option<EnsembleEstimate>,
    goe_reference: Option<EnsembleEstimate>,
    solver: &'a SolverProvenance,
}

pub const GOE_REFERENCE_DIM: usize = 200;

fn cmd_ids(cfg: &RunConfig, sink: &mut OutputSink, opts: RunOptions) -> CliResult<()> {
    require_model(cfg, Model::Island, Command::Ids)?;
    let op = island_operator(cfg)?;
    let vmin = op.h.potential().iter().copied().fold(0.0, f64::min);
    let vmax = op.h.potential().iter().copied().fold(0.0, f64::max);
    let h = op.grid.spacing();
    let top = 4.0 * op.grid.dimension as f64 / (h * h) + vmax + 1.0;
    let (pairs, solver) =
        solve_window(&op.h, vmin - 1.0, top, op.grid.len(), solver_options(cfg)).stage("solve")?;
    let eigs: Vec<f64> = pairs.iter().map(|p| p.eigenvalue).collect();
    let range = cfg.ids.range.map(|[a, b]| (a, b));
    let hist = ids_histogram(&eigs, cfg.ids.bins, range).stage("ids")?;
    let rows: Vec<IdsRow> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &count)| IdsRow {
            bin_lo: hist.edges[i],
            bin_hi: hist.edges[i + 1],
            count,
            fraction: hist.fraction[i],
        })
        .collect();
    let (lo, hi) = (hist.edges[0], hist.edges[hist.edges.len() - 1]);
    let in_range: Vec<f64> = eigs.iter().copied().filter(|e| *e >= lo && *e <= hi).collect();
    let spacing_ratio = spacing_ratio_stats(&in_range).ok();
    let samples = cfg.ids.reference_samples;
    let (poisson, goe) = if spacing_ratio.is_some() && samples > 1 {
        (
            Some(poisson_reference(in_range.len(), samples, cfg.seed)),
            Some(goe_reference(GOE_REFERENCE_DIM, (samples / 20).max(2), cfg.seed)),
        )
    } else {
        (None, None)
    };
    sink.csv("ids.csv", "ids", &["bin_lo", "bin_hi", "count", "fraction"], &rows)?;
    sink.json(
        "ids.json",
        "ids",
        &IdsFile {
            schema: "mourre.ids/1",
            seed: cfg.seed,
            operator: &op.meta,
            e0: op.e0.e0,
            total: eigs.len(),
            negative_count: eigs.iter().filter(|e| **e < 0.0).count(),
            range: (lo, hi),
            spacing_ratio,
            poisson_reference: poisson,
            goe_reference: goe,
            solver: &solver,
        },
    )?;
    if opts.plot {
        sink.artifact(
            "ids.svg",
            "plot",
            plot::histogram(&hist.edges, &hist.fraction, "integrated density of states")?.as_bytes(),
        )?;
    }
    Ok(())
}
