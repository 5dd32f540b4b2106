//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero when any of them fails.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::Value;

use mourre::run::{execute, island_spectrum, Command, RunOptions};
use mourre::{Overrides, RunConfig};
use mourre_core::evolution::{frequency, make_test_function, propagate, grid_norm};
use mourre_core::fft::fft_nd;
use mourre_core::geometry::{build_example1_islands, island_density, validate_island_set, Island, IslandSet, Layout};
use mourre_core::grid::{Boundary, GridSpec, DEFAULT_UNKNOWN_BUDGET};
use mourre_core::linalg::{solve_window, SymmetricOperator};
use mourre_core::operator::{assemble_hamiltonian, commutator_residual, DiscreteHamiltonian};
use mourre_core::potential::{compute_e0, IslandPotential, MollifierBump, ProbeResolution, Truncation};
use mourre_core::spectral::{anderson_field, diagnose, ipr, linear_fit, mourre_gap, SolverOptions};

type Outcome = Result<String, String>;

fn config(text: &str) -> RunConfig {
    RunConfig::resolve(text, std::iter::empty::<(String, String)>(), &Overrides::default()).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn example1_geometry() -> Outcome {
    let samples = 1_000_000;
    let mut notes = Vec::new();
    for k_max in 1..=6u32 {
        let set = build_example1_islands(1.0, k_max).map_err(|e| e.to_string())?;
        if set.len() != 12 * k_max as usize {
            return Err(format!("k_max = {k_max}: {} islands", set.len()));
        }
        let v = validate_island_set(&set);
        if !v.is_empty() {
            return Err(format!("k_max = {k_max}: {} violations", v.len()));
        }
        for k in 1..=k_max {
            let scale = 2f64.powi(k as i32 - 1);
            let mut moduli: Vec<f64> = set
                .islands
                .iter()
                .map(|i| i.center_norm())
                .filter(|m| *m > 2f64.powi(k as i32) && *m < 2f64.powi(k as i32 + 1) * 2f64.sqrt())
                .collect();
            moduli.sort_by(|a, b| a.total_cmp(b));
            let short = 10f64.sqrt() * scale;
            let long = 18f64.sqrt() * scale;
            let n_short = moduli.iter().filter(|m| (*m - short).abs() < 1e-9 * long).count();
            let n_long = moduli.iter().filter(|m| (*m - long).abs() < 1e-9 * long).count();
            if n_short + n_long != 12 || n_short == 0 || n_long == 0 {
                return Err(format!("annulus {k}: {n_short} at sqrt10, {n_long} at sqrt18"));
            }
        }
    }
    let set = build_example1_islands(1.0, 6).unwrap();
    let worst = (1..=6u32)
        .into_par_iter()
        .map(|k| {
            let e = island_density(&set, k, samples, 2024).unwrap();
            (e.fraction - FRAC_PI_4).abs() / e.std_error
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    notes.push(format!("worst density z-score {worst:.2}"));
    check(worst <= 3.0, notes.join(", "))
}

fn commutator_order() -> Outcome {
    let mut pts = Vec::new();
    for n in [64, 128, 256] {
        let g = GridSpec::new(1, 8.0, n, Boundary::Dirichlet).unwrap();
        let h = assemble_hamiltonian(g, DEFAULT_UNKNOWN_BUDGET, |_| 0.0).unwrap();
        let f = g.sample(|x| (-x[0] * x[0] / 2.0).exp());
        let r = commutator_residual(&h, &vec![0.0; g.len()], &f).map_err(|e| e.to_string())?;
        pts.push((g.spacing().ln(), r.ln()));
    }
    let slope = linear_fit(&pts).slope;
    check((slope - 2.0).abs() <= 0.2, format!("slope {slope:.3}"))
}

/// `-x . grad V - 2V` by central differences of `V`.
fn b_by_differences(p: &IslandPotential, x: &[f64], delta: f64) -> f64 {
    let mut y = x.to_vec();
    let mut x_grad = 0.0;
    for j in 0..x.len() {
        y[j] = x[j] + delta;
        let up = p.value(&y);
        y[j] = x[j] - delta;
        let down = p.value(&y);
        y[j] = x[j];
        x_grad += x[j] * (up - down) / (2.0 * delta);
    }
    -x_grad - 2.0 * p.value(x)
}

fn threshold_e0() -> Outcome {
    let set = build_example1_islands(1.0, 2).unwrap();
    let n = set.len();
    let m = 1.7;
    let res = ProbeResolution::default();
    let unit = IslandPotential::with_couplings(set.clone(), vec![0.0; n], 0.0, 0.0, MollifierBump::default())
        .map_err(|e| e.to_string())?;
    let e1 = compute_e0(&unit, m, Truncation::Finite, res).unwrap().e0;
    for s in [0.0, 0.25, 2.0, 3.0, 1e3] {
        let es = compute_e0(&unit, s * m, Truncation::Finite, res).unwrap().e0;
        if (es - s * e1).abs() > 4.0 * f64::EPSILON * es.abs() {
            return Err(format!("E0({s} M) = {es}, {s} E0(M) = {}", s * e1));
        }
    }
    // sup over |omega| <= M is attained at omega = M on every island
    let full = IslandPotential::with_couplings(set.clone(), vec![m; n], m, 0.0, MollifierBump::default()).unwrap();
    let per_unit = 10 * res.points_per_unit;
    let brute = set
        .islands
        .par_iter()
        .map(|isl| {
            let step = isl.radius / per_unit as f64;
            let count = 2 * per_unit + 1;
            let mut best = 0.0_f64;
            let mut x = [0.0; 2];
            for a in 0..count {
                x[0] = isl.center[0] - isl.radius + step * a as f64;
                for b in 0..count {
                    x[1] = isl.center[1] - isl.radius + step * b as f64;
                    best = best.max(b_by_differences(&full, &x, 1e-6 * isl.radius).abs());
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
        * 0.5;
    let rel = (e1 - brute).abs() / brute;
    check(rel <= 0.01, format!("E0 {e1:.6}, refined brute force {brute:.6}, relative gap {rel:.2e}"))
}

fn greedy_model(m: f64) -> String {
    format!(
        r#"
model = "island"
seed = 11
[geometry]
layout = "greedy"
d = 1
c = 0.3
spacing = 1.0
extent = 90.0
alpha = 0.0
beta = 1.0
[distribution]
kind = "uniform"
a = {lo}
b = {m}
[grid]
d = 1
L = 100.0
N = 2048
[solver]
k_max = 2000
"#,
        lo = -m
    )
}

fn deep_well() -> Result<(usize, usize), String> {
    let set = IslandSet {
        dimension: 1,
        beta: 1.0,
        gamma: 1.0,
        c1: 0.5,
        c2: 0.5,
        islands: vec![Island {
            center: vec![6.0],
            radius: 3.0,
        }],
        layout: Layout::Custom,
    };
    let depth = 40.0;
    let p = IslandPotential::with_couplings(set, vec![-depth], depth, 0.0, MollifierBump::default())
        .map_err(|e| e.to_string())?;
    let e0 = compute_e0(&p, depth, Truncation::Finite, ProbeResolution::default()).unwrap().e0;
    let g = GridSpec::new(1, 100.0, 2048, Boundary::Dirichlet).unwrap();
    let h = assemble_hamiltonian(g, DEFAULT_UNKNOWN_BUDGET, |x| p.value(x)).unwrap();
    let b = g.sample(|x| p.b_field(x));
    let (pairs, _) = solve_window(&h, -2.0 * depth, e0 + 10.0, 4000, SolverOptions::default()).map_err(|e| e.to_string())?;
    let mut localized = 0;
    let mut bad = 0;
    for pair in &pairs {
        let s = diagnose(&g, pair, &b, &[6.0]).unwrap();
        if s.boundary_weight < 1e-6 && s.virial_residual < 0.05 * s.eigenvalue.abs().max(1.0) {
            localized += 1;
            if s.eigenvalue > e0 + 0.1 {
                bad += 1;
            }
        }
    }
    Ok((localized, bad))
}

fn virial_localization() -> Outcome {
    let cfg = config(&greedy_model(1.0));
    let probe = island_spectrum(&cfg, Some((-1.0, -0.5)), None).map_err(|e| e.to_string())?;
    let e0 = probe.op.e0.e0;
    let hi = e0 + 10.0;
    let run = island_spectrum(&cfg, Some((-50.0, hi)), None).map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    let mut localized = 0;
    for s in &run.report.states {
        if s.boundary_weight < 1e-6 && s.virial_residual < 0.05 * s.eigenvalue.abs().max(1.0) {
            localized += 1;
            if s.eigenvalue > e0 + 0.1 {
                bad.push(s.eigenvalue);
            }
        }
    }
    let (well_localized, well_bad) = deep_well()?;
    // Anderson reference on the same grid, energies matched to the island window above E0
    let grid = run.op.grid;
    let disorder = 150.0;
    let href = DiscreteHamiltonian::from_values(grid, anderson_field(&grid, disorder, 5), DEFAULT_UNKNOWN_BUDGET)
        .map_err(|e| e.to_string())?;
    let lo = e0 + 0.1;
    let (ref_pairs, _) = solve_window(&href, lo, hi, 2000, SolverOptions::default()).map_err(|e| e.to_string())?;
    let island_ipr: Vec<f64> = run
        .report
        .states
        .iter()
        .filter(|s| s.eigenvalue > lo)
        .map(|s| s.ipr)
        .collect();
    let ref_ipr: Vec<f64> = ref_pairs.iter().map(|p| ipr(&p.eigenvector).unwrap()).collect();
    if island_ipr.is_empty() || ref_ipr.is_empty() {
        return Err(format!("no states above E0: {} island, {} reference", island_ipr.len(), ref_ipr.len()));
    }
    let ratio = median(ref_ipr.clone()) / median(island_ipr.clone());
    let detail = format!(
        "E0 {e0:.3}, {} states, {localized} localized, {} above E0+0.1; deep well {well_localized} localized, {well_bad} above; IPR ratio {ratio:.1} ({} vs {} states)",
        run.report.states.len(),
        bad.len(),
        ref_ipr.len(),
        island_ipr.len()
    );
    check(bad.is_empty() && well_bad == 0 && well_localized > 0 && ratio >= 5.0, detail)
}

fn mourre_window() -> Outcome {
    let cfg = config(&greedy_model(0.1));
    let probe = island_spectrum(&cfg, Some((-1.0, -0.5)), None).map_err(|e| e.to_string())?;
    let e0 = probe.op.e0.e0;
    let e1 = e0 + 1.0;
    let run = island_spectrum(&cfg, Some((e1, e0 + 2.0)), Some(e1)).map_err(|e| e.to_string())?;
    if run.pairs.is_empty() {
        return Err("empty window".into());
    }
    let gap = mourre_gap(&run.op.h, &run.pairs, &run.op.b).map_err(|e| e.to_string())?;
    let bound = 2.0 * (e1 - e0) - 0.1;
    check(gap >= bound, format!("E0 {e0:.4}, {} states, gap {gap:.4} against {bound:.4}", run.pairs.len()))
}

fn fourier_leak(grid: &GridSpec, g: &[Complex64], inside: impl Fn(&[f64]) -> bool) -> f64 {
    let mut data = g.to_vec();
    fft_nd(&mut data, grid.points, grid.dimension, false).unwrap();
    let n = grid.points;
    let mut xi = vec![0.0; grid.dimension];
    let mut out = 0.0_f64;
    let mut all = 0.0_f64;
    for (flat, v) in data.iter().enumerate() {
        let mut rest = flat;
        for x in xi.iter_mut() {
            *x = frequency(grid, rest % n);
            rest /= n;
        }
        all = all.max(v.norm());
        if !inside(&xi) {
            out = out.max(v.norm());
        }
    }
    out / all
}

fn free_evolution() -> Outcome {
    let mut worst = 0.0_f64;
    for (d, n, l, centers) in [
        (1, 512, 160.0, vec![1.0]),
        (2, 256, 96.0, vec![1.0, -0.8]),
        (2, 512, 160.0, vec![0.7, 1.1]),
    ] {
        let grid = GridSpec::new(d, l, n, Boundary::Periodic).unwrap();
        let w = 0.4;
        let f = make_test_function(grid, &centers, w).map_err(|e| e.to_string())?;
        let (s, t) = (1.5, 2.25);
        let fs = f.evolve(s).unwrap();
        let fst = f.evolve(s + t).unwrap();
        let composed = propagate(&grid, &fs, t).unwrap();
        let group = composed.iter().zip(&fst).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let unit = [f.values().unwrap(), fs.clone(), fst.clone()]
            .iter()
            .map(|g| (grid_norm(&grid, g) - 1.0).abs())
            .fold(0.0, f64::max);
        let inside = |xi: &[f64]| xi.iter().zip(&centers).all(|(x, c)| (x - c).abs() < w);
        let leak = fourier_leak(&grid, &fst, inside);
        worst = worst.max(group).max(unit).max(leak);
    }
    check(worst <= 1e-12, format!("largest defect {worst:.2e}"))
}

fn cook_decay(dir: &Path) -> Outcome {
    let cfg = config(
        r#"
model = "wavelet"
seed = 4
[wavelet]
d = 2
K = 2
[grid]
d = 2
L = 512.0
N = 1024
boundary = "periodic"
[evolve]
t_lo = 10.0
t_hi = 100.0
points = 16
[evolve.f]
centers = [1.0, 1.0]
width = 0.2
"#,
    );
    let out = dir.join("cook");
    execute(Command::Cook, &cfg, &out, RunOptions::default()).map_err(|e| e.to_string())?;
    let s = read_json(&out.join("slope.json"));
    let slope = s["slope"]["slope"].as_f64().ok_or("slope missing")?;
    let incs: Vec<f64> = s["increments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["increment"].as_f64().unwrap())
        .collect();
    // recompute the monotonicity from the increments themselves
    let shrink = incs.len() >= 2 && incs.windows(2).all(|w| w[1] < w[0]);
    check(
        slope <= -1.5 && shrink,
        format!("slope {slope:.3}, dyadic increments {incs:.3?}"),
    )
}

fn wavelet_family(dir: &Path) -> Outcome {
    let cfg = config(
        r#"
model = "wavelet"
seed = 5
[wavelet]
d = 2
[grid]
d = 2
L = 512.0
N = 1024
boundary = "periodic"
[evolve.f]
centers = [1.0, 1.0]
width = 0.6
[wavelet_check]
n1 = [-2, 2]
n2 = [-2, 2]
audit_times = [0.0, 3.0, 10.0]
[wavelet_check.envelope]
c = [1, 1]
n1 = -2
"#,
    );
    let out = dir.join("wavelet");
    execute(Command::WaveletCheck, &cfg, &out, RunOptions::default()).map_err(|e| e.to_string())?;
    let s = read_json(&out.join("summary.json"));
    let count = s["count"].as_u64().unwrap();
    let dev = s["max_deviation"].as_f64().unwrap();
    let rows = s["selection"]["rows"].as_u64().unwrap();
    let violations = s["selection"]["violations"].as_u64().unwrap();
    let fit = &s["envelope"]["fit"];
    let r2 = fit["r_squared"].as_f64().unwrap_or(f64::NAN);
    let exponent = fit["exponent"].as_f64().unwrap_or(f64::NAN);
    let ratio = fit["worst_ratio"].as_f64().unwrap_or(f64::NAN);
    let shape = s["envelope"]["within_shape"].as_bool().unwrap();
    check(
        count >= 50 && dev < 1e-8 && rows > 0 && violations == 0 && shape,
        format!(
            "{count} indices, Gram deviation {dev:.1e}, {violations} of {rows} audit rows off-window nonzero, envelope exponent {exponent:.2} R2 {r2:.3} bound ratio {ratio:.3}"
        ),
    )
}

fn solver_oracle() -> Outcome {
    let mut worst = 0.0_f64;
    let mut total = 0;
    let cases: [(usize, usize, Boundary, u64); 4] = [
        (1, 512, Boundary::Dirichlet, 1),
        (1, 1024, Boundary::Periodic, 2),
        (2, 40, Boundary::Periodic, 3),
        (3, 12, Boundary::Dirichlet, 4),
    ];
    for (d, n, boundary, seed) in cases {
        let grid = GridSpec::new(d, 6.0, n, boundary).unwrap();
        let h = DiscreteHamiltonian::from_values(grid, anderson_field(&grid, 30.0, seed), DEFAULT_UNKNOWN_BUDGET)
            .map_err(|e| e.to_string())?;
        let dense = h.banded().to_dense().symmetric_eigenvalues();
        let mut eig: Vec<f64> = dense.iter().copied().collect();
        eig.sort_by(|a, b| a.total_cmp(b));
        let scale = h.scale();
        // an interior window between two well separated eigenvalues
        let (i0, i1) = (eig.len() / 3, eig.len() / 3 + 40);
        let lo = 0.5 * (eig[i0 - 1] + eig[i0]);
        let hi = 0.5 * (eig[i1 - 1] + eig[i1]);
        let (pairs, _) = solve_window(&h, lo, hi, 1000, SolverOptions::default()).map_err(|e| e.to_string())?;
        let expect = &eig[i0..i1];
        if pairs.len() != expect.len() {
            return Err(format!("d={d} N={n}: {} eigenvalues, dense has {}", pairs.len(), expect.len()));
        }
        for (p, e) in pairs.iter().zip(expect) {
            worst = worst.max((p.eigenvalue - e).abs() / scale);
        }
        total += pairs.len();
    }
    check(worst <= 1e-8, format!("{total} eigenvalues, worst error {worst:.1e} x scale"))
}

fn reproducibility(dir: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_mourre");
    let configs = [
        (
            "islands",
            "model = \"island\"\nseed = 3\n[geometry]\nk_max = 3\n[density]\nsamples = 50000\n",
        ),
        ("spectrum", &*format!("{}window = [-1.0, 8.0]\n", greedy_model(1.0))),
        (
            "cook",
            "model = \"wavelet\"\nseed = 9\n[grid]\nd = 2\nL = 256.0\nN = 512\nboundary = \"periodic\"\n[evolve]\nt_lo = 2.0\nt_hi = 30.0\npoints = 10\n[evolve.f]\ncenters = [1.0, 1.0]\nwidth = 0.3\n",
        ),
    ];
    let mut notes = Vec::new();
    for (cmd, text) in configs {
        let cfg_path = dir.join(format!("{cmd}.toml"));
        std::fs::write(&cfg_path, text).unwrap();
        let out = dir.join(format!("repro-{cmd}"));
        let start = Instant::now();
        let first = Process::new(bin)
            .args([cmd, "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        let original = start.elapsed();
        if !first.status.success() {
            return Err(format!("{cmd}: {}", String::from_utf8_lossy(&first.stderr)));
        }
        let start = Instant::now();
        let again = Process::new(bin)
            .arg("rerun")
            .arg(out.join("manifest.json"))
            .args(["--threads", "3"])
            .output()
            .unwrap();
        let rerun = start.elapsed();
        if !again.status.success() {
            return Err(format!("{cmd} rerun: {}", String::from_utf8_lossy(&again.stdout)));
        }
        let manifest = read_json(&out.join("manifest.json"));
        for rec in manifest["outputs"].as_array().unwrap() {
            let file = rec["file"].as_str().unwrap();
            let a = std::fs::read(out.join(file)).unwrap();
            let b = std::fs::read(out.join("rerun").join(file)).unwrap();
            if a != b {
                return Err(format!("{cmd}: {file} differs"));
            }
        }
        if rerun > original * 2 + Duration::from_secs(1) {
            return Err(format!("{cmd}: rerun took {rerun:?}, original {original:?}"));
        }
        notes.push(format!("{cmd} {:.2}s/{:.2}s", original.as_secs_f64(), rerun.as_secs_f64()));
    }
    Ok(format!("byte-identical reruns: {}", notes.join(", ")))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let criteria: Vec<(&str, u64, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("example-1 geometry", 10, Box::new(example1_geometry)),
        ("commutator order", 30, Box::new(commutator_order)),
        ("threshold E0", 60, Box::new(threshold_e0)),
        ("virial localization", 300, Box::new(virial_localization)),
        ("mourre gap", 120, Box::new(mourre_window)),
        ("free evolution", 30, Box::new(free_evolution)),
        ("cook decay", 600, Box::new(|| cook_decay(d))),
        ("wavelet family", 300, Box::new(|| wavelet_family(d))),
        ("solver oracle", 60, Box::new(solver_oracle)),
        ("reproducibility", 120, Box::new(|| reproducibility(d))),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let label = format!("{:>2} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == (i + 1).to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(detail) if secs > *limit as f64 => Err(format!("{detail}; over the {limit} s budget")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {label} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
