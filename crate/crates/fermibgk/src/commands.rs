//! Subcommand implementations. Each writes its artifacts under an output
//! directory and returns a printable summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fermibgk_core::diagnostics::{self, conservation_drift, decay_fit, DecayFit, DiagnosticRecord};
use fermibgk_core::equilibrium::{
    discrete_invert_equilibrium, equilibrium_moments, invert_equilibrium, moments_b, relaxation_frequency,
};
use fermibgk_core::fdintegrals::{beta, beta_max, beta_prime, BRANCH_POINT};
use fermibgk_core::phasegrid::init_perturbed_state;
use fermibgk_core::solver::{picard_iteration, run_simulation};
use fermibgk_core::{FermiParams, Moments, PhaseState, VelocityGrid};

use crate::config::{ScenarioId, Settings};
use crate::error::{AppError, AppResult};
use crate::formats::{write_snapshot, write_text, KeyValues, SeriesWriter};
use crate::lincheck;

/// `H` may rise by at most this much (relative to `|H(0)|`) between records.
pub const H_SLACK: f64 = 1e-14;
/// Continuous and discrete round-trip tolerances of the `invert` batch.
pub const CONTINUOUS_ROUNDTRIP_TOL: f64 = 1e-8;
pub const DISCRETE_ROUNDTRIP_TOL: f64 = 1e-12;
/// Agreement required between the last Picard iterate and the direct solve.
pub const PICARD_AGREEMENT_TOL: f64 = 1e-6;

fn ensure_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir.display(), e))
}

fn header(settings: &Settings) -> String {
    format!(
        "fermibgk {} scenario={} seed={}",
        env!("CARGO_PKG_VERSION"),
        settings.scenario,
        settings.seed
    )
}

fn fmt_f(v: f64) -> String {
    v.to_string()
}

// ---------------------------------------------------------------- betatable

pub struct BetaTable {
    pub rows: Vec<[f64; 3]>,
    /// `None` when the range leaves the monotone branch and the check was skipped.
    pub monotone: Option<bool>,
    pub path: PathBuf,
}

pub fn betatable(settings: &Settings, out: &Path) -> AppResult<(BetaTable, String)> {
    let bt = &settings.betatable;
    let n = bt.n;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let c = if n == 1 {
            bt.c_min
        } else {
            bt.c_min + (bt.c_max - bt.c_min) * i as f64 / (n - 1) as f64
        };
        rows.push([c, beta(c)?, beta_prime(c)?]);
    }
    ensure_dir(out)?;
    let path = out.join("betatable.csv");
    let mut text = format!("# {}\nc,beta,beta_prime\n", header(settings));
    for r in &rows {
        let _ = writeln!(text, "{},{},{}", fmt_f(r[0]), fmt_f(r[1]), fmt_f(r[2]));
    }
    write_text(&path, &text)?;

    let mut summary = format!("wrote {} rows to {}\n", rows.len(), path.display());
    let monotone = if bt.c_min >= BRANCH_POINT {
        let ok = rows.windows(2).all(|w| w[1][1] < w[0][1]) && rows.iter().all(|r| r[2] < 0.0);
        let _ = writeln!(
            summary,
            "beta strictly decreasing with beta' < 0 on [{}, {}]: {}",
            bt.c_min,
            bt.c_max,
            if ok { "yes" } else { "NO" }
        );
        Some(ok)
    } else {
        let _ = writeln!(
            summary,
            "notice: c_min = {} is below -ln 3 = {BRANCH_POINT}; the range leaves the monotone branch, monotonicity assertion skipped",
            bt.c_min
        );
        None
    };
    let table = BetaTable { rows, monotone, path };
    if table.monotone == Some(false) {
        return Err(AppError::CheckFailed(format!("beta is not strictly decreasing\n{summary}")));
    }
    Ok((table, summary))
}

// ------------------------------------------------------------------- invert

/// Inverts one moment triple and reports both modes.
pub fn invert_single(settings: &Settings, m: &Moments) -> AppResult<String> {
    let b = moments_b(m)?;
    let cont = invert_equilibrium(m)?;
    let mut text = String::new();
    let _ = writeln!(text, "B = {b}  (beta(-ln 3) = {})", beta_max());
    let _ = writeln!(text, "continuous: a = {}  b = {:?}  c = {}", cont.a, cont.b, cont.c);
    let bmax = cont.b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let p_max = settings.grid.p_max.unwrap_or(bmax + 6.0 / cont.a.sqrt());
    let grid = VelocityGrid::new(p_max, settings.grid.n_p)?;
    let disc = discrete_invert_equilibrium(m, &grid)?;
    let gap = m.relative_gap(&grid.moments(&disc.sample(&grid)));
    let _ = writeln!(
        text,
        "discrete (n_p = {}, p_max = {p_max}): a = {}  b = {:?}  c = {}  moment gap {gap:.3e}",
        settings.grid.n_p, disc.a, disc.b, disc.c
    );
    Ok(text)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrip {
    pub worst_continuous: f64,
    pub worst_parameters: f64,
    pub worst_discrete: f64,
    pub samples: usize,
}

/// Random admissible equilibria: `c ∈ [−ln 3 + 10⁻³, 20]`, `a` log-uniform in
/// `[1/4, 4]`, `b ∈ [−½, ½]³`.
pub fn random_equilibrium(rng: &mut impl Rng) -> FermiParams {
    let c = rng.gen_range(BRANCH_POINT + 1e-3..=20.0);
    let a = 4f64.powf(rng.gen_range(-1.0..=1.0));
    let b = [0; 3].map(|_| rng.gen_range(-0.5..=0.5));
    FermiParams::new(a, b, c)
}

pub fn invert_roundtrip(settings: &Settings, out: &Path) -> AppResult<(RoundTrip, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut text = format!(
        "# {}\nsample,N,P1,P2,P3,E,B,continuous_moment_gap,continuous_param_error,discrete_moment_gap\n",
        header(settings)
    );
    let mut rt = RoundTrip {
        worst_continuous: 0.0,
        worst_parameters: 0.0,
        worst_discrete: 0.0,
        samples: settings.invert.samples,
    };
    for i in 0..settings.invert.samples {
        let fp = random_equilibrium(&mut rng);
        let m = equilibrium_moments(&fp)?;
        let cont = invert_equilibrium(&m)?;
        let cont_gap = m.relative_gap(&equilibrium_moments(&cont)?);
        let param = [
            (cont.a - fp.a).abs() / fp.a,
            (cont.c - fp.c).abs() / fp.c.abs().max(1.0),
            (0..3).map(|k| (cont.b[k] - fp.b[k]).abs()).fold(0.0, f64::max),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let bmax = fp.b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let grid = VelocityGrid::new(bmax + 6.0 / fp.a.sqrt(), settings.grid.n_p)?;
        let disc = discrete_invert_equilibrium(&m, &grid)?;
        let disc_gap = m.relative_gap(&grid.moments(&disc.sample(&grid)));
        rt.worst_continuous = rt.worst_continuous.max(cont_gap);
        rt.worst_parameters = rt.worst_parameters.max(param);
        rt.worst_discrete = rt.worst_discrete.max(disc_gap);
        let _ = writeln!(
            text,
            "{i},{},{},{},{},{},{},{cont_gap:e},{param:e},{disc_gap:e}",
            m.density,
            m.momentum[0],
            m.momentum[1],
            m.momentum[2],
            m.energy,
            moments_b(&m)?
        );
    }
    ensure_dir(out)?;
    let path = out.join("invert_roundtrip.csv");
    write_text(&path, &text)?;
    let summary = format!(
        "{} random equilibria (seed {}), rows in {}\n\
         continuous: worst moment gap {:.3e} (tol {CONTINUOUS_ROUNDTRIP_TOL:e}), worst parameter error {:.3e}\n\
         discrete:   worst moment gap {:.3e} (tol {DISCRETE_ROUNDTRIP_TOL:e})\n",
        rt.samples,
        settings.seed,
        path.display(),
        rt.worst_continuous,
        rt.worst_parameters,
        rt.worst_discrete
    );
    if rt.worst_continuous > CONTINUOUS_ROUNDTRIP_TOL || rt.worst_discrete > DISCRETE_ROUNDTRIP_TOL {
        return Err(AppError::CheckFailed(summary));
    }
    Ok((rt, summary))
}

// ----------------------------------------------------------------- simulate

#[derive(Clone, Debug)]
pub struct SimulationReport {
    pub records: Vec<DiagnosticRecord>,
    pub final_state: PhaseState,
    pub bounds: (f64, f64),
    pub steps: usize,
    pub cfl: f64,
    /// Largest relative drift of the total `(N, P, E)` over all records.
    pub conservation_drift: f64,
    /// Largest relative drift of the `f`-integrals over all records.
    pub f_integral_drift: f64,
    /// Largest rise of `H` between consecutive records, relative to `|H(0)|`.
    pub h_max_rise: f64,
    pub fit: Result<DecayFit, String>,
    pub tau: f64,
    pub summary: KeyValues,
}

/// Runs the time integration of `settings` and writes `timeseries.csv`,
/// `summary.txt`, `decay_fit.kv`, `final.bin` (or `checkpoint.bin` on an
/// abort) and, if enabled, `snapshots/step_*.bin`.
pub fn simulate(settings: &Settings, out: &Path) -> AppResult<(SimulationReport, String)> {
    let grid = settings.phase_grid()?;
    let ge = settings.global_equilibrium(&grid.velocity)?;
    let (s0, f0) = init_perturbed_state(&ge, &grid, &settings.perturbation())?;
    let cfg = settings.run_config()?;
    let cfl = cfg.cfl(&grid);
    log::info!(
        "{}: n_x = {}, n_p = {}, dt = {}, steps = {}, CFL max|p1| dt/dx = {cfl:.4}",
        settings.scenario,
        grid.spatial.cells(),
        grid.velocity.points_per_axis(),
        cfg.dt,
        cfg.steps()
    );
    let tau = 1.0 / relaxation_frequency(&ge.grid_moments(), &ge.params(), &cfg.tau)?;

    ensure_dir(out)?;
    let snap_dir = out.join("snapshots");
    if settings.output.snapshots {
        ensure_dir(&snap_dir)?;
    }
    let csv_path = out.join("timeseries.csv");
    let mut writer = SeriesWriter::create(&csv_path, &header(settings))?;
    let mut io_error: Option<AppError> = None;
    let mut observer = |r: &DiagnosticRecord, s: &PhaseState| {
        if io_error.is_some() {
            return;
        }
        if let Err(e) = writer.push(r) {
            io_error = Some(AppError::io(csv_path.display(), e));
            return;
        }
        if settings.output.snapshots {
            let path = snap_dir.join(format!("step_{:06}.bin", r.step));
            if let Err(e) = write_snapshot(&path, &grid, s) {
                io_error = Some(e);
            }
        }
        log::debug!("t = {:.4}  |f| = {:.6e}  H = {:.12e}", r.time, r.f_l2, r.h);
    };
    let result = run_simulation(&cfg, &grid, &ge, s0, &mut observer);
    writer.finish().map_err(|e| AppError::io(csv_path.display(), e))?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let output = match result {
        Ok(o) => o,
        Err(abort) => {
            let path = out.join("checkpoint.bin");
            write_snapshot(&path, &grid, &abort.checkpoint)?;
            let msg = format!("{abort}; checkpoint written to {}", path.display());
            return Err(match AppError::from(abort.error) {
                AppError::Admissibility(_) => AppError::Admissibility(msg),
                AppError::Config(_) => AppError::Config(msg),
                _ => AppError::Numerical(msg),
            });
        }
    };
    write_snapshot(&out.join("final.bin"), &grid, &output.final_state)?;

    let records = output.records;
    let first = &records[0];
    let conservation = records
        .iter()
        .map(|r| conservation_drift(&first.totals, &r.totals))
        .fold(0.0, f64::max);
    let f_drift = records.iter().map(diagnostics::f_integral_drift).fold(0.0, f64::max);
    let h0 = first.h.abs().max(f64::MIN_POSITIVE);
    let h_rise = records
        .windows(2)
        .map(|w| (w[1].h - w[0].h) / h0)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let t_start = settings.fit.t_start.unwrap_or(2.0 * tau);
    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.time, r.f_l2)).collect();
    let fit = decay_fit(&series, t_start).map_err(|e| e.to_string());

    let mut kv = KeyValues::default();
    kv.push("scenario", settings.scenario)
        .push("seed", settings.seed)
        .push("steps", output.steps)
        .push("dt", cfg.dt)
        .push("t_end", cfg.t_end)
        .push("tau", tau)
        .push("cfl", cfl)
        .push("initial_f_l2", f0)
        .push("final_f_l2", records.last().map_or(0.0, |r| r.f_l2))
        .push("conservation_drift", conservation)
        .push("f_integral_drift", f_drift)
        .push("F_min", output.bounds.0)
        .push("F_max", output.bounds.1)
        .push("H_max_rise", h_rise)
        .push("H_non_increasing", h_rise <= H_SLACK)
        .push("fit_t_start", t_start);
    match &fit {
        Ok(f) => {
            kv.push("fit_rate", f.rate)
                .push("fit_intercept", f.intercept)
                .push("fit_r_squared", f.r_squared)
                .push("fit_t_lo", f.t_lo)
                .push("fit_t_hi", f.t_hi)
                .push("fit_samples", f.samples)
                .push("fit_reached_floor", f.reached_floor);
        }
        Err(e) => {
            kv.push("fit_error", e);
        }
    }
    write_text(&out.join("decay_fit.kv"), &format!("# {}\n{}", header(settings), kv.render()))?;

    let mut text = String::new();
    let _ = writeln!(text, "scenario        {} (seed {})", settings.scenario, settings.seed);
    let _ = writeln!(
        text,
        "grid            n_x = {}, n_p = {}, p_max = {:.4}, length = {}",
        grid.spatial.cells(),
        grid.velocity.points_per_axis(),
        grid.velocity.p_max(),
        grid.spatial.length()
    );
    let _ = writeln!(
        text,
        "run             {} steps of dt = {}, CFL = {cfl:.4}, tau = {tau:.6}",
        output.steps, cfg.dt
    );
    let _ = writeln!(text, "conservation    max drift (N, P, E) = {conservation:.3e}");
    let _ = writeln!(text, "f-integrals     max drift = {f_drift:.3e}");
    let _ = writeln!(text, "bounds          F in [{:.3e}, {:.15}]", output.bounds.0, output.bounds.1);
    let _ = writeln!(
        text,
        "entropy         max relative rise of H = {h_rise:.3e} (non-increasing: {})",
        h_rise <= H_SLACK
    );
    match &fit {
        Ok(f) => {
            let _ = writeln!(
                text,
                "decay fit       rate = {:.6}, R^2 = {:.6}, window [{:.3}, {:.3}], {} samples{}",
                f.rate,
                f.r_squared,
                f.t_lo,
                f.t_hi,
                f.samples,
                if f.reached_floor { ", reached floor" } else { "" }
            );
        }
        Err(e) => {
            let _ = writeln!(text, "decay fit       unavailable: {e}");
        }
    }
    write_text(&out.join("summary.txt"), &text)?;

    Ok((
        SimulationReport {
            records,
            final_state: output.final_state,
            bounds: output.bounds,
            steps: output.steps,
            cfl,
            conservation_drift: conservation,
            f_integral_drift: f_drift,
            h_max_rise: h_rise,
            fit,
            tau,
            summary: kv,
        },
        text,
    ))
}

// ------------------------------------------------------------------- picard

#[derive(Clone, Debug)]
pub struct PicardReport {
    pub differences: Vec<f64>,
    /// Number of leading strictly decreasing differences (counting the first).
    pub monotone_prefix: usize,
    /// `max |F_iterate − F_direct|` at `t_end`.
    pub agreement: f64,
    /// `(min F, max F)` over every step of the direct solve.
    pub bounds: (f64, f64),
}

pub fn picard(settings: &Settings, out: &Path) -> AppResult<(PicardReport, String)> {
    let grid = settings.phase_grid()?;
    let ge = settings.global_equilibrium(&grid.velocity)?;
    let (s0, _) = init_perturbed_state(&ge, &grid, &settings.perturbation())?;
    let cfg = settings.run_config()?;
    let iterations = picard_iteration(&cfg, &grid, &s0, settings.picard.iterations)
        .map_err(|a| AppError::from(a.error))?;
    let direct = run_simulation(&cfg, &grid, &ge, s0, &mut |_, _| {}).map_err(|a| AppError::from(a.error))?;
    let agreement = iterations
        .final_iterate
        .values()
        .iter()
        .zip(direct.final_state.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let d = &iterations.differences;
    let monotone_prefix = if d.is_empty() {
        0
    } else {
        1 + d.windows(2).take_while(|w| w[1] < w[0]).count()
    };

    ensure_dir(out)?;
    let mut csv = format!("# {}\niteration,sup_difference\n", header(settings));
    for (i, v) in d.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", i + 1, fmt_f(*v));
    }
    write_text(&out.join("picard.csv"), &csv)?;

    let mut text = String::new();
    let _ = writeln!(text, "picard          {} iterations, T = {}, dt = {}", d.len(), cfg.t_end, cfg.dt);
    for (i, v) in d.iter().enumerate() {
        let _ = writeln!(text, "  n = {:<3} sup_t ||F^(n+1) - F^n|| = {v:.6e}", i);
    }
    let _ = writeln!(
        text,
        "monotone        strictly decreasing over {monotone_prefix} of {} differences",
        d.len()
    );
    let _ = writeln!(
        text,
        "agreement       max |F_picard - F_direct| at T = {agreement:.3e} (tol {PICARD_AGREEMENT_TOL:e})"
    );
    write_text(&out.join("summary.txt"), &text)?;
    let report = PicardReport {
        differences: d.clone(),
        monotone_prefix,
        agreement,
        bounds: direct.bounds,
    };
    if monotone_prefix < d.len().min(4) || agreement > PICARD_AGREEMENT_TOL {
        return Err(AppError::CheckFailed(text));
    }
    Ok((report, text))
}

// ----------------------------------------------------------------- lincheck

pub fn lincheck(settings: &Settings, out: &Path) -> AppResult<(lincheck::Report, String)> {
    let report = lincheck::run(settings)?;
    let text = format!(
        "lincheck        a0 = {}, c0 = {}, n_p = {}, seed = {}\n{report}",
        settings.equilibrium.a0, settings.equilibrium.c0, settings.grid.n_p, settings.seed
    );
    ensure_dir(out)?;
    write_text(&out.join("lincheck.txt"), &text)?;
    if !report.passed() {
        return Err(AppError::CheckFailed(text));
    }
    Ok((report, text))
}

/// The scenario a subcommand runs when the config names none.
pub fn default_scenario(command: &str) -> ScenarioId {
    match command {
        "betatable" => ScenarioId::Betatable,
        "invert" => ScenarioId::InvertRoundtrip,
        "lincheck" => ScenarioId::Lincheck,
        "picard" => ScenarioId::Picard,
        _ => ScenarioId::Decay1x3v,
    }
}
