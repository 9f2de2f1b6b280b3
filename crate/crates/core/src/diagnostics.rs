//! Perturbation extraction, exponential decay fits, smallness monitors and
//! conservation accounting for simulation snapshots.

use alloc::vec::Vec;

use libm::{log, pow, sqrt};

use crate::equilibrium::{moments_b, Moments};
use crate::fdintegrals::beta_max;
use crate::phasegrid::{compute_moments, h_functional, total_moments, GlobalEquilibrium, PhaseGrid, PhaseState};
use crate::{Error, Result};

/// Minimum number of samples inside a decay-fit window.
pub const MIN_FIT_SAMPLES: usize = 10;

/// The monitor raises its warning flag when `β(−ln 3) − max B` drops below
/// this fraction of `β(−ln 3)`.
pub const MARGIN_WARNING: f64 = 1e-3;

/// `f = (F − m)/√(m − m²)` on unmasked nodes, zero on masked ones.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationField {
    /// Laid out like [`PhaseState`].
    pub values: Vec<f64>,
    /// `‖f‖` in `L²(dx dp)` over the unmasked nodes.
    pub norm: f64,
    /// `‖∂ₓf‖` from forward differences on the periodic grid.
    pub dx_norm: f64,
    /// Masked velocity nodes per cell.
    pub masked: usize,
}

pub fn perturbation_field(s: &PhaseState, grid: &PhaseGrid, ge: &GlobalEquilibrium) -> PerturbationField {
    let n_v = grid.velocity.len();
    let n_x = s.cells();
    let mask = ge.masked();
    let mut values = Vec::with_capacity(s.values().len());
    for i in 0..n_x {
        for (j, &f) in s.cell(i).iter().enumerate() {
            values.push(if mask[j] {
                0.0
            } else {
                (f - ge.values()[j]) / ge.weight_sqrt()[j]
            });
        }
    }
    let dx = grid.spatial.spacing();
    let mut dx_sq = 0.0;
    if n_x > 1 {
        for i in 0..n_x {
            let next = (i + 1) % n_x;
            for j in 0..n_v {
                let d = (values[next * n_v + j] - values[i * n_v + j]) / dx;
                dx_sq += d * d;
            }
        }
    }
    PerturbationField {
        norm: grid.norm(&values),
        dx_norm: sqrt(dx_sq * grid.cell_volume()),
        values,
        masked: mask.iter().filter(|&&m| m).count(),
    }
}

/// `∫∫ f (1, p, |p|²) √(m − m²) dx dp`, which equals the moments of `F − m`
/// over the unmasked nodes. Ordered `[N, P₁, P₂, P₃, E]`.
pub fn f_integrals(s: &PhaseState, grid: &PhaseGrid, ge: &GlobalEquilibrium) -> [f64; 5] {
    let v = &grid.velocity;
    let mask = ge.masked();
    let mut acc = [0.0; 5];
    for i in 0..s.cells() {
        for (j, &f) in s.cell(i).iter().enumerate() {
            if mask[j] {
                continue;
            }
            let d = f - ge.values()[j];
            let p = v.node(j);
            acc[0] += d;
            acc[1] += d * p[0];
            acc[2] += d * p[1];
            acc[3] += d * p[2];
            acc[4] += d * v.speed2(j);
        }
    }
    let w = grid.cell_volume();
    acc.map(|x| x * w)
}

/// Least-squares fit `log ‖f(t)‖ ≈ intercept − rate·t` on `[t_lo, t_hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub samples: usize,
    /// The series hit exactly zero and was truncated there.
    pub reached_floor: bool,
}

/// Fits the samples with `t ≥ t_start`, stopping at the first zero norm.
pub fn decay_fit(series: &[(f64, f64)], t_start: f64) -> Result<DecayFit> {
    let mut window = Vec::new();
    let mut reached_floor = false;
    for &(t, norm) in series.iter().filter(|(t, _)| *t >= t_start) {
        if !t.is_finite() || !norm.is_finite() {
            return Err(Error::NonFinite {
                what: "decay series sample",
                value: if t.is_finite() { norm } else { t },
            });
        }
        if norm < 0.0 {
            return Err(Error::InvalidConfig("decay series norms must be non-negative"));
        }
        if norm == 0.0 {
            reached_floor = true;
            break;
        }
        window.push((t, log(norm)));
    }
    if window.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_SAMPLES,
            got: window.len(),
        });
    }
    let n = window.len() as f64;
    let t_mean = window.iter().map(|w| w.0).sum::<f64>() / n;
    let y_mean = window.iter().map(|w| w.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &window {
        stt += (t - t_mean) * (t - t_mean);
        sty += (t - t_mean) * (y - y_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    if !(stt > 0.0) {
        return Err(Error::InvalidConfig("decay series needs distinct sample times"));
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let ss_res: f64 = window
        .iter()
        .map(|&(t, y)| {
            let r = y - (intercept + slope * t);
            r * r
        })
        .sum();
    // a flat series is fit exactly by a zero slope
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit {
        rate: -slope,
        intercept,
        r_squared,
        t_lo: window[0].0,
        t_hi: window[window.len() - 1].0,
        samples: window.len(),
        reached_floor,
    })
}

/// Deviation of the local moments from the global equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorRecord {
    /// `max_x |N − N₀|`, `max_x |P|`, `max_x |E − E₀|`, `max_x |B − N₀/E₀^{3/5}|`.
    pub deviations: [f64; 4],
    /// `deviations / ‖f‖`; reported as zero when the deviation or `‖f‖` is zero.
    pub ratios: [f64; 4],
    /// `β(−ln 3) − max_x B`.
    pub margin: f64,
    pub b_max: f64,
    pub warning: bool,
    /// Change of the `f`-integrals since the baseline, for `(1, p, |p|²)`,
    /// relative to `N_total`, `√(N_total E_total)` and `E_total` of `m`.
    pub f_integral_drift: [f64; 3],
}

/// Per-cell `B`; `+∞` when the internal energy is not positive, `0` for
/// non-positive density.
fn cell_b(m: &Moments) -> f64 {
    match moments_b(m) {
        Ok(b) => b,
        Err(_) if m.density <= 0.0 => 0.0,
        Err(_) => f64::INFINITY,
    }
}

pub fn smallness_monitor(
    s: &PhaseState,
    grid: &PhaseGrid,
    ge: &GlobalEquilibrium,
    f_norm: f64,
    baseline: &[f64; 5],
) -> MonitorRecord {
    let reference = ge.grid_moments();
    let b0 = reference.density / pow(reference.energy, 0.6);
    let mut dev = [0.0_f64; 4];
    let mut b_max = f64::NEG_INFINITY;
    for m in compute_moments(s, &grid.velocity) {
        let b = cell_b(&m);
        b_max = b_max.max(b);
        let p = sqrt(m.momentum.iter().map(|v| v * v).sum::<f64>());
        let cell = [
            (m.density - reference.density).abs(),
            p,
            (m.energy - reference.energy).abs(),
            (b - b0).abs(),
        ];
        for (d, c) in dev.iter_mut().zip(cell) {
            *d = d.max(c);
        }
    }
    let ratios = dev.map(|d| if d == 0.0 || f_norm == 0.0 { 0.0 } else { d / f_norm });
    let bm = beta_max();
    let margin = bm - b_max;

    let now = f_integrals(s, grid, ge);
    let length = grid.spatial.length();
    let n_tot = reference.density * length;
    let e_tot = reference.energy * length;
    let dp = sqrt(
        (1..4)
            .map(|k| (now[k] - baseline[k]) * (now[k] - baseline[k]))
            .sum::<f64>(),
    );
    MonitorRecord {
        deviations: dev,
        ratios,
        margin,
        b_max,
        warning: margin < MARGIN_WARNING * bm,
        f_integral_drift: [
            (now[0] - baseline[0]).abs() / n_tot,
            dp / sqrt(n_tot * e_tot),
            (now[4] - baseline[4]).abs() / e_tot,
        ],
    }
}

/// One row of the simulation time series.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticRecord {
    pub step: usize,
    pub time: f64,
    pub totals: Moments,
    pub h: f64,
    pub f_l2: f64,
    pub f_dx_l2: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub monitor: MonitorRecord,
}

impl DiagnosticRecord {
    pub const COLUMNS: [&'static str; 24] = [
        "time",
        "N_total",
        "P1_total",
        "P2_total",
        "P3_total",
        "E_total",
        "H",
        "f_l2",
        "F_min",
        "F_max",
        "B_max_margin",
        "f_dx_l2",
        "dev_N",
        "dev_P",
        "dev_E",
        "dev_B",
        "ratio_N",
        "ratio_P",
        "ratio_E",
        "ratio_B",
        "margin_warning",
        "fint_drift_N",
        "fint_drift_P",
        "fint_drift_E",
    ];

    pub fn values(&self) -> [f64; 24] {
        let m = &self.monitor;
        [
            self.time,
            self.totals.density,
            self.totals.momentum[0],
            self.totals.momentum[1],
            self.totals.momentum[2],
            self.totals.energy,
            self.h,
            self.f_l2,
            self.f_min,
            self.f_max,
            m.margin,
            self.f_dx_l2,
            m.deviations[0],
            m.deviations[1],
            m.deviations[2],
            m.deviations[3],
            m.ratios[0],
            m.ratios[1],
            m.ratios[2],
            m.ratios[3],
            if m.warning { 1.0 } else { 0.0 },
            m.f_integral_drift[0],
            m.f_integral_drift[1],
            m.f_integral_drift[2],
        ]
    }
}

/// Collects every diagnostic of one snapshot.
pub fn record(
    step: usize,
    s: &PhaseState,
    grid: &PhaseGrid,
    ge: &GlobalEquilibrium,
    baseline: &[f64; 5],
) -> Result<DiagnosticRecord> {
    let field = perturbation_field(s, grid, ge);
    let (f_min, f_max) = s.min_max();
    Ok(DiagnosticRecord {
        step,
        time: s.time,
        totals: total_moments(s, grid),
        h: h_functional(s, grid)?,
        f_l2: field.norm,
        f_dx_l2: field.dx_norm,
        f_min,
        f_max,
        monitor: smallness_monitor(s, grid, ge, field.norm, baseline),
    })
}

/// Largest relative drift of the totals `(N, P, E)` against `reference`;
/// momentum is measured against `√(N E)` since it may vanish.
pub fn conservation_drift(reference: &Moments, now: &Moments) -> f64 {
    let n = reference.density.abs();
    let e = reference.energy.abs();
    let pscale = sqrt(n * e);
    let mut worst = (now.density - reference.density).abs() / n;
    worst = worst.max((now.energy - reference.energy).abs() / e);
    for k in 0..3 {
        worst = worst.max((now.momentum[k] - reference.momentum[k]).abs() / pscale);
    }
    worst
}

/// Largest entry of a monitor's `f`-integral drift.
pub fn f_integral_drift(record: &DiagnosticRecord) -> f64 {
    record.monitor.f_integral_drift.iter().fold(0.0, |a, &b| a.max(b))
}
