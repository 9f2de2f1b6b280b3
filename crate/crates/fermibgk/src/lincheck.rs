//! Numerical checks of the linearization around a global equilibrium.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fermibgk_core::equilibrium::{equilibrium_moments, fermi_dirac_eval, invert_equilibrium};
use fermibgk_core::fdintegrals::BRANCH_POINT;
use fermibgk_core::linearized::{
    coefficient_derivatives, equilibrium_gateaux, linearization_residual, positivity_gap, Direction, OrthoBasis,
};
use fermibgk_core::{FermiParams, GlobalEquilibrium, Moments, VelocityGrid};

use crate::config::Settings;
use crate::error::AppResult;

pub const ORTHONORMALITY_TOL: f64 = 1e-12;
pub const COERCIVITY_TOL: f64 = 1e-12;
pub const DERIVATIVE_TOL: f64 = 1e-5;
/// Largest allowed spread of `r(ε)/ε²` across the ε ladder.
pub const ORDER_SPREAD: f64 = 2.0;
/// Below this distance from `−ln 3` the report warns about conditioning.
pub const NEAR_BRANCH: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<22} {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { name, passed, detail });
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Uniform `[-1, 1)` node values scaled to unit grid norm.
pub fn random_unit(grid: &VelocityGrid, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = grid.norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// `max |⟨Lf, f⟩ + ‖(I − P)f‖²| / ‖(I − P)f‖²` and `max ⟨Lf, f⟩` over `samples`.
pub fn coercivity(basis: &OrthoBasis, grid: &VelocityGrid, samples: usize, rng: &mut impl Rng) -> (f64, f64) {
    let mut worst = 0.0_f64;
    let mut max_form = f64::NEG_INFINITY;
    for _ in 0..samples {
        let f = random_unit(grid, rng);
        let lf = basis.apply_l(&f);
        let form = grid.dot(&lf, &f);
        let pf = basis.project(&f);
        let micro: Vec<f64> = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
        let m2 = grid.dot(&micro, &micro);
        worst = worst.max((form + m2).abs() / m2);
        max_form = max_form.max(form);
    }
    (worst, max_form)
}

/// Unit vector with an `O(1)` component along each basis vector plus a random
/// remainder. Pure noise has a projection of order `n^{-1/2}`, which leaves the
/// quadratic remainder below roundoff at small ε.
pub fn random_mixed(basis: &OrthoBasis, grid: &VelocityGrid, rng: &mut impl Rng) -> Vec<f64> {
    let mut v = random_unit(grid, rng);
    for e in basis.vectors() {
        let c: f64 = rng.gen_range(-1.0..1.0);
        v.iter_mut().zip(e).for_each(|(x, y)| *x += c * y);
    }
    let n = grid.norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Spread `max/min` of `r(ε)/ε²` for each of `samples` random `g`; returns the worst.
pub fn residual_order(ge: &GlobalEquilibrium, eps: &[f64], samples: usize, rng: &mut impl Rng) -> AppResult<f64> {
    let mut worst = 1.0_f64;
    for _ in 0..samples {
        let g = random_mixed(ge.basis(), ge.grid(), rng);
        let mut ratios = Vec::with_capacity(eps.len());
        for &e in eps {
            ratios.push(linearization_residual(ge, &g, e)? / (e * e));
        }
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.max(hi / lo);
    }
    Ok(worst)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Closed-form `∂(c, a)/∂(N, E)` against central differences of the
/// continuous inversion; worst relative error.
pub fn derivative_errors(ge: &GlobalEquilibrium) -> AppResult<f64> {
    let d = coefficient_derivatives(ge)?;
    let (n0, e0) = (ge.density(), ge.energy());
    let hn = 1e-6 * n0;
    let he = 1e-6 * e0;
    let inv = |n: f64, e: f64| invert_equilibrium(&Moments::new(n, [0.0; 3], e));
    let (np, nm) = (inv(n0 + hn, e0)?, inv(n0 - hn, e0)?);
    let (ep, em) = (inv(n0, e0 + he)?, inv(n0, e0 - he)?);
    let fd = [
        (np.c - nm.c) / (2.0 * hn),
        (ep.c - em.c) / (2.0 * he),
        (np.a - nm.a) / (2.0 * hn),
        (ep.a - em.a) / (2.0 * he),
    ];
    let closed = [d.dc_dn, d.dc_de, d.da_dn, d.da_de];
    Ok(fd.iter().zip(closed).map(|(f, c)| rel(c, *f)).fold(0.0, f64::max))
}

/// Closed-form `∂𝓕/∂(N, P₁, E)` against central differences of
/// `fermi_dirac_eval ∘ invert_equilibrium`; worst sup-norm error relative to
/// the field's sup-norm.
pub fn gateaux_errors(ge: &GlobalEquilibrium) -> AppResult<f64> {
    let grid = ge.grid();
    let (n0, e0) = (ge.density(), ge.energy());
    let mut worst = 0.0_f64;
    for (dir, h) in [
        (Direction::Density, 1e-6 * n0),
        (Direction::Momentum(0), 1e-6 * n0),
        (Direction::Energy, 1e-6 * e0),
    ] {
        let shifted = |s: f64| {
            let m = match dir {
                Direction::Density => Moments::new(n0 + s, [0.0; 3], e0),
                Direction::Momentum(i) => {
                    let mut p = [0.0; 3];
                    p[i] = s;
                    Moments::new(n0, p, e0)
                }
                Direction::Energy => Moments::new(n0, [0.0; 3], e0 + s),
            };
            invert_equilibrium(&m)
        };
        let (plus, minus) = (shifted(h)?, shifted(-h)?);
        let field = equilibrium_gateaux(ge, dir)?;
        let scale = field.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let err = (0..grid.len())
            .map(|j| {
                let p = grid.node(j);
                let fd = (fermi_dirac_eval(&plus, p) - fermi_dirac_eval(&minus, p)) / (2.0 * h);
                (fd - field[j]).abs()
            })
            .fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    Ok(worst)
}

/// Smallest `E₀k − 9N₀²/(10a₀)` over random `(a₀, c₀)` with
/// `a₀ ∈ [0.1, 10]` (log-uniform) and `c₀ ∈ (−ln 3, 20]`.
pub fn sampled_positivity(samples: usize, rng: &mut impl Rng) -> AppResult<(f64, usize)> {
    let mut min_scaled = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..samples {
        let a0 = 10f64.powf(rng.gen_range(-1.0..=1.0));
        let c0 = BRANCH_POINT + rng.gen_range(1e-9..=20.0 - BRANCH_POINT);
        let gap = positivity_gap(a0, c0)?;
        let n0 = equilibrium_moments(&FermiParams::new(a0, [0.0; 3], c0))?.density;
        // scale-free: E₀k / (9N₀²/(10a₀)) − 1
        let scaled = gap / (0.9 * n0 * n0 / a0);
        if !(gap > 0.0) {
            failures += 1;
        }
        min_scaled = min_scaled.min(scaled);
    }
    Ok((min_scaled, failures))
}

/// Runs every check for the global equilibrium of `settings`.
pub fn run(settings: &Settings) -> AppResult<Report> {
    let grid = settings.velocity_grid()?;
    let ge = settings.global_equilibrium(&grid)?;
    let lc = &settings.lincheck;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut report = Report::default();

    let distance = ge.c0() - BRANCH_POINT;
    if distance < NEAR_BRANCH {
        report.warnings.push(format!(
            "c0 is {distance:.3e} above -ln 3; B = {:.12} is close to beta(-ln 3) and the inversion is ill-conditioned there",
            ge.grid_b()
        ));
    }

    let basis = match lc.corrupt_index {
        Some(i) => {
            report.warnings.push(format!(
                "basis vector {i} scaled by {} (fault injection)",
                lc.corrupt_factor
            ));
            ge.basis().corrupted(i, lc.corrupt_factor)
        }
        None => ge.basis().clone(),
    };

    let ortho = basis.orthonormality_error();
    report.push(
        "orthonormality",
        ortho <= ORTHONORMALITY_TOL,
        format!("max|G - I| = {ortho:.3e} (tol {ORTHONORMALITY_TOL:e})"),
    );

    let null = (0..5)
        .map(|i| grid.norm(&basis.apply_l(basis.vector(i))))
        .fold(0.0, f64::max);
    report.push(
        "null-space",
        null <= ORTHONORMALITY_TOL,
        format!("max ||L e_i|| = {null:.3e} (tol {ORTHONORMALITY_TOL:e})"),
    );

    let (coer, max_form) = coercivity(&basis, &grid, lc.samples, &mut rng);
    report.push(
        "coercivity",
        coer <= COERCIVITY_TOL && max_form <= 0.0,
        format!(
            "max |<Lf,f> + ||(I-P)f||^2| / ||(I-P)f||^2 = {coer:.3e} (tol {COERCIVITY_TOL:e}), max <Lf,f> = {max_form:.3e}, {} samples",
            lc.samples
        ),
    );

    let gap = ge.positivity_gap();
    let (min_scaled, failures) = sampled_positivity(lc.positivity_samples, &mut rng)?;
    report.push(
        "positivity",
        gap > 0.0 && failures == 0,
        format!(
            "E0 k - 9 N0^2/(10 a0) = {gap:.6e}; {} random (a0, c0): {failures} non-positive, min relative gap {min_scaled:.3e}",
            lc.positivity_samples
        ),
    );

    let d = coefficient_derivatives(&ge)?;
    let zero = d.dc_dp == [0.0; 3] && d.da_dp == [0.0; 3];
    let derr = derivative_errors(&ge)?;
    report.push(
        "coefficient-derivs",
        zero && derr <= DERIVATIVE_TOL,
        format!("max rel error vs finite differences = {derr:.3e} (tol {DERIVATIVE_TOL:e}); momentum derivatives exactly zero: {zero}"),
    );

    let gerr = gateaux_errors(&ge)?;
    report.push(
        "equilibrium-gateaux",
        gerr <= DERIVATIVE_TOL,
        format!("max sup-norm error / sup-norm = {gerr:.3e} (tol {DERIVATIVE_TOL:e})"),
    );

    let spread = residual_order(&ge, &lc.eps, lc.residual_samples, &mut rng)?;
    report.push(
        "residual-order",
        spread <= ORDER_SPREAD,
        format!(
            "worst max/min of r(eps)/eps^2 over eps = {:?}: {spread:.4} (limit {ORDER_SPREAD}), {} samples",
            lc.eps, lc.residual_samples
        ),
    );
    Ok(report)
}
