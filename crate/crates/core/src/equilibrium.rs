//! Moments, Fermi-Dirac parameters and the maps between them.

use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{exp, log, pow};

use crate::fdintegrals::{self, beta_inverse, fd_sums};
use crate::linalg;
use crate::phasegrid::VelocityGrid;
use crate::{Error, Result};

/// Local macroscopic fields `(N, P, E)`: density, momentum, energy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub density: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
}

impl Moments {
    pub const ZERO: Moments = Moments {
        density: 0.0,
        momentum: [0.0; 3],
        energy: 0.0,
    };

    pub fn new(density: f64, momentum: [f64; 3], energy: f64) -> Self {
        Self {
            density,
            momentum,
            energy,
        }
    }

    /// `E − |P|²/N`.
    pub fn internal_energy(&self) -> f64 {
        self.energy - norm2(self.momentum) / self.density
    }

    pub fn as_array(&self) -> [f64; 5] {
        let [p1, p2, p3] = self.momentum;
        [self.density, p1, p2, p3, self.energy]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self::new(v[0], [v[1], v[2], v[3]], v[4])
    }

    /// Per-component scales used for relative comparisons: `N`, `√(NE)` (×3), `E`.
    pub fn scales(&self) -> [f64; 5] {
        let ps = libm::sqrt((self.density * self.energy).abs());
        [self.density.abs(), ps, ps, ps, self.energy.abs()]
    }

    /// Largest component-wise deviation from `other`, relative to `self.scales()`.
    pub fn relative_gap(&self, other: &Moments) -> f64 {
        let scales = self.scales();
        self.as_array()
            .iter()
            .zip(other.as_array())
            .zip(scales)
            .map(|((a, b), s)| (a - b).abs() / s)
            .fold(0.0, f64::max)
    }
}

impl core::ops::Add for Moments {
    type Output = Moments;
    fn add(self, rhs: Moments) -> Moments {
        let a = self.as_array();
        let b = rhs.as_array();
        Moments::from_array(core::array::from_fn(|i| a[i] + b[i]))
    }
}

#[inline]
fn norm2(v: [f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// Equilibrium coefficients of `𝓕(p) = 1/(exp(a|p − b|² + c) + 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FermiParams {
    pub a: f64,
    pub b: [f64; 3],
    pub c: f64,
}

impl FermiParams {
    pub fn new(a: f64, b: [f64; 3], c: f64) -> Self {
        Self { a, b, c }
    }

    #[inline]
    pub fn exponent(&self, p: [f64; 3]) -> f64 {
        let d = [p[0] - self.b[0], p[1] - self.b[1], p[2] - self.b[2]];
        self.a * norm2(d) + self.c
    }

    /// `𝓕(p)`.
    #[inline]
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        fermi_dirac(self.exponent(p))
    }

    /// `𝓕` at every node of `grid`.
    pub fn sample(&self, grid: &VelocityGrid) -> Vec<f64> {
        (0..grid.len()).map(|j| self.eval(grid.node(j))).collect()
    }

    /// Writes `𝓕` at every node of `grid` into `out`.
    pub fn sample_into(&self, grid: &VelocityGrid, out: &mut [f64]) {
        for (j, v) in out.iter_mut().enumerate() {
            *v = self.eval(grid.node(j));
        }
    }

    fn is_finite(&self) -> bool {
        self.a.is_finite() && self.c.is_finite() && self.b.iter().all(|v| v.is_finite())
    }
}

/// `1/(e^x + 1)` without overflow.
#[inline]
pub fn fermi_dirac(x: f64) -> f64 {
    if x >= 0.0 {
        let q = exp(-x);
        q / (1.0 + q)
    } else {
        1.0 / (1.0 + exp(x))
    }
}

/// `(s, s(1 − s))` with `s = 1/(e^x + 1)`; the second entry never cancels.
#[inline]
pub fn fermi_dirac_pair(x: f64) -> (f64, f64) {
    let q = exp(-x.abs());
    let s = 1.0 / (1.0 + q);
    let d = q * s * s;
    if x >= 0.0 {
        (q * s, d)
    } else {
        (s, d)
    }
}

/// `1/(exp(a|p − b|² + c) + 1)`.
pub fn fermi_dirac_eval(fp: &FermiParams, p: [f64; 3]) -> f64 {
    fp.eval(p)
}

/// `B(N, P, E) = N / (E − |P|²/N)^{3/5}`.
pub fn moments_b(m: &Moments) -> Result<f64> {
    let internal = m.internal_energy();
    if !(m.density > 0.0) || !(internal > 0.0) || !internal.is_finite() {
        return Err(Error::DegenerateMoments {
            density: m.density,
            internal_energy: internal,
        });
    }
    Ok(m.density / pow(internal, 0.6))
}

/// Continuous inversion: `c = β⁻¹(B)`, `a = (4πI₂(c)/N)^{2/3}`, `b = P/N`.
pub fn invert_equilibrium(m: &Moments) -> Result<FermiParams> {
    let big_b = moments_b(m)?;
    let c = beta_inverse(big_b)?;
    let sums = fd_sums(c)?;
    let a = exp((2.0 / 3.0) * (sums.log_density() - log(m.density)));
    let n = m.density;
    Ok(FermiParams {
        a,
        b: [m.momentum[0] / n, m.momentum[1] / n, m.momentum[2] / n],
        c,
    })
}

/// Exact moments of `𝓕`: `N = a^{-3/2}·4πI₂(c)`, `P = N b`,
/// `E = a^{-5/2}·4πI₄(c) + N|b|²`.
pub fn equilibrium_moments(fp: &FermiParams) -> Result<Moments> {
    if !(fp.a > 0.0) {
        return Err(Error::InvalidConfig("equilibrium parameter a must be positive"));
    }
    let sums = fd_sums(fp.c)?;
    let la = log(fp.a);
    let n = exp(sums.log_density() - 1.5 * la);
    let internal = exp(sums.log_energy() - 2.5 * la);
    let b = fp.b;
    Ok(Moments {
        density: n,
        momentum: [n * b[0], n * b[1], n * b[2]],
        energy: internal + n * norm2(b),
    })
}

pub const DISCRETE_MAX_ITER: usize = 50;
const DISCRETE_TARGET: f64 = 1e-14;
/// Contracted accuracy of the discrete inversion (relative, per component).
pub const DISCRETE_TOLERANCE: f64 = 1e-12;
const MAX_HALVINGS: usize = 8;

/// Quadrature-exact inversion: finds `(a, b, c)` such that the grid sums of
/// `𝓕` against `(1, p, |p|²)` reproduce `m`.
///
/// Starts from [`invert_equilibrium`] and runs a damped 5×5 Newton iteration.
pub fn discrete_invert_equilibrium(m: &Moments, grid: &VelocityGrid) -> Result<FermiParams> {
    let guess = invert_equilibrium(m)?;
    discrete_invert_from(m, grid, guess)
}

/// [`discrete_invert_equilibrium`] with a caller-supplied starting point.
pub fn discrete_invert_from(
    m: &Moments,
    grid: &VelocityGrid,
    guess: FermiParams,
) -> Result<FermiParams> {
    let target = m.as_array();
    let scales = m.scales();
    if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::DegenerateMoments {
            density: m.density,
            internal_energy: m.internal_energy(),
        });
    }
    let measure = |sums: &[f64; 5]| -> f64 {
        (0..5)
            .map(|k| (sums[k] - target[k]).abs() / scales[k])
            .fold(0.0, f64::max)
    };

    let mut params = guess;
    let (mut sums, mut jac) = discrete_system(&params, grid);
    let mut norm = measure(&sums);
    for iter in 0..DISCRETE_MAX_ITER {
        if norm <= DISCRETE_TARGET {
            return Ok(params);
        }
        let rhs: [f64; 5] = core::array::from_fn(|k| (target[k] - sums[k]) / scales[k]);
        let mut scaled = jac;
        for (row, s) in scaled.iter_mut().zip(scales) {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let Some(delta) = linalg::solve(scaled, rhs) else {
            return Err(Error::Convergence {
                what: "discrete equilibrium inversion (singular Jacobian)",
                iterations: iter,
                residual: norm,
            });
        };

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = FermiParams {
                a: params.a + lambda * delta[0],
                b: [
                    params.b[0] + lambda * delta[1],
                    params.b[1] + lambda * delta[2],
                    params.b[2] + lambda * delta[3],
                ],
                c: params.c + lambda * delta[4],
            };
            if trial.a > 0.0 && trial.is_finite() {
                let (ts, tj) = discrete_system(&trial, grid);
                let tn = measure(&ts);
                if tn < norm {
                    accepted = Some((trial, ts, tj, tn));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((p, s, j, n)) => {
                params = p;
                sums = s;
                jac = j;
                norm = n;
            }
            None if norm <= DISCRETE_TOLERANCE => return Ok(params),
            None => {
                return Err(Error::Convergence {
                    what: "discrete equilibrium inversion",
                    iterations: iter + 1,
                    residual: norm,
                })
            }
        }
    }
    if norm <= DISCRETE_TOLERANCE {
        Ok(params)
    } else {
        Err(Error::Convergence {
            what: "discrete equilibrium inversion",
            iterations: DISCRETE_MAX_ITER,
            residual: norm,
        })
    }
}

/// Grid moments of `𝓕(params)` and their Jacobian w.r.t. `(a, b₁, b₂, b₃, c)`.
fn discrete_system(params: &FermiParams, grid: &VelocityGrid) -> ([f64; 5], [[f64; 5]; 5]) {
    let mut sums = [0.0; 5];
    let mut jac = [[0.0; 5]; 5];
    let FermiParams { a, b, c } = *params;
    for j in 0..grid.len() {
        let p = grid.node(j);
        let d = [p[0] - b[0], p[1] - b[1], p[2] - b[2]];
        let q = norm2(d);
        let (s, ds) = fermi_dirac_pair(a * q + c);
        let phi = [1.0, p[0], p[1], p[2], grid.speed2(j)];
        let grad = [-ds * q, 2.0 * a * ds * d[0], 2.0 * a * ds * d[1], 2.0 * a * ds * d[2], -ds];
        for k in 0..5 {
            sums[k] += phi[k] * s;
            for l in 0..5 {
                jac[k][l] += phi[k] * grad[l];
            }
        }
    }
    let w = grid.weight();
    for k in 0..5 {
        sums[k] *= w;
        for l in 0..5 {
            jac[k][l] *= w;
        }
    }
    (sums, jac)
}

/// Coefficients of `1/τ = P(N)(C₁aⁿ + C₂aᵐ + C₃) + C₄`.
#[derive(Clone, Debug, PartialEq)]
pub struct TauCoefficients {
    poly: Vec<f64>,
    n: f64,
    m: f64,
    c: [f64; 4],
}

impl TauCoefficients {
    /// `poly` holds the coefficients of `P(N)` in ascending powers.
    pub fn new(poly: Vec<f64>, n: f64, m: f64, c: [f64; 4]) -> Result<Self> {
        if poly.is_empty() || poly.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTau("P(N) needs at least one finite coefficient"));
        }
        if !(n >= 0.0) || !n.is_finite() {
            return Err(Error::InvalidTau("exponent n must be >= 0"));
        }
        if !(m <= 0.0) || !m.is_finite() {
            return Err(Error::InvalidTau("exponent m must be <= 0"));
        }
        if c.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidTau("C1..C4 must be >= 0"));
        }
        if c.iter().sum::<f64>() == 0.0 {
            return Err(Error::InvalidTau("C1 + C2 + C3 + C4 must be nonzero"));
        }
        Ok(Self { poly, n, m, c })
    }

    /// `1/τ ≡ rate`.
    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(alloc::vec![1.0], 0.0, 0.0, [0.0, 0.0, 0.0, rate])
    }

    pub fn poly(&self) -> &[f64] {
        &self.poly
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.n, self.m)
    }

    pub fn coefficients(&self) -> [f64; 4] {
        self.c
    }

    fn poly_at(&self, x: f64) -> f64 {
        self.poly.iter().rev().fold(0.0, |acc, k| acc * x + k)
    }

    /// The frequency when it does not depend on the state, i.e. `C₁ = C₂ = C₃ = 0`.
    pub fn constant_rate(&self) -> Option<f64> {
        (self.c[0] == 0.0 && self.c[1] == 0.0 && self.c[2] == 0.0).then_some(self.c[3])
    }
}

/// `1/τ = P(N)(C₁aⁿ + C₂aᵐ + C₃) + C₄`.
pub fn relaxation_frequency(m: &Moments, fp: &FermiParams, tc: &TauCoefficients) -> Result<f64> {
    let [c1, c2, c3, c4] = tc.c;
    let a = fp.a;
    if a < 0.0 || !a.is_finite() {
        return Err(Error::SingularFrequency { a });
    }
    if a == 0.0 && c2 > 0.0 && tc.m < 0.0 {
        return Err(Error::SingularFrequency { a });
    }
    let t1 = if c1 == 0.0 { 0.0 } else { c1 * pow(a, tc.n) };
    let t2 = if c2 == 0.0 { 0.0 } else { c2 * pow(a, tc.m) };
    let rate = tc.poly_at(m.density) * (t1 + t2 + c3) + c4;
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::NegativeFrequency { value: rate });
    }
    Ok(rate)
}

/// `4π I₂(c)`, the density of the unit-`a` equilibrium.
pub fn unit_density(c: f64) -> Result<f64> {
    Ok(4.0 * PI * fdintegrals::fd_integral(fdintegrals::IntegralKind::Plain, 2, c)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdintegrals::{beta_max, BRANCH_POINT};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn moments_b_examples() {
        assert_eq!(moments_b(&Moments::new(1.0, [0.0; 3], 1.0)).unwrap(), 1.0);
        let v = moments_b(&Moments::new(2.0, [0.0; 3], 2.0)).unwrap();
        assert!(close(v, 2.0 / pow(2.0, 0.6), 1e-15));
        assert!(matches!(
            moments_b(&Moments::new(1.0, [0.3, 0.0, 0.0], 0.09)),
            Err(Error::DegenerateMoments { .. })
        ));
    }

    #[test]
    fn fermi_dirac_examples() {
        let fp = FermiParams::new(1.0, [0.0; 3], 0.0);
        assert_eq!(fp.eval([0.0; 3]), 0.5);
        let fp = FermiParams::new(1.0, [0.0; 3], BRANCH_POINT);
        assert!(close(fp.eval([0.0; 3]), 0.75, 1e-15));
        let fp = FermiParams::new(0.8, [0.3, -0.2, 0.1], 0.4);
        let peak = fp.eval(fp.b);
        for p in [[0.0; 3], [0.31, -0.2, 0.1], [1.0, 1.0, 1.0]] {
            assert!(fp.eval(p) <= peak);
            assert!(fp.eval(p) > 0.0 && fp.eval(p) < 1.0);
        }
    }

    #[test]
    fn fd_pair_matches_naive() {
        for x in [-30.0, -2.0, -1e-3, 0.0, 0.7, 12.0] {
            let (s, d) = fermi_dirac_pair(x);
            let naive = 1.0 / (exp(x) + 1.0);
            assert!(close(s, naive, 1e-14));
            assert!(close(d, exp(x) / ((exp(x) + 1.0) * (exp(x) + 1.0)), 1e-13));
        }
    }

    #[test]
    fn invert_known_equilibria() {
        let fp = FermiParams::new(1.0, [0.0; 3], 0.0);
        let got = invert_equilibrium(&equilibrium_moments(&fp).unwrap()).unwrap();
        assert!((got.a - 1.0).abs() < 1e-8 && got.c.abs() < 1e-8);
        assert!(got.b.iter().all(|v| v.abs() < 1e-12));

        let fp = FermiParams::new(0.7, [0.2, -0.1, 0.0], 1.5);
        let got = invert_equilibrium(&equilibrium_moments(&fp).unwrap()).unwrap();
        assert!((got.a - 0.7).abs() < 1e-8);
        assert!((got.c - 1.5).abs() < 1e-8);
        for i in 0..3 {
            assert!((got.b[i] - fp.b[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn invert_rejects_inadmissible() {
        // B = E^{-3/5} ≥ β(−ln 3) once E is small enough
        let e = pow(1.0 / (beta_max() * 1.001), 1.0 / 0.6);
        let err = invert_equilibrium(&Moments::new(1.0, [0.0; 3], e)).unwrap_err();
        assert!(matches!(err, Error::OutOfBranch { .. }));
        assert!(err.is_admissibility());
    }

    #[test]
    fn equilibrium_moment_symmetries() {
        let fp = FermiParams::new(1.0, [0.0; 3], 0.3);
        let m = equilibrium_moments(&fp).unwrap();
        assert_eq!(m.momentum, [0.0; 3]);
        let a = equilibrium_moments(&FermiParams::new(0.9, [0.2, 0.1, -0.3], 0.5)).unwrap();
        let b = equilibrium_moments(&FermiParams::new(0.9, [-0.2, -0.1, 0.3], 0.5)).unwrap();
        assert_eq!(a.density, b.density);
        assert_eq!(a.energy, b.energy);
        for i in 0..3 {
            assert_eq!(a.momentum[i], -b.momentum[i]);
        }
    }

    #[test]
    fn equilibrium_moments_match_fine_grid_quadrature() {
        let fp = FermiParams::new(1.0, [0.1, 0.0, -0.05], 0.0);
        let grid = VelocityGrid::new(7.0, 64).unwrap();
        let m_grid = grid.moments(&fp.sample(&grid));
        let m = equilibrium_moments(&fp).unwrap();
        assert!(m.relative_gap(&m_grid) < 1e-6);
    }

    #[test]
    fn discrete_inversion_recovers_sampled_parameters() {
        let grid = VelocityGrid::new(6.0, 24).unwrap();
        let fp = FermiParams::new(1.1, [0.15, -0.05, 0.02], 0.4);
        let m = grid.moments(&fp.sample(&grid));
        let got = discrete_invert_equilibrium(&m, &grid).unwrap();
        assert!((got.a - fp.a).abs() < 1e-10);
        assert!((got.c - fp.c).abs() < 1e-10);
        for i in 0..3 {
            assert!((got.b[i] - fp.b[i]).abs() < 1e-10);
        }
        let back = grid.moments(&got.sample(&grid));
        assert!(m.relative_gap(&back) < 1e-12);
    }

    #[test]
    fn discrete_and_continuous_inversions_converge_under_refinement() {
        let target = FermiParams::new(1.0, [0.0; 3], 0.2);
        let m = equilibrium_moments(&target).unwrap();
        let cont = invert_equilibrium(&m).unwrap();
        let mut gaps = Vec::new();
        for n_p in [12, 16, 24] {
            let grid = VelocityGrid::new(6.0, n_p).unwrap();
            let disc = discrete_invert_equilibrium(&m, &grid).unwrap();
            gaps.push((disc.a - cont.a).abs() + (disc.c - cont.c).abs());
        }
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    }

    #[test]
    fn drifted_coarse_grid_fails_to_converge() {
        let grid = VelocityGrid::new(3.0, 4).unwrap();
        // mean velocity beyond the outermost node: no grid equilibrium has it
        let m = Moments::new(1.0, [2.8, 0.0, 0.0], 1.0 * 2.8 * 2.8 + 1.5);
        let err = discrete_invert_equilibrium(&m, &grid).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }), "{err:?}");
    }

    #[test]
    fn relaxation_frequency_examples() {
        let m = Moments::new(2.5, [0.0; 3], 3.0);
        let fp = FermiParams::new(2.0, [0.0; 3], 0.0);
        let constant = TauCoefficients::constant(1.0).unwrap();
        assert_eq!(relaxation_frequency(&m, &fp, &constant).unwrap(), 1.0);

        let linear = TauCoefficients::new(alloc::vec![0.0, 1.0], 1.0, 0.0, [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(close(relaxation_frequency(&m, &fp, &linear).unwrap(), 2.5 * 2.0, 1e-15));

        let inverse = TauCoefficients::new(alloc::vec![1.0], 0.0, -1.0, [0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(close(relaxation_frequency(&m, &fp, &inverse).unwrap(), 0.5, 1e-15));

        let singular = FermiParams::new(0.0, [0.0; 3], 0.0);
        assert!(matches!(
            relaxation_frequency(&m, &singular, &inverse),
            Err(Error::SingularFrequency { .. })
        ));
    }

    #[test]
    fn tau_validation() {
        assert!(TauCoefficients::new(alloc::vec![1.0], 0.0, 0.0, [0.0; 4]).is_err());
        assert!(TauCoefficients::new(alloc::vec![1.0], -1.0, 0.0, [1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(TauCoefficients::new(alloc::vec![1.0], 0.0, 0.5, [1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(TauCoefficients::new(alloc::vec![1.0], 0.0, 0.0, [-1.0, 0.0, 0.0, 2.0]).is_err());
    }
}
