//! Phase-space discretization: a periodic 1-D spatial axis times a truncated
//! 3-D midpoint velocity grid.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, exp, log, log1p, pow, sqrt};

use crate::equilibrium::{equilibrium_moments, fermi_dirac_pair, invert_equilibrium, FermiParams, Moments};
use crate::fdintegrals::fd_sums;
use crate::linearized::OrthoBasis;
use crate::{Error, Result};

/// `m − m²` below this is treated as underflowed and masked out of divisions.
pub const MASK_THRESHOLD: f64 = 1e-30;

/// Default relative tolerance between grid and exact equilibrium density.
pub const DEFAULT_ADEQUACY: f64 = 1e-6;

/// Default points per velocity axis.
pub const DEFAULT_NP: usize = 32;

/// Cartesian midpoint grid on `[−p_max, p_max]³`, symmetric under `p → −p`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityGrid {
    p_max: f64,
    n_p: usize,
    dp: f64,
    nodes: Vec<[f64; 3]>,
    speed2: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(p_max: f64, n_p: usize) -> Result<Self> {
        if !(p_max > 0.0) || !p_max.is_finite() {
            return Err(Error::InvalidGrid("p_max must be positive and finite"));
        }
        if n_p < 2 {
            return Err(Error::InvalidGrid("need at least 2 velocity points per axis"));
        }
        let dp = 2.0 * p_max / n_p as f64;
        // (i + ½ − n/2)·dp is exactly antisymmetric under i → n − 1 − i
        let axis: Vec<f64> = (0..n_p)
            .map(|i| (i as f64 + 0.5 - 0.5 * n_p as f64) * dp)
            .collect();
        let mut nodes = Vec::with_capacity(n_p * n_p * n_p);
        let mut speed2 = Vec::with_capacity(n_p * n_p * n_p);
        for &x in &axis {
            for &y in &axis {
                for &z in &axis {
                    nodes.push([x, y, z]);
                    speed2.push(x * x + y * y + z * z);
                }
            }
        }
        Ok(Self {
            p_max,
            n_p,
            dp,
            nodes,
            speed2,
        })
    }

    /// Grid with the default truncation `p_max = 6/√a₀`.
    pub fn for_temperature(a0: f64, n_p: usize) -> Result<Self> {
        if !(a0 > 0.0) {
            return Err(Error::InvalidGrid("a0 must be positive"));
        }
        Self::new(6.0 / sqrt(a0), n_p)
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn points_per_axis(&self) -> usize {
        self.n_p
    }

    pub fn spacing(&self) -> f64 {
        self.dp
    }

    /// Quadrature weight `Δp³`, identical for every node.
    pub fn weight(&self) -> f64 {
        self.dp * self.dp * self.dp
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn node(&self, j: usize) -> [f64; 3] {
        self.nodes[j]
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    /// `|p|²` at node `j`.
    #[inline]
    pub fn speed2(&self, j: usize) -> f64 {
        self.speed2[j]
    }

    /// Index of the node at `−p`.
    pub fn mirror(&self, j: usize) -> usize {
        self.len() - 1 - j
    }

    /// Largest `|p₁|` over the nodes.
    pub fn max_axis_speed(&self) -> f64 {
        self.p_max - 0.5 * self.dp
    }

    /// Quadrature sums of `values` against `(1, p, |p|²)`.
    ///
    /// Mirror nodes are summed in pairs, so a state even in `p` has exactly
    /// zero momentum.
    pub fn moments(&self, values: &[f64]) -> Moments {
        let n = self.len();
        let mut acc = [0.0; 5];
        for j in 0..n / 2 {
            let k = n - 1 - j;
            let even = values[j] + values[k];
            let odd = values[j] - values[k];
            let p = self.nodes[j];
            acc[0] += even;
            acc[1] += odd * p[0];
            acc[2] += odd * p[1];
            acc[3] += odd * p[2];
            acc[4] += even * self.speed2[j];
        }
        if n % 2 == 1 {
            // the centre node p = 0
            acc[0] += values[n / 2];
        }
        let w = self.weight();
        Moments::from_array(acc.map(|x| x * w))
    }

    /// `⟨f, g⟩ = Σ w f g`.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.weight()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        sqrt(self.dot(f, f))
    }

    pub fn sample<F: FnMut([f64; 3]) -> f64>(&self, mut f: F) -> Vec<f64> {
        self.nodes.iter().map(|&p| f(p)).collect()
    }
}

/// Periodic, uniformly spaced spatial axis of length `Λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    length: f64,
    n_x: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(length: f64, n_x: usize) -> Result<Self> {
        Self::with_dimension(1, length, n_x)
    }

    /// Only `dimension = 1` is implemented; the argument keeps call sites explicit.
    pub fn with_dimension(dimension: usize, length: f64, n_x: usize) -> Result<Self> {
        if dimension != 1 {
            return Err(Error::InvalidGrid("only one periodic spatial dimension is supported"));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid("period length must be positive"));
        }
        if n_x == 0 {
            return Err(Error::InvalidGrid("need at least one spatial cell"));
        }
        Ok(Self {
            length,
            n_x,
            dx: length / n_x as f64,
        })
    }

    pub fn dimension(&self) -> usize {
        1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cells(&self) -> usize {
        self.n_x
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }
}

/// Velocity grid × spatial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub velocity: VelocityGrid,
    pub spatial: SpatialGrid,
}

impl PhaseGrid {
    pub fn new(velocity: VelocityGrid, spatial: SpatialGrid) -> Self {
        Self { velocity, spatial }
    }

    pub fn len(&self) -> usize {
        self.velocity.len() * self.spatial.cells()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Δx · Δp³`.
    pub fn cell_volume(&self) -> f64 {
        self.spatial.spacing() * self.velocity.weight()
    }

    /// Phase-space `L²` norm of a field laid out like [`PhaseState`].
    pub fn norm(&self, f: &[f64]) -> f64 {
        sqrt(f.iter().map(|v| v * v).sum::<f64>() * self.cell_volume())
    }
}

/// `F(x, p)` stored cell-major: all velocity nodes of cell 0, then cell 1, …
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    values: Vec<f64>,
    n_x: usize,
    n_v: usize,
    pub time: f64,
}

impl PhaseState {
    pub fn new(grid: &PhaseGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            values,
            n_x: grid.spatial.cells(),
            n_v: grid.velocity.len(),
            time: 0.0,
        })
    }

    /// The same velocity profile in every cell.
    pub fn uniform(grid: &PhaseGrid, profile: &[f64]) -> Result<Self> {
        if profile.len() != grid.velocity.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.velocity.len(),
                got: profile.len(),
            });
        }
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.spatial.cells() {
            values.extend_from_slice(profile);
        }
        Self::new(grid, values)
    }

    pub fn zeros(grid: &PhaseGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            n_x: grid.spatial.cells(),
            n_v: grid.velocity.len(),
            time: 0.0,
        }
    }

    pub fn cells(&self) -> usize {
        self.n_x
    }

    pub fn velocity_len(&self) -> usize {
        self.n_v
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_v..(i + 1) * self.n_v]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.n_v..(i + 1) * self.n_v]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Checks `0 ≤ F ≤ 1` and finiteness.
    pub fn check_bounds(&self) -> Result<()> {
        for (index, &value) in self.values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvariantViolation {
                    what: "fermionic bound 0 <= F <= 1",
                    index,
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn matches(&self, grid: &PhaseGrid) -> bool {
        self.n_x == grid.spatial.cells() && self.n_v == grid.velocity.len()
    }
}

/// Per-cell quadrature moments.
pub fn compute_moments(s: &PhaseState, grid: &VelocityGrid) -> Vec<Moments> {
    (0..s.cells()).map(|i| grid.moments(s.cell(i))).collect()
}

/// `∫∫ (1, p, |p|²) F dx dp`.
pub fn total_moments(s: &PhaseState, grid: &PhaseGrid) -> Moments {
    let dx = grid.spatial.spacing();
    let mut acc = [0.0; 5];
    for m in compute_moments(s, &grid.velocity) {
        for (a, v) in acc.iter_mut().zip(m.as_array()) {
            *a += v * dx;
        }
    }
    Moments::from_array(acc)
}

#[inline]
fn entropy_density(f: f64) -> f64 {
    let a = if f > 0.0 { f * log(f) } else { 0.0 };
    let b = if f < 1.0 { (1.0 - f) * log1p(-f) } else { 0.0 };
    a + b
}

/// `H(F) = ∫∫ F ln F + (1 − F) ln(1 − F) dx dp`; `0 ln 0 = 0`.
pub fn h_functional(s: &PhaseState, grid: &PhaseGrid) -> Result<f64> {
    // Neumaier-compensated: step-to-step changes of H late in a run sit near
    // the roundoff of a plain sum
    let (mut total, mut comp) = (0.0_f64, 0.0_f64);
    for (index, &f) in s.values().iter().enumerate() {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvariantViolation {
                what: "H-functional needs 0 <= F <= 1",
                index,
                value: f,
            });
        }
        let v = entropy_density(f);
        let t = total + v;
        comp += if total.abs() >= v.abs() { (total - t) + v } else { (v - t) + total };
        total = t;
    }
    Ok((total + comp) * grid.cell_volume())
}

/// The global Fermi-Dirac `m(p) = 1/(exp(a₀|p|² + c₀) + 1)` sampled on a
/// velocity grid, with its weight `√(m − m²)` and null-space basis.
#[derive(Clone, Debug)]
pub struct GlobalEquilibrium {
    params: FermiParams,
    density: f64,
    energy: f64,
    k_exact: f64,
    grid_density: f64,
    grid_energy: f64,
    k: f64,
    m: Vec<f64>,
    weight_sqrt: Vec<f64>,
    masked: Vec<bool>,
    basis: OrthoBasis,
    grid: VelocityGrid,
}

impl GlobalEquilibrium {
    pub fn from_params(grid: &VelocityGrid, a0: f64, c0: f64) -> Result<Self> {
        Self::with_tolerance(grid, a0, c0, DEFAULT_ADEQUACY)
    }

    /// `(a₀, c₀)` obtained by inverting densities `(N₀, 0, E₀)` per unit length.
    pub fn from_moments(grid: &VelocityGrid, n0: f64, e0: f64) -> Result<Self> {
        let fp = invert_equilibrium(&Moments::new(n0, [0.0; 3], e0))?;
        Self::from_params(grid, fp.a, fp.c)
    }

    pub fn with_tolerance(grid: &VelocityGrid, a0: f64, c0: f64, adequacy: f64) -> Result<Self> {
        if !(a0 > 0.0) || !a0.is_finite() {
            return Err(Error::InvalidConfig("a0 must be positive and finite"));
        }
        if !c0.is_finite() {
            return Err(Error::NonFinite { what: "c0", value: c0 });
        }
        let params = FermiParams::new(a0, [0.0; 3], c0);
        let exact = equilibrium_moments(&params)?;
        let sums = fd_sums(c0)?;
        let k_exact = exp(sums.log_density_derivative() - 1.5 * log(a0));

        let n = grid.len();
        let mut m = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for j in 0..n {
            let (s, ds) = fermi_dirac_pair(a0 * grid.speed2(j) + c0);
            m.push(s);
            d.push(ds);
        }
        let grid_moments = grid.moments(&m);
        let k = d.iter().sum::<f64>() * grid.weight();
        let masked = d.iter().map(|&v| v < MASK_THRESHOLD).collect();
        let weight_sqrt: Vec<f64> = d.iter().map(|&v| sqrt(v)).collect();

        let relative_error = (grid_moments.density - exact.density).abs() / exact.density;
        if !(relative_error <= adequacy) {
            return Err(Error::GridInadequate {
                relative_error,
                tolerance: adequacy,
            });
        }
        let gap = exact.energy * k_exact - 0.9 * exact.density * exact.density / a0;
        if !(gap > 0.0) {
            return Err(Error::Positivity { value: gap });
        }
        let basis = OrthoBasis::from_weight(grid, &weight_sqrt);
        Ok(Self {
            params,
            density: exact.density,
            energy: exact.energy,
            k_exact,
            grid_density: grid_moments.density,
            grid_energy: grid_moments.energy,
            k,
            m,
            weight_sqrt,
            masked,
            basis,
            grid: grid.clone(),
        })
    }

    pub fn a0(&self) -> f64 {
        self.params.a
    }

    pub fn c0(&self) -> f64 {
        self.params.c
    }

    pub fn params(&self) -> FermiParams {
        self.params
    }

    /// Exact `N₀ = a₀^{-3/2}·4πI₂(c₀)`.
    pub fn density(&self) -> f64 {
        self.density
    }

    /// Exact `E₀ = a₀^{-5/2}·4πI₄(c₀)`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `k = Σ w (m − m²)`; the grid value, used by every discrete operator.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// `k = ∫(m − m²) dp` evaluated exactly, for the continuous closed forms.
    pub fn k_exact(&self) -> f64 {
        self.k_exact
    }

    /// `E₀k − 9N₀²/(10a₀)` from the exact quantities.
    pub fn positivity_gap(&self) -> f64 {
        self.energy * self.k_exact - 0.9 * self.density * self.density / self.params.a
    }

    /// Grid moments of `m`: `(N₀, 0, E₀)` as the quadrature sees them.
    pub fn grid_moments(&self) -> Moments {
        Moments::new(self.grid_density, [0.0; 3], self.grid_energy)
    }

    /// `N₀/E₀^{3/5}` from the grid moments.
    pub fn grid_b(&self) -> f64 {
        self.grid_density / pow(self.grid_energy, 0.6)
    }

    pub fn values(&self) -> &[f64] {
        &self.m
    }

    /// `√(m − m²)` per node.
    pub fn weight_sqrt(&self) -> &[f64] {
        &self.weight_sqrt
    }

    /// Nodes where `m − m²` underflowed below [`MASK_THRESHOLD`].
    pub fn masked(&self) -> &[bool] {
        &self.masked
    }

    pub fn basis(&self) -> &OrthoBasis {
        &self.basis
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    /// The global state `F ≡ m`.
    pub fn state(&self, grid: &PhaseGrid) -> Result<PhaseState> {
        PhaseState::uniform(grid, &self.m)
    }
}

/// Velocity shape `φ(p)` of an initial perturbation.
#[derive(Clone, Debug, PartialEq)]
pub enum VelocityProfile {
    /// Basis vector `e_i`, `i ∈ 1..=5`.
    Basis(usize),
    /// Unit-norm Gaussian `exp(−|p − center|²/(2 width²))`.
    GaussianBump { center: [f64; 3], width: f64 },
    /// Unit-norm `p₁p₂√(m − m²)`, orthogonal to the null space by parity.
    Shear,
}

/// `f₀(x, p) = A·cos(2π·mode·x/Λ)·φ(p)`; `mode = 0` gives a uniform perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub amplitude: f64,
    pub profile: VelocityProfile,
    pub mode: u32,
}

impl VelocityProfile {
    pub fn sample(&self, ge: &GlobalEquilibrium) -> Result<Vec<f64>> {
        let grid = ge.grid();
        let normalized = |v: Vec<f64>| -> Result<Vec<f64>> {
            let norm = grid.norm(&v);
            if !(norm > 0.0) {
                return Err(Error::InvalidConfig("perturbation profile vanishes on the grid"));
            }
            Ok(v.into_iter().map(|x| x / norm).collect())
        };
        match *self {
            VelocityProfile::Basis(i) if (1..=5).contains(&i) => Ok(ge.basis().vector(i - 1).to_vec()),
            VelocityProfile::Basis(_) => Err(Error::InvalidConfig("basis index must be in 1..=5")),
            VelocityProfile::GaussianBump { center, width } => {
                if !(width > 0.0) {
                    return Err(Error::InvalidConfig("bump width must be positive"));
                }
                normalized(grid.sample(|p| {
                    let d2 = (p[0] - center[0]) * (p[0] - center[0])
                        + (p[1] - center[1]) * (p[1] - center[1])
                        + (p[2] - center[2]) * (p[2] - center[2]);
                    exp(-d2 / (2.0 * width * width))
                }))
            }
            VelocityProfile::Shear => normalized(
                (0..grid.len())
                    .map(|j| {
                        let p = grid.node(j);
                        p[0] * p[1] * ge.weight_sqrt()[j]
                    })
                    .collect(),
            ),
        }
    }
}

/// Builds `F = m + √(m − m²) f₀` and returns it with `‖f₀‖` over phase space.
pub fn init_perturbed_state(
    ge: &GlobalEquilibrium,
    grid: &PhaseGrid,
    pert: &Perturbation,
) -> Result<(PhaseState, f64)> {
    if grid.velocity != *ge.grid() {
        return Err(Error::InvalidGrid("global equilibrium was built on a different velocity grid"));
    }
    if !pert.amplitude.is_finite() {
        return Err(Error::NonFinite {
            what: "perturbation amplitude",
            value: pert.amplitude,
        });
    }
    let phi = pert.profile.sample(ge)?;
    let n_v = grid.velocity.len();
    let mut values = Vec::with_capacity(grid.len());
    let mut f_sq = 0.0;
    for i in 0..grid.spatial.cells() {
        let x = grid.spatial.center(i);
        let modulation = pert.amplitude * cos(2.0 * PI * pert.mode as f64 * x / grid.spatial.length());
        for j in 0..n_v {
            let f = modulation * phi[j];
            f_sq += f * f;
            values.push(ge.values()[j] + ge.weight_sqrt()[j] * f);
        }
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if min < 0.0 || max > 1.0 {
        return Err(Error::BoundViolation {
            amplitude: pert.amplitude,
            min,
            max,
        });
    }
    let state = PhaseState::new(grid, values)?;
    Ok((state, sqrt(f_sq * grid.cell_volume())))
}
