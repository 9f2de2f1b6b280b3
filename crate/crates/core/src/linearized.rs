//! Linearization around the global equilibrium `m`.
//!
//! With `F = m + √(m − m²) f`, the local equilibrium linearizes to
//! `𝓕(F) ≈ m + √(m − m²) Pf`, where `P` is the orthogonal projection onto
//!
//! ```text
//! span{ √(m−m²), p₁√(m−m²), p₂√(m−m²), p₃√(m−m²), |p|²√(m−m²) }
//! ```
//!
//! and `L = P − I` is the linearized relaxation operator. Everything here acts
//! on velocity-space arrays laid out like [`VelocityGrid`] nodes, under the
//! grid inner product `⟨f, g⟩ = Σ Δp³ f g`.

use alloc::vec::Vec;

use libm::{exp, log, sqrt};

use crate::equilibrium::{discrete_invert_equilibrium, equilibrium_moments, invert_equilibrium, FermiParams, Moments};
use crate::fdintegrals::fd_sums;
use crate::phasegrid::{GlobalEquilibrium, VelocityGrid};
use crate::{Error, Result};

/// Orthonormal basis `e₁..e₅` of the null space of `L` on a velocity grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoBasis {
    vectors: [Vec<f64>; 5],
    gram: [[f64; 5]; 5],
    weight: f64,
}

impl OrthoBasis {
    /// Evaluates the defining normalizations with grid sums:
    ///
    /// ```text
    /// e₁ = w/‖w‖,  e_{i+1} = p_i w/‖p_i w‖,  e₅ ∝ (|p|² − ⟨|p|²w, w⟩/⟨w, w⟩) w
    /// ```
    ///
    /// with `w = √(m − m²)`, then one modified Gram-Schmidt sweep to remove
    /// rounding-level overlap.
    pub fn from_weight(grid: &VelocityGrid, weight_sqrt: &[f64]) -> Self {
        let n = grid.len();
        let mut vectors: [Vec<f64>; 5] = core::array::from_fn(|_| Vec::with_capacity(n));
        let k: f64 = weight_sqrt.iter().map(|v| v * v).sum::<f64>() * grid.weight();
        let second: f64 = (0..n)
            .map(|j| grid.speed2(j) * weight_sqrt[j] * weight_sqrt[j])
            .sum::<f64>()
            * grid.weight();
        let shift = second / k;
        for (j, &w) in weight_sqrt.iter().enumerate() {
            let p = grid.node(j);
            vectors[0].push(w);
            vectors[1].push(p[0] * w);
            vectors[2].push(p[1] * w);
            vectors[3].push(p[2] * w);
            vectors[4].push((grid.speed2(j) - shift) * w);
        }
        for i in 0..5 {
            for l in 0..i {
                let (done, rest) = vectors.split_at_mut(i);
                let overlap = grid.dot(&rest[0], &done[l]);
                for (v, e) in rest[0].iter_mut().zip(&done[l]) {
                    *v -= overlap * e;
                }
            }
            let norm = grid.norm(&vectors[i]);
            for v in vectors[i].iter_mut() {
                *v /= norm;
            }
        }
        Self::from_vectors(grid, vectors)
    }

    fn from_vectors(grid: &VelocityGrid, vectors: [Vec<f64>; 5]) -> Self {
        let gram = core::array::from_fn(|i| core::array::from_fn(|j| grid.dot(&vectors[i], &vectors[j])));
        Self {
            vectors,
            gram,
            weight: grid.weight(),
        }
    }

    /// `e_{i+1}`.
    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[Vec<f64>; 5] {
        &self.vectors
    }

    pub fn gram(&self) -> [[f64; 5]; 5] {
        self.gram
    }

    /// `max |⟨e_i, e_j⟩ − δ_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..5 {
            for j in 0..5 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.gram[i][j] - target).abs());
            }
        }
        worst
    }

    fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.weight
    }

    /// `⟨f, e_i⟩` for `i = 1..5`.
    pub fn coefficients(&self, f: &[f64]) -> [f64; 5] {
        core::array::from_fn(|i| self.dot(f, &self.vectors[i]))
    }

    /// `Pf = Σ ⟨f, e_i⟩ e_i`.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        let coeff = self.coefficients(f);
        let mut out = alloc::vec![0.0; f.len()];
        for (c, e) in coeff.iter().zip(&self.vectors) {
            for (o, v) in out.iter_mut().zip(e) {
                *o += c * v;
            }
        }
        out
    }

    /// `Lf = Pf − f`.
    pub fn apply_l(&self, f: &[f64]) -> Vec<f64> {
        let mut out = self.project(f);
        for (o, v) in out.iter_mut().zip(f) {
            *o -= v;
        }
        out
    }

    /// A copy with `e_{index+1}` scaled by `factor`; only for fault-injection checks.
    #[doc(hidden)]
    pub fn corrupted(&self, index: usize, factor: f64) -> Self {
        let mut vectors = self.vectors.clone();
        for v in vectors[index].iter_mut() {
            *v *= factor;
        }
        let weight = self.weight;
        let gram = core::array::from_fn(|i| {
            core::array::from_fn(|j| vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum::<f64>() * weight)
        });
        Self {
            vectors,
            gram,
            weight,
        }
    }
}

/// Builds (afresh) the basis of `ge` after checking `E₀k − 9N₀²/(10a₀) > 0`.
pub fn build_basis(ge: &GlobalEquilibrium) -> Result<OrthoBasis> {
    positivity(ge)?;
    Ok(OrthoBasis::from_weight(ge.grid(), ge.weight_sqrt()))
}

fn positivity(ge: &GlobalEquilibrium) -> Result<f64> {
    let gap = ge.positivity_gap();
    if gap > 0.0 {
        Ok(gap)
    } else {
        Err(Error::Positivity { value: gap })
    }
}

/// `E₀k − 9N₀²/(10a₀)` of the continuous equilibrium `(a₀, 0, c₀)`, without
/// a grid. Positive on the whole admissible branch.
pub fn positivity_gap(a0: f64, c0: f64) -> Result<f64> {
    let fp = FermiParams::new(a0, [0.0; 3], c0);
    let m = equilibrium_moments(&fp)?;
    let k = exp(fd_sums(c0)?.log_density_derivative() - 1.5 * log(a0));
    Ok(m.energy * k - 0.9 * m.density * m.density / a0)
}

/// The closed forms with exact `N₀, E₀, k`:
///
/// ```text
/// e₁ = k^{-1/2} w
/// e_{i+1} = (2a₀/N₀)^{1/2} p_i w
/// e₅ = (2a₀k / (5(E₀k − 9N₀²/(10a₀))))^{1/2} (|p|² − 3N₀/(2a₀k)) w
/// ```
pub fn closed_form_basis(ge: &GlobalEquilibrium) -> Result<[Vec<f64>; 5]> {
    let gap = positivity(ge)?;
    let grid = ge.grid();
    let (a0, n0, k) = (ge.a0(), ge.density(), ge.k_exact());
    let c1 = 1.0 / sqrt(k);
    let cp = sqrt(2.0 * a0 / n0);
    let c5 = sqrt(0.4 * a0 * k / gap);
    let shift = 1.5 * n0 / (a0 * k);
    let w = ge.weight_sqrt();
    Ok(core::array::from_fn(|i| {
        (0..grid.len())
            .map(|j| match i {
                0 => c1 * w[j],
                1..=3 => cp * grid.node(j)[i - 1] * w[j],
                _ => c5 * (grid.speed2(j) - shift) * w[j],
            })
            .collect()
    }))
}

/// Independent construction: classical Gram-Schmidt (two passes) of
/// `{1, p₁, p₂, p₃, |p|²}·w` on the grid.
pub fn gram_schmidt_basis(grid: &VelocityGrid, weight_sqrt: &[f64]) -> [Vec<f64>; 5] {
    let mut out: [Vec<f64>; 5] = core::array::from_fn(|i| {
        (0..grid.len())
            .map(|j| {
                let monomial = match i {
                    0 => 1.0,
                    1..=3 => grid.node(j)[i - 1],
                    _ => grid.speed2(j),
                };
                monomial * weight_sqrt[j]
            })
            .collect()
    });
    for i in 0..5 {
        for _pass in 0..2 {
            let overlaps: Vec<f64> = (0..i).map(|l| grid.dot(&out[i], &out[l])).collect();
            for (l, c) in overlaps.into_iter().enumerate() {
                let (done, rest) = out.split_at_mut(i);
                for (v, e) in rest[0].iter_mut().zip(&done[l]) {
                    *v -= c * e;
                }
            }
        }
        let norm = grid.norm(&out[i]);
        for v in out[i].iter_mut() {
            *v /= norm;
        }
    }
    out
}

/// `Pf` with the cached basis of `ge`.
pub fn project_p(ge: &GlobalEquilibrium, f: &[f64]) -> Vec<f64> {
    ge.basis().project(f)
}

/// `Lf = Pf − f` with the cached basis of `ge`.
pub fn apply_l(ge: &GlobalEquilibrium, f: &[f64]) -> Vec<f64> {
    ge.basis().apply_l(f)
}

/// `r(ε) = ‖(𝓕(m + ε w g) − m)/w − εPg‖` over unmasked nodes, `w = √(m − m²)`.
///
/// `𝓕` is the quadrature-exact equilibrium, so the first-order term is the
/// grid projection `Pg` and `r(ε) = O(ε²)`.
pub fn linearization_residual(ge: &GlobalEquilibrium, g: &[f64], eps: f64) -> Result<f64> {
    let grid = ge.grid();
    if g.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            got: g.len(),
        });
    }
    let m = ge.values();
    let w = ge.weight_sqrt();
    let perturbed: Vec<f64> = (0..grid.len()).map(|j| m[j] + eps * w[j] * g[j]).collect();
    let moments = grid.moments(&perturbed);
    let fp = discrete_invert_equilibrium(&moments, grid)?;
    let pg = ge.basis().project(g);
    let mut acc = 0.0;
    for j in 0..grid.len() {
        if ge.masked()[j] {
            continue;
        }
        let r = (fp.eval(grid.node(j)) - m[j]) / w[j] - eps * pg[j];
        acc += r * r;
    }
    Ok(sqrt(acc * grid.weight()))
}

/// `∂c/∂(N, P, E)` and `∂a/∂(N, P, E)` at the global equilibrium.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientDerivatives {
    pub dc_dn: f64,
    pub dc_dp: [f64; 3],
    pub dc_de: f64,
    pub da_dn: f64,
    pub da_dp: [f64; 3],
    pub da_de: f64,
}

/// Closed forms with `D = −E₀k + 9N₀²/(10a₀) < 0`:
/// `∂c/∂N = E₀/D`, `∂c/∂E = −(3/5)N₀/D`, `∂a/∂N = −(3/5)N₀/D`,
/// `∂a/∂E = (2/5)a₀k/D`, and zero momentum derivatives.
pub fn coefficient_derivatives(ge: &GlobalEquilibrium) -> Result<CoefficientDerivatives> {
    let denom = -positivity(ge)?;
    let (a0, n0, e0, k) = (ge.a0(), ge.density(), ge.energy(), ge.k_exact());
    Ok(CoefficientDerivatives {
        dc_dn: e0 / denom,
        dc_dp: [0.0; 3],
        dc_de: -0.6 * n0 / denom,
        da_dn: -0.6 * n0 / denom,
        da_dp: [0.0; 3],
        da_de: 0.4 * a0 * k / denom,
    })
}

/// A macroscopic field to differentiate the equilibrium against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Density,
    /// Momentum component `0..3`.
    Momentum(usize),
    Energy,
}

/// Pointwise `∂𝓕/∂N`, `∂𝓕/∂P_i` or `∂𝓕/∂E` at the global equilibrium, on the grid.
pub fn equilibrium_gateaux(ge: &GlobalEquilibrium, direction: Direction) -> Result<Vec<f64>> {
    let d = coefficient_derivatives(ge)?;
    let grid = ge.grid();
    let w = ge.weight_sqrt();
    let (a0, n0) = (ge.a0(), ge.density());
    let field = |j: usize| -> f64 {
        let mm = w[j] * w[j];
        let p2 = grid.speed2(j);
        match direction {
            Direction::Density => -(d.da_dn * p2 + d.dc_dn) * mm,
            Direction::Momentum(i) => 2.0 * a0 / n0 * grid.node(j)[i] * mm,
            Direction::Energy => -(d.da_de * p2 + d.dc_de) * mm,
        }
    };
    if let Direction::Momentum(i) = direction {
        if i >= 3 {
            return Err(Error::InvalidConfig("momentum direction index must be 0, 1 or 2"));
        }
    }
    Ok((0..grid.len()).map(field).collect())
}

/// Equilibrium parameters of the transitional fields
/// `(N_θ, P_θ, E_θ) = (θN + (1−θ)N₀, θP, θE + (1−θ)E₀)`.
pub fn transition_params(ge: &GlobalEquilibrium, target: &Moments, theta: f64) -> Result<FermiParams> {
    let blend = Moments::new(
        theta * target.density + (1.0 - theta) * ge.density(),
        target.momentum.map(|p| theta * p),
        theta * target.energy + (1.0 - theta) * ge.energy(),
    );
    invert_equilibrium(&blend)
}

/// Result of the micro-macro split of a phase-space perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroMacro {
    /// `ā(x) = ⟨f, w⟩`.
    pub a_bar: Vec<f64>,
    /// `b̄_i(x) = ⟨f, p_i w⟩`.
    pub b_bar: Vec<[f64; 3]>,
    /// `c̄(x) = ⟨f, |p|² w⟩`.
    pub c_bar: Vec<f64>,
    /// `(ā + b̄·p + c̄|p|²) w` per cell.
    pub macroscopic: Vec<f64>,
    /// `f` minus the macroscopic part.
    pub microscopic: Vec<f64>,
}

/// Splits `f` (cell-major, `n_x × n_v`) into the polynomial-weighted
/// macroscopic part and the remainder. The split is not an orthogonal
/// projection: decomposing the microscopic part again does not give zero.
pub fn micro_macro_decompose(f: &[f64], ge: &GlobalEquilibrium) -> Result<MicroMacro> {
    let grid = ge.grid();
    let n_v = grid.len();
    if !f.len().is_multiple_of(n_v) {
        return Err(Error::ShapeMismatch {
            expected: n_v * (f.len() / n_v + 1),
            got: f.len(),
        });
    }
    let w = ge.weight_sqrt();
    let n_x = f.len() / n_v;
    let mut out = MicroMacro {
        a_bar: Vec::with_capacity(n_x),
        b_bar: Vec::with_capacity(n_x),
        c_bar: Vec::with_capacity(n_x),
        macroscopic: Vec::with_capacity(f.len()),
        microscopic: Vec::with_capacity(f.len()),
    };
    for cell in f.chunks_exact(n_v) {
        let mut acc = [0.0; 5];
        for j in 0..n_v {
            let fw = cell[j] * w[j];
            let p = grid.node(j);
            acc[0] += fw;
            acc[1] += fw * p[0];
            acc[2] += fw * p[1];
            acc[3] += fw * p[2];
            acc[4] += fw * grid.speed2(j);
        }
        let acc = acc.map(|v| v * grid.weight());
        let b = [acc[1], acc[2], acc[3]];
        for j in 0..n_v {
            let p = grid.node(j);
            let poly = acc[0] + b[0] * p[0] + b[1] * p[1] + b[2] * p[2] + acc[4] * grid.speed2(j);
            let macro_part = poly * w[j];
            out.macroscopic.push(macro_part);
            out.microscopic.push(cell[j] - macro_part);
        }
        out.a_bar.push(acc[0]);
        out.b_bar.push(b);
        out.c_bar.push(acc[4]);
    }
    Ok(out)
}
