//! Fermi-Dirac radial integrals and the function β.
//!
//! For `k ∈ {0, 2, 4, 6}` the two integral families are
//!
//! ```text
//! I_k(c) = ∫₀^∞ r^k / (e^{r²+c} + 1) dr
//! J_k(c) = ∫₀^∞ r^k e^{r²+c} / (e^{r²+c} + 1)² dr
//! ```
//!
//! and β is the moment ratio of the unit Fermi-Dirac distribution,
//! `β(c) = 4πI₂ / (4πI₄)^{3/5}`. β is strictly decreasing on `[−ln 3, ∞)`;
//! [`beta_inverse`] inverts it there and rejects everything else.
//!
//! For `c > 0` all integrals are accumulated with the factor `e^{c}` pulled out
//! so that β and its logarithmic derivative stay finite far into the
//! Maxwell-Boltzmann regime.

use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, exp, log, pow, sqrt};
use once_cell::race::OnceBox;

use crate::{Error, Result};

/// `ln 3`; the admissible branch of β is `c > −ln 3`.
pub const LN_3: f64 = 1.098_612_288_668_109_8;

/// Lower endpoint of the monotone branch of β.
pub const BRANCH_POINT: f64 = -LN_3;

/// Orders supported by [`fd_integral`].
pub const ORDERS: [u32; 4] = [0, 2, 4, 6];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegralKind {
    /// `I_k`: plain Fermi-Dirac weight `1/(e^{r²+c}+1)`.
    Plain,
    /// `J_k`: derivative weight `e^{r²+c}/(e^{r²+c}+1)²`.
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureScheme {
    GaussLegendre,
    Simpson,
}

/// A composite quadrature rule on `[0, R(c)]`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    scheme: QuadratureScheme,
    panels: usize,
    /// Gauss-Legendre abscissae/weights on `[-1, 1]`, or Simpson offsets/weights on `[0, 1]`.
    nodes: Vec<(f64, f64)>,
}

impl QuadratureRule {
    /// Composite Gauss-Legendre with `panels` equal panels of `order` nodes each.
    pub fn gauss_legendre(panels: usize, order: usize) -> Self {
        assert!(panels > 0 && order > 0, "quadrature needs at least one node");
        Self {
            scheme: QuadratureScheme::GaussLegendre,
            panels,
            nodes: gauss_legendre_nodes(order),
        }
    }

    /// Composite Simpson with `intervals` subintervals (rounded up to even).
    pub fn simpson(intervals: usize) -> Self {
        let n = intervals.max(2) + intervals % 2;
        let h = 1.0 / n as f64;
        let nodes = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                (i as f64 * h, w * h / 3.0)
            })
            .collect();
        Self {
            scheme: QuadratureScheme::Simpson,
            panels: 1,
            nodes,
        }
    }

    /// The rule used by the free functions of this module: 6 panels × 64 nodes.
    pub fn standard() -> &'static QuadratureRule {
        static RULE: OnceBox<QuadratureRule> = OnceBox::new();
        RULE.get_or_init(|| alloc::boxed::Box::new(QuadratureRule::gauss_legendre(6, 64)))
    }

    pub fn scheme(&self) -> QuadratureScheme {
        self.scheme
    }

    pub fn node_count(&self) -> usize {
        self.panels * self.nodes.len()
    }

    /// Truncation radius: `R(c) = √max(0, 36 − min(c, 0)) + 6`.
    pub fn cutoff(c: f64) -> f64 {
        sqrt((36.0 - c.min(0.0)).max(0.0)) + 6.0
    }

    /// Integrates `f` over `[lo, hi]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let mut total = 0.0;
        self.for_each_node(lo, hi, |r, w| total += w * f(r));
        total
    }

    fn for_each_node<F: FnMut(f64, f64)>(&self, lo: f64, hi: f64, mut visit: F) {
        let width = (hi - lo) / self.panels as f64;
        for panel in 0..self.panels {
            let start = lo + panel as f64 * width;
            match self.scheme {
                QuadratureScheme::GaussLegendre => {
                    let half = 0.5 * width;
                    let mid = start + half;
                    for &(x, w) in &self.nodes {
                        visit(mid + half * x, half * w);
                    }
                }
                QuadratureScheme::Simpson => {
                    for &(t, w) in &self.nodes {
                        visit(start + width * t, width * w);
                    }
                }
            }
        }
    }

    /// All eight integrals `I_k, J_k` for `k = 0, 2, 4, 6` in one sweep.
    pub fn sums(&self, c: f64) -> Result<FdSums> {
        if !c.is_finite() {
            return Err(Error::NonFinite { what: "c", value: c });
        }
        let scale = c.max(0.0);
        let shift = exp(-scale);
        let mut plain = [0.0; 4];
        let mut weighted = [0.0; 4];
        self.for_each_node(0.0, Self::cutoff(c), |r, w| {
            let r2 = r * r;
            let (s, d) = kernel(r2, c, scale, shift);
            let mut rk = w;
            for k in 0..4 {
                plain[k] += rk * s;
                weighted[k] += rk * d;
                rk *= r2;
            }
        });
        Ok(FdSums {
            scale,
            plain,
            weighted,
        })
    }

    pub fn fd_integral(&self, kind: IntegralKind, order: u32, c: f64) -> Result<f64> {
        let slot = order_slot(order)?;
        let sums = self.sums(c)?;
        let scaled = match kind {
            IntegralKind::Plain => sums.plain[slot],
            IntegralKind::Weighted => sums.weighted[slot],
        };
        Ok(scaled * exp(-sums.scale))
    }
}

/// `(1/(e^x+1), e^x/(e^x+1)²)` at `x = r² + c`, both multiplied by `e^{scale}`.
#[inline]
fn kernel(r2: f64, c: f64, scale: f64, shift: f64) -> (f64, f64) {
    if scale > 0.0 {
        // e^{c}/(e^{x}+1) = e^{-r²}/(1+e^{-x})
        let g = exp(-r2);
        let q = g * shift;
        let s = g / (1.0 + q);
        (s, s / (1.0 + q))
    } else {
        let x = r2 + c;
        if x >= 0.0 {
            let q = exp(-x);
            let s = q / (1.0 + q);
            (s, s / (1.0 + q))
        } else {
            let q = exp(x);
            let s = 1.0 / (1.0 + q);
            (s, q * s * s)
        }
    }
}

fn order_slot(order: u32) -> Result<usize> {
    match order {
        0 | 2 | 4 | 6 => Ok(order as usize / 2),
        _ => Err(Error::UnsupportedOrder(order)),
    }
}

/// `I_k`, `J_k` for `k = 0, 2, 4, 6`, each multiplied by `e^{scale}`.
#[derive(Clone, Copy, Debug)]
pub struct FdSums {
    /// `max(c, 0)`.
    pub scale: f64,
    pub plain: [f64; 4],
    pub weighted: [f64; 4],
}

impl FdSums {
    /// `ln(4πI₂)`, the log of the unit-parameter density `∫ 1/(e^{|p|²+c}+1) dp`.
    pub fn log_density(&self) -> f64 {
        log(4.0 * PI * self.plain[1]) - self.scale
    }

    /// `ln(4πI₄)`, the log of the unit-parameter energy.
    pub fn log_energy(&self) -> f64 {
        log(4.0 * PI * self.plain[2]) - self.scale
    }

    /// `ln(4πJ₂)`, the log of `∫ e^{|p|²+c}/(e^{|p|²+c}+1)² dp`.
    pub fn log_density_derivative(&self) -> f64 {
        log(4.0 * PI * self.weighted[1]) - self.scale
    }

    pub fn beta(&self) -> f64 {
        let m0 = 4.0 * PI * self.plain[1];
        let m2 = 4.0 * PI * self.plain[2];
        m0 / pow(m2, 0.6) * exp(-0.4 * self.scale)
    }

    /// `β′(c) = (−M₂K + (9/10)M₀²) / M₂^{8/5}` with `M₀ = 4πI₂`, `M₂ = 4πI₄`, `K = 2πI₀`.
    pub fn beta_prime(&self) -> f64 {
        let m0 = 4.0 * PI * self.plain[1];
        let m2 = 4.0 * PI * self.plain[2];
        let k = 2.0 * PI * self.plain[0];
        (-m2 * k + 0.9 * m0 * m0) / pow(m2, 1.6) * exp(-0.4 * self.scale)
    }

    /// `β′/β`, free of the `e^{−c}` scale.
    pub fn log_beta_slope(&self) -> f64 {
        let m0 = 4.0 * PI * self.plain[1];
        let m2 = 4.0 * PI * self.plain[2];
        let k = 2.0 * PI * self.plain[0];
        (-m2 * k + 0.9 * m0 * m0) / (m2 * m0)
    }
}

/// Gauss-Legendre abscissae and weights on `[-1, 1]`.
fn gauss_legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    let mut nodes = Vec::with_capacity(n);
    let nf = n as f64;
    for i in 0..n {
        let mut x = cos(PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    nodes
}

/// `I_k(c)` or `J_k(c)` with the standard rule.
pub fn fd_integral(kind: IntegralKind, order: u32, c: f64) -> Result<f64> {
    QuadratureRule::standard().fd_integral(kind, order, c)
}

/// All integrals at `c` with the standard rule.
pub fn fd_sums(c: f64) -> Result<FdSums> {
    QuadratureRule::standard().sums(c)
}

pub fn beta(c: f64) -> Result<f64> {
    Ok(fd_sums(c)?.beta())
}

pub fn beta_prime(c: f64) -> Result<f64> {
    Ok(fd_sums(c)?.beta_prime())
}

/// The monotone branch of β: `[−ln 3, ∞)` with the cached endpoint value.
#[derive(Clone, Copy, Debug)]
pub struct BetaBranch {
    pub lower: f64,
    /// `β(−ln 3)`, the supremum of admissible `B`.
    pub beta_max: f64,
    pub decreasing: bool,
}

/// The branch descriptor, computed once.
pub fn beta_branch() -> &'static BetaBranch {
    static BRANCH: OnceBox<BetaBranch> = OnceBox::new();
    BRANCH.get_or_init(|| {
        let beta_max = beta(BRANCH_POINT).expect("beta is finite at -ln 3");
        alloc::boxed::Box::new(BetaBranch {
            lower: BRANCH_POINT,
            beta_max,
            decreasing: true,
        })
    })
}

/// `β(−ln 3)`.
pub fn beta_max() -> f64 {
    beta_branch().beta_max
}

const INVERSE_MAX_ITER: usize = 200;

/// Solves `β(c) = B` for the unique `c ∈ (−ln 3, ∞)`.
///
/// Newton on `ln β(c) − ln B` inside a bracket `[lo, hi]` whose upper end is
/// doubled until `β(hi) < B`; an iterate that leaves the bracket, or a slope
/// with `|β′| < 1e-14`, falls back to bisection.
pub fn beta_inverse(b: f64) -> Result<f64> {
    let beta_max = beta_max();
    if !b.is_finite() || b <= 0.0 || b >= beta_max {
        return Err(Error::OutOfBranch { b, beta_max });
    }
    let target = log(b);

    let mut lo = BRANCH_POINT;
    let mut hi = 1.0;
    loop {
        let s = fd_sums(hi)?;
        if s.beta() < b {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 4096.0 {
            return Err(Error::Convergence {
                what: "beta_inverse bracket",
                iterations: 0,
                residual: s.beta() - b,
            });
        }
    }

    // Maxwell-Boltzmann asymptote β ≈ π^{3/5}(3/2)^{-3/5} e^{-2c/5} as the first guess.
    let asymptote = 2.5 * (0.6 * log(PI) - 0.6 * log(1.5) - target);
    let mut c = if asymptote > lo && asymptote < hi {
        asymptote
    } else {
        0.5 * (lo + hi)
    };

    for iter in 0..INVERSE_MAX_ITER {
        let s = fd_sums(c)?;
        let beta_c = s.beta();
        let g = log(beta_c) - target;
        if g == 0.0 {
            return Ok(c);
        }
        if g > 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        let slope = s.log_beta_slope();
        let bisect = 0.5 * (lo + hi);
        let next = if (slope * beta_c).abs() < 1e-14 {
            bisect
        } else {
            let newton = c - g / slope;
            if newton > lo && newton < hi {
                newton
            } else {
                bisect
            }
        };
        let tol = 1e-15 * (1.0 + c.abs());
        if (next - c).abs() <= tol || hi - lo <= tol {
            let residual = (beta(next)? - b).abs();
            if residual <= 1e-10 * b {
                return Ok(next);
            }
            return Err(Error::Convergence {
                what: "beta_inverse",
                iterations: iter + 1,
                residual,
            });
        }
        c = next;
    }
    Err(Error::Convergence {
        what: "beta_inverse",
        iterations: INVERSE_MAX_ITER,
        residual: (beta(c)? - b).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson_oracle(k: i32, c: f64, weighted: bool) -> f64 {
        // independent brute force: 10⁶ Simpson intervals on [0, 12], naive integrand
        let n = 1_000_000;
        let h = 12.0 / n as f64;
        let f = |r: f64| {
            let e = exp(r * r + c);
            let base = if weighted { e / ((e + 1.0) * (e + 1.0)) } else { 1.0 / (e + 1.0) };
            pow(r, k as f64) * base
        };
        let mut s = f(0.0) + f(12.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = QuadratureRule::gauss_legendre(1, 8);
        let v = rule.integrate(0.0, 2.0, |x| x * x * x * x * x * x * x);
        assert!((v - 32.0).abs() < 1e-12);
        let w: f64 = gauss_legendre_nodes(64).iter().map(|&(_, w)| w).sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn plain_i0_matches_simpson_oracle() {
        let oracle = simpson_oracle(0, 0.0, false);
        let v = fd_integral(IntegralKind::Plain, 0, 0.0).unwrap();
        assert!((v - oracle).abs() / oracle < 1e-12, "{v} vs {oracle}");
    }

    #[test]
    fn maxwell_boltzmann_limit_of_i2() {
        let v = fd_integral(IntegralKind::Plain, 2, 30.0).unwrap();
        let mb = sqrt(PI) / 4.0 * exp(-30.0);
        assert!((v - mb).abs() / mb < 0.01);
    }

    #[test]
    fn weighted_j4_is_three_halves_i2() {
        let j4 = fd_integral(IntegralKind::Weighted, 4, 0.0).unwrap();
        let i2 = fd_integral(IntegralKind::Plain, 2, 0.0).unwrap();
        assert!((j4 - 1.5 * i2).abs() / j4 < 1e-10);
    }

    #[test]
    fn integration_by_parts_identities() {
        for i in 0..50 {
            let c = BRANCH_POINT + (20.0 - BRANCH_POINT) * i as f64 / 49.0;
            let s = fd_sums(c).unwrap();
            for (j, i_lower, factor) in [(1, 0, 0.5), (2, 1, 1.5), (3, 2, 2.5)] {
                let lhs = s.weighted[j];
                let rhs = factor * s.plain[i_lower];
                assert!((lhs - rhs).abs() / rhs < 1e-10, "c = {c}, slot {j}");
            }
        }
    }

    #[test]
    fn unsupported_order_and_nonfinite_c() {
        assert_eq!(
            fd_integral(IntegralKind::Plain, 3, 0.0),
            Err(Error::UnsupportedOrder(3))
        );
        assert!(matches!(
            fd_integral(IntegralKind::Plain, 2, f64::NAN),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn node_doubling_is_converged() {
        let coarse = QuadratureRule::gauss_legendre(6, 64);
        let fine = QuadratureRule::gauss_legendre(12, 64);
        for c in [BRANCH_POINT, -3.0, 0.0, 2.5, 15.0] {
            let a = coarse.sums(c).unwrap();
            let b = fine.sums(c).unwrap();
            for k in 0..4 {
                assert!((a.plain[k] - b.plain[k]).abs() / b.plain[k] < 1e-12);
                assert!((a.weighted[k] - b.weighted[k]).abs() / b.weighted[k] < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_tail_is_negligible() {
        for c in [-5.0, BRANCH_POINT, 0.0, 10.0] {
            let r_max = QuadratureRule::cutoff(c);
            let at = |r: f64| pow(r, 6.0) / (exp(r * r + c) + 1.0);
            let peak = (1..2000).map(|i| at(i as f64 * 0.005)).fold(0.0, f64::max);
            assert!(at(r_max) < 1e-16 * peak, "c = {c}");
        }
    }

    #[test]
    fn beta_values() {
        let mb = pow(PI, 0.6) * pow(1.5, -0.6) * exp(-0.4 * 40.0);
        let b40 = beta(40.0).unwrap();
        assert!((b40 - mb).abs() / mb < 0.01);

        let i2 = simpson_oracle(2, BRANCH_POINT, false);
        let i4 = simpson_oracle(4, BRANCH_POINT, false);
        let oracle = 4.0 * PI * i2 / pow(4.0 * PI * i4, 0.6);
        assert!((beta_max() - oracle).abs() / oracle < 1e-10);

        assert!(beta(0.0).unwrap() > beta(1.0).unwrap());
    }

    #[test]
    fn beta_prime_values() {
        assert!(beta_prime(BRANCH_POINT).unwrap() < 0.0);
        let h = 1e-5;
        let fd = (beta(2.0 + h).unwrap() - beta(2.0 - h).unwrap()) / (2.0 * h);
        let exact = beta_prime(2.0).unwrap();
        assert!((fd - exact).abs() / exact.abs() < 1e-6);
        let b40 = beta(40.0).unwrap();
        let d40 = beta_prime(40.0).unwrap();
        assert!((d40 + 0.4 * b40).abs() / (0.4 * b40) < 0.01);
    }

    #[test]
    fn beta_inverse_round_trips() {
        for c in [0.0, 5.0, BRANCH_POINT + 1e-3, 20.0, 100.0] {
            let got = beta_inverse(beta(c).unwrap()).unwrap();
            assert!((got - c).abs() < 1e-8, "{c} -> {got}");
        }
    }

    #[test]
    fn beta_inverse_rejects_out_of_branch() {
        let bm = beta_max();
        for b in [bm * 1.01, bm, 0.0, -1.0, f64::NAN] {
            match beta_inverse(b) {
                Err(Error::OutOfBranch { beta_max, .. }) => assert_eq!(beta_max, bm),
                other => panic!("expected out-of-branch for {b}, got {other:?}"),
            }
        }
    }

    #[test]
    fn claim_expression_nonpositive_on_branch() {
        for i in 0..60 {
            let c = BRANCH_POINT + i as f64 * 0.25;
            for j in 0..80 {
                let r = j as f64 * 0.05;
                let y = -3.0 * exp(r * r + 2.0 * c) + exp(r * r + c) + exp(c) - 3.0;
                assert!(y <= 1e-12, "c = {c}, r = {r}: {y}");
            }
        }
    }
}
