use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong in the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input that must be finite was NaN or infinite.
    NonFinite { what: &'static str, value: f64 },
    /// Fermi-Dirac integral order outside {0, 2, 4, 6}.
    UnsupportedOrder(u32),
    /// `B` is outside `(0, β(−ln 3))`, where the equilibrium is not unique.
    OutOfBranch { b: f64, beta_max: f64 },
    /// `N ≤ 0` or `E − |P|²/N ≤ 0`.
    DegenerateMoments { density: f64, internal_energy: f64 },
    /// An iterative solve did not reach its tolerance.
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// `a = 0` with a negative exponent on a nonzero coefficient.
    SingularFrequency { a: f64 },
    /// The relaxation frequency came out negative or non-finite.
    NegativeFrequency { value: f64 },
    /// Relaxation-time coefficients violate their sign/sum constraints.
    InvalidTau(&'static str),
    /// Bad grid or configuration parameters.
    InvalidGrid(&'static str),
    InvalidConfig(&'static str),
    /// A state value broke a pointwise invariant (e.g. `F ∉ [0, 1]`).
    InvariantViolation {
        what: &'static str,
        index: usize,
        value: f64,
    },
    /// A spatial cell has moments outside the admissible branch.
    Inadmissible { cell: usize, b: f64, beta_max: f64 },
    /// `E₀k − 9N₀²/(10a₀) ≤ 0`.
    Positivity { value: f64 },
    /// The velocity grid does not resolve the global equilibrium.
    GridInadequate { relative_error: f64, tolerance: f64 },
    /// A perturbation amplitude pushes `F` outside `[0, 1]`.
    BoundViolation { amplitude: f64, min: f64, max: f64 },
    /// Too few usable samples for a fit.
    InsufficientData { needed: usize, got: usize },
    /// Array length does not match the grid.
    ShapeMismatch { expected: usize, got: usize },
}

impl Error {
    /// True for the errors that signal the standing assumption
    /// `0 < B(N, P, E) < β(−ln 3)` is violated.
    pub fn is_admissibility(&self) -> bool {
        matches!(self, Error::OutOfBranch { .. } | Error::Inadmissible { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite { what, value } => write!(f, "{what} must be finite, got {value}"),
            Error::UnsupportedOrder(k) => {
                write!(f, "unsupported Fermi-Dirac integral order {k} (allowed: 0, 2, 4, 6)")
            }
            Error::OutOfBranch { b, beta_max } => write!(
                f,
                "B = {b} outside the admissible branch 0 < B < beta(-ln 3) = {beta_max}"
            ),
            Error::DegenerateMoments {
                density,
                internal_energy,
            } => write!(
                f,
                "degenerate moments: N = {density}, E - |P|^2/N = {internal_energy} (both must be > 0)"
            ),
            Error::Convergence {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what} did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::SingularFrequency { a } => {
                write!(f, "relaxation frequency singular at a = {a} (C2 > 0 with m < 0)")
            }
            Error::NegativeFrequency { value } => {
                write!(f, "relaxation frequency 1/tau = {value} is negative or not finite")
            }
            Error::InvalidTau(msg) => write!(f, "invalid relaxation-time coefficients: {msg}"),
            Error::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvariantViolation { what, index, value } => {
                write!(f, "invariant violated: {what} at index {index} (value {value})")
            }
            Error::Inadmissible { cell, b, beta_max } => write!(
                f,
                "cell {cell} inadmissible: B = {b} not in (0, beta(-ln 3) = {beta_max})"
            ),
            Error::Positivity { value } => write!(
                f,
                "E0 k - 9 N0^2 / (10 a0) = {value} is not positive; global equilibrium is inadmissible"
            ),
            Error::GridInadequate {
                relative_error,
                tolerance,
            } => write!(
                f,
                "velocity grid inadequate: density quadrature error {relative_error:e} exceeds {tolerance:e}"
            ),
            Error::BoundViolation { amplitude, min, max } => write!(
                f,
                "perturbation amplitude {amplitude} gives F in [{min}, {max}], outside [0, 1]"
            ),
            Error::InsufficientData { needed, got } => {
                write!(f, "need at least {needed} samples, got {got}")
            }
            Error::ShapeMismatch { expected, got } => {
                write!(f, "array length {got} does not match grid size {expected}")
            }
        }
    }
}

impl core::error::Error for Error {}
