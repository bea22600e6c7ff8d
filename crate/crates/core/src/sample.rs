use serde::{Deserialize, Serialize};
use std::fmt;

/// How a trace value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Truncated Fourier–Galerkin eigenvalues.
    Galerkin,
    /// Single Duhamel term `trace W_k`.
    DuhamelTerm(usize),
    /// `Σ_{k≤K} trace W_k`.
    DuhamelSum(usize),
    /// Second Duhamel term through the flat parametrix (eigenbasis) form.
    SpectralW2,
    /// `(e^{-ct} − 1) Θ_n(t)` for a constant potential.
    ShiftLaw,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Galerkin => write!(f, "galerkin"),
            Method::DuhamelTerm(k) => write!(f, "w{k}"),
            Method::DuhamelSum(k) => write!(f, "duhamel_k{k}"),
            Method::SpectralW2 => write!(f, "spectral_w2"),
            Method::ShiftLaw => write!(f, "shift_law"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let bad = || crate::Error::Parse(format!("unknown method tag `{s}`"));
        match s {
            "galerkin" => Ok(Method::Galerkin),
            "spectral_w2" => Ok(Method::SpectralW2),
            "shift_law" => Ok(Method::ShiftLaw),
            _ => {
                if let Some(k) = s.strip_prefix("duhamel_k") {
                    k.parse().map(Method::DuhamelSum).map_err(|_| bad())
                } else if let Some(k) = s.strip_prefix('w') {
                    k.parse().map(Method::DuhamelTerm).map_err(|_| bad())
                } else {
                    Err(bad())
                }
            }
        }
    }
}

/// One evaluation of a relative heat trace or of a single Duhamel term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub value: f64,
    pub method: Method,
    /// Galerkin cutoff or lattice truncation radius, where one applies.
    pub cutoff: Option<u32>,
    /// Certified (or, for partial sums, fitted) bound on the truncation error.
    pub tail_bound: f64,
    /// Change between the last two quadrature refinements, plus summation rounding
    /// for partial sums.
    pub quadrature_error: f64,
    /// Quadrature or simplex rule used, if any.
    pub rule: Option<String>,
    /// Non-fatal diagnostics, e.g. an unconverged refinement.
    pub flags: Vec<String>,
}

impl TraceSample {
    pub fn new(t: f64, value: f64, method: Method) -> Self {
        Self {
            t,
            value,
            method,
            cutoff: None,
            tail_bound: 0.0,
            quadrature_error: 0.0,
            rule: None,
            flags: Vec::new(),
        }
    }

    /// Tail bound plus quadrature error.
    pub fn error_bound(&self) -> f64 {
        self.tail_bound + self.quadrature_error
    }
}
