//! Static element-wise deadzone nonlinearities applied to the rate-loop
//! adaptation signal.
//!
//! Three shapes are provided besides the identity:
//!
//! * `N1`: hard deadzone, zero on `[-s, s]` and the identity outside.
//! * `N2`: zero on `[-s1, s1]`, a cubic `alpha (x - s1)^3` up to
//!   `s2 = s1 + sqrt(1 / (3 alpha))`, then a unit-slope line. C¹ but offset
//!   from `y = x` beyond `s2`.
//! * `N3`: zero on `[-s1, s1]`, a Hermite cubic on `[s1, s2)`, and exactly
//!   `y = x` beyond `s2`. The cubic coefficients are solved once when the
//!   config is built.
//!
//! All shapes are odd and never amplify: `|N(x)| <= |x|`.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_S: f64 = 0.02;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_N3_S2: f64 = 0.1;

/// Cubic `c0 + c1 x + c2 x^2 + c3 x^3`, coefficients stored lowest order first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubic(pub [f64; 4]);

impl Cubic {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let [c0, c1, c2, c3] = self.0;
        ((c3 * x + c2) * x + c1) * x + c0
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let [_, c1, c2, c3] = self.0;
        (3.0 * c3 * x + 2.0 * c2) * x + c1
    }

    /// The polynomial `-p(-x)`.
    pub fn odd_mirror(&self) -> Cubic {
        let [c0, c1, c2, c3] = self.0;
        Cubic([-c0, c1, -c2, c3])
    }
}

/// Configured nonlinearity. Build through the checked constructors so the
/// derived quantities (`s2` for N2, cubic coefficients for N3) stay
/// consistent with the shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeadzoneSpec", into = "DeadzoneSpec")]
pub enum DeadzoneConfig {
    None,
    N1 {
        s: f64,
    },
    N2 {
        s1: f64,
        alpha: f64,
        s2: f64,
    },
    N3 {
        s1: f64,
        s2: f64,
        lower: Cubic,
        upper: Cubic,
    },
}

impl Default for DeadzoneConfig {
    fn default() -> Self {
        DeadzoneConfig::None
    }
}

impl DeadzoneConfig {
    pub fn n1(s: f64) -> Result<Self> {
        check_n1(s)?;
        Ok(DeadzoneConfig::N1 { s })
    }

    pub fn n2(s1: f64, alpha: f64) -> Result<Self> {
        check_n2(s1, alpha)?;
        Ok(DeadzoneConfig::N2 {
            s1,
            alpha,
            s2: n2_upper_knee(s1, alpha),
        })
    }

    pub fn n3(s1: f64, s2: f64) -> Result<Self> {
        let (lower, upper) = solve_cubic_coeffs(s1, s2)?;
        Ok(DeadzoneConfig::N3 {
            s1,
            s2,
            lower,
            upper,
        })
    }

    /// The variant at its default shape parameters.
    pub fn default_for(kind: DeadzoneKind) -> Self {
        match kind {
            DeadzoneKind::None => DeadzoneConfig::None,
            DeadzoneKind::N1 => DeadzoneConfig::N1 { s: DEFAULT_S },
            DeadzoneKind::N2 => DeadzoneConfig::n2(DEFAULT_S, DEFAULT_ALPHA).expect("valid defaults"),
            DeadzoneKind::N3 => DeadzoneConfig::n3(DEFAULT_S, DEFAULT_N3_S2).expect("valid defaults"),
        }
    }

    pub fn kind(&self) -> DeadzoneKind {
        match self {
            DeadzoneConfig::None => DeadzoneKind::None,
            DeadzoneConfig::N1 { .. } => DeadzoneKind::N1,
            DeadzoneConfig::N2 { .. } => DeadzoneKind::N2,
            DeadzoneConfig::N3 { .. } => DeadzoneKind::N3,
        }
    }

    /// Half-width of the zero band.
    pub fn width(&self) -> f64 {
        match *self {
            DeadzoneConfig::None => 0.0,
            DeadzoneConfig::N1 { s } => s,
            DeadzoneConfig::N2 { s1, .. } | DeadzoneConfig::N3 { s1, .. } => s1,
        }
    }

    /// Scalar evaluation. The config is valid by construction.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            DeadzoneConfig::None => x,
            DeadzoneConfig::N1 { s } => n1_unchecked(x, s),
            DeadzoneConfig::N2 { s1, alpha, s2 } => n2_unchecked(x, s1, alpha, s2),
            DeadzoneConfig::N3 { s1, s2, ref upper, .. } => n3_unchecked(x, s1, s2, upper),
        }
    }

    /// Element-wise application. Fails on the first non-finite entry.
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        z.iter()
            .enumerate()
            .map(|(index, &x)| {
                if x.is_finite() {
                    Ok(self.eval(x))
                } else {
                    Err(Error::NonFinite { index })
                }
            })
            .collect()
    }
}

/// Variant tag without parameters, used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadzoneKind {
    None,
    N1,
    N2,
    N3,
}

impl DeadzoneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeadzoneKind::None => "none",
            DeadzoneKind::N1 => "n1",
            DeadzoneKind::N2 => "n2",
            DeadzoneKind::N3 => "n3",
        }
    }
}

/// On-disk form of [`DeadzoneConfig`]: only the user-set parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
pub enum DeadzoneSpec {
    None,
    N1 {
        #[serde(default = "default_s")]
        s: f64,
    },
    N2 {
        #[serde(default = "default_s")]
        s1: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    N3 {
        #[serde(default = "default_s")]
        s1: f64,
        #[serde(default = "default_n3_s2")]
        s2: f64,
    },
}

fn default_s() -> f64 {
    DEFAULT_S
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_n3_s2() -> f64 {
    DEFAULT_N3_S2
}

impl TryFrom<DeadzoneSpec> for DeadzoneConfig {
    type Error = Error;

    fn try_from(spec: DeadzoneSpec) -> Result<Self> {
        match spec {
            DeadzoneSpec::None => Ok(DeadzoneConfig::None),
            DeadzoneSpec::N1 { s } => DeadzoneConfig::n1(s),
            DeadzoneSpec::N2 { s1, alpha } => DeadzoneConfig::n2(s1, alpha),
            DeadzoneSpec::N3 { s1, s2 } => DeadzoneConfig::n3(s1, s2),
        }
    }
}

impl From<DeadzoneConfig> for DeadzoneSpec {
    fn from(cfg: DeadzoneConfig) -> Self {
        match cfg {
            DeadzoneConfig::None => DeadzoneSpec::None,
            DeadzoneConfig::N1 { s } => DeadzoneSpec::N1 { s },
            DeadzoneConfig::N2 { s1, alpha, .. } => DeadzoneSpec::N2 { s1, alpha },
            DeadzoneConfig::N3 { s1, s2, .. } => DeadzoneSpec::N3 { s1, s2 },
        }
    }
}

fn check_n1(s: f64) -> Result<()> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::invalid("s", format!("must be finite and >= 0, got {s}")));
    }
    Ok(())
}

fn check_n2(s1: f64, alpha: f64) -> Result<()> {
    if !(s1.is_finite() && s1 > 0.0) {
        return Err(Error::invalid("s1", format!("must be finite and > 0, got {s1}")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid("alpha", format!("must be finite and > 0, got {alpha}")));
    }
    Ok(())
}

/// Knee where the N2 cubic reaches unit slope.
pub fn n2_upper_knee(s1: f64, alpha: f64) -> f64 {
    s1 + (1.0 / (3.0 * alpha)).sqrt()
}

pub fn eval_n1(x: f64, s: f64) -> Result<f64> {
    check_n1(s)?;
    Ok(n1_unchecked(x, s))
}

pub fn eval_n2(x: f64, s1: f64, alpha: f64) -> Result<f64> {
    check_n2(s1, alpha)?;
    Ok(n2_unchecked(x, s1, alpha, n2_upper_knee(s1, alpha)))
}

/// Evaluates the N3 shape of `cfg`; other variants are rejected.
pub fn eval_n3(x: f64, cfg: &DeadzoneConfig) -> Result<f64> {
    match cfg {
        DeadzoneConfig::N3 { s1, s2, upper, .. } => Ok(n3_unchecked(x, *s1, *s2, upper)),
        other => Err(Error::invalid(
            "variant",
            format!("expected n3, got {}", other.kind().as_str()),
        )),
    }
}

#[inline]
fn n1_unchecked(x: f64, s: f64) -> f64 {
    if x.abs() <= s {
        0.0
    } else {
        x
    }
}

#[inline]
fn n2_unchecked(x: f64, s1: f64, alpha: f64, s2: f64) -> f64 {
    let h = s2 - s1;
    let knee_value = alpha * h * h * h;
    let slope = 3.0 * alpha * h * h;
    if x < -s2 {
        -knee_value + slope * (x + s2)
    } else if x < -s1 {
        let d = x + s1;
        alpha * d * d * d
    } else if x <= s1 {
        0.0
    } else if x <= s2 {
        let d = x - s1;
        alpha * d * d * d
    } else {
        knee_value + slope * (x - s2)
    }
}

/// Upper cubic expanded about `s1`, where its value and slope vanish, so
/// the output near the knee keeps the sign of `d = x - s1`.
#[inline]
fn n3_transition(d: f64, s1: f64, upper: &Cubic) -> f64 {
    let [_, _, c2, c3] = upper.0;
    (c3 * d + c2 + 3.0 * c3 * s1) * d * d
}

#[inline]
fn n3_unchecked(x: f64, s1: f64, s2: f64, upper: &Cubic) -> f64 {
    if x < -s2 {
        x
    } else if x < -s1 {
        -n3_transition(-x - s1, s1, upper)
    } else if x <= s1 {
        0.0
    } else if x < s2 {
        n3_transition(x - s1, s1, upper)
    } else {
        x
    }
}

/// Solves for the N3 transition cubics.
///
/// The lower cubic satisfies `p(-s1) = 0`, `p'(-s1) = 0`, `p(-s2) = -s2`,
/// `p'(-s2) = 1`; the upper one is its odd mirror, which meets the same
/// conditions at `+s1`, `+s2`.
pub fn solve_cubic_coeffs(s1: f64, s2: f64) -> Result<(Cubic, Cubic)> {
    if !(s1.is_finite() && s1 > 0.0) {
        return Err(Error::invalid("s1", format!("must be finite and > 0, got {s1}")));
    }
    if !(s2.is_finite() && s2 > s1) {
        return Err(Error::invalid("s2", format!("must be finite and > s1 = {s1}, got {s2}")));
    }
    // Rows: value and slope at -s1, value and slope at -s2.
    let a = Matrix4::new(
        1.0,
        -s1,
        s1 * s1,
        -s1 * s1 * s1,
        0.0,
        1.0,
        -2.0 * s1,
        3.0 * s1 * s1,
        1.0,
        -s2,
        s2 * s2,
        -s2 * s2 * s2,
        0.0,
        1.0,
        -2.0 * s2,
        3.0 * s2 * s2,
    );
    let b = Vector4::new(0.0, 0.0, -s2, 1.0);
    let c = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numeric("singular N3 coefficient system".into()))?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite N3 coefficients".into()));
    }
    let lower = Cubic([c[0], c[1], c[2], c[3]]);
    Ok((lower, lower.odd_mirror()))
}
