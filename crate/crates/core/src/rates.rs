//! Time-varying arrival intensity λ(t).
//!
//! Three families are supported: a constant rate, a sinusoid `a + b·sin(ωt + φ)`
//! and a right-continuous piecewise-constant rate. Each has a closed-form
//! integral and a cheap majorant, which is what exact thinning needs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    Constant(f64),
    Sinusoid { a: f64, b: f64, omega: f64, phi: f64 },
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

impl RateFunction {
    pub fn constant(a: f64) -> Result<Self> {
        finite("a", a)?;
        if a < 0.0 {
            return Err(Error::NegativeIntensity(format!("constant rate {a}")));
        }
        Ok(Self::Constant(a))
    }

    /// `a + b·sin(omega·t + phi)`; requires `a ≥ |b|`.
    pub fn sinusoid(a: f64, b: f64, omega: f64, phi: f64) -> Result<Self> {
        finite("a", a)?;
        finite("b", b)?;
        finite("omega", omega)?;
        finite("phi", phi)?;
        if a < b.abs() {
            return Err(Error::NegativeIntensity(format!(
                "sinusoid requires a >= |b|, got a={a}, b={b}"
            )));
        }
        Ok(Self::Sinusoid { a, b, omega, phi })
    }

    /// `values[0]` holds on `[0, breaks[0])`, `values[i]` on `[breaks[i-1], breaks[i])`
    /// and the last value from the last breakpoint on.
    pub fn piecewise(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "piecewise rate needs {} values for {} breakpoints, got {}",
                breaks.len() + 1,
                breaks.len(),
                values.len()
            )));
        }
        for &b in &breaks {
            finite("breakpoint", b)?;
            if b < 0.0 {
                return Err(Error::InvalidParameter(format!("negative breakpoint {b}")));
            }
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "piecewise breakpoints must be strictly ascending".into(),
            ));
        }
        for &v in &values {
            finite("value", v)?;
            if v < 0.0 {
                return Err(Error::NegativeIntensity(format!("piecewise value {v}")));
            }
        }
        Ok(Self::Piecewise { breaks, values })
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            Self::Constant(a) => Some(*a),
            Self::Sinusoid { a, b, .. } if *b == 0.0 => Some(*a),
            Self::Piecewise { values, .. } if values.windows(2).all(|w| w[0] == w[1]) => {
                Some(values[0])
            }
            _ => None,
        }
    }

    /// Index of the piece active at `t` (right-continuous).
    fn piece(breaks: &[f64], t: f64) -> usize {
        breaks.partition_point(|&b| b <= t)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        match self {
            Self::Constant(a) => *a,
            Self::Sinusoid { a, b, omega, phi } => {
                // a >= |b| holds, clamp round-off at the minimum
                (a + b * libm::sin(omega * t + phi)).max(0.0)
            }
            Self::Piecewise { breaks, values } => values[Self::piece(breaks, t)],
        }
    }

    fn check_interval(t0: f64, t1: f64) -> Result<()> {
        if !(t0 >= 0.0) {
            return Err(Error::NegativeTime(t0));
        }
        if !(t0 <= t1) {
            return Err(Error::ReversedInterval(t0, t1));
        }
        Ok(())
    }

    /// A majorant of λ on `[t0, t1]`: exact for constant and piecewise rates,
    /// `a + |b|` for the sinusoid.
    pub fn upper_bound(&self, t0: f64, t1: f64) -> Result<f64> {
        Self::check_interval(t0, t1)?;
        Ok(match self {
            Self::Constant(a) => *a,
            Self::Sinusoid { a, b, .. } => a + b.abs(),
            Self::Piecewise { breaks, values } => {
                let lo = Self::piece(breaks, t0);
                let hi = Self::piece(breaks, t1);
                values[lo..=hi].iter().copied().fold(0.0, f64::max)
            }
        })
    }

    /// Closed-form `∫_{t0}^{t1} λ(s) ds`.
    pub fn integrate(&self, t0: f64, t1: f64) -> Result<f64> {
        Self::check_interval(t0, t1)?;
        Ok(match self {
            Self::Constant(a) => a * (t1 - t0),
            Self::Sinusoid { a, b, omega, phi } => {
                if *omega == 0.0 {
                    (a + b * libm::sin(*phi)) * (t1 - t0)
                } else {
                    a * (t1 - t0)
                        - b / omega * (libm::cos(omega * t1 + phi) - libm::cos(omega * t0 + phi))
                }
            }
            Self::Piecewise { breaks, values } => {
                let mut total = 0.0;
                let mut left = t0;
                let mut i = Self::piece(breaks, t0);
                while left < t1 {
                    let right = breaks.get(i).copied().unwrap_or(f64::INFINITY).min(t1);
                    total += values[i] * (right - left);
                    left = right;
                    i += 1;
                }
                total
            }
        })
    }

    /// Look-ahead window for thinning starting at `t`: returns the window end
    /// and a majorant valid on it. The end is infinite when the bound is global.
    pub(crate) fn majorant_window(&self, t: f64) -> (f64, f64) {
        match self {
            Self::Constant(a) => (f64::INFINITY, *a),
            Self::Sinusoid { a, b, .. } => (f64::INFINITY, a + b.abs()),
            Self::Piecewise { breaks, values } => {
                let i = Self::piece(breaks, t);
                (breaks.get(i).copied().unwrap_or(f64::INFINITY), values[i])
            }
        }
    }
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, xs: &[f64]) -> fmt::Result {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{x}")?;
            }
            Ok(())
        }
        match self {
            Self::Constant(a) => write!(f, "constant {a}"),
            Self::Sinusoid { a, b, omega, phi } => {
                write!(f, "sinusoid a={a} b={b} omega={omega} phi={phi}")
            }
            Self::Piecewise { breaks, values } => {
                f.write_str("piecewise breaks=")?;
                list(f, breaks)?;
                f.write_str(" values=")?;
                list(f, values)
            }
        }
    }
}

fn parse_num(key: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidParameter(format!("malformed number for {key}: '{s}'")))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| parse_num(key, x)).collect()
}

impl FromStr for RateFunction {
    type Err = Error;

    /// Parses the serialized form produced by `Display`, e.g. `constant 1`,
    /// `sinusoid a=0.5 b=0.3 omega=1 phi=0` or `piecewise breaks=1 values=2,4`.
    /// `omega` defaults to 1 and `phi` to 0.
    fn from_str(s: &str) -> Result<Self> {
        let mut words = s.split_whitespace();
        let kind = words
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty rate description".into()))?;
        let rest: Vec<&str> = words.collect();
        let named = |allowed: &[&str]| -> Result<Vec<(String, String)>> {
            let mut out: Vec<(String, String)> = Vec::new();
            for w in &rest {
                let (k, v) = w.split_once('=').ok_or_else(|| {
                    Error::InvalidParameter(format!("expected key=value in rate, got '{w}'"))
                })?;
                if !allowed.contains(&k) {
                    return Err(Error::InvalidParameter(format!(
                        "unknown {kind} parameter '{k}'"
                    )));
                }
                if out.iter().any(|(seen, _)| seen == k) {
                    return Err(Error::InvalidParameter(format!("duplicate parameter '{k}'")));
                }
                out.push((k.into(), v.into()));
            }
            Ok(out)
        };
        let get = |params: &[(String, String)], key: &str| -> Option<String> {
            params.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
        };
        match kind {
            "constant" => match rest.as_slice() {
                [v] => Self::constant(parse_num("constant", v.strip_prefix("a=").unwrap_or(v))?),
                _ => Err(Error::InvalidParameter(
                    "constant rate takes exactly one value".into(),
                )),
            },
            "sinusoid" => {
                let p = named(&["a", "b", "omega", "phi"])?;
                let req = |key: &str| -> Result<f64> {
                    let v = get(&p, key).ok_or_else(|| {
                        Error::InvalidParameter(format!("sinusoid is missing '{key}'"))
                    })?;
                    parse_num(key, &v)
                };
                let opt = |key: &str, default: f64| -> Result<f64> {
                    get(&p, key).map_or(Ok(default), |v| parse_num(key, &v))
                };
                Self::sinusoid(req("a")?, req("b")?, opt("omega", 1.0)?, opt("phi", 0.0)?)
            }
            "piecewise" => {
                let p = named(&["breaks", "values"])?;
                let breaks = parse_list("breaks", &get(&p, "breaks").unwrap_or_default())?;
                let values = parse_list(
                    "values",
                    &get(&p, "values").ok_or_else(|| {
                        Error::InvalidParameter("piecewise is missing 'values'".into())
                    })?,
                )?;
                Self::piecewise(breaks, values)
            }
            other => Err(Error::InvalidParameter(format!("unknown rate kind '{other}'"))),
        }
    }
}
