//! Forward-mode scalar automatic differentiation over a flat parameter
//! vector, plus the smooth min/max reductions used by the soft robustness
//! semantics.
//!
//! A [`DiffScalar`] carries a value and its gradient with respect to the
//! lifted parameter vector (the flattened control sequence during planning).
//! The parameter dimension here is small (2T = 20 with the default horizon),
//! so forward mode over a dense gradient vector is both simple and fast
//! enough; no tape is needed.

use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("domain violation in `{op}`: {detail}")]
    Domain { op: &'static str, detail: String },
}

/// Selects exact or log-sum-exp min/max when reducing collections of margins.
///
/// `Hard` picks the extreme element exactly (with a subgradient for
/// [`DiffScalar`]); `Smooth` uses the log-sum-exp relaxation with the given
/// temperature, which keeps gradients alive across all arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinMaxMode {
    Hard,
    Smooth { temperature: f64 },
}

/// Scalar arithmetic shared by plain `f64` evaluation and [`DiffScalar`]
/// differentiation. Generic code (dynamics rollout, STL robustness, the
/// smooth reward) is written once against this trait.
pub trait Scalar:
    Clone
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(x: f64) -> Self;
    fn value(&self) -> f64;
    /// `k * self` with a plain constant, avoiding a constant allocation.
    fn scale(&self, k: f64) -> Self;
    /// `self + k` with a plain constant.
    fn shift(&self, k: f64) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn tanh(&self) -> Self;
    fn sigmoid(&self) -> Self;
    fn atan(&self) -> Self;
    fn tan(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    /// Absolute value with the subgradient convention `d|x|/dx = sign(x)`
    /// (zero at the origin).
    fn abs(&self) -> Self;
    /// `max(self, k)`; gradient is zero on the clamped side.
    fn max_const(&self, k: f64) -> Self;

    /// Minimum of a non-empty slice. Hard mode returns the smallest element
    /// (first index wins ties); smooth mode evaluates
    /// `-tau * ln(sum_i exp(-x_i / tau))`, stabilised around the hard
    /// minimum. Reduction order is the slice order, so results are
    /// bit-deterministic.
    fn reduce_min(xs: &[Self], mode: MinMaxMode) -> Self {
        assert!(!xs.is_empty(), "reduce_min over empty slice");
        match mode {
            MinMaxMode::Hard => {
                let mut best = &xs[0];
                for x in &xs[1..] {
                    if x.value() < best.value() {
                        best = x;
                    }
                }
                best.clone()
            }
            MinMaxMode::Smooth { temperature } => {
                assert!(temperature > 0.0, "temperature must be positive");
                let m = xs.iter().map(Scalar::value).fold(f64::INFINITY, f64::min);
                let mut sum = Self::constant(0.0);
                for x in xs {
                    sum = sum + x.shift(-m).scale(-1.0 / temperature).exp();
                }
                sum.ln().scale(-temperature).shift(m)
            }
        }
    }

    /// Maximum counterpart of [`Scalar::reduce_min`]; smooth mode evaluates
    /// `tau * ln(sum_i exp(x_i / tau))`.
    fn reduce_max(xs: &[Self], mode: MinMaxMode) -> Self {
        assert!(!xs.is_empty(), "reduce_max over empty slice");
        match mode {
            MinMaxMode::Hard => {
                let mut best = &xs[0];
                for x in &xs[1..] {
                    if x.value() > best.value() {
                        best = x;
                    }
                }
                best.clone()
            }
            MinMaxMode::Smooth { temperature } => {
                assert!(temperature > 0.0, "temperature must be positive");
                let m = xs
                    .iter()
                    .map(Scalar::value)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut sum = Self::constant(0.0);
                for x in xs {
                    sum = sum + x.shift(-m).scale(1.0 / temperature).exp();
                }
                sum.ln().scale(temperature).shift(m)
            }
        }
    }
}

impl Scalar for f64 {
    fn constant(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn shift(&self, k: f64) -> Self {
        self + k
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn sigmoid(&self) -> Self {
        1.0 / (1.0 + f64::exp(-*self))
    }
    fn atan(&self) -> Self {
        f64::atan(*self)
    }
    fn tan(&self) -> Self {
        f64::tan(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn max_const(&self, k: f64) -> Self {
        f64::max(*self, k)
    }
}

/// A scalar value together with its gradient with respect to a flat
/// parameter vector. An empty gradient vector denotes an exact zero
/// gradient (constants), so constants never need to know the parameter
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffScalar {
    value: f64,
    grad: Vec<f64>,
}

impl DiffScalar {
    pub fn new_constant(value: f64) -> Self {
        Self {
            value,
            grad: Vec::new(),
        }
    }

    /// Lifts a parameter vector into independent differentiation variables;
    /// variable `i` is seeded with the unit gradient `e_i`.
    pub fn variables(values: &[f64]) -> Vec<DiffScalar> {
        let n = values.len();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut grad = vec![0.0; n];
                grad[i] = 1.0;
                DiffScalar { value: v, grad }
            })
            .collect()
    }

    /// Gradient of this scalar with respect to the full parameter vector,
    /// padded with zeros to `dim`. A scalar never touched by any lifted
    /// variable yields the zero vector.
    pub fn gradient(&self, dim: usize) -> Vec<f64> {
        let mut g = self.grad.clone();
        g.resize(dim, 0.0);
        g
    }

    fn unary(&self, value: f64, dvalue: f64) -> Self {
        Self {
            value,
            grad: self.grad.iter().map(|g| g * dvalue).collect(),
        }
    }

    fn binary(a: &Self, b: &Self, value: f64, da: f64, db: f64) -> Self {
        let n = a.grad.len().max(b.grad.len());
        let grad = (0..n)
            .map(|i| {
                let ga = a.grad.get(i).copied().unwrap_or(0.0);
                let gb = b.grad.get(i).copied().unwrap_or(0.0);
                da * ga + db * gb
            })
            .collect();
        Self { value, grad }
    }

    /// Division that reports a zero denominator instead of propagating
    /// non-finite values.
    pub fn try_div(&self, rhs: &DiffScalar) -> Result<DiffScalar, AutodiffError> {
        if rhs.value == 0.0 {
            return Err(AutodiffError::Domain {
                op: "div",
                detail: "zero denominator".to_string(),
            });
        }
        Ok(self.clone() / rhs.clone())
    }

    /// Natural logarithm that reports a non-positive argument.
    pub fn try_ln(&self) -> Result<DiffScalar, AutodiffError> {
        if self.value <= 0.0 {
            return Err(AutodiffError::Domain {
                op: "log",
                detail: format!("non-positive argument {}", self.value),
            });
        }
        Ok(Scalar::ln(self))
    }
}

impl Add for DiffScalar {
    type Output = DiffScalar;
    fn add(self, rhs: DiffScalar) -> DiffScalar {
        DiffScalar::binary(&self, &rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl Sub for DiffScalar {
    type Output = DiffScalar;
    fn sub(self, rhs: DiffScalar) -> DiffScalar {
        DiffScalar::binary(&self, &rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl Mul for DiffScalar {
    type Output = DiffScalar;
    fn mul(self, rhs: DiffScalar) -> DiffScalar {
        DiffScalar::binary(&self, &rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl Div for DiffScalar {
    type Output = DiffScalar;
    fn div(self, rhs: DiffScalar) -> DiffScalar {
        let v = self.value / rhs.value;
        DiffScalar::binary(
            &self,
            &rhs,
            v,
            1.0 / rhs.value,
            -self.value / (rhs.value * rhs.value),
        )
    }
}

impl Neg for DiffScalar {
    type Output = DiffScalar;
    fn neg(self) -> DiffScalar {
        self.unary(-self.value, -1.0)
    }
}

impl Scalar for DiffScalar {
    fn constant(x: f64) -> Self {
        DiffScalar::new_constant(x)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn scale(&self, k: f64) -> Self {
        self.unary(self.value * k, k)
    }
    fn shift(&self, k: f64) -> Self {
        DiffScalar {
            value: self.value + k,
            grad: self.grad.clone(),
        }
    }
    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }
    fn ln(&self) -> Self {
        self.unary(self.value.ln(), 1.0 / self.value)
    }
    fn tanh(&self) -> Self {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn sigmoid(&self) -> Self {
        let s = 1.0 / (1.0 + (-self.value).exp());
        self.unary(s, s * (1.0 - s))
    }
    fn atan(&self) -> Self {
        self.unary(self.value.atan(), 1.0 / (1.0 + self.value * self.value))
    }
    fn tan(&self) -> Self {
        let t = self.value.tan();
        self.unary(t, 1.0 + t * t)
    }
    fn sin(&self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }
    fn cos(&self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }
    fn abs(&self) -> Self {
        let sign = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.value.abs(), sign)
    }
    fn max_const(&self, k: f64) -> Self {
        if self.value >= k {
            self.clone()
        } else {
            DiffScalar::new_constant(k)
        }
    }
}

/// Smooth minimum `-tau * ln(sum_i exp(-x_i / tau))` of a non-empty slice.
pub fn smooth_min<S: Scalar>(xs: &[S], temperature: f64) -> S {
    S::reduce_min(xs, MinMaxMode::Smooth { temperature })
}

/// Smooth maximum `tau * ln(sum_i exp(x_i / tau))` of a non-empty slice.
pub fn smooth_max<S: Scalar>(xs: &[S], temperature: f64) -> S {
    S::reduce_max(xs, MinMaxMode::Smooth { temperature })
}
