//! κ-exponential family and the logit/control-cost kernels built on it.
//!
//! Everything here is a pure function of its arguments. The crate-private
//! `Form` methods used in the O(N²) solver loops skip argument validation;
//! the public entry points validate.

use crate::error::{Error, Result};

/// Exponent clamp for the κ = 0 branch.
const EXP_CLAMP: f64 = 700.0;

/// Probabilities passed to the closed-form cost are clamped into
/// `[COST_CLAMP, 1 - COST_CLAMP]`.
pub const COST_CLAMP: f64 = 1e-12;

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::domain(format!("kappa must lie in [0, 1], got {kappa}")));
    }
    Ok(())
}

/// κ-exponential `e_κ(z)`.
///
/// `(κz + √(κ²z² + 1))^(1/κ)` for κ > 0 and `exp(z)` for κ = 0.
pub fn kappa_exp(z: f64, kappa: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::domain(format!("kappa_exp argument must be finite, got {z}")));
    }
    check_kappa(kappa)?;
    Ok(Form::of(kappa).exp(z))
}

/// κ-logarithm `l_κ(z)`, the inverse of [`kappa_exp`].
pub fn kappa_log(z: f64, kappa: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::domain(format!("kappa_log needs a finite positive argument, got {z}")));
    }
    check_kappa(kappa)?;
    Ok(Form::of(kappa).log(z))
}

/// Generalized logit rate `1 / (1 + e_κ((u_from - u_to) / η))`.
pub fn logit_rate(u_from: f64, u_to: f64, kl: &KappaLogit) -> f64 {
    kl.logit_rate(u_from, u_to)
}

/// Specialised evaluation path for the κ values that show up in practice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Form {
    Exp,
    Half,
    One,
    General(f64),
}

impl Form {
    pub(crate) fn of(kappa: f64) -> Self {
        if kappa == 0.0 {
            Form::Exp
        } else if kappa == 0.5 {
            Form::Half
        } else if kappa == 1.0 {
            Form::One
        } else {
            Form::General(kappa)
        }
    }

    /// `e_κ(a)` for `a >= 0`.
    #[inline(always)]
    fn exp_nonneg(self, a: f64) -> f64 {
        match self {
            Form::Exp => a.min(EXP_CLAMP).exp(),
            Form::Half => {
                let q = 0.5 * a + (0.25 * a * a + 1.0).sqrt();
                q * q
            }
            Form::One => a + (a * a + 1.0).sqrt(),
            Form::General(k) => ((k * a).asinh() / k).min(EXP_CLAMP).exp(),
        }
    }

    /// `e_κ(z)`; negative arguments go through `e_κ(z) e_κ(-z) = 1`, which
    /// avoids cancellation in `κz + √(κ²z² + 1)` for large negative `z`.
    #[inline(always)]
    pub(crate) fn exp(self, z: f64) -> f64 {
        if z >= 0.0 {
            self.exp_nonneg(z)
        } else {
            1.0 / self.exp_nonneg(-z)
        }
    }

    #[inline]
    pub(crate) fn log(self, z: f64) -> f64 {
        match self {
            Form::Exp => z.ln(),
            // (z^κ - z^-κ) / 2κ = sinh(κ ln z) / κ
            Form::Half => 2.0 * (0.5 * z.ln()).sinh(),
            Form::One => 0.5 * (z - 1.0 / z),
            Form::General(k) => (k * z.ln()).sinh() / k,
        }
    }

    /// `1 / (1 + e_κ(y))` for `y >= 0`, the smaller rate of a pair.
    #[inline(always)]
    pub(crate) fn small_rate(self, y: f64) -> f64 {
        1.0 / (1.0 + self.exp_nonneg(y))
    }
}

/// Shape parameter κ and noise intensity η of the generalized logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaLogit {
    kappa: f64,
    eta: f64,
    form: Form,
}

impl KappaLogit {
    pub fn new(kappa: f64, eta: f64) -> Result<Self> {
        check_kappa(kappa)?;
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::domain(format!("eta must be positive and finite, got {eta}")));
        }
        Ok(Self { kappa, eta, form: Form::of(kappa) })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub(crate) fn form(&self) -> Form {
        self.form
    }

    /// True when the control cost has a closed form (κ ∈ {0, 0.5, 1}).
    pub fn has_closed_form_cost(&self) -> bool {
        !matches!(self.form, Form::General(_))
    }

    /// `e_κ(z)` without argument validation.
    pub fn exp(&self, z: f64) -> f64 {
        self.form.exp(z)
    }

    pub fn log(&self, z: f64) -> Result<f64> {
        kappa_log(z, self.kappa)
    }

    pub fn logit_rate(&self, u_from: f64, u_to: f64) -> f64 {
        1.0 / (1.0 + self.form.exp((u_from - u_to) / self.eta))
    }

    /// Closed-form control cost `F(u)`, normalised so that `F(1/2) = 0`.
    ///
    /// `u` is clamped into `[1e-12, 1 - 1e-12]`; values outside `[0, 1]`
    /// are rejected.
    pub fn cost(&self, u: f64) -> Result<f64> {
        let u = clamp_probability(u)?;
        let v = 1.0 - u;
        let scaled = match self.form {
            Form::Exp => v * (-u).ln_1p() + u * u.ln() + std::f64::consts::LN_2,
            Form::Half => 1.0 - 2.0 * (u * v).sqrt(),
            Form::One => -(2.0 * (u * v).sqrt()).ln(),
            Form::General(_) => return Err(Error::UnsupportedKappa(self.kappa)),
        };
        Ok(self.eta * scaled)
    }

    /// Control cost by numerical integration of `F'`, valid for every κ.
    ///
    /// Integrates in the log-odds variable `s = ln((1-v)/v)`, where the
    /// integrand `l_κ(e^s) v(1-v)` is smooth and decays for κ < 1.
    pub fn cost_quadrature(&self, u: f64) -> Result<f64> {
        let u = clamp_probability(u)?;
        let s_end = ((1.0 - u) / u).ln();
        let form = self.form;
        let integrand = |s: f64| {
            let v = 1.0 / (1.0 + s.exp());
            form.log(s.exp()) * v * (1.0 - v)
        };
        Ok(self.eta * adaptive_simpson(&integrand, 0.0, s_end, 1e-13))
    }

    /// Cost used by the MFG solver: closed form when available, otherwise
    /// quadrature if `allow_quadrature` is set.
    pub fn cost_with(&self, u: f64, allow_quadrature: bool) -> Result<f64> {
        match self.cost(u) {
            Err(Error::UnsupportedKappa(_)) if allow_quadrature => self.cost_quadrature(u),
            other => other,
        }
    }

    /// `F'(u) = -η l_κ((1 - u) / u)`.
    pub fn cost_derivative(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("cost derivative needs u in (0, 1), got {u}")));
        }
        Ok(-self.eta * self.form.log((1.0 - u) / u))
    }

    /// `(F')⁻¹(z) = 1 / (1 + e_κ(-z / η))`.
    pub fn cost_prime_inv(&self, z: f64) -> f64 {
        1.0 / (1.0 + self.form.exp(-z / self.eta))
    }
}

fn clamp_probability(u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("cost needs u in (0, 1), got {u}")));
    }
    Ok(u.clamp(COST_CLAMP, 1.0 - COST_CLAMP))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}
