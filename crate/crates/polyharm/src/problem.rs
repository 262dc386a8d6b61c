//! Problem definition: the PDE instance, shooting data at the origin, and the
//! full radial state carried along a trajectory.

use serde::{Deserialize, Serialize};

use crate::PolyharmError;

/// Operator order of the iterated Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    /// Bi-harmonic, `Δ²u = s·u^{-q}`.
    Two,
    /// Tri-harmonic, `Δ³u = s·u^{-q}`.
    Three,
}

impl Order {
    pub fn m(self) -> usize {
        match self {
            Order::Two => 2,
            Order::Three => 3,
        }
    }

    /// Number of first-order state components: (u, u', w, w'[, v, v']).
    pub fn dim(self) -> usize {
        2 * self.m()
    }
}

/// One instance of `Δ^m u = s·u^{-q}` in dimension `n`, restricted to radial
/// solutions.
///
/// The sign `s` is stored explicitly: the bi-harmonic case carries `s = -1`
/// while the tri-harmonic case carries `s = +1`, and keeping it in the data
/// prevents silent sign bugs when switching orders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Space dimension, `n >= 2`.
    pub n: u32,
    /// Operator order.
    pub m: Order,
    /// Sign of the right-hand side `s·u^{-q}`, `+1` or `-1`.
    pub s: f64,
    /// Exponent of the negative power, `q > 0`.
    pub q: f64,
}

impl ProblemSpec {
    pub fn new(n: u32, m: Order, s: f64, q: f64) -> Result<Self, PolyharmError> {
        if n < 2 {
            return Err(PolyharmError::InvalidSpec(format!("n = {n} < 2")));
        }
        if !(q > 0.0) {
            return Err(PolyharmError::InvalidSpec(format!("q = {q} must be > 0")));
        }
        if s != 1.0 && s != -1.0 {
            return Err(PolyharmError::InvalidSpec(format!("s = {s} must be ±1")));
        }
        Ok(ProblemSpec { n, m, s, q })
    }

    /// Tri-harmonic instance `Δ³u = u^{-q}` in dimension `n`.
    pub fn tri_harmonic(n: u32, q: f64) -> Self {
        ProblemSpec::new(n, Order::Three, 1.0, q).expect("valid tri-harmonic spec")
    }

    /// Bi-harmonic instance `Δ²u = -u^{-q}` in dimension `n`.
    pub fn bi_harmonic(n: u32, q: f64) -> Self {
        ProblemSpec::new(n, Order::Two, -1.0, q).expect("valid bi-harmonic spec")
    }

    pub fn nf(&self) -> f64 {
        f64::from(self.n)
    }
}

/// Shooting parameters at the origin: `a = u(0)`, `b = Δu(0)` and, for the
/// tri-harmonic case, `c = Δ²u(0)`. Odd-order radial derivatives vanish at 0
/// for a regular radial solution and are not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginData {
    pub a: f64,
    pub b: f64,
    pub c: Option<f64>,
}

impl OriginData {
    pub fn biharmonic(a: f64, b: f64) -> Self {
        OriginData { a, b, c: None }
    }

    pub fn triharmonic(a: f64, b: f64, c: f64) -> Self {
        OriginData { a, b, c: Some(c) }
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<(), PolyharmError> {
        if !(self.a > 0.0) {
            return Err(PolyharmError::InvalidSpec(format!(
                "u(0) = {} must be positive",
                self.a
            )));
        }
        match (spec.m, self.c) {
            (Order::Three, None) => Err(PolyharmError::InvalidSpec(
                "tri-harmonic origin needs c = Δ²u(0)".into(),
            )),
            (Order::Two, Some(_)) => Err(PolyharmError::InvalidSpec(
                "bi-harmonic origin must not carry c".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn c_or_zero(&self) -> f64 {
        self.c.unwrap_or(0.0)
    }
}

/// Full radial state at one radius: `u`, `u'`, `w = Δu`, `w'` and, when m = 3,
/// `v = Δ²u`, `v'`. For m = 2 the `v` pair is unused and held at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub u: f64,
    pub du: f64,
    pub w: f64,
    pub dw: f64,
    pub v: f64,
    pub dv: f64,
}

impl State {
    pub fn from_slice(y: &[f64]) -> Self {
        let mut s = State::default();
        s.u = y[0];
        s.du = y[1];
        s.w = y[2];
        s.dw = y[3];
        if y.len() > 4 {
            s.v = y[4];
            s.dv = y[5];
        }
        s
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.u, self.du, self.w, self.dw, self.v, self.dv]
    }

    /// Second radial derivative of u, recovered from the transport equation
    /// `u'' = w - (n-1)u'/r`.
    pub fn u2(&self, n: f64, r: f64) -> f64 {
        self.w - (n - 1.0) * self.du / r
    }

    /// Third radial derivative: `u''' = w' - (n-1)(u''/r - u'/r²)`.
    pub fn u3(&self, n: f64, r: f64) -> f64 {
        let u2 = self.u2(n, r);
        self.dw - (n - 1.0) * (u2 / r - self.du / (r * r))
    }

    /// Second derivative of w: `w'' = (v or s·u^{-q}) - (n-1)w'/r`.
    pub fn w2(&self, spec: &ProblemSpec, r: f64) -> f64 {
        let top = match spec.m {
            Order::Three => self.v,
            Order::Two => spec.s * self.u.powf(-spec.q),
        };
        top - (spec.nf() - 1.0) * self.dw / r
    }

    /// Second derivative of v (m = 3 only): `v'' = s·u^{-q} - (n-1)v'/r`.
    pub fn v2(&self, spec: &ProblemSpec, r: f64) -> f64 {
        spec.s * self.u.powf(-spec.q) - (spec.nf() - 1.0) * self.dv / r
    }
}
