//! Outward integration of the radial system with an embedded Dormand-Prince
//! 5(4) pair, dense output, and event detection (extinction, blow-up).

use serde::{Deserialize, Serialize};

use crate::problem::{Order, OriginData, ProblemSpec, State};
use crate::radial::{self, rhs_forced};
use crate::PolyharmError;

/// Magnitude guard: |any component| beyond this declares blow-up. Tri-harmonic
/// seeds with Δ²u(0) > 0 grow quartically and would overflow sweeps otherwise.
pub const BLOWUP_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub r_max: f64,
    /// Extinction threshold as a fraction of u at the start radius.
    pub extinction_threshold: f64,
    pub max_steps: usize,
    /// Radius spacing of stored samples; 0 picks `r_max / 2048`.
    pub dense_output_stride: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            r_max: 100.0,
            extinction_threshold: 1e-6,
            max_steps: 10_000_000,
            dense_output_stride: 0.0,
        }
    }
}

impl IntegrationConfig {
    pub fn with_r_max(r_max: f64) -> Self {
        IntegrationConfig {
            r_max,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PolyharmError> {
        if !(1e-12..=1e-3).contains(&self.rel_tol) {
            return Err(PolyharmError::InvalidSpec(format!(
                "rel_tol {} outside [1e-12, 1e-3]",
                self.rel_tol
            )));
        }
        if !(self.extinction_threshold > 0.0 && self.extinction_threshold < 1e-2) {
            return Err(PolyharmError::InvalidSpec(format!(
                "extinction threshold {} outside (0, 1e-2)",
                self.extinction_threshold
            )));
        }
        if !(self.r_max > 0.0) {
            return Err(PolyharmError::InvalidSpec("r_max must be positive".into()));
        }
        Ok(())
    }

    pub fn stride(&self) -> f64 {
        if self.dense_output_stride > 0.0 {
            self.dense_output_stride
        } else {
            self.r_max / 2048.0
        }
    }
}

/// Why integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    ReachedRmax,
    /// u crossed the extinction threshold inside [last_alive, first_dead].
    Extinct { last_alive: f64, first_dead: f64 },
    BlowUp { r: f64 },
    StepFailure { r: f64 },
}

impl Termination {
    pub fn is_extinct(&self) -> bool {
        matches!(self, Termination::Extinct { .. })
    }

    pub fn extinction_radius(&self) -> Option<f64> {
        match self {
            Termination::Extinct { last_alive, .. } => Some(*last_alive),
            _ => None,
        }
    }
}

/// An integrated radial solution on a strictly increasing sample grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub spec: ProblemSpec,
    pub origin: Option<OriginData>,
    pub radii: Vec<f64>,
    pub states: Vec<State>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn r_first(&self) -> f64 {
        self.radii[0]
    }

    pub fn r_last(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn last_state(&self) -> &State {
        self.states.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// Index of the last sample with radius <= r.
    pub fn index_at(&self, r: f64) -> usize {
        match self
            .radii
            .binary_search_by(|x| x.partial_cmp(&r).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// State nearest to (at or below) radius r.
    pub fn state_at(&self, r: f64) -> &State {
        &self.states[self.index_at(r)]
    }
}

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type Vec6 = [f64; 6];

fn axpy(y: &Vec6, h: f64, coeffs: &[(f64, &Vec6)], dim: usize) -> Vec6 {
    let mut out = [0.0; 6];
    for i in 0..dim {
        let mut acc = y[i];
        for (a, k) in coeffs {
            acc += h * a * k[i];
        }
        out[i] = acc;
    }
    out
}

/// One Dormand-Prince 5(4) step with its stage values for dense output.
struct DopStep {
    r: f64,
    h: f64,
    y0: Vec6,
    y1: Vec6,
    k: [Vec6; 7],
}

impl DopStep {
    /// Dense output at fraction θ ∈ [0, 1] across the step (order 4).
    fn interp(&self, theta: f64, dim: usize) -> Vec6 {
        let h = self.h;
        let mut out = [0.0; 6];
        for i in 0..dim {
            let dy = self.y1[i] - self.y0[i];
            let r1 = self.y0[i];
            let r2 = dy;
            let r3 = h * self.k[0][i] - dy;
            let r4 = dy - h * self.k[6][i] - r3;
            let r5 = h * (D1 * self.k[0][i]
                + D3 * self.k[2][i]
                + D4 * self.k[3][i]
                + D5 * self.k[4][i]
                + D6 * self.k[5][i]
                + D7 * self.k[6][i]);
            out[i] = r1 + theta * (r2 + (1.0 - theta) * (r3 + theta * (r4 + (1.0 - theta) * r5)));
        }
        out
    }
}

struct Driver<'a> {
    spec: ProblemSpec,
    dim: usize,
    cfg: IntegrationConfig,
    forcing: Option<&'a dyn Fn(f64) -> f64>,
}

impl<'a> Driver<'a> {
    fn eval(&self, r: f64, y: &Vec6) -> Result<Vec6, PolyharmError> {
        let state = State::from_slice(&y[..self.dim]);
        let f = self.forcing.map(|f| f(r)).unwrap_or(0.0);
        rhs_forced(&self.spec, r, &state, f)
    }

    /// Attempt one step of size h; Err means a stage left the positive-u
    /// domain and the step must shrink.
    fn try_step(&self, r: f64, y0: &Vec6, h: f64) -> Result<(DopStep, f64), PolyharmError> {
        let k1 = self.eval(r, y0)?;
        let k2 = self.eval(r + 0.2 * h, &axpy(y0, h, &[(0.2, &k1)], self.dim))?;
        let k3 = self.eval(
            r + 0.3 * h,
            &axpy(y0, h, &[(3.0 / 40.0, &k1), (9.0 / 40.0, &k2)], self.dim),
        )?;
        let k4 = self.eval(
            r + 0.8 * h,
            &axpy(
                y0,
                h,
                &[
                    (44.0 / 45.0, &k1),
                    (-56.0 / 15.0, &k2),
                    (32.0 / 9.0, &k3),
                ],
                self.dim,
            ),
        )?;
        let k5 = self.eval(
            r + 8.0 / 9.0 * h,
            &axpy(
                y0,
                h,
                &[
                    (19372.0 / 6561.0, &k1),
                    (-25360.0 / 2187.0, &k2),
                    (64448.0 / 6561.0, &k3),
                    (-212.0 / 729.0, &k4),
                ],
                self.dim,
            ),
        )?;
        let k6 = self.eval(
            r + h,
            &axpy(
                y0,
                h,
                &[
                    (9017.0 / 3168.0, &k1),
                    (-355.0 / 33.0, &k2),
                    (46732.0 / 5247.0, &k3),
                    (49.0 / 176.0, &k4),
                    (-5103.0 / 18656.0, &k5),
                ],
                self.dim,
            ),
        )?;
        let y1 = axpy(
            y0,
            h,
            &[
                (35.0 / 384.0, &k1),
                (500.0 / 1113.0, &k3),
                (125.0 / 192.0, &k4),
                (-2187.0 / 6784.0, &k5),
                (11.0 / 84.0, &k6),
            ],
            self.dim,
        );
        let k7 = self.eval(r + h, &y1)?;
        // embedded 4th order difference
        let e = [
            35.0 / 384.0 - 5179.0 / 57600.0,
            0.0,
            500.0 / 1113.0 - 7571.0 / 16695.0,
            125.0 / 192.0 - 393.0 / 640.0,
            -2187.0 / 6784.0 + 92097.0 / 339200.0,
            11.0 / 84.0 - 187.0 / 2100.0,
            -1.0 / 40.0,
        ];
        let ks = [&k1, &k2, &k3, &k4, &k5, &k6, &k7];
        let mut err_sq = 0.0;
        for i in 0..self.dim {
            let mut ei = 0.0;
            for (c, k) in e.iter().zip(ks.iter()) {
                ei += c * k[i];
            }
            ei *= h;
            let sc = self.cfg.abs_tol + self.cfg.rel_tol * y0[i].abs().max(y1[i].abs());
            err_sq += (ei / sc) * (ei / sc);
        }
        let err = (err_sq / self.dim as f64).sqrt();
        Ok((
            DopStep {
                r,
                h,
                y0: *y0,
                y1,
                k: [k1, k2, k3, k4, k5, k6, k7],
            },
            err,
        ))
    }

    fn run(&self, r_start: f64, y_start: Vec6) -> Trajectory {
        let cfg = &self.cfg;
        let stride = cfg.stride();
        let u_threshold = cfg.extinction_threshold * y_start[0];
        let mut radii = vec![r_start];
        let mut states = vec![State::from_slice(&y_start[..self.dim])];
        let mut r = r_start;
        let mut y = y_start;
        let mut h = (1e-2 * r_start).min(stride);
        let mut next_emit = r_start + stride;
        let mut rejected = false;

        let termination = 'outer: loop {
            if radii.len() > 64 && states.len() > cfg.max_steps {
                break Termination::StepFailure { r };
            }
            let mut steps_taken = 0usize;
            // inner accept loop
            let step = loop {
                steps_taken += 1;
                if steps_taken > 64 || h < 1e-14 * r.max(1.0) {
                    // a collapsing step size during a terminal plunge is the
                    // touchdown itself: for steep profiles (u ~ (r₁-r)^σ with
                    // σ < 1) the derivatives blow up before u can reach the
                    // extinction threshold; r₁ - r <= u/|u'| bounds the gap
                    if y[0] < 0.05 * y_start[0] && y[1] < 0.0 {
                        break 'outer Termination::Extinct {
                            last_alive: r,
                            first_dead: r + (y[0] / y[1].abs()).max(f64::EPSILON * r),
                        };
                    }
                    break 'outer Termination::StepFailure { r };
                }
                if r + h > cfg.r_max {
                    h = cfg.r_max - r;
                }
                match self.try_step(r, &y, h) {
                    Ok((step, err)) if err <= 1.0 => {
                        let mut fac = 0.9 * err.powf(-0.2);
                        fac = fac.clamp(0.2, 5.0);
                        if rejected {
                            fac = fac.min(1.0);
                        }
                        rejected = false;
                        let h_done = step.h;
                        h = (h_done * fac).min(cfg.r_max);
                        break DopStep { h: h_done, ..step };
                    }
                    Ok((_, err)) => {
                        rejected = true;
                        h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                    }
                    Err(_) => {
                        // a stage left u > 0; shrink hard
                        rejected = true;
                        h *= 0.25;
                    }
                }
            };

            let r_end = step.r + step.h;
            let y_end = step.y1;

            // extinction event: u dips to the threshold inside this step
            let u_of = |theta: f64| step.interp(theta, self.dim)[0];
            if y_end[0] <= u_threshold || u_of(0.5) <= u_threshold {
                let (theta_lo, theta_hi) =
                    bisect_crossing(|t| u_of(t) - u_threshold, cfg.abs_tol.sqrt() / step.h);
                emit_until(
                    &step,
                    self.dim,
                    theta_lo,
                    &mut next_emit,
                    stride,
                    &mut radii,
                    &mut states,
                );
                // store the first sample at or below the threshold
                let r_dead = step.r + theta_hi * step.h;
                if *radii.last().unwrap() >= r_dead {
                    radii.pop();
                    states.pop();
                }
                radii.push(r_dead);
                states.push(State::from_slice(
                    &step.interp(theta_hi, self.dim)[..self.dim],
                ));
                break Termination::Extinct {
                    last_alive: step.r + theta_lo * step.h,
                    first_dead: r_dead,
                };
            }

            // blow-up guard; suspended during a terminal plunge, where the
            // singular source makes the derivative components huge while u
            // still has to fall to the extinction threshold
            let plunging = y_end[0] < 0.05 * y_start[0] && y_end[1] < 0.0;
            let mag = |theta: f64| -> f64 {
                let yy = step.interp(theta, self.dim);
                yy[..self.dim].iter().fold(0.0f64, |m, v| m.max(v.abs()))
            };
            if !plunging && (0..self.dim).any(|i| y_end[i].abs() > BLOWUP_GUARD) {
                let (theta_star, _) = bisect_crossing(|t| BLOWUP_GUARD - mag(t), 1e-6);
                let r_cross = step.r + theta_star * step.h;
                emit_until(
                    &step,
                    self.dim,
                    theta_star,
                    &mut next_emit,
                    stride,
                    &mut radii,
                    &mut states,
                );
                break Termination::BlowUp { r: r_cross };
            }

            emit_until(
                &step,
                self.dim,
                1.0,
                &mut next_emit,
                stride,
                &mut radii,
                &mut states,
            );
            // also keep the accepted step endpoint; near events the steps
            // shrink below the stride and the extra samples resolve the
            // boundary layer for downstream quadrature
            if r_end - *radii.last().unwrap() > 1e-12 * r_end.max(1.0) {
                radii.push(r_end);
                states.push(State::from_slice(&y_end[..self.dim]));
            }

            r = r_end;
            y = y_end;
            if r >= cfg.r_max * (1.0 - 1e-14) {
                break Termination::ReachedRmax;
            }
        };

        Trajectory {
            spec: self.spec,
            origin: None,
            radii,
            states,
            termination,
        }
    }
}

/// Emit stride samples from the dense output of `step` up to fraction
/// `theta_max`.
fn emit_until(
    step: &DopStep,
    dim: usize,
    theta_max: f64,
    next_emit: &mut f64,
    stride: f64,
    radii: &mut Vec<f64>,
    states: &mut Vec<State>,
) {
    let r_end = step.r + step.h * theta_max;
    while *next_emit <= r_end {
        let theta = (*next_emit - step.r) / step.h;
        radii.push(*next_emit);
        states.push(State::from_slice(&step.interp(theta, dim)[..dim]));
        *next_emit += stride;
    }
}

/// Bisect f over θ ∈ [0,1] for its first sign change from f(0) > 0; returns
/// the (still-positive, first-nonpositive) bracket of width <= `tol` in θ.
fn bisect_crossing(f: impl Fn(f64) -> f64, tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // f(1) may not have crossed if the dip happened mid-step
    if f(hi) > 0.0 {
        let mut probe = 0.5;
        while probe > 1e-6 && f(probe) > 0.0 {
            probe *= 0.5;
        }
        hi = probe.max(1e-6);
    }
    for _ in 0..200 {
        if hi - lo <= tol.max(1e-15) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Integrate outward from the origin series start.
pub fn integrate(
    spec: &ProblemSpec,
    origin: &OriginData,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, PolyharmError> {
    integrate_forced(spec, origin, cfg, None)
}

/// Integrate with an optional nonnegative radial forcing added to the top
/// level (`Δ^m u = s·u^{-q} + f(r)`), as the comparison harness requires.
pub fn integrate_forced(
    spec: &ProblemSpec,
    origin: &OriginData,
    cfg: &IntegrationConfig,
    forcing: Option<&dyn Fn(f64) -> f64>,
) -> Result<Trajectory, PolyharmError> {
    cfg.validate()?;
    origin.validate(spec)?;
    let r0 = radial::start_radius(origin);
    if cfg.r_max <= r0 {
        return Err(PolyharmError::InvalidSpec(format!(
            "r_max {} does not exceed the start radius {r0}",
            cfg.r_max
        )));
    }
    let state = radial::series_origin(spec, origin, r0)?;
    let driver = Driver {
        spec: *spec,
        dim: spec.m.dim(),
        cfg: *cfg,
        forcing,
    };
    let mut traj = driver.run(r0, state.to_array());
    traj.origin = Some(*origin);
    Ok(traj)
}

/// Integrate outward from a known state at `r_start` (power-law seeds start
/// at r = 1, where the profile is regular).
pub fn integrate_from_state(
    spec: &ProblemSpec,
    r_start: f64,
    state: &State,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, PolyharmError> {
    cfg.validate()?;
    if !(r_start > 0.0) {
        return Err(PolyharmError::OriginNotAllowed);
    }
    if !(state.u > 0.0) {
        return Err(PolyharmError::ExtinctState { r: r_start });
    }
    let driver = Driver {
        spec: *spec,
        dim: spec.m.dim(),
        cfg: *cfg,
        forcing: None,
    };
    Ok(driver.run(r_start, state.to_array()))
}

/// Quintic Hermite interpolation from (value, first, second derivative) at
/// both ends of an interval.
fn quintic(x0: f64, x1: f64, f: (f64, f64, f64), g: (f64, f64, f64), x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (f0, d0, s0) = f;
    let (f1, d1, s1) = g;
    // basis from the Taylor side at t=0 plus corrections matched at t=1
    let t2 = t * t;
    let t3 = t2 * t;
    let a0 = f0;
    let a1 = d0 * h;
    let a2 = 0.5 * s0 * h * h;
    // remaining three coefficients solve the t=1 value/derivative/second conditions
    let rhs0 = f1 - (a0 + a1 + a2);
    let rhs1 = d1 * h - (a1 + 2.0 * a2);
    let rhs2 = s1 * h * h - 2.0 * a2;
    let a3 = 10.0 * rhs0 - 4.0 * rhs1 + 0.5 * rhs2;
    let a4 = -15.0 * rhs0 + 7.0 * rhs1 - rhs2;
    let a5 = 6.0 * rhs0 - 3.0 * rhs1 + 0.5 * rhs2;
    a0 + a1 * t + a2 * t2 + a3 * t3 + a4 * t2 * t2 + a5 * t2 * t3
}

/// Third radial derivative of w, used for dense resampling of w'.
fn w3(spec: &ProblemSpec, r: f64, st: &State) -> f64 {
    let k = spec.nf() - 1.0;
    let w2 = st.w2(spec, r);
    let dtop = match spec.m {
        Order::Three => st.dv,
        Order::Two => -spec.s * spec.q * st.u.powf(-spec.q - 1.0) * st.du,
    };
    dtop - k * (w2 / r - st.dw / (r * r))
}

fn v3(spec: &ProblemSpec, r: f64, st: &State) -> f64 {
    let k = spec.nf() - 1.0;
    let v2 = st.v2(spec, r);
    let dtop = -spec.s * spec.q * st.u.powf(-spec.q - 1.0) * st.du;
    dtop - k * (v2 / r - st.dv / (r * r))
}

/// Dense-output resampling of a trajectory at arbitrary radii inside its
/// range, by quintic Hermite interpolation on the stored grid (the states
/// carry exact first and second derivatives of every component).
pub fn resample(traj: &Trajectory, radii: &[f64]) -> Result<Vec<State>, PolyharmError> {
    let spec = &traj.spec;
    let n = spec.nf();
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        if r < traj.r_first() - 1e-14 || r > traj.r_last() + 1e-14 {
            return Err(PolyharmError::OutOfRange(r));
        }
        let i = traj.index_at(r).min(traj.len() - 2);
        let (x0, x1) = (traj.radii[i], traj.radii[i + 1]);
        let (s0, s1) = (&traj.states[i], &traj.states[i + 1]);
        if (r - x0).abs() < 1e-15 * x0.max(1.0) {
            out.push(*s0);
            continue;
        }
        let mut st = State::default();
        st.u = quintic(
            x0,
            x1,
            (s0.u, s0.du, s0.u2(n, x0)),
            (s1.u, s1.du, s1.u2(n, x1)),
            r,
        );
        st.du = quintic(
            x0,
            x1,
            (s0.du, s0.u2(n, x0), s0.u3(n, x0)),
            (s1.du, s1.u2(n, x1), s1.u3(n, x1)),
            r,
        );
        st.w = quintic(
            x0,
            x1,
            (s0.w, s0.dw, s0.w2(spec, x0)),
            (s1.w, s1.dw, s1.w2(spec, x1)),
            r,
        );
        st.dw = quintic(
            x0,
            x1,
            (s0.dw, s0.w2(spec, x0), w3(spec, x0, s0)),
            (s1.dw, s1.w2(spec, x1), w3(spec, x1, s1)),
            r,
        );
        if spec.m == Order::Three {
            st.v = quintic(
                x0,
                x1,
                (s0.v, s0.dv, s0.v2(spec, x0)),
                (s1.v, s1.dv, s1.v2(spec, x1)),
                r,
            );
            st.dv = quintic(
                x0,
                x1,
                (s0.dv, s0.v2(spec, x0), v3(spec, x0, s0)),
                (s1.dv, s1.v2(spec, x1), v3(spec, x1, s1)),
                r,
            );
        }
        out.push(st);
    }
    Ok(out)
}

/// Cumulative integral of f over the trajectory grid from `xs[0]`, using the
/// Hermite-corrected trapezoid `∫ ≈ h(f₀+f₁)/2 + h²(f₀'-f₁')/12` (order 4).
pub fn cumquad_hermite(xs: &[f64], f: &[f64], df: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        let h = xs[i] - xs[i - 1];
        acc += 0.5 * h * (f[i - 1] + f[i]) + h * h / 12.0 * (df[i - 1] - df[i]);
        out.push(acc);
    }
    out
}

/// Normalized residual of the exact first integral of the planar q = 1
/// problem:
///
/// `Q(r) = u·rw' - u'·rw + ∫₀^r t w² dt + r²/2`
///
/// vanishes identically along solutions of `Δ²u = -u^{-1}` in n = 2. Returns
/// `max |Q(r)|/r²` over the sample grid.
pub fn first_integral_residual(traj: &Trajectory) -> Result<f64, PolyharmError> {
    let spec = &traj.spec;
    if spec.n != 2 || spec.m != Order::Two || (spec.q - 1.0).abs() > 1e-12 || spec.s != -1.0 {
        return Err(PolyharmError::WrongSpec {
            expected: "(n=2, m=2, s=-1, q=1)".into(),
            got: format!("(n={}, m={:?}, s={}, q={})", spec.n, spec.m, spec.s, spec.q),
        });
    }
    let f: Vec<f64> = traj
        .radii
        .iter()
        .zip(&traj.states)
        .map(|(r, s)| r * s.w * s.w)
        .collect();
    let df: Vec<f64> = traj
        .radii
        .iter()
        .zip(&traj.states)
        .map(|(r, s)| s.w * s.w + 2.0 * r * s.w * s.dw)
        .collect();
    let cums = cumquad_hermite(&traj.radii, &f, &df);
    // the piece below the series start, by the same Hermite rule on [0, r0]
    // with w(0) estimated from the first sample
    let r0 = traj.r_first();
    let s0 = &traj.states[0];
    let w0 = s0.w - r0 * s0.dw;
    let head = 0.5 * r0 * f[0] + r0 * r0 / 12.0 * (w0 * w0 - df[0]);
    let mut worst: f64 = 0.0;
    for ((r, s), cum) in traj.radii.iter().zip(&traj.states).zip(&cums) {
        let q_val = s.u * r * s.dw - s.du * r * s.w + head + cum + 0.5 * r * r;
        worst = worst.max(q_val.abs() / (r * r));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{eval_closed_form, ClosedForm};

    fn tracking_error(traj: &Trajectory, cf: &ClosedForm) -> f64 {
        traj.radii
            .iter()
            .zip(&traj.states)
            .map(|(r, s)| {
                let exact = eval_closed_form(cf, *r).unwrap();
                (s.u - exact.u).abs() / exact.u
            })
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn tracks_triharm_closed_form() {
        let cf = ClosedForm::TriHarm5Dq11;
        let spec = cf.spec();
        let origin = cf.origin().unwrap();
        let cfg = IntegrationConfig::with_r_max(100.0);
        let traj = integrate(&spec, &origin, &cfg).unwrap();
        assert_eq!(traj.termination, Termination::ReachedRmax);
        let err = tracking_error(&traj, &cf);
        assert!(err < 1e-6, "tracking error {err:e}");
    }

    #[test]
    fn tracks_biharm_closed_form() {
        let cf = ClosedForm::BiHarm3Dq7;
        let traj = integrate(
            &cf.spec(),
            &cf.origin().unwrap(),
            &IntegrationConfig::with_r_max(100.0),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::ReachedRmax);
        let err = tracking_error(&traj, &cf);
        assert!(err < 1e-6, "tracking error {err:e}");
    }

    #[test]
    fn power_law_seed_stays_on_branch() {
        let cf = ClosedForm::PowerLaw { q: 2.0 };
        let state = eval_closed_form(&cf, 1.0).unwrap();
        let traj =
            integrate_from_state(&cf.spec(), 1.0, &state, &IntegrationConfig::with_r_max(100.0))
                .unwrap();
        assert_eq!(traj.termination, Termination::ReachedRmax);
        let err = tracking_error(&traj, &cf);
        assert!(err < 1e-6, "tracking error {err:e}");
    }

    #[test]
    fn small_2d_seed_goes_extinct() {
        let spec = ProblemSpec::bi_harmonic(2, 2.0);
        let origin = OriginData::biharmonic(1.0, 0.1);
        let cfg = IntegrationConfig::with_r_max(1000.0);
        let traj = integrate(&spec, &origin, &cfg).unwrap();
        match traj.termination {
            Termination::Extinct {
                last_alive,
                first_dead,
            } => {
                assert!(last_alive > 0.0 && first_dead >= last_alive);
                // event correctness: all earlier samples stay above threshold
                let thresh = cfg.extinction_threshold * traj.states[0].u;
                for (i, s) in traj.states.iter().enumerate() {
                    if i + 1 < traj.len() {
                        assert!(s.u > thresh);
                    }
                }
                let last = traj.last_state();
                assert!(last.u <= thresh, "u at event: {}", last.u);
                assert!(last.u > 0.0);
                assert!((first_dead - last_alive) <= cfg.abs_tol.sqrt() * 1.01);
            }
            t => panic!("expected extinction, got {t:?}"),
        }
    }

    #[test]
    fn quartic_seed_hits_blowup_guard() {
        let spec = ProblemSpec::tri_harmonic(5, 2.0);
        let origin = OriginData::triharmonic(1.0, 0.0, 1.0);
        let mut cfg = IntegrationConfig::with_r_max(1e6);
        cfg.rel_tol = 1e-8;
        let traj = integrate(&spec, &origin, &cfg).unwrap();
        assert!(
            matches!(traj.termination, Termination::BlowUp { .. }),
            "{:?}",
            traj.termination
        );
        let last = traj.last_state();
        assert!(last.u <= BLOWUP_GUARD * 1.001);
    }

    #[test]
    fn tolerance_controls_tracking_error() {
        // dropping rel_tol by 16x must improve closed-form tracking by >= 4x
        let cf = ClosedForm::TriHarm5Dq11;
        let spec = cf.spec();
        let origin = cf.origin().unwrap();
        let mut cfg = IntegrationConfig::with_r_max(10.0);
        cfg.rel_tol = 1e-6;
        cfg.abs_tol = 1e-9;
        let coarse = tracking_error(&integrate(&spec, &origin, &cfg).unwrap(), &cf);
        cfg.rel_tol = 1e-6 / 16.0;
        cfg.abs_tol = 1e-9 / 16.0;
        let fine = tracking_error(&integrate(&spec, &origin, &cfg).unwrap(), &cf);
        assert!(
            fine * 4.0 <= coarse,
            "fine {fine:e} vs coarse {coarse:e} did not gain 4x"
        );
    }

    #[test]
    fn sample_grid_spacing_follows_stride() {
        let cf = ClosedForm::BiHarm3Dq7;
        let mut cfg = IntegrationConfig::with_r_max(50.0);
        cfg.dense_output_stride = 0.05;
        let traj = integrate(&cf.spec(), &cf.origin().unwrap(), &cfg).unwrap();
        for pair in traj.radii.windows(2) {
            assert!(pair[1] > pair[0]);
            assert!(pair[1] - pair[0] <= 2.0 * 0.05 + 1e-12);
        }
    }

    #[test]
    fn resample_reproduces_knots_and_closed_form() {
        let cf = ClosedForm::TriHarm5Dq11;
        let traj = integrate(
            &cf.spec(),
            &cf.origin().unwrap(),
            &IntegrationConfig::with_r_max(10.0),
        )
        .unwrap();
        // knots reproduce exactly
        let idx = traj.len() / 2;
        let at_knot = resample(&traj, &[traj.radii[idx]]).unwrap();
        assert_eq!(at_knot[0], traj.states[idx]);
        // off-grid point matches the analytic value
        let r = 2.0f64.sqrt();
        let st = resample(&traj, &[r]).unwrap()[0];
        let exact = eval_closed_form(&cf, r).unwrap();
        assert!((st.u - exact.u).abs() / exact.u < 1e-6);
        assert!((st.w - exact.w).abs() / exact.w.abs() < 1e-6);
        // empty request, empty answer
        assert!(resample(&traj, &[]).unwrap().is_empty());
        // out of range is an error
        assert!(matches!(
            resample(&traj, &[traj.r_last() + 1.0]),
            Err(PolyharmError::OutOfRange(_))
        ));
    }

    #[test]
    fn first_integral_vanishes_on_solutions() {
        let spec = ProblemSpec::bi_harmonic(2, 1.0);
        for (a, b) in [(1.0, 0.5), (2.0, 1.0), (0.7, 2.0)] {
            let origin = OriginData::biharmonic(a, b);
            let mut cfg = IntegrationConfig::with_r_max(20.0);
            cfg.dense_output_stride = 20.0 / 4096.0;
            let traj = integrate(&spec, &origin, &cfg).unwrap();
            let resid = first_integral_residual(&traj).unwrap();
            assert!(resid < 1e-6, "(a,b)=({a},{b}): residual {resid:e}");
        }
    }

    #[test]
    fn first_integral_detects_corruption() {
        let spec = ProblemSpec::bi_harmonic(2, 1.0);
        let origin = OriginData::biharmonic(1.0, 0.5);
        let mut traj = integrate(&spec, &origin, &IntegrationConfig::with_r_max(20.0)).unwrap();
        for s in &mut traj.states {
            s.w += 1e-3;
        }
        let resid = first_integral_residual(&traj).unwrap();
        assert!(resid >= 1e-4, "perturbed residual {resid:e}");
    }

    #[test]
    fn first_integral_rejects_wrong_spec() {
        let spec = ProblemSpec::bi_harmonic(3, 7.0);
        let cf = ClosedForm::BiHarm3Dq7;
        let traj = integrate(
            &spec,
            &cf.origin().unwrap(),
            &IntegrationConfig::with_r_max(5.0),
        )
        .unwrap();
        assert!(matches!(
            first_integral_residual(&traj),
            Err(PolyharmError::WrongSpec { .. })
        ));
    }

    #[test]
    fn radial_consistency_along_samples() {
        // the transport equations hold at stored samples: integrating u' with
        // the Hermite rule reproduces u to within the step tolerance
        let cf = ClosedForm::TriHarm5Dq11;
        let cfg = IntegrationConfig::with_r_max(10.0);
        let traj = integrate(&cf.spec(), &cf.origin().unwrap(), &cfg).unwrap();
        let n = traj.spec.nf();
        for i in 1..traj.len() {
            let (r0, r1) = (traj.radii[i - 1], traj.radii[i]);
            let (s0, s1) = (&traj.states[i - 1], &traj.states[i]);
            let h = r1 - r0;
            let inc = 0.5 * h * (s0.du + s1.du) + h * h / 12.0 * (s0.u2(n, r0) - s1.u2(n, r1));
            let defect = (s1.u - s0.u - inc).abs();
            let tol = 10.0 * cfg.rel_tol * s1.u.abs().max(1.0) + h.powi(5) * s1.w.abs();
            assert!(defect <= tol, "defect {defect:e} at r={r1}");
        }
    }
}
