//! Radial reduction of the iterated Laplacian: the first-order ODE system,
//! the Laplacian of a radial function, and the regular series expansion at
//! the origin that seeds outward integration.

use crate::problem::{Order, OriginData, ProblemSpec, State};
use crate::PolyharmError;

/// `Δf(r) = f'' + (n-1) f'/r` for a radial function, given `(f, f', f'')`.
///
/// Rejects r = 0; the origin is handled by [`series_origin`].
pub fn radial_laplacian(f: f64, df: f64, d2f: f64, n: u32, r: f64) -> Result<f64, PolyharmError> {
    let _ = f;
    if r <= 0.0 {
        return Err(PolyharmError::OriginNotAllowed);
    }
    Ok(d2f + (f64::from(n) - 1.0) * df / r)
}

/// Right-hand side of the first-order system at radius `r > 0`:
///
/// ```text
/// u'' = w - (n-1)u'/r
/// w'' = v - (n-1)w'/r          (m = 3; for m = 2 the top level is w)
/// v'' = s·u^{-q} - (n-1)v'/r
/// ```
///
/// Returns the derivative of every stored component. Fails with
/// `ExtinctState` when `u <= 0`; the caller must have stopped by then.
pub fn rhs(spec: &ProblemSpec, r: f64, state: &State) -> Result<[f64; 6], PolyharmError> {
    rhs_forced(spec, r, state, 0.0)
}

/// Same system with an additive radial forcing on the top level, used by the
/// comparison harness: the top equation becomes `Δ^m u = s·u^{-q} + f(r)`.
pub fn rhs_forced(
    spec: &ProblemSpec,
    r: f64,
    state: &State,
    forcing: f64,
) -> Result<[f64; 6], PolyharmError> {
    if !(state.u > 0.0) {
        return Err(PolyharmError::ExtinctState { r });
    }
    if !(r > 0.0) {
        return Err(PolyharmError::OriginNotAllowed);
    }
    let k = spec.nf() - 1.0;
    let source = spec.s * state.u.powf(-spec.q) + forcing;
    let mut dy = [0.0; 6];
    dy[0] = state.du;
    dy[1] = state.w - k * state.du / r;
    dy[2] = state.dw;
    match spec.m {
        Order::Two => {
            dy[3] = source - k * state.dw / r;
        }
        Order::Three => {
            dy[3] = state.v - k * state.dw / r;
            dy[4] = state.dv;
            dy[5] = source - k * state.dv / r;
        }
    }
    Ok(dy)
}

/// Coefficients of the regular even expansion `u(r) = Σ u_{2k} r^{2k}`.
///
/// Forced coefficients use `Δ r^{2k} = 2k(2k+n-2) r^{2k-2}`; the trailing two
/// entries are the nonlinear corrections from
/// `u^{-q} ≈ a^{-q}(1 - q ε + q(q+1)ε²/2)` with `ε = (u₂r² + u₄r⁴)/a`.
fn series_coeffs(spec: &ProblemSpec, origin: &OriginData) -> Vec<f64> {
    let n = spec.nf();
    let a = origin.a;
    let b = origin.b;
    let u2 = b / (2.0 * n);
    let q = spec.q;
    let src = spec.s * a.powf(-q);
    // r² and r⁴ coefficients of the expanded source term
    let src2 = -spec.s * q * a.powf(-q - 1.0) * u2;
    let src4 =
        |u4: f64| spec.s * a.powf(-q) * (q * (q + 1.0) / 2.0 * (u2 / a).powi(2) - q * u4 / a);
    match spec.m {
        Order::Two => {
            let u4 = src / (8.0 * n * (n + 2.0));
            let u6 = src2 / (24.0 * (n + 2.0) * (n + 4.0));
            let u8 = src4(u4) / (48.0 * (n + 4.0) * (n + 6.0));
            vec![a, u2, u4, u6, u8]
        }
        Order::Three => {
            let c = origin.c_or_zero();
            let u4 = c / (8.0 * n * (n + 2.0));
            let u6 = src / (48.0 * n * (n + 2.0) * (n + 4.0));
            let u8 = src2 / (192.0 * (n + 2.0) * (n + 4.0) * (n + 6.0));
            let u10 = src4(u4) / (480.0 * (n + 4.0) * (n + 6.0) * (n + 8.0));
            vec![a, u2, u4, u6, u8, u10]
        }
    }
}

/// Apply `Δ r^{2k} = 2k(2k+n-2) r^{2k-2}` to even-series coefficients.
fn lap_coeffs(c: &[f64], n: f64) -> Vec<f64> {
    let mut out = vec![0.0; c.len().saturating_sub(1)];
    for (k, &ck) in c.iter().enumerate().skip(1) {
        let p = 2.0 * k as f64;
        out[k - 1] = ck * p * (p + n - 2.0);
    }
    out
}

/// `Δ^m` of the truncated series, evaluated exactly; the residual of the
/// series against the ODE is this minus `s·u^{-q}` of the series value.
pub fn series_top_laplacian(spec: &ProblemSpec, origin: &OriginData, r: f64) -> f64 {
    let n = spec.nf();
    let mut c = series_coeffs(spec, origin);
    for _ in 0..spec.m.m() {
        c = lap_coeffs(&c, n);
    }
    c.iter()
        .enumerate()
        .map(|(k, ck)| ck * r.powi(2 * k as i32))
        .sum()
}

/// Default start radius: `10^{-3}·max(1, sqrt(a/max(|b|, ε)))`, which
/// non-dimensionalizes against the solution's own curvature scale.
pub fn start_radius(origin: &OriginData) -> f64 {
    let curv = (origin.a / origin.b.abs().max(1e-30)).sqrt();
    1e-3 * curv.max(1.0).min(1e3)
}

/// Largest radius at which the truncated series is trusted to seed the
/// integrator.
pub fn series_max_radius(origin: &OriginData) -> f64 {
    10.0 * start_radius(origin)
}

/// Evaluate the truncated origin series and its term-by-term derivatives,
/// producing a full [`State`] at a small radius `0 < r <= series_max_radius`.
///
/// Truncation error is `O(r^{2m+2})` in u.
pub fn series_origin(
    spec: &ProblemSpec,
    origin: &OriginData,
    r: f64,
) -> Result<State, PolyharmError> {
    origin.validate(spec)?;
    if !(r > 0.0) {
        return Err(PolyharmError::OriginNotAllowed);
    }
    if r > series_max_radius(origin) {
        return Err(PolyharmError::InvalidSpec(format!(
            "series evaluation at r = {r} beyond trusted radius {}",
            series_max_radius(origin)
        )));
    }
    let n = spec.nf();
    let coeffs = series_coeffs(spec, origin);
    let eval = |c: &[f64], r: f64| -> (f64, f64) {
        let (mut f, mut df) = (0.0, 0.0);
        for (k, &ck) in c.iter().enumerate() {
            let p = 2 * k;
            f += ck * r.powi(p as i32);
            if p > 0 {
                df += ck * (p as f64) * r.powi(p as i32 - 1);
            }
        }
        (f, df)
    };
    let (u, du) = eval(&coeffs, r);
    let wc = lap_coeffs(&coeffs, n);
    let (w, dw) = eval(&wc, r);
    let mut state = State {
        u,
        du,
        w,
        dw,
        v: 0.0,
        dv: 0.0,
    };
    if spec.m == Order::Three {
        let vc = lap_coeffs(&wc, n);
        let (v, dv) = eval(&vc, r);
        state.v = v;
        state.dv = dv;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_of_r_squared_is_2n() {
        // f = r² in n = 5 at r = 1
        let lap = radial_laplacian(1.0, 2.0, 2.0, 5, 1.0).unwrap();
        assert_eq!(lap, 10.0);
    }

    #[test]
    fn fundamental_solution_is_harmonic() {
        // f = r^{-3} in n = 5 at r = 2
        let r: f64 = 2.0;
        let f = r.powi(-3);
        let df = -3.0 * r.powi(-4);
        let d2f = 12.0 * r.powi(-5);
        let lap = radial_laplacian(f, df, d2f, 5, r).unwrap();
        assert!(lap.abs() < 1e-15, "lap = {lap}");
    }

    #[test]
    fn laplacian_of_sqrt_profile() {
        // f = (1+r²)^{1/2} in n = 5 at r = 1 gives (5+4r²)(1+r²)^{-3/2} = 9·2^{-3/2}
        let r: f64 = 1.0;
        let f = (1.0 + r * r).sqrt();
        let df = r / f;
        let d2f = (1.0 + r * r).powf(-1.5);
        let lap = radial_laplacian(f, df, d2f, 5, r).unwrap();
        let expect = 9.0 * 2.0f64.powf(-1.5);
        assert!((lap - expect).abs() < 1e-14);
    }

    #[test]
    fn laplacian_rejects_origin() {
        assert!(radial_laplacian(1.0, 0.0, 0.0, 3, 0.0).is_err());
    }

    #[test]
    fn rhs_constant_probe() {
        // u ≡ a with vanishing derivatives: top-level second derivative is s·a^{-q}
        let spec = ProblemSpec::tri_harmonic(5, 3.0);
        let a: f64 = 2.0;
        let state = State {
            u: a,
            ..State::default()
        };
        let dy = rhs(&spec, 1.0, &state).unwrap();
        assert_eq!(dy[5], a.powf(-3.0));
        let spec2 = ProblemSpec::bi_harmonic(2, 1.0);
        let dy2 = rhs(&spec2, 1.0, &state).unwrap();
        assert_eq!(dy2[3], -a.powf(-1.0));
    }

    #[test]
    fn rhs_rejects_dead_state() {
        let spec = ProblemSpec::bi_harmonic(2, 2.0);
        let state = State {
            u: -0.1,
            ..State::default()
        };
        assert!(matches!(
            rhs(&spec, 1.0, &state),
            Err(PolyharmError::ExtinctState { .. })
        ));
    }

    #[test]
    fn series_leading_coefficients() {
        let spec = ProblemSpec::tri_harmonic(5, 11.0);
        let origin = OriginData::triharmonic(1.0, 0.0, 0.0);
        let s = series_origin(&spec, &origin, 1e-8).unwrap();
        assert!((s.u - 1.0).abs() < 1e-15);
        assert!(s.w.abs() < 1e-15);
        assert!(s.v.abs() < 1e-15);
    }

    #[test]
    fn series_biharmonic_2d_example() {
        // (n=2, m=2, s=-1, q=1), origin (1,1): u ≈ 1 + r²/4 - r⁴/64
        let spec = ProblemSpec::bi_harmonic(2, 1.0);
        let origin = OriginData::biharmonic(1.0, 1.0);
        let r = 1e-3;
        let s = series_origin(&spec, &origin, r).unwrap();
        let expect = 1.0 + r * r / 4.0 - r.powi(4) / 64.0;
        assert!((s.u - expect).abs() < 1e-18);
    }

    #[test]
    fn series_matches_closed_form_start() {
        // Tri-harmonic closed-form origin c_*(1, 5, -35) reproduces
        // c_*(1 + r²/2 - r⁴/8 + r⁶/16) to truncation order.
        let spec = ProblemSpec::tri_harmonic(5, 11.0);
        let c_star = crate::closed_form::TRIHARM_5D_AMPLITUDE;
        let origin = OriginData::triharmonic(c_star, 5.0 * c_star, -35.0 * c_star);
        for &r in &[1e-3, 1e-2] {
            let s = series_origin(&spec, &origin, r).unwrap();
            let t = r * r;
            let expect = c_star * (1.0 + t / 2.0 - t * t / 8.0 + t * t * t / 16.0);
            assert!(
                (s.u - expect).abs() < 1e-16 + c_star * t.powi(4),
                "r={r}: {} vs {}",
                s.u,
                expect
            );
        }
    }

    #[test]
    fn series_then_rhs_has_small_residual() {
        // The truncated series satisfies the ODE residual to O(r^{2m}) as r → 0.
        for (spec, origin) in [
            (
                ProblemSpec::tri_harmonic(5, 3.0),
                OriginData::triharmonic(1.0, 0.7, -0.4),
            ),
            (
                ProblemSpec::bi_harmonic(2, 2.0),
                OriginData::biharmonic(1.3, 0.5),
            ),
        ] {
            let m2 = 2.0 * spec.m.m() as f64;
            let ulp_floor = 1e-14 * origin.a.powf(-spec.q).max(1.0);
            for &r in &[1e-2, 1e-3, 1e-4] {
                let st = series_origin(&spec, &origin, r).unwrap();
                let lap = series_top_laplacian(&spec, &origin, r);
                let resid = lap - spec.s * st.u.powf(-spec.q);
                // scaled residual must stay bounded relative to r^{2m},
                // up to the f64 resolution of u^{-q} itself
                assert!(
                    resid.abs() / (r.powf(m2) + ulp_floor) < 10.0,
                    "r={r}: resid={resid:e}"
                );
            }
        }
    }
}
