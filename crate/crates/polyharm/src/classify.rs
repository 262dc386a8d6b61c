//! Asymptotic growth classification of integrated trajectories.
//!
//! Surviving radial solutions separate into power-law `r^{4/(q+1)}`,
//! log-corrected, exactly linear, exactly quadratic, and exactly quartic
//! growth; the classifier fits the log-log slope on the tail window, then
//! disambiguates linear from quadratic through the second derivative carried
//! in the state rather than the slope fit.

use serde::{Deserialize, Serialize};

use crate::integrate::{cumquad_hermite, Termination, Trajectory};
use crate::problem::Order;
use crate::PolyharmError;

/// Log-log slope tolerance band around the class targets {4/(q+1), 1, 2, 4}.
pub const SLOPE_BAND: f64 = 0.15;
/// Minimum samples required inside the tail window.
pub const MIN_TAIL_SAMPLES: usize = 64;
/// A quadratic limit requires the drain `r·w'` to decay between octaves
/// (`|r w'(r)| <= 0.8 |r w'(r/2)|`). For a planar trajectory `r·w'` equals
/// minus the accumulated mass and never decays, so a pre-extinction
/// transient can never pass as settled quadratic growth.
pub const DRAIN_DECAY: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GrowthClass {
    Extinct { r_star: f64 },
    Power { exponent: f64, amplitude: f64 },
    LogCorrected { coefficient: f64 },
    Linear { alpha: f64 },
    Quadratic { half_rho: f64 },
    Quartic { limit: f64 },
    Undetermined,
}

impl GrowthClass {
    pub fn is_survivor(&self) -> bool {
        matches!(
            self,
            GrowthClass::Power { .. }
                | GrowthClass::LogCorrected { .. }
                | GrowthClass::Linear { .. }
                | GrowthClass::Quadratic { .. }
                | GrowthClass::Quartic { .. }
        )
    }

    /// Growth below quartic order, the hypothesis `u = o(r⁴)` of the
    /// sub-poly-harmonic lemmas.
    pub fn is_subquartic(&self) -> bool {
        matches!(
            self,
            GrowthClass::Power { .. }
                | GrowthClass::LogCorrected { .. }
                | GrowthClass::Linear { .. }
                | GrowthClass::Quadratic { .. }
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            GrowthClass::Extinct { .. } => "extinct",
            GrowthClass::Power { .. } => "power",
            GrowthClass::LogCorrected { .. } => "log-corrected",
            GrowthClass::Linear { .. } => "linear",
            GrowthClass::Quadratic { .. } => "quadratic",
            GrowthClass::Quartic { .. } => "quartic",
            GrowthClass::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthReport {
    pub class: GrowthClass,
    /// (r_lo, r_hi) of the tail fit window.
    pub tail_window: (f64, f64),
    /// RMS deviation of the slope samples from the accepted target.
    pub fit_residual: f64,
    /// Decimated (r, d ln u / d ln r) diagnostics over the window.
    pub slope_samples: Vec<(f64, f64)>,
}

impl GrowthReport {
    fn bare(class: GrowthClass) -> Self {
        GrowthReport {
            class,
            tail_window: (0.0, 0.0),
            fit_residual: 0.0,
            slope_samples: Vec::new(),
        }
    }
}

/// Threshold on u''(r_hi) separating quadratic from linear growth.
pub fn rho_min(traj: &Trajectory) -> f64 {
    let b = traj
        .origin
        .map(|o| o.b)
        .unwrap_or_else(|| traj.states[0].w);
    1e-6 * b.abs().max(1.0)
}

/// Assign a growth class to a finished trajectory.
pub fn classify(traj: &Trajectory) -> GrowthReport {
    match traj.termination {
        Termination::Extinct { last_alive, .. } => {
            return GrowthReport::bare(GrowthClass::Extinct { r_star: last_alive })
        }
        Termination::StepFailure { .. } => return GrowthReport::bare(GrowthClass::Undetermined),
        Termination::ReachedRmax | Termination::BlowUp { .. } => {}
    }

    let spec = &traj.spec;
    let n = spec.nf();
    let r_hi = traj.r_last();
    let r_lo = r_hi / 4.0;
    let lo_idx = traj.index_at(r_lo);
    let window: Vec<usize> = (lo_idx..traj.len()).collect();
    if window.len() < MIN_TAIL_SAMPLES {
        return GrowthReport::bare(GrowthClass::Undetermined);
    }

    let slope_at = |i: usize| {
        let (r, s) = (traj.radii[i], &traj.states[i]);
        r * s.du / s.u
    };
    let slopes: Vec<f64> = window.iter().map(|&i| slope_at(i)).collect();
    let p_hat = *slopes.last().unwrap();
    let drift = slopes.iter().fold(0.0f64, |m, p| m.max((p - p_hat).abs()));

    let mut report = GrowthReport::bare(GrowthClass::Undetermined);
    report.tail_window = (traj.radii[lo_idx], r_hi);
    let stride = (window.len() / 32).max(1);
    report.slope_samples = window
        .iter()
        .step_by(stride)
        .map(|&i| (traj.radii[i], slope_at(i)))
        .collect();
    let rms = |target: f64| {
        (slopes.iter().map(|p| (p - target) * (p - target)).sum::<f64>() / slopes.len() as f64)
            .sqrt()
    };

    let last = traj.last_state();
    let half = traj.state_at(r_hi / 2.0);
    let rho = last.u2(n, r_hi);
    let drain_hi = (r_hi * last.dw).abs();
    let drain_mid = (traj.radii[traj.index_at(r_hi / 2.0)] * half.dw).abs();
    let w_settled = drain_hi <= 1e-9 * last.w.abs() || drain_hi <= DRAIN_DECAY * drain_mid;

    // candidate slope targets
    let power_target = if spec.m == Order::Two && spec.n == 3 && spec.q > 1.0 && spec.q < 3.0 {
        Some(4.0 / (spec.q + 1.0))
    } else {
        None
    };
    let log_corrected_case =
        spec.m == Order::Two && spec.n == 3 && (spec.q - 3.0).abs() < 1e-9 && spec.s == -1.0;

    // the log-corrected branch rides slightly above slope 1; test it first
    if log_corrected_case && (p_hat - 1.0).abs() <= SLOPE_BAND && rho.abs() < rho_min(traj) {
        let coef_at = |r: f64| {
            let s = traj.state_at(r);
            s.u / (r * r.ln().powf(0.25))
        };
        let c_hi = coef_at(r_hi);
        let c_mid = coef_at(r_hi / 2.0);
        if (c_hi - c_mid).abs() <= 0.05 * c_hi.abs() {
            report.class = GrowthClass::LogCorrected { coefficient: c_hi };
            report.fit_residual = rms(1.0);
            return report;
        }
    }

    if drift > SLOPE_BAND {
        return report; // slope still moving; never guess
    }

    #[derive(Clone, Copy)]
    enum Target {
        Power(f64),
        Linear,
        Quadratic,
        Quartic,
    }
    let mut targets: Vec<(f64, Target)> = vec![(1.0, Target::Linear), (2.0, Target::Quadratic)];
    if let Some(tau) = power_target {
        targets.push((tau, Target::Power(tau)));
    }
    if spec.m == Order::Three {
        targets.push((4.0, Target::Quartic));
    }
    let (dist, &(target_p, target)) = targets
        .iter()
        .map(|t| ((p_hat - t.0).abs(), t))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap();
    if dist > SLOPE_BAND {
        return report;
    }
    report.fit_residual = rms(target_p);

    match target {
        Target::Power(tau) => {
            report.class = GrowthClass::Power {
                exponent: p_hat,
                amplitude: last.u / r_hi.powf(tau),
            };
        }
        Target::Quartic => {
            let v_settled = (last.v - half.v).abs() <= 0.05 * last.v.abs().max(1e-300);
            if v_settled && last.v > 0.0 {
                report.class = GrowthClass::Quartic {
                    limit: last.v / (8.0 * n * (n + 2.0)),
                };
            }
        }
        Target::Linear | Target::Quadratic => {
            // the state's own u'' separates the two growth modes
            if rho.abs() >= rho_min(traj) {
                if rho > 0.0 && w_settled {
                    report.class = GrowthClass::Quadratic {
                        half_rho: 0.5 * rho,
                    };
                }
            } else {
                // Richardson refinement of u/r removes the O(1/r) offset
                let alpha = 2.0 * last.u / r_hi - half.u / (r_hi / 2.0);
                if alpha > 0.0 {
                    report.class = GrowthClass::Linear { alpha };
                }
            }
        }
    }
    report
}

/// Linear-growth amplitude from the integral formula
/// `α = -1/(n-1) ∫₀^∞ t²(v̄(t) - (n-3)/t·w̄'(t)) dt`, an estimate independent
/// of the slope fit. Returns (α, error bar from the tail remainder).
pub fn linear_alpha_from_integral(traj: &Trajectory) -> Result<(f64, f64), PolyharmError> {
    let spec = &traj.spec;
    if spec.m != Order::Three {
        return Err(PolyharmError::WrongSpec {
            expected: "m = 3".into(),
            got: format!("m = {:?}", spec.m),
        });
    }
    let n = spec.nf();
    let f: Vec<f64> = traj
        .radii
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| t * t * s.v - (n - 3.0) * t * s.dw)
        .collect();
    let df: Vec<f64> = traj
        .radii
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| {
            let w2 = s.w2(spec, *t);
            2.0 * t * s.v + t * t * s.dv - (n - 3.0) * (s.dw + t * w2)
        })
        .collect();
    // Truncate at half the horizon: the outer quarter of a shooting
    // trajectory carries the residual separatrix-miss modes, which would
    // poison the decay-exponent estimate.
    let r_hi = traj.r_last();
    let i_cut = traj.index_at(r_hi / 2.0);
    let i_mid = traj.index_at(r_hi / 4.0);
    let cums = cumquad_hermite(&traj.radii[..=i_cut], &f[..=i_cut], &df[..=i_cut]);
    let r0 = traj.r_first();
    let head = traj.states[0].v * r0.powi(3) / 3.0;
    let partial = head + cums.last().unwrap();

    // decay exponent of |f| on the octave below the cut bounds the remainder
    let f_mid = f[i_mid];
    let f_cut = f[i_cut];
    let r_cut = traj.radii[i_cut];
    let sigma = if f_cut.abs() > 0.0 && f_mid.abs() > 0.0 {
        -(f_cut.abs() / f_mid.abs()).ln() / (r_cut / traj.radii[i_mid]).ln()
    } else {
        f64::INFINITY
    };
    let remainder = if sigma > 1.05 {
        f_cut.abs() * r_cut / (sigma - 1.0)
    } else {
        f64::INFINITY
    };
    if !(remainder <= 0.1 * partial.abs()) {
        return Err(PolyharmError::NonDecayingIntegrand {
            remainder,
            partial: partial.abs(),
        });
    }
    Ok((-partial / (n - 1.0), remainder / (n - 1.0)))
}

/// Quartic growth limit `L = lim Δ²u / (8n(n+2))`, cross-checked against
/// `u/r⁴` at the outer radius.
pub fn quartic_limit(traj: &Trajectory) -> Result<f64, PolyharmError> {
    let spec = &traj.spec;
    if spec.m != Order::Three || spec.s != 1.0 {
        return Err(PolyharmError::WrongSpec {
            expected: "m = 3, s = +1".into(),
            got: format!("m = {:?}, s = {}", spec.m, spec.s),
        });
    }
    let n = spec.nf();
    let r_hi = traj.r_last();
    let last = traj.last_state();
    let half = traj.state_at(r_hi / 2.0);
    if (last.v - half.v).abs() > 0.05 * last.v.abs() {
        return Err(PolyharmError::NotSettled(format!(
            "v({r_hi}) = {} vs v({}) = {}",
            last.v,
            r_hi / 2.0,
            half.v
        )));
    }
    let limit = last.v / (8.0 * n * (n + 2.0));
    let direct = last.u / r_hi.powi(4);
    if (direct - limit).abs() > 0.05 * limit.abs() {
        return Err(PolyharmError::NotSettled(format!(
            "u/r⁴ = {direct} vs v/(8n(n+2)) = {limit}"
        )));
    }
    Ok(limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{
        eval_closed_form, power_law_amplitude, ClosedForm, TRIHARM_5D_AMPLITUDE,
    };
    use crate::integrate::{integrate, integrate_from_state, IntegrationConfig};
    use crate::problem::{OriginData, ProblemSpec};

    #[test]
    fn triharm_closed_form_is_linear_with_alpha_cstar() {
        let cf = ClosedForm::TriHarm5Dq11;
        let traj = integrate(
            &cf.spec(),
            &cf.origin().unwrap(),
            &IntegrationConfig::with_r_max(100.0),
        )
        .unwrap();
        let report = classify(&traj);
        match report.class {
            GrowthClass::Linear { alpha } => {
                assert!(
                    (alpha - TRIHARM_5D_AMPLITUDE).abs() < 1e-3,
                    "alpha = {alpha}"
                );
            }
            c => panic!("expected linear, got {c:?}"),
        }
    }

    #[test]
    fn power_law_classifies_with_kq_amplitude() {
        let cf = ClosedForm::PowerLaw { q: 2.0 };
        let state = eval_closed_form(&cf, 1.0).unwrap();
        let traj =
            integrate_from_state(&cf.spec(), 1.0, &state, &IntegrationConfig::with_r_max(100.0))
                .unwrap();
        let report = classify(&traj);
        match report.class {
            GrowthClass::Power {
                exponent,
                amplitude,
            } => {
                assert!((exponent - 4.0 / 3.0).abs() < 0.01, "p = {exponent}");
                let expect = power_law_amplitude(2.0);
                assert!((amplitude - expect).abs() < 1e-3 * expect, "A = {amplitude}");
            }
            c => panic!("expected power, got {c:?}"),
        }
    }

    #[test]
    fn quartic_seed_classifies_quartic() {
        let spec = ProblemSpec::tri_harmonic(5, 2.0);
        let origin = OriginData::triharmonic(1.0, 0.0, 1.0);
        let mut cfg = IntegrationConfig::with_r_max(200.0);
        cfg.rel_tol = 1e-9;
        let traj = integrate(&spec, &origin, &cfg).unwrap();
        let report = classify(&traj);
        match report.class {
            GrowthClass::Quartic { limit } => {
                let l2 = quartic_limit(&traj).unwrap();
                assert!((limit - l2).abs() < 1e-12);
                assert!(limit > 0.0);
                let direct = traj.last_state().u / traj.r_last().powi(4);
                assert!((direct - limit).abs() < 0.02 * limit);
            }
            c => panic!("expected quartic, got {c:?}"),
        }
    }

    #[test]
    fn alpha_integral_rejects_quadratic() {
        // near the subquartic separatrix the trajectory settles to quadratic
        // growth; there the integrand decays only like 1/t and the tail
        // remainder estimate must refuse to produce an α
        let spec = ProblemSpec::tri_harmonic(5, 8.0);
        let cfg = IntegrationConfig::with_r_max(100.0);
        let (_, traj, report) =
            crate::experiments::quadratic_representative(&spec, 1.0, 1.0, &cfg).unwrap();
        assert!(
            matches!(report.class, GrowthClass::Quadratic { .. }),
            "{:?}",
            report.class
        );
        assert!(matches!(
            linear_alpha_from_integral(&traj),
            Err(PolyharmError::NonDecayingIntegrand { .. })
        ));
    }

    #[test]
    fn alpha_integral_matches_closed_form() {
        let cf = ClosedForm::TriHarm5Dq11;
        let traj = integrate(
            &cf.spec(),
            &cf.origin().unwrap(),
            &IntegrationConfig::with_r_max(200.0),
        )
        .unwrap();
        let (alpha, err) = linear_alpha_from_integral(&traj).unwrap();
        assert!(
            (alpha - TRIHARM_5D_AMPLITUDE).abs() < 2e-3,
            "alpha = {alpha} ± {err}"
        );
    }

    #[test]
    fn planar_survivor_never_settles() {
        // alive 2D trajectories drain w logarithmically; the classifier must
        // report Undetermined, not quadratic growth
        let spec = ProblemSpec::bi_harmonic(2, 5.0);
        let origin = OriginData::biharmonic(2.0, 2.0);
        let mut cfg = IntegrationConfig::with_r_max(1e4);
        cfg.rel_tol = 1e-9;
        cfg.abs_tol = 1e-11;
        let traj = integrate(&spec, &origin, &cfg).unwrap();
        assert_eq!(traj.termination, Termination::ReachedRmax);
        let report = classify(&traj);
        assert_eq!(report.class, GrowthClass::Undetermined, "{report:?}");
    }

    #[test]
    fn extinct_classifies_extinct() {
        let spec = ProblemSpec::bi_harmonic(2, 2.0);
        let origin = OriginData::biharmonic(1.0, 0.1);
        let traj = integrate(&spec, &origin, &IntegrationConfig::with_r_max(1000.0)).unwrap();
        let report = classify(&traj);
        assert!(matches!(report.class, GrowthClass::Extinct { r_star } if r_star > 0.0));
    }
}
