//! Sample-by-sample sign, monotonicity, and bound checks along trajectories.
//!
//! Each check mirrors an inequality that holds for positive entire solutions.
//! A check is active only when its hypotheses hold for the given problem and
//! trajectory; growth-conditioned checks take their applicability from the
//! classifier, and checks that require entire-solution behavior are skipped
//! on extinct trajectories. Strict inequalities are asserted with additive
//! slack `1e-10` scaled by the local magnitude.

use serde::{Deserialize, Serialize};

use crate::classify::GrowthReport;
use crate::integrate::Trajectory;
use crate::problem::Order;

/// Relative slack granted to strict inequalities.
pub const MARGIN_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub applicable: bool,
    pub passed: bool,
    /// Worst normalized margin over the checked samples; negative means the
    /// inequality was violated beyond slack.
    pub worst_margin: f64,
    pub worst_radius: f64,
    pub samples: usize,
}

impl CheckResult {
    fn not_applicable(name: &str) -> Self {
        CheckResult {
            name: name.to_string(),
            applicable: false,
            passed: true,
            worst_margin: f64::INFINITY,
            worst_radius: f64::NAN,
            samples: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checks: Vec<CheckResult>,
}

impl InvariantReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Evaluate `margin_fn -> (margin, scale)` at every sample with r in
/// [r_from, r_to]; the check passes when every margin >= -slack·scale.
fn sample_check(
    name: &str,
    traj: &Trajectory,
    r_from: f64,
    r_to: f64,
    mut margin_fn: impl FnMut(f64, &crate::problem::State) -> (f64, f64),
) -> CheckResult {
    let mut worst = f64::INFINITY;
    let mut worst_radius = f64::NAN;
    let mut samples = 0;
    let mut passed = true;
    for (r, s) in traj.radii.iter().zip(&traj.states) {
        if *r < r_from || *r > r_to {
            continue;
        }
        samples += 1;
        let (margin, scale) = margin_fn(*r, s);
        let scale = scale.abs().max(1e-300);
        let normalized = margin / scale;
        if normalized < worst {
            worst = normalized;
            worst_radius = *r;
        }
        if margin < -MARGIN_SLACK * scale {
            passed = false;
        }
    }
    CheckResult {
        name: name.to_string(),
        applicable: true,
        passed,
        worst_margin: worst,
        worst_radius,
        samples,
    }
}

/// True when the trajectory behaved like (the initial segment of) an entire
/// solution: it survived to the outer radius.
fn entire_like(traj: &Trajectory) -> bool {
    traj.termination == crate::integrate::Termination::ReachedRmax
}

/// Sub-poly-harmonic signs: `Δu > 0` everywhere, and for the tri-harmonic
/// case also `Δ²u < 0`. Requires subquartic growth when m = 3; quartic
/// trajectories fall outside the hypothesis.
pub fn check_subpolyharmonic(traj: &Trajectory, growth: &GrowthReport) -> Vec<CheckResult> {
    let applicable = match traj.spec.m {
        Order::Three => growth.class.is_subquartic(),
        Order::Two => entire_like(traj),
    };
    let mut out = Vec::new();
    if !applicable {
        out.push(CheckResult::not_applicable("signs.w_positive"));
        if traj.spec.m == Order::Three {
            out.push(CheckResult::not_applicable("signs.v_negative"));
        }
        return out;
    }
    let (r0, r1) = (traj.r_first(), traj.r_last());
    out.push(sample_check("signs.w_positive", traj, r0, r1, |_, s| {
        (s.w, s.w.abs().max(1.0))
    }));
    if traj.spec.m == Order::Three {
        out.push(sample_check("signs.v_negative", traj, r0, r1, |_, s| {
            (-s.v, s.v.abs().max(1.0))
        }));
    }
    out
}

/// Monotonicity of the radial profiles: `v' > 0` holds for every tri-harmonic
/// trajectory; `u' > 0`, `w' < 0` need the sub-poly-harmonic regime; in n = 5
/// (q >= 2) also `u'' > 0` and `u''' < 0`. The planar/3D bi-harmonic gets
/// `w' < 0` and `u''' < 0` unconditionally and the rest while entire-like.
pub fn check_monotonicity(traj: &Trajectory, growth: &GrowthReport) -> Vec<CheckResult> {
    let spec = &traj.spec;
    let n = spec.nf();
    let (r0, r1) = (traj.r_first(), traj.r_last());
    let mut out = Vec::new();
    let du_scale = |s: &crate::problem::State| s.du.abs().max(s.u.abs() / r1.max(1.0));
    match spec.m {
        Order::Three => {
            out.push(sample_check(
                "monotone.v_increasing",
                traj,
                r0,
                r1,
                |_, s| (s.dv, s.dv.abs().max(1e-6)),
            ));
            let sub = growth.class.is_subquartic();
            if sub {
                out.push(sample_check(
                    "monotone.u_increasing",
                    traj,
                    r0,
                    r1,
                    |_, s| (s.du, du_scale(s)),
                ));
                out.push(sample_check(
                    "monotone.w_decreasing",
                    traj,
                    r0,
                    r1,
                    |_, s| (-s.dw, s.dw.abs().max(1e-6)),
                ));
            } else {
                out.push(CheckResult::not_applicable("monotone.u_increasing"));
                out.push(CheckResult::not_applicable("monotone.w_decreasing"));
            }
            if sub && spec.n == 5 && spec.q >= 2.0 {
                out.push(sample_check(
                    "monotone.u2_positive",
                    traj,
                    r0,
                    r1,
                    |r, s| (s.u2(n, r), s.w.abs().max(1e-6)),
                ));
                out.push(sample_check(
                    "monotone.u3_negative",
                    traj,
                    r0,
                    r1,
                    |r, s| (-s.u3(n, r), s.u3(n, r).abs().max(1e-6)),
                ));
            } else {
                out.push(CheckResult::not_applicable("monotone.u2_positive"));
                out.push(CheckResult::not_applicable("monotone.u3_negative"));
            }
        }
        Order::Two => {
            out.push(sample_check(
                "monotone.w_decreasing",
                traj,
                r0,
                r1,
                |_, s| (-s.dw, s.dw.abs().max(1e-6)),
            ));
            out.push(sample_check(
                "monotone.u3_negative",
                traj,
                r0,
                r1,
                |r, s| (-s.u3(n, r), s.u3(n, r).abs().max(1e-6)),
            ));
            if entire_like(traj) {
                out.push(sample_check(
                    "monotone.u_increasing",
                    traj,
                    r0,
                    r1,
                    |_, s| (s.du, du_scale(s)),
                ));
                out.push(sample_check(
                    "monotone.u2_positive",
                    traj,
                    r0,
                    r1,
                    |r, s| (s.u2(n, r), s.w.abs().max(1e-6)),
                ));
            } else {
                out.push(CheckResult::not_applicable("monotone.u_increasing"));
                out.push(CheckResult::not_applicable("monotone.u2_positive"));
            }
        }
    }
    out
}

/// Growth bounds with the constants the theory provides:
///
/// - `u(r) <= u(0) + Δu(0)·r²/4` (needs a decreasing w, i.e. the
///   sub-poly-harmonic regime, and Δu(0) > 0),
/// - `u(r) >= u(0) + r²·w(r)/(2n)`,
/// - tri-harmonic subquartic tail: `inf u·r^{-4/q} > 0` on the outer half,
/// - planar: `u(r) >= (ln2/8)^{1/(q+1)} r^{4/(q+1)}` and
///   `u(r) >= (w(e^(k))/4)·r²/ln^(k)(r)` past `exp^(k)(1)`, k = 1, 2.
pub fn check_bounds(traj: &Trajectory, growth: &GrowthReport) -> Vec<CheckResult> {
    let spec = &traj.spec;
    let n = spec.nf();
    let (r0, r1) = (traj.r_first(), traj.r_last());
    let origin = traj.origin;
    let mut out = Vec::new();
    let sub_regime = match spec.m {
        Order::Three => growth.class.is_subquartic(),
        Order::Two => entire_like(traj),
    };

    match (origin, sub_regime) {
        (Some(o), true) if o.b > 0.0 => {
            out.push(sample_check("bounds.upper_quadratic", traj, r0, r1, {
                let (a, b) = (o.a, o.b);
                move |r, s| {
                    let bound = a + b * r * r / 4.0;
                    (bound - s.u, bound.abs())
                }
            }));
            out.push(sample_check("bounds.lower_mean_w", traj, r0, r1, {
                let a = o.a;
                move |r, s| {
                    let bound = a + r * r * s.w / (2.0 * n);
                    (s.u - bound, s.u.abs())
                }
            }));
        }
        _ => {
            out.push(CheckResult::not_applicable("bounds.upper_quadratic"));
            out.push(CheckResult::not_applicable("bounds.lower_mean_w"));
        }
    }

    if spec.m == Order::Three && growth.class.is_subquartic() {
        let p = 4.0 / spec.q;
        let mut check = sample_check("bounds.tail_power_floor", traj, r1 / 2.0, r1, |r, s| {
            (s.u * r.powf(-p), s.u * r.powf(-p))
        });
        // positivity of the tail infimum, not a specific constant
        check.passed = check.worst_margin > 0.0;
        out.push(check);
    } else {
        out.push(CheckResult::not_applicable("bounds.tail_power_floor"));
    }

    if spec.m == Order::Two && spec.n == 2 && entire_like(traj) {
        let coef = (2.0f64.ln() / 8.0).powf(1.0 / (spec.q + 1.0));
        let p = 4.0 / (spec.q + 1.0);
        out.push(sample_check(
            "bounds.planar_power_lower",
            traj,
            r0,
            r1,
            |r, s| {
                let bound = coef * r.powf(p);
                (s.u - bound, s.u.abs())
            },
        ));
        for k in [1u32, 2] {
            let name = format!("bounds.planar_log_lower_{k}");
            let anchor = match k {
                1 => std::f64::consts::E,
                _ => std::f64::consts::E.exp(),
            };
            if r1 <= anchor * 1.5 {
                out.push(CheckResult::not_applicable(&name));
                continue;
            }
            let w_anchor = crate::integrate::resample(traj, &[anchor]).map(|v| v[0].w);
            let ck = match w_anchor {
                Ok(w) if w > 0.0 => w / 4.0,
                _ => {
                    out.push(CheckResult::not_applicable(&name));
                    continue;
                }
            };
            // the exterior-comparison mechanism that keeps w above its
            // anchor scale is only testable while w has not drained away;
            // past that the finite trajectory no longer proxies an entire
            // solution
            let w_floor = 2.0 * ck;
            let r_guard = traj
                .radii
                .iter()
                .zip(&traj.states)
                .take_while(|(_, s)| s.w >= w_floor)
                .last()
                .map(|(r, _)| *r)
                .unwrap_or(anchor);
            if r_guard <= anchor * 1.5 {
                out.push(CheckResult::not_applicable(&name));
                continue;
            }
            let iter_log = move |r: f64| -> f64 {
                let mut x = r;
                for _ in 0..k {
                    x = x.ln();
                }
                x
            };
            out.push(sample_check(&name, traj, anchor, r_guard, move |r, s| {
                let bound = ck * r * r / iter_log(r);
                (s.u - bound, s.u.abs())
            }));
        }
    } else {
        out.push(CheckResult::not_applicable("bounds.planar_power_lower"));
        out.push(CheckResult::not_applicable("bounds.planar_log_lower_1"));
        out.push(CheckResult::not_applicable("bounds.planar_log_lower_2"));
    }
    out
}

/// Tri-harmonic decay estimates anchored at the trajectory's own r = 1
/// values, for subquartic growth:
///
/// - `v(r) >= -2n·Δu(0)/r²`,
/// - `v(r) <= -c₁/r^{n-2}` for r >= 1 with `c₁ = -v(1)` (n >= 3),
/// - `w(r) >= c₂/r^{n-4}` for r >= 1 with `c₂ = min(-v(1)/(2(n-4)), w(1))`
///   (n >= 5),
/// - `u(r) >= c₂·r/10` for r >= 1 (n = 5).
pub fn check_radial_decay_estimates(traj: &Trajectory, growth: &GrowthReport) -> Vec<CheckResult> {
    let spec = &traj.spec;
    let n = spec.nf();
    let names = [
        "decay.v_inverse_square_lower",
        "decay.v_power_upper",
        "decay.w_power_lower",
        "decay.u_linear_lower",
    ];
    let mut out = Vec::new();
    let applicable = spec.m == Order::Three
        && growth.class.is_subquartic()
        && traj.origin.is_some()
        && traj.r_last() > 1.0;
    if !applicable {
        return names
            .iter()
            .map(|n| CheckResult::not_applicable(n))
            .collect();
    }
    let b = traj.origin.unwrap().b;
    let at_one = match crate::integrate::resample(traj, &[1.0]) {
        Ok(v) => v[0],
        Err(_) => {
            return names
                .iter()
                .map(|n| CheckResult::not_applicable(n))
                .collect()
        }
    };
    let (r0, r1) = (traj.r_first(), traj.r_last());

    out.push(sample_check(names[0], traj, r0, r1, |r, s| {
        let bound = -2.0 * n * b / (r * r);
        (s.v - bound, s.v.abs().max(bound.abs()))
    }));

    if spec.n >= 3 && at_one.v < 0.0 {
        let c1 = -at_one.v;
        out.push(sample_check(names[1], traj, 1.0, r1, move |r, s| {
            let bound = -c1 * r.powf(-(n - 2.0));
            (bound - s.v, s.v.abs().max(bound.abs()))
        }));
    } else {
        out.push(CheckResult::not_applicable(names[1]));
    }

    if spec.n >= 5 && at_one.v < 0.0 && at_one.w > 0.0 {
        let c2 = (-at_one.v / (2.0 * (n - 4.0))).min(at_one.w);
        out.push(sample_check(names[2], traj, 1.0, r1, move |r, s| {
            let bound = c2 * r.powf(-(n - 4.0));
            (s.w - bound, s.w.abs().max(bound.abs()))
        }));
        if spec.n == 5 {
            out.push(sample_check(names[3], traj, 1.0, r1, move |r, s| {
                let bound = c2 * r / 10.0;
                (s.u - bound, s.u.abs())
            }));
        } else {
            out.push(CheckResult::not_applicable(names[3]));
        }
    } else {
        out.push(CheckResult::not_applicable(names[2]));
        out.push(CheckResult::not_applicable(names[3]));
    }
    out
}

/// Run every invariant suite against a classified trajectory.
pub fn run_invariants(traj: &Trajectory, growth: &GrowthReport) -> InvariantReport {
    let mut checks = Vec::new();
    checks.extend(check_subpolyharmonic(traj, growth));
    checks.extend(check_monotonicity(traj, growth));
    checks.extend(check_bounds(traj, growth));
    checks.extend(check_radial_decay_estimates(traj, growth));
    InvariantReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::classify;
    use crate::closed_form::ClosedForm;
    use crate::integrate::{integrate, IntegrationConfig};
    use crate::problem::{OriginData, ProblemSpec};

    fn checked(traj: &Trajectory) -> InvariantReport {
        run_invariants(traj, &classify(traj))
    }

    #[test]
    fn triharm_closed_form_passes_all() {
        let cf = ClosedForm::TriHarm5Dq11;
        let traj = integrate(
            &cf.spec(),
            &cf.origin().unwrap(),
            &IntegrationConfig::with_r_max(100.0),
        )
        .unwrap();
        let report = checked(&traj);
        assert!(
            report.all_passed(),
            "failures: {:?}",
            report.failed()
        );
        // the growth-conditioned checks were really active
        assert!(report.get("signs.v_negative").unwrap().applicable);
        assert!(report.get("monotone.u3_negative").unwrap().applicable);
        assert!(report.get("decay.u_linear_lower").unwrap().applicable);
    }

    #[test]
    fn biharm_closed_form_passes_all() {
        let cf = ClosedForm::BiHarm3Dq7;
        let traj = integrate(
            &cf.spec(),
            &cf.origin().unwrap(),
            &IntegrationConfig::with_r_max(100.0),
        )
        .unwrap();
        let report = checked(&traj);
        assert!(report.all_passed(), "failures: {:?}", report.failed());
    }

    #[test]
    fn quartic_growth_is_out_of_hypothesis() {
        let spec = ProblemSpec::tri_harmonic(5, 2.0);
        let origin = OriginData::triharmonic(1.0, 0.0, 1.0);
        let mut cfg = IntegrationConfig::with_r_max(200.0);
        cfg.rel_tol = 1e-9;
        let traj = integrate(&spec, &origin, &cfg).unwrap();
        let report = checked(&traj);
        let sp = report.get("signs.w_positive").unwrap();
        assert!(!sp.applicable);
        // v' > 0 holds for every tri-harmonic trajectory, quartic included
        let vi = report.get("monotone.v_increasing").unwrap();
        assert!(vi.applicable && vi.passed, "{vi:?}");
    }

    #[test]
    fn planar_trajectory_before_death_keeps_signs() {
        // truncated below its death radius, the planar trajectory behaves
        // like an entire solution and the full planar suite applies
        let spec = ProblemSpec::bi_harmonic(2, 2.0);
        let origin = OriginData::biharmonic(1.0, 0.1);
        let traj = integrate(&spec, &origin, &IntegrationConfig::with_r_max(0.5)).unwrap();
        let report = checked(&traj);
        for name in [
            "signs.w_positive",
            "monotone.u_increasing",
            "monotone.u2_positive",
            "monotone.u3_negative",
            "monotone.w_decreasing",
        ] {
            let c = report.get(name).unwrap();
            assert!(c.applicable && c.passed, "{c:?}");
        }
    }

    #[test]
    fn extinct_planar_trajectory_skips_entire_only_checks() {
        let spec = ProblemSpec::bi_harmonic(2, 2.0);
        let origin = OriginData::biharmonic(1.0, 0.1);
        let traj = integrate(&spec, &origin, &IntegrationConfig::with_r_max(1000.0)).unwrap();
        assert!(traj.termination.is_extinct());
        let report = checked(&traj);
        assert!(!report.get("signs.w_positive").unwrap().applicable);
        assert!(!report.get("monotone.u_increasing").unwrap().applicable);
        // the unconditional planar signs hold right up to extinction
        for name in ["monotone.w_decreasing", "monotone.u3_negative"] {
            let c = report.get(name).unwrap();
            assert!(c.applicable && c.passed, "{c:?}");
        }
    }

    #[test]
    fn planar_survivor_satisfies_growth_bounds() {
        let spec = ProblemSpec::bi_harmonic(2, 5.0);
        let origin = OriginData::biharmonic(1.0, 2.0);
        let mut cfg = IntegrationConfig::with_r_max(1e3);
        cfg.rel_tol = 1e-9;
        let traj = integrate(&spec, &origin, &cfg).unwrap();
        let report = checked(&traj);
        for name in [
            "bounds.upper_quadratic",
            "bounds.lower_mean_w",
            "bounds.planar_power_lower",
            "bounds.planar_log_lower_1",
            "bounds.planar_log_lower_2",
        ] {
            let c = report.get(name).unwrap();
            assert!(c.applicable && c.passed, "{c:?}");
        }
    }

    #[test]
    fn upper_bound_is_tight_for_closed_form() {
        // u(0) + Δu(0)r²/4 = c*(1 + 5r²/4) dominates c*(1+r²)^{1/2}
        let cf = ClosedForm::TriHarm5Dq11;
        let o = cf.origin().unwrap();
        for r in [0.5f64, 1.0, 3.0, 10.0] {
            let u = crate::closed_form::eval_closed_form(&cf, r).unwrap().u;
            assert!(o.a + o.b * r * r / 4.0 >= u);
        }
    }

    #[test]
    fn source_term_uses_mean_value_exactly() {
        // the radial pipeline inserts no convexity gap: the source of the
        // reduced system is exactly u^{-q} of the mean value
        let spec = ProblemSpec::tri_harmonic(5, 3.0);
        let state = crate::problem::State {
            u: 1.7,
            du: 0.3,
            w: 0.2,
            dw: -0.1,
            v: -0.4,
            dv: 0.05,
        };
        let dy = crate::radial::rhs(&spec, 2.0, &state).unwrap();
        let expected = 1.7f64.powf(-3.0) - (5.0 - 1.0) * 0.05 / 2.0;
        assert_eq!(dy[5], expected);
    }
}
