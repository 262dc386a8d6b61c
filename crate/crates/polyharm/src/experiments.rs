//! Scientific campaigns: shooting sweeps, separatrix bisection, the planar
//! death predictor, and the comparison harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify, GrowthClass, GrowthReport};
use crate::integrate::{
    cumquad_hermite, integrate, integrate_forced, IntegrationConfig, Termination, Trajectory,
};
use crate::invariants::{run_invariants, InvariantReport};
use crate::problem::{Order, OriginData, ProblemSpec};
use crate::PolyharmError;

/// A finite, explicitly enumerated shooting campaign; every cell independent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPlan {
    pub n: u32,
    pub m: u32,
    pub s: f64,
    pub q_values: Vec<f64>,
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    /// Δ²u(0) grid; required when m = 3, forbidden when m = 2.
    pub c_values: Option<Vec<f64>>,
    pub cfg: IntegrationConfig,
}

impl SweepPlan {
    pub fn cells(&self) -> Result<Vec<(f64, OriginData)>, PolyharmError> {
        if (self.m == 3) != self.c_values.is_some() {
            return Err(PolyharmError::InvalidSpec(
                "c grid must be present exactly when m = 3".into(),
            ));
        }
        let mut out = Vec::new();
        for &q in &self.q_values {
            for &a in &self.a_values {
                for &b in &self.b_values {
                    match &self.c_values {
                        Some(cs) => {
                            for &c in cs {
                                out.push((q, OriginData::triharmonic(a, b, c)));
                            }
                        }
                        None => out.push((q, OriginData::biharmonic(a, b))),
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn spec_for(&self, q: f64) -> Result<ProblemSpec, PolyharmError> {
        let m = match self.m {
            2 => Order::Two,
            3 => Order::Three,
            other => {
                return Err(PolyharmError::InvalidSpec(format!(
                    "unsupported order m = {other}"
                )))
            }
        };
        ProblemSpec::new(self.n, m, self.s, q)
    }
}

/// One completed sweep cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub spec: ProblemSpec,
    pub origin: OriginData,
    pub termination: Termination,
    pub growth: GrowthReport,
    pub invariants: InvariantReport,
    pub forecast: Option<DeathForecast>,
    pub error: Option<String>,
}

/// Run every cell of the plan; cells execute concurrently, results come back
/// in deterministic grid order, and per-cell failures are embedded rather
/// than aborting the sweep.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepCell>, PolyharmError> {
    plan.cfg.validate()?;
    let cells = plan.cells()?;
    let results: Vec<SweepCell> = cells
        .par_iter()
        .enumerate()
        .map(|(index, (q, origin))| {
            let spec = match plan.spec_for(*q) {
                Ok(s) => s,
                Err(e) => {
                    return SweepCell {
                        index,
                        spec: ProblemSpec::bi_harmonic(plan.n.max(2), q.max(0.1)),
                        origin: *origin,
                        termination: Termination::StepFailure { r: 0.0 },
                        growth: GrowthReport {
                            class: GrowthClass::Undetermined,
                            tail_window: (0.0, 0.0),
                            fit_residual: 0.0,
                            slope_samples: vec![],
                        },
                        invariants: InvariantReport { checks: vec![] },
                        forecast: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            match integrate(&spec, origin, &plan.cfg) {
                Ok(traj) => {
                    let growth = classify(&traj);
                    let invariants = run_invariants(&traj, &growth);
                    let forecast = if spec.n == 2 && spec.m == Order::Two {
                        death_forecast(&traj).ok()
                    } else {
                        None
                    };
                    SweepCell {
                        index,
                        spec,
                        origin: *origin,
                        termination: traj.termination,
                        growth,
                        invariants,
                        forecast,
                        error: None,
                    }
                }
                Err(e) => SweepCell {
                    index,
                    spec,
                    origin: *origin,
                    termination: Termination::StepFailure { r: 0.0 },
                    growth: GrowthReport {
                        class: GrowthClass::Undetermined,
                        tail_window: (0.0, 0.0),
                        fit_residual: 0.0,
                        slope_samples: vec![],
                    },
                    invariants: InvariantReport { checks: vec![] },
                    forecast: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(results)
}

/// Which origin parameter the separatrix hunt frees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreeParam {
    B,
    C,
}

#[derive(Debug, Clone)]
pub struct Separatrix {
    pub param: f64,
    pub trajectory: Trajectory,
    pub growth: GrowthReport,
    pub steps: usize,
    pub final_bracket: (f64, f64),
    /// (parameter, class) along the bisection path.
    pub path: Vec<(f64, GrowthClass)>,
}

/// A trajectory belongs to the collapsing side of the separatrix when it
/// went extinct or is committed to dying past the horizon: u turned around,
/// or w went negative with no way back (bi-harmonic), or w is negative at
/// the horizon (tri-harmonic, where the singular source rescues deep dips
/// before u reaches the extinction threshold, making the dip the marker).
fn low_side(traj: &Trajectory) -> bool {
    traj.termination.is_extinct()
        || traj.states.iter().any(|s| s.du < 0.0)
        || traj.last_state().w < 0.0
}

/// Bisect one shooting parameter between a collapsing and a growing side
/// until the classifier reports linear growth (slope near 1 and u'' below
/// threshold) or the bracket exhausts.
pub fn bisect_separatrix(
    spec: &ProblemSpec,
    a: f64,
    free: FreeParam,
    fixed_other: Option<f64>,
    bracket: (f64, f64),
    cfg: &IntegrationConfig,
) -> Result<Separatrix, PolyharmError> {
    let origin_for = |p: f64| -> Result<OriginData, PolyharmError> {
        match (spec.m, free) {
            (Order::Two, FreeParam::B) => Ok(OriginData::biharmonic(a, p)),
            (Order::Three, FreeParam::C) => {
                let b = fixed_other.ok_or_else(|| {
                    PolyharmError::InvalidSpec("free c needs a fixed b".into())
                })?;
                Ok(OriginData::triharmonic(a, b, p))
            }
            (Order::Three, FreeParam::B) => {
                let c = fixed_other.ok_or_else(|| {
                    PolyharmError::InvalidSpec("free b needs a fixed c".into())
                })?;
                Ok(OriginData::triharmonic(a, p, c))
            }
            (Order::Two, FreeParam::C) => Err(PolyharmError::InvalidSpec(
                "bi-harmonic problems have no c parameter".into(),
            )),
        }
    };
    let run = |p: f64| -> Result<(Trajectory, GrowthReport), PolyharmError> {
        let traj = integrate(spec, &origin_for(p)?, cfg)?;
        let growth = classify(&traj);
        Ok((traj, growth))
    };

    let (mut lo, mut hi) = bracket;
    let (t_lo, g_lo) = run(lo)?;
    let (t_hi, g_hi) = run(hi)?;
    let mut path = vec![(lo, g_lo.class), (hi, g_hi.class)];
    if low_side(&t_lo) == low_side(&t_hi) {
        return Err(PolyharmError::BracketInvalid(format!(
            "both endpoints on the same side: {:?} vs {:?}",
            g_lo.class, g_hi.class
        )));
    }
    // normalize so that `lo` is the collapsing side
    let mut flipped = false;
    if !low_side(&t_lo) {
        std::mem::swap(&mut lo, &mut hi);
        flipped = true;
    }
    let width0 = (hi - lo).abs().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, Trajectory, GrowthReport)> = None;
    let mut steps = 0;
    while steps < 200 && (hi - lo).abs() > 1e-12 * width0 {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        let (traj, growth) = run(mid)?;
        path.push((mid, growth.class));
        if let GrowthClass::Linear { alpha } = growth.class {
            if alpha > 0.0 {
                let better = match &best {
                    None => true,
                    Some((_, t_best, _)) => {
                        let rho = traj.last_state().u2(spec.nf(), traj.r_last()).abs();
                        let rho_best = t_best.last_state().u2(spec.nf(), t_best.r_last()).abs();
                        rho < rho_best
                    }
                };
                if better {
                    best = Some((mid, traj.clone(), growth.clone()));
                }
            }
        }
        if low_side(&traj) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // secant polish from the surviving side: drive the terminal curvature
    // u''(r_max) to zero, which removes the horizon sag that plain bisection
    // cannot see past
    let shoot = |p: f64| -> Option<f64> {
        let traj = integrate(spec, &origin_for(p).ok()?, cfg).ok()?;
        if traj.termination != Termination::ReachedRmax {
            return None;
        }
        Some(traj.last_state().u2(spec.nf(), traj.r_last()))
    };
    let mut polished = None;
    let mut p1 = hi;
    let mut p0 = hi + (hi - lo);
    if let (Some(mut f1), Some(mut f0)) = (shoot(p1), shoot(p0)) {
        for _ in 0..24 {
            let denom = f0 - f1;
            if denom.abs() < 1e-300 {
                break;
            }
            let p2 = p1 - f1 * (p0 - p1) / denom;
            match shoot(p2) {
                Some(f2) => {
                    p0 = p1;
                    f0 = f1;
                    p1 = p2;
                    f1 = f2;
                    if (p0 - p1).abs() <= 1e-14 * p1.abs().max(1e-300) {
                        break;
                    }
                }
                None => break,
            }
        }
        if let Ok(origin) = origin_for(p1) {
            if let Ok(traj) = integrate(spec, &origin, cfg) {
                let growth = classify(&traj);
                if matches!(growth.class, GrowthClass::Linear { alpha } if alpha > 0.0) {
                    path.push((p1, growth.class));
                    polished = Some((p1, traj, growth));
                }
            }
        }
    }

    let final_bracket = if flipped { (hi, lo) } else { (lo, hi) };
    match polished.or(best) {
        Some((param, trajectory, growth)) => Ok(Separatrix {
            param,
            trajectory,
            growth,
            steps,
            final_bracket,
            path,
        }),
        None => Err(PolyharmError::NoLinearWindow {
            lo: final_bracket.0,
            hi: final_bracket.1,
        }),
    }
}

/// The subquartic boundary in c at fixed (a, b): below it trajectories dip,
/// above it they grow toward the quartic regime. Returns the refined upper
/// (growing) endpoint.
pub fn subquartic_boundary_c(
    spec: &ProblemSpec,
    a: f64,
    b: f64,
    cfg: &IntegrationConfig,
) -> Result<(f64, Trajectory), PolyharmError> {
    let run = |c: f64| integrate(spec, &OriginData::triharmonic(a, b, c), cfg);
    let mut hi = 0.0f64;
    let mut lo = -0.05f64 * a.max(1.0);
    let mut expansions = 0;
    while !low_side(&run(lo)?) {
        hi = lo;
        lo *= 2.0;
        expansions += 1;
        if expansions > 24 {
            return Err(PolyharmError::BracketInvalid(
                "no dipping c found while expanding downward".into(),
            ));
        }
    }
    for _ in 0..70 {
        let mid = 0.5 * (lo + hi);
        if low_side(&run(mid)?) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((hi, run(hi)?))
}

/// A genuinely quadratic trajectory just above the subquartic boundary.
///
/// The dip boundary sits slightly below the true separatrix, so a second
/// bisection on the sign of v at the horizon localizes the separatrix from
/// the quartic side; candidates just below it classify quadratic before the
/// quartic mode can contaminate the horizon.
pub fn quadratic_representative(
    spec: &ProblemSpec,
    a: f64,
    b: f64,
    cfg: &IntegrationConfig,
) -> Result<(f64, Trajectory, GrowthReport), PolyharmError> {
    let (c_edge, _) = subquartic_boundary_c(spec, a, b, cfg)?;
    let run = |c: f64| integrate(spec, &OriginData::triharmonic(a, b, c), cfg);
    let scale = c_edge.abs().max(1e-3);
    let (mut lo, mut hi) = (c_edge, c_edge + 0.1 * scale);
    let mut expansions = 0;
    while run(hi)?.last_state().v <= 0.0 {
        hi += 0.1 * scale;
        expansions += 1;
        if expansions > 40 {
            return Err(PolyharmError::BracketInvalid(
                "no positive-v endpoint above the dip boundary".into(),
            ));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if run(mid)?.last_state().v > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    for exp in [-9.0f64, -8.0, -7.0, -6.0] {
        let c = lo - scale * 10f64.powf(exp);
        let traj = run(c)?;
        let growth = classify(&traj);
        if matches!(growth.class, GrowthClass::Quadratic { .. }) {
            return Ok((c, traj, growth));
        }
    }
    Err(PolyharmError::NoLinearWindow { lo, hi })
}

/// A linear-growth tri-harmonic solution found by the full two-parameter
/// hunt: a coarse nested bisection over (b, c) followed by a damped
/// two-radius Newton polish that kills the quadratic and quartic
/// contamination modes.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub b: f64,
    pub c: f64,
    pub trajectory: Trajectory,
    pub growth: GrowthReport,
}

fn shoot_u2(
    spec: &ProblemSpec,
    a: f64,
    b: f64,
    c: f64,
    cfg: &IntegrationConfig,
) -> Option<[f64; 2]> {
    let traj = integrate(spec, &OriginData::triharmonic(a, b, c), cfg).ok()?;
    if traj.termination != Termination::ReachedRmax {
        return None;
    }
    let n = spec.nf();
    let r2 = traj.r_last();
    let i1 = traj.index_at(r2 / 2.0);
    Some([
        traj.states[i1].u2(n, traj.radii[i1]),
        traj.last_state().u2(n, r2),
    ])
}

pub fn find_linear_triharm(
    spec: &ProblemSpec,
    a: f64,
    b_bracket: (f64, f64),
    cfg: &IntegrationConfig,
) -> Result<LinearSolution, PolyharmError> {
    if spec.m != Order::Three {
        return Err(PolyharmError::WrongSpec {
            expected: "m = 3".into(),
            got: format!("{:?}", spec.m),
        });
    }
    // coarse outer bisection: at the subquartic boundary, a positive v at
    // the horizon means the singular rescue engaged (b too small)
    let (mut blo, mut bhi) = b_bracket;
    for _ in 0..28 {
        let mid = 0.5 * (blo + bhi);
        let (_, traj) = subquartic_boundary_c(spec, a, mid, cfg)?;
        if traj.last_state().v > 0.0 {
            blo = mid;
        } else {
            bhi = mid;
        }
    }
    let (c0, _) = subquartic_boundary_c(spec, a, bhi, cfg)?;
    let (mut b, mut c) = (bhi, c0);

    // damped Newton on (u''(R/2), u''(R)) = (0, 0)
    let mut f0 = shoot_u2(spec, a, b, c, cfg)
        .ok_or_else(|| PolyharmError::NoLinearWindow { lo: blo, hi: bhi })?;
    for _ in 0..16 {
        let hb = 1e-7 * b.abs().max(0.1);
        let hc = 1e-7 * c.abs().max(0.1);
        let fb = match shoot_u2(spec, a, b + hb, c, cfg) {
            Some(f) => f,
            None => break,
        };
        let fc = match shoot_u2(spec, a, b, c + hc, cfg) {
            Some(f) => f,
            None => break,
        };
        let j = [
            [(fb[0] - f0[0]) / hb, (fc[0] - f0[0]) / hc],
            [(fb[1] - f0[1]) / hb, (fc[1] - f0[1]) / hc],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let db = (f0[0] * j[1][1] - f0[1] * j[0][1]) / det;
        let dc = (j[0][0] * f0[1] - j[1][0] * f0[0]) / det;
        // backtracking keeps the iterate on surviving trajectories
        let mut lambda = 1.0;
        let mut advanced = false;
        for _ in 0..8 {
            let (bt, ct) = (b - lambda * db, c - lambda * dc);
            if let Some(ft) = shoot_u2(spec, a, bt, ct, cfg) {
                let n0 = f0[0].abs().max(f0[1].abs());
                let nt = ft[0].abs().max(ft[1].abs());
                if nt < n0 || lambda < 0.2 {
                    b = bt;
                    c = ct;
                    f0 = ft;
                    advanced = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !advanced {
            break;
        }
        if db.abs() <= 1e-13 * b.abs() && dc.abs() <= 1e-13 * c.abs() {
            break;
        }
    }

    let trajectory = integrate(spec, &OriginData::triharmonic(a, b, c), cfg)?;
    let growth = classify(&trajectory);
    match growth.class {
        GrowthClass::Linear { alpha } if alpha > 0.0 => Ok(LinearSolution {
            b,
            c,
            trajectory,
            growth,
        }),
        _ => Err(PolyharmError::NoLinearWindow { lo: b, hi: c }),
    }
}

/// How the death predictor arrived at its fit window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForecastMethod {
    PlateauFit,
    PreDeathFit,
    Degenerate,
}

/// Forecast of the planar extinction mechanism: the accumulated mass
/// `m(r) = ∫₀^r t·u^{-q} dt` forces `w(r) ≈ A - m̂·ln r` through `r·w' = -m`,
/// and w must cross zero at `exp(A/m̂)`, after which concavity kills u.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeathForecast {
    /// Fitted logarithmic drain rate, the limiting mass estimate.
    pub mass_estimate: f64,
    /// Mass actually accumulated by the end of the trajectory.
    pub mass_at_end: f64,
    pub intercept: f64,
    /// Radius where the fitted w crosses zero; the leading death indicator.
    pub r_death_pred: f64,
    pub observed: Option<f64>,
    pub mass_converged: bool,
    pub method: ForecastMethod,
    pub fit_window: (f64, f64),
}

pub fn death_forecast(traj: &Trajectory) -> Result<DeathForecast, PolyharmError> {
    let spec = &traj.spec;
    if spec.n != 2 || spec.m != Order::Two || spec.s != -1.0 {
        return Err(PolyharmError::WrongSpec {
            expected: "(n=2, m=2, s=-1)".into(),
            got: format!("(n={}, m={:?}, s={})", spec.n, spec.m, spec.s),
        });
    }
    let q = spec.q;
    let f: Vec<f64> = traj
        .radii
        .iter()
        .zip(&traj.states)
        .map(|(r, s)| r * s.u.powf(-q))
        .collect();
    let df: Vec<f64> = traj
        .radii
        .iter()
        .zip(&traj.states)
        .map(|(r, s)| s.u.powf(-q) - q * r * s.u.powf(-q - 1.0) * s.du)
        .collect();
    let mut mass = cumquad_hermite(&traj.radii, &f, &df);
    let head = 0.5 * traj.states[0].u.powf(-q) * traj.r_first().powi(2);
    for m in &mut mass {
        *m += head;
    }
    let mass_at_end = *mass.last().unwrap();

    let observed = traj.termination.extinction_radius();
    // fit window: for extinct trajectories stop where u peaks (the pre-death
    // regime); for survivors use the outer octave
    let r_end = match observed {
        Some(_) => {
            let peak = traj
                .radii
                .iter()
                .zip(&traj.states)
                .take_while(|(_, s)| s.du > 0.0)
                .last()
                .map(|(r, _)| *r)
                .unwrap_or(traj.r_last());
            peak
        }
        None => traj.r_last(),
    };
    let r_start = (r_end / 2.0).max(traj.r_first());
    let i0 = traj.index_at(r_start);
    let i1 = traj.index_at(r_end);
    if i1 <= i0 + 3 {
        return Ok(DeathForecast {
            mass_estimate: 0.0,
            mass_at_end,
            intercept: traj.states[0].w,
            r_death_pred: f64::INFINITY,
            observed,
            mass_converged: false,
            method: ForecastMethod::Degenerate,
            fit_window: (r_start, r_end),
        });
    }
    let mass_converged = mass[i1] - mass[i0] <= 0.01 * mass[i1].abs().max(1e-300);

    // least squares of w against ln r over the window
    let (mut sx, mut sy, mut sxx, mut sxy, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in i0..=i1 {
        let x = traj.radii[i].ln();
        let y = traj.states[i].w;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        count += 1.0;
    }
    let denom = count * sxx - sx * sx;
    let slope = (count * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / count;
    let mass_estimate = -slope;
    let (r_death_pred, method) = if mass_estimate > 1e-300 {
        (
            (intercept / mass_estimate).exp(),
            if observed.is_some() {
                ForecastMethod::PreDeathFit
            } else {
                ForecastMethod::PlateauFit
            },
        )
    } else {
        (f64::INFINITY, ForecastMethod::Degenerate)
    };
    Ok(DeathForecast {
        mass_estimate,
        mass_at_end,
        intercept,
        r_death_pred,
        observed,
        mass_converged: mass_converged && mass_estimate > 0.0,
        method,
        fit_window: (r_start, r_end),
    })
}

/// Verdict of the comparison run: U (forced) against V (unforced).
#[derive(Debug, Clone)]
pub struct ComparisonVerdict {
    pub u_trajectory: Trajectory,
    pub v_trajectory: Trajectory,
    /// min over the common range of (U - V), normalized by max(|V|, 1).
    pub min_gap: f64,
    pub strict_expected: bool,
    pub passed: bool,
}

/// Integrate V as the plain planar problem and U with a nonnegative forcing
/// added to the top level, from identical origin data, and compare
/// sample-by-sample: U >= V on the common range, strictly when forcing(0) > 0.
pub fn comparison_harness(
    spec: &ProblemSpec,
    origin: &OriginData,
    forcing: &dyn Fn(f64) -> f64,
    cfg: &IntegrationConfig,
) -> Result<ComparisonVerdict, PolyharmError> {
    if spec.n != 2 || spec.m != Order::Two {
        return Err(PolyharmError::WrongSpec {
            expected: "(n=2, m=2)".into(),
            got: format!("(n={}, m={:?})", spec.n, spec.m),
        });
    }
    let v_traj = integrate(spec, origin, cfg)?;
    let u_traj = integrate_forced(spec, origin, cfg, Some(forcing))?;
    let r_common = v_traj.r_last().min(u_traj.r_last());
    let radii: Vec<f64> = v_traj
        .radii
        .iter()
        .copied()
        .filter(|r| *r <= r_common)
        .collect();
    let u_states = crate::integrate::resample(&u_traj, &radii)?;
    let mut min_gap = f64::INFINITY;
    for (i, r) in radii.iter().enumerate() {
        let v = v_traj.states[i].u;
        let u = u_states[i].u;
        let gap = (u - v) / v.abs().max(1.0);
        if gap < min_gap {
            min_gap = gap;
        }
        let _ = r;
    }
    let strict_expected = forcing(0.0) > 0.0;
    let passed = min_gap >= -1e-8;
    if !passed {
        return Err(PolyharmError::HypothesisViolated(-min_gap));
    }
    Ok(ComparisonVerdict {
        u_trajectory: u_traj,
        v_trajectory: v_traj,
        min_gap,
        strict_expected,
        passed,
    })
}

/// The quadratic super-solution `z(r) = u(0) + u''(0)·r²/2` dominates the
/// trajectory strictly for r > 0 (planar case).
pub fn supersolution_gap(traj: &Trajectory) -> Result<f64, PolyharmError> {
    let spec = &traj.spec;
    if spec.n != 2 || spec.m != Order::Two {
        return Err(PolyharmError::WrongSpec {
            expected: "(n=2, m=2)".into(),
            got: format!("(n={}, m={:?})", spec.n, spec.m),
        });
    }
    let origin = traj
        .origin
        .ok_or_else(|| PolyharmError::InvalidSpec("trajectory lacks origin data".into()))?;
    let u2_origin = origin.b / spec.nf();
    let mut min_gap = f64::INFINITY;
    for (r, s) in traj.radii.iter().zip(&traj.states) {
        let z = origin.a + 0.5 * u2_origin * r * r;
        min_gap = min_gap.min((z - s.u) / s.u.abs().max(1.0));
    }
    Ok(min_gap)
}
