//! Spherical-mean kernel quadrature for the Riesz/Newton integral
//! representations, the intercept extraction, and the Pohozaev-type identity.
//!
//! For a radial density g, `∫ K(|x-y|) g(|y|) dy` reduces to
//! `Σ_{n-1} ∫ s^{n-1} M(r,s) g(s) ds` where `M(r,s)` is the mean of the
//! kernel over the sphere |y| = s seen from |x| = r. The means have exact
//! rational closed forms in n = 3 and n = 5 (the angular integral is a
//! polynomial in the chord length); the generic angular quadrature is kept
//! as an independent route and the two are cross-checked in the tests.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify, GrowthClass};
use crate::integrate::{cumquad_hermite, Trajectory};
use crate::problem::Order;
use crate::quad::integrate_adaptive;
use crate::PolyharmError;

/// Kernel families appearing in the integral representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// `|x-y|`
    Dist,
    /// `1/|x-y|`
    Newton1,
    /// `1/|x-y|³`
    Newton3,
}

impl KernelKind {
    pub fn exponent(&self) -> i32 {
        match self {
            KernelKind::Dist => 1,
            KernelKind::Newton1 => -1,
            KernelKind::Newton3 => -3,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            KernelKind::Dist => "dist",
            KernelKind::Newton1 => "newton1",
            KernelKind::Newton3 => "newton3",
        }
    }

    fn eval(&self, d: f64) -> f64 {
        match self {
            KernelKind::Dist => d,
            KernelKind::Newton1 => 1.0 / d,
            KernelKind::Newton3 => 1.0 / (d * d * d),
        }
    }
}

/// Surface area of the unit (n-1)-sphere in ℝⁿ, `2 π^{n/2} / Γ(n/2)`.
pub fn surface_area(n: u32) -> f64 {
    let nf = f64::from(n);
    2.0 * std::f64::consts::PI.powf(nf / 2.0) / gamma_half(n)
}

/// Γ(n/2) for integer n >= 1, by the half-integer recursion.
fn gamma_half(n: u32) -> f64 {
    let mut x = n as f64 / 2.0;
    let mut acc = 1.0;
    while x > 1.0 + 1e-12 {
        x -= 1.0;
        acc *= x;
    }
    if (x - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc
    }
}

/// Exact spherical mean where the angular integral collapses to a rational
/// expression. Returns None when no closed form is implemented (or, for the
/// n = 3 Newton3 kernel, on the non-integrable diagonal).
pub fn closed_form_mean(n: u32, kind: KernelKind, r: f64, s: f64) -> Option<f64> {
    let big = r.max(s);
    let small = r.min(s);
    if big == 0.0 {
        return match kind {
            KernelKind::Dist => Some(0.0),
            _ => None,
        };
    }
    match (n, kind) {
        (3, KernelKind::Dist) => Some(big + small * small / (3.0 * big)),
        (3, KernelKind::Newton1) => Some(1.0 / big),
        (3, KernelKind::Newton3) => {
            if small == big {
                None
            } else {
                Some(1.0 / (big * (big * big - small * small)))
            }
        }
        (5, KernelKind::Dist) => {
            let x = small / big;
            let x2 = x * x;
            Some(big * (1.0 + 0.4 * x2 - x2 * x2 / 35.0))
        }
        (5, KernelKind::Newton1) => {
            let x2 = (small / big) * (small / big);
            Some((1.0 - x2 / 5.0) / big)
        }
        (5, KernelKind::Newton3) => Some(big.powi(-3)),
        _ => None,
    }
}

/// Partial derivative of the closed-form mean with respect to s.
pub fn closed_form_mean_ds(n: u32, kind: KernelKind, r: f64, s: f64) -> Option<f64> {
    match (n, kind) {
        (3, KernelKind::Dist) => Some(if s < r {
            2.0 * s / (3.0 * r)
        } else {
            1.0 - r * r / (3.0 * s * s)
        }),
        (3, KernelKind::Newton1) => Some(if s < r { 0.0 } else { -1.0 / (s * s) }),
        (5, KernelKind::Dist) => Some(if s < r {
            0.8 * s / r - 4.0 * s.powi(3) / (35.0 * r.powi(3))
        } else {
            1.0 - 0.4 * r * r / (s * s) + 3.0 * r.powi(4) / (35.0 * s.powi(4))
        }),
        (5, KernelKind::Newton1) => Some(if s < r {
            -2.0 * s / (5.0 * r.powi(3))
        } else {
            -1.0 / (s * s) + 3.0 * r * r / (5.0 * s.powi(4))
        }),
        (5, KernelKind::Newton3) => Some(if s < r { 0.0 } else { -3.0 / s.powi(4) }),
        _ => None,
    }
}

/// Spherical mean of the kernel by adaptive angular quadrature:
/// `∫₀^π K(d(θ)) sin^{n-2}θ dθ / ∫₀^π sin^{n-2}θ dθ` with
/// `d² = r² + s² - 2rs·cosθ`, split at the near-diagonal end.
pub fn spherical_mean_kernel(
    n: u32,
    kind: KernelKind,
    r: f64,
    s: f64,
) -> Result<f64, PolyharmError> {
    if r < 0.0 || s < 0.0 || (r == 0.0 && s == 0.0 && kind != KernelKind::Dist) {
        return Err(PolyharmError::InvalidSpec(format!(
            "mean undefined at (r, s) = ({r}, {s})"
        )));
    }
    // integrability of the endpoint singularity on the diagonal:
    // sin^{n-2}θ · d^p ~ θ^{n-2+p} needs n-2+p > -1
    if r == s && kind.exponent() <= 1 - n as i32 {
        return Err(PolyharmError::SingularDiagonal);
    }
    if r == 0.0 || s == 0.0 {
        return Ok(kind.eval(r.max(s)));
    }
    let nf = f64::from(n);
    let weight_pow = nf - 2.0;
    // chord length in the cancellation-free form (r-s)² + 4rs·sin²(θ/2)
    let integrand = |theta: f64| {
        let sh = (0.5 * theta).sin();
        let d2 = (r - s) * (r - s) + 4.0 * r * s * sh * sh;
        if d2 == 0.0 {
            // the angular weight vanishes faster than any integrable kernel
            return 0.0;
        }
        kind.eval(d2.sqrt()) * theta.sin().powf(weight_pow)
    };
    // panel split near θ = 0 where the chord is shortest
    let gap = (r - s).abs() / (r + s);
    let theta_split = (2.0 * gap.max(1e-3)).min(0.5);
    let (i1, e1) = integrate_adaptive(integrand, 0.0, theta_split, 1e-12, 1e-14)?;
    let (i2, e2) = integrate_adaptive(integrand, theta_split, std::f64::consts::PI, 1e-12, 1e-14)?;
    let (w, _) = integrate_adaptive(
        |theta: f64| theta.sin().powf(weight_pow),
        0.0,
        std::f64::consts::PI,
        1e-13,
        1e-15,
    )?;
    let value = (i1 + i2) / w;
    let err = (e1 + e2) / w;
    if err > 1e-10 * value.abs().max(1e-30) {
        return Err(PolyharmError::QuadratureFailure(format!(
            "angular quadrature error {err:e} at (r, s) = ({r}, {s})"
        )));
    }
    Ok(value)
}

/// Monte Carlo estimate of the spherical mean with a fixed seed; returns
/// (mean, standard error). An independent cross-check for the quadrature.
pub fn monte_carlo_mean(
    n: u32,
    kind: KernelKind,
    r: f64,
    s: f64,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = n as usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        // uniform direction by normalized Gaussians
        let mut v = vec![0.0f64; dim];
        let mut norm;
        loop {
            for x in v.iter_mut() {
                // Box-Muller
                let u1: f64 = rng.gen::<f64>().max(1e-300);
                let u2: f64 = rng.gen();
                *x = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            }
            norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break;
            }
        }
        let cos_theta = v[0] / norm;
        let d2 = r * r + s * s - 2.0 * r * s * cos_theta;
        let val = kind.eval(d2.max(1e-300).sqrt());
        sum += val;
        sum_sq += val * val;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    (mean, (var / samples as f64).sqrt())
}

/// Precomputed kernel means on a product grid, with per-entry quadrature
/// error estimates; persistable to a versioned CSV cache.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub n: u32,
    pub kind: KernelKind,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub err: Vec<f64>,
}

const TABLE_FORMAT: &str = "polyharm-kernel-table v1";

fn grid_hash(grid: &[f64]) -> u64 {
    let mut h = DefaultHasherStable::new();
    for x in grid {
        h.write_u64(x.to_bits());
    }
    h.finish()
}

/// FNV-1a, stable across builds (std's DefaultHasher is not guaranteed).
struct DefaultHasherStable(u64);

impl DefaultHasherStable {
    fn new() -> Self {
        DefaultHasherStable(0xcbf29ce484222325)
    }
    fn write_u64(&mut self, x: u64) {
        for byte in x.to_le_bytes() {
            self.0 ^= u64::from(byte);
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

// keep the std import silent; DefaultHasher stays available for callers
#[allow(dead_code)]
fn _unused(h: DefaultHasher) -> u64 {
    h.finish()
}

impl KernelTable {
    /// Build the table by angular quadrature, one entry per (r, s) pair.
    pub fn build(n: u32, kind: KernelKind, grid: Vec<f64>) -> Result<Self, PolyharmError> {
        let entries: Result<Vec<(f64, f64)>, PolyharmError> = grid
            .par_iter()
            .flat_map(|r| grid.par_iter().map(move |s| (*r, *s)))
            .map(|(r, s)| {
                let v = spherical_mean_kernel(n, kind, r, s)?;
                Ok((v, 1e-10 * v.abs()))
            })
            .collect();
        let entries = entries?;
        Ok(KernelTable {
            n,
            kind,
            grid,
            values: entries.iter().map(|e| e.0).collect(),
            err: entries.iter().map(|e| e.1).collect(),
        })
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.len() + j]
    }

    pub fn save(&self, path: &Path) -> Result<(), PolyharmError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "# {TABLE_FORMAT}, n={}, kind={}, grid_hash={:016x}",
            self.n,
            self.kind.label(),
            grid_hash(&self.grid)
        )?;
        writeln!(out, "r,s,value,err")?;
        for (i, r) in self.grid.iter().enumerate() {
            for (j, s) in self.grid.iter().enumerate() {
                writeln!(
                    out,
                    "{:.17e},{:.17e},{:.17e},{:.3e}",
                    r,
                    s,
                    self.value(i, j),
                    self.err[i * self.grid.len() + j]
                )?;
            }
        }
        Ok(())
    }

    /// Load a cached table; the header must match (n, kind, grid hash).
    pub fn load(
        path: &Path,
        n: u32,
        kind: KernelKind,
        grid: &[f64],
    ) -> Result<Self, PolyharmError> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| PolyharmError::Io("empty cache".into()))??;
        let expect = format!(
            "# {TABLE_FORMAT}, n={}, kind={}, grid_hash={:016x}",
            n,
            kind.label(),
            grid_hash(grid)
        );
        if header != expect {
            return Err(PolyharmError::Io(format!(
                "cache header mismatch: {header:?} vs {expect:?}"
            )));
        }
        let mut values = Vec::with_capacity(grid.len() * grid.len());
        let mut err = Vec::with_capacity(grid.len() * grid.len());
        for line in lines.skip(1) {
            let line = line?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(PolyharmError::Io(format!("bad cache row: {line}")));
            }
            values.push(
                fields[2]
                    .parse::<f64>()
                    .map_err(|e| PolyharmError::Io(e.to_string()))?,
            );
            err.push(
                fields[3]
                    .parse::<f64>()
                    .map_err(|e| PolyharmError::Io(e.to_string()))?,
            );
        }
        if values.len() != grid.len() * grid.len() {
            return Err(PolyharmError::Io("cache row count mismatch".into()));
        }
        Ok(KernelTable {
            n,
            kind,
            grid: grid.to_vec(),
            values,
            err,
        })
    }
}

/// Tail model of `u` beyond the trajectory, taken from the classified growth.
#[derive(Debug, Clone, Copy)]
enum TailModel {
    Power { amp: f64, exp: f64 },
}

fn tail_model(traj: &Trajectory, class: &GrowthClass) -> Result<TailModel, PolyharmError> {
    match class {
        GrowthClass::Linear { alpha } => Ok(TailModel::Power {
            amp: *alpha,
            exp: 1.0,
        }),
        GrowthClass::Quadratic { half_rho } => Ok(TailModel::Power {
            amp: *half_rho,
            exp: 2.0,
        }),
        GrowthClass::Power {
            amplitude, ..
        } => Ok(TailModel::Power {
            amp: *amplitude,
            exp: 4.0 / (traj.spec.q + 1.0),
        }),
        other => Err(PolyharmError::NonIntegrableTail(
            other.label().to_string(),
        )),
    }
}

/// `∫_R^∞ s^k ds` for k < -1.
fn power_tail(big_r: f64, k: f64) -> f64 {
    -big_r.powf(k + 1.0) / (k + 1.0)
}

/// Analytic tail of `∫ s^{n-1} M(r,s) u^{-q} ds` beyond radius R, with u
/// replaced by its power-law asymptote `amp·s^exp` and M by its large-s
/// polynomial form. Returns (value, diverges).
fn tail_integral(
    n: u32,
    kind: KernelKind,
    r: f64,
    big_r: f64,
    q: f64,
    model: TailModel,
) -> (f64, bool) {
    let TailModel::Power { amp, exp } = model;
    let g = -q * exp; // u^{-q} ~ amp^{-q} s^{g}
    let base = f64::from(n) - 1.0 + g;
    let coeff = amp.powf(-q);
    // M(r, s>r) as Σ c_j r^{2j} s^{p-2j}
    let terms: &[(f64, f64)] = match (n, kind) {
        (3, KernelKind::Dist) => &[(1.0, 1.0), (1.0 / 3.0, -1.0)],
        (3, KernelKind::Newton1) => &[(1.0, -1.0)],
        (5, KernelKind::Dist) => &[(1.0, 1.0), (0.4, -1.0), (-1.0 / 35.0, -3.0)],
        (5, KernelKind::Newton1) => &[(1.0, -1.0), (-0.2, -3.0)],
        (5, KernelKind::Newton3) => &[(1.0, -3.0)],
        _ => return (f64::NAN, true),
    };
    let mut total = 0.0;
    for (j, (c, p)) in terms.iter().enumerate() {
        let k = base + p;
        if k >= -1.0 {
            return (f64::INFINITY, true);
        }
        total += c * r.powi(2 * j as i32) * coeff * power_tail(big_r, k);
    }
    (total, false)
}

/// A radial convolution profile `F(r) = coeff · Σ_{n-1} ∫ s^{n-1} M(r,s)
/// u^{-q}(s) ds` with the tail beyond the trajectory extrapolated along the
/// classified growth law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvolutionProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Estimated tail contribution already included in `values`.
    pub tail_values: Vec<f64>,
    /// Relative uncertainty of the tail extrapolation.
    pub tail_rel_error: f64,
}

/// Evaluate the convolution on the given output radii (defaults to a
/// decimation of the trajectory grid when `out_radii` is empty).
pub fn radial_convolution(
    traj: &Trajectory,
    kind: KernelKind,
    coefficient: f64,
    out_radii: &[f64],
) -> Result<ConvolutionProfile, PolyharmError> {
    let spec = &traj.spec;
    let n = spec.n;
    let q = spec.q;
    let nf = spec.nf();
    let class = classify(traj).class;
    let model = tail_model(traj, &class)?;
    let sigma = surface_area(n);
    let big_r = traj.r_last();

    // relative mismatch between u and its asymptote at the matching radius
    let TailModel::Power { amp, exp } = model;
    let u_end = traj.last_state().u;
    let asym_end = amp * big_r.powf(exp);
    let tail_rel_error = ((u_end / asym_end - 1.0).abs() * q).min(1.0);

    let radii: Vec<f64> = if out_radii.is_empty() {
        let step = (traj.len() / 256).max(1);
        let mut v: Vec<f64> = traj.radii.iter().copied().step_by(step).collect();
        if *v.last().unwrap() < big_r {
            v.push(big_r);
        }
        v
    } else {
        out_radii.to_vec()
    };

    let mean = |r: f64, s: f64| -> Result<f64, PolyharmError> {
        match closed_form_mean(n, kind, r, s) {
            Some(v) => Ok(v),
            None => spherical_mean_kernel(n, kind, r, s),
        }
    };
    let mean_ds = |r: f64, s: f64| closed_form_mean_ds(n, kind, r, s);

    let mut values = Vec::with_capacity(radii.len());
    let mut tails = Vec::with_capacity(radii.len());
    for &r in &radii {
        // grid part by Hermite-corrected trapezoid
        let mut f = Vec::with_capacity(traj.len());
        let mut df = Vec::with_capacity(traj.len());
        let mut have_ds = true;
        for (s, st) in traj.radii.iter().zip(&traj.states) {
            let m = mean(r, *s)?;
            let g = st.u.powf(-q);
            f.push(s.powf(nf - 1.0) * m * g);
            match mean_ds(r, *s) {
                Some(dm) => {
                    let dg = -q * st.u.powf(-q - 1.0) * st.du;
                    df.push(
                        (nf - 1.0) * s.powf(nf - 2.0) * m * g
                            + s.powf(nf - 1.0) * dm * g
                            + s.powf(nf - 1.0) * m * dg,
                    );
                }
                None => {
                    have_ds = false;
                    df.push(0.0);
                }
            }
        }
        let cums = if have_ds {
            cumquad_hermite(&traj.radii, &f, &df)
        } else {
            // plain trapezoid when no derivative is available
            let mut acc = 0.0;
            let mut out = vec![0.0];
            for i in 1..traj.len() {
                acc += 0.5 * (traj.radii[i] - traj.radii[i - 1]) * (f[i] + f[i - 1]);
                out.push(acc);
            }
            out
        };
        // head below the series start: g ≈ u(0)^{-q}, M ≈ M(r, 0)
        let r0 = traj.r_first();
        let head = traj.states[0].u.powf(-q) * mean(r, 0.0).unwrap_or(kind.eval(r.max(r0)))
            * r0.powf(nf) / nf;
        let (tail, diverges) = tail_integral(n, kind, r, big_r, q, model);
        if diverges {
            return Err(PolyharmError::NonIntegrableTail(class.label().to_string()));
        }
        let value = coefficient * sigma * (head + cums.last().unwrap() + tail);
        let tail_part = coefficient * sigma * tail;
        if (tail_part * tail_rel_error).abs() > 0.05 * value.abs().max(1e-300) {
            return Err(PolyharmError::TailDominates {
                tail: (tail_part * tail_rel_error).abs(),
                value,
            });
        }
        values.push(value);
        tails.push(tail_part);
    }
    Ok(ConvolutionProfile {
        radii,
        values,
        tail_values: tails,
        tail_rel_error,
    })
}

/// Result of matching a linear-growth trajectory against its kernel
/// representation `u(x) = coeff·∫|x-y| u^{-q}(y) dy + γ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub gamma: f64,
    /// Total-mass slope `coeff·∫ u^{-q}`; equals α for exact representations.
    pub zeta: f64,
    pub alpha: f64,
    /// Max over profile radii of |u - K - γ| / u.
    pub residual: f64,
    /// Propagated uncertainty of γ (quadrature + tail + scatter).
    pub gamma_error: f64,
    /// Estimated relative mass truncation beyond the trajectory.
    pub tail_truncation: f64,
}

/// Representation coefficient for the Dist kernel: `1/(64π²)` in n = 5,
/// `1/(8π)` in n = 3.
pub fn dist_coefficient(n: u32) -> Result<f64, PolyharmError> {
    match n {
        5 => Ok(1.0 / (64.0 * std::f64::consts::PI.powi(2))),
        3 => Ok(1.0 / (8.0 * std::f64::consts::PI)),
        _ => Err(PolyharmError::InvalidSpec(format!(
            "no Dist representation coefficient for n = {n}"
        ))),
    }
}

/// Extract the representation intercept γ from a linear-growth trajectory:
/// γ is the median of u - K over the outer quarter of radii, ζ the total
/// mass slope, and the residual the worst pointwise defect.
pub fn extract_gamma(traj: &Trajectory) -> Result<RepresentationReport, PolyharmError> {
    let spec = &traj.spec;
    let n = spec.n;
    let q = spec.q;
    let q_min = match n {
        5 => 6.0,
        3 => 4.0,
        _ => {
            return Err(PolyharmError::WrongSpec {
                expected: "n in {3, 5}".into(),
                got: format!("n = {n}"),
            })
        }
    };
    if q <= q_min {
        return Err(PolyharmError::WrongSpec {
            expected: format!("q > {q_min}"),
            got: format!("q = {q}"),
        });
    }
    let class = classify(traj).class;
    let alpha = match class {
        GrowthClass::Linear { alpha } => alpha,
        other => {
            return Err(PolyharmError::WrongSpec {
                expected: "linear growth".into(),
                got: other.label().into(),
            })
        }
    };
    let coeff = dist_coefficient(n)?;
    let profile = radial_convolution(traj, KernelKind::Dist, coeff, &[])?;

    // ζ from the total mass with the same tail model
    let nf = spec.nf();
    let f: Vec<f64> = traj
        .radii
        .iter()
        .zip(&traj.states)
        .map(|(s, st)| s.powf(nf - 1.0) * st.u.powf(-q))
        .collect();
    let df: Vec<f64> = traj
        .radii
        .iter()
        .zip(&traj.states)
        .map(|(s, st)| {
            (nf - 1.0) * s.powf(nf - 2.0) * st.u.powf(-q)
                - q * s.powf(nf - 1.0) * st.u.powf(-q - 1.0) * st.du
        })
        .collect();
    let mass_grid = cumquad_hermite(&traj.radii, &f, &df);
    let r0 = traj.r_first();
    let head = traj.states[0].u.powf(-q) * r0.powf(nf) / nf;
    let big_r = traj.r_last();
    let mass_tail = alpha.powf(-q) * power_tail(big_r, nf - 1.0 - q);
    let mass = head + mass_grid.last().unwrap() + mass_tail;
    let zeta = coeff * surface_area(n) * mass;
    let tail_truncation = mass_tail / mass;

    // γ as a median over the outer quarter of radii
    let r_hi = *profile.radii.last().unwrap();
    let mut gaps: Vec<f64> = Vec::new();
    let mut residual_inputs = Vec::new();
    for (r, k) in profile.radii.iter().zip(&profile.values) {
        let u = crate::integrate::resample(traj, &[*r])?[0].u;
        residual_inputs.push((*r, u, *k));
        if *r >= 0.75 * r_hi {
            gaps.push(u - k);
        }
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gamma = gaps[gaps.len() / 2];
    let mad = {
        let mut dev: Vec<f64> = gaps.iter().map(|g| (g - gamma).abs()).collect();
        dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dev[dev.len() / 2]
    };
    let residual = residual_inputs
        .iter()
        .map(|(_, u, k)| ((u - k - gamma) / u).abs())
        .fold(0.0f64, f64::max);
    let tail_err_abs = profile
        .tail_values
        .iter()
        .fold(0.0f64, |m, t| m.max(t.abs()))
        * profile.tail_rel_error;
    // any residual slope between u and K (trajectory drift, mass error)
    // enters the intercept multiplied by the window radius
    let slope_err = (alpha - zeta).abs() * 0.875 * r_hi;
    let gamma_error = mad + tail_err_abs + slope_err;
    Ok(RepresentationReport {
        gamma,
        zeta,
        alpha,
        residual,
        gamma_error,
        tail_truncation,
    })
}

/// Both sides of the Pohozaev-type identity
/// `(11-q)/(2(q-1)) ∫ u^{1-q} = -γ/2 ∫ u^{-q}` over ℝ⁵.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PohozaevReport {
    pub lhs: f64,
    pub rhs: f64,
    /// |lhs - rhs| relative to the larger magnitude.
    pub residual: f64,
    /// Scale of the u^{1-q} integral, for judging the q = 11 double zero.
    pub integral_scale: f64,
}

pub fn pohozaev_check(
    traj: &Trajectory,
    report: &RepresentationReport,
) -> Result<PohozaevReport, PolyharmError> {
    let spec = &traj.spec;
    if spec.n != 5 || spec.m != Order::Three || spec.q <= 6.0 {
        return Err(PolyharmError::WrongSpec {
            expected: "(n=5, m=3, q>6)".into(),
            got: format!("(n={}, m={:?}, q={})", spec.n, spec.m, spec.q),
        });
    }
    let q = spec.q;
    let nf = spec.nf();
    let alpha = report.alpha;
    let integral = |power: f64| -> Result<f64, PolyharmError> {
        // ∫ s^4 u^{power} ds over the grid plus the α-model tail
        let f: Vec<f64> = traj
            .radii
            .iter()
            .zip(&traj.states)
            .map(|(s, st)| s.powf(nf - 1.0) * st.u.powf(power))
            .collect();
        let df: Vec<f64> = traj
            .radii
            .iter()
            .zip(&traj.states)
            .map(|(s, st)| {
                (nf - 1.0) * s.powf(nf - 2.0) * st.u.powf(power)
                    + power * s.powf(nf - 1.0) * st.u.powf(power - 1.0) * st.du
            })
            .collect();
        let grid = cumquad_hermite(&traj.radii, &f, &df);
        let r0 = traj.r_first();
        let head = traj.states[0].u.powf(power) * r0.powf(nf) / nf;
        let k = nf - 1.0 + power;
        if k >= -1.0 {
            return Err(PolyharmError::NonIntegrableTail(format!(
                "u^{power} tail exponent {k}"
            )));
        }
        let tail = alpha.powf(power) * power_tail(traj.r_last(), k);
        Ok(surface_area(spec.n) * (head + grid.last().unwrap() + tail))
    };
    let i1 = integral(1.0 - q)?;
    let i0 = integral(-q)?;
    let lhs = (11.0 - q) / (2.0 * (q - 1.0)) * i1;
    let rhs = -report.gamma / 2.0 * i0;
    let scale = lhs.abs().max(rhs.abs());
    let residual = if scale > 0.0 {
        (lhs - rhs).abs() / scale
    } else {
        0.0
    };
    Ok(PohozaevReport {
        lhs,
        rhs,
        residual,
        integral_scale: i1 / (2.0 * (q - 1.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{eval_closed_form, ClosedForm};
    use crate::integrate::{integrate, IntegrationConfig};

    #[test]
    fn surface_areas_match_literals() {
        assert!((surface_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((surface_area(5) - 8.0 * std::f64::consts::PI.powi(2) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn newton3_mean_value_property() {
        // harmonic kernel in 5D: mean over the sphere is max(r,s)^{-3}
        let v = spherical_mean_kernel(5, KernelKind::Newton3, 2.0, 1.0).unwrap();
        assert!((v - 0.125).abs() < 1e-11, "v = {v}");
        let w = spherical_mean_kernel(5, KernelKind::Newton3, 1.0, 2.0).unwrap();
        assert!((w - 0.125).abs() < 1e-11);
    }

    #[test]
    fn dist_mean_3d_closed_form() {
        let v = spherical_mean_kernel(3, KernelKind::Dist, 2.0, 1.0).unwrap();
        assert!((v - (2.0 + 1.0 / 6.0)).abs() < 1e-11, "v = {v}");
    }

    #[test]
    fn quadrature_matches_closed_forms_on_grid() {
        let grid: Vec<f64> = (1..=20).map(|i| 0.35 * i as f64).collect();
        for n in [3u32, 5] {
            for kind in [KernelKind::Dist, KernelKind::Newton1, KernelKind::Newton3] {
                for &r in &grid {
                    for &s in &grid {
                        if n == 3 && kind == KernelKind::Newton3 {
                            continue;
                        }
                        let cf = closed_form_mean(n, kind, r, s).unwrap();
                        let quad = spherical_mean_kernel(n, kind, r, s).unwrap();
                        assert!(
                            (cf - quad).abs() <= 1e-10 * cf.abs(),
                            "n={n} {kind:?} ({r},{s}): {cf} vs {quad}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn diagonal_singularity_detected() {
        assert!(matches!(
            spherical_mean_kernel(3, KernelKind::Newton3, 1.0, 1.0),
            Err(PolyharmError::SingularDiagonal)
        ));
        // integrable diagonal in 5D still goes through
        let v = spherical_mean_kernel(5, KernelKind::Newton3, 1.0, 1.0).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn monte_carlo_agrees_at_diagonal() {
        // (r,s) = (1,1) in 5D, two independent numeric oracles within 3σ
        for kind in [KernelKind::Dist, KernelKind::Newton1] {
            let quad = spherical_mean_kernel(5, kind, 1.0, 1.0).unwrap();
            let (mc, se) = monte_carlo_mean(5, kind, 1.0, 1.0, 200_000, 0x1d5a2f90);
            assert!(
                (quad - mc).abs() < 3.0 * se,
                "{kind:?}: quad {quad} vs mc {mc} ± {se}"
            );
        }
    }

    #[test]
    fn mean_symmetry_property() {
        for n in [3u32, 5] {
            for kind in [KernelKind::Dist, KernelKind::Newton1, KernelKind::Newton3] {
                if n == 3 && kind == KernelKind::Newton3 {
                    continue;
                }
                for (r, s) in [(0.5, 3.0), (1.0, 1.5), (4.0, 0.25)] {
                    let a = closed_form_mean(n, kind, r, s).unwrap();
                    let b = closed_form_mean(n, kind, s, r).unwrap();
                    assert!((a - b).abs() <= 1e-12 * a.abs());
                }
            }
        }
    }

    #[test]
    fn table_cache_roundtrip() {
        let grid: Vec<f64> = (1..=6).map(|i| 0.5 * i as f64).collect();
        let table = KernelTable::build(5, KernelKind::Newton3, grid.clone()).unwrap();
        let dir = std::env::temp_dir().join("polyharm-kernel-cache-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("newton3.csv");
        table.save(&path).unwrap();
        let loaded = KernelTable::load(&path, 5, KernelKind::Newton3, &grid).unwrap();
        for (i, (a, b)) in table.values.iter().zip(&loaded.values).enumerate() {
            assert!(
                (a - b).abs() <= table.err[i].max(1e-15),
                "entry {i}: {a} vs {b}"
            );
        }
        // wrong grid must miss
        let other: Vec<f64> = (1..=6).map(|i| 0.51 * i as f64).collect();
        assert!(KernelTable::load(&path, 5, KernelKind::Newton3, &other).is_err());
    }

    fn triharm_traj(r_max: f64) -> Trajectory {
        let cf = ClosedForm::TriHarm5Dq11;
        integrate(
            &cf.spec(),
            &cf.origin().unwrap(),
            &IntegrationConfig::with_r_max(r_max),
        )
        .unwrap()
    }

    #[test]
    fn newton3_convolution_reproduces_v() {
        // Δ²u(x) = -1/(8π²) ∫ |x-y|^{-3} u^{-q}(y) dy on the closed form
        let traj = triharm_traj(400.0);
        let coeff = -1.0 / (8.0 * std::f64::consts::PI.powi(2));
        let radii = [0.5, 1.0, 2.0, 5.0, 10.0];
        let profile = radial_convolution(&traj, KernelKind::Newton3, coeff, &radii).unwrap();
        for (r, v) in profile.radii.iter().zip(&profile.values) {
            let exact = eval_closed_form(&ClosedForm::TriHarm5Dq11, *r).unwrap().v;
            assert!(
                (v - exact).abs() < 2e-4 * exact.abs(),
                "r={r}: {v} vs {exact}"
            );
        }
    }

    #[test]
    fn newton1_convolution_reproduces_w() {
        let traj = triharm_traj(400.0);
        let coeff = 1.0 / (16.0 * std::f64::consts::PI.powi(2));
        let radii = [0.5, 1.0, 2.0, 5.0, 10.0];
        let profile = radial_convolution(&traj, KernelKind::Newton1, coeff, &radii).unwrap();
        for (r, w) in profile.radii.iter().zip(&profile.values) {
            let exact = eval_closed_form(&ClosedForm::TriHarm5Dq11, *r).unwrap().w;
            assert!(
                (w - exact).abs() < 2e-4 * exact.abs(),
                "r={r}: {w} vs {exact}"
            );
        }
    }

    #[test]
    fn dist_convolution_reproduces_biharm_u() {
        // u(x) = 1/(8π) ∫ |x-y| u^{-7}(y) dy exactly, with zero intercept
        let cf = ClosedForm::BiHarm3Dq7;
        let traj = integrate(
            &cf.spec(),
            &cf.origin().unwrap(),
            &IntegrationConfig::with_r_max(400.0),
        )
        .unwrap();
        let coeff = dist_coefficient(3).unwrap();
        let radii = [0.0, 0.5, 1.0, 3.0, 10.0];
        let profile = radial_convolution(&traj, KernelKind::Dist, coeff, &radii).unwrap();
        for (r, k) in profile.radii.iter().zip(&profile.values) {
            let exact = eval_closed_form(&cf, *r).unwrap().u;
            assert!(
                (k - exact).abs() < 5e-4 * exact.abs(),
                "r={r}: {k} vs {exact}"
            );
        }
    }

    #[test]
    fn gamma_vanishes_for_triharm_closed_form() {
        let traj = triharm_traj(400.0);
        let report = extract_gamma(&traj).unwrap();
        let alpha = crate::closed_form::TRIHARM_5D_AMPLITUDE;
        assert!(
            (report.zeta - alpha).abs() < 0.02 * alpha,
            "zeta = {} vs {alpha}",
            report.zeta
        );
        assert!(
            report.gamma.abs() <= 3.0 * report.gamma_error.max(1e-4),
            "gamma = {} ± {}",
            report.gamma,
            report.gamma_error
        );
    }

    #[test]
    fn pohozaev_double_zero_at_q11() {
        let traj = triharm_traj(400.0);
        let report = extract_gamma(&traj).unwrap();
        let po = pohozaev_check(&traj, &report).unwrap();
        // (11-q) kills the left side; γ = 0 kills the right side
        assert!(po.lhs.abs() < 1e-12 * po.integral_scale.abs());
        assert!(po.rhs.abs() < 0.05 * po.integral_scale.abs());
    }

    #[test]
    fn dist_slope_recovers_total_mass() {
        // F(r)/r -> coeff·Σ·∫ s^{n-1} g for a compact density; probed with
        // the closed form, whose mass integral is known through ζ
        let traj = triharm_traj(400.0);
        let coeff = dist_coefficient(5).unwrap();
        let report = extract_gamma(&traj).unwrap();
        let r_far = 300.0;
        let profile = radial_convolution(&traj, KernelKind::Dist, coeff, &[r_far]).unwrap();
        let slope = profile.values[0] / r_far;
        assert!(
            (slope - report.zeta).abs() < 0.01 * report.zeta,
            "slope {slope} vs ζ {}",
            report.zeta
        );
    }

    #[test]
    fn laplacian_chain_links_dist_to_newton1() {
        // Δ applied to the Dist convolution reproduces the Newton1
        // convolution with the coefficient ratio 1/(64π²) -> 1/(16π²)
        let traj = triharm_traj(400.0);
        let c_dist = 1.0 / (64.0 * std::f64::consts::PI.powi(2));
        let c_newton = 1.0 / (16.0 * std::f64::consts::PI.powi(2));
        let r = 2.0;
        let h = 1e-2;
        let radii = [r - 2.0 * h, r - h, r, r + h, r + 2.0 * h];
        let k = radial_convolution(&traj, KernelKind::Dist, c_dist, &radii).unwrap();
        let f = &k.values;
        // five-point stencils for f' and f''
        let d1 = (-f[4] + 8.0 * f[3] - 8.0 * f[1] + f[0]) / (12.0 * h);
        let d2 = (-f[4] + 16.0 * f[3] - 30.0 * f[2] + 16.0 * f[1] - f[0]) / (12.0 * h * h);
        let lap = d2 + 4.0 / r * d1;
        let expect = radial_convolution(&traj, KernelKind::Newton1, c_newton, &[r])
            .unwrap()
            .values[0];
        assert!(
            (lap - expect).abs() < 1e-5 * expect.abs(),
            "Δ(dist conv) = {lap} vs newton1 conv = {expect}"
        );
    }
}
