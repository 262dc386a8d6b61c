use polyharm::integrate::*;
use polyharm::kernels::*;
use polyharm::*;

fn main() {
    let cf = polyharm::closed_form::ClosedForm::TriHarm5Dq11;
    let traj = integrate(&cf.spec(), &cf.origin().unwrap(), &IntegrationConfig::with_r_max(400.0)).unwrap();
    let coeff = dist_coefficient(5).unwrap();
    // replicate extract_gamma's decimation
    let step = (traj.len() / 256).max(1);
    let mut radii: Vec<f64> = traj.radii.iter().copied().step_by(step).collect();
    if *radii.last().unwrap() < traj.r_last() { radii.push(traj.r_last()); }
    let prof = radial_convolution(&traj, KernelKind::Dist, coeff, &radii).unwrap();
    let r_hi = *prof.radii.last().unwrap();
    let mut gaps = vec![];
    for (r, k) in prof.radii.iter().zip(&prof.values) {
        let u = resample(&traj, &[*r]).unwrap()[0].u;
        if *r >= 0.75 * r_hi {
            gaps.push((*r, u - k));
        }
    }
    for (r, g) in gaps.iter().take(5) { println!("r={r:.3} gap={g:+.4e}"); }
    println!("...");
    for (r, g) in gaps.iter().rev().take(5) { println!("r={r:.3} gap={g:+.4e}"); }
    let rep = extract_gamma(&traj).unwrap();
    println!("extract_gamma: gamma={:+.4e} ± {:.1e}, zeta={:.8}, resid={:.2e}, tail_trunc={:.2e}",
        rep.gamma, rep.gamma_error, rep.zeta, rep.residual, rep.tail_truncation);
}
