//! Sampled validation of declared oracle contracts: finite-difference checks
//! of Jacobians/gradients/Hessians, convexity and subgradient-inequality
//! sampling, declared-vs-observed Lipschitz ratios, and prox first-order
//! conditions. Failures are data in the report, never errors.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::CompositeProblem;
use crate::error::Result;
use crate::exec::{map_indexed, ExecMode};
use crate::sampling::{rng_for, ProbeRegion};

/// Relative tolerance for finite-difference agreement.
pub const FD_REL_TOL: f64 = 1e-4;
/// Default finite-difference step scale; the step used is `step * (1 + ||x||)`.
pub const FD_STEP: f64 = 1e-5;
/// Slack for sampled convexity and subgradient inequalities.
pub const CONVEXITY_TOL: f64 = 1e-9;
/// KKT tolerance for prox first-order conditions.
pub const PROX_KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub oracle: String,
    /// Max relative FD discrepancy over probes; `None` when FD was skipped
    /// (no smooth data declared).
    pub max_fd_discrepancy: Option<f64>,
    pub convexity_violations: usize,
    pub subgradient_violations: usize,
    /// Max of observed difference quotient / declared Lipschitz constant;
    /// `None` when no constant is declared.
    pub lipschitz_ratio: Option<f64>,
    pub prox_kkt_residual: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub probes: usize,
    pub seed: u64,
    pub fd_step: f64,
    pub oracles: Vec<OracleReport>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&OracleReport> {
        self.oracles.iter().filter(|o| !o.pass).collect()
    }
}

/// Central difference of a scalar function along coordinate `i`.
fn central_diff(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, i: usize, h: f64) -> f64 {
    let mut xp = x.clone();
    let mut xm = x.clone();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

fn fd_scale(x: &DVector<f64>, step: f64) -> f64 {
    step * (1.0 + x.norm())
}

/// Validates every oracle of `problem` on `probes` points drawn from
/// `region`, using execution mode `mode` for the sweep.
pub fn validate_oracles(
    problem: &CompositeProblem,
    region: &ProbeRegion,
    probes: usize,
    seed: u64,
    fd_step: f64,
    mode: ExecMode,
) -> Result<ValidationReport> {
    let m = problem.dim();
    assert_eq!(region.dim(), m, "probe region dimension mismatch");

    // smooth maps are checked against finite differences of their values,
    // component Hessians against finite differences of Jacobian rows
    let mut oracles = vec![
        validate_map(problem, region, probes, seed, fd_step, mode, MapSlot::C),
        validate_map(
            problem,
            region,
            probes,
            seed ^ 0x5eed,
            fd_step,
            mode,
            MapSlot::S,
        ),
        validate_piece(
            problem,
            PieceSlot::G,
            region,
            probes,
            seed ^ 0x11,
            fd_step,
            mode,
        ),
        validate_piece(
            problem,
            PieceSlot::H,
            region,
            probes,
            seed ^ 0x22,
            fd_step,
            mode,
        ),
    ];
    for i in 0..problem.n_channels() {
        oracles.push(validate_piece(
            problem,
            PieceSlot::Channel(i),
            region,
            probes,
            seed ^ (0x33 + i as u64),
            fd_step,
            mode,
        ));
    }

    let pass = oracles.iter().all(|o| o.pass);
    Ok(ValidationReport {
        probes,
        seed,
        fd_step,
        oracles,
        pass,
    })
}

#[derive(Clone, Copy)]
enum MapSlot {
    C,
    S,
}

#[derive(Clone, Copy)]
enum PieceSlot {
    G,
    H,
    Channel(usize),
}

fn validate_map(
    problem: &CompositeProblem,
    region: &ProbeRegion,
    probes: usize,
    seed: u64,
    fd_step: f64,
    mode: ExecMode,
    slot: MapSlot,
) -> OracleReport {
    let map = match slot {
        MapSlot::C => &problem.c,
        MapSlot::S => &problem.s,
    };
    let name = match slot {
        MapSlot::C => format!("C:{}", map.label()),
        MapSlot::S => format!("s:{}", map.label()),
    };
    // s is probed on R(x) for x in the region, so probes stay on the
    // level-set-relevant part of its domain.
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Option<DVector<f64>> {
        let x = region.sample(rng);
        match slot {
            MapSlot::C => Some(x),
            MapSlot::S => problem.channel_values(&x).ok(),
        }
    };

    let per_probe = map_indexed(mode, probes, |k| {
        let mut rng = rng_for(seed, k as u64);
        let Some(x) = draw(&mut rng) else {
            return (f64::INFINITY, 0.0);
        };
        let h = fd_scale(&x, fd_step);
        let jac = match map.jacobian(&x) {
            Ok(j) => j,
            Err(_) => return (f64::INFINITY, 0.0),
        };
        let mut max_rel = 0.0_f64;
        for i in 0..map.input_dim() {
            for j in 0..map.output_dim() {
                let fd = central_diff(
                    &|p: &DVector<f64>| map.value(p).map(|v| v[j]).unwrap_or(f64::NAN),
                    &x,
                    i,
                    h,
                );
                let rel = (jac[(j, i)] - fd).abs() / (1.0 + fd.abs());
                max_rel = max_rel.max(rel);
            }
        }
        // component Hessians against FD of Jacobian rows
        let mut max_hess = 0.0_f64;
        if map.has_hessians() {
            for j in 0..map.output_dim() {
                if let Some(Ok(hess)) = map.component_hessian(&x, j) {
                    for i in 0..map.input_dim() {
                        for l in 0..map.input_dim() {
                            let fd = central_diff(
                                &|p: &DVector<f64>| {
                                    map.jacobian(p).map(|jm| jm[(j, l)]).unwrap_or(f64::NAN)
                                },
                                &x,
                                i,
                                h,
                            );
                            let rel = (hess[(l, i)] - fd).abs() / (1.0 + fd.abs());
                            max_hess = max_hess.max(rel);
                        }
                    }
                }
            }
        }
        (
            max_rel.max(max_hess),
            observed_map_quotient(map, &x, region, &mut rng),
        )
    });

    let max_fd = per_probe.iter().map(|p| p.0).fold(0.0_f64, f64::max);
    let lipschitz_ratio = map.value_lipschitz().map(|l| {
        if l == 0.0 {
            let worst = per_probe.iter().map(|p| p.1).fold(0.0_f64, f64::max);
            return if worst <= 1e-12 { 0.0 } else { f64::INFINITY };
        }
        per_probe.iter().map(|p| p.1 / l).fold(0.0_f64, f64::max)
    });

    let pass = max_fd <= FD_REL_TOL && lipschitz_ratio.is_none_or(|r| r <= 1.0 + 1e-6);
    OracleReport {
        oracle: name,
        max_fd_discrepancy: Some(max_fd),
        convexity_violations: 0,
        subgradient_violations: 0,
        lipschitz_ratio,
        prox_kkt_residual: None,
        pass,
    }
}

fn observed_map_quotient(
    map: &super::SmoothMap,
    x: &DVector<f64>,
    _region: &ProbeRegion,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> f64 {
    use rand::Rng;
    // pair x with a nearby second point in the same region scale
    let mut y = x.clone();
    for v in y.iter_mut() {
        *v += 0.1 * (2.0 * rng.random::<f64>() - 1.0);
    }
    let (vx, vy) = match (map.value(x), map.value(&y)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return f64::INFINITY,
    };
    let dn = (&y - x).norm();
    if dn == 0.0 {
        0.0
    } else {
        (vx - vy).norm() / dn
    }
}

fn validate_piece(
    problem: &CompositeProblem,
    slot: PieceSlot,
    region: &ProbeRegion,
    probes: usize,
    seed: u64,
    fd_step: f64,
    mode: ExecMode,
) -> OracleReport {
    let piece = match slot {
        PieceSlot::G => &problem.g,
        PieceSlot::H => &problem.h,
        PieceSlot::Channel(i) => &problem.channels[i],
    };
    let name = match slot {
        PieceSlot::G => format!("g:{}", piece.label()),
        PieceSlot::H => format!("h:{}", piece.label()),
        PieceSlot::Channel(i) => format!("r{}:{}", i, piece.label()),
    };

    // h is probed on C(x); g and channels on x directly.
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Option<DVector<f64>> {
        let x = region.sample(rng);
        match slot {
            PieceSlot::H => problem.c.value(&x).ok(),
            _ => Some(x),
        }
    };

    struct ProbeOutcome {
        fd: Option<f64>,
        convexity_violation: bool,
        subgradient_violation: bool,
        quotient: f64,
        prox_kkt: Option<f64>,
    }

    let outcomes = map_indexed(mode, probes, |k| {
        use rand::Rng;
        let mut rng = rng_for(seed, k as u64);
        let (Some(x), Some(y)) = (draw(&mut rng), draw(&mut rng)) else {
            return ProbeOutcome {
                fd: None,
                convexity_violation: true,
                subgradient_violation: true,
                quotient: f64::INFINITY,
                prox_kkt: None,
            };
        };
        let vx = piece.value(&x).unwrap_or(f64::NAN);
        let vy = piece.value(&y).unwrap_or(f64::NAN);
        // indicator pieces: skip samples where either endpoint is infeasible
        if !vx.is_finite() || !vy.is_finite() {
            return ProbeOutcome {
                fd: None,
                convexity_violation: false,
                subgradient_violation: false,
                quotient: 0.0,
                prox_kkt: None,
            };
        }
        let scale = 1.0 + vx.abs().max(vy.abs());

        // convexity along the segment
        let t: f64 = rng.random();
        let mid = &x * t + &y * (1.0 - t);
        let vmid = piece.value(&mid).unwrap_or(f64::INFINITY);
        let convexity_violation = vmid > t * vx + (1.0 - t) * vy + CONVEXITY_TOL * scale;

        // subgradient inequality value(y) >= value(x) + <sg(x), y - x>
        let sg = piece.subgradient(&x).unwrap();
        let subgradient_violation = vy < vx + sg.dot(&(&y - &x)) - CONVEXITY_TOL * scale;

        // FD of the declared gradient, when the piece is smooth
        let fd = if piece.is_smooth() {
            let h = fd_scale(&x, fd_step);
            let grad = piece.gradient(&x).unwrap().unwrap();
            let mut max_rel = 0.0_f64;
            for i in 0..x.len() {
                let d = central_diff(
                    &|p: &DVector<f64>| piece.value(p).unwrap_or(f64::NAN),
                    &x,
                    i,
                    h,
                );
                max_rel = max_rel.max((grad[i] - d).abs() / (1.0 + d.abs()));
            }
            Some(max_rel)
        } else {
            None
        };

        let dn = (&y - &x).norm();
        let quotient = if dn == 0.0 { 0.0 } else { (vx - vy).abs() / dn };

        // prox first-order condition via the subgradient inequality at y:
        // (p - y*)/t must be a subgradient at y*.
        let prox_kkt = if piece.has_prox() {
            let t_prox = 0.5 + rng.random::<f64>();
            let ystar = piece.prox(&x, t_prox).unwrap().unwrap();
            let v_star = piece.value(&ystar).unwrap_or(f64::INFINITY);
            let g_vec = (&x - &ystar) / t_prox;
            let mut worst = 0.0_f64;
            for probe in [&y, &x] {
                let vp = piece.value(probe).unwrap_or(f64::INFINITY);
                if vp.is_finite() && v_star.is_finite() {
                    let gap = v_star + g_vec.dot(&(probe - &ystar)) - vp;
                    worst = worst.max(gap / scale);
                }
            }
            Some(worst)
        } else {
            None
        };

        ProbeOutcome {
            fd,
            convexity_violation,
            subgradient_violation,
            quotient,
            prox_kkt,
        }
    });

    let max_fd = outcomes
        .iter()
        .filter_map(|o| o.fd)
        .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))));
    let convexity_violations = outcomes.iter().filter(|o| o.convexity_violation).count();
    let subgradient_violations = outcomes.iter().filter(|o| o.subgradient_violation).count();
    let lipschitz_ratio = piece.lipschitz().map(|l| {
        let worst = outcomes.iter().map(|o| o.quotient).fold(0.0_f64, f64::max);
        if l == 0.0 {
            return if worst <= 1e-12 { 0.0 } else { f64::INFINITY };
        }
        worst / l
    });
    let prox_kkt = outcomes
        .iter()
        .filter_map(|o| o.prox_kkt)
        .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))));

    let pass = max_fd.is_none_or(|v| v <= FD_REL_TOL)
        && convexity_violations == 0
        && subgradient_violations == 0
        && lipschitz_ratio.is_none_or(|r| r <= 1.0 + 1e-6)
        && prox_kkt.is_none_or(|r| r <= PROX_KKT_TOL);

    OracleReport {
        oracle: name,
        max_fd_discrepancy: max_fd,
        convexity_violations,
        subgradient_violations,
        lipschitz_ratio,
        prox_kkt_residual: prox_kkt,
        pass,
    }
}

/// Finite-difference Hessian of a scalar function (used as an independent
/// oracle in tests).
pub fn fd_hessian(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let m = x.len();
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut xpp = x.clone();
            let mut xpm = x.clone();
            let mut xmp = x.clone();
            let mut xmm = x.clone();
            xpp[i] += h;
            xpp[j] += h;
            xpm[i] += h;
            xpm[j] -= h;
            xmp[i] -= h;
            xmp[j] += h;
            xmm[i] -= h;
            xmm[j] -= h;
            hess[(i, j)] = (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * h * h);
        }
    }
    hess
}

#[cfg(test)]
mod tests {
    use super::super::{maps, pieces, CompositeProblem, SmoothMap};
    use super::*;

    // s(y) = 1/2 ||y||^2 over one identity-ish channel: exact gradient passes FD.
    #[test]
    fn quadratic_outer_passes_fd() {
        let p = CompositeProblem::new(
            pieces::zero(2),
            pieces::zero(1),
            maps::zero_map(2, 1),
            maps::quadratic_outer(2).with_value_lipschitz(10.0),
            vec![
                pieces::affine(DVector::from_vec(vec![1.0, 0.0]), 0.0),
                pieces::affine(DVector::from_vec(vec![0.0, 1.0]), 0.0),
            ],
        )
        .unwrap();
        let report = validate_oracles(
            &p,
            &ProbeRegion::unit_box(2),
            50,
            0,
            FD_STEP,
            ExecMode::Sequential,
        )
        .unwrap();
        assert!(report.pass, "{report:?}");
        let s_report = report
            .oracles
            .iter()
            .find(|o| o.oracle.starts_with("s:"))
            .unwrap();
        assert!(s_report.max_fd_discrepancy.unwrap() <= 1e-6);
    }

    #[test]
    fn wrong_jacobian_is_flagged() {
        // deliberately scaled x2
        let bad_c = SmoothMap::new(
            1,
            1,
            "bad",
            Box::new(|x: &DVector<f64>| x.clone()),
            Box::new(|_| DMatrix::from_element(1, 1, 2.0)),
            0.0,
        );
        let p = CompositeProblem::new(
            pieces::zero(1),
            pieces::scaled_l1(1, 1.0),
            bad_c,
            maps::zero_scalar(0),
            vec![],
        )
        .unwrap();
        let report = validate_oracles(
            &p,
            &ProbeRegion::unit_box(1),
            20,
            0,
            FD_STEP,
            ExecMode::Sequential,
        )
        .unwrap();
        assert!(!report.pass);
        let c_report = report
            .oracles
            .iter()
            .find(|o| o.oracle.starts_with("C:"))
            .unwrap();
        assert!(!c_report.pass);
    }

    #[test]
    fn hinge_passes_convexity_with_fd_skipped() {
        let p = CompositeProblem::new(
            pieces::zero(1),
            pieces::zero(1),
            maps::zero_map(1, 1),
            maps::identity_scalar(1),
            vec![pieces::hinge()],
        )
        .unwrap();
        let report = validate_oracles(
            &p,
            &ProbeRegion::unit_box(1),
            1000,
            3,
            FD_STEP,
            ExecMode::Sequential,
        )
        .unwrap();
        assert!(report.pass, "{report:?}");
        let r0 = report
            .oracles
            .iter()
            .find(|o| o.oracle.starts_with("r0:"))
            .unwrap();
        assert!(
            r0.max_fd_discrepancy.is_none(),
            "FD must be skipped at nonsmooth channels"
        );
        assert_eq!(r0.convexity_violations, 0);
    }

    use nalgebra::{DMatrix, DVector};
}
