//! Benchmark problem zoo with analytic constants.
//!
//! Every instance declares its Lipschitz/smoothness constants in closed form.
//! Where a map is not globally Lipschitz (quadratic outer maps, quadratic
//! channels), the constant is a level-set cap computed analytically over the
//! instance's sampling box and labeled as such in `constants_note`; samples
//! and solver iterates stay inside that box for every shipped configuration.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::problem::{derive_constants, maps, pieces, CompositeProblem, ConstantRegistry};
use crate::sampling::{rng_for, ProbeRegion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    Convex,
    NegativeChannel,
    CSquared,
    Stl,
}

/// A named problem with analytic constants and, when available, the optimal
/// value and a minimizer.
#[derive(Debug)]
pub struct BenchmarkInstance {
    pub name: String,
    pub problem: Arc<CompositeProblem>,
    pub registry: ConstantRegistry,
    pub f_star: Option<f64>,
    pub x_star: Option<DVector<f64>>,
    pub x0: DVector<f64>,
    pub tags: Vec<Tag>,
    /// Box on which the declared constants are valid.
    pub region: ProbeRegion,
    pub params: Value,
    pub constants_note: Option<String>,
}

pub const ZOO_NAMES: [&str; 6] = ["P1", "P1-smooth", "P2", "P3", "P4", "P5"];

pub fn describe(name: &str) -> &'static str {
    match name {
        "P1" => "robust regression: l1 objective, l1 loss on a curved feature map",
        "P1-smooth" => "smooth-channel regression: quadratic outer map over softplus channels",
        "P2" => "disjunction encoding: product of squared hinges over disk predicates",
        "P3" => "exact penalty: quadratic objective with weighted l1 on an equality map",
        "P4" => "negative channels: wells outer map over quadratic distance channels",
        "P5" => "strongly convex quadratic composite with known optimum",
        _ => "",
    }
}

/// Instantiates a zoo problem. `params` overrides instance parameters (JSON
/// object; unknown keys are errors), `seed` drives all random data.
pub fn instantiate(name: &str, params: Option<&Value>, seed: u64) -> Result<BenchmarkInstance> {
    match name {
        "P1" => p1(params, seed),
        "P1-smooth" => p1_smooth(params, seed),
        "P2" => p2(params, seed),
        "P3" => p3(params, seed),
        "P4" => p4(params, seed),
        "P5" => p5(params, seed),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

fn parse_params<T: for<'de> Deserialize<'de> + Default>(params: Option<&Value>) -> Result<T> {
    match params {
        None => Ok(T::default()),
        Some(v) => {
            serde_json::from_value(v.clone()).map_err(|e| Error::config(format!("bad params: {e}")))
        }
    }
}

fn check_version(version: u32) -> Result<()> {
    if version != 1 {
        return Err(Error::config(format!(
            "unsupported params version {version} (expected 1)"
        )));
    }
    Ok(())
}

fn uniform(rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn uniform_vec(rng: &mut rand_chacha::ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

// --- P1: robust regression -------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct P1Params {
    version: u32,
    m: usize,
    d: usize,
    lambda: f64,
    eps: f64,
    box_halfwidth: f64,
}

impl Default for P1Params {
    fn default() -> Self {
        P1Params {
            version: 1,
            m: 8,
            d: 12,
            lambda: 1.0,
            eps: 0.3,
            box_halfwidth: 2.0,
        }
    }
}

fn p1(params: Option<&Value>, seed: u64) -> Result<BenchmarkInstance> {
    let p: P1Params = parse_params(params)?;
    check_version(p.version)?;
    let mut rng = rng_for(seed, 0);
    let scale = 1.0 / (p.m as f64).sqrt();
    let a = DMatrix::from_fn(p.d, p.m, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0));
    let b = DMatrix::from_fn(p.d, p.m, |_, _| 2.0 * rng.random::<f64>() - 1.0);
    let x_true = uniform_vec(&mut rng, p.m, 0.5);
    let mut y = &a * &x_true;
    for v in y.iter_mut() {
        *v += 0.05 * (2.0 * rng.random::<f64>() - 1.0);
    }
    let c = maps::sine_perturbed_affine(a, b, -y, p.eps);
    let problem = Arc::new(CompositeProblem::new(
        pieces::scaled_l1(p.m, p.lambda),
        pieces::scaled_l1(p.d, 1.0),
        c,
        maps::zero_scalar(0),
        vec![],
    )?);
    let registry = derive_constants(&problem, &[])?;
    let x0 = DVector::zeros(p.m);
    Ok(BenchmarkInstance {
        name: "P1".into(),
        problem,
        registry,
        f_star: None,
        x_star: None,
        x0: x0.clone(),
        tags: vec![Tag::CSquared],
        region: ProbeRegion::Box {
            center: x0,
            halfwidth: p.box_halfwidth,
        },
        params: json!({
            "version": 1, "m": p.m, "d": p.d, "lambda": p.lambda, "eps": p.eps,
            "box_halfwidth": p.box_halfwidth,
        }),
        constants_note: None,
    })
}

// --- P1-smooth: all channels C^1 -------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct P1SmoothParams {
    version: u32,
    m: usize,
    n: usize,
    lambda: f64,
    box_halfwidth: f64,
}

impl Default for P1SmoothParams {
    fn default() -> Self {
        P1SmoothParams {
            version: 1,
            m: 6,
            n: 10,
            lambda: 0.1,
            box_halfwidth: 2.0,
        }
    }
}

fn p1_smooth(params: Option<&Value>, seed: u64) -> Result<BenchmarkInstance> {
    let p: P1SmoothParams = parse_params(params)?;
    check_version(p.version)?;
    let mut rng = rng_for(seed, 0);
    let scale = 1.0 / (p.m as f64).sqrt();
    let rows: Vec<DVector<f64>> = (0..p.n)
        .map(|_| uniform_vec(&mut rng, p.m, scale))
        .collect();
    // negative offsets keep the channel values (and hence the outer weights)
    // bounded away from zero at the start
    let offsets: Vec<f64> = (0..p.n).map(|_| uniform(&mut rng, -1.5, -0.5)).collect();
    let x0 = DVector::zeros(p.m);
    // reachable channel values over the box: softplus(z) <= max(0, z) + ln 2
    let radius = p.box_halfwidth * (p.m as f64).sqrt();
    let caps: Vec<f64> = rows
        .iter()
        .zip(&offsets)
        .map(|(a, b)| (a.norm() * radius + b.abs()).max(0.0) + std::f64::consts::LN_2 + 0.25)
        .collect();
    let l_s = caps.iter().map(|c| c * c).sum::<f64>().sqrt();
    let channels: Vec<_> = rows
        .iter()
        .zip(&offsets)
        .map(|(a, b)| pieces::affine_softplus(a.clone(), *b))
        .collect();
    let problem = Arc::new(CompositeProblem::new(
        pieces::scaled_l1(p.m, p.lambda),
        pieces::zero(1),
        maps::zero_map(p.m, 1),
        maps::quadratic_outer(p.n).with_value_lipschitz(l_s),
        channels,
    )?);
    let registry = derive_constants(&problem, &[])?;
    Ok(BenchmarkInstance {
        name: "P1-smooth".into(),
        problem,
        registry,
        f_star: None,
        x_star: None,
        x0: x0.clone(),
        tags: vec![Tag::Convex, Tag::CSquared],
        region: ProbeRegion::Box {
            center: x0,
            halfwidth: p.box_halfwidth,
        },
        params: json!({
            "version": 1, "m": p.m, "n": p.n, "lambda": p.lambda, "box_halfwidth": p.box_halfwidth,
        }),
        constants_note: Some(format!(
            "L_s = {l_s:.6} is a level-set cap over the sampling box"
        )),
    })
}

// --- P2: disjunction of disk predicates -------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct P2Params {
    version: u32,
    m: usize,
    disks: usize,
    radius: f64,
    spread: f64,
    box_halfwidth: f64,
}

impl Default for P2Params {
    fn default() -> Self {
        P2Params {
            version: 1,
            m: 2,
            disks: 2,
            radius: 1.0,
            spread: 3.0,
            box_halfwidth: 5.0,
        }
    }
}

fn p2(params: Option<&Value>, seed: u64) -> Result<BenchmarkInstance> {
    let p: P2Params = parse_params(params)?;
    check_version(p.version)?;
    if p.disks < 1 {
        return Err(Error::config("P2 needs at least one disk"));
    }
    let mut rng = rng_for(seed, 0);
    // centers kept away from the start so every predicate is violated at x0
    let mut centers: Vec<DVector<f64>> = Vec::new();
    while centers.len() < p.disks {
        let c = uniform_vec(&mut rng, p.m, p.spread);
        if c.norm() >= p.radius + 0.5 {
            centers.push(c);
        }
    }
    let x0 = DVector::zeros(p.m);
    let radius = p.box_halfwidth * (p.m as f64).sqrt();
    let cap = centers
        .iter()
        .map(|c| radius + c.norm() - p.radius)
        .fold(0.0_f64, f64::max)
        .max(1.0)
        + 0.25;
    let n = p.disks as f64;
    let l_s = 2.0 * n.sqrt() * cap.powi(2 * p.disks as i32 - 1);
    let beta_s = if p.disks == 1 {
        2.0
    } else {
        2.0 * cap.powi(2 * (p.disks as i32 - 1)) * (n * (4.0 * n - 3.0)).sqrt()
    };
    let channels: Vec<_> = centers
        .iter()
        .map(|c| pieces::ball_distance(c.clone(), p.radius))
        .collect();
    let s = maps::product_plus_squared(p.disks)
        .with_value_lipschitz(l_s)
        .with_jacobian_lipschitz(beta_s);
    let problem = Arc::new(CompositeProblem::new(
        pieces::zero(p.m),
        pieces::zero(1),
        maps::zero_map(p.m, 1),
        s,
        channels,
    )?);
    let registry = derive_constants(&problem, &[])?;
    Ok(BenchmarkInstance {
        name: "P2".into(),
        problem,
        registry,
        f_star: Some(0.0),
        x_star: Some(centers[0].clone()),
        x0: x0.clone(),
        tags: vec![Tag::Stl],
        region: ProbeRegion::Box {
            center: x0,
            halfwidth: p.box_halfwidth,
        },
        params: json!({
            "version": 1, "m": p.m, "disks": p.disks, "radius": p.radius, "spread": p.spread,
            "box_halfwidth": p.box_halfwidth,
        }),
        constants_note: Some(format!(
            "L_s = {l_s:.6}, beta_s = {beta_s:.6} are level-set caps over the sampling box"
        )),
    })
}

// --- P3: exact penalty on a sphere constraint --------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct P3Params {
    version: u32,
    m: usize,
    ref_norm: f64,
    box_halfwidth: f64,
}

impl Default for P3Params {
    fn default() -> Self {
        P3Params {
            version: 1,
            m: 3,
            ref_norm: 2.0,
            box_halfwidth: 1.5,
        }
    }
}

fn p3(params: Option<&Value>, seed: u64) -> Result<BenchmarkInstance> {
    let p: P3Params = parse_params(params)?;
    check_version(p.version)?;
    if p.ref_norm <= 1.0 {
        return Err(Error::config("P3 needs ref_norm > 1"));
    }
    let mut rng = rng_for(seed, 0);
    let mut dir = uniform_vec(&mut rng, p.m, 1.0);
    while dir.norm() < 1e-3 {
        dir = uniform_vec(&mut rng, p.m, 1.0);
    }
    let x_ref = &dir * (p.ref_norm / dir.norm());
    let w = p.ref_norm; // exactness needs w > (ref_norm - 1)/2
    let x_star = &x_ref / p.ref_norm;
    let f_star = 0.5 * (p.ref_norm - 1.0) * (p.ref_norm - 1.0);

    let x_ref_map = x_ref.clone();
    let reach = x_ref.norm() + p.box_halfwidth * (p.m as f64).sqrt();
    let c = crate::problem::SmoothMap::new(
        p.m,
        1,
        "sphere-equality",
        Box::new(move |x: &DVector<f64>| DVector::from_element(1, x.norm_squared() - 1.0)),
        Box::new(|x: &DVector<f64>| {
            DMatrix::from_row_iterator(1, x.len(), x.iter().map(|v| 2.0 * v))
        }),
        2.0,
    )
    .with_component_hessian(Box::new(|x: &DVector<f64>, _| {
        DMatrix::identity(x.len(), x.len()) * 2.0
    }))
    .with_hessian_lipschitz(0.0)
    .with_value_lipschitz(2.0 * reach);

    let problem = Arc::new(CompositeProblem::new(
        pieces::quadratic_distance(x_ref.clone(), 1.0),
        pieces::scaled_l1(1, w),
        c,
        maps::zero_scalar(0),
        vec![],
    )?);
    let registry = derive_constants(&problem, &[])?;
    let x0 = &x_ref_map * 1.2;
    Ok(BenchmarkInstance {
        name: "P3".into(),
        problem,
        registry,
        f_star: Some(f_star),
        x_star: Some(x_star),
        x0: x0.clone(),
        tags: vec![Tag::CSquared],
        region: ProbeRegion::Box {
            center: x0,
            halfwidth: p.box_halfwidth,
        },
        params: json!({
            "version": 1, "m": p.m, "ref_norm": p.ref_norm, "box_halfwidth": p.box_halfwidth,
        }),
        constants_note: None,
    })
}

// --- P4: negative channels ----------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct P4Params {
    version: u32,
    m: usize,
    n: usize,
    spread: f64,
    box_halfwidth: f64,
}

impl Default for P4Params {
    fn default() -> Self {
        P4Params {
            version: 1,
            m: 3,
            n: 3,
            spread: 1.0,
            box_halfwidth: 2.5,
        }
    }
}

fn p4(params: Option<&Value>, seed: u64) -> Result<BenchmarkInstance> {
    let p: P4Params = parse_params(params)?;
    check_version(p.version)?;
    let mut rng = rng_for(seed, 0);
    let centers: Vec<DVector<f64>> = (0..p.n)
        .map(|_| uniform_vec(&mut rng, p.m, p.spread))
        .collect();
    let x0 = DVector::zeros(p.m);
    let radius = p.box_halfwidth * (p.m as f64).sqrt();
    let channel_caps: Vec<f64> = centers.iter().map(|c| radius + c.norm() + 0.25).collect();
    // r_i ranges over [0, cap_i^2/2]; grad s component 2 y_i - 1
    let y_caps: Vec<f64> = channel_caps.iter().map(|c| 0.5 * c * c).collect();
    let l_s = y_caps
        .iter()
        .map(|y| (2.0 * y - 1.0).abs().max(1.0).powi(2))
        .sum::<f64>()
        .sqrt();
    let channels: Vec<_> = centers
        .iter()
        .zip(&channel_caps)
        .map(|(c, cap)| pieces::quadratic_distance(c.clone(), 1.0).with_lipschitz(*cap))
        .collect();
    let problem = Arc::new(CompositeProblem::new(
        pieces::zero(p.m),
        pieces::zero(1),
        maps::zero_map(p.m, 1),
        maps::wells_outer(p.n).with_value_lipschitz(l_s),
        channels,
    )?);
    let lin: Vec<usize> = (0..p.n).collect();
    let registry = derive_constants(&problem, &lin)?;
    Ok(BenchmarkInstance {
        name: "P4".into(),
        problem,
        registry,
        f_star: None,
        x_star: None,
        x0: x0.clone(),
        tags: vec![Tag::NegativeChannel, Tag::CSquared],
        region: ProbeRegion::Box {
            center: x0,
            halfwidth: p.box_halfwidth,
        },
        params: json!({
            "version": 1, "m": p.m, "n": p.n, "spread": p.spread, "box_halfwidth": p.box_halfwidth,
        }),
        constants_note: Some(format!(
            "L_s = {l_s:.6} and channel Lipschitz caps are level-set constants over the sampling box"
        )),
    })
}

// --- P5: strongly convex quadratic composite -----------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct P5Params {
    version: u32,
    m: usize,
    n: usize,
    sv_min: f64,
    sv_max: f64,
    box_halfwidth: f64,
}

impl Default for P5Params {
    fn default() -> Self {
        P5Params {
            version: 1,
            m: 6,
            n: 8,
            sv_min: 0.7,
            sv_max: 1.3,
            box_halfwidth: 4.0,
        }
    }
}

fn p5(params: Option<&Value>, seed: u64) -> Result<BenchmarkInstance> {
    let p: P5Params = parse_params(params)?;
    check_version(p.version)?;
    if p.n < p.m {
        return Err(Error::config("P5 needs n >= m for strong convexity"));
    }
    let mut rng = rng_for(seed, 0);
    let a = controlled_spectrum_matrix(&mut rng, p.n, p.m, p.sv_min, p.sv_max);
    let mut x_star = uniform_vec(&mut rng, p.m, 1.0);
    if x_star.norm() > 1.0 {
        x_star /= x_star.norm();
    }
    let b = &a * &x_star;
    let rows: Vec<DVector<f64>> = (0..p.n).map(|i| a.row(i).transpose()).collect();
    let channels: Vec<_> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| pieces::affine(r.clone(), -b[i]))
        .collect();
    let radius = p.box_halfwidth * (p.m as f64).sqrt();
    let a_frob = a.norm();
    let l_s = a_frob * (radius + x_star.norm()) + 1.0;
    let problem = Arc::new(CompositeProblem::new(
        pieces::zero(p.m),
        pieces::zero(1),
        maps::zero_map(p.m, 1),
        maps::quadratic_outer(p.n).with_value_lipschitz(l_s),
        channels,
    )?);
    let lin: Vec<usize> = (0..p.n).collect();
    let registry = derive_constants(&problem, &lin)?;
    let offset = uniform_vec(&mut rng, p.m, 1.0);
    let x0 = &x_star + &offset + DVector::from_element(p.m, 0.5);
    Ok(BenchmarkInstance {
        name: "P5".into(),
        problem,
        registry,
        f_star: Some(0.0),
        x_star: Some(x_star),
        x0: x0.clone(),
        tags: vec![Tag::Convex, Tag::CSquared],
        region: ProbeRegion::Box {
            center: x0,
            halfwidth: p.box_halfwidth,
        },
        params: json!({
            "version": 1, "m": p.m, "n": p.n, "sv_min": p.sv_min, "sv_max": p.sv_max,
            "box_halfwidth": p.box_halfwidth,
        }),
        constants_note: Some("L_s is a level-set cap over the sampling box".into()),
    })
}

/// Dense matrix with singular values drawn uniformly from `[sv_min, sv_max]`.
fn controlled_spectrum_matrix(
    rng: &mut rand_chacha::ChaCha8Rng,
    n: usize,
    m: usize,
    sv_min: f64,
    sv_max: f64,
) -> DMatrix<f64> {
    let gu = DMatrix::from_fn(n, n, |_, _| 2.0 * rng.random::<f64>() - 1.0);
    let gv = DMatrix::from_fn(m, m, |_, _| 2.0 * rng.random::<f64>() - 1.0);
    let qu = gu.qr().q();
    let qv = gv.qr().q();
    let mut sigma = DMatrix::zeros(n, m);
    for i in 0..m.min(n) {
        sigma[(i, i)] = uniform(rng, sv_min, sv_max);
    }
    qu * sigma * qv.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_names_instantiate() {
        for name in ZOO_NAMES {
            let inst = instantiate(name, None, 0).unwrap();
            assert_eq!(inst.name, name);
            assert!(inst.problem.objective(&inst.x0).unwrap().is_finite());
        }
    }

    #[test]
    fn unknown_name_is_an_error() {
        assert!(matches!(
            instantiate("P9", None, 0),
            Err(Error::UnknownProblem(_))
        ));
    }

    #[test]
    fn unknown_param_keys_are_errors() {
        let params = json!({"m": 4, "typo_key": 1});
        assert!(instantiate("P5", Some(&params), 0).is_err());
    }

    #[test]
    fn p5_identity_like_case() {
        // m = n = 1 with a pinned spectrum gives F = (x - x*)^2/2-ish data;
        // the declared L_U equals the squared singular value.
        let params = json!({"m": 1, "n": 1, "sv_min": 1.0, "sv_max": 1.0});
        let inst = instantiate("P5", Some(&params), 3).unwrap();
        assert!((inst.registry.l_upper - 1.0).abs() < 1e-9);
        let x_star = inst.x_star.clone().unwrap();
        assert!(inst.problem.objective(&x_star).unwrap().abs() < 1e-20);
    }

    #[test]
    fn p5_optimum_is_consistent() {
        let inst = instantiate("P5", None, 11).unwrap();
        let x_star = inst.x_star.clone().unwrap();
        assert!(inst.problem.objective(&x_star).unwrap() < 1e-20);
        assert_eq!(inst.f_star, Some(0.0));
    }

    #[test]
    fn p2_predicates_are_positive_at_start() {
        let inst = instantiate("P2", None, 5).unwrap();
        let r = inst.problem.channel_values(&inst.x0).unwrap();
        assert!(r.iter().all(|&v| v > 0.0), "{r:?}");
        // objective vanishes at the first disk center
        let center = inst.x_star.clone().unwrap();
        assert_eq!(inst.problem.objective(&center).unwrap(), 0.0);
    }

    #[test]
    fn p3_optimum_matches_projection() {
        let inst = instantiate("P3", None, 9).unwrap();
        let x_star = inst.x_star.clone().unwrap();
        let f_at_star = inst.problem.objective(&x_star).unwrap();
        assert!((f_at_star - inst.f_star.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn p4_has_active_negative_channels_at_start() {
        let inst = instantiate("P4", None, 2).unwrap();
        let r = inst.problem.channel_values(&inst.x0).unwrap();
        let grad = inst.problem.s.scalar_gradient(&r).unwrap();
        assert!(grad.iter().any(|&w| w < 0.0), "{grad:?}");
    }

    #[test]
    fn same_seed_same_data() {
        let a = instantiate("P5", None, 7).unwrap();
        let b = instantiate("P5", None, 7).unwrap();
        assert_eq!(a.x0, b.x0);
        assert_eq!(a.registry, b.registry);
    }
}
