//! Builder-level properties: the cone ↔ splitting round trip, graph
//! transform against eigendecomposition, the product bound of the
//! restricted cocycles, the one-step coupler bound, the ζ sandwich and
//! the rank-one Lipschitz estimate.

mod common;

use common::{rng, span, v2};
use conedyn::cocycle::{restricted_step, sample_orbit, BaseSystem, CocycleSpec, OrbitTrace};
use conedyn::cone::ConeRankK;
use conedyn::error::Result;
use conedyn::linalg::{
    gap_distance, make_splitting, operator_norm, LinearMap, NumericsConfig, RealVector, Subspace,
};
use conedyn::scaled::ScaledMatrix;
use conedyn::splitting::{
    build_zeta_cone, extract_dominated_splitting, graph_transform_complement, zeta_index,
    ChiFunction, ConeFamily, SplittingFamily, ZetaConeData,
};
use nalgebra::DMatrix;
use rand::Rng;

/// Random 2-D contracting scenario: two Bernoulli symbols sharing an
/// eigenbasis P, both contracting the coordinate cone in P-coordinates.
pub fn random_contracting_scenario(seed: u64) -> (CocycleSpec, ConeRankK, f64) {
    let mut r = rng(seed);
    let (p, e_dir, f_dir) = loop {
        let te = r.random::<f64>() * std::f64::consts::PI;
        let df = 0.6 + 1.9 * r.random::<f64>();
        let tf = te + df;
        let e = v2(te.cos(), te.sin());
        let f = v2(tf.cos(), tf.sin());
        let mut m = DMatrix::zeros(2, 2);
        m.set_column(0, &e);
        m.set_column(1, &f);
        if m.determinant().abs() > 0.4 {
            break (m, e, f);
        }
    };
    let p_inv = p.clone().try_inverse().unwrap();
    let mut gens = Vec::new();
    for _ in 0..2 {
        let a = 1.5 + 1.5 * r.random::<f64>();
        let b = 0.15 + 0.35 * r.random::<f64>();
        let d = DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b]);
        gens.push(LinearMap::new(&p * d * &p_inv));
    }
    let spec = CocycleSpec::new(
        BaseSystem::Bernoulli {
            probabilities: vec![0.5, 0.5],
        },
        gens,
    )
    .unwrap();
    let opening = 0.4 + 0.5 * r.random::<f64>();
    let sp = make_splitting(&span(e_dir), &span(f_dir)).unwrap();
    let cone = ConeRankK::splitting_norm(sp, opening).unwrap();
    // Worst-case one-step separation over both symbols fixes chi.
    let cfg = NumericsConfig::default();
    let mut worst = f64::INFINITY;
    for g in &spec.generators {
        let pair = conedyn::cone::ConePair::new(cone.clone(), cone.clone(), g.clone()).unwrap();
        worst = worst.min(conedyn::cone::image_complement_separation(&pair, &cfg));
    }
    let chi = 1.25 / worst;
    (spec, cone, chi)
}

#[test]
fn roundtrip_closes_on_random_contracting_scenarios() {
    // extract(build_zeta(extract(C))) returns the same family within a
    // per-step gap of 1e-5; the full sweep over ten scenarios runs in the
    // acceptance suite, three spot checks run here.
    let cfg = NumericsConfig::default();
    for seed in [5, 6, 7] {
        let (spec, cone, chi) = random_contracting_scenario(seed);
        let trace = sample_orbit(&spec, 400, seed).unwrap();
        let family1 = extract_dominated_splitting(
            &trace,
            &ConeFamily::Constant(cone.clone()),
            Some(&ChiFunction::Constant(chi)),
            &cfg,
        )
        .unwrap();
        let data = ZetaConeData::new(&trace, &family1, None).unwrap();
        let lo = family1.start;
        let hi = family1.end() - data.truncation as i64 - 2;
        let cones: Vec<ConeRankK> = (lo..=hi)
            .map(|j| build_zeta_cone(&data, j, &cfg).unwrap())
            .collect();
        let family2 = extract_dominated_splitting(
            &trace,
            &ConeFamily::PerStep { start: lo, cones },
            None,
            &cfg,
        )
        .unwrap();
        let clo = family1.start.max(family2.start);
        let chi_hi = family1.end().min(family2.end());
        let mut worst = 0.0_f64;
        for j in clo..=chi_hi {
            let g = gap_distance(family1.at(j).e(), family2.at(j).e())
                .max(gap_distance(family1.at(j).f(), family2.at(j).f()));
            worst = worst.max(g);
        }
        assert!(worst < 1e-5, "seed {seed}: round trip gap {worst}");
    }
}

/// Eigen-complement of an upper-triangular matrix: the invariant subspace
/// spanned by the eigenvectors below the top, solved by back substitution.
fn triangular_eigen_complement(a: &DMatrix<f64>) -> Subspace {
    let d = a.nrows();
    let mut cols = Vec::new();
    for idx in 1..d {
        let lambda = a[(idx, idx)];
        // (A − λI) v = 0 with v[idx] = 1 and zeros below.
        let mut v = RealVector::zeros(d);
        v[idx] = 1.0;
        for i in (0..idx).rev() {
            let mut s = 0.0;
            for k in (i + 1)..=idx {
                s += a[(i, k)] * v[k];
            }
            v[i] = -s / (a[(i, i)] - lambda);
        }
        cols.push(v);
    }
    Subspace::span(&cols).unwrap()
}

#[test]
fn graph_transform_matches_triangular_eigenvectors() {
    let cfg = NumericsConfig::default();
    let mut r = rng(411);
    for trial in 0..20 {
        let d = if trial % 2 == 0 { 2 } else { 3 };
        // Log-spectral gaps of at least 0.3 between consecutive diagonals.
        let mut mu = 1.0 + r.random::<f64>();
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            a[(i, i)] = mu.exp();
            mu -= 0.3 + 0.8 * r.random::<f64>();
            for j in (i + 1)..d {
                a[(i, j)] = 2.0 * conedyn::linalg::sample_gaussian(&mut r);
            }
        }
        let spec = CocycleSpec::constant(LinearMap::new(a.clone())).unwrap();
        let trace = sample_orbit(&spec, 160, 1).unwrap();
        let mut e1 = RealVector::zeros(d);
        e1[0] = 1.0;
        let e_family = vec![span(e1); 120];
        let f0 = {
            let mut m = DMatrix::zeros(d, d - 1);
            for c in 0..d - 1 {
                m[(c + 1, c)] = 1.0;
            }
            Subspace::new(m).unwrap()
        };
        let f0_family = vec![f0; 120];
        let out = graph_transform_complement(&trace, &e_family, &f0_family, 0, 20, None, &cfg)
            .unwrap();
        let expected = triangular_eigen_complement(&a);
        for f in &out {
            let g = gap_distance(f, &expected);
            assert!(g < 1e-6, "trial {trial} (d={d}): gap {g}");
        }
    }
}

fn contracting_family(
    trace: &OrbitTrace,
    cone: &ConeRankK,
    chi: f64,
) -> Result<SplittingFamily> {
    extract_dominated_splitting(
        trace,
        &ConeFamily::Constant(cone.clone()),
        Some(&ChiFunction::Constant(chi)),
        &NumericsConfig::default(),
    )
}

#[test]
fn restricted_product_bound_along_traces() {
    // ‖T̃ⁿ‖ ‖(Tⁿ|_E)⁻¹‖ ≤ K̂ e^{n (log τ̄_S + 2ε)} with finite fitted K̂,
    // where T̃ is the F₀-compression of the cocycle.
    let cfg = NumericsConfig::default();
    let (spec, cone, chi) = random_contracting_scenario(21);
    let trace = sample_orbit(&spec, 300, 3).unwrap();
    let family = contracting_family(&trace, &cone, chi).unwrap();

    // tau_S per step from the supplied chi.
    let tau_bar_log = conedyn::cone::tau_s_from_chi(chi).ln();
    let eps = 0.01;

    let f0 = cone.splitting().f().clone();
    let sp0 = make_splitting(family.at(family.start).e(), &f0).unwrap();
    let pi2 = sp0.proj_f().clone();
    let mut prod_e = ScaledMatrix::identity(1);
    let mut tilde = ScaledMatrix::from_matrix(pi2.clone());
    let mut khat: f64 = 0.0;
    let steps = (family.len() - 1).min(120);
    for i in 0..steps {
        let j = family.start + i as i64;
        let a = trace.matrix(j).unwrap();
        let me = restricted_step(a, family.at(j).e(), family.at(j + 1).e(), j, 1e-6).unwrap();
        prod_e = prod_e.premultiply(&me);
        tilde = tilde.premultiply(a);
        // Compress back onto F0 after each step.
        tilde = ScaledMatrix::from_matrix(&pi2 * tilde.dense());
        let n = (i + 1) as f64;
        let lhs_log = tilde.log_operator_norm() + prod_e.log_inverse_norm();
        khat = khat.max(lhs_log - n * (tau_bar_log + 2.0 * eps));
    }
    assert!(
        khat.exp().is_finite() && khat.exp() < 1e6,
        "fitted K̂ {} too large",
        khat.exp()
    );
}

#[test]
fn one_step_coupler_bound() {
    // ‖(A|_E)⁻¹ Π₁ A Π₂‖ ≤ χ(θ⁻¹ω) ‖Π₂(ω)‖ at every step with a
    // contracting cone of witness χ.
    let (spec, cone, chi) = random_contracting_scenario(22);
    let trace = sample_orbit(&spec, 300, 4).unwrap();
    let family = contracting_family(&trace, &cone, chi).unwrap();
    let f0 = cone.splitting().f();
    for i in 0..(family.len() - 1).min(150) {
        let j = family.start + i as i64;
        let a = trace.matrix(j).unwrap();
        let e_cur = family.at(j).e();
        let e_next = family.at(j + 1).e();
        let cur = make_splitting(e_cur, f0).unwrap();
        let next = make_splitting(e_next, f0).unwrap();
        let me = restricted_step(a, e_cur, e_next, j, 1e-6).unwrap();
        let me_inv = me.try_inverse().unwrap();
        let op = e_cur.basis() * me_inv * e_next.basis().transpose() * next.proj_e() * a
            * cur.proj_f();
        let lhs = operator_norm(&op);
        let rhs = chi * operator_norm(cur.proj_f());
        assert!(lhs <= rhs + 1e-9, "step {j}: {lhs} > {rhs}");
    }
}

#[test]
fn zeta_sandwich_between_component_ratios() {
    // ‖v_F‖/‖v_E‖ ≤ ζ(v) ≤ (1 + K e^{−δ/2}/(1−e^{−δ/2})) ‖v_F‖/‖v_E‖.
    let (spec, cone, chi) = random_contracting_scenario(23);
    let trace = sample_orbit(&spec, 300, 5).unwrap();
    let family = contracting_family(&trace, &cone, chi).unwrap();
    let data = ZetaConeData::new(&trace, &family, None).unwrap();
    let j = family.start + 4;
    let sp = family.at(j);
    let factor = 1.0
        + family.k_bound * (-0.5 * data.delta).exp() / (1.0 - (-0.5 * data.delta).exp());
    let mut r = rng(77);
    for _ in 0..200 {
        let v = common::unit(2, &mut r);
        let pe = sp.project_e(&v);
        let pf = sp.project_f(&v);
        if pe.norm() < 1e-6 || pf.norm() < 1e-9 {
            continue;
        }
        let ratio = pf.norm() / pe.norm();
        let (z, tail) = zeta_index(&data, j, &v).unwrap();
        assert!(z >= ratio - 1e-12, "lower sandwich: {z} < {ratio}");
        assert!(
            z <= factor * ratio + tail + 1e-9,
            "upper sandwich: {z} > {factor} * {ratio}"
        );
    }
}

#[test]
fn rank_one_zeta_is_lipschitz_near_the_section() {
    // |ζ(w) − ζ(u)| ≤ [16 K (‖π_E‖+1)² / (1 − e^{−δ})] |w − u| whenever
    // |u − w| < 1/(4 ‖π_E‖), for w on the cone section.
    let (spec, cone, chi) = random_contracting_scenario(24);
    let trace = sample_orbit(&spec, 300, 6).unwrap();
    let family = contracting_family(&trace, &cone, chi).unwrap();
    let data = ZetaConeData::new(&trace, &family, None).unwrap();
    let cfg = NumericsConfig::default();
    let j = family.start + 2;
    let zc = build_zeta_cone(&data, j, &cfg).unwrap();
    let pe_norm = operator_norm(family.at(j).proj_e());
    let lip = 16.0 * family.k_bound * (pe_norm + 1.0).powi(2) / (1.0 - (-data.delta).exp());
    let radius = 1.0 / (4.0 * pe_norm);
    let mut r = rng(88);
    let mut checked = 0;
    for w in zc.section_samples(300, 0.4, 909) {
        // Perturb within the Lipschitz radius.
        let dir = common::unit(2, &mut r);
        let t = r.random::<f64>() * 0.8 * radius;
        let u_raw = &w + dir * t;
        let u = &u_raw / u_raw.norm();
        if (&u - &w).norm() >= radius {
            continue;
        }
        let (zw, tw) = zeta_index(&data, j, &w).unwrap();
        let (zu, tu) = zeta_index(&data, j, &u).unwrap();
        if !zw.is_finite() || !zu.is_finite() {
            continue;
        }
        checked += 1;
        assert!(
            (zw - zu).abs() <= lip * (&u - &w).norm() + tw + tu + 1e-9,
            "Lipschitz violated: |{zw} - {zu}| > {lip} * {}",
            (&u - &w).norm()
        );
    }
    assert!(checked > 100, "checked {checked} pairs");
}

#[test]
fn nested_cone_level_separation_formula() {
    // For the constant diag(2, 1/2) system the level-0 orbit cone is a
    // planar sector in closed form; its one-step image separation from the
    // complement of the shrunk target exceeds the reciprocal of the
    // formula witness χ computed from the level data.
    let spec = CocycleSpec::constant(LinearMap::from_rows(&[
        vec![2.0, 0.0],
        vec![0.0, 0.5],
    ]))
    .unwrap();
    let trace = sample_orbit(&spec, 900, 1).unwrap();
    let cfg = NumericsConfig::default();
    let met = conedyn::splitting::met_decomposition(&trace, &cfg).unwrap();
    let window = 520;
    let cones =
        conedyn::splitting::build_nested_cones(&trace, &met, &[0], 1.0, 0, window, &cfg).unwrap();
    let cone = &cones[0];
    let eps = cone.epsilon;
    let l = cone.opening;

    // Empirical equivalence constant and projection norms at the image step.
    let mut k_equiv: f64 = 1.0;
    for v in conedyn::linalg::unit_sphere_grid(2, 64, 7) {
        let val =
            conedyn::cocycle::lyapunov_norm(&trace, &met, 0, &v, 1, window, Some(eps)).unwrap();
        k_equiv = k_equiv.max(val.k_ratio);
    }
    let chi = conedyn::splitting::level_chi(&met, 0, l, eps, k_equiv, 1.0).unwrap();

    // Closed-form geometry: the Lyapunov weights reduce the cone to
    // {a2 |y| <= l a1 |x|} with two-sided and one-sided geometric sums.
    let q = (-eps).exp();
    let a1 = (1.0 + q) / (1.0 - q);
    let a2 = 1.0 / (1.0 - q);
    let l_eff = l * a1 / a2;
    let image = (l_eff / 4.0).atan();
    let target = (l_eff * (-eps).exp()).atan();
    let separation = (target - image).sin();
    assert!(
        separation >= 1.0 / chi,
        "sampled separation {separation} below 1/chi = {}",
        1.0 / chi
    );
}

#[test]
fn extraction_rejects_a_violated_cone() {
    // A rotation breaks the invariance probe before any construction runs.
    let spec = CocycleSpec::constant(LinearMap::from_rows(&[
        vec![0.0, -1.0],
        vec![1.0, 0.0],
    ]))
    .unwrap();
    let trace = sample_orbit(&spec, 120, 1).unwrap();
    let cone = ConeRankK::planar_standard(1.0).unwrap();
    assert!(matches!(
        extract_dominated_splitting(
            &trace,
            &ConeFamily::Constant(cone),
            Some(&ChiFunction::Constant(2.0)),
            &NumericsConfig::default(),
        ),
        Err(conedyn::Error::NotStrictlyInvariant { .. })
    ));
}
