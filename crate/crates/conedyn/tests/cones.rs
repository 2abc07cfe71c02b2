//! Cone angle/contraction properties: the dichotomy of small angle
//! indices, the gap–angle comparison bounds, the per-pair contraction
//! inequality, ordering of the Birkhoff-type coefficients and their
//! submultiplicativity, plus agreement of the planar separation route
//! with the closed-form boundary-ray oracle.

mod common;

use common::{rng, separation_oracle, v2, PlanarArcOracle};
use conedyn::cone::{
    analyze_cone_pair, angle_index_subspaces, angle_index_vectors, angle_index_vectors_with_grid,
    focusing_polynomial, image_complement_separation, ConePair, ConeRankK,
};
use conedyn::linalg::{
    make_splitting, separation_index, LinearMap, NumericsConfig, RealVector, SeparationTarget,
    Subspace,
};
use nalgebra::DMatrix;
use rand::Rng;

/// Random planar cone with a controlled minimum splitting angle.
fn random_planar_cone<R: Rng>(r: &mut R) -> (ConeRankK, RealVector, RealVector, f64) {
    loop {
        let te = r.random::<f64>() * std::f64::consts::PI;
        let tf = r.random::<f64>() * std::f64::consts::PI;
        let e = v2(te.cos(), te.sin());
        let f = v2(tf.cos(), tf.sin());
        let opening = 0.3 + 1.2 * r.random::<f64>();
        let se = Subspace::span(&[e.clone()]).unwrap();
        let sf = Subspace::span(&[f.clone()]).unwrap();
        let Ok(sp) = make_splitting(&se, &sf) else {
            continue;
        };
        if sp.min_principal_sine() < 0.35 {
            continue;
        }
        if let Ok(c) = ConeRankK::splitting_norm(sp, opening) {
            return (c, e, f, opening);
        }
    }
}

/// Random strictly invariant planar cone pair: the target is built around
/// the image arc with angular margin on both sides.
fn random_planar_pair<R: Rng>(r: &mut R) -> ConePair {
    loop {
        let (c1, e1, f1, l1) = random_planar_cone(r);
        let m = DMatrix::from_fn(2, 2, |_, _| conedyn::linalg::sample_gaussian(r));
        let map = LinearMap::new(m.clone());
        if !map.is_injective() {
            continue;
        }
        let arc = PlanarArcOracle::from_cone_data(&e1, &f1, l1).map_through(&m);
        // Target cone: orthogonal splitting around the image-arc center,
        // widened by a random margin.
        let margin = 0.1 + 0.35 * r.random::<f64>();
        let half = 0.5 * arc.width() + margin;
        if half >= std::f64::consts::FRAC_PI_2 - 0.05 {
            continue;
        }
        let center = 0.5 * (arc.lo + arc.hi);
        let e2 = v2(center.cos(), center.sin());
        let f2 = v2(-center.sin(), center.cos());
        let sp2 = make_splitting(
            &Subspace::span(&[e2]).unwrap(),
            &Subspace::span(&[f2]).unwrap(),
        )
        .unwrap();
        let Ok(c2) = ConeRankK::splitting_norm(sp2, half.tan()) else {
            continue;
        };
        if let Ok(pair) = ConePair::new(c1, c2, map) {
            return pair;
        }
    }
}

#[test]
fn planar_separation_agrees_with_boundary_ray_oracle() {
    let cfg = NumericsConfig::default();
    let mut r = rng(301);
    for trial in 0..40 {
        let pair = random_planar_pair(&mut r);
        let sep = image_complement_separation(&pair, &cfg);
        // Oracle: closed-form boundary rays of both cones.
        let src = &pair.source;
        let e1 = src.splitting().e().basis().column(0).into_owned();
        let f1 = src.splitting().f().basis().column(0).into_owned();
        let arc1 = PlanarArcOracle::from_cone_data(&e1, &f1, src.opening())
            .map_through(pair.map.matrix());
        let tgt = &pair.target;
        let e2 = tgt.splitting().e().basis().column(0).into_owned();
        let f2 = tgt.splitting().f().basis().column(0).into_owned();
        let arc2 = PlanarArcOracle::from_cone_data(&e2, &f2, tgt.opening());
        let oracle = separation_oracle(&arc1, &arc2);
        assert!(
            (sep - oracle).abs() < 1e-6,
            "trial {trial}: separation {sep} vs oracle {oracle}"
        );
    }
}

#[test]
fn angle_dichotomy_below_one_recomputes_to_zero() {
    // Pairs spanning a plane inside a rank-2 cone in R³ have angle zero;
    // whenever the computed index is below 1 − 1e-6, a 10x finer scan must
    // collapse it to zero.
    let cfg = NumericsConfig::default();
    let e = Subspace::span(&[
        RealVector::from_vec(vec![1.0, 0.0, 0.0]),
        RealVector::from_vec(vec![0.0, 1.0, 0.0]),
    ])
    .unwrap();
    let f = Subspace::span(&[RealVector::from_vec(vec![0.0, 0.0, 1.0])]).unwrap();
    let cone = ConeRankK::splitting_norm(make_splitting(&e, &f).unwrap(), 0.8).unwrap();
    let mut r = rng(302);
    let mut checked = 0;
    for _ in 0..200 {
        // Perturbed interior vectors whose span stays close to E.
        let a = common::unit(2, &mut r);
        let b = common::unit(2, &mut r);
        let u = RealVector::from_vec(vec![a[0], a[1], 0.08 * r.random::<f64>()]);
        let v = RealVector::from_vec(vec![b[0], b[1], 0.08 * r.random::<f64>()]);
        let Ok(alpha) = angle_index_vectors(&cone, &u, &v, &cfg) else {
            continue;
        };
        if alpha < 1.0 - 1e-6 {
            checked += 1;
            let fine = angle_index_vectors_with_grid(&cone, &u, &v, &cfg, 20_480).unwrap();
            assert!(
                fine == 0.0,
                "alpha {alpha} below one must vanish on the fine grid, got {fine}"
            );
        }
    }
    assert!(checked > 50, "dichotomy cases sampled: {checked}");
}

#[test]
fn angle_gap_comparison_bounds() {
    // log α ≤ α − 1 ≤ K d(E1,E2) with K = 2(1/δ⁴+6/δ³+7/δ²+6/δ+2), and
    // d(E1,E2) ≤ min{2(max{α,1}−1)/dist_(L,C), 2}.
    let cfg = NumericsConfig::default();
    let mut r = rng(303);
    for _ in 0..60 {
        let (cone, _, _, _) = random_planar_cone(&mut r);
        // Interior lines sampled through the cone's own sampler.
        let vs = cone.section_samples(2, 0.0, r.random());
        let Ok(e1) = Subspace::span(&[vs[0].clone()]) else {
            continue;
        };
        let Ok(e2) = Subspace::span(&[vs[1].clone()]) else {
            continue;
        };
        let Ok(alpha) = angle_index_subspaces(&cone, &e1, &e2, &cfg) else {
            continue;
        };
        let gap = conedyn::linalg::gap_distance(&e1, &e2);
        // δ is the separation of the lines from the complement of the cone.
        let d1 = complement_separation(&cone, &e1, &cfg);
        let d2 = complement_separation(&cone, &e2, &cfg);
        let dmin = d1.min(d2);
        if dmin <= 1e-3 {
            continue;
        }
        let k = 2.0
            * (1.0 / dmin.powi(4) + 6.0 / dmin.powi(3) + 7.0 / dmin.powi(2) + 6.0 / dmin + 2.0);
        if alpha > 1.0 {
            assert!(
                alpha.ln() <= alpha - 1.0 + 1e-12,
                "log {alpha} > alpha - 1"
            );
            assert!(
                alpha - 1.0 <= k * gap + 1e-9,
                "alpha - 1 = {} exceeds K d = {}",
                alpha - 1.0,
                k * gap
            );
        }
        // Reverse bound with L = the cone's slow axis.
        let l_sub = cone.splitting().f().clone();
        let dist_lc = separation_index(&l_sub, SeparationTarget::Cone(&cone), &cfg).unwrap();
        if dist_lc > 1e-3 {
            let bound = (2.0 * (alpha.max(1.0) - 1.0) / dist_lc).min(2.0);
            assert!(
                gap <= bound + 1e-6,
                "gap {gap} exceeds angle bound {bound} (alpha {alpha})"
            );
        }
    }
}

/// dist_(line, X∖C): separation of a line from the cone complement.
fn complement_separation(cone: &ConeRankK, line: &Subspace, _cfg: &NumericsConfig) -> f64 {
    // Planar closed route: line angle to the nearer boundary ray.
    let e = cone.splitting().e().basis().column(0).into_owned();
    let f = cone.splitting().f().basis().column(0).into_owned();
    let arc = PlanarArcOracle::from_cone_data(&e, &f, cone.opening());
    let v = line.basis().column(0).into_owned();
    let t = v[1].atan2(v[0]);
    let d = common::line_dist(t, arc.lo).min(common::line_dist(t, arc.hi));
    d.sin()
}

#[test]
fn per_pair_contraction_inequality() {
    // α_{C2}(Au,Av) − 1 ≤ [(χ−1)/(χ+1)] (α_{C1}(u,v) − 1) + 1e-9 on every
    // sampled admissible pair, with χ the empirical focusing number.
    let cfg = NumericsConfig::default();
    let mut r = rng(304);
    for trial in 0..10 {
        let pair = random_planar_pair(&mut r);
        let stats = match analyze_cone_pair(&pair, 100, 1000 + trial, &cfg) {
            Ok(s) => s,
            Err(e) => panic!("trial {trial}: {e}"),
        };
        let chi = stats.chi_empirical;
        let rate = (chi - 1.0) / (chi + 1.0);
        for rec in &stats.records {
            if rec.alpha_before > 1.0 {
                assert!(
                    rec.alpha_after - 1.0 <= rate * (rec.alpha_before - 1.0) + 1e-9,
                    "trial {trial}: {} > {} * {}",
                    rec.alpha_after - 1.0,
                    rate,
                    rec.alpha_before - 1.0
                );
            }
        }
        // Coefficient ordering and the focusing-polynomial bound; planar
        // interior pairs are always admissible, so the counter is live.
        assert!(stats.admissible_pairs > 0);
        assert!(stats.tau_emp <= stats.tau_v_emp + 1e-9);
        assert!(stats.tau_v_emp <= stats.tau_s + 1e-9);
        assert!(stats.chi_empirical <= focusing_polynomial(stats.chi_strong) + 1e-6);
    }
}

#[test]
fn contraction_coefficients_submultiplicative() {
    // τ(BA) ≤ τ(B)τ(A) within sampling slack, and the analytic route
    // τ_V(BA) ≤ τ_S(B)·τ_S(A) exactly as computed.
    let cfg = NumericsConfig::default();
    let mut r = rng(305);
    for trial in 0..6 {
        let pair_a = random_planar_pair(&mut r);
        // Second leg: from pair_a.target onward.
        let (tmp_cone, _, _, _) = random_planar_cone(&mut r);
        let _ = tmp_cone;
        let m_b = DMatrix::from_fn(2, 2, |_, _| conedyn::linalg::sample_gaussian(&mut r));
        let map_b = LinearMap::new(m_b.clone());
        if !map_b.is_injective() {
            continue;
        }
        let e2 = pair_a.target.splitting().e().basis().column(0).into_owned();
        let f2 = pair_a.target.splitting().f().basis().column(0).into_owned();
        let arc =
            PlanarArcOracle::from_cone_data(&e2, &f2, pair_a.target.opening()).map_through(&m_b);
        let margin = 0.25;
        let half = 0.5 * arc.width() + margin;
        if half >= std::f64::consts::FRAC_PI_2 - 0.05 {
            continue;
        }
        let center = 0.5 * (arc.lo + arc.hi);
        let sp3 = make_splitting(
            &Subspace::span(&[v2(center.cos(), center.sin())]).unwrap(),
            &Subspace::span(&[v2(-center.sin(), center.cos())]).unwrap(),
        )
        .unwrap();
        let Ok(c3) = ConeRankK::splitting_norm(sp3, half.tan()) else {
            continue;
        };
        let pair_b = ConePair::new(pair_a.target.clone(), c3.clone(), map_b).unwrap();
        let composed = ConePair::new(
            pair_a.source.clone(),
            c3,
            LinearMap::new(pair_b.map.matrix() * pair_a.map.matrix()),
        )
        .unwrap();

        // Coherent pools: the same source pairs feed all three suprema, so
        // each composed ratio factors through the legs and the slack only
        // absorbs the admissibility bookkeeping.
        let samples = pair_a.source.section_samples(60, 0.0, 9000 + trial);
        let a = pair_a.map.matrix();
        let b = pair_b.map.matrix();
        let (mut tau_a, mut tau_b, mut tau_ba) = (0.0_f64, 0.0_f64, 0.0_f64);
        for w in samples.chunks(2) {
            if w.len() < 2 {
                break;
            }
            let (u, v) = (&w[0], &w[1]);
            let Ok(a1) = angle_index_vectors(&pair_a.source, u, v, &cfg) else {
                continue;
            };
            let (au, av) = (a * u, a * v);
            let Ok(a2) = angle_index_vectors(&pair_a.target, &au, &av, &cfg) else {
                continue;
            };
            let (bau, bav) = (b * &au, b * &av);
            let Ok(a3) = angle_index_vectors(&composed.target, &bau, &bav, &cfg) else {
                continue;
            };
            if a1 > 1.0 + 1e-9 {
                tau_a = tau_a.max((a2 - 1.0) / (a1 - 1.0));
                tau_ba = tau_ba.max((a3 - 1.0) / (a1 - 1.0));
            }
            if a2 > 1.0 + 1e-9 {
                tau_b = tau_b.max((a3 - 1.0) / (a2 - 1.0));
            }
        }
        assert!(
            tau_ba <= tau_a * tau_b + 2e-2,
            "trial {trial}: tau(BA) {} > tau(B)tau(A) {} + slack",
            tau_ba,
            tau_a * tau_b
        );

        // Analytic route: the composed vector coefficient is bounded by the
        // product of the per-leg analytic coefficients, exactly as computed.
        let sa = analyze_cone_pair(&pair_a, 60, 2000 + trial, &cfg).unwrap();
        let sb = analyze_cone_pair(&pair_b, 60, 3000 + trial, &cfg).unwrap();
        let sc = match analyze_cone_pair(&composed, 60, 4000 + trial, &cfg) {
            Ok(s) => s,
            Err(_) => continue,
        };
        assert!(
            sc.tau_v_emp <= sa.tau_s * sb.tau_s,
            "trial {trial}: analytic route violated: {} > {}",
            sc.tau_v_emp,
            sa.tau_s * sb.tau_s
        );
    }
}

#[test]
fn cone_membership_invariants_on_random_cones() {
    // E lies inside the cone, F meets it only at zero, and membership is
    // invariant under scalar multiplication (margins are scale free).
    let mut r = rng(306);
    for _ in 0..30 {
        let (cone, _, _, _) = random_planar_cone(&mut r);
        let e = cone.splitting().e().basis().column(0).into_owned();
        let f = cone.splitting().f().basis().column(0).into_owned();
        assert!(cone.margin(&e).unwrap() > 0.0);
        assert!(cone.margin(&(-&e)).unwrap() > 0.0);
        assert!(cone.margin(&f).unwrap() < 0.0);
        for _ in 0..20 {
            let v = common::unit(2, &mut r);
            let m1 = cone.margin(&v).unwrap();
            let lambda = 10.0_f64.powf(4.0 * r.random::<f64>() - 2.0)
                * if r.random::<bool>() { 1.0 } else { -1.0 };
            let m2 = cone.margin(&(&v * lambda)).unwrap();
            assert!((m1 - m2).abs() < 1e-12, "margin not scale free: {m1} vs {m2}");
        }
    }
}

#[test]
fn thickened_cone_separations_scale_with_eight_chi() {
    // Thickening the image cone by chord radius 1/(4χ) leaves at least
    // 1/(8χ) between the image and the new complement, and at least
    // 3/(8χ) between the old disjoint axis and the new cone.
    use conedyn::cone::thicken_cone;
    let cfg = NumericsConfig::default();
    let cone = ConeRankK::planar_standard(1.0).unwrap();
    let a = LinearMap::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.5]]);
    let chi = 2.0;
    let thick = thicken_cone(&cone, &a, chi, &cfg).unwrap();

    let pair = ConePair::new(cone.clone(), thick.clone(), a).unwrap();
    let sep_img = image_complement_separation(&pair, &cfg);
    assert!(
        sep_img >= 1.0 / (8.0 * chi),
        "image separation {sep_img} below 1/(8 chi)"
    );

    let f0 = Subspace::span(&[v2(0.0, 1.0)]).unwrap();
    let sep_f0 = separation_index(&f0, SeparationTarget::Cone(&thick), &cfg).unwrap();
    assert!(
        sep_f0 >= 3.0 / (8.0 * chi),
        "axis separation {sep_f0} below 3/(8 chi)"
    );
}
