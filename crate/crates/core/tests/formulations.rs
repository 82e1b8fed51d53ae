mod common;

use approx::assert_abs_diff_eq;
use common::*;
use opfkit::formulation::{build_acopf, build_dcopf, build_socopf, derive_w_bounds};
use opfkit::{evaluate_residuals, solve, Formulation, InstanceInput, SolveSettings};
use opfkit_solver::{NlpProblem, SolveStatus};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ok(s: SolveStatus) -> bool {
    matches!(s, SolveStatus::Optimal | SolveStatus::LocallyOptimal)
}

#[test]
fn dc_uncongested_toy() {
    let net = dc_toy();
    let r = solve(Formulation::Dc, &net, &nominal(&net), &SolveSettings::default()).unwrap();
    assert!(ok(r.status));
    assert_abs_diff_eq!(r.primal["pg"][0], 1.0, epsilon = 1e-7);
    assert_abs_diff_eq!(r.primal["pf"][0], 1.0, epsilon = 1e-7);
    assert_abs_diff_eq!(r.primal["va"][0], 0.0, epsilon = 1e-7);
    assert_abs_diff_eq!(r.primal["va"][1], -0.1, epsilon = 1e-7);
    assert_abs_diff_eq!(r.primal_objective, 5.0, epsilon = 1e-6);
    assert_abs_diff_eq!(r.dual_objective, 5.0, epsilon = 1e-6);
    // marginal price of demand at bus 2
    assert_abs_diff_eq!(r.dual["kcl"][1], 5.0, epsilon = 1e-6);
    assert_abs_diff_eq!(r.dual["pf_ub"][0], 0.0, epsilon = 1e-6);
}

#[test]
fn dc_congested_toy() {
    let net = dc_congested();
    let r = solve(Formulation::Dc, &net, &nominal(&net), &SolveSettings::default()).unwrap();
    assert!(ok(r.status));
    assert_abs_diff_eq!(r.primal["pg"][0], 0.5, epsilon = 1e-7);
    assert_abs_diff_eq!(r.primal["pg"][1], 0.5, epsilon = 1e-7);
    assert_abs_diff_eq!(r.primal_objective, 7.5, epsilon = 1e-6);
    assert_abs_diff_eq!(r.dual["kcl"][0], 5.0, epsilon = 1e-6);
    assert_abs_diff_eq!(r.dual["kcl"][1], 10.0, epsilon = 1e-6);
    assert_abs_diff_eq!(r.dual["pf_ub"][0], -5.0, epsilon = 1e-6);
}

#[test]
fn dc_case14_dimensions() {
    let net = load_case("case14.m");
    let m = build_dcopf(&net, &nominal(&net)).unwrap();
    assert_eq!(m.n_vars(), 5 + 14 + 20);
    assert_eq!(m.n_equalities(), 14 + 20 + 1);
}

#[test]
fn outages_shrink_the_models() {
    let net = load_case("case14.m");
    let mut input = nominal(&net);
    input.branch_status[3] = false;
    input.gen_status[4] = false;
    let m = build_dcopf(&net, &input).unwrap();
    assert_eq!(m.n_vars(), 4 + 14 + 19);
    let r = solve(Formulation::Dc, &net, &input, &SolveSettings::default()).unwrap();
    assert!(ok(r.status));
    assert_eq!(r.primal["pf"][3], 0.0);
    assert_eq!(r.primal["pg"][4], 0.0);
    assert_eq!(r.dual["ohm"][3], 0.0);
}

#[test]
fn ac_toy_matches_closed_form() {
    let net = ac_toy();
    let r = solve(Formulation::Ac, &net, &nominal(&net), &SolveSettings::default()).unwrap();
    assert!(ok(r.status), "{:?}", r.status);
    // pf = sin(δ) with unit reactance and flat voltages
    let d = r.primal["va"][0] - r.primal["va"][1];
    assert_abs_diff_eq!(d, std::f64::consts::FRAC_PI_6, epsilon = 1e-6);
    assert_abs_diff_eq!(r.primal["pg"][0], 0.5, epsilon = 1e-6);
    assert_abs_diff_eq!(r.primal["pf"][0], 0.5, epsilon = 1e-6);
    assert_abs_diff_eq!(r.primal["pt"][0], -0.5, epsilon = 1e-6);
    assert_abs_diff_eq!(r.primal["qf"][0], 1.0 - d.cos(), epsilon = 1e-6);
    assert_abs_diff_eq!(r.primal["qt"][0], 1.0 - d.cos(), epsilon = 1e-6);
    assert_abs_diff_eq!(r.primal_objective, 0.5, epsilon = 1e-6);
    let res = evaluate_residuals(Formulation::Ac, &net, &nominal(&net), &r.primal).unwrap();
    assert!(res.max() < 1e-6, "{}", res.max());
}

#[test]
fn ac_jacobian_matches_finite_differences() {
    let net = load_case("case14.m");
    let input = nominal(&net);
    let p = build_acopf(&net, &input).unwrap();
    let (n, m) = (p.num_vars(), p.num_cons());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (lo, hi) = p.var_bounds();
    for _ in 0..10 {
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let (a, b) = (lo[k].max(-1.0), hi[k].min(1.0));
                a + (b - a) * rng.gen::<f64>()
            })
            .collect();
        let mut dense = vec![0.0; n * m];
        for (r, c, v) in p.jacobian_triplets(&x) {
            dense[r * n + c] += v;
        }
        let h = 1e-6;
        let (mut gp, mut gm) = (vec![0.0; m], vec![0.0; m]);
        for c in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            p.constraints(&xp, &mut gp);
            p.constraints(&xm, &mut gm);
            for r in 0..m {
                let fd = (gp[r] - gm[r]) / (2.0 * h);
                let an = dense[r * n + c];
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "row {r} col {c}: {an} vs {fd}");
            }
        }
    }
}

#[test]
fn dc_residual_example() {
    let net = dc_toy();
    let input = nominal(&net);
    let r = solve(Formulation::Dc, &net, &input, &SolveSettings::default()).unwrap();
    let mut p = r.primal.clone();
    p.get_mut("pg").unwrap()[0] = 0.9;
    let res = evaluate_residuals(Formulation::Dc, &net, &input, &p).unwrap();
    assert_abs_diff_eq!(res.groups["kcl"][0], 0.1, epsilon = 1e-7);
    assert_abs_diff_eq!(res.groups["kcl"][1], 0.0, epsilon = 1e-7);
    p.remove("va");
    assert!(evaluate_residuals(Formulation::Dc, &net, &input, &p).is_err());
}

#[test]
fn jabr_residual_example() {
    let net = dc_toy();
    let input = nominal(&net);
    let mut p = solve(Formulation::Soc, &net, &input, &SolveSettings::default()).unwrap().primal;
    p.insert("w".into(), vec![1.0, 1.0]);
    p.insert("wr".into(), vec![0.8]);
    p.insert("wi".into(), vec![0.8]);
    let res = evaluate_residuals(Formulation::Soc, &net, &input, &p).unwrap();
    assert_abs_diff_eq!(res.groups["jabr"][0], 0.28, epsilon = 1e-12);
    p.insert("wi".into(), vec![0.6]);
    let res = evaluate_residuals(Formulation::Soc, &net, &input, &p).unwrap();
    assert_eq!(res.groups["jabr"][0], 0.0);
}

#[test]
fn relaxation_ordering_on_cases() {
    for case in ["case14.m", "case_ieee30.m"] {
        let net = load_case(case);
        let input = nominal(&net);
        let s = SolveSettings::default();
        let soc = solve(Formulation::Soc, &net, &input, &s).unwrap();
        let ac = solve(Formulation::Ac, &net, &input, &s).unwrap();
        assert!(ok(soc.status) && ok(ac.status), "{case}: {:?} {:?}", soc.status, ac.status);
        assert!(soc.primal_objective <= ac.primal_objective * (1.0 + 1e-6), "{case}");
        let gap = (ac.primal_objective - soc.primal_objective) / ac.primal_objective;
        assert!(gap < 0.05, "{case}: gap {gap}");
    }
}

#[test]
fn soc_case14_is_feasible_and_tight() {
    let net = load_case("case14.m");
    let input = nominal(&net);
    let r = solve(Formulation::Soc, &net, &input, &SolveSettings::default()).unwrap();
    assert!(ok(r.status));
    let res = evaluate_residuals(Formulation::Soc, &net, &input, &r.primal).unwrap();
    assert!(res.max() < 1e-6, "{}", res.max());
    let rel = (r.primal_objective - r.dual_objective).abs() / r.primal_objective.abs();
    assert!(rel < 1e-6, "{rel}");
    let m = build_socopf(&net, &input).unwrap();
    assert_eq!(m.n_vars(), 2 * 5 + 14 + 6 * 20);
}

#[test]
fn inconsistent_input_is_rejected() {
    let net = dc_toy();
    let bad = InstanceInput { pd: vec![], ..nominal(&net) };
    assert!(solve(Formulation::Dc, &net, &bad, &SolveSettings::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn w_bounds_contain_every_realization(
        v in (0.5f64..1.0, 0.0f64..0.3, 0.5f64..1.0, 0.0f64..0.3),
        a in (0.01f64..1.5, 0.01f64..1.5),
        seed in any::<u64>(),
    ) {
        let (vi0, vi1, vj0, vj1) = (v.0, v.0 + v.1, v.2, v.2 + v.3);
        let (lo, hi) = (-a.0, a.1);
        let (wr_lb, wr_ub, wi_lb, wi_ub) = derive_w_bounds(vi0, vi1, vj0, vj1, lo, hi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1600 {
            let vi = vi0 + (vi1 - vi0) * rng.gen::<f64>();
            let vj = vj0 + (vj1 - vj0) * rng.gen::<f64>();
            let d = lo + (hi - lo) * rng.gen::<f64>();
            let (wr, wi) = (vi * vj * d.cos(), vi * vj * d.sin());
            prop_assert!(wr_lb - 1e-12 <= wr && wr <= wr_ub + 1e-12);
            prop_assert!(wi_lb - 1e-12 <= wi && wi <= wi_ub + 1e-12);
        }
    }
}
