use opfkit_solver::{solve_conic, solve_lp, Cone, ConicProblem, CscMatrix, SolveStatus, SolverOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A point strictly inside each cone (zero on zero cones).
fn interior(cones: &[Cone], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = Vec::new();
    for c in cones {
        match *c {
            Cone::Zero(d) => v.extend(std::iter::repeat(0.0).take(d)),
            Cone::Nonneg(d) => v.extend((0..d).map(|_| rng.gen_range(0.1..2.0))),
            Cone::Soc(d) => {
                let u: Vec<f64> = (1..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                v.push(u.iter().map(|x| x * x).sum::<f64>().sqrt() + rng.gen_range(0.1..1.0));
                v.extend(u);
            }
            Cone::RotatedSoc(d) => {
                let u: Vec<f64> = (2..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let a = rng.gen_range(0.5..2.0);
                v.push(a);
                v.push(u.iter().map(|x| x * x).sum::<f64>() / (2.0 * a) + rng.gen_range(0.1..1.0));
                v.extend(u);
            }
        }
    }
    v
}

/// Distance outside the cone product; also the dual cone, all being self-dual.
fn cone_violation(cones: &[Cone], v: &[f64]) -> f64 {
    let mut k = 0;
    let mut worst: f64 = 0.0;
    for c in cones {
        let d = c.dim();
        let b = &v[k..k + d];
        worst = worst.max(match *c {
            Cone::Zero(_) => 0.0,
            Cone::Nonneg(_) => b.iter().map(|x| -x).fold(0.0, f64::max),
            Cone::Soc(_) => (b[1..].iter().map(|x| x * x).sum::<f64>().sqrt() - b[0]).max(0.0),
            Cone::RotatedSoc(_) => {
                let (p, q) = ((b[0] + b[1]) / 2f64.sqrt(), (b[0] - b[1]) / 2f64.sqrt());
                ((q * q + b[2..].iter().map(|x| x * x).sum::<f64>()).sqrt() - p).max(0.0)
            }
        });
        k += d;
    }
    worst
}

/// Primal feasible, dual strictly feasible, hence bounded with zero gap.
fn random_problem(seed: u64, n: usize, cones: Vec<Cone>) -> ConicProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m: usize = cones.iter().map(|c| c.dim()).sum();
    let a: Vec<Vec<f64>> =
        (0..m).map(|_| (0..n).map(|_| if rng.gen_bool(0.6) { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect()).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s0 = interior(&cones, &mut rng);
    let mut y0 = interior(&cones, &mut rng);
    let mut k = 0;
    for c in &cones {
        if let Cone::Zero(d) = c {
            y0[k..k + d].iter_mut().for_each(|y| *y = rng.gen_range(-1.0..1.0));
        }
        k += c.dim();
    }
    let b: Vec<f64> = (0..m).map(|i| a[i].iter().zip(&x0).map(|(p, q)| p * q).sum::<f64>() - s0[i]).collect();
    let c: Vec<f64> = (0..n).map(|j| (0..m).map(|i| a[i][j] * y0[i]).sum()).collect();
    ConicProblem { c, a: CscMatrix::from_dense(&a), b, cones }
}

fn check_certificate(p: &ConicProblem, x: &[f64], y: &[f64], pobj: f64, dobj: f64) -> Result<(), TestCaseError> {
    let (n, m) = (p.c.len(), p.b.len());
    let ad = p.a.to_dense();
    let slack: Vec<f64> = (0..m).map(|i| ad[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - p.b[i]).collect();
    let scale = 1.0 + pobj.abs();
    prop_assert!((pobj - dobj).abs() <= 1e-6 * scale, "gap {pobj} vs {dobj}");
    prop_assert!((pobj - p.c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).abs() <= 1e-8 * scale);
    prop_assert!((dobj - p.b.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()).abs() <= 1e-8 * scale);
    for j in 0..n {
        let r: f64 = (0..m).map(|i| ad[i][j] * y[i]).sum::<f64>() - p.c[j];
        prop_assert!(r.abs() <= 1e-6 * scale, "stationarity {j}: {r}");
    }
    prop_assert!(cone_violation(&p.cones, &slack) <= 1e-6, "primal cone");
    prop_assert!(cone_violation(&p.cones, y) <= 1e-6, "dual cone");
    let mut k = 0;
    for c in &p.cones {
        if let Cone::Zero(d) = c {
            prop_assert!(slack[k..k + d].iter().all(|s| s.abs() <= 1e-6), "equality rows");
        }
        k += c.dim();
    }
    let comp: f64 = slack.iter().zip(y).map(|(s, y)| s * y).sum();
    prop_assert!(comp.abs() <= 1e-6 * scale, "complementarity {comp}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_lps_close_the_gap(seed in any::<u64>(), n in 1usize..8, eq in 0usize..3, ineq in 1usize..12) {
        let eq = eq.min(n - 1);
        let mut cones = vec![Cone::Nonneg(ineq + n)];
        if eq > 0 {
            cones.insert(0, Cone::Zero(eq));
        }
        let p = random_problem(seed, n, cones);
        let r = solve_lp(&p, &SolverOptions::lp()).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        check_certificate(&p, &r.x, &r.y, r.primal_objective, r.dual_objective)?;
    }

    #[test]
    fn random_socps_close_the_gap(seed in any::<u64>(), n in 1usize..7, soc in 2usize..6, rot in 3usize..6, lin in 0usize..4) {
        let cones = vec![Cone::Nonneg(lin + 1), Cone::Soc(soc), Cone::RotatedSoc(rot), Cone::Soc(n + 1)];
        let p = random_problem(seed, n, cones);
        let r = solve_conic(&p, &SolverOptions { tol: 1e-9, ..SolverOptions::conic() }).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        check_certificate(&p, &r.x, &r.y, r.primal_objective, r.dual_objective)?;
    }
}
