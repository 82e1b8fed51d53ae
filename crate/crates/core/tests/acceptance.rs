//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines appear in order and uncaptured.

mod common;

use common::*;
use opfkit::dataset::*;
use opfkit::formulation::build_acopf;
use opfkit::metrics::{distance_to_feasible, DEFAULT_THRESHOLD};
use opfkit::pipeline::{self, Config};
use opfkit::sampler::*;
use opfkit::{
    dual_feasibility_residuals, dual_objective, kkt_residuals_ac, solve, Formulation, InstanceInput, Network, Point,
    SolveSettings, Solved,
};
use opfkit_solver::{NlpProblem, SolveStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::time::Instant;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn solved(s: &Solved) -> bool {
    matches!(s.status, SolveStatus::Optimal | SolveStatus::LocallyOptimal)
}

fn table_counts() -> Outcome {
    let want = [
        ("case14.m", [14, 11, 5, 20]),
        ("case_ieee30.m", [30, 21, 6, 41]),
        ("case57.m", [57, 42, 7, 80]),
        ("case118.m", [118, 99, 54, 186]),
    ];
    for (name, w) in want {
        let n = load_case(name);
        let got = [n.n_bus(), n.n_load(), n.n_gen(), n.n_branch()];
        ensure(got == w, || format!("{name}: {got:?} != {w:?}"))?;
    }
    Ok("4 cases exact".into())
}

/// 100 sampled instances of each of case14 and case57, solved in all three
/// formulations.
struct Batch {
    nets: Vec<Network>,
    rows: Vec<(usize, InstanceInput, Solved, Solved, Solved)>,
    conic_seconds: f64,
}

fn batch() -> Batch {
    let nets = vec![load_case("case14.m"), load_case("case57.m")];
    let cfg = SamplerConfig::default();
    let s = SolveSettings::default();
    let mut rows = Vec::new();
    let mut conic_seconds = 0.0;
    for (k, net) in nets.iter().enumerate() {
        for i in 0..100 {
            let input = sample_demand(net, &cfg, i);
            let t = Instant::now();
            let dc = solve(Formulation::Dc, net, &input, &s).expect("dc");
            let soc = solve(Formulation::Soc, net, &input, &s).expect("soc");
            conic_seconds += t.elapsed().as_secs_f64();
            let ac = solve(Formulation::Ac, net, &input, &s).expect("ac");
            rows.push((k, input, dc, soc, ac));
        }
    }
    Batch { nets, rows, conic_seconds }
}

fn strong_duality(b: &Batch) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (_, _, dc, soc, _) in &b.rows {
        for r in [dc, soc] {
            if r.status == SolveStatus::Optimal {
                count += 1;
                worst = worst.max((r.primal_objective - r.dual_objective).abs() / r.primal_objective.abs());
            }
        }
    }
    ensure(worst <= 1e-6, || format!("max relative gap {worst:.3e}"))?;
    ensure(b.conic_seconds < 300.0, || format!("{:.1} s over budget", b.conic_seconds))?;
    Ok(format!("{count} optimal solves, max gap {worst:.2e}, {:.1} s", b.conic_seconds))
}

fn relaxation_ordering(b: &Batch) -> Outcome {
    let mut n = 0;
    for (k, _, _, soc, ac) in &b.rows {
        if solved(ac) && solved(soc) {
            n += 1;
            ensure(soc.primal_objective <= ac.primal_objective * (1.0 + 1e-6), || {
                format!("case {k}: SOC {} > AC {}", soc.primal_objective, ac.primal_objective)
            })?;
        }
    }
    ensure(n > 0, || "no AC solves".into())?;
    Ok(format!("{n}/{} instances with AC solved", b.rows.len()))
}

fn ac_kkt(b: &Batch) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (k, input, _, _, ac) in &b.rows {
        if solved(ac) {
            n += 1;
            let rep = kkt_residuals_ac(&b.nets[*k], input, &ac.primal, &ac.dual).map_err(|e| e.to_string())?;
            worst = worst.max(rep.max());
        }
    }
    ensure(worst <= 1e-6, || format!("max KKT residual {worst:.3e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut points = 0;
    let mut fd_worst: f64 = 0.0;
    for name in ["case14.m", "case_ieee30.m", "case57.m", "case118.m"] {
        let net = load_case(name);
        let p = build_acopf(&net, &InstanceInput::nominal(&net)).map_err(|e| e.to_string())?;
        let (nv, m) = (p.num_vars(), p.num_cons());
        let (lo, hi) = p.var_bounds();
        for _ in 0..10 {
            points += 1;
            let x: Vec<f64> = (0..nv)
                .map(|j| {
                    let (a, b) = (lo[j].max(-1.0), hi[j].min(1.0));
                    a + (b - a) * rng.gen::<f64>()
                })
                .collect();
            let mut cols: Vec<Vec<(usize, f64)>> = vec![vec![]; nv];
            for (r, c, v) in p.jacobian_triplets(&x) {
                cols[c].push((r, v));
            }
            let h = 1e-6;
            let (mut gp, mut gm) = (vec![0.0; m], vec![0.0; m]);
            let mut an = vec![0.0; m];
            for c in 0..nv {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[c] += h;
                xm[c] -= h;
                p.constraints(&xp, &mut gp);
                p.constraints(&xm, &mut gm);
                an.iter_mut().for_each(|v| *v = 0.0);
                for &(r, v) in &cols[c] {
                    an[r] += v;
                }
                for r in 0..m {
                    let fd = (gp[r] - gm[r]) / (2.0 * h);
                    let e = (fd - an[r]).abs() / an[r].abs().max(1.0);
                    fd_worst = fd_worst.max(e);
                }
            }
        }
    }
    ensure(fd_worst <= 1e-6, || format!("Jacobian error {fd_worst:.3e}"))?;
    Ok(format!("{n} local optima, max KKT {worst:.2e}; {points} Jacobian points, max error {fd_worst:.2e}"))
}

fn dual_cross_check(b: &Batch) -> Outcome {
    let (mut obj, mut res): (f64, f64) = (0.0, 0.0);
    let mut n = 0;
    for (k, input, dc, soc, _) in &b.rows {
        for r in [dc, soc] {
            if r.status != SolveStatus::Optimal {
                continue;
            }
            n += 1;
            let net = &b.nets[*k];
            let d = dual_objective(r.formulation, net, input, &r.dual).map_err(|e| e.to_string())?;
            obj = obj.max((d - r.dual_objective).abs() / r.dual_objective.abs());
            let rep = dual_feasibility_residuals(r.formulation, net, input, &r.dual).map_err(|e| e.to_string())?;
            res = res.max(rep.max());
        }
    }
    ensure(obj <= 1e-9, || format!("recomputed dual objective off by {obj:.3e} relative"))?;
    ensure(res <= 1e-6, || format!("dual residual {res:.3e}"))?;
    Ok(format!("{n} solves, objective error {obj:.2e}, residual {res:.2e}"))
}

fn envelope() -> Outcome {
    let net = load_case("case118.m");
    let cfg = SamplerConfig { b_l: 0.7, b_u: 1.1, eps: 0.2, ..SamplerConfig::default() };
    let (mut gmin, mut gmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..10_000 {
        let s = sample_demand(&net, &cfg, i);
        for l in 0..net.n_load() {
            for (x, r) in [(s.pd[l], net.pd[l]), (s.qd[l], net.qd[l])] {
                if r != 0.0 {
                    let m = x / r;
                    ensure((0.56 - 1e-12..=1.32 + 1e-12).contains(&m), || format!("sample {i} load {l}: {m}"))?;
                }
            }
        }
        let g = global_factor(&cfg, i);
        gmin = gmin.min(g);
        gmax = gmax.max(g);
    }
    ensure((gmin - 0.7).abs() <= 0.005 && (gmax - 1.1).abs() <= 0.005, || format!("global range ({gmin}, {gmax})"))?;
    Ok(format!("global factor in [{gmin:.4}, {gmax:.4}]"))
}

fn n_minus_1() -> Outcome {
    let net = load_case("case118.m");
    let cfg = SamplerConfig { mode: SampleMode::NMinus1, ..SamplerConfig::default() };
    let s = StatusSampler::new(&net, &cfg).map_err(|e| e.to_string())?;
    let mut bad = 0;
    for i in 0..1000 {
        let x = s.sample(&net, &cfg, i);
        let mut adj = vec![vec![]; net.n_bus()];
        for e in (0..net.n_branch()).filter(|&e| x.branch_status[e]) {
            adj[net.from[e]].push(net.to[e]);
            adj[net.to[e]].push(net.from[e]);
        }
        let mut seen = vec![false; net.n_bus()];
        seen[0] = true;
        let mut q = VecDeque::from([0]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if !std::mem::replace(&mut seen[v], true) {
                    q.push_back(v);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            bad += 1;
        }
    }
    ensure(bad == 0, || format!("{bad} disconnected"))?;
    Ok("1000 samples connected".into())
}

fn spline() -> Outcome {
    let sp = NaturalSpline::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).map_err(|e| e.to_string())?;
    let v = sp.eval(0.5);
    ensure((v - 0.6875).abs() <= 1e-12, || format!("s(0.5) = {v}"))?;
    ensure(sp.eval(0.0) == 0.0 && sp.eval(1.0) == 1.0 && sp.eval(2.0) == 0.0, || "knot values".into())?;
    Ok(format!("s(0.5) = {v}"))
}

fn layout() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let text = format!(
        "[case]\npath = {:?}\n[sampler]\nmode = \"n-1\"\n[run]\nsamples = 40\nworkers = 1\noutput = \"out\"\n",
        fixture_path("case14.m")
    );
    let s = SolveSettings::default();
    let mut bytes = Vec::new();
    let mut summary = None;
    for (sub, workers) in [("a", "1"), ("b", "4")] {
        let base = dir.path().join(sub);
        std::fs::create_dir_all(&base).map_err(|e| e.to_string())?;
        std::env::set_var(pipeline::WORKERS_ENV, workers);
        let cfg = Config::parse(&text, &base).map_err(|e| e.to_string())?;
        let sum = pipeline::generate(&cfg, &s).map_err(|e| e.to_string())?;
        std::env::remove_var(pipeline::WORKERS_ENV);
        let root = base.join("out");
        let lay = check_layout(&root).map_err(|e| e.to_string())?;
        ensure(lay.formulations == Formulation::ALL.to_vec(), || "formulation directories".into())?;
        let f = sum.train + sum.test;
        ensure(sum.train == f * 4 / 5 && sum.train + sum.test + sum.infeasible == 40, || {
            format!("split sizes {} / {} / {}", sum.train, sum.test, sum.infeasible)
        })?;
        let files: Vec<Vec<u8>> =
            SPLITS.iter().map(|sp| std::fs::read(root.join(sp).join("input.h5")).unwrap_or_default()).collect();
        bytes.push(files);
        summary = Some(sum);
    }
    ensure(bytes[0] == bytes[1], || "input.h5 differs between 1 and 4 workers".into())?;
    let sum = summary.unwrap();
    Ok(format!("train {} / test {} / infeasible {}, input.h5 identical", sum.train, sum.test, sum.infeasible))
}

fn micro_grids() -> Outcome {
    let s = SolveSettings::default();
    let close = |a: f64, b: f64, what: &str| ensure((a - b).abs() <= 1e-6, || format!("{what}: {a} vs {b}"));
    let net = dc_toy();
    let r = solve(Formulation::Dc, &net, &nominal(&net), &s).map_err(|e| e.to_string())?;
    close(r.primal["pg"][0], 1.0, "toy pg")?;
    close(r.dual["kcl"][1], 5.0, "toy price")?;
    let net = dc_congested();
    let r = solve(Formulation::Dc, &net, &nominal(&net), &s).map_err(|e| e.to_string())?;
    close(r.dual["kcl"][1], 10.0, "congested price")?;
    close(r.primal_objective, 7.5, "congested cost")?;
    let net = ac_toy();
    let r = solve(Formulation::Ac, &net, &nominal(&net), &s).map_err(|e| e.to_string())?;
    close(r.primal["pg"][0], 0.5, "ac pg")?;
    close(r.primal["va"][0] - r.primal["va"][1], std::f64::consts::FRAC_PI_6, "ac angle")?;
    Ok("DC, congested DC and AC toys within 1e-6".into())
}

fn metrics() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let text = format!(
        "[case]\npath = {:?}\n[sampler]\n[run]\nsamples = 20\nformulations = [\"DCOPF\", \"ACOPF\"]\noutput = \"out\"\n",
        fixture_path("case14.m")
    );
    let s = SolveSettings::default();
    let cfg = Config::parse(&text, dir.path()).map_err(|e| e.to_string())?;
    pipeline::generate(&cfg, &s).map_err(|e| e.to_string())?;
    let root = dir.path().join("out");
    let net = read_case_json(&root.join("case.json")).map_err(|e| e.to_string())?;
    let n = read_input(&root, "test", &net).map_err(|e| e.to_string())?.inputs.len();
    for f in [Formulation::Dc, Formulation::Ac] {
        let data = read_formulation(&root, "test", f, &net, n).map_err(|e| e.to_string())?;
        let pts: Vec<Point> = (0..n).map(|i| data.primal_point(i)).collect();
        let pred = dir.path().join(format!("{}.h5", f.name()));
        write_primal_file(&pred, f, &net, &pts).map_err(|e| e.to_string())?;
        let rep = pipeline::evaluate(&root, &pred, f, "test", false, &s).map_err(|e| e.to_string())?;
        ensure(rep.gap.max == 0.0 && rep.gap.mean == 0.0, || format!("{f:?} gap {:?}", rep.gap))?;
        for (k, g) in &rep.violations {
            ensure(g.proportion_violated.max == 0.0, || format!("{f:?} {k} above {DEFAULT_THRESHOLD}"))?;
        }
    }
    let toy = dc_toy();
    let pred: Point =
        [("pg", vec![0.9]), ("pf", vec![0.9]), ("va", vec![0.0, -0.09])].into_iter().map(|(k, v)| (k.into(), v)).collect();
    let d = distance_to_feasible(Formulation::Dc, &toy, &nominal(&toy), &pred, &s).map_err(|e| e.to_string())?.distance;
    ensure((d - 0.141774).abs() <= 1e-4, || format!("toy projection {d}"))?;
    Ok(format!("{n} test instances self-scored, toy projection {d:.6}"))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![("table_counts", table_counts())];
    let b = batch();
    results.push(("strong_duality", strong_duality(&b)));
    results.push(("relaxation_ordering", relaxation_ordering(&b)));
    results.push(("ac_kkt", ac_kkt(&b)));
    results.push(("dual_cross_check", dual_cross_check(&b)));
    results.push(("sampling_envelope", envelope()));
    results.push(("n_minus_1_connectivity", n_minus_1()));
    results.push(("spline_oracle", spline()));
    results.push(("layout_conformance", layout()));
    results.push(("micro_grids", micro_grids()));
    results.push(("metrics", metrics()));
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
