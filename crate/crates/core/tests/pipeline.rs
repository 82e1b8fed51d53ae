mod common;

use common::*;
use opfkit::dataset::*;
use opfkit::pipeline::*;
use opfkit::{Formulation, SolveSettings};
use std::path::Path;

fn config(dir: &Path, samples: usize, formulations: &[&str], workers: usize, extra: &str) -> Config {
    let case = fixture_path("case14.m");
    let fs: Vec<String> = formulations.iter().map(|f| format!("\"{f}\"")).collect();
    let text = format!(
        "[case]\npath = {case:?}\n\n[sampler]\nbase_seed = 3\n{extra}\n[run]\nsamples = {samples}\nformulations = [{}]\nworkers = {workers}\noutput = \"out\"\n",
        fs.join(", ")
    );
    Config::parse(&text, dir).unwrap()
}

#[test]
fn generated_dataset_matches_the_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 50, &["ACOPF", "DCOPF", "SOCOPF"], 2, "");
    let sum = generate(&cfg, &SolveSettings::default()).unwrap();
    assert_eq!(sum.samples, 50);
    assert_eq!(sum.train + sum.test + sum.infeasible, 50);
    assert_eq!(sum.train, (sum.train + sum.test) * 4 / 5);
    assert!(sum.processor_hours > 0.0);
    let root = dir.path().join("out");
    assert!(!root.join(".work").exists());
    let layout = check_layout(&root).unwrap();
    assert_eq!(layout.formulations, Formulation::ALL.to_vec());
    assert_eq!(layout.counts["train"], sum.train);
    let net = read_case_json(&root.join("case.json")).unwrap();
    let input = read_input(&root, "train", &net).unwrap();
    assert_eq!(input.config, cfg.text);
    for rec in read_split(&root, "train", &net).unwrap() {
        assert!(rec.is_feasible());
    }
}

#[test]
fn zero_samples_give_an_empty_valid_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 0, &["DCOPF"], 1, "");
    let sum = generate(&cfg, &SolveSettings::default()).unwrap();
    assert_eq!(sum.samples, 0);
    let layout = check_layout(&dir.path().join("out")).unwrap();
    assert!(layout.counts.values().all(|&n| n == 0));
    assert_eq!(layout.formulations, vec![Formulation::Dc]);
}

#[test]
fn worker_count_does_not_change_the_data() {
    let settings = SolveSettings::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(&config(a.path(), 20, &["DCOPF"], 1, "mode = \"n-1\"\n"), &settings).unwrap();
    generate(&config(b.path(), 20, &["DCOPF"], 4, "mode = \"n-1\"\n"), &settings).unwrap();
    let (ra, rb) = (a.path().join("out"), b.path().join("out"));
    let net = read_case_json(&ra.join("case.json")).unwrap();
    for split in SPLITS {
        assert_eq!(read_input(&ra, split, &net).unwrap().inputs, read_input(&rb, split, &net).unwrap().inputs);
        let n = read_input(&ra, split, &net).unwrap().inputs.len();
        let pa = read_formulation(&ra, split, Formulation::Dc, &net, n).unwrap();
        let pb = read_formulation(&rb, split, Formulation::Dc, &net, n).unwrap();
        assert_eq!(pa.primal, pb.primal, "{split}");
    }
}

#[test]
fn interrupted_runs_resume_from_finished_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 6, &["DCOPF"], 1, "");
    let net = load_case("case14.m");
    let inputs = sample_inputs(&cfg, &net).unwrap();
    let work = dir.path().join("out/.work");
    std::fs::create_dir_all(&work).unwrap();
    // a finished sample with a marker objective
    let mut done = solve_sample(&net, &inputs[0], &[Formulation::Dc], &SolveSettings::default());
    done.results[0].primal_objective = 12345.0;
    std::fs::write(work.join("00000000.ron"), ron::to_string(&done).unwrap()).unwrap();
    // a stale record from a different input is recomputed
    let mut stale = done.clone();
    stale.input = inputs[2].clone();
    stale.input.seed += 1;
    std::fs::write(work.join("00000001.ron"), ron::to_string(&stale).unwrap()).unwrap();
    std::fs::write(work.join("00000002.ron"), "not ron").unwrap();

    let sum = generate(&cfg, &SolveSettings::default()).unwrap();
    assert_eq!(sum.resumed, 1);
    assert!(!work.exists());
    let root = dir.path().join("out");
    let all: Vec<_> = SPLITS.iter().flat_map(|s| read_split(&root, s, &net).unwrap()).collect();
    let objs: Vec<f64> = all.iter().map(|r| r.results[0].primal_objective).collect();
    assert_eq!(objs.iter().filter(|&&o| o == 12345.0).count(), 1);
    assert_eq!(all.len(), 6);
}

fn dc_dataset(dir: &Path, n: usize) -> std::path::PathBuf {
    generate(&config(dir, n, &["DCOPF", "SOCOPF"], 2, ""), &SolveSettings::default()).unwrap();
    dir.join("out")
}

#[test]
fn evaluating_the_reference_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let root = dc_dataset(dir.path(), 15);
    let net = read_case_json(&root.join("case.json")).unwrap();
    let n = read_input(&root, "test", &net).unwrap().inputs.len();
    assert!(n > 0);
    let s = SolveSettings::default();
    for f in [Formulation::Dc, Formulation::Soc] {
        let data = read_formulation(&root, "test", f, &net, n).unwrap();
        let pts: Vec<_> = (0..n).map(|i| data.primal_point(i)).collect();
        let pred = dir.path().join(format!("{}.h5", f.name()));
        write_primal_file(&pred, f, &net, &pts).unwrap();
        let rep = evaluate(&root, &pred, f, "test", true, &s).unwrap_or_else(|e| panic!("{f:?}: {e}"));
        assert_eq!(rep.instances.len(), n);
        assert_eq!(rep.gap.max, 0.0);
        assert_eq!(rep.distance_to_optimal.max, 0.0);
        assert!(rep.distance_to_feasible.unwrap().max < 1e-4, "{f:?}");
        for (k, g) in &rep.violations {
            assert_eq!(g.proportion_violated.max, 0.0, "{f:?} {k}");
        }
        assert!(rep.to_text().contains("optimality_gap"));
    }
}

#[test]
fn inflated_generation_violates_balance_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let root = dc_dataset(dir.path(), 15);
    let net = read_case_json(&root.join("case.json")).unwrap();
    let n = read_input(&root, "test", &net).unwrap().inputs.len();
    let data = read_formulation(&root, "test", Formulation::Dc, &net, n).unwrap();
    let pts: Vec<_> = (0..n)
        .map(|i| {
            let mut p = data.primal_point(i);
            p.get_mut("pg").unwrap().iter_mut().for_each(|x| *x *= 1.1);
            p
        })
        .collect();
    let pred = dir.path().join("pred.h5");
    write_primal_file(&pred, Formulation::Dc, &net, &pts).unwrap();
    let rep = evaluate(&root, &pred, Formulation::Dc, "test", false, &SolveSettings::default()).unwrap();
    assert!(rep.distance_to_feasible.is_none());
    for s in &rep.instances {
        assert!(s.violations["kcl"].proportion_violated > 0.0);
        assert!((s.gap - 0.1).abs() < 1e-9, "{}", s.gap);
    }

    let short = dir.path().join("short.h5");
    write_primal_file(&short, Formulation::Dc, &net, &pts[..n - 1]).unwrap();
    let err = evaluate(&root, &short, Formulation::Dc, "test", false, &SolveSettings::default()).unwrap_err();
    assert!(err.to_string().contains("samples"), "{err}");
}

#[test]
fn inspect_reports_small_duality_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let root = dc_dataset(dir.path(), 10);
    let rep = inspect(&root).unwrap();
    assert_eq!(rep.buses, 14);
    assert_eq!(rep.loads, 11);
    assert_eq!(rep.counts.values().sum::<usize>(), 10);
    assert_eq!(rep.input_shapes["pd"], vec![11]);
    let dc = &rep.formulations["DCOPF"]["train"];
    assert_eq!(dc.solved, rep.counts["train"]);
    assert!(dc.duality_gap.unwrap().max <= 1e-6);
    assert!(rep.formulations["SOCOPF"]["train"].duality_gap.unwrap().max <= 1e-6);
    assert!(rep.to_text().contains("DCOPF"));
}

#[test]
fn config_errors_are_reported() {
    let dir = Path::new("/tmp");
    let ok = "[case]\npath = \"x.m\"\n[sampler]\n[run]\nsamples = 1\noutput = \"o\"\n";
    let cfg = Config::parse(ok, dir).unwrap();
    assert_eq!(cfg.formulations().unwrap(), Formulation::ALL.to_vec());
    assert_eq!(cfg.sampler_config().unwrap(), opfkit::SamplerConfig::default());
    assert_eq!(cfg.resolve(&cfg.case.path), dir.join("x.m"));
    for (bad, needle) in [
        (ok.replace("[sampler]", "[sampler]\nmode = \"weekly\""), "weekly"),
        (ok.replace("[sampler]", "[sampler]\nb_l = 2.0"), "b_l"),
        (ok.replace("[sampler]", "[sampler]\ncolour = 1"), "colour"),
        (ok.replace("samples = 1", "samples = 1\nformulations = [\"QCOPF\"]"), "QCOPF"),
        (ok.replace("samples = 1", "samples = 1\nworkers = 0"), "workers"),
        (ok.replace("samples = 1\n", ""), "samples"),
    ] {
        let err = Config::parse(&bad, dir).unwrap_err().to_string();
        assert!(err.contains(needle), "{needle}: {err}");
    }
    let ts = ok.replace("[sampler]", "[sampler]\nmode = \"timeseries\"");
    let cfg = Config::parse(&ts, dir).unwrap();
    let net = load_case("case14.m");
    assert!(sample_inputs(&cfg, &net).unwrap_err().to_string().contains("knots"));
}

#[test]
fn resumed_and_repeated_runs_give_identical_data() {
    let settings = SolveSettings::default();
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 8, &["DCOPF", "SOCOPF"], 3, "");
    generate(&cfg, &settings).unwrap();
    let root = dir.path().join("out");
    let net = read_case_json(&root.join("case.json")).unwrap();
    let first: Vec<_> = SPLITS.iter().map(|s| read_split(&root, s, &net).unwrap()).collect();
    let bytes: Vec<_> = SPLITS.iter().map(|s| std::fs::read(root.join(s).join("input.h5")).unwrap()).collect();

    // interrupted after three samples
    let inputs = sample_inputs(&cfg, &net).unwrap();
    let work = root.join(".work");
    std::fs::create_dir_all(&work).unwrap();
    for (i, input) in inputs.iter().enumerate().take(3) {
        let rec = solve_sample(&net, input, &[Formulation::Dc, Formulation::Soc], &settings);
        std::fs::write(work.join(format!("{i:08}.ron")), ron::to_string(&rec).unwrap()).unwrap();
    }
    let sum = generate(&cfg, &settings).unwrap();
    assert_eq!(sum.resumed, 3);
    let second: Vec<_> = SPLITS.iter().map(|s| read_split(&root, s, &net).unwrap()).collect();
    for (s, b) in SPLITS.iter().zip(&bytes) {
        assert_eq!(&std::fs::read(root.join(s).join("input.h5")).unwrap(), b, "{s}");
    }
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.input, y.input);
            for (rx, ry) in x.results.iter().zip(&y.results) {
                assert_eq!(rx.primal, ry.primal);
                assert_eq!(rx.dual, ry.dual);
                assert_eq!(rx.primal_objective, ry.primal_objective);
            }
        }
    }
}

#[test]
fn toy_predictions_reproduce_hand_scores() {
    let dir = tempfile::tempdir().unwrap();
    let net = dc_toy();
    write_case_json(&net, &dir.path().join("toy.json")).unwrap();
    let text = "[case]\npath = \"toy.json\"\n[sampler]\nb_l = 1.0\nb_u = 1.0\neps = 0.0\n[run]\nsamples = 5\nformulations = [\"DCOPF\"]\noutput = \"out\"\n";
    let cfg = Config::parse(text, dir.path()).unwrap();
    let sum = generate(&cfg, &SolveSettings::default()).unwrap();
    assert_eq!((sum.train, sum.test), (4, 1));
    let root = dir.path().join("out");
    let pred: opfkit::Point =
        [("pg", vec![0.9]), ("pf", vec![0.9]), ("va", vec![0.0, -0.09])].into_iter().map(|(k, v)| (k.into(), v)).collect();
    let file = dir.path().join("pred.h5");
    write_primal_file(&file, Formulation::Dc, &net, &[pred]).unwrap();
    let rep = evaluate(&root, &file, Formulation::Dc, "test", true, &SolveSettings::default()).unwrap();
    let s = &rep.instances[0];
    assert!((s.reference_objective - 5.0).abs() < 1e-8);
    assert!((s.gap + 0.10).abs() < 1e-8, "{}", s.gap);
    assert!((s.violations["kcl"].total - 0.1).abs() < 1e-12);
    assert!((s.distance_to_optimal - 0.0201f64.sqrt()).abs() < 1e-8);
    assert!((s.distance_to_feasible.unwrap() - 0.0201f64.sqrt()).abs() < 1e-6);
}
