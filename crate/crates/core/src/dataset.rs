//! On-disk dataset layout: `case.json`, then per split an `input.h5` and one
//! directory per formulation holding `primal.h5`, `dual.h5` and `meta.h5`.

use crate::error::{Error, Result};
use crate::formulation::{Point, SolveSettings, Solved};
use crate::network::{Admittance, Network};
use crate::sampler::InstanceInput;
use crate::schema::{dual_keys, primal_keys, Formulation, Key, INPUT_KEYS, META_KEYS};
use hdf5::types::VarLenUnicode;
use ndarray::{ArrayD, IxDyn};
use opfkit_solver::SolveStatus;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const SPLITS: [&str; 3] = ["train", "test", "infeasible"];
pub const SPLIT_SEED: u64 = 42;

/// Outcome of one formulation on one sample, as stored in the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub formulation: Formulation,
    pub termination_status: String,
    pub primal_status: String,
    pub dual_status: String,
    pub solve_time: f64,
    pub build_time: f64,
    pub extract_time: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal: Point,
    pub dual: Point,
}

impl SolveRecord {
    pub fn from_solved(s: &Solved) -> Self {
        let (ps, ds) = result_statuses(s.status);
        SolveRecord {
            formulation: s.formulation,
            termination_status: s.status.as_str().to_string(),
            primal_status: ps.into(),
            dual_status: ds.into(),
            solve_time: s.solve_time,
            build_time: s.build_time,
            extract_time: s.extract_time,
            primal_objective: s.primal_objective,
            dual_objective: s.dual_objective,
            primal: s.primal.clone(),
            dual: s.dual.clone(),
        }
    }

    /// Record for a formulation whose model could not be built or solved.
    pub fn failed(f: Formulation, net: &Network, build_time: f64) -> Self {
        SolveRecord {
            formulation: f,
            termination_status: "OTHER_ERROR".into(),
            primal_status: "NO_SOLUTION".into(),
            dual_status: "NO_SOLUTION".into(),
            solve_time: 0.0,
            build_time,
            extract_time: 0.0,
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            primal: crate::formulation::zero_point(primal_keys(f), net),
            dual: crate::formulation::zero_point(dual_keys(f), net),
        }
    }

    pub fn is_solved(&self) -> bool {
        self.termination_status == SolveStatus::Optimal.as_str()
            || self.termination_status == SolveStatus::LocallyOptimal.as_str()
    }
}

fn result_statuses(s: SolveStatus) -> (&'static str, &'static str) {
    match s {
        SolveStatus::Optimal | SolveStatus::LocallyOptimal => ("FEASIBLE_POINT", "FEASIBLE_POINT"),
        SolveStatus::InfeasibleOrUnbounded => ("NO_SOLUTION", "NO_SOLUTION"),
        SolveStatus::IterationLimit | SolveStatus::NumericalFailure => ("UNKNOWN_RESULT_STATUS", "UNKNOWN_RESULT_STATUS"),
    }
}

/// One sample: its input and the result of every requested formulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub input: InstanceInput,
    pub results: Vec<SolveRecord>,
}

impl SampleRecord {
    pub fn is_feasible(&self) -> bool {
        !self.results.is_empty() && self.results.iter().all(SolveRecord::is_solved)
    }

    pub fn result(&self, f: Formulation) -> Option<&SolveRecord> {
        self.results.iter().find(|r| r.formulation == f)
    }
}

// ---------------------------------------------------------------- case.json

fn one_based(v: &[usize]) -> Value {
    Value::from(v.iter().map(|i| i + 1).collect::<Vec<_>>())
}

fn nested(v: &[Vec<usize>]) -> Value {
    Value::from(v.iter().map(|l| one_based(l)).collect::<Vec<_>>())
}

fn coo(rows: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>, shape: (usize, usize)) -> Value {
    json!({ "I": one_based(&rows), "J": one_based(&cols), "V": vals, "shape": [shape.0, shape.1] })
}

/// Reference case as a JSON object with 1-based indices.
pub fn case_json(net: &Network) -> Value {
    let (nb, ne, ng) = (net.n_bus(), net.n_branch(), net.n_gen());
    let ys = |f: fn(&Admittance) -> f64| Value::from(net.y.iter().map(f).collect::<Vec<_>>());
    let mut ar = Vec::new();
    let mut ac = Vec::new();
    let mut av = Vec::new();
    for e in 0..ne {
        ar.extend([e, e]);
        ac.extend([net.from[e], net.to[e]]);
        av.extend([1.0, -1.0]);
    }
    let mut m = Map::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_string(), v);
    };
    put("case", json!(net.name));
    put("N", json!(nb));
    put("E", json!(ne));
    put("L", json!(net.n_load()));
    put("G", json!(ng));
    put("ref_bus", json!(net.ref_bus + 1));
    put("base_mva", json!(net.base_mva));
    put("vnom", json!(net.vnom));
    put("pd", json!(net.pd));
    put("qd", json!(net.qd));
    put("A", coo(ar, ac, av, (ne, nb)));
    put("Ag", coo(net.gen_bus.clone(), (0..ng).collect(), vec![1.0; ng], (nb, ng)));
    put("bus_arcs_fr", nested(&net.bus_arcs_fr));
    put("bus_arcs_to", nested(&net.bus_arcs_to));
    put("bus_gens", nested(&net.bus_gens));
    put("bus_loads", nested(&net.bus_loads));
    put("gs", json!(net.gs));
    put("bs", json!(net.bs));
    put("vmin", json!(net.vmin));
    put("vmax", json!(net.vmax));
    put("dvamin", json!(net.dvamin));
    put("dvamax", json!(net.dvamax));
    put("smax", json!(net.smax));
    put("pgmin", json!(net.pmin));
    put("pgmax", json!(net.pmax));
    put("qgmin", json!(net.qmin));
    put("qgmax", json!(net.qmax));
    put("c1", json!(net.cost));
    put("gen_bus", one_based(&net.gen_bus));
    put("load_bus", one_based(&net.load_bus));
    put("bus_fr", one_based(&net.from));
    put("bus_to", one_based(&net.to));
    put("g", ys(|y| y.g));
    put("b", ys(|y| y.b));
    put("gff", ys(|y| y.gff));
    put("gft", ys(|y| y.gft));
    put("gtf", ys(|y| y.gtf));
    put("gtt", ys(|y| y.gtt));
    put("bff", ys(|y| y.bff));
    put("bft", ys(|y| y.bft));
    put("btf", ys(|y| y.btf));
    put("btt", ys(|y| y.btt));
    // series data needed to rebuild the network exactly
    put("r", json!(net.r));
    put("x", json!(net.x));
    put("bc", json!(net.bc));
    put("tap", json!(net.tap));
    put("shift", json!(net.shift));
    Value::Object(m)
}

pub fn write_case_json(net: &Network, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&case_json(net)).map_err(|e| Error::file(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::Missing(key.to_string()))
}

fn floats(v: &Value, key: &str, len: usize) -> Result<Vec<f64>> {
    let arr: Vec<f64> = serde_json::from_value(field(v, key)?.clone())
        .map_err(|e| Error::Input(format!("`{key}`: {e}")))?;
    if arr.len() != len {
        return Err(Error::Shape { key: key.into(), expected: vec![len], found: vec![arr.len()] });
    }
    Ok(arr)
}

fn indices(v: &Value, key: &str, len: usize, bound: usize) -> Result<Vec<usize>> {
    let arr: Vec<usize> = serde_json::from_value(field(v, key)?.clone())
        .map_err(|e| Error::Input(format!("`{key}`: {e}")))?;
    if arr.len() != len {
        return Err(Error::Shape { key: key.into(), expected: vec![len], found: vec![arr.len()] });
    }
    arr.iter()
        .map(|&i| {
            if i == 0 || i > bound {
                Err(Error::Input(format!("`{key}`: index {i} outside 1..={bound}")))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

fn count(v: &Value, key: &str) -> Result<usize> {
    field(v, key)?.as_u64().map(|n| n as usize).ok_or_else(|| Error::Input(format!("`{key}` must be a count")))
}

/// Rebuilds a network from a case object.
pub fn network_from_case_json(v: &Value) -> Result<Network> {
    let (nb, ne, nl, ng) = (count(v, "N")?, count(v, "E")?, count(v, "L")?, count(v, "G")?);
    let name = field(v, "case")?.as_str().ok_or_else(|| Error::Input("`case` must be a string".into()))?;
    let base = field(v, "base_mva")?.as_f64().ok_or_else(|| Error::Input("`base_mva` must be a number".into()))?;
    let mut net = Network::empty(name, base);
    net.ref_bus = count(v, "ref_bus")?.checked_sub(1).ok_or_else(|| Error::Input("`ref_bus` is 1-based".into()))?;
    net.vnom = floats(v, "vnom", nb)?;
    net.gs = floats(v, "gs", nb)?;
    net.bs = floats(v, "bs", nb)?;
    net.vmin = floats(v, "vmin", nb)?;
    net.vmax = floats(v, "vmax", nb)?;
    net.pd = floats(v, "pd", nl)?;
    net.qd = floats(v, "qd", nl)?;
    net.load_bus = indices(v, "load_bus", nl, nb)?;
    net.gen_bus = indices(v, "gen_bus", ng, nb)?;
    net.pmin = floats(v, "pgmin", ng)?;
    net.pmax = floats(v, "pgmax", ng)?;
    net.qmin = floats(v, "qgmin", ng)?;
    net.qmax = floats(v, "qgmax", ng)?;
    net.cost = floats(v, "c1", ng)?;
    let from = indices(v, "bus_fr", ne, nb)?;
    let to = indices(v, "bus_to", ne, nb)?;
    let col = |k: &str| floats(v, k, ne);
    let (r, x, bc, tap, shift) = (col("r")?, col("x")?, col("bc")?, col("tap")?, col("shift")?);
    let (smax, dvamin, dvamax) = (col("smax")?, col("dvamin")?, col("dvamax")?);
    let (g, b) = (col("g")?, col("b")?);
    let (gff, gft, gtf, gtt) = (col("gff")?, col("gft")?, col("gtf")?, col("gtt")?);
    let (bff, bft, btf, btt) = (col("bff")?, col("bft")?, col("btf")?, col("btt")?);
    for e in 0..ne {
        let y = Admittance {
            gff: gff[e],
            bff: bff[e],
            gft: gft[e],
            bft: bft[e],
            gtf: gtf[e],
            btf: btf[e],
            gtt: gtt[e],
            btt: btt[e],
            g: g[e],
            b: b[e],
        };
        net.push_branch(from[e], to[e], r[e], x[e], bc[e], tap[e], shift[e], y, smax[e], dvamin[e], dvamax[e]);
    }
    net.finalize();
    net.validate()?;
    Ok(net)
}

pub fn read_case_json(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::file(path, e))?;
    network_from_case_json(&v).map_err(|e| Error::file(path, e))
}

// ---------------------------------------------------------------- split

/// Sample indices of each split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub infeasible: Vec<usize>,
}

impl Split {
    pub fn get(&self, name: &str) -> &[usize] {
        match name {
            "train" => &self.train,
            "test" => &self.test,
            _ => &self.infeasible,
        }
    }
}

/// Shuffles the feasible samples with a fixed seed; the first ⌊0.8 F⌋ are
/// for training and the rest for testing.
pub fn split_dataset(feasible: &[bool]) -> Split {
    let mut ok: Vec<usize> = (0..feasible.len()).filter(|&i| feasible[i]).collect();
    let infeasible = (0..feasible.len()).filter(|&i| !feasible[i]).collect();
    ok.shuffle(&mut ChaCha8Rng::seed_from_u64(SPLIT_SEED));
    let n_train = ok.len() * 4 / 5;
    let test = ok.split_off(n_train);
    Split { train: ok, test, infeasible }
}

// ---------------------------------------------------------------- HDF5

fn h5err(path: &Path) -> impl Fn(hdf5::Error) -> Error + '_ {
    move |e| Error::file(path, e)
}

fn write_array<T: hdf5::H5Type + Clone>(loc: &hdf5::Group, key: &str, shape: &[usize], data: Vec<T>) -> hdf5::Result<()> {
    let arr = ArrayD::from_shape_vec(IxDyn(shape), data).map_err(|e| hdf5::Error::from(e.to_string()))?;
    loc.new_dataset_builder().with_data(&arr).create(key)?;
    Ok(())
}

fn vlu(s: &str) -> VarLenUnicode {
    s.parse().expect("dataset strings contain no NUL bytes")
}

fn stacked_shape(n: usize, key: &Key, net: &Network) -> Vec<usize> {
    let mut s = vec![n];
    s.extend(key.shape(net));
    s
}

fn stack(points: &[&Point], key: &Key, net: &Network) -> Result<Vec<f64>> {
    let size = key.size(net);
    let mut out = Vec::with_capacity(points.len() * size);
    for p in points {
        let v = p.get(key.name).ok_or_else(|| Error::Missing(key.name.to_string()))?;
        if v.len() != size {
            return Err(Error::Shape { key: key.name.into(), expected: key.shape(net), found: vec![v.len()] });
        }
        out.extend_from_slice(v);
    }
    Ok(out)
}

fn status_bytes(v: &[bool]) -> impl Iterator<Item = u8> + '_ {
    v.iter().map(|&b| b as u8)
}

fn write_input(path: &Path, net: &Network, samples: &[&SampleRecord], config: &str) -> Result<()> {
    let n = samples.len();
    let file = hdf5::File::create(path).map_err(h5err(path))?;
    let go = || -> hdf5::Result<()> {
        let data = file.create_group("data")?;
        let (nl, ne, ng) = (net.n_load(), net.n_branch(), net.n_gen());
        write_array(&data, "pd", &[n, nl], samples.iter().flat_map(|s| s.input.pd.clone()).collect())?;
        write_array(&data, "qd", &[n, nl], samples.iter().flat_map(|s| s.input.qd.clone()).collect())?;
        let bs: Vec<u8> = samples.iter().flat_map(|s| status_bytes(&s.input.branch_status).collect::<Vec<_>>()).collect();
        write_array(&data, "branch_status", &[n, ne], bs)?;
        let gs: Vec<u8> = samples.iter().flat_map(|s| status_bytes(&s.input.gen_status).collect::<Vec<_>>()).collect();
        write_array(&data, "gen_status", &[n, ng], gs)?;
        let meta = file.create_group("meta")?;
        write_array(&meta, "seeds", &[n, 1], samples.iter().map(|s| s.input.seed).collect())?;
        meta.new_dataset::<VarLenUnicode>().create("config")?.write_scalar(&vlu(config))?;
        Ok(())
    };
    go().map_err(h5err(path))
}

fn check_input_shapes(net: &Network, samples: &[&SampleRecord]) -> Result<()> {
    for s in samples {
        s.input.check(net)?;
    }
    Ok(())
}

fn write_formulation(
    dir: &Path,
    f: Formulation,
    net: &Network,
    samples: &[&SampleRecord],
    settings: &SolveSettings,
) -> Result<()> {
    let n = samples.len();
    let recs: Vec<&SolveRecord> = samples
        .iter()
        .map(|s| s.result(f).ok_or_else(|| Error::Missing(format!("{f} result"))))
        .collect::<Result<_>>()?;
    // validate every array before touching the disk
    let primals: Vec<&Point> = recs.iter().map(|r| &r.primal).collect();
    let duals: Vec<&Point> = recs.iter().map(|r| &r.dual).collect();
    let mut pdata = Vec::new();
    for k in primal_keys(f) {
        pdata.push((k, stack(&primals, k, net)?));
    }
    let mut ddata = Vec::new();
    for k in dual_keys(f) {
        ddata.push((k, stack(&duals, k, net)?));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    for (name, data) in [("primal.h5", pdata), ("dual.h5", ddata)] {
        let path = dir.join(name);
        let file = hdf5::File::create(&path).map_err(h5err(&path))?;
        for (k, v) in data {
            write_array(&file, k.name, &stacked_shape(n, k, net), v).map_err(h5err(&path))?;
        }
    }
    let path = dir.join("meta.h5");
    let file = hdf5::File::create(&path).map_err(h5err(&path))?;
    let go = || -> hdf5::Result<()> {
        let strings = |get: fn(&SolveRecord) -> &str| recs.iter().map(|r| vlu(get(r))).collect::<Vec<_>>();
        let nums = |get: fn(&SolveRecord) -> f64| recs.iter().map(|r| get(r)).collect::<Vec<_>>();
        write_array(&file, "formulation", &[n, 1], recs.iter().map(|r| vlu(r.formulation.name())).collect())?;
        write_array(&file, "termination_status", &[n, 1], strings(|r| &r.termination_status))?;
        write_array(&file, "primal_status", &[n, 1], strings(|r| &r.primal_status))?;
        write_array(&file, "dual_status", &[n, 1], strings(|r| &r.dual_status))?;
        write_array(&file, "solve_time", &[n, 1], nums(|r| r.solve_time))?;
        write_array(&file, "build_time", &[n, 1], nums(|r| r.build_time))?;
        write_array(&file, "extract_time", &[n, 1], nums(|r| r.extract_time))?;
        write_array(&file, "primal_objective_value", &[n, 1], nums(|r| r.primal_objective))?;
        write_array(&file, "dual_objective_value", &[n, 1], nums(|r| r.dual_objective))?;
        write_array(&file, "seed", &[n, 1], samples.iter().map(|s| s.input.seed).collect())?;
        let opts = settings.for_formulation(f);
        file.new_attr::<f64>().create("solver_tol")?.write_scalar(&opts.tol)?;
        file.new_attr::<f64>().create("solver_feas_tol")?.write_scalar(&opts.feas())?;
        file.new_attr::<u64>().create("solver_max_iter")?.write_scalar(&(opts.max_iter as u64))?;
        Ok(())
    };
    go().map_err(h5err(&path))
}

/// Writes one split: its input file and one directory per formulation.
pub fn write_split(
    root: &Path,
    split: &str,
    net: &Network,
    samples: &[&SampleRecord],
    formulations: &[Formulation],
    config: &str,
    settings: &SolveSettings,
) -> Result<()> {
    check_input_shapes(net, samples)?;
    let dir = root.join(split);
    std::fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    write_input(&dir.join("input.h5"), net, samples, config)?;
    for &f in formulations {
        write_formulation(&dir.join(f.name()), f, net, samples, settings)?;
    }
    Ok(())
}

/// Writes `case.json` and all three splits. Returns the split used.
pub fn write_dataset(
    root: &Path,
    net: &Network,
    samples: &[SampleRecord],
    formulations: &[Formulation],
    config: &str,
    settings: &SolveSettings,
) -> Result<Split> {
    std::fs::create_dir_all(root).map_err(|e| Error::file(root, e))?;
    write_case_json(net, &root.join("case.json"))?;
    let split = split_dataset(&samples.iter().map(SampleRecord::is_feasible).collect::<Vec<_>>());
    for name in SPLITS {
        let rows: Vec<&SampleRecord> = split.get(name).iter().map(|&i| &samples[i]).collect();
        write_split(root, name, net, &rows, formulations, config, settings)?;
    }
    Ok(split)
}

/// A stored array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    /// Row `i` of the leading dimension.
    pub fn row(&self, i: usize) -> &[f64] {
        let w: usize = self.shape[1..].iter().product();
        &self.data[i * w..(i + 1) * w]
    }
}

fn open(path: &Path) -> Result<hdf5::File> {
    if !path.exists() {
        return Err(Error::file(path, "file not found"));
    }
    hdf5::File::open(path).map_err(h5err(path))
}

fn read_f64(loc: &hdf5::Group, key: &str, path: &Path) -> Result<Array> {
    if !loc.link_exists(key) {
        return Err(Error::file(path, Error::Missing(key.to_string())));
    }
    let ds = loc.dataset(key).map_err(h5err(path))?;
    let a: ArrayD<f64> = ds.read_dyn().map_err(h5err(path))?;
    Ok(Array { shape: a.shape().to_vec(), data: a.iter().copied().collect() })
}

fn read_u64(loc: &hdf5::Group, key: &str, path: &Path) -> Result<(Vec<usize>, Vec<u64>)> {
    if !loc.link_exists(key) {
        return Err(Error::file(path, Error::Missing(key.to_string())));
    }
    let a: ArrayD<u64> = loc.dataset(key).and_then(|d| d.read_dyn()).map_err(h5err(path))?;
    Ok((a.shape().to_vec(), a.iter().copied().collect()))
}

fn read_strings(loc: &hdf5::Group, key: &str, path: &Path) -> Result<(Vec<usize>, Vec<String>)> {
    if !loc.link_exists(key) {
        return Err(Error::file(path, Error::Missing(key.to_string())));
    }
    let a: ArrayD<VarLenUnicode> = loc.dataset(key).and_then(|d| d.read_dyn()).map_err(h5err(path))?;
    Ok((a.shape().to_vec(), a.iter().map(|s| s.as_str().to_string()).collect()))
}

fn expect_shape(path: &Path, key: &str, expected: &[usize], found: &[usize]) -> Result<()> {
    if expected != found {
        let e = Error::Shape { key: key.into(), expected: expected.to_vec(), found: found.to_vec() };
        return Err(Error::file(path, e));
    }
    Ok(())
}

/// Input arrays of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct InputData {
    pub inputs: Vec<InstanceInput>,
    pub config: String,
}

pub fn read_input(root: &Path, split: &str, net: &Network) -> Result<InputData> {
    let path = root.join(split).join("input.h5");
    let file = open(&path)?;
    let data = file.group("data").map_err(h5err(&path))?;
    let pd = read_f64(&data, "pd", &path)?;
    let n = pd.shape.first().copied().unwrap_or(0);
    let qd = read_f64(&data, "qd", &path)?;
    let want = |k: &Key| stacked_shape(n, k, net);
    expect_shape(&path, "pd", &want(&INPUT_KEYS[0]), &pd.shape)?;
    expect_shape(&path, "qd", &want(&INPUT_KEYS[1]), &qd.shape)?;
    let status = |key: &str, k: &Key| -> Result<Array> {
        let a: ArrayD<u8> = data.dataset(key).and_then(|d| d.read_dyn()).map_err(h5err(&path))?;
        expect_shape(&path, key, &want(k), a.shape())?;
        Ok(Array { shape: a.shape().to_vec(), data: a.iter().map(|&v| v as f64).collect() })
    };
    let bs = status("branch_status", &INPUT_KEYS[2])?;
    let gs = status("gen_status", &INPUT_KEYS[3])?;
    let meta = file.group("meta").map_err(h5err(&path))?;
    let (sshape, seeds) = read_u64(&meta, "seeds", &path)?;
    expect_shape(&path, "seeds", &[n, 1], &sshape)?;
    let config: VarLenUnicode = meta.dataset("config").and_then(|d| d.read_scalar()).map_err(h5err(&path))?;
    let inputs = (0..n)
        .map(|i| InstanceInput {
            pd: pd.row(i).to_vec(),
            qd: qd.row(i).to_vec(),
            branch_status: bs.row(i).iter().map(|&v| v != 0.0).collect(),
            gen_status: gs.row(i).iter().map(|&v| v != 0.0).collect(),
            seed: seeds[i],
        })
        .collect();
    Ok(InputData { inputs, config: config.as_str().to_string() })
}

/// Arrays of one formulation in one split.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulationData {
    pub n: usize,
    pub primal: BTreeMap<String, Array>,
    pub dual: BTreeMap<String, Array>,
    pub strings: BTreeMap<String, Vec<String>>,
    pub numbers: BTreeMap<String, Vec<f64>>,
    pub seeds: Vec<u64>,
}

impl FormulationData {
    fn point(map: &BTreeMap<String, Array>, i: usize) -> Point {
        map.iter().map(|(k, a)| (k.clone(), a.row(i).to_vec())).collect()
    }

    pub fn primal_point(&self, i: usize) -> Point {
        Self::point(&self.primal, i)
    }

    pub fn dual_point(&self, i: usize) -> Point {
        Self::point(&self.dual, i)
    }

    pub fn record(&self, i: usize, f: Formulation) -> SolveRecord {
        let s = |k: &str| self.strings[k][i].clone();
        let x = |k: &str| self.numbers[k][i];
        SolveRecord {
            formulation: f,
            termination_status: s("termination_status"),
            primal_status: s("primal_status"),
            dual_status: s("dual_status"),
            solve_time: x("solve_time"),
            build_time: x("build_time"),
            extract_time: x("extract_time"),
            primal_objective: x("primal_objective_value"),
            dual_objective: x("dual_objective_value"),
            primal: self.primal_point(i),
            dual: self.dual_point(i),
        }
    }
}

fn read_keyed(path: &Path, keys: &[Key], n: usize, net: &Network) -> Result<BTreeMap<String, Array>> {
    let file = open(path)?;
    let mut out = BTreeMap::new();
    for k in keys {
        let a = read_f64(&file, k.name, path)?;
        expect_shape(path, k.name, &stacked_shape(n, k, net), &a.shape)?;
        out.insert(k.name.to_string(), a);
    }
    Ok(out)
}

/// Reads and shape-checks the files of one formulation with `n` samples.
pub fn read_formulation(root: &Path, split: &str, f: Formulation, net: &Network, n: usize) -> Result<FormulationData> {
    let dir = root.join(split).join(f.name());
    let primal = read_keyed(&dir.join("primal.h5"), primal_keys(f), n, net)?;
    let dual = read_keyed(&dir.join("dual.h5"), dual_keys(f), n, net)?;
    let path = dir.join("meta.h5");
    let file = open(&path)?;
    let mut strings = BTreeMap::new();
    let mut numbers = BTreeMap::new();
    let mut seeds = Vec::new();
    for &k in META_KEYS {
        match k {
            "formulation" | "termination_status" | "primal_status" | "dual_status" => {
                let (shape, v) = read_strings(&file, k, &path)?;
                expect_shape(&path, k, &[n, 1], &shape)?;
                strings.insert(k.to_string(), v);
            }
            "seed" => {
                let (shape, v) = read_u64(&file, k, &path)?;
                expect_shape(&path, k, &[n, 1], &shape)?;
                seeds = v;
            }
            _ => {
                let a = read_f64(&file, k, &path)?;
                expect_shape(&path, k, &[n, 1], &a.shape)?;
                numbers.insert(k.to_string(), a.data);
            }
        }
    }
    if let Some(bad) = strings["formulation"].iter().find(|s| s.as_str() != f.name()) {
        return Err(Error::file(&path, format!("`formulation` column holds `{bad}`")));
    }
    Ok(FormulationData { n, primal, dual, strings, numbers, seeds })
}

/// Formulation directories present in a split.
pub fn formulations_in(root: &Path, split: &str) -> Vec<Formulation> {
    Formulation::ALL.into_iter().filter(|f| root.join(split).join(f.name()).is_dir()).collect()
}

/// Reads one split back into sample records.
pub fn read_split(root: &Path, split: &str, net: &Network) -> Result<Vec<SampleRecord>> {
    let input = read_input(root, split, net)?;
    let n = input.inputs.len();
    let fs = formulations_in(root, split);
    let data: Vec<(Formulation, FormulationData)> =
        fs.iter().map(|&f| read_formulation(root, split, f, net, n).map(|d| (f, d))).collect::<Result<_>>()?;
    Ok(input
        .inputs
        .into_iter()
        .enumerate()
        .map(|(i, input)| SampleRecord { input, results: data.iter().map(|(f, d)| d.record(i, *f)).collect() })
        .collect())
}

/// Counts found by a layout check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutSummary {
    pub case: String,
    pub counts: BTreeMap<String, usize>,
    pub formulations: Vec<Formulation>,
}

/// Checks the directory tree, every key and shape, and that the input and
/// metadata seeds agree row by row.
pub fn check_layout(root: &Path) -> Result<LayoutSummary> {
    let net = read_case_json(&root.join("case.json"))?;
    let mut counts = BTreeMap::new();
    let formulations = formulations_in(root, "train");
    for split in SPLITS {
        let dir = root.join(split);
        if !dir.is_dir() {
            return Err(Error::file(&dir, "split directory missing"));
        }
        if formulations_in(root, split) != formulations {
            return Err(Error::file(&dir, "formulation directories differ from the train split"));
        }
        let input = read_input(root, split, &net)?;
        let n = input.inputs.len();
        for &f in &formulations {
            let d = read_formulation(root, split, f, &net, n)?;
            if input.inputs.iter().zip(&d.seeds).any(|(a, &b)| a.seed != b) {
                return Err(Error::file(root.join(split).join(f.name()).join("meta.h5"), "seeds differ from input.h5"));
            }
        }
        counts.insert(split.to_string(), n);
    }
    Ok(LayoutSummary { case: net.name, counts, formulations })
}

/// Path of a formulation file inside a dataset.
pub fn file_path(root: &Path, split: &str, f: Formulation, file: &str) -> PathBuf {
    root.join(split).join(f.name()).join(file)
}

/// Reads every primal key of a formulation from a standalone file with
/// the `primal.h5` layout.
pub fn read_primal_file(path: &Path, f: Formulation, net: &Network) -> Result<(usize, Vec<Point>)> {
    let file = open(path)?;
    let first = primal_keys(f)[0].name;
    let n = read_f64(&file, first, path)?.shape.first().copied().unwrap_or(0);
    drop(file);
    let arrays = read_keyed(path, primal_keys(f), n, net)?;
    Ok((n, (0..n).map(|i| FormulationData::point(&arrays, i)).collect()))
}

/// Writes points with the `primal.h5` layout.
pub fn write_primal_file(path: &Path, f: Formulation, net: &Network, points: &[Point]) -> Result<()> {
    let refs: Vec<&Point> = points.iter().collect();
    let mut data = Vec::new();
    for k in primal_keys(f) {
        data.push((k, stack(&refs, k, net)?));
    }
    let file = hdf5::File::create(path).map_err(h5err(path))?;
    for (k, v) in data {
        write_array(&file, k.name, &stacked_shape(points.len(), k, net), v).map_err(h5err(path))?;
    }
    Ok(())
}
