//! Scores for predicted solutions: optimality gap, constraint violations,
//! distances, and timing aggregates.

use crate::dataset::SolveRecord;
use crate::error::{Error, Result};
use crate::formulation::{build_acopf, build_dcopf, build_socopf, AcProblem, Point, ResidualReport, SolveSettings};
use crate::network::Network;
use crate::sampler::InstanceInput;
use crate::schema::Formulation;
use opfkit_solver::{solve_conic, solve_nlp, Cone, ConicProblem, CscMatrix, NlpProblem, SolveStatus};
use serde::Serialize;
use std::collections::BTreeMap;

/// Signed relative gap `(predicted − reference)/|reference|`.
pub fn optimality_gap(predicted: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 || !reference.is_finite() {
        return Err(Error::Input(format!("reference objective must be finite and nonzero, got {reference}")));
    }
    Ok((predicted - reference) / reference.abs())
}

/// Generation cost of a point, counting in-service generators only.
pub fn primal_objective(net: &Network, input: &InstanceInput, point: &Point) -> Result<f64> {
    input.check(net)?;
    let pg = crate::formulation::get(point, "pg", net.n_gen())?;
    Ok((0..net.n_gen()).filter(|&g| input.gen_status[g]).map(|g| net.cost[g] * pg[g]).sum())
}

/// Mean, standard deviation (population) and maximum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

impl Aggregate {
    pub fn of(v: &[f64]) -> Self {
        if v.is_empty() {
            return Aggregate::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Aggregate { mean, std: var.sqrt(), max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ViolationStats {
    pub mean: f64,
    pub max: f64,
    /// Share of entries above the threshold.
    pub proportion_violated: f64,
    pub total: f64,
}

pub const DEFAULT_THRESHOLD: f64 = 1e-6;

pub fn violation_stats(report: &ResidualReport, threshold: f64) -> BTreeMap<String, ViolationStats> {
    report
        .groups
        .iter()
        .map(|(k, v)| {
            let s = if v.is_empty() {
                ViolationStats::default()
            } else {
                let total: f64 = v.iter().sum();
                ViolationStats {
                    mean: total / v.len() as f64,
                    max: v.iter().copied().fold(0.0, f64::max),
                    proportion_violated: v.iter().filter(|&&x| x > threshold).count() as f64 / v.len() as f64,
                    total,
                }
            };
            (k.clone(), s)
        })
        .collect()
}

/// Euclidean distance over every array of `optimal`.
pub fn distance_to_optimal(predicted: &Point, optimal: &Point) -> Result<f64> {
    let mut acc = 0.0;
    for (k, b) in optimal {
        let a = predicted.get(k).ok_or_else(|| Error::Missing(k.clone()))?;
        if a.len() != b.len() {
            return Err(Error::Shape { key: k.clone(), expected: vec![b.len()], found: vec![a.len()] });
        }
        acc += a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub distance: f64,
    pub point: Point,
}

/// Closest feasible point in the Euclidean norm over the in-service
/// variables of the model.
pub fn distance_to_feasible(
    f: Formulation,
    net: &Network,
    input: &InstanceInput,
    predicted: &Point,
    settings: &SolveSettings,
) -> Result<Projection> {
    match f {
        Formulation::Ac => project_ac(net, input, predicted, settings),
        _ => {
            let model = if f == Formulation::Dc { build_dcopf(net, input)? } else { build_socopf(net, input)? };
            let target = model.point_to_x(predicted)?;
            let p = epigraph(&model.problem, &target);
            let res = solve_conic(&p, &settings.soc)?;
            if res.status != SolveStatus::Optimal {
                return Err(Error::SolveFailed(format!("projection ended with {}", res.status.as_str())));
            }
            let x = &res.x[..target.len()];
            Ok(Projection { distance: dist(x, &target), point: model.primal(x, net) })
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Same feasible set, objective `s` with `‖x − target‖² ≤ 2s`. The squared
/// form keeps the optimum off the cone apex when the target is feasible.
fn epigraph(p: &ConicProblem, target: &[f64]) -> ConicProblem {
    let (n, m) = (p.n(), p.b.len());
    let (mut ri, mut ci, mut vi) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..n {
        for q in p.a.colptr[j]..p.a.colptr[j + 1] {
            ri.push(p.a.rowval[q]);
            ci.push(j);
            vi.push(p.a.nzval[q]);
        }
    }
    ri.push(m);
    ci.push(n);
    vi.push(1.0);
    for j in 0..n {
        ri.push(m + 2 + j);
        ci.push(j);
        vi.push(1.0);
    }
    let mut b = p.b.clone();
    b.extend([0.0, -1.0]);
    b.extend_from_slice(target);
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut cones = p.cones.clone();
    cones.push(Cone::RotatedSoc(n + 2));
    ConicProblem { c, a: CscMatrix::from_triplets(m + n + 2, n + 1, &ri, &ci, &vi), b, cones }
}

/// The AC feasible set with objective `½‖x − target‖²`.
struct AcProjection<'a, 'n> {
    inner: &'a AcProblem<'n>,
    target: Vec<f64>,
}

impl NlpProblem for AcProjection<'_, '_> {
    fn num_vars(&self) -> usize {
        self.inner.num_vars()
    }
    fn num_cons(&self) -> usize {
        self.inner.num_cons()
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.inner.var_bounds()
    }
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.inner.con_bounds()
    }
    fn initial_point(&self) -> Vec<f64> {
        let (l, u) = self.inner.var_bounds();
        self.target.iter().zip(l.iter().zip(&u)).map(|(x, (l, u))| x.max(*l).min(*u)).collect()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for ((g, a), b) in grad.iter_mut().zip(x).zip(&self.target) {
            *g = a - b;
        }
    }
    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        self.inner.constraints(x, g)
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.inner.jacobian_structure()
    }
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        self.inner.jacobian_values(x, vals)
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = self.inner.hessian_structure();
        s.extend((0..self.num_vars()).map(|j| (j, j)));
        s
    }
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        let k = vals.len() - self.num_vars();
        self.inner.hessian_values(x, 0.0, lambda, &mut vals[..k]);
        vals[k..].iter_mut().for_each(|v| *v = obj_factor);
    }
}

fn project_ac(net: &Network, input: &InstanceInput, predicted: &Point, settings: &SolveSettings) -> Result<Projection> {
    let inner = build_acopf(net, input)?;
    let target = inner.point_to_x(predicted)?;
    let p = AcProjection { inner: &inner, target };
    let res = solve_nlp(&p, &settings.ac, None)?;
    if !matches!(res.status, SolveStatus::Optimal | SolveStatus::LocallyOptimal) {
        return Err(Error::SolveFailed(format!("projection ended with {}", res.status.as_str())));
    }
    Ok(Projection { distance: dist(&res.x, &p.target), point: inner.primal(&res.x) })
}

/// Aggregated solve times of a batch of records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub instances: usize,
    pub workers: usize,
    /// Sum of solve, build and extract time, in processor-hours.
    pub processor_hours: f64,
    pub wall_clock: f64,
    /// Instances per second of wall-clock time.
    pub throughput: f64,
    pub per_instance: Aggregate,
    pub solve_time: Aggregate,
}

pub fn timing_report(records: &[&SolveRecord], workers: usize, wall_clock: f64) -> Result<TimingReport> {
    let mut total = Vec::with_capacity(records.len());
    for r in records {
        let t = [r.solve_time, r.build_time, r.extract_time];
        if t.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Input("solve times must be nonnegative".into()));
        }
        total.push(t.iter().sum::<f64>());
    }
    let solve: Vec<f64> = records.iter().map(|r| r.solve_time).collect();
    Ok(TimingReport {
        instances: records.len(),
        workers,
        processor_hours: total.iter().sum::<f64>() / 3600.0,
        wall_clock,
        throughput: if wall_clock > 0.0 { records.len() as f64 / wall_clock } else { 0.0 },
        per_instance: Aggregate::of(&total),
        solve_time: Aggregate::of(&solve),
    })
}
