//! MATPOWER case files: parsing, writing and reduction to a basic network.

use crate::error::{Error, Result};
use crate::network::{branch_admittance, Network};
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct BusRow {
    pub id: i64,
    pub kind: i64,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub area: f64,
    pub vm: f64,
    pub va: f64,
    pub base_kv: f64,
    pub zone: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRow {
    pub bus: i64,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub mbase: f64,
    pub status: f64,
    pub pmax: f64,
    pub pmin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRow {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    /// 0 means nominal ratio 1.
    pub tap: f64,
    /// Degrees.
    pub shift: f64,
    pub status: f64,
    /// Degrees; 0/0 means unconstrained.
    pub angmin: f64,
    pub angmax: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenCostRow {
    pub model: i64,
    pub startup: f64,
    pub shutdown: f64,
    /// Polynomial coefficients, highest degree first.
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawCase {
    pub name: String,
    pub base_mva: f64,
    pub bus: Vec<BusRow>,
    pub gen: Vec<GenRow>,
    pub branch: Vec<BranchRow>,
    pub gencost: Vec<GenCostRow>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseDiagnostics {
    pub warnings: Vec<(usize, String)>,
    pub ignored: Vec<String>,
}

impl ParseDiagnostics {
    fn warn(&mut self, line: usize, msg: impl Into<String>) {
        self.warnings.push((line, msg.into()));
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let t = tok.trim();
    match t {
        "Inf" | "inf" | "+Inf" => return Ok(f64::INFINITY),
        "-Inf" | "-inf" => return Ok(f64::NEG_INFINITY),
        "NaN" | "nan" => return Ok(f64::NAN),
        _ => {}
    }
    t.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("non-numeric cell `{t}`") })
}

fn strip_comment(line: &str) -> &str {
    // '%' outside single quotes starts a comment
    let mut in_quote = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

struct Matrix {
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

/// Parses MATPOWER case text.
pub fn parse_matpower(text: &str) -> Result<(RawCase, ParseDiagnostics)> {
    let mut diag = ParseDiagnostics::default();
    let mut name = String::new();
    let mut base_mva: Option<f64> = None;
    let mut mats: HashMap<String, Matrix> = HashMap::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let lineno = i + 1;
        let raw = strip_comment(lines[i]).trim();
        i += 1;
        if raw.is_empty() {
            continue;
        }
        if let Some(rest) = raw.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                name = rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some(rest) = raw.strip_prefix("mpc.") else {
            diag.warn(lineno, format!("unrecognized statement `{raw}`"));
            continue;
        };
        let Some(eq) = rest.find('=') else {
            return Err(Error::Parse { line: lineno, msg: format!("expected assignment in `{raw}`") });
        };
        let key = rest[..eq].trim().to_string();
        let value = rest[eq + 1..].trim();
        if let Some(body) = value.strip_prefix('[') {
            // matrix, possibly spanning lines until `]`
            let mut buf = String::new();
            let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
            let mut cur_line = lineno;
            let mut chunk = body.to_string();
            let mut closed = false;
            loop {
                let (content, done) = match chunk.find(']') {
                    Some(p) => (chunk[..p].to_string(), true),
                    None => (chunk.clone(), false),
                };
                for (k, piece) in content.split(';').enumerate() {
                    if k > 0 {
                        flush_row(&mut buf, cur_line, &mut rows)?;
                    }
                    buf.push(' ');
                    buf.push_str(piece);
                }
                // a newline also ends a row
                flush_row(&mut buf, cur_line, &mut rows)?;
                if done {
                    closed = true;
                    break;
                }
                if i >= lines.len() {
                    break;
                }
                cur_line = i + 1;
                chunk = strip_comment(lines[i]).to_string();
                i += 1;
            }
            if !closed {
                return Err(Error::Parse { line: lineno, msg: format!("unterminated matrix `mpc.{key}`") });
            }
            mats.insert(key, Matrix { line: lineno, rows });
        } else if value.starts_with('{') {
            // cell arrays (names etc.) are skipped
            let mut closed = value.contains('}');
            while !closed && i < lines.len() {
                closed = strip_comment(lines[i]).contains('}');
                i += 1;
            }
            if !closed {
                return Err(Error::Parse { line: lineno, msg: format!("unterminated cell array `mpc.{key}`") });
            }
            diag.ignored.push(key.clone());
            diag.warn(lineno, format!("skipped cell array `mpc.{key}`"));
        } else {
            let v = value.trim_end_matches(';').trim();
            match key.as_str() {
                "baseMVA" => base_mva = Some(parse_number(v, lineno)?),
                "version" => {}
                _ => {
                    diag.ignored.push(key.clone());
                    diag.warn(lineno, format!("skipped field `mpc.{key}`"));
                }
            }
        }
    }

    let base_mva = base_mva.ok_or(Error::Parse { line: 0, msg: "missing mpc.baseMVA".into() })?;
    if !(base_mva > 0.0) {
        return Err(Error::Parse { line: 0, msg: "baseMVA must be positive".into() });
    }
    let mut take = |k: &str| mats.remove(k);
    let bus_m = take("bus").ok_or(Error::Parse { line: 0, msg: "missing mpc.bus".into() })?;
    let gen_m = take("gen").ok_or(Error::Parse { line: 0, msg: "missing mpc.gen".into() })?;
    let br_m = take("branch").ok_or(Error::Parse { line: 0, msg: "missing mpc.branch".into() })?;
    let cost_m = take("gencost");
    let mut leftovers: Vec<_> = mats.into_iter().collect();
    leftovers.sort_by_key(|(_, m)| m.line);
    for (k, m) in leftovers {
        diag.warn(m.line, format!("skipped matrix `mpc.{k}`"));
        diag.ignored.push(k);
    }

    let need = |rows: &Vec<(usize, Vec<f64>)>, n: usize, what: &str| -> Result<()> {
        for (l, r) in rows {
            if r.len() < n {
                return Err(Error::Parse { line: *l, msg: format!("{what} row has {} columns, need {n}", r.len()) });
            }
        }
        Ok(())
    };
    need(&bus_m.rows, 13, "bus")?;
    need(&gen_m.rows, 10, "gen")?;
    need(&br_m.rows, 11, "branch")?;

    let bus: Vec<BusRow> = bus_m
        .rows
        .iter()
        .map(|(_, r)| BusRow {
            id: r[0] as i64,
            kind: r[1] as i64,
            pd: r[2],
            qd: r[3],
            gs: r[4],
            bs: r[5],
            area: r[6],
            vm: r[7],
            va: r[8],
            base_kv: r[9],
            zone: r[10],
            vmax: r[11],
            vmin: r[12],
        })
        .collect();
    let gen: Vec<GenRow> = gen_m
        .rows
        .iter()
        .map(|(_, r)| GenRow {
            bus: r[0] as i64,
            pg: r[1],
            qg: r[2],
            qmax: r[3],
            qmin: r[4],
            vg: r[5],
            mbase: r[6],
            status: r[7],
            pmax: r[8],
            pmin: r[9],
        })
        .collect();
    let branch: Vec<BranchRow> = br_m
        .rows
        .iter()
        .map(|(_, r)| BranchRow {
            from: r[0] as i64,
            to: r[1] as i64,
            r: r[2],
            x: r[3],
            b: r[4],
            rate_a: r[5],
            rate_b: r[6],
            rate_c: r[7],
            tap: r[8],
            shift: r[9],
            status: r[10],
            angmin: r.get(11).copied().unwrap_or(0.0),
            angmax: r.get(12).copied().unwrap_or(0.0),
        })
        .collect();
    let mut gencost = Vec::new();
    if let Some(cm) = cost_m {
        for (l, r) in &cm.rows {
            if r.len() < 4 {
                return Err(Error::Parse { line: *l, msg: "gencost row needs at least 4 columns".into() });
            }
            let n = r[3] as usize;
            let ncoef = if r[0] as i64 == 1 { 2 * n } else { n };
            if r.len() < 4 + ncoef {
                return Err(Error::Parse { line: *l, msg: format!("gencost row declares {n} terms but has fewer cells") });
            }
            gencost.push(GenCostRow { model: r[0] as i64, startup: r[1], shutdown: r[2], coeffs: r[4..4 + ncoef].to_vec() });
        }
    }

    // referential integrity
    let mut ids = HashMap::new();
    for (k, b) in bus.iter().enumerate() {
        if ids.insert(b.id, k).is_some() {
            return Err(Error::Parse { line: bus_m.rows[k].0, msg: format!("duplicate bus id {}", b.id) });
        }
    }
    for (k, g) in gen.iter().enumerate() {
        if !ids.contains_key(&g.bus) {
            return Err(Error::Parse {
                line: gen_m.rows[k].0,
                msg: format!("dangling bus reference: generator at bus {}", g.bus),
            });
        }
    }
    for (k, br) in branch.iter().enumerate() {
        for end in [br.from, br.to] {
            if !ids.contains_key(&end) {
                return Err(Error::Parse {
                    line: br_m.rows[k].0,
                    msg: format!("dangling bus reference: branch to bus {end}"),
                });
            }
        }
    }
    Ok((RawCase { name, base_mva, bus, gen, branch, gencost }, diag))
}

fn flush_row(buf: &mut String, line: usize, rows: &mut Vec<(usize, Vec<f64>)>) -> Result<()> {
    let toks: Vec<&str> = buf.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
    if !toks.is_empty() {
        let vals = toks.iter().map(|t| parse_number(t, line)).collect::<Result<Vec<_>>>()?;
        rows.push((line, vals));
    }
    buf.clear();
    Ok(())
}

/// Writes a case in MATPOWER syntax covering every parsed column.
pub fn write_matpower(raw: &RawCase) -> String {
    let mut s = String::new();
    let name = if raw.name.is_empty() { "case" } else { raw.name.as_str() };
    let _ = writeln!(s, "function mpc = {name}");
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", raw.base_mva);
    let _ = writeln!(s, "\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [");
    for b in &raw.bus {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            b.id, b.kind, b.pd, b.qd, b.gs, b.bs, b.area, b.vm, b.va, b.base_kv, b.zone, b.vmax, b.vmin
        );
    }
    let _ = writeln!(s, "];\n\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [");
    for g in &raw.gen {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus, g.pg, g.qg, g.qmax, g.qmin, g.vg, g.mbase, g.status, g.pmax, g.pmin
        );
    }
    let _ = writeln!(
        s,
        "];\n\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = ["
    );
    for b in &raw.branch {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            b.from, b.to, b.r, b.x, b.b, b.rate_a, b.rate_b, b.rate_c, b.tap, b.shift, b.status, b.angmin, b.angmax
        );
    }
    let _ = writeln!(s, "];");
    if !raw.gencost.is_empty() {
        let _ = writeln!(s, "\nmpc.gencost = [");
        for c in &raw.gencost {
            let n = if c.model == 1 { c.coeffs.len() / 2 } else { c.coeffs.len() };
            let coeffs: Vec<String> = c.coeffs.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "\t{}\t{}\t{}\t{}\t{};", c.model, c.startup, c.shutdown, n, coeffs.join("\t"));
        }
        let _ = writeln!(s, "];");
    }
    s
}

/// Options controlling the reduction to a basic network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasicOptions {
    /// Replace a quadratic cost a·p² + b·p by its tangent slope at Pmax/2.
    pub linearize_quadratic: bool,
}

/// Notes produced while normalizing a case.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasicDiagnostics {
    pub notes: Vec<String>,
    /// Original bus id of every bus, in the new order.
    pub bus_ids: Vec<i64>,
    /// Original gen row of every kept generator.
    pub gen_rows: Vec<usize>,
    /// Original branch row of every kept branch.
    pub branch_rows: Vec<usize>,
}

const DEFAULT_ANGLE: f64 = 60.0;

/// Reduces a raw case to a basic network in per unit.
pub fn make_basic(raw: &RawCase, opts: &BasicOptions) -> Result<(Network, BasicDiagnostics)> {
    let mut d = BasicDiagnostics::default();
    let base = raw.base_mva;

    // buses: drop isolated (type 4)
    let kept_bus: Vec<usize> = (0..raw.bus.len()).filter(|&k| raw.bus[k].kind != 4).collect();
    if kept_bus.len() < raw.bus.len() {
        d.notes.push(format!("removed {} isolated buses", raw.bus.len() - kept_bus.len()));
    }
    let mut index_of: HashMap<i64, usize> = HashMap::new();
    for (new, &k) in kept_bus.iter().enumerate() {
        index_of.insert(raw.bus[k].id, new);
    }
    d.bus_ids = kept_bus.iter().map(|&k| raw.bus[k].id).collect();
    let nb = kept_bus.len();
    if nb == 0 {
        return Err(Error::Network("no active buses".into()));
    }

    // generators
    let mut gens = Vec::new();
    for (k, g) in raw.gen.iter().enumerate() {
        if g.status > 0.0 {
            if let Some(&b) = index_of.get(&g.bus) {
                gens.push((k, b));
            } else {
                d.notes.push(format!("generator row {} sits on an isolated bus and was removed", k + 1));
            }
        }
    }
    if gens.len() < raw.gen.len() {
        d.notes.push(format!("{} generators out of service or isolated", raw.gen.len() - gens.len()));
    }
    // branches
    let mut branches = Vec::new();
    for (k, br) in raw.branch.iter().enumerate() {
        if br.status != 0.0 {
            match (index_of.get(&br.from), index_of.get(&br.to)) {
                (Some(&f), Some(&t)) => branches.push((k, f, t)),
                _ => d.notes.push(format!("branch row {} touches an isolated bus and was removed", k + 1)),
            }
        }
    }

    // reference bus
    let ref_bus = match kept_bus.iter().position(|&k| raw.bus[k].kind == 3) {
        Some(p) => p,
        None => {
            let best = gens
                .iter()
                .max_by(|a, b| raw.gen[a.0].pmax.partial_cmp(&raw.gen[b.0].pmax).unwrap_or(std::cmp::Ordering::Equal))
                .ok_or_else(|| Error::Network("no reference bus and no generators".into()))?;
            d.notes.push("no reference bus in source; chose the bus of the largest generator".into());
            best.1
        }
    };

    let mut net = Network::empty(&raw.name, base);
    net.ref_bus = ref_bus;
    for &k in &kept_bus {
        let b = &raw.bus[k];
        net.gs.push(b.gs / base);
        net.bs.push(b.bs / base);
        net.vmin.push(b.vmin);
        net.vmax.push(b.vmax);
        net.vnom.push(b.base_kv);
    }
    // one load per bus with nonzero demand
    for (new, &k) in kept_bus.iter().enumerate() {
        let b = &raw.bus[k];
        if b.pd != 0.0 || b.qd != 0.0 {
            net.load_bus.push(new);
            net.pd.push(b.pd / base);
            net.qd.push(b.qd / base);
        }
    }

    // costs
    let ng_raw = raw.gen.len();
    if raw.gencost.len() < ng_raw && !raw.gencost.is_empty() {
        return Err(Error::Network(format!("{} gencost rows for {} generators", raw.gencost.len(), ng_raw)));
    }
    if raw.gencost.len() > ng_raw {
        d.notes.push("reactive power cost rows ignored".into());
    }
    for &(k, b) in &gens {
        let g = &raw.gen[k];
        if g.pmin > g.pmax {
            return Err(Error::Network(format!("generator row {} has pmin > pmax", k + 1)));
        }
        net.gen_bus.push(b);
        net.pmin.push(g.pmin / base);
        net.pmax.push(g.pmax / base);
        net.qmin.push(g.qmin / base);
        net.qmax.push(g.qmax / base);
        let c = match raw.gencost.get(k) {
            None => 0.0,
            Some(cost) => linear_cost(cost, g.pmax, opts, k)?,
        };
        net.cost.push(c * base);
    }
    d.gen_rows = gens.iter().map(|g| g.0).collect();

    // branches
    let total_pd: f64 = net.pd.iter().sum();
    let total_qd: f64 = net.qd.iter().map(|v| v.abs()).sum();
    let big_m = total_pd + total_qd;
    let mut unlimited = 0;
    let mut angle_fixed = 0;
    for &(k, f, t) in &branches {
        let br = &raw.branch[k];
        if f == t {
            return Err(Error::Network(format!("branch row {} is a self loop", k + 1)));
        }
        let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
        let shift = br.shift.to_radians();
        let adm = branch_admittance(br.r, br.x, br.b, tap, shift)
            .map_err(|e| Error::Network(format!("branch row {}: {e}", k + 1)))?;
        let smax = if br.rate_a == 0.0 {
            unlimited += 1;
            big_m
        } else {
            br.rate_a / base
        };
        let (mut amin, mut amax) = (br.angmin, br.angmax);
        if amin == 0.0 && amax == 0.0 {
            amin = -DEFAULT_ANGLE;
            amax = DEFAULT_ANGLE;
            angle_fixed += 1;
        } else {
            if amin <= -90.0 {
                amin = -DEFAULT_ANGLE;
                angle_fixed += 1;
            }
            if amax >= 90.0 {
                amax = DEFAULT_ANGLE;
                angle_fixed += 1;
            }
        }
        net.push_branch(f, t, br.r, br.x, br.b, tap, shift, adm, smax, amin.to_radians(), amax.to_radians());
    }
    if unlimited > 0 {
        d.notes.push(format!("{unlimited} branches without thermal rating use a limit of {big_m:.6} p.u."));
    }
    if angle_fixed > 0 {
        d.notes.push(format!("{angle_fixed} angle-difference limits replaced by ±{DEFAULT_ANGLE} degrees"));
    }
    d.branch_rows = branches.iter().map(|b| b.0).collect();
    net.finalize();
    net.validate()?;
    Ok((net, d))
}

/// Expresses a basic network as a raw case again, in MW and degrees.
pub fn network_to_raw(net: &Network) -> RawCase {
    let base = net.base_mva;
    let bus = (0..net.n_bus())
        .map(|i| {
            let kind = if i == net.ref_bus {
                3
            } else if net.bus_gens[i].is_empty() {
                1
            } else {
                2
            };
            BusRow {
                id: i as i64 + 1,
                kind,
                pd: net.bus_loads[i].iter().map(|&l| net.pd[l]).sum::<f64>() * base,
                qd: net.bus_loads[i].iter().map(|&l| net.qd[l]).sum::<f64>() * base,
                gs: net.gs[i] * base,
                bs: net.bs[i] * base,
                area: 1.0,
                vm: 1.0,
                va: 0.0,
                base_kv: net.vnom[i],
                zone: 1.0,
                vmax: net.vmax[i],
                vmin: net.vmin[i],
            }
        })
        .collect();
    let gen = (0..net.n_gen())
        .map(|g| GenRow {
            bus: net.gen_bus[g] as i64 + 1,
            pg: 0.0,
            qg: 0.0,
            qmax: net.qmax[g] * base,
            qmin: net.qmin[g] * base,
            vg: 1.0,
            mbase: base,
            status: 1.0,
            pmax: net.pmax[g] * base,
            pmin: net.pmin[g] * base,
        })
        .collect();
    let branch = (0..net.n_branch())
        .map(|e| BranchRow {
            from: net.from[e] as i64 + 1,
            to: net.to[e] as i64 + 1,
            r: net.r[e],
            x: net.x[e],
            b: net.bc[e],
            rate_a: net.smax[e] * base,
            rate_b: 0.0,
            rate_c: 0.0,
            tap: net.tap[e],
            shift: net.shift[e].to_degrees(),
            status: 1.0,
            angmin: net.dvamin[e].to_degrees(),
            angmax: net.dvamax[e].to_degrees(),
        })
        .collect();
    let gencost = net
        .cost
        .iter()
        .map(|c| GenCostRow { model: 2, startup: 0.0, shutdown: 0.0, coeffs: vec![c / base, 0.0] })
        .collect();
    RawCase { name: net.name.clone(), base_mva: base, bus, gen, branch, gencost }
}

/// Linear cost coefficient in $/MWh.
fn linear_cost(cost: &GenCostRow, pmax_mw: f64, opts: &BasicOptions, row: usize) -> Result<f64> {
    if cost.model != 2 {
        return Err(Error::Network(format!("generator row {}: piecewise-linear costs are not supported", row + 1)));
    }
    let c = &cost.coeffs;
    match c.len() {
        0 => Ok(0.0),
        1 => Ok(0.0),
        2 => Ok(c[0]),
        3 => {
            if c[0] == 0.0 {
                Ok(c[1])
            } else if opts.linearize_quadratic {
                Ok(c[1] + 2.0 * c[0] * (pmax_mw / 2.0))
            } else {
                Err(Error::Network(format!(
                    "generator row {}: quadratic cost term {} needs linearization",
                    row + 1,
                    c[0]
                )))
            }
        }
        n => {
            if c[..n - 2].iter().all(|v| *v == 0.0) {
                Ok(c[n - 2])
            } else {
                Err(Error::Network(format!("generator row {}: cost polynomial of degree {} not supported", row + 1, n - 1)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = "function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t1\t100\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t200\t0;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t200\t0\t0\t0\t0\t1\t-30\t30;
];
mpc.gencost = [
\t2\t0\t0\t2\t5\t0;
];
";

    #[test]
    fn parses_minimal_case() {
        let (raw, diag) = parse_matpower(TWO_BUS).unwrap();
        assert_eq!(raw.name, "two_bus");
        assert_eq!(raw.bus.len(), 2);
        assert_eq!(raw.gen.len(), 1);
        assert_eq!(raw.branch.len(), 1);
        assert_eq!(raw.gencost[0].coeffs, vec![5.0, 0.0]);
        assert!(diag.warnings.is_empty());
    }

    #[test]
    fn dangling_reference_is_an_error() {
        let text = TWO_BUS.replace("\t1\t2\t0\t0.1", "\t1\t99\t0\t0.1");
        let err = parse_matpower(&text).unwrap_err().to_string();
        assert!(err.contains("dangling bus reference"), "{err}");
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let text = TWO_BUS.replace("\t2\t1\t100", "\t2\t1\tabc");
        match parse_matpower(&text) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 6);
                assert!(msg.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_then_parse_round_trips() {
        let (raw, _) = parse_matpower(TWO_BUS).unwrap();
        let (back, _) = parse_matpower(&write_matpower(&raw)).unwrap();
        assert_eq!(raw, back);
    }

    #[test]
    fn unknown_matrices_are_skipped_with_diagnostic() {
        let text = format!("{TWO_BUS}mpc.areas = [\n 1 1;\n];\nmpc.bus_name = {{\n 'a';\n 'b';\n}};\n");
        let (_, diag) = parse_matpower(&text).unwrap();
        assert_eq!(diag.ignored, vec!["bus_name".to_string(), "areas".to_string()]);
    }

    #[test]
    fn cost_conversion_and_branch_filtering() {
        let text = TWO_BUS.replace(
            "mpc.branch = [\n",
            "mpc.branch = [\n\t1\t2\t0\t0.2\t0\t0\t0\t0\t0\t0\t0\t0\t0;\n\t1\t2\t0\t0.3\t0\t0\t0\t0\t0\t0\t1\t0\t0;\n",
        );
        let (raw, _) = parse_matpower(&text).unwrap();
        let (net, d) = make_basic(&raw, &BasicOptions::default()).unwrap();
        assert_eq!(net.n_branch(), 2);
        assert_eq!(d.branch_rows, vec![1, 2]);
        assert_eq!(net.cost[0], 5.0 * 100.0);
        // 0/0 angle limits become ±60 degrees; rateA 0 becomes the big-M limit
        assert!((net.dvamax[0] - 60f64.to_radians()).abs() < 1e-15);
        assert!((net.smax[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_cost_needs_flag() {
        let text = TWO_BUS.replace("\t2\t0\t0\t2\t5\t0;", "\t2\t0\t0\t3\t0.01\t5\t0;");
        let (raw, _) = parse_matpower(&text).unwrap();
        assert!(make_basic(&raw, &BasicOptions::default()).is_err());
        let (net, _) = make_basic(&raw, &BasicOptions { linearize_quadratic: true }).unwrap();
        // slope at 100 MW: 5 + 2·0.01·100 = 7 $/MWh
        assert!((net.cost[0] - 700.0).abs() < 1e-9);
    }

    #[test]
    fn missing_reference_uses_largest_generator() {
        let text = TWO_BUS.replace("\t1\t3\t0\t0", "\t1\t2\t0\t0");
        let (raw, _) = parse_matpower(&text).unwrap();
        let (net, d) = make_basic(&raw, &BasicOptions::default()).unwrap();
        assert_eq!(net.ref_bus, 0);
        assert!(d.notes.iter().any(|n| n.contains("largest generator")));
    }
}
