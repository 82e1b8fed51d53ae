//! Names and shapes of every stored primal and dual array.

use crate::error::{Error, Result};
use crate::network::Network;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Formulation {
    Ac,
    Dc,
    Soc,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [Formulation::Ac, Formulation::Dc, Formulation::Soc];

    /// Directory name used in datasets.
    pub fn name(&self) -> &'static str {
        match self {
            Formulation::Ac => "ACOPF",
            Formulation::Dc => "DCOPF",
            Formulation::Soc => "SOCOPF",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ACOPF" | "AC" => Ok(Formulation::Ac),
            "DCOPF" | "DC" => Ok(Formulation::Dc),
            "SOCOPF" | "SOC" => Ok(Formulation::Soc),
            _ => Err(Error::Input(format!("unknown formulation `{s}`"))),
        }
    }
}

/// Leading per-sample dimension of an array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Bus,
    Branch,
    Gen,
    Load,
    One,
}

impl Dim {
    pub fn len(&self, net: &Network) -> usize {
        match self {
            Dim::Bus => net.n_bus(),
            Dim::Branch => net.n_branch(),
            Dim::Gen => net.n_gen(),
            Dim::Load => net.n_load(),
            Dim::One => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Key {
    pub name: &'static str,
    pub dim: Dim,
    /// Trailing dimension for cone duals, 1 otherwise.
    pub width: usize,
}

impl Key {
    const fn new(name: &'static str, dim: Dim) -> Self {
        Key { name, dim, width: 1 }
    }
    const fn cone(name: &'static str, dim: Dim, width: usize) -> Self {
        Key { name, dim, width }
    }

    /// Per-sample shape.
    pub fn shape(&self, net: &Network) -> Vec<usize> {
        if self.width > 1 {
            vec![self.dim.len(net), self.width]
        } else {
            vec![self.dim.len(net)]
        }
    }

    pub fn size(&self, net: &Network) -> usize {
        self.dim.len(net) * self.width
    }
}

use Dim::*;

const AC_PRIMAL: &[Key] = &[
    Key::new("pg", Gen),
    Key::new("qg", Gen),
    Key::new("vm", Bus),
    Key::new("va", Bus),
    Key::new("pf", Branch),
    Key::new("qf", Branch),
    Key::new("pt", Branch),
    Key::new("qt", Branch),
];

const AC_DUAL: &[Key] = &[
    Key::new("slack_bus", One),
    Key::new("kcl_p", Bus),
    Key::new("kcl_q", Bus),
    Key::new("ohm_pf", Branch),
    Key::new("ohm_qf", Branch),
    Key::new("ohm_pt", Branch),
    Key::new("ohm_qt", Branch),
    Key::new("sm_fr", Branch),
    Key::new("sm_to", Branch),
    Key::new("va_diff", Branch),
    Key::new("pg_lb", Gen),
    Key::new("pg_ub", Gen),
    Key::new("qg_lb", Gen),
    Key::new("qg_ub", Gen),
    Key::new("vm_lb", Bus),
    Key::new("vm_ub", Bus),
    Key::new("pf_lb", Branch),
    Key::new("pf_ub", Branch),
    Key::new("qf_lb", Branch),
    Key::new("qf_ub", Branch),
    Key::new("pt_lb", Branch),
    Key::new("pt_ub", Branch),
    Key::new("qt_lb", Branch),
    Key::new("qt_ub", Branch),
];

const SOC_PRIMAL: &[Key] = &[
    Key::new("pg", Gen),
    Key::new("qg", Gen),
    Key::new("w", Bus),
    Key::new("wr", Branch),
    Key::new("wi", Branch),
    Key::new("pf", Branch),
    Key::new("pt", Branch),
    Key::new("qf", Branch),
    Key::new("qt", Branch),
];

const SOC_DUAL: &[Key] = &[
    Key::new("kcl_p", Bus),
    Key::new("kcl_q", Bus),
    Key::new("ohm_pf", Branch),
    Key::new("ohm_qf", Branch),
    Key::new("ohm_pt", Branch),
    Key::new("ohm_qt", Branch),
    Key::cone("sm_fr", Branch, 3),
    Key::cone("sm_to", Branch, 3),
    Key::cone("jabr", Branch, 4),
    Key::new("va_diff_lb", Branch),
    Key::new("va_diff_ub", Branch),
    Key::new("w_lb", Bus),
    Key::new("w_ub", Bus),
    Key::new("wr_lb", Branch),
    Key::new("wr_ub", Branch),
    Key::new("wi_lb", Branch),
    Key::new("wi_ub", Branch),
    Key::new("pg_lb", Gen),
    Key::new("pg_ub", Gen),
    Key::new("qg_lb", Gen),
    Key::new("qg_ub", Gen),
    Key::new("pf_lb", Branch),
    Key::new("pf_ub", Branch),
    Key::new("qf_lb", Branch),
    Key::new("qf_ub", Branch),
    Key::new("pt_lb", Branch),
    Key::new("pt_ub", Branch),
    Key::new("qt_lb", Branch),
    Key::new("qt_ub", Branch),
];

const DC_PRIMAL: &[Key] = &[Key::new("pg", Gen), Key::new("va", Bus), Key::new("pf", Branch)];

const DC_DUAL: &[Key] = &[
    Key::new("slack_bus", One),
    Key::new("kcl", Bus),
    Key::new("ohm", Branch),
    Key::new("va_diff", Branch),
    Key::new("pg_lb", Gen),
    Key::new("pg_ub", Gen),
    Key::new("pf_lb", Branch),
    Key::new("pf_ub", Branch),
];

pub fn primal_keys(f: Formulation) -> &'static [Key] {
    match f {
        Formulation::Ac => AC_PRIMAL,
        Formulation::Soc => SOC_PRIMAL,
        Formulation::Dc => DC_PRIMAL,
    }
}

pub fn dual_keys(f: Formulation) -> &'static [Key] {
    match f {
        Formulation::Ac => AC_DUAL,
        Formulation::Soc => SOC_DUAL,
        Formulation::Dc => DC_DUAL,
    }
}

pub fn find_key(keys: &[Key], name: &str) -> Option<Key> {
    keys.iter().copied().find(|k| k.name == name)
}

/// Input arrays, all `(N, dim)`.
pub const INPUT_KEYS: &[Key] =
    &[Key::new("pd", Load), Key::new("qd", Load), Key::new("branch_status", Branch), Key::new("gen_status", Gen)];

/// Per-sample metadata columns, all `(N, 1)`.
pub const META_KEYS: &[&str] = &[
    "formulation",
    "termination_status",
    "primal_status",
    "dual_status",
    "solve_time",
    "build_time",
    "extract_time",
    "primal_objective_value",
    "dual_objective_value",
    "seed",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for f in Formulation::ALL {
            assert_eq!(f.name().parse::<Formulation>().unwrap(), f);
        }
        assert!("QCOPF".parse::<Formulation>().is_err());
    }

    #[test]
    fn cone_widths() {
        assert_eq!(find_key(dual_keys(Formulation::Soc), "jabr").unwrap().width, 4);
        assert_eq!(find_key(dual_keys(Formulation::Soc), "sm_to").unwrap().width, 3);
        assert_eq!(find_key(dual_keys(Formulation::Ac), "sm_to").unwrap().width, 1);
    }
}
