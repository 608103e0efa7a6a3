//! Gate library, architectures, and the action table with its redundancy and
//! commutation lists.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{embed, Operator, C64, ONE, UNITARY_TOL, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    H,
    S,
    Sdg,
    T,
    Tdg,
    X,
    Z,
    #[serde(rename = "CX")]
    Cnot,
}

impl GateKind {
    pub const ALL: [GateKind; 8] =
        [GateKind::H, GateKind::S, GateKind::Sdg, GateKind::T, GateKind::Tdg, GateKind::X, GateKind::Z, GateKind::Cnot];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot => 2,
            _ => 1,
        }
    }

    /// Lower-case OpenQASM 2 mnemonic.
    pub fn qasm_name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::X => "x",
            GateKind::Z => "z",
            GateKind::Cnot => "cx",
        }
    }

    pub fn is_t_like(self) -> bool {
        matches!(self, GateKind::T | GateKind::Tdg)
    }

    pub fn inverse(self) -> GateKind {
        match self {
            GateKind::S => GateKind::Sdg,
            GateKind::Sdg => GateKind::S,
            GateKind::T => GateKind::Tdg,
            GateKind::Tdg => GateKind::T,
            g => g,
        }
    }

    pub fn matrix(self) -> Operator {
        let i = C64::new(0.0, 1.0);
        match self {
            GateKind::H => {
                Operator::from_real(2, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2, FRAC_1_SQRT_2, -FRAC_1_SQRT_2]).unwrap()
            }
            GateKind::S => Operator::diagonal(&[ONE, i]).unwrap(),
            GateKind::Sdg => Operator::diagonal(&[ONE, -i]).unwrap(),
            GateKind::T => Operator::diagonal(&[ONE, C64::from_polar(1.0, FRAC_PI_4)]).unwrap(),
            GateKind::Tdg => Operator::diagonal(&[ONE, C64::from_polar(1.0, -FRAC_PI_4)]).unwrap(),
            GateKind::X => Operator::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap(),
            GateKind::Z => Operator::diagonal(&[ONE, -ONE]).unwrap(),
            GateKind::Cnot => {
                let mut d = vec![ZERO; 16];
                d[0] = ONE;
                d[5] = ONE;
                d[11] = ONE;
                d[14] = ONE;
                Operator::from_vec(4, d).unwrap()
            }
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateKind::H => "H",
            GateKind::S => "S",
            GateKind::Sdg => "Sdg",
            GateKind::T => "T",
            GateKind::Tdg => "Tdg",
            GateKind::X => "X",
            GateKind::Z => "Z",
            GateKind::Cnot => "CX",
        };
        f.write_str(s)
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let g = match s.trim().to_ascii_lowercase().as_str() {
            "h" => GateKind::H,
            "s" => GateKind::S,
            "sdg" | "s†" | "sdag" => GateKind::Sdg,
            "t" => GateKind::T,
            "tdg" | "t†" | "tdag" => GateKind::Tdg,
            "x" => GateKind::X,
            "z" => GateKind::Z,
            "cx" | "cnot" => GateKind::Cnot,
            _ => return Err(Error::InvalidArgument(format!("unknown gate `{s}`"))),
        };
        Ok(g)
    }
}

/// `{H, S, T, CNOT}` closed under inverses: the Clifford+T set the
/// benchmarks use.
pub fn clifford_t() -> Vec<GateKind> {
    vec![GateKind::H, GateKind::S, GateKind::Sdg, GateKind::T, GateKind::Tdg, GateKind::Cnot]
}

/// `{H, T, CNOT}` closed under inverses, for ancilla architectures.
pub fn h_t_cnot() -> Vec<GateKind> {
    vec![GateKind::H, GateKind::T, GateKind::Tdg, GateKind::Cnot]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_data: usize,
    pub has_ancilla: bool,
    /// Allowed `(control, target)` pairs for two-qubit gates.
    pub connectivity: Vec<(usize, usize)>,
    /// Qubits on which single-qubit gates may act.
    pub single_qubit_sites: Vec<usize>,
}

impl Architecture {
    /// Every ordered pair, every site, no ancilla.
    pub fn all_to_all(n: usize) -> Self {
        let mut connectivity = Vec::new();
        for c in 0..n {
            for t in 0..n {
                if c != t {
                    connectivity.push((c, t));
                }
            }
        }
        Self { n_data: n, has_ancilla: false, connectivity, single_qubit_sites: (0..n).collect() }
    }

    /// 1D chain with CNOTs pointing down the line only (`i → i+1`).
    pub fn line(n: usize) -> Self {
        Self {
            n_data: n,
            has_ancilla: false,
            connectivity: (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            single_qubit_sites: (0..n).collect(),
        }
    }

    /// `n_data + 1`: single-qubit gates only on the ancilla, CNOTs between the
    /// ancilla and any data qubit in both orientations.
    pub fn ancilla_star(n_data: usize) -> Self {
        let anc = n_data;
        let mut connectivity = Vec::new();
        for d in 0..n_data {
            connectivity.push((d, anc));
            connectivity.push((anc, d));
        }
        connectivity.sort_unstable();
        Self { n_data, has_ancilla: true, connectivity, single_qubit_sites: vec![anc] }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_data + usize::from(self.has_ancilla)
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits()
    }

    pub fn data_dim(&self) -> usize {
        1 << self.n_data
    }

    pub fn ancilla(&self) -> Option<usize> {
        self.has_ancilla.then_some(self.n_data)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits();
        if self.n_data == 0 {
            return Err(Error::InvalidArchitecture("at least one data qubit is required".into()));
        }
        if n > 6 {
            return Err(Error::InvalidArchitecture(format!("{n} qubits exceeds the dense limit of 6")));
        }
        for &(c, t) in &self.connectivity {
            if c >= n || t >= n {
                return Err(Error::InvalidArchitecture(format!("pair ({c}, {t}) out of range for {n} qubits")));
            }
            if c == t {
                return Err(Error::InvalidArchitecture(format!("pair ({c}, {t}) repeats a qubit")));
            }
        }
        if let Some(&q) = self.single_qubit_sites.iter().find(|&&q| q >= n) {
            return Err(Error::InvalidArchitecture(format!("site {q} out of range for {n} qubits")));
        }
        Ok(())
    }
}

/// One gate placed on concrete qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub gate: GateKind,
    q: [usize; 2],
}

impl Action {
    pub fn single(gate: GateKind, q: usize) -> Self {
        assert_eq!(gate.arity(), 1);
        Self { gate, q: [q, usize::MAX] }
    }

    pub fn pair(gate: GateKind, control: usize, target: usize) -> Self {
        assert_eq!(gate.arity(), 2);
        Self { gate, q: [control, target] }
    }

    pub fn new(gate: GateKind, qubits: &[usize]) -> Result<Self> {
        match (gate.arity(), qubits) {
            (1, [q]) => Ok(Self::single(gate, *q)),
            (2, [c, t]) if c != t => Ok(Self::pair(gate, *c, *t)),
            _ => Err(Error::InvalidArgument(format!("{gate} cannot act on qubits {qubits:?}"))),
        }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.q[..self.gate.arity()]
    }

    pub fn embedded(&self, n_qubits: usize) -> Result<Operator> {
        embed(&self.gate.matrix(), self.qubits(), n_qubits)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.qubits() {
            [q] => write!(f, "{}{}", self.gate, q),
            [c, t] => write!(f, "{}{}{}", self.gate, c, t),
            _ => unreachable!(),
        }
    }
}

/// The enumerated legal action set for a gate set on an architecture.
#[derive(Clone, Debug)]
pub struct ActionTable {
    pub arch: Architecture,
    pub gates: Vec<GateKind>,
    pub actions: Vec<Action>,
    pub embedded: Vec<Operator>,
    redundant: Vec<bool>,
    commute: Vec<bool>,
}

impl ActionTable {
    pub fn build(gates: &[GateKind], arch: &Architecture) -> Result<Self> {
        if gates.is_empty() {
            return Err(Error::InvalidArgument("empty gate set".into()));
        }
        arch.validate()?;
        let n = arch.n_qubits();
        let mut sites = arch.single_qubit_sites.clone();
        sites.sort_unstable();
        sites.dedup();
        let mut pairs = arch.connectivity.clone();
        pairs.sort_unstable();
        pairs.dedup();

        let mut actions = Vec::new();
        for &g in gates {
            match g.arity() {
                1 => actions.extend(sites.iter().map(|&q| Action::single(g, q))),
                _ => actions.extend(pairs.iter().map(|&(c, t)| Action::pair(g, c, t))),
            }
        }
        if actions.is_empty() {
            return Err(Error::InvalidArchitecture("no legal action for this gate set".into()));
        }
        let embedded: Vec<Operator> = actions.iter().map(|a| a.embedded(n)).collect::<Result<_>>()?;

        let k = actions.len();
        let mut redundant = vec![false; k * k];
        let mut commute = vec![false; k * k];
        for i in 0..k {
            for j in i..k {
                let ij = &embedded[i] * &embedded[j];
                let ji = &embedded[j] * &embedded[i];
                let c = ij.max_abs_diff(&ji) <= UNITARY_TOL;
                let r_ij = ij.is_identity_up_to_phase(UNITARY_TOL);
                let r_ji = ji.is_identity_up_to_phase(UNITARY_TOL);
                commute[i * k + j] = c;
                commute[j * k + i] = c;
                redundant[i * k + j] = r_ij;
                redundant[j * k + i] = r_ji;
            }
        }
        Ok(Self { arch: arch.clone(), gates: gates.to_vec(), actions, embedded, redundant, commute })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn n_qubits(&self) -> usize {
        self.arch.n_qubits()
    }

    pub fn dim(&self) -> usize {
        self.arch.dim()
    }

    /// `embedded[i] · embedded[j]` is a phase times the identity.
    #[inline]
    pub fn redundant(&self, i: usize, j: usize) -> bool {
        self.redundant[i * self.actions.len() + j]
    }

    #[inline]
    pub fn commutes(&self, i: usize, j: usize) -> bool {
        self.commute[i * self.actions.len() + j]
    }

    pub fn index_of(&self, action: &Action) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }

    /// Whether `candidate` may follow `history` (oldest first).
    pub fn is_legal_after(&self, history: &[usize], candidate: usize) -> bool {
        for &h in history.iter().rev() {
            if self.redundant(candidate, h) {
                return false;
            }
            if !self.commutes(candidate, h) {
                return true;
            }
        }
        true
    }

    pub fn legal_mask(&self, history: &[usize]) -> Vec<bool> {
        (0..self.len()).map(|a| self.is_legal_after(history, a)).collect()
    }
}

/// Free-function form of [`ActionTable::legal_mask`].
pub fn legal_mask(history: &[usize], table: &ActionTable) -> Vec<bool> {
    table.legal_mask(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use GateKind::*;

    fn idx(t: &ActionTable, a: Action) -> usize {
        t.index_of(&a).unwrap()
    }

    #[test]
    fn library_is_unitary() {
        for g in GateKind::ALL {
            assert!(g.matrix().is_unitary(1e-12), "{g}");
            let inv = &g.matrix() * &g.inverse().matrix();
            if g != T && g != Tdg && g != S && g != Sdg {
                assert!(inv.max_abs_diff(&Operator::identity(g.matrix().dim())) < 1e-12);
            } else {
                assert!(inv.is_identity_up_to_phase(1e-12));
            }
        }
    }

    #[test]
    fn parse_gate_names() {
        assert_eq!("CNOT".parse::<GateKind>().unwrap(), Cnot);
        assert_eq!("tdg".parse::<GateKind>().unwrap(), Tdg);
        assert_eq!("S†".parse::<GateKind>().unwrap(), Sdg);
        assert!("rz".parse::<GateKind>().is_err());
    }

    #[test]
    fn three_qubit_line_has_eight_actions() {
        let t = ActionTable::build(&[H, T, Cnot], &Architecture::line(3)).unwrap();
        let names: Vec<String> = t.actions.iter().map(|a| a.to_string()).collect();
        assert_eq!(names, ["H0", "H1", "H2", "T0", "T1", "T2", "CX01", "CX12"]);
    }

    #[test]
    fn two_qubit_all_to_all_has_eight_actions() {
        let t = ActionTable::build(&[H, S, T, Cnot], &Architecture::all_to_all(2)).unwrap();
        assert_eq!(t.len(), 8);
        assert_eq!(t.actions[6], Action::pair(Cnot, 0, 1));
        assert_eq!(t.actions[7], Action::pair(Cnot, 1, 0));
    }

    #[test]
    fn ancilla_star_has_six_actions() {
        let t = ActionTable::build(&[H, T, Cnot], &Architecture::ancilla_star(2)).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.actions[0], Action::single(H, 2));
        assert_eq!(t.actions[1], Action::single(T, 2));
        assert!(t.actions[2..].iter().all(|a| a.gate == Cnot && a.qubits().contains(&2)));
    }

    #[test]
    fn empty_action_set_is_rejected() {
        let arch = Architecture { connectivity: vec![], ..Architecture::all_to_all(2) };
        let err = ActionTable::build(&[Cnot], &arch).unwrap_err();
        assert!(matches!(err, Error::InvalidArchitecture(_)));
        assert!(ActionTable::build(&[], &Architecture::all_to_all(2)).is_err());
        let bad = Architecture { connectivity: vec![(0, 3)], ..Architecture::all_to_all(2) };
        assert!(ActionTable::build(&[Cnot], &bad).is_err());
    }

    #[test]
    fn tables_are_consistent() {
        let t = ActionTable::build(&clifford_t(), &Architecture::all_to_all(2)).unwrap();
        for i in 0..t.len() {
            for j in 0..t.len() {
                assert_eq!(t.commutes(i, j), t.commutes(j, i));
            }
        }
        let h0 = idx(&t, Action::single(H, 0));
        let t0 = idx(&t, Action::single(T, 0));
        let td0 = idx(&t, Action::single(Tdg, 0));
        let cx = idx(&t, Action::pair(Cnot, 0, 1));
        assert!(t.redundant(h0, h0));
        assert!(t.redundant(t0, td0));
        assert!(!t.redundant(t0, t0));
        assert!(t.commutes(t0, cx));
        assert!(!t.commutes(h0, cx));
    }

    #[test]
    fn legal_mask_examples() {
        let t = ActionTable::build(&[H, T, Tdg, Cnot], &Architecture::all_to_all(2)).unwrap();
        assert!(t.legal_mask(&[]).iter().all(|&b| b));
        let h1 = idx(&t, Action::single(H, 1));
        assert!(!t.legal_mask(&[h1])[h1]);
        let t1 = idx(&t, Action::single(T, 1));
        let h2 = idx(&t, Action::single(H, 0));
        let td1 = idx(&t, Action::single(Tdg, 1));
        assert!(!t.legal_mask(&[t1, h2])[td1]);
        // a non-commuting gate in between unblocks the inverse
        let cx = idx(&t, Action::pair(Cnot, 0, 1));
        assert!(t.legal_mask(&[t1, cx])[td1]);
        // T on a control commutes with the CNOT, so the walk passes through
        let cx_rev = idx(&t, Action::pair(Cnot, 1, 0));
        assert!(!t.legal_mask(&[t1, cx_rev])[td1]);
        assert!(legal_mask(&[t1, h2], &t) == t.legal_mask(&[t1, h2]));
    }
}
