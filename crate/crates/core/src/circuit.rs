//! Circuits and their text formats.
//!
//! Two formats are supported: an OpenQASM 2 subset (one gate per line, with
//! `measure` and `if(c==1)` lines for dynamic circuits) and a native JSON
//! document that also records the architecture split between data qubits
//! and the ancilla.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gates::{Action, ActionTable, GateKind};
use crate::linalg::{embed, fidelity, project_unchecked, Operator, ProjectedBlock, EPSILON};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_data: usize,
    pub has_ancilla: bool,
    pub gates: Vec<Action>,
}

impl Circuit {
    pub fn new(n_data: usize, has_ancilla: bool) -> Self {
        Self { n_data, has_ancilla, gates: Vec::new() }
    }

    pub fn from_history(table: &ActionTable, history: &[usize]) -> Self {
        Self {
            n_data: table.arch.n_data,
            has_ancilla: table.arch.has_ancilla,
            gates: history.iter().map(|&i| table.actions[i]).collect(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_data + usize::from(self.has_ancilla)
    }

    pub fn push(&mut self, action: Action) {
        self.gates.push(action);
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Gate count.
    pub fn depth(&self) -> usize {
        self.gates.len()
    }

    pub fn t_count(&self) -> usize {
        self.gates.iter().filter(|a| a.gate.is_t_like()).count()
    }

    /// Product of the embedded gates, first gate rightmost.
    pub fn unitary(&self) -> Result<Operator> {
        let n = self.n_qubits();
        let mut u = Operator::identity(1 << n);
        for a in &self.gates {
            let g = embed(&a.gate.matrix(), a.qubits(), n)?;
            u = &g * &u;
        }
        Ok(u)
    }

    /// Outcome block of the ancilla circuit; `None` without an ancilla.
    pub fn ancilla_block(&self, outcome: u8) -> Result<Option<ProjectedBlock>> {
        if !self.has_ancilla {
            return Ok(None);
        }
        Ok(Some(project_unchecked(&self.unitary()?, outcome)))
    }

    /// The map the circuit realizes on the data qubits, post-selected on
    /// ancilla outcome 0 and normalized.
    pub fn data_unitary(&self) -> Result<Option<Operator>> {
        if !self.has_ancilla {
            return self.unitary().map(Some);
        }
        Ok(self.ancilla_block(0)?.and_then(|b| b.normalized()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits();
        for a in &self.gates {
            if a.qubits().iter().any(|&q| q >= n) {
                return Err(invalid(format!("gate {a} out of range for {n} qubits")));
            }
        }
        Ok(())
    }
}

/// An ancilla circuit plus an optional correction applied to the data
/// qubits when the ancilla reads 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicCircuit {
    pub main: Circuit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<Circuit>,
}

impl DynamicCircuit {
    pub fn plain(main: Circuit) -> Self {
        Self { main, correction: None }
    }
}

/// Per-branch verification of a (possibly dynamic) circuit.
#[derive(Clone, Debug)]
pub struct Verification {
    /// Fidelity of the post-selected (or only) branch.
    pub fidelity: f64,
    /// Probability of ancilla outcome 0 (1.0 without ancilla).
    pub weight0: f64,
    /// Fidelity of the corrected outcome-1 branch when a correction exists.
    pub corrected_fidelity: Option<f64>,
    pub weight1: f64,
    pub pass: bool,
}

/// Simulates a circuit and compares every branch against `target`.
pub fn verify(circuit: &DynamicCircuit, target: &Operator) -> Result<Verification> {
    let main = &circuit.main;
    if target.dim() != 1 << main.n_data {
        return Err(invalid(format!(
            "target acts on {} qubit(s), circuit has {} data qubit(s)",
            target.n_qubits(),
            main.n_data
        )));
    }
    main.validate()?;
    if !main.has_ancilla {
        let f = fidelity(&main.unitary()?, target)?;
        return Ok(Verification {
            fidelity: f,
            weight0: 1.0,
            corrected_fidelity: None,
            weight1: 0.0,
            pass: f >= 1.0 - EPSILON,
        });
    }
    let u = main.unitary()?;
    let b0 = project_unchecked(&u, 0);
    let b1 = project_unchecked(&u, 1);
    let f0 = b0.normalized().map(|n| fidelity(&n, target)).transpose()?.unwrap_or(0.0);
    let mut pass = f0 >= 1.0 - EPSILON;
    let mut corrected = None;
    if let Some(c) = &circuit.correction {
        if c.n_data != main.n_data || c.has_ancilla {
            return Err(invalid("correction must act on the data qubits only"));
        }
        if let Some(u1) = b1.normalized() {
            let f1 = fidelity(&(&c.unitary()? * &u1), target)?;
            pass &= f1 >= 1.0 - EPSILON;
            corrected = Some(f1);
        }
    }
    Ok(Verification { fidelity: f0, weight0: b0.weight, corrected_fidelity: corrected, weight1: b1.weight, pass })
}

fn qasm_gate_line(out: &mut String, a: &Action) {
    let qs: Vec<String> = a.qubits().iter().map(|q| format!("q[{q}]")).collect();
    let _ = writeln!(out, "{} {};", a.gate.qasm_name(), qs.join(","));
}

/// OpenQASM 2 text. The ancilla is measured into `c[0]` and the correction
/// gates are conditioned on `c==1`.
pub fn to_qasm(circuit: &DynamicCircuit) -> String {
    let main = &circuit.main;
    let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(out, "// data_qubits={} ancilla={}", main.n_data, u8::from(main.has_ancilla));
    let _ = writeln!(out, "qreg q[{}];", main.n_qubits());
    if main.has_ancilla {
        out.push_str("creg c[1];\n");
    }
    for a in &main.gates {
        qasm_gate_line(&mut out, a);
    }
    if main.has_ancilla {
        let _ = writeln!(out, "measure q[{}] -> c[0];", main.n_data);
        if let Some(c) = &circuit.correction {
            for a in &c.gates {
                out.push_str("if(c==1) ");
                qasm_gate_line(&mut out, a);
            }
        }
    }
    out
}

fn parse_qubit(tok: &str, line: usize) -> Result<usize> {
    let tok = tok.trim();
    let inner = tok
        .strip_prefix("q[")
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| Error::Parse { line, message: format!("expected q[<n>], found `{tok}`") })?;
    inner.parse().map_err(|_| Error::Parse { line, message: format!("bad qubit index `{inner}`") })
}

fn parse_gate_stmt(stmt: &str, line: usize) -> Result<Action> {
    let (name, args) = stmt
        .split_once(char::is_whitespace)
        .ok_or_else(|| Error::Parse { line, message: format!("malformed statement `{stmt}`") })?;
    let gate: GateKind =
        name.parse().map_err(|_| Error::Parse { line, message: format!("unsupported gate `{name}`") })?;
    let qubits = args.split(',').map(|t| parse_qubit(t, line)).collect::<Result<Vec<_>>>()?;
    Action::new(gate, &qubits).map_err(|e| Error::Parse { line, message: e.to_string() })
}

/// Parses the subset written by [`to_qasm`].
pub fn parse_qasm(text: &str) -> Result<DynamicCircuit> {
    let mut n_qubits: Option<usize> = None;
    let mut n_data_hint: Option<usize> = None;
    let mut has_creg = false;
    let mut measured: Option<usize> = None;
    let mut main = Vec::new();
    let mut correction = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if let Some(comment) = trimmed.strip_prefix("//") {
            if let Some(v) = comment.trim().strip_prefix("data_qubits=") {
                let v = v.split_whitespace().next().unwrap_or("");
                n_data_hint = v.parse().ok();
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let stmt =
            trimmed.strip_suffix(';').ok_or_else(|| Error::Parse { line, message: "missing `;`".into() })?.trim();
        if stmt.starts_with("OPENQASM") || stmt.starts_with("include") {
            continue;
        }
        if let Some(rest) = stmt.strip_prefix("qreg") {
            let r = rest.trim();
            let inner = r
                .strip_prefix("q[")
                .and_then(|x| x.strip_suffix(']'))
                .ok_or_else(|| Error::Parse { line, message: "expected qreg q[<n>]".into() })?;
            n_qubits = Some(inner.parse().map_err(|_| Error::Parse { line, message: "bad register size".into() })?);
            continue;
        }
        if stmt.starts_with("creg") {
            has_creg = true;
            continue;
        }
        if let Some(rest) = stmt.strip_prefix("measure") {
            let (q, _) = rest
                .split_once("->")
                .ok_or_else(|| Error::Parse { line, message: "expected `measure q[i] -> c[0]`".into() })?;
            if measured.is_some() {
                return Err(Error::Parse { line, message: "only one measurement is supported".into() });
            }
            measured = Some(parse_qubit(q, line)?);
            continue;
        }
        if let Some(rest) = stmt.strip_prefix("if(c==1)") {
            if measured.is_none() {
                return Err(Error::Parse { line, message: "conditional gate before measurement".into() });
            }
            correction.push(parse_gate_stmt(rest.trim(), line)?);
            continue;
        }
        if measured.is_some() {
            return Err(Error::Parse { line, message: "unconditioned gate after measurement".into() });
        }
        main.push(parse_gate_stmt(stmt, line)?);
    }

    let n = n_qubits.ok_or(Error::Parse { line: 0, message: "missing qreg declaration".into() })?;
    let has_ancilla = measured.is_some() || (has_creg && n_data_hint.is_some_and(|d| d < n));
    if let Some(m) = measured {
        if m + 1 != n {
            return Err(Error::Parse { line: 0, message: "the measured ancilla must be the last qubit".into() });
        }
    }
    let n_data = if has_ancilla { n - 1 } else { n };
    let main = Circuit { n_data, has_ancilla, gates: main };
    main.validate().map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
    let correction = if correction.is_empty() {
        None
    } else {
        let c = Circuit { n_data, has_ancilla: false, gates: correction };
        c.validate().map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
        Some(c)
    };
    Ok(DynamicCircuit { main, correction })
}

pub fn to_json(circuit: &DynamicCircuit) -> String {
    serde_json::to_string_pretty(circuit).expect("circuit serialization")
}

pub fn parse_json(text: &str) -> Result<DynamicCircuit> {
    let c: DynamicCircuit =
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    c.main.validate()?;
    if let Some(corr) = &c.correction {
        corr.validate()?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use GateKind::*;

    fn cs_circuit() -> Circuit {
        Circuit {
            n_data: 2,
            has_ancilla: false,
            gates: vec![
                Action::single(T, 0),
                Action::pair(Cnot, 0, 1),
                Action::single(Tdg, 1),
                Action::pair(Cnot, 0, 1),
                Action::single(T, 1),
            ],
        }
    }

    #[test]
    fn counts() {
        let c = cs_circuit();
        assert_eq!(c.depth(), 5);
        assert_eq!(c.t_count(), 3);
    }

    #[test]
    fn qasm_round_trip_dynamic() {
        let main = Circuit {
            n_data: 1,
            has_ancilla: true,
            gates: vec![Action::single(H, 1), Action::pair(Cnot, 1, 0), Action::single(S, 1)],
        };
        let corr = Circuit { n_data: 1, has_ancilla: false, gates: vec![Action::single(X, 0)] };
        let d = DynamicCircuit { main, correction: Some(corr) };
        let text = to_qasm(&d);
        assert!(text.contains("measure q[1] -> c[0];"));
        assert!(text.contains("if(c==1) x q[0];"));
        assert_eq!(parse_qasm(&text).unwrap(), d);
        assert_eq!(parse_json(&to_json(&d)).unwrap(), d);
    }

    #[test]
    fn qasm_errors_carry_lines() {
        let text = "OPENQASM 2.0;\nqreg q[2];\nh q[0];\nfoo q[1];\n";
        match parse_qasm(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let text = "qreg q[2];\nh q[0]\n";
        assert!(matches!(parse_qasm(text), Err(Error::Parse { line: 2, .. })));
        let text = "qreg q[2];\ncx q[0],q[0];\n";
        assert!(matches!(parse_qasm(text), Err(Error::Parse { line: 2, .. })));
        let text = "qreg q[2];\nh q[5];\n";
        assert!(parse_qasm(text).is_err());
    }

    #[test]
    fn verify_unitary_circuit() {
        let cs = Operator::diagonal(&[
            crate::linalg::ONE,
            crate::linalg::ONE,
            crate::linalg::ONE,
            crate::linalg::C64::new(0.0, 1.0),
        ])
        .unwrap();
        let v = verify(&DynamicCircuit::plain(cs_circuit()), &cs).unwrap();
        assert!(v.pass);
        assert!((v.fidelity - 1.0).abs() < 1e-12);
        let mut broken = cs_circuit();
        broken.gates.remove(2);
        assert!(!verify(&DynamicCircuit::plain(broken), &cs).unwrap().pass);
    }
}
