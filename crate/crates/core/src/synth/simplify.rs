//! Peephole simplification: identity prefixes, cancelling pairs, and T·T
//! merges, each allowed to look past gates that commute.

use std::collections::HashMap;

use crate::circuit::Circuit;
use crate::gates::{Action, GateKind};
use crate::linalg::{embed, Operator};

/// Longest prefix checked for being the identity.
pub const PREFIX_WINDOW: usize = 8;

const TOL: f64 = 1e-10;

/// Both actions embedded on the union of their qubits.
fn local_pair(a: &Action, b: &Action) -> (Operator, Operator) {
    let mut qubits: Vec<usize> = a.qubits().to_vec();
    for &q in b.qubits() {
        if !qubits.contains(&q) {
            qubits.push(q);
        }
    }
    let local =
        |x: &Action| -> Vec<usize> { x.qubits().iter().map(|q| qubits.iter().position(|p| p == q).unwrap()).collect() };
    let n = qubits.len();
    let ea = embed(&a.gate.matrix(), &local(a), n).expect("valid local embedding");
    let eb = embed(&b.gate.matrix(), &local(b), n).expect("valid local embedding");
    (ea, eb)
}

#[derive(Default)]
struct Relations {
    cache: HashMap<(Action, Action), (bool, bool)>,
}

impl Relations {
    /// `(commutes, product is identity up to phase)`.
    fn get(&mut self, a: &Action, b: &Action) -> (bool, bool) {
        if a.qubits().iter().all(|q| !b.qubits().contains(q)) {
            return (true, false);
        }
        *self.cache.entry((*a, *b)).or_insert_with(|| {
            let (ea, eb) = local_pair(a, b);
            let ab = &ea * &eb;
            let ba = &eb * &ea;
            (ab.max_abs_diff(&ba) <= TOL, ab.is_identity_up_to_phase(TOL))
        })
    }
}

fn merged(a: &Action, b: &Action, available: &[GateKind]) -> Option<Action> {
    if a.qubits() != b.qubits() || a.gate != b.gate {
        return None;
    }
    let to = match a.gate {
        GateKind::T => GateKind::S,
        GateKind::Tdg => GateKind::Sdg,
        _ => return None,
    };
    available.contains(&to).then(|| Action::single(to, a.qubits()[0]))
}

fn strip_identity_prefix(gates: &mut Vec<Action>, n_qubits: usize) -> bool {
    let mut u = Operator::identity(1 << n_qubits);
    let mut cut = 0;
    for (k, a) in gates.iter().take(PREFIX_WINDOW).enumerate() {
        u = &embed(&a.gate.matrix(), a.qubits(), n_qubits).expect("gate fits circuit") * &u;
        if u.is_identity_up_to_phase(TOL) {
            cut = k + 1;
        }
    }
    if cut > 0 {
        gates.drain(..cut);
    }
    cut > 0
}

fn rewrite_pair(gates: &mut Vec<Action>, rel: &mut Relations, available: &[GateKind]) -> bool {
    for i in 0..gates.len() {
        for j in i + 1..gates.len() {
            let (commutes, cancels) = rel.get(&gates[i], &gates[j]);
            if cancels {
                gates.remove(j);
                gates.remove(i);
                return true;
            }
            if let Some(m) = merged(&gates[i], &gates[j], available) {
                gates[j] = m;
                gates.remove(i);
                return true;
            }
            if !commutes {
                break;
            }
        }
    }
    false
}

/// Applies the three rewrites until none fires. `available` is the gate set
/// the result may use (S/S† merges need S/S† in it).
pub fn simplify(circuit: &Circuit, available: &[GateKind]) -> Circuit {
    let n = circuit.n_qubits();
    let mut gates = circuit.gates.clone();
    let mut rel = Relations::default();
    loop {
        let changed = strip_identity_prefix(&mut gates, n) || rewrite_pair(&mut gates, &mut rel, available);
        if !changed {
            break;
        }
    }
    Circuit { gates, ..circuit.clone() }
}
