//! Brute-force reference implementations for tests.
//!
//! Everything here is computed with `nalgebra` from gate definitions written
//! out again in this module, so agreement with the main simulator is a real
//! cross-check rather than the same code run twice.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::gates::{Action, ActionTable, GateKind};
use crate::linalg::{Operator, EPSILON};

pub type Matrix = DMatrix<Complex64>;

/// Enumeration refuses searches larger than this many sequences.
pub const ENUMERATION_LIMIT: f64 = 1e7;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn single_qubit(gate: GateKind) -> Matrix {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let e = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let entries = match gate {
        GateKind::H => [c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0)],
        GateKind::S => [o, z, z, c(0.0, 1.0)],
        GateKind::Sdg => [o, z, z, c(0.0, -1.0)],
        GateKind::T => [o, z, z, e],
        GateKind::Tdg => [o, z, z, e.conj()],
        GateKind::X => [z, o, o, z],
        GateKind::Z => [o, z, z, -o],
        GateKind::Cnot => panic!("two-qubit gate"),
    };
    Matrix::from_row_slice(2, 2, &entries)
}

fn kron_all(factors: &[Matrix]) -> Matrix {
    factors.iter().skip(1).fold(factors[0].clone(), |acc, f| acc.kronecker(f))
}

/// Full-register matrix of one action, qubit 0 being the leftmost factor.
pub fn action_matrix(action: &Action, n_qubits: usize) -> Matrix {
    let id = Matrix::identity(2, 2);
    match action.gate {
        GateKind::Cnot => {
            let (ctl, tgt) = (action.qubits()[0], action.qubits()[1]);
            let p0 = Matrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
            let p1 = Matrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
            let x = single_qubit(GateKind::X);
            let branch = |on: bool| -> Matrix {
                let f: Vec<Matrix> = (0..n_qubits)
                    .map(|q| {
                        if q == ctl {
                            if on {
                                p1.clone()
                            } else {
                                p0.clone()
                            }
                        } else if q == tgt && on {
                            x.clone()
                        } else {
                            id.clone()
                        }
                    })
                    .collect();
                kron_all(&f)
            };
            branch(false) + branch(true)
        }
        g => {
            let q0 = action.qubits()[0];
            let f: Vec<Matrix> = (0..n_qubits).map(|q| if q == q0 { single_qubit(g) } else { id.clone() }).collect();
            kron_all(&f)
        }
    }
}

/// Product of the circuit's gates by explicit Kronecker products.
pub fn simulate(circuit: &Circuit) -> Matrix {
    let n = circuit.n_qubits();
    let mut u = Matrix::identity(1 << n, 1 << n);
    for a in &circuit.gates {
        u = action_matrix(a, n) * u;
    }
    u
}

pub fn to_matrix(op: &Operator) -> Matrix {
    Matrix::from_row_slice(op.dim(), op.dim(), op.entries())
}

pub fn matrices_equal(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    a.shape() == b.shape() && (a - b).iter().all(|z| z.norm() <= tol)
}

/// `|Tr(V†U)| / dim`.
pub fn fidelity(u: &Matrix, v: &Matrix) -> f64 {
    (v.adjoint() * u).trace().norm() / u.nrows() as f64
}

fn is_scalar_identity(m: &Matrix, tol: f64) -> bool {
    let p = m[(0, 0)];
    if (p.norm() - 1.0).abs() > tol {
        return false;
    }
    matrices_equal(m, &(Matrix::identity(m.nrows(), m.ncols()) * p), tol)
}

/// The outcome block of an (n+1)-qubit matrix with the ancilla last:
/// rows with ancilla bit `outcome`, columns with ancilla bit 0.
pub fn ancilla_block(full: &Matrix, outcome: usize) -> Matrix {
    let d = full.nrows() / 2;
    Matrix::from_fn(d, d, |i, j| full[(2 * i + outcome, 2 * j)])
}

/// Normalized-block fidelity `|Tr(V†A)| / √(d · Tr(A†A))`.
pub fn block_fidelity(block: &Matrix, v: &Matrix) -> f64 {
    let f2: f64 = block.iter().map(|z| z.norm_sqr()).sum();
    if f2 <= 1e-300 {
        return 0.0;
    }
    (v.adjoint() * block).trace().norm() / (block.nrows() as f64 * f2).sqrt()
}

/// Pairwise relations of a table recomputed from full matrices:
/// `redundant[i][j]` when `g_i·g_j` is a phase times identity, `commute[i][j]`
/// when they commute.
pub struct Relations {
    pub redundant: Vec<Vec<bool>>,
    pub commute: Vec<Vec<bool>>,
}

pub fn relations(table: &ActionTable) -> Relations {
    let n = table.n_qubits();
    let mats: Vec<Matrix> = table.actions.iter().map(|a| action_matrix(a, n)).collect();
    let k = mats.len();
    let mut redundant = vec![vec![false; k]; k];
    let mut commute = vec![vec![false; k]; k];
    for i in 0..k {
        for j in 0..k {
            let ij = &mats[i] * &mats[j];
            let ji = &mats[j] * &mats[i];
            redundant[i][j] = is_scalar_identity(&ij, 1e-9);
            commute[i][j] = matrices_equal(&ij, &ji, 1e-9);
        }
    }
    Relations { redundant, commute }
}

/// `candidate` is illegal when some earlier action is redundant with it and
/// every action after that one commutes with it.
pub fn naive_legal(history: &[usize], candidate: usize, rel: &Relations) -> bool {
    for j in 0..history.len() {
        if rel.redundant[candidate][history[j]] && history[j + 1..].iter().all(|&h| rel.commute[candidate][h]) {
            return false;
        }
    }
    true
}

/// Pairs `(i, j)` whose product is a phase times identity while gate `i`
/// commutes with everything strictly between them.
pub fn cancelling_pairs(circuit: &Circuit) -> Vec<(usize, usize)> {
    let n = circuit.n_qubits();
    let mats: Vec<Matrix> = circuit.gates.iter().map(|a| action_matrix(a, n)).collect();
    let mut out = Vec::new();
    for i in 0..mats.len() {
        for j in i + 1..mats.len() {
            if is_scalar_identity(&(&mats[j] * &mats[i]), 1e-9) {
                out.push((i, j));
                break;
            }
            let ij = &mats[i] * &mats[j];
            let ji = &mats[j] * &mats[i];
            if !matrices_equal(&ij, &ji, 1e-9) {
                break;
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct EnumerationResult {
    pub target: Operator,
    /// Smallest depth reaching fidelity `≥ 1 − ε`, if any within the bound.
    pub min_depth: Option<usize>,
    pub witness: Option<Circuit>,
}

struct Search<'a> {
    table: &'a ActionTable,
    rel: Relations,
    mats: Vec<Matrix>,
    target: Matrix,
    ancilla: bool,
}

impl Search<'_> {
    fn success(&self, u: &Matrix) -> bool {
        let f =
            if self.ancilla { block_fidelity(&ancilla_block(u, 0), &self.target) } else { fidelity(u, &self.target) };
        f >= 1.0 - EPSILON
    }

    fn dfs(&self, u: &Matrix, history: &mut Vec<usize>, depth: usize) -> bool {
        if history.len() == depth {
            return self.success(u);
        }
        for a in 0..self.table.len() {
            if !naive_legal(history, a, &self.rel) {
                continue;
            }
            history.push(a);
            let next = &self.mats[a] * u;
            if self.dfs(&next, history, depth) {
                return true;
            }
            history.pop();
        }
        false
    }
}

/// Exact minimum masked depth by iterative deepening. Refuses bounds with
/// more than [`ENUMERATION_LIMIT`] sequences.
pub fn enumerate_min_depth(target: &Operator, table: &ActionTable, depth_bound: usize) -> Result<EnumerationResult> {
    let size = (table.len() as f64).powi(depth_bound as i32);
    if size > ENUMERATION_LIMIT {
        return Err(Error::Refused(format!(
            "{} actions to depth {depth_bound} is {size:.3e} sequences, above {ENUMERATION_LIMIT:.0e}",
            table.len()
        )));
    }
    if target.dim() != table.arch.data_dim() {
        return Err(Error::InvalidArgument("target dimension does not match the table".into()));
    }
    let n = table.n_qubits();
    let search = Search {
        table,
        rel: relations(table),
        mats: table.actions.iter().map(|a| action_matrix(a, n)).collect(),
        target: to_matrix(target),
        ancilla: table.arch.has_ancilla,
    };
    let start = Matrix::identity(1 << n, 1 << n);
    for depth in 0..=depth_bound {
        let mut history = Vec::new();
        if search.dfs(&start, &mut history, depth) {
            return Ok(EnumerationResult {
                target: target.clone(),
                min_depth: Some(depth),
                witness: Some(Circuit::from_history(table, &history)),
            });
        }
    }
    Ok(EnumerationResult { target: target.clone(), min_depth: None, witness: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{clifford_t, Architecture, GateKind::*};
    use crate::targets::named_target;

    fn table(gates: &[GateKind], n: usize) -> ActionTable {
        ActionTable::build(gates, &Architecture::all_to_all(n)).unwrap()
    }

    #[test]
    fn simulation_agrees_with_fast_path() {
        let c = Circuit {
            n_data: 3,
            has_ancilla: false,
            gates: vec![
                Action::single(H, 0),
                Action::pair(Cnot, 0, 2),
                Action::single(T, 1),
                Action::pair(Cnot, 2, 1),
                Action::single(Sdg, 2),
            ],
        };
        assert!(matrices_equal(&simulate(&c), &to_matrix(&c.unitary().unwrap()), 1e-12));
    }

    #[test]
    fn min_depth_examples() {
        let t = table(&[H, T], 1);
        assert_eq!(enumerate_min_depth(&T.matrix(), &t, 3).unwrap().min_depth, Some(1));
        let r = enumerate_min_depth(&S.matrix(), &t, 3).unwrap();
        assert_eq!(r.min_depth, Some(2));
        let w = r.witness.unwrap();
        assert!(fidelity(&simulate(&w), &to_matrix(&S.matrix())) > 1.0 - 1e-12);
    }

    #[test]
    fn cs_needs_five_gates() {
        let t = table(&clifford_t(), 2);
        let r = enumerate_min_depth(&named_target("CS").unwrap(), &t, 5).unwrap();
        assert_eq!(r.min_depth, Some(5));
        assert_eq!(r.witness.unwrap().t_count(), 3);
    }

    #[test]
    fn refuses_large_bounds() {
        let t = table(&clifford_t(), 2);
        assert!(matches!(enumerate_min_depth(&Operator::identity(4), &t, 8), Err(Error::Refused(_))));
    }

    #[test]
    fn cancelling_pair_detection() {
        let c = Circuit {
            n_data: 2,
            has_ancilla: false,
            gates: vec![Action::single(T, 0), Action::pair(Cnot, 0, 1), Action::single(Tdg, 0)],
        };
        assert_eq!(cancelling_pairs(&c), vec![(0, 2)]);
        let c = Circuit {
            n_data: 2,
            has_ancilla: false,
            gates: vec![Action::single(T, 1), Action::pair(Cnot, 0, 1), Action::single(Tdg, 1)],
        };
        assert!(cancelling_pairs(&c).is_empty());
    }
}
