//! Dense complex operators on a handful of qubits.
//!
//! Storage is row-major. Qubit 0 is the most significant bit of a basis
//! index, so `embed(X, [1], 2)` is `I ⊗ X`. When an ancilla is present it is
//! always the last (least significant) qubit.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{invalid, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Default tolerance for unitarity checks.
pub const UNITARY_TOL: f64 = 1e-9;

/// Success threshold on the binary fidelity.
pub const EPSILON: f64 = 1e-3;

#[derive(Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Operator({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self.get(r, c);
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Operator {
    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim < 2 || !dim.is_power_of_two() {
            return Err(invalid(format!("dimension {dim} is not a power of two >= 2")));
        }
        if data.len() != dim * dim {
            return Err(invalid(format!("expected {} entries for dimension {dim}, got {}", dim * dim, data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("matrix is not square"));
        }
        Self::from_vec(dim, rows.iter().flatten().copied().collect())
    }

    /// Builds an operator from real entries (row-major).
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        Self::from_vec(dim, entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 2 && dim.is_power_of_two());
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 2 && dim.is_power_of_two());
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn diagonal(entries: &[C64]) -> Result<Self> {
        let dim = entries.len();
        let mut data = vec![ZERO; dim * dim];
        for (i, &z) in entries.iter().enumerate() {
            data[i * dim + i] = z;
        }
        Self::from_vec(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for r in 0..n {
            for c in 0..n {
                data[c * n + r] = self.data[r * n + c].conj();
            }
        }
        Self { dim: n, data }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn kron(&self, other: &Operator) -> Self {
        let (n, m) = (self.dim, other.dim);
        let d = n * m;
        let mut data = vec![ZERO; d * d];
        for i in 0..n {
            for j in 0..n {
                let a = self.get(i, j);
                if a == ZERO {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        data[(i * m + k) * d + j * m + l] = a * other.get(k, l);
                    }
                }
            }
        }
        Self { dim: d, data }
    }

    /// Matrix product `self · rhs` without a dimension check.
    fn matmul(&self, rhs: &Operator) -> Operator {
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for r in 0..n {
            let row = &self.data[r * n..(r + 1) * n];
            let out = &mut data[r * n..(r + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let rrow = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in out.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Operator { dim: n, data }
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `Tr(self† · self)`, the squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Inner product `Tr(self† · other)`.
    pub fn inner(&self, other: &Operator) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let p = self.matmul(&self.adjoint());
        p.max_abs_diff(&Operator::identity(self.dim)) <= tol
    }

    /// True when `self = e^{iθ}·other` for some θ, entry-wise within `tol`.
    pub fn equals_up_to_phase(&self, other: &Operator, tol: f64) -> bool {
        if self.dim != other.dim {
            return false;
        }
        let ip = other.inner(self);
        if ip.norm() < 1e-300 {
            return self.max_abs_diff(other) <= tol;
        }
        let phase = ip / ip.norm();
        self.max_abs_diff(&other.scale(phase)) <= tol
    }

    /// Entry-wise distance to `e^{iθ}·other` for the best θ.
    pub fn phase_distance(&self, other: &Operator) -> f64 {
        let ip = other.inner(self);
        let phase = if ip.norm() < 1e-300 { ONE } else { ip / ip.norm() };
        self.max_abs_diff(&other.scale(phase))
    }

    pub fn is_identity_up_to_phase(&self, tol: f64) -> bool {
        self.equals_up_to_phase(&Operator::identity(self.dim), tol)
    }
}

impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        self.matmul(rhs)
    }
}

/// Embeds a 1- or 2-qubit gate into an `n_qubits` register.
///
/// The first listed qubit is the most significant bit of the gate's own
/// index, so a CNOT matrix with control on its high bit keeps its control on
/// `qubits[0]`.
pub fn embed(gate: &Operator, qubits: &[usize], n_qubits: usize) -> Result<Operator> {
    let k = qubits.len();
    if k == 0 || gate.dim() != 1 << k {
        return Err(invalid(format!("gate of dimension {} cannot act on {} qubit(s)", gate.dim(), k)));
    }
    for (i, &q) in qubits.iter().enumerate() {
        if q >= n_qubits {
            return Err(invalid(format!("qubit {q} out of range for {n_qubits} qubits")));
        }
        if qubits[..i].contains(&q) {
            return Err(invalid(format!("qubit {q} listed twice")));
        }
    }
    let dim = 1usize << n_qubits;
    let shifts: Vec<usize> = qubits.iter().map(|&q| n_qubits - 1 - q).collect();
    let clear_mask: usize = !shifts.iter().fold(0, |m, &s| m | (1 << s));
    let sub_index = |basis: usize| -> usize { shifts.iter().fold(0, |acc, &s| (acc << 1) | ((basis >> s) & 1)) };
    let place = |base: usize, sub: usize| -> usize {
        shifts.iter().enumerate().fold(base & clear_mask, |acc, (i, &s)| acc | (((sub >> (k - 1 - i)) & 1) << s))
    };
    let mut data = vec![ZERO; dim * dim];
    for col in 0..dim {
        let s = sub_index(col);
        for r in 0..gate.dim() {
            let z = gate.get(r, s);
            if z != ZERO {
                data[place(col, r) * dim + col] = z;
            }
        }
    }
    Operator::from_vec(dim, data)
}

/// `a · b`; `b` acts first on states.
pub fn compose(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(invalid(format!("cannot compose dims {} and {}", a.dim(), b.dim())));
    }
    Ok(a.matmul(b))
}

/// Phase-invariant normalized overlap `|Tr(v†·u)| / dim`.
pub fn fidelity(u: &Operator, v: &Operator) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(invalid(format!("cannot compare dims {} and {}", u.dim(), v.dim())));
    }
    Ok(v.inner(u).norm() / u.dim() as f64)
}

/// The data-qubit block of an (n+1)-qubit operator for ancilla input |0⟩ and
/// a given ancilla outcome.
#[derive(Clone, Debug)]
pub struct ProjectedBlock {
    pub parent_dim: usize,
    pub block: Operator,
    pub outcome: u8,
    /// `Tr(A†A) / 2^n`: the outcome probability averaged over data inputs.
    pub weight: f64,
}

impl ProjectedBlock {
    /// `A / √weight`, or `None` when the outcome never occurs.
    pub fn normalized(&self) -> Option<Operator> {
        if self.weight <= UNITARY_TOL {
            return None;
        }
        Some(self.block.scale(C64::new(1.0 / self.weight.sqrt(), 0.0)))
    }

    /// `|Tr(A)| / √(2^n · Tr(A†A))`: fidelity of the normalized block with the identity.
    pub fn identity_fidelity(&self) -> f64 {
        let f2 = self.block.frobenius_sq();
        if f2 <= 0.0 {
            return 0.0;
        }
        self.block.trace().norm() / (self.block.dim() as f64 * f2).sqrt()
    }
}

/// Raw projection without the unitarity precondition.
pub(crate) fn project_unchecked(full: &Operator, outcome: u8) -> ProjectedBlock {
    let pd = full.dim();
    let n = pd / 2;
    let o = outcome as usize;
    let mut data = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = full.get(2 * i + o, 2 * j);
        }
    }
    let block = Operator { dim: n, data };
    let weight = block.frobenius_sq() / n as f64;
    ProjectedBlock { parent_dim: pd, block, outcome, weight }
}

/// `(⟨outcome|_anc ⊗ I) · full · (|0⟩_anc ⊗ I)` with the ancilla as last qubit.
pub fn project_ancilla(full: &Operator, outcome: u8) -> Result<ProjectedBlock> {
    if outcome > 1 {
        return Err(invalid("ancilla outcome must be 0 or 1"));
    }
    if full.dim() < 4 {
        return Err(invalid("projection needs at least one data qubit and the ancilla"));
    }
    if !full.is_unitary(UNITARY_TOL) {
        return Err(invalid("projection input is not unitary"));
    }
    Ok(project_unchecked(full, outcome))
}

/// True iff the block is non-negligible and `A·A†/weight = I` within `tol`.
pub fn is_proportional_unitary(block: &ProjectedBlock, tol: f64) -> bool {
    if block.weight <= tol {
        return false;
    }
    let a = &block.block;
    let gram = a * &a.adjoint();
    let gram = gram.scale(C64::new(1.0 / block.weight, 0.0));
    gram.max_abs_diff(&Operator::identity(a.dim())) <= tol
}
