//! Minimal dense state-vector engine over labeled qubits.
//!
//! Index convention (shared by every module in the crate): bit `n` of a basis
//! index is the value of the qubit at label position `n`, i.e. the state is
//! little-endian in label order. For labels `[C1, C2]` the index
//! `j = l_1 + 2 l_2`.

use num_complex::Complex;

use crate::error::{domain, Error, Result, MAX_QUBITS};
use crate::scalar::Scalar;

/// A normalized pure state over an ordered list of qubit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState<T> {
    amplitudes: Vec<Complex<T>>,
    labels: Vec<String>,
}

/// Outcome of projecting part of a state onto one basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub probability: T,
    /// Renormalized state of the unmeasured qubits, `None` when the branch is
    /// unreachable (probability below [`Scalar::UNREACHABLE`]).
    pub post_state: Option<QuantumState<T>>,
}

impl<T> Projection<T> {
    pub fn is_reachable(&self) -> bool {
        self.post_state.is_some()
    }
}

/// Dense square operator acting on `log2(dim)` qubits, stored row-major.
///
/// Bit `t` of a row/column index refers to the `t`-th target qubit the
/// operator is applied to.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator<T> {
    dim: usize,
    data: Vec<Complex<T>>,
}

fn check_qubit_count(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        return Err(Error::Resource(format!(
            "{n} qubits requested, dense simulation supports at most {MAX_QUBITS}"
        )));
    }
    Ok(())
}

fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("q{i}")).collect()
}

fn check_distinct(labels: &[String]) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return domain(format!("duplicate qubit label {l}"));
        }
    }
    Ok(())
}

/// Spread the low bits of `value` onto the bit positions in `positions`.
#[inline]
pub fn scatter_bits(value: usize, positions: &[usize]) -> usize {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (t, &p)| acc | (((value >> t) & 1) << p))
}

/// Inverse of [`scatter_bits`]: collect the bits at `positions` of `index`.
#[inline]
pub fn gather_bits(index: usize, positions: &[usize]) -> usize {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (t, &p)| acc | (((index >> p) & 1) << t))
}

impl<T: Scalar> QuantumState<T> {
    /// The 0-qubit state, the identity for [`tensor`].
    pub fn scalar_one() -> Self {
        Self {
            amplitudes: vec![Complex::new(T::one(), T::zero())],
            labels: Vec::new(),
        }
    }

    /// Computational basis state `|index⟩` with labels `q1..qN`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        Self::basis_labeled(default_labels(num_qubits), index)
    }

    pub fn basis_labeled<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        index: usize,
    ) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        check_qubit_count(labels.len())?;
        check_distinct(&labels)?;
        let dim = 1usize << labels.len();
        if index >= dim {
            return domain(format!(
                "basis index {index} out of range for {} qubits",
                labels.len()
            ));
        }
        let mut amplitudes = vec![Complex::new(T::zero(), T::zero()); dim];
        amplitudes[index] = Complex::new(T::one(), T::zero());
        Ok(Self { amplitudes, labels })
    }

    /// Build a state from raw amplitudes, which must already be normalized
    /// within [`Scalar::NORM_TOL`].
    pub fn from_amplitudes<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        amplitudes: Vec<Complex<T>>,
    ) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        check_qubit_count(labels.len())?;
        check_distinct(&labels)?;
        if amplitudes.len() != 1usize << labels.len() {
            return domain(format!(
                "{} amplitudes given for {} qubits",
                amplitudes.len(),
                labels.len()
            ));
        }
        let state = Self { amplitudes, labels };
        let norm = state.norm_sqr();
        if (norm - T::one()).abs() > T::NORM_TOL {
            return domain(format!("state not normalized: squared norm {norm}"));
        }
        Ok(state)
    }

    /// Same amplitudes under new labels.
    pub fn relabel<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != self.labels.len() {
            return domain(format!(
                "{} labels given for a {}-qubit state",
                labels.len(),
                self.labels.len()
            ));
        }
        check_distinct(&labels)?;
        self.labels = labels;
        Ok(self)
    }

    pub fn num_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> Complex<T> {
        self.amplitudes[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Bit position of `label`.
    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Domain(format!("unknown qubit label {label}")))
    }

    /// Bit positions of `targets`, which must be distinct known labels.
    pub fn positions<S: AsRef<str>>(&self, targets: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(targets.len());
        for t in targets {
            let p = self.position(t.as_ref())?;
            if out.contains(&p) {
                return domain(format!("qubit {} targeted twice", t.as_ref()));
            }
            out.push(p);
        }
        Ok(out)
    }

    /// Largest modulus of an amplitude difference; `None` if labels differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<T> {
        if self.labels != other.labels {
            return None;
        }
        Some(
            self.amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(a, b)| (a - b).norm())
                .fold(T::zero(), T::max),
        )
    }
}

/// Kronecker composition; `a`'s qubits occupy the low bits and its labels
/// come first.
pub fn tensor<T: Scalar>(a: &QuantumState<T>, b: &QuantumState<T>) -> Result<QuantumState<T>> {
    if let Some(l) = a.labels.iter().find(|l| b.labels.contains(l)) {
        return domain(format!("label {l} present in both tensor factors"));
    }
    check_qubit_count(a.num_qubits() + b.num_qubits())?;
    let mut amplitudes = Vec::with_capacity(a.dim() * b.dim());
    for bv in &b.amplitudes {
        amplitudes.extend(a.amplitudes.iter().map(|av| av * bv));
    }
    let labels = a.labels.iter().chain(&b.labels).cloned().collect();
    Ok(QuantumState { amplitudes, labels })
}

/// Apply `op` to the qubits `targets` (bit `t` of the operator index is
/// `targets[t]`), identity elsewhere.
pub fn apply_to_qubits<T: Scalar, S: AsRef<str>>(
    state: &QuantumState<T>,
    targets: &[S],
    op: &Operator<T>,
) -> Result<QuantumState<T>> {
    let tpos = state.positions(targets)?;
    if op.dim != 1 << tpos.len() {
        return domain(format!(
            "operator of dimension {} applied to {} qubits",
            op.dim,
            tpos.len()
        ));
    }
    let dev = op.unitarity_deviation();
    if dev > T::NORM_TOL {
        return domain(format!("operator is not unitary (deviation {dev:e})"));
    }

    let rest: Vec<usize> = (0..state.num_qubits())
        .filter(|p| !tpos.contains(p))
        .collect();
    let offsets: Vec<usize> = (0..op.dim).map(|t| scatter_bits(t, &tpos)).collect();
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = vec![zero; state.dim()];
    let mut local = vec![zero; op.dim];
    for r in 0..1usize << rest.len() {
        let base = scatter_bits(r, &rest);
        for (slot, off) in local.iter_mut().zip(&offsets) {
            *slot = state.amplitudes[base | off];
        }
        for (row, off) in offsets.iter().enumerate() {
            let coeffs = &op.data[row * op.dim..(row + 1) * op.dim];
            out[base | off] = coeffs
                .iter()
                .zip(&local)
                .map(|(c, v)| c * v)
                .fold(zero, |a, b| a + b);
        }
    }
    Ok(QuantumState {
        amplitudes: out,
        labels: state.labels.clone(),
    })
}

/// Project `targets` onto `basis_vector` (Born rule). The post-measurement
/// state lives on the remaining labels, in their original order.
pub fn measure_project<T: Scalar, S: AsRef<str>>(
    state: &QuantumState<T>,
    targets: &[S],
    basis_vector: &[Complex<T>],
) -> Result<Projection<T>> {
    let tpos = state.positions(targets)?;
    if basis_vector.len() != 1 << tpos.len() {
        return domain(format!(
            "basis vector of dimension {} for {} qubits",
            basis_vector.len(),
            tpos.len()
        ));
    }
    let vnorm: T = basis_vector.iter().map(|c| c.norm_sqr()).sum();
    if (vnorm - T::one()).abs() > T::NORM_TOL {
        return domain(format!("basis vector not normalized: squared norm {vnorm}"));
    }

    let rest: Vec<usize> = (0..state.num_qubits())
        .filter(|p| !tpos.contains(p))
        .collect();
    let offsets: Vec<usize> = (0..basis_vector.len())
        .map(|t| scatter_bits(t, &tpos))
        .collect();
    let bra: Vec<Complex<T>> = basis_vector.iter().map(|c| c.conj()).collect();
    let zero = Complex::new(T::zero(), T::zero());
    let mut remainder: Vec<Complex<T>> = (0..1usize << rest.len())
        .map(|r| {
            let base = scatter_bits(r, &rest);
            bra.iter()
                .zip(&offsets)
                .map(|(b, off)| b * state.amplitudes[base | off])
                .fold(zero, |a, b| a + b)
        })
        .collect();
    let probability: T = remainder.iter().map(|c| c.norm_sqr()).sum();
    let probability = probability.min(T::one());
    if probability < T::UNREACHABLE {
        return Ok(Projection {
            probability,
            post_state: None,
        });
    }
    let scale = probability.sqrt().recip();
    remainder.iter_mut().for_each(|c| *c = *c * scale);
    let labels = rest.iter().map(|&p| state.labels[p].clone()).collect();
    Ok(Projection {
        probability,
        post_state: Some(QuantumState {
            amplitudes: remainder,
            labels,
        }),
    })
}

/// `|⟨a|b⟩|`, equal to 1 iff the states agree up to a global phase.
pub fn fidelity_global_phase<T: Scalar>(a: &QuantumState<T>, b: &QuantumState<T>) -> Result<T> {
    if a.labels != b.labels {
        return domain(format!(
            "fidelity between states on {:?} and {:?}",
            a.labels, b.labels
        ));
    }
    let zero = Complex::new(T::zero(), T::zero());
    let overlap = a
        .amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| x.conj() * y)
        .fold(zero, |s, v| s + v);
    Ok(overlap.norm().min(T::one()))
}

impl<T: Scalar> Operator<T> {
    pub fn new(dim: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if !dim.is_power_of_two() {
            return domain(format!("operator dimension {dim} is not a power of two"));
        }
        if data.len() != dim * dim {
            return domain(format!("{} entries for a {dim}x{dim} operator", data.len()));
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(vec![Complex::new(T::one(), T::zero()); dim])
    }

    pub fn diagonal(entries: Vec<Complex<T>>) -> Result<Self> {
        let dim = entries.len();
        let mut data = vec![Complex::new(T::zero(), T::zero()); dim * dim];
        for (i, e) in entries.into_iter().enumerate() {
            data[i * dim + i] = e;
        }
        Self::new(dim, data)
    }

    /// Diagonal operator `diag(e^{iφ_0}, e^{iφ_1}, ...)`.
    pub fn phases(angles: &[T]) -> Result<Self> {
        Self::diagonal(
            angles
                .iter()
                .map(|&a| Complex::from_polar(T::one(), a))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.data[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let data = (0..n * n)
            .map(|i| self.data[(i % n) * n + i / n].conj())
            .collect();
        Self { dim: n, data }
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.dim != rhs.dim {
            return domain("operator dimension mismatch");
        }
        let n = self.dim;
        let zero = Complex::new(T::zero(), T::zero());
        let data = (0..n * n)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                (0..n)
                    .map(|k| self.get(r, k) * rhs.get(k, c))
                    .fold(zero, |a, b| a + b)
            })
            .collect();
        Ok(Self { dim: n, data })
    }

    /// `self` acts on the low target bits, `high` on the bits above them.
    pub fn kron(&self, high: &Self) -> Self {
        let n = self.dim * high.dim;
        let data = (0..n * n)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                self.get(r % self.dim, c % self.dim) * high.get(r / self.dim, c / self.dim)
            })
            .collect();
        Self { dim: n, data }
    }

    /// `max |(U†U − I)_{rc}|`.
    pub fn unitarity_deviation(&self) -> T {
        let n = self.dim;
        let zero = Complex::new(T::zero(), T::zero());
        let mut worst = T::zero();
        for r in 0..n {
            for c in 0..n {
                let g = (0..n)
                    .map(|k| self.get(k, r).conj() * self.get(k, c))
                    .fold(zero, |a, b| a + b);
                let expect = if r == c { T::one() } else { T::zero() };
                worst = worst.max((g - Complex::new(expect, T::zero())).norm());
            }
        }
        worst
    }
}
