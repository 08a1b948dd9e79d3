//! Protocol constructions for deterministic joint remote state preparation of
//! equatorial states: target states, phase shares, GHZ channels, the senders'
//! measurement bases and the receiver's diagonal corrections.
//!
//! Party naming: senders are `A`, `B`, `D`, `E`, ... (skipping `C` and `K`),
//! the receiver is `C` and the optional controller is `K`. Qubit labels are the
//! party letter followed by the 1-based slot, so with two senders and `N = 2`
//! the channel is laid out as `A1 B1 C1 A2 B2 C2`.

use std::fmt;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result, MAX_QUBITS};
use crate::scalar::{angle_distance, Scalar};
use crate::statevec::{
    apply_to_qubits, fidelity_global_phase, measure_project, tensor, Operator, QuantumState,
};
use crate::verify::OutcomeRecord;

const SENDER_LETTERS: &[u8] = b"ABDEFGHIJLMNOPQRSTUVWXYZ";

/// RNG stream used to draw random target phases.
pub const STREAM_DELTA: u64 = 1;
/// RNG stream used to split target phases into shares.
pub const STREAM_SPLIT: u64 = 2;
/// RNG stream used for Born-rule sampling of outcomes.
pub const STREAM_SAMPLE: u64 = 3;

/// Deterministic generator for one purpose (`stream`) under one seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform_angle<T: Scalar, R: Rng>(rng: &mut R) -> T {
    T::lit(rng.gen::<f64>() * std::f64::consts::TAU).wrap_angle()
}

fn check_num_qubits(n: usize) -> Result<()> {
    if n == 0 {
        return domain("qubit count N must be at least 1");
    }
    if n > MAX_QUBITS {
        return Err(Error::Resource(format!(
            "N = {n} exceeds {MAX_QUBITS} qubits"
        )));
    }
    Ok(())
}

fn check_phases<T: Scalar>(n: usize, phases: &[T], what: &str) -> Result<()> {
    check_num_qubits(n)?;
    if phases.len() != 1 << n {
        return domain(format!(
            "{what} has {} entries, expected 2^{n} = {}",
            phases.len(),
            1usize << n
        ));
    }
    if let Some(bad) = phases.iter().find(|p| !p.is_finite()) {
        return domain(format!("{what} contains non-finite phase {bad}"));
    }
    Ok(())
}

/// The `2^N` phases `δ_j` of an equatorial target state, reduced into `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector<T> {
    num_qubits: usize,
    delta: Vec<T>,
}

impl<T: Scalar> PhaseVector<T> {
    pub fn new(num_qubits: usize, delta: Vec<T>) -> Result<Self> {
        check_phases(num_qubits, &delta, "phase vector")?;
        Ok(Self {
            num_qubits,
            delta: delta.into_iter().map(Scalar::wrap_angle).collect(),
        })
    }

    /// Canonical random phases: `δ_0 = 0`, the rest uniform in `[0, 2π)`.
    pub fn random<R: Rng>(num_qubits: usize, rng: &mut R) -> Result<Self> {
        check_num_qubits(num_qubits)?;
        let delta = (0..1usize << num_qubits)
            .map(|j| {
                if j == 0 {
                    T::zero()
                } else {
                    uniform_angle(rng)
                }
            })
            .collect();
        Ok(Self { num_qubits, delta })
    }

    /// [`PhaseVector::random`] on the delta stream of `seed`.
    pub fn from_seed(num_qubits: usize, seed: u64) -> Result<Self> {
        Self::random(num_qubits, &mut seeded_rng(seed, STREAM_DELTA))
    }

    pub fn zeros(num_qubits: usize) -> Result<Self> {
        Self::new(num_qubits, vec![T::zero(); 1 << num_qubits.min(MAX_QUBITS)])
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn delta(&self) -> &[T] {
        &self.delta
    }

    pub fn is_canonical(&self) -> bool {
        self.delta[0] == T::zero()
    }
}

/// One sender's additive part `x_j` of the target phases.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShare<T> {
    num_qubits: usize,
    x: Vec<T>,
    sender: usize,
}

impl<T: Scalar> PhaseShare<T> {
    pub fn new(num_qubits: usize, x: Vec<T>, sender: usize) -> Result<Self> {
        check_phases(num_qubits, &x, "phase share")?;
        Ok(Self {
            num_qubits,
            x: x.into_iter().map(Scalar::wrap_angle).collect(),
            sender,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    /// Zero-based sender index.
    pub fn sender(&self) -> usize {
        self.sender
    }
}

/// Orthonormal projective basis of one sender, `vectors[k][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBasis<T> {
    num_qubits: usize,
    vectors: Vec<Vec<Complex<T>>>,
}

impl<T: Scalar> MeasurementBasis<T> {
    /// Wrap hand-built vectors. Only dimensions are checked; use
    /// [`crate::verify::check_orthonormal`] to test orthonormality.
    pub fn from_vectors(num_qubits: usize, vectors: Vec<Vec<Complex<T>>>) -> Result<Self> {
        check_num_qubits(num_qubits)?;
        let dim = 1usize << num_qubits;
        if vectors.len() != dim || vectors.iter().any(|v| v.len() != dim) {
            return domain(format!(
                "basis for {num_qubits} qubits needs {dim} vectors of length {dim}"
            ));
        }
        Ok(Self {
            num_qubits,
            vectors,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, k: usize) -> &[Complex<T>] {
        &self.vectors[k]
    }

    pub fn vectors(&self) -> &[Vec<Complex<T>>] {
        &self.vectors
    }
}

/// The receiver's diagonal correction, held both as the full list of diagonal
/// phases and as one `diag(1, e^{iθ_n})` gate per receiver qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionOp<T> {
    num_qubits: usize,
    diag_phases: Vec<T>,
    factored: Vec<T>,
}

impl<T: Scalar> CorrectionOp<T> {
    pub fn identity(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            diag_phases: vec![T::zero(); 1 << num_qubits],
            factored: vec![T::zero(); num_qubits],
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn diag_phases(&self) -> &[T] {
        &self.diag_phases
    }

    /// Per-qubit angles `θ_n`, slot 1 first.
    pub fn factored(&self) -> &[T] {
        &self.factored
    }

    /// Diagonal phases rebuilt from the factored gates: `Σ_n l_n θ_n`.
    pub fn factored_diagonal(&self) -> Vec<T> {
        (0..1usize << self.num_qubits)
            .map(|j| {
                self.factored
                    .iter()
                    .enumerate()
                    .filter(|(n, _)| (j >> n) & 1 == 1)
                    .fold(T::zero(), |acc, (_, &t)| acc + t)
                    .wrap_angle()
            })
            .collect()
    }

    /// Largest circular distance between `diag_phases` and the factored form.
    pub fn factorization_error(&self) -> T {
        self.factored_diagonal()
            .iter()
            .zip(&self.diag_phases)
            .map(|(&a, &b)| angle_distance(a, b))
            .fold(T::zero(), T::max)
    }

    /// Product of two corrections (angles add modulo 2π).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.num_qubits != other.num_qubits {
            return domain("composing corrections of different sizes");
        }
        let add = |a: &[T], b: &[T]| {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| (x + y).wrap_angle())
                .collect()
        };
        Ok(Self {
            num_qubits: self.num_qubits,
            diag_phases: add(&self.diag_phases, &other.diag_phases),
            factored: add(&self.factored, &other.factored),
        })
    }

    /// Full `2^N × 2^N` diagonal operator.
    pub fn operator(&self) -> Operator<T> {
        Operator::phases(&self.diag_phases).expect("power-of-two diagonal")
    }

    /// The single-qubit gates `diag(1, e^{iθ_n})`, slot 1 first.
    pub fn gates(&self) -> Vec<Operator<T>> {
        self.factored
            .iter()
            .map(|&t| Operator::phases(&[T::zero(), t]).expect("2x2 diagonal"))
            .collect()
    }

    /// Apply the factored gates to the receiver qubits `targets` (slot order).
    pub fn apply(&self, state: &QuantumState<T>, targets: &[String]) -> Result<QuantumState<T>> {
        if targets.len() != self.num_qubits {
            return domain(format!(
                "{}-qubit correction applied to {} qubits",
                self.num_qubits,
                targets.len()
            ));
        }
        self.gates()
            .iter()
            .zip(targets)
            .try_fold(state.clone(), |s, (g, t)| apply_to_qubits(&s, &[t], g))
    }
}

/// Outcome of the controller's `{|+⟩, |−⟩}` measurement on one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagonalOutcome {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl DiagonalOutcome {
    pub fn from_bit(bit: usize) -> Self {
        if bit & 1 == 0 {
            Self::Plus
        } else {
            Self::Minus
        }
    }

    pub fn bit(self) -> usize {
        match self {
            Self::Plus => 0,
            Self::Minus => 1,
        }
    }

    /// `(|0⟩ ± |1⟩)/√2`.
    pub fn vector<T: Scalar>(self) -> [Complex<T>; 2] {
        let h = T::FRAC_1_SQRT_2();
        let sign = if self == Self::Plus { h } else { -h };
        [Complex::new(h, T::zero()), Complex::new(sign, T::zero())]
    }
}

impl fmt::Display for DiagonalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plus => "+",
            Self::Minus => "-",
        })
    }
}

/// Measurement outcomes of one branch: one `k` per sender, plus one
/// diagonal-basis result per slot when a controller takes part.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcomes {
    pub senders: Vec<usize>,
    #[serde(default)]
    pub controller: Vec<DiagonalOutcome>,
}

impl Outcomes {
    pub fn new(senders: Vec<usize>) -> Self {
        Self {
            senders,
            controller: Vec::new(),
        }
    }

    pub fn controlled(senders: Vec<usize>, controller: Vec<DiagonalOutcome>) -> Self {
        Self {
            senders,
            controller,
        }
    }
}

impl fmt::Display for Outcomes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.senders.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        for c in &self.controller {
            write!(f, ",{c}")?;
        }
        write!(f, ")")
    }
}

/// A protocol party.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    /// Zero-based sender index.
    Sender(usize),
    Receiver,
    Controller,
}

impl Party {
    pub fn letter(self) -> char {
        match self {
            Party::Sender(i) => SENDER_LETTERS[i] as char,
            Party::Receiver => 'C',
            Party::Controller => 'K',
        }
    }

    /// Label of this party's qubit in the 1-based `slot`.
    pub fn qubit(self, slot: usize) -> String {
        format!("{}{slot}", self.letter())
    }
}

/// Sizes and mode of one protocol instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Qubits in the target state (N).
    pub num_qubits: usize,
    /// Number of senders (M).
    pub senders: usize,
    /// Whether a controller holds one extra qubit of every GHZ state.
    pub controlled: bool,
    /// Seed for the phase split.
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(num_qubits: usize, senders: usize) -> Self {
        Self {
            num_qubits,
            senders,
            controlled: false,
            seed: 0,
        }
    }

    pub fn with_controller(mut self, controlled: bool) -> Self {
        self.controlled = controlled;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_num_qubits(self.num_qubits)?;
        if self.senders == 0 {
            return domain("at least one sender is required");
        }
        let total = self.total_qubits();
        if self.senders > SENDER_LETTERS.len() || total > MAX_QUBITS {
            return Err(Error::Resource(format!(
                "channel needs {total} qubits, at most {MAX_QUBITS} supported"
            )));
        }
        Ok(())
    }

    /// Parties sharing each GHZ state.
    pub fn parties_per_slot(&self) -> usize {
        self.senders + 1 + usize::from(self.controlled)
    }

    pub fn total_qubits(&self) -> usize {
        self.parties_per_slot().saturating_mul(self.num_qubits)
    }

    /// `log2` of the number of branches.
    pub fn branch_bits(&self) -> usize {
        self.num_qubits * (self.senders + usize::from(self.controlled))
    }

    /// Parties of one slot in channel order.
    pub fn parties(&self) -> Vec<Party> {
        let mut p: Vec<Party> = (0..self.senders).map(Party::Sender).collect();
        p.push(Party::Receiver);
        if self.controlled {
            p.push(Party::Controller);
        }
        p
    }

    pub fn labels_of(&self, party: Party) -> Vec<String> {
        (1..=self.num_qubits).map(|n| party.qubit(n)).collect()
    }

    pub fn sender_labels(&self, sender: usize) -> Vec<String> {
        self.labels_of(Party::Sender(sender))
    }

    pub fn receiver_labels(&self) -> Vec<String> {
        self.labels_of(Party::Receiver)
    }

    pub fn controller_labels(&self) -> Vec<String> {
        self.labels_of(Party::Controller)
    }
}

/// `amplitudes[j] = e^{iδ_j} / √(2^N)` over labels `q1..qN`.
pub fn equatorial_state<T: Scalar>(spec: &PhaseVector<T>) -> QuantumState<T> {
    let scale = T::lit((spec.delta.len() as f64).sqrt()).recip();
    let amps = spec
        .delta
        .iter()
        .map(|&d| Complex::from_polar(scale, d))
        .collect();
    QuantumState::from_amplitudes((1..=spec.num_qubits).map(|i| format!("q{i}")), amps)
        .expect("equatorial amplitudes are normalized")
}

/// Split `spec` into `senders` shares summing to it modulo 2π. The first
/// `senders − 1` shares are uniform on `[0, 2π)`; the last one closes the sum.
pub fn random_phase_split<T: Scalar>(
    spec: &PhaseVector<T>,
    senders: usize,
    seed: u64,
) -> Result<Vec<PhaseShare<T>>> {
    if senders == 0 {
        return domain("at least one sender is required");
    }
    let n = spec.num_qubits;
    let mut rng = seeded_rng(seed, STREAM_SPLIT);
    let mut shares = Vec::with_capacity(senders);
    let mut remaining = spec.delta.clone();
    for s in 0..senders - 1 {
        let x: Vec<T> = (0..remaining.len())
            .map(|_| uniform_angle(&mut rng))
            .collect();
        for (r, xi) in remaining.iter_mut().zip(&x) {
            *r = (*r - *xi).wrap_angle();
        }
        shares.push(PhaseShare {
            num_qubits: n,
            x,
            sender: s,
        });
    }
    shares.push(PhaseShare {
        num_qubits: n,
        x: remaining,
        sender: senders - 1,
    });
    Ok(shares)
}

/// `(|0…0⟩ + |1…1⟩)/√2` over `labels`.
pub fn ghz_state<T: Scalar, S: Into<String>>(
    labels: impl IntoIterator<Item = S>,
) -> Result<QuantumState<T>> {
    let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
    if labels.len() < 2 {
        return domain(format!(
            "GHZ state needs at least 2 parties, got {}",
            labels.len()
        ));
    }
    if labels.len() > MAX_QUBITS {
        return Err(Error::Resource(format!("{}-party GHZ state", labels.len())));
    }
    let dim = 1usize << labels.len();
    let h = Complex::new(T::FRAC_1_SQRT_2(), T::zero());
    let mut amps = vec![Complex::new(T::zero(), T::zero()); dim];
    amps[0] = h;
    amps[dim - 1] = h;
    QuantumState::from_amplitudes(labels, amps)
}

/// One GHZ state per slot, each shared by all parties of the configuration.
pub fn build_channel<T: Scalar>(config: &ProtocolConfig) -> Result<QuantumState<T>> {
    config.validate()?;
    let parties = config.parties();
    (1..=config.num_qubits).try_fold(QuantumState::scalar_one(), |acc, slot| {
        let ghz = ghz_state(parties.iter().map(|p| p.qubit(slot)))?;
        tensor(&acc, &ghz)
    })
}

/// Vector `k` has component `e^{2πi·jk/2^N} e^{−i x_j} / √(2^N)` at index `j`.
pub fn sender_basis<T: Scalar>(share: &PhaseShare<T>) -> MeasurementBasis<T> {
    let dim = share.x.len();
    let scale = T::lit((dim as f64).sqrt()).recip();
    let vectors = (0..dim)
        .map(|k| {
            share
                .x
                .iter()
                .enumerate()
                .map(|(j, &xj)| {
                    let fourier = T::TAU() * T::lit(((j * k) % dim) as f64) / T::lit(dim as f64);
                    Complex::from_polar(scale, fourier - xj)
                })
                .collect()
        })
        .collect();
    MeasurementBasis {
        num_qubits: share.num_qubits,
        vectors,
    }
}

/// Correction for sender outcomes `k`: `diag_phases[j] = 2π·j·K/2^N` and
/// `θ_n = 2π·2^{n−1}·K/2^N` with `K = Σ k`. The products are reduced modulo
/// `2^N` in integer arithmetic before conversion.
pub fn correction<T: Scalar>(num_qubits: usize, outcomes: &[usize]) -> Result<CorrectionOp<T>> {
    check_num_qubits(num_qubits)?;
    let dim = 1usize << num_qubits;
    if let Some(k) = outcomes.iter().find(|&&k| k >= dim) {
        return domain(format!("outcome {k} out of range for {num_qubits} qubits"));
    }
    let total = outcomes.iter().fold(0usize, |acc, k| (acc + k) % dim);
    let angle = |m: usize| T::TAU() * T::lit(((m * total) % dim) as f64) / T::lit(dim as f64);
    Ok(CorrectionOp {
        num_qubits,
        diag_phases: (0..dim).map(angle).collect(),
        factored: (0..num_qubits).map(|n| angle(1 << n)).collect(),
    })
}

/// Correction for the controller's results: `σ_z` on receiver slot `n` iff
/// the controller found `|−⟩` there.
pub fn controller_correction<T: Scalar>(
    config: &ProtocolConfig,
    outcomes: &[DiagonalOutcome],
) -> Result<CorrectionOp<T>> {
    if !config.controlled {
        return Err(Error::Usage(
            "controller correction requested for an uncontrolled protocol".into(),
        ));
    }
    let n = config.num_qubits;
    if outcomes.len() != n {
        return domain(format!(
            "{} controller outcomes for {n} slots",
            outcomes.len()
        ));
    }
    let factored: Vec<T> = outcomes
        .iter()
        .map(|o| {
            if *o == DiagonalOutcome::Minus {
                T::PI()
            } else {
                T::zero()
            }
        })
        .collect();
    let diag_phases = (0..1usize << n)
        .map(|j| {
            let flips = outcomes
                .iter()
                .enumerate()
                .filter(|(b, o)| **o == DiagonalOutcome::Minus && (j >> b) & 1 == 1)
                .count();
            if flips % 2 == 1 {
                T::PI()
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(CorrectionOp {
        num_qubits: n,
        diag_phases,
        factored,
    })
}

/// A single branch execution together with the corrected receiver state.
#[derive(Debug, Clone)]
pub struct BranchRun<T> {
    pub record: OutcomeRecord<T>,
    pub receiver_state: QuantumState<T>,
}

/// Everything about a protocol instance that does not depend on the
/// measurement outcomes: channel, phase shares, bases and target.
#[derive(Debug, Clone)]
pub struct Session<T> {
    config: ProtocolConfig,
    spec: PhaseVector<T>,
    shares: Vec<PhaseShare<T>>,
    bases: Vec<MeasurementBasis<T>>,
    channel: QuantumState<T>,
    target: QuantumState<T>,
}

impl<T: Scalar> Session<T> {
    /// Build the channel and split `spec` with `config.seed`.
    pub fn new(config: &ProtocolConfig, spec: &PhaseVector<T>) -> Result<Self> {
        config.validate()?;
        if spec.num_qubits != config.num_qubits {
            return domain(format!(
                "phase vector for {} qubits, protocol configured for {}",
                spec.num_qubits, config.num_qubits
            ));
        }
        let shares = random_phase_split(spec, config.senders, config.seed)?;
        Self::with_shares(config, spec, shares)
    }

    /// Like [`Session::new`] but with caller-provided shares.
    pub fn with_shares(
        config: &ProtocolConfig,
        spec: &PhaseVector<T>,
        shares: Vec<PhaseShare<T>>,
    ) -> Result<Self> {
        config.validate()?;
        if shares.len() != config.senders
            || shares.iter().any(|s| s.num_qubits != config.num_qubits)
        {
            return domain("phase shares do not match the protocol configuration");
        }
        let bases = shares.iter().map(sender_basis).collect();
        let channel = build_channel(config)?;
        let target = equatorial_state(spec).relabel(config.receiver_labels())?;
        Ok(Self {
            config: *config,
            spec: spec.clone(),
            shares,
            bases,
            channel,
            target,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn spec(&self) -> &PhaseVector<T> {
        &self.spec
    }

    pub fn shares(&self) -> &[PhaseShare<T>] {
        &self.shares
    }

    pub fn bases(&self) -> &[MeasurementBasis<T>] {
        &self.bases
    }

    pub fn channel(&self) -> &QuantumState<T> {
        &self.channel
    }

    /// Target state on the receiver's labels.
    pub fn target(&self) -> &QuantumState<T> {
        &self.target
    }

    /// Correction the receiver applies for `outcomes`.
    pub fn correction_for(&self, outcomes: &Outcomes) -> Result<CorrectionOp<T>> {
        let senders = correction(self.config.num_qubits, &outcomes.senders)?;
        if self.config.controlled {
            senders.compose(&controller_correction(&self.config, &outcomes.controller)?)
        } else {
            Ok(senders)
        }
    }

    fn check_forced(&self, forced: &Outcomes) -> Result<()> {
        let c = &self.config;
        let expect_ctrl = if c.controlled { c.num_qubits } else { 0 };
        if forced.senders.len() != c.senders || forced.controller.len() != expect_ctrl {
            return Err(Error::Usage(format!(
                "forced outcomes {forced} do not match {} sender(s) and {expect_ctrl} controller result(s)",
                c.senders
            )));
        }
        let dim = 1usize << c.num_qubits;
        if let Some(k) = forced.senders.iter().find(|&&k| k >= dim) {
            return domain(format!(
                "outcome {k} out of range for {} qubits",
                c.num_qubits
            ));
        }
        Ok(())
    }

    /// Run one branch. Outcomes are `forced` when given, otherwise sampled
    /// by the Born rule from `rng`.
    pub fn execute<R: Rng>(&self, forced: Option<&Outcomes>, rng: &mut R) -> Result<BranchRun<T>> {
        if let Some(f) = forced {
            self.check_forced(f)?;
        }
        let c = &self.config;
        let mut state = self.channel.clone();
        let mut probability = T::one();
        let mut ks = Vec::with_capacity(c.senders);

        for (s, basis) in self.bases.iter().enumerate() {
            let labels = c.sender_labels(s);
            let (k, proj) = match forced {
                Some(f) => {
                    let k = f.senders[s];
                    (k, measure_project(&state, &labels, basis.vector(k))?)
                }
                None => {
                    let projections = basis
                        .vectors()
                        .iter()
                        .map(|v| measure_project(&state, &labels, v))
                        .collect::<Result<Vec<_>>>()?;
                    sample(projections, rng)
                }
            };
            ks.push(k);
            probability = probability * proj.probability;
            state = reachable(proj, || Outcomes::new(ks.clone()), probability)?;
        }

        let mut ctrl = Vec::new();
        if c.controlled {
            for (n, label) in c.controller_labels().iter().enumerate() {
                let (o, proj) = match forced {
                    Some(f) => {
                        let o = f.controller[n];
                        (o, measure_project(&state, &[label], &o.vector())?)
                    }
                    None => {
                        let projections = [DiagonalOutcome::Plus, DiagonalOutcome::Minus]
                            .iter()
                            .map(|o| measure_project(&state, &[label], &o.vector()))
                            .collect::<Result<Vec<_>>>()?;
                        let (bit, p) = sample(projections, rng);
                        (DiagonalOutcome::from_bit(bit), p)
                    }
                };
                ctrl.push(o);
                probability = probability * proj.probability;
                state = reachable(
                    proj,
                    || Outcomes::controlled(ks.clone(), ctrl.clone()),
                    probability,
                )?;
            }
        }

        let outcomes = Outcomes::controlled(ks, ctrl);
        let fix = self.correction_for(&outcomes)?;
        let receiver_state = fix.apply(&state, &c.receiver_labels())?;
        let fidelity = fidelity_global_phase(&receiver_state, &self.target)?;
        Ok(BranchRun {
            record: OutcomeRecord {
                outcomes,
                branch_probability: probability,
                fidelity,
                correction_angles: fix.factored().to_vec(),
            },
            receiver_state,
        })
    }
}

fn reachable<T: Scalar>(
    proj: crate::statevec::Projection<T>,
    outcomes: impl FnOnce() -> Outcomes,
    probability: T,
) -> Result<QuantumState<T>> {
    proj.post_state.ok_or_else(|| Error::Unreachable {
        outcome: outcomes().to_string(),
        probability: probability.to_f64().unwrap_or(0.0),
    })
}

fn sample<T: Scalar, R: Rng>(
    projections: Vec<crate::statevec::Projection<T>>,
    rng: &mut R,
) -> (usize, crate::statevec::Projection<T>) {
    let total: f64 = projections
        .iter()
        .map(|p| p.probability.to_f64().unwrap_or(0.0))
        .sum();
    let mut u = rng.gen::<f64>() * total;
    let last = projections
        .iter()
        .rposition(|p| p.is_reachable())
        .unwrap_or(0);
    for (i, p) in projections.iter().enumerate() {
        let w = p.probability.to_f64().unwrap_or(0.0);
        if p.is_reachable() && (u < w || i == last) {
            return (i, projections.into_iter().nth(i).expect("index in range"));
        }
        u -= w;
    }
    (
        last,
        projections.into_iter().nth(last).expect("index in range"),
    )
}

/// Build the channel, split `spec` (seeded by `config.seed`), measure every
/// sender (and the controller), correct and compare against the target.
/// Unforced outcomes are sampled from the sampling stream of `seed`.
pub fn run_once<T: Scalar>(
    config: &ProtocolConfig,
    spec: &PhaseVector<T>,
    forced: Option<&Outcomes>,
    seed: u64,
) -> Result<OutcomeRecord<T>> {
    let session = Session::new(config, spec)?;
    let mut rng = seeded_rng(seed, STREAM_SAMPLE);
    Ok(session.execute(forced, &mut rng)?.record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};

    type C = Complex<f64>;

    fn close(a: C, b: C) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn equatorial_examples() {
        let s = equatorial_state(&PhaseVector::new(1, vec![0.0, 0.0]).unwrap());
        for a in s.amplitudes() {
            assert_abs_diff_eq!(a.re, FRAC_1_SQRT_2, epsilon = 1e-15);
        }
        let s = equatorial_state(
            &PhaseVector::new(2, vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]).unwrap(),
        );
        let expect = [
            C::new(0.5, 0.0),
            C::new(0.0, 0.5),
            C::new(-0.5, 0.0),
            C::new(0.0, -0.5),
        ];
        for (a, e) in s.amplitudes().iter().zip(expect) {
            assert!(close(*a, e), "{a} vs {e}");
        }
        let d = [0.0, 0.7, 1.9, 4.4];
        let s = equatorial_state(&PhaseVector::new(2, d.to_vec()).unwrap());
        for (a, x) in s.amplitudes().iter().zip(d) {
            assert!(close(*a, C::from_polar(0.5, x)));
        }
    }

    #[test]
    fn phase_vector_validation() {
        assert!(PhaseVector::new(2, vec![0.0; 3]).is_err());
        assert!(PhaseVector::new(1, vec![0.0, f64::NAN]).is_err());
        assert!(PhaseVector::<f64>::new(0, vec![0.0]).is_err());
        let p = PhaseVector::new(1, vec![-FRAC_PI_2, 3.0 * TAU]).unwrap();
        assert_abs_diff_eq!(p.delta()[0], 3.0 * FRAC_PI_2, epsilon = 1e-12);
        assert!(p.delta()[1] < 1e-12);
        assert!(!p.is_canonical());
        let r = PhaseVector::<f64>::from_seed(3, 5).unwrap();
        assert!(r.is_canonical());
        assert_eq!(r, PhaseVector::from_seed(3, 5).unwrap());
        assert!(r.delta().iter().all(|d| (0.0..TAU).contains(d)));
    }

    #[test]
    fn split_single_sender_is_identity() {
        let spec = PhaseVector::<f64>::from_seed(2, 1).unwrap();
        let shares = random_phase_split(&spec, 1, 9).unwrap();
        assert_eq!(shares.len(), 1);
        assert_eq!(shares[0].x(), spec.delta());
    }

    #[test]
    fn split_of_zero_is_antisymmetric() {
        let spec = PhaseVector::<f64>::zeros(2).unwrap();
        let shares = random_phase_split(&spec, 2, 4).unwrap();
        for (a, b) in shares[0].x().iter().zip(shares[1].x()) {
            assert!(angle_distance(*a, -*b) < 1e-12);
        }
        assert!(random_phase_split(&spec, 0, 4).is_err());
    }

    #[test]
    fn ghz_examples() {
        let g = ghz_state::<f64, _>(["a", "b", "c"]).unwrap();
        assert_abs_diff_eq!(g.amplitude(0).re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(g.amplitude(7).re, FRAC_1_SQRT_2);
        assert!((1..7).all(|i| g.amplitude(i).norm() == 0.0));
        let g = ghz_state::<f64, _>(["a", "b", "c", "d"]).unwrap();
        assert_abs_diff_eq!(g.amplitude(15).re, FRAC_1_SQRT_2);
        let bell = ghz_state::<f64, _>(["a", "b"]).unwrap();
        assert_abs_diff_eq!(bell.amplitude(3).re, FRAC_1_SQRT_2);
        assert!(matches!(ghz_state::<f64, _>(["a"]), Err(Error::Domain(_))));
    }

    #[test]
    fn channel_layout() {
        let ch = build_channel::<f64>(&ProtocolConfig::new(2, 2)).unwrap();
        assert_eq!(ch.labels(), &["A1", "B1", "C1", "A2", "B2", "C2"]);
        let ch = build_channel::<f64>(&ProtocolConfig::new(1, 1)).unwrap();
        assert_eq!(ch.labels(), &["A1", "C1"]);
        assert_abs_diff_eq!(ch.amplitude(3).re, FRAC_1_SQRT_2);
        let ch = build_channel::<f64>(&ProtocolConfig::new(2, 2).with_controller(true)).unwrap();
        assert_eq!(ch.num_qubits(), 8);
        assert_eq!(&ch.labels()[..4], &["A1", "B1", "C1", "K1"]);
        let big = ProtocolConfig::new(5, 4);
        assert!(matches!(
            build_channel::<f64>(&big),
            Err(Error::Resource(_))
        ));
        assert!(matches!(
            build_channel::<f64>(&ProtocolConfig::new(1, 0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn party_labels_skip_receiver_and_controller() {
        let letters: String = (0..SENDER_LETTERS.len())
            .map(|i| Party::Sender(i).letter())
            .collect();
        assert!(!letters.contains('C') && !letters.contains('K'));
        assert_eq!(
            ProtocolConfig::new(3, 3).sender_labels(2),
            vec!["D1", "D2", "D3"]
        );
    }

    #[test]
    fn one_qubit_basis_is_hadamard() {
        let share = PhaseShare::new(1, vec![0.0, 0.0], 0).unwrap();
        let b = sender_basis(&share);
        let h = FRAC_1_SQRT_2;
        assert!(close(b.vector(0)[0], C::new(h, 0.0)) && close(b.vector(0)[1], C::new(h, 0.0)));
        assert!(close(b.vector(1)[0], C::new(h, 0.0)) && close(b.vector(1)[1], C::new(-h, 0.0)));
    }

    #[test]
    fn correction_examples() {
        let c = correction::<f64>(2, &[3, 3]).unwrap();
        let d = c.operator();
        for (j, e) in [1.0, -1.0, 1.0, -1.0].iter().enumerate() {
            assert!(close(d.get(j, j), C::new(*e, 0.0)));
        }
        assert_abs_diff_eq!(c.factored()[0], PI, epsilon = 1e-12);
        assert_abs_diff_eq!(c.factored()[1], 0.0, epsilon = 1e-12);

        let c = correction::<f64>(2, &[1, 0]).unwrap();
        let d = c.operator();
        let expect = [
            C::new(1.0, 0.0),
            C::new(0.0, 1.0),
            C::new(-1.0, 0.0),
            C::new(0.0, -1.0),
        ];
        for (j, e) in expect.iter().enumerate() {
            assert!(close(d.get(j, j), *e));
        }

        for n in 1..=4 {
            let id = correction::<f64>(n, &[0, 0, 0]).unwrap();
            assert_eq!(id, CorrectionOp::identity(n));
        }
        assert!(matches!(correction::<f64>(2, &[4]), Err(Error::Domain(_))));
    }

    #[test]
    fn correction_composition_adds_angles() {
        let a = correction::<f64>(3, &[1]).unwrap();
        let b = correction::<f64>(3, &[6]).unwrap();
        let ab = a.compose(&b).unwrap();
        let direct = correction::<f64>(3, &[7]).unwrap();
        for (x, y) in ab.diag_phases().iter().zip(direct.diag_phases()) {
            assert!(angle_distance(*x, *y) < 1e-12);
        }
        assert!(a.compose(&CorrectionOp::identity(2)).is_err());
    }

    #[test]
    fn controller_corrections() {
        let cfg = ProtocolConfig::new(2, 2).with_controller(true);
        use DiagonalOutcome::*;
        assert_eq!(
            controller_correction::<f64>(&cfg, &[Plus, Plus]).unwrap(),
            CorrectionOp::identity(2)
        );
        let c = controller_correction::<f64>(&cfg, &[Minus, Plus]).unwrap();
        assert_eq!(c.factored(), &[PI, 0.0]);
        assert_eq!(c.diag_phases(), &[0.0, PI, 0.0, PI]);
        assert_eq!(c.factorization_error(), 0.0);
        assert!(matches!(
            controller_correction::<f64>(&ProtocolConfig::new(2, 2), &[Plus, Plus]),
            Err(Error::Usage(_))
        ));
        assert!(controller_correction::<f64>(&cfg, &[Plus]).is_err());
    }

    #[test]
    fn controller_minus_residual_needs_sigma_z() {
        // N=1, two senders at k=0 with x=0, controller finds |−⟩.
        let cfg = ProtocolConfig::new(1, 2).with_controller(true);
        let spec = PhaseVector::<f64>::zeros(1).unwrap();
        let shares = vec![
            PhaseShare::new(1, vec![0.0, 0.0], 0).unwrap(),
            PhaseShare::new(1, vec![0.0, 0.0], 1).unwrap(),
        ];
        let session = Session::with_shares(&cfg, &spec, shares).unwrap();
        let mut state = session.channel().clone();
        for s in 0..2 {
            let v = session.bases()[s].vector(0).to_vec();
            state = measure_project(&state, &cfg.sender_labels(s), &v)
                .unwrap()
                .post_state
                .unwrap();
        }
        let minus = DiagonalOutcome::Minus.vector::<f64>();
        state = measure_project(&state, &["K1"], &minus)
            .unwrap()
            .post_state
            .unwrap();
        assert!(close(state.amplitude(0), C::new(FRAC_1_SQRT_2, 0.0)));
        assert!(close(state.amplitude(1), C::new(-FRAC_1_SQRT_2, 0.0)));

        let forced = Outcomes::controlled(vec![0, 0], vec![DiagonalOutcome::Minus]);
        let run = session
            .execute(Some(&forced), &mut seeded_rng(0, STREAM_SAMPLE))
            .unwrap();
        assert_eq!(run.record.correction_angles, vec![PI]);
        assert_abs_diff_eq!(run.record.fidelity, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn run_once_examples() {
        let cfg = ProtocolConfig::new(1, 2);
        let spec = PhaseVector::<f64>::zeros(1).unwrap();
        let rec = run_once(&cfg, &spec, Some(&Outcomes::new(vec![0, 0])), 0).unwrap();
        assert_abs_diff_eq!(rec.fidelity, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rec.branch_probability, 0.25, epsilon = 1e-12);

        let cfg = ProtocolConfig::new(2, 2).with_seed(11);
        let spec = PhaseVector::<f64>::from_seed(2, 11).unwrap();
        let rec = run_once(&cfg, &spec, Some(&Outcomes::new(vec![3, 3])), 0).unwrap();
        assert_abs_diff_eq!(rec.fidelity, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rec.branch_probability, 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn run_once_sampling_is_seeded() {
        let cfg = ProtocolConfig::new(2, 3).with_seed(2);
        let spec = PhaseVector::<f64>::from_seed(2, 2).unwrap();
        let a = run_once(&cfg, &spec, None, 17).unwrap();
        let b = run_once(&cfg, &spec, None, 17).unwrap();
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.fidelity, 1.0, epsilon = 1e-10);
        let distinct: std::collections::HashSet<_> = (0..40)
            .map(|s| run_once(&cfg, &spec, None, s).unwrap().outcomes)
            .collect();
        assert!(distinct.len() > 10);
    }

    #[test]
    fn run_once_rejects_bad_forcing() {
        let cfg = ProtocolConfig::new(2, 2);
        let spec = PhaseVector::<f64>::zeros(2).unwrap();
        assert!(matches!(
            run_once(&cfg, &spec, Some(&Outcomes::new(vec![0])), 0),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            run_once(&cfg, &spec, Some(&Outcomes::new(vec![0, 4])), 0),
            Err(Error::Domain(_))
        ));
        let spec1 = PhaseVector::<f64>::zeros(1).unwrap();
        assert!(run_once(&cfg, &spec1, None, 0).is_err());
    }

    #[test]
    fn unreachable_branch_is_reported() {
        // A basis with a vector orthogonal to everything the channel can
        // produce on the sender side: |1⟩ projection of a product state.
        let cfg = ProtocolConfig::new(1, 1);
        let spec = PhaseVector::<f64>::zeros(1).unwrap();
        let session = Session::new(&cfg, &spec).unwrap();
        let zero = QuantumState::<f64>::basis_labeled(["A1", "C1"], 0).unwrap();
        let p = measure_project(
            &zero,
            &cfg.sender_labels(0),
            &[C::new(0.0, 0.0), C::new(1.0, 0.0)],
        )
        .unwrap();
        assert!(!p.is_reachable());
        let err = reachable(p, || Outcomes::new(vec![1]), 0.0).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
        assert_eq!(session.config().senders, 1);
    }
}
