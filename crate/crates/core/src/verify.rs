//! Oracles and exhaustive checkers: basis orthonormality, the channel
//! decomposition identity, and full enumeration of measurement branches.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::protocol::{
    build_channel, seeded_rng, sender_basis, DiagonalOutcome, MeasurementBasis, Outcomes,
    PhaseShare, PhaseVector, ProtocolConfig, Session, STREAM_SAMPLE,
};
use crate::scalar::Scalar;
use crate::statevec::{fidelity_global_phase, gather_bits, scatter_bits, QuantumState};

/// Default cap on the number of enumerated branches.
pub const DEFAULT_BRANCH_CAP: u64 = 1_000_000;
/// Tolerance on `Σ branch_probability = 1`.
pub const TOTAL_PROBABILITY_TOL: f64 = 1e-9;

/// Result of one branch: outcomes, probability, fidelity after correction and
/// the receiver's single-qubit correction angles.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRecord<T> {
    pub outcomes: Outcomes,
    pub branch_probability: T,
    pub fidelity: T,
    pub correction_angles: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport<T> {
    pub config: ProtocolConfig,
    pub delta: PhaseVector<T>,
    /// One record per outcome tuple, in lexicographic order.
    pub branches: Vec<OutcomeRecord<T>>,
    pub min_fidelity: T,
    pub total_probability: T,
    /// Probability mass of branches with fidelity ≥ 1 − tolerance.
    pub success_probability: T,
    pub tolerance: T,
    /// Largest fidelity disagreement with the direct slicing oracle, when run.
    pub cross_check_max_diff: Option<T>,
}

impl<T: Scalar> VerificationReport<T> {
    /// Every branch succeeds and probabilities sum to one. The sum check
    /// uses [`TOTAL_PROBABILITY_TOL`], widened to `NORM_TOL` for `f32`.
    pub fn passed(&self) -> bool {
        let total_tol = T::lit(TOTAL_PROBABILITY_TOL).max(T::NORM_TOL);
        (self.success_probability - T::one()).abs() <= self.tolerance
            && (self.total_probability - T::one()).abs() <= total_tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub tolerance: f64,
    pub branch_cap: u64,
    /// Recompute every branch with [`direct_branch_state`] and record the
    /// largest fidelity disagreement.
    pub cross_check: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            branch_cap: DEFAULT_BRANCH_CAP,
            cross_check: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthonormalityReport<T> {
    /// `max |G_{kk'} − δ_{kk'}|` over the Gram matrix.
    pub max_deviation: T,
    pub passed: bool,
}

pub fn check_orthonormal<T: Scalar>(basis: &MeasurementBasis<T>) -> OrthonormalityReport<T> {
    let zero = Complex::new(T::zero(), T::zero());
    let vs = basis.vectors();
    let mut worst = T::zero();
    for (k, u) in vs.iter().enumerate() {
        for (l, v) in vs.iter().enumerate() {
            let g = u
                .iter()
                .zip(v)
                .map(|(a, b)| a.conj() * b)
                .fold(zero, |s, x| s + x);
            let e = if k == l { T::one() } else { T::zero() };
            worst = worst.max((g - Complex::new(e, T::zero())).norm());
        }
    }
    OrthonormalityReport {
        max_deviation: worst,
        passed: worst < T::NORM_TOL,
    }
}

/// Compare every channel amplitude `⟨φ_{kA}, φ_{kB}, j|Ψ⟩`, computed by a
/// full inner product over both senders' registers, with the closed form
/// `2^{−N} 2^{−N/2} e^{−2πi·j(kA+kB)/2^N} e^{iδ_j}` where `δ_j = a_j + b_j`.
/// Returns the largest modulus of the difference.
pub fn decomposition_check<T: Scalar>(num_qubits: usize, shares: &[PhaseShare<T>]) -> Result<T> {
    if shares.len() != 2 {
        return Err(Error::Usage(format!(
            "decomposition identity is stated for two senders, got {}",
            shares.len()
        )));
    }
    let config = ProtocolConfig::new(num_qubits, 2);
    let channel: QuantumState<T> = build_channel(&config)?;
    let a_pos = channel.positions(&config.sender_labels(0))?;
    let b_pos = channel.positions(&config.sender_labels(1))?;
    let c_pos = channel.positions(&config.receiver_labels())?;
    let basis_a = sender_basis(&shares[0]);
    let basis_b = sender_basis(&shares[1]);

    let dim = 1usize << num_qubits;
    let dim_t = T::lit(dim as f64);
    let prefactor = (dim_t * dim_t.sqrt()).recip();
    let zero = Complex::new(T::zero(), T::zero());
    let mut worst = T::zero();
    for ka in 0..dim {
        for kb in 0..dim {
            for j in 0..dim {
                let c_off = scatter_bits(j, &c_pos);
                let mut amp = zero;
                for a in 0..dim {
                    let a_off = scatter_bits(a, &a_pos);
                    let bra_a = basis_a.vector(ka)[a].conj();
                    for b in 0..dim {
                        let idx = a_off | scatter_bits(b, &b_pos) | c_off;
                        amp = amp + bra_a * basis_b.vector(kb)[b].conj() * channel.amplitude(idx);
                    }
                }
                let delta_j = shares[0].x()[j] + shares[1].x()[j];
                let fourier = -T::TAU() * T::lit((j * (ka + kb) % dim) as f64) / dim_t;
                let closed = Complex::from_polar(prefactor, fourier + delta_j);
                worst = worst.max((amp - closed).norm());
            }
        }
    }
    Ok(worst)
}

/// Outcome tuple number `index` in lexicographic order over
/// `(k_sender1, …, k_senderM, controller slot 1, …, controller slot N)`.
pub fn branch_outcomes(config: &ProtocolConfig, index: usize) -> Outcomes {
    let n = config.num_qubits;
    let mask = (1usize << n) - 1;
    let ctrl_bits = if config.controlled { n } else { 0 };
    let controller = (0..ctrl_bits)
        .map(|b| DiagonalOutcome::from_bit(index >> (ctrl_bits - 1 - b)))
        .collect();
    let senders = (0..config.senders)
        .map(|s| (index >> (ctrl_bits + n * (config.senders - 1 - s))) & mask)
        .collect();
    Outcomes::controlled(senders, controller)
}

/// Number of outcome tuples, or `None` if it does not fit in a `u64`.
pub fn branch_count(config: &ProtocolConfig) -> Option<u64> {
    1u64.checked_shl(u32::try_from(config.branch_bits()).ok()?)
        .filter(|_| config.branch_bits() < 64)
}

/// Receiver state of one branch, computed without [`crate::statevec::measure_project`]:
/// every channel amplitude is weighted by the conjugated basis components of
/// all measuring parties and accumulated onto the receiver's index, then the
/// diagonal correction is applied entrywise.
pub fn direct_branch_state<T: Scalar>(
    session: &Session<T>,
    outcomes: &Outcomes,
) -> Result<QuantumState<T>> {
    let config = session.config();
    let channel = session.channel();
    let zero = Complex::new(T::zero(), T::zero());

    let mut registers: Vec<(Vec<usize>, Vec<Complex<T>>)> = Vec::new();
    for (s, basis) in session.bases().iter().enumerate() {
        let pos = channel.positions(&config.sender_labels(s))?;
        let k = outcomes.senders[s];
        registers.push((pos, basis.vector(k).iter().map(|c| c.conj()).collect()));
    }
    if config.controlled {
        for (label, o) in config.controller_labels().iter().zip(&outcomes.controller) {
            let pos = vec![channel.position(label)?];
            registers.push((pos, o.vector::<T>().iter().map(|c| c.conj()).collect()));
        }
    }
    let c_pos = channel.positions(&config.receiver_labels())?;

    let mut residual = vec![zero; 1 << config.num_qubits];
    for (i, amp) in channel.amplitudes().iter().enumerate() {
        if *amp == zero {
            continue;
        }
        let weight = registers
            .iter()
            .fold(*amp, |w, (pos, bra)| w * bra[gather_bits(i, pos)]);
        residual[gather_bits(i, &c_pos)] = residual[gather_bits(i, &c_pos)] + weight;
    }

    let norm: T = residual.iter().map(|c| c.norm_sqr()).sum();
    if norm < T::UNREACHABLE {
        return Err(Error::Unreachable {
            outcome: outcomes.to_string(),
            probability: norm.to_f64().unwrap_or(0.0),
        });
    }
    let fix = session.correction_for(outcomes)?;
    let scale = norm.sqrt().recip();
    let corrected = residual
        .iter()
        .zip(fix.diag_phases())
        .map(|(r, &phi)| r * Complex::from_polar(scale, phi))
        .collect();
    QuantumState::from_amplitudes(config.receiver_labels(), corrected)
}

/// Run every outcome tuple and aggregate the results.
pub fn exhaustive_verify<T: Scalar>(
    config: &ProtocolConfig,
    spec: &PhaseVector<T>,
    options: &VerifyOptions,
) -> Result<VerificationReport<T>> {
    config.validate()?;
    let count = branch_count(config)
        .filter(|&c| c <= options.branch_cap)
        .ok_or_else(|| {
            Error::Resource(format!(
                "2^{} branches exceed the cap of {}",
                config.branch_bits(),
                options.branch_cap
            ))
        })?;
    let session = Session::new(config, spec)?;

    let results: Vec<(OutcomeRecord<T>, Option<T>)> = (0..count as usize)
        .into_par_iter()
        .map(|index| {
            let outcomes = branch_outcomes(config, index);
            // forced branches never consume randomness
            let run =
                session.execute(Some(&outcomes), &mut seeded_rng(config.seed, STREAM_SAMPLE))?;
            let diff = if options.cross_check {
                let direct = direct_branch_state(&session, &outcomes)?;
                let f = fidelity_global_phase(&direct, session.target())?;
                Some((f - run.record.fidelity).abs())
            } else {
                None
            };
            Ok((run.record, diff))
        })
        .collect::<Result<_>>()?;

    let tol = T::lit(options.tolerance);
    let threshold = T::one() - tol;
    let mut min_fidelity = T::one();
    let mut total = T::zero();
    let mut success = T::zero();
    let mut cross: Option<T> = None;
    let mut branches = Vec::with_capacity(results.len());
    for (rec, diff) in results {
        min_fidelity = min_fidelity.min(rec.fidelity);
        total = total + rec.branch_probability;
        if rec.fidelity >= threshold {
            success = success + rec.branch_probability;
        }
        if let Some(d) = diff {
            cross = Some(cross.map_or(d, |c| c.max(d)));
        }
        branches.push(rec);
    }
    Ok(VerificationReport {
        config: *config,
        delta: spec.clone(),
        branches,
        min_fidelity,
        total_probability: total,
        success_probability: success,
        tolerance: tol,
        cross_check_max_diff: cross,
    })
}
