//! Hand-transcribed reference data for the two-qubit, two-sender protocol.
#![allow(dead_code)]

use num_complex::Complex64 as C;

const I: C = C::new(0.0, 1.0);
const ONE: C = C::new(1.0, 0.0);

/// The four two-qubit sender basis vectors written out term by term, with
/// components ordered |00⟩, |01⟩, |10⟩, |11⟩ (index j = l_1 + 2 l_2).
/// `x[0]` enters as an extra phase on |00⟩.
pub fn two_qubit_basis(x: &[f64; 4]) -> [[C; 4]; 4] {
    let e = |j: usize| C::from_polar(1.0, -x[j]);
    let coeffs: [[C; 4]; 4] = [
        [ONE, ONE, ONE, ONE],
        [ONE, I, -ONE, -I],
        [ONE, -ONE, ONE, -ONE],
        [ONE, -I, -ONE, I],
    ];
    let mut out = [[C::new(0.0, 0.0); 4]; 4];
    for k in 0..4 {
        for j in 0..4 {
            out[k][j] = 0.5 * coeffs[k][j] * e(j);
        }
    }
    out
}

/// Receiver residual coefficients on e^{iδ_1}, e^{iδ_2}, e^{iδ_3} for each
/// pair of sender outcomes (k_A, k_B), one row per line of the expansion.
pub fn two_qubit_residual_pattern(ka: usize, kb: usize) -> [C; 3] {
    #[rustfmt::skip]
    let table: [[[C; 3]; 4]; 4] = [
        [[ONE, ONE, ONE], [-I, -ONE, I], [-ONE, ONE, -ONE], [I, -ONE, -I]],
        [[-I, -ONE, I], [-ONE, ONE, -ONE], [I, -ONE, -I], [ONE, ONE, ONE]],
        [[-ONE, ONE, -ONE], [I, -ONE, -I], [ONE, ONE, ONE], [-I, -ONE, I]],
        [[I, -ONE, -I], [ONE, ONE, ONE], [-I, -ONE, I], [-ONE, ONE, -ONE]],
    ];
    table[ka][kb]
}

/// Normalized residual state (|00⟩ + c_1 e^{iδ_1}|01⟩ + ...)/2.
pub fn two_qubit_residual(ka: usize, kb: usize, delta: &[f64]) -> [C; 4] {
    let p = two_qubit_residual_pattern(ka, kb);
    let mut out = [C::new(0.5, 0.0); 4];
    for j in 1..4 {
        out[j] = 0.5 * p[j - 1] * C::from_polar(1.0, delta[j]);
    }
    out[0] *= C::from_polar(1.0, delta[0]);
    out
}

pub fn max_diff(a: &[C], b: &[C]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
