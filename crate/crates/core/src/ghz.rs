//! GHZ basis, GHZ-diagonal states, the CNOT reduction to a Bell pair, the
//! Bell twirl and the IID source models fed to the protocol simulator.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::qmath::{
    c64, kron, pauli_x, pauli_y, pauli_z, CMatrix, CVector, DensityMatrix, PureState,
    UnitaryMatrix, STATE_TOL,
};

/// Flat index of a computational basis string, qubit 0 most significant.
pub fn basis_index(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Bits of `index` over `len` qubits, qubit 0 first.
pub fn index_bits(index: usize, len: usize) -> Vec<u8> {
    (0..len).map(|k| ((index >> (len - 1 - k)) & 1) as u8).collect()
}

pub fn parse_bit_string(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|ch| match ch {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::InvalidParams(format!("'{s}' is not a bit string"))),
        })
        .collect()
}

pub fn bit_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

fn check_bits(bits: &[u8]) -> Result<()> {
    if bits.iter().all(|&b| b <= 1) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{bits:?} contains non-bit values")))
    }
}

/// `(|0,u⟩ + (−1)^v |1,ū⟩)/√2`.
pub fn ghz_basis_state(parties: usize, v: u8, u: &[u8]) -> Result<PureState> {
    if parties < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 parties, got {parties}")));
    }
    if u.len() != parties - 1 {
        return Err(Error::InvalidParams(format!(
            "u has length {}, expected {}",
            u.len(),
            parties - 1
        )));
    }
    check_bits(u)?;
    check_bits(&[v])?;
    let d = 1usize << parties;
    let mut amps = CVector::zeros(d);
    let head: Vec<u8> = std::iter::once(0).chain(u.iter().copied()).collect();
    let tail: Vec<u8> = head.iter().map(|b| 1 - b).collect();
    let sign = if v == 0 { 1.0 } else { -1.0 };
    amps[basis_index(&head)] = c64(FRAC_1_SQRT_2, 0.0);
    amps[basis_index(&tail)] = c64(sign * FRAC_1_SQRT_2, 0.0);
    PureState::new(amps, vec![2; parties])
}

/// `(1/√d) Σ_i |i⟩^{⊗M}`.
pub fn ghz_rank_d(parties: usize, d: usize) -> Result<PureState> {
    if parties < 2 || d < 2 {
        return Err(Error::InvalidParams(format!(
            "rank-d GHZ needs M ≥ 2 and d ≥ 2 (got M={parties}, d={d})"
        )));
    }
    let total = d.checked_pow(parties as u32).filter(|&t| t <= 1 << 16).ok_or_else(|| {
        Error::InvalidParams(format!("d^M too large for M={parties}, d={d}"))
    })?;
    let mut amps = CVector::zeros(total);
    // index of |i,i,...,i⟩ is i * (1 + d + d^2 + ...)
    let repunit: usize = (0..parties).map(|k| d.pow(k as u32)).sum();
    let amp = 1.0 / (d as f64).sqrt();
    for i in 0..d {
        amps[i * repunit] = c64(amp, 0.0);
    }
    PureState::new(amps, vec![d; parties])
}

pub fn ghz_state(parties: usize) -> Result<PureState> {
    ghz_rank_d(parties, 2)
}

/// Coefficients of a state diagonal in the GHZ basis up to the `i·s_u`
/// coherences between `ψ_{0,u}` and `ψ_{1,u}`. Tables are keyed by `u` as a
/// bit string of length `M − 1`; absent keys read as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhzDiagonalSpec {
    #[serde(rename = "M")]
    pub parties: usize,
    pub lambda0: BTreeMap<String, f64>,
    pub lambda1: BTreeMap<String, f64>,
    #[serde(default)]
    pub s: BTreeMap<String, f64>,
}

impl GhzDiagonalSpec {
    /// All weight on `ψ_{0,0…0}`.
    pub fn pure_ghz(parties: usize) -> Self {
        let mut lambda0 = BTreeMap::new();
        lambda0.insert("0".repeat(parties.saturating_sub(1)), 1.0);
        Self {
            parties,
            lambda0,
            lambda1: BTreeMap::new(),
            s: BTreeMap::new(),
        }
    }

    fn lookup(table: &BTreeMap<String, f64>, key: &str) -> f64 {
        table.get(key).copied().unwrap_or(0.0)
    }

    pub fn lambda0(&self, u: &str) -> f64 {
        Self::lookup(&self.lambda0, u)
    }

    pub fn lambda1(&self, u: &str) -> f64 {
        Self::lookup(&self.lambda1, u)
    }

    pub fn coherence(&self, u: &str) -> f64 {
        Self::lookup(&self.s, u)
    }

    pub fn u_strings(&self) -> Vec<String> {
        let len = self.parties - 1;
        (0..1usize << len).map(|i| bit_string(&index_bits(i, len))).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.parties < 2 || self.parties > 8 {
            return Err(Error::InvalidParams(format!(
                "M = {} outside [2, 8]",
                self.parties
            )));
        }
        for table in [&self.lambda0, &self.lambda1, &self.s] {
            for (key, &value) in table {
                let bits = parse_bit_string(key)?;
                if bits.len() != self.parties - 1 {
                    return Err(Error::InvalidParams(format!(
                        "key '{key}' should have length {}",
                        self.parties - 1
                    )));
                }
                check_range("coefficient", value, 0.0, 1.0)?;
            }
        }
        let total: f64 = self.lambda0.values().chain(self.lambda1.values()).sum();
        if (total - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("weights sum to {total}")));
        }
        for u in self.u_strings() {
            let (l0, l1, s) = (self.lambda0(&u), self.lambda1(&u), self.coherence(&u));
            if s * s > l0 * l1 + 1e-12 {
                return Err(Error::InvalidState(format!(
                    "block u={u} not positive: s²={} > λ0λ1={}",
                    s * s,
                    l0 * l1
                )));
            }
        }
        Ok(())
    }
}

pub fn ghz_diagonal_state(spec: &GhzDiagonalSpec) -> Result<DensityMatrix> {
    spec.validate()?;
    let m = spec.parties;
    let d = 1usize << m;
    let mut data = CMatrix::zeros(d, d);
    for u in spec.u_strings() {
        let bits = parse_bit_string(&u)?;
        let p0 = ghz_basis_state(m, 0, &bits)?;
        let p1 = ghz_basis_state(m, 1, &bits)?;
        let (a0, a1) = (p0.amplitudes(), p1.amplitudes());
        let s = spec.coherence(&u);
        data += a0 * a0.adjoint() * c64(spec.lambda0(&u), 0.0);
        data += a1 * a1.adjoint() * c64(spec.lambda1(&u), 0.0);
        data += (a0 * a1.adjoint() - a1 * a0.adjoint()) * c64(0.0, s);
    }
    DensityMatrix::new(data, vec![2; m])
}

/// Local CNOT fan-out that maps each GHZ basis state to a Bell pair on the
/// two control qubits times a computational basis state on the rest.
///
/// The `w` side is qubits `0..cut` with control qubit 0; the `u` side is
/// qubits `cut..M` with control qubit `cut`. After the map, target qubit `i`
/// on either side holds `bit_i ⊕ bit_control`.
pub fn cnot_reduction_unitary(parties: usize, cut: usize) -> Result<UnitaryMatrix> {
    if parties < 2 || cut < 1 || cut > parties - 1 {
        return Err(Error::OutOfRange {
            name: "cut",
            value: cut as f64,
            expected: format!("[1, {}]", parties.saturating_sub(1)),
        });
    }
    let d = 1usize << parties;
    let mut u = CMatrix::zeros(d, d);
    for col in 0..d {
        let mut bits = index_bits(col, parties);
        for (lo, hi) in [(0, cut), (cut, parties)] {
            let control = bits[lo];
            for b in &mut bits[lo + 1..hi] {
                *b ^= control;
            }
        }
        u[(basis_index(&bits), col)] = c64(1.0, 0.0);
    }
    UnitaryMatrix::new(u)
}

/// Bell states in the order `(Φ⁺, Φ⁻, Ψ⁺, Ψ⁻)`, as columns.
pub fn bell_basis() -> CMatrix {
    let s = FRAC_1_SQRT_2;
    #[rustfmt::skip]
    let entries = [
        s,  s,  0., 0.,
        0., 0., s,  s,
        0., 0., s, -s,
        s, -s,  0., 0.,
    ];
    CMatrix::from_row_slice(4, 4, &entries.map(|x| c64(x, 0.0)))
}

fn require_two_qubits(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch(format!(
            "expected a two-qubit state, got dimension {}",
            rho.dim()
        )));
    }
    Ok(())
}

/// The state's matrix in the Bell basis.
pub fn in_bell_basis(rho: &DensityMatrix) -> Result<CMatrix> {
    require_two_qubits(rho)?;
    let b = bell_basis();
    Ok(b.adjoint() * rho.data() * b)
}

/// Largest off-diagonal magnitude in the Bell basis.
pub fn off_bell_diagonal(rho: &DensityMatrix) -> Result<f64> {
    let m = in_bell_basis(rho)?;
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    Ok(worst)
}

/// `¼(ρ + XXρXX + YYρYY + ZZρZZ)`.
pub fn bell_twirl(rho: &DensityMatrix) -> Result<DensityMatrix> {
    require_two_qubits(rho)?;
    let mut out = rho.data().clone();
    for p in [pauli_x(), pauli_y(), pauli_z()] {
        let pp = kron(&[&p, &p])?;
        out += &pp * rho.data() * &pp;
    }
    out *= c64(0.25, 0.0);
    DensityMatrix::new(out, rho.dims().to_vec())
}

/// IID source producing the per-round state.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceModel {
    /// `v·|GHZ⟩⟨GHZ| + (1 − v)·I/2^M`.
    HonestWerner { parties: usize, visibility: f64 },
    /// Arbitrary state; local dimensions may exceed two.
    Custom(DensityMatrix),
    /// Computational-basis product state `|bits⟩`.
    ClassicalDeterministic { bits: Vec<u8> },
}

impl SourceModel {
    pub fn parties(&self) -> usize {
        match self {
            Self::HonestWerner { parties, .. } => *parties,
            Self::Custom(rho) => rho.num_subsystems(),
            Self::ClassicalDeterministic { bits } => bits.len(),
        }
    }
}

pub fn make_source(model: &SourceModel) -> Result<DensityMatrix> {
    match model {
        SourceModel::HonestWerner {
            parties,
            visibility,
        } => {
            check_range("visibility", *visibility, 0.0, 1.0)?;
            let ghz = ghz_state(*parties)?.density();
            let mixed = DensityMatrix::maximally_mixed(vec![2; *parties]);
            mixed.mix(&ghz, *visibility)
        }
        SourceModel::Custom(rho) => Ok(rho.clone()),
        SourceModel::ClassicalDeterministic { bits } => {
            if bits.is_empty() {
                return Err(Error::InvalidParams("empty bit string".into()));
            }
            check_bits(bits)?;
            let mut amps = CVector::zeros(1 << bits.len());
            amps[basis_index(bits)] = c64(1.0, 0.0);
            Ok(PureState::new(amps, vec![2; bits.len()])?.density())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{identity, partial_trace};

    fn all_bits(len: usize) -> impl Iterator<Item = Vec<u8>> {
        (0..1usize << len).map(move |i| index_bits(i, len))
    }

    #[test]
    fn basis_state_examples() {
        let s = FRAC_1_SQRT_2;
        let bell = ghz_basis_state(2, 0, &[0]).unwrap();
        let expected = [s, 0., 0., s];
        for (a, e) in bell.amplitudes().iter().zip(expected) {
            assert!((a - c64(e, 0.)).norm() < 1e-15);
        }
        // (|001⟩ − |110⟩)/√2
        let psi = ghz_basis_state(3, 1, &[0, 1]).unwrap();
        assert!((psi.amplitudes()[1] - c64(s, 0.)).norm() < 1e-15);
        assert!((psi.amplitudes()[6] - c64(-s, 0.)).norm() < 1e-15);
        assert!(ghz_basis_state(3, 0, &[0]).is_err());
    }

    #[test]
    fn basis_is_orthonormal_and_complete() {
        for m in 2..=5 {
            let states: Vec<PureState> = [0u8, 1]
                .iter()
                .flat_map(|&v| all_bits(m - 1).map(move |u| ghz_basis_state(m, v, &u).unwrap()))
                .collect();
            let d = 1 << m;
            let mut sum = CMatrix::zeros(d, d);
            for (i, a) in states.iter().enumerate() {
                for (j, b) in states.iter().enumerate() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((a.inner(b) - c64(expected, 0.)).norm() < 1e-12);
                }
                sum += a.amplitudes() * a.amplitudes().adjoint();
            }
            assert!((sum - identity(d)).norm() < 1e-12);
        }
    }

    #[test]
    fn rank_d_ghz() {
        let bell = ghz_rank_d(2, 2).unwrap();
        assert!((bell.inner(&ghz_basis_state(2, 0, &[0]).unwrap()).norm() - 1.0).abs() < 1e-12);
        let g3 = ghz_rank_d(3, 2).unwrap();
        assert!((g3.inner(&ghz_basis_state(3, 0, &[0, 0]).unwrap()).norm() - 1.0).abs() < 1e-12);
        for (m, d) in [(2, 3), (3, 3), (3, 2), (4, 2)] {
            let rho = ghz_rank_d(m, d).unwrap().density();
            for party in 0..m {
                let r = partial_trace(&rho, &[party]).unwrap();
                assert!((r.data() - identity(d) * c64(1.0 / d as f64, 0.)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_state_examples() {
        let pure = ghz_diagonal_state(&GhzDiagonalSpec::pure_ghz(3)).unwrap();
        let expected = ghz_state(3).unwrap().density();
        assert!((pure.data() - expected.data()).norm() < 1e-12);

        let m = 3;
        let w = 1.0 / 8.0;
        let table: BTreeMap<String, f64> = all_bits(m - 1).map(|u| (bit_string(&u), w)).collect();
        let spec = GhzDiagonalSpec {
            parties: m,
            lambda0: table.clone(),
            lambda1: table,
            s: BTreeMap::new(),
        };
        let rho = ghz_diagonal_state(&spec).unwrap();
        assert!((rho.data() - identity(8) * c64(w, 0.)).norm() < 1e-12);
    }

    #[test]
    fn diagonal_state_rejects_invalid_specs() {
        let mut spec = GhzDiagonalSpec::pure_ghz(3);
        spec.lambda0.insert("00".into(), 0.5);
        assert!(ghz_diagonal_state(&spec).is_err());
        let mut spec = GhzDiagonalSpec::pure_ghz(3);
        spec.s.insert("00".into(), 0.1);
        assert!(ghz_diagonal_state(&spec).is_err());
        let mut spec = GhzDiagonalSpec::pure_ghz(3);
        spec.lambda1.insert("0".into(), 0.0);
        assert!(ghz_diagonal_state(&spec).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"M":2,"lambda0":{"0":0.6,"1":0.1},"lambda1":{"0":0.3},"s":{"0":0.2}}"#;
        let spec: GhzDiagonalSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.parties, 2);
        let back: GhzDiagonalSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, back);
        let rho = ghz_diagonal_state(&spec).unwrap();
        assert!(rho.eigenvalues()[0] >= -1e-10);
    }

    #[test]
    fn cnot_reduction_maps_basis_to_bell_pair() {
        for m in 2..=5 {
            for cut in 1..m {
                let u = cnot_reduction_unitary(m, cut).unwrap();
                assert!((u.data() * u.data().adjoint() - identity(1 << m)).norm() < 1e-12);
                for v in [0u8, 1] {
                    for rest in all_bits(m - 1) {
                        let psi = ghz_basis_state(m, v, &rest).unwrap();
                        let out = u.apply(&psi).unwrap();
                        // Expected: bits of |0,rest⟩ after fan-out, and its complement.
                        let head: Vec<u8> = std::iter::once(0).chain(rest.iter().copied()).collect();
                        let mut reduced = head.clone();
                        for (lo, hi) in [(0, cut), (cut, m)] {
                            let ctl = reduced[lo];
                            for b in &mut reduced[lo + 1..hi] {
                                *b ^= ctl;
                            }
                        }
                        let mut flipped = reduced.clone();
                        flipped[0] ^= 1;
                        flipped[cut] ^= 1;
                        let sign = if v == 0 { 1.0 } else { -1.0 };
                        let mut expected = CVector::zeros(1 << m);
                        expected[basis_index(&reduced)] += c64(FRAC_1_SQRT_2, 0.);
                        expected[basis_index(&flipped)] += c64(sign * FRAC_1_SQRT_2, 0.);
                        assert!((out.amplitudes() - expected).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn cnot_reduction_edge_cases() {
        let u = cnot_reduction_unitary(2, 1).unwrap();
        assert!((u.data() - identity(4)).norm() < 1e-15);
        assert!(cnot_reduction_unitary(3, 0).is_err());
        assert!(cnot_reduction_unitary(3, 3).is_err());
        // M=3, cut=1: (|001⟩+|110⟩)/√2 -> Bell pair on qubits (0,1) ⊗ |1⟩
        let u = cnot_reduction_unitary(3, 1).unwrap();
        let out = u.apply(&ghz_basis_state(3, 0, &[0, 1]).unwrap()).unwrap();
        let rho = out.density();
        let pair = partial_trace(&rho, &[0, 1]).unwrap();
        let bell = ghz_basis_state(2, 0, &[0]).unwrap().density();
        assert!((pair.data() - bell.data()).norm() < 1e-12);
        let last = partial_trace(&rho, &[2]).unwrap();
        assert!((last.data()[(1, 1)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn twirl_examples() {
        let zero = make_source(&SourceModel::ClassicalDeterministic { bits: vec![0, 0] }).unwrap();
        let t = bell_twirl(&zero).unwrap();
        let m = in_bell_basis(&t).unwrap();
        let expected = [0.5, 0.5, 0.0, 0.0];
        for i in 0..4 {
            assert!((m[(i, i)].re - expected[i]).abs() < 1e-12);
        }
        assert!(off_bell_diagonal(&t).unwrap() < 1e-12);

        let spec = GhzDiagonalSpec {
            parties: 2,
            lambda0: [("0".to_string(), 0.4), ("1".to_string(), 0.3)].into(),
            lambda1: [("0".to_string(), 0.2), ("1".to_string(), 0.1)].into(),
            s: BTreeMap::new(),
        };
        let bell_diag = ghz_diagonal_state(&spec).unwrap();
        let t = bell_twirl(&bell_diag).unwrap();
        assert!((t.data() - bell_diag.data()).norm() < 1e-12);
        assert!(bell_twirl(&DensityMatrix::maximally_mixed(vec![2])).is_err());
    }

    #[test]
    fn twirl_preserves_trace_on_random_inputs() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let rho = crate::qmath::random::density_matrix(&mut rng, &[2, 2]);
            let t = bell_twirl(&rho).unwrap();
            assert!((t.data().trace().re - 1.0).abs() < 1e-12);
            assert!(off_bell_diagonal(&t).unwrap() < 1e-12);
        }
    }

    #[test]
    fn reduction_then_twirl_gives_bell_diagonal_control_pair() {
        let m = 4;
        let keys: Vec<String> = all_bits(m - 1).map(|u| bit_string(&u)).collect();
        let weights: Vec<f64> = (1..=16).map(|k| k as f64).collect();
        let total: f64 = weights.iter().sum();
        let mut spec = GhzDiagonalSpec {
            parties: m,
            lambda0: BTreeMap::new(),
            lambda1: BTreeMap::new(),
            s: BTreeMap::new(),
        };
        for (i, key) in keys.iter().enumerate() {
            let (l0, l1) = (weights[2 * i] / total, weights[2 * i + 1] / total);
            spec.lambda0.insert(key.clone(), l0);
            spec.lambda1.insert(key.clone(), l1);
            spec.s.insert(key.clone(), 0.9 * (l0 * l1).sqrt());
        }
        let rho = ghz_diagonal_state(&spec).unwrap();
        for cut in 1..m {
            let u = cnot_reduction_unitary(m, cut).unwrap();
            let reduced = u.conjugate(&rho).unwrap();
            let pair = partial_trace(&reduced, &[0, cut]).unwrap();
            let twirled = bell_twirl(&pair).unwrap();
            assert!(off_bell_diagonal(&twirled).unwrap() < 1e-12);
        }
    }

    #[test]
    fn werner_source() {
        let pure = make_source(&SourceModel::HonestWerner { parties: 3, visibility: 1.0 }).unwrap();
        assert!((pure.data() - ghz_state(3).unwrap().density().data()).norm() < 1e-12);
        let mixed = make_source(&SourceModel::HonestWerner { parties: 3, visibility: 0.0 }).unwrap();
        assert!((mixed.data() - identity(8) * c64(0.125, 0.)).norm() < 1e-12);
        let noisy = make_source(&SourceModel::HonestWerner { parties: 3, visibility: 0.9 }).unwrap();
        let ev = noisy.eigenvalues();
        for v in &ev[..7] {
            assert!((v - 0.1 / 8.0).abs() < 1e-12);
        }
        assert!((ev[7] - (0.9 + 0.1 / 8.0)).abs() < 1e-12);
        for k in 0..=20 {
            let v = k as f64 / 20.0;
            let rho = make_source(&SourceModel::HonestWerner { parties: 4, visibility: v }).unwrap();
            assert!(DensityMatrix::new(rho.data().clone(), rho.dims().to_vec()).is_ok());
        }
        assert!(make_source(&SourceModel::HonestWerner { parties: 3, visibility: 1.2 }).is_err());
    }
}
