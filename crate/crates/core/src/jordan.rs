//! Jordan decomposition of a pair of binary observables into blocks of
//! dimension at most two, and the block-projection instrument that reduces
//! every party to a qubit.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::mabk::{BinaryObservable, ObservablePair};
use crate::qmath::{
    c64, hermitian_eigen, identity, pauli_x, pauli_y, CMatrix, CVector, DensityMatrix,
    UnitaryMatrix,
};

/// Eigenvalues of the anticommutator closer than this share a block angle.
const CLUSTER_TOL: f64 = 1e-7;

/// Smallest outcome probability accepted by the instrument.
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-14;

/// One invariant block. For two-dimensional blocks the columns of
/// `vectors` form a basis in which `O0 = σ_y` and
/// `O1 = cos α σ_y + sin α σ_x`; one-dimensional blocks have `α ∈ {0, π}`.
#[derive(Debug, Clone)]
pub struct JordanBlock {
    pub projector: CMatrix,
    pub angle: f64,
    pub block_dim: usize,
    pub vectors: CMatrix,
    /// Eigenvalue of `O0` on a one-dimensional block.
    pub o0_sign: Option<f64>,
}

/// Qubit register used by the instrument: a two-dimensional block, two
/// one-dimensional blocks with the same angle and opposite `O0` sign, or a
/// single unpaired one-dimensional block padded with a zero column.
#[derive(Debug, Clone)]
pub struct QubitRegister {
    pub projector: CMatrix,
    /// `d × 2` map from the register into the party's space.
    pub isometry: CMatrix,
    pub angle: f64,
    observables: ObservablePair,
}

impl QubitRegister {
    /// The party's observables as seen inside the register.
    pub fn observables(&self) -> &ObservablePair {
        &self.observables
    }
}

#[derive(Debug, Clone)]
pub struct JordanDecomposition {
    pub blocks: Vec<JordanBlock>,
    pub basis: UnitaryMatrix,
    pub registers: Vec<QubitRegister>,
}

impl JordanDecomposition {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Block angles in block order.
    pub fn angles(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.angle).collect()
    }
}

fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// `(v, ŵ) ↦ ((v − iŵ)/√2, (−iv + ŵ)/√2)`, turning `σ_z → σ_y` and
/// keeping `σ_x`.
fn block_basis(v: &CVector, w: &CVector) -> (CVector, CVector) {
    let s = c64(FRAC_1_SQRT_2, 0.0);
    let i = c64(0.0, 1.0);
    ((v - w * i) * s, (w - v * i) * s)
}

fn qubit_form(angle: f64) -> ObservablePair {
    let o0 = pauli_y();
    let o1 = pauli_y() * c64(angle.cos(), 0.0) + pauli_x() * c64(angle.sin(), 0.0);
    ObservablePair::new(
        BinaryObservable::new(o0).expect("σ_y"),
        BinaryObservable::new(o1).expect("unit Bloch vector"),
    )
    .expect("qubit pair")
}

fn constant_pair(s0: f64, s1: f64) -> ObservablePair {
    let o0 = BinaryObservable::new(identity(2) * c64(s0, 0.0)).expect("±I");
    let o1 = BinaryObservable::new(identity(2) * c64(s1, 0.0)).expect("±I");
    ObservablePair::new(o0, o1).expect("qubit pair")
}

fn column_matrix(cols: &[CVector], rows: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols.len());
    for (k, c) in cols.iter().enumerate() {
        m.set_column(k, c);
    }
    m
}

/// Joint block diagonalization of `(O0, O1)`.
///
/// Blocks come in ascending angle; within a one-dimensional cluster the
/// `O0 = +1` vectors precede the `O0 = −1` ones.
pub fn jordan_decompose(pair: &ObservablePair) -> Result<JordanDecomposition> {
    let (o0, o1) = (pair.o0.matrix(), pair.o1.matrix());
    let d = pair.dim();
    let h = (o0 * o1 + o1 * o0) * c64(0.5, 0.0);
    let (vals, vecs) = hermitian_eigen(&h);

    // Clusters of equal eigenvalue, largest first so that angles ascend.
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for idx in (0..d).rev() {
        match clusters.last_mut() {
            Some(c) if (vals[c[0]] - vals[idx]).abs() < CLUSTER_TOL => c.push(idx),
            _ => clusters.push(vec![idx]),
        }
    }

    let mut blocks = Vec::new();
    let mut registers = Vec::new();
    let mut columns: Vec<CVector> = Vec::with_capacity(d);
    for cluster in clusters {
        let c = cluster.iter().map(|&i| vals[i]).sum::<f64>() / cluster.len() as f64;
        let q = column_matrix(
            &cluster.iter().map(|&i| vecs.column(i).into_owned()).collect::<Vec<_>>(),
            d,
        );
        let (signs, local) = hermitian_eigen(&(q.adjoint() * o0 * &q));
        let plus: Vec<CVector> = (0..signs.len())
            .rev()
            .filter(|&k| signs[k] > 0.0)
            .map(|k| &q * local.column(k))
            .collect();
        let minus: Vec<CVector> = (0..signs.len())
            .filter(|&k| signs[k] < 0.0)
            .map(|k| &q * local.column(k))
            .collect();

        if 1.0 - c.abs() < CLUSTER_TOL {
            let angle = if c > 0.0 { 0.0 } else { PI };
            let c_sign = c.signum();
            for (v, s0) in plus.iter().map(|v| (v, 1.0)).chain(minus.iter().map(|v| (v, -1.0))) {
                blocks.push(JordanBlock {
                    projector: outer(v),
                    angle,
                    block_dim: 1,
                    vectors: column_matrix(std::slice::from_ref(v), d),
                    o0_sign: Some(s0),
                });
                columns.push(v.clone());
            }
            let paired = plus.len().min(minus.len());
            for k in 0..paired {
                let (e1, e2) = block_basis(&plus[k], &minus[k]);
                let iso = column_matrix(&[e1, e2], d);
                registers.push(QubitRegister {
                    projector: &iso * iso.adjoint(),
                    isometry: iso,
                    angle,
                    observables: qubit_form(angle),
                });
            }
            let (rest, s0) = if plus.len() > paired {
                (&plus[paired..], 1.0)
            } else {
                (&minus[paired..], -1.0)
            };
            for v in rest {
                let iso = column_matrix(&[v.clone(), CVector::zeros(d)], d);
                registers.push(QubitRegister {
                    projector: outer(v),
                    isometry: iso,
                    angle,
                    observables: constant_pair(s0, s0 * c_sign),
                });
            }
        } else {
            if plus.len() != minus.len() {
                return Err(Error::InvalidObservable(format!(
                    "cluster at cos α = {c} has {} / {} O0 eigenvectors",
                    plus.len(),
                    minus.len()
                )));
            }
            for v in &plus {
                let r = o1 * v - v * c64(c, 0.0);
                let s = r.norm();
                let w = r / c64(s, 0.0);
                let angle = s.atan2(c);
                let (e1, e2) = block_basis(v, &w);
                let iso = column_matrix(&[e1.clone(), e2.clone()], d);
                let projector = &iso * iso.adjoint();
                blocks.push(JordanBlock {
                    projector: projector.clone(),
                    angle,
                    block_dim: 2,
                    vectors: iso.clone(),
                    o0_sign: None,
                });
                registers.push(QubitRegister {
                    projector,
                    isometry: iso,
                    angle,
                    observables: qubit_form(angle),
                });
                columns.push(e1);
                columns.push(e2);
            }
        }
    }
    let basis = UnitaryMatrix::new(column_matrix(&columns, d))?;
    Ok(JordanDecomposition {
        blocks,
        basis,
        registers,
    })
}

fn check_layout(rho: &DensityMatrix, decomps: &[JordanDecomposition]) -> Result<()> {
    let dims: Vec<usize> = decomps.iter().map(JordanDecomposition::dim).collect();
    if rho.dims() != dims.as_slice() {
        return Err(Error::DimensionMismatch(format!(
            "state dims {:?} vs decomposition dims {dims:?}",
            rho.dims()
        )));
    }
    Ok(())
}

fn joint_isometry(decomps: &[JordanDecomposition], outcome: &[usize]) -> Result<CMatrix> {
    if outcome.len() != decomps.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} outcomes for {} parties",
            outcome.len(),
            decomps.len()
        )));
    }
    let mut isos = Vec::with_capacity(outcome.len());
    for (dec, &r) in decomps.iter().zip(outcome) {
        let reg = dec.registers.get(r).ok_or_else(|| Error::OutOfRange {
            name: "register",
            value: r as f64,
            expected: format!("[0, {})", dec.registers.len()),
        })?;
        isos.push(&reg.isometry);
    }
    Ok(kron_rect(&isos))
}

fn kron_rect(factors: &[&CMatrix]) -> CMatrix {
    factors[1..]
        .iter()
        .fold(factors[0].clone(), |acc, f| acc.kronecker(*f))
}

/// Projects every party onto the requested register and compresses the
/// result to `M` qubits. Returns the normalized state and the outcome
/// probability.
pub fn apply_block_projection(
    rho: &DensityMatrix,
    decomps: &[JordanDecomposition],
    outcome: &[usize],
) -> Result<(DensityMatrix, f64)> {
    check_layout(rho, decomps)?;
    let v = joint_isometry(decomps, outcome)?;
    let compressed = v.adjoint() * rho.data() * &v;
    let p = compressed.trace().re;
    if p <= MIN_OUTCOME_PROBABILITY {
        return Err(Error::ZeroProbability(p));
    }
    let state = DensityMatrix::new(compressed / c64(p, 0.0), vec![2; decomps.len()])?;
    Ok((state, p))
}

/// Probability of every register tuple, last party varying fastest.
pub fn block_distribution(rho: &DensityMatrix, decomps: &[JordanDecomposition]) -> Result<Vec<f64>> {
    check_layout(rho, decomps)?;
    let counts: Vec<usize> = decomps.iter().map(|d| d.registers.len()).collect();
    let total: usize = counts.iter().product();
    let mut probs = Vec::with_capacity(total);
    let mut tuple = vec![0usize; counts.len()];
    for _ in 0..total {
        let v = joint_isometry(decomps, &tuple)?;
        probs.push((v.adjoint() * rho.data() * &v).trace().re.max(0.0));
        for k in (0..counts.len()).rev() {
            tuple[k] += 1;
            if tuple[k] < counts[k] {
                break;
            }
            tuple[k] = 0;
        }
    }
    Ok(probs)
}

/// `Σ_d Π_d ρ Π_d` with the outcome label discarded.
pub fn dephase_blocks(rho: &DensityMatrix, decomps: &[JordanDecomposition]) -> Result<DensityMatrix> {
    check_layout(rho, decomps)?;
    let mut data = rho.data().clone();
    let dims = rho.dims().to_vec();
    for (k, dec) in decomps.iter().enumerate() {
        let mut next = CMatrix::zeros(data.nrows(), data.ncols());
        for reg in &dec.registers {
            let left = crate::qmath::apply_local_left(&data, &dims, k, &reg.projector);
            let both = crate::qmath::apply_local_left(&left.adjoint(), &dims, k, &reg.projector);
            next += both.adjoint();
        }
        data = next;
    }
    DensityMatrix::new(data, dims)
}
