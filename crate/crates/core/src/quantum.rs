//! Multi-qubit pure states and density operators with named subsystems.
//!
//! States carry an ordered factorisation (label, dimension) so that protocol
//! code can address "the qubit V1 sent for round i" or "M2's half of pair i"
//! without tracking raw tensor indices. The first subsystem is the most
//! significant index, matching the Kronecker convention in [`crate::linalg`].
//!
//! The toolbox covers exactly what the protocols and certificates need:
//! BB84 encoding, projective measurements in an arbitrary orthonormal basis,
//! POVM sampling, Bell-pair creation and measurement (the teleportation
//! primitive), partial trace, and the positive-semidefinite operator
//! dominance check `A ≥ B` that underpins every entropy certificate.
//!
//! Convention for Bell measurement outcomes: outcome `(a, b)` means the
//! distant half of the consumed pair now holds `X^a Z^b` applied to the
//! teleported state, so applying `X^a Z^b` again restores it up to a global
//! phase.

use crate::linalg::{c64, vec_inner, vec_norm, ComplexMatrix, HermitianEigen, LinalgError};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/* Construction-time validation slack for norms, traces and positivity. */
pub const STATE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("subsystem label {0:?} appears on both factors")]
    LabelCollision(String),
    #[error("unknown subsystem label {0:?}")]
    UnknownLabel(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state is not normalised (deviation {0:.3e})")]
    NotNormalized(f64),
    #[error("operator is not a density operator: {0}")]
    NotAState(String),
    #[error("invalid POVM: {0}")]
    InvalidPovm(String),
    #[error("invalid measurement basis: {0}")]
    InvalidBasis(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, QuantumError>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
}

impl Subsystem {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self { label: label.into(), dim }
    }

    pub fn qubit(label: impl Into<String>) -> Self {
        Self::new(label, 2)
    }
}

fn total_dim(parts: &[Subsystem]) -> usize {
    parts.iter().map(|p| p.dim).product()
}

/* Stride of each subsystem position in the flattened index. */
fn strides(parts: &[Subsystem]) -> Vec<usize> {
    let mut s = vec![1usize; parts.len()];
    for i in (0..parts.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * parts[i + 1].dim;
    }
    s
}

fn check_unique_labels(parts: &[Subsystem]) -> Result<()> {
    for (i, p) in parts.iter().enumerate() {
        if parts[i + 1..].iter().any(|q| q.label == p.label) {
            return Err(QuantumError::LabelCollision(p.label.clone()));
        }
    }
    Ok(())
}

/// Pure state as a flat amplitude vector over named subsystems.
#[derive(Clone, Debug)]
pub struct PureState {
    amps: Vec<Complex64>,
    parts: Vec<Subsystem>,
}

impl PureState {
    pub fn new(amps: Vec<Complex64>, parts: Vec<Subsystem>) -> Result<Self> {
        if total_dim(&parts) != amps.len() {
            return Err(QuantumError::DimensionMismatch(format!(
                "{} amplitudes for factorisation of dimension {}",
                amps.len(),
                total_dim(&parts)
            )));
        }
        check_unique_labels(&parts)?;
        let norm = vec_norm(&amps);
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(QuantumError::NotNormalized((norm - 1.0).abs()));
        }
        let mut amps = amps;
        if norm != 1.0 {
            for a in amps.iter_mut() {
                *a /= norm;
            }
        }
        Ok(Self { amps, parts })
    }

    pub fn qubit(label: impl Into<String>, a0: Complex64, a1: Complex64) -> Result<Self> {
        Self::new(vec![a0, a1], vec![Subsystem::qubit(label)])
    }

    /// Computational basis state |k⟩ of a d-dimensional subsystem.
    pub fn basis_state(label: impl Into<String>, dim: usize, k: usize) -> Self {
        let mut amps = vec![c64(0.0, 0.0); dim];
        amps[k] = c64(1.0, 0.0);
        Self { amps, parts: vec![Subsystem::new(label, dim)] }
    }

    /// BB84 encoding H^θ|x⟩: computational basis for θ = 0, Hadamard basis
    /// for θ = 1.
    pub fn bb84_encode(label: impl Into<String>, x: u8, theta: u8) -> Self {
        assert!(x <= 1 && theta <= 1, "bb84_encode expects bits");
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let amps = match (theta, x) {
            (0, 0) => vec![c64(1.0, 0.0), c64(0.0, 0.0)],
            (0, 1) => vec![c64(0.0, 0.0), c64(1.0, 0.0)],
            (1, 0) => vec![c64(h, 0.0), c64(h, 0.0)],
            (1, 1) => vec![c64(h, 0.0), c64(-h, 0.0)],
            _ => unreachable!(),
        };
        Self { amps, parts: vec![Subsystem::qubit(label)] }
    }

    /// Maximally entangled pair (|00⟩ + |11⟩)/√2 over two fresh qubit labels.
    pub fn bell_pair(label_a: impl Into<String>, label_b: impl Into<String>) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let amps = vec![c64(h, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(h, 0.0)];
        let parts = vec![Subsystem::qubit(label_a), Subsystem::qubit(label_b)];
        check_unique_labels(&parts)?;
        Ok(Self { amps, parts })
    }

    /// Haar-random pure state over the given factorisation.
    pub fn haar_random(parts: Vec<Subsystem>, rng: &mut impl Rng) -> Result<Self> {
        check_unique_labels(&parts)?;
        let d = total_dim(&parts);
        // Normalised vector of iid complex Gaussians (Box-Muller).
        let mut amps = Vec::with_capacity(d);
        for _ in 0..d {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            amps.push(c64(
                r * (2.0 * std::f64::consts::PI * u2).cos(),
                r * (2.0 * std::f64::consts::PI * u2).sin(),
            ));
        }
        let norm = vec_norm(&amps);
        for a in amps.iter_mut() {
            *a /= norm;
        }
        Ok(Self { amps, parts })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn parts(&self) -> &[Subsystem] {
        &self.parts
    }

    pub fn labels(&self) -> Vec<&str> {
        self.parts.iter().map(|p| p.label.as_str()).collect()
    }

    fn position_of(&self, label: &str) -> Result<usize> {
        self.parts
            .iter()
            .position(|p| p.label == label)
            .ok_or_else(|| QuantumError::UnknownLabel(label.to_string()))
    }

    /// Tensor product; fails if any label appears on both factors.
    pub fn tensor(&self, rhs: &Self) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.extend(rhs.parts.iter().cloned());
        check_unique_labels(&parts)?;
        let mut amps = Vec::with_capacity(self.dim() * rhs.dim());
        for a in &self.amps {
            for b in &rhs.amps {
                amps.push(a * b);
            }
        }
        Ok(Self { amps, parts })
    }

    /// Reorder subsystems. `order` must list every label exactly once.
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        if order.len() != self.parts.len() {
            return Err(QuantumError::DimensionMismatch(format!(
                "permutation lists {} labels, state has {}",
                order.len(),
                self.parts.len()
            )));
        }
        let positions: Vec<usize> =
            order.iter().map(|l| self.position_of(l)).collect::<Result<_>>()?;
        {
            let mut seen = vec![false; positions.len()];
            for &p in &positions {
                if seen[p] {
                    return Err(QuantumError::LabelCollision(self.parts[p].label.clone()));
                }
                seen[p] = true;
            }
        }
        let new_parts: Vec<Subsystem> = positions.iter().map(|&p| self.parts[p].clone()).collect();
        let old_strides = strides(&self.parts);
        let new_strides = strides(&new_parts);
        let mut amps = vec![c64(0.0, 0.0); self.dim()];
        for (new_idx, slot) in amps.iter_mut().enumerate() {
            let mut old_idx = 0;
            for (k, &p) in positions.iter().enumerate() {
                let comp = (new_idx / new_strides[k]) % new_parts[k].dim;
                old_idx += comp * old_strides[p];
            }
            *slot = self.amps[old_idx];
        }
        Ok(Self { amps, parts: new_parts })
    }

    /// ⟨self|rhs⟩. Factorisations must list the same labels in the same order.
    pub fn inner(&self, rhs: &Self) -> Result<Complex64> {
        if self.parts != rhs.parts {
            return Err(QuantumError::DimensionMismatch(
                "inner product between differently factored states".into(),
            ));
        }
        Ok(vec_inner(&self.amps, &rhs.amps))
    }

    pub fn fidelity(&self, rhs: &Self) -> Result<f64> {
        Ok(self.inner(rhs)?.norm_sqr())
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            mat: ComplexMatrix::outer(&self.amps),
            parts: self.parts.clone(),
        }
    }

    pub fn reduced(&self, keep: &[&str]) -> Result<DensityOperator> {
        self.to_density().partial_trace(keep)
    }

    /// Apply an operator on the listed subsystems (identity elsewhere).
    /// `op` acts on the tensor slot ordered exactly as `labels`.
    pub fn apply_on(&self, labels: &[&str], op: &ComplexMatrix) -> Result<Self> {
        let positions: Vec<usize> =
            labels.iter().map(|l| self.position_of(l)).collect::<Result<_>>()?;
        let sub_dims: Vec<usize> = positions.iter().map(|&p| self.parts[p].dim).collect();
        let d_sub: usize = sub_dims.iter().product();
        if op.rows() != d_sub || op.cols() != d_sub {
            return Err(QuantumError::DimensionMismatch(format!(
                "operator is {}x{}, target slot has dimension {}",
                op.rows(),
                op.cols(),
                d_sub
            )));
        }
        let st = strides(&self.parts);
        // Flat offset of each sub-index (in the listed label order).
        let sub_offsets: Vec<usize> = (0..d_sub)
            .map(|s| {
                let mut rem = s;
                let mut off = 0;
                for (k, &d) in sub_dims.iter().enumerate().rev() {
                    off += (rem % d) * st[positions[k]];
                    rem /= d;
                }
                off
            })
            .collect();
        // Offsets of the untouched complement.
        let mut rest_offsets = vec![0usize];
        for (p, part) in self.parts.iter().enumerate() {
            if positions.contains(&p) {
                continue;
            }
            let mut next = Vec::with_capacity(rest_offsets.len() * part.dim);
            for &base in &rest_offsets {
                for k in 0..part.dim {
                    next.push(base + k * st[p]);
                }
            }
            rest_offsets = next;
        }
        let mut amps = vec![c64(0.0, 0.0); self.dim()];
        for &rest in &rest_offsets {
            for (r, &off_r) in sub_offsets.iter().enumerate() {
                let mut acc = c64(0.0, 0.0);
                for (c, &off_c) in sub_offsets.iter().enumerate() {
                    let w = op[(r, c)];
                    if w.norm_sqr() != 0.0 {
                        acc += w * self.amps[rest + off_c];
                    }
                }
                amps[rest + off_r] = acc;
            }
        }
        Ok(Self { amps, parts: self.parts.clone() })
    }

    /// Outcome probabilities for a projective measurement of one subsystem in
    /// the orthonormal basis given by the columns of `basis`.
    pub fn basis_probabilities(&self, label: &str, basis: &ComplexMatrix) -> Result<Vec<f64>> {
        let pos = self.position_of(label)?;
        let d = self.parts[pos].dim;
        if basis.rows() != d || basis.cols() != d {
            return Err(QuantumError::InvalidBasis(format!(
                "basis is {}x{} for a subsystem of dimension {}",
                basis.rows(),
                basis.cols(),
                d
            )));
        }
        let rotated = self.apply_on(&[label], &basis.dagger())?;
        let st = strides(&self.parts);
        let stride = st[pos];
        let outer = self.dim() / (d * stride);
        let mut probs = vec![0.0; d];
        for pre in 0..outer {
            for post in 0..stride {
                let base = pre * d * stride + post;
                for (k, pk) in probs.iter_mut().enumerate() {
                    *pk += rotated.amps[base + k * stride].norm_sqr();
                }
            }
        }
        Ok(probs)
    }

    /// Projective measurement of one subsystem in the orthonormal basis given
    /// by the columns of `basis`. Returns the outcome index and the collapsed
    /// state (the measured subsystem is left in the outcome basis vector).
    pub fn measure_in_basis(
        &self,
        label: &str,
        basis: &ComplexMatrix,
        rng: &mut impl Rng,
    ) -> Result<(usize, Self)> {
        let probs = self.basis_probabilities(label, basis)?;
        let outcome = sample_index(&probs, rng);
        let pos = self.position_of(label)?;
        let d = self.parts[pos].dim;
        let rotated = self.apply_on(&[label], &basis.dagger())?;
        let st = strides(&self.parts);
        let stride = st[pos];
        let outer = self.dim() / (d * stride);
        let p = probs[outcome].sqrt();
        let mut amps = vec![c64(0.0, 0.0); self.dim()];
        for pre in 0..outer {
            for post in 0..stride {
                let base = pre * d * stride + post;
                let kept = rotated.amps[base + outcome * stride] / p;
                for k in 0..d {
                    amps[base + k * stride] = basis[(k, outcome)] * kept;
                }
            }
        }
        Ok((outcome, Self { amps, parts: self.parts.clone() }))
    }

    /// Measure a qubit in the BB84 basis θ (0 = computational, 1 = Hadamard).
    pub fn measure_qubit(
        &self,
        label: &str,
        theta: u8,
        rng: &mut impl Rng,
    ) -> Result<(u8, Self)> {
        let (k, post) = self.measure_in_basis(label, &bb84_basis(theta), rng)?;
        Ok((k as u8, post))
    }

    /// Like [`Self::measure_in_basis`], but drops the measured subsystem from
    /// the post-measurement state. After a projective read-out it sits in a
    /// known basis vector and carries no further information, so protocols
    /// that consume qubits one at a time keep their states small this way.
    pub fn measure_in_basis_removing(
        &self,
        label: &str,
        basis: &ComplexMatrix,
        rng: &mut impl Rng,
    ) -> Result<(usize, Self)> {
        let probs = self.basis_probabilities(label, basis)?;
        let outcome = sample_index(&probs, rng);
        let pos = self.position_of(label)?;
        let d = self.parts[pos].dim;
        let rotated = self.apply_on(&[label], &basis.dagger())?;
        let st = strides(&self.parts);
        let stride = st[pos];
        let outer = self.dim() / (d * stride);
        let p = probs[outcome].sqrt();
        let mut amps = Vec::with_capacity(self.dim() / d);
        for pre in 0..outer {
            for post in 0..stride {
                let base = pre * d * stride + post;
                amps.push(rotated.amps[base + outcome * stride] / p);
            }
        }
        let parts: Vec<Subsystem> =
            self.parts.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, s)| s.clone()).collect();
        Ok((outcome, Self { amps, parts }))
    }

    /// Sample a POVM over the full state. The post-measurement state applies
    /// the chosen element and renormalises, which is the standard collapse
    /// when the element is a projector; for non-projective elements only the
    /// outcome distribution is physically meaningful here.
    pub fn measure_povm(&self, povm: &Povm, rng: &mut impl Rng) -> Result<(usize, Self)> {
        if povm.dim() != self.dim() {
            return Err(QuantumError::DimensionMismatch(format!(
                "POVM dimension {} vs state dimension {}",
                povm.dim(),
                self.dim()
            )));
        }
        let probs: Vec<f64> = povm
            .elements()
            .iter()
            .map(|e| vec_inner(&self.amps, &e.apply(&self.amps)).re.max(0.0))
            .collect();
        let outcome = sample_index(&probs, rng);
        let mut amps = povm.elements()[outcome].apply(&self.amps);
        let norm = vec_norm(&amps);
        for a in amps.iter_mut() {
            *a /= norm;
        }
        Ok((outcome, Self { amps, parts: self.parts.clone() }))
    }

    /// Bell measurement of two qubit subsystems. Returns `(a, b)`, meaning
    /// the far half of any pair entangled with the measured qubits now holds
    /// `X^a Z^b` times the teleported state, and the remainder state with the
    /// two measured qubits removed (a trivial one-dimensional state if nothing
    /// remains).
    pub fn bell_measure(
        &self,
        label_1: &str,
        label_2: &str,
        rng: &mut impl Rng,
    ) -> Result<(u8, u8, Self)> {
        let p1 = self.position_of(label_1)?;
        let p2 = self.position_of(label_2)?;
        if self.parts[p1].dim != 2 || self.parts[p2].dim != 2 {
            return Err(QuantumError::InvalidBasis(
                "Bell measurement requires qubit subsystems".into(),
            ));
        }
        // Front-load the measured pair, keep the rest in original order.
        let mut order: Vec<&str> = vec![label_1, label_2];
        order.extend(
            self.parts
                .iter()
                .map(|p| p.label.as_str())
                .filter(|l| *l != label_1 && *l != label_2),
        );
        let arranged = self.permute(&order)?;
        let d_rest = arranged.dim() / 4;
        // Amplitudes in the Bell basis of the front pair.
        let mut branch = vec![vec![c64(0.0, 0.0); d_rest]; 4];
        let mut probs = [0.0f64; 4];
        for ab in 0..4usize {
            let bell = bell_vector((ab >> 1) as u8, (ab & 1) as u8);
            for r in 0..d_rest {
                let mut acc = c64(0.0, 0.0);
                for z in 0..4 {
                    acc += bell[z].conj() * arranged.amps[z * d_rest + r];
                }
                probs[ab] += acc.norm_sqr();
                branch[ab][r] = acc;
            }
        }
        let outcome = sample_index(&probs, rng);
        let (a, b) = ((outcome >> 1) as u8, (outcome & 1) as u8);
        let norm = probs[outcome].sqrt();
        let amps: Vec<Complex64> = branch[outcome].iter().map(|z| z / norm).collect();
        let parts: Vec<Subsystem> = arranged.parts[2..].to_vec();
        Ok((a, b, Self { amps, parts }))
    }

    /// Apply the teleportation correction X^a Z^b to one qubit.
    pub fn pauli_correct(&self, label: &str, a: u8, b: u8) -> Result<Self> {
        let mut op = ComplexMatrix::identity(2);
        if b == 1 {
            op = pauli_z().mul(&op);
        }
        if a == 1 {
            op = pauli_x().mul(&op);
        }
        self.apply_on(&[label], &op)
    }
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        if r < p {
            return i;
        }
        r -= p;
    }
    last_nonzero
}

/// Measurement basis for BB84: columns of the returned matrix are the basis
/// vectors (identity for θ = 0, Hadamard for θ = 1).
pub fn bb84_basis(theta: u8) -> ComplexMatrix {
    match theta {
        0 => ComplexMatrix::identity(2),
        1 => hadamard(),
        other => panic!("BB84 basis label must be 0 or 1, got {other}"),
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

pub fn hadamard() -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_real_rows(&[&[h, h], &[h, -h]])
}

/// The four Bell vectors indexed by the (a, b) outcome convention:
/// (0,0) → Φ⁺, (0,1) → Φ⁻, (1,0) → Ψ⁺, (1,1) → Ψ⁻.
pub fn bell_vector(a: u8, b: u8) -> Vec<Complex64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (z, o) = (c64(0.0, 0.0), c64(h, 0.0));
    let neg = c64(-h, 0.0);
    match (a, b) {
        (0, 0) => vec![o, z, z, o],
        (0, 1) => vec![o, z, z, neg],
        (1, 0) => vec![z, o, o, z],
        (1, 1) => vec![z, o, neg, z],
        _ => panic!("Bell outcome bits must be 0 or 1"),
    }
}

pub fn bell_projector(a: u8, b: u8) -> ComplexMatrix {
    ComplexMatrix::outer(&bell_vector(a, b))
}

/// Density operator over named subsystems.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    mat: ComplexMatrix,
    parts: Vec<Subsystem>,
}

impl DensityOperator {
    /// Validates shape, Hermiticity, unit trace and positivity (all within
    /// [`STATE_TOL`]); the trace is then normalised exactly.
    pub fn new(mat: ComplexMatrix, parts: Vec<Subsystem>) -> Result<Self> {
        if !mat.is_square() || mat.rows() != total_dim(&parts) {
            return Err(QuantumError::DimensionMismatch(format!(
                "{}x{} matrix for factorisation of dimension {}",
                mat.rows(),
                mat.cols(),
                total_dim(&parts)
            )));
        }
        check_unique_labels(&parts)?;
        let dev = mat.hermiticity_error();
        if dev > STATE_TOL {
            return Err(QuantumError::NotAState(format!("not Hermitian (deviation {dev:.3e})")));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(QuantumError::NotAState(format!("trace is {tr} instead of 1")));
        }
        if !is_psd_within(&mat, STATE_TOL) {
            return Err(QuantumError::NotAState("not positive semidefinite".into()));
        }
        Ok(Self { mat: mat.scale(1.0 / tr.re), parts })
    }

    pub fn maximally_mixed(label: impl Into<String>, dim: usize) -> Self {
        Self {
            mat: ComplexMatrix::identity(dim).scale(1.0 / dim as f64),
            parts: vec![Subsystem::new(label, dim)],
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn parts(&self) -> &[Subsystem] {
        &self.parts
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn tensor(&self, rhs: &Self) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.extend(rhs.parts.iter().cloned());
        check_unique_labels(&parts)?;
        Ok(Self { mat: self.mat.kron(&rhs.mat), parts })
    }

    /// Trace out every subsystem not listed in `keep`. The kept subsystems
    /// stay in their current relative order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        let mut keep_pos = Vec::with_capacity(keep.len());
        for l in keep {
            let p = self
                .parts
                .iter()
                .position(|q| q.label == *l)
                .ok_or_else(|| QuantumError::UnknownLabel(l.to_string()))?;
            if keep_pos.contains(&p) {
                return Err(QuantumError::LabelCollision(l.to_string()));
            }
            keep_pos.push(p);
        }
        keep_pos.sort_unstable();
        let trace_pos: Vec<usize> =
            (0..self.parts.len()).filter(|p| !keep_pos.contains(p)).collect();
        let st = strides(&self.parts);
        let offsets = |positions: &[usize]| -> Vec<usize> {
            let mut offs = vec![0usize];
            for &p in positions {
                let mut next = Vec::with_capacity(offs.len() * self.parts[p].dim);
                for &base in &offs {
                    for k in 0..self.parts[p].dim {
                        next.push(base + k * st[p]);
                    }
                }
                offs = next;
            }
            offs
        };
        let keep_offsets = offsets(&keep_pos);
        let trace_offsets = offsets(&trace_pos);
        let dk = keep_offsets.len();
        let mut out = ComplexMatrix::zeros(dk, dk);
        for (r, &ro) in keep_offsets.iter().enumerate() {
            for (c, &co) in keep_offsets.iter().enumerate() {
                let mut acc = c64(0.0, 0.0);
                for &t in &trace_offsets {
                    acc += self.mat[(ro + t, co + t)];
                }
                out[(r, c)] = acc;
            }
        }
        let parts: Vec<Subsystem> = keep_pos.iter().map(|&p| self.parts[p].clone()).collect();
        Ok(Self { mat: out, parts })
    }

    /// Reorder subsystems by conjugating with the permutation.
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        if order.len() != self.parts.len() {
            return Err(QuantumError::DimensionMismatch(
                "permutation length differs from factor count".into(),
            ));
        }
        let positions: Vec<usize> = order
            .iter()
            .map(|l| {
                self.parts
                    .iter()
                    .position(|p| p.label == *l)
                    .ok_or_else(|| QuantumError::UnknownLabel(l.to_string()))
            })
            .collect::<Result<_>>()?;
        let new_parts: Vec<Subsystem> = positions.iter().map(|&p| self.parts[p].clone()).collect();
        let old_st = strides(&self.parts);
        let new_st = strides(&new_parts);
        let d = self.dim();
        let map_index = |new_idx: usize| -> usize {
            let mut old = 0;
            for (k, &p) in positions.iter().enumerate() {
                let comp = (new_idx / new_st[k]) % new_parts[k].dim;
                old += comp * old_st[p];
            }
            old
        };
        let mut out = ComplexMatrix::zeros(d, d);
        for r in 0..d {
            let or = map_index(r);
            for c in 0..d {
                out[(r, c)] = self.mat[(or, map_index(c))];
            }
        }
        Ok(Self { mat: out, parts: new_parts })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.mat.hermitian_eigen(STATE_TOL)?.values)
    }

    /// tr(ρ M) for Hermitian M (real by construction).
    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        self.mat.mul(op).trace().re
    }

    /// Sample a POVM. Post-state applies the element and renormalises (exact
    /// collapse for projective elements; see [`PureState::measure_povm`]).
    pub fn measure_povm(&self, povm: &Povm, rng: &mut impl Rng) -> Result<(usize, Self)> {
        if povm.dim() != self.dim() {
            return Err(QuantumError::DimensionMismatch(
                "POVM dimension differs from state dimension".into(),
            ));
        }
        let probs: Vec<f64> = povm.elements().iter().map(|e| self.expectation(e).max(0.0)).collect();
        let outcome = sample_index(&probs, rng);
        let e = &povm.elements()[outcome];
        let post = e.mul(&self.mat).mul(e);
        let tr = post.trace().re;
        Ok((outcome, Self { mat: post.scale(1.0 / tr), parts: self.parts.clone() }))
    }
}

/// Cholesky-style check that `m + tol·I` admits a positive factorisation,
/// i.e. the minimum eigenvalue of `m` is ≥ −tol up to roundoff.
pub fn is_psd_within(m: &ComplexMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.rows();
    let scale = m.frobenius_norm().max(1.0);
    let shift = tol + 1e-13 * scale;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re + shift;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d < -1e-13 * scale {
            return false;
        }
        let piv = d.max(0.0).sqrt();
        l[(j, j)] = c64(piv, 0.0);
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            if piv > 1e-150 {
                l[(i, j)] = v / piv;
            } else if v.norm() > 1e-7 * scale {
                // Zero pivot with residual mass below it: not PSD.
                return false;
            }
        }
    }
    true
}

/// Does `a ≥ b` hold as operators, within `tol` on the minimum eigenvalue of
/// the difference? Errors on non-Hermitian or mismatched inputs.
pub fn psd_dominates(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> Result<bool> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(QuantumError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let diff = a.sub(b);
    let eig = diff.hermitian_eigen(STATE_TOL)?;
    Ok(eig.min_value() >= -tol)
}

/// Eigendecomposition helper for density-operator matrices.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<HermitianEigen> {
    Ok(m.hermitian_eigen(STATE_TOL)?)
}

/// Positive-operator-valued measure: elements are Hermitian, PSD, and sum to
/// the identity (all within [`STATE_TOL`]).
#[derive(Clone, Debug)]
pub struct Povm {
    elements: Vec<ComplexMatrix>,
}

impl Povm {
    pub fn new(elements: Vec<ComplexMatrix>) -> Result<Self> {
        if elements.is_empty() {
            return Err(QuantumError::InvalidPovm("no elements".into()));
        }
        let d = elements[0].rows();
        let mut sum = ComplexMatrix::zeros(d, d);
        for (i, e) in elements.iter().enumerate() {
            if !e.is_square() || e.rows() != d {
                return Err(QuantumError::InvalidPovm(format!("element {i} has wrong shape")));
            }
            if e.hermiticity_error() > STATE_TOL {
                return Err(QuantumError::InvalidPovm(format!("element {i} is not Hermitian")));
            }
            if !is_psd_within(e, STATE_TOL) {
                return Err(QuantumError::InvalidPovm(format!("element {i} is not PSD")));
            }
            sum = sum.add(e);
        }
        if sum.max_abs_diff(&ComplexMatrix::identity(d)) > 1e-8 {
            return Err(QuantumError::InvalidPovm("elements do not sum to identity".into()));
        }
        Ok(Self { elements })
    }

    /// Projective POVM from an orthonormal basis given as matrix columns.
    pub fn from_orthonormal_basis(basis: &ComplexMatrix) -> Result<Self> {
        let d = basis.rows();
        if basis.cols() != d {
            return Err(QuantumError::InvalidBasis("basis matrix must be square".into()));
        }
        let elements: Vec<ComplexMatrix> = (0..d)
            .map(|k| {
                let col: Vec<Complex64> = (0..d).map(|r| basis[(r, k)]).collect();
                ComplexMatrix::outer(&col)
            })
            .collect();
        Self::new(elements)
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn tensor_of_basis_states_is_joint_basis_state() {
        let a = PureState::basis_state("a", 2, 0);
        let b = PureState::basis_state("b", 2, 1);
        let ab = a.tensor(&b).unwrap();
        // |01⟩ sits at flat index 1 with the first label most significant.
        assert_eq!(ab.amplitudes()[1], c64(1.0, 0.0));
        assert_eq!(ab.labels(), vec!["a", "b"]);
    }

    #[test]
    fn tensor_rejects_label_collision() {
        let a = PureState::basis_state("x", 2, 0);
        let b = PureState::basis_state("x", 2, 1);
        assert!(matches!(a.tensor(&b), Err(QuantumError::LabelCollision(_))));
    }

    #[test]
    fn construction_rejects_unnormalised_amplitudes() {
        let bad = PureState::new(
            vec![c64(1.0, 0.0), c64(1.0, 0.0)],
            vec![Subsystem::qubit("q")],
        );
        assert!(matches!(bad, Err(QuantumError::NotNormalized(_))));
    }

    #[test]
    fn bb84_states_have_expected_amplitudes() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(PureState::bb84_encode("q", 0, 0).amplitudes(), &[c64(1.0, 0.0), c64(0.0, 0.0)]);
        assert_eq!(PureState::bb84_encode("q", 1, 0).amplitudes(), &[c64(0.0, 0.0), c64(1.0, 0.0)]);
        assert_eq!(PureState::bb84_encode("q", 0, 1).amplitudes(), &[c64(h, 0.0), c64(h, 0.0)]);
        assert_eq!(PureState::bb84_encode("q", 1, 1).amplitudes(), &[c64(h, 0.0), c64(-h, 0.0)]);
    }

    #[test]
    fn removing_measurement_collapses_partner_and_drops_the_part() {
        let mut r = rng(42);
        for _ in 0..20 {
            let pair = PureState::bell_pair("l", "r").unwrap();
            let (m, rest) = pair.measure_in_basis_removing("l", &bb84_basis(0), &mut r).unwrap();
            assert_eq!(rest.labels(), vec!["r"]);
            // Perfect correlation: the partner collapses to |m⟩.
            let probs = rest.basis_probabilities("r", &bb84_basis(0)).unwrap();
            assert!((probs[m] - 1.0).abs() < 1e-12);
        }
        // Middle subsystem of a three-qubit product comes out cleanly.
        let triple = PureState::bb84_encode("x", 0, 1)
            .tensor(&PureState::bb84_encode("y", 1, 0))
            .unwrap()
            .tensor(&PureState::bb84_encode("z", 1, 1))
            .unwrap();
        let (m, rest) = triple.measure_in_basis_removing("y", &bb84_basis(0), &mut r).unwrap();
        assert_eq!(m, 1);
        assert_eq!(rest.labels(), vec!["x", "z"]);
        assert!((rest.fidelity(
            &PureState::bb84_encode("x", 0, 1)
                .tensor(&PureState::bb84_encode("z", 1, 1))
                .unwrap()
        )
        .unwrap()
            - 1.0)
            .abs()
            < 1e-12);
    }

    #[test]
    fn measuring_prepared_bb84_state_in_matching_basis_recovers_bit() {
        let mut r = rng(5);
        for theta in [0u8, 1] {
            for x in [0u8, 1] {
                let st = PureState::bb84_encode("q", x, theta);
                let probs = st.basis_probabilities("q", &bb84_basis(theta)).unwrap();
                assert!((probs[x as usize] - 1.0).abs() < 1e-12);
                let (got, _) = st.measure_qubit("q", theta, &mut r).unwrap();
                assert_eq!(got, x);
            }
        }
    }

    #[test]
    fn measuring_plus_in_computational_basis_is_unbiased() {
        let st = PureState::bb84_encode("q", 0, 1);
        let probs = st.basis_probabilities("q", &bb84_basis(0)).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert!((probs[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one_for_random_states() {
        let mut r = rng(17);
        for _ in 0..20 {
            let st = PureState::haar_random(
                vec![Subsystem::qubit("a"), Subsystem::qubit("b"), Subsystem::new("c", 3)],
                &mut r,
            )
            .unwrap();
            for label in ["a", "b"] {
                let p = st.basis_probabilities(label, &bb84_basis(1)).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn partial_trace_of_product_recovers_factor() {
        let mut r = rng(23);
        let a = PureState::haar_random(vec![Subsystem::qubit("a")], &mut r).unwrap().to_density();
        let b = PureState::haar_random(vec![Subsystem::new("b", 3)], &mut r).unwrap().to_density();
        let ab = a.tensor(&b).unwrap();
        let back = ab.partial_trace(&["a"]).unwrap();
        assert!(back.matrix().max_abs_diff(a.matrix()) < 1e-12);
        let tr = back.matrix().trace();
        assert!((tr.re - 1.0).abs() < 1e-12 && tr.im.abs() < 1e-14);
    }

    #[test]
    fn bell_pair_marginal_is_maximally_mixed() {
        let pair = PureState::bell_pair("a", "b").unwrap();
        let half = pair.reduced(&["b"]).unwrap();
        let expected = ComplexMatrix::identity(2).scale(0.5);
        assert!(half.matrix().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn reduced_states_share_spectrum_across_the_cut() {
        let mut r = rng(31);
        let st = PureState::haar_random(
            vec![Subsystem::new("a", 3), Subsystem::new("b", 4)],
            &mut r,
        )
        .unwrap();
        let ea = st.reduced(&["a"]).unwrap().eigenvalues().unwrap();
        let eb = st.reduced(&["b"]).unwrap().eigenvalues().unwrap();
        // Nonzero eigenvalues coincide; b has one extra zero.
        for (x, y) in ea.iter().rev().zip(eb.iter().rev()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn permute_round_trip_is_identity() {
        let mut r = rng(37);
        let st = PureState::haar_random(
            vec![Subsystem::qubit("x"), Subsystem::new("y", 3), Subsystem::qubit("z")],
            &mut r,
        )
        .unwrap();
        let once = st.permute(&["z", "x", "y"]).unwrap();
        let back = once.permute(&["x", "y", "z"]).unwrap();
        for (p, q) in st.amplitudes().iter().zip(back.amplitudes()) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn apply_on_embeds_operator_like_explicit_kron() {
        let mut r = rng(41);
        let st = PureState::haar_random(
            vec![Subsystem::qubit("a"), Subsystem::qubit("b")],
            &mut r,
        )
        .unwrap();
        let direct = st.apply_on(&["b"], &pauli_x()).unwrap();
        let full = ComplexMatrix::identity(2).kron(&pauli_x());
        let expect = full.apply(st.amplitudes());
        for (p, q) in direct.amplitudes().iter().zip(&expect) {
            assert!((p - q).norm() < 1e-12);
        }
        // Operator addressed across non-adjacent labels, reversed order.
        let st3 = st.tensor(&PureState::basis_state("c", 2, 0)).unwrap();
        let swapped = st3.apply_on(&["c", "a"], &pauli_x().kron(&pauli_z())).unwrap();
        let ref_op = pauli_z().kron(&ComplexMatrix::identity(2)).kron(&pauli_x());
        let expect3 = ref_op.apply(st3.amplitudes());
        for (p, q) in swapped.amplitudes().iter().zip(&expect3) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn bell_measure_on_bell_pair_returns_identity_outcome() {
        let mut r = rng(43);
        for _ in 0..50 {
            let pair = PureState::bell_pair("a", "b").unwrap();
            let (a, b, rest) = pair.bell_measure("a", "b", &mut r).unwrap();
            assert_eq!((a, b), (0, 0));
            assert_eq!(rest.dim(), 1);
        }
    }

    #[test]
    fn bell_measure_outcomes_uniform_when_pair_is_entangled_elsewhere() {
        let mut r = rng(47);
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            let s = PureState::bell_pair("q1", "e1")
                .unwrap()
                .tensor(&PureState::bell_pair("q2", "e2").unwrap())
                .unwrap();
            let (a, b, _) = s.bell_measure("q1", "q2", &mut r).unwrap();
            counts[((a << 1) | b) as usize] += 1;
        }
        for c in counts {
            // 4000 samples at p = 1/4: allow ±5 sigma.
            assert!((c as f64 - 1000.0).abs() < 5.0 * (4000.0f64 * 0.25 * 0.75).sqrt());
        }
    }

    #[test]
    fn teleportation_with_correction_is_exact_on_every_branch() {
        // All 16 combinations of BB84 input and Bell outcome, outcome forced
        // by projecting, checked against the correction convention.
        for x in [0u8, 1] {
            for theta in [0u8, 1] {
                for a in [0u8, 1] {
                    for b in [0u8, 1] {
                        let input = PureState::bb84_encode("q", x, theta);
                        let joint = input
                            .tensor(&PureState::bell_pair("m1", "m2").unwrap())
                            .unwrap();
                        // Force Bell branch (a, b) on (q, m1).
                        let proj = bell_projector(a, b);
                        let projected = joint.apply_on(&["q", "m1"], &proj).unwrap();
                        let n = vec_norm(projected.amplitudes());
                        assert!((n - 0.5).abs() < 1e-12, "every branch has weight 1/4");
                        let renorm: Vec<Complex64> =
                            projected.amplitudes().iter().map(|z| z / n).collect();
                        let branch =
                            PureState::new(renorm, projected.parts().to_vec()).unwrap();
                        let corrected = branch.pauli_correct("m2", a, b).unwrap();
                        let got = corrected.reduced(&["m2"]).unwrap();
                        let want = PureState::bb84_encode("m2", x, theta).to_density();
                        assert!(got.matrix().max_abs_diff(want.matrix()) < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn teleportation_by_sampling_preserves_random_states() {
        let mut r = rng(53);
        for _ in 0..100 {
            let psi = PureState::haar_random(vec![Subsystem::qubit("q")], &mut r).unwrap();
            let joint = psi.tensor(&PureState::bell_pair("m1", "m2").unwrap()).unwrap();
            let (a, b, rest) = joint.bell_measure("q", "m1", &mut r).unwrap();
            let fixed = rest.pauli_correct("m2", a, b).unwrap();
            let mut reference = psi.clone();
            reference = PureState::new(
                reference.amplitudes().to_vec(),
                vec![Subsystem::qubit("m2")],
            )
            .unwrap();
            let fid = fixed.fidelity(&reference).unwrap();
            assert!(fid > 1.0 - 1e-9, "teleportation fidelity {fid}");
        }
    }

    #[test]
    fn teleportation_without_correction_flips_computational_outcome_by_a() {
        let mut r = rng(59);
        for x in [0u8, 1] {
            for _ in 0..40 {
                let input = PureState::bb84_encode("q", x, 0);
                let joint = input
                    .tensor(&PureState::bell_pair("m1", "m2").unwrap())
                    .unwrap();
                let (a, _b, rest) = joint.bell_measure("q", "m1", &mut r).unwrap();
                let (m, _) = rest.measure_qubit("m2", 0, &mut r).unwrap();
                assert_eq!(m, x ^ a);
            }
        }
    }

    #[test]
    fn psd_dominates_on_diagonal_vs_entangled_projector() {
        // 2·(|00⟩⟨00| + |11⟩⟨11|)/2 dominates the Bell projector.
        let bell = bell_projector(0, 0);
        let mut diag = ComplexMatrix::zeros(4, 4);
        diag[(0, 0)] = c64(1.0, 0.0);
        diag[(3, 3)] = c64(1.0, 0.0);
        assert!(psd_dominates(&diag, &bell, 1e-9).unwrap());
        // But the maximally mixed state does not dominate it.
        let mixed = ComplexMatrix::identity(4).scale(0.25);
        assert!(!psd_dominates(&mixed, &bell, 1e-9).unwrap());
        // Difference spectrum of the dominating pair: {0, 0, 0, 1}.
        let eig = diag.sub(&bell).hermitian_eigen(1e-9).unwrap();
        let expect = [0.0, 0.0, 0.0, 1.0];
        for (v, e) in eig.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn psd_dominates_rejects_non_hermitian_input() {
        let bad = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let id = ComplexMatrix::identity(2);
        assert!(psd_dominates(&bad, &id, 1e-9).is_err());
    }

    #[test]
    fn density_operator_construction_validates() {
        // Non-PSD matrix with unit trace is rejected.
        let m = ComplexMatrix::from_real_rows(&[&[1.5, 0.0], &[0.0, -0.5]]);
        assert!(matches!(
            DensityOperator::new(m, vec![Subsystem::qubit("q")]),
            Err(QuantumError::NotAState(_))
        ));
        // Wrong trace rejected.
        let m2 = ComplexMatrix::identity(2);
        assert!(DensityOperator::new(m2, vec![Subsystem::qubit("q")]).is_err());
        // Valid state accepted and eigenvalues are a distribution.
        let ok = DensityOperator::maximally_mixed("q", 4);
        let ev = ok.eigenvalues().unwrap();
        assert!((ev.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ev.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn povm_validation_catches_bad_sets() {
        // Elements that do not sum to identity.
        let p0 = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            Povm::new(vec![p0.clone(), p0.clone()]),
            Err(QuantumError::InvalidPovm(_))
        ));
        let p1 = ComplexMatrix::from_real_rows(&[&[0.0, 0.0], &[0.0, 1.0]]);
        assert!(Povm::new(vec![p0, p1]).is_ok());
    }

    #[test]
    fn povm_sampling_follows_born_rule() {
        let mut r = rng(61);
        let povm = Povm::from_orthonormal_basis(&hadamard()).unwrap();
        let st = PureState::basis_state("q", 2, 0); // |0⟩: p(±) = 1/2 each
        let mut plus = 0usize;
        let n = 2000;
        for _ in 0..n {
            let (k, _) = st.measure_povm(&povm, &mut r).unwrap();
            if k == 0 {
                plus += 1;
            }
        }
        assert!((plus as f64 - 1000.0).abs() < 5.0 * (n as f64 * 0.25).sqrt());
    }
}
