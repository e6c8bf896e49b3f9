//! Dense order-`l` tensors over `R^d` and the handful of multilinear operations
//! the rest of the crate is built from.
//!
//! Storage is a flat row-major array of all `d^l` entries: the multi-index
//! `(i_1, ..., i_l)` (0-based here) lives at offset
//! `i_1 d^{l-1} + i_2 d^{l-2} + ... + i_l`. The same array read as a vector is
//! `vec(T)`, and read as a `d x d^{l-1}` row-major matrix is `mat(T)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense tensor in `(R^d)^{⊗l}`.
///
/// The `symmetric` tag records that the tensor was produced by an operation
/// guaranteeing permutation invariance (outer powers, symmetrization, sums of
/// symmetric tensors). Tensors built from raw data start untagged.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
    symmetric: bool,
}

fn checked_len(order: usize, dim: usize) -> Result<usize> {
    if order == 0 || dim == 0 {
        return Err(Error::InvalidParameter(format!(
            "tensor order and dimension must be positive (l={order}, d={dim})"
        )));
    }
    let exp = u32::try_from(order).map_err(|_| Error::InvalidParameter("order too large".into()))?;
    dim.checked_pow(exp)
        .ok_or_else(|| Error::InvalidParameter(format!("d^l overflows for d={dim}, l={order}")))
}

impl SymTensor {
    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        let len = checked_len(order, dim)?;
        Ok(Self { order, dim, data: vec![0.0; len], symmetric: true })
    }

    /// Wraps raw entries in the flat layout. The result is untagged.
    pub fn from_vec(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(order, dim)?;
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "expected {len} entries for d={dim}, l={order}, got {}",
                data.len()
            )));
        }
        Ok(Self { order, dim, data, symmetric: false })
    }

    /// Inverse of [`SymTensor::vectorize`].
    pub fn from_vectorized(order: usize, dim: usize, v: &[f64]) -> Result<Self> {
        Self::from_vec(order, dim, v.to_vec())
    }

    /// Inverse of [`SymTensor::matricize`].
    pub fn from_matricized(order: usize, m: &DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        let cols = checked_len(order, dim)? / dim;
        if m.ncols() != cols {
            return Err(Error::ShapeMismatch(format!(
                "matricization of order {order} needs {dim} x {cols}, got {} x {}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut data = Vec::with_capacity(dim * cols);
        for i in 0..dim {
            data.extend(m.row(i).iter().copied());
        }
        Self::from_vec(order, dim, data)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the entries. Clears the symmetric tag.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.symmetric = false;
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a 0-based multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.order);
        index.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    /// 0-based multi-index of a flat offset.
    pub fn multi_index(&self, mut offset: usize) -> Vec<usize> {
        let mut index = vec![0; self.order];
        for slot in index.iter_mut().rev() {
            *slot = offset % self.dim;
            offset /= self.dim;
        }
        index
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    fn same_shape(&self, other: &SymTensor) -> Result<()> {
        if self.order != other.order || self.dim != other.dim {
            return Err(Error::ShapeMismatch(format!(
                "(l={}, d={}) vs (l={}, d={})",
                self.order, self.dim, other.order, other.dim
            )));
        }
        Ok(())
    }

    fn check_vector(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} against tensor dimension {}",
                v.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `v^{⊗l}`.
    pub fn outer_power(v: &[f64], order: usize) -> Result<Self> {
        let factors = vec![v; order];
        let mut t = Self::outer(&factors)?;
        t.symmetric = true;
        Ok(t)
    }

    /// `v_1 ⊗ v_2 ⊗ ... ⊗ v_l` for vectors of a common length. Untagged.
    pub fn outer(factors: &[&[f64]]) -> Result<Self> {
        let dim = factors.first().map(|v| v.len()).unwrap_or(0);
        let len = checked_len(factors.len(), dim)?;
        if factors.iter().any(|v| v.len() != dim) {
            return Err(Error::ShapeMismatch("outer product factors differ in length".into()));
        }
        let mut data = Vec::with_capacity(len);
        data.push(1.0);
        for v in factors {
            let prev = std::mem::take(&mut data);
            data.reserve(prev.len() * dim);
            for p in prev {
                data.extend(v.iter().map(|&x| p * x));
            }
        }
        Ok(Self { order: factors.len(), dim, data, symmetric: false })
    }

    /// `self += alpha * v^{⊗l}` without allocating the outer power.
    pub fn add_scaled_outer_power(&mut self, alpha: f64, v: &[f64]) -> Result<()> {
        self.check_vector(v)?;
        let d = self.dim;
        let mut idx = vec![0usize; self.order];
        // prefix[k] = alpha * v[i_1] * ... * v[i_k]
        let mut prefix = vec![alpha; self.order + 1];
        for k in 0..self.order {
            prefix[k + 1] = prefix[k] * v[0];
        }
        let mut offset = 0;
        loop {
            self.data[offset] += prefix[self.order];
            offset += 1;
            // advance the multi-index odometer from the last slot
            let mut k = self.order;
            loop {
                if k == 0 {
                    return Ok(());
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < d {
                    break;
                }
                idx[k] = 0;
            }
            for j in k..self.order {
                prefix[j + 1] = prefix[j] * v[idx[j]];
            }
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SymTensor) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        self.symmetric &= other.symmetric;
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    /// `Σ w_i T_i`. Symmetric when every input is.
    pub fn weighted_sum(weights: &[f64], tensors: &[&SymTensor]) -> Result<Self> {
        if weights.len() != tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} tensors",
                weights.len(),
                tensors.len()
            )));
        }
        let first = tensors
            .first()
            .ok_or_else(|| Error::InvalidParameter("weighted_sum of no tensors".into()))?;
        let mut out = Self::zeros(first.order, first.dim)?;
        for (&w, t) in weights.iter().zip(tensors) {
            out.axpy(w, t)?;
        }
        Ok(out)
    }

    /// `T(v_1, ..., v_l)`.
    pub fn contract_full(&self, vs: &[&[f64]]) -> Result<f64> {
        if vs.len() != self.order {
            return Err(Error::ShapeMismatch(format!(
                "{} vectors for an order-{} tensor",
                vs.len(),
                self.order
            )));
        }
        for v in vs {
            self.check_vector(v)?;
        }
        let d = self.dim;
        let mut buf = contract_last(&self.data, d, vs[self.order - 1]);
        for v in vs[..self.order - 1].iter().rev() {
            buf = contract_last(&buf, d, v);
        }
        Ok(buf[0])
    }

    /// `T(v^{⊗l})`.
    pub fn contract_power(&self, v: &[f64]) -> Result<f64> {
        self.contract_full(&vec![v; self.order])
    }

    /// `T(v_1, ..., v_{l-1}, I)`: the vector obtained by leaving the last slot open.
    pub fn contract_leave_one(&self, vs: &[&[f64]]) -> Result<Vec<f64>> {
        if self.order < 2 || vs.len() + 1 != self.order {
            return Err(Error::ShapeMismatch(format!(
                "{} vectors for leave-one contraction of an order-{} tensor",
                vs.len(),
                self.order
            )));
        }
        for v in vs {
            self.check_vector(v)?;
        }
        let d = self.dim;
        let mut buf = contract_first(&self.data, d, vs[0]);
        for v in &vs[1..] {
            buf = contract_first(&buf, d, v);
        }
        Ok(buf)
    }

    /// `T(v^{⊗(l-1)}, I)`.
    pub fn contract_power_leave_one(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.contract_leave_one(&vec![v; self.order - 1])
    }

    pub fn frobenius_inner(&self, other: &SymTensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `vec(T)` in the flat layout.
    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// `mat(T)`: row `i_1`, column `i_2 d^{l-2} + ... + i_l`.
    pub fn matricize(&self) -> DMatrix<f64> {
        let cols = self.data.len() / self.dim;
        DMatrix::from_row_slice(self.dim, cols, &self.data)
    }

    /// Applies the `d x d` matrix `m` along one mode.
    pub fn mode_product(&self, mode: usize, m: &DMatrix<f64>) -> Result<Self> {
        if mode >= self.order || m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "mode {mode} product with a {}x{} matrix on (l={}, d={})",
                m.nrows(),
                m.ncols(),
                self.order,
                self.dim
            )));
        }
        let d = self.dim;
        let inner = d.pow((self.order - mode - 1) as u32);
        let outer = self.data.len() / (inner * d);
        let mut out = vec![0.0; self.data.len()];
        for o in 0..outer {
            let base = o * d * inner;
            for i in 0..d {
                let dst = &mut out[base + i * inner..base + (i + 1) * inner];
                for j in 0..d {
                    let p = m[(i, j)];
                    if p == 0.0 {
                        continue;
                    }
                    let src = &self.data[base + j * inner..base + (j + 1) * inner];
                    for (a, b) in dst.iter_mut().zip(src) {
                        *a += p * b;
                    }
                }
            }
        }
        Ok(Self { order: self.order, dim: d, data: out, symmetric: false })
    }

    /// `P_{S^{⊗l}} T` with `P = B B^T` applied on every mode.
    pub fn project_all_modes(&self, basis: &SubspaceBasis) -> Result<Self> {
        if basis.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "basis in dimension {} for tensor dimension {}",
                basis.dim(),
                self.dim
            )));
        }
        let p = basis.projector();
        let mut out = self.clone();
        for mode in 0..self.order {
            out = out.mode_product(mode, &p)?;
        }
        out.symmetric = self.symmetric;
        Ok(out)
    }

    /// Reorders the axes: output index `(j_1..j_l)` reads input at `j_{perm^{-1}}`,
    /// i.e. axis `k` of the input becomes axis `perm[k]` of the output.
    pub fn permute_axes(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.order || !is_permutation(perm) {
            return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation of 0..{}", self.order)));
        }
        let mut out = vec![0.0; self.data.len()];
        let strides: Vec<usize> = (0..self.order)
            .map(|k| self.dim.pow((self.order - k - 1) as u32))
            .collect();
        for (offset, &x) in self.data.iter().enumerate() {
            let idx = self.multi_index(offset);
            let dst: usize = idx.iter().enumerate().map(|(k, &i)| i * strides[perm[k]]).sum();
            out[dst] = x;
        }
        Ok(Self { order: self.order, dim: self.dim, data: out, symmetric: self.symmetric })
    }

    /// Average over all `l!` axis permutations (the projection onto symmetric tensors).
    pub fn symmetrize(&self) -> Self {
        let perms = permutations(self.order);
        let mut data = vec![0.0; self.data.len()];
        for perm in &perms {
            let p = self.permute_axes(perm).expect("generated permutation is valid");
            for (a, b) in data.iter_mut().zip(&p.data) {
                *a += b;
            }
        }
        let n = perms.len() as f64;
        data.iter_mut().for_each(|x| *x /= n);
        Self { order: self.order, dim: self.dim, data, symmetric: true }
    }

    /// Largest entrywise deviation from permutation invariance, over every
    /// adjacent transposition of axes (these generate the symmetric group).
    pub fn asymmetry(&self) -> f64 {
        (0..self.order.saturating_sub(1))
            .map(|k| {
                let mut perm: Vec<usize> = (0..self.order).collect();
                perm.swap(k, k + 1);
                let p = self.permute_axes(&perm).expect("valid transposition");
                self.data
                    .iter()
                    .zip(&p.data)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn set_symmetric_tag(&mut self, tag: bool) {
        self.symmetric = tag;
    }
}

/// Contracts the trailing axis of a flat row-major buffer with `v`.
fn contract_last(buf: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    buf.chunks_exact(d)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Contracts the leading axis of a flat row-major buffer with `v`.
fn contract_first(buf: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    let stride = buf.len() / d;
    let mut out = vec![0.0; stride];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (a, b) in out.iter_mut().zip(&buf[i * stride..(i + 1) * stride]) {
            *a += vi * b;
        }
    }
    out
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&p| p < perm.len() && !std::mem::replace(&mut seen[p], true))
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
}

/// Orthonormal basis of a `k`-dimensional subspace of `R^d`, stored as the
/// columns of a `d x k` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Wraps a matrix whose columns are already orthonormal (checked to 1e-10).
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let b = Self { basis };
        let err = b.orthonormality_error();
        if err > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "columns are not orthonormal (max |B^T B - I| = {err:e})"
            )));
        }
        Ok(b)
    }

    /// Span of the listed standard basis vectors of `R^d` (0-based).
    pub fn coordinate(dim: usize, coords: &[usize]) -> Result<Self> {
        let mut m = DMatrix::zeros(dim, coords.len());
        for (c, &i) in coords.iter().enumerate() {
            if i >= dim {
                return Err(Error::InvalidParameter(format!("coordinate {i} out of range for d={dim}")));
            }
            m[(i, c)] = 1.0;
        }
        Self::from_orthonormal(m)
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.basis.column(k).iter().copied().collect()
    }

    /// `P = B B^T`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `B^T v`.
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        self.basis
            .column_iter()
            .map(|col| col.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `B B^T v`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let coef = self.coefficients(v);
        let mut out = vec![0.0; self.dim()];
        for (col, c) in self.basis.column_iter().zip(coef) {
            for (o, b) in out.iter_mut().zip(col.iter()) {
                *o += c * b;
            }
        }
        out
    }

    /// `v - B B^T v`.
    pub fn project_orthogonal(&self, v: &[f64]) -> Vec<f64> {
        let p = self.project(v);
        v.iter().zip(p).map(|(a, b)| a - b).collect()
    }

    /// `max |B^T B - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.basis.transpose() * &self.basis;
        let k = gram.nrows();
        let mut err: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram[(i, j)] - target).abs());
            }
        }
        err
    }
}

/// Relative drop tolerance for Gram-Schmidt: a residual below
/// `DROP_TOL * max input norm` is treated as linearly dependent.
pub const GRAM_SCHMIDT_DROP_TOL: f64 = 1e-10;

/// Modified Gram-Schmidt (with one re-orthogonalization pass) in input order.
/// Numerically dependent vectors are dropped.
pub fn orthonormalize(vectors: &[Vec<f64>]) -> Result<SubspaceBasis> {
    let dim = vectors
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidParameter("cannot orthonormalize an empty list".into()))?;
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::ShapeMismatch("vectors differ in length".into()));
    }
    let scale = vectors.iter().map(|v| norm(v)).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate("all vectors are numerically zero".into()));
    }
    let tol = GRAM_SCHMIDT_DROP_TOL * scale;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _pass in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = norm(&w);
        if n > tol {
            w.iter_mut().for_each(|x| *x /= n);
            basis.push(w);
        }
    }
    let mut m = DMatrix::zeros(dim, basis.len());
    for (k, q) in basis.iter().enumerate() {
        m.column_mut(k).copy_from_slice(q);
    }
    Ok(SubspaceBasis { basis: m })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
