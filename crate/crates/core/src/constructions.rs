//! Explicit spurious local minima and the matching zero-loss decompositions.
//!
//! The vanilla construction places every component at `e_1/m^{1/l}` (so the
//! model is `e_1^{⊗l}`) and chooses `T*` so that the residual is the
//! permuted pattern tensor `R = Σ_j R_j`, where `R_j` has a 1 at every
//! multi-index with two copies of `j` and `l−2` copies of `1`. The residual is
//! orthogonal to everything the components can reach at first order, and
//! curving toward a missing direction `e_j` only raises the loss.
//!
//! Each `R_j` is itself a combination of `l+1` rank-one terms
//! `Σ_i w_i (e_1 + b_i e_j)^{⊗l}` where the weights solve a Vandermonde system
//! in the nodes `b_i`, which is how the zero-loss decomposition is built.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{vanilla_assemble, vanilla_grad, vanilla_loss, GroundTruth, ModelParams};
use crate::rng::unit_sphere;
use crate::tensor::SymTensor;

fn basis_vec(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

fn binomial2(l: usize) -> usize {
    l * (l - 1) / 2
}

/// Tensor with a 1 at every multi-index made of exactly two copies of `pair`
/// and `l−2` copies of `base` (0-based coordinates), zero elsewhere.
pub fn pair_pattern(dim: usize, order: usize, pair: usize, base: usize) -> Result<SymTensor> {
    if order < 3 || pair >= dim || base >= dim || pair == base {
        return Err(Error::InvalidParameter(format!(
            "pair pattern needs l >= 3 and distinct coordinates < d (l={order}, pair={pair}, base={base}, d={dim})"
        )));
    }
    let mut t = SymTensor::zeros(order, dim)?;
    let data = t.as_mut_slice();
    for (offset, x) in data.iter_mut().enumerate() {
        let mut rest = offset;
        let (mut pairs, mut bases) = (0, 0);
        for _ in 0..order {
            let i = rest % dim;
            rest /= dim;
            if i == pair {
                pairs += 1;
            } else if i == base {
                bases += 1;
            }
        }
        if pairs == 2 && bases == order - 2 {
            *x = 1.0;
        }
    }
    t.set_symmetric_tag(true);
    Ok(t)
}

/// `R = Σ_{j=2}^{r+1} R_j` (1-based `j`), the residual of the vanilla bad local minimum.
pub fn residual_r(dim: usize, rank: usize, order: usize) -> Result<SymTensor> {
    check_vanilla_shape(dim, rank, order)?;
    let mut r = SymTensor::zeros(order, dim)?;
    for j in 1..=rank {
        r.axpy(1.0, &pair_pattern(dim, order, j, 0)?)?;
    }
    Ok(r)
}

/// `Σ_{j=2}^{r+1} (R_{j,1} − R_{j,d})`, the residual of the 2-homogeneous bad local minimum.
pub fn residual_r_two_sided(dim: usize, rank: usize, order: usize) -> Result<SymTensor> {
    check_two_homo_shape(dim, rank, order)?;
    let mut r = SymTensor::zeros(order, dim)?;
    for j in 1..=rank {
        r.axpy(1.0, &pair_pattern(dim, order, j, 0)?)?;
        r.axpy(-1.0, &pair_pattern(dim, order, j, dim - 1)?)?;
    }
    Ok(r)
}

fn check_vanilla_shape(dim: usize, rank: usize, order: usize) -> Result<()> {
    if order < 3 || rank < 1 || rank >= dim {
        return Err(Error::InvalidParameter(format!(
            "need l >= 3 and d > r >= 1 (d={dim}, r={rank}, l={order})"
        )));
    }
    Ok(())
}

fn check_two_homo_shape(dim: usize, rank: usize, order: usize) -> Result<()> {
    if order < 3 || rank < 1 || rank + 2 > dim {
        return Err(Error::InvalidParameter(format!(
            "need l >= 3 and d - 2 >= r >= 1 (d={dim}, r={rank}, l={order})"
        )));
    }
    Ok(())
}

/// Smallest width admitting the vanilla zero-loss decomposition: `r(l+1)+1`.
pub fn vanilla_min_width(rank: usize, order: usize) -> usize {
    rank * (order + 1) + 1
}

/// Smallest width for the 2-homogeneous construction: `4r(l+1)+2`.
pub fn two_homo_min_width(rank: usize, order: usize) -> usize {
    4 * rank * (order + 1) + 2
}

/// `l(l−1)r/4`.
pub fn vanilla_bad_value(rank: usize, order: usize) -> f64 {
    (order * (order - 1) * rank) as f64 / 4.0
}

/// `l(l−1)r/2`.
pub fn two_homo_bad_value(rank: usize, order: usize) -> f64 {
    (order * (order - 1) * rank) as f64 / 2.0
}

/// A point of the vanilla model together with its target.
#[derive(Clone, Debug)]
pub struct VanillaPoint {
    pub u: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub gt: GroundTruth,
}

impl VanillaPoint {
    pub fn loss(&self) -> Result<f64> {
        vanilla_loss(&self.u, &self.c, &self.gt)
    }

    /// `(vec U, c)` stacked column by column.
    pub fn flatten(&self) -> Vec<f64> {
        flatten_columns(&self.u, &self.c)
    }

    /// Vanilla loss at a flattened `(vec U, c)` for this point's shape and target.
    pub fn loss_at(&self, x: &[f64]) -> f64 {
        let (u, c) = unflatten_columns(x, self.u[0].len(), self.u.len());
        vanilla_loss(&u, &c, &self.gt).unwrap_or(f64::NAN)
    }

    pub fn flat_gradient(&self) -> Result<Vec<f64>> {
        let (gu, gc) = vanilla_grad(&self.u, &self.c, &self.gt)?;
        Ok(flatten_columns(&gu, &gc))
    }
}

pub(crate) fn flatten_columns(u: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = u.iter().flatten().copied().collect();
    x.extend_from_slice(c);
    x
}

pub(crate) fn unflatten_columns(x: &[f64], dim: usize, width: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let u = x[..dim * width].chunks_exact(dim).map(<[f64]>::to_vec).collect();
    (u, x[dim * width..].to_vec())
}

/// Vanilla bad local minimum: `u_i = e_1/m^{1/l}`, `c_i = 1`, `T* = e_1^{⊗l} − R`.
/// The target is not unit-norm.
pub fn bad_local_min_vanilla(dim: usize, rank: usize, order: usize, width: usize) -> Result<VanillaPoint> {
    check_vanilla_shape(dim, rank, order)?;
    if width < vanilla_min_width(rank, order) {
        return Err(Error::InvalidParameter(format!(
            "need m >= r(l+1)+1 = {} (m={width})",
            vanilla_min_width(rank, order)
        )));
    }
    let scale = (width as f64).powf(-1.0 / order as f64);
    let u = vec![basis_vec(dim, 0).iter().map(|x| x * scale).collect::<Vec<_>>(); width];
    let c = vec![1.0; width];

    let e1 = basis_vec(dim, 0);
    let mut target = SymTensor::outer_power(&e1, order)?;
    target.axpy(-1.0, &residual_r(dim, rank, order)?)?;
    let terms = global_min_decomposition(dim, rank, order)?;
    let (weights, components): (Vec<f64>, Vec<Vec<f64>>) = terms.into_iter().unzip();
    let gt = GroundTruth::with_tensor(target, weights, components)?;
    Ok(VanillaPoint { u, c, gt })
}

/// 2-homogeneous bad local minimum: the first `⌊m/2⌋` components sit on `e_1`
/// with `a = +1`, the rest on `e_d` with `a = −1`, each with `c_i = 1/‖u_i‖`
/// (post-switch). `T* = e_1^{⊗l} − e_d^{⊗l} − R_2`.
pub fn bad_local_min_2homo(dim: usize, rank: usize, order: usize, width: usize) -> Result<(ModelParams, GroundTruth)> {
    check_two_homo_shape(dim, rank, order)?;
    if width < two_homo_min_width(rank, order) {
        return Err(Error::InvalidParameter(format!(
            "need m >= 4r(l+1)+2 = {} (m={width})",
            two_homo_min_width(rank, order)
        )));
    }
    let half = width / 2;
    let first: Vec<f64> = basis_vec(dim, 0).iter().map(|x| x / (half as f64).sqrt()).collect();
    let last: Vec<f64> = basis_vec(dim, dim - 1).iter().map(|x| x / ((width - half) as f64).sqrt()).collect();
    let mut u = vec![first; half];
    u.extend(std::iter::repeat_n(last, width - half));
    let mut a = vec![1.0; half];
    a.extend(std::iter::repeat_n(-1.0, width - half));
    let params = ModelParams::coupled(order, u, a, vec![true; width], 1.0)?;

    let mut target = SymTensor::outer_power(&basis_vec(dim, 0), order)?;
    target.axpy(-1.0, &SymTensor::outer_power(&basis_vec(dim, dim - 1), order)?)?;
    target.axpy(-1.0, &residual_r_two_sided(dim, rank, order)?)?;
    let terms = global_min_decomposition_2homo(dim, rank, order)?;
    let (weights, components): (Vec<f64>, Vec<Vec<f64>>) = terms.into_iter().unzip();
    let gt = GroundTruth::with_tensor(target, weights, components)?;
    Ok((params, gt))
}

/// Default nodes `(1, −1, 2, −2, 3, ...)`, `l+1` of them.
pub fn default_nodes(order: usize) -> Vec<f64> {
    (0..=order)
        .map(|i| {
            let k = (i / 2 + 1) as f64;
            if i % 2 == 0 {
                k
            } else {
                -k
            }
        })
        .collect()
}

/// Weights `w` with `Σ_i w_i b_i^k = [k = 2]` for `k = 0..l`, so that
/// `Σ_i w_i (e_1 + b_i e_j)^{⊗l} = R_j`.
pub fn vandermonde_rank_one_split(order: usize, nodes: &[f64]) -> Result<Vec<f64>> {
    let n = order + 1;
    if nodes.len() != n {
        return Err(Error::InvalidParameter(format!("need l+1 = {n} nodes, got {}", nodes.len())));
    }
    for (s, a) in nodes.iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("node {s}")));
        }
        if nodes[s + 1..].contains(a) {
            return Err(Error::Singular(format!("duplicate node {a}")));
        }
    }
    let m = DMatrix::from_fn(n, n, |k, i| nodes[i].powi(k as i32));
    let mut rhs = DVector::zeros(n);
    rhs[2] = 1.0;
    let w = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Vandermonde system is singular".into()))?;
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular("Vandermonde solve produced non-finite weights".into()));
    }
    Ok(w.iter().copied().collect())
}

/// Rank-one terms `(w_i, e_base + b_i e_pair)` summing to the pair pattern.
fn split_terms(dim: usize, order: usize, pair: usize, base: usize, sign: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    let nodes = default_nodes(order);
    let weights = vandermonde_rank_one_split(order, &nodes)?;
    Ok(nodes
        .iter()
        .zip(weights)
        .map(|(&b, w)| {
            let mut v = basis_vec(dim, base);
            v[pair] = b;
            (sign * w, v)
        })
        .collect())
}

/// `r(l+1)+1` weighted rank-one terms summing to the target of [`bad_local_min_vanilla`]:
/// `e_1^{⊗l}` plus `−R_j` split into `l+1` terms for every `j`.
pub fn global_min_decomposition(dim: usize, rank: usize, order: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    check_vanilla_shape(dim, rank, order)?;
    let mut terms = vec![(1.0, basis_vec(dim, 0))];
    for j in 1..=rank {
        terms.extend(split_terms(dim, order, j, 0, -1.0)?);
    }
    Ok(terms)
}

/// `2r(l+1)+2` weighted rank-one terms summing to the target of [`bad_local_min_2homo`].
pub fn global_min_decomposition_2homo(dim: usize, rank: usize, order: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    check_two_homo_shape(dim, rank, order)?;
    let mut terms = vec![(1.0, basis_vec(dim, 0)), (-1.0, basis_vec(dim, dim - 1))];
    for j in 1..=rank {
        terms.extend(split_terms(dim, order, j, 0, -1.0)?);
        terms.extend(split_terms(dim, order, j, dim - 1, 1.0)?);
    }
    Ok(terms)
}

/// Vanilla parameters `(U, c)` realizing a list of weighted rank-one terms.
pub fn decomposition_as_vanilla(terms: &[(f64, Vec<f64>)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    terms.iter().map(|(w, v)| (v.clone(), *w)).unzip()
}

pub fn assemble_terms(order: usize, terms: &[(f64, Vec<f64>)]) -> Result<SymTensor> {
    let (u, c) = decomposition_as_vanilla(terms);
    vanilla_assemble(order, &u, &c)
}

/// `½‖Σ a_i c_i^{l−2} u_i^{⊗l} − T*‖²` with the `c_i` as free variables,
/// evaluated at a flattened `(vec U, c)`.
pub fn two_homo_free_loss(params: &ModelParams, gt: &GroundTruth, x: &[f64]) -> f64 {
    let (u, c) = unflatten_columns(x, params.dim(), params.width());
    let mut p = params.clone();
    p.u = u;
    p.c = c;
    match p.residual(gt) {
        Ok(r) => 0.5 * r.frobenius_norm().powi(2),
        Err(_) => f64::NAN,
    }
}

/// Gradient of [`two_homo_free_loss`] in `(vec U, c)`:
/// `∇_{u_i} = l a_i c_i^{l−2} R(u_i^{⊗(l−1)}, I)`, `∇_{c_i} = (l−2) a_i c_i^{l−3} R(u_i^{⊗l})`.
pub fn two_homo_free_grad(params: &ModelParams, gt: &GroundTruth) -> Result<Vec<f64>> {
    let r = params.residual(gt)?;
    let l = params.order as i32;
    let mut gu = Vec::with_capacity(params.width());
    let mut gc = Vec::with_capacity(params.width());
    for (i, col) in params.u.iter().enumerate() {
        let v = r.contract_power_leave_one(col)?;
        let ci = params.c[i];
        let a = params.a[i];
        let full = crate::tensor::dot(&v, col);
        gc.push((l - 2) as f64 * a * ci.powi(l - 3) * full);
        gu.push(v.iter().map(|x| l as f64 * a * ci.powi(l - 2) * x).collect::<Vec<_>>());
    }
    Ok(flatten_columns(&gu, &gc))
}

pub fn two_homo_flatten(params: &ModelParams) -> Vec<f64> {
    flatten_columns(&params.u, &params.c)
}

/// Numerical evidence of (non-strict) local minimality at a point.
#[derive(Clone, Debug)]
pub struct StationarityReport {
    /// Analytic gradient norm when supplied, otherwise the finite-difference one.
    pub grad_norm: f64,
    pub fd_grad_norm: f64,
    /// `(f(x + tΔ) − f(x)) / t²` for random unit directions `Δ`.
    pub quotients: Vec<f64>,
    pub min_quotient: f64,
    pub loss: f64,
}

/// Central-difference step for the gradient estimate.
const FD_STEP: f64 = 1e-6;

pub fn certify_stationary<F, R>(
    loss_fn: F,
    point: &[f64],
    analytic_grad: Option<&[f64]>,
    probes: usize,
    t: f64,
    rng: &mut R,
) -> Result<StationarityReport>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    if !(t > 0.0) || probes == 0 || point.is_empty() {
        return Err(Error::InvalidParameter("need t > 0, probes >= 1 and a non-empty point".into()));
    }
    let loss = loss_fn(point);
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss at the probed point".into()));
    }
    let mut x = point.to_vec();
    let mut fd_sq = 0.0;
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + FD_STEP;
        let fp = loss_fn(&x);
        x[k] = orig - FD_STEP;
        let fm = loss_fn(&x);
        x[k] = orig;
        let g = (fp - fm) / (2.0 * FD_STEP);
        fd_sq += g * g;
    }
    let fd_grad_norm = fd_sq.sqrt();
    let grad_norm = match analytic_grad {
        Some(g) => g.iter().map(|v| v * v).sum::<f64>().sqrt(),
        None => fd_grad_norm,
    };
    let mut quotients = Vec::with_capacity(probes);
    for _ in 0..probes {
        let dir = unit_sphere(rng, point.len());
        let moved: Vec<f64> = point.iter().zip(&dir).map(|(p, d)| p + t * d).collect();
        let q = (loss_fn(&moved) - loss) / (t * t);
        if !q.is_finite() {
            return Err(Error::NonFinite("loss along a probe direction".into()));
        }
        quotients.push(q);
    }
    let min_quotient = quotients.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(StationarityReport { grad_norm, fd_grad_norm, quotients, min_quotient, loss })
}

/// Number of unit-entry patterns in `R`: `r·C(l,2)`, i.e. `‖R‖²`.
pub fn residual_r_norm_sq(rank: usize, order: usize) -> usize {
    rank * binomial2(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, SeedStream};

    #[test]
    fn residual_l3_r1_entries() {
        let r = residual_r(3, 1, 3).unwrap();
        let nonzero: Vec<Vec<usize>> = (0..r.len())
            .filter(|&o| r.as_slice()[o] != 0.0)
            .map(|o| r.multi_index(o))
            .collect();
        assert_eq!(nonzero, vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]]);
        assert!(r.as_slice().iter().all(|&x| x == 0.0 || x == 1.0));
        assert!((r.frobenius_norm() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn residual_properties() {
        for (d, rank, l) in [(4, 2, 3), (5, 1, 4), (6, 3, 3), (5, 3, 4)] {
            let r = residual_r(d, rank, l).unwrap();
            assert_eq!(r.frobenius_inner(&r).unwrap(), residual_r_norm_sq(rank, l) as f64);
            assert!(r.asymmetry() == 0.0 && r.is_symmetric());
            let e1 = basis_vec(d, 0);
            assert_eq!(r.frobenius_inner(&SymTensor::outer_power(&e1, l).unwrap()).unwrap(), 0.0);
            assert!(r.contract_power_leave_one(&e1).unwrap().iter().all(|&x| x == 0.0));
        }
        assert!(residual_r(3, 3, 3).is_err());
        assert!(residual_r(4, 1, 2).is_err());
    }

    #[test]
    fn vandermonde_hand_solved_l3() {
        let w = vandermonde_rank_one_split(3, &[1.0, -1.0, 2.0, -2.0]).unwrap();
        let expected = [-1.0 / 6.0, -1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn vandermonde_moments_and_reconstruction() {
        for l in 3..=5 {
            let nodes = default_nodes(l);
            let w = vandermonde_rank_one_split(l, &nodes).unwrap();
            for k in 0..=l {
                let m: f64 = w.iter().zip(&nodes).map(|(wi, b)| wi * b.powi(k as i32)).sum();
                let target = if k == 2 { 1.0 } else { 0.0 };
                assert!((m - target).abs() < 1e-10, "l={l} k={k} moment {m}");
            }
            let terms = split_terms(4, l, 1, 0, 1.0).unwrap();
            let mut t = assemble_terms(l, &terms).unwrap();
            t.axpy(-1.0, &pair_pattern(4, l, 1, 0).unwrap()).unwrap();
            assert!(t.frobenius_norm() <= 1e-9);
        }
    }

    #[test]
    fn vandermonde_duplicate_nodes_are_singular() {
        assert!(matches!(
            vandermonde_rank_one_split(3, &[1.0, 1.0, 2.0, 3.0]),
            Err(Error::Singular(_))
        ));
        assert!(vandermonde_rank_one_split(3, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn vanilla_bad_point_value_and_gradient() {
        let p = bad_local_min_vanilla(4, 2, 3, vanilla_min_width(2, 3)).unwrap();
        assert!((p.loss().unwrap() - 3.0).abs() < 1e-12);
        let g = p.flat_gradient().unwrap();
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-12);
        assert!(bad_local_min_vanilla(4, 2, 3, 8).is_err());
    }

    #[test]
    fn global_min_counts_and_residual() {
        let terms = global_min_decomposition(4, 2, 3).unwrap();
        assert_eq!(terms.len(), 9);
        let p = bad_local_min_vanilla(3, 1, 3, vanilla_min_width(1, 3)).unwrap();
        let mut t = assemble_terms(3, &global_min_decomposition(3, 1, 3).unwrap()).unwrap();
        t.axpy(-1.0, &p.gt.tensor).unwrap();
        assert!(t.frobenius_norm() <= 1e-9);
    }

    #[test]
    fn two_homo_point() {
        let (params, gt) = bad_local_min_2homo(5, 1, 3, two_homo_min_width(1, 3)).unwrap();
        let loss = params.loss(&gt, 0.0).unwrap();
        assert!((loss - 3.0).abs() < 1e-12);
        let g = two_homo_free_grad(&params, &gt).unwrap();
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-12);
        let terms = global_min_decomposition_2homo(5, 1, 3).unwrap();
        assert_eq!(terms.len(), 2 * (3 + 1) + 2);
        let mut t = assemble_terms(3, &terms).unwrap();
        t.axpy(-1.0, &gt.tensor).unwrap();
        assert!(t.frobenius_norm() <= 1e-9);
        assert!(bad_local_min_2homo(3, 2, 3, 100).is_err());
    }

    #[test]
    fn certify_quadratic_bowl() {
        let mut rng = SeedStream::new(0).substream(Purpose::Probe, 0, 0);
        let f = |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let rep = certify_stationary(f, &[0.0; 5], None, 50, 1e-3, &mut rng).unwrap();
        assert!(rep.grad_norm <= 1e-8);
        for q in &rep.quotients {
            assert!((q - 0.5).abs() < 1e-9);
        }
        assert!(certify_stationary(f, &[0.0; 5], None, 0, 1e-3, &mut rng).is_err());
        let nan = |_: &[f64]| f64::NAN;
        assert!(matches!(
            certify_stationary(nan, &[0.0; 2], None, 1, 1e-3, &mut rng),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn certify_vanilla_bad_point() {
        let p = bad_local_min_vanilla(4, 2, 3, vanilla_min_width(2, 3)).unwrap();
        let g = p.flat_gradient().unwrap();
        let mut rng = SeedStream::new(1).substream(Purpose::Probe, 0, 0);
        let rep = certify_stationary(|x| p.loss_at(x), &p.flatten(), Some(&g), 200, 1e-4, &mut rng).unwrap();
        assert!(rep.grad_norm <= 1e-12);
        assert!(rep.fd_grad_norm <= 1e-6);
        assert!((rep.loss - 3.0).abs() < 1e-12);
        assert!(rep.min_quotient >= -1e-6, "min quotient {}", rep.min_quotient);
    }
}
