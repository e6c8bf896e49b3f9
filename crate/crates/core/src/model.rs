//! The two parameterizations of the learner and their losses.
//!
//! * vanilla: `T_v = Σ c_i u_i^{⊗l}` with loss `½‖T_v − T*‖²`;
//! * 2-homogeneous: `T = Σ a_i c_i^{l−2} u_i^{⊗l}` with `a_i = ±1` and the
//!   regularized loss `½‖T − T*‖² + λ Σ ĉ_i^{l−2} ‖u_i‖^l`.
//!
//! Gradients with respect to `U` treat `c` and `ĉ` as constants, which is
//! what the re-initializing gradient descent in [`crate::optimizer`] steps on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{standard_normal_vec, unit_sphere};
use crate::tensor::{norm, orthonormalize, SubspaceBasis, SymTensor};

/// Learner state for the 2-homogeneous model. Column `i` of `U` is `u[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub order: usize,
    pub u: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub c_hat: Vec<f64>,
    /// Signs `a_i ∈ {−1, +1}`.
    pub a: Vec<f64>,
    /// Whether the scalar mode switch already fired since the last (re)initialization.
    pub switched: Vec<bool>,
}

impl ModelParams {
    /// Builds parameters with `c`, `ĉ` coupled to the column norms:
    /// `ĉ_i = 1/‖u_i‖`, and `c_i = switch_scale/‖u_i‖` before the switch, `1/‖u_i‖` after.
    pub fn coupled(
        order: usize,
        u: Vec<Vec<f64>>,
        a: Vec<f64>,
        switched: Vec<bool>,
        switch_scale: f64,
    ) -> Result<Self> {
        let m = u.len();
        if m == 0 || a.len() != m || switched.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "{} columns, {} signs, {} switch flags",
                m,
                a.len(),
                switched.len()
            )));
        }
        let dim = u[0].len();
        if dim == 0 || u.iter().any(|col| col.len() != dim) {
            return Err(Error::ShapeMismatch("columns of U differ in length".into()));
        }
        if a.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidParameter("signs must be ±1".into()));
        }
        let mut c = Vec::with_capacity(m);
        let mut c_hat = Vec::with_capacity(m);
        for (i, col) in u.iter().enumerate() {
            let n = norm(col);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::ComponentCollapse { index: i });
            }
            c_hat.push(1.0 / n);
            c.push(if switched[i] { 1.0 / n } else { switch_scale / n });
        }
        Ok(Self { order, u, c, c_hat, a, switched })
    }

    pub fn dim(&self) -> usize {
        self.u[0].len()
    }

    pub fn width(&self) -> usize {
        self.u.len()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.u.iter().map(|col| norm(col)).collect()
    }

    /// Coefficient `a_i c_i^{l−2}` multiplying `u_i^{⊗l}`.
    pub fn coefficient(&self, i: usize) -> f64 {
        self.a[i] * self.c[i].powi(self.order as i32 - 2)
    }

    /// `T = Σ a_i c_i^{l−2} u_i^{⊗l}`.
    pub fn assemble(&self) -> SymTensor {
        let mut t = SymTensor::zeros(self.order, self.dim()).expect("validated shape");
        for (i, col) in self.u.iter().enumerate() {
            t.add_scaled_outer_power(self.coefficient(i), col).expect("validated shape");
        }
        t
    }

    /// `T − T*`.
    pub fn residual(&self, gt: &GroundTruth) -> Result<SymTensor> {
        check_gt(self.order, self.dim(), gt)?;
        let mut r = self.assemble();
        r.axpy(-1.0, &gt.tensor)?;
        Ok(r)
    }

    /// `λ Σ ĉ_i^{l−2} ‖u_i‖^l`, evaluated literally.
    pub fn regularizer(&self, lambda: f64) -> f64 {
        let l = self.order as i32;
        lambda
            * self
                .u
                .iter()
                .zip(&self.c_hat)
                .map(|(col, ch)| ch.powi(l - 2) * norm(col).powi(l))
                .sum::<f64>()
    }

    pub fn loss(&self, gt: &GroundTruth, lambda: f64) -> Result<f64> {
        let r = self.residual(gt)?;
        Ok(loss_from_residual(&r, self, lambda))
    }

    /// `∇_U f` with `c`, `ĉ` frozen. Returns one gradient column per component.
    pub fn grad_u(&self, gt: &GroundTruth, lambda: f64) -> Result<Vec<Vec<f64>>> {
        let r = self.residual(gt)?;
        self.grad_u_from_residual(&r, lambda)
    }

    /// Column `i`: `l a_i c_i^{l−2} R(u_i^{⊗(l−1)}, I) + λ l ĉ_i^{l−2} ‖u_i‖^{l−2} u_i`,
    /// with the residual `R = T − T*` supplied by the caller.
    pub fn grad_u_from_residual(&self, residual: &SymTensor, lambda: f64) -> Result<Vec<Vec<f64>>> {
        let l = self.order as f64;
        let li = self.order as i32;
        self.u
            .iter()
            .enumerate()
            .map(|(i, col)| {
                let mut g = residual.contract_power_leave_one(col)?;
                let fit = l * self.coefficient(i);
                let reg = lambda * l * self.c_hat[i].powi(li - 2) * norm(col).powi(li - 2);
                for (gk, uk) in g.iter_mut().zip(col) {
                    *gk = fit * *gk + reg * uk;
                }
                Ok(g)
            })
            .collect()
    }

    /// Largest violation of the coupling invariants `ĉ_i‖u_i‖ = 1` and
    /// `c_i‖u_i‖ = switch_scale` (pre-switch) or `1` (post-switch), as relative error.
    pub fn coupling_error(&self, switch_scale: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, col) in self.u.iter().enumerate() {
            let n = norm(col);
            worst = worst.max((self.c_hat[i] * n - 1.0).abs());
            let target = if self.switched[i] { 1.0 } else { switch_scale };
            worst = worst.max((self.c[i] * n - target).abs() / target);
        }
        worst
    }
}

pub(crate) fn loss_from_residual(r: &SymTensor, params: &ModelParams, lambda: f64) -> f64 {
    let fit = r.frobenius_norm();
    0.5 * fit * fit + params.regularizer(lambda)
}

fn check_gt(order: usize, dim: usize, gt: &GroundTruth) -> Result<()> {
    if gt.tensor.order() != order || gt.tensor.dim() != dim {
        return Err(Error::ShapeMismatch(format!(
            "model (l={order}, d={dim}) against ground truth (l={}, d={})",
            gt.tensor.order(),
            gt.tensor.dim()
        )));
    }
    Ok(())
}

/// Rank-`r` target `T* = Σ c*_i (u*_i)^{⊗l}` together with an orthonormal basis
/// of `S = span{u*_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub weights: Vec<f64>,
    /// Unit-norm components.
    pub components: Vec<Vec<f64>>,
    pub basis: SubspaceBasis,
    pub tensor: SymTensor,
}

impl GroundTruth {
    /// Assembles `T*` from arbitrary (not necessarily unit) components; each
    /// component norm is folded into its weight.
    pub fn from_components(order: usize, weights: Vec<f64>, components: Vec<Vec<f64>>) -> Result<Self> {
        let (weights, components) = normalize_components(order, weights, components)?;
        let dim = components[0].len();
        let mut tensor = SymTensor::zeros(order, dim)?;
        for (w, u) in weights.iter().zip(&components) {
            tensor.add_scaled_outer_power(*w, u)?;
        }
        let basis = orthonormalize(&components)?;
        Ok(Self { weights, components, basis, tensor })
    }

    /// Uses `tensor` as `T*` verbatim; the components only define the subspace `S`.
    pub fn with_tensor(tensor: SymTensor, weights: Vec<f64>, components: Vec<Vec<f64>>) -> Result<Self> {
        let (weights, components) = normalize_components(tensor.order(), weights, components)?;
        if components[0].len() != tensor.dim() {
            return Err(Error::ShapeMismatch("components do not match tensor dimension".into()));
        }
        let basis = orthonormalize(&components)?;
        Ok(Self { weights, components, basis, tensor })
    }

    /// Random target: `r` uniform unit components and standard normal weights,
    /// rescaled so that `‖T*‖_F = 1`.
    pub fn random<R: Rng + ?Sized>(dim: usize, rank: usize, order: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 || rank == 0 || order == 0 {
            return Err(Error::InvalidParameter("d, r, l must be positive".into()));
        }
        loop {
            let components: Vec<Vec<f64>> = (0..rank).map(|_| unit_sphere(rng, dim)).collect();
            let weights = standard_normal_vec(rng, rank);
            let gt = Self::from_components(order, weights, components)?;
            let n = gt.tensor.frobenius_norm();
            if n > 1e-8 {
                return gt.rescaled(1.0 / n);
            }
        }
    }

    /// Multiplies every weight (and the tensor) by `s`.
    pub fn rescaled(mut self, s: f64) -> Result<Self> {
        self.weights.iter_mut().for_each(|w| *w *= s);
        self.tensor.scale(s);
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.tensor.order()
    }

    pub fn dim(&self) -> usize {
        self.tensor.dim()
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }
}

fn normalize_components(
    order: usize,
    mut weights: Vec<f64>,
    mut components: Vec<Vec<f64>>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if components.is_empty() || weights.len() != components.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} components",
            weights.len(),
            components.len()
        )));
    }
    let dim = components[0].len();
    for (w, u) in weights.iter_mut().zip(components.iter_mut()) {
        if u.len() != dim {
            return Err(Error::ShapeMismatch("components differ in length".into()));
        }
        let n = norm(u);
        if !(n > 0.0) {
            return Err(Error::Degenerate("zero ground-truth component".into()));
        }
        u.iter_mut().for_each(|x| *x /= n);
        *w *= n.powi(order as i32);
    }
    Ok((weights, components))
}

/// On-disk description of a ground truth: `{"order": l, "weights": [...], "components": [[...], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub order: usize,
    pub weights: Vec<f64>,
    pub components: Vec<Vec<f64>>,
}

impl GroundTruthSpec {
    pub fn build(&self) -> Result<GroundTruth> {
        GroundTruth::from_components(self.order, self.weights.clone(), self.components.clone())
    }
}

impl From<&GroundTruth> for GroundTruthSpec {
    fn from(gt: &GroundTruth) -> Self {
        Self { order: gt.order(), weights: gt.weights.clone(), components: gt.components.clone() }
    }
}

/// Inputs of the re-initializing gradient descent.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub dim: usize,
    pub order: usize,
    pub rank: usize,
    pub width: usize,
    pub lambda: f64,
    pub delta: f64,
    pub eta: f64,
    pub iters_per_epoch: usize,
    pub epochs: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Hyperparams {
    /// Desk-scale defaults: `δ = 1e−3`, `η = 1e−2 / d^{(l−2)/2}`, `λ = 0.1 ε`, `H = 2000`.
    pub fn desk(dim: usize, order: usize, rank: usize, width: usize, epsilon: f64, epochs: usize, seed: u64) -> Self {
        Self {
            dim,
            order,
            rank,
            width,
            lambda: 0.1 * epsilon,
            delta: 1e-3,
            eta: 1e-2 / (dim as f64).powf((order as f64 - 2.0) / 2.0),
            iters_per_epoch: 2000,
            epochs,
            epsilon,
            seed,
        }
    }

    /// `√(d(m+K))`, the pre-switch factor in `c_i`.
    pub fn switch_scale(&self) -> f64 {
        ((self.dim * (self.width + self.epochs)) as f64).sqrt()
    }

    /// `2√(m+K) δ`, the norm a component must cross to trigger the switch.
    pub fn switch_threshold(&self) -> f64 {
        2.0 * ((self.width + self.epochs) as f64).sqrt() * self.delta
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.dim == 0 || self.order == 0 || self.rank == 0 || self.width == 0 {
            return bad("d, l, r, m must be positive");
        }
        for (name, v) in [("delta", self.delta), ("eta", self.eta), ("epsilon", self.epsilon)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(&format!("{name} must be positive and finite"));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be non-negative and finite");
        }
        Ok(())
    }
}

/// `T_v = Σ c_i u_i^{⊗l}`.
pub fn vanilla_assemble(order: usize, u: &[Vec<f64>], c: &[f64]) -> Result<SymTensor> {
    if u.is_empty() || u.len() != c.len() {
        return Err(Error::ShapeMismatch(format!("{} columns for {} scalars", u.len(), c.len())));
    }
    let mut t = SymTensor::zeros(order, u[0].len())?;
    for (col, &ci) in u.iter().zip(c) {
        t.add_scaled_outer_power(ci, col)?;
    }
    Ok(t)
}

fn vanilla_residual(u: &[Vec<f64>], c: &[f64], gt: &GroundTruth) -> Result<SymTensor> {
    let mut r = vanilla_assemble(gt.order(), u, c)?;
    r.axpy(-1.0, &gt.tensor)?;
    Ok(r)
}

/// `½‖Σ c_i u_i^{⊗l} − T*‖²`.
pub fn vanilla_loss(u: &[Vec<f64>], c: &[f64], gt: &GroundTruth) -> Result<f64> {
    let r = vanilla_residual(u, c, gt)?;
    let n = r.frobenius_norm();
    Ok(0.5 * n * n)
}

/// `(∇_U f_v, ∇_c f_v)` with `∇_{u_i} = l c_i R(u_i^{⊗(l−1)}, I)` and `∇_{c_i} = R(u_i^{⊗l})`.
pub fn vanilla_grad(u: &[Vec<f64>], c: &[f64], gt: &GroundTruth) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let r = vanilla_residual(u, c, gt)?;
    vanilla_grad_from_residual(u, c, &r)
}

pub(crate) fn vanilla_grad_from_residual(
    u: &[Vec<f64>],
    c: &[f64],
    r: &SymTensor,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let l = r.order() as f64;
    let mut gu = Vec::with_capacity(u.len());
    let mut gc = Vec::with_capacity(u.len());
    for (col, &ci) in u.iter().zip(c) {
        let v = r.contract_power_leave_one(col)?;
        gc.push(crate::tensor::dot(&v, col));
        gu.push(v.into_iter().map(|x| l * ci * x).collect());
    }
    Ok((gu, gc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, SeedStream};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn unit_gt(d: usize, l: usize) -> GroundTruth {
        GroundTruth::from_components(l, vec![1.0], vec![e(d, 0)]).unwrap()
    }

    #[test]
    fn assemble_single_component() {
        let p = ModelParams::coupled(3, vec![e(3, 0)], vec![1.0], vec![true], 10.0).unwrap();
        assert_eq!(p.assemble(), SymTensor::outer_power(&e(3, 0), 3).unwrap());
    }

    #[test]
    fn assemble_cancels_opposite_signs() {
        let u = vec![vec![0.3, -0.2, 0.5]; 2];
        let p = ModelParams::coupled(3, u, vec![1.0, -1.0], vec![true, true], 1.0).unwrap();
        assert!(p.assemble().frobenius_norm() == 0.0);
        assert!(p.assemble().is_symmetric());
    }

    #[test]
    fn two_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for l in 3..=4 {
            let u0 = unit_sphere(&mut rng, 4);
            let base = ModelParams::coupled(l, vec![u0.clone()], vec![1.0], vec![true], 1.0).unwrap();
            let t0 = base.assemble();
            for s in [0.5, 2.0, 10.0] {
                let us: Vec<f64> = u0.iter().map(|x| s * x).collect();
                let p = ModelParams::coupled(l, vec![us], vec![1.0], vec![true], 1.0).unwrap();
                let t = p.assemble();
                for (a, b) in t.as_slice().iter().zip(t0.as_slice()) {
                    assert!((a - s * s * b).abs() <= 1e-12 * (1.0 + (s * s * b).abs()));
                }
            }
        }
    }

    #[test]
    fn loss_examples() {
        let gt = unit_gt(3, 3);
        let exact = ModelParams::coupled(3, vec![e(3, 0)], vec![1.0], vec![true], 1.0).unwrap();
        assert_eq!(exact.loss(&gt, 0.0).unwrap(), 0.0);

        let cancel =
            ModelParams::coupled(3, vec![e(3, 1), e(3, 1)], vec![1.0, -1.0], vec![true, true], 1.0).unwrap();
        assert!((cancel.loss(&gt, 0.0).unwrap() - 0.5).abs() < 1e-15);

        let s = 0.7;
        let p = ModelParams::coupled(3, vec![vec![0.0, s, 0.0]], vec![1.0], vec![false], 5.0).unwrap();
        assert!((p.regularizer(0.3) - 0.3 * s * s).abs() < 1e-15);
    }

    #[test]
    fn grad_zero_at_exact_fit() {
        let gt = unit_gt(3, 3);
        let p = ModelParams::coupled(3, vec![e(3, 0)], vec![1.0], vec![true], 1.0).unwrap();
        let g = p.grad_u(&gt, 0.0).unwrap();
        assert!(g[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn grad_regularizer_only() {
        // T = T* exactly so only λ l u remains: (3, 0) for λ = 1, l = 3, u = e1.
        let gt = GroundTruth::from_components(3, vec![1.0], vec![e(2, 0)]).unwrap();
        let p = ModelParams::coupled(3, vec![e(2, 0)], vec![1.0], vec![true], 1.0).unwrap();
        let g = p.grad_u(&gt, 1.0).unwrap();
        assert_eq!(g[0], vec![3.0, 0.0]);
    }

    #[test]
    fn regularizer_gradient_matches_coupled_shortcut() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gt = GroundTruth::random(5, 2, 3, &mut rng).unwrap();
        let u: Vec<Vec<f64>> = (0..4).map(|_| standard_normal_vec(&mut rng, 5)).collect();
        let p = ModelParams::coupled(3, u, vec![1.0, -1.0, 1.0, 1.0], vec![false; 4], 3.0).unwrap();
        let full = p.grad_u(&gt, 0.4).unwrap();
        let fit_only = p.grad_u(&gt, 0.0).unwrap();
        for (i, col) in p.u.iter().enumerate() {
            for k in 0..5 {
                let reg = full[i][k] - fit_only[i][k];
                assert!((reg - 0.4 * 3.0 * col[k]).abs() <= 1e-9 * (1.0 + col[k].abs()));
            }
        }
    }

    #[test]
    fn vanilla_exact_fit_has_zero_loss_and_gradient() {
        let gt = GroundTruth::from_components(3, vec![2.0, -1.0], vec![e(4, 0), e(4, 2)]).unwrap();
        let u = vec![e(4, 0), e(4, 2)];
        let c = vec![2.0, -1.0];
        assert_eq!(vanilla_loss(&u, &c, &gt).unwrap(), 0.0);
        let (gu, gc) = vanilla_grad(&u, &c, &gt).unwrap();
        assert!(gu.iter().flatten().all(|&x| x == 0.0));
        assert!(gc.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn random_ground_truth_is_normalized_and_spanned() {
        let s = SeedStream::new(2);
        for trial in 0..20 {
            let mut rng = s.substream(Purpose::GroundTruth, trial, 0);
            let gt = GroundTruth::random(6, 3, 3, &mut rng).unwrap();
            assert!((gt.tensor.frobenius_norm() - 1.0).abs() < 1e-9);
            for u in &gt.components {
                assert!(norm(&gt.basis.project_orthogonal(u)) < 1e-10);
                assert!((norm(u) - 1.0).abs() < 1e-12);
            }
            assert!(gt.tensor.asymmetry() < 1e-15);
        }
    }

    #[test]
    fn coupling_invariants() {
        let p = ModelParams::coupled(3, vec![vec![0.0, 2.0], vec![0.5, 0.0]], vec![1.0, -1.0], vec![false, true], 7.0)
            .unwrap();
        assert!(p.coupling_error(7.0) < 1e-12);
        assert!(ModelParams::coupled(3, vec![vec![0.0, 0.0]], vec![1.0], vec![false], 1.0).is_err());
        assert!(ModelParams::coupled(3, vec![vec![1.0, 0.0]], vec![0.5], vec![false], 1.0).is_err());
    }

    #[test]
    fn hyperparams_desk_defaults() {
        let h = Hyperparams::desk(4, 3, 1, 2, 0.05, 2, 0);
        assert_eq!(h.switch_scale(), 4.0);
        assert!((h.eta - 1e-2 / 2.0).abs() < 1e-15);
        assert!((h.lambda - 0.005).abs() < 1e-15);
        assert!(h.validate().is_ok());
        let mut bad = h.clone();
        bad.eta = 0.0;
        assert!(bad.validate().is_err());
    }
}
