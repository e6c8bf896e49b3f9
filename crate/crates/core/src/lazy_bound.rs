//! Lower bound on what a lazily trained (linearized) model can capture.
//!
//! Around an initialization `U`, a linearized model only moves inside the
//! tangent subspace spanned by `P_sym vec(u_i^{⊗(l−1)} ⊗ e_j)`, of dimension at
//! most `dm`. For `u* ~ Unif(S^{d−1})` the expected squared norm of the part of
//! `vec(u*^{⊗l})` orthogonal to that subspace is at least
//!
//! `max(0, C(d+l−1, l) − dm) · Γ(d/2) l! / (2^l Γ(l + d/2))`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{standard_normal_vec, unit_sphere, Purpose, SeedStream};
use crate::tensor::{dot, orthonormalize, SubspaceBasis, SymTensor};

/// Largest `d^l` for which tensors are materialized.
pub const MAX_ENTRIES: usize = 2_000_000;

/// Samples handled by one independent substream in the Monte-Carlo loops.
const CHUNK: usize = 1024;

fn guard(dim: usize, order: usize) -> Result<usize> {
    let limit = MAX_ENTRIES;
    let mut entries: usize = 1;
    for _ in 0..order {
        entries = entries.checked_mul(dim).filter(|&e| e <= limit).ok_or(Error::DimensionGuard {
            entries: (dim as f64).powi(order as i32) as usize,
            limit,
        })?;
    }
    Ok(entries)
}

/// `Γ(d/2) l! / (2^l Γ(l + d/2)) = l! / Π_{k<l} (d + 2k)` and
/// `C(d+l−1, l) = Π_{k<l} (d + k) / l!`, so the bound is
/// `(Π_{k<l}(d+k) − dm·l!) / Π_{k<l}(d+2k)`.
///
/// Evaluated in exact integer arithmetic while it fits, which keeps the result
/// correctly rounded; otherwise as a product of ratios.
pub fn analytic_lower_bound(dim: usize, order: usize, width: usize) -> f64 {
    if let Some(v) = exact_bound(dim as u128, order as u128, width as u128) {
        return v;
    }
    let (d, m) = (dim as f64, width as f64);
    let mut fraction = 1.0; // Π (d+k)/(d+2k)
    let mut tail = d * m; // dm · l! / Π (d+2k)
    for k in 0..order {
        let k = k as f64;
        fraction *= (d + k) / (d + 2.0 * k);
        tail *= (k + 1.0) / (d + 2.0 * k);
    }
    (fraction - tail).max(0.0)
}

fn exact_bound(d: u128, l: u128, m: u128) -> Option<f64> {
    const EXACT: u128 = 1 << 53;
    let mut rising = 1u128;
    let mut spread = 1u128;
    let mut fact = 1u128;
    for k in 0..l {
        rising = rising.checked_mul(d + k)?;
        spread = spread.checked_mul(d + 2 * k)?;
        fact = fact.checked_mul(k + 1)?;
    }
    let used = d.checked_mul(m)?.checked_mul(fact)?;
    if used >= rising {
        return Some(0.0);
    }
    let num = rising - used;
    (num < EXACT && spread < EXACT).then(|| num as f64 / spread as f64)
}

/// `C(d+l−1, l)`, the dimension of the space of symmetric order-`l` tensors.
pub fn symmetric_dimension(dim: usize, order: usize) -> f64 {
    (0..order).fold(1.0, |acc, k| acc * (dim + k) as f64 / (k + 1) as f64).round()
}

/// Orthonormal basis of `span{P_sym vec(u_i^{⊗(l−1)} ⊗ e_j)}` inside `R^{d^l}`;
/// `None` when `U` has no columns.
pub fn tangent_subspace_basis(u: &[Vec<f64>], order: usize) -> Result<Option<SubspaceBasis>> {
    let Some(first) = u.first() else {
        return Ok(None);
    };
    let dim = first.len();
    if order == 0 || dim == 0 || u.iter().any(|c| c.len() != dim) {
        return Err(Error::ShapeMismatch("tangent basis needs equal-length nonempty columns and l ≥ 1".into()));
    }
    guard(dim, order)?;
    let mut generators = Vec::with_capacity(u.len() * dim);
    let mut unit = vec![0.0; dim];
    for col in u {
        for j in 0..dim {
            unit[j] = 1.0;
            let mut acc = SymTensor::zeros(order, dim)?;
            for slot in 0..order {
                let factors: Vec<&[f64]> =
                    (0..order).map(|s| if s == slot { &unit[..] } else { &col[..] }).collect();
                acc.axpy(1.0 / order as f64, &SymTensor::outer(&factors)?)?;
            }
            unit[j] = 0.0;
            generators.push(acc.into_vec());
        }
    }
    match orthonormalize(&generators) {
        Ok(b) => Ok(Some(b)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Draws `n` values in fixed-size chunks, each chunk on its own substream, so
/// the result does not depend on the thread count.
fn chunked_samples<F>(seeds: &SeedStream, tag: u64, n: usize, draw: F) -> Vec<f64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = seeds.substream(Purpose::MonteCarlo, tag, c as u64 + 1);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// `E‖v − BBᵀv‖²` for `v = vec(u*^{⊗l})`, `u* ~ Unif(S^{d−1})`, with `B` the
/// tangent basis at `m` random unit columns.
pub fn mc_orthogonal_projection(
    dim: usize,
    order: usize,
    width: usize,
    samples: usize,
    seeds: &SeedStream,
) -> Result<McEstimate> {
    guard(dim, order)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let mut rng = seeds.substream(Purpose::MonteCarlo, 0, 0);
    let u: Vec<Vec<f64>> = (0..width).map(|_| unit_sphere(&mut rng, dim)).collect();
    let basis = tangent_subspace_basis(&u, order)?;
    let values = chunked_samples(seeds, 0, samples, |rng| {
        let star = unit_sphere(rng, dim);
        let v = SymTensor::outer_power(&star, order).expect("guarded shape").into_vec();
        match &basis {
            None => dot(&v, &v),
            Some(b) => {
                let p = b.project(&v);
                v.iter().zip(&p).map(|(x, y)| (x - y) * (x - y)).sum()
            }
        }
    });
    let (estimate, stderr) = mean_stderr(&values);
    Ok(McEstimate { estimate, stderr, samples })
}

/// One row of the lazy-bound curve.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundPoint {
    pub d: usize,
    pub l: usize,
    pub log_d_m: f64,
    pub m: usize,
    pub analytic_bound: f64,
    pub mc: Option<McEstimate>,
}

pub const CSV_HEADER: &str = "d,l,log_d_m,m,analytic_bound";
pub const CSV_HEADER_MC: &str = "d,l,log_d_m,m,analytic_bound,mc_estimate,mc_stderr,mc_samples";

impl BoundPoint {
    pub fn csv_row(&self) -> String {
        let base = format!("{},{},{},{},{}", self.d, self.l, self.log_d_m, self.m, self.analytic_bound);
        match &self.mc {
            Some(mc) => format!("{base},{},{},{}", mc.estimate, mc.stderr, mc.samples),
            None => base,
        }
    }
}

/// Analytic bound at `m = round(d^x)` for every `d` and exponent `x`.
pub fn figure_curve(d_values: &[usize], order: usize, exponents: &[f64]) -> Result<Vec<BoundPoint>> {
    if order == 0 || d_values.contains(&0) || exponents.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("grid needs d ≥ 1, l ≥ 1 and finite exponents".into()));
    }
    let mut out = Vec::with_capacity(d_values.len() * exponents.len());
    for &d in d_values {
        for &x in exponents {
            let m = (d as f64).powf(x).round() as usize;
            out.push(BoundPoint { d, l: order, log_d_m: x, m, analytic_bound: analytic_lower_bound(d, order, m), mc: None });
        }
    }
    Ok(out)
}

/// Smallest exponent whose bound is below half the `m = 1` bound.
pub fn half_drop_threshold(points: &[BoundPoint]) -> Option<f64> {
    let first = points.first()?;
    let reference = 0.5 * analytic_lower_bound(first.d, first.l, 1);
    points.iter().find(|p| p.analytic_bound < reference).map(|p| p.log_d_m)
}

/// Inclusive grid `start, start+step, …` up to `stop` (with a small tolerance).
pub fn exponent_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::InvalidParameter(format!("bad grid {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // rounded so that 0.1-step grids print as 0.3 rather than 0.30000000000000004
    Ok((0..=n).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect())
}

/// Random symmetric tensor of unit Frobenius norm.
pub fn random_symmetric_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize, order: usize) -> Result<SymTensor> {
    let entries = guard(dim, order)?;
    let raw: Vec<f64> = (0..entries).map(|_| rng.sample(StandardNormal)).collect();
    let mut t = SymTensor::from_vec(order, dim, raw)?.symmetrize();
    let n = t.frobenius_norm();
    t.scale(1.0 / n);
    Ok(t)
}

/// Monte-Carlo estimate of `bᵀ E[vec(u^{⊗l}) vec(u^{⊗l})ᵀ] b = E[⟨b, u^{⊗l}⟩²]`, `u ~ N(0, I_d)`.
pub fn wick_quadratic_form(b: &SymTensor, samples: usize, seeds: &SeedStream, tag: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let dim = b.dim();
    let values = chunked_samples(seeds, tag, samples, |rng| {
        let u = standard_normal_vec(rng, dim);
        let s = b.contract_power(&u).expect("matching dimension");
        s * s
    });
    let (estimate, stderr) = mean_stderr(&values);
    Ok(McEstimate { estimate, stderr, samples })
}

/// Minimum of [`wick_quadratic_form`] over `directions` random symmetric unit `b`.
pub fn empirical_wick_floor(
    dim: usize,
    order: usize,
    samples: usize,
    directions: usize,
    seeds: &SeedStream,
) -> Result<McEstimate> {
    if directions == 0 {
        return Err(Error::InvalidParameter("need at least one direction".into()));
    }
    let mut worst: Option<McEstimate> = None;
    for k in 0..directions {
        let b = random_symmetric_unit(&mut seeds.substream(Purpose::Probe, k as u64, 0), dim, order)?;
        let est = wick_quadratic_form(&b, samples, seeds, k as u64 + 1)?;
        if worst.is_none_or(|w| est.estimate < w.estimate) {
            worst = Some(est);
        }
    }
    Ok(worst.expect("directions ≥ 1"))
}
