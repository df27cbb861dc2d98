//! Initial-uncertainty models and raw-moment propagation through
//! polynomials.
//!
//! Uncertainties are independent per axis in RTN coordinates of each object
//! (diagonal normal or uniform box). Expectations of polynomial random
//! variables follow from linearity: E[P(du)] is the coefficient-weighted
//! sum of monomial moments, each a product of univariate raw moments. The
//! moment sequence of the squared closest-approach distance, m_k =
//! E[(P_D2)^k], is obtained by polynomial powers at extended order.

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::eventmap::CaTaylorMaps;
use crate::poly::{algebra_size, compose_many, PolyMap, TruncatedPoly};
use crate::specfun::double_factorial;

/// Distribution family of the per-axis initial position uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum UncertaintyKind {
    /// Independent zero-mean normals; parameters are variances in m^2.
    DiagonalNormalRtn,
    /// Independent uniforms on [-h, h]; parameters are half-widths in m.
    UniformBoxRtn,
}

/// Per-axis initial position uncertainty of both objects, expressed in each
/// object's RTN frame (radial, transverse, normal).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UncertaintySpec {
    pub kind: UncertaintyKind,
    /// Object A parameters per RTN axis (m^2 variances or m half-widths).
    pub params_a: [f64; 3],
    /// Object B parameters per RTN axis.
    pub params_b: [f64; 3],
    /// Multiplier on the distribution (scales standard deviations and
    /// half-widths, not variances).
    pub scale: f64,
}

impl UncertaintySpec {
    pub fn new(
        kind: UncertaintyKind,
        params_a: [f64; 3],
        params_b: [f64; 3],
        scale: f64,
    ) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "uncertainty scale must be positive, got {scale}"
            )));
        }
        for p in params_a.iter().chain(&params_b) {
            if !(*p >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "uncertainty parameters must be non-negative, got {p}"
                )));
            }
        }
        Ok(UncertaintySpec {
            kind,
            params_a,
            params_b,
            scale,
        })
    }

    /// Benchmark normal model: variances (0.625, 10, 3.025) m^2 for A and
    /// (5.625, 90, 27.225) m^2 for B along (R, T, N).
    pub fn benchmark_normal(scale: f64) -> Result<Self> {
        UncertaintySpec::new(
            UncertaintyKind::DiagonalNormalRtn,
            [0.625, 10.0, 3.025],
            [5.625, 90.0, 27.225],
            scale,
        )
    }

    /// Benchmark uniform model: half-width 1 m on every axis of both objects.
    pub fn benchmark_uniform(scale: f64) -> Result<Self> {
        UncertaintySpec::new(
            UncertaintyKind::UniformBoxRtn,
            [1.0, 1.0, 1.0],
            [1.0, 1.0, 1.0],
            scale,
        )
    }

    pub fn with_scale(self, scale: f64) -> Result<Self> {
        UncertaintySpec::new(self.kind, self.params_a, self.params_b, scale)
    }

    fn param(&self, axis: usize) -> f64 {
        if axis < 3 {
            self.params_a[axis]
        } else {
            self.params_b[axis - 3]
        }
    }

    /// Scaled per-axis dispersion in km: standard deviation for the normal
    /// model, half-width for the uniform model. `axis` 0-2 = A, 3-5 = B.
    pub fn dispersion_km(&self, axis: usize) -> f64 {
        let base = match self.kind {
            UncertaintyKind::DiagonalNormalRtn => self.param(axis).sqrt(),
            UncertaintyKind::UniformBoxRtn => self.param(axis),
        };
        base * self.scale * 1e-3
    }

    /// Raw moment E[du^k] of one axis, km^k.
    fn axis_moment(&self, axis: usize, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        if k % 2 == 1 {
            return 0.0; // both families are symmetric about zero
        }
        let d = self.dispersion_km(axis);
        match self.kind {
            UncertaintyKind::DiagonalNormalRtn => {
                d.powi(k as i32) * double_factorial(k as i64 - 1)
            }
            UncertaintyKind::UniformBoxRtn => d.powi(k as i32) / (k as f64 + 1.0),
        }
    }

    /// Draws the 6 RTN perturbations (km): A axes then B axes.
    pub fn sample_km<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (axis, slot) in out.iter_mut().enumerate() {
            let d = self.dispersion_km(axis);
            *slot = match self.kind {
                UncertaintyKind::DiagonalNormalRtn => {
                    let z: f64 = StandardNormal.sample(rng);
                    d * z
                }
                UncertaintyKind::UniformBoxRtn => {
                    if d == 0.0 {
                        0.0
                    } else {
                        rng.gen_range(-d..=d)
                    }
                }
            };
        }
        out
    }
}

/// Expectation E[du^alpha] of a monomial over the 6 independent RTN
/// perturbation variables, km^|alpha|.
pub fn initial_monomial_moment(spec: &UncertaintySpec, alpha: &[u32]) -> Result<f64> {
    if alpha.len() != 6 {
        return Err(Error::ArgCountMismatch {
            got: alpha.len(),
            want: 6,
        });
    }
    let mut m = 1.0;
    for (axis, &k) in alpha.iter().enumerate() {
        if k % 2 == 1 {
            return Ok(0.0);
        }
        m *= spec.axis_moment(axis, k);
    }
    Ok(m)
}

/// Exact expectation of a polynomial in the 6 independent RTN perturbation
/// variables.
pub fn poly_expectation(p: &TruncatedPoly, spec: &UncertaintySpec) -> Result<f64> {
    if p.nvars() != 6 {
        return Err(Error::ArgCountMismatch {
            got: p.nvars(),
            want: 6,
        });
    }
    let mut total = 0.0;
    for (idx, coeff) in p.terms() {
        if !idx.all_even() {
            continue;
        }
        total += coeff * initial_monomial_moment(spec, &idx.exponents(6))?;
    }
    Ok(total)
}

/// Re-expresses closest-approach maps in the independent RTN perturbation
/// coordinates: the inertial displacement of each object is R * du with R
/// the object's RTN rotation (columns = RTN basis vectors in the inertial
/// frame). Frames must be orthonormal.
pub fn rtn_substitution(
    maps: &CaTaylorMaps,
    frame_a: &Matrix3<f64>,
    frame_b: &Matrix3<f64>,
) -> Result<CaTaylorMaps> {
    for (name, f) in [("A", frame_a), ("B", frame_b)] {
        let defect = (f.transpose() * f - Matrix3::identity()).norm();
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "frame {name} is not orthonormal (defect {defect:e})"
            )));
        }
    }
    let linear_args = |order: u32| -> Result<Vec<TruncatedPoly>> {
        let mut args = Vec::with_capacity(6);
        for i in 0..6 {
            let (frame, block) = if i < 3 { (frame_a, 0) } else { (frame_b, 3) };
            let row = i - block;
            let mut terms = Vec::new();
            for j in 0..3 {
                let c = frame[(row, j)];
                if c != 0.0 {
                    let mut exps = [0u32; 6];
                    exps[block + j] = 1;
                    terms.push((exps, c));
                }
            }
            let term_refs: Vec<(&[u32], f64)> =
                terms.iter().map(|(e, c)| (&e[..], *c)).collect();
            args.push(TruncatedPoly::from_terms(6, order, &term_refs)?);
        }
        Ok(args)
    };

    let order = maps.state.order();
    let args_n = linear_args(order)?;
    let state_refs: Vec<&TruncatedPoly> = maps.state.components().iter().collect();
    let state_components = compose_many(&state_refs, &args_n, false)?;
    let labels = ["dra", "dta", "dna", "drb", "dtb", "dnb"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let state = PolyMap::new(state_components, labels)?;
    let time = compose_many(&[&maps.time], &args_n, false)?.remove(0);
    let args_2n = linear_args(maps.dist_sq.order())?;
    let dist_sq = compose_many(&[&maps.dist_sq], &args_2n, false)?.remove(0);
    Ok(CaTaylorMaps {
        state,
        time,
        dist_sq,
        transversality: maps.transversality,
    })
}

/// Raw moments m_k = E[D_CA^{2k}], k = 1..=M, in km^{2k}.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct MomentSet {
    /// values[k-1] = m_k.
    pub values: Vec<f64>,
}

impl MomentSet {
    /// m_k, 1-indexed.
    pub fn m(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Moments of the rescaled variable s = D^2 / m_1, with mu_0 = 1
    /// prepended: returns (scale = m_1 in km^2, [mu_0, mu_1, ..., mu_M]).
    /// High powers of km^2-sized quantities underflow doubles; every
    /// downstream consumer works with the rescaled sequence.
    pub fn normalized(&self) -> (f64, Vec<f64>) {
        let m1 = self.values[0];
        let mut mu = Vec::with_capacity(self.values.len() + 1);
        mu.push(1.0);
        for (k, m) in self.values.iter().enumerate() {
            mu.push(m / m1.powi(k as i32 + 1));
        }
        (m1, mu)
    }

    /// Smallest eigenvalue of the Hankel matrix [mu_{i+j}] of the
    /// m_1-rescaled sequence (mu_0 = 1), relative to the largest. A valid
    /// moment sequence of a non-negative variable gives a PSD matrix.
    pub fn hankel_min_eigenvalue_ratio(&self) -> f64 {
        let (_, mu) = self.normalized();
        let n = mu.len() / 2 + 1; // indices i+j <= M
        let h = DMatrix::from_fn(n, n, |i, j| mu[i + j]);
        let eig = h.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        min / max.max(f64::MIN_POSITIVE)
    }
}

/// Largest polynomial algebra (term count) the moment powers may use.
pub const DEFAULT_TERM_BUDGET: u128 = 1 << 23;

/// Computes m_k = E[(P_D2)^k] for k = 1..=m_count.
///
/// The k-th power is formed iteratively at extended order 2N + 2(k-1),
/// where 2N is the order of the exactly-squared distance polynomial: exact
/// at k = 1, and retaining every perturbation stratum whose expectation is
/// not suppressed by at least (dispersion / curvature length)^2 relative to
/// the leading stratum of that moment.
pub fn distance_moments(
    maps: &CaTaylorMaps,
    spec: &UncertaintySpec,
    m_count: usize,
) -> Result<MomentSet> {
    if m_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 moments, got {m_count}"
        )));
    }
    let d2 = &maps.dist_sq;
    let nvars = d2.nvars();
    let base_order = d2.order();
    // fail fast: the largest algebra is the one for the final moment
    let top_order = base_order + 2 * (m_count as u32 - 1);
    let needed = algebra_size(nvars, top_order);
    if needed > DEFAULT_TERM_BUDGET {
        return Err(Error::TermBudget {
            needed,
            budget: DEFAULT_TERM_BUDGET,
        });
    }
    let mut values = Vec::with_capacity(m_count);
    let mut power = d2.clone();
    for k in 1..=m_count {
        let out_order = base_order + 2 * (k as u32 - 1);
        if k > 1 {
            power = power.with_order(out_order)?.mul(&d2.with_order(out_order)?)?;
        }
        let m_k = poly_expectation(&power, spec)?;
        if !(m_k > 0.0) {
            return Err(Error::MomentsNotPositive(format!(
                "m_{k} = {m_k}; the squared distance is degenerate at this order"
            )));
        }
        values.push(m_k);
    }
    let set = MomentSet { values };
    let ratio = set.hankel_min_eigenvalue_ratio();
    if ratio < -1e-12 {
        return Err(Error::DegenerateMoments(format!(
            "Hankel matrix not PSD: min/max eigenvalue ratio {ratio:e}"
        )));
    }
    Ok(set)
}
