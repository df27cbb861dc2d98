//! PDF reconstruction from raw moments with orthogonal polynomials.
//!
//! A reference distribution w(x) is fitted to the first two moments by the
//! method of moments. The target density is expanded as f(x) = w(x) sum
//! C_i P_i(x) in the orthonormal polynomial family of w, whose expansion
//! coefficients are moment-weighted sums C_i = sum a_{i,n} E[x^n]. Interval
//! probabilities integrate in closed form through the regularized
//! incomplete gamma and beta functions; no numeric quadrature is used
//! outside of tests.

use crate::error::{Error, Result};
use crate::moments::MomentSet;
use crate::specfun::{
    binomial, double_factorial, ln_beta, ln_gamma, reg_inc_beta, reg_inc_gamma_lower,
    rising_factorial,
};

/// Largest supported basis degree.
pub const MAX_BASIS_DEGREE: usize = 20;

/// Gamma shape above which the reference fit falls back to a normal
/// distribution. At this shape the gamma skewness 2/sqrt(alpha) is below
/// 0.3 and the Hermite expansion is the better-conditioned choice.
pub const GAMMA_TO_NORMAL_SHAPE: f64 = 50.0;

/// Prior knowledge of the target variable's support.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum DomainHint {
    /// Known interval [u, v].
    Bounded(f64, f64),
    /// [0, inf).
    HalfLine,
    /// All reals.
    RealLine,
}

/// Reference distribution: the weight function carrying the expansion.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ReferenceDistribution {
    Uniform { u: f64, v: f64 },
    GenBeta { alpha: f64, beta: f64, u: f64, v: f64 },
    Gamma { alpha: f64, theta: f64 },
    Normal { mu: f64, var: f64 },
}

impl ReferenceDistribution {
    /// Weight density w(x). Zero outside the support; unbounded endpoint
    /// densities (beta/gamma shapes below 1) evaluate to infinity.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            ReferenceDistribution::Uniform { u, v } => {
                if x >= u && x <= v {
                    1.0 / (v - u)
                } else {
                    0.0
                }
            }
            ReferenceDistribution::GenBeta { alpha, beta, u, v } => {
                if x < u || x > v {
                    return 0.0;
                }
                let ln_b = ln_beta(alpha, beta).expect("validated parameters");
                ((alpha - 1.0) * (x - u).ln() + (beta - 1.0) * (v - x).ln()
                    - ln_b
                    - (alpha + beta - 1.0) * (v - u).ln())
                .exp()
            }
            ReferenceDistribution::Gamma { alpha, theta } => {
                if x < 0.0 {
                    return 0.0;
                }
                let ln_g = ln_gamma(alpha).expect("validated parameters");
                ((alpha - 1.0) * x.ln() - x / theta - ln_g - alpha * theta.ln()).exp()
            }
            ReferenceDistribution::Normal { mu, var } => {
                let z = x - mu;
                (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            }
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match *self {
            ReferenceDistribution::Uniform { u, v } => {
                Ok(((x - u) / (v - u)).clamp(0.0, 1.0))
            }
            ReferenceDistribution::GenBeta { alpha, beta, u, v } => {
                let s = ((x - u) / (v - u)).clamp(0.0, 1.0);
                reg_inc_beta(alpha, beta, s)
            }
            ReferenceDistribution::Gamma { alpha, theta } => {
                if x <= 0.0 {
                    Ok(0.0)
                } else {
                    reg_inc_gamma_lower(alpha, x / theta)
                }
            }
            ReferenceDistribution::Normal { mu, var } => {
                Ok(normal_cdf((x - mu) / var.sqrt())?)
            }
        }
    }

    /// Raw moment E[x^n] in closed form.
    pub fn raw_moment(&self, n: u32) -> Result<f64> {
        match *self {
            ReferenceDistribution::Uniform { u, v } => {
                Ok((v.powi(n as i32 + 1) - u.powi(n as i32 + 1)) / ((n as f64 + 1.0) * (v - u)))
            }
            ReferenceDistribution::GenBeta { alpha, beta, u, v } => {
                let mut acc = 0.0;
                for k in 0..=n {
                    acc += binomial(n, k)
                        * (v - u).powi(k as i32)
                        * (rising_factorial(alpha, k) / rising_factorial(alpha + beta, k))
                        * u.powi((n - k) as i32);
                }
                Ok(acc)
            }
            ReferenceDistribution::Gamma { alpha, theta } => {
                Ok(theta.powi(n as i32) * rising_factorial(alpha, n))
            }
            ReferenceDistribution::Normal { mu, var } => {
                let sigma = var.sqrt();
                let mut acc = 0.0;
                let mut j = 0;
                while j <= n {
                    acc += binomial(n, j)
                        * mu.powi((n - j) as i32)
                        * sigma.powi(j as i32)
                        * double_factorial(j as i64 - 1);
                    j += 2;
                }
                Ok(acc)
            }
        }
    }

    /// Support endpoints (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ReferenceDistribution::Uniform { u, v }
            | ReferenceDistribution::GenBeta { u, v, .. } => (u, v),
            ReferenceDistribution::Gamma { .. } => (0.0, f64::INFINITY),
            ReferenceDistribution::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Short family name for diagnostics.
    pub fn family(&self) -> &'static str {
        match self {
            ReferenceDistribution::Uniform { .. } => "uniform",
            ReferenceDistribution::GenBeta { .. } => "genbeta",
            ReferenceDistribution::Gamma { .. } => "gamma",
            ReferenceDistribution::Normal { .. } => "normal",
        }
    }
}

/// Standard normal CDF through the regularized incomplete gamma function.
pub fn normal_cdf(z: f64) -> Result<f64> {
    if z == 0.0 {
        return Ok(0.5);
    }
    let p = reg_inc_gamma_lower(0.5, 0.5 * z * z)?;
    Ok(0.5 * (1.0 + z.signum() * p))
}

/// Fits a reference distribution to the first two raw moments.
///
/// Bounded hints produce a generalized beta on [u, v]; half-line hints a
/// gamma (falling back to a moment-matched normal when the fitted shape
/// exceeds [`GAMMA_TO_NORMAL_SHAPE`]); real-line hints a normal.
pub fn fit_reference(moments: &MomentSet, hint: DomainHint) -> Result<ReferenceDistribution> {
    if moments.count() < 2 {
        return Err(Error::InvalidArgument(format!(
            "reference fit needs at least 2 moments, got {}",
            moments.count()
        )));
    }
    let m1 = moments.m(1);
    let m2 = moments.m(2);
    let var = m2 - m1 * m1;
    if !(var > 0.0) {
        return Err(Error::DegenerateMoments(format!(
            "m2 - m1^2 = {var:e} is not positive"
        )));
    }
    match hint {
        DomainHint::Bounded(u, v) => {
            if !(u < v) {
                return Err(Error::InvalidArgument(format!(
                    "bounded domain requires u < v, got [{u}, {v}]"
                )));
            }
            let tau = (m1 - u) / (v - u);
            let lambda = ((v + u) * m1 - u * v - m2) / var;
            let alpha = tau * lambda;
            let beta = (1.0 - tau) * lambda;
            if !(alpha > 0.0) || !(beta > 0.0) {
                return Err(Error::ReferenceFit(format!(
                    "moments incompatible with domain [{u}, {v}]: alpha = {alpha}, beta = {beta}"
                )));
            }
            Ok(ReferenceDistribution::GenBeta { alpha, beta, u, v })
        }
        DomainHint::HalfLine => {
            if !(m1 > 0.0) {
                return Err(Error::ReferenceFit(format!(
                    "half-line fit requires m1 > 0, got {m1}"
                )));
            }
            let alpha = m1 * m1 / var;
            let theta = var / m1;
            if alpha > GAMMA_TO_NORMAL_SHAPE {
                Ok(ReferenceDistribution::Normal { mu: m1, var })
            } else {
                Ok(ReferenceDistribution::Gamma { alpha, theta })
            }
        }
        DomainHint::RealLine => Ok(ReferenceDistribution::Normal { mu: m1, var }),
    }
}

// ---------------------------------------------------------------------------
// dense univariate polynomial helpers (coefficient vectors, low to high)
// ---------------------------------------------------------------------------

fn poly_eval(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &ck in c.iter().rev() {
        acc = acc * x + ck;
    }
    acc
}

/// Multiplies by the linear factor `c0 + c1 x`.
fn poly_mul_linear(p: &[f64], c0: f64, c1: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (i, &pi) in p.iter().enumerate() {
        out[i] += pi * c0;
        out[i + 1] += pi * c1;
    }
    out
}

/// Substitutes `z = c0 + c1 x` into a polynomial given in powers of z,
/// returning coefficients in powers of x (Horner composition).
fn poly_affine(q: &[f64], c0: f64, c1: f64) -> Vec<f64> {
    let mut acc = vec![*q.last().expect("nonempty polynomial")];
    for &qk in q.iter().rev().skip(1) {
        acc = poly_mul_linear(&acc, c0, c1);
        acc[0] += qk;
    }
    acc
}

fn poly_scale(p: &[f64], s: f64) -> Vec<f64> {
    p.iter().map(|c| c * s).collect()
}

// ---------------------------------------------------------------------------
// orthonormal bases
// ---------------------------------------------------------------------------

/// Orthonormal polynomials of a reference weight, stored as monomial
/// coefficients a_{i,n} of P_i in the target variable x.
#[derive(Clone, Debug)]
pub struct OrthonormalBasis {
    reference: ReferenceDistribution,
    /// polys[i] has length i + 1.
    polys: Vec<Vec<f64>>,
}

impl OrthonormalBasis {
    pub fn reference(&self) -> &ReferenceDistribution {
        &self.reference
    }

    pub fn degree(&self) -> usize {
        self.polys.len() - 1
    }

    /// Monomial coefficients a_{i,0} ... a_{i,i} of P_i.
    pub fn coefficients(&self, i: usize) -> &[f64] {
        &self.polys[i]
    }

    /// Evaluates P_i(x).
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        poly_eval(&self.polys[i], x)
    }
}

/// Builds the orthonormal basis of a reference distribution up to `degree`:
/// mapped Legendre (uniform), Jacobi (generalized beta), generalized
/// Laguerre (gamma), or probabilists' Hermite (normal), each from its
/// classical three-term recurrence with closed-form norms.
pub fn build_basis(
    reference: &ReferenceDistribution,
    degree: usize,
) -> Result<OrthonormalBasis> {
    if degree > MAX_BASIS_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "basis degree {degree} exceeds the supported maximum {MAX_BASIS_DEGREE}"
        )));
    }
    // family polynomials in the standard variable z, plus the affine map
    // z = c0 + c1 x and the per-degree normalization divisor
    let (std_polys, c0, c1, norms) = match *reference {
        ReferenceDistribution::Uniform { u, v } => {
            let polys = legendre_polys(degree);
            let norms = (0..=degree)
                .map(|n| 1.0 / (2.0 * n as f64 + 1.0).sqrt())
                .collect();
            (polys, -(u + v) / (v - u), 2.0 / (v - u), norms)
        }
        ReferenceDistribution::GenBeta { alpha, beta, u, v } => {
            // Jacobi weight (1-s)^a (1+s)^b pairs a with the upper-endpoint
            // exponent, so a = beta - 1 and b = alpha - 1
            let a = beta - 1.0;
            let b = alpha - 1.0;
            let polys = jacobi_polys(degree, a, b);
            let norms = (0..=degree)
                .map(|n| jacobi_norm(n, a, b))
                .collect::<Result<Vec<f64>>>()?;
            (polys, -(u + v) / (v - u), 2.0 / (v - u), norms)
        }
        ReferenceDistribution::Gamma { alpha, theta } => {
            let polys = laguerre_polys(degree, alpha - 1.0);
            let norms = (0..=degree)
                .map(|n| {
                    // ||L_n^(alpha-1)||_w = sqrt(Gamma(n+alpha) / (n! Gamma(alpha)))
                    Ok((0.5
                        * (ln_gamma(n as f64 + alpha)?
                            - ln_gamma(n as f64 + 1.0)?
                            - ln_gamma(alpha)?))
                    .exp())
                })
                .collect::<Result<Vec<f64>>>()?;
            (polys, 0.0, 1.0 / theta, norms)
        }
        ReferenceDistribution::Normal { mu, var } => {
            let sigma = var.sqrt();
            let polys = hermite_polys(degree);
            let norms = (0..=degree)
                .map(|n| Ok((0.5 * ln_gamma(n as f64 + 1.0)?).exp()))
                .collect::<Result<Vec<f64>>>()?;
            (polys, -mu / sigma, 1.0 / sigma, norms)
        }
    };
    let mut polys = Vec::with_capacity(degree + 1);
    for (n, q) in std_polys.iter().enumerate() {
        if n == 0 {
            // exactly 1: the weight integrates to one
            polys.push(vec![1.0]);
            continue;
        }
        polys.push(poly_scale(&poly_affine(q, c0, c1), 1.0 / norms[n]));
    }
    Ok(OrthonormalBasis {
        reference: *reference,
        polys,
    })
}

/// Legendre polynomials on [-1, 1] up to `degree` (monomial coefficients).
fn legendre_polys(degree: usize) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
    if degree >= 1 {
        polys.push(vec![0.0, 1.0]);
    }
    for n in 1..degree {
        let nf = n as f64;
        // (n+1) P_{n+1} = (2n+1) s P_n - n P_{n-1}
        let mut next = poly_mul_linear(&polys[n], 0.0, 2.0 * nf + 1.0);
        for (c, p) in next.iter_mut().zip(&polys[n - 1]) {
            *c -= nf * p;
        }
        polys.push(poly_scale(&next, 1.0 / (nf + 1.0)));
    }
    polys
}

/// Jacobi polynomials P_n^(a,b) on [-1, 1] up to `degree`.
fn jacobi_polys(degree: usize, a: f64, b: f64) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
    if degree >= 1 {
        polys.push(vec![0.5 * (a - b), 0.5 * (a + b + 2.0)]);
    }
    for n in 1..degree {
        let nf = n as f64;
        let c = 2.0 * nf + a + b;
        // 2(n+1)(n+a+b+1)(2n+a+b) P_{n+1}
        //   = (2n+a+b+1) [(2n+a+b)(2n+a+b+2) s + a^2 - b^2] P_n
        //     - 2(n+a)(n+b)(2n+a+b+2) P_{n-1}
        let mut next = poly_mul_linear(
            &polys[n],
            (c + 1.0) * (a * a - b * b),
            (c + 1.0) * c * (c + 2.0),
        );
        let d = 2.0 * (nf + a) * (nf + b) * (c + 2.0);
        for (cc, p) in next.iter_mut().zip(&polys[n - 1]) {
            *cc -= d * p;
        }
        polys.push(poly_scale(
            &next,
            1.0 / (2.0 * (nf + 1.0) * (nf + a + b + 1.0) * c),
        ));
    }
    polys
}

/// Norm of P_n^(a,b) under the generalized-beta weight mapped to [-1, 1].
fn jacobi_norm(n: usize, a: f64, b: f64) -> Result<f64> {
    let nf = n as f64;
    let ln_sq = ln_gamma(nf + a + 1.0)? + ln_gamma(nf + b + 1.0)? + ln_gamma(a + b + 2.0)?
        - (2.0 * nf + a + b + 1.0).ln()
        - ln_gamma(nf + a + b + 1.0)?
        - ln_gamma(nf + 1.0)?
        - ln_gamma(a + 1.0)?
        - ln_gamma(b + 1.0)?;
    Ok((0.5 * ln_sq).exp())
}

/// Generalized Laguerre polynomials L_n^(m) up to `degree`.
fn laguerre_polys(degree: usize, m: f64) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
    if degree >= 1 {
        polys.push(vec![1.0 + m, -1.0]);
    }
    for n in 1..degree {
        let nf = n as f64;
        // (n+1) L_{n+1} = (2n+1+m-y) L_n - (n+m) L_{n-1}
        let mut next = poly_mul_linear(&polys[n], 2.0 * nf + 1.0 + m, -1.0);
        for (c, p) in next.iter_mut().zip(&polys[n - 1]) {
            *c -= (nf + m) * p;
        }
        polys.push(poly_scale(&next, 1.0 / (nf + 1.0)));
    }
    polys
}

/// Probabilists' Hermite polynomials He_n up to `degree`.
fn hermite_polys(degree: usize) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
    if degree >= 1 {
        polys.push(vec![0.0, 1.0]);
    }
    for n in 1..degree {
        // He_{n+1} = z He_n - n He_{n-1}
        let mut next = poly_mul_linear(&polys[n], 0.0, 1.0);
        for (c, p) in next.iter_mut().zip(&polys[n - 1]) {
            *c -= n as f64 * p;
        }
        polys.push(next);
    }
    polys
}

// ---------------------------------------------------------------------------
// PDF estimate
// ---------------------------------------------------------------------------

/// Reconstructed density: a reference weight times a truncated orthonormal
/// expansion.
#[derive(Clone, Debug)]
pub struct PdfEstimate {
    basis: OrthonormalBasis,
    /// C_0 ... C_M.
    coeffs: Vec<f64>,
}

/// Computes the expansion coefficients C_i = sum_n a_{i,n} E[x^n] from raw
/// moments (E[x^0] = 1 implied).
pub fn expansion_coeffs(basis: OrthonormalBasis, moments: &MomentSet) -> Result<PdfEstimate> {
    if moments.count() < basis.degree() {
        return Err(Error::InvalidArgument(format!(
            "basis degree {} needs at least that many moments, got {}",
            basis.degree(),
            moments.count()
        )));
    }
    let moment = |n: usize| if n == 0 { 1.0 } else { moments.m(n) };
    let coeffs = (0..=basis.degree())
        .map(|i| {
            basis
                .coefficients(i)
                .iter()
                .enumerate()
                .map(|(n, a)| a * moment(n))
                .sum()
        })
        .collect();
    Ok(PdfEstimate { basis, coeffs })
}

impl PdfEstimate {
    pub fn reference(&self) -> &ReferenceDistribution {
        &self.basis.reference
    }

    pub fn basis(&self) -> &OrthonormalBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Density value w(x) sum C_i P_i(x). Truncation can make this slightly
    /// negative; values are reported as-is.
    pub fn pdf_eval(&self, x: f64) -> f64 {
        let series: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * self.basis.eval(i, x))
            .sum();
        self.basis.reference.pdf(x) * series
    }

    /// Combined monomial coefficients g_k with
    /// sum_i C_i P_i(x) = sum_k g_k x^k.
    fn combined_monomials(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.basis.degree() + 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            for (k, a) in self.basis.coefficients(i).iter().enumerate() {
                g[k] += c * a;
            }
        }
        g
    }

    /// Closed-form integral of the estimate over [a, b], decomposed into
    /// weighted monomial integrals of the reference.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        if !(a < b) {
            return Err(Error::InvalidArgument(format!(
                "integration range requires a < b, got [{a}, {b}]"
            )));
        }
        let g = self.combined_monomials();
        let mut total = 0.0;
        for (k, gk) in g.iter().enumerate() {
            if *gk != 0.0 {
                total += gk * weighted_monomial_integral(&self.basis.reference, k as u32, a, b)?;
            }
        }
        Ok(total)
    }

    /// Closed-form raw moment E[x^k] of the estimate over its full domain.
    pub fn raw_moment(&self, k: u32) -> Result<f64> {
        let g = self.combined_monomials();
        let mut total = 0.0;
        for (n, gn) in g.iter().enumerate() {
            total += gn * self.basis.reference.raw_moment(n as u32 + k)?;
        }
        Ok(total)
    }

    /// Samples the density on a uniform grid as `x,pdf` CSV. Negative
    /// truncation artifacts are clamped to zero when `clamp` is set.
    pub fn plot_csv(&self, lo: f64, hi: f64, points: usize, clamp: bool) -> Result<String> {
        if !(lo < hi) || points < 2 {
            return Err(Error::InvalidArgument(format!(
                "plot grid needs lo < hi and at least 2 points, got [{lo}, {hi}] x {points}"
            )));
        }
        let mut out = String::from("x,pdf\n");
        for i in 0..points {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let mut f = self.pdf_eval(x);
            if clamp {
                f = f.max(0.0);
            }
            out.push_str(&format!("{x:?},{f:?}\n"));
        }
        Ok(out)
    }
}

/// Closed-form ∫_a^b w(x) x^k dx for each reference family.
fn weighted_monomial_integral(
    reference: &ReferenceDistribution,
    k: u32,
    a: f64,
    b: f64,
) -> Result<f64> {
    match *reference {
        ReferenceDistribution::Uniform { u, v } => {
            let lo = a.max(u);
            let hi = b.min(v);
            if hi <= lo {
                return Ok(0.0);
            }
            Ok((hi.powi(k as i32 + 1) - lo.powi(k as i32 + 1))
                / ((k as f64 + 1.0) * (v - u)))
        }
        ReferenceDistribution::GenBeta { alpha, beta, u, v } => {
            let sa = ((a - u) / (v - u)).clamp(0.0, 1.0);
            let sb = ((b - u) / (v - u)).clamp(0.0, 1.0);
            if sb <= sa {
                return Ok(0.0);
            }
            // expand x^k = sum_j C(k,j) u^(k-j) ((v-u) s)^j; each s^j factor
            // integrates against the beta weight as a shifted-parameter
            // regularized incomplete beta
            let mut acc = 0.0;
            for j in 0..=k {
                let ratio = rising_factorial(alpha, j) / rising_factorial(alpha + beta, j);
                acc += binomial(k, j)
                    * u.powi((k - j) as i32)
                    * (v - u).powi(j as i32)
                    * ratio
                    * (reg_inc_beta(alpha + j as f64, beta, sb)?
                        - reg_inc_beta(alpha + j as f64, beta, sa)?);
            }
            Ok(acc)
        }
        ReferenceDistribution::Gamma { alpha, theta } => {
            if b <= 0.0 {
                return Ok(0.0);
            }
            let lo = a.max(0.0);
            let shape = alpha + k as f64;
            Ok(theta.powi(k as i32)
                * rising_factorial(alpha, k)
                * (reg_inc_gamma_lower(shape, b / theta)?
                    - reg_inc_gamma_lower(shape, lo / theta)?))
        }
        ReferenceDistribution::Normal { mu, var } => {
            Ok(normal_partial_moment(mu, var, k, b)? - normal_partial_moment(mu, var, k, a)?)
        }
    }
}

/// Closed form of ∫_0^b x^n f(x) dx for a normal density f with mean `mu`
/// and variance `var`:
///
///   sum_k C(n,k) mu^(n-k) sigma^k sqrt(2^(k-2)/pi)
///         (alpha_k gamma((k+1)/2, (b-mu)^2 / 2 sigma^2)
///          - beta_k gamma((k+1)/2, mu^2 / 2 sigma^2))
///
/// with sign constants alpha_k = (-1)^(k+1) when b < mu (else 1) and
/// beta_k = (-1)^(k+1) when mu > 0 (else 1). Negative `b` is handled by
/// the reflection x -> -x.
pub fn normal_partial_moment(mu: f64, var: f64, n: u32, b: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "normal variance must be positive, got {var}"
        )));
    }
    if b == 0.0 {
        return Ok(0.0);
    }
    if b < 0.0 {
        let sign = if n.is_multiple_of(2) { -1.0 } else { 1.0 };
        return Ok(sign * normal_partial_moment(-mu, var, n, -b)?);
    }
    let sigma = var.sqrt();
    let gam = |s: f64, x: f64| -> Result<f64> {
        Ok(reg_inc_gamma_lower(s, x)? * ln_gamma(s)?.exp())
    };
    let x_b = (b - mu) * (b - mu) / (2.0 * var);
    let x_mu = mu * mu / (2.0 * var);
    let mut total = 0.0;
    for k in 0..=n {
        let s = (k as f64 + 1.0) / 2.0;
        let odd_sign = if k % 2 == 0 { -1.0 } else { 1.0 }; // (-1)^(k+1)
        let alpha_k = if b < mu { odd_sign } else { 1.0 };
        let beta_k = if mu > 0.0 { odd_sign } else { 1.0 };
        total += binomial(n, k)
            * mu.powi((n - k) as i32)
            * sigma.powi(k as i32)
            * (2.0f64.powi(k as i32 - 2) / std::f64::consts::PI).sqrt()
            * (alpha_k * gam(s, x_b)? - beta_k * gam(s, x_mu)?);
    }
    Ok(total)
}
