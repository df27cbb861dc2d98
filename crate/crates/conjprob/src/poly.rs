//! Sparse truncated multivariate polynomial algebra.
//!
//! A [`TruncatedPoly`] is a multivariate Taylor polynomial over `f64`
//! coefficients, truncated at a fixed total degree. Terms are kept in a
//! vector sorted by graded lexicographic order (ascending total degree, then
//! ascending lexicographic comparison of the exponent tuple), which makes
//! every operation deterministic: the same inputs produce bit-identical
//! results regardless of platform thread count or hash-map iteration order.
//!
//! [`PolyMap`] bundles several polynomials sharing one variable set into a
//! vector-valued map and provides composition and truncated inverse maps via
//! the fixed-point iteration `m^-1 <- Linv o (Id - N o m^-1)`, where `L` is
//! the linear part of `m` and `N` the nonlinear remainder.

use std::collections::HashMap;
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};

use crate::error::{Error, Result};

/// Maximum number of variables an algebra may carry.
pub const MAX_VARS: usize = 16;
/// Maximum truncation order. Keeps exponent bytes far from overflow when
/// two in-range exponents are added during multiplication.
pub const MAX_ORDER: u32 = 127;
/// Coefficients with magnitude below this are dropped during normalization.
pub const PRUNE_EPS: f64 = 1e-300;

/// Largest monomial count for which multiplication uses a dense scratch
/// array indexed by graded-lex rank instead of a hash map.
const DENSE_LIMIT: u128 = 1 << 23;

/// Exponent tuple of a monomial, packed one byte per variable in a `u128`.
///
/// Variable 0 occupies the most significant byte, so comparing the packed
/// integers of two tuples of equal total degree is exactly an ascending
/// lexicographic comparison of the tuples.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex(u128);

impl MultiIndex {
    /// The zero multi-index (constant monomial).
    pub const ZERO: MultiIndex = MultiIndex(0);

    /// Packs an exponent tuple. Fails if more than [`MAX_VARS`] entries or
    /// any exponent exceeds [`MAX_ORDER`].
    pub fn from_exponents(exps: &[u32]) -> Result<Self> {
        if exps.len() > MAX_VARS {
            return Err(Error::TooManyVariables(exps.len()));
        }
        let mut packed = 0u128;
        for (i, &e) in exps.iter().enumerate() {
            if e > MAX_ORDER {
                return Err(Error::ExponentOverflow {
                    var: i,
                    exp: e,
                    order: MAX_ORDER,
                });
            }
            packed |= (e as u128) << Self::shift(i);
        }
        Ok(MultiIndex(packed))
    }

    #[inline]
    fn shift(var: usize) -> u32 {
        ((MAX_VARS - 1 - var) * 8) as u32
    }

    /// Exponent of variable `var`.
    #[inline]
    pub fn exponent(&self, var: usize) -> u32 {
        ((self.0 >> Self::shift(var)) & 0xff) as u32
    }

    /// Exponent tuple for the first `nvars` variables.
    pub fn exponents(&self, nvars: usize) -> Vec<u32> {
        (0..nvars).map(|i| self.exponent(i)).collect()
    }

    /// Total degree (sum of all exponents).
    #[inline]
    pub fn degree(&self) -> u32 {
        self.0
            .to_be_bytes()
            .iter()
            .map(|&b| b as u32)
            .sum()
    }

    /// Sum of two exponent tuples. Safe without carry checks because every
    /// in-range exponent is at most [`MAX_ORDER`] < 128.
    #[inline]
    pub fn sum(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0 + other.0)
    }

    /// Graded-lex comparison key.
    #[inline]
    fn key(&self) -> (u32, u128) {
        (self.degree(), self.0)
    }

    /// True if every exponent is even.
    pub fn all_even(&self) -> bool {
        const ODD_MASK: u128 = 0x01010101_01010101_01010101_01010101;
        self.0 & ODD_MASK == 0
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MultiIndex{:?}", self.exponents(MAX_VARS))
    }
}

/// Number of monomials of total degree at most `order` in `nvars` variables:
/// `C(nvars + order, nvars)`.
pub fn algebra_size(nvars: usize, order: u32) -> u128 {
    let mut num = 1u128;
    let mut den = 1u128;
    for k in 1..=nvars as u128 {
        num = num.saturating_mul(order as u128 + k);
        den *= k;
        // keep intermediates reduced to delay saturation
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    num / den
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Iterates all exponent tuples of total degree <= `max_order` over `nvars`
/// variables in ascending graded-lex order.
struct GrlexIter {
    exps: [u8; MAX_VARS],
    nvars: usize,
    max_order: u32,
    degree: u32,
    done: bool,
    started: bool,
}

impl GrlexIter {
    fn new(nvars: usize, max_order: u32) -> Self {
        GrlexIter {
            exps: [0; MAX_VARS],
            nvars,
            max_order,
            degree: 0,
            done: false,
            started: false,
        }
    }

    fn pack(&self) -> MultiIndex {
        let mut packed = 0u128;
        for i in 0..self.nvars {
            packed |= (self.exps[i] as u128) << MultiIndex::shift(i);
        }
        MultiIndex(packed)
    }
}

impl Iterator for GrlexIter {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.pack());
        }
        // successor within the current degree: find the rightmost position
        // (excluding the last variable) with mass strictly to its right,
        // increment it, and push the remaining mass to the last variable.
        let n = self.nvars;
        let mut suffix = 0u32;
        for j in (0..n.saturating_sub(1)).rev() {
            suffix += self.exps[j + 1] as u32;
            if suffix > 0 {
                self.exps[j] += 1;
                for e in &mut self.exps[j + 1..n] {
                    *e = 0;
                }
                self.exps[n - 1] = (suffix - 1) as u8;
                return Some(self.pack());
            }
        }
        // entire degree exhausted: move to the next total degree
        self.degree += 1;
        if self.degree > self.max_order {
            self.done = true;
            return None;
        }
        self.exps = [0; MAX_VARS];
        self.exps[n - 1] = self.degree as u8;
        Some(self.pack())
    }
}

/// Graded-lex ranking context for a fixed variable count.
struct RankCtx {
    nvars: usize,
    /// binom[n * (nvars + 1) + k] = C(n, k), saturating.
    binom: Vec<u64>,
}

impl RankCtx {
    fn new(nvars: usize, order: u32) -> Self {
        let nmax = nvars + order as usize + 1;
        let k = nvars + 1;
        let mut binom = vec![0u64; (nmax + 1) * k];
        for n in 0..=nmax {
            binom[n * k] = 1;
            for j in 1..=nvars.min(n) {
                let up = binom[(n - 1) * k + j - 1];
                let left = if j < n { binom[(n - 1) * k + j] } else { 0 };
                binom[n * k + j] = up.saturating_add(left);
            }
        }
        RankCtx { nvars, binom }
    }

    #[inline]
    fn c(&self, n: usize, k: usize) -> u64 {
        self.binom[n * (self.nvars + 1) + k]
    }

    /// Position of `m` in ascending graded-lex order over `self.nvars` vars.
    #[inline]
    fn rank(&self, m: &MultiIndex) -> usize {
        let n = self.nvars;
        let d = m.degree() as usize;
        // monomials of strictly smaller degree
        let mut r = if d == 0 { 0 } else { self.c(n + d - 1, n) };
        let mut rem = d;
        for i in 0..n - 1 {
            let a = m.exponent(i) as usize;
            let vars_right = n - 1 - i;
            // tuples matching the prefix with a smaller exponent at slot i
            r += self.c(rem + vars_right, vars_right) - self.c(rem - a + vars_right, vars_right);
            rem -= a;
        }
        r as usize
    }
}

/// Deterministic multiply-shift hasher for packed exponent keys.
#[derive(Default)]
struct PackHasher(u64);

impl Hasher for PackHasher {
    #[inline]
    fn write(&mut self, _bytes: &[u8]) {
        unreachable!("PackHasher only hashes u128 keys");
    }

    #[inline]
    fn write_u128(&mut self, x: u128) {
        let h = (x as u64) ^ ((x >> 64) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let h = (h ^ (h >> 32)).wrapping_mul(0xd6e8_feb8_6659_fd93);
        self.0 = h ^ (h >> 29);
    }

    #[inline]
    fn finish(&self) -> u64 {
        self.0
    }
}

type PackMap<V> = HashMap<u128, V, BuildHasherDefault<PackHasher>>;

/// Multivariate polynomial truncated at a fixed total degree.
#[derive(Clone, PartialEq)]
pub struct TruncatedPoly {
    nvars: usize,
    order: u32,
    /// Graded-lex sorted, duplicate-free, pruned of negligible coefficients.
    terms: Vec<(MultiIndex, f64)>,
}

impl TruncatedPoly {
    fn check_shape(nvars: usize, order: u32) -> Result<()> {
        if nvars == 0 || nvars > MAX_VARS {
            return Err(Error::TooManyVariables(nvars));
        }
        if order > MAX_ORDER {
            return Err(Error::OrderTooLarge(order));
        }
        Ok(())
    }

    /// The zero polynomial.
    pub fn zero(nvars: usize, order: u32) -> Result<Self> {
        Self::check_shape(nvars, order)?;
        Ok(TruncatedPoly {
            nvars,
            order,
            terms: Vec::new(),
        })
    }

    /// A constant polynomial.
    pub fn constant(nvars: usize, order: u32, value: f64) -> Result<Self> {
        let mut p = Self::zero(nvars, order)?;
        if value.abs() >= PRUNE_EPS {
            p.terms.push((MultiIndex::ZERO, value));
        }
        Ok(p)
    }

    /// The monomial `x_var`.
    pub fn variable(nvars: usize, order: u32, var: usize) -> Result<Self> {
        Self::check_shape(nvars, order)?;
        if var >= nvars {
            return Err(Error::VariableOutOfRange { index: var, nvars });
        }
        if order < 1 {
            return Err(Error::InvalidArgument(
                "variable monomial requires order >= 1".into(),
            ));
        }
        let mut exps = vec![0u32; nvars];
        exps[var] = 1;
        Ok(TruncatedPoly {
            nvars,
            order,
            terms: vec![(MultiIndex::from_exponents(&exps)?, 1.0)],
        })
    }

    /// Builds a polynomial from `(exponent tuple, coefficient)` pairs.
    /// Duplicate tuples are accumulated; terms beyond `order` are rejected.
    pub fn from_terms(nvars: usize, order: u32, terms: &[(&[u32], f64)]) -> Result<Self> {
        Self::check_shape(nvars, order)?;
        let mut raw = Vec::with_capacity(terms.len());
        for (exps, coeff) in terms {
            if exps.len() != nvars {
                return Err(Error::ArgCountMismatch {
                    got: exps.len(),
                    want: nvars,
                });
            }
            let m = MultiIndex::from_exponents(exps)?;
            let d = m.degree();
            if d > order {
                return Err(Error::ExponentOverflow {
                    var: 0,
                    exp: d,
                    order,
                });
            }
            raw.push((m, *coeff));
        }
        Ok(Self::from_raw(nvars, order, raw))
    }

    /// Normalizes an unsorted term list into canonical form.
    fn from_raw(nvars: usize, order: u32, mut raw: Vec<(MultiIndex, f64)>) -> Self {
        raw.sort_unstable_by_key(|a| a.0);
        let mut terms: Vec<(MultiIndex, f64)> = Vec::with_capacity(raw.len());
        for (m, c) in raw {
            match terms.last_mut() {
                Some((last, acc)) if *last == m => *acc += c,
                _ => terms.push((m, c)),
            }
        }
        terms.retain(|(_, c)| c.abs() >= PRUNE_EPS);
        TruncatedPoly {
            nvars,
            order,
            terms,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Term list in ascending graded-lex order.
    pub fn terms(&self) -> &[(MultiIndex, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of the given exponent tuple (zero when absent).
    pub fn coefficient(&self, exps: &[u32]) -> Result<f64> {
        if exps.len() != self.nvars {
            return Err(Error::ArgCountMismatch {
                got: exps.len(),
                want: self.nvars,
            });
        }
        let m = MultiIndex::from_exponents(exps)?;
        Ok(self.coefficient_of(&m))
    }

    #[inline]
    pub fn coefficient_of(&self, m: &MultiIndex) -> f64 {
        match self.terms.binary_search_by(|(t, _)| t.cmp(m)) {
            Ok(i) => self.terms[i].1,
            Err(_) => 0.0,
        }
    }

    /// Constant (zeroth-order) coefficient.
    pub fn constant_term(&self) -> f64 {
        match self.terms.first() {
            Some((m, c)) if *m == MultiIndex::ZERO => *c,
            _ => 0.0,
        }
    }

    /// Largest coefficient magnitude (zero polynomial gives 0).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, (_, c)| m.max(c.abs()))
    }

    fn same_algebra(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars || self.order != other.order {
            return Err(Error::AlgebraMismatch(
                self.nvars,
                self.order,
                other.nvars,
                other.order,
            ));
        }
        Ok(())
    }

    /// Re-truncates (or extends) to a new order.
    pub fn with_order(&self, order: u32) -> Result<Self> {
        Self::check_shape(self.nvars, order)?;
        let terms = if order >= self.order {
            self.terms.clone()
        } else {
            let cut = self
                .terms
                .partition_point(|(m, _)| m.degree() <= order);
            self.terms[..cut].to_vec()
        };
        Ok(TruncatedPoly {
            nvars: self.nvars,
            order,
            terms,
        })
    }

    /// Sum of two polynomials of the same algebra.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_algebra(other)?;
        let mut terms = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() && j < other.terms.len() {
            match self.terms[i].0.cmp(&other.terms[j].0) {
                std::cmp::Ordering::Less => {
                    terms.push(self.terms[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    terms.push(other.terms[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let c = self.terms[i].1 + other.terms[j].1;
                    if c.abs() >= PRUNE_EPS {
                        terms.push((self.terms[i].0, c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        terms.extend_from_slice(&self.terms[i..]);
        terms.extend_from_slice(&other.terms[j..]);
        Ok(TruncatedPoly {
            nvars: self.nvars,
            order: self.order,
            terms,
        })
    }

    /// Difference of two polynomials of the same algebra.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        if factor == 0.0 {
            out.terms.clear();
            return out;
        }
        for (_, c) in &mut out.terms {
            *c *= factor;
        }
        out.terms.retain(|(_, c)| c.abs() >= PRUNE_EPS);
        out
    }

    /// Adds a constant in place of building a constant polynomial.
    pub fn add_constant(&self, value: f64) -> Self {
        let mut out = self.clone();
        match out.terms.first_mut() {
            Some((m, c)) if *m == MultiIndex::ZERO => {
                *c += value;
                if c.abs() < PRUNE_EPS {
                    out.terms.remove(0);
                }
            }
            _ => {
                if value.abs() >= PRUNE_EPS {
                    out.terms.insert(0, (MultiIndex::ZERO, value));
                }
            }
        }
        out
    }

    /// Product truncated at the common algebra order.
    ///
    /// Accumulation runs in a deterministic pair order, so results are
    /// bit-identical across runs.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_algebra(other)?;
        if self.is_zero() || other.is_zero() {
            return Self::zero(self.nvars, self.order);
        }
        let size = algebra_size(self.nvars, self.order);
        let terms = if size <= DENSE_LIMIT {
            self.mul_dense(other, size as usize)
        } else {
            self.mul_hash(other)
        };
        Ok(TruncatedPoly {
            nvars: self.nvars,
            order: self.order,
            terms,
        })
    }

    fn mul_dense(&self, other: &Self, size: usize) -> Vec<(MultiIndex, f64)> {
        let ctx = RankCtx::new(self.nvars, self.order);
        let mut acc = vec![0.0f64; size];
        for (ma, ca) in &self.terms {
            let da = ma.degree();
            let budget = self.order - da;
            let hi = other
                .terms
                .partition_point(|(mb, _)| mb.degree() <= budget);
            for (mb, cb) in &other.terms[..hi] {
                let m = ma.sum(mb);
                acc[ctx.rank(&m)] += ca * cb;
            }
        }
        GrlexIter::new(self.nvars, self.order)
            .enumerate()
            .filter_map(|(i, m)| {
                let c = acc[i];
                (c.abs() >= PRUNE_EPS).then_some((m, c))
            })
            .collect()
    }

    fn mul_hash(&self, other: &Self) -> Vec<(MultiIndex, f64)> {
        let mut acc: PackMap<f64> =
            PackMap::with_capacity_and_hasher(self.terms.len() * 2, Default::default());
        for (ma, ca) in &self.terms {
            let da = ma.degree();
            let budget = self.order - da;
            let hi = other
                .terms
                .partition_point(|(mb, _)| mb.degree() <= budget);
            for (mb, cb) in &other.terms[..hi] {
                *acc.entry(ma.sum(mb).0).or_insert(0.0) += ca * cb;
            }
        }
        let mut terms: Vec<(MultiIndex, f64)> = acc
            .into_iter()
            .filter(|(_, c)| c.abs() >= PRUNE_EPS)
            .map(|(k, c)| (MultiIndex(k), c))
            .collect();
        terms.sort_unstable_by_key(|a| a.0);
        terms
    }

    /// `self^k`, computed at truncation order `out_order`.
    pub fn pow(&self, k: u32, out_order: u32) -> Result<Self> {
        let base = self.with_order(out_order)?;
        let mut acc = TruncatedPoly::constant(self.nvars, out_order, 1.0)?;
        for _ in 0..k {
            acc = acc.mul(&base)?;
        }
        Ok(acc)
    }

    /// Real power `self^p` via the binomial series around the constant term,
    /// which must be strictly positive. Exact in the truncated algebra.
    pub fn powf(&self, p: f64) -> Result<Self> {
        let c = self.constant_term();
        if !(c > 0.0) {
            return Err(Error::NonpositiveSeriesBase(c));
        }
        let t = self.add_constant(-c);
        let mut acc = TruncatedPoly::constant(self.nvars, self.order, c.powf(p))?;
        let mut tk = TruncatedPoly::constant(self.nvars, self.order, 1.0)?;
        let mut coeff = c.powf(p);
        for k in 1..=self.order {
            if tk.is_zero() {
                break;
            }
            tk = tk.mul(&t)?;
            coeff *= (p - (k as f64 - 1.0)) / (k as f64 * c);
            acc = acc.add(&tk.scale(coeff))?;
        }
        Ok(acc)
    }

    /// Partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> Result<Self> {
        if var >= self.nvars {
            return Err(Error::VariableOutOfRange {
                index: var,
                nvars: self.nvars,
            });
        }
        let shift = MultiIndex::shift(var);
        let terms: Vec<(MultiIndex, f64)> = self
            .terms
            .iter()
            .filter_map(|(m, c)| {
                let e = m.exponent(var);
                (e > 0).then(|| (MultiIndex(m.0 - (1u128 << shift)), c * e as f64))
            })
            .collect();
        // decrementing a fixed variable preserves graded-lex order
        debug_assert!(terms.windows(2).all(|w| w[0].0 < w[1].0));
        let mut out = TruncatedPoly {
            nvars: self.nvars,
            order: self.order,
            terms,
        };
        out.terms.retain(|(_, c)| c.abs() >= PRUNE_EPS);
        Ok(out)
    }

    /// Evaluates at a point.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.nvars {
            return Err(Error::ArgCountMismatch {
                got: point.len(),
                want: self.nvars,
            });
        }
        // per-variable power tables up to the largest exponent present
        let mut max_exp = vec![0u32; self.nvars];
        for (m, _) in &self.terms {
            for (i, me) in max_exp.iter_mut().enumerate() {
                *me = (*me).max(m.exponent(i));
            }
        }
        let pows: Vec<Vec<f64>> = point
            .iter()
            .zip(&max_exp)
            .map(|(&x, &e)| {
                let mut v = Vec::with_capacity(e as usize + 1);
                v.push(1.0);
                for k in 1..=e {
                    v.push(v[k as usize - 1] * x);
                }
                v
            })
            .collect();
        let mut sum = 0.0;
        for (m, c) in &self.terms {
            let mut t = *c;
            for (i, pow) in pows.iter().enumerate() {
                let e = m.exponent(i) as usize;
                if e > 0 {
                    t *= pow[e];
                }
            }
            sum += t;
        }
        Ok(sum)
    }

    /// Substitutes `args[i]` for variable `i`. All arguments must share one
    /// algebra; unless `allow_constant` is set, each argument must have a
    /// zero constant term so that truncation orders compose consistently.
    pub fn compose(&self, args: &[TruncatedPoly], allow_constant: bool) -> Result<Self> {
        compose_many(&[self], args, allow_constant).map(|mut v| v.pop().unwrap())
    }

    /// Restricts to a subset of variables, repacking exponents. `keep` must
    /// be strictly increasing; every dropped variable must be absent from
    /// all terms.
    pub fn project(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() || keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "projection variable list must be strictly increasing".into(),
            ));
        }
        if *keep.last().unwrap() >= self.nvars {
            return Err(Error::VariableOutOfRange {
                index: *keep.last().unwrap(),
                nvars: self.nvars,
            });
        }
        let dropped: Vec<usize> = (0..self.nvars).filter(|v| !keep.contains(v)).collect();
        let mut terms = Vec::with_capacity(self.terms.len());
        for (m, c) in &self.terms {
            for &v in &dropped {
                if m.exponent(v) != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "cannot project out variable {v}: it appears with nonzero exponent"
                    )));
                }
            }
            let exps: Vec<u32> = keep.iter().map(|&v| m.exponent(v)).collect();
            terms.push((MultiIndex::from_exponents(&exps)?, *c));
        }
        debug_assert!(terms.windows(2).all(|w| w[0].0 < w[1].0));
        Ok(TruncatedPoly {
            nvars: keep.len(),
            order: self.order,
            terms,
        })
    }

    /// One line per term: `coefficient exp_1 exp_2 ... exp_nvars`, in
    /// ascending graded-lex order. Coefficients use the shortest exact
    /// decimal representation.
    pub fn to_debug_text(&self) -> String {
        let mut out = String::new();
        for (m, c) in &self.terms {
            out.push_str(&format!("{c:?}"));
            for i in 0..self.nvars {
                out.push_str(&format!(" {}", m.exponent(i)));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the format produced by [`Self::to_debug_text`].
    pub fn from_debug_text(nvars: usize, order: u32, text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let coeff: f64 = parts
                .next()
                .unwrap()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 1)))?;
            let exps: Vec<u32> = parts
                .map(|p| {
                    p.parse()
                        .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            if exps.len() != nvars {
                return Err(Error::ArgCountMismatch {
                    got: exps.len(),
                    want: nvars,
                });
            }
            terms.push((MultiIndex::from_exponents(&exps)?, coeff));
        }
        Ok(Self::from_raw(nvars, order, terms))
    }
}

impl fmt::Debug for TruncatedPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TruncatedPoly({} vars, order {}, {} terms)",
            self.nvars,
            self.order,
            self.terms.len()
        )
    }
}

/// Composes several polynomials over one variable set with a shared argument
/// list, memoizing monomial products across components.
pub fn compose_many(
    polys: &[&TruncatedPoly],
    args: &[TruncatedPoly],
    allow_constant: bool,
) -> Result<Vec<TruncatedPoly>> {
    let first = polys.first().ok_or_else(|| {
        Error::InvalidArgument("compose_many requires at least one polynomial".into())
    })?;
    for p in polys {
        first.same_algebra(p)?;
    }
    if args.len() != first.nvars {
        return Err(Error::ArgCountMismatch {
            got: args.len(),
            want: first.nvars,
        });
    }
    let a0 = &args[0];
    for (i, a) in args.iter().enumerate() {
        a0.same_algebra(a)?;
        if !allow_constant && a.constant_term() != 0.0 {
            return Err(Error::NonzeroConstantArg(i));
        }
    }
    let one = TruncatedPoly::constant(a0.nvars, a0.order, 1.0)?;
    let mut cache: HashMap<u128, TruncatedPoly> = HashMap::new();

    fn mono_product(
        m: &MultiIndex,
        args: &[TruncatedPoly],
        one: &TruncatedPoly,
        cache: &mut HashMap<u128, TruncatedPoly>,
    ) -> Result<TruncatedPoly> {
        if m.0 == 0 {
            return Ok(one.clone());
        }
        if let Some(p) = cache.get(&m.0) {
            return Ok(p.clone());
        }
        let var = (0..args.len())
            .find(|&i| m.exponent(i) > 0)
            .expect("nonzero multi-index has a nonzero exponent");
        let parent = MultiIndex(m.0 - (1u128 << MultiIndex::shift(var)));
        let p = mono_product(&parent, args, one, cache)?.mul(&args[var])?;
        cache.insert(m.0, p.clone());
        Ok(p)
    }

    let mut out = Vec::with_capacity(polys.len());
    for f in polys {
        let mut acc = TruncatedPoly::zero(a0.nvars, a0.order)?;
        for (m, c) in &f.terms {
            let prod = mono_product(m, args, &one, &mut cache)?;
            acc = acc.add(&prod.scale(*c))?;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Default variable labels `x0, x1, ...`.
pub fn default_labels(nvars: usize) -> Vec<String> {
    (0..nvars).map(|i| format!("x{i}")).collect()
}

/// A vector-valued polynomial map sharing one input variable set.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMap {
    components: Vec<TruncatedPoly>,
    labels: Vec<String>,
}

impl PolyMap {
    /// Builds a map from components over a common algebra. `labels` names
    /// the input variables and must match the variable count.
    pub fn new(components: Vec<TruncatedPoly>, labels: Vec<String>) -> Result<Self> {
        let first = components.first().ok_or_else(|| {
            Error::InvalidArgument("a polynomial map needs at least one component".into())
        })?;
        for c in &components {
            first.same_algebra(c)?;
        }
        if labels.len() != first.nvars {
            return Err(Error::ArgCountMismatch {
                got: labels.len(),
                want: first.nvars,
            });
        }
        Ok(PolyMap { components, labels })
    }

    /// The identity map on `nvars` variables.
    pub fn identity(nvars: usize, order: u32) -> Result<Self> {
        let components = (0..nvars)
            .map(|i| TruncatedPoly::variable(nvars, order, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(PolyMap {
            components,
            labels: default_labels(nvars),
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn nvars(&self) -> usize {
        self.components[0].nvars()
    }

    pub fn order(&self) -> u32 {
        self.components[0].order()
    }

    pub fn components(&self) -> &[TruncatedPoly] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &TruncatedPoly {
        &self.components[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| c.eval(point)).collect()
    }

    /// `self o inner`: substitutes `inner`'s components for `self`'s
    /// variables. `inner` must be origin-preserving unless `allow_constant`.
    pub fn compose(&self, inner: &PolyMap, allow_constant: bool) -> Result<PolyMap> {
        let refs: Vec<&TruncatedPoly> = self.components.iter().collect();
        let components = compose_many(&refs, &inner.components, allow_constant)?;
        Ok(PolyMap {
            components,
            labels: inner.labels.clone(),
        })
    }

    /// Truncated inverse of a square origin-preserving map with invertible
    /// linear part, via `order` sweeps of the fixed-point iteration
    /// `m^-1 <- Linv o (Id - N o m^-1)`.
    pub fn invert(&self) -> Result<PolyMap> {
        let n = self.nvars();
        let order = self.order();
        if self.components.len() != n {
            return Err(Error::MapNotSquare {
                components: self.components.len(),
                nvars: n,
            });
        }
        for (i, c) in self.components.iter().enumerate() {
            let c0 = c.constant_term();
            if c0 != 0.0 {
                return Err(Error::NotOriginPreserving(i, c0));
            }
        }
        // linear part
        let mut l = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (i, comp) in self.components.iter().enumerate() {
            for j in 0..n {
                let mut exps = vec![0u32; n];
                exps[j] = 1;
                l[(i, j)] = comp.coefficient(&exps)?;
            }
        }
        let linv = l.try_inverse().ok_or(Error::SingularLinearPart)?;

        // nonlinear remainder: terms of degree >= 2
        let nonlinear: Vec<TruncatedPoly> = self
            .components
            .iter()
            .map(|c| {
                let terms = c
                    .terms()
                    .iter()
                    .copied()
                    .filter(|(m, _)| m.degree() >= 2)
                    .collect();
                TruncatedPoly {
                    nvars: n,
                    order,
                    terms,
                }
            })
            .collect();
        let nonlinear_map = PolyMap {
            components: nonlinear,
            labels: default_labels(n),
        };
        let identity = PolyMap::identity(n, order)?;

        let apply_linv = |map: &PolyMap| -> Result<PolyMap> {
            let mut components = Vec::with_capacity(n);
            for i in 0..n {
                let mut acc = TruncatedPoly::zero(n, order)?;
                for j in 0..n {
                    let w = linv[(i, j)];
                    if w != 0.0 {
                        acc = acc.add(&map.components[j].scale(w))?;
                    }
                }
                components.push(acc);
            }
            PolyMap::new(components, default_labels(n))
        };

        let mut inverse = apply_linv(&identity)?;
        for _ in 0..order {
            let nm = nonlinear_map.compose(&inverse, false)?;
            let mut components = Vec::with_capacity(n);
            for i in 0..n {
                components.push(identity.components[i].sub(&nm.components[i])?);
            }
            let rhs = PolyMap {
                components,
                labels: default_labels(n),
            };
            inverse = apply_linv(&rhs)?;
        }
        Ok(inverse)
    }
}
