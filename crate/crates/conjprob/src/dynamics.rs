//! Keplerian two-body dynamics for point states and polynomial jets.
//!
//! The integrator is an adaptive embedded Fehlberg 8(7) pair (13 stages,
//! advanced with the 8th-order solution). It is generic over [`DaField`],
//! so the same right-hand side propagates ordinary `f64` states and
//! [`TruncatedPoly`] jets (jet transport); for jets the step controller acts
//! on the constant part of each component.
//!
//! Closest-approach detection scans the sign of e(t) = r_rel . v_rel on a
//! sub-period grid and polishes each negative-to-positive crossing (a local
//! distance minimum) with Brent's method.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::poly::TruncatedPoly;

/// Osculating Keplerian elements. Lengths in km, angles in radians, the
/// anomaly slot holds the eccentric anomaly.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KeplerElements {
    /// Semi-major axis, km.
    pub a: f64,
    /// Eccentricity.
    pub e: f64,
    /// Inclination, rad.
    pub i: f64,
    /// Right ascension of the ascending node, rad.
    pub raan: f64,
    /// Argument of perigee, rad.
    pub argp: f64,
    /// Eccentric anomaly, rad.
    pub ecc_anom: f64,
}

/// Inertial Cartesian state: position km, velocity km/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartesianState {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl KeplerElements {
    /// Orbital period, s.
    pub fn period(&self, mu: f64) -> f64 {
        2.0 * std::f64::consts::PI * (self.a.powi(3) / mu).sqrt()
    }
}

/// Converts elements to an inertial Cartesian state.
pub fn elements_to_state(el: &KeplerElements, mu: f64) -> Result<CartesianState> {
    if !(el.a > 0.0) || !(0.0..1.0).contains(&el.e) {
        return Err(Error::InvalidArgument(format!(
            "elements require a > 0 and 0 <= e < 1, got a = {}, e = {}",
            el.a, el.e
        )));
    }
    let (se, ce) = el.ecc_anom.sin_cos();
    let b_over_a = (1.0 - el.e * el.e).sqrt();
    let r_pf = Vector3::new(el.a * (ce - el.e), el.a * b_over_a * se, 0.0);
    let r_mag = r_pf.norm();
    let v_scale = (mu * el.a).sqrt() / r_mag;
    let v_pf = Vector3::new(-v_scale * se, v_scale * b_over_a * ce, 0.0);
    let rot = perifocal_to_inertial(el.raan, el.i, el.argp);
    Ok(CartesianState {
        r: rot * r_pf,
        v: rot * v_pf,
    })
}

fn perifocal_to_inertial(raan: f64, inc: f64, argp: f64) -> Matrix3<f64> {
    let (so, co) = raan.sin_cos();
    let (si, ci) = inc.sin_cos();
    let (sw, cw) = argp.sin_cos();
    Matrix3::new(
        co * cw - so * sw * ci,
        -co * sw - so * cw * ci,
        so * si,
        so * cw + co * sw * ci,
        -so * sw + co * cw * ci,
        -co * si,
        sw * si,
        cw * si,
        ci,
    )
}

/// Converts a Cartesian state back to elements. Requires a bound,
/// non-degenerate orbit (0 < e < 1, nonzero inclination).
pub fn state_to_elements(state: &CartesianState, mu: f64) -> Result<KeplerElements> {
    let r = state.r;
    let v = state.v;
    let r_mag = r.norm();
    let h = r.cross(&v);
    let h_mag = h.norm();
    if r_mag == 0.0 || h_mag == 0.0 {
        return Err(Error::InvalidArgument(
            "degenerate state: zero radius or angular momentum".into(),
        ));
    }
    let energy = 0.5 * v.norm_squared() - mu / r_mag;
    if energy >= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "state is not on a bound orbit (specific energy {energy:e} >= 0)"
        )));
    }
    let a = -mu / (2.0 * energy);
    let e_vec = ((v.norm_squared() - mu / r_mag) * r - r.dot(&v) * v) / mu;
    let e = e_vec.norm();
    if !(1e-12..1.0).contains(&e) {
        return Err(Error::InvalidArgument(format!(
            "eccentricity {e} outside the supported open interval (0, 1)"
        )));
    }
    let i = (h.z / h_mag).clamp(-1.0, 1.0).acos();
    let n = Vector3::new(-h.y, h.x, 0.0); // node vector z_hat x h
    if n.norm() < 1e-12 * h_mag {
        return Err(Error::InvalidArgument(
            "equatorial orbit: ascending node undefined".into(),
        ));
    }
    let raan = wrap_angle(n.y.atan2(n.x));
    let n_hat = n.normalize();
    let h_hat = h / h_mag;
    let e_hat = e_vec / e;
    let argp = wrap_angle(n_hat.cross(&e_hat).dot(&h_hat).atan2(n_hat.dot(&e_hat)));
    let true_anom = e_hat
        .cross(&(r / r_mag))
        .dot(&h_hat)
        .atan2(e_hat.dot(&r) / r_mag);
    let ecc_anom = wrap_angle(2.0 * (((1.0 - e) / (1.0 + e)).sqrt() * (true_anom / 2.0).tan()).atan());
    Ok(KeplerElements {
        a,
        e,
        i,
        raan,
        argp,
        ecc_anom,
    })
}

fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let y = x % two_pi;
    if y < 0.0 {
        y + two_pi
    } else {
        y
    }
}

/// Rotation whose columns are the RTN basis vectors (radial, transverse,
/// normal) of a state, expressed in the inertial frame. Maps RTN
/// displacements to inertial displacements; determinant +1.
pub fn rtn_frame(state: &CartesianState) -> Result<Matrix3<f64>> {
    let r_mag = state.r.norm();
    let h = state.r.cross(&state.v);
    let h_mag = h.norm();
    if r_mag == 0.0 || h_mag == 0.0 {
        return Err(Error::InvalidArgument(
            "RTN frame undefined for zero radius or angular momentum".into(),
        ));
    }
    let r_hat = state.r / r_mag;
    let n_hat = h / h_mag;
    let t_hat = n_hat.cross(&r_hat);
    Ok(Matrix3::from_columns(&[r_hat, t_hat, n_hat]))
}

// ---------------------------------------------------------------------------
// generic scalar field
// ---------------------------------------------------------------------------

/// Scalar type the integrator and right-hand sides are generic over:
/// ordinary reals or truncated polynomials (jets).
///
/// Binary operations on polynomial values require both operands to share one
/// algebra; the propagation entry points validate this once, so violations
/// inside the arithmetic are programming errors and panic.
pub trait DaField: Clone {
    /// A constant with the same shape as `self`.
    fn const_like(&self, value: f64) -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn scale(&self, factor: f64) -> Self;
    /// `self += a * x`.
    fn axpy(&mut self, a: f64, x: &Self);
    /// Constant (zeroth-order) part, used for step-size control.
    fn nominal(&self) -> f64;
    /// Real power; requires a strictly positive nominal part.
    fn powf(&self, p: f64) -> Result<Self>;
}

impl DaField for f64 {
    fn const_like(&self, value: f64) -> f64 {
        value
    }
    fn add(&self, rhs: &f64) -> f64 {
        self + rhs
    }
    fn sub(&self, rhs: &f64) -> f64 {
        self - rhs
    }
    fn mul(&self, rhs: &f64) -> f64 {
        self * rhs
    }
    fn scale(&self, factor: f64) -> f64 {
        self * factor
    }
    fn axpy(&mut self, a: f64, x: &f64) {
        *self += a * x;
    }
    fn nominal(&self) -> f64 {
        *self
    }
    fn powf(&self, p: f64) -> Result<f64> {
        if !(*self > 0.0) {
            return Err(Error::NonpositiveSeriesBase(*self));
        }
        Ok(f64::powf(*self, p))
    }
}

impl DaField for TruncatedPoly {
    fn const_like(&self, value: f64) -> TruncatedPoly {
        TruncatedPoly::constant(self.nvars(), self.order(), value)
            .expect("shape of an existing polynomial is valid")
    }
    fn add(&self, rhs: &TruncatedPoly) -> TruncatedPoly {
        TruncatedPoly::add(self, rhs).expect("jet algebra mismatch")
    }
    fn sub(&self, rhs: &TruncatedPoly) -> TruncatedPoly {
        TruncatedPoly::sub(self, rhs).expect("jet algebra mismatch")
    }
    fn mul(&self, rhs: &TruncatedPoly) -> TruncatedPoly {
        TruncatedPoly::mul(self, rhs).expect("jet algebra mismatch")
    }
    fn scale(&self, factor: f64) -> TruncatedPoly {
        TruncatedPoly::scale(self, factor)
    }
    fn axpy(&mut self, a: f64, x: &TruncatedPoly) {
        *self = TruncatedPoly::add(self, &x.scale(a)).expect("jet algebra mismatch");
    }
    fn nominal(&self) -> f64 {
        self.constant_term()
    }
    fn powf(&self, p: f64) -> Result<TruncatedPoly> {
        TruncatedPoly::powf(self, p)
    }
}

/// Autonomous vector field over a generic scalar.
pub trait OdeSystem<S: DaField> {
    fn dim(&self) -> usize;
    /// Writes dy/dt into `out` (pre-sized to `dim`).
    fn rhs(&self, y: &[S], out: &mut [S]) -> Result<()>;
}

// ---------------------------------------------------------------------------
// Fehlberg 8(7) embedded pair (13 stages), advanced at 8th order
// ---------------------------------------------------------------------------

const STAGES: usize = 13;

#[rustfmt::skip]
const RK_A: [[f64; 12]; STAGES] = [
    [0.0; 12],
    [2.0/27.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0/36.0, 1.0/12.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0/24.0, 0.0, 1.0/8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [5.0/12.0, 0.0, -25.0/16.0, 25.0/16.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0/20.0, 0.0, 0.0, 1.0/4.0, 1.0/5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-25.0/108.0, 0.0, 0.0, 125.0/108.0, -65.0/27.0, 125.0/54.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [31.0/300.0, 0.0, 0.0, 0.0, 61.0/225.0, -2.0/9.0, 13.0/900.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.0, 0.0, 0.0, -53.0/6.0, 704.0/45.0, -107.0/9.0, 67.0/90.0, 3.0, 0.0, 0.0, 0.0, 0.0],
    [-91.0/108.0, 0.0, 0.0, 23.0/108.0, -976.0/135.0, 311.0/54.0, -19.0/60.0, 17.0/6.0, -1.0/12.0, 0.0, 0.0, 0.0],
    [2383.0/4100.0, 0.0, 0.0, -341.0/164.0, 4496.0/1025.0, -301.0/82.0, 2133.0/4100.0, 45.0/82.0, 45.0/164.0, 18.0/41.0, 0.0, 0.0],
    [3.0/205.0, 0.0, 0.0, 0.0, 0.0, -6.0/41.0, -3.0/205.0, -3.0/41.0, 3.0/41.0, 6.0/41.0, 0.0, 0.0],
    [-1777.0/4100.0, 0.0, 0.0, -341.0/164.0, 4496.0/1025.0, -289.0/82.0, 2193.0/4100.0, 51.0/82.0, 33.0/164.0, 12.0/41.0, 0.0, 1.0],
];

#[rustfmt::skip]
const RK_B8: [f64; STAGES] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 34.0/105.0, 9.0/35.0, 9.0/35.0,
    9.0/280.0, 9.0/280.0, 0.0, 41.0/840.0, 41.0/840.0,
];

/// y8 - y7 = h * ERR_COEF * (k0 + k10 - k11 - k12).
const RK_ERR_COEF: f64 = 41.0 / 840.0;

/// Adaptive integration options.
#[derive(Clone, Copy, Debug)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; derived from the span when `None`.
    pub h_initial: Option<f64>,
    pub max_steps: u64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-12,
            atol: 1e-12,
            h_initial: None,
            max_steps: 10_000_000,
        }
    }
}

/// Integrates an autonomous system over a signed time span (negative spans
/// integrate backward). Returns the final state.
pub fn integrate<S: DaField>(
    system: &impl OdeSystem<S>,
    y0: Vec<S>,
    span: f64,
    opts: &IntegratorOptions,
) -> Result<Vec<S>> {
    let dim = system.dim();
    if y0.len() != dim {
        return Err(Error::ArgCountMismatch {
            got: y0.len(),
            want: dim,
        });
    }
    if span == 0.0 {
        return Ok(y0);
    }
    let direction = span.signum();
    let t_end = span.abs();
    let mut t = 0.0f64;
    let mut y = y0;
    let mut h = opts.h_initial.map(f64::abs).unwrap_or(t_end / 100.0).min(t_end);

    let zero = y[0].const_like(0.0);
    let mut k: Vec<Vec<S>> = (0..STAGES).map(|_| vec![zero.clone(); dim]).collect();
    let mut stage = vec![zero.clone(); dim];

    let mut steps = 0u64;
    while t < t_end {
        steps += 1;
        if steps > opts.max_steps || h < 1e-14 * t_end {
            return Err(Error::StepSizeUnderflow(direction * t));
        }
        // exact landing on the endpoint; rejection re-enters with smaller h
        let last = h >= t_end - t;
        let h_step = if last { t_end - t } else { h };
        let hs = direction * h_step;

        // index loop: i selects the RK_A row, the k prefix, and the output
        // slot together
        #[allow(clippy::needless_range_loop)]
        for i in 0..STAGES {
            stage.clone_from_slice(&y);
            for j in 0..i {
                let a = RK_A[i][j];
                if a != 0.0 {
                    for (s, kj) in stage.iter_mut().zip(&k[j]) {
                        s.axpy(hs * a, kj);
                    }
                }
            }
            let (before, after) = k.split_at_mut(i);
            let _ = before;
            system.rhs(&stage, &mut after[0])?;
        }

        // error estimate on nominal parts, RMS-normalized
        let mut err_sq = 0.0;
        for m in 0..dim {
            let delta = hs
                * RK_ERR_COEF
                * (k[0][m].nominal() + k[10][m].nominal()
                    - k[11][m].nominal()
                    - k[12][m].nominal());
            let scale = opts.atol + opts.rtol * y[m].nominal().abs();
            err_sq += (delta / scale).powi(2);
        }
        let err = (err_sq / dim as f64).sqrt();

        let accepted = err <= 1.0;
        if accepted {
            for (i, b) in RK_B8.iter().enumerate() {
                if *b != 0.0 {
                    for (ym, ki) in y.iter_mut().zip(&k[i]) {
                        ym.axpy(hs * b, ki);
                    }
                }
            }
            if last {
                break;
            }
            t += h_step;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-1.0 / 8.0)).clamp(0.2, 5.0)
        };
        h = h_step * factor;
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// Kepler systems
// ---------------------------------------------------------------------------

/// Two-body point-mass acceleration: -mu r / |r|^3, generic over the scalar.
pub(crate) fn kepler_accel<S: DaField>(r: &[S], mu: f64) -> Result<[S; 3]> {
    let r2 = r[0]
        .mul(&r[0])
        .add(&r[1].mul(&r[1]))
        .add(&r[2].mul(&r[2]));
    let inv_r3 = r2.powf(-1.5)?;
    Ok([
        r[0].mul(&inv_r3).scale(-mu),
        r[1].mul(&inv_r3).scale(-mu),
        r[2].mul(&inv_r3).scale(-mu),
    ])
}

/// Single-object two-body problem, state (r, v) of dimension 6.
pub struct TwoBody {
    pub mu: f64,
}

impl<S: DaField> OdeSystem<S> for TwoBody {
    fn dim(&self) -> usize {
        6
    }
    fn rhs(&self, y: &[S], out: &mut [S]) -> Result<()> {
        let acc = kepler_accel(&y[0..3], self.mu)?;
        out[..3].clone_from_slice(&y[3..6]);
        out[3..6].clone_from_slice(&acc);
        Ok(())
    }
}

/// Two independent objects, stacked state (r_a, v_a, r_b, v_b), dim 12.
pub struct TwoBodyPair {
    pub mu: f64,
}

impl<S: DaField> OdeSystem<S> for TwoBodyPair {
    fn dim(&self) -> usize {
        12
    }
    fn rhs(&self, y: &[S], out: &mut [S]) -> Result<()> {
        let acc_a = kepler_accel(&y[0..3], self.mu)?;
        let acc_b = kepler_accel(&y[6..9], self.mu)?;
        out[..3].clone_from_slice(&y[3..6]);
        out[3..6].clone_from_slice(&acc_a);
        out[6..9].clone_from_slice(&y[9..12]);
        out[9..12].clone_from_slice(&acc_b);
        Ok(())
    }
}

/// Propagates a point state by `dt` seconds (negative integrates backward).
pub fn propagate(
    state: &CartesianState,
    dt: f64,
    mu: f64,
    opts: &IntegratorOptions,
) -> Result<CartesianState> {
    let y0 = vec![
        state.r.x, state.r.y, state.r.z, state.v.x, state.v.y, state.v.z,
    ];
    let y = integrate(&TwoBody { mu }, y0, dt, opts)?;
    Ok(CartesianState {
        r: Vector3::new(y[0], y[1], y[2]),
        v: Vector3::new(y[3], y[4], y[5]),
    })
}

/// Propagates two point states simultaneously.
pub fn propagate_pair(
    a: &CartesianState,
    b: &CartesianState,
    dt: f64,
    mu: f64,
    opts: &IntegratorOptions,
) -> Result<(CartesianState, CartesianState)> {
    let y0 = pair_to_vec(a, b);
    let y = integrate(&TwoBodyPair { mu }, y0, dt, opts)?;
    Ok(vec_to_pair(&y))
}

pub(crate) fn pair_to_vec(a: &CartesianState, b: &CartesianState) -> Vec<f64> {
    vec![
        a.r.x, a.r.y, a.r.z, a.v.x, a.v.y, a.v.z, b.r.x, b.r.y, b.r.z, b.v.x, b.v.y, b.v.z,
    ]
}

pub(crate) fn vec_to_pair(y: &[f64]) -> (CartesianState, CartesianState) {
    (
        CartesianState {
            r: Vector3::new(y[0], y[1], y[2]),
            v: Vector3::new(y[3], y[4], y[5]),
        },
        CartesianState {
            r: Vector3::new(y[6], y[7], y[8]),
            v: Vector3::new(y[9], y[10], y[11]),
        },
    )
}

/// Propagates a polynomial jet of one object (6 components) or a stacked
/// pair (12 components). All components must share one algebra.
pub fn propagate_jet(
    jet: &[TruncatedPoly],
    dt: f64,
    mu: f64,
    opts: &IntegratorOptions,
) -> Result<Vec<TruncatedPoly>> {
    let first = jet.first().ok_or(Error::ArgCountMismatch {
        got: 0,
        want: 6,
    })?;
    for p in jet {
        if p.nvars() != first.nvars() || p.order() != first.order() {
            return Err(Error::AlgebraMismatch(
                first.nvars(),
                first.order(),
                p.nvars(),
                p.order(),
            ));
        }
    }
    match jet.len() {
        6 => integrate(&TwoBody { mu }, jet.to_vec(), dt, opts),
        12 => integrate(&TwoBodyPair { mu }, jet.to_vec(), dt, opts),
        n => Err(Error::ArgCountMismatch { got: n, want: 6 }),
    }
}

// ---------------------------------------------------------------------------
// closest-approach detection
// ---------------------------------------------------------------------------

/// A polished local minimum of the separation distance.
#[derive(Clone, Copy, Debug)]
pub struct CaEvent {
    /// Event time relative to the epoch of the searched states, s.
    pub t: f64,
    /// Separation at the event, km.
    pub distance: f64,
    /// Relative speed at the event, km/s.
    pub rel_speed: f64,
    pub state_a: CartesianState,
    pub state_b: CartesianState,
}

/// Result of a closest-approach search over a time window.
#[derive(Clone, Copy, Debug)]
pub struct CaSearch {
    /// First local minimum inside the window.
    pub event: CaEvent,
    /// Total minima detected inside the window.
    pub minima_count: usize,
}

/// Normalized approach indicator e = (r_rel . v_rel) / (|r_rel| |v_rel|);
/// a negative-to-positive zero crossing marks a distance minimum.
fn approach_indicator(y: &[f64]) -> f64 {
    let rr = [y[0] - y[6], y[1] - y[7], y[2] - y[8]];
    let vr = [y[3] - y[9], y[4] - y[10], y[5] - y[11]];
    let dot = rr[0] * vr[0] + rr[1] * vr[1] + rr[2] * vr[2];
    let rn = (rr[0] * rr[0] + rr[1] * rr[1] + rr[2] * rr[2]).sqrt();
    let vn = (vr[0] * vr[0] + vr[1] * vr[1] + vr[2] * vr[2]).sqrt();
    dot / (rn * vn + f64::MIN_POSITIVE)
}

fn separation(y: &[f64]) -> f64 {
    ((y[0] - y[6]).powi(2) + (y[1] - y[7]).powi(2) + (y[2] - y[8]).powi(2)).sqrt()
}

/// Unnormalized event function e = r_rel . v_rel and its time derivative
/// e_dot = |v_rel|^2 + r_rel . (a_A - a_B) for a pair state.
pub(crate) fn pair_event_and_rate(y: &[f64], mu: f64) -> (f64, f64) {
    let rr = [y[0] - y[6], y[1] - y[7], y[2] - y[8]];
    let vr = [y[3] - y[9], y[4] - y[10], y[5] - y[11]];
    let ra3 = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).powf(1.5);
    let rb3 = (y[6] * y[6] + y[7] * y[7] + y[8] * y[8]).powf(1.5);
    let mut e = 0.0;
    let mut rate = 0.0;
    for i in 0..3 {
        let da = -mu * y[i] / ra3 + mu * y[6 + i] / rb3;
        e += rr[i] * vr[i];
        rate += vr[i] * vr[i] + rr[i] * da;
    }
    (e, rate)
}

fn event_from_pair_state(t: f64, y: &[f64]) -> CaEvent {
    let (state_a, state_b) = vec_to_pair(y);
    let vr = state_a.v - state_b.v;
    CaEvent {
        t,
        distance: separation(y),
        rel_speed: vr.norm(),
        state_a,
        state_b,
    }
}

/// Finds every local minimum of the pair separation for t in `[t_start,
/// t_end]` relative to the given epoch states, in increasing time order.
///
/// The scan grid step is 1/50 of the shorter orbital period; each sign
/// change of the approach indicator is polished with Brent's method to a
/// time tolerance of 1e-9 s.
pub fn approach_minima(
    a: &CartesianState,
    b: &CartesianState,
    t_start: f64,
    t_end: f64,
    mu: f64,
    opts: &IntegratorOptions,
) -> Result<Vec<CaEvent>> {
    if !(t_end > t_start) {
        return Err(Error::InvalidArgument(format!(
            "search window must satisfy t_end > t_start, got [{t_start}, {t_end}]"
        )));
    }
    let period_a = state_to_elements(a, mu)?.period(mu);
    let period_b = state_to_elements(b, mu)?.period(mu);
    let dt = period_a.min(period_b) / 50.0;
    let system = TwoBodyPair { mu };

    // one grid cell is a small fraction of an orbit, so seed the step
    // controller with the full cell instead of the span/100 default; the
    // controller still shrinks it if the error demands
    let opts = &IntegratorOptions {
        h_initial: Some(opts.h_initial.map(f64::abs).unwrap_or(dt)),
        ..*opts
    };

    let mut y = integrate(&system, pair_to_vec(a, b), t_start, opts)?;
    let mut t = t_start;

    // degenerate geometry: coincident states never produce a sign change
    if separation(&y) < 1e-9 {
        return Ok(vec![event_from_pair_state(t, &y)]);
    }

    let mut events = Vec::new();
    let mut e_prev = approach_indicator(&y);
    while t < t_end {
        let step = dt.min(t_end - t);
        let y_next = integrate(&system, y.clone(), step, opts)?;
        let e_next = approach_indicator(&y_next);
        if e_prev < 0.0 && e_next >= 0.0 {
            let event = polish_minimum(&y, step, t, mu, opts)?;
            events.push(event);
        }
        y = y_next;
        t += step;
        e_prev = e_next;
    }
    Ok(events)
}

/// Brent root polish of the approach indicator inside one bracketing grid
/// cell. `y_left` is the pair state at absolute time `t_left`; the root lies
/// in `[0, width]` seconds past it.
fn polish_minimum(
    y_left: &[f64],
    width: f64,
    t_left: f64,
    mu: f64,
    opts: &IntegratorOptions,
) -> Result<CaEvent> {
    let system = TwoBodyPair { mu };
    let eval = |tau: f64| -> Result<(f64, Vec<f64>)> {
        let y = if tau == 0.0 {
            y_left.to_vec()
        } else {
            integrate(&system, y_left.to_vec(), tau, opts)?
        };
        Ok((approach_indicator(&y), y))
    };
    let tau = brent(&|tau| Ok(eval(tau)?.0), 0.0, width, 1e-9, 200)?;
    let (_, y) = eval(tau)?;

    // Newton refinement on the unnormalized event function; Brent's time
    // tolerance alone leaves |e| well above machine level when the crossing
    // is steep (close approaches at high relative speed).
    let mut best_tau = tau;
    let mut best_y = y;
    let (mut best_e, _) = pair_event_and_rate(&best_y, mu);
    for _ in 0..5 {
        let (e, rate) = pair_event_and_rate(&best_y, mu);
        if rate == 0.0 {
            break;
        }
        let step = -e / rate;
        let cand_tau = best_tau + step;
        let cand_y = integrate(&system, best_y.clone(), step, opts)?;
        let (cand_e, _) = pair_event_and_rate(&cand_y, mu);
        if cand_e.abs() < best_e.abs() {
            best_tau = cand_tau;
            best_y = cand_y;
            best_e = cand_e;
        } else {
            break;
        }
    }
    Ok(event_from_pair_state(t_left + best_tau, &best_y))
}

/// Brent's method for a root of `f` in `[a, b]` with `f(a) f(b) <= 0`.
fn brent(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa * fb > 0.0 {
        return Err(Error::BracketingFailed(format!(
            "no sign change over [{a}, {b}]: f = [{fa:e}, {fb:e}]"
        )));
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut mflag = true;
    for _ in 0..max_iter {
        if fb == 0.0 || (b - a).abs() < xtol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let hi = b;
        let out_of_range = (s - lo) * (s - hi) > 0.0;
        let too_slow = if mflag {
            (s - b).abs() >= (b - c).abs() / 2.0
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0
        };
        if out_of_range || too_slow {
            s = 0.5 * (a + b);
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s)?;
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}

/// Finds the first local minimum of the separation within `[0, horizon]`
/// seconds of the given epoch and counts all minima inside the horizon.
///
/// The scan starts half a grid cell before the epoch so that a conjunction
/// sitting exactly at t = 0 is bracketed rather than skipped.
pub fn find_closest_approach(
    a: &CartesianState,
    b: &CartesianState,
    horizon: f64,
    mu: f64,
    opts: &IntegratorOptions,
) -> Result<CaSearch> {
    let period_a = state_to_elements(a, mu)?.period(mu);
    let period_b = state_to_elements(b, mu)?.period(mu);
    let dt = period_a.min(period_b) / 50.0;
    let events = approach_minima(a, b, -0.5 * dt, horizon, mu, opts)?;
    let event = *events
        .first()
        .ok_or(Error::NoClosestApproach(0.0, horizon))?;
    Ok(CaSearch {
        event,
        minima_count: events.len(),
    })
}

/// Polishes the separation minimum nearest to a pair state that is already
/// close to a conjunction. Expands the bracket around t = 0 (relative to
/// the given states) up to `max_window` seconds in either direction.
pub fn refine_minimum_near(
    a: &CartesianState,
    b: &CartesianState,
    window: f64,
    max_window: f64,
    mu: f64,
    opts: &IntegratorOptions,
) -> Result<CaEvent> {
    let system = TwoBodyPair { mu };
    let y0 = pair_to_vec(a, b);
    let mut w = window;
    loop {
        let y_lo = integrate(&system, y0.clone(), -w, opts)?;
        let e_lo = approach_indicator(&y_lo);
        let y_hi = integrate(&system, y0.clone(), w, opts)?;
        let e_hi = approach_indicator(&y_hi);
        if e_lo < 0.0 && e_hi >= 0.0 {
            let event = polish_minimum(&y_lo, 2.0 * w, -w, mu, opts)?;
            return Ok(event);
        }
        w *= 2.0;
        if w > max_window {
            return Err(Error::BracketingFailed(format!(
                "no distance minimum within {max_window} s of the reference state"
            )));
        }
    }
}
