//! Stationary planar stream functions and their divergence-free velocities.
//!
//! A [`FieldSpec`] describes an ensemble; [`sample_field`] draws one member
//! of it as a [`FieldRealization`], which evaluates the stream function and
//! the velocity `V = (-d2 psi, d1 psi)` analytically at any point. The
//! ensembles are stationary: a shift of the realization has the same law.
//!
//! The `gradient-trap` kind is the exception. It is a fixed, compressible
//! field `V = grad Q` with `Q = |x|^2` near the origin, used as a negative
//! control; it has no stream function.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::stats::Estimate;

/// Anything that supplies a bounded velocity field to the solvers.
pub trait VelocityField: Sync {
    fn velocity_at(&self, x: Vec2) -> Vec2;

    /// Uniform bound on `|V|`.
    fn speed_bound(&self) -> f64;
}

impl VelocityField for FieldRealization {
    fn velocity_at(&self, x: Vec2) -> Vec2 {
        self.velocity(x)
    }

    fn speed_bound(&self) -> f64 {
        self.velocity_bound()
    }
}

/// One Fourier mode `a cos(k . x + theta)` of a random stream function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub wavevector: Vec2,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    /// Uniform drift; the stream function is linear.
    Constant { velocity: Vec2 },
    /// `psi = A cos(x2 + U)`.
    Shear { amplitude: f64 },
    /// `psi = A sin(x1 + U1) sin(x2 + U2)`.
    Cellular { amplitude: f64 },
    /// `psi = sum_k a_k cos(k_k . x + theta_k)` with independent uniform phases.
    ///
    /// With `isotropic` set, each wavevector keeps its length but gets a
    /// direction drawn uniformly on the circle. This gives isotropy in
    /// distribution only.
    RandomFourier {
        modes: Vec<FourierMode>,
        #[serde(default)]
        isotropic: bool,
    },
    /// `V = grad Q` with `Q = |x|^2` on the unit disk, smoothly switched off
    /// between radius 1 and `cap_radius`.
    GradientTrap {
        #[serde(default = "default_cap_radius")]
        cap_radius: f64,
    },
}

fn default_cap_radius() -> f64 {
    2.0
}

impl FieldSpec {
    pub fn zero() -> FieldSpec {
        FieldSpec::Constant { velocity: Vec2::ZERO }
    }

    pub fn constant(v1: f64, v2: f64) -> FieldSpec {
        FieldSpec::Constant { velocity: Vec2::new(v1, v2) }
    }

    pub fn shear(amplitude: f64) -> FieldSpec {
        FieldSpec::Shear { amplitude }
    }

    pub fn cellular(amplitude: f64) -> FieldSpec {
        FieldSpec::Cellular { amplitude }
    }

    pub fn gradient_trap() -> FieldSpec {
        FieldSpec::GradientTrap { cap_radius: default_cap_radius() }
    }

    /// `n` equal-weight modes with `|k| = wavenumber` and total amplitude
    /// `amplitude`; directions are redrawn per realization.
    pub fn isotropic_fourier(n: usize, amplitude: f64, wavenumber: f64) -> FieldSpec {
        let modes = (0..n)
            .map(|k| FourierMode {
                wavevector: Vec2::from_angle(PI * k as f64 / n as f64) * wavenumber,
                coefficient: amplitude / n as f64,
            })
            .collect();
        FieldSpec::RandomFourier { modes, isotropic: true }
    }

    pub fn from_json(text: &str) -> Result<FieldSpec> {
        let spec: FieldSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FieldSpec::Constant { .. } => "constant",
            FieldSpec::Shear { .. } => "shear",
            FieldSpec::Cellular { .. } => "cellular",
            FieldSpec::RandomFourier { .. } => "random-fourier",
            FieldSpec::GradientTrap { .. } => "gradient-trap",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        match self {
            FieldSpec::Constant { velocity } if !velocity.is_finite() => {
                bad("constant velocity must be finite")
            }
            FieldSpec::Shear { amplitude } | FieldSpec::Cellular { amplitude }
                if !amplitude.is_finite() =>
            {
                bad("amplitude must be finite")
            }
            FieldSpec::RandomFourier { modes, .. } if modes.is_empty() => {
                bad("random-fourier needs at least one mode")
            }
            FieldSpec::RandomFourier { modes, .. }
                if modes.iter().any(|m| !m.wavevector.is_finite() || !m.coefficient.is_finite()) =>
            {
                bad("mode wavevectors and coefficients must be finite")
            }
            FieldSpec::GradientTrap { cap_radius } if !(*cap_radius > 1.0) => {
                bad("gradient-trap cap radius must exceed 1")
            }
            _ => Ok(()),
        }
    }

    /// Uniform bound `V_inf` on `|V|` over all realizations.
    pub fn velocity_bound(&self) -> f64 {
        match self {
            FieldSpec::Constant { velocity } => velocity.norm(),
            FieldSpec::Shear { amplitude } | FieldSpec::Cellular { amplitude } => amplitude.abs(),
            FieldSpec::RandomFourier { modes, .. } => {
                modes.iter().map(|m| m.coefficient.abs() * m.wavevector.norm()).sum()
            }
            FieldSpec::GradientTrap { cap_radius } => trap_speed_max(*cap_radius),
        }
    }

    /// Uniform bound on `|psi|`, when the stream function is bounded.
    pub fn psi_bound(&self) -> Option<f64> {
        match self {
            FieldSpec::Constant { velocity } => (*velocity == Vec2::ZERO).then_some(0.0),
            FieldSpec::Shear { amplitude } | FieldSpec::Cellular { amplitude } => {
                Some(amplitude.abs())
            }
            FieldSpec::RandomFourier { modes, .. } => {
                Some(modes.iter().map(|m| m.coefficient.abs()).sum())
            }
            FieldSpec::GradientTrap { .. } => None,
        }
    }

    pub fn is_divergence_free(&self) -> bool {
        !matches!(self, FieldSpec::GradientTrap { .. })
    }

    /// Whether `E[V] = 0` for the ensemble.
    pub fn is_mean_zero(&self) -> bool {
        match self {
            FieldSpec::Constant { velocity } => *velocity == Vec2::ZERO,
            FieldSpec::GradientTrap { .. } => false,
            _ => true,
        }
    }

    /// Whether the stream function itself is a stationary random field.
    pub fn has_stationary_stream(&self) -> bool {
        self.is_divergence_free() && self.psi_bound().is_some()
    }
}

/// One sampled realization: the field spec, the drawn phases and the shift offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRealization {
    spec: FieldSpec,
    phases: Vec<f64>,
    /// Resolved wavevectors for random-fourier (directions drawn when isotropic).
    modes: Vec<FourierMode>,
    offset: Vec2,
}

/// Derive an independent stream seed from a base seed and an index.
///
/// Each ensemble member gets its own generator, so results do not depend on
/// the order in which members are evaluated.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_field(spec: &FieldSpec, seed: u64) -> Result<FieldRealization> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() * TAU).collect() };
    let (phases, modes) = match spec {
        FieldSpec::Constant { .. } | FieldSpec::GradientTrap { .. } => (Vec::new(), Vec::new()),
        FieldSpec::Shear { .. } => (draw(1), Vec::new()),
        FieldSpec::Cellular { .. } => (draw(2), Vec::new()),
        FieldSpec::RandomFourier { modes, isotropic } => {
            let phases = draw(modes.len());
            let resolved = if *isotropic {
                let angles = draw(modes.len());
                modes
                    .iter()
                    .zip(angles)
                    .map(|(m, a)| FourierMode {
                        wavevector: Vec2::from_angle(a) * m.wavevector.norm(),
                        coefficient: m.coefficient,
                    })
                    .collect()
            } else {
                modes.clone()
            };
            (phases, resolved)
        }
    };
    Ok(FieldRealization { spec: spec.clone(), phases, modes, offset: Vec2::ZERO })
}

impl FieldRealization {
    /// A realization with explicitly chosen phases (radians), in the order
    /// the sampler draws them.
    pub fn with_phases(spec: &FieldSpec, phases: &[f64]) -> Result<FieldRealization> {
        let mut f = sample_field(spec, 0)?;
        if phases.len() != f.phases.len() {
            return Err(Error::InvalidArgument(format!(
                "{} expects {} phases, got {}",
                spec.kind_name(),
                f.phases.len(),
                phases.len()
            )));
        }
        f.phases = phases.to_vec();
        Ok(f)
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn modes(&self) -> &[FourierMode] {
        &self.modes
    }

    pub fn offset(&self) -> Vec2 {
        self.offset
    }

    pub fn velocity_bound(&self) -> f64 {
        self.spec.velocity_bound()
    }

    /// Stream function at `x`; NaN for the compressible trap field.
    pub fn psi(&self, x: Vec2) -> f64 {
        let z = x + self.offset;
        match &self.spec {
            FieldSpec::Constant { velocity } => velocity.y * z.x - velocity.x * z.y,
            FieldSpec::Shear { amplitude } => amplitude * (z.y + self.phases[0]).cos(),
            FieldSpec::Cellular { amplitude } => {
                amplitude * (z.x + self.phases[0]).sin() * (z.y + self.phases[1]).sin()
            }
            FieldSpec::RandomFourier { .. } => self
                .modes
                .iter()
                .zip(&self.phases)
                .map(|(m, th)| m.coefficient * (m.wavevector.dot(z) + th).cos())
                .sum(),
            FieldSpec::GradientTrap { .. } => f64::NAN,
        }
    }

    /// Velocity at `x`, the analytic perpendicular gradient of the stream function.
    pub fn velocity(&self, x: Vec2) -> Vec2 {
        let z = x + self.offset;
        match &self.spec {
            FieldSpec::Constant { velocity } => *velocity,
            FieldSpec::Shear { amplitude } => Vec2::new(amplitude * (z.y + self.phases[0]).sin(), 0.0),
            FieldSpec::Cellular { amplitude } => {
                let (s1, c1) = (z.x + self.phases[0]).sin_cos();
                let (s2, c2) = (z.y + self.phases[1]).sin_cos();
                Vec2::new(-amplitude * s1 * c2, amplitude * c1 * s2)
            }
            FieldSpec::RandomFourier { .. } => {
                let mut v = Vec2::ZERO;
                for (m, th) in self.modes.iter().zip(&self.phases) {
                    let s = m.coefficient * (m.wavevector.dot(z) + th).sin();
                    v += Vec2::new(m.wavevector.y, -m.wavevector.x) * s;
                }
                v
            }
            FieldSpec::GradientTrap { cap_radius } => z * (2.0 * trap_weight(z.norm(), *cap_radius)),
        }
    }

    /// The realization seen from a shifted origin: `psi(shift(f, y), x) = psi(f, x + y)`.
    pub fn shift(&self, y: Vec2) -> FieldRealization {
        let mut f = self.clone();
        f.offset += y;
        f
    }
}

/// Quintic smoothstep on [0, 1] with vanishing first and second derivatives at the ends.
fn smoothstep5(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (u * (6.0 * u - 15.0) + 10.0)
}

fn trap_weight(r: f64, cap: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= cap {
        0.0
    } else {
        1.0 - smoothstep5((r - 1.0) / (cap - 1.0))
    }
}

/// `max_r 2 r w(r)` for the trap profile.
fn trap_speed_max(cap: f64) -> f64 {
    let g = |r: f64| 2.0 * r * trap_weight(r, cap);
    let n = 4096;
    let (mut best_r, mut best) = (1.0, 2.0);
    for k in 0..=n {
        let r = 1.0 + (cap - 1.0) * k as f64 / n as f64;
        if g(r) > best {
            best = g(r);
            best_r = r;
        }
    }
    let step = (cap - 1.0) / n as f64;
    let (mut a, mut b) = ((best_r - step).max(1.0), (best_r + step).min(cap));
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if g(m1) < g(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    let peak = g(0.5 * (a + b)).max(best);
    peak * (1.0 + 1e-12)
}

/// Monte Carlo summary of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub n: usize,
    pub mean_velocity: [Estimate; 2],
    /// Largest `|V|` seen on a dense sample across the realizations.
    pub v_inf_estimate: f64,
    /// The analytic bound `V_inf` from the field spec.
    pub v_inf_bound: f64,
    /// `E|psi(0)|^3`, absent when the stream function is not stationary.
    pub psi_moment3: Option<Estimate>,
}

pub fn field_stats(spec: &FieldSpec, n: usize, seed: u64) -> Result<FieldStats> {
    if n == 0 {
        return Err(Error::InvalidArgument("field_stats needs n >= 1".into()));
    }
    let realizations: Vec<FieldRealization> =
        (0..n).map(|i| sample_field(spec, derive_seed(seed, i as u64))).collect::<Result<_>>()?;
    let v0: Vec<Vec2> = realizations.iter().map(|f| f.velocity(Vec2::ZERO)).collect();
    let vx: Vec<f64> = v0.iter().map(|v| v.x).collect();
    let vy: Vec<f64> = v0.iter().map(|v| v.y).collect();
    // Dense sample over a few periods of the unit-wavenumber generators.
    let side = 48;
    let extent = 4.0 * PI;
    let v_inf_estimate = realizations
        .iter()
        .take(16)
        .flat_map(|f| {
            (0..side * side).map(move |k| {
                let x = Vec2::new(
                    extent * ((k % side) as f64 / side as f64 - 0.5),
                    extent * ((k / side) as f64 / side as f64 - 0.5),
                );
                f.velocity(x).norm()
            })
        })
        .fold(0.0_f64, f64::max);
    let psi_moment3 = spec.has_stationary_stream().then(|| {
        let m: Vec<f64> = realizations.iter().map(|f| f.psi(Vec2::ZERO).abs().powi(3)).collect();
        Estimate::from_samples(&m)
    });
    Ok(FieldStats {
        n,
        mean_velocity: [Estimate::from_samples(&vx), Estimate::from_samples(&vy)],
        v_inf_estimate,
        v_inf_bound: spec.velocity_bound(),
        psi_moment3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn fd_velocity(f: &FieldRealization, x: Vec2, h: f64) -> Vec2 {
        let d1 = (f.psi(x + Vec2::new(h, 0.0)) - f.psi(x - Vec2::new(h, 0.0))) / (2.0 * h);
        let d2 = (f.psi(x + Vec2::new(0.0, h)) - f.psi(x - Vec2::new(0.0, h))) / (2.0 * h);
        Vec2::new(-d2, d1)
    }

    fn fd_divergence(f: &FieldRealization, x: Vec2, h: f64) -> f64 {
        let e1 = Vec2::new(h, 0.0);
        let e2 = Vec2::new(0.0, h);
        (f.velocity(x + e1).x - f.velocity(x - e1).x + f.velocity(x + e2).y - f.velocity(x - e2).y)
            / (2.0 * h)
    }

    #[test]
    fn constant_field_velocity_everywhere() {
        let f = sample_field(&FieldSpec::constant(0.5, 0.0), 17).unwrap();
        for x in [Vec2::ZERO, Vec2::new(3.0, -2.0), Vec2::new(-100.0, 7.5)] {
            assert_eq!(f.velocity(x), Vec2::new(0.5, 0.0));
        }
    }

    #[test]
    fn constant_field_stream_is_linear() {
        // V = (0.5, 0) = (-d2 psi, d1 psi) forces psi = -0.5 x2.
        let f = sample_field(&FieldSpec::constant(0.5, 0.0), 0).unwrap();
        let diff = f.psi(Vec2::new(0.0, 2.0)) - f.psi(Vec2::ZERO);
        assert!((diff + 1.0).abs() < 1e-15);
    }

    #[test]
    fn cellular_psi_uses_sampled_phases() {
        let spec = FieldSpec::cellular(1.0);
        let f = sample_field(&spec, 42).unwrap();
        let (u1, u2) = (f.phases()[0], f.phases()[1]);
        assert_eq!(f.psi(Vec2::ZERO), u1.sin() * u2.sin());
        let g = FieldRealization::with_phases(&spec, &[0.0, 0.0]).unwrap();
        assert!((g.psi(Vec2::new(FRAC_PI_2, FRAC_PI_2)) - 1.0).abs() < 1e-15);
        assert_eq!(g.velocity(Vec2::ZERO), Vec2::ZERO);
    }

    #[test]
    fn shear_values_and_sign_convention() {
        let f = FieldRealization::with_phases(&FieldSpec::shear(2.0), &[0.0]).unwrap();
        assert!((f.psi(Vec2::new(5.0, 0.0)) - 2.0).abs() < 1e-15);
        // psi = 2 cos x2, so -d2 psi = 2 sin x2, which is -2 at x2 = -pi/2.
        let x = Vec2::new(0.0, -FRAC_PI_2);
        let v = f.velocity(x);
        assert!((v.x + 2.0).abs() < 1e-15 && v.y == 0.0);
        let fd = fd_velocity(&f, x, 1e-5);
        assert!((fd - v).norm() < 1e-8);
    }

    #[test]
    fn gradient_trap_inside_unit_disk() {
        let f = sample_field(&FieldSpec::gradient_trap(), 3).unwrap();
        for x in [Vec2::new(0.3, 0.2), Vec2::new(-0.7, 0.1), Vec2::new(0.0, -0.99)] {
            assert!((f.velocity(x) - x * 2.0).norm() < 1e-15);
        }
        assert_eq!(f.velocity(Vec2::new(2.5, 0.0)), Vec2::ZERO);
        assert!(f.psi(Vec2::ZERO).is_nan());
        let bound = FieldSpec::gradient_trap().velocity_bound();
        assert!(bound >= 2.0);
        let dense = (0..20001).map(|k| f.velocity(Vec2::new(2.0 * k as f64 / 20000.0, 0.0)).norm());
        assert!(dense.fold(0.0, f64::max) <= bound);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = FieldSpec::isotropic_fourier(8, 1.0, 1.0);
        let a = sample_field(&spec, 9).unwrap();
        let b = sample_field(&spec, 9).unwrap();
        assert_eq!(a, b);
        let x = Vec2::new(1.3, -0.4);
        assert_eq!(a.psi(x).to_bits(), b.psi(x).to_bits());
        assert_ne!(a, sample_field(&spec, 10).unwrap());
    }

    #[test]
    fn fourier_sup_velocity_respects_bound() {
        // Oracle: evaluate |V| on a dense grid and compare with sum |a_k||k_k| = 1.
        let spec = FieldSpec::isotropic_fourier(8, 1.0, 1.0);
        assert!((spec.velocity_bound() - 1.0).abs() < 1e-15);
        for seed in 0..4 {
            let f = sample_field(&spec, seed).unwrap();
            let n = 200;
            for i in 0..n {
                for j in 0..n {
                    let x = Vec2::new(i as f64 * 0.1, j as f64 * 0.1);
                    assert!(f.velocity(x).norm() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn velocity_matches_finite_difference_of_psi() {
        for spec in [
            FieldSpec::shear(1.3),
            FieldSpec::cellular(0.7),
            FieldSpec::isotropic_fourier(6, 1.0, 1.5),
            FieldSpec::constant(0.2, -0.4),
        ] {
            let f = sample_field(&spec, 5).unwrap();
            for k in 0..20 {
                let x = Vec2::new(0.37 * k as f64 - 3.0, 1.0 - 0.21 * k as f64);
                assert!((fd_velocity(&f, x, 1e-5) - f.velocity(x)).norm() < 1e-8, "{spec:?}");
            }
        }
    }

    #[test]
    fn divergence_is_second_order_small() {
        for spec in [FieldSpec::shear(1.0), FieldSpec::cellular(1.0), FieldSpec::isotropic_fourier(8, 1.0, 1.0)] {
            let f = sample_field(&spec, 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..200 {
                let x = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
                assert!(fd_divergence(&f, x, 1e-3).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn cellular_shift_by_period_is_identity() {
        let f = sample_field(&FieldSpec::cellular(1.0), 8).unwrap();
        let g = f.shift(Vec2::new(TAU, 0.0));
        for k in 0..50 {
            let x = Vec2::new(0.13 * k as f64, -0.29 * k as f64);
            assert!((g.psi(x) - f.psi(x)).abs() < 1e-12);
            assert!((g.velocity(x) - f.velocity(x)).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let f = sample_field(&FieldSpec::isotropic_fourier(5, 1.0, 1.0), 2).unwrap();
        assert_eq!(f.shift(Vec2::ZERO), f);
    }

    #[test]
    fn unknown_kind_and_empty_modes_are_rejected() {
        assert!(matches!(FieldSpec::from_json(r#"{"kind":"gaussian"}"#), Err(Error::InvalidSpec(_))));
        assert!(matches!(
            FieldSpec::from_json(r#"{"kind":"random-fourier","modes":[]}"#),
            Err(Error::InvalidSpec(_))
        ));
        let ok = FieldSpec::from_json(r#"{"kind":"shear","amplitude":2.0}"#).unwrap();
        assert_eq!(ok, FieldSpec::shear(2.0));
    }

    #[test]
    fn stats_of_constant_field_are_exact() {
        let s = field_stats(&FieldSpec::constant(0.5, 0.0), 20, 3).unwrap();
        assert_eq!(s.mean_velocity[0].mean, 0.5);
        assert_eq!(s.mean_velocity[1].mean, 0.0);
        assert!(s.psi_moment3.is_none());
    }

    #[test]
    fn shear_mean_velocity_vanishes_within_three_sigma() {
        let s = field_stats(&FieldSpec::shear(2.0), 4000, 21).unwrap();
        assert!(s.mean_velocity[0].within_sigma(0.0, 3.0));
        assert_eq!(s.mean_velocity[1].mean, 0.0);
    }

    #[test]
    fn cellular_third_moment() {
        // (E|sin U|^3)^2 = (4 / 3 pi)^2; confirmed here by midpoint quadrature.
        let m = 200_000;
        let q: f64 = (0..m).map(|k| ((k as f64 + 0.5) * TAU / m as f64).sin().abs().powi(3)).sum::<f64>()
            / m as f64;
        let exact = 16.0 / (9.0 * PI * PI);
        assert!((q * q - exact).abs() < 1e-9);
        let s = field_stats(&FieldSpec::cellular(1.0), 20000, 4).unwrap();
        let est = s.psi_moment3.unwrap();
        assert!(est.within_sigma(exact, 3.0), "{est:?} vs {exact}");
    }
}
