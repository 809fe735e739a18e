//! Kinematics and nominal (first Piola-Kirchhoff) stress for incompressible
//! isotropic solids under uniaxial tension/compression and simple shear.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LoadingMode {
    UniaxialTension,
    UniaxialCompression,
    SimpleShear,
}

impl LoadingMode {
    pub const ALL: [LoadingMode; 3] = [
        LoadingMode::UniaxialTension,
        LoadingMode::UniaxialCompression,
        LoadingMode::SimpleShear,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            LoadingMode::UniaxialTension => "ut",
            LoadingMode::UniaxialCompression => "uc",
            LoadingMode::SimpleShear => "ss",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_uniaxial(self) -> bool {
        self != LoadingMode::SimpleShear
    }

    /// Whether `control` lies in the mode's domain: λ > 1 for tension,
    /// λ ∈ (0, 1) for compression, γ ≥ 0 for shear.
    pub fn accepts(self, control: f64) -> bool {
        if !control.is_finite() {
            return false;
        }
        match self {
            LoadingMode::UniaxialTension => control > 1.0,
            LoadingMode::UniaxialCompression => control > 0.0 && control < 1.0,
            LoadingMode::SimpleShear => control >= 0.0,
        }
    }
}

impl fmt::Display for LoadingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown loading mode `{0}` (expected ut, uc or ss)")]
pub struct UnknownMode(pub String);

impl FromStr for LoadingMode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ut" => Ok(LoadingMode::UniaxialTension),
            "uc" => Ok(LoadingMode::UniaxialCompression),
            "ss" => Ok(LoadingMode::SimpleShear),
            other => Err(UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MechanicsError {
    #[error("stretch must be positive, got {0}")]
    NonPositiveStretch(f64),
    #[error("shear amount must be non-negative, got {0}")]
    NegativeShear(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub control: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    /// Principal stretches, loading direction first (λ1 ≥ λ2 except in
    /// compression).
    pub stretches: [f64; 3],
    /// Biot strains λᵢ − 1.
    pub strains: [f64; 3],
    pub jacobian: f64,
}

fn strains(s: [f64; 3]) -> [f64; 3] {
    [s[0] - 1.0, s[1] - 1.0, s[2] - 1.0]
}

/// Uniaxial state with stretches (λ, λ^-1/2, λ^-1/2).
///
/// For compression the lateral stretch exceeds λ; the stretches keep the
/// loading axis first so the stress kernels read P11 along it.
pub fn kinematics_uniaxial(lambda: f64) -> Result<KinematicState, MechanicsError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(MechanicsError::NonPositiveStretch(lambda));
    }
    let lateral = 1.0 / lambda.sqrt();
    let stretches = [lambda, lateral, lateral];
    Ok(KinematicState {
        control: lambda,
        i1: lambda * lambda + 2.0 / lambda,
        i2: 2.0 * lambda + 1.0 / (lambda * lambda),
        i3: 1.0,
        stretches,
        strains: strains(stretches),
        jacobian: 1.0,
    })
}

/// Simple-shear state; I1 = I2 = 3 + γ² and λ1λ2 = 1 in-plane.
pub fn kinematics_shear(gamma: f64) -> Result<KinematicState, MechanicsError> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(MechanicsError::NegativeShear(gamma));
    }
    let root = (4.0 + gamma * gamma).sqrt();
    let stretches = [(gamma + root) / 2.0, (root - gamma) / 2.0, 1.0];
    let i = 3.0 + gamma * gamma;
    Ok(KinematicState {
        control: gamma,
        i1: i,
        i2: i,
        i3: 1.0,
        stretches,
        strains: strains(stretches),
        jacobian: 1.0,
    })
}

pub fn kinematics(mode: LoadingMode, control: f64) -> Result<KinematicState, MechanicsError> {
    match mode {
        LoadingMode::SimpleShear => kinematics_shear(control),
        _ => kinematics_uniaxial(control),
    }
}

/// Energy derivatives evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeBundle {
    /// ∂Ψ/∂I1 and ∂Ψ/∂I2.
    Invariant { d_i1: f64, d_i2: f64 },
    /// f′ of the additive energy Ψ = Σ f(xᵢ) at the first two principal
    /// values (stretch or Biot strain; both kernels coincide). The third
    /// direction carries no load in either mode.
    Principal([f64; 2]),
}

/// Nominal stress along the loading axis with zero lateral traction.
pub fn stress_uniaxial(state: &KinematicState, d: &DerivativeBundle) -> f64 {
    let [l1, l2, _] = state.stretches;
    match *d {
        DerivativeBundle::Invariant { d_i1, d_i2 } => {
            2.0 * (d_i1 + d_i2 / l1) * (l1 - 1.0 / (l1 * l1))
        }
        DerivativeBundle::Principal(f) => f[0] - (l2 / l1) * f[1],
    }
}

/// Nominal shear stress P12.
pub fn stress_shear(state: &KinematicState, d: &DerivativeBundle) -> f64 {
    match *d {
        DerivativeBundle::Invariant { d_i1, d_i2 } => 2.0 * (d_i1 + d_i2) * state.control,
        DerivativeBundle::Principal(f) => {
            let [l1, l2, _] = state.stretches;
            let (a, b) = (l1 * l1, l2 * l2);
            a / (a + 1.0) * f[0] - b / (b + 1.0) * f[1]
        }
    }
}

pub fn stress(mode: LoadingMode, state: &KinematicState, d: &DerivativeBundle) -> f64 {
    match mode {
        LoadingMode::SimpleShear => stress_shear(state, d),
        _ => stress_uniaxial(state, d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn reference_states() {
        let s = kinematics_uniaxial(1.0).unwrap();
        assert_eq!((s.i1, s.i2), (3.0, 3.0));
        assert_eq!(s.stretches, [1.0; 3]);
        assert_eq!(s.strains, [0.0; 3]);
        let s = kinematics_shear(0.0).unwrap();
        assert_eq!((s.i1, s.i2), (3.0, 3.0));
        assert_eq!(s.stretches, [1.0; 3]);
    }

    #[test]
    fn uniaxial_examples() {
        let s = kinematics_uniaxial(1.1).unwrap();
        assert!(close(s.i1, 3.028182, 5e-7));
        assert!(close(s.i2, 3.026446, 5e-7));
        assert!(close(s.stretches[1], 0.953463, 5e-7));
        let s = kinematics_uniaxial(0.9).unwrap();
        assert!(close(s.i1, 3.032222, 5e-7));
        assert!(close(s.i2, 3.034568, 5e-7));
    }

    #[test]
    fn shear_example() {
        let s = kinematics_shear(0.2).unwrap();
        assert!(close(s.i1, 3.04, 1e-12));
        assert!(close(s.stretches[0], 1.104988, 5e-7));
        assert!(close(s.stretches[1], 0.904988, 5e-7));
        assert!(close(s.stretches[0] * s.stretches[1], 1.0, 1e-12));
    }

    #[test]
    fn invalid_controls() {
        assert_eq!(kinematics_uniaxial(0.0), Err(MechanicsError::NonPositiveStretch(0.0)));
        assert_eq!(kinematics_shear(-0.1), Err(MechanicsError::NegativeShear(-0.1)));
    }

    #[test]
    fn gent_kernels() {
        // ∂Ψ/∂I1 = 2.28 / (1 - 1.2 (I1 - 3))
        let bundle = |s: &KinematicState| DerivativeBundle::Invariant {
            d_i1: 2.28 / (1.0 - 1.2 * (s.i1 - 3.0)),
            d_i2: 0.0,
        };
        let s = kinematics_uniaxial(1.1).unwrap();
        assert!(close(stress_uniaxial(&s, &bundle(&s)), 1.291066, 5e-6));
        let s = kinematics_shear(0.2).unwrap();
        assert!(close(stress_shear(&s, &bundle(&s)), 0.957983, 5e-7));
    }

    #[test]
    fn ogden_kernel() {
        // f(λ) = 0.01 λ^-18
        let s = kinematics_uniaxial(1.1).unwrap();
        let f = [s.stretches[0], s.stretches[1]].map(|l| -0.18 * l.powi(-19));
        assert!(close(stress_uniaxial(&s, &DerivativeBundle::Principal(f)), 0.35642, 1e-5));
    }

    #[test]
    fn mode_tags_round_trip() {
        for m in LoadingMode::ALL {
            assert_eq!(m.tag().parse::<LoadingMode>().unwrap(), m);
        }
        assert!("xx".parse::<LoadingMode>().is_err());
    }
}
