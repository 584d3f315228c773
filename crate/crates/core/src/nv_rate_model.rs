//! Five-level rate-equation model of the negatively charged NV center.
//!
//! Levels: 1 = ground `m_s = 0`, 2 = ground `m_s = ±1`, 3 = excited `m_s = 0`,
//! 4 = excited `m_s = ±1`, 5 = metastable singlet. The laser pumps 1→3 and
//! 2→4 at the same rate `Γ = κ·s` for power density `s`. The populations obey
//!
//! ```text
//! dρ1/dt = −Γρ1 + k31ρ3 + k41ρ4 + k51ρ5
//! dρ2/dt = −Γρ2 + k32ρ3 + k42ρ4 + k52ρ5
//! dρ3/dt =  Γρ1 − (k31+k32+k35)ρ3
//! dρ4/dt =  Γρ2 − (k41+k42+k45)ρ4
//! dρ5/dt =  k35ρ3 + k45ρ4 − (k51+k52)ρ5
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Transition rates `k_ij` from level `i` to level `j`, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvRateSet<T> {
    pub k31: T,
    pub k32: T,
    pub k35: T,
    pub k41: T,
    pub k42: T,
    pub k45: T,
    pub k51: T,
    pub k52: T,
}

impl<T: Real> NvRateSet<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("k31", self.k31),
            ("k32", self.k32),
            ("k35", self.k35),
            ("k41", self.k41),
            ("k42", self.k42),
            ("k45", self.k45),
            ("k51", self.k51),
            ("k52", self.k52),
        ];
        for (name, k) in all {
            if !(k >= T::zero()) || !k.is_finite() {
                return Err(Error::InvalidRates(format!("{name} must be finite and >= 0, got {k}")));
            }
        }
        if !(self.excited0_decay() > T::zero()) {
            return Err(Error::InvalidRates("level 3 has no decay channel".into()));
        }
        if !(self.excited1_decay() > T::zero()) {
            return Err(Error::InvalidRates("level 4 has no decay channel".into()));
        }
        if !(self.singlet_decay() > T::zero()) {
            return Err(Error::InvalidRates("level 5 has no decay channel".into()));
        }
        Ok(())
    }

    pub fn excited0_decay(&self) -> T {
        self.k31 + self.k32 + self.k35
    }

    pub fn excited1_decay(&self) -> T {
        self.k41 + self.k42 + self.k45
    }

    pub fn singlet_decay(&self) -> T {
        self.k51 + self.k52
    }

    /// Multiplies every rate by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            k31: self.k31 * c,
            k32: self.k32 * c,
            k35: self.k35 * c,
            k41: self.k41 * c,
            k42: self.k42 * c,
            k45: self.k45 * c,
            k51: self.k51 * c,
            k52: self.k52 * c,
        }
    }

    /// Generator matrix `M` of `dρ/dt = M ρ` at pump rate `gamma`.
    pub fn generator(&self, gamma: T) -> Matrix<T> {
        let z = T::zero();
        Matrix::from_rows(&[
            vec![-gamma, z, self.k31, self.k41, self.k51],
            vec![z, -gamma, self.k32, self.k42, self.k52],
            vec![gamma, z, -self.excited0_decay(), z, z],
            vec![z, gamma, z, -self.excited1_decay(), z],
            vec![z, z, self.k35, self.k45, -self.singlet_decay()],
        ])
    }
}

/// Linear coupling between laser power density and optical pump rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpModel<T> {
    /// Hz per W/m².
    pub coupling: T,
    /// Pump drives 1→3 and 2→4 at the same rate. Only `true` is supported.
    pub spin_conserving: bool,
}

impl<T: Real> PumpModel<T> {
    pub fn new(coupling: T) -> Result<Self> {
        if !(coupling > T::zero()) || !coupling.is_finite() {
            return Err(Error::domain("pump coupling must be positive", coupling.to_f64_lossy()));
        }
        Ok(Self { coupling, spin_conserving: true })
    }

    pub fn pump_rate(&self, power_density: T) -> T {
        self.coupling * power_density
    }
}

/// Steady-state level populations `ρ_ii`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState<T> {
    pub rho11: T,
    pub rho22: T,
    pub rho33: T,
    pub rho44: T,
    pub rho55: T,
}

impl<T: Real> SteadyState<T> {
    pub fn as_array(&self) -> [T; 5] {
        [self.rho11, self.rho22, self.rho33, self.rho44, self.rho55]
    }

    pub fn from_slice(p: &[T]) -> Self {
        Self { rho11: p[0], rho22: p[1], rho33: p[2], rho44: p[3], rho55: p[4] }
    }

    pub fn total(&self) -> T {
        self.as_array().into_iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateDiagnostics<T> {
    pub pump_rate: T,
    /// 1-norm condition number of the normalised rate matrix.
    pub condition_number: T,
}

pub fn steady_state<T: Real>(rates: &NvRateSet<T>, pump: &PumpModel<T>, power_density: T) -> Result<SteadyState<T>> {
    steady_state_with_diagnostics(rates, pump, power_density).map(|(ss, _)| ss)
}

/// Solves `M ρ = 0, Σρ = 1` with the first (redundant) balance row replaced by
/// the normalisation row.
pub fn steady_state_with_diagnostics<T: Real>(
    rates: &NvRateSet<T>,
    pump: &PumpModel<T>,
    power_density: T,
) -> Result<(SteadyState<T>, SteadyStateDiagnostics<T>)> {
    rates.validate()?;
    if !(power_density > T::zero()) || !power_density.is_finite() {
        return Err(Error::DegenerateSteadyState { power_density: power_density.to_f64_lossy() });
    }
    let gamma = pump.pump_rate(power_density);
    if !(gamma > T::zero()) {
        return Err(Error::DegenerateSteadyState { power_density: power_density.to_f64_lossy() });
    }
    let mut m = rates.generator(gamma);
    for j in 0..5 {
        m[(0, j)] = T::one();
    }
    let lu = m.lu()?;
    let mut rhs = [T::zero(); 5];
    rhs[0] = T::one();
    let rho = lu.solve(&rhs);
    let diag = SteadyStateDiagnostics { pump_rate: gamma, condition_number: lu.condition_number() };
    Ok((SteadyState::from_slice(&rho), diag))
}

/// Continuous-wave fluorescence rate: excited populations weighted by their
/// radiative branching ratios.
pub fn cw_fluorescence<T: Real>(ss: &SteadyState<T>, rates: &NvRateSet<T>) -> Result<T> {
    let d3 = rates.excited0_decay();
    let d4 = rates.excited1_decay();
    if !(d3 > T::zero()) || !(d4 > T::zero()) {
        return Err(Error::InvalidRates("excited-state total decay must be positive".into()));
    }
    Ok((rates.k31 + rates.k32) / d3 * ss.rho33 + (rates.k41 + rates.k42) / d4 * ss.rho44)
}

/// Ground-state spin polarization `(ρ11 − ρ22)/(ρ11 + ρ22)`.
pub fn polarization<T: Real>(ss: &SteadyState<T>) -> Result<T> {
    let ground = ss.rho11 + ss.rho22;
    if !(ground > T::zero()) {
        return Err(Error::domain("ground-state population must be positive", ground.to_f64_lossy()));
    }
    Ok((ss.rho11 - ss.rho22) / ground)
}
