"""Physical constants and default experiment parameters.

Internally every quantity is dimensionless: times in units of the gate
duration tau, angular frequencies in units of 1/tau.  The only place physical
units enter is the derivation of the dimensionless inverse temperature
beta*omega_c from a temperature in kelvin and a gate duration in seconds.
"""

import math

# CODATA 2018: hbar / k_B in seconds * kelvin.
HBAR_OVER_KB = 7.638232577e-12

# Default scale link between the bath cutoff and the gate: omega_c * tau = 2*pi.
OMEGA_C_TAU_DEFAULT = 2.0 * math.pi

# Default physical anchors for the thermal state.
TAU_SECONDS_DEFAULT = 1.0e-10
TEMPERATURE_KELVIN_DEFAULT = 0.25

# Default dephasing-reservoir coupling strength (dimensionless spectral-density
# prefactor).
ETA_DEPHASING_DEFAULT = 1.0 / 16.0


def beta_omega_c(temperature_kelvin: float, tau_seconds: float,
                 omega_c_tau: float = OMEGA_C_TAU_DEFAULT) -> float:
    """Dimensionless beta*omega_c = hbar*omega_c / (k_B * T).

    With omega_c = omega_c_tau / tau_seconds this is
    (hbar/k_B) * omega_c_tau / (tau_seconds * temperature_kelvin).
    """
    if temperature_kelvin <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature_kelvin}")
    if tau_seconds <= 0.0:
        raise ValueError(f"tau_seconds must be positive, got {tau_seconds}")
    return HBAR_OVER_KB * omega_c_tau / (tau_seconds * temperature_kelvin)


# beta*omega_c for the default anchors T = 0.25 K, tau = 1e-10 s, omega_c*tau = 2*pi:
# 7.638232577e-12 * 2*pi / (1e-10 * 0.25) = 1.9196627...
BETA_OMEGA_C_DEFAULT = beta_omega_c(TEMPERATURE_KELVIN_DEFAULT, TAU_SECONDS_DEFAULT)
