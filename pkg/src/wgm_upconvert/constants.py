"""Physical constants and unit helpers.

Everything internal is SI. Gaussian quantities only appear where the
electro-optic coupling rate is evaluated.
"""

import math
from dataclasses import dataclass

from scipy import constants as _sc

C_LIGHT = _sc.c
HBAR = _sc.hbar
EPS0 = _sc.epsilon_0

HBAR_CGS = HBAR * 1e7  # erg s
C_LIGHT_CGS = C_LIGHT * 1e2  # cm/s

# 1 m/V expressed in cm/statvolt: 100 cm per (1/c_cgs*1e-8 statvolt)
_M_PER_V_TO_ESU = 1e2 * C_LIGHT * 1e-6

GHZ = 1e9
TWO_PI = 2.0 * math.pi


def eo_coefficient_convert(r_pm_per_v):
    """Convert an electro-optic coefficient from pm/V to esu (cm/statvolt)."""
    if r_pm_per_v < 0:
        raise ValueError("electro-optic coefficient must be non-negative")
    return r_pm_per_v * 1e-12 * _M_PER_V_TO_ESU


def eo_coefficient_to_si(r_esu):
    """Inverse of :func:`eo_coefficient_convert`; returns pm/V."""
    return r_esu / _M_PER_V_TO_ESU * 1e12


def ghz_to_omega(f_ghz):
    return TWO_PI * f_ghz * GHZ


def omega_to_ghz(omega):
    return omega / (TWO_PI * GHZ)


def wavelength_to_omega(wavelength_m):
    return TWO_PI * C_LIGHT / wavelength_m


@dataclass(frozen=True, order=True)
class Frequency:
    """Angular frequency in rad/s with cyclic accessors."""

    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"frequency must be non-negative, got {self.value!r}")

    @classmethod
    def from_ghz(cls, f_ghz):
        return cls(ghz_to_omega(f_ghz))

    @classmethod
    def from_thz(cls, f_thz):
        return cls(ghz_to_omega(f_thz * 1e3))

    @classmethod
    def from_wavelength(cls, wavelength_m):
        return cls(wavelength_to_omega(wavelength_m))

    @property
    def ghz(self):
        return omega_to_ghz(self.value)

    @property
    def hz(self):
        return self.value / TWO_PI

    @property
    def thz(self):
        return omega_to_ghz(self.value) * 1e-3

    @property
    def free_space_wavelength(self):
        return TWO_PI * C_LIGHT / self.value

    def __float__(self):
        return float(self.value)
