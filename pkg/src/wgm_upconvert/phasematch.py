"""Energy and angular-momentum matching between optical and microwave WGMs.

The optical modes of the main family sit at ``omega = c L / (R n)``. A
pump ``a`` and sideband ``b`` are phase matched to the microwave mode
``L_c`` when ``L_b = L_a +- L_c`` and ``omega_b = omega_a +- omega_c``,
which gives the straight line

    omega_c(L_c) = Omega_b L_c +- omega_a (n_a - n_b) / n_b - S U

with ``Omega_b = c / (R n_b)``. The last term is the DC-bias shift used to
tune the orthogonal-polarization (Type-II) process; ``S`` is its slope in
rad/s per volt. The upper sign is the anti-Stokes process.
"""

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import C_LIGHT, TWO_PI, Frequency, wavelength_to_omega
from .materials import material_lookup

ANTI_STOKES = "anti-Stokes"
STOKES = "Stokes"
BRANCHES = (ANTI_STOKES, STOKES)
TYPE_I = "I"
TYPE_II = "II"

DEFAULT_PUMP_WAVELENGTH = 1.55e-6
DEFAULT_Q = 1e8
DEFAULT_Q_M = 100.0
# 300 V across the 292 um ring is ~1 kV/mm, well below the coercive field of
# stoichiometric LiTaO3/LiNbO3, so it will not flip domains
DEFAULT_MAX_BIAS_V = 300.0


class DegenerateTuning(ValueError):
    """Bias cannot move the line (r33 == r31 or zero sensitivity)."""


def _sign(branch):
    if branch == ANTI_STOKES:
        return 1.0
    if branch == STOKES:
        return -1.0
    raise ValueError(f"branch must be one of {BRANCHES}, got {branch!r}")


def optical_eigenfrequency(L_a, R, n):
    """Main-family optical WGM frequency ``c L_a / (R n)``."""
    if not (L_a > 0 and R > 0 and n > 0):
        raise ValueError("L_a, R and n must be positive")
    return Frequency(C_LIGHT * L_a / (R * n))


def optical_fsr(R, n):
    """Angular free spectral range ``c / (R n)`` of the main family."""
    return C_LIGHT / (R * n)


@dataclass(frozen=True)
class OpticalModeSpec:
    L_a: int
    polarization: str
    omega_a: Frequency
    n: float
    R: float

    def __post_init__(self):
        if self.L_a <= 0:
            raise ValueError("L_a must be positive")
        expected = C_LIGHT * self.L_a / (self.R * self.n)
        if not math.isclose(self.omega_a.value, expected, rel_tol=1e-12):
            raise ValueError("omega_a does not match c L_a / (R n)")

    @classmethod
    def nearest(cls, omega, R, n, polarization="extraordinary"):
        """Mode of the family closest to angular frequency ``omega``."""
        L = int(round(float(omega) * R * n / C_LIGHT))
        return cls(L, polarization, optical_eigenfrequency(L, R, n), n, R)

    def sideband(self, L_c, branch, n_b=None, polarization=None):
        """Optical sideband mode ``L_b = L_a +- L_c`` in the family of index ``n_b``."""
        n_b = self.n if n_b is None else n_b
        L_b = self.L_a + int(_sign(branch)) * int(L_c)
        return OpticalModeSpec(
            L_b, polarization or self.polarization, optical_eigenfrequency(L_b, self.R, n_b), n_b, self.R
        )


@dataclass(frozen=True)
class PhaseMatchLine:
    """Parameters of the phase-matching line.

    Attributes
    ----------
    R : float
        Ring outer radius, m.
    n_a, n_b : float
        Optical indices of pump and sideband families.
    omega_a : float
        Pump angular frequency, rad/s.
    branch : str
        ``"anti-Stokes"`` (upper sign) or ``"Stokes"``.
    conversion_type : str
        ``"I"`` (parallel polarizations) or ``"II"``.
    h : float
        Ring thickness for the bias field ``U / h``, m.
    r33_minus_r31 : float
        Pockels coefficient difference, pm/V.
    n_bias : float
        Index in the bias term (default ``n_b``).
    """

    R: float
    n_a: float
    n_b: float
    omega_a: float
    branch: str = ANTI_STOKES
    conversion_type: str = TYPE_I
    h: float = None
    r33_minus_r31: float = 0.0
    n_bias: float = None

    def __post_init__(self):
        _sign(self.branch)
        if self.conversion_type not in (TYPE_I, TYPE_II):
            raise ValueError("conversion_type must be 'I' or 'II'")
        if self.conversion_type == TYPE_I and self.n_a != self.n_b:
            raise ValueError("Type-I conversion needs n_a == n_b")
        if not (self.R > 0 and self.n_a > 0 and self.n_b > 0 and self.omega_a > 0):
            raise ValueError("R, indices and omega_a must be positive")

    @property
    def Omega_b(self):
        return optical_fsr(self.R, self.n_b)

    @property
    def offset(self):
        """Birefringence term ``+- omega_a (n_a - n_b) / n_b`` in rad/s."""
        return _sign(self.branch) * self.omega_a * (self.n_a - self.n_b) / self.n_b

    @property
    def bias_sensitivity(self):
        """``d omega_c / d U`` in rad/s per volt (negative for positive r33 - r31)."""
        if self.conversion_type != TYPE_II or self.h is None:
            return 0.0
        n = self.n_b if self.n_bias is None else self.n_bias
        return -self.omega_a * n**2 * self.r33_minus_r31 * 1e-12 / (2 * self.h)

    def omega(self, L_c, U=0.0):
        """Line value in rad/s (array-friendly in ``L_c``)."""
        return self.Omega_b * np.asarray(L_c, dtype=float) + self.offset + self.bias_sensitivity * U

    def with_branch(self, branch):
        return replace(self, branch=branch)

    @classmethod
    def type_one(cls, geometry, material=None, pump_wavelength=DEFAULT_PUMP_WAVELENGTH, branch=ANTI_STOKES):
        """Both optical fields along the optic axis (extraordinary)."""
        mat = material_lookup(material or geometry.ring_material)
        n = mat.n_opt_e
        return cls(geometry.R, n, n, wavelength_to_omega(pump_wavelength), branch, TYPE_I, geometry.h)

    @classmethod
    def type_two(
        cls,
        geometry,
        material=None,
        pump_wavelength=DEFAULT_PUMP_WAVELENGTH,
        branch=STOKES,
        pump_polarization="extraordinary",
    ):
        """Sideband polarized orthogonally to the pump."""
        mat = material_lookup(material or geometry.ring_material)
        if pump_polarization in ("e", "extraordinary"):
            n_a, n_b = mat.n_opt_e, mat.n_opt_o
        elif pump_polarization in ("o", "ordinary"):
            n_a, n_b = mat.n_opt_o, mat.n_opt_e
        else:
            raise ValueError(f"unknown pump polarization {pump_polarization!r}")
        return cls(
            geometry.R,
            n_a,
            n_b,
            wavelength_to_omega(pump_wavelength),
            branch,
            TYPE_II,
            geometry.h,
            mat.r33 - mat.r31,
        )


def phasematch_line(L_c, R, n_b, n_a, omega_a, branch, U=0.0, geometry=None, r33_minus_r31=0.0, h=None):
    """Microwave frequency demanded by phase matching at ``L_c``.

    ``U`` only acts when ``n_a != n_b`` (Type-II); ``h`` defaults to the
    thickness of ``geometry``. Raises ValueError where the line is negative;
    use :meth:`PhaseMatchLine.omega` for raw values.
    """
    if L_c < 1:
        raise ValueError("L_c must be >= 1")
    ctype = TYPE_I if n_a == n_b else TYPE_II
    if h is None and geometry is not None:
        h = geometry.h
    line = PhaseMatchLine(R, n_a, n_b, float(omega_a), branch, ctype, h, r33_minus_r31)
    w = float(line.omega(L_c, U))
    if w < 0:
        raise ValueError(f"line lies at {w:.4g} rad/s < 0 for L_c={L_c}; no microwave mode can match")
    return Frequency(w)


def bias_for_match(L_c, omega_disp, line):
    """Bias (V) that puts the line exactly on ``omega_disp`` at ``L_c``."""
    s = line.bias_sensitivity
    if line.conversion_type != TYPE_II or line.r33_minus_r31 == 0 or s == 0:
        raise DegenerateTuning("bias does not tune this line (Type-I, r33 == r31 or no thickness)")
    return float((float(omega_disp) - line.omega(L_c, 0.0)) / s)


def default_tolerance(omega_c, Q_M=DEFAULT_Q_M, omega_0=None, Q=DEFAULT_Q):
    """Smaller of the microwave and optical linewidths, rad/s."""
    if Q_M <= 0 or Q <= 0:
        raise ValueError("quality factors must be positive")
    tol = float(omega_c) / Q_M
    if omega_0 is not None:
        tol = min(tol, float(omega_0) / Q)
    return tol


@dataclass(frozen=True)
class PhaseMatchSolution:
    L_c: int
    omega_line: Frequency
    omega_disp: Frequency
    detuning: float  # rad/s, line minus dispersion (after bias)
    branch: str
    conversion_type: str
    bias_voltage: float = 0.0

    def csv_row(self):
        return [
            str(self.L_c),
            f"{self.omega_line.ghz:.6f}",
            f"{self.omega_disp.ghz:.6f}",
            f"{self.detuning / TWO_PI / 1e6:.6f}",
            self.branch,
            self.conversion_type,
            f"{self.bias_voltage:.6f}",
        ]


MATCH_HEADER = ["L_c", "f_line_GHz", "f_disp_GHz", "detuning_MHz", "branch", "type", "bias_V"]


def find_matches(table, line, tolerance=None, Q_M=DEFAULT_Q_M, Q=DEFAULT_Q, max_bias_V=DEFAULT_MAX_BIAS_V):
    """Integer ``L_c`` where the line meets the dispersion table.

    Type-I: every row with ``|line - disp| <= tolerance``. Type-II: every
    row the bias can reach with ``|U| <= max_bias_V``; the reported
    detuning is the residual after applying that bias. ``tolerance``
    (rad/s) defaults per row to the smaller of ``omega_c / Q_M`` and
    ``omega_a / Q``; ``"microwave"`` uses ``omega_c / Q_M`` alone.
    Results are sorted by ``|detuning|`` then ``L_c``.
    """
    if len(table) == 0:
        raise ValueError("dispersion table is empty")
    out = []
    for row in table:
        if getattr(row, "is_gap", False):
            continue
        L = row.L_c
        w_disp = row.omega_c.value
        if tolerance is None:
            tol = default_tolerance(w_disp, Q_M, line.omega_a, Q)
        elif tolerance == "microwave":
            tol = default_tolerance(w_disp, Q_M)
        else:
            tol = float(tolerance)
        U = 0.0
        if line.conversion_type == TYPE_II and line.bias_sensitivity != 0 and max_bias_V:
            U = bias_for_match(L, w_disp, line)
            if abs(U) > max_bias_V:
                continue
        w_line = float(line.omega(L, U))
        det = w_line - w_disp
        if abs(det) > tol or w_line <= 0:
            continue
        out.append(
            PhaseMatchSolution(L, Frequency(w_line), row.omega_c, det, line.branch, line.conversion_type, U)
        )
    out.sort(key=lambda m: (abs(m.detuning), m.L_c))
    return out


def envelope_matches(line, geometry, n_ring, L_max=200, max_bias_V=DEFAULT_MAX_BIAS_V):
    """``L_c <= L_max`` where the line can reach the band any ring-guided mode occupies.

    A guided microwave WGM has ``c L / (R n_ring) <= omega_c <= c L / R_in``:
    slower than light in the ring material at the rim, yet not radiating
    from the inner face. The bias can move the line by ``|S| max_bias_V``.
    Returns the candidate ``L_c`` values; an empty array proves infeasibility
    without any eigen-solve.
    """
    L = np.arange(1, int(L_max) + 1)
    lo = C_LIGHT * L / (geometry.R * n_ring)
    hi = C_LIGHT * L / geometry.R_in
    reach = abs(line.bias_sensitivity) * max_bias_V if line.conversion_type == TYPE_II else 0.0
    w = line.omega(L, 0.0)
    ok = (w + reach >= lo) & (w - reach <= hi) & (w + reach > 0)
    return L[ok]


def selection_rule_check(L_a, L_b, L_c, omega_a, omega_b, omega_c, branch, rtol=1e-9):
    """True iff ``L_b = L_a +- L_c`` and ``omega_b = omega_a +- omega_c`` for the branch."""
    s = _sign(branch)
    if int(L_b) != int(L_a) + int(s) * int(L_c):
        return False
    wa, wb, wc = float(omega_a), float(omega_b), float(omega_c)
    return math.isclose(wb, wa + s * wc, rel_tol=rtol, abs_tol=rtol * abs(wc))


def matches_to_csv(matches, path=None):
    """CSV text of a match list (also written to ``path`` when given)."""
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MATCH_HEADER)
    for m in matches:
        w.writerow(m.csv_row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
