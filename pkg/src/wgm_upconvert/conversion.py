"""Electro-optic coupling rate and up-conversion efficiency.

The coupling rate between pump ``a``, sideband ``b`` and microwave ``c``
WGMs is

    g = omega_0 r (n_a n_b / n_c) sqrt(pi hbar omega_c / (2 V_c)) * overlap

in Gaussian units (``r`` in esu, ``V_c`` in cm^3). The optical modes are
thin compared with the microwave mode, so ``overlap`` reduces to the
unit-max microwave field sampled at the optical mode location.
"""

import io
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .constants import HBAR, HBAR_CGS, Frequency, eo_coefficient_convert, wavelength_to_omega
from .fem import OutOfWindow, field_probe, mode_volume
from .geometry import RING
from .materials import material_lookup
from .phasematch import DEFAULT_PUMP_WAVELENGTH, DEFAULT_Q, DEFAULT_Q_M, TYPE_I, TYPE_II

log = logging.getLogger(__name__)

DEFAULT_LOCUS_DEPTH = 30e-6
# microwave field component each process couples through
TYPE_COMPONENT = {TYPE_I: "z", TYPE_II: "r"}
# microwave symmetry family carrying that component at the equator
TYPE_FAMILY = {TYPE_I: "z", TYPE_II: "r"}
_COMPONENT_INDEX = {"r": 0, "phi": 1, "z": 2}


class DegenerateCoupling(ValueError):
    """No coupling: the pump power needed is unbounded."""


@dataclass(frozen=True)
class OverlapResult:
    overlap: complex
    V: float
    V_c: float
    effective_field: float
    component: str = "z"
    locus: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.V > 0 and self.V_c > 0):
            raise ValueError("mode volumes must be positive")


def _sample(solution, r, z, component, region):
    E = field_probe(solution, r, z, region=region)
    if component == "magnitude":
        return float(np.linalg.norm(E))
    return complex(E[_COMPONENT_INDEX[component]])


def overlap_factor(
    solution,
    depth=DEFAULT_LOCUS_DEPTH,
    conversion_type=TYPE_I,
    component=None,
    patch=None,
    R=None,
    weighting="unit",
):
    """Constant-field overlap of a microwave mode with the optical WGMs.

    Parameters
    ----------
    solution : MicrowaveModeSolution
    depth : float
        Radial distance of the optical mode inside the rim, m.
    conversion_type : {"I", "II"}
        Selects the coupled component: E_z for "I", E_r for "II".
    component : {"r", "phi", "z", "magnitude"}, optional
        Overrides the type-based choice.
    patch : (sigma_r, sigma_z), optional
        Gaussian optical spot in m; the field is averaged over it instead
        of sampled at one point.
    R : float, optional
        Rim radius; defaults to the outermost ring node.
    weighting : str
        Mode-volume convention passed to :func:`mode_volume`.
    """
    comp = component or TYPE_COMPONENT[conversion_type]
    if comp not in (*_COMPONENT_INDEX, "magnitude"):
        raise ValueError(f"unknown component {comp!r}")
    mesh = solution.mesh
    if R is None:
        ring_nodes = np.unique(mesh.triangles[mesh.region == RING])
        R = float(mesh.nodes[ring_nodes, 0].max())
    r0, z0 = R - depth, 0.0
    if patch is None:
        val = _sample(solution, r0, z0, comp, RING)
        sr = sz = depth / 2
    else:
        sr, sz = patch
        t = np.linspace(-2, 2, 9)
        w = np.exp(-0.5 * t**2)
        vals, wts = [], []
        for i, a in enumerate(t):
            for j, b in enumerate(t):
                try:
                    vals.append(_sample(solution, r0 + a * sr, z0 + b * sz, comp, RING))
                except OutOfWindow:
                    continue
                wts.append(w[i] * w[j])
        if not wts:
            raise OutOfWindow("optical patch lies outside the window")
        val = np.dot(wts, vals) / np.sum(wts)
    # nominal optical volume: a Gaussian tube around the rim; it cancels in g
    V = 2 * math.pi * r0 * 2 * math.pi * sr * sz
    return OverlapResult(val, V, mode_volume(solution, weighting), float(abs(val)), comp, (r0, z0))


def coupling_g(r_pm_per_v, n_a, n_b, n_c, omega_0, omega_c, overlap):
    """Coupling rate g in rad/s.

    ``overlap`` is an :class:`OverlapResult` (its ``V_c`` is used) or a
    ``(overlap, V_c)`` pair.
    """
    if isinstance(overlap, OverlapResult):
        ov, V_c = overlap.overlap, overlap.V_c
    else:
        ov, V_c = overlap
    r_esu = eo_coefficient_convert(r_pm_per_v)
    V_cm3 = V_c * 1e6
    amp = math.sqrt(math.pi * HBAR_CGS * float(omega_c) / (2 * V_cm3))
    return float(omega_0) * r_esu * n_a * n_b / n_c * amp * abs(ov)


def xi_factor(g, Q, Q_M, omega_0, omega_c):
    """Modulation parameter xi in W^-1/2."""
    if not (Q > 0 and Q_M > 0 and float(omega_0) > 0 and float(omega_c) > 0):
        raise ValueError("Q, Q_M and frequencies must be positive")
    return 4 * g * Q / float(omega_0) * math.sqrt(Q_M / (HBAR * float(omega_c) ** 2))


def sideband_ratio(xi, P_M, single_sideband=False):
    """Sideband-to-pump power ratio ``(2 xi sqrt(P_M) / (1 + 2 xi^2 P_M))^2``.

    ``single_sideband`` drops the 2 from the saturation term, the variant
    for orthogonal-polarization conversion where one sideband is resonant.
    """
    if P_M < 0:
        raise ValueError("P_M must be >= 0")
    k = 1.0 if single_sideband else 2.0
    y = xi**2 * P_M  # squared form: no sqrt round-off at the peak
    return 4 * y / (1 + k * y) ** 2


def photon_efficiency(xi, P0, omega_0, omega_c):
    """Small-signal photon-number efficiency ``4 xi^2 P0 omega_c / omega_0``.

    Values above 1 are returned unchanged and logged: the linear model does
    not hold there.
    """
    if P0 < 0:
        raise ValueError("P0 must be >= 0")
    eta = 4 * xi**2 * P0 * float(omega_c) / float(omega_0)
    if eta > 1:
        log.warning("photon efficiency %.3g exceeds 1; small-signal model no longer valid", eta)
    return eta


def manley_rowe_photon_eff(power_eff, omega_pump, omega_c):
    """Photon-number efficiency from a sideband/microwave power ratio."""
    if power_eff < 0:
        raise ValueError("power efficiency must be >= 0")
    return power_eff * float(omega_c) / float(omega_pump)


def required_pump(xi, omega_0, omega_c, target_eta=1.0):
    """Pump power (W) giving photon efficiency ``target_eta``."""
    if not 0 < target_eta <= 1:
        raise ValueError("target efficiency must lie in (0, 1]")
    if xi == 0:
        raise DegenerateCoupling("xi = 0: no pump power reaches the target")
    if xi < 0:
        raise ValueError("xi must be >= 0")
    return target_eta * float(omega_0) / (4 * xi**2 * float(omega_c))


@dataclass
class ConversionBudget:
    g: float
    xi: float
    Q: float
    Q_M: float
    P0: float
    P_M: float
    eta_photon: float
    conversion_type: str
    omega_0: float = None
    omega_c: float = None
    P0_unity: float = None
    overlap: OverlapResult = None
    r_pm_per_v: float = None
    indices: tuple = None
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.P0 < 0 or self.P_M < 0:
            raise ValueError("powers must be >= 0")
        if self.eta_photon > 1 and "beyond-small-signal" not in self.flags:
            self.flags.append("beyond-small-signal")

    def items(self):
        ov = self.overlap
        rows = [
            ("conversion_type", self.conversion_type),
            ("f_c_GHz", None if self.omega_c is None else Frequency(self.omega_c).ghz),
            ("r_pm_per_V", self.r_pm_per_v),
            ("n_a", self.indices[0] if self.indices else None),
            ("n_b", self.indices[1] if self.indices else None),
            ("n_c", self.indices[2] if self.indices else None),
            ("component", ov.component if ov else None),
            ("locus_r_m", ov.locus[0] if ov else None),
            ("effective_field", ov.effective_field if ov else None),
            ("V_c_m3", ov.V_c if ov else None),
            ("g_rad_per_s", self.g),
            ("xi_per_sqrtW", self.xi),
            ("Q", self.Q),
            ("Q_M", self.Q_M),
            ("P0_W", self.P0),
            ("P_M_W", self.P_M),
            ("eta_photon", self.eta_photon),
            ("P0_unity_W", self.P0_unity),
            ("flags", ";".join(self.flags)),
        ]
        return rows

    def report(self):
        """``quantity,value`` CSV block with every intermediate."""
        buf = io.StringIO()
        buf.write("quantity,value\n")
        for k, v in self.items():
            if isinstance(v, float):
                v = f"{v:.6g}"
            buf.write(f"{k},{'' if v is None else v}\n")
        return buf.getvalue()

    def as_dict(self):
        d = asdict(self)
        d.pop("overlap")
        return d


def conversion_indices(material, conversion_type):
    """``(n_a, n_b, n_c, r_pm_per_v)`` for a crystal and process type."""
    mat = material_lookup(material)
    if conversion_type == TYPE_I:
        return mat.n_opt_e, mat.n_opt_e, mat.n_mw_e, mat.r33
    if conversion_type == TYPE_II:
        return mat.n_opt_e, mat.n_opt_o, mat.n_mw_o, mat.r42
    raise ValueError("conversion_type must be 'I' or 'II'")


def efficiency_budget(
    solution,
    material,
    conversion_type=TYPE_I,
    Q=DEFAULT_Q,
    Q_M=DEFAULT_Q_M,
    P0=0.05,
    P_M=0.0,
    depth=DEFAULT_LOCUS_DEPTH,
    pump_wavelength=DEFAULT_PUMP_WAVELENGTH,
    component=None,
    weighting="unit",
    n_c=None,
):
    """Full chain: overlap, g, xi, efficiency at ``P0`` and the unity-efficiency pump.

    ``n_c`` overrides the microwave index (default: the material's value
    for the field direction of the process).
    """
    if not (Q > 0 and Q_M > 0):
        raise ValueError("Q and Q_M must be positive")
    n_a, n_b, n_c0, r = conversion_indices(material, conversion_type)
    n_c = n_c0 if n_c is None else n_c
    w0 = wavelength_to_omega(pump_wavelength)
    wc = solution.omega_c.value
    ov = overlap_factor(solution, depth, conversion_type, component, weighting=weighting)
    g = coupling_g(r, n_a, n_b, n_c, w0, wc, ov)
    xi = xi_factor(g, Q, Q_M, w0, wc)
    eta = photon_efficiency(xi, P0, w0, wc)
    flags = []
    try:
        p_unity = required_pump(xi, w0, wc, 1.0)
    except DegenerateCoupling:
        p_unity = math.inf
        flags.append("no-coupling")
    return ConversionBudget(
        g, xi, Q, Q_M, P0, P_M, eta, conversion_type, w0, wc, p_unity, ov, r, (n_a, n_b, n_c), flags
    )
