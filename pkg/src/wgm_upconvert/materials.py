"""Material records for the ring, post and coupling prism.

Values are single-frequency numbers at the design points: 1.55 um for the
optical indices and ~100 GHz for the microwave indices.
"""

import dataclasses
import math
import re
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType

from .constants import C_LIGHT, TWO_PI, eo_coefficient_to_si


class UnknownMaterial(KeyError):
    pass


class MaterialFileError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialRecord:
    """Refractive indices and Pockels coefficients of one crystal.

    Electro-optic coefficients are stored in pm/V.
    """

    name: str
    n_opt_o: float
    n_opt_e: float
    n_mw_o: float
    n_mw_e: float
    r33: float = 0.0
    r31: float = 0.0
    r42: float = 0.0
    notes: str = ""

    def __post_init__(self):
        for field in ("n_opt_o", "n_opt_e", "n_mw_o", "n_mw_e"):
            value = getattr(self, field)
            if not (value > 1.0 and math.isfinite(value)):
                raise ValueError(f"{self.name}: {field} must be > 1, got {value!r}")
        for field in ("r33", "r31", "r42"):
            if getattr(self, field) < 0:
                raise ValueError(f"{self.name}: {field} must be >= 0")

    @property
    def r51(self):
        return self.r42

    @property
    def n_opt(self):
        """Optical index of the extraordinary (axis-polarized) family."""
        return self.n_opt_e

    def n_mw(self, polarization="e"):
        """Microwave index for fields along (``"e"``) or across (``"o"``) the axis."""
        if polarization in ("e", "extraordinary", "z"):
            return self.n_mw_e
        if polarization in ("o", "ordinary", "r"):
            return self.n_mw_o
        raise ValueError(f"unknown polarization {polarization!r}")

    def n_optical(self, polarization="e"):
        if polarization in ("e", "extraordinary"):
            return self.n_opt_e
        if polarization in ("o", "ordinary"):
            return self.n_opt_o
        raise ValueError(f"unknown polarization {polarization!r}")


_PUMP_OMEGA = TWO_PI * C_LIGHT / 1.55e-6
# stoichiometric LiTaO3: extraordinary index chosen so that the pump-frequency
# birefringence offset omega_0 * dn / n equals 2pi * 0.366 THz at 1.55 um
_LT_N = 2.12
_LT_DN = TWO_PI * 0.366e12 / _PUMP_OMEGA * _LT_N

_BUILTINS = {
    "lithium-niobate": MaterialRecord(
        name="lithium-niobate",
        n_opt_o=2.211,
        n_opt_e=2.138,
        n_mw_o=6.72,
        n_mw_e=5.15,
        r33=29.0,
        r31=7.0,
        r42=28.0,
        notes=(
            "congruent LiNbO3, z-cut; n_opt_o and r42 are handbook values; "
            "r31 set so that r33 - r31 = 22 pm/V; transparent 0.4-5 um"
        ),
    ),
    "lithium-tantalate": MaterialRecord(
        name="lithium-tantalate",
        n_opt_o=_LT_N,
        n_opt_e=_LT_N + _LT_DN,
        n_mw_o=6.5,
        n_mw_e=6.5,
        r33=30.5,
        r31=8.5,
        r42=20.0,
        notes=(
            "stoichiometric LiTaO3; one optical index 2.12 is quoted without "
            "polarization and stored as n_opt_o; n_opt_e carries the weak "
            "birefringence (0.366 THz offset at 1.55 um)"
        ),
    ),
    "fused-silica": MaterialRecord(
        name="fused-silica",
        n_opt_o=1.444,
        n_opt_e=1.444,
        n_mw_o=1.9,
        n_mw_e=1.9,
        notes="isotropic; low microwave loss post material",
    ),
    "diamond": MaterialRecord(
        name="diamond",
        n_opt_o=2.384,
        n_opt_e=2.384,
        n_mw_o=2.38,
        n_mw_e=2.38,
        notes="coupling prism; microwave index is a handbook value",
    ),
}

MATERIALS = MappingProxyType(_BUILTINS)

_ALIASES = {
    "linbo3": "lithium-niobate",
    "ln": "lithium-niobate",
    "litao3": "lithium-tantalate",
    "lt": "lithium-tantalate",
    "silica": "fused-silica",
    "sio2": "fused-silica",
}


def material_lookup(name):
    """Return the built-in record ``name`` or load a record file.

    ``name`` may also be a path to a record file (see :func:`load_material_file`).
    """
    if isinstance(name, MaterialRecord):
        return name
    key = str(name).strip().lower().replace("_", "-").replace(" ", "-")
    key = _ALIASES.get(key, key)
    if key in _BUILTINS:
        return _BUILTINS[key]
    path = Path(str(name))
    if path.suffix and path.is_file():
        return load_material_file(path)
    raise UnknownMaterial(f"unknown material {name!r}; known: {sorted(_BUILTINS)}")


_EO_UNITS = {"pm/v": 1.0, "m/v": 1e12, "esu": None}
_LINE = re.compile(r"^\s*([A-Za-z_][\w]*)\s*=\s*(.*?)\s*$")


def _parse_eo(text, lineno):
    parts = text.split()
    try:
        value = float(parts[0])
    except (IndexError, ValueError):
        raise MaterialFileError(f"line {lineno}: expected a number, got {text!r}") from None
    unit = parts[1].lower() if len(parts) > 1 else "pm/v"
    if unit not in _EO_UNITS:
        raise MaterialFileError(f"line {lineno}: unknown unit {parts[1]!r}")
    if unit == "esu":
        return eo_coefficient_to_si(value)
    return value * _EO_UNITS[unit]


def load_material_file(path):
    """Parse a ``key = value [unit]`` material file.

    Indices are dimensionless; electro-optic coefficients accept ``pm/V``
    (default), ``m/V`` or ``esu``. Missing microwave/optical ordinary values
    default to the extraordinary ones.
    """
    fields = {f.name for f in dataclasses.fields(MaterialRecord)}
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise MaterialFileError(f"{path}:{lineno}: expected 'key = value'")
        key, text = m.group(1), m.group(2)
        if key not in fields:
            raise MaterialFileError(f"{path}:{lineno}: unknown field {key!r}")
        if key in ("name", "notes"):
            values[key] = text
        elif key in ("r33", "r31", "r42"):
            values[key] = _parse_eo(text, lineno)
        else:
            try:
                values[key] = float(text.split()[0])
            except (IndexError, ValueError):
                raise MaterialFileError(f"{path}:{lineno}: bad number {text!r}") from None
    values.setdefault("name", Path(path).stem)
    for short in ("opt", "mw"):
        e, o = f"n_{short}_e", f"n_{short}_o"
        if e in values and o not in values:
            values[o] = values[e]
        if o in values and e not in values:
            values[e] = values[o]
    missing = {"n_opt_e", "n_mw_e"} - values.keys()
    if missing:
        raise MaterialFileError(f"{path}: missing fields {sorted(missing)}")
    try:
        return MaterialRecord(**values)
    except ValueError as exc:
        raise MaterialFileError(f"{path}: {exc}") from None
