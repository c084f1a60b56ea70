"""Run configuration: one INI file, flat sections, units in the key names.

Every key has a default. ``auto`` values are resolved against the rest of
the configuration by :meth:`RunConfig.resolved`, which is what
``--print-config`` shows, so nothing is left implicit.
"""

import configparser
import io
import math
from dataclasses import dataclass

from .materials import material_lookup, load_material_file


class ConfigError(ValueError):
    """A configuration problem tied to one ``[section] key``."""

    def __init__(self, section, key, message):
        self.section, self.key = section, key
        super().__init__(f"[{section}] {key}: {message}")


AUTO = "auto"


def _num(lo=None, hi=None, strict_lo=False, integer=False, auto=False, inf=False):
    def parse(text):
        if auto and text.lower() == AUTO:
            return AUTO
        if inf and text.lower() in ("inf", "infinity"):
            return math.inf
        try:
            v = int(text) if integer else float(text)
        except ValueError:
            kind = "an integer" if integer else "a number"
            raise ValueError(f"expected {kind}{' or auto' if auto else ''}, got {text!r}") from None
        if not integer and not math.isfinite(v):
            raise ValueError(f"must be finite, got {text!r}")
        if lo is not None and (v < lo or (strict_lo and v == lo)):
            raise ValueError(f"must be {'>' if strict_lo else '>='} {lo:g}, got {v:g}")
        if hi is not None and v > hi:
            raise ValueError(f"must be <= {hi:g}, got {v:g}")
        return v

    return parse


def _choice(*options, auto=False):
    def parse(text):
        if auto and text.lower() == AUTO:
            return AUTO
        for o in options:
            if text.lower() == o.lower():
                return o
        raise ValueError(f"expected one of {', '.join(options)}{' or auto' if auto else ''}, got {text!r}")

    return parse


def _material(text):
    material_lookup(text)
    return text


def _bool(text):
    t = text.lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _path(text):
    return text


def _tolerance(text):
    t = text.lower()
    if t in ("microwave", "min"):
        return t
    return _num(lo=0, strict_lo=True)(text)


# section -> ordered (key, parser, default text)
SCHEMA = {
    "geometry": [
        ("r_outer_mm", _num(lo=0, strict_lo=True), "2.9"),
        ("r_inner_mm", _num(lo=0, strict_lo=True), "2.48"),
        ("height_um", _num(lo=0, strict_lo=True), "292"),
        ("rim_radius_um", _num(lo=0, strict_lo=True, inf=True), "inf"),
        ("post_radius_mm", _num(lo=0, strict_lo=True, auto=True), AUTO),
        ("prism", _material, "diamond"),
    ],
    "materials": [
        ("ring", _material, "lithium-niobate"),
        ("post", _material, "fused-silica"),
        ("record_file", _path, ""),
        ("microwave_polarization", _choice("e", "o"), "e"),
        ("ring_index_mw", _num(lo=1, strict_lo=True, auto=True), AUTO),
        ("post_index_mw", _num(lo=1, strict_lo=True, auto=True), AUTO),
    ],
    "solver": [
        ("l_min", _num(lo=1, integer=True), "11"),
        ("l_max", _num(lo=1, integer=True), "15"),
        ("target_ghz", _num(lo=0, strict_lo=True, auto=True), AUTO),
        ("family", _choice("r", "z", auto=True), AUTO),
        ("edge_um", _num(lo=0, strict_lo=True, auto=True), AUTO),
        ("margin_mm", _num(lo=0, strict_lo=True, auto=True), AUTO),
        ("rim_segments", _num(lo=4, integer=True), "32"),
        ("element_order", _choice("1", "2"), "2"),
        ("penalty", _num(lo=0, strict_lo=True), "1.0"),
        ("eig_tol", _num(lo=0, strict_lo=True), "1e-8"),
        ("eig_count", _num(lo=1, integer=True), "8"),
    ],
    "phasematch": [
        ("conversion_type", _choice("I", "II"), "I"),
        ("branch", _choice("anti-Stokes", "Stokes", auto=True), AUTO),
        ("pump_wavelength_nm", _num(lo=0, strict_lo=True), "1550"),
        ("pump_polarization", _choice("extraordinary", "ordinary"), "extraordinary"),
        ("tolerance_mhz", _tolerance, "microwave"),
        ("max_bias_v", _num(lo=0), "300"),
    ],
    "conversion": [
        ("q_optical", _num(lo=0, strict_lo=True), "1e8"),
        ("q_microwave", _num(lo=0, strict_lo=True), "100"),
        ("pump_power_mw", _num(lo=0), "50"),
        ("signal_power_w", _num(lo=0), "0"),
        ("l_c", _num(lo=1, integer=True, auto=True), AUTO),
        ("locus_depth_um", _num(lo=0), "30"),
        ("component", _choice("r", "phi", "z", "magnitude", auto=True), AUTO),
        ("family", _choice("r", "z", auto=True), AUTO),
        ("weighting", _choice("unit", "energy"), "unit"),
        ("edge_um", _num(lo=0, strict_lo=True, auto=True), AUTO),
    ],
    "dynamics": [
        ("coupling_periods", _num(lo=0, strict_lo=True), "1e4"),
        ("rel_tolerance", _num(lo=0, strict_lo=True), "1e-12"),
        ("samples", _num(lo=2, integer=True), "201"),
        ("pump_photons", _num(lo=0), "1"),
        ("signal_photons", _num(lo=0), "0.09"),
        ("check_coupling_hz", _num(lo=0, strict_lo=True), "20"),
        ("check_signal_ghz", _num(lo=0, strict_lo=True), "100"),
        ("check_saturation", _num(lo=0, strict_lo=True, hi=0.01), "1e-4"),
    ],
    "spectrum": [
        ("prominence", _num(lo=0, strict_lo=True, hi=1), "0.1"),
        ("strict_labels", _bool, "yes"),
        ("r_in_min_mm", _num(lo=0, strict_lo=True), "2.48"),
        ("r_in_max_mm", _num(lo=0, strict_lo=True), "2.75"),
        ("fit_edge_um", _num(lo=0, strict_lo=True), "100"),
        ("fit_xatol_um", _num(lo=0, strict_lo=True), "1"),
        ("refine_edge_um", _num(lo=0, auto=True), AUTO),  # 0 skips the refinement pass
    ],
    "output": [
        ("directory", _path, "out"),
        ("svg", _bool, "no"),
    ],
}


def _defaults():
    return {s: {k: p(d) for k, p, d in keys} for s, keys in SCHEMA.items()}


@dataclass
class RunConfig:
    values: dict
    source: str = "<defaults>"

    @classmethod
    def defaults(cls):
        return cls(_defaults())

    @classmethod
    def from_text(cls, text, source="<string>"):
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError("file", source, str(exc).splitlines()[0]) from None
        values = _defaults()
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(section, "*", f"unknown section (known: {', '.join(SCHEMA)})")
            known = {k: p for k, p, _ in SCHEMA[section]}
            for key, raw in parser.items(section):
                if key not in known:
                    raise ConfigError(section, key, "unknown field")
                try:
                    values[section][key] = known[key](raw.strip())
                except (ValueError, KeyError) as exc:
                    msg = exc.args[0] if exc.args else str(exc)
                    raise ConfigError(section, key, str(msg)) from None
        cfg = cls(values, source)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read(), source=str(path))

    def __getitem__(self, section):
        return self.values[section]

    def set(self, section, key, raw):
        known = {k: p for k, p, _ in SCHEMA[section]}
        try:
            self.values[section][key] = known[key](str(raw))
        except ValueError as exc:
            raise ConfigError(section, key, str(exc)) from None

    def validate(self):
        g, s = self["geometry"], self["solver"]
        if not g["r_inner_mm"] < g["r_outer_mm"]:
            raise ConfigError("geometry", "r_inner_mm", "must be smaller than r_outer_mm")
        post = g["post_radius_mm"]
        if post != AUTO and post > g["r_inner_mm"]:
            raise ConfigError("geometry", "post_radius_mm", "must not exceed r_inner_mm")
        if s["l_max"] < s["l_min"]:
            raise ConfigError("solver", "l_max", f"empty L_c range {s['l_min']}..{s['l_max']}")
        sp = self["spectrum"]
        if not sp["r_in_min_mm"] < sp["r_in_max_mm"]:
            raise ConfigError("spectrum", "r_in_max_mm", "must exceed r_in_min_mm")
        if self["materials"]["record_file"]:
            try:
                load_material_file(self["materials"]["record_file"])
            except Exception as exc:
                raise ConfigError("materials", "record_file", str(exc)) from None
        try:
            self.geometry()
        except ValueError as exc:
            raise ConfigError("geometry", "*", str(exc)) from None

    # -- derived objects

    def ring_record(self):
        path = self["materials"]["record_file"]
        if path:
            return load_material_file(path)
        return material_lookup(self["materials"]["ring"])

    def geometry(self):
        from .geometry import RingGeometry

        g = self["geometry"]
        post = g["post_radius_mm"]
        return RingGeometry(
            R=g["r_outer_mm"] * 1e-3,
            R_in=g["r_inner_mm"] * 1e-3,
            h=g["height_um"] * 1e-6,
            rho=g["rim_radius_um"] * 1e-6,
            post_outer_radius=None if post == AUTO else post * 1e-3,
            ring_material=self["materials"]["ring"],
            post_material=self["materials"]["post"],
        )

    def indices(self):
        m = self["materials"]
        pol = m["microwave_polarization"]
        ring = m["ring_index_mw"]
        post = m["post_index_mw"]
        return {
            "ring": self.ring_record().n_mw(pol) if ring == AUTO else ring,
            "post": material_lookup(m["post"]).n_mw(pol) if post == AUTO else post,
        }

    def branch(self):
        from .phasematch import ANTI_STOKES, STOKES

        b = self["phasematch"]["branch"]
        if b != AUTO:
            return b
        return ANTI_STOKES if self["phasematch"]["conversion_type"] == "I" else STOKES

    def target_ghz(self):
        from .constants import C_LIGHT

        t = self["solver"]["target_ghz"]
        if t != AUTO:
            return t
        L0 = self.L_range()[len(self.L_range()) // 2]
        return C_LIGHT * L0 / (2 * math.pi * self["geometry"]["r_outer_mm"] * 1e-3 * 2.0) / 1e9

    def L_range(self):
        s = self["solver"]
        return list(range(s["l_min"], s["l_max"] + 1))

    def edge_length(self):
        from .fem import default_edge_length

        e = self["solver"]["edge_um"]
        if e != AUTO:
            return e * 1e-6
        f_hi = self.target_ghz() * 1e9 * max(self.L_range()) / self.L_range()[len(self.L_range()) // 2]
        return default_edge_length(self.geometry(), self.indices(), f_hi)

    def margin(self):
        from .geometry import default_margin

        m = self["solver"]["margin_mm"]
        return default_margin(self.target_ghz() * 1e9) if m == AUTO else m * 1e-3

    def conversion_L(self):
        L = self["conversion"]["l_c"]
        if L != AUTO:
            return L
        r = self.L_range()
        return r[len(r) // 2]

    def conversion_family(self):
        from .conversion import TYPE_FAMILY

        f = self["conversion"]["family"]
        return TYPE_FAMILY[self["phasematch"]["conversion_type"]] if f == AUTO else f

    def conversion_component(self):
        from .conversion import TYPE_COMPONENT

        c = self["conversion"]["component"]
        return TYPE_COMPONENT[self["phasematch"]["conversion_type"]] if c == AUTO else c

    def conversion_edge(self):
        e = self["conversion"]["edge_um"]
        return self.edge_length() if e == AUTO else e * 1e-6

    def refine_edge(self):
        """Edge length of the fit's final refinement pass, or None to skip it."""
        e = self["spectrum"]["refine_edge_um"]
        if e == AUTO:
            return self.edge_length()
        return e * 1e-6 if e > 0 else None

    def resolved(self):
        """Copy with every ``auto`` replaced by the value a run would use."""
        v = {s: dict(d) for s, d in self.values.items()}
        g = self.geometry()
        idx = self.indices()
        if v["geometry"]["post_radius_mm"] == AUTO:
            v["geometry"]["post_radius_mm"] = g.post_outer_radius * 1e3
        v["materials"]["ring_index_mw"] = idx["ring"]
        v["materials"]["post_index_mw"] = idx["post"]
        v["solver"]["target_ghz"] = self.target_ghz()
        v["solver"]["edge_um"] = self.edge_length() * 1e6
        v["solver"]["margin_mm"] = self.margin() * 1e3
        if v["phasematch"]["conversion_type"] == "I":
            # Type-II auto searches both branches, so it stays auto
            v["phasematch"]["branch"] = self.branch()
        v["conversion"]["l_c"] = self.conversion_L()
        v["conversion"]["family"] = self.conversion_family()
        v["conversion"]["component"] = self.conversion_component()
        v["conversion"]["edge_um"] = self.conversion_edge() * 1e6
        v["spectrum"]["refine_edge_um"] = (self.refine_edge() or 0.0) * 1e6
        # solver family stays auto when unset: the scan chooses it
        return RunConfig(v, self.source)

    def to_text(self):
        buf = io.StringIO()
        buf.write(f"# resolved from {self.source}\n")
        for section, keys in SCHEMA.items():
            buf.write(f"\n[{section}]\n")
            for k, _, _ in keys:
                buf.write(f"{k} = {_format(self.values[section][k])}\n")
        return buf.getvalue()


def _format(v):
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return f"{v:.10g}"
    return str(v)
