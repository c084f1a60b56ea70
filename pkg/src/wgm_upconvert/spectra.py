"""Measured microwave transmission spectra: dips, Lorentzian fits, labels, geometry.

A resonance shows up as a dip on a unit baseline,

    T(f) = 1 - C / (1 + (2 (f - f0) / df)^2),     Q = f0 / df,

with ``C`` the power contrast.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import curve_fit, minimize_scalar
from scipy.signal import find_peaks, peak_widths

log = logging.getLogger(__name__)

MIN_SAMPLES = 16
MIN_FIT_SAMPLES = 8


class ParseError(ValueError):
    def __init__(self, message, lineno=None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno


class MonotonicityError(ValueError):
    pass


class FitDiverged(RuntimeError):
    pass


class AmbiguousLabel(ValueError):
    pass


class SearchFailure(RuntimeError):
    pass


@dataclass
class Spectrum:
    frequency: np.ndarray  # GHz
    transmission: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequency = np.asarray(self.frequency, dtype=float)
        self.transmission = np.asarray(self.transmission, dtype=float)
        if self.frequency.shape != self.transmission.shape or self.frequency.ndim != 1:
            raise ValueError("frequency and transmission must be 1-D arrays of equal length")
        if len(self.frequency) < MIN_SAMPLES:
            raise ValueError(f"a spectrum needs at least {MIN_SAMPLES} samples")
        if not np.all(np.diff(self.frequency) > 0):
            raise MonotonicityError("frequency column must be strictly increasing")
        above = int((self.transmission > 1).sum())
        if above:
            self.metadata.setdefault("above_unity", above)

    def __len__(self):
        return len(self.frequency)

    def window(self, lo, hi):
        """Sub-spectrum between sample indices ``lo`` (inclusive) and ``hi`` (exclusive)."""
        return self.frequency[lo:hi], self.transmission[lo:hi]

    def to_csv(self, path=None):
        buf = io.StringIO()
        for k, v in sorted(self.metadata.items()):
            if k != "above_unity":
                buf.write(f"# {k} = {v}\n")
        buf.write("f_GHz,T\n")
        for f, t in zip(self.frequency, self.transmission):
            buf.write(f"{f:.9g},{t:.9g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def load_spectrum(path):
    """Read a ``f_GHz, T`` CSV.

    Lines starting with ``#`` are comments; ``# key = value`` comments
    before the header become metadata (``R_m`` is read as the outer radius).
    """
    meta = {}
    freq, trans = [], []
    header_seen = False
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = (x.strip() for x in body.split("=", 1))
                    try:
                        meta[k] = float(v)
                    except ValueError:
                        meta[k] = v
                continue
            cells = [c.strip() for c in next(csv.reader([line]))]
            if not header_seen:
                if cells[:2] != ["f_GHz", "T"]:
                    raise ParseError(f"expected header 'f_GHz, T', got {line!r}", lineno)
                header_seen = True
                continue
            if len(cells) < 2:
                raise ParseError("expected two columns", lineno)
            try:
                freq.append(float(cells[0]))
                trans.append(float(cells[1]))
            except ValueError as exc:
                raise ParseError(f"not a number: {line!r}", lineno) from exc
    if not header_seen:
        raise ParseError("missing header 'f_GHz, T'")
    f = np.array(freq)
    if len(f) > 1 and not np.all(np.diff(f) > 0):
        bad = int(np.flatnonzero(np.diff(f) <= 0)[0]) + 1
        raise MonotonicityError(f"{path}: frequency not increasing at data row {bad + 1}")
    meta.setdefault("source", str(path))
    return Spectrum(f, np.array(trans), meta)


def lorentzian_dip(f, f0, df, C):
    return 1.0 - C / (1.0 + (2.0 * (f - f0) / df) ** 2)


def synthetic_spectrum(frequency, dips, snr_db=None, seed=0, metadata=None):
    """Spectrum with Lorentzian dips ``(f0_GHz, Q, C)`` and optional white noise.

    ``snr_db`` sets the noise standard deviation to ``10**(-snr_db / 20)``
    of the unit baseline.
    """
    f = np.asarray(frequency, dtype=float)
    T = np.ones_like(f)
    for f0, Q, C in dips:
        T -= 1.0 - lorentzian_dip(f, f0, f0 / Q, C)
    if snr_db is not None:
        T = T + np.random.default_rng(seed).normal(0.0, 10 ** (-snr_db / 20), f.shape)
    return Spectrum(f, T, dict(metadata or {}))


@dataclass(frozen=True)
class DipWindow:
    lo: int
    hi: int
    f_est: float
    width_est: float  # GHz, FWHM estimate
    depth: float
    flags: tuple = ()


def noise_level(transmission):
    """White-noise standard deviation from the median absolute first difference."""
    d = np.diff(np.asarray(transmission, float))
    return float(np.median(np.abs(d - np.median(d))) / (0.6745 * math.sqrt(2)))


def find_dips(spectrum, prominence=0.1, span=3.0):
    """Candidate dips with prominence above ``prominence``.

    Each window covers ``span`` estimated linewidths on either side. Dips
    closer than one linewidth are merged into one window flagged
    ``"merged"``. Noisy traces are Gaussian-smoothed before the search so
    the residual noise sits near ``prominence / 20``; fits use the raw data.
    """
    if not 0 < prominence < 1:
        raise ValueError("prominence must lie in (0, 1)")
    f, T = spectrum.frequency, spectrum.transmission
    depth = 1.0 - T
    sigma = noise_level(T)
    if sigma > prominence / 20:
        # a Gaussian kernel of width s cuts white noise by sqrt(2 sqrt(pi) s)
        s = (20 * sigma / prominence) ** 2 / (2 * math.sqrt(math.pi))
        depth = gaussian_filter1d(depth, min(s, len(f) / 20), mode="nearest")
    peaks, props = find_peaks(depth, prominence=prominence)
    if len(peaks) == 0:
        return []
    widths = peak_widths(depth, peaks, rel_height=0.5)[0]
    step = np.gradient(f)
    fw = widths * step[peaks]
    groups = [[0]]
    for k in range(1, len(peaks)):
        j = groups[-1][-1]
        if f[peaks[k]] - f[peaks[j]] < max(fw[k], fw[j]):
            groups[-1].append(k)
        else:
            groups.append([k])
    out = []
    for g in groups:
        k = max(g, key=lambda i: depth[peaks[i]])
        lo_f = min(f[peaks[i]] - span * fw[i] for i in g)
        hi_f = max(f[peaks[i]] + span * fw[i] for i in g)
        lo = int(np.searchsorted(f, lo_f, side="left"))
        hi = int(np.searchsorted(f, hi_f, side="right"))
        flags = ("merged",) if len(g) > 1 or _shoulders(f, depth, peaks[k], fw[k]) > 1 else ()
        out.append(DipWindow(lo, hi, float(f[peaks[k]]), float(fw[k]), float(depth[peaks[k]]), flags))
    return out


def _shoulders(f, depth, peak, width):
    """Curvature maxima within one linewidth of ``peak``: a blended pair shows two."""
    lo = int(np.searchsorted(f, f[peak] - width))
    hi = int(np.searchsorted(f, f[peak] + width, side="right"))
    if hi - lo < 7:
        return 1
    # smooth over an eighth of a linewidth: keeps doublets, drowns noise
    step = (f[hi - 1] - f[lo]) / (hi - lo - 1)
    d = gaussian_filter1d(depth, max(width / (8 * step), 1.0), mode="nearest")[lo:hi]
    curv = -np.gradient(np.gradient(d, f[lo:hi]), f[lo:hi])
    top = curv.max()
    if top <= 0:
        return 1
    idx, _ = find_peaks(curv, prominence=0.2 * top)
    return max(len(idx), 1)


@dataclass(frozen=True)
class DipFit:
    f0: float
    Q: float
    C: float
    rmse: float
    Q_err: float = float("nan")
    f0_err: float = float("nan")
    C_err: float = float("nan")
    flags: tuple = ()

    @property
    def linewidth(self):
        return self.f0 / self.Q


def fit_lorentzian(frequency, transmission=None, guess=None):
    """Least-squares Lorentzian dip fit.

    Accepts ``(frequency, transmission)`` arrays or a ``(Spectrum, DipWindow)``
    pair. Uncertainties come from the fit covariance.

    Raises
    ------
    FitDiverged
        If the optimiser fails or the result is not a dip inside the window.
    """
    if isinstance(frequency, Spectrum):
        win = transmission
        f, T = frequency.window(win.lo, win.hi) if win is not None else (frequency.frequency, frequency.transmission)
        if win is not None and guess is None:
            guess = (win.f_est, win.width_est, win.depth)
    else:
        f, T = np.asarray(frequency, float), np.asarray(transmission, float)
    if len(f) < MIN_FIT_SAMPLES:
        raise ValueError(f"a fit window needs at least {MIN_FIT_SAMPLES} samples")
    if guess is None:
        k = int(np.argmin(T))
        depth = max(1.0 - T[k], 1e-3)
        half = T <= 1.0 - depth / 2
        width = max(np.ptp(f[half]) if half.sum() > 1 else 0.0, 2 * np.median(np.diff(f)))
        guess = (f[k], width, depth)
    span = f[-1] - f[0]
    lo = [f[0], 1e-6 * span, 0.0]
    hi = [f[-1], 10 * span, 2.0]
    p0 = np.clip(guess, np.array(lo) + 1e-12 * span, np.array(hi) - 1e-12 * span)
    try:
        p, cov = curve_fit(lorentzian_dip, f, T, p0=p0, bounds=(lo, hi), method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitDiverged(f"Lorentzian fit failed: {exc}") from exc
    f0, df, C = p
    resid = T - lorentzian_dip(f, *p)
    rmse = float(np.sqrt(np.mean(resid**2)))
    if not (f[0] <= f0 <= f[-1]) or C <= 0 or df <= 0 or not np.isfinite(cov).all():
        raise FitDiverged("fit did not converge to a dip inside the window")
    if C < 3 * rmse:
        raise FitDiverged(f"contrast {C:.3g} is indistinguishable from noise (rmse {rmse:.3g})")
    step = float(np.median(np.diff(f)))
    if df < 2 * step:
        raise FitDiverged(f"linewidth {df:.3g} GHz is not resolved by the {step:.3g} GHz sampling")
    Q = f0 / df
    if Q <= 1:
        raise FitDiverged(f"fitted Q = {Q:.3g} is not a resonance")
    flags = ()
    if df > span / 2:
        flags += ("window-narrow",)
    if C > 1:
        flags += ("contrast-above-unity",)
        C = 1.0 if C - 1 < 3 * rmse else C
    if C > 1:
        raise FitDiverged(f"contrast {C:.3g} exceeds 1 beyond noise")
    err = np.sqrt(np.diag(cov))
    # Q = f0/df: first-order propagation
    Q_err = Q * math.hypot(err[0] / f0, err[1] / df)
    return DipFit(float(f0), float(Q), float(C), rmse, float(Q_err), float(err[0]), float(err[2]), flags)


def _dips(f, *p):
    T = np.ones_like(f)
    for k in range(0, len(p), 3):
        T -= 1.0 - lorentzian_dip(f, *p[k : k + 3])
    return T


def _joint_refine(spectrum, pairs):
    """Refit all dips at once so each one sees its neighbours' tails."""
    f, T = spectrum.frequency, spectrum.transmission
    mask = np.zeros(len(f), bool)
    p0, lo, hi = [], [], []
    for w, fit in pairs:
        mask[w.lo : w.hi] = True
        span = f[min(w.hi, len(f)) - 1] - f[w.lo]
        p0 += [fit.f0, fit.linewidth, fit.C]
        lo += [f[w.lo], 1e-6 * span, 0.0]
        hi += [f[min(w.hi, len(f)) - 1], 10 * span, 2.0]
    p0 = np.clip(p0, np.array(lo), np.array(hi))
    p, cov = curve_fit(_dips, f[mask], T[mask], p0=p0, bounds=(lo, hi), method="trf", max_nfev=20000)
    resid = T - _dips(f, *p)
    err = np.sqrt(np.diag(cov))
    out = []
    for k, (w, fit) in enumerate(pairs):
        f0, df, C = p[3 * k : 3 * k + 3]
        e = err[3 * k : 3 * k + 3]
        rmse = float(np.sqrt(np.mean(resid[w.lo : w.hi] ** 2)))
        Q = f0 / df
        Q_err = Q * math.hypot(e[0] / f0, e[1] / df)
        out.append(replace(fit, f0=float(f0), Q=float(Q), C=float(C), rmse=rmse, Q_err=float(Q_err), f0_err=float(e[0]), C_err=float(e[2])))
    return out


def fit_spectrum(spectrum, prominence=0.1):
    """Find and fit every dip.

    Each window is fitted alone first; windows that fail are logged and
    skipped. With several dips the survivors are then refined jointly as a
    sum of Lorentzians, which removes the bias from overlapping tails.
    """
    pairs = []
    for w in find_dips(spectrum, prominence):
        try:
            fit = fit_lorentzian(spectrum, w)
        except (FitDiverged, ValueError) as exc:
            log.warning("dip near %.4f GHz not fitted: %s", w.f_est, exc)
            continue
        if "merged" in w.flags:
            fit = replace(fit, flags=fit.flags + ("merged",))
        pairs.append((w, fit))
    if len(pairs) < 2:
        return [fit for _, fit in pairs]
    try:
        return _joint_refine(spectrum, pairs)
    except (RuntimeError, ValueError) as exc:
        log.warning("joint refinement failed, keeping single-dip fits: %s", exc)
        return [replace(fit, flags=fit.flags + ("unrefined",)) for _, fit in pairs]


@dataclass(frozen=True)
class Assignment:
    f0: float
    L_c: int
    f_disp: float
    residual: float  # GHz, f0 - f_disp
    flags: tuple = ()


def _as_f0_list(dips):
    out = []
    for d in dips:
        if isinstance(d, DipFit):
            out.append((d.f0, d.linewidth))
        elif isinstance(d, (tuple, list)):
            out.append((float(d[0]), float(d[1]) if len(d) > 1 else 0.0))
        else:
            out.append((float(d), 0.0))
    return out


def label_modes(dips, table, strict=True):
    """Assign each dip the ``L_c`` of the nearest dispersion frequency.

    ``dips`` holds :class:`DipFit` objects, ``(f0, linewidth)`` pairs or bare
    frequencies (GHz). A dip is ambiguous when the two nearest table
    frequencies are equally near or both lie within its linewidth; with
    ``strict`` that raises :class:`AmbiguousLabel`, otherwise it is flagged.
    Two dips landing on one ``L_c`` are flagged ``"conflict"``.
    """
    L = np.array([r.L_c for r in table if not getattr(r, "is_gap", False)])
    fd = np.array([r.f_ghz for r in table if not getattr(r, "is_gap", False)])
    if len(L) == 0:
        raise ValueError("dispersion table has no usable rows")
    items = _as_f0_list(dips)
    lo, hi = fd.min(), fd.max()
    out = []
    for f0, lw in items:
        d = np.abs(fd - f0)
        order = np.argsort(d, kind="stable")
        k = order[0]
        flags = ()
        if not (lo - (fd[1] - fd[0] if len(fd) > 1 else 0) <= f0 <= hi + (fd[-1] - fd[-2] if len(fd) > 1 else 0)):
            flags += ("outside-table",)
        if len(order) > 1:
            d1, d2 = d[order[0]], d[order[1]]
            tie = d2 - d1 <= 1e-9 * max(abs(f0), 1.0)
            if tie or (lw > 0 and d2 <= lw):
                msg = f"dip at {f0:.4f} GHz is equally close to L_c={L[order[0]]} and L_c={L[order[1]]}"
                if strict:
                    raise AmbiguousLabel(msg)
                flags += ("ambiguous",)
        out.append(Assignment(f0, int(L[k]), float(fd[k]), float(f0 - fd[k]), flags))
    seen = {}
    for i, a in enumerate(out):
        seen.setdefault(a.L_c, []).append(i)
    for idx in seen.values():
        if len(idx) > 1:
            for i in idx:
                out[i] = replace(out[i], flags=out[i].flags + ("conflict",))
    return out


def coupling_contrast_report(fits):
    """Max contrast and the per-dip table (``f0_GHz, Q, C, rmse`` rows)."""
    if not fits:
        raise ValueError("no dip fits given")
    best = max(fits, key=lambda x: x.C)
    return {"max_contrast": best.C, "best": best, "fits": list(fits)}


def report_csv(fits, labels=None, path=None):
    """``f0_GHz,Q,C,L_c,rmse`` rows; ``L_c`` is blank when unlabeled."""
    buf = io.StringIO()
    buf.write("f0_GHz,Q,C,L_c,rmse\n")
    lab = {}
    if labels:
        for a in labels:
            lab[round(a.f0, 9)] = a.L_c
    for fit in fits:
        L = lab.get(round(fit.f0, 9), "")
        buf.write(f"{fit.f0:.6f},{fit.Q:.4f},{fit.C:.4f},{L},{fit.rmse:.3e}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


# ------------------------------------------------------------ inner radius fit


@dataclass(frozen=True)
class SeriesItem:
    """One measured spectrum of the radius series: outer radius and labeled dips."""

    R: float
    f0: tuple  # GHz
    L_c: tuple


@dataclass
class GeometryFit:
    R_in: float
    uncertainty: float
    objective: float
    trajectory: list
    n_evaluations: int
    flags: tuple = ()
    refined_objective: float = None  # misfit at the optimum on the refinement mesh


def model_frequencies(base_geometry, indices, R, R_in, L_values, edge_length=100e-6, family=None, target_ghz=None):
    """Fundamental-mode frequencies (GHz) at ``L_values`` for one (R, R_in)."""
    from .fem import dispersion_scan

    g = replace(base_geometry, R=R, R_in=R_in, post_outer_radius=min(base_geometry.post_outer_radius, R_in))
    Ls = range(min(L_values), max(L_values) + 1)
    table = dispersion_scan(g, indices, Ls, target_ghz=target_ghz, family=family, edge_length=edge_length)
    return {r.L_c: r.f_ghz for r in table}, table


def fit_geometry(
    series,
    base_geometry,
    indices,
    interval,
    edge_length=100e-6,
    family=None,
    xatol=1e-6,
    sigma_f_ghz=None,
    refine_edge=None,
):
    """Inner radius minimising the squared misfit of labeled dips.

    Each objective evaluation solves the fundamental dispersion of every
    radius in ``series`` on a coarse mesh (``edge_length``). Brent's
    bounded method searches ``interval``; a minimum within ``4 * xatol``
    of either bound is not interior and raises :class:`SearchFailure`.
    The uncertainty follows from the objective curvature with per-dip
    frequency error ``sigma_f_ghz`` (default: the rms residual, floored at
    1 MHz). ``refine_edge`` re-solves the optimum on a finer mesh and
    stores the misfit there as ``refined_objective``; a value far above
    the coarse misfit means the surrogate mesh is too coarse.
    """
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError("interval must be increasing")
    if lo <= 0 or any(hi >= s.R for s in series):
        raise ValueError("interval must lie inside (0, R) for every radius")
    if not series:
        raise ValueError("empty series")
    cache = {}
    trajectory = []
    state = {"family": family}
    n_dips = sum(len(s.f0) for s in series)

    def objective(R_in):
        key = round(R_in, 12)
        if key in cache:
            return cache[key]
        total = 0.0
        for s in series:
            # seed a little below the data: the mode search only steps upward
            tgt = 0.9 * float(np.median(s.f0))
            freqs, table = model_frequencies(
                base_geometry, indices, s.R, R_in, s.L_c, edge_length, state["family"], tgt
            )
            if state["family"] is None:
                state["family"] = table.rows[0].family
            for f0, L in zip(s.f0, s.L_c):
                fd = freqs.get(L, float("nan"))
                if not np.isfinite(fd):
                    raise SearchFailure(f"no guided mode at L_c={L} for R_in={R_in:.6g}")
                total += (f0 - fd) ** 2
        cache[key] = total
        if not trajectory or total < trajectory[-1][1]:
            trajectory.append((R_in, total))
        log.info("fit_geometry: R_in=%.6f mm objective=%.6g GHz^2", R_in * 1e3, total)
        return total

    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    best = float(res.x)
    if best - lo < 4 * xatol or hi - best < 4 * xatol:
        raise SearchFailure(f"best R_in={best:.6g} m sits on the search bound; no interior minimum")
    J = objective(best)
    # curvature from a symmetric difference about the optimum
    step = max(4 * xatol, 2e-6)
    Jp, Jm = objective(best + step), objective(best - step)
    curv = (Jp - 2 * J + Jm) / step**2
    if sigma_f_ghz is None:
        sigma_f_ghz = max(math.sqrt(J / max(n_dips, 1)), 1e-3)
    flags = ()
    if curv > 0:
        unc = math.sqrt(2 * sigma_f_ghz**2 / curv)
    else:
        unc = float("inf")
        flags += ("flat-objective",)
    if n_dips < 2:
        flags += ("underdetermined",)
    J_fine = None
    if refine_edge:
        J_fine = 0.0
        for s in series:
            freqs, _ = model_frequencies(
                base_geometry, indices, s.R, best, s.L_c, refine_edge, state["family"], 0.9 * float(np.median(s.f0))
            )
            J_fine += sum((f0 - freqs[L]) ** 2 for f0, L in zip(s.f0, s.L_c))
        log.info("fit_geometry: refined misfit %.6g GHz^2 at edge %.3g m", J_fine, refine_edge)
    return GeometryFit(best, unc, J, trajectory, len(cache), flags, J_fine)
