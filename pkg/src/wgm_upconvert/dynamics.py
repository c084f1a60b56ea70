"""Classical coupled-mode equations for pump, sidebands and microwave mode.

Amplitudes are normalised so ``|x|^2`` is a photon number. In the frame
rotating with each mode and with everything on resonance, the three-wave
Hamiltonian ``hbar g (a^* b_- c + a b_+ c^*)`` + h.c. gives

    da/dt   = -k_a a   - i (g^* b_- c + g b_+ c^*) + F_a
    db_-/dt = -k_b b_- - i g c^* a
    db_+/dt = -k_b b_+ - i g^* c a
    dc/dt   = -k_c c   - i (g b_-^* a + g b_+ a^*) + F_c

Without loss or drive two sums are conserved: the optical photon number
``|a|^2 + |b_+|^2 + |b_-|^2`` and ``|c|^2 + |b_+|^2 - |b_-|^2``.
"""

import io
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import ode, solve_ivp
from scipy.optimize import root

from .constants import HBAR

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeAmplitudes:
    a: complex = 0j
    b_plus: complex = 0j
    b_minus: complex = 0j
    c: complex = 0j
    kappa_a: float = 0.0
    kappa_b: float = 0.0
    kappa_c: float = 0.0
    drive_a: complex = 0j
    drive_c: complex = 0j

    def __post_init__(self):
        for k in ("kappa_a", "kappa_b", "kappa_c"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be >= 0")
        if not np.isfinite(self.vector).all():
            raise ValueError("amplitudes must be finite")

    @property
    def vector(self):
        return np.array([self.a, self.b_plus, self.b_minus, self.c], dtype=complex)

    def with_vector(self, v):
        return replace(self, a=complex(v[0]), b_plus=complex(v[1]), b_minus=complex(v[2]), c=complex(v[3]))

    @property
    def photons(self):
        return np.abs(self.vector) ** 2


def kappa_from_q(omega, Q):
    """Amplitude decay rate ``omega / (2 Q)``."""
    return float(omega) / (2 * Q)


def _deriv(v, g_plus, g_minus, kap, drive):
    a, bp, bm, c = v
    ka, kb, kc = kap
    gp, gm = g_plus, g_minus
    da = -ka * a - 1j * (np.conj(gm) * bm * c + gp * bp * np.conj(c)) + drive[0]
    dbm = -kb * bm - 1j * gm * np.conj(c) * a
    dbp = -kb * bp - 1j * np.conj(gp) * c * a
    dc = -kc * c - 1j * (gm * np.conj(bm) * a + gp * bp * np.conj(a)) + drive[1]
    return np.array([da, dbp, dbm, dc])


def rhs(state, g, sidebands="both"):
    """Time derivatives ``(da, db_plus, db_minus, dc)`` for ``state``.

    ``sidebands`` is ``"both"``, ``"anti-Stokes"`` (only ``b_plus``
    couples) or ``"Stokes"``.
    """
    gp, gm = _branch_couplings(g, sidebands)
    return _deriv(
        state.vector,
        gp,
        gm,
        (state.kappa_a, state.kappa_b, state.kappa_c),
        (state.drive_a, state.drive_c),
    )


def _branch_couplings(g, sidebands):
    if sidebands == "both":
        return g, g
    if sidebands == "anti-Stokes":
        return g, 0.0
    if sidebands == "Stokes":
        return 0.0, g
    raise ValueError("sidebands must be 'both', 'anti-Stokes' or 'Stokes'")


def invariants(v):
    """``(|a|^2 + |b_+|^2 + |b_-|^2, |c|^2 + |b_+|^2 - |b_-|^2)`` along the last axis."""
    n = np.abs(np.asarray(v)) ** 2
    return n[..., 0] + n[..., 1] + n[..., 2], n[..., 3] + n[..., 1] - n[..., 2]


@dataclass
class TimeSeries:
    t: np.ndarray
    y: np.ndarray  # (len(t), 4): a, b_plus, b_minus, c

    def invariant_drift(self):
        """Largest relative change of the two conserved sums."""
        out = []
        for q in invariants(self.y):
            scale = max(abs(q[0]), np.abs(q).max(), 1e-300)
            out.append(float(np.abs(q - q[0]).max() / scale))
        return max(out)

    def to_csv(self, path=None):
        buf = io.StringIO()
        names = ("a", "b_plus", "b_minus", "c")
        buf.write("t_s," + ",".join(f"{n}_re,{n}_im" for n in names) + "\n")
        for t, row in zip(self.t, self.y):
            buf.write(f"{t:.9e}," + ",".join(f"{x.real:.12e},{x.imag:.12e}" for x in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _real_rhs(gp, gm, kap, drive):
    # scalar complex arithmetic: far cheaper per call than small numpy arrays
    gp, gm = complex(gp), complex(gm)
    gpc, gmc = gp.conjugate(), gm.conjugate()
    ka, kb, kc = (float(k) for k in kap)
    fa, fc = complex(drive[0]), complex(drive[1])

    def f(_, y):
        a = complex(y[0], y[4])
        bp = complex(y[1], y[5])
        bm = complex(y[2], y[6])
        c = complex(y[3], y[7])
        da = -ka * a - 1j * (gmc * bm * c + gp * bp * c.conjugate()) + fa
        dbp = -kb * bp - 1j * gpc * c * a
        dbm = -kb * bm - 1j * gm * c.conjugate() * a
        dc = -kc * c - 1j * (gm * bm.conjugate() * a + gp * bp * a.conjugate()) + fc
        return [da.real, dbp.real, dbm.real, dc.real, da.imag, dbp.imag, dbm.imag, dc.imag]

    return f


def simulate(state, g, duration, tolerance=1e-10, samples=201, sidebands="both", method="dop853"):
    """Integrate from ``state`` for ``duration`` seconds.

    Adaptive explicit Runge-Kutta (``"dop853"`` or ``"dopri5"``) with
    relative tolerance ``tolerance``; the absolute tolerance is scaled to
    the largest initial or driven amplitude. Returns a :class:`TimeSeries`
    at ``samples`` evenly spaced instants.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    if method not in ("dop853", "dopri5"):
        raise ValueError("method must be 'dop853' or 'dopri5'")
    gp, gm = _branch_couplings(g, sidebands)
    kap = (state.kappa_a, state.kappa_b, state.kappa_c)
    drive = (state.drive_a, state.drive_c)
    y0 = state.vector
    scale = np.abs(y0).max()
    for f, k in ((drive[0], kap[0]), (drive[1], kap[2])):
        if f and k > 0:
            scale = max(scale, abs(f) / k)
    scale = scale or 1.0

    r = ode(_real_rhs(gp, gm, kap, drive))
    r.set_integrator(method, rtol=tolerance, atol=tolerance * scale * 1e-3, nsteps=10**9)
    r.set_initial_value(np.concatenate([y0.real, y0.imag]), 0.0)
    t = np.linspace(0.0, duration, samples)
    y = np.empty((samples, 4), complex)
    y[0] = y0
    for k in range(1, samples):
        r.integrate(t[k])
        if not r.successful():
            raise StepFailure(f"integration stopped at t={r.t:.4g} s (code {r.get_return_code()})")
        y[k] = r.y[:4] + 1j * r.y[4:]
    return TimeSeries(t, y)


def steady_state(state, g, sidebands="both", tol=1e-10, duration=None):
    """Driven, damped steady state.

    Newton-type solve of ``d/dt = 0`` seeded with the uncoupled driven
    amplitudes ``F / kappa``. If that fails the stiff-capable LSODA
    integrator runs for ``duration`` (default 40 slowest decay times) and
    the solve is repeated from there. Convergence means every derivative is
    below ``tol`` times the largest rate times the largest amplitude.
    """
    gp, gm = _branch_couplings(g, sidebands)
    kap = (state.kappa_a, state.kappa_b, state.kappa_c)
    drive = (state.drive_a, state.drive_c)
    if min(kap) <= 0:
        raise ValueError("steady state needs every kappa > 0")

    def F(x):
        v = x[:4] + 1j * x[4:]
        d = _deriv(v, gp, gm, kap, drive)
        return np.concatenate([d.real, d.imag])

    def polish(v0):
        with np.errstate(over="ignore", invalid="ignore"):
            res = root(F, np.concatenate([v0.real, v0.imag]), method="hybr", tol=1e-14)
        v = res.x[:4] + 1j * res.x[4:]
        d = _deriv(v, gp, gm, kap, drive)
        size = max(np.abs(v).max(), 1e-300)
        return v, np.abs(d).max() <= tol * max(kap) * size, np.abs(d).max()

    v0 = np.array([drive[0] / kap[0], 0, 0, drive[1] / kap[2]], complex)
    v, ok, resid = polish(v0)
    if not ok:
        T = duration or 40.0 / min(kap)
        sol = solve_ivp(_real_rhs(gp, gm, kap, drive), (0.0, T), np.concatenate([v0.real, v0.imag]),
                        method="LSODA", rtol=1e-9, atol=1e-12 * max(np.abs(v0).max(), 1.0))
        if sol.status != 0:
            raise StepFailure(sol.message)
        v, ok, resid = polish(sol.y[:4, -1] + 1j * sol.y[4:, -1])
    if not ok:
        raise StepFailure(f"no steady state: residual {resid:.3g}")
    return state.with_vector(v)


def smallsignal_efficiency(g, Q, Q_M, omega_0, omega_c, P0, P_M, sidebands="both", x_opt=1.0, x_mw=1.0):
    """Anti-Stokes photon-number conversion efficiency from the driven steady state.

    Each mode has one port carrying the fraction ``x`` of its total
    amplitude decay ``kappa = omega / (2 Q)``: ``x_opt`` for the pump and
    sidebands, ``x_mw`` for the microwave mode. A port with external rate
    ``kappa_ex`` drives the mode with ``sqrt(2 kappa_ex) s_in`` and emits
    ``2 kappa_ex |x|^2`` photons per second. The small-signal result is
    ``64 x_opt^2 x_mw g^2 Q^2 Q_M P0 / (hbar omega_0^3 omega_c)``, so the
    default of coupling-limited ports reproduces :func:`photon_efficiency`.
    Returns ``b_plus`` photons out per microwave photon in.
    """
    for x in (x_opt, x_mw):
        if not 0 < x <= 1:
            raise ValueError("coupling fractions must lie in (0, 1]")
    w0, wc = float(omega_0), float(omega_c)
    ka, kb, kc = kappa_from_q(w0, Q), kappa_from_q(w0, Q), kappa_from_q(wc, Q_M)
    s_a = np.sqrt(P0 / (HBAR * w0))
    s_c = np.sqrt(P_M / (HBAR * wc))
    state = ModeAmplitudes(
        kappa_a=ka,
        kappa_b=kb,
        kappa_c=kc,
        drive_a=np.sqrt(2 * x_opt * ka) * s_a,
        drive_c=np.sqrt(2 * x_mw * kc) * s_c,
    )
    ss = steady_state(state, g, sidebands)
    out = 2 * x_opt * kb * abs(ss.b_plus) ** 2
    return float(out / s_c**2)
