"""Axisymmetric finite-element eigenmodes of the ring resonator.

Fields vary as ``exp(i m phi)`` with ``m`` the azimuthal number. The
unknown is the magnetic field on linear nodal triangles, written as
``H = (u_r, -i u_phi, u_z)`` with real ``u``, which makes the pencil real
symmetric. A grad-div penalty keeps the divergence-free gradient modes away
from zero. The electric field is recovered as ``E ~ curl H / eps``.

Discrete problem::

    K u = k0**2 M u,   k0 = omega / c

with

    K = int (1/eps_r) |curl H|^2 + s |div H|^2  r dr dz
    M = int |H|^2 r dr dz
"""

import logging
import copy
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constants import C_LIGHT, Frequency
from .geometry import POST, REGIONS, RING, VACUUM

log = logging.getLogger(__name__)


class AssemblyFailure(ValueError):
    pass


class ConvergenceFailure(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class OutOfWindow(ValueError):
    pass


COMPONENTS = ("r", "phi", "z")


def triangle_quadrature(n):
    """Collapsed Gauss-Legendre rule on the reference triangle.

    Returns barycentric points (n*n, 3) and weights summing to 1; exact for
    polynomials of degree ``2n - 2``.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    l1 = u.ravel()
    l2 = (v * (1 - u)).ravel()
    weights = (wu * wv * (1 - u)).ravel() * 2
    return np.column_stack([l1, l2, 1 - l1 - l2]), weights


def _bary_gradients(mesh):
    p = mesh.nodes[mesh.triangles]  # (T, 3, 2)
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    dr = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / area2[:, None]
    dz = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / area2[:, None]
    return 0.5 * area2, dr, dz, x


_EDGE_PAIRS = ((0, 1), (1, 2), (2, 0))


def _basis(order, bary, gr, gz):
    """Shape functions and their (r, z) gradients at one barycentric point.

    ``gr``/``gz`` are barycentric gradients, shape (T, 3). Returns N with
    shape (nb,) and gradients with shape (T, nb).
    """
    if order == 1:
        return bary.copy(), gr, gz
    l = bary
    N = np.empty(6)
    dNr = np.empty((gr.shape[0], 6))
    dNz = np.empty_like(dNr)
    for i in range(3):
        N[i] = l[i] * (2 * l[i] - 1)
        dNr[:, i] = (4 * l[i] - 1) * gr[:, i]
        dNz[:, i] = (4 * l[i] - 1) * gz[:, i]
    for k, (i, j) in enumerate(_EDGE_PAIRS):
        N[3 + k] = 4 * l[i] * l[j]
        dNr[:, 3 + k] = 4 * (l[i] * gr[:, j] + l[j] * gr[:, i])
        dNz[:, 3 + k] = 4 * (l[i] * gz[:, j] + l[j] * gz[:, i])
    return N, dNr, dNz


def _field_operators(N, dr, dz, r, m):
    """Per-element linear maps from local DOFs to curl/div pieces.

    Local DOF order is ``3 * local_basis + component``. Returns arrays of
    shape (T, 3 nb) for the three curl parts, the divergence and the field
    components.
    """
    T, nb = dr.shape
    inv_r = (1.0 / r)[:, None]
    zeros = np.zeros((T, nb))
    Nb = np.broadcast_to(N, (T, nb))

    def pack(ur, up, uz):
        out = np.empty((T, 3 * nb))
        out[:, 0::3], out[:, 1::3], out[:, 2::3] = ur, up, uz
        return out

    curl_r = pack(zeros, dz, m * Nb * inv_r)
    curl_phi = pack(dz, zeros, -dr)
    curl_z = pack(m * Nb * inv_r, Nb * inv_r + dr, zeros)
    div = pack(dr + Nb * inv_r, m * Nb * inv_r, dz)
    h_r = pack(Nb, zeros, zeros)
    h_phi = pack(zeros, Nb, zeros)
    h_z = pack(zeros, zeros, Nb)
    return curl_r, curl_phi, curl_z, div, (h_r, h_phi, h_z)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Scalar Lagrange DOFs: mesh vertices first, then edge midpoints (order 2)."""

    order: int
    cell_dofs: np.ndarray  # (T, nb)
    coords: np.ndarray  # (n_dofs, 2)

    @property
    def n_dofs(self):
        return len(self.coords)


def build_dofmap(mesh, order):
    if order == 1:
        return DofMap(1, mesh.triangles.copy(), mesh.nodes.copy())
    if order != 2:
        raise AssemblyFailure("element order must be 1 or 2")
    e = np.concatenate([mesh.triangles[:, list(p)] for p in _EDGE_PAIRS])
    e.sort(axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel().reshape(3, -1).T
    cell = np.hstack([mesh.triangles, mesh.n_nodes + inv])
    mid = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    return DofMap(2, cell, np.vstack([mesh.nodes, mid]))


def _outer(B, weight):
    return np.einsum("t,ti,tj->tij", weight, B, B)


def region_permittivity(mesh, indices):
    """Per-triangle relative permittivity from a ``{region: index}`` map."""
    eps = np.empty(mesh.n_triangles)
    for k, name in enumerate(REGIONS):
        sel = mesh.region == k
        if not sel.any():
            continue
        if name == "vacuum":
            n = indices.get("vacuum", 1.0)
        elif name not in indices:
            raise AssemblyFailure(f"no microwave index given for region {name!r}")
        else:
            n = indices[name]
        if not n >= 1.0:
            raise AssemblyFailure(f"index for {name!r} must be >= 1, got {n}")
        eps[sel] = n * n
    return eps


@dataclass(eq=False)
class Operators:
    """Reduced stiffness/mass pencil plus the map back to all DOFs.

    Full DOF ordering is basis-major: ``3 * dof + component``.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    prolongation: sp.csr_matrix
    mesh: object
    azimuthal_order: int
    eps: np.ndarray  # relative permittivity per triangle
    penalty: float
    dofmap: DofMap
    symmetry: str = None
    K_curl: sp.csr_matrix = None  # curl-curl part alone (electric energy)
    K_ring: sp.csr_matrix = None  # curl-curl part over ring triangles

    def ring_fraction(self, x):
        """Electric-energy fraction inside the ring for reduced vectors ``x``."""
        x = np.asarray(x)
        num = np.einsum("i...,i...->...", x, self.K_ring @ x)
        den = np.einsum("i...,i...->...", x, self.K_curl @ x)
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)

    def curl_share(self, x):
        """Curl-curl share of the stiffness energy: near 1 for physical
        modes, near 0 for the gradient fields the penalty pushes up."""
        x = np.asarray(x)
        num = np.einsum("i...,i...->...", x, self.K_curl @ x)
        den = np.einsum("i...,i...->...", x, self.K @ x)
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)

    @property
    def shape(self):
        return self.K.shape

    @property
    def n_full(self):
        return self.prolongation.shape[0]


# parity of (H_r, H_phi, H_z) under z -> -z for each symmetry family
PARITY = {"r": (-1, -1, 1), "z": (1, 1, -1)}
SYMMETRY_FAMILIES = tuple(PARITY)


def _constraints(mesh, dofmap, m, symmetry=None):
    """Prolongation from free DOFs to the full vector.

    PEC wall: normal H vanishes. Axis: m = 0 keeps only H_z, m = 1 ties
    u_phi = -u_r and drops H_z, m >= 2 clamps everything.

    With ``symmetry`` the unknowns live on ``z >= 0`` only and the lower
    half is filled in by reflection. Family ``"r"`` (E mostly in the
    r-phi plane) has H_r, H_phi odd in z; family ``"z"`` has H_z odd.
    """
    n = dofmap.n_dofs
    xy = dofmap.coords
    r_max = mesh.nodes[:, 0].max()
    z_max = np.abs(mesh.nodes[:, 1]).max()
    tol = 1e-9 * max(r_max, z_max)
    fixed = np.zeros((n, 3), dtype=bool)
    fixed[np.abs(xy[:, 0] - r_max) < tol, 0] = True
    fixed[np.abs(np.abs(xy[:, 1]) - z_max) < tol, 2] = True

    mirror = None
    if symmetry is not None:
        if symmetry not in PARITY:
            raise AssemblyFailure(f"symmetry must be one of {SYMMETRY_FAMILIES} or None")
        parity = np.array(PARITY[symmetry])
        mirror = _dof_mirror(xy, tol)
        lower = xy[:, 1] < -tol
        plane = np.abs(xy[:, 1]) <= tol
        fixed[lower, :] = True
        fixed[np.ix_(plane, parity < 0)] = True

    axis = np.flatnonzero(xy[:, 0] <= tol)
    tied = np.array([], dtype=int)
    if m == 0:
        fixed[axis, 0] = fixed[axis, 1] = True
    elif m == 1:
        fixed[axis, 2] = True
        tied = axis[~fixed[axis, 0]]
        fixed[axis, 1] = True  # u_phi eliminated through the tie
    else:
        fixed[axis, :] = True

    free = np.flatnonzero(~fixed.ravel())
    col_of = -np.ones(3 * n, dtype=int)
    col_of[free] = np.arange(len(free))
    rows = [free, 3 * tied + 1]
    cols = [np.arange(len(free)), col_of[3 * tied]]
    vals = [np.ones(len(free)), -np.ones(len(tied))]
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    P = sp.csr_matrix((vals, (rows, cols)), shape=(3 * n, len(free)))
    if mirror is None:
        return P
    # reflect: lower-half rows copy their mirror row times the parity
    src = np.arange(3 * n)
    sign = np.ones(3 * n)
    low = np.flatnonzero(lower)
    for k in range(3):
        src[3 * low + k] = 3 * mirror[low] + k
        sign[3 * low + k] = parity[k]
    S = sp.csr_matrix((sign, (np.arange(3 * n), src)), shape=(3 * n, 3 * n))
    return (S @ P).tocsr()


def _dof_mirror(coords, tol):
    """Index of the DOF at (r, -z) for every DOF."""
    from scipy.spatial import cKDTree

    dist, idx = cKDTree(coords).query(coords * np.array([1.0, -1.0]))
    if (dist > tol).any():
        raise AssemblyFailure("mesh is not mirror-symmetric about z = 0")
    return idx


_CHUNK = 20000


def assemble(mesh, indices, azimuthal_order, penalty=1.0, order=2, symmetry=None, allow_axisymmetric=False):
    """Assemble the reduced pencil ``(K, M)`` for one azimuthal order.

    Parameters
    ----------
    mesh : Mesh
    indices : dict
        Microwave refractive index per region name (``ring``, ``post``;
        vacuum defaults to 1).
    azimuthal_order : int
        ``m = L_c >= 1``. ``m = 0`` is refused unless ``allow_axisymmetric``
        is set; it only makes sense for closed-cavity checks.
    penalty : float
        Weight of the grad-div term.
    order : int
        Lagrange element order, 1 or 2.
    symmetry : {None, "r", "z"}
        Restrict to one mirror-symmetry family. Needs a mesh from
        :func:`generate_mesh` or :func:`cavity_mesh`; only the upper half is
        integrated and the pencil is half the size.
    """
    m = int(azimuthal_order)
    if m < 0 or (m == 0 and not allow_axisymmetric):
        raise AssemblyFailure(
            f"azimuthal order must be >= 1 (got {m}); pass allow_axisymmetric=True for m = 0 cavity checks"
        )
    if mesh.region.shape != (mesh.n_triangles,):
        raise AssemblyFailure("region tags do not match the triangle count")
    if not np.isin(mesh.region, (VACUUM, RING, POST)).all():
        raise AssemblyFailure("unknown region tag in mesh")
    if symmetry is not None and not getattr(mesh, "symmetric", False):
        raise AssemblyFailure("symmetry families need a mirror-symmetric mesh")
    eps = region_permittivity(mesh, indices)
    dofmap = build_dofmap(mesh, order)
    area, gr, gz, x = _bary_gradients(mesh)
    qp, qw = triangle_quadrature(order + 2)
    # the lower half mirrors the upper one, so its contribution is a copy
    T = mesh.n_half_triangles if symmetry is not None else mesh.n_triangles
    nl = 3 * dofmap.cell_dofs.shape[1]
    n = 3 * dofmap.n_dofs

    ring = (mesh.region == RING).astype(float)
    parts = {"curl": [], "div": [], "mass": [], "ring": []}
    idx_r, idx_c = [], []
    for lo in range(0, T, _CHUNK):
        sl = slice(lo, min(T, lo + _CHUNK))
        Kc = np.zeros((sl.stop - sl.start, nl, nl))
        Kd = np.zeros_like(Kc)
        Me = np.zeros_like(Kc)
        for bary, w in zip(qp, qw):
            r = x[sl] @ bary
            wt = w * area[sl] * r
            N, dNr, dNz = _basis(order, bary, gr[sl], gz[sl])
            curl_r, curl_phi, curl_z, div, comps = _field_operators(N, dNr, dNz, r, m)
            ce = wt / eps[sl]
            Kc += _outer(curl_r, ce) + _outer(curl_phi, ce) + _outer(curl_z, ce)
            Kd += _outer(div, wt)
            for B in comps:
                Me += _outer(B, wt)
        dofs = (3 * dofmap.cell_dofs[sl, :, None] + np.arange(3)).reshape(-1, nl)
        idx_r.append(np.repeat(dofs, nl, axis=1).ravel())
        idx_c.append(np.tile(dofs, (1, nl)).ravel())
        parts["curl"].append(Kc.ravel())
        parts["div"].append(Kd.ravel())
        parts["mass"].append(Me.ravel())
        parts["ring"].append((Kc * ring[sl, None, None]).ravel())
    rows, cols = np.concatenate(idx_r), np.concatenate(idx_c)
    P = _constraints(mesh, dofmap, m, symmetry).tocsr()

    def reduce(key):
        A = sp.csr_matrix((np.concatenate(parts.pop(key)), (rows, cols)), shape=(n, n))
        A = P.T @ A @ P
        # scrub round-off asymmetry
        return ((A + A.T) * 0.5).tocsr()

    Kcurl, Kdiv, Mr, Kring = reduce("curl"), reduce("div"), reduce("mass"), reduce("ring")
    Kr = (Kcurl + penalty * Kdiv).tocsr() if penalty else Kcurl
    ops = Operators(Kr, Mr, P, mesh, m, eps, penalty, dofmap, symmetry)
    ops.K_curl, ops.K_ring = Kcurl, Kring
    return ops


def electric_field(ops, u_full, bary=None):
    """Electric field (E_r, E_phi, E_z) per triangle from a full H vector.

    Evaluated at barycentric point ``bary`` (default: centroid) in every
    triangle. The overall scale is arbitrary: with ``curl H = (i a, b, -i c)``
    the field is ``(-a, i b, c) / eps``.
    """
    mesh = ops.mesh
    bary = np.full(3, 1 / 3) if bary is None else np.asarray(bary, dtype=float)
    _, gr, gz, x = _bary_gradients(mesh)
    r = x @ bary
    N, dNr, dNz = _basis(ops.dofmap.order, bary, gr, gz)
    curl_r, curl_phi, curl_z, _, _ = _field_operators(N, dNr, dNz, r, ops.azimuthal_order)
    nl = 3 * ops.dofmap.cell_dofs.shape[1]
    loc = u_full[(3 * ops.dofmap.cell_dofs[:, :, None] + np.arange(3)).reshape(-1, nl)]
    a = np.einsum("ti,ti->t", curl_r, loc)
    b = np.einsum("ti,ti->t", curl_phi, loc)
    c = np.einsum("ti,ti->t", curl_z, loc)
    return np.column_stack([-a, 1j * b, c]) / ops.eps[:, None]


# corners are sampled slightly inside each triangle so 1/r stays finite on the axis
_CORNER_SHRINK = 1e-4


def corner_fields(ops, u_full):
    """(T, 3, 3) electric field at each triangle corner, seen from inside that triangle."""
    out = np.empty((ops.mesh.n_triangles, 3, 3), dtype=complex)
    for k in range(3):
        bary = np.full(3, _CORNER_SHRINK / 2)
        bary[k] = 1 - _CORNER_SHRINK
        out[:, k, :] = electric_field(ops, u_full, bary)
    return out


def field_quadrature(ops, u_full):
    """Electric field at quadrature points.

    Returns ``(weights, E)`` with weights of shape (T, Q) including the
    ``r dr dz`` measure (no 2 pi) and ``E`` of shape (T, Q, 3).
    """
    area, _, _, x = _bary_gradients(ops.mesh)
    qp, qw = triangle_quadrature(ops.dofmap.order + 2)
    E = np.stack([electric_field(ops, u_full, b) for b in qp], axis=1)
    wts = area[:, None] * qw[None, :] * (x @ qp.T)
    return wts, E


def _average_corners(mesh, corner, select=None):
    """Nodal average of per-triangle corner values, optionally over a subset."""
    w = mesh.areas()
    tris = mesh.triangles
    if select is not None:
        tris, corner, w = tris[select], corner[select], w[select]
    acc = np.zeros((mesh.n_nodes, corner.shape[-1]), dtype=corner.dtype)
    tot = np.zeros(mesh.n_nodes)
    for k in range(3):
        np.add.at(acc, tris[:, k], corner[:, k] * w[:, None])
        np.add.at(tot, tris[:, k], w)
    return acc / np.where(tot > 0, tot, 1.0)[:, None], tot > 0


@dataclass(eq=False)
class MicrowaveModeSolution:
    """One computed eigenmode.

    ``field`` holds nodal (E_r, E_phi, E_z), complex (E_phi is imaginary when
    E_r, E_z are real), scaled so the largest nodal ``|E|`` is 1.
    ``corner_field`` keeps the same field per triangle corner without
    averaging across material interfaces, where normal E jumps.
    """

    L_c: int
    omega_c: Frequency
    field: np.ndarray
    corner_field: np.ndarray = dc_field(repr=False)
    mesh: object = dc_field(repr=False, default=None)
    eps: np.ndarray = dc_field(repr=False, default=None)
    quad_weights: np.ndarray = dc_field(repr=False, default=None)
    quad_field: np.ndarray = dc_field(repr=False, default=None)
    residual: float = 0.0
    ring_energy_fraction: float = 0.0
    Q_M: float = None
    gamma_abs: float = None
    gamma_nl: float = None
    family: str = None

    def __post_init__(self):
        if self.Q_M is None and self.gamma_abs is not None and self.gamma_nl is not None:
            self.Q_M = self.omega_c.value / (self.gamma_abs + self.gamma_nl)

    @property
    def gamma(self):
        """Total loss rate when both parts are known."""
        if self.gamma_abs is None or self.gamma_nl is None:
            return None
        return self.gamma_abs + self.gamma_nl

    @property
    def f_ghz(self):
        return self.omega_c.ghz

    def with_losses(self, Q_M=None, gamma_abs=None, gamma_nl=None):
        out = copy.copy(self)
        out.Q_M, out.gamma_abs, out.gamma_nl = Q_M, gamma_abs, gamma_nl
        out.__post_init__()
        return out

    def component_power(self, region=RING):
        """Integrated ``|E_k|^2`` per component over a region."""
        sel = self.mesh.region == region
        return (np.abs(self.quad_field[sel]) ** 2 * self.quad_weights[sel][..., None]).sum(axis=(0, 1))

    def dominant_component(self, region=RING):
        """``"r"``, ``"phi"`` or ``"z"``: the component with the most ring power."""
        return COMPONENTS[int(np.argmax(self.component_power(region)))]

    def component_fraction(self, component, region=RING):
        p = self.component_power(region)
        return float(p[COMPONENTS.index(component)] / p.sum())

    def region_nodal_field(self, region=RING):
        """Nodal field averaged over triangles of one region; NaN off-region."""
        nodal, touched = _average_corners(self.mesh, self.corner_field, self.mesh.region == region)
        nodal[~touched] = np.nan
        return nodal

    def rescaled(self, factor):
        """Copy with the field multiplied by ``factor`` (no renormalisation)."""
        out = copy.copy(self)
        out.field = self.field * factor
        out.corner_field = self.corner_field * factor
        out.quad_field = self.quad_field * factor
        return out


def _start_vector(n, seed):
    return np.random.default_rng(seed).standard_normal(n)


@dataclass(eq=False)
class EigenSet:
    """Raw eigenpairs before field recovery, sorted by frequency."""

    ops: Operators
    lam: np.ndarray  # (omega / c)^2
    vectors: np.ndarray  # reduced DOFs, one column per mode
    residuals: np.ndarray
    ring_fractions: np.ndarray
    curl_shares: np.ndarray = None

    @property
    def omega(self):
        return C_LIGHT * np.sqrt(np.maximum(self.lam, 0.0))

    def __len__(self):
        return len(self.lam)

    def solution(self, k):
        return _make_solution(self.ops, self.lam[k], self.vectors[:, k], float(self.residuals[k]))


def solve_modes(ops, target, count=6, tol=1e-8, seed=0, maxiter=None):
    """Eigenpairs of ``ops`` nearest ``target`` by shift-invert Lanczos.

    Parameters
    ----------
    ops : Operators
    target : Frequency or float
        Shift, as a :class:`Frequency` or angular frequency in rad/s.
    count : int
        Number of modes returned, sorted by frequency.
    tol : float
        Bound on ``||K x - lam M x|| / ||lam M x||`` for every returned pair.

    Raises
    ------
    ConvergenceFailure
        If ARPACK stops early or a residual exceeds ``tol``.
    """
    eig = _eigenpairs(ops, target, count, tol, seed, maxiter)
    return [eig.solution(k) for k in range(len(eig))]


def _eigenpairs(ops, target, count, tol, seed, maxiter):
    omega_t = float(target)
    if not omega_t > 0:
        raise ValueError("target frequency must be positive")
    if count < 1:
        raise ValueError("count must be >= 1")
    n = ops.K.shape[0]
    count = min(count, n - 2)
    sigma = (omega_t / C_LIGHT) ** 2
    try:
        vals, vecs = spla.eigsh(
            ops.K / sigma,
            k=count,
            M=ops.M,
            sigma=1.0,
            which="LM",
            v0=_start_vector(n, seed),
            tol=tol * 1e-2,
            maxiter=maxiter,
        )
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(f"shift-invert iteration did not converge: {exc}") from exc
    lam = vals * sigma
    order = np.argsort(lam)
    lam, vecs = lam[order], vecs[:, order]
    Mx = ops.M @ vecs
    res = np.linalg.norm(ops.K @ vecs - Mx * lam, axis=0)
    res /= np.linalg.norm(Mx, axis=0) * np.maximum(np.abs(lam), sigma * 1e-12)
    res = np.nan_to_num(res, nan=np.inf)
    if (res > tol).any():
        raise ConvergenceFailure(
            f"eigen-residual {res.max():.3g} exceeds {tol:g}", residual=float(res.max())
        )
    if ops.K_curl is None:
        return EigenSet(ops, lam, vecs, res, np.full(len(lam), np.nan))
    return EigenSet(ops, lam, vecs, res, ops.ring_fraction(vecs), ops.curl_share(vecs))


def eigenpairs(ops, target, count=6, tol=1e-8, seed=0, maxiter=None):
    """Like :func:`solve_modes` but without field recovery (cheap screening)."""
    return _eigenpairs(ops, target, count, tol, seed, maxiter)


def _quad_fraction(ops, wts, Eq):
    energy = (ops.eps[:, None] * (np.abs(Eq) ** 2).sum(axis=-1) * wts).sum(axis=1)
    total = energy.sum()
    return float(energy[ops.mesh.region == RING].sum() / total) if total > 0 else 0.0


def _make_solution(ops, lam, vec, residual):
    mesh = ops.mesh
    u = ops.prolongation @ vec
    corner = corner_fields(ops, u)
    wts, Eq = field_quadrature(ops, u)
    frac = float(ops.ring_fraction(vec)) if ops.K_ring is not None else _quad_fraction(ops, wts, Eq)

    nodal, _ = _average_corners(mesh, corner)
    mag = np.linalg.norm(nodal, axis=1)
    j = int(np.argmax(mag))
    comp = int(np.argmax(np.abs(nodal[j])))
    # unit max |E| with the dominant component of the peak node real-positive
    norm = abs(nodal[j, comp]) / (mag[j] * nodal[j, comp]) if mag[j] > 0 else 1.0
    return MicrowaveModeSolution(
        L_c=ops.azimuthal_order,
        omega_c=Frequency(C_LIGHT * np.sqrt(max(lam, 0.0))),
        field=nodal * norm,
        corner_field=corner * norm,
        mesh=mesh,
        eps=ops.eps,
        quad_weights=wts,
        quad_field=Eq * norm,
        residual=residual,
        ring_energy_fraction=frac,
        family=ops.symmetry,
    )


def mode_volume(solution, weighting="unit"):
    """Mode volume in m^3.

    ``"unit"``: integral of ``|E|^2`` over the window with the stored
    unit-max normalisation. ``"energy"``: integral of ``eps |E|^2`` divided
    by its maximum, the usual electric-energy definition.
    """
    w = solution.quad_weights * 2 * np.pi
    e2 = (np.abs(solution.quad_field) ** 2).sum(axis=-1)
    if weighting == "unit":
        return float((e2 * w).sum())
    if weighting == "energy":
        dens = solution.eps[:, None] * e2
        return float((dens * w).sum() / dens.max())
    raise ValueError("weighting must be 'unit' or 'energy'")


def field_probe(solution, r, z, region=None):
    """Field (E_r, E_phi, E_z) at ``(r, z)`` by linear interpolation of nodal values.

    With ``region`` the nodal values are averaged only over triangles of
    that region, which avoids smearing the jump of normal E at material
    interfaces.

    Raises
    ------
    OutOfWindow
        If the point lies outside the meshed window.
    """
    tri, bary = solution.mesh.locate(r, z)
    if tri < 0:
        raise OutOfWindow(f"point (r={r:.6g} m, z={z:.6g} m) is outside the computation window")
    nodal = solution.field if region is None else solution.region_nodal_field(region)
    vals = nodal[solution.mesh.triangles[tri]]
    if region is not None and np.isnan(vals).any():
        # a vertex sits outside the region; fall back to the plain average there
        vals = np.where(np.isnan(vals), solution.field[solution.mesh.triangles[tri]], vals)
    return bary @ vals


def export_vtk(solution, path):
    """Write the field map as a legacy VTK grid (|E| and E components as point data)."""
    from .vtk import write_unstructured_grid

    f = solution.field
    point = {"abs_E": np.linalg.norm(f, axis=1), "E_r": f[:, 0], "E_phi": f[:, 1], "E_z": f[:, 2]}
    cell = {"region": solution.mesh.region.astype(float)}
    write_unstructured_grid(
        path,
        solution.mesh.nodes,
        solution.mesh.triangles,
        point,
        cell,
        title=f"L_c={solution.L_c} f={solution.f_ghz:.6f} GHz",
    )


# ---------------------------------------------------------------- dispersion


GUIDED_FRACTION = 0.5
TIE_FRACTION = 0.01


def microwave_indices(geometry, polarization="e"):
    """Per-region microwave index map for a geometry's named materials.

    ``polarization`` picks the ordinary (``"o"``) or extraordinary (``"e"``)
    value of each crystal.
    """
    from .materials import material_lookup

    return {
        "ring": material_lookup(geometry.ring_material).n_mw(polarization),
        "post": material_lookup(geometry.post_material).n_mw(polarization),
    }


@dataclass
class DispersionRow:
    L_c: int
    omega_c: Frequency = None  # None marks a gap
    ring_energy_fraction: float = float("nan")
    family: str = None
    flags: tuple = ()

    @property
    def f_ghz(self):
        return float("nan") if self.omega_c is None else self.omega_c.ghz

    @property
    def is_gap(self):
        return self.omega_c is None


@dataclass
class DispersionTable:
    """Fundamental ring mode per azimuthal number, sorted by ``L_c``."""

    rows: list
    solutions: dict = dc_field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def L_c(self):
        return np.array([r.L_c for r in self.rows])

    @property
    def omega(self):
        """Angular frequencies, NaN at gaps."""
        return np.array([np.nan if r.is_gap else r.omega_c.value for r in self.rows])

    def lookup(self, L_c):
        for r in self.rows:
            if r.L_c == L_c:
                return r
        raise KeyError(L_c)

    @property
    def monotonic(self):
        w = self.omega[np.isfinite(self.omega)]
        return bool(np.all(np.diff(w) > 0))

    def to_csv(self, path=None):
        lines = ["L_c,f_GHz,ring_energy_fraction"]
        for r in self.rows:
            if r.is_gap:
                lines.append(f"{r.L_c},nan,nan")
            else:
                lines.append(f"{r.L_c},{r.f_ghz:.6f},{r.ring_energy_fraction:.6f}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        import csv

        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
            header = [h.strip() for h in next(reader)]
            try:
                iL, iF = header.index("L_c"), header.index("f_GHz")
            except ValueError as exc:
                raise ValueError(f"{path}: expected columns L_c and f_GHz, got {header}") from exc
            iR = header.index("ring_energy_fraction") if "ring_energy_fraction" in header else None
            for rec in reader:
                if not rec:
                    continue
                f = float(rec[iF])
                frac = float(rec[iR]) if iR is not None else float("nan")
                rows.append(
                    DispersionRow(int(rec[iL]), None if not np.isfinite(f) else Frequency.from_ghz(f), frac)
                )
        rows.sort(key=lambda r: r.L_c)
        return cls(rows)

    @classmethod
    def from_arrays(cls, L_c, f_ghz):
        rows = [DispersionRow(int(L), Frequency.from_ghz(float(f)), 1.0) for L, f in zip(L_c, f_ghz)]
        rows.sort(key=lambda r: r.L_c)
        return cls(rows)


def select_fundamental(candidates, tie=TIE_FRACTION):
    """Pick the fundamental ring mode among candidate solutions.

    Highest ring-energy fraction wins; fractions within ``tie`` of the best
    are resolved toward the lower frequency.
    """
    if not candidates:
        return None
    best = max(c.ring_energy_fraction for c in candidates)
    close = [c for c in candidates if c.ring_energy_fraction >= best - tie]
    return min(close, key=lambda c: c.omega_c.value)


def _lowest_guided(ops, target, count, tol, min_fraction, retries=3):
    """Lowest-frequency mode of ``ops`` with ring fraction >= ``min_fraction``.

    Returns a full :class:`MicrowaveModeSolution` or None. When no guided
    mode is near the shift, the shift is raised and the search repeated.
    Gradient (non-physical) modes are skipped by their curl share.
    """
    omega = float(target)
    for _ in range(retries + 1):
        eig = eigenpairs(ops, omega, count=count, tol=tol)
        guided = np.flatnonzero((eig.ring_fractions >= min_fraction) & (eig.curl_shares >= 0.5))
        if len(guided):
            return eig.solution(int(guided[0]))
        omega = 1.25 * eig.omega.max()
    return None


def fundamental_mode(
    mesh,
    indices,
    L_c,
    target,
    family=None,
    count=8,
    tol=1e-8,
    penalty=1.0,
    order=2,
    min_fraction=GUIDED_FRACTION,
):
    """Fundamental ring mode at one ``L_c``.

    Each symmetry family (``"r"``: E in the ring plane, ``"z"``: E along
    the axis) contributes its lowest ring-guided mode; :func:`select_fundamental`
    then picks between them. ``family`` restricts the search to one family.
    Returns the solution (its ``family`` attribute names the winner) or
    None when no guided mode is found.
    """
    families = SYMMETRY_FAMILIES if family is None else (family,)
    picks = []
    for fam in families:
        ops = assemble(mesh, indices, L_c, penalty=penalty, order=order, symmetry=fam)
        sol = _lowest_guided(ops, target, count, tol, min_fraction)
        if sol is not None:
            picks.append(sol)
    return select_fundamental(picks)


def default_edge_length(geometry, indices, target_frequency_hz):
    """Ring edge length: a fifth of the thickness or a sixth of the in-ring wavelength."""
    lam = C_LIGHT / (target_frequency_hz * indices["ring"])
    return min(geometry.thinnest_feature / 5, lam / 6)


def dispersion_scan(
    geometry,
    indices,
    L_range,
    target_ghz=None,
    family=None,
    edge_length=None,
    margin=None,
    rim_segments=32,
    threads=1,
    count=8,
    tol=1e-8,
    penalty=1.0,
    order=2,
    keep_solutions=False,
    mesh=None,
):
    """Fundamental ring-mode dispersion over a contiguous range of ``L_c``.

    A pilot solve at the middle ``L_c`` (shifted to ``target_ghz``, default
    ``c L / (2 pi R n_eff)`` with ``n_eff = 2``) picks the symmetry family
    when ``family`` is None and fixes the effective index that seeds every
    other shift. The remaining points are independent tasks, so the table
    does not depend on ``threads``.

    Rows without a guided mode are kept as gaps and flagged; rows breaking
    the increase of frequency with ``L_c`` are flagged ``"non-monotonic"``.
    """
    from concurrent.futures import ThreadPoolExecutor

    Ls = [int(L) for L in L_range]
    if not Ls:
        raise ValueError("empty L_c range")
    if any(b - a != 1 for a, b in zip(Ls, Ls[1:])):
        raise ValueError("L_c range must be contiguous and increasing")
    if Ls[0] < 1:
        raise ValueError("L_c must be >= 1")
    geometry.validate()
    L0 = Ls[len(Ls) // 2]
    if target_ghz is None:
        target_ghz = C_LIGHT * L0 / (2 * np.pi * geometry.R * 2.0) / 1e9
    f_hi = target_ghz * 1e9 * max(Ls) / L0
    if mesh is None:
        from .geometry import cross_section_profile, generate_mesh

        profile = cross_section_profile(
            geometry, rim_segments=rim_segments, margin=margin, target_frequency_hz=target_ghz * 1e9
        )
        h = edge_length or default_edge_length(geometry, indices, f_hi)
        mesh = generate_mesh(profile, h)
    log.info("dispersion scan: %d nodes, %d triangles", mesh.n_nodes, mesh.n_triangles)

    def task(L, target_hz, fam):
        return L, fundamental_mode(
            mesh, indices, L, Frequency(2 * np.pi * target_hz), fam, count, tol, penalty, order
        )

    pilot = task(L0, target_ghz * 1e9, family)
    if pilot[1] is None:
        raise ConvergenceFailure(f"no ring-guided mode found at pilot L_c={L0} near {target_ghz:g} GHz")
    fam = pilot[1].family
    f0 = pilot[1].omega_c.hz
    # shifts a little below the pilot frequency scaled by L
    targets = {L: 0.9 * f0 * L / L0 for L in Ls if L != L0}
    if threads and threads > 1 and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rest = list(pool.map(lambda L: task(L, targets[L], fam), targets))
    else:
        rest = [task(L, targets[L], fam) for L in targets]

    results = sorted([pilot] + rest, key=lambda t: t[0])
    rows, sols = [], {}
    prev = None
    for L, sol in results:
        if sol is None:
            log.warning("no ring-guided mode found at L_c=%d", L)
            rows.append(DispersionRow(L, None, float("nan"), fam, ("gap",)))
            continue
        flags = ()
        if prev is not None and sol.omega_c.value <= prev:
            flags = ("non-monotonic",)
            log.warning("dispersion not increasing at L_c=%d", L)
        prev = sol.omega_c.value
        rows.append(DispersionRow(L, sol.omega_c, sol.ring_energy_fraction, sol.family, flags))
        if keep_solutions:
            sols[L] = sol
    return DispersionTable(rows, sols)
