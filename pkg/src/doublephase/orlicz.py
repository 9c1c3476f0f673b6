"""Modulars, Luxemburg norms and embedding constants for t^p + a(x) t^q.

The modular of a field is the quadrature sum of H(x, |u|) over cell centers;
the Luxemburg norm is the unique scale gamma with modular(u / gamma) = 1,
found by bracketing and bisection (the map gamma -> modular(u/gamma) is
continuous and strictly decreasing whenever u is not identically zero).
A closed form exists whenever the weighted q-integral is positive and is used
both as a fast path and as a cross-check of the bisection route.

Exponents may be scaled by an integer h (t^{hp} + a t^{hq}) for the
large-exponent limit; once h*q exceeds ~40 the modular is evaluated in
log space so the bisection survives extreme powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateExponentError, FallbackRequired, NumericalError
from .meshes import Field, GradField, gradient

# relative gamma tolerance for the norm bisection; tight enough that the
# unit-ball defect stays below 1e-9 even for large scaled exponents
GAMMA_RTOL = 1e-14
LOG_SPACE_EXPONENT = 40.0


class WeightField:
    """Nonnegative weight a(x) sampled at the cell centers and gradient points.

    ``sup_norm`` is the max over every quadrature point the weight is used at,
    ``l1_norm`` the cell-quadrature integral of a over the domain.
    """

    def __init__(self, mesh, values, grad_values, descriptor="custom"):
        values = np.asarray(values, dtype=float)
        grad_values = np.asarray(grad_values, dtype=float)
        if values.shape != (mesh.n_cells,):
            raise ValueError("weight values do not match the mesh cells")
        n_grad = mesh.gradient_ops().measures.size
        if grad_values.shape != (n_grad,):
            raise ValueError("weight gradient-point values do not match the mesh")
        if np.any(values < 0) or np.any(grad_values < 0):
            raise ValueError("weight must be nonnegative")
        self.mesh = mesh
        self.values = values
        self.grad_values = grad_values
        self.descriptor = descriptor
        self.sup_norm = float(max(values.max(), grad_values.max()))
        self.l1_norm = float(values.sum() * mesh.cell_measure)

    @classmethod
    def constant(cls, mesh, c: float) -> "WeightField":
        n_grad = mesh.gradient_ops().measures.size
        return cls(mesh, np.full(mesh.n_cells, float(c)),
                   np.full(n_grad, float(c)), descriptor=f"constant:{c:g}")

    @classmethod
    def from_function(cls, mesh, fn, descriptor="custom") -> "WeightField":
        cells = mesh.cell_centers()
        pts = mesh.gradient_ops().points
        if mesh.dim == 1:
            return cls(mesh, fn(cells[:, 0]), fn(pts[:, 0]), descriptor)
        return cls(mesh, fn(cells[:, 0], cells[:, 1]), fn(pts[:, 0], pts[:, 1]),
                   descriptor)

    @classmethod
    def from_values(cls, mesh, values, descriptor="file") -> "WeightField":
        """Cell values given directly; 1D face points average adjacent cells."""
        values = np.asarray(values, dtype=float)
        ops = mesh.gradient_ops()
        if ops.to_cell is not None:
            return cls(mesh, values, values.copy(), descriptor)
        # faces: |G| applied to values, normalized by |G| of ones, averages
        # the cells adjacent to each face with the stencil weights
        absg = abs(ops.matrices[0])
        denom = absg @ np.ones(mesh.n_cells)
        grad_values = (absg @ values) / np.where(denom > 0, denom, 1.0)
        return cls(mesh, values, grad_values, descriptor)


def weight_field_from_descriptor(mesh, descriptor: str) -> WeightField:
    """Build a weight from its textual form.

    Grammar: ``constant:c``, ``ramp:c0,c1`` (linear in the first coordinate
    across the bounding box), ``checkerboard:c,k`` (k-by-k blocks alternating
    between c and 0), ``file:path`` (cell values from a field CSV).
    """
    kind, _, arg = descriptor.partition(":")
    if kind == "constant":
        return WeightField.constant(mesh, float(arg))
    if mesh.dim == 1:
        lo, hi = mesh.a, mesh.b
    else:
        lo, hi = mesh.x0, mesh.x1
    if kind == "ramp":
        c0, c1 = (float(s) for s in arg.split(","))

        def ramp(x, *_rest):
            return c0 + (c1 - c0) * (x - lo) / (hi - lo)

        return WeightField.from_function(mesh, ramp, descriptor)
    if kind == "checkerboard":
        c, k = arg.split(",")
        c, k = float(c), int(k)
        if c < 0:
            raise ValueError("checkerboard amplitude must be nonnegative")

        def block_index(t, t0, t1):
            idx = np.floor((t - t0) / (t1 - t0) * k).astype(int)
            return np.clip(idx, 0, k - 1)

        if mesh.dim == 1:
            def checker(x):
                return np.where(block_index(x, lo, hi) % 2 == 0, c, 0.0)
        else:
            def checker(x, y):
                bi = block_index(x, mesh.x0, mesh.x1)
                bj = block_index(y, mesh.y0, mesh.y1)
                return np.where((bi + bj) % 2 == 0, c, 0.0)

        return WeightField.from_function(mesh, checker, descriptor)
    if kind == "file":
        from .meshes import read_field_csv
        u = read_field_csv(arg, mesh)
        return WeightField.from_values(mesh, u.values, descriptor)
    raise ValueError(f"unknown weight descriptor {descriptor!r}")


@dataclass
class NFunctionParams:
    """The double-phase integrand H(x,t) = t^{hp} + a(x) t^{hq}."""

    p: float
    q: float
    a: WeightField
    scale_h: int = 1

    def __post_init__(self):
        if not (self.p > 1.0):
            raise ValueError(f"need p > 1, got p={self.p}")
        if self.q < self.p:
            raise ValueError(f"need p <= q, got p={self.p}, q={self.q}")
        if int(self.scale_h) != self.scale_h or self.scale_h < 1:
            raise ValueError("scale_h must be a positive integer")
        self.scale_h = int(self.scale_h)
        self._check_delta2()

    def _check_delta2(self):
        # spot check of H(x,2t) <= 2^q H(x,t) at three magnitudes per point,
        # in log space so scaled exponents cannot overflow
        hp, hq = self.hp, self.hq
        a = self.a.values
        with np.errstate(divide="ignore"):
            log_a = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), -np.inf)
        for t in (1e-3, 1.0, 1e3):
            lt = np.log(t)
            l2t = np.log(2.0 * t)
            lhs = np.logaddexp(hp * l2t, log_a + hq * l2t)
            rhs = hq * np.log(2.0) + np.logaddexp(hp * lt, log_a + hq * lt)
            if np.any(lhs > rhs + 1e-12):
                raise ValueError("doubling condition violated")

    @property
    def hp(self) -> float:
        return self.scale_h * self.p

    @property
    def hq(self) -> float:
        return self.scale_h * self.q

    @property
    def mesh(self):
        return self.a.mesh

    def with_exponents(self, p, q) -> "NFunctionParams":
        return NFunctionParams(p, q, self.a, self.scale_h)

    def with_scale(self, h) -> "NFunctionParams":
        return NFunctionParams(self.p, self.q, self.a, h)

    def sigma(self, n: int) -> float:
        """Phase-gap exponent n(1/p - 1/q)."""
        return n * (1.0 / self.p - 1.0 / self.q)

    def sandwich_constant(self) -> float:
        """w = 1 + sup(a) + |Omega|."""
        return 1.0 + self.a.sup_norm + self.mesh.total_measure

    def rescale_constant(self) -> float:
        """|Omega| + ||a||_1, the prefactor of the rescaled modular."""
        return self.mesh.total_measure + self.a.l1_norm


@dataclass
class NormResult:
    value: float
    method: str  # "bisection" or "closed_form"
    modular_at_unit: float


def _quad_data(u, H: NFunctionParams):
    """Absolute values, weight samples and measures at the quadrature points."""
    if isinstance(u, Field):
        if u.mesh.n_cells != H.a.values.size:
            raise ValueError("field and weight live on different meshes")
        m = np.full(u.mesh.n_cells, u.mesh.cell_measure)
        return np.abs(u.values), H.a.values, m
    if isinstance(u, GradField):
        if u.measures.size != H.a.grad_values.size:
            raise ValueError("gradient field and weight live on different meshes")
        return u.magnitude, H.a.grad_values, u.measures
    raise TypeError(f"expected Field or GradField, got {type(u).__name__}")


def modular_terms(u, H: NFunctionParams) -> np.ndarray:
    """Per-quadrature-point contributions m * (|u|^hp + a |u|^hq).

    Rearrangement tests compare the sorted term arrays bitwise: a permutation
    of cell values (with matching weight) must reproduce them exactly.
    """
    absu, a, m = _quad_data(u, H)
    return m * (absu**H.hp + a * absu**H.hq)


def modular(u, H: NFunctionParams, mesh=None) -> float:
    """Quadrature approximation of the modular; zero iff u vanishes."""
    if mesh is not None and mesh is not u.mesh and mesh.n_cells != u.mesh.n_cells:
        raise ValueError("field does not live on the given mesh")
    return float(np.sum(modular_terms(u, H)))


def _log_modular(absu, a, m, hp, hq, log_gamma, log_prefactor=0.0):
    """log of modular(u/gamma) computed without forming huge powers."""
    pos = absu > 0
    if not np.any(pos):
        return -np.inf
    logu = np.log(absu[pos])
    logm = np.log(m[pos])
    parts = [hp * (logu - log_gamma) + logm]
    wa = a[pos] * 1.0
    apos = wa > 0
    if np.any(apos):
        parts.append(hq * (logu[apos] - log_gamma) + logm[apos] + np.log(wa[apos]))
    return logsumexp(np.concatenate(parts)) + log_prefactor


def _plain_modular_at(absu, a, m, hp, hq, gamma, prefactor=1.0):
    v = absu / gamma
    return prefactor * float(np.sum(m * (v**hp + a * v**hq)))


def _lp_from_arrays(absu, m, r: float) -> float:
    if not np.any(absu > 0):
        return 0.0
    if r > LOG_SPACE_EXPONENT:
        pos = absu > 0
        return float(np.exp(logsumexp(r * np.log(absu[pos]) + np.log(m[pos])) / r))
    return float(np.sum(m * absu**r) ** (1.0 / r))


def lp_norm(u, r: float, mesh=None) -> float:
    """Discrete L^r norm of a field or of a gradient magnitude."""
    if isinstance(u, Field):
        m = np.full(u.mesh.n_cells, u.mesh.cell_measure)
        return _lp_from_arrays(np.abs(u.values), m, r)
    if isinstance(u, GradField):
        return _lp_from_arrays(u.magnitude, u.measures, r)
    raise TypeError(f"expected Field or GradField, got {type(u).__name__}")


def weighted_q_norm(u, H: NFunctionParams) -> float:
    """||a^{1/q} u||_q with the scaled exponent hq."""
    absu, a, m = _quad_data(u, H)
    mass = float(np.sum(m * a * absu**H.hq))
    return mass ** (1.0 / H.hq)


def _luxemburg(absu, a, m, hp, hq, sup_a, prefactor=1.0):
    """Bracket-and-bisect solve of modular(u/gamma) * prefactor = 1."""
    if not np.any(absu > 0):
        return 0.0, 0.0
    log_space = hq > LOG_SPACE_EXPONENT
    log_pref = np.log(prefactor)

    def log_rho(log_gamma):
        return _log_modular(absu, a, m, hp, hq, log_gamma, log_pref)

    def rho_above_one(gamma):
        if log_space:
            return log_rho(np.log(gamma)) > 0.0
        return _plain_modular_at(absu, a, m, hp, hq, gamma, prefactor) > 1.0

    guess = max(_lp_from_arrays(absu, m, hp),
                _lp_from_arrays(absu * a ** (1.0 / hq), m, hq) * (1.0 + sup_a))
    guess *= prefactor ** (1.0 / hp) if prefactor <= 1.0 else 1.0
    if guess <= 0.0 or not np.isfinite(guess):
        guess = 1.0

    lo = hi = guess
    expansions = 0
    if rho_above_one(hi):
        while rho_above_one(hi):
            hi *= 2.0
            expansions += 1
            if expansions > 200:
                raise NumericalError("luxemburg norm bracket expansion failed")
        lo = hi / 2.0
    else:
        while not rho_above_one(lo):
            lo /= 2.0
            expansions += 1
            if expansions > 400:
                # modular stays below 1 at absurdly small scales: u ~ 0
                return 0.0, 0.0
        hi = lo * 2.0

    for _ in range(200):
        if hi - lo <= GAMMA_RTOL * hi:
            break
        mid = 0.5 * (lo + hi)
        if rho_above_one(mid):
            lo = mid
        else:
            hi = mid
    gamma = 0.5 * (lo + hi)
    if log_space:
        at_unit = float(np.exp(log_rho(np.log(gamma))))
    else:
        at_unit = _plain_modular_at(absu, a, m, hp, hq, gamma, prefactor)
    return gamma, at_unit


def luxemburg_norm(u, H: NFunctionParams, mesh=None) -> NormResult:
    """Luxemburg norm by bisection on the unit ball property."""
    absu, a, m = _quad_data(u, H)
    gamma, at_unit = _luxemburg(absu, a, m, H.hp, H.hq, H.a.sup_norm)
    return NormResult(gamma, "bisection", at_unit)


def rescaled_norm(u, H: NFunctionParams, mesh=None) -> float:
    """Luxemburg norm of u with respect to the rescaled modular.

    The modular is divided by |Omega| + ||a||_1, which makes the norm of a
    constant field equal the constant and drives the large-exponent limit.
    """
    absu, a, m = _quad_data(u, H)
    gamma, _ = _luxemburg(absu, a, m, H.hp, H.hq, H.a.sup_norm,
                          prefactor=1.0 / H.rescale_constant())
    return gamma


def w_inverse(y: float, p: float, q: float, weight: float = 1.0) -> float:
    """Unique t >= 0 with t^p + weight * t^q = y (bisection, then Newton)."""
    if y < 0:
        raise ValueError("w_inverse needs y >= 0")
    if not (1.0 < p < q):
        raise ValueError("w_inverse needs 1 < p < q")
    if weight < 0:
        raise ValueError("weight must be nonnegative")
    if y == 0.0:
        return 0.0
    if weight == 0.0:
        return y ** (1.0 / p)

    def f(t):
        return t**p + weight * t**q - y

    hi = min(y ** (1.0 / p), (y / weight) ** (1.0 / q))
    lo = hi
    while f(lo) > 0.0:
        lo /= 2.0
    # coarse bisection to a narrow bracket, then Newton polish
    for _ in range(60):
        if hi - lo <= 1e-3 * hi:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    for _ in range(60):
        df = p * t ** (p - 1.0) + weight * q * t ** (q - 1.0)
        step = f(t) / df
        t_new = min(max(t - step, lo), hi)
        if abs(t_new - t) <= 1e-16 * t:
            t = t_new
            break
        t = t_new
    return float(t)


def closed_form_norm(u, H: NFunctionParams, mesh=None) -> NormResult:
    """Explicit Luxemburg norm via the two integrals of |u|.

    Writes the norm as ||u||_p * Theta / W^{-1}(Theta^p) with
    Theta = (||a^{1/q} u||_q / ||u||_p)^{q/(q-p)} and W(t) = t^p + t^q.
    Requires a genuinely two-phase situation: p < q and a positive weighted
    q-integral, otherwise the caller must fall back to the L^p norm.
    """
    if H.p == H.q:
        raise DegenerateExponentError("closed form needs p < q")
    absu, a, m = _quad_data(u, H)
    hp, hq = H.hp, H.hq
    if not np.any(absu > 0):
        return NormResult(0.0, "closed_form", 0.0)
    weighted_mass = float(np.sum(m * a * absu**hq))
    if weighted_mass == 0.0:
        raise FallbackRequired("integral of a |u|^q vanishes; use the L^p norm")
    norm_p = _lp_from_arrays(absu, m, hp)
    norm_qa = weighted_mass ** (1.0 / hq)
    with np.errstate(over="raise"):
        try:
            theta = (norm_qa / norm_p) ** (hq / (hq - hp))
            denom = w_inverse(theta**hp, hp, hq, 1.0)
            value = norm_p * theta / denom
        except (FloatingPointError, OverflowError) as exc:
            raise NumericalError("closed-form norm overflowed") from exc
    at_unit = _plain_modular_at(absu, a, m, hp, hq, value) if hq <= LOG_SPACE_EXPONENT \
        else float(np.exp(_log_modular(absu, a, m, hp, hq, np.log(value))))
    return NormResult(float(value), "closed_form", at_unit)


def embedding_constant(Htilde: NFunctionParams, H: NFunctionParams,
                       omega_measure: float, a_l1: float) -> float:
    """Upper bound for the embedding norm of L^{Htilde} into L^{H}.

    Valid for p <= ptilde < 2p and q <= qtilde < 2q with the same weight; the
    identity embedding returns 1.
    """
    p, q = H.p, H.q
    pt, qt = Htilde.p, Htilde.q
    if not (p <= pt < 2 * p and q <= qt < 2 * q):
        raise ValueError("exponent order violated: need p <= ptilde < 2p, q <= qtilde < 2q")
    if pt == p and qt == q:
        return 1.0
    d = omega_measure + a_l1
    if qt / q <= pt / p:
        eps = (pt - p) / p
    else:
        eps = (qt - q) / q
    return float(eps * d + eps**(-eps))


def sandwich_ratios(u: Field, H: NFunctionParams, mesh=None):
    """Lower and upper single-phase bounds around the double-phase Rayleigh ratio.

    Returns ((1/w) ||grad u||_p / ||u||_q, ||grad u||_H / ||u||_H,
    w ||grad u||_q / ||u||_p) with w = 1 + sup(a) + |Omega| and checks the
    ordering, which holds in exact cell arithmetic.
    """
    if not np.any(u.values != 0):
        raise ValueError("sandwich ratios need a nonzero field")
    g = gradient(u)
    w = H.sandwich_constant()
    hp, hq = H.hp, H.hq
    lower = (1.0 / w) * lp_norm(g, hp) / lp_norm(u, hq)
    mid = luxemburg_norm(g, H).value / luxemburg_norm(u, H).value
    upper = w * lp_norm(g, hq) / lp_norm(u, hp)
    slack = 1e-10 * max(mid, 1.0)
    if not (lower <= mid + slack and mid <= upper + slack):
        raise NumericalError(f"sandwich ordering violated: {lower} {mid} {upper}")
    return lower, mid, upper


def sobolev_conjugate_inverse(H: NFunctionParams, x_index: int, s: float,
                              n: int, panels: int = 4000) -> float:
    """Integral of H^{-1}(x, tau) / tau^{(n+1)/n} from 0 to s (diagnostic).

    The integrand behaves like tau^{1/p - (n+1)/n} near zero, integrable for
    p < n; a graded substitution tau = s * sigma^g flattens the singularity so
    the midpoint rule converges cleanly.
    """
    hp, hq = H.hp, H.hq
    if hp >= n:
        raise ValueError("sobolev conjugate needs p < n")
    if s < 0:
        raise ValueError("upper limit must be nonnegative")
    if s == 0.0:
        return 0.0
    wx = float(H.a.values[x_index])
    # exponent of the transformed integrand near 0 is g*(1/p - 1/n) - 1
    g = int(np.ceil(3.0 * hp * n / (n - hp)))
    sigma = (np.arange(panels) + 0.5) / panels
    tau = s * sigma**g
    jac = s * g * sigma ** (g - 1) / panels
    if H.p == H.q:
        hinv = (tau / (1.0 + wx)) ** (1.0 / hp)
    else:
        hinv = np.array([w_inverse(t, hp, hq, wx) for t in tau])
    vals = hinv / tau ** ((n + 1.0) / n)
    return float(np.sum(vals * jac))
