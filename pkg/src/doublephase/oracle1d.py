"""Exact and semi-analytic 1D p-Laplacian eigenpairs used as ground truth.

The half-period constant pi_p = 2 (p-1)^{1/p} * I_p with
I_p = integral of (1 - s^p)^{-1/p} over (0, 1) is computed by quadrature:
splitting at s^p = 1/2 and substituting s = (1 - w^{p'})^{1/p'} on the outer
piece turns both halves into integrals of smooth functions on closed
intervals, so composite Simpson converges at full order and the refinement
difference is an honest error estimate.

The shooting oracle integrates u' = |v|^{p'-2} v, v' = -lambda |u|^{p-2} u
from u(a) = 0, v(a) = 1 and bisects lambda until the m-th zero of u lands on
the right endpoint.  It is the ground truth the double-phase solver is tested
against; the closed formula quoted in the literature for lambda_p is recorded
alongside for comparison but never asserted (its normalization convention
does not match the Dirichlet eigenvalue at p = 2).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import betaincinv

from .errors import NumericalError
from .meshes import Field, Mesh1D

CSV_SCHEMA_LINE = "# schema=1"


def _simpson(fn, lo, hi, panels):
    xs = np.linspace(lo, hi, 2 * panels + 1)
    ys = fn(xs)
    h = (hi - lo) / (2 * panels)
    return h / 3.0 * (ys[0] + ys[-1] + 4 * ys[1::2].sum() + 2 * ys[2:-1:2].sum())


def _bare_integral(p: float, panels: int) -> float:
    """Integral of (1 - s^p)^(-1/p) over (0,1), singularity removed by substitution."""
    pprime = p / (p - 1.0)
    s_split = 0.5 ** (1.0 / p)
    w_split = 0.5 ** (1.0 / pprime)
    inner = _simpson(lambda s: (1.0 - s**p) ** (-1.0 / p), 0.0, s_split, panels)
    outer = _simpson(lambda w: (1.0 - w**pprime) ** ((1.0 - p) / p),
                     0.0, w_split, panels) / (p - 1.0)
    return inner + outer


@dataclass
class PiP:
    """The generalized half period 2 (p-1)^{1/p} * I_p with a refinement error bar."""

    p: float
    value: float
    error_estimate: float
    panels: int
    bare_integral: float


def pi_p(p: float, panels: int = 256) -> PiP:
    if p <= 1.0:
        raise ValueError("pi_p needs p > 1")
    if panels < 2:
        raise ValueError("need at least 2 panels")
    coarse = _bare_integral(p, panels // 2)
    fine = _bare_integral(p, panels)
    prefactor = 2.0 * (p - 1.0) ** (1.0 / p)
    err = abs(fine - coarse) * prefactor
    if not np.isfinite(fine):
        raise NumericalError("pi_p quadrature did not converge")
    return PiP(p, prefactor * fine, err, panels, fine)


def paper_lambda_formula(p: float, length: float) -> float:
    """(pi_p / L)^{p-1}, the closed expression quoted for the 1D eigenvalue.

    Recorded for comparison only: at p = 2 on a unit interval it evaluates to
    pi while the Dirichlet eigenvalue is pi^2, so the oracle of record is the
    shooting computation, not this formula.
    """
    return (pi_p(p).value / length) ** (p - 1.0)


def sinp_profile(p: float, mesh: Mesh1D) -> Field:
    """First-eigenfunction profile on the mesh interval, normalized to peak 1.

    On the rising quarter period the profile inverts the incomplete-beta form
    of the arcsine-type integral (x -> u with F(u)/F(1) = 2 x / L); the falling
    half mirrors it.  At p = 2 this is exactly sin(pi (x-a)/(b-a)).
    """
    if p <= 1.0:
        raise ValueError("sinp_profile needs p > 1")
    x = mesh.cell_centers()[:, 0]
    frac = 2.0 * (x - mesh.a) / (mesh.b - mesh.a)
    folded = np.where(frac <= 1.0, frac, 2.0 - frac)
    folded = np.clip(folded, 0.0, 1.0)
    vals = betaincinv(1.0 / p, 1.0 - 1.0 / p, folded) ** (1.0 / p)
    return Field(mesh, vals)


@dataclass
class ShootingEigenpair:
    m: int
    lambda_ode: float
    profile: Field
    node_count: int


def _shoot(p: float, lam: float, a: float, b: float, dense=False):
    pprime = p / (p - 1.0)

    def rhs(_t, y):
        u, v = y
        du = np.sign(v) * np.abs(v) ** (pprime - 1.0)
        dv = -lam * np.sign(u) * np.abs(u) ** (p - 1.0)
        return (du, dv)

    def crossing(_t, y):
        return y[0]

    crossing.terminal = False
    crossing.direction = 0
    sol = solve_ivp(rhs, (a, b), (0.0, 1.0), events=crossing, rtol=1e-10,
                    atol=1e-12, dense_output=dense, max_step=(b - a) / 16.0)
    if not sol.success:
        raise NumericalError(f"shooting integration failed: {sol.message}")
    zeros = sol.t_events[0]
    zeros = zeros[zeros > a + 1e-12 * (b - a)]
    return sol, zeros


def plap_shooting(p: float, mesh: Mesh1D, m: int = 1) -> ShootingEigenpair:
    """m-th Dirichlet eigenvalue of the 1D p-Laplacian by shooting and bisection.

    Bisects lambda until u has its m-th zero at the right endpoint; the
    returned profile is the dense solution sampled at the cell centers and
    scaled to peak 1 (it has exactly m-1 interior sign changes).
    """
    if p <= 1.0:
        raise ValueError("plap_shooting needs p > 1")
    if m < 1:
        raise ValueError("mode index must be >= 1")
    a, b = mesh.a, mesh.b

    def zero_count(lam):
        _, zeros = _shoot(p, lam, a, b)
        return zeros.size

    hi = 1.0
    tries = 0
    while zero_count(hi) < m:
        hi *= 2.0
        tries += 1
        if tries > 200:
            raise NumericalError(f"no bracket: lambda={hi} still has <{m} zeros")
    lo = hi / 2.0
    while lo > 0 and zero_count(lo) >= m:
        lo /= 2.0
        tries += 1
        if tries > 400:
            raise NumericalError(f"no bracket: lambda={lo} still has >={m} zeros "
                                 f"(last bracket [{lo}, {hi}])")

    for _ in range(200):
        if hi - lo <= 1e-10 * hi:
            break
        mid = 0.5 * (lo + hi)
        if zero_count(mid) >= m:
            hi = mid
        else:
            lo = mid
    lam = 0.5 * (lo + hi)

    sol, zeros = _shoot(p, lam, a, b, dense=True)
    interior = zeros[zeros < b - 1e-7 * (b - a)]
    u = sol.sol(mesh.cell_centers()[:, 0])[0]
    # the conserved first integral fixes the arch height exactly for the
    # normalization u'(a) = 1: (p-1) = lam * peak^p
    peak = ((p - 1.0) / lam) ** (1.0 / p)
    u = u / peak
    return ShootingEigenpair(m, lam, Field(mesh, u), int(interior.size))


def ode_residual(profile: Field, p: float, lam: float) -> float:
    """Normalized rms residual of -(|u'|^{p-2} u')' = lam |u|^{p-2} u.

    Fluxes are evaluated at the interior faces from cell differences; the
    divergence at the interior cells is compared against the reaction term and
    scaled by its own magnitude.
    """
    mesh = profile.mesh
    h = mesh.cell_measure
    u = profile.values
    du = np.diff(u) / h
    flux = np.sign(du) * np.abs(du) ** (p - 1.0)
    divergence = np.diff(flux) / h
    cells = slice(1, mesh.n - 1)
    reaction = lam * np.sign(u[cells]) * np.abs(u[cells]) ** (p - 1.0)
    res = divergence + reaction
    scale = lam * np.max(np.abs(u)) ** (p - 1.0)
    return float(np.sqrt(np.mean(res**2)) / scale)


def oracle_table(entries) -> str:
    """CSV fixture of shooting eigenvalues: (p, m, L, lambda, paper_formula)."""
    buf = io.StringIO()
    buf.write(CSV_SCHEMA_LINE + "\n")
    buf.write("p,m,L,lambda,paper_formula\n")
    for p, m, length, lam in entries:
        buf.write(f"{p:.17g},{m},{length:.17g},{lam:.17g},"
                  f"{paper_lambda_formula(p, length):.17g}\n")
    return buf.getvalue()
