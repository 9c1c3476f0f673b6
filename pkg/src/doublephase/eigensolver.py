"""First eigenpair and minimax bounds for the double-phase Rayleigh quotient.

The first eigenvalue is the infimum of ||grad u||_H / ||u||_H over nonzero
fields; it is found by projected gradient descent on the Luxemburg unit
sphere.  Both k(u) = ||u||_H and K(u) = ||grad u||_H are
positively 1-homogeneous with Gateaux derivatives given by explicit pairing
densities (k' and K' below); the descent direction is the discrete
(-Laplace + I)^{-1} Riesz lift of K'(u) - R(u) k'(u), step sizes come from
Armijo backtracking on the quotient and the iterate is renormalized through
the Luxemburg norm after every accepted step.

Higher eigenvalues have no algorithm in closed form: the minimax over index-m
symmetric sets is bounded above by optimizing over spheres of m-dimensional
subspaces (legitimate competitors, since the unit sphere of an m-dimensional
subspace has topological index m).  The inner maximum over a subspace sphere
is solved by multi-start ascent in coefficient space, the outer infimum by
preconditioned descent on the frame; reported values are upper bounds only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError
from .meshes import Field, gradient, write_field_csv
from .orlicz import NFunctionParams, luxemburg_norm, rescaled_norm

_EIGSH_TOL = 0.0


@lru_cache(maxsize=128)
def _operators(mesh):
    """Stiffness, mass and preconditioner factor for a mesh (cached)."""
    ops = mesh.gradient_ops()
    if ops.face_measures is None:
        stiffness = sum((g.T @ sp.diags(ops.measures) @ g)
                        for g in ops.matrices).tocsc()
    else:
        stiffness = sum((g.T @ sp.diags(fm) @ g)
                        for g, fm in zip(ops.matrices, ops.face_measures)).tocsc()
    mass = sp.diags(np.full(mesh.n_cells, mesh.cell_measure)).tocsc()
    precond = spla.splu((stiffness + mass).tocsc())
    return stiffness, mass, precond


def laplacian_matrices(mesh):
    """Discrete Dirichlet stiffness and mass matrices built from the gradient ops."""
    stiffness, mass, _ = _operators(mesh)
    return stiffness, mass


@lru_cache(maxsize=128)
def laplacian_modes(mesh, k: int):
    """Lowest k eigenpairs of the discrete Dirichlet Laplacian (linear oracle)."""
    stiffness, mass, _ = _operators(mesh)
    k = min(k, mesh.n_cells - 1)
    v0 = np.ones(mesh.n_cells)
    vals, vecs = spla.eigsh(stiffness, k=k, M=mass, sigma=0, which="LM",
                            v0=v0, tol=_EIGSH_TOL)
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


@dataclass
class SolverOptions:
    tol_lambda: float = 1e-9
    tol_residual: float = 1e-6
    max_iter: int = 800
    restarts: int = 2
    rng_seed: int = 0
    armijo_init: float = 1.0
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    noise_scale: float = 0.05
    use_rescaled: bool = False

    def __post_init__(self):
        if self.tol_lambda <= 0 or self.tol_residual <= 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 1:
            raise ValueError("need at least one restart")


@dataclass
class Eigenpair:
    lambda_: float
    u: Field
    residual: float
    iterations: int
    converged: bool
    s_of_u: float
    restart_lambdas: tuple = field(default_factory=tuple)


class _Quotient:
    """Rayleigh quotient K/k with pairings, on one mesh and one integrand."""

    def __init__(self, mesh, H: NFunctionParams, rescaled=False):
        if mesh is not H.mesh and mesh.n_cells != H.a.values.size:
            raise ValueError("mesh does not match the weight field")
        self.mesh = mesh
        self.H = H
        self.rescaled = rescaled
        ops = mesh.gradient_ops()
        self.gmats = ops.matrices
        self.gmeas = ops.measures
        self.to_cell = ops.to_cell
        self.cmeas = np.full(mesh.n_cells, mesh.cell_measure)
        self.a_cells = H.a.values
        self.a_grad = H.a.grad_values

    def _norm_of_values(self, values) -> float:
        u = Field(self.mesh, values)
        if self.rescaled:
            return rescaled_norm(u, self.H)
        return luxemburg_norm(u, self.H).value

    def _norm_of_grad(self, values) -> float:
        g = gradient(Field(self.mesh, values))
        if self.rescaled:
            return rescaled_norm(g, self.H)
        return luxemburg_norm(g, self.H).value

    def k(self, values) -> float:
        return self._norm_of_values(values)

    def K(self, values) -> float:
        return self._norm_of_grad(values)

    def rayleigh(self, values) -> float:
        kk = self.k(values)
        if kk == 0.0:
            raise ValueError("Rayleigh quotient of the zero field")
        return self.K(values) / kk

    def grad_components(self, values):
        return [g @ values for g in self.gmats]

    def kprime_parts(self, values, k=None):
        """Density covector and normalizing integral of k' at u.

        Returns (num, f) with <k'(u), v> = (num . v) / f; num already carries
        the quadrature measures.
        """
        pe, qe = self.H.hp, self.H.hq
        kk = self.k(values) if k is None else k
        if kk == 0.0:
            raise ValueError("pairing at the zero field")
        t = np.abs(values) / kk
        density = pe * t ** (pe - 1.0) + qe * self.a_cells * t ** (qe - 1.0)
        num = self.cmeas * density * np.sign(values)
        f = float(np.sum(self.cmeas * (pe * t**pe + qe * self.a_cells * t**qe)))
        return num, f

    def Kprime_parts(self, values, K=None):
        """Covector and normalizing integral of K'; num includes measures."""
        pe, qe = self.H.hp, self.H.hq
        KK = self.K(values) if K is None else K
        if KK == 0.0:
            raise ValueError("pairing at a gradient-free field")
        slopes = self.grad_components(values)
        if self.to_cell is None:
            mag = np.abs(slopes[0])
        else:
            mag = np.sqrt(sum(w @ (f * f) for w, f in zip(self.to_cell, slopes)))
        s = mag / KK
        density = np.zeros_like(s)
        pos = s > 0
        sp_ = s[pos]
        density[pos] = pe * sp_ ** (pe - 2.0) + qe * self.a_grad[pos] * sp_ ** (qe - 2.0)
        weighted = self.gmeas * density
        num = np.zeros(self.mesh.n_cells)
        if self.to_cell is None:
            num += self.gmats[0].T @ (weighted * (slopes[0] / KK))
        else:
            # chain rule through the cell-collocated square form: each face
            # slope is weighted by the densities of its adjacent cells
            for g, w, f in zip(self.gmats, self.to_cell, slopes):
                face_coeff = w.T @ weighted
                num += g.T @ (face_coeff * (f / KK))
        f_int = float(np.sum(self.gmeas * (pe * s**pe + qe * self.a_grad * s**qe)))
        return num, f_int

    def quotient_gradient(self, values, k=None, K=None):
        """Covector of d(K/k) at u together with (k, K, S, weak-residual vector)."""
        kk = self.k(values) if k is None else k
        KK = self.K(values) if K is None else K
        num_a, f_k = self.kprime_parts(values, kk)
        num_b, f_K = self.Kprime_parts(values, KK)
        lam = KK / kk
        grad = num_b / f_K / kk - lam * (num_a / f_k) / kk
        s_val = f_K / f_k
        weak_vec = num_b - lam * s_val * num_a
        return grad, kk, KK, s_val, weak_vec


def rayleigh(u: Field, H: NFunctionParams) -> float:
    """||grad u||_H / ||u||_H; scale invariant, errors on the zero field."""
    if not np.any(u.values != 0):
        raise ValueError("Rayleigh quotient of the zero field")
    return _Quotient(u.mesh, H).rayleigh(u.values)


def s_of_u(u: Field, lam: float, H: NFunctionParams) -> float:
    """The nonlocal factor of the Euler-Lagrange equation at a unit-norm u.

    With both modulars evaluated at unit arguments the numerator and
    denominator each lie in [p, q], so the ratio is confined to [p/q, q/p]
    and in particular never exceeds q.
    """
    quot = _Quotient(u.mesh, H)
    kk = quot.k(u.values)
    if abs(kk - 1.0) > 1e-6:
        raise ValueError(f"s_of_u needs a unit-norm field, got ||u|| = {kk}")
    KK = quot.K(u.values)
    if abs(KK - lam) > 1e-6 * max(1.0, lam):
        raise ValueError(f"s_of_u needs lambda = ||grad u||_H, got {lam} vs {KK}")
    _, f_k = quot.kprime_parts(u.values, kk)
    _, f_K = quot.Kprime_parts(u.values, lam)
    return f_K / f_k


def kprime_pairing(u: Field, v: Field, H: NFunctionParams) -> float:
    """<k'(u), v>, the derivative of the Luxemburg norm at u in direction v."""
    quot = _Quotient(u.mesh, H)
    num, f = quot.kprime_parts(u.values)
    return float(num @ v.values) / f


def Kprime_pairing(u: Field, v: Field, H: NFunctionParams) -> float:
    """<K'(u), v>, the derivative of the gradient norm at u in direction v."""
    quot = _Quotient(u.mesh, H)
    num, f = quot.Kprime_parts(u.values)
    return float(num @ v.values) / f


@dataclass
class DerivativeCheck:
    k_analytic: float
    k_numeric: float
    K_analytic: float
    K_numeric: float


def directional_derivative_check(u: Field, v: Field, H: NFunctionParams,
                                 eps: float = 1e-5) -> DerivativeCheck:
    """Central finite differences of k and K against the pairing formulas."""
    quot = _Quotient(u.mesh, H)
    k_plus = quot.k(u.values + eps * v.values)
    k_minus = quot.k(u.values - eps * v.values)
    K_plus = quot.K(u.values + eps * v.values)
    K_minus = quot.K(u.values - eps * v.values)
    return DerivativeCheck(
        k_analytic=kprime_pairing(u, v, H),
        k_numeric=(k_plus - k_minus) / (2 * eps),
        K_analytic=Kprime_pairing(u, v, H),
        K_numeric=(K_plus - K_minus) / (2 * eps),
    )


def weak_residual(u: Field, lam: float, H: NFunctionParams) -> float:
    """Optimality defect of (u, lam) against the discrete weak equation.

    Tests the weak form with every unit cell basis vector and returns the
    largest defect, each normalized by the basis vector's energy scale
    sqrt((L + M)_cc).
    """
    quot = _Quotient(u.mesh, H)
    kk = quot.k(u.values)
    num_a, f_k = quot.kprime_parts(u.values, kk)
    num_b, f_K = quot.Kprime_parts(u.values, lam)
    s_val = f_K / f_k
    r = num_b - lam * s_val * num_a
    stiffness, mass, _ = _operators(u.mesh)
    scale = np.sqrt(stiffness.diagonal() + mass.diagonal())
    return float(np.max(np.abs(r) / scale))


def _descend(quot: _Quotient, values, opts: SolverOptions):
    """Projected-gradient minimization of the quotient from one start.

    Runs until both the lambda change and the weak-form defect are below
    their tolerances (or the step search stalls / iteration budget runs out),
    and reports which of these happened through the converged flag.
    """
    stiffness, mass, precond = _operators(quot.mesh)
    scale = np.sqrt(stiffness.diagonal() + mass.diagonal())
    u = values / quot.k(values)
    lam = quot.rayleigh(u)
    iterations = 0
    converged = False
    stalled = 0
    last_step = opts.armijo_init
    for it in range(opts.max_iter):
        iterations = it + 1
        grad, _, _, _, weak_vec = quot.quotient_gradient(u, k=1.0)
        resid = float(np.max(np.abs(weak_vec) / scale))
        direction = -precond.solve(grad)
        slope = float(grad @ direction)
        if slope >= -1e-18 * max(lam, 1.0):
            converged = resid <= opts.tol_residual
            break
        step = min(opts.armijo_init, 4.0 * last_step)
        accepted = False
        for _ in range(30):
            trial = u + step * direction
            try:
                lam_trial = quot.rayleigh(trial)
            except ValueError:
                lam_trial = np.inf
            if lam_trial <= lam + opts.armijo_slope * step * slope:
                accepted = True
                break
            step *= opts.armijo_shrink
        if not accepted:
            converged = resid <= opts.tol_residual
            break  # no productive step at the smallest scale: stationary
        last_step = step
        u = trial / quot.k(trial)
        change = lam - lam_trial
        lam = lam_trial
        if change <= opts.tol_lambda * max(lam, 1.0):
            stalled += 1
            if resid <= opts.tol_residual:
                converged = True
                break
            if stalled >= 40:
                break  # lambda is flat but the defect will not drop further
        else:
            stalled = 0
    return u, lam, iterations, converged


def first_eigenpair(mesh, H: NFunctionParams, opts: SolverOptions | None = None,
                    seed_values=None) -> Eigenpair:
    """Minimize the Rayleigh quotient on the Luxemburg unit sphere.

    Starts from the first discrete Laplacian eigenvector (plus seeded noise on
    later restarts, or a caller-provided seed) and keeps the best run.  The
    final minimizer is replaced by its absolute value, which leaves the norm
    untouched and gives the nonnegative representative.  Non-convergence is
    reported through the flag, never raised, so parameter sweeps complete.
    """
    opts = opts or SolverOptions()
    quot = _Quotient(mesh, H, rescaled=opts.use_rescaled)
    rng = np.random.default_rng(opts.rng_seed)
    _, modes = laplacian_modes(mesh, 1)
    base = modes[:, 0]
    base = base * np.sign(base.sum() or 1.0)

    best = None
    restart_lambdas = []
    total_iter = 0
    for restart in range(opts.restarts):
        start = base.copy() if seed_values is None else np.asarray(seed_values, float).copy()
        if restart > 0:
            noise = rng.standard_normal(mesh.n_cells)
            start = start + opts.noise_scale * np.max(np.abs(start)) * noise
        u, lam, iters, conv = _descend(quot, start, opts)
        total_iter += iters
        restart_lambdas.append(lam)
        if best is None or lam < best[1]:
            best = (u, lam, conv)

    u, lam, converged = best
    u = np.abs(u)
    u = u / quot.k(u)
    lam = quot.rayleigh(u)
    if opts.use_rescaled:
        # the weak residual is defined for the plain modular; report the
        # preconditioner-dual stationarity defect of the rescaled quotient
        grad, _, _, _, _ = quot.quotient_gradient(u, k=1.0)
        _, _, precond = _operators(mesh)
        resid = float(np.sqrt(abs(grad @ precond.solve(grad))))
    else:
        resid = weak_residual(Field(mesh, u), lam, H)
    converged = bool(converged and resid <= opts.tol_residual)
    _, f_k = quot.kprime_parts(u, 1.0)
    _, f_K = quot.Kprime_parts(u, lam)
    return Eigenpair(lam, Field(mesh, u), resid, total_iter, converged,
                     f_K / f_k, tuple(restart_lambdas))


def _sphere_ascent(quot: _Quotient, frame, c0, iters=60):
    """Maximize R(frame @ c) over the Euclidean coefficient sphere."""
    c = c0 / np.linalg.norm(c0)
    val = quot.rayleigh(frame @ c)
    last_step = 1.0
    for _ in range(iters):
        grad_u, *_ = quot.quotient_gradient(frame @ c)
        gc = frame.T @ grad_u
        gc = gc - (gc @ c) * c
        norm = np.linalg.norm(gc)
        if norm < 1e-12 * max(val, 1.0):
            break
        step = min(4.0 * last_step, 1.0) / max(norm, 1e-30)
        improved = False
        for _ in range(20):
            trial = c + step * gc
            trial /= np.linalg.norm(trial)
            tval = quot.rayleigh(frame @ trial)
            if tval > val + 1e-15 * max(val, 1.0):
                c, val, improved = trial, tval, True
                last_step = step * norm
                break
            step *= 0.5
        if not improved:
            break
    return c, val


def _inner_max(quot: _Quotient, frame, rng, warm=None, extra_starts=4, iters=60):
    """Best found maximum of R over the sphere of span(frame)."""
    m = frame.shape[1]
    starts = [np.eye(m)[:, i] for i in range(m)]
    if warm is not None:
        starts.append(warm)
    for _ in range(extra_starts):
        starts.append(rng.standard_normal(m))
    best_c, best_val = None, -np.inf
    for c0 in starts:
        c, val = _sphere_ascent(quot, frame, c0, iters=iters)
        if val > best_val:
            best_c, best_val = c, val
    return best_c, best_val


def minimax_upper_bound(mesh, H: NFunctionParams, m: int,
                        opts: SolverOptions | None = None) -> float:
    """Upper bound for the m-th variational eigenvalue.

    Optimizes max-over-sphere of the quotient over m-dimensional trial
    subspaces: the inner maximum by multi-start ascent in coefficient space,
    the outer infimum by preconditioned descent on an orthonormal frame seeded
    with the m lowest discrete Laplacian modes.  Trial frames during the
    descent are scored with a cheap warm-started ascent; the seed frame and
    the final frame both get a full multi-start pass and the smaller certified
    maximum is returned.  The result is an upper bound only.
    """
    if m < 1 or m > mesh.n_cells:
        raise ValueError(f"mode index m={m} out of range")
    opts = opts or SolverOptions()
    quot = _Quotient(mesh, H, rescaled=opts.use_rescaled)
    rng = np.random.default_rng(opts.rng_seed + 7 * m)
    _, _, precond = _operators(mesh)
    _, modes = laplacian_modes(mesh, m)
    frame = np.linalg.qr(modes[:, :m])[0]

    c_star, seed_val = _inner_max(quot, frame, rng, extra_starts=m + 2)
    val = seed_val
    for _ in range(40):
        u_star = frame @ c_star
        grad_u, *_ = quot.quotient_gradient(u_star)
        descent = -precond.solve(grad_u)
        step = 1.0
        improved = False
        for _ in range(10):
            trial = np.linalg.qr(frame + step * np.outer(descent, c_star))[0]
            c_trial, val_trial = _inner_max(quot, trial, rng, warm=c_star,
                                            extra_starts=0, iters=25)
            if val_trial < val - 1e-14 * max(val, 1.0):
                frame, c_star, improved = trial, c_trial, True
                gain = val - val_trial
                val = val_trial
                break
            step *= 0.5
        if not improved or gain <= 1e-6 * max(val, 1.0):
            break
    # certify the inner maximum on the final frame with a larger start pool
    _, final_val = _inner_max(quot, frame, rng, warm=c_star, extra_starts=m + 6)
    return float(min(seed_val, final_val))


def spectrum_counting(lambdas, lam: float) -> int:
    """Number of listed eigenvalues strictly below lam."""
    arr = np.asarray(lambdas, dtype=float)
    if arr.size and np.any(np.diff(arr) < 0):
        raise ValueError("eigenvalue list must be sorted ascending")
    return int(np.searchsorted(arr, lam, side="left"))


def save_eigenpair(prefix, pair: Eigenpair, H: NFunctionParams,
                   opts: SolverOptions) -> tuple:
    """Persist an eigenpair as a field CSV plus a JSON metadata sidecar."""
    csv_path = f"{prefix}.csv"
    meta_path = f"{prefix}.json"
    write_field_csv(csv_path, pair.u)
    meta = {
        "converged": pair.converged,
        "iterations": pair.iterations,
        "lambda": pair.lambda_,
        "mesh": pair.u.mesh.describe(),
        "p": H.p,
        "q": H.q,
        "residual": pair.residual,
        "s_of_u": pair.s_of_u,
        "scale_h": H.scale_h,
        "seed": opts.rng_seed,
        "weight": H.a.descriptor,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, meta_path
