"""Discrete conformal capacity of grid condensers.

The admissible potentials are grid functions equal to 1 on the plate K
and 0 on every cell outside D (the exterior of the bounding box counts
as outside). The energy of a cell is ``|grad_h u|^p h^dim`` with the
forward-difference gradient, so for ``p == dim`` the discrete energy is
scale invariant just like the continuum one.

For p = 2 the minimizer solves a linear system (5/7-point Laplacian).
For p = 3 the degenerate energy is regularized as
``(|grad_h u|^2 + eps^2)^{3/2}`` and minimized by damped Newton with
eps-continuation; the reported value is the unregularized energy.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pyamg
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, ParameterError, SolverError
from .grid import CompactMask, GridDomain

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    epsilon_reg: float = 1e-2
    epsilon_min: float = 1e-4
    max_iters: int = 200
    tol: float = 1e-10
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    # linear systems with more unknowns than this in 3-D go to AMG-preconditioned CG
    direct_limit: int = 60_000

    def __post_init__(self):
        if not self.epsilon_reg > 0 or not self.epsilon_min > 0:
            raise ParameterError("epsilon_reg and epsilon_min must be positive")
        if not self.tol > 0:
            raise ParameterError("tol must be positive")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be at least 1")


@dataclass(frozen=True, eq=False)
class PotentialField:
    values: np.ndarray
    domain: GridDomain
    clamp: CompactMask


@dataclass(frozen=True, eq=False)
class CapacityResult:
    value: float
    field: PotentialField
    iterations: int
    residual: float
    h: float
    n: int
    history: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "iterations": self.iterations,
            "residual": self.residual,
            "h": self.h,
            "n": self.n,
        }


def _check_exponent(n_exp, dim):
    n = dim if n_exp is None else int(n_exp)
    if n not in (2, 3):
        raise ParameterError(f"energy exponent must be 2 or 3, got {n_exp}")
    return n


# --- difference operators on the padded grid -----------------------------------------


@lru_cache(maxsize=8)
def _diff_ops(shape: tuple) -> tuple:
    """Forward-difference matrices (one per axis) on a grid of ``shape``.

    Row c of the axis-a operator is u[c + e_a] - u[c]; rows on the last
    layer of each axis are zero (those cells are padding, always outside).
    """
    n = math.prod(shape)
    lin = np.arange(n).reshape(shape)
    ops = []
    for ax in range(len(shape)):
        a = np.take(lin, range(0, shape[ax] - 1), axis=ax).ravel()
        b = np.take(lin, range(1, shape[ax]), axis=ax).ravel()
        rows = np.concatenate([a, a])
        cols = np.concatenate([a, b])
        vals = np.concatenate([-np.ones(a.size), np.ones(a.size)])
        ops.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    return tuple(ops)


def _pad(a: np.ndarray) -> np.ndarray:
    return np.pad(a, 1)


def _unpad(a: np.ndarray) -> np.ndarray:
    return a[(slice(1, -1),) * a.ndim]


def _cell_sq_grad(u_pad_flat: np.ndarray, ops) -> tuple[list, np.ndarray]:
    diffs = [D @ u_pad_flat for D in ops]
    return diffs, sum(d * d for d in diffs)


def discrete_energy(field: PotentialField | np.ndarray, n_exp: int | None = None, h: float | None = None,
                    epsilon: float = 0.0) -> float:
    """Sum over cells of ``(|grad_h u|^2 + epsilon^2)^(p/2) h^dim``.

    ``field`` may be a :class:`PotentialField` or a bare value array (then
    ``h`` must be given). Differences reaching past the box use the zero
    value of the exterior.
    """
    if isinstance(field, PotentialField):
        values = np.asarray(field.values, dtype=float)
        h = field.domain.h
    else:
        values = np.asarray(field, dtype=float)
        if h is None:
            raise ParameterError("h is required for a bare value array")
    dim = values.ndim
    p = _check_exponent(n_exp, dim)
    up = _pad(values)
    ops = _diff_ops(up.shape)
    _, s = _cell_sq_grad(up.ravel(), ops)
    s = s + (epsilon * h) ** 2
    return float(np.sum(s ** (p / 2.0)) * h ** (dim - p))


# --- solvers -----------------------------------------------------------------------


def _validate_condenser(domain: GridDomain, K: CompactMask) -> None:
    if K.domain is not domain and K.domain.shape != domain.shape:
        raise DomainError("plate mask belongs to a different grid")
    if np.any(K.cells & ~domain.inside):
        raise DomainError("plate is not contained in the domain")
    if np.any(K.cells & ~domain.core()):
        raise DomainError("plate touches the outside region (not a condenser)")


class _Problem:
    """Index bookkeeping shared by the linear and nonlinear solves."""

    def __init__(self, domain: GridDomain, K: CompactMask):
        self.domain = domain
        self.K = K
        inside = _pad(domain.inside)
        clamp = _pad(K.cells)
        self.shape = inside.shape
        self.ops = _diff_ops(self.shape)
        self.free = np.flatnonzero((inside & ~clamp).ravel())
        self.u0 = clamp.ravel().astype(float)
        n = inside.size
        self.P = sp.csr_matrix(
            (np.ones(self.free.size), (self.free, np.arange(self.free.size))), shape=(n, self.free.size)
        )
        self._DP = None

    @property
    def DP(self):
        if self._DP is None:
            self._DP = [(D @ self.P).tocsr() for D in self.ops]
        return self._DP

    def laplacian_system(self):
        lap = sum((D.T @ D) for D in self.ops).tocsr()
        A = (self.P.T @ lap @ self.P).tocsr()
        b = -(self.P.T @ (lap @ self.u0))
        return A, b

    def field(self, u_flat: np.ndarray) -> PotentialField:
        vals = _unpad(u_flat.reshape(self.shape)).copy()
        vals.flags.writeable = False
        return PotentialField(vals, self.domain, self.K)


def _linear_solve(A, b, cfg: SolverConfig, dim: int, x0=None, precond=None) -> np.ndarray:
    if A.shape[0] == 0:
        return np.zeros(0)
    if dim == 2 or A.shape[0] <= cfg.direct_limit:
        return spla.spsolve(A.tocsc(), b)
    if precond is not None:
        x, _ = spla.cg(A, b, x0=x0, rtol=cfg.tol, maxiter=500, M=precond)
        return x
    ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
    return ml.solve(b, x0=x0, tol=cfg.tol, accel="cg", maxiter=500)


class _Preconditioner:
    """AMG hierarchy rebuilt only when CG with the stale one gets slow."""

    def __init__(self, max_cg: int = 40):
        self.M = None
        self.max_cg = max_cg

    def solve(self, A, b, tol: float) -> np.ndarray:
        if self.M is not None:
            count = [0]
            x, info = spla.cg(A, b, rtol=tol, maxiter=self.max_cg, M=self.M,
                              callback=lambda _: count.__setitem__(0, count[0] + 1))
            if info == 0:
                return x
        ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
        self.M = ml.aspreconditioner(cycle="V")
        x, info = spla.cg(A, b, rtol=tol, maxiter=500, M=self.M)
        if info != 0:
            raise SolverError("preconditioned CG did not converge", {"unknowns": A.shape[0], "tol": tol})
        return x


def _solve_p2(prob: _Problem, cfg: SolverConfig):
    A, b = prob.laplacian_system()
    x = _linear_solve(A, b, cfg, len(prob.shape))
    bn = float(np.linalg.norm(b)) or 1.0
    residual = float(np.linalg.norm(A @ x - b)) / bn
    u = prob.u0.copy()
    u[prob.free] = x
    return u, residual


def _reg_energy(prob: _Problem, u: np.ndarray, p: int, delta2: float, hscale: float) -> float:
    _, s = _cell_sq_grad(u, prob.ops)
    return float(np.sum((s + delta2) ** (p / 2.0))) * hscale


def _newton_system(prob: _Problem, u: np.ndarray, p: int, delta2: float, hscale: float):
    diffs, s = _cell_sq_grad(u, prob.ops)
    s = s + delta2
    c1 = p * s ** (p / 2.0 - 1.0)  # coefficient of the identity block
    c2 = p * (p - 2.0) * s ** (p / 2.0 - 2.0)  # coefficient of the rank-one block
    DP = prob.DP
    grad = sum(DPa.T @ (c1 * da) for DPa, da in zip(DP, diffs)) * hscale
    H = None
    dim = len(DP)
    for a in range(dim):
        for b in range(a, dim):
            w = c2 * diffs[a] * diffs[b] + (c1 if a == b else 0.0)
            term = DP[a].T @ sp.diags(w * hscale) @ DP[b]
            if a != b:
                term = term + term.T
            H = term if H is None else H + term
    return grad, H.tocsr()


def _solve_p3(prob: _Problem, cfg: SolverConfig, p: int, u: np.ndarray):
    h = prob.domain.h
    dim = len(prob.shape)
    hscale = h ** (dim - p)  # cell energy in differences: |D u|^p h^(dim-p)
    eps = cfg.epsilon_reg
    history = []
    it = 0
    last_rel = math.inf
    iterative = dim == 3 and prob.free.size > cfg.direct_limit
    pre = _Preconditioner()
    while True:
        delta2 = (eps * h) ** 2
        final = eps <= cfg.epsilon_min * (1 + 1e-12)
        # intermediate regularization levels only need a rough minimizer
        stage_tol = cfg.tol if final else max(cfg.tol, 1e-6)
        E = _reg_energy(prob, u, p, delta2, hscale)
        stage_done = False
        while not stage_done:
            if it >= cfg.max_iters:
                raise SolverError(
                    "Newton iteration did not converge",
                    {"iterations": it, "energy": E, "epsilon": eps, "relative_decrease": last_rel},
                )
            grad, H = _newton_system(prob, u, p, delta2, hscale)
            if iterative:
                # inexact Newton: loose solves far from the minimizer, tight near it
                gn = float(np.linalg.norm(grad))
                forcing = min(1e-2, max(1e-10, math.sqrt(abs(last_rel)) if math.isfinite(last_rel) else 1e-2))
                d = -pre.solve(H, grad, forcing) if gn > 0 else np.zeros_like(grad)
            else:
                d = -_linear_solve(H, grad, cfg, dim)
            dec = float(-grad @ d)
            it += 1
            rel = dec / E if E > 0 else 0.0
            if not np.isfinite(rel) or rel < 0:
                raise SolverError("Newton direction is not a descent direction",
                                  {"iterations": it, "epsilon": eps, "decrement": dec})
            if rel < stage_tol:
                last_rel = rel
                history.append((eps, E))
                stage_done = True
                break
            step = 1.0
            accepted = False
            for _ in range(cfg.max_backtracks):
                trial = u.copy()
                trial[prob.free] += step * d
                En = _reg_energy(prob, trial, p, delta2, hscale)
                if En <= E - cfg.armijo * step * dec:
                    accepted = True
                    break
                step *= cfg.backtrack
            if not accepted:
                # stalled at this regularization level
                last_rel = rel
                stage_done = True
                break
            last_rel = (E - En) / E
            u, E = trial, En
            history.append((eps, E))
            log.debug("newton it=%d eps=%.3g E=%.12g rel=%.3g step=%.3g", it, eps, E, rel, step)
        if final:
            break
        eps = max(eps / 10.0, cfg.epsilon_min)
    if last_rel > max(cfg.tol, 1e-8):
        raise SolverError("Newton iteration stalled before reaching tolerance",
                          {"iterations": it, "relative_decrease": last_rel, "epsilon": eps})
    return u, it, last_rel, tuple(history)


def solve_potential(domain: GridDomain, K: CompactMask, n_exp: int | None = None,
                    cfg: SolverConfig | None = None) -> CapacityResult:
    """Minimize the discrete n-energy with u = 1 on K and u = 0 off D."""
    cfg = cfg or SolverConfig()
    p = _check_exponent(n_exp, domain.dim)
    _validate_condenser(domain, K)
    prob = _Problem(domain, K)
    u, residual = _solve_p2(prob, cfg)
    iterations, history = 1, ()
    if p == 3:
        u, iterations, residual, history = _solve_p3(prob, cfg, p, u)
    fld = prob.field(u)
    value = discrete_energy(fld, p)
    return CapacityResult(value, fld, iterations, residual, domain.h, p, history)


def capacity(domain: GridDomain, K: CompactMask, n_exp: int | None = None, cfg: SolverConfig | None = None) -> float:
    return solve_potential(domain, K, n_exp, cfg).value


def ring_capacity_oracle(r: float, R: float, n_exp: int = 2) -> float:
    """Capacity of the spherical ring r < |x| < R: omega_{n-1} log(R/r)^(1-n)."""
    if not (0 < r < R):
        raise ParameterError(f"need 0 < r < R, got r={r}, R={R}")
    omega = {2: 2 * math.pi, 3: 4 * math.pi}
    if n_exp not in omega:
        raise ParameterError("ring oracle is available for n = 2, 3")
    return omega[n_exp] * math.log(R / r) ** (1 - n_exp)


# --- a posteriori checks ---------------------------------------------------------------


@dataclass
class PotentialReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, count: int, worst: float) -> None:
        if count:
            self.violations.append({"kind": kind, "count": int(count), "worst": float(worst)})


def check_potential(result: CapacityResult | PotentialField, tol: float = 1e-8) -> PotentialReport:
    """Boundary values, range and discrete extremum checks for a potential."""
    fld = result.field if isinstance(result, CapacityResult) else result
    u = np.asarray(fld.values, dtype=float)
    inside = fld.domain.inside
    K = fld.clamp.cells
    rep = PotentialReport()
    low = u < -tol
    rep.add("below_zero", low.sum(), -u[low].min() if low.any() else 0.0)
    high = u > 1 + tol
    rep.add("above_one", high.sum(), u[high].max() - 1 if high.any() else 0.0)
    dk = np.abs(u[K] - 1.0)
    rep.add("plate_not_one", (dk > tol).sum(), dk.max() if dk.size else 0.0)
    out = np.abs(u[~inside])
    rep.add("outside_not_zero", (out > tol).sum(), out.max() if out.size else 0.0)

    up = np.pad(u, 1)
    nb_max = np.full(u.shape, -np.inf)
    nb_min = np.full(u.shape, np.inf)
    core = (slice(1, -1),) * u.ndim
    for ax in range(u.ndim):
        for sh in (-1, 1):
            nb = np.roll(up, sh, axis=ax)[core]
            nb_max = np.maximum(nb_max, nb)
            nb_min = np.minimum(nb_min, nb)
    free = inside & ~K
    lmax = free & (u > nb_max + tol)
    lmin = free & (u < nb_min - tol)
    rep.add("interior_local_max", lmax.sum(), (u - nb_max)[lmax].max() if lmax.any() else 0.0)
    rep.add("interior_local_min", lmin.sum(), (nb_min - u)[lmin].max() if lmin.any() else 0.0)
    return rep


# --- repeated p = 2 capacities on one domain ------------------------------------------------


class GreenCapacity:
    """Exact discrete p = 2 capacities of many plates on one fixed domain.

    The Dirichlet Laplacian of the domain is factored once. For a plate K
    the capacity is ``1^T (G_KK)^{-1} 1`` where G is the inverse of that
    Laplacian; columns of G are computed on demand and kept in an LRU
    cache bounded by ``max_bytes``.
    """

    def __init__(self, domain: GridDomain, max_bytes: int = 1024 * 2**20, max_plate: int = 1500):
        self.domain = domain
        self.max_plate = max_plate
        inside = domain.inside.ravel()
        self.cells = np.flatnonzero(inside)
        self.pos = np.full(inside.size, -1, dtype=np.int64)
        self.pos[self.cells] = np.arange(self.cells.size)
        up = _pad(domain.inside)
        ops = _diff_ops(up.shape)
        lap = sum((D.T @ D) for D in ops).tocsr()
        ip = np.flatnonzero(up.ravel())
        self.A = lap[ip][:, ip].tocsc()
        self._lu = spla.splu(self.A)
        self._cols: OrderedDict[int, np.ndarray] = OrderedDict()
        self._max_cols = max(64, int(max_bytes // (8 * max(self.cells.size, 1))))
        self.solves = 0

    def _columns(self, ks: np.ndarray) -> np.ndarray:
        missing = [k for k in ks.tolist() if k not in self._cols]
        for start in range(0, len(missing), 128):
            chunk = missing[start:start + 128]
            rhs = np.zeros((self.cells.size, len(chunk)))
            rhs[chunk, np.arange(len(chunk))] = 1.0
            sol = self._lu.solve(rhs)
            self.solves += len(chunk)
            for j, k in enumerate(chunk):
                self._cols[k] = sol[:, j].copy()
        for k in ks.tolist():
            self._cols.move_to_end(k)
        out = np.stack([self._cols[k][ks] for k in ks.tolist()], axis=1)
        while len(self._cols) > max(self._max_cols, ks.size):
            self._cols.popitem(last=False)
        return out

    def capacity(self, cells: np.ndarray) -> float:
        flat = np.flatnonzero(np.asarray(cells, dtype=bool).ravel())
        ks = self.pos[flat]
        if ks.size == 0 or np.any(ks < 0):
            raise DomainError("plate must be a nonempty set of inside cells")
        if ks.size > self.max_plate:
            # fat plate: one sparse solve is cheaper than |K| Green columns
            return self._direct(ks)
        G = self._columns(ks)
        G = 0.5 * (G + G.T)
        c, low = sla.cho_factor(G)
        lam = sla.cho_solve((c, low), np.ones(ks.size))
        return float(lam.sum())

    def _direct(self, ks: np.ndarray) -> float:
        n = self.cells.size
        clamp = np.zeros(n, dtype=bool)
        clamp[ks] = True
        free = np.flatnonzero(~clamp)
        A = self.A.tocsr()
        x = spla.spsolve(A[free][:, free].tocsc(), -(A[free][:, ks] @ np.ones(ks.size)))
        u = clamp.astype(float)
        u[free] = x
        return float(u @ (A @ u))
