"""Linear rational-expectations systems with state-dependent aggregate wedges.

A model is the expectational system

    G x_t = F E_t[x_{t+1}] + L z_t + mu_t,      z_t = R z_{t-1} + eps_t,

where ``mu_t`` is an optional wedge ``mu_t = M1 x_{t-1} + M2 z_t``.  Solutions
are laws of motion ``x_t = P x_{t-1} + Q z_t`` obtained from a generalized
Schur (QZ) decomposition of the stacked pencil, with predetermined variables
declared explicitly by the model builder.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import ordqz

from .errors import (
    DimensionMismatch,
    Explosive,
    Indeterminate,
    SingularPencil,
)

# Solver tolerances.  All configurable through function arguments; these are
# the package-wide defaults.
SOLVER_TOL = 1e-10
RESIDUAL_TOL = 1e-8
UNIT_CIRCLE_MARGIN = 1e-8

BK_UNIQUE = "unique"
BK_INDETERMINATE = "indeterminate"
BK_EXPLOSIVE = "explosive"


def _as_matrix(a, name, shape=None):
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if shape is not None and m.shape != shape:
        raise DimensionMismatch(f"{name} has shape {m.shape}, expected {shape}")
    return m


@dataclass(frozen=True)
class LinearREModel:
    """Structural matrices of the expectational system.

    Parameters
    ----------
    G, F : (n_x, n_x) arrays
        Contemporaneous and expectational coefficient matrices.
    L : (n_x, n_z) array
        Loading of the exogenous processes on the equations.
    R : (n_z, n_z) array
        Persistence of the exogenous block; spectral radius must be < 1.
    Sigma : (n_z, n_z) array
        Diagonal covariance of the exogenous innovations.
    state_names, shock_names : lists of str
        Labels for the endogenous states and the innovations.
    predetermined : tuple of int
        Indices of states that cannot jump at t (declared, never inferred).
    """

    G: np.ndarray
    F: np.ndarray
    L: np.ndarray
    R: np.ndarray
    Sigma: np.ndarray
    state_names: tuple
    shock_names: tuple
    predetermined: tuple = ()

    def __post_init__(self):
        G = _as_matrix(self.G, "G")
        n_x = G.shape[0]
        if G.shape[1] != n_x:
            raise DimensionMismatch(f"G must be square, got {G.shape}")
        F = _as_matrix(self.F, "F", (n_x, n_x))
        L = _as_matrix(self.L, "L")
        if L.shape[0] != n_x:
            raise DimensionMismatch(f"L has {L.shape[0]} rows, expected {n_x}")
        n_z = L.shape[1]
        R = _as_matrix(self.R, "R", (n_z, n_z))
        Sigma = _as_matrix(self.Sigma, "Sigma", (n_z, n_z))
        if np.any(np.abs(Sigma - np.diag(np.diag(Sigma))) > 0):
            raise DimensionMismatch("Sigma must be diagonal")
        if np.any(np.diag(Sigma) < 0):
            raise DimensionMismatch("Sigma must have non-negative diagonal")
        if n_z and np.max(np.abs(np.linalg.eigvals(R))) >= 1.0:
            raise DimensionMismatch("R must have all eigenvalues inside the unit circle")
        names = tuple(self.state_names)
        snames = tuple(self.shock_names)
        if len(names) != n_x:
            raise DimensionMismatch(f"{len(names)} state names for {n_x} states")
        if len(snames) != n_z:
            raise DimensionMismatch(f"{len(snames)} shock names for {n_z} shocks")
        pre = tuple(sorted(int(i) for i in self.predetermined))
        if any(i < 0 or i >= n_x for i in pre):
            raise DimensionMismatch("predetermined indices out of range")
        for key, val in [("G", G), ("F", F), ("L", L), ("R", R), ("Sigma", Sigma),
                         ("state_names", names), ("shock_names", snames),
                         ("predetermined", pre)]:
            if isinstance(val, np.ndarray):
                val = val.copy()
                val.setflags(write=False)
            object.__setattr__(self, key, val)

    @property
    def n_x(self) -> int:
        return self.G.shape[0]

    @property
    def n_z(self) -> int:
        return self.L.shape[1]

    def to_json(self) -> str:
        payload = {
            "G": self.G.tolist(),
            "F": self.F.tolist(),
            "L": self.L.tolist(),
            "R": self.R.tolist(),
            "Sigma": self.Sigma.tolist(),
            "state_names": list(self.state_names),
            "shock_names": list(self.shock_names),
            "predetermined": list(self.predetermined),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LinearREModel":
        d = json.loads(text)
        return cls(
            G=np.array(d["G"]), F=np.array(d["F"]), L=np.array(d["L"]),
            R=np.array(d["R"]), Sigma=np.array(d["Sigma"]),
            state_names=tuple(d["state_names"]), shock_names=tuple(d["shock_names"]),
            predetermined=tuple(d.get("predetermined", ())),
        )


@dataclass(frozen=True)
class WedgeSpec:
    """Wedge parameterization ``mu_t = M1 x_{t-1} + M2 z_t``."""

    M1: np.ndarray
    M2: np.ndarray

    def __post_init__(self):
        M1 = _as_matrix(self.M1, "M1")
        M2 = _as_matrix(self.M2, "M2")
        if M1.shape[0] != M1.shape[1]:
            raise DimensionMismatch(f"M1 must be square, got {M1.shape}")
        if M2.shape[0] != M1.shape[0]:
            raise DimensionMismatch("M1 and M2 must have matching row counts")
        for key, val in [("M1", M1), ("M2", M2)]:
            val = val.copy()
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    def matches(self, model: LinearREModel) -> bool:
        return self.M1.shape == (model.n_x, model.n_x) and self.M2.shape == (model.n_x, model.n_z)

    def is_zero(self) -> bool:
        return not (np.any(self.M1) or np.any(self.M2))

    @classmethod
    def zero(cls, model: LinearREModel) -> "WedgeSpec":
        return cls(np.zeros((model.n_x, model.n_x)), np.zeros((model.n_x, model.n_z)))


@dataclass(frozen=True)
class REsolution:
    """Solved law of motion ``x_t = P x_{t-1} + Q z_t``.

    ``P`` and ``Q`` are populated only when ``bk_status == "unique"``.  The
    model's exogenous block (R, Sigma) and labels are carried along so that
    simulation and analysis do not need the structural model again.
    """

    P: np.ndarray | None
    Q: np.ndarray | None
    bk_status: str
    R: np.ndarray | None = None
    Sigma: np.ndarray | None = None
    state_names: tuple = ()
    shock_names: tuple = ()
    n_stable: int = 0
    n_predetermined: int = 0

    @property
    def n_x(self) -> int:
        return self.P.shape[0]

    @property
    def n_z(self) -> int:
        return self.Q.shape[1]


@dataclass(frozen=True)
class DistortedSolution:
    """Law of motion of the wedge-augmented system plus the transfer matrix.

    ``base`` is the distorted solution (P*, Q*).  ``H``, when available,
    represents the rule ``lambda_t = H mu_t`` mapping wedges into deviations
    from the frictionless law of motion; ``h_status`` records how it was
    obtained ('closed_form', 'implied', or why it is unavailable).
    """

    base: REsolution
    H: np.ndarray | None
    h_status: str
    wedge: WedgeSpec
    frictionless: REsolution | None = None

    def lambda_path(self, x_prev: np.ndarray, z_t: np.ndarray) -> np.ndarray:
        """Evaluate lambda_t = H (M1 x_{t-1} + M2 z_t)."""
        if self.H is None:
            raise ValueError(f"H unavailable: {self.h_status}")
        mu = self.wedge.M1 @ np.asarray(x_prev) + self.wedge.M2 @ np.asarray(z_t)
        return self.H @ mu


def _stable_mask(alpha, beta, margin):
    # dynamic root lambda = beta/alpha; stable when |lambda| < 1 - margin
    return np.abs(beta) < (1.0 - margin) * np.abs(alpha)


def _klein(A, B, n_pre, margin):
    """Solve A E_t[w_{t+1}] = B w_t, first ``n_pre`` coordinates predetermined.

    Returns (gx, hx, n_stable, status): jumps_t = gx @ pre_t and
    E_t[pre_{t+1}] = hx @ pre_t, with status the Blanchard-Kahn label.
    """
    n = A.shape[0]
    AA, BB, alpha, beta, _, Zm = ordqz(
        A.astype(complex), B.astype(complex),
        sort=lambda a, b: _stable_mask(a, b, margin), output="complex",
    )
    if np.any((np.abs(alpha) < 1e-12) & (np.abs(beta) < 1e-12)):
        raise SingularPencil("generalized eigenvalue 0/0: pencil is degenerate")
    n_stable = int(np.sum(_stable_mask(alpha, beta, margin)))
    if n_stable < n_pre:
        return None, None, n_stable, BK_EXPLOSIVE
    if n_stable > n_pre:
        return None, None, n_stable, BK_INDETERMINATE
    if n_pre == 0:
        gx = np.zeros((n, 0))
        hx = np.zeros((0, 0))
        return gx, hx, n_stable, BK_UNIQUE
    Z11 = Zm[:n_pre, :n_pre]
    Z21 = Zm[n_pre:, :n_pre]
    if np.linalg.matrix_rank(Z11, tol=1e-12) < n_pre:
        raise SingularPencil("rank condition fails: Z11 singular despite correct root count")
    S11 = AA[:n_pre, :n_pre]
    T11 = BB[:n_pre, :n_pre]
    Z11_inv = np.linalg.inv(Z11)
    gx = np.real(Z21 @ Z11_inv)
    hx = np.real(Z11 @ np.linalg.solve(S11, T11) @ Z11_inv)
    return gx, hx, n_stable, BK_UNIQUE


def _extract_pq(gx, hx, R, n_z, pre_slots, jump_slots, n_x):
    """Recover x_t = P x_{t-1} + Q z_t from the Klein policy/transition pair.

    The predetermined vector is k_t = (z_t, aux_t) where aux holds the
    predetermined model states (and any lag replicas).  ``pre_slots`` maps
    each model state that sits inside k to its position there; ``jump_slots``
    maps the remaining states to rows of gx.  P is identified on the
    controllable subspace and recovered by least squares there.
    """
    n_k = hx.shape[0]
    # Output map x_t = C k_t
    C = np.zeros((n_x, n_k))
    for state, pos in pre_slots.items():
        C[state, pos] = 1.0
    for state, row in jump_slots.items():
        C[state, :] = gx[row, :]
    B_eps = np.zeros((n_k, n_z))
    B_eps[:n_z, :n_z] = np.eye(n_z)
    E_z = np.zeros((n_z, n_k))
    E_z[:, :n_z] = np.eye(n_z)

    Q = C @ B_eps
    M = C @ hx - Q @ R @ E_z

    # Controllable subspace of (hx, B_eps): P only needs to act correctly there.
    blocks = [B_eps]
    for _ in range(max(n_k - 1, 0)):
        blocks.append(hx @ blocks[-1])
    K_ctrl = np.hstack(blocks) if blocks else np.zeros((n_k, 0))
    if K_ctrl.size:
        U, s, _ = np.linalg.svd(K_ctrl, full_matrices=False)
        rank = int(np.sum(s > max(s[0], 1.0) * 1e-12)) if s.size else 0
        V = U[:, :rank]
    else:
        V = np.zeros((n_k, 0))
    if V.shape[1] == 0:
        P = np.zeros((n_x, n_x))
    else:
        P = (M @ V) @ np.linalg.pinv(C @ V)
    return P, Q


def solve_re(model: LinearREModel, *, margin: float = UNIT_CIRCLE_MARGIN,
             strict: bool = True) -> REsolution:
    """Solve the frictionless system by generalized Schur decomposition.

    Returns the unique stable law of motion when the Blanchard-Kahn counts
    hold.  With ``strict=True`` (default) a failed count raises
    ``Indeterminate`` or ``Explosive``; with ``strict=False`` the returned
    solution carries the diagnosis in ``bk_status`` and ``P``/``Q`` are None.
    """
    n_x, n_z = model.n_x, model.n_z
    pre = list(model.predetermined)
    jumps = [i for i in range(n_x) if i not in pre]
    order = pre + jumps  # model-state order inside the stacked vector

    n = n_z + n_x
    A = np.zeros((n, n))
    B = np.zeros((n, n))
    # exogenous block: E z_{t+1} = R z_t
    A[:n_z, :n_z] = np.eye(n_z)
    B[:n_z, :n_z] = model.R
    # structural block: F E x_{t+1} = G x_t - L z_t  (columns permuted to `order`)
    A[n_z:, n_z:] = model.F[:, order]
    B[n_z:, n_z:] = model.G[:, order]
    B[n_z:, :n_z] = -model.L

    n_pre = n_z + len(pre)
    gx, hx, n_stable, status = _klein(A, B, n_pre, margin)
    if status != BK_UNIQUE:
        if strict:
            exc = Indeterminate if status == BK_INDETERMINATE else Explosive
            raise exc(f"{n_stable} stable roots for {n_pre} predetermined states")
        return REsolution(None, None, status, model.R.copy(), model.Sigma.copy(),
                          model.state_names, model.shock_names, n_stable, n_pre)

    pre_slots = {s: n_z + i for i, s in enumerate(pre)}
    jump_slots = {s: i for i, s in enumerate(jumps)}
    P, Q = _extract_pq(gx, hx, model.R, n_z, pre_slots, jump_slots, n_x)
    return REsolution(P, Q, BK_UNIQUE, model.R.copy(), model.Sigma.copy(),
                      model.state_names, model.shock_names, n_stable, n_pre)


def _augmented_solve(model: LinearREModel, wedge: WedgeSpec, margin: float,
                     strict: bool) -> REsolution:
    """Solve the wedge-augmented system with state vector (z, x_{t-1}, x)."""
    n_x, n_z = model.n_x, model.n_z
    pre = list(model.predetermined)
    jumps = [i for i in range(n_x) if i not in pre]
    order = pre + jumps

    n = n_z + n_x + n_x  # (z, xlag, x)
    A = np.zeros((n, n))
    B = np.zeros((n, n))
    zi = slice(0, n_z)
    li = slice(n_z, n_z + n_x)
    xi = slice(n_z + n_x, n)
    # exogenous
    A[zi, zi] = np.eye(n_z)
    B[zi, zi] = model.R
    # lag identities: E xlag_{t+1} = x_t
    A[li, li] = np.eye(n_x)
    Bx = np.zeros((n_x, n_x))
    Bx[:, :] = np.eye(n_x)[:, order]
    B[li, xi] = Bx
    # structural: F E x_{t+1} = G x_t - M1 xlag_t - (L + M2) z_t
    # (xlag block keeps the original state order; only x columns are permuted)
    A[xi, xi] = model.F[:, order]
    B[xi, xi] = model.G[:, order]
    B[xi, li] = -wedge.M1
    B[xi, zi] = -(model.L + wedge.M2)

    n_pre = n_z + n_x + len(pre)
    gx, hx, n_stable, status = _klein(A, B, n_pre, margin)
    if status != BK_UNIQUE:
        if strict:
            exc = Indeterminate if status == BK_INDETERMINATE else Explosive
            raise exc(f"augmented system: {n_stable} stable roots for {n_pre} predetermined")
        return REsolution(None, None, status, model.R.copy(), model.Sigma.copy(),
                          model.state_names, model.shock_names, n_stable, n_pre)

    # positions of the model states inside k_t = (z, xlag-block, pre-states)
    pre_slots = {s: n_z + n_x + i for i, s in enumerate(pre)}
    jump_slots = {s: i for i, s in enumerate(jumps)}
    P, Q = _extract_pq(gx, hx, model.R, n_z, pre_slots, jump_slots, n_x)
    return REsolution(P, Q, BK_UNIQUE, model.R.copy(), model.Sigma.copy(),
                      model.state_names, model.shock_names, n_stable, n_pre)


def _closed_form_h(model: LinearREModel, wedge: WedgeSpec, P_star: np.ndarray,
                   cond_cap: float = 1e12):
    """Transfer matrix from the Kronecker restriction; None if singular."""
    n_x = model.n_x
    K = np.kron(wedge.M1.T, model.G) - np.kron((wedge.M1 @ P_star).T, model.F)
    if K.shape[0] == 0:
        return None
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > cond_cap:
        return None
    vec_h = np.linalg.solve(K, wedge.M1.flatten(order="F"))
    return vec_h.reshape((n_x, n_x), order="F")


def _implied_h(distorted: REsolution, frictionless: REsolution, wedge: WedgeSpec,
               tol: float = 1e-7):
    """Transfer matrix implied by the two laws of motion, when consistent.

    Solves H [M1 M2] = [P* - P0, Q* - Q0] by least squares and verifies the
    fit; returns None when no exact H exists (e.g. rank-deficient wedge).
    """
    dP = distorted.P - frictionless.P
    dQ = distorted.Q - frictionless.Q
    lhs = np.hstack([wedge.M1, wedge.M2])
    rhs = np.hstack([dP, dQ])
    H = rhs @ np.linalg.pinv(lhs)
    scale = max(1.0, np.max(np.abs(rhs)))
    if np.max(np.abs(H @ lhs - rhs)) > tol * scale:
        return None
    return H


def solve_distorted(model: LinearREModel, wedge: WedgeSpec, *,
                    margin: float = UNIT_CIRCLE_MARGIN,
                    strict: bool = True) -> DistortedSolution:
    """Solve the system with wedge ``mu_t = M1 x_{t-1} + M2 z_t`` substituted in.

    The state vector is augmented with x_{t-1} and solved by the same QZ
    routine.  The transfer matrix ``H`` (lambda_t = H mu_t) is computed from
    the closed-form Kronecker restriction when that system is invertible, and
    otherwise recovered from the augmented solve; if neither route is valid
    the solution marks H unavailable with the reason.
    """
    if not wedge.matches(model):
        raise DimensionMismatch("wedge dimensions do not match the model")
    if wedge.is_zero():
        base = solve_re(model, margin=margin, strict=strict)
        return DistortedSolution(base, None, "zero wedge: lambda identically zero",
                                 wedge, base)

    base = _augmented_solve(model, wedge, margin, strict)
    if base.bk_status != BK_UNIQUE:
        return DistortedSolution(base, None, f"no unique solution: {base.bk_status}",
                                 wedge, None)

    frictionless = solve_re(model, margin=margin, strict=False)
    H = _closed_form_h(model, wedge, base.P)
    h_status = "closed_form"
    if H is None:
        h_status = "implied"
        if frictionless.bk_status == BK_UNIQUE:
            H = _implied_h(base, frictionless, wedge)
        if H is None:
            h_status = ("unavailable: closed form singular (e.g. M1 = 0) and no "
                        "exact implied H from the augmented solve")
    return DistortedSolution(base, H, h_status, wedge,
                             frictionless if frictionless.bk_status == BK_UNIQUE else None)


@dataclass(frozen=True)
class Prop1Transfer:
    """Closed-form transfer matrix plus the restriction residuals."""

    H: np.ndarray
    lag_restriction_residual: float
    shock_restriction_residual: float


def prop1_transfer(model: LinearREModel, wedge: WedgeSpec,
                   distorted: DistortedSolution) -> Prop1Transfer:
    """Closed-form H and the residuals of both cross-equation restrictions.

    The lag restriction is ``G H M1 - F H M1 P* - M1 = 0`` and the shock
    restriction ``G H M2 - F H M1 Q* - F H M2 R - M2 = 0``, both evaluated at
    the distorted solution.  Near-zero residuals certify that the wedge pair
    is internally consistent with the transfer representation.
    """
    from .errors import SingularRestriction

    P_star, Q_star = distorted.base.P, distorted.base.Q
    H = _closed_form_h(model, wedge, P_star)
    if H is None:
        raise SingularRestriction("Kronecker restriction matrix is rank-deficient")
    M1, M2 = wedge.M1, wedge.M2
    r_lag = model.G @ H @ M1 - model.F @ H @ M1 @ P_star - M1
    r_shock = (model.G @ H @ M2 - model.F @ H @ M1 @ Q_star
               - model.F @ H @ M2 @ model.R - M2)
    return Prop1Transfer(H, float(np.max(np.abs(r_lag))), float(np.max(np.abs(r_shock))))


@dataclass(frozen=True)
class SimPath:
    """Simulated trajectory: endogenous states X (T, n_x) and exogenous Z (T, n_z)."""

    X: np.ndarray
    Z: np.ndarray
    shocks: np.ndarray
    state_names: tuple = ()

    def to_csv(self, path) -> None:
        import pandas as pd

        names = self.state_names or tuple(f"x{i}" for i in range(self.X.shape[1]))
        pd.DataFrame(self.X, columns=list(names)).to_csv(path, index=False,
                                                         float_format="%.12g")


def _solution_pq(solution):
    if isinstance(solution, DistortedSolution):
        return solution.base
    return solution


def simulate(solution, shocks: np.ndarray, x0: np.ndarray | None = None) -> SimPath:
    """Iterate the solved law of motion under a given shock matrix.

    ``shocks`` is (T, n_z); ``x0`` the initial endogenous state (defaults to
    zero, the steady state).  The exogenous block starts at z_0 = eps_0.
    Deterministic given the shock matrix.
    """
    from .errors import Unstable

    sol = _solution_pq(solution)
    if sol.bk_status != BK_UNIQUE:
        raise Unstable(f"cannot simulate a solution with bk_status={sol.bk_status!r}")
    shocks = np.atleast_2d(np.asarray(shocks, dtype=float))
    T = shocks.shape[0]
    n_x, n_z = sol.P.shape[0], sol.Q.shape[1]
    if shocks.shape[1] != n_z:
        raise DimensionMismatch(f"shocks have {shocks.shape[1]} columns, expected {n_z}")
    x = np.zeros(n_x) if x0 is None else np.asarray(x0, dtype=float)
    if x.shape != (n_x,):
        raise DimensionMismatch(f"x0 has shape {x.shape}, expected ({n_x},)")
    if not np.all(np.isfinite(x)):
        raise DimensionMismatch("x0 must be finite")
    X = np.empty((T, n_x))
    Z = np.empty((T, n_z))
    z = np.zeros(n_z)
    for t in range(T):
        z = sol.R @ z + shocks[t]
        x = sol.P @ x + sol.Q @ z
        X[t] = x
        Z[t] = z
    names = sol.state_names
    return SimPath(X, Z, shocks.copy(), names)


def Unstable_from_status(status):
    from .errors import Unstable

    return Unstable(f"cannot simulate a solution with bk_status={status!r}")


def residual_check(model: LinearREModel, solution, path: SimPath,
                   wedge: WedgeSpec | None = None) -> float:
    """Largest absolute equation residual along a simulated path.

    Expectations are evaluated analytically, E_t x_{t+1} = P x_t + Q R z_t,
    which matches rational expectations exactly.
    """
    sol = _solution_pq(solution)
    X, Z = path.X, path.Z
    T = X.shape[0]
    worst = 0.0
    x_prev = np.zeros(model.n_x)
    for t in range(T):
        x_t, z_t = X[t], Z[t]
        ex_next = sol.P @ x_t + sol.Q @ (model.R @ z_t)
        resid = model.G @ x_t - model.F @ ex_next - model.L @ z_t
        if wedge is not None:
            resid -= wedge.M1 @ x_prev + wedge.M2 @ z_t
        worst = max(worst, float(np.max(np.abs(resid))))
        x_prev = x_t
    return worst


def stable_subspace_residual(model: LinearREModel, solution: REsolution) -> float:
    """Norm of (F P^2 - G P) restricted to the reachable subspace of the solution."""
    sol = _solution_pq(solution)
    P, Q = sol.P, sol.Q
    # reachable directions of x: spanned by columns of Q and their propagation
    blocks = [Q]
    for _ in range(P.shape[0] - 1):
        blocks.append(P @ blocks[-1])
    basis = np.hstack(blocks)
    if basis.size == 0:
        return 0.0
    U, s, _ = np.linalg.svd(basis, full_matrices=False)
    rank = int(np.sum(s > max(float(s[0]), 1.0) * 1e-12)) if s.size else 0
    W = U[:, :rank]
    res = (model.F @ P @ P - model.G @ P) @ W
    return float(np.max(np.abs(res))) if res.size else 0.0
