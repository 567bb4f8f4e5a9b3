"""Asymptotics and steady-state analysis: Hardy-type quotients, the
functional-gap constant behind the decay rate, exponential decay fits,
logarithmic steady states, and a weak-form residual check.

The long-time picture: the energy E_0 dissipates at a rate controlled by
int [(w u_x)_x]^2, and a Hardy-type inequality bounds 2 E_0 by a constant
times that dissipation.  ``functional_gap_constant`` is the discrete
version of the sharp constant (its continuum value is exactly 2, attained
by u = x); ``hardy_quotient_min`` measures the underlying weighted
inequality itself, whose constant at gamma = 1 is not bounded uniformly in
the grid (the quotient creeps toward zero logarithmically), which is why
the N-trend is reported rather than asserted convergent.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import DomainError, NumericalError
from .functionals import Field, ModelParams
from .grid import build_grid, weight
from .operator import apply_operator, _structure_matrices

__all__ = [
    "DecayFit",
    "hardy_quotient_min",
    "functional_gap_constant",
    "fit_decay",
    "steady_state_log",
    "steady_residual",
    "weak_residual",
]


# ----------------------------------------------------------------------
# eigenvalue problems


def hardy_quotient_min(gamma: float, N: int) -> float:
    """Smallest discrete Rayleigh quotient of the weighted Hardy inequality.

    Minimizes  int (1-x^2)^gamma v_x^2 / int (1-x^2)^(gamma-2) v^2  over
    grid functions with v(+-1) = 0; the inequality's constant is
    C = 1/result as long as the result stays away from zero when N grows.
    The numerator weight is evaluated at faces, the (singular) denominator
    weight at interior nodes only.
    """
    if gamma <= 0:
        raise DomainError(f"gamma={gamma} must be > 0")
    if N < 16:
        raise DomainError(f"N={N} too small for the eigenproblem, need >= 16")
    grid = build_grid(N)
    h = grid.h
    wg_face = (1.0 - grid.faces ** 2) ** gamma
    x_int = grid.nodes[1:-1]
    m_node = h * (1.0 - x_int ** 2) ** (gamma - 2.0)

    # stiffness (tridiagonal, Dirichlet ends) over interior nodes
    diag = (wg_face[:-1] + wg_face[1:]) / h
    off = -wg_face[1:-1] / h
    d = diag / m_node
    e = off / np.sqrt(m_node[:-1] * m_node[1:])
    try:
        vals = scipy.linalg.eigh_tridiagonal(d, e, select="i",
                                             select_range=(0, 0),
                                             eigvals_only=True)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Hardy eigenproblem failed: {exc}") from exc
    lam = float(vals[0])
    if not np.isfinite(lam) or lam <= 0.0:
        raise NumericalError(f"Hardy quotient came out non-positive: {lam}")
    return lam


def functional_gap_constant(N: int, delta: float = 0.0) -> float:
    """Minimum of  int [(w_delta u_x)_x]^2 / (2 E_0(u))  over mean-zero u.

    Uses the solver's own discrete divergence chain, so the value is the
    lower bound the scheme's energy decay actually obeys (B_discrete).
    Continuum value 2 at delta = 0, attained by u = x; the discrete
    minimum approaches it from below as N grows.
    """
    if N < 16:
        raise DomainError(f"N={N} too small for the eigenproblem, need >= 16")
    if delta < 0:
        raise DomainError(f"delta={delta} must be >= 0")
    grid = build_grid(N)
    DIF, DIV, _, _, _, _ = _structure_matrices(N, float(delta))
    wfd = weight(grid.faces, delta)
    wf0 = weight(grid.faces, 0.0)
    P = (DIV @ (scipy.sparse.diags(wfd) @ DIF)).toarray()
    A = P.T @ (grid.cell_widths[:, None] * P)
    D = DIF.toarray()
    B = D.T @ ((grid.h * wf0)[:, None] * D)

    ones = np.ones((1, N + 1))
    Z = scipy.linalg.null_space(ones)
    Az = Z.T @ A @ Z
    Bz = Z.T @ B @ Z
    try:
        vals = scipy.linalg.eigh(Az, Bz, subset_by_index=[0, 0],
                                 eigvals_only=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"gap-constant eigenproblem failed: {exc}") from exc
    lam = float(vals[0])
    if not np.isfinite(lam) or lam <= 0.0:
        raise NumericalError(f"gap constant came out non-positive: {lam}")
    return lam


# ----------------------------------------------------------------------
# decay fitting


@dataclass
class DecayFit:
    """Fitted exponential bound E(t) <= A_fit * exp(-B_fit t)."""

    A_fit: float
    B_fit: float
    rmse: float
    window: Tuple[float, float]
    n_skipped: int = 0


def fit_decay(times, energies, window: Optional[Tuple[float, float]] = None,
              min_samples: int = 10) -> DecayFit:
    """Least-squares line on (t, log E) over a window.

    Default window: from the first time E drops to half its initial value
    (or the start, if it never does) to the last time E is still above
    1e-12 of it.  Nonpositive samples inside the window are skipped and
    counted.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    if t.shape != e.shape or t.ndim != 1:
        raise DomainError("times and energies must be equal-length 1D arrays")
    if window is None:
        e0 = e[0]
        below_half = np.nonzero(e <= 0.5 * e0)[0]
        start = t[below_half[0]] if below_half.size else t[0]
        alive = np.nonzero(e >= 1e-12 * e0)[0]
        if alive.size == 0:
            raise NumericalError("decay-fit window is empty")
        window = (start, t[alive[-1]])
    lo, hi = window
    in_win = (t >= lo) & (t <= hi)
    positive = e > 0.0
    n_skipped = int(np.sum(in_win & ~positive))
    mask = in_win & positive
    if int(mask.sum()) < min_samples:
        raise NumericalError(
            f"decay fit needs >= {min_samples} positive samples in the "
            f"window, found {int(mask.sum())}"
        )
    tt, le = t[mask], np.log(e[mask])
    slope, intercept = np.polyfit(tt, le, 1)
    resid = le - (intercept + slope * tt)
    return DecayFit(
        A_fit=float(np.exp(intercept)),
        B_fit=float(-slope),
        rmse=float(np.sqrt(np.mean(resid ** 2))),
        window=(float(lo), float(hi)),
        n_skipped=n_skipped,
    )


# ----------------------------------------------------------------------
# steady states


def _log_state_c3_bound(c1: float, c2: float) -> float:
    """Smallest c3 keeping the log steady state nonnegative on (-1, 1).

    The interior minimum sits at x = c2/c1; nonnegativity there requires
    c3 >= -[(c1+c2) log(1 + c2/c1) + (c1-c2) log(1 - c2/c1)].
    """
    if c1 == 0.0:
        return 0.0
    q = c2 / c1
    return -((c1 + c2) * np.log1p(q) + (c1 - c2) * np.log1p(-q))


def steady_state_log(c1: float, c2: float, c3: float, grid,
                     margin: Optional[float] = None) -> Field:
    """Logarithmic steady state (c1+c2) log(1+x) + (c1-c2) log(1-x) + c3.

    Needs 0 <= |c2| <= -c1 and c3 at or above the nonnegativity bound.
    The state blows up at the poles; evaluation is clamped to
    |x| <= 1 - margin (default margin 4h) and only the interior view is
    meaningful, e.g. for ``steady_residual``.
    """
    if not (c1 <= 0.0 and abs(c2) <= -c1):
        raise DomainError(f"need 0 <= |c2| <= -c1, got c1={c1}, c2={c2}")
    bound = _log_state_c3_bound(c1, c2)
    if c3 < bound - 1e-12:
        raise DomainError(f"c3={c3} below the nonnegativity bound {bound}")
    if margin is None:
        margin = 4.0 * grid.h
    if not (0.0 < margin < 1.0):
        raise DomainError(f"margin={margin} must lie in (0, 1)")
    x = np.clip(grid.nodes, -(1.0 - margin), 1.0 - margin)
    u = (c1 + c2) * np.log1p(x) + (c1 - c2) * np.log1p(-x) + c3
    if np.min(u) < -1e-12:
        raise DomainError("log steady state negative on the subdomain")
    return Field(grid, u)


def steady_residual(field: Field, params: ModelParams,
                    margin: float = 0.0) -> float:
    """max |du/dt| over the nodes with |x| <= 1 - margin.

    For log steady states pass a margin at least one stencil width (3h)
    beyond the construction margin, so the clamped boundary values do not
    leak into the measured residual.
    """
    rhs = apply_operator(field, params)
    if margin > 0.0:
        keep = np.abs(field.grid.nodes) <= 1.0 - margin
        rhs = rhs[keep]
    return float(np.max(np.abs(rhs)))


# ----------------------------------------------------------------------
# weak-form residual


def _node_slope(u: np.ndarray, h: float) -> np.ndarray:
    """Centered first derivative at nodes, one-sided second order at ends."""
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    d[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    return d


def _node_second(v: np.ndarray, h: float) -> np.ndarray:
    """Centered second derivative at nodes, one-sided at the ends."""
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h)
    d[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / (h * h)
    return d


def weak_residual(trajectory, params: ModelParams,
                  test_basis_size: int = 6) -> float:
    """Residual of the space-time weak form over a polynomial test basis.

    Tests phi(x, t) = P_j(x) * eta_m(t) with Legendre polynomials up to
    degree ``test_basis_size`` and hat functions at the snapshot times
    (plus the constant-in-time function, whose j = 0 member reduces to
    mass conservation).  The time derivative is taken from snapshot
    differences and the flux is re-evaluated independently of the solver
    with node-centered stencils, so the result measures the discretization
    (O(dt + h^2) on smooth runs) rather than the scheme's own algebra.
    """
    snaps = np.asarray(trajectory.snapshots, dtype=float)
    stimes = np.asarray(trajectory.snapshot_times, dtype=float)
    if snaps.ndim != 2 or snaps.shape[0] < 3:
        raise NumericalError("weak_residual needs at least 3 dense snapshots")
    grid = trajectory.grid
    h = grid.h
    omega = grid.cell_widths
    nodes = grid.nodes
    k = int(test_basis_size)

    pvals = np.polynomial.legendre.legvander(nodes, k).T        # (k+1, N+1)
    pder = np.empty_like(pvals)
    for j in range(k + 1):
        cj = np.zeros(j + 1)
        cj[j] = 1.0
        pder[j] = np.polynomial.legendre.legval(
            nodes, np.polynomial.legendre.legder(cj)) if j else 0.0

    mids = 0.5 * (stimes[:-1] + stimes[1:])
    dts = np.diff(stimes)
    wdel = weight(nodes, params.delta)

    n_int = len(mids)
    time_term = np.empty((n_int, k + 1))
    flux_term = np.empty((n_int, k + 1))
    for s in range(n_int):
        du = snaps[s + 1] - snaps[s]
        umid = 0.5 * (snaps[s + 1] + snaps[s])
        slope = _node_slope(umid, h)
        curv = _node_second(wdel * slope, h)
        flux = wdel * (np.abs(umid) ** params.n + params.eps) * curv
        time_term[s] = pvals @ (omega * du)
        flux_term[s] = dts[s] * (pder @ (omega * flux))

    # hat functions at snapshot times, evaluated at interval midpoints,
    # plus the constant-in-time test function
    n_hat = len(stimes)
    etas = np.zeros((n_hat + 1, n_int))
    etas[0] = 1.0
    for m in range(n_hat):
        vals = np.zeros(n_int)
        if m > 0:
            vals[m - 1] = 0.5
        if m < n_int:
            vals[m] = 0.5
        etas[m + 1] = vals

    resid = etas @ (time_term - flux_term)                      # (n_hat+1, k+1)
    return float(np.max(np.abs(resid)))
