"""Scalar functionals and weighted norms used by the estimates.

Everything the a priori estimate chain monitors lives here: mass, the
weighted Dirichlet energies E_delta and E_0, the entropy pair G_0 / G_eps
whose second derivative is the reciprocal mobility, and the weighted
sup / L^2 / Hoelder diagnostics that measure the distance to the flat
profile.

Conventions that matter:

* The energy is assembled from face-centered differences,
  E_delta(u) = 1/2 * sum_f h * (1 - x_f^2 + delta) * ((u_{i+1}-u_i)/h)^2.
  This is the exact Lyapunov functional of the discrete operator (see
  ``operator``), so the solver's per-step energy identity holds to
  roundoff rather than to truncation error.
* G_eps is defined through its second derivative 1/(|s|^n + eps) and
  evaluated by quadrature of the closed double integral; G_0 has closed
  forms.  Both are anchored so that G(A) = G'(A) = 0 with A > 0, which
  keeps every expression finite for all n >= 1 (the anchor cancels from
  all identities, only differences of G ever enter the scheme).
* Integrals of (1-x^2)^mu against node data use exact per-cell weight
  integrals (regularized incomplete beta), so integrable endpoint
  singularities (mu in (-1, 0)) are handled without evaluating the weight
  at the poles.
"""

import warnings
from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import beta as beta_function, betainc

from .errors import DomainError, NumericalError
from .grid import Grid, face_differences, quadrature, weight

__all__ = [
    "DriftParams",
    "ModelParams",
    "Field",
    "DiagRecord",
    "ENTROPY_FLOOR",
    "constant_field",
    "mass",
    "energy",
    "entropy_G0",
    "entropy_Geps",
    "total_entropy",
    "floor_count",
    "weighted_sup_distance",
    "weighted_norms",
    "holder_seminorm_x",
    "sup_bound_margin",
]

#: Pointwise floor applied to u before evaluating G_0 (which diverges at 0
#: for n >= 2; the divergence itself is a touchdown diagnostic).
ENTROPY_FLOOR = 1e-14


@dataclass(frozen=True)
class DriftParams:
    """Physical drift terms of the full coating-flow flux.

    a: gravity, b: rotation, c: surface tension prefactor.  With
    ``full_curvature`` the flux carries the extra 2*u_x term of the full
    spherical curvature; without it (and a = b = 0, c = 1) the flux
    reduces exactly to the plain surface-tension operator.
    """

    a: float = 0.0
    b: float = 0.0
    c: float = 1.0
    full_curvature: bool = False


@dataclass(frozen=True)
class ModelParams:
    """All equation parameters: mobility exponent and regularizations.

    n       -- mobility exponent (> 0; the estimates need n >= 1)
    eps     -- mobility regularization |u|^n + eps
    delta   -- weight regularization 1 - x^2 + delta
    anchor  -- entropy anchor A > 0 with G(A) = G'(A) = 0
    theta   -- mollification exponent for the initial-data lift eps**theta;
               for n > 1 it must satisfy 0 < theta < 1/(2(n-1)), for
               n <= 1 any value in (0, 1/2] is accepted
    mobility -- face averaging of |u|^n + eps: "entropy" (mean consistent
               with G_eps', makes the entropy identity dissipative by
               construction) or "arithmetic" (comparison mode)
    drift   -- optional physical drift terms (see DriftParams)
    """

    n: float
    eps: float = 0.0
    delta: float = 0.0
    anchor: float = 1.0
    theta: Optional[float] = None
    mobility: str = "entropy"
    drift: Optional[DriftParams] = None

    def __post_init__(self):
        if self.n <= 0:
            raise DomainError(f"mobility exponent n={self.n} must be > 0")
        if self.eps < 0:
            raise DomainError(f"eps={self.eps} must be >= 0")
        if self.delta < 0:
            raise DomainError(f"delta={self.delta} must be >= 0")
        if self.anchor <= 0:
            raise DomainError(f"entropy anchor A={self.anchor} must be > 0")
        if self.mobility not in ("entropy", "arithmetic"):
            raise DomainError(f"unknown mobility mode {self.mobility!r}")
        if self.theta is None:
            theta = 0.25 if self.n <= 1.0 else min(0.25, 0.4 / (self.n - 1.0))
            object.__setattr__(self, "theta", theta)
        else:
            t = self.theta
            if self.n > 1.0:
                bound = 0.5 / (self.n - 1.0)
                if not (0.0 < t < bound):
                    raise DomainError(
                        f"theta={t} outside (0, {bound}) required for n={self.n}"
                    )
            elif not (0.0 < t <= 0.5):
                raise DomainError(f"theta={t} outside (0, 1/2] required for n<=1")


@dataclass
class Field:
    """Film thickness values at the grid nodes at one instant."""

    grid: Grid
    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (self.grid.N + 1,):
            raise DomainError(
                f"field needs {self.grid.N + 1} node values, got {self.u.shape}"
            )
        if not np.all(np.isfinite(self.u)):
            raise DomainError("field values must be finite")

    def copy(self) -> "Field":
        return Field(self.grid, self.u.copy())


def constant_field(grid: Grid, value: float) -> Field:
    return Field(grid, np.full(grid.N + 1, float(value)))


@dataclass
class DiagRecord:
    """One row of the diagnostic time series (CSV column order)."""

    t: float
    mass: float
    energy_delta: float
    energy_0: float
    entropy_G0: float
    entropy_Geps: float
    min_u: float
    diss_energy: float
    diss_entropy: float
    wsup_beta: float
    wl2_mu: float
    wgrad_gamma: float

    CSV_COLUMNS = (
        "t", "mass", "energy_delta", "energy_0", "entropy_G0", "entropy_Geps",
        "min_u", "diss_energy", "diss_entropy", "wsup_beta", "wl2_mu",
        "wgrad_gamma",
    )

    def as_row(self):
        return [getattr(self, c) for c in self.CSV_COLUMNS]


# ----------------------------------------------------------------------
# mass and energy


def mass(field: Field) -> float:
    """Total film volume, conserved exactly by the flux-form operator."""
    return quadrature(field.u, field.grid)


def energy(field: Field, delta: float) -> float:
    """Weighted Dirichlet energy 1/2 int (1 - x^2 + delta) u_x^2.

    Face-centered differences; this is the quantity the implicit solver
    dissipates exactly, not merely approximately.
    """
    du = face_differences(field.u, field.grid)
    wf = weight(field.grid.faces, delta)
    return 0.5 * field.grid.h * float(np.dot(wf, du * du))


def _energy_of_values(u: np.ndarray, grid: Grid, delta: float) -> float:
    du = np.diff(u) / grid.h
    wf = weight(grid.faces, delta)
    return 0.5 * grid.h * float(np.dot(wf, du * du))


# ----------------------------------------------------------------------
# entropies


def entropy_G0(z, n: float, anchor: float):
    """Unregularized entropy density with G'' = z^(-n), anchored at A > 0.

    Closed forms for n != 1, 2 / n = 2; for n = 1 the anchored form
    z*log(z/A) - (z - A) is used so that G_0(A) = 0 and G_0 >= 0 hold for
    every anchor (the plain z*log z variant violates both).
    """
    if n < 1:
        raise DomainError(f"entropy_G0 needs n >= 1, got n={n}")
    if anchor <= 0:
        raise DomainError(f"anchor A={anchor} must be > 0")
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0.0):
        raise DomainError("entropy_G0 needs z > 0 (apply the floor first)")
    if n == 1:
        vals = z_arr * np.log(z_arr / anchor) - (z_arr - anchor)
    elif n == 2:
        vals = np.log(anchor / z_arr) + z_arr / anchor - 1.0
    else:
        vals = (z_arr ** (2.0 - n) - anchor ** (2.0 - n)) / ((n - 1.0) * (n - 2.0)) \
            - anchor ** (1.0 - n) / (1.0 - n) * (z_arr - anchor)
    return float(vals) if np.isscalar(z) or np.ndim(z) == 0 else vals


_GL_PANEL_X, _GL_PANEL_W = np.polynomial.legendre.leggauss(24)


def _mobility_antiderivatives(targets: np.ndarray, n: float, eps: float,
                              refine: int = 0):
    """S(t) = int_0^t ds/(s^n + eps) and U(t) = int_0^t s ds/(s^n + eps).

    Vectorized for nonnegative targets.  Panels are split geometrically
    (one per decade, doubled per refinement level) so the scale change of
    the integrand near eps**(1/n) is resolved; 24-point Gauss per panel
    keeps the relative error near roundoff for n <= ~6.
    """
    if eps <= 0.0:
        raise DomainError(f"eps={eps} must be > 0 for the regularized entropy")
    t = np.asarray(targets, dtype=float)
    if np.any(t < 0.0):
        raise DomainError("antiderivative targets must be nonnegative")
    uniq = np.unique(t[t > 0.0])
    if uniq.size == 0:
        zeros = np.zeros_like(t)
        return zeros, zeros.copy()

    # geometric panels: the segment 0 -> smallest target is resolved over
    # 13 decades, each further inter-target segment gets one panel per
    # decade of growth; `refine` doubles every count
    mult = 1 << refine
    seg_lo = np.empty_like(uniq)
    seg_lo[0] = uniq[0] * 1e-13
    seg_lo[1:] = uniq[:-1]
    ratios = np.maximum(uniq / seg_lo, 1.0)
    ks = np.maximum(1, np.ceil(np.log10(ratios)).astype(int)) * mult
    total = int(ks.sum())
    seg_of = np.repeat(np.arange(uniq.size), ks)
    cumk = np.concatenate(([0], np.cumsum(ks)))
    ramp = (np.arange(total) - cumk[seg_of] + 1.0) / ks[seg_of]
    log_lo = np.log(seg_lo)
    log_hi = np.log(uniq)
    interior = np.exp(log_lo[seg_of] + ramp * (log_hi - log_lo)[seg_of])
    interior[cumk[1:] - 1] = uniq
    edges = np.concatenate(([0.0, seg_lo[0]], interior))

    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    s = mid[:, None] + half[:, None] * _GL_PANEL_X[None, :]
    f = 1.0 / (np.abs(s) ** n + eps)
    panel_S = half * (f @ _GL_PANEL_W)
    panel_U = half * ((s * f) @ _GL_PANEL_W)
    cum_S = np.concatenate(([0.0], np.cumsum(panel_S)))
    cum_U = np.concatenate(([0.0], np.cumsum(panel_U)))

    S_uniq = cum_S[1 + cumk[1:]]
    U_uniq = cum_U[1 + cumk[1:]]
    where = np.searchsorted(uniq, np.where(t > 0.0, t, uniq[0]))
    S = np.where(t > 0.0, S_uniq[where], 0.0)
    U = np.where(t > 0.0, U_uniq[where], 0.0)
    return S, U


def _entropy_values(u: np.ndarray, n: float, eps: float, anchor: float,
                    refine: int = 0):
    """Pointwise G_eps(u_i) and G_eps'(u_i) for a node array (eps > 0).

    G_eps' is odd-extended through S(z) = sign(z) * S(|z|); the density is
    G_eps(z) = z * (S(z) - S(A)) - (U(|z|) - U(A)), which recovers the
    double integral of 1/(|s|^n + eps) from the anchor.
    """
    absu = np.abs(u)
    targets = np.concatenate([absu, [anchor]])
    S_abs, U_abs = _mobility_antiderivatives(targets, n, eps, refine)
    S_anchor, U_anchor = S_abs[-1], U_abs[-1]
    gprime = np.sign(u) * S_abs[:-1] - S_anchor
    g = u * gprime - (U_abs[:-1] - U_anchor)
    return g, gprime


def entropy_Geps(z: float, n: float, eps: float, anchor: float) -> float:
    """Regularized entropy density G_eps(z), G_eps'' = 1/(|z|^n + eps).

    Defined for every real z (eps > 0).  Evaluated by adaptive panel
    quadrature of the closed double integral, refined until two levels
    agree to 1e-10 relative.
    """
    if eps <= 0.0:
        raise DomainError(f"entropy_Geps needs eps > 0, got {eps}")
    if anchor <= 0:
        raise DomainError(f"anchor A={anchor} must be > 0")
    zz = np.array([float(z)])
    prev = None
    for refine in range(4):
        val = float(_entropy_values(zz, n, eps, anchor, refine)[0][0])
        if prev is not None and abs(val - prev) <= 1e-10 * abs(val) + 1e-15:
            return val
        prev = val
    raise NumericalError(
        f"entropy quadrature did not converge for z={z}, n={n}, eps={eps}: "
        f"last refinements gave {prev!r} and {val!r}"
    )


def total_entropy(field: Field, kind: str, params: ModelParams) -> float:
    """Integral of the pointwise entropy over (-1, 1).

    kind="G0" floors u at ENTROPY_FLOOR first (see ``floor_count``);
    kind="Geps" needs params.eps > 0 and accepts any real values.
    """
    if kind == "G0":
        z = np.maximum(field.u, ENTROPY_FLOOR)
        vals = entropy_G0(z, params.n, params.anchor)
        return quadrature(vals, field.grid)
    if kind == "Geps":
        prev = None
        for refine in range(4):
            vals, _ = _entropy_values(field.u, params.n, params.eps,
                                      params.anchor, refine)
            total = quadrature(vals, field.grid)
            if prev is not None and abs(total - prev) <= 1e-10 * abs(total) + 1e-14:
                return total
            prev = total
        raise NumericalError(
            f"entropy quadrature did not converge on the field: "
            f"last refinements gave {prev!r} and {total!r}"
        )
    raise DomainError(f"unknown entropy kind {kind!r} (use 'G0' or 'Geps')")


def floor_count(field: Field) -> int:
    """Number of nodes clipped by the G_0 floor (touchdown diagnostic)."""
    return int(np.sum(field.u < ENTROPY_FLOOR))


# ----------------------------------------------------------------------
# weighted norms and sup diagnostics


@lru_cache(maxsize=128)
def _cell_weight_integrals(N: int, exponent: float) -> np.ndarray:
    """Exact per-cell integrals of (1 - x^2)^exponent on the uniform grid.

    Uses the regularized incomplete beta with substitution s = (1+x)/2, so
    exponents in (-1, 0) (integrable endpoint singularity) are exact and
    the weight is never evaluated at the poles.
    """
    if exponent <= -1.0:
        raise DomainError(f"weight exponent {exponent} must be > -1")
    h = 2.0 / N
    s = 0.5 * (-1.0 + h * np.arange(N + 1) + 1.0)
    s[0], s[-1] = 0.0, 1.0
    a = exponent + 1.0
    total = 2.0 * 4.0 ** exponent * beta_function(a, a)
    cells = total * np.diff(betainc(a, a, s))
    cells.flags.writeable = False
    return cells


def weighted_sup_distance(field: Field, beta: float, total_mass: float) -> float:
    """max over nodes of (1-x^2)^(beta/2) |u - M/|Omega||, the norm in
    which solutions approach the flat profile."""
    if beta <= 0:
        raise DomainError(f"beta={beta} must be > 0")
    x = field.grid.nodes
    wb = (1.0 - x * x) ** (0.5 * beta)
    return float(np.max(wb * np.abs(field.u - 0.5 * total_mass)))


def weighted_norms(field: Field, mu: float, gamma: float):
    """(int (1-x^2)^mu u^2, int (1-x^2)^gamma u_x^2) with exact cell weights.

    mu may be negative down to (not including) -1; when mu < 0 and the
    boundary values are nonzero the (still integrable) endpoint
    contribution is flagged with a RuntimeWarning.
    """
    if mu <= -1.0:
        raise DomainError(f"mu={mu} must be > -1")
    if not (0.0 < gamma < 1.0):
        raise DomainError(f"gamma={gamma} must lie in (0, 1)")
    grid = field.grid
    u = field.u
    if mu < 0.0 and (abs(u[0]) > 1e-13 or abs(u[-1]) > 1e-13):
        warnings.warn(
            "weighted_norms: mu < 0 with nonzero boundary values; the "
            "endpoint cells carry an integrable singularity",
            RuntimeWarning,
            stacklevel=2,
        )
    w_mu = _cell_weight_integrals(grid.N, float(mu))
    w_ga = _cell_weight_integrals(grid.N, float(gamma))
    u2 = u * u
    first = float(np.dot(w_mu, 0.5 * (u2[:-1] + u2[1:])))
    du = face_differences(u, grid)
    second = float(np.dot(w_ga, du * du))
    return first, second


def holder_seminorm_x(field: Field, beta: float, alpha: float) -> float:
    """Discrete spatial Hoelder constant:

    max over node pairs of (1-x1^2)^(beta/2) |u(x1) - u(x2)| / |x1-x2|^(alpha/2).
    """
    if not (0.0 < alpha < beta):
        raise DomainError(f"need 0 < alpha < beta, got alpha={alpha}, beta={beta}")
    x = field.grid.nodes
    u = field.u
    wb = (1.0 - x * x) ** (0.5 * beta)
    dx = np.abs(x[:, None] - x[None, :])
    duu = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(dx, 1.0)  # diagonal has duu = 0 anyway
    ratios = wb[:, None] * duu / dx ** (0.5 * alpha)
    return float(np.max(ratios))


def sup_bound_margin(field: Field, beta: float) -> float:
    """Violation margin of the weighted sup bound against the energy.

    The pointwise estimate
        (1-x^2)^(beta/2) |u - M/2|
            <= sqrt(C0/2) * sqrt((1-x^2)^beta * |log((1+x)(1-x0) / ((1-x)(1+x0)))|)
    with C0 = 2 E_0(u) and x0 an interior node where u is closest to M/2
    holds for the discrete quantities up to the mismatch |u(x0) - M/2|
    (the continuum argument has u(x0) = M/2 exactly).  Returns
    max_i [lhs_i - rhs_i - (1-x_i^2)^(beta/2) |u(x0) - M/2|], which should
    be <= roundoff for every field.
    """
    grid = field.grid
    x = grid.nodes
    flat = 0.5 * mass(field)
    dev = field.u - flat
    j0 = 1 + int(np.argmin(np.abs(dev[1:-1])))
    x0 = x[j0]
    eta = abs(dev[j0])
    c0 = 2.0 * energy(field, 0.0)
    wb = (1.0 - x * x) ** (0.5 * beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = np.log((1.0 + x) * (1.0 - x0) / ((1.0 - x) * (1.0 + x0)))
        rhs2 = 0.5 * c0 * (1.0 - x * x) ** beta * np.abs(logterm)
    rhs2 = np.where(np.abs(x) >= 1.0, 0.0, rhs2)
    margin = wb * np.abs(dev) - np.sqrt(rhs2) - wb * eta
    return float(np.max(margin))
