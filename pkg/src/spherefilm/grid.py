"""Uniform node-centered grid on (-1, 1) and its discrete calculus.

The substrate is the surface of a sphere; x = -cos(polar angle) maps it to
the interval (-1, 1) and produces the weight w(x) = 1 - x^2 that multiplies
every flux and vanishes at the poles x = +-1.  Alongside the grid itself
this module provides the three discrete operations everything else is
built from:

* ``face_differences``  -- first differences of node values onto face
  midpoints,
* ``node_divergence``   -- divergence of face values back onto nodes,
  weighted by the trapezoid cell widths and with zero boundary fluxes,
* ``quadrature``        -- composite trapezoid integration over (-1, 1).

The pair (face_differences, node_divergence) satisfies an exact
summation-by-parts identity with respect to the trapezoid inner product;
the solver relies on that identity to conserve mass and dissipate energy
and entropy at the discrete level, so do not change one without the other.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "Grid",
    "build_grid",
    "weight",
    "quadrature",
    "face_differences",
    "node_divergence",
    "reflect",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid with N cells, N+1 nodes including the endpoints +-1.

    ``cell_widths`` are the trapezoid weights (h/2 at the two boundary
    nodes, h inside); they double as the control-volume sizes of the
    flux-form discretization.  Instances are immutable and safe to share
    across concurrent runs.
    """

    N: int
    h: float
    nodes: np.ndarray
    faces: np.ndarray
    cell_widths: np.ndarray


def build_grid(N: int) -> Grid:
    """Build the uniform grid with N cells on [-1, 1].

    N must be even (so x = 0 is a node and reflection symmetry is exactly
    representable) and at least 8.
    """
    if not isinstance(N, (int, np.integer)):
        raise ConfigurationError(f"grid size must be an integer, got {N!r}")
    if N < 8:
        raise ConfigurationError(f"grid size N={N} too small, need N >= 8")
    if N % 2 != 0:
        raise ConfigurationError(f"grid size N={N} must be even")
    h = 2.0 / N
    nodes = -1.0 + h * np.arange(N + 1)
    nodes[0] = -1.0
    nodes[N] = 1.0
    nodes[N // 2] = 0.0
    faces = 0.5 * (nodes[:-1] + nodes[1:])
    widths = np.full(N + 1, h)
    widths[0] = 0.5 * h
    widths[-1] = 0.5 * h
    return Grid(N=int(N), h=h, nodes=nodes, faces=faces, cell_widths=widths)


def weight(x, delta: float = 0.0):
    """Degenerate spherical weight 1 - x^2, regularized to 1 - x^2 + delta."""
    if delta < 0.0:
        raise DomainError(f"regularization delta={delta} must be >= 0")
    x = np.asarray(x)
    w = 1.0 - x * x + delta
    return float(w) if w.ndim == 0 else w


def quadrature(values, grid: Grid) -> float:
    """Composite trapezoid approximation of the integral over (-1, 1).

    Exact for affine integrands, second-order for smooth ones.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.N + 1,):
        raise DomainError(
            f"quadrature expects {grid.N + 1} node values, got shape {values.shape}"
        )
    return float(np.dot(grid.cell_widths, values))


def face_differences(values: np.ndarray, grid: Grid) -> np.ndarray:
    """First difference quotients of node values at the N face midpoints."""
    return np.diff(values) / grid.h


def node_divergence(face_values: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence of a face field onto nodes, zero flux outside the domain.

    Node i receives (f_{i+1/2} - f_{i-1/2}) / cell_width_i with the two
    exterior fluxes taken as exactly zero.  This is the exact trapezoid
    adjoint of ``face_differences`` (up to sign), which is what makes the
    flux-form operator conservative and dissipative to roundoff.
    """
    padded = np.concatenate(([0.0], face_values, [0.0]))
    return np.diff(padded) / grid.cell_widths


def reflect(values: np.ndarray) -> np.ndarray:
    """Node values of u(-x); the node set is symmetric so this is a flip."""
    return values[::-1].copy()
