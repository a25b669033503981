"""Distributions, complements, projections, and connections on R^m.

Everything lives in a single coordinate chart.  The state space fibres over
its first n coordinates; the vertical directions are the remaining m-n
coordinate directions, and a connection tilts the horizontal complement by
polynomial coefficients gamma.  Coordinate labels in returned mappings are
1-based (matching the usual index notation); programmatic variable indices
are 0-based throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .numutil import numeric_rank
from .poly import Poly, PolyMatrix, poly_adjugate, poly_det

GridPoint = tuple[Fraction, ...]


class FrameRankError(ValueError):
    """A frame fails its constant-rank check somewhere on the grid."""


class ComplementError(ValueError):
    """No usable complement to the control distribution was found."""


def default_grid(m: int, per_axis: int = 3, bound: Fraction | int = 1) -> list[GridPoint]:
    """Rational lattice over [-bound, bound]^m, origin always included."""
    if per_axis < 1:
        raise ValueError("per_axis must be positive")
    bound = Fraction(bound)
    if per_axis == 1:
        values = [Fraction(0)]
    else:
        values = [Fraction(2 * i, per_axis - 1) * bound - bound for i in range(per_axis)]
    points = [tuple(p) for p in itertools.product(values, repeat=m)]
    origin = (Fraction(0),) * m
    if origin not in points:
        points.append(origin)
    return points


def grid_floats(grid: Sequence[GridPoint]) -> list[tuple[float, ...]]:
    return [tuple(float(v) for v in point) for point in grid]


@dataclass(frozen=True)
class Frame:
    """Column vector fields spanning a constant-rank distribution on R^m."""

    dim: int
    fields: tuple[tuple[Poly, ...], ...]

    @staticmethod
    def build(dim: int, fields: Sequence[Sequence[Poly]], grid: Sequence[GridPoint] | None = None) -> "Frame":
        """Validate shapes and constant rank on the check grid."""
        cols = tuple(tuple(col) for col in fields)
        for col in cols:
            if len(col) != dim:
                raise ValueError("frame column length does not match dimension")
            for entry in col:
                if entry.nvars != dim:
                    raise ValueError("frame entries must be polynomials in the ambient variables")
        frame = Frame(dim, cols)
        if cols:
            if grid is None:
                grid = default_grid(dim)
            for point in grid_floats(grid):
                if numeric_rank(frame.matrix_at(point)) != len(cols):
                    raise FrameRankError(f"frame drops rank at grid point {point}")
        return frame

    @property
    def rank(self) -> int:
        return len(self.fields)

    def matrix_at(self, point: Sequence[float]) -> np.ndarray:
        out = np.zeros((self.dim, len(self.fields)))
        for j, col in enumerate(self.fields):
            for i, entry in enumerate(col):
                out[i, j] = entry.eval_float(point)
        return out

    def as_matrix(self) -> PolyMatrix:
        """Columns of the frame as an m-by-rank polynomial matrix."""
        return PolyMatrix(
            [[self.fields[j][i] for j in range(len(self.fields))] for i in range(self.dim)],
            cols=len(self.fields),
            nvars=self.dim,
        )


def control_distribution(system, grid: Sequence[GridPoint] | None = None) -> Frame:
    """Frame spanned by the control vector fields of a control-affine system."""
    return Frame.build(system.m, system.f, grid)


def complement_frame(
    c: Frame,
    user_d: Sequence[Sequence[Poly]] | None = None,
    grid: Sequence[GridPoint] | None = None,
) -> Frame:
    """A distribution D with TM = C (+) D, from the user or by coordinate search.

    The automatic search walks the coordinate directions in index order and
    keeps those that enlarge the span at every grid point; it then requires
    det[C | D] to be a nonzero constant so that the projection onto D is
    polynomial.  Supply ``user_d`` when that search is too naive.
    """
    m = c.dim
    if grid is None:
        grid = default_grid(m)
    fgrid = grid_floats(grid)
    if user_d is not None:
        d = Frame.build(m, user_d, grid)
        if c.rank + d.rank != m:
            raise ComplementError("user complement has the wrong rank")
        for point in fgrid:
            if numeric_rank(np.hstack([c.matrix_at(point), d.matrix_at(point)])) != m:
                raise FrameRankError(f"[C | D] is singular at grid point {point}")
        return d

    chosen: list[tuple[Poly, ...]] = []
    for i in range(m):
        if len(chosen) == m - c.rank:
            break
        candidate = tuple(Poly.const(m, 1) if k == i else Poly.zero(m) for k in range(m))
        trial = Frame(m, tuple(chosen) + (candidate,))
        target = c.rank + len(chosen) + 1
        if all(numeric_rank(np.hstack([c.matrix_at(p), trial.matrix_at(p)])) == target for p in fgrid):
            chosen.append(candidate)
    if len(chosen) != m - c.rank:
        raise ComplementError("no coordinate complement found; supply one explicitly")
    d = Frame(m, tuple(chosen))
    det = poly_det(_stack_columns(c, d))
    if not det.is_constant() or det.is_zero():
        raise ComplementError(
            "automatic complement has a non-constant [C | D] determinant; supply one explicitly"
        )
    return d


def _stack_columns(c: Frame, d: Frame) -> PolyMatrix:
    m = c.dim
    cols = list(c.fields) + list(d.fields)
    return PolyMatrix([[cols[j][i] for j in range(len(cols))] for i in range(m)], cols=len(cols), nvars=m)


class EhresmannConnection:
    """Connection on the fibration over the first n coordinates.

    ``gamma[p][q]`` is the coefficient attached to vertical coordinate
    n+1+p and base coordinate 1+q (0-based storage of the 1-based labels);
    all entries are polynomials in the m ambient variables.
    """

    __slots__ = ("m", "n", "gamma")

    def __init__(self, m: int, n: int, gamma: Sequence[Sequence[Poly]]):
        if not 1 <= n < m:
            raise ValueError("need at least one base and one fibre coordinate (1 <= n < m)")
        gamma = tuple(tuple(row) for row in gamma)
        if len(gamma) != m - n or any(len(row) != n for row in gamma):
            raise ValueError(f"gamma must be ({m - n})x{n}")
        for row in gamma:
            for entry in row:
                if entry.nvars != m:
                    raise ValueError("gamma entries must be polynomials in the m ambient variables")
        self.m = m
        self.n = n
        self.gamma = gamma

    @classmethod
    def flat(cls, m: int, n: int) -> "EhresmannConnection":
        zero = Poly.zero(m)
        return cls(m, n, [[zero] * n for _ in range(m - n)])


def build_p_vm(conn: EhresmannConnection) -> PolyMatrix:
    """m-by-n projection matrix: identity on the base block, gamma below."""
    m, n = conn.m, conn.n
    rows = []
    for i in range(n):
        rows.append([Poly.const(m, 1) if i == q else Poly.zero(m) for q in range(n)])
    for p in range(m - n):
        rows.append(list(conn.gamma[p]))
    return PolyMatrix(rows, cols=n, nvars=m)


def horizontal_frame(conn: EhresmannConnection) -> list[list[Poly]]:
    """The n horizontal frame fields h_q = d/dx^q + sum_p gamma^p_q d/dx^p."""
    m, n = conn.m, conn.n
    frame = []
    for q in range(n):
        field = [Poly.zero(m) for _ in range(m)]
        field[q] = Poly.const(m, 1)
        for p in range(m - n):
            field[n + p] = conn.gamma[p][q]
        frame.append(field)
    return frame


def ann_horizontal_basis(conn: EhresmannConnection) -> list[list[Poly]]:
    """Covector basis of ann(HM): dx^p - sum_q gamma^p_q dx^q for each fibre p."""
    m, n = conn.m, conn.n
    basis = []
    for p in range(m - n):
        omega = [Poly.zero(m) for _ in range(m)]
        omega[n + p] = Poly.const(m, 1)
        for q in range(n):
            omega[q] = -conn.gamma[p][q]
        basis.append(omega)
    return basis


def horizontal_lift(conn: EhresmannConnection, w: Sequence[Poly]) -> list[Poly]:
    """Lift a base vector field (components in y1..yn) to the total space.

    Base slot q carries w^q with y identified with the first base
    coordinates; fibre slot p carries sum_q gamma^p_q * w^q.
    """
    m, n = conn.m, conn.n
    if len(w) != n:
        raise ValueError(f"expected {n} base components, got {len(w)}")
    lifted_base = []
    for comp in w:
        if comp.nvars != n:
            raise ValueError("base components must be polynomials in the n base variables")
        lifted_base.append(comp.embed(m))
    out = list(lifted_base)
    for p in range(m - n):
        out.append(poly_dot(conn.gamma[p], lifted_base))
    return out


def poly_dot(a: Sequence[Poly], b: Sequence[Poly]) -> Poly:
    if len(a) != len(b):
        raise ValueError("length mismatch")
    if not a:
        raise ValueError("empty dot product")
    total = Poly.zero(a[0].nvars)
    for x, y in zip(a, b):
        total = total + x * y
    return total


def sharp(omega: Sequence[Poly]) -> list[Poly]:
    """Index-raising on coordinate components (identity reindexing)."""
    return list(omega)


def flat(vector: Sequence[Poly]) -> list[Poly]:
    """Index-lowering on coordinate components (inverse of :func:`sharp`)."""
    return list(vector)


def curvature_components(conn: EhresmannConnection) -> dict[tuple[int, int, int], Poly]:
    """Curvature of the connection, one component per (l, q1 < q2).

    Keys are 1-based coordinate labels (l is a fibre coordinate, q1 and q2
    base coordinates).  The connection is flat exactly when every returned
    polynomial is identically zero.  The component formula is

        F^l_(q1,q2) = d(gamma^l_q1)/dx^q2 - d(gamma^l_q2)/dx^q1
                      + sum_l1 [ gamma^l1_q2 * d(gamma^l_q1)/dx^l1
                                 - gamma^l1_q1 * d(gamma^l_q2)/dx^l1 ]

    with l1 running over the fibre coordinates.
    """
    m, n = conn.m, conn.n
    out: dict[tuple[int, int, int], Poly] = {}
    for p in range(m - n):
        g_l = conn.gamma[p]
        for q1 in range(n):
            for q2 in range(q1 + 1, n):
                comp = g_l[q1].diff(q2) - g_l[q2].diff(q1)
                for l1 in range(m - n):
                    comp = comp + conn.gamma[l1][q2] * g_l[q1].diff(n + l1)
                    comp = comp - conn.gamma[l1][q1] * g_l[q2].diff(n + l1)
                out[(n + 1 + p, q1 + 1, q2 + 1)] = comp
    return out


@dataclass
class ProjectionPair:
    """Projection data for the splitting TM = C (+) D and the connection.

    ``p_d`` is the (m-r)-by-m projection onto the D coordinates (None when
    only the pointwise-numeric path is available), ``p_vm`` the m-by-n
    matrix whose columns span ann(VM) and whose transpose has ann(HM) as
    kernel.
    """

    c_frame: Frame
    d_frame: Frame
    p_d: PolyMatrix | None
    p_vm: PolyMatrix
    cd_det: Poly | None
    cd_matrix: PolyMatrix

    @property
    def m(self) -> int:
        return self.c_frame.dim

    @property
    def symbolic(self) -> bool:
        return self.p_d is not None

    def p_d_at(self, point: Sequence[float]) -> np.ndarray:
        """Numeric value of the D-projection at a point, in either mode."""
        if self.p_d is not None:
            return self.p_d.at(point)
        r = self.c_frame.rank
        t = self.cd_matrix.at(point)
        return np.linalg.inv(t)[r:, :]


def build_projections(
    c: Frame,
    d: Frame,
    conn: EhresmannConnection,
    grid: Sequence[GridPoint] | None = None,
) -> ProjectionPair:
    """Assemble P_D and P_VM for a chosen complement and connection.

    When det[C | D] is a nonzero constant the projection rows are exact
    polynomials (adjugate over the constant determinant) and satisfy
    P_D @ C = 0 and P_D @ D = I identically.  Otherwise P_D is kept as a
    pointwise-numeric evaluator and downstream checks fall back to grid
    evaluation.
    """
    m = c.dim
    if d.dim != m or c.rank + d.rank != m:
        raise ValueError("C and D do not split the tangent space")
    if conn.m != m:
        raise ValueError("connection dimension does not match the frames")
    t = _stack_columns(c, d)
    det = poly_det(t)
    p_vm = build_p_vm(conn)
    if det.is_constant() and not det.is_zero():
        inv = poly_adjugate(t).scale(Fraction(1) / det.constant_term)
        bottom = [inv.row(i) for i in range(c.rank, m)]
        p_d = PolyMatrix(bottom, cols=m, nvars=m)
        return ProjectionPair(c, d, p_d, p_vm, det, t)
    if grid is None:
        grid = default_grid(m)
    for point in grid_floats(grid):
        if numeric_rank(t.at(point)) != m:
            raise FrameRankError(f"[C | D] is singular at grid point {point}")
    return ProjectionPair(c, d, None, p_vm, None, t)
