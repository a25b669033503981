"""Construction of the lift V by exact Taylor-coefficient solving.

The residual blocks are linear in V, so requiring them to vanish through a
chosen degree turns into an exact linear system over the rationals in the
unknown Taylor coefficients of V at the origin.  The constant coefficient
is pinned to 0 and the linear coefficients are pinned to 0 as well (the
candidate Lyapunov function must have a critical point at the
equilibrium); free coefficients left by the solve are filled by a seeding
policy and the assembled candidate is re-verified and validated for
positive definiteness afterwards.  No convergence claim is made for the
series: the truncated polynomial is the candidate, and it is checked, not
trusted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .integrability import ResidualSystem, residual_psi
from .poly import DEGREE_CAP, MultiIndex, Poly, grlex_key
from .sysmodel import hessian_at_origin


class JetInfeasibleError(ValueError):
    """The coefficient constraints are mutually inconsistent."""

    def __init__(self, message: str, witness: str):
        super().__init__(message)
        self.witness = witness


def _monomials_of_degree(m: int, degree: int) -> list[MultiIndex]:
    out = []
    for combo in itertools.combinations_with_replacement(range(m), degree):
        exps = [0] * m
        for i in combo:
            exps[i] += 1
        out.append(tuple(exps))
    return sorted(out, key=grlex_key)


def monomials_up_to(m: int, max_degree: int, min_degree: int = 0) -> list[MultiIndex]:
    out: list[MultiIndex] = []
    for d in range(min_degree, max_degree + 1):
        out.extend(_monomials_of_degree(m, d))
    return out


@dataclass
class LinearSystem:
    """Exact linear constraints A @ c = b on the unknown V coefficients."""

    order: int
    unknowns: list[MultiIndex]
    rows: list[list[Fraction]]
    rhs: list[Fraction]
    labels: list[str]


def assemble_lift_system(rs: ResidualSystem, order: int) -> LinearSystem:
    """Equations forcing both residual blocks to vanish through degree order-1.

    Unknowns are the V coefficients of total degree 2..order.  One equation
    is emitted per residual component and per monomial of degree at most
    order-1, which is exactly the part of the residual determined by the
    retained coefficients.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if order > DEGREE_CAP:
        raise ValueError(f"order {order} exceeds the degree cap {DEGREE_CAP}")
    m = rs.m
    unknowns = monomials_up_to(m, order, min_degree=2)
    zero = Poly.zero(m)
    base_d, base_vm = residual_psi(rs, zero)
    columns: list[tuple[list[Poly], list[Poly]]] = []
    for mi in unknowns:
        d_blk, vm_blk = residual_psi(rs, Poly.monomial(m, mi))
        columns.append(
            (
                [d_blk[a] - base_d[a] for a in range(len(base_d))],
                list(vm_blk),
            )
        )
    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    labels: list[str] = []
    eq_monomials = monomials_up_to(m, order - 1)
    for block_name, base_block, col_index in (("d", base_d, 0), ("vm", base_vm, 1)):
        for comp in range(len(base_block)):
            for mu in eq_monomials:
                row = [columns[j][col_index][comp].coeff(mu) for j in range(len(unknowns))]
                rv = -base_block[comp].coeff(mu)
                if any(row) or rv != 0:
                    rows.append(row)
                    rhs.append(rv)
                    labels.append(f"{block_name}[{comp + 1}] @ x^{mu}")
    return LinearSystem(order, unknowns, rows, rhs, labels)


@dataclass
class JetSolution:
    """Solved Taylor coefficients of V at the origin."""

    order: int
    coeffs: dict[MultiIndex, Fraction]
    free_seeded: list[MultiIndex]
    residual_degree_checked: int

    def polynomial(self, m: int) -> Poly:
        return Poly(m, dict(self.coeffs))


def solve_jets(system: LinearSystem, rs: ResidualSystem, fibre_start: int) -> JetSolution:
    """Exact rational solve with the vertical-quadratic seeding policy.

    Free coefficients of the form (x^p)^2 with p a fibre coordinate
    (0-based index >= fibre_start) are set to 1/2; all other free
    coefficients are set to 0.  The solved candidate is re-verified: both
    residual blocks must vanish exactly through degree order-1.
    """
    values, free_cols = _solve_exact(system, _seed_policy(system.unknowns, rs.m, fibre_start))
    coeffs = {mi: values[j] for j, mi in enumerate(system.unknowns) if values[j] != 0}
    solution = JetSolution(
        order=system.order,
        coeffs=coeffs,
        free_seeded=[system.unknowns[j] for j in free_cols],
        residual_degree_checked=system.order - 1,
    )
    v = solution.polynomial(rs.m)
    d_blk, vm_blk = residual_psi(rs, v)
    for comp in d_blk + vm_blk:
        if not comp.truncate(system.order - 1).is_zero():
            raise RuntimeError("internal error: solved coefficients fail re-verification")
    return solution


def _seed_policy(unknowns: Sequence[MultiIndex], m: int, fibre_start: int) -> dict[int, Fraction]:
    seeds: dict[int, Fraction] = {}
    for j, mi in enumerate(unknowns):
        if sum(mi) == 2 and any(mi[p] == 2 for p in range(fibre_start, m)):
            seeds[j] = Fraction(1, 2)
    return seeds


def _solve_exact(
    system: LinearSystem, seeds: dict[int, Fraction]
) -> tuple[list[Fraction], list[int]]:
    """Gauss-Jordan over Fraction; free columns get their seed value (or 0)."""
    ncols = len(system.unknowns)
    aug = [list(row) + [rv] for row, rv in zip(system.rows, system.rhs)]
    nrows = len(aug)
    pivot_of_col: dict[int, int] = {}
    rank = 0
    for col in range(ncols):
        pivot_row = None
        for i in range(rank, nrows):
            if aug[i][col] != 0:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        aug[rank], aug[pivot_row] = aug[pivot_row], aug[rank]
        pivot = aug[rank][col]
        aug[rank] = [v / pivot for v in aug[rank]]
        for i in range(nrows):
            if i != rank and aug[i][col] != 0:
                factor = aug[i][col]
                aug[i] = [a - factor * b for a, b in zip(aug[i], aug[rank])]
        pivot_of_col[col] = rank
        rank += 1
    for i in range(rank, nrows):
        if aug[i][ncols] != 0:
            # Which original equation the contradiction traces back to is
            # not recoverable after elimination; report the first residual
            # label whose row is not representable.
            raise JetInfeasibleError(
                "coefficient constraints are inconsistent",
                witness=_inconsistency_witness(system),
            )
    free_cols = [c for c in range(ncols) if c not in pivot_of_col]
    values: list[Fraction] = [Fraction(0)] * ncols
    for c in free_cols:
        values[c] = seeds.get(c, Fraction(0))
    for col, row in pivot_of_col.items():
        total = aug[row][ncols]
        for c in free_cols:
            if aug[row][c] != 0:
                total -= aug[row][c] * values[c]
        values[col] = total
    return values, free_cols


def _inconsistency_witness(system: LinearSystem) -> str:
    """Label of a constraint participating in the contradiction.

    Re-runs a forward elimination on the augmented matrix keeping track of
    the first original row that reduces to 0 = nonzero.
    """
    ncols = len(system.unknowns)
    aug = [(list(row) + [rv], label) for row, rv, label in zip(system.rows, system.rhs, system.labels)]
    reduced: list[list[Fraction]] = []
    for row, label in aug:
        work = list(row)
        for pivot_row in reduced:
            lead = next((c for c in range(ncols) if pivot_row[c] != 0), None)
            if lead is not None and work[lead] != 0:
                factor = work[lead] / pivot_row[lead]
                work = [a - factor * b for a, b in zip(work, pivot_row)]
        if all(v == 0 for v in work[:ncols]):
            if work[ncols] != 0:
                return label
        else:
            reduced.append(work)
    return system.labels[0] if system.labels else "empty system"


def system_residual(system: LinearSystem, solution: JetSolution) -> list[Fraction]:
    """Exact residual A @ c - b of the linear system at a solution."""
    values = [solution.coeffs.get(mi, Fraction(0)) for mi in system.unknowns]
    out = []
    for row, rv in zip(system.rows, system.rhs):
        total = -rv
        for a, c in zip(row, values):
            total += a * c
        out.append(total)
    return out


@dataclass
class DefinitenessDiagnostics:
    hessian_eigenvalues: list[float]
    min_eigenvalue: float
    sphere_min: float
    witness: list[float] | None
    ok: bool


def assemble_vstar(
    pullback_vtilde: Poly,
    jet: JetSolution,
    eig_tol: float = 1e-9,
    radii: Sequence[float] = (0.1, 0.5, 1.0),
    directions: int = 64,
    seed: int = 20240,
) -> tuple[Poly, DefinitenessDiagnostics]:
    """Assemble the candidate Lyapunov function and probe its definiteness.

    The candidate is the pulled-back quotient function plus the solved V.
    Diagnostics: Hessian eigenvalues at the origin (all must exceed
    eig_tol) and sampled positivity on spheres of the given radii (at
    least ``directions`` random unit directions each).  A failure carries
    the offending direction.
    """
    m = pullback_vtilde.nvars
    vstar = pullback_vtilde + jet.polynomial(m)
    eigs = np.linalg.eigvalsh(hessian_at_origin(vstar))
    witness: list[float] | None = None
    ok = True
    if eigs.min() <= eig_tol:
        ok = False
        eigvecs = np.linalg.eigh(hessian_at_origin(vstar))[1]
        witness = [float(v) for v in eigvecs[:, 0]]
    rng = np.random.default_rng(seed)
    sphere_min = float("inf")
    for radius in radii:
        for _ in range(directions):
            direction = rng.standard_normal(m)
            direction /= np.linalg.norm(direction)
            value = vstar.eval_float(radius * direction)
            if value < sphere_min:
                sphere_min = value
                if value <= 0.0 and witness is None:
                    witness = [float(v) for v in direction]
        # sampling continues across radii even after a failure so the
        # reported minimum is global over the probe set
    if sphere_min <= 0.0:
        ok = False
    diagnostics = DefinitenessDiagnostics(
        hessian_eigenvalues=[float(e) for e in eigs],
        min_eigenvalue=float(eigs.min()),
        sphere_min=sphere_min,
        witness=witness,
        ok=ok,
    )
    return vstar, diagnostics
