"""Model parameter bundles and derived quantities.

An :class:`Environment` collects the coefficients of the general backward
system: signed diagonal drifts ``b11``/``b22``, nondecreasing cross drifts
``b12``/``b21``, nondecreasing atom-free diffusion coefficients ``c1``/``c2``
and jump kernels ``m1``/``m2``.  A :class:`SpecialForm` is the finite-activity
parameterization (``gamma_ii``, ``gamma_ij``, ``mu_i``) that the Picard solver
and the exact simulator consume.

This module also provides admissibility validation, bottleneck detection,
the mean cross-drift measures, the conversion from special to general
coefficients, and the finite-activity approximation ladder used to
approximate a general mechanism by special ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import AdmissibilityError
from .measures import DiscreteSpatialMeasure, JumpMeasure, StieltjesMeasure, TimeGrid

__all__ = [
    "Environment",
    "SpecialForm",
    "ValidationReport",
    "validate",
    "atom_load",
    "bottlenecks",
    "last_bottleneck",
    "effective_cross_drift",
    "special_to_general",
    "finite_activity_approximation",
]

#: tolerance for the "<= 1" admissibility comparison and bottleneck detection;
#: atoms are user-specified exact inputs, so this only absorbs decimal-to-binary
#: conversion noise.
ATOM_TOL = 1e-12


def _other(i: int) -> int:
    if i not in (1, 2):
        raise ValueError("type index must be 1 or 2")
    return 3 - i


def _admissibility_integrand(i: int):
    # z_i^2 on the unit ball, z_i outside, plus the cross coordinate
    def fn(z1: float, z2: float) -> float:
        zi, zj = (z1, z2) if i == 1 else (z2, z1)
        own = zi * zi if z1 * z1 + z2 * z2 <= 1.0 else zi
        return own + zj

    return fn


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`: admissibility diagnostics, never raised."""

    moment_values: tuple
    delta_max: tuple
    bottleneck_times: tuple
    ok: bool
    messages: tuple


class Environment:
    """Coefficient bundle of the general two-type backward system."""

    def __init__(self, grid, b11, b22, b12, b21, c1, c2, m1, m2):
        for name, meas in (("b11", b11), ("b22", b22), ("b12", b12),
                           ("b21", b21), ("c1", c1), ("c2", c2)):
            if not meas.grid.same_as(grid):
                raise ValueError(f"{name} lives on a different grid")
        for name, meas in (("m1", m1), ("m2", m2)):
            if not meas.grid.same_as(grid):
                raise ValueError(f"{name} lives on a different grid")
        for name, meas in (("b12", b12), ("b21", b21)):
            if not meas.nondecreasing:
                raise ValueError(f"{name} must be a nondecreasing measure")
        for name, meas in (("c1", c1), ("c2", c2)):
            if not meas.nondecreasing:
                raise ValueError(f"{name} must be a nondecreasing measure")
            if meas.atoms:
                raise ValueError(f"{name} must be continuous (no time atoms)")
        self.grid = grid
        self.b11, self.b22 = b11, b22
        self.b12, self.b21 = b12, b21
        self.c1, self.c2 = c1, c2
        self.m1, self.m2 = m1, m2

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    @classmethod
    def zero(cls, grid: TimeGrid) -> "Environment":
        z = StieltjesMeasure.zero
        return cls(
            grid,
            z(grid), z(grid),
            z(grid, nondecreasing=True), z(grid, nondecreasing=True),
            z(grid, nondecreasing=True), z(grid, nondecreasing=True),
            JumpMeasure.zero(grid), JumpMeasure.zero(grid),
        )

    def b_diag(self, i: int) -> StieltjesMeasure:
        return self.b11 if i == 1 else self.b22

    def b_cross(self, i: int, j: int) -> StieltjesMeasure:
        if (i, j) == (1, 2):
            return self.b12
        if (i, j) == (2, 1):
            return self.b21
        raise ValueError("need i != j in {1, 2}")

    def c_diag(self, i: int) -> StieltjesMeasure:
        return self.c1 if i == 1 else self.c2

    def m_jump(self, i: int) -> JumpMeasure:
        return self.m1 if i == 1 else self.m2

    @cached_property
    def validation(self) -> ValidationReport:
        return validate(self)

    def require_valid(self) -> None:
        report = self.validation
        if not report.ok:
            raise AdmissibilityError("; ".join(report.messages) or "invalid environment")

    def refined(self, factor: int) -> "Environment":
        fine = self.grid.refine(factor)
        return Environment(
            fine,
            self.b11.on_refinement(fine, factor),
            self.b22.on_refinement(fine, factor),
            self.b12.on_refinement(fine, factor),
            self.b21.on_refinement(fine, factor),
            self.c1.on_refinement(fine, factor),
            self.c2.on_refinement(fine, factor),
            self.m1.on_refinement(fine, factor),
            self.m2.on_refinement(fine, factor),
        )


class SpecialForm:
    """Finite-activity coefficients: diagonal/cross drifts and jump kernels.

    Diagonal drifts may be signed but every atom must satisfy
    ``delta gamma_ii > -1``; cross drifts are nondecreasing; the
    (z1 + z2)-mass of each jump kernel is finite by construction.
    """

    def __init__(self, grid, gamma11, gamma22, gamma12, gamma21, mu1, mu2):
        for name, meas in (("gamma11", gamma11), ("gamma22", gamma22),
                           ("gamma12", gamma12), ("gamma21", gamma21)):
            if not meas.grid.same_as(grid):
                raise ValueError(f"{name} lives on a different grid")
        for name, meas in (("gamma12", gamma12), ("gamma21", gamma21)):
            if not meas.nondecreasing:
                raise ValueError(f"{name} must be a nondecreasing measure")
        for name, meas in (("mu1", mu1), ("mu2", mu2)):
            if not meas.grid.same_as(grid):
                raise ValueError(f"{name} lives on a different grid")
        for name, meas in (("gamma11", gamma11), ("gamma22", gamma22)):
            for t, mass in meas.atoms:
                if not mass > -1.0:
                    raise ValueError(f"{name} atom at {t} must exceed -1")
        self.grid = grid
        self.gamma11, self.gamma22 = gamma11, gamma22
        self.gamma12, self.gamma21 = gamma12, gamma21
        self.mu1, self.mu2 = mu1, mu2

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    @classmethod
    def zero(cls, grid: TimeGrid) -> "SpecialForm":
        z = StieltjesMeasure.zero
        return cls(
            grid,
            z(grid), z(grid),
            z(grid, nondecreasing=True), z(grid, nondecreasing=True),
            JumpMeasure.zero(grid), JumpMeasure.zero(grid),
        )

    def gamma_diag(self, i: int) -> StieltjesMeasure:
        return self.gamma11 if i == 1 else self.gamma22

    def gamma_cross(self, i: int, j: int) -> StieltjesMeasure:
        if (i, j) == (1, 2):
            return self.gamma12
        if (i, j) == (2, 1):
            return self.gamma21
        raise ValueError("need i != j in {1, 2}")

    def mu_jump(self, i: int) -> JumpMeasure:
        return self.mu1 if i == 1 else self.mu2

    def refined(self, factor: int) -> "SpecialForm":
        fine = self.grid.refine(factor)
        return SpecialForm(
            fine,
            self.gamma11.on_refinement(fine, factor),
            self.gamma22.on_refinement(fine, factor),
            self.gamma12.on_refinement(fine, factor),
            self.gamma21.on_refinement(fine, factor),
            self.mu1.on_refinement(fine, factor),
            self.mu2.on_refinement(fine, factor),
        )


def atom_load(env: Environment, i: int, s: float) -> float:
    """Diagonal atom load at time s: drift jump plus own-coordinate jump mass.

    This is the quantity whose value 1 marks a type-i extinction point and
    whose admissible range is (-inf, 1].
    """
    _other(i)  # validates the type index
    load = env.b_diag(i).atom_mass_at(s)
    spatial = env.m_jump(i).atom_at(s)
    if i == 1:
        load += spatial.weighted_total(lambda z1, z2: z1)
    else:
        load += spatial.weighted_total(lambda z1, z2: z2)
    return load


def bottlenecks(env: Environment) -> list:
    """All (time, type) pairs where the diagonal drift jump equals exactly 1
    with no compensating cross-drift jump or jump-kernel atom."""
    found = []
    for i in (1, 2):
        j = _other(i)
        cross = env.b_cross(i, j)
        for t, mass in env.b_diag(i).atoms:
            if abs(mass - 1.0) > ATOM_TOL:
                continue
            if cross.atom_mass_at(t) != 0.0:
                continue
            if env.m_jump(i).atom_at(t).points:
                continue
            found.append((t, i))
    found.sort()
    return found


def last_bottleneck(env: Environment, t: float):
    """Largest bottleneck time in (0, t], or None when there is none."""
    if t < 0.0 or t > env.horizon:
        raise ValueError("t outside [0, T]")
    times = [s for s, _ in bottlenecks(env) if s <= t]
    return max(times) if times else None


def validate(env: Environment) -> ValidationReport:
    """Admissibility report: jump-moment totals, worst atom loads, bottlenecks.

    Reports rather than raises; ``ok`` is False iff some atom load exceeds
    1 beyond tolerance.
    """
    T = env.horizon
    messages = []
    moments = tuple(
        env.m_jump(i).moment_measure(_admissibility_integrand(i)).cumulative(T)
        for i in (1, 2)
    )
    deltas = []
    ok = True
    for i in (1, 2):
        worst = 0.0
        for t, _ in env.b_diag(i).atoms:
            worst = max(worst, atom_load(env, i, t))
        for t, _ in env.m_jump(i).time_atoms:
            worst = max(worst, atom_load(env, i, t))
        deltas.append(worst)
        if worst > 1.0 + ATOM_TOL:
            ok = False
            messages.append(f"type-{i} atom load {worst:.6g} exceeds 1")
    if not all(math.isfinite(m) for m in moments):
        ok = False
        messages.append("jump moment integral is not finite")
    times = tuple(t for t, _ in bottlenecks(env))
    return ValidationReport(moments, tuple(deltas), times, ok, tuple(messages))


def effective_cross_drift(env: Environment, i: int, j: int) -> StieltjesMeasure:
    """Cross drift plus the mean cross-coordinate inflow of the jump kernel."""
    if j != _other(i):
        raise ValueError("need i != j in {1, 2}")
    cross_fn = (lambda z1, z2: z2) if j == 2 else (lambda z1, z2: z1)
    inflow = env.m_jump(i).moment_measure(cross_fn)
    return StieltjesMeasure.linear_combination(
        env.grid,
        [(1.0, env.b_cross(i, j)), (1.0, inflow)],
        nondecreasing=True,
    )


def special_to_general(sf: SpecialForm) -> Environment:
    """Express finite-activity coefficients in the general parameterization.

    The diagonal drift absorbs both the negated diagonal coefficient and the
    mean own-coordinate jump inflow; cross drifts and kernels carry over,
    diffusion is zero.  Raises if the result fails admissibility (possible
    only for inputs outside the admissible class).
    """
    grid = sf.grid

    def diag(i: int) -> StieltjesMeasure:
        own_fn = (lambda z1, z2: z1) if i == 1 else (lambda z1, z2: z2)
        own = sf.mu_jump(i).moment_measure(own_fn)
        return StieltjesMeasure.linear_combination(
            grid, [(-1.0, sf.gamma_diag(i)), (-1.0, own)]
        )

    env = Environment(
        grid,
        diag(1), diag(2),
        StieltjesMeasure(grid, sf.gamma12.density, sf.gamma12.atoms, True),
        StieltjesMeasure(grid, sf.gamma21.density, sf.gamma21.atoms, True),
        StieltjesMeasure.zero(grid, True), StieltjesMeasure.zero(grid, True),
        sf.mu1, sf.mu2,
    )
    env.require_valid()
    return env


def finite_activity_approximation(env: Environment, n: int) -> SpecialForm:
    """Level-n finite-activity approximation of a general environment.

    Diffusion is replaced by small jumps of size 1/n at rate 2 n^2 c_i, the
    kernel is thinned by (1 - e^{-n})(1 ^ n|z|), and the diagonal drift picks
    up the matching compensators plus an e^{-n} variation cushion that keeps
    every diagonal atom above -1.  Increasing n tightens the approximation
    monotonically.
    """
    if not isinstance(n, int) or n < 1:
        raise ValueError("approximation level must be a positive integer")
    grid = env.grid
    en = math.exp(-n)
    shrink = 1.0 - en

    def thin_factor(z1: float, z2: float) -> float:
        return shrink * min(1.0, n * math.hypot(z1, z2))

    def diag(i: int) -> StieltjesMeasure:
        own_fn = (lambda z1, z2: z1) if i == 1 else (lambda z1, z2: z2)
        thinned_own = env.m_jump(i).thinned(thin_factor).moment_measure(own_fn)
        return StieltjesMeasure.linear_combination(
            grid,
            [
                (-1.0, env.b_diag(i)),
                (en, env.b_diag(i).abs()),
                (-2.0 * n, env.c_diag(i)),
                (-1.0, thinned_own),
            ],
        )

    def cross(i: int, j: int) -> StieltjesMeasure:
        # factored as b_ij + sum z_j w (1 - thin factor): each term is
        # nonnegative, so the nondecreasing flag holds in floating point too
        cross_fn = (lambda z1, z2: z2) if j == 2 else (lambda z1, z2: z1)
        kept = env.m_jump(i).thinned(
            lambda z1, z2: 1.0 - thin_factor(z1, z2)
        ).moment_measure(cross_fn)
        return StieltjesMeasure.linear_combination(
            grid, [(1.0, env.b_cross(i, j)), (1.0, kept)], nondecreasing=True
        )

    def jumps(i: int) -> JumpMeasure:
        small = (1.0 / n, 0.0) if i == 1 else (0.0, 1.0 / n)
        c_dens = env.c_diag(i).density
        thinned = env.m_jump(i).thinned(thin_factor)
        kernels = []
        for k, base in enumerate(thinned.cell_kernels):
            pts = list(base.points)
            rate = 2.0 * n * n * float(c_dens[k])
            if rate > 0.0:
                pts.append((small[0], small[1], rate))
            kernels.append(DiscreteSpatialMeasure(tuple(pts)))
        return JumpMeasure(grid, tuple(kernels), thinned.time_atoms)

    return SpecialForm(
        grid, diag(1), diag(2), cross(1, 2), cross(2, 1), jumps(1), jumps(2)
    )
