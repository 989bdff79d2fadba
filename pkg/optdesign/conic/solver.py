# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Primal-dual interior-point method on the homogeneous self-dual embedding.

Zero-cone rows of a `ConeProgram` become equalities ``A x = b``, the other
rows the conic constraints ``G x + s = h``. Iterates ``(x, y, z, s, tau,
kappa)`` follow Nesterov-Todd scaled Newton directions with a Mehrotra
predictor-corrector; ``tau`` and ``kappa`` tell optimality from
infeasibility at the limit.

Dual vectors are reported over all program rows: the solution satisfies
``c + A^T y = 0`` with ``y`` free on zero rows and in the dual cone
elsewhere, the dual objective being ``-b^T y``.
"""

from __future__ import annotations

import logging as log
import math
from dataclasses import dataclass, field
from enum import auto
from typing import TYPE_CHECKING, Any

import numpy as np
import scipy.sparse as sp

from optdesign.utils import AutoStrEnum

from .cones import ConeLayout, Scaling
from .kkt import KKTSystem, NumericalFailure, log_stats
from .program import ZeroCone

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from .program import ConeProgram

    FloatArray = NDArray[np.float64]

STALL_STEP = 1e-9


class Status(AutoStrEnum):
    Optimal = auto()
    PrimalInfeasible = auto()
    DualInfeasible = auto()
    MaxIter = auto()
    NumericalFailure = auto()


@dataclass(frozen=True, slots=True)
class SolverSettings:
    tol: float = 1e-8
    tol_infeasible: float = 1e-8
    tol_inaccurate: float = 1e-6
    max_iter: int = 200
    regularization: float = 1e-9
    refinement_steps: int = 3
    step_fraction: float = 0.99
    dense_below: int = 500


@dataclass(frozen=True, slots=True)
class ConicSolution:
    status: Status
    x: FloatArray
    s: FloatArray
    y: FloatArray
    pcost: float
    dcost: float
    pres: float
    dres: float
    gap: float
    iterations: int
    stats: list[dict[str, float]] = field(default_factory=list)
    certificate: FloatArray | None = None
    reduced_accuracy: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == Status.Optimal

    @property
    def relative_gap(self) -> float:
        return self.gap / max(1.0, min(abs(self.pcost), abs(self.dcost)))

    def check(self) -> None:
        """Raise unless the solve ended with a usable point."""
        if self.status in {Status.MaxIter, Status.NumericalFailure}:
            raise NumericalFailure(
                f"Solver stopped with status {self.status.value} after "
                f"{self.iterations} iterations (pres {self.pres:.2e}, "
                f"dres {self.dres:.2e}, gap {self.gap:.2e})",
            )


@dataclass(slots=True)
class _Iterate:
    x: FloatArray
    y: FloatArray
    z: FloatArray
    s: FloatArray
    tau: float = 1.0
    kappa: float = 1.0


class ConicSolver:
    """Owns the factorization workspace of one program.

    One solve runs at a time per instance; separate instances are
    independent.
    """

    def __init__(
        self, program: ConeProgram, settings: SolverSettings | None = None,
    ) -> None:
        self.program = program
        self.settings = settings or SolverSettings()

        zero = np.zeros(program.num_rows, dtype=bool)
        offset = 0
        for cone in program.cone_spec:
            if isinstance(cone, ZeroCone):
                zero[offset:offset + cone.size] = True
            offset += cone.size

        self.eq_rows = np.flatnonzero(zero)
        self.cone_rows = np.flatnonzero(~zero)
        matrix = sp.csr_matrix(program.eq_matrix)
        self.a = matrix[self.eq_rows]
        self.g = matrix[self.cone_rows]
        self.b = program.eq_rhs[self.eq_rows]
        self.h = program.eq_rhs[self.cone_rows]
        self.c = program.objective
        self.layout = ConeLayout.from_cones(program.cone_spec)
        self.kkt = KKTSystem(
            self.a, self.g,
            regularization = self.settings.regularization,
            refinement_steps = self.settings.refinement_steps,
            dense_below = self.settings.dense_below,
        )

    def _initial_point(self) -> _Iterate:
        layout = self.layout
        n, p = self.a.shape[1], self.a.shape[0]
        self.kkt.factor(sp.identity(layout.size, format="coo"))

        x, _, slack = self.kkt.split(self.kkt.solve(
            np.concatenate((np.zeros(n), self.b, self.h)),
        ))
        _, y, z = self.kkt.split(self.kkt.solve(
            np.concatenate((-self.c, np.zeros(p + layout.size))),
        ))

        def shifted(u: FloatArray) -> FloatArray:
            alpha = -layout.min_eigenvalue(u)
            return u if alpha < 0 else u + (1 + alpha) * layout.identity()

        return _Iterate(x=x, y=y, z=shifted(z), s=shifted(-slack))

    def _full_rows(self, eq: FloatArray, cone: FloatArray) -> FloatArray:
        out = np.zeros(self.program.num_rows)
        out[self.eq_rows] = eq
        out[self.cone_rows] = cone
        return out

    def solve(self) -> ConicSolution:
        settings, layout = self.settings, self.layout
        c, b, h, a, g = self.c, self.b, self.h, self.a, self.g
        degree = layout.degree
        e = layout.identity()
        pres_scale = 1 + max(np.linalg.norm(b), np.linalg.norm(h))
        dres_scale = 1 + np.linalg.norm(c)
        stats: list[dict[str, float]] = []
        metrics: dict[str, float] = {}
        step = 0.0

        def finish(
            status: Status,
            it: _Iterate,
            certificate: FloatArray | None = None,
        ) -> ConicSolution:
            if status in {Status.MaxIter, Status.NumericalFailure} and all(
                metrics.get(k, math.inf) <= settings.tol_inaccurate
                for k in ("pres", "dres", "relgap")
            ):
                log.warning(
                    "Solver stopped early (%s), accepting point at reduced "
                    "accuracy", status.value,
                )
                return finish_with(Status.Optimal, it, certificate, True)
            return finish_with(status, it, certificate, False)

        def finish_with(
            status: Status,
            it: _Iterate,
            certificate: FloatArray | None,
            reduced: bool,
        ) -> ConicSolution:
            log_stats(stats)
            scale = it.tau if it.tau > 0 else 1.0
            solution = ConicSolution(
                status = status,
                x = it.x / scale,
                s = self._full_rows(np.zeros(self.b.size), it.s / scale),
                y = self._full_rows(it.y / scale, it.z / scale),
                pcost = metrics.get("pcost", math.nan) + self.program.offset,
                dcost = metrics.get("dcost", math.nan) + self.program.offset,
                pres = metrics.get("pres", math.inf),
                dres = metrics.get("dres", math.inf),
                gap = metrics.get("gap", math.inf),
                iterations = len(stats),
                stats = stats,
                certificate = certificate,
                reduced_accuracy = reduced,
            )
            log.info(
                "Cone program with %d variables and %d rows: %s after %d "
                "iterations (pcost %.8g, gap %.2e)",
                self.program.num_variables, self.program.num_rows,
                status.value, solution.iterations, solution.pcost,
                solution.gap,
            )
            return solution

        try:
            it = self._initial_point()
        except NumericalFailure:
            log.exception("Could not compute a starting point")
            n = c.size
            zeros = _Iterate(np.zeros(n), np.zeros(b.size),
                             np.zeros(layout.size), np.zeros(layout.size))
            return finish(Status.NumericalFailure, zeros)

        for iteration in range(settings.max_iter + 1):
            rx = a.T @ it.y + g.T @ it.z + c * it.tau
            ry = a @ it.x - b * it.tau
            rz = it.s + g @ it.x - h * it.tau
            cx, by, hz = float(c @ it.x), float(b @ it.y), float(h @ it.z)
            rt = it.kappa + cx + by + hz
            mu = (float(it.s @ it.z) + it.tau * it.kappa) / (degree + 1)

            pcost, dcost = cx / it.tau, -(by + hz) / it.tau
            gap = float(it.s @ it.z) / it.tau**2
            metrics = {
                "iter": iteration,
                "pcost": pcost,
                "dcost": dcost,
                "gap": gap,
                "relgap": gap / max(1.0, min(abs(pcost), abs(dcost))),
                "pres": max(np.linalg.norm(ry), np.linalg.norm(rz))
                / it.tau / pres_scale,
                "dres": float(np.linalg.norm(rx)) / it.tau / dres_scale,
                "step": step,
                "mu": mu,
                "tau": it.tau,
                "kappa": it.kappa,
            }
            stats.append(metrics)

            if not all(map(math.isfinite, metrics.values())):
                return finish(Status.NumericalFailure, it)

            if (
                metrics["pres"] <= settings.tol
                and metrics["dres"] <= settings.tol
                and metrics["relgap"] <= settings.tol
            ):
                return finish(Status.Optimal, it)

            if by + hz < 0 and it.tau < it.kappa:
                farkas = -(by + hz)
                residual = np.linalg.norm(rx - c * it.tau) / farkas
                if residual <= settings.tol_infeasible:
                    certificate = self._full_rows(it.y, it.z) / farkas
                    return finish(Status.PrimalInfeasible, it, certificate)

            if cx < 0 and it.tau < it.kappa:
                residual = max(
                    np.linalg.norm(a @ it.x), np.linalg.norm(g @ it.x + it.s),
                ) / -cx
                if residual <= settings.tol_infeasible:
                    return finish(Status.DualInfeasible, it, it.x / -cx)

            if iteration == settings.max_iter:
                return finish(Status.MaxIter, it)

            try:
                step = self._step(it, rx, ry, rz, rt, mu, e)
            except (NumericalFailure, FloatingPointError) as err:
                log.warning("Interior-point iteration failed: %s", err)
                return finish(Status.NumericalFailure, it)

            if step < STALL_STEP:
                log.warning("Interior-point steps stalled at %.2e", step)
                return finish(Status.NumericalFailure, it)

        return finish(Status.MaxIter, it)

    def _step(
        self,
        it: _Iterate,
        rx: FloatArray,
        ry: FloatArray,
        rz: FloatArray,
        rt: float,
        mu: float,
        e: FloatArray,
    ) -> float:
        """Take one predictor-corrector step in place, return its length."""
        layout, kkt = self.layout, self.kkt
        c, b, h = self.c, self.b, self.h
        tau, kappa = it.tau, it.kappa

        scaling = Scaling.compute(layout, it.s, it.z)
        kkt.factor(scaling.squared())
        lam = scaling.lam

        x1, y1, z1 = kkt.split(kkt.solve(np.concatenate((-c, b, h))))
        denominator = float(c @ x1 + b @ y1 + h @ z1) - kappa / tau

        def direction(
            eta: float, ds_target: FloatArray, dk_target: float,
        ) -> tuple[Any, ...]:
            scaled = layout.divide(lam, ds_target)
            rhs = np.concatenate((
                -eta * rx, -eta * ry, -eta * rz - scaling.apply(scaled),
            ))
            x2, y2, z2 = kkt.split(kkt.solve(rhs))
            dtau = (
                -eta * rt - dk_target / tau
                - float(c @ x2 + b @ y2 + h @ z2)
            ) / denominator
            dz = z2 + dtau * z1
            ds = scaling.apply(scaled - scaling.apply(dz))
            dkappa = (dk_target - kappa * dtau) / tau
            return x2 + dtau * x1, y2 + dtau * y1, dz, ds, dtau, dkappa

        def max_step(
            dz: FloatArray, ds: FloatArray, dtau: float, dkappa: float,
        ) -> float:
            steps = [layout.max_step(it.s, ds), layout.max_step(it.z, dz)]
            if dtau < 0:
                steps.append(-tau / dtau)
            if dkappa < 0:
                steps.append(-kappa / dkappa)
            return min(steps)

        square = layout.product(lam, lam)
        _, _, dz_a, ds_a, dtau_a, dkappa_a = direction(
            1.0, -square, -tau * kappa,
        )
        alpha = min(1.0, max_step(dz_a, ds_a, dtau_a, dkappa_a))
        sigma = min(1.0, max(0.0, (1 - alpha) ** 3))

        correction = layout.product(
            scaling.apply(ds_a, inverse=True), scaling.apply(dz_a),
        )
        dx, dy, dz, ds, dtau, dkappa = direction(
            1 - sigma,
            -square - correction + sigma * mu * e,
            -tau * kappa - dtau_a * dkappa_a + sigma * mu,
        )
        alpha = min(
            1.0, self.settings.step_fraction * max_step(dz, ds, dtau, dkappa),
        )

        it.x = it.x + alpha * dx
        it.y = it.y + alpha * dy
        it.z = it.z + alpha * dz
        it.s = it.s + alpha * ds
        it.tau += alpha * dtau
        it.kappa += alpha * dkappa
        return alpha


def solve(
    program: ConeProgram, settings: SolverSettings | None = None,
) -> ConicSolution:
    return ConicSolver(program, settings).solve()
