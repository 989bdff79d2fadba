# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Optimality certificates that do not depend on how a design was found.

Each check returns a `Certificate` of named residuals, every residual
being compared to its own tolerance. Failures are reported, never raised.
"""

from __future__ import annotations

import math
from enum import auto
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, computed_field

from optdesign.baselines import kiefer_ratio
from optdesign.formulations import nested_models
from optdesign.model import (
    Criterion,
    Design,
    DesignProblem,
    Inestimable,
    blue_coefficients,
    c_variance,
    information_matrix,
    sub_information_matrices,
    target_variance,
)
from optdesign.utils import AutoStrEnum

if TYPE_CHECKING:
    from numpy.typing import NDArray

    FloatArray = NDArray[np.float64]

DEFAULT_TOL = 1e-6


class CertificateKind(AutoStrEnum):
    Elfving = auto()
    RankOneSDP = auto()
    SBetaKKT = auto()
    KieferGap = auto()
    BudgetDuality = auto()


class Certificate(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: CertificateKind
    residuals: dict[str, float]
    tolerances: dict[str, float]

    @computed_field
    @property
    def passed(self) -> bool:
        return all(
            value <= self.tolerances[name]
            for name, value in self.residuals.items()
        )

    @property
    def worst(self) -> tuple[str, float]:
        """Residual farthest above (or closest to) its tolerance."""
        if not self.residuals:
            return ("", 0.0)
        name = max(
            self.residuals,
            key=lambda n: self.residuals[n] / self.tolerances[n],
        )
        return (name, self.residuals[name])

    @property
    def failed(self) -> list[str]:
        return [
            name for name, value in self.residuals.items()
            if not value <= self.tolerances[name]
        ]

    def report(self) -> str:
        lines = [f"{self.kind.value}: {'PASS' if self.passed else 'FAIL'}"]
        lines += [
            "  %-24s %12.3e  (tol %.1e)%s" % (
                name, value, self.tolerances[name],
                "" if value <= self.tolerances[name] else "  VIOLATED",
            )
            for name, value in self.residuals.items()
        ]
        return "\n".join(lines)


def _certificate(
    kind: CertificateKind, residuals: dict[str, float], tol: float,
) -> Certificate:
    clean = {
        name: float(value) if math.isfinite(value) else math.inf
        for name, value in residuals.items()
    }
    return Certificate(
        kind = kind,
        residuals = clean,
        tolerances = dict.fromkeys(clean, tol),
    )


def check_elfving(
    problem: DesignProblem,
    c: FloatArray,
    design: Design,
    blocks: list[FloatArray],
    tol: float = DEFAULT_TOL,
) -> Certificate:
    """Elfving condition ``t c = sum_i w_i A_i^T eps_i``.

    With ``t = 1 / sum ||h_i||`` and ``eps_i = h_i / ||h_i||`` the design
    is c-optimal exactly when the weights are proportional to the block
    norms and ``t^-2`` is the variance of the design.
    """
    c = np.asarray(c, dtype=np.float64)
    w = design.weights
    norms = np.array([float(np.linalg.norm(h)) for h in blocks])
    total = float(norms.sum())
    if total <= 0:
        return _certificate(CertificateKind.Elfving, {"blocks": math.inf}, tol)

    t = 1 / total
    eps = [
        h.reshape(-1) / n if n > 0 else np.zeros(h.size)
        for h, n in zip(blocks, norms, strict=True)
    ]
    combination = sum(
        (
            weight * (a.T @ e)
            for weight, a, e in zip(
                w, problem.observation_matrices, eps, strict=True,
            )
        ),
        start=np.zeros(problem.num_params),
    )
    unbiased = sum(
        (
            a.T @ h.reshape(-1)
            for a, h in zip(problem.observation_matrices, blocks, strict=True)
        ),
        start=np.zeros(problem.num_params),
    )
    scale = float(np.linalg.norm(c)) or 1.0

    try:
        variance = c_variance(problem, design, c)
        variance_residual = abs(t**-2 - variance) / variance
    except Inestimable:
        variance_residual = math.inf

    return _certificate(CertificateKind.Elfving, {
        "boundary": float(np.linalg.norm(t * c - combination)) / scale,
        "unit_ball": max(
            (float(np.linalg.norm(e)) - 1 for e in eps), default=0.0,
        ),
        "proportionality": float(np.max(np.abs(w - norms / total))),
        "unbiased": float(np.linalg.norm(unbiased - c)) / scale,
        "variance": variance_residual,
    }, tol)


def elfving_blocks(
    problem: DesignProblem, design: Design, c: FloatArray,
) -> list[FloatArray]:
    """Estimator blocks ``h_i = w_i A_i M^+ c`` of a design."""
    return [h.reshape(-1) for h in blue_coefficients(problem, design, c)]


def check_rank_one_sdp(
    problem: DesignProblem,
    c: FloatArray,
    u: FloatArray,
    variance: float,
    tol: float = DEFAULT_TOL,
) -> Certificate:
    """``X = u u^T`` is feasible and optimal for the packing SDP.

    Feasibility ``trace(A_i X A_i^T) = ||A_i u||^2 <= 1`` and the value
    ``c^T X c = (c^T u)^2`` matching the variance pin down a rank-one
    optimum without solving the SDP.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    loads = [float(np.sum((a @ u) ** 2)) for a in problem.observation_matrices]
    value = float(np.asarray(c) @ u) ** 2
    return _certificate(CertificateKind.RankOneSDP, {
        "packing": max(max(loads, default=0.0) - 1, 0.0),
        "objective": abs(value - variance) / max(abs(variance), 1e-300),
    }, tol)


def check_budget_duality(
    problem: DesignProblem,
    c: FloatArray,
    design: Design,
    bound: float,
    tol: float = DEFAULT_TOL,
) -> Certificate:
    """A design under ``R w <= b`` whose variance meets a dual lower bound.

    Any dual feasible value of the constrained program bounds the variance
    of every admissible design from below, so equality proves optimality.
    """
    assert problem.constraints is not None
    r, b = problem.constraints.matrix, problem.constraints.bound
    excess = float(np.max(r @ design.weights - b, initial=0.0))
    try:
        variance = c_variance(problem, design, c)
        gap = abs(variance - bound) / max(abs(bound), 1e-300)
    except Inestimable:
        gap = math.inf
    return _certificate(CertificateKind.BudgetDuality, {
        "budget": max(excess, 0.0) / (1 + float(np.max(np.abs(b)))),
        "variance": gap,
    }, tol)


def s_beta_candidate(
    problem: DesignProblem, design: Design,
) -> tuple[FloatArray, list[list[FloatArray]], list[FloatArray]]:
    """KKT data ``(t, eps, h)`` implied by a design for the S-criterion.

    ``t_k = var_k^-1/2``, ``eps_ik = t_k A_(k),i M_k^- c_k`` and
    ``h_k = beta_k M_k^- c_k / sqrt(var_k)``. Models with a zero belief
    weight are skipped.
    """
    assert problem.models is not None and problem.beta is not None
    infos = sub_information_matrices(problem, design)
    t, eps, h = [], [[] for _ in range(problem.s)], []

    for beta, info, model in zip(
        problem.beta, infos, problem.models, strict=True,
    ):
        if beta <= 0:
            continue
        variance = target_variance(info, model.target)
        solved = info.pinv() @ model.target
        t.append(1 / math.sqrt(variance))
        h.append(beta * solved / math.sqrt(variance))
        for i, a in enumerate(model.observation_matrices):
            eps[i].append(t[-1] * (a @ solved))

    return np.array(t), eps, h


def check_s_beta_kkt(
    problem: DesignProblem,
    design: Design,
    t: FloatArray,
    eps: list[list[FloatArray]],
    h: list[FloatArray],
    tol: float = DEFAULT_TOL,
) -> Certificate:
    """Geometric KKT conditions of S-optimality.

    ``eps[i][k]`` and ``h[k]``, ``t[k]`` run over the models with a
    positive belief weight. The supporting-hyperplane condition is checked
    through the per-experiment dual bound
    ``sqrt(sum_k ||A_(k),i h_k||^2 / beta_k) <= 1``, which is attained on
    the support.
    """
    assert problem.models is not None and problem.beta is not None
    active = [k for k, beta in enumerate(problem.beta) if beta > 0]
    beta = problem.beta[active]
    models = [problem.models[k] for k in active]
    w = design.weights
    support = set(design.support)

    ellipsoid, bound, equality = [], [], []
    for i in range(problem.s):
        ellipsoid.append(sum(
            b * float(np.sum(e**2)) for b, e in zip(beta, eps[i], strict=True)
        ) - 1)
        images = [
            model.observation_matrices[i] @ hk
            for model, hk in zip(models, h, strict=True)
        ]
        bound.append(math.sqrt(sum(
            float(np.sum(img**2)) / b
            for img, b in zip(images, beta, strict=True)
        )) - 1)
        if i in support:
            evaluation = sum(
                float(e.reshape(-1) @ img.reshape(-1))
                for e, img in zip(eps[i], images, strict=True)
            )
            equality.append(abs(evaluation - 1))

    representation = [
        float(np.linalg.norm(
            t[j] * model.target - sum(
                (
                    w[i] * (a.T @ eps[i][j])
                    for i, a in enumerate(model.observation_matrices)
                ),
                start=np.zeros(model.num_params),
            ),
        )) / (1 + t[j] * float(np.linalg.norm(model.target)))
        for j, model in enumerate(models)
    ]
    alignment = [
        abs(t[j] * float(h[j] @ model.target) - beta[j])
        for j, model in enumerate(models)
    ]

    return _certificate(CertificateKind.SBetaKKT, {
        "ellipsoid": max(max(ellipsoid, default=0.0), 0.0),
        "representation": max(representation, default=0.0),
        "dual_bound": max(max(bound, default=0.0), 0.0),
        "support_equality": max(equality, default=0.0),
        "alignment": max(alignment, default=0.0),
        "simplex": abs(design.total - 1),
    }, tol)


def optimality_gap(
    problem: DesignProblem, design: Design, criterion: Criterion,
) -> float:
    """Kiefer ratio minus one, zero only at an optimal design."""
    return kiefer_ratio(problem, design, criterion) - 1


def check_kiefer_gap(
    problem: DesignProblem,
    design: Design,
    criterion: Criterion,
    tol: float = DEFAULT_TOL,
) -> Certificate:
    return _certificate(CertificateKind.KieferGap, {
        "gap": max(optimality_gap(problem, design, criterion), 0.0),
        "simplex": abs(design.total - 1),
    }, tol)


def default_certificate(
    problem: DesignProblem, criterion: Criterion,
) -> CertificateKind:
    if not problem.is_simplex:
        return CertificateKind.BudgetDuality
    return {
        Criterion.c: CertificateKind.Elfving,
        Criterion.D: CertificateKind.SBetaKKT,
        Criterion.S: CertificateKind.SBetaKKT,
    }.get(criterion, CertificateKind.KieferGap)


def certify(
    problem: DesignProblem,
    design: Design,
    criterion: Criterion,
    kind: CertificateKind | None = None,
    tol: float = DEFAULT_TOL,
    bound: float | None = None,
) -> Certificate:
    """Check a design with the certificate matching its criterion.

    Estimator blocks, ``u`` and the KKT data are rebuilt from the design
    alone, so any design (file, solver or baseline) can be audited. Only
    constrained designs need the dual ``bound`` of their program.
    """
    kind = kind or default_certificate(problem, criterion)
    match kind:
        case CertificateKind.Elfving | CertificateKind.RankOneSDP:
            c = problem.target_matrix[:, 0]
            blocks = elfving_blocks(problem, design, c)
            if kind == CertificateKind.Elfving:
                return check_elfving(problem, c, design, blocks, tol)
            info = information_matrix(problem, design)
            variance = c_variance(problem, design, c)
            u = info.pinv() @ c / math.sqrt(variance)
            return check_rank_one_sdp(problem, c, u, variance, tol)
        case CertificateKind.BudgetDuality:
            if bound is None:
                raise ValueError("A dual bound is needed for this design")
            c = problem.target_matrix[:, 0]
            return check_budget_duality(problem, c, design, bound, tol)
        case CertificateKind.SBetaKKT:
            if problem.models is None:
                problem = nested_models(problem)
            t, eps, h = s_beta_candidate(problem, design)
            return check_s_beta_kkt(problem, design, t, eps, h, tol)
        case CertificateKind.KieferGap:
            return check_kiefer_gap(problem, design, criterion, tol)
