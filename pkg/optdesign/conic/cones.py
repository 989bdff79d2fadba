# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Algebra of products of nonnegative orthants and second-order cones.

Every operation is vectorized over the cones of a same dimension: the
second-order cones of dimension ``d`` are gathered in an index array of
shape ``(k, d)`` so that a whole group is handled by a few numpy calls.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp

if TYPE_CHECKING:
    from collections.abc import Iterable

    from numpy.typing import NDArray

    from .program import Cone

    FloatArray = NDArray[np.float64]
    IndexArray = NDArray[np.intp]


def _j(u: FloatArray) -> FloatArray:
    """``u0^2 - ||u1||^2`` for each row of a cone group."""
    return u[:, 0] ** 2 - np.sum(u[:, 1:] ** 2, axis=1)


def _reflect(u: FloatArray) -> FloatArray:
    out = -u
    out[:, 0] = u[:, 0]
    return out


@dataclass(slots=True)
class ConeLayout:
    """Where each cone lives inside the conic part of a slack vector."""
    size: int
    lp: IndexArray
    soc: dict[int, IndexArray] = field(default_factory=dict)

    @classmethod
    def from_cones(cls, cones: Iterable[Cone]) -> ConeLayout:
        from .program import NonNegCone, SecondOrderCone, ZeroCone

        lp: list[int] = []
        soc: defaultdict[int, list[list[int]]] = defaultdict(list)
        offset = 0
        for cone in cones:
            match cone:
                case ZeroCone():
                    continue
                case NonNegCone(size=size):
                    lp += range(offset, offset + size)
                case SecondOrderCone(size=size):
                    soc[size].append(list(range(offset, offset + size)))
            offset += cone.size

        return cls(
            size = offset,
            lp = np.array(lp, dtype=np.intp),
            soc = {d: np.array(idx, dtype=np.intp) for d, idx in soc.items()},
        )

    @property
    def degree(self) -> int:
        return self.lp.size + sum(idx.shape[0] for idx in self.soc.values())

    def identity(self) -> FloatArray:
        e = np.zeros(self.size)
        e[self.lp] = 1
        for idx in self.soc.values():
            e[idx[:, 0]] = 1
        return e

    def min_eigenvalue(self, u: FloatArray) -> float:
        """Smallest spectral value, negative when ``u`` is outside the cone."""
        low = [u[self.lp].min(initial=np.inf)]
        for idx in self.soc.values():
            block = u[idx]
            low.append(float(np.min(
                block[:, 0] - np.linalg.norm(block[:, 1:], axis=1),
            )))
        return float(min(low))

    def product(self, u: FloatArray, v: FloatArray) -> FloatArray:
        """Jordan product ``u o v``."""
        out = np.empty(self.size)
        out[self.lp] = u[self.lp] * v[self.lp]
        for idx in self.soc.values():
            a, b = u[idx], v[idx]
            block = a[:, :1] * b + b[:, :1] * a
            block[:, 0] = np.sum(a * b, axis=1)
            out[idx] = block
        return out

    def divide(self, lam: FloatArray, v: FloatArray) -> FloatArray:
        """Solve ``lam o x = v`` for ``x``."""
        out = np.empty(self.size)
        out[self.lp] = v[self.lp] / lam[self.lp]
        for idx in self.soc.values():
            a, b = lam[idx], v[idx]
            x0 = (a[:, 0] * b[:, 0] - np.sum(a[:, 1:] * b[:, 1:], axis=1))
            x0 /= _j(a)
            block = np.empty_like(b)
            block[:, 0] = x0
            block[:, 1:] = (b[:, 1:] - a[:, 1:] * x0[:, None]) / a[:, :1]
            out[idx] = block
        return out

    def max_step(self, u: FloatArray, du: FloatArray) -> float:
        """Largest ``alpha`` keeping ``u + alpha du`` in the cone."""
        steps = [np.inf]
        lp_u, lp_du = u[self.lp], du[self.lp]
        going_out = lp_du < 0
        if np.any(going_out):
            steps.append(float(np.min(-lp_u[going_out] / lp_du[going_out])))

        for idx in self.soc.values():
            a, b = u[idx], du[idx]
            quad = _j(b)
            half = a[:, 0] * b[:, 0] - np.sum(a[:, 1:] * b[:, 1:], axis=1)
            const = np.maximum(_j(a), 0)
            disc = half**2 - quad * const
            root = np.sqrt(np.maximum(disc, 0))
            q = -(half + np.copysign(root, half))
            with np.errstate(divide="ignore", invalid="ignore"):
                roots = np.stack((q / quad, const / q))
            roots[~(roots > 0)] = np.inf
            roots[:, disc < 0] = np.inf
            steps.append(float(roots.min()))

        return min(steps)


@dataclass(slots=True)
class Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^-1 s = lambda``."""
    layout: ConeLayout
    lp: FloatArray
    soc_w: dict[int, FloatArray]
    soc_eta: dict[int, FloatArray]
    lam: FloatArray

    @classmethod
    def compute(
        cls, layout: ConeLayout, s: FloatArray, z: FloatArray,
    ) -> Scaling:
        lp = np.sqrt(s[layout.lp] / z[layout.lp])
        soc_w: dict[int, FloatArray] = {}
        soc_eta: dict[int, FloatArray] = {}

        for d, idx in layout.soc.items():
            sb, zb = s[idx], z[idx]
            js, jz = _j(sb), _j(zb)
            if np.any(js <= 0) or np.any(jz <= 0):
                raise FloatingPointError("Iterate left the cone interior")
            sn = sb / np.sqrt(js)[:, None]
            zn = zb / np.sqrt(jz)[:, None]
            gamma = np.sqrt((1 + np.sum(sn * zn, axis=1)) / 2)
            soc_w[d] = (sn + _reflect(zn)) / (2 * gamma)[:, None]
            soc_eta[d] = (js / jz) ** 0.25

        scaling = cls(layout, lp, soc_w, soc_eta, np.empty(layout.size))
        scaling.lam = scaling.apply(z)
        return scaling

    def apply(self, v: FloatArray, inverse: bool = False) -> FloatArray:
        out = np.empty(self.layout.size)
        lp = self.layout.lp
        out[lp] = v[lp] / self.lp if inverse else v[lp] * self.lp

        for d, idx in self.layout.soc.items():
            w, eta, b = self.soc_w[d], self.soc_eta[d], v[idx]
            sign = -1 if inverse else 1
            dot = np.sum(w[:, 1:] * b[:, 1:], axis=1)
            block = np.empty_like(b)
            block[:, 0] = w[:, 0] * b[:, 0] + sign * dot
            coef = sign * b[:, 0] + dot / (1 + w[:, 0])
            block[:, 1:] = b[:, 1:] + coef[:, None] * w[:, 1:]
            factor = 1 / eta if inverse else eta
            out[idx] = block * factor[:, None]
        return out

    def squared(self) -> sp.coo_matrix:
        """``W^2`` as a sparse block-diagonal matrix."""
        lp = self.layout.lp
        rows, cols, vals = [lp], [lp], [self.lp**2]

        for d, idx in self.layout.soc.items():
            w, eta = self.soc_w[d], self.soc_eta[d]
            block = 2 * w[:, :, None] * w[:, None, :]
            block[:, 0, 0] -= 1
            diag = np.arange(1, d)
            block[:, diag, diag] += 1
            block *= (eta**2)[:, None, None]
            rows.append(np.broadcast_to(idx[:, :, None], block.shape).ravel())
            cols.append(np.broadcast_to(idx[:, None, :], block.shape).ravel())
            vals.append(block.ravel())

        size = self.layout.size
        return sp.coo_matrix(
            (
                np.concatenate(vals),
                (np.concatenate(rows), np.concatenate(cols)),
            ),
            shape=(size, size),
        )
