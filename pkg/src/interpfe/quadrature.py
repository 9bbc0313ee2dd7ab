"""Gauss rules on the reference triangle and the unit segment."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapabilityError

# Symmetric positive-weight rules (Dunavant orbits), parameters refined to
# double precision by solving the moment equations. Orbit weights are
# normalised to sum to 1 over the rule.
_S3, _S21, _S111 = "s3", "s21", "s111"
_ORBITS = {
    1: [(_S3, (), 1.0)],
    2: [(_S21, (1.0 / 6.0,), 1.0 / 3.0)],
    4: [(_S21, (0.4459484909159649,), 0.22338158967801147),
        (_S21, (0.09157621350977074,), 0.10995174365532187)],
    5: [(_S3, (), 0.225),
        (_S21, (0.4701420641051151,), 0.1323941527885062),
        (_S21, (0.10128650732345634,), 0.12593918054482714)],
    6: [(_S21, (0.24928674517091043,), 0.11678627572637937),
        (_S21, (0.06308901449150223,), 0.05084490637020682),
        (_S111, (0.053145049844816945, 0.3103524510337844), 0.08285107561837357)],
    8: [(_S3, (), 0.14431560767778717),
        (_S21, (0.4592925882927232,), 0.09509163426728462),
        (_S21, (0.1705693077517602,), 0.10321737053471824),
        (_S21, (0.05054722831703098,), 0.03245849762319808),
        (_S111, (0.008394777409957605, 0.2631128296346381), 0.027230314174434993)],
}
# requested exactness -> tabulated rule
_TRI_FOR = {1: 1, 2: 2, 3: 4, 4: 4, 5: 5, 6: 6, 7: 8, 8: 8}


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """``points`` are barycentric (triangle, shape (nq, 3)) or the segment
    parameter in [0, 1] (shape (nq,)); weights sum to the reference measure."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def ref(self) -> np.ndarray:
        """Reference-triangle coordinates (xi, eta) = (lambda1, lambda2)."""
        return self.points[:, 1:]

    def __len__(self):
        return len(self.weights)


def _expand(orbits):
    pts, w = [], []
    for kind, prm, wt in orbits:
        if kind == _S3:
            perms = [(1 / 3, 1 / 3, 1 / 3)]
        elif kind == _S21:
            a = prm[0]
            b = 1.0 - 2.0 * a
            perms = [(a, a, b), (a, b, a), (b, a, a)]
        else:
            a, b = prm
            c = 1.0 - a - b
            perms = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
        pts += perms
        w += [wt] * len(perms)
    return np.array(pts), 0.5 * np.array(w)


@lru_cache(maxsize=None)
def gauss_triangle(exactness: int) -> QuadratureRule:
    if exactness not in _TRI_FOR:
        raise CapabilityError(f"triangle rules exist for exactness 1..8, not {exactness!r}")
    deg = _TRI_FOR[exactness]
    pts, w = _expand(_ORBITS[deg])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, deg)


@lru_cache(maxsize=None)
def gauss_segment(exactness: int) -> QuadratureRule:
    if exactness < 0 or exactness > 40:
        raise CapabilityError(f"segment rules exist for exactness 0..40, not {exactness!r}")
    n = max(1, (exactness + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    pts, wts = 0.5 * (x + 1.0), 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, 2 * n - 1)
