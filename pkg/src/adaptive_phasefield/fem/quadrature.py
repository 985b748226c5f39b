"""Symmetric quadrature rules on the reference triangle (0,0), (1,0), (0,1)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# (weight, barycentric orbit generator); weights normalised to unit area
_RULES = {
    1: [(1.0, (1 / 3, 1 / 3, 1 / 3))],
    2: [(1 / 3, (2 / 3, 1 / 6, 1 / 6))],
    4: [
        (0.223381589678011, (0.108103018168070, 0.445948490915965, 0.445948490915965)),
        (0.109951743655322, (0.816847572980459, 0.091576213509771, 0.091576213509771)),
    ],
    5: [
        (0.225, (1 / 3, 1 / 3, 1 / 3)),
        (0.132394152788506, (0.059715871789770, 0.470142064105115, 0.470142064105115)),
        (0.125939180544827, (0.797426985353087, 0.101286507323456, 0.101286507323456)),
    ],
    6: [
        (0.116786275726379, (0.501426509658179, 0.249286745170910, 0.249286745170910)),
        (0.050844906370207, (0.873821971016996, 0.063089014491502, 0.063089014491502)),
        (0.082851075618374, (0.053145049844817, 0.310352451033784, 0.636502499121399)),
    ],
}
_RULES[3] = _RULES[4]


def _orbit(p):
    a, b, c = p
    perms = {(a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)}
    return sorted(perms)


@lru_cache(maxsize=None)
def quadrature_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights exact for polynomials of total degree ``degree``.

    Returns barycentric points of shape (nq, 3) and weights summing to 1/2,
    the area of the reference triangle. Reference coordinates are columns
    1 and 2 of the barycentric array.
    """
    if degree not in _RULES:
        raise ValueError(f"unsupported quadrature degree {degree}; choose 1..6")
    pts, wts = [], []
    for w, gen in _RULES[degree]:
        orbit = _orbit(gen)
        pts += orbit
        wts += [w] * len(orbit)
    pts = np.array(pts)
    wts = np.array(wts)
    wts = 0.5 * wts / wts.sum()  # table values carry 15 digits; renormalise exactly
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts
