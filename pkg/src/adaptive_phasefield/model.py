"""Constitutive relations and closed-form length-field formulas.

Units are mm and MPa throughout. The energy functional is

    E(u, c, eps) = int (1-c)^2 psi(strain(u))
                   + G_c [ (c^2 + eta) / (2 eps) + eps/2 |grad c|^2 ] + beta eps dx

with the isotropic strain energy density psi = lam/2 tr(e)^2 + mu e:e.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

EPS_FLOOR = 1e-12


@dataclass(frozen=True)
class MaterialParams:
    """Lamé constants, toughness and the two length-field parameters."""

    lam: float = 121.1538e3
    mu: float = 80.7692e3
    g_c: float = 2.7
    beta: float = 421.875
    eta: float = 3.125

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.lam >= 0:
            raise ValueError("lam must be non-negative")
        for name in ("g_c", "beta", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def poisson_ratio(self) -> float:
        return self.lam / (2.0 * (self.lam + self.mu))

    @property
    def elasticity_matrix(self) -> np.ndarray:
        """Plane-strain Voigt matrix acting on (e_xx, e_yy, 2 e_xy)."""
        lam, mu = self.lam, self.mu
        return np.array([[lam + 2 * mu, lam, 0.0],
                         [lam, lam + 2 * mu, 0.0],
                         [0.0, 0.0, mu]])

    @property
    def far_field_length(self) -> float:
        """Optimal length where the material is intact: sqrt(eta G_c / (2 beta))."""
        return math.sqrt(self.eta * self.g_c / (2.0 * self.beta))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpsilonBounds:
    """Target far-field and crack-tip lengths used to estimate (beta, eta)."""

    eps_a: float
    eps_c: float

    def __post_init__(self):
        if not self.eps_a > self.eps_c > 0:
            raise ValueError("require eps_a > eps_c > 0")


def _sym(grad_u):
    grad_u = np.asarray(grad_u, dtype=float)
    return 0.5 * (grad_u + np.swapaxes(grad_u, -1, -2))


def strain_energy_density(grad_u, material: MaterialParams) -> np.ndarray:
    """psi = lam/2 tr(e)^2 + mu e:e for displacement gradients (..., 2, 2)."""
    e = _sym(grad_u)
    tr = e[..., 0, 0] + e[..., 1, 1]
    return 0.5 * material.lam * tr**2 + material.mu * np.sum(e * e, axis=(-2, -1))


def stress(grad_u, c, material: MaterialParams) -> np.ndarray:
    """Degraded stress (1-c)^2 (lam tr(e) I + 2 mu e)."""
    e = _sym(grad_u)
    tr = e[..., 0, 0] + e[..., 1, 1]
    sigma = 2.0 * material.mu * e
    sigma[..., 0, 0] += material.lam * tr
    sigma[..., 1, 1] += material.lam * tr
    g = (1.0 - np.asarray(c, dtype=float)) ** 2
    return g[..., None, None] * sigma


def update_history(h_prev, psi_now) -> np.ndarray:
    """Pointwise running maximum of the strain energy density."""
    h_prev = np.asarray(h_prev, dtype=float)
    psi_now = np.asarray(psi_now, dtype=float)
    if np.any(h_prev < 0) or np.any(psi_now < 0):
        raise ValueError("history and strain energy must be non-negative")
    return np.maximum(h_prev, psi_now)


def epsilon_spatial(c, grad_c, material: MaterialParams) -> np.ndarray:
    """Pointwise optimal length sqrt((c^2 + eta) / (|grad c|^2 + 2 beta / G_c)).

    ``grad_c`` has a trailing axis of size 2. The result is floored at
    ``EPS_FLOOR``.
    """
    c = np.asarray(c, dtype=float)
    g2 = np.sum(np.asarray(grad_c, dtype=float) ** 2, axis=-1)
    eps = np.sqrt((c * c + material.eta) / (g2 + 2.0 * material.beta / material.g_c))
    return np.maximum(eps, EPS_FLOOR)


def epsilon_uniform(mesh, state, material: MaterialParams) -> float:
    """Optimal uniform length: sqrt(int (c^2 + eta) / int (|grad c|^2 + 2 beta / G_c))."""
    from .fem.spaces import spaces_for

    s = spaces_for(mesh)
    c_q = s.c_at_quad(state.c)
    g_q = s.grad_c_at_quad(state.c)
    num = np.sum(s.dx * (c_q**2 + material.eta))
    den = np.sum(s.dx * (np.sum(g_q**2, axis=-1) + 2.0 * material.beta / material.g_c))
    return max(math.sqrt(num / den), EPS_FLOOR)


def epsilon_field(mesh, c: np.ndarray, material: MaterialParams) -> np.ndarray:
    """DG1 length field from the P2 phase field, evaluated at each cell's vertices.

    ``c`` is clamped to [0, 1] before evaluation; gradients use the P2
    polynomial restricted to the cell.
    """
    from .fem.spaces import P2_NODES, spaces_for

    s = spaces_for(mesh)
    local = c[s.c_dofs]
    out = np.empty((mesh.n_cells, 3))
    for i in range(3):
        grads = np.einsum("ca,cad->cd", local, s.p2_gradients(P2_NODES[i]))
        out[:, i] = epsilon_spatial(np.clip(local[:, i], 0.0, 1.0), grads, material)
    return out


def estimate_parameters(h: float, g_c: float) -> tuple[float, float]:
    """(beta, eta) for target lengths 10 h away from the crack and 2 h at its tip.

    With eps_a = 10 h at c = 0, |grad c| = 0 and eps_c = 2 h at c = 1,
    |grad c| = 1/h, the length formula gives beta = 3 G_c / (192 h^2) and
    eta = 200 h^2 beta / G_c = 3.125 independently of h.
    """
    if not (h > 0 and g_c > 0):
        raise ValueError("h and g_c must be positive")
    beta = 3.0 * g_c / (192.0 * h * h)
    eta = 200.0 * h * h * beta / g_c
    return beta, eta


def effective_toughness(g_c: float, h: float, eps: float) -> float:
    """Discretisation-inflated toughness G_c (1 + h / (4 eps)); diagnostic only."""
    if not (g_c > 0 and h > 0 and eps > 0):
        raise ValueError("arguments must be positive")
    return g_c * (1.0 + h / (4.0 * eps))
