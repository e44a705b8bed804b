"""Parametric smoothing of a nonparametric module FRF.

The rational model

    G(z, theta) = (b_d z^-d + ... + b_nb z^-nb) / (1 + a_1 z^-1 + ... + a_na z^-na)

is fitted by minimizing the variance-weighted cost

    V(theta) = (1/F) sum_f |G_hat(f) - G(z_f, theta)|^2 / var(f)

over ``F`` frequency lines. ``theta = (b_d, ..., b_nb, a_1, ..., a_na)``.
Initial values come from a linearized (Levy) fit refined by
Sanathanan-Koerner reweighting.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._optim import levenberg_marquardt
from .errors import DidNotConverge, NonFiniteCost, RankDeficient
from .lpm import mid_band
from .lti_core import RationalTF, grid_points

__all__ = ["ModelOrders", "TargetFrf", "ModuleEstimate", "model_frf",
           "model_jacobian", "weighted_cost", "init_theta", "fit_module",
           "fit_target"]

VAR_FLOOR = 1e-14


@dataclass(frozen=True)
class ModelOrders:
    nb: int
    na: int
    delay: int = 1

    def __post_init__(self):
        if self.nb < 0 or self.na < 0 or self.delay < 0:
            raise ValueError("orders must be nonnegative")
        if self.delay > self.nb:
            raise ValueError("delay exceeds numerator order")

    @property
    def n_num(self) -> int:
        return self.nb - self.delay + 1

    @property
    def n_theta(self) -> int:
        return self.n_num + self.na

    @classmethod
    def of(cls, tf: RationalTF) -> "ModelOrders":
        """Orders that represent ``tf`` exactly."""
        return cls(nb=tf.num.size - 1, na=tf.den.size - 1, delay=tf.delay)

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta[:self.n_num], theta[self.n_num:]

    def to_tf(self, theta) -> RationalTF:
        b, a = self.split(theta)
        num = np.zeros(self.nb + 1)
        num[self.delay:] = b
        return RationalTF(num, np.concatenate([[1.0], a]))

    def theta_of(self, tf: RationalTF) -> np.ndarray:
        num = np.zeros(self.nb + 1)
        den = np.zeros(self.na + 1)
        num[:min(tf.num.size, self.nb + 1)] = tf.num[:self.nb + 1]
        den[:min(tf.den.size, self.na + 1)] = tf.den[:self.na + 1]
        return np.concatenate([num[self.delay:], den[1:]])

    def to_dict(self) -> dict:
        return {"nb": self.nb, "na": self.na, "delay": self.delay}


@dataclass(frozen=True, eq=False)
class TargetFrf:
    """FRF samples with per-line variances on DFT lines of a length-``N`` record."""

    values: np.ndarray
    variance: np.ndarray
    lines: np.ndarray
    N: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        s2 = np.broadcast_to(np.asarray(self.variance, dtype=float), v.shape).copy()
        k = np.asarray(self.lines).ravel()
        if k.shape != v.shape:
            raise ValueError("values and lines must align")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "variance", s2)
        object.__setattr__(self, "lines", k)

    @property
    def zinv(self) -> np.ndarray:
        return grid_points(self.lines, self.N)

    @classmethod
    def from_indirect(cls, res, band: str = "mid", half_width: int | None = None):
        """Target FRF of an :class:`~netlpm.indirect.IndirectResult`.

        ``band="mid"`` keeps only lines whose LPM windows were not shifted at
        a band edge; ``band="all"`` keeps every estimated line.
        """
        keep = np.ones(res.line_indices.size, dtype=bool)
        if band == "mid":
            keep = ~res.edge
            if half_width is not None:
                keep &= np.isin(res.line_indices, mid_band(res.N, half_width))
        elif band != "all":
            raise ValueError("band must be 'mid' or 'all'")
        return cls(res.target_frf[keep], res.target_var[keep],
                   res.line_indices[keep], res.N)

    def weights(self) -> np.ndarray:
        """``1/var`` with variances floored at ``VAR_FLOOR * max(var)``."""
        s2 = self.variance
        if not np.all(np.isfinite(s2)) or s2.max() <= 0:
            raise RankDeficient("variances must be finite with a positive maximum")
        return 1.0 / np.maximum(s2, VAR_FLOOR * s2.max())


@dataclass(frozen=True, eq=False)
class ModuleEstimate:
    orders: ModelOrders
    theta: np.ndarray
    cost: float
    theta_cov: np.ndarray
    iterations: int
    converged: bool
    cost_history: tuple = field(default=(), repr=False)

    @property
    def tf(self) -> RationalTF:
        return self.orders.to_tf(self.theta)

    @property
    def stable(self) -> bool:
        return self.tf.is_stable()

    def to_dict(self) -> dict:
        return {"orders": self.orders.to_dict(),
                "theta": [float(x) for x in self.theta],
                "cost": float(self.cost),
                "converged": bool(self.converged),
                "iterations": int(self.iterations),
                "theta_cov": np.asarray(self.theta_cov, dtype=float).tolist(),
                "stable_flag": bool(self.stable)}


def _powers(zinv, first, last):
    return zinv[:, None] ** np.arange(first, last + 1)


def model_frf(theta, orders: ModelOrders, zinv) -> np.ndarray:
    b, a = orders.split(theta)
    zinv = np.asarray(zinv)
    B = _powers(zinv, orders.delay, orders.nb) @ b
    A = 1.0 + _powers(zinv, 1, orders.na) @ a
    return B / A


def model_jacobian(theta, orders: ModelOrders, zinv) -> np.ndarray:
    """``dG/dtheta``, shape ``(F, n_theta)``, complex."""
    b, a = orders.split(theta)
    zinv = np.asarray(zinv)
    Zb = _powers(zinv, orders.delay, orders.nb)
    Za = _powers(zinv, 1, orders.na)
    A = 1.0 + Za @ a
    B = Zb @ b
    return np.hstack([Zb / A[:, None], -Za * (B / A ** 2)[:, None]])


def weighted_cost(theta, frf: TargetFrf, orders: ModelOrders) -> float:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        e = frf.values - model_frf(theta, orders, frf.zinv)
    val = float(np.mean(np.abs(e) ** 2 * frf.weights()))
    return val if np.isfinite(val) else np.inf


def _check_size(frf, orders):
    if frf.values.size < orders.n_theta:
        raise RankDeficient(f"{frf.values.size} lines cannot determine "
                            f"{orders.n_theta} parameters")


def init_theta(frf: TargetFrf, orders: ModelOrders, sk_iterations: int = 20):
    """Linearized weighted fit followed by Sanathanan-Koerner reweighting.

    Returns the iterate with the lowest weighted cost.
    """
    _check_size(frf, orders)
    w = frf.weights()
    zinv = frf.zinv
    G = frf.values
    Zb = _powers(zinv, orders.delay, orders.nb)
    Za = _powers(zinv, 1, orders.na)
    # A*G - B = G + (Za*G) a - Zb b
    M = np.hstack([-Zb, Za * G[:, None]])
    best, best_cost = None, np.inf
    sk = np.ones_like(w)
    for _ in range(sk_iterations + 1):
        sw = np.sqrt(w * sk)
        Mr = np.vstack([(M * sw[:, None]).real, (M * sw[:, None]).imag])
        rhs = -np.concatenate([(G * sw).real, (G * sw).imag])
        if not np.all(np.isfinite(Mr)):
            raise RankDeficient("non-finite linearized regression")
        theta, *_ = np.linalg.lstsq(Mr, rhs, rcond=None)
        c = weighted_cost(theta, frf, orders)
        if c < best_cost:
            best, best_cost = theta, c
        _, a = orders.split(theta)
        A = 1.0 + Za @ a
        if np.any(np.abs(A) < 1e-12):
            break
        sk = 1.0 / np.abs(A) ** 2
    if best is None:
        best = theta
    return best


def fit_module(frf: TargetFrf, orders: ModelOrders, theta0=None,
               max_iter: int = 500) -> ModuleEstimate:
    """Minimize the weighted cost by Levenberg-Marquardt from ``theta0``."""
    _check_size(frf, orders)
    if theta0 is None:
        theta0 = init_theta(frf, orders)
    sw = np.sqrt(frf.weights())
    zinv = frf.zinv
    F = frf.values.size

    def fun(theta):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            _, a = orders.split(theta)
            A = 1.0 + _powers(zinv, 1, orders.na) @ a
            if np.any(np.abs(A) < 1e-12):
                return None
            e = (frf.values - model_frf(theta, orders, zinv)) * sw
            Je = -model_jacobian(theta, orders, zinv) * sw[:, None]
        return (np.concatenate([e.real, e.imag]),
                np.vstack([Je.real, Je.imag]))

    res = levenberg_marquardt(fun, theta0, scale=F, max_iter=max_iter)
    if res is None:
        raise NonFiniteCost("cost is not finite at the initial parameters")
    dof = max(2 * F - orders.n_theta, 1)
    s2 = float(res.residual @ res.residual) / dof
    cov = s2 * np.linalg.pinv(res.jtj)
    cov = 0.5 * (cov + cov.T)
    if not res.converged:
        warnings.warn(f"weighted fit stopped after {res.iterations} iterations "
                      "without meeting the gradient tolerance", DidNotConverge,
                      stacklevel=2)
    return ModuleEstimate(orders=orders, theta=res.theta, cost=res.cost,
                          theta_cov=cov, iterations=res.iterations,
                          converged=res.converged,
                          cost_history=tuple(res.history))


def fit_target(frf: TargetFrf, orders: ModelOrders, **kw) -> ModuleEstimate:
    """``init_theta`` followed by ``fit_module``."""
    return fit_module(frf, orders, init_theta(frf, orders), **kw)
