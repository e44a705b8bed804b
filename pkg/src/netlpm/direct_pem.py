"""Direct-method baseline: MISO Box-Jenkins prediction-error identification.

For output node ``j`` with predictor nodes ``k in D``::

    eps(t) = D(q)/C(q) * ( w_j - r_j - sum_k B_k(q)/F_k(q) w_k )

with monic ``C`` and ``D`` (noise model ``H = C/D``). The cost
``V = mean(eps^2)`` is minimized over all numerator/denominator coefficients
with Levenberg-Marquardt and analytic gradients obtained by filtering. The
first ``max order`` samples of ``eps`` are excluded from the cost.

Parameter layout: for each predictor ``(b_delay..b_nb, f_1..f_nf)``, then
``(c_1..c_nc, d_1..d_nd)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from ._optim import levenberg_marquardt
from .errors import DidNotConverge, UnstableNoiseInverse
from .lti_core import RationalTF, freq_response
from .network import NetworkModel, PredictorSet
from .parfit import ModelOrders, ModuleEstimate, TargetFrf, fit_module, init_theta
from .simulator import TimeSeriesDataset

__all__ = ["MisoStructure", "PemResult", "pem_fit", "prediction_error",
           "arx_initial_theta"]


@dataclass(frozen=True)
class MisoStructure:
    output: int
    predictors: tuple
    module_orders: tuple
    noise_orders: tuple = (0, 0)      # (nc, nd)

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        object.__setattr__(self, "module_orders", tuple(self.module_orders))
        if len(self.predictors) != len(self.module_orders):
            raise ValueError("one ModelOrders per predictor is required")
        nc, nd = self.noise_orders
        if nc < 0 or nd < 0:
            raise ValueError("noise orders must be nonnegative")

    @classmethod
    def from_network(cls, model: NetworkModel, ps: PredictorSet,
                     target_orders: ModelOrders | None = None):
        """True orders of every module in ``G_jD`` and of ``H_jj``."""
        orders = []
        for k in ps.predictors:
            g = model.modules.get((ps.output, k))
            if k == ps.input and target_orders is not None:
                orders.append(target_orders)
            elif g is None or g.is_zero:
                orders.append(ModelOrders(1, 0, 1))
            else:
                orders.append(ModelOrders.of(g))
        h = model.noise_filters.get((ps.output, ps.output), RationalTF.identity())
        return cls(ps.output, ps.predictors, tuple(orders),
                   (h.num.size - 1, h.den.size - 1))

    @property
    def sizes(self) -> list[int]:
        return [o.n_theta for o in self.module_orders] + list(self.noise_orders)

    @property
    def n_theta(self) -> int:
        return sum(self.sizes)

    @property
    def skip(self) -> int:
        return max([o.nb for o in self.module_orders]
                   + [o.na for o in self.module_orders]
                   + list(self.noise_orders) + [0])

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        mods, pos = [], 0
        for o in self.module_orders:
            mods.append(theta[pos:pos + o.n_theta])
            pos += o.n_theta
        nc, nd = self.noise_orders
        c = np.concatenate([[1.0], theta[pos:pos + nc]])
        d = np.concatenate([[1.0], theta[pos + nc:pos + nc + nd]])
        return mods, c, d

    def polys(self, theta):
        """Full ``(B_k, F_k)`` coefficient arrays per predictor plus ``C, D``."""
        mods, c, d = self.unpack(theta)
        bf = []
        for o, th in zip(self.module_orders, mods):
            b, a = o.split(th)
            B = np.zeros(o.nb + 1)
            B[o.delay:] = b
            bf.append((B, np.concatenate([[1.0], a])))
        return bf, c, d


@dataclass(frozen=True, eq=False)
class PemResult:
    structure: MisoStructure
    theta: np.ndarray
    cost: float
    theta_cov: np.ndarray
    iterations: int
    converged: bool
    modules: dict                    # predictor node -> ModuleEstimate
    noise_model: RationalTF
    restarts: tuple = field(default=(), repr=False)   # final cost per start

    def module(self, node: int) -> ModuleEstimate:
        return self.modules[node]

    def to_dict(self, target: int | None = None) -> dict:
        out = {"method": "dm_to", "cost": float(self.cost),
               "converged": bool(self.converged),
               "iterations": int(self.iterations),
               "noise_model": {"num": self.noise_model.num.tolist(),
                               "den": self.noise_model.den.tolist()},
               "modules": {str(k): m.to_dict() for k, m in self.modules.items()}}
        if target is not None:
            out.update(self.modules[target].to_dict())
            out["cost"] = float(self.cost)
        return out


def _stable(poly) -> bool:
    return poly.size <= 1 or bool(np.all(np.abs(np.roots(poly)) < 1.0))


def _shift(x, s):
    if s == 0:
        return x
    out = np.zeros_like(x)
    out[s:] = x[:-s]
    return out


def _signals(ds: TimeSeriesDataset, st: MisoStructure):
    j = st.output
    y = ds.w_meas[j - 1] - ds.r[j - 1]
    u = [ds.w_meas[k - 1] for k in st.predictors]
    return y, u


def prediction_error(theta, ds: TimeSeriesDataset, st: MisoStructure) -> np.ndarray:
    """``eps(t, theta)`` over the full record (zero initial conditions)."""
    y, u = _signals(ds, st)
    bf, c, d = st.polys(theta)
    vhat = y - sum(lfilter(B, F, uk) for (B, F), uk in zip(bf, u))
    return lfilter(d, c, vhat)


def _residual_and_jacobian(theta, y, u, st: MisoStructure):
    bf, c, d = st.polys(theta)
    if not _stable(c) or not all(_stable(F) for _, F in bf):
        return None
    xs = [lfilter(B, F, uk) for (B, F), uk in zip(bf, u)]
    vhat = y - sum(xs)
    eps = lfilter(d, c, vhat)
    cols = []
    for o, (B, F), uk, xk in zip(st.module_orders, bf, u, xs):
        CF = np.convolve(c, F)
        phi = lfilter(d, CF, uk)
        psi = lfilter(d, CF, xk)
        cols += [-_shift(phi, s) for s in range(o.delay, o.nb + 1)]
        cols += [_shift(psi, s) for s in range(1, o.na + 1)]
    nc, nd = st.noise_orders
    if nc:
        ec = lfilter([1.0], c, eps)
        cols += [-_shift(ec, s) for s in range(1, nc + 1)]
    if nd:
        vc = lfilter([1.0], c, vhat)
        cols += [_shift(vc, s) for s in range(1, nd + 1)]
    J = np.column_stack(cols) if cols else np.zeros((y.size, 0))
    n0 = st.skip
    return eps[n0:], J[n0:]


def _reflect(poly):
    """Mirror roots outside the unit circle to make a monic polynomial stable."""
    if poly.size <= 1:
        return poly
    roots = np.roots(poly)
    big = np.abs(roots) >= 1.0
    if not np.any(big):
        return poly
    roots[big] = 0.99 / np.conj(roots[big])
    return np.real(np.poly(roots))


def _reduce_tf(num, den, orders: ModelOrders, n_grid: int = 1024) -> np.ndarray:
    """Fit a low-order model to the frequency response of ``num/den``."""
    lines = np.arange(1, n_grid // 2)
    tf = RationalTF(num, den)
    try:
        vals = freq_response(tf, lines, n_grid)
    except Exception:
        return np.zeros(orders.n_theta)
    target = TargetFrf(vals, np.ones(lines.size), lines, n_grid)
    theta = init_theta(target, orders)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DidNotConverge)
        try:
            theta = fit_module(target, orders, theta, max_iter=100).theta
        except Exception:
            pass
    b, a = orders.split(theta)
    a = _reflect(np.concatenate([[1.0], a]))[1:]
    return np.concatenate([b, a])


def _reduce_noise(den_ar, nc: int, nd: int, n_grid: int = 1024):
    """Monic ``C/D`` matching ``1/A`` by a linearized fit ``D*H - C = 0``."""
    lines = np.arange(1, n_grid // 2)
    zinv = np.exp(-2j * np.pi * lines / n_grid)
    H = 1.0 / np.polyval(den_ar[::-1], zinv)
    cols = [-(zinv ** s) for s in range(1, nc + 1)]
    cols += [(zinv ** s) * H for s in range(1, nd + 1)]
    if not cols:
        return np.array([1.0]), np.array([1.0])
    M = np.column_stack(cols)
    rhs = 1.0 - H
    Mr = np.vstack([M.real, M.imag])
    x, *_ = np.linalg.lstsq(Mr, np.concatenate([rhs.real, rhs.imag]), rcond=None)
    c = _reflect(np.concatenate([[1.0], x[:nc]]))
    d = _reflect(np.concatenate([[1.0], x[nc:]]))
    return c, d


def arx_initial_theta(ds: TimeSeriesDataset, st: MisoStructure,
                      arx_order: int = 10) -> np.ndarray:
    """High-order ARX estimate reduced to the requested orders.

    ``A y = sum_k B_k u_k + e`` gives ``G_k ~ B_k/A`` and ``H ~ 1/A``; each is
    then reduced by a frequency-domain fit.
    """
    y, u = _signals(ds, st)
    n = arx_order
    N = y.size
    rows = np.arange(n, N)
    cols = [-y[rows - s] for s in range(1, n + 1)]
    for uk in u:
        cols += [uk[rows - s] for s in range(1, n + 1)]
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, y[rows], rcond=None)
    A = np.concatenate([[1.0], coef[:n]])
    theta = []
    for m, o in enumerate(st.module_orders):
        B = np.concatenate([[0.0], coef[n * (m + 1):n * (m + 2)]])
        theta.append(_reduce_tf(B, A, o))
    nc, nd = st.noise_orders
    c, d = _reduce_noise(A, nc, nd)
    theta += [c[1:], d[1:]]
    return np.concatenate(theta)


def pem_fit(ds: TimeSeriesDataset, structure: MisoStructure, theta0=None, *,
            restarts: int = 5, perturbation: float = 0.1, restart_seed: int = 0,
            arx_order: int = 10, max_iter: int = 500) -> PemResult:
    """Prediction-error fit of the MISO Box-Jenkins structure.

    With ``theta0=None`` the first start is the ARX-based initialization and
    ``restarts - 1`` further starts perturb it multiplicatively by
    ``1 + perturbation * N(0, 1)`` (deterministic in ``restart_seed``). The
    start with the lowest final cost is returned.
    """
    st = structure
    y, u = _signals(ds, st)
    n_eff = y.size - st.skip
    if n_eff < 10 * st.n_theta:
        raise ValueError(f"{y.size} samples are too few for {st.n_theta} parameters")
    if theta0 is None:
        base = arx_initial_theta(ds, st, arx_order)
        rng = np.random.default_rng(restart_seed)
        starts = [base]
        for _ in range(max(restarts, 1) - 1):
            starts.append(base * (1.0 + perturbation * rng.standard_normal(base.size)))
    else:
        starts = [np.asarray(theta0, dtype=float)]

    def fun(theta):
        return _residual_and_jacobian(theta, y, u, st)

    best, finals = None, []
    for th0 in starts:
        res = levenberg_marquardt(fun, th0, scale=n_eff, max_iter=max_iter)
        if res is None:
            finals.append(float("nan"))
            continue
        finals.append(res.cost)
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise UnstableNoiseInverse("no start yields a stable predictor")
    if not best.converged:
        warnings.warn(f"prediction-error fit stopped after {best.iterations} "
                      "iterations without meeting the gradient tolerance",
                      DidNotConverge, stacklevel=2)
    dof = max(n_eff - st.n_theta, 1)
    s2 = float(best.residual @ best.residual) / dof
    cov = s2 * np.linalg.pinv(best.jtj)
    cov = 0.5 * (cov + cov.T)
    modules, pos = {}, 0
    for k, o in zip(st.predictors, st.module_orders):
        sl = slice(pos, pos + o.n_theta)
        modules[k] = ModuleEstimate(orders=o, theta=best.theta[sl].copy(),
                                    cost=best.cost, theta_cov=cov[sl, sl],
                                    iterations=best.iterations,
                                    converged=best.converged,
                                    cost_history=tuple(best.history))
        pos += o.n_theta
    _, c, d = st.unpack(best.theta)
    return PemResult(structure=st, theta=best.theta, cost=best.cost,
                     theta_cov=cov, iterations=best.iterations,
                     converged=best.converged, modules=modules,
                     noise_model=RationalTF(c, d), restarts=tuple(finals))
