"""Damped Gauss-Newton (Levenberg-Marquardt) on real residual vectors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LmResult:
    theta: np.ndarray
    cost: float
    gradient: np.ndarray
    jtj: np.ndarray
    residual: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def levenberg_marquardt(fun, theta0, *, scale=1.0, admissible=None,
                        max_iter=500, gtol=1e-8, ftol=1e-10, xtol=1e-12,
                        lam0=1e-3):
    """Minimize ``||r(theta)||^2 / scale``.

    ``fun(theta)`` returns ``(r, J)`` with ``J = dr/dtheta``; it may return
    ``None`` (or a non-finite residual) for an inadmissible point, which
    rejects the step. ``admissible(theta) -> bool`` is an extra screen.
    Convergence means ``||grad|| <= gtol * (1 + cost)``. Iteration also stops
    after three consecutive stalled steps (step norm below ``xtol``, or
    relative cost decrease below ``ftol`` without halving the gradient), or
    when no admissible step exists.
    """
    theta = np.array(theta0, dtype=float)
    out = fun(theta)
    if out is None or not np.all(np.isfinite(out[0])):
        return None
    r, J = out
    cost = float(r @ r) / scale
    history = [cost]
    lam = lam0
    stalls = 0
    it = 0

    def grad_of(r, J):
        return 2.0 * (J.T @ r) / scale

    g = grad_of(r, J)
    while it < max_iter:
        if np.linalg.norm(g) <= gtol * (1.0 + cost):
            break
        JtJ = J.T @ J
        diag = np.diag(JtJ).copy()
        diag[diag <= 0] = 1.0
        Jtr = J.T @ r
        accepted = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(diag), -Jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = theta + step
            if admissible is not None and not admissible(cand):
                lam *= 10.0
                continue
            out = fun(cand)
            if out is None or not np.all(np.isfinite(out[0])):
                lam *= 10.0
                continue
            c_new = float(out[0] @ out[0]) / scale
            if c_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        it += 1
        rel = (cost - c_new) / max(cost, 1e-300)
        tiny = np.linalg.norm(step) < xtol * (1.0 + np.linalg.norm(theta))
        g_old = np.linalg.norm(g)
        theta, (r, J), cost = cand, out, c_new
        history.append(cost)
        g = grad_of(r, J)
        # a flat cost alone is not a stall while the gradient keeps shrinking
        small = tiny or (rel < ftol and np.linalg.norm(g) > 0.5 * g_old)
        lam = max(lam / 10.0, 1e-12)
        stalls = stalls + 1 if small else 0
        if stalls >= 3:
            break
    if it < max_iter:
        theta, r, J, cost, g, extra = _newton_polish(
            fun, theta, r, J, cost, g, scale, admissible, history)
        it += extra
    converged = bool(np.linalg.norm(g) <= gtol * (1.0 + cost))
    return LmResult(theta=theta, cost=cost, gradient=g, jtj=J.T @ J,
                    residual=r, iterations=it, converged=converged,
                    history=history)


def _newton_polish(fun, theta, r, J, cost, g, scale, admissible, history,
                   max_steps=20, step_tol=1e-10):
    """Newton steps with a finite-difference Hessian of the analytic gradient.

    Gauss-Newton converges only linearly when residuals stay large at the
    optimum; a few full Newton steps finish the job. Steps are accepted only
    if the cost does not increase and the gradient shrinks. Stops once the
    Newton step is below ``step_tol * (1 + |theta|)``, a test that does not
    depend on how the cost is scaled.
    """
    def grad_at(th):
        out = fun(th)
        if out is None or not np.all(np.isfinite(out[0])):
            return None
        return 2.0 * (out[1].T @ out[0]) / scale

    steps = 0
    for _ in range(max_steps):
        if not np.any(g):
            break
        n = theta.size
        H = np.empty((n, n))
        ok = True
        for i in range(n):
            h = 1e-6 * (1.0 + abs(theta[i]))
            e = np.zeros(n)
            e[i] = h
            gp, gm = grad_at(theta + e), grad_at(theta - e)
            if gp is None or gm is None:
                ok = False
                break
            H[:, i] = (gp - gm) / (2 * h)
        if not ok:
            break
        H = 0.5 * (H + H.T)
        try:
            np.linalg.cholesky(H)
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        if np.linalg.norm(step) <= step_tol * (1.0 + np.linalg.norm(theta)):
            break
        accepted = False
        for t in (1.0, 0.5, 0.25, 0.125):
            cand = theta + t * step
            if admissible is not None and not admissible(cand):
                continue
            out = fun(cand)
            if out is None or not np.all(np.isfinite(out[0])):
                continue
            c_new = float(out[0] @ out[0]) / scale
            g_new = 2.0 * (out[1].T @ out[0]) / scale
            if c_new <= cost and np.linalg.norm(g_new) < np.linalg.norm(g):
                accepted = True
                break
        if not accepted:
            break
        theta, (r, J), cost, g = cand, out, c_new, g_new
        history.append(cost)
        steps += 1
    return theta, r, J, cost, g, steps
