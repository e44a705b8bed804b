"""Local Polynomial Method for FRF, transient and noise-variance estimation.

Around each center line ``f`` the model

    Y(f+r) = sum_s g_s r^s U(f+r) + sum_s t_s r^s + E(f+r),   s = 0..d

is fitted by linear least squares over ``2*n_w + 1`` consecutive DFT lines.
``g_0`` is the FRF estimate at ``f`` and ``t_0`` the transient (leakage)
estimate. The same regressor matrix serves every output channel, so all
outputs are solved with a single orthogonal factorization per center.

DFT convention: ``X(k) = sum_t x(t) exp(-2j pi k t / N)``, unnormalized.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientLines, InvariantViolation, RankDeficientWindow

__all__ = ["dft", "SpectrumRecord", "LpmConfig", "FrfEstimate", "lpm_estimate",
           "spectrum_from_time", "mid_band", "write_frf_csv"]

COND_LIMIT = 1e12


def dft(samples, N: int | None = None) -> np.ndarray:
    """Spectrum at bins ``0..N//2`` along the last axis."""
    x = np.asarray(samples, dtype=float)
    if N is None:
        N = x.shape[-1]
    if x.shape[-1] != N:
        raise ValueError(f"expected {N} samples, got {x.shape[-1]}")
    return np.fft.rfft(x, axis=-1)


def mid_band(N: int, half_width: int) -> np.ndarray:
    """Lines whose LPM windows lie strictly inside ``(0, N/2)``."""
    return np.arange(half_width + 1, N // 2 - half_width)


@dataclass(frozen=True, eq=False)
class SpectrumRecord:
    """Column-aligned input (``U``: n_i x F) and output (``Y``: n_y x F) spectra."""

    U: np.ndarray
    Y: np.ndarray
    line_indices: np.ndarray
    N: int

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, dtype=complex))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=complex))
        k = np.asarray(self.line_indices, dtype=int)
        if U.shape[1] != k.size or Y.shape[1] != k.size:
            raise InvariantViolation("U, Y and line_indices must be column-aligned")
        if k.size and (np.any(np.diff(k) <= 0) or k[0] < 0 or 2 * k[-1] > self.N):
            raise InvariantViolation("line_indices must increase within [0, N/2]")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "line_indices", k)

    @property
    def n_inputs(self) -> int:
        return self.U.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.Y.shape[0]


def spectrum_from_time(u, y, N: int | None = None) -> SpectrumRecord:
    """DFT both records and keep all lines ``0..N//2``."""
    u = np.atleast_2d(u)
    y = np.atleast_2d(y)
    N = N or u.shape[-1]
    return SpectrumRecord(dft(u, N), dft(y, N), np.arange(N // 2 + 1), N)


@dataclass(frozen=True)
class LpmConfig:
    """Polynomial ``degree`` and window ``half_width`` (window = 2*hw + 1 lines)."""

    degree: int = 2
    half_width: int = 12

    def __post_init__(self):
        if self.degree < 0 or self.half_width < 0:
            raise InvariantViolation("degree and half_width must be >= 0")

    @property
    def window(self) -> int:
        return 2 * self.half_width + 1

    def n_params(self, n_inputs: int) -> int:
        return (self.degree + 1) * (n_inputs + 1)

    def check(self, n_inputs: int):
        if self.window < self.n_params(n_inputs):
            raise InvariantViolation(
                f"window of {self.window} lines is smaller than the "
                f"{self.n_params(n_inputs)} local parameters "
                f"(degree {self.degree}, {n_inputs} inputs)", "half_width")


@dataclass(frozen=True, eq=False)
class FrfEstimate:
    """Nonparametric FRM estimate on ``line_indices``.

    Shapes: ``G`` and ``var_G`` are ``(F, n_y, n_i)``, ``T`` and
    ``residual_var`` are ``(F, n_y)``. ``edge`` flags centers whose window was
    shifted inward at a band edge.
    """

    G: np.ndarray
    var_G: np.ndarray
    T: np.ndarray
    residual_var: np.ndarray
    line_indices: np.ndarray
    N: int
    edge: np.ndarray
    dof: int

    @property
    def freq_norm(self) -> np.ndarray:
        return self.line_indices / self.N

    def entry(self, out: int, inp: int):
        """FRF and variance of one input/output pair (0-based positions)."""
        return self.G[:, out, inp], self.var_G[:, out, inp]


def _windows(F: int, centers: np.ndarray, half_width: int):
    W = 2 * half_width + 1
    start = np.clip(centers - half_width, 0, F - W)
    idx = start[:, None] + np.arange(W)
    return idx, start != centers - half_width


def lpm_estimate(spec: SpectrumRecord, cfg: LpmConfig = LpmConfig(),
                 centers=None) -> FrfEstimate:
    """Local polynomial estimate of the FRM ``Y = G U + T``.

    ``centers`` selects the center lines (DFT indices present in ``spec``);
    by default every line strictly inside ``(0, N/2)`` is a center. All lines
    of ``spec`` may contribute rows to a window, excited or not.
    """
    n_i, n_y = spec.n_inputs, spec.n_outputs
    cfg.check(n_i)
    lines = spec.line_indices
    F = lines.size
    W = cfg.window
    if F < W:
        raise InsufficientLines(f"{F} lines available, window needs {W}")
    if centers is None:
        pos = np.flatnonzero((lines > 0) & (2 * lines < spec.N))
    else:
        c = np.asarray(centers, dtype=int)
        pos = np.searchsorted(lines, c)
        if np.any(pos >= F) or np.any(lines[np.minimum(pos, F - 1)] != c):
            raise InsufficientLines("requested center lines are not in the record")
    if pos.size == 0:
        raise InsufficientLines("no center lines")
    d = cfg.degree
    idx, edge = _windows(F, pos, cfg.half_width)
    r = (lines[idx] - lines[pos][:, None]).astype(float)          # (Fc, W)
    powers = r[..., None] ** np.arange(d + 1)                     # (Fc, W, d+1)
    Uw = np.moveaxis(spec.U[:, idx], 0, -1)                       # (Fc, W, n_i)
    Kg = (Uw[..., :, None] * powers[..., None, :]).reshape(pos.size, W, n_i * (d + 1))
    K = np.concatenate([Kg, powers.astype(complex)], axis=-1)     # (Fc, W, P)
    Yw = np.moveaxis(spec.Y[:, idx], 0, -1)                       # (Fc, W, n_y)

    # column scaling only improves conditioning; it does not change the LS fit
    scale = np.linalg.norm(K, axis=1)
    scale[scale == 0] = 1.0
    Ks = K / scale[:, None, :]
    Uk, s, Vh = np.linalg.svd(Ks, full_matrices=False)
    smax = s[:, 0]
    bad = ~(s[:, -1] * COND_LIMIT > smax) | (smax == 0)
    if np.any(bad):
        raise RankDeficientWindow(
            f"regressors are rank deficient at lines {lines[pos[bad]][:10].tolist()}")
    V = np.conj(np.swapaxes(Vh, 1, 2))
    coef = V @ ((np.conj(np.swapaxes(Uk, 1, 2)) @ Yw) / s[:, :, None])
    theta = coef / scale[:, :, None]                              # (Fc, P, n_y)
    resid = Yw - K @ theta
    P = K.shape[-1]
    dof = W - P
    ss = np.sum(np.abs(resid) ** 2, axis=1)                       # (Fc, n_y)
    resvar = ss / dof if dof > 0 else np.full_like(ss, np.inf)
    # diagonal of (K^H K)^-1 at the g_0 columns
    gram_diag = np.sum(np.abs(V) ** 2 / s[:, None, :] ** 2, axis=2) / scale ** 2
    g0_cols = np.arange(n_i) * (d + 1)
    G = np.swapaxes(theta[:, g0_cols, :], 1, 2)                   # (Fc, n_y, n_i)
    var_G = resvar[:, :, None] * gram_diag[:, None, g0_cols]
    T = theta[:, n_i * (d + 1), :]
    return FrfEstimate(G=G, var_G=var_G, T=T, residual_var=resvar,
                       line_indices=lines[pos], N=spec.N, edge=edge, dof=dof)


def write_frf_csv(est: FrfEstimate, path, out_labels=None, in_labels=None) -> None:
    """Export an :class:`FrfEstimate` to CSV, one row per center line."""
    n_y, n_i = est.G.shape[1:]
    out_labels = out_labels or [str(j + 1) for j in range(n_y)]
    in_labels = in_labels or [str(l + 1) for l in range(n_i)]
    pairs = [(a, b) for a in range(n_y) for b in range(n_i)]
    header = ["line", "freq_norm"]
    for a, b in pairs:
        tag = f"{out_labels[a]}{in_labels[b]}"
        header += [f"Re(G_{tag})", f"Im(G_{tag})"]
    header += [f"var_G_{out_labels[a]}{in_labels[b]}" for a, b in pairs]
    for a in range(n_y):
        header += [f"Re(T_{out_labels[a]})", f"Im(T_{out_labels[a]})",
                   f"residual_var_{out_labels[a]}"]
    header.append("edge")
    with open(Path(path), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for n, k in enumerate(est.line_indices):
            row = [int(k), repr(float(k / est.N))]
            for a, b in pairs:
                g = est.G[n, a, b]
                row += [repr(float(g.real)), repr(float(g.imag))]
            row += [repr(float(est.var_G[n, a, b])) for a, b in pairs]
            for a in range(n_y):
                row += [repr(float(est.T[n, a].real)), repr(float(est.T[n, a].imag)),
                        repr(float(est.residual_var[n, a]))]
            row.append(int(est.edge[n]))
            wr.writerow(row)
