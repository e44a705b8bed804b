"""Time-domain simulation of a dynamic network.

Each replicate is fully determined by ``(model, excitation, N, seed)``. The
seed is split with :class:`numpy.random.SeedSequence` into independent
streams for process noise, references and sensor noise, so that e.g. turning
off sensor noise does not change the reference realization.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InvariantViolation, NotPSD, ParseError
from .lti_core import filter as lfilter_tf
from .network import NetworkModel, propagate

__all__ = ["ExcitationSpec", "TimeSeriesDataset", "generate_noise",
           "generate_excitation", "simulate", "write_dataset", "read_dataset",
           "excitation_from_dict"]


@dataclass(frozen=True)
class ExcitationSpec:
    """Reference signal description.

    ``kind="white"``: iid Gaussian with ``variance``.
    ``kind="multisine"``: ``sum_k A_k cos(2 pi k t / period + phi_k)`` over
    ``excited_lines`` (indices relative to ``period``), phases drawn uniformly
    from the seed, repeated periodically. When ``amplitudes`` is omitted the
    amplitude is flat and scaled to give ``variance``.
    """

    kind: str = "white"
    variance: float = 0.1
    excited_lines: tuple | None = None
    amplitudes: tuple | None = None
    period: int | None = None

    def __post_init__(self):
        if self.kind not in ("white", "multisine"):
            raise InvariantViolation(f"unknown excitation kind {self.kind!r}", "kind")
        if self.variance < 0:
            raise InvariantViolation("variance must be >= 0", "variance")
        if self.amplitudes is not None and np.any(np.asarray(self.amplitudes) < 0):
            raise InvariantViolation("amplitudes must be >= 0", "amplitudes")
        if self.excited_lines is not None:
            object.__setattr__(self, "excited_lines",
                               tuple(int(k) for k in self.excited_lines))
        if self.amplitudes is not None:
            object.__setattr__(self, "amplitudes",
                               tuple(float(a) for a in self.amplitudes))

    def lines_for(self, N: int) -> np.ndarray:
        P = self.period or N
        if self.excited_lines is None:
            lines = np.arange(1, (P + 1) // 2)
        else:
            lines = np.asarray(self.excited_lines, dtype=int)
        if np.any(lines <= 0) or np.any(2 * lines >= P):
            raise InvariantViolation("multisine lines must lie in (0, period/2)",
                                     "excited_lines")
        return lines

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        for k in ("excited_lines", "amplitudes"):
            if k in d:
                d[k] = list(d[k])
        return d


def excitation_from_dict(d: dict) -> ExcitationSpec:
    allowed = {"kind", "variance", "excited_lines", "amplitudes", "period"}
    unknown = set(d) - allowed
    if unknown:
        raise ParseError(f"unknown excitation fields {sorted(unknown)}")
    return ExcitationSpec(**d)


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Simulated records; all arrays have shape ``(L, N)``.

    ``v`` is ``None`` for datasets read back from disk.
    """

    w: np.ndarray
    w_meas: np.ndarray
    r: np.ndarray
    v: np.ndarray | None
    seed: int | None = None
    excitation: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.w.shape[1]

    @property
    def L(self) -> int:
        return self.w.shape[0]


def generate_noise(model: NetworkModel, N: int, seed) -> np.ndarray:
    """Process noise ``v = H e`` with ``e ~ N(0, noise_cov)`` iid in time.

    ``seed`` may be an integer, a SeedSequence or a Generator.
    """
    rng = np.random.default_rng(seed)
    cov = model.noise_cov
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() < -1e-12 * max(1.0, np.abs(cov).max()):
        raise NotPSD("noise covariance has a negative eigenvalue")
    sqrt_cov = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    z = rng.standard_normal((model.L, N))
    e = sqrt_cov @ z
    v = np.zeros((model.L, N))
    for (j, m), h in model.noise_filters.items():
        if np.any(e[m - 1]):
            v[j - 1] += lfilter_tf(h, e[m - 1])
    return v


def generate_excitation(spec: ExcitationSpec, N: int, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    if spec.kind == "white":
        return np.sqrt(spec.variance) * rng.standard_normal(N)
    P = spec.period or N
    lines = spec.lines_for(N)
    if spec.amplitudes is None:
        amp = np.full(lines.size, np.sqrt(2.0 * spec.variance / lines.size))
    else:
        amp = np.broadcast_to(np.asarray(spec.amplitudes, dtype=float), lines.shape)
    phase = rng.uniform(0.0, 2 * np.pi, lines.size)
    X = np.zeros(P // 2 + 1, dtype=complex)
    X[lines] = 0.5 * P * amp * np.exp(1j * phase)
    one = np.fft.irfft(X, P)
    return np.resize(one, N)


def _per_node(model, excitation):
    if isinstance(excitation, ExcitationSpec):
        return {j: excitation for j in model.reference_set}
    missing = set(model.reference_set) - set(excitation)
    if missing:
        raise InvariantViolation(f"no excitation given for references {sorted(missing)}",
                                 "excitation")
    return dict(excitation)


def simulate(model: NetworkModel,
             excitation: ExcitationSpec | Mapping[int, ExcitationSpec],
             N: int, seed: int, *, process_noise: bool = True,
             sensor_noise: bool = True) -> TimeSeriesDataset:
    """Simulate ``w = G w + r + v`` from rest and add sensor noise.

    ``excitation`` is either one spec shared by every reference node or a
    mapping ``node -> spec``. Reference rows outside ``model.reference_set``
    are zero.
    """
    if N < 1:
        raise ValueError("N must be positive")
    noise_ss, ref_ss, sens_ss = np.random.SeedSequence(seed).spawn(3)
    L = model.L
    if process_noise:
        v = generate_noise(model, N, noise_ss)
    else:
        v = np.zeros((L, N))
    r = np.zeros((L, N))
    specs = _per_node(model, excitation)
    ref_rngs = ref_ss.spawn(L)
    for j in sorted(model.reference_set):
        r[j - 1] = generate_excitation(specs[j], N, ref_rngs[j - 1])
    w = propagate(model, r + v)
    w_meas = w.copy()
    sv = model.sensor_noise_var
    if sensor_noise and np.any(sv > 0):
        s = np.random.default_rng(sens_ss).standard_normal((L, N))
        w_meas = w + np.sqrt(sv)[:, None] * s
    meta = {str(j): specs[j].to_dict() for j in sorted(specs)}
    return TimeSeriesDataset(w=w, w_meas=w_meas, r=r, v=v, seed=seed,
                             excitation=meta)


# --------------------------------------------------------------------------
# CSV / JSON sidecar

def write_dataset(ds: TimeSeriesDataset, path) -> None:
    """Write ``path`` (CSV) and ``path.with_suffix('.json')`` metadata."""
    path = Path(path)
    L = ds.L
    header = (["t"] + [f"w{j}" for j in range(1, L + 1)]
              + [f"wmeas{j}" for j in range(1, L + 1)]
              + [f"r{j}" for j in range(1, L + 1)])
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    block = np.vstack([ds.w, ds.w_meas, ds.r]).T
    for t, row in enumerate(block):
        buf.write(str(t) + "," + ",".join(repr(float(x)) for x in row) + "\n")
    path.write_text(buf.getvalue())
    meta = {"schema_version": 1, "N": ds.N, "L": L, "seed": ds.seed,
            "excitation": ds.excitation}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_dataset(path) -> TimeSeriesDataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    nw = sum(1 for h in header if h.startswith("w") and not h.startswith("wmeas"))
    if header[0] != "t" or len(header) != 1 + 3 * nw:
        raise ParseError(f"{path}: unexpected header {header[:4]}...")
    try:
        data = np.array([[float(x) for x in row] for row in body], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    data = data.reshape(len(body), 1 + 3 * nw)
    w = data[:, 1:1 + nw].T.copy()
    wm = data[:, 1 + nw:1 + 2 * nw].T.copy()
    r = data[:, 1 + 2 * nw:].T.copy()
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text())
    return TimeSeriesDataset(w=w, w_meas=wm, r=r, v=None, seed=meta.get("seed"),
                             excitation=meta.get("excitation", {}))
