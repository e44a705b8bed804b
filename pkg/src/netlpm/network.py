"""Dynamic network container and graph/frequency-domain diagnostics.

Node labels are 1-based throughout the public API (``w_1 .. w_L``), as in
config files; array rows are ``node - 1``. A module ``G_jl`` is the directed
edge ``l -> j`` and is keyed ``(j, l)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (DivergedSimulation, InvariantViolation, ParseError,
                     SingularAtLine, UnknownNode)
from .lti_core import RationalTF, freq_response

__all__ = ["NetworkModel", "PredictorSet", "PredictorReport", "load_network",
           "network_from_dict", "closed_loop_frm", "module_frm",
           "check_predictor_set", "check_stability", "StabilityDiagnostic",
           "network_state_space"]


@dataclass(frozen=True)
class NetworkModel:
    L: int
    modules: Mapping[tuple[int, int], RationalTF]
    noise_filters: Mapping[tuple[int, int], RationalTF]
    noise_cov: np.ndarray
    reference_set: frozenset
    sensor_noise_var: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "modules", MappingProxyType(dict(self.modules)))
        object.__setattr__(self, "noise_filters",
                           MappingProxyType(dict(self.noise_filters)))
        cov = np.array(self.noise_cov, dtype=float)
        cov.flags.writeable = False
        object.__setattr__(self, "noise_cov", cov)
        sv = np.array(self.sensor_noise_var, dtype=float)
        sv.flags.writeable = False
        object.__setattr__(self, "sensor_noise_var", sv)
        object.__setattr__(self, "reference_set", frozenset(self.reference_set))
        _validate(self)

    def __reduce__(self):
        # mapping proxies do not pickle; rebuild from plain dicts
        return (NetworkModel, (self.L, dict(self.modules), dict(self.noise_filters),
                               self.noise_cov, self.reference_set,
                               self.sensor_noise_var))

    @property
    def nodes(self) -> range:
        return range(1, self.L + 1)

    def in_neighbors(self, j: int) -> list[int]:
        return sorted(l for (jj, l) in self.modules if jj == j)

    def edges(self) -> set[tuple[int, int]]:
        """Directed edges ``(from, to)`` of nonzero modules."""
        return {(l, j) for (j, l), g in self.modules.items() if not g.is_zero}

    def noise_filter(self, j: int, m: int) -> RationalTF | None:
        return self.noise_filters.get((j, m))

    def replace(self, **changes) -> "NetworkModel":
        kw = dict(L=self.L, modules=self.modules,
                  noise_filters=self.noise_filters, noise_cov=self.noise_cov,
                  reference_set=self.reference_set,
                  sensor_noise_var=self.sensor_noise_var)
        kw.update(changes)
        return NetworkModel(**kw)


def _validate(model: NetworkModel):
    L = model.L
    if not isinstance(L, (int, np.integer)) or L < 1:
        raise InvariantViolation("node count must be a positive integer", "nodes")
    for (j, l), g in model.modules.items():
        path = f"modules[{j}<-{l}]"
        if not (1 <= j <= L and 1 <= l <= L):
            raise InvariantViolation("node index out of range", path)
        if j == l:
            raise InvariantViolation("self-loop is not allowed", path)
        if not g.strictly_proper:
            raise InvariantViolation("module is not strictly proper (b0 != 0)", path)
    for (j, m), h in model.noise_filters.items():
        path = f"noise_filters[{j},{m}]"
        if not (1 <= j <= L and 1 <= m <= L):
            raise InvariantViolation("node index out of range", path)
        if j == m and h.num[0] != 1.0:
            raise InvariantViolation("diagonal noise filter must be monic", path)
        if j != m and h.num[0] != 0.0:
            raise InvariantViolation(
                "off-diagonal noise filter must have zero feedthrough", path)
    cov = model.noise_cov
    if cov.shape != (L, L):
        raise InvariantViolation(f"expected shape ({L}, {L}), got {cov.shape}",
                                 "noise_cov")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise InvariantViolation("noise covariance must be symmetric", "noise_cov")
    if np.linalg.eigvalsh(cov).min() < -1e-12 * max(1.0, np.abs(cov).max()):
        raise InvariantViolation("noise covariance must be PSD", "noise_cov")
    for r in model.reference_set:
        if not 1 <= r <= L:
            raise InvariantViolation(f"reference node {r} out of range",
                                     "references")
    sv = model.sensor_noise_var
    if sv.shape != (L,) or np.any(sv < 0):
        raise InvariantViolation("expected L nonnegative variances",
                                 "sensor_noise_var")


# --------------------------------------------------------------------------
# config ingestion

def _tf_from(entry, path):
    try:
        return RationalTF(entry["num"], entry.get("den", [1.0]))
    except KeyError as exc:
        raise ParseError(f"{path}: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InvariantViolation(str(exc), path) from None


def _int_field(entry, key, path):
    try:
        v = entry[key]
    except KeyError:
        raise ParseError(f"{path}: missing field '{key}'") from None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{path}.{key}: expected integer, got {v!r}")
    return v


def network_from_dict(cfg: dict) -> NetworkModel:
    """Build a :class:`NetworkModel` from an already-parsed config mapping."""
    if not isinstance(cfg, dict):
        raise ParseError("network config must be a JSON object")
    L = _int_field(cfg, "nodes", "")
    modules = {}
    for n, e in enumerate(cfg.get("modules", [])):
        path = f"modules[{n}]"
        key = (_int_field(e, "to", path), _int_field(e, "from", path))
        if key in modules:
            raise InvariantViolation("duplicate module", path)
        modules[key] = _tf_from(e, path)
    filters = {}
    for n, e in enumerate(cfg.get("noise_filters", [])):
        path = f"noise_filters[{n}]"
        if "node" in e:
            j = _int_field(e, "node", path)
            key = (j, j)
        else:
            key = (_int_field(e, "to", path), _int_field(e, "from", path))
        filters[key] = _tf_from(e, path)
    for j in range(1, L + 1):
        filters.setdefault((j, j), RationalTF.identity())
    raw_cov = cfg.get("noise_cov", {"diag": [0.0] * L})
    try:
        if isinstance(raw_cov, dict):
            cov = np.diag(np.asarray(raw_cov["diag"], dtype=float))
        else:
            cov = np.asarray(raw_cov, dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"noise_cov: {exc}") from None
    if cov.ndim != 2:
        raise InvariantViolation("expected a matrix or {'diag': [...]}", "noise_cov")
    refs = cfg.get("references", [])
    if not all(isinstance(r, int) for r in refs):
        raise ParseError("references: expected a list of node indices")
    sv = cfg.get("sensor_noise_var", [0.0] * L)
    return NetworkModel(L=L, modules=modules, noise_filters=filters,
                        noise_cov=cov, reference_set=frozenset(refs),
                        sensor_noise_var=np.asarray(sv, dtype=float))


def load_network(config_text: str) -> NetworkModel:
    """Parse a JSON network description (see README for the schema)."""
    try:
        cfg = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    return network_from_dict(cfg)


def network_to_dict(model: NetworkModel) -> dict:
    mods = [{"from": l, "to": j, "num": g.num.tolist(), "den": g.den.tolist()}
            for (j, l), g in sorted(model.modules.items())]
    filt = []
    for (j, m), h in sorted(model.noise_filters.items()):
        e = {"node": j} if j == m else {"from": m, "to": j}
        e.update(num=h.num.tolist(), den=h.den.tolist())
        filt.append(e)
    return {"schema_version": 1, "nodes": model.L, "modules": mods,
            "noise_filters": filt, "noise_cov": model.noise_cov.tolist(),
            "references": sorted(model.reference_set),
            "sensor_noise_var": model.sensor_noise_var.tolist()}


# --------------------------------------------------------------------------
# frequency domain

def module_frm(model: NetworkModel, line_indices, N: int) -> np.ndarray:
    """``G(z_k)`` as an array of shape ``(len(lines), L, L)``."""
    k = np.atleast_1d(line_indices)
    G = np.zeros((k.size, model.L, model.L), dtype=complex)
    for (j, l), g in model.modules.items():
        G[:, j - 1, l - 1] = freq_response(g, k, N)
    return G


def closed_loop_frm(model: NetworkModel, line_indices, N: int) -> np.ndarray:
    """``(I - G(z_k))^-1`` per line, shape ``(len(lines), L, L)``.

    Entry ``[k, j-1, m-1]`` maps an external input at node ``m`` to ``w_j``.
    """
    k = np.atleast_1d(line_indices)
    A = np.eye(model.L) - module_frm(model, k, N)
    cond = np.linalg.cond(A)
    bad = np.flatnonzero(~(cond <= 1e12))
    if bad.size:
        raise SingularAtLine(f"I - G(z) is singular at lines {k[bad].tolist()}")
    return np.linalg.inv(A)


# --------------------------------------------------------------------------
# predictor-input conditions

@dataclass(frozen=True)
class PredictorSet:
    """Target module ``G_ji`` (``output`` j, ``input`` i) and predictor nodes."""

    output: int
    input: int
    predictors: tuple

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(sorted(set(self.predictors))))


@dataclass(frozen=True)
class PredictorReport:
    membership: bool
    parallel_paths: bool
    loops: bool
    parallel_witness: tuple = ()
    loop_witness: tuple = ()

    @property
    def valid(self) -> bool:
        return self.membership and self.parallel_paths and self.loops

    def summary(self) -> str:
        def mark(ok):
            return "pass" if ok else "FAIL"
        lines = [f"(1) i in D and j not in D: {mark(self.membership)}",
                 f"(2) parallel path condition: {mark(self.parallel_paths)}",
                 f"(3) loop condition: {mark(self.loops)}"]
        if self.parallel_witness:
            lines.append("    unblocked path: "
                         + " -> ".join(f"w{n}" for n in self.parallel_witness))
        if self.loop_witness:
            lines.append("    unblocked loop: "
                         + " -> ".join(f"w{n}" for n in self.loop_witness))
        return "\n".join(lines)


def _bfs_path(succ, start, goal, blocked):
    """Shortest path ``start -> ... -> goal`` avoiding ``blocked`` nodes.

    The start node is expanded even if blocked; ``goal`` may equal ``start``
    (then a cycle of length >= 1 is sought).
    """
    parent = {}
    frontier = [start]
    seen = set()
    while frontier:
        nxt = []
        for u in frontier:
            for v in succ.get(u, ()):
                if v == goal:
                    path = [v, u]
                    while path[-1] != start:
                        path.append(parent[path[-1]])
                    return tuple(reversed(path))
                if v in blocked or v in seen or v == start:
                    continue
                seen.add(v)
                parent[v] = u
                nxt.append(v)
        frontier = nxt
    return None


def check_predictor_set(model: NetworkModel, ps: PredictorSet) -> PredictorReport:
    """Check the three predictor-input conditions by graph reachability."""
    j, i, D = ps.output, ps.input, set(ps.predictors)
    for n in (j, i, *D):
        if not 1 <= n <= model.L:
            raise UnknownNode(n)
    membership = i in D and j not in D
    succ: dict[int, list[int]] = {}
    for (a, b) in model.edges():
        if (a, b) == (i, j):
            continue  # the target module itself
        succ.setdefault(a, []).append(b)
    path = _bfs_path(succ, i, j, blocked=D) if i != j else None
    succ_all: dict[int, list[int]] = {}
    for (a, b) in model.edges():
        succ_all.setdefault(a, []).append(b)
    loop = None if j in D else _bfs_path(succ_all, j, j, blocked=D)
    return PredictorReport(membership=membership,
                           parallel_paths=path is None,
                           loops=loop is None,
                           parallel_witness=path or (),
                           loop_witness=loop or ())


# --------------------------------------------------------------------------
# time-domain realization and stability

def network_state_space(model: NetworkModel):
    """Closed-loop state-space realization of ``w = G w + u``.

    Returns ``(A, B, C)`` with ``x(t+1) = A x(t) + B u(t)`` and
    ``w(t) = C x(t) + u(t)``. Strict properness of every module is what makes
    the output free of a direct ``u -> w`` path through the modules.
    """
    L = model.L
    blocks = []
    for (j, l), g in sorted(model.modules.items()):
        n = g.order
        if n == 0 or g.is_zero:
            continue
        b = np.zeros(n + 1)
        a = np.zeros(n + 1)
        b[:g.num.size] = g.num
        a[:g.den.size] = g.den
        # controllable canonical form; b[0] == 0 so there is no feedthrough
        Am = np.eye(n, k=-1)
        Am[0] = -a[1:]
        Bm = np.zeros(n)
        Bm[0] = 1.0
        blocks.append((j, l, Am, Bm, b[1:]))
    nx = sum(blk[2].shape[0] for blk in blocks)
    A = np.zeros((nx, nx))
    Bin = np.zeros((nx, L))      # module input selection from w
    Cout = np.zeros((L, nx))     # module output summation into nodes
    ofs = 0
    for j, l, Am, Bm, Cm in blocks:
        n = Am.shape[0]
        A[ofs:ofs + n, ofs:ofs + n] = Am
        Bin[ofs:ofs + n, l - 1] = Bm
        Cout[j - 1, ofs:ofs + n] = Cm
        ofs += n
    return A + Bin @ Cout, Bin, Cout


def propagate(model: NetworkModel, u: np.ndarray, limit: float = 1e12) -> np.ndarray:
    """Solve ``w = G w + u`` sample by sample from rest.

    ``u`` has shape ``(L, N)`` or ``(L, N, m)`` for ``m`` simultaneous input
    records. Raises :class:`DivergedSimulation` when ``|w|`` exceeds ``limit``.
    """
    A, B, C = network_state_space(model)
    u = np.asarray(u, dtype=float)
    w = np.empty_like(u)
    N = u.shape[1]
    extra = u.shape[2:]
    x = np.zeros((A.shape[0],) + extra)
    for t in range(N):
        ut = u[:, t]
        wt = C @ x + ut
        w[:, t] = wt
        x = A @ x + B @ ut
        if t % 64 == 63 and not np.all(np.abs(wt) <= limit):
            raise DivergedSimulation(f"|w| exceeded {limit:g} at sample {t}")
    if not np.all(np.abs(w) <= limit):
        raise DivergedSimulation(f"|w| exceeded {limit:g}")
    return w


@dataclass(frozen=True)
class StabilityDiagnostic:
    stable: bool
    decay_metric: float


def check_stability(model: NetworkModel, horizon: int = 2000,
                    threshold: float = 1e-10) -> StabilityDiagnostic:
    """Empirical stability check from closed-loop impulse-response decay.

    ``decay_metric`` is the largest tail-to-total energy ratio over all
    channels, where the tail is the last 10% of ``horizon`` samples.
    """
    L = model.L
    u = np.zeros((L, horizon, L))
    u[np.arange(L), 0, np.arange(L)] = 1.0
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            w = propagate(model, u, limit=1e150)
    except DivergedSimulation:
        return StabilityDiagnostic(False, float("inf"))
    energy = np.sum(w ** 2, axis=1)
    tail = np.sum(w[:, horizon - max(1, horizon // 10):] ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(energy > 0, tail / energy, 0.0)
    metric = float(np.max(ratio))
    return StabilityDiagnostic(bool(metric < threshold), metric)
