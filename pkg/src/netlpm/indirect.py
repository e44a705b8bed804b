"""Two-stage nonparametric indirect estimate of a single network module.

Stage 1 estimates the FRM from the references ``r_R`` to the predictor nodes
``w_D`` with the LPM. The fitted FRM re-synthesizes reference-driven predictor
spectra ``W_hat_D = S_hat R_R``, which are then used as LPM inputs for the
output node ``w_j`` in stage 2. The column of the stage-2 FRM that belongs to
the target input node is the module estimate. Measured node signals are used
throughout, so sensor noise on the nodes enters only as output noise.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyReferenceSet, GridMismatch, PredictorSetWarning
from .lpm import FrfEstimate, LpmConfig, SpectrumRecord, dft, lpm_estimate
from .network import NetworkModel, PredictorSet, check_predictor_set
from .simulator import TimeSeriesDataset

__all__ = ["IndirectResult", "stage1", "stage2", "run_indirect",
           "write_target_csv"]


@dataclass(frozen=True, eq=False)
class IndirectResult:
    S_hat: FrfEstimate
    W_hat: np.ndarray            # (|D|, F) re-synthesized predictor spectra
    G_hat_row: FrfEstimate       # (F, 1, |D|)
    target_frf: np.ndarray
    target_var: np.ndarray
    predictors: tuple
    references: tuple

    @property
    def line_indices(self) -> np.ndarray:
        return self.G_hat_row.line_indices

    @property
    def N(self) -> int:
        return self.G_hat_row.N

    @property
    def edge(self) -> np.ndarray:
        return self.G_hat_row.edge


def _refs(references):
    refs = tuple(sorted(references))
    if not refs:
        raise EmptyReferenceSet("the indirect method needs at least one reference")
    return refs


def stage1(ds: TimeSeriesDataset, ps: PredictorSet, references,
           cfg: LpmConfig = LpmConfig()) -> FrfEstimate:
    """LPM estimate of the FRM ``r_R -> w_D`` (shape ``(F, |D|, |R|)``)."""
    refs = _refs(references)
    D = ps.predictors
    R = dft(ds.r[[k - 1 for k in refs]])
    WD = dft(ds.w_meas[[k - 1 for k in D]])
    spec = SpectrumRecord(R, WD, np.arange(ds.N // 2 + 1), ds.N)
    return lpm_estimate(spec, cfg)


def stage2(ds: TimeSeriesDataset, ps: PredictorSet, s_hat: FrfEstimate,
           cfg: LpmConfig = LpmConfig(), references=None) -> IndirectResult:
    """LPM from the re-synthesized predictor spectra to the output node.

    ``references`` defaults to the nodes with a nonzero reference record.
    When the output node is itself excited, its (known) reference spectrum
    is removed from the output before the fit.
    """
    if references is None:
        references = [k + 1 for k in range(ds.L) if np.any(ds.r[k])]
    refs = _refs(references)
    if s_hat.N != ds.N or s_hat.G.shape[2] != len(refs):
        raise GridMismatch("stage-1 estimate does not match this dataset")
    lines = s_hat.line_indices
    if np.any(lines > ds.N // 2):
        raise GridMismatch("stage-1 lines fall outside the dataset grid")
    R = dft(ds.r[[k - 1 for k in refs]])[:, lines]               # (|R|, F)
    W_hat = np.einsum("fdr,rf->df", s_hat.G, R)
    j = ps.output
    Wj = dft(ds.w_meas[j - 1])[lines]
    if j in refs:
        Wj = Wj - R[refs.index(j)]
    spec = SpectrumRecord(W_hat, Wj[None, :], lines, ds.N)
    g_row = lpm_estimate(spec, cfg)
    col = ps.predictors.index(ps.input)
    frf, var = g_row.entry(0, col)
    return IndirectResult(S_hat=s_hat, W_hat=W_hat, G_hat_row=g_row,
                          target_frf=frf.copy(), target_var=var.copy(),
                          predictors=ps.predictors, references=refs)


def run_indirect(ds: TimeSeriesDataset, ps: PredictorSet, references,
                 cfg: LpmConfig = LpmConfig(),
                 model: NetworkModel | None = None) -> IndirectResult:
    """Stage 1 followed by stage 2.

    With ``model`` given, the predictor set is checked first and a
    :class:`PredictorSetWarning` is emitted when it fails.
    """
    if model is not None:
        report = check_predictor_set(model, ps)
        if not report.valid:
            warnings.warn("predictor set fails the predictor-input conditions:\n"
                          + report.summary(), PredictorSetWarning, stacklevel=2)
    s_hat = stage1(ds, ps, references, cfg)
    return stage2(ds, ps, s_hat, cfg, references)


def write_target_csv(res: IndirectResult, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["line", "Re", "Im", "var", "edge"])
        for k, g, v, e in zip(res.line_indices, res.target_frf, res.target_var,
                              res.edge):
            wr.writerow([int(k), repr(float(g.real)), repr(float(g.imag)),
                         repr(float(v)), int(e)])
