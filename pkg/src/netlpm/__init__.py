"""Local module identification in linear dynamic networks.

Two-step frequency-domain identification of one module: a two-stage
nonparametric estimate (Local Polynomial Method) of the module FRF and its
variance, followed by variance-weighted parametric smoothing. A direct
prediction-error baseline and a Monte Carlo harness are included.
"""
from importlib import resources

from .lti_core import RationalTF, freq_response, impulse_response
from .network import (NetworkModel, PredictorSet, check_predictor_set,
                      check_stability, closed_loop_frm, load_network)
from .simulator import ExcitationSpec, TimeSeriesDataset, simulate
from .lpm import FrfEstimate, LpmConfig, SpectrumRecord, lpm_estimate
from .indirect import IndirectResult, run_indirect

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a config file shipped in ``netlpm/data``."""
    return resources.files(__name__).joinpath("data", name)


def paper_network() -> NetworkModel:
    """The four-node benchmark network used in the demos and tests."""
    return load_network(data_path("paper_fig1.json").read_text())
