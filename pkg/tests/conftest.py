import pytest

from ssvepnav.scu import ScuHyperparams, fit
from ssvepnav.signal import (SsvepDataset, SsvepGenParams, apply_filter,
                             design_bandpass, generate_dataset)

SNR4_SEED = 7


@pytest.fixture(scope="session")
def snr4_params():
    return SsvepGenParams(snr=4.0, rng_seed=SNR4_SEED)


@pytest.fixture(scope="session")
def snr4_model(snr4_params):
    """One full-protocol decoder shared by the closed-loop suites."""
    raw = generate_dataset(snr4_params, 40)
    spec = design_bandpass()
    ds = SsvepDataset(epochs=[apply_filter(spec, ep) for ep in raw.epochs],
                      metadata=dict(raw.metadata))
    return fit(ds, ScuHyperparams(rng_seed=SNR4_SEED)).model
