import numpy as np
import pytest

from labs.lti_lab import clear_kernel_spectra
from labs.phase_retrieval import build_design
from labs.sampling_series import sine_wave_crossing_family
from labs.signal_core import reproducing_kernel, scale_spectrum


@pytest.fixture
def perturbation():
    """g = 0.3·r_0, real on the real axis with sup |g| = 0.3."""
    return scale_spectrum(reproducing_kernel(0.0, np.pi), 0.3)


@pytest.fixture
def crossing_family(perturbation):
    return sine_wave_crossing_family(2.0, perturbation, (-40, 40))


@pytest.fixture
def design2():
    return build_design(2)


@pytest.fixture
def fresh_kernel_spectra():
    clear_kernel_spectra()
    yield
    clear_kernel_spectra()


@pytest.fixture
def in_tmp_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("PWLAB_THREADS", "PWLAB_LOG_LEVEL", "PWLAB_OUTPUT_DIR"):
        # recorded through setenv so values loaded from env files are undone too
        monkeypatch.setenv(name, "")
        monkeypatch.delenv(name, raising=False)
    return tmp_path
