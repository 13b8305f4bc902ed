import numpy as np
import pytest

from bodyresponse.preprocess import build_minute_table
from bodyresponse.synthgen import SynthConfig, generate_subject


@pytest.fixture(scope="session")
def session_subject():
    cfg = SynthConfig(n_subjects=1, days_per_subject=0, include_session=True,
                      master_seed=42)
    return generate_subject(cfg, 0)


@pytest.fixture(scope="session")
def session_table(session_subject):
    return build_minute_table(session_subject.bundle)


@pytest.fixture(scope="session")
def free_living_subject():
    cfg = SynthConfig(n_subjects=1, days_per_subject=2, include_session=False,
                      master_seed=7)
    return generate_subject(cfg, 0)


@pytest.fixture(scope="session")
def free_living_table(free_living_subject):
    return build_minute_table(free_living_subject.bundle)
