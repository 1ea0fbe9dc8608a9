import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def tiny_model_config():
    from tactictraj.config import ModelConfig

    return ModelConfig(
        d_model=16, d_a=16, denoiser_width=16, init_width=16, head_hidden=16, d_h=16, d_k=16, n_samples=4, enc_layers=1
    )
