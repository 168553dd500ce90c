import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """Full-size untrained ARP plus an ETV whose weights are blown up 30x so
    that its raw outputs leave the engine ranges; with a config next to them."""
    from voiceadapt import arp, etv, nn
    from voiceadapt.corpus import load_shipped_corpus

    d = tmp_path_factory.mktemp("models")
    nn.save_weights(arp.build_arp(), d / "arp.weights")
    x = np.array([etv.context_inputs(t.context, t.user) for t in load_shipped_corpus()[:500]])
    w = etv.build_etv(normalizer=etv.Normalizer.fit(x))
    for layer in w.layers:
        for v in layer.params.values():
            v *= 30.0
    nn.save_weights(w, d / "etv.weights")
    (d / "config.yaml").write_text(
        "arp_weights: arp.weights\netv_weights: etv.weights\n"
        "rooms:\n  office: 0.19\n  hall: 0.78\n"
    )
    return d
