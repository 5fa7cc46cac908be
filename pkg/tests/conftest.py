import numpy as np
import pytest

from vectormesh import catalog
from vectormesh.workloads import eval_reference, random_inputs


@pytest.fixture(scope="session")
def reference_cache():
    """Shared exact-reference outputs so each workload is evaluated once."""
    cache = {}

    def get(w, seed):
        key = (w.name, w.meta.get("spatial"), seed)
        if key not in cache:
            ins = random_inputs(w, seed)
            cache[key] = (ins, eval_reference(w, ins))
        return cache[key]

    return get


def classic_entries():
    return catalog.catalog("classic")


import os
from hypothesis import Phase, settings as _settings

if os.environ.get("HYPOTHESIS_NO_SHRINK"):
    _settings.register_profile(
        "noshrink", phases=[Phase.explicit, Phase.reuse, Phase.generate]
    )
    _settings.load_profile("noshrink")
