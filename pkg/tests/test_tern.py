"""Optional check on the published tern tracks.

Set ``ARHMM_TERN_TRACKS`` to a location CSV (``id,x,y[,t_sec]``) recorded at
30 Hz. Tracks with more than 1000 raw locations are downsampled to 1 Hz and
pooled, and BIC must prefer step and turn degrees (1, 3) over the uniform
degree 0-3 models.
"""

import os

import pytest

from arhmm import io
from arhmm.fit import FitOptions, fit
from arhmm.geometry import downsample, steps_and_turns
from arhmm.likelihood import PooledData
from arhmm.model import ModelSpec

TRACKS = os.environ.get("ARHMM_TERN_TRACKS")

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(not TRACKS or not os.path.exists(TRACKS), reason="tern data not available"),
]


def test_bic_prefers_mixed_degrees():
    factor = int(os.environ.get("ARHMM_TERN_DOWNSAMPLE", "30"))
    tracks = [t for t in io.read_tracks(TRACKS) if len(t.locations) > 1000]
    data = PooledData([steps_and_turns(downsample(t, factor), zero_floor=1e-6) for t in tracks])
    opts = FitOptions(n_starts=20, seed=0)
    best = fit(data, ModelSpec(2, (1, 3), (1, 3)), opts=opts).bic
    for d in range(4):
        assert best < fit(data, ModelSpec.uniform(2, d), opts=opts).bic, d
