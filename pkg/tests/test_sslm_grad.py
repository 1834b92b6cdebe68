import pytest

from helpers import gradient_check, micro_setup
from longform_bench.sslm.model import PARAM_NAMES


@pytest.mark.parametrize("seed,lengths", [(3, (8,)), (5, (8, 6)), (11, (9, 9, 7))])
def test_gradients_match_finite_differences(seed, lengths):
    cfg, params, x, lens = micro_setup(seed, lengths)
    errors = gradient_check(params, cfg, x, lens)
    assert set(errors) == set(PARAM_NAMES)
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-4, f"{worst}: {errors[worst]:.2e}"
