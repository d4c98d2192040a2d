import pytest

from properties import CASES, PROPERTY_SUITES

LITERAL_PA = "pa_mpjpe_not_above_mpjpe"


def _param(fn):
    if fn.__name__ == LITERAL_PA:
        reason = "mean per-joint distance can grow under least-squares alignment"
        return pytest.param(fn, id=fn.__name__, marks=pytest.mark.xfail(strict=True, reason=reason))
    return pytest.param(fn, id=fn.__name__)


@pytest.mark.parametrize("suite", [_param(f) for f in PROPERTY_SUITES])
def test_property(suite):
    assert suite() >= CASES
