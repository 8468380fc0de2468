import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mevsindy.continuation import FrcPointSet
from mevsindy.errors import DegenerateAxis, EmptySet
from mevsindy.metrics import chamfer, mcdrc, mcdrc_parts, score_report, write_report


def _frc(omega, amp, phase):
    n = len(omega)
    return FrcPointSet(omega, amp, phase, np.ones(n, bool), 0.5)


def _lorentz_frc(n=2000, shift=0.0, c=0.05, lo=1.8, hi=2.2):
    om = np.linspace(lo, hi, n)
    amp = 1 / np.sqrt((4 - om ** 2) ** 2 + (c * om) ** 2)
    phase = np.arctan2(c * om, 4 - om ** 2)
    return _frc(om, amp + shift * np.ptp(amp), phase)


points = arrays(np.float64, st.tuples(st.integers(1, 30), st.just(2)),
                elements=st.floats(-100, 100, allow_nan=False))


def test_chamfer_examples():
    assert chamfer([[0.0, 0.0]], [[1.0, 0.0]]) == 1.0
    assert chamfer([[0.0, 0.0], [2.0, 0.0]], [[0.0, 0.0]]) == 1.0


@settings(max_examples=50, deadline=None)
@given(p=points)
def test_chamfer_identity(p):
    assert chamfer(p, p) == 0.0


@settings(max_examples=50, deadline=None)
@given(p=points, q=points)
def test_chamfer_nonnegative_and_subset(p, q):
    assert chamfer(p, q) >= 0
    both = np.vstack([p, q])
    assert chamfer(p, both) == 0.0


def test_chamfer_is_directed():
    full = np.column_stack([np.linspace(0, 1, 11), np.zeros(11)])
    subset = full[:3]
    assert chamfer(subset, full) == 0.0
    assert chamfer(full, subset) > 0.0


def test_chamfer_empty():
    with pytest.raises(EmptySet):
        chamfer(np.empty((0, 2)), [[0.0, 0.0]])


def test_mcdrc_identity():
    f = _lorentz_frc()
    assert mcdrc(f, f) == 0.0


def test_mcdrc_shift_follows_slope():
    # a small vertical shift d scores d * mean(cos(theta)) of the scaled curve
    ref = _lorentz_frc(n=4000)
    x = (ref.omega - ref.omega.min()) / np.ptp(ref.omega)
    y = (ref.amplitude - ref.amplitude.min()) / np.ptp(ref.amplitude)
    predicted = 0.05 * np.mean(1 / np.sqrt(1 + np.gradient(y, x) ** 2))
    assert mcdrc(_lorentz_frc(n=4000, shift=0.05), ref) == pytest.approx(predicted, rel=0.02)
    assert predicted < 0.045


def test_mcdrc_degenerate_reference():
    ref = _frc([1.0, 2.0], [1.0, 1.0], [0.1, 0.2])
    with pytest.raises(DegenerateAxis):
        mcdrc(ref, ref)


def test_score_report(tmp_path):
    ref = _lorentz_frc()
    rep = score_report(_lorentz_frc(shift=0.05), ref)
    assert rep["mcdrc"] == pytest.approx(rep["d_amp"] + rep["d_phase"])
    write_report(rep, tmp_path / "s.json")
    assert (tmp_path / "s.json").read_text().startswith("{")
