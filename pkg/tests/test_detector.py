import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hydrasec import detector as det
from hydrasec.errors import CalibrationError

residual_rows = st.lists(
    st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=3, max_size=3),
    min_size=1,
    max_size=60,
)


def test_calibrate_examples():
    np.testing.assert_array_equal(det.calibrate([(0, 0, 0)] * 5).beta, [0, 0, 0])
    thr = det.calibrate([(0.1, 0, 0), (0.3, 0, 0), (0.2, 0, 0)])
    assert thr.beta[0] == 0.3
    assert thr.calibration_len == 3
    assert det.calibrate([(0, 0.2, 0), (0, -0.5, 0)]).beta[1] == 0.5
    assert det.calibrate([(0.5,)], margin=1.2).beta[0] == pytest.approx(0.6)


def test_calibrate_skips_missing_rows():
    thr = det.calibrate([(0.1, 0.1, 0.1), (math.nan,) * 3, (0.2, 0.0, 0.0)])
    np.testing.assert_array_equal(thr.beta, [0.2, 0.1, 0.1])
    assert thr.calibration_len == 3


@pytest.mark.parametrize("history, margin", [([], 1.0), ([(math.nan, 0.0)], 1.0), ([(0.1,)], 0.0)])
def test_calibrate_errors(history, margin):
    with pytest.raises(CalibrationError):
        det.calibrate(history, margin)


def test_decide_examples():
    thr = det.ThresholdVector(np.array([0.3, 0.3, 0.3]), 10)
    assert det.decide((0, 0, 0), thr) == det.Decision(det.H0)
    assert det.decide((0.3, -0.3, 0.3), thr).hypothesis == det.H0
    d = det.decide((0, 0.31, 0), thr)
    assert d.hypothesis == det.H1 and d.violated == {2} and d.alarm
    assert det.decide((-1, 0, 1), thr).violated == {1, 3}


def test_decision_consistency_enforced():
    with pytest.raises(ValueError):
        det.Decision(det.H1)
    with pytest.raises(ValueError):
        det.Decision(det.H0, frozenset({1}))


@given(residual_rows)
def test_no_in_sample_alarms_at_unit_margin(rows):
    thr = det.calibrate(rows, 1.0)
    assert all(det.decide(r, thr).hypothesis == det.H0 for r in rows)


@given(residual_rows, st.floats(1.0, 3.0))
def test_margin_scales_thresholds(rows, margin):
    base = det.calibrate(rows, 1.0)
    np.testing.assert_allclose(det.calibrate(rows, margin).beta, margin * base.beta)


def test_alarm_stream_examples():
    h0 = det.Decision(det.H0)
    h1 = det.Decision(det.H1, frozenset({1}))
    assert det.alarm_stream([h0] * 10) == ([], None)
    decisions = [h0] * 3 + [h1, h0, h1]
    events, delay = det.alarm_stream(decisions, onset=502, start=500)
    assert [e.step for e in events] == [503, 505]
    assert delay == 1
    assert det.alarm_stream([h1, None, h1], onset=5, start=0)[1] is None


def test_threshold_file_roundtrip(tmp_path):
    thr = det.ThresholdVector(np.array([0.1, 1 / 3, 5e-324]), 1000, 1.2)
    path = tmp_path / "thr.txt"
    det.save_thresholds(path, thr)
    back = det.load_thresholds(path)
    assert back.beta.tobytes() == thr.beta.tobytes()
    assert back.calibration_len == 1000 and back.margin == 1.2
    assert path.read_text().endswith("\n")


@pytest.mark.parametrize(
    "text",
    ["margin = 1\n", "margin = 1\ncalibration_len = 5\n", "garbage\n",
     "margin = 1\ncalibration_len = 5\nbeta.x1 = 0.1\nextra = 2\n"],
)
def test_threshold_file_errors(tmp_path, text):
    path = tmp_path / "thr.txt"
    path.write_text(text)
    with pytest.raises(CalibrationError):
        det.load_thresholds(path)


def test_threshold_vector_validation():
    with pytest.raises(CalibrationError):
        det.ThresholdVector(np.array([-0.1]), 1)
    with pytest.raises(CalibrationError):
        det.ThresholdVector(np.array([0.1]), 0)
