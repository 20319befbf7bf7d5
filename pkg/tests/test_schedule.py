import numpy as np
import pytest

from kzquench.schedule import SweepSchedule


def test_field_is_linear_and_lands_on_endpoint():
    s = SweepSchedule(rate=0.3, h_start=2.0, h_end=0.0, dt=0.1)
    steps = s.steps()
    assert s.duration == pytest.approx(2.0 / 0.3)
    assert sum(st.dt for st in steps) == pytest.approx(s.duration)
    assert steps[-1].h_after == 0.0
    assert all(st.dt <= 0.1 + 1e-15 for st in steps)
    for st in steps:
        assert st.h_mid == pytest.approx(2.0 - 0.3 * (st.t + st.dt / 2))


def test_exact_multiple_has_no_sliver_step():
    s = SweepSchedule(rate=1.0, h_start=2.0, h_end=0.0, dt=0.1)
    assert s.n_steps == 20
    assert s.steps()[-1].dt == pytest.approx(0.1)


def test_measurement_stride_and_final():
    s = SweepSchedule(rate=1.0, dt=0.1, measurement_stride=7)
    measured = [st.index for st in s.steps() if st.measure]
    assert measured == [6, 13, 19]
    assert [st.index for st in SweepSchedule(rate=1.0, measurement_stride=0).steps()
            if st.measure] == [19]


def test_checkpoints_clamp_and_restart_grid():
    s = SweepSchedule(rate=0.7, h_start=2.0, h_end=-0.2, dt=0.1, checkpoints=(0.2, 0.0))
    assert s.checkpoints == (0.2, 0.0)
    steps = s.steps()
    hits = [st for st in steps if st.checkpoint]
    assert [st.h_after for st in hits] == [0.2, 0.0, -0.2]
    # the segment up to the first checkpoint equals a standalone run ending there
    alone = SweepSchedule(rate=0.7, h_start=2.0, h_end=0.2, dt=0.1).steps()
    first = steps[:len(alone)]
    assert [(a.t, a.dt, a.h_mid) for a in alone] == [(b.t, b.dt, b.h_mid) for b in first]
    assert sum(st.dt for st in steps) == pytest.approx(s.duration)


@pytest.mark.parametrize("kwargs", [dict(rate=0.0), dict(rate=-1.0), dict(rate=1.0, dt=0.0),
                                    dict(rate=1.0, h_end=3.0),
                                    dict(rate=1.0, checkpoints=(2.5,)),
                                    dict(rate=1.0, measurement_stride=-1)])
def test_invalid_schedules(kwargs):
    with pytest.raises(ValueError):
        SweepSchedule(**kwargs)


@pytest.mark.parametrize("rate", np.geomspace(0.01, 5, 9))
def test_step_count_matches_duration(rate):
    s = SweepSchedule(rate=rate)
    assert s.n_steps == int(np.ceil(s.duration / s.dt - 1e-9))
