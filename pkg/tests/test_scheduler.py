import pytest

from app.andl.parser import parse
from app.andl.scheduler import generate_tt_schedule, schedule_rows, sync_slack, tt_cycle
from app.andl.validator import validate
from app.sim.errors import Infeasible, LcmOverflow
from app.sim.ethernet import wire_duration

US = 10**6
MS = 10**9
RATE = 100 * 10**6

TWO_FLOWS = """
network n {
  devices { node a; node b; switch s; }
  connections { segment lan { a <--> s; s <--> b; } }
  communication {
    message m1 { sender a; receivers b; payload %(size)s; period %(p1)s; mapping { lan: tt{ctID 1;}; } }
    message m2 { sender a; receivers b; payload 100B; period %(p2)s; mapping { lan: tt{ctID 2;}; } }
  }
}
"""


def _model(size: str = "100B", p1: str = "1ms", p2: str = "2ms"):
    return validate(parse(TWO_FLOWS % {"size": size, "p1": p1, "p2": p2}))


def test_cycle_is_the_lcm_of_periods():
    assert tt_cycle([2 * MS, 5 * MS]) == 10 * MS
    with pytest.raises(LcmOverflow):
        tt_cycle([3 * MS, 7 * MS], cap=10 * MS)


def test_listing1_schedule(listing1_text):
    model = validate(parse(listing1_text))
    slack = sync_slack(model)
    # default clocks: 500ns precision, no drift, 80ns tick on every device
    assert slack == 2 * (500_000 + 80_000)
    generate_tt_schedule(model)
    rows = schedule_rows(model.schedules)
    assert [row["port"] for row in rows] == ["gw1->switch1", "switch1->gw2"]
    tx = wire_duration(64, RATE)
    window = tx + slack + 80_000
    first, second = rows
    assert (first["offset_ps"], first["ct_id"], first["window_ps"], first["period_ps"]) == (0, 102, window, 5 * MS)
    earliest = tx + 8 * US + slack
    assert second["offset_ps"] == -(-earliest // 80_000) * 80_000
    assert second["window_ps"] == window


def test_shared_ports_never_overlap():
    model = _model()
    schedules = generate_tt_schedule(model)
    assert set(schedules) == {"a->s", "s->b"}
    for schedule in schedules.values():
        assert schedule.cycle == 2 * MS
        schedule.validate()
        windows = sorted(schedule.windows())
        assert all(end <= start for (_, end, _), (start, _, _) in zip(windows, windows[1:]))


def test_downstream_offsets_follow_upstream_hops():
    model = _model()
    schedules = generate_tt_schedule(model)
    slack = sync_slack(model)
    for ct_id, payload in ((1, 100), (2, 100)):
        upstream = schedules["a->s"].action_for(ct_id)
        downstream = schedules["s->b"].action_for(ct_id)
        tx = wire_duration(18 + payload, RATE)
        assert downstream.offset >= upstream.offset + tx + 8 * US + slack


def test_frame_longer_than_its_period_is_infeasible():
    with pytest.raises(Infeasible):
        generate_tt_schedule(_model(size="1500B", p1="100us"))


def test_models_without_tt_get_no_schedule():
    model = validate(parse(TWO_FLOWS.replace("tt{ctID 1;}", "be{}").replace("tt{ctID 2;}", "be{}")
                           % {"size": "100B", "p1": "1ms", "p2": "2ms"}))
    assert generate_tt_schedule(model) == {}
    assert model.schedules == {}
