from fractions import Fraction

import pytest

from app.andl.ast import AndlError
from app.andl.parser import parse
from app.andl.validator import CAN, ETHERNET, parse_override, validate
from app.sim.network import simulate

MS = 10**9
US = 10**6

LAN = """
network n {
  devices { node a %(a_body)s; node b; switch s; node c; }
  connections { segment lan { a <--> s; s <--> b; } }
  communication {
    message m { sender a; receivers %(receivers)s; payload 100B; %(period)s mapping { %(mapping)s } }
  }
}
"""


def _lan(a_body: str = "", receivers: str = "b", period: str = "period 1ms;",
         mapping: str = "lan: be{};") -> str:
    return LAN % {"a_body": a_body, "receivers": receivers, "period": period, "mapping": mapping}


def _errors(text: str, overrides=None) -> list[str]:
    with pytest.raises(AndlError) as info:
        validate(parse(text), overrides)
    return [d.message for d in info.value.diagnostics]


def test_listing1_model(listing1_text):
    model = validate(parse(listing1_text))
    assert model.name == "twoBus"
    assert model.segments == {"backbone": ETHERNET, "canbus": CAN}
    assert model.metadata == {"record-eventlog": "false"}
    message = model.message("msg1")
    assert message.routes == {"node2": ["node1", "bus1", "gw1", "switch1", "gw2", "bus2", "node2"]}
    assert message.traffic_class == "TT"
    assert message.stream_key("node2") == "msg1->node2"
    assert message.pools["gw1"].holdup == 10 * MS

    (flow,) = model.flows.values()
    assert flow.key == "pool:gw1.gw1_1"
    # three 6B frames fit within one 10ms holdUp at a 5ms period
    assert flow.payload == 1 + 3 * (5 + 6)
    assert flow.period == 5 * MS
    assert flow.branches == [[("gw1", "switch1"), ("switch1", "gw2")]]
    assert flow.forwarding == {"switch1": ["gw2"]}
    assert flow.first_hops == ["switch1"]
    assert model.ethernet_devices() == ["gw1", "gw2", "switch1"]
    assert sorted(model.bus_members("bus1")) == ["gw1", "node1"]


def test_ethernet_route_and_forwarding():
    model = validate(parse(_lan()))
    message = model.message("m")
    assert message.routes == {"b": ["a", "s", "b"]}
    assert message.traffic_class == "BE"
    assert model.flows["m"].forwarding == {"s": ["b"]}
    assert model.devices["s"].processing_delay == 8 * US


def test_time_triggered_message_needs_a_period():
    errors = _errors(_lan(period="", mapping="lan: tt{ctID 1;};"))
    assert any("needs a period" in e for e in errors)


def test_unsupported_parameters_only_warn():
    model = validate(parse(_lan(a_body="{ colour 5; }")))
    (warning,) = model.warnings
    assert warning.severity == "warning"
    assert "colour" in warning.message


def test_missing_mapping_for_a_crossed_segment():
    errors = _errors(_lan(mapping=""))
    assert any("crosses segment 'lan' without a mapping" in e for e in errors)


def test_unreachable_receiver():
    errors = _errors(_lan(receivers="c"))
    assert any("unreachable" in e for e in errors)


def test_can_payload_limit():
    text = """
    network n {
      devices { node a; node b; canLink bus; }
      connections { segment c { a <--> bus; b <--> bus; } }
      communication { message m { sender a; receivers b; payload 9B; mapping { c: can{id 5;}; } } }
    }"""
    errors = _errors(text)
    assert any("more than 8B" in e for e in errors)


def test_mapping_must_fit_the_segment_medium():
    errors = _errors(_lan(mapping="lan: can{id 5;};"))
    assert any("does not fit" in e for e in errors)


def test_ct_ids_are_unique_across_flows():
    text = """
    network n {
      devices { node a; node b; switch s; }
      connections { segment lan { a <--> s; s <--> b; } }
      communication {
        message m1 { sender a; receivers b; payload 10B; period 1ms; mapping { lan: tt{ctID 1;}; } }
        message m2 { sender b; receivers a; payload 10B; period 1ms; mapping { lan: tt{ctID 1;}; } }
      }
    }"""
    errors = _errors(text)
    assert any("ctID 1 used by both" in e for e in errors)


def test_pool_that_cannot_fit_one_frame_is_rejected(listing1_text):
    errors = _errors(listing1_text.replace("holdUp 10ms", "holdUp 1s"))
    assert any("more than one 1500B Ethernet payload" in e for e in errors)


def test_negative_payload_is_rejected():
    errors = _errors(_lan().replace("payload 100B", "payload -1B"))
    assert any("payload cannot be negative" in e for e in errors)


def test_rc_defaults_bag_to_the_period():
    model = validate(parse(_lan(mapping="lan: rc{vlID 9;};")))
    mapping = model.message("m").mappings["lan"]
    assert (mapping.vl_id, mapping.bag, mapping.priority) == (9, MS, 7)
    assert model.message("m").traffic_class == "RC"


def test_avb_class_b_priority():
    model = validate(parse(_lan(mapping="lan: avb{streamID 4; srClass B;};")))
    mapping = model.message("m").mappings["lan"]
    assert (mapping.sr_class, mapping.priority) == ("B", 2)
    assert mapping.class_tag().queue_label == "AVB:B"


def test_device_overrides():
    model = validate(parse(_lan()), {"processing_delay": "3us", "drift_ppm": "50", "seed": "7",
                                     "sim_time_limit": "2s", "sync_precision": "0ps"})
    assert model.devices["s"].processing_delay == 3 * US
    assert [model.devices[name].clock.drift_ppm for name in ("a", "b", "s", "c")] == [
        Fraction(50), Fraction(-50), Fraction(50), Fraction(-50),
    ]
    assert all(device.clock.sync_precision == 0 for device in model.devices.values())
    assert model.seed == 7
    assert model.sim_time_limit == 2 * 10**12
    assert model.overrides["seed"] == "7"


def test_cross_traffic_frame_size_resizes_best_effort_messages():
    model = validate(parse(_lan()), {"cross_traffic_frame_size": "64B"})
    assert model.message("m").payload == 46
    model = validate(parse(_lan()), {"cross_traffic_frame_size": "0B"})
    assert model.messages == [] and model.flows == {}


def test_cross_traffic_size_leaves_other_classes_alone():
    model = validate(parse(_lan(mapping="lan: rc{vlID 1;};")), {"cross_traffic_frame_size": "64B"})
    assert model.message("m").payload == 100


def test_unknown_override_is_a_configuration_error():
    errors = _errors(_lan(), {"bogus": "1"})
    assert any("unknown override 'bogus'" in e for e in errors)


@pytest.mark.parametrize("name, text", [("bogus", "1"), ("processing_delay", "3"), ("drift_ppm", "5ms")])
def test_parse_override_rejects(name, text):
    with pytest.raises(ValueError):
        parse_override(name, text)


def test_parse_override_keeps_the_sign():
    assert parse_override("drift_ppm", "-20") == -20


def test_inline_ini_run_settings():
    text = _lan().replace("devices", "inline ini {\n seed-set = 4\n sim-time-limit = 20ms\n}\n  devices", 1)
    model = validate(parse(text))
    assert (model.seed, model.sim_time_limit) == (4, 20 * MS)


def test_missing_network():
    with pytest.raises(AndlError):
        validate(parse("types t { node N { } }"))


TWO_STREAMS = """
network n {
  devices { node a; node b; switch s; }
  connections { segment lan { a <--> s; s <--> b; } }
  communication {
    message v1 { sender a; receivers b; payload 100B; period 1ms;
      mapping { lan: avb{streamID 1; srClass A; idleSlope %(first)s;}; } }
    message v2 { sender a; receivers b; payload 100B; period 1ms;
      mapping { lan: avb{streamID 2; srClass A; idleSlope %(second)s;}; } }
  }
}
"""


def test_avb_reservations_must_stay_below_the_link_rate():
    with pytest.raises(AndlError) as info:
        validate(parse(TWO_STREAMS % {"first": "60Mb/s", "second": "60Mb/s"}))
    diagnostics = info.value.diagnostics
    assert [d.line for d in diagnostics] == [9, 9]
    assert "a->s" in diagnostics[0].message and "s->b" in diagnostics[1].message
    assert all("(v1, v2)" in d.message and "120Mb/s" in d.message for d in diagnostics)


def test_avb_reservation_equal_to_the_link_rate_is_rejected():
    messages = _errors(TWO_STREAMS % {"first": "50Mb/s", "second": "50Mb/s"})
    assert len(messages) == 2
    assert all("100Mb/s" in m for m in messages)


def test_avb_reservations_below_the_rate_simulate():
    model = validate(parse(TWO_STREAMS % {"first": "40Mb/s", "second": "50Mb/s"}))
    result = simulate(model, 10 * MS)
    assert result.collector.streams["v1->b"].count == 10
    assert result.collector.streams["v2->b"].count == 10


def test_idle_slope_must_be_positive():
    assert "idleSlope must be positive" in _errors(TWO_STREAMS % {"first": "0b/s", "second": "10Mb/s"})


def test_time_triggered_message_cannot_send_a_burst():
    errors = _errors(_lan(period="period 1ms; burst 3;", mapping="lan: tt{ctID 1;};"))
    assert any("time-triggered message 'm' sends one frame per period, not a burst of 3" in e for e in errors)
    model = validate(parse(_lan(period="period 1ms; burst 3;", mapping="lan: rc{vlID 1; bag 100us;};")))
    assert model.message("m").burst == 3
