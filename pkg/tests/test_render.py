import pytest

from app.andl.parser import parse
from app.andl.render import render
from app.andl.validator import validate

from conftest import scenario_text


@pytest.mark.parametrize("name", ["listing1", "control", "camera", "audio", "camera_rc", "audio_rc", "burst"])
def test_rendered_text_validates_to_the_same_model(name):
    model = validate(parse(scenario_text(name)))
    again = validate(parse(render(model)))
    assert again == model


def test_rendering_is_stable(listing1_text):
    once = render(validate(parse(listing1_text)))
    assert render(validate(parse(once))) == once


def test_overrides_survive_rendering(control_text):
    model = validate(parse(control_text), {"drift_ppm": "100", "seed": "9", "sync_precision": "0ps"})
    again = validate(parse(render(model)))
    assert again == model
    assert again.seed == 9
