import numpy as np
import pytest

from kinchemo import ConfigurationError, load_config, parse_config

from conftest import SCENARIOS, scenario_text

STANDARD = scenario_text("standard")


def codes(exc):
    return {(e.code, e.field) for e in exc.errors}


def edited(old, new, text=STANDARD):
    assert old in text
    return text.replace(old, new, 1)


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.cfg")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    cfg = load_config(path)
    assert cfg.validation is not None and cfg.validation.satisfied_regimes
    assert len(cfg.config_hash) == 16


def test_standard_reaches_strongest_regime():
    cfg = parse_config(STANDARD)
    assert "corollary2" in cfg.validation.satisfied_regimes
    assert cfg.n_steps == 200 and cfg.compare_times == (1.0, 2.0, 5.0)
    assert cfg.model.velocities.size == 2


def test_negative_decay_rate():
    with pytest.raises(ConfigurationError) as exc:
        parse_config(edited("k0 = [1.0]", "k0 = [-1.0]"))
    assert ("POSITIVITY", "signal.k0") in codes(exc.value)


def test_all_errors_reported_together():
    text = edited("k0 = [1.0]", "k0 = [-1.0]")
    text = edited("nx = 320", "nx = 0", text)
    with pytest.raises(ConfigurationError) as exc:
        parse_config(text)
    assert {("POSITIVITY", "signal.k0"), ("POSITIVITY", "domain.nx")} <= codes(exc.value)


def test_kernel_normalization():
    text = edited('kernel = { variant = "uniform" }',
                  'kernel = { variant = "tabulated", matrix = [[0.4, 0.4], [0.5, 0.5]] }')
    with pytest.raises(ConfigurationError) as exc:
        parse_config(text)
    assert exc.value.code == "KERNEL_NORMALIZATION"


def test_negative_kernel_entry():
    text = edited('kernel = { variant = "uniform" }',
                  'kernel = { variant = "tabulated", matrix = [[1.1, 1.0], [-0.1, 0.0]] }')
    with pytest.raises(ConfigurationError) as exc:
        parse_config(text)
    assert exc.value.code == "KERNEL_SIGN"


def test_asymmetric_velocities():
    text = edited("speeds = [-1.0, 1.0]", "speeds = [-1.0, 2.0]")
    with pytest.raises(ConfigurationError) as exc:
        parse_config(text)
    assert exc.value.code == "SYMMETRY"


def test_unknown_variants():
    with pytest.raises(ConfigurationError) as exc:
        parse_config(edited('[domain]', '[domain]\ny_coords = "polar"'))
    assert ("UNKNOWN_VARIANT", "domain.y_coords") in codes(exc.value)
    with pytest.raises(ConfigurationError) as exc:
        parse_config(edited('mode = "kinetic"', 'mode = "hybrid"'))
    assert ("UNKNOWN_VARIANT", "scenario.mode") in codes(exc.value)


def test_step_size_limit():
    with pytest.raises(ConfigurationError) as exc:
        parse_config(edited("dt = 0.05", "dt = 0.2"))
    assert "STEP_SIZE" in {c for c, _ in codes(exc.value)}


def test_support_must_stay_below_half_domain():
    with pytest.raises(ConfigurationError) as exc:
        parse_config(edited("width = 1.5, cutoff = 4.0", "width = 3.0, cutoff = 4.0"))
    assert ("SUPPORT_WIDTH", "initial.x") in codes(exc.value)


def test_missing_section_and_parse_error():
    with pytest.raises(ConfigurationError) as exc:
        parse_config(STANDARD.replace("[signal]", "[sig]"))
    assert ("MISSING_FIELD", "signal") in codes(exc.value)
    with pytest.raises(ConfigurationError) as exc:
        parse_config("[scenario\nT = 1")
    assert exc.value.code == "PARSE"
    with pytest.raises(ConfigurationError) as exc:
        load_config(SCENARIOS / "no_such.cfg")
    assert exc.value.code == "NOT_FOUND"


def test_wrong_types():
    with pytest.raises(ConfigurationError) as exc:
        parse_config(edited("nx = 320", 'nx = "many"'))
    assert ("TYPE", "domain.nx") in codes(exc.value)


def test_hash_ignores_workers_only():
    base = parse_config(STANDARD)
    more = parse_config(edited("[scenario]", "[scenario]\nworkers = 4"))
    assert more.workers == 4 and more.config_hash == base.config_hash
    other = parse_config(edited("seed = 20240611", "seed = 1"))
    assert other.config_hash != base.config_hash


def test_workers_default_applies_when_unset():
    assert parse_config(STANDARD, workers_default=3).workers == 3
    assert parse_config(edited("[scenario]", "[scenario]\nworkers = 2"), workers_default=3).workers == 2


def test_exponent_product_above_one_drops_corollary1():
    cfg = parse_config(edited("sigma = 1.0", "sigma = 2.0"))
    res = cfg.validation.checks["growthylam"]
    assert not res.passed and res.witness == {"omega*sigma": 2.0}
    assert "corollary1" not in cfg.validation.satisfied_regimes


def test_y_box_override_is_read():
    cfg = parse_config(STANDARD)
    assert np.array_equal(cfg.y_box, [[-1.0, 1.0], [-0.1, 1.0]])
