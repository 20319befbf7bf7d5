from pathlib import Path

import pytest

from kzquench.config import ConfigError, load_config, parse_config

CONFIGS = sorted(Path(__file__).resolve().parents[1].glob("configs/*/*.toml"))

MINIMAL = """
[model]
family = "ising_afm"
L = 8
preset = "free"

[schedule]
rates = [0.5, 1.0]
"""


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.model.lengths() == [8] and cfg.model.preset_names() == ["free"]
    assert cfg.schedule.rate_list() == [0.5, 1.0]
    assert cfg.schedule.endpoint_list() == [0.0]
    assert cfg.engine.bond_dims() == [300] and cfg.output.workers is None
    assert cfg.config_hash() == parse_config(MINIMAL).config_hash()


def test_log_spaced_rates():
    cfg = parse_config(MINIMAL.replace("rates = [0.5, 1.0]",
                                       "rate_min = 0.01\nrate_max = 1.0\nn_rates = 3"))
    assert cfg.schedule.rate_list() == pytest.approx([0.01, 0.1, 1.0])


def test_unknown_key_reports_line():
    text = MINIMAL + "\n[engine]\nbondd = 64\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text, "cfg.toml")
    (diag,) = info.value.diagnostics
    assert diag.startswith("cfg.toml:11:") and "bondd" in diag


@pytest.mark.parametrize("patch", [
    ("preset = \"free\"", "preset = \"mixed_AB\""),
    ("rates = [0.5, 1.0]", "rates = [0.5, -1.0]"),
    ("rates = [0.5, 1.0]", "rates = [0.5]\nrate_min = 0.1"),
    ("L = 8", "L = 8\nsizes = [8, 10]"),
    ("rates = [0.5, 1.0]", "rates = [0.5]\nh_end = 2.5"),
])
def test_invalid_values(patch):
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace(*patch))


def test_engine_guards():
    with pytest.raises(ConfigError, match="exceeds"):
        parse_config(MINIMAL.replace("L = 8", "L = 30") + "\n[engine]\nkind = \"exact\"\n")
    with pytest.raises(ConfigError, match="periodic"):
        parse_config(MINIMAL.replace("preset = \"free\"", "preset = \"periodic\""))
    with pytest.raises(ConfigError, match="sv_cutoff"):
        parse_config(MINIMAL + "\n[engine]\nsv_cutoff = 1.5\n")
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[analysis]\nkinds = [\"advanced\"]\n")


def test_toml_syntax_error():
    with pytest.raises(ConfigError):
        parse_config("[model\nfamily = 1")


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: f"{p.parent.name}/{p.stem}")
def test_shipped_configs_validate(path):
    cfg = load_config(path)
    assert cfg.schedule.rate_list()
