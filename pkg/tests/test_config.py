import copy

import pytest
import yaml

from phenokg.config import DEFAULT_CONFIG, from_dict, load_config
from phenokg.errors import ValidationError

BASE = DEFAULT_CONFIG.parent
RAW = yaml.safe_load(DEFAULT_CONFIG.read_text())


def build(**sections):
    raw = copy.deepcopy(RAW)
    for key, val in sections.items():
        if isinstance(val, dict):
            raw.setdefault(key, {}).update(val)
        else:
            raw[key] = val
    return from_dict(raw, BASE)


def test_bundled_config_loads():
    cfg = load_config(DEFAULT_CONFIG)
    assert cfg.seed == 7
    assert cfg.scores.omega == (0.4, 0.3, 0.3)
    assert cfg.backend.mode == "fixtures"
    assert cfg.backend.fixtures.is_dir()
    assert len(cfg.features) == 17


def test_omega_not_summing_to_one_names_the_key():
    with pytest.raises(ValidationError, match=r"evidence\.omega"):
        build(evidence={"omega": [0.4, 0.3, 0.2]})


@pytest.mark.parametrize(
    "section,values,key",
    [
        ("evidence", {"beta": [0.5, 0.6]}, r"evidence\.beta"),
        ("evidence", {"alpha": [1.2, -0.2]}, r"evidence\.alpha"),
        ("hypothesis", {"theta": [0.5, 0.5, 0.0, 0.0, 0.0, 0.1]}, r"hypothesis\.theta"),
        ("hypothesis", {"theta": [0.5, 0.5]}, r"hypothesis\.theta"),
        ("online", {"tau_anom": 0.7}, "tau_anom"),
        ("backend", {"mode": "carrier-pigeon"}, r"backend\.mode"),
        ("evidence", {"tau_d": "high"}, r"evidence\.tau_d"),
    ],
)
def test_invalid_values_are_rejected(section, values, key):
    with pytest.raises(ValidationError, match=key):
        build(**{section: values})


def test_negative_seed_rejected():
    with pytest.raises(ValidationError, match="seed"):
        build(seed=-1)


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError, match="not found"):
        load_config(tmp_path / "nope.yaml")


def test_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("seed: [unclosed\n")
    with pytest.raises(ValidationError, match="invalid YAML"):
        load_config(p)


def test_digest_tracks_settings():
    assert build().digest() == build().digest()
    assert build().digest() != build(evidence={"tau_c": 0.5}).digest()
