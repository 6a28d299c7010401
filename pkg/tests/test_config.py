import pytest
import yaml

from dflsim.config import (
    ExperimentConfig,
    dump_config,
    find_sweep_axes,
    from_dict,
    load_config,
    resolve,
    set_path,
    to_dict,
)
from dflsim.errors import ConfigError


def test_empty_file_is_all_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == ExperimentConfig()
    assert cfg.rounds == 30 and cfg.topology.n == 128 and cfg.aggregator.include_self


def test_roundtrip():
    cfg = resolve(from_dict({"topology": {"kind": "scale_free", "m0": 4, "m": 2}, "rounds": 3, "master_seed": 7}))
    assert from_dict(yaml.safe_load(dump_config(cfg))) == cfg
    assert from_dict(to_dict(cfg)) == cfg


def test_resolve_fills_seeds_deterministically():
    a, b = resolve(ExperimentConfig(master_seed=4)), resolve(ExperimentConfig(master_seed=4))
    assert a == b
    assert None not in (a.topology.seed, a.adversary.seed, a.dataset.seed)
    assert resolve(ExperimentConfig(master_seed=5)).topology.seed != a.topology.seed


def test_explicit_seed_kept():
    assert resolve(from_dict({"topology": {"seed": 11}})).topology.seed == 11


@pytest.mark.parametrize(
    "data,key",
    [
        ({"topolgy": {}}, "topolgy"),
        ({"topology": {"size": 3}}, "topology.size"),
        ({"topology": {"n": "many"}}, "topology.n"),
        ({"topology": {"kind": "ring"}}, "topology.kind"),
        ({"rounds": 0}, "rounds"),
        ({"aggregator": {"include_self": 1}}, "aggregator.include_self"),
        ({"aggregator": {"geomed_weights": [1, 2]}}, "aggregator.geomed_weights"),
        ({"adversary": {"attack": {"std": -1.0}}}, "adversary.attack"),
        ({"adversary": {"proportion": [0.1, 0.2]}}, "adversary.proportion"),
        ({"training": {"batch_size": 500}}, "training"),
        ({"dataset": {"kind": "mnist"}}, "dataset.train_images"),
        ({"master_seed": -1}, "master_seed"),
    ],
)
def test_errors_name_the_key(data, key):
    with pytest.raises(ConfigError) as exc:
        from_dict(data)
    assert exc.value.key == key
    assert key in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_realized_section_is_accepted():
    cfg = from_dict({"rounds": 2, "realized": {"adversary": {"byzantine": [1, 2]}}})
    assert cfg.rounds == 2


def test_sweep_axes():
    raw = {"topology": {"beta": [0, 0.05]}, "adversary": {"b": 0.1}, "realized": {"x": [1]}}
    assert find_sweep_axes(raw) == [("topology.beta", [0, 0.05])]
    point = set_path(raw, "topology.beta", 0.05)
    assert point["topology"]["beta"] == 0.05 and raw["topology"]["beta"] == [0, 0.05]
