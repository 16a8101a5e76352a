import dataclasses

import numpy as np
import pytest

from awmeta import ConfigError, ExperimentConfig, config_from_mapping, load_config, parse_config_text


def test_defaults_validate():
    cfg = ExperimentConfig().validate()
    assert cfg.backend == "maml" and cfg.mode == "anyway"
    assert cfg.o == 12 and cfg.cardinality_pool == (3, 5, 7)


def test_parse_text_comments_and_lambda_key():
    text = """
# run settings
backend = maml
lambda = 0.25   # weight
episodes=100
cardinality_pool = 3,5
semantic_enabled = true
"""
    raw = parse_config_text(text, "inline")
    cfg = config_from_mapping(raw)
    assert cfg.lam == 0.25
    assert cfg.episodes == 100
    assert cfg.cardinality_pool == (3, 5)
    assert cfg.semantic_enabled is True


def test_parse_text_errors_name_the_line():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("backend maml", "conf.txt")
    assert "conf.txt:1" in str(exc.value)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"bogus_key": "1"})
    assert "bogus_key" in str(exc.value)


def test_bad_typed_values():
    with pytest.raises(ConfigError):
        config_from_mapping({"episodes": "many"})
    with pytest.raises(ConfigError):
        config_from_mapping({"semantic_enabled": "maybe"})
    with pytest.raises(ConfigError):
        config_from_mapping({"cardinality_pool": "3,x"})


def test_flat_dict_roundtrip():
    cfg = ExperimentConfig(backend="protonet", lam=0.125, cardinality_pool=(3, 9),
                           data_train=None, semantic_enabled=True, seed=11).validate()
    flat = cfg.to_flat_dict()
    assert flat["lambda"] == "0.125"
    back = config_from_mapping({k: v for k, v in flat.items() if v != ""})
    assert back == cfg


def test_validation_messages():
    with pytest.raises(ConfigError):
        ExperimentConfig(backend="svm").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="fixed").validate()  # fixed_n missing
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="fixed", fixed_n=5, o=7, eval_ns=(5,)).validate()  # o must equal fixed_n
    with pytest.raises(ConfigError):
        ExperimentConfig(o=6, cardinality_pool=(3, 7)).validate()  # pool exceeds width
    with pytest.raises(ConfigError):
        ExperimentConfig(o=12, eval_ns=(15,)).validate()  # eval exceeds width
    with pytest.raises(ConfigError):
        ExperimentConfig(mixup_enabled=True).validate()  # mixup needs semantic
    with pytest.raises(ConfigError):
        ExperimentConfig(backend="protonet", semantic_enabled=True, mixup_enabled=True).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(data_val="x.bin").validate()  # file splits need data_train


def test_resolved_lambda_defaults():
    assert ExperimentConfig(semantic_enabled=False).validate().resolved_lambda == 0.0
    assert ExperimentConfig(semantic_enabled=True, shots=5).validate().resolved_lambda == 0.5
    assert ExperimentConfig(semantic_enabled=True, shots=1).validate().resolved_lambda == 0.1
    assert ExperimentConfig(semantic_enabled=True, shots=1, lam=0.9).validate().resolved_lambda == 0.9
    proto = ExperimentConfig(backend="protonet", semantic_enabled=True, shots=5).validate()
    assert proto.resolved_lambda == 0.1
    assert ExperimentConfig(shots=5).validate().resolved_ema_rate == 0.05
    assert ExperimentConfig(shots=1).validate().resolved_ema_rate == 0.01


def test_episode_spec_fixed_mode():
    cfg = ExperimentConfig(mode="fixed", fixed_n=5, o=5, cardinality_pool=(3, 5, 7),
                           eval_ns=(5,)).validate()
    spec = cfg.episode_spec()
    assert spec.fixed_n == 5 and spec.cardinality_pool == (5,)


def test_synthetic_splits_differ():
    cfg = ExperimentConfig(synth_train_classes=4, synth_val_classes=3,
                           synth_test_classes=3, synth_per_class=6, seed=0).validate()
    train, val, test = cfg.datasets()
    assert train.class_count == 4 and val.class_count == 3 and test.class_count == 3
    tm = train.classes[0].mean(axis=0)
    vm = val.classes[0].mean(axis=0)
    em = test.classes[0].mean(axis=0)
    assert not np.allclose(tm, vm, atol=0.2)
    assert not np.allclose(vm, em, atol=0.2)
    # reproducible
    train2, _, _ = cfg.datasets()
    assert np.array_equal(train.classes[0], train2.classes[0])


def test_build_model_backends():
    cfg = ExperimentConfig().validate()
    model = cfg.build_model(16, 20)
    assert model.o == 12
    sem_cfg = dataclasses.replace(cfg, semantic_enabled=True).validate()
    model2 = sem_cfg.build_model(16, 20)
    assert model2.semantic_head is not None and model2.semantic_head.out_dim == 20
    proto_cfg = dataclasses.replace(cfg, backend="protonet").validate()
    pm = proto_cfg.build_model(16, 20)
    assert pm.memory is None  # memory appears at training time


def test_load_config_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("episodes = 50\nseed = 3\n")
    cfg = load_config(p, {"seed": "9", "outer_lr": "0.01"})
    assert cfg.episodes == 50 and cfg.seed == 9 and cfg.outer_lr == 0.01
    cfg2 = load_config(None, None)
    assert cfg2 == ExperimentConfig().validate()
