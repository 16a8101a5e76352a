import numpy as np
import pytest

from awmeta import (
    ConfigError,
    EpisodeSpec,
    MotherDataset,
    SamplingError,
    ValidationError,
    batch_tasks,
    check_pool_fits,
    make_rng,
    sample_cardinality,
    sample_task,
)


def toy_dataset(classes=6, per_class=12, d=4, seed=0):
    rng = make_rng(seed, "toy")
    blocks = [rng.normal(loc=c, size=(per_class, d)) for c in range(classes)]
    return MotherDataset(feature_dim=d, classes=blocks)


def test_dataset_names_autofill():
    ds = toy_dataset(classes=3)
    assert ds.names == ["class001", "class002", "class003"]
    assert ds.class_count == 3


def test_spec_pool_sorted_deduped():
    spec = EpisodeSpec(cardinality_pool=(7, 3, 3, 5))
    assert spec.cardinality_pool == (3, 5, 7)
    assert spec.max_cardinality == 7


def test_spec_rejects_bad_values():
    with pytest.raises(ValidationError):
        EpisodeSpec(cardinality_pool=())
    with pytest.raises(ValidationError):
        EpisodeSpec(cardinality_pool=(0, 3))
    with pytest.raises(ValidationError):
        EpisodeSpec(shots=0)
    with pytest.raises(ValidationError):
        EpisodeSpec(fixed_n=4, cardinality_pool=(3, 5))


def test_check_pool_fits():
    spec = EpisodeSpec(cardinality_pool=(3, 5, 7))
    check_pool_fits(spec, 7)
    with pytest.raises(ConfigError):
        check_pool_fits(spec, 6)


def test_sample_task_structure():
    ds = toy_dataset()
    rng = make_rng(1, "tasks")
    for _ in range(25):
        task = sample_task(ds, 3, 5, 4, rng)
        assert task.support_x.shape == (15, 4)
        assert task.query_x.shape == (12, 4)
        assert sorted(set(task.support_y.tolist())) == [1, 2, 3]
        assert sorted(set(task.query_y.tolist())) == [1, 2, 3]
        # numeric labels map to distinct real classes
        assert sorted(task.numeric_to_semantic) == [1, 2, 3]
        sem = list(task.numeric_to_semantic.values())
        assert len(set(sem)) == 3
        assert all(1 <= s <= ds.class_count for s in sem)


def test_sample_task_support_query_disjoint():
    ds = toy_dataset(classes=3, per_class=10)
    rng = make_rng(2, "disjoint")
    for _ in range(20):
        task = sample_task(ds, 2, 3, 3, rng)
        # rows drawn without replacement within a class: no row in both splits
        for lbl in (1, 2):
            sup = task.support_x[task.support_y == lbl]
            qry = task.query_x[task.query_y == lbl]
            both = np.vstack([sup, qry])
            assert len(np.unique(both, axis=0)) == len(both)


def test_sample_task_errors_name_the_problem():
    ds = toy_dataset(classes=2, per_class=4)
    rng = make_rng(3, "err")
    with pytest.raises(SamplingError):
        sample_task(ds, 3, 2, 2, rng)  # more ways than classes
    with pytest.raises(SamplingError):
        sample_task(ds, 2, 3, 3, rng)  # class too small for K+Q


def test_sample_cardinality_pool_membership():
    spec = EpisodeSpec(cardinality_pool=(3, 5, 7))
    rng = make_rng(4, "card")
    seen = {sample_cardinality(spec, rng) for _ in range(200)}
    assert seen == {3, 5, 7}


def test_singleton_pool_consumes_no_rng():
    spec = EpisodeSpec(cardinality_pool=(5,))
    a = make_rng(5, "stream")
    b = make_rng(5, "stream")
    assert sample_cardinality(spec, a) == 5
    assert np.array_equal(a.normal(size=4), b.normal(size=4))


def test_fixed_n_consumes_no_rng():
    spec = EpisodeSpec(cardinality_pool=(5,), fixed_n=5)
    a = make_rng(6, "stream")
    b = make_rng(6, "stream")
    assert sample_cardinality(spec, a) == 5
    assert np.array_equal(a.normal(size=4), b.normal(size=4))


def test_batch_tasks_count_and_determinism():
    ds = toy_dataset()
    spec = EpisodeSpec(cardinality_pool=(2, 3), shots=2, queries=2)
    tasks_a = batch_tasks(ds, spec, 6, make_rng(7, "batch"))
    tasks_b = batch_tasks(ds, spec, 6, make_rng(7, "batch"))
    assert len(tasks_a) == 6
    for ta, tb in zip(tasks_a, tasks_b):
        assert ta.n == tb.n
        assert np.array_equal(ta.support_x, tb.support_x)
        assert np.array_equal(ta.query_y, tb.query_y)
        assert ta.numeric_to_semantic == tb.numeric_to_semantic
