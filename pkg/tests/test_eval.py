import numpy as np
import torch
from iqjepa.evaluate.embeddings import (
    EmbeddingSet,
    Task,
    extract_cache,
    extract_embeddings,
    task_set,
)
from iqjepa.evaluate.fewshot import (
    ProbeMethod,
    ShotProtocol,
    ShotResult,
    few_shot_eval,
    sample_shots,
)
from iqjepa.evaluate.probe import (
    ProbeConfig,
    knn_classify,
    knn_predict,
    linear_probe,
    standardize,
)
from iqjepa.model.encoder import build_encoder
from iqjepa.signal.grid import UNLABELED
from iqjepa.storage.embedding import EmbeddingCache
from iqjepa.train.jepa import grid_batch
from pytest import mark, raises


def _clusters(
    seed: int, per_class: int, classes: int = 3, dims: int = 8, spread: float = 0.1
):
    rng = np.random.default_rng(seed)
    centres = np.eye(classes, dims) * 5.0
    labels = np.repeat(np.arange(classes), per_class)
    vectors = centres[labels] + spread * rng.standard_normal((len(labels), dims))
    return EmbeddingSet(vectors, labels, num_classes=classes)


def test_embedding_set_validation():
    with raises(ValueError):
        EmbeddingSet(np.zeros((2, 3)), np.zeros(3))
    with raises(ValueError):
        EmbeddingSet(np.full((1, 2), np.nan), np.zeros(1))
    with raises(ValueError):
        EmbeddingSet(np.zeros((2, 2)), np.array([0, 4]), num_classes=3)
    assert EmbeddingSet(np.zeros((2, 2)), np.array([0, 4])).classes == 5


def test_standardize_uses_train_statistics():
    train = np.array([[1.0, 3.0], [3.0, 3.0]])
    x, y = standardize(train, np.array([[2.0, 4.0]]))
    assert torch.equal(x, torch.tensor([[-1.0, 0.0], [1.0, 0.0]], dtype=torch.float64))
    assert torch.equal(y, torch.tensor([[0.0, 1.0]], dtype=torch.float64))


def test_linear_probe_separable():
    assert linear_probe(_clusters(0, 20), _clusters(1, 10)) == 1.0


def test_linear_probe_shuffled_labels_at_chance():
    rng = np.random.default_rng(2)
    train = EmbeddingSet(
        rng.standard_normal((400, 16)), rng.integers(0, 4, 400), num_classes=4
    )
    test = EmbeddingSet(
        rng.standard_normal((400, 16)), rng.integers(0, 4, 400), num_classes=4
    )
    sigma = np.sqrt(0.25 * 0.75 / 400)
    accuracy = linear_probe(train, test, ProbeConfig(iterations=200))
    assert abs(accuracy - 0.25) < 3 * sigma


def test_linear_probe_duplicate_rows():
    train, test = _clusters(3, 5, spread=1.0), _clusters(4, 30, spread=1.0)
    doubled = EmbeddingSet(
        np.concatenate([train.vectors, train.vectors]),
        np.concatenate([train.labels, train.labels]),
        num_classes=3,
    )
    assert linear_probe(doubled, test) == linear_probe(train, test)


def test_linear_probe_needs_two_classes():
    one = EmbeddingSet(np.random.default_rng(0).standard_normal((4, 3)), np.zeros(4))
    with raises(ValueError):
        linear_probe(one, one)


def test_probe_config_validation():
    with raises(ValueError):
        ProbeConfig(iterations=0)
    with raises(ValueError):
        ProbeConfig(lr=0.0)


def test_knn_examples():
    train = EmbeddingSet(
        np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]]), np.array([0, 0, 1])
    )
    test = EmbeddingSet(np.array([[1.0, 0.05], [0.1, 1.0]]), np.array([0, 1]))
    assert knn_predict(train, test, k=1).tolist() == [0, 1]
    assert knn_predict(train, test, k=3).tolist() == [0, 0]
    assert knn_classify(train, test, k=1) == 1.0


def test_knn_ties():
    train = EmbeddingSet(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0, 1]))
    # equal votes: the larger summed similarity wins
    query = EmbeddingSet(np.array([[0.6, 0.8]]), np.array([1]))
    assert knn_predict(train, query, k=2).tolist() == [1]
    # equal votes and similarities: the lower class id wins
    query = EmbeddingSet(np.array([[1.0, 1.0]]), np.array([1]))
    assert knn_predict(train, query, k=2).tolist() == [0]


def test_knn_scale_invariant():
    train, test = _clusters(5, 10, spread=2.0), _clusters(6, 10, spread=2.0)
    scaled_train = EmbeddingSet(train.vectors * 4.0, train.labels, num_classes=3)
    scaled_test = EmbeddingSet(test.vectors * 4.0, test.labels, num_classes=3)
    assert np.array_equal(
        knn_predict(train, test, k=5), knn_predict(scaled_train, scaled_test, k=5)
    )


def test_knn_k_bounds():
    train = _clusters(0, 2)
    with raises(ValueError):
        knn_predict(train, train, k=0)
    with raises(ValueError):
        knn_predict(train, train, k=len(train) + 1)


def test_sample_shots():
    labels = np.array([0, 1, 0, 1, 2, 2, 0])
    index = sample_shots(labels, 3, 2, np.random.default_rng(0))
    assert len(index) == 6
    assert np.array_equal(index, np.sort(index))
    assert np.bincount(labels[index]).tolist() == [2, 2, 2]
    with raises(ValueError, match="1, 2"):
        sample_shots(labels, 3, 3, np.random.default_rng(0))


def test_shot_result_statistics():
    result = ShotResult(1, (0.5, 1.0))
    assert result.mean == 0.75
    assert result.std == 0.25
    assert ShotResult(4, (14 / 15,) * 3).std == 0.0


def test_shot_protocol_validation():
    with raises(ValueError):
        ShotProtocol(shots=(0,))
    with raises(ValueError):
        ShotProtocol(seeds=0)


@mark.parametrize("method", list(ProbeMethod))
def test_few_shot_eval(method):
    train, test = _clusters(7, 12), _clusters(8, 10)
    protocol = ShotProtocol(shots=(1, 4), seeds=2)
    probe = ProbeConfig(iterations=50)
    results = few_shot_eval(train, test, protocol, method, probe, k=5)
    assert [r.shots for r in results] == [1, 4]
    assert all(len(r.accuracies) == 2 for r in results)
    assert results[1].mean == 1.0
    again = few_shot_eval(train, test, protocol, method, probe, k=5)
    assert again == results


def test_few_shot_all_examples_has_no_spread():
    train, test = _clusters(9, 4, spread=2.0), _clusters(10, 5, spread=2.0)
    protocol = ShotProtocol(shots=(4,), seeds=3)
    (result,) = few_shot_eval(train, test, protocol, ProbeMethod.KNN, k=3)
    assert result.std == 0.0
    assert result.mean == knn_classify(train, test, k=3)


def test_extract_embeddings_is_pooled_latent(tiny_dataset):
    encoder = build_encoder("wjcnn-tiny", seed=0)
    vectors = extract_embeddings(encoder, tiny_dataset, batch_size=3)
    assert vectors.shape == (8, 8) and vectors.dtype == np.float32
    with torch.no_grad():
        latent = encoder.dense_forward(grid_batch(tiny_dataset.data, 8))
    assert np.allclose(vectors, latent.mean(dim=(2, 3)).numpy(), rtol=1e-6, atol=1e-7)
    assert not encoder.training


def test_extract_embeddings_constant_latent(tiny_dataset):
    encoder = build_encoder("wjcnn-tiny", seed=0)
    with torch.no_grad():
        for p in encoder.parameters():
            p.zero_()
        encoder.layers[-2].bias.fill_(0.5)
    vectors = extract_embeddings(encoder, tiny_dataset)
    assert np.all(vectors == 0.5)


def test_task_set_skips_unlabelled(tiny_dataset):
    cache = extract_cache(build_encoder("wjcnn-tiny", seed=0), tiny_dataset, "abc")
    cache.labels[0, 1] = UNLABELED
    aoa = task_set(cache, Task.AOA)
    assert len(aoa) == 7
    assert aoa.classes == 4
    assert task_set(cache, Task.MODULATION).classes == 2
    blank = EmbeddingCache(cache.vectors, np.full_like(cache.labels, UNLABELED), "abc")
    with raises(ValueError):
        task_set(blank, Task.MODULATION)
