import struct

import numpy as np
import pytest

from proxyselect.data import (
    DataFormatError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    generate_synthetic,
    load_csv,
    load_idx,
    write_idx,
)
from proxyselect.memory import MetricKind
from proxyselect.model import ConfigError
from proxyselect.trainer import HyperParams, RunConfig, run_asp


def test_separated_clusters_are_learned_by_a_linear_model():
    ref = {"kind": "synthetic", "classes": 5, "per_class": 100, "dims": 8, "overlap": 0.0, "seed": 1}
    runlog = run_asp(RunConfig(data=ref, model="linear", mode="full", hyper=HyperParams(epochs=20)))
    assert runlog.final["test_accuracy"] >= 0.99


def test_label_noise_count_and_record():
    ds = generate_synthetic(classes=3, per_class=[40, 30, 30], dims=4, label_noise=0.1, seed=2,
                            standardize=False)
    flipped = ds.metadata["flipped"]
    assert len(flipped) == 10 == len(set(flipped))
    clean = np.repeat(np.arange(3), [40, 30, 30])
    assert np.flatnonzero(ds.labels != clean).tolist() == flipped


def test_generator_is_deterministic():
    a = generate_synthetic(seed=7, per_class=20)
    b = generate_synthetic(seed=7, per_class=20)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.train, b.train) and a.metadata == b.metadata
    c = generate_synthetic(seed=8, per_class=20)
    assert not np.array_equal(a.features, c.features)


def test_splits_disjoint_and_covering():
    ds = generate_synthetic(per_class=25, seed=4)
    allidx = np.concatenate([ds.train, ds.val, ds.test])
    assert np.array_equal(np.sort(allidx), np.arange(ds.n))
    assert (len(ds.train), len(ds.val), len(ds.test)) == (200, 25, 25)
    counts = generate_synthetic(per_class=25, seed=4, split=(150, 50, 50))
    assert (len(counts.train), len(counts.val), len(counts.test)) == (150, 50, 50)


def test_standardized_on_train_split():
    ds = generate_synthetic(per_class=30, seed=1)
    tr = ds.features[ds.train]
    assert np.allclose(tr.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(tr.std(axis=0), 1, atol=1e-12)


@pytest.mark.parametrize("kwargs", [{"classes": 1}, {"dims": 0}, {"overlap": -1}, {"label_noise": 0.5}])
def test_generator_validation(kwargs):
    with pytest.raises(ConfigError):
        generate_synthetic(**kwargs)


def test_flipped_samples_look_harder():
    gaps = []
    for seed in range(5):
        ref = {"kind": "synthetic", "classes": 4, "per_class": 100, "dims": 8, "overlap": 0.8,
               "label_noise": 0.1, "seed": seed}
        runlog = run_asp(RunConfig(data=ref, mode="full", hidden_units=16, seed=seed,
                                   hyper=HyperParams(epochs=15, learning_rate=0.05)), track=MetricKind.LOSS)
        from proxyselect.trainer import load_dataset
        ds = load_dataset(ref)
        flipped = np.isin(ds.train, ds.metadata["flipped"])
        mean = runlog.importance_history.mean(axis=0)
        gaps.append(mean[flipped].mean() - mean[~flipped].mean())
    assert np.mean(gaps) > 0


def write_csv(path, text):
    path.write_text(text)
    return path


def test_load_csv_basic(tmp_path):
    p = write_csv(tmp_path / "d.csv", "f1,f2,label\n0,1,0\n1,0,1\n2,2,0\n3,1,1\n")
    ds = load_csv(p, standardize=False, split=(4, 0, 0))
    assert (ds.n, ds.dim, ds.num_classes) == (4, 2, 2)


def test_load_csv_parse_error(tmp_path):
    p = write_csv(tmp_path / "d.csv", "f1,f2,label\n0,1,0\n1,abc,1\n")
    with pytest.raises(DataFormatError, match=r"line 3, column 'f2'"):
        load_csv(p)


def test_load_csv_ragged(tmp_path):
    p = write_csv(tmp_path / "d.csv", "f1,f2,label\n0,1,0\n1,1\n")
    with pytest.raises(DataFormatError, match="line 3"):
        load_csv(p)


def test_load_csv_label_remap(tmp_path):
    rows = "\n".join(f"{i},{7 if i % 2 else 3},{'train' if i < 6 else 'test'}" for i in range(8))
    p = write_csv(tmp_path / "d.csv", "f,label,split\n" + rows + "\n")
    ds = load_csv(p)
    assert ds.metadata["label_map"] == {"3": 0, "7": 1}
    assert set(ds.labels.tolist()) == {0, 1}
    assert ds.train.tolist() == list(range(6)) and ds.test.tolist() == [6, 7]


def test_csv_missing_class_in_train_lists_raw_labels(tmp_path):
    p = write_csv(tmp_path / "d.csv", "f,label,split\n0,a,train\n1,b,test\n")
    with pytest.raises(DataFormatError, match=r"raw label values: \['a', 'b'\]"):
        load_csv(p)


def test_csv_round_trip(tmp_path):
    ds = generate_synthetic(classes=3, per_class=10, dims=2, seed=0)
    ds.save_csv(tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", standardize=False)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.train, ds.train) and np.array_equal(back.test, ds.test)


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(10_000, 28, 28), dtype=np.uint8)
    images[5] = 0
    labels = np.arange(10_000, dtype=np.uint8) % 10
    write_idx(tmp_path / "img.idx", images)
    write_idx(tmp_path / "lab.idx", labels)
    return tmp_path / "img.idx", tmp_path / "lab.idx", images, labels


def test_idx_header_is_big_endian(idx_pair):
    img, lab, images, _ = idx_pair
    raw = img.read_bytes()
    assert raw[:4] == b"\x00\x00\x08\x03"
    assert struct.unpack(">III", raw[4:16]) == (10_000, 28, 28)
    assert lab.read_bytes()[:4] == b"\x00\x00\x08\x01"


def test_load_idx(idx_pair):
    img, lab, images, labels = idx_pair
    ds = load_idx(img, lab)
    assert (ds.n, ds.dim, ds.num_classes) == (10_000, 784, 10)
    assert not ds.features[5].any()
    assert ds.features.max() <= 1.0 and ds.features.min() >= 0.0
    assert np.allclose(ds.features[7], images[7].ravel() / 255.0)


def test_idx_with_test_pair(idx_pair, tmp_path):
    img, lab, images, labels = idx_pair
    write_idx(tmp_path / "timg.idx", images[:100])
    write_idx(tmp_path / "tlab.idx", labels[:100])
    ds = load_idx(img, lab, tmp_path / "timg.idx", tmp_path / "tlab.idx")
    assert len(ds.test) == 100 and len(ds.val) == 1000 and len(ds.train) == 9000


def test_idx_errors(idx_pair, tmp_path):
    img, lab, images, labels = idx_pair
    write_idx(tmp_path / "short.idx", labels[:10])
    with pytest.raises(IdxCountMismatchError):
        load_idx(img, tmp_path / "short.idx")
    with pytest.raises(IdxMagicError):
        load_idx(lab, lab)
    (tmp_path / "trunc.idx").write_bytes(img.read_bytes()[:5000])
    with pytest.raises(IdxTruncatedError):
        load_idx(tmp_path / "trunc.idx", lab)
