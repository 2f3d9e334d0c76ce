import numpy as np
import pytest

from dimrecon.io import (
    FormatError, load_checkpoint, load_dataset, read_pgm, save_checkpoint, save_dataset, write_pgm,
)
from dimrecon.phantom import Dataset, PhantomSpec, build_dataset


@pytest.fixture
def dataset():
    return build_dataset(2, 1, PhantomSpec(6, 8, 3, noise_std=0.02), accel=2, acs=2, seed=1)


def test_round_trip(tmp_path, dataset):
    path = tmp_path / "d.dimk"
    save_dataset(dataset, path)
    back = load_dataset(path)
    assert back == dataset
    for a, b in zip(back.records, dataset.records):
        assert a.image.tobytes() == b.image.tobytes()


def test_empty_round_trip(tmp_path):
    save_dataset(Dataset([]), tmp_path / "e")
    assert len(load_dataset(tmp_path / "e")) == 0


def test_truncation_detected(tmp_path, dataset):
    path = tmp_path / "d"
    save_dataset(dataset, path)
    data = path.read_bytes()
    for cut in (5, len(data) // 2, len(data) - 1):
        path.write_bytes(data[:cut])
        with pytest.raises(FormatError):
            load_dataset(path)


def test_corruption_detected(tmp_path, dataset):
    path = tmp_path / "d"
    save_dataset(dataset, path)
    data = bytearray(path.read_bytes())
    data[200] ^= 1
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="CRC"):
        load_dataset(path)


def test_bad_magic(tmp_path, dataset):
    path = tmp_path / "d"
    save_dataset(dataset, path)
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(FormatError, match="magic"):
        load_dataset(path)


def test_header_layout(tmp_path, dataset):
    path = tmp_path / "d"
    save_dataset(dataset, path)
    data = path.read_bytes()
    assert data[:4] == b"DIMK"
    assert int.from_bytes(data[4:8], "little") == 1 and data[8] == 1
    assert int.from_bytes(data[9:13], "little") == 3


def test_inconsistent_record_rejected(tmp_path, dataset):
    dataset.records[0].kspace = dataset.records[0].kspace * 2
    save_dataset(dataset, tmp_path / "d")
    with pytest.raises(FormatError, match="does not match"):
        load_dataset(tmp_path / "d")


def test_checkpoint_round_trip(tmp_path, rng):
    arrays = [rng.standard_normal((2, 3)), rng.standard_normal(4), np.array(1.5)]
    save_checkpoint(tmp_path / "c", {"epoch": 3, "lam": "inf"}, arrays)
    meta, back = load_checkpoint(tmp_path / "c")
    assert meta == {"epoch": 3, "lam": "inf"}
    for a, b in zip(arrays, back):
        assert a.tobytes() == b.tobytes() and a.shape == b.shape
    data = (tmp_path / "c").read_bytes()
    (tmp_path / "c").write_bytes(data[:-10] + b"0" * 10)
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "c")


def test_pgm(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    write_pgm(tmp_path / "a.pgm", img)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n4 3\n255\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "b.pgm", img.astype(float))
