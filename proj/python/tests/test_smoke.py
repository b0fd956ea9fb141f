import json

import numpy as np
import pytest

import reskin


def test_dipole_axial_field():
    b = reskin.dipole_field([0, 0, 0], [0, 0, 1], [0, 0, 2])
    np.testing.assert_allclose(b, [0, 0, 2 / 8], rtol=1e-12)


def test_config_hash_and_errors():
    flat, h = reskin.config({"train.epochs": 7})
    assert flat["train.epochs"] == 7
    assert h == reskin.config({"train": {"epochs": 7}})[1]
    assert h != reskin.config()[1]
    with pytest.raises(reskin.ConfigError):
        reskin.config({"train.epoch": 7})
    assert "table2" in reskin.presets()


def test_simulate_train_predict(tmp_path):
    X, Y = reskin.simulate({"data.passes": 1})
    assert X.shape == (390, 15) and Y.shape == (390, 3)
    model, log = reskin.train(X, Y, {"train.epochs": 3})
    assert model.widths == [15, 200, 200, 40, 200, 200, 3]
    assert log.startswith("epoch")
    P = model.predict(X)
    assert P.shape == Y.shape and np.isfinite(P).all()
    assert 0.0 <= reskin.localization_accuracy(P, Y) <= 100.0
    path = str(tmp_path / "m.rskm")
    model.save(path)
    np.testing.assert_array_equal(reskin.Model.load(path).predict(X), P)
    assert reskin.Model.from_bytes(model.to_bytes()).to_bytes() == model.to_bytes()


def test_wire_round_trip():
    rng = np.random.default_rng(0)
    frames = [(1000 * i, rng.normal(size=(5, 4)).astype(np.float32)) for i in range(50)]
    blob = b"".join(reskin.encode_frame(t, c) for t, c in frames)
    assert len(blob) == 50 * 92
    assert reskin.crc16(b"123456789") == 0x29B1
    out, stats = reskin.decode_stream(blob)
    assert stats["frames"] == 50 and stats["crc_failures"] == 0
    for (t0, c0), (t1, c1) in zip(frames, out):
        assert t0 == t1
        np.testing.assert_array_equal(c0, c1.astype(np.float32))
    bad = bytearray(blob)
    bad[92 * 10 + 30] ^= 0x04
    out, stats = reskin.decode_stream(bytes(bad))
    assert len(out) == 49 and stats["crc_failures"] == 1


def test_experiment_is_deterministic():
    tiny = {"data.passes": 1, "train.epochs": 2, "train.total_samples": 390, "train.test_samples": 90}
    r1, a1 = reskin.run_experiment("same_sensor", tiny)
    r2, a2 = reskin.run_experiment("same_sensor", tiny)
    assert r1 == r2 and a1 == a2
    assert r1[0]["condition"] == "Same-sensor"
