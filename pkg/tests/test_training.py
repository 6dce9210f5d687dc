import json

import numpy as np
import pytest
import torch

from ifcorrnet import dsp
from ifcorrnet.data import DataConfig, make_dataset, read_manifest
from ifcorrnet.model import ModelConfig
from ifcorrnet.training import (
    NumericalError,
    TrainConfig,
    Utterance,
    crop,
    epoch_batches,
    infer,
    load_checkpoint,
    load_model,
    split_train_valid,
    train,
)

TINY = ModelConfig(C=8, B=1, C_H=16, K=3, n_heads=2)


def cfg(**kw) -> TrainConfig:
    base = dict(segment_seconds=0.5, batch_size=2, max_epochs=2, seed=3)
    return TrainConfig(**{**base, **kw})


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    dcfg = DataConfig(duration_s=1.0)
    make_dataset(4, 0, dcfg, root / "train")
    make_dataset(2, 0, dcfg, root / "valid", start_index=4)
    return root / "train" / "manifest.jsonl", root / "valid" / "manifest.jsonl"


def test_zero_epochs_writes_initial_checkpoint(dataset, tmp_path):
    res = train(TINY, cfg(max_epochs=0), dataset[0], tmp_path)
    assert res.step == 0 and res.losses == []
    assert sorted(p.name for p in tmp_path.glob("*.pt")) == ["best.pt", "last.pt", "step_0000000.pt"]
    payload = load_checkpoint(tmp_path / "last.pt")
    assert payload["model_config"] == TINY.to_dict()
    assert payload["train_state"]["step"] == 0


def test_seeded_runs_are_bitwise_identical(dataset, tmp_path):
    a = train(TINY, cfg(max_epochs=10, max_steps=5), dataset[0], tmp_path / "a")
    b = train(TINY, cfg(max_epochs=10, max_steps=5), dataset[0], tmp_path / "b")
    assert len(a.losses) == 5 and a.losses == b.losses
    for (ka, va), (kb, vb) in zip(a.model.state_dict().items(), b.model.state_dict().items()):
        assert ka == kb and torch.equal(va, vb)
    c = train(TINY, cfg(max_epochs=10, max_steps=5, seed=4), dataset[0], tmp_path / "c")
    assert c.losses != a.losses


def test_resume_matches_straight_run(dataset, tmp_path):
    long = cfg(max_epochs=20, max_steps=20)
    straight = train(TINY, long, dataset[0], tmp_path / "s", valid_manifest=dataset[1])
    first = train(TINY, cfg(max_epochs=20, max_steps=10), dataset[0], tmp_path / "r",
                  valid_manifest=dataset[1])
    second = train(TINY, long, dataset[0], tmp_path / "r", valid_manifest=dataset[1],
                   resume=tmp_path / "r" / "last.pt")
    assert first.step == 10 and second.step == 20
    assert first.losses + second.losses == straight.losses
    for k, v in straight.model.state_dict().items():
        assert torch.equal(v, second.model.state_dict()[k]), k
    log = [json.loads(l) for l in (tmp_path / "r" / "train_log.jsonl").read_text().splitlines()]
    assert [r["step"] for r in log] == list(range(1, 21))
    assert set(log[0]) == {"step", "lr", "loss_time", "loss_tf", "loss_total"}


def test_resume_rejects_other_config(dataset, tmp_path):
    train(TINY, cfg(max_steps=1), dataset[0], tmp_path)
    with pytest.raises(ValueError):
        train(ModelConfig(C=8, B=2, C_H=16, K=3, n_heads=2), cfg(max_steps=2), dataset[0], tmp_path,
              resume=tmp_path / "last.pt")


def test_validation_files_do_not_affect_training(dataset, tmp_path):
    import shutil

    valid_dir = tmp_path / "valid"
    shutil.copytree(dataset[1].parent, valid_dir)
    manifest = valid_dir / "manifest.jsonl"
    a = train(TINY, cfg(max_epochs=3), dataset[0], tmp_path / "a", valid_manifest=manifest)
    rng = np.random.default_rng(0)
    for row in read_manifest(manifest):
        n = dsp.read_wav(row["mixture_path"]).size
        dsp.write_wav(row["mixture_path"], rng.standard_normal(n))
        dsp.write_wav(row["target_path"], rng.standard_normal(n))
    b = train(TINY, cfg(max_epochs=3), dataset[0], tmp_path / "b", valid_manifest=manifest)
    assert a.losses == b.losses
    assert a.best_valid != b.best_valid


def test_nan_loss_aborts_with_dump(tmp_path):
    x = np.random.default_rng(0).standard_normal(dsp.SAMPLE_RATE)
    bad = x.copy()
    bad[:] = np.nan
    utts = [Utterance("good", x, x), Utterance("bad", bad, x)]
    with pytest.raises(NumericalError):
        train(TINY, cfg(valid_fraction=0.0), utts, tmp_path)
    dump = json.loads((tmp_path / "nan_dump.json").read_text())
    assert "bad" in dump["batch_ids"]


def test_crop_and_batches_deterministic():
    u = Utterance("u", np.arange(100.0), np.arange(100.0) * 2)
    m1, t1 = crop(u, 40, 0, 1)
    m2, t2 = crop(u, 40, 0, 1)
    assert np.array_equal(m1, m2) and np.array_equal(t1, 2 * m1)
    m3, _ = crop(u, 160, 0, 1)
    assert m3.size == 160 and np.all(m3[100:] == 0)
    b = epoch_batches(5, 2, 0, 0)
    assert [len(x) for x in b] == [2, 2, 1]
    assert sorted(np.concatenate(b).tolist()) == list(range(5))
    assert all(np.array_equal(p, q) for p, q in zip(b, epoch_batches(5, 2, 0, 0)))


def test_split_holds_out_tail():
    utts = [Utterance(str(i), np.zeros(1), np.zeros(1)) for i in range(10)]
    tr, va = split_train_valid(utts, 0.1)
    assert [u.id for u in va] == ["9"] and len(tr) == 9
    tr, va = split_train_valid(utts[:1], 0.5)
    assert len(tr) == 1 and va == []


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(schedule="step")
    with pytest.raises(ValueError):
        train(TINY, cfg(segment_seconds=0.05), [Utterance("u", np.ones(16000), np.ones(16000))], "/tmp/never")


def test_infer_length_and_idempotence(dataset, tmp_path):
    res = train(TINY, cfg(max_steps=2), dataset[0], tmp_path)
    row = read_manifest(dataset[1])[0]
    out = tmp_path / "out.wav"
    y = infer(tmp_path / "last.pt", row["mixture_path"], out)
    x = dsp.read_wav(row["mixture_path"])
    assert y.shape == x.shape
    assert dsp.read_wav(out).shape == x.shape
    assert np.array_equal(y, infer(tmp_path / "last.pt", row["mixture_path"]))
    odd = x[:12345]
    assert infer(tmp_path / "last.pt", odd).shape == (12345,)
    assert load_model(tmp_path / "best.pt").cfg == TINY


def test_untrained_checkpoint_is_silent(dataset, tmp_path):
    train(TINY, cfg(max_epochs=0), dataset[0], tmp_path)
    x = dsp.read_wav(read_manifest(dataset[0])[0]["mixture_path"])
    assert np.max(np.abs(infer(tmp_path / "best.pt", x))) < 1e-6
