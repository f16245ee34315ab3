import numpy as np
import pytest
import torch

from maskoff.checkpoint import CheckpointError, load_checkpoint
from maskoff.config import TrainConfig
from maskoff.training import (InpaintingTrainer, SegmentationTrainer, batch_indices, load_generator,
                              load_segmenter, load_triples, lr_schedule, train_inpainter, train_segmenter)


def test_lr_schedule_values():
    cfg = TrainConfig()
    assert [lr_schedule(cfg, e) for e in (1, 20)] == [2e-4, 2e-4]
    assert lr_schedule(cfg, 21) == pytest.approx(1.98e-4, abs=1e-15)
    assert lr_schedule(cfg, 30) == pytest.approx(1.8e-4, abs=1e-15)
    assert lr_schedule(cfg, 10 ** 6) == 0.0
    with pytest.raises(ValueError):
        lr_schedule(cfg, 0)


def test_batch_indices_pure_and_covering():
    a = batch_indices(1, 2, 3, 4, 10)
    assert np.array_equal(a, batch_indices(1, 2, 3, 4, 10))
    epoch = np.concatenate([batch_indices(1, 1, k, 5, 10) for k in range(2)])
    assert sorted(epoch.tolist()) == list(range(10))
    assert not np.array_equal(batch_indices(1, 1, 0, 5, 10), batch_indices(1, 2, 0, 5, 10))


@pytest.fixture(scope="module")
def triples(tiny_dataset):
    masked, masks, gts, _ = load_triples(tiny_dataset, 32)
    return masked, masks, gts


def test_load_triples_shapes(triples):
    masked, masks, gts = triples
    assert masked.shape == gts.shape == (8, 32, 32, 3)
    assert masks.shape == (8, 32, 32) and set(np.unique(masks)) <= {0.0, 1.0}


def test_split_and_resume_is_bit_identical(tmp_path, triples, tiny_cfg):
    full = InpaintingTrainer(tiny_cfg).fit(*triples, max_steps=5)
    first = InpaintingTrainer(tiny_cfg).fit(*triples, max_steps=3, out_dir=tmp_path)
    resumed = InpaintingTrainer.from_checkpoint(tmp_path / "last.ckpt")
    assert resumed.step == 3
    resumed.fit(*triples, max_steps=5)
    assert [h["loss"] for h in first.history + resumed.history] == [h["loss"] for h in full.history]
    a, b = full.state_dict()["params"], resumed.state_dict()["params"]
    assert all(torch.equal(a[k], b[k]) for k in a)


def test_epoch_checkpoints_written(tmp_path, triples, tiny_cfg):
    InpaintingTrainer(tiny_cfg).fit(*triples, max_steps=4, out_dir=tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["epoch_0001.ckpt", "epoch_0002.ckpt", "last.ckpt"]
    state = load_checkpoint(tmp_path / "last.ckpt")
    assert state["kind"] == "inpainter" and state["counters"]["step"] == 4
    assert any(k.startswith("disc_patch.") for k in state["params"])
    assert any(k.startswith("disc_feat.") for k in state["params"])
    assert any(k.startswith("enc1.") for k in state["params"])


@pytest.mark.parametrize("mode", ["none", "csam_only"])
def test_attention_mode_checkpoints_load(tmp_path, triples, tiny_cfg, mode):
    tr = InpaintingTrainer(tiny_cfg.replace(attention_mode=mode)).fit(*triples, max_steps=1)
    tr.save(tmp_path / "m.ckpt")
    gen = load_generator(tmp_path / "m.ckpt")
    assert gen.cfg.attention_mode == mode
    base = set(InpaintingTrainer(tiny_cfg).generator.state_dict())
    assert set(gen.state_dict()) != base


def test_kind_mismatch_rejected(tmp_path, triples, tiny_cfg):
    SegmentationTrainer(tiny_cfg).fit(triples[0], triples[1], max_steps=1).save(tmp_path / "s.ckpt")
    with pytest.raises(CheckpointError):
        load_generator(tmp_path / "s.ckpt")
    model, cfg = load_segmenter(tmp_path / "s.ckpt")
    assert cfg.seg_depth == tiny_cfg.seg_depth


def test_history_records_components(triples, tiny_cfg):
    tr = InpaintingTrainer(tiny_cfg).fit(*triples, max_steps=2)
    keys = {"loss", "L_r", "L_p", "L_s", "L_adv", "L_disc_patch", "L_disc_feat", "masked_l1"}
    assert keys <= set(tr.history[0])
    assert all(np.isfinite(v) for v in tr.history[-1].values())


def test_verbatim_objective_flips_descent_direction(triples, tiny_cfg):
    assert InpaintingTrainer(tiny_cfg).adversarial_sign == -1.0
    assert InpaintingTrainer(tiny_cfg.replace(adversarial_objective="verbatim")).adversarial_sign == 1.0


def test_local_supervision_freezes_visible_gradient(triples, tiny_cfg):
    # with every adversarial and feature weight off, only hole pixels feed the loss
    cfg = tiny_cfg.replace(lambda_p=0.0, lambda_s=0.0, lambda_adv=0.0)
    tr = InpaintingTrainer(cfg)
    masked, masks, gts = triples
    inp = torch.from_numpy(masked[:1].transpose(0, 3, 1, 2)).float() * 2 - 1
    mask = torch.from_numpy(masks[:1, None]).float()
    raw = tr.generator(inp, mask).detach().requires_grad_(True)
    syn = torch.where(mask.bool(), raw, inp)
    (syn - (torch.from_numpy(gts[:1].transpose(0, 3, 1, 2)).float() * 2 - 1)).abs().mean().backward()
    assert raw.grad[(mask == 0).expand_as(raw)].abs().max() == 0


def test_manifest_entry_points(tmp_path, tiny_dataset, tiny_cfg):
    seg = train_segmenter(tiny_cfg, tiny_dataset, out_dir=tmp_path, max_steps=2)
    assert seg.step == 2 and (tmp_path / "segmenter.ckpt").exists()
    inp = train_inpainter(tiny_cfg, tiny_dataset, out_dir=tmp_path / "inp", max_steps=2)
    more = train_inpainter(tiny_cfg, tiny_dataset, out_dir=tmp_path / "inp",
                           resume=tmp_path / "inp/last.ckpt", max_steps=3)
    assert (inp.step, more.step) == (2, 3)
