import torch

import pytest

from kpset.model import SetKeyphraseModel, backward, load_checkpoint, save_checkpoint
from kpset.trainloop import collate
from kpset.corpus import Document


def _batch(tiny_vocab, texts=((6, 7, 8), (9, 10, 11, 12))):
    docs = [Document(id=f"d{i}", source_tokens=t, raw_text="") for i, t in enumerate(texts)]
    return collate(docs, tiny_vocab.pad_id)


def test_encode_shapes_and_dtype(tiny_model, tiny_vocab, tiny_cfg):
    src, mask = _batch(tiny_vocab)
    memory = tiny_model.encode(src, mask)
    assert memory.shape == (2, 4, tiny_cfg.d_model)
    assert memory.dtype == torch.float64
    with pytest.raises(ValueError):
        tiny_model.encode(src[0])


def test_slot_logits_shapes(tiny_model, tiny_vocab, tiny_cfg):
    src, mask = _batch(tiny_vocab)
    memory = tiny_model.encode(src, mask)
    logits = tiny_model.slot_logits(memory, None, mask)
    assert logits.shape == (2, tiny_cfg.num_slots, 1, len(tiny_vocab))
    prev = torch.zeros(2, tiny_cfg.num_slots, 3, dtype=torch.long)
    logits = tiny_model.slot_logits(memory, prev, mask)
    assert logits.shape == (2, tiny_cfg.num_slots, 4, len(tiny_vocab))


def test_predictions_are_proper_distributions(tiny_model, tiny_vocab):
    src, mask = _batch(tiny_vocab)
    memory = tiny_model.encode(src, mask)
    preds = tiny_model.predict_k_tokens(memory, 2, mask)
    assert preds.dists.shape == (2, tiny_model.cfg.num_slots, 2, len(tiny_vocab))
    sums = preds.dists.sum(dim=-1)
    assert torch.allclose(sums, torch.ones_like(sums))
    # non-null distributions renormalize with the null token removed
    nsums = preds.nonnull_dists.sum(dim=-1)
    assert torch.allclose(nsums, torch.ones_like(nsums))
    assert torch.all(preds.nonnull_dists[..., tiny_model.null_id] == 0)
    for row in preds.nonnull:
        for phrase in row:
            assert len(phrase) == 2
            assert tiny_model.null_id not in phrase
    for row in preds.vanilla:
        for phrase in row:
            if phrase[0] == tiny_model.null_id:
                assert phrase == (tiny_model.null_id,)


def test_slots_are_conditionally_independent(tiny_model, tiny_vocab):
    src, mask = _batch(tiny_vocab)
    memory = tiny_model.encode(src, mask)
    base = tiny_model.predict_k_tokens(memory, 1, mask).dists
    with torch.no_grad():
        tiny_model.control_codes[1] += 0.5
    bumped = tiny_model.predict_k_tokens(memory, 1, mask).dists
    diffs = (base - bumped).abs().amax(dim=(0, 2, 3))
    assert diffs[1] > 0
    others = torch.cat([diffs[:1], diffs[2:]])
    assert torch.all(others == 0)


def test_teacher_forced_probs_match_manual_gather(tiny_model, tiny_vocab):
    src, mask = _batch(tiny_vocab)
    memory = tiny_model.encode(src, mask)
    targets = [
        [(6, tiny_vocab.eos_id)] + [None] * 3,
        [None, (7, 8, tiny_vocab.eos_id)] + [None] * 2,
    ]
    forced = tiny_model.teacher_forced_probs(memory, targets, mask)
    assert forced.step0_dist.shape == (2, 4, len(tiny_vocab))
    # null-assigned slot probabilities are single entries for the null token
    assert forced.target_probs[0][1].shape == (1,)
    assert torch.allclose(
        forced.target_probs[0][1], forced.step0_dist[0, 1, tiny_vocab.null_id]
    )
    # forced probabilities along a keyphrase match the step-0 distribution head
    assert torch.allclose(forced.target_probs[0][0][0], forced.step0_dist[0, 0, 6])
    assert forced.lengths[1][1] == 3
    # the forced path is differentiable
    loss = -torch.log(torch.cat(forced.target_probs[0])).sum()
    loss.backward()
    assert tiny_model.control_codes.grad is not None


def test_teacher_forced_rejects_over_length_targets(tiny_model, tiny_vocab):
    src, mask = _batch(tiny_vocab)
    memory = tiny_model.encode(src, mask)
    too_long = tuple([6] * (tiny_model.cfg.max_phrase_len + 1))
    with pytest.raises(ValueError):
        tiny_model.teacher_forced_probs(memory, [[too_long] + [None] * 3, [None] * 4], mask)


def test_generate_slot_phrases_alignment(tiny_model, tiny_vocab):
    src, mask = _batch(tiny_vocab)
    memory = tiny_model.encode(src, mask)
    slots = tiny_model.generate_slot_phrases(memory, src_pad_mask=mask)
    assert len(slots) == 2 and all(len(row) == 4 for row in slots)
    flat = tiny_model.greedy_generate(memory, src_pad_mask=mask)
    assert flat[0] == [p for p in slots[0] if p]
    forced_nonnull = tiny_model.generate_slot_phrases(memory, src_pad_mask=mask, mask_null=True)
    for row in forced_nonnull:
        for phrase in row:
            assert tiny_model.null_id not in phrase


def test_forward_is_deterministic(tiny_model, tiny_vocab):
    src, mask = _batch(tiny_vocab)
    m1 = tiny_model.encode(src, mask)
    m2 = tiny_model.encode(src, mask)
    assert torch.equal(m1, m2)


def test_backward_rejects_nonfinite_gradients(tiny_model, tiny_vocab):
    src, mask = _batch(tiny_vocab)
    memory = tiny_model.encode(src, mask)
    loss = memory.sum() * float("inf")
    with pytest.raises(FloatingPointError):
        backward(loss, tiny_model)


def test_checkpoint_roundtrip_bitexact(tmp_path, tiny_model, tiny_vocab):
    path = tmp_path / "model.kpc"
    save_checkpoint(path, tiny_model, tiny_vocab)
    model2, vocab2, cfg2 = load_checkpoint(path)
    assert vocab2.tokens == tiny_vocab.tokens
    assert cfg2 == tiny_model.cfg
    for (n1, p1), (n2, p2) in zip(
        tiny_model.named_parameters(), model2.named_parameters()
    ):
        assert n1 == n2
        assert torch.equal(p1, p2)
    # identical bytes when saved again
    path2 = tmp_path / "model2.kpc"
    save_checkpoint(path2, model2, vocab2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_foreign_files(tmp_path):
    bad = tmp_path / "bad.kpc"
    import json
    import struct

    blob = json.dumps({"magic": "other"}).encode()
    bad.write_bytes(struct.pack("<I", len(blob)) + blob)
    with pytest.raises(ValueError):
        load_checkpoint(bad)
