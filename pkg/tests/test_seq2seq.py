"""Captioner tests: vocab handling, attention fixtures, masking
equivalence, the finite-difference oracle over all four variants, the
single-pair capacity check, and the training-loop contracts."""

import numpy as np
import pytest

from actioncap.errors import ConfigError, DataError
from actioncap.nn import grad_check, optimizer_step
from actioncap.seeds import rng_for
from actioncap.seq2seq import (
    SPECIALS,
    Seq2Seq,
    Vocab,
    attend,
    attention_contiguity,
    build_vocab,
    load_checkpoint,
    save_checkpoint,
    train_model,
)

TOY_VOCAB = Vocab(list(SPECIALS) + ["w1", "w2"])


def toy_model(variant, hidden=4, dtype=np.float64, dropout=0.0, seed=3):
    return Seq2Seq(variant, TOY_VOCAB, hidden=hidden, input_dim=3,
                   chunk_vocab_size=7, dropout=dropout, seed=seed, dtype=dtype)


def toy_inputs(variant):
    rng = rng_for("toy", variant)
    if variant in ("vanilla", "implicit"):
        return [rng.standard_normal((5, 3)), rng.standard_normal((3, 3))]
    return [[0, 4, 2, 1, 3], [5, 0, 1]]


TOY_CAPS = [[4, 5, 2], [5, 2]]  # ids; 2 = <eos>


# ---------------------------------------------------------------------- vocab

def test_build_vocab_min_freq():
    caps = [["bring", "the", "ball", "<eos>"],
            ["bring", "the", "cup", "<eos>"]]
    v = build_vocab(caps, min_freq=2)
    assert v.tokens[:4] == list(SPECIALS)
    assert "bring" in v.index and "the" in v.index
    assert "ball" not in v.index  # frequency 1 -> UNK
    ids = v.encode(["bring", "ball", "<eos>"])
    assert ids == [v.index["bring"], v.unk_id, v.eos_id]
    assert v.decode(ids) == ["bring", "<unk>", "<eos>"]


def test_vocab_requires_specials():
    with pytest.raises(ConfigError):
        Vocab(["a", "b", "c", "d"])


# ------------------------------------------------------------------ attention

def test_attend_uniform_when_orthogonal():
    enc = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    ctx, w = attend(enc, np.zeros(2), np.eye(2))
    assert np.allclose(w, 1.0 / 3.0)
    assert np.allclose(ctx, enc.mean(axis=0))


def test_attend_hand_softmax():
    enc = np.array([[1.0, 0.0], [0.0, 1.0]])
    dec = np.array([np.log(2.0), 0.0])
    ctx, w = attend(enc, dec, np.eye(2))  # scores [ln 2, 0]
    assert np.allclose(w, [2.0 / 3.0, 1.0 / 3.0])
    assert np.allclose(ctx, [2.0 / 3.0, 1.0 / 3.0])


def test_attention_rows_sum_to_one():
    for variant in ("implicit", "hybrid"):
        m = toy_model(variant, hidden=8)
        _, trace = m.decode_greedy(toy_inputs(variant)[0], max_len=12)
        assert trace is not None and trace.shape[1] == len(toy_inputs(variant)[0])
        assert np.abs(trace.sum(axis=1) - 1.0).max() < 1e-6
        assert (trace >= 0).all()


def test_attention_contiguity_fixture():
    rows = np.array([
        [0.10, 0.60, 0.25, 0.05],   # contiguous block {1,2} holds 0.85
        [0.40, 0.05, 0.05, 0.40, 0.10][:4],  # split peaks: best run 0.40
    ])
    rows[1] = [0.40, 0.10, 0.10, 0.40]
    assert attention_contiguity(rows) == 0.5
    with pytest.raises(DataError):
        attention_contiguity(np.zeros((0, 4)))


# ------------------------------------------------------------ shapes & wiring

def test_encoder_shape_law():
    for variant in ("vanilla", "explicit", "implicit", "hybrid"):
        m = toy_model(variant)
        seq = toy_inputs(variant)[0]
        states, (h, c) = m.encode(seq)
        assert states.shape == (len(seq), 4)
        assert h.shape == (4,) and c.shape == (4,)
        assert np.allclose(states[-1], h)


def test_variant_wiring_enforced():
    raw = np.zeros((4, 3))
    with pytest.raises(ConfigError):
        toy_model("explicit").encode(raw)
    with pytest.raises(ConfigError):
        toy_model("vanilla").encode([1, 2, 3])
    with pytest.raises(DataError):
        toy_model("vanilla").encode(np.zeros((0, 3)))
    with pytest.raises(DataError):
        toy_model("explicit").encode([])
    with pytest.raises(DataError):
        toy_model("explicit").encode([99])  # beyond chunk vocab
    with pytest.raises(ConfigError):
        Seq2Seq("explicit", TOY_VOCAB, chunk_vocab_size=None)
    with pytest.raises(ConfigError):
        Seq2Seq("bogus", TOY_VOCAB)


def test_attention_params_present_iff_attention_variant():
    for variant in ("vanilla", "explicit", "implicit", "hybrid"):
        names = set(toy_model(variant).store.names())
        assert ("att.wa" in names) == (variant in ("implicit", "hybrid"))
        assert ("enc_emb.w" in names) == (variant in ("explicit", "hybrid"))
        assert ("enc_in.w" in names) == (variant in ("vanilla", "implicit"))


# ----------------------------------------------------------------------- loss

def test_initial_loss_near_log_vocab():
    for variant in ("vanilla", "explicit", "implicit", "hybrid"):
        m = toy_model(variant, hidden=8)
        loss = m.decode_train(toy_inputs(variant)[0], TOY_CAPS[0])
        assert loss == pytest.approx(np.log(len(TOY_VOCAB)), rel=0.10)
        assert loss >= 0.0


def test_caption_validation():
    m = toy_model("vanilla")
    seq = toy_inputs("vanilla")[0]
    with pytest.raises(DataError):
        m.decode_train(seq, [4, 5])       # missing EOS
    with pytest.raises(DataError):
        m.decode_train(seq, [])
    with pytest.raises(DataError):
        m.decode_train(seq, [4, 99, 2])   # id beyond vocab
    with pytest.raises(DataError):
        m.make_batch([seq, seq], [TOY_CAPS[0]])


def test_batch_loss_equals_sum_of_singles():
    # padding must not leak into the loss on either side of the model
    for variant in ("vanilla", "explicit", "implicit", "hybrid"):
        m = toy_model(variant, hidden=8, dtype=np.float64)
        seqs = toy_inputs(variant)
        batch = m.make_batch(seqs, TOY_CAPS)
        s_all, n_all = m.eval_loss(batch)
        singles = [m.eval_loss(m.make_batch([s], [c]))
                   for s, c in zip(seqs, TOY_CAPS)]
        assert n_all == sum(n for _, n in singles)
        assert s_all == pytest.approx(sum(s for s, _ in singles), rel=1e-9)


# ------------------------------------------------------------- gradient oracle

def test_gradient_fidelity_all_variants():
    # hand-derived backprop vs central differences, toy dims, float64
    for variant in ("vanilla", "explicit", "implicit", "hybrid"):
        m = toy_model(variant)
        batch = m.make_batch(toy_inputs(variant), TOY_CAPS)

        def loss_fn(compute_grads, m=m, batch=batch):
            if compute_grads:
                return m.loss_and_grads(batch, training=False)
            s, n = m.eval_loss(batch)
            return s / n

        err = grad_check(loss_fn, m.store, eps=1e-5)
        assert err < 1e-4, f"{variant}: {err}"


# ------------------------------------------------------------ capacity/greedy

def overfit_one_pair(variant, hidden=32, steps=500):
    caps = [["bring", "the", "ball", "from", "the", "kitchen", "<eos>"]] * 2
    vocab = build_vocab(caps, min_freq=2)
    m = Seq2Seq(variant, vocab, hidden=hidden, chunk_vocab_size=12,
                dropout=0.0, seed=1)
    if variant in ("vanilla", "implicit"):
        inp = rng_for("ov", variant).standard_normal((20, 22)).astype(np.float32)
    else:
        inp = [3, 5, 7, 2, 2, 9]
    ids = vocab.encode(caps[0])
    batch = m.make_batch([inp], [ids])
    for _ in range(steps):
        m.store.zero_grads()
        m.loss_and_grads(batch, training=False)
        m.store.clip_gradients(5.0)
        optimizer_step(m.store, lr=1e-2)
    return m, inp, caps[0], m.decode_train(inp, ids)


def test_overfit_single_pair_all_variants():
    for variant in ("vanilla", "explicit", "implicit", "hybrid"):
        m, inp, gold, loss = overfit_one_pair(variant)
        assert loss < 0.01, f"{variant} loss {loss}"
        toks, _ = m.decode_greedy(inp)
        assert toks == gold[:-1], f"{variant} generated {toks}"


def test_greedy_contract():
    m = toy_model("implicit", hidden=8)
    seq = toy_inputs("implicit")[0]
    toks, trace = m.decode_greedy(seq, max_len=0)
    assert toks == [] and trace.shape == (0, len(seq))
    toks, trace = m.decode_greedy(seq, max_len=7)
    assert len(toks) <= 7
    assert "<bos>" not in toks and "<pad>" not in toks
    toks_v, trace_v = toy_model("vanilla", hidden=8).decode_greedy(
        toy_inputs("vanilla")[0], max_len=7)
    assert trace_v is None


# ------------------------------------------------------------------- training

def tiny_training_setup(variant="explicit", seed=0):
    caps = [["go", "to", "the", "desk", "<eos>"],
            ["go", "to", "the", "sofa", "<eos>"]] * 4
    vocab = build_vocab(caps, min_freq=2)
    rng = rng_for("tt", seed)
    pairs = []
    for i, cap in enumerate(caps):
        seq = [int(t) for t in rng.integers(0, 6, size=5 + i % 3)]
        pairs.append((seq, vocab.encode(cap)))
    model = Seq2Seq(variant, vocab, hidden=16, chunk_vocab_size=6,
                    dropout=0.0, seed=seed)
    return model, pairs[:6], pairs[6:]


def test_train_early_stop_contract():
    model, train_pairs, val_pairs = tiny_training_setup()
    res = train_model(model, train_pairs, val_pairs, batch_size=4,
                      max_epochs=12, patience=3, seed=5)
    assert res.epochs_run == len(res.val_curve) <= 12
    assert res.best_epoch == int(np.argmin(res.val_curve))
    # patience: no more than patience epochs after the minimum
    assert res.epochs_run - 1 - res.best_epoch <= 3


def test_train_deterministic():
    snaps = []
    for _ in range(2):
        model, train_pairs, val_pairs = tiny_training_setup(seed=2)
        res = train_model(model, train_pairs, val_pairs, batch_size=4,
                          max_epochs=4, patience=3, seed=9)
        snaps.append((model.store.snapshot(), tuple(res.val_curve)))
    assert snaps[0][1] == snaps[1][1]
    for k in snaps[0][0]:
        assert (snaps[0][0][k] == snaps[1][0][k]).all()


def test_train_input_guards():
    model, train_pairs, val_pairs = tiny_training_setup()
    with pytest.raises(DataError):
        train_model(model, [], val_pairs)
    with pytest.raises(DataError):
        train_model(model, train_pairs, [])


# ------------------------------------------------------------------ checkpoint

def test_checkpoint_roundtrip(tmp_path):
    for variant in ("vanilla", "hybrid"):
        m = toy_model(variant, hidden=8, dtype=np.float32)
        seq = toy_inputs(variant)[0]
        before = m.decode_greedy(seq, max_len=6)[0]
        path = tmp_path / f"{variant}.npz"
        save_checkpoint(m, str(path), codebook_sha256="c" * 64,
                        bpe_sha256="b" * 64)
        back, meta = load_checkpoint(str(path))
        assert meta["variant"] == variant
        assert meta["codebook_sha256"] == "c" * 64
        assert back.vocab.tokens == m.vocab.tokens
        for k in m.store.names():
            assert (back.store[k] == m.store[k]).all()
        assert back.decode_greedy(seq, max_len=6)[0] == before


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(open(path, "wb"), foo=np.zeros(3))
    with pytest.raises(DataError):
        load_checkpoint(str(path))
