"""Encoder-decoder captioner, four variants.

  vanilla   raw 22-dim observation vectors, no attention
  explicit  BPE chunk tokens, no attention
  implicit  raw vectors + bilinear attention
  hybrid    chunk tokens + bilinear attention

Single-layer LSTMs (hidden 160) on both sides; the decoder starts from
the encoder's final state. Attention scores are bilinear,
a_ij = h_e_i^T W_a h_d_j, softmax over encoder steps; the context vector
is concatenated with the decoder state and passed through a tanh layer
before the output projection. Dropout sits on the non-recurrent
connections only — whole encoder input frames, decoder input embeddings,
and the pre-logit features. All gradients are hand-derived and pass
finite-difference checks at toy dimensions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .nn import Lstm, ParamStore, optimizer_step, softmax_xent_batch, uniform_init
from .seeds import rng_for

VARIANTS = ("vanilla", "explicit", "implicit", "hybrid")
RAW_VARIANTS = frozenset({"vanilla", "implicit"})
ATTENTION_VARIANTS = frozenset({"implicit", "hybrid"})

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)

CHECKPOINT_VERSION = 1


@dataclass
class Vocab:
    tokens: list[str]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {t: i for i, t in enumerate(self.tokens)}
        if self.tokens[:4] != list(SPECIALS):
            raise ConfigError("vocab must start with the four special tokens")

    pad_id, bos_id, eos_id, unk_id = 0, 1, 2, 3

    def __len__(self):
        return len(self.tokens)

    def encode(self, caption: list[str]) -> list[int]:
        return [self.index.get(t, self.unk_id) for t in caption]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] for i in ids]


def build_vocab(captions, min_freq: int = 2) -> Vocab:
    """Words under min_freq in the training captions collapse to UNK."""
    freq: dict[str, int] = {}
    for cap in captions:
        for tok in cap:
            if tok not in SPECIALS:
                freq[tok] = freq.get(tok, 0) + 1
    kept = sorted(t for t, c in freq.items() if c >= min_freq)
    return Vocab(list(SPECIALS) + kept)


def attend(enc_states: np.ndarray, dec_state: np.ndarray,
           w_a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One attention row: scores h_e^T W_a h_d, softmax over encoder steps,
    context = weighted average of encoder states."""
    scores = enc_states @ (w_a @ dec_state)
    scores = scores - scores.max()
    w = np.exp(scores)
    w = w / w.sum()
    return w @ enc_states, w


def attention_contiguity(weights: np.ndarray) -> float:
    """Fraction of rows whose above-uniform indices contain a contiguous
    run holding >= 50% of the row's mass (soft-segment shape check)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] == 0:
        raise DataError("need a non-empty (decoder steps, encoder steps) matrix")
    rows_ok = 0
    m = weights.shape[1]
    for row in weights:
        above = row > 1.0 / m
        best = 0.0
        i = 0
        while i < m:
            if above[i]:
                j = i
                while j < m and above[j]:
                    j += 1
                best = max(best, float(row[i:j].sum()))
                i = j
            else:
                i += 1
        rows_ok += best >= 0.5
    return rows_ok / weights.shape[0]


class Seq2Seq:
    """One captioning model. Parameters live in a ParamStore so the
    optimizer and the finite-difference checker see a flat name space."""

    def __init__(self, variant: str, vocab: Vocab, hidden: int = 160,
                 input_dim: int = 22, chunk_vocab_size: int | None = None,
                 dropout: float = 0.5, input_noise: float = 0.0,
                 seed: int = 0, dtype=np.float32):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}")
        if variant not in RAW_VARIANTS and not chunk_vocab_size:
            raise ConfigError(f"{variant} needs chunk_vocab_size")
        self.variant = variant
        self.vocab = vocab
        self.hidden = hidden
        self.input_dim = input_dim
        self.chunk_vocab_size = chunk_vocab_size if variant not in RAW_VARIANTS else None
        self.dropout = dropout
        self.input_noise = input_noise
        self.seed = seed
        self.store = ParamStore(dtype=dtype)

        h, v = hidden, len(vocab)
        if variant in RAW_VARIANTS:
            self.store.add("enc_in.w", uniform_init(
                rng_for(seed, "enc_in"), (input_dim, h), input_dim, dtype))
        else:
            self.store.add("enc_emb.w", uniform_init(
                rng_for(seed, "enc_emb"), (chunk_vocab_size, h), h, dtype))
        self.enc = Lstm(self.store, "enc", h, h, rng_for(seed, "enc_lstm"))
        self.store.add("dec_emb.w", uniform_init(
            rng_for(seed, "dec_emb"), (v, h), h, dtype))
        self.dec = Lstm(self.store, "dec", h, h, rng_for(seed, "dec_lstm"))
        if variant in ATTENTION_VARIANTS:
            self.store.add("att.wa", uniform_init(
                rng_for(seed, "att_wa"), (h, h), h, dtype))
            self.store.add("att.wc", uniform_init(
                rng_for(seed, "att_wc"), (2 * h, h), 2 * h, dtype))
            self.store.add("att.bc", np.zeros(h, dtype=dtype))
        self.store.add("out.w", uniform_init(
            rng_for(seed, "out"), (h, v), h, dtype))
        self.store.add("out.b", np.zeros(v, dtype=dtype))

    @property
    def has_attention(self) -> bool:
        return self.variant in ATTENTION_VARIANTS

    @property
    def takes_raw(self) -> bool:
        return self.variant in RAW_VARIANTS

    # ------------------------------------------------------------ validation

    def _check_input(self, seq) -> None:
        if self.takes_raw:
            arr = np.asarray(seq)
            if arr.ndim != 2 or arr.shape[1] != self.input_dim or \
                    not np.issubdtype(arr.dtype, np.floating):
                raise ConfigError(
                    f"{self.variant} expects (T, {self.input_dim}) real "
                    f"vectors, got {getattr(arr, 'shape', None)} {arr.dtype}")
            if arr.shape[0] == 0:
                raise DataError("empty input sequence")
        else:
            toks = np.asarray(seq)
            if toks.size == 0:
                raise DataError("empty input sequence")
            if toks.ndim != 1 or not np.issubdtype(toks.dtype, np.integer):
                raise ConfigError(
                    f"{self.variant} expects a flat sequence of chunk token ids")
            if toks.max() >= self.chunk_vocab_size or toks.min() < 0:
                raise DataError("chunk token id outside vocabulary")

    # ---------------------------------------------------------- batch building

    def _pad_encoder(self, seqs) -> dict:
        for s in seqs:
            self._check_input(s)
        dtype = self.store.dtype
        b = len(seqs)
        lens = np.array([len(s) for s in seqs], dtype=np.int64)
        t_max = int(lens.max())
        mask = np.zeros((t_max, b), dtype=dtype)
        for i, n in enumerate(lens):
            mask[:n, i] = 1.0
        if self.takes_raw:
            x = np.zeros((t_max, b, self.input_dim), dtype=dtype)
            for i, s in enumerate(seqs):
                x[:lens[i], i] = np.asarray(s, dtype=dtype)
            return {"raw": x, "mask": mask, "lens": lens}
        tok = np.zeros((t_max, b), dtype=np.int64)
        for i, s in enumerate(seqs):
            tok[:lens[i], i] = np.asarray([int(t) for t in s], dtype=np.int64)
        return {"tok": tok, "mask": mask, "lens": lens}

    def _pad_captions(self, caps_ids: list[list[int]]) -> dict:
        v = len(self.vocab)
        for ids in caps_ids:
            if not ids or ids[-1] != self.vocab.eos_id:
                raise DataError("caption must be non-empty and end with EOS")
            if max(ids) >= v or min(ids) < 0:
                raise DataError("caption token id outside vocabulary")
        b = len(caps_ids)
        t_max = max(len(c) for c in caps_ids)
        dec_in = np.full((b, t_max), self.vocab.pad_id, dtype=np.int64)
        targets = np.full((b, t_max), self.vocab.pad_id, dtype=np.int64)
        tgt_mask = np.zeros((b, t_max), dtype=self.store.dtype)
        for i, ids in enumerate(caps_ids):
            dec_in[i, 0] = self.vocab.bos_id
            dec_in[i, 1:len(ids)] = ids[:-1]
            targets[i, :len(ids)] = ids
            tgt_mask[i, :len(ids)] = 1.0
        return {"dec_in": dec_in, "targets": targets, "tgt_mask": tgt_mask}

    def make_batch(self, enc_seqs, captions_ids) -> dict:
        if len(enc_seqs) != len(captions_ids):
            raise DataError("inputs and captions misaligned")
        batch = self._pad_encoder(enc_seqs)
        batch.update(self._pad_captions(captions_ids))
        return batch

    # ------------------------------------------------------- forward/backward

    def _drop_mask(self, shape, rng) -> np.ndarray:
        keep = 1.0 - self.dropout
        return ((rng.random(shape) < keep) / keep).astype(self.store.dtype)

    def _encode_batch(self, batch, cache: dict | None, training: bool = False,
                      dropout_rng: np.random.Generator | None = None):
        if self.takes_raw:
            x = batch["raw"]
            t, b, d = x.shape
            u = (x.reshape(t * b, d) @ self.store["enc_in.w"]).reshape(t, b, -1)
        else:
            u = self.store["enc_emb.w"][batch["tok"]]
        if training and self.input_noise > 0.0:
            # additive, so the backward pass needs no correction; gives the
            # discrete variants the same kind of input jitter the raw ones
            # inherit from sensor noise
            u = u + self.input_noise * dropout_rng.standard_normal(
                u.shape).astype(self.store.dtype)
        enc_drop = None
        if training and self.dropout > 0.0:
            # frame-level: drop whole input steps, so the encoder cannot pin
            # a caption to one exact input sequence
            enc_drop = self._drop_mask((u.shape[0], u.shape[1], 1), dropout_rng)
            u = u * enc_drop
        hs, final, enc_cache = self.enc.forward(u, mask=batch["mask"])
        if cache is not None:
            cache["enc_u"] = u
            cache["enc_drop"] = enc_drop
            cache["enc_cache"] = enc_cache
        return hs, final

    def _forward(self, batch, training: bool = False,
                 dropout_rng: np.random.Generator | None = None,
                 cache: dict | None = None):
        """Teacher-forced loss over one batch. Returns (loss sum, #tokens)."""
        enc_hs, (h_t, c_t) = self._encode_batch(batch, cache, training,
                                                dropout_rng)

        dec_in = batch["dec_in"]                      # (B, Td)
        v_emb = self.store["dec_emb.w"][dec_in]       # (B, Td, H)
        v_tbh = np.ascontiguousarray(v_emb.transpose(1, 0, 2))
        dec_drop = None
        if training and self.dropout > 0.0:
            dec_drop = self._drop_mask(v_tbh.shape, dropout_rng)
            v_tbh = v_tbh * dec_drop
        dec_hs, _, dec_cache = self.dec.forward(v_tbh, state0=(h_t, c_t))
        dec_b = np.ascontiguousarray(dec_hs.transpose(1, 0, 2))  # (B, Td, H)

        if self.has_attention:
            w_a = self.store["att.wa"]
            enc_b = np.ascontiguousarray(enc_hs.transpose(1, 0, 2))  # (B,Te,H)
            rd = dec_b @ w_a.T                                       # (B,Td,H)
            scores = enc_b @ rd.transpose(0, 2, 1)                   # (B,Te,Td)
            mask_b = batch["mask"].T                                 # (B,Te)
            scores = scores + (1.0 - mask_b)[:, :, None] * self.store.dtype.type(-1e30)
            scores = scores - scores.max(axis=1, keepdims=True)
            att = np.exp(scores)
            att = att / att.sum(axis=1, keepdims=True)               # (B,Te,Td)
            context = att.transpose(0, 2, 1) @ enc_b                 # (B,Td,H)
            z = np.concatenate([context, dec_b], axis=2)             # (B,Td,2H)
            hp = np.tanh(z @ self.store["att.wc"] + self.store["att.bc"])
            feats = hp
        else:
            feats = dec_b

        drop_mask = None
        if training and self.dropout > 0.0:
            keep = 1.0 - self.dropout
            drop_mask = (dropout_rng.random(feats.shape) < keep) / keep
            drop_mask = drop_mask.astype(self.store.dtype)
            feats = feats * drop_mask

        b, t_d, h = feats.shape
        logits = feats.reshape(b * t_d, h) @ self.store["out.w"] + self.store["out.b"]
        losses, dlogits = softmax_xent_batch(logits, batch["targets"].reshape(-1))
        tmask = batch["tgt_mask"].reshape(-1)
        loss_sum = float(losses @ tmask)
        n_tokens = float(tmask.sum())
        if not np.isfinite(loss_sum):
            raise NumericError("non-finite training loss")

        if cache is not None:
            cache.update(enc_hs=enc_hs, dec_cache=dec_cache, dec_b=dec_b,
                         feats=feats, dlogits=dlogits, tmask=tmask,
                         drop_mask=drop_mask, dec_drop=dec_drop, batch=batch)
            if self.has_attention:
                cache.update(enc_b=enc_b, rd=rd, att=att, z=z, hp=hp)
        return loss_sum, n_tokens

    def _backward(self, cache, scale: float) -> None:
        """Accumulate d(scale * summed loss)/d(params) into the store."""
        st = self.store
        batch = cache["batch"]
        b, t_d = batch["dec_in"].shape
        h = self.hidden

        dlogits = cache["dlogits"] * (cache["tmask"] * st.dtype.type(scale))[:, None]
        feats_flat = cache["feats"].reshape(b * t_d, h)
        st.accumulate_grad("out.w", feats_flat.T @ dlogits)
        st.accumulate_grad("out.b", dlogits.sum(axis=0))
        dfeats = (dlogits @ st["out.w"].T).reshape(b, t_d, h)
        if cache["drop_mask"] is not None:
            dfeats = dfeats * cache["drop_mask"]

        if self.has_attention:
            hp, z, att, rd = cache["hp"], cache["z"], cache["att"], cache["rd"]
            enc_b, dec_b = cache["enc_b"], cache["dec_b"]
            dpre = dfeats * (1.0 - hp * hp)
            st.accumulate_grad("att.wc", z.reshape(-1, 2 * h).T @ dpre.reshape(-1, h))
            st.accumulate_grad("att.bc", dpre.reshape(-1, h).sum(axis=0))
            dz = dpre @ st["att.wc"].T
            dcontext = dz[:, :, :h]                                   # (B,Td,H)
            ddec_b = dz[:, :, h:].copy()
            datt = enc_b @ dcontext.transpose(0, 2, 1)                # (B,Te,Td)
            denc_b = att @ dcontext                                   # (B,Te,H)
            dscores = att * (datt - (att * datt).sum(axis=1, keepdims=True))
            drd = dscores.transpose(0, 2, 1) @ enc_b                  # (B,Td,H)
            denc_b += dscores @ rd
            st.accumulate_grad(
                "att.wa", drd.reshape(-1, h).T @ dec_b.reshape(-1, h))
            ddec_b += drd @ st["att.wa"]
            denc_hs = np.ascontiguousarray(denc_b.transpose(1, 0, 2))
        else:
            ddec_b = dfeats
            denc_hs = None

        ddec_hs = np.ascontiguousarray(ddec_b.transpose(1, 0, 2))     # (Td,B,H)
        dv_tbh, dh0, dc0 = self.dec.backward(cache["dec_cache"], ddec_hs)
        if cache["dec_drop"] is not None:
            dv_tbh = dv_tbh * cache["dec_drop"]
        dv = dv_tbh.transpose(1, 0, 2)                                # (B,Td,H)
        demb = np.zeros_like(st["dec_emb.w"])
        np.add.at(demb, batch["dec_in"], dv)
        st.accumulate_grad("dec_emb.w", demb)

        if denc_hs is None:
            denc_hs = np.zeros_like(cache["enc_hs"])
        du, _, _ = self.enc.backward(cache["enc_cache"], denc_hs,
                                     d_h_final=dh0, d_c_final=dc0)
        if cache["enc_drop"] is not None:
            du = du * cache["enc_drop"]
        if self.takes_raw:
            x = batch["raw"]
            t, bb, d = x.shape
            st.accumulate_grad(
                "enc_in.w", x.reshape(t * bb, d).T @ du.reshape(t * bb, h))
        else:
            dembe = np.zeros_like(st["enc_emb.w"])
            np.add.at(dembe, batch["tok"], du)
            st.accumulate_grad("enc_emb.w", dembe)

    def loss_and_grads(self, batch, training: bool = True,
                       dropout_rng: np.random.Generator | None = None) -> float:
        """Mean token loss; accumulates gradients of that mean."""
        cache: dict = {}
        loss_sum, n_tok = self._forward(batch, training=training,
                                        dropout_rng=dropout_rng, cache=cache)
        self._backward(cache, scale=1.0 / n_tok)
        return loss_sum / n_tok

    def eval_loss(self, batch) -> tuple[float, float]:
        loss_sum, n_tok = self._forward(batch, training=False)
        return loss_sum, n_tok

    # -------------------------------------------------------------- inference

    def encode(self, seq):
        """Single sequence -> (one hidden state per step, final state)."""
        batch = self._pad_encoder([seq])
        hs, (h_t, c_t) = self._encode_batch(batch, cache=None)
        return hs[:, 0, :], (h_t[0], c_t[0])

    def decode_train(self, seq, caption_ids: list[int]) -> float:
        """Teacher-forced mean token loss for one (input, caption) pair."""
        batch = self.make_batch([seq], [caption_ids])
        loss_sum, n_tok = self._forward(batch, training=False)
        return loss_sum / n_tok

    def decode_greedy(self, seq, max_len: int = 30):
        """Greedy caption for one input. Returns (tokens, attention trace);
        the trace is None for non-attention variants. BOS and PAD are
        never emitted; EOS stops decoding and is not part of the output."""
        enc_states, (h, c) = self.encode(seq)
        st = self.store
        vocab = self.vocab
        tokens: list[str] = []
        rows = []
        prev = vocab.bos_id
        for _ in range(max_len):
            x = st["dec_emb.w"][prev]
            h, c = self.dec.step(x[None, :], (h[None, :], c[None, :]))
            h, c = h[0], c[0]
            if self.has_attention:
                context, row = attend(enc_states, h, st["att.wa"])
                rows.append(row)
                z = np.concatenate([context, h])
                feat = np.tanh(z @ st["att.wc"] + st["att.bc"])
            else:
                feat = h
            logits = feat @ st["out.w"] + st["out.b"]
            logits[vocab.pad_id] = -np.inf
            logits[vocab.bos_id] = -np.inf
            prev = int(logits.argmax())
            if prev == vocab.eos_id:
                break
            tokens.append(vocab.tokens[prev])
        trace = np.stack(rows) if rows else None
        if self.has_attention and trace is None:
            trace = np.zeros((0, enc_states.shape[0]))
        return tokens, (trace if self.has_attention else None)


# ------------------------------------------------------------------- training

@dataclass
class TrainResult:
    val_curve: list[float]
    best_epoch: int
    epochs_run: int


def _fixed_batches(model: Seq2Seq, pairs, batch_size: int) -> list[dict]:
    """Batches built once, length-sorted to bound padding waste."""
    order = sorted(range(len(pairs)),
                   key=lambda i: (len(pairs[i][0]), len(pairs[i][1]), i))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [pairs[i] for i in order[start:start + batch_size]]
        batches.append(model.make_batch([p[0] for p in chunk],
                                        [p[1] for p in chunk]))
    return batches


def train_model(model: Seq2Seq, train_pairs, val_pairs, *,
                batch_size: int = 64, lr: float = 1e-3,
                weight_decay: float = 1e-6, clip_norm: float = 5.0,
                max_epochs: int = 300, patience: int = 10,
                seed: int = 0) -> TrainResult:
    """Minibatch AdamW with early stopping on validation loss.

    Stops once `patience` epochs pass without a new validation minimum
    (or at max_epochs) and restores the best-validation parameters.
    """
    if not train_pairs:
        raise DataError("empty training set")
    if not val_pairs:
        raise DataError("empty validation set")
    train_batches = _fixed_batches(model, train_pairs, batch_size)
    val_batches = _fixed_batches(model, val_pairs, batch_size)
    shuffle_rng = rng_for(seed, "shuffle")
    dropout_rng = rng_for(seed, "dropout")

    best_val = np.inf
    best_epoch = -1
    best_params = model.store.snapshot()
    curve: list[float] = []

    for epoch in range(max_epochs):
        for bi in shuffle_rng.permutation(len(train_batches)):
            model.store.zero_grads()
            model.loss_and_grads(train_batches[bi], training=True,
                                 dropout_rng=dropout_rng)
            model.store.clip_gradients(clip_norm)
            optimizer_step(model.store, lr=lr, weight_decay=weight_decay)
        total, n_tok = 0.0, 0.0
        for vb in val_batches:
            s, n = model.eval_loss(vb)
            total += s
            n_tok += n
        val = total / n_tok
        curve.append(val)
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_params = model.store.snapshot()
        elif epoch - best_epoch >= patience:
            break
    model.store.restore(best_params)
    return TrainResult(val_curve=curve, best_epoch=best_epoch,
                       epochs_run=len(curve))


# ----------------------------------------------------------------- checkpoint

def save_checkpoint(model: Seq2Seq, path: str, *,
                    codebook_sha256: str | None = None,
                    bpe_sha256: str | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "variant": model.variant,
        "dims": {"hidden": model.hidden, "input_dim": model.input_dim,
                 "chunk_vocab_size": model.chunk_vocab_size,
                 "caption_vocab_size": len(model.vocab)},
        "dropout": model.dropout,
        "input_noise": model.input_noise,
        "seed": model.seed,
        "caption_vocab": model.vocab.tokens,
        "codebook_sha256": codebook_sha256,
        "bpe_sha256": bpe_sha256,
        "dtype": np.dtype(model.store.dtype).name,
    }
    arrays = {f"param.{k}": v for k, v in model.store.params.items()}
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str) -> tuple[Seq2Seq, dict]:
    with np.load(path) as data:
        if "__meta__" not in data:
            raise DataError(f"{path} is not a model checkpoint")
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {meta.get('version')!r}")
        params = {k[len("param."):]: data[k] for k in data.files
                  if k.startswith("param.")}
    vocab = Vocab(list(meta["caption_vocab"]))
    model = Seq2Seq(meta["variant"], vocab, hidden=meta["dims"]["hidden"],
                    input_dim=meta["dims"]["input_dim"],
                    chunk_vocab_size=meta["dims"]["chunk_vocab_size"],
                    dropout=meta["dropout"],
                    input_noise=meta.get("input_noise", 0.0),
                    seed=meta["seed"], dtype=np.dtype(meta["dtype"]))
    expected = set(model.store.names())
    if set(params) != expected:
        raise DataError("checkpoint tensors do not match the declared variant")
    model.store.restore(params)
    return model, meta


def toy_gradient_check(eps: float = 1e-5) -> dict[str, float]:
    """Analytic vs central-difference gradients for every variant at tiny
    dimensions (hidden 4, vocab 6, input dim 3, max seq len 5; float64,
    dropout off).  Returns per-variant max relative error."""
    from .nn import grad_check

    vocab = Vocab(list(SPECIALS) + ["w1", "w2"])
    caps = [[4, 5, 2], [5, 2]]
    errs = {}
    for variant in VARIANTS:
        model = Seq2Seq(variant, vocab, hidden=4, input_dim=3,
                        chunk_vocab_size=7, dropout=0.0, seed=3,
                        dtype=np.float64)
        rng = rng_for("toy", variant)
        if variant in RAW_VARIANTS:
            seqs = [rng.standard_normal((5, 3)), rng.standard_normal((3, 3))]
        else:
            seqs = [[0, 4, 2, 1, 3], [5, 0, 1]]
        batch = model.make_batch(seqs, caps)

        def loss_fn(compute_grads, model=model, batch=batch):
            if compute_grads:
                return model.loss_and_grads(batch, training=False)
            s, n = model.eval_loss(batch)
            return s / n

        errs[variant] = grad_check(loss_fn, model.store, eps=eps)
    return errs
