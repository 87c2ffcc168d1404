"""Byte-pair encoding over cluster-label sequences.

Frequent adjacent label pairs are merged into chunk tokens, shortening
sequences before they reach the encoder. Token ids are contiguous:
0..alphabet_size-1 are base labels, merged tokens follow in rank order.
Pair frequencies are counted left-to-right non-overlapping — a run
"A A A" contributes one (A, A) — so counting matches how merges apply.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .errors import ConfigError, DataError

MERGE_TABLE_VERSION = 1


@dataclass
class BpeModel:
    alphabet_size: int
    target_vocab: int
    merges: list[tuple[int, int]] = field(default_factory=list)
    # token id -> base-label expansion; base tokens expand to themselves
    expansions: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @property
    def vocab_size(self) -> int:
        return self.alphabet_size + len(self.merges)

    def token_for_rank(self, rank: int) -> int:
        return self.alphabet_size + rank


def _count_pairs(seqs: list[list[int]]) -> Counter:
    counts: Counter = Counter()
    for s in seqs:
        i = 0
        n = len(s)
        while i < n - 1:
            counts[(s[i], s[i + 1])] += 1
            # a run of equal tokens only yields floor(run/2) usable pairs
            if i + 2 < n and s[i] == s[i + 1] == s[i + 2]:
                i += 2
            else:
                i += 1
    return counts


def _apply_merge(s: list[int], left: int, right: int, new_id: int) -> list[int]:
    out: list[int] = []
    i = 0
    n = len(s)
    while i < n:
        if i + 1 < n and s[i] == left and s[i + 1] == right:
            out.append(new_id)
            i += 2
        else:
            out.append(s[i])
            i += 1
    return out


def bpe_train(corpus: list[list[int]], target_vocab: int,
              alphabet_size: int | None = None,
              min_pair_freq: int = 2,
              max_token_len: int | None = None) -> BpeModel:
    """Greedily merge the most frequent adjacent pair until `target_vocab`.

    Stops early when the best pair occurs fewer than `min_pair_freq`
    times (floor 2 — merging singletons would just memorize sequences).
    A higher floor keeps the deep, well-supported run merges but refuses
    rare pairs that only ever recur in one or two training sequences.
    `max_token_len` caps how many base labels one chunk may span; left
    uncapped, a long constant run tokenizes into its binary-length
    decomposition (32+2+1, ...) — a near-unique length signature per
    sequence, where repeated fixed-span chunks generalize. Ties go to the
    ascending (left, right) id pair. Pairs never span two training
    sequences.
    """
    if min_pair_freq < 2:
        raise ConfigError(f"min_pair_freq must be >= 2, got {min_pair_freq}")
    if max_token_len is not None and max_token_len < 2:
        raise ConfigError(f"max_token_len must be >= 2, got {max_token_len}")
    if not corpus:
        raise DataError("bpe_train requires a non-empty corpus")
    seqs = [[int(t) for t in s] for s in corpus]
    max_label = max((t for s in seqs for t in s), default=-1)
    if alphabet_size is None:
        alphabet_size = max_label + 1
    if alphabet_size <= 0:
        raise DataError("bpe_train requires at least one base label")
    if max_label >= alphabet_size:
        raise DataError(f"label {max_label} outside alphabet of size {alphabet_size}")
    if target_vocab < alphabet_size:
        raise ConfigError(
            f"target_vocab {target_vocab} smaller than alphabet {alphabet_size}")

    expansions: dict[int, tuple[int, ...]] = {
        t: (t,) for t in range(alphabet_size)}
    merges: list[tuple[int, int]] = []

    while alphabet_size + len(merges) < target_vocab:
        counts = _count_pairs(seqs)
        if max_token_len is not None:
            counts = Counter({
                (l, r): c for (l, r), c in counts.items()
                if len(expansions[l]) + len(expansions[r]) <= max_token_len})
        if not counts:
            break
        best_count = max(counts.values())
        if best_count < min_pair_freq:
            break
        left, right = min(p for p, c in counts.items() if c == best_count)
        new_id = alphabet_size + len(merges)
        merges.append((left, right))
        expansions[new_id] = expansions[left] + expansions[right]
        seqs = [_apply_merge(s, left, right, new_id) for s in seqs]

    return BpeModel(alphabet_size=alphabet_size, target_vocab=target_vocab,
                    merges=merges, expansions=expansions)


def bpe_encode(model: BpeModel, seq: list[int]) -> list[int]:
    """Apply merges in rank order, each left-to-right non-overlapping."""
    out = [int(t) for t in seq]
    for t in out:
        if not 0 <= t < model.alphabet_size:
            raise DataError(f"label {t} not in base alphabet")
    for rank, (left, right) in enumerate(model.merges):
        out = _apply_merge(out, left, right, model.alphabet_size + rank)
    return out


def bpe_decode(model: BpeModel, chunks: list[int]) -> list[int]:
    out: list[int] = []
    for t in chunks:
        exp = model.expansions.get(int(t))
        if exp is None:
            raise DataError(f"token {t} not in vocabulary")
        out.extend(exp)
    return out


def save_bpe(model: BpeModel, path: str) -> None:
    """First line: JSON header. Then one `rank left right` line per merge."""
    header = {
        "version": MERGE_TABLE_VERSION,
        "base_alphabet_size": model.alphabet_size,
        "target_vocab": model.target_vocab,
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [f"{rank} {left} {right}"
              for rank, (left, right) in enumerate(model.merges)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def bpe_table_text(model: BpeModel) -> str:
    header = {
        "version": MERGE_TABLE_VERSION,
        "base_alphabet_size": model.alphabet_size,
        "target_vocab": model.target_vocab,
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [f"{r} {l} {rt}" for r, (l, rt) in enumerate(model.merges)]
    return "\n".join(lines) + "\n"


def load_bpe(path: str) -> BpeModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DataError("empty merge-table file")
    header = json.loads(lines[0])
    if header.get("version") != MERGE_TABLE_VERSION:
        raise DataError(f"unsupported merge-table version {header.get('version')!r}")
    alphabet_size = int(header["base_alphabet_size"])
    model = BpeModel(alphabet_size=alphabet_size,
                     target_vocab=int(header["target_vocab"]))
    model.expansions = {t: (t,) for t in range(alphabet_size)}
    for expected_rank, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != 3:
            raise DataError(f"malformed merge line: {line!r}")
        rank, left, right = map(int, parts)
        if rank != expected_rank:
            raise DataError(f"merge ranks out of order at {rank}")
        new_id = alphabet_size + rank
        if left not in model.expansions or right not in model.expansions:
            raise DataError(f"merge {rank} references unknown token")
        model.merges.append((left, right))
        model.expansions[new_id] = model.expansions[left] + model.expansions[right]
    return model
