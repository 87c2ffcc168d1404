"""Experiment orchestration.

Ties the pipeline together: fold assignment over a caption corpus,
per-fold segmentation (codebook + merge table fitted on training actions
only), training every captioner variant, best-reference BLEU scoring of
greedy decodes, and artifact emission (archived config, metrics CSV,
Markdown report, attention matrices, checkpoints).  Reruns from an
archived config reproduce the metrics CSV byte-for-byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bleu import evaluate_corpus, metrics_csv, results_markdown
from .bpe import BpeModel, bpe_encode, bpe_table_text, bpe_train, save_bpe
from .datagen import Sample, load_dataset
from .errors import ActionCapError, ConfigError, DataError
from .quantize import Codebook, codebook_to_json, kmeans_fit, quantize, \
    save_codebook
from .seeds import derive_seed
from .seq2seq import Seq2Seq, build_vocab, save_checkpoint, train_model

VARIANTS = ("vanilla", "explicit", "implicit", "hybrid")
CHUNKED = ("explicit", "hybrid")
BLEU_NS = (2, 3, 4)
CONFIG_VERSION = 1

# Reference corpus: 50 actions x 20 captions under this master seed.
CORPUS_SEED = 7
CORPUS_ACTIONS = 50
CORPUS_CAPTIONS = 20


# -------------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    """Everything a run needs; serialized next to its results so the
    exact experiment can be replayed later."""

    variants: tuple[str, ...] = VARIANTS
    k: int = 150                  # codebook size
    bpe_vocab: int = 200          # chunk vocabulary (labels + merges)
    bpe_min_freq: int = 2         # support floor for a merge
    hidden: int = 160
    batch_size: int = 64
    lr: float = 0.001
    weight_decay: float = 1e-6
    dropout: float = 0.5
    clip_norm: float = 5.0
    max_epochs: int = 300
    patience: int = 10
    folds: int = 10
    seed: int = 0
    dataset: str = "corpus.jsonl"
    out_dir: str = "runs/exp"
    global_segmentation: bool = False   # fit codebook/BPE once on all data
    workers: int = 1
    max_decode_len: int = 30
    min_freq: int = 2             # caption vocab cutoff

    def __post_init__(self):
        self.variants = tuple(self.variants)
        if not self.variants:
            raise ConfigError("variant set must not be empty")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}")
        if len(set(self.variants)) != len(self.variants):
            raise ConfigError("duplicate variant in variant set")
        if self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.bpe_vocab < self.k:
            raise ConfigError(
                f"bpe_vocab {self.bpe_vocab} smaller than codebook k {self.k}")
        if self.bpe_min_freq < 2:
            raise ConfigError(
                f"bpe_min_freq must be >= 2, got {self.bpe_min_freq}")
        for name in ("hidden", "batch_size", "max_epochs", "patience",
                     "folds", "workers", "max_decode_len", "min_freq"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr <= 0 or self.clip_norm <= 0:
            raise ConfigError("lr and clip_norm must be positive")


def config_to_json(cfg: ExperimentConfig) -> str:
    payload = {"version": CONFIG_VERSION, **dataclasses.asdict(cfg)}
    payload["variants"] = list(cfg.variants)
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def config_from_json(text: str) -> ExperimentConfig:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ConfigError("config must be a JSON object")
    if payload.get("version") != CONFIG_VERSION:
        raise ConfigError(
            f"unsupported config version {payload.get('version')!r}")
    payload = dict(payload)
    payload.pop("version")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    missing = known - set(payload)
    if missing:
        raise ConfigError(f"missing config fields: {sorted(missing)}")
    return ExperimentConfig(**payload)


def config_hash(cfg: ExperimentConfig) -> str:
    payload = {"version": CONFIG_VERSION, **dataclasses.asdict(cfg)}
    payload["variants"] = list(cfg.variants)
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def canonical_config(dataset: str, out_dir: str) -> ExperimentConfig:
    """Reference configuration for the cross-validated ordering
    experiment on the reference corpus.  Hidden size, codebook size, and
    the epoch cap are reduced from the defaults so the full ten-fold run
    fits a desktop-CPU budget; the variant ordering does not depend on
    them."""
    return ExperimentConfig(k=40, bpe_vocab=200, bpe_min_freq=5,
                            hidden=64, max_epochs=60,
                            patience=8, folds=10, seed=CORPUS_SEED,
                            dataset=dataset, out_dir=out_dir)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return config_from_json(fh.read())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e


# --------------------------------------------------------------------- folds

@dataclass(frozen=True)
class FoldSplit:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]


@dataclass(frozen=True)
class FoldPlan:
    n_actions: int
    n_folds: int
    seed: int
    splits: tuple[FoldSplit, ...]


def make_folds(n_actions: int, n_folds: int, seed: int) -> FoldPlan:
    """Rotation over one seeded permutation: fold i tests block i,
    validates on the next block, trains on the rest.  Test blocks
    therefore partition the action set."""
    if n_actions < 1 or n_folds < 1:
        raise ConfigError("need at least one action and one fold")
    if n_actions % n_folds != 0:
        raise ConfigError(
            f"{n_actions} actions not divisible into {n_folds} folds")
    if n_folds < 3:
        raise ConfigError(
            "rotation needs >= 3 folds (one test block, one val block, "
            "at least one train block)")
    per = n_actions // n_folds
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    perm = [int(a) for a in rng.permutation(n_actions)]
    blocks = [tuple(perm[i * per:(i + 1) * per]) for i in range(n_folds)]
    splits = []
    for i in range(n_folds):
        val_block = (i + 1) % n_folds
        train: list[int] = []
        for b in range(n_folds):
            if b != i and b != val_block:
                train.extend(blocks[b])
        splits.append(FoldSplit(train=tuple(train), val=blocks[val_block],
                                test=blocks[i]))
    return FoldPlan(n_actions=n_actions, n_folds=n_folds, seed=seed,
                    splits=tuple(splits))


def fold_plan_json(plan: FoldPlan) -> str:
    payload = {
        "n_actions": plan.n_actions,
        "n_folds": plan.n_folds,
        "seed": plan.seed,
        "folds": [{"train": list(s.train), "val": list(s.val),
                   "test": list(s.test)} for s in plan.splits],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


# -------------------------------------------------------------- segmentation

@dataclass
class Segmentation:
    codebook: Codebook
    bpe: BpeModel
    codebook_sha256: str
    bpe_sha256: str

    def encode(self, observations: np.ndarray) -> list[int]:
        labels = quantize(self.codebook, observations)
        return bpe_encode(self.bpe, [int(x) for x in labels])


def fit_segmentation(samples: list[Sample], k: int, bpe_vocab: int,
                     seed: int, min_pair_freq: int = 2) -> Segmentation:
    """Codebook over every observation frame of `samples`, then a merge
    table over the resulting label sequences."""
    if not samples:
        raise DataError("segmentation needs at least one training action")
    points = np.concatenate([s.observations for s in samples], axis=0)
    codebook = kmeans_fit(points, k, seed=seed)
    label_seqs = [[int(x) for x in quantize(codebook, s.observations)]
                  for s in samples]
    bpe = bpe_train(label_seqs, bpe_vocab, alphabet_size=k,
                    min_pair_freq=min_pair_freq)
    return Segmentation(
        codebook=codebook,
        bpe=bpe,
        codebook_sha256=hashlib.sha256(
            codebook_to_json(codebook).encode("utf-8")).hexdigest(),
        bpe_sha256=hashlib.sha256(
            bpe_table_text(bpe).encode("utf-8")).hexdigest(),
    )


# ----------------------------------------------------------------- execution

@dataclass
class VariantFoldResult:
    variant: str
    fold: int
    scores: dict[int, float]                  # n -> fold-mean BLEU-n
    outputs: list[tuple[int, list[str]]]      # (action id, greedy tokens)
    best_epoch: int
    epochs_run: int
    checkpoint_path: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    config_hash: str
    plan: FoldPlan
    rows: list[tuple[str, int, int, float]]   # variant, fold, n, score
    table: dict[str, dict[int, float]]        # variant -> n -> mean
    fold_results: list[VariantFoldResult]
    segmentation_hashes: dict[str, dict[str, str]]
    out_dir: str

    def mean_bleu(self, variant: str, n: int) -> float:
        return self.table[variant][n]


def _job_inputs(variant: str, samples: list[Sample], ids: tuple[int, ...],
                seg: Segmentation | None):
    """(input, caption-token-list) pairs for every caption of `ids`."""
    pairs = []
    for i in ids:
        s = samples[i]
        if variant in CHUNKED:
            inp = seg.encode(s.observations)
        else:
            inp = s.observations.astype(np.float32)
        for cap in s.captions:
            pairs.append((inp, cap))
    return pairs


def _run_job(samples: list[Sample], split: FoldSplit, seg: Segmentation | None,
             cfg: ExperimentConfig, fold: int, variant: str,
             fold_dir: str) -> VariantFoldResult:
    """Train one variant on one fold, score its greedy decodes, and write
    the checkpoint plus any attention matrices into `fold_dir`."""
    vocab = build_vocab([cap for i in split.train
                         for cap in samples[i].captions],
                        min_freq=cfg.min_freq)
    train_raw = _job_inputs(variant, samples, split.train, seg)
    val_raw = _job_inputs(variant, samples, split.val, seg)
    train_pairs = [(inp, vocab.encode(cap)) for inp, cap in train_raw]
    val_pairs = [(inp, vocab.encode(cap)) for inp, cap in val_raw]

    input_dim = samples[0].observations.shape[1]
    model = Seq2Seq(
        variant, vocab, hidden=cfg.hidden, input_dim=input_dim,
        chunk_vocab_size=seg.bpe.vocab_size if variant in CHUNKED else None,
        dropout=cfg.dropout, seed=derive_seed(cfg.seed, "model", fold, variant))
    res = train_model(model, train_pairs, val_pairs,
                      batch_size=cfg.batch_size, lr=cfg.lr,
                      weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm,
                      max_epochs=cfg.max_epochs, patience=cfg.patience,
                      seed=derive_seed(cfg.seed, "train", fold, variant))

    run_hash = config_hash(cfg)
    outputs, references = [], []
    for i in split.test:
        s = samples[i]
        if variant in CHUNKED:
            inp = seg.encode(s.observations)
        else:
            inp = s.observations.astype(np.float32)
        tokens, trace = model.decode_greedy(inp, max_len=cfg.max_decode_len)
        outputs.append((s.id, tokens))
        references.append([cap[:-1] for cap in s.captions])  # drop <eos>
        if trace is not None:
            path = os.path.join(fold_dir, f"attn-{variant}-a{s.id}.csv")
            np.savetxt(path, trace, delimiter=",", fmt="%.17g",
                       header=f"config {run_hash} fold {fold} "
                              f"variant {variant} action {s.id}")

    report = evaluate_corpus([t for _, t in outputs], references, ns=BLEU_NS)
    ckpt = os.path.join(fold_dir, f"model-{variant}.npz")
    save_checkpoint(model, ckpt,
                    codebook_sha256=seg.codebook_sha256 if seg else None,
                    bpe_sha256=seg.bpe_sha256 if seg else None)
    return VariantFoldResult(
        variant=variant, fold=fold, scores=dict(report.aggregate),
        outputs=outputs, best_epoch=res.best_epoch, epochs_run=res.epochs_run,
        checkpoint_path=ckpt)


def _run_job_payload(payload) -> VariantFoldResult:
    return _run_job(*payload)


def _wrap_stage(fold, stage: str, exc: Exception):
    msg = f"fold {fold} failed at stage {stage!r}: {exc}"
    if isinstance(exc, ActionCapError):
        return type(exc)(msg)
    return RuntimeError(msg)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """The full protocol.  Per fold: fit segmentation on training actions
    only, train every requested variant, greedy-decode the held-out test
    actions, and score best-reference BLEU.  Artifacts land in
    cfg.out_dir; per-(fold, variant) jobs may run in a worker pool."""
    samples = load_dataset(cfg.dataset)
    plan = make_folds(len(samples), cfg.folds, cfg.seed)
    run_hash = config_hash(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.json"), "w",
              encoding="utf-8") as fh:
        fh.write(config_to_json(cfg))

    needs_chunks = any(v in CHUNKED for v in cfg.variants)
    seg_global: Segmentation | None = None
    if needs_chunks and cfg.global_segmentation:
        try:
            seg_global = fit_segmentation(
                samples, cfg.k, cfg.bpe_vocab,
                seed=derive_seed(cfg.seed, "seg", "global"),
                min_pair_freq=cfg.bpe_min_freq)
        except Exception as e:
            raise _wrap_stage("global", "segmentation", e) from e

    seg_by_fold: list[Segmentation | None] = []
    seg_hashes: dict[str, dict[str, str]] = {}
    for fold, split in enumerate(plan.splits):
        fold_dir = os.path.join(cfg.out_dir, f"fold-{fold}")
        os.makedirs(fold_dir, exist_ok=True)
        seg = None
        if needs_chunks:
            try:
                seg = seg_global or fit_segmentation(
                    [samples[i] for i in split.train], cfg.k, cfg.bpe_vocab,
                    seed=derive_seed(cfg.seed, "seg", fold),
                    min_pair_freq=cfg.bpe_min_freq)
            except Exception as e:
                raise _wrap_stage(fold, "segmentation", e) from e
            save_codebook(seg.codebook,
                          os.path.join(fold_dir, "codebook.json"))
            save_bpe(seg.bpe, os.path.join(fold_dir, "bpe.txt"))
            seg_hashes[str(fold)] = {"codebook": seg.codebook_sha256,
                                     "bpe": seg.bpe_sha256}
        seg_by_fold.append(seg)

    jobs = []
    for fold, split in enumerate(plan.splits):
        fold_dir = os.path.join(cfg.out_dir, f"fold-{fold}")
        for variant in cfg.variants:
            seg = seg_by_fold[fold] if variant in CHUNKED else None
            jobs.append((samples, split, seg, cfg, fold, variant, fold_dir))

    results: list[VariantFoldResult] = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_job_payload, job) for job in jobs]
            for job, fut in zip(jobs, futures):
                try:
                    results.append(fut.result())
                except Exception as e:
                    raise _wrap_stage(job[4], f"train/eval {job[5]}", e) from e
    else:
        for job in jobs:
            try:
                results.append(_run_job_payload(job))
            except Exception as e:
                raise _wrap_stage(job[4], f"train/eval {job[5]}", e) from e
    results.sort(key=lambda r: (r.fold, VARIANTS.index(r.variant)))

    rows = [(r.variant, r.fold, n, r.scores[n])
            for r in results for n in BLEU_NS]
    table = {v: {n: sum(r.scores[n] for r in results if r.variant == v)
                 / cfg.folds for n in BLEU_NS}
             for v in cfg.variants}
    result = ExperimentResult(
        config=cfg, config_hash=run_hash, plan=plan, rows=rows, table=table,
        fold_results=results, segmentation_hashes=seg_hashes,
        out_dir=cfg.out_dir)
    _write_bundle(result)
    write_report(cfg.out_dir)
    return result


# ------------------------------------------------------------------- reports

def _write_bundle(result: ExperimentResult) -> None:
    out = result.out_dir
    with open(os.path.join(out, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write(metrics_csv(result.rows))
    refs = {s.id: s.captions[0][:-1]
            for s in load_dataset(result.config.dataset)}
    transcripts = []
    for fold, split in enumerate(result.plan.splits):
        by_variant = {r.variant: dict(r.outputs) for r in result.fold_results
                      if r.fold == fold}
        for r in sorted({aid for outs in by_variant.values()
                         for aid in outs}):
            transcripts.append({
                "fold": fold,
                "action": r,
                "reference": " ".join(refs.get(r, [])),
                "generated": {v: " ".join(outs.get(r, []))
                              for v, outs in sorted(by_variant.items())},
            })
    meta = {
        "config_sha256": result.config_hash,
        "aggregation": "per-fold mean of best-reference BLEU, then mean over folds",
        "segmentation_sha256": result.segmentation_hashes,
        "folds": json.loads(fold_plan_json(result.plan)),
        "training": [{"variant": r.variant, "fold": r.fold,
                      "best_epoch": r.best_epoch, "epochs_run": r.epochs_run}
                     for r in result.fold_results],
        "transcripts": transcripts,
    }
    with open(os.path.join(out, "bundle.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_metrics(path: str) -> list[tuple[str, int, int, float]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "variant,fold,n,score":
            raise DataError(f"unexpected metrics header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            variant, fold, n, score = line.split(",")
            rows.append((variant, int(fold), int(n), float(score)))
    return rows


def write_report(out_dir: str) -> str:
    """(Re)generate report.md from the stored bundle.  Idempotent; a
    bundle with missing variant/fold cells is reported with the gaps
    flagged rather than rejected."""
    metrics_path = os.path.join(out_dir, "metrics.csv")
    bundle_path = os.path.join(out_dir, "bundle.json")
    if not os.path.exists(metrics_path) or not os.path.exists(bundle_path):
        raise DataError(f"{out_dir} does not contain a result bundle")
    rows = read_metrics(metrics_path)
    with open(bundle_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)

    by_variant: dict[str, dict[int, list[float]]] = {}
    folds_seen: dict[str, set[int]] = {}
    for variant, fold, n, score in rows:
        by_variant.setdefault(variant, {}).setdefault(n, []).append(score)
        folds_seen.setdefault(variant, set()).add(fold)
    n_folds = meta["folds"]["n_folds"]

    complete, gaps = {}, []
    for variant in VARIANTS:
        if variant not in by_variant:
            continue
        have = by_variant[variant]
        if set(have) == set(BLEU_NS) and len(folds_seen[variant]) == n_folds:
            complete[variant] = {n: sum(v) / len(v) for n, v in have.items()}
        else:
            complete[variant] = {n: (sum(have[n]) / len(have[n]))
                                 for n in BLEU_NS if n in have}
            missing = sorted(set(range(n_folds)) - folds_seen[variant])
            gaps.append(f"{variant}: missing folds {missing}" if missing
                        else f"{variant}: missing BLEU orders")
    table_ready = {v: s for v, s in complete.items()
                   if set(s) >= set(BLEU_NS)}

    lines = [
        "# Captioning results",
        "",
        f"Config: `{meta['config_sha256']}`",
        "",
        f"Aggregation: {meta['aggregation']}.",
        "",
        "## Mean BLEU over folds",
        "",
        results_markdown(table_ready, ns=BLEU_NS).rstrip("\n"),
    ]
    if gaps:
        lines += ["", "Incomplete cells: " + "; ".join(gaps)]
    lines += ["", "## Sample generations", ""]
    lines.append("| Fold | Action | Reference | " +
                 " | ".join(v for v in VARIANTS if v in by_variant) + " |")
    lines.append("|" + "---|" * (3 + len([v for v in VARIANTS
                                          if v in by_variant])))
    for t in meta["transcripts"]:
        gen = " | ".join(t["generated"].get(v, "(missing)")
                         for v in VARIANTS if v in by_variant)
        lines.append(f"| {t['fold']} | {t['action']} | {t['reference']} "
                     f"| {gen} |")
    lines += [
        "",
        "## Attention matrices",
        "",
        "Per test action, attention variants write row-stochastic matrices "
        "(decoder step x encoder step) to `fold-*/attn-<variant>-a<id>.csv`.",
        "",
    ]
    text = "\n".join(lines)
    path = os.path.join(out_dir, "report.md")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path
