"""Unsupervised action-segment learning and captioning of robot observation streams."""

from .bleu import BleuReport, bleu_best_reference, bleu_n, evaluate_corpus
from .bpe import BpeModel, bpe_decode, bpe_encode, bpe_train, load_bpe, save_bpe
from .datagen import Sample, gen_corpus, load_dataset, save_dataset
from .errors import ActionCapError, ConfigError, DataError, NumericError
from .harness import (
    ExperimentConfig,
    FoldPlan,
    canonical_config,
    config_from_json,
    config_to_json,
    fit_segmentation,
    load_config,
    make_folds,
    run_experiment,
    write_report,
)
from .quantize import Codebook, elbow_select, kmeans_fit, load_codebook, \
    quantize, save_codebook
from .seq2seq import Seq2Seq, Vocab, build_vocab, load_checkpoint, \
    save_checkpoint, train_model

__version__ = "0.1.0"

__all__ = [
    "ActionCapError", "BleuReport", "BpeModel", "Codebook", "ConfigError",
    "DataError", "ExperimentConfig", "FoldPlan", "NumericError", "Sample",
    "Seq2Seq", "Vocab", "bleu_best_reference", "bleu_n", "bpe_decode",
    "bpe_encode", "bpe_train", "build_vocab", "canonical_config",
    "config_from_json", "config_to_json", "elbow_select", "evaluate_corpus",
    "fit_segmentation", "gen_corpus", "kmeans_fit", "load_bpe",
    "load_checkpoint", "load_codebook", "load_config", "load_dataset",
    "make_folds", "quantize", "run_experiment", "save_bpe",
    "save_checkpoint", "save_codebook", "save_dataset", "train_model",
    "write_report",
]
