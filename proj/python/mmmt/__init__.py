"""Python interface to the multimodal multitask meme classifier.

Configs are plain dicts with optional "model" and "train" sections, the same
schema as the JSON files accepted by the ``mmmt`` command line tool.
"""

import json
import os

from . import _mmmt
from ._mmmt import (
    ConfigError,
    DataError,
    DimensionError,
    Error,
    FormatError,
    InputError,
    LabelError,
    NumericError,
    binarize_task_c,
    coral_loss,
    extend_labels,
    lr_at,
    weighted_f1,
)

HEADS = ("sentiment", "humour", "sarcasm", "offensive", "motivation")


def _config(config):
    return json.dumps(config or {})


def aggregate(scores):
    """Task A/B/C and mean from per-subtask scores; missing inputs give None."""
    return json.loads(_mmmt.aggregate_json(dict(scores)))


def parameter_count(config=None):
    return _mmmt.parameter_count(_config(config))


def config_digest(config=None, ignore_modalities=False):
    return _mmmt.config_digest(_config(config), ignore_modalities)


def generate_synthetic(out, n, seed=0, separability=1.0, config=None):
    """Writes a labelled synthetic feature file with the config's input dims."""
    _mmmt.generate_synthetic(os.fspath(out), n, seed, separability, _config(config))


def read_labels(path):
    """[(id, {head: label or None})] for every record of a feature file."""
    return [
        (rid, {h: (v if v >= 0 else None) for h, v in zip(HEADS, labels)})
        for rid, labels in _mmmt.read_labels(os.fspath(path))
    ]


def read_dims(path):
    return tuple(_mmmt.read_dims(os.fspath(path)))


def stats(path):
    return json.loads(_mmmt.stats_json(os.fspath(path)))


def table1_stats(split):
    return json.loads(_mmmt.table1_stats_json(split))


def train(config, train_path, val_path, checkpoint=None):
    """Trains from feature files; returns the epoch log, best epoch and validation metrics."""
    return json.loads(
        _mmmt.train_json(_config(config), os.fspath(train_path), os.fspath(val_path), os.fspath(checkpoint or ""))
    )


def evaluate(checkpoint, data):
    return json.loads(_mmmt.evaluate_json(os.fspath(checkpoint), os.fspath(data)))


def predict(checkpoint, data):
    return [(rid, dict(zip(HEADS, labels))) for rid, labels in _mmmt.predict(os.fspath(checkpoint), os.fspath(data))]


def gradcheck(config=None, seed=0, max_entries=0):
    """(max relative error, entries checked) of the analytic gradients."""
    return _mmmt.gradcheck(_config(config), seed, max_entries)


def run_cli(*args):
    """Runs a command line invocation in-process; returns (exit code, stdout, stderr)."""
    return _mmmt.run_cli([str(a) for a in args])
