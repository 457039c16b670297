"""Joint alternating training of the tagger and typer objectives with
self-adjusting sub-task loss weights.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import GradTape, Tensor
from .config import TrainConfig
from .encoder import Sentence
from .errors import NumericalError
from .model import NestedNerModel
from .optim import AdamW


def adaptive_weights(losses: dict[str, float], beta: float) -> dict[str, float]:
    """Normalized focal-style weights: poorly trained sub-tasks (large loss)
    receive larger weight.

    weight_i proportional to (1 - exp(-loss_i))^beta; all-zero losses fall
    back to uniform. Treated as constants, never differentiated through.
    """
    for name, v in losses.items():
        if v < 0:
            raise ValueError(f"negative loss '{name}': {v}")
    scores = {k: (1.0 - math.exp(-v)) ** beta for k, v in losses.items()}
    total = sum(scores.values())
    if total == 0.0:
        return {k: 1.0 / len(losses) for k in losses}
    return {k: s / total for k, s in scores.items()}


def weighted_total(losses: dict[str, Tensor], weights: dict[str, float]) -> Tensor:
    """Weighted sum of scalar loss tensors with constant weights."""
    total = None
    for name, t in losses.items():
        term = ad.scale(t, weights[name])
        total = term if total is None else ad.add(total, term)
    return total


class Trainer:
    """Owns the model parameters and runs the per-step optimization.

    Even/odd alternation phases (configurable period) optimize the tagger
    and typer objectives respectively; period 0 optimizes their sum each
    step. Both losses are always computed for logging.
    """

    def __init__(self, model: NestedNerModel, train_data, out_dir=None,
                 dev_data=None, evaluate_fn=None):
        self.model = model
        self.cfg: TrainConfig = model.cfg
        self.train_data = list(train_data)  # (Sentence, gold entity tuples)
        self.dev_data = dev_data
        self.evaluate_fn = evaluate_fn
        self.opt = AdamW(model.params.as_dict(), lr=self.cfg.lr,
                         weight_decay=self.cfg.weight_decay)
        self.step_idx = 0
        self.epoch = 0
        self.empty_candidate_steps = 0
        self.out_dir = Path(out_dir) if out_dir else None
        self._log_fh = None
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self._log_fh = open(self.out_dir / "train_log.jsonl", "a",
                                encoding="utf-8")

    def close(self):
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None

    def _log(self, payload: dict) -> None:
        if self._log_fh:
            self._log_fh.write(json.dumps(payload) + "\n")
            self._log_fh.flush()

    def objective_for_step(self, step_idx: int) -> str:
        period = self.cfg.alternation_period
        if period == 0:
            return "joint"
        return "tagger" if (step_idx // period) % 2 == 0 else "type"

    def joint_step(self, batch) -> dict:
        """One optimization step over a batch of (Sentence, gold) pairs."""
        cfg = self.cfg
        tape = GradTape()
        sub: dict[str, list] = {}
        type_losses = []
        empty = 0
        with tape:
            for sentence, gold in batch:
                res = self.model.run_sentence(sentence, gold, train=True)
                for name, t in res.losses.items():
                    sub.setdefault(name, []).append(t)
                if res.type_loss is None:
                    empty += 1
                else:
                    type_losses.append(res.type_loss)
            batch_losses = {k: ad.mean_scalars(v) for k, v in sub.items()}
            loss_values = {k: float(t.data) for k, t in batch_losses.items()}
            if cfg.loss_weighting == "adaptive":
                alphas = adaptive_weights(loss_values, cfg.beta)
            else:
                alphas = {k: 1.0 / len(batch_losses) for k in batch_losses}
            l_tagger = weighted_total(batch_losses, alphas)
            l_type = ad.mean_scalars(type_losses) if type_losses else Tensor(0.0)
            objective = self.objective_for_step(self.step_idx)
            if objective == "joint":
                active = ad.add(l_tagger, l_type)
            elif objective == "tagger":
                active = l_tagger
            else:
                active = l_type

        train_loss = float(l_tagger.data) + float(l_type.data)
        if not np.isfinite(train_loss):
            raise NumericalError(
                f"non-finite loss at step {self.step_idx}: sub-losses="
                f"{loss_values}, type={float(l_type.data)}, "
                f"batch sizes={[s.n for s, _ in batch]}")

        self.empty_candidate_steps += empty
        tape.backward(active)
        if objective == "joint":
            group = None
        elif objective == "tagger":
            group = self.model.tagger_group()
        else:
            group = self.model.type_group()
        self.opt.step(group)

        metrics = {
            "step": self.step_idx,
            "objective": objective,
            "losses": {k: round(v, 6) for k, v in loss_values.items()},
            "alpha": {k: round(v, 6) for k, v in alphas.items()},
            "type_loss": round(float(l_type.data), 6),
            "train_loss": round(train_loss, 6),
            "empty_candidates": empty,
        }
        self._log(metrics)
        self.step_idx += 1
        return metrics

    def _epoch_batches(self, epoch: int):
        rng = np.random.default_rng([self.cfg.seed, epoch])
        order = rng.permutation(len(self.train_data))
        bs = self.cfg.batch_size
        for i in range(0, len(order), bs):
            yield [self.train_data[j] for j in order[i : i + bs]]

    def train(self, checkpoint_fn=None) -> list[dict]:
        """Full training run; returns one summary dict per epoch."""
        cfg = self.cfg
        history = []
        base_lr = cfg.lr
        for epoch in range(self.epoch, cfg.epochs):
            if cfg.lr_decay and cfg.epochs > 0:
                self.opt.lr = base_lr * (1.0 - epoch / cfg.epochs)
            last = None
            for batch in self._epoch_batches(epoch):
                last = self.joint_step(batch)
            self.epoch = epoch + 1
            summary = {"epoch": epoch, "final_step": last}
            if self.dev_data is not None and self.evaluate_fn is not None and (
                    cfg.early_stop_f1 > 0 or epoch == cfg.epochs - 1):
                report = self.evaluate_fn(self.model, self.dev_data)
                summary["dev_f1"] = report.f1
                self._log({"epoch": epoch, "dev_f1": report.f1,
                           "dev_precision": report.precision,
                           "dev_recall": report.recall})
            history.append(summary)
            if checkpoint_fn and cfg.checkpoint_every and (
                    (epoch + 1) % cfg.checkpoint_every == 0):
                checkpoint_fn(self, f"epoch{epoch + 1}")
            if cfg.early_stop_f1 > 0 and summary.get("dev_f1", 0) >= cfg.early_stop_f1:
                break
        if checkpoint_fn:
            checkpoint_fn(self, "final")
        return history


def records_to_training_pairs(records, vocab, max_len: int):
    """(Sentence, gold tuple list) pairs; sentences beyond max_len are a
    data error (the position table has max_len rows)."""
    from .errors import DataValidationError

    pairs = []
    for i, rec in enumerate(records):
        if len(rec.tokens) > max_len:
            raise DataValidationError(
                f"record {i} has {len(rec.tokens)} tokens, max_len={max_len}")
        pairs.append((Sentence(vocab.encode(rec.tokens)), rec.entity_tuples()))
    return pairs
