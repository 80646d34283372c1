"""Training loop: teacher forcing, per-token mean loss, Adam with clipping.

The loss at each decoder step is the negative log of the marginalised
probability of the supervised outcome (see
:meth:`morphoqg.model.EncoderDecoder.target_probability`); gradients are
averaged over every target token in the batch.  All randomness — example
order and dropout — flows from a single seed, so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import math

import numpy as np

from .errors import DivergenceError, EmptyInputError
from .model import EncoderDecoder, PreparedExample
from .tensor import Adam


@dataclass
class TrainConfig:
    """Knobs for one training run."""

    max_steps: int = 2000
    batch_size: int = 32
    learning_rate: float = 0.002
    clip_norm: float = 5.0
    seed: int = 42
    eval_every: int = 100


@dataclass
class TrainResult:
    """What a run produced: per-step losses and the best weights seen."""

    steps: int
    train_losses: list = field(default_factory=list)
    eval_losses: list = field(default_factory=list)
    best_eval_loss: float = math.inf
    best_weights: Optional[dict] = None
    stopped_early: bool = False


def evaluate_mean_loss(model: EncoderDecoder,
                       prepared: Sequence[PreparedExample]) -> float:
    """Per-token mean negative log-likelihood with dropout off."""
    if not prepared:
        raise EmptyInputError("no examples to evaluate")
    loss, tokens = model.loss_and_grads(prepared, grads=None)
    return loss / tokens


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless stream of index batches, reshuffling each pass."""
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            chunk = order[start : start + batch_size]
            if len(chunk) > 0:
                yield chunk


def train(
    model: EncoderDecoder,
    train_examples: Sequence[PreparedExample],
    config: TrainConfig,
    dev_examples: Optional[Sequence[PreparedExample]] = None,
    should_stop: Optional[Callable[[int, EncoderDecoder], bool]] = None,
    log: Optional[Callable[[str], None]] = None,
) -> TrainResult:
    """Run up to ``config.max_steps`` optimiser updates.

    Raises :class:`DivergenceError` the moment a batch loss is not finite.
    When ``dev_examples`` is given the weights with the best dev loss are
    kept in ``TrainResult.best_weights`` (and restored onto the model at
    the end).  ``should_stop(step, model)`` may end the run early.
    """
    if not train_examples:
        raise EmptyInputError("no training examples")
    rng = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng(config.seed + 1)
    optimizer = Adam(model.store, lr=config.learning_rate,
                     clip_norm=config.clip_norm)
    result = TrainResult(steps=0)
    batch_stream = _batches(len(train_examples), config.batch_size, rng)

    for step in range(1, config.max_steps + 1):
        indices = next(batch_stream)
        batch = [train_examples[i] for i in indices]
        grads = model.zero_grads()
        loss_sum, tokens = model.loss_and_grads(batch, grads=grads,
                                                rng=dropout_rng)
        mean_loss = loss_sum / tokens
        if not math.isfinite(mean_loss):
            raise DivergenceError(
                f"non-finite loss {mean_loss!r} at step {step}")
        inv = model.dtype(1.0 / tokens)
        for name in grads:
            grads[name] *= inv
        optimizer.step(grads)
        result.steps = step
        result.train_losses.append(mean_loss)
        if log and step % config.eval_every == 0:
            log(f"step {step}: train loss {mean_loss:.4f}")

        due = step % config.eval_every == 0 or step == config.max_steps
        if due and dev_examples:
            dev_loss = evaluate_mean_loss(model, dev_examples)
            result.eval_losses.append((step, dev_loss))
            if log:
                log(f"step {step}: dev loss {dev_loss:.4f}")
            if dev_loss < result.best_eval_loss:
                result.best_eval_loss = dev_loss
                result.best_weights = {
                    name: arr.copy() for name, arr in model.store.items()
                }
        if due and should_stop is not None and should_stop(step, model):
            result.stopped_early = True
            break

    if result.best_weights is not None:
        for name, arr in result.best_weights.items():
            model.store[name] = arr
    return result
