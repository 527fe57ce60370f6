"""Iterative pruning engines.

imp_run: train -> prune lowest-magnitude survivors -> rewind, until the
desired sparsity.  distilled_prune_run: the same loop but trained on a
small synthetic summary of the data, rewinding to initialization, with a
single final finetune on real data.  random_prune_run: the data-blind
baseline.  Wall-clock time around the train/prune calls is recorded per
iteration so time-to-mask can be reported with or without the final
retrain.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .nn import ModelSpec, ParameterVector, TrainConfig, train, train_with_snapshots, evaluate
from .pruning import (GLOBAL, PruneScope, SparsityMask, apply_mask,
                      magnitude_prune, random_prune, sparsity)

DEFAULT_ITERATION_CAP = 40


class SparsityUnreachable(RuntimeError):
    """Desired sparsity not reached within the iteration cap."""


@dataclass(frozen=True)
class PruneRunConfig:
    desired_sparsity: float
    amount: float = 0.2
    mask_train_epochs: int = 1          # t: epochs per loop iteration
    finetune_epochs: int = 1            # n: final/real-data training epochs
    rewind_epoch: int = 0               # k: 0 = rewind to initialization
    prune_scope: PruneScope = GLOBAL
    train_config_mask: TrainConfig = None
    train_config_finetune: TrainConfig = None
    iteration_cap: int = DEFAULT_ITERATION_CAP
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if not 0.0 < self.amount < 1.0:
            raise ValueError("amount must be in (0, 1)")
        if not 0.0 < self.desired_sparsity < 1.0:
            raise ValueError("desired_sparsity must be in (0, 1)")
        if self.rewind_epoch < 0:
            raise ValueError("rewind_epoch must be >= 0")
        if self.rewind_epoch > 0 and self.rewind_epoch >= self.mask_train_epochs:
            raise ValueError("rewind_epoch must be < mask_train_epochs")
        if self.train_config_mask is None:
            object.__setattr__(self, "train_config_mask",
                               TrainConfig(epochs=self.mask_train_epochs))
        if self.train_config_finetune is None:
            object.__setattr__(self, "train_config_finetune",
                               TrainConfig(epochs=self.finetune_epochs))


@dataclass
class RewindStore:
    """Snapshots from the first training pass: epoch index -> parameters."""

    snapshots: dict[int, ParameterVector]

    def __post_init__(self):
        if 0 not in self.snapshots:
            raise ValueError("rewind store must contain epoch 0")

    def get(self, epoch: int) -> ParameterVector:
        return self.snapshots[epoch]


@dataclass
class IterationRecord:
    index: int
    mask: SparsityMask
    sparsity: float
    mask_phase_seconds: float
    finetune_accuracy: float | None = None
    finetune_seconds: float | None = None


@dataclass
class RunRecord:
    method: str                      # imp | distilled | random
    seed: int
    config: PruneRunConfig
    iterations: list[IterationRecord] = field(default_factory=list)

    def validate(self):
        levels = [it.sparsity for it in self.iterations]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("sparsity must strictly increase across iterations")
        if any(it.mask_phase_seconds < 0 for it in self.iterations):
            raise ValueError("timings must be non-negative")

    @property
    def final_mask(self) -> SparsityMask:
        return self.iterations[-1].mask

    @property
    def final_sparsity(self) -> float:
        return self.iterations[-1].sparsity


def time_to_mask(record: RunRecord, include_final_retrain: bool) -> float:
    """Mask-phase seconds summed over iterations; optionally plus the final
    finetune.  Distillation cost is never part of this number."""
    total = sum(it.mask_phase_seconds for it in record.iterations)
    if include_final_retrain and record.iterations:
        final = record.iterations[-1].finetune_seconds
        if final:
            total += final
    return total


def _finetune_and_eval(spec, rewind_params, mask, d_real, cfg, eval_data):
    t0 = time.monotonic()
    theta = train(spec, rewind_params, mask, d_real, cfg.train_config_finetune)
    dt = time.monotonic() - t0
    acc, _ = evaluate(spec, theta, mask, eval_data if eval_data is not None else d_real)
    return theta, acc, dt


def imp_run(spec: ModelSpec, theta_init: ParameterVector, d_real, cfg: PruneRunConfig,
            eval_data=None, finetune_each=False, method="imp",
            seed=0) -> RunRecord:
    """Classic IMP with weight rewinding to epoch k of the first training pass."""
    record = RunRecord(method=method, seed=seed, config=cfg)
    mask = SparsityMask.ones(theta_init.layer_map)
    store = None
    theta = theta_init
    iteration = 0
    while sparsity(mask, cfg.prune_scope) < cfg.desired_sparsity:
        iteration += 1
        if iteration > cfg.iteration_cap:
            raise SparsityUnreachable(
                f"sparsity {sparsity(mask):.4f} after {cfg.iteration_cap} iterations")
        t0 = time.monotonic()
        if store is None:
            trained, snaps = train_with_snapshots(
                spec, theta, mask, d_real, cfg.train_config_mask,
                snapshot_epochs=(cfg.rewind_epoch,) if cfg.rewind_epoch else ())
            store = RewindStore(snaps)
        else:
            trained = train(spec, apply_mask(theta, mask), mask, d_real,
                            cfg.train_config_mask)
        mask = magnitude_prune(trained, mask, cfg.amount, cfg.prune_scope)
        theta = store.get(cfg.rewind_epoch)
        seconds = time.monotonic() - t0
        rec = IterationRecord(iteration, mask, sparsity(mask, cfg.prune_scope), seconds)
        done = rec.sparsity >= cfg.desired_sparsity
        if finetune_each or done:
            _, rec.finetune_accuracy, rec.finetune_seconds = _finetune_and_eval(
                spec, theta, mask, d_real, cfg, eval_data)
        record.iterations.append(rec)
    record.validate()
    return record


def distilled_prune_run(spec: ModelSpec, theta_init: ParameterVector, d_syn,
                        d_real, cfg: PruneRunConfig, eval_data=None,
                        finetune_each=False, seed=0):
    """Distilled pruning: the mask loop trains only on the synthetic summary
    and always rewinds to initialization; one final finetune on real data.

    Returns (finetuned params, mask, RunRecord).
    """
    if d_syn.size == 0:
        raise ValueError("empty distilled dataset")
    record = RunRecord(method="distilled", seed=seed, config=cfg)
    mask = SparsityMask.ones(theta_init.layer_map)
    theta = theta_init
    iteration = 0
    while sparsity(mask, cfg.prune_scope) < cfg.desired_sparsity:
        iteration += 1
        if iteration > cfg.iteration_cap:
            raise SparsityUnreachable(
                f"sparsity {sparsity(mask):.4f} after {cfg.iteration_cap} iterations")
        t0 = time.monotonic()
        trained = train(spec, apply_mask(theta, mask), mask, d_syn,
                        cfg.train_config_mask)
        mask = magnitude_prune(trained, mask, cfg.amount, cfg.prune_scope)
        theta = theta_init
        seconds = time.monotonic() - t0
        rec = IterationRecord(iteration, mask, sparsity(mask, cfg.prune_scope), seconds)
        if finetune_each and rec.sparsity < cfg.desired_sparsity:
            _, rec.finetune_accuracy, rec.finetune_seconds = _finetune_and_eval(
                spec, theta, mask, d_real, cfg, eval_data)
        record.iterations.append(rec)
    t0 = time.monotonic()
    theta_finetune = train(spec, apply_mask(theta_init, mask), mask, d_real,
                           cfg.train_config_finetune)
    final_seconds = time.monotonic() - t0
    acc, _ = evaluate(spec, theta_finetune, mask,
                      eval_data if eval_data is not None else d_real)
    last = record.iterations[-1]
    last.finetune_accuracy = acc
    last.finetune_seconds = final_seconds
    record.validate()
    return theta_finetune, mask, record


def random_prune_run(spec: ModelSpec, theta_init: ParameterVector, d_real,
                     cfg: PruneRunConfig, eval_data=None, finetune_each=False,
                     seed=0) -> RunRecord:
    """Random-mask baseline: masks depend only on (seed, amount, iteration);
    training happens only to evaluate accuracy at retained sparsities."""
    record = RunRecord(method="random", seed=seed, config=cfg)
    mask = SparsityMask.ones(theta_init.layer_map)
    iteration = 0
    while sparsity(mask, cfg.prune_scope) < cfg.desired_sparsity:
        iteration += 1
        if iteration > cfg.iteration_cap:
            raise SparsityUnreachable(
                f"sparsity {sparsity(mask):.4f} after {cfg.iteration_cap} iterations")
        t0 = time.monotonic()
        mask = random_prune(mask, cfg.amount,
                            seed=_iteration_seed(seed, iteration),
                            scope=cfg.prune_scope)
        seconds = time.monotonic() - t0
        rec = IterationRecord(iteration, mask, sparsity(mask, cfg.prune_scope), seconds)
        done = rec.sparsity >= cfg.desired_sparsity
        if finetune_each or done:
            _, rec.finetune_accuracy, rec.finetune_seconds = _finetune_and_eval(
                spec, theta_init, mask, d_real, cfg, eval_data)
        record.iterations.append(rec)
    record.validate()
    return record


def _iteration_seed(seed, iteration):
    # stable derived stream per iteration so masks are data-independent
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])
