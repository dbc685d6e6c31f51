"""Adam-driven optimization over raw strand point positions."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .losses import GeometrySources, LossConfig, LossValue, loss_fit, loss_hair_geo
from .strands import DegenerateSegmentError, Hairstyle

log = logging.getLogger(__name__)


class OptimizationError(FloatingPointError):
    """Non-finite loss or gradient; carries the trace recorded so far."""

    def __init__(self, message: str, trace: "OptimTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class OptimSchedule:
    step_count: int = 5000
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    convergence_tol: float = 0.0
    log_every: int = 100

    def __post_init__(self):
        b1, b2 = self.adam_betas
        if self.step_count < 1:
            raise ValueError("step_count must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be > 0")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be >= 0")
        object.__setattr__(self, "adam_betas", (float(b1), float(b2)))


@dataclass
class OptimTrace:
    records: list[dict] = field(default_factory=list)
    result: object = None
    converged: bool = False
    warnings: list[str] = field(default_factory=list)

    def append(self, step: int, lv: LossValue, grad_norm: float) -> None:
        rec = {"step": step, "loss": float(lv.value)}
        rec.update({f"term_{k}": float(v) for k, v in lv.terms.items()})
        rec["grad_norm"] = float(grad_norm)
        self.records.append(rec)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.records])

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.losses)

    def write_csv(self, fh) -> None:
        """One row per record; floats use ``repr`` so values round-trip exactly."""
        keys: list[str] = []
        for r in self.records:
            keys.extend(k for k in r if k not in keys)
        writer = csv.DictWriter(fh, fieldnames=keys, restval="", lineterminator="\n")
        writer.writeheader()
        writer.writerows({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()}
                         for r in self.records)

    def write_jsonl(self, fh) -> None:
        for r in self.records:
            fh.write(json.dumps(r) + "\n")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            self.write_jsonl(fh)


class Adam:
    """Plain Adam with bias correction; ``mask`` entries of False never move."""

    def __init__(self, shape, sched: OptimSchedule):
        self.sched = sched
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        b1, b2 = self.sched.adam_betas
        self.t += 1
        self.m = b1 * self.m + (1 - b1) * g
        self.v = b2 * self.v + (1 - b2) * g * g
        mhat = self.m / (1 - b1 ** self.t)
        vhat = self.v / (1 - b2 ** self.t)
        update = self.sched.learning_rate * mhat / (np.sqrt(vhat) + self.sched.adam_eps)
        if mask is not None:
            update = np.where(mask, update, 0.0)
        return x - update


def run_adam(x0: np.ndarray, objective: Callable[[np.ndarray], LossValue], sched: OptimSchedule,
             mask: np.ndarray | None = None, trace: OptimTrace | None = None) -> tuple[np.ndarray, OptimTrace]:
    """Minimize ``objective`` from ``x0``; the trace ends with the returned iterate's loss."""
    trace = trace or OptimTrace()
    x = np.array(x0, dtype=np.float64, copy=True)
    opt = Adam(x.shape, sched)
    prev = None
    for step in range(sched.step_count + 1):
        try:
            lv = objective(x)
        except DegenerateSegmentError as exc:
            raise OptimizationError(f"step {step}: {exc}", trace) from exc
        g = lv.grad if mask is None else np.where(mask, lv.grad, 0.0)
        gnorm = float(np.linalg.norm(g))
        trace.append(step, lv, gnorm)
        if not (math.isfinite(lv.value) and math.isfinite(gnorm)):
            raise OptimizationError(f"non-finite loss or gradient at step {step}", trace)
        if sched.log_every and step % sched.log_every == 0:
            log.info("step %d loss %.6g |g| %.3g", step, lv.value, gnorm)
        if lv.value == 0.0 or gnorm == 0.0:
            trace.converged = True
            break
        if prev is not None and sched.convergence_tol > 0:
            if abs(prev - lv.value) <= sched.convergence_tol * max(abs(prev), 1e-300):
                trace.converged = True
                break
        if step == sched.step_count:
            break
        prev = lv.value
        x = opt.step(x, g, mask)
    return x, trace


def _root_mask(shape) -> np.ndarray:
    mask = np.ones(shape, dtype=bool)
    mask[:, 0] = False
    return mask


def fit_hairstyle(init: Hairstyle, target: Hairstyle, cfg: LossConfig = LossConfig(),
                  sched: OptimSchedule = OptimSchedule(), freeze_roots: bool = False
                  ) -> tuple[Hairstyle, OptimTrace]:
    """Fit strand points to a target hairstyle under the strand fitting loss."""
    if init.points.shape != target.points.shape:
        raise ValueError(f"shape mismatch: {init.points.shape} vs target {target.points.shape}")

    def objective(x):
        return loss_fit(init.with_points(x), target, cfg.lambda_ori_fit, cfg.lambda_cur_fit)

    mask = _root_mask(init.points.shape) if freeze_roots else None
    x, trace = run_adam(init.points, objective, sched, mask)
    trace.result = init.with_points(x)
    return trace.result, trace


def optimize_geometry(init: Hairstyle, cfg: LossConfig = LossConfig(),
                      sources: GeometrySources | dict | None = None,
                      sched: OptimSchedule = OptimSchedule(), freeze_roots: bool = True
                      ) -> tuple[Hairstyle, OptimTrace]:
    """Minimize the regularized hair geometry objective (roots frozen by default)."""
    if isinstance(sources, dict):
        sources = GeometrySources(**sources)

    def objective(x):
        return loss_hair_geo(init.with_points(x), cfg, sources)

    mask = _root_mask(init.points.shape) if freeze_roots else None
    x, trace = run_adam(init.points, objective, sched, mask)
    trace.result = init.with_points(x)
    return trace.result, trace
