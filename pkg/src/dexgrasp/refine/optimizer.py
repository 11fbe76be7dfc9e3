"""Adam descent over the 22 pose parameters with a step-decayed learning rate."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import OptimizationDiverged
from ..geometry.cloud import OrientedPointCloud
from ..hand.kinematics import N_PARAMS, GraspPose, HandKinematics, clamp_to_limits
from ..hand.model import contact_probability, forward_kinematics
from .energies import ContactTargets, EnergyBreakdown, EnergyWeights, total_energy


@dataclass(frozen=True)
class OptimizerConfig:
    iterations: int = 600
    learning_rate: float = 0.005
    decay: float = 0.98
    decay_every: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    sigma: float = 0.02  # contact-map width (m)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


def learning_rate(cfg: OptimizerConfig, iteration: int) -> float:
    """Rate used at 1-based ``iteration``: lr0 * decay ** floor(iteration / decay_every)."""
    return cfg.learning_rate * cfg.decay ** (iteration // cfg.decay_every)


@dataclass
class OptimizeResult:
    pose: GraspPose
    energy: EnergyBreakdown
    initial_energy: EnergyBreakdown
    best_iteration: int
    trace: List[dict] = field(default_factory=list)

    def write_trace(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _record(it, lr, e: EnergyBreakdown):
    return {"iteration": it, "lr": lr, "terms": {k: e.terms[k] for k in sorted(e.terms)}, "total": e.total}


def _evaluate(kin, pose, targets, obj, weights, sigma):
    surf = forward_kinematics(kin, pose)
    cmap = contact_probability(surf, obj, sigma)  # treated as constant within the step
    return total_energy(kin, pose, targets, obj, weights, contact_map=cmap, surface=surf)


def optimize(kin: HandKinematics, initial: GraspPose, targets: ContactTargets, obj: OrientedPointCloud,
             weights: EnergyWeights = EnergyWeights(), cfg: OptimizerConfig = OptimizerConfig(),
             seed: int = 0) -> OptimizeResult:
    """Refine ``initial`` and return the lowest-energy iterate seen.

    The rotation is stepped as a world-frame rotation vector composed onto the
    current quaternion, so Adam always works on a local chart at the origin.
    The loop is fully deterministic; ``seed`` is accepted for interface
    symmetry with the stochastic stages and does not alter the result.
    """
    del seed
    pose = initial.with_theta(clamp_to_limits(kin, initial.theta))
    e = _evaluate(kin, pose, targets, obj, weights, cfg.sigma)
    if not np.isfinite(e.total):
        raise OptimizationDiverged("initial energy is not finite", trace=[_record(0, 0.0, e)])
    init_e, best_pose, best_e, best_it = e, pose, e, 0
    m = np.zeros(N_PARAMS)
    v = np.zeros(N_PARAMS)
    trace: List[dict] = []
    for t in range(1, cfg.iterations + 1):
        lr = learning_rate(cfg, t)
        g = e.gradient
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1 ** t)
        vhat = v / (1 - cfg.beta2 ** t)
        step = -lr * mhat / (np.sqrt(vhat) + cfg.eps)
        pose = pose.step(step)
        pose = pose.with_theta(clamp_to_limits(kin, pose.theta))
        e = _evaluate(kin, pose, targets, obj, weights, cfg.sigma)
        trace.append(_record(t, lr, e))
        if not np.isfinite(e.total) or not np.all(np.isfinite(e.gradient)):
            raise OptimizationDiverged(f"energy became non-finite at iteration {t}", trace=trace)
        if e.total < best_e.total:
            best_pose, best_e, best_it = pose, e, t
    return OptimizeResult(best_pose, best_e, init_e, best_it, trace)
