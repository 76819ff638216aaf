"""Rigid registration between corresponded 3D point sets.

The inner solver is the SVD of the weighted cross-covariance with a
reflection sign-fix; RANSAC wraps it with minimal 3-point samples and an
adaptive iteration bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose

# Relative threshold on the cross-covariance spectrum below which the
# rotation is not determined (coincident or collinear configurations).
_DEGENERACY_RTOL = 1e-9


class RegistrationError(Exception):
    pass


class DegenerateConfiguration(RegistrationError):
    """Correspondences do not determine a unique rigid transform."""


class NoConsensus(RegistrationError):
    """RANSAC found no model with enough inliers."""


@dataclass(frozen=True)
class Correspondence:
    source_point: tuple
    target_point: tuple


def stack_correspondences(correspondences):
    src = np.array([c.source_point for c in correspondences], dtype=float)
    dst = np.array([c.target_point for c in correspondences], dtype=float)
    return src, dst


@dataclass(frozen=True)
class RansacConfig:
    inlier_threshold: float = 0.010
    confidence: float = 0.99
    max_iterations: int = 500
    min_inliers: int = 10

    def __post_init__(self):
        if self.inlier_threshold <= 0:
            raise RegistrationError("inlier_threshold must be positive")
        if not (0.0 < self.confidence < 1.0):
            raise RegistrationError("confidence must be in (0, 1)")
        if self.max_iterations < 1 or self.min_inliers < 1:
            raise RegistrationError("iteration/inlier minimums must be positive")


@dataclass
class RegistrationResult:
    pose: Pose
    inlier_mask: np.ndarray
    iterations_used: int


def estimate_rigid(source, target, weights=None) -> Pose:
    """Least-squares rigid transform T with T @ source ~= target.

    Minimizes sum_i w_i ||R s_i + t - t_i||^2 over rotations with
    det(R) = +1 (reflections are sign-corrected away).
    """
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    dst = np.asarray(target, dtype=float).reshape(-1, 3)
    if src.shape != dst.shape or len(src) < 3:
        raise DegenerateConfiguration(
            f"need >= 3 matched pairs, got {src.shape} vs {dst.shape}"
        )
    if weights is None:
        w = np.ones(len(src))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(src),) or np.any(w < 0) or w.sum() <= 0:
            raise RegistrationError("weights must be non-negative with positive sum")
    w = w / w.sum()
    mu_s = w @ src
    mu_d = w @ dst
    cs = src - mu_s
    cd = dst - mu_d
    h = (cs * w[:, None]).T @ cd
    u, sing, vt = np.linalg.svd(h)
    if sing[1] <= sing[0] * _DEGENERACY_RTOL or sing[0] == 0.0:
        raise DegenerateConfiguration(
            "correspondences are collinear or coincident"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return Pose(r, mu_d - r @ mu_s)


def _residuals(pose: Pose, src, dst):
    return np.linalg.norm(src @ pose.rotation.T + pose.translation - dst, axis=1)


def ransac_register(source, target, cfg: RansacConfig = RansacConfig(),
                    seed: int = 0) -> RegistrationResult:
    """Robust registration: 3-point hypotheses scored by inlier count.

    Stops adaptively once 1 - (1 - w^3)^k >= confidence for the best
    inlier ratio w seen so far, then refits on all inliers. Deterministic
    for a given seed.
    """
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    dst = np.asarray(target, dtype=float).reshape(-1, 3)
    n = len(src)
    if n < cfg.min_inliers:
        raise NoConsensus(
            f"{n} correspondences < min_inliers {cfg.min_inliers}"
        )
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 9)))
    best_count = 0
    best_mask = None
    needed = cfg.max_iterations
    k = 0
    while k < min(needed, cfg.max_iterations):
        k += 1
        idx = rng.choice(n, size=3, replace=False)
        try:
            pose = estimate_rigid(src[idx], dst[idx])
        except DegenerateConfiguration:
            continue
        mask = _residuals(pose, src, dst) < cfg.inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            ratio = count / n
            p_good = ratio**3
            if p_good >= 1.0:
                break
            if p_good > 0.0:
                needed = int(
                    np.ceil(np.log(1.0 - cfg.confidence) / np.log(1.0 - p_good))
                )
    if best_mask is None or best_count < cfg.min_inliers:
        raise NoConsensus(
            f"best consensus {best_count} < min_inliers {cfg.min_inliers}"
        )
    pose = estimate_rigid(src[best_mask], dst[best_mask])
    final_mask = _residuals(pose, src, dst) < cfg.inlier_threshold
    if int(final_mask.sum()) >= cfg.min_inliers:
        pose = estimate_rigid(src[final_mask], dst[final_mask])
    else:
        final_mask = best_mask
    return RegistrationResult(pose, final_mask, k)
