"""SE(3) poses, pinhole projection, pose information matrices, Gauss-Newton.

The pose tracking objective is the weighted least squares

    min_x  sum_i || h(x, p_i) - z_i ||^2_{W_i}

with ``h`` the world-to-camera rigid transform followed by pinhole
projection.  To first order one feature match contributes the 6x6 pose
information increment ``H_i^T W_i H_i`` where ``H_i`` is the 2x6 measurement
Jacobian and ``W_i`` the 2x2 residual information.  The value of a match set
is scored by the log-determinant of the accumulated (damped) information
matrix, which is monotone and submodular over match sets.

Pose perturbations are parameterized as a right-multiplied exponential of a
6-vector ``delta = (omega, v)``, rotation first:

    R' = R expm([omega]x),  t' = R v + t

and all Jacobians are taken with respect to that parameterization at
``delta = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEPTH_MIN = 1e-6
DEFAULT_DAMPING = 1e-3
DEFAULT_PIXEL_SIGMA = 1.0


class BehindCameraError(ValueError):
    """Point does not project: camera-frame depth <= DEPTH_MIN."""


class SingularGeometryError(RuntimeError):
    """Normal equations are singular (degenerate match geometry)."""


def skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues formula; exact for all angles."""
    theta = float(np.linalg.norm(omega))
    K = skew(omega)
    if theta < 1e-12:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic rotation angle of a rotation matrix, radians."""
    c = (float(np.trace(r)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform: x_cam = R @ p_world + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(r) < 0.0:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    def transform(self, points: np.ndarray) -> np.ndarray:
        """World points (..., 3) to camera frame."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def perturbed(self, delta: np.ndarray) -> "CameraPose":
        """Right-multiplied update by delta = (omega, v)."""
        delta = np.asarray(delta, dtype=float).reshape(6)
        r = self.rotation @ so3_exp(delta[:3])
        # Re-orthonormalize to keep the constructor's tolerance after long chains.
        u, _, vt = np.linalg.svd(r)
        r = u @ vt
        t = self.rotation @ delta[3:] + self.translation
        return CameraPose(r, t)

    def error_to(self, other: "CameraPose") -> tuple[float, float]:
        """(rotation angle rad, camera-center distance m) between two poses."""
        angle = rotation_angle(self.rotation @ other.rotation.T)
        dist = float(np.linalg.norm(self.camera_center() - other.camera_center()))
        return angle, dist


def look_at_pose(position: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> CameraPose:
    """Pose with camera z-axis toward ``target`` from ``position``."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera position coincides with look-at target")
    forward = forward / norm
    up = np.asarray(up, dtype=float)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    r = np.stack([right, down, forward])
    t = -r @ position
    return CameraPose(r, t)


@dataclass(frozen=True, slots=True)
class PinholeModel:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


@dataclass(eq=False)
class FeatureMatch:
    """One 3D-2D correspondence with its residual information matrix."""

    point_id: int
    world_point: np.ndarray
    measurement: np.ndarray
    residual_information: np.ndarray = field(
        default_factory=lambda: np.eye(2) / DEFAULT_PIXEL_SIGMA**2
    )

    def __post_init__(self) -> None:
        self.world_point = np.asarray(self.world_point, dtype=float).reshape(3)
        self.measurement = np.asarray(self.measurement, dtype=float).reshape(2)
        w = np.asarray(self.residual_information, dtype=float).reshape(2, 2)
        if np.max(np.abs(w - w.T)) > 1e-12:
            raise ValueError("residual information must be symmetric")
        if np.any(np.linalg.eigvalsh(w) <= 0.0):
            raise ValueError("residual information must be positive definite")
        self.residual_information = w


def project(pose: CameraPose, model: PinholeModel, point: np.ndarray) -> np.ndarray | None:
    """Pixel coordinates, or None when the point is behind the camera."""
    xc = pose.transform(np.asarray(point, dtype=float).reshape(3))
    if xc[2] <= DEPTH_MIN:
        return None
    return np.array(
        [model.fx * xc[0] / xc[2] + model.cx, model.fy * xc[1] / xc[2] + model.cy]
    )


def measurement_jacobian(pose: CameraPose, model: PinholeModel, point: np.ndarray) -> np.ndarray:
    """2x6 Jacobian of ``project`` w.r.t. the pose perturbation (omega, v)."""
    p = np.asarray(point, dtype=float).reshape(3)
    xc = pose.transform(p)
    z = xc[2]
    if z <= DEPTH_MIN:
        raise BehindCameraError(f"depth {z} <= {DEPTH_MIN}")
    j_proj = np.array(
        [
            [model.fx / z, 0.0, -model.fx * xc[0] / z**2],
            [0.0, model.fy / z, -model.fy * xc[1] / z**2],
        ]
    )
    d_cam = np.hstack([-pose.rotation @ skew(p), pose.rotation])
    return j_proj @ d_cam


def pose_info_single(match: FeatureMatch, pose: CameraPose, model: PinholeModel) -> np.ndarray:
    """Rank <= 2 symmetric PSD pose information increment of one match."""
    h = measurement_jacobian(pose, model, match.world_point)
    omega = h.T @ match.residual_information @ h
    return 0.5 * (omega + omega.T)


def _logdet_psd(matrix: np.ndarray) -> float:
    try:
        chol = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise SingularGeometryError("information matrix not positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def logdet_information(info_sum: np.ndarray, damping: float = DEFAULT_DAMPING) -> float:
    """log det(info_sum + damping * I); finite for any PSD input."""
    if damping <= 0.0:
        raise ValueError("damping must be positive")
    return _logdet_psd(info_sum + damping * np.eye(6))


def logdet_metric(
    matches,
    pose: CameraPose,
    model: PinholeModel,
    damping: float = DEFAULT_DAMPING,
) -> float:
    """Damped log-determinant of the accumulated pose information."""
    total = np.zeros((6, 6))
    for match in matches:
        total += pose_info_single(match, pose, model)
    return logdet_information(total, damping)


# ---------------------------------------------------------------------------
# Batched evaluation used by the optimizer and the selection objective.


def batch_project(pose: CameraPose, model: PinholeModel, points: np.ndarray):
    """Vectorized projection: returns (pixels (n,2), depths (n,), valid (n,))."""
    xc = pose.transform(points)
    depths = xc[:, 2]
    valid = depths > DEPTH_MIN
    safe = np.where(valid, depths, 1.0)
    pixels = np.empty((len(points), 2))
    pixels[:, 0] = model.fx * xc[:, 0] / safe + model.cx
    pixels[:, 1] = model.fy * xc[:, 1] / safe + model.cy
    return pixels, depths, valid


def batch_jacobians(pose: CameraPose, model: PinholeModel, points: np.ndarray) -> np.ndarray:
    """Vectorized 2x6 Jacobians, (n, 2, 6); rows for invalid depths are zero."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    xc = pose.transform(points)
    z = xc[:, 2]
    valid = z > DEPTH_MIN
    zs = np.where(valid, z, 1.0)
    j_proj = np.zeros((n, 2, 3))
    j_proj[:, 0, 0] = model.fx / zs
    j_proj[:, 0, 2] = -model.fx * xc[:, 0] / zs**2
    j_proj[:, 1, 1] = model.fy / zs
    j_proj[:, 1, 2] = -model.fy * xc[:, 1] / zs**2
    # d(x_cam)/d(omega) = -R [p]x  per point, d(x_cam)/dv = R.
    px, py, pz = points[:, 0], points[:, 1], points[:, 2]
    sk = np.zeros((n, 3, 3))
    sk[:, 0, 1] = -pz
    sk[:, 0, 2] = py
    sk[:, 1, 0] = pz
    sk[:, 1, 2] = -px
    sk[:, 2, 0] = -py
    sk[:, 2, 1] = px
    d_cam = np.empty((n, 3, 6))
    d_cam[:, :, :3] = -np.einsum("ab,nbc->nac", pose.rotation, sk)
    d_cam[:, :, 3:] = pose.rotation
    h = np.einsum("nab,nbc->nac", j_proj, d_cam)
    h[~valid] = 0.0
    return h


def batch_information(
    pose: CameraPose,
    model: PinholeModel,
    points: np.ndarray,
    residual_informations: np.ndarray,
) -> np.ndarray:
    """Per-match 6x6 information increments H^T W H, (n, 6, 6)."""
    h = batch_jacobians(pose, model, points)
    return np.einsum("nia,nij,njb->nab", h, residual_informations, h)


def write_projection_fixtures_csv(path, rows) -> None:
    """Fixture rows of (pose, point, pixel) as 17 numbers: R row-major, t, p, z."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"r{i}{j}" for i in range(3) for j in range(3)]
        header += ["tx", "ty", "tz", "px", "py", "pz", "u", "v"]
        writer.writerow(header)
        for pose, point, pixel in rows:
            numbers = (
                list(pose.rotation.ravel())
                + list(pose.translation)
                + list(np.asarray(point, dtype=float))
                + list(np.asarray(pixel, dtype=float))
            )
            writer.writerow([repr(float(x)) for x in numbers])


def read_projection_fixtures_csv(path) -> list[tuple[CameraPose, np.ndarray, np.ndarray]]:
    import csv

    rows = []
    with open(path) as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            numbers = [float(x) for x in row]
            pose = CameraPose(np.array(numbers[:9]).reshape(3, 3), np.array(numbers[9:12]))
            rows.append((pose, np.array(numbers[12:15]), np.array(numbers[15:17])))
    return rows


@dataclass(frozen=True, slots=True)
class GaussNewtonResult:
    pose: CameraPose
    final_cost: float
    iterations: int


def _stack_matches(matches):
    points = np.stack([m.world_point for m in matches])
    measurements = np.stack([m.measurement for m in matches])
    weights = np.stack([m.residual_information for m in matches])
    return points, measurements, weights


def _weighted_cost(residuals: np.ndarray, weights: np.ndarray, valid: np.ndarray) -> float:
    r = residuals[valid]
    w = weights[valid]
    return float(np.einsum("ni,nij,nj->", r, w, r))


def gauss_newton_refine(
    initial_pose: CameraPose,
    model: PinholeModel,
    matches,
    max_iters: int = 20,
    tol: float = 1e-12,
) -> GaussNewtonResult:
    """Minimize the weighted reprojection cost from ``initial_pose``.

    Matches that fall behind the camera at the current iterate are excluded
    from that iteration.  Steps that would increase the cost are halved (up
    to 12 times) before giving up; accepted iterations therefore never
    increase the cost.  Raises SingularGeometryError when fewer than 3
    matches project or the normal equations cannot be factorized.
    """
    matches = list(matches)
    if len(matches) < 3:
        raise SingularGeometryError(f"need >= 3 matches, got {len(matches)}")
    points, measurements, weights = _stack_matches(matches)

    def cost_of(pose: CameraPose) -> tuple[float, np.ndarray, np.ndarray]:
        pixels, _, valid = batch_project(pose, model, points)
        residuals = pixels - measurements
        return _weighted_cost(residuals, weights, valid), residuals, valid

    pose = initial_pose
    cost, residuals, valid = cost_of(pose)
    iterations = 0
    for _ in range(max_iters):
        if int(valid.sum()) < 3:
            raise SingularGeometryError("fewer than 3 matches project at current pose")
        h = batch_jacobians(pose, model, points)
        h[~valid] = 0.0
        r = np.where(valid[:, None], residuals, 0.0)
        a = np.einsum("nia,nij,njb->ab", h, weights, h)
        g = np.einsum("nia,nij,nj->a", h, weights, r)
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise SingularGeometryError("singular normal equations") from exc
        delta = -np.linalg.solve(chol.T, np.linalg.solve(chol, g))

        step = 1.0
        improved = False
        for _ in range(12):
            candidate = pose.perturbed(step * delta)
            new_cost, new_residuals, new_valid = cost_of(candidate)
            if new_cost <= cost:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        iterations += 1
        decrease = cost - new_cost
        pose, cost, residuals, valid = candidate, new_cost, new_residuals, new_valid
        if decrease < tol:
            break
    return GaussNewtonResult(pose, cost, iterations)
