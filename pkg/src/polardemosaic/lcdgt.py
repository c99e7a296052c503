"""Ground truth from LCD captures: ambient removal, homography, AoLP transport,
histogram matching and estimation of the screen polarizer angle.

Points are (x, y) = (column, row) with pixel centers at integer coordinates.
The homography maps screen pixels to camera pixels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .imagecore import PFA, MosaicedImage, PlanarImage, read_image, write_pfm, write_pgm
from .mosaic import RandomFieldConfig, naive_demosaic, polarizer_intensity_map, random_smooth_field
from .stokes import aolp_map, dolp_map, wrap_angle


class RankDeficient(ValueError):
    pass


class PointAtInfinity(ValueError):
    pass


@dataclass(frozen=True)
class Correspondence:
    screen_point: tuple[float, float]
    image_point: tuple[float, float]


@dataclass(frozen=True)
class Homography:
    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64).reshape(3, 3)
        if abs(np.linalg.det(h)) < 1e-300:
            raise RankDeficient("singular homography")
        if h[2, 2] != 0:
            h = h / h[2, 2]
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))


@dataclass
class PoseCapture:
    board_raw: MosaicedImage | None
    random_raw: MosaicedImage
    black_raw: MosaicedImage
    displayed: PlanarImage
    correspondences: list[Correspondence]


@dataclass
class TrainingPair:
    mosaic: MosaicedImage
    intensity: PlanarImage
    aolp: PlanarImage
    valid: np.ndarray
    homography: Homography
    reprojection_error: float = 0.0


# ---------------------------------------------------------------------------
# ambient removal


def subtract_black(random_raw: MosaicedImage, black_raw: MosaicedImage) -> MosaicedImage:
    if random_raw.image.shape != black_raw.image.shape:
        raise ValueError("random and black frames differ in size")
    return MosaicedImage(PlanarImage(np.maximum(random_raw.raw - black_raw.raw, 0.0)))


# ---------------------------------------------------------------------------
# homography


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if dist == 0:
        raise RankDeficient("all points coincide")
    s = math.sqrt(2) / dist
    return np.array([[s, 0, -s * centroid[0]], [0, s, -s * centroid[1]], [0, 0, 1]])


def _to_arrays(correspondences):
    src = np.array([c.screen_point for c in correspondences], dtype=np.float64)
    dst = np.array([c.image_point for c in correspondences], dtype=np.float64)
    return src, dst


def estimate_homography(correspondences: Sequence[Correspondence]) -> Homography:
    """Normalized DLT."""
    if len(correspondences) < 4:
        raise RankDeficient(f"need at least 4 correspondences, got {len(correspondences)}")
    src, dst = _to_arrays(correspondences)
    ts, td = _normalizing_transform(src), _normalizing_transform(dst)
    ps = (np.c_[src, np.ones(len(src))] @ ts.T)
    pd = (np.c_[dst, np.ones(len(dst))] @ td.T)
    rows = []
    for (x, y, w), (u, v, t) in zip(ps, pd):
        rows.append([0, 0, 0, -t * x, -t * y, -t * w, v * x, v * y, v * w])
        rows.append([t * x, t * y, t * w, 0, 0, 0, -u * x, -u * y, -u * w])
    a = np.asarray(rows)
    _, sv, vt = np.linalg.svd(a)
    if len(sv) < 8 or sv[7] <= 1e-10 * sv[0]:
        raise RankDeficient("correspondences do not determine a homography")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(h[2, 2]) < 1e-15 * np.abs(h).max():
        return Homography(h / np.abs(h).max())
    return Homography(h)


def project_points(h: Homography | np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply the projective map to an (..., 2) array of points."""
    m = h.h if isinstance(h, Homography) else np.asarray(h, float)
    pts = np.asarray(pts, dtype=np.float64)
    hx = pts[..., 0] * m[0, 0] + pts[..., 1] * m[0, 1] + m[0, 2]
    hy = pts[..., 0] * m[1, 0] + pts[..., 1] * m[1, 1] + m[1, 2]
    hw = pts[..., 0] * m[2, 0] + pts[..., 1] * m[2, 1] + m[2, 2]
    return np.stack([hx / hw, hy / hw], axis=-1)


def project_point(h: Homography | np.ndarray, p) -> np.ndarray:
    m = h.h if isinstance(h, Homography) else np.asarray(h, float)
    hp = m @ np.array([p[0], p[1], 1.0])
    if abs(hp[2]) < 1e-12 * max(np.abs(hp).max(), 1.0):
        raise PointAtInfinity(f"{tuple(p)} maps to infinity")
    return hp[:2] / hp[2]


def homography_jacobian(h: Homography | np.ndarray, p) -> np.ndarray:
    """2x2 derivative of the projection at screen point ``p``."""
    return jacobian_field(h, np.asarray(p, float)[None])[0]


def jacobian_field(h: Homography | np.ndarray, pts: np.ndarray) -> np.ndarray:
    """(..., 2, 2) Jacobians of the projection at an (..., 2) array of points."""
    m = h.h if isinstance(h, Homography) else np.asarray(h, float)
    x, y = pts[..., 0], pts[..., 1]
    hx = m[0, 0] * x + m[0, 1] * y + m[0, 2]
    hy = m[1, 0] * x + m[1, 1] * y + m[1, 2]
    hw = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if np.any(np.abs(hw) < 1e-12):
        raise PointAtInfinity("projection undefined at some points")
    w2 = hw * hw
    j = np.empty(pts.shape[:-1] + (2, 2))
    j[..., 0, 0] = (m[0, 0] * hw - m[2, 0] * hx) / w2
    j[..., 0, 1] = (m[0, 1] * hw - m[2, 1] * hx) / w2
    j[..., 1, 0] = (m[1, 0] * hw - m[2, 0] * hy) / w2
    j[..., 1, 1] = (m[1, 1] * hw - m[2, 1] * hy) / w2
    return j


def reprojection_error(h: Homography, correspondences) -> float:
    src, dst = _to_arrays(correspondences)
    return float(np.linalg.norm(project_points(h, src) - dst, axis=1).mean())


def pixel_grid(height: int, width: int, step: float = 1.0, offset: float = 0.0) -> np.ndarray:
    """(height, width, 2) array of (x, y) sample positions."""
    ys = offset + step * np.arange(height)
    xs = offset + step * np.arange(width)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


# ---------------------------------------------------------------------------
# AoLP transport


def transport_matrices(h: Homography, camera_pts: np.ndarray):
    """J^-T at the screen preimage of each camera point, plus a validity mask."""
    screen = project_points(h.inverse(), camera_pts)
    j = jacobian_field(h, screen)
    det = j[..., 0, 0] * j[..., 1, 1] - j[..., 0, 1] * j[..., 1, 0]
    ok = np.isfinite(det) & (np.abs(det) > 1e-12)
    safe = np.where(ok, det, 1.0)
    # inverse transpose of [[a, b], [c, d]] is [[d, -c], [-b, a]] / det
    jit = np.empty_like(j)
    jit[..., 0, 0] = j[..., 1, 1] / safe
    jit[..., 0, 1] = -j[..., 1, 0] / safe
    jit[..., 1, 0] = -j[..., 0, 1] / safe
    jit[..., 1, 1] = j[..., 0, 0] / safe
    return jit, ok, screen


def _transported_angles(jit: np.ndarray, alpha: float) -> np.ndarray:
    vx = jit[..., 0, 0] * math.cos(alpha) + jit[..., 0, 1] * math.sin(alpha)
    vy = jit[..., 1, 0] * math.cos(alpha) + jit[..., 1, 1] * math.sin(alpha)
    return wrap_angle(np.arctan2(vy, vx))


def transport_aolp_field(h: Homography, alpha: float, out_height: int, out_width: int,
                         camera_pts: np.ndarray | None = None):
    """AoLP seen at every camera pixel for screen light polarized at ``alpha``.

    Returns the angle raster and a mask that is false where the Jacobian is
    singular. Normalizing the transported vector does not change its angle, so
    only the direction is computed.
    """
    if camera_pts is None:
        camera_pts = pixel_grid(out_height, out_width)
    jit, ok, _ = transport_matrices(h, camera_pts)
    phi = np.where(ok, _transported_angles(jit, alpha), 0.0)
    return PlanarImage(phi), ok


# ---------------------------------------------------------------------------
# intensity


def bilinear_sample(image: np.ndarray, pts: np.ndarray):
    """Sample a 2-D image at (x, y) points; returns values and an inside mask."""
    h, w = image.shape
    x, y = pts[..., 0], pts[..., 1]
    inside = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    xc = np.clip(x, 0, w - 1)
    yc = np.clip(y, 0, h - 1)
    x0 = np.clip(np.floor(xc).astype(int), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(yc).astype(int), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx, ty = xc - x0, yc - y0
    top = image[y0, x0] * (1 - tx) + image[y0, x1] * tx
    bottom = image[y1, x0] * (1 - tx) + image[y1, x1] * tx
    return top * (1 - ty) + bottom * ty, inside


def warp_to_camera(displayed: np.ndarray, h: Homography, out_height: int, out_width: int):
    """Inverse-map the displayed image into camera space with bilinear sampling."""
    screen = project_points(h.inverse(), pixel_grid(out_height, out_width))
    values, inside = bilinear_sample(displayed, screen)
    return np.where(inside, values, 0.0), inside


def screen_histogram(values: np.ndarray, bins: int = 256) -> np.ndarray:
    hist, _ = np.histogram(np.clip(values, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return hist


def histogram_match(source: np.ndarray, target_hist: np.ndarray) -> np.ndarray:
    """Monotone transfer of ``source`` (values in [0, 1]) onto a histogram over [0, 1].

    Each source value takes its mid-rank CDF position, which is then inverted
    through the target CDF, interpolated linearly inside each bin.
    """
    src = np.asarray(source, dtype=np.float64)
    target_hist = np.asarray(target_hist, dtype=np.float64)
    total = target_hist.sum()
    if total <= 0:
        raise ValueError("empty target histogram")
    flat = src.reshape(-1)
    if flat.size == 0:
        return src.copy()
    sorted_vals = np.sort(flat)
    below = np.searchsorted(sorted_vals, flat, side="left")
    upto = np.searchsorted(sorted_vals, flat, side="right")
    q = (below + upto) / (2.0 * flat.size)
    edges = np.linspace(0.0, 1.0, len(target_hist) + 1)
    cdf = np.concatenate([[0.0], np.cumsum(target_hist) / total])
    # drop flat CDF stretches so interpolation picks one value per quantile
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    out = np.interp(q, cdf[keep], edges[keep])
    return np.clip(out, 0.0, 1.0).reshape(src.shape)


# ---------------------------------------------------------------------------
# alpha estimation


def quarter_res_centers(height: int, width: int) -> np.ndarray:
    """Camera (x, y) positions of the macro-pixel centers of a (height, width) mosaic."""
    return pixel_grid(height // 2, width // 2, step=2.0, offset=0.5)


def _alpha_residual_terms(poses):
    terms = []
    for pose in poses:
        h, phi_obs = pose[0], np.asarray(pose[1], dtype=np.float64)
        mask = np.isfinite(phi_obs)
        if len(pose) > 2 and pose[2] is not None:
            mask &= np.asarray(pose[2], bool)
        qh, qw = phi_obs.shape
        pts = pixel_grid(qh, qw, step=2.0, offset=0.5)[mask]
        h = h if isinstance(h, Homography) else Homography(h)
        jit, ok, _ = transport_matrices(h, pts)
        obs = phi_obs[mask][ok]
        terms.append((jit[ok], np.cos(2 * obs), np.sin(2 * obs)))
    return terms


def _alpha_cost(terms, alpha: float) -> float:
    cost = 0.0
    for jit, ox, oy in terms:
        phi = _transported_angles(jit, alpha)
        cost += float(((np.cos(2 * phi) - ox) ** 2 + (np.sin(2 * phi) - oy) ** 2).sum())
    return cost


def estimate_alpha(poses, grid: int = 721, tol: float = 1e-10) -> tuple[float, float]:
    """Least-squares polarizer angle over all poses.

    ``poses`` holds ``(H, aolp_quarter_res[, mask])`` tuples; NaN angles are
    ignored. The cost compares doubled-angle unit vectors and is scanned on a
    dense grid over [-pi/2, pi/2) before golden-section refinement. Returns
    (alpha, mean squared residual).
    """
    poses = list(poses)
    if not poses:
        raise ValueError("no poses")
    terms = _alpha_residual_terms(poses)
    n = sum(len(t[1]) for t in terms)
    if n == 0:
        raise ValueError("no valid observations")
    candidates = -math.pi / 2 + math.pi * np.arange(grid) / grid
    costs = np.array([_alpha_cost(terms, a) for a in candidates])
    best = int(np.argmin(costs))
    step = math.pi / grid
    lo, hi = candidates[best] - step, candidates[best] + step
    ratio = (math.sqrt(5) - 1) / 2
    c = hi - ratio * (hi - lo)
    d = lo + ratio * (hi - lo)
    fc, fd = _alpha_cost(terms, c), _alpha_cost(terms, d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - ratio * (hi - lo)
            fc = _alpha_cost(terms, c)
        else:
            lo, c, fc = c, d, fd
            d = lo + ratio * (hi - lo)
            fd = _alpha_cost(terms, d)
    alpha = 0.5 * (lo + hi)
    return wrap_angle(alpha), _alpha_cost(terms, alpha) / n


def naive_aolp_observation(mosaic: MosaicedImage, min_dolp: float = 0.05, min_s0: float = 1e-3):
    """Quarter-resolution AoLP with NaN where the polarization is too weak to read."""
    stokes = naive_demosaic(mosaic).data
    rho, degenerate = dolp_map(stokes[..., 0], stokes[..., 1], stokes[..., 2])
    phi = aolp_map(stokes[..., 1], stokes[..., 2])
    bad = degenerate | (rho < min_dolp) | (stokes[..., 0] < min_s0)
    return np.where(bad, np.nan, phi)


def screen_mask_quarter(h: Homography, screen_shape: tuple[int, int], height: int, width: int) -> np.ndarray:
    """Macro-pixels whose four samples all fall inside the displayed screen."""
    full = camera_screen_mask(h, screen_shape, height, width)
    return full[0::2, 0::2] & full[1::2, 0::2] & full[0::2, 1::2] & full[1::2, 1::2]


def camera_screen_mask(h: Homography, screen_shape: tuple[int, int], height: int, width: int) -> np.ndarray:
    screen = project_points(h.inverse(), pixel_grid(height, width))
    sh, sw = screen_shape
    return (screen[..., 0] >= 0) & (screen[..., 0] <= sw - 1) & (screen[..., 1] >= 0) & (screen[..., 1] <= sh - 1)


# ---------------------------------------------------------------------------
# training pair


def build_training_pair(capture: PoseCapture, alpha: float) -> TrainingPair:
    if not capture.correspondences:
        raise RankDeficient("no correspondences")
    mosaic = subtract_black(capture.random_raw, capture.black_raw)
    h = estimate_homography(capture.correspondences)
    cam_h, cam_w = mosaic.height, mosaic.width
    displayed = capture.displayed.data.mean(axis=2)
    warped, inside = warp_to_camera(displayed, h, cam_h, cam_w)
    s0 = naive_demosaic(mosaic).data[..., 0]
    quarter = inside[0::2, 0::2] & inside[1::2, 0::2] & inside[0::2, 1::2] & inside[1::2, 1::2]
    if not quarter.any():
        raise ValueError("the screen is not visible in the capture")
    target = screen_histogram(s0[quarter])
    intensity = np.zeros((cam_h, cam_w))
    intensity[inside] = histogram_match(warped[inside], target)
    phi, ok = transport_aolp_field(h, alpha, cam_h, cam_w)
    valid = inside & ok
    return TrainingPair(mosaic, PlanarImage(intensity), phi, valid, h, reprojection_error(h, capture.correspondences))


# ---------------------------------------------------------------------------
# capture files


def read_correspondences(path) -> list[Correspondence]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["screen_x", "screen_y", "image_x", "image_y"]
        if reader.fieldnames != expected:
            raise ValueError(f"{path}: header must be {','.join(expected)}")
        for row in reader:
            out.append(Correspondence((float(row["screen_x"]), float(row["screen_y"])),
                                      (float(row["image_x"]), float(row["image_y"]))))
    return out


def write_correspondences(correspondences, path) -> None:
    lines = ["screen_x,screen_y,image_x,image_y"]
    for c in correspondences:
        lines.append(f"{c.screen_point[0]!r},{c.screen_point[1]!r},{c.image_point[0]!r},{c.image_point[1]!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_capture(pose_dir) -> PoseCapture:
    pose_dir = Path(pose_dir)
    board = pose_dir / "board.pgm"
    return PoseCapture(
        MosaicedImage(read_image(board)) if board.exists() else None,
        MosaicedImage(read_image(pose_dir / "random.pgm")),
        MosaicedImage(read_image(pose_dir / "black.pgm")),
        read_image(pose_dir / "displayed.pfm"),
        read_correspondences(pose_dir / "corners.csv"),
    )


def write_capture(capture: PoseCapture, pose_dir) -> None:
    pose_dir = Path(pose_dir)
    pose_dir.mkdir(parents=True, exist_ok=True)
    if capture.board_raw is not None:
        write_pgm(capture.board_raw.image, pose_dir / "board.pgm", maxval=65535)
    write_pgm(capture.random_raw.image, pose_dir / "random.pgm", maxval=65535)
    write_pgm(capture.black_raw.image, pose_dir / "black.pgm", maxval=65535)
    write_pfm(PlanarImage(capture.displayed.data.astype(np.float32)), pose_dir / "displayed.pfm")
    write_correspondences(capture.correspondences, pose_dir / "corners.csv")


def pose_dirs(captures_dir) -> list[Path]:
    dirs = sorted(p for p in Path(captures_dir).iterdir() if p.is_dir() and (p / "corners.csv").exists())
    if not dirs:
        raise FileNotFoundError(f"no pose directories with corners.csv under {captures_dir}")
    return dirs


def alpha_observations(captures: Sequence[PoseCapture]):
    """(H, naive AoLP, screen mask) per pose, ready for :func:`estimate_alpha`."""
    poses = []
    for cap in captures:
        mosaic = subtract_black(cap.random_raw, cap.black_raw)
        h = estimate_homography(cap.correspondences)
        mask = screen_mask_quarter(h, cap.displayed.shape[:2], mosaic.height, mosaic.width)
        poses.append((h, naive_aolp_observation(mosaic), mask))
    return poses


# ---------------------------------------------------------------------------
# synthetic rig


@dataclass
class RigConfig:
    """Parameters of a simulated camera-and-screen setup."""

    camera_shape: tuple[int, int] = (240, 320)
    screen_shape: tuple[int, int] = (300, 400)
    alpha_deg: float = 37.0
    gamma: float = 2.2
    gain: float = 0.9
    ambient_level: float = 0.05
    ambient_aolp_deg: float = -20.0
    ambient_dolp: float = 0.6
    noise_sigma: float = 0.0
    corner_noise_px: float = 0.0
    corner_grid: tuple[int, int] = (6, 8)
    displayed_field: RandomFieldConfig = field(default_factory=lambda: RandomFieldConfig(4, 2.0, 1.5, 0))


def pose_homography(rig: RigConfig, yaw_deg: float, tilt: tuple[float, float] = (0.0, 0.0),
                    scale: float = 0.7) -> Homography:
    """Screen-to-camera map: center, rotate by ``yaw_deg``, scale, add a mild perspective tilt."""
    sh, sw = rig.screen_shape
    ch, cw = rig.camera_shape
    t = math.radians(yaw_deg)
    center_screen = np.array([[1, 0, -(sw - 1) / 2], [0, 1, -(sh - 1) / 2], [0, 0, 1]])
    k = scale * min(ch / sh, cw / sw)
    rot = np.array([[k * math.cos(t), -k * math.sin(t), 0], [k * math.sin(t), k * math.cos(t), 0], [0, 0, 1]])
    persp = np.array([[1, 0, 0], [0, 1, 0], [tilt[0], tilt[1], 1]])
    to_camera = np.array([[1, 0, (cw - 1) / 2], [0, 1, (ch - 1) / 2], [0, 0, 1]])
    return Homography(to_camera @ persp @ rot @ center_screen)


def _camera_stokes(s0, phi, rho):
    return np.stack([s0, s0 * rho * np.cos(2 * phi), s0 * rho * np.sin(2 * phi)], axis=-1)


def simulate_capture(rig: RigConfig, h: Homography, displayed: np.ndarray | None = None, seed: int = 0):
    """Render the random and black frames a PFA camera would record for one pose.

    Returns the capture and the true camera-space (S0, AoLP, screen mask).
    The screen emits fully polarized light at ``alpha`` with intensity
    ``gain * displayed ** gamma``; a weakly polarized ambient reflection is
    present in both frames.
    """
    rng = np.random.default_rng(seed)
    ch, cw = rig.camera_shape
    sh, sw = rig.screen_shape
    if displayed is None:
        cfg = rig.displayed_field
        displayed = random_smooth_field(
            RandomFieldConfig(cfg.num_harmonics, cfg.max_frequency, cfg.amplitude_decay, seed), sh, sw, (0.15, 0.95))
    warped, inside = warp_to_camera(displayed, h, ch, cw)
    s0 = np.where(inside, rig.gain * warped**rig.gamma, 0.0)
    phi, _ = transport_aolp_field(h, math.radians(rig.alpha_deg), ch, cw)
    screen = _camera_stokes(s0, phi.data[..., 0], np.ones_like(s0))
    ambient = _camera_stokes(np.full_like(s0, rig.ambient_level), np.full_like(s0, math.radians(rig.ambient_aolp_deg)),
                             np.full_like(s0, rig.ambient_dolp))
    angles = PFA.angle_grid(ch, cw)

    def expose(stokes):
        raw = polarizer_intensity_map(stokes, angles)
        if rig.noise_sigma:
            raw = raw + rng.normal(0.0, rig.noise_sigma, raw.shape)
        return MosaicedImage(PlanarImage(np.clip(raw, 0.0, 1.0)))

    random_raw = expose(screen + ambient)
    black_raw = expose(ambient)
    gy, gx = rig.corner_grid
    sx = np.linspace(0.1 * (sw - 1), 0.9 * (sw - 1), gx)
    sy = np.linspace(0.1 * (sh - 1), 0.9 * (sh - 1), gy)
    grid = np.stack(np.meshgrid(sx, sy), axis=-1).reshape(-1, 2)
    img = project_points(h, grid)
    if rig.corner_noise_px:
        img = img + rng.normal(0.0, rig.corner_noise_px, img.shape)
    corr = [Correspondence((float(a), float(b)), (float(c), float(d))) for (a, b), (c, d) in zip(grid, img)]
    capture = PoseCapture(None, random_raw, black_raw, PlanarImage(displayed), corr)
    return capture, s0, phi.data[..., 0], inside


DEFAULT_POSES = ((-25.0, (0.0005, 0.0)), (-10.0, (0.0, 0.0008)), (0.0, (0.0, 0.0)),
                 (15.0, (-0.0006, 0.0003)), (30.0, (0.0003, -0.0005)))


def alpha_residual(poses, alpha: float) -> float:
    """Mean squared doubled-angle residual of ``poses`` at a given ``alpha``."""
    terms = _alpha_residual_terms(list(poses))
    n = sum(len(t[1]) for t in terms)
    return _alpha_cost(terms, alpha) / max(n, 1)


def write_synthetic_captures(out_dir, rig: RigConfig = RigConfig(), poses=DEFAULT_POSES, seed: int = 0,
                             flat_display: float | None = None) -> list[Path]:
    """Render one pose directory per (yaw_deg, tilt) entry under ``out_dir``.

    ``flat_display`` shows a uniform gray level instead of a random image.
    """
    out_dir = Path(out_dir)
    written = []
    for k, (yaw, tilt) in enumerate(poses):
        h = pose_homography(rig, yaw, tilt)
        displayed = None if flat_display is None else np.full(rig.screen_shape, float(flat_display))
        capture = simulate_capture(rig, h, displayed=displayed, seed=seed * 1000 + k)[0]
        d = out_dir / f"pose_{k:03d}"
        write_capture(capture, d)
        written.append(d)
    return written
