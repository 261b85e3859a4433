"""Synthetic eye-in-hand vision: a deterministic ray-cast renderer, a hue
component detector with a nearest-neighbor yaw regressor, and the spiral
search behavior used when no target is visible.

The detector/estimator split mirrors a two-stage detection pipeline while
staying training-free: connected hue components stand in for the detector
network and a k-NN index over normalized crops stands in for the yaw head.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import (Pose, CameraModel, PixelBox, pixel_to_point,
                       project_point, NonPositiveDepth)

FAR_DEPTH = 10.0             # m, background depth
HUE_TOL = 15.0               # degrees on the 360 hue circle
MIN_COMPONENT_FRAC = 0.001   # of image pixels
SAT_MIN = 0.2                # hue is meaningless below this saturation
CROP_SIZE = 32
KNN_K = 3
N_SCAN = 32


class NoDetection(RuntimeError):
    pass


class EmptyDataset(ValueError):
    pass


class SearchExhausted(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Scene and renderer


@dataclass(frozen=True)
class Primitive:
    """A flat plate (oriented rectangle at fixed height) or a sphere."""

    kind: str                  # "plate" | "sphere"
    center: np.ndarray         # world, m
    color: np.ndarray          # RGB in [0, 1]
    size: tuple = (0.04, 0.04)  # plate: (x extent, y extent) m
    yaw: float = 0.0           # plate orientation about world z
    radius: float = 0.02       # sphere only

    def __post_init__(self):
        if self.kind not in ("plate", "sphere"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=float))


@dataclass(frozen=True)
class SceneSpec:
    target: tuple              # Primitive set forming the graspable object
    distractors: tuple = ()
    background: np.ndarray = field(
        default_factory=lambda: np.array([0.45, 0.45, 0.45]))
    light: float = 1.0

    @property
    def primitives(self):
        return tuple(self.target) + tuple(self.distractors)


@dataclass
class RenderedImage:
    pixels: np.ndarray         # (H, W, 3) uint8
    depth: np.ndarray          # (H, W) float m


def render_scene(scene: SceneSpec, cam: CameraModel, cam_pose: Pose) -> RenderedImage:
    """Ray-cast the scene from a camera at cam_pose (optical axis +z).

    Per-pixel nearest hit wins; flat shading scaled by the scene light
    level. Deterministic by construction.
    """
    H, W = cam.height, cam.width
    us = (np.arange(W) - cam.u0) / cam.fx
    vs = (np.arange(H) - cam.v0) / cam.fy
    uu, vv = np.meshgrid(us, vs)
    dirs_cam = np.stack([uu, vv, np.ones_like(uu)], axis=-1)      # (H, W, 3)
    R = cam_pose.matrix()
    dirs = dirs_cam @ R.T
    origin = cam_pose.translation

    depth = np.full((H, W), FAR_DEPTH)
    color = np.tile(scene.background, (H, W, 1)).astype(float)

    for prim in scene.primitives:
        if prim.kind == "plate":
            dz = dirs[..., 2]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (prim.center[2] - origin[2]) / dz
            hit = origin + t[..., None] * dirs
            c, s = np.cos(prim.yaw), np.sin(prim.yaw)
            lx = c * (hit[..., 0] - prim.center[0]) + s * (hit[..., 1] - prim.center[1])
            ly = -s * (hit[..., 0] - prim.center[0]) + c * (hit[..., 1] - prim.center[1])
            inside = ((np.abs(lx) <= prim.size[0] / 2)
                      & (np.abs(ly) <= prim.size[1] / 2)
                      & (t > 0) & np.isfinite(t))
            z_cam = t * dirs_cam[..., 2]
            mask = inside & (z_cam < depth)
        else:
            oc = origin - prim.center
            a = np.sum(dirs * dirs, axis=-1)
            b = 2.0 * (dirs @ oc)
            cq = oc @ oc - prim.radius ** 2
            disc = b * b - 4 * a * cq
            ok = disc >= 0
            t = np.full((H, W), np.inf)
            sq = np.sqrt(np.where(ok, disc, 0.0))
            t_near = (-b - sq) / (2 * a)
            t[ok & (t_near > 0)] = t_near[ok & (t_near > 0)]
            z_cam = t * dirs_cam[..., 2]
            mask = np.isfinite(t) & (z_cam < depth)
        depth[mask] = z_cam[mask]
        color[mask] = prim.color

    pixels = np.clip(color * scene.light * 255.0, 0, 255).astype(np.uint8)
    return RenderedImage(pixels=pixels, depth=depth)


# ---------------------------------------------------------------------------
# Hue detection


def rgb_to_hsv(pixels):
    """Vectorized RGB [0,255] uint8 -> (hue deg [0,360), sat, val in [0,1])."""
    rgb = np.asarray(pixels, dtype=float) / 255.0
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    hue = np.zeros_like(mx)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    nz = delta > 1e-12
    idx = nz & (mx == r)
    hue[idx] = 60.0 * (((g - b)[idx] / delta[idx]) % 6.0)
    idx = nz & (mx == g) & (mx != r)
    hue[idx] = 60.0 * ((b - r)[idx] / delta[idx] + 2.0)
    idx = nz & (mx == b) & (mx != r) & (mx != g)
    hue[idx] = 60.0 * ((r - g)[idx] / delta[idx] + 4.0)
    sat = np.where(mx > 1e-12, delta / np.maximum(mx, 1e-12), 0.0)
    return hue, sat, mx


@dataclass(frozen=True)
class Detection:
    box: PixelBox = None
    score: float = 0.0
    none: bool = True

    @property
    def found(self):
        return not self.none


@dataclass(frozen=True)
class HueModel:
    """Target appearance statistics fitted from one labeled frame."""
    hue: float                 # center, degrees
    expected_pixels: float
    tol: float = HUE_TOL
    min_frac: float = MIN_COMPONENT_FRAC


def _hue_mask(img: RenderedImage, model: HueModel):
    hue, sat, _ = rgb_to_hsv(img.pixels)
    dh = np.abs((hue - model.hue + 180.0) % 360.0 - 180.0)
    return (dh <= model.tol) & (sat >= SAT_MIN)


def fit_hue_model(img: RenderedImage, box: PixelBox) -> HueModel:
    """Circular-mean hue of the saturated pixels inside a labeled box."""
    u1, v1 = max(0, int(box.u1)), max(0, int(box.v1))
    u2 = min(img.pixels.shape[1], int(np.ceil(box.u2)))
    v2 = min(img.pixels.shape[0], int(np.ceil(box.v2)))
    crop = img.pixels[v1:v2, u1:u2]
    hue, sat, _ = rgb_to_hsv(crop)
    sel = sat >= SAT_MIN
    if not sel.any():
        raise NoDetection("no saturated pixels in the labeled crop")
    ang = np.deg2rad(hue[sel])
    mean = np.rad2deg(np.arctan2(np.sin(ang).mean(), np.cos(ang).mean())) % 360.0
    return HueModel(hue=float(mean), expected_pixels=float(sel.sum()))


def detect_target(img: RenderedImage, model: HueModel) -> Detection:
    """Largest connected hue component above the size floor, or none."""
    mask = _hue_mask(img, model)
    labels, n = ndimage.label(mask)
    if n == 0:
        return Detection()
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, np.arange(1, n + 1))
    best = int(np.argmax(sizes)) + 1
    if sizes[best - 1] < model.min_frac * mask.size:
        return Detection()
    vs, us = np.nonzero(labels == best)
    box = PixelBox(float(us.min()), float(vs.min()),
                   float(us.max() + 1), float(vs.max() + 1))
    score = float(np.clip(sizes[best - 1] / model.expected_pixels, 0.0, 1.0))
    return Detection(box=box, score=score, none=False)


# ---------------------------------------------------------------------------
# Yaw estimation


def _crop_normalized(pixels, box: PixelBox, size=CROP_SIZE):
    from PIL import Image

    # square crop around the box center: keeps the target's aspect ratio
    # so appearance varies with yaw, not with the box's own shape
    half = 0.55 * max(box.width, box.height)
    cu, cv = box.center
    u1, v1 = max(0, int(cu - half)), max(0, int(cv - half))
    u2 = min(pixels.shape[1], max(u1 + 1, int(np.ceil(cu + half))))
    v2 = min(pixels.shape[0], max(v1 + 1, int(np.ceil(cv + half))))
    crop = pixels[v1:v2, u1:u2]
    gray = np.asarray(Image.fromarray(crop).convert("L").resize(
        (size, size), Image.BILINEAR), dtype=float)
    gray -= gray.mean()
    n = np.linalg.norm(gray)
    return gray / n if n > 1e-12 else gray


@dataclass
class YawEstimator:
    """Immutable after fit; k-NN over normalized grayscale crops."""
    crops: np.ndarray          # (N, size*size)
    yaws: np.ndarray           # (N,)
    k: int = KNN_K

    def predict(self, pixels, box: PixelBox):
        """(yaw, agreement in [0,1]) for the boxed crop."""
        q = _crop_normalized(pixels, box).ravel()
        d = np.linalg.norm(self.crops - q, axis=1)
        kk = min(self.k, len(d))
        nn = np.argpartition(d, kk - 1)[:kk]
        ang = self.yaws[nn]
        # inverse-distance weighting interpolates between the discrete
        # training yaws instead of snapping to the grid
        w = 1.0 / (d[nn] + 1e-6)
        w = w / w.sum()
        s, c = float(w @ np.sin(ang)), float(w @ np.cos(ang))
        yaw = float(np.arctan2(s, c))
        resultant = float(np.hypot(s, c))    # 1 when neighbors agree
        return yaw, resultant

    def save(self, path):
        # pass a handle so numpy keeps the exact filename
        with open(path, "wb") as f:
            np.savez_compressed(f, crops=self.crops, yaws=self.yaws,
                                k=np.array(self.k))

    @staticmethod
    def load(path):
        with np.load(path) as z:
            return YawEstimator(crops=z["crops"], yaws=z["yaws"],
                                k=int(z["k"]))


def fit_yaw_estimator(dataset, k: int = KNN_K) -> YawEstimator:
    if len(dataset.records) == 0:
        raise EmptyDataset("yaw estimator needs at least one record")
    crops = np.stack([_crop_normalized(r.image, r.label.box).ravel()
                      for r in dataset.records])
    yaws = np.array([r.label.yaw for r in dataset.records])
    return YawEstimator(crops=crops, yaws=yaws, k=k)


@dataclass(frozen=True)
class GraspEstimate:
    position: np.ndarray       # camera frame, m
    yaw: float                 # rad
    confidence: float


def estimate_grasp_pose(det: Detection, img: RenderedImage, cam: CameraModel,
                        yaw_estimator: YawEstimator) -> GraspEstimate:
    """Back-project the box center at the median in-box depth and predict
    the grasp yaw from the boxed crop."""
    if det is None or det.none:
        raise NoDetection("cannot estimate a grasp pose without a detection")
    u1, v1 = max(0, int(det.box.u1)), max(0, int(det.box.v1))
    u2 = min(img.depth.shape[1], int(np.ceil(det.box.u2)))
    v2 = min(img.depth.shape[0], int(np.ceil(det.box.v2)))
    patch = img.depth[v1:v2, u1:u2]
    valid = patch[patch < FAR_DEPTH]
    depth = float(np.median(valid if valid.size else patch))
    p = pixel_to_point(cam, det.box.center, depth)
    yaw, agreement = yaw_estimator.predict(img.pixels, det.box)
    return GraspEstimate(position=p, yaw=yaw,
                         confidence=float(det.score * agreement))


# ---------------------------------------------------------------------------
# Search behavior


SCAN_STEP = 0.035            # m of spiral growth per radian


def search_behavior(detect_fn, start_pose: Pose, n_scan: int = N_SCAN,
                    step: float = SCAN_STEP):
    """Expanding-spiral scan at fixed height until detect_fn reports a
    target.

    detect_fn maps a candidate camera pose to a Detection. Returns the
    waypoints actually visited, ending with the first detecting pose; the
    list is empty when the target is visible from the start.
    """
    if detect_fn(start_pose).found:
        return []
    visited = []
    for i in range(1, n_scan + 1):
        theta = 1.1 * i
        r = step * theta
        offset = np.array([r * np.cos(theta), r * np.sin(theta), 0.0])
        pose = Pose(start_pose.rotation, start_pose.translation + offset)
        visited.append(pose)
        if detect_fn(pose).found:
            return visited
    raise SearchExhausted(f"no detection after {n_scan} waypoints")


# ---------------------------------------------------------------------------
# Scene construction helpers


TARGET_COLOR = np.array([0.85, 0.25, 0.10])     # ~10 degree hue
TARGET_TAB_COLOR = np.array([0.55, 0.16, 0.06])  # same hue, darker


def make_handle_scene(grasp_pose: Pose, object_width: float,
                      distractors=(), background=None,
                      light: float = 1.0, table_z: float = None,
                      contrast: float = 1.0) -> SceneSpec:
    """Target plate under the grasp pose: an elongated plate along the
    grasp frame's x axis plus a darker tab on its +x end, so yaw is
    unambiguous over the full circle.

    contrast < 1 blends the target colors toward the background, modeling
    a poorly visible target that produces false-negative detections.
    """
    bg = (np.array([0.45, 0.45, 0.45]) if background is None
          else np.asarray(background, dtype=float))
    # grasp frames are down-facing; the in-plane yaw is what the plate
    # inherits
    Rm = grasp_pose.matrix()
    yaw = float(np.arctan2(Rm[1, 0], Rm[0, 0]))
    z = grasp_pose.translation[2] if table_z is None else table_z
    cx, cy = grasp_pose.translation[0], grasp_pose.translation[1]
    L = 2.2 * object_width
    Wd = 0.8 * object_width
    col_main = bg + contrast * (TARGET_COLOR - bg)
    col_tab = bg + contrast * (TARGET_TAB_COLOR - bg)
    main = Primitive("plate", [cx, cy, z], col_main, size=(L, Wd), yaw=yaw)
    tab_off = np.array([np.cos(yaw), np.sin(yaw), 0.0]) * (0.62 * L)
    tab = Primitive("plate", [cx + tab_off[0], cy + tab_off[1], z + 0.001],
                    col_tab, size=(0.5 * Wd, 1.4 * Wd), yaw=yaw)
    kwargs = {}
    if background is not None:
        kwargs["background"] = np.asarray(background, dtype=float)
    return SceneSpec(target=(main, tab), distractors=tuple(distractors),
                     light=light, **kwargs)
