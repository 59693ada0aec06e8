"""Generator backends: the uniform interface to inpainting, monocular depth,
and remote-region segmentation.

Three implementations: MockBackend synthesizes everything from the procedural
ground-truth world (bit-deterministic, used for verification), HTTPBackend
speaks the JSON-over-HTTP wire protocol to a real model server, and
CachedBackend replays previously stored frames so sessions can be re-run
without touching any server.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from . import io as sfio
from .errors import ConfigError, DimensionMismatchError, GenerationError, TransportError
from .geometry import D_MIN, D_MAX, Intrinsics, Pose
from .mockworld import MockWorld, MockWorldConfig

CONDITION_KINDS = ("scribble", "depth", "segmentation", "canny", "hough", "hed")


@dataclass(frozen=True)
class Condition:
    kind: str
    image: np.ndarray  # (H, W, 3) float32, passed through opaquely

    def __post_init__(self):
        if self.kind not in CONDITION_KINDS:
            raise ConfigError(f"unknown condition kind {self.kind!r}")


@dataclass
class RequestHints:
    """Advisory metadata for oracle backends; real servers never see it."""

    pose: Pose | None = None
    intrinsics: Intrinsics | None = None
    step_index: int | None = None


@dataclass
class GenerationRequest:
    prompt: str = ""
    seed: int = 0
    width: int = 256
    height: int = 256
    init_image: np.ndarray | None = None
    inpaint_mask: np.ndarray | None = None      # 1 = generate
    selection_box: tuple[int, int, int, int] | None = None  # x0, y0, x1, y1 exclusive
    conditions: list[Condition] = field(default_factory=list)
    hints: RequestHints = field(default_factory=RequestHints)

    def __post_init__(self):
        if self.selection_box is not None:
            x0, y0, x1, y1 = self.selection_box
            if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
                raise ConfigError("selection box must lie within image bounds")
        if self.inpaint_mask is not None and self.inpaint_mask.shape != (self.height, self.width):
            raise DimensionMismatchError("inpaint mask dimensions do not match request")


@dataclass
class GenerationResult:
    image: np.ndarray
    backend_id: str
    latency_ms: float = 0.0


@dataclass(frozen=True)
class DepthPerturbation:
    """Models monocular scale/shift ambiguity in correction space: the emitted
    disparity is (true_disparity - beta) / alpha, so downstream alignment must
    discover exactly (alpha, beta) to undo it. Optional Gaussian disparity
    noise on top; skip_initial leaves the session's anchor frame exact."""

    alpha: float = 1.0
    beta: float = 0.0
    sigma: float = 0.0
    skip_initial: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("perturbation alpha must be positive")

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "sigma": self.sigma,
                "skip_initial": self.skip_initial}

    @classmethod
    def from_dict(cls, d) -> "DepthPerturbation":
        return cls(alpha=float(d.get("alpha", 1.0)), beta=float(d.get("beta", 0.0)),
                   sigma=float(d.get("sigma", 0.0)),
                   skip_initial=bool(d.get("skip_initial", True)))


def _require(value, name):
    if value is None:
        raise ConfigError(f"mock backend needs request {name} hint")
    return value


class MockBackend:
    """Oracle backend: 'generates' by rendering the procedural world at the
    request's pose hint. Pure function of (world config, request)."""

    def __init__(self, world_cfg: MockWorldConfig,
                 depth_perturb: DepthPerturbation = DepthPerturbation(),
                 remote_labels: tuple[str, ...] = ("sky",)):
        self.world = MockWorld(world_cfg)
        self.depth_perturb = depth_perturb
        self.remote_labels = remote_labels
        self.backend_id = f"mock:{world_cfg.seed}"
        self._cache: dict[bytes, tuple] = {}

    # -- ground truth plumbing -------------------------------------------------

    def _truth(self, pose: Pose, intr: Intrinsics):
        key = hashlib.sha256(pose.matrix().tobytes() + json.dumps(intr.to_dict()).encode()).digest()
        if key not in self._cache:
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[key] = self.world.render(pose, intr)
        return self._cache[key]

    def _dither(self, req: GenerationRequest, shape) -> np.ndarray:
        """Sub-quantum per-pixel offset keyed by seed/prompt/conditions: keeps
        generated pixels within 1/255 of truth while making distinct seeds
        produce bitwise-distinct output."""
        h = hashlib.sha256()
        h.update(str(req.seed).encode())
        h.update(req.prompt.encode())
        for c in req.conditions:
            h.update(c.kind.encode())
            h.update(np.ascontiguousarray(c.image).tobytes())
        rng = np.random.default_rng(np.frombuffer(h.digest()[:8], dtype=np.uint64)[0])
        return rng.uniform(-0.5, 0.5, shape) / 255.0

    def _generate_at(self, req: GenerationRequest) -> np.ndarray:
        pose = _require(req.hints.pose, "pose")
        intr = _require(req.hints.intrinsics, "intrinsics")
        truth, _, _ = self._truth(pose, intr)
        jittered = truth.astype(np.float64) + self._dither(req, truth.shape)
        return sfio.quantize_image(jittered)

    # -- the four backend operations --------------------------------------------

    def generate_initial(self, req: GenerationRequest) -> GenerationResult:
        start = time.perf_counter()
        image = self._generate_at(req)
        return GenerationResult(image, self.backend_id,
                                (time.perf_counter() - start) * 1e3)

    def inpaint_image(self, req: GenerationRequest) -> GenerationResult:
        start = time.perf_counter()
        if req.init_image is None or req.inpaint_mask is None:
            raise ConfigError("inpaint requires init_image and inpaint_mask")
        mask = np.asarray(req.inpaint_mask) > 0
        if not mask.any():
            return GenerationResult(req.init_image.copy(), self.backend_id)
        generated = self._generate_at(req)
        out = np.where(mask[..., None], generated, req.init_image).astype(np.float32)
        return GenerationResult(out, self.backend_id,
                                (time.perf_counter() - start) * 1e3)

    def estimate_depth(self, image: np.ndarray, hints: RequestHints) -> np.ndarray:
        pose = _require(hints.pose, "pose")
        intr = _require(hints.intrinsics, "intrinsics")
        _, depth, _ = self._truth(pose, intr)
        pp = self.depth_perturb
        if pp.skip_initial and hints.step_index == 0:
            return depth.copy()
        disp = 1.0 / np.maximum(depth.astype(np.float64), D_MIN)
        disp = (disp - pp.beta) / pp.alpha
        if pp.sigma > 0:
            key = hashlib.sha256(pose.matrix().tobytes() + b"noise").digest()[:8]
            rng = np.random.default_rng(np.frombuffer(key, dtype=np.uint64)[0])
            disp = disp + rng.normal(0.0, pp.sigma, disp.shape)
        disp = np.clip(disp, 1.0 / D_MAX, 1.0 / D_MIN)
        return (1.0 / disp).astype(np.float32)

    def segment_remote(self, image: np.ndarray, labels, hints: RequestHints) -> np.ndarray:
        pose = _require(hints.pose, "pose")
        intr = _require(hints.intrinsics, "intrinsics")
        _, _, remote = self._truth(pose, intr)
        return remote.copy()

    def describe(self):
        return {"kind": "mock", "world": self.world.cfg.to_dict(),
                "depth_perturb": self.depth_perturb.to_dict()}


class HTTPBackend:
    """Client for the JSON wire protocol (all binary payloads base64 PNG/PFM)."""

    def __init__(self, base_url: str, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.backend_id = f"http:{self.base_url}"

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = requests.post(self.base_url + path, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"backend unreachable: {exc}") from exc
        if resp.status_code >= 400:
            try:
                message = resp.json().get("error", resp.text)
            except ValueError:
                message = resp.text
            raise GenerationError(f"backend refused ({resp.status_code}): {message}")
        return resp.json()

    @staticmethod
    def _conditions_payload(req: GenerationRequest):
        return [{"kind": c.kind,
                 "image_png": base64.b64encode(sfio.encode_png_bytes(c.image)).decode()}
                for c in req.conditions]

    def generate_initial(self, req: GenerationRequest) -> GenerationResult:
        start = time.perf_counter()
        payload = {"prompt": req.prompt, "seed": req.seed,
                   "width": req.width, "height": req.height,
                   "conditions": self._conditions_payload(req)}
        out = self._post("/v1/generate", payload)
        image = sfio.decode_png_bytes(base64.b64decode(out["image_png"]))
        return GenerationResult(image, self.backend_id,
                                (time.perf_counter() - start) * 1e3)

    def inpaint_image(self, req: GenerationRequest) -> GenerationResult:
        start = time.perf_counter()
        if req.init_image is None or req.inpaint_mask is None:
            raise ConfigError("inpaint requires init_image and inpaint_mask")
        mask = np.asarray(req.inpaint_mask) > 0
        if not mask.any():
            return GenerationResult(req.init_image.copy(), self.backend_id)
        payload = {"image_png": base64.b64encode(sfio.encode_png_bytes(req.init_image)).decode(),
                   "mask_png": base64.b64encode(sfio.encode_mask_png_bytes(req.inpaint_mask)).decode(),
                   "prompt": req.prompt, "seed": req.seed,
                   "conditions": self._conditions_payload(req)}
        out = self._post("/v1/inpaint", payload)
        image = sfio.decode_png_bytes(base64.b64decode(out["image_png"]))
        # masked-inpainting contract: never let a server leak outside the mask
        image = np.where(mask[..., None], image, req.init_image).astype(np.float32)
        return GenerationResult(image, self.backend_id,
                                (time.perf_counter() - start) * 1e3)

    def estimate_depth(self, image: np.ndarray, hints: RequestHints) -> np.ndarray:
        payload = {"image_png": base64.b64encode(sfio.encode_png_bytes(image)).decode()}
        out = self._post("/v1/depth", payload)
        depth = sfio.decode_pfm_bytes(base64.b64decode(out["depth_pfm"]))
        return np.clip(depth, D_MIN, D_MAX).astype(np.float32)

    def segment_remote(self, image: np.ndarray, labels, hints: RequestHints) -> np.ndarray:
        payload = {"image_png": base64.b64encode(sfio.encode_png_bytes(image)).decode(),
                   "labels": list(labels)}
        out = self._post("/v1/segment", payload)
        return sfio.decode_mask_png_bytes(base64.b64decode(out["mask_png"]))

    def describe(self):
        return {"kind": "http", "url": self.base_url, "timeout": self.timeout}


class CachedBackend:
    """Replays a session's stored frames in call order; lets trajectories
    recorded against any backend re-run without a server."""

    def __init__(self, frames_dir):
        from pathlib import Path

        self.frames_dir = Path(frames_dir)
        self.backend_id = f"cache:{self.frames_dir}"
        self._calls = {"image": 0, "depth": 0, "segment": 0}

    def _step_path(self, idx: int, suffix: str):
        path = self.frames_dir / f"{idx:04d}_{suffix}"
        if not path.exists():
            raise GenerationError(f"no cached raster {path.name}")
        return path

    def _next_image(self, req: GenerationRequest) -> np.ndarray:
        idx = self._calls["image"]
        self._calls["image"] += 1
        return sfio.read_image_png(self._step_path(idx, "rgb.png"))

    def generate_initial(self, req: GenerationRequest) -> GenerationResult:
        return GenerationResult(self._next_image(req), self.backend_id)

    def inpaint_image(self, req: GenerationRequest) -> GenerationResult:
        if req.inpaint_mask is not None and not (np.asarray(req.inpaint_mask) > 0).any():
            self._calls["image"] += 1
            return GenerationResult(req.init_image.copy(), self.backend_id)
        return GenerationResult(self._next_image(req), self.backend_id)

    def estimate_depth(self, image: np.ndarray, hints: RequestHints) -> np.ndarray:
        idx = self._calls["depth"]
        self._calls["depth"] += 1
        return sfio.read_pfm(self._step_path(idx, "pred_depth.pfm"))

    def segment_remote(self, image: np.ndarray, labels, hints: RequestHints) -> np.ndarray:
        idx = self._calls["segment"]
        self._calls["segment"] += 1
        return sfio.read_mask_png(self._step_path(idx, "remote.png"))

    def describe(self):
        return {"kind": "cache", "dir": str(self.frames_dir)}


def make_backend(spec, base_dir=None):
    """Backend factory from a config descriptor: 'mock', an http(s) URL,
    'cache:DIR', or an already-parsed dict."""
    if isinstance(spec, dict):
        kind = spec.get("kind", "mock")
        if kind == "mock":
            world = MockWorldConfig.from_dict(spec.get("world", {}))
            perturb = DepthPerturbation.from_dict(spec.get("depth_perturb", {}))
            return MockBackend(world, perturb)
        if kind == "http":
            return HTTPBackend(spec["url"], float(spec.get("timeout", 120.0)))
        if kind == "cache":
            return CachedBackend(spec["dir"])
        raise ConfigError(f"unknown backend kind {kind!r}")
    if spec == "mock":
        return MockBackend(MockWorldConfig())
    if isinstance(spec, str) and spec.startswith("cache:"):
        return CachedBackend(spec[len("cache:"):])
    if isinstance(spec, str) and spec.startswith(("http://", "https://")):
        return HTTPBackend(spec)
    raise ConfigError(f"unrecognized backend spec {spec!r}")
