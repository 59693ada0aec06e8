"""Session orchestration: the iterative render -> composite -> generate ->
estimate -> align -> fuse -> splat loop with preview/commit semantics, undo by
log replay, and a durable on-disk layout.

A step is first *proposed* (pure: nothing persistent changes), then either
*committed* (geometry appended, env updated, record logged, state flushed) or
*rejected* (state provably identical to before the propose). Undo replays the
remaining records from scratch, which is exact because fusion never mutates
old geometry.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as sfio
from .alignment import AlignConfig, AlignmentParams, AlignResult, align
from .backend import (
    Condition,
    GenerationRequest,
    RequestHints,
    make_backend,
)
from .envmap import EnvMap, composite, render_envmap, splat_remote
from .errors import (
    ConfigError,
    NoPendingPreview,
    NothingToUndo,
    PendingPreviewExists,
)
from .fusion import FusionConfig, fuse, mesh_stats
from .geometry import Frame, Intrinsics, Pose, TriMesh
from .rasterize import render_mesh


@dataclass
class SessionConfig:
    intrinsics: Intrinsics
    backend: dict | str = "mock"
    align: AlignConfig = field(default_factory=AlignConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    envmap_enabled: bool = True
    envmap_width: int = 4096
    envmap_height: int = 2048
    remote_labels: tuple = ("sky",)

    def to_dict(self):
        backend = self.backend
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "backend": backend,
            "align": self.align.to_dict(),
            "fusion": self.fusion.to_dict(),
            "envmap": {"enabled": self.envmap_enabled,
                       "width": self.envmap_width, "height": self.envmap_height},
            "remote_labels": list(self.remote_labels),
        }

    @classmethod
    def from_dict(cls, d) -> "SessionConfig":
        env = d.get("envmap", {})
        return cls(
            intrinsics=Intrinsics.from_dict(d["intrinsics"]),
            backend=d.get("backend", "mock"),
            align=AlignConfig.from_dict(d.get("align", {})),
            fusion=FusionConfig.from_dict(d.get("fusion", {})),
            envmap_enabled=bool(env.get("enabled", True)),
            envmap_width=int(env.get("width", 4096)),
            envmap_height=int(env.get("height", 2048)),
            remote_labels=tuple(d.get("remote_labels", ("sky",))),
        )


def _pose_to_dict(pose: Pose):
    return {"rotation": [[float(v) for v in row] for row in pose.rotation],
            "translation": [float(v) for v in pose.translation]}


def _pose_from_dict(d) -> Pose:
    return Pose(np.array(d["rotation"], dtype=np.float64),
                np.array(d["translation"], dtype=np.float64))


@dataclass
class StepRecord:
    index: int
    pose: Pose
    prompt: str
    seed: int
    selection_box: tuple | None
    condition_kinds: list
    image: np.ndarray            # generated frame I_t (8-bit-exact float32)
    pred_depth: np.ndarray       # estimator output
    aligned_depth: np.ndarray    # depth used for fusion
    rendered_depth: np.ndarray   # mesh render at this pose (zeros for step 0)
    rendered_mask: np.ndarray
    content_mask: np.ndarray     # pixels with usable color+depth
    remote_mask: np.ndarray
    params: AlignmentParams
    align_fallback: bool
    clamp_count: int
    created_at: float

    def summary(self):
        return {"index": self.index, "prompt": self.prompt, "seed": self.seed,
                "alignment": {**self.params.to_dict(),
                              "fallback": self.align_fallback,
                              "clamp_count": self.clamp_count},
                "created_at": self.created_at}


@dataclass
class StepPreview:
    record: StepRecord
    composite_image: np.ndarray   # pre-generation render the operator saw
    inpaint_mask: np.ndarray
    diagnostics: dict


class SceneSession:
    """Single-writer authoring session over one mesh + environment map."""

    def __init__(self, config: SessionConfig, backend, session_dir=None):
        self.config = config
        self.backend = backend
        self.mesh = TriMesh.empty()
        self.env = EnvMap(config.envmap_width, config.envmap_height)
        self.steps: list[StepRecord] = []
        self.pending: StepPreview | None = None
        self.dir = Path(session_dir) if session_dir is not None else None

    # ------------------------------------------------------------------ setup

    @classmethod
    def new(cls, config: SessionConfig, first, session_dir=None,
            first_pose: Pose | None = None) -> "SceneSession":
        """Start a session from a GenerationRequest (backend generates frame 0)
        or a user-supplied image array / PNG path."""
        backend = make_backend(config.backend)
        session = cls(config, backend, session_dir)
        pose = first_pose if first_pose is not None else Pose.identity()

        if isinstance(first, GenerationRequest):
            req = session._fill_hints(first, pose, 0)
            image = backend.generate_initial(req).image
            prompt, seed, box = req.prompt, req.seed, req.selection_box
            kinds = [c.kind for c in req.conditions]
        else:
            if isinstance(first, (str, Path)):
                image = sfio.read_image_png(first)
            else:
                image = sfio.quantize_image(np.asarray(first))
            prompt, seed, box, kinds = "", 0, None, []
        image = image.astype(np.float32)

        intr = config.intrinsics
        if image.shape != (intr.height, intr.width, 3):
            raise ConfigError(f"first image shape {image.shape} does not match intrinsics")

        hints = RequestHints(pose=pose, intrinsics=intr, step_index=0)
        pred = backend.estimate_depth(image, hints)
        if config.envmap_enabled:
            remote = backend.segment_remote(image, config.remote_labels, hints)
        else:
            remote = np.zeros((intr.height, intr.width), dtype=np.uint8)

        zeros = np.zeros((intr.height, intr.width), dtype=np.float32)
        record = StepRecord(
            index=0, pose=pose, prompt=prompt, seed=seed, selection_box=box,
            condition_kinds=kinds, image=image, pred_depth=pred,
            aligned_depth=pred, rendered_depth=zeros,
            rendered_mask=zeros.astype(np.uint8),
            content_mask=np.ones((intr.height, intr.width), dtype=np.uint8),
            remote_mask=remote, params=AlignmentParams(1.0, 0.0),
            align_fallback=False, clamp_count=0, created_at=time.time(),
        )
        session._apply_record(record)
        session.steps.append(record)
        session.persist()
        return session

    def _fill_hints(self, req: GenerationRequest, pose: Pose, step_index: int) -> GenerationRequest:
        req.width = self.config.intrinsics.width
        req.height = self.config.intrinsics.height
        if req.selection_box is not None:
            x0, y0, x1, y1 = req.selection_box
            if not (0 <= x0 < x1 <= req.width and 0 <= y0 < y1 <= req.height):
                raise ConfigError("selection box must lie within frame bounds")
        req.hints = RequestHints(pose=pose, intrinsics=self.config.intrinsics,
                                 step_index=step_index)
        return req

    # ------------------------------------------------------------- step cycle

    def render_at(self, pose: Pose):
        """Composite view (mesh over environment) at an arbitrary pose; pure."""
        mesh_out = render_mesh(self.mesh, pose, self.config.intrinsics)
        if self.config.envmap_enabled:
            env_out = render_envmap(pose, self.config.intrinsics, self.env)
        else:
            env_out = (np.zeros_like(mesh_out[0]), np.zeros_like(mesh_out[2]))
        image, mask = composite(mesh_out, env_out)
        return image, mask, mesh_out, env_out

    def propose_step(self, pose: Pose, request: GenerationRequest) -> StepPreview:
        """Run the generation pipeline at `pose` without touching mesh/env."""
        if self.pending is not None:
            raise PendingPreviewExists("a preview is already pending; commit or reject it")
        intr = self.config.intrinsics
        step_index = len(self.steps)
        request = self._fill_hints(request, pose, step_index)

        comp_image, comp_mask, mesh_out, env_out = self.render_at(pose)
        rendered_image, rendered_depth, rendered_mask = mesh_out

        inpaint = (comp_mask == 0).astype(np.uint8)
        if request.selection_box is not None:
            x0, y0, x1, y1 = request.selection_box
            boxed = np.zeros_like(inpaint)
            boxed[y0:y1, x0:x1] = inpaint[y0:y1, x0:x1]
            inpaint = boxed

        request.init_image = comp_image
        request.inpaint_mask = inpaint
        result = self.backend.inpaint_image(request)
        image = result.image.astype(np.float32)

        pred = self.backend.estimate_depth(image, request.hints)
        if self.config.envmap_enabled:
            remote = self.backend.segment_remote(image, self.config.remote_labels,
                                                 request.hints)
        else:
            remote = np.zeros((intr.height, intr.width), dtype=np.uint8)

        if self.config.align.enabled and (rendered_mask > 0).any():
            outcome = align(pred, rendered_depth, rendered_mask, self.config.align)
        else:
            from .alignment import apply_alignment

            depth, clamps = apply_alignment(pred, AlignmentParams(1.0, 0.0))
            outcome = AlignResult(depth, AlignmentParams(1.0, 0.0), False, clamps)

        content = ((rendered_mask > 0) | (inpaint > 0)).astype(np.uint8)
        record = StepRecord(
            index=step_index, pose=pose, prompt=request.prompt, seed=request.seed,
            selection_box=request.selection_box,
            condition_kinds=[c.kind for c in request.conditions],
            image=image, pred_depth=pred, aligned_depth=outcome.depth,
            rendered_depth=rendered_depth, rendered_mask=rendered_mask,
            content_mask=content, remote_mask=remote, params=outcome.params,
            align_fallback=outcome.fallback, clamp_count=outcome.clamp_count,
            created_at=time.time(),
        )
        diagnostics = {
            "alignment": {**outcome.params.to_dict(), "fallback": outcome.fallback,
                          "clamp_count": outcome.clamp_count},
            "inpainted_pixels": int(inpaint.sum()),
            "backend_id": result.backend_id,
        }
        self.pending = StepPreview(record, comp_image, inpaint, diagnostics)
        return self.pending

    def _apply_record(self, record: StepRecord):
        """Fuse a step into mesh/env; shared by commit and replay."""
        frame = Frame(record.image, record.aligned_depth, record.content_mask,
                      record.pose, self.config.intrinsics,
                      remote_mask=record.remote_mask)
        self.mesh = fuse(self.mesh, frame, record.rendered_mask,
                         record.rendered_depth, record.aligned_depth,
                         self.config.fusion)
        if self.config.envmap_enabled and (record.remote_mask > 0).any():
            self.env = splat_remote(record.image, record.remote_mask, record.pose,
                                    self.config.intrinsics, self.env)

    def commit_step(self) -> StepRecord:
        if self.pending is None:
            raise NoPendingPreview("nothing to commit")
        record = self.pending.record
        self._apply_record(record)
        self.steps.append(record)
        self.pending = None
        self.persist()
        return record

    def reject_step(self):
        if self.pending is None:
            raise NoPendingPreview("nothing to reject")
        self.pending = None

    def undo(self):
        if len(self.steps) <= 1:
            raise NothingToUndo("step 0 cannot be undone")
        if self.pending is not None:
            raise PendingPreviewExists("reject or commit the pending preview first")
        records = self.steps[:-1]
        self.mesh = TriMesh.empty()
        self.env = EnvMap(self.config.envmap_width, self.config.envmap_height)
        self.steps = []
        for record in records:
            self._apply_record(record)
            self.steps.append(record)
        self.persist(prune=True)

    def replay(self) -> "SceneSession":
        """Rebuild a fresh session from this one's committed records only."""
        twin = SceneSession(self.config, self.backend, None)
        for record in self.steps:
            twin._apply_record(record)
            twin.steps.append(record)
        return twin

    # ---------------------------------------------------------------- hashing

    def state_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.mesh.vertices.tobytes())
        h.update(self.mesh.colors.tobytes())
        h.update(self.mesh.faces.tobytes())
        h.update(self.env.color.tobytes())
        h.update(self.env.valid.tobytes())
        h.update(str(len(self.steps)).encode())
        return h.hexdigest()

    def summary(self):
        stats = mesh_stats(self.mesh)
        return {
            "steps": len(self.steps),
            "pending": self.pending is not None,
            "mesh": stats.to_dict(),
            "envmap": {"enabled": self.config.envmap_enabled,
                       "valid_texels": int(self.env.valid.sum())},
            "state_hash": self.state_hash(),
        }

    # ------------------------------------------------------------ persistence

    def persist(self, prune: bool = False):
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        frames = self.dir / "frames"
        frames.mkdir(exist_ok=True)
        for record in self.steps:
            stem = frames / f"{record.index:04d}"
            rgb = Path(f"{stem}_rgb.png")
            if not rgb.exists():
                sfio.write_image_png(rgb, record.image)
                sfio.write_pfm(f"{stem}_pred_depth.pfm", record.pred_depth)
                sfio.write_pfm(f"{stem}_depth.pfm", record.aligned_depth)
                sfio.write_pfm(f"{stem}_rendered_depth.pfm", record.rendered_depth)
                sfio.write_mask_png(f"{stem}_mask.png", record.rendered_mask)
                sfio.write_mask_png(f"{stem}_content.png", record.content_mask)
                sfio.write_mask_png(f"{stem}_remote.png", record.remote_mask)
        if prune:
            keep = {f"{r.index:04d}" for r in self.steps}
            for f in frames.iterdir():
                if f.name[:4] not in keep:
                    f.unlink()
        sfio.write_ply(self.dir / "mesh.ply", self.mesh)
        sfio.write_image_png(self.dir / "envmap.png", self.env.color)
        sfio.write_mask_png(self.dir / "envmap_valid.png", self.env.valid)
        doc = {
            "version": 1,
            "config": self.config.to_dict(),
            "world_seed": self._world_seed(),
            "steps": [self._record_to_json(r) for r in self.steps],
        }
        (self.dir / "session.json").write_text(json.dumps(doc, indent=2))

    def _world_seed(self):
        desc = self.backend.describe() if hasattr(self.backend, "describe") else {}
        return desc.get("world", {}).get("seed") if isinstance(desc, dict) else None

    @staticmethod
    def _record_to_json(r: StepRecord):
        return {
            "index": r.index,
            "pose": _pose_to_dict(r.pose),
            "prompt": r.prompt,
            "seed": r.seed,
            "selection_box": list(r.selection_box) if r.selection_box else None,
            "condition_kinds": list(r.condition_kinds),
            "alignment": {**r.params.to_dict(), "fallback": r.align_fallback,
                          "clamp_count": r.clamp_count},
            "created_at": r.created_at,
            "files": {k: f"frames/{r.index:04d}_{k}" for k in
                      ("rgb.png", "pred_depth.pfm", "depth.pfm", "rendered_depth.pfm",
                       "mask.png", "content.png", "remote.png")},
        }

    @classmethod
    def load(cls, session_dir) -> "SceneSession":
        session_dir = Path(session_dir)
        doc = json.loads((session_dir / "session.json").read_text())
        config = SessionConfig.from_dict(doc["config"])
        backend = make_backend(config.backend)
        session = cls(config, backend, session_dir)
        frames = session_dir / "frames"
        for rj in doc["steps"]:
            idx = rj["index"]
            stem = frames / f"{idx:04d}"
            record = StepRecord(
                index=idx,
                pose=_pose_from_dict(rj["pose"]),
                prompt=rj["prompt"],
                seed=rj["seed"],
                selection_box=tuple(rj["selection_box"]) if rj["selection_box"] else None,
                condition_kinds=rj.get("condition_kinds", []),
                image=sfio.read_image_png(f"{stem}_rgb.png"),
                pred_depth=sfio.read_pfm(f"{stem}_pred_depth.pfm"),
                aligned_depth=sfio.read_pfm(f"{stem}_depth.pfm"),
                rendered_depth=sfio.read_pfm(f"{stem}_rendered_depth.pfm"),
                rendered_mask=sfio.read_mask_png(f"{stem}_mask.png"),
                content_mask=sfio.read_mask_png(f"{stem}_content.png"),
                remote_mask=sfio.read_mask_png(f"{stem}_remote.png"),
                params=AlignmentParams(rj["alignment"]["alpha"], rj["alignment"]["beta"]),
                align_fallback=bool(rj["alignment"].get("fallback", False)),
                clamp_count=int(rj["alignment"].get("clamp_count", 0)),
                created_at=rj.get("created_at", 0.0),
            )
            session.steps.append(record)
        # rebuild mesh/env by replaying the log: exact float64 state, which the
        # float32 PLY on disk cannot carry
        records, session.steps = session.steps, []
        for record in records:
            session._apply_record(record)
            session.steps.append(record)
        return session

    # --------------------------------------------------------------- exports

    def export(self, what: str, out_dir) -> list:
        """Write ply | frames | trajectory artifacts into out_dir; returns paths."""
        if not self.steps:
            raise ConfigError("nothing to export: no committed steps")
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        if what == "ply":
            path = out_dir / "mesh.ply"
            sfio.write_ply(path, self.mesh)
            written.append(path)
        elif what == "frames":
            for record in self.steps:
                stem = out_dir / f"{record.index:04d}"
                sfio.write_image_png(f"{stem}_rgb.png", record.image)
                sfio.write_pfm(f"{stem}_depth.pfm", record.aligned_depth)
                # predicted depth makes the bundle replayable via cache:DIR
                sfio.write_pfm(f"{stem}_pred_depth.pfm", record.pred_depth)
                sfio.write_mask_png(f"{stem}_mask.png", record.rendered_mask)
                sfio.write_mask_png(f"{stem}_remote.png", record.remote_mask)
                written.extend([Path(f"{stem}_rgb.png"), Path(f"{stem}_depth.pfm"),
                                Path(f"{stem}_pred_depth.pfm"),
                                Path(f"{stem}_mask.png"), Path(f"{stem}_remote.png")])
        elif what == "trajectory":
            intr = self.config.intrinsics
            doc = {
                "intrinsics": intr.to_dict(),
                "frames": [
                    {"index": r.index,
                     "file_path": f"frames/{r.index:04d}_rgb.png",
                     "prompt": r.prompt,
                     "seed": r.seed,
                     "transform_matrix": [[float(v) for v in row]
                                          for row in r.pose.matrix()]}
                    for r in self.steps
                ],
            }
            path = out_dir / "trajectory.json"
            path.write_text(json.dumps(doc, indent=2))
            written.append(path)
        else:
            raise ConfigError(f"unknown export kind {what!r}")
        return written
