"""Command line entry points: serve the gateway, run scripted trajectories,
export session artifacts, and bootstrap a session from a prompt."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import io as sfio
from .backend import Condition, GenerationRequest
from .errors import SceneFuseError
from .fusion import mesh_stats
from .geometry import Intrinsics, Pose
from .session import SceneSession, SessionConfig, _pose_from_dict


def _resolve_backend(backend: str | None):
    env = os.environ.get("SCENEFUSE_BACKEND_URL")
    if env:
        return env
    return backend or "mock"


def _fail(exc: SceneFuseError):
    click.echo(f"error [{exc.code}]: {exc.message}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Interactive 3D scene authoring by incremental RGB-D fusion."""


@main.command()
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--backend", default=None, help="Backend URL, 'mock', or cache:DIR.")
@click.option("--data-dir", default=None, type=click.Path(), help="Session storage root.")
def serve(port, host, backend, data_dir):
    """Serve the HTTP/WebSocket gateway."""
    from .gateway import serve as run_server

    run_server(host=host, port=port, data_dir=data_dir,
               default_backend=_resolve_backend(backend))


def _load_trajectory(path):
    """Accept both the batch format (a list of step dicts) and the exported
    trajectory document ({intrinsics, frames})."""
    doc = json.loads(Path(path).read_text())
    intr = None
    if isinstance(doc, dict) and "frames" in doc:
        if "intrinsics" in doc:
            intr = Intrinsics.from_dict(doc["intrinsics"])
        entries = doc["frames"]
    elif isinstance(doc, list):
        entries = doc
    else:
        raise SceneFuseError("trajectory must be a list or an exported document")

    steps = []
    base = Path(path).parent
    for e in entries:
        if "transform_matrix" in e:
            pose = Pose.from_matrix(np.array(e["transform_matrix"], dtype=np.float64))
        else:
            pose = _pose_from_dict(e["pose"])
        conditions = []
        for c in e.get("conditions", []):
            conditions.append(Condition(c["kind"], sfio.read_image_png(base / c["image"])))
        box = e.get("selection_box")
        steps.append({
            "pose": pose,
            "prompt": e.get("prompt", ""),
            "seed": int(e.get("seed", 0)),
            "selection_box": tuple(box) if box else None,
            "conditions": conditions,
        })
    return intr, steps


@main.command()
@click.option("--trajectory", "trajectory_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--backend", default=None)
@click.option("--width", default=256, show_default=True)
@click.option("--height", default=256, show_default=True)
@click.option("--focal", default=300.0, show_default=True)
@click.option("--world-seed", default=0, show_default=True, help="Mock world seed.")
@click.option("--no-envmap", is_flag=True, help="Disable the environment map layer.")
@click.option("--no-align", is_flag=True, help="Disable boundary-aware depth alignment.")
def run(trajectory_path, out_dir, backend, width, height, focal, world_seed,
        no_envmap, no_align):
    """Run a scripted trajectory: new session, propose+commit every entry,
    export everything."""
    from .alignment import AlignConfig

    try:
        intr, steps = _load_trajectory(trajectory_path)
    except (SceneFuseError, KeyError, ValueError) as exc:
        click.echo(f"error [bad_trajectory]: {exc}", err=True)
        sys.exit(1)

    if intr is None:
        intr = Intrinsics(fx=focal, fy=focal, cx=width / 2, cy=height / 2,
                          width=width, height=height)
    backend_spec = _resolve_backend(backend)
    if backend_spec == "mock":
        backend_spec = {"kind": "mock", "world": {"seed": world_seed}}
    config = SessionConfig(
        intrinsics=intr,
        backend=backend_spec,
        envmap_enabled=not no_envmap,
        align=AlignConfig(enabled=not no_align),
    )

    out = Path(out_dir)
    try:
        if steps:
            first = steps[0]
            req = GenerationRequest(prompt=first["prompt"], seed=first["seed"],
                                    selection_box=first["selection_box"],
                                    conditions=first["conditions"])
            session = SceneSession.new(config, req, out / "session",
                                       first_pose=first["pose"])
        else:
            session = SceneSession.new(config, GenerationRequest(), out / "session")
        click.echo(f"step 0: mesh {session.mesh.num_vertices}v/{session.mesh.num_faces}f")

        for step in steps[1:]:
            req = GenerationRequest(prompt=step["prompt"], seed=step["seed"],
                                    selection_box=step["selection_box"],
                                    conditions=step["conditions"])
            preview = session.propose_step(step["pose"], req)
            session.commit_step()
            d = preview.diagnostics["alignment"]
            stats = mesh_stats(session.mesh)
            click.echo(
                f"step {len(session.steps)-1}: align=({d['alpha']:.6f}, {d['beta']:.6f}) "
                f"fallback={d['fallback']} clamps={d['clamp_count']} "
                f"mesh {stats.vertex_count}v/{stats.face_count}f "
                f"anomalies={stats.anomaly_count}")

        session.export("ply", out)
        session.export("frames", out / "frames")
        session.export("trajectory", out)
    except SceneFuseError as exc:
        _fail(exc)
    click.echo(f"done: {len(session.steps)} steps committed, exports in {out}")


@main.command()
@click.option("--session", "session_dir", required=True, type=click.Path(exists=True))
@click.option("--what", type=click.Choice(["ply", "frames", "trajectory"]), default="ply",
              show_default=True)
@click.option("--out", "out_dir", default=None, type=click.Path())
def export(session_dir, what, out_dir):
    """Export artifacts from a stored session directory."""
    try:
        session = SceneSession.load(session_dir)
        paths = session.export(what, out_dir or session_dir)
    except (SceneFuseError, FileNotFoundError) as exc:
        code = getattr(exc, "code", "io_error")
        click.echo(f"error [{code}]: {exc}", err=True)
        sys.exit(1)
    for p in paths:
        click.echo(str(p))


@main.command()
@click.option("--prompt", required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", default="session", type=click.Path(), show_default=True)
@click.option("--backend", default=None)
@click.option("--width", default=256, show_default=True)
@click.option("--height", default=256, show_default=True)
@click.option("--focal", default=300.0, show_default=True)
def init(prompt, seed, out_dir, backend, width, height, focal):
    """Create a session with a generated first frame."""
    intr = Intrinsics(fx=focal, fy=focal, cx=width / 2, cy=height / 2,
                      width=width, height=height)
    config = SessionConfig(intrinsics=intr, backend=_resolve_backend(backend))
    try:
        session = SceneSession.new(config, GenerationRequest(prompt=prompt, seed=seed),
                                   out_dir)
    except SceneFuseError as exc:
        _fail(exc)
    click.echo(f"session created at {out_dir}: "
               f"{session.mesh.num_vertices} vertices, {session.mesh.num_faces} faces")


if __name__ == "__main__":
    main()
