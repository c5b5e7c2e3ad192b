"""Novel-view camera trajectories: keyframe interpolation with normalized
quaternion slerp and an explicit step -> Gaussian-frame mapping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pano4d.gaussians import SceneCamera
from pano4d.io import PipelineInputError
from pano4d.rotations import quat_slerp, quats_to_rots, rot_to_quat


@dataclass
class TrajectorySpec:
    """Keyframed camera path.

    ``steps_per_segment`` interpolated steps are emitted per keyframe gap
    (the segment start included, the final keyframe appended once at the
    end).  ``frame_map`` assigns each rendered step a Gaussian frame index;
    when omitted every step samples frame 0.
    """

    keyframes: list[SceneCamera]
    steps_per_segment: int = 1
    frame_map: list[int] | None = None

    def __post_init__(self):
        if len(self.keyframes) < 1:
            raise ValueError("a trajectory needs at least one keyframe")
        if self.steps_per_segment < 1:
            raise ValueError("steps_per_segment must be >= 1")
        if self.frame_map is not None and len(self.frame_map) != self.num_steps():
            raise ValueError(
                f"frame_map length {len(self.frame_map)} does not match "
                f"{self.num_steps()} trajectory steps")

    def num_steps(self) -> int:
        if len(self.keyframes) == 1:
            return 1
        return (len(self.keyframes) - 1) * self.steps_per_segment + 1

    def cameras(self) -> list[SceneCamera]:
        if len(self.keyframes) == 1:
            return [self.keyframes[0]]
        out = []
        for a, b in zip(self.keyframes[:-1], self.keyframes[1:]):
            qa = rot_to_quat(a.rotation)
            qb = rot_to_quat(b.rotation)
            for j in range(self.steps_per_segment):
                u = j / self.steps_per_segment
                rot = quats_to_rots(quat_slerp(qa, qb, u)[None])[0]
                trans = (1 - u) * a.translation + u * b.translation
                fov = (1 - u) * a.fov + u * b.fov
                out.append(SceneCamera(rotation=rot, translation=trans, fov=fov,
                                       height=a.height, width=a.width))
        out.append(self.keyframes[-1])
        return out

    def frame_for_step(self, step: int) -> int:
        if self.frame_map is None:
            return 0
        return self.frame_map[step]


def save_trajectory(path, spec: TrajectorySpec) -> None:
    doc = {
        "keyframes": [
            {"quat": rot_to_quat(c.rotation).tolist(),
             "t": c.translation.tolist(),
             "fov_deg": math.degrees(c.fov),
             "h": c.height, "w": c.width}
            for c in spec.keyframes],
        "steps_per_segment": spec.steps_per_segment,
    }
    if spec.frame_map is not None:
        doc["frame_map"] = list(spec.frame_map)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_trajectory(path) -> TrajectorySpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PipelineInputError(f"cannot parse trajectory {path}: {exc}") from exc
    try:
        keyframes = [
            SceneCamera(rotation=quats_to_rots(
                            np.asarray(k["quat"], dtype=np.float64)[None]
                            / np.linalg.norm(k["quat"]))[0],
                        translation=np.asarray(k["t"], dtype=np.float64),
                        fov=math.radians(float(k["fov_deg"])),
                        height=int(k["h"]), width=int(k["w"]))
            for k in doc["keyframes"]]
        spec = TrajectorySpec(keyframes=keyframes,
                              steps_per_segment=int(doc.get("steps_per_segment", 1)),
                              frame_map=doc.get("frame_map"))
    except (KeyError, TypeError, ValueError) as exc:
        raise PipelineInputError(f"invalid trajectory {path}: {exc}") from exc
    return spec
