from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scene_presets import SCENES  # noqa: E402

from roadloc3d import calib, dataio, metrics  # noqa: E402


def params_for(scene: str) -> calib.CalibrationParams:
    s = SCENES[scene]
    w, h = s["image_size"]
    return calib.CalibrationParams(
        f=s["f"], phi=s["phi"], theta=s["theta"], h=s["h_mm"] / 1000.0,
        cx=w / 2, cy=h / 2,
    )


def scene_meta_for(scene: str) -> dataio.SceneMeta:
    s = SCENES[scene]
    return dataio.SceneMeta(
        scene_id=scene,
        calib=params_for(scene),
        extent=metrics.SceneExtent(d_ry=s["d_ry"], d_rx=s["d_rx"]),
        image_size=s["image_size"],
    )


@pytest.fixture
def scene_a_params() -> calib.CalibrationParams:
    return params_for("A")


@pytest.fixture
def scene_a_projection(scene_a_params) -> calib.ProjectionMatrix:
    return calib.build_projection(scene_a_params)


@pytest.fixture
def scene_a_meta() -> dataio.SceneMeta:
    return scene_meta_for("A")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260810)
