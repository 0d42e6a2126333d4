"""Hierarchical deterministic random streams and material sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    """Stable integer tags for stream paths, one per consumer."""

    SCENE = 1
    VIEW = 2
    PLACEMENT = 3
    MATERIAL = 4
    ENVIRONMENT = 5
    CAMERA = 6
    LIGHTS = 7
    AUGMENT = 8
    PIPELINE_GATE = 9
    CORRUPT = 10


@dataclass(frozen=True)
class RngStream:
    """A (seed, path) address in a counter-based stream tree.

    Identical (seed, path) pairs produce identical draw sequences on every
    platform; distinct paths give statistically independent streams. Streams
    are values: deriving and consuming them is free of shared state, so any
    thread may use its own without coordination.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *path):
        return RngStream(self.seed, self.path + tuple(int(p) for p in path))

    def generator(self):
        """Fresh numpy Generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))


def derive_stream(seed, path=()):
    return RngStream(int(seed), tuple(int(p) for p in path))


@dataclass
class SamplingMode:
    """Rendering material regime: uniform-color baseline or randomized textures."""

    texture_bias: bool = False
    shape_bias: bool = True
    texture_count: int = 1226

    def __post_init__(self):
        if self.texture_bias == self.shape_bias:
            raise ValueError("exactly one of texture_bias / shape_bias must be set")
        if self.shape_bias and self.texture_count < 1:
            raise ValueError("texture_count must be >= 1")

    @staticmethod
    def for_texture_bias():
        return SamplingMode(texture_bias=True, shape_bias=False)

    @staticmethod
    def for_shape_bias(texture_count=1226):
        return SamplingMode(texture_bias=False, shape_bias=True, texture_count=texture_count)


@dataclass
class MaterialSample:
    """Specularity, roughness and paint for one object instance.

    Exactly one of `color` / `texture_index` is set. Colors live in
    [0.1, 0.9] per channel; texture indices in [1, texture_count].
    """

    specularity: float
    roughness: float
    color: tuple[float, float, float] | None = None
    texture_index: int | None = None

    def __post_init__(self):
        if (self.color is None) == (self.texture_index is None):
            raise ValueError("exactly one of color / texture_index must be set")
        if not (0.0 <= self.specularity <= 1.0 and 0.0 <= self.roughness <= 1.0):
            raise ValueError("specularity and roughness must lie in [0, 1]")
        if self.color is not None and not all(0.1 <= c <= 0.9 for c in self.color):
            raise ValueError("color channels must lie in [0.1, 0.9]")
        if self.texture_index is not None and self.texture_index < 1:
            raise ValueError("texture index must be >= 1")


def sample_material(mode, rng):
    """One material draw: S, R ~ U(0,1), then either an RGB color with
    channels ~ U(0.1, 0.9) (texture-bias baseline) or a texture index
    uniform over {1..n} (shape-bias)."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    s = float(gen.uniform(0.0, 1.0))
    r = float(gen.uniform(0.0, 1.0))
    if mode.texture_bias:
        color = tuple(float(c) for c in gen.uniform(0.1, 0.9, size=3))
        return MaterialSample(s, r, color=color)
    index = int(gen.integers(1, mode.texture_count + 1))
    return MaterialSample(s, r, texture_index=index)


def sample_texture_assignment(num_instances, mode, rng):
    """Independent per-instance materials for one scene (drawn once per
    scene; every view of the scene sees the same assignment)."""
    if num_instances < 1:
        raise ValueError("need at least one instance")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return [sample_material(mode, gen) for _ in range(num_instances)]
