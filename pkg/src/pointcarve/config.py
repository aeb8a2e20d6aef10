"""Run configuration: every pipeline hyperparameter in one flat record.

The on-disk format is plain ``key = value`` lines ('#' starts a comment);
unknown keys are rejected and every field is validated with an explicit
message. `load` of a `save`d config reproduces the record exactly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .carving import CarveModelConfig

_CONSTRUCTION_MODES = ("uniform", "none", "mirror", "gt")
_SAMPLING_MODES = ("lattice", "random")
_DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class RunConfig:
    """Defaults are the `desk` preset (32^3 grid, toy-scale clouds)."""

    # Grid / network architecture
    grid_res: int = 32
    unet_stages: int = 3
    unet_base_width: int = 8
    kernel_size: int = 3
    feature_dim: int = 32
    refine_widths: tuple[int, ...] = (256, 128, 64, 12)
    coarse_m: int = 256
    carve_threshold: float = 0.0
    dtype: str = "float32"
    # Point-block construction
    block_construction: str = "uniform"
    n_per_axis: int = 13
    block_sampling: str = "lattice"
    mirror_axis: str = "x"
    gt_points_count: int = 1331
    bounds_padding_gt: float = 0.0
    bounds_padding_partial: float = 0.15
    eps_box_frac: float = 1e-3
    # Objective / optimizer
    alpha: float = 0.5
    t_variants: int = 2
    sensoraug: bool = True
    detach_anchors: bool = False
    lr: float = 1e-4
    lr_halve_every: int = 40
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    epochs: int = 12
    max_steps: int = 0
    seed: int = 0
    # Virtual sensor
    sensor_vfov_deg: float = 49.1
    sensor_hfov_deg: float = 49.1
    depth_buffer_res: int = 160
    depth_eps: float = 0.01
    min_visible_frac: float = 0.05
    # Data / runtime
    data_manifest: str = ""
    val_count: int = 20
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "refine_widths", tuple(int(v) for v in self.refine_widths))
        self._validate()

    def _validate(self):
        def check(cond: bool, msg: str):
            if not cond:
                raise ValueError(f"invalid config: {msg}")

        check(self.grid_res >= 4, f"grid_res must be >= 4, got {self.grid_res}")
        check(self.unet_stages >= 1, "unet_stages must be >= 1")
        check(
            self.grid_res % (2**self.unet_stages) == 0,
            f"grid_res={self.grid_res} must be divisible by 2^unet_stages={2**self.unet_stages}",
        )
        check(self.unet_base_width >= 1, "unet_base_width must be >= 1")
        check(self.kernel_size >= 1 and self.kernel_size % 2 == 1, "kernel_size must be odd and >= 1")
        check(self.feature_dim >= 1, "feature_dim must be >= 1")
        check(
            bool(self.refine_widths) and self.refine_widths[-1] % 3 == 0,
            "refine_widths must end in a multiple of 3",
        )
        check(all(w >= 3 for w in self.refine_widths), "refine_widths must all be >= 3")
        check(self.coarse_m >= 1, "coarse_m must be >= 1")
        check(self.dtype in _DTYPES, f"dtype must be one of {_DTYPES}, got {self.dtype!r}")
        check(
            self.block_construction in _CONSTRUCTION_MODES,
            f"block_construction must be one of {_CONSTRUCTION_MODES}, got {self.block_construction!r}",
        )
        check(self.n_per_axis >= 2, "n_per_axis must be >= 2")
        check(
            self.block_sampling in _SAMPLING_MODES,
            f"block_sampling must be one of {_SAMPLING_MODES}, got {self.block_sampling!r}",
        )
        check(self.mirror_axis in ("x", "y", "z"), "mirror_axis must be x, y or z")
        check(self.gt_points_count >= 1, "gt_points_count must be >= 1")
        check(self.bounds_padding_gt >= 0, "bounds_padding_gt must be >= 0")
        check(self.bounds_padding_partial >= 0, "bounds_padding_partial must be >= 0")
        check(self.eps_box_frac > 0, "eps_box_frac must be > 0")
        check(self.alpha >= 0, "alpha must be >= 0")
        check(self.t_variants >= 0, "t_variants must be >= 0")
        check(self.lr > 0, "lr must be > 0")
        check(self.lr_halve_every >= 1, "lr_halve_every must be >= 1")
        check(0 <= self.adam_beta1 < 1, "adam_beta1 must be in [0, 1)")
        check(0 <= self.adam_beta2 < 1, "adam_beta2 must be in [0, 1)")
        check(self.adam_eps > 0, "adam_eps must be > 0")
        check(self.batch_size >= 1, "batch_size must be >= 1")
        check(self.epochs >= 1, "epochs must be >= 1")
        check(self.max_steps >= 0, "max_steps must be >= 0 (0 = unlimited)")
        check(0 < self.sensor_vfov_deg < 180, "sensor_vfov_deg must be in (0, 180)")
        check(0 < self.sensor_hfov_deg < 180, "sensor_hfov_deg must be in (0, 180)")
        check(self.depth_buffer_res >= 16, "depth_buffer_res must be >= 16")
        check(self.depth_eps > 0, "depth_eps must be > 0")
        check(0 < self.min_visible_frac < 1, "min_visible_frac must be in (0, 1)")
        check(self.val_count >= 0, "val_count must be >= 0")
        check(self.jobs >= 1, "jobs must be >= 1")

    # -- presets ----------------------------------------------------------

    @staticmethod
    def preset(name: str) -> "RunConfig":
        if name == "desk":
            return RunConfig()
        if name == "paper":
            # Scale-up documented from the published configuration; no claim
            # of parameter parity with the original 76.8 M-parameter model.
            return RunConfig(
                grid_res=64,
                unet_base_width=16,
                refine_widths=(1792, 2448, 112, 24),
                coarse_m=2048,
                batch_size=24,
                epochs=200,
            )
        raise ValueError(f"unknown preset {name!r} (expected 'desk' or 'paper')")

    # -- derived views ----------------------------------------------------

    def carve_config(self) -> CarveModelConfig:
        return CarveModelConfig(
            resolution=(self.grid_res,) * 3,
            stages=self.unet_stages,
            base_width=self.unet_base_width,
            kernel_size=self.kernel_size,
            feature_dim=self.feature_dim,
            refine_widths=self.refine_widths,
            dtype=self.dtype,
        )

    @property
    def expansion(self) -> int:
        return self.refine_widths[-1] // 3

    def replace(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)

    # -- serialization ----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                rendered = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append(f"{f.name} = {rendered}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @staticmethod
    def load(path: str | Path) -> "RunConfig":
        return RunConfig.from_text(Path(path).read_text(), source=str(path))

    @staticmethod
    def from_text(text: str, source: str = "<config>") -> "RunConfig":
        known = {f.name: f for f in fields(RunConfig)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, rendered = line.partition("=")
            key = key.strip()
            rendered = rendered.strip()
            if key not in known:
                raise ValueError(f"{source}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _parse_value(known[key].type, rendered)
            except ValueError as exc:
                raise ValueError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        return RunConfig(**values)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]


def _parse_value(annotation: str, rendered: str):
    kind = str(annotation)
    if "tuple" in kind:
        parts = [p for p in rendered.split(",") if p.strip()]
        if not parts:
            raise ValueError("expected a comma-separated integer list")
        return tuple(int(p) for p in parts)
    if kind == "bool":
        if rendered.lower() in ("true", "1", "yes"):
            return True
        if rendered.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected true/false, got {rendered!r}")
    if kind == "int":
        return int(rendered)
    if kind == "float":
        return float(rendered)
    return rendered
