"""
Experiment configuration and the end-to-end reconstruction run.

Config files are INI-style::

    [material]
    rho = 0.7
    mu = 2
    mu_s = 0.1
    ell2 = 0.001

    [discretization]
    n_modes = 100
    n_boundary = 128

    [noise]
    delta = 0
    seed = 0

    [regularization]
    alpha = 1e-16
    filter = spectral-cutoff
    probe_norm = unit

    [grid]
    resolution = 101
    r_max = 0.95

    [output]
    directory = out
    formats = kernel_csv, matrix_bin, map_csv, pgm

Only ``[material]`` is required. A run manifest (JSON) is also accepted as a
config; its ``config`` entry is used.
"""

from __future__ import annotations

import configparser
import json
import platform
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .forward_model import MaterialParams, assemble_dtn_matrix, build_kernel_spectrum
from .inversion import (
    NoiseSpec,
    RegularizationSpec,
    SamplingGrid,
    build_imaging_map,
    decompose,
    inject_noise,
    relative_noise_level,
)
from .probe import PROBE_NORMS

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "PipelineError",
    "FORMATS",
    "load_config",
    "parse_config",
    "run_experiment",
    "with_overrides",
]

FORMATS = ("kernel_csv", "matrix_bin", "matrix_csv", "map_csv", "pgm")
DEFAULT_FORMATS = ("kernel_csv", "matrix_bin", "map_csv", "pgm")

OUTPUT_NAMES = {
    "kernel_csv": "kernel.csv",
    "matrix_bin": "dtn_matrix.bin",
    "matrix_csv": "dtn_matrix.csv",
    "map_csv": "imaging_map.csv",
    "pgm": "imaging_map.pgm",
}


class PipelineError(RuntimeError):
    """A failed pipeline stage; ``stage`` names where it happened."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    material: MaterialParams
    n_modes: int = 100
    n_boundary: int = 128
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    reg: RegularizationSpec = field(default_factory=lambda: RegularizationSpec(1e-16))
    grid: SamplingGrid = field(default_factory=SamplingGrid)
    probe_norm: str = "unit"
    out_dir: Path = Path("out")
    formats: tuple = DEFAULT_FORMATS

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.n_boundary < 8:
            raise ValueError(f"n_boundary must be >= 8, got {self.n_boundary}")
        if self.probe_norm not in PROBE_NORMS:
            raise ValueError(f"probe_norm must be one of {PROBE_NORMS}")
        unknown = set(self.formats) - set(FORMATS)
        if unknown:
            raise ValueError(f"unknown output formats {sorted(unknown)}; known: {FORMATS}")
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(self, "formats", tuple(self.formats))

    def as_dict(self) -> dict:
        return {
            "material": self.material.as_dict(),
            "discretization": {"n_modes": self.n_modes, "n_boundary": self.n_boundary},
            "noise": {"delta": self.noise.delta, "seed": self.noise.seed},
            "regularization": {
                "alpha": self.reg.alpha,
                "filter": self.reg.filter,
                "probe_norm": self.probe_norm,
            },
            "grid": {"resolution": self.grid.resolution, "r_max": self.grid.r_max},
            "output": {"directory": str(self.out_dir), "formats": list(self.formats)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        def section(name):
            return {k.lower(): v for k, v in d.get(name, {}).items()}

        mat = section("material")
        missing = {"rho", "mu", "mu_s", "ell2"} - set(mat)
        if missing:
            raise ValueError(f"[material] is missing {sorted(missing)}")
        disc, noise, reg = section("discretization"), section("noise"), section("regularization")
        grid, out = section("grid"), section("output")
        formats = out.get("formats", DEFAULT_FORMATS)
        if isinstance(formats, str):
            formats = [f.strip() for f in formats.split(",") if f.strip()]
        return cls(
            material=MaterialParams(
                mu=float(mat["mu"]), mu_s=float(mat["mu_s"]), ell2=float(mat["ell2"]), rho=float(mat["rho"])
            ),
            n_modes=int(disc.get("n_modes", 100)),
            n_boundary=int(disc.get("n_boundary", 128)),
            noise=NoiseSpec(delta=float(noise.get("delta", 0.0)), seed=int(noise.get("seed", 0))),
            reg=RegularizationSpec(
                alpha=float(reg.get("alpha", 1e-16)), filter=str(reg.get("filter", "spectral-cutoff"))
            ),
            probe_norm=str(reg.get("probe_norm", "unit")),
            grid=SamplingGrid(resolution=int(grid.get("resolution", 101)), r_max=float(grid.get("r_max", 0.95))),
            out_dir=Path(out.get("directory", "out")),
            formats=tuple(formats),
        )


def parse_config(text: str) -> ExperimentConfig:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        return ExperimentConfig.from_dict(data.get("config", data))
    parser = configparser.ConfigParser()
    parser.read_string(text)
    return ExperimentConfig.from_dict({s: dict(parser[s]) for s in parser.sections()})


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


@dataclass
class RunManifest:
    config: dict
    versions: dict
    seed: int
    noise_ratio: float
    timings: dict
    outputs: dict
    degenerate_points: int = 0

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "versions": self.versions,
            "seed": self.seed,
            "noise_ratio": self.noise_ratio,
            "degenerate_points": self.degenerate_points,
            "timings": self.timings,
            "outputs": self.outputs,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def _check_writable(out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out_dir, prefix=".write-check-"):
            pass
    except OSError as exc:
        raise PipelineError("output", exc) from exc


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Spectrum, matrix, noise, SVD and imaging map; writes outputs and a manifest."""
    out_dir = config.out_dir
    _check_writable(out_dir)
    timings = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        return result

    spectrum = stage("spectrum", lambda: build_kernel_spectrum(config.material, config.n_modes))
    A = stage("matrix", lambda: assemble_dtn_matrix(spectrum, config.n_boundary))
    A_delta = stage("noise", lambda: inject_noise(A, config.noise))
    noise_ratio = stage("noise_ratio", lambda: relative_noise_level(A, A_delta))
    svd = stage("svd", lambda: decompose(A_delta))
    imaging = stage(
        "imaging",
        lambda: build_imaging_map(
            A_delta, config.noise, config.reg, config.grid, svd=svd, probe_norm=config.probe_norm
        ),
    )

    writers = {
        "kernel_csv": spectrum.to_csv,
        "matrix_bin": A_delta.save,
        "matrix_csv": A_delta.to_csv,
        "map_csv": imaging.to_csv,
        "pgm": imaging.to_pgm,
    }
    outputs = {}

    def write_all():
        for fmt in config.formats:
            path = out_dir / OUTPUT_NAMES[fmt]
            writers[fmt](path)
            outputs[fmt] = str(path)

    stage("write", write_all)

    manifest = RunManifest(
        config=config.as_dict(),
        versions={"shtomo": __version__, "numpy": np.__version__, "python": platform.python_version()},
        seed=config.noise.seed,
        noise_ratio=noise_ratio,
        timings=timings,
        outputs=outputs,
        degenerate_points=int(np.sum(~np.isfinite(imaging.w))),
    )
    manifest_path = out_dir / "manifest.json"
    manifest.outputs["manifest"] = str(manifest_path)
    try:
        manifest_path.write_text(manifest.to_json())
    except OSError as exc:
        raise PipelineError("write", exc) from exc
    return manifest


def with_overrides(config: ExperimentConfig, *, seed=None, out_dir=None) -> ExperimentConfig:
    if seed is not None:
        config = replace(config, noise=replace(config.noise, seed=seed))
    if out_dir is not None:
        config = replace(config, out_dir=Path(out_dir))
    return config
