"""Flat ``section.key = value`` run configuration."""
from dataclasses import dataclass, fields

from .errors import ConfigError
from .estimator import COFACTOR_SOURCES
from .lagrange import MAX_DEGREE
from .problems import BUILTINS

# config key -> (attribute, type)
_KEYS = {
    "problem.name": ("problem", str),
    "fe.degree": ("degree", int),
    "mesh.n": ("mesh_n", int),
    "mesh.file": ("mesh_file", str),
    "newton.tol_residual": ("tol_residual", float),
    "newton.max_iters": ("max_iters", int),
    "newton.damping": ("damping", str),
    "newton.linear_rtol": ("linear_rtol", float),
    "estimator.cofactor_source": ("cofactor_source", str),
    "estimator.quadrature_bump": ("quadrature_bump", int),
    "adapt.theta": ("theta", float),
    "adapt.max_levels": ("max_levels", int),
    "adapt.max_cells": ("max_cells", int),
    "adapt.theta_tol": ("theta_tol", float),
    "study.levels": ("levels", int),
    "output.csv": ("csv", str),
    "output.vtu_dir": ("vtu_dir", str),
    "threads": ("threads", int),
}


@dataclass
class RunConfig:
    problem: str = "exp_radial"
    degree: int = 3
    mesh_n: int = 4
    mesh_file: str = ""
    tol_residual: float = 1e-10
    max_iters: int = 30
    damping: str = "backtracking"
    linear_rtol: float = 1e-10
    cofactor_source: str = "hessian"
    quadrature_bump: int = 0
    theta: float = 0.5
    max_levels: int = 6
    max_cells: int = 0
    theta_tol: float = 0.0
    levels: int = 3
    csv: str = ""
    vtu_dir: str = ""
    threads: int = 1

    def validate(self):
        if self.problem not in BUILTINS:
            raise ConfigError(f"unknown problem {self.problem!r}; available: "
                              f"{', '.join(sorted(BUILTINS))}")
        if self.degree < 3:
            raise ConfigError(f"degree k must be >= 3 (got {self.degree})")
        if self.degree > MAX_DEGREE:
            raise ConfigError(f"degree k must be <= {MAX_DEGREE} (got {self.degree})")
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError(f"adapt.theta must lie in (0, 1] (got {self.theta})")
        if self.mesh_n < 1 and not self.mesh_file:
            raise ConfigError("mesh.n must be >= 1")
        if self.cofactor_source not in COFACTOR_SOURCES:
            raise ConfigError(f"estimator.cofactor_source must be one of {COFACTOR_SOURCES}")
        if self.damping not in ("none", "backtracking"):
            raise ConfigError("newton.damping must be 'none' or 'backtracking'")
        if self.tol_residual <= 0 or self.max_iters < 1:
            raise ConfigError("newton.tol_residual must be > 0 and newton.max_iters >= 1")
        if self.levels < 1 or self.max_levels < 1:
            raise ConfigError("level counts must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, typ = _KEYS[key]
        try:
            setattr(cfg, attr, typ(value))
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
    return cfg.validate()


def serialize_config(cfg: RunConfig) -> str:
    names = {attr: key for key, (attr, _) in _KEYS.items()}
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out.append(f"{names[f.name]} = {v!r}" if isinstance(v, float) else f"{names[f.name]} = {v}")
    return "\n".join(out) + "\n"
