"""Run configuration and the line-based ``key = value`` config format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

ARENA_VERTICES: tuple[tuple[float, float], ...] = (
    (1, 1), (1, 5), (2, 5), (2, 3), (3, 3), (3, 4), (4, 4), (4, 6), (9, 6),
    (9, 5), (6, 5), (6, 3), (7, 3), (7, 0), (6, 0), (6, 2), (5, 2), (5, 1),
)
# (center_x, center_y, radius), resource index = position + 1
RESOURCE_SITES: tuple[tuple[float, float, float], ...] = (
    (1.5, 4.25, 0.3),
    (4.5, 1.5, 0.3),
    (8.0, 5.5, 0.3),
    (6.5, 0.75, 0.3),
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # integration and learning
    dt: float = 0.05
    gamma: float = 0.95
    eps_start: float = 0.9
    eps_end: float = 0.05
    lr_f: float = 0.5
    lr_j: float = 1e-3
    steps: int = 200_000
    seed: int = 0
    f_hidden: tuple[int, ...] = (64, 64)
    j_hidden: tuple[int, ...] = (64, 64)
    eps_smooth: float = 1e-8

    # body
    x_star: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 0.0, 0.0)
    x_max: float = 10.0
    fatigue_max: float = 12.0
    decay: tuple[float, ...] = (0.05, 0.05, 0.05, 0.05)
    m_consume: float = 0.5
    rho_walk: float = 0.01
    rho_run: float = 0.03
    v_walk: float = 0.5
    v_run: float = 1.5
    omega: float = math.pi / 3
    kappa_walk: float = 0.1
    kappa_run: float = 0.4
    r_muscle: float = 0.1
    sigma_wake: float = 0.01
    sigma_sleep: float = 0.2
    run_block: float = 6.0
    walk_block: float = 8.0
    forced_sleep: float = 10.0
    t_sleep_min: float = 1.0

    # perception (not used by the learner, which sees the full state)
    view_range: float = 3.0
    view_half_angle: float = math.pi / 6

    # world
    arena: tuple[tuple[float, float], ...] = ARENA_VERTICES
    sites: tuple[tuple[float, float, float], ...] = RESOURCE_SITES
    start_x: float = 5.0
    start_y: float = 3.25
    start_heading: float = 0.0

    # oracle
    dt_oracle: float = 1e-3
    horizon_tol: float = 1e-6

    def replace(self, **changes) -> RunConfig:
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def bad(key, why):
            raise ConfigError(f"{key}: {why}")

        if not self.dt > 0:
            bad("dt", "must be positive")
        if not 0 < self.gamma < 1:
            bad("gamma", "must lie in (0, 1)")
        for key in ("eps_start", "eps_end"):
            if not 0 <= getattr(self, key) <= 1:
                bad(key, "must lie in [0, 1]")
        for key in ("lr_f", "lr_j", "dt_oracle", "horizon_tol", "x_max", "fatigue_max"):
            if not getattr(self, key) > 0:
                bad(key, "must be positive")
        if self.steps < 1:
            bad("steps", "must be at least 1")
        if any(h < 1 for h in self.f_hidden) or any(h < 1 for h in self.j_hidden):
            bad("f_hidden" if any(h < 1 for h in self.f_hidden) else "j_hidden",
                "layer widths must be positive")
        nonneg = ("eps_smooth", "m_consume", "rho_walk", "rho_run", "v_walk", "v_run",
                  "omega", "kappa_walk", "kappa_run", "r_muscle", "sigma_wake",
                  "sigma_sleep", "run_block", "walk_block", "forced_sleep",
                  "t_sleep_min", "view_range", "view_half_angle")
        for key in nonneg:
            if getattr(self, key) < 0:
                bad(key, "must be nonnegative")
        if len(self.x_star) != 6:
            bad("x_star", "needs 6 components")
        if any(x < 0 for x in self.x_star[:4]) or any(x > self.x_max for x in self.x_star[:4]):
            bad("x_star", "resource set points must lie in [0, x_max]")
        if any(x != 0 for x in self.x_star[4:]):
            bad("x_star", "fatigue set points must be 0")
        if len(self.decay) != 4 or any(c < 0 for c in self.decay):
            bad("decay", "needs 4 nonnegative rates")
        if not self.run_block <= self.walk_block <= self.forced_sleep <= self.fatigue_max:
            bad("run_block", "thresholds must satisfy run_block <= walk_block <= forced_sleep <= fatigue_max")
        if len(self.arena) < 3:
            bad("arena", "needs at least 3 vertices")
        if len(self.sites) != 4:
            bad("sites", "needs exactly 4 resource sites")
        # local import: world depends on this module
        from .world import point_in_polygon

        for i, (cx, cy, r) in enumerate(self.sites, start=1):
            if r <= 0:
                bad("sites", f"site {i} radius must be positive")
            if not point_in_polygon((cx, cy), self.arena):
                bad("sites", f"site {i} center lies outside the arena")
        if not point_in_polygon((self.start_x, self.start_y), self.arena):
            bad("start_x", "start position lies outside the arena")


def _parse_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(";") if p.strip())


def _parse_points(text: str, width: int) -> tuple[tuple[float, ...], ...]:
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        coords = tuple(float(p) for p in chunk.split(","))
        if len(coords) != width:
            raise ValueError(f"expected {width} comma-separated numbers, got {chunk.strip()!r}")
        out.append(coords)
    return tuple(out)


def _parse_value(key: str, text: str, default):
    if key == "arena":
        return _parse_points(text, 2)
    if key == "sites":
        return _parse_points(text, 3)
    if key in ("f_hidden", "j_hidden"):
        return tuple(int(p) for p in text.split(";") if p.strip())
    if isinstance(default, tuple):
        return _parse_tuple(text)
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    return float(text)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    defaults = RunConfig()
    known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, rhs = (s.strip() for s in line.partition("="))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, rhs, known[key])
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def format_config(cfg: RunConfig) -> str:
    """Inverse of parse_config, used to record the effective run settings."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in ("arena", "sites"):
            text = ";".join(",".join(repr(float(c)) for c in p) for p in v)
        elif isinstance(v, tuple):
            text = ";".join(repr(c) for c in v)
        else:
            text = repr(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
