"""Run configuration: ``key = value`` lines, ``#`` starts a comment."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError


def _modes(text):
    """'1:0:1; 2:0.5:0' -> ((1, 0.0, 1.0), (2, 0.5, 0.0))."""
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        k, c, s = part.split(":")
        out.append((int(k), float(c), float(s)))
    return tuple(out)


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("none", "") else float(text)


@dataclass
class RunConfig:
    period: float = 1.0
    n_shell: int = 8
    n_interior: int = 16
    n_steps: int = 400
    grid: int = 64
    quad_order_x: int = 10
    quad_cells_x: int = 8
    quad_order_z: int = 24
    h: float = 0.1
    lambda_s: float = 1.0
    mu_s: float = 1.0
    a_m: float | None = None
    a_b: float | None = None
    membrane: bool = False
    kappa: float = 0.5
    mean: float = 0.0
    amplitude: float = 0.0
    fluid_profile: str = "vertical"
    shell_profile: str = "asymmetric"
    fluid_modes: tuple = ((1, 0.0, 1.0),)
    shell_modes: tuple = ((1, 1.0, 0.0),)
    epsilons: tuple = (0.1,)
    rho: float = 0.7
    outer_tol: float = 1e-7
    max_outer: int = 50
    anderson_depth: int = 0
    c0_gate: float | None = 1.0
    mode: str = "coupled"
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def dt(self):
        return self.period / self.n_steps

    def validate(self, line=None):
        positive = ("period", "n_shell", "n_interior", "n_steps", "grid", "quad_order_x", "quad_cells_x",
                    "quad_order_z", "h", "mu_s", "max_outer")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive", line)
        if not 0.0 < self.kappa < 1.0:
            raise ConfigError("kappa must lie in (0, 1)", line)
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError("rho must lie in (0, 1]", line)
        if self.mode not in ("coupled", "decoupled"):
            raise ConfigError("mode must be 'coupled' or 'decoupled'", line)
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be a nonempty list of positive radii", line)
        if list(self.epsilons) != sorted(self.epsilons, reverse=True):
            raise ConfigError("epsilons must be decreasing", line)

    def digest(self):
        text = "\n".join(f"{k}={v!r}" for k, v in sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("fluid_modes", "shell_modes"):
                v = "; ".join(f"{k}:{c!r}:{s!r}" for k, c, s in v)
            elif f.name == "epsilons":
                v = ", ".join(repr(e) for e in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    "period": float, "n_shell": int, "n_interior": int, "n_steps": int, "grid": int,
    "quad_order_x": int, "quad_cells_x": int, "quad_order_z": int,
    "h": float, "lambda_s": float, "mu_s": float, "a_m": _opt_float, "a_b": _opt_float,
    "membrane": _bool, "kappa": float, "mean": float, "amplitude": float,
    "fluid_profile": str, "shell_profile": str, "fluid_modes": _modes, "shell_modes": _modes,
    "epsilons": _floats, "rho": float, "outer_tol": float, "max_outer": int,
    "anderson_depth": int, "c0_gate": _opt_float, "mode": str, "output_dir": str, "seed": int,
}


def parse_config(text):
    """Parse config text; ``dt`` is accepted as an alias fixing n_steps = T / dt."""
    values = {}
    where = {}
    dt = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "dt":
            try:
                dt = (float(val), lineno)
            except ValueError as exc:
                raise ConfigError(f"bad value for dt: {exc}", lineno) from None
            continue
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        try:
            values[key] = _PARSERS[key](val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
        where[key] = lineno
    if dt is not None:
        period = values.get("period", 1.0)
        n = period / dt[0]
        if dt[0] <= 0 or abs(n - round(n)) > 1e-9 * n:
            raise ConfigError("dt must divide the period", dt[1])
        values["n_steps"] = int(round(n))
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        # attach the line of the first offending key we can identify
        for key, lineno in where.items():
            if key in str(exc):
                raise ConfigError(str(exc), lineno) from None
        raise


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
