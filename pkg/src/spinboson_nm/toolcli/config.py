"""Declarative sweep configuration (TOML).

A minimal file::

    spectral = "lorentzian"

    [sweep]
    param = "delta"
    start = -1.0
    stop = 0.5

Defaults: alpha = 0.01, lambda = 0.1 (Lorentzian only), points = 61,
spacing = "linear", engines = ["full", "rwa", "sa"], workers = 1, seed = 0,
horizon_factor = 10, n_polar = 13, n_azimuth = 24, restarts = 0,
cpt_times = 50, out = none.
"""

import math
from dataclasses import asdict, dataclass, field

import tomli

SWEEP_PARAMS = {"lorentzian": ("delta",), "ohmic": ("omega_c",)}
SWEEP_ENGINES = ("full", "rwa", "sa")
DEFAULT_POINTS = 61

_TOP_KEYS = {"spectral", "alpha", "lambda", "delta", "omega_c", "sweep", "run"}
_SWEEP_KEYS = {"param", "start", "stop", "points", "spacing"}
_RUN_KEYS = {"engines", "workers", "seed", "out", "horizon_factor", "n_polar", "n_azimuth",
             "restarts", "cpt_times"}


class ConfigError(ValueError):
    """Invalid or unparsable configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class SweepSpec:
    spectral: str
    param: str
    start: float
    stop: float
    points: int = DEFAULT_POINTS
    spacing: str = "linear"
    alpha: float = 0.01
    lam: float | None = None
    engines: tuple = SWEEP_ENGINES
    out: str | None = None
    workers: int = 1
    seed: int = 0
    horizon_factor: float = 10.0
    n_polar: int = 13
    n_azimuth: int = 24
    restarts: int = 0
    cpt_times: int = 50
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.spectral not in SWEEP_PARAMS:
            raise ConfigError(f"spectral must be one of {tuple(SWEEP_PARAMS)}", "spectral")
        if self.param not in SWEEP_PARAMS[self.spectral]:
            raise ConfigError(f"{self.spectral} sweeps take param in "
                              f"{SWEEP_PARAMS[self.spectral]}, got {self.param!r}", "param")
        for name in ("start", "stop"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite", name)
        if self.points < 2:
            raise ConfigError("points must be >= 2", "points")
        if self.spacing not in ("linear", "log"):
            raise ConfigError("spacing must be 'linear' or 'log'", "spacing")
        if self.spacing == "log" and not (self.start > 0 and self.stop > 0):
            raise ConfigError("log spacing needs a positive range", "start")
        if self.param == "omega_c" and not (self.start > 0 and self.stop > 0):
            raise ConfigError("omega_c range must be positive", "start")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive", "alpha")
        if self.spectral == "lorentzian":
            if self.lam is None:
                object.__setattr__(self, "lam", 0.1)
            if not self.lam > 0:
                raise ConfigError("lambda must be positive", "lambda")
        elif self.lam is not None:
            raise ConfigError("lambda applies to Lorentzian sweeps only", "lambda")
        bad = [e for e in self.engines if e not in SWEEP_ENGINES]
        if bad or not self.engines:
            raise ConfigError(f"engines must be a non-empty subset of {SWEEP_ENGINES}", "engines")
        object.__setattr__(self, "engines", tuple(self.engines))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", "workers")
        if not self.horizon_factor > 0:
            raise ConfigError("horizon_factor must be positive", "horizon_factor")
        if self.n_polar < 2 or self.n_azimuth < 2:
            raise ConfigError("optimizer grid needs n_polar, n_azimuth >= 2", "n_polar")
        if self.restarts < 0:
            raise ConfigError("restarts must be >= 0", "restarts")
        if self.cpt_times < 0:
            raise ConfigError("cpt_times must be >= 0", "cpt_times")

    def values(self):
        import numpy as np

        if self.spacing == "log":
            return np.geomspace(self.start, self.stop, self.points)
        return np.linspace(self.start, self.stop, self.points)

    def provenance(self):
        """Ordered key/value pairs for the CSV header (excludes worker count)."""
        d = asdict(self)
        d.pop("extra")
        d.pop("workers")
        d.pop("out")
        d["lambda"] = d.pop("lam")
        d["engines"] = ",".join(self.engines)
        return d


def _line_of(exc):
    # tomli messages end with "(at line N, column M)"
    msg = str(exc)
    if "line " in msg:
        try:
            return int(msg.split("line ")[-1].split(",")[0].split(")")[0])
        except ValueError:
            return None
    return None


def parse_config(text, source="<string>"):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = _line_of(exc)
        where = f"{source}:{line}" if line else source
        raise ConfigError(f"{where}: parse error: {exc}", line=line) from None
    unknown = set(data) - _TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r}", key)
    sweep = data.get("sweep")
    if not isinstance(sweep, dict):
        raise ConfigError("missing [sweep] table", "sweep")
    unknown = set(sweep) - _SWEEP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key sweep.{key}", f"sweep.{key}")
    run = data.get("run", {})
    if not isinstance(run, dict):
        raise ConfigError("[run] must be a table", "run")
    unknown = set(run) - _RUN_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key run.{key}", f"run.{key}")
    if "spectral" not in data:
        raise ConfigError("missing key 'spectral'", "spectral")
    spectral = data["spectral"]
    param = sweep.get("param", SWEEP_PARAMS.get(spectral, ("?",))[0])
    # the swept parameter may not also be fixed, and a family's foreign
    # parameters are rejected
    for key, family in (("omega_c", "ohmic"), ("lambda", "lorentzian"), ("delta", "lorentzian")):
        if key in data and spectral != family:
            raise ConfigError(f"{key} does not apply to a {spectral} sweep", key)
    if param in data:
        raise ConfigError(f"{param} is the swept parameter and cannot be fixed", param)
    for key in ("start", "stop"):
        if key not in sweep:
            raise ConfigError(f"missing sweep.{key}", key)
    kw = dict(spectral=spectral, param=param, alpha=data.get("alpha", 0.01),
              lam=data.get("lambda"))
    kw.update({k: sweep[k] for k in ("start", "stop", "points", "spacing") if k in sweep})
    kw.update(run)
    if "engines" in kw:
        kw["engines"] = tuple(kw["engines"])
    try:
        for k in ("start", "stop", "alpha", "horizon_factor"):
            if k in kw:
                kw[k] = float(kw[k])
        if kw.get("lam") is not None:
            kw["lam"] = float(kw["lam"])
    except (TypeError, ValueError):
        raise ConfigError(f"{k} must be a number", "lambda" if k == "lam" else k) from None
    for k in ("points", "workers", "seed", "n_polar", "n_azimuth", "restarts", "cpt_times"):
        if k in kw and not isinstance(kw[k], int):
            raise ConfigError(f"{k} must be an integer", k)
    return SweepSpec(**kw)


def load_config(path):
    """Parse and validate a TOML sweep file into a SweepSpec."""
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text, source=str(path))
