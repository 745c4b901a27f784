"""Run configuration: a TOML (or JSON) file describing system, grids,
synthesis, simulation and output choices.

Example::

    [system]
    preset = "bm-oscillator"      # or give the system inline:
    # A = [["0", "-b"], ["b", "0"]]
    # B = [["1", "0"], ["0", "1"]]
    # G = [["0.1"], ["0.2"]]
    # X0 = ["1", "0"]
    # XF = ["0", "0"]
    # K = [[-10, 10]]
    # T = 1.0
    # noise = { kind = "brownian", intensities = [] }

    [grids]
    N = 40000
    P = 21                        # or one count per parameter dimension

    [synthesis]
    q = 5                         # omit to select by condition ratio
    max_condition = 1e4

    [simulation]
    scheme = "em"
    h = 5e-4
    trials = 400
    seed = 7

    [outputs]
    directory = "out"
    plot = true

Matrix entries are expression strings in ``t`` and the parameters ``b1``,
``b2``, ... (``b`` when there is a single parameter).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import tomli
import tomli_w

from .errors import ConfigError, EnsembleError
from .model import (EXAMPLES, SIMULATION_DEFAULTS, EnsembleSystem, ParameterGrid, TimeGrid,
                    builtin_example, uniform_parameter_grid)
from .sde import SCHEMES

__all__ = ["RunConfig", "load_config", "config_from_dict", "config_to_dict", "dump_config",
           "system_to_dict", "system_from_dict"]

_SECTIONS = {"system", "grids", "synthesis", "simulation", "outputs"}


@dataclass(frozen=True)
class RunConfig:
    system: EnsembleSystem
    N: int
    P: Union[int, tuple]
    preset: Optional[str] = None
    q: Optional[int] = None
    max_condition: float = 1e4
    method: str = "auto"
    scheme: str = "em"
    h: float = 1e-3
    trials: int = 100
    seed: int = 0
    control_file: Optional[str] = None
    directory: str = "out"
    plot: bool = True
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def time_grid(self):
        return TimeGrid(self.N, self.system.T)

    @property
    def param_grid(self) -> ParameterGrid:
        return uniform_parameter_grid(self.system.K_bounds, self.P)

    def with_overrides(self, **kw):
        """Copy with every non-None keyword applied, then re-validated."""
        kw = {k: v for k, v in kw.items() if v is not None}
        return _validated(replace(self, **kw)) if kw else self


def _validated(cfg):
    P_total = 1
    for p in (cfg.P if isinstance(cfg.P, tuple) else (cfg.P,)):
        if p < 1:
            raise ConfigError("P must be positive")
        P_total *= p
    if isinstance(cfg.P, tuple) and len(cfg.P) != cfg.system.d:
        raise ConfigError(f"P lists {len(cfg.P)} counts for {cfg.system.d} parameter dimensions")
    if cfg.N < 1:
        raise ConfigError("N must be positive")
    n, m = cfg.system.n, cfg.system.m
    if n * P_total > m * cfg.N:
        raise ConfigError(f"grid is overdetermined: n*P = {n * P_total} exceeds "
                          f"m*N = {m * cfg.N}; need n*P <= m*N")
    if cfg.q is not None and not 1 <= cfg.q <= P_total:
        raise ConfigError(f"q = {cfg.q} must lie in [1, P] = [1, {P_total}]")
    if not cfg.max_condition > 1:
        raise ConfigError("max_condition must exceed 1")
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {cfg.scheme!r}; choose from {', '.join(SCHEMES)}")
    if not cfg.h > 0:
        raise ConfigError("h must be positive")
    if cfg.trials < 1:
        raise ConfigError("trials must be positive")
    return cfg


# systems <-> plain data --------------------------------------------------------


def _matrix(rows):
    return [[str(e) for e in row] for row in rows]


def system_to_dict(sys: EnsembleSystem):
    out = {"name": sys.name, "A": _matrix(sys.A), "B": _matrix(sys.B), "G": _matrix(sys.G),
           "X0": [str(e) for e in sys.X0], "XF": [str(e) for e in sys.XF],
           "K": [list(map(float, b)) for b in sys.K_bounds], "T": float(sys.T),
           "noise": {"kind": sys.noise.kind, "intensities": list(sys.noise.intensities)}}
    if sys.note:
        out["note"] = sys.note
    return out


def _entries(value, label):
    if not isinstance(value, list):
        raise ConfigError(f"system.{label} must be a list")
    out = []
    for row in value:
        if isinstance(row, list):
            out.append([_entry(x, label) for x in row])
        else:
            out.append(_entry(row, label))
    return out


def _entry(x, label):
    if isinstance(x, bool) or not isinstance(x, (str, int, float)):
        raise ConfigError(f"system.{label} entries must be strings or numbers")
    return x if isinstance(x, str) else repr(float(x))


def system_from_dict(data):
    missing = [k for k in ("A", "B", "G", "X0", "XF", "K", "T") if k not in data]
    if missing:
        raise ConfigError(f"inline system is missing {', '.join(missing)}")
    noise = data.get("noise", {"kind": "brownian"})
    if isinstance(noise, str):
        noise = {"kind": noise}
    try:
        K = [tuple(float(v) for v in b) for b in data["K"]]
        if any(len(b) != 2 for b in K):
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigError("system.K must be a list of [lower, upper] pairs") from None
    return EnsembleSystem.build(
        A=_entries(data["A"], "A"), B=_entries(data["B"], "B"), G=_entries(data["G"], "G"),
        K_bounds=K, T=float(data["T"]), X0=_entries(data["X0"], "X0"),
        XF=_entries(data["XF"], "XF"), noise=noise.get("kind", "brownian"),
        intensities=noise.get("intensities", ()), name=str(data.get("name", "")),
        note=str(data.get("note", "")))


# whole configuration ---------------------------------------------------------------


def config_from_dict(data):
    """Validated :class:`RunConfig` from parsed TOML/JSON data.

    Unknown top-level tables (such as the ``result`` table written into
    run metadata) are kept in ``extra`` and otherwise ignored.
    """
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    system = data.get("system", {})
    grids = data.get("grids", {})
    synth = data.get("synthesis", {})
    sim = data.get("simulation", {})
    outputs = data.get("outputs", {})
    preset = system.get("preset")
    try:
        if preset is not None:
            if preset not in EXAMPLES:
                raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(EXAMPLES)}")
            ex = builtin_example(preset)
            sysobj, N, P, q = ex.system, ex.time_grid.N, ex.param_grid.shape, ex.q
            scheme, h, trials = SIMULATION_DEFAULTS[preset]
            if len(system) > 1:
                raise ConfigError("give either system.preset or an inline system, not both")
        else:
            sysobj = system_from_dict(system)
            N, P, q = None, None, None
            scheme = "em" if sysobj.noise.kind != "poisson" else "poisson"
            if sysobj.noise.kind == "none":
                scheme = "rk4"
            h, trials = None, 100
        N = grids.get("N", N)
        P = grids.get("P", P)
        if N is None or P is None:
            raise ConfigError("grids.N and grids.P are required for an inline system")
        if isinstance(P, (list, tuple)):
            P = tuple(int(p) for p in P)
            if len(P) == 1:
                P = P[0]
        q = synth.get("q", q)
        h = sim.get("h", h if h is not None else sysobj.T / 1000)
        cfg = RunConfig(
            system=sysobj, N=int(N), P=P if isinstance(P, tuple) else int(P), preset=preset,
            q=None if q is None else int(q),
            max_condition=float(synth.get("max_condition", 1e4)),
            method=str(synth.get("method", "auto")),
            scheme=str(sim.get("scheme", scheme)), h=float(h),
            trials=int(sim.get("trials", trials)), seed=int(sim.get("seed", 0)),
            control_file=sim.get("control"),
            directory=str(outputs.get("directory", "out")), plot=bool(outputs.get("plot", True)),
            extra={k: v for k, v in data.items() if k not in _SECTIONS})
    except ConfigError:
        raise
    except EnsembleError as exc:
        raise ConfigError(f"{exc.code}: {exc}") from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    return _validated(cfg)


def config_to_dict(cfg: RunConfig):
    """Plain-data form with the system always written inline."""
    synth = {"max_condition": cfg.max_condition, "method": cfg.method}
    if cfg.q is not None:
        synth["q"] = cfg.q
    sim = {"scheme": cfg.scheme, "h": cfg.h, "trials": cfg.trials, "seed": cfg.seed}
    if cfg.control_file:
        sim["control"] = cfg.control_file
    return {
        "system": system_to_dict(cfg.system),
        "grids": {"N": cfg.N, "P": list(cfg.P) if isinstance(cfg.P, tuple) else cfg.P},
        "synthesis": synth,
        "simulation": sim,
        "outputs": {"directory": cfg.directory, "plot": cfg.plot},
    }


def load_config(path):
    """Read a TOML file, or JSON when the suffix is ``.json``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else tomli.loads(text)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def dump_config(data, path):
    Path(path).write_text(tomli_w.dumps(data))
