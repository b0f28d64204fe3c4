"""Run configuration: an INI file with fixed sections.

Schema (every key optional unless marked)::

    [experiment]
    kind        = single_agent_exp3 | single_agent_fkm | wrapped_exp3 | wrapped_fkm
                  | zero_sum_game | finite_game_cce | proposition1 | proposition2   (required)
    horizon     = int                      (required)
    seeds       = int                      (default 1)
    root_seed   = int                      (default 0)
    output_dir  = path                     (default runs/<kind>)

    [delay]                                 one schedule; games may add [delay.player2] ...
    kind        = constant | power_law | linear | linear_log | explicit | random_bounded
    d, alpha, max, seed, values (comma-separated)

    [algorithm]
    arms        = int (EXP3 arm count)
    eta         = auto | float              auto: tuned for the known horizon/delays
    eta_form    = fixed | power_log | loglog
    eta_c, eta_power                        time-varying coefficients
    clamp_eta   = bool                      clamp EXP3 step sizes below e^-2/2
    gamma_mode  = zero | eta
    filter      = bool                      EXP3 long-delay filter
    dim, body (ball | box), body_size
    delta       = auto | float
    delta0      = float                     wrapped FKM base radius

    [adversary]
    kind        = bernoulli | gap | minimax_gap | switching | quadratic | linear | switching_quadratic
    means       = auto | comma-separated floats
    gap         = float

    [game]
    name        = matching_pennies | rock_paper_scissors | chicken | coordination | quadratic_saddle
    weights     = indicator | probability

    [output]
    trajectories = all | checkpoints | none
    checkpoints  = auto | comma-separated ints
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any

from .delays import DelaySchedule
from .errors import ConfigurationError


class ExperimentKind(str, Enum):
    SINGLE_AGENT_EXP3 = "single_agent_exp3"
    SINGLE_AGENT_FKM = "single_agent_fkm"
    WRAPPED_EXP3 = "wrapped_exp3"
    WRAPPED_FKM = "wrapped_fkm"
    ZERO_SUM_GAME = "zero_sum_game"
    FINITE_GAME_CCE = "finite_game_cce"
    PROPOSITION1 = "proposition1"
    PROPOSITION2 = "proposition2"


@dataclass
class DelaySpec:
    kind: str = "constant"
    d: int = 1
    alpha: float = 1.0
    max: int = 1
    seed: int | None = None
    values: tuple[int, ...] = ()

    def build(self, default_seed: int = 0) -> DelaySchedule:
        k = self.kind
        if k == "constant":
            return DelaySchedule.constant(self.d)
        if k == "power_law":
            return DelaySchedule.power_law(self.alpha)
        if k == "linear":
            return DelaySchedule.linear()
        if k == "linear_log":
            return DelaySchedule.linear_log()
        if k == "explicit":
            return DelaySchedule.explicit(self.values)
        if k == "random_bounded":
            return DelaySchedule.random_bounded(self.max, default_seed if self.seed is None else self.seed)
        raise ConfigurationError(f"unknown delay kind {k!r}")


# field name -> (section, key)
_LAYOUT = {
    "kind": ("experiment", "kind"),
    "horizon": ("experiment", "horizon"),
    "seeds": ("experiment", "seeds"),
    "root_seed": ("experiment", "root_seed"),
    "output_dir": ("experiment", "output_dir"),
    "arms": ("algorithm", "arms"),
    "eta": ("algorithm", "eta"),
    "eta_form": ("algorithm", "eta_form"),
    "eta_c": ("algorithm", "eta_c"),
    "eta_power": ("algorithm", "eta_power"),
    "clamp_eta": ("algorithm", "clamp_eta"),
    "gamma_mode": ("algorithm", "gamma_mode"),
    "filter": ("algorithm", "filter"),
    "dim": ("algorithm", "dim"),
    "body": ("algorithm", "body"),
    "body_size": ("algorithm", "body_size"),
    "delta": ("algorithm", "delta"),
    "delta0": ("algorithm", "delta0"),
    "adversary": ("adversary", "kind"),
    "means": ("adversary", "means"),
    "gap": ("adversary", "gap"),
    "game": ("game", "name"),
    "weights": ("game", "weights"),
    "trajectories": ("output", "trajectories"),
    "checkpoints": ("output", "checkpoints"),
}

_DELAY_KEYS = ("kind", "d", "alpha", "max", "seed", "values")

# non-numeric values of eta/delta: "auto" before resolution; after it,
# "schedule" (time-varying form given by eta_form), "doubling" (chosen per
# super-epoch, listed in the manifest) or "n/a" (unused by the kind)
PARAM_TOKENS = ("auto", "schedule", "doubling", "n/a")


@dataclass
class RunConfig:
    kind: ExperimentKind
    horizon: int
    seeds: int = 1
    root_seed: int = 0
    output_dir: str = ""
    delay: DelaySpec = field(default_factory=DelaySpec)
    player_delays: dict[int, DelaySpec] = field(default_factory=dict)
    arms: int = 2
    eta: Any = "auto"
    eta_form: str = "fixed"
    eta_c: float = 1.0
    eta_power: float = 1.0
    clamp_eta: bool = False
    gamma_mode: str = "zero"
    filter: bool = True
    dim: int = 2
    body: str = "ball"
    body_size: float = 1.0
    delta: Any = "auto"
    delta0: float = 0.5
    adversary: str = "auto"
    means: Any = "auto"
    gap: float = 0.2
    game: str = "matching_pennies"
    weights: str = "indicator"
    trajectories: str = "all"
    checkpoints: Any = "auto"

    def __post_init__(self) -> None:
        try:
            self.kind = ExperimentKind(self.kind)
        except ValueError as exc:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}") from exc
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.seeds < 1:
            raise ConfigurationError("seeds must be >= 1")
        if not self.output_dir:
            self.output_dir = f"runs/{self.kind.value}"
        if self.gamma_mode not in ("zero", "eta"):
            raise ConfigurationError("gamma_mode must be 'zero' or 'eta'")
        if self.eta_form not in ("fixed", "power_log", "loglog"):
            raise ConfigurationError(f"unknown eta_form {self.eta_form!r}")
        if self.trajectories not in ("all", "checkpoints", "none"):
            raise ConfigurationError("trajectories must be all, checkpoints or none")
        if self.weights not in ("indicator", "probability"):
            raise ConfigurationError("weights must be indicator or probability")
        if self.body not in ("ball", "box"):
            raise ConfigurationError("body must be ball or box")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def delay_for(self, player: int) -> DelaySpec:
        """Delay spec of ``player`` (1-based); falls back to the shared one."""
        return self.player_delays.get(player, self.delay)

    def checkpoint_list(self) -> list[int]:
        if self.checkpoints != "auto":
            cps = sorted({int(c) for c in self.checkpoints if int(c) <= self.horizon})
            return cps or [self.horizon]
        cps = [2**k for k in range(10, 64) if 2**k <= self.horizon]
        if not cps or cps[-1] != self.horizon:
            cps.append(self.horizon)
        return cps

    # ------------------------------------------------------------ serialisation

    def to_parser(self) -> configparser.ConfigParser:
        cp = configparser.ConfigParser(interpolation=None)
        for name, (sec, key) in _LAYOUT.items():
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, key, _fmt(getattr(self, name)))
        _write_delay(cp, "delay", self.delay)
        for p, spec in sorted(self.player_delays.items()):
            _write_delay(cp, f"delay.player{p}", spec)
        return cp

    def to_ini(self) -> str:
        buf = io.StringIO()
        self.to_parser().write(buf)
        return buf.getvalue()

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "RunConfig":
        kw: dict[str, Any] = {}
        types = {f.name: f.type for f in fields(cls)}
        for name, (sec, key) in _LAYOUT.items():
            if cp.has_option(sec, key):
                kw[name] = _parse(name, cp.get(sec, key), types[name])
        if "kind" not in kw or "horizon" not in kw:
            raise ConfigurationError("config needs [experiment] kind and horizon")
        if cp.has_section("delay"):
            kw["delay"] = _read_delay(cp, "delay")
        players = {}
        for sec in cp.sections():
            if sec.startswith("delay.player"):
                try:
                    idx = int(sec[len("delay.player"):])
                except ValueError as exc:
                    raise ConfigurationError(f"bad section name [{sec}]") from exc
                players[idx] = _read_delay(cp, sec)
        kw["player_delays"] = players
        return cls(**kw)

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"unreadable config: {exc}") from exc
        return cls.from_parser(cp)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file not found: {p}")
        return cls.from_ini(p.read_text(encoding="utf-8"))

    def with_param(self, name: str, raw: str) -> "RunConfig":
        """Copy with one field replaced from its text form (used by sweeps)."""
        if "." in name:
            sec, key = name.split(".", 1)
            if sec == "delay":
                spec = dataclasses.replace(self.delay, **{key: _parse_delay(key, raw)})
                return self.replace(delay=spec)
            matches = [n for n, sk in _LAYOUT.items() if sk == (sec, key)]
            if not matches:
                raise ConfigurationError(f"unknown parameter {name!r}")
            name = matches[0]
        types = {f.name: f.type for f in fields(self)}
        if name not in _LAYOUT:
            raise ConfigurationError(f"unknown parameter {name!r}")
        return self.replace(**{name: _parse(name, raw, types[name])})


def _fmt(v: Any) -> str:
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _parse(name: str, raw: str, typ: Any) -> Any:
    raw = raw.strip()
    try:
        if name in ("eta", "delta"):
            return raw if raw in PARAM_TOKENS else float(raw)
        if name == "means":
            return raw if raw in ("auto", "n/a") else tuple(float(x) for x in raw.split(","))
        if name == "checkpoints":
            return raw if raw == "auto" else tuple(int(x) for x in raw.split(","))
        if typ in ("int", int):
            return int(raw)
        if typ in ("float", float):
            return float(raw)
        if typ in ("bool", bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from exc


def _parse_delay(key: str, raw: str) -> Any:
    raw = raw.strip()
    try:
        if key in ("d", "max"):
            return int(raw)
        if key == "seed":
            return None if raw in ("", "auto") else int(raw)
        if key == "alpha":
            return float(raw)
        if key == "values":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if key == "kind":
            return raw
    except ValueError as exc:
        raise ConfigurationError(f"bad delay value for {key}: {raw!r}") from exc
    raise ConfigurationError(f"unknown delay key {key!r}")


def _read_delay(cp: configparser.ConfigParser, sec: str) -> DelaySpec:
    kw = {}
    for key in cp.options(sec):
        if key not in _DELAY_KEYS:
            raise ConfigurationError(f"unknown key {key!r} in [{sec}]")
        kw[key] = _parse_delay(key, cp.get(sec, key))
    return DelaySpec(**kw)


def _write_delay(cp: configparser.ConfigParser, sec: str, spec: DelaySpec) -> None:
    cp.add_section(sec)
    cp.set(sec, "kind", spec.kind)
    if spec.kind == "constant":
        cp.set(sec, "d", str(spec.d))
    elif spec.kind == "power_law":
        cp.set(sec, "alpha", repr(float(spec.alpha)))
    elif spec.kind == "random_bounded":
        cp.set(sec, "max", str(spec.max))
        if spec.seed is not None:
            cp.set(sec, "seed", str(spec.seed))
    elif spec.kind == "explicit":
        cp.set(sec, "values", ", ".join(str(v) for v in spec.values))
