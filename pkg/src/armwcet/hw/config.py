"""Hardware parameters and the flat ``key = value`` config format."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from ..errors import ConfigError, InvalidGeometry

CACHE_BYTES = 16384
WB_WORDS = 16


@dataclass(frozen=True)
class HwConfig:
    """Timing and geometry of the modelled core.

    Both caches share one geometry.  ``wb_drain_cycles`` of ``None`` means
    ``mainmem_trans`` per half-line entry.  ``dur_*`` give the [min, max]
    E-stage cycles per instruction class.
    """

    mainmem_trans: int = 10
    cache_speed: int = 1
    sets: int = 64
    ways: int = 8
    line_bytes: int = 32
    replacement: str = "fifo"
    write_policy: str = "write-through"
    wb_entries: int = 4
    wb_drain_cycles: Optional[int] = None
    dur_default: tuple = (1, 1)
    dur_mul: tuple = (3, 6)
    dur_mla: tuple = (3, 6)
    dur_smull: tuple = (4, 7)
    init_sp: int = 0x1000
    state_budget: int = 50_000_000
    sim_step_limit: int = 10_000_000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("sets", "ways", "line_bytes"):
            v = getattr(self, name)
            if v <= 0 or v & (v - 1):
                raise InvalidGeometry(f"{name} must be a positive power of two, got {v}")
        if self.line_bytes < 8:
            raise InvalidGeometry("line_bytes must hold at least two words")
        if self.sets * self.ways * self.line_bytes != CACHE_BYTES:
            raise InvalidGeometry(
                f"sets x ways x line_bytes = {self.sets * self.ways * self.line_bytes}, expected {CACHE_BYTES}")
        if self.wb_entries * self.halfline_words != WB_WORDS:
            raise InvalidGeometry(
                f"write buffer holds {self.wb_entries} x {self.halfline_words} words, expected {WB_WORDS}")
        if self.replacement != "fifo":
            raise ConfigError(f"unsupported replacement policy {self.replacement!r}")
        if self.write_policy not in ("write-through", "write-back"):
            raise ConfigError(f"unknown write policy {self.write_policy!r}")
        if self.mainmem_trans < 1 or self.cache_speed < 1:
            raise ConfigError("mainmem_trans and cache_speed must be at least 1")
        if self.wb_drain_cycles is not None and self.wb_drain_cycles < 1:
            raise ConfigError("wb_drain_cycles must be at least 1")
        for name in ("dur_default", "dur_mul", "dur_mla", "dur_smull"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ConfigError(f"{name} must satisfy 1 <= min <= max, got {lo},{hi}")

    @property
    def halfline_words(self) -> int:
        return self.line_bytes // 8

    @property
    def drain_cycles(self) -> int:
        return self.mainmem_trans if self.wb_drain_cycles is None else self.wb_drain_cycles

    @property
    def write_back(self) -> bool:
        return self.write_policy == "write-back"

    def durations(self, duration_class: str) -> tuple:
        return getattr(self, f"dur_{duration_class}", self.dur_default)

    def pinned(self, mode: str) -> "HwConfig":
        """Copy with every duration range collapsed to its min or max."""
        idx = {"min": 0, "max": 1}[mode]
        return replace(self, **{n: (getattr(self, n)[idx],) * 2
                                for n in ("dur_default", "dur_mul", "dur_mla", "dur_smull")})

    def to_dict(self) -> dict:
        return asdict(self)


_TUPLE_KEYS = {"dur_default", "dur_mul", "dur_mla", "dur_smull"}
_STR_KEYS = {"replacement", "write_policy"}


def _int(key, text):
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def parse_config(text: str) -> HwConfig:
    """Parse flat ``key = value`` lines; unknown keys are errors."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string("[hw]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {f.name for f in fields(HwConfig)}
    values = {}
    for key, raw in cp["hw"].items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")
        raw = raw.strip()
        if key in _TUPLE_KEYS:
            parts = [p for p in raw.replace("-", ",").replace("[", "").replace("]", "").split(",") if p.strip()]
            if len(parts) == 1:
                parts = parts * 2
            if len(parts) != 2:
                raise ConfigError(f"{key}: expected 'min,max', got {raw!r}")
            values[key] = tuple(_int(key, p.strip()) for p in parts)
        elif key in _STR_KEYS:
            values[key] = raw.lower()
        elif key == "wb_drain_cycles" and raw.lower() in ("", "none"):
            values[key] = None
        else:
            values[key] = _int(key, raw)
    return HwConfig(**values)


def load_config(path) -> HwConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def render_config(cfg: HwConfig) -> str:
    lines = []
    for f in fields(HwConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = f"{v[0]},{v[1]}"
        elif v is None:
            v = "none"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
