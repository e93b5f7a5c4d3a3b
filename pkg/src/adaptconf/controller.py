"""Mode selection with hysteresis, per-mode demand models and knob adaptation.

The controller keeps three persistence counters over the capacity proxy:
samples below ``tau_low``, samples at or above ``tau_high`` and samples in
between. A counter that reaches ``N_stable = ceil(t_stable / delta_t)``
selects its mode (AI, Normal, Low-bitrate respectively); while no counter
is ripe the current mode is kept.

On top of the hysteresis mode sits a feasibility ladder
(Normal -> Low-bitrate -> AI -> audio-only): when the demand of the selected
mode does not fit the capacity even after knob adaptation, the controller
steps down one rung. Ladder steps need the same persistence as hysteresis
switches, so no two mode changes are closer than ``N_stable`` samples.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple, Optional

from .errors import ConfigError


class Mode(str, enum.Enum):
    NORMAL = "normal"
    LOW_BITRATE = "low_bitrate"
    AI = "ai"
    AUDIO_ONLY = "audio_only"

    def __str__(self) -> str:
        return self.value


LADDER = (Mode.NORMAL, Mode.LOW_BITRATE, Mode.AI, Mode.AUDIO_ONLY)

# Low-bitrate (eta, gamma) choices, largest demand first.
LB_LADDER = ((0.75, 1.0), (0.5, 1.0), (0.5, 0.5), (0.25, 0.5))
F_CTRL_LADDER = (25.0, 15.0, 10.0, 5.0)
D_BITS_LADDER = (10, 8, 6)
T_REF_CAP = 600.0


@dataclass(frozen=True)
class ControllerConfig:
    tau_low: float = 300.0
    tau_high: float = 800.0
    t_stable: float = 5.0
    delta_t: float = 1.0
    audio_rate: float = 24.0
    video_rate_normal: float = 1400.0
    eta: float = 1.0
    gamma: float = 1.0
    f_ctrl: float = 25.0
    n_desc: int = 68
    d_bits: int = 10
    s_ref: float = 400_000.0
    t_ref: float = 60.0
    # The capacity proxy is bounded by the sender's own rate, so an idle
    # link reports slightly less than the demand; feasibility checks scale
    # the proxy by this factor before comparing.
    headroom: float = 1.5

    def __post_init__(self):
        if not self.tau_low < self.tau_high:
            raise ConfigError("controller.tau_low", "must be < tau_high")
        if not self.t_stable > 0:
            raise ConfigError("controller.t_stable", "must be > 0")
        if not self.delta_t > 0:
            raise ConfigError("controller.delta_t", "must be > 0")
        for name in ("eta", "gamma"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"controller.{name}", "must lie in (0, 1]")
        for name in ("audio_rate", "video_rate_normal", "f_ctrl", "n_desc", "d_bits", "s_ref"):
            if getattr(self, name) < 0:
                raise ConfigError(f"controller.{name}", "must be >= 0")
        if not self.t_ref > 0:
            raise ConfigError("controller.t_ref", "must be > 0")
        if not self.headroom >= 1:
            raise ConfigError("controller.headroom", "must be >= 1")

    @functools.cached_property
    def n_stable(self) -> int:
        # round first so that e.g. 0.3 / 0.1 does not become 4
        return max(1, math.ceil(round(self.t_stable / self.delta_t, 9)))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class RateDemand:
    audio: float
    video: float
    control: float
    reference: float

    @property
    def total(self) -> float:
        return self.audio + self.video + self.control + self.reference


@dataclass(frozen=True)
class ControllerState:
    mode: Mode = Mode.NORMAL
    n_down: int = 0
    n_up: int = 0
    n_mid: int = 0
    last_switch_t: Optional[float] = None
    # hysteresis-selected mode before any feasibility fallback
    base_mode: Mode = Mode.NORMAL
    fallback_depth: int = 0
    n_infeasible: int = 0
    n_recover: int = 0


def _evolve(state: ControllerState, **changes) -> ControllerState:
    # dataclasses.replace without re-running field machinery; the state has no validation
    new = object.__new__(ControllerState)
    new.__dict__.update(state.__dict__)
    new.__dict__.update(changes)
    return new


def update_counters(state: ControllerState, capacity: float, cfg: ControllerConfig) -> ControllerState:
    below = capacity < cfg.tau_low
    above = capacity >= cfg.tau_high
    return _evolve(
        state,
        n_down=state.n_down + 1 if below else 0,
        n_up=state.n_up + 1 if above else 0,
        n_mid=state.n_mid + 1 if not (below or above) else 0,
    )


def decide_mode(state: ControllerState, cfg: ControllerConfig) -> Mode:
    """Hysteresis mode for the current counters.

    Only a ripe counter changes the mode; otherwise the hysteresis mode is
    retained, so capacity hovering around one threshold cannot toggle it.
    """
    n = cfg.n_stable
    if state.n_down >= n:
        return Mode.AI
    if state.n_up >= n:
        return Mode.NORMAL
    if state.n_mid >= n:
        return Mode.LOW_BITRATE
    return state.base_mode


def demand_normal(cfg: ControllerConfig) -> RateDemand:
    return RateDemand(audio=cfg.audio_rate, video=cfg.video_rate_normal, control=0.0, reference=0.0)


def demand_low_bitrate(cfg: ControllerConfig) -> RateDemand:
    video = cfg.eta * cfg.eta * cfg.gamma * cfg.video_rate_normal
    return RateDemand(audio=cfg.audio_rate, video=video, control=0.0, reference=0.0)


def control_rate(f_ctrl: float, n_desc: int, d_bits: int) -> float:
    return f_ctrl * n_desc * d_bits / 1000.0


def reference_rate(s_ref: float, t_ref: float) -> float:
    if not t_ref > 0:
        raise ConfigError("controller.t_ref", "must be > 0")
    return s_ref / (1000.0 * t_ref)


def demand_ai(cfg: ControllerConfig) -> RateDemand:
    return RateDemand(
        audio=cfg.audio_rate,
        video=0.0,
        control=control_rate(cfg.f_ctrl, cfg.n_desc, cfg.d_bits),
        reference=reference_rate(cfg.s_ref, cfg.t_ref),
    )


def demand_audio_only(cfg: ControllerConfig) -> RateDemand:
    return RateDemand(audio=cfg.audio_rate, video=0.0, control=0.0, reference=0.0)


_DEMAND = {
    Mode.NORMAL: demand_normal,
    Mode.LOW_BITRATE: demand_low_bitrate,
    Mode.AI: demand_ai,
    Mode.AUDIO_ONLY: demand_audio_only,
}


def demand_for(mode: Mode, cfg: ControllerConfig) -> RateDemand:
    return _DEMAND[mode](cfg)


def feasible(demand: RateDemand, capacity: float) -> bool:
    return demand.total <= capacity


class KnobChoice(NamedTuple):
    config: ControllerConfig
    needs_fallback: bool


def _ai_candidates(cfg: ControllerConfig) -> list[ControllerConfig]:
    f_values = [cfg.f_ctrl] + [f for f in F_CTRL_LADDER if f < cfg.f_ctrl]
    d_values = [cfg.d_bits] + [d for d in D_BITS_LADDER if d < cfg.d_bits]
    t_values = [cfg.t_ref]
    while t_values[-1] < T_REF_CAP:
        t_values.append(min(t_values[-1] * 2.0, T_REF_CAP))
    out = [
        replace(cfg, f_ctrl=f, d_bits=d, t_ref=t)
        for f in f_values
        for d in d_values
        for t in t_values
    ]
    # highest demand first; ties prefer higher f_ctrl, then finer d, then fresher reference
    out.sort(key=lambda c: (-demand_ai(c).total, -c.f_ctrl, -c.d_bits, c.t_ref))
    return out


@functools.lru_cache(maxsize=256)
def _ladder(cfg: ControllerConfig, mode: Mode) -> tuple[tuple[ControllerConfig, float], ...]:
    """Knob settings of ``mode`` with their demand, richest first."""
    if mode is Mode.LOW_BITRATE:
        cands = [replace(cfg, eta=e, gamma=g) for e, g in LB_LADDER]
    else:
        cands = _ai_candidates(cfg)
    return tuple((c, demand_for(mode, c).total) for c in cands)


def adapt_knobs(cfg: ControllerConfig, mode: Mode, capacity: float) -> KnobChoice:
    """Pick the richest knob setting of ``mode`` whose demand fits ``capacity``.

    ``cfg`` carries the configured defaults. When nothing on the ladder fits,
    the cheapest setting is returned with ``needs_fallback`` set.
    """
    if mode is Mode.NORMAL or mode is Mode.AUDIO_ONLY:
        return KnobChoice(cfg, not feasible(demand_for(mode, cfg), capacity))
    if mode is Mode.AI and feasible(demand_ai(cfg), capacity):
        return KnobChoice(cfg, False)
    ladder = _ladder(cfg, mode)
    for cand, total in ladder:
        if total <= capacity:
            return KnobChoice(cand, False)
    return KnobChoice(ladder[-1][0], True)


def fallback_mode(mode: Mode, demand_infeasible: bool) -> Mode:
    if not demand_infeasible:
        return mode
    idx = LADDER.index(mode)
    return LADDER[min(idx + 1, len(LADDER) - 1)]


def step_down(mode: Mode, depth: int) -> Mode:
    return LADDER[min(LADDER.index(mode) + depth, len(LADDER) - 1)]


@dataclass(frozen=True)
class Decision:
    """Outcome of one controller step (one row of the mode timeline)."""

    t: float
    capacity: float
    mode: Mode
    previous: Mode
    knobs: ControllerConfig
    demand: RateDemand
    feasible: bool
    state: ControllerState

    @property
    def switched(self) -> bool:
        return self.mode is not self.previous


@dataclass
class Controller:
    """Sequential state machine; one instance per endpoint."""

    cfg: ControllerConfig = field(default_factory=ControllerConfig)
    state: ControllerState = field(default_factory=ControllerState)

    def __post_init__(self):
        self.knobs = self.cfg

    @property
    def mode(self) -> Mode:
        return self.state.mode

    def step(self, t: float, capacity: float) -> Decision:
        cfg = self.cfg
        n = cfg.n_stable
        prev = self.state
        s = update_counters(prev, capacity, cfg)
        band_settled = max(s.n_down, s.n_up, s.n_mid) >= n

        base = decide_mode(s, cfg)
        if base is not s.base_mode:
            s = _evolve(s, base_mode=base, fallback_depth=0, n_infeasible=0, n_recover=0)

        budget = capacity * cfg.headroom
        mode = step_down(s.base_mode, s.fallback_depth)
        choice = adapt_knobs(cfg, mode, budget)

        if choice.needs_fallback and mode is not Mode.AUDIO_ONLY:
            s = _evolve(s, n_infeasible=s.n_infeasible + 1, n_recover=0)
            if s.n_infeasible >= n and band_settled:
                s = _evolve(s, fallback_depth=s.fallback_depth + 1, n_infeasible=0)
                mode = step_down(s.base_mode, s.fallback_depth)
                choice = adapt_knobs(cfg, mode, budget)
        elif s.fallback_depth > 0:
            # Climbing back a rung needs the unscaled proxy to cover the
            # richer mode; the headroom only softens downgrades.
            up = step_down(s.base_mode, s.fallback_depth - 1)
            fits = not adapt_knobs(cfg, up, capacity).needs_fallback
            s = _evolve(s, n_infeasible=0, n_recover=s.n_recover + 1 if fits else 0)
            if s.n_recover >= n and band_settled:
                s = _evolve(s, fallback_depth=s.fallback_depth - 1, n_recover=0)
                mode = up
                choice = adapt_knobs(cfg, mode, budget)
        else:
            s = _evolve(s, n_infeasible=0)

        if mode is not prev.mode:
            s = _evolve(s, mode=mode, last_switch_t=t, n_infeasible=0, n_recover=0)
        self.state = s
        self.knobs = choice.config
        demand = demand_for(mode, choice.config)
        return Decision(
            t=t,
            capacity=capacity,
            mode=mode,
            previous=prev.mode,
            knobs=choice.config,
            demand=demand,
            feasible=feasible(demand, budget),
            state=s,
        )
