"""Scenario configuration."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from decimal import Decimal
from typing import Optional

from .agents import Mode
from .money import to_ticks

ETA_MODELS = ("constant", "gaussian", "cauchy", "trace")
PURCHASE_ORDERS = ("auto", "adversary_first", "user_first")
DECIMAL_KEYS = (
    "w_user0", "w_adv0", "y", "tau", "f", "eta", "eta_mu", "eta_sigma", "cauchy_x0",
    "cauchy_gamma", "clip_lo", "clip_hi", "sigma", "epsilon", "c",
)


class ConfigError(ValueError):
    pass


class InvalidValue(ConfigError):
    def __init__(self, key: str, why: str):
        super().__init__(f"invalid value for {key}: {why}")
        self.key = key


@dataclass(frozen=True)
class ScenarioConfig:
    mode: Mode = Mode.MASQUERADE
    rounds: int = 10_000
    w_user0: Decimal = Decimal(1000)
    w_adv0: Decimal = Decimal(500)
    y: Decimal = Decimal(80)
    tau: Decimal = Decimal(80)
    f: Decimal = Decimal("0.8")
    eta_model: str = "constant"
    eta: Decimal = Decimal(100)
    eta_mu: Decimal = Decimal(100)
    eta_sigma: Decimal = Decimal(20)
    cauchy_x0: Decimal = Decimal(100)
    cauchy_gamma: Decimal = Decimal(20)
    clip_lo: Decimal = Decimal(1)
    clip_hi: Decimal = Decimal(1000)
    trace_path: Optional[str] = None
    p_mev: float = 0.5
    fatal_fraction: float = 0.0
    refund: bool = True
    expiry_rounds: int = 0
    block_cap: Optional[int] = None
    seed: int = 0
    # tie-break for purchases submitted in the same round; "auto" numbers the
    # adversary first in phased mode and the user first otherwise
    purchase_order: str = "auto"
    user_buy: str = "capacity"
    # declared bound parameters, only consulted by the analysis
    sigma: Optional[Decimal] = None
    epsilon: Optional[Decimal] = None
    c: Optional[Decimal] = None

    def __post_init__(self):
        # accept plain numbers and strings from Python callers
        if isinstance(self.mode, str) and not isinstance(self.mode, Mode):
            try:
                object.__setattr__(self, "mode", Mode(self.mode))
            except ValueError:
                raise InvalidValue("mode", repr(self.mode)) from None
        for key in DECIMAL_KEYS:
            v = getattr(self, key)
            if v is not None and not isinstance(v, Decimal):
                object.__setattr__(self, key, Decimal(str(v)))
        self.validate()

    def validate(self) -> None:
        def bad(key, why):
            raise InvalidValue(key, str(why))

        if not isinstance(self.mode, Mode):
            bad("mode", self.mode)
        if self.rounds <= 0:
            bad("rounds", "must be > 0")
        if self.y <= 0:
            bad("y", "must be > 0")
        if self.tau <= 0:
            bad("tau", "must be > 0")
        if self.w_user0 < 0:
            bad("w_user0", "must be >= 0")
        if self.w_adv0 < 0:
            bad("w_adv0", "must be >= 0")
        if not 0 <= self.f <= 1:
            bad("f", "must lie in [0, 1]")
        if not 0 <= self.p_mev <= 1:
            bad("p_mev", "must lie in [0, 1]")
        if not 0 <= self.fatal_fraction <= 1:
            bad("fatal_fraction", "must lie in [0, 1]")
        if self.eta_model not in ETA_MODELS:
            bad("eta_model", f"one of {', '.join(ETA_MODELS)}")
        if self.eta <= 0:
            bad("eta", "must be > 0")
        if self.eta_sigma < 0:
            bad("eta_sigma", "must be >= 0")
        if self.cauchy_gamma <= 0:
            bad("cauchy_gamma", "must be > 0")
        if not 0 < self.clip_lo <= self.clip_hi:
            bad("clip_lo", "need 0 < clip_lo <= clip_hi")
        if self.eta_model == "trace" and not self.trace_path:
            bad("trace_path", "required when eta_model=trace")
        if self.expiry_rounds < 0:
            bad("expiry_rounds", "must be >= 0")
        if self.block_cap is not None and self.block_cap < 1:
            bad("block_cap", "must be >= 1")
        if self.purchase_order not in PURCHASE_ORDERS:
            bad("purchase_order", f"one of {', '.join(PURCHASE_ORDERS)}")
        if self.user_buy not in ("capacity", "one"):
            bad("user_buy", "capacity or one")
        for key in ("sigma", "epsilon", "c"):
            v = getattr(self, key)
            if v is not None and v < 0:
                bad(key, "must be >= 0")
        for key in ("w_user0", "w_adv0", "y", "tau", "eta", "eta_mu", "cauchy_x0", "clip_lo", "clip_hi"):
            if getattr(self, key).as_tuple().exponent < -4:
                bad(key, "at most 4 fractional digits")

    def ticks(self, key: str) -> int:
        return to_ticks(getattr(self, key))

    @property
    def adversary_first(self) -> bool:
        if self.purchase_order == "auto":
            return self.mode is Mode.PHASED
        return self.purchase_order == "adversary_first"

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


CONFIG_KEYS = tuple(f.name for f in fields(ScenarioConfig))
