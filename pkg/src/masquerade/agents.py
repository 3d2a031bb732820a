"""User and adversary policies and per-round MEV settlement."""
from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional, Sequence

from .money import scale

INF = None  # token_choice sentinel: no token used


class Mode(str, enum.Enum):
    MASQUERADE = "masquerade"
    STATUS_QUO = "status-quo"
    IDEAL = "ideal"
    PHASED = "phased"


class UserVariant(enum.Flag):
    BASE = 0
    STOCHASTIC = enum.auto()
    FATAL_AWARE = enum.auto()


class AdversaryVariant(enum.Flag):
    BASE = 0
    LOOKAHEAD = enum.auto()


@dataclass(frozen=True)
class Opportunity:
    eta: int  # ticks
    fatal: bool = False


@dataclass(frozen=True)
class PolicyParams:
    y: int
    tau: int
    eta_pivot: int = 1_000_000  # 100 in ticks
    fatal_value_cap: int = 1_000_000
    user_buy: str = "capacity"  # or "one"
    expected_eta: Optional[int] = None  # lookahead reference; pivot if None

    def __post_init__(self):
        if self.y <= 0:
            raise ValueError("y must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.user_buy not in ("capacity", "one"):
            raise ValueError(f"unknown user_buy rule {self.user_buy!r}")

    @property
    def spend_threshold(self) -> int:
        """Liquid wealth at or below which the user spends.

        Below y no further purchase is possible, so waiting would stall.
        """
        return max(self.tau, self.y - 1)


@dataclass(frozen=True)
class UserAction:
    buy_count: int = 0
    make_mev: bool = False
    token_choice: Optional[int] = INF


@dataclass(frozen=True)
class AdversaryAction:
    buy_count: int = 0
    attack: bool = False
    token_choice: Optional[int] = INF


@dataclass(frozen=True)
class Settlement:
    h_u: int
    h_a: int
    mev_u: int = 0
    mev_a: int = 0
    frontrun: bool = False
    backrun: bool = False
    fatal: bool = False


def user_buy_count(liquid: int, params: PolicyParams) -> int:
    y, tau = params.y, params.tau
    if params.user_buy == "one":
        return 1 if liquid > y else 0
    if liquid <= tau:
        return 0
    # enough tokens to bring liquid wealth down to the threshold, if affordable
    return min(-((tau - liquid) // y), liquid // y)


def user_decide(
    liquid: int,
    owned_tokens: Sequence[int],
    opportunity: Optional[Opportunity],
    params: PolicyParams,
    variant: UserVariant = UserVariant.BASE,
) -> UserAction:
    """Buy tokens while wealthy, then spend the lowest confirmed token on MEV.

    `owned_tokens` must be the ascending list of tokens usable this round.
    The purchase is applied before the spend threshold is checked.
    """
    buy = user_buy_count(liquid, params)
    if opportunity is None or not owned_tokens or liquid - buy * params.y > params.spend_threshold:
        return UserAction(buy)
    if (
        opportunity.fatal
        and UserVariant.FATAL_AWARE in variant
        and opportunity.eta >= params.fatal_value_cap
    ):
        return UserAction(buy)
    token = owned_tokens[0]
    if UserVariant.STOCHASTIC in variant and opportunity.eta <= params.eta_pivot and len(owned_tokens) > 1:
        token = owned_tokens[1]
    return UserAction(buy, True, token)


def adversary_decide(
    liquid: int,
    owned_tokens: Sequence[int],
    observed: UserAction,
    params: PolicyParams,
    variant: AdversaryVariant = AdversaryVariant.BASE,
    opportunity: Optional[Opportunity] = None,
) -> AdversaryAction:
    """Spend all liquid wealth on tokens and front run with the largest token below the user's."""
    buy = liquid // params.y
    if not observed.make_mev or observed.token_choice is INF:
        return AdversaryAction(buy)
    i = bisect.bisect_left(owned_tokens, observed.token_choice)
    if i == 0:
        return AdversaryAction(buy)
    if AdversaryVariant.LOOKAHEAD in variant and opportunity is not None:
        expected = params.expected_eta if params.expected_eta is not None else params.eta_pivot
        if expected > opportunity.eta:
            return AdversaryAction(buy)
    return AdversaryAction(buy, True, owned_tokens[i - 1])


def settle_mev(
    mode: Mode,
    *,
    mev_made: bool,
    frontrun: bool,
    eta: int,
    f: Decimal,
    y: int = 0,
    buy_u: int = 0,
    buy_a: int = 0,
    refund: bool = True,
    fatal: bool = False,
    backrun: Optional[bool] = None,
) -> Settlement:
    """Rewards for one round.

    `h_u`/`h_a` are the liquid-wealth changes including token purchase
    outflows and refunds; `mev_u`/`mev_a` are the MEV components alone.
    Backruns close a non-fatal sandwich and carry no reward of their own.
    """
    if not mev_made:
        return Settlement(-y * buy_u, -y * buy_a)
    if mode is Mode.IDEAL:
        return Settlement(eta, 0, eta, 0)
    if mode is Mode.STATUS_QUO:
        frontrun = True
    if frontrun:
        if fatal:
            mev_u, mev_a = 0, eta
        else:
            mev_a = scale(f, eta)
            mev_u = eta - mev_a
    else:
        mev_u, mev_a = eta, 0
    if backrun is None:
        backrun = frontrun and not fatal
    if mode is Mode.STATUS_QUO:
        return Settlement(mev_u, mev_a, mev_u, mev_a, True, backrun, fatal)
    refund_u = y if refund else 0
    refund_a = y if (refund and frontrun) else 0
    h_u = -y * buy_u + mev_u + refund_u
    h_a = -y * buy_a + mev_a + refund_a
    return Settlement(h_u, h_a, mev_u, mev_a, frontrun, backrun, fatal)
