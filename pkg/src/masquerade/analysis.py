"""Closed-form wealth and front-running bounds, and the balanced-epoch check.

Everything here is exact: inputs are converted to `Fraction` and bounds are
compared against simulated wealth without floating point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Optional, Union

from .config import ScenarioConfig
from .engine import EpochBoundary, MetricsSeries
from .money import SCALE
from .tokenset import TokenSet

Real = Union[int, Decimal, Fraction, str]


class DegenerateDenominator(ArithmeticError):
    pass


class InvalidParams(ValueError):
    def __init__(self, violations: list["ParamViolation"]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


def _q(x: Real) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class BoundParams:
    """Parameters of the balanced-adversary bounds, in currency units."""

    w_u0: Fraction
    w_a0: Fraction
    f: Fraction
    eta: Fraction
    y: Fraction
    tau: Fraction
    sigma: Fraction
    epsilon: Optional[Fraction] = None
    c: Optional[Fraction] = None

    @classmethod
    def of(cls, *, w_u0, w_a0, f, eta, y, tau, sigma, epsilon=None, c=None) -> "BoundParams":
        return cls(
            _q(w_u0), _q(w_a0), _q(f), _q(eta), _q(y), _q(tau), _q(sigma),
            None if epsilon is None else _q(epsilon), None if c is None else _q(c),
        )

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "BoundParams":
        """Undeclared sigma defaults to the actual wealth ratio W_a0/W_u0."""
        sigma = cfg.sigma
        if sigma is None:
            sigma = Fraction(cfg.w_adv0) / Fraction(cfg.w_user0) if cfg.w_user0 else Fraction(1)
        return cls.of(
            w_u0=cfg.w_user0, w_a0=cfg.w_adv0, f=cfg.f, eta=cfg.eta, y=cfg.y, tau=cfg.tau,
            sigma=sigma, epsilon=cfg.epsilon, c=cfg.c,
        )


@dataclass(frozen=True)
class ParamViolation:
    condition: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.condition} ({self.detail})" if self.detail else self.condition


def validate_params(p: BoundParams) -> list[ParamViolation]:
    """Check each precondition on its own; an empty list means all hold."""
    out: list[ParamViolation] = []

    def need(ok: bool, name: str, detail: str = ""):
        if not ok:
            out.append(ParamViolation(name, detail))

    eps = p.epsilon
    need(p.w_a0 < p.sigma * p.w_u0, "w_a0 < sigma*w_u0", f"{float(p.w_a0)} vs {float(p.sigma * p.w_u0)}")
    need(p.sigma < Fraction(1, 2), "sigma < 1/2", f"sigma={float(p.sigma)}")
    f_bound = (1 - p.sigma - (eps or 0)) / (1 + p.sigma)
    need(p.f < f_bound, "f < (1-sigma-eps)/(1+sigma)", f"f={float(p.f)}, bound={float(f_bound)}")
    if eps is None:
        out.append(ParamViolation("epsilon declared", "epsilon undeclared"))
    else:
        if p.f < 1:
            e_bound = (p.y * p.f + p.f ** 2 * p.eta) / (p.eta * (1 - p.f))
            need(eps < e_bound, "eps < (y*f+f^2*eta)/(eta*(1-f))",
                 f"eps={float(eps)}, bound={float(e_bound)}")
        if eps > 0:
            w_bound = p.y ** 2 / (p.eta * eps)
            need(p.w_a0 > w_bound, "w_a0 > y^2/(eta*eps)", f"bound={float(w_bound)}")
        else:
            need(False, "w_a0 > y^2/(eta*eps)", "eps=0")
        need(p.tau < eps * p.w_u0, "tau < eps*w_u0", f"bound={float(eps * p.w_u0)}")
    if p.c is None:
        out.append(ParamViolation("c declared", "c undeclared"))
    else:
        slack = 1 - p.f - (eps or 0)
        need(slack > 0 and p.c > (p.f + (eps or 0)) / slack, "c > (f+eps)/(1-f-eps)",
             f"bound={float((p.f + (eps or 0)) / slack)}" if slack > 0 else "1-f-eps <= 0")
    return out


# --------------------------------------------------------------------------
# closed forms


def adv_wealth_upper(w_a0: Real, f: Real, eta: Real, y: Real, k: int) -> Fraction:
    return _q(w_a0) * (1 + _q(f) * _q(eta) / _q(y)) ** k


def adv_wealth_lower(w_a0: Real, f: Real, eta: Real, y: Real, k: int) -> Fraction:
    y = _q(y)
    return (_q(w_a0) - y) * (1 + _q(f) * _q(eta) / y) ** k + y


def user_wealth_lower(w_u0: Real, sigma: Real, f: Real, eta: Real, y: Real, tau: Real, k: int) -> Fraction:
    eta, y = _q(eta), _q(y)
    g = 1 + eta / y - _q(sigma) * _q(f) * eta / y
    geometric = Fraction(k) if g == 1 else (g ** k - 1) / (g - 1)
    return _q(w_u0) * g ** k - (_q(tau) * eta / y) * geometric


def frontrun_fraction_bound(p: BoundParams, e: int) -> Fraction:
    """Upper bound on the share of user MEV transactions front run during epoch e."""
    if e < 1:
        raise ValueError("epoch index must be >= 1")
    num = adv_wealth_upper(p.w_a0, p.f, p.eta, p.y, e - 1)
    den = user_wealth_lower(p.w_u0, p.sigma, p.f, p.eta, p.y, p.tau, e - 1) - p.tau
    if den <= 0:
        raise DegenerateDenominator(f"denominator {float(den)} at epoch {e}")
    return num / den


def optimality_ratio(y: Real, eta: Real, eps: Real) -> Fraction:
    den = _q(y) - _q(eta) * _q(eps)
    if den <= 0:
        raise DegenerateDenominator("need y > eta*eps")
    return _q(y) / den


# --------------------------------------------------------------------------
# balanced epochs


@dataclass(frozen=True)
class Matching:
    """Result of matching adversary tokens to strictly larger user tokens."""

    matched: bool
    segments: tuple[tuple[int, int, int], ...] = ()  # (adv first, user first, length)
    witness: Optional[int] = None  # first adversary token left without a partner
    count_ok: Optional[bool] = None  # |H_a| == floor(W_a/y), if wealth was given

    @property
    def balanced(self) -> bool:
        return self.matched and self.count_ok is not False

    @property
    def max_image(self) -> Optional[int]:
        if not self.segments:
            return None
        _, u, n = self.segments[-1]
        return u + n - 1

    def as_dict(self) -> dict[int, int]:
        return {a + i: u + i for a, u, n in self.segments for i in range(n)}


def greedy_match(adv: TokenSet, user: TokenSet) -> Matching:
    """Match each adversary token, ascending, to the smallest free user token above it.

    Works run by run: a run of consecutive adversary ids paired against a run
    of consecutive user ids keeps the offset between them, so each step
    exhausts one of the two runs.
    """
    segs: list[tuple[int, int, int]] = []
    u_runs = list(user.runs)
    j = 0
    p = 0  # every user id below p is taken or skipped
    for a0, n in adv.runs:
        x, left = a0, n
        while left:
            q = max(p, x + 1)
            while j < len(u_runs) and u_runs[j][0] + u_runs[j][1] <= q:
                j += 1
            if j == len(u_runs):
                return Matching(False, tuple(segs), witness=x)
            ua, un = u_runs[j]
            u = max(ua, q)
            m = min(left, ua + un - u)
            if segs and segs[-1][0] + segs[-1][2] == x and segs[-1][1] + segs[-1][2] == u:
                a_, u_, n_ = segs[-1]
                segs[-1] = (a_, u_, n_ + m)
            else:
                segs.append((x, u, m))
            x += m
            left -= m
            p = u + m
    return Matching(True, tuple(segs))


def check_balanced_epoch(adv: TokenSet, user: TokenSet, w_a: Optional[Real] = None,
                         y: Optional[Real] = None) -> Matching:
    """Injective map from adversary tokens to larger user tokens, plus the purchase count check."""
    result = greedy_match(adv, user)
    if w_a is None or y is None:
        return result
    count_ok = adv.size == _q(w_a) // _q(y)
    return Matching(result.matched, result.segments, result.witness, count_ok)


def unmatched_tail(match: Matching, user: TokenSet) -> int:
    """User tokens above the largest image of the matching."""
    top = match.max_image
    if top is None:
        return user.size
    return user.size - user.count_below(top + 1)


# --------------------------------------------------------------------------
# run verification


@dataclass(frozen=True)
class BoundViolation:
    epoch: int
    bound: str
    detail: str = ""

    def __str__(self) -> str:
        return f"epoch {self.epoch}: {self.bound} {self.detail}".rstrip()


@dataclass(frozen=True)
class EpochCheck:
    epoch: int
    w_a: Fraction
    adv_upper: Fraction
    adv_lower: Fraction
    w_u: Fraction
    user_lower: Fraction
    frontrun_fraction: Optional[Fraction]
    fraction_bound: Optional[Fraction]
    balanced: bool
    tail: int = 0


@dataclass
class BoundsReport:
    epochs: list[EpochCheck] = field(default_factory=list)
    violations: list[BoundViolation] = field(default_factory=list)
    # failures of the proof's auxiliary tail condition, kept apart from the stated bounds
    proof_violations: list[BoundViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _currency(ticks: int) -> Fraction:
    return Fraction(ticks, SCALE)


def verify_run(series: MetricsSeries, params: BoundParams,
               epochs: Optional[list[EpochBoundary]] = None) -> BoundsReport:
    """Check every non-terminal epoch of a run against the closed-form bounds.

    Raises `InvalidParams` when the bound preconditions do not hold.
    """
    bad = validate_params(params)
    if bad:
        raise InvalidParams(bad)
    epochs = series.epochs if epochs is None else epochs
    p = params
    report = BoundsReport()
    for ep in epochs:
        if ep.terminal:
            continue
        e = ep.index
        w_a, w_u = _currency(ep.w_a_total), _currency(ep.w_u_total)
        upper = adv_wealth_upper(p.w_a0, p.f, p.eta, p.y, e)
        lower = adv_wealth_lower(p.w_a0, p.f, p.eta, p.y, e)
        u_lower = user_wealth_lower(p.w_u0, p.sigma, p.f, p.eta, p.y, p.tau, e)
        frac = bound = None
        if e >= 1 and ep.mev_count:
            frac = Fraction(ep.frontrun_count, ep.mev_count)
            bound = frontrun_fraction_bound(p, e)
        match = check_balanced_epoch(ep.adversary_tokens, ep.user_tokens, w_a, p.y)
        tail = unmatched_tail(match, ep.user_tokens)

        def flag(ok: bool, name: str, detail: str):
            if not ok:
                report.violations.append(BoundViolation(e, name, detail))

        flag(w_a <= upper, "adv_upper", f"{float(w_a)} > {float(upper)}")
        flag(w_a >= lower, "adv_lower", f"{float(w_a)} < {float(lower)}")
        flag(w_u >= u_lower, "user_lower", f"{float(w_u)} < {float(u_lower)}")
        flag(w_a < p.sigma * w_u, "sigma_ratio", f"{float(w_a)} >= sigma*{float(w_u)}")
        if frac is not None:
            flag(frac <= bound, "frontrun_fraction", f"{float(frac)} > {float(bound)}")
        if not match.matched:
            report.violations.append(BoundViolation(e, "balanced", f"witness {match.witness}"))
        elif match.count_ok is False:
            report.violations.append(BoundViolation(
                e, "balanced", f"{ep.adversary_tokens.size} tokens != floor(W_a/y)"))
        need = p.c * -(-w_a // p.y)  # c * ceil(W_a / y)
        if not tail > need:
            report.proof_violations.append(BoundViolation(e, "tail", f"{tail} <= {float(need)}"))
        report.epochs.append(EpochCheck(e, w_a, upper, lower, w_u, u_lower, frac, bound,
                                        match.balanced, tail))
    return report
