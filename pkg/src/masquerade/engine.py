"""Round loop, scenario modes and epoch detection."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .agents import (
    AdversaryVariant,
    Mode,
    Opportunity,
    PolicyParams,
    UserVariant,
    adversary_decide,
    settle_mev,
    user_buy_count,
    user_decide,
)
from .config import ConfigError, ScenarioConfig
from .money import SCALE, scale
from .protocol import (
    Ledger,
    Party,
    Transaction,
    TxKind,
    apply_block,
    build_block,
    expire_tokens,
    issue_tokens,
    token_purchase,
    tokenized_mev,
)
from .tokenset import TokenSet

USER, ADV = Party.USER, Party.ADVERSARY


class EmptyTrace(ValueError):
    pass


# --------------------------------------------------------------------------
# opportunity values


@dataclass(frozen=True)
class EtaModel:
    """Distribution of per-opportunity MEV values, all in ticks."""

    kind: str = "constant"
    eta: int = 100 * SCALE
    mu: int = 100 * SCALE
    sigma: int = 20 * SCALE
    x0: int = 100 * SCALE
    gamma: int = 20 * SCALE
    clip_lo: int = 1 * SCALE
    clip_hi: int = 1000 * SCALE
    trace: tuple[int, ...] = ()

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, trace: Optional[Sequence[int]] = None) -> "EtaModel":
        if cfg.eta_model == "trace" and trace is None:
            from .io import load_trace

            trace = load_trace(cfg.trace_path).values
        return cls(
            kind=cfg.eta_model,
            eta=cfg.ticks("eta"),
            mu=cfg.ticks("eta_mu"),
            sigma=cfg.ticks("eta_sigma"),
            x0=cfg.ticks("cauchy_x0"),
            gamma=cfg.ticks("cauchy_gamma"),
            clip_lo=cfg.ticks("clip_lo"),
            clip_hi=cfg.ticks("clip_hi"),
            trace=tuple(trace or ()),
        )

    @property
    def stochastic(self) -> bool:
        return self.kind != "constant"

    @property
    def centre(self) -> int:
        """Typical value, used as the policies' pivot."""
        if self.kind == "gaussian":
            return self.mu
        if self.kind == "cauchy":
            return self.x0
        if self.kind == "trace":
            return int(np.median(self.trace)) if self.trace else self.eta
        return self.eta

    def draw(self, rng: np.random.Generator, n: int, start: int = 0) -> list[int]:
        """`n` values; `start` is the trace position (ignored by the random models)."""
        if self.kind == "constant":
            return [self.eta] * n
        if self.kind == "trace":
            if not self.trace:
                raise EmptyTrace("trace has no values")
            m = len(self.trace)
            return [self.trace[(start + i) % m] for i in range(n)]
        if self.kind == "gaussian":
            x = rng.normal(self.mu / SCALE, self.sigma / SCALE, n)
        elif self.kind == "cauchy":
            x = self.x0 / SCALE + (self.gamma / SCALE) * rng.standard_cauchy(n)
        else:
            raise ConfigError(f"unknown eta model {self.kind!r}")
        x = np.clip(x, self.clip_lo / SCALE, self.clip_hi / SCALE)
        ticks = np.rint(x * SCALE).astype(np.int64)
        return np.clip(ticks, self.clip_lo, self.clip_hi).tolist()


@dataclass
class SamplerState:
    rng: np.random.Generator
    position: int = 0


def sample_eta(model: EtaModel, state: SamplerState) -> tuple[int, SamplerState]:
    """Draw one value; trace models cycle through the file when exhausted."""
    (value,) = model.draw(state.rng, 1, state.position)
    return value, SamplerState(state.rng, state.position + 1)


@dataclass(frozen=True)
class OpportunityStream:
    """Per-round arrivals, pre-drawn so that every mode sees the same stream."""

    present: tuple[bool, ...]
    fatal: tuple[bool, ...]
    eta: tuple[int, ...]  # eta[r-1] is the value for round r when present

    def at(self, rnd: int) -> Optional[Opportunity]:
        if not self.present[rnd - 1]:
            return None
        return Opportunity(self.eta[rnd - 1], self.fatal[rnd - 1])


def opportunity_stream(cfg: ScenarioConfig, model: EtaModel, rng: np.random.Generator) -> OpportunityStream:
    n = cfg.rounds
    present = rng.random(n) < cfg.p_mev
    fatal = (rng.random(n) < cfg.fatal_fraction) & present
    # the k-th opportunity takes the k-th draw, whatever rounds it lands in
    draws = model.draw(rng, int(present.sum()))
    eta = [0] * n
    for k, r in enumerate(np.flatnonzero(present).tolist()):
        eta[r] = draws[k]
    return OpportunityStream(tuple(present.tolist()), tuple(fatal.tolist()), tuple(eta))


# --------------------------------------------------------------------------
# records


@dataclass(slots=True)
class RoundRecord:
    round: int
    w_u_liquid: int
    w_u_total: int
    w_a_liquid: int
    w_a_total: int
    mev_made: int = 0
    frontrun: int = 0
    backrun: int = 0
    tokens_bought_u: int = 0
    tokens_bought_a: int = 0
    epoch: int = 0
    fatal: int = 0


@dataclass(frozen=True)
class EpochBoundary:
    index: int
    start_round: int
    end_round: int
    user_tokens: TokenSet
    adversary_tokens: TokenSet
    w_u_total: int  # after the end round's purchases, before its settlement
    w_a_total: int
    w_u_liquid: int
    terminal: bool = False
    # MEV spends of the previous epoch's user tokens that happened in this epoch
    mev_count: int = 0
    frontrun_count: int = 0

    @property
    def frontrun_fraction(self) -> Optional[float]:
        if self.mev_count == 0:
            return None
        return self.frontrun_count / self.mev_count


@dataclass
class MetricsSeries:
    config: ScenarioConfig
    records: list[RoundRecord]
    w_u0: int
    w_a0: int
    mev_count: int = 0
    frontrun_count: int = 0
    backrun_count: int = 0
    fatal_count: int = 0
    dropped_count: int = 0
    injected: int = 0  # total MEV value realised by anyone
    burned: int = 0
    epochs: list[EpochBoundary] = field(default_factory=list)

    @property
    def mode(self) -> Mode:
        return self.config.mode

    @property
    def final(self) -> RoundRecord:
        return self.records[-1]

    @property
    def frontrun_pct(self) -> float:
        return 100.0 * self.frontrun_count / self.mev_count if self.mev_count else 0.0

    @property
    def backrun_pct(self) -> float:
        return 100.0 * self.backrun_count / self.mev_count if self.mev_count else 0.0


# --------------------------------------------------------------------------
# continuous round loop


@dataclass
class World:
    config: ScenarioConfig
    ledger: Ledger
    stream: OpportunityStream
    params: PolicyParams
    user_variant: UserVariant = UserVariant.BASE
    adversary_variant: AdversaryVariant = AdversaryVariant.BASE
    round: int = 0
    records: list = field(default_factory=list)
    mev_count: int = 0
    frontrun_count: int = 0
    backrun_count: int = 0
    fatal_count: int = 0
    dropped_count: int = 0
    injected: int = 0
    last_block: Optional[object] = None


def make_world(cfg: ScenarioConfig, trace: Optional[Sequence[int]] = None) -> World:
    model = EtaModel.from_config(cfg, trace)
    rng = np.random.default_rng(cfg.seed)
    stream = opportunity_stream(cfg, model, rng)
    uvar, avar = UserVariant.BASE, AdversaryVariant.BASE
    if model.stochastic:
        uvar |= UserVariant.STOCHASTIC
        avar |= AdversaryVariant.LOOKAHEAD
    if cfg.fatal_fraction > 0:
        uvar |= UserVariant.FATAL_AWARE
    params = PolicyParams(
        y=cfg.ticks("y"),
        tau=cfg.ticks("tau"),
        eta_pivot=model.centre,
        fatal_value_cap=model.centre,
        user_buy=cfg.user_buy,
        expected_eta=model.centre,
    )
    ledger = Ledger.fresh(
        params.y, cfg.ticks("w_user0"), cfg.ticks("w_adv0"),
        refund=cfg.refund, lifetime=cfg.expiry_rounds,
    )
    return World(cfg, ledger, stream, params, uvar, avar)


def _record(world: World, rnd: int, **kw) -> RoundRecord:
    L = world.ledger
    rec = RoundRecord(rnd, L.liquid[USER], L.total(USER), L.liquid[ADV], L.total(ADV), **kw)
    world.records.append(rec)
    return rec


def _step_baseline(world: World, rnd: int, opp: Optional[Opportunity]) -> RoundRecord:
    cfg, L = world.config, world.ledger
    engage = opp is not None and not (
        opp.fatal
        and UserVariant.FATAL_AWARE in world.user_variant
        and opp.eta >= world.params.fatal_value_cap
    )
    if not engage:
        return _record(world, rnd)
    s = settle_mev(cfg.mode, mev_made=True, frontrun=True, eta=opp.eta, f=cfg.f, fatal=opp.fatal)
    L.liquid[USER] += s.h_u
    L.liquid[ADV] += s.h_a
    world.mev_count += 1
    world.frontrun_count += s.frontrun
    world.backrun_count += s.backrun
    world.fatal_count += s.fatal and s.frontrun
    world.injected += opp.eta
    return _record(world, rnd, mev_made=1, frontrun=int(s.frontrun), backrun=int(s.backrun),
                   fatal=int(s.fatal and s.frontrun))


def step_round(world: World) -> RoundRecord:
    """Advance one round and return its record."""
    cfg, L, params = world.config, world.ledger, world.params
    world.round = rnd = world.round + 1
    opp = world.stream.at(rnd)
    if cfg.mode in (Mode.STATUS_QUO, Mode.IDEAL):
        return _step_baseline(world, rnd, opp)

    expire_tokens(L, rnd)
    ua = user_decide(L.liquid[USER], L.confirmed(USER, rnd), opp, params, world.user_variant)
    aa = adversary_decide(L.liquid[ADV], L.confirmed(ADV, rnd), ua, params,
                          world.adversary_variant, opp)
    order = [(ADV, aa.buy_count), (USER, ua.buy_count)]
    if not cfg.adversary_first:
        order.reverse()
    for party, n in order:
        issue_tokens(L, party, n, rnd)

    user_txns: list[Transaction] = []
    adv_txns: list[Transaction] = []
    if ua.buy_count:
        user_txns.append(token_purchase(USER, ua.buy_count, rnd))
    if aa.buy_count:
        adv_txns.append(token_purchase(ADV, aa.buy_count, rnd))
    if ua.make_mev:
        user_txns.append(tokenized_mev(USER, ua.token_choice, opp.eta, rnd))
    if aa.attack:
        adv_txns.append(tokenized_mev(ADV, aa.token_choice, opp.eta, rnd, tag="frontrun"))
        if not opp.fatal:
            adv_txns.append(Transaction(TxKind.REGULAR, ADV, rnd, value=opp.eta, tag="backrun"))
    block = build_block(rnd, user_txns, adv_txns, cfg.block_cap)

    pos_u = block.position(USER)
    pos_a = block.position(ADV)
    mev_made = pos_u is not None
    frontrun = mev_made and pos_a is not None and pos_a < pos_u
    fatal = bool(opp and opp.fatal)
    s = settle_mev(
        cfg.mode, mev_made=mev_made, frontrun=frontrun, eta=opp.eta if opp else 0,
        f=cfg.f, y=params.y, refund=cfg.refund, fatal=fatal,
    )
    # honest engine: a rejected block here is a bug, so let it raise
    apply_block(L, block, {USER: s.mev_u, ADV: s.mev_a}, cfg.block_cap)
    world.last_block = block
    world.dropped_count += len(block.dropped)
    if mev_made:
        world.mev_count += 1
        world.frontrun_count += s.frontrun
        world.backrun_count += s.backrun
        world.fatal_count += s.fatal and s.frontrun
        world.injected += opp.eta
    return _record(
        world, rnd,
        mev_made=int(mev_made), frontrun=int(s.frontrun), backrun=int(s.backrun),
        tokens_bought_u=ua.buy_count, tokens_bought_a=aa.buy_count,
        fatal=int(s.fatal and s.frontrun),
    )


def run_scenario(cfg: ScenarioConfig, trace: Optional[Sequence[int]] = None) -> MetricsSeries:
    """Run a complete scenario in the configured mode."""
    if cfg.mode is Mode.PHASED:
        return run_phased(cfg)
    world = make_world(cfg, trace)
    for _ in range(cfg.rounds):
        step_round(world)
    series = _series(world)
    if cfg.mode is Mode.MASQUERADE:
        series.epochs = detect_epochs(series, world.ledger)
        _label_epochs(series)
    return series


def _series(world: World) -> MetricsSeries:
    cfg = world.config
    return MetricsSeries(
        cfg, world.records, cfg.ticks("w_user0"), cfg.ticks("w_adv0"),
        mev_count=world.mev_count, frontrun_count=world.frontrun_count,
        backrun_count=world.backrun_count, fatal_count=world.fatal_count,
        dropped_count=world.dropped_count, injected=world.injected,
        burned=world.ledger.burned,
    )


# --------------------------------------------------------------------------
# epochs


def detect_epochs(series: MetricsSeries, ledger: Ledger) -> list[EpochBoundary]:
    """Split a continuous masquerade run into epochs.

    An epoch ends at the first round in which every user token of the
    previous epoch is gone and the user's liquid wealth after that round's
    purchases is at most tau (or below y).  Purchases of the end round belong to the
    ending epoch; its MEV spend belongs to the next one.
    """
    recs = series.records
    R = len(recs)
    y = ledger.y
    tau = max(series.config.ticks("tau"), y - 1)  # same gate as the user policy

    def pre(r):  # liquid before round r
        return series.w_u0 if r == 1 else recs[r - 2].w_u_liquid

    def post(r):
        return pre(r) - y * recs[r - 1].tokens_bought_u

    def totals_before(r):
        if r == 1:
            return series.w_u0, series.w_a0
        rec = recs[r - 2]
        return rec.w_u_total, rec.w_a_total

    # tokens grouped by purchase round; ids ascend with rounds
    reg = ledger.registry
    expired_at: dict[tuple[int, Party], int] = {}
    for tok in reg:
        if tok.expired:
            key = (tok.expiry_round, tok.owner)
            expired_at[key] = expired_at.get(key, 0) + 1

    def tokens_in(lo_round, hi_round, party):
        lo = bisect.bisect_left(reg, lo_round, key=lambda t: t.purchase_round)
        hi = bisect.bisect_right(reg, hi_round, key=lambda t: t.purchase_round)
        return [t for t in reg[lo:hi] if t.owner is party]

    def window(a, b):  # mev / frontrun counts over rounds [a, b]
        mev = fr = 0
        for rec in recs[a - 1:b]:
            mev += rec.mev_made
            fr += rec.frontrun
        return mev, fr

    out: list[EpochBoundary] = []
    prev_end = 0
    prev_user: list = []
    while True:
        ready = prev_end + 1
        done = True
        for t in prev_user:
            if t.spent:
                ready = max(ready, t.spent_round + 1)
            elif t.expired:
                ready = max(ready, t.expiry_round)
            else:
                done = False
                break
        end = None
        if done:
            for r in range(ready, R + 1):
                if post(r) <= tau:
                    end = r
                    break
        e = len(out)
        if end is None:
            user = tokens_in(prev_end + 1, R, USER)
            adv = tokens_in(prev_end + 1, R, ADV)
            mev, fr = window(prev_end, R) if e else (0, 0)
            last = recs[-1]
            out.append(EpochBoundary(
                e, prev_end + 1, R,
                TokenSet.from_ids(t.id for t in user), TokenSet.from_ids(t.id for t in adv),
                last.w_u_total, last.w_a_total, last.w_u_liquid,
                terminal=True, mev_count=mev, frontrun_count=fr,
            ))
            return out
        user = tokens_in(prev_end + 1, end, USER)
        adv = tokens_in(prev_end + 1, end, ADV)
        wu, wa = totals_before(end)
        wu -= y * expired_at.get((end, USER), 0)
        wa -= y * expired_at.get((end, ADV), 0)
        mev, fr = window(prev_end, end - 1) if e else (0, 0)
        out.append(EpochBoundary(
            e, prev_end + 1, end,
            TokenSet.from_ids(t.id for t in user), TokenSet.from_ids(t.id for t in adv),
            wu, wa, post(end), mev_count=mev, frontrun_count=fr,
        ))
        prev_end, prev_user = end, user


def _label_epochs(series: MetricsSeries) -> None:
    for ep in series.epochs:
        for rec in series.records[ep.start_round - 1:ep.end_round]:
            rec.epoch = ep.index


# --------------------------------------------------------------------------
# phased mode


def _count_below(runs: list[list[int]], token_id: int) -> int:
    return sum(min(n, token_id - a) for a, n in runs if a < token_id)


def _take_below(runs: list[list[int]], token_id: int, k: int) -> None:
    """Remove the `k` largest ids below `token_id` from `runs` in place."""
    i = len(runs) - 1
    while k > 0:
        while runs[i][0] >= token_id:
            i -= 1
        a, n = runs[i]
        top = min(a + n, token_id)  # exclusive
        avail = top - a
        take = min(k, avail)
        cut_lo = top - take
        # split [a, a+n) into [a, cut_lo) and [top, a+n)
        pieces = [[a, cut_lo - a], [top, a + n - top]]
        runs[i:i + 1] = [p for p in pieces if p[1] > 0]
        k -= take
        i = min(i, len(runs) - 1)


def run_phased(cfg: ScenarioConfig, epochs: Optional[int] = None) -> MetricsSeries:
    """Epoch-aggregated masquerade: bulk purchase rounds alternate with spend phases.

    Each purchase phase is a single round in which both parties buy to
    capacity.  Each spend phase has one MEV opportunity per round and lasts
    until the previous purchase's user tokens are used up.  Work is done per
    run of consecutive token ids, so the cost does not depend on how many
    tokens exist.

    With `epochs=N` the run stops after the spend phase that follows the
    N-th epoch's purchases; otherwise it stops at `cfg.rounds`.
    """
    if cfg.eta_model != "constant":
        raise ConfigError("phased mode needs eta_model=constant")
    if cfg.fatal_fraction:
        raise ConfigError("phased mode needs fatal_fraction=0")
    if cfg.expiry_rounds:
        raise ConfigError("phased mode needs expiry_rounds=0")
    if cfg.block_cap is not None:
        raise ConfigError("phased mode does not model block_cap")

    y, tau, eta = cfg.ticks("y"), cfg.ticks("tau"), cfg.ticks("eta")
    params = PolicyParams(y=y, tau=tau, user_buy="capacity")
    mev_a_fr = scale(cfg.f, eta)
    mev_u_fr = eta - mev_a_fr
    refund = y if cfg.refund else 0
    limit = cfg.rounds if epochs is None else None

    lu, la = cfg.ticks("w_user0"), cfg.ticks("w_adv0")
    u_runs: list[list[int]] = []
    a_runs: list[list[int]] = []
    next_id = 1
    rnd = 0
    series = MetricsSeries(cfg, [], lu, la)
    out: list[EpochBoundary] = []
    acc = [(0, 0)]  # running (mev, frontrun) totals at each boundary

    def lock(runs):
        return y * sum(n for _, n in runs)

    def emit(**kw):
        rec = RoundRecord(rnd, lu, lu + lock(u_runs), la, la + lock(a_runs), epoch=len(out), **kw)
        series.records.append(rec)

    e = 0
    while True:
        # purchase round
        rnd += 1
        nu = user_buy_count(lu, params)
        na = la // y
        blocks = [(ADV, na), (USER, nu)]
        if not cfg.adversary_first:
            blocks.reverse()
        bought = {}
        for party, n in blocks:
            bought[party] = (next_id, n)
            next_id += n
        lu -= y * nu
        la -= y * na
        u_first, _ = bought[USER]
        if nu:
            u_runs.append([u_first, nu])
        if na:
            a_runs.append([bought[ADV][0], na])
            a_runs.sort()
        emit(tokens_bought_u=nu, tokens_bought_a=na)
        spend_mev = series.mev_count - acc[-1][0]
        spend_fr = series.frontrun_count - acc[-1][1]
        acc.append((series.mev_count, series.frontrun_count))
        boundary = EpochBoundary(
            e, (out[-1].end_round + 1) if out else 1, rnd,
            TokenSet(((u_first, nu),) if nu else ()),
            TokenSet(((bought[ADV][0], na),) if na else ()),
            lu + lock(u_runs), la + lock(a_runs), lu,
            mev_count=spend_mev, frontrun_count=spend_fr,
        )
        out.append(boundary)
        last_epoch = epochs is not None and e >= epochs

        # spend phase: the user's runs in ascending order
        stopped = False
        while u_runs:
            if limit is not None and rnd >= limit:
                stopped = True
                break
            lo, c = u_runs[0]
            if limit is not None:
                c = min(c, limit - rnd)
            k = min(c, _count_below(a_runs, lo))
            if k:
                _take_below(a_runs, lo, k)
                lu += k * (mev_u_fr + refund)
                la += k * (mev_a_fr + refund)
                rnd += k
                series.mev_count += k
                series.frontrun_count += k
                series.backrun_count += k
                series.injected += k * eta
                series.burned += 2 * k * (y - refund)
                # user tokens are retired only after the record below
                u_runs[0] = [lo + k, u_runs[0][1] - k]
                if u_runs[0][1] == 0:
                    u_runs.pop(0)
                emit(mev_made=k, frontrun=k, backrun=k)
            rest = c - k
            if rest:
                lu += rest * (eta + refund)
                rnd += rest
                series.mev_count += rest
                series.injected += rest * eta
                series.burned += rest * (y - refund)
                a, n = u_runs[0]
                u_runs[0] = [a + rest, n - rest]
                if u_runs[0][1] == 0:
                    u_runs.pop(0)
                emit(mev_made=rest)
        if stopped or last_epoch or (limit is not None and rnd >= limit):
            break
        e += 1

    mev = series.mev_count - acc[-1][0]
    fr = series.frontrun_count - acc[-1][1]
    final = series.records[-1]
    out.append(EpochBoundary(
        len(out), out[-1].end_round + 1, rnd, TokenSet(), TokenSet(),
        final.w_u_total, final.w_a_total, final.w_u_liquid,
        terminal=True, mev_count=mev, frontrun_count=fr,
    ))
    series.epochs = out
    return series
