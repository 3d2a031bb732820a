"""Token registry, transactions and blocks under strict token-number ordering.

The ledger issues numbered tokens from a single global counter.  A block
carries a prefix of tokenized transactions in strictly ascending token id,
followed by every non-tokenized transaction.  A token is one-shot: using it in
an executed transaction spends it and (in refund mode) returns its cost.
"""
from __future__ import annotations

import bisect
import enum
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Iterable, Optional


class Party(str, enum.Enum):
    USER = "user"
    ADVERSARY = "adversary"

    def __str__(self) -> str:
        return self.value


class TxKind(str, enum.Enum):
    TOKEN_PURCHASE = "token_purchase"
    TOKENIZED_MEV = "tokenized_mev"
    NON_TOKENIZED_MEV = "non_tokenized_mev"
    REGULAR = "regular"


class ProtocolError(Exception):
    pass


class InsufficientFunds(ProtocolError):
    pass


class ViolationKind(str, enum.Enum):
    OUT_OF_ORDER = "OutOfOrder"
    DOUBLE_SPEND = "DoubleSpend"
    UNCONFIRMED_TOKEN = "UnconfirmedToken"
    EXPIRED = "Expired"
    CAP_EXCEEDED = "CapExceeded"
    TOKENIZED_AFTER_PLAIN = "TokenizedAfterPlain"
    WRONG_OWNER = "WrongOwner"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind.value}: {self.detail}" if self.detail else self.kind.value


class BlockRejected(ProtocolError):
    def __init__(self, violation: Violation):
        super().__init__(str(violation))
        self.violation = violation


@dataclass
class Token:
    id: int
    owner: Party
    purchase_round: int
    spent: bool = False
    expiry_round: Optional[int] = None
    spent_round: Optional[int] = None
    expired: bool = False

    @property
    def live(self) -> bool:
        return not self.spent and not self.expired

    def serialize(self) -> str:
        expiry = "" if self.expiry_round is None else str(self.expiry_round)
        return f"{self.id},{self.owner.value},{self.purchase_round},{int(self.spent)},{expiry}"


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    submitter: Party
    round: int
    token_id: Optional[int] = None
    value: int = 0  # opportunity value in ticks
    count: int = 0  # tokens requested by a purchase
    tag: str = ""

    @property
    def tokenized(self) -> bool:
        return self.kind is TxKind.TOKENIZED_MEV


def token_purchase(party: Party, count: int, rnd: int) -> Transaction:
    return Transaction(TxKind.TOKEN_PURCHASE, party, rnd, count=count)


def tokenized_mev(party: Party, token_id: int, value: int, rnd: int, tag: str = "") -> Transaction:
    return Transaction(TxKind.TOKENIZED_MEV, party, rnd, token_id=token_id, value=value, tag=tag)


@dataclass(frozen=True)
class Block:
    round: int
    transactions: tuple[Transaction, ...]
    dropped: tuple[Transaction, ...] = ()

    @property
    def tokenized(self) -> list[Transaction]:
        return [tx for tx in self.transactions if tx.tokenized]

    def position(self, party: Party) -> Optional[int]:
        """Index of the first tokenized transaction submitted by `party`."""
        for i, tx in enumerate(self.transactions):
            if tx.tokenized and tx.submitter is party:
                return i
        return None


class PrefixView(Sequence):
    """Read-only view of the first `n` items of a list, without copying."""

    __slots__ = ("_items", "_n")

    def __init__(self, items: list, n: int):
        self._items, self._n = items, n

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self._items[: self._n][i]
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError(i)
        return self._items[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, (list, PrefixView)) and list(self) == list(other)

    def __repr__(self) -> str:
        return f"PrefixView({list(self)!r})"


@dataclass
class Ledger:
    """Balances and token registry for the two parties.

    `locked` holds y for every live token a party owns.  `burned` accumulates
    token costs that left the system (no-refund spends and expiries).
    """

    y: int
    refund: bool = True
    lifetime: int = 0  # rounds until a token expires; 0 means never
    liquid: dict = field(default_factory=dict)
    locked: dict = field(default_factory=dict)
    registry: list = field(default_factory=list)
    next_token_id: int = 1
    burned: int = 0
    _owned: dict = field(default_factory=dict, repr=False)
    _expiry_cursor: int = field(default=0, repr=False)

    @classmethod
    def fresh(cls, y: int, w_user: int, w_adv: int, *, refund: bool = True, lifetime: int = 0) -> "Ledger":
        if y <= 0:
            raise ValueError("token cost must be positive")
        ledger = cls(y=y, refund=refund, lifetime=lifetime)
        for party, w in ((Party.USER, w_user), (Party.ADVERSARY, w_adv)):
            ledger.liquid[party] = w
            ledger.locked[party] = 0
            ledger._owned[party] = []
        return ledger

    def token(self, token_id: int) -> Optional[Token]:
        if 1 <= token_id < self.next_token_id:
            return self.registry[token_id - 1]
        return None

    def owned(self, party: Party) -> list[int]:
        """Live token ids of `party`, ascending.  Do not mutate."""
        return self._owned[party]

    def confirmed(self, party: Party, rnd: int) -> list[int]:
        """Live tokens of `party` usable in round `rnd` (bought strictly earlier)."""
        ids = self._owned[party]
        # purchase rounds are non-decreasing in id, so the usable ones form a prefix
        lo, hi = 0, len(ids)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.registry[ids[mid] - 1].purchase_round < rnd:
                lo = mid + 1
            else:
                hi = mid
        return PrefixView(ids, lo)

    def total(self, party: Party) -> int:
        return self.liquid[party] + self.locked[party]

    def snapshot(self) -> str:
        return "".join(tok.serialize() + "\n" for tok in self.registry)

    def check(self) -> None:
        """Assert the balance invariants."""
        for party in (Party.USER, Party.ADVERSARY):
            assert self.liquid[party] >= 0, f"negative liquid for {party}"
            live = sum(1 for t in self.registry if t.owner is party and t.live)
            assert self.locked[party] == self.y * live, f"locked mismatch for {party}"
            assert self._owned[party] == sorted(
                t.id for t in self.registry if t.owner is party and t.live
            )

    def _drop_owned(self, tok: Token) -> None:
        ids = self._owned[tok.owner]
        i = bisect.bisect_left(ids, tok.id)
        if i < len(ids) and ids[i] == tok.id:
            ids.pop(i)


def issue_tokens(ledger: Ledger, party: Party, count: int, rnd: int) -> list[int]:
    """Sell `count` fresh tokens to `party`, numbered from the global counter."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return []
    cost = count * ledger.y
    if cost > ledger.liquid[party]:
        raise InsufficientFunds(
            f"{party} needs {cost} ticks for {count} tokens, has {ledger.liquid[party]}"
        )
    expiry = rnd + ledger.lifetime if ledger.lifetime > 0 else None
    first = ledger.next_token_id
    ids = list(range(first, first + count))
    ledger.registry.extend(Token(i, party, rnd, expiry_round=expiry) for i in ids)
    ledger.next_token_id = first + count
    ledger.liquid[party] -= cost
    ledger.locked[party] += cost
    ledger._owned[party].extend(ids)
    return ids


def expire_tokens(ledger: Ledger, rnd: int) -> list[Token]:
    """Burn every live token whose expiry round has arrived."""
    if ledger.lifetime <= 0:
        return []
    out = []
    reg = ledger.registry
    i = ledger._expiry_cursor
    # expiry rounds are non-decreasing in id
    while i < len(reg) and reg[i].expiry_round is not None and reg[i].expiry_round <= rnd:
        tok = reg[i]
        if tok.live:
            tok.expired = True
            ledger.locked[tok.owner] -= ledger.y
            ledger.burned += ledger.y
            ledger._drop_owned(tok)
            out.append(tok)
        i += 1
    ledger._expiry_cursor = i
    return out


def build_block(
    rnd: int,
    user_txns: Iterable[Transaction],
    adversary_txns: Iterable[Transaction],
    cap: Optional[int] = None,
) -> Block:
    """Order candidate transactions into a block.

    Tokenized transactions come first in ascending token id, regardless of
    who submitted them; beyond `cap`, the highest ids are dropped and their
    tokens stay live.
    """
    candidates = [*user_txns, *adversary_txns]
    tokenized = sorted((tx for tx in candidates if tx.tokenized), key=lambda tx: tx.token_id)
    plain = [tx for tx in candidates if not tx.tokenized]
    dropped: list[Transaction] = []
    if cap is not None and len(tokenized) > cap:
        tokenized, dropped = tokenized[:cap], tokenized[cap:]
    return Block(rnd, tuple(tokenized + plain), tuple(dropped))


def validate_block(block: Block, ledger: Ledger, cap: Optional[int] = None) -> Optional[Violation]:
    """Return the first rule the block breaks, or None if it is valid."""
    seen_plain = False
    n_tokenized = 0
    prev_id = 0
    used: set[int] = set()
    for tx in block.transactions:
        if not tx.tokenized:
            seen_plain = True
            continue
        if seen_plain:
            return Violation(ViolationKind.TOKENIZED_AFTER_PLAIN, f"token {tx.token_id}")
        n_tokenized += 1
        tid = tx.token_id
        if tid in used:
            return Violation(ViolationKind.DOUBLE_SPEND, f"token {tid} used twice in block")
        if tid is None or tid <= prev_id:
            return Violation(ViolationKind.OUT_OF_ORDER, f"token {tid} after {prev_id}")
        prev_id = tid
        used.add(tid)
        tok = ledger.token(tid)
        if tok is None or tok.purchase_round >= block.round:
            return Violation(ViolationKind.UNCONFIRMED_TOKEN, f"token {tid}")
        if tok.spent:
            return Violation(ViolationKind.DOUBLE_SPEND, f"token {tid}")
        if tok.expired or (tok.expiry_round is not None and tok.expiry_round <= block.round):
            return Violation(ViolationKind.EXPIRED, f"token {tid}")
        if tok.owner is not tx.submitter:
            return Violation(ViolationKind.WRONG_OWNER, f"token {tid} owned by {tok.owner}")
    if cap is not None and n_tokenized > cap:
        return Violation(ViolationKind.CAP_EXCEEDED, f"{n_tokenized} > {cap}")
    return None


@dataclass(frozen=True)
class BlockReceipt:
    spent: tuple[int, ...]
    refunded: dict
    burned: int


def apply_block(ledger: Ledger, block: Block, credits: Optional[dict] = None,
                cap: Optional[int] = None) -> BlockReceipt:
    """Execute a validated block: spend its tokens and credit MEV proceeds.

    `credits` maps party to the MEV component it earns this round (purchase
    outflows are already booked by `issue_tokens`).
    """
    violation = validate_block(block, ledger, cap)
    if violation is not None:
        raise BlockRejected(violation)
    refunded = {Party.USER: 0, Party.ADVERSARY: 0}
    burned = 0
    spent = []
    for tx in block.transactions:
        if not tx.tokenized:
            continue
        tok = ledger.registry[tx.token_id - 1]
        tok.spent = True
        tok.spent_round = block.round
        ledger._drop_owned(tok)
        ledger.locked[tok.owner] -= ledger.y
        if ledger.refund:
            ledger.liquid[tok.owner] += ledger.y
            refunded[tok.owner] += ledger.y
        else:
            burned += ledger.y
        spent.append(tok.id)
    ledger.burned += burned
    for party, amount in (credits or {}).items():
        ledger.liquid[party] += amount
    return BlockReceipt(tuple(spent), refunded, burned)


def parse_snapshot(text: str) -> list[tuple]:
    rows = []
    for line in text.splitlines():
        tid, owner, pr, spent, expiry = line.split(",")
        rows.append((int(tid), Party(owner), int(pr), spent == "1", int(expiry) if expiry else None))
    return rows


