"""One-sided order book: a finite point measure with integer multiplicities.

The chain starts from a single order at 0.  While the book is nonempty, each
step flips a coin with bias p: heads places a new order at a displacement X
from the current price, tails removes one order sitting at the price.  An
empty book restarts at a single order at 0 on the next step (deterministic;
no randomness is consumed).  The price of an empty book is 0 by convention so
that outputs are reproducible.

``Book`` and ``BookTrajectory`` are plain values; ``step`` is a pure function.
``simulate`` is the fast driver: it tracks the order multiset in a max-heap
(removals only ever hit the maximum, so the heap never holds stale entries)
and records the dense price/mass path, with full states kept only on request.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .displacement import DisplacementDist, sample
from .streams import RandomStream

__all__ = [
    "Book",
    "BookTrajectory",
    "price",
    "step",
    "simulate",
    "extinction_time",
    "final_state",
]


class Book:
    """Finite point measure on the line; atoms carry positive counts."""

    __slots__ = ("_orders", "_mass")

    def __init__(self, orders: Optional[dict] = None) -> None:
        self._orders = {} if orders is None else orders
        self._mass = sum(self._orders.values())
        if any(c <= 0 for c in self._orders.values()):
            raise ValueError("order counts must be positive")

    @classmethod
    def empty(cls) -> "Book":
        return cls()

    @classmethod
    def dirac(cls, position) -> "Book":
        return cls({position: 1})

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple]) -> "Book":
        orders: dict = {}
        for pos, count in pairs:
            orders[pos] = orders.get(pos, 0) + count
        return cls(orders)

    @property
    def mass(self) -> int:
        return self._mass

    def price(self):
        """Rightmost order position; 0 for the empty book."""
        if self._mass == 0:
            return 0
        return max(self._orders)

    def count_at(self, position) -> int:
        return self._orders.get(position, 0)

    def add(self, position) -> "Book":
        orders = dict(self._orders)
        orders[position] = orders.get(position, 0) + 1
        return Book(orders)

    def remove_at_price(self) -> "Book":
        if self._mass == 0:
            raise ValueError("cannot remove from an empty book")
        orders = dict(self._orders)
        top = max(orders)
        if orders[top] == 1:
            del orders[top]
        else:
            orders[top] -= 1
        return Book(orders)

    def as_sorted_pairs(self) -> list[tuple]:
        return sorted(self._orders.items())

    def as_dict(self) -> dict:
        return dict(self._orders)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Book):
            return NotImplemented
        return self._orders == other._orders

    def __hash__(self) -> int:
        return hash(frozenset(self._orders.items()))

    def __repr__(self) -> str:
        inner = " + ".join(
            (f"{c}*d[{p}]" if c > 1 else f"d[{p}]") for p, c in self.as_sorted_pairs()
        )
        return f"Book({inner or 'empty'})"


@dataclass
class BookTrajectory:
    """Dense price/mass path of one run; full states optional."""

    prices: list
    masses: list[int]
    tau: Optional[int] = None
    states: Optional[list[Book]] = None
    events: Optional[list[str]] = None

    def __len__(self) -> int:
        return len(self.prices)


def price(book: Book):
    """Rightmost order position, 0 when the book is empty."""
    return book.price()


def step(book: Book, add: bool, x) -> Book:
    """One transition of the chain; pure.

    ``add`` is the coin outcome, ``x`` the realized displacement.  ``x`` is
    ignored on removal steps and whenever the book is empty.
    """
    if book.mass == 0:
        return Book.dirac(0)
    if add:
        return book.add(book.price() + x)
    return book.remove_at_price()


def simulate(
    p: float,
    dist: DisplacementDist,
    horizon: int,
    stream: RandomStream,
    store_states: bool = False,
    record_events: bool = False,
) -> BookTrajectory:
    """Run the chain for ``horizon`` steps from a single order at 0.

    Consumes one coin per nonempty step and one displacement draw per heads
    step; restart steps consume nothing.  Deterministic given the stream.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    unscale = dist.unscale
    heap: list = [0]  # negated internal positions; top is the price
    neg_price = 0
    mass = 1
    prices = [unscale(0)]
    masses = [1]
    tau: Optional[int] = None
    states = [Book.dirac(unscale(0))] if store_states else None
    events = [] if record_events else None
    counts: dict = {0: 1} if store_states else {}

    for n in range(1, horizon + 1):
        if mass == 0:
            heap = [0]
            neg_price = 0
            mass = 1
            if store_states:
                counts = {0: 1}
            event = "restart"
        elif stream.coin(p):
            x = dist.quantile_internal(stream.value_uniform())
            pos = -neg_price + x
            heapq.heappush(heap, -pos)
            neg_price = heap[0]
            mass += 1
            if store_states:
                counts[pos] = counts.get(pos, 0) + 1
            event = "add"
        else:
            pos = -heapq.heappop(heap)
            mass -= 1
            neg_price = heap[0] if heap else 0
            if store_states:
                if counts[pos] == 1:
                    del counts[pos]
                else:
                    counts[pos] -= 1
            event = "remove"
        prices.append(unscale(-neg_price) if mass > 0 else 0)
        masses.append(mass)
        if mass == 0 and tau is None:
            tau = n
        if store_states:
            states.append(Book.from_pairs((unscale(k), c) for k, c in counts.items()))
        if record_events:
            events.append(event)

    return BookTrajectory(prices=prices, masses=masses, tau=tau, states=states, events=events)


def extinction_time(traj: BookTrajectory) -> Optional[int]:
    """First step with an empty book, or None within the horizon."""
    for n, m in enumerate(traj.masses):
        if m == 0:
            return n
    return None


def final_state(p: float, dist: DisplacementDist, horizon: int, stream: RandomStream):
    """Price (internal units) and mass after ``horizon`` steps; no history kept."""
    heap: list = [0]
    mass = 1
    for _ in range(horizon):
        if mass == 0:
            heap = [0]
            mass = 1
        elif stream.coin(p):
            x = dist.quantile_internal(stream.value_uniform())
            heapq.heappush(heap, -(-heap[0] + x))
            mass += 1
        else:
            heapq.heappop(heap)
            mass -= 1
    return (-heap[0] if mass > 0 else 0, mass)
