"""
Reverse mode over computation chains with bounded memory.

Every strategy is a materialized ``Schedule`` of actions run by one
interpreter, ``vjpWithSchedule``. The interpreter owns a working
register and a set of numbered slots; slot 0 holds s_0. Only forward
step evaluations count as calls; only slots count as memory.

Actions:
    Forward(k) -- register <- f_k(register)
    Store(slot, k) -- slot <- register, which holds s_k
    Restore(slot) -- register <- slot
    Backprop(k) -- r <- ∂f_k(register)*[r], the register must hold s_{k-1}

"""

from __future__ import annotations
from dataclasses import dataclass, field
from math import ceil
from typing import Any, Callable, NamedTuple, Sequence
import logging

import numpy as np

from .autodiff import vjp
from .graph import Graph, GraphBuilder, asTensor, inlineGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainProgram:
    """
    A chain s_k = f_k(s_{k-1}), k = 1..K

    Attributes:
        K (int): chain length
        step: (k, s_{k-1}) -> s_k
        stepVjp: (k, s_{k-1}, r_k) -> r_{k-1}

    """

    K: int
    step: Callable
    stepVjp: Callable

    @staticmethod
    def fromGraphs(steps: Sequence[Graph]) -> ChainProgram:
        """
        A chain whose k-th step is the single-input graph steps[k-1]

        """

        steps = list(steps)

        def step(k, s):
            return steps[k - 1].eval([s])

        def stepVjp(k, s, r):
            return vjp(steps[k - 1], [s], r)[0]

        return ChainProgram(len(steps), step, stepVjp)


def flattenChain(steps: Sequence[Graph]) -> Graph:
    b = GraphBuilder()
    s = b.input(steps[0].inputShapes[0])
    for g in steps:
        s = inlineGraph(b, g, [s])
    return b.build(s)


class Action(NamedTuple):
    op: str
    k: int = 0
    slot: int = 0

    def __str__(self) -> str:
        if self.op == 'store':
            return f'Store({self.slot},{self.k})'
        if self.op == 'restore':
            return f'Restore({self.slot})'
        return f'{self.op.capitalize()}({self.k})'


def forward(k: int) -> Action:
    return Action('forward', k)


def store(slot: int, k: int) -> Action:
    return Action('store', k, slot)


def restore(slot: int) -> Action:
    return Action('restore', 0, slot)


def backprop(k: int) -> Action:
    return Action('backprop', k)


@dataclass
class Schedule:
    """
    An ordered checkpointing plan

    Attributes:
        K (int): the chain length it is made for
        slots (int): the number of slots S it may use
        actions (list[Action]): the plan

    """

    K: int
    slots: int
    actions: list = field(default_factory=list)

    def __str__(self) -> str:
        return ' '.join(str(a) for a in self.actions)


@dataclass
class Counters:
    """
    Attributes:
        calls (int): forward step evaluations
        peakSlots (int): most slots occupied at once, s_0 included

    """

    calls: int = 0
    peakSlots: int = 0


def simulateSchedule(schedule: Schedule) -> Counters:
    """
    Check a schedule and count its cost without running any step

    Raises:
        ValueError: an action needs a state that is not available,
            a slot is out of range or backprops are not K..1

    """

    reg = 0
    slots = {0: 0}
    expected = schedule.K
    counters = Counters(peakSlots=1)

    for pos, a in enumerate(schedule.actions):
        where = f'simulate: action {pos} {a}'
        if a.op == 'forward':
            if a.k != reg + 1:
                raise ValueError(f'{where}: register holds s_{reg}')
            reg = a.k
            counters.calls += 1
        elif a.op == 'store':
            if not 0 <= a.slot < schedule.slots:
                raise ValueError(f'{where}: only {schedule.slots} slots')
            if a.k != reg:
                raise ValueError(f'{where}: register holds s_{reg}')
            slots[a.slot] = reg
            counters.peakSlots = max(counters.peakSlots, len(slots))
        elif a.op == 'restore':
            if a.slot not in slots:
                raise ValueError(f'{where}: slot is empty')
            reg = slots[a.slot]
        elif a.op == 'backprop':
            if a.k != expected:
                raise ValueError(f'{where}: expected Backprop({expected})')
            if reg != a.k - 1:
                raise ValueError(f'{where}: register holds s_{reg}')
            expected -= 1
        else:
            raise ValueError(f'{where}: unknown action')

    if expected != 0:
        raise ValueError(
            f'simulate: schedule stops before Backprop({expected})')

    return counters


def vjpWithSchedule(chain: ChainProgram, s0: Any, u: Any,
                    schedule: Schedule) -> tuple:
    """
    Run a checkpointing schedule

    Args:
        chain (ChainProgram): the chain
        s0 (Any): its input
        u (Any): cotangent of s_K
        schedule (Schedule): the plan

    Returns:
        Tensor: ∂f(s_0)*[u]
        Counters: calls made and peak slots used

    Raises:
        ValueError: the schedule is made for another K or is invalid
        RuntimeError: more than ``schedule.slots`` states were stored

    """

    if schedule.K != chain.K:
        raise ValueError(
            f'vjp_with_schedule: schedule is for K={schedule.K}, '
            f'chain has K={chain.K}')

    simulateSchedule(schedule)

    reg = asTensor(s0)
    slots = {0: reg}
    r = asTensor(u)
    counters = Counters(peakSlots=1)

    for a in schedule.actions:
        if a.op == 'forward':
            reg = asTensor(chain.step(a.k, reg))
            counters.calls += 1
        elif a.op == 'store':
            slots[a.slot] = reg
            counters.peakSlots = max(counters.peakSlots, len(slots))
            if counters.peakSlots > schedule.slots:
                raise RuntimeError(
                    f'vjp_with_schedule: {counters.peakSlots} states '
                    f'stored, only {schedule.slots} allowed')
        elif a.op == 'restore':
            reg = slots[a.slot]
        else:
            r = asTensor(chain.stepVjp(a.k, reg, r))

    logger.debug('schedule K=%d S=%d: %d calls, %d slots', schedule.K,
                 schedule.slots, counters.calls, counters.peakSlots)
    return r, counters


def fullCacheSchedule(K: int) -> Schedule:
    actions = [restore(0)]
    for k in range(1, K):
        actions += [forward(k), store(k, k)]
    for k in range(K, 0, -1):
        actions += [restore(k - 1), backprop(k)]
    return Schedule(K, K, actions)


def _recomputeFrom(start: int, k: int, slot: int) -> list:
    actions = []
    for j in range(k, 0, -1):
        actions.append(restore(slot))
        actions += [forward(start + i) for i in range(1, j)]
        actions.append(backprop(start + j))
    return actions


def fullRecomputeSchedule(K: int) -> Schedule:
    return Schedule(K, 1, _recomputeFrom(0, K, 0))


def halvingSchedule(K: int) -> Schedule:
    """
    Recursive halving: split at ceil(k/2), store the midpoint, do the
    right half, then the left half. A right half of one step uses the
    register directly without storing it.

    """

    actions: list = []
    peak = [1]

    def rec(start: int, length: int, slot: int) -> None:
        peak[0] = max(peak[0], slot + 1)
        if length == 1:
            actions.extend([restore(slot), backprop(start + 1)])
            return

        half = ceil(length / 2)
        actions.append(restore(slot))
        actions.extend(forward(start + i) for i in range(1, half + 1))

        if length - half == 1:
            actions.append(backprop(start + half + 1))
        else:
            actions.append(store(slot + 1, start + half))
            rec(start + half, length - half, slot + 1)

        rec(start, half, slot)

    rec(0, K, 0)
    return Schedule(K, peak[0], actions)


@dataclass
class CostTable:
    """
    Optimal recomputation counts C*(k, s) and first optimal splits l*(k, s)
    for 1 <= k <= K, 1 <= s <= S. Splits are 0 where no split applies.

    """

    cost: np.ndarray
    split: np.ndarray

    @property
    def K(self) -> int:
        return self.cost.shape[0] - 1

    @property
    def S(self) -> int:
        return self.cost.shape[1] - 1

    def rows(self) -> list:
        return [(k, s, int(self.cost[k, s]), int(self.split[k, s]))
                for k in range(1, self.K + 1) for s in range(1, self.S + 1)]

    def toCsv(self) -> str:
        lines = ['k,s,cost,split']
        lines += [f'{k},{s},{c},{cut}' for k, s, c, cut in self.rows()]
        return '\n'.join(lines)


def costTable(K: int, S: int) -> CostTable:
    """
    Fill C*(k, s) = min_{1<=l<k} C*(k-l, s-1) + C*(l, s) + l
    with C*(1, s) = 0 and C*(k, 1) = k(k-1)/2

    """

    if K < 1 or S < 1:
        raise ValueError(f'treeverse: need K >= 1 and S >= 1, got {K}, {S}')

    cost = np.zeros((K + 1, S + 1), dtype=np.int64)
    split = np.zeros((K + 1, S + 1), dtype=np.int64)

    for k in range(2, K + 1):
        cost[k, 1] = k * (k - 1) // 2
        for s in range(2, S + 1):
            best, arg = None, 0
            for cut in range(1, k):
                c = cost[k - cut, s - 1] + cost[cut, s] + cut
                if best is None or c < best:
                    best, arg = c, cut
            cost[k, s], split[k, s] = best, arg

    return CostTable(cost, split)


def treeversePlan(K: int, S: int) -> tuple:
    """
    Optimal checkpointing plan for K steps and S slots

    Returns:
        CostTable: the dynamic-programming table
        Schedule: the plan; it makes exactly C*(K, S) forward calls

    """

    table = costTable(K, S)
    actions: list = []

    def gen(start: int, k: int, s: int, slot: int) -> None:
        if k == 1:
            actions.extend([restore(slot), backprop(start + 1)])
        elif s == 1:
            actions.extend(_recomputeFrom(start, k, slot))
        else:
            cut = int(table.split[k, s])
            actions.append(restore(slot))
            actions.extend(forward(start + i) for i in range(1, cut + 1))
            actions.append(store(slot + 1, start + cut))
            gen(start + cut, k - cut, s - 1, slot + 1)
            gen(start, cut, s, slot)

    gen(0, K, S, 0)
    logger.debug('treeverse K=%d S=%d: cost %d', K, S, table.cost[K, S])
    return table, Schedule(K, S, actions)


def vjpFullCache(chain: ChainProgram, s0: Any, u: Any) -> tuple:
    return vjpWithSchedule(chain, s0, u, fullCacheSchedule(chain.K))


def vjpFullRecompute(chain: ChainProgram, s0: Any, u: Any) -> tuple:
    return vjpWithSchedule(chain, s0, u, fullRecomputeSchedule(chain.K))


def vjpRecursiveHalving(chain: ChainProgram, s0: Any, u: Any) -> tuple:
    return vjpWithSchedule(chain, s0, u, halvingSchedule(chain.K))


def vjpTreeverse(chain: ChainProgram, s0: Any, u: Any, slots: int) -> tuple:
    return vjpWithSchedule(chain, s0, u, treeversePlan(chain.K, slots)[1])


STRATEGIES = {
    'full_cache': vjpFullCache,
    'full_recompute': vjpFullRecompute,
    'halving': vjpRecursiveHalving,
}
