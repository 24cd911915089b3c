"""Gridworld builders for the benchmark models.

Cells are ``(row, col)`` with ``(0, 0)`` in the top-left corner.  Moves that
would leave the grid keep the agent in place.  Under stochastic motion the
intended move succeeds with probability ``p``; otherwise the agent moves in a
direction drawn uniformly from the three that are not opposite to the
intended one (the intended direction included).
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..model import Geometric, GoalSet, Horizon, LabeledPomdp
from ..multiagent import MaModel

MOVES = {"N": (-1, 0), "S": (1, 0), "E": (0, 1), "W": (0, -1)}
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}
GAMMA = 0.99

Cell = tuple[int, int]


def step(rows: int, cols: int, cell: Cell, d: str) -> Cell:
    r, c = cell[0] + MOVES[d][0], cell[1] + MOVES[d][1]
    return (r, c) if 0 <= r < rows and 0 <= c < cols else cell


def move_dist(rows: int, cols: int, cell: Cell, d: str, p: float) -> dict:
    """Distribution over next cells for intended direction ``d``."""
    out: dict = {}
    slips = [e for e in MOVES if e != OPPOSITE[d]]
    for e, w in [(d, p)] + [(e, (1.0 - p) / len(slips)) for e in slips]:
        if w > 0:
            nxt = step(rows, cols, cell, e)
            out[nxt] = out.get(nxt, 0.0) + w
    return out


def neighbors(rows: int, cols: int, cell: Cell) -> list:
    """The cell itself and its in-grid 4-neighbours."""
    out = [cell]
    for d in MOVES:
        n = step(rows, cols, cell, d)
        if n != cell:
            out.append(n)
    return out


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def cell_name(cell: Cell) -> str:
    return f"{cell[0]},{cell[1]}"


def grid_pomdp(
    rows: int,
    cols: int,
    atoms: Sequence[str],
    label_of: Callable,
    reward_of: Callable,
    observe: Callable,
    p_move: float = 1.0,
    horizon: Horizon | None = None,
    worlds: Sequence = (None,),
    goal_of: Callable | None = None,
    start: Cell = (0, 0),
    meta: dict | None = None,
) -> LabeledPomdp:
    """Single-agent grid POMDP over ``(world, cell)`` states.

    The world is drawn uniformly at the start and never changes.
    ``label_of(w, cell)`` returns atom names, ``reward_of(w, cell)`` the
    reward of every action there, ``observe(w, cell)`` a dict from
    observation names to probabilities and ``goal_of(w, cell)`` whether the
    state is a goal (goal-set horizons only).
    """
    cells = [(r, c) for r in range(rows) for c in range(cols)]
    states = [(w, cell) for w in worlds for cell in cells]
    index = {s: i for i, s in enumerate(states)}
    names = [cell_name(c) if w is None else f"{w}:{cell_name(c)}" for w, c in states]
    acts = list(MOVES)
    S, U = len(states), len(acts)
    P = np.zeros((U, S, S))
    for i, (w, cell) in enumerate(states):
        for u, d in enumerate(acts):
            for nxt, pr in move_dist(rows, cols, cell, d, p_move).items():
                P[u, i, index[w, nxt]] += pr
    obs_names: list = []
    omap: dict = {}
    rows_z = []
    for w, cell in states:
        dist = observe(w, cell)
        for o in dist:
            if o not in omap:
                omap[o] = len(obs_names)
                obs_names.append(o)
        rows_z.append(dist)
    Z = np.zeros((S, len(obs_names)))
    for i, dist in enumerate(rows_z):
        for o, pr in dist.items():
            Z[i, omap[o]] += pr
    bit = {a: k for k, a in enumerate(atoms)}
    labels = np.zeros(S, dtype=np.int64)
    ro = np.zeros((S, U))
    for i, (w, cell) in enumerate(states):
        for a in label_of(w, cell):
            labels[i] |= 1 << bit[a]
        ro[i] = reward_of(w, cell)
    init = np.zeros(S)
    for w in worlds:
        init[index[w, start]] = 1.0 / len(worlds)
    horizon = horizon or Geometric(GAMMA)
    if goal_of is not None:
        goals = tuple(i for i, (w, cell) in enumerate(states) if goal_of(w, cell))
        horizon = GoalSet(goals, getattr(horizon, "step_cap", GoalSet(()).step_cap))
    return LabeledPomdp(P, Z, init, labels, ro, np.zeros((S, U)), horizon, tuple(atoms), tuple(names),
                        tuple(acts), tuple(obs_names), dict(meta or {}))


def noisy(rows: int, cols: int) -> Callable:
    """Uniform over the true cell and its in-grid neighbours."""

    def observe(w, cell):
        near = neighbors(rows, cols, cell)
        return {cell_name(n): 1.0 / len(near) for n in near}

    return observe


def exact(w, cell) -> dict:
    return {cell_name(cell): 1.0}


def placed(table: dict) -> Callable:
    """``label_of`` from a map atom -> list of cells."""

    def label_of(w, cell):
        return [a for a, cs in table.items() if tuple(cell) in {tuple(c) for c in cs}]

    return label_of


def rewards(table: dict, default: float = 0.0) -> Callable:
    def reward_of(w, cell):
        return table.get(tuple(cell), default)

    return reward_of


# -- location uncertainty (noisy position, slippery motion) ----------------------


def location_model(rows, cols, atoms, cells, reward, p_move=0.95, meta=None) -> LabeledPomdp:
    return grid_pomdp(rows, cols, atoms, placed(cells), rewards(reward), noisy(rows, cols), p_move,
                      meta=meta)


# -- predicate uncertainty (object b at one of two places) -----------------------


def predicate_model(atoms, cells, reward, sites=((3, 0), (0, 3)), detect=(0.9, 0.1), meta=None) -> LabeledPomdp:
    """4x4 deterministic grid; ``b`` sits at one of ``sites`` (uniform).

    Next to ``b`` the agent sees ``C`` with the probability ``detect`` gives
    for that site and ``F`` otherwise; further away it always sees ``F``.
    """
    worlds = tuple(f"b{cell_name(c)}" for c in sites)
    where = dict(zip(worlds, sites))
    base = placed(cells)

    def label_of(w, cell):
        return base(w, cell) + (["b"] if cell == where[w] else [])

    def observe(w, cell):
        site = where[w]
        if manhattan(cell, site) > 1:
            return {f"{cell_name(cell)}:F": 1.0}
        pc = detect[sites.index(site)]
        return {f"{cell_name(cell)}:C": pc, f"{cell_name(cell)}:F": 1.0 - pc}

    return grid_pomdp(4, 4, atoms, label_of, rewards(reward), observe, 1.0, worlds=worlds, meta=meta)


# -- goal models (cost -1 per step until the goal) -------------------------------


def goal_model(rows, cols, atoms, cells, goal, p_move=0.8, meta=None) -> LabeledPomdp:
    """Exact position, slippery motion, reward -1 everywhere except at ``goal``.

    ``goal=None`` leaves the goal set empty so that the product can use the
    accepting automaton states instead.
    """
    goal_of = None if goal is None else (lambda w, cell: cell == tuple(goal))
    reward_of = rewards({} if goal is None else {tuple(goal): 0.0}, -1.0)
    return grid_pomdp(rows, cols, atoms, placed(cells), reward_of, exact, p_move, GoalSet(()),
                      goal_of=goal_of, meta=meta)


def revealed_model(atoms, cells, goal, reveal, hidden="c", meta=None) -> LabeledPomdp:
    """4x4 deterministic goal model where atom ``hidden`` holds in one of two worlds.

    The truth value is uniform at the start and only observed at ``reveal``.
    """
    worlds = (hidden, "!" + hidden)
    base = placed(cells)

    def label_of(w, cell):
        return base(w, cell) + ([hidden] if w == hidden else [])

    def observe(w, cell):
        tag = f":{w}" if cell == tuple(reveal) else ""
        return {cell_name(cell) + tag: 1.0}

    return grid_pomdp(4, 4, atoms, label_of, rewards({tuple(goal): 0.0}, -1.0), observe, 1.0, GoalSet(()),
                      worlds=worlds, goal_of=lambda w, cell: cell == tuple(goal), meta=meta)


# -- two agents on crossing lanes ------------------------------------------------


def lane_team(
    lanes: Sequence[Sequence[Cell]],
    moves: Sequence[Sequence[str]],
    starts: Sequence[Cell],
    goals: Sequence[Sequence[Cell]],
    on_lane: Sequence[Cell],
    switch: float = 0.2,
    order: bool = False,
    goal_atoms: Sequence[str] = (),
    forbid: dict | None = None,
    meta: dict | None = None,
) -> MaModel:
    """Two agents, each moving deterministically over the cells in ``lanes[i]``.

    The shared state is the pair of positions.  ``moves[i]`` lists agent
    i's directions; a move onto a cell outside ``lanes[i]`` keeps the agent
    in place, as does a direction listed for the current cell in ``forbid``
    (one-way lanes).  Agent i's local state is the index of its current goal in
    ``goals[i]``; while it stands on that goal the goal jumps with
    probability ``switch`` to one of the others, uniformly.  Each agent
    earns 1 per step on its goal.  ``order=True`` instead keeps all goals of
    agent 2 active, and its local state is the hidden order bit ``o`` (uniform
    at the start), with local atoms ``o`` and ``goal_atoms`` (one per goal).
    Shared atoms: ``s`` (both agents on ``on_lane``) and ``col`` (Manhattan
    distance at most 1).
    """
    pos = [list(map(tuple, lane)) for lane in lanes]
    shared = [(a, b) for a in pos[0] for b in pos[1]]
    sidx = {s: i for i, s in enumerate(shared)}
    S = len(shared)
    acts = [len(m) for m in moves]
    U = acts[0] * acts[1]
    rows = 1 + max(c[0] for lane in pos for c in lane)
    cols = 1 + max(c[1] for lane in pos for c in lane)

    forbid = {tuple(k): set(v) for k, v in (forbid or {}).items()}

    def go(i, cell, u):
        if moves[i][u] in forbid.get(cell, ()):
            return cell
        nxt = step(rows, cols, cell, moves[i][u])
        return nxt if nxt in pos[i] else cell

    P = np.zeros((U, S, S))
    for k, (a, b) in enumerate(shared):
        for u1 in range(acts[0]):
            for u2 in range(acts[1]):
                P[u1 * acts[1] + u2, k, sidx[go(0, a, u1), go(1, b, u2)]] = 1.0
    lane_set = {tuple(c) for c in on_lane}
    shared_labels = np.zeros(S, dtype=np.int64)
    for k, (a, b) in enumerate(shared):
        if a in lane_set and b in lane_set:
            shared_labels[k] |= 1
        if manhattan(a, b) <= 1:
            shared_labels[k] |= 2
    goals = [[tuple(g) for g in gs] for gs in goals]
    sizes = [len(goals[0]), 2 if order else len(goals[1])]
    local_P, local_labels, local_atoms = [], [], []
    for i in range(2):
        n = sizes[i]
        K = np.zeros((U, S, n, n))
        lab = np.zeros((S, n), dtype=np.int64)
        for k, s in enumerate(shared):
            for g in range(n):
                if order and i == 1:
                    K[:, k, g, g] = 1.0
                    continue
                if s[i] == goals[i][g] and n > 1:
                    K[:, k, g, g] = 1.0 - switch
                    for h in range(n):
                        if h != g:
                            K[:, k, g, h] = switch / (n - 1)
                else:
                    K[:, k, g, g] = 1.0
        if order and i == 1:
            names = ("o",) + tuple(goal_atoms)
            for k, s in enumerate(shared):
                for g in range(n):
                    lab[k, g] = (1 if g == 1 else 0) | sum(2 << j for j, c in enumerate(goals[1]) if s[1] == c)
            local_atoms.append(names)
        else:
            local_atoms.append(())
        local_P.append(K)
        local_labels.append(lab)
    init = np.zeros((S,) + tuple(sizes))
    s0 = sidx[tuple(starts[0]), tuple(starts[1])]
    if order:
        init[s0, 0, 0] = init[s0, 0, 1] = 0.5
    else:
        init[s0, 0, 0] = 1.0
    ro = np.zeros((S,) + tuple(sizes) + (U,))
    for k, s in enumerate(shared):
        for g1 in range(sizes[0]):
            for g2 in range(sizes[1]):
                r = float(s[0] == goals[0][g1])
                r += float(s[1] in goals[1]) if order else float(s[1] == goals[1][g2])
                ro[k, g1, g2, :] = r
    return MaModel(P, tuple(local_P), tuple(acts), init, shared_labels, tuple(local_labels), ro,
                   Geometric(GAMMA), shared_atoms=("s", "col"), local_atoms=tuple(local_atoms),
                   meta=dict(meta or {}))
