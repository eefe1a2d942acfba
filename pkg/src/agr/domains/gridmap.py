"""Map domain: observer and target share a walled room.

The target tours its task stations nearest-first and keeps its goal station
for last, where it waits for help.  The observer works at work stations and
sees the target only along unobstructed lines of sight.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from ..compiler import AgrSpec, ObservationRelation, ObserverDomain, TargetDomain
from ..exceptions import InvalidLayout, SpecFileError

# (drow, dcol) in action order left, right, up, down
MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0))
MOVE_ACTIONS = ("A_left", "A_right", "A_up", "A_down")

DEFAULT_LAYOUT = """\
#######
#T...T#
#.....#
#..G..#
#T...T#
###.###
##WO###
#######
"""


@dataclass(frozen=True)
class VisibilityRule:
    """``mode`` is ``"ray"`` (center-to-center ray must miss every wall
    interior) or ``"axis"`` (same row or column, no wall in between);
    ``radius`` optionally caps the Euclidean distance."""

    mode: str = "ray"
    radius: Optional[float] = None


@dataclass(frozen=True)
class MapRewards:
    idle: float = 0.0
    work_at_station: float = 5.0
    work_elsewhere: float = -10.0
    move: float = -1.0
    help_correct: float = 100.0
    help_wrong: float = -100.0


@dataclass(frozen=True)
class MapLayout:
    """Room geometry; cells are (row, col) and ``walls[r, c]`` is True for walls."""

    walls: np.ndarray
    task_stations: tuple
    work_stations: tuple
    observer_start: tuple
    target_start: tuple
    visibility: VisibilityRule = field(default_factory=VisibilityRule)

    @property
    def shape(self):
        return self.walls.shape

    def is_free(self, cell):
        r, c = cell
        return 0 <= r < self.walls.shape[0] and 0 <= c < self.walls.shape[1] and not self.walls[r, c]

    def free_cells(self):
        return [tuple(int(x) for x in rc) for rc in np.argwhere(~self.walls)]

    def to_ascii(self):
        rows = [["#" if w else "." for w in row] for row in self.walls]
        for mark, cells in (("W", self.work_stations), ("T", self.task_stations)):
            for r, c in cells:
                rows[r][c] = mark
        rows[self.observer_start[0]][self.observer_start[1]] = "O"
        rows[self.target_start[0]][self.target_start[1]] = "G"
        return "\n".join("".join(r) for r in rows) + "\n"


def parse_layout(text, path=None, visibility=None):
    """Read an ASCII grid: ``#`` wall, ``.`` free, ``T`` task station,
    ``W`` work station, ``O`` observer start, ``G`` target start.
    Short rows are padded with walls."""
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise SpecFileError("layout is empty", path=path)
    width = max(len(line) for line in lines)
    walls = np.ones((len(lines), width), dtype=bool)
    tasks, works, obs_start, tgt_start = [], [], [], []
    for r, line in enumerate(lines):
        for c, ch in enumerate(line):
            if ch == "#" or ch == " ":
                continue
            if ch not in ".TWOG":
                raise SpecFileError(f"unknown layout character {ch!r} at column {c + 1}", path=path, line=r + 1)
            walls[r, c] = False
            {"T": tasks, "W": works, "O": obs_start, "G": tgt_start}.get(ch, []).append((r, c))
    if len(obs_start) != 1 or len(tgt_start) != 1:
        raise SpecFileError("layout needs exactly one 'O' and one 'G'", path=path)
    return MapLayout(walls, tuple(tasks), tuple(works), obs_start[0], tgt_start[0], visibility or VisibilityRule())


def load_layout(path, visibility=None):
    path = Path(path)
    return parse_layout(path.read_text(), path=path, visibility=visibility)


def default_map_layout():
    """Room with four corner task stations above an alcove holding the work
    station.  The observer starts one step from the work station, which sees
    the room only through a narrow doorway."""
    return parse_layout(DEFAULT_LAYOUT)


def bfs_distances(layout, source):
    """Shortest 4-connected path length from ``source`` to every cell (-1 if unreachable)."""
    dist = np.full(layout.shape, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        r, c = queue.popleft()
        for dr, dc in MOVES:
            nxt = (r + dr, c + dc)
            if layout.is_free(nxt) and dist[nxt] < 0:
                dist[nxt] = dist[r, c] + 1
                queue.append(nxt)
    return dist


def _segment_hits_open_box(p, q, lo, hi):
    # Liang-Barsky on the open box (lo, hi) in exact arithmetic.
    t_min, t_max = Fraction(0), Fraction(1)
    open_lo, open_hi = None, None
    for axis in range(2):
        d = q[axis] - p[axis]
        if d == 0:
            if not lo[axis] < p[axis] < hi[axis]:
                return False
            continue
        t1 = Fraction(lo[axis] - p[axis], d)
        t2 = Fraction(hi[axis] - p[axis], d)
        if t1 > t2:
            t1, t2 = t2, t1
        open_lo = t1 if open_lo is None else max(open_lo, t1)
        open_hi = t2 if open_hi is None else min(open_hi, t2)
    if open_lo is None:
        return True
    return open_lo < open_hi and open_lo < t_max and open_hi > t_min


def line_of_sight(layout, a, b):
    """Whether cells ``a`` and ``b`` see each other under the layout's rule."""
    if a == b:
        return True
    rule = layout.visibility
    if rule.radius is not None and (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 > rule.radius ** 2:
        return False
    if rule.mode == "axis":
        if a[0] != b[0] and a[1] != b[1]:
            return False
        r0, r1 = sorted((a[0], b[0]))
        c0, c1 = sorted((a[1], b[1]))
        return not layout.walls[r0 : r1 + 1, c0 : c1 + 1].any()
    if rule.mode != "ray":
        raise InvalidLayout(f"unknown visibility mode {rule.mode!r}")
    # doubled coordinates: centers even, cell borders odd
    p, q = (2 * a[0], 2 * a[1]), (2 * b[0], 2 * b[1])
    r0, r1 = sorted((a[0], b[0]))
    c0, c1 = sorted((a[1], b[1]))
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            if layout.walls[r, c] and _segment_hits_open_box(p, q, (2 * r - 1, 2 * c - 1), (2 * r + 1, 2 * c + 1)):
                return False
    return True


def visibility_matrix(layout, cells=None):
    cells = layout.free_cells() if cells is None else cells
    n = len(cells)
    vis = np.eye(n, dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            vis[i, j] = vis[j, i] = line_of_sight(layout, cells[i], cells[j])
    return vis


def validate_layout(layout):
    for name, cells in (("task station", layout.task_stations), ("work station", layout.work_stations)):
        for cell in cells:
            if not layout.is_free(cell):
                raise InvalidLayout(f"{name} {cell} is not on a free cell")
    for name, cell in (("observer start", layout.observer_start), ("target start", layout.target_start)):
        if not layout.is_free(cell):
            raise InvalidLayout(f"{name} {cell} is not on a free cell")
    if len(layout.task_stations) < 1:
        raise InvalidLayout("layout needs at least one task station")
    if len(set(layout.task_stations)) != len(layout.task_stations):
        raise InvalidLayout("task stations must be distinct cells")
    if layout.target_start in layout.task_stations:
        raise InvalidLayout("target must not start on a task station")
    from_target = bfs_distances(layout, layout.target_start)
    for cell in layout.task_stations:
        if from_target[cell] < 0:
            raise InvalidLayout(f"task station {cell} is not reachable from the target start")
    from_observer = bfs_distances(layout, layout.observer_start)
    if not any(from_observer[cell] >= 0 for cell in layout.work_stations):
        raise InvalidLayout("no work station is reachable from the observer start")
    return layout


class _TargetWalker:
    """Nearest-first station tour; hidden state is a bitmask of stations left."""

    def __init__(self, layout, cells):
        self.cells = cells
        self.index = {c: i for i, c in enumerate(cells)}
        self.stations = [self.index[c] for c in layout.task_stations]
        n_cells = len(cells)
        self.dist = np.full((n_cells, n_cells), -1, dtype=np.int64)
        for i, c in enumerate(cells):
            d = bfs_distances(layout, c)
            self.dist[i] = [d[x] for x in cells]
        self.neighbors = []
        for r, c in cells:
            self.neighbors.append([self.index.get((r + dr, c + dc)) for dr, dc in MOVES])

    def next_station(self, cell, remaining, goal):
        best = None
        for k, st in enumerate(self.stations):
            if k == goal or not remaining >> k & 1 or self.dist[cell, st] < 0:
                continue
            key = (self.dist[cell, st], k)
            if best is None or key < best:
                best = key
        return None if best is None else best[1]

    def step_toward(self, cell, dest):
        d = self.dist[cell, dest]
        if d <= 0:
            return cell
        for nb in self.neighbors[cell]:
            if nb is not None and self.dist[nb, dest] == d - 1:
                return nb
        return cell

    def step(self, cell, remaining, goal):
        k = self.next_station(cell, remaining, goal)
        if k is None:
            return self.step_toward(cell, self.stations[goal]), remaining
        nxt = self.step_toward(cell, self.stations[k])
        if nxt == self.stations[k]:
            remaining &= ~(1 << k)
        return nxt, remaining


def build_map(layout=None, rewards=None, horizon=30, discount=0.95, terminate_on_decision=False, goal_prior=None):
    """AgrSpec of the map domain for ``layout`` (default layout if omitted)."""
    layout = validate_layout(default_map_layout() if layout is None else layout)
    rewards = rewards or MapRewards()
    cells = layout.free_cells()
    cell_index = {c: i for i, c in enumerate(cells)}
    n_cells = len(cells)
    n_task = len(layout.task_stations)
    n_masks = 1 << n_task
    walker = _TargetWalker(layout, cells)
    work_cells = {cell_index[c] for c in layout.work_stations}

    # observer
    planning = ("A_idle", "A_work") + MOVE_ACTIONS
    trans = np.empty((n_cells, len(planning)), dtype=np.int64)
    cost = np.empty((n_cells, len(planning)))
    for i, (r, c) in enumerate(cells):
        trans[i, 0] = trans[i, 1] = i
        cost[i, 0] = -rewards.idle
        cost[i, 1] = -(rewards.work_at_station if i in work_cells else rewards.work_elsewhere)
        for j, (dr, dc) in enumerate(MOVES):
            trans[i, 2 + j] = cell_index.get((r + dr, c + dc), i)
            cost[i, 2 + j] = -rewards.move

    # target: (cell, mask) flattened as cell * n_masks + mask, then terminal
    terminal = n_cells * n_masks
    target_labels = tuple(
        f"{cells[i]}:{format(m, f'0{n_task}b')}" for i in range(n_cells) for m in range(n_masks)
    ) + ("done",)
    observable_of = np.append(np.repeat(np.arange(n_cells), n_masks), n_cells)
    initial_target = cell_index[layout.target_start] * n_masks + (n_masks - 1)

    def behavior(st, g, decided):
        if st == terminal or decided:
            return terminal
        cell, mask = divmod(st, n_masks)
        nxt, mask = walker.step(cell, mask, g)
        return nxt * n_masks + mask

    def decision_succeeds(sp_, st, g, k):
        if st == terminal:
            return False
        cell, mask = divmod(st, n_masks)
        goal_cell = walker.stations[g]
        return cell == goal_cell and sp_ == goal_cell and mask == 1 << g

    def decide_cost(sp_, st, g, k):
        if decision_succeeds(sp_, st, g, k):
            return -rewards.help_correct
        return -rewards.help_wrong

    vis_cells = visibility_matrix(layout, cells)
    visible = np.zeros((n_cells, terminal + 1), dtype=bool)
    visible[:, :terminal] = np.repeat(vis_cells, n_masks, axis=1)

    observer = ObserverDomain(
        states=tuple(str(c) for c in cells),
        initial=cell_index[layout.observer_start],
        planning_actions=planning,
        observe_actions=(),
        decide_actions=("A_help",),
        transition=trans,
        planning_cost=cost,
        decide_cost=decide_cost,
        own_task_actions=("A_work",),
    )
    target = TargetDomain(
        states=target_labels,
        observable=tuple(str(c) for c in cells) + ("done",),
        observable_of=observable_of,
        initial=initial_target,
        terminal=terminal,
        goals=tuple(str(c) for c in layout.task_stations),
        behavior=behavior,
        decision_succeeds=decision_succeeds,
    )
    return AgrSpec(
        observer=observer,
        target=target,
        relation=ObservationRelation(visible),
        horizon=horizon,
        discount=discount,
        goal_prior=None if goal_prior is None else np.asarray(goal_prior, dtype=float),
        terminate_on_decision=terminate_on_decision,
        name="map",
        metadata={"domain": "map", "layout": layout, "rewards": rewards, "cells": cells},
    )


def target_route(layout, goal, steps=None):
    """Cells the target occupies from its start for ``goal`` (a task-station index)."""
    cells = layout.free_cells()
    walker = _TargetWalker(layout, cells)
    n_task = len(layout.task_stations)
    cell = cells.index(layout.target_start)
    mask = (1 << n_task) - 1
    route = [cells[cell]]
    steps = 4 * len(cells) if steps is None else steps
    for _ in range(steps):
        cell, mask = walker.step(cell, mask, goal)
        route.append(cells[cell])
    return route
