"""Benchmark models M1-M11, their desk-scale variants and the specification catalog.

The models are stored as JSON files in ``data/``; ``python -m
ltlfpomdp.bench.zoo`` regenerates them from the builders below.
"""
from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..errors import SchemaError
from ..model import LabeledPomdp, model_from_dict, model_to_dict
from ..multiagent import MaModel, SpecBundle, ma_from_dict, ma_to_dict
from . import grid

SPECS = {
    "phi1": "F a & G !b",
    "phi2": "!b U (a & F b)",
    "phi3": "F (a | b) & G (b -> (!d U c))",
    "phi4": "G ((a | b | c | d) -> F s)",
    "phi5": "(c -> (!b U (a & F b))) & (!c -> (!a U (b & F a)))",
    "phi6": "G (s & !col)",
    "phi7": "(o -> (!b U (c & F b))) & (!o -> (!c U (b & F c))) & G (s & !col)",
}

# the multi-agent formulas split into a shared part and one part per agent
SPLIT = {
    "phi6": ("G (s & !col)", ("true", "true")),
    "phi7": ("G (s & !col)", ("true", "(o -> (!b U (c & F b))) & (!o -> (!c U (b & F c)))")),
}

# (spec, 1 - delta, B, reported objective, reported satisfaction)
TABLE = {
    "M1": ("phi1", 0.70, 8.0, 0.95, 0.70),
    "M2": ("phi2", 0.70, 6.0, 0.83, 0.71),
    "M3": ("phi3", 0.80, 10.0, 1.01, 0.79),
    "M4": ("phi1", 0.85, 20.0, 2.73, 0.81),
    "M5": ("phi2", 0.75, 10.0, 1.68, 0.81),
    "M6": ("phi2", 0.90, 100.0, -10.0, 1.0),
    "M7": ("phi4", 0.90, 100.0, -20.0, 0.8),
    "M8": ("phi5", 0.90, 100.0, -15.0, 0.87),
    "M9": ("phi6", 0.95, 50.0, 0.98, 0.97),
    "M10": ("phi6", 0.95, 50.0, 1.88, 0.97),
    "M11": ("phi7", 0.70, 50.0, 1.59, 0.72),
}


@dataclass(eq=False)
class ZooEntry:
    id: str
    spec: str
    model: LabeledPomdp | MaModel
    one_minus_delta: float
    B: float
    reported: dict
    notes: str = ""
    goal_on_accept: bool = False
    split: tuple | None = None  # multi-agent: (shared formula, local formulas)

    @property
    def multiagent(self) -> bool:
        return isinstance(self.model, MaModel)

    @property
    def delta(self) -> float:
        return round(1.0 - self.one_minus_delta, 12)

    @property
    def base(self) -> str:
        return self.id.removesuffix("-small")

    def bundle(self) -> SpecBundle:
        shared, local = self.split
        return SpecBundle.compile(self.model, shared, list(local))


@dataclass
class Zoo:
    models: dict
    specs: dict = field(default_factory=lambda: dict(SPECS))

    def __getitem__(self, key: str) -> ZooEntry:
        if key not in self.models:
            raise KeyError(f"unknown model {key!r}")
        return self.models[key]

    def ids(self, suite: str = "small") -> list:
        keep = [k for k in self.models if k.endswith("-small") == (suite == "small")]
        return sorted(keep, key=lambda k: int(k[1:].removesuffix("-small")))


# -- serialization ---------------------------------------------------------------


def entry_to_dict(e: ZooEntry) -> dict:
    out = {
        "id": e.id,
        "kind": "multiagent" if e.multiagent else "single",
        "spec": e.spec,
        "one_minus_delta": e.one_minus_delta,
        "B": e.B,
        "reported": e.reported,
        "goal_on_accept": e.goal_on_accept,
        "notes": e.notes,
    }
    if e.multiagent:
        shared, local = e.split
        out["model"] = ma_to_dict(e.model, SpecBundle(None, (), (shared,) + tuple(local)))
    else:
        out["model"] = model_to_dict(e.model)
    return out


def entry_from_dict(data: dict) -> ZooEntry:
    try:
        if data["spec"] not in SPECS:
            raise SchemaError(f"{data['id']}: unknown spec {data['spec']!r}")
        split = None
        if data["kind"] == "multiagent":
            model, _ = ma_from_dict(data["model"])
            specs = data["model"].get("specs")
            if specs is None:
                raise SchemaError(f"{data['id']}: multi-agent entries need shared and local specs")
            split = (specs["global"], tuple(specs["local"]))
        elif data["kind"] == "single":
            model = model_from_dict(data["model"])
        else:
            raise SchemaError(f"{data['id']}: unknown kind {data['kind']!r}")
        return ZooEntry(data["id"], data["spec"], model, float(data["one_minus_delta"]), float(data["B"]),
                        dict(data.get("reported", {})), data.get("notes", ""),
                        bool(data.get("goal_on_accept", False)), split)
    except KeyError as e:
        raise SchemaError(f"zoo entry is missing {e.args[0]!r}") from None


def data_dir() -> Path:
    return Path(str(resources.files("ltlfpomdp.bench") / "data"))


def load_zoo(path=None) -> Zoo:
    """All bundled models (``M1`` .. ``M11`` and their ``-small`` variants)."""
    folder = Path(path) if path is not None else data_dir()
    files = sorted(folder.glob("*.json"))
    if not files:
        raise SchemaError(f"no zoo files in {folder}")
    models = {}
    for f in files:
        with open(f) as fh:
            e = entry_from_dict(json.load(fh))
        models[e.id] = e
    return Zoo(models)


def save_entry(e: ZooEntry, folder) -> Path:
    path = Path(folder) / f"{e.id}.json"
    with open(path, "w") as fh:
        json.dump(entry_to_dict(e), fh, separators=(",", ":"))
        fh.write("\n")
    return path


# -- builders ----------------------------------------------------------------------


def _entry(id_, model, notes, goal_on_accept=False):
    spec, level, B, r, rf = TABLE[id_.removesuffix("-small")]
    return ZooEntry(id_, spec, model, level, B, {"objective": r, "satisfaction": rf}, notes, goal_on_accept,
                    SPLIT.get(spec))


def build_all() -> dict:
    out = {}
    for e in _single() + _multi():
        out[e.id] = e
    return out


def _single() -> list:
    loc = "noisy position (uniform over cell and neighbours), intended move 0.95, geometric 0.99"
    e = []
    m1 = dict(a=[(7, 7)], b=[(2, 6), (4, 4)])
    e.append(_entry("M1", grid.location_model(8, 8, ("a", "b"), m1, {(1, 6): 3.0, (4, 3): 3.0, (7, 7): 1.0}),
                    f"{loc}; a and b cells chosen"))
    m1s = dict(a=[(3, 3)], b=[(1, 2), (2, 1)])
    e.append(_entry("M1-small", grid.location_model(4, 4, ("a", "b"), m1s, {(0, 2): 3.0, (2, 0): 3.0, (3, 3): 1.0}),
                    f"{loc}; 4x4 reduction of M1 with each reward cell next to an obstacle"))
    m2 = dict(a=[(7, 7)], b=[(5, 2), (1, 6)])
    e.append(_entry("M2", grid.location_model(8, 8, ("a", "b"), m2, {(3, 3): 1.0}), loc))
    m2s = dict(a=[(3, 3)], b=[(0, 3), (3, 0)])
    e.append(_entry("M2-small", grid.location_model(4, 4, ("a", "b"), m2s, {(1, 1): 1.0}),
                    f"{loc}; 4x4 reduction of M2"))
    m3 = dict(a=[(3, 0)], b=[(3, 3)], c=[(0, 3)], d=[(2, 3)])
    for id_ in ("M3", "M3-small"):
        e.append(_entry(id_, grid.location_model(4, 4, ("a", "b", "c", "d"), m3, {(3, 0): 1.0, (3, 3): 2.0}),
                        f"{loc}; a, b, c, d cells chosen, rewards on a and b"))
    pred = "deterministic moves, b at (3,0) or (0,3), C/F sensing next to b (0.9 vs 0.1), geometric 0.99"
    for id_ in ("M4", "M4-small"):
        e.append(_entry(id_, grid.predicate_model(("a", "b"), dict(a=[(3, 3)]), {(3, 0): 2.0, (0, 3): 4.0}),
                        f"{pred}; a at (3,3) chosen"))
    for id_ in ("M5", "M5-small"):
        e.append(_entry(id_, grid.predicate_model(("a", "b"), dict(a=[(3, 3)]), {(0, 0): 2.0}),
                        f"{pred}; a at (3,3) chosen"))
    goal = "exact position, intended move 0.8, reward -1 before the goal"
    for id_ in ("M6", "M6-small"):
        e.append(_entry(id_, grid.goal_model(4, 4, ("a", "b"), dict(a=[(2, 2)], b=[(0, 3)]), None),
                        f"{goal}; the goal is the accepting automaton state; a, b chosen", True))
    m7 = dict(a=[(1, 1)], b=[(2, 1)], c=[(3, 1)], d=[(4, 1)], s=[(0, 4)])
    e.append(_entry("M7", grid.goal_model(5, 5, ("a", "b", "c", "d", "s"), m7, (4, 0)),
                    f"{goal}; goal (4,0); danger cells and s chosen"))
    m7s = dict(a=[(1, 1)], b=[(2, 1)], c=[(3, 1)], d=[(0, 2)], s=[(0, 3)])
    e.append(_entry("M7-small", grid.goal_model(4, 4, ("a", "b", "c", "d", "s"), m7s, (3, 0)),
                    f"{goal}; 4x4 reduction of M7 with goal (3,0)"))
    rev = "deterministic moves, c uniform at the start and observed at (1,1) only, reward -1 before the goal (3,3)"
    for id_ in ("M8", "M8-small"):
        e.append(_entry(id_, grid.revealed_model(("a", "b", "c"), dict(a=[(0, 3)], b=[(3, 0)]), (3, 3), (1, 1)),
                        f"{rev}; a, b and the reveal cell chosen; the automaton has 7 states"))
    return e


def _multi() -> list:
    e = []
    # 5x5 cross: lane row 2 and lane column 2; agents move N/S/E/W on the whole grid
    full = [(r, c) for r in range(5) for c in range(5)]
    cross = sorted({(2, c) for c in range(5)} | {(r, 2) for r in range(5)})
    nsew = ("N", "S", "E", "W")
    note = "deterministic moves, goal switching 0.2, reward 1 per agent on its goal, geometric 0.99"
    e.append(_entry("M9", grid.lane_team([full, full], [nsew, nsew], [(0, 2), (2, 0)],
                                         [[(4, 2)], [(2, 4), (0, 2), (2, 0)]], cross),
                    f"{note}; lanes row 2 and column 2, a=(4,2), b,c,d=(2,4),(0,2),(2,0)"))
    e.append(_entry("M10", grid.lane_team([full, full], [nsew, nsew], [(0, 2), (2, 0)],
                                          [[(0, 2), (4, 2)], [(2, 0), (2, 4)]], cross),
                    f"{note}; goals at the four lane ends"))
    # 5x15 lanes: row 2 and columns 2, 7, 12; agents stay on lane cells; column 7 is one-way southwards
    lanes = sorted({(2, c) for c in range(15)} | {(r, c) for r in range(5) for c in (2, 7, 12)})
    south = {(r, 7): ("N",) for r in range(5)}
    e.append(_entry("M11", grid.lane_team([lanes, lanes], [nsew, nsew], [(0, 2), (2, 0)],
                                          [[(4, 12)], [(0, 7), (4, 2)]], lanes, order=True, goal_atoms=("b", "c"),
                                          forbid=south),
                    "deterministic moves restricted to the lane cells (row 2, columns 2, 7, 12), column 7 "
                    "one-way southwards; a=(4,12), b=(0,7), c=(4,2); the order bit o is private to agent 2"))
    # desk scale: each agent confined to its own 4-cell lane of a 4x4 grid, moving back or forth;
    # agent 1 may cross row 2 only while agent 2 is at (2,3), agent 2 may cross column 1 only
    # while agent 1 is at (0,1)
    vert = [(r, 1) for r in range(4)]
    horz = [(2, c) for c in range(4)]
    small_moves = [("N", "S"), ("W", "E")]
    on = vert + horz
    starts = [(0, 1), (2, 3)]
    small = "4x4 grid, agent 1 on column 1, agent 2 on row 2, two moves per agent, " + note
    e.append(_entry("M9-small", grid.lane_team([vert, horz], small_moves, starts,
                                               [[(3, 1)], [(2, 3), (2, 0)]], on), small))
    e.append(_entry("M10-small", grid.lane_team([vert, horz], small_moves, starts,
                                                [[(3, 1), (0, 1)], [(2, 3), (2, 0)]], on), small))
    e.append(_entry("M11-small", grid.lane_team([vert, horz], small_moves, starts,
                                                [[(3, 1)], [(2, 0), (2, 3)]], on, order=True, goal_atoms=("b", "c")),
                    small.replace(", goal switching 0.2", "") + "; agent 2 visits b=(2,0) and c=(2,3) in its private order"))
    return e


def main(argv=None):
    ap = argparse.ArgumentParser(description="regenerate the bundled zoo files")
    ap.add_argument("--out", default=str(data_dir()))
    args = ap.parse_args(argv)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for e in build_all().values():
        print(save_entry(e, args.out))


if __name__ == "__main__":
    main()
