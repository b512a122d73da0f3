"""Scene types, dataset assembly, and the .scenes line format.

A Scene is expressed in the frame anchored at the ego pose at t=0 (origin,
heading +x). One scene per line, JSON key/value records, strict schema on
decode; see docs/formats.md.
"""

import json
from dataclasses import dataclass, field

import numpy as np

COMMANDS = ("lane_keep", "turn_left", "turn_right")
SCENARIO_KINDS = (
    "lane_keep",
    "turn_left",
    "turn_right",
    "lane_change",
    "stop_resume",
    "overtake",
    "three_point_turn",
)
ZERO_SHOT_KINDS = ("three_point_turn",)
POLYLINE_KINDS = ("lane_center", "boundary")
AGENT_CLASSES = ("vehicle", "pedestrian")

T_FUTURE = 6
DT = 0.5
AGENT_HISTORY = 4


class SceneFormatError(Exception):
    """Raised on malformed .scenes records; message carries line and field path."""


@dataclass
class MapPolyline:
    kind: str
    points: np.ndarray  # (N, 2), N >= 2

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)


@dataclass
class AgentTrack:
    cls: str
    extent: tuple  # (length, width) meters
    history_len: int
    future_len: int
    states: np.ndarray  # (history_len + 1 + future_len, 4): x, y, heading, speed

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)

    @property
    def current(self):
        return self.states[self.history_len]

    @property
    def history(self):
        return self.states[: self.history_len]

    @property
    def future(self):
        return self.states[self.history_len + 1 :]

    def box_at_step(self, step):
        """[cx, cy, heading, length, width] at future step (1-based from t=0)."""
        s = self.states[self.history_len + step]
        return np.array([s[0], s[1], s[2], self.extent[0], self.extent[1]])


@dataclass
class Scene:
    id: str
    dt: float
    command: str
    polylines: list
    agents: list
    ego_gt: np.ndarray  # (T_FUTURE, 2)
    ego_history_world: np.ndarray  # (AGENT_HISTORY, 3) poses, world-side only

    def __post_init__(self):
        self.ego_gt = np.asarray(self.ego_gt, dtype=np.float64)
        self.ego_history_world = np.asarray(self.ego_history_world, dtype=np.float64)

    def lane_centers(self):
        return [p.points for p in self.polylines if p.kind == "lane_center"]

    def boundaries(self):
        return [p.points for p in self.polylines if p.kind == "boundary"]


def scenes_identical(a, b):
    """Field-for-field equality (exact float comparison)."""
    if (a.id, a.dt, a.command) != (b.id, b.dt, b.command):
        return False
    if len(a.polylines) != len(b.polylines) or len(a.agents) != len(b.agents):
        return False
    for pa, pb in zip(a.polylines, b.polylines):
        if pa.kind != pb.kind or not np.array_equal(pa.points, pb.points):
            return False
    for ta, tb in zip(a.agents, b.agents):
        if ta.cls != tb.cls or ta.extent != tb.extent:
            return False
        if (ta.history_len, ta.future_len) != (tb.history_len, tb.future_len):
            return False
        if not np.array_equal(ta.states, tb.states):
            return False
    return np.array_equal(a.ego_gt, b.ego_gt) and np.array_equal(
        a.ego_history_world, b.ego_history_world
    )


# ---------------------------------------------------------------------------
# line format

_SCENE_KEYS = {"id", "dt", "command", "polylines", "agents", "ego_gt", "ego_history_world"}
_POLYLINE_KEYS = {"kind", "points"}
_AGENT_KEYS = {"cls", "extent", "history_len", "future_len", "states"}


def _nested_floats(arr):
    return [[float(v) for v in row] for row in np.asarray(arr)]


def encode_scene(scene):
    """One scene as a single JSON line (no trailing newline)."""
    record = {
        "id": scene.id,
        "dt": float(scene.dt),
        "command": scene.command,
        "polylines": [
            {"kind": p.kind, "points": _nested_floats(p.points)} for p in scene.polylines
        ],
        "agents": [
            {
                "cls": t.cls,
                "extent": [float(t.extent[0]), float(t.extent[1])],
                "history_len": int(t.history_len),
                "future_len": int(t.future_len),
                "states": _nested_floats(t.states),
            }
            for t in scene.agents
        ],
        "ego_gt": _nested_floats(scene.ego_gt),
        "ego_history_world": _nested_floats(scene.ego_history_world),
    }
    return json.dumps(record, separators=(",", ":"))


def _check_keys(obj, expected, line, path):
    extra = set(obj) - expected
    if extra:
        raise SceneFormatError(f"line {line}: unknown field {path}.{sorted(extra)[0]}")
    missing = expected - set(obj)
    if missing:
        raise SceneFormatError(f"line {line}: missing field {path}.{sorted(missing)[0]}")


def decode_scene(text, line=1):
    """Parse one scene line; strict about unknown/missing fields."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise SceneFormatError(f"line {line}: invalid record ({err.msg})") from err
    if not isinstance(obj, dict):
        raise SceneFormatError(f"line {line}: record is not an object")
    _check_keys(obj, _SCENE_KEYS, line, "scene")
    if obj["command"] not in COMMANDS:
        raise SceneFormatError(f"line {line}: scene.command has unknown value {obj['command']!r}")
    polylines = []
    for i, p in enumerate(obj["polylines"]):
        _check_keys(p, _POLYLINE_KEYS, line, f"polylines[{i}]")
        if p["kind"] not in POLYLINE_KINDS:
            raise SceneFormatError(f"line {line}: polylines[{i}].kind has unknown value {p['kind']!r}")
        pts = np.asarray(p["points"], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise SceneFormatError(f"line {line}: polylines[{i}].points must be (N>=2, 2)")
        polylines.append(MapPolyline(p["kind"], pts))
    agents = []
    for i, a in enumerate(obj["agents"]):
        _check_keys(a, _AGENT_KEYS, line, f"agents[{i}]")
        if a["cls"] not in AGENT_CLASSES:
            raise SceneFormatError(f"line {line}: agents[{i}].cls has unknown value {a['cls']!r}")
        states = np.asarray(a["states"], dtype=np.float64)
        expected_rows = a["history_len"] + 1 + a["future_len"]
        if states.ndim != 2 or states.shape != (expected_rows, 4):
            raise SceneFormatError(f"line {line}: agents[{i}].states must be ({expected_rows}, 4)")
        if a["future_len"] != T_FUTURE:
            raise SceneFormatError(f"line {line}: agents[{i}].future_len must be {T_FUTURE}")
        agents.append(
            AgentTrack(a["cls"], (float(a["extent"][0]), float(a["extent"][1])),
                       int(a["history_len"]), int(a["future_len"]), states)
        )
    ego_gt = np.asarray(obj["ego_gt"], dtype=np.float64)
    if ego_gt.shape != (T_FUTURE, 2):
        raise SceneFormatError(f"line {line}: scene.ego_gt must be ({T_FUTURE}, 2)")
    history = np.asarray(obj["ego_history_world"], dtype=np.float64)
    if history.ndim != 2 or history.shape[1] != 3:
        raise SceneFormatError(f"line {line}: scene.ego_history_world must be (N, 3)")
    return Scene(obj["id"], float(obj["dt"]), obj["command"], polylines, agents, ego_gt, history)


def save_scenes(path, scenes):
    with open(path, "w") as f:
        for scene in scenes:
            f.write(encode_scene(scene))
            f.write("\n")


def load_scenes(path):
    scenes = []
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            scenes.append(decode_scene(line, line_no))
    return scenes


# ---------------------------------------------------------------------------
# dataset assembly

def _kind_sequence(kinds, weights, n):
    """Deterministic weighted interleave of n kind labels (error diffusion)."""
    total = float(sum(weights))
    acc = [0.0] * len(kinds)
    out = []
    for _ in range(n):
        for i, w in enumerate(weights):
            acc[i] += w
        pick = int(np.argmax(acc))
        acc[pick] -= total
        out.append(kinds[pick])
    return out


def build_dataset(seeds, mix, split=(0.8, 0.2)):
    """Generate scenes for `seeds` with the given (kind, weight) mix and split.

    Zero-shot kinds are forced into the validation split. Returns
    (train, val) lists of Scenes with disjoint ids.
    """
    from .worlds import generate_scene

    seeds = list(seeds)
    if not seeds:
        raise ValueError("empty dataset")
    kinds = [k for k, _ in mix]
    weights = [w for _, w in mix]
    if any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ValueError("mix weights must be >= 0 with positive sum")
    for k in kinds:
        if k not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {k!r}")
    if abs(sum(split) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    labels = _kind_sequence(kinds, weights, len(seeds))
    n_train = round(split[0] * len(seeds))
    items = list(zip(seeds, labels))
    # swap zero-shot items out of the train slice, preserving counts
    swappable = [i for i in range(n_train, len(items)) if items[i][1] not in ZERO_SHOT_KINDS]
    for i in range(n_train):
        if items[i][1] in ZERO_SHOT_KINDS:
            if not swappable:
                raise ValueError("zero-shot kinds cannot fit in the validation split")
            j = swappable.pop()
            items[i], items[j] = items[j], items[i]
    scenes = [generate_scene(seed, kind) for seed, kind in items]
    return scenes[:n_train], scenes[n_train:]
