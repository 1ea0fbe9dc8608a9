"""Scene and tactic data model with JSON Lines I/O and dataset helpers.

Court coordinates are metres with the origin at the court centre and x along
the court length.  A scene holds every agent (players of each team and one
shared ball) over ``t_obs + t_pred`` frames plus one observed and one future
tactic label per team.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ArgumentError, SchemaError, VocabularyError
from .numeric import SeededRng

BALL_TEAM = -1
COURT_HALF_EXTENT = (14.3, 7.6)


@dataclass(frozen=True)
class DatasetConfig:
    n_agents: int = 11
    n_teams: int = 2
    team_tokens: int = 6  # players per team plus the ball
    t_obs: int = 10
    t_pred: int = 20
    fps: int = 5
    vocab_size: int = 16
    court_extent: tuple[float, float] = (2 * COURT_HALF_EXTENT[0], 2 * COURT_HALF_EXTENT[1])

    def __post_init__(self):
        object.__setattr__(self, "court_extent", tuple(float(c) for c in self.court_extent))
        if self.n_agents != self.n_teams * (self.team_tokens - 1) + 1:
            raise ArgumentError(
                f"n_agents={self.n_agents} inconsistent with {self.n_teams} teams of "
                f"{self.team_tokens - 1} players plus one ball"
            )
        if min(self.t_obs, self.t_pred, self.fps, self.vocab_size) < 1:
            raise ArgumentError("frame counts, fps and vocabulary size must be positive")

    @property
    def n_frames(self) -> int:
        return self.t_obs + self.t_pred

    @property
    def players_per_team(self) -> int:
        return self.team_tokens - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["court_extent"] = list(self.court_extent)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> DatasetConfig:
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


# --------------------------------------------------------------------------
# Vocabulary

DEFAULT_TACTICS = [
    ("pick_and_roll", "offense"),
    ("ball_movement", "offense"),
    ("fast_break", "offense"),
    ("single", "offense"),
    ("post_up", "offense"),
    ("offensive_rebound", "offense"),
    ("other_offense", "offense"),
    ("zone_2_3", "defense"),
    ("zone_3_2", "defense"),
    ("zone_1_3_1", "defense"),
    ("zone_1_2_2", "defense"),
    ("box_and_one", "defense"),
    ("man_to_man", "defense"),
    ("defensive_rebound", "defense"),
    ("defensive_transition", "defense"),
    ("scramble", "defense"),
]


@dataclass(frozen=True)
class TacticEntry:
    id: int
    name: str
    side: str


@dataclass(frozen=True)
class TacticVocabulary:
    entries: tuple[TacticEntry, ...]

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if ids != list(range(len(ids))):
            raise VocabularyError(f"vocabulary ids must be 0..V-1 in order, got {ids}")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise VocabularyError("vocabulary names must be unique")
        for e in self.entries:
            if e.side not in ("offense", "defense"):
                raise VocabularyError(f"tactic {e.name!r} has unknown side {e.side!r}")

    @classmethod
    def default(cls) -> TacticVocabulary:
        return cls(tuple(TacticEntry(i, n, s) for i, (n, s) in enumerate(DEFAULT_TACTICS)))

    @property
    def size(self) -> int:
        return len(self.entries)

    def __len__(self):
        return self.size

    def id_of(self, name: str) -> int:
        for e in self.entries:
            if e.name == name:
                return e.id
        raise VocabularyError(f"unknown tactic name {name!r}")

    def side_ids(self, side: str) -> list[int]:
        return [e.id for e in self.entries if e.side == side]

    def check(self, label: int) -> int:
        if not (0 <= int(label) < self.size):
            raise VocabularyError(f"tactic id {label} outside vocabulary of size {self.size}")
        return int(label)

    def to_json(self) -> str:
        return json.dumps({"entries": [asdict(e) for e in self.entries]}, indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> TacticVocabulary:
        raw = json.loads(Path(path).read_text())
        return cls(tuple(TacticEntry(int(e["id"]), str(e["name"]), str(e["side"])) for e in raw["entries"]))


# --------------------------------------------------------------------------
# Scenes


@dataclass(frozen=True)
class TeamTactics:
    team: int
    observed: int
    future: int


@dataclass
class Scene:
    scene_id: str
    positions: np.ndarray  # (N, T_obs + T_pred, 2) metres
    team_of: list[int]  # team index per agent, BALL_TEAM for the ball
    tactics: list[TeamTactics]
    fps: int = 5
    t_obs: int = 10
    agent_ids: list[int] | None = None
    out_of_bounds: bool = False

    @property
    def ball_index(self) -> int:
        return self.team_of.index(BALL_TEAM)

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    @property
    def t_pred(self) -> int:
        return self.positions.shape[1] - self.t_obs

    @property
    def observed(self) -> np.ndarray:
        return self.positions[:, : self.t_obs]

    @property
    def future(self) -> np.ndarray:
        return self.positions[:, self.t_obs :]

    def team_members(self, team: int) -> list[int]:
        return [i for i, t in enumerate(self.team_of) if t == team]

    def tactic(self, team: int) -> TeamTactics:
        for t in self.tactics:
            if t.team == team:
                return t
        raise SchemaError(f"scene {self.scene_id}: no tactic entry for team {team}")

    def with_positions(self, positions: np.ndarray) -> Scene:
        return replace(self, positions=positions)


def validate_scene(scene: Scene, config: DatasetConfig, vocab: TacticVocabulary | None = None, strict: bool = True) -> Scene:
    sid = scene.scene_id
    pos = scene.positions
    if pos.ndim != 3 or pos.shape[2] != 2:
        raise SchemaError(f"scene {sid}: positions must be (N, T, 2), got {pos.shape}")
    if pos.shape[0] != config.n_agents:
        raise SchemaError(f"scene {sid}: {pos.shape[0]} agents, config expects {config.n_agents}")
    if pos.shape[1] != config.n_frames or scene.t_obs != config.t_obs:
        raise SchemaError(
            f"scene {sid}: {pos.shape[1]} frames with t_obs={scene.t_obs}, config expects "
            f"{config.t_obs}+{config.t_pred}"
        )
    if scene.fps != config.fps:
        raise SchemaError(f"scene {sid}: fps {scene.fps} != config fps {config.fps}")
    if not np.all(np.isfinite(pos)):
        raise SchemaError(f"scene {sid}: non-finite positions")
    if scene.team_of.count(BALL_TEAM) != 1:
        raise SchemaError(f"scene {sid}: exactly one ball agent required, found {scene.team_of.count(BALL_TEAM)}")
    for team in range(config.n_teams):
        members = scene.team_members(team)
        if len(members) != config.players_per_team:
            raise SchemaError(f"scene {sid}: team {team} has {len(members)} players, expected {config.players_per_team}")
    extra = set(scene.team_of) - set(range(config.n_teams)) - {BALL_TEAM}
    if extra:
        raise SchemaError(f"scene {sid}: unknown team indices {sorted(extra)}")
    if sorted(t.team for t in scene.tactics) != list(range(config.n_teams)):
        raise SchemaError(f"scene {sid}: need one tactic entry per team")
    for t in scene.tactics:
        for label in (t.observed, t.future):
            if not (0 <= label < config.vocab_size) or (vocab is not None and label >= vocab.size):
                raise VocabularyError(f"scene {sid}: tactic id {label} outside vocabulary")
    hx, hy = config.court_extent[0] / 2, config.court_extent[1] / 2
    outside = bool(np.any(np.abs(pos[..., 0]) > hx + 1e-9) or np.any(np.abs(pos[..., 1]) > hy + 1e-9))
    if outside and strict:
        raise SchemaError(f"scene {sid}: positions outside court extent {config.court_extent}")
    scene.out_of_bounds = outside
    return scene


def scene_to_record(scene: Scene) -> dict:
    ids = scene.agent_ids if scene.agent_ids is not None else list(range(scene.n_agents))
    agents = []
    for i in range(scene.n_agents):
        team = scene.team_of[i]
        agents.append(
            {
                "id": int(ids[i]),
                "team": int(team),
                "role": "ball" if team == BALL_TEAM else "player",
                "xy": [[float(x), float(y)] for x, y in scene.positions[i]],
            }
        )
    return {
        "scene_id": scene.scene_id,
        "fps": int(scene.fps),
        "t_obs": int(scene.t_obs),
        "t_pred": int(scene.t_pred),
        "agents": agents,
        "tactics": [{"team": t.team, "observed": t.observed, "future": t.future} for t in sorted(scene.tactics, key=lambda t: t.team)],
    }


def dumps_scene(scene: Scene) -> str:
    # json emits floats with repr, which round-trips exactly
    return json.dumps(scene_to_record(scene), separators=(",", ":"))


def record_to_scene(rec: dict) -> Scene:
    try:
        agents = rec["agents"]
        t_obs = int(rec["t_obs"])
        t_pred = int(rec["t_pred"])
        team_of = []
        for a in agents:
            role = a.get("role", "ball" if a["team"] == BALL_TEAM else "player")
            team = int(a["team"])
            if (role == "ball") != (team == BALL_TEAM):
                raise SchemaError(f"scene {rec.get('scene_id')}: agent {a['id']} role {role!r} disagrees with team {team}")
            team_of.append(team)
        positions = np.array([a["xy"] for a in agents], dtype=np.float64)
        if positions.size == 0:
            positions = positions.reshape(0, t_obs + t_pred, 2)
        if positions.ndim != 3 or positions.shape[1] != t_obs + t_pred:
            raise SchemaError(f"scene {rec.get('scene_id')}: every agent needs t_obs+t_pred xy pairs")
        tactics = [TeamTactics(int(t["team"]), int(t["observed"]), int(t["future"])) for t in rec["tactics"]]
        return Scene(
            scene_id=str(rec["scene_id"]),
            positions=positions,
            team_of=team_of,
            tactics=tactics,
            fps=int(rec["fps"]),
            t_obs=t_obs,
            agent_ids=[int(a["id"]) for a in agents],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"scene {rec.get('scene_id', '?')}: malformed record ({exc})") from None


def load_scenes(path, config: DatasetConfig, vocab: TacticVocabulary | None = None, strict: bool = True) -> list[Scene]:
    scenes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise SchemaError(f"{path}:{lineno}: expected a JSON object")
            scenes.append(validate_scene(record_to_scene(rec), config, vocab, strict))
    return scenes


def save_scenes(scenes, path) -> None:
    with open(path, "w") as fh:
        for s in scenes:
            fh.write(dumps_scene(s) + "\n")


def load_two_file_layout(npy_path, annotation_path, config: DatasetConfig, team_of: list[int] | None = None, strict: bool = True) -> list[Scene]:
    """Convert an ordered trajectory array plus annotation JSON into scenes.

    The array has shape (n_scenes, N, T, 2).  The annotation file is a JSON
    list of entries ``{"scene ID": int, "tactics": [{"team", "observed",
    "future"}, ...]}`` where the scene ID indexes the array.  ``team_of``
    defaults to players of team 0, then team 1, ..., then the ball.
    """
    arr = np.load(npy_path)
    entries = json.loads(Path(annotation_path).read_text())
    if team_of is None:
        team_of = [t for t in range(config.n_teams) for _ in range(config.players_per_team)] + [BALL_TEAM]
    scenes = []
    for entry in entries:
        idx = int(entry["scene ID"])
        if not (0 <= idx < arr.shape[0]):
            raise SchemaError(f"annotation references scene ID {idx} outside array of {arr.shape[0]} scenes")
        scene = Scene(
            scene_id=str(idx),
            positions=np.asarray(arr[idx], dtype=np.float64),
            team_of=list(team_of),
            tactics=[TeamTactics(int(t["team"]), int(t["observed"]), int(t["future"])) for t in entry["tactics"]],
            fps=config.fps,
            t_obs=config.t_obs,
        )
        scenes.append(validate_scene(scene, config, strict=strict))
    return scenes


# --------------------------------------------------------------------------
# Normalisation and splitting


@dataclass(frozen=True)
class NormalizationParams:
    center: tuple[float, float] = (0.0, 0.0)
    scale: float = 5.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ArgumentError(f"normalisation scale must be positive, got {self.scale}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def apply(self, xy: np.ndarray) -> np.ndarray:
        return (xy - np.asarray(self.center)) / self.scale

    def invert(self, xy: np.ndarray) -> np.ndarray:
        return xy * self.scale + np.asarray(self.center)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "scale": self.scale}

    @classmethod
    def from_dict(cls, d) -> NormalizationParams:
        return cls(tuple(d["center"]), float(d["scale"]))


def normalize(scene: Scene, params: NormalizationParams) -> Scene:
    return scene.with_positions(params.apply(scene.positions))


def denormalize(scene: Scene, params: NormalizationParams) -> Scene:
    return scene.with_positions(params.invert(scene.positions))


def split_dataset(scenes: list[Scene], ratio: float = 0.7, seed: int = 0) -> tuple[list[Scene], list[Scene]]:
    """Shuffle by seed, then the first floor(ratio * n) scenes train."""
    if not (0.0 < ratio < 1.0):
        raise ArgumentError(f"split ratio must lie in (0, 1), got {ratio}")
    order = SeededRng(seed, ("split",)).permutation(len(scenes))
    # guard against 0.7 * 10 = 7.000000000000001 style representation error
    n_train = math.floor(ratio * len(scenes) + 1e-9)
    train = [scenes[i] for i in order[:n_train]]
    test = [scenes[i] for i in order[n_train:]]
    return train, test


def future_label_counts(scenes, vocab_size: int) -> np.ndarray:
    counts = np.zeros(vocab_size, dtype=np.int64)
    for s in scenes:
        for t in s.tactics:
            counts[t.future] += 1
    return counts
