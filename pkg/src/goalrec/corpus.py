"""Command-log corpus handling.

Parses raw click logs into per-user sessions, cuts sessions into fixed
windows with a next-data-command target, splits session sets for training,
and generates synthetic goal-structured corpora for experiments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

UNKNOWN_TOKEN = "<unk>"
DEFAULT_SIGNOUT = "sign-out"
DEFAULT_INACTIVITY_GAP = 21600.0  # six hours, in seconds
DC_SEPARATOR = "::"


class ParseError(ValueError):
    """Malformed log or corpus input."""


class CommandKind(Enum):
    SOFTWARE = "SC"
    DATA = "DC"


@dataclass(frozen=True)
class Command:
    """One logged user action.

    Software commands operate the tool itself; data commands select what data
    to analyze and are identified by their (class, variable) pair.
    """

    kind: CommandKind
    id: int
    name: str | None = None      # software command token
    cls: str | None = None       # data command class
    variable: str | None = None  # data command variable

    @property
    def is_data(self) -> bool:
        return self.kind is CommandKind.DATA

    @property
    def token(self) -> str:
        if self.kind is CommandKind.DATA:
            return f"{self.cls}{DC_SEPARATOR}{self.variable}"
        return self.name or ""


@dataclass
class LogEvent:
    timestamp: float
    user: str
    command: Command


@dataclass
class Session:
    """Ordered command sequence for one user; goal is planted or assigned later."""

    user: str
    commands: list[Command]
    goal: int | None = None

    def __len__(self) -> int:
        return len(self.commands)


@dataclass(frozen=True)
class SequenceExample:
    """A fixed window of commands plus the first data command after it."""

    window: tuple[Command, ...]
    target: Command
    session_ref: str
    goal: int | None = None


class Vocabulary:
    """Dense command vocabulary with disjoint software/data id sets.

    Id 0 is always the reserved unknown software command. Once frozen, unseen
    tokens intern to it instead of growing the vocabulary; this is how val and
    test data is encoded against a training-only vocabulary.
    """

    def __init__(self) -> None:
        self._commands: list[Command] = []
        self._by_token: dict[str, Command] = {}
        self._software: list[int] = []
        self._data: list[int] = []
        self._dc_pos: dict[int, int] = {}
        self.frozen = False
        self._add(CommandKind.SOFTWARE, UNKNOWN_TOKEN, None, None)

    def _add(self, kind: CommandKind, name, cls, variable) -> Command:
        cmd = Command(kind=kind, id=len(self._commands), name=name,
                      cls=cls, variable=variable)
        self._commands.append(cmd)
        self._by_token[cmd.token] = cmd
        if kind is CommandKind.DATA:
            self._dc_pos[cmd.id] = len(self._data)
            self._data.append(cmd.id)
        else:
            self._software.append(cmd.id)
        return cmd

    def __len__(self) -> int:
        return len(self._commands)

    def __iter__(self):
        return iter(self._commands)

    @property
    def unknown(self) -> Command:
        return self._commands[0]

    def command(self, id: int) -> Command:
        return self._commands[id]

    def freeze(self) -> None:
        self.frozen = True

    def intern_software(self, name: str) -> Command:
        existing = self._by_token.get(name)
        if existing is not None:
            return existing
        if self.frozen:
            return self.unknown
        return self._add(CommandKind.SOFTWARE, name, None, None)

    def intern_data(self, cls: str, variable: str) -> Command:
        if DC_SEPARATOR in cls:
            raise ParseError(f"data command class must not contain {DC_SEPARATOR!r}: {cls!r}")
        token = f"{cls}{DC_SEPARATOR}{variable}"
        existing = self._by_token.get(token)
        if existing is not None:
            return existing
        if self.frozen:
            return self.unknown
        return self._add(CommandKind.DATA, None, cls, variable)

    def intern_token(self, token: str) -> Command:
        """Intern from the corpus-file token form: class::variable marks a data command."""
        if DC_SEPARATOR in token:
            cls, variable = token.split(DC_SEPARATOR, 1)
            return self.intern_data(cls, variable)
        return self.intern_software(token)

    def get(self, token: str) -> Command | None:
        return self._by_token.get(token)

    @property
    def dc_ids(self) -> np.ndarray:
        """Vocabulary ids of all data commands, ascending."""
        return np.asarray(self._data, dtype=np.int64)

    @property
    def sc_ids(self) -> np.ndarray:
        return np.asarray(self._software, dtype=np.int64)

    def dc_pos(self, id: int) -> int:
        """Position of a data command id within the dense DC index."""
        return self._dc_pos[id]

    @property
    def dc_count(self) -> int:
        return len(self._data)


def parse_log(stream, vocabulary: Vocabulary | None = None) -> tuple[list[LogEvent], Vocabulary]:
    """Parse line-delimited JSON log records into events.

    Each line is ``{"ts": seconds, "user": id, "kind": "SC"|"DC", ...}`` with
    ``cmd`` for software records and ``class``/``variable`` for data records.
    Returns the events in input order together with the (possibly fresh)
    vocabulary, extended in place with every command seen.
    """
    vocab = vocabulary if vocabulary is not None else Vocabulary()
    events: list[LogEvent] = []
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON record ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise ParseError(f"line {lineno}: record is not an object")
        for field_name in ("ts", "user", "kind"):
            if field_name not in record:
                raise ParseError(f"line {lineno}: missing {field_name!r} field")
        ts = record["ts"]
        if not isinstance(ts, (int, float)) or isinstance(ts, bool) or ts < 0:
            raise ParseError(f"line {lineno}: 'ts' must be a non-negative number")
        kind = record["kind"]
        if kind == "SC":
            if "cmd" not in record:
                raise ParseError(f"line {lineno}: SC record missing 'cmd' field")
            command = vocab.intern_software(str(record["cmd"]))
        elif kind == "DC":
            for field_name in ("class", "variable"):
                if field_name not in record:
                    raise ParseError(f"line {lineno}: DC record missing {field_name!r} field")
            command = vocab.intern_data(str(record["class"]), str(record["variable"]))
        else:
            raise ParseError(f"line {lineno}: unknown kind tag {kind!r}")
        events.append(LogEvent(timestamp=float(ts), user=str(record["user"]), command=command))
    return events, vocab


def sessionize(events: Sequence[LogEvent],
               inactivity_gap: float = DEFAULT_INACTIVITY_GAP,
               signout: str = DEFAULT_SIGNOUT) -> list[Session]:
    """Split per-user event streams into sessions.

    A session ends at every sign-out command (the sign-out itself is dropped)
    and at every inter-event gap longer than ``inactivity_gap`` seconds.
    Empty fragments are discarded. Events must be timestamp-sorted per user.
    """
    by_user: dict[str, list[LogEvent]] = {}
    for event in events:
        by_user.setdefault(event.user, []).append(event)

    sessions: list[Session] = []
    for user, stream in by_user.items():
        current: list[Command] = []
        prev_ts: float | None = None
        for event in stream:
            if prev_ts is not None and event.timestamp < prev_ts:
                raise ValueError(f"events for user {user!r} are not timestamp-sorted")
            if prev_ts is not None and event.timestamp - prev_ts > inactivity_gap:
                if current:
                    sessions.append(Session(user=user, commands=current))
                current = []
            prev_ts = event.timestamp
            cmd = event.command
            if cmd.kind is CommandKind.SOFTWARE and cmd.name == signout:
                if current:
                    sessions.append(Session(user=user, commands=current))
                current = []
                continue
            current.append(cmd)
        if current:
            sessions.append(Session(user=user, commands=current))
    return sessions


def windows(session: Session, w: int, session_ref: str = "") -> list[SequenceExample]:
    """Slide a window of ``w`` commands over the session.

    For every start position where the window fits and at least one data
    command occurs after it, emit (window, first such data command). Sessions
    shorter than ``w`` yield nothing.
    """
    if w < 1:
        raise ValueError("window length must be >= 1")
    cmds = session.commands
    n = len(cmds)
    if n < w:
        return []
    # next_dc[i] = index of the first data command at position >= i, or -1
    next_dc = [-1] * (n + 1)
    for i in range(n - 1, -1, -1):
        next_dc[i] = i if cmds[i].is_data else next_dc[i + 1]
    out: list[SequenceExample] = []
    for start in range(0, n - w + 1):
        t = next_dc[start + w] if start + w <= n - 1 else -1
        if t < 0:
            continue
        out.append(SequenceExample(window=tuple(cmds[start:start + w]),
                                   target=cmds[t],
                                   session_ref=session_ref,
                                   goal=session.goal))
    return out


def examples_from_sessions(sessions: Sequence[Session], w: int) -> list[SequenceExample]:
    """Windows over a session list, with refs s0, s1, ... in list order."""
    out: list[SequenceExample] = []
    for i, session in enumerate(sessions):
        out.extend(windows(session, w, session_ref=f"s{i}"))
    return out


def split(sessions: Sequence[Session],
          ratios: tuple[float, float, float] = (0.75, 0.125, 0.125),
          seed: int = 0) -> tuple[list[Session], list[Session], list[Session]]:
    """Partition whole sessions into (train, validation, test).

    Sizes follow the largest-remainder rounding of the ratio targets, so
    every partition deviates from its target by less than one session; the
    leftover preference order is train, validation, test. Deterministic
    under ``seed``.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {sum(ratios)}")
    n = len(sessions)
    if n < 3:
        raise ValueError(f"need at least 3 sessions to split, got {n}")
    targets = [n * r for r in ratios]
    sizes = [math.floor(t) for t in targets]
    fractions = [t - s for t, s in zip(targets, sizes)]
    leftover = n - sum(sizes)
    # hand out leftovers to the largest fractional parts, train first on ties
    order = sorted(range(3), key=lambda i: (-fractions[i], i))
    for i in range(leftover):
        sizes[order[i]] += 1
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    shuffled = [sessions[i] for i in perm]
    train = shuffled[:sizes[0]]
    val = shuffled[sizes[0]:sizes[0] + sizes[1]]
    test = shuffled[sizes[0] + sizes[1]:]
    return train, val, test


@dataclass
class SyntheticConfig:
    """Knobs for the synthetic goal-structured corpus generator."""

    k_true: int
    dc_count: int
    sc_count: int
    zipf_exponent: float = 1.0
    sessions: int = 200
    session_len_min: int = 8
    session_len_max: int = 30
    noise: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        if self.k_true < 1:
            raise ValueError("k_true must be >= 1")
        if self.dc_count < self.k_true:
            raise ValueError("dc_count must be >= k_true")
        if self.sc_count < 1:
            raise ValueError("sc_count must be >= 1")
        if self.zipf_exponent <= 0:
            raise ValueError("zipf_exponent must be > 0")
        if self.sessions < 1:
            raise ValueError("sessions must be >= 1")
        if not (1 <= self.session_len_min <= self.session_len_max):
            raise ValueError("need 1 <= session_len_min <= session_len_max")
        if not (0.0 <= self.noise <= 1.0):
            raise ValueError("noise must be in [0, 1]")


def _zipf_weights(n: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return ranks ** (-exponent)


def generate_synthetic(config: SyntheticConfig) -> tuple[list[Session], Vocabulary]:
    """Generate sessions with planted goals.

    Data commands get global Zipf weights by rank and are dealt round-robin
    to the goals, so goal supports are disjoint while the global data-command
    marginal keeps the configured Zipf shape. Software commands share one
    Zipf distribution across goals. Each position flips a fair coin between
    a software and a data draw; a data draw comes from the global marginal
    with probability ``noise`` and from the session goal otherwise.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    vocab = Vocabulary()
    dcs = [vocab.intern_data(f"c{i}", f"v{i}") for i in range(config.dc_count)]
    scs = [vocab.intern_software(f"sc{i}") for i in range(config.sc_count)]

    dc_weights = _zipf_weights(config.dc_count, config.zipf_exponent)
    global_dc = dc_weights / dc_weights.sum()
    goal_of_dc = np.arange(config.dc_count) % config.k_true
    goal_dists = []
    for g in range(config.k_true):
        w = np.where(goal_of_dc == g, dc_weights, 0.0)
        goal_dists.append(w / w.sum())
    sc_weights = _zipf_weights(config.sc_count, config.zipf_exponent)
    sc_dist = sc_weights / sc_weights.sum()

    global_cum = np.cumsum(global_dc)
    goal_cums = [np.cumsum(d) for d in goal_dists]
    sc_cum = np.cumsum(sc_dist)

    sessions: list[Session] = []
    for s in range(config.sessions):
        goal = int(rng.integers(config.k_true))
        length = int(rng.integers(config.session_len_min, config.session_len_max + 1))
        commands: list[Command] = []
        for _ in range(length):
            if rng.random() < 0.5:
                commands.append(scs[int(np.searchsorted(sc_cum, rng.random()))])
            elif rng.random() < config.noise:
                commands.append(dcs[int(np.searchsorted(global_cum, rng.random()))])
            else:
                commands.append(dcs[int(np.searchsorted(goal_cums[goal], rng.random()))])
        sessions.append(Session(user=f"synth{s}", commands=commands, goal=goal))
    return sessions, vocab


def save_corpus(sessions: Iterable[Session], path) -> None:
    """Write sessions as lines of space-separated tokens prefixed by goal=<int|none>."""
    with open(path, "w", encoding="utf-8") as fh:
        for session in sessions:
            goal = "none" if session.goal is None else str(session.goal)
            tokens = " ".join(cmd.token for cmd in session.commands)
            fh.write(f"goal={goal} {tokens}\n")


def load_corpus(path, vocabulary: Vocabulary | None = None) -> tuple[list[Session], Vocabulary]:
    """Read a corpus file written by :func:`save_corpus`.

    Session users are synthesized from line order. The vocabulary is extended
    (or consulted, if frozen) token by token in file order.
    """
    vocab = vocabulary if vocabulary is not None else Vocabulary()
    sessions: list[Session] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if not parts[0].startswith("goal="):
                raise ParseError(f"line {lineno}: expected goal=<int|none> prefix")
            goal_str = parts[0][len("goal="):]
            if goal_str == "none":
                goal = None
            else:
                try:
                    goal = int(goal_str)
                except ValueError:
                    raise ParseError(f"line {lineno}: bad goal value {goal_str!r}") from None
            commands = [vocab.intern_token(tok) for tok in parts[1:]]
            if not commands:
                raise ParseError(f"line {lineno}: empty session")
            sessions.append(Session(user=f"s{len(sessions)}", commands=commands, goal=goal))
    return sessions, vocab


def build_vocabulary(sessions: Iterable[Session]) -> Vocabulary:
    """Vocabulary over the given (training) sessions, in first-appearance order."""
    vocab = Vocabulary()
    for session in sessions:
        for cmd in session.commands:
            vocab.intern_token(cmd.token)
    return vocab


def encode_sessions(sessions: Iterable[Session], vocab: Vocabulary) -> list[Session]:
    """Re-encode sessions against a vocabulary; unseen tokens become unknown."""
    out = []
    for session in sessions:
        commands = [vocab.intern_token(cmd.token) for cmd in session.commands]
        out.append(Session(user=session.user, commands=commands, goal=session.goal))
    return out
