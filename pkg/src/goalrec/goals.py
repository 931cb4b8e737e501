"""Goal discovery from command sessions.

Models per-session command co-occurrence pairs with a biterm topic model fit
by collapsed Gibbs sampling. Each topic becomes a goal: its command
distribution restricted to data commands and renormalized. Also assigns the
most likely goal to a session and scores goal clusters with UCI / UMass
coherence to choose the goal count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .corpus import Session, Vocabulary

BITERM_CAP = 2000  # per-session biterm budget; guards pathological sessions
UCI_EPSILON = 1e-12


@dataclass
class BtmConfig:
    """Priors and sampler schedule for a biterm topic model fit."""

    k: int
    alpha: float = 8.333
    beta: float = 0.005
    iterations: int = 200
    burn_in: int = 100
    seed: int = 0
    average: bool = False  # estimate from post-burn-in averaged counts

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be > 0")
        if not (self.iterations > self.burn_in >= 0):
            raise ValueError("need iterations > burn_in >= 0")


@dataclass
class GoalModel:
    """Fitted goal model.

    phi rows are per-goal distributions over the full vocabulary; goal_defs
    rows are those distributions restricted to data commands and renormalized.
    """

    v: int
    k: int
    alpha: float
    beta: float
    seed: int
    phi: np.ndarray        # (k, v)
    theta: np.ndarray      # (k,)
    dc_ids: np.ndarray     # (d,) vocabulary ids of data commands, ascending
    goal_defs: np.ndarray  # (k, d)
    labels: list[str] | None = None
    fit_counts: tuple | None = field(default=None, repr=False, compare=False)

    def goal_def_of(self, vocab_id: int, goal: int) -> float:
        """Goal-definition mass of a data command given by vocabulary id."""
        pos = np.searchsorted(self.dc_ids, vocab_id)
        if pos >= len(self.dc_ids) or self.dc_ids[pos] != vocab_id:
            raise KeyError(f"vocabulary id {vocab_id} is not a data command")
        return float(self.goal_defs[goal, pos])

    def top_data_commands(self, goal: int, n: int) -> list[int]:
        """Vocabulary ids of the goal's n highest-mass data commands."""
        order = np.argsort(-self.goal_defs[goal], kind="stable")
        return [int(self.dc_ids[i]) for i in order[:n]]


def extract_biterms(session: Session, cap: int = BITERM_CAP, seed: int = 0) -> list[tuple[int, int]]:
    """All unordered pairs of distinct command types in the session.

    Command types are deduplicated before pairing, so repeats contribute one
    type. Pairs are canonicalized (low id, high id). More than ``cap`` pairs
    triggers a seeded uniform subsample.
    """
    ids = sorted({cmd.id for cmd in session.commands})
    pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:]]
    if len(pairs) > cap:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(pairs), size=cap, replace=False))
        pairs = [pairs[i] for i in keep]
    return pairs


def _biterm_arrays(sessions: Iterable[Session], cap: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    w1: list[int] = []
    w2: list[int] = []
    for session in sessions:
        for a, b in extract_biterms(session, cap=cap, seed=seed):
            w1.append(a)
            w2.append(b)
    return np.asarray(w1, dtype=np.int64), np.asarray(w2, dtype=np.int64)


@njit(cache=True)
def _gibbs_sweep(w1, w2, z, n_k, n_wk, uniforms, alpha, beta):
    """One collapsed Gibbs sweep over all biterms, in place.

    For biterm b with current topic removed, topic k is drawn proportionally
    to (n_k + alpha) * (n_w1|k + beta) * (n_w2|k + beta)
    / ((2 n_k + V beta) * (2 n_k + V beta + 1)).
    """
    n_b = w1.shape[0]
    k_count, v = n_wk.shape
    cum = np.empty(k_count)
    for b in range(n_b):
        old = z[b]
        n_k[old] -= 1.0
        n_wk[old, w1[b]] -= 1.0
        n_wk[old, w2[b]] -= 1.0
        total = 0.0
        for k in range(k_count):
            denom = 2.0 * n_k[k] + v * beta
            p = ((n_k[k] + alpha)
                 * (n_wk[k, w1[b]] + beta)
                 * (n_wk[k, w2[b]] + beta)
                 / (denom * (denom + 1.0)))
            total += p
            cum[k] = total
        u = uniforms[b] * total
        new = k_count - 1
        for k in range(k_count):
            if u < cum[k]:
                new = k
                break
        z[b] = new
        n_k[new] += 1.0
        n_wk[new, w1[b]] += 1.0
        n_wk[new, w2[b]] += 1.0


def btm_fit(sessions: Sequence[Session], vocabulary: Vocabulary, config: BtmConfig) -> GoalModel:
    """Fit the biterm topic model and derive goal definitions.

    Deterministic under config.seed: topic init and per-sweep uniforms come
    from one seeded generator. Estimation uses the final sample's counts, or
    the post-burn-in count average when config.average is set.
    """
    config.validate()
    v = len(vocabulary)
    dc_ids = vocabulary.dc_ids
    if len(dc_ids) == 0:
        raise ValueError("vocabulary has no data commands; goals are undefined")
    w1, w2 = _biterm_arrays(sessions, cap=BITERM_CAP, seed=config.seed)
    n_b = len(w1)
    if n_b == 0:
        raise ValueError("no biterms: every session has fewer than 2 distinct commands")

    rng = np.random.default_rng(config.seed)
    z = rng.integers(0, config.k, size=n_b).astype(np.int64)
    n_k = np.zeros(config.k, dtype=np.float64)
    n_wk = np.zeros((config.k, v), dtype=np.float64)
    np.add.at(n_k, z, 1.0)
    np.add.at(n_wk, (z, w1), 1.0)
    np.add.at(n_wk, (z, w2), 1.0)

    acc_k = np.zeros_like(n_k)
    acc_wk = np.zeros_like(n_wk)
    samples = 0
    for sweep in range(config.iterations):
        uniforms = rng.random(n_b)
        _gibbs_sweep(w1, w2, z, n_k, n_wk, uniforms, config.alpha, config.beta)
        if config.average and sweep >= config.burn_in:
            acc_k += n_k
            acc_wk += n_wk
            samples += 1

    est_k, est_wk = (acc_k / samples, acc_wk / samples) if samples else (n_k, n_wk)
    phi = (est_wk + config.beta) / (2.0 * est_k[:, None] + v * config.beta)
    theta = (est_k + config.alpha) / (n_b + config.k * config.alpha)
    goal_defs = np.stack([goal_definition(phi[g], dc_ids) for g in range(config.k)])
    return GoalModel(v=v, k=config.k, alpha=config.alpha, beta=config.beta,
                     seed=config.seed, phi=phi, theta=theta, dc_ids=dc_ids,
                     goal_defs=goal_defs, fit_counts=(n_k, n_wk, n_b))


def goal_definition(phi_row: np.ndarray, dc_ids: np.ndarray) -> np.ndarray:
    """Restrict a command distribution to data commands and renormalize."""
    mass = phi_row[dc_ids]
    total = mass.sum()
    if total <= 0.0:
        raise ValueError("distribution has zero mass on data commands")
    return mass / total


def assign_goal(model: GoalModel, session: Session,
                cap: int = BITERM_CAP, seed: int = 0) -> int:
    """Most likely goal for a session.

    Sums the per-biterm topic posteriors P(z|b) proportional to
    theta_g * phi_g[b1] * phi_g[b2] and takes the argmax; ties resolve to the
    lowest goal index. A session with no biterms falls back to argmax theta.
    """
    pairs = extract_biterms(session, cap=cap, seed=seed)
    if not pairs:
        return int(np.argmax(model.theta))
    w1 = np.asarray([p[0] for p in pairs], dtype=np.int64)
    w2 = np.asarray([p[1] for p in pairs], dtype=np.int64)
    scores = model.theta[:, None] * model.phi[:, w1] * model.phi[:, w2]
    scores = scores / scores.sum(axis=0, keepdims=True)
    return int(np.argmax(scores.sum(axis=1)))


def assign_goals(model: GoalModel, sessions: Iterable[Session]) -> list[int]:
    return [assign_goal(model, s) for s in sessions]


@dataclass
class CoherenceCounts:
    """Session-occurrence statistics behind the coherence probabilities."""

    m_total: int
    m_single: np.ndarray                   # (v,) sessions containing command id
    m_pair: dict[tuple[int, int], int]     # canonical pair -> co-occurrence sessions

    def pair(self, i: int, j: int) -> int:
        return self.m_pair.get((i, j) if i < j else (j, i), 0)


def count_cooccurrence(sessions: Iterable[Session], v: int) -> CoherenceCounts:
    """Count, per command and per pair, the sessions they occur in."""
    m_single = np.zeros(v, dtype=np.int64)
    m_pair: dict[tuple[int, int], int] = {}
    total = 0
    for session in sessions:
        total += 1
        ids = sorted({cmd.id for cmd in session.commands})
        for idx, a in enumerate(ids):
            m_single[a] += 1
            for b in ids[idx + 1:]:
                key = (a, b)
                m_pair[key] = m_pair.get(key, 0) + 1
    return CoherenceCounts(m_total=total, m_single=m_single, m_pair=m_pair)


@dataclass
class CoherenceScores:
    uci: list[float]
    umass: list[float]

    @property
    def uci_overall(self) -> float:
        return sum(self.uci) / len(self.uci)

    @property
    def umass_overall(self) -> float:
        return sum(self.umass) / len(self.umass)


def coherence_scores(clusters: Sequence[Sequence[int]], counts: CoherenceCounts,
                     top_n: int = 10) -> CoherenceScores:
    """UCI and UMass coherence per cluster.

    Clusters list each goal's top data commands by goal-definition mass,
    highest first; only the first ``top_n`` entries are scored. UCI pairs are
    unordered; UMass conditions on the higher-ranked command of each pair.
    A cluster with fewer than two commands scores 0.
    """
    uci: list[float] = []
    umass: list[float] = []
    for cluster in clusters:
        ids = list(cluster)[:top_n]
        for i in ids:
            if counts.m_single[i] == 0:
                raise ValueError(f"command id {i} never occurs in the corpus")
        if len(ids) < 2:
            uci.append(0.0)
            umass.append(0.0)
            continue
        m = counts.m_total
        uci_sum = 0.0
        umass_sum = 0.0
        pairs = 0
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                i, j = ids[a], ids[b]  # i ranked above j
                m_ij = counts.pair(i, j)
                p_i = counts.m_single[i] / m
                p_j = counts.m_single[j] / m
                p_ij = m_ij / m
                uci_sum += math.log(p_ij / (p_i * p_j) + UCI_EPSILON)
                umass_sum += math.log((m_ij + 1) / counts.m_single[i])
                pairs += 1
        uci.append(uci_sum / pairs)
        umass.append(umass_sum / pairs)
    return CoherenceScores(uci=uci, umass=umass)


def goal_clusters(model: GoalModel, top_n: int = 10,
                  observed: np.ndarray | None = None) -> list[list[int]]:
    """Per-goal top data commands by goal definition, highest mass first.

    ``observed`` (per-id session counts) filters out commands absent from the
    coherence corpus so scoring stays well defined.
    """
    clusters = []
    for g in range(model.k):
        ids = model.top_data_commands(g, len(model.dc_ids))
        if observed is not None:
            ids = [i for i in ids if observed[i] > 0]
        clusters.append(ids[:top_n])
    return clusters


def _minmax(values: list[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    span = arr.max() - arr.min()
    if span == 0.0:
        return np.zeros_like(arr)
    return (arr - arr.min()) / span


def select_goal_count(sessions: Sequence[Session], vocabulary: Vocabulary,
                      candidates: Iterable[int], template: BtmConfig,
                      top_n: int = 10) -> int:
    """Pick the goal count with the best combined coherence.

    Fits one model per candidate count, min-max normalizes the overall UCI
    and UMass scores across candidates, averages the two, and returns the
    argmax candidate (ties to the smaller count).
    """
    cands = sorted(set(candidates))
    if not cands:
        raise ValueError("empty candidate range")
    counts = count_cooccurrence(sessions, len(vocabulary))
    ucis: list[float] = []
    umasses: list[float] = []
    for t in cands:
        model = btm_fit(sessions, vocabulary, replace(template, k=t))
        scores = coherence_scores(goal_clusters(model, top_n, counts.m_single),
                                  counts, top_n)
        ucis.append(scores.uci_overall)
        umasses.append(scores.umass_overall)
    combined = (_minmax(ucis) + _minmax(umasses)) / 2.0
    return cands[int(np.argmax(combined))]


MODEL_FORMAT_VERSION = 1


def _fmt(values: Iterable[float]) -> str:
    return " ".join(repr(float(x)) for x in values)


def save_goal_model(model: GoalModel, path) -> None:
    """Write the model as versioned decimal text."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"goalmodel {MODEL_FORMAT_VERSION}\n")
        fh.write(f"v={model.v} k={model.k} alpha={model.alpha!r} "
                 f"beta={model.beta!r} seed={model.seed}\n")
        fh.write("dc " + " ".join(str(int(i)) for i in model.dc_ids) + "\n")
        fh.write("phi\n")
        for row in model.phi:
            fh.write(_fmt(row) + "\n")
        fh.write("theta\n")
        fh.write(_fmt(model.theta) + "\n")
        fh.write("goal_defs\n")
        for row in model.goal_defs:
            fh.write(_fmt(row) + "\n")
        if model.labels is not None:
            fh.write("labels\n")
            for label in model.labels:
                fh.write(label + "\n")


def load_goal_model(path) -> GoalModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or not lines[0].startswith("goalmodel "):
        raise ValueError("not a goal model file")
    version = int(lines[0].split()[1])
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported goal model version {version}")
    header = dict(part.split("=", 1) for part in lines[1].split())
    v = int(header["v"])
    k = int(header["k"])
    if not lines[2].startswith("dc "):
        raise ValueError("missing dc id line")
    dc_ids = np.asarray([int(x) for x in lines[2].split()[1:]], dtype=np.int64)
    pos = 3
    if lines[pos] != "phi":
        raise ValueError("missing phi section")
    pos += 1
    phi = np.asarray([[float(x) for x in lines[pos + g].split()] for g in range(k)])
    pos += k
    if lines[pos] != "theta":
        raise ValueError("missing theta section")
    theta = np.asarray([float(x) for x in lines[pos + 1].split()])
    pos += 2
    if lines[pos] != "goal_defs":
        raise ValueError("missing goal_defs section")
    pos += 1
    goal_defs = np.asarray([[float(x) for x in lines[pos + g].split()] for g in range(k)])
    pos += k
    labels = None
    if pos < len(lines) and lines[pos] == "labels":
        labels = lines[pos + 1:pos + 1 + k]
        if len(labels) != k:
            raise ValueError("labels section must have one line per goal")
    if phi.shape != (k, v) or goal_defs.shape != (k, len(dc_ids)) or theta.shape != (k,):
        raise ValueError("model sections have inconsistent shapes")
    return GoalModel(v=v, k=k, alpha=float(header["alpha"]), beta=float(header["beta"]),
                     seed=int(header["seed"]), phi=phi, theta=theta,
                     dc_ids=dc_ids, goal_defs=goal_defs, labels=labels)
