"""Classical next-data-command predictors.

All recommenders share one interface: ``predict_dist(window, goal)`` returns
a distribution over the data-command vocabulary and ``recommend`` its top-k.
Models: target-frequency Top-50, first/second-order Markov chains over
context/data-command biterms, a compact-prediction-tree model, and a
per-goal ensemble wrapper around any base fitter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Command, SequenceExample, Session, Vocabulary

CPT_SUFFIX_LEN = 4   # window suffix length used for sequence matching
TOP_N_DEFAULT = 50


class Recommender:
    """Base interface: distribution over data commands given a context window.

    Distributions are dense arrays aligned with ``dc_ids`` (ascending
    vocabulary ids of all data commands).
    """

    def __init__(self, dc_ids: np.ndarray):
        self.dc_ids = np.asarray(dc_ids, dtype=np.int64)
        self._dc_pos = {int(v): i for i, v in enumerate(self.dc_ids)}

    def predict_dist(self, window: Sequence[Command], goal: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def recommend(self, window: Sequence[Command], goal: int | None = None,
                  k: int = 5) -> list[int]:
        """Vocabulary ids of the k most probable data commands.

        Stable sort means ties go to the lower vocabulary id, and the k-list
        is always a prefix of the (k+1)-list.
        """
        dist = self.predict_dist(window, goal)
        order = np.argsort(-dist, kind="stable")
        return [int(self.dc_ids[i]) for i in order[:k]]

    def top1(self, window: Sequence[Command], goal: int | None = None) -> int:
        return self.recommend(window, goal, 1)[0]


class Top50Recommender(Recommender):
    """Window-independent target-frequency distribution over the most frequent targets."""

    def __init__(self, dist: np.ndarray, dc_ids: np.ndarray):
        super().__init__(dc_ids)
        self.dist = dist

    def predict_dist(self, window, goal=None) -> np.ndarray:
        return self.dist


def top50_fit(examples: Sequence[SequenceExample], vocabulary: Vocabulary,
              top_n: int = TOP_N_DEFAULT) -> Top50Recommender:
    """Frequency model over the ``top_n`` most frequent training targets.

    Mass outside the kept set is exactly zero; the kept counts renormalize to
    one. Frequency ties resolve to the lower vocabulary id.
    """
    if not examples:
        raise ValueError("need at least one training target")
    dc_ids = vocabulary.dc_ids
    counts = np.zeros(len(dc_ids), dtype=np.float64)
    for ex in examples:
        counts[vocabulary.dc_pos(ex.target.id)] += 1.0
    order = np.argsort(-counts, kind="stable")
    keep = [i for i in order[:top_n] if counts[i] > 0]
    dist = np.zeros_like(counts)
    dist[keep] = counts[keep]
    dist /= dist.sum()
    return Top50Recommender(dist, dc_ids)


def markov_biterms(session: Session) -> list[tuple[int, int]]:
    """Context/consequent pairs: each data command paired with every command
    since (and including) the previous data command. The first data command
    of a session has no previous one and yields nothing.
    """
    out: list[tuple[int, int]] = []
    prev_dc: int | None = None
    cmds = session.commands
    for p, cmd in enumerate(cmds):
        if not cmd.is_data:
            continue
        if prev_dc is not None:
            for q in range(prev_dc, p):
                out.append((cmds[q].id, cmd.id))
        prev_dc = p
    return out


def markov_triples(session: Session) -> list[tuple[tuple[int, int], int]]:
    """Second-order contexts: the last two commands before each data command,
    both lying at or after the previous data command.
    """
    out: list[tuple[tuple[int, int], int]] = []
    prev_dc: int | None = None
    cmds = session.commands
    for p, cmd in enumerate(cmds):
        if not cmd.is_data:
            continue
        if prev_dc is not None and p - prev_dc >= 2:
            out.append(((cmds[p - 2].id, cmds[p - 1].id), cmd.id))
        prev_dc = p
    return out


@dataclass
class BitermCounts:
    """Raw context/consequent counts behind a Markov model."""

    unigram: dict          # context -> total biterm count with that context
    pair: dict             # (context id, dc id) -> count
    triple: dict | None    # ((c2, c1), dc id) -> count; order 2 only
    triple_totals: dict | None


class MarkovRecommender(Recommender):
    """Conditional target frequency given the last one or two window commands.

    Unseen contexts back off: order 2 to order 1 to the supplied fallback
    distribution (normally the Top-50 model's).
    """

    def __init__(self, counts: BitermCounts, order: int,
                 fallback: np.ndarray, dc_ids: np.ndarray):
        super().__init__(dc_ids)
        self.counts = counts
        self.order = order
        self.fallback = fallback
        # per-context consequent tables so predict does not scan all pairs
        self._by_ctx: dict = {}
        for (ctx, dc), n in counts.pair.items():
            self._by_ctx.setdefault(ctx, {})[dc] = n
        self._by_ctx2: dict = {}
        if counts.triple is not None:
            for (ctx2, dc), n in counts.triple.items():
                self._by_ctx2.setdefault(ctx2, {})[dc] = n

    def _dist_from(self, table: dict, context) -> np.ndarray | None:
        consequents = table.get(context)
        if not consequents:
            return None
        dist = np.zeros(len(self.dc_ids), dtype=np.float64)
        for dc, n in consequents.items():
            dist[self._dc_pos[dc]] = n
        return dist / dist.sum()

    def predict_dist(self, window, goal=None) -> np.ndarray:
        if self.order == 2 and len(window) >= 2:
            dist = self._dist_from(self._by_ctx2, (window[-2].id, window[-1].id))
            if dist is not None:
                return dist
        if len(window) >= 1:
            dist = self._dist_from(self._by_ctx, window[-1].id)
            if dist is not None:
                return dist
        return self.fallback


def markov_fit(sessions: Iterable[Session], vocabulary: Vocabulary,
               order: int = 1, fallback: np.ndarray | None = None) -> MarkovRecommender:
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    pair: dict[tuple[int, int], int] = {}
    unigram: dict[int, int] = {}
    triple: dict[tuple[tuple[int, int], int], int] | None = {} if order == 2 else None
    triple_totals: dict[tuple[int, int], int] | None = {} if order == 2 else None
    for session in sessions:
        for ctx, dc in markov_biterms(session):
            pair[(ctx, dc)] = pair.get((ctx, dc), 0) + 1
            unigram[ctx] = unigram.get(ctx, 0) + 1
        if order == 2:
            for ctx2, dc in markov_triples(session):
                triple[(ctx2, dc)] = triple.get((ctx2, dc), 0) + 1
                triple_totals[ctx2] = triple_totals.get(ctx2, 0) + 1
    dc_ids = vocabulary.dc_ids
    if fallback is None:
        fallback = np.full(len(dc_ids), 1.0 / len(dc_ids))
    counts = BitermCounts(unigram=unigram, pair=pair,
                          triple=triple, triple_totals=triple_totals)
    return MarkovRecommender(counts, order, fallback, dc_ids)


class _TrieNode:
    __slots__ = ("cmd", "parent", "children")

    def __init__(self, cmd: int | None, parent: "_TrieNode | None"):
        self.cmd = cmd
        self.parent = parent
        self.children: dict[int, _TrieNode] = {}


class CptRecommender(Recommender):
    """Compact prediction tree over training sequences.

    Three structures carry the model: a prefix trie of all training
    sequences, an inverted index from command id to the sequences containing
    it, and a lookup table from sequence id to its end node in the trie. The
    trie plus lookup table reconstruct every training sequence exactly.
    """

    def __init__(self, vocabulary: Vocabulary, fallback: np.ndarray,
                 suffix_len: int = CPT_SUFFIX_LEN):
        super().__init__(vocabulary.dc_ids)
        self._vocab = vocabulary
        self.fallback = fallback
        self.suffix_len = suffix_len
        self.root = _TrieNode(None, None)
        self.node_count = 1
        self.index: dict[int, set[int]] = {}
        self.lookup: dict[int, _TrieNode] = {}
        self._seq_cache: dict[int, list[int]] = {}

    def insert(self, commands: Sequence[Command]) -> int:
        seq_id = len(self.lookup)
        node = self.root
        for cmd in commands:
            child = node.children.get(cmd.id)
            if child is None:
                child = _TrieNode(cmd.id, node)
                node.children[cmd.id] = child
                self.node_count += 1
            node = child
        self.lookup[seq_id] = node
        for cid in {cmd.id for cmd in commands}:
            self.index.setdefault(cid, set()).add(seq_id)
        return seq_id

    def reconstruct(self, seq_id: int) -> list[int]:
        """Sequence of command ids recovered from the trie and lookup table."""
        ids: list[int] = []
        node = self.lookup[seq_id]
        while node.parent is not None:
            ids.append(node.cmd)
            node = node.parent
        ids.reverse()
        return ids

    def _sequence(self, seq_id: int) -> list[int]:
        seq = self._seq_cache.get(seq_id)
        if seq is None:
            seq = self.reconstruct(seq_id)
            self._seq_cache[seq_id] = seq
        return seq

    def predict_dist(self, window, goal=None) -> np.ndarray:
        context = list(dict.fromkeys(cmd.id for cmd in window[-self.suffix_len:]))
        if not context:
            return self.fallback
        candidate_sets = [self.index.get(cid) for cid in context]
        if any(s is None for s in candidate_sets):
            return self.fallback
        candidates = set.intersection(*candidate_sets)
        if not candidates:
            return self.fallback
        scores = np.zeros(len(self.dc_ids), dtype=np.float64)
        for sid in sorted(candidates):
            seq = self._sequence(sid)
            match_end = max(seq.index(cid) for cid in context)
            for q in range(match_end + 1, len(seq)):
                cmd = self._vocab.command(seq[q])
                if cmd.is_data:
                    scores[self._dc_pos[seq[q]]] += 1.0 / (q - match_end)
        total = scores.sum()
        if total == 0.0:
            return self.fallback
        return scores / total


def cpt_fit(sessions: Iterable[Session], vocabulary: Vocabulary,
            fallback: np.ndarray | None = None,
            suffix_len: int = CPT_SUFFIX_LEN) -> CptRecommender:
    dc_ids = vocabulary.dc_ids
    if fallback is None:
        fallback = np.full(len(dc_ids), 1.0 / len(dc_ids))
    model = CptRecommender(vocabulary, fallback, suffix_len)
    for session in sessions:
        model.insert(session.commands)
    return model


class EnsembleRecommender(Recommender):
    """One base model per goal; prediction dispatches on the supplied goal."""

    def __init__(self, models: dict[int, Recommender], dc_ids: np.ndarray):
        super().__init__(dc_ids)
        self.models = models

    def predict_dist(self, window, goal=None) -> np.ndarray:
        if goal is None or goal not in self.models:
            raise KeyError(f"no model for goal {goal!r}")
        return self.models[goal].predict_dist(window, goal)


def ensemble_fit(sessions_by_goal: dict[int, list[Session]],
                 base_fitter: Callable[[list[Session]], Recommender]) -> EnsembleRecommender:
    if not sessions_by_goal:
        raise ValueError("no goal partitions")
    models: dict[int, Recommender] = {}
    for goal, sessions in sorted(sessions_by_goal.items()):
        if not sessions:
            raise ValueError(f"goal {goal} has no sessions")
        models[goal] = base_fitter(sessions)
    dc_ids = next(iter(models.values())).dc_ids
    return EnsembleRecommender(models, dc_ids)
