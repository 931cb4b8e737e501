"""Classical recommender tests: frequency, Markov, CPT, ensembles."""
from collections import Counter

import numpy as np
import pytest

from goalrec.baselines import (Top50Recommender, top50_fit, markov_biterms,
                               markov_triples, markov_fit, cpt_fit,
                               ensemble_fit)
from goalrec.corpus import (Session, SyntheticConfig, Vocabulary,
                            generate_synthetic, examples_from_sessions)


def _vocab(n_dc=6, n_sc=3):
    v = Vocabulary()
    for i in range(n_sc):
        v.intern_software(f"s{i}")
    for i in range(n_dc):
        v.intern_data("c", f"x{i}")
    return v


def _cmds(vocab, tokens):
    return [vocab.intern_token(t) for t in tokens]


def _session(vocab, tokens, goal=None):
    return Session(user="u", commands=_cmds(vocab, tokens), goal=goal)


def _corpus(n_sessions=50, seed=5):
    cfg = SyntheticConfig(k_true=3, dc_count=12, sc_count=4, sessions=n_sessions,
                          seed=seed, session_len_min=6, session_len_max=14)
    return generate_synthetic(cfg)


# ---------------------------------------------------------------- top-50

def test_top50_hand_normalization():
    vocab = _vocab()
    sessions = [_session(vocab, ["c::x0", "c::x0", "c::x0", "c::x1"])]
    examples = examples_from_sessions(sessions, 1)
    model = top50_fit(examples, vocab)
    # targets: x0 twice, x1 once -> 2/3, 1/3 regardless of window
    d = model.predict_dist(_cmds(vocab, ["s0"]))
    pos = {t: vocab.dc_pos(vocab.intern_token(t).id) for t in ("c::x0", "c::x1")}
    assert d[pos["c::x0"]] == pytest.approx(2 / 3)
    assert d[pos["c::x1"]] == pytest.approx(1 / 3)


def test_top50_window_independent():
    sessions, vocab = _corpus()
    model = top50_fit(examples_from_sessions(sessions, 3), vocab)
    d1 = model.predict_dist(sessions[0].commands[:3])
    d2 = model.predict_dist(sessions[1].commands[:3])
    assert np.array_equal(d1, d2)


def test_top50_outside_cut_is_zero():
    sessions, vocab = _corpus(n_sessions=200, seed=11)
    examples = examples_from_sessions(sessions, 2)
    model = top50_fit(examples, vocab, top_n=3)
    d = model.predict_dist([])
    assert np.sum(d > 0) <= 3
    assert d.sum() == pytest.approx(1.0, abs=1e-9)
    # everything outside the kept set is exactly zero, not merely small
    assert np.all(d[d < np.sort(d)[-3]] == 0.0)


def test_top50_empty_error():
    vocab = _vocab()
    with pytest.raises(ValueError):
        top50_fit([], vocab)


# ------------------------------------------------------- biterm extraction

def test_biterm_set_seven_command_session():
    vocab = _vocab()
    s = _session(vocab, ["c::x1", "c::x2", "s1", "s2", "c::x3", "s3", "c::x4"])
    ids = {t: vocab.intern_token(t).id
           for t in ("c::x1", "c::x2", "s1", "s2", "c::x3", "s3", "c::x4")}
    got = {(a, b) for a, b in markov_biterms(s)}
    assert got == {(ids["c::x1"], ids["c::x2"]), (ids["c::x2"], ids["c::x3"]),
                   (ids["s1"], ids["c::x3"]), (ids["s2"], ids["c::x3"]),
                   (ids["c::x3"], ids["c::x4"]), (ids["s3"], ids["c::x4"])}
    assert len(markov_biterms(s)) == 6


def test_biterm_consequents_are_data():
    sessions, vocab = _corpus()
    for s in sessions:
        for _, dc in markov_biterms(s):
            assert vocab.command(dc).is_data


def test_biterms_empty_without_second_dc():
    vocab = _vocab()
    assert markov_biterms(_session(vocab, ["s0", "c::x0", "s1"])) == []
    assert markov_biterms(_session(vocab, ["s0", "s1"])) == []


def test_triples_skip_adjacent_data_commands():
    vocab = _vocab()
    # x1 x2 adjacent: no room for a two-command context after the previous dc
    s = _session(vocab, ["c::x1", "c::x2", "s1", "s2", "c::x3"])
    ids = {t: vocab.intern_token(t).id for t in ("c::x1", "c::x2", "s1", "s2", "c::x3")}
    assert markov_triples(s) == [((ids["s1"], ids["s2"]), ids["c::x3"])]


# ------------------------------------------------------- Markov prediction

def test_markov_hand_counts():
    vocab = _vocab()
    # context s0 precedes x1 three times and x2 once
    sessions = [_session(vocab, ["c::x0", "s0", "c::x1"]),
                _session(vocab, ["c::x0", "s0", "c::x1"]),
                _session(vocab, ["c::x0", "s0", "c::x1"]),
                _session(vocab, ["c::x0", "s0", "c::x2"])]
    model = markov_fit(sessions, vocab, order=1)
    d = model.predict_dist(_cmds(vocab, ["s0"]))
    assert d[vocab.dc_pos(vocab.intern_token("c::x1").id)] == pytest.approx(0.75)
    assert d[vocab.dc_pos(vocab.intern_token("c::x2").id)] == pytest.approx(0.25)


def _oracle_first_order(sessions):
    """Independent recount of the context/consequent pair rule."""
    pairs = Counter()
    for s in sessions:
        cmds = s.commands
        dc_positions = [i for i, c in enumerate(cmds) if c.is_data]
        for a, b in zip(dc_positions, dc_positions[1:]):
            for q in range(a, b):
                pairs[(cmds[q].id, cmds[b].id)] += 1
    return pairs


def test_markov_matches_bruteforce_oracle():
    sessions, vocab = _corpus(n_sessions=50, seed=9)
    model = markov_fit(sessions, vocab, order=1)
    oracle = _oracle_first_order(sessions)
    contexts = {ctx for ctx, _ in oracle}
    assert contexts, "corpus produced no biterms"
    for ctx in contexts:
        dist = np.zeros(len(vocab.dc_ids))
        for (c, dc), n in oracle.items():
            if c == ctx:
                dist[vocab.dc_pos(dc)] = float(n)
        dist /= dist.sum()
        got = model.predict_dist([vocab.command(ctx)])
        assert np.array_equal(got, dist)


def test_markov_unseen_context_backoff_to_fallback():
    vocab = _vocab()
    sessions = [_session(vocab, ["c::x0", "s0", "c::x1"])]
    examples = examples_from_sessions(sessions, 1)
    top50 = top50_fit(examples, vocab)
    model = markov_fit(sessions, vocab, order=1, fallback=top50.dist)
    d = model.predict_dist(_cmds(vocab, ["s2"]))  # s2 never seen as context
    assert np.array_equal(d, top50.dist)


def test_markov_order2_backs_off_to_order1():
    vocab = _vocab()
    sessions = [_session(vocab, ["c::x0", "s0", "s1", "c::x1"]),
                _session(vocab, ["c::x0", "s1", "c::x2"])]
    model = markov_fit(sessions, vocab, order=2)
    # (s0, s1) seen as a second-order context -> x1
    d2 = model.predict_dist(_cmds(vocab, ["s0", "s1"]))
    assert d2[vocab.dc_pos(vocab.intern_token("c::x1").id)] == 1.0
    # (s2, s1) unseen, last command s1 seen -> first-order table
    d1 = model.predict_dist(_cmds(vocab, ["s2", "s1"]))
    x1 = d1[vocab.dc_pos(vocab.intern_token("c::x1").id)]
    x2 = d1[vocab.dc_pos(vocab.intern_token("c::x2").id)]
    assert x1 == pytest.approx(0.5) and x2 == pytest.approx(0.5)


def test_markov_distributions_sum_to_one():
    sessions, vocab = _corpus(seed=13)
    model = markov_fit(sessions, vocab, order=2)
    for s in sessions[:10]:
        d = model.predict_dist(s.commands[:4])
        assert d.sum() == pytest.approx(1.0, abs=1e-9)


# ----------------------------------------------------------------- CPT

def test_cpt_lossless_reconstruction():
    sessions, vocab = _corpus(n_sessions=50, seed=21)
    model = cpt_fit(sessions, vocab)
    assert len(model.lookup) == len(sessions)
    for sid, session in enumerate(sessions):
        assert model.reconstruct(sid) == [c.id for c in session.commands]


def test_cpt_node_bound():
    sessions, vocab = _corpus(n_sessions=50, seed=22)
    model = cpt_fit(sessions, vocab)
    total = sum(len(s.commands) for s in sessions)
    assert model.node_count <= total + 1


def test_cpt_index_bound():
    sessions, vocab = _corpus(n_sessions=30, seed=23)
    model = cpt_fit(sessions, vocab)
    assert all(len(v) <= len(sessions) for v in model.index.values())


def test_cpt_single_continuation():
    vocab = _vocab()
    model = cpt_fit([_session(vocab, ["s1", "c::x1", "c::x2"])], vocab)
    top = model.recommend(_cmds(vocab, ["s1", "c::x1"]), k=1)
    assert top == [vocab.intern_token("c::x2").id]


def test_cpt_disjoint_window_falls_back():
    vocab = _vocab()
    fallback = np.full(len(vocab.dc_ids), 1.0 / len(vocab.dc_ids))
    model = cpt_fit([_session(vocab, ["s1", "c::x1", "c::x2"])], vocab,
                    fallback=fallback)
    d = model.predict_dist(_cmds(vocab, ["s2", "c::x3"]))
    assert np.array_equal(d, fallback)


def test_cpt_distance_weighting():
    vocab = _vocab()
    # after s0: x1 at distance 1, x2 at distance 3 (x-commands interleaved
    # with a software command) -> weights 1 and 1/3
    model = cpt_fit([_session(vocab, ["s0", "c::x1", "s1", "c::x2"])], vocab)
    d = model.predict_dist(_cmds(vocab, ["s0"]))
    w1 = d[vocab.dc_pos(vocab.intern_token("c::x1").id)]
    w2 = d[vocab.dc_pos(vocab.intern_token("c::x2").id)]
    assert w1 == pytest.approx(0.75) and w2 == pytest.approx(0.25)


def test_recommend_prefix_property():
    sessions, vocab = _corpus(seed=31)
    model = cpt_fit(sessions, vocab)
    window = sessions[0].commands[:5]
    lists = [model.recommend(window, k=k) for k in range(1, 8)]
    for small, big in zip(lists, lists[1:]):
        assert big[:len(small)] == small


def test_recommend_tie_break_low_id():
    vocab = _vocab()
    dist = np.full(len(vocab.dc_ids), 1.0 / len(vocab.dc_ids))
    model = Top50Recommender(dist, vocab.dc_ids)
    # all tied: ranking must be ascending vocabulary id
    assert model.recommend([], k=4) == [int(i) for i in vocab.dc_ids[:4]]


# ------------------------------------------------------------- ensembles

def test_ensemble_single_goal_identity():
    sessions, vocab = _corpus(seed=41)
    base = markov_fit(sessions, vocab, order=1)
    ens = ensemble_fit({0: sessions}, lambda ss: markov_fit(ss, vocab, order=1))
    for s in sessions[:5]:
        w = s.commands[:3]
        assert np.array_equal(ens.predict_dist(w, goal=0), base.predict_dist(w))


def test_ensemble_disjoint_supports_zero_mass():
    cfg = SyntheticConfig(k_true=2, dc_count=10, sc_count=3, sessions=80,
                          seed=3, noise=0.0, session_len_min=6, session_len_max=12)
    sessions, vocab = generate_synthetic(cfg)
    by_goal = {g: [s for s in sessions if s.goal == g] for g in (0, 1)}
    ens = ensemble_fit(by_goal, lambda ss: markov_fit(ss, vocab, order=1))
    goal0_targets = {c.id for s in by_goal[0] for c in s.commands if c.is_data}
    d = ens.predict_dist(by_goal[0][0].commands[:2], goal=0)
    for pos, dc in enumerate(vocab.dc_ids):
        if int(dc) not in goal0_targets:
            assert d[pos] == 0.0


def test_ensemble_missing_goal_errors():
    sessions, vocab = _corpus(seed=43)
    ens = ensemble_fit({0: sessions}, lambda ss: markov_fit(ss, vocab, order=1))
    with pytest.raises(KeyError):
        ens.predict_dist(sessions[0].commands[:2], goal=5)
    with pytest.raises(KeyError):
        ens.predict_dist(sessions[0].commands[:2], goal=None)


def test_ensemble_empty_partition_errors():
    sessions, vocab = _corpus(seed=44)
    with pytest.raises(ValueError):
        ensemble_fit({0: sessions, 1: []},
                     lambda ss: markov_fit(ss, vocab, order=1))
