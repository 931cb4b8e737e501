"""End-to-end pipeline: corpus -> goals -> train -> finetune -> eval.

Stages are checkpointed by content digest: a stage is skipped when its
config slice and every input artifact hash to the same digest as the
previous run. Reports are written with stable key order so reruns are
byte-identical.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import (Session, SyntheticConfig, build_vocabulary, encode_sessions,
                     examples_from_sessions, generate_synthetic, load_corpus,
                     parse_log, save_corpus, sessionize, split)
from .goals import (BtmConfig, GoalModel, assign_goals, btm_fit, load_goal_model,
                    save_goal_model, select_goal_count)
from .baselines import cpt_fit, markov_fit, top50_fit
from .neural import (ModelConfig, NeuralRecommender, TrainConfig, encode_examples,
                     fine_tune, load_params, save_params, train)
from .evaluation import adversarial_eval, evaluate, report_to_json

log = logging.getLogger(__name__)

STAGES = ("corpus", "goals", "train", "finetune", "eval")
NEURAL_MODELS = ("vanilla", "goal_dense", "goal_steps", "goal_token")
BASELINE_MODELS = ("top50", "markov1", "markov2", "cpt")


class ConfigError(ValueError):
    """Invalid or inconsistent pipeline configuration."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    source: str = "synthetic"            # "synthetic" or a log/corpus path
    source_kind: str = "auto"            # auto | log | corpus
    synthetic: SyntheticConfig = field(default_factory=lambda: SyntheticConfig(
        k_true=3, dc_count=30, sc_count=10, sessions=300, noise=0.05, seed=42,
        session_len_min=15, session_len_max=40))
    split_ratios: tuple = (0.75, 0.125, 0.125)
    split_seed: int = 1
    goal_count: int | None = 3           # None -> select over candidates
    goal_candidates: tuple = (2, 3, 4, 5, 6)
    btm: BtmConfig = field(default_factory=lambda: BtmConfig(k=3, seed=7))
    goal_labels: tuple = ()
    models: tuple = ("top50", "markov1", "markov2", "cpt", "vanilla", "goal_token")
    window: int = 6
    embed_dim: int = 32
    hidden_dim: int = 64
    encoder: str = "lstm"
    dropout: float = 0.5
    model_seed: int = 5
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        epochs=4, batch_size=32, seed=3))
    finetune_enabled: bool = True
    finetune_model: str = "goal_token"
    finetune_epochs: int = 6
    finetune_alpha: float = 0.5
    adversarial: bool = True
    top_k: int = 5
    out_dir: str = "out"
    service_host: str = "127.0.0.1"
    service_port: int = 8080
    service_static: str = ""
    service_ttl: float = 21600.0

    def validate(self) -> None:
        if self.source == "synthetic":
            self.synthetic.validate()
        elif not os.path.exists(self.source):
            raise ConfigError(f"corpus source not found: {self.source}")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError("split ratios must sum to 1")
        for m in self.models:
            if m not in NEURAL_MODELS + BASELINE_MODELS:
                raise ConfigError(f"unknown model: {m}")
        if self.finetune_enabled and self.finetune_model not in self.models:
            raise ConfigError("finetune model must be in the model list")
        if self.finetune_enabled and self.finetune_model == "vanilla":
            raise ConfigError("fine-tuning needs a goal-informed model")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        self.train.validate()


def _get(parser, section, key, fallback):
    if not parser.has_section(section) or not parser.has_option(section, key):
        return fallback
    raw = parser.get(section, key)
    if isinstance(fallback, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(fallback, int):
        return int(raw)
    if isinstance(fallback, float):
        return float(raw)
    return raw.strip()


def load_config(path) -> PipelineConfig:
    """Flat INI with one section per stage; unknown keys are rejected."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    known = {
        "corpus": {"source", "kind", "k_true", "dc_count", "sc_count", "zipf_exponent",
                   "sessions", "session_len_min", "session_len_max", "noise", "seed"},
        "split": {"ratios", "seed"},
        "goals": {"count", "candidates", "alpha", "beta", "iterations", "burn_in",
                  "seed", "average", "labels"},
        "models": {"list", "window", "embed_dim", "hidden_dim", "encoder", "dropout",
                   "seed"},
        "train": {"learning_rate", "momentum", "weight_decay", "batch_size", "epochs",
                  "seed"},
        "finetune": {"enabled", "model", "epochs", "loss_alpha"},
        "eval": {"adversarial", "top_k"},
        "service": {"host", "port", "static", "ttl"},
    }
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown config section: [{section}]")
        for key in parser.options(section):
            if key not in known[section]:
                raise ConfigError(f"unknown key {key} in [{section}]")

    cfg = PipelineConfig()
    cfg.source = _get(parser, "corpus", "source", cfg.source)
    cfg.source_kind = _get(parser, "corpus", "kind", cfg.source_kind)
    syn = cfg.synthetic
    cfg.synthetic = SyntheticConfig(
        k_true=_get(parser, "corpus", "k_true", syn.k_true),
        dc_count=_get(parser, "corpus", "dc_count", syn.dc_count),
        sc_count=_get(parser, "corpus", "sc_count", syn.sc_count),
        zipf_exponent=_get(parser, "corpus", "zipf_exponent", syn.zipf_exponent),
        sessions=_get(parser, "corpus", "sessions", syn.sessions),
        session_len_min=_get(parser, "corpus", "session_len_min", syn.session_len_min),
        session_len_max=_get(parser, "corpus", "session_len_max", syn.session_len_max),
        noise=_get(parser, "corpus", "noise", syn.noise),
        seed=_get(parser, "corpus", "seed", syn.seed))
    ratios = _get(parser, "split", "ratios", "")
    if ratios:
        cfg.split_ratios = tuple(float(x) for x in ratios.split(","))
    cfg.split_seed = _get(parser, "split", "seed", cfg.split_seed)

    count = _get(parser, "goals", "count", str(cfg.goal_count))
    cfg.goal_count = None if count in ("auto", "None") else int(count)
    candidates = _get(parser, "goals", "candidates", "")
    if candidates:
        cfg.goal_candidates = tuple(int(x) for x in candidates.split(","))
    cfg.btm = BtmConfig(
        k=cfg.goal_count or cfg.goal_candidates[0],
        alpha=_get(parser, "goals", "alpha", cfg.btm.alpha),
        beta=_get(parser, "goals", "beta", cfg.btm.beta),
        iterations=_get(parser, "goals", "iterations", cfg.btm.iterations),
        burn_in=_get(parser, "goals", "burn_in", cfg.btm.burn_in),
        seed=_get(parser, "goals", "seed", cfg.btm.seed),
        average=_get(parser, "goals", "average", cfg.btm.average))
    labels = _get(parser, "goals", "labels", "")
    if labels:
        cfg.goal_labels = tuple(x.strip() for x in labels.split(","))

    models = _get(parser, "models", "list", "")
    if models:
        cfg.models = tuple(x.strip() for x in models.split(","))
    cfg.window = _get(parser, "models", "window", cfg.window)
    cfg.embed_dim = _get(parser, "models", "embed_dim", cfg.embed_dim)
    cfg.hidden_dim = _get(parser, "models", "hidden_dim", cfg.hidden_dim)
    cfg.encoder = _get(parser, "models", "encoder", cfg.encoder)
    cfg.dropout = _get(parser, "models", "dropout", cfg.dropout)
    cfg.model_seed = _get(parser, "models", "seed", cfg.model_seed)

    t = cfg.train
    cfg.train = TrainConfig(
        learning_rate=_get(parser, "train", "learning_rate", t.learning_rate),
        momentum=_get(parser, "train", "momentum", t.momentum),
        weight_decay=_get(parser, "train", "weight_decay", t.weight_decay),
        batch_size=_get(parser, "train", "batch_size", t.batch_size),
        epochs=_get(parser, "train", "epochs", t.epochs),
        seed=_get(parser, "train", "seed", t.seed))
    cfg.finetune_enabled = _get(parser, "finetune", "enabled", cfg.finetune_enabled)
    cfg.finetune_model = _get(parser, "finetune", "model", cfg.finetune_model)
    cfg.finetune_epochs = _get(parser, "finetune", "epochs", cfg.finetune_epochs)
    cfg.finetune_alpha = _get(parser, "finetune", "loss_alpha", cfg.finetune_alpha)
    cfg.adversarial = _get(parser, "eval", "adversarial", cfg.adversarial)
    cfg.top_k = _get(parser, "eval", "top_k", cfg.top_k)
    cfg.service_host = _get(parser, "service", "host", cfg.service_host)
    cfg.service_port = _get(parser, "service", "port", cfg.service_port)
    cfg.service_static = _get(parser, "service", "static", cfg.service_static)
    cfg.service_ttl = _get(parser, "service", "ttl", cfg.service_ttl)
    cfg.validate()
    return cfg


def apply_seed_override(cfg: PipelineConfig, seed: int) -> None:
    """--seed N: re-seed every stage from one master value (fixed offsets)."""
    cfg.synthetic.seed = seed
    cfg.split_seed = seed + 1
    cfg.btm.seed = seed + 2
    cfg.model_seed = seed + 3
    cfg.train.seed = seed + 4


# ---------------------------------------------------------------- digests

def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Per-stage digests and artifact lists, persisted as JSON."""

    def __init__(self, out_dir):
        self.path = os.path.join(out_dir, "manifest.json")
        self.out_dir = out_dir
        self.data = {}
        if os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as fh:
                self.data = json.load(fh)

    def fresh(self, stage: str, digest: str) -> bool:
        entry = self.data.get(stage)
        if not entry or entry["digest"] != digest:
            return False
        return all(os.path.exists(os.path.join(self.out_dir, f))
                   for f in entry["files"])

    def record(self, stage: str, digest: str, files) -> None:
        self.data[stage] = {"digest": digest, "files": sorted(files)}
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------- stages

@dataclass
class PipelineState:
    config: PipelineConfig
    out_dir: str
    manifest: Manifest
    sessions: dict = field(default_factory=dict)   # part -> list[Session]
    vocab: object = None
    goal_model: GoalModel | None = None
    neural: dict = field(default_factory=dict)     # name -> (params, ModelConfig)
    finetuned: dict = field(default_factory=dict)  # goal -> (params, ModelConfig)


def _out(state, name):
    return os.path.join(state.out_dir, name)


def _load_splits(state) -> None:
    parts = {}
    for part in ("train", "val", "test"):
        parts[part], _ = load_corpus(_out(state, f"{part}.txt"))
    vocab = build_vocabulary(parts["train"])
    vocab.freeze()
    state.vocab = vocab
    for part, sessions in parts.items():
        state.sessions[part] = encode_sessions(sessions, vocab)


def _stage_corpus(state: PipelineState) -> None:
    cfg = state.config
    spec = {"split": [list(cfg.split_ratios), cfg.split_seed]}
    if cfg.source == "synthetic":
        s = cfg.synthetic
        spec["synthetic"] = [s.k_true, s.dc_count, s.sc_count, s.zipf_exponent,
                             s.sessions, s.session_len_min, s.session_len_max,
                             s.noise, s.seed]
    else:
        spec["source"] = [cfg.source, cfg.source_kind, _file_digest(cfg.source)]
    digest = _digest(spec)
    files = ["corpus.txt", "train.txt", "val.txt", "test.txt"]
    if state.manifest.fresh("corpus", digest):
        log.info("corpus: up to date, skipping")
        _load_splits(state)
        return
    if cfg.source == "synthetic":
        sessions, _ = generate_synthetic(cfg.synthetic)
    else:
        kind = cfg.source_kind
        if kind == "auto":
            kind = "log" if cfg.source.endswith((".log", ".jsonl")) else "corpus"
        if kind == "log":
            with open(cfg.source, encoding="utf-8") as fh:
                events, _ = parse_log(fh)
            sessions = sessionize(events)
        else:
            sessions, _ = load_corpus(cfg.source)
    save_corpus(sessions, _out(state, "corpus.txt"))
    train_s, val_s, test_s = split(sessions, cfg.split_ratios, seed=cfg.split_seed)
    for part, chunk in (("train", train_s), ("val", val_s), ("test", test_s)):
        save_corpus(chunk, _out(state, f"{part}.txt"))
    _load_splits(state)
    state.manifest.record("corpus", digest, files)
    log.info("corpus: %d sessions (%d/%d/%d split)", len(sessions),
             len(train_s), len(val_s), len(test_s))


def _stage_goals(state: PipelineState) -> None:
    cfg = state.config
    b = cfg.btm
    spec = {"corpus": state.manifest.data["corpus"]["digest"],
            "btm": [b.alpha, b.beta, b.iterations, b.burn_in, b.seed, b.average],
            "count": cfg.goal_count or list(cfg.goal_candidates),
            "labels": list(cfg.goal_labels)}
    digest = _digest(spec)
    files = ["goalmodel.txt", "train_assigned.txt", "val_assigned.txt",
             "test_assigned.txt"]
    if cfg.goal_count is None:
        files.append("goal_selection.json")
    if state.manifest.fresh("goals", digest):
        log.info("goals: up to date, skipping")
        state.goal_model = load_goal_model(_out(state, "goalmodel.txt"))
        for part in ("train", "val", "test"):
            sessions, _ = load_corpus(_out(state, f"{part}_assigned.txt"))
            state.sessions[part] = encode_sessions(sessions, state.vocab)
        return
    train_s = state.sessions["train"]
    k = cfg.goal_count
    if k is None:
        template = BtmConfig(k=cfg.goal_candidates[0], alpha=b.alpha, beta=b.beta,
                             iterations=b.iterations, burn_in=b.burn_in,
                             seed=b.seed, average=b.average)
        k = select_goal_count(train_s, state.vocab, cfg.goal_candidates, template)
        with open(_out(state, "goal_selection.json"), "w", encoding="utf-8") as fh:
            json.dump({"candidates": list(cfg.goal_candidates), "selected": k},
                      fh, sort_keys=True)
            fh.write("\n")
    model = btm_fit(train_s, state.vocab,
                    BtmConfig(k=k, alpha=b.alpha, beta=b.beta, iterations=b.iterations,
                              burn_in=b.burn_in, seed=b.seed, average=b.average))
    if cfg.goal_labels:
        if len(cfg.goal_labels) != k:
            raise ConfigError(f"{len(cfg.goal_labels)} labels for {k} goals")
        model.labels = list(cfg.goal_labels)
    save_goal_model(model, _out(state, "goalmodel.txt"))
    state.goal_model = model
    for part in ("train", "val", "test"):
        sessions = state.sessions[part]
        for s, g in zip(sessions, assign_goals(model, sessions)):
            s.goal = g
        save_corpus(sessions, _out(state, f"{part}_assigned.txt"))
    state.manifest.record("goals", digest, files)
    log.info("goals: k=%d fitted and assigned", k)


def _neural_config(cfg: PipelineConfig, variant: str, goal_count: int) -> ModelConfig:
    return ModelConfig(vocab_size=0, dc_count=0, goal_count=goal_count,
                       embed_dim=cfg.embed_dim, hidden_dim=cfg.hidden_dim,
                       encoder=cfg.encoder, variant=variant, dropout_p=cfg.dropout,
                       seed=cfg.model_seed)


def _sized(mc: ModelConfig, vocab) -> ModelConfig:
    d = mc.to_dict()
    d["vocab_size"] = len(vocab)
    d["dc_count"] = vocab.dc_count
    return ModelConfig.from_dict(d)


def _stage_train(state: PipelineState) -> None:
    cfg = state.config
    neural_wanted = [m for m in cfg.models if m in NEURAL_MODELS]
    t = cfg.train
    spec = {"goals": state.manifest.data["goals"]["digest"],
            "window": cfg.window, "models": neural_wanted,
            "dims": [cfg.embed_dim, cfg.hidden_dim, cfg.encoder, cfg.dropout,
                     cfg.model_seed],
            "train": [t.learning_rate, t.momentum, t.weight_decay, t.batch_size,
                      t.epochs, t.seed]}
    digest = _digest(spec)
    files = [f"params_{name}.txt" for name in neural_wanted]
    if state.manifest.fresh("train", digest):
        log.info("train: up to date, skipping")
        for name in neural_wanted:
            params, mc, _ = load_params(_out(state, f"params_{name}.txt"))
            state.neural[name] = (params, mc)
        return
    k = state.goal_model.k
    train_ex = examples_from_sessions(state.sessions["train"], cfg.window)
    val_ex = examples_from_sessions(state.sessions["val"], cfg.window)
    enc_train = encode_examples(train_ex, state.vocab)
    enc_val = encode_examples(val_ex, state.vocab) if val_ex else None
    for name in neural_wanted:
        mc = _sized(_neural_config(cfg, name, k), state.vocab)
        params = train(mc, cfg.train, enc_train, enc_val)
        save_params(_out(state, f"params_{name}.txt"), params, mc,
                    train_config=cfg.train)
        state.neural[name] = (params, mc)
        log.info("train: %s done", name)
    state.manifest.record("train", digest, files)


def _stage_finetune(state: PipelineState) -> None:
    cfg = state.config
    if not cfg.finetune_enabled or cfg.finetune_model not in state.neural:
        log.info("finetune: disabled")
        return
    spec = {"train": state.manifest.data["train"]["digest"],
            "model": cfg.finetune_model, "epochs": cfg.finetune_epochs,
            "alpha": cfg.finetune_alpha}
    digest = _digest(spec)
    k = state.goal_model.k
    files = [f"params_ft_g{g}.txt" for g in range(k)]
    if state.manifest.fresh("finetune", digest):
        log.info("finetune: up to date, skipping")
        for g in range(k):
            params, mc, _ = load_params(_out(state, f"params_ft_g{g}.txt"))
            state.finetuned[g] = (params, mc)
        return
    params, mc = state.neural[cfg.finetune_model]
    t = cfg.train
    ft_config = TrainConfig(learning_rate=t.learning_rate, momentum=t.momentum,
                            weight_decay=t.weight_decay, batch_size=t.batch_size,
                            epochs=cfg.finetune_epochs, loss_alpha=cfg.finetune_alpha,
                            freeze_embeddings=True, seed=t.seed)
    train_ex = examples_from_sessions(state.sessions["train"], cfg.window)
    val_ex = examples_from_sessions(state.sessions["val"], cfg.window)
    for g in range(k):
        g_train = encode_examples([e for e in train_ex if e.goal == g], state.vocab)
        g_val = [e for e in val_ex if e.goal == g]
        enc_val = encode_examples(g_val, state.vocab) if g_val else None
        ft = fine_tune(params, mc, g, state.goal_model.goal_defs[g], g_train,
                       enc_val, ft_config)
        save_params(_out(state, f"params_ft_g{g}.txt"), ft, mc,
                    train_config=ft_config)
        state.finetuned[g] = (ft, mc)
        log.info("finetune: goal %d done", g)
    state.manifest.record("finetune", digest, files)


def _fit_baseline(name, train_sessions, train_ex, vocab):
    if name == "top50":
        return top50_fit(train_ex, vocab)
    if name == "markov1":
        return markov_fit(train_sessions, vocab, order=1)
    if name == "markov2":
        return markov_fit(train_sessions, vocab, order=2)
    if name == "cpt":
        return cpt_fit(train_sessions, vocab)
    raise ConfigError(f"unknown baseline: {name}")


def _stage_eval(state: PipelineState) -> None:
    cfg = state.config
    upstream = state.manifest.data.get("finetune") or state.manifest.data["train"]
    spec = {"upstream": upstream["digest"], "models": list(cfg.models),
            "adversarial": cfg.adversarial, "window": cfg.window}
    digest = _digest(spec)
    if state.manifest.fresh("eval", digest):
        log.info("eval: up to date, skipping")
        return
    train_ex = examples_from_sessions(state.sessions["train"], cfg.window)
    test_ex = examples_from_sessions(state.sessions["test"], cfg.window)
    report = {"metadata": {
        "corpus_digest": state.manifest.data["corpus"]["digest"],
        "seeds": {"corpus": cfg.synthetic.seed if cfg.source == "synthetic" else None,
                  "split": cfg.split_seed, "btm": cfg.btm.seed,
                  "model": cfg.model_seed, "train": cfg.train.seed},
        "window": cfg.window, "goal_count": state.goal_model.k,
        "examples": {"train": len(train_ex), "test": len(test_ex)},
    }, "models": {}}
    for name in cfg.models:
        if name in BASELINE_MODELS:
            rec = _fit_baseline(name, state.sessions["train"], train_ex, state.vocab)
        else:
            params, mc = state.neural[name]
            rec = NeuralRecommender(params, mc, state.vocab.dc_ids)
        report["models"][name] = evaluate(rec, test_ex, state.goal_model)
        log.info("eval: %s accuracy %.4f", name,
                 report["models"][name]["overall"]["accuracy"])
    if state.finetuned:
        params, mc = state.neural[cfg.finetune_model]
        global_rec = NeuralRecommender(params, mc, state.vocab.dc_ids)
        ft_recs = {g: NeuralRecommender(p, m, state.vocab.dc_ids)
                   for g, (p, m) in state.finetuned.items()}
        fine = {}
        for g, rec in ft_recs.items():
            g_test = [e for e in test_ex if e.goal == g]
            if g_test:
                fine[str(g)] = evaluate(rec, g_test, state.goal_model)["per_goal"][str(g)]
        report["finetuned"] = fine
        if cfg.adversarial and state.goal_model.k >= 2:
            report["adversarial"] = adversarial_eval(ft_recs, global_rec, test_ex,
                                                     state.goal_model)
    text = report_to_json(report)
    with open(_out(state, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(text)
    state.manifest.record("eval", digest, ["report.json"])
    log.info("eval: report written")


_STAGE_FN = {"corpus": _stage_corpus, "goals": _stage_goals, "train": _stage_train,
             "finetune": _stage_finetune, "eval": _stage_eval}


def run_pipeline(config: PipelineConfig, out_dir=None, upto="eval") -> PipelineState:
    """Run stages in order through `upto`; raises StageError on failure."""
    if upto not in STAGES:
        raise ConfigError(f"unknown stage: {upto}")
    config.validate()
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    state = PipelineState(config=config, out_dir=out_dir, manifest=Manifest(out_dir))
    for stage in STAGES[:STAGES.index(upto) + 1]:
        try:
            _STAGE_FN[stage](state)
        except (ConfigError, StageError):
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
    return state
