"""Command line entry point.

Exit codes: 0 success, 1 user error (bad arguments, bad config, missing
files), 2 internal failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import threading

from .corpus import ParseError
from .neural import NeuralRecommender, load_params
from .pipeline import (ConfigError, PipelineConfig, StageError,
                       apply_seed_override, load_config, run_pipeline)

log = logging.getLogger(__name__)

# subcommand -> last pipeline stage it needs
_UPTO = {"gen": "corpus", "ingest": "corpus", "goals": "goals", "train": "train",
         "finetune": "finetune", "eval": "eval", "all": "eval", "serve": "finetune"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goalrec",
        description="Goal-driven data-command recommendations for analytics logs.")
    parser.add_argument("command", choices=sorted(_UPTO),
                        help="pipeline stage to run through (all = full pipeline)")
    parser.add_argument("--config", help="INI config file (defaults apply if omitted)")
    parser.add_argument("--seed", type=int,
                        help="master seed override, re-seeds every stage")
    parser.add_argument("--out", help="artifact directory (default: out)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        apply_seed_override(config, args.seed)
    if args.out:
        config.out_dir = args.out
    if args.command == "gen" and config.source != "synthetic":
        raise ConfigError("gen requires a synthetic corpus source")
    if args.command == "ingest" and config.source == "synthetic":
        raise ConfigError("ingest requires a log or corpus file source")
    return config


def _serve(state) -> int:
    from .service import RecommendationService, serve

    cfg = state.config
    name = cfg.finetune_model if cfg.finetune_model in state.neural \
        else next((m for m in state.neural), None)
    if name is None:
        raise ConfigError("serve needs at least one neural model in the model list")
    params, mc = state.neural[name]
    global_rec = NeuralRecommender(params, mc, state.vocab.dc_ids)
    finetuned = {g: NeuralRecommender(p, m, state.vocab.dc_ids)
                 for g, (p, m) in state.finetuned.items()}
    service = RecommendationService(
        state.goal_model, state.vocab, global_rec, finetuned,
        window=cfg.window, top_k=cfg.top_k, ttl=cfg.service_ttl)
    server = serve(service, cfg.service_host, cfg.service_port,
                   static_dir=cfg.service_static or None)
    print(f"serving on http://{cfg.service_host}:{server.server_address[1]}")
    try:
        threading.Event().wait()  # serve_forever runs on its own thread
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load(args)
        state = run_pipeline(config, out_dir=config.out_dir, upto=_UPTO[args.command])
        if args.command == "serve":
            return _serve(state)
        print(f"{args.command}: artifacts in {state.out_dir}")
        return 0
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("unhandled failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
