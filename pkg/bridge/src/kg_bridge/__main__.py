"""CLI: `python -m kg_bridge serve` and `python -m kg_bridge train`."""
from __future__ import annotations

import argparse
import json
import sys

from .config import BridgeConfig
from .trainer import train_from_preferences, write_log


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kg_bridge")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="serve the generate/embed/classify endpoints")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--model", default="deterministic", help="'deterministic' or 'hf:<model-id>'")
    serve.add_argument("--embedder", default="hashed-bow-384", help="'hashed-bow-<dim>' or 'sentence-transformers/<id>'")

    train = sub.add_parser("train", help="validate a preference export (dry run)")
    train.add_argument("--preferences", required=True)
    train.add_argument("--out", default=None, help="write the training log JSON here")
    train.add_argument("--model", default="deterministic")

    args = parser.parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import create_app

        config = BridgeConfig(model=args.model, embedder=args.embedder, host=args.host, port=args.port)
        uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
        return 0

    config = BridgeConfig(model=args.model)
    log = train_from_preferences(args.preferences, config, dry_run=True)
    if args.out:
        write_log(log, args.out)
    else:
        json.dump(log, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0 if log["valid"] else 1


if __name__ == "__main__":
    sys.exit(main())
