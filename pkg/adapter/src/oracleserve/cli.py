"""Command line: load a model once, then serve the oracle protocol."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .models import build_backend
from .server import OracleServer


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oracleserve",
        description="Serve total-log-probability queries for a causal LM over "
                    "the JSON-lines oracle protocol.",
    )
    parser.add_argument("--version", action="version",
                        version=f"oracleserve {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="answer protocol requests on stdio or TCP")
    serve.add_argument("--model", required=True,
                       help="model id or local path, or mock:constant=<v>[,context=<C>]")
    serve.add_argument("--device", default="cpu", help="torch device (default: cpu)")
    serve.add_argument("--context-length", type=int, default=None,
                       help="override the model's context window")
    serve.add_argument("--tcp", type=int, default=None, metavar="PORT",
                       help="serve on TCP (0 picks a free port, printed to stderr) "
                            "instead of stdio")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        backend = build_backend(args.model, device=args.device,
                                context_length=args.context_length)
    except (ValueError, OSError) as exc:
        print(f"error: cannot load model {args.model!r}: {exc}", file=sys.stderr)
        return 2
    server = OracleServer(backend)
    print(f"serving {backend.name!r} context_length={backend.context_length} "
          f"scores_first_token={backend.scores_first_token}", file=sys.stderr)
    try:
        if args.tcp is not None:
            server.serve_tcp(
                args.tcp,
                announce=lambda port: print(f"PORT {port}", file=sys.stderr, flush=True),
            )
        else:
            server.serve_stdio()
    except KeyboardInterrupt:
        pass
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
