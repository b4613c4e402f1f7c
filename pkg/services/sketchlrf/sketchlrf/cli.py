"""Command-line entry point: sketchlrf {gen,sketch,factorize,dp-factorize,audit,bench,serve,push}"""
import argparse
import json
import logging
import sys
from pathlib import Path

from sketchlrf import linalg
from sketchlrf.bench import ORDERS, DEFAULT_NOISE_LEVEL, ExperimentConfig, LowRankSource, emit_stream, run_experiment
from sketchlrf.config import DEFAULT_CALIBRATION_C, DEFAULT_SEED, LOG_FORMAT, LOG_LEVEL, SERVICE_URL
from sketchlrf.dp import PrivacyParams, audit_targets, private_factorize, sensitivity_audit
from sketchlrf.lrf import factorize
from sketchlrf.modes import Mode, PrivacyLevel
from sketchlrf.sketch import SketchKind
from sketchlrf.stream import SketchState, ingest_all, init_state, read_stream

logger = logging.getLogger(__name__)

SKETCH_CHOICES = [kind.value for kind in SketchKind if kind is not SketchKind.IDENTITY]


def _add_model_args(parser: argparse.ArgumentParser, mode: bool = True) -> None:
    parser.add_argument("--k", type=int, required=True, help="Target rank.")
    parser.add_argument("--alpha", type=float, default=0.5, help="Relative error parameter (default: 0.5).")
    if mode:
        parser.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.NON_PRIVATE.value)
    parser.add_argument("--epsilon", type=float, default=None)
    parser.add_argument("--delta", type=float, default=None)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Seed (default: $SKETCHLRF_SEED or 0).")
    parser.add_argument("--c", type=float, default=DEFAULT_CALIBRATION_C, help="Calibration constant.")
    parser.add_argument("--sketch", choices=SKETCH_CHOICES, default=SketchKind.COUNT_SKETCH.value)


def _add_noise_seed_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--noise-seed", type=int, default=None,
        help="Pin the private noise for reproducible experiments (default: OS entropy, never written out).",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sketchlrf", description="Streaming (private) low-rank factorization.")
    ap.add_argument("--log-level", default=LOG_LEVEL)
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate a low-rank-plus-noise matrix and its stream.")
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--rank", type=int, required=True)
    gen.add_argument("--noise", type=float, default=DEFAULT_NOISE_LEVEL)
    gen.add_argument("--seed", type=int, default=DEFAULT_SEED)
    gen.add_argument("--order", choices=ORDERS, default="row-major")
    gen.add_argument("--matrix", type=Path, default=None, help="Write the dense matrix here.")
    gen.add_argument("--out", type=Path, required=True, help="Stream file path.")

    sketch = sub.add_parser("sketch", help="Ingest a stream and write the sketches.")
    sketch.add_argument("--stream", type=Path, required=True)
    _add_model_args(sketch)
    _add_noise_seed_arg(sketch)
    sketch.add_argument("--out", type=Path, required=True)

    fact = sub.add_parser("factorize", help="Non-private factorization of a stream.")
    fact.add_argument("--stream", type=Path, required=True)
    _add_model_args(fact, mode=False)
    fact.add_argument("--reference", type=Path, default=None, help="Dense matrix for residual/oracle.")
    fact.add_argument("--out", type=Path, required=True)

    dpf = sub.add_parser("dp-factorize", help="Private factorization of a stream.")
    dpf.add_argument("--stream", type=Path, required=True)
    dpf.add_argument("--level", choices=[lv.value for lv in PrivacyLevel], required=True)
    _add_model_args(dpf, mode=False)
    _add_noise_seed_arg(dpf)
    dpf.add_argument("--reference", type=Path, default=None)
    dpf.add_argument("--out", type=Path, required=True)

    audit = sub.add_parser("audit", help="Empirical sensitivity audit of sampled operators.")
    audit.add_argument("--m", type=int, required=True)
    audit.add_argument("--n", type=int, required=True)
    audit.add_argument("--level", choices=[lv.value for lv in PrivacyLevel], required=True)
    audit.add_argument("--trials", type=int, default=500)
    _add_model_args(audit, mode=False)
    audit.add_argument("--out", type=Path, default=None)

    bench = sub.add_parser("bench", help="End-to-end experiment with oracle comparison.")
    bench.add_argument("--m", type=int, required=True)
    bench.add_argument("--n", type=int, required=True)
    _add_model_args(bench)
    bench.add_argument("--trials", type=int, default=1)
    bench.add_argument("--rank", type=int, default=None, help="Planted rank (default: k).")
    bench.add_argument("--noise", type=float, default=DEFAULT_NOISE_LEVEL)
    bench.add_argument("--order", choices=ORDERS, default="row-major")
    bench.add_argument("--no-oracle", action="store_true", help="Never materialize the matrix.")
    bench.add_argument("--min-success-rate", type=float, default=None)
    bench.add_argument("--out", type=Path, default=None)

    serve = sub.add_parser("serve", help="Run the HTTP sketch service.")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=5000)

    push = sub.add_parser("push", help="Post a stream file to a running service.")
    push.add_argument("--stream", type=Path, required=True)
    _add_model_args(push)
    push.add_argument("--url", default=SERVICE_URL)
    push.add_argument("--batch-size", type=int, default=1000)
    push.add_argument("--factorize", action="store_true")
    return ap


def _privacy(args: argparse.Namespace, level: PrivacyLevel | None) -> PrivacyParams | None:
    if level is None:
        return None
    if args.epsilon is None or args.delta is None:
        raise ValueError(f"{level.value} needs --epsilon and --delta")
    return PrivacyParams(args.epsilon, args.delta, level, args.alpha)


def _ingest_file(args: argparse.Namespace, mode: Mode, privacy: PrivacyParams | None) -> SketchState:
    updates = read_stream(args.stream)
    state = init_state(updates.m, updates.n, args.k, args.alpha, args.seed, mode, privacy, args.c, args.sketch,
                       noise_seed=getattr(args, "noise_seed", None))
    ingest_all(state, updates)
    return state


def _print(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_gen(args: argparse.Namespace) -> int:
    source = LowRankSource(args.m, args.n, args.rank, args.noise, args.seed)
    a = source.matrix()
    if args.matrix is not None:
        linalg.write_matrix(args.matrix, a)
    count = emit_stream(a, args.order, args.out, args.seed)
    _print({"m": args.m, "n": args.n, "rank": args.rank, "updates": count, "stream": str(args.out)})
    return 0


def cmd_sketch(args: argparse.Namespace) -> int:
    mode = Mode(args.mode)
    state = _ingest_file(args, mode, _privacy(args, mode.privacy_level))
    args.out.mkdir(parents=True, exist_ok=True)
    linalg.write_matrix(args.out / "y_c.mat", state.y_c)
    if state.y_r is not None:
        linalg.write_matrix(args.out / "y_r.mat", state.y_r)
    linalg.write_matrix(args.out / "z.mat", state.z)
    summary = state.summary()
    (args.out / "state.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _print(summary)
    return 0


def cmd_factorize(args: argparse.Namespace) -> int:
    state = _ingest_file(args, Mode.NON_PRIVATE, None)
    reference = linalg.read_matrix(args.reference) if args.reference else None
    report = factorize(state, args.k, reference)
    t, v = state.effective_dims
    report.write(args.out, seed=args.seed, mode=state.mode.value, t=t, v=v)
    _print(report.to_json())
    return 0


def cmd_dp_factorize(args: argparse.Namespace) -> int:
    level = PrivacyLevel(args.level)
    state = _ingest_file(args, Mode(level.value), _privacy(args, level))
    reference = linalg.read_matrix(args.reference) if args.reference else None
    report = private_factorize(state, args.k, seed=args.noise_seed, reference=reference)
    t, v = state.effective_dims
    report.write(args.out, seed=args.seed, mode=state.mode.value, t=t, v=v)
    _print(report.to_json())
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    level = PrivacyLevel(args.level)
    state = init_state(args.m, args.n, args.k, args.alpha, args.seed, Mode(level.value),
                       _privacy(args, level), args.c, args.sketch)
    report = sensitivity_audit(level, audit_targets(state), args.trials, args.seed, args.alpha)
    payload = report.to_json()
    if args.out is not None:
        args.out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _print(payload)
    return 0 if report.passed else 1


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig(
        m=args.m, n=args.n, k=args.k, alpha=args.alpha, mode=args.mode,
        epsilon=args.epsilon, delta=args.delta, trials=args.trials, seed=args.seed,
        sketch=args.sketch, c=args.c, out=args.out, rank=args.rank, noise_level=args.noise,
        order=args.order, oracle=not args.no_oracle, min_success_rate=args.min_success_rate,
    )
    result = run_experiment(cfg)
    summary = {key: value for key, value in result.summary.items() if key != "records"}
    _print(summary)
    return 0 if result.passed else 1


def cmd_serve(args: argparse.Namespace) -> int:
    from sketchlrf.app import create_app

    create_app().run(host=args.host, port=args.port)
    return 0


def cmd_push(args: argparse.Namespace) -> int:
    from sketchlrf.client import create_stream, factorize_stream, push_stream

    updates = read_stream(args.stream)
    params = {
        "m": updates.m, "n": updates.n, "k": args.k, "alpha": args.alpha, "mode": args.mode,
        "seed": args.seed, "c": args.c, "sketch": args.sketch,
    }
    if args.mode != Mode.NON_PRIVATE.value:
        params |= {"epsilon": args.epsilon, "delta": args.delta}
    stream_id = create_stream(params, base_url=args.url)
    accepted = push_stream(stream_id, updates, args.batch_size, base_url=args.url)
    payload = {"id": stream_id, "accepted": accepted}
    if args.factorize:
        result = factorize_stream(stream_id, args.k, base_url=args.url)
        payload["report"] = {key: value for key, value in result.items() if key not in ("u", "v")}
    _print(payload)
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "sketch": cmd_sketch,
    "factorize": cmd_factorize,
    "dp-factorize": cmd_dp_factorize,
    "audit": cmd_audit,
    "bench": cmd_bench,
    "serve": cmd_serve,
    "push": cmd_push,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)]
    )
    try:
        return COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
