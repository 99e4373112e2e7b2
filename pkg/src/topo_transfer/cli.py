"""``topo-transfer`` command line.

Results go to stdout (or ``--out``) as canonical JSON: sorted keys, floats
with 17 significant digits, tool version and the resolved configuration
embedded. Logs and human-readable tables go to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .engine import ManifestSource, ScoringConfig, fused_scores, score_zoo
from .errors import ConfigError, TopoTransferError
from .fusion import DEFAULT_BETA, DEFAULT_GAMMA, DEFAULT_GRID, FusionConfig, calibrate_pilot, gate
from .grtd import MEDIAN, GrtdConfig
from .io import load_manifest
from .lbtc import DEFAULT_CONNECTIVITY, DEFAULT_PATCHES, DEFAULT_RADIUS, LbtcConfig
from .ranking import evaluate_zoo
from .sampling import DEFAULT_BUDGET, DEFAULT_FG_FRACTION, RNG_ALGORITHM, SamplingConfig
from .synth import FRAGMENTED, STRUCTURED, SynthRegime, SyntheticZoo, default_models

log = logging.getLogger("topo_transfer")

PILOT_CASES = 10


# -- canonical JSON ---------------------------------------------------------


def _encode(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"cannot encode non-finite float {x}")
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Path):
        return json.dumps(str(obj))
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {_encode(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj) -> str:
    return _encode(obj) + "\n"


def _emit(doc: dict, out: str | None) -> None:
    text = dumps(doc)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _envelope(command: str, config: dict, result: dict) -> dict:
    return {
        "tool": {"name": "topo-transfer", "version": __version__},
        "command": command,
        "config": config,
        "result": result,
    }


def _file_digest(path: Path) -> dict:
    return {"name": path.name, "sha256": hashlib.sha256(path.read_bytes()).hexdigest()}


# -- argument parsing -------------------------------------------------------


def _lambda(text: str):
    if text == MEDIAN:
        return MEDIAN
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'median' or a positive number") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError("lambda must be positive")
    return value


def _add_scoring_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, type=Path, help="zoo.json manifest")
    g = p.add_argument_group("sampling")
    g.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                   help="voxels sampled per stage per case (default: %(default)s) "
                        "[rationale: keeps the dense O(n^2) MST tractable]")
    g.add_argument("--fg-frac", type=float, default=DEFAULT_FG_FRACTION,
                   help="share of the budget for foreground classes (default: %(default)s) "
                        "[rationale: even foreground/background balance]")
    g.add_argument("--seed", type=int, default=0,
                   help=f"seed for voxel and patch draws (default: %(default)s) [rng: {RNG_ALGORITHM}]")
    g = p.add_argument_group("global score")
    g.add_argument("--lambda", dest="lam", type=_lambda, default=MEDIAN,
                   help="inter-class cap of the semantic graph, 'median' or a number (default: %(default)s) "
                        "[rationale: scale-adaptive, no unit-dependent constant]")
    g.add_argument("--decoder-stages", type=int, nargs="+", default=None,
                   help="decoder stage indices for the global score (default: all in the manifest)")
    g.add_argument("--zscore", action="store_true",
                   help="z-score features per stage before distances (default: off) "
                        "[rationale: raw Euclidean geometry unless asked]")
    g = p.add_argument_group("local score")
    g.add_argument("--patches", type=int, default=DEFAULT_PATCHES,
                   help="boundary patches per case (default: %(default)s) [rationale: cheap local MSTs]")
    g.add_argument("--radius", type=int, default=DEFAULT_RADIUS,
                   help="patch Chebyshev radius in voxels (default: %(default)s) "
                        "[rationale: 5^3 window holds both classes at encoder resolution]")
    g.add_argument("--connectivity", type=int, choices=(6, 26), default=DEFAULT_CONNECTIVITY,
                   help="boundary neighbourhood (default: %(default)s) [rationale: thinnest boundary band]")
    g.add_argument("--encoder-stages", type=int, nargs="+", default=None,
                   help="encoder stage indices for the local score (default: all in the manifest)")
    g.add_argument("--max-cases", type=int, default=None, help="score only the first N cases (default: all)")


def _add_fusion_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("fusion")
    g.add_argument("--gamma", type=float, default=None,
                   help=f"gate slope on ln|C| (default: {DEFAULT_GAMMA}) "
                        "[rationale: alpha=0.5 at one class, mild global bias as classes grow]")
    g.add_argument("--beta", type=float, default=None, help=f"gate offset (default: {DEFAULT_BETA})")
    g.add_argument("--fusion", type=Path, default=None,
                   help="JSON from 'calibrate'; supplies gamma and beta unless given explicitly")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topo-transfer",
        description="Rank pre-trained encoders for a segmentation task by feature/label topology.",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="models scored concurrently; never changes results (default: %(default)s)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    parser.add_argument("--version", action="version", version=f"topo-transfer {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="per-model global/local/fused scores")
    _add_scoring_args(p)
    _add_fusion_args(p)
    p.add_argument("--metric", choices=("all", "grtd", "lbtc", "fused"), default="all",
                   help="which score columns to report (default: %(default)s)")
    p.add_argument("--details", action="store_true", help="include per-stage and per-patch breakdowns")
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("rank", help="models sorted by score")
    _add_scoring_args(p)
    _add_fusion_args(p)
    p.add_argument("--metric", choices=("fused", "grtd", "lbtc"), default="fused",
                   help="ranking key (default: %(default)s)")
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("eval", help="weighted Kendall tau of scores against manifest Dice")
    p.add_argument("--zoo", required=True, type=Path, help="zoo.json with per-model 'dice'")
    p.add_argument("--scores", required=True, type=Path, help="output of 'score' or 'rank'")
    p.add_argument("--metric", choices=("fused", "grtd", "lbtc"), default="fused",
                   help="score column to evaluate (default: %(default)s)")
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("calibrate", help="fit gamma/beta on pilot cases")
    _add_scoring_args(p)
    p.add_argument("--grid", default="default",
                   help="'default' (gamma, beta in {-2..2}^2) or a JSON file of [gamma, beta] pairs "
                        "[rationale: small exhaustive deterministic search]")
    p.add_argument("--pilot-cases", type=int, default=PILOT_CASES,
                   help="cases used as the pilot set (default: %(default)s)")
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("synth", help="write a synthetic zoo with known quality order")
    p.add_argument("--regime", choices=(FRAGMENTED, STRUCTURED), required=True)
    p.add_argument("--models", type=int, default=7, help="zoo size (default: %(default)s)")
    p.add_argument("--cases", type=int, default=1, help="cases per task (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default: %(default)s)")
    p.add_argument("--size", type=int, default=32, help="cubic volume edge in voxels (default: %(default)s)")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    return parser


# -- commands ---------------------------------------------------------------


def _scoring_config(args) -> ScoringConfig:
    from .types import StageRole

    dec = None if args.decoder_stages is None else tuple(StageRole.decoder(i) for i in args.decoder_stages)
    enc = None if args.encoder_stages is None else tuple(StageRole.encoder(i) for i in args.encoder_stages)
    if args.budget < 2:
        raise ConfigError(f"--budget must be >= 2, got {args.budget}")
    if not 0 <= args.seed < 2**64:
        raise ConfigError("--seed must fit in 64 unsigned bits")
    if args.max_cases is not None and args.max_cases < 1:
        raise ConfigError("--max-cases must be >= 1")
    return ScoringConfig(
        sampling=SamplingConfig(args.budget, args.fg_frac, args.seed),
        grtd=GrtdConfig(args.lam, dec, args.zscore),
        lbtc=LbtcConfig(args.patches, args.radius, args.connectivity, enc, args.seed, args.zscore),
        max_cases=args.max_cases,
        threads=max(1, args.threads),
    )


def _fusion_config(args, num_classes: int) -> FusionConfig:
    gamma, beta = DEFAULT_GAMMA, DEFAULT_BETA
    if args.fusion is not None:
        try:
            doc = json.loads(Path(args.fusion).read_text())
            res = doc.get("result", doc)
            gamma, beta = float(res["gamma"]), float(res["beta"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read fusion config {args.fusion}: {exc}") from exc
    if args.gamma is not None:
        gamma = args.gamma
    if args.beta is not None:
        beta = args.beta
    return FusionConfig(gamma, beta, num_classes)


def _score(args):
    manifest = load_manifest(args.manifest)
    cfg = _scoring_config(args)
    fusion = _fusion_config(args, manifest.task.num_classes)
    metrics = score_zoo(ManifestSource(manifest), cfg)
    scores = fused_scores(metrics, fusion)
    config = {
        "manifest": _file_digest(args.manifest),
        "scoring": cfg.to_dict(),
        "fusion": fusion.to_dict(),
        "rng": RNG_ALGORITHM,
    }
    return manifest, metrics, scores, config


def cmd_score(args) -> dict:
    manifest, metrics, scores, config = _score(args)
    keep = {"all": ("grtd", "lbtc", "fused"), "grtd": ("grtd",), "lbtc": ("lbtc",), "fused": ("fused",)}[args.metric]
    rows = []
    for s, m in zip(scores, metrics):
        d = s.to_dict()
        row = {"model_id": s.model_id, "alpha": s.alpha, **{k: d[k] for k in keep}}
        if m.truth is not None:
            row["dice"] = m.truth
        if args.details:
            row["grtd_cases"] = [r.to_dict() for r in m.grtd_cases]
            row["lbtc_detail"] = m.lbtc_result.to_dict()
        rows.append(row)
    config["metric"] = args.metric
    return _envelope("score", config, {"task": manifest.task.name, "num_classes": manifest.task.num_classes,
                                       "scores": rows})


def cmd_rank(args) -> dict:
    manifest, metrics, scores, config = _score(args)
    key = args.metric
    ordered = sorted(scores, key=lambda s: (-getattr(s, key), s.model_id))
    ranking = [{"rank": k + 1, "score": getattr(s, key), **s.to_dict()} for k, s in enumerate(ordered)]
    for row in ranking:
        log.info("%2d. %-24s %.6f", row["rank"], row["model_id"], row["score"])
    config["metric"] = key
    return _envelope("rank", config, {"task": manifest.task.name, "num_classes": manifest.task.num_classes,
                                      "ranking": ranking})


def _read_scores(path: Path, metric: str) -> dict[str, float]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read scores {path}: {exc}") from exc
    res = doc.get("result", doc)
    rows = res.get("scores") or res.get("ranking")
    if not isinstance(rows, list):
        raise ConfigError(f"{path} has neither 'scores' nor 'ranking'")
    try:
        return {str(r["model_id"]): float(r[metric]) for r in rows}
    except KeyError as exc:
        raise ConfigError(f"{path}: rows lack column {exc}") from exc


def cmd_eval(args) -> dict:
    manifest = load_manifest(args.zoo)
    scores = _read_scores(args.scores, args.metric)
    report = evaluate_zoo(scores, {m.model_id: m.ground_truth_performance for m in manifest.models})
    sys.stderr.write(report.table() + "\n")
    config = {"zoo": _file_digest(args.zoo), "scores": _file_digest(args.scores), "metric": args.metric}
    return _envelope("eval", config, report.to_dict())


def _read_grid(spec: str) -> list[tuple[float, float]]:
    if spec == "default":
        return list(DEFAULT_GRID)
    try:
        pairs = json.loads(Path(spec).read_text())
        grid = [(float(g), float(b)) for g, b in pairs]
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad grid file {spec}: {exc}") from exc
    if not grid:
        raise ConfigError("calibration grid is empty")
    return grid


def cmd_calibrate(args) -> dict:
    manifest = load_manifest(args.manifest)
    cfg = _scoring_config(args)
    grid = _read_grid(args.grid)
    nc = manifest.task.num_classes
    config = {
        "manifest": _file_digest(args.manifest),
        "scoring": cfg.to_dict(),
        "grid": [list(p) for p in grid],
        "pilot_cases": args.pilot_cases,
        "rng": RNG_ALGORITHM,
    }
    missing = [m.model_id for m in manifest.models if m.ground_truth_performance is None]
    if missing:
        log.warning("no ground-truth dice for %s; calibration skipped, using defaults", ", ".join(missing))
        fallback = FusionConfig(DEFAULT_GAMMA, DEFAULT_BETA, nc)
        return _envelope("calibrate", config, {**fallback.to_dict(), "calibrated": False})
    cases = range(min(args.pilot_cases, manifest.task.num_cases))
    metrics = score_zoo(ManifestSource(manifest), cfg, cases=cases)
    cal = calibrate_pilot([(m.model_id, m.grtd, m.lbtc, m.truth) for m in metrics], grid, nc)
    log.info("calibrated gamma=%g beta=%g alpha=%.4f pilot tau_w=%.4f",
             cal.config.gamma, cal.config.beta, gate(cal.config), cal.tau_w)
    return _envelope("calibrate", config, {**cal.to_dict(), "calibrated": True})


def cmd_synth(args) -> dict:
    if args.size < 8 or args.size % 2:
        raise ConfigError("--size must be an even number >= 8")
    if args.cases < 1:
        raise ConfigError("--cases must be >= 1")
    regime = SynthRegime.named(args.regime, shape=(args.size,) * 3)
    zoo = SyntheticZoo(regime, default_models(args.models), args.seed, args.cases)
    path = zoo.write(args.out)
    config = {"regime": regime.to_dict(), "models": args.models, "cases": args.cases, "seed": args.seed,
              "rng": RNG_ALGORITHM}
    return _envelope("synth", config, {
        "manifest": _file_digest(path),
        "models": [{"model_id": m.model_id, "quality": m.quality, "dice": m.ground_truth} for m in zoo.models],
    })


COMMANDS = {"score": cmd_score, "rank": cmd_rank, "eval": cmd_eval, "calibrate": cmd_calibrate, "synth": cmd_synth}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        doc = COMMANDS[args.command](args)
        _emit(doc, getattr(args, "out", None) if args.command != "synth" else None)
    except TopoTransferError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
