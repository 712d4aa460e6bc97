"""Command-line entry point: ``satband <command> [options]``.

Exit status is 0 on success, 1 when a component rejects its input
(corrupt bitstream, infeasible scenario, unreadable image...) and 2 for
usage mistakes and configuration files that fail schema validation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time

import jsonschema

from . import __version__
from .allocator import OBJECTIVES, Customer, Scenario, dissatisfaction, evaluate_objective, satisfaction_levels
from .allocator import BandwidthAllocator
from .codec import box_mask, decode_image, encode_image, encode_to_size, quality_metrics, selection_count
from .imaging import dyadic_size, read_image, write_image
from .ranking import ObjectRanker, Repository, scm
from .saliency import SaliencyAnnotation, read_annotation
from .satisfaction import (
    DEFAULT_DELAY_MAX,
    DEFAULT_DELTA_HALF,
    DEFAULT_GAMMA,
    ParametricSatisfaction,
    QualityInputs,
    SurveyTable,
    model_from_dict,
    train_satisfaction,
    synthesize_survey,
)

log = logging.getLogger("satband")

REPORT_COLUMNS = ("customer_id", "F_bits", "A_bits_per_s", "delay_s", "iq", "scm", "us", "tau",
                  "dissatisfaction")


class UsageError(Exception):
    """Bad arguments or a configuration that fails validation (exit 2)."""


_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["bandwidth_bits_per_s", "objective", "customers"],
    "additionalProperties": False,
    "properties": {
        "bandwidth_bits_per_s": _POSITIVE,
        "objective": {"enum": list(OBJECTIVES)},
        "a_min": {"type": "number", "minimum": 0},
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "strategy": {"enum": ["sa", "ga", "tabu", "bruteforce", "baseline"]},
                "seed": {"type": "integer", "minimum": 0},
                "params": {"type": "object"},
                "grid_steps": {"type": "integer", "minimum": 1, "maximum": 64},
            },
        },
        "model": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["parametric", "knn"]},
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"delta_half": _POSITIVE, "gamma": _POSITIVE},
                },
                "survey_csv_path": {"type": "string"},
                "model_path": {"type": "string"},
                "k": {"type": "integer", "minimum": 1},
            },
            "if": {"properties": {"kind": {"const": "knn"}}},
            "then": {"anyOf": [{"required": ["survey_csv_path"]}, {"required": ["model_path"]}]},
        },
        "codec": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "levels": {"type": "integer", "minimum": 1, "maximum": 8},
                "budget": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "ranking_levels": {"type": "integer", "minimum": 0, "maximum": 4},
            },
        },
        "customers": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "tau", "s_orig", "r_orig", "s_sent", "r_sent"],
                "additionalProperties": False,
                "anyOf": [{"required": ["image_path"]}, {"required": ["file_bits"]}],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "tau": {"type": "number", "minimum": 0, "maximum": 1},
                    "image_path": {"type": "string"},
                    "annotations_path": {"type": "string"},
                    "repository_manifest": {"type": "string"},
                    "q": {"type": "integer", "minimum": 1},
                    "scm": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "budget": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "weights": {"type": "array", "items": {"type": "number", "minimum": 0},
                                "minItems": 3, "maxItems": 3},
                    "s_orig": _POSITIVE,
                    "r_orig": _POSITIVE,
                    "s_sent": _POSITIVE,
                    "r_sent": _POSITIVE,
                    "file_bits": _POSITIVE,
                },
            },
        },
    },
}


def _json_path(error) -> str:
    path = "$"
    for part in error.absolute_path:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def validate_scenario(config) -> None:
    """Raise ``UsageError`` listing every schema violation with its JSON path."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        lines = [f"{_json_path(e)}: {e.message}" for e in errors]
        raise UsageError("scenario config is invalid:\n  " + "\n  ".join(lines))


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from None


def _fmt(value: float) -> str:
    return repr(float(value))


# scenario assembly

def _resolve(base: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base, path)


def _build_model(cfg: dict | None, base: str):
    cfg = cfg or {"kind": "parametric"}
    if cfg["kind"] == "parametric":
        params = cfg.get("params", {})
        return ParametricSatisfaction(params.get("delta_half", DEFAULT_DELTA_HALF),
                                      params.get("gamma", DEFAULT_GAMMA)).fit()
    if "model_path" in cfg:
        return model_from_dict(_load_json(_resolve(base, cfg["model_path"])))
    with open(_resolve(base, cfg["survey_csv_path"])) as fh:
        table = SurveyTable.from_csv(fh.read())
    return train_satisfaction(table, cfg.get("k", 5))


def _customer_from_config(item: dict, base: str, codec_cfg: dict) -> Customer:
    cid = item["id"]
    ann = None
    if "annotations_path" in item:
        ann = read_annotation(_resolve(base, item["annotations_path"]))
    image = read_image(_resolve(base, item["image_path"])) if "image_path" in item else None
    labels = ann.labels if ann is not None else []
    if "repository_manifest" in item:
        if image is None or ann is None:
            raise ValueError(f"customer {cid}: repository ranking needs image_path and annotations_path")
        repo = Repository.from_manifest(_resolve(base, item["repository_manifest"]), owner=cid)
        ranking = ObjectRanker(codec_cfg.get("ranking_levels", 2)).fit(repo).rank(image, ann)
        labels = ranking.ranked_labels
        log.info("customer %s ranking: %s", cid, labels)
    p = len(labels)
    if p:
        q = item.get("q", p)
        concordance = scm(q, p)
        selected = labels[:q]
    else:
        q = item.get("q", 1)
        concordance = item.get("scm", 1.0)
        selected = None
    if image is not None:
        levels = codec_cfg.get("levels", 3)
        budget = item.get("budget", codec_cfg.get("budget", 1.0))
        data = encode_image(image, ann, levels, budget, selected)
        file_bits = 8.0 * len(data)
        log.info("customer %s: encoded %d bytes at budget %s", cid, len(data), budget)
    else:
        file_bits = float(item["file_bits"])
    weights = item.get("weights", (1 / 3, 1 / 3, 1 / 3))
    quality = QualityInputs(item["s_orig"], item["r_orig"], item["s_sent"], item["r_sent"], concordance, weights)
    return Customer(cid, item["tau"], file_bits, quality, q, max(p, q))


def scenario_from_config(config: dict, base: str = ".") -> Scenario:
    validate_scenario(config)
    ids = [c["id"] for c in config["customers"]]
    if len(set(ids)) != len(ids):
        raise UsageError("scenario config is invalid:\n  $.customers: customer ids must be unique")
    model = _build_model(config.get("model"), base)
    codec_cfg = config.get("codec", {})
    customers = [_customer_from_config(item, base, codec_cfg) for item in config["customers"]]
    return Scenario(customers, config["bandwidth_bits_per_s"], config["objective"], model,
                    config.get("a_min", 0.0))


def run_scenario(config: dict, base: str = ".", seed: int | None = None) -> tuple[str, dict]:
    """Solve a scenario config; returns the report CSV text and the footer dict."""
    started = time.perf_counter()
    sc = scenario_from_config(config, base)
    opt = config.get("optimizer", {})
    seed = opt.get("seed", 0) if seed is None else seed
    est = BandwidthAllocator(opt.get("strategy", "sa"), seed, opt.get("params"), opt.get("grid_steps", 41))
    alloc = est.fit(sc).allocation_
    a = alloc.a
    if math.fsum(a) > sc.total_bandwidth or float(a.sum()) > sc.total_bandwidth:
        raise RuntimeError("allocator returned a vector above the bandwidth budget")
    us = satisfaction_levels(a, sc)
    dis = dissatisfaction(a, sc)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for c, ai, ui, di in zip(sc.customers, a, us, dis):
        writer.writerow([c.id, _fmt(c.file_bits), _fmt(ai), _fmt(c.file_bits / ai), _fmt(c.iq),
                         _fmt(c.quality.scm), _fmt(ui), _fmt(c.tau), _fmt(di)])
    footer = {
        "objective_value": evaluate_objective(a, sc),
        "evaluations": alloc.evaluations,
        "wall_ms": round((time.perf_counter() - started) * 1000.0, 3),
        "seed": seed,
    }
    return buf.getvalue(), footer


# commands

def cmd_encode(args) -> int:
    image = read_image(args.input)
    ann = read_annotation(args.annotations) if args.annotations else None
    selected = args.select.split(",") if args.select else None
    if args.target_bytes is not None:
        data, budget = encode_to_size(image, args.target_bytes, ann, args.levels, selected)
    else:
        budget = args.budget
        data = encode_image(image, ann, args.levels, budget, selected)
    with open(args.output, "wb") as fh:
        fh.write(data)
    total = dyadic_size(image.height, args.levels) * dyadic_size(image.width, args.levels)
    stats = {"bytes": len(data), "coefficients": selection_count(total, budget), "budget": budget}
    if args.compare:
        recon = decode_image(data)
        stats["psnr_db"] = quality_metrics(image, recon)["psnr_db"]
        eff = ann.select(selected) if ann is not None else SaliencyAnnotation()
        stats["regions"] = {
            b.label: quality_metrics(image, recon, box_mask((image.height, image.width), b))["psnr_db"]
            for b in eff.boxes
            if box_mask((image.height, image.width), b).any()
        }
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_decode(args) -> int:
    with open(args.input, "rb") as fh:
        data = fh.read()
    image = decode_image(data)
    write_image(args.output, image)
    log.info("decoded %dx%d %s", image.width, image.height, image.color_space)
    return 0


def cmd_rank(args) -> int:
    image = read_image(args.image)
    ann = read_annotation(args.annotations)
    repo = Repository.from_manifest(args.repo_manifest)
    ranking = ObjectRanker(args.levels).fit(repo).rank(image, ann)
    print(json.dumps(ranking.to_dict(), indent=2))
    return 0


def cmd_survey_gen(args) -> int:
    table = synthesize_survey(args.rows, args.delta_half, args.gamma, args.noise, args.seed or 0, args.delay_max)
    with open(args.output, "w", newline="") as fh:
        fh.write(table.to_csv())
    log.info("wrote %d survey rows", len(table))
    return 0


def cmd_train(args) -> int:
    with open(args.survey) as fh:
        table = SurveyTable.from_csv(fh.read())
    model = train_satisfaction(table, args.k)
    with open(args.output, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")
    return 0


def cmd_simulate(args) -> int:
    config = _load_json(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    report, footer = run_scenario(config, base, args.seed)
    with open(args.out_report, "w", newline="") as fh:
        fh.write(report)
    footer_path = args.out_footer or os.path.splitext(args.out_report)[0] + ".footer.json"
    with open(footer_path, "w") as fh:
        json.dump(footer, fh, indent=1)
        fh.write("\n")
    print(json.dumps(footer, sort_keys=True))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")

    parser = _Parser(prog="satband", description="Saliency-guided image codec and bandwidth allocation.",
                     parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", parents=[common], help="compress a PNM image to an SGWC bitstream")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--annotations")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--budget", type=float, default=1.0, help="fraction of coefficients to keep")
    p.add_argument("--target-bytes", type=int, help="search the budget for this stream size")
    p.add_argument("--select", help="comma-separated labels to keep salient")
    p.add_argument("--compare", action="store_true", help="report PSNR against the input")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="decode an SGWC bitstream to PNM")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("rank", parents=[common], help="rank an image's objects against a repository")
    p.add_argument("--image", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--repo-manifest", required=True)
    p.add_argument("--levels", type=int, default=2)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("survey-gen", parents=[common], help="synthesise a satisfaction survey CSV")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--rows", type=int, default=500)
    p.add_argument("--delta-half", type=float, default=DEFAULT_DELTA_HALF)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--delay-max", type=float, default=DEFAULT_DELAY_MAX)
    p.set_defaults(func=cmd_survey_gen)

    p = sub.add_parser("train", parents=[common], help="fit a k-NN satisfaction model to a survey")
    p.add_argument("--survey", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", parents=[common], help="run a bandwidth allocation scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out-report", required=True)
    p.add_argument("--out-footer", help="footer JSON path (default: <report>.footer.json)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"satband: error: {exc}", file=sys.stderr)
        return 2
    args.seed = getattr(args, "seed", None)
    args.verbose = getattr(args, "verbose", False)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"satband: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"satband: {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
