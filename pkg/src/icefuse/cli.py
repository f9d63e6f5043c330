"""Command-line surface binding bundles, configs and the harness together.

Subcommands: predict, evaluate, ablate, validate-bundle, synth.

Configuration is a flat key-value file (``key = value``, ``#`` comments);
command-line flags override file values and the fully resolved
configuration is echoed into every report. Human-readable tables go to
standard output, machine-readable CSV/JSON only to files.

Exit codes: 0 success, 2 bad configuration or arguments, 3 bundle missing
or invalid, 4 sample id out of range.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from .bundle import EmbeddingBundle, read_bundle, validate_bundle_file, write_bundle
from .errors import BundleError, IcefuseError, InvalidSpecError
from .evaluation import MAX_K, ablate, evaluate, quadrant_report
from .fusion import IceConfig, ice_predict
from .prototypes import score_image
from .synth import SynthSpec, synth_bundle
from .vecmath import centroid

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_BAD_BUNDLE = 3
EXIT_BAD_ID = 4

CONFIG_KEYS = (
    "bundle",
    "bundles",
    "K",
    "xi",
    "epsilon",
    "lambda_mode",
    "tau",
    "upsilon",
    "methods",
    "report_json",
    "report_csv",
    "records_jsonl",
    "seed",
    "workers",
    "topk_ks",
)


class ConfigError(Exception):
    pass


def _parse_config_file(path: str) -> dict:
    values: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, val = line.partition("=")
                key, val = key.strip(), val.strip()
                if key not in CONFIG_KEYS:
                    raise ConfigError(
                        f"{path}:{lineno}: unknown key {key!r} "
                        f"(known: {', '.join(CONFIG_KEYS)})"
                    )
                values[key] = val
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return values


def _parse_lambda_mode(text: str) -> tuple[str, float]:
    """'adaptive' | 'image_only' | 'fixed' | 'fixed:<value>'."""
    mode, _, payload = text.partition(":")
    if mode not in ("adaptive", "image_only", "fixed"):
        raise ConfigError(
            f"lambda_mode must be adaptive, image_only or fixed[:value], got {text!r}"
        )
    lam = 0.0
    if payload:
        if mode != "fixed":
            raise ConfigError(f"only fixed lambda_mode takes a value, got {text!r}")
        try:
            lam = float(payload)
        except ValueError as exc:
            raise ConfigError(f"bad fixed lambda value in {text!r}") from exc
    return mode, lam


@dataclasses.dataclass
class RunConfig:
    """Fully resolved run parameters (defaults < config file < flags)."""

    bundles: tuple[tuple[str, str | None], ...] = ()  # (path, group tag)
    k: int = 5
    xi: float = 0.08
    epsilon: float = 1e-12
    lambda_mode: str = "adaptive"
    lambda_fixed: float = 0.0
    tau: float | None = None  # None: use each bundle's stored hint
    upsilon: int | None = None
    methods: tuple[str, ...] = ("image_only", "caption_only", "ice")
    report_json: str | None = None
    report_csv: str | None = None
    records_jsonl: str | None = None
    seed: int = 0
    workers: int = 0  # 0: all available cores
    topk_ks: tuple[int, ...] | None = None

    def ice_config(self, tau_fallback: float) -> IceConfig:
        return IceConfig(
            k=self.k,
            xi=self.xi,
            epsilon=self.epsilon,
            lambda_mode=self.lambda_mode,
            lambda_fixed=self.lambda_fixed,
            tau=self.tau if self.tau is not None else tau_fallback,
        )

    def echo(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["bundles"] = [
            {"path": p, "group": g} for p, g in self.bundles
        ]
        return doc


def _parse_bundle_arg(text: str) -> tuple[str, str | None]:
    """'path' or 'path@group' with group in {cross, domain}."""
    path, _, group = text.partition("@")
    if group:
        aliases = {
            "cross": "cross_dataset",
            "cross_dataset": "cross_dataset",
            "domain": "domain_generalization",
            "domain_generalization": "domain_generalization",
        }
        if group not in aliases:
            raise ConfigError(
                f"bundle group must be cross or domain, got {group!r}"
            )
        return path, aliases[group]
    return path, None


def _split_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    file_values = _parse_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(flag_name: str, file_key: str):
        flag = getattr(args, flag_name, None)
        if flag is not None:
            return flag
        return file_values.get(file_key)

    bundles: list[tuple[str, str | None]] = []
    file_bundles = file_values.get("bundles") or file_values.get("bundle")
    if file_bundles:
        bundles = [_parse_bundle_arg(b) for b in _split_list(file_bundles)]
    if getattr(args, "bundle", None):
        bundles = [_parse_bundle_arg(b) for b in args.bundle]
    cfg.bundles = tuple(bundles)

    try:
        if (v := pick("k", "K")) is not None:
            cfg.k = int(v)
        if (v := pick("xi", "xi")) is not None:
            cfg.xi = float(v)
        if (v := pick("epsilon", "epsilon")) is not None:
            cfg.epsilon = float(v)
        if (v := pick("lambda_mode", "lambda_mode")) is not None:
            cfg.lambda_mode, cfg.lambda_fixed = _parse_lambda_mode(str(v))
        if (v := pick("tau", "tau")) is not None:
            cfg.tau = float(v)
        if (v := pick("upsilon", "upsilon")) is not None:
            cfg.upsilon = int(v)
        if (v := pick("seed", "seed")) is not None:
            cfg.seed = int(v)
        if (v := pick("workers", "workers")) is not None:
            cfg.workers = int(v)
        if (v := pick("topk_ks", "topk_ks")) is not None:
            parts = _split_list(v) if isinstance(v, str) else list(v)
            cfg.topk_ks = tuple(int(p) for p in parts)
        methods = pick("methods", "methods")
        if methods is not None:
            cfg.methods = tuple(
                _split_list(methods) if isinstance(methods, str) else methods
            )
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}") from exc

    if (v := pick("report_json", "report_json")) is not None:
        cfg.report_json = str(v)
    if (v := pick("report_csv", "report_csv")) is not None:
        cfg.report_csv = str(v)
    if (v := pick("records_jsonl", "records_jsonl")) is not None:
        cfg.records_jsonl = str(v)

    # surface invalid combinations now, with the field named
    if cfg.k < 1:
        raise ConfigError(f"K must be >= 1, got {cfg.k}")
    if cfg.xi < 0:
        raise ConfigError(f"xi must be >= 0, got {cfg.xi}")
    if not cfg.epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {cfg.epsilon}")
    if cfg.tau is not None and not cfg.tau > 0:
        raise ConfigError(f"tau must be > 0, got {cfg.tau}")
    if cfg.upsilon is not None and cfg.upsilon < 1:
        raise ConfigError(f"upsilon must be >= 1, got {cfg.upsilon}")
    if cfg.workers < 0:
        raise ConfigError(f"workers must be >= 0, got {cfg.workers}")
    return cfg


def _effective_workers(requested: int) -> int:
    return requested if requested > 0 else (os.cpu_count() or 1)


def _load_bundle(path: str) -> EmbeddingBundle:
    try:
        return read_bundle(path)
    except OSError as exc:
        raise BundleError(f"{path}: {exc}") from exc


def _write_text_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------- predict


def cmd_predict(args) -> int:
    run = resolve_run_config(args)
    if len(run.bundles) != 1:
        raise ConfigError("predict needs exactly one --bundle")
    bundle = _load_bundle(run.bundles[0][0])
    cfg = run.ice_config(bundle.tau_hint)
    upsilon = run.upsilon if run.upsilon is not None else bundle.n_captions
    if not 1 <= upsilon <= bundle.n_captions:
        raise ConfigError(
            f"upsilon {upsilon} outside [1, {bundle.n_captions}] stored captions"
        )

    try:
        ids = [int(part) for part in _split_list(args.ids)]
    except ValueError as exc:
        raise ConfigError(f"bad sample id list {args.ids!r}") from exc
    if not ids:
        raise ConfigError("no sample ids given")
    for sid in ids:
        if not 0 <= sid < bundle.n_images:
            print(
                f"error: sample id {sid} out of range [0, {bundle.n_images})",
                file=sys.stderr,
            )
            return EXIT_BAD_ID

    protos = bundle.prototype_set()
    for sid in ids:
        s_img = score_image(
            bundle.image_embeddings[sid].astype(np.float64), protos, cfg.tau
        )
        cap = bundle.caption_embeddings[sid, :upsilon].astype(np.float64)
        cap_centroid = centroid(cap)
        if float(np.linalg.norm(cap_centroid)) < 1e-30:
            s_cap = np.full(bundle.n_classes, 1.0 / bundle.n_classes)
            pred = ice_predict(
                s_img, s_cap, dataclasses.replace(cfg, lambda_mode="image_only")
            )
        else:
            s_cap = score_image(cap_centroid, protos, cfg.tau)
            pred = ice_predict(s_img, s_cap, cfg)
        topk = ",".join(str(i) for i in pred.top_k_indices)
        print(
            f"id={sid} image={pred.image_argmax} topk=[{topk}] "
            f"lambda={pred.lambda_used:.6f} ice={pred.predicted_class} "
            f"label={int(bundle.labels[sid])}"
        )
    return EXIT_OK


# --------------------------------------------------------------- evaluate


def _report_doc(report, group: str | None, path: str, exemplars: dict | None) -> dict:
    doc = {
        "bundle": report.bundle_label,
        "path": path,
        "group": group,
        "config": report.config,
        "methods": [
            {
                "method": mr.method,
                "kind": mr.kind,
                "reduction": mr.reduction,
                "correct": mr.correct,
                "total": mr.total,
                "top1_pct": mr.top1_pct,
                "topk_pct": {str(k): v for k, v in mr.topk_pct.items()},
            }
            for mr in report.methods
        ],
        "quadrants": dataclasses.asdict(report.quadrants),
        "quadrant_exemplars": exemplars,
        "fallback_count": report.fallback_count,
        "warnings": list(report.warnings),
        "records": {
            reduction: [dataclasses.asdict(r) for r in recs]
            for reduction, recs in report.records.items()
        },
    }
    return doc


def _methods_csv(reports: list[tuple[str, object]]) -> str:
    k_cols = sorted({k for _, rep in reports for mr in rep.methods for k in mr.topk_pct})
    header = (
        ["bundle", "method", "reduction", "top1"]
        + [f"topk_{k}" for k in k_cols]
        + ["K", "xi", "epsilon", "lambda_mode", "lambda_fixed", "tau", "upsilon"]
    )
    lines = [",".join(header)]
    for path, rep in reports:
        c = rep.config
        for mr in rep.methods:
            row = [
                rep.bundle_label,
                mr.method,
                mr.reduction,
                repr(mr.top1_pct),
            ]
            for k in k_cols:
                row.append("" if k not in mr.topk_pct else repr(mr.topk_pct[k]))
            row += [
                str(c["K"]),
                repr(c["xi"]),
                repr(c["epsilon"]),
                c["lambda_mode"],
                repr(c["lambda_fixed"]),
                repr(c["tau"]),
                str(c["upsilon"]),
            ]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _print_method_table(reports) -> None:
    methods = []
    for _, rep in reports:
        for mr in rep.methods:
            if mr.method not in methods:
                methods.append(mr.method)
    name_w = max(len("bundle"), *(len(rep.bundle_label) for _, rep in reports))
    header = "bundle".ljust(name_w) + "".join(m.rjust(18) for m in methods)
    print(header)
    for _, rep in reports:
        row = rep.bundle_label.ljust(name_w)
        by_name = {mr.method: mr for mr in rep.methods}
        for m in methods:
            mr = by_name.get(m)
            row += (f"{mr.top1_pct:.2f}" if mr else "-").rjust(18)
        print(row)


def cmd_evaluate(args) -> int:
    run = resolve_run_config(args)
    if not run.bundles:
        raise ConfigError("evaluate needs at least one --bundle")
    workers = _effective_workers(run.workers)

    bundles = [(path, group, _load_bundle(path)) for path, group in run.bundles]

    reports = []
    for i, (path, group, bundle) in enumerate(bundles):
        records_jsonl = run.records_jsonl
        if records_jsonl and len(bundles) > 1:
            stem, ext = os.path.splitext(records_jsonl)
            records_jsonl = f"{stem}.{i}{ext}"
        cfg = run.ice_config(bundle.tau_hint)
        report = evaluate(
            bundle,
            cfg,
            methods=run.methods,
            upsilon=run.upsilon,
            topk_ks=run.topk_ks,
            workers=workers,
            bundle_label=bundle.manifest.dataset or os.path.basename(path),
            records_jsonl=records_jsonl,
        )
        reports.append((path, group, report, bundle))

    _print_method_table([(p, r) for p, _, r, _ in reports])
    for _, _, report, _ in reports:
        for warning in report.warnings:
            print(f"warning: {report.bundle_label}: {warning}")

    groups: dict[str, list] = {}
    for _, group, report, _ in reports:
        if group:
            groups.setdefault(group, []).append(report)
    if len(groups) >= 1 and len(reports) > 1:
        print()
        for group_name in ("cross_dataset", "domain_generalization"):
            reps = groups.get(group_name)
            if not reps:
                continue
            methods = [mr.method for mr in reps[0].methods]
            avgs = []
            for m in methods:
                vals = [r.method(m).top1_pct for r in reps if any(x.method == m for x in r.methods)]
                avgs.append(f"{m}={sum(vals) / len(vals):.2f}")
            print(f"average[{group_name}] " + " ".join(avgs))

    if run.report_json:
        docs = []
        for path, group, report, bundle in reports:
            exemplars = None
            if args.quadrant_exemplars > 0:
                primary = next(iter(report.records.values()))
                exemplars = quadrant_report(
                    primary,
                    caption_texts=bundle.caption_texts,
                    max_exemplars=args.quadrant_exemplars,
                )["exemplars"]
            docs.append(_report_doc(report, group, path, exemplars))
        doc = {
            "created_at": datetime.now(timezone.utc).isoformat(),
            "run_config": run.echo(),
            "bundles": docs,
        }
        _write_text_atomic(run.report_json, json.dumps(doc, indent=2, sort_keys=True))
    if run.report_csv:
        _write_text_atomic(
            run.report_csv, _methods_csv([(p, r) for p, _, r, _ in reports])
        )
    return EXIT_OK


# ----------------------------------------------------------------- ablate


def cmd_ablate(args) -> int:
    run = resolve_run_config(args)
    if len(run.bundles) != 1:
        raise ConfigError("ablate needs exactly one --bundle")
    bundle = _load_bundle(run.bundles[0][0])
    cfg = run.ice_config(bundle.tau_hint)
    workers = _effective_workers(run.workers)

    raw_values = _split_list(args.values)
    if not raw_values:
        raise ConfigError("no ablation values given")
    if args.axis == "K":
        values = []
        for v in raw_values:
            if v == MAX_K:
                values.append(v)
            else:
                try:
                    values.append(int(v))
                except ValueError as exc:
                    raise ConfigError(f"bad K value {v!r}") from exc
                if values[-1] < 1:
                    raise ConfigError(f"K must be >= 1, got {v}")
    elif args.axis == "upsilon":
        try:
            values = [int(v) for v in raw_values]
        except ValueError as exc:
            raise ConfigError(f"bad upsilon value in {raw_values}") from exc
    else:
        try:
            values = [float(v) for v in raw_values]
        except ValueError as exc:
            raise ConfigError(f"bad numeric value in {raw_values}") from exc

    grid = ablate(
        bundle, cfg, args.axis, values, upsilon=run.upsilon, workers=workers
    )

    csv_text = grid.to_csv()
    print(csv_text, end="")
    if args.out:
        _write_text_atomic(args.out, csv_text)
    return EXIT_OK


# ------------------------------------------------------- validate-bundle


def cmd_validate_bundle(args) -> int:
    issues = validate_bundle_file(args.path)
    if issues:
        for issue in issues:
            print(f"FAIL: {issue}")
        return EXIT_BAD_BUNDLE
    bundle = read_bundle(args.path)
    print(
        f"OK: {args.path} images={bundle.n_images} classes={bundle.n_classes} "
        f"dim={bundle.dim} captions_per_image={bundle.n_captions} "
        f"reduction={bundle.reduction.value} tau_hint={bundle.tau_hint}"
    )
    return EXIT_OK


# ------------------------------------------------------------------ synth


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec(
            n_images=args.n,
            n_classes=args.classes,
            dim=args.dim,
            n_captions=args.captions,
            image_noise=args.image_noise,
            caption_noise=args.caption_noise,
            caption_signal=args.caption_signal,
            tau_hint=args.tau_hint,
            seed=args.seed,
        )
    except InvalidSpecError as exc:
        raise ConfigError(str(exc)) from exc

    bundle = synth_bundle(spec)
    write_bundle(bundle, args.out)

    cfg = IceConfig(tau=bundle.tau_hint)
    report = evaluate(bundle, cfg, methods=("image_only", "caption_only"))
    img = report.method("image_only").top1_pct
    cap = report.method("caption_only").top1_pct
    print(
        f"wrote {args.out}: N={spec.n_images} m={spec.n_classes} l={spec.dim} "
        f"upsilon={spec.n_captions} seed={spec.seed}"
    )
    print(
        f"generator signal: caption_signal={spec.caption_signal} "
        f"image_noise={spec.image_noise} caption_noise={spec.caption_noise}"
    )
    print(f"achievable top-1: image_only={img:.2f}% caption_only={cap:.2f}%")
    return EXIT_OK


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icefuse",
        description="Fuse image- and caption-conditioned zero-shot predictions "
        "over embedding bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p, multi_bundle=False):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument(
            "--bundle",
            action="append",
            help="bundle path" + (", repeatable, optional @cross/@domain tag" if multi_bundle else ""),
        )
        p.add_argument("--k", "--K", dest="k", type=int, help="anchor size K")
        p.add_argument("--xi", type=float, help="caption weight ceiling")
        p.add_argument("--epsilon", type=float, help="division floor")
        p.add_argument(
            "--lambda-mode",
            dest="lambda_mode",
            help="adaptive | image_only | fixed[:value]",
        )
        p.add_argument("--tau", type=float, help="softmax temperature (default: bundle hint)")
        p.add_argument("--upsilon", type=int, help="use first N captions per image")
        p.add_argument("--workers", type=int, help="parallel workers (0 = all cores)")
        p.add_argument("--seed", type=int)

    p_pred = sub.add_parser("predict", help="print per-sample predictions")
    add_run_flags(p_pred)
    p_pred.add_argument("--ids", required=True, help="comma-separated sample ids")
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="evaluate methods over bundles")
    add_run_flags(p_eval, multi_bundle=True)
    p_eval.add_argument("--methods", help="comma list: image_only,caption_only,ice[:reduction]")
    p_eval.add_argument("--topk-ks", dest="topk_ks", help="comma list of K values to report")
    p_eval.add_argument("--report-json", dest="report_json")
    p_eval.add_argument("--report-csv", dest="report_csv")
    p_eval.add_argument("--records-jsonl", dest="records_jsonl")
    p_eval.add_argument(
        "--quadrant-exemplars", type=int, default=5,
        help="examples per reclassification quadrant in the JSON report (0 disables)",
    )
    p_eval.set_defaults(func=cmd_evaluate)

    p_abl = sub.add_parser("ablate", help="sweep one hyperparameter axis")
    add_run_flags(p_abl)
    p_abl.add_argument("--axis", required=True, choices=("xi", "K", "upsilon", "lambda_fixed"))
    p_abl.add_argument("--values", required=True, help="comma-separated values ('max' allowed for K)")
    p_abl.add_argument("--out", help="grid CSV output path")
    p_abl.set_defaults(func=cmd_ablate)

    p_val = sub.add_parser("validate-bundle", help="structural + checksum validation")
    p_val.add_argument("path")
    p_val.set_defaults(func=cmd_validate_bundle)

    p_syn = sub.add_parser("synth", help="generate a seeded synthetic bundle")
    p_syn.add_argument("--out", required=True)
    p_syn.add_argument("--n", type=int, default=1000, help="image count")
    p_syn.add_argument("--classes", type=int, default=10)
    p_syn.add_argument("--dim", type=int, default=32)
    p_syn.add_argument("--captions", type=int, default=3)
    p_syn.add_argument("--image-noise", type=float, default=0.5)
    p_syn.add_argument("--caption-noise", type=float, default=0.2)
    p_syn.add_argument("--caption-signal", type=float, default=0.8)
    p_syn.add_argument("--tau-hint", type=float, default=30.0)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (InvalidSpecError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except BundleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_BUNDLE
    except IcefuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
