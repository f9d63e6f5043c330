"""Command-line entry points for the exporter.

``iceb-export export`` runs the image-to-bundle pipeline;
``iceb-export demo-dataset`` writes a small color-scene dataset for smoke
testing the pipeline offline.
"""

from __future__ import annotations

import argparse
import sys

from .dataset import DatasetError
from .demo import DEFAULT_CLASSES, make_demo_dataset
from .export import ExportJob, export
from .models import ModelUnavailableError
from .prompts import PromptError, caption_prompts
from .writer import ExportError


def cmd_export(args) -> int:
    if args.prompt:
        prompts = tuple(args.prompt)
    else:
        prompts = tuple(
            caption_prompts(
                style=args.prompt_style,
                dataset=args.dataset_name or None,
                table_path=args.prompt_table,
            )
        )
    job = ExportJob(
        dataset_root=args.dataset,
        output_path=args.out,
        model_spec=args.model,
        split=args.split,
        dataset_name=args.dataset_name,
        caption_prompts=prompts,
        class_templates=tuple(args.class_template)
        if args.class_template
        else ("a photo of a {}",),
        descriptor_file=args.descriptors,
        prototype_reduction=args.reduction,
        batch_size=args.batch_size,
        device=args.device,
        tau_hint=args.tau_hint,
        store_caption_texts=not args.no_caption_texts,
    )
    summary = export(job)
    print(
        f"wrote {summary['output']}: images={summary['images']} "
        f"captions_per_image={summary['captions_per_image']} "
        f"classes={summary['classes']} dim={summary['dim']} "
        f"model={summary['model']}"
    )
    return 0


def cmd_demo_dataset(args) -> int:
    out = make_demo_dataset(
        args.out,
        n_images=args.n,
        class_names=tuple(args.classes.split(",")),
        image_size=args.size,
        seed=args.seed,
    )
    print(f"wrote demo dataset to {out} ({args.n} images)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iceb-export",
        description="Embed images and generated captions into ICEB bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_exp = sub.add_parser("export", help="produce a bundle from an image folder")
    p_exp.add_argument("--dataset", required=True, help="folder with labels.csv + classnames.txt")
    p_exp.add_argument("--out", required=True, help="output bundle path")
    p_exp.add_argument("--model", default="toy", help="toy[:dim] or clip:<id>[+<captioner>]")
    p_exp.add_argument("--split", default="test")
    p_exp.add_argument("--dataset-name", default="", help="name recorded in the manifest")
    p_exp.add_argument(
        "--prompt-style", default="default", choices=("default", "qa"),
        help="caption prompt set from the prompt table",
    )
    p_exp.add_argument("--prompt-table", help="JSON prompt table overriding the bundled one")
    p_exp.add_argument(
        "--prompt", action="append", default=[],
        help="literal caption prompt (repeatable, overrides the table)",
    )
    p_exp.add_argument(
        "--class-template", action="append", default=None,
        help="class prompt template, {} is the class name "
        "(repeatable; default 'a photo of a {}')",
    )
    p_exp.add_argument("--descriptors", help="JSON file {class_name: [descriptor, ...]}")
    p_exp.add_argument(
        "--reduction", default="single", choices=("single", "centroid", "score_mean")
    )
    p_exp.add_argument("--batch-size", type=int, default=32)
    p_exp.add_argument("--device", default="cpu")
    p_exp.add_argument("--tau-hint", type=float, default=100.0)
    p_exp.add_argument("--no-caption-texts", action="store_true")
    p_exp.set_defaults(func=cmd_export)

    p_demo = sub.add_parser("demo-dataset", help="write a small offline test dataset")
    p_demo.add_argument("--out", required=True)
    p_demo.add_argument("--n", type=int, default=16)
    p_demo.add_argument("--classes", default=",".join(DEFAULT_CLASSES))
    p_demo.add_argument("--size", type=int, default=64)
    p_demo.add_argument("--seed", type=int, default=0)
    p_demo.set_defaults(func=cmd_demo_dataset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ExportError, PromptError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ModelUnavailableError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
