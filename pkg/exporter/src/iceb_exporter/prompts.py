"""Caption prompt tables, shipped as package data rather than hardcoded.

Two styles ship with the package: ``default`` (short generic prefixes for
decoder-only captioners) and ``qa`` (question-and-answer prompts for
VQA-tuned captioners, keyed by dataset name). Users can point at their own
JSON file with the same structure instead.
"""

from __future__ import annotations

import json
from importlib import resources

_BUNDLED = "data/caption_prompts.json"


class PromptError(Exception):
    pass


def _load_table(path: str | None = None) -> dict:
    if path is None:
        text = (
            resources.files("iceb_exporter").joinpath(_BUNDLED).read_text("utf-8")
        )
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return json.loads(text)


def caption_prompts(
    style: str = "default", dataset: str | None = None, table_path: str | None = None
) -> list[str]:
    """Prompt list for a style, resolved against the bundled or given table.

    ``style="qa"`` requires a dataset name present in the table; the
    generic ``default`` list ignores the dataset.
    """
    table = _load_table(table_path)
    if style == "default":
        prompts = table.get("default")
        if not prompts:
            raise PromptError("prompt table has no 'default' entry")
        return list(prompts)
    if style == "qa":
        qa = table.get("qa", {})
        if not dataset:
            raise PromptError("qa prompt style needs a dataset name")
        prompts = qa.get(dataset.lower())
        if not prompts:
            known = sorted(k for k in qa if not k.startswith("_"))
            raise PromptError(
                f"no qa prompts for dataset {dataset!r}; known: {', '.join(known)}"
            )
        return list(prompts)
    raise PromptError(f"unknown prompt style {style!r} (default or qa)")
