"""Weak labels from repeated LLM runs.

Each query goes through the few-shot prompt ``runs`` times at a fixed low
temperature; completions must be exactly ``true`` or ``false`` (after
whitespace/case normalisation). An unparseable completion is retried up to
three times, after which the whole row is flagged ``abstain`` so the core's
vote aggregation can skip and count it.
"""

from __future__ import annotations

import logging
import os
import tempfile
from importlib import resources
from pathlib import Path

from .qemb import read_queries_tsv

log = logging.getLogger(__name__)

MAX_RETRIES = 3
QUERY_SLOT = "<SEARCH QUERY>"


def default_prompt() -> str:
    return (
        resources.files("querytax_adapter.prompts")
        .joinpath("weak_label_prompt.txt")
        .read_text(encoding="utf-8")
    )


class OllamaClient:
    """Minimal client for a local Ollama-style /api/generate endpoint."""

    def __init__(self, endpoint: str, model: str, timeout: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.timeout = timeout

    def __call__(self, prompt: str, temperature: float) -> str:
        import requests

        response = requests.post(
            f"{self.endpoint}/api/generate",
            json={
                "model": self.model,
                "prompt": prompt,
                "stream": False,
                "options": {"temperature": temperature},
            },
            timeout=self.timeout,
        )
        response.raise_for_status()
        return response.json()["response"]


def parse_vote(completion: str) -> bool | None:
    """Strict true/false parse; anything else is None."""
    text = completion.strip().lower()
    if text == "true":
        return True
    if text == "false":
        return False
    return None


def weak_label(queries_tsv, out_path, complete, *, prompt: str | None = None,
               runs: int = 5, temperature: float = 0.3) -> dict:
    """Collect ``runs`` boolean votes per query via ``complete(prompt, temp)``.

    Writes a votes TSV (``id\\tv1..vN`` or ``id\\tabstain``) atomically and
    returns counts. A row abstains when any single run stays unparseable
    after MAX_RETRIES attempts.
    """
    template = prompt if prompt is not None else default_prompt()
    if QUERY_SLOT not in template:
        raise ValueError(f"prompt lacks the {QUERY_SLOT} placeholder")
    ids, texts = read_queries_tsv(queries_tsv)
    n_abstained = 0
    out_path = Path(out_path)
    fd, tmp = tempfile.mkstemp(dir=out_path.parent, suffix=".votes.tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for id_, text in zip(ids, texts):
                filled = template.replace(QUERY_SLOT, text)
                votes: list[bool] = []
                abstain = False
                for _ in range(runs):
                    vote = None
                    for _attempt in range(1 + MAX_RETRIES):  # initial + retries
                        vote = parse_vote(complete(filled, temperature))
                        if vote is not None:
                            break
                    if vote is None:
                        abstain = True
                        break
                    votes.append(vote)
                if abstain:
                    n_abstained += 1
                    fh.write(f"{id_}\tabstain\n")
                else:
                    row = "\t".join("true" if v else "false" for v in votes)
                    fh.write(f"{id_}\t{row}\n")
        os.replace(tmp, out_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    if n_abstained:
        log.warning("%d of %d rows abstained", n_abstained, len(ids))
    return {"rows": len(ids), "abstained": n_abstained, "runs": runs}
