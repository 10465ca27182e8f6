"""Reconstruction through a language-model completion endpoint."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..codec import NORTH_WEST, Hemisphere, build_prompt, estimate_tokens, parse_summary, prompt_rows
from ..errors import NoParseableRowsError, TokenBudgetExceededError
from ..llmclient import CompletionClient, LlmEndpointConfig
from ..simkernel import StateSample, samples_to_array
from .base import FILLED, MODEL, ReconstructionResult, check_inputs, make_sample
from .linear import interp_clamped

TOKEN_BUDGET = 2048
MATCH_TOLERANCE_S = 2.5


def check_budget(prompt: str, budget: int = TOKEN_BUDGET) -> int:
    """Estimated prompt tokens; raises if over ``budget``."""
    n = estimate_tokens(prompt)
    if n > budget:
        raise TokenBudgetExceededError(n, budget)
    return n


def align_rows(rows: Sequence[StateSample], query_times: Sequence[float],
               tolerance_s: float = MATCH_TOLERANCE_S) -> ReconstructionResult:
    """Map parsed rows onto the query grid.

    Each query takes the nearest row within ``tolerance_s`` (the earlier row
    on ties); queries with no such row are filled by linear interpolation
    over the parsed rows.
    """
    arr = samples_to_array(rows)
    q = np.asarray(query_times, dtype=float)
    filled = interp_clamped(arr, q)
    est, src = [], []
    for tq, fill in zip(q, filled):
        d = np.abs(arr[:, 0] - tq)
        j = int(np.argmin(d))
        if d[j] <= tolerance_s:
            est.append(make_sample(tq, *arr[j, 1:]))
            src.append(MODEL)
        else:
            est.append(make_sample(*fill))
            src.append(FILLED)
    return ReconstructionResult(est, src)


def reconstruct_llm(
    points: Sequence[StateSample],
    query_times: Sequence[float],
    endpoint: LlmEndpointConfig | CompletionClient,
    *,
    token_budget: int = TOKEN_BUDGET,
    tolerance_s: float = MATCH_TOLERANCE_S,
    hemisphere: Hemisphere = NORTH_WEST,
) -> ReconstructionResult:
    """Prompt the endpoint with the observations and parse its summary.

    Rows that merely repeat the prompt's inputs are discarded, so an echoing
    base model surfaces as :class:`NoParseableRowsError` rather than as
    plausible-looking estimates.

    Raises:
        NoObservationsError: if ``points`` is empty.
        TokenBudgetExceededError: before any request, if the prompt is too long.
        EndpointError: transport or HTTP failures from the client.
        NoParseableRowsError: if no usable row survives parsing.
    """
    check_inputs(points, query_times)
    prompt = build_prompt(points, hemisphere=hemisphere)
    n_tokens = check_budget(prompt, token_budget)

    own = isinstance(endpoint, LlmEndpointConfig)
    client = CompletionClient(endpoint) if own else endpoint
    try:
        text = client.complete(prompt)
    finally:
        if own:
            client.close()

    q = list(query_times)
    lo, hi = (q[0] - tolerance_s, q[-1] + tolerance_s) if q else (0.0, 0.0)
    try:
        parsed = parse_summary(text, (lo, hi), echo_rows=prompt_rows(prompt), hemisphere=hemisphere)
    except NoParseableRowsError as exc:
        exc.counts["raw_text"] = text
        raise
    counts = parsed.counts()
    if not parsed.samples:
        raise NoParseableRowsError(
            f"no usable rows: {parsed.found} found, {parsed.echoed} echoed, "
            f"{parsed.out_of_window} out of window, {parsed.non_monotonic} out of order",
            dict(counts, raw_text=text),
        )
    res = align_rows(parsed.samples, q, tolerance_s)
    res.diagnostics = {
        "method": "llm",
        "prompt_tokens": n_tokens,
        "parse": counts,
        "filled": res.sources.count(FILLED),
        "raw_text": text,
    }
    return res
