"""Fixed-precision digit encoding and the prompt/summary text format.

Every field is scaled by its precision and written as a bare integer with no
decimal point, e.g. latitude 40.12340 -> ``4012340``. A row is the seven
fields in canonical order inside parentheses::

    (967, 4140614, 8692362, 4863, 81, 0, 308)

Latitude and longitude are written as unsigned magnitudes; the hemisphere is
fixed per dataset (north / west by default) and re-applied on decode.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInputError, MalformedNumberError, NoParseableRowsError
from .simkernel import StateSample

INTRO = (
    "Determine the curved flight trajectory using these estimated parameters "
    "(time, latitude, longitude, altitude, true airspeed, vertical speed, and track angle). "
    "Please summarize the precise trajectory considering these inputs:"
)
SEPARATOR = "- - - - - - -"
SUFFIX = "Summary:"

# fraction distance from .5 below which the float path defers to exact decimals
_TIE_GUARD = 1e-6


@dataclass(frozen=True)
class FieldSpec:
    """Encoding rule for one field: precision is ``10 ** -decimals``."""

    name: str
    decimals: int
    signed: bool = False

    @property
    def precision(self) -> float:
        return 10.0 ** -self.decimals

    def _scale(self, x):
        return x * 10 ** self.decimals if self.decimals >= 0 else x / 10 ** -self.decimals

    def _unscale(self, n):
        return n / 10 ** self.decimals if self.decimals >= 0 else n * 10 ** -self.decimals


TIME = FieldSpec("time_s", 2)
LAT = FieldSpec("lat_deg", 5)
LON = FieldSpec("lon_deg", 5)
ALT = FieldSpec("alt_ft", 0)
TAS = FieldSpec("tas_kt", 0)
VS = FieldSpec("vs_fpm", 1, signed=True)
TRACK = FieldSpec("track_deg", 0)
FIELD_SPECS: tuple[FieldSpec, ...] = (TIME, LAT, LON, ALT, TAS, VS, TRACK)


@dataclass(frozen=True)
class Hemisphere:
    """Signs re-applied to the unsigned latitude/longitude magnitudes."""

    lat_sign: int = 1
    lon_sign: int = -1

    def __post_init__(self) -> None:
        if self.lat_sign not in (1, -1) or self.lon_sign not in (1, -1):
            raise ValueError("hemisphere signs must be +1 or -1")

    @classmethod
    def of(cls, lat_deg: float, lon_deg: float) -> Hemisphere:
        return cls(1 if lat_deg >= 0 else -1, 1 if lon_deg >= 0 else -1)


NORTH_WEST = Hemisphere()


def _exact_round(v: float, spec: FieldSpec) -> int:
    q = Decimal(repr(abs(float(v)))).scaleb(spec.decimals)
    return int(q.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def round_units(v: float, spec: FieldSpec) -> int:
    """|v| / precision rounded half away from zero, as an int."""
    scaled = spec._scale(abs(v))
    fl = math.floor(scaled)
    if abs(scaled - fl - 0.5) < _TIE_GUARD:
        return _exact_round(v, spec)
    return int(fl + 1) if scaled - fl > 0.5 else int(fl)


def encode_value(v: float, spec: FieldSpec) -> str:
    """Strip-decimal encoding of a single value."""
    n = round_units(v, spec)
    return f"-{n}" if spec.signed and v < 0 and n else str(n)


def encode_units(values, spec: FieldSpec) -> np.ndarray:
    """Vectorised :func:`round_units`; returns int64 magnitudes."""
    v = np.abs(np.asarray(values, dtype=float))
    scaled = spec._scale(v)
    fl = np.floor(scaled)
    out = (fl + (scaled - fl > 0.5)).astype(np.int64)
    ties = np.nonzero(np.abs(scaled - fl - 0.5) < _TIE_GUARD)[0]
    for i in ties:
        out[i] = _exact_round(float(v[i]), spec)
    return out


_INT_RE = re.compile(r"-?\d+")


def decode_value(s: str, spec: FieldSpec) -> float:
    """Inverse of :func:`encode_value` up to the field precision."""
    s = s.strip()
    if not _INT_RE.fullmatch(s):
        raise MalformedNumberError(f"not an encoded number: {s!r}")
    return spec._unscale(int(s))


def decode_units(n, spec: FieldSpec):
    return spec._unscale(n)


def encode_row(sample: StateSample, specs: Sequence[FieldSpec] = FIELD_SPECS,
               hemisphere: Hemisphere = NORTH_WEST) -> str:
    """Format one sample as ``(t, lat, lon, alt, tas, vs, track)``."""
    if sample.lat_deg * hemisphere.lat_sign < 0 or sample.lon_deg * hemisphere.lon_sign < 0:
        raise ValueError(f"sample at ({sample.lat_deg}, {sample.lon_deg}) is outside hemisphere {hemisphere}")
    vals = (sample.time_s, sample.lat_deg, sample.lon_deg, sample.alt_ft,
            sample.tas_kt, sample.vs_fpm, sample.track_deg)
    return "(" + ", ".join(encode_value(v, spec) for v, spec in zip(vals, specs)) + ")"


def _sample_from_ints(ints: Sequence[int], specs: Sequence[FieldSpec], hemisphere: Hemisphere) -> StateSample:
    t, lat, lon, alt, tas, vs, trk = (spec._unscale(n) for n, spec in zip(ints, specs))
    trk = trk % 360.0
    return StateSample(t, hemisphere.lat_sign * abs(lat), hemisphere.lon_sign * abs(lon),
                       abs(alt), abs(tas), vs, 0.0 if trk >= 360.0 else trk)


_ROW_RE = re.compile(r"\(\s*" + r"\s*,\s*".join([r"(-?\d+)"] * 7) + r"\s*\)")
_ROW_START_RE = re.compile(r"\(\s*-?\d")


def parse_row(text: str, specs: Sequence[FieldSpec] = FIELD_SPECS,
              hemisphere: Hemisphere = NORTH_WEST) -> StateSample:
    m = _ROW_RE.fullmatch(text.strip().rstrip(","))
    if not m:
        raise MalformedNumberError(f"not a trajectory row: {text!r}")
    return _sample_from_ints([int(g) for g in m.groups()], specs, hemisphere)


def quantize_sample(sample: StateSample, specs: Sequence[FieldSpec] = FIELD_SPECS,
                    hemisphere: Hemisphere | None = None) -> StateSample:
    """The sample as it survives an encode/decode round trip."""
    hemi = hemisphere or Hemisphere.of(sample.lat_deg, sample.lon_deg)
    return parse_row(encode_row(sample, specs, hemi), specs, hemi)


def build_rows(samples: Iterable[StateSample], specs: Sequence[FieldSpec] = FIELD_SPECS,
               hemisphere: Hemisphere = NORTH_WEST) -> list[str]:
    return [encode_row(s, specs, hemisphere) for s in samples]


def build_prompt(points: Sequence[StateSample], specs: Sequence[FieldSpec] = FIELD_SPECS,
                 hemisphere: Hemisphere = NORTH_WEST) -> str:
    """Full model input: instruction, one row per point, separator, ``Summary:``.

    Raises:
        EmptyInputError: if ``points`` is empty.
    """
    if not points:
        raise EmptyInputError("cannot build a prompt from zero points")
    rows = build_rows(points, specs, hemisphere)
    return "\n".join([INTRO, ",\n".join(rows), SEPARATOR, SUFFIX])


def build_target(samples: Sequence[StateSample], specs: Sequence[FieldSpec] = FIELD_SPECS,
                 hemisphere: Hemisphere = NORTH_WEST) -> str:
    """Expected completion text: the target rows in input row syntax."""
    return ",\n".join(build_rows(samples, specs, hemisphere))


def prompt_rows(prompt: str) -> list[str]:
    """Canonical row strings contained in a prompt (used for echo detection)."""
    return [_canonical(m) for m in _ROW_RE.finditer(prompt)]


def _canonical(m: re.Match) -> str:
    return "(" + ", ".join(str(int(g)) for g in m.groups()) + ")"


@dataclass
class SummaryParse:
    """Samples recovered from a completion plus per-reason drop tallies."""

    samples: list[StateSample]
    found: int
    malformed: int = 0
    echoed: int = 0
    out_of_window: int = 0
    non_monotonic: int = 0

    @property
    def dropped(self) -> int:
        return self.echoed + self.out_of_window + self.non_monotonic

    def counts(self) -> dict:
        return {
            "found": self.found,
            "kept": len(self.samples),
            "malformed": self.malformed,
            "echoed": self.echoed,
            "out_of_window": self.out_of_window,
            "non_monotonic": self.non_monotonic,
        }


def parse_summary(
    text: str,
    window: tuple[float, float] | None = None,
    *,
    echo_rows: Iterable[str] = (),
    specs: Sequence[FieldSpec] = FIELD_SPECS,
    hemisphere: Hemisphere = NORTH_WEST,
) -> SummaryParse:
    """Extract trajectory rows from model output.

    Rows identical to one of ``echo_rows`` (the prompt's own inputs), rows
    outside ``window`` (inclusive) and rows that do not advance in time are
    dropped and counted.

    Raises:
        NoParseableRowsError: if the text contains no complete row at all.
    """
    matches = list(_ROW_RE.finditer(text))
    starts = len(_ROW_START_RE.findall(text))
    if not matches:
        raise NoParseableRowsError("no trajectory rows in completion",
                                   {"found": 0, "kept": 0, "malformed": starts})
    echo = set(echo_rows)
    out = SummaryParse([], found=len(matches), malformed=max(0, starts - len(matches)))
    last_t = -math.inf
    for m in matches:
        if _canonical(m) in echo:
            out.echoed += 1
            continue
        s = _sample_from_ints([int(g) for g in m.groups()], specs, hemisphere)
        if window is not None and not (window[0] <= s.time_s <= window[1]):
            out.out_of_window += 1
            continue
        if s.time_s <= last_t:
            out.non_monotonic += 1
            continue
        last_t = s.time_s
        out.samples.append(s)
    return out


_TOKEN_RE = re.compile(r"[^\W\d_]+|\d|[^\w\s]|_")


def estimate_tokens(prompt: str) -> int:
    """Upper-bound token count: one per digit, punctuation mark and word."""
    return len(_TOKEN_RE.findall(prompt))


@dataclass(frozen=True)
class PromptRecord:
    flight_id: str
    window_start_s: int
    prompt: str
    target: str

    def __post_init__(self) -> None:
        if not (self.prompt.startswith(INTRO) and self.prompt.endswith(SUFFIX)):
            raise ValueError("prompt must start with the instruction and end with 'Summary:'")

    def to_dict(self) -> dict:
        return {"flight_id": self.flight_id, "window_start_s": self.window_start_s,
                "prompt": self.prompt, "target": self.target}

    @classmethod
    def from_dict(cls, d: dict) -> PromptRecord:
        return cls(d["flight_id"], int(d["window_start_s"]), d["prompt"], d["target"])
