"""Pipeline stages behind the command line: plain files under one output directory.

Layout::

    trajectories/F00000.jsonl   missions/F00000.json
    adsb/F00000.jsonl           adsb/F00000.config.json
    windows/{train,val,test}.jsonl   windows/split.json
    prompts/{train,val,test}.jsonl
    results/{method}.jsonl
    reports/eval_windows.csv  reports/eval_points.csv  reports/summary.csv
    figures/*.svg
    manifest.json

Each stage records a config hash and a digest of its output files in the
manifest; re-running a stage whose hash and outputs are unchanged is a no-op.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from contextlib import ExitStack
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .codec import PromptRecord, build_prompt, build_target
from .config import METHODS, PipelineConfig
from .dataset import SplitManifest, WindowRecord, is_eligible, make_windows, split, window_stats
from .degrade import degrade
from .errors import (
    EndpointError,
    MissingPriorStageError,
    NoObservationsError,
    NoParseableRowsError,
    SingularCovarianceError,
    TokenBudgetExceededError,
    TrajectoryTooShortError,
    UnreachableWaypointError,
)
from .evalreport import aggregate, render_figure, score_window, write_point_csv, write_summary_csv, write_window_csv
from .io import iter_jsonl, read_json, read_jsonl, read_samples, read_trajectory, write_json, write_jsonl, write_samples
from .llmclient import CompletionClient, MockBehavior, MockServer
from .reconstruct import ReconstructionResult, reconstruct_kalman, reconstruct_linear, reconstruct_llm
from .simkernel import AIRPORTS, MissionSpec, generate_mission, simulate, track_change_sum

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
STAGES = ("simulate", "degrade", "build-dataset", "reconstruct", "evaluate", "plot")
# per-window failures that are recorded rather than aborting the stage
RECORDABLE_ERRORS = (NoParseableRowsError, TokenBudgetExceededError, EndpointError,
                     NoObservationsError, SingularCovarianceError)


def flight_id(i: int) -> str:
    return f"F{i:05d}"


def _digest(root: Path, paths: Iterable[Path]) -> str:
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(str(p.relative_to(root)).encode())
        h.update(b"\0")
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()[:16]


def _clear(directory: Path, pattern: str) -> None:
    if directory.is_dir():
        for p in directory.glob(pattern):
            p.unlink()


class Pipeline:
    """Runs stages for one :class:`PipelineConfig`."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.root = Path(cfg.output_dir)
        self.manifest_path = self.root / "manifest.json"

    # ------------------------------------------------------------ manifest

    def _manifest(self) -> dict:
        if self.manifest_path.exists():
            try:
                return read_json(self.manifest_path)
            except (OSError, ValueError):
                log.warning("unreadable manifest %s; starting fresh", self.manifest_path)
        return {}

    def _stage_hash(self, name: str) -> str:
        c = self.cfg
        if name == "simulate":
            parts = {"seed": c.seed, "simulate": c.section_hash("simulate")}
        elif name == "degrade":
            parts = {"up": self._stage_hash("simulate"), "degrade": c.section_hash("degrade")}
        elif name == "build-dataset":
            parts = {"up": self._stage_hash("degrade"), "dataset": c.section_hash("dataset")}
        elif name.startswith("reconstruct:"):
            method = name.split(":", 1)[1]
            extra = {"linear": (), "kalman": ("kalman", "degrade"), "kalman_rts": ("kalman", "degrade"),
                     "llm": ("llm",)}[method]
            parts = {"up": self._stage_hash("build-dataset"), "split": c.reconstruct.split,
                     "cfg": c.section_hash(*extra) if extra else ""}
        elif name == "evaluate":
            parts = {"up": [self._stage_hash(f"reconstruct:{m}") for m in c.reconstruct.methods],
                     "evaluate": c.section_hash("evaluate")}
        elif name == "plot":
            parts = {"up": self._stage_hash(f"reconstruct:{c.plot.method}"), "plot": c.section_hash("plot")}
        else:
            raise KeyError(name)
        return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()[:16]

    def _up_to_date(self, name: str, outputs: Callable[[], list[Path]]) -> bool:
        entry = self._manifest().get("stages", {}).get(name)
        if not entry or entry.get("config_hash") != self._stage_hash(name):
            return False
        paths = outputs()
        if not paths or len(paths) != entry.get("n_files"):
            return False
        return entry.get("output_digest") == _digest(self.root, paths)

    def _record(self, name: str, paths: list[Path], counts: dict) -> None:
        man = self._manifest()
        man["config_hash"] = self.cfg.section_hash(*self.cfg.run_dict())
        man["seed"] = self.cfg.seed
        man["config"] = self.cfg.run_dict()
        stages = man.setdefault("stages", {})
        stages[name] = {
            "config_hash": self._stage_hash(name),
            "output_digest": _digest(self.root, paths),
            "n_files": len(paths),
            "counts": counts,
        }
        man["stages"] = dict(sorted(stages.items()))
        # the only wall-clock value anywhere in the output tree
        man["updated_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        write_json(self.manifest_path, man)

    def _run_stage(self, name: str, outputs: Callable[[], list[Path]], body: Callable[[], dict]) -> dict:
        if self._up_to_date(name, outputs):
            log.info("%s: up to date, skipping", name)
            return self._manifest()["stages"][name]["counts"]
        log.info("%s: running", name)
        counts = body()
        self._record(name, outputs(), counts)
        return counts

    def _require(self, *paths: Path, stage: str) -> None:
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise MissingPriorStageError(f"missing outputs of '{stage}': {', '.join(missing)}")

    def _map(self, fn, items: Sequence, processes: bool = True) -> list:
        if self.cfg.jobs <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        pool = ProcessPoolExecutor if processes else ThreadPoolExecutor
        with pool(max_workers=self.cfg.jobs) as ex:
            return list(ex.map(fn, items))

    # -------------------------------------------------------------- stages

    def simulate(self) -> dict:
        tdir, mdir = self.root / "trajectories", self.root / "missions"

        def outputs():
            return sorted(tdir.glob("*.jsonl")) + sorted(mdir.glob("*.json"))

        def body():
            _clear(tdir, "*.jsonl")
            _clear(mdir, "*.json")
            attempts = self._map(_SimulateTask(self.cfg), range(self.cfg.simulate.n_flights))
            return {"flights": len(attempts), "retries": sum(a - 1 for a in attempts)}

        return self._run_stage("simulate", outputs, body)

    def degrade(self) -> dict:
        tdir, adir = self.root / "trajectories", self.root / "adsb"
        self._require(tdir, stage="simulate")
        truth = sorted(tdir.glob("*.jsonl"))
        if not truth:
            raise MissingPriorStageError(f"no trajectories under {tdir}")

        def outputs():
            return sorted(adir.glob("*.jsonl")) + sorted(adir.glob("*.config.json"))

        def body():
            _clear(adir, "*.jsonl")
            _clear(adir, "*.config.json")
            counts = self._map(_DegradeTask(self.cfg, str(adir)), truth)
            return {"flights": len(counts), "points": sum(counts)}

        return self._run_stage("degrade", outputs, body)

    def build_dataset(self) -> dict:
        tdir, adir, wdir, pdir = (self.root / d for d in ("trajectories", "adsb", "windows", "prompts"))
        self._require(tdir, adir, stage="degrade")
        truth = sorted(tdir.glob("*.jsonl"))
        if not truth or not all((adir / p.name).exists() for p in truth):
            raise MissingPriorStageError(f"ADS-B streams under {adir} do not cover every trajectory")

        def outputs():
            return [p for p in [*(wdir / f"{s}.jsonl" for s in SPLITS), wdir / "split.json",
                                *(pdir / f"{s}.jsonl" for s in SPLITS)] if p.exists()]

        def body():
            ds = self.cfg.dataset
            per_flight = self._map(_WindowTask(self.cfg, str(adir)), truth)
            records = [WindowRecord.from_dict(d) for ws in per_flight for d in ws]
            eligible = [r for r in records if is_eligible(r)]
            log.info("build-dataset: %d of %d windows eligible", len(eligible), len(records))
            man = split(eligible, ds.ratios, seed=self.cfg.derive_seed("split"))
            by_id = {r.record_id: r for r in eligible}
            for s in SPLITS:
                rows = [by_id[rid] for rid in getattr(man, s)]
                write_jsonl(wdir / f"{s}.jsonl", (r.to_dict() for r in rows))
                write_jsonl(pdir / f"{s}.jsonl", (
                    PromptRecord(r.flight_id, r.window_start_s, build_prompt(r.inputs), build_target(r.targets)).to_dict()
                    for r in rows
                ))
            write_json(wdir / "split.json", man.to_dict())
            return {"windows": len(records), "eligible": len(eligible), **dict(zip(SPLITS, man.sizes()))}

        return self._run_stage("build-dataset", outputs, body)

    def reconstruct(self, methods: Sequence[str] | None = None) -> dict:
        methods = tuple(methods or self.cfg.reconstruct.methods)
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        split_name = self.cfg.reconstruct.split
        wpath = self.root / "windows" / f"{split_name}.jsonl"
        self._require(wpath, stage="build-dataset")
        out = {}
        for m in methods:
            rpath = self.root / "results" / f"{m}.jsonl"
            out[m] = self._run_stage(
                f"reconstruct:{m}",
                lambda rpath=rpath: [rpath] if rpath.exists() else [],
                lambda m=m, rpath=rpath: self._reconstruct_method(m, wpath, rpath),
            )
        return out

    def _reconstruct_method(self, method: str, wpath: Path, rpath: Path) -> dict:
        windows = [WindowRecord.from_dict(d) for d in iter_jsonl(wpath)]
        with ExitStack() as stack:
            fn = self._reconstructor(method, stack)
            if method == "llm":
                with ThreadPoolExecutor(max_workers=self.cfg.llm.max_in_flight) as ex:
                    rows = list(ex.map(lambda w: _run_one(fn, method, w), windows))
            else:
                rows = self._map(_ReconTask(fn, method), windows, processes=False)
        write_jsonl(rpath, rows)
        n_err = sum(r["status"] != "ok" for r in rows)
        errors: dict[str, int] = {}
        for r in rows:
            if r["status"] != "ok":
                errors[r["error"]["type"]] = errors.get(r["error"]["type"], 0) + 1
        if n_err:
            log.warning("reconstruct %s: %d of %d windows failed: %s", method, n_err, len(rows), errors)
        return {"windows": len(rows), "failed": n_err, "errors": dict(sorted(errors.items()))}

    def _reconstructor(self, method: str, stack: ExitStack) -> Callable[[WindowRecord], ReconstructionResult]:
        c = self.cfg
        if method == "linear":
            return lambda w: reconstruct_linear(w.inputs, w.query_times)
        if method in ("kalman", "kalman_rts"):
            kcfg = c.kalman.build(c.degrade, smoother=method == "kalman_rts")
            return lambda w: reconstruct_kalman(w.inputs, w.query_times, kcfg)

        ecfg = c.llm.client.with_env()
        if c.llm.endpoint.startswith("mock:"):
            mode = c.llm.endpoint.split(":", 1)[1]
            targets = {}
            if mode == "oracle":
                ppath = self.root / "prompts" / f"{c.reconstruct.split}.jsonl"
                self._require(ppath, stage="build-dataset")
                targets = {d["prompt"]: d["target"] for d in iter_jsonl(ppath)}
            server = stack.enter_context(MockServer(MockBehavior(mode=mode, targets=targets)))
            ecfg = replace(ecfg, base_url=server.base_url, auth_token=None)
            log.info("llm: using in-process %s mock at %s", mode, server.base_url)
        client = stack.enter_context(CompletionClient(ecfg))
        budget = c.llm.token_budget
        return lambda w: reconstruct_llm(w.inputs, w.query_times, client, token_budget=budget)

    def evaluate(self) -> dict:
        c = self.cfg
        wpath = self.root / "windows" / f"{c.reconstruct.split}.jsonl"
        self._require(wpath, stage="build-dataset")
        present = [m for m in c.reconstruct.methods if (self.root / "results" / f"{m}.jsonl").exists()]
        if not present:
            raise MissingPriorStageError(f"no reconstruction results under {self.root / 'results'}")
        rdir = self.root / "reports"
        files = [rdir / n for n in ("eval_windows.csv", "eval_points.csv", "summary.csv")]

        def body():
            windows = {(d["flight_id"], d["window_start_s"]): WindowRecord.from_dict(d) for d in iter_jsonl(wpath)}
            rows, failures = [], {}
            for m in present:
                failures[m] = 0
                for rec in iter_jsonl(self.root / "results" / f"{m}.jsonl"):
                    if rec["status"] != "ok":
                        failures[m] += 1
                        continue
                    w = windows[(rec["flight_id"], rec["window_start_s"])]
                    res = ReconstructionResult.from_dict(rec["result"])
                    rows.append(score_window(w.targets, res.estimates, c.evaluate, flight_id=w.flight_id,
                                             window_start_s=w.window_start_s, method=m))
            write_window_csv(files[0], rows)
            write_point_csv(files[1], rows)
            summary = aggregate(rows, failures)
            write_summary_csv(files[2], summary)
            for s in summary:
                log.info("evaluate %-10s n=%d h_rmse=%.2f m v_rmse=%.2f ft contain=%.3f failed=%d",
                         s["method"], s["n_windows"], s["h_rmse_m"], s["v_rmse_ft"], s["containment_mean"],
                         s["n_failed"])
            return {"rows": len(rows), "methods": present, "failed": failures}

        return self._run_stage("evaluate", lambda: [p for p in files if p.exists()], body)

    def plot(self) -> dict:
        c = self.cfg
        wpath = self.root / "windows" / f"{c.reconstruct.split}.jsonl"
        rpath = self.root / "results" / f"{c.plot.method}.jsonl"
        self._require(wpath, rpath, stage="reconstruct")
        fdir = self.root / "figures"

        def body():
            _clear(fdir, "*.svg")
            windows = {(d["flight_id"], d["window_start_s"]): d for d in iter_jsonl(wpath)}
            picked: dict[str, tuple[WindowRecord, ReconstructionResult]] = {}
            for rec in iter_jsonl(rpath):
                if rec["status"] != "ok":
                    continue
                w = WindowRecord.from_dict(windows[(rec["flight_id"], rec["window_start_s"])])
                cat = scenario(w)
                if cat and cat not in picked:
                    picked[cat] = (w, ReconstructionResult.from_dict(rec["result"]))
                if len(picked) >= min(c.plot.max_figures, len(SCENARIOS)):
                    break
            for cat in SCENARIOS:
                if cat not in picked:
                    log.info("plot: no %s window in the %s split", cat, c.reconstruct.split)
                    continue
                w, res = picked[cat]
                render_figure(w.targets, w.inputs, res.estimates, fdir / f"{cat}.svg",
                              title=f"{cat} ({w.flight_id} t={w.window_start_s} s, {c.plot.method})")
            return {"figures": sorted(picked)}

        return self._run_stage("plot", lambda: sorted(fdir.glob("*.svg")), body)

    def run(self, name: str, methods: Sequence[str] | None = None) -> dict:
        if name == "all":
            return {s: self.run(s, methods) for s in STAGES}
        fn = {"simulate": self.simulate, "degrade": self.degrade, "build-dataset": self.build_dataset,
              "evaluate": self.evaluate, "plot": self.plot}.get(name)
        if name == "reconstruct":
            return self.reconstruct(methods)
        if fn is None:
            raise ValueError(f"unknown stage {name!r}")
        return fn()


SCENARIOS = ("straight-climb", "straight-descent", "curved-level", "curved-climb")


def scenario(w: WindowRecord) -> str | None:
    """Figure category of a window, judged on its truth targets."""
    dalt = w.targets[-1].alt_ft - w.targets[0].alt_ft
    alt_range, _ = window_stats(w)
    dtrk = track_change_sum(s.track_deg for s in w.targets)
    if dtrk <= 5.0 and dalt > 300:
        return "straight-climb"
    if dtrk <= 5.0 and dalt < -300:
        return "straight-descent"
    if dtrk > 30.0 and alt_range <= 50:
        return "curved-level"
    if dtrk > 30.0 and dalt > 300:
        return "curved-climb"
    return None


# ------------------------------------------------- picklable per-item tasks

class _SimulateTask:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg

    def __call__(self, i: int) -> int:
        sc = self.cfg.simulate
        org, dst = (AIRPORTS[a] for a in sc.routes[i % len(sc.routes)])
        fid = flight_id(i)
        last: Exception | None = None
        for attempt in range(sc.max_attempts):
            mission = generate_mission(org, dst, sc.mission, self.cfg.derive_seed("mission", i, attempt))
            try:
                traj = simulate(mission, sc.sim, fid)
            except UnreachableWaypointError as exc:
                last = exc
                continue
            root = Path(self.cfg.output_dir)
            write_samples(root / "trajectories" / f"{fid}.jsonl", traj.samples)
            write_json(root / "missions" / f"{fid}.json", mission.to_dict())
            return attempt + 1
        raise UnreachableWaypointError(f"{fid}: no flyable mission in {sc.max_attempts} attempts: {last}")


class _DegradeTask:
    def __init__(self, cfg: PipelineConfig, adir: str):
        self.cfg, self.adir = cfg, Path(adir)

    def __call__(self, path: Path) -> int:
        traj = read_trajectory(path)
        i = int(traj.flight_id.lstrip("F"))
        dcfg = replace(self.cfg.degrade, seed=self.cfg.derive_seed("degrade", i))
        pts = degrade(traj, dcfg)
        write_samples(self.adir / f"{traj.flight_id}.jsonl", pts)
        write_json(self.adir / f"{traj.flight_id}.config.json", dcfg.to_dict())
        return len(pts)


class _WindowTask:
    def __init__(self, cfg: PipelineConfig, adir: str):
        self.cfg, self.adir = cfg, Path(adir)

    def __call__(self, path: Path) -> list[dict]:
        ds = self.cfg.dataset
        traj = read_trajectory(path)
        obs = read_samples(self.adir / path.name)
        try:
            ws = make_windows(traj, obs, ds.stride_s, ds.window_s, ds.step_s)
        except TrajectoryTooShortError as exc:
            log.warning("skipping %s", exc)
            return []
        return [w.to_dict() for w in ws]


class _ReconTask:
    def __init__(self, fn, method: str):
        self.fn, self.method = fn, method

    def __call__(self, w: WindowRecord) -> dict:
        return _run_one(self.fn, self.method, w)


def _run_one(fn, method: str, w: WindowRecord) -> dict:
    row = {"flight_id": w.flight_id, "window_start_s": w.window_start_s, "method": method}
    try:
        res = fn(w)
    except RECORDABLE_ERRORS as exc:
        err = {"type": type(exc).__name__, "message": str(exc)}
        counts = getattr(exc, "counts", None)
        if counts:
            err["counts"] = counts
        return {**row, "status": "error", "error": err}
    return {**row, "status": "ok", "result": res.to_dict()}


def load_results(path: str | os.PathLike) -> list[dict]:
    return read_jsonl(path)


def load_split(root: str | os.PathLike) -> SplitManifest:
    return SplitManifest.from_dict(read_json(Path(root) / "windows" / "split.json"))


def load_mission(root: str | os.PathLike, fid: str) -> MissionSpec:
    return MissionSpec.from_dict(read_json(Path(root) / "missions" / f"{fid}.json"))
