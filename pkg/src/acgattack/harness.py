"""Attack campaigns, trace analytics and report/figure emission."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .attack import AttackConfig, RestartResult, SearchTrace, parallel_map, run_restarts
from .diversity import di_trace
from .geometry import FeasibleRegion
from .objectives import ClassifierObjective
from .tinymodel import LabeledDataset, MlpClassifier

TRACE_COLUMNS = ["run_id", "restart", "iter", "loss", "f_max", "eta", "beta", "ctc",
                 "move_dist", "proj_ratio", "halved"]


class UnsupportedAnalysis(ValueError):
    """The trace lacks the records an analysis needs."""


# --- per-trace analytics ----------------------------------------------------

def compute_asr(results: Sequence) -> float:
    """Fraction of successful inputs. Accepts booleans or objects with ``.success``."""
    flags = [bool(getattr(r, "success", r)) for r in results]
    if not flags:
        raise ValueError("ASR of an empty batch is undefined")
    return sum(flags) / len(flags)


def count_switches(seq) -> int:
    seq = list(seq)
    return sum(1 for a, b in zip(seq, seq[1:]) if a != b)


def ctc_switch_stats(trace) -> tuple[int, bool, int]:
    """``(switch_count, switched, final_ctc)`` of the CW target class sequence."""
    ctc = getattr(trace, "ctc", trace)
    if ctc is None:
        raise UnsupportedAnalysis("CTC statistics need a classifier objective")
    seq = [int(c) for c in ctc]
    if not seq:
        raise UnsupportedAnalysis("empty CTC sequence")
    n = count_switches(seq)
    return n, n >= 1, seq[-1]


def move_distance_trace(trace) -> np.ndarray:
    pts = np.asarray(getattr(trace, "iterates", trace), dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise ValueError("move distances need at least two iterates")
    return np.linalg.norm(np.diff(pts, axis=0), axis=1)


def projection_ratios(proj_dist, move_dist) -> np.ndarray:
    """``proj / move`` per step, 0 where nothing moved."""
    proj = np.asarray(proj_dist, dtype=np.float64)
    move = np.asarray(move_dist, dtype=np.float64)
    out = np.zeros_like(proj)
    nz = move != 0.0
    out[nz] = proj[nz] / move[nz]
    return out


def projection_ratio_trace(trace) -> np.ndarray:
    proj = getattr(trace, "proj_dist", None)
    if proj is None:
        raise UnsupportedAnalysis("trace has no pre-projection records")
    return projection_ratios(proj, move_distance_trace(trace))


def asr_curve(success_steps: Sequence[int | None], length: int) -> np.ndarray:
    """ASR after each global iteration, given the first successful step of each input."""
    curve = np.zeros(length)
    for t in success_steps:
        if t is not None and t < length:
            curve[t:] += 1.0
    return curve / max(len(success_steps), 1)


def first_success_step(traces: Sequence[SearchTrace], n_iter: int) -> int | None:
    """Global step index (restarts laid end to end) where ``f_max >= 0`` first holds."""
    for r, tr in enumerate(traces):
        hit = np.nonzero(tr.f_max >= 0.0)[0]
        if hit.size:
            return r * n_iter + int(hit[0])
    return None


# --- campaigns ----------------------------------------------------------------

@dataclass
class InputResult:
    run_id: int
    label: int
    success: bool
    restarts_used: int
    best: float
    ctc_switches: int
    final_ctc: int
    diameter: float


@dataclass
class CampaignResult:
    inputs: list[InputResult]
    asr: float
    mean_ctc_switches: float
    frac_switched: float
    asr_curve: list[float] = field(default_factory=list)
    runs: list[RestartResult] = field(default_factory=list, repr=False)


def _best_trace(res: RestartResult) -> SearchTrace:
    return max(res.traces, key=lambda t: t.best)


def summarize(runs: Sequence[RestartResult], labels, diameters, n_iter: int, restarts: int) -> CampaignResult:
    records = []
    for i, (res, label, diam) in enumerate(zip(runs, labels, diameters)):
        n_sw, _, final = ctc_switch_stats(_best_trace(res))
        records.append(InputResult(i, int(label), bool(res.success), res.restarts_used,
                                   float(res.best), n_sw, final, float(diam)))
    steps = [first_success_step(r.traces, n_iter) for r in runs]
    curve = asr_curve(steps, restarts * n_iter + 1)
    return CampaignResult(
        inputs=records,
        asr=compute_asr(records),
        mean_ctc_switches=float(np.mean([r.ctc_switches for r in records])),
        frac_switched=float(np.mean([r.ctc_switches >= 1 for r in records])),
        asr_curve=[float(v) for v in curve],
        runs=list(runs),
    )


def run_campaign(config: AttackConfig, model: MlpClassifier, dataset: LabeledDataset, eps: float,
                 out_dir=None, workers: int = 1, svg: bool = False, window: int = 10) -> CampaignResult:
    """Attack every input of ``dataset``; optionally write traces.csv, summary.json and SVG charts."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")

    def one(i):
        region = FeasibleRegion(dataset.points[i], eps)
        return run_restarts(config, region, ClassifierObjective(model, dataset.labels[i])), region.diameter

    pairs = parallel_map(one, range(len(dataset)), workers)
    runs = [p[0] for p in pairs]
    diameters = [p[1] for p in pairs]
    result = summarize(runs, dataset.labels, diameters, config.n_iter, config.restarts)
    if out_dir is not None:
        write_campaign(result, config, eps, Path(out_dir), svg=svg, window=window)
    return result


# --- files ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def trace_rows(run_id: int, tr: SearchTrace):
    ratios = projection_ratios(tr.proj_dist, tr.move_dist)
    for k in range(tr.iterates.shape[0]):
        row = [run_id, tr.restart, k, tr.loss[k], tr.f_max[k], tr.eta[k], tr.beta[k],
               None if tr.ctc is None else int(tr.ctc[k]),
               None if k == 0 else tr.move_dist[k - 1],
               None if k == 0 else ratios[k - 1],
               bool(tr.halved[k])]
        yield [_fmt(v) for v in row] + [_fmt(v) for v in tr.iterates[k]]


def write_traces_csv(path: Path, runs: Sequence[RestartResult]) -> None:
    dim = runs[0].traces[0].iterates.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS + [f"x{j}" for j in range(dim)])
        for i, res in enumerate(runs):
            for tr in res.traces:
                w.writerows(trace_rows(i, tr))


def summary_dict(result: CampaignResult, config: AttackConfig, eps: float) -> dict:
    cfg = asdict(config)
    cfg["checkpoints"] = config.checkpoint_list()
    return {
        "config": cfg,
        "eps": eps,
        "n_inputs": len(result.inputs),
        "asr": result.asr,
        "mean_ctc_switches": result.mean_ctc_switches,
        "frac_switched": result.frac_switched,
        "asr_curve": result.asr_curve,
        "inputs": [asdict(r) for r in result.inputs],
    }


def write_campaign(result: CampaignResult, config: AttackConfig, eps: float, out_dir: Path,
                   svg: bool = False, window: int = 10) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        p = out_dir / "traces.csv"
        written.append(p)
        write_traces_csv(p, result.runs)
        p = out_dir / "summary.json"
        written.append(p)
        p.write_text(json.dumps(summary_dict(result, config, eps), indent=1, sort_keys=True) + "\n")
        if svg:
            p = out_dir / "asr_curve.svg"
            written.append(p)
            p.write_text(line_chart_svg({"ASR": result.asr_curve}, "global iteration", "ASR"))
            di = mean_di_curve(result.runs, window)
            if di:
                p = out_dir / "di_curve.svg"
                written.append(p)
                p.write_text(line_chart_svg({"mean DI": di[1]}, "iteration", "DI", x=di[0]))
    except Exception:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def mean_di_curve(runs: Sequence[RestartResult], window: int = 10):
    """Mean over inputs of the windowed DI of the first restart."""
    series = [di_trace(res.traces[0], window, res.traces[0].diameter) for res in runs]
    if not series or not series[0]:
        return None
    iters = [k for k, _ in series[0]]
    return iters, [float(v) for v in np.mean([[v for _, v in s] for s in series], axis=0)]


# --- reading traces back ----------------------------------------------------

@dataclass
class LoadedTrace:
    run_id: int
    restart: int
    iterates: np.ndarray
    loss: np.ndarray
    f_max: np.ndarray
    eta: np.ndarray
    ctc: np.ndarray | None
    move_dist: np.ndarray
    proj_ratio: np.ndarray
    halved: np.ndarray


def _num(s: str) -> float:
    return math.nan if s == "" else float(s)


def read_traces_csv(path) -> list[LoadedTrace]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:len(TRACE_COLUMNS)] != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header[:len(TRACE_COLUMNS)]}")
        col = {name: i for i, name in enumerate(header)}
        xcols = [i for i, name in enumerate(header) if name.startswith("x")]
        groups: dict[tuple[int, int], list[list[str]]] = {}
        for row in reader:
            groups.setdefault((int(row[col["run_id"]]), int(row[col["restart"]])), []).append(row)
    out = []
    for (run_id, restart), rows in groups.items():
        ctc_raw = [r[col["ctc"]] for r in rows]
        out.append(LoadedTrace(
            run_id=run_id, restart=restart,
            iterates=np.array([[float(r[i]) for i in xcols] for r in rows]),
            loss=np.array([_num(r[col["loss"]]) for r in rows]),
            f_max=np.array([_num(r[col["f_max"]]) for r in rows]),
            eta=np.array([_num(r[col["eta"]]) for r in rows]),
            ctc=None if any(c == "" for c in ctc_raw) else np.array([int(c) for c in ctc_raw]),
            move_dist=np.array([_num(r[col["move_dist"]]) for r in rows[1:]]),
            proj_ratio=np.array([_num(r[col["proj_ratio"]]) for r in rows[1:]]),
            halved=np.array([r[col["halved"]] == "1" for r in rows]),
        ))
    return out


def recompute_summary(traces: Sequence[LoadedTrace], n_iter: int, restarts: int) -> dict:
    """Aggregates recomputed purely from trace rows; must equal the in-memory ones."""
    by_run: dict[int, list[LoadedTrace]] = {}
    for t in traces:
        by_run.setdefault(t.run_id, []).append(t)
    successes, switches, steps, bests = [], [], [], []
    for run_id in sorted(by_run):
        ts = sorted(by_run[run_id], key=lambda t: t.restart)
        best_t = max(ts, key=lambda t: t.f_max[-1])
        bests.append(float(best_t.f_max[-1]))
        successes.append(any(t.f_max[-1] >= 0.0 for t in ts))
        switches.append(count_switches(best_t.ctc))
        steps.append(first_success_step(ts, n_iter))
    return {
        "asr": compute_asr(successes),
        "mean_ctc_switches": float(np.mean(switches)),
        "frac_switched": float(np.mean([s >= 1 for s in switches])),
        "asr_curve": [float(v) for v in asr_curve(steps, restarts * n_iter + 1)],
        "best": bests,
        "restarts_used": [len(by_run[r]) for r in sorted(by_run)],
    }


def analyze(trace_dir, report: str, window: int = 10) -> tuple[list[str], list[list]]:
    """Build a report table from a campaign directory."""
    trace_dir = Path(trace_dir)
    traces = read_traces_csv(trace_dir / "traces.csv")
    summary = json.loads((trace_dir / "summary.json").read_text())
    n_iter = summary["config"]["n_iter"]
    restarts = summary["config"]["restarts"]
    if report == "asr":
        curve = recompute_summary(traces, n_iter, restarts)["asr_curve"]
        return ["iter", "asr"], [[t, v] for t, v in enumerate(curve)]
    if report == "ctc":
        rows = []
        for t in traces:
            n, flag, final = ctc_switch_stats(t)
            rows.append([t.run_id, t.restart, n, flag, final])
        return ["run_id", "restart", "switch_count", "switched", "final_ctc"], rows
    if report == "distance":
        rows = []
        for t in traces:
            moves = move_distance_trace(t.iterates)
            for k in range(len(moves)):
                rows.append([t.run_id, t.restart, k + 1, moves[k], t.proj_ratio[k]])
        return ["run_id", "restart", "iter", "move_dist", "proj_ratio"], rows
    if report == "di":
        diam = {r["run_id"]: r["diameter"] for r in summary["inputs"]}
        rows = []
        for t in traces:
            for k, v in di_trace(t.iterates, window, diam[t.run_id]):
                rows.append([t.run_id, t.restart, k, v])
        return ["run_id", "restart", "iter", "di"], rows
    raise ValueError(f"unknown report {report!r}")


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# --- svg --------------------------------------------------------------------

def line_chart_svg(series: dict[str, Sequence[float]], xlabel: str, ylabel: str, x=None,
                   width: int = 480, height: int = 300) -> str:
    """Minimal SVG line chart; one polyline per series."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    pad = 40
    ys = [v for s in series.values() for v in s]
    n = max(len(s) for s in series.values())
    xs = list(x) if x is not None else list(range(n))
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    y0, y1 = min(ys + [0.0]), max(ys + [1.0])
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="12" y="{height / 2:.1f}" font-size="12" transform="rotate(-90 12 {height / 2:.1f})" '
        f'text-anchor="middle">{ylabel}</text>',
        f'<text x="{pad - 4}" y="{py(y0):.1f}" text-anchor="end" font-size="10">{y0:.3g}</text>',
        f'<text x="{pad - 4}" y="{py(y1):.1f}" text-anchor="end" font-size="10">{y1:.3g}</text>',
    ]
    for i, (name, vals) in enumerate(series.items()):
        pts = " ".join(f"{px(xs[j]):.2f},{py(v):.2f}" for j, v in enumerate(vals))
        color = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * i}" text-anchor="end" font-size="11" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
