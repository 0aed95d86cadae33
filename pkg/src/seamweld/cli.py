"""Command-line interface: ``seamweld stitch | evaluate | visualize | batch``.

Exit codes: 0 success, 2 invalid input, 3 empty overlap, 4 internal failure.
"""
import argparse
import json
import logging
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .accel import max_threads
from .errors import (ConstraintConflictError, EmptyOverlapError, EmptySeamError, InvalidInputError,
                     UnanchoredCutError)
from .flow import FlowParams, flow_to_color
from .imaging import (load_aligned_pair, read_label_image, write_image, write_label_mask,
                      write_seam_visualization)
from .lpam import LpamConfig, run_lpam
from .mincut import OUTSIDE
from .quality import evaluate_seam, seam_metrics
from .seam import composite, effective_labels, estimate_seam, extract_seam_path

logger = logging.getLogger("seamweld")

EXIT_OK, EXIT_INVALID, EXIT_NO_OVERLAP, EXIT_INTERNAL = 0, 2, 3, 4
METRIC_KEYS = ("rmse", "psnr", "ssim", "zncc")
METHOD_ROWS = ("Baseline", "+LPAM")


@dataclass(frozen=True)
class RunConfig:
    window: int = 21
    k: float = 1.5
    beta: float = 8.0
    margin: int = 21
    lpam_enabled: bool = True
    flow: dict = field(default_factory=dict)

    def lpam_config(self):
        """Validated LpamConfig; bad values raise InvalidInputError."""
        try:
            return LpamConfig(window=self.window, k=self.k, beta=self.beta, margin=self.margin,
                              flow=FlowParams().with_overrides(**self.flow))
        except ValueError as exc:
            raise InvalidInputError(str(exc)) from exc


@dataclass
class PairOutcome:
    pair: object
    labels: np.ndarray  # baseline labels
    seam: object
    pre: object  # SeamMetrics of the baseline seam
    lpam: object = None  # LpamResult when enabled
    post: object = None


def run_pair(pair, config):
    """Baseline seam plus, if enabled, one LPAM pass."""
    lpam_cfg = config.lpam_config()
    labels, seam = estimate_seam(pair)
    out = PairOutcome(pair=pair, labels=labels, seam=seam, pre=seam_metrics(pair, seam, config.window))
    if config.lpam_enabled:
        out.lpam = run_lpam(pair, labels, seam, lpam_cfg)
        out.post = seam_metrics(out.lpam.pair, out.lpam.seam, config.window)
    return out


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path):
    """Deterministic JSON, written to a temp file and renamed into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    text = dumps(obj)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".json.tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_mosaic(pair, labels, path):
    rgb, _ = composite(pair, labels)  # uncovered pixels are black
    write_image(rgb, path)


def _final(outcome):
    if outcome.lpam is None:
        return outcome.pair, outcome.labels, outcome.seam
    return outcome.lpam.pair, outcome.lpam.labels, outcome.lpam.seam


def _run_config(args):
    flow = {"radius": args.flow_radius, "n_iter": args.flow_iters, "alpha": args.flow_alpha,
            "d": args.flow_d, "eta": args.flow_eta, "trunc": args.flow_trunc}
    return RunConfig(window=args.window, k=args.k, beta=args.beta, margin=args.margin,
                     lpam_enabled=not args.no_lpam, flow=flow)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_stitch(args):
    config = _run_config(args)
    config.lpam_config()  # validate before touching the inputs
    pair = load_aligned_pair(args.target, args.reference)
    out = run_pair(pair, config)
    final_pair, final_labels, final_seam = _final(out)

    write_mosaic(final_pair, final_labels, args.out)
    if args.labels:
        write_label_mask(effective_labels(final_pair, final_labels), args.labels)
    if args.realigned:
        write_image(final_pair.target, args.realigned, alpha=final_pair.target_mask)
    if args.seam_vis:
        profile = evaluate_seam(final_pair, final_seam, config.window)
        write_seam_visualization(final_pair, final_seam, profile, args.seam_vis)
    if args.metrics:
        if out.lpam is None:
            write_json(out.pre.to_dict(), args.metrics)
        else:
            write_json({"pre": out.pre.to_dict(), "post": out.post.to_dict()}, args.metrics)
    if args.report:
        report = out.lpam.report if out.lpam is not None else {"plausible": None, "lpam_enabled": False,
                                                                "components": [], "elapsed_ms": {}}
        write_json(report, args.report)
    if args.flow_dir and out.lpam is not None:
        for i, (region, flow) in enumerate(out.lpam.flows):
            write_image(flow_to_color(flow), os.path.join(args.flow_dir, f"flow_{i:03d}.png"))
            np.save(os.path.join(args.flow_dir, f"flow_{i:03d}.npy"), flow)
    return EXIT_OK


def _load_labels(path, pair):
    mask = read_label_image(path)
    if mask.shape != pair.shape:
        raise InvalidInputError(f"label mask is {mask.shape[1]}x{mask.shape[0]} but the canvas is "
                                f"{pair.shape[1]}x{pair.shape[0]}")
    return np.where(pair.overlap, mask.astype(np.int8), OUTSIDE).astype(np.int8)


def _check_window(window):
    if window < 3 or window % 2 == 0:
        raise InvalidInputError("window must be odd and >= 3")


def cmd_evaluate(args):
    _check_window(args.window)
    pair = load_aligned_pair(args.target, args.reference)
    seam = extract_seam_path(_load_labels(args.labels, pair))
    metrics = seam_metrics(pair, seam, args.window).to_dict()
    if args.out:
        write_json(metrics, args.out)
    sys.stdout.write(dumps(metrics))
    return EXIT_OK


def cmd_visualize(args):
    _check_window(args.window)
    pair = load_aligned_pair(args.target, args.reference)
    seam = extract_seam_path(_load_labels(args.labels, pair))
    profile = evaluate_seam(pair, seam, args.window)
    write_seam_visualization(pair, seam, profile, args.out, stroke=args.stroke)
    return EXIT_OK


def _safe_name(name, index):
    cleaned = re.sub(r"[^A-Za-z0-9._-]+", "_", str(name)).strip("._")
    return cleaned or f"pair_{index:03d}"


def read_manifest(path):
    try:
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise InvalidInputError("manifest must be a JSON list")
    base = os.path.dirname(os.path.abspath(path))
    seen = set()
    out = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or not {"target", "reference"} <= entry.keys():
            raise InvalidInputError(f"manifest entry {i} needs 'target' and 'reference'")
        name = _safe_name(entry.get("name", f"pair_{i:03d}"), i)
        if name in seen:
            raise InvalidInputError(f"duplicate manifest name {name!r}")
        seen.add(name)
        out.append({"name": name,
                    "target": os.path.join(base, entry["target"]),
                    "reference": os.path.join(base, entry["reference"])})
    return out


def _batch_one(entry, config, out_dir):
    pair_dir = os.path.join(out_dir, entry["name"])
    try:
        pair = load_aligned_pair(entry["target"], entry["reference"])
        out = run_pair(pair, replace(config, lpam_enabled=True))
        write_mosaic(pair, out.labels, os.path.join(pair_dir, "mosaic_baseline.png"))
        write_label_mask(effective_labels(pair, out.labels), os.path.join(pair_dir, "labels_baseline.png"))
        write_mosaic(out.lpam.pair, out.lpam.labels, os.path.join(pair_dir, "mosaic_lpam.png"))
        write_label_mask(effective_labels(out.lpam.pair, out.lpam.labels),
                         os.path.join(pair_dir, "labels_lpam.png"))
        metrics = {"baseline": out.pre.to_dict(), "lpam": out.post.to_dict()}
        write_json(metrics, os.path.join(pair_dir, "metrics.json"))
        write_json(out.lpam.report, os.path.join(pair_dir, "report.json"))
        return {"name": entry["name"], "ok": True, "metrics": metrics}
    except Exception as exc:  # one bad pair never stops the batch
        logger.warning("pair %s failed: %s", entry["name"], exc)
        return {"name": entry["name"], "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def summarize(results):
    """Dataset means in Table-1 layout: one row per method, one column per metric."""
    good = [r for r in results if r["ok"]]
    rows = []
    for method, key in zip(METHOD_ROWS, ("baseline", "lpam")):
        row = {"method": method}
        for m in METRIC_KEYS:
            row[m] = float(np.mean([r["metrics"][key][m] for r in good])) if good else None
        rows.append(row)
    return {"columns": ["method", *METRIC_KEYS], "rows": rows, "n_pairs": len(good),
            "pairs": [r["name"] for r in good],
            "failed": [{"name": r["name"], "error": r["error"]} for r in results if not r["ok"]]}


def format_table(summary):
    header = "| Method | RMSE ↓ | PSNR ↑ | SSIM ↑ | ZNCC ↓ |"
    lines = [header, "|---|---|---|---|---|"]
    for row in summary["rows"]:
        cells = ["-" if row[m] is None else f"{row[m]:.3f}" if m != "psnr" else f"{row[m]:.2f}"
                 for m in METRIC_KEYS]
        lines.append(f"| {row['method']} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_batch(args):
    config = _run_config(args)
    config.lpam_config()
    entries = read_manifest(args.manifest)
    os.makedirs(args.out_dir, exist_ok=True)
    workers = min(max_threads(), max(1, len(entries)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda e: _batch_one(e, config, args.out_dir), entries))
    summary = summarize(results)
    write_json(summary, os.path.join(args.out_dir, "summary.json"))
    with open(os.path.join(args.out_dir, "summary.md"), "w", encoding="utf-8") as fh:
        fh.write(format_table(summary))
    sys.stdout.write(format_table(summary))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_tuning(p):
    p.add_argument("--window", type=int, default=21, help="quality window side (odd)")
    p.add_argument("--k", type=float, default=1.5, help="k-rule multiplier")
    p.add_argument("--beta", type=float, default=8.0, help="sigmoid ramp rate")
    p.add_argument("--margin", type=int, default=21, help="patch margin around a component")
    g = p.add_argument_group("flow overrides")
    g.add_argument("--flow-radius", type=int)
    g.add_argument("--flow-iters", type=int)
    g.add_argument("--flow-alpha", type=float)
    g.add_argument("--flow-d", type=float)
    g.add_argument("--flow-eta", type=float)
    g.add_argument("--flow-trunc", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="seamweld", description="Seam-cutting stitcher with local patch realignment.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stitch", help="stitch an aligned RGBA pair")
    p.add_argument("--target", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", required=True, help="mosaic PNG (RGBA)")
    p.add_argument("--no-lpam", action="store_true", help="baseline seam only")
    p.add_argument("--seam-vis", help="seam quality visualization PNG")
    p.add_argument("--metrics", help="metrics JSON")
    p.add_argument("--report", help="LPAM report JSON")
    p.add_argument("--labels", help="final label mask PNG (0/255)")
    p.add_argument("--realigned", help="realigned target PNG (RGBA)")
    p.add_argument("--flow-dir", help="dump per-patch flow fields here")
    _add_tuning(p)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("evaluate", help="metrics of the seam implied by a label mask")
    p.add_argument("--target", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out")
    p.add_argument("--window", type=int, default=21)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("visualize", help="render seam quality over the averaged overlap")
    p.add_argument("--target", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=21)
    p.add_argument("--stroke", type=int, default=3)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("batch", help="baseline vs +LPAM over a manifest of pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    _add_tuning(p)
    p.set_defaults(func=cmd_batch, no_lpam=False)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="seamweld: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except EmptyOverlapError as exc:
        print(f"seamweld: error: {exc}", file=sys.stderr)
        return EXIT_NO_OVERLAP
    except EmptySeamError:
        print("seamweld: error: empty seam (label mask has no 0/1 boundary in the overlap)", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidInputError, UnanchoredCutError, ConstraintConflictError) as exc:
        print(f"seamweld: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        logger.debug("internal failure", exc_info=True)
        print(f"seamweld: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
