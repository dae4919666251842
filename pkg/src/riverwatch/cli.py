"""Command-line interface: every pipeline stage as a scriptable subcommand.

Conventions: machine-readable results go to stdout as JSON, logs go to
stderr, output directories are staged under a temporary name and renamed into
place so a failed run leaves nothing partial behind. Exit codes: 0 success,
1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import traceback
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .forest import (
    Hyperparams,
    cross_validate,
    extract_training_set,
    load_forest,
    save_forest,
    train_forest,
)
from .indices import (
    CROSS_SENSOR_MODE,
    FEATURE_MODES,
    IndexKind,
    compute_feature_stack,
    compute_index,
)
from .monitor.api import create_app
from .monitor.service import MonitorError, MonitorService
from .pipelines import (
    WASTE_CLASSES,
    class_raster_to_scene,
    classify,
    render_classification,
    render_heatmap,
    run_blockage,
    run_hotspot,
    write_png,
)
from .morphology import Kernel
from .raster import Raster, SceneMetadata, load_scene, save_scene

log = logging.getLogger(__name__)


class CliError(Exception):
    """Invalid data or state detected by a subcommand (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this tool reserves 2 for data errors.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@contextmanager
def _staged_dir(final: Path):
    """Yield a temp dir that replaces `final` only if the body succeeds."""
    if final.exists():
        raise CliError(f"output directory {final} already exists")
    tmp = final.with_name(final.name + f".tmp-{os.getpid()}")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    try:
        yield tmp
        os.replace(tmp, final)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _emit(doc: dict) -> None:
    print(json.dumps(doc, indent=2))


def _hyperparams(args) -> Hyperparams:
    return Hyperparams(
        n_trees=args.trees,
        max_depth=args.max_depth,
        min_samples_leaf=args.min_samples_leaf,
        mtry=args.mtry,
        seed=args.seed,
    )


def _training_set(args):
    scene = load_scene(args.scene)
    labels = load_scene(args.labels)
    if labels.metadata.n_bands != 1:
        raise CliError(f"label scene must have exactly one band, found {labels.metadata.n_bands}")
    if (labels.height, labels.width) != (scene.height, scene.width):
        raise CliError("label scene dimensions do not match the input scene")
    stack = compute_feature_stack(scene, args.features)
    return extract_training_set(stack, labels.samples[0], WASTE_CLASSES)


def cmd_index(args) -> int:
    scene = load_scene(args.scene)
    kind = IndexKind(args.index)
    values, _ = compute_index(scene, kind)
    md = scene.metadata
    out_md = SceneMetadata(
        scene_id=md.scene_id,
        sensor=md.sensor,
        acquired_at=md.acquired_at,
        pixel_size_m=md.pixel_size_m,
        band_labels=(kind.value,),
        width=md.width,
        height=md.height,
        geo=md.geo,
    )
    out = Path(args.out)
    with _staged_dir(out) as tmp:
        save_scene(Raster(out_md, values.astype(np.float32)), tmp)
    _emit({"scene_id": md.scene_id, "index": kind.value, "out": str(out)})
    return 0


def cmd_train(args) -> int:
    data = _training_set(args)
    forest = train_forest(data, _hyperparams(args), threads=args.threads)
    save_forest(forest, args.out)
    _emit(
        {
            "model": str(args.out),
            "n_samples": data.n_samples,
            "n_features": data.n_features,
            "feature_names": list(data.feature_names),
            "seed": args.seed,
        }
    )
    return 0


def cmd_cv(args) -> int:
    data = _training_set(args)
    result = cross_validate(data, _hyperparams(args), k=args.k, threads=args.threads)
    _emit(
        {
            "accuracy": result.accuracy,
            "fold_accuracies": list(result.fold_accuracies),
            "confusion": result.confusion.tolist(),
            "class_names": list(data.class_names),
            "k": args.k,
            "seed": args.seed,
        }
    )
    return 0


def cmd_classify(args) -> int:
    scene = load_scene(args.scene)
    forest = load_forest(args.model)
    cr = classify(scene, forest)
    out = Path(args.out)
    with _staged_dir(out) as tmp:
        save_scene(class_raster_to_scene(cr, scene.metadata), tmp)
    _emit(
        {
            "scene_id": scene.metadata.scene_id,
            "out": str(out),
            "valid_pixels": int(np.count_nonzero(cr.valid_mask())),
        }
    )
    return 0


def _write_detection(tmp: Path, scene: Raster, cr, report) -> None:
    (tmp / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    save_scene(class_raster_to_scene(cr, scene.metadata), tmp / "classified")
    write_png(render_classification(cr), tmp / "overlay.png")
    write_png(render_heatmap(cr), tmp / "heatmap.png")


def cmd_hotspot(args) -> int:
    scene = load_scene(args.scene)
    forest = load_forest(args.model)
    cr, report = run_hotspot(scene, forest)
    with _staged_dir(Path(args.out)) as tmp:
        _write_detection(tmp, scene, cr, report)
    _emit(report.to_dict())
    return 0


def cmd_blockage(args) -> int:
    scene = load_scene(args.scene)
    forest = load_forest(args.model)
    cr, _, report = run_blockage(scene, forest, Kernel(args.kernel_size))
    with _staged_dir(Path(args.out)) as tmp:
        _write_detection(tmp, scene, cr, report)
    _emit(report.to_dict())
    return 0


def cmd_render(args) -> int:
    from .pipelines import scene_to_class_raster

    cr = scene_to_class_raster(load_scene(args.classified))
    out = Path(args.out)
    with _staged_dir(out) as tmp:
        write_png(render_classification(cr), tmp / "overlay.png")
        write_png(render_heatmap(cr), tmp / "heatmap.png")
    _emit({"out": str(out)})
    return 0


def cmd_monitor_poll(args) -> int:
    with MonitorService(args.store) as service:
        summary = service.poll_once()
        service.drain()
    _emit(summary)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    service = MonitorService(args.store)
    app = create_app(service, static_dir=args.static)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    finally:
        service.close()
    return 0


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", required=True, help="input scene directory")
    p.add_argument("--labels", required=True, help="single-band label scene (0 = unlabeled, 1..5 = class id + 1)")
    p.add_argument("--features", choices=sorted(FEATURE_MODES), default=CROSS_SENSOR_MODE,
                   help="feature stack layout (default: %(default)s)")
    p.add_argument("--trees", type=int, default=100, help="number of trees (default: %(default)s)")
    p.add_argument("--max-depth", type=int, default=None, help="depth cap (default: unbounded)")
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--mtry", type=int, default=None, help="features per split (default: floor(sqrt(F)))")
    p.add_argument("--seed", type=int, default=42, help="RNG seed (default: %(default)s)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: machine)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riverwatch", description="Waste detection and monitoring toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("index", help="compute one spectral index as a single-band scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--index", required=True, choices=[k.value for k in IndexKind])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("train", help="train a random forest from a labeled scene")
    _add_training_flags(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    _add_training_flags(p)
    p.add_argument("--k", type=int, default=5, help="fold count (default: %(default)s)")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("classify", help="classify a scene into a two-band class/confidence scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("hotspot", help="hot-spot detection: classify and measure waste extent")
    p.add_argument("--scene", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hotspot)

    p = sub.add_parser("blockage", help="river-blockage detection with morphological cleaning")
    p.add_argument("--scene", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--kernel-size", type=int, default=5, help="odd kernel size (default: %(default)s)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_blockage)

    p = sub.add_parser("render", help="render overlay and heatmap PNGs from a classified scene")
    p.add_argument("--classified", required=True, help="two-band class/confidence scene directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("monitor", help="monitoring service operations")
    msub = p.add_subparsers(dest="monitor_command", required=True, metavar="ACTION")
    mp = msub.add_parser("poll", help="ingest new scenes for every AOI once")
    mp.add_argument("--store", required=True, help="monitor store directory")
    mp.set_defaults(func=cmd_monitor_poll)

    p = sub.add_parser("serve", help="run the monitoring HTTP service")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", default=None, help="directory of built dashboard assets to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 1
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CliError, MonitorError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
